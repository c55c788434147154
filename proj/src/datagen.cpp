#include "dpsw/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace dpsw {

Dataset Dataset::rows(const std::vector<int>& idx) const {
  Dataset out;
  const int k = static_cast<int>(idx.size());
  out.a.resize(k);
  out.x.resize(k, d());
  out.y.resize(k);
  if (y0) out.y0 = Vector(k);
  if (y1) out.y1 = Vector(k);
  for (int r = 0; r < k; ++r) {
    out.a[r] = a[idx[r]];
    out.x.row(r) = x.row(idx[r]);
    out.y[r] = y[idx[r]];
    if (y0) (*out.y0)[r] = (*y0)[idx[r]];
    if (y1) (*out.y1)[r] = (*y1)[idx[r]];
  }
  out.blocks = blocks;
  return out;
}

namespace {

constexpr int kMaxTreatmentRedraws = 100;

double stable_sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Dataset generate(int d, int n, std::uint64_t seed, const SyntheticCoeffs* fixed) {
  if (d < 3 || d % 3 != 0)
    throw std::invalid_argument("gen_synthetic: d must be a positive multiple of 3");
  if (n < 1) throw std::invalid_argument("gen_synthetic: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const int third = d / 3;
  const int psi_dim = 2 * third;

  Dataset data;
  data.x.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) data.x(i, j) = normal(rng);

  data.a.resize(n);
  Vector c_a(psi_dim);
  int attempts = 0;
  while (true) {
    if (fixed != nullptr) {
      if (fixed->c_a.size() != psi_dim)
        throw std::invalid_argument("gen_synthetic: c_a dimension mismatch");
      c_a = fixed->c_a;
    } else {
      for (int j = 0; j < psi_dim; ++j) c_a[j] = normal(rng);
    }
    int treated = 0;
    for (int i = 0; i < n; ++i) {
      // psi = [x_gamma, x_delta]; treatment logit is c_a . (psi + 1)
      const double logit = (data.x.row(i).head(psi_dim).array() + 1.0)
                               .matrix()
                               .dot(c_a);
      data.a[i] = uniform(rng) < stable_sigmoid(logit) ? 1 : 0;
      treated += data.a[i];
    }
    if (n == 1 || (treated > 0 && treated < n)) break;
    if (fixed != nullptr || ++attempts > kMaxTreatmentRedraws)
      throw DataError("gen_synthetic: could not draw a two-group treatment vector");
    ++data.gen_retries;
  }

  Vector c_y0(psi_dim), c_y1(psi_dim);
  if (fixed != nullptr) {
    if (fixed->c_y0.size() != psi_dim || fixed->c_y1.size() != psi_dim)
      throw std::invalid_argument("gen_synthetic: c_y dimension mismatch");
    c_y0 = fixed->c_y0;
    c_y1 = fixed->c_y1;
  } else {
    for (int j = 0; j < psi_dim; ++j) c_y0[j] = normal(rng);
    for (int j = 0; j < psi_dim; ++j) c_y1[j] = normal(rng);
  }

  data.y0 = Vector(n);
  data.y1 = Vector(n);
  data.y.resize(n);
  const double scale = 3.0 / (2.0 * d);
  for (int i = 0; i < n; ++i) {
    // phi = [x_delta, x_upsilon]
    const auto phi = data.x.row(i).segment(third, psi_dim);
    (*data.y0)[i] = scale * phi.dot(c_y0) + normal(rng);
    (*data.y1)[i] = scale * (phi.array().square().matrix()).dot(c_y1) + normal(rng);
    data.y[i] = data.a[i] == 1 ? (*data.y1)[i] : (*data.y0)[i];
  }
  data.blocks = FeatureBlocks{third, 2 * third};
  return data;
}

}  // namespace

Dataset gen_synthetic(int d, int n, std::uint64_t seed) {
  return generate(d, n, seed, nullptr);
}

Dataset gen_synthetic_with_coeffs(int d, int n, std::uint64_t seed,
                                  const SyntheticCoeffs& coeffs) {
  return generate(d, n, seed, &coeffs);
}

std::array<Dataset, 3> split(const Dataset& data, const std::array<double, 3>& ratios,
                             std::uint64_t seed) {
  double total = 0;
  for (double r : ratios) {
    if (!(r > 0)) throw std::invalid_argument("split: ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must sum to 1");

  const int n = data.n();
  // Largest-remainder apportionment; ties go to the earlier part.
  std::array<int, 3> sizes;
  std::array<double, 3> frac;
  int assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = ratios[k] * n;
    sizes[k] = static_cast<int>(std::floor(exact));
    frac[k] = exact - sizes[k];
    assigned += sizes[k];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int p, int q) { return frac[p] > frac[q]; });
  for (int r = 0; r < n - assigned; ++r) ++sizes[order[r]];
  for (int k = 0; k < 3; ++k)
    if (sizes[k] == 0)
      throw std::invalid_argument("split: a split of size 0 (n too small)");

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  std::array<Dataset, 3> out;
  int offset = 0;
  for (int k = 0; k < 3; ++k) {
    out[k] = data.rows(
        std::vector<int>(idx.begin() + offset, idx.begin() + offset + sizes[k]));
    offset += sizes[k];
  }
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_cell(const std::string& cell, int row, const std::string& col) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0' || !std::isfinite(v))
    throw DataError("load_csv: non-numeric cell at row " + std::to_string(row) +
                    ", column " + col);
  return v;
}

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: empty file " + path);

  const auto header = split_line(line);
  int col_a = -1, col_y = -1, col_y0 = -1, col_y1 = -1;
  std::vector<int> col_x;  // col_x[j] = column of x<j+1>
  col_x.assign(header.size(), -1);
  int d = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name == "a") col_a = static_cast<int>(c);
    else if (name == "y") col_y = static_cast<int>(c);
    else if (name == "y0") col_y0 = static_cast<int>(c);
    else if (name == "y1") col_y1 = static_cast<int>(c);
    else if (name.size() > 1 && name[0] == 'x') {
      char* end = nullptr;
      const long j = std::strtol(name.c_str() + 1, &end, 10);
      if (*end != '\0' || j < 1 || j > static_cast<long>(header.size()))
        throw DataError("load_csv: unexpected column " + name);
      col_x[j - 1] = static_cast<int>(c);
      d = std::max(d, static_cast<int>(j));
    } else {
      throw DataError("load_csv: unexpected column " + name);
    }
  }
  if (col_a < 0) throw DataError("load_csv: missing column a");
  if (col_y < 0) throw DataError("load_csv: missing column y");
  if (d == 0) throw DataError("load_csv: missing feature columns x1..xd");
  for (int j = 0; j < d; ++j)
    if (col_x[j] < 0)
      throw DataError("load_csv: missing column x" + std::to_string(j + 1));
  if ((col_y0 >= 0) != (col_y1 >= 0))
    throw DataError("load_csv: y0 and y1 must both be present or both absent");
  const bool has_po = col_y0 >= 0;

  std::vector<IntVector::Scalar> a;
  std::vector<double> y, y0, y1, xraw;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw DataError("load_csv: wrong field count at row " + std::to_string(row));
    const double av = parse_cell(cells[col_a], row, "a");
    if (av != 0.0 && av != 1.0)
      throw DataError("load_csv: a must be 0 or 1 at row " + std::to_string(row));
    a.push_back(static_cast<int>(av));
    y.push_back(parse_cell(cells[col_y], row, "y"));
    if (has_po) {
      y0.push_back(parse_cell(cells[col_y0], row, "y0"));
      y1.push_back(parse_cell(cells[col_y1], row, "y1"));
      const double expect = a.back() == 1 ? y1.back() : y0.back();
      if (std::abs(y.back() - expect) > 1e-9 * std::max(1.0, std::abs(expect)))
        throw DataError("load_csv: y inconsistent with potential outcomes at row " +
                        std::to_string(row));
    }
    for (int j = 0; j < d; ++j)
      xraw.push_back(parse_cell(cells[col_x[j]], row, "x" + std::to_string(j + 1)));
  }
  if (row == 0) throw DataError("load_csv: no data rows in " + path);

  Dataset data;
  const int n = row;
  data.a.resize(n);
  data.y.resize(n);
  data.x.resize(n, d);
  if (has_po) {
    data.y0 = Vector(n);
    data.y1 = Vector(n);
  }
  for (int i = 0; i < n; ++i) {
    data.a[i] = a[i];
    data.y[i] = y[i];
    if (has_po) {
      (*data.y0)[i] = y0[i];
      (*data.y1)[i] = y1[i];
    }
    for (int j = 0; j < d; ++j) data.x(i, j) = xraw[static_cast<std::size_t>(i) * d + j];
  }
  return data;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_csv: cannot open " + path);
  const bool has_po = data.y0 && data.y1;
  std::string buf = "a,y";
  if (has_po) buf += ",y0,y1";
  for (int j = 1; j <= data.d(); ++j) buf += ",x" + std::to_string(j);
  buf += "\n";
  for (int i = 0; i < data.n(); ++i) {
    buf += std::to_string(data.a[i]);
    buf += ',';
    append_number(buf, data.y[i]);
    if (has_po) {
      buf += ',';
      append_number(buf, (*data.y0)[i]);
      buf += ',';
      append_number(buf, (*data.y1)[i]);
    }
    for (int j = 0; j < data.d(); ++j) {
      buf += ',';
      append_number(buf, data.x(i, j));
    }
    buf += "\n";
    if (buf.size() > (1u << 20)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
  if (!out) throw DataError("save_csv: write failed for " + path);
}

}  // namespace dpsw
