#include "dpsw/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "dpsw/smoothing_graph.hpp"

namespace dpsw {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::dpsw: return "dpsw";
    case Mode::dpsw_norm: return "dpsw_norm";
    case Mode::drcfr_raw: return "drcfr_raw";
    case Mode::drcfr_norm: return "drcfr_norm";
    case Mode::drcfr_trunc: return "drcfr_trunc";
    case Mode::drcfr_ignore: return "drcfr_ignore";
    case Mode::psw_separate: return "psw_separate";
    case Mode::single_encoder: return "single_encoder";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& s) {
  for (Mode m : all_modes())
    if (to_string(m) == s) return m;
  throw ConfigError("unknown mode: " + s);
}

const std::vector<Mode>& all_modes() {
  static const std::vector<Mode> modes = {
      Mode::dpsw,         Mode::dpsw_norm,   Mode::drcfr_raw,
      Mode::drcfr_norm,   Mode::drcfr_trunc, Mode::drcfr_ignore,
      Mode::psw_separate, Mode::single_encoder};
  return modes;
}

namespace {

bool has_propensity_phase(Mode m) {
  return m != Mode::single_encoder && m != Mode::psw_separate;
}

bool uses_mmd(Mode m) { return m != Mode::single_encoder; }

WeightScheme scheme_for_mode(Mode m) {
  switch (m) {
    case Mode::dpsw: return WeightScheme::pareto_diff;
    case Mode::dpsw_norm: return WeightScheme::pareto_diff_normalized;
    case Mode::drcfr_raw: return WeightScheme::raw;
    case Mode::drcfr_norm: return WeightScheme::normalized;
    case Mode::drcfr_trunc: return WeightScheme::truncated;
    case Mode::drcfr_ignore: return WeightScheme::ignore;
    case Mode::psw_separate: return WeightScheme::pareto_hard;
    case Mode::single_encoder: return WeightScheme::raw;
  }
  return WeightScheme::raw;
}

bool weights_differentiable(const DPSWModel& model) {
  if (model.mode == Mode::single_encoder || model.mode == Mode::psw_separate)
    return false;
  if (model.hp.weight_grad == 0) return false;
  if (model.hp.weight_grad == 1) return true;
  return model.mode == Mode::dpsw || model.mode == Mode::dpsw_norm;
}

Matrix column(const Vector& v) {
  Matrix out(v.size(), 1);
  out.col(0) = v;
  return out;
}

Matrix treat_mask(const IntVector& a) {
  Matrix out(a.size(), 1);
  for (int i = 0; i < a.size(); ++i) out(i, 0) = a[i] == 1 ? 1.0 : 0.0;
  return out;
}

void group_indices(const IntVector& a, std::vector<int>& idx0, std::vector<int>& idx1) {
  idx0.clear();
  idx1.clear();
  for (int i = 0; i < a.size(); ++i) (a[i] == 1 ? idx1 : idx0).push_back(i);
}

std::vector<std::pair<std::string, const MLP*>> outcome_components(const DPSWModel& m) {
  switch (m.mode) {
    case Mode::single_encoder:
      return {{"shared", &m.shared}, {"h0", &m.h0}, {"h1", &m.h1}};
    case Mode::psw_separate:
      return {{"delta", &m.delta}, {"upsilon", &m.upsilon}, {"h0", &m.h0}, {"h1", &m.h1}};
    default:
      return {{"gamma", &m.gamma}, {"delta", &m.delta}, {"upsilon", &m.upsilon},
              {"h0", &m.h0},       {"h1", &m.h1}};
  }
}

std::map<std::string, Matrix*> param_map(
    const std::vector<std::pair<std::string, MLP*>>& comps) {
  std::map<std::string, Matrix*> out;
  for (const auto& [prefix, mlp] : comps) {
    for (std::size_t l = 0; l < mlp->layers.size(); ++l) {
      out[prefix + ".W" + std::to_string(l + 1)] = &mlp->layers[l].W;
      out[prefix + ".b" + std::to_string(l + 1)] = &mlp->layers[l].b;
    }
  }
  return out;
}

double omega_value(const std::vector<std::pair<std::string, const MLP*>>& comps) {
  double total = 0.0;
  for (const auto& [prefix, mlp] : comps)
    for (const auto& layer : mlp->layers) total += layer.W.array().square().sum();
  return total;
}

// lambda_minus_pi * sum of squared weight-matrix entries over the phase-B
// components, built from the param nodes already registered on the graph.
ad::Var omega_node(ad::Graph& g, const DPSWModel& model) {
  ad::Var total;
  bool first = true;
  for (const auto& [prefix, mlp] : outcome_components(model)) {
    for (std::size_t l = 0; l < mlp->layers.size(); ++l) {
      const ad::Var wv = g.param_var(prefix + ".W" + std::to_string(l + 1));
      const ad::Var s = ad::sum(g, ad::square(g, wv));
      total = first ? s : ad::add(g, total, s);
      first = false;
    }
  }
  return ad::cmul(g, total, model.hp.lambda_minus_pi);
}

Matrix pi_input(const DPSWModel& model, const Matrix& x) {
  if (model.mode == Mode::single_encoder)
    throw std::logic_error("single_encoder has no propensity model");
  if (model.mode == Mode::psw_separate) return x;
  const Matrix g = mlp_forward(model.gamma, x);
  const Matrix d = mlp_forward(model.delta, x);
  Matrix out(x.rows(), g.cols() + d.cols());
  out << g, d;
  return out;
}

Matrix head_input(const DPSWModel& model, const Matrix& x) {
  if (model.mode == Mode::single_encoder) return mlp_forward(model.shared, x);
  const Matrix d = mlp_forward(model.delta, x);
  const Matrix u = mlp_forward(model.upsilon, x);
  Matrix out(x.rows(), d.cols() + u.cols());
  out << d, u;
  return out;
}

double resolve_bandwidth(const DPSWModel& model, const Matrix& ups) {
  if (model.mmd_bandwidth > 0) return model.mmd_bandwidth;
  const double med = median_pairwise_distance(ups);
  return med > 1e-12 ? med : 1.0;
}

int count_clamp_hits(const Matrix& p, double clamp_eps) {
  int hits = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) <= clamp_eps || p(i) >= 1.0 - clamp_eps) ++hits;
  return hits;
}

std::string weight_dump(const Vector& w, int limit = 10) {
  std::ostringstream os;
  os << "[";
  const int k = std::min<int>(limit, static_cast<int>(w.size()));
  for (int i = 0; i < k; ++i) os << (i ? ", " : "") << w[i];
  if (w.size() > k) os << ", ...";
  os << "]";
  return os.str();
}

}  // namespace

std::vector<std::pair<std::string, const MLP*>> model_components(const DPSWModel& m) {
  switch (m.mode) {
    case Mode::single_encoder:
      return {{"shared", &m.shared}, {"h0", &m.h0}, {"h1", &m.h1}};
    case Mode::psw_separate:
      return {{"pi", &m.pi_head}, {"delta", &m.delta}, {"upsilon", &m.upsilon},
              {"h0", &m.h0},      {"h1", &m.h1}};
    default:
      return {{"gamma", &m.gamma}, {"delta", &m.delta}, {"upsilon", &m.upsilon},
              {"pi", &m.pi_head},  {"h0", &m.h0},       {"h1", &m.h1}};
  }
}

std::vector<std::pair<std::string, MLP*>> model_components(DPSWModel& m) {
  std::vector<std::pair<std::string, MLP*>> out;
  for (const auto& [name, mlp] : model_components(static_cast<const DPSWModel&>(m)))
    out.emplace_back(name, const_cast<MLP*>(mlp));
  return out;
}

Vector propensity(const DPSWModel& model, const Matrix& x) {
  const Matrix in = pi_input(model, x);
  const Matrix p = mlp_forward(model.pi_head, in);
  const double lo = model.hp.pi_clamp;
  return p.col(0).cwiseMax(lo).cwiseMin(1.0 - lo);
}

Vector predict_cate(const DPSWModel& model, const Matrix& x) {
  if (x.cols() != model.d)
    throw std::invalid_argument("predict_cate: feature dim mismatch");
  const Matrix h = head_input(model, x);
  return (mlp_forward(model.h1, h) - mlp_forward(model.h0, h)).col(0);
}

Vector predict_factual(const DPSWModel& model, const Matrix& x, const IntVector& a) {
  if (x.cols() != model.d)
    throw std::invalid_argument("predict_factual: feature dim mismatch");
  if (a.size() != x.rows())
    throw std::invalid_argument("predict_factual: treatment length mismatch");
  const Matrix h = head_input(model, x);
  const Vector y0 = mlp_forward(model.h0, h).col(0);
  const Vector y1 = mlp_forward(model.h1, h).col(0);
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = a[i] == 1 ? y1[i] : y0[i];
  return out;
}

double propensity_loss(const DPSWModel& model, const Dataset& batch) {
  if (batch.n() < 1) throw std::invalid_argument("propensity_loss: empty batch");
  const Vector p = propensity(model, batch.x);
  double acc = 0.0;
  for (int i = 0; i < batch.n(); ++i)
    acc -= batch.a[i] == 1 ? std::log(p[i]) : std::log(1.0 - p[i]);
  double omega = 0.0;
  for (const auto& layer : model.pi_head.layers) omega += layer.W.array().square().sum();
  return acc / batch.n() + model.hp.lambda_pi * omega;
}

WeightVector scheme_weights(const DPSWModel& model, const Dataset& data) {
  const int n = data.n();
  if (model.mode == Mode::single_encoder) {
    WeightVector w;
    w.values = Vector::Ones(n);
    return w;
  }
  const Vector p = propensity(model, data.x);
  Vector pi_a(n);
  for (int i = 0; i < n; ++i) pi_a[i] = data.a[i] == 1 ? p[i] : 1.0 - p[i];
  const WeightVector raw = ipw_weights(pi_a, data.a, model.p_treated);
  SchemeConfig cfg;
  cfg.epsilon = model.hp.epsilon;
  cfg.kappa = model.hp.kappa;
  cfg.p_treated = model.p_treated;
  cfg.propensity = p;
  return apply_scheme(raw, data.a, scheme_for_mode(model.mode), cfg);
}

double outcome_loss(const DPSWModel& model, const Dataset& batch,
                    const WeightVector& weights) {
  const int n = batch.n();
  if (n < 1) throw std::invalid_argument("outcome_loss: empty batch");
  if (weights.n() != n)
    throw std::invalid_argument("outcome_loss: weight length mismatch");

  const Matrix h = head_input(model, batch.x);
  const Vector y0 = mlp_forward(model.h0, h).col(0);
  const Vector y1 = mlp_forward(model.h1, h).col(0);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = batch.y[i] - (batch.a[i] == 1 ? y1[i] : y0[i]);
    acc += weights.values[i] * e * e;
  }
  double loss = acc / n;

  if (uses_mmd(model.mode) && model.hp.lambda_upsilon > 0) {
    std::vector<int> idx0, idx1;
    group_indices(batch.a, idx0, idx1);
    if (!idx0.empty() && !idx1.empty()) {
      const Matrix ups = mlp_forward(model.upsilon, batch.x);
      Matrix u0(static_cast<Eigen::Index>(idx0.size()), ups.cols());
      Matrix u1(static_cast<Eigen::Index>(idx1.size()), ups.cols());
      for (std::size_t k = 0; k < idx0.size(); ++k) u0.row(k) = ups.row(idx0[k]);
      for (std::size_t k = 0; k < idx1.size(); ++k) u1.row(k) = ups.row(idx1[k]);
      loss += model.hp.lambda_upsilon * mmd_rbf(u0, u1, resolve_bandwidth(model, ups));
    }
  }
  return loss + model.hp.lambda_minus_pi * omega_value(outcome_components(model));
}

OutcomeEval outcome_gradient(const DPSWModel& model, const Dataset& batch,
                             const Vector* fixed_weights) {
  const int n = batch.n();
  if (n < 1) throw std::invalid_argument("outcome_gradient: empty batch");
  OutcomeEval ev;
  ad::Graph g;
  const ad::Var x = g.constant(batch.x);
  const Matrix mask1 = treat_mask(batch.a);
  const ad::Var m1 = g.constant(mask1);
  const ad::Var m0 = g.constant(Matrix::Ones(n, 1) - mask1);
  const ad::Var y = g.constant(column(batch.y));

  ad::Var head_in, ups, w;
  bool have_ups = false;
  if (model.mode == Mode::single_encoder) {
    head_in = mlp_forward(g, model.shared, x, "shared");
    w = g.constant(Matrix::Ones(n, 1));
  } else {
    const ad::Var d = mlp_forward(g, model.delta, x, "delta");
    ups = mlp_forward(g, model.upsilon, x, "upsilon");
    have_ups = true;
    head_in = ad::concat_cols(g, d, ups);

    if (fixed_weights != nullptr) {
      if (fixed_weights->size() != n)
        throw std::invalid_argument("outcome_gradient: fixed weight length mismatch");
      // gamma stays in the objective's complexity term even when the weight
      // path is bypassed
      if (model.mode != Mode::psw_separate) mlp_forward(g, model.gamma, x, "gamma");
      w = g.constant(column(*fixed_weights));
    } else {
      const ad::Var gamma_rep = mlp_forward(g, model.gamma, x, "gamma");
      // Frozen propensity head over live representations: the head matrices
      // enter as constants so gradients reach gamma/delta only through its
      // inputs (and, from there, the weights).
      const ad::Var pi_in = ad::concat_cols(g, gamma_rep, d);
      const ad::Var p_raw = mlp_forward(g, model.pi_head, pi_in, "");
      ev.clamp_hits = count_clamp_hits(g.value(p_raw), model.hp.pi_clamp);
      const ad::Var p = ad::clamp(g, p_raw, model.hp.pi_clamp, 1.0 - model.hp.pi_clamp);
      const ad::Var w_raw = build_ipw_weights(g, p, batch.a, model.p_treated);
      switch (scheme_for_mode(model.mode)) {
        case WeightScheme::raw:
          w = w_raw;
          break;
        case WeightScheme::normalized:
          w = build_group_normalize(g, w_raw, batch.a);
          break;
        case WeightScheme::truncated: {
          const auto [lo1, hi1] = crump_thresholds(1, model.p_treated);
          const auto [lo0, hi0] = crump_thresholds(0, model.p_treated);
          w = ad::add(g, ad::mul(g, m1, ad::clamp(g, w_raw, lo1, hi1)),
                      ad::mul(g, m0, ad::clamp(g, w_raw, lo0, hi0)));
          break;
        }
        case WeightScheme::ignore: {
          Matrix mask(n, 1);
          for (int i = 0; i < n; ++i) {
            const double pv = g.value(p)(i, 0);
            mask(i, 0) =
                (pv >= kIgnorePropensityLow && pv <= kIgnorePropensityHigh) ? 1.0 : 0.0;
          }
          w = g.constant(mask);
          break;
        }
        case WeightScheme::pareto_diff:
        case WeightScheme::pareto_diff_normalized: {
          auto smooth = build_pareto_diff(g, w_raw, model.hp.epsilon, model.hp.kappa);
          ev.weight_diag = smooth.diagnostics;
          w = smooth.weights;
          if (scheme_for_mode(model.mode) == WeightScheme::pareto_diff_normalized)
            w = build_group_normalize(g, w, batch.a);
          break;
        }
        case WeightScheme::pareto_hard:
          throw std::logic_error("outcome_gradient: hard smoothing runs outside the graph");
      }
      if (!weights_differentiable(model)) w = g.constant(g.value(w));
    }
  }
  ev.weights = g.value(w).col(0);

  const ad::Var y0 = mlp_forward(g, model.h0, head_in, "h0");
  const ad::Var y1 = mlp_forward(g, model.h1, head_in, "h1");
  const ad::Var pred = ad::add(g, ad::mul(g, m1, y1), ad::mul(g, m0, y0));
  ad::Var loss = ad::mean(g, ad::mul(g, w, ad::square(g, ad::sub(g, pred, y))));

  if (uses_mmd(model.mode) && model.hp.lambda_upsilon > 0 && have_ups) {
    std::vector<int> idx0, idx1;
    group_indices(batch.a, idx0, idx1);
    if (!idx0.empty() && !idx1.empty()) {
      const double bw = resolve_bandwidth(model, g.value(ups));
      const ad::Var mmd = ad::mmd_rbf(g, ad::gather_rows(g, ups, idx0),
                                      ad::gather_rows(g, ups, idx1), bw);
      loss = ad::add(g, loss, ad::cmul(g, mmd, model.hp.lambda_upsilon));
    } else {
      ev.mmd_skipped = true;
    }
  }
  loss = ad::add(g, loss, omega_node(g, model));
  ev.tape = g.backward(loss);
  return ev;
}

std::map<std::string, Matrix*> parameter_map(DPSWModel& m) {
  return param_map(model_components(m));
}

PropensityEval propensity_gradient(const DPSWModel& model, const Dataset& batch) {
  PropensityEval ev;
  ad::Graph g;
  const ad::Var in = g.constant(pi_input(model, batch.x));
  const ad::Var p_raw = mlp_forward(g, model.pi_head, in, "pi");
  ev.clamp_hits = count_clamp_hits(g.value(p_raw), model.hp.pi_clamp);
  const ad::Var p = ad::clamp(g, p_raw, model.hp.pi_clamp, 1.0 - model.hp.pi_clamp);
  const Matrix mask1 = treat_mask(batch.a);
  const ad::Var m1 = g.constant(mask1);
  const ad::Var m0 = g.constant(Matrix::Ones(batch.n(), 1) - mask1);
  const ad::Var ll =
      ad::add(g, ad::mul(g, m1, ad::log_(g, p)),
              ad::mul(g, m0, ad::log_(g, ad::cadd(g, ad::cmul(g, p, -1.0), 1.0))));
  ad::Var loss = ad::cmul(g, ad::mean(g, ll), -1.0);

  ad::Var omega;
  bool first = true;
  for (std::size_t l = 0; l < model.pi_head.layers.size(); ++l) {
    const ad::Var wv = g.param_var("pi.W" + std::to_string(l + 1));
    const ad::Var s = ad::sum(g, ad::square(g, wv));
    omega = first ? s : ad::add(g, omega, s);
    first = false;
  }
  loss = ad::add(g, loss, ad::cmul(g, omega, model.hp.lambda_pi));
  ev.tape = g.backward(loss);
  return ev;
}

namespace {

std::vector<std::vector<int>> make_batches(int n, int batch_size, std::mt19937_64& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < n; start += batch_size) {
    const int len = std::min(batch_size, n - start);
    if (len < 3) break;  // tail_size needs at least 3 rows
    out.emplace_back(idx.begin() + start, idx.begin() + start + len);
  }
  return out;
}

void check_finite(double loss, int round, int batch_idx, const Vector& weights) {
  if (std::isfinite(loss)) return;
  throw NumericError("training aborted: non-finite loss at round " +
                     std::to_string(round) + ", batch " + std::to_string(batch_idx) +
                     "; batch weights " + weight_dump(weights));
}

void init_model(DPSWModel& model, std::mt19937_64& rng) {
  const int d = model.d;
  const int rep = model.rep_dim;
  const int hidden = model.hidden_dim;
  const std::vector<Activation> enc{Activation::elu, Activation::elu, Activation::elu};
  const std::vector<Activation> pi{Activation::elu, Activation::elu, Activation::sigmoid};
  const std::vector<Activation> head{Activation::elu, Activation::elu,
                                     Activation::identity};
  if (model.mode == Mode::single_encoder) {
    model.shared = make_mlp({d, hidden, hidden, 2 * rep}, enc, rng);
  } else {
    if (model.mode != Mode::psw_separate)
      model.gamma = make_mlp({d, hidden, hidden, rep}, enc, rng);
    model.delta = make_mlp({d, hidden, hidden, rep}, enc, rng);
    model.upsilon = make_mlp({d, hidden, hidden, rep}, enc, rng);
  }
  if (model.mode == Mode::psw_separate)
    model.pi_head = make_mlp({d, hidden, hidden, 1}, pi, rng);
  else if (model.mode != Mode::single_encoder)
    model.pi_head = make_mlp({2 * rep, hidden, hidden, 1}, pi, rng);
  model.h0 = make_mlp({2 * rep, hidden, hidden, 1}, head, rng);
  model.h1 = make_mlp({2 * rep, hidden, hidden, 1}, head, rng);
}

// psw_separate: fit the propensity head on raw features up front, minimizing
// the same cross entropy, with best-validation early stopping.
void pretrain_propensity(DPSWModel& model, const Dataset& train_split,
                         const Dataset& val_split, std::mt19937_64& rng) {
  AdamState opt;
  const AdamConfig cfg{model.hp.lr_pi, 0.9, 0.999, 1e-8};
  std::vector<std::pair<std::string, MLP*>> pi_comp{{"pi", &model.pi_head}};
  auto params = param_map(pi_comp);
  MLP best = model.pi_head;
  double best_val = std::numeric_limits<double>::infinity();
  int bad = 0;
  for (int epoch = 1; epoch <= model.hp.pretrain_epochs; ++epoch) {
    for (const auto& rows : make_batches(train_split.n(), model.hp.batch_size, rng)) {
      const Dataset batch = train_split.rows(rows);
      auto ev = propensity_gradient(model, batch);
      check_finite(ev.tape.loss, 0, -1, Vector());
      adam_step(params, ev.tape.grads, opt, cfg);
    }
    const double val = propensity_loss(model, val_split);
    if (val < best_val) {
      best_val = val;
      best = model.pi_head;
      bad = 0;
    } else if (++bad >= model.hp.patience) {
      break;
    }
  }
  model.pi_head = best;
}

Vector hard_smoothed_weights(const DPSWModel& model, const Dataset& data,
                             int* degenerate) {
  const Vector p = propensity(model, data.x);
  Vector pi_a(data.n());
  for (int i = 0; i < data.n(); ++i) pi_a[i] = data.a[i] == 1 ? p[i] : 1.0 - p[i];
  const WeightVector smoothed =
      pareto_smooth_hard(ipw_weights(pi_a, data.a, model.p_treated));
  if (degenerate && smoothed.diagnostics && smoothed.diagnostics->degenerate_fallback)
    ++(*degenerate);
  return smoothed.values;
}

}  // namespace

TrainResult train(const Dataset& train_split, const Dataset& val_split,
                  const Hyperparams& hp, Mode mode) {
  if (train_split.n() < 3) throw std::invalid_argument("train: training split too small");
  if (val_split.n() < 1) throw std::invalid_argument("train: empty validation split");
  if (train_split.d() < 1) throw std::invalid_argument("train: need d >= 1");
  if (hp.batch_size < 3) throw ConfigError("train: batch_size must be >= 3");
  if (hp.max_outer < 1 || hp.patience < 1)
    throw ConfigError("train: max_outer and patience must be >= 1");
  if (!(hp.epsilon > 0) || !(hp.kappa > 0))
    throw ConfigError("train: epsilon and kappa must be > 0");
  if (!(hp.lr_pi > 0) || !(hp.lr_other > 0))
    throw ConfigError("train: learning rates must be > 0");
  if (hp.lambda_pi < 0 || hp.lambda_upsilon < 0 || hp.lambda_minus_pi < 0)
    throw ConfigError("train: regularization strengths must be >= 0");

  DPSWModel model;
  model.mode = mode;
  model.hp = hp;
  model.d = train_split.d();
  model.rep_dim = hp.rep_dim > 0 ? hp.rep_dim : std::max(1, model.d / 3);
  model.hidden_dim = hp.hidden_dim > 0 ? hp.hidden_dim : model.rep_dim;

  std::mt19937_64 rng(hp.seed);
  init_model(model, rng);

  const double treated_mean =
      treat_mask(train_split.a).mean();
  if (!(treated_mean > 0 && treated_mean < 1))
    throw DataError("train: training split has a single treatment group");
  model.p_treated = treated_mean;

  TrainLog log;
  Vector fixed_train_weights;
  if (mode == Mode::psw_separate) {
    pretrain_propensity(model, train_split, val_split, rng);
    int degenerate = 0;
    fixed_train_weights = hard_smoothed_weights(model, train_split, &degenerate);
    if (degenerate > 0)
      log_info("psw_separate: degenerate tail fit on the training split; raw weights kept");
  }

  AdamState opt_pi, opt_other;
  const AdamConfig cfg_pi{hp.lr_pi, 0.9, 0.999, 1e-8};
  const AdamConfig cfg_other{hp.lr_other, 0.9, 0.999, 1e-8};
  auto comps = model_components(model);
  std::vector<std::pair<std::string, MLP*>> pi_comps, other_comps;
  for (auto& [name, mlp] : comps) {
    if (name == "pi") pi_comps.emplace_back(name, mlp);
    else other_comps.emplace_back(name, mlp);
  }
  auto pi_params = param_map(pi_comps);
  auto other_params = param_map(other_comps);

  DPSWModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int best_round = 0;
  int bad_rounds = 0;

  for (int round = 1; round <= hp.max_outer; ++round) {
    RoundRecord rec;
    rec.round = round;
    rec.prop_loss = std::numeric_limits<double>::quiet_NaN();

    if (has_propensity_phase(mode)) {
      double acc = 0.0;
      int nb = 0;
      const int epochs = (round == 1) ? std::max(1, hp.pi_warmup_epochs) : 1;
      for (int e = 0; e < epochs; ++e) {
        for (const auto& rows : make_batches(train_split.n(), hp.batch_size, rng)) {
          const Dataset batch = train_split.rows(rows);
          auto ev = propensity_gradient(model, batch);
          check_finite(ev.tape.loss, round, nb, Vector());
          adam_step(pi_params, ev.tape.grads, opt_pi, cfg_pi);
          acc += ev.tape.loss;
          rec.clamp_hits += ev.clamp_hits;
          ++nb;
        }
      }
      if (nb > 0) rec.prop_loss = acc / nb;
    }

    double acc = 0.0;
    int nb = 0;
    for (const auto& rows : make_batches(train_split.n(), hp.batch_size, rng)) {
      const Dataset batch = train_split.rows(rows);
      if (uses_mmd(mode) && model.mmd_bandwidth == 0.0) {
        const double med = median_pairwise_distance(mlp_forward(model.upsilon, batch.x));
        model.mmd_bandwidth = med > 1e-12 ? med : 1.0;
      }
      Vector fixed;
      const Vector* fixed_ptr = nullptr;
      if (mode == Mode::psw_separate) {
        fixed.resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k)
          fixed[static_cast<Eigen::Index>(k)] = fixed_train_weights[rows[k]];
        fixed_ptr = &fixed;
      }
      auto ev = outcome_gradient(model, batch, fixed_ptr);
      check_finite(ev.tape.loss, round, nb, ev.weights);
      adam_step(other_params, ev.tape.grads, opt_other, cfg_other);
      acc += ev.tape.loss;
      ++nb;
      if (ev.weight_diag.degenerate_fallback) ++rec.degenerate_fallbacks;
      if (ev.weight_diag.gpd) {
        rec.xi_mean += ev.weight_diag.gpd->xi;
        ++rec.xi_count;
        if (!ev.weight_diag.gpd->reliable) ++rec.xi_unreliable;
      }
      if (ev.mmd_skipped) ++rec.mmd_skipped;
      rec.clamp_hits += ev.clamp_hits;
    }
    if (nb == 0) throw ConfigError("train: batch_size leaves no usable minibatch");
    rec.outcome_loss = acc / nb;
    if (rec.xi_count > 0) rec.xi_mean /= rec.xi_count;

    // Snapshot selection compares the validation objective across rounds.
    // The raw-weight objective is neither scale-comparable while the
    // propensity head is moving nor tail-stable, so the validation risk
    // estimate is stabilized the same way for every weighted scheme:
    // hard-smoothed tail, then per-group self-normalization.
    WeightVector val_w = scheme_weights(model, val_split);
    if (val_w.scheme == WeightScheme::raw || val_w.scheme == WeightScheme::truncated)
      val_w = pareto_smooth_hard(val_w);
    if (val_w.scheme != WeightScheme::ignore)
      val_w = self_normalize(val_w, val_split.a);
    rec.val_objective = outcome_loss(model, val_split, val_w);
    check_finite(rec.val_objective, round, -1, Vector());
    log.rounds.push_back(rec);

    if (rec.val_objective < best_val) {
      best_val = rec.val_objective;
      best = model;
      best_round = round;
      bad_rounds = 0;
    } else if (++bad_rounds >= hp.patience) {
      break;
    }
  }

  log.best_round = best_round;
  log.best_val = best_val;
  best.hp = hp;
  return TrainResult{std::move(best), std::move(log)};
}

}  // namespace dpsw
