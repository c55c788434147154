#include "dpsw/checkpoint.hpp"

#include <fstream>

namespace dpsw {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json matrix_to_json(const Matrix& m) {
  json out;
  out["rows"] = m.rows();
  out["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  out["data"] = std::move(data);
  return out;
}

Matrix matrix_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw DataError("checkpoint: matrix payload size mismatch");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++];
  return m;
}

json mlp_to_json(const MLP& m) {
  json layers = json::array();
  for (const auto& layer : m.layers) {
    json jl;
    jl["act"] = to_string(layer.act);
    jl["W"] = matrix_to_json(layer.W);
    jl["b"] = matrix_to_json(layer.b);
    layers.push_back(std::move(jl));
  }
  return layers;
}

MLP mlp_from_json(const json& j) {
  MLP m;
  for (const auto& jl : j) {
    DenseLayer layer;
    layer.act = activation_from_string(jl.at("act").get<std::string>());
    layer.W = matrix_from_json(jl.at("W"));
    layer.b = matrix_from_json(jl.at("b"));
    m.layers.push_back(std::move(layer));
  }
  return m;
}

}  // namespace

json hyperparams_to_json(const Hyperparams& hp) {
  return json{{"lambda_pi", hp.lambda_pi},
              {"lambda_upsilon", hp.lambda_upsilon},
              {"lambda_minus_pi", hp.lambda_minus_pi},
              {"epsilon", hp.epsilon},
              {"kappa", hp.kappa},
              {"batch_size", hp.batch_size},
              {"lr_pi", hp.lr_pi},
              {"lr_other", hp.lr_other},
              {"max_outer", hp.max_outer},
              {"patience", hp.patience},
              {"rep_dim", hp.rep_dim},
              {"hidden_dim", hp.hidden_dim},
              {"seed", hp.seed},
              {"weight_grad", hp.weight_grad},
              {"pi_clamp", hp.pi_clamp},
              {"pretrain_epochs", hp.pretrain_epochs},
              {"pi_warmup_epochs", hp.pi_warmup_epochs}};
}

Hyperparams hyperparams_from_json(const json& j) {
  Hyperparams hp;
  if (!j.is_object()) throw ConfigError("hyperparams: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda_pi") hp.lambda_pi = value.get<double>();
    else if (key == "lambda_upsilon") hp.lambda_upsilon = value.get<double>();
    else if (key == "lambda_minus_pi") hp.lambda_minus_pi = value.get<double>();
    else if (key == "epsilon") hp.epsilon = value.get<double>();
    else if (key == "kappa") hp.kappa = value.get<double>();
    else if (key == "batch_size") hp.batch_size = value.get<int>();
    else if (key == "lr_pi") hp.lr_pi = value.get<double>();
    else if (key == "lr_other") hp.lr_other = value.get<double>();
    else if (key == "max_outer") hp.max_outer = value.get<int>();
    else if (key == "patience") hp.patience = value.get<int>();
    else if (key == "rep_dim") hp.rep_dim = value.get<int>();
    else if (key == "hidden_dim") hp.hidden_dim = value.get<int>();
    else if (key == "seed") hp.seed = value.get<std::uint64_t>();
    else if (key == "weight_grad") hp.weight_grad = value.get<int>();
    else if (key == "pi_clamp") hp.pi_clamp = value.get<double>();
    else if (key == "pretrain_epochs") hp.pretrain_epochs = value.get<int>();
    else if (key == "pi_warmup_epochs") hp.pi_warmup_epochs = value.get<int>();
    else throw ConfigError("hyperparams: unknown key '" + key + "'");
  }
  return hp;
}

void save_checkpoint(const DPSWModel& model, const std::string& path) {
  json out;
  out["format_version"] = kFormatVersion;
  out["mode"] = to_string(model.mode);
  out["d"] = model.d;
  out["rep_dim"] = model.rep_dim;
  out["hidden_dim"] = model.hidden_dim;
  out["p_treated"] = model.p_treated;
  out["mmd_bandwidth"] = model.mmd_bandwidth;
  out["hyperparams"] = hyperparams_to_json(model.hp);
  json comps;
  for (const auto& [name, mlp] : model_components(model)) comps[name] = mlp_to_json(*mlp);
  out["components"] = std::move(comps);
  std::ofstream f(path);
  if (!f) throw DataError("save_checkpoint: cannot open " + path);
  f << out.dump(2) << "\n";
  if (!f) throw DataError("save_checkpoint: write failed for " + path);
}

DPSWModel load_checkpoint(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("load_checkpoint: cannot open " + path);
  json in;
  try {
    f >> in;
  } catch (const json::exception& e) {
    throw DataError(std::string("load_checkpoint: malformed JSON: ") + e.what());
  }
  try {
    if (in.at("format_version").get<int>() != kFormatVersion)
      throw DataError("load_checkpoint: unsupported format version");
    DPSWModel model;
    model.mode = mode_from_string(in.at("mode").get<std::string>());
    model.d = in.at("d").get<int>();
    model.rep_dim = in.at("rep_dim").get<int>();
    model.hidden_dim = in.at("hidden_dim").get<int>();
    model.p_treated = in.at("p_treated").get<double>();
    model.mmd_bandwidth = in.at("mmd_bandwidth").get<double>();
    model.hp = hyperparams_from_json(in.at("hyperparams"));
    const auto& comps = in.at("components");
    for (const auto& [name, mlp] : model_components(model)) {
      if (!comps.contains(name))
        throw DataError("load_checkpoint: missing component " + name);
      *const_cast<MLP*>(mlp) = mlp_from_json(comps.at(name));
    }
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("load_checkpoint: ") + e.what());
  }
}

}  // namespace dpsw
