#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dpsw/datagen.hpp"
#include "dpsw/nnet.hpp"
#include "dpsw/smoothing.hpp"

namespace dpsw {

enum class Mode {
  dpsw,            // differentiable Pareto smoothing, gradients through weights
  dpsw_norm,       // dpsw followed by self-normalization
  drcfr_raw,       // raw importance weights, treated as constants
  drcfr_norm,      // self-normalized weights, constants
  drcfr_trunc,     // truncated weights (Crump interval), constants
  drcfr_ignore,    // 0/1 mask over extreme propensities
  psw_separate,    // propensity fit on raw X once; hard-smoothed fixed weights
  single_encoder,  // one shared encoder, no weighting (TARNet-style ablation)
};

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);
const std::vector<Mode>& all_modes();

struct Hyperparams {
  double lambda_pi = 1e-4;        // propensity-phase complexity penalty
  double lambda_upsilon = 1.0;    // MMD balancing strength
  double lambda_minus_pi = 1e-4;  // outcome-phase complexity penalty
  double epsilon = 0.1;           // soft-rank regularization strength
  double kappa = 10.0;            // tail-gate sharpness
  int batch_size = 128;
  double lr_pi = 1e-3;
  double lr_other = 1e-3;
  int max_outer = 100;
  int patience = 10;   // outer rounds without validation improvement
  int rep_dim = 0;     // 0 -> d/3, at least 1
  int hidden_dim = 0;  // 0 -> rep_dim
  std::uint64_t seed = 0;
  // -1: constants in drcfr_* modes, differentiable in dpsw modes (default);
  // 0/1 force either behavior where a propensity-based weight path exists.
  int weight_grad = -1;
  double pi_clamp = 1e-7;
  int pretrain_epochs = 30;  // psw_separate propensity pretraining budget
  // Propensity epochs in the first outer round. The alternating loop runs one
  // epoch per phase afterward; warm-starting keeps the weighted validation
  // objective comparable from the first snapshot on.
  int pi_warmup_epochs = 10;
};

struct DPSWModel {
  Mode mode = Mode::dpsw;
  int d = 0;
  int rep_dim = 0;
  int hidden_dim = 0;
  MLP gamma, delta, upsilon;  // instrument / confounder / adjustment encoders
  MLP shared;                 // single_encoder mode only
  MLP pi_head;                // over [gamma, delta] reps, or raw X in psw_separate
  MLP h0, h1;                 // outcome heads over [delta, upsilon]
  double p_treated = 0.5;     // frozen training-split treatment mean
  double mmd_bandwidth = 0.0; // frozen on the first minibatch; 0 = unset
  Hyperparams hp;
};

struct RoundRecord {
  int round = 0;
  double prop_loss = 0.0;     // NaN when the mode has no propensity phase
  double outcome_loss = 0.0;  // mean over minibatches
  double val_objective = 0.0;
  int degenerate_fallbacks = 0;
  double xi_mean = 0.0;  // mean fitted shape over the round's minibatches
  int xi_count = 0;
  int xi_unreliable = 0;
  int mmd_skipped = 0;
  int clamp_hits = 0;
};

struct TrainLog {
  std::vector<RoundRecord> rounds;
  int best_round = 0;
  double best_val = 0.0;
};

struct TrainResult {
  DPSWModel model;
  TrainLog log;
};

// Cross entropy of the treatment under the model propensity, plus the
// complexity penalty on the propensity head.
double propensity_loss(const DPSWModel& model, const Dataset& batch);

// Weighted prediction loss plus MMD balancing and complexity penalty,
// with the provided weights. The MMD term is skipped (never an
// error) when a treatment group is absent from the batch, and does not
// apply in single_encoder mode.
double outcome_loss(const DPSWModel& model, const Dataset& batch,
                    const WeightVector& weights);

// Alternating optimization: propensity phase, then representation/outcome
// phase with mode-specific weights; keeps the best validation snapshot and
// stops after `patience` non-improving outer rounds.
TrainResult train(const Dataset& train_split, const Dataset& val_split,
                  const Hyperparams& hp, Mode mode);

// h1(delta(x), upsilon(x)) - h0(delta(x), upsilon(x)) per row.
Vector predict_cate(const DPSWModel& model, const Matrix& x);

// Prediction of the received-treatment head, h^{a_i}(x_i).
Vector predict_factual(const DPSWModel& model, const Matrix& x, const IntVector& a);

// P(A=1 | x) under the model, clamped away from {0, 1}.
Vector propensity(const DPSWModel& model, const Matrix& x);

// Mode-appropriate weights for a data slice (raw importance weights passed
// through the mode's scheme, the slice treated as one batch); used for the
// validation objective.
WeightVector scheme_weights(const DPSWModel& model, const Dataset& data);

// One outcome-objective gradient evaluation on a batch. fixed_weights (when
// given) enter as constants, as in psw_separate mode.
struct OutcomeEval {
  ad::GradientTape tape;
  WeightDiagnostics weight_diag;
  bool mmd_skipped = false;
  int clamp_hits = 0;
  Vector weights;
};
OutcomeEval outcome_gradient(const DPSWModel& model, const Dataset& batch,
                             const Vector* fixed_weights = nullptr);

// One propensity-objective gradient evaluation; representations enter as
// fixed inputs, so the tape carries propensity-head parameters only.
struct PropensityEval {
  ad::GradientTape tape;
  int clamp_hits = 0;
};
PropensityEval propensity_gradient(const DPSWModel& model, const Dataset& batch);

// Trainable components of a model under its mode, as (prefix, mlp) pairs.
std::vector<std::pair<std::string, const MLP*>> model_components(const DPSWModel& m);
std::vector<std::pair<std::string, MLP*>> model_components(DPSWModel& m);

// Flat name -> matrix view over every component parameter ("gamma.W1", ...).
std::map<std::string, Matrix*> parameter_map(DPSWModel& m);

}  // namespace dpsw
