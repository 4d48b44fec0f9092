#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gestalt/corpus.hpp"
#include "gestalt/lexicon.hpp"
#include "gestalt/prng.hpp"

namespace gestalt::net {

struct NetworkShape {
  int vocab = 0;     // constituent units
  int gestalt = 0;   // recurrent gestalt width
  int hidden = 0;    // second hidden width d; psi has d+1 entries
  int features = 0;  // probe and output width

  bool operator==(const NetworkShape&) const = default;
};

// Update network: gestalt_t = sigmoid(W_in x_t + W_rec gestalt_{t-1} + b_g).
// Query network: h = sigmoid(W_hg gestalt + W_hp probe + b_h),
//                y_k = sigmoid(W_out h + b_out)_k = sigmoid(<theta_k, psi>)
// with psi = [h; 1] and theta_k = [W_out row k, b_out_k].
struct NetworkParams {
  NetworkShape shape;
  Eigen::MatrixXd w_in;   // gestalt x vocab
  Eigen::MatrixXd w_rec;  // gestalt x gestalt
  Eigen::VectorXd b_g;    // gestalt
  Eigen::MatrixXd w_hg;   // hidden x gestalt
  Eigen::MatrixXd w_hp;   // hidden x features
  Eigen::VectorXd b_h;    // hidden
  Eigen::MatrixXd w_out;  // features x hidden
  Eigen::VectorXd b_out;  // features

  static NetworkParams zeros(const NetworkShape& shape);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per block.
  static NetworkParams init(const NetworkShape& shape, Rng& rng);

  bool all_finite() const;
  std::size_t parameter_count() const;

  // Output-layer rows theta_k = [w_out row k, b_out_k], one per feature.
  Eigen::MatrixXd output_layer_rows() const;  // features x (hidden+1)
};

// Applies a generic callable to every parameter block in a fixed order;
// used by the optimizer, serialization and gradient checking. Blocks mix
// MatrixXd and VectorXd, so fn must be generic.
template <typename Fn>
void for_each_block(NetworkParams& p, Fn&& fn) {
  fn(p.w_in);
  fn(p.w_rec);
  fn(p.b_g);
  fn(p.w_hg);
  fn(p.w_hp);
  fn(p.b_h);
  fn(p.w_out);
  fn(p.b_out);
}

inline Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& a) {
  return 1.0 / (1.0 + (-a).exp());
}

struct ForwardState {
  Eigen::MatrixXd gestalts;  // gestalt x L, one column per constituent step
  Eigen::VectorXd hidden;    // second hidden activation for the probe
};

struct ForwardResult {
  Eigen::VectorXd outputs;  // per-feature probabilities
  ForwardState state;
};

// Runs the update network over the constituent steps (columns of
// `steps`), then queries once with `probe`. Deterministic and pure.
ForwardResult forward(const NetworkParams& params,
                      const Eigen::MatrixXd& steps,
                      const Eigen::VectorXd& probe);

Eigen::MatrixXd run_update(const NetworkParams& params,
                           const Eigen::MatrixXd& steps);

// Clamped cross entropy, summed over features and pairs. Outputs landing
// outside [floor, 1-floor] against a mismatched target are clamped; each
// clamp increments *clamp_events when provided.
double cross_entropy(const Eigen::MatrixXd& outputs,
                     const Eigen::MatrixXd& targets, double floor = 1e-12,
                     std::uint64_t* clamp_events = nullptr);

struct TrainConfig {
  double learning_rate = 4e-3;
  double weight_decay = 1e-5;
  int max_epochs = 60;
  int patience = 5;
  double validation_fraction = 0.1;
  int batch_size = 16;  // sentences per optimizer step
  int gestalt_width = 100;
  int hidden_width = 100;
  double clamp_floor = 1e-12;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // cross entropy per pair (summed over units)
  double test_loss = 0.0;
  double train_acc = 0.0;  // fraction of thresholded units matching target
  double test_acc = 0.0;
};

struct TrainResult {
  NetworkParams params;  // best-validation snapshot
  std::vector<EpochStats> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double best_val_acc = 0.0;
  std::uint64_t clamp_events = 0;
};

// Sparse per-sentence training data: token indices per step, one role
// query per filled role with the probe's feature index and the target's
// active feature indices.
struct SentenceData {
  std::vector<std::vector<int>> step_tokens;
  std::vector<corpus::Role> roles;
  std::vector<int> probe_indices;
  std::vector<std::vector<int>> target_indices;
};

SentenceData encode_sentence(const corpus::Sentence& sentence,
                             const corpus::Lexicon& lexicon);

// Adam + weight decay on clamped cross entropy with a validation split and
// early stopping; returns the parameters of the best validation epoch.
TrainResult train_mle(const std::vector<corpus::Sentence>& sentences,
                      const corpus::Lexicon& lexicon,
                      const TrainConfig& config);

// Core loop over pre-encoded data; exposed for degenerate-corpus tests.
TrainResult train_core(const std::vector<SentenceData>& data,
                       const NetworkShape& shape, const TrainConfig& config);

// Full analytic gradient of the summed cross entropy over a small batch.
NetworkParams batch_gradient(const NetworkParams& params,
                             const std::vector<SentenceData>& batch,
                             double* loss_out = nullptr);

// Central finite differences (step 1e-5) on >= n_coords randomly chosen
// parameter coordinates; returns the maximum relative error.
double grad_check(const NetworkParams& params,
                  const std::vector<SentenceData>& batch, int n_coords,
                  Rng& rng);

// Frozen feature map psi(x) = [second hidden activation; 1].
class FeatureMap {
 public:
  explicit FeatureMap(NetworkParams params) : params_(std::move(params)) {}

  const NetworkParams& params() const { return params_; }
  int dim() const { return params_.shape.hidden + 1; }

  Eigen::VectorXd psi(const Eigen::MatrixXd& steps,
                      const Eigen::VectorXd& probe) const;
  Eigen::VectorXd psi_from_gestalt(const Eigen::VectorXd& gestalt,
                                   const Eigen::VectorXd& probe) const;

 private:
  NetworkParams params_;
};

FeatureMap extract_feature_map(const NetworkParams& params);

// Checkpoint: versioned header (shapes, seed, config hash), then the
// weight blocks row-major as little-endian doubles.
void save_checkpoint(const std::filesystem::path& path,
                     const NetworkParams& params, std::uint64_t seed,
                     std::uint64_t config_hash);
NetworkParams load_checkpoint(const std::filesystem::path& path,
                              std::uint64_t* seed = nullptr,
                              std::uint64_t* config_hash = nullptr);

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochStats>& log);

}  // namespace gestalt::net
