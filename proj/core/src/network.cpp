#include "gestalt/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "gestalt/errors.hpp"
#include "gestalt/io_util.hpp"

namespace gestalt::net {

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x53474E43;  // "CNGS" LE
constexpr std::uint32_t kCheckpointVersion = 1;

Eigen::VectorXd sigmoid_vec(const Eigen::VectorXd& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

Eigen::MatrixXd sigmoid_mat(const Eigen::MatrixXd& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

double uniform_symmetric(Rng& rng, double r) {
  return (2.0 * rng.uniform() - 1.0) * r;
}

void fill_uniform(Eigen::MatrixXd& m, Rng& rng, double fan_in) {
  const double r = 1.0 / std::sqrt(fan_in);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = uniform_symmetric(rng, r);
}

}  // namespace

NetworkParams NetworkParams::zeros(const NetworkShape& shape) {
  NetworkParams p;
  p.shape = shape;
  p.w_in = Eigen::MatrixXd::Zero(shape.gestalt, shape.vocab);
  p.w_rec = Eigen::MatrixXd::Zero(shape.gestalt, shape.gestalt);
  p.b_g = Eigen::VectorXd::Zero(shape.gestalt);
  p.w_hg = Eigen::MatrixXd::Zero(shape.hidden, shape.gestalt);
  p.w_hp = Eigen::MatrixXd::Zero(shape.hidden, shape.features);
  p.b_h = Eigen::VectorXd::Zero(shape.hidden);
  p.w_out = Eigen::MatrixXd::Zero(shape.features, shape.hidden);
  p.b_out = Eigen::VectorXd::Zero(shape.features);
  return p;
}

NetworkParams NetworkParams::init(const NetworkShape& shape, Rng& rng) {
  NetworkParams p = zeros(shape);
  // Draw order is fixed; changing it would change every seeded artifact.
  fill_uniform(p.w_in, rng, shape.vocab);
  fill_uniform(p.w_rec, rng, shape.gestalt);
  fill_uniform(p.w_hg, rng, shape.gestalt);
  fill_uniform(p.w_hp, rng, shape.features);
  fill_uniform(p.w_out, rng, shape.hidden);
  return p;  // biases start at zero
}

bool NetworkParams::all_finite() const {
  bool ok = true;
  auto check = [&ok](const auto& m) {
    if (!m.allFinite()) ok = false;
  };
  for_each_block(const_cast<NetworkParams&>(*this), check);
  return ok;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for_each_block(const_cast<NetworkParams&>(*this), [&n](const auto& m) {
    n += static_cast<std::size_t>(m.size());
  });
  return n;
}

Eigen::MatrixXd NetworkParams::output_layer_rows() const {
  Eigen::MatrixXd theta(shape.features, shape.hidden + 1);
  theta.leftCols(shape.hidden) = w_out;
  theta.col(shape.hidden) = b_out;
  return theta;
}

Eigen::MatrixXd run_update(const NetworkParams& params,
                           const Eigen::MatrixXd& steps) {
  if (steps.rows() != params.shape.vocab)
    throw NumericError("run_update: input width mismatch");
  const Eigen::Index len = steps.cols();
  Eigen::MatrixXd gestalts(params.shape.gestalt, len);
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(params.shape.gestalt);
  for (Eigen::Index t = 0; t < len; ++t) {
    const Eigen::VectorXd pre =
        params.w_in * steps.col(t) + params.w_rec * prev + params.b_g;
    gestalts.col(t) = sigmoid_vec(pre);
    prev = gestalts.col(t);
  }
  return gestalts;
}

ForwardResult forward(const NetworkParams& params,
                      const Eigen::MatrixXd& steps,
                      const Eigen::VectorXd& probe) {
  if (probe.size() != params.shape.features)
    throw NumericError("forward: probe width mismatch");
  if (steps.cols() < 1) throw NumericError("forward: empty input prefix");
  ForwardResult r;
  r.state.gestalts = run_update(params, steps);
  const Eigen::VectorXd pre_h =
      params.w_hg * r.state.gestalts.col(r.state.gestalts.cols() - 1) +
      params.w_hp * probe + params.b_h;
  r.state.hidden = sigmoid_vec(pre_h);
  r.outputs = sigmoid_vec(params.w_out * r.state.hidden + params.b_out);
  return r;
}

double cross_entropy(const Eigen::MatrixXd& outputs,
                     const Eigen::MatrixXd& targets, double floor,
                     std::uint64_t* clamp_events) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols())
    throw NumericError("cross_entropy: shape mismatch");
  double loss = 0.0;
  for (Eigen::Index j = 0; j < outputs.cols(); ++j) {
    for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
      const double t = targets(i, j);
      double y = outputs(i, j);
      if (y < floor) {
        if (clamp_events != nullptr && t > 0.5) ++*clamp_events;
        y = floor;
      } else if (y > 1.0 - floor) {
        if (clamp_events != nullptr && t < 0.5) ++*clamp_events;
        y = 1.0 - floor;
      }
      loss -= t * std::log(y) + (1.0 - t) * std::log(1.0 - y);
    }
  }
  return loss;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be > 0");
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
    throw ConfigError("validation fraction must be in (0,1)");
  if (max_epochs < 1 || patience < 1 || batch_size < 1)
    throw ConfigError("epochs, patience and batch size must be >= 1");
  if (gestalt_width < 1 || hidden_width < 1)
    throw ConfigError("layer widths must be >= 1");
}

SentenceData encode_sentence(const corpus::Sentence& sentence,
                             const corpus::Lexicon& lexicon) {
  SentenceData sd;
  for (const std::string& c : sentence.constituents) {
    const Eigen::VectorXd v = corpus::encode_constituent(c, lexicon);
    std::vector<int> idx;
    for (int i = 0; i < v.size(); ++i)
      if (v(i) != 0.0) idx.push_back(i);
    sd.step_tokens.push_back(std::move(idx));
  }
  for (const corpus::RoleQuery& q :
       corpus::role_queries(sentence.frame, lexicon)) {
    sd.roles.push_back(q.role);
    sd.probe_indices.push_back(
        lexicon.features().index_of(corpus::role_feature_label(q.role)));
    std::vector<int> tgt;
    for (int i = 0; i < q.target.size(); ++i)
      if (q.target(i) != 0.0) tgt.push_back(i);
    sd.target_indices.push_back(std::move(tgt));
  }
  return sd;
}

namespace {

struct Accum {
  NetworkParams grads;
  double loss = 0.0;
  std::uint64_t pairs = 0;
  std::uint64_t units = 0;
  std::uint64_t correct = 0;
  std::uint64_t clamp_events = 0;
};

// Forward (and optionally backward) for one sentence. Queries for all
// (prefix, role) combinations are evaluated as one grid so the hot path is
// a handful of small GEMMs. `scale` multiplies the cross-entropy gradient.
void process_sentence(const NetworkParams& p, const SentenceData& sd,
                      double scale, bool backward, double floor, Accum& acc) {
  const int len = static_cast<int>(sd.step_tokens.size());
  const int n_roles = static_cast<int>(sd.roles.size());
  if (len == 0 || n_roles == 0) return;
  const int grid = len * n_roles;
  const int gestalt = p.shape.gestalt;
  const int hidden = p.shape.hidden;
  const int features = p.shape.features;

  // Update network.
  Eigen::MatrixXd gestalts(gestalt, len);
  {
    Eigen::VectorXd pre(gestalt);
    for (int t = 0; t < len; ++t) {
      pre = p.b_g;
      for (int tok : sd.step_tokens[static_cast<std::size_t>(t)])
        pre += p.w_in.col(tok);
      if (t > 0) pre.noalias() += p.w_rec * gestalts.col(t - 1);
      gestalts.col(t) = sigmoid_vec(pre);
    }
  }

  // Query grid; column q = r*len + t pairs prefix t+1 with role r.
  const Eigen::MatrixXd from_gestalt = p.w_hg * gestalts;  // hidden x len
  Eigen::MatrixXd pre_h(hidden, grid);
  for (int r = 0; r < n_roles; ++r) {
    const Eigen::VectorXd probe_part =
        p.w_hp.col(sd.probe_indices[static_cast<std::size_t>(r)]) + p.b_h;
    for (int t = 0; t < len; ++t)
      pre_h.col(r * len + t) = from_gestalt.col(t) + probe_part;
  }
  const Eigen::MatrixXd hid = sigmoid_mat(pre_h);
  Eigen::MatrixXd out = (p.w_out * hid).colwise() + p.b_out;
  out = sigmoid_mat(out);

  // Dense target grid (small: features x grid).
  Eigen::MatrixXd tgt = Eigen::MatrixXd::Zero(features, grid);
  for (int r = 0; r < n_roles; ++r)
    for (int t = 0; t < len; ++t)
      for (int k : sd.target_indices[static_cast<std::size_t>(r)])
        tgt(k, r * len + t) = 1.0;

  acc.loss += cross_entropy(out, tgt, floor, &acc.clamp_events);
  acc.pairs += static_cast<std::uint64_t>(grid);
  acc.units += static_cast<std::uint64_t>(grid) *
               static_cast<std::uint64_t>(features);
  for (int q = 0; q < grid; ++q)
    for (int k = 0; k < features; ++k)
      if ((out(k, q) >= 0.5) == (tgt(k, q) >= 0.5)) ++acc.correct;

  if (!backward) return;

  const Eigen::MatrixXd d_out = (out - tgt) * scale;
  acc.grads.w_out.noalias() += d_out * hid.transpose();
  acc.grads.b_out += d_out.rowwise().sum();

  const Eigen::MatrixXd d_hid = ((p.w_out.transpose() * d_out).array() *
                                 hid.array() * (1.0 - hid.array()))
                                    .matrix();

  // Collapse the grid back onto prefixes and probes.
  Eigen::MatrixXd d_by_prefix = Eigen::MatrixXd::Zero(hidden, len);
  for (int r = 0; r < n_roles; ++r) {
    Eigen::VectorXd d_probe = Eigen::VectorXd::Zero(hidden);
    for (int t = 0; t < len; ++t) {
      d_by_prefix.col(t) += d_hid.col(r * len + t);
      d_probe += d_hid.col(r * len + t);
    }
    acc.grads.w_hp.col(sd.probe_indices[static_cast<std::size_t>(r)]) +=
        d_probe;
  }
  acc.grads.w_hg.noalias() += d_by_prefix * gestalts.transpose();
  acc.grads.b_h += d_hid.rowwise().sum();

  const Eigen::MatrixXd d_gestalt = p.w_hg.transpose() * d_by_prefix;

  // Backprop through time.
  Eigen::VectorXd delta_g = d_gestalt.col(len - 1);
  for (int t = len - 1; t >= 0; --t) {
    const Eigen::VectorXd delta_a =
        (delta_g.array() * gestalts.col(t).array() *
         (1.0 - gestalts.col(t).array()))
            .matrix();
    for (int tok : sd.step_tokens[static_cast<std::size_t>(t)])
      acc.grads.w_in.col(tok) += delta_a;
    if (t > 0)
      acc.grads.w_rec.noalias() += delta_a * gestalts.col(t - 1).transpose();
    acc.grads.b_g += delta_a;
    if (t > 0) {
      delta_g = p.w_rec.transpose() * delta_a;
      delta_g += d_gestalt.col(t - 1);
    }
  }
}

std::uint64_t grid_size(const SentenceData& sd) {
  return static_cast<std::uint64_t>(sd.step_tokens.size()) *
         static_cast<std::uint64_t>(sd.roles.size());
}

struct AdamState {
  NetworkParams m;
  NetworkParams v;
  long t = 0;
};

void adam_step(NetworkParams& params, NetworkParams& grads, AdamState& state,
               const TrainConfig& cfg) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  auto update = [&](Eigen::MatrixXd& w, Eigen::MatrixXd& g, Eigen::MatrixXd& m,
                    Eigen::MatrixXd& v) {
    if (cfg.weight_decay != 0.0) g += cfg.weight_decay * w;
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = (kBeta2 * v.array() + (1.0 - kBeta2) * g.array().square()).matrix();
    w.array() -= cfg.learning_rate * (m.array() / bc1) /
                 ((v.array() / bc2).sqrt() + kEps);
  };
  auto update_vec = [&](Eigen::VectorXd& w, Eigen::VectorXd& g,
                        Eigen::VectorXd& m, Eigen::VectorXd& v) {
    if (cfg.weight_decay != 0.0) g += cfg.weight_decay * w;
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = (kBeta2 * v.array() + (1.0 - kBeta2) * g.array().square()).matrix();
    w.array() -= cfg.learning_rate * (m.array() / bc1) /
                 ((v.array() / bc2).sqrt() + kEps);
  };
  update(params.w_in, grads.w_in, state.m.w_in, state.v.w_in);
  update(params.w_rec, grads.w_rec, state.m.w_rec, state.v.w_rec);
  update_vec(params.b_g, grads.b_g, state.m.b_g, state.v.b_g);
  update(params.w_hg, grads.w_hg, state.m.w_hg, state.v.w_hg);
  update(params.w_hp, grads.w_hp, state.m.w_hp, state.v.w_hp);
  update_vec(params.b_h, grads.b_h, state.m.b_h, state.v.b_h);
  update(params.w_out, grads.w_out, state.m.w_out, state.v.w_out);
  update_vec(params.b_out, grads.b_out, state.m.b_out, state.v.b_out);
}

struct EvalStats {
  double loss_per_pair = 0.0;
  double accuracy = 0.0;
};

EvalStats evaluate(const NetworkParams& params,
                   const std::vector<SentenceData>& data,
                   const std::vector<std::size_t>& indices, double floor) {
  Accum acc;
  acc.grads = NetworkParams::zeros(params.shape);
  for (std::size_t i : indices)
    process_sentence(params, data[i], 0.0, false, floor, acc);
  EvalStats s;
  if (acc.pairs > 0) {
    s.loss_per_pair = acc.loss / static_cast<double>(acc.pairs);
    s.accuracy =
        static_cast<double>(acc.correct) / static_cast<double>(acc.units);
  }
  return s;
}

}  // namespace

TrainResult train_core(const std::vector<SentenceData>& data,
                       const NetworkShape& shape, const TrainConfig& config) {
  config.validate();
  if (data.empty()) throw ConfigError("train: empty corpus");

  Rng init_rng(derive_seed(config.seed, "init", 0));
  NetworkParams params = NetworkParams::init(shape, init_rng);

  // Validation split over sentences.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  if (data.size() == 1) {
    train_idx = order;
    val_idx = order;
  } else {
    Rng split_rng(derive_seed(config.seed, "split", 0));
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[split_rng.uniform_index(i + 1)]);
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(config.validation_fraction * static_cast<double>(data.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
    val_idx.assign(order.begin(), order.begin() + static_cast<long>(n_val));
    train_idx.assign(order.begin() + static_cast<long>(n_val), order.end());
  }

  AdamState adam;
  adam.m = NetworkParams::zeros(shape);
  adam.v = NetworkParams::zeros(shape);

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  NetworkParams best = params;
  int since_best = 0;
  std::uint64_t clamp_events = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng epoch_rng(derive_seed(config.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> sched = train_idx;
    for (std::size_t i = sched.size() - 1; i > 0; --i)
      std::swap(sched[i], sched[epoch_rng.uniform_index(i + 1)]);

    double epoch_loss = 0.0;
    std::uint64_t epoch_pairs = 0;
    std::uint64_t epoch_units = 0;
    std::uint64_t epoch_correct = 0;

    for (std::size_t start = 0; start < sched.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(
          sched.size(), start + static_cast<std::size_t>(config.batch_size));
      std::uint64_t batch_pairs = 0;
      for (std::size_t i = start; i < stop; ++i)
        batch_pairs += grid_size(data[sched[i]]);
      if (batch_pairs == 0) continue;
      const double scale =
          1.0 / (static_cast<double>(batch_pairs) * shape.features);

      Accum acc;
      acc.grads = NetworkParams::zeros(shape);
      for (std::size_t i = start; i < stop; ++i)
        process_sentence(params, data[sched[i]], scale, true,
                         config.clamp_floor, acc);
      if (!std::isfinite(acc.loss))
        throw NumericError("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch));
      adam_step(params, acc.grads, adam, config);

      epoch_loss += acc.loss;
      epoch_pairs += acc.pairs;
      epoch_units += acc.units;
      epoch_correct += acc.correct;
      clamp_events += acc.clamp_events;
    }
    if (!params.all_finite())
      throw NumericError("training diverged (non-finite weights) at epoch " +
                         std::to_string(epoch));

    const EvalStats val = evaluate(params, data, val_idx, config.clamp_floor);
    EpochStats es;
    es.epoch = epoch;
    es.train_loss =
        epoch_pairs > 0 ? epoch_loss / static_cast<double>(epoch_pairs) : 0.0;
    es.train_acc = epoch_units > 0 ? static_cast<double>(epoch_correct) /
                                         static_cast<double>(epoch_units)
                                   : 0.0;
    es.test_loss = val.loss_per_pair;
    es.test_acc = val.accuracy;
    result.log.push_back(es);

    if (val.loss_per_pair < result.best_val_loss) {
      result.best_val_loss = val.loss_per_pair;
      result.best_val_acc = val.accuracy;
      result.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= config.patience) break;
    }
  }

  result.params = std::move(best);
  result.clamp_events = clamp_events;
  return result;
}

TrainResult train_mle(const std::vector<corpus::Sentence>& sentences,
                      const corpus::Lexicon& lexicon,
                      const TrainConfig& config) {
  if (sentences.empty()) throw ConfigError("train: empty corpus");
  std::vector<SentenceData> data;
  data.reserve(sentences.size());
  for (const corpus::Sentence& s : sentences)
    data.push_back(encode_sentence(s, lexicon));
  NetworkShape shape;
  shape.vocab = lexicon.token_count();
  shape.gestalt = config.gestalt_width;
  shape.hidden = config.hidden_width;
  shape.features = lexicon.features().size();
  return train_core(data, shape, config);
}

NetworkParams batch_gradient(const NetworkParams& params,
                             const std::vector<SentenceData>& batch,
                             double* loss_out) {
  Accum acc;
  acc.grads = NetworkParams::zeros(params.shape);
  for (const SentenceData& sd : batch)
    process_sentence(params, sd, 1.0, true, 1e-12, acc);
  if (loss_out != nullptr) *loss_out = acc.loss;
  return std::move(acc.grads);
}

double grad_check(const NetworkParams& params,
                  const std::vector<SentenceData>& batch, int n_coords,
                  Rng& rng) {
  if (batch.empty()) throw ConfigError("grad_check: empty batch");
  NetworkParams analytic = batch_gradient(params, batch);

  // Flat views over all parameter blocks.
  std::vector<std::pair<double*, std::size_t>> blocks;
  NetworkParams work = params;
  for_each_block(work, [&blocks](auto& m) {
    blocks.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
  });
  std::vector<std::pair<const double*, std::size_t>> grad_blocks;
  for_each_block(analytic, [&grad_blocks](auto& m) {
    grad_blocks.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
  });
  std::size_t total = 0;
  for (const auto& [ptr, n] : blocks) total += n;

  auto loss_at = [&]() {
    Accum acc;
    acc.grads = NetworkParams::zeros(params.shape);
    for (const SentenceData& sd : batch)
      process_sentence(work, sd, 0.0, false, 1e-12, acc);
    return acc.loss;
  };

  double grad_inf = 0.0;
  for (const auto& [ptr, n] : grad_blocks)
    for (std::size_t i = 0; i < n; ++i)
      grad_inf = std::max(grad_inf, std::fabs(ptr[i]));

  constexpr double kStep = 1e-5;
  // Near-zero coordinates are floored at 1e-3 of the gradient scale so
  // finite-difference cancellation noise cannot masquerade as error.
  const double floor = std::max(1e-3 * grad_inf, 1e-10);
  double max_rel = 0.0;
  for (int c = 0; c < n_coords; ++c) {
    std::size_t flat = rng.uniform_index(total);
    std::size_t b = 0;
    while (flat >= blocks[b].second) {
      flat -= blocks[b].second;
      ++b;
    }
    double* w = blocks[b].first + flat;
    const double saved = *w;
    *w = saved + kStep;
    const double up = loss_at();
    *w = saved - kStep;
    const double down = loss_at();
    *w = saved;
    const double fd = (up - down) / (2.0 * kStep);
    const double an = grad_blocks[b].first[flat];
    const double rel =
        std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), floor});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

Eigen::VectorXd FeatureMap::psi(const Eigen::MatrixXd& steps,
                                const Eigen::VectorXd& probe) const {
  const ForwardResult r = forward(params_, steps, probe);
  Eigen::VectorXd out(dim());
  out.head(params_.shape.hidden) = r.state.hidden;
  out(params_.shape.hidden) = 1.0;
  return out;
}

Eigen::VectorXd FeatureMap::psi_from_gestalt(
    const Eigen::VectorXd& gestalt, const Eigen::VectorXd& probe) const {
  const Eigen::VectorXd pre_h =
      params_.w_hg * gestalt + params_.w_hp * probe + params_.b_h;
  Eigen::VectorXd out(dim());
  out.head(params_.shape.hidden) = sigmoid_vec(pre_h);
  out(params_.shape.hidden) = 1.0;
  return out;
}

FeatureMap extract_feature_map(const NetworkParams& params) {
  return FeatureMap(params);
}

void save_checkpoint(const std::filesystem::path& path,
                     const NetworkParams& params, std::uint64_t seed,
                     std::uint64_t config_hash) {
  BinWriter w(path);
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(seed);
  w.u64(config_hash);
  w.u32(static_cast<std::uint32_t>(params.shape.vocab));
  w.u32(static_cast<std::uint32_t>(params.shape.gestalt));
  w.u32(static_cast<std::uint32_t>(params.shape.hidden));
  w.u32(static_cast<std::uint32_t>(params.shape.features));
  NetworkParams& p = const_cast<NetworkParams&>(params);
  for_each_block(p, [&w](const auto& m) { w.matrix(m); });
  w.close();
}

NetworkParams load_checkpoint(const std::filesystem::path& path,
                              std::uint64_t* seed,
                              std::uint64_t* config_hash) {
  BinReader r(path);
  if (r.u32() != kCheckpointMagic)
    throw ParseError(path.string() + ": not a checkpoint file");
  if (r.u32() != kCheckpointVersion)
    throw ParseError(path.string() + ": unsupported checkpoint version");
  const std::uint64_t s = r.u64();
  const std::uint64_t h = r.u64();
  if (seed != nullptr) *seed = s;
  if (config_hash != nullptr) *config_hash = h;
  NetworkShape shape;
  shape.vocab = static_cast<int>(r.u32());
  shape.gestalt = static_cast<int>(r.u32());
  shape.hidden = static_cast<int>(r.u32());
  shape.features = static_cast<int>(r.u32());
  NetworkParams p = NetworkParams::zeros(shape);
  for_each_block(p, [&r](auto& m) { m = r.matrix(m.rows(), m.cols()); });
  if (!p.all_finite())
    throw ParseError(path.string() + ": checkpoint has non-finite weights");
  return p;
}

void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochStats>& log) {
  std::ostringstream out;
  out << "epoch,train_loss,test_loss,train_acc,test_acc\n";
  for (const EpochStats& e : log)
    out << e.epoch << ',' << format_double(e.train_loss) << ','
        << format_double(e.test_loss) << ',' << format_double(e.train_acc)
        << ',' << format_double(e.test_acc) << '\n';
  write_text_file(path, out.str());
}

}  // namespace gestalt::net
