#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gestalt/corpus.hpp"
#include "gestalt/errors.hpp"
#include "gestalt/io_util.hpp"
#include "gestalt/network.hpp"
#include "oracles.hpp"

using namespace gestalt;
using namespace gestalt::net;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(GESTALT_DATA_DIR);

struct Fixture {
  corpus::Lexicon lexicon = corpus::load_lexicon(kData / "lexicon.tsv");
  corpus::EventTables tables =
      corpus::load_event_tables(kData / "events.cfg", lexicon);

  NetworkShape shape() const {
    return NetworkShape{lexicon.token_count(), 24, 20,
                        lexicon.features().size()};
  }

  std::vector<SentenceData> batch(int n, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<SentenceData> out;
    for (int i = 0; i < n; ++i) {
      const corpus::EventFrame f = corpus::sample_event(rng, tables);
      out.push_back(
          encode_sentence(corpus::realize_sentence(f, lexicon), lexicon));
    }
    return out;
  }
};

Eigen::MatrixXd one_step(const Fixture& fx, const std::string& token) {
  Eigen::MatrixXd steps(fx.lexicon.token_count(), 1);
  steps.col(0) = corpus::encode_constituent(token, fx.lexicon);
  return steps;
}

}  // namespace

TEST_CASE("all-zero weights output 0.5 everywhere") {
  Fixture fx;
  const NetworkParams p = NetworkParams::zeros(fx.shape());
  const auto r = forward(p, one_step(fx, "woman"),
                         fx.lexicon.role_vector(corpus::Role::kAgent));
  CHECK(r.outputs.size() == fx.shape().features);
  CHECK(r.outputs.minCoeff() == doctest::Approx(0.5));
  CHECK(r.outputs.maxCoeff() == doctest::Approx(0.5));
}

TEST_CASE("a pure bias unit fixes its output probability") {
  Fixture fx;
  NetworkParams p = NetworkParams::zeros(fx.shape());
  const int unit = 3;
  p.b_out(unit) = std::log(3.0);  // sigma(ln 3) = 0.75
  for (const char* tok : {"woman", "pizza", "eats"}) {
    const auto r = forward(p, one_step(fx, tok),
                           fx.lexicon.role_vector(corpus::Role::kPatient));
    CHECK(r.outputs(unit) == doctest::Approx(0.75).epsilon(1e-12));
  }
}

TEST_CASE("cross entropy analytic anchors and oracle") {
  const int k = 176;
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(k, 1, 0.5);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, 1);
  t.topRows(9).setOnes();
  CHECK(cross_entropy(y, t) == doctest::Approx(k * std::log(2.0)));

  // Perfect fit after clamping stays near zero.
  CHECK(cross_entropy(t, t) <= k * 1e-10);

  Rng rng(3);
  Eigen::MatrixXd yr(37, 5), tr(37, 5);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 37; ++i) {
      yr(i, j) = 0.001 + 0.998 * rng.uniform();
      tr(i, j) = rng.uniform() < 0.3 ? 1.0 : 0.0;
    }
  CHECK(std::fabs(cross_entropy(yr, tr) - oracle::naive_cross_entropy(yr, tr)) <
        1e-10);
}

TEST_CASE("cross entropy counts clamped saturated outputs") {
  Eigen::MatrixXd y(2, 1), t(2, 1);
  y << 0.0, 1.0;
  t << 1.0, 0.0;
  std::uint64_t clamps = 0;
  const double loss = cross_entropy(y, t, 1e-12, &clamps);
  CHECK(clamps == 2);
  CHECK(std::isfinite(loss));
}

TEST_CASE("output-layer gradient equals Psi (y - t) on a 2-feature batch") {
  // Hand-built case: 2 output features, 3 queries.
  NetworkShape shape{4, 3, 2, 2};
  Rng rng(17);
  NetworkParams p = NetworkParams::init(shape, rng);
  SentenceData sd;
  sd.step_tokens = {{0}, {2}};
  sd.roles = {corpus::Role::kAgent};
  sd.probe_indices = {0};
  sd.target_indices = {{1}};
  double loss = 0.0;
  const NetworkParams g = batch_gradient(p, {sd}, &loss);

  // Recompute psi for each (prefix, probe) pair and the closed form.
  Eigen::MatrixXd steps = Eigen::MatrixXd::Zero(4, 2);
  steps(0, 0) = 1.0;
  steps(2, 1) = 1.0;
  Eigen::VectorXd probe = Eigen::VectorXd::Zero(2);
  probe(0) = 1.0;
  const Eigen::MatrixXd gestalts = run_update(p, steps);
  const FeatureMap fmap = extract_feature_map(p);
  Eigen::MatrixXd psi(3, 2);   // (hidden+1) x pairs
  Eigen::MatrixXd y(2, 2), t(2, 2);
  for (int l = 0; l < 2; ++l) {
    const Eigen::VectorXd f = fmap.psi_from_gestalt(gestalts.col(l), probe);
    psi.col(l) = f;
    const Eigen::MatrixXd theta = p.output_layer_rows();
    for (int k = 0; k < 2; ++k)
      y(k, l) = 1.0 / (1.0 + std::exp(-theta.row(k).dot(f)));
    t(0, l) = 0.0;
    t(1, l) = 1.0;
  }
  // Gradient w.r.t. theta_k = Psi (y_k - t_k) with Psi = psi columns.
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXd expected =
        psi * (y.row(k) - t.row(k)).transpose();
    Eigen::VectorXd actual(3);
    actual.head(2) = g.w_out.row(k).transpose();
    actual(2) = g.b_out(k);
    CHECK((actual - expected).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("zero-residual batches give zero output-layer gradient") {
  NetworkShape shape{4, 3, 2, 2};
  NetworkParams p = NetworkParams::zeros(shape);
  // With all-zero weights y = 0.5; build targets of 0.5 impossible (binary),
  // so instead drive b_out to saturate y at the targets.
  p.b_out << -40.0, 40.0;
  SentenceData sd;
  sd.step_tokens = {{1}};
  sd.roles = {corpus::Role::kAgent};
  sd.probe_indices = {0};
  sd.target_indices = {{1}};  // unit 1 on, unit 0 off: y matches targets
  const NetworkParams g = batch_gradient(p, {sd});
  CHECK(g.w_out.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(g.b_out.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("output-layer Hessian Psi R Psi^T matches per-sample accumulation") {
  Rng rng(23);
  const int d = 5, n = 9;
  Eigen::MatrixXd psi(d, n);
  Eigen::VectorXd theta(d);
  for (int i = 0; i < d; ++i) theta(i) = rng.normal() * 0.5;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) psi(i, j) = rng.normal();

  Eigen::VectorXd y(n);
  for (int j = 0; j < n; ++j)
    y(j) = 1.0 / (1.0 + std::exp(-theta.dot(psi.col(j))));
  const Eigen::VectorXd r = (y.array() * (1.0 - y.array())).matrix();
  const Eigen::MatrixXd hessian = psi * r.asDiagonal() * psi.transpose();

  Eigen::MatrixXd direct = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < n; ++j)
    direct += r(j) * psi.col(j) * psi.col(j).transpose();
  CHECK((hessian - direct).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("backprop matches central finite differences") {
  Fixture fx;
  Rng init(404);
  NetworkParams p = NetworkParams::init(fx.shape(), init);
  const auto batch = fx.batch(3, 888);
  Rng coords(55);
  const double max_rel = grad_check(p, batch, 200, coords);
  CHECK(max_rel < 1e-5);
}

TEST_CASE("feature map is consistent with forward outputs") {
  Fixture fx;
  Rng init(2);
  const NetworkParams p = NetworkParams::init(fx.shape(), init);
  const FeatureMap fmap = extract_feature_map(p);
  const Eigen::MatrixXd steps = one_step(fx, "woman");
  const Eigen::VectorXd probe = fx.lexicon.role_vector(corpus::Role::kAgent);

  const auto r = forward(p, steps, probe);
  const Eigen::VectorXd psi = fmap.psi(steps, probe);
  CHECK(psi.size() == fx.shape().hidden + 1);
  CHECK(psi(fx.shape().hidden) == 1.0);
  const Eigen::MatrixXd theta = p.output_layer_rows();
  for (int k = 0; k < fx.shape().features; ++k) {
    const double via_psi = 1.0 / (1.0 + std::exp(-theta.row(k).dot(psi)));
    CHECK(std::fabs(via_psi - r.outputs(k)) < 1e-14);
  }

  // Determinism: identical inputs give identical psi.
  CHECK(fmap.psi(steps, probe) == psi);
}

TEST_CASE("degenerate all-zero targets train to perfect accuracy") {
  NetworkShape shape{4, 6, 5, 3};
  std::vector<SentenceData> data;
  for (int i = 0; i < 40; ++i) {
    SentenceData sd;
    sd.step_tokens = {{i % 4}, {(i + 1) % 4}};
    sd.roles = {corpus::Role::kAgent};
    sd.probe_indices = {0};
    sd.target_indices = {{}};  // every unit off
    data.push_back(std::move(sd));
  }
  TrainConfig cfg;
  cfg.max_epochs = 60;
  cfg.patience = 60;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.05;  // trivial objective, drive it hard
  cfg.seed = 9;
  const TrainResult r = train_core(data, shape, cfg);
  CHECK(r.best_val_acc == doctest::Approx(1.0));
  CHECK(r.best_val_loss < 0.05);
}

TEST_CASE("training on a small corpus learns and stops early") {
  Fixture fx;
  Rng rng(1212);
  std::vector<corpus::Sentence> sentences;
  for (int i = 0; i < 400; ++i)
    sentences.push_back(
        corpus::realize_sentence(corpus::sample_event(rng, fx.tables),
                                 fx.lexicon));
  TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.patience = 4;
  cfg.seed = 31;
  cfg.gestalt_width = 32;
  cfg.hidden_width = 32;
  const TrainResult r = train_mle(sentences, fx.lexicon, cfg);
  CHECK(r.best_val_acc > 0.9);
  CHECK(static_cast<int>(r.log.size()) <= cfg.max_epochs);
  // Early stopping bookkeeping: the snapshot reproduces the best epoch.
  double best = 1e300;
  for (const EpochStats& e : r.log) best = std::min(best, e.test_loss);
  CHECK(r.best_val_loss == doctest::Approx(best));
  // Losses drop from the first epoch to the best epoch.
  CHECK(r.log.front().test_loss > r.best_val_loss);
}

TEST_CASE("checkpoints round-trip bitwise") {
  Fixture fx;
  Rng init(64);
  const NetworkParams p = NetworkParams::init(fx.shape(), init);
  const fs::path a = fs::temp_directory_path() / "gestalt_ckpt_a.bin";
  const fs::path b = fs::temp_directory_path() / "gestalt_ckpt_b.bin";
  save_checkpoint(a, p, 123, 456);
  save_checkpoint(b, p, 123, 456);
  CHECK(hash_file(a) == hash_file(b));

  std::uint64_t seed = 0, hash = 0;
  const NetworkParams q = load_checkpoint(a, &seed, &hash);
  CHECK(seed == 123);
  CHECK(hash == 456);
  CHECK(q.w_in == p.w_in);
  CHECK(q.w_rec == p.w_rec);
  CHECK(q.b_out == p.b_out);
}
