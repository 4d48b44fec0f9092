#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "gestalt/corpus.hpp"
#include "gestalt/errors.hpp"
#include "gestalt/head.hpp"
#include "gestalt/io_util.hpp"
#include "oracles.hpp"

using namespace gestalt;
using namespace gestalt::head;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(GESTALT_DATA_DIR);

double sigma(double a) { return 1.0 / (1.0 + std::exp(-a)); }

struct Fixture {
  corpus::Lexicon lexicon = corpus::load_lexicon(kData / "lexicon.tsv");
  corpus::EventTables tables =
      corpus::load_event_tables(kData / "events.cfg", lexicon);

  std::vector<corpus::Sentence> sentences(int n, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<corpus::Sentence> out;
    for (int i = 0; i < n; ++i)
      out.push_back(
          corpus::realize_sentence(corpus::sample_event(rng, tables), lexicon));
    return out;
  }

  net::NetworkParams params(std::uint64_t seed) const {
    net::NetworkShape shape{lexicon.token_count(), 16, 12,
                            lexicon.features().size()};
    Rng rng(seed);
    return net::NetworkParams::init(shape, rng);
  }
};

// Small hand bundle around a 2-D logistic problem (one weight + bias).
DesignBundle toy_bundle(int n, std::uint64_t seed) {
  Rng rng(seed);
  DesignBundle b;
  b.psi.resize(2, n);
  b.targets.resize(2, n);
  const Eigen::Vector2d truth(1.4, -0.3);
  for (int j = 0; j < n; ++j) {
    b.psi(0, j) = rng.normal();
    b.psi(1, j) = 1.0;  // bias row
    const double p = sigma(truth.dot(b.psi.col(j)));
    b.targets(0, j) = 0.0;  // degenerate all-zero unit
    b.targets(1, j) = rng.uniform() < p ? 1.0 : 0.0;
  }
  b.probe_roles.assign(static_cast<std::size_t>(n), corpus::Role::kAgent);
  b.seed = seed;
  return b;
}

HeadOptions toy_options() {
  HeadOptions opt;
  opt.ensemble_size = 64;
  opt.dropout_rate = 0.0;
  opt.step_size = 0.1;
  opt.stop_epsilon = 1e-7;
  opt.max_steps = 500;
  opt.prior_scale = 1.0;
  return opt;
}

}  // namespace

TEST_CASE("build_design produces a stratified, deterministic bundle") {
  Fixture fx;
  const auto sentences = fx.sentences(300, 404);
  const net::NetworkParams params = fx.params(7);
  const net::FeatureMap fmap = net::extract_feature_map(params);

  const DesignBundle a = build_design(sentences, fx.lexicon, fmap, 500, 99);
  CHECK(a.psi.rows() == 13);  // hidden 12 + bias
  CHECK(a.psi.cols() == 500);
  CHECK(a.targets.rows() == fx.lexicon.features().size());
  CHECK(a.targets.cols() == 500);
  CHECK((a.psi.row(12).array() == 1.0).all());

  std::map<corpus::Role, int> counts;
  for (corpus::Role r : a.probe_roles) counts[r] += 1;
  for (corpus::Role r : corpus::kAllRoles) CHECK(counts[r] == 100);

  const DesignBundle b = build_design(sentences, fx.lexicon, fmap, 500, 99);
  CHECK(a.hash() == b.hash());
  const DesignBundle c = build_design(sentences, fx.lexicon, fmap, 500, 100);
  CHECK(a.hash() != c.hash());

  CHECK_THROWS_AS(build_design({}, fx.lexicon, fmap, 10, 1), ConfigError);
}

TEST_CASE("design quotas backfill when a role pool is short") {
  Fixture fx;
  // Corpus with no situations or locations: those pools are empty, so the
  // always-filled roles absorb the quota.
  std::vector<corpus::Sentence> sentences;
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    corpus::EventFrame f = corpus::sample_event(rng, fx.tables);
    f.situation.reset();
    f.location.reset();
    sentences.push_back(corpus::realize_sentence(f, fx.lexicon));
  }
  const net::NetworkParams params = fx.params(8);
  const net::FeatureMap fmap = net::extract_feature_map(params);
  const DesignBundle b = build_design(sentences, fx.lexicon, fmap, 300, 1);
  CHECK(b.psi.cols() == 300);
  std::map<corpus::Role, int> counts;
  for (corpus::Role r : b.probe_roles) counts[r] += 1;
  CHECK(counts[corpus::Role::kSituation] == 0);
  CHECK(counts[corpus::Role::kLocation] == 0);
  CHECK(counts[corpus::Role::kAgent] + counts[corpus::Role::kAction] +
            counts[corpus::Role::kPatient] ==
        300);
}

TEST_CASE("fit_head shapes, degenerate flags and reproducibility") {
  const DesignBundle bundle = toy_bundle(64, 11);
  Eigen::MatrixXd theta(2, 2);
  theta << 0.0, -1.0, 0.5, 0.2;
  const HeadOptions opt = toy_options();

  const PosteriorHead head = fit_head(bundle, opt, theta, 31, 1);
  CHECK(head.units() == 2);
  CHECK(head.dim() == 2);
  CHECK(head.ensemble_size() == 64);
  CHECK(head.fits[0].degenerate_targets);
  CHECK_FALSE(head.fits[1].degenerate_targets);
  CHECK_FALSE(head.any_failed());
  for (const UnitFit& f : head.fits) CHECK(f.steps <= opt.max_steps);

  // All-zero unit: posterior predictive below 0.5 on nearly all columns.
  int below = 0;
  for (int j = 0; j < bundle.size(); ++j)
    if (predict(head, bundle.psi.col(j), 0) < 0.5) ++below;
  CHECK(below >= static_cast<int>(0.99 * bundle.size()));

  // Bit-for-bit reproducibility, independent of the worker count.
  const PosteriorHead again = fit_head(bundle, opt, theta, 31, 2);
  for (int k = 0; k < 2; ++k)
    CHECK(again.ensembles[static_cast<std::size_t>(k)] ==
          head.ensembles[static_cast<std::size_t>(k)]);
}

TEST_CASE("predict identities") {
  PosteriorHead head;
  head.options = toy_options();
  Eigen::VectorXd theta(2);
  theta << 0.8, -0.4;

  // All particles identical: the predictive is exactly sigma(<theta,psi>).
  Eigen::MatrixXd same(2, 8);
  for (int j = 0; j < 8; ++j) same.col(j) = theta;
  head.ensembles.push_back(same);
  // Two particles with opposite logits: predictive exactly 0.5.
  Eigen::MatrixXd opposed(2, 2);
  opposed.col(0) = theta;
  opposed.col(1) = -theta;
  head.ensembles.push_back(opposed);
  // Single particle at theta_MLE: predictive equals the MLE baseline.
  head.ensembles.push_back(theta);
  head.fits.resize(3);

  Eigen::VectorXd psi(2);
  psi << 1.3, 1.0;
  CHECK(predict(head, psi, 0) == doctest::Approx(sigma(theta.dot(psi))));
  CHECK(predict_sd(head, psi, 0) == doctest::Approx(0.0));
  CHECK(predict(head, psi, 1) == doctest::Approx(0.5).epsilon(1e-12));
  Eigen::MatrixXd theta_mle = theta.transpose();
  CHECK(predict(head, psi, 2) ==
        doctest::Approx(predict_mle(theta_mle, psi, 0)).epsilon(1e-14));
  CHECK(predict(head, psi, 0) > 0.0);
  CHECK(predict(head, psi, 0) < 1.0);
}

TEST_CASE("converged toy head matches the quadrature predictive") {
  const DesignBundle bundle = toy_bundle(32, 21);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, 2);
  const PosteriorHead head = fit_head(bundle, toy_options(), theta, 77, 1);

  const Eigen::VectorXd t1 = bundle.targets.row(1);
  double max_diff = 0.0;
  for (double x : {-2.0, -0.5, 0.0, 1.0, 2.5}) {
    const Eigen::Vector2d query(x, 1.0);
    const double mine = predict(head, query, 1);
    const double exact = oracle::logistic_predictive_2d(
        bundle.psi, t1, Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones(),
        query);
    max_diff = std::max(max_diff, std::fabs(mine - exact));
  }
  CHECK(max_diff < 0.02);
}

TEST_CASE("wider priors do not shrink the predictive spread") {
  const DesignBundle bundle = toy_bundle(48, 33);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, 2);
  theta(1, 0) = 0.9;  // unit 1 prior mean off origin

  std::map<double, double> median_sd;
  for (double scale : {0.01, 1.0, 5.0}) {
    HeadOptions opt = toy_options();
    opt.prior_scale = scale;
    const PosteriorHead head = fit_head(bundle, opt, theta, 13, 1);
    std::vector<double> sds;
    for (int j = 0; j < bundle.size(); ++j)
      sds.push_back(predict_sd(head, bundle.psi.col(j), 1));
    std::sort(sds.begin(), sds.end());
    median_sd[scale] = sds[sds.size() / 2];
  }
  CHECK(median_sd[0.01] <= median_sd[1.0]);
  CHECK(median_sd[1.0] <= median_sd[5.0]);
}

TEST_CASE("tight priors converge in fewer sampler steps") {
  const DesignBundle bundle = toy_bundle(48, 41);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, 2);
  HeadOptions opt = toy_options();
  opt.dropout_rate = 0.3;
  opt.step_size = 0.5;
  opt.stop_epsilon = 0.02;
  opt.max_steps = 200;

  opt.prior_scale = 0.01;
  const PosteriorHead tight = fit_head(bundle, opt, theta, 3, 1);
  opt.prior_scale = 5.0;
  const PosteriorHead wide = fit_head(bundle, opt, theta, 3, 1);
  CHECK(tight.total_steps() < wide.total_steps());
}

TEST_CASE("head archives round-trip") {
  const DesignBundle bundle = toy_bundle(32, 55);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, 2);
  const PosteriorHead head = fit_head(bundle, toy_options(), theta, 2, 1);

  const fs::path dir = fs::temp_directory_path() / "gestalt_head_archive";
  fs::remove_all(dir);
  save_head(dir, head);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "convergence.csv"));
  CHECK(fs::exists(dir / "units" / "unit_000.ens"));

  const PosteriorHead loaded = load_head(dir);
  CHECK(loaded.units() == head.units());
  for (int k = 0; k < head.units(); ++k) {
    CHECK(loaded.ensembles[static_cast<std::size_t>(k)] ==
          head.ensembles[static_cast<std::size_t>(k)]);
    CHECK(loaded.fits[static_cast<std::size_t>(k)].steps ==
          head.fits[static_cast<std::size_t>(k)].steps);
  }
  CHECK(loaded.options.prior_scale == head.options.prior_scale);

  // Saving twice produces identical bytes.
  const fs::path dir2 = fs::temp_directory_path() / "gestalt_head_archive2";
  fs::remove_all(dir2);
  save_head(dir2, head);
  CHECK(read_text_file(dir / "manifest.json") ==
        read_text_file(dir2 / "manifest.json"));
  CHECK(hash_file(dir / "units" / "unit_001.ens") ==
        hash_file(dir2 / "units" / "unit_001.ens"));
}
