#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "dst2r/errors.hpp"
#include "dst2r/evaluation.hpp"
#include "dst2r/simulation.hpp"

using namespace dst2r;

namespace {

// Rank-1 map (2,2) -> (2) with one zero per contraction factor dimension
// pattern: b1 = (1, 0), b2 = (.5, .5), generation (.25, .75).
Dst2rModel hand_model() {
  Dst2rModel m{Shape{2, 2}, Shape{2}, {}};
  UnitRankComponent c;
  c.contraction_factors = {RankOneFactor{{1.0, 0.0}},
                           RankOneFactor{{0.5, 0.5}}};
  c.generation_factors = {RankOneFactor{{0.25, 0.75}}};
  c.w_p = 2.0;
  c.w_q = 1.5;
  m.components.push_back(c);
  return m;
}

Dst2rModel planted(std::uint64_t seed, std::size_t rank = 2) {
  SimSpec spec;
  spec.predictor_shape = Shape{4, 3};
  spec.response_shape = Shape{3};
  spec.rank = rank;
  spec.sparsity = 0.3;
  spec.n_samples = 1;
  spec.seed = seed;
  Rng rng(seed);
  return gen_coefficients(spec, rng);
}

}  // namespace

TEST_CASE("estimation error identities") {
  const Dst2rModel m = hand_model();
  CHECK(estimation_error(m, m) == 0.0);

  const Dst2rModel zero{m.predictor_shape, m.response_shape, {}};
  CHECK(estimation_error(m, zero) ==
        doctest::Approx(frobenius_norm(compose_full(m))).epsilon(1e-12));
  CHECK(estimation_error(m, zero) ==
        doctest::Approx(estimation_error(zero, m)).epsilon(1e-14));

  // Doubling w_q doubles the composed tensor, so the gap is its norm.
  Dst2rModel twice = m;
  twice.components[0].w_q *= 2.0;
  CHECK(estimation_error(m, twice) ==
        doctest::Approx(frobenius_norm(compose_full(m))).epsilon(1e-12));

  const Dst2rModel other{Shape{2, 2}, Shape{3}, {}};
  CHECK_THROWS_AS(estimation_error(m, other), shape_error);
}

TEST_CASE("component matching undoes a permutation") {
  const Dst2rModel truth = planted(31);
  Dst2rModel shuffled = truth;
  std::swap(shuffled.components[0], shuffled.components[1]);
  const std::vector<std::size_t> perm = match_components(truth, shuffled);
  REQUIRE(perm.size() == 2);
  CHECK(perm[0] == 1);
  CHECK(perm[1] == 0);

  const std::vector<std::size_t> id = match_components(truth, truth);
  CHECK(id == std::vector<std::size_t>{0, 1});

  Dst2rModel fewer = truth;
  fewer.components.resize(1);
  CHECK_THROWS_AS(match_components(truth, fewer), shape_error);
}

TEST_CASE("support rates on the exact model and on a dense guess") {
  const Dst2rModel m = hand_model();
  const SupportReport exact = tpr_fpr(m, m);
  REQUIRE(exact.tpr_per_mode.size() == 3);
  for (double t : exact.tpr_per_mode) CHECK(t == 1.0);
  for (double f : exact.fpr_per_mode) CHECK(f == 0.0);
  CHECK(exact.tpr_mean == 1.0);
  CHECK(exact.tpr_sum == 3.0);
  CHECK(exact.fpr_sum == 0.0);

  // Dense fit: every true zero becomes a false positive; modes without true
  // zeros keep a vacuous zero rate.
  Dst2rModel dense = m;
  dense.components[0].contraction_factors[0].beta = {0.5, 0.5};
  const SupportReport rep = tpr_fpr(m, dense);
  CHECK(rep.tpr_per_mode == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(rep.fpr_per_mode == std::vector<double>{1.0, 0.0, 0.0});
  CHECK(rep.fpr_mean == doctest::Approx(1.0 / 3.0));

  // Missing the only active cell of mode 0 zeroes that mode's recall.
  Dst2rModel missing = m;
  missing.components[0].contraction_factors[0].beta = {0.0, 1.0};
  const SupportReport miss = tpr_fpr(m, missing);
  CHECK(miss.tpr_per_mode[0] == 0.0);
  CHECK(miss.fpr_per_mode[0] == 1.0);
}

TEST_CASE("support rates ignore factor signs") {
  const Dst2rModel truth = planted(37);
  Dst2rModel flipped = truth;
  for (RankOneFactor& f : flipped.components[0].contraction_factors)
    for (double& v : f.beta) v = -v;
  for (RankOneFactor& f : flipped.components[1].generation_factors)
    for (double& v : f.beta) v = -v;
  const SupportReport rep = tpr_fpr(truth, flipped);
  for (double t : rep.tpr_per_mode) CHECK(t == 1.0);
  for (double f : rep.fpr_per_mode) CHECK(f == 0.0);
}

TEST_CASE("zero threshold hides sub-threshold mass") {
  const Dst2rModel m = hand_model();
  Dst2rModel dusty = m;
  dusty.components[0].contraction_factors[0].beta = {0.95, 0.05};
  const SupportReport strict = tpr_fpr(m, dusty);
  CHECK(strict.fpr_per_mode[0] == 1.0);
  const SupportReport lax = tpr_fpr(m, dusty, 0.1);
  CHECK(lax.fpr_per_mode[0] == 0.0);
  CHECK(lax.tpr_per_mode[0] == 1.0);
}

TEST_CASE("sparsity coverage counts recovered zeros") {
  const Dst2rModel m = hand_model();
  CHECK(sparsity_coverage(m, m) == 1.0);

  Dst2rModel dense = m;
  dense.components[0].contraction_factors[0].beta = {0.5, 0.5};
  CHECK(sparsity_coverage(m, dense) == 0.0);
  CHECK(sparsity_coverage(m, dense, 0.6) == 1.0);

  // A truth with no zero entries has nothing to cover.
  Dst2rModel full = m;
  full.components[0].contraction_factors[0].beta = {0.9, 0.1};
  CHECK(sparsity_coverage(full, dense) == 1.0);
}

TEST_CASE("lasso matches the single-predictor soft threshold") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::size_t m_count = 50;
  std::vector<DenseTensor> xs, ys;
  for (std::size_t m = 0; m < m_count; ++m) {
    DenseTensor x(Shape{1}), y(Shape{1});
    x[0] = u(rng);
    y[0] = 0.7 * x[0] + 0.05 * u(rng);
    xs.push_back(x);
    ys.push_back(y);
  }

  for (double lambda : {0.02, 0.1, 0.5}) {
    const SparseOlsResult fit = sparse_ols_fit(xs, ys, {lambda});
    // Hand solution on the standardized scalar problem.
    double xm = 0.0, ym = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) {
      xm += xs[m][0];
      ym += ys[m][0];
    }
    xm /= double(m_count);
    ym /= double(m_count);
    double sd = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) {
      const double c = xs[m][0] - xm;
      sd += c * c;
    }
    sd = std::sqrt(sd / double(m_count));
    double corr = 0.0;
    for (std::size_t m = 0; m < m_count; ++m)
      corr += ((xs[m][0] - xm) / sd) * (ys[m][0] - ym);
    corr /= double(m_count);
    const double soft = corr > lambda    ? corr - lambda
                        : corr < -lambda ? corr + lambda
                                         : 0.0;
    CHECK(fit.coef.at(0, 0) == doctest::Approx(soft / sd).epsilon(1e-6));
    CHECK(fit.chosen_lambda[0] == lambda);
  }
}

TEST_CASE("the critical penalty zeroes every coefficient") {
  SimSpec spec;
  spec.predictor_shape = Shape{3, 2};
  spec.response_shape = Shape{2};
  spec.rank = 1;
  spec.sparsity = 0.2;
  spec.n_samples = 40;
  spec.noise_sd = 0.1;
  spec.seed = 17;
  const SimDataset ds = make_dataset(spec);

  const std::vector<double> top = default_lambda_grid(ds.xs, ds.ys, 1);
  REQUIRE(top.size() == 1);
  const SparseOlsResult fit = sparse_ols_fit(ds.xs, ds.ys, top);
  for (std::size_t i = 0; i < fit.coef.rows(); ++i)
    for (std::size_t j = 0; j < fit.coef.cols(); ++j)
      CHECK(fit.coef.at(i, j) == 0.0);
}

TEST_CASE("a planted noiseless map is recovered through the grid") {
  SimSpec spec;
  spec.predictor_shape = Shape{3, 2};
  spec.response_shape = Shape{2};
  spec.rank = 1;
  spec.sparsity = 0.3;
  spec.n_samples = 200;
  spec.noise_sd = 0.0;
  spec.seed = 23;
  const SimDataset ds = make_dataset(spec);

  const std::vector<double> grid = default_lambda_grid(ds.xs, ds.ys);
  const SparseOlsResult fit = sparse_ols_fit(ds.xs, ds.ys, grid);
  const double norm = frobenius_norm(compose_full(ds.true_model));
  CHECK(ols_estimation_error(fit, ds.true_model) <= 0.05 * norm);
  const EntrySupport sup = ols_entry_support(fit, ds.true_model, 0.01);
  CHECK(sup.tpr == 1.0);
  CHECK(sup.fpr <= 0.2);
}

TEST_CASE("grid construction spans the requested range") {
  SimSpec spec;
  spec.predictor_shape = Shape{2, 2};
  spec.response_shape = Shape{2};
  spec.rank = 1;
  spec.sparsity = 0.0;
  spec.n_samples = 30;
  spec.noise_sd = 0.1;
  spec.seed = 29;
  const SimDataset ds = make_dataset(spec);

  const std::vector<double> grid = default_lambda_grid(ds.xs, ds.ys, 8, 1e-3);
  REQUIRE(grid.size() == 8);
  CHECK(grid.back() == doctest::Approx(grid.front() * 1e-3).epsilon(1e-12));
  for (std::size_t k = 1; k < grid.size(); ++k) CHECK(grid[k] < grid[k - 1]);

  // Degenerate all-zero responses fall back to a unit critical level.
  std::vector<DenseTensor> zero_ys(ds.ys.size(), DenseTensor(Shape{2}));
  const std::vector<double> fallback = default_lambda_grid(ds.xs, zero_ys, 2);
  CHECK(fallback.front() == 1.0);

  CHECK_THROWS_AS(default_lambda_grid(ds.xs, ds.ys, 0), std::invalid_argument);
  CHECK_THROWS_AS(default_lambda_grid(ds.xs, ds.ys, 4, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(sparse_ols_fit(ds.xs, ds.ys, {}), std::invalid_argument);
}
