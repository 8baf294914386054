// Acceptance suite. Run with a criterion number (1..10) to check one
// property, or with no arguments to run everything. Each criterion prints a
// single PASS or FAIL line with its measured quantities; the exit status is
// nonzero when any requested criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dst2r/cp_model.hpp"
#include "dst2r/evaluation.hpp"
#include "dst2r/simulation.hpp"
#include "dst2r/solver.hpp"
#include "dst2r/tensor.hpp"

namespace fs = std::filesystem;
using namespace dst2r;

namespace {

struct Check {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

double runif(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return u(rng);
}

DenseTensor random_tensor(const Shape& shape, std::mt19937_64& rng) {
  DenseTensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = runif(rng);
  return t;
}

std::vector<DenseTensor> random_samples(const Shape& shape, std::size_t m_count,
                                        std::mt19937_64& rng) {
  std::vector<DenseTensor> out;
  for (std::size_t m = 0; m < m_count; ++m)
    out.push_back(random_tensor(shape, rng));
  return out;
}

Shape random_shape(std::size_t min_order, std::size_t max_order,
                   std::size_t max_extent, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> od(min_order, max_order);
  std::uniform_int_distribution<std::size_t> ed(1, max_extent);
  std::vector<std::size_t> dims(od(rng));
  for (std::size_t& d : dims) d = ed(rng);
  return Shape{dims};
}

// Index-by-index contraction of the last n modes of a with the first n of b.
DenseTensor naive_contracted(const DenseTensor& a, const DenseTensor& b,
                             std::size_t n) {
  const std::size_t oa = a.order(), ob = b.order();
  std::vector<std::size_t> out_dims;
  for (std::size_t m = 0; m + n < oa; ++m) out_dims.push_back(a.shape().extent(m));
  for (std::size_t m = n; m < ob; ++m) out_dims.push_back(b.shape().extent(m));
  if (out_dims.empty()) out_dims.push_back(1);
  DenseTensor out(Shape{out_dims});

  std::size_t n_inner = 1;
  for (std::size_t m = 0; m < n; ++m) n_inner *= b.shape().extent(m);
  for (std::size_t lo = 0; lo < out.size(); ++lo) {
    const std::vector<std::size_t> oidx = multi_index(out.shape(), lo);
    double acc = 0.0;
    for (std::size_t li = 0; li < n_inner; ++li) {
      std::vector<std::size_t> inner;
      std::size_t rest = li;
      for (std::size_t m = 0; m < n; ++m) {
        inner.push_back(rest % b.shape().extent(m));
        rest /= b.shape().extent(m);
      }
      std::vector<std::size_t> ai, bi;
      for (std::size_t m = 0; m + n < oa; ++m) ai.push_back(oidx[m]);
      ai.insert(ai.end(), inner.begin(), inner.end());
      bi = inner;
      for (std::size_t m = 0; m + n < ob; ++m) bi.push_back(oidx[oa - n + m]);
      acc += a.at(ai) * b.at(bi);
    }
    out[lo] = acc;
  }
  return out;
}

double rel_gap(const DenseTensor& got, const DenseTensor& want) {
  DenseTensor diff = subtract(got, want);
  return frobenius_norm(diff) / (1.0 + frobenius_norm(want));
}

// Spearman rank correlation; assumes no ties (continuous measurements).
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&v](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[order[i]] = double(i);
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = ra[i] - rb[i];
    d2 += d * d;
  }
  return 1.0 - 6.0 * d2 / (double(n) * (double(n) * double(n) - 1.0));
}

// ------------------------------------------------------------- criterion 1

Check criterion_1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> w(0.2, 2.0);
  double worst = 0.0;
  const int n_draws = 1000;
  for (int d = 0; d < n_draws; ++d) {
    const Shape px = random_shape(1, 3, 4, rng);
    const Shape py = random_shape(1, 2, 3, rng);
    UnitRankComponent c;
    for (std::size_t k = 0; k < px.order(); ++k) {
      std::vector<double> v(px.extent(k));
      for (double& x : v) x = runif(rng);
      c.contraction_factors.push_back(RankOneFactor{std::move(v)});
    }
    for (std::size_t k = 0; k < py.order(); ++k) {
      std::vector<double> v(py.extent(k));
      for (double& x : v) x = runif(rng);
      c.generation_factors.push_back(RankOneFactor{std::move(v)});
    }
    c.w_p = w(rng);
    c.w_q = w(rng);

    const DenseTensor x = random_tensor(px, rng);
    const DenseTensor got = predict_unit_rank(x, c, py);
    const Dst2rModel model{px, py, {c}};
    const DenseTensor want =
        contracted_product(x, compose_full(model), px.order());
    worst = std::max(worst, rel_gap(got, want));
  }
  const double secs = seconds_since(t0);
  const bool pass = worst <= 1e-10 && secs < 10.0;
  return Check{pass, std::to_string(n_draws) + " draws, worst rel gap " +
                         num(worst) + " (limit 1e-10), " + num(secs) +
                         "s (budget 10s)"};
}

// ------------------------------------------------------------- criterion 2

Check criterion_2() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  double worst = 0.0;
  const int n_draws = 500;
  for (int d = 0; d < n_draws; ++d) {
    switch (d % 5) {
      case 0: {  // contraction against the index-loop oracle
        std::uniform_int_distribution<std::size_t> cnt(0, 2);
        std::uniform_int_distribution<std::size_t> ext(1, 4);
        const std::size_t shared = cnt(rng), lead = cnt(rng), trail = cnt(rng);
        std::vector<std::size_t> adims, bdims, mid;
        for (std::size_t m = 0; m < shared; ++m) mid.push_back(ext(rng));
        for (std::size_t m = 0; m < lead; ++m) adims.push_back(ext(rng));
        adims.insert(adims.end(), mid.begin(), mid.end());
        bdims = mid;
        for (std::size_t m = 0; m < trail; ++m) bdims.push_back(ext(rng));
        if (adims.empty()) adims.push_back(ext(rng));
        if (bdims.empty() && shared == 0) bdims.push_back(ext(rng));
        if (bdims.empty()) break;
        const DenseTensor a = random_tensor(Shape{adims}, rng);
        const DenseTensor b = random_tensor(Shape{bdims}, rng);
        const std::size_t n = std::min({shared, a.order(), b.order()});
        worst = std::max(worst, rel_gap(contracted_product(a, b, n),
                                        naive_contracted(a, b, n)));
        break;
      }
      case 1: {  // mode product drops one mode
        const Shape shape = random_shape(1, 4, 4, rng);
        const DenseTensor t = random_tensor(shape, rng);
        std::uniform_int_distribution<std::size_t> md(0, shape.order() - 1);
        const std::size_t mode = md(rng);
        std::vector<double> v(shape.extent(mode));
        for (double& x : v) x = runif(rng);
        const DenseTensor got = mode_n_product(t, v, mode);
        DenseTensor want(got.shape());
        for (std::size_t l = 0; l < t.size(); ++l) {
          std::vector<std::size_t> idx = multi_index(shape, l);
          const std::size_t i = idx[mode];
          idx.erase(idx.begin() + long(mode));
          if (idx.empty()) idx.push_back(0);
          want.at(idx) += v[i] * t[l];
        }
        worst = std::max(worst, rel_gap(got, want));
        break;
      }
      case 2: {  // outer product entry identity
        const DenseTensor a = random_tensor(random_shape(1, 2, 4, rng), rng);
        const DenseTensor b = random_tensor(random_shape(1, 2, 4, rng), rng);
        const DenseTensor got = outer_product(a, b);
        DenseTensor want(got.shape());
        for (std::size_t l = 0; l < want.size(); ++l) {
          const std::vector<std::size_t> idx = multi_index(want.shape(), l);
          const std::vector<std::size_t> ai(idx.begin(),
                                            idx.begin() + a.order());
          const std::vector<std::size_t> bi(idx.begin() + a.order(),
                                            idx.end());
          want[l] = a.at(ai) * b.at(bi);
        }
        worst = std::max(worst, rel_gap(got, want));
        break;
      }
      case 3: {  // matricize: elementwise unfolding law plus exact inversion
        const Shape shape = random_shape(1, 4, 4, rng);
        const DenseTensor t = random_tensor(shape, rng);
        std::uniform_int_distribution<std::size_t> md(0, shape.order() - 1);
        const std::size_t mode = md(rng);
        const Matrix m = matricize(t, mode);
        double gap = 0.0;
        for (std::size_t l = 0; l < t.size(); ++l) {
          const std::vector<std::size_t> idx = multi_index(shape, l);
          std::size_t col = 0, stride = 1;
          for (std::size_t k = 0; k < shape.order(); ++k) {
            if (k == mode) continue;
            col += idx[k] * stride;
            stride *= shape.extent(k);
          }
          gap = std::max(gap, std::abs(m.at(idx[mode], col) - t[l]));
        }
        const DenseTensor back = dematricize(m, shape, mode);
        worst = std::max(worst, gap / (1.0 + frobenius_norm(t)));
        worst = std::max(worst, rel_gap(back, t));
        break;
      }
      case 4: {  // vectorization keeps order and pairs with inner products
        const Shape shape = random_shape(1, 4, 4, rng);
        const DenseTensor a = random_tensor(shape, rng);
        const DenseTensor b = random_tensor(shape, rng);
        const std::vector<double> va = vec(a);
        double gap = 0.0, ip = 0.0, l1 = 0.0, fr = 0.0;
        for (std::size_t l = 0; l < a.size(); ++l) {
          gap = std::max(gap, std::abs(va[l] - a[l]));
          ip += a[l] * b[l];
          l1 += std::abs(a[l]);
          fr += a[l] * a[l];
        }
        const double scale = 1.0 + std::abs(ip);
        gap = std::max(gap, std::abs(inner_product(a, b) - ip) / scale);
        gap = std::max(gap, std::abs(l1_norm(a) - l1) / (1.0 + l1));
        gap = std::max(gap,
                       std::abs(frobenius_norm(a) - std::sqrt(fr)) / 2.0);
        worst = std::max(worst, gap);
        break;
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = worst <= 1e-12 && secs < 30.0;
  return Check{pass, std::to_string(n_draws) + " draws, worst rel gap " +
                         num(worst) + " (limit 1e-12), " + num(secs) +
                         "s (budget 30s)"};
}

// ------------------------------------------------------------- criterion 3

Check criterion_3() {
  std::size_t n_records = 0, violations = 0;
  double worst_l0 = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    SimSpec spec;
    spec.predictor_shape = Shape{4, 4};
    spec.response_shape = Shape{3, 3};
    spec.rank = 1;
    spec.sparsity = 0.2;
    spec.n_samples = 100;
    spec.noise_sd = 0.1;
    spec.seed = seed;
    const SimDataset ds = make_dataset(spec);

    SolverConfig config;
    config.epsilon = 0.01;
    config.gamma = 1e-6;
    config.alpha = 0.01;
    config.max_rank = 1;
    config.lambda_floor_rel = 0.01;
    const FitResult fr = fit(ds.xs, ds.ys, config);

    const Standardized s = standardize_dataset(ds.xs, ds.ys);
    double lmax = 0.0;
    for (std::size_t a = 0; a < s.xs[0].size(); ++a)
      for (std::size_t b = 0; b < s.ys[0].size(); ++b) {
        double acc = 0.0;
        for (std::size_t m = 0; m < s.xs.size(); ++m)
          acc += s.xs[m][a] * s.ys[m][b];
        lmax = std::max(lmax, std::abs(acc) / double(s.xs.size()));
      }
    if (fr.trace.rank_lambda0.empty()) {
      ++violations;
      continue;
    }
    worst_l0 = std::max(
        worst_l0, std::abs(fr.trace.rank_lambda0[0] - lmax) / (1.0 + lmax));

    n_records += fr.trace.records.size();
    for (std::size_t r = 1; r < fr.trace.records.size(); ++r) {
      const TraceRecord& prev = fr.trace.records[r - 1];
      const TraceRecord& cur = fr.trace.records[r];
      if (cur.rank != prev.rank) continue;
      if (cur.lambda > prev.lambda) ++violations;
      if (cur.lambda == prev.lambda &&
          cur.objective_j - prev.objective_j >
              -config.gamma + 1e-9 * (1.0 + std::abs(prev.objective_j)))
        ++violations;
    }
  }
  const bool pass = violations == 0 && worst_l0 <= 1e-12;
  return Check{pass, "50 fits, " + std::to_string(n_records) + " records, " +
                         std::to_string(violations) +
                         " path violations, worst lambda0 gap " +
                         num(worst_l0) + " (limit 1e-12)"};
}

// ------------------------------------------------------------- criterion 4

Check criterion_4() {
  std::mt19937_64 rng(4);
  const double alpha = 0.05, epsilon = 0.01;
  std::uniform_real_distribution<double> lam(0.0, 0.2);
  std::uniform_int_distribution<int> quanta(0, 3);
  std::uniform_int_distribution<int> coin(0, 1);

  std::size_t mismatches = 0;
  const int n_trials = 200;
  for (int trial = 0; trial < n_trials; ++trial) {
    const std::size_t m_count = 10;
    const std::vector<DenseTensor> xs = random_samples(Shape{2, 2}, m_count, rng);
    const std::vector<DenseTensor> ts = random_samples(Shape{3}, m_count, rng);
    const std::size_t p = 2;
    std::vector<std::vector<double>> bh;
    for (std::size_t d : {2ULL, 2ULL, 3ULL}) {
      std::vector<double> v(d, 0.0);
      bool any = false;
      for (double& x : v) {
        const int n = quanta(rng);
        if (n > 0) any = true;
        x = (coin(rng) ? 1.0 : -1.0) * double(n) * epsilon;
      }
      if (!any) v[0] = epsilon;
      bh.push_back(std::move(v));
    }
    const double lambda = lam(rng);
    const bool contract = (trial & 2) == 0;
    const Direction dir =
        (trial & 1) == 0 ? Direction::forward : Direction::backward;

    std::vector<ModeStats> stats;
    const std::size_t lo = contract ? 0 : p;
    const std::size_t hi = contract ? p : bh.size();
    for (std::size_t k = lo; k < hi; ++k) {
      if (k < p) {
        const ContractDesign dgn = build_design_contract(xs, bh, k, alpha);
        stats.push_back(stats_from_contract_design(dgn, ts, bh[k]));
      } else {
        const GenerateDesign dgn = build_design_generate(xs, bh, k, alpha);
        stats.push_back(stats_from_generate_design(dgn, ts, k - p, bh[k]));
      }
    }
    const StepChoice got = select_step(stats, bh, lo, epsilon, lambda, dir);

    // Exhaustive rescoring of every admissible move via the full objective.
    const double j0 = objective(bh, p, xs, ts, alpha, lambda).j;
    struct Move {
      std::size_t k, i;
      double delta, dj;
    };
    std::vector<Move> moves;
    for (std::size_t k = lo; k < hi; ++k)
      for (std::size_t i = 0; i < bh[k].size(); ++i) {
        std::vector<double> ds;
        const double b = bh[k][i];
        if (dir == Direction::backward) {
          if (b == 0.0) continue;
          ds.push_back(b > 0.0 ? -epsilon : epsilon);
        } else if (b != 0.0) {
          ds.push_back(b > 0.0 ? epsilon : -epsilon);
        } else {
          ds.push_back(epsilon);
          ds.push_back(-epsilon);
        }
        for (double d : ds) {
          std::vector<std::vector<double>> moved = bh;
          moved[k][i] += d;
          moves.push_back(
              Move{k, i, d, objective(moved, p, xs, ts, alpha, lambda).j - j0});
        }
      }
    if (moves.empty()) {
      if (got.found) ++mismatches;
      continue;
    }
    if (!got.found) {
      ++mismatches;
      continue;
    }
    const Move* best = &moves[0];
    for (const Move& m : moves)
      if (m.dj < best->dj) best = &m;
    const double tol = 1e-12 * (1.0 + std::abs(best->dj));
    const bool same_move =
        got.mode_k == best->k && got.index_i == best->i && got.delta == best->delta;
    if (!same_move) {
      // Accept only a numerically exact tie.
      const Move* chosen = nullptr;
      for (const Move& m : moves)
        if (m.k == got.mode_k && m.i == got.index_i && m.delta == got.delta)
          chosen = &m;
      if (!chosen || chosen->dj > best->dj + tol) ++mismatches;
    }
  }
  return Check{mismatches == 0, std::to_string(n_trials) + " trials, " +
                                    std::to_string(mismatches) + " mismatches"};
}

// --------------------------------------------------- criteria 5 and 6 share

struct ExperimentRep {
  double rel_err = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double model_err = 0.0;
  double baseline_err = 0.0;
};

const std::vector<ExperimentRep>& cubic_experiment() {
  static const std::vector<ExperimentRep> reps = [] {
    std::vector<ExperimentRep> out;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      SimSpec spec;
      spec.predictor_shape = Shape{6, 6, 6};
      spec.response_shape = Shape{3, 3, 3};
      spec.rank = 2;
      spec.sparsity = 0.2;
      spec.n_samples = 400;
      spec.noise_sd = 0.1;
      spec.seed = seed;
      const SimDataset ds = make_dataset(spec);

      SolverConfig config;
      config.epsilon = 0.005;
      config.gamma = 1e-5;
      config.alpha = 0.01;
      config.max_rank = 2;
      config.lambda_floor = 0.003;
      config.refine_passes = 1;
      const FitResult fr = fit(ds.xs, ds.ys, config);

      ExperimentRep rep;
      const double norm = frobenius_norm(compose_full(ds.true_model));
      rep.model_err = estimation_error(ds.true_model, fr.model);
      rep.rel_err = rep.model_err / norm;
      const SupportReport sup = tpr_fpr(ds.true_model, fr.model);
      rep.tpr = sup.tpr_mean;
      rep.fpr = sup.fpr_mean;

      const std::vector<double> grid = default_lambda_grid(ds.xs, ds.ys);
      const SparseOlsResult ols = sparse_ols_fit(ds.xs, ds.ys, grid);
      rep.baseline_err = ols_estimation_error(ols, ds.true_model);
      out.push_back(rep);
    }
    return out;
  }();
  return reps;
}

Check criterion_5() {
  const auto t0 = Clock::now();
  const std::vector<ExperimentRep>& reps = cubic_experiment();
  double tpr = 0.0, fpr = 0.0, err = 0.0;
  for (const ExperimentRep& r : reps) {
    tpr += r.tpr;
    fpr += r.fpr;
    err += r.rel_err;
  }
  tpr /= double(reps.size());
  fpr /= double(reps.size());
  err /= double(reps.size());
  const double secs = seconds_since(t0);
  const bool pass = tpr >= 0.98 && fpr <= 0.05 && err <= 0.15 && secs < 600.0;
  return Check{pass, "10 reps, mean TPR " + num(tpr) +
                         " (need >= 0.98), mean FPR " + num(fpr) +
                         " (need <= 0.05), mean rel err " + num(err) +
                         " (need <= 0.15), " + num(secs) + "s (budget 600s)"};
}

Check criterion_6() {
  const std::vector<ExperimentRep>& reps = cubic_experiment();
  std::size_t wins = 0;
  for (const ExperimentRep& r : reps)
    if (r.model_err < r.baseline_err) ++wins;
  return Check{wins >= 9, std::to_string(wins) + "/10 datasets with lower "
                              "error than the flat lasso (need >= 9)"};
}

// ------------------------------------------------------------- criterion 7

Check criterion_7() {
  const auto t0 = Clock::now();
  double tpr = 0.0, fpr = 0.0;
  const std::size_t n_reps = 5;
  for (std::uint64_t seed = 1; seed <= n_reps; ++seed) {
    SimSpec spec;
    spec.predictor_shape = Shape{6, 6, 6};
    spec.response_shape = Shape{4, 4};
    spec.rank = 3;
    spec.sparsity = 0.5;
    spec.n_samples = 1000;
    spec.noise_sd = 0.1;
    spec.seed = seed;
    const SimDataset ds = make_dataset(spec);

    SolverConfig config;
    config.epsilon = 0.005;
    config.gamma = 1e-5;
    config.alpha = 0.01;
    config.max_rank = 3;
    config.lambda_floor_rel = 0.003;
    config.refine_passes = 1;
    const FitResult fr = fit(ds.xs, ds.ys, config);

    const SupportReport sup = tpr_fpr(ds.true_model, fr.model);
    tpr += sup.tpr_mean;
    fpr += sup.fpr_mean;
  }
  tpr /= double(n_reps);
  fpr /= double(n_reps);
  const double secs = seconds_since(t0);
  const bool pass = tpr >= 0.95 && fpr <= 0.1 && secs < 300.0;
  return Check{pass, "5 reps, mean TPR " + num(tpr) +
                         " (need >= 0.95), mean FPR " + num(fpr) +
                         " (need <= 0.1), " + num(secs) + "s (budget 300s)"};
}

// ------------------------------------------------------------- criterion 8

Check criterion_8() {
  const auto t0 = Clock::now();
  const std::vector<double> epsilons{0.01, 0.05, 0.1, 0.15, 0.5, 1.0};
  const std::size_t n_reps = 5;

  std::vector<SimDataset> datasets;
  for (std::uint64_t seed = 1; seed <= n_reps; ++seed) {
    SimSpec spec;
    spec.predictor_shape = Shape{8, 8};
    spec.response_shape = Shape{4, 4};
    spec.rank = 2;
    spec.sparsity = 0.5;
    spec.n_samples = 500;
    spec.noise_sd = 0.1;
    spec.seed = seed;
    datasets.push_back(make_dataset(spec));
  }

  std::vector<double> mean_err, mean_cov;
  for (double eps : epsilons) {
    double err = 0.0, cov = 0.0;
    for (const SimDataset& ds : datasets) {
      SolverConfig config;
      config.epsilon = eps;
      config.gamma = 1e-5;
      config.alpha = 0.01;
      config.max_rank = 2;
      config.lambda_floor_rel = 0.02;
      config.refine_passes = 1;
      const FitResult fr = fit(ds.xs, ds.ys, config);
      err += estimation_error(ds.true_model, fr.model) /
             frobenius_norm(compose_full(ds.true_model));
      // Sub-threshold dust does not spoil a recovered zero: coverage judges
      // cells against a tenth of a factor's unit l1 mass.
      cov += sparsity_coverage(ds.true_model, fr.model, 0.1);
    }
    mean_err.push_back(err / double(n_reps));
    mean_cov.push_back(cov / double(n_reps));
  }

  const double rho = spearman(epsilons, mean_err);
  std::size_t inversions = 0;
  for (std::size_t i = 1; i < mean_cov.size(); ++i)
    if (mean_cov[i] > mean_cov[i - 1] + 1e-12) ++inversions;

  const double secs = seconds_since(t0);
  const bool pass = rho >= 0.7 && inversions <= 1 && secs < 600.0;
  std::string covs;
  for (double c : mean_cov) covs += (covs.empty() ? "" : " ") + num(c);
  return Check{pass, "6 step sizes x 5 reps, error Spearman " + num(rho) +
                         " (need >= 0.7), coverage [" + covs + "], " +
                         std::to_string(inversions) +
                         " inversions (allow <= 1), " + num(secs) +
                         "s (budget 600s)"};
}

// ------------------------------------------------------------- criterion 9

Check criterion_9() {
  double worst = 0.0;
  std::size_t divergences = 0;
  const std::vector<std::pair<Shape, Shape>> shapes{
      {Shape{4, 3}, Shape{3, 2}},
      {Shape{3, 3, 2}, Shape{2, 2}},
      {Shape{5, 4}, Shape{4}},
      {Shape{4, 4}, Shape{3, 3}},
  };
  for (std::size_t inst = 0; inst < 20; ++inst) {
    SimSpec spec;
    spec.predictor_shape = shapes[inst % shapes.size()].first;
    spec.response_shape = shapes[inst % shapes.size()].second;
    spec.rank = 1;
    spec.sparsity = 0.2;
    spec.n_samples = 60;
    spec.noise_sd = 0.1;
    spec.seed = 31 + inst;
    const SimDataset ds = make_dataset(spec);
    const Standardized s = standardize_dataset(ds.xs, ds.ys);

    SolverConfig base;
    base.epsilon = 0.01;
    base.gamma = 1e-6;
    base.alpha = 0.01;
    base.lambda_floor_rel = 0.05;
    SolverConfig incr = base;
    incr.incremental_z = true;

    RankFitter a(s.xs, s.ys, base, nullptr, 0);
    RankFitter b(s.xs, s.ys, incr, nullptr, 0);
    a.initialize_rank();
    b.initialize_rank();

    std::size_t steps = 0;
    while (true) {
      const bool ma = a.iterate();
      const bool mb = b.iterate();
      if (ma != mb) {
        ++divergences;
        break;
      }
      for (std::size_t k = 0; k < a.beta_hat().size(); ++k)
        for (std::size_t i = 0; i < a.beta_hat()[k].size(); ++i)
          worst = std::max(
              worst, std::abs(a.beta_hat()[k][i] - b.beta_hat()[k][i]));
      if (!ma || ++steps > 5000) break;
    }
    worst = std::max(worst, std::abs(a.lambda() - b.lambda()));
  }
  const bool pass = divergences == 0 && worst <= 1e-8;
  return Check{pass, "20 fits, " + std::to_string(divergences) +
                         " diverged, worst coordinate gap " + num(worst) +
                         " (limit 1e-8)"};
}

// ------------------------------------------------------------ criterion 10

Check criterion_10() {
  const fs::path dir = fs::temp_directory_path() / "dst2r_acceptance_bench";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path manifest = dir / "manifest.json";
  {
    std::ofstream os(manifest);
    os << R"({
  "scenario": "2d2d-sweep",
  "scale": 0.25,
  "n_samples": 60,
  "rank": 1,
  "repetitions": 2,
  "seed": 3,
  "solver": {"epsilon": 0.01, "gamma": 1e-6, "alpha": 0.01,
             "lambda_floor_rel": 0.05}
})";
  }
  auto run_once = [&](const fs::path& out) {
    const std::string cmd = std::string(DST2R_BIN) + " bench --manifest " +
                            manifest.string() + " --out " + out.string() +
                            " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) && WEXITSTATUS(status) == 0;
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream buf;
    buf << is.rdbuf();
    return buf.str();
  };
  const fs::path csv_a = dir / "a.csv", csv_b = dir / "b.csv";
  const bool ok_a = run_once(csv_a), ok_b = run_once(csv_b);
  const std::string a = slurp(csv_a), b = slurp(csv_b);
  fs::remove_all(dir);
  if (!ok_a || !ok_b)
    return Check{false, "bench invocation failed"};
  if (a.empty())
    return Check{false, "bench produced an empty CSV"};
  const bool same = a == b;
  return Check{same, std::string("two runs, CSVs ") +
                         (same ? "byte-identical" : "DIFFER") + " (" +
                         std::to_string(a.size()) + " bytes)"};
}

struct Criterion {
  const char* name;
  Check (*run)();
};

const Criterion kCriteria[] = {
    {"unit-rank prediction matches dense contraction", criterion_1},
    {"tensor kernels match index-loop oracles", criterion_2},
    {"homotopy path laws hold on traced fits", criterion_3},
    {"step selection is exhaustively optimal", criterion_4},
    {"cubic recovery experiment hits its targets", criterion_5},
    {"lower error than the flat lasso baseline", criterion_6},
    {"mixed-order recovery experiment hits its targets", criterion_7},
    {"coarser steps cost accuracy monotonically", criterion_8},
    {"incremental designs track full recomputation", criterion_9},
    {"bench reruns are byte-identical", criterion_10},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  if (argc > 1) {
    const int n = std::atoi(argv[1]);
    if (n < 1 || n > 10) {
      std::fprintf(stderr, "usage: %s [criterion 1..10]\n", argv[0]);
      return 2;
    }
    which.push_back(n);
  } else {
    for (int n = 1; n <= 10; ++n) which.push_back(n);
  }

  bool all_pass = true;
  for (int n : which) {
    const Criterion& c = kCriteria[n - 1];
    const auto t0 = Clock::now();
    Check result;
    try {
      result = c.run();
    } catch (const std::exception& e) {
      result = Check{false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %2d  %s: %s [%.1fs]\n", result.pass ? "PASS" : "FAIL", n,
                c.name, result.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    if (!result.pass) all_pass = false;
  }
  return all_pass ? 0 : 1;
}
