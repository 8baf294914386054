#include "dst2r/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dst2r/errors.hpp"

namespace dst2r {

namespace {

DenseTensor compose_component(const UnitRankComponent& c) {
  const DenseTensor bp = compose_part(c.contraction_factors, c.w_p);
  const DenseTensor bq = compose_part(c.generation_factors, c.w_q);
  return outer_product(bp, bq);
}

void check_same_spaces(const Dst2rModel& a, const Dst2rModel& b) {
  if (a.predictor_shape != b.predictor_shape ||
      a.response_shape != b.response_shape)
    throw shape_error("evaluation: models live on different tensor spaces");
}

const std::vector<double>& factor_entries(const UnitRankComponent& c,
                                          std::size_t mode, std::size_t p) {
  return mode < p ? c.contraction_factors[mode].beta
                  : c.generation_factors[mode - p].beta;
}

}  // namespace

double estimation_error(const Dst2rModel& truth, const Dst2rModel& fitted) {
  check_same_spaces(truth, fitted);
  const DenseTensor bt = compose_full(truth);
  const DenseTensor bf = compose_full(fitted);
  double acc = 0.0;
  for (std::size_t i = 0; i < bt.size(); ++i) {
    const double d = bt[i] - bf[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

std::vector<std::size_t> match_components(const Dst2rModel& truth,
                                          const Dst2rModel& fitted) {
  check_same_spaces(truth, fitted);
  const std::size_t r = truth.rank();
  if (r != fitted.rank())
    throw shape_error("match_components: models must share the same rank");

  std::vector<DenseTensor> ct, cf;
  std::vector<double> nt, nf;
  for (const UnitRankComponent& c : truth.components) {
    ct.push_back(compose_component(c));
    nt.push_back(frobenius_norm(ct.back()));
  }
  for (const UnitRankComponent& c : fitted.components) {
    cf.push_back(compose_component(c));
    nf.push_back(frobenius_norm(cf.back()));
  }

  std::vector<std::size_t> result(r, 0);
  std::vector<bool> t_used(r, false), f_used(r, false);
  for (std::size_t step = 0; step < r; ++step) {
    double best = -1.0;
    std::size_t bt = 0, bf = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (t_used[i]) continue;
      for (std::size_t j = 0; j < r; ++j) {
        if (f_used[j]) continue;
        double cos = 0.0;
        if (nt[i] > 0.0 && nf[j] > 0.0) {
          double ip = 0.0;
          for (std::size_t e = 0; e < ct[i].size(); ++e)
            ip += ct[i][e] * cf[j][e];
          cos = std::abs(ip) / (nt[i] * nf[j]);
        }
        if (cos > best) {
          best = cos;
          bt = i;
          bf = j;
        }
      }
    }
    t_used[bt] = true;
    f_used[bf] = true;
    result[bt] = bf;
  }
  return result;
}

SupportReport tpr_fpr(const Dst2rModel& truth, const Dst2rModel& fitted,
                      double zero_threshold) {
  const std::vector<std::size_t> perm = match_components(truth, fitted);
  const std::size_t p = truth.predictor_shape.order();
  const std::size_t n_modes = p + truth.response_shape.order();
  const std::size_t r = truth.rank();

  SupportReport rep;
  for (std::size_t j = 0; j < n_modes; ++j) {
    std::size_t tp = 0, pos = 0, fp = 0, neg = 0;
    for (std::size_t ri = 0; ri < r; ++ri) {
      const std::vector<double>& bt =
          factor_entries(truth.components[ri], j, p);
      const std::vector<double>& bf =
          factor_entries(fitted.components[perm[ri]], j, p);
      for (std::size_t i = 0; i < bt.size(); ++i) {
        const bool t_nz = std::abs(bt[i]) > zero_threshold;
        const bool f_nz = std::abs(bf[i]) > zero_threshold;
        if (t_nz) {
          ++pos;
          if (f_nz) ++tp;
        } else {
          ++neg;
          if (f_nz) ++fp;
        }
      }
    }
    rep.tpr_per_mode.push_back(pos ? double(tp) / double(pos) : 1.0);
    rep.fpr_per_mode.push_back(neg ? double(fp) / double(neg) : 0.0);
  }
  for (double v : rep.tpr_per_mode) rep.tpr_sum += v;
  for (double v : rep.fpr_per_mode) rep.fpr_sum += v;
  rep.tpr_mean = rep.tpr_sum / double(n_modes);
  rep.fpr_mean = rep.fpr_sum / double(n_modes);
  return rep;
}

double sparsity_coverage(const Dst2rModel& truth, const Dst2rModel& fitted,
                         double zero_threshold) {
  const std::vector<std::size_t> perm = match_components(truth, fitted);
  const std::size_t p = truth.predictor_shape.order();
  const std::size_t n_modes = p + truth.response_shape.order();
  std::size_t zz = 0, neg = 0;
  for (std::size_t j = 0; j < n_modes; ++j)
    for (std::size_t ri = 0; ri < truth.rank(); ++ri) {
      const std::vector<double>& bt =
          factor_entries(truth.components[ri], j, p);
      const std::vector<double>& bf =
          factor_entries(fitted.components[perm[ri]], j, p);
      for (std::size_t i = 0; i < bt.size(); ++i) {
        if (std::abs(bt[i]) > zero_threshold) continue;
        ++neg;
        if (std::abs(bf[i]) <= zero_threshold) ++zz;
      }
    }
  return neg ? double(zz) / double(neg) : 1.0;
}

namespace {

double soft_threshold(double v, double lambda) {
  if (v > lambda) return v - lambda;
  if (v < -lambda) return v + lambda;
  return 0.0;
}

// Cyclic coordinate descent on the gram form of
//   (1/(2n)) * ||y - X b||^2 + lambda * ||b||_1.
// gram = X^T X / n, cross = X^T y / n. Converges when no coordinate moves
// more than tol in one sweep.
void lasso_gram(const Matrix& gram, const std::vector<double>& cross,
                double lambda, std::vector<double>& b, double tol = 1e-8) {
  const std::size_t n = cross.size();
  for (std::size_t sweep = 0; sweep < 100000; ++sweep) {
    double max_delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double gii = gram.at(i, i);
      if (gii <= 0.0) {
        b[i] = 0.0;
        continue;
      }
      double rho = cross[i] + gii * b[i];
      for (std::size_t j = 0; j < n; ++j) rho -= gram.at(i, j) * b[j];
      const double bn = soft_threshold(rho, lambda) / gii;
      max_delta = std::max(max_delta, std::abs(bn - b[i]));
      b[i] = bn;
    }
    if (max_delta < tol) return;
  }
}

struct VecData {
  std::vector<std::vector<double>> x;  // standardized rows, sample major
  std::vector<std::vector<double>> y;  // centered rows
  std::vector<double> x_sd;            // 0 marks a constant column
  std::size_t n_x = 0, n_y = 0;
};

VecData vectorize_standardize(const std::vector<DenseTensor>& xs,
                              const std::vector<DenseTensor>& ys) {
  if (xs.empty() || xs.size() != ys.size())
    throw shape_error("sparse_ols_fit: need matching nonempty samples");
  const std::size_t m_count = xs.size();
  VecData d;
  d.n_x = xs[0].size();
  d.n_y = ys[0].size();
  for (std::size_t m = 0; m < m_count; ++m) {
    if (xs[m].size() != d.n_x || ys[m].size() != d.n_y)
      throw shape_error("sparse_ols_fit: inconsistent sample shapes");
    d.x.push_back(xs[m].data());
    d.y.push_back(ys[m].data());
  }
  std::vector<double> x_mean(d.n_x, 0.0), y_mean(d.n_y, 0.0);
  for (const std::vector<double>& row : d.x)
    for (std::size_t i = 0; i < d.n_x; ++i) x_mean[i] += row[i];
  for (double& v : x_mean) v /= double(m_count);
  for (const std::vector<double>& row : d.y)
    for (std::size_t i = 0; i < d.n_y; ++i) y_mean[i] += row[i];
  for (double& v : y_mean) v /= double(m_count);

  d.x_sd.assign(d.n_x, 0.0);
  for (const std::vector<double>& row : d.x)
    for (std::size_t i = 0; i < d.n_x; ++i) {
      const double c = row[i] - x_mean[i];
      d.x_sd[i] += c * c;
    }
  for (double& v : d.x_sd) v = std::sqrt(v / double(m_count));

  for (std::vector<double>& row : d.x)
    for (std::size_t i = 0; i < d.n_x; ++i) {
      row[i] -= x_mean[i];
      if (d.x_sd[i] > 0.0) row[i] /= d.x_sd[i];
    }
  for (std::vector<double>& row : d.y)
    for (std::size_t i = 0; i < d.n_y; ++i) row[i] -= y_mean[i];
  return d;
}

Matrix gram_of(const std::vector<std::vector<double>>& rows, std::size_t from,
               std::size_t to, std::size_t n_x) {
  Matrix g(n_x, n_x);
  for (std::size_t m = from; m < to; ++m) {
    const std::vector<double>& r = rows[m];
    for (std::size_t i = 0; i < n_x; ++i) {
      if (r[i] == 0.0) continue;
      for (std::size_t j = i; j < n_x; ++j) g.at(i, j) += r[i] * r[j];
    }
  }
  const double inv = 1.0 / double(to - from);
  for (std::size_t i = 0; i < n_x; ++i)
    for (std::size_t j = i; j < n_x; ++j) {
      g.at(i, j) *= inv;
      g.at(j, i) = g.at(i, j);
    }
  return g;
}

}  // namespace

SparseOlsResult sparse_ols_fit(const std::vector<DenseTensor>& xs,
                               const std::vector<DenseTensor>& ys,
                               const std::vector<double>& lambda_grid) {
  if (lambda_grid.empty())
    throw std::invalid_argument("sparse_ols_fit: empty lambda grid");
  VecData d = vectorize_standardize(xs, ys);
  const std::size_t m_count = d.x.size();
  std::vector<double> grid = lambda_grid;
  std::sort(grid.begin(), grid.end(), std::greater<double>());

  const std::size_t n_val = m_count / 5;
  const std::size_t n_train = m_count - n_val;

  const Matrix g_full = gram_of(d.x, 0, m_count, d.n_x);
  const Matrix g_train =
      n_val > 0 ? gram_of(d.x, 0, n_train, d.n_x) : g_full;

  SparseOlsResult out{Matrix(d.n_x, d.n_y),
                      std::vector<double>(d.n_y, grid.front())};

  std::vector<double> cross_train(d.n_x), cross_full(d.n_x);
  for (std::size_t qi = 0; qi < d.n_y; ++qi) {
    std::fill(cross_train.begin(), cross_train.end(), 0.0);
    std::fill(cross_full.begin(), cross_full.end(), 0.0);
    for (std::size_t m = 0; m < m_count; ++m) {
      const double yv = d.y[m][qi];
      if (yv == 0.0) continue;
      for (std::size_t i = 0; i < d.n_x; ++i) {
        const double v = d.x[m][i] * yv;
        cross_full[i] += v;
        if (m < n_train) cross_train[i] += v;
      }
    }
    for (double& v : cross_full) v /= double(m_count);
    for (double& v : cross_train) v /= double(n_train);

    double best_lambda = grid.front();
    if (n_val > 0 && grid.size() > 1) {
      double best_mse = std::numeric_limits<double>::infinity();
      std::vector<double> b(d.n_x, 0.0);
      for (double lambda : grid) {
        lasso_gram(g_train, cross_train, lambda, b);
        double mse = 0.0;
        for (std::size_t m = n_train; m < m_count; ++m) {
          double pred = 0.0;
          for (std::size_t i = 0; i < d.n_x; ++i)
            if (b[i] != 0.0) pred += d.x[m][i] * b[i];
          const double e = d.y[m][qi] - pred;
          mse += e * e;
        }
        mse /= double(n_val);
        if (mse < best_mse) {
          best_mse = mse;
          best_lambda = lambda;
        }
      }
    } else {
      best_lambda = grid.back();
    }
    out.chosen_lambda[qi] = best_lambda;

    std::vector<double> b(d.n_x, 0.0);
    lasso_gram(g_full, cross_full, best_lambda, b);
    for (std::size_t i = 0; i < d.n_x; ++i)
      out.coef.at(i, qi) = d.x_sd[i] > 0.0 ? b[i] / d.x_sd[i] : 0.0;
  }
  return out;
}

std::vector<double> default_lambda_grid(const std::vector<DenseTensor>& xs,
                                        const std::vector<DenseTensor>& ys,
                                        std::size_t n_values, double ratio) {
  if (n_values == 0)
    throw std::invalid_argument("default_lambda_grid: need n_values >= 1");
  if (!(ratio > 0.0) || !(ratio <= 1.0))
    throw std::invalid_argument("default_lambda_grid: ratio must be in (0, 1]");
  VecData d = vectorize_standardize(xs, ys);
  const std::size_t m_count = d.x.size();
  double lmax = 0.0;
  for (std::size_t qi = 0; qi < d.n_y; ++qi)
    for (std::size_t i = 0; i < d.n_x; ++i) {
      double acc = 0.0;
      for (std::size_t m = 0; m < m_count; ++m) acc += d.x[m][i] * d.y[m][qi];
      lmax = std::max(lmax, std::abs(acc) / double(m_count));
    }
  if (lmax == 0.0) lmax = 1.0;
  std::vector<double> grid;
  if (n_values == 1) {
    grid.push_back(lmax);
    return grid;
  }
  for (std::size_t k = 0; k < n_values; ++k) {
    const double t = double(k) / double(n_values - 1);
    grid.push_back(lmax * std::pow(ratio, t));
  }
  return grid;
}

double ols_estimation_error(const SparseOlsResult& fit,
                            const Dst2rModel& truth) {
  const DenseTensor b = compose_full(truth);
  const std::size_t n_x = truth.predictor_shape.num_elements();
  const std::size_t n_y = truth.response_shape.num_elements();
  if (fit.coef.rows() != n_x || fit.coef.cols() != n_y)
    throw shape_error("ols_estimation_error: coefficient matrix shape mismatch");
  double acc = 0.0;
  for (std::size_t qi = 0; qi < n_y; ++qi)
    for (std::size_t i = 0; i < n_x; ++i) {
      const double dv = fit.coef.at(i, qi) - b[i + n_x * qi];
      acc += dv * dv;
    }
  return std::sqrt(acc);
}

EntrySupport ols_entry_support(const SparseOlsResult& fit,
                               const Dst2rModel& truth,
                               double zero_threshold) {
  const DenseTensor b = compose_full(truth);
  const std::size_t n_x = truth.predictor_shape.num_elements();
  const std::size_t n_y = truth.response_shape.num_elements();
  if (fit.coef.rows() != n_x || fit.coef.cols() != n_y)
    throw shape_error("ols_entry_support: coefficient matrix shape mismatch");
  std::size_t tp = 0, pos = 0, fp = 0, neg = 0;
  for (std::size_t qi = 0; qi < n_y; ++qi)
    for (std::size_t i = 0; i < n_x; ++i) {
      const bool t_nz = std::abs(b[i + n_x * qi]) > zero_threshold;
      const bool f_nz = std::abs(fit.coef.at(i, qi)) > zero_threshold;
      if (t_nz) {
        ++pos;
        if (f_nz) ++tp;
      } else {
        ++neg;
        if (f_nz) ++fp;
      }
    }
  EntrySupport s;
  s.tpr = pos ? double(tp) / double(pos) : 1.0;
  s.fpr = neg ? double(fp) / double(neg) : 0.0;
  return s;
}

}  // namespace dst2r
