#include "dst2r/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "json.hpp"

namespace dst2r {

namespace {

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double l1_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += std::abs(x);
  return acc;
}

double l2sq_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

// Contracts every mode of (data, dims) except `keep` against betas[j],
// highest mode first so the surviving positions never shift. betas is
// indexed by the original mode number; betas[keep] is ignored.
void contract_keep_one(const double* data, const std::vector<std::size_t>& dims,
                       const std::vector<const double*>& betas,
                       std::size_t keep, std::vector<double>& buf_a,
                       std::vector<double>& buf_b, std::vector<double>& out) {
  const double* cur = data;
  std::vector<double>* write = &buf_a;
  std::vector<double>* spare = &buf_b;
  for (std::size_t jj = dims.size(); jj-- > 0;) {
    if (jj == keep) continue;
    std::size_t inner = 1;
    for (std::size_t m = 0; m < jj; ++m) inner *= dims[m];
    const std::size_t dn = dims[jj];
    const std::size_t outer = (keep > jj) ? dims[keep] : 1;
    write->assign(inner * outer, 0.0);
    const double* bet = betas[jj];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < dn; ++i) {
        const double f = bet[i];
        if (f == 0.0) continue;
        const double* src = cur + (o * dn + i) * inner;
        double* dst = write->data() + o * inner;
        for (std::size_t in = 0; in < inner; ++in) dst[in] += f * src[in];
      }
    }
    cur = write->data();
    std::swap(write, spare);
  }
  out.assign(cur, cur + dims[keep]);
}

double contract_full(const double* data, const std::vector<std::size_t>& dims,
                     const std::vector<const double*>& betas,
                     std::vector<double>& buf_a, std::vector<double>& buf_b,
                     std::vector<double>& buf_t) {
  contract_keep_one(data, dims, betas, 0, buf_a, buf_b, buf_t);
  double acc = 0.0;
  for (std::size_t i = 0; i < dims[0]; ++i) acc += buf_t[i] * betas[0][i];
  return acc;
}

// Copies the sub-tensor with mode `mode` fixed at `idx`.
void slice_mode(const double* data, const std::vector<std::size_t>& dims,
                std::size_t mode, std::size_t idx, std::vector<double>& out) {
  std::size_t inner = 1;
  for (std::size_t m = 0; m < mode; ++m) inner *= dims[m];
  const std::size_t dn = dims[mode];
  std::size_t outer = 1;
  for (std::size_t m = mode + 1; m < dims.size(); ++m) outer *= dims[m];
  out.resize(inner * outer);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = data + (o * dn + idx) * inner;
    std::copy(src, src + inner, out.data() + o * inner);
  }
}

constexpr std::size_t kNoSkip = static_cast<std::size_t>(-1);

// Vectorized outer product of beta_hat[from..to), lowest mode fastest,
// optionally skipping one mode. An empty mode list composes to the scalar 1.
void compose_vec(const std::vector<std::vector<double>>& beta_hat,
                 std::size_t from, std::size_t to, std::size_t skip,
                 std::vector<double>& out) {
  out.assign(1, 1.0);
  for (std::size_t j = from; j < to; ++j) {
    if (j == skip) continue;
    const std::vector<double>& b = beta_hat[j];
    std::vector<double> next(out.size() * b.size());
    for (std::size_t i = 0; i < b.size(); ++i)
      for (std::size_t t = 0; t < out.size(); ++t)
        next[t + out.size() * i] = out[t] * b[i];
    out.swap(next);
  }
}

}  // namespace

void SolverConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw std::invalid_argument("SolverConfig: epsilon must be positive");
  if (!(gamma >= 0.0))  // +inf is allowed (backward steps disabled)
    throw std::invalid_argument("SolverConfig: gamma must be nonnegative");
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("SolverConfig: alpha must be nonnegative");
  if (max_iters_per_rank == 0)
    throw std::invalid_argument("SolverConfig: max_iters_per_rank must be >= 1");
  if (!(lambda_floor >= 0.0) || !std::isfinite(lambda_floor))
    throw std::invalid_argument("SolverConfig: lambda_floor must be nonnegative");
  if (!(lambda_floor_rel >= 0.0) || !(lambda_floor_rel < 1.0))
    throw std::invalid_argument(
        "SolverConfig: lambda_floor_rel must be in [0, 1)");
  if (!(prune_quanta >= 0.0) || !std::isfinite(prune_quanta))
    throw std::invalid_argument("SolverConfig: prune_quanta must be nonnegative");
}

SolverConfig solver_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("solver config: ") + e.what());
  }
  if (!j.is_object())
    throw std::invalid_argument("solver config: expected a JSON object");
  SolverConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "epsilon")
        c.epsilon = value.get<double>();
      else if (key == "gamma")
        c.gamma = value.get<double>();
      else if (key == "alpha")
        c.alpha = value.get<double>();
      else if (key == "max_rank")
        c.max_rank = value.get<std::size_t>();
      else if (key == "max_iters_per_rank")
        c.max_iters_per_rank = value.get<std::size_t>();
      else if (key == "lambda_floor")
        c.lambda_floor = value.get<double>();
      else if (key == "lambda_floor_rel")
        c.lambda_floor_rel = value.get<double>();
      else if (key == "refine_passes")
        c.refine_passes = value.get<std::size_t>();
      else if (key == "prune_quanta")
        c.prune_quanta = value.get<double>();
      else if (key == "seed")
        c.seed = value.get<std::uint64_t>();
      else if (key == "incremental_z")
        c.incremental_z = value.get<bool>();
      else
        throw std::invalid_argument("solver config: unknown field '" + key +
                                    "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("solver config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string solver_config_to_json(const SolverConfig& config) {
  nlohmann::json j;
  j["epsilon"] = config.epsilon;
  j["gamma"] = config.gamma;
  j["alpha"] = config.alpha;
  j["max_rank"] = config.max_rank;
  j["max_iters_per_rank"] = config.max_iters_per_rank;
  j["lambda_floor"] = config.lambda_floor;
  j["lambda_floor_rel"] = config.lambda_floor_rel;
  j["refine_passes"] = config.refine_passes;
  j["prune_quanta"] = config.prune_quanta;
  j["seed"] = config.seed;
  j["incremental_z"] = config.incremental_z;
  return j.dump(2) + "\n";
}

void FitTrace::write_csv(std::ostream& os) const {
  os << "iteration,lambda,J,stage,k,i_k,s\n";
  for (const TraceRecord& r : records) {
    const char* stage = nullptr;
    if (r.stage == Stage::contract)
      stage = r.direction == Direction::forward ? "contract-forward"
                                                : "contract-backward";
    else
      stage = r.direction == Direction::forward ? "generate-forward"
                                                : "generate-backward";
    os << r.iteration << ',' << fmt_g17(r.lambda) << ','
       << fmt_g17(r.objective_j) << ',' << stage << ',' << r.mode_k << ','
       << r.index_i << ',' << fmt_g17(r.step_s) << '\n';
  }
}

Standardized standardize_dataset(const std::vector<DenseTensor>& xs,
                                 const std::vector<DenseTensor>& ys) {
  if (xs.empty() || xs.size() != ys.size())
    throw shape_error("standardize_dataset: need matching nonempty samples");
  const Shape& px = xs[0].shape();
  const Shape& py = ys[0].shape();
  const std::size_t m_count = xs.size();
  for (std::size_t m = 0; m < m_count; ++m) {
    if (xs[m].shape() != px || ys[m].shape() != py)
      throw shape_error("standardize_dataset: inconsistent sample shapes");
    for (double v : xs[m].data())
      if (!std::isfinite(v))
        throw numeric_error("standardize_dataset: non-finite predictor entry");
    for (double v : ys[m].data())
      if (!std::isfinite(v))
        throw numeric_error("standardize_dataset: non-finite response entry");
  }

  DenseTensor x_mean(px), y_mean(py);
  for (const DenseTensor& x : xs)
    for (std::size_t i = 0; i < x.size(); ++i) x_mean[i] += x[i];
  for (std::size_t i = 0; i < x_mean.size(); ++i) x_mean[i] /= double(m_count);
  for (const DenseTensor& y : ys)
    for (std::size_t i = 0; i < y.size(); ++i) y_mean[i] += y[i];
  for (std::size_t i = 0; i < y_mean.size(); ++i) y_mean[i] /= double(m_count);

  double var_sum = 0.0;
  for (const DenseTensor& x : xs)
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - x_mean[i];
      var_sum += d * d;
    }
  double x_scale =
      std::sqrt(var_sum / (double(m_count) * double(x_mean.size())));
  if (x_scale == 0.0) x_scale = 1.0;

  Standardized out{{}, {}, std::move(x_mean), std::move(y_mean), x_scale};
  out.xs.reserve(m_count);
  out.ys.reserve(m_count);
  for (const DenseTensor& x : xs) {
    DenseTensor t(px);
    for (std::size_t i = 0; i < t.size(); ++i)
      t[i] = (x[i] - out.x_mean[i]) / x_scale;
    out.xs.push_back(std::move(t));
  }
  for (const DenseTensor& y : ys) {
    DenseTensor t(py);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = y[i] - out.y_mean[i];
    out.ys.push_back(std::move(t));
  }
  return out;
}

InitState initialize(const std::vector<DenseTensor>& xs,
                     const std::vector<DenseTensor>& ys, double epsilon) {
  if (xs.empty() || xs.size() != ys.size())
    throw shape_error("initialize: need matching nonempty samples");
  const std::size_t m_count = xs.size();
  const std::size_t np = xs[0].size();
  const std::size_t nq = ys[0].size();

  // Stacked cross-correlation screen, one accumulator per cell pair.
  double best_abs = -1.0;
  double best_signed = 0.0;
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < nq; ++j) {
      double acc = 0.0;
      for (std::size_t m = 0; m < m_count; ++m)
        acc += xs[m][i] * ys[m][j];
      if (std::abs(acc) > best_abs) {
        best_abs = std::abs(acc);
        best_signed = acc;
        bi = i;
        bj = j;
      }
    }
  }
  const double lambda0 = best_abs / double(m_count);
  const double sign = best_signed < 0.0 ? -1.0 : 1.0;

  const std::vector<std::size_t> pidx = multi_index(xs[0].shape(), bi);
  const std::vector<std::size_t> qidx = multi_index(ys[0].shape(), bj);
  const std::size_t p = xs[0].order();
  const std::size_t q = ys[0].order();

  std::vector<std::vector<double>> beta_hat(p + q);
  for (std::size_t k = 0; k < p; ++k) {
    beta_hat[k].assign(xs[0].shape().dims()[k], 0.0);
    beta_hat[k][pidx[k]] = (k == 0) ? sign * epsilon : 1.0;
  }
  for (std::size_t k = 0; k < q; ++k) {
    beta_hat[p + k].assign(ys[0].shape().dims()[k], 0.0);
    // The sign rides on mode 0 alone; a second signed mode would cancel it
    // in the composed tensor.
    beta_hat[p + k][qidx[k]] = 1.0;
  }
  return InitState{lambda0, std::move(beta_hat)};
}

ObjectiveParts objective(const std::vector<std::vector<double>>& beta_hat,
                         std::size_t p, const std::vector<DenseTensor>& xs,
                         const std::vector<DenseTensor>& targets, double alpha,
                         double lambda) {
  if (xs.empty() || xs.size() != targets.size())
    throw shape_error("objective: need matching nonempty samples");
  if (p == 0 || p >= beta_hat.size())
    throw shape_error("objective: invalid contraction mode count");
  const std::size_t m_count = xs.size();
  const std::vector<std::size_t>& pdims = xs[0].shape().dims();

  std::vector<const double*> betas(p);
  for (std::size_t k = 0; k < p; ++k) betas[k] = beta_hat[k].data();
  std::vector<double> bq;
  compose_vec(beta_hat, p, beta_hat.size(), kNoSkip, bq);

  std::vector<double> buf_a, buf_b, buf_t;
  double loss = 0.0;
  for (std::size_t m = 0; m < m_count; ++m) {
    const double z =
        contract_full(xs[m].data().data(), pdims, betas, buf_a, buf_b, buf_t);
    const std::vector<double>& t = targets[m].data();
    if (t.size() != bq.size())
      throw shape_error("objective: target size mismatch");
    for (std::size_t c = 0; c < t.size(); ++c) {
      const double r = t[c] - z * bq[c];
      loss += r * r;
    }
  }
  loss /= 2.0 * double(m_count);

  double ridge = 0.5 * alpha;
  double penalty = 1.0;
  for (const std::vector<double>& b : beta_hat) {
    ridge *= l2sq_of(b);
    penalty *= l1_of(b);
  }
  ObjectiveParts out;
  out.loss = loss + ridge;
  out.penalty = penalty;
  out.j = out.loss + lambda * penalty;
  return out;
}

ContractDesign build_design_contract(
    const std::vector<DenseTensor>& xs,
    const std::vector<std::vector<double>>& beta_hat, std::size_t k,
    double alpha) {
  if (xs.empty()) throw shape_error("build_design_contract: no samples");
  const std::size_t p = xs[0].order();
  if (k >= p)
    throw shape_error("build_design_contract: k is not a contraction mode");
  const std::vector<std::size_t>& pdims = xs[0].shape().dims();
  const std::size_t dk = pdims[k];

  std::vector<double> bq;
  compose_vec(beta_hat, p, beta_hat.size(), kNoSkip, bq);
  const std::size_t nq = bq.size();

  double sigma = 1.0;
  for (std::size_t l = 0; l < beta_hat.size(); ++l)
    if (l != k) sigma *= l2sq_of(beta_hat[l]);
  const double ridge = std::sqrt(alpha * sigma);

  std::vector<const double*> betas(p);
  for (std::size_t l = 0; l < p; ++l) betas[l] = beta_hat[l].data();

  ContractDesign out;
  out.sigma = sigma;
  std::vector<double> buf_a, buf_b, t;
  for (const DenseTensor& x : xs) {
    contract_keep_one(x.data().data(), pdims, betas, k, buf_a, buf_b, t);
    Matrix z(dk, nq + dk);
    for (std::size_t j = 0; j < nq; ++j)
      for (std::size_t i = 0; i < dk; ++i) z.at(i, j) = t[i] * bq[j];
    for (std::size_t i = 0; i < dk; ++i) z.at(i, nq + i) = ridge;
    out.z_hat.push_back(std::move(z));
  }
  return out;
}

GenerateDesign build_design_generate(
    const std::vector<DenseTensor>& xs,
    const std::vector<std::vector<double>>& beta_hat, std::size_t k,
    double alpha) {
  if (xs.empty()) throw shape_error("build_design_generate: no samples");
  const std::size_t p = xs[0].order();
  if (k < p || k >= beta_hat.size())
    throw shape_error("build_design_generate: k is not a generation mode");
  const std::vector<std::size_t>& pdims = xs[0].shape().dims();

  std::vector<double> o;
  compose_vec(beta_hat, p, beta_hat.size(), k, o);

  double sigma = 1.0;
  for (std::size_t l = 0; l < beta_hat.size(); ++l)
    if (l != k) sigma *= l2sq_of(beta_hat[l]);
  const double ridge = std::sqrt(alpha * sigma);

  std::vector<const double*> betas(p);
  for (std::size_t l = 0; l < p; ++l) betas[l] = beta_hat[l].data();

  GenerateDesign out;
  out.sigma = sigma;
  std::vector<double> buf_a, buf_b, buf_t;
  for (const DenseTensor& x : xs) {
    const double z =
        contract_full(x.data().data(), pdims, betas, buf_a, buf_b, buf_t);
    std::vector<double> row(o.size() + 1);
    for (std::size_t j = 0; j < o.size(); ++j) row[j] = z * o[j];
    row[o.size()] = ridge;
    out.z_hat.push_back(std::move(row));
  }
  return out;
}

ModeStats stats_from_contract_design(const ContractDesign& design,
                                     const std::vector<DenseTensor>& targets,
                                     const std::vector<double>& beta_k) {
  const std::size_t m_count = design.z_hat.size();
  if (m_count == 0 || m_count != targets.size())
    throw shape_error("stats_from_contract_design: sample count mismatch");
  const std::size_t dk = design.z_hat[0].rows();
  const std::size_t ncols = design.z_hat[0].cols();
  const std::size_t nq = ncols - dk;
  if (beta_k.size() != dk)
    throw shape_error("stats_from_contract_design: beta length mismatch");

  ModeStats st;
  st.sigma = design.sigma;
  st.diag.assign(dk, 0.0);
  st.corr.assign(dk, 0.0);
  for (std::size_t m = 0; m < m_count; ++m) {
    const Matrix& z = design.z_hat[m];
    const std::vector<double>& t = targets[m].data();
    if (t.size() != nq)
      throw shape_error("stats_from_contract_design: target size mismatch");
    for (std::size_t j = 0; j < ncols; ++j) {
      double zb = 0.0;
      for (std::size_t i = 0; i < dk; ++i) zb += z.at(i, j) * beta_k[i];
      const double e = (j < nq ? t[j] : 0.0) - zb;
      for (std::size_t i = 0; i < dk; ++i) st.corr[i] += z.at(i, j) * e;
    }
    for (std::size_t i = 0; i < dk; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < ncols; ++j) acc += z.at(i, j) * z.at(i, j);
      st.diag[i] += acc;
    }
  }
  for (std::size_t i = 0; i < dk; ++i) {
    st.diag[i] /= double(m_count);
    st.corr[i] /= double(m_count);
  }
  return st;
}

ModeStats stats_from_generate_design(const GenerateDesign& design,
                                     const std::vector<DenseTensor>& targets,
                                     std::size_t k_in_q,
                                     const std::vector<double>& beta_k) {
  const std::size_t m_count = design.z_hat.size();
  if (m_count == 0 || m_count != targets.size())
    throw shape_error("stats_from_generate_design: sample count mismatch");
  const std::size_t row_len = design.z_hat[0].size();
  const std::size_t n_rest = row_len - 1;
  const std::size_t dk = beta_k.size();

  ModeStats st;
  st.sigma = design.sigma;
  st.diag.assign(dk, 0.0);
  st.corr.assign(dk, 0.0);
  for (std::size_t m = 0; m < m_count; ++m) {
    const std::vector<double>& zh = design.z_hat[m];
    const Matrix y = matricize(targets[m], k_in_q);
    if (y.rows() != dk || y.cols() != n_rest)
      throw shape_error("stats_from_generate_design: target unfold mismatch");
    double znorm = 0.0;
    for (double v : zh) znorm += v * v;
    for (std::size_t i = 0; i < dk; ++i) {
      st.diag[i] += znorm;
      double acc = 0.0;
      for (std::size_t j = 0; j < n_rest; ++j)
        acc += zh[j] * (y.at(i, j) - beta_k[i] * zh[j]);
      acc += zh[n_rest] * (0.0 - beta_k[i] * zh[n_rest]);
      st.corr[i] += acc;
    }
  }
  for (std::size_t i = 0; i < dk; ++i) {
    st.diag[i] /= double(m_count);
    st.corr[i] /= double(m_count);
  }
  return st;
}

StepChoice select_step(const std::vector<ModeStats>& stats,
                       const std::vector<std::vector<double>>& beta_hat,
                       std::size_t stage_begin, double epsilon, double lambda,
                       Direction dir) {
  const std::size_t n_modes = beta_hat.size();
  std::vector<double> l1s(n_modes);
  for (std::size_t l = 0; l < n_modes; ++l) l1s[l] = l1_of(beta_hat[l]);

  StepChoice best;
  for (std::size_t km = 0; km < stats.size(); ++km) {
    const std::size_t k = stage_begin + km;
    const ModeStats& st = stats[km];
    const std::vector<double>& b = beta_hat[k];

    double others = 1.0;
    for (std::size_t l = 0; l < n_modes; ++l)
      if (l != k) others *= l1s[l];
    const double grow = epsilon * others;

    for (std::size_t i = 0; i < b.size(); ++i) {
      if (dir == Direction::backward) {
        if (b[i] == 0.0) continue;
        const double d = b[i] > 0.0 ? -epsilon : epsilon;
        const double dl = 0.5 * (d * d * st.diag[i] - 2.0 * d * st.corr[i]);
        const double dj = dl - lambda * grow;
        if (!best.found || dj < best.delta_j)
          best = StepChoice{true, k, i, d, dl, -grow, dj};
      } else {
        // Grow away from zero; both signs are admissible at zero.
        const int n_signs = (b[i] == 0.0) ? 2 : 1;
        for (int c = 0; c < n_signs; ++c) {
          double d;
          if (b[i] > 0.0)
            d = epsilon;
          else if (b[i] < 0.0)
            d = -epsilon;
          else
            d = (c == 0) ? epsilon : -epsilon;
          const double dl = 0.5 * (d * d * st.diag[i] - 2.0 * d * st.corr[i]);
          const double dj = dl + lambda * grow;
          if (!best.found || dj < best.delta_j)
            best = StepChoice{true, k, i, d, dl, grow, dj};
        }
      }
    }
  }
  return best;
}

RankFitter::RankFitter(const std::vector<DenseTensor>& xs,
                       const std::vector<DenseTensor>& targets,
                       const SolverConfig& config, FitTrace* trace,
                       std::size_t rank_index)
    : xs_(&xs),
      targets_(&targets),
      config_(config),
      trace_(trace),
      rank_index_(rank_index) {
  config_.validate();
  if (xs.empty() || xs.size() != targets.size())
    throw shape_error("RankFitter: need matching nonempty samples");
  p_ = xs[0].order();
  q_ = targets[0].order();
  pdims_ = xs[0].shape().dims();
  qdims_ = targets[0].shape().dims();
  nq_ = targets[0].size();
  for (const DenseTensor& x : xs)
    if (x.shape().dims() != pdims_)
      throw shape_error("RankFitter: inconsistent predictor shapes");
  for (const DenseTensor& t : targets)
    if (t.shape().dims() != qdims_)
      throw shape_error("RankFitter: inconsistent target shapes");
}

double RankFitter::initialize_rank() {
  InitState st = initialize(*xs_, *targets_, config_.epsilon);

  // Treat the signed seed mass as the first forward move: start from the
  // state with mode 0 empty, relax lambda off lambda_0 by the usual forward
  // rule, then place the mass. The seed cell then sits exactly gamma short
  // of profitable for an immediate backward step.
  std::size_t hot = 0;
  double seed = 0.0;
  for (std::size_t i = 0; i < st.beta_hat[0].size(); ++i) {
    if (st.beta_hat[0][i] != 0.0) {
      hot = i;
      seed = st.beta_hat[0][i];
      break;
    }
  }
  st.beta_hat[0][hot] = 0.0;

  beta_hat_ = std::move(st.beta_hat);
  lambda_ = st.lambda0;
  mu_ = 0.0;
  floor_ = std::max(config_.lambda_floor,
                    config_.lambda_floor_rel * st.lambda0);
  abandoned_ = false;
  iters_ = 0;
  rebuild_caches();

  const std::vector<ModeStats> stats = contract_stats();
  const double dl =
      0.5 * (seed * seed * stats[0].diag[hot] - 2.0 * seed * stats[0].corr[hot]);
  double others = 1.0;
  for (std::size_t l = 1; l < beta_hat_.size(); ++l)
    others *= l1_of(beta_hat_[l]);
  const double grow = config_.epsilon * others;
  if (grow > 0.0)
    lambda_ = std::min(lambda_, (-dl - config_.gamma) / grow);
  apply_move(0, hot, seed);
  mu_ = l1_of(beta_hat_[0]);
  return st.lambda0;
}

void RankFitter::set_state(std::vector<std::vector<double>> beta_hat,
                           double lambda) {
  if (beta_hat.size() != p_ + q_)
    throw shape_error("set_state: wrong number of working vectors");
  for (std::size_t k = 0; k < p_; ++k)
    if (beta_hat[k].size() != pdims_[k])
      throw shape_error("set_state: contraction vector length mismatch");
  for (std::size_t k = 0; k < q_; ++k)
    if (beta_hat[p_ + k].size() != qdims_[k])
      throw shape_error("set_state: generation vector length mismatch");
  beta_hat_ = std::move(beta_hat);
  lambda_ = lambda;
  mu_ = l1_of(beta_hat_[0]);
  floor_ = config_.lambda_floor;
  abandoned_ = false;
  iters_ = 0;
  rebuild_caches();
}

void RankFitter::rebuild_caches() {
  const std::size_t m_count = xs_->size();
  t_cache_.assign(p_, {});
  for (std::size_t k = 0; k < p_; ++k)
    t_cache_[k].assign(m_count * pdims_[k], 0.0);
  z_cache_.assign(m_count, 0.0);

  std::vector<const double*> betas(p_);
  for (std::size_t k = 0; k < p_; ++k) betas[k] = beta_hat_[k].data();
  std::vector<double> buf_a, buf_b, t;
  for (std::size_t m = 0; m < m_count; ++m) {
    const double* xd = (*xs_)[m].data().data();
    for (std::size_t k = 0; k < p_; ++k) {
      contract_keep_one(xd, pdims_, betas, k, buf_a, buf_b, t);
      std::copy(t.begin(), t.end(), t_cache_[k].begin() + m * pdims_[k]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < pdims_[0]; ++i)
      z += t_cache_[0][m * pdims_[0] + i] * beta_hat_[0][i];
    z_cache_[m] = z;
  }
}

double RankFitter::sigma_excluding(std::size_t k) const {
  double sigma = 1.0;
  for (std::size_t l = 0; l < beta_hat_.size(); ++l)
    if (l != k) sigma *= l2sq_of(beta_hat_[l]);
  return sigma;
}

void RankFitter::apply_move(std::size_t k, std::size_t i, double delta) {
  const double old = beta_hat_[k][i];
  double neu = old + delta;
  // Working values are integer multiples of epsilon, so anything below half
  // a step is a backward move that reached zero.
  if (std::abs(neu) < config_.epsilon / 2.0) neu = 0.0;
  beta_hat_[k][i] = neu;
  mu_ = l1_of(beta_hat_[k]);
  if (k >= p_) return;  // generation factors do not enter the caches

  const double applied = neu - old;
  if (!config_.incremental_z) {
    rebuild_caches();
    return;
  }
  const std::size_t m_count = xs_->size();
  const std::size_t dk = pdims_[k];
  for (std::size_t m = 0; m < m_count; ++m)
    z_cache_[m] += applied * t_cache_[k][m * dk + i];

  if (p_ == 1) return;
  // Delta rule for the other open-mode caches: contract the slice at the
  // changed coordinate over the remaining modes.
  std::vector<std::size_t> sdims;
  for (std::size_t m = 0; m < p_; ++m)
    if (m != k) sdims.push_back(pdims_[m]);
  std::vector<double> sliced, buf_a, buf_b, col;
  for (std::size_t kk = 0; kk < p_; ++kk) {
    if (kk == k) continue;
    const std::size_t skeep = kk < k ? kk : kk - 1;
    std::vector<const double*> sbetas(sdims.size());
    for (std::size_t j = 0; j < sdims.size(); ++j) {
      const std::size_t orig = j < k ? j : j + 1;
      sbetas[j] = beta_hat_[orig].data();
    }
    const std::size_t dkk = pdims_[kk];
    for (std::size_t m = 0; m < m_count; ++m) {
      slice_mode((*xs_)[m].data().data(), pdims_, k, i, sliced);
      contract_keep_one(sliced.data(), sdims, sbetas, skeep, buf_a, buf_b, col);
      double* dst = t_cache_[kk].data() + m * dkk;
      for (std::size_t idx = 0; idx < dkk; ++idx)
        dst[idx] += applied * col[idx];
    }
  }
}

std::vector<ModeStats> RankFitter::contract_stats() const {
  const std::size_t m_count = xs_->size();
  std::vector<double> bq;
  compose_vec(beta_hat_, p_, p_ + q_, kNoSkip, bq);
  double nbq2 = 0.0;
  for (double v : bq) nbq2 += v * v;

  std::vector<double> ipt(m_count, 0.0);
  for (std::size_t m = 0; m < m_count; ++m) {
    const std::vector<double>& t = (*targets_)[m].data();
    double acc = 0.0;
    for (std::size_t c = 0; c < nq_; ++c) acc += bq[c] * t[c];
    ipt[m] = acc;
  }

  std::vector<ModeStats> out(p_);
  for (std::size_t k = 0; k < p_; ++k) {
    const std::size_t dk = pdims_[k];
    const double sigma = sigma_excluding(k);
    ModeStats& st = out[k];
    st.sigma = sigma;
    st.diag.assign(dk, 0.0);
    st.corr.assign(dk, 0.0);
    const std::vector<double>& tc = t_cache_[k];
    for (std::size_t m = 0; m < m_count; ++m) {
      const double c = ipt[m] - z_cache_[m] * nbq2;
      const double* row = tc.data() + m * dk;
      for (std::size_t i = 0; i < dk; ++i) {
        st.diag[i] += row[i] * row[i];
        st.corr[i] += row[i] * c;
      }
    }
    const double ridge = config_.alpha * sigma;
    for (std::size_t i = 0; i < dk; ++i) {
      st.diag[i] = st.diag[i] * nbq2 / double(m_count) + ridge;
      st.corr[i] =
          st.corr[i] / double(m_count) - ridge * beta_hat_[k][i];
    }
  }
  return out;
}

std::vector<ModeStats> RankFitter::generate_stats() const {
  const std::size_t m_count = xs_->size();
  double z2avg = 0.0;
  for (double z : z_cache_) z2avg += z * z;
  z2avg /= double(m_count);

  std::vector<double> a(nq_, 0.0);
  for (std::size_t m = 0; m < m_count; ++m) {
    const double z = z_cache_[m];
    if (z == 0.0) continue;
    const std::vector<double>& t = (*targets_)[m].data();
    for (std::size_t c = 0; c < nq_; ++c) a[c] += z * t[c];
  }
  for (double& v : a) v /= double(m_count);

  std::vector<ModeStats> out(q_);
  std::vector<double> o;
  for (std::size_t kq = 0; kq < q_; ++kq) {
    const std::size_t k = p_ + kq;
    const std::size_t dk = qdims_[kq];
    compose_vec(beta_hat_, p_, p_ + q_, k, o);
    double no2 = 0.0;
    for (double v : o) no2 += v * v;
    const double sigma = sigma_excluding(k);
    const double dconst = z2avg * no2 + config_.alpha * sigma;

    ModeStats& st = out[kq];
    st.sigma = sigma;
    st.diag.assign(dk, dconst);
    st.corr.assign(dk, 0.0);

    std::size_t inner = 1;
    for (std::size_t m = 0; m < kq; ++m) inner *= qdims_[m];
    std::size_t outer = 1;
    for (std::size_t m = kq + 1; m < q_; ++m) outer *= qdims_[m];
    for (std::size_t ou = 0; ou < outer; ++ou)
      for (std::size_t i = 0; i < dk; ++i) {
        const double* arow = a.data() + (ou * dk + i) * inner;
        const double* orow = o.data() + ou * inner;
        double acc = 0.0;
        for (std::size_t in = 0; in < inner; ++in) acc += orow[in] * arow[in];
        st.corr[i] += acc;
      }
    for (std::size_t i = 0; i < dk; ++i)
      st.corr[i] -= dconst * beta_hat_[k][i];
  }
  return out;
}

void RankFitter::record(Stage stage, Direction dir, const StepChoice& choice) {
  if (!trace_) return;
  const ObjectiveParts parts =
      objective(beta_hat_, p_, *xs_, *targets_, config_.alpha, lambda_);
  trace_->records.push_back(TraceRecord{trace_->records.size(), rank_index_,
                                        lambda_, parts.j, stage, dir,
                                        choice.mode_k, choice.index_i,
                                        choice.delta});
}

namespace {

// Forward move that stays gamma-profitable at the highest lambda; drives the
// homotopy drop when nothing clears the margin at the current level. Modes
// whose complementary l1 mass is (near) zero cannot price a move and are
// skipped.
StepChoice select_relax(const std::vector<ModeStats>& stats,
                        const std::vector<std::vector<double>>& beta_hat,
                        std::size_t stage_begin, double epsilon, double gamma) {
  const std::size_t n_modes = beta_hat.size();
  std::vector<double> l1s(n_modes);
  for (std::size_t l = 0; l < n_modes; ++l) l1s[l] = l1_of(beta_hat[l]);

  StepChoice best;
  double best_cand = 0.0;
  for (std::size_t km = 0; km < stats.size(); ++km) {
    const std::size_t k = stage_begin + km;
    const ModeStats& st = stats[km];
    const std::vector<double>& b = beta_hat[k];

    double others = 1.0;
    for (std::size_t l = 0; l < n_modes; ++l)
      if (l != k) others *= l1s[l];
    const double grow = epsilon * others;
    if (grow <= 1e-12) continue;

    for (std::size_t i = 0; i < b.size(); ++i) {
      const int n_signs = (b[i] == 0.0) ? 2 : 1;
      for (int c = 0; c < n_signs; ++c) {
        double d;
        if (b[i] > 0.0)
          d = epsilon;
        else if (b[i] < 0.0)
          d = -epsilon;
        else
          d = (c == 0) ? epsilon : -epsilon;
        const double dl = 0.5 * (d * d * st.diag[i] - 2.0 * d * st.corr[i]);
        const double cand = (-dl - gamma) / grow;
        if (!best.found || cand > best_cand) {
          best = StepChoice{true, k, i, d, dl, grow, 0.0};
          best_cand = cand;
        }
      }
    }
  }
  best.delta_j = best_cand;  // carries the lambda level, not an objective gap
  return best;
}

}  // namespace

RankFitter::StepResult RankFitter::contract_step() {
  const std::vector<ModeStats> stats = contract_stats();
  const StepChoice back = select_step(stats, beta_hat_, 0, config_.epsilon,
                                      lambda_, Direction::backward);
  if (back.found && back.delta_j < -config_.gamma) {
    apply_move(back.mode_k, back.index_i, back.delta);
    record(Stage::contract, Direction::backward, back);
    return StepResult::applied;
  }
  const StepChoice fwd = select_step(stats, beta_hat_, 0, config_.epsilon,
                                     lambda_, Direction::forward);
  if (!fwd.found)
    throw numeric_error("contract_step: no admissible forward step");
  if (fwd.delta_j < -config_.gamma) {
    // Plateau move: profitable at the current lambda, which stays put.
    apply_move(fwd.mode_k, fwd.index_i, fwd.delta);
    record(Stage::contract, Direction::forward, fwd);
    return StepResult::applied;
  }
  const StepChoice relax =
      select_relax(stats, beta_hat_, 0, config_.epsilon, config_.gamma);
  if (!relax.found || relax.delta_j <= floor_) {
    // No move pays for itself above the floor; this side is finished.
    if (!relax.found && trace_) ++trace_->lambda_guard_events;
    return StepResult::exhausted;
  }
  lambda_ = std::min(lambda_, relax.delta_j);
  apply_move(relax.mode_k, relax.index_i, relax.delta);
  record(Stage::contract, Direction::forward, relax);
  return StepResult::applied;
}

RankFitter::StepResult RankFitter::generate_step() {
  double z2 = 0.0;
  for (double z : z_cache_) z2 += z * z;
  if (z2 == 0.0) {
    // Nothing reaches the generation side: the design is identically zero.
    abandoned_ = true;
    return StepResult::abandoned;
  }
  const std::vector<ModeStats> stats = generate_stats();
  const StepChoice back = select_step(stats, beta_hat_, p_, config_.epsilon,
                                      lambda_, Direction::backward);
  if (back.found && back.delta_j < -config_.gamma) {
    apply_move(back.mode_k, back.index_i, back.delta);
    record(Stage::generate, Direction::backward, back);
    return StepResult::applied;
  }
  const StepChoice fwd = select_step(stats, beta_hat_, p_, config_.epsilon,
                                     lambda_, Direction::forward);
  if (!fwd.found)
    throw numeric_error("generate_step: no admissible forward step");
  if (fwd.delta_j < -config_.gamma) {
    apply_move(fwd.mode_k, fwd.index_i, fwd.delta);
    record(Stage::generate, Direction::forward, fwd);
    return StepResult::applied;
  }
  const StepChoice relax =
      select_relax(stats, beta_hat_, p_, config_.epsilon, config_.gamma);
  if (!relax.found || relax.delta_j <= floor_) {
    if (!relax.found && trace_) ++trace_->lambda_guard_events;
    return StepResult::exhausted;
  }
  lambda_ = std::min(lambda_, relax.delta_j);
  apply_move(relax.mode_k, relax.index_i, relax.delta);
  record(Stage::generate, Direction::forward, relax);
  return StepResult::applied;
}

bool RankFitter::iterate() {
  if (abandoned_) return false;
  if (iters_ >= config_.max_iters_per_rank) return false;
  if (!(lambda_ > floor_)) return false;
  const StepResult c = contract_step();
  const StepResult g = generate_step();
  ++iters_;
  if (abandoned_) return false;
  return c == StepResult::applied || g == StepResult::applied;
}

void RankFitter::run() {
  while (iterate()) {
  }
}

std::vector<std::vector<double>> RankFitter::current_predictions() const {
  const std::size_t m_count = xs_->size();
  std::vector<const double*> betas(p_);
  for (std::size_t k = 0; k < p_; ++k) betas[k] = beta_hat_[k].data();
  std::vector<double> bq;
  compose_vec(beta_hat_, p_, p_ + q_, kNoSkip, bq);
  std::vector<double> buf_a, buf_b, buf_t;
  std::vector<std::vector<double>> out(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    const double z = contract_full((*xs_)[m].data().data(), pdims_, betas,
                                   buf_a, buf_b, buf_t);
    out[m].resize(nq_);
    for (std::size_t c = 0; c < nq_; ++c) out[m][c] = z * bq[c];
  }
  return out;
}

std::optional<UnitRankComponent> RankFitter::extract_component() const {
  // Coordinates holding fewer than prune_quanta step quanta are below the
  // path's resolution and read as noise.
  const double cutoff =
      config_.prune_quanta * config_.epsilon * (1.0 - 1e-9);
  UnitRankComponent c;
  double wp = 1.0, wq = 1.0;
  for (std::size_t k = 0; k < p_ + q_; ++k) {
    RankOneFactor f{beta_hat_[k]};
    if (cutoff > 0.0)
      for (double& v : f.beta)
        if (std::abs(v) < cutoff) v = 0.0;
    const double n1 = l1_of(f.beta);
    if (n1 == 0.0) return std::nullopt;
    for (double& v : f.beta) v /= n1;
    if (k < p_) {
      wp *= n1;
      c.contraction_factors.push_back(std::move(f));
    } else {
      wq *= n1;
      c.generation_factors.push_back(std::move(f));
    }
  }
  c.w_p = wp;
  c.w_q = wq;
  canonicalize_signs(c);
  return c;
}

namespace {

// Per-sample predictions of one component against standardized predictors.
std::vector<std::vector<double>> component_predictions(
    const UnitRankComponent& comp, const std::vector<DenseTensor>& xs,
    const Shape& yshape) {
  std::vector<std::vector<double>> out(xs.size());
  for (std::size_t m = 0; m < xs.size(); ++m)
    out[m] = predict_unit_rank(xs[m], comp, yshape).data();
  return out;
}

}  // namespace

FitResult fit(const std::vector<DenseTensor>& xs,
              const std::vector<DenseTensor>& ys, const SolverConfig& config) {
  config.validate();
  Standardized std_data = standardize_dataset(xs, ys);
  const Shape yshape = ys[0].shape();
  const std::size_t m_count = xs.size();

  FitTrace trace;
  std::vector<UnitRankComponent> comps;  // standardized predictor scale
  std::vector<std::vector<std::vector<double>>> preds;

  std::vector<DenseTensor> targets = std_data.ys;
  for (std::size_t r = 0; r < config.max_rank; ++r) {
    RankFitter rf(std_data.xs, targets, config, &trace, r);
    const double lambda0 = rf.initialize_rank();
    trace.rank_lambda0.push_back(lambda0);
    if (!(lambda0 > config.lambda_floor)) break;
    rf.run();
    if (rf.abandoned()) break;
    std::optional<UnitRankComponent> comp = rf.extract_component();
    if (!comp) break;
    std::vector<std::vector<double>> pr =
        component_predictions(*comp, std_data.xs, yshape);
    for (std::size_t m = 0; m < m_count; ++m)
      for (std::size_t c = 0; c < pr[m].size(); ++c)
        targets[m][c] -= pr[m][c];
    comps.push_back(std::move(*comp));
    preds.push_back(std::move(pr));
  }

  // Optional backfit cycles: refit each rank against the residual that
  // excludes it, so mass one rank stole from another can flow back.
  for (std::size_t pass = 0; pass < config.refine_passes; ++pass) {
    for (std::size_t r = 0; r < comps.size(); ++r) {
      std::vector<DenseTensor> resid = std_data.ys;
      for (std::size_t s = 0; s < comps.size(); ++s) {
        if (s == r) continue;
        for (std::size_t m = 0; m < m_count; ++m)
          for (std::size_t c = 0; c < preds[s][m].size(); ++c)
            resid[m][c] -= preds[s][m][c];
      }
      RankFitter rf(std_data.xs, resid, config, &trace, r);
      const double lambda0 = rf.initialize_rank();
      trace.rank_lambda0.push_back(lambda0);
      if (!(lambda0 > config.lambda_floor)) continue;
      rf.run();
      if (rf.abandoned()) continue;
      std::optional<UnitRankComponent> comp = rf.extract_component();
      if (!comp) continue;
      comps[r] = std::move(*comp);
      preds[r] = component_predictions(comps[r], std_data.xs, yshape);
    }
  }

  std::vector<DenseTensor> residuals = std_data.ys;
  for (std::size_t r = 0; r < comps.size(); ++r)
    for (std::size_t m = 0; m < m_count; ++m)
      for (std::size_t c = 0; c < preds[r][m].size(); ++c)
        residuals[m][c] -= preds[r][m][c];

  Dst2rModel model{xs[0].shape(), yshape, {}};
  for (UnitRankComponent& comp : comps) {
    comp.w_p /= std_data.x_scale;  // back to raw predictor coordinates
    model.components.push_back(std::move(comp));
  }
  return FitResult{std::move(model),          std::move(trace),
                   std::move(std_data.x_mean), std::move(std_data.y_mean),
                   std_data.x_scale,           std::move(residuals)};
}

}  // namespace dst2r
