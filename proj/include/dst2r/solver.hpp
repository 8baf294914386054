#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dst2r/cp_model.hpp"
#include "dst2r/tensor.hpp"

namespace dst2r {

struct SolverConfig {
  double epsilon = 0.01;  // stagewise step size
  double gamma = 1e-6;    // minimum objective drop per accepted step
  double alpha = 0.1;     // ridge weight
  std::size_t max_rank = 1;
  std::size_t max_iters_per_rank = 20000;
  double lambda_floor = 0.0;
  double lambda_floor_rel = 0.0;  // per-rank floor as a fraction of that
                                  // rank's lambda_0; the larger floor wins
  std::size_t refine_passes = 0;  // backfit cycles over ranks after the
                                  // first deflation pass
  double prune_quanta = 0.0;      // extraction drops coordinates holding
                                  // fewer than this many epsilon quanta
  std::uint64_t seed = 0;       // reserved; fitting itself is deterministic
  bool incremental_z = false;   // delta-update cached designs between steps

  void validate() const;
};

/// JSON object with any subset of the config fields; missing fields keep
/// their defaults, unknown fields are rejected.
SolverConfig solver_config_from_json(const std::string& text);
std::string solver_config_to_json(const SolverConfig& config);

enum class Stage { contract, generate };
enum class Direction { forward, backward };

struct TraceRecord {
  std::size_t iteration;  // accepted-step counter over the whole fit
  std::size_t rank;
  double lambda;       // after this step's update
  double objective_j;  // at the new state, under the recorded lambda
  Stage stage;
  Direction direction;
  std::size_t mode_k;  // global mode index (contraction then generation)
  std::size_t index_i;
  double step_s;  // signed delta applied to the coordinate
};

struct FitTrace {
  std::vector<double> rank_lambda0;  // lambda_0 per attempted rank
  std::vector<TraceRecord> records;
  std::size_t lambda_guard_events = 0;

  /// Columns: iteration,lambda,J,stage,k,i_k,s.
  void write_csv(std::ostream& os) const;
};

struct Standardized {
  std::vector<DenseTensor> xs;  // centered, divided by the global scale
  std::vector<DenseTensor> ys;  // centered
  DenseTensor x_mean;
  DenseTensor y_mean;
  double x_scale;  // one scalar so the coefficient map stays unit-rank
};

/// Centers both sides per entry across samples and rescales the predictors
/// by the root mean entry variance (1 when every entry is constant).
Standardized standardize_dataset(const std::vector<DenseTensor>& xs,
                                 const std::vector<DenseTensor>& ys);

struct InitState {
  double lambda0;
  // p+q working vectors beta_hat; magnitudes are folded in, nothing is
  // normalized until a rank is extracted.
  std::vector<std::vector<double>> beta_hat;
};

/// Most correlated predictor/response cell pair over the stacked data.
/// lambda0 = max |X^T Y| / M; the working vectors start as the matching
/// one-hot directions with signed epsilon mass on the first mode and unit
/// mass elsewhere.
InitState initialize(const std::vector<DenseTensor>& xs,
                     const std::vector<DenseTensor>& ys, double epsilon);

/// Per-coordinate step statistics for one candidate mode:
/// diag[i] = (1/M) sum_m (Zhat_m Zhat_m^T)_ii,
/// corr[i] = (1/M) sum_m (Zhat_m ehat_m)_i,
/// sigma   = product of squared l2 norms of every other mode's vector.
struct ModeStats {
  std::vector<double> diag;
  std::vector<double> corr;
  double sigma = 0.0;
};

/// Materialized per-sample design for a contraction mode: rows index the
/// mode's coordinates, columns are the vectorized response cells followed by
/// the ridge block sqrt(alpha * sigma) * I.
struct ContractDesign {
  std::vector<Matrix> z_hat;
  double sigma = 0.0;
};

/// Materialized per-sample design row for a generation mode: the vectorized
/// partial outer product scaled by the contraction scalar z_m, followed by
/// the single ridge entry sqrt(alpha * sigma).
struct GenerateDesign {
  std::vector<std::vector<double>> z_hat;
  double sigma = 0.0;
};

ContractDesign build_design_contract(
    const std::vector<DenseTensor>& xs,
    const std::vector<std::vector<double>>& beta_hat, std::size_t k,
    double alpha);

GenerateDesign build_design_generate(
    const std::vector<DenseTensor>& xs,
    const std::vector<std::vector<double>>& beta_hat, std::size_t k,
    double alpha);

ModeStats stats_from_contract_design(const ContractDesign& design,
                                     const std::vector<DenseTensor>& targets,
                                     const std::vector<double>& beta_k);

ModeStats stats_from_generate_design(const GenerateDesign& design,
                                     const std::vector<DenseTensor>& targets,
                                     std::size_t k_in_q,
                                     const std::vector<double>& beta_k);

struct StepChoice {
  bool found = false;
  std::size_t mode_k = 0;  // global mode index
  std::size_t index_i = 0;
  double delta = 0.0;        // signed update to apply to beta_hat[mode_k]
  double delta_loss = 0.0;   // exact change of the (ridge-augmented) loss
  double delta_omega = 0.0;  // exact change of the composed l1 penalty
  double delta_j = 0.0;      // delta_loss + lambda * delta_omega
};

/// Argmin of the exact objective change at the given lambda over the stage's
/// coordinates. Backward considers only nonzero coordinates and shrinks them
/// by epsilon; forward grows a coordinate away from zero, picking the better
/// sign at zero coordinates. Ties break toward the lowest mode, lowest
/// index, positive sign.
StepChoice select_step(const std::vector<ModeStats>& stats,
                       const std::vector<std::vector<double>>& beta_hat,
                       std::size_t stage_begin, double epsilon, double lambda,
                       Direction dir);

struct ObjectiveParts {
  double j = 0.0;        // loss + lambda * penalty
  double loss = 0.0;     // half mean squared residual plus the ridge term
  double penalty = 0.0;  // l1 norm of the composed unit-rank tensor, the
                         // product of the working vectors' l1 masses
};

ObjectiveParts objective(const std::vector<std::vector<double>>& beta_hat,
                         std::size_t p, const std::vector<DenseTensor>& xs,
                         const std::vector<DenseTensor>& targets, double alpha,
                         double lambda);

/// Stagewise search for one unit-rank term against the current residual
/// targets. Exposed so the step mechanics can be driven directly.
class RankFitter {
 public:
  RankFitter(const std::vector<DenseTensor>& xs,
             const std::vector<DenseTensor>& targets,
             const SolverConfig& config, FitTrace* trace,
             std::size_t rank_index);

  /// Runs the correlation screen and installs the one-hot start; returns
  /// lambda_0. The signed seed placement counts as the first forward move,
  /// so the working lambda starts at its relaxed value and the seed cell is
  /// stable against an immediate backward step.
  double initialize_rank();

  /// Installs an arbitrary working state (test hook).
  void set_state(std::vector<std::vector<double>> beta_hat, double lambda);

  enum class StepResult { applied, abandoned, exhausted };

  /// One accepted move over the contraction modes: the best backward step if
  /// it clears the gamma test, otherwise a forward step. A forward move that
  /// clears the gamma margin at the current lambda leaves lambda unchanged;
  /// when none does, lambda relaxes to the highest level at which some
  /// forward move is exactly gamma-profitable and that move is taken.
  /// Exhausted when that level would sit at or below the floor: nothing is
  /// applied and lambda stays put.
  StepResult contract_step();

  /// Same over the generation modes. Abandons the rank when every sample's
  /// contraction scalar is exactly zero.
  StepResult generate_step();

  /// One contract+generate sweep; false once both stages are exhausted, the
  /// iteration cap is hit, or the rank was abandoned. Lambda never drops to
  /// the floor mid-path, so a sub-floor starting level is the only way the
  /// floor test itself ends a fit.
  bool iterate();
  void run();

  double lambda() const { return lambda_; }
  double mu() const { return mu_; }
  bool abandoned() const { return abandoned_; }
  std::size_t p() const { return p_; }
  std::size_t q() const { return q_; }
  const std::vector<std::vector<double>>& beta_hat() const { return beta_hat_; }

  /// Current unit-rank predictions, one vectorized response per sample.
  std::vector<std::vector<double>> current_predictions() const;

  /// l1-normalized component with the mass split into w_p and w_q; nullopt
  /// when some mode's vector is entirely zero.
  std::optional<UnitRankComponent> extract_component() const;

 private:
  void rebuild_caches();
  void apply_move(std::size_t k, std::size_t i, double delta);
  std::vector<ModeStats> contract_stats() const;
  std::vector<ModeStats> generate_stats() const;
  void record(Stage stage, Direction dir, const StepChoice& choice);
  double sigma_excluding(std::size_t k) const;

  const std::vector<DenseTensor>* xs_;
  const std::vector<DenseTensor>* targets_;
  SolverConfig config_;
  FitTrace* trace_;
  std::size_t rank_index_;

  std::size_t p_ = 0, q_ = 0;
  std::vector<std::size_t> pdims_, qdims_;
  std::size_t nq_ = 0;  // response cells per sample

  std::vector<std::vector<double>> beta_hat_;
  double lambda_ = 0.0;
  double mu_ = 0.0;
  double floor_ = 0.0;  // effective stopping level for this rank
  bool abandoned_ = false;
  std::size_t iters_ = 0;

  // Per-sample partial contractions: t_cache_[k][m * d_k + i] leaves mode k
  // open; z_cache_[m] is the full contraction scalar.
  std::vector<std::vector<double>> t_cache_;
  std::vector<double> z_cache_;
};

struct FitResult {
  Dst2rModel model;  // in raw predictor coordinates
  FitTrace trace;
  DenseTensor x_mean;
  DenseTensor y_mean;
  double x_scale = 1.0;
  // Per-sample centered response minus all fitted unit-rank predictions.
  std::vector<DenseTensor> residuals;
};

/// Centers and scales the data, then fits up to max_rank unit-rank terms by
/// alternating stagewise search, deflating the residual after each rank.
/// The returned model is mapped back to the raw predictor coordinates.
FitResult fit(const std::vector<DenseTensor>& xs,
              const std::vector<DenseTensor>& ys, const SolverConfig& config);

}  // namespace dst2r
