#pragma once

#include <cstddef>
#include <vector>

#include "dst2r/cp_model.hpp"
#include "dst2r/tensor.hpp"

namespace dst2r {

// Frobenius distance between the composed coefficient tensors.
double estimation_error(const Dst2rModel& truth, const Dst2rModel& fitted);

// Pairs each true component with a distinct fitted component, greedily by
// absolute cosine similarity of the composed unit-rank tensors. Requires
// equal ranks; result[r] is the fitted index matched to true component r.
std::vector<std::size_t> match_components(const Dst2rModel& truth,
                                          const Dst2rModel& fitted);

struct SupportReport {
  std::vector<double> tpr_per_mode;
  std::vector<double> fpr_per_mode;
  double tpr_mean = 0.0;  // mean over modes, bounded in [0, 1]
  double fpr_mean = 0.0;
  double tpr_sum = 0.0;   // sum over modes, can exceed 1
  double fpr_sum = 0.0;
};

// Support recovery on normalized factor entries, per mode, pooled over
// rank-matched components. Entries with |value| <= zero_threshold count as
// zero. Vacuous denominators yield TPR 1 and FPR 0.
SupportReport tpr_fpr(const Dst2rModel& truth, const Dst2rModel& fitted,
                      double zero_threshold = 1e-8);

// Fraction of true-zero factor entries estimated as zero, pooled over all
// modes and rank-matched components.
double sparsity_coverage(const Dst2rModel& truth, const Dst2rModel& fitted,
                         double zero_threshold = 1e-8);

// Lasso on vectorized samples, one independent problem per response
// coordinate. Columns are centered and variance-scaled internally; constant
// columns get a zero coefficient. The grid holds absolute penalty levels; the
// level for each coordinate is picked by mean squared error on a 20% tail
// validation split, then the coefficient is refit on all samples.
struct SparseOlsResult {
  Matrix coef;                       // n_predictor_cells x n_response_cells
  std::vector<double> chosen_lambda; // one per response coordinate
};

SparseOlsResult sparse_ols_fit(const std::vector<DenseTensor>& xs,
                               const std::vector<DenseTensor>& ys,
                               const std::vector<double>& lambda_grid);

// Log-spaced grid from the stacked problem's critical penalty down to
// ratio * critical, inclusive.
std::vector<double> default_lambda_grid(const std::vector<DenseTensor>& xs,
                                        const std::vector<DenseTensor>& ys,
                                        std::size_t n_values = 8,
                                        double ratio = 1e-3);

// Frobenius distance between the flattened coefficient matrix and the
// composed model, plus entry-level support rates against the composed
// tensor's zero pattern.
double ols_estimation_error(const SparseOlsResult& fit,
                            const Dst2rModel& truth);

struct EntrySupport {
  double tpr = 0.0;
  double fpr = 0.0;
};

EntrySupport ols_entry_support(const SparseOlsResult& fit,
                               const Dst2rModel& truth,
                               double zero_threshold = 1e-8);

}  // namespace dst2r
