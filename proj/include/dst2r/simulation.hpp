#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dst2r/cp_model.hpp"

namespace dst2r {

// Deterministic generator; every dataset owns one stream seeded from its spec.
using Rng = std::mt19937_64;

struct SimSpec {
  Shape predictor_shape{std::vector<std::size_t>{1}};
  Shape response_shape{std::vector<std::size_t>{1}};
  std::size_t rank = 1;
  double sparsity = 0.0;   // fraction of zero entries per factor vector
  std::size_t n_samples = 1;
  double noise_sd = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimDataset {
  std::vector<DenseTensor> xs;
  std::vector<DenseTensor> ys;
  Dst2rModel true_model;
  SimSpec spec;
};

// Planted coefficient model: normal draws per factor, floor(c_k * sparsity)
// entries zeroed at uniformly sampled positions, l1 mass moved into the
// component weights.
Dst2rModel gen_coefficients(const SimSpec& spec, Rng& rng);

// Bernoulli(0.5) entries in {0, 1}.
std::vector<DenseTensor> gen_predictors(const SimSpec& spec, Rng& rng);

// predict(x, model) plus iid centered Gaussian entry noise.
std::vector<DenseTensor> gen_responses(const std::vector<DenseTensor>& xs,
                                       const Dst2rModel& model,
                                       double noise_sd, Rng& rng);

// Full pipeline from a spec; the rng stream is seeded from spec.seed.
SimDataset make_dataset(const SimSpec& spec);

// Named experiment presets; scale shrinks extents and sample count for fast
// runs (extents floor at 2, samples at 8).
//   "3d3d"       (8,8,8) -> (4,4,4), rank 2, sparsity 0.2
//   "3d2d"       (8,8,8) -> (4,4),   rank 5, sparsity 0.2
//   "2d2d-sweep" (16,16) -> (4,4),   rank 2, sparsity 0.5
SimSpec make_scenario(const std::string& name, double scale = 1.0);

std::string sim_spec_to_json(const SimSpec& spec);
SimSpec sim_spec_from_json(const std::string& text);

// Directory layout: x.dten / y.dten stack samples on one trailing mode;
// manifest.json records the spec and file names; true_model.json holds the
// planted model.
void save_dataset(const SimDataset& ds, const std::string& dir);
SimDataset load_dataset(const std::string& dir);

}  // namespace dst2r
