#pragma once

#include <span>
#include <string>
#include <vector>

#include "dst2r/tensor.hpp"

namespace dst2r {

/// One mode's loading vector of a unit-rank term.
struct RankOneFactor {
  std::vector<double> beta;

  std::size_t extent() const { return beta.size(); }
  double l1() const;
  double l2() const;
};

/// One unit-rank term of the coefficient tensor, split into the part that
/// contracts against the predictor and the part that spans the response.
/// Factors are l1-normalized; the magnitudes live in w_p and w_q (both >= 0).
struct UnitRankComponent {
  std::vector<RankOneFactor> contraction_factors;
  std::vector<RankOneFactor> generation_factors;
  double w_p = 0.0;
  double w_q = 0.0;
};

/// Sum of unit-rank components mapping predictor tensors of predictor_shape
/// to response tensors of response_shape.
struct Dst2rModel {
  Shape predictor_shape;
  Shape response_shape;
  std::vector<UnitRankComponent> components;

  std::size_t rank() const { return components.size(); }
};

/// Throws shape_error if factor extents disagree with the shapes or a weight
/// is negative.
void validate_model(const Dst2rModel& model);

/// w * beta_1 o beta_2 o ... as a dense tensor.
DenseTensor compose_part(std::span<const RankOneFactor> factors, double w);

/// Dense coefficient tensor of the whole model, shape predictor ++ response.
/// A model with no components composes to zeros.
DenseTensor compose_full(const Dst2rModel& model);

/// Response of a single component: the scalar w_p * (x contracted with every
/// contraction factor) times the composed generation part.
DenseTensor predict_unit_rank(const DenseTensor& x, const UnitRankComponent& c,
                              const Shape& response_shape);

/// Sum of unit-rank responses; a rank-0 model predicts zeros.
DenseTensor predict(const DenseTensor& x, const Dst2rModel& model);

std::vector<DenseTensor> predict(const std::vector<DenseTensor>& xs,
                                 const Dst2rModel& model);

/// Flips factor signs so each factor's largest-magnitude entry is positive.
/// A leftover negative total sign is carried by the first contraction factor,
/// so the composed tensor is unchanged and w_p, w_q stay nonnegative.
void canonicalize_signs(UnitRankComponent& c);

std::string model_to_json(const Dst2rModel& model);
Dst2rModel model_from_json(const std::string& text);

void save_model(const std::string& path, const Dst2rModel& model);
Dst2rModel load_model(const std::string& path);

}  // namespace dst2r
