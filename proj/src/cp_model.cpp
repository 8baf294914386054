#include "dst2r/cp_model.hpp"

#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dst2r {

double RankOneFactor::l1() const {
  double acc = 0.0;
  for (double v : beta) acc += std::abs(v);
  return acc;
}

double RankOneFactor::l2() const {
  double acc = 0.0;
  for (double v : beta) acc += v * v;
  return std::sqrt(acc);
}

namespace {

void validate_factor_list(const std::vector<RankOneFactor>& factors,
                          const Shape& shape, const char* what) {
  if (factors.size() != shape.order())
    throw shape_error(std::string("validate_model: ") + what +
                      " count does not match shape order");
  for (std::size_t k = 0; k < factors.size(); ++k) {
    if (factors[k].extent() != shape.dims()[k])
      throw shape_error(std::string("validate_model: ") + what +
                        " extent mismatch at mode " + std::to_string(k));
    for (double v : factors[k].beta) {
      if (!std::isfinite(v))
        throw numeric_error("validate_model: non-finite factor entry");
    }
  }
}

}  // namespace

void validate_model(const Dst2rModel& model) {
  for (const UnitRankComponent& c : model.components) {
    validate_factor_list(c.contraction_factors, model.predictor_shape,
                         "contraction factor");
    validate_factor_list(c.generation_factors, model.response_shape,
                         "generation factor");
    if (c.w_p < 0.0 || c.w_q < 0.0)
      throw shape_error("validate_model: negative component weight");
    if (!std::isfinite(c.w_p) || !std::isfinite(c.w_q))
      throw numeric_error("validate_model: non-finite component weight");
  }
}

DenseTensor compose_part(std::span<const RankOneFactor> factors, double w) {
  if (factors.empty())
    throw shape_error("compose_part: at least one factor required");
  std::vector<std::size_t> dims;
  for (const RankOneFactor& f : factors) dims.push_back(f.extent());
  DenseTensor out((Shape(dims)));

  std::vector<double> partial{w};
  for (const RankOneFactor& f : factors) {
    std::vector<double> next(partial.size() * f.extent());
    for (std::size_t i = 0; i < f.extent(); ++i) {
      const double b = f.beta[i];
      for (std::size_t j = 0; j < partial.size(); ++j)
        next[j + partial.size() * i] = partial[j] * b;
    }
    partial.swap(next);
  }
  out.data() = std::move(partial);
  return out;
}

DenseTensor compose_full(const Dst2rModel& model) {
  DenseTensor out(concat(model.predictor_shape, model.response_shape));
  for (const UnitRankComponent& c : model.components) {
    std::vector<RankOneFactor> all = c.contraction_factors;
    all.insert(all.end(), c.generation_factors.begin(),
               c.generation_factors.end());
    const DenseTensor term = compose_part(all, c.w_p * c.w_q);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += term[i];
  }
  return out;
}

DenseTensor predict_unit_rank(const DenseTensor& x, const UnitRankComponent& c,
                              const Shape& response_shape) {
  if (c.contraction_factors.size() != x.order())
    throw shape_error(
        "predict_unit_rank: contraction factor count does not match predictor "
        "order");
  // Contracting mode 0 repeatedly walks through the predictor modes in order.
  DenseTensor cur = x;
  for (const RankOneFactor& f : c.contraction_factors)
    cur = mode_n_product(cur, f.beta, 0);
  const double z = c.w_p * cur[0];
  DenseTensor out = compose_part(c.generation_factors, c.w_q * z);
  if (out.shape() != response_shape)
    throw shape_error(
        "predict_unit_rank: generation factors do not match response shape");
  return out;
}

DenseTensor predict(const DenseTensor& x, const Dst2rModel& model) {
  if (x.shape() != model.predictor_shape)
    throw shape_error("predict: predictor shape mismatch");
  DenseTensor out(model.response_shape);
  for (const UnitRankComponent& c : model.components) {
    const DenseTensor term = predict_unit_rank(x, c, model.response_shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += term[i];
  }
  return out;
}

std::vector<DenseTensor> predict(const std::vector<DenseTensor>& xs,
                                 const Dst2rModel& model) {
  std::vector<DenseTensor> out;
  out.reserve(xs.size());
  for (const DenseTensor& x : xs) out.push_back(predict(x, model));
  return out;
}

namespace {

// Flip sign if the largest-magnitude entry (first on ties) is negative.
// Returns -1.0 when flipped.
double canonicalize_factor(RankOneFactor& f) {
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < f.beta.size(); ++i) {
    if (std::abs(f.beta[i]) > best) {
      best = std::abs(f.beta[i]);
      arg = i;
    }
  }
  if (f.beta.empty() || f.beta[arg] >= 0.0) return 1.0;
  for (double& v : f.beta) v = -v;
  return -1.0;
}

}  // namespace

void canonicalize_signs(UnitRankComponent& c) {
  double parity = 1.0;
  for (RankOneFactor& f : c.contraction_factors)
    parity *= canonicalize_factor(f);
  for (RankOneFactor& f : c.generation_factors)
    parity *= canonicalize_factor(f);
  if (parity < 0.0) {
    std::vector<RankOneFactor>* carrier =
        !c.contraction_factors.empty() ? &c.contraction_factors
                                       : &c.generation_factors;
    if (!carrier->empty())
      for (double& v : (*carrier)[0].beta) v = -v;
  }
}

namespace {

nlohmann::json factors_to_json(const std::vector<RankOneFactor>& factors) {
  nlohmann::json arr = nlohmann::json::array();
  for (const RankOneFactor& f : factors) arr.push_back(f.beta);
  return arr;
}

std::vector<RankOneFactor> factors_from_json(const nlohmann::json& arr) {
  std::vector<RankOneFactor> out;
  for (const auto& v : arr)
    out.push_back(RankOneFactor{v.get<std::vector<double>>()});
  return out;
}

}  // namespace

std::string model_to_json(const Dst2rModel& model) {
  nlohmann::json j;
  j["predictor_shape"] = model.predictor_shape.dims();
  j["response_shape"] = model.response_shape.dims();
  nlohmann::json comps = nlohmann::json::array();
  for (const UnitRankComponent& c : model.components) {
    nlohmann::json jc;
    jc["w_p"] = c.w_p;
    jc["w_q"] = c.w_q;
    jc["contraction_factors"] = factors_to_json(c.contraction_factors);
    jc["generation_factors"] = factors_to_json(c.generation_factors);
    comps.push_back(jc);
  }
  j["components"] = comps;
  return j.dump(2) + "\n";
}

Dst2rModel model_from_json(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    Dst2rModel model{
        Shape(j.at("predictor_shape").get<std::vector<std::size_t>>()),
        Shape(j.at("response_shape").get<std::vector<std::size_t>>()),
        {}};
    for (const auto& jc : j.at("components")) {
      UnitRankComponent c;
      c.w_p = jc.at("w_p").get<double>();
      c.w_q = jc.at("w_q").get<double>();
      c.contraction_factors = factors_from_json(jc.at("contraction_factors"));
      c.generation_factors = factors_from_json(jc.at("generation_factors"));
      model.components.push_back(std::move(c));
    }
    validate_model(model);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("model_from_json: ") + e.what());
  }
}

void save_model(const std::string& path, const Dst2rModel& model) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw io_error("save_model: cannot open " + path);
  f << model_to_json(model);
  if (!f) throw io_error("save_model: short write to " + path);
}

Dst2rModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("load_model: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace dst2r
