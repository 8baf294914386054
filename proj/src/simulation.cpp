#include "dst2r/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dst2r/errors.hpp"
#include "dst2r/io.hpp"

namespace dst2r {

namespace fs = std::filesystem;

void SimSpec::validate() const {
  if (rank == 0) throw std::invalid_argument("SimSpec: rank must be >= 1");
  if (!(sparsity >= 0.0) || !(sparsity <= 1.0))
    throw std::invalid_argument("SimSpec: sparsity must lie in [0, 1]");
  if (n_samples == 0)
    throw std::invalid_argument("SimSpec: n_samples must be >= 1");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
    throw std::invalid_argument("SimSpec: noise_sd must be nonnegative");
}

namespace {

// Draws one factor of length c with floor(c * sparsity) zero entries placed
// by a partial shuffle. Redraws if every entry lands on zero.
std::vector<double> draw_factor(std::size_t c, double sparsity, Rng& rng) {
  const std::size_t n_zero =
      static_cast<std::size_t>(std::floor(double(c) * sparsity));
  if (n_zero >= c)
    throw std::invalid_argument(
        "gen_coefficients: sparsity leaves no nonzero entry in a factor");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> v(c);
    for (double& x : v) x = normal(rng);
    std::vector<std::size_t> idx(c);
    for (std::size_t i = 0; i < c; ++i) idx[i] = i;
    for (std::size_t j = 0; j < n_zero; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, c - 1);
      std::swap(idx[j], idx[pick(rng)]);
      v[idx[j]] = 0.0;
    }
    double l1 = 0.0;
    for (double x : v) l1 += std::abs(x);
    if (l1 > 0.0) return v;
  }
  throw numeric_error("gen_coefficients: factor redraw limit exceeded");
}

}  // namespace

Dst2rModel gen_coefficients(const SimSpec& spec, Rng& rng) {
  spec.validate();
  Dst2rModel model{spec.predictor_shape, spec.response_shape, {}};
  const std::vector<std::size_t>& pd = spec.predictor_shape.dims();
  const std::vector<std::size_t>& qd = spec.response_shape.dims();
  for (std::size_t r = 0; r < spec.rank; ++r) {
    UnitRankComponent comp;
    comp.w_p = 1.0;
    comp.w_q = 1.0;
    for (std::size_t d : pd) {
      std::vector<double> v = draw_factor(d, spec.sparsity, rng);
      double l1 = 0.0;
      for (double x : v) l1 += std::abs(x);
      for (double& x : v) x /= l1;
      comp.w_p *= l1;
      comp.contraction_factors.push_back(RankOneFactor{std::move(v)});
    }
    for (std::size_t d : qd) {
      std::vector<double> v = draw_factor(d, spec.sparsity, rng);
      double l1 = 0.0;
      for (double x : v) l1 += std::abs(x);
      for (double& x : v) x /= l1;
      comp.w_q *= l1;
      comp.generation_factors.push_back(RankOneFactor{std::move(v)});
    }
    canonicalize_signs(comp);
    model.components.push_back(std::move(comp));
  }
  validate_model(model);
  return model;
}

std::vector<DenseTensor> gen_predictors(const SimSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<DenseTensor> xs;
  xs.reserve(spec.n_samples);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t m = 0; m < spec.n_samples; ++m) {
    DenseTensor x(spec.predictor_shape);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = coin(rng) ? 1.0 : 0.0;
    xs.push_back(std::move(x));
  }
  return xs;
}

std::vector<DenseTensor> gen_responses(const std::vector<DenseTensor>& xs,
                                       const Dst2rModel& model,
                                       double noise_sd, Rng& rng) {
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
    throw std::invalid_argument("gen_responses: noise_sd must be nonnegative");
  std::vector<DenseTensor> ys = predict(xs, model);
  if (noise_sd > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sd);
    for (DenseTensor& y : ys)
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += noise(rng);
  }
  return ys;
}

SimDataset make_dataset(const SimSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dst2rModel model = gen_coefficients(spec, rng);
  std::vector<DenseTensor> xs = gen_predictors(spec, rng);
  std::vector<DenseTensor> ys = gen_responses(xs, model, spec.noise_sd, rng);
  return SimDataset{std::move(xs), std::move(ys), std::move(model), spec};
}

SimSpec make_scenario(const std::string& name, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw std::invalid_argument("make_scenario: scale must be positive");
  auto dim = [scale](std::size_t d) {
    const long v = std::lround(double(d) * scale);
    return static_cast<std::size_t>(std::max(2L, v));
  };
  auto samples = [scale]() {
    const long v = std::lround(1000.0 * scale);
    return static_cast<std::size_t>(std::max(8L, v));
  };
  SimSpec spec;
  if (name == "3d3d") {
    spec.predictor_shape = Shape{std::vector<std::size_t>{dim(8), dim(8), dim(8)}};
    spec.response_shape = Shape{std::vector<std::size_t>{dim(4), dim(4), dim(4)}};
    spec.rank = 2;
    spec.sparsity = 0.2;
  } else if (name == "3d2d") {
    spec.predictor_shape = Shape{std::vector<std::size_t>{dim(8), dim(8), dim(8)}};
    spec.response_shape = Shape{std::vector<std::size_t>{dim(4), dim(4)}};
    spec.rank = 5;
    spec.sparsity = 0.2;
  } else if (name == "2d2d-sweep") {
    spec.predictor_shape = Shape{std::vector<std::size_t>{dim(16), dim(16)}};
    spec.response_shape = Shape{std::vector<std::size_t>{dim(4), dim(4)}};
    spec.rank = 2;
    spec.sparsity = 0.5;
  } else {
    throw std::invalid_argument("make_scenario: unknown scenario '" + name +
                                "'");
  }
  spec.n_samples = samples();
  spec.noise_sd = 0.1;
  spec.seed = 0;
  return spec;
}

std::string sim_spec_to_json(const SimSpec& spec) {
  nlohmann::json j;
  j["predictor_dims"] = spec.predictor_shape.dims();
  j["response_dims"] = spec.response_shape.dims();
  j["rank"] = spec.rank;
  j["sparsity"] = spec.sparsity;
  j["n_samples"] = spec.n_samples;
  j["noise_sd"] = spec.noise_sd;
  j["seed"] = spec.seed;
  return j.dump(2) + "\n";
}

SimSpec sim_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("sim spec: ") + e.what());
  }
  SimSpec spec;
  try {
    spec.predictor_shape =
        Shape{j.at("predictor_dims").get<std::vector<std::size_t>>()};
    spec.response_shape =
        Shape{j.at("response_dims").get<std::vector<std::size_t>>()};
    spec.rank = j.at("rank").get<std::size_t>();
    spec.sparsity = j.at("sparsity").get<double>();
    spec.n_samples = j.at("n_samples").get<std::size_t>();
    spec.noise_sd = j.at("noise_sd").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("sim spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw io_error(std::string("sim spec: ") + e.what());
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw io_error(std::string("sim spec: ") + e.what());
  }
  return spec;
}

namespace {

// Stacks per-sample tensors into one tensor with the sample mode last.
DenseTensor stack_samples(const std::vector<DenseTensor>& ts) {
  std::vector<std::size_t> dims = ts[0].shape().dims();
  dims.push_back(ts.size());
  DenseTensor out{Shape{dims}};
  const std::size_t block = ts[0].size();
  for (std::size_t m = 0; m < ts.size(); ++m)
    std::copy(ts[m].data().begin(), ts[m].data().end(),
              out.data().begin() + m * block);
  return out;
}

std::vector<DenseTensor> unstack_samples(const DenseTensor& t,
                                         std::size_t n_samples) {
  const std::vector<std::size_t>& dims = t.shape().dims();
  if (dims.size() < 2 || dims.back() != n_samples)
    throw io_error("dataset: stacked tensor does not match n_samples");
  Shape inner{std::vector<std::size_t>(dims.begin(), dims.end() - 1)};
  const std::size_t block = inner.num_elements();
  std::vector<DenseTensor> out;
  out.reserve(n_samples);
  for (std::size_t m = 0; m < n_samples; ++m)
    out.emplace_back(inner,
                     std::vector<double>(t.data().begin() + m * block,
                                         t.data().begin() + (m + 1) * block));
  return out;
}

}  // namespace

void save_dataset(const SimDataset& ds, const std::string& dir) {
  if (ds.xs.size() != ds.spec.n_samples || ds.ys.size() != ds.spec.n_samples)
    throw shape_error("save_dataset: sample count mismatch with spec");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("save_dataset: cannot create directory " + dir);

  write_dten(dir + "/x.dten", stack_samples(ds.xs));
  write_dten(dir + "/y.dten", stack_samples(ds.ys));
  save_model(dir + "/true_model.json", ds.true_model);

  nlohmann::json manifest;
  manifest["spec"] = nlohmann::json::parse(sim_spec_to_json(ds.spec));
  manifest["x_file"] = "x.dten";
  manifest["y_file"] = "y.dten";
  manifest["true_model_file"] = "true_model.json";
  std::ofstream os(dir + "/manifest.json", std::ios::binary);
  if (!os) throw io_error("save_dataset: cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
  if (!os) throw io_error("save_dataset: manifest write failed in " + dir);
}

SimDataset load_dataset(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json", std::ios::binary);
  if (!is) throw io_error("load_dataset: missing manifest.json in " + dir);
  std::stringstream buf;
  buf << is.rdbuf();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("load_dataset: manifest: ") + e.what());
  }
  std::string x_file, y_file, model_file;
  nlohmann::json spec_json;
  try {
    spec_json = manifest.at("spec");
    x_file = manifest.at("x_file").get<std::string>();
    y_file = manifest.at("y_file").get<std::string>();
    model_file = manifest.at("true_model_file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("load_dataset: manifest: ") + e.what());
  }
  SimSpec spec = sim_spec_from_json(spec_json.dump());
  std::vector<DenseTensor> xs =
      unstack_samples(read_dten(dir + "/" + x_file), spec.n_samples);
  std::vector<DenseTensor> ys =
      unstack_samples(read_dten(dir + "/" + y_file), spec.n_samples);
  Dst2rModel model = load_model(dir + "/" + model_file);
  for (const DenseTensor& x : xs)
    if (x.shape() != spec.predictor_shape)
      throw io_error("load_dataset: predictor shape disagrees with spec");
  for (const DenseTensor& y : ys)
    if (y.shape() != spec.response_shape)
      throw io_error("load_dataset: response shape disagrees with spec");
  return SimDataset{std::move(xs), std::move(ys), std::move(model),
                    std::move(spec)};
}

}  // namespace dst2r
