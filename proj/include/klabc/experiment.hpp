#ifndef KLABC_EXPERIMENT_HPP
#define KLABC_EXPERIMENT_HPP

#include <klabc/config.hpp>
#include <klabc/core.hpp>
#include <klabc/discrepancy.hpp>
#include <klabc/engine.hpp>
#include <klabc/evaluation.hpp>
#include <klabc/priors.hpp>
#include <klabc/simulators.hpp>

#include <boost/version.hpp>

#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace klabc {

inline constexpr const char* kVersion = "1.0.0";

struct ModelConfig {
  std::string kind = "gauss";
  std::size_t n_obs = 100;
  std::optional<ParamVector> truth;
  /// Observed data file; when empty the data are simulated at `truth`.
  std::string data_path;
  LVConfig lv;
  OHLCConfig ohlc;
  /// Known covariance of the Gaussian toy model.
  Eigen::MatrixXd gauss_sigma;
};

struct PriorConfig {
  std::string kind = "uniform_box";
  UniformBoxPrior box;
  /// "none", "mg1_gap" or "matrix".
  std::string transform = "none";
  NIWPrior niw;
};

struct CalibrateConfig {
  std::vector<std::string> discriminators{"lrd", "nnd1", "nnd2"};
  std::vector<double> m_ratios{1, 2, 3, 5};
  std::vector<std::uint64_t> nlatents{1, 5, 10};
};

struct ExperimentConfig {
  std::uint64_t master_seed = 0;
  std::size_t n_proposals = 1000;
  double m_ratio = 3.0;
  std::size_t nlatent = 10;
  std::size_t n_reps = 1;
  std::string output_dir = ".";
  ModelConfig model;
  PriorConfig prior;
  DiscrepancySpec discrepancy;
  KernelSpec kernel;
  std::vector<GridAxis> grid;
  CalibrateConfig calibrate;

  AbcConfig abc(std::size_t threads) const {
    AbcConfig a;
    a.n_proposals = n_proposals;
    a.m_ratio = m_ratio;
    a.nlatent = nlatent;
    a.kernel = kernel;
    a.master_seed = master_seed;
    a.threads = threads;
    return a;
  }
};

// ---------------------------------------------------------------------------
// Models and priors

using SimulatorFn = std::function<SimOutput(const ParamVector&, std::size_t, SeedSpec)>;
using PriorFn = std::function<ParamVector(SeedSpec)>;

struct Model {
  Eigen::Index dim = 0;
  std::vector<std::string> names;
  SimulatorFn simulate;
};

inline Eigen::Index brownian_dim(std::size_t assets) {
  const auto a = static_cast<Eigen::Index>(assets);
  return a + a * (a + 1) / 2;
}

inline Model make_model(const ModelConfig& mc) {
  Model m;
  if (mc.kind == "mg1") {
    m.dim = 3;
    m.names = default_coordinate_names(3);
    m.simulate = [](const ParamVector& t, std::size_t rows, SeedSpec s) { return simulate_mg1(t, rows, s); };
  } else if (mc.kind == "lv") {
    m.dim = 4;
    m.names = default_coordinate_names(4);
    const LVConfig cfg = mc.lv;
    m.simulate = [cfg](const ParamVector& t, std::size_t rows, SeedSpec s) { return simulate_lv(t, cfg, rows, s); };
  } else if (mc.kind == "gk") {
    m.dim = 4;
    m.names = {"A", "B", "g", "k"};
    m.simulate = [](const ParamVector& t, std::size_t rows, SeedSpec s) { return simulate_gk(t, rows, s); };
  } else if (mc.kind == "brownian") {
    const std::size_t a = mc.ohlc.assets;
    m.dim = brownian_dim(a);
    for (std::size_t i = 0; i < a; ++i) m.names.push_back("mu_" + std::to_string(i + 1));
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = i; j < a; ++j) m.names.push_back("sigma_" + std::to_string(i + 1) + std::to_string(j + 1));
    const OHLCConfig base = mc.ohlc;
    m.simulate = [base](const ParamVector& t, std::size_t rows, SeedSpec s) {
      OHLCConfig cfg = base;
      cfg.days = rows;
      return simulate_brownian_packed(t, cfg, s);
    };
  } else if (mc.kind == "gauss") {
    m.dim = mc.gauss_sigma.rows();
    for (Eigen::Index i = 0; i < m.dim; ++i) m.names.push_back("mu_" + std::to_string(i + 1));
    const Eigen::MatrixXd sigma = mc.gauss_sigma;
    m.simulate = [sigma](const ParamVector& t, std::size_t rows, SeedSpec s) {
      return simulate_gaussian_toy(t, sigma, rows, s);
    };
  } else {
    throw ConfigError("unknown model '" + mc.kind + "' (expected mg1, lv, gk, brownian, gauss)");
  }
  return m;
}

inline Eigen::Index prior_dim(const PriorConfig& pc) {
  return pc.kind == "niw" ? brownian_dim(static_cast<std::size_t>(pc.niw.dim())) : pc.box.dim();
}

inline PriorFn make_prior(const PriorConfig& pc) {
  if (pc.kind == "uniform_box") {
    const UniformBoxPrior box = pc.box;
    return [box](SeedSpec s) { return sample_uniform_box(box, s); };
  }
  if (pc.kind == "niw") {
    const NIWPrior niw = pc.niw;
    return [niw](SeedSpec s) {
      const NIWDraw draw = sample_niw(niw, s);
      return pack_mean_covariance(draw.mu, draw.sigma);
    };
  }
  throw ConfigError("unknown prior '" + pc.kind + "' (expected uniform_box or niw)");
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline FeatureMap parse_feature_map(const ConfigDocument& doc, const std::string& prefix, FeatureMap base) {
  if (doc.has(prefix + "features")) {
    try {
      base.kind = parse_feature_kind(doc.get_string(prefix + "features"));
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of(prefix + "features"), e.what());
    }
  }
  base.standardize = doc.get_bool(prefix + "standardize", base.standardize);
  if (doc.has(prefix + "scaling")) {
    try {
      base.scaling = parse_scaling(doc.get_string(prefix + "scaling"));
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of(prefix + "scaling"), e.what());
    }
  }
  return base;
}

inline DiscriminatorSpec parse_discriminator(const ConfigDocument& doc, const std::string& sec) {
  const std::string p = sec + ".";
  DiscriminatorSpec spec;
  auto guarded = [&](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of(p + key), e.what());
    }
  };
  if (doc.has(p + "preset")) guarded("preset", [&] { spec = discriminator_preset(doc.get_string(p + "preset")); });
  if (doc.has(p + "kind")) {
    const std::string kind = doc.get_string(p + "kind");
    if (kind == "l1_logistic") {
      spec.kind = DiscriminatorKind::kL1Logistic;
    } else if (kind == "mlp") {
      spec.kind = DiscriminatorKind::kMlp;
    } else {
      doc.fail(doc.line_of(p + "kind"), "unknown discriminator kind '" + kind + "' (expected l1_logistic or mlp)");
    }
  }
  spec.features = parse_feature_map(doc, p, spec.features);
  if (doc.has(p + "lambda")) spec.lambda_grid = doc.get_numbers(p + "lambda");
  spec.lambda_count = doc.get_uint(p + "lambda_count", spec.lambda_count);
  spec.lambda_min_ratio = doc.get_number(p + "lambda_min_ratio", spec.lambda_min_ratio);
  spec.cv_folds = doc.get_uint(p + "cv_folds", spec.cv_folds);
  spec.solver.max_iterations = static_cast<int>(doc.get_uint(p + "max_iterations", spec.solver.max_iterations));
  if (doc.has(p + "layer_sizes")) {
    spec.layer_sizes.clear();
    for (auto v : doc.get_uints(p + "layer_sizes")) spec.layer_sizes.push_back(v);
  }
  if (doc.has(p + "activations")) {
    spec.activations.clear();
    guarded("activations", [&] {
      for (const auto& a : doc.get_strings(p + "activations")) spec.activations.push_back(parse_activation(a));
    });
  }
  spec.training.epochs = doc.get_uint(p + "epochs", spec.training.epochs);
  spec.training.learning_rate = doc.get_number(p + "learning_rate", spec.training.learning_rate);
  spec.training.batch_size = doc.get_uint(p + "batch_size", spec.training.batch_size);
  spec.clip_eps = doc.get_number(p + "clip_eps", spec.clip_eps);
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    doc.fail(doc.line_of(p + (doc.has(p + "kind") ? "kind" : "preset")), e.what());
  }
  return spec;
}

}  // namespace detail

inline ExperimentConfig parse_experiment(const ConfigDocument& doc) {
  ExperimentConfig c;
  auto check = [&](bool ok, const std::string& key, const std::string& msg) {
    if (!ok) doc.fail(doc.line_of(key), msg);
  };

  c.master_seed = doc.get_uint("master_seed");
  c.n_proposals = doc.get_uint("n_proposals", c.n_proposals);
  check(c.n_proposals >= 1, "n_proposals", "n_proposals must be >= 1");
  c.m_ratio = doc.get_number("m_ratio", c.m_ratio);
  check(c.m_ratio > 0.0, "m_ratio", "m_ratio must be > 0");
  c.nlatent = doc.get_uint("nlatent", c.nlatent);
  check(c.nlatent >= 1, "nlatent", "nlatent must be >= 1");
  c.n_reps = doc.get_uint("n_reps", c.n_reps);
  check(c.n_reps >= 1, "n_reps", "n_reps must be >= 1");
  c.output_dir = doc.get_string("output_dir", c.output_dir);

  // model
  auto& mc = c.model;
  mc.kind = doc.get_string("model.kind");
  mc.data_path = doc.get_string("model.data", "");
  if (doc.has("model.truth")) mc.truth = doc.get_vector("model.truth");
  if (mc.data_path.empty()) {
    mc.n_obs = doc.get_uint("model.n_obs");
    check(mc.n_obs >= 2, "model.n_obs", "model.n_obs must be >= 2");
    if (!mc.truth) doc.fail(doc.line_of("model.kind"), "model.truth is required when model.data is not given");
  } else {
    mc.n_obs = doc.get_uint("model.n_obs", 0);
  }
  if (mc.kind == "lv") {
    mc.lv.x0 = static_cast<std::int64_t>(doc.get_uint("model.x0", static_cast<std::uint64_t>(mc.lv.x0)));
    mc.lv.y0 = static_cast<std::int64_t>(doc.get_uint("model.y0", static_cast<std::uint64_t>(mc.lv.y0)));
    mc.lv.record_dt = doc.get_number("model.record_dt", mc.lv.record_dt);
    mc.lv.horizon = doc.get_number("model.horizon", mc.lv.horizon);
    mc.lv.max_events = doc.get_uint("model.max_events", mc.lv.max_events);
    try {
      mc.lv.validate();
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of("model.kind"), e.what());
    }
  } else if (mc.kind == "brownian") {
    mc.ohlc.steps_per_day = doc.get_uint("model.steps_per_day", mc.ohlc.steps_per_day);
    mc.ohlc.assets = doc.get_uint("model.assets", mc.ohlc.assets);
    check(mc.ohlc.steps_per_day >= 1, "model.steps_per_day", "model.steps_per_day must be >= 1");
    check(mc.ohlc.assets >= 1, "model.assets", "model.assets must be >= 1");
  } else if (mc.kind == "gauss") {
    if (doc.has("model.sigma")) {
      mc.gauss_sigma = doc.get_matrix("model.sigma");
    } else {
      const Eigen::Index d = mc.truth ? mc.truth->size() : 1;
      mc.gauss_sigma = Eigen::MatrixXd::Identity(d, d);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(mc.gauss_sigma);
    check(mc.gauss_sigma.rows() == mc.gauss_sigma.cols() && llt.info() == Eigen::Success &&
              mc.gauss_sigma.isApprox(mc.gauss_sigma.transpose()),
          "model.sigma", "model.sigma must be symmetric positive definite");
  }
  Model model;
  try {
    model = make_model(mc);
  } catch (const ConfigError& e) {
    doc.fail(doc.line_of("model.kind"), e.what());
  }
  if (mc.truth) check(mc.truth->size() == model.dim, "model.truth", "model.truth must have " + std::to_string(model.dim) + " entries");

  // prior
  auto& pc = c.prior;
  pc.kind = doc.get_string("prior.kind");
  if (pc.kind == "uniform_box") {
    pc.box.lower = doc.get_vector("prior.lower");
    pc.box.upper = doc.get_vector("prior.upper");
    pc.transform = doc.get_string("prior.transform", "none");
    if (pc.transform == "mg1_gap") {
      check(pc.box.dim() == 3, "prior.transform", "mg1_gap transform needs a 3-dimensional box");
      pc.box.transform_matrix = mg1_gap_transform();
    } else if (pc.transform == "matrix") {
      pc.box.transform_matrix = doc.get_matrix("prior.transform_matrix");
      if (doc.has("prior.transform_offset")) pc.box.transform_offset = doc.get_vector("prior.transform_offset");
    } else if (pc.transform != "none") {
      doc.fail(doc.line_of("prior.transform"), "unknown transform '" + pc.transform + "' (expected none, mg1_gap, matrix)");
    }
    try {
      pc.box.validate();
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of("prior.lower"), e.what());
    }
  } else if (pc.kind == "niw") {
    pc.niw.mu0 = doc.get_vector("prior.mu0");
    pc.niw.lambda = doc.get_number("prior.lambda");
    pc.niw.phi = doc.get_matrix("prior.phi");
    pc.niw.nu = doc.get_number("prior.nu");
    try {
      pc.niw.validate();
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of("prior.kind"), e.what());
    }
  } else {
    doc.fail(doc.line_of("prior.kind"), "unknown prior '" + pc.kind + "' (expected uniform_box or niw)");
  }
  check(prior_dim(pc) == model.dim, "prior.kind",
        "prior dimension " + std::to_string(prior_dim(pc)) + " does not match model dimension " +
            std::to_string(model.dim));

  // discrepancy
  auto& dc = c.discrepancy;
  if (doc.has("discrepancy.kind")) {
    try {
      dc.kind = parse_discrepancy_kind(doc.get_string("discrepancy.kind"));
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of("discrepancy.kind"), e.what());
    }
  }
  if (doc.has("discrepancy.summaries")) {
    dc.summaries.clear();
    try {
      for (const auto& s : doc.get_strings("discrepancy.summaries")) dc.summaries.push_back(parse_summary_kind(s));
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of("discrepancy.summaries"), e.what());
    }
  }
  if (doc.has("discrepancy.semi_auto_features")) {
    try {
      dc.semi_auto_features = parse_feature_kind(doc.get_string("discrepancy.semi_auto_features"));
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of("discrepancy.semi_auto_features"), e.what());
    }
  }
  dc.pilot_size = doc.get_uint("discrepancy.pilot_size", 0);
  if (dc.pilot_size == 0) dc.pilot_size = std::max<std::size_t>(2, c.n_proposals / 10);
  dc.discriminator = detail::parse_discriminator(doc, "discrepancy.discriminator");

  // kernel
  auto& kc = c.kernel;
  if (doc.has("kernel.kind")) {
    try {
      kc.kind = parse_kernel_kind(doc.get_string("kernel.kind"));
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of("kernel.kind"), e.what());
    }
  }
  kc.accept_fraction = doc.get_number("kernel.accept_fraction", kc.accept_fraction);
  check(kc.accept_fraction > 0.0 && kc.accept_fraction <= 1.0, "kernel.accept_fraction",
        "kernel.accept_fraction must lie in (0, 1]; with 0 no proposal would be accepted");
  if (kc.kind == KernelKind::kAcceptReject) {
    check(kc.accept_fraction * static_cast<double>(c.n_proposals) >= 1.0 - 1e-9, "kernel.accept_fraction",
          "kernel.accept_fraction * n_proposals < 1: no proposal would be accepted");
  }
  kc.scale = doc.get_number("kernel.scale", 0.0);
  check(kc.scale >= 0.0, "kernel.scale", "kernel.scale must be > 0 (or 0 for the sample size)");
  if (kc.scale == 0.0) kc.scale = static_cast<double>(mc.n_obs);
  if (doc.has("kernel.aggregation")) {
    try {
      kc.aggregation = parse_aggregation(doc.get_string("kernel.aggregation"));
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of("kernel.aggregation"), e.what());
    }
  }

  // grid
  if (doc.has("grid.coords")) {
    const auto coords = doc.get_uints("grid.coords");
    const auto start = doc.get_numbers("grid.start");
    const auto stop = doc.get_numbers("grid.stop");
    const auto count = doc.get_uints("grid.count");
    check(start.size() == coords.size() && stop.size() == coords.size() && count.size() == coords.size(),
          "grid.coords", "grid.coords, grid.start, grid.stop and grid.count must have equal length");
    for (std::size_t a = 0; a < coords.size(); ++a) {
      check(coords[a] >= 1 && static_cast<Eigen::Index>(coords[a]) <= model.dim, "grid.coords",
            "grid.coords entries are 1-based parameter indices in [1, " + std::to_string(model.dim) + "]");
      check(count[a] >= 1, "grid.count", "grid.count entries must be >= 1");
      c.grid.push_back({static_cast<Eigen::Index>(coords[a] - 1), linspace(start[a], stop[a], count[a])});
    }
  }

  // calibrate
  if (doc.has("calibrate.discriminators")) c.calibrate.discriminators = doc.get_strings("calibrate.discriminators");
  for (const auto& name : c.calibrate.discriminators) {
    try {
      discriminator_preset(name);
    } catch (const ConfigError& e) {
      doc.fail(doc.line_of("calibrate.discriminators"), e.what());
    }
  }
  if (doc.has("calibrate.m_ratios")) c.calibrate.m_ratios = doc.get_numbers("calibrate.m_ratios");
  if (doc.has("calibrate.nlatents")) c.calibrate.nlatents = doc.get_uints("calibrate.nlatents");
  for (double r : c.calibrate.m_ratios) check(r > 0.0, "calibrate.m_ratios", "calibrate.m_ratios must be > 0");
  for (auto l : c.calibrate.nlatents) check(l >= 1, "calibrate.nlatents", "calibrate.nlatents must be >= 1");

  doc.check_unused();
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) { return parse_experiment(ConfigDocument::load(path)); }

// ---------------------------------------------------------------------------
// Echo

inline std::string discriminator_to_toml(const DiscriminatorSpec& s) {
  std::ostringstream o;
  o << "kind = " << toml_string(s.kind == DiscriminatorKind::kL1Logistic ? "l1_logistic" : "mlp") << '\n';
  o << "features = " << toml_string(to_string(s.features.kind)) << '\n';
  o << "standardize = " << (s.features.standardize ? "true" : "false") << '\n';
  o << "scaling = " << toml_string(to_string(s.features.scaling)) << '\n';
  o << "clip_eps = " << format_double(s.clip_eps) << '\n';
  if (s.kind == DiscriminatorKind::kL1Logistic) {
    if (!s.lambda_grid.empty()) o << "lambda = " << toml_numbers(s.lambda_grid) << '\n';
    o << "lambda_count = " << s.lambda_count << '\n';
    o << "lambda_min_ratio = " << format_double(s.lambda_min_ratio) << '\n';
    o << "cv_folds = " << s.cv_folds << '\n';
    o << "max_iterations = " << s.solver.max_iterations << '\n';
  } else {
    o << "layer_sizes = [";
    for (std::size_t i = 0; i < s.layer_sizes.size(); ++i) o << (i ? ", " : "") << s.layer_sizes[i];
    o << "]\nactivations = [";
    for (std::size_t i = 0; i < s.activations.size(); ++i) o << (i ? ", " : "") << toml_string(to_string(s.activations[i]));
    o << "]\n";
    o << "epochs = " << s.training.epochs << '\n';
    o << "learning_rate = " << format_double(s.training.learning_rate) << '\n';
    o << "batch_size = " << s.training.batch_size << '\n';
  }
  return o.str();
}

/// Fully resolved configuration; parses back to the same experiment.
inline std::string experiment_to_toml(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "master_seed = " << c.master_seed << '\n';
  o << "n_proposals = " << c.n_proposals << '\n';
  o << "m_ratio = " << format_double(c.m_ratio) << '\n';
  o << "nlatent = " << c.nlatent << '\n';
  o << "n_reps = " << c.n_reps << '\n';
  o << "output_dir = " << toml_string(c.output_dir) << '\n';

  const auto& mc = c.model;
  o << "\n[model]\nkind = " << toml_string(mc.kind) << '\n';
  o << "n_obs = " << mc.n_obs << '\n';
  if (mc.truth) o << "truth = " << toml_vector(*mc.truth) << '\n';
  if (!mc.data_path.empty()) o << "data = " << toml_string(mc.data_path) << '\n';
  if (mc.kind == "lv") {
    o << "x0 = " << mc.lv.x0 << "\ny0 = " << mc.lv.y0 << "\nrecord_dt = " << format_double(mc.lv.record_dt)
      << "\nhorizon = " << format_double(mc.lv.horizon) << "\nmax_events = " << mc.lv.max_events << '\n';
  } else if (mc.kind == "brownian") {
    o << "steps_per_day = " << mc.ohlc.steps_per_day << "\nassets = " << mc.ohlc.assets << '\n';
  } else if (mc.kind == "gauss") {
    o << "sigma = " << toml_matrix(mc.gauss_sigma) << '\n';
  }

  const auto& pc = c.prior;
  o << "\n[prior]\nkind = " << toml_string(pc.kind) << '\n';
  if (pc.kind == "uniform_box") {
    o << "lower = " << toml_vector(pc.box.lower) << "\nupper = " << toml_vector(pc.box.upper) << '\n';
    o << "transform = " << toml_string(pc.transform) << '\n';
    if (pc.transform == "matrix") {
      o << "transform_matrix = " << toml_matrix(*pc.box.transform_matrix) << '\n';
      if (pc.box.transform_offset) o << "transform_offset = " << toml_vector(*pc.box.transform_offset) << '\n';
    }
  } else {
    o << "mu0 = " << toml_vector(pc.niw.mu0) << "\nlambda = " << format_double(pc.niw.lambda)
      << "\nphi = " << toml_matrix(pc.niw.phi) << "\nnu = " << format_double(pc.niw.nu) << '\n';
  }

  const auto& dc = c.discrepancy;
  o << "\n[discrepancy]\nkind = " << toml_string(to_string(dc.kind)) << '\n';
  o << "summaries = [";
  for (std::size_t i = 0; i < dc.summaries.size(); ++i) o << (i ? ", " : "") << toml_string(to_string(dc.summaries[i]));
  o << "]\n";
  o << "semi_auto_features = " << toml_string(to_string(dc.semi_auto_features)) << '\n';
  o << "pilot_size = " << dc.pilot_size << '\n';
  o << "\n[discrepancy.discriminator]\n" << discriminator_to_toml(dc.discriminator);

  const auto& kc = c.kernel;
  o << "\n[kernel]\nkind = " << toml_string(to_string(kc.kind)) << '\n';
  o << "accept_fraction = " << format_double(kc.accept_fraction) << '\n';
  o << "scale = " << format_double(kc.scale) << '\n';
  o << "aggregation = " << toml_string(to_string(kc.aggregation)) << '\n';

  if (!c.grid.empty()) {
    o << "\n[grid]\ncoords = [";
    for (std::size_t a = 0; a < c.grid.size(); ++a) o << (a ? ", " : "") << c.grid[a].coord + 1;
    std::vector<double> start, stop;
    for (const auto& a : c.grid) {
      start.push_back(a.values.front());
      stop.push_back(a.values.back());
    }
    o << "]\nstart = " << toml_numbers(start) << "\nstop = " << toml_numbers(stop) << "\ncount = [";
    for (std::size_t a = 0; a < c.grid.size(); ++a) o << (a ? ", " : "") << c.grid[a].values.size();
    o << "]\n";
  }

  o << "\n[calibrate]\ndiscriminators = [";
  for (std::size_t i = 0; i < c.calibrate.discriminators.size(); ++i)
    o << (i ? ", " : "") << toml_string(c.calibrate.discriminators[i]);
  o << "]\nm_ratios = " << toml_numbers(c.calibrate.m_ratios) << "\nnlatents = [";
  for (std::size_t i = 0; i < c.calibrate.nlatents.size(); ++i) o << (i ? ", " : "") << c.calibrate.nlatents[i];
  o << "]\n";
  return o.str();
}

inline std::string run_manifest(const ExperimentConfig& c, const std::string& command) {
  std::ostringstream o;
  o << "# klabc run manifest\n";
  o << "# klabc " << kVersion << ", Eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
    << EIGEN_MINOR_VERSION << ", Boost " << BOOST_VERSION / 100000 << '.' << BOOST_VERSION / 100 % 1000 << '.'
    << BOOST_VERSION % 100 << '\n';
  o << "# command: " << command << '\n';
  o << "# seed: " << c.master_seed << "\n\n";
  o << experiment_to_toml(c);
  return o.str();
}

// ---------------------------------------------------------------------------
// Drivers

/// Master seed of replicate r; replicate 0 uses the configured seed.
inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t rep) {
  return rep == 0 ? master : hash_seed(derive_stream(master, Purpose::kReplicate, rep));
}

/// Observed data: the configured file, or a simulation at the truth from
/// stream (observed, 0).
inline Dataset observed_data(const ExperimentConfig& c, const Model& model, std::uint64_t master) {
  if (!c.model.data_path.empty()) {
    Dataset d = read_dataset_csv(c.model.data_path);
    if (c.model.n_obs != 0 && static_cast<std::size_t>(d.rows()) != c.model.n_obs) {
      throw DataError(c.model.data_path + ": expected " + std::to_string(c.model.n_obs) + " rows, found " +
                      std::to_string(d.rows()));
    }
    return d;
  }
  return model.simulate(*c.model.truth, c.model.n_obs, derive_stream(master, Purpose::kObserved, 0)).data;
}

/// Semi-automatic summaries are fitted on a pilot drawn from `master`.
inline Discrepancy make_discrepancy(const DiscrepancySpec& spec, const Model& model, const PriorFn& prior,
                                    std::size_t fake_rows, std::uint64_t master, std::size_t threads) {
  if (spec.kind != DiscrepancyKind::kSemiAuto) return Discrepancy(spec);
  return Discrepancy(spec, run_semi_auto_pilot(prior, model.simulate, spec.pilot_size, fake_rows,
                                               spec.semi_auto_features, master, threads));
}

struct RunResult {
  ReferenceTable table;
  PosteriorSummary summary;
  Dataset real;
  std::size_t flagged_rows = 0;
};

inline RunResult run_experiment(const ExperimentConfig& c, std::size_t rep = 0, std::size_t threads = 0) {
  const Model model = make_model(c.model);
  const PriorFn prior = make_prior(c.prior);
  ExperimentConfig local = c;
  local.master_seed = replicate_seed(c.master_seed, rep);
  RunResult r;
  r.real = observed_data(local, model, local.master_seed);
  const AbcConfig abc = local.abc(threads);
  const std::size_t m = abc.fake_rows(static_cast<std::size_t>(r.real.rows()));
  const Discrepancy metric = make_discrepancy(c.discrepancy, model, prior, m, local.master_seed, threads);
  ReferenceTable table = build_reference_table(abc, prior, model.simulate, metric, r.real, to_string(c.discrepancy.kind));
  r.table = apply_kernel(std::move(table), c.kernel, static_cast<std::size_t>(r.real.rows()));
  for (const auto& row : r.table.rows)
    if (row.flags) ++r.flagged_rows;
  r.summary = summarize(r.table, c.model.truth, model.names);
  return r;
}

struct RepeatResult {
  RepeatSummary summary;
  std::vector<std::string> errors;
};

inline RepeatResult repeat_experiment(const ExperimentConfig& c, std::size_t threads = 0) {
  RepeatResult out;
  std::vector<PosteriorSummary> reps;
  for (std::size_t r = 0; r < c.n_reps; ++r) {
    try {
      reps.push_back(run_experiment(c, r, threads).summary);
    } catch (const std::exception& e) {
      out.errors.push_back("rep " + std::to_string(r) + ": " + e.what());
    }
  }
  out.summary = aggregate_summaries(reps, out.errors.size());
  if (reps.empty()) {
    out.summary.metric = to_string(c.discrepancy.kind);
    out.summary.kernel = to_string(c.kernel.kind);
  }
  return out;
}

inline GridResult run_kl_grid(const ExperimentConfig& c, std::size_t threads = 0) {
  if (c.grid.empty()) throw ConfigError("kl-grid: the [grid] section is required");
  if (!c.model.truth) throw ConfigError("kl-grid: model.truth is required to fix the remaining coordinates");
  const Model model = make_model(c.model);
  const PriorFn prior = make_prior(c.prior);
  const Dataset real = observed_data(c, model, c.master_seed);
  const std::size_t m = c.abc(threads).fake_rows(static_cast<std::size_t>(real.rows()));
  const Discrepancy metric = make_discrepancy(c.discrepancy, model, prior, m, c.master_seed, threads);
  GridOptions opt{m, c.nlatent, c.master_seed, threads};
  return kl_grid(real, model.simulate, c.grid, *c.model.truth, metric, opt);
}

struct CalibrationRow {
  std::string discriminator;
  double m_ratio = 0.0;
  std::size_t nlatent = 0;
  std::string coordinate;
  double value = 0.0;
  double khat = 0.0;
  double khat_rescaled = 0.0;
};

/// One-axis discrepancy curves (other coordinates at the truth) for every
/// discriminator preset x m/n ratio x nlatent cell, each rescaled to min 0.
inline std::vector<CalibrationRow> run_calibration(const ExperimentConfig& c, std::size_t threads = 0) {
  if (c.grid.empty()) throw ConfigError("calibrate: the [grid] section is required");
  if (!c.model.truth) throw ConfigError("calibrate: model.truth is required");
  const Model model = make_model(c.model);
  const Dataset real = observed_data(c, model, c.master_seed);
  std::vector<CalibrationRow> rows;
  for (const auto& name : c.calibrate.discriminators) {
    DiscrepancySpec spec = c.discrepancy;
    spec.kind = DiscrepancyKind::kKlc;
    spec.discriminator = discriminator_preset(name);
    const Discrepancy metric(spec);
    for (double ratio : c.calibrate.m_ratios) {
      AbcConfig abc = c.abc(threads);
      abc.m_ratio = ratio;
      const std::size_t m = abc.fake_rows(static_cast<std::size_t>(real.rows()));
      for (auto nl : c.calibrate.nlatents) {
        for (const auto& axis : c.grid) {
          GridOptions opt{m, static_cast<std::size_t>(nl), c.master_seed, threads};
          const GridResult g = kl_grid(real, model.simulate, {axis}, *c.model.truth, metric, opt);
          for (std::size_t k = 0; k < g.nodes.size(); ++k) {
            rows.push_back({name, ratio, static_cast<std::size_t>(nl), model.names[static_cast<std::size_t>(axis.coord)],
                            axis.values[k], g.khat[k], g.khat_rescaled[k]});
          }
        }
      }
    }
  }
  return rows;
}

inline void write_calibration_csv(const std::vector<CalibrationRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "discriminator,m_ratio,nlatent,coordinate,value,khat,khat_rescaled\n";
  for (const auto& r : rows) {
    out << r.discriminator << ',' << format_double(r.m_ratio) << ',' << r.nlatent << ',' << r.coordinate << ','
        << format_double(r.value) << ',' << format_double(r.khat) << ',' << format_double(r.khat_rescaled) << '\n';
  }
}

}  // namespace klabc

#endif  // KLABC_EXPERIMENT_HPP
