// klabc: command-line front end for the ABC engine.

#include <klabc/experiment.hpp>
#include <klabc/ohlc.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace klabc;

namespace {

enum ExitCode { kOk = 0, kConfigExit = 2, kDataExit = 3, kRuntimeExit = 4 };

struct CommonOptions {
  std::string config;
  std::size_t threads = 0;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
};

void log_line(const std::string& msg) { std::cerr << "[klabc] " << msg << std::endl; }

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_config = true) {
  auto* c = cmd->add_option("--config", o.config, "experiment config (TOML)");
  if (needs_config) c->required();
  cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
  cmd->add_option("--output-dir", o.output_dir, "output directory (overrides config)");
  cmd->add_option("--seed", o.seed, "master seed (overrides config)");
}

ExperimentConfig load(const CommonOptions& o) {
  ExperimentConfig c = load_experiment(o.config);
  if (o.seed) c.master_seed = *o.seed;
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  fs::create_directories(c.output_dir);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_run(const CommonOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = load(o);
  const fs::path dir(c.output_dir);
  write_text(dir / "run_manifest.toml", run_manifest(c, "run"));
  log_line("run: model " + c.model.kind + ", " + std::to_string(c.n_proposals) + " proposals, discrepancy " +
           to_string(c.discrepancy.kind) + ", kernel " + to_string(c.kernel.kind));
  const RunResult r = run_experiment(c, 0, o.threads);
  write_reference_table(r.table, (dir / "reference_table.csv").string());
  write_summary_csv(r.summary, (dir / "summary.csv").string());
  char ess[64];
  std::snprintf(ess, sizeof ess, "%.2f", r.summary.ess);
  log_line("run: done in " + std::to_string(static_cast<int>(seconds_since(t0))) + " s, ESS " + ess + ", " +
           std::to_string(r.flagged_rows) + " flagged rows");
  return kOk;
}

int cmd_repeat(const CommonOptions& o) {
  const ExperimentConfig c = load(o);
  const fs::path dir(c.output_dir);
  write_text(dir / "run_manifest.toml", run_manifest(c, "repeat"));
  log_line("repeat: " + std::to_string(c.n_reps) + " replicates");
  const RepeatResult r = repeat_experiment(c, o.threads);
  for (const auto& e : r.errors) log_line("repeat: failed " + e);
  write_repeat_csv(r.summary, (dir / "repeat_summary.csv").string());
  return kOk;
}

int cmd_kl_grid(const CommonOptions& o) {
  const ExperimentConfig c = load(o);
  const fs::path dir(c.output_dir);
  write_text(dir / "run_manifest.toml", run_manifest(c, "kl-grid"));
  const GridResult g = run_kl_grid(c, o.threads);
  write_grid_csv(g, (dir / "grid.csv").string());
  const auto& best = g.nodes[g.argmin()];
  std::string at;
  for (const auto& a : g.axes) at += " theta_" + std::to_string(a.coord + 1) + "=" + format_double(best[a.coord]);
  log_line("kl-grid: " + std::to_string(g.nodes.size()) + " nodes, argmin at" + at);
  return kOk;
}

int cmd_calibrate(const CommonOptions& o) {
  const ExperimentConfig c = load(o);
  const fs::path dir(c.output_dir);
  write_text(dir / "run_manifest.toml", run_manifest(c, "calibrate"));
  const auto rows = run_calibration(c, o.threads);
  write_calibration_csv(rows, (dir / "calibrate.csv").string());
  log_line("calibrate: " + std::to_string(rows.size()) + " rows");
  return kOk;
}

int cmd_summarize(const CommonOptions& o, const std::string& table_path, const std::vector<double>& truth_values) {
  const ReferenceTable table = read_reference_table(table_path);
  std::optional<ParamVector> truth;
  std::vector<std::string> names;
  std::string out_dir = o.output_dir.empty() ? "." : o.output_dir;
  if (!o.config.empty()) {
    const ExperimentConfig c = load_experiment(o.config);
    truth = c.model.truth;
    names = make_model(c.model).names;
    if (o.output_dir.empty()) out_dir = c.output_dir;
  }
  if (!truth_values.empty()) {
    truth = Eigen::Map<const Eigen::VectorXd>(truth_values.data(), static_cast<Eigen::Index>(truth_values.size()));
  }
  fs::create_directories(out_dir);
  const PosteriorSummary s = summarize(table, truth, names);
  write_summary_csv(s, (fs::path(out_dir) / "summary.csv").string());
  return kOk;
}

int cmd_ingest(const std::vector<std::string>& inputs, const std::string& output) {
  std::vector<std::vector<OhlcRecord>> assets;
  for (const auto& p : inputs) assets.push_back(read_ohlc_csv(p));
  const Dataset d = ingest_ohlc(assets, inputs);
  const fs::path out(output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_dataset_csv(d, output);
  log_line("ingest-ohlc: " + std::to_string(d.rows()) + " days x " + std::to_string(inputs.size()) + " assets");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate Bayesian computation with classification-based KL discrepancies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("klabc ") + kVersion);

  CommonOptions run_opt, repeat_opt, grid_opt, cal_opt, sum_opt;
  auto* run = app.add_subcommand("run", "build the reference table and posterior summary");
  add_common(run, run_opt);
  auto* repeat = app.add_subcommand("repeat", "repeat the experiment over fresh observed datasets");
  add_common(repeat, repeat_opt);
  auto* grid = app.add_subcommand("kl-grid", "evaluate the discrepancy over a parameter grid");
  add_common(grid, grid_opt);
  auto* cal = app.add_subcommand("calibrate", "discriminator x m/n x nlatent calibration curves");
  add_common(cal, cal_opt);

  auto* sum = app.add_subcommand("summarize", "recompute the posterior summary of a reference table");
  add_common(sum, sum_opt, false);
  std::string table_path;
  std::vector<double> truth_values;
  sum->add_option("--table", table_path, "reference_table.csv")->required();
  sum->add_option("--truth", truth_values, "ground-truth parameter vector")->delimiter(',');

  auto* ingest = app.add_subcommand("ingest-ohlc", "convert per-asset OHLC CSVs to a log-price dataset");
  std::vector<std::string> inputs;
  std::string output;
  ingest->add_option("--input", inputs, "asset CSV (date,open,high,low,close); repeat per asset")->required();
  ingest->add_option("--output", output, "output dataset CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  try {
    if (*run) return cmd_run(run_opt);
    if (*repeat) return cmd_repeat(repeat_opt);
    if (*grid) return cmd_kl_grid(grid_opt);
    if (*cal) return cmd_calibrate(cal_opt);
    if (*sum) return cmd_summarize(sum_opt, table_path, truth_values);
    if (*ingest) return cmd_ingest(inputs, output);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kConfigExit;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return kDataExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kRuntimeExit;
  }
  return kOk;
}
