#include <klabc/experiment.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kSmall = R"(master_seed = 21
n_proposals = 60
m_ratio = 1
nlatent = 2

[model]
kind = "gauss"
n_obs = 40
truth = [0.5]

[prior]
kind = "uniform_box"
lower = [-3.0]
upper = [3.0]

[discrepancy]
kind = "klc"

[discrepancy.discriminator]
preset = "lrd"
lambda = [0.001]

[kernel]
kind = "exponential"
)";

class Workspace {
 public:
  explicit Workspace(const std::string& name) : root_(fs::temp_directory_path() / ("klabc_cli_" + name)) {
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  ~Workspace() { fs::remove_all(root_); }

  fs::path path(const std::string& name) const { return root_ / name; }

  std::string write(const std::string& name, const std::string& body) const {
    std::ofstream(path(name), std::ios::binary) << body;
    return path(name).string();
  }

 private:
  fs::path root_;
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + KLABC_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST(Cli, RunWritesOutputs) {
  Workspace ws("outputs");
  const auto cfg = ws.write("c.toml", kSmall);
  ASSERT_EQ(run_cli("run --config " + cfg + " --output-dir " + ws.path("out").string()), 0);
  for (const char* f : {"run_manifest.toml", "reference_table.csv", "summary.csv"})
    EXPECT_TRUE(fs::exists(ws.path("out") / f)) << f;
  EXPECT_EQ(count_lines(ws.path("out") / "reference_table.csv"), 61u);
  const auto manifest = klabc::load_experiment((ws.path("out") / "run_manifest.toml").string());
  EXPECT_EQ(manifest.master_seed, 21u);
  EXPECT_EQ(manifest.n_proposals, 60u);
}

TEST(Cli, RepeatedRunsAndThreadCountsAgree) {
  Workspace ws("determinism");
  const auto cfg = ws.write("c.toml", kSmall);
  ASSERT_EQ(run_cli("run --config " + cfg + " --threads 1 --output-dir " + ws.path("a").string()), 0);
  ASSERT_EQ(run_cli("run --config " + cfg + " --threads 1 --output-dir " + ws.path("b").string()), 0);
  ASSERT_EQ(run_cli("run --config " + cfg + " --threads 3 --output-dir " + ws.path("c").string()), 0);
  for (const char* f : {"reference_table.csv", "summary.csv"}) {
    const std::string a = slurp(ws.path("a") / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(ws.path("b") / f)) << f;
    EXPECT_EQ(a, slurp(ws.path("c") / f)) << f;
  }
}

TEST(Cli, SeedOverrideChangesTable) {
  Workspace ws("seed");
  const auto cfg = ws.write("c.toml", kSmall);
  ASSERT_EQ(run_cli("run --config " + cfg + " --output-dir " + ws.path("a").string()), 0);
  ASSERT_EQ(run_cli("run --config " + cfg + " --seed 22 --output-dir " + ws.path("b").string()), 0);
  EXPECT_NE(slurp(ws.path("a") / "reference_table.csv"), slurp(ws.path("b") / "reference_table.csv"));
  EXPECT_NE(slurp(ws.path("b") / "run_manifest.toml").find("master_seed = 22"), std::string::npos);
}

TEST(Cli, SummarizeReproducesRunSummary) {
  Workspace ws("summarize");
  const auto cfg = ws.write("c.toml", kSmall);
  ASSERT_EQ(run_cli("run --config " + cfg + " --output-dir " + ws.path("a").string()), 0);
  const std::string table = (ws.path("a") / "reference_table.csv").string();
  ASSERT_EQ(run_cli("summarize --table " + table + " --config " + cfg + " --output-dir " + ws.path("b").string()), 0);
  EXPECT_EQ(slurp(ws.path("a") / "summary.csv"), slurp(ws.path("b") / "summary.csv"));
}

TEST(Cli, ExitCodes) {
  Workspace ws("exit");
  const std::string out = " --output-dir " + ws.path("out").string();
  EXPECT_EQ(run_cli("run --config " + ws.path("missing.toml").string() + out), 2);
  EXPECT_EQ(run_cli("run --config " + ws.write("bad.toml", "master_seed = \n") + out), 2);
  EXPECT_EQ(run_cli("run" + out), 2);
  EXPECT_EQ(run_cli("nosuchcommand"), 2);

  std::string with_data = kSmall;
  with_data.replace(with_data.find("n_obs = 40"), 10, "data = \"" + ws.path("nodata.csv").string() + "\"");
  EXPECT_EQ(run_cli("run --config " + ws.write("d.toml", with_data) + out), 3);
  ws.write("garbage.csv", "x\n1\nabc\n");
  with_data.replace(with_data.find("nodata.csv"), 10, "garbage.csv");
  EXPECT_EQ(run_cli("run --config " + ws.write("e.toml", with_data) + out), 3);
  EXPECT_EQ(run_cli("ingest-ohlc --input " + ws.path("none.csv").string() + " --output " +
                    ws.path("o.csv").string()),
            3);
}

TEST(Cli, IngestOhlc) {
  Workspace ws("ingest");
  const auto a = ws.write("a.csv", "date,open,high,low,close\n2020-01-02,1,1,1,1\n2020-01-01,100,110,95,105\n");
  const auto b = ws.write("b.csv", "date,open,high,low,close\n2020-01-01,1,1,1,1\n2020-01-02,2,2,2,2\n");
  const auto out = ws.path("sub/out.csv");
  ASSERT_EQ(run_cli("ingest-ohlc --input " + a + " --input " + b + " --output " + out.string()), 0);
  const klabc::Dataset d = klabc::read_dataset_csv(out.string());
  ASSERT_EQ(d.rows(), 2);
  ASSERT_EQ(d.cols(), 6);
  EXPECT_DOUBLE_EQ(d(0, 0), std::log(1.1));
  EXPECT_DOUBLE_EQ(d(0, 1), std::log(0.95));
  EXPECT_DOUBLE_EQ(d(0, 2), std::log(1.05));
  EXPECT_EQ(d(1, 3), 0.0);
}

TEST(Cli, KlGridAndCalibrateShapes) {
  Workspace ws("grid");
  const std::string grid = "\n[grid]\ncoords = [1]\nstart = [-1.0]\nstop = [2.0]\ncount = [4]\n";
  const std::string cal = "\n[calibrate]\ndiscriminators = [\"lrd\"]\nm_ratios = [1, 2]\nnlatents = [1, 2]\n";
  const auto cfg = ws.write("g.toml", kSmall + grid + cal);
  ASSERT_EQ(run_cli("kl-grid --config " + cfg + " --output-dir " + ws.path("g").string()), 0);
  EXPECT_EQ(count_lines(ws.path("g") / "grid.csv"), 1u + 4u);
  ASSERT_EQ(run_cli("calibrate --config " + cfg + " --output-dir " + ws.path("c").string()), 0);
  // discriminators x m_ratios x nlatents x grid nodes
  EXPECT_EQ(count_lines(ws.path("c") / "calibrate.csv"), 1u + 1u * 2u * 2u * 4u);
  EXPECT_EQ(run_cli("kl-grid --config " + ws.write("n.toml", kSmall) + " --output-dir " + ws.path("n").string()), 2);
}

TEST(Cli, RepeatWritesOneRowPerCoordinate) {
  Workspace ws("repeat");
  const auto cfg = ws.write("r.toml", "n_reps = 3\n" + kSmall);
  ASSERT_EQ(run_cli("repeat --config " + cfg + " --output-dir " + ws.path("r").string()), 0);
  EXPECT_EQ(count_lines(ws.path("r") / "repeat_summary.csv"), 2u);
}
