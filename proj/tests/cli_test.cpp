// Drives the installed binary end to end: exit codes, artifact layout,
// JSON contracts, and byte-for-byte determinism of reruns and resumes.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uniclr/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string bin_path() {
  const char* p = std::getenv("UNICLR_BIN");
  EXPECT_NE(p, nullptr) << "UNICLR_BIN must point at the uniclr binary";
  return p ? p : "";
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string quoted(const std::string& s) { return "'" + s + "'"; }

RunResult run_cli(const std::vector<std::string>& args) {
  static int invocation = 0;
  const fs::path dir = fs::temp_directory_path() / "uniclr_cli_io";
  fs::create_directories(dir);
  const fs::path out_file = dir / ("out" + std::to_string(invocation) + ".txt");
  const fs::path err_file = dir / ("err" + std::to_string(invocation) + ".txt");
  ++invocation;

  std::string cmd = quoted(bin_path());
  for (const std::string& a : args) cmd += " " + quoted(a);
  cmd += " > " + quoted(out_file.string()) + " 2> " + quoted(err_file.string());

  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out_file);
  r.err = read_file(err_file);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "uniclr_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

// Small run so every CLI test finishes in milliseconds.
std::vector<std::string> tiny_train_args(const fs::path& out) {
  return {"train",        "--config",
          "blobs_simaffinity", "--out",
          out.string(),   "--set",
          "data.samples=96",   "--set",
          "data.dim=8",        "--set",
          "train.epochs=4",    "--set",
          "train.batch_size=32", "--set",
          "train.warmup_epochs=1", "--set",
          "train.eval_every=2",  "--set",
          "train.hidden_dims=16", "--set",
          "train.embed_dim=4"};
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST(Cli, VersionAndHelp) {
  RunResult v = run_cli({"--version"});
  EXPECT_EQ(v.exit_code, 0);
  EXPECT_EQ(v.out, "uniclr 1.0.0\n");

  RunResult h = run_cli({"help"});
  EXPECT_EQ(h.exit_code, 0);
  EXPECT_NE(h.out.find("usage:"), std::string::npos);
  EXPECT_NE(h.out.find("gradcheck"), std::string::npos);
}

TEST(Cli, UnknownCommandAndOptionExitTwo) {
  RunResult c = run_cli({"frobnicate"});
  EXPECT_EQ(c.exit_code, 2);
  EXPECT_NE(c.err.find("unknown command"), std::string::npos);

  RunResult o = run_cli({"gradcheck", "--bogus", "1"});
  EXPECT_EQ(o.exit_code, 2);
  EXPECT_NE(o.err.find("unknown option"), std::string::npos);
}

TEST(Cli, TrainProducesArtifactsAndMetrics) {
  const fs::path out = fresh_dir("train_artifacts");
  RunResult r = run_cli(tiny_train_args(out));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("done: 4/4 epochs"), std::string::npos);
  EXPECT_NE(r.out.find("[epoch 1/4]"), std::string::npos);

  for (const char* name :
       {"metrics.csv", "checkpoint.bin", "config.ini", "summary.json",
        "manifest.json"})
    EXPECT_TRUE(fs::exists(out / name)) << name;

  const std::string csv = read_file(out / "metrics.csv");
  EXPECT_EQ(csv.rfind(std::string(uniclr::kMetricsHeader) + "\n", 0), 0u);
  EXPECT_EQ(count_lines(csv), 5);  // header + one row per epoch

  // The emitted config snapshot is itself a loadable config.
  RunResult reparse = run_cli({"gen-data", "--config",
                               (out / "config.ini").string(), "--out",
                               (out / "reparse.csv").string()});
  EXPECT_EQ(reparse.exit_code, 0) << reparse.err;
}

TEST(Cli, SummaryAndManifestContract) {
  const fs::path out = fresh_dir("train_summary");
  ASSERT_EQ(run_cli(tiny_train_args(out)).exit_code, 0);

  const json summary = json::parse(read_file(out / "summary.json"));
  EXPECT_EQ(summary.at("tool"), "uniclr");
  EXPECT_EQ(summary.at("version"), "1.0.0");
  EXPECT_EQ(summary.at("command"), "train");
  EXPECT_EQ(summary.at("schedule_epochs"), 4);
  EXPECT_EQ(summary.at("epochs_completed"), 4);
  EXPECT_EQ(summary.at("wall_secs"), 0.0);  // timing off by default
  EXPECT_EQ(summary.at("dataset").at("samples"), 96);
  EXPECT_EQ(summary.at("dataset").at("dim"), 8);
  EXPECT_EQ(summary.at("dataset").at("classes"), 6);
  const std::string fp = summary.at("dataset").at("fingerprint");
  EXPECT_EQ(fp.size(), 16u);
  EXPECT_EQ(summary.at("final").at("epoch"), 4);
  EXPECT_TRUE(summary.at("final").contains("knn_acc"));  // eval_every hits 4

  const json manifest = json::parse(read_file(out / "manifest.json"));
  EXPECT_EQ(manifest.at("dataset_fingerprint"), fp);
  EXPECT_EQ(manifest.at("artifacts").at("metrics"), "metrics.csv");
  EXPECT_EQ(manifest.at("artifacts").at("checkpoint"), "checkpoint.bin");
  EXPECT_EQ(manifest.at("artifacts").at("config"), "config.ini");
  EXPECT_EQ(manifest.at("artifacts").at("summary"), "summary.json");
}

TEST(Cli, RerunIsByteIdentical) {
  const fs::path a = fresh_dir("rerun_a");
  const fs::path b = fresh_dir("rerun_b");
  ASSERT_EQ(run_cli(tiny_train_args(a)).exit_code, 0);
  ASSERT_EQ(run_cli(tiny_train_args(b)).exit_code, 0);
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
  EXPECT_EQ(read_file(a / "checkpoint.bin"), read_file(b / "checkpoint.bin"));
  EXPECT_EQ(read_file(a / "summary.json"), read_file(b / "summary.json"));
}

TEST(Cli, ResumeMatchesSingleRun) {
  const fs::path full = fresh_dir("resume_full");
  const fs::path part1 = fresh_dir("resume_part1");
  const fs::path part2 = fresh_dir("resume_part2");
  ASSERT_EQ(run_cli(tiny_train_args(full)).exit_code, 0);

  std::vector<std::string> first = tiny_train_args(part1);
  first.push_back("--set");
  first.push_back("train.stop_after=2");
  RunResult r1 = run_cli(first);
  ASSERT_EQ(r1.exit_code, 0) << r1.err;
  EXPECT_NE(r1.out.find("done: 2/4 epochs"), std::string::npos);

  std::vector<std::string> second = tiny_train_args(part2);
  second.push_back("--resume");
  second.push_back((part1 / "checkpoint.bin").string());
  RunResult r2 = run_cli(second);
  ASSERT_EQ(r2.exit_code, 0) << r2.err;
  EXPECT_NE(r2.out.find("done: 4/4 epochs"), std::string::npos);

  EXPECT_EQ(read_file(part2 / "checkpoint.bin"), read_file(full / "checkpoint.bin"));

  // Each segment logs only its own epochs; stitching them reproduces the
  // single-run CSV.
  const std::string header = std::string(uniclr::kMetricsHeader) + "\n";
  const std::string rows1 = read_file(part1 / "metrics.csv").substr(header.size());
  const std::string rows2 = read_file(part2 / "metrics.csv").substr(header.size());
  EXPECT_EQ(header + rows1 + rows2, read_file(full / "metrics.csv"));
}

TEST(Cli, ConfigErrorsExitTwo) {
  const fs::path out = fresh_dir("bad_cfg");
  std::vector<std::string> args = tiny_train_args(out);
  args.push_back("--set");
  args.push_back("loss.tau=-1");
  RunResult r = run_cli(args);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("tau"), std::string::npos);
}

TEST(Cli, DivergenceExitsThree) {
  const fs::path out = fresh_dir("diverge");
  std::vector<std::string> args = tiny_train_args(out);
  args.push_back("--set");
  args.push_back("train.base_lr=1e300");
  RunResult r = run_cli(args);
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("diverged"), std::string::npos);
}

TEST(Cli, MissingConfigFileExitsFour) {
  RunResult r = run_cli({"train", "--config", "/nonexistent/uniclr.ini",
                         "--out", fresh_dir("io_err").string()});
  EXPECT_EQ(r.exit_code, 4);
}

TEST(Cli, GradcheckPassesAndFaultInjectionTrips) {
  RunResult ok = run_cli({"gradcheck", "--seeds", "1", "--dims", "3",
                          "--batches", "4"});
  EXPECT_EQ(ok.exit_code, 0) << ok.err;
  EXPECT_NE(ok.out.find("within tolerance"), std::string::npos);
  EXPECT_NE(ok.out.find("simaffinity"), std::string::npos);
  EXPECT_NE(ok.out.find("pass"), std::string::npos);

  RunResult bad = run_cli({"gradcheck", "--seeds", "1", "--dims", "3",
                           "--batches", "4", "--inject-backward-fault"});
  EXPECT_EQ(bad.exit_code, 5);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST(Cli, EvalReportContract) {
  const fs::path out = fresh_dir("eval_train");
  ASSERT_EQ(run_cli(tiny_train_args(out)).exit_code, 0);

  std::vector<std::string> args = tiny_train_args(fresh_dir("unused"));
  args[0] = "eval";  // reuse the same --set overrides so dims match
  args.insert(args.begin() + 1, {"--checkpoint", (out / "checkpoint.bin").string()});
  // Drop the --out pair; eval treats --out as a report path, not a dir.
  std::vector<std::string> eval_args;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out") {
      ++i;
      continue;
    }
    eval_args.push_back(args[i]);
  }
  eval_args.push_back("--out");
  eval_args.push_back((out / "report.json").string());

  RunResult r = run_cli(eval_args);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const json report = json::parse(r.out);
  EXPECT_EQ(report.at("command"), "eval");
  EXPECT_EQ(report.at("checkpoint_epochs"), 4);
  const int train_n = report.at("split").at("train");
  const int test_n = report.at("split").at("test");
  EXPECT_EQ(train_n + test_n, 96);
  const double knn = report.at("knn").at("accuracy");
  EXPECT_GE(knn, 0.0);
  EXPECT_LE(knn, 1.0);
  EXPECT_TRUE(report.contains("linear_probe"));
  EXPECT_GT(report.at("collapse").at("effective_rank").get<double>(), 0.0);
  EXPECT_EQ(read_file(out / "report.json"), r.out);

  // knn-only protocol omits the probe section.
  eval_args.push_back("--protocol");
  eval_args.push_back("knn");
  // Point --out somewhere else so the first report file stays intact.
  eval_args[eval_args.size() - 3] = (out / "report2.json").string();
  RunResult knn_only = run_cli(eval_args);
  ASSERT_EQ(knn_only.exit_code, 0) << knn_only.err;
  const json report2 = json::parse(knn_only.out);
  EXPECT_TRUE(report2.contains("knn"));
  EXPECT_FALSE(report2.contains("linear_probe"));
}

TEST(Cli, EvalRejectsDimMismatch) {
  const fs::path out = fresh_dir("eval_dim");
  ASSERT_EQ(run_cli(tiny_train_args(out)).exit_code, 0);
  RunResult r = run_cli({"eval", "--checkpoint", (out / "checkpoint.bin").string(),
                         "--config", "blobs_simaffinity", "--set",
                         "data.samples=96"});  // default dim 16 != encoder dim 8
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("does not match encoder input dim"), std::string::npos);
}

TEST(Cli, PlotWritesSvg) {
  const fs::path out = fresh_dir("plot_train");
  ASSERT_EQ(run_cli(tiny_train_args(out)).exit_code, 0);
  const fs::path svg = out / "loss.svg";
  RunResult r = run_cli({"plot", "--metrics", (out / "metrics.csv").string(),
                         "--column", "loss", "--out", svg.string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("wrote"), std::string::npos);
  const std::string body = read_file(svg);
  EXPECT_NE(body.find("<svg"), std::string::npos);
  EXPECT_NE(body.find("polyline"), std::string::npos);
  EXPECT_NE(body.find("epoch"), std::string::npos);

  RunResult bad = run_cli({"plot", "--metrics", (out / "metrics.csv").string(),
                           "--column", "nonsense", "--out", svg.string()});
  EXPECT_EQ(bad.exit_code, 2);
}

TEST(Cli, GenDataWritesLoadableCsv) {
  const fs::path dir = fresh_dir("gendata");
  fs::create_directories(dir);
  const fs::path csv = dir / "blobs.csv";
  RunResult r = run_cli({"gen-data", "--config", "blobs_simaffinity", "--set",
                         "data.samples=50", "--set", "data.dim=8", "--out",
                         csv.string()});
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("50 samples"), std::string::npos);
  const std::string body = read_file(csv);
  EXPECT_EQ(body.rfind("f0,", 0), 0u);
  EXPECT_EQ(count_lines(body), 51);  // header + 50 rows

  // The generated file round-trips through the csv source.
  const fs::path out = fresh_dir("gendata_train");
  RunResult t = run_cli({"train", "--config", "blobs_simaffinity", "--out",
                         out.string(), "--set", "data.source=csv", "--set",
                         "data.path=" + csv.string(), "--set", "train.epochs=1",
                         "--set", "train.batch_size=16", "--set",
                         "train.hidden_dims=16", "--set", "train.embed_dim=4",
                         "--set", "train.warmup_epochs=0"});
  EXPECT_EQ(t.exit_code, 0) << t.err;
}
