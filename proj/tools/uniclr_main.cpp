// Command line front end: train / eval / gradcheck / plot / gen-data.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uniclr/config.hpp"
#include "uniclr/data.hpp"
#include "uniclr/encoder.hpp"
#include "uniclr/errors.hpp"
#include "uniclr/eval.hpp"
#include "uniclr/gradcheck.hpp"
#include "uniclr/plot.hpp"
#include "uniclr/trainer.hpp"
#include "uniclr/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uniclr;

namespace {

const char* kUsage = R"(usage: uniclr <command> [options]

commands:
  train      fit an encoder and write metrics/checkpoint artifacts
  eval       score a saved encoder with knn and/or a linear probe
  gradcheck  audit every loss variant's gradients against finite differences
  plot       render metrics CSVs as an SVG line chart
  gen-data   materialize a dataset recipe as a CSV file

common options:
  --config <preset|path>   built-in preset name or an INI file
  --set section.key=value  override one config entry (repeatable)
  --help                   command usage
  --version                print the tool version

presets: blobs_simaffinity, blobs_simwhitening, blobs_simtrace,
         blobs_infonce, moons_simaffinity
)";

const char* kTrainUsage = R"(usage: uniclr train --config <preset|path> --out <dir>
                    [--set section.key=value]... [--resume <checkpoint>]

Writes into --out: metrics.csv, checkpoint.bin, config.ini (canonical
snapshot), summary.json, manifest.json. A resumed run writes the rows for the
epochs it executed; concatenating the segments reproduces the single-run CSV.
)";

const char* kEvalUsage = R"(usage: uniclr eval --checkpoint <path> --config <preset|path>
                   [--set section.key=value]... [--protocol knn|linear|both]
                   [--out <json path>]

Re-creates the dataset and the held-out split from the config, embeds it with
the saved encoder, and reports accuracy plus collapse diagnostics as JSON on
stdout (and into --out when given).
)";

const char* kGradcheckUsage = R"(usage: uniclr gradcheck [--step <h>] [--tol <t>] [--seeds <n>]
                        [--dims d1,d2,...] [--batches n1,n2,...]
                        [--inject-backward-fault]

Compares recorded gradients of every loss variant (and each individual term)
against central finite differences over random inputs. Any row beyond the
tolerance fails the audit (exit code 5). The fault flag deliberately corrupts
one backward rule to prove the audit catches it.
)";

const char* kPlotUsage = R"(usage: uniclr plot --metrics <csv> [--metrics <csv>]... --out <svg>
                   [--column <name>] [--title <text>]

Columns: loss, ce_term, sym_term, lr, feat_std, eff_rank, knn_acc (default),
secs. One line per input file, labeled by file stem.
)";

const char* kGenDataUsage = R"(usage: uniclr gen-data --config <preset|path> --out <csv>
                       [--set section.key=value]...

Materializes the [data] section as a labeled CSV (features f0..fD-1, label).
)";

struct Args {
  std::map<std::string, std::vector<std::string>> values;
  std::set<std::string> flags;
};

Args parse_args(int argc, char** argv, int start, const std::string& cmd,
                const std::set<std::string>& valued,
                const std::set<std::string>& boolean) {
  Args out;
  for (int i = start; i < argc; ++i) {
    std::string arg = argv[i];
    std::string inline_value;
    bool has_inline = false;
    const std::size_t eq = arg.find('=');
    if (arg.rfind("--", 0) == 0 && eq != std::string::npos) {
      inline_value = arg.substr(eq + 1);
      arg = arg.substr(0, eq);
      has_inline = true;
    }
    if (boolean.count(arg)) {
      if (has_inline)
        raise(ErrorKind::Config, "option '" + arg + "' takes no value");
      out.flags.insert(arg);
      continue;
    }
    if (valued.count(arg)) {
      if (has_inline) {
        out.values[arg].push_back(inline_value);
      } else {
        if (i + 1 >= argc)
          raise(ErrorKind::Config, "option '" + arg + "' needs a value");
        out.values[arg].push_back(argv[++i]);
      }
      continue;
    }
    raise(ErrorKind::Config, "unknown option '" + arg + "' for " + cmd);
  }
  return out;
}

std::string require_one(const Args& args, const std::string& key,
                        const std::string& cmd) {
  auto it = args.values.find(key);
  if (it == args.values.end() || it->second.empty())
    raise(ErrorKind::Config, cmd + " requires " + key);
  if (it->second.size() > 1)
    raise(ErrorKind::Config, key + " given more than once");
  return it->second.front();
}

std::optional<std::string> get_one(const Args& args, const std::string& key) {
  auto it = args.values.find(key);
  if (it == args.values.end() || it->second.empty()) return std::nullopt;
  if (it->second.size() > 1)
    raise(ErrorKind::Config, key + " given more than once");
  return it->second.front();
}

ExperimentConfig config_from_args(const Args& args, const std::string& cmd) {
  ExperimentConfig cfg = load_config(require_one(args, "--config", cmd));
  auto it = args.values.find("--set");
  if (it != args.values.end())
    for (const std::string& spec : it->second) apply_override(cfg, spec);
  finalize_config(cfg);
  return cfg;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) raise(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

double parse_cli_double(const std::string& raw, const std::string& opt) {
  char* end = nullptr;
  const double v = std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() || *end != '\0')
    raise(ErrorKind::Config, opt + " expects a number, got '" + raw + "'");
  return v;
}

int parse_cli_int(const std::string& raw, const std::string& opt) {
  char* end = nullptr;
  const long v = std::strtol(raw.c_str(), &end, 10);
  if (end == raw.c_str() || *end != '\0')
    raise(ErrorKind::Config, opt + " expects an integer, got '" + raw + "'");
  return static_cast<int>(v);
}

std::vector<Index> parse_cli_dims(const std::string& raw, const std::string& opt) {
  std::vector<Index> out;
  std::string item;
  std::stringstream ss(raw);
  while (std::getline(ss, item, ','))
    out.push_back(parse_cli_int(item, opt));
  if (out.empty()) raise(ErrorKind::Config, opt + " expects a comma list");
  return out;
}

json dataset_json(const Dataset& ds) {
  return json{{"name", ds.name},
              {"samples", ds.features.cols()},
              {"dim", ds.features.rows()},
              {"classes", ds.num_classes},
              {"fingerprint", dataset_fingerprint(ds)}};
}

int cmd_train(int argc, char** argv) {
  Args args = parse_args(argc, argv, 2, "train",
                         {"--config", "--set", "--out", "--resume"}, {"--help"});
  if (args.flags.count("--help")) {
    std::cout << kTrainUsage;
    return 0;
  }
  ExperimentConfig cfg = config_from_args(args, "train");
  const fs::path out_dir = require_one(args, "--out", "train");

  Dataset ds = load_dataset(cfg.data);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) raise(ErrorKind::Io, "cannot create output dir '" + out_dir.string() +
                                   "': " + ec.message());

  Checkpoint resume;
  const Checkpoint* resume_ptr = nullptr;
  if (auto path = get_one(args, "--resume")) {
    resume = load_checkpoint(*path);
    resume_ptr = &resume;
  }

  const fs::path metrics_path = out_dir / "metrics.csv";
  std::ofstream metrics(metrics_path, std::ios::binary);
  if (!metrics)
    raise(ErrorKind::Io, "cannot open '" + metrics_path.string() + "' for writing");
  metrics << kMetricsHeader << "\n";
  metrics.flush();

  const int total_epochs = cfg.train.epochs;
  EpochSink sink = [&](const EpochRecord& r) {
    metrics << format_metrics_row(r, cfg.train.csv_timing) << "\n";
    metrics.flush();
    std::printf("[epoch %d/%d] loss %.6g ce %.6g sym %.6g lr %.4g erank %.3g",
                r.epoch, total_epochs, r.loss, r.ce_term, r.sym_term, r.lr,
                r.eff_rank);
    if (r.has_knn) std::printf(" knn %.4f", r.knn_acc);
    std::printf("\n");
    std::fflush(stdout);
  };

  TrainResult result = train_run(cfg.train, ds, sink, resume_ptr);
  metrics.flush();
  if (!metrics) raise(ErrorKind::Io, "failed writing '" + metrics_path.string() + "'");

  const fs::path ckpt_path = out_dir / "checkpoint.bin";
  save_checkpoint(ckpt_path.string(), result.checkpoint());

  const fs::path config_path = out_dir / "config.ini";
  write_text_file(config_path, emit_ini(cfg));

  json summary;
  summary["tool"] = kToolName;
  summary["version"] = kToolVersion;
  summary["command"] = "train";
  summary["dataset"] = dataset_json(ds);
  summary["schedule_epochs"] = cfg.train.epochs;
  summary["epochs_completed"] = result.epochs_completed;
  summary["wall_secs"] = cfg.train.csv_timing ? result.wall_secs : 0.0;
  if (!result.metrics.records.empty()) {
    const EpochRecord& last = result.metrics.records.back();
    json fin{{"epoch", last.epoch},        {"loss", last.loss},
             {"ce_term", last.ce_term},    {"sym_term", last.sym_term},
             {"feat_std", last.feat_std},  {"eff_rank", last.eff_rank}};
    if (last.has_knn) fin["knn_acc"] = last.knn_acc;
    summary["final"] = fin;
  }
  const fs::path summary_path = out_dir / "summary.json";
  write_text_file(summary_path, summary.dump(2) + "\n");

  for (const fs::path& p : {metrics_path, ckpt_path, config_path, summary_path})
    if (!fs::exists(p))
      raise(ErrorKind::Io, "expected artifact missing: '" + p.string() + "'");

  json manifest;
  manifest["tool"] = kToolName;
  manifest["version"] = kToolVersion;
  manifest["command"] = "train";
  manifest["dataset_fingerprint"] = dataset_fingerprint(ds);
  manifest["artifacts"] = json{{"metrics", "metrics.csv"},
                               {"checkpoint", "checkpoint.bin"},
                               {"config", "config.ini"},
                               {"summary", "summary.json"}};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

  std::printf("done: %d/%d epochs, artifacts in %s\n", result.epochs_completed,
              cfg.train.epochs, out_dir.string().c_str());
  return 0;
}

int cmd_eval(int argc, char** argv) {
  Args args = parse_args(argc, argv, 2, "eval",
                         {"--checkpoint", "--config", "--set", "--protocol", "--out"},
                         {"--help"});
  if (args.flags.count("--help")) {
    std::cout << kEvalUsage;
    return 0;
  }
  ExperimentConfig cfg = config_from_args(args, "eval");
  const std::string protocol = get_one(args, "--protocol").value_or("both");
  if (protocol != "knn" && protocol != "linear" && protocol != "both")
    raise(ErrorKind::Config, "--protocol must be knn, linear, or both");

  Checkpoint cp = load_checkpoint(require_one(args, "--checkpoint", "eval"));
  Dataset ds = load_dataset(cfg.data);
  require(!cp.online.layers.empty(), ErrorKind::Format, "checkpoint has no layers");
  const Index input_dim = cp.online.layers.front().w.cols();
  require(ds.features.rows() == input_dim, ErrorKind::Config,
          "dataset dim " + std::to_string(ds.features.rows()) +
              " does not match encoder input dim " + std::to_string(input_dim));

  auto [train_idx, test_idx] =
      eval_split(ds.features.cols(), cfg.train.eval_fraction, cfg.train.seed);
  Matrix all = embed(cp.online, ds.features);
  Matrix train_f(all.rows(), static_cast<Index>(train_idx.size()));
  Matrix test_f(all.rows(), static_cast<Index>(test_idx.size()));
  std::vector<int> train_y, test_y;
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    train_f.col(static_cast<Index>(i)) = all.col(train_idx[i]);
    train_y.push_back(ds.labels[static_cast<std::size_t>(train_idx[i])]);
  }
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    test_f.col(static_cast<Index>(i)) = all.col(test_idx[i]);
    test_y.push_back(ds.labels[static_cast<std::size_t>(test_idx[i])]);
  }

  json report;
  report["tool"] = kToolName;
  report["version"] = kToolVersion;
  report["command"] = "eval";
  report["dataset"] = dataset_json(ds);
  report["checkpoint_epochs"] = cp.epochs_completed;
  report["split"] = json{{"train", train_idx.size()}, {"test", test_idx.size()}};

  if (protocol == "knn" || protocol == "both") {
    const int k = std::min<int>(cfg.train.knn_k,
                                static_cast<int>(train_idx.size()));
    KnnReport knn = knn_eval(train_f, train_y, test_f, test_y, k, ds.num_classes);
    report["knn"] = json{{"k", knn.k},
                         {"num_test", knn.num_test},
                         {"correct", knn.correct},
                         {"accuracy", knn.accuracy}};
  }
  if (protocol == "linear" || protocol == "both") {
    ProbeConfig pc;
    pc.seed = cfg.train.seed;
    ProbeReport probe =
        linear_probe(train_f, train_y, test_f, test_y, ds.num_classes, pc);
    report["linear_probe"] = json{{"num_test", probe.num_test},
                                  {"correct", probe.correct},
                                  {"accuracy", probe.accuracy},
                                  {"final_train_loss", probe.final_train_loss},
                                  {"epochs", probe.epochs}};
  }
  CollapseReport collapse = collapse_metrics(all);
  report["collapse"] = json{{"mean_std", collapse.mean_std},
                            {"effective_rank", collapse.effective_rank}};

  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (auto out = get_one(args, "--out")) write_text_file(*out, text);
  return 0;
}

int cmd_gradcheck(int argc, char** argv) {
  Args args = parse_args(argc, argv, 2, "gradcheck",
                         {"--step", "--tol", "--seeds", "--dims", "--batches"},
                         {"--help", "--inject-backward-fault"});
  if (args.flags.count("--help")) {
    std::cout << kGradcheckUsage;
    return 0;
  }
  gradcheck::AuditConfig cfg;
  if (auto v = get_one(args, "--step")) cfg.step = parse_cli_double(*v, "--step");
  if (auto v = get_one(args, "--tol")) cfg.tolerance = parse_cli_double(*v, "--tol");
  if (auto v = get_one(args, "--seeds")) cfg.seeds = parse_cli_int(*v, "--seeds");
  if (auto v = get_one(args, "--dims")) cfg.dims = parse_cli_dims(*v, "--dims");
  if (auto v = get_one(args, "--batches"))
    cfg.batches = parse_cli_dims(*v, "--batches");
  require(cfg.step > 0 && cfg.tolerance > 0 && cfg.seeds > 0, ErrorKind::Config,
          "gradcheck step, tol, and seeds must be positive");
  if (args.flags.count("--inject-backward-fault")) set_test_backward_fault(true);

  std::vector<gradcheck::AuditRow> rows = gradcheck::audit_variants(cfg);
  std::vector<gradcheck::AuditRow> terms = gradcheck::audit_terms(cfg);
  rows.insert(rows.end(), terms.begin(), terms.end());

  std::printf("%-24s %14s %11s %9s %7s\n", "case", "max_rel_err", "tolerance",
              "entries", "status");
  for (const auto& row : rows)
    std::printf("%-24s %14.4e %11.1e %9ld %7s\n", row.name.c_str(),
                row.max_rel_err, row.tolerance, row.entries,
                row.pass ? "pass" : "FAIL");
  set_test_backward_fault(false);
  gradcheck::require_all_pass(rows);
  std::printf("all %zu cases within tolerance\n", rows.size());
  return 0;
}

int cmd_plot(int argc, char** argv) {
  Args args = parse_args(argc, argv, 2, "plot",
                         {"--metrics", "--out", "--column", "--title"}, {"--help"});
  if (args.flags.count("--help")) {
    std::cout << kPlotUsage;
    return 0;
  }
  auto it = args.values.find("--metrics");
  if (it == args.values.end() || it->second.empty())
    raise(ErrorKind::Config, "plot requires at least one --metrics file");
  const std::string column = get_one(args, "--column").value_or("knn_acc");
  const std::string out_path = require_one(args, "--out", "plot");

  std::vector<Series> series;
  for (const std::string& path : it->second) {
    RunMetrics metrics = read_metrics_csv(path);
    series.push_back(metrics_series(metrics, column, fs::path(path).stem().string()));
  }
  const std::string title = get_one(args, "--title").value_or(column);
  write_text_file(out_path, render_line_svg(series, title, column));
  std::printf("wrote %s (%zu series, column %s)\n", out_path.c_str(),
              series.size(), column.c_str());
  return 0;
}

int cmd_gen_data(int argc, char** argv) {
  Args args = parse_args(argc, argv, 2, "gen-data",
                         {"--config", "--set", "--out"}, {"--help"});
  if (args.flags.count("--help")) {
    std::cout << kGenDataUsage;
    return 0;
  }
  ExperimentConfig cfg = config_from_args(args, "gen-data");
  const std::string out_path = require_one(args, "--out", "gen-data");
  Dataset ds = load_dataset(cfg.data);
  write_csv(out_path, ds);
  std::printf("wrote %s: %lld samples, dim %lld, %d classes, fingerprint %s\n",
              out_path.c_str(), static_cast<long long>(ds.features.cols()),
              static_cast<long long>(ds.features.rows()), ds.num_classes,
              dataset_fingerprint(ds).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    if (argc < 2) {
      std::cout << kUsage;
      return 0;
    }
    const std::string cmd = argv[1];
    if (cmd == "--version" || cmd == "version") {
      std::printf("%s %s\n", kToolName, kToolVersion);
      return 0;
    }
    if (cmd == "--help" || cmd == "help" || cmd == "-h") {
      std::cout << kUsage;
      return 0;
    }
    if (cmd == "train") return cmd_train(argc, argv);
    if (cmd == "eval") return cmd_eval(argc, argv);
    if (cmd == "gradcheck") return cmd_gradcheck(argc, argv);
    if (cmd == "plot") return cmd_plot(argc, argv);
    if (cmd == "gen-data") return cmd_gen_data(argc, argv);
    raise(ErrorKind::Config, "unknown command '" + cmd + "'");
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
