#include "uniclr/config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "uniclr/errors.hpp"

namespace uniclr {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad(const std::string& where, const std::string& msg) {
  raise(ErrorKind::Config, where + ": " + msg);
}

double parse_double(const std::string& raw, const std::string& where,
                    const std::string& key) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
    bad(where, "value for '" + key + "' is not a finite number: '" + raw + "'");
  return v;
}

long long parse_ll(const std::string& raw, const std::string& where,
                   const std::string& key) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(raw.c_str(), &end, 10);
  if (end == raw.c_str() || *end != '\0' || errno == ERANGE)
    bad(where, "value for '" + key + "' is not an integer: '" + raw + "'");
  return v;
}

int parse_int(const std::string& raw, const std::string& where,
              const std::string& key) {
  const long long v = parse_ll(raw, where, key);
  if (v < -2147483648LL || v > 2147483647LL)
    bad(where, "value for '" + key + "' is out of int range: '" + raw + "'");
  return static_cast<int>(v);
}

Index parse_index(const std::string& raw, const std::string& where,
                  const std::string& key) {
  return static_cast<Index>(parse_ll(raw, where, key));
}

std::uint64_t parse_u64(const std::string& raw, const std::string& where,
                        const std::string& key) {
  errno = 0;
  char* end = nullptr;
  if (!raw.empty() && raw[0] == '-')
    bad(where, "value for '" + key + "' must be non-negative: '" + raw + "'");
  const unsigned long long v = std::strtoull(raw.c_str(), &end, 10);
  if (end == raw.c_str() || *end != '\0' || errno == ERANGE)
    bad(where, "value for '" + key + "' is not an unsigned integer: '" + raw + "'");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& raw, const std::string& where,
                const std::string& key) {
  if (raw == "true" || raw == "1" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "off") return false;
  bad(where, "value for '" + key + "' is not a boolean (true/false/1/0/on/off): '" +
                 raw + "'");
}

std::vector<Index> parse_dims(const std::string& raw, const std::string& where,
                              const std::string& key) {
  std::vector<Index> out;
  if (raw == "none") return out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad(where, "empty entry in '" + key + "' list: '" + raw + "'");
    out.push_back(parse_index(item, where, key));
  }
  if (out.empty()) bad(where, "'" + key + "' needs a comma list or 'none': '" + raw + "'");
  return out;
}

void set_data_key(ExperimentConfig& cfg, const std::string& key,
                  const std::string& raw, const std::string& where) {
  DataConfig& d = cfg.data;
  AugmentConfig& a = cfg.train.augment;
  if (key == "source") d.source = raw;
  else if (key == "path") d.path = raw;
  else if (key == "labels_path") d.labels_path = raw;
  else if (key == "samples") d.samples = parse_index(raw, where, key);
  else if (key == "dim") d.dim = parse_index(raw, where, key);
  else if (key == "classes") d.classes = parse_int(raw, where, key);
  else if (key == "noise") d.noise = parse_double(raw, where, key);
  else if (key == "signal_dim") d.signal_dim = parse_index(raw, where, key);
  else if (key == "seed") d.seed = parse_u64(raw, where, key);
  else if (key == "scale_lo") a.scale_lo = parse_double(raw, where, key);
  else if (key == "scale_hi") a.scale_hi = parse_double(raw, where, key);
  else if (key == "mask_prob") a.mask_prob = parse_double(raw, where, key);
  else if (key == "noise_std") a.noise_std = parse_double(raw, where, key);
  else bad(where, "unknown key 'data." + key + "'");
}

void set_loss_key(ExperimentConfig& cfg, const std::string& key,
                  const std::string& raw, const std::string& where) {
  LossConfig& l = cfg.train.loss;
  if (key == "variant") l.variant = variant_from_name(raw);
  else if (key == "tau") {
    if (raw == "none") {
      l.tau_enabled = false;
    } else {
      l.tau_enabled = true;
      l.tau = parse_double(raw, where, key);
    }
  } else if (key == "gamma") l.gamma = parse_double(raw, where, key);
  else if (key == "eps_scale") l.eps_scale = parse_double(raw, where, key);
  else if (key == "sigma_stop_grad") l.sigma_stop_grad = parse_bool(raw, where, key);
  else if (key == "l2_normalize") l.l2_normalize = parse_bool(raw, where, key);
  else bad(where, "unknown key 'loss." + key + "'");
}

void set_train_key(ExperimentConfig& cfg, const std::string& key,
                   const std::string& raw, const std::string& where) {
  TrainConfig& t = cfg.train;
  ModelConfig& m = t.model;
  if (key == "epochs") t.epochs = parse_int(raw, where, key);
  else if (key == "batch_size") t.batch_size = parse_index(raw, where, key);
  else if (key == "base_lr") t.base_lr = parse_double(raw, where, key);
  else if (key == "momentum") t.momentum = parse_double(raw, where, key);
  else if (key == "weight_decay") t.weight_decay = parse_double(raw, where, key);
  else if (key == "warmup_epochs") t.warmup_epochs = parse_int(raw, where, key);
  else if (key == "seed") t.seed = parse_u64(raw, where, key);
  else if (key == "eval_every") t.eval_every = parse_int(raw, where, key);
  else if (key == "knn_k") t.knn_k = parse_int(raw, where, key);
  else if (key == "eval_fraction") t.eval_fraction = parse_double(raw, where, key);
  else if (key == "lr_batch_scaling") t.lr_batch_scaling = parse_bool(raw, where, key);
  else if (key == "csv_timing") t.csv_timing = parse_bool(raw, where, key);
  else if (key == "stop_after") t.stop_after = parse_int(raw, where, key);
  else if (key == "hidden_dims") m.hidden = parse_dims(raw, where, key);
  else if (key == "embed_dim") m.embed_dim = parse_index(raw, where, key);
  else if (key == "standardize") m.standardize = parse_bool(raw, where, key);
  else if (key == "twin") m.twin = parse_bool(raw, where, key);
  else if (key == "ema_momentum") m.ema_momentum = parse_double(raw, where, key);
  else bad(where, "unknown key 'train." + key + "'");
}

void set_key(ExperimentConfig& cfg, const std::string& section,
             const std::string& key, const std::string& raw,
             const std::string& where) {
  if (section == "data") set_data_key(cfg, key, raw, where);
  else if (section == "loss") set_loss_key(cfg, key, raw, where);
  else if (section == "train") set_train_key(cfg, key, raw, where);
  else bad(where, "unknown section '" + section + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

std::string fmt_dims(const std::vector<Index>& dims) {
  if (dims.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims[i]);
  }
  return out;
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig parse_ini(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg = default_config();
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.erase(cut);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        bad(where, "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "loss" && section != "train")
        bad(where, "unknown section '" + section + "'");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) bad(where, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) bad(where, "empty key");
    if (section.empty()) bad(where, "key '" + key + "' appears before any [section]");
    set_key(cfg, section, key, value, where);
  }
  return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& spec) {
  const std::string where = "--set " + spec;
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos)
    bad(where, "override must look like section.key=value");
  const std::string lhs = trim(spec.substr(0, eq));
  const std::string value = trim(spec.substr(eq + 1));
  const std::size_t dot = lhs.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 >= lhs.size())
    bad(where, "override must look like section.key=value");
  set_key(cfg, lhs.substr(0, dot), lhs.substr(dot + 1), value, where);
}

void finalize_config(ExperimentConfig& cfg) {
  couple_loss_config(cfg.train.loss);
  validate_loss_config(cfg.train.loss);
  validate_model_config(cfg.train.model);
  validate_train_config(cfg.train);
}

std::string emit_ini(const ExperimentConfig& cfg) {
  const DataConfig& d = cfg.data;
  const AugmentConfig& a = cfg.train.augment;
  const LossConfig& l = cfg.train.loss;
  const TrainConfig& t = cfg.train;
  const ModelConfig& m = t.model;
  std::ostringstream out;
  out << "[data]\n";
  out << "source = " << d.source << "\n";
  out << "path = " << d.path << "\n";
  out << "labels_path = " << d.labels_path << "\n";
  out << "samples = " << d.samples << "\n";
  out << "dim = " << d.dim << "\n";
  out << "classes = " << d.classes << "\n";
  out << "noise = " << fmt_double(d.noise) << "\n";
  out << "signal_dim = " << d.signal_dim << "\n";
  out << "seed = " << d.seed << "\n";
  out << "scale_lo = " << fmt_double(a.scale_lo) << "\n";
  out << "scale_hi = " << fmt_double(a.scale_hi) << "\n";
  out << "mask_prob = " << fmt_double(a.mask_prob) << "\n";
  out << "noise_std = " << fmt_double(a.noise_std) << "\n";
  out << "\n[loss]\n";
  out << "variant = " << variant_name(l.variant) << "\n";
  out << "tau = " << (l.tau_enabled ? fmt_double(l.tau) : std::string("none")) << "\n";
  out << "gamma = " << fmt_double(l.gamma) << "\n";
  out << "eps_scale = " << fmt_double(l.eps_scale) << "\n";
  out << "sigma_stop_grad = " << fmt_bool(l.sigma_stop_grad) << "\n";
  out << "l2_normalize = " << fmt_bool(l.l2_normalize) << "\n";
  out << "\n[train]\n";
  out << "epochs = " << t.epochs << "\n";
  out << "batch_size = " << t.batch_size << "\n";
  out << "base_lr = " << fmt_double(t.base_lr) << "\n";
  out << "momentum = " << fmt_double(t.momentum) << "\n";
  out << "weight_decay = " << fmt_double(t.weight_decay) << "\n";
  out << "warmup_epochs = " << t.warmup_epochs << "\n";
  out << "seed = " << t.seed << "\n";
  out << "eval_every = " << t.eval_every << "\n";
  out << "knn_k = " << t.knn_k << "\n";
  out << "eval_fraction = " << fmt_double(t.eval_fraction) << "\n";
  out << "lr_batch_scaling = " << fmt_bool(t.lr_batch_scaling) << "\n";
  out << "csv_timing = " << fmt_bool(t.csv_timing) << "\n";
  out << "stop_after = " << t.stop_after << "\n";
  out << "hidden_dims = " << fmt_dims(m.hidden) << "\n";
  out << "embed_dim = " << m.embed_dim << "\n";
  out << "standardize = " << fmt_bool(m.standardize) << "\n";
  out << "twin = " << fmt_bool(m.twin) << "\n";
  out << "ema_momentum = " << fmt_double(m.ema_momentum) << "\n";
  return out.str();
}

namespace {

const std::string kPresetBlobsSimAffinity = R"ini(# Gaussian blobs embedded with the affinity cross-entropy plus symmetry penalty.
[data]
source = blobs
samples = 512
dim = 16
classes = 6
noise = 1.0
signal_dim = 0
seed = 1
scale_lo = 0.8
scale_hi = 1.2
mask_prob = 0.1
noise_std = 0.1

[loss]
variant = simaffinity
tau = 0.5
gamma = 0.01
eps_scale = 1e-5
sigma_stop_grad = false
l2_normalize = true

[train]
epochs = 30
batch_size = 128
base_lr = 0.3
momentum = 0.9
weight_decay = 1e-6
warmup_epochs = 3
seed = 0
eval_every = 5
knn_k = 5
eval_fraction = 0.2
hidden_dims = 64,32
embed_dim = 16
standardize = true
twin = false
ema_momentum = 0.99
)ini";

const std::string kPresetBlobsSimWhitening = R"ini(# Gaussian blobs with the whitened affinity cross-entropy plus symmetry penalty.
[data]
source = blobs
samples = 512
dim = 16
classes = 6
noise = 1.0
signal_dim = 0
seed = 1
scale_lo = 0.8
scale_hi = 1.2
mask_prob = 0.1
noise_std = 0.1

[loss]
variant = simwhitening
tau = 0.5
gamma = 0.01
eps_scale = 1e-5
sigma_stop_grad = false
l2_normalize = true

[train]
epochs = 30
batch_size = 128
base_lr = 0.3
momentum = 0.9
weight_decay = 1e-6
warmup_epochs = 3
seed = 0
eval_every = 5
knn_k = 5
eval_fraction = 0.2
hidden_dims = 64,32
embed_dim = 16
standardize = true
twin = false
ema_momentum = 0.99
)ini";

const std::string kPresetBlobsSimTrace = R"ini(# Gaussian blobs with the negative-trace whitened alignment objective.
[data]
source = blobs
samples = 512
dim = 16
classes = 6
noise = 1.0
signal_dim = 0
seed = 1
scale_lo = 0.8
scale_hi = 1.2
mask_prob = 0.1
noise_std = 0.1

[loss]
variant = simtrace
tau = none
gamma = 0
eps_scale = 1e-5
sigma_stop_grad = false
l2_normalize = true

[train]
epochs = 30
batch_size = 128
base_lr = 0.05
momentum = 0.9
weight_decay = 1e-6
warmup_epochs = 3
seed = 0
eval_every = 5
knn_k = 5
eval_fraction = 0.2
hidden_dims = 64,32
embed_dim = 16
standardize = true
twin = false
ema_momentum = 0.99
)ini";

const std::string kPresetBlobsInfoNce = R"ini(# Gaussian blobs with the paired-view contrastive baseline.
[data]
source = blobs
samples = 512
dim = 16
classes = 6
noise = 1.0
signal_dim = 0
seed = 1
scale_lo = 0.8
scale_hi = 1.2
mask_prob = 0.1
noise_std = 0.1

[loss]
variant = infonce
tau = 0.5
gamma = 0
eps_scale = 1e-5
sigma_stop_grad = false
l2_normalize = true

[train]
epochs = 30
batch_size = 128
base_lr = 0.3
momentum = 0.9
weight_decay = 1e-6
warmup_epochs = 3
seed = 0
eval_every = 5
knn_k = 5
eval_fraction = 0.2
hidden_dims = 64,32
embed_dim = 16
standardize = true
twin = false
ema_momentum = 0.99
)ini";

const std::string kPresetMoonsSimAffinity = R"ini(# Interleaved half circles embedded with the affinity cross-entropy.
[data]
source = moons
samples = 512
dim = 8
classes = 2
noise = 0.1
seed = 1
scale_lo = 0.9
scale_hi = 1.1
mask_prob = 0.05
noise_std = 0.05

[loss]
variant = simaffinity
tau = 0.5
gamma = 0.01
eps_scale = 1e-5
sigma_stop_grad = false
l2_normalize = true

[train]
epochs = 40
batch_size = 128
base_lr = 0.3
momentum = 0.9
weight_decay = 1e-6
warmup_epochs = 4
seed = 0
eval_every = 5
knn_k = 5
eval_fraction = 0.2
hidden_dims = 64,32
embed_dim = 8
standardize = true
twin = false
ema_momentum = 0.99
)ini";

const std::string kEmpty;

}  // namespace

std::vector<std::string> preset_names() {
  return {"blobs_simaffinity", "blobs_simwhitening", "blobs_simtrace",
          "blobs_infonce", "moons_simaffinity"};
}

const std::string& preset_text(const std::string& name) {
  if (name == "blobs_simaffinity") return kPresetBlobsSimAffinity;
  if (name == "blobs_simwhitening") return kPresetBlobsSimWhitening;
  if (name == "blobs_simtrace") return kPresetBlobsSimTrace;
  if (name == "blobs_infonce") return kPresetBlobsInfoNce;
  if (name == "moons_simaffinity") return kPresetMoonsSimAffinity;
  return kEmpty;
}

ExperimentConfig load_config(const std::string& name_or_path) {
  const std::string& preset = preset_text(name_or_path);
  if (!preset.empty()) return parse_ini(preset, name_or_path);
  std::ifstream in(name_or_path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open config '" + name_or_path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ini(buf.str(), name_or_path);
}

}  // namespace uniclr
