#include "uniclr/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "uniclr/errors.hpp"

namespace uniclr {

void validate_dataset(const Dataset& ds) {
  const Index m = ds.features.cols();
  require(ds.features.rows() >= 1 && m >= 1, ErrorKind::Data,
          "dataset '" + ds.name + "' is empty");
  require(static_cast<Index>(ds.labels.size()) == m, ErrorKind::Data,
          "dataset '" + ds.name + "': label count does not match sample count");
  require(ds.num_classes >= 1, ErrorKind::Data,
          "dataset '" + ds.name + "': num_classes must be >= 1");
  require(m >= ds.num_classes, ErrorKind::Data,
          "dataset '" + ds.name + "': fewer samples than classes");
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    require(ds.labels[i] >= 0 && ds.labels[i] < ds.num_classes, ErrorKind::Data,
            "dataset '" + ds.name + "': label " + std::to_string(ds.labels[i]) +
                " at sample " + std::to_string(i) + " out of range");
  require(ds.features.allFinite(), ErrorKind::Data,
          "dataset '" + ds.name + "' contains non-finite features");
}

namespace {

void check_synth_common(const DataConfig& cfg, const char* source) {
  require(cfg.samples >= 1, ErrorKind::Config,
          std::string(source) + ": data.samples must be >= 1");
  require(cfg.dim >= 1, ErrorKind::Config,
          std::string(source) + ": data.dim must be >= 1");
  require(std::isfinite(cfg.noise) && cfg.noise >= 0.0, ErrorKind::Config,
          std::string(source) + ": data.noise must be finite and >= 0");
}

}  // namespace

Dataset make_blobs(const DataConfig& cfg) {
  check_synth_common(cfg, "blobs");
  require(cfg.classes >= 1, ErrorKind::Config, "blobs: data.classes must be >= 1");
  require(cfg.samples >= cfg.classes, ErrorKind::Config,
          "blobs: need at least one sample per class");
  const Index signal = cfg.signal_dim == 0 ? cfg.dim : cfg.signal_dim;
  require(signal >= 1 && signal <= cfg.dim, ErrorKind::Config,
          "blobs: data.signal_dim must be in [1, dim]");
  Rng rng(cfg.seed);
  Dataset ds;
  ds.name = "blobs";
  ds.num_classes = cfg.classes;
  ds.features.resize(cfg.dim, cfg.samples);
  ds.labels.resize(static_cast<std::size_t>(cfg.samples));
  for (Index i = 0; i < cfg.samples; ++i) {
    const int k = static_cast<int>(i % cfg.classes);
    ds.labels[static_cast<std::size_t>(i)] = k;
    const Index axis = static_cast<Index>(k) % signal;
    const double magnitude = 6.0 * (1.0 + static_cast<double>(k / static_cast<int>(signal)));
    for (Index d = 0; d < cfg.dim; ++d) {
      const double center = (d == axis) ? magnitude : 0.0;
      ds.features(d, i) = center + cfg.noise * rng.normal();
    }
  }
  validate_dataset(ds);
  return ds;
}

Dataset make_moons(const DataConfig& cfg) {
  check_synth_common(cfg, "moons");
  require(cfg.classes == 2, ErrorKind::Config, "moons: data.classes must be 2");
  require(cfg.dim >= 2, ErrorKind::Config, "moons: data.dim must be >= 2");
  Rng rng(cfg.seed);
  Dataset ds;
  ds.name = "moons";
  ds.num_classes = 2;
  ds.features.resize(cfg.dim, cfg.samples);
  ds.labels.resize(static_cast<std::size_t>(cfg.samples));
  for (Index i = 0; i < cfg.samples; ++i) {
    const int k = static_cast<int>(i % 2);
    ds.labels[static_cast<std::size_t>(i)] = k;
    const double t = rng.uniform(0.0, std::numbers::pi);
    double x0, x1;
    if (k == 0) {
      x0 = std::cos(t);
      x1 = std::sin(t);
    } else {
      x0 = 1.0 - std::cos(t);
      x1 = 0.5 - std::sin(t);
    }
    for (Index d = 0; d < cfg.dim; ++d) {
      const double base = (d == 0) ? x0 : (d == 1) ? x1 : 0.0;
      ds.features(d, i) = base + cfg.noise * rng.normal();
    }
  }
  validate_dataset(ds);
  return ds;
}

Dataset make_rings(const DataConfig& cfg) {
  check_synth_common(cfg, "rings");
  require(cfg.classes >= 1, ErrorKind::Config, "rings: data.classes must be >= 1");
  require(cfg.dim >= 2, ErrorKind::Config, "rings: data.dim must be >= 2");
  require(cfg.samples >= cfg.classes, ErrorKind::Config,
          "rings: need at least one sample per class");
  Rng rng(cfg.seed);
  Dataset ds;
  ds.name = "rings";
  ds.num_classes = cfg.classes;
  ds.features.resize(cfg.dim, cfg.samples);
  ds.labels.resize(static_cast<std::size_t>(cfg.samples));
  for (Index i = 0; i < cfg.samples; ++i) {
    const int k = static_cast<int>(i % cfg.classes);
    ds.labels[static_cast<std::size_t>(i)] = k;
    const double radius = 2.0 * (static_cast<double>(k) + 1.0);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (Index d = 0; d < cfg.dim; ++d) {
      const double base =
          (d == 0) ? radius * std::cos(theta) : (d == 1) ? radius * std::sin(theta) : 0.0;
      ds.features(d, i) = base + cfg.noise * rng.normal();
    }
  }
  validate_dataset(ds);
  return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_double(const std::string& cell, std::size_t row, std::size_t col,
                    const std::string& path) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  require(end == begin + cell.size() && !cell.empty(), ErrorKind::Format,
          path + ": row " + std::to_string(row) + " column " + std::to_string(col) +
              ": '" + cell + "' is not a number");
  return v;
}

int parse_label(const std::string& cell, std::size_t row, const std::string& path) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const long v = std::strtol(begin, &end, 10);
  require(end == begin + cell.size() && !cell.empty(), ErrorKind::Format,
          path + ": row " + std::to_string(row) + ": label '" + cell +
              "' is not an integer");
  require(v >= 0 && v <= 1000000, ErrorKind::Data,
          path + ": row " + std::to_string(row) + ": label " + std::to_string(v) +
              " out of range");
  return static_cast<int>(v);
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Format,
          path + ": missing header row");
  const std::size_t arity = split_csv_line(strip_cr(line)).size();
  require(arity >= 2, ErrorKind::Format,
          path + ": header must have at least one feature column plus a label");
  const Index dim = static_cast<Index>(arity - 1);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    require(cells.size() == arity, ErrorKind::Format,
            path + ": row " + std::to_string(row_no) + " has " +
                std::to_string(cells.size()) + " cells, expected " +
                std::to_string(arity));
    std::vector<double> feat(static_cast<std::size_t>(dim));
    for (Index d = 0; d < dim; ++d) {
      const double v = parse_double(cells[static_cast<std::size_t>(d)], row_no,
                                    static_cast<std::size_t>(d + 1), path);
      require(std::isfinite(v), ErrorKind::Data,
              path + ": row " + std::to_string(row_no) + " has a non-finite feature");
      feat[static_cast<std::size_t>(d)] = v;
    }
    rows.push_back(std::move(feat));
    labels.push_back(parse_label(cells.back(), row_no, path));
  }
  require(!rows.empty(), ErrorKind::Data, path + ": no data rows");
  Dataset ds;
  ds.name = path;
  ds.features.resize(dim, static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Index d = 0; d < dim; ++d)
      ds.features(d, static_cast<Index>(i)) = rows[i][static_cast<std::size_t>(d)];
  ds.labels = std::move(labels);
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  validate_dataset(ds);
  return ds;
}

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path,
                          std::size_t& offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.gcount() == 4, ErrorKind::Format,
          path + ": truncated at byte " + std::to_string(offset));
  offset += 4;
  return (static_cast<std::uint32_t>(b[0]) << 24) |
         (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

std::vector<unsigned char> read_idx_payload(const std::string& path,
                                            unsigned expected_ndim,
                                            std::vector<std::uint32_t>& dims) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open '" + path + "'");
  std::size_t offset = 0;
  unsigned char magic[4];
  in.read(reinterpret_cast<char*>(magic), 4);
  require(in.gcount() == 4, ErrorKind::Format, path + ": truncated at byte 0");
  offset = 4;
  require(magic[0] == 0 && magic[1] == 0, ErrorKind::Format,
          path + ": bad magic at byte 0");
  require(magic[2] == 0x08, ErrorKind::Format,
          path + ": unsupported dtype 0x" + std::to_string(magic[2]) +
              " at byte 2 (only unsigned byte is supported)");
  require(magic[3] == expected_ndim, ErrorKind::Format,
          path + ": expected " + std::to_string(expected_ndim) +
              " dimensions at byte 3, found " + std::to_string(magic[3]));
  dims.clear();
  std::size_t total = 1;
  for (unsigned i = 0; i < expected_ndim; ++i) {
    dims.push_back(read_be_u32(in, path, offset));
    require(dims.back() >= 1 && dims.back() <= (1u << 24), ErrorKind::Format,
            path + ": implausible dimension " + std::to_string(dims.back()));
    total *= dims.back();
  }
  std::vector<unsigned char> payload(total);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(total));
  require(static_cast<std::size_t>(in.gcount()) == total, ErrorKind::Format,
          path + ": truncated at byte " +
              std::to_string(offset + static_cast<std::size_t>(in.gcount())));
  return payload;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::vector<std::uint32_t> image_dims;
  std::vector<unsigned char> pixels = read_idx_payload(images_path, 3, image_dims);
  std::vector<std::uint32_t> label_dims;
  std::vector<unsigned char> raw_labels = read_idx_payload(labels_path, 1, label_dims);
  require(image_dims[0] == label_dims[0], ErrorKind::Data,
          images_path + ": " + std::to_string(image_dims[0]) + " images but " +
              std::to_string(label_dims[0]) + " labels");
  const Index m = static_cast<Index>(image_dims[0]);
  const Index d = static_cast<Index>(image_dims[1]) * static_cast<Index>(image_dims[2]);
  Dataset ds;
  ds.name = images_path;
  ds.features.resize(d, m);
  ds.labels.resize(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    for (Index p = 0; p < d; ++p)
      ds.features(p, i) =
          static_cast<double>(pixels[static_cast<std::size_t>(i * d + p)]) / 255.0;
    ds.labels[static_cast<std::size_t>(i)] =
        static_cast<int>(raw_labels[static_cast<std::size_t>(i)]);
  }
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  validate_dataset(ds);
  return ds;
}

void write_csv(const std::string& path, const Dataset& ds) {
  validate_dataset(ds);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot open '" + path + "' for writing");
  for (Index d = 0; d < ds.features.rows(); ++d) out << "f" << d << ",";
  out << "label\n";
  char buf[64];
  for (Index i = 0; i < ds.features.cols(); ++i) {
    for (Index d = 0; d < ds.features.rows(); ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.features(d, i));
      out << buf << ",";
    }
    out << ds.labels[static_cast<std::size_t>(i)] << "\n";
  }
  require(out.good(), ErrorKind::Io, "failed writing '" + path + "'");
}

Dataset load_dataset(const DataConfig& cfg) {
  if (cfg.source == "blobs") return make_blobs(cfg);
  if (cfg.source == "moons") return make_moons(cfg);
  if (cfg.source == "rings") return make_rings(cfg);
  if (cfg.source == "csv") {
    require(!cfg.path.empty(), ErrorKind::Config,
            "data.path is required for source csv");
    return load_csv(cfg.path);
  }
  if (cfg.source == "idx") {
    require(!cfg.path.empty() && !cfg.labels_path.empty(), ErrorKind::Config,
            "data.path and data.labels_path are required for source idx");
    return load_idx(cfg.path, cfg.labels_path);
  }
  raise(ErrorKind::Config, "unknown data.source '" + cfg.source +
                               "' (expected blobs, moons, rings, csv or idx)");
}

std::string dataset_fingerprint(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto eat = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t d = static_cast<std::uint64_t>(ds.features.rows());
  const std::uint64_t m = static_cast<std::uint64_t>(ds.features.cols());
  const std::uint64_t c = static_cast<std::uint64_t>(ds.num_classes);
  eat(&d, 8);
  eat(&m, 8);
  eat(&c, 8);
  for (Index i = 0; i < ds.features.cols(); ++i)
    for (Index r = 0; r < ds.features.rows(); ++r) {
      const double v = ds.features(r, i);
      eat(&v, 8);
    }
  for (int label : ds.labels) {
    const std::uint32_t l = static_cast<std::uint32_t>(label);
    eat(&l, 4);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void validate_augment_config(const AugmentConfig& cfg) {
  require(std::isfinite(cfg.scale_lo) && std::isfinite(cfg.scale_hi) &&
              cfg.scale_lo > 0.0 && cfg.scale_lo <= cfg.scale_hi,
          ErrorKind::Config, "augment: need 0 < scale_lo <= scale_hi");
  require(std::isfinite(cfg.mask_prob) && cfg.mask_prob >= 0.0 && cfg.mask_prob <= 1.0,
          ErrorKind::Config, "augment: mask_prob must be in [0, 1]");
  require(std::isfinite(cfg.noise_std) && cfg.noise_std >= 0.0, ErrorKind::Config,
          "augment: noise_std must be >= 0");
}

std::pair<Matrix, Matrix> two_views(const Matrix& batch, const AugmentConfig& cfg,
                                    Rng& rng) {
  validate_augment_config(cfg);
  require(batch.rows() >= 1 && batch.cols() >= 1, ErrorKind::Degenerate,
          "two_views: empty batch");
  auto one_view = [&]() {
    Matrix v(batch.rows(), batch.cols());
    for (Index j = 0; j < batch.cols(); ++j) {
      const double s = rng.uniform(cfg.scale_lo, cfg.scale_hi);
      for (Index i = 0; i < batch.rows(); ++i) {
        double x = s * batch(i, j);
        if (rng.uniform() < cfg.mask_prob) x = 0.0;
        x += cfg.noise_std * rng.normal();
        v(i, j) = x;
      }
    }
    return v;
  };
  Matrix first = one_view();
  Matrix second = one_view();
  return {std::move(first), std::move(second)};
}

std::vector<std::vector<Index>> epoch_batches(Index m, Index batch_size,
                                              std::uint64_t seed, int epoch) {
  require(batch_size >= 1, ErrorKind::Contract, "epoch_batches: batch_size must be >= 1");
  require(m >= batch_size, ErrorKind::Contract,
          "epoch_batches: need at least one full batch (" + std::to_string(m) +
              " samples, batch_size " + std::to_string(batch_size) + ")");
  Rng rng(seed_combine(seed_combine(seed, kStreamShuffle),
                       static_cast<std::uint64_t>(epoch)));
  std::vector<Index> perm = rng.permutation(m);
  std::vector<std::vector<Index>> batches;
  const Index n_batches = m / batch_size;
  for (Index b = 0; b < n_batches; ++b)
    batches.emplace_back(perm.begin() + b * batch_size,
                         perm.begin() + (b + 1) * batch_size);
  return batches;
}

Matrix gather_cols(const Matrix& features, const std::vector<Index>& idx) {
  Matrix out(features.rows(), static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < features.cols(), ErrorKind::IndexRange,
            "gather_cols: index " + std::to_string(idx[i]) + " out of range");
    out.col(static_cast<Index>(i)) = features.col(idx[i]);
  }
  return out;
}

}  // namespace uniclr
