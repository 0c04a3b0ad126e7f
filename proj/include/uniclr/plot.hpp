#ifndef UNICLR_PLOT_HPP
#define UNICLR_PLOT_HPP

#include <string>
#include <vector>

#include "uniclr/trainer.hpp"

namespace uniclr {

// Reads a metrics CSV produced by training; the header must match exactly and
// every row must carry the full column set (the knn cell may be empty).
RunMetrics read_metrics_csv(const std::string& path);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Extracts one column (loss, ce_term, sym_term, lr, feat_std, eff_rank,
// knn_acc, secs) as an epoch-indexed series. Rows without a knn value are
// skipped for knn_acc; an entirely empty selection is an error.
Series metrics_series(const RunMetrics& metrics, const std::string& column,
                      const std::string& label);

// Deterministic standalone SVG line chart, one polyline per series.
std::string render_line_svg(const std::vector<Series>& series,
                            const std::string& title,
                            const std::string& y_label);

}  // namespace uniclr

#endif
