#ifndef UNICLR_CONFIG_HPP
#define UNICLR_CONFIG_HPP

#include <string>
#include <vector>

#include "uniclr/data.hpp"
#include "uniclr/trainer.hpp"

namespace uniclr {

// Everything a run needs: the dataset recipe plus the training recipe (which
// carries the loss, model, and augmentation settings).
struct ExperimentConfig {
  DataConfig data;
  TrainConfig train;
};

ExperimentConfig default_config();

// INI dialect: [data] / [loss] / [train] sections, key = value lines,
// comments from '#' or ';' to end of line, blank lines ignored. Unknown
// sections or keys are errors that name the offending line. `origin` is the
// label used in error messages (a path, or "--set").
ExperimentConfig parse_ini(const std::string& text, const std::string& origin);

// Resolves `name_or_path` against the built-in presets first, then the
// filesystem.
ExperimentConfig load_config(const std::string& name_or_path);

// Applies one "section.key=value" override on top of a parsed config.
void apply_override(ExperimentConfig& cfg, const std::string& spec);

// Derives coupled fields and validates every section; call after overrides.
void finalize_config(ExperimentConfig& cfg);

// Canonical snapshot; parse_ini(emit_ini(cfg)) reproduces cfg exactly.
std::string emit_ini(const ExperimentConfig& cfg);

std::vector<std::string> preset_names();

// Empty string when the name is not a preset.
const std::string& preset_text(const std::string& name);

}  // namespace uniclr

#endif
