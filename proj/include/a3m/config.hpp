#pragma once

#include "a3m/data.hpp"
#include "a3m/model.hpp"
#include "a3m/train.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace a3m {

enum class EvalMode { Classify, Reid, Retrieval };
std::string eval_mode_name(EvalMode mode);
EvalMode parse_eval_mode(std::string_view name);

struct DataSettings {
    SyntheticSpec spec = default_spec(0);
    std::size_t num_categories = 24;
    /// Explicit category tuples; empty means `num_categories` tuples are
    /// drawn from the full codebook with the data seed.
    std::vector<std::vector<std::size_t>> codebook;
    /// How `gen` tags rows: classification, retrieval or re-id splits.
    EvalMode split = EvalMode::Classify;
    double split_ratio = 0.5;
    std::size_t queries_per_id = 2;
    ImageFormat format = ImageFormat::Binary;
};

struct EvalSettings {
    EvalMode mode = EvalMode::Classify;
    bool l2_normalize = false;
    std::vector<std::size_t> recall_ks{1, 2, 4, 8};
};

/// Everything a CLI run needs, grouped by INI section.
struct RunConfig {
    DataSettings data;
    A3MConfig model;
    TrainConfig train;
    EvalSettings eval;

    /// Rebuilds the codebook from (cardinalities, num_categories, seed) and
    /// copies data-dependent fields into the model.
    void sync();
    void validate() const;
};

RunConfig default_run_config();

/// Applies one "section.key" = value assignment; unknown keys and
/// malformed values throw ConfigError naming the key.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Applies a "section.key=value" override string.
void apply_override(RunConfig& config, std::string_view assignment);

/// Parses INI text on top of the defaults; `origin` prefixes error messages.
RunConfig parse_config(std::string_view text, std::string_view origin = "<config>");
RunConfig read_config(const std::filesystem::path& path);

/// Every key in fixed order; parse_config(format_config(c)) reproduces c.
std::string format_config(const RunConfig& config);

} // namespace a3m
