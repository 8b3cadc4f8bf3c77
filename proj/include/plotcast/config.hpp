#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "plotcast/evaluation.hpp"
#include "plotcast/gbm.hpp"
#include "plotcast/generators.hpp"
#include "plotcast/jsonl.hpp"
#include "plotcast/llm.hpp"
#include "plotcast/sampling.hpp"
#include "plotcast/text.hpp"
#include "plotcast/training.hpp"

namespace plotcast {

/// Every key the pipeline reads, with its default. Relative paths in "data"
/// resolve against the directory of the config file that set them, or the
/// bundled data directory for defaults.
Json default_config();

/// Defaults, then `base` (a previously saved effective config), then the file
/// (JSON merge patch), then "a.b.c=value" overrides (values parsed as JSON
/// when possible, else taken as strings).
Json load_config(const std::optional<std::filesystem::path>& file, std::span<const std::string> overrides = {},
                 const Json* base = nullptr);

/// Sets one dotted key; throws ConfigError for unknown keys.
void apply_override(Json& config, const std::string& assignment);

/// Hash of the sections that determine pipeline artifacts.
std::string config_hash(const Json& config);

std::filesystem::path data_path(const Json& config, const std::string& key);

SegmenterOptions segmenter_options(const Json& config);
SplitRatios split_ratios(const Json& config);
GbmConfig gbm_config(const Json& config);
nn::ModelConfig model_config(const Json& section, int vocab_size, int frame_dim);
nn::TrainConfig train_config(const Json& section, std::uint64_t seed);
SamplerConfig sampler_config(const Json& section);
RandomBaselineConfig baseline_config(const Json& config);
InstanceFilter instance_filter(const Json& config);
LlmParams llm_params(const Json& config);

}  // namespace plotcast
