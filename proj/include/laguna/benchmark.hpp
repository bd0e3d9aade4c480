#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "laguna/classifier.hpp"
#include "laguna/supervisor.hpp"

namespace laguna {

struct DomainShift {
  double rotation_angle = 1.0471975511965976;  // 60 degrees, applied in every coordinate plane
  double translation_scale = 0.5;
  double feature_scale = 1.0;
};

struct SynthConfig {
  std::size_t n_classes = 10;
  std::size_t feature_dim = 32;
  std::size_t anchor_dim = 16;
  std::size_t caption_dim = 24;
  std::size_t samples_per_class_per_domain = 100;
  DomainShift shift;
  double noise_sigma_features = 0.35;
  double noise_sigma_captions = 0.05;
  // Pairwise cosine between distinct reference anchors.
  double anchor_cosine = 0.5;
  double prototype_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

// Writes anchors, per-domain features/captions/labels and manifest.json into
// out_dir; returns the manifest path. Sample i of either domain has class
// i mod n_classes.
std::filesystem::path generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

struct AblationPreset {
  std::string name;
  AblationSwitches switches;
};

// s1..s5 and full, in ladder order.
const std::vector<AblationPreset>& ablation_presets();
AblationPreset find_preset(const std::string& name);
TrainConfig apply_preset(TrainConfig base, const AblationPreset& preset);

double median(std::vector<double> values);

struct AblationRow {
  AblationPreset preset;
  std::vector<double> accuracies;  // percent, one per seed
  double median = 0.0;
  double rel_imp = 0.0;  // vs the previous row
  double abs_imp = 0.0;  // vs the first row
};

struct AblationReport {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  nlohmann::json to_json() const;
  std::string to_markdown() const;
};

// For each seed: train the supervisor, pseudo-label the target split, then
// train and evaluate every preset on top of `base` (seed overridden).
AblationReport run_ablation(const std::filesystem::path& manifest,
                            std::span<const AblationPreset> presets,
                            std::span<const std::uint64_t> seeds, const TrainConfig& base,
                            const SupervisorConfig& supervisor = {});

struct RatioRow {
  double ratio = 1.0;
  std::vector<double> accuracies;  // percent on the full target split
  double median = 0.0;
};

struct RatioReport {
  std::vector<std::uint64_t> seeds;
  std::vector<RatioRow> rows;

  nlohmann::json to_json() const;
  std::string to_markdown() const;
};

// Trains on a pseudo-label-stratified target subsample per ratio; accuracy is
// always scored on the whole target split.
RatioReport run_ratio_sweep(const std::filesystem::path& manifest, std::span<const double> ratios,
                            std::span<const std::uint64_t> seeds, const TrainConfig& cfg,
                            const SupervisorConfig& supervisor = {});

}  // namespace laguna
