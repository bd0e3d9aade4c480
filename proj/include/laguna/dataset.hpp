#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laguna/matrix.hpp"

namespace laguna {

enum class Domain { source, target };
enum class Split { source, target };

const char* to_string(Domain d);

struct Sample {
  std::size_t index = 0;  // row in the domain's feature and caption files
  Domain domain = Domain::source;
  std::optional<std::size_t> label;  // always set for source, never for target
};

// While any TrainingScope is alive on the current thread, reading target
// ground truth throws LabelAccessViolation.
class TrainingScope {
 public:
  TrainingScope();
  ~TrainingScope();
  TrainingScope(const TrainingScope&) = delete;
  TrainingScope& operator=(const TrainingScope&) = delete;

  static bool active();
};

// Number of successful target ground-truth reads since process start.
std::uint64_t target_label_reads();

class Dataset {
 public:
  std::vector<std::string> class_names;
  Matrix reference_anchors;  // row i is the anchor of class_names[i]
  Matrix source_features;
  Matrix source_captions;
  Matrix target_features;
  Matrix target_captions;
  std::vector<Sample> source_samples;
  std::vector<Sample> target_samples;

  std::size_t num_classes() const { return class_names.size(); }
  std::size_t merged_size() const { return source_samples.size() + target_samples.size(); }

  const Matrix& features(Domain d) const;
  const Matrix& captions(Domain d) const;

  // Evaluation-only ground truth for target rows.
  void set_target_eval_labels(std::vector<std::optional<std::size_t>> labels_by_index);
  bool has_target_eval_labels() const;
  // Throws NoLabelsForSplit when absent, LabelAccessViolation inside training.
  std::size_t target_eval_label(std::size_t index) const;
  // Ground truth for a sample of either split, via the guarded path for target.
  std::size_t eval_label(const Sample& s) const;

  void validate() const;

 private:
  std::vector<std::optional<std::size_t>> target_eval_labels_;
};

// JSON manifest binding roles to embedding files; relative paths resolve
// against the manifest's directory.
Dataset load_manifest(const std::filesystem::path& path);

// Deterministic target subsample. Each stratum keeps round(ratio * size) of a
// seed-fixed permutation (at least one), so a higher ratio keeps a superset.
// `strata` assigns each target sample a group (e.g. its pseudo-label); empty
// means one group. Source samples are untouched.
Dataset subsample_target(const Dataset& d, double ratio, std::uint64_t seed,
                         std::span<const std::size_t> strata = {});

}  // namespace laguna
