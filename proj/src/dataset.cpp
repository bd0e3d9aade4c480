#include "laguna/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <json.hpp>

#include "laguna/embedding_io.hpp"
#include "laguna/error.hpp"

namespace laguna {

namespace {

thread_local int g_training_depth = 0;
std::uint64_t g_label_reads = 0;

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const json& node,
                              const std::string& key, const std::string& where) {
  if (!node.contains(key) || !node.at(key).is_string()) {
    throw Error(ErrorCode::DanglingReference, where + "." + key + " missing from manifest");
  }
  std::filesystem::path p = node.at(key).get<std::string>();
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p)) {
    throw Error(ErrorCode::DanglingReference, where + "." + key + " -> " + p.string() + " not found");
  }
  return p;
}

std::optional<std::size_t> optional_dim(const json& manifest, const char* key) {
  if (manifest.contains("dims") && manifest.at("dims").contains(key)) {
    return manifest.at("dims").at(key).get<std::size_t>();
  }
  return std::nullopt;
}

std::vector<std::optional<std::size_t>> labels_by_index(const LabelRows& rows, std::size_t count,
                                                        std::size_t num_classes,
                                                        const std::string& where) {
  std::vector<std::optional<std::size_t>> out(count);
  for (const auto& [index, label] : rows) {
    if (index >= count) {
      throw Error(ErrorCode::DanglingReference, where + ": label row for sample " +
                                                    std::to_string(index) + " of " +
                                                    std::to_string(count));
    }
    if (label >= num_classes) {
      throw Error(ErrorCode::ClassCountMismatch, where + ": label " + std::to_string(label) +
                                                     " with " + std::to_string(num_classes) +
                                                     " classes");
    }
    out[index] = label;
  }
  return out;
}

}  // namespace

const char* to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

TrainingScope::TrainingScope() { ++g_training_depth; }
TrainingScope::~TrainingScope() { --g_training_depth; }
bool TrainingScope::active() { return g_training_depth > 0; }

std::uint64_t target_label_reads() { return g_label_reads; }

const Matrix& Dataset::features(Domain d) const {
  return d == Domain::source ? source_features : target_features;
}

const Matrix& Dataset::captions(Domain d) const {
  return d == Domain::source ? source_captions : target_captions;
}

void Dataset::set_target_eval_labels(std::vector<std::optional<std::size_t>> labels_by_index) {
  target_eval_labels_ = std::move(labels_by_index);
}

bool Dataset::has_target_eval_labels() const {
  if (target_eval_labels_.empty()) return false;
  return std::all_of(target_samples.begin(), target_samples.end(), [&](const Sample& s) {
    return s.index < target_eval_labels_.size() && target_eval_labels_[s.index].has_value();
  });
}

std::size_t Dataset::target_eval_label(std::size_t index) const {
  if (TrainingScope::active()) {
    throw Error(ErrorCode::LabelAccessViolation, "target ground truth read during training");
  }
  if (index >= target_eval_labels_.size() || !target_eval_labels_[index]) {
    throw Error(ErrorCode::NoLabelsForSplit, "no evaluation label for target sample " +
                                                 std::to_string(index));
  }
  ++g_label_reads;
  return *target_eval_labels_[index];
}

std::size_t Dataset::eval_label(const Sample& s) const {
  if (s.domain == Domain::target) return target_eval_label(s.index);
  if (!s.label) throw Error(ErrorCode::NoLabelsForSplit, "source sample without label");
  return *s.label;
}

void Dataset::validate() const {
  const std::size_t n = num_classes();
  if (n < 2) throw Error(ErrorCode::ClassCountMismatch, "need at least two classes");
  if (reference_anchors.rows() != n) {
    throw Error(ErrorCode::ClassCountMismatch, "anchor file has " +
                                                   std::to_string(reference_anchors.rows()) +
                                                   " rows for " + std::to_string(n) + " classes");
  }
  for (Domain d : {Domain::source, Domain::target}) {
    if (features(d).rows() != captions(d).rows()) {
      throw Error(ErrorCode::LengthMismatch, std::string(to_string(d)) +
                                                 ": feature and caption counts differ");
    }
  }
  if (!target_features.empty() && source_features.cols() != target_features.cols()) {
    throw Error(ErrorCode::DimMismatch, "source and target feature dims differ");
  }
  if (!target_captions.empty() && source_captions.cols() != target_captions.cols()) {
    throw Error(ErrorCode::DimMismatch, "source and target caption dims differ");
  }
  for (const Sample& s : source_samples) {
    if (!s.label) throw Error(ErrorCode::MissingSourceLabels, "source sample without label");
    if (*s.label >= n) throw Error(ErrorCode::ClassCountMismatch, "source label out of range");
    if (s.index >= source_features.rows()) throw Error(ErrorCode::DanglingReference, "bad index");
  }
  for (const Sample& s : target_samples) {
    if (s.label) throw Error(ErrorCode::LabelAccessViolation, "target sample carries a label");
    if (s.index >= target_features.rows()) throw Error(ErrorCode::DanglingReference, "bad index");
  }
}

Dataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::DanglingReference, "manifest " + path.string() + " not found");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();

  Dataset d;
  try {
    d.class_names = manifest.at("classes").get<std::vector<std::string>>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ParseError, "manifest needs a `classes` string array");
  }
  const std::size_t n = d.class_names.size();
  if (n < 2) throw Error(ErrorCode::ClassCountMismatch, "need at least two classes");

  d.reference_anchors =
      load_embeddings(resolve(base, manifest, "anchors", "manifest"), optional_dim(manifest, "anchor"))
          .vectors;
  if (d.reference_anchors.rows() != n) {
    throw Error(ErrorCode::ClassCountMismatch, "anchor rows " +
                                                   std::to_string(d.reference_anchors.rows()) +
                                                   " != classes " + std::to_string(n));
  }

  if (!manifest.contains("domains") || !manifest["domains"].contains("source") ||
      !manifest["domains"].contains("target")) {
    throw Error(ErrorCode::DanglingReference, "manifest needs domains.source and domains.target");
  }
  const json& src = manifest["domains"]["source"];
  const json& tgt = manifest["domains"]["target"];
  const auto feature_dim = optional_dim(manifest, "feature");
  const auto caption_dim = optional_dim(manifest, "caption");

  d.source_features = load_embeddings(resolve(base, src, "features", "source"), feature_dim).vectors;
  d.source_captions = load_embeddings(resolve(base, src, "captions", "source"), caption_dim).vectors;
  d.target_features = load_embeddings(resolve(base, tgt, "features", "target"), feature_dim).vectors;
  d.target_captions = load_embeddings(resolve(base, tgt, "captions", "target"), caption_dim).vectors;

  if (!src.contains("labels") || !src["labels"].is_string()) {
    throw Error(ErrorCode::MissingSourceLabels, "domains.source.labels not given");
  }
  std::filesystem::path src_labels = src["labels"].get<std::string>();
  if (src_labels.is_relative()) src_labels = base / src_labels;
  if (!std::filesystem::exists(src_labels)) {
    throw Error(ErrorCode::MissingSourceLabels, src_labels.string() + " not found");
  }
  const auto source_labels =
      labels_by_index(read_label_csv(src_labels), d.source_features.rows(), n, "source labels");
  for (std::size_t i = 0; i < d.source_features.rows(); ++i) {
    if (!source_labels[i]) {
      throw Error(ErrorCode::MissingSourceLabels, "source sample " + std::to_string(i) +
                                                      " has no label");
    }
    d.source_samples.push_back({i, Domain::source, source_labels[i]});
  }
  for (std::size_t i = 0; i < d.target_features.rows(); ++i) {
    d.target_samples.push_back({i, Domain::target, std::nullopt});
  }
  if (tgt.contains("labels") && tgt["labels"].is_string()) {
    const auto labels_path = resolve(base, tgt, "labels", "target");
    d.set_target_eval_labels(
        labels_by_index(read_label_csv(labels_path), d.target_features.rows(), n, "target labels"));
  }
  d.validate();
  return d;
}

Dataset subsample_target(const Dataset& d, double ratio, std::uint64_t seed,
                         std::span<const std::size_t> strata) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw Error(ErrorCode::RatioOutOfRange, "target ratio must lie in (0, 1]");
  }
  if (!strata.empty() && strata.size() != d.target_samples.size()) {
    throw Error(ErrorCode::LengthMismatch, "one stratum per target sample required");
  }
  Dataset out = d;
  if (ratio == 1.0) return out;

  std::map<std::size_t, std::vector<std::size_t>> groups;  // stratum -> positions
  for (std::size_t i = 0; i < d.target_samples.size(); ++i) {
    groups[strata.empty() ? 0 : strata[i]].push_back(i);
  }
  std::vector<bool> keep(d.target_samples.size(), false);
  for (auto& [stratum, positions] : groups) {
    // The permutation depends on seed and stratum only, never on ratio.
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (stratum + 1)));
    std::shuffle(positions.begin(), positions.end(), rng);
    const auto wanted = static_cast<std::size_t>(
        std::llround(ratio * static_cast<double>(positions.size())));
    const std::size_t take = std::clamp<std::size_t>(wanted, 1, positions.size());
    for (std::size_t k = 0; k < take; ++k) keep[positions[k]] = true;
  }
  out.target_samples.clear();
  for (std::size_t i = 0; i < d.target_samples.size(); ++i) {
    if (keep[i]) out.target_samples.push_back(d.target_samples[i]);
  }
  return out;
}

}  // namespace laguna
