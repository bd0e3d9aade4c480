#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "laguna/dataset.hpp"
#include "laguna/layers.hpp"
#include "laguna/linalg.hpp"
#include "laguna/losses.hpp"
#include "laguna/relative.hpp"
#include "laguna/supervisor.hpp"

namespace laguna {

// Structure target for target-domain samples: rel(z, A) of the caption
// encoding, or rel(A[pseudo_label], A).
enum class TargetStructure { caption, pseudo_anchor };

const char* to_string(TargetStructure s);
TargetStructure parse_target_structure(const std::string& s);

struct AblationSwitches {
  bool use_reference_anchors = true;
  bool anchors_shared_across_domains = false;
  bool absolute_alignment_mode = false;
  bool use_cd_attention = true;
  bool use_reg = true;

  // Learnable per-domain anchors and L_S exist only in relative mode.
  bool learnable_anchors() const { return use_reference_anchors && !absolute_alignment_mode; }
};

struct TrainConfig {
  LossWeights weights;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-4;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  TargetStructure target_structure = TargetStructure::caption;
  AblationSwitches switches;
  double target_ratio = 1.0;
  std::size_t embedding_dim = 16;  // D_v
  std::size_t encoder_hidden = 64;
  std::size_t head_hidden = 64;
  std::size_t attention_heads = 1;
  bool freeze_anchors = false;
  JitterPolicy jitter;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Q/K/V projections shared by the source and target branches. Head h owns
// D_v x (D_v / heads) slices; outputs are concatenated back to D_v.
struct CrossDomainAttention {
  std::vector<Parameter> query;
  std::vector<Parameter> key;
  std::vector<Parameter> value;

  std::size_t heads() const { return query.size(); }
  std::size_t head_dim() const { return query.empty() ? 0 : query.front().value.cols(); }
};

CrossDomainAttention make_attention(std::size_t dim, std::size_t heads, double noise,
                                    std::mt19937_64& rng);

struct AttentionOutput {
  std::vector<double> output;                // attention(g) + g
  std::vector<std::vector<double>> weights;  // per head, sums to one
};

// softmax((g Wq)(keys Wk)^T / sqrt(d)) (values Wv) + g for one query vector.
// Target branch: keys = A_t, values = A_s. Source branch: keys = values = A_s.
AttentionOutput cross_domain_attend(std::span<const double> g, const AnchorSet& keys,
                                    const AnchorSet& values, const CrossDomainAttention& attn);

namespace ad {
// Batched attention with the key set chosen per row by domain.
Var cross_domain_attend(Tape& tape, CrossDomainAttention& attn, Var g, Var source_keys,
                        Var target_keys, Var values, std::span<const Domain> domains);
}  // namespace ad

class ClassifierModel {
 public:
  Mlp encoder;
  Mlp head;
  Parameter anchors_source;
  Parameter anchors_target;  // unused when anchors are shared
  CrossDomainAttention attention;
  AblationSwitches switches;

  Parameter& source_anchors() { return anchors_source; }
  Parameter& target_anchors() {
    return switches.anchors_shared_across_domains ? anchors_source : anchors_target;
  }
  const Parameter& source_anchors() const { return anchors_source; }
  const Parameter& target_anchors() const {
    return switches.anchors_shared_across_domains ? anchors_source : anchors_target;
  }

  std::size_t feature_dim() const { return encoder.in_dim(); }
  std::size_t embedding_dim() const { return encoder.out_dim(); }
  std::size_t num_classes() const { return head.out_dim(); }

  std::vector<Parameter*> anchor_parameters();
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

ClassifierModel make_classifier(std::size_t feature_dim, std::size_t n_classes,
                                const AnchorSet& reference, const TrainConfig& cfg);

// One mini-batch of the merged dataset.
struct BatchInput {
  Matrix features;
  std::vector<Domain> domains;
  std::vector<std::size_t> labels;  // y for source, pseudo-label for target
  Matrix structure_targets;         // one relative encoding per row
  Matrix reference_rows;            // A[label] rows, absolute-alignment mode only
};

struct LossParts {
  double ce = 0.0;
  double ls = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double logdet_s = 0.0;
  double logdet_t = 0.0;
};

struct ForwardVars {
  Var g;
  std::optional<Var> r_g;
  Var features;  // f after attention
  Var logits;
};

ForwardVars forward_graph(Tape& tape, ClassifierModel& model, const Matrix& features,
                          std::span<const Domain> domains);

// lambda1 * CE + lambda2 * (L_S or absolute alignment) + lambda3 * L_Reg.
Var classifier_batch_loss(Tape& tape, ClassifierModel& model, const BatchInput& batch,
                          const TrainConfig& cfg, double reference_logdet,
                          LossParts* parts = nullptr);

struct ForwardOutput {
  Matrix logits;
  Matrix g;
  Matrix r_g;  // empty without learnable anchors
};

ForwardOutput forward(const ClassifierModel& model, const Matrix& features,
                      std::span<const Domain> domains);

struct TrainingStep {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossParts parts;
};

struct TrainingLog {
  double reference_logdet = 0.0;
  std::vector<TrainingStep> steps;
  std::vector<double> epoch_loss;  // mean total per epoch
  // Mean |r_g - r_target| over target samples before and after training.
  double target_structure_gap_initial = 0.0;
  double target_structure_gap_final = 0.0;
};

struct ModelBundle {
  ClassifierModel model;
  TrainConfig config;
  double reference_logdet = 0.0;
  TrainingLog log;
};

// Structure targets for every target sample in table order.
Matrix target_structure_rows(const PseudoLabelTable& table, const Matrix& reference_affinity,
                             TargetStructure mode);

ModelBundle train_classifier(const Dataset& d, const AnchorSet& reference,
                             const PseudoLabelTable& table, const TrainConfig& cfg);

struct EvalMetrics {
  double accuracy = 0.0;
  double mean_per_class_accuracy = 0.0;
  std::vector<double> per_class;      // recall; 0 for classes without support
  std::vector<std::size_t> support;
};

EvalMetrics score_predictions(std::span<const std::size_t> predicted,
                              std::span<const std::size_t> truth, std::size_t n_classes);

std::vector<std::size_t> predict(const ModelBundle& bundle, const Dataset& d, Split split);

EvalMetrics evaluate(const ModelBundle& bundle, const Dataset& d, Split split = Split::target);

nlohmann::json metrics_json(const EvalMetrics& m, const TrainingLog& log);
void write_loss_csv(const TrainingLog& log, const std::filesystem::path& path);

// Per-sample absolute and relative representations for external plotting.
struct EmbeddingExport {
  std::vector<std::size_t> index;
  std::vector<Domain> domain;
  std::vector<std::size_t> label;  // ground truth for source, pseudo-label for target
  Matrix g;
  Matrix r;
};

EmbeddingExport collect_embeddings(const ModelBundle& bundle, const Dataset& d,
                                   const PseudoLabelTable& table, const AnchorSet& reference);
void write_embedding_csv(const EmbeddingExport& e, const std::filesystem::path& path);
void export_embeddings(const ModelBundle& bundle, const Dataset& d, const PseudoLabelTable& table,
                       const AnchorSet& reference, const std::filesystem::path& out);

// Mean distance between same-class source and target centroids divided by
// the mean distance between distinct class centroids, per space.
struct SeparationMetrics {
  double relative = 0.0;
  double absolute = 0.0;
};

SeparationMetrics cross_domain_separation(const EmbeddingExport& e);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir,
                 const nlohmann::json& provenance);
ModelBundle load_bundle(const std::filesystem::path& dir, const AnchorSet& reference);

}  // namespace laguna
