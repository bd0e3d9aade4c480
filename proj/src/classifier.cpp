#include "laguna/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "laguna/checkpoint.hpp"
#include "laguna/embedding_io.hpp"
#include "laguna/error.hpp"
#include "laguna/optimizer.hpp"

namespace laguna {

const char* to_string(TargetStructure s) {
  return s == TargetStructure::caption ? "caption" : "pseudo-anchor";
}

TargetStructure parse_target_structure(const std::string& s) {
  if (s == "caption") return TargetStructure::caption;
  if (s == "pseudo-anchor" || s == "pseudo_anchor") return TargetStructure::pseudo_anchor;
  throw Error(ErrorCode::InvalidConfig, "unknown target structure `" + s + "`");
}

void TrainConfig::validate() const {
  weights.validate();
  if (epochs == 0 || batch_size == 0) throw Error(ErrorCode::InvalidConfig, "epochs and batch must be > 0");
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lr/wd must be >= 0");
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) {
    throw Error(ErrorCode::RatioOutOfRange, "target ratio must lie in (0, 1]");
  }
  if (embedding_dim == 0 || encoder_hidden == 0 || head_hidden == 0) {
    throw Error(ErrorCode::InvalidConfig, "layer widths must be > 0");
  }
  if (attention_heads == 0 || embedding_dim % attention_heads != 0) {
    throw Error(ErrorCode::InvalidConfig, "attention heads must divide the embedding dim");
  }
  if (!switches.learnable_anchors() && (switches.use_cd_attention || switches.use_reg)) {
    throw Error(ErrorCode::InvalidConfig,
                "cross-domain attention and the volume regularizer need learnable anchors");
  }
  if (switches.absolute_alignment_mode && !switches.use_reference_anchors) {
    throw Error(ErrorCode::InvalidConfig, "absolute alignment needs reference anchors");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lambda1", weights.lambda1},
          {"lambda2", weights.lambda2},
          {"lambda3", weights.lambda3},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"seed", seed},
          {"target_structure", to_string(target_structure)},
          {"switches",
           {{"use_reference_anchors", switches.use_reference_anchors},
            {"anchors_shared_across_domains", switches.anchors_shared_across_domains},
            {"absolute_alignment_mode", switches.absolute_alignment_mode},
            {"use_cd_attention", switches.use_cd_attention},
            {"use_reg", switches.use_reg}}},
          {"target_ratio", target_ratio},
          {"embedding_dim", embedding_dim},
          {"encoder_hidden", encoder_hidden},
          {"head_hidden", head_hidden},
          {"attention_heads", attention_heads},
          {"freeze_anchors", freeze_anchors}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.weights = {j.at("lambda1").get<double>(), j.at("lambda2").get<double>(),
                 j.at("lambda3").get<double>()};
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.target_structure = parse_target_structure(j.at("target_structure").get<std::string>());
    const auto& s = j.at("switches");
    c.switches = {s.at("use_reference_anchors").get<bool>(),
                  s.at("anchors_shared_across_domains").get<bool>(),
                  s.at("absolute_alignment_mode").get<bool>(), s.at("use_cd_attention").get<bool>(),
                  s.at("use_reg").get<bool>()};
    c.target_ratio = j.at("target_ratio").get<double>();
    c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    c.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
    c.head_hidden = j.at("head_hidden").get<std::size_t>();
    c.attention_heads = j.at("attention_heads").get<std::size_t>();
    c.freeze_anchors = j.at("freeze_anchors").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("train config: ") + e.what());
  }
  return c;
}

CrossDomainAttention make_attention(std::size_t dim, std::size_t heads, double noise,
                                    std::mt19937_64& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw Error(ErrorCode::InvalidConfig, "attention heads must divide the embedding dim");
  }
  const std::size_t d = dim / heads;
  std::normal_distribution<double> normal(0.0, noise);
  auto projection = [&](const std::string& name, std::size_t h) {
    Matrix w(dim, d);
    if (noise > 0.0) {
      for (double& v : w.data()) v = normal(rng);
    }
    for (std::size_t i = 0; i < d; ++i) w(h * d + i, i) += 1.0;
    return Parameter("attention." + name + "." + std::to_string(h), std::move(w));
  };
  CrossDomainAttention attn;
  for (std::size_t h = 0; h < heads; ++h) {
    attn.query.push_back(projection("query", h));
    attn.key.push_back(projection("key", h));
    attn.value.push_back(projection("value", h));
  }
  return attn;
}

AttentionOutput cross_domain_attend(std::span<const double> g, const AnchorSet& keys,
                                    const AnchorSet& values, const CrossDomainAttention& attn) {
  const std::size_t dim = g.size();
  if (keys.dim() != dim || values.dim() != dim || keys.size() != values.size() ||
      attn.heads() == 0 || attn.query.front().value.rows() != dim) {
    throw Error(ErrorCode::DimMismatch, "attention operands must all have dim D_v");
  }
  const Matrix q_in = Matrix::row_vector(g);
  AttentionOutput out;
  out.output.assign(g.begin(), g.end());
  const double scale = 1.0 / std::sqrt(static_cast<double>(attn.head_dim()));
  for (std::size_t h = 0; h < attn.heads(); ++h) {
    const Matrix q = matmul(q_in, attn.query[h].value);
    const Matrix k = matmul(keys.anchors, attn.key[h].value);
    const Matrix v = matmul(values.anchors, attn.value[h].value);
    Matrix scores = matmul_transposed(q, k);
    for (double& s : scores.data()) s *= scale;
    const Matrix w = softmax_rows(scores);
    const Matrix head_out = matmul(w, v);
    for (std::size_t c = 0; c < head_out.cols(); ++c) out.output[h * attn.head_dim() + c] += head_out(0, c);
    out.weights.emplace_back(w.data().begin(), w.data().end());
  }
  return out;
}

namespace {

// Row i of the result comes from `source_rows` or `target_rows` by domain.
Var select_by_domain(Tape& tape, Var source_rows, Var target_rows, std::span<const Domain> domains) {
  if (source_rows.id() == target_rows.id()) return source_rows;
  const auto n_target = static_cast<std::size_t>(std::count(domains.begin(), domains.end(), Domain::target));
  if (n_target == 0) return source_rows;
  if (n_target == domains.size()) return target_rows;
  Matrix source_mask(source_rows.rows(), source_rows.cols());
  Matrix target_mask(source_rows.rows(), source_rows.cols());
  for (std::size_t r = 0; r < domains.size(); ++r) {
    Matrix& m = domains[r] == Domain::source ? source_mask : target_mask;
    for (double& v : m.row(r)) v = 1.0;
  }
  return ad::add(ad::hadamard(source_rows, tape.constant(std::move(source_mask))),
                 ad::hadamard(target_rows, tape.constant(std::move(target_mask))));
}

}  // namespace

namespace ad {

Var cross_domain_attend(Tape& tape, CrossDomainAttention& attn, Var g, Var source_keys,
                        Var target_keys, Var values, std::span<const Domain> domains) {
  if (g.rows() != domains.size()) throw Error(ErrorCode::LengthMismatch, "one domain per row");
  if (g.cols() != source_keys.cols() || g.cols() != target_keys.cols() || g.cols() != values.cols()) {
    throw Error(ErrorCode::DimMismatch, "attention operands must all have dim D_v");
  }
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(attn.head_dim()));
  std::vector<Var> heads;
  for (std::size_t h = 0; h < attn.heads(); ++h) {
    Var wq = tape.leaf(attn.query[h]);
    Var wk = tape.leaf(attn.key[h]);
    Var wv = tape.leaf(attn.value[h]);
    Var q = matmul(g, wq);
    Var ks = matmul(source_keys, wk);
    Var kt = source_keys.id() == target_keys.id() ? ks : matmul(target_keys, wk);
    Var v = matmul(values, wv);
    Var scores_s = matmul(q, transpose(ks));
    Var scores_t = kt.id() == ks.id() ? scores_s : matmul(q, transpose(kt));
    Var scores = scale(select_by_domain(tape, scores_s, scores_t, domains), scale_factor);
    heads.push_back(matmul(softmax_rows(scores), v));
  }
  Var attended = heads.size() == 1 ? heads.front() : hconcat(heads);
  return add(attended, g);
}

}  // namespace ad

std::vector<Parameter*> ClassifierModel::anchor_parameters() {
  std::vector<Parameter*> out;
  if (!switches.learnable_anchors()) return out;
  out.push_back(&anchors_source);
  if (!switches.anchors_shared_across_domains) out.push_back(&anchors_target);
  return out;
}

std::vector<Parameter*> ClassifierModel::parameters() {
  std::vector<Parameter*> out;
  encoder.collect(out);
  for (Parameter* p : anchor_parameters()) out.push_back(p);
  if (switches.learnable_anchors() && switches.use_cd_attention) {
    for (std::size_t h = 0; h < attention.heads(); ++h) {
      out.insert(out.end(), {&attention.query[h], &attention.key[h], &attention.value[h]});
    }
  }
  head.collect(out);
  return out;
}

std::vector<const Parameter*> ClassifierModel::parameters() const {
  auto mutable_list = const_cast<ClassifierModel*>(this)->parameters();
  return {mutable_list.begin(), mutable_list.end()};
}

ClassifierModel make_classifier(std::size_t feature_dim, std::size_t n_classes,
                                const AnchorSet& reference, const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  ClassifierModel m;
  m.switches = cfg.switches;
  m.encoder = make_mlp("encoder", feature_dim, cfg.encoder_hidden, cfg.embedding_dim, rng);
  m.head = make_mlp("head", cfg.embedding_dim, cfg.head_hidden, n_classes, rng);
  if (cfg.switches.absolute_alignment_mode && cfg.embedding_dim != reference.dim()) {
    throw Error(ErrorCode::DimMismatch, "absolute alignment needs embedding dim == anchor dim");
  }
  if (cfg.switches.learnable_anchors()) {
    m.anchors_source = Parameter(
        "anchors.source",
        init_learnable_anchors(n_classes, cfg.embedding_dim, reference, cfg.seed + 101,
                               AnchorDomain::source)
            .anchors);
    if (!cfg.switches.anchors_shared_across_domains) {
      m.anchors_target = Parameter(
          "anchors.target",
          init_learnable_anchors(n_classes, cfg.embedding_dim, reference, cfg.seed + 202,
                                 AnchorDomain::target)
              .anchors);
    }
    if (cfg.switches.use_cd_attention) {
      m.attention = make_attention(cfg.embedding_dim, cfg.attention_heads, 0.02, rng);
    }
  }
  return m;
}

ForwardVars forward_graph(Tape& tape, ClassifierModel& model, const Matrix& features,
                          std::span<const Domain> domains) {
  if (features.rows() != domains.size()) throw Error(ErrorCode::LengthMismatch, "one domain per row");
  if (features.cols() != model.feature_dim()) {
    throw Error(ErrorCode::DimMismatch, "feature dim " + std::to_string(features.cols()) +
                                            " vs encoder input " + std::to_string(model.feature_dim()));
  }
  ForwardVars out;
  out.g = model.encoder.forward(tape, tape.constant(features));
  out.features = out.g;
  if (model.switches.learnable_anchors()) {
    Var as = tape.leaf(model.source_anchors());
    Var at = tape.leaf(model.target_anchors());
    Var rs = ad::cosine_rows(out.g, as, kCosineEpsilon);
    Var rt = at.id() == as.id() ? rs : ad::cosine_rows(out.g, at, kCosineEpsilon);
    out.r_g = select_by_domain(tape, rs, rt, domains);
    if (model.switches.use_cd_attention) {
      out.features = ad::cross_domain_attend(tape, model.attention, out.g, as, at, as, domains);
    }
  }
  out.logits = model.head.forward(tape, out.features);
  return out;
}

Var classifier_batch_loss(Tape& tape, ClassifierModel& model, const BatchInput& batch,
                          const TrainConfig& cfg, double reference_logdet, LossParts* parts) {
  ForwardVars fv = forward_graph(tape, model, batch.features, batch.domains);
  Var ce = ad::cross_entropy_rows(fv.logits, batch.labels);

  std::optional<Var> ls;
  if (fv.r_g) {
    ls = ad::structure_loss(*fv.r_g, batch.structure_targets);
  } else if (cfg.switches.absolute_alignment_mode) {
    ls = ad::absolute_alignment_loss(fv.g, tape.constant(batch.reference_rows));
  }

  std::optional<Var> reg;
  LossParts local;
  if (model.switches.learnable_anchors()) {
    Var as = tape.leaf(model.source_anchors());
    Var at = tape.leaf(model.target_anchors());
    if (cfg.switches.use_reg) {
      Var gs = ad::matmul(as, ad::transpose(as));
      Var gt = at.id() == as.id() ? gs : ad::matmul(at, ad::transpose(at));
      reg = ad::volume_regularizer(gs, gt, reference_logdet, cfg.jitter);
    }
    // Diagnostics only; a Gram beyond the jitter ladder is reported as -inf
    // unless the regularizer itself needed it (and threw above).
    auto safe_logdet = [&](const Matrix& a) {
      try {
        return logdet_with_policy(matmul_transposed(a, a), cfg.jitter).value;
      } catch (const Error&) {
        return -std::numeric_limits<double>::infinity();
      }
    };
    local.logdet_s = safe_logdet(as.value());
    local.logdet_t = at.id() == as.id() ? local.logdet_s : safe_logdet(at.value());
    local.reg = std::abs(local.logdet_t - reference_logdet) + std::abs(local.logdet_s - reference_logdet);
  }

  Var total = ad::classifier_objective(ce, ls, reg, cfg.weights);
  if (parts) {
    local.ce = ce.value().scalar();
    local.ls = ls ? ls->value().scalar() : 0.0;
    local.total = total.value().scalar();
    *parts = local;
  }
  return total;
}

ForwardOutput forward(const ClassifierModel& model, const Matrix& features,
                      std::span<const Domain> domains) {
  ClassifierModel copy = model;  // leaves bind mutable parameters; inference never writes them
  Tape tape;
  ForwardVars fv = forward_graph(tape, copy, features, domains);
  ForwardOutput out;
  out.logits = fv.logits.value();
  out.g = fv.g.value();
  if (fv.r_g) out.r_g = fv.r_g->value();
  return out;
}

Matrix target_structure_rows(const PseudoLabelTable& table, const Matrix& reference_affinity,
                             TargetStructure mode) {
  if (table.size() == 0) return {};
  if (mode == TargetStructure::caption) return table.r_z;
  return gather_rows(reference_affinity, table.labels);
}

namespace {

struct MergedEntry {
  Domain domain;
  std::size_t index;      // row in the domain's feature file
  std::size_t label;      // y or pseudo-label
  std::size_t table_row;  // target only
};

double target_structure_gap(const ClassifierModel& model, const Dataset& d,
                            const std::vector<MergedEntry>& entries, const Matrix& targets) {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> table_rows;
  for (const auto& e : entries) {
    if (e.domain != Domain::target) continue;
    rows.push_back(e.index);
    table_rows.push_back(e.table_row);
  }
  if (rows.empty() || !model.switches.learnable_anchors()) return 0.0;
  std::vector<Domain> domains(rows.size(), Domain::target);
  const ForwardOutput out = forward(model, gather_rows(d.target_features, rows), domains);
  const Matrix t = gather_rows(targets, table_rows);
  double s = 0.0;
  for (std::size_t i = 0; i < out.r_g.size(); ++i) s += std::abs(out.r_g.data()[i] - t.data()[i]);
  return s / static_cast<double>(out.r_g.size());
}

}  // namespace

ModelBundle train_classifier(const Dataset& d, const AnchorSet& reference,
                             const PseudoLabelTable& table, const TrainConfig& cfg) {
  cfg.validate();
  TrainingScope no_target_labels;
  if (reference.size() != d.num_classes()) {
    throw Error(ErrorCode::ClassCountMismatch, "reference anchors do not match class count");
  }
  if (d.source_samples.empty() && d.target_samples.empty()) {
    throw Error(ErrorCode::InvalidConfig, "nothing to train on");
  }

  ModelBundle bundle;
  bundle.config = cfg;
  bundle.model = make_classifier(d.source_features.cols(), d.num_classes(), reference, cfg);
  bundle.reference_logdet = gram_logdet(reference.anchors);
  bundle.log.reference_logdet = bundle.reference_logdet;
  ClassifierModel& model = bundle.model;

  const Matrix affinity = reference_affinities(reference);
  const Matrix target_targets = target_structure_rows(table, affinity, cfg.target_structure);

  std::vector<MergedEntry> entries;
  for (const Sample& s : d.source_samples) {
    entries.push_back({Domain::source, s.index, *s.label, 0});
  }
  for (const Sample& s : d.target_samples) {
    const auto row = table.find(s.index);
    if (!row) {
      throw Error(ErrorCode::MissingPseudoLabels, "target sample " + std::to_string(s.index) +
                                                      " has no pseudo-label");
    }
    entries.push_back({Domain::target, s.index, table.labels[*row], *row});
  }

  const std::size_t n = entries.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  OptimizerState opt;
  opt.schedule = {cfg.lr, cfg.epochs * batches};
  opt.weight_decay = cfg.weight_decay;

  std::vector<Parameter*> params = model.parameters();
  if (cfg.freeze_anchors) {
    const auto anchors = model.anchor_parameters();
    std::erase_if(params, [&](Parameter* p) {
      return std::find(anchors.begin(), anchors.end(), p) != anchors.end();
    });
  }

  bundle.log.target_structure_gap_initial = target_structure_gap(model, d, entries, target_targets);

  std::mt19937_64 rng(cfg.seed ^ 0xC0FFEE1234567ULL);
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::size_t size = end - begin;
      BatchInput batch;
      batch.features = Matrix(size, d.source_features.cols());
      batch.structure_targets = Matrix(size, d.num_classes());
      if (cfg.switches.absolute_alignment_mode) batch.reference_rows = Matrix(size, reference.dim());
      for (std::size_t k = 0; k < size; ++k) {
        const MergedEntry& e = entries[order[begin + k]];
        const auto src = d.features(e.domain).row(e.index);
        std::copy(src.begin(), src.end(), batch.features.row(k).begin());
        batch.domains.push_back(e.domain);
        batch.labels.push_back(e.label);
        const auto target = e.domain == Domain::source ? affinity.row(e.label)
                                                       : target_targets.row(e.table_row);
        std::copy(target.begin(), target.end(), batch.structure_targets.row(k).begin());
        if (cfg.switches.absolute_alignment_mode) {
          const auto a = reference.anchors.row(e.label);
          std::copy(a.begin(), a.end(), batch.reference_rows.row(k).begin());
        }
      }

      Tape tape;
      LossParts parts;
      Var loss = classifier_batch_loss(tape, model, batch, cfg, bundle.reference_logdet, &parts);
      tape.backward(loss);
      optimizer_step(params, opt);
      for (Parameter* p : model.parameters()) p->zero_grad();  // frozen anchors still collect grads
      for (Parameter* a : model.anchor_parameters()) {
        for (std::size_t r = 0; r < a->value.rows(); ++r) {
          if (norm2(a->value.row(r)) < kCosineEpsilon) {
            throw Error(ErrorCode::ZeroVector, a->name + " row " + std::to_string(r) + " collapsed");
          }
        }
      }
      bundle.log.steps.push_back({step++, epoch, parts});
      epoch_total += parts.total;
    }
    bundle.log.epoch_loss.push_back(epoch_total / static_cast<double>(batches));
  }
  bundle.log.target_structure_gap_final = target_structure_gap(model, d, entries, target_targets);
  return bundle;
}

EvalMetrics score_predictions(std::span<const std::size_t> predicted,
                              std::span<const std::size_t> truth, std::size_t n_classes) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw Error(ErrorCode::LengthMismatch, "predictions and labels differ in length");
  }
  EvalMetrics m;
  m.per_class.assign(n_classes, 0.0);
  m.support.assign(n_classes, 0);
  std::vector<std::size_t> hits(n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes) throw Error(ErrorCode::LabelOutOfRange, "label out of range");
    ++m.support[truth[i]];
    if (predicted[i] == truth[i]) {
      ++hits[truth[i]];
      ++correct;
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (m.support[c] == 0) continue;
    m.per_class[c] = static_cast<double>(hits[c]) / static_cast<double>(m.support[c]);
    recall_sum += m.per_class[c];
    ++present;
  }
  m.mean_per_class_accuracy = recall_sum / static_cast<double>(present);
  return m;
}

std::vector<std::size_t> predict(const ModelBundle& bundle, const Dataset& d, Split split) {
  const auto& samples = split == Split::source ? d.source_samples : d.target_samples;
  const Domain domain = split == Split::source ? Domain::source : Domain::target;
  std::vector<std::size_t> rows;
  for (const Sample& s : samples) rows.push_back(s.index);
  if (rows.empty()) return {};
  std::vector<Domain> domains(rows.size(), domain);
  const ForwardOutput out = forward(bundle.model, gather_rows(d.features(domain), rows), domains);
  std::vector<std::size_t> labels;
  for (std::size_t r = 0; r < out.logits.rows(); ++r) labels.push_back(argmax(out.logits.row(r)));
  return labels;
}

EvalMetrics evaluate(const ModelBundle& bundle, const Dataset& d, Split split) {
  const auto& samples = split == Split::source ? d.source_samples : d.target_samples;
  if (samples.empty()) throw Error(ErrorCode::NoLabelsForSplit, "split is empty");
  if (split == Split::target && !d.has_target_eval_labels()) {
    throw Error(ErrorCode::NoLabelsForSplit, "target split has no evaluation labels");
  }
  const auto predicted = predict(bundle, d, split);
  std::vector<std::size_t> truth;
  for (const Sample& s : samples) truth.push_back(d.eval_label(s));
  return score_predictions(predicted, truth, d.num_classes());
}

nlohmann::json metrics_json(const EvalMetrics& m, const TrainingLog& log) {
  return {{"accuracy", m.accuracy},
          {"mean_per_class_accuracy", m.mean_per_class_accuracy},
          {"per_class", m.per_class},
          {"loss_curve", log.epoch_loss}};
}

void write_loss_csv(const TrainingLog& log, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "step,ce,ls,reg,total\n";
  for (const auto& s : log.steps) {
    out << s.step << ',' << format_number(s.parts.ce) << ',' << format_number(s.parts.ls) << ','
        << format_number(s.parts.reg) << ',' << format_number(s.parts.total) << '\n';
  }
  write_text_file(path, out.str());
}

EmbeddingExport collect_embeddings(const ModelBundle& bundle, const Dataset& d,
                                   const PseudoLabelTable& table, const AnchorSet& reference) {
  EmbeddingExport e;
  std::vector<std::size_t> src_rows;
  std::vector<std::size_t> tgt_rows;
  for (const Sample& s : d.source_samples) {
    e.index.push_back(s.index);
    e.domain.push_back(Domain::source);
    e.label.push_back(*s.label);
    src_rows.push_back(s.index);
  }
  for (const Sample& s : d.target_samples) {
    const auto row = table.find(s.index);
    if (!row) throw Error(ErrorCode::MissingPseudoLabels, "target sample without pseudo-label");
    e.index.push_back(s.index);
    e.domain.push_back(Domain::target);
    e.label.push_back(table.labels[*row]);
    tgt_rows.push_back(s.index);
  }
  const std::size_t dim = bundle.model.feature_dim();
  Matrix features(e.index.size(), dim);
  for (std::size_t i = 0; i < src_rows.size(); ++i) {
    const auto r = d.source_features.row(src_rows[i]);
    std::copy(r.begin(), r.end(), features.row(i).begin());
  }
  for (std::size_t i = 0; i < tgt_rows.size(); ++i) {
    const auto r = d.target_features.row(tgt_rows[i]);
    std::copy(r.begin(), r.end(), features.row(src_rows.size() + i).begin());
  }
  const ForwardOutput out = forward(bundle.model, features, e.domain);
  e.g = out.g;
  if (!out.r_g.empty()) {
    e.r = out.r_g;
  } else if (out.g.cols() == reference.dim()) {
    e.r = rel_rows(out.g, reference);
  }
  return e;
}

void write_embedding_csv(const EmbeddingExport& e, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "index,domain,label";
  for (std::size_t c = 0; c < e.g.cols(); ++c) out << ",g" << c;
  for (std::size_t c = 0; c < e.r.cols(); ++c) out << ",r" << c;
  out << '\n';
  for (std::size_t i = 0; i < e.index.size(); ++i) {
    out << e.index[i] << ',' << to_string(e.domain[i]) << ',' << e.label[i];
    for (double v : e.g.row(i)) out << ',' << format_number(v);
    if (!e.r.empty()) {
      for (double v : e.r.row(i)) out << ',' << format_number(v);
    }
    out << '\n';
  }
  write_text_file(path, out.str());
}

void export_embeddings(const ModelBundle& bundle, const Dataset& d, const PseudoLabelTable& table,
                       const AnchorSet& reference, const std::filesystem::path& out) {
  write_embedding_csv(collect_embeddings(bundle, d, table, reference), out);
}

namespace {

double normalized_cross_domain_distance(const Matrix& x, std::span<const Domain> domains,
                                        std::span<const std::size_t> labels) {
  const std::size_t n_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  const std::size_t dim = x.cols();
  std::vector<std::vector<double>> sums(3 * n_classes, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(3 * n_classes, 0);
  // slot c: source, n + c: target, 2n + c: pooled
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t c = labels[i];
    for (std::size_t slot : {domains[i] == Domain::source ? c : n_classes + c, 2 * n_classes + c}) {
      ++counts[slot];
      for (std::size_t k = 0; k < dim; ++k) sums[slot][k] += x(i, k);
    }
  }
  auto centroid = [&](std::size_t slot) {
    std::vector<double> m = sums[slot];
    for (double& v : m) v /= static_cast<double>(counts[slot]);
    return m;
  };
  auto distance = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  };
  double cross = 0.0;
  std::size_t cross_n = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (counts[c] == 0 || counts[n_classes + c] == 0) continue;
    cross += distance(centroid(c), centroid(n_classes + c));
    ++cross_n;
  }
  double spread = 0.0;
  std::size_t spread_n = 0;
  for (std::size_t a = 0; a < n_classes; ++a) {
    for (std::size_t b = a + 1; b < n_classes; ++b) {
      if (counts[2 * n_classes + a] == 0 || counts[2 * n_classes + b] == 0) continue;
      spread += distance(centroid(2 * n_classes + a), centroid(2 * n_classes + b));
      ++spread_n;
    }
  }
  if (cross_n == 0 || spread_n == 0 || spread == 0.0) {
    throw Error(ErrorCode::InvalidConfig, "separation needs classes present in both domains");
  }
  return (cross / static_cast<double>(cross_n)) / (spread / static_cast<double>(spread_n));
}

}  // namespace

SeparationMetrics cross_domain_separation(const EmbeddingExport& e) {
  if (e.r.empty()) throw Error(ErrorCode::InvalidConfig, "export carries no relative encodings");
  return {normalized_cross_domain_distance(e.r, e.domain, e.label),
          normalized_cross_domain_distance(e.g, e.domain, e.label)};
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir,
                 const nlohmann::json& provenance) {
  std::filesystem::create_directories(dir);
  const auto params = bundle.model.parameters();
  nlohmann::json descriptor = {
      {"kind", "classifier"},
      {"n_classes", bundle.model.num_classes()},
      {"feature_dim", bundle.model.feature_dim()},
      {"embedding_dim", bundle.model.embedding_dim()},
      {"reference_logdet", bundle.reference_logdet},
      {"config", bundle.config.to_json()},
      {"config_hash", sha256_hex(canonical_dump(bundle.config.to_json()))},
      {"parameters", save_parameters(dir, params)},
      {"provenance", provenance},
  };
  write_json_file(dir / "bundle.json", descriptor);
}

ModelBundle load_bundle(const std::filesystem::path& dir, const AnchorSet& reference) {
  const nlohmann::json descriptor = read_json_file(dir / "bundle.json");
  if (descriptor.value("kind", "") != "classifier") {
    throw Error(ErrorCode::ParseError, (dir / "bundle.json").string() + " is not a classifier bundle");
  }
  ModelBundle bundle;
  bundle.config = TrainConfig::from_json(descriptor.at("config"));
  bundle.model = make_classifier(descriptor.at("feature_dim").get<std::size_t>(),
                                 descriptor.at("n_classes").get<std::size_t>(), reference,
                                 bundle.config);
  auto params = bundle.model.parameters();
  load_parameters(dir, descriptor.at("parameters"), params);
  bundle.reference_logdet = descriptor.at("reference_logdet").get<double>();
  bundle.log.reference_logdet = bundle.reference_logdet;
  return bundle;
}

}  // namespace laguna
