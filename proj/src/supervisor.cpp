#include "laguna/supervisor.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "laguna/checkpoint.hpp"
#include "laguna/embedding_io.hpp"
#include "laguna/error.hpp"
#include "laguna/optimizer.hpp"

namespace laguna {

void SupervisorConfig::validate() const {
  weights.validate();
  if (epochs == 0 || batch_size == 0) throw Error(ErrorCode::InvalidConfig, "epochs and batch must be > 0");
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lr/wd must be >= 0");
  if (!(temperature > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, "temperature must be > 0");
}

std::vector<Parameter*> SupervisorModel::parameters() {
  if (frozen_) throw Error(ErrorCode::InvalidConfig, "supervisor is frozen");
  std::vector<Parameter*> out;
  net.collect(out);
  return out;
}

std::vector<const Parameter*> SupervisorModel::parameters() const {
  std::vector<const Parameter*> out;
  net.collect(out);
  return out;
}

Matrix SupervisorModel::encode(const Matrix& captions) const {
  if (captions.cols() != caption_dim()) {
    throw Error(ErrorCode::DimMismatch, "caption dim " + std::to_string(captions.cols()) +
                                            " vs supervisor input " + std::to_string(caption_dim()));
  }
  return net.infer(captions);
}

std::string SupervisorModel::checksum() const { return parameter_checksum(parameters()); }

SupervisorModel make_supervisor(std::size_t caption_dim, std::size_t anchor_dim,
                                std::size_t n_classes, const SupervisorConfig& cfg) {
  const std::size_t hidden = cfg.hidden != 0 ? cfg.hidden : std::max(anchor_dim, 2 * n_classes);
  std::mt19937_64 rng(cfg.seed ^ 0x5u);
  SupervisorModel model;
  model.net = make_mlp("supervisor", caption_dim, hidden, anchor_dim, rng);
  if (cfg.init == SupervisorInit::identity) {
    model.net.first.weight.value = near_identity(caption_dim, hidden, cfg.init_noise, rng);
    model.net.second.weight.value = near_identity(hidden, anchor_dim, cfg.init_noise, rng);
  }
  return model;
}

Var supervisor_batch_loss(Tape& tape, SupervisorModel& model, const Matrix& captions,
                          std::span<const std::size_t> labels, const AnchorSet& reference,
                          const Matrix& reference_affinity, const SupervisorConfig& cfg) {
  Var z = model.net.forward(tape, tape.constant(captions));
  Var r = ad::cosine_rows(z, tape.constant(reference.anchors), kCosineEpsilon);
  const Matrix targets = gather_rows(reference_affinity, labels);
  return ad::supervisor_objective(r, labels, targets, cfg.weights, cfg.temperature);
}

namespace {

double full_pass_loss(SupervisorModel& model, const Dataset& d, const AnchorSet& reference,
                      const Matrix& affinity, const SupervisorConfig& cfg) {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> labels;
  for (const Sample& s : d.source_samples) {
    rows.push_back(s.index);
    labels.push_back(*s.label);
  }
  Tape tape;
  return supervisor_batch_loss(tape, model, gather_rows(d.source_captions, rows), labels, reference,
                               affinity, cfg)
      .value()
      .scalar();
}

}  // namespace

SupervisorModel train_supervisor(const Dataset& d, const AnchorSet& reference,
                                 const SupervisorConfig& cfg, SupervisorLog* log) {
  cfg.validate();
  TrainingScope no_target_labels;
  if (d.source_samples.empty()) throw Error(ErrorCode::MissingSourceLabels, "no source samples");
  for (const Sample& s : d.source_samples) {
    if (!s.label) throw Error(ErrorCode::MissingSourceLabels, "source sample without label");
  }
  if (reference.size() != d.num_classes()) {
    throw Error(ErrorCode::ClassCountMismatch, "reference anchors do not match class count");
  }

  SupervisorModel model =
      make_supervisor(d.source_captions.cols(), reference.dim(), d.num_classes(), cfg);
  const Matrix affinity = reference_affinities(reference);

  const std::size_t n = d.source_samples.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  OptimizerState opt;
  opt.schedule = {cfg.lr, cfg.epochs * batches};
  opt.weight_decay = cfg.weight_decay;

  SupervisorLog local;
  local.epoch_loss.push_back(full_pass_loss(model, d, reference, affinity, cfg));

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      std::vector<std::size_t> rows;
      std::vector<std::size_t> labels;
      for (std::size_t k = begin; k < end; ++k) {
        const Sample& s = d.source_samples[order[k]];
        rows.push_back(s.index);
        labels.push_back(*s.label);
      }
      Tape tape;
      Var loss = supervisor_batch_loss(tape, model, gather_rows(d.source_captions, rows), labels,
                                       reference, affinity, cfg);
      tape.backward(loss);
      auto params = model.parameters();
      optimizer_step(params, opt);
      ++local.steps;
    }
    local.epoch_loss.push_back(full_pass_loss(model, d, reference, affinity, cfg));
  }
  model.freeze();
  if (log) *log = std::move(local);
  return model;
}

std::optional<std::size_t> PseudoLabelTable::find(std::size_t index) const {
  auto it = std::lower_bound(sample_index.begin(), sample_index.end(), index);
  if (it != sample_index.end() && *it == index) {
    return static_cast<std::size_t>(it - sample_index.begin());
  }
  // Tables read from foreign files need not be sorted.
  auto lin = std::find(sample_index.begin(), sample_index.end(), index);
  if (lin == sample_index.end()) return std::nullopt;
  return static_cast<std::size_t>(lin - sample_index.begin());
}

PseudoLabelTable pseudo_label(const SupervisorModel& model, const Dataset& d,
                              const AnchorSet& reference) {
  if (model.output_dim() != reference.dim()) {
    throw Error(ErrorCode::DimMismatch, "supervisor output dim must equal anchor dim");
  }
  PseudoLabelTable table;
  for (const Sample& s : d.target_samples) table.sample_index.push_back(s.index);
  if (table.sample_index.empty()) return table;
  table.z = model.encode(gather_rows(d.target_captions, table.sample_index));
  table.r_z = rel_rows(table.z, reference);
  for (std::size_t r = 0; r < table.r_z.rows(); ++r) table.labels.push_back(argmax(table.r_z.row(r)));
  return table;
}

double supervisor_accuracy(const SupervisorModel& model, const Dataset& d,
                           const AnchorSet& reference, Split split) {
  const auto& samples = split == Split::source ? d.source_samples : d.target_samples;
  if (samples.empty()) throw Error(ErrorCode::NoLabelsForSplit, "split is empty");
  if (split == Split::target && !d.has_target_eval_labels()) {
    throw Error(ErrorCode::NoLabelsForSplit, "target split has no evaluation labels");
  }
  std::vector<std::size_t> rows;
  for (const Sample& s : samples) rows.push_back(s.index);
  const Domain domain = split == Split::source ? Domain::source : Domain::target;
  const Matrix r = rel_rows(model.encode(gather_rows(d.captions(domain), rows)), reference);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (argmax(r.row(i)) == d.eval_label(samples[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

void write_pseudo_labels(const PseudoLabelTable& table, const std::filesystem::path& csv_path,
                         const std::filesystem::path& z_path) {
  LabelRows rows;
  for (std::size_t i = 0; i < table.size(); ++i) rows.emplace_back(table.sample_index[i], table.labels[i]);
  write_label_csv(csv_path, rows, "pseudo_label");
  if (table.size() > 0) write_embeddings(z_path, table.z);
}

PseudoLabelTable read_pseudo_labels(const std::filesystem::path& csv_path,
                                    const std::filesystem::path& z_path,
                                    const AnchorSet& reference) {
  const LabelRows rows = read_label_csv(csv_path);
  PseudoLabelTable table;
  if (rows.empty()) return table;
  table.z = load_embeddings(z_path, reference.dim()).vectors;
  if (table.z.rows() != rows.size()) {
    throw Error(ErrorCode::LengthMismatch, "pseudo-label CSV and z file differ in length");
  }
  table.r_z = rel_rows(table.z, reference);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].second >= reference.size()) {
      throw Error(ErrorCode::LabelOutOfRange, "pseudo-label out of range");
    }
    table.sample_index.push_back(rows[i].first);
    table.labels.push_back(rows[i].second);
  }
  return table;
}

}  // namespace laguna
