#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laguna/dataset.hpp"
#include "laguna/layers.hpp"
#include "laguna/losses.hpp"
#include "laguna/relative.hpp"

namespace laguna {

// identity: the hidden and output maps start as (rectangular) identities so
// the shared caption/language coordinates pass straight through; random:
// fan-in scaled Gaussian weights.
enum class SupervisorInit { identity, random };

struct SupervisorConfig {
  LossWeights weights{1.0, 0.1, 0.0};
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t hidden = 0;  // 0 selects max(D_l, 2 * N_c)
  SupervisorInit init = SupervisorInit::identity;
  double init_noise = 0.01;

  void validate() const;
};

// The language supervisor: caption embedding -> reference language space.
class SupervisorModel {
 public:
  Mlp net;

  std::size_t caption_dim() const { return net.in_dim(); }
  std::size_t output_dim() const { return net.out_dim(); }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  // Throws InvalidConfig once frozen.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  Matrix encode(const Matrix& captions) const;

  // SHA-256 over parameter names, shapes and values.
  std::string checksum() const;

 private:
  bool frozen_ = false;
};

SupervisorModel make_supervisor(std::size_t caption_dim, std::size_t anchor_dim,
                                std::size_t n_classes, const SupervisorConfig& cfg);

struct SupervisorLog {
  // Full-pass objective over the source split: index 0 before training,
  // index e after epoch e.
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

// Batch objective lambda1 * CE(softmax(rel(z, A) / tau), y) + lambda2 * L_S.
Var supervisor_batch_loss(Tape& tape, SupervisorModel& model, const Matrix& captions,
                          std::span<const std::size_t> labels, const AnchorSet& reference,
                          const Matrix& reference_affinity, const SupervisorConfig& cfg);

// Trains on source captions only and returns a frozen model.
SupervisorModel train_supervisor(const Dataset& d, const AnchorSet& reference,
                                 const SupervisorConfig& cfg, SupervisorLog* log = nullptr);

struct PseudoLabelTable {
  std::vector<std::size_t> sample_index;  // target row index
  std::vector<std::size_t> labels;        // argmax of r_z
  Matrix z;                               // supervisor outputs, one row per entry
  Matrix r_z;                             // rel(z, A)

  std::size_t size() const { return sample_index.size(); }
  // Row of a target sample index, or nullopt.
  std::optional<std::size_t> find(std::size_t index) const;
};

PseudoLabelTable pseudo_label(const SupervisorModel& model, const Dataset& d,
                              const AnchorSet& reference);

// Fraction of argmax(rel(z, A)) matches. Target ground truth is read through
// the evaluation-only path.
double supervisor_accuracy(const SupervisorModel& model, const Dataset& d,
                           const AnchorSet& reference, Split split);

// CSV `index,pseudo_label` plus an embedding file of z rows.
void write_pseudo_labels(const PseudoLabelTable& table, const std::filesystem::path& csv_path,
                         const std::filesystem::path& z_path);
PseudoLabelTable read_pseudo_labels(const std::filesystem::path& csv_path,
                                    const std::filesystem::path& z_path,
                                    const AnchorSet& reference);

}  // namespace laguna
