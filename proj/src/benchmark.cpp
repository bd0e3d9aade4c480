#include "laguna/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "laguna/checkpoint.hpp"
#include "laguna/embedding_io.hpp"
#include "laguna/error.hpp"
#include "laguna/linalg.hpp"

namespace laguna {

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (n_classes < 2) fail("need at least two classes");
  if (feature_dim < n_classes || anchor_dim < n_classes || caption_dim < n_classes) {
    fail("all dims must be >= n_classes");
  }
  if (caption_dim < anchor_dim) fail("caption dim must be >= anchor dim");
  if (feature_dim < anchor_dim) fail("feature dim must be >= anchor dim");
  if (samples_per_class_per_domain == 0) fail("samples per class must be > 0");
  if (!(noise_sigma_features >= 0.0) || !(noise_sigma_captions >= 0.0)) fail("sigmas must be >= 0");
  if (!(shift.rotation_angle >= 0.0 && shift.rotation_angle <= M_PI)) fail("angle must lie in [0, pi]");
  if (!(shift.feature_scale > 0.0) || !(shift.translation_scale >= 0.0)) fail("bad shift scale");
  const double lo = -1.0 / static_cast<double>(n_classes - 1);
  if (!(anchor_cosine > lo && anchor_cosine < 1.0)) fail("anchor cosine must lie in (-1/(N-1), 1)");
  if (!(prototype_scale > 0.0)) fail("prototype scale must be > 0");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"n_classes", n_classes},
          {"feature_dim", feature_dim},
          {"anchor_dim", anchor_dim},
          {"caption_dim", caption_dim},
          {"samples_per_class_per_domain", samples_per_class_per_domain},
          {"shift",
           {{"rotation_angle", shift.rotation_angle},
            {"translation_scale", shift.translation_scale},
            {"feature_scale", shift.feature_scale}}},
          {"noise_sigma_features", noise_sigma_features},
          {"noise_sigma_captions", noise_sigma_captions},
          {"anchor_cosine", anchor_cosine},
          {"prototype_scale", prototype_scale},
          {"seed", seed}};
}

namespace {

// n x d with orthonormal rows (modified Gram-Schmidt on Gaussian rows).
Matrix random_orthonormal_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix q(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = q.row(i);
    double nrm = 0.0;
    do {
      for (double& v : row) v = normal(rng);
      for (std::size_t j = 0; j < i; ++j) {
        const double p = dot(row, q.row(j));
        for (std::size_t k = 0; k < d; ++k) row[k] -= p * q(j, k);
      }
      nrm = norm2(row);
    } while (nrm < 1e-6);
    for (double& v : row) v /= nrm;
  }
  return q;
}

Matrix equicorrelated_anchors(const SynthConfig& cfg, std::mt19937_64& rng) {
  const std::size_t n = cfg.n_classes;
  Matrix c(n, n, cfg.anchor_cosine);
  for (std::size_t i = 0; i < n; ++i) c(i, i) = 1.0;
  const auto lower = cholesky(c);
  if (!lower) throw Error(ErrorCode::InvalidConfig, "anchor cosine gives a singular structure");
  return matmul(*lower, random_orthonormal_rows(n, cfg.anchor_dim, rng));
}

// Rotation by `angle` in each plane of a random orthonormal basis.
Matrix plane_rotation(std::size_t dim, double angle, std::mt19937_64& rng) {
  const Matrix basis = random_orthonormal_rows(dim, dim, rng);
  Matrix block = Matrix::identity(dim);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (std::size_t p = 0; p + 1 < dim; p += 2) {
    block(p, p) = c;
    block(p, p + 1) = -s;
    block(p + 1, p) = s;
    block(p + 1, p + 1) = c;
  }
  return matmul(basis.transpose(), matmul(block, basis));
}

std::string class_name(std::size_t c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "class_%02zu", c);
  return buf;
}

}  // namespace

std::filesystem::path generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Matrix anchors = equicorrelated_anchors(cfg, rng);
  const Matrix lift = random_orthonormal_rows(cfg.anchor_dim, cfg.feature_dim, rng);
  Matrix prototypes = matmul(anchors, lift);
  for (double& v : prototypes.data()) v *= cfg.prototype_scale;

  Matrix rotation = plane_rotation(cfg.feature_dim, cfg.shift.rotation_angle, rng);
  for (double& v : rotation.data()) v *= cfg.shift.feature_scale;
  std::vector<double> translation(cfg.feature_dim);
  for (double& v : translation) v = normal(rng);
  const double tn = norm2(translation);
  for (double& v : translation) v *= cfg.shift.translation_scale / tn;
  // target prototype = scale * R * p + t, with p as a row vector
  Matrix target_prototypes = matmul_transposed(prototypes, rotation);
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    for (std::size_t k = 0; k < cfg.feature_dim; ++k) target_prototypes(c, k) += translation[k];
  }

  const std::size_t n = cfg.n_classes * cfg.samples_per_class_per_domain;
  auto features = [&](const Matrix& protos) {
    Matrix x(n, cfg.feature_dim);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i % cfg.n_classes;
      for (std::size_t k = 0; k < cfg.feature_dim; ++k) {
        x(i, k) = protos(c, k) + cfg.noise_sigma_features * normal(rng);
      }
    }
    return x;
  };
  auto captions = [&]() {
    Matrix z(n, cfg.caption_dim);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i % cfg.n_classes;
      for (std::size_t k = 0; k < cfg.caption_dim; ++k) {
        const double base = k < cfg.anchor_dim ? anchors(c, k) : 0.0;
        z(i, k) = base + cfg.noise_sigma_captions * normal(rng);
      }
    }
    return z;
  };
  const Matrix source_features = features(prototypes);
  const Matrix source_captions = captions();
  const Matrix target_features = features(target_prototypes);
  const Matrix target_captions = captions();

  LabelRows labels;
  for (std::size_t i = 0; i < n; ++i) labels.emplace_back(i, i % cfg.n_classes);

  std::filesystem::create_directories(out_dir);
  write_embeddings(out_dir / "anchors.emb", anchors);
  write_embeddings(out_dir / "source_features.emb", source_features);
  write_embeddings(out_dir / "source_captions.emb", source_captions);
  write_embeddings(out_dir / "target_features.emb", target_features);
  write_embeddings(out_dir / "target_captions.emb", target_captions);
  write_label_csv(out_dir / "source_labels.csv", labels);
  write_label_csv(out_dir / "target_labels.csv", labels);

  std::vector<std::string> names;
  for (std::size_t c = 0; c < cfg.n_classes; ++c) names.push_back(class_name(c));
  const nlohmann::json manifest = {
      {"classes", names},
      {"anchors", "anchors.emb"},
      {"dims",
       {{"anchor", cfg.anchor_dim}, {"feature", cfg.feature_dim}, {"caption", cfg.caption_dim}}},
      {"domains",
       {{"source",
         {{"features", "source_features.emb"},
          {"captions", "source_captions.emb"},
          {"labels", "source_labels.csv"}}},
        {"target",
         {{"features", "target_features.emb"},
          {"captions", "target_captions.emb"},
          {"labels", "target_labels.csv"},
          {"labels_eval_only", true}}}}},
      {"generator", cfg.to_json()},
  };
  const auto path = out_dir / "manifest.json";
  write_json_file(path, manifest);
  return path;
}

const std::vector<AblationPreset>& ablation_presets() {
  //                                 ref    shared absolute attn   reg
  static const std::vector<AblationPreset> presets = {
      {"s1", {false, false, false, false, false}},
      {"s2", {true, false, true, false, false}},
      {"s3", {true, true, false, false, false}},
      {"s4", {true, false, false, false, false}},
      {"s5", {true, false, false, true, false}},
      {"full", {true, false, false, true, true}},
  };
  return presets;
}

AblationPreset find_preset(const std::string& name) {
  for (const auto& p : ablation_presets()) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown preset `" + name + "` (expected s1..s5 or full)");
}

TrainConfig apply_preset(TrainConfig base, const AblationPreset& preset) {
  base.switches = preset.switches;
  return base;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidConfig, "median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string signed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", v);
  return buf;
}

const char* mark(bool on) { return on ? "x" : "-"; }

struct SeedContext {
  Dataset data;
  AnchorSet reference;
  PseudoLabelTable table;
};

SeedContext prepare_seed(const std::filesystem::path& manifest, std::uint64_t seed,
                         SupervisorConfig supervisor) {
  SeedContext ctx{load_manifest(manifest), {}, {}};
  ctx.reference = make_reference_anchors(ctx.data.reference_anchors);
  supervisor.seed = seed;
  const SupervisorModel model = train_supervisor(ctx.data, ctx.reference, supervisor);
  ctx.table = pseudo_label(model, ctx.data, ctx.reference);
  return ctx;
}

}  // namespace

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    const auto& s = r.preset.switches;
    rows_json.push_back({{"preset", r.preset.name},
                         {"switches",
                          {{"use_reference_anchors", s.use_reference_anchors},
                           {"anchors_shared_across_domains", s.anchors_shared_across_domains},
                           {"absolute_alignment_mode", s.absolute_alignment_mode},
                           {"use_cd_attention", s.use_cd_attention},
                           {"use_reg", s.use_reg}}},
                         {"accuracies", r.accuracies},
                         {"median", r.median},
                         {"rel_imp", r.rel_imp},
                         {"abs_imp", r.abs_imp}});
  }
  return {{"seeds", seeds}, {"rows", rows_json}};
}

std::string AblationReport::to_markdown() const {
  std::ostringstream out;
  out << "| Setting | L_S | A | A_t/s | CD Attn. | L_Reg | Acc. | Rel. Imp. | Abs. Imp. |\n";
  out << "|---|---|---|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& s = r.preset.switches;
    const bool learnable = s.learnable_anchors();
    out << "| " << r.preset.name << " | " << mark(learnable) << " | " << mark(s.use_reference_anchors)
        << " | " << (learnable ? (s.anchors_shared_across_domains ? "x*" : "x") : "-") << " | "
        << mark(learnable && s.use_cd_attention) << " | " << mark(learnable && s.use_reg) << " | "
        << fixed2(r.median) << " | " << (i == 0 ? "-" : signed2(r.rel_imp)) << " | "
        << (i == 0 ? "-" : signed2(r.abs_imp)) << " |\n";
  }
  return out.str();
}

AblationReport run_ablation(const std::filesystem::path& manifest,
                            std::span<const AblationPreset> presets,
                            std::span<const std::uint64_t> seeds, const TrainConfig& base,
                            const SupervisorConfig& supervisor) {
  if (presets.empty() || seeds.empty()) throw Error(ErrorCode::InvalidConfig, "no presets or seeds");
  AblationReport report;
  report.seeds.assign(seeds.begin(), seeds.end());
  for (const auto& p : presets) report.rows.push_back({p, {}, 0.0, 0.0, 0.0});
  for (const std::uint64_t seed : seeds) {
    const SeedContext ctx = prepare_seed(manifest, seed, supervisor);
    for (auto& row : report.rows) {
      TrainConfig cfg = apply_preset(base, row.preset);
      cfg.seed = seed;
      const ModelBundle bundle = train_classifier(ctx.data, ctx.reference, ctx.table, cfg);
      row.accuracies.push_back(100.0 * evaluate(bundle, ctx.data).accuracy);
    }
  }
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    auto& row = report.rows[i];
    row.median = median(row.accuracies);
    row.rel_imp = i == 0 ? 0.0 : row.median - report.rows[i - 1].median;
    row.abs_imp = row.median - report.rows.front().median;
  }
  return report;
}

nlohmann::json RatioReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"ratio", r.ratio}, {"accuracies", r.accuracies}, {"median", r.median}});
  }
  return {{"seeds", seeds}, {"rows", rows_json}};
}

std::string RatioReport::to_markdown() const {
  std::ostringstream out;
  out << "| Target ratio | Acc. |\n|---|---|\n";
  for (const auto& r : rows) out << "| " << fixed2(100.0 * r.ratio) << "% | " << fixed2(r.median) << " |\n";
  return out.str();
}

RatioReport run_ratio_sweep(const std::filesystem::path& manifest, std::span<const double> ratios,
                            std::span<const std::uint64_t> seeds, const TrainConfig& cfg,
                            const SupervisorConfig& supervisor) {
  if (ratios.empty() || seeds.empty()) throw Error(ErrorCode::InvalidConfig, "no ratios or seeds");
  for (double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw Error(ErrorCode::RatioOutOfRange, "target ratio must lie in (0, 1]");
  }
  RatioReport report;
  report.seeds.assign(seeds.begin(), seeds.end());
  for (double r : ratios) report.rows.push_back({r, {}, 0.0});
  for (const std::uint64_t seed : seeds) {
    const SeedContext ctx = prepare_seed(manifest, seed, supervisor);
    for (auto& row : report.rows) {
      const Dataset subset = subsample_target(ctx.data, row.ratio, seed, ctx.table.labels);
      TrainConfig run = cfg;
      run.seed = seed;
      run.target_ratio = row.ratio;
      const ModelBundle bundle = train_classifier(subset, ctx.reference, ctx.table, run);
      row.accuracies.push_back(100.0 * evaluate(bundle, ctx.data).accuracy);
    }
  }
  for (auto& row : report.rows) row.median = median(row.accuracies);
  return report;
}

}  // namespace laguna
