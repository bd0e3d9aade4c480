#include <doctest.h>

#include <cmath>

#include "fd.hpp"
#include "fixtures.hpp"
#include "laguna/benchmark.hpp"
#include "laguna/checkpoint.hpp"

using namespace laguna;
using laguna::testing::TempDir;
using laguna::testing::throws_code;

namespace {

SynthConfig small() {
  SynthConfig s;
  s.n_classes = 4;
  s.feature_dim = 10;
  s.anchor_dim = 6;
  s.caption_dim = 8;
  s.samples_per_class_per_domain = 15;
  return s;
}

TrainConfig quick() {
  TrainConfig c;
  c.lr = 1e-2;
  c.epochs = 4;
  c.embedding_dim = 8;
  c.encoder_hidden = 16;
  c.head_hidden = 16;
  return c;
}

SupervisorConfig quick_supervisor() {
  SupervisorConfig s;
  s.lr = 1e-2;
  return s;
}

}  // namespace

TEST_CASE("generator writes a loadable two-domain manifest") {
  TempDir dir("gen");
  const auto manifest = generate(small(), dir.path());
  const Dataset d = load_manifest(manifest);
  CHECK(d.num_classes() == 4);
  CHECK(d.source_samples.size() == 60);
  CHECK(d.target_samples.size() == 60);
  CHECK(d.source_features.cols() == 10);
  CHECK(d.source_captions.cols() == 8);
  CHECK(d.reference_anchors.cols() == 6);
  for (std::size_t i = 0; i < 60; ++i) {
    CHECK(*d.source_samples[i].label == i % 4);
    CHECK(d.target_eval_label(i) == i % 4);
  }
  const Matrix a = l2_normalize_rows(d.reference_anchors);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(dot(a.row(i), a.row(j)) == doctest::Approx(i == j ? 1.0 : 0.5).epsilon(1e-6));
    }
  }
  const auto j = read_json_file(manifest);
  CHECK(j.at("domains").at("target").at("labels_eval_only") == true);
  CHECK(j.at("generator").at("seed") == 0);
}

TEST_CASE("zero shift and zero noise give identical domains") {
  TempDir dir("gen_zero");
  SynthConfig s = small();
  s.shift = {0.0, 0.0, 1.0};
  s.noise_sigma_features = 0.0;
  s.noise_sigma_captions = 0.0;
  const Dataset d = load_manifest(generate(s, dir.path()));
  for (std::size_t i = 0; i < d.source_features.size(); ++i) {
    CHECK(d.target_features.data()[i] == doctest::Approx(d.source_features.data()[i]).epsilon(1e-12));
    CHECK(d.target_captions.data()[i % d.target_captions.size()] ==
          d.source_captions.data()[i % d.source_captions.size()]);
  }
}

TEST_CASE("generator is deterministic in its seed") {
  TempDir a("gen_a"), b("gen_b"), c("gen_c");
  generate(small(), a.path());
  generate(small(), b.path());
  SynthConfig other = small();
  other.seed = 1;
  generate(other, c.path());
  for (const char* f : {"anchors.emb", "source_features.emb", "source_captions.emb", "target_features.emb",
                        "target_captions.emb", "source_labels.csv", "target_labels.csv"}) {
    CAPTURE(f);
    CHECK(sha256_file(a / f) == sha256_file(b / f));
  }
  CHECK(sha256_file(a / "target_features.emb") != sha256_file(c / "target_features.emb"));
}

TEST_CASE("invalid generator configs") {
  auto bad = [](auto mutate) {
    SynthConfig s = small();
    mutate(s);
    return throws_code([&] { s.validate(); }, ErrorCode::InvalidConfig);
  };
  CHECK(bad([](SynthConfig& s) { s.n_classes = 1; }));
  CHECK(bad([](SynthConfig& s) { s.anchor_dim = 3; }));
  CHECK(bad([](SynthConfig& s) { s.caption_dim = 5; }));
  CHECK(bad([](SynthConfig& s) { s.samples_per_class_per_domain = 0; }));
  CHECK(bad([](SynthConfig& s) { s.noise_sigma_features = -0.1; }));
  CHECK(bad([](SynthConfig& s) { s.shift.rotation_angle = 4.0; }));
  CHECK(bad([](SynthConfig& s) { s.anchor_cosine = 1.0; }));
  CHECK(bad([](SynthConfig& s) { s.anchor_cosine = -0.5; }));
  CHECK_NOTHROW(small().validate());
}

TEST_CASE("presets form the ablation ladder") {
  const auto& p = ablation_presets();
  REQUIRE(p.size() == 6);
  CHECK(p[0].name == "s1");
  CHECK_FALSE(p[0].switches.learnable_anchors());
  CHECK(p[1].switches.absolute_alignment_mode);
  CHECK(p[2].switches.anchors_shared_across_domains);
  CHECK(p[3].switches.learnable_anchors());
  CHECK_FALSE(p[3].switches.use_cd_attention);
  CHECK(p[4].switches.use_cd_attention);
  CHECK_FALSE(p[4].switches.use_reg);
  CHECK(p[5].switches.use_reg);
  for (const auto& preset : p) CHECK_NOTHROW(apply_preset(TrainConfig{}, preset).validate());
  CHECK(throws_code([] { find_preset("s9"); }, ErrorCode::InvalidConfig));
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("ablation report arithmetic") {
  TempDir dir("abl");
  SynthConfig s = small();
  s.anchor_dim = 8;
  const auto manifest = generate(s, dir.path());
  const std::vector<AblationPreset> presets{find_preset("s1"), find_preset("s2"), find_preset("full")};
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const auto report = run_ablation(manifest, presets, seeds, quick(), quick_supervisor());
  REQUIRE(report.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& r = report.rows[i];
    CHECK(r.accuracies.size() == 3);
    CHECK(r.median == median(r.accuracies));
    CHECK(r.abs_imp == doctest::Approx(r.median - report.rows[0].median));
    if (i > 0) CHECK(r.rel_imp == doctest::Approx(r.median - report.rows[i - 1].median));
    for (double a : r.accuracies) {
      CHECK(a >= 0.0);
      CHECK(a <= 100.0);
    }
  }
  const std::string md = report.to_markdown();
  CHECK(md.find("| Setting | L_S | A | A_t/s | CD Attn. | L_Reg | Acc. | Rel. Imp. | Abs. Imp. |") == 0);
  CHECK(md.find("| s1 | - | - | - | - | - |") != std::string::npos);
  CHECK(md.find("| full | x | x | x | x | x |") != std::string::npos);
  CHECK(report.to_json().at("rows").size() == 3);
}

TEST_CASE("full-ratio sweep equals a plain run") {
  TempDir dir("ratio");
  const auto manifest = generate(small(), dir.path());
  const TrainConfig cfg = apply_preset(quick(), find_preset("full"));
  const std::vector<std::uint64_t> seeds{4};
  const std::vector<double> ratios{1.0, 0.5};
  const auto sweep = run_ratio_sweep(manifest, ratios, seeds, cfg, quick_supervisor());
  const std::vector<AblationPreset> full{find_preset("full")};
  const auto plain = run_ablation(manifest, full, seeds, quick(), quick_supervisor());
  CHECK(sweep.rows[0].accuracies == plain.rows[0].accuracies);
  CHECK(sweep.to_markdown().find("| 100.00% |") != std::string::npos);
  const std::vector<double> bad{0.0};
  CHECK(throws_code([&] { run_ratio_sweep(manifest, bad, seeds, cfg); }, ErrorCode::RatioOutOfRange));
}

TEST_CASE("a larger shift hurts the source-only baseline") {
  std::vector<double> medians;
  for (double deg : {0.0, 60.0, 120.0}) {
    TempDir dir("shift");
    SynthConfig s = small();
    s.shift.rotation_angle = deg * M_PI / 180.0;
    const auto manifest = generate(s, dir.path());
    const std::vector<AblationPreset> presets{find_preset("s1")};
    const std::vector<std::uint64_t> seeds{0, 1, 2};
    TrainConfig c = quick();
    c.epochs = 10;
    medians.push_back(run_ablation(manifest, presets, seeds, c, quick_supervisor()).rows[0].median);
  }
  CAPTURE(medians[0]);
  CAPTURE(medians[1]);
  CAPTURE(medians[2]);
  CHECK(medians[0] > medians[1]);
  CHECK(medians[1] > medians[2]);
}
