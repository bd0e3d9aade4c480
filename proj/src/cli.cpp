#include "laguna/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "laguna/benchmark.hpp"
#include "laguna/checkpoint.hpp"
#include "laguna/classifier.hpp"
#include "laguna/embedding_io.hpp"
#include "laguna/error.hpp"
#include "laguna/supervisor.hpp"

namespace laguna {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Thrown for conditions the user can fix by changing the invocation.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("LAGUNA_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("LAGUNA_SEED is not an unsigned integer: ") + env);
  }
  return 0;
}

json provenance(const std::string& subcommand, std::uint64_t seed, const json& config,
                const json& inputs) {
  return {{"subcommand", subcommand},
          {"version", kLagunaVersion},
          {"seed", seed},
          {"config", config},
          {"config_hash", sha256_hex(canonical_dump(config))},
          {"inputs", inputs}};
}

json supervisor_config_json(const SupervisorConfig& c) {
  return {{"lambda1", c.weights.lambda1},
          {"lambda2", c.weights.lambda2},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"temperature", c.temperature},
          {"seed", c.seed},
          {"hidden", c.hidden},
          {"init", c.init == SupervisorInit::identity ? "identity" : "random"},
          {"init_noise", c.init_noise}};
}

SupervisorConfig supervisor_config_from_json(const json& j) {
  SupervisorConfig c;
  c.weights = {j.at("lambda1").get<double>(), j.at("lambda2").get<double>(), 0.0};
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.init = j.at("init").get<std::string>() == "identity" ? SupervisorInit::identity : SupervisorInit::random;
  c.init_noise = j.at("init_noise").get<double>();
  return c;
}

SupervisorModel load_supervisor(const fs::path& dir, std::size_t n_classes) {
  const fs::path descriptor_path = dir / "supervisor.json";
  require_file(descriptor_path, "supervisor checkpoint");
  const json descriptor = read_json_file(descriptor_path);
  try {
    const SupervisorConfig cfg = supervisor_config_from_json(descriptor.at("config"));
    SupervisorModel model = make_supervisor(descriptor.at("caption_dim").get<std::size_t>(),
                                            descriptor.at("anchor_dim").get<std::size_t>(), n_classes, cfg);
    auto params = model.parameters();
    load_parameters(dir, descriptor.at("parameters"), params);
    model.freeze();
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, descriptor_path.string() + ": " + e.what());
  }
}

struct PseudoLabelPaths {
  fs::path csv;
  fs::path z;
};

PseudoLabelPaths pseudo_label_paths(const fs::path& p) {
  if (fs::is_directory(p)) return {p / "pseudo_labels.csv", p / "pseudo_z.emb"};
  return {p, p.parent_path() / "pseudo_z.emb"};
}

// Restrict the target split to the samples the table labels.
void keep_labelled_targets(Dataset& d, const PseudoLabelTable& table) {
  std::vector<Sample> kept;
  for (const Sample& s : d.target_samples) {
    if (table.find(s.index)) kept.push_back(s);
  }
  if (kept.size() != table.size()) {
    throw Error(ErrorCode::DanglingReference, "pseudo-label table names unknown target samples");
  }
  d.target_samples = std::move(kept);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_metrics(const fs::path& out_dir, const std::string& name, const json& j, std::ostream& out) {
  write_json_file(out_dir / name, j);
  out << j.dump(2) << "\n";
}

struct ClassifierFlags {
  TrainConfig cfg;
  std::string preset = "full";
  std::string target_structure = "caption";
};

void add_classifier_flags(CLI::App* app, ClassifierFlags& f) {
  app->add_option("--epochs", f.cfg.epochs, "training epochs")->capture_default_str();
  app->add_option("--batch", f.cfg.batch_size, "mini-batch size")->capture_default_str();
  app->add_option("--lr", f.cfg.lr, "base learning rate")->capture_default_str();
  app->add_option("--weight-decay", f.cfg.weight_decay, "AdamW weight decay")->capture_default_str();
  app->add_option("--lambda1", f.cfg.weights.lambda1, "CE weight")->capture_default_str();
  app->add_option("--lambda2", f.cfg.weights.lambda2, "structure loss weight")->capture_default_str();
  app->add_option("--lambda3", f.cfg.weights.lambda3, "volume regularizer weight")->capture_default_str();
  app->add_option("--target-structure", f.target_structure, "caption | pseudo-anchor")
      ->check(CLI::IsMember({"caption", "pseudo-anchor"}))
      ->capture_default_str();
  app->add_option("--embedding-dim", f.cfg.embedding_dim, "D_v")->capture_default_str();
  app->add_option("--encoder-hidden", f.cfg.encoder_hidden)->capture_default_str();
  app->add_option("--head-hidden", f.cfg.head_hidden)->capture_default_str();
  app->add_option("--heads", f.cfg.attention_heads, "cross-domain attention heads")->capture_default_str();
  app->add_flag("--freeze-anchors", f.cfg.freeze_anchors, "keep learnable anchors at their init");
}

void add_supervisor_flags(CLI::App* app, SupervisorConfig& c, const std::string& prefix) {
  app->add_option("--" + prefix + "epochs", c.epochs)->capture_default_str();
  app->add_option("--" + prefix + "batch", c.batch_size)->capture_default_str();
  app->add_option("--" + prefix + "lr", c.lr)->capture_default_str();
  app->add_option("--" + prefix + "weight-decay", c.weight_decay)->capture_default_str();
  app->add_option("--" + prefix + "lambda1", c.weights.lambda1)->capture_default_str();
  app->add_option("--" + prefix + "lambda2", c.weights.lambda2)->capture_default_str();
  app->add_option("--" + prefix + "temperature", c.temperature)->capture_default_str();
  app->add_option("--" + prefix + "hidden", c.hidden, "0 selects max(D_l, 2 N_c)")->capture_default_str();
}

}  // namespace

json manifest_input_hashes(const fs::path& manifest) {
  json hashes = {{"manifest", sha256_file(manifest)}};
  const json m = read_json_file(manifest);
  const fs::path base = manifest.parent_path();
  auto add = [&](const std::string& key, const json& node, const char* field) {
    if (!node.contains(field) || !node[field].is_string()) return;
    fs::path p = node[field].get<std::string>();
    if (p.is_relative()) p = base / p;
    if (fs::exists(p)) hashes[key] = sha256_file(p);
  };
  add("anchors", m, "anchors");
  if (m.contains("domains")) {
    for (const char* domain : {"source", "target"}) {
      if (!m["domains"].contains(domain)) continue;
      for (const char* field : {"features", "captions", "labels"}) {
        add(std::string(domain) + "." + field, m["domains"][domain], field);
      }
    }
  }
  return hashes;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"LAGUNA: language-guided domain adaptation over embedding files", "laguna"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kLagunaVersion);
  std::optional<std::uint64_t> seed_flag;
  fs::path manifest;
  fs::path out_path;

  // synth
  SynthConfig synth;
  double rotation_deg = 60.0;
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic two-domain benchmark");
  synth_cmd->add_option("--classes", synth.n_classes)->capture_default_str();
  synth_cmd->add_option("--feature-dim", synth.feature_dim)->capture_default_str();
  synth_cmd->add_option("--anchor-dim", synth.anchor_dim)->capture_default_str();
  synth_cmd->add_option("--caption-dim", synth.caption_dim)->capture_default_str();
  synth_cmd->add_option("--samples-per-class", synth.samples_per_class_per_domain)->capture_default_str();
  synth_cmd->add_option("--rotation-deg", rotation_deg, "target rotation in every plane")->capture_default_str();
  synth_cmd->add_option("--translation", synth.shift.translation_scale)->capture_default_str();
  synth_cmd->add_option("--feature-scale", synth.shift.feature_scale)->capture_default_str();
  synth_cmd->add_option("--sigma-feat", synth.noise_sigma_features)->capture_default_str();
  synth_cmd->add_option("--sigma-cap", synth.noise_sigma_captions)->capture_default_str();
  synth_cmd->add_option("--anchor-cosine", synth.anchor_cosine)->capture_default_str();
  synth_cmd->add_option("--seed", seed_flag);
  synth_cmd->add_option("--out", out_path, "output directory")->required();

  // train-supervisor
  SupervisorConfig sup;
  std::string sup_init = "identity";
  auto* sup_cmd = app.add_subcommand("train-supervisor", "stage 2: caption -> language-space supervisor");
  sup_cmd->add_option("--manifest", manifest)->required();
  add_supervisor_flags(sup_cmd, sup, "");
  sup_cmd->add_option("--init", sup_init)->check(CLI::IsMember({"identity", "random"}))->capture_default_str();
  sup_cmd->add_option("--seed", seed_flag);
  sup_cmd->add_option("--out", out_path, "checkpoint directory")->required();

  // pseudo-label
  fs::path supervisor_dir;
  double target_ratio = 1.0;
  auto* pl_cmd = app.add_subcommand("pseudo-label", "label target samples with a trained supervisor");
  pl_cmd->add_option("--manifest", manifest)->required();
  pl_cmd->add_option("--supervisor", supervisor_dir, "supervisor checkpoint directory")->required();
  pl_cmd->add_option("--target-ratio", target_ratio, "subsample the target split first")->capture_default_str();
  pl_cmd->add_option("--seed", seed_flag);
  pl_cmd->add_option("--out", out_path, "output directory")->required();

  // train-classifier
  ClassifierFlags cls;
  fs::path pseudo_path;
  auto* cls_cmd = app.add_subcommand("train-classifier", "stage 3: cross-domain classifier");
  cls_cmd->add_option("--manifest", manifest)->required();
  cls_cmd->add_option("--pseudo-labels", pseudo_path, "pseudo-label directory or CSV")->required();
  add_classifier_flags(cls_cmd, cls);
  cls_cmd->add_option("--preset", cls.preset, "s1..s5 or full")
      ->check(CLI::IsMember({"s1", "s2", "s3", "s4", "s5", "full"}))
      ->capture_default_str();
  cls_cmd->add_option("--seed", seed_flag);
  cls_cmd->add_option("--out", out_path, "model directory")->required();

  // eval
  fs::path model_dir;
  std::string split_name = "target";
  auto* eval_cmd = app.add_subcommand("eval", "accuracy of a trained classifier on a labelled split");
  eval_cmd->add_option("--manifest", manifest)->required();
  eval_cmd->add_option("--model", model_dir)->required();
  eval_cmd->add_option("--split", split_name)->check(CLI::IsMember({"source", "target"}))->capture_default_str();
  eval_cmd->add_option("--out", out_path, "metrics directory")->required();

  // export
  auto* export_cmd = app.add_subcommand("export", "per-sample absolute and relative embeddings as CSV");
  export_cmd->add_option("--manifest", manifest)->required();
  export_cmd->add_option("--model", model_dir)->required();
  export_cmd->add_option("--pseudo-labels", pseudo_path)->required();
  export_cmd->add_option("--out", out_path, "CSV path")->required();

  // ablate
  ClassifierFlags abl;
  SupervisorConfig abl_sup;
  std::string presets_arg = "s1,s2,s3,s4,s5,full";
  std::string seeds_arg = "0,1,2,3,4";
  std::string ratios_arg;
  auto* abl_cmd = app.add_subcommand("ablate", "preset ladder or target-ratio sweep over seeds");
  abl_cmd->add_option("--manifest", manifest)->required();
  add_classifier_flags(abl_cmd, abl);
  add_supervisor_flags(abl_cmd, abl_sup, "sup-");
  abl_cmd->add_option("--presets", presets_arg)->capture_default_str();
  abl_cmd->add_option("--seeds", seeds_arg)->capture_default_str();
  abl_cmd->add_option("--ratios", ratios_arg, "run the ratio sweep with the --preset config instead");
  abl_cmd->add_option("--preset", abl.preset, "preset used by the ratio sweep")
      ->check(CLI::IsMember({"s1", "s2", "s3", "s4", "s5", "full"}))
      ->capture_default_str();
  abl_cmd->add_option("--out", out_path, "report directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kLagunaVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) {
      err << app.get_subcommands().front()->help();
    } else {
      err << app.help();
    }
    return kExitUsage;
  }

  try {
    const std::uint64_t seed = resolve_seed(seed_flag);

    if (synth_cmd->parsed()) {
      synth.shift.rotation_angle = rotation_deg * M_PI / 180.0;
      synth.seed = seed;
      const fs::path m = generate(synth, out_path);
      write_json_file(out_path / "provenance.json",
                      provenance("synth", seed, synth.to_json(), json::object()));
      out << m.string() << "\n";
      return kExitOk;
    }

    if (sup_cmd->parsed()) {
      require_file(manifest, "manifest");
      sup.seed = seed;
      sup.init = sup_init == "identity" ? SupervisorInit::identity : SupervisorInit::random;
      const Dataset d = load_manifest(manifest);
      const AnchorSet reference = make_reference_anchors(d.reference_anchors);
      SupervisorLog log;
      const SupervisorModel model = train_supervisor(d, reference, sup, &log);
      const json inputs = manifest_input_hashes(manifest);
      const json config = supervisor_config_json(sup);
      fs::create_directories(out_path);
      const json descriptor = {{"kind", "supervisor"},
                               {"caption_dim", model.caption_dim()},
                               {"anchor_dim", model.output_dim()},
                               {"hidden", model.net.hidden_dim()},
                               {"config", config},
                               {"parameters", save_parameters(out_path, model.parameters())},
                               {"checksum", model.checksum()}};
      write_json_file(out_path / "supervisor.json", descriptor);
      json metrics = {{"source_accuracy", supervisor_accuracy(model, d, reference, Split::source)},
                      {"loss_curve", log.epoch_loss},
                      {"steps", log.steps}};
      write_metrics(out_path, "metrics.json", metrics, out);
      write_json_file(out_path / "provenance.json", provenance("train-supervisor", seed, config, inputs));
      return kExitOk;
    }

    if (pl_cmd->parsed()) {
      require_file(manifest, "manifest");
      require_file(supervisor_dir / "supervisor.json", "supervisor checkpoint");
      const Dataset full = load_manifest(manifest);
      const AnchorSet reference = make_reference_anchors(full.reference_anchors);
      const SupervisorModel model = load_supervisor(supervisor_dir, full.num_classes());
      const Dataset d = subsample_target(full, target_ratio, seed);
      const PseudoLabelTable table = pseudo_label(model, d, reference);
      fs::create_directories(out_path);
      write_pseudo_labels(table, out_path / "pseudo_labels.csv", out_path / "pseudo_z.emb");
      json metrics = {{"rows", table.size()}, {"target_ratio", target_ratio}};
      if (d.has_target_eval_labels() && table.size() > 0) {
        metrics["pseudo_label_accuracy"] = supervisor_accuracy(model, d, reference, Split::target);
      }
      write_metrics(out_path, "metrics.json", metrics, out);
      json inputs = manifest_input_hashes(manifest);
      inputs["supervisor"] = sha256_file(supervisor_dir / "supervisor.json");
      write_json_file(out_path / "provenance.json",
                      provenance("pseudo-label", seed, {{"target_ratio", target_ratio}}, inputs));
      return kExitOk;
    }

    if (cls_cmd->parsed()) {
      require_file(manifest, "manifest");
      const PseudoLabelPaths pl = pseudo_label_paths(pseudo_path);
      require_file(pl.csv, "pseudo-label table");
      TrainConfig cfg = apply_preset(cls.cfg, find_preset(cls.preset));
      cfg.seed = seed;
      cfg.target_structure = parse_target_structure(cls.target_structure);
      Dataset d = load_manifest(manifest);
      const AnchorSet reference = make_reference_anchors(d.reference_anchors);
      const PseudoLabelTable table = read_pseudo_labels(pl.csv, pl.z, reference);
      keep_labelled_targets(d, table);
      cfg.target_ratio = d.target_features.rows() == 0
                             ? 1.0
                             : static_cast<double>(d.target_samples.size()) /
                                   static_cast<double>(d.target_features.rows());
      const ModelBundle bundle = train_classifier(d, reference, table, cfg);
      json inputs = manifest_input_hashes(manifest);
      inputs["pseudo_labels"] = sha256_file(pl.csv);
      json config = cfg.to_json();
      config["preset"] = cls.preset;
      const json prov = provenance("train-classifier", seed, config, inputs);
      save_bundle(bundle, out_path, prov);
      write_loss_csv(bundle.log, out_path / "loss.csv");
      json log = {{"epoch_loss", bundle.log.epoch_loss},
                  {"reference_logdet", bundle.log.reference_logdet},
                  {"target_structure_gap_initial", bundle.log.target_structure_gap_initial},
                  {"target_structure_gap_final", bundle.log.target_structure_gap_final}};
      if (!bundle.log.steps.empty()) {
        log["final_logdet_source"] = bundle.log.steps.back().parts.logdet_s;
        log["final_logdet_target"] = bundle.log.steps.back().parts.logdet_t;
      }
      write_metrics(out_path, "train_log.json", log, out);
      write_json_file(out_path / "provenance.json", prov);
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      require_file(manifest, "manifest");
      require_file(model_dir / "bundle.json", "classifier checkpoint");
      const Dataset d = load_manifest(manifest);
      const AnchorSet reference = make_reference_anchors(d.reference_anchors);
      const ModelBundle bundle = load_bundle(model_dir, reference);
      const Split split = split_name == "source" ? Split::source : Split::target;
      const EvalMetrics m = evaluate(bundle, d, split);
      fs::create_directories(out_path);
      json metrics = metrics_json(m, bundle.log);
      metrics.erase("loss_curve");
      metrics["split"] = split_name;
      write_metrics(out_path, "metrics.json", metrics, out);
      json inputs = manifest_input_hashes(manifest);
      inputs["model"] = sha256_file(model_dir / "bundle.json");
      write_json_file(out_path / "provenance.json",
                      provenance("eval", bundle.config.seed, {{"split", split_name}}, inputs));
      return kExitOk;
    }

    if (export_cmd->parsed()) {
      require_file(manifest, "manifest");
      require_file(model_dir / "bundle.json", "classifier checkpoint");
      const PseudoLabelPaths pl = pseudo_label_paths(pseudo_path);
      require_file(pl.csv, "pseudo-label table");
      Dataset d = load_manifest(manifest);
      const AnchorSet reference = make_reference_anchors(d.reference_anchors);
      const ModelBundle bundle = load_bundle(model_dir, reference);
      const PseudoLabelTable table = read_pseudo_labels(pl.csv, pl.z, reference);
      keep_labelled_targets(d, table);
      const EmbeddingExport e = collect_embeddings(bundle, d, table, reference);
      if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
      write_embedding_csv(e, out_path);
      json summary = {{"rows", e.index.size()}};
      if (!e.r.empty()) {
        const SeparationMetrics s = cross_domain_separation(e);
        summary["separation"] = {{"relative", s.relative}, {"absolute", s.absolute}};
      }
      out << summary.dump(2) << "\n";
      return kExitOk;
    }

    if (abl_cmd->parsed()) {
      require_file(manifest, "manifest");
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(seeds_arg)) {
        try {
          seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
          throw UsageError("bad seed `" + s + "`");
        }
      }
      abl.cfg.target_structure = parse_target_structure(abl.target_structure);
      fs::create_directories(out_path);
      json report;
      std::string markdown;
      json config = abl.cfg.to_json();
      config["supervisor"] = supervisor_config_json(abl_sup);
      if (!ratios_arg.empty()) {
        std::vector<double> ratios;
        for (const auto& r : split_list(ratios_arg)) {
          try {
            ratios.push_back(std::stod(r));
          } catch (const std::exception&) {
            throw UsageError("bad ratio `" + r + "`");
          }
        }
        const TrainConfig cfg = apply_preset(abl.cfg, find_preset(abl.preset));
        const RatioReport r = run_ratio_sweep(manifest, ratios, seeds, cfg, abl_sup);
        report = r.to_json();
        markdown = r.to_markdown();
        config["ratios"] = ratios;
        config["preset"] = abl.preset;
      } else {
        std::vector<AblationPreset> presets;
        for (const auto& name : split_list(presets_arg)) presets.push_back(find_preset(name));
        const AblationReport r = run_ablation(manifest, presets, seeds, abl.cfg, abl_sup);
        report = r.to_json();
        markdown = r.to_markdown();
        config["presets"] = presets_arg;
      }
      config["seeds"] = seeds;
      write_json_file(out_path / "report.json", report);
      write_text_file(out_path / "report.md", markdown);
      write_json_file(out_path / "provenance.json",
                      provenance("ablate", seeds.empty() ? 0 : seeds.front(), config,
                                 manifest_input_hashes(manifest)));
      out << markdown;
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace laguna
