#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include <json.hpp>

#include "laguna/checkpoint.hpp"
#include "laguna/embedding_io.hpp"

namespace laguna::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("laguna_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct TinyOptions {
  std::size_t classes = 3;
  std::size_t per_domain = 10;
  std::size_t dim = 4;
  bool source_labels = true;
  bool target_labels = true;
};

// Captions are the class anchor exactly; features are anchor-aligned plus noise.
inline std::filesystem::path write_tiny_manifest(const std::filesystem::path& dir, TinyOptions o = {}) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 0.05);
  Matrix anchors(o.classes, o.dim);
  for (std::size_t c = 0; c < o.classes; ++c) {
    anchors(c, c % o.dim) = 1.0;
    anchors(c, (c + 1) % o.dim) = 0.25;
  }
  auto make = [&](bool noisy) {
    Matrix m(o.per_domain, o.dim);
    for (std::size_t i = 0; i < o.per_domain; ++i) {
      for (std::size_t k = 0; k < o.dim; ++k) m(i, k) = anchors(i % o.classes, k) + (noisy ? normal(rng) : 0.0);
    }
    return m;
  };
  write_embeddings(dir / "anchors.emb", anchors);
  write_embeddings(dir / "sf.emb", make(true));
  write_embeddings(dir / "sc.emb", make(false));
  write_embeddings(dir / "tf.emb", make(true));
  write_embeddings(dir / "tc.emb", make(false));
  LabelRows labels;
  for (std::size_t i = 0; i < o.per_domain; ++i) labels.emplace_back(i, i % o.classes);
  nlohmann::json src = {{"features", "sf.emb"}, {"captions", "sc.emb"}};
  nlohmann::json tgt = {{"features", "tf.emb"}, {"captions", "tc.emb"}};
  if (o.source_labels) {
    write_label_csv(dir / "sl.csv", labels);
    src["labels"] = "sl.csv";
  }
  if (o.target_labels) {
    write_label_csv(dir / "tl.csv", labels);
    tgt["labels"] = "tl.csv";
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < o.classes; ++c) names.push_back("c" + std::to_string(c));
  write_json_file(dir / "manifest.json",
                  {{"classes", names}, {"anchors", "anchors.emb"}, {"domains", {{"source", src}, {"target", tgt}}}});
  return dir / "manifest.json";
}

}  // namespace laguna::testing
