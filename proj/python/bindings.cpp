#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "laguna/benchmark.hpp"
#include "laguna/checkpoint.hpp"
#include "laguna/cli.hpp"
#include "laguna/embedding_io.hpp"
#include "laguna/error.hpp"
#include "laguna/linalg.hpp"
#include "laguna/relative.hpp"

namespace py = pybind11;
using namespace laguna;

namespace {

using Rows = std::vector<std::vector<double>>;

Matrix to_matrix(const Rows& rows) {
  if (rows.empty()) return {};
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw Error(ErrorCode::ShapeMismatch, "ragged rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Matrix(rows.size(), rows.front().size(), std::move(flat));
}

Rows to_rows(const Matrix& m) {
  Rows out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

}  // namespace

PYBIND11_MODULE(_laguna, m) {
  m.doc() = "LAGUNA core bindings";
  m.attr("__version__") = kLagunaVersion;

  py::register_exception<Error>(m, "LagunaError", PyExc_RuntimeError);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the laguna CLI in-process; returns (exit_code, stdout, stderr).");

  m.def(
      "generate",
      [](const std::filesystem::path& out_dir, std::size_t n_classes, std::size_t feature_dim,
         std::size_t anchor_dim, std::size_t caption_dim, std::size_t samples_per_class,
         double rotation_deg, double translation, double sigma_feat, double sigma_cap, double anchor_cosine,
         std::uint64_t seed) {
        SynthConfig c;
        c.n_classes = n_classes;
        c.feature_dim = feature_dim;
        c.anchor_dim = anchor_dim;
        c.caption_dim = caption_dim;
        c.samples_per_class_per_domain = samples_per_class;
        c.shift.rotation_angle = rotation_deg * M_PI / 180.0;
        c.shift.translation_scale = translation;
        c.noise_sigma_features = sigma_feat;
        c.noise_sigma_captions = sigma_cap;
        c.anchor_cosine = anchor_cosine;
        c.seed = seed;
        return generate(c, out_dir);
      },
      py::arg("out_dir"), py::arg("n_classes") = 10, py::arg("feature_dim") = 32, py::arg("anchor_dim") = 16,
      py::arg("caption_dim") = 24, py::arg("samples_per_class") = 100, py::arg("rotation_deg") = 60.0,
      py::arg("translation") = 0.5, py::arg("sigma_feat") = 0.35, py::arg("sigma_cap") = 0.05,
      py::arg("anchor_cosine") = 0.5, py::arg("seed") = 0, "Write the synthetic benchmark; returns the manifest path.");

  m.def(
      "rel",
      [](const std::vector<double>& v, const Rows& anchors) {
        return rel(v, make_reference_anchors(to_matrix(anchors))).values;
      },
      py::arg("v"), py::arg("anchors"), "Cosine of v against every anchor row.");

  m.def(
      "cholesky_logdet", [](const Rows& m, double jitter) { return cholesky_logdet(to_matrix(m), jitter); },
      py::arg("m"), py::arg("jitter") = 0.0);

  m.def(
      "gram_logdet", [](const Rows& anchors) { return gram_logdet(to_matrix(anchors)); }, py::arg("anchors"));

  m.def(
      "load_embeddings", [](const std::filesystem::path& p) { return to_rows(load_embeddings(p).vectors); },
      py::arg("path"));

  m.def(
      "write_embeddings",
      [](const std::filesystem::path& p, const Rows& rows) { write_embeddings(p, to_matrix(rows)); },
      py::arg("path"), py::arg("rows"));

  m.def("sha256_file", [](const std::filesystem::path& p) { return sha256_file(p); }, py::arg("path"));
}
