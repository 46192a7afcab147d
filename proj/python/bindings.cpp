#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tabby/codec.hpp"
#include "tabby/error.hpp"
#include "tabby/experiment.hpp"
#include "tabby/metrics.hpp"
#include "tabby/toy.hpp"

namespace py = pybind11;
using namespace tabby;

namespace {

Schema schema_from(const std::string& text) { return schema_from_json(nlohmann::json::parse(text)); }

std::string dump(const nlohmann::json& j) { return j.dump(); }

}  // namespace

PYBIND11_MODULE(_tabby, m) {
  m.doc() = "Bindings for the tabby C++ core";

  py::register_exception<Error>(m, "TabbyError", PyExc_RuntimeError);

  m.def("toy_kinds", &toy_kinds);
  m.def(
      "make_toy",
      [](const std::string& kind, std::size_t rows, std::uint64_t seed) {
        auto ds = make_toy(kind, rows, seed);
        return py::make_tuple(dump(schema_to_json(ds.schema)), ds.table);
      },
      py::arg("kind"), py::arg("rows"), py::arg("seed") = 0);

  m.def(
      "encode_row",
      [](const std::string& schema_json, const Row& row, const Table& vocab_rows) {
        const auto s = schema_from(schema_json);
        const auto v = build_vocabulary({vocab_rows}, s);
        return v.detokenize(encode_plain_string(s, v, row));
      },
      py::arg("schema"), py::arg("row"), py::arg("vocabulary_rows"));

  m.def("r2_clipped", &r2_clipped, py::arg("predictions"), py::arg("truth"));
  m.def(
      "dcr", [](const Table& real, const Table& synth, const std::string& s) { return dcr(real, synth, schema_from(s)); },
      py::arg("real"), py::arg("synthetic"), py::arg("schema"));
  m.def(
      "discrimination",
      [](const Table& real, const Table& synth, const std::string& s, std::uint64_t seed) {
        return discrimination(real, synth, schema_from(s), seed);
      },
      py::arg("real"), py::arg("synthetic"), py::arg("schema"), py::arg("seed") = 0);
  m.def(
      "mle",
      [](const Table& real, const Table& synth, const Table& test, const std::string& s, std::uint64_t seed) {
        const auto r = mle(real, synth, test, schema_from(s), seed);
        return py::make_tuple(r.synthetic, r.original);
      },
      py::arg("real"), py::arg("synthetic"), py::arg("test"), py::arg("schema"), py::arg("seed") = 0);
  m.def(
      "aup",
      [](const std::vector<std::vector<double>>& scores, const std::vector<std::string>& methods) {
        auto curves = performance_profile(ScoreMatrix{{}, methods, scores});
        return aup(curves);
      },
      py::arg("scores"), py::arg("methods"));

  m.def(
      "cmd_train", [](const std::filesystem::path& config) { return dump(cmd_train(ExperimentConfig::load(config))); },
      py::arg("config"));
  m.def(
      "cmd_sample", [](const std::filesystem::path& config) { return dump(cmd_sample(ExperimentConfig::load(config))); },
      py::arg("config"));
  m.def(
      "cmd_eval",
      [](const std::filesystem::path& config, const std::vector<std::filesystem::path>& synthetic) {
        return dump(cmd_eval(ExperimentConfig::load(config), synthetic));
      },
      py::arg("config"), py::arg("synthetic") = std::vector<std::filesystem::path>{});
  m.def(
      "cmd_profile",
      [](const std::vector<std::filesystem::path>& summaries, const std::string& metric) {
        return dump(cmd_profile(summaries, metric).to_json());
      },
      py::arg("summaries"), py::arg("metric") = "mle");
  m.def(
      "cmd_make_toy",
      [](const std::string& kind, std::size_t rows, std::uint64_t seed, const std::filesystem::path& out) {
        return dump(cmd_make_toy(kind, rows, seed, out));
      },
      py::arg("kind"), py::arg("rows"), py::arg("seed"), py::arg("out_dir"));
}
