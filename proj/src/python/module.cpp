// Python bindings. Structured results cross the boundary as JSON text; the
// pure-Python wrapper in python/laylens turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <future>

#include "laylens/digest.hpp"
#include "laylens/explain.hpp"
#include "laylens/mask.hpp"
#include "laylens/mock.hpp"
#include "laylens/pipeline.hpp"
#include "laylens/survey.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace laylens;

namespace {

std::span<const std::uint8_t> view(const py::bytes& b) {
  std::string_view sv = b;
  return {reinterpret_cast<const std::uint8_t*>(sv.data()), sv.size()};
}

std::string rle_encode_py(int width, int height, const py::bytes& bits) {
  std::string_view sv = bits;
  BinaryMask m(width, height);
  if (sv.size() != m.bits.size()) throw ValidationError("bits must hold width*height bytes");
  for (std::size_t i = 0; i < sv.size(); ++i) m.bits[i] = sv[i] != 0;
  return Json(rle_encode(m)).dump();
}

py::tuple rle_decode_py(const std::string& rle_json) {
  BinaryMask m = rle_decode(Json::parse(rle_json).get<MaskRLE>());
  std::string out(m.bits.size(), '\0');
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.bits[i] ? 1 : 0;
  return py::make_tuple(m.width, m.height, py::bytes(out));
}

std::string mock_detect_py(const py::bytes& image, const std::string& fault) {
  MockConfig cfg = fault.empty() ? MockConfig{} : MockConfig::parse(fault);
  return Json(mock_detect(view(image), cfg)).dump();
}

// Same shape the parser golden files use.
std::string parse_explanations_py(const std::string& raw) {
  auto repairs = [](const RepairReport& r) {
    Json a = Json::array();
    for (auto p : r.applied) a.push_back(std::string(to_string(p)));
    return a;
  };
  ExtractedJson extracted;
  try {
    extracted = extract_json_block(raw);
  } catch (const ExplainError& e) {
    return Json{{"error", to_string(e.error_class())}, {"repairs", repairs(e.report())}}.dump();
  }
  try {
    auto parsed = parse_region_explanations(extracted.candidate);
    Json errors = Json::array();
    for (const auto& e : parsed.entry_errors)
      errors.push_back({{"index", e.index}, {"field", e.field}, {"reason", e.reason}});
    Json out{{"regions", parsed.entries},
             {"repairs", repairs(extracted.report)},
             {"entry_errors", errors},
             {"emoji_substitutions", parsed.emoji_substitutions}};
    if (parsed.overall_summary) out["overall_summary"] = *parsed.overall_summary;
    return out.dump();
  } catch (const ExplainError& e) {
    return Json{{"error", to_string(e.error_class())}, {"repairs", repairs(extracted.report)}}.dump();
  }
}

std::string wilcoxon_py(const std::vector<std::pair<double, double>>& pairs) {
  return Json(wilcoxon_signed_rank(pairs)).dump();
}

std::string survey_summary_py(const std::string& path, const std::string& format) {
  SurveySummary s = summary_report(load_survey_jsonl(path));
  if (format == "json") return Json(s).dump();
  if (format == "csv") return summary_csv(s);
  if (format == "text") return summary_text(s);
  throw ValidationError("format must be json, csv or text");
}

// One-shot analysis through the mock backends, or through real ones when
// all three URLs are given.
std::string analyze_py(const py::bytes& image, const std::string& data_dir, const std::string& detector_url,
                       const std::string& simplifier_url, const std::string& editor_url, double timeout_s) {
  Bytes bytes(view(image).begin(), view(image).end());
  PipelineConfig cfg;
  cfg.detector_url = detector_url;
  cfg.simplifier_url = simplifier_url;
  cfg.editor_url = editor_url;
  cfg.mock = detector_url.empty() && simplifier_url.empty() && editor_url.empty();

  py::gil_scoped_release release;
  fs::path dir = data_dir;
  bool temp = dir.empty();
  if (temp) dir = fs::temp_directory_path() / ("laylens-py-" + random_hex(8));
  Json result;
  {
    auto store = std::make_shared<Store>(dir);
    Pipeline pipeline(store, cfg, Backends::from_config(cfg), false);
    auto submitted = pipeline.submit(bytes);
    AnalysisJob job = pipeline.get(submitted.job_id);
    if (!is_terminal(job.state)) {
      auto runner = std::async(std::launch::async, [&] { return pipeline.run(submitted.job_id); });
      job = pipeline.wait(submitted.job_id, Millis(static_cast<long long>(timeout_s * 1000)));
      if (!is_terminal(job.state)) pipeline.cancel(submitted.job_id);
      runner.get();
      job = pipeline.get(submitted.job_id);
    }
    result = job;
  }
  if (temp) {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  return result.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "laylens native core";

  auto base = py::register_exception<Error>(m, "LaylensError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<NotFoundError>(m, "NotFoundError", base.ptr());
  py::register_exception<DecodeError>(m, "DecodeError", base.ptr());

  m.def("sha256_hex", [](const py::bytes& b) { return sha256_hex(view(b)); }, py::arg("data"));
  m.def("rle_encode", &rle_encode_py, py::arg("width"), py::arg("height"), py::arg("bits"));
  m.def("rle_decode", &rle_decode_py, py::arg("rle_json"));
  m.def("mock_detect", &mock_detect_py, py::arg("image"), py::arg("fault") = "");
  m.def("parse_explanations", &parse_explanations_py, py::arg("raw"));
  m.def("wilcoxon", &wilcoxon_py, py::arg("pairs"));
  m.def("survey_summary", &survey_summary_py, py::arg("path"), py::arg("format") = "json");
  m.def("analyze", &analyze_py, py::arg("image"), py::arg("data_dir") = "", py::arg("detector_url") = "",
        py::arg("simplifier_url") = "", py::arg("editor_url") = "", py::arg("timeout_s") = 60.0);
}
