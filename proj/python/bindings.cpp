#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "leitsatz/cli.hpp"
#include "leitsatz/corpus.hpp"
#include "leitsatz/entities.hpp"
#include "leitsatz/error.hpp"
#include "leitsatz/evalframe.hpp"
#include "leitsatz/metrics.hpp"
#include "leitsatz/summarize.hpp"
#include "leitsatz/textproc.hpp"

namespace py = pybind11;
using namespace leitsatz;

namespace {

std::vector<std::string> sentence_texts(const std::string& text) {
  std::vector<std::string> out;
  for (auto& s : textproc::split_sentences(text)) out.push_back(std::move(s.text));
  return out;
}

py::dict span_dict(const entities::EntitySpan& s) {
  py::dict d;
  d["start"] = s.start;
  d["end"] = s.end;
  d["kind"] = s.kind;
  d["surface"] = s.surface;
  return d;
}

std::vector<entities::EntitySpan> spans_from(std::string_view text, const std::vector<py::dict>& spans) {
  std::vector<entities::EntitySpan> out;
  for (const auto& d : spans) {
    const auto start = d["start"].cast<std::size_t>();
    const auto end = d["end"].cast<std::size_t>();
    if (end < start || end > text.size()) throw ConfigError("span out of range");
    out.push_back({start, end, d["kind"].cast<std::string>(), std::string(text.substr(start, end - start))});
  }
  return out;
}

evalframe::ClassVerdict verdict_from(const py::dict& d) {
  return evalframe::verdict_from_json(nlohmann::json::parse(py::module_::import("json").attr("dumps")(d).cast<std::string>()));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core operations of the leitsatz pipeline";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ServiceError>(m, "ServiceError", PyExc_RuntimeError);

  m.def("version", &cli::version);

  m.def("tokenize", [](const std::string& text) { return textproc::words(text); }, py::arg("text"));
  m.def("split_sentences", &sentence_texts, py::arg("text"));
  m.def("count_tokens", [](const std::string& text) { return textproc::count_tokens(text, textproc::WordTokenCounter{}); },
        py::arg("text"));

  py::class_<metrics::PRF>(m, "PRF")
      .def_readonly("precision", &metrics::PRF::precision)
      .def_readonly("recall", &metrics::PRF::recall)
      .def_readonly("f1", &metrics::PRF::f1)
      .def("__repr__", [](const metrics::PRF& p) {
        std::ostringstream os;
        os << "PRF(precision=" << p.precision << ", recall=" << p.recall << ", f1=" << p.f1 << ")";
        return os.str();
      });

  m.def("rouge_n", &metrics::rouge_n, py::arg("candidate"), py::arg("reference"), py::arg("n"));
  m.def("rouge_l", &metrics::rouge_l, py::arg("candidate"), py::arg("reference"));
  m.def("bertscore",
        [](const metrics::EmbeddingSeq& c, const metrics::EmbeddingSeq& r) { return metrics::bertscore(c, r); },
        py::arg("candidate"), py::arg("reference"));

  m.def(
      "lexrank_scores",
      [](const std::vector<std::string>& sentences, double threshold, double damping) {
        const auto t = summarize::transition_matrix(summarize::similarity_matrix(sentences), threshold);
        return summarize::power_iteration(t, damping).scores;
      },
      py::arg("sentences"), py::arg("threshold") = 0.1, py::arg("damping") = 0.85);
  m.def(
      "lexrank_summary",
      [](const std::string& text, std::size_t k, double threshold, double damping) {
        summarize::LexRankParams p;
        p.k = k;
        p.threshold = threshold;
        p.damping = damping;
        return summarize::lexrank_summary("", text, p, textproc::WordTokenCounter{}).text;
      },
      py::arg("text"), py::arg("k") = 2, py::arg("threshold") = 0.1, py::arg("damping") = 0.85);

  m.def("extract_reasons", [](const std::string& judgment_json) {
    return corpus::extract_reasons(corpus::judgment_from_json(nlohmann::json::parse(judgment_json)));
  });

  m.def("detect_entities", [](const std::string& text) {
    py::list out;
    for (const auto& s : entities::detect_entities(text)) out.append(span_dict(s));
    return out;
  });
  m.def("enrich", [](const std::string& text, const std::vector<py::dict>& spans) {
    return entities::enrich(text, spans_from(text, spans));
  });
  m.def("strip_tags", [](const std::string& tagged) {
    const auto s = entities::strip_tags(tagged);
    py::list spans;
    for (const auto& e : s.spans) spans.append(span_dict(e));
    return py::make_tuple(s.text, spans);
  });

  m.def(
      "fleiss_kappa",
      [](const std::vector<std::vector<std::size_t>>& units, std::size_t categories, std::size_t raters) {
        return evalframe::fleiss_kappa(units, categories, raters).kappa;
      },
      py::arg("units"), py::arg("categories"), py::arg("raters"));
  m.def(
      "spearman",
      [](const std::vector<double>& x, const std::vector<double>& y) { return evalframe::spearman(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "build_assignments",
      [](const std::vector<std::pair<std::string, std::string>>& summaries, const std::vector<std::string>& reviewers,
         std::size_t per_item, std::uint64_t seed) {
        std::vector<evalframe::SummaryRef> refs;
        for (const auto& [j, a] : summaries) refs.push_back({j, a});
        std::vector<std::tuple<std::string, std::string, std::vector<std::string>>> out;
        for (const auto& a : evalframe::build_assignments(refs, reviewers, per_item, seed))
          out.emplace_back(a.summary.judgment_id, a.summary.approach, a.reviewer_ids);
        return out;
      },
      py::arg("summaries"), py::arg("reviewers"), py::arg("per_item") = 3, py::arg("seed") = 0);
  m.def(
      "fulfillment_report",
      [](const std::vector<py::dict>& verdicts, std::size_t per_item) {
        std::vector<evalframe::ClassVerdict> vs;
        for (const auto& d : verdicts) vs.push_back(verdict_from(d));
        py::dict out;
        for (const auto& row : evalframe::fulfillment_report(vs, per_item)) {
          py::dict r;
          r["fractions"] = std::vector<double>(row.fraction.begin(), row.fraction.end());
          r["mean_classes"] = row.mean_classes;
          r["judgments"] = row.judgments;
          out[py::str(row.approach)] = r;
        }
        return out;
      },
      py::arg("verdicts"), py::arg("per_item") = 3);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
