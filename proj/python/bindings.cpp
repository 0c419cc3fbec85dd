#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "crd/audit.hpp"
#include "crd/evalharness.hpp"
#include "crd/losses.hpp"
#include "crd/metadata2crd.hpp"
#include "crd/orchestrator.hpp"
#include "crd/taxonomy.hpp"

namespace py = pybind11;
using namespace crd;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle& obj) { return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>()); }

py::object metric(const Metric& m) { return m ? py::cast(*m) : py::none(); }

// {app_id: (present, severity)} or {app_id: present}.
DescriptorColumn column_from_py(const py::dict& d) {
  DescriptorColumn out;
  for (const auto& [k, v] : d) {
    Judgement j;
    if (py::isinstance<py::tuple>(v) || py::isinstance<py::list>(v)) {
      const auto seq = v.cast<py::sequence>();
      j.present = seq[0].cast<bool>();
      if (seq.size() > 1) j.severity = parse_severity(seq[1].cast<std::string>());
    } else {
      j.present = v.cast<bool>();
    }
    out[k.cast<std::string>()] = j;
  }
  return out;
}

DpoPairScores pair(double pw, double pl, double rw, double rl, double beta) { return {pw, pl, rw, rl, beta}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Content-rating-descriptor auditing core";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<NotFoundError>(m, "NotFoundError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  // losses
  m.def("softplus", &softplus);
  m.def("sigmoid", &sigmoid);
  m.def("batch_mean", [](const std::vector<double>& v) { return batch_mean(v); });
  m.def("sft_loss", [](const std::vector<double>& lps) { return sft_loss(SftSequence{lps}); }, py::arg("token_logprobs"));
  m.def("dpo_implicit_reward", &dpo_implicit_reward, py::arg("policy_lp"), py::arg("ref_lp"), py::arg("beta") = kDefaultBeta);
  m.def(
      "dpo_loss",
      [](double pw, double pl, double rw, double rl, double beta) {
        const auto r = dpo_loss(pair(pw, pl, rw, rl, beta));
        return py::dict(py::arg("loss") = r.loss, py::arg("margin_prob") = r.margin_prob, py::arg("delta") = r.delta);
      },
      py::arg("policy_lp_w"), py::arg("policy_lp_l"), py::arg("ref_lp_w"), py::arg("ref_lp_l"),
      py::arg("beta") = kDefaultBeta);
  m.def(
      "dpo_grad",
      [](double pw, double pl, double rw, double rl, double beta) {
        const auto g = dpo_grad(pair(pw, pl, rw, rl, beta));
        return py::make_tuple(g.policy_lp_w, g.policy_lp_l);
      },
      py::arg("policy_lp_w"), py::arg("policy_lp_l"), py::arg("ref_lp_w"), py::arg("ref_lp_l"),
      py::arg("beta") = kDefaultBeta);

  // taxonomy
  py::class_<Taxonomy>(m, "Taxonomy")
      .def_static("load", &load_taxonomy, py::arg("path"))
      .def_property_readonly("categories",
                             [](const Taxonomy& t) {
                               std::vector<std::string> ids;
                               for (const auto& c : t.categories()) ids.push_back(c.id);
                               return ids;
                             })
      .def_property_readonly("fine_descriptors",
                             [](const Taxonomy& t) {
                               std::vector<std::string> ids;
                               for (const auto& f : t.fine_descriptors()) ids.push_back(f.id);
                               return ids;
                             })
      .def_property_readonly("apple_descriptors",
                             [](const Taxonomy& t) {
                               std::vector<std::string> ids;
                               for (const auto& a : t.apple_descriptors()) ids.push_back(a.id);
                               return ids;
                             })
      .def("severity_supported", [](const Taxonomy& t, const std::string& id) { return t.apple(id).severity_supported; })
      .def("expand", [](const Taxonomy& t, const std::string& apple) {
        std::vector<std::string> ids;
        for (const auto& f : expand_apple(t, apple)) ids.push_back(f.id);
        return ids;
      });

  // parsing
  m.def("parse_generation", [](const std::string& text) -> py::object {
    const auto out = parse_generation(text);
    return out ? to_py(to_json(*out)) : py::none();
  });
  m.def(
      "parse_prediction",
      [](const std::string& text, const Taxonomy& t, const std::string& descriptor) {
        const auto p = parse_prediction(text, "", t.apple(descriptor));
        return py::dict(py::arg("present") = p.present, py::arg("severity") = std::string(to_string(p.severity)),
                        py::arg("unparsed") = p.unparsed);
      },
      py::arg("text"), py::arg("taxonomy"), py::arg("descriptor"));

  // metrics
  m.def(
      "binary_metrics",
      [](const py::dict& preds, const py::dict& labels) {
        const auto [c, b] = binary_metrics(column_from_py(preds), column_from_py(labels), "");
        return py::dict(py::arg("tp") = c.tp, py::arg("fp") = c.fp, py::arg("tn") = c.tn, py::arg("fn") = c.fn,
                        py::arg("r_pos") = metric(b.r_pos), py::arg("p_pos") = metric(b.p_pos),
                        py::arg("r_neg") = metric(b.r_neg), py::arg("p_neg") = metric(b.p_neg));
      },
      py::arg("predictions"), py::arg("labels"));
  m.def(
      "multiclass_metrics",
      [](const py::dict& preds, const py::dict& labels, const Taxonomy& t, const std::string& descriptor) {
        const auto mc = multiclass_metrics(column_from_py(preds), column_from_py(labels), t.apple(descriptor));
        return py::dict(py::arg("p_mild") = metric(mc.p_mild), py::arg("r_mild") = metric(mc.r_mild),
                        py::arg("p_strong") = metric(mc.p_strong), py::arg("r_strong") = metric(mc.r_strong));
      },
      py::arg("predictions"), py::arg("labels"), py::arg("taxonomy"), py::arg("descriptor"));
  m.def(
      "macro_average",
      [](const std::vector<std::optional<double>>& values) {
        const auto a = macro_average(values);
        return py::dict(py::arg("mean") = a.mean, py::arg("included") = a.included, py::arg("excluded") = a.excluded);
      },
      py::arg("values"));
  m.def("round_half_up", &round_half_up, py::arg("value"), py::arg("decimals") = 2);

  // pipeline
  m.def(
      "run_stage",
      [](const std::filesystem::path& config_path, const std::string& stage, py::object overrides, bool dry_run) {
        json j = read_json_file(config_path);
        if (!overrides.is_none()) j.update(from_py(overrides));
        const auto config = pipeline_config_from_json(j, config_path.parent_path());
        RunOptions o;
        o.dry_run = dry_run;
        StageSummary s;
        {
          py::gil_scoped_release release;
          s = run_stage(config, parse_stage(stage), o);
        }
        return to_py(to_json(s));
      },
      py::arg("config"), py::arg("stage"), py::arg("overrides") = py::none(), py::arg("dry_run") = false);
}
