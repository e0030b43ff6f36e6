#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "dnaeval/cli.hpp"
#include "dnaeval/core.hpp"
#include "dnaeval/datasets.hpp"
#include "dnaeval/metrics.hpp"
#include "dnaeval/parsing.hpp"
#include "dnaeval/pipeline.hpp"

namespace py = pybind11;
using namespace dnaeval;

namespace {

py::dict instance_dict(const EvalInstance& inst) {
    py::dict d;
    d["id"] = inst.id;
    d["context"] = inst.context;
    d["response_first"] = inst.response_first;
    d["response_second"] = inst.response_second;
    d["human_label"] = to_int(inst.human_label);
    d["predefined_aspects"] = inst.predefined_aspects ? py::cast(*inst.predefined_aspects) : py::none();
    d["task_category"] = inst.task_category ? py::cast(*inst.task_category) : py::none();
    return d;
}

template <typename T>
py::dict outcome_dict(const ParseOutcome<T>& o, py::object value) {
    py::dict d;
    d["status"] = std::string(to_string(o.status));
    d["value"] = o.usable() ? std::move(value) : py::none();
    d["note"] = o.note;
    return d;
}

py::dict summary_dict(const RunSummary& s) {
    py::dict d;
    d["dataset"] = s.dataset;
    d["method"] = std::string(to_string(s.method));
    d["model_id"] = s.model_id;
    d["n_records"] = s.n_records;
    d["n_excluded"] = s.n_excluded;
    d["total_inferences"] = s.total_inferences;
    d["cached_inferences"] = s.cached_inferences;
    d["input_tokens"] = s.input_tokens;
    d["output_tokens"] = s.output_tokens;
    return d;
}

py::dict cell_dict(const AgreementCell& c) {
    py::dict d;
    d["n_total"] = c.n_total;
    d["n_nontie"] = c.n_nontie;
    d["n_excluded"] = c.n_excluded;
    d["with_ties"] = c.with_ties ? py::cast(*c.with_ties) : py::none();
    d["without_ties"] = c.without_ties ? py::cast(*c.without_ties) : py::none();
    return d;
}

ScoreMatrix matrix_from(const std::vector<double>& first, const std::vector<double>& second, ScoreScale scale) {
    if (first.size() != second.size()) {
        throw Error(ErrorKind::DimensionMismatch, "score lists differ in length");
    }
    std::vector<ScoreRow> rows;
    for (std::size_t i = 0; i < first.size(); ++i) rows.push_back({i, first[i], second[i]});
    return ScoreMatrix(std::move(rows), scale);
}

}  // namespace

PYBIND11_MODULE(_dnaeval, m) {
    m.doc() = "Pairwise LLM evaluation with aspect decomposition and weighted aggregation";

    static py::exception<Error> error_type(m, "Error", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error_type, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
        }
    });

    m.def(
        "normalize_weights",
        [](const std::vector<double>& raw) { return normalize_weights(raw).values(); }, py::arg("raw"),
        "Scale nonnegative weights to sum to 1.");

    m.def(
        "decide", [](double a, double b, double tie_tol) { return to_int(decide(a, b, tie_tol)); }, py::arg("first"),
        py::arg("second"), py::arg("tie_tol") = 0.0, "1 if first wins, 2 if second wins, 0 for a tie.");

    m.def(
        "evaluate_pair",
        [](const std::vector<double>& first, const std::vector<double>& second, const std::vector<double>& weights,
           double tie_tol, double scale_min, double scale_max) {
            const auto verdict =
                evaluate_pair(matrix_from(first, second, {scale_min, scale_max}), WeightVector(weights), tie_tol);
            py::dict d;
            d["label"] = to_int(verdict.label);
            d["overall_first"] = verdict.overall_first;
            d["overall_second"] = verdict.overall_second;
            return d;
        },
        py::arg("first"), py::arg("second"), py::arg("weights"), py::arg("tie_tol") = 0.0, py::arg("scale_min") = 1.0,
        py::arg("scale_max") = 10.0, "Weighted overall scores and verdict. weights must already sum to 1.");

    m.def(
        "parse_weights",
        [](const std::string& text, std::size_t k) {
            const auto o = parse_weights(text, k);
            return outcome_dict(o, o.value ? py::cast(*o.value) : py::none());
        },
        py::arg("text"), py::arg("k"));

    m.def(
        "parse_pair_scores",
        [](const std::string& text, double scale_min, double scale_max, bool trailing) {
            const ScoreScale scale{scale_min, scale_max};
            const auto o = trailing ? parse_trailing_pair_scores(text, scale) : parse_pair_scores(text, scale);
            return outcome_dict(o, o.value ? py::cast(*o.value) : py::none());
        },
        py::arg("text"), py::arg("scale_min") = 1.0, py::arg("scale_max") = 10.0, py::arg("trailing") = false);

    m.def(
        "parse_aspects",
        [](const std::string& text, std::size_t k) {
            const auto o = parse_aspects(text, k);
            return outcome_dict(o, o.value ? py::cast(o.value->texts()) : py::none());
        },
        py::arg("text"), py::arg("k"));

    m.def(
        "agreement",
        [](const std::vector<int>& preds, const std::vector<int>& golds, bool with_ties,
           bool predicted_tie_counts_as_wrong) {
            std::vector<PreferenceLabel> p, g;
            for (int v : preds) p.push_back(label_from_int(v));
            for (int v : golds) g.push_back(label_from_int(v));
            return agreement(p, g, with_ties ? AgreementMode::WithTies : AgreementMode::WithoutTies,
                             {.predicted_tie_counts_as_wrong = predicted_tie_counts_as_wrong});
        },
        py::arg("preds"), py::arg("golds"), py::arg("with_ties") = true,
        py::arg("predicted_tie_counts_as_wrong") = true, "Labels are 0 (tie), 1 (first) or 2 (second).");

    m.def(
        "weights_to_ranking", [](const std::vector<double>& w) { return weights_to_ranking(w).ranks; },
        py::arg("weights"));

    m.def(
        "kendall_distance",
        [](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, bool normalized, double p) {
            return kendall_distance(Ranking{a}, Ranking{b}, normalized, p);
        },
        py::arg("ranks_a"), py::arg("ranks_b"), py::arg("normalized") = true, py::arg("p") = 0.5);

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("name", &Dataset::name)
        .def_readonly("allows_ties", &Dataset::allows_ties)
        .def_readonly("has_predefined_aspects", &Dataset::has_predefined_aspects)
        .def("__len__", &Dataset::size)
        .def_property_readonly("instances",
                               [](const Dataset& ds) {
                                   py::list out;
                                   for (const auto& inst : ds.instances) out.append(instance_dict(inst));
                                   return out;
                               })
        .def("to_jsonl", &serialize_canonical)
        .def("save", [](const Dataset& ds, const std::filesystem::path& p) { save_canonical(ds, p); })
        .def_static(
            "load", [](const std::filesystem::path& p) { return load_canonical(p); }, py::arg("path"))
        .def_static(
            "from_jsonl",
            [](const std::string& text, const std::string& name) {
                std::istringstream in(text);
                return parse_canonical(in, name);
            },
            py::arg("text"), py::arg("name") = "dataset");

    m.def(
        "import_benchmark",
        [](const std::string& format, const std::filesystem::path& source, std::optional<std::uint64_t> seed,
           std::size_t sample_size) {
            ImportOptions opts;
            opts.seed = seed;
            opts.mtbench_sample_size = sample_size;
            return import_benchmark(format, source, opts);
        },
        py::arg("format"), py::arg("source"), py::arg("seed") = py::none(), py::arg("sample_size") = 400);

    py::class_<RunResult>(m, "RunResult")
        .def_property_readonly("summary", [](const RunResult& r) { return summary_dict(r.summary); })
        .def_property_readonly("records",
                               [](const RunResult& r) {
                                   py::module_ json = py::module_::import("json");
                                   py::list out;
                                   for (const auto& rec : r.records) out.append(json.attr("loads")(record_to_json(rec)));
                                   return out;
                               })
        .def("labels",
             [](const RunResult& r) {
                 py::list out;
                 for (const auto& rec : r.records) {
                     const auto l = rec.label();
                     out.append(l ? py::cast(to_int(*l)) : py::none());
                 }
                 return out;
             })
        .def("to_jsonl", &serialize_run)
        .def("save", [](const RunResult& r, const std::filesystem::path& p) { save_run(r, p); })
        .def_static(
            "load", [](const std::filesystem::path& p) { return load_run(p); }, py::arg("path"));

    m.def(
        "run_mock",
        [](const Dataset& dataset, const std::string& script_json, const std::string& method, std::size_t k,
           const std::string& model, double tie_tol, bool swap_positions, std::size_t concurrency) {
            RunConfig cfg;
            cfg.method = method_from_string(method);
            cfg.k = k;
            cfg.model_id = model;
            cfg.tie_tol = tie_tol;
            cfg.swap_positions = swap_positions;
            cfg.concurrency_limit = concurrency;
            py::gil_scoped_release release;
            LlmGateway gateway(std::make_shared<MockBackend>(MockScript::from_json_text(script_json)));
            return Pipeline(gateway, cfg).run_dataset(dataset);
        },
        py::arg("dataset"), py::arg("script_json"), py::arg("method") = "dna", py::arg("k") = 3,
        py::arg("model") = "mock", py::arg("tie_tol") = 0.0, py::arg("swap_positions") = false,
        py::arg("concurrency") = 4, "Evaluate a dataset against a scripted mock backend.");

    m.def(
        "agreement_cell",
        [](const RunResult& run, const Dataset& gold, bool drop_excluded, bool predicted_tie_counts_as_wrong) {
            return cell_dict(agreement_cell(
                run, gold, {.predicted_tie_counts_as_wrong = predicted_tie_counts_as_wrong, .drop_excluded = drop_excluded}));
        },
        py::arg("run"), py::arg("gold"), py::arg("drop_excluded") = false,
        py::arg("predicted_tie_counts_as_wrong") = true);

    m.def(
        "estimate_cost",
        [](const RunResult& run, const std::string& prices_json) {
            const auto report = estimate_cost(run.records, PriceTable::from_json_text(prices_json));
            py::dict d;
            d["total_cost"] = report.total_cost;
            d["total_inferences"] = report.total_inferences;
            py::list lines;
            for (const auto& l : report.lines) {
                py::dict row;
                row["method"] = std::string(to_string(l.method));
                row["model_id"] = l.model_id;
                row["inferences"] = l.inferences;
                row["cached"] = l.cached;
                row["input_tokens"] = l.input_tokens;
                row["output_tokens"] = l.output_tokens;
                row["cost"] = l.cost;
                lines.append(row);
            }
            d["lines"] = lines;
            return d;
        },
        py::arg("run"), py::arg("prices_json"));

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = run_cli(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run the command-line interface in-process. Returns (exit_code, stdout, stderr).");
}
