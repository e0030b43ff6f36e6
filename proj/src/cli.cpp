#include "dnaeval/cli.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "dnaeval/datasets.hpp"
#include "dnaeval/llm_gateway.hpp"
#include "dnaeval/metrics.hpp"
#include "dnaeval/pipeline.hpp"

namespace dnaeval {

namespace {

struct ImportArgs {
    std::string format;
    std::string source;
    std::string output;
    std::optional<std::uint64_t> seed;
    std::size_t sample_size = 400;
    std::string instrusum_first = "gpt-3.5-turbo-0301";
    std::string instrusum_second = "gpt-4-0314";
};

struct RunArgs {
    std::string dataset;
    std::string method = "dna";
    std::size_t k = 3;
    std::string model = "mock";
    std::string backend = "mock";
    std::string mock;
    double tie_tol = 0.0;
    double scale_min = 1.0;
    double scale_max = 10.0;
    std::size_t concurrency = 4;
    std::string cache;
    std::string out = ".";
    std::string templates;
    std::string benchmark;
    std::optional<std::uint64_t> max_calls;
    std::optional<std::uint64_t> max_tokens;
    std::int64_t max_output_tokens = 1024;
    bool swap_positions = false;
    bool no_retry = false;
    std::string prices;
};

struct ReportArgs {
    std::string run;
    std::string dataset;
    std::string out;
    bool drop_excluded = false;
    bool lenient_ties = false;
};

struct WeightsArgs {
    std::string run;
    std::string reference;
    std::string out;
    double penalty = 0.5;
};

struct CostArgs {
    std::string run;
    std::string prices;
};

std::string shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// Model ids such as "org/model" become safe file name parts.
std::string file_part(std::string s) {
    for (auto& c : s) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        if (!ok) c = '_';
    }
    return s;
}

std::filesystem::path output_dir(const std::string& dir) {
    std::filesystem::path p = dir.empty() ? std::filesystem::path(".") : std::filesystem::path(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create output directory " + p.string() + ": " + ec.message());
    return p;
}

std::string run_stem(const RunSummary& s) {
    return file_part(s.dataset) + "." + std::string(to_string(s.method)) + "." + file_part(s.model_id);
}

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    fn(f);
    if (!f) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

int cmd_import(const ImportArgs& a, std::ostream& out) {
    const auto known = benchmark_formats();
    if (std::find(known.begin(), known.end(), a.format) == known.end()) {
        throw Error(ErrorKind::UnknownFormat, "unknown format '" + a.format + "'");
    }
    ImportOptions opts;
    opts.seed = a.seed;
    opts.mtbench_sample_size = a.sample_size;
    opts.instrusum_first = a.instrusum_first;
    opts.instrusum_second = a.instrusum_second;
    const auto ds = import_benchmark(a.format, a.source, opts);
    save_canonical(ds, a.output);
    out << ds.size() << " instances\n";
    return kExitOk;
}

int cmd_run(const RunArgs& a, std::ostream& out) {
    RunConfig cfg;
    cfg.method = method_from_string(a.method);
    cfg.k = a.k;
    cfg.scale = {a.scale_min, a.scale_max};
    cfg.tie_tol = a.tie_tol;
    cfg.model_id = a.model;
    cfg.concurrency_limit = a.concurrency;
    cfg.retry_on_parse_failure = !a.no_retry;
    cfg.max_output_tokens = a.max_output_tokens;
    cfg.swap_positions = a.swap_positions;
    cfg.validate();

    const auto dataset = load_canonical(a.dataset);
    std::optional<PriceTable> prices;
    if (!a.prices.empty()) prices = PriceTable::load(a.prices);
    auto registry = a.templates.empty() ? TemplateRegistry::defaults() : TemplateRegistry::from_manifest(a.templates);
    const auto out_dir = output_dir(a.out);

    std::optional<MockScript> script;
    if (!a.mock.empty()) script = MockScript::load(a.mock);
    auto backend = make_backend(a.backend, script);

    GatewayOptions gopts;
    if (!a.cache.empty()) gopts.cache_path = a.cache;
    gopts.max_calls = a.max_calls;
    gopts.max_tokens = a.max_tokens;
    gopts.concurrency = a.concurrency;
    LlmGateway gateway(backend, gopts);

    Pipeline pipeline(gateway, cfg, std::move(registry), a.benchmark);
    const auto result = pipeline.run_dataset(dataset);
    const auto path = out_dir / (run_stem(result.summary) + ".jsonl");
    save_run(result, path);

    const auto& s = result.summary;
    out << s.n_records << " records, " << s.total_inferences << " inferences (" << s.cached_inferences
        << " cached), " << s.input_tokens << " input tokens, " << s.output_tokens << " output tokens, "
        << s.n_excluded << " excluded\n";
    out << "provider calls: " << gateway.usage().provider_calls << "\n";
    if (prices) {
        const auto cost = estimate_cost(result.records, *prices);
        out << "cost: " << shortest(cost.total_cost) << " / " << cost.total_inferences << "\n";
    }
    out << "wrote " << path.string() << "\n";
    return kExitOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
    const auto run = load_run(a.run);
    LoadOptions lopts;
    const auto gold = load_canonical(a.dataset, lopts);
    AgreementOptions opts;
    opts.drop_excluded = a.drop_excluded;
    opts.predicted_tie_counts_as_wrong = !a.lenient_ties;
    const ScoredRun scored{&run, &gold};
    const auto report = agreement_report(std::span<const ScoredRun>(&scored, 1), opts);

    const auto dir = output_dir(a.out.empty() ? std::filesystem::path(a.run).parent_path().string() : a.out);
    const auto stem = run_stem(run.summary);
    write_file(dir / (stem + ".agreement.csv"), [&](std::ostream& f) { write_agreement_csv(report, f); });
    write_file(dir / (stem + ".agreement.txt"), [&](std::ostream& f) { f << format_agreement_table(report); });
    out << format_percent(report.overall.with_ties) << " " << format_percent(report.overall.without_ties) << "\n";
    return kExitOk;
}

int cmd_weights(const WeightsArgs& a, std::ostream& out, std::ostream& err) {
    const auto run = load_run(a.run);
    const auto dir = output_dir(a.out.empty() ? std::filesystem::path(a.run).parent_path().string() : a.out);
    const auto stem = run_stem(run.summary);

    if (!a.reference.empty()) {
        const auto reference = load_reference_rankings(a.reference);
        std::vector<std::string> missing;
        double sum = 0.0;
        std::size_t n = 0;
        std::vector<std::pair<std::string, double>> rows;
        for (const auto& rec : run.records) {
            auto ref = reference.find(rec.instance_id);
            if (ref == reference.end()) continue;
            if (!rec.weights) {
                missing.push_back(rec.instance_id);
                continue;
            }
            const double d = kendall_distance(weights_to_ranking(*rec.weights), ref->second, true, a.penalty);
            rows.emplace_back(rec.instance_id, d);
            sum += d;
            ++n;
        }
        if (!missing.empty()) {
            err << "records without weights:";
            for (const auto& id : missing) err << ' ' << id;
            err << "\n";
            return kExitRuntime;
        }
        if (n == 0) {
            err << "no record matches an instance in " << a.reference << "\n";
            return kExitRuntime;
        }
        write_file(dir / (stem + ".kendall.csv"), [&](std::ostream& f) {
            f << "instance_id,normalized_distance\n";
            for (const auto& [id, d] : rows) f << id << ',' << shortest(d) << '\n';
        });
        out << run.summary.dataset << " mean normalized distance " << fixed(sum / static_cast<double>(n), 3)
            << " over " << n << " instances\n";
    }

    const auto table = per_task_mean_weights(run.records);
    write_file(dir / (stem + ".weights.csv"), [&](std::ostream& f) { write_mean_weights_csv(table, f); });
    out << format_mean_weights_table(table);
    return kExitOk;
}

int cmd_cost(const CostArgs& a, std::ostream& out) {
    const auto run = load_run(a.run);
    const auto prices = PriceTable::load(a.prices);
    const auto report = estimate_cost(run.records, prices);
    out << shortest(report.total_cost) << " / " << report.total_inferences << "\n";
    for (const auto& line : report.lines) {
        out << to_string(line.method) << " " << line.model_id << ": " << shortest(line.cost) << " / "
            << line.inferences << " (" << line.cached << " cached, " << line.input_tokens << " in, "
            << line.output_tokens << " out)\n";
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Pairwise LLM evaluation with aspect decomposition and weighted aggregation", "dnaeval"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML or INI file with option defaults (flags override it)");

    ImportArgs ia;
    auto* imp = app.add_subcommand("import", "Convert an upstream benchmark release into the canonical format");
    imp->add_option("format", ia.format, "faireval | mtbench400 | llmbar_adversarial | instrusum_pairs")->required();
    imp->add_option("source", ia.source, "Upstream release directory or file")->required();
    imp->add_option("output", ia.output, "Canonical dataset file to write")->required();
    imp->add_option("--seed", ia.seed, "Sampling seed (mtbench400)");
    imp->add_option("--sample-size", ia.sample_size, "mtbench400 sample size");
    imp->add_option("--instrusum-first", ia.instrusum_first, "System shown as the first response");
    imp->add_option("--instrusum-second", ia.instrusum_second, "System shown as the second response");

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Evaluate every instance of a canonical dataset");
    run->add_option("dataset", ra.dataset, "Canonical dataset file")->required();
    run->add_option("--method", ra.method)
        ->check(CLI::IsMember({"direct", "cot", "dna", "dna_prompted_aggregation", "ablation"}));
    run->add_option("--k", ra.k, "Aspects to generate when the dataset has no rubric")->check(CLI::PositiveNumber);
    run->add_option("--model", ra.model, "Model id sent to the backend");
    run->add_option("--backend", ra.backend)->check(CLI::IsMember({"mock", "openai", "compatible"}));
    run->add_option("--mock", ra.mock, "Mock reply script (JSON)");
    run->add_option("--tie-tol", ra.tie_tol)->check(CLI::NonNegativeNumber);
    run->add_option("--scale-min", ra.scale_min);
    run->add_option("--scale-max", ra.scale_max);
    run->add_option("--concurrency", ra.concurrency)->check(CLI::PositiveNumber);
    run->add_option("--cache", ra.cache, "Completion cache file (JSON lines)");
    run->add_option("--out", ra.out, "Output directory");
    run->add_option("--templates", ra.templates, "Template manifest overriding the built-ins");
    run->add_option("--benchmark", ra.benchmark, "Template variant, e.g. llmbar or instrusum");
    run->add_option("--max-calls", ra.max_calls, "Ceiling on provider calls");
    run->add_option("--max-tokens", ra.max_tokens, "Ceiling on provider tokens");
    run->add_option("--max-output-tokens", ra.max_output_tokens)->check(CLI::PositiveNumber);
    run->add_flag("--swap-positions", ra.swap_positions, "Score both response orders and average");
    run->add_flag("--no-retry", ra.no_retry, "Do not re-prompt after unreadable replies");
    run->add_option("--prices", ra.prices, "Price table (JSON) for a cost line");

    ReportArgs rep;
    auto* report = app.add_subcommand("report", "Agreement of a run with the dataset's human labels");
    report->add_option("run", rep.run, "Run file")->required();
    report->add_option("dataset", rep.dataset, "Canonical dataset with gold labels")->required();
    report->add_option("--out", rep.out, "Report directory (default: next to the run file)");
    report->add_flag("--drop-excluded", rep.drop_excluded, "Leave failed records out of the denominators");
    report->add_flag("--lenient-ties", rep.lenient_ties,
                     "Without-ties column also skips items the model called a tie");

    WeightsArgs wa;
    auto* weights = app.add_subcommand("weights", "Weight rankings and per-task mean weights");
    weights->add_option("run", wa.run, "Run file")->required();
    weights->add_option("--reference", wa.reference, "Reference rankings (JSON lines)");
    weights->add_option("--out", wa.out, "Report directory (default: next to the run file)");
    weights->add_option("--tie-penalty", wa.penalty, "Kendall tie penalty")->check(CLI::Range(0.0, 1.0));

    CostArgs ca;
    auto* cost = app.add_subcommand("cost", "Token cost and inference count of a run");
    cost->add_option("run", ca.run, "Run file")->required();
    cost->add_option("--prices", ca.prices, "Price table (JSON)")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (imp->parsed()) return cmd_import(ia, out);
        if (run->parsed()) return cmd_run(ra, out);
        if (report->parsed()) return cmd_report(rep, out);
        if (weights->parsed()) return cmd_weights(wa, out, err);
        if (cost->parsed()) return cmd_cost(ca, out);
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return e.kind() == ErrorKind::UnknownFormat ? kExitUsage : kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace dnaeval
