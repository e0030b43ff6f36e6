#include "dnaeval/pipeline.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "dnaeval/parsing.hpp"

namespace dnaeval {

using json = nlohmann::json;

std::string_view to_string(Method method) noexcept {
    switch (method) {
        case Method::Direct: return "direct";
        case Method::CoT: return "cot";
        case Method::DnA: return "dna";
        case Method::DnAPromptedAggregation: return "dna_prompted_aggregation";
    }
    return "dna";
}

Method method_from_string(std::string_view name) {
    if (name == "direct") return Method::Direct;
    if (name == "cot") return Method::CoT;
    if (name == "dna") return Method::DnA;
    if (name == "dna_prompted_aggregation" || name == "ablation") return Method::DnAPromptedAggregation;
    throw Error(ErrorKind::InvalidArgument, "unknown method '" + std::string(name) + "'");
}

std::string_view to_string(RecordFlag flag) noexcept {
    switch (flag) {
        case RecordFlag::UniformWeightFallback: return "uniform_weight_fallback";
        case RecordFlag::ScoreRetry: return "score_retry";
        case RecordFlag::ParseRecovered: return "parse_recovered";
        case RecordFlag::Excluded: return "excluded";
    }
    return "excluded";
}

RecordFlag record_flag_from_string(std::string_view name) {
    for (auto f : {RecordFlag::UniformWeightFallback, RecordFlag::ScoreRetry,
                   RecordFlag::ParseRecovered, RecordFlag::Excluded}) {
        if (to_string(f) == name) return f;
    }
    throw Error(ErrorKind::SchemaError, "unknown record flag '" + std::string(name) + "'");
}

void RunConfig::validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); };
    if (k < 1) bad("k must be at least 1");
    if (!(scale.min < scale.max)) bad("score scale needs min < max");
    if (!(tie_tol >= 0.0)) bad("tie_tol must be nonnegative");
    if (concurrency_limit < 1) bad("concurrency_limit must be at least 1");
    if (model_id.empty()) bad("model_id is empty");
    if (max_output_tokens < 1) bad("max_output_tokens must be positive");
    if (!(temperature >= 0.0)) bad("temperature must be nonnegative");
}

std::optional<PreferenceLabel> EvaluationRecord::label() const {
    if (const auto* v = std::get_if<Verdict>(&verdict)) return v->label;
    return std::nullopt;
}

const EvaluationRecord* RunResult::find(std::string_view instance_id) const {
    for (const auto& r : records) {
        if (r.instance_id == instance_id) return &r;
    }
    return nullptr;
}

namespace {

std::string describe(const Error& e) { return std::string(to_string(e.kind())) + ": " + e.what(); }

}  // namespace

struct Pipeline::PairOutcome {
    std::optional<std::pair<double, double>> scores;
    std::vector<CallTrace> calls;
    std::set<RecordFlag> flags;
    std::vector<std::string> notes;
    std::optional<std::string> error;
};

Pipeline::Pipeline(LlmGateway& gateway, RunConfig config, TemplateRegistry registry,
                   std::string benchmark_variant)
    : gateway_(gateway),
      config_(std::move(config)),
      renderer_(std::move(registry), std::move(benchmark_variant), config_.scale) {
    config_.validate();
}

CallTrace Pipeline::call(RenderedPrompt prompt, bool retry, bool swapped) const {
    CompletionRequest request{config_.model_id, prompt.text, config_.temperature,
                              config_.max_output_tokens};
    CallTrace trace;
    trace.reply = gateway_.complete(request);
    trace.prompt = std::move(prompt);
    trace.retry = retry;
    trace.swapped = swapped;
    return trace;
}

Pipeline::PairOutcome Pipeline::score_pair(const EvalInstance& instance, const Render& render,
                                           bool trailing, bool allow_swap) const {
    PairOutcome out;
    const auto parse = [&](const std::string& text) {
        return trailing ? parse_trailing_pair_scores(text, config_.scale)
                        : parse_pair_scores(text, config_.scale);
    };
    std::vector<std::pair<double, double>> readings;
    const int orders = allow_swap && config_.swap_positions ? 2 : 1;
    try {
        for (int order = 0; order < orders; ++order) {
            const bool swapped = order == 1;
            const auto prompt = render(swapped ? instance.with_swapped_responses() : instance);
            const std::string where = std::string(to_string(prompt.stage)) +
                                      (prompt.aspect_index ? " #" + std::to_string(*prompt.aspect_index) : "") +
                                      (swapped ? " (swapped)" : "");
            out.calls.push_back(call(prompt, false, swapped));
            auto parsed = parse(out.calls.back().reply.text);
            if (!parsed.usable() && config_.retry_on_parse_failure) {
                auto again = prompt;
                again.text += kScoreRetrySuffix;
                out.calls.push_back(call(std::move(again), true, swapped));
                out.flags.insert(RecordFlag::ScoreRetry);
                parsed = parse(out.calls.back().reply.text);
            }
            if (!parsed.usable()) {
                out.error = where + ": " + parsed.note;
                return out;
            }
            if (parsed.status == ParseStatus::Recovered) {
                out.flags.insert(RecordFlag::ParseRecovered);
                out.notes.push_back(where + ": " + parsed.note);
            }
            auto [a, b] = *parsed.value;
            readings.emplace_back(swapped ? b : a, swapped ? a : b);
        }
    } catch (const Error& e) {
        out.error = describe(e);
        return out;
    }
    double first = 0.0, second = 0.0;
    for (const auto& [a, b] : readings) {
        first += a;
        second += b;
    }
    out.scores = std::pair{first / static_cast<double>(readings.size()),
                           second / static_cast<double>(readings.size())};
    return out;
}

namespace {

EvaluationRecord blank_record(const EvalInstance& instance, const RunConfig& config) {
    EvaluationRecord rec;
    rec.instance_id = instance.id;
    rec.method = config.method;
    rec.model_id = config.model_id;
    rec.task_category = instance.task_category;
    return rec;
}

template <typename Part>
void absorb(EvaluationRecord& rec, Part& part) {
    for (auto& c : part.calls) rec.calls.push_back(std::move(c));
    rec.flags.insert(part.flags.begin(), part.flags.end());
    for (auto& n : part.notes) rec.notes.push_back(std::move(n));
}

void exclude(EvaluationRecord& rec, std::string reason) {
    rec.flags.insert(RecordFlag::Excluded);
    rec.verdict = ErrorVerdict{std::move(reason)};
}

}  // namespace

EvaluationRecord Pipeline::run_single_score(const EvalInstance& instance, Stage stage) const {
    auto rec = blank_record(instance, config_);
    const bool cot = stage == Stage::CoTScoring;
    auto outcome = score_pair(
        instance,
        [&](const EvalInstance& inst) {
            return cot ? renderer_.cot_scoring(inst) : renderer_.direct_scoring(inst);
        },
        cot, true);
    absorb(rec, outcome);
    if (!outcome.scores) {
        exclude(rec, outcome.error.value_or("no scores"));
        return rec;
    }
    const auto [a, b] = *outcome.scores;
    rec.verdict = Verdict{decide(a, b, config_.tie_tol), a, b};
    return rec;
}

EvaluationRecord Pipeline::run_direct(const EvalInstance& instance) const {
    return run_single_score(instance, Stage::DirectScoring);
}

EvaluationRecord Pipeline::run_cot(const EvalInstance& instance) const {
    return run_single_score(instance, Stage::CoTScoring);
}

EvaluationRecord Pipeline::run_dna(const EvalInstance& instance) const {
    return run_decomposed(instance, false);
}

EvaluationRecord Pipeline::run_ablation(const EvalInstance& instance) const {
    return run_decomposed(instance, true);
}

namespace {

struct WeightOutcome {
    std::vector<CallTrace> calls;
    std::set<RecordFlag> flags;
    std::vector<std::string> notes;
    std::optional<std::vector<double>> raw;
    std::optional<WeightVector> weights;
    std::optional<std::string> error;
};

}  // namespace

EvaluationRecord Pipeline::run_decomposed(const EvalInstance& instance, bool prompted_aggregation) const {
    auto rec = blank_record(instance, config_);

    // (a) aspects
    try {
        if (instance.predefined_aspects) {
            rec.aspects = AspectSet::from_texts(*instance.predefined_aspects, AspectSource::Predefined);
        } else {
            const auto prompt = renderer_.aspect_generation(instance, config_.k);
            rec.calls.push_back(call(prompt, false, false));
            auto parsed = parse_aspects(rec.calls.back().reply.text, config_.k);
            if (!parsed.usable() && config_.retry_on_parse_failure) {
                auto again = prompt;
                again.text += kAspectRetrySuffix;
                rec.calls.push_back(call(std::move(again), true, false));
                rec.flags.insert(RecordFlag::ScoreRetry);
                parsed = parse_aspects(rec.calls.back().reply.text, config_.k);
            }
            if (!parsed.usable()) {
                exclude(rec, "aspect_generation: " + parsed.note);
                return rec;
            }
            if (parsed.status == ParseStatus::Recovered) {
                rec.flags.insert(RecordFlag::ParseRecovered);
                rec.notes.push_back("aspect_generation: " + parsed.note);
            }
            rec.aspects = std::move(*parsed.value);
        }
    } catch (const Error& e) {
        exclude(rec, describe(e));
        return rec;
    }
    const AspectSet& aspects = *rec.aspects;

    // (b) one scoring call per aspect, and (c) the weighting call, all independent
    std::vector<std::future<PairOutcome>> scoring;
    for (std::size_t j = 0; j < aspects.size(); ++j) {
        scoring.push_back(std::async(std::launch::async, [this, &instance, &aspects, j] {
            return score_pair(
                instance,
                [&](const EvalInstance& inst) { return renderer_.aspect_scoring(inst, aspects[j].text, j); },
                false, true);
        }));
    }
    std::future<WeightOutcome> weighting;
    if (!prompted_aggregation) {
        weighting = std::async(std::launch::async, [this, &instance, &aspects] {
            WeightOutcome out;
            try {
                out.calls.push_back(call(renderer_.weighting(instance, aspects), false, false));
            } catch (const Error& e) {
                out.error = describe(e);
                return out;
            }
            const auto parsed = parse_weights(out.calls.back().reply.text, aspects.size());
            if (parsed.usable()) {
                out.raw = *parsed.value;
                if (parsed.status == ParseStatus::Recovered) {
                    out.flags.insert(RecordFlag::ParseRecovered);
                    out.notes.push_back("weight_proposal: " + parsed.note);
                }
                try {
                    out.weights = normalize_weights(*out.raw);
                } catch (const Error& e) {
                    out.notes.push_back(std::string("weight_proposal: ") + e.what());
                }
            } else {
                out.notes.push_back("weight_proposal: " + parsed.note);
            }
            if (!out.weights) {
                out.weights = WeightVector::uniform(aspects.size());
                out.flags.insert(RecordFlag::UniformWeightFallback);
            }
            return out;
        });
    }

    std::vector<ScoreRow> rows;
    std::vector<std::string> failures;
    for (std::size_t j = 0; j < scoring.size(); ++j) {
        auto part = scoring[j].get();
        absorb(rec, part);
        if (part.scores) {
            rows.push_back({j, part.scores->first, part.scores->second});
        } else {
            failures.push_back(part.error.value_or("aspect " + std::to_string(j) + ": no scores"));
        }
    }
    if (!prompted_aggregation) {
        auto part = weighting.get();
        absorb(rec, part);
        rec.raw_weights = std::move(part.raw);
        rec.weights = std::move(part.weights);
        if (part.error) failures.push_back("weight_proposal: " + *part.error);
    }
    if (!failures.empty()) {
        std::string reason;
        for (const auto& f : failures) reason += (reason.empty() ? "" : "; ") + f;
        exclude(rec, reason);
        return rec;
    }
    rec.score_matrix = ScoreMatrix(std::move(rows), config_.scale);

    // (d) aggregation
    if (!prompted_aggregation) {
        rec.verdict = evaluate_pair(*rec.score_matrix, *rec.weights, config_.tie_tol);
        return rec;
    }
    const ScoreMatrix& matrix = *rec.score_matrix;
    auto overall = score_pair(
        instance,
        [&](const EvalInstance& inst) { return renderer_.prompted_aggregation(inst, aspects, matrix); },
        false, false);
    absorb(rec, overall);
    if (!overall.scores) {
        exclude(rec, overall.error.value_or("prompted_aggregation: no scores"));
        return rec;
    }
    const auto [a, b] = *overall.scores;
    rec.verdict = Verdict{decide(a, b, config_.tie_tol), a, b};
    return rec;
}

EvaluationRecord Pipeline::run(const EvalInstance& instance) const {
    switch (config_.method) {
        case Method::Direct: return run_direct(instance);
        case Method::CoT: return run_cot(instance);
        case Method::DnA: return run_dna(instance);
        case Method::DnAPromptedAggregation: return run_ablation(instance);
    }
    return run_dna(instance);
}

RunResult Pipeline::run_dataset(const Dataset& dataset) const {
    dataset.validate();
    RunResult result;
    result.records.resize(dataset.size());

    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < dataset.size(); i = next++) {
            const auto& inst = dataset.instances[i];
            try {
                result.records[i] = run(inst);
            } catch (const Error& e) {
                auto rec = blank_record(inst, config_);
                exclude(rec, describe(e));
                result.records[i] = std::move(rec);
            } catch (...) {
                std::lock_guard lock(fatal_mutex);
                if (!fatal) fatal = std::current_exception();
                next = dataset.size();
            }
        }
    };
    const std::size_t n_workers = std::min(config_.concurrency_limit, std::max<std::size_t>(dataset.size(), 1));
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (fatal) std::rethrow_exception(fatal);

    std::unordered_set<std::string> seen;
    auto& s = result.summary;
    s.dataset = dataset.name;
    s.method = config_.method;
    s.model_id = config_.model_id;
    s.n_records = result.records.size();
    for (auto& rec : result.records) {
        if (rec.has(RecordFlag::Excluded)) ++s.n_excluded;
        for (auto& c : rec.calls) {
            const auto key = cache_key({config_.model_id, c.prompt.text, config_.temperature,
                                        config_.max_output_tokens});
            c.reply.cached = !seen.insert(key).second;
            ++s.total_inferences;
            if (c.reply.cached) {
                ++s.cached_inferences;
            } else {
                s.input_tokens += static_cast<std::uint64_t>(c.reply.input_tokens);
                s.output_tokens += static_cast<std::uint64_t>(c.reply.output_tokens);
            }
        }
    }
    return result;
}

// ---- serialization ----

namespace {

[[noreturn]] void schema_error(const std::string& what) { throw Error(ErrorKind::SchemaError, what); }

json summary_to_json(const RunSummary& s) {
    return {{"dataset", s.dataset},
            {"method", to_string(s.method)},
            {"model_id", s.model_id},
            {"n_records", s.n_records},
            {"n_excluded", s.n_excluded},
            {"total_inferences", s.total_inferences},
            {"cached_inferences", s.cached_inferences},
            {"input_tokens", s.input_tokens},
            {"output_tokens", s.output_tokens}};
}

RunSummary summary_from_json(const json& j) {
    RunSummary s;
    s.dataset = j.at("dataset").get<std::string>();
    s.method = method_from_string(j.at("method").get<std::string>());
    s.model_id = j.at("model_id").get<std::string>();
    s.n_records = j.at("n_records").get<std::size_t>();
    s.n_excluded = j.at("n_excluded").get<std::size_t>();
    s.total_inferences = j.at("total_inferences").get<std::uint64_t>();
    s.cached_inferences = j.at("cached_inferences").get<std::uint64_t>();
    s.input_tokens = j.at("input_tokens").get<std::uint64_t>();
    s.output_tokens = j.at("output_tokens").get<std::uint64_t>();
    return s;
}

json record_json(const EvaluationRecord& r) {
    json j;
    j["instance_id"] = r.instance_id;
    j["method"] = to_string(r.method);
    j["model_id"] = r.model_id;
    if (r.task_category) j["task_category"] = *r.task_category;
    if (r.aspects) {
        j["aspects"] = {{"source", to_string(r.aspects->source())}, {"texts", r.aspects->texts()}};
    }
    if (r.score_matrix) {
        json rows = json::array();
        for (const auto& row : r.score_matrix->rows()) {
            rows.push_back({{"aspect_index", row.aspect_index},
                            {"first", row.score_first},
                            {"second", row.score_second}});
        }
        j["scores"] = {{"scale", {r.score_matrix->scale().min, r.score_matrix->scale().max}},
                       {"rows", rows}};
    }
    if (r.raw_weights) j["raw_weights"] = *r.raw_weights;
    if (r.weights) j["weights"] = r.weights->values();
    if (const auto* v = std::get_if<Verdict>(&r.verdict)) {
        j["verdict"] = {{"label", to_int(v->label)},
                        {"overall_first", v->overall_first},
                        {"overall_second", v->overall_second}};
    } else {
        j["verdict"] = {{"error", std::get<ErrorVerdict>(r.verdict).reason}};
    }
    json calls = json::array();
    for (const auto& c : r.calls) {
        json cj = {{"stage", to_string(c.prompt.stage)},
                   {"prompt", c.prompt.text},
                   {"reply", c.reply.text},
                   {"input_tokens", c.reply.input_tokens},
                   {"output_tokens", c.reply.output_tokens},
                   {"cached", c.reply.cached},
                   {"estimated", c.reply.estimated},
                   {"retry", c.retry},
                   {"swapped", c.swapped}};
        if (c.prompt.aspect_index) cj["aspect_index"] = *c.prompt.aspect_index;
        calls.push_back(std::move(cj));
    }
    j["calls"] = std::move(calls);
    j["inference_count"] = r.inference_count();
    json flags = json::array();
    for (auto f : r.flags) flags.push_back(to_string(f));
    j["flags"] = std::move(flags);
    j["notes"] = r.notes;
    return j;
}

EvaluationRecord record_from(const json& j) {
    EvaluationRecord r;
    r.instance_id = j.at("instance_id").get<std::string>();
    r.method = method_from_string(j.at("method").get<std::string>());
    r.model_id = j.at("model_id").get<std::string>();
    if (j.contains("task_category")) r.task_category = j["task_category"].get<std::string>();
    if (j.contains("aspects")) {
        const auto& a = j["aspects"];
        const auto src = a.at("source").get<std::string>();
        if (src != "predefined" && src != "generated") schema_error("unknown aspect source '" + src + "'");
        r.aspects = AspectSet::from_texts(a.at("texts").get<std::vector<std::string>>(),
                                          src == "predefined" ? AspectSource::Predefined
                                                              : AspectSource::Generated);
    }
    if (j.contains("scores")) {
        const auto& s = j["scores"];
        const auto bounds = s.at("scale").get<std::vector<double>>();
        if (bounds.size() != 2) schema_error("scores.scale must hold [min, max]");
        std::vector<ScoreRow> rows;
        for (const auto& row : s.at("rows")) {
            rows.push_back({row.at("aspect_index").get<std::size_t>(), row.at("first").get<double>(),
                            row.at("second").get<double>()});
        }
        r.score_matrix = ScoreMatrix(std::move(rows), ScoreScale{bounds[0], bounds[1]});
    }
    if (j.contains("raw_weights")) r.raw_weights = j["raw_weights"].get<std::vector<double>>();
    if (j.contains("weights")) r.weights = WeightVector(j["weights"].get<std::vector<double>>());
    const auto& v = j.at("verdict");
    if (v.contains("error")) {
        r.verdict = ErrorVerdict{v["error"].get<std::string>()};
    } else {
        r.verdict = Verdict{label_from_int(v.at("label").get<int>()), v.at("overall_first").get<double>(),
                            v.at("overall_second").get<double>()};
    }
    for (const auto& cj : j.at("calls")) {
        CallTrace c;
        c.prompt.stage = stage_from_string(cj.at("stage").get<std::string>());
        c.prompt.text = cj.at("prompt").get<std::string>();
        c.prompt.instance_id = r.instance_id;
        if (cj.contains("aspect_index")) c.prompt.aspect_index = cj["aspect_index"].get<std::size_t>();
        c.reply.text = cj.at("reply").get<std::string>();
        c.reply.input_tokens = cj.at("input_tokens").get<std::int64_t>();
        c.reply.output_tokens = cj.at("output_tokens").get<std::int64_t>();
        c.reply.cached = cj.at("cached").get<bool>();
        c.reply.estimated = cj.value("estimated", false);
        c.retry = cj.value("retry", false);
        c.swapped = cj.value("swapped", false);
        r.calls.push_back(std::move(c));
    }
    if (j.contains("inference_count") && j["inference_count"].get<std::size_t>() != r.calls.size()) {
        schema_error("inference_count does not match the number of calls");
    }
    for (const auto& f : j.value("flags", json::array())) r.flags.insert(record_flag_from_string(f.get<std::string>()));
    r.notes = j.value("notes", std::vector<std::string>{});
    return r;
}

}  // namespace

std::string record_to_json(const EvaluationRecord& record) { return record_json(record).dump(); }

EvaluationRecord record_from_json(std::string_view line) {
    try {
        return record_from(json::parse(line));
    } catch (const json::exception& e) {
        schema_error(std::string("malformed record: ") + e.what());
    }
}

std::string serialize_run(const RunResult& result) {
    std::string out = json{{"run", summary_to_json(result.summary)}}.dump();
    out += '\n';
    for (const auto& r : result.records) {
        out += record_json(r).dump();
        out += '\n';
    }
    return out;
}

void save_run(const RunResult& result, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << serialize_run(result);
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

RunResult parse_run(std::istream& in, const std::string& source_name) {
    RunResult result;
    bool have_header = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = source_name + ":" + std::to_string(line_no) + ": ";
        try {
            const auto j = json::parse(line);
            if (!have_header) {
                if (!j.is_object() || !j.contains("run")) schema_error("first line must be the run header");
                result.summary = summary_from_json(j["run"]);
                have_header = true;
                continue;
            }
            result.records.push_back(record_from(j));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::SchemaError, where + e.what());
        } catch (const Error& e) {
            throw Error(ErrorKind::SchemaError, where + e.what());
        }
    }
    if (!have_header) throw Error(ErrorKind::SchemaError, source_name + ": empty run file");
    if (result.records.size() != result.summary.n_records) {
        throw Error(ErrorKind::SchemaError, source_name + ": header announces " +
                                                std::to_string(result.summary.n_records) + " records, found " +
                                                std::to_string(result.records.size()));
    }
    return result;
}

RunResult load_run(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open run file " + path.string());
    return parse_run(in, path.string());
}

}  // namespace dnaeval
