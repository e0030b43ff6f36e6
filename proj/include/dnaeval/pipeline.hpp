#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "dnaeval/core.hpp"
#include "dnaeval/datasets.hpp"
#include "dnaeval/llm_gateway.hpp"
#include "dnaeval/prompting.hpp"

namespace dnaeval {

enum class Method { Direct, CoT, DnA, DnAPromptedAggregation };

/// "direct", "cot", "dna", "dna_prompted_aggregation".
std::string_view to_string(Method method) noexcept;
/// Also accepts "ablation" for the prompted-aggregation method. Throws InvalidArgument.
Method method_from_string(std::string_view name);

struct RunConfig {
    Method method = Method::DnA;
    /// Aspects requested when an instance has no predefined rubric.
    std::size_t k = 3;
    ScoreScale scale;
    double tie_tol = 0.0;
    std::string model_id = "mock";
    std::size_t concurrency_limit = 4;
    /// One re-prompt after an unreadable score or aspect reply.
    bool retry_on_parse_failure = true;
    double temperature = 0.0;
    std::int64_t max_output_tokens = 1024;
    /// Score every pair in both orders and average. Off by default.
    bool swap_positions = false;

    void validate() const;
};

/// Appended to a prompt when it is re-sent after a parse failure.
inline constexpr std::string_view kScoreRetrySuffix =
    "\n\nYour previous reply could not be read. Reply again and put the two scores, "
    "separated by a space, alone on the last line.";
inline constexpr std::string_view kAspectRetrySuffix =
    "\n\nYour previous reply could not be read. Reply again with one question per line, "
    "each starting with its number followed by a period.";

enum class RecordFlag { UniformWeightFallback, ScoreRetry, ParseRecovered, Excluded };

std::string_view to_string(RecordFlag flag) noexcept;
RecordFlag record_flag_from_string(std::string_view name);

struct CallTrace {
    RenderedPrompt prompt;
    CompletionReply reply;
    /// Re-prompt after a parse failure.
    bool retry = false;
    /// Responses were presented in reversed order.
    bool swapped = false;

    friend bool operator==(const CallTrace&, const CallTrace&) = default;
};

struct ErrorVerdict {
    std::string reason;

    friend bool operator==(const ErrorVerdict&, const ErrorVerdict&) = default;
};

struct EvaluationRecord {
    std::string instance_id;
    Method method = Method::DnA;
    std::string model_id;
    std::optional<std::string> task_category;
    std::optional<AspectSet> aspects;
    std::optional<ScoreMatrix> score_matrix;
    /// Percentages as parsed from the weighting reply.
    std::optional<std::vector<double>> raw_weights;
    std::optional<WeightVector> weights;
    std::variant<Verdict, ErrorVerdict> verdict = ErrorVerdict{"not evaluated"};
    std::vector<CallTrace> calls;
    std::set<RecordFlag> flags;
    std::vector<std::string> notes;

    /// Cached and fresh calls both count.
    std::size_t inference_count() const noexcept { return calls.size(); }
    bool has(RecordFlag flag) const { return flags.count(flag) != 0; }
    /// Predicted label, or nullopt for an error verdict.
    std::optional<PreferenceLabel> label() const;

    friend bool operator==(const EvaluationRecord&, const EvaluationRecord&) = default;
};

struct RunSummary {
    std::string dataset;
    Method method = Method::DnA;
    std::string model_id;
    std::size_t n_records = 0;
    std::size_t n_excluded = 0;
    std::uint64_t total_inferences = 0;
    std::uint64_t cached_inferences = 0;
    /// Tokens of calls not marked cached.
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;

    friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

struct RunResult {
    RunSummary summary;
    std::vector<EvaluationRecord> records;

    const EvaluationRecord* find(std::string_view instance_id) const;

    friend bool operator==(const RunResult&, const RunResult&) = default;
};

class Pipeline {
public:
    /// Throws InvalidArgument for a bad config.
    Pipeline(LlmGateway& gateway, RunConfig config,
             TemplateRegistry registry = TemplateRegistry::defaults(),
             std::string benchmark_variant = {});

    EvaluationRecord run_direct(const EvalInstance& instance) const;
    EvaluationRecord run_cot(const EvalInstance& instance) const;
    EvaluationRecord run_dna(const EvalInstance& instance) const;
    EvaluationRecord run_ablation(const EvalInstance& instance) const;
    /// Dispatches on config().method.
    EvaluationRecord run(const EvalInstance& instance) const;

    /// One record per instance, in dataset order. Instances run in parallel up to
    /// concurrency_limit. A call is marked cached when the same request occurred earlier in
    /// the run (dataset order, then stage order), which keeps the output independent of
    /// scheduling and of what the gateway cache already held.
    RunResult run_dataset(const Dataset& dataset) const;

    const RunConfig& config() const noexcept { return config_; }
    const PromptRenderer& renderer() const noexcept { return renderer_; }

private:
    struct PairOutcome;
    using Render = std::function<RenderedPrompt(const EvalInstance&)>;
    PairOutcome score_pair(const EvalInstance& instance, const Render& render, bool trailing,
                           bool allow_swap) const;
    CallTrace call(RenderedPrompt prompt, bool retry, bool swapped) const;
    EvaluationRecord run_single_score(const EvalInstance& instance, Stage stage) const;
    EvaluationRecord run_decomposed(const EvalInstance& instance, bool prompted_aggregation) const;

    LlmGateway& gateway_;
    RunConfig config_;
    PromptRenderer renderer_;
};

/// One JSON line: {"run": {...summary}} followed by one record per line. Latency is not
/// written, so output does not depend on timing.
std::string serialize_run(const RunResult& result);
void save_run(const RunResult& result, const std::filesystem::path& path);
/// Throws SchemaError with the line number.
RunResult parse_run(std::istream& in, const std::string& source_name);
RunResult load_run(const std::filesystem::path& path);

std::string record_to_json(const EvaluationRecord& record);
EvaluationRecord record_from_json(std::string_view line);

}  // namespace dnaeval
