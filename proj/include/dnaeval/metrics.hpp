#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnaeval/core.hpp"
#include "dnaeval/datasets.hpp"
#include "dnaeval/pipeline.hpp"

namespace dnaeval {

// ---- agreement with human labels ----

enum class AgreementMode { WithTies, WithoutTies };

struct AgreementOptions {
    /// WithoutTies only drops gold ties. When false, items the model called a tie are
    /// dropped as well.
    bool predicted_tie_counts_as_wrong = true;
    /// Records with an error verdict either count as disagreements or leave both denominators.
    bool drop_excluded = false;
};

/// Fraction of matching labels. Throws DimensionMismatch on unequal lengths and
/// EmptyDenominator when nothing is left to count.
double agreement(std::span<const PreferenceLabel> preds, std::span<const PreferenceLabel> golds,
                 AgreementMode mode, const AgreementOptions& options = {});

struct AgreementCell {
    std::size_t n_total = 0;
    std::size_t n_nontie = 0;
    std::size_t n_excluded = 0;
    std::size_t agree_all = 0;
    std::size_t agree_nontie = 0;
    /// Absent when the denominator is empty.
    std::optional<double> with_ties;
    std::optional<double> without_ties;
};

struct AgreementReport {
    AgreementCell overall;
    std::map<std::string, AgreementCell> per_method;
    std::map<std::string, AgreementCell> per_dataset;
};

struct ScoredRun {
    const RunResult* run = nullptr;
    const Dataset* gold = nullptr;
};

/// Pools every run against its gold dataset. Throws IdMismatch unless each run covers
/// exactly the ids of its dataset.
AgreementReport agreement_report(std::span<const ScoredRun> runs, const AgreementOptions& options = {});
AgreementCell agreement_cell(const RunResult& run, const Dataset& gold, const AgreementOptions& options = {});

/// "66.7" for 2/3, "—" when absent.
std::string format_percent(const std::optional<double>& fraction);

void write_agreement_csv(const AgreementReport& report, std::ostream& out);
std::string format_agreement_table(const AgreementReport& report);

// ---- weight rankings ----

/// Competition ranks, 1 = largest weight. Equal weights share a rank: [0.4, 0.4, 0.2] -> [1, 1, 3].
struct Ranking {
    std::vector<std::size_t> ranks;

    std::size_t size() const noexcept { return ranks.size(); }
    friend bool operator==(const Ranking&, const Ranking&) = default;
};

Ranking weights_to_ranking(std::span<const double> weights);
Ranking weights_to_ranking(const WeightVector& weights);

/// Kendall distance with a tie penalty p in [0, 1]: an index pair ordered oppositely costs 1,
/// a pair tied in exactly one ranking costs p, a pair tied in both costs nothing.
/// normalized divides by k(k-1)/2. Throws DimensionMismatch.
double kendall_distance(const Ranking& r1, const Ranking& r2, bool normalized, double p = 0.5);

struct MeanWeightTable {
    std::vector<std::string> tasks;    // sorted
    std::vector<std::string> aspects;  // first appearance
    std::map<std::string, std::map<std::string, double>> mean;
    std::map<std::string, std::size_t> record_count;

    std::optional<double> cell(const std::string& task, const std::string& aspect) const;
};

/// Mean percentage weight per (task, aspect). Uses the parsed percentages when present,
/// otherwise 100 x the stored weight. Records without weights are skipped; records without a
/// task land in "(none)".
MeanWeightTable per_task_mean_weights(std::span<const EvaluationRecord> records);

void write_mean_weights_csv(const MeanWeightTable& table, std::ostream& out);
std::string format_mean_weights_table(const MeanWeightTable& table);

/// One reference ranking per instance id. JSON lines: {"instance_id": ..., "weights": [...]}
/// or {"instance_id": ..., "ranks": [...]}.
std::map<std::string, Ranking> load_reference_rankings(const std::filesystem::path& path);

// ---- cost ----

struct ModelPrice {
    double input_per_token = 0.0;
    double output_per_token = 0.0;
};

class PriceTable {
public:
    /// {"model-id": {"input": 1e-6, "output": 2e-6}, ...}. Throws SchemaError or InvalidArgument
    /// for a negative price.
    static PriceTable from_json_text(std::string_view text);
    static PriceTable load(const std::filesystem::path& path);

    void set(const std::string& model_id, ModelPrice price);
    const ModelPrice* find(const std::string& model_id) const;

private:
    std::map<std::string, ModelPrice> prices_;
};

struct CostLine {
    Method method = Method::DnA;
    std::string model_id;
    std::uint64_t inferences = 0;
    std::uint64_t cached = 0;
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    double cost = 0.0;
};

struct CostReport {
    double total_cost = 0.0;
    std::uint64_t total_inferences = 0;
    std::vector<CostLine> lines;  // sorted by (method, model)
};

/// Token totals per (method, model) over calls not marked cached, times the model's prices.
/// Every call counts as an inference. Throws UnknownModelPrice.
CostReport estimate_cost(std::span<const EvaluationRecord> records, const PriceTable& prices);

// ---- paired comparison ----

struct PairedCounts {
    std::size_t both_correct = 0;
    std::size_t only_a = 0;
    std::size_t only_b = 0;
    std::size_t neither = 0;

    std::size_t total() const noexcept { return both_correct + only_a + only_b + neither; }
    friend bool operator==(const PairedCounts&, const PairedCounts&) = default;
};

/// 2x2 correct/incorrect table for two runs over the same instances, split by gold label.
/// No test statistic is computed. Throws IdMismatch.
std::map<PreferenceLabel, PairedCounts> significance_stub(const RunResult& a, const RunResult& b,
                                                          const Dataset& gold);

}  // namespace dnaeval
