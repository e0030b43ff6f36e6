#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnaeval/error.hpp"

namespace dnaeval {

/// Pairwise preference code. The numeric values are the on-disk encoding.
enum class PreferenceLabel : int { Tie = 0, First = 1, Second = 2 };

/// Throws SchemaError for anything outside {0, 1, 2}.
PreferenceLabel label_from_int(int value);
int to_int(PreferenceLabel label) noexcept;
std::string_view to_string(PreferenceLabel label) noexcept;
PreferenceLabel swapped(PreferenceLabel label) noexcept;

enum class Candidate { First, Second };

struct EvalInstance {
    std::string id;
    std::string context;
    std::string response_first;
    std::string response_second;
    PreferenceLabel human_label = PreferenceLabel::Tie;
    std::optional<std::vector<std::string>> predefined_aspects;
    std::optional<std::string> task_category;

    /// Throws SchemaError when a required field is empty.
    void validate() const;

    /// Same instance with the two responses exchanged and the label mirrored.
    EvalInstance with_swapped_responses() const;

    friend bool operator==(const EvalInstance&, const EvalInstance&) = default;
};

enum class AspectSource { Predefined, Generated };

std::string_view to_string(AspectSource source) noexcept;

struct Aspect {
    std::string text;
    AspectSource source = AspectSource::Predefined;

    friend bool operator==(const Aspect&, const Aspect&) = default;
};

/// Ordered, nonempty set of distinct aspects that share one source.
class AspectSet {
public:
    explicit AspectSet(std::vector<Aspect> aspects);
    static AspectSet from_texts(const std::vector<std::string>& texts, AspectSource source);

    std::size_t size() const noexcept { return aspects_.size(); }
    const Aspect& operator[](std::size_t i) const { return aspects_.at(i); }
    const std::vector<Aspect>& aspects() const noexcept { return aspects_; }
    AspectSource source() const noexcept { return aspects_.front().source; }
    std::vector<std::string> texts() const;

    auto begin() const noexcept { return aspects_.begin(); }
    auto end() const noexcept { return aspects_.end(); }

    friend bool operator==(const AspectSet&, const AspectSet&) = default;

private:
    std::vector<Aspect> aspects_;
};

struct ScoreScale {
    double min = 1.0;
    double max = 10.0;

    bool contains(double v) const noexcept { return v >= min && v <= max; }
    friend bool operator==(const ScoreScale&, const ScoreScale&) = default;
};

struct ScoreRow {
    std::size_t aspect_index = 0;
    double score_first = 0.0;
    double score_second = 0.0;

    friend bool operator==(const ScoreRow&, const ScoreRow&) = default;
};

/// One row of paired scores per aspect index 0..k-1, sorted by index.
class ScoreMatrix {
public:
    ScoreMatrix(std::vector<ScoreRow> rows, ScoreScale scale);

    std::size_t size() const noexcept { return rows_.size(); }
    const std::vector<ScoreRow>& rows() const noexcept { return rows_; }
    const ScoreScale& scale() const noexcept { return scale_; }
    std::vector<double> column(Candidate candidate) const;

    /// Score columns exchanged.
    ScoreMatrix swapped() const;

    friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;

private:
    std::vector<ScoreRow> rows_;
    ScoreScale scale_;
};

inline constexpr double kWeightSumTolerance = 1e-9;

/// Nonnegative weights summing to 1.
class WeightVector {
public:
    explicit WeightVector(std::vector<double> weights);
    static WeightVector uniform(std::size_t k);

    std::size_t size() const noexcept { return weights_.size(); }
    double operator[](std::size_t i) const { return weights_.at(i); }
    const std::vector<double>& values() const noexcept { return weights_; }

    friend bool operator==(const WeightVector&, const WeightVector&) = default;

private:
    std::vector<double> weights_;
};

struct Verdict {
    PreferenceLabel label = PreferenceLabel::Tie;
    double overall_first = 0.0;
    double overall_second = 0.0;

    friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// Converts raw (percentage) weights into a WeightVector by dividing by their sum.
/// Throws AllZero when every entry is zero and NegativeEntry on a negative entry.
WeightVector normalize_weights(std::span<const double> raw);

/// Weighted sum of one candidate's scores.
double aggregate(const ScoreMatrix& scores, const WeightVector& weights, Candidate candidate);

PreferenceLabel decide(double overall_first, double overall_second, double tie_tol = 0.0);

Verdict evaluate_pair(const ScoreMatrix& scores, const WeightVector& weights, double tie_tol = 0.0);

}  // namespace dnaeval
