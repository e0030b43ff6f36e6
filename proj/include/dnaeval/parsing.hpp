#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dnaeval/core.hpp"

namespace dnaeval {

enum class ParseStatus { Ok, Recovered, Failed };

std::string_view to_string(ParseStatus status) noexcept;

/// Result of extracting a value from free text. Ok/Recovered carry a value; Failed never does.
template <typename T>
struct ParseOutcome {
    std::optional<T> value;
    ParseStatus status = ParseStatus::Failed;
    std::string note;

    static ParseOutcome ok(T v, std::string note = {}) {
        return {std::move(v), ParseStatus::Ok, std::move(note)};
    }
    static ParseOutcome recovered(T v, std::string note) {
        return {std::move(v), ParseStatus::Recovered, std::move(note)};
    }
    static ParseOutcome failed(std::string note) {
        return {std::nullopt, ParseStatus::Failed, std::move(note)};
    }

    bool usable() const noexcept { return status != ParseStatus::Failed; }
};

/// Sum of parsed percentages outside this window is a failed parse.
inline constexpr double kWeightSumLow = 90.0;
inline constexpr double kWeightSumHigh = 110.0;

/// Finds a line with k weight percentages. Values come back un-normalized.
ParseOutcome<std::vector<double>> parse_weights(std::string_view text, std::size_t k);

/// Extracts one score per response. Labeled markers ("Response 1", "Assistant 2",
/// "Output (a)") win; otherwise the first two in-range numbers are used. Numbers outside
/// the scale are skipped, never clamped.
ParseOutcome<std::pair<double, double>> parse_pair_scores(std::string_view text,
                                                          const ScoreScale& scale);

/// Splits an enumerated reply into generated aspects, keeping the first k.
ParseOutcome<AspectSet> parse_aspects(std::string_view text, std::size_t k);

/// Runs parse_pair_scores on growing suffixes of the reply (last line, last two lines, ...)
/// so scores given after an explanation are preferred over numbers quoted inside it.
ParseOutcome<std::pair<double, double>> parse_trailing_pair_scores(std::string_view text,
                                                                   const ScoreScale& scale);

}  // namespace dnaeval
