#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dnaeval/core.hpp"

namespace dnaeval {

struct Dataset {
    std::string name;
    std::vector<EvalInstance> instances;
    bool has_predefined_aspects = false;
    bool allows_ties = true;

    /// Instance checks plus: unique ids, one shared rubric when has_predefined_aspects,
    /// no gold ties unless allows_ties. Throws SchemaError or DuplicateId.
    void validate() const;

    std::size_t size() const noexcept { return instances.size(); }
    const EvalInstance* find(std::string_view id) const;
};

/// Rubrics attached by the importers.
const std::vector<std::string>& faireval_aspects();
const std::vector<std::string>& mtbench_aspects();

struct LoadOptions {
    /// Overrides the header line (or the default of true).
    std::optional<bool> allows_ties;
    std::optional<std::string> name;
};

/// Canonical layout: JSON lines. An optional first line {"dataset": {"name", "allows_ties",
/// "has_predefined_aspects"}} carries dataset-level flags; every other line is one instance
/// with id, context, response_first, response_second, human_label (0/1/2), and optional
/// predefined_aspects and task_category. Errors name the offending line.
Dataset load_canonical(const std::filesystem::path& path, const LoadOptions& options = {});
Dataset parse_canonical(std::istream& in, const std::string& source_name,
                        const LoadOptions& options = {});

std::string serialize_canonical(const Dataset& dataset);
void save_canonical(const Dataset& dataset, const std::filesystem::path& path);

struct ImportOptions {
    /// Required by mtbench400 whenever the upstream file holds more single-turn items than
    /// the sample size.
    std::optional<std::uint64_t> seed;
    std::size_t mtbench_sample_size = 400;
    std::string instrusum_first = "gpt-3.5-turbo-0301";
    std::string instrusum_second = "gpt-4-0314";
};

/// Names accepted by import_benchmark.
const std::vector<std::string>& benchmark_formats();

/// Reads an upstream release layout. Throws UnknownFormat or UpstreamLayoutError.
///   faireval            dir with question.jsonl, answer/answer_gpt35.jsonl,
///                       answer/answer_vicuna-13b.jsonl, review/review_gpt35_vicuna-13b_human.txt
///   mtbench400          dir with human_judgments.jsonl (+ optional question.jsonl), or that file
///   llmbar_adversarial  dir holding Adversarial/{Neighbor,GPTInst,GPTOut,Manual}/dataset.json
///   instrusum_pairs     dir with human_eval.jsonl, or that file
Dataset import_benchmark(std::string_view format, const std::filesystem::path& source,
                         const ImportOptions& options = {});

/// Proportional allocation per stratum with largest-remainder rounding. Members keep their
/// original order. stratum_field is "task_category" or "context".
Dataset stratified_sample(const Dataset& dataset, std::size_t n, std::string_view stratum_field,
                          std::uint64_t seed);

}  // namespace dnaeval
