#pragma once

// Synthetic data for tests: upstream release layouts at full size, small canonical datasets and
// mock scripts that answer every prompt of a run.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dnaeval/datasets.hpp"
#include "dnaeval/llm_gateway.hpp"

namespace dnaeval::testkit {

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// question.jsonl, two answer files and the human review file. Labels cycle 1, 2, tie.
void write_faireval_release(const std::filesystem::path& dir, std::size_t n_questions = 80);

/// human_judgments.jsonl with turn-1 and turn-2 entries plus question.jsonl with 8 categories.
/// Holds n_questions * per_question single-turn judgments.
void write_mtbench_release(const std::filesystem::path& dir, std::size_t n_questions = 80,
                           std::size_t per_question = 6);

/// Adversarial/{Neighbor,GPTInst,GPTOut,Manual}/dataset.json with 134 + 92 + 47 + 46 items.
void write_llmbar_release(const std::filesystem::path& root);

/// human_eval.jsonl with five systems per article.
void write_instrusum_release(const std::filesystem::path& dir, std::size_t n_articles = 100);

/// Instances whose ids, contexts and responses are unique strings "case-NN". With a rubric, every
/// instance carries it and the dataset is marked accordingly.
Dataset synthetic_dataset(std::size_t n, const std::vector<std::string>& rubric = {});

/// Generated aspect i of instance `index`.
std::string synthetic_aspect(std::size_t index, std::size_t i);

/// Scripted scores and weights for one instance.
struct SyntheticAnswers {
    std::vector<std::pair<int, int>> scores;
    std::vector<int> weights;
};
SyntheticAnswers synthetic_answers(std::size_t index, std::size_t k);

/// Rules answering aspect generation (k aspects), aspect scoring, weighting, prompted
/// aggregation and direct or CoT scoring for every instance of a synthetic dataset. The default reply is unreadable, so a prompt
/// the script does not cover shows up as a retry. Each rule carries token counts
/// input = 100 + index, output = 10 + stage number.
MockScript synthetic_script(const Dataset& dataset, std::size_t k);

}  // namespace dnaeval::testkit
