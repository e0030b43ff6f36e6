#include "fixtures.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dnaeval::testkit {

using json = nlohmann::json;
namespace fs = std::filesystem;

TempDir::TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto candidate = fs::temp_directory_path() / ("dnaeval-test-" + std::to_string(rng()));
        if (fs::create_directory(candidate)) {
            path_ = candidate;
            return;
        }
    }
    throw std::runtime_error("cannot create a temporary directory");
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_faireval_release(const fs::path& dir, std::size_t n_questions) {
    static const char* kCategories[] = {"generic", "knowledge", "roleplay", "common-sense",
                                        "fermi",   "counterfactual", "coding", "math", "writing"};
    std::string questions, first, second, labels;
    for (std::size_t q = 1; q <= n_questions; ++q) {
        questions += json{{"question_id", q}, {"text", "FairEval question " + std::to_string(q) + "?"},
                          {"category", kCategories[q % 9]}}
                         .dump() + "\n";
        first += json{{"question_id", q}, {"text", "gpt35 answer to question " + std::to_string(q)}}.dump() + "\n";
        second += json{{"question_id", q}, {"text", "vicuna answer to question " + std::to_string(q)}}.dump() + "\n";
        static const char* kLabels[] = {"1", "2", "tie"};
        labels += std::string(kLabels[q % 3]) + "\n";
    }
    write_text(dir / "question.jsonl", questions);
    write_text(dir / "answer" / "answer_gpt35.jsonl", first);
    write_text(dir / "answer" / "answer_vicuna-13b.jsonl", second);
    write_text(dir / "review" / "review_gpt35_vicuna-13b_human.txt", labels);
}

void write_mtbench_release(const fs::path& dir, std::size_t n_questions, std::size_t per_question) {
    static const char* kCategories[] = {"writing", "roleplay", "reasoning", "math",
                                        "coding",  "extraction", "stem", "humanities"};
    static const char* kModels[] = {"gpt-4", "gpt-3.5-turbo", "claude-v1", "vicuna-13b-v1.2", "alpaca-13b",
                                    "llama-13b"};
    static const char* kWinners[] = {"model_a", "model_b", "tie", "model_a", "tie (inconsistent)", "model_b"};
    std::string questions, judgments;
    std::size_t serial = 0;
    for (std::size_t q = 0; q < n_questions; ++q) {
        const std::size_t qid = 81 + q;
        const std::string category = kCategories[q % 8];
        questions += json{{"question_id", qid}, {"category", category},
                          {"turns", {"Question " + std::to_string(qid), "Follow-up " + std::to_string(qid)}}}
                         .dump() + "\n";
        for (std::size_t j = 0; j < per_question; ++j) {
            const std::string a = kModels[j % 6];
            const std::string b = kModels[(j + 1 + q) % 6 == j % 6 ? (j + 2) % 6 : (j + 1 + q) % 6];
            for (int turn = 1; turn <= 2; ++turn) {
                auto conv = [&](const std::string& model) {
                    json c = json::array();
                    c.push_back({{"role", "user"}, {"content", "Question " + std::to_string(qid)}});
                    c.push_back({{"role", "assistant"}, {"content", model + " reply to " + std::to_string(qid)}});
                    if (turn == 2) {
                        c.push_back({{"role", "user"}, {"content", "Follow-up " + std::to_string(qid)}});
                        c.push_back({{"role", "assistant"}, {"content", model + " follow-up reply"}});
                    }
                    return c;
                };
                judgments += json{{"question_id", qid},
                                  {"model_a", a},
                                  {"model_b", b},
                                  {"winner", kWinners[(serial + turn) % 6]},
                                  {"judge", "author_" + std::to_string(j % 4)},
                                  {"conversation_a", conv(a)},
                                  {"conversation_b", conv(b)},
                                  {"turn", turn}}
                                 .dump() + "\n";
            }
            ++serial;
        }
    }
    write_text(dir / "question.jsonl", questions);
    write_text(dir / "human_judgments.jsonl", judgments);
}

void write_llmbar_release(const fs::path& root) {
    const std::pair<const char*, int> subsets[] = {{"Neighbor", 134}, {"GPTInst", 92}, {"GPTOut", 47}, {"Manual", 46}};
    for (const auto& [name, count] : subsets) {
        json arr = json::array();
        for (int i = 0; i < count; ++i) {
            arr.push_back({{"input", std::string(name) + " instruction " + std::to_string(i)},
                           {"output_1", "first output " + std::to_string(i)},
                           {"output_2", "second output " + std::to_string(i)},
                           {"label", 1 + (i % 2)}});
        }
        write_text(root / "Adversarial" / name / "dataset.json", arr.dump(2));
    }
}

void write_instrusum_release(const fs::path& dir, std::size_t n_articles) {
    static const char* kSystems[] = {"gpt-3.5-turbo-0301", "gpt-4-0314", "text-davinci-002", "text-davinci-003",
                                     "hybrid"};
    std::string lines;
    for (std::size_t i = 0; i < n_articles; ++i) {
        json summaries = json::object();
        json overall = json::object();
        for (std::size_t s = 0; s < 5; ++s) {
            summaries[kSystems[s]] = std::string(kSystems[s]) + " summary of article " + std::to_string(i);
            overall[kSystems[s]] = static_cast<int>(1 + (i * (s + 1)) % 5);
        }
        lines += json{{"id", "article-" + std::to_string(i)},
                      {"article", "Body of article " + std::to_string(i) + "."},
                      {"requirement", "Summarize the key facts of article " + std::to_string(i) + "."},
                      {"summaries", summaries},
                      {"overall", overall}}
                     .dump() + "\n";
    }
    write_text(dir / "human_eval.jsonl", lines);
}

namespace {

std::string tag(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "case-%02zu", index);
    return buf;
}

}  // namespace

Dataset synthetic_dataset(std::size_t n, const std::vector<std::string>& rubric) {
    Dataset ds;
    ds.name = rubric.empty() ? "synthetic" : "synthetic_rubric";
    ds.allows_ties = true;
    ds.has_predefined_aspects = !rubric.empty();
    for (std::size_t i = 0; i < n; ++i) {
        EvalInstance inst;
        inst.id = "syn-" + tag(i);
        inst.context = "Task " + tag(i) + ": explain topic number " + std::to_string(i * 7 + 3) + ".";
        inst.response_first = "Alpha response about " + tag(i) + " with detail.";
        inst.response_second = "Beta response about " + tag(i) + ", shorter.";
        inst.human_label = static_cast<PreferenceLabel>(i % 3);
        if (!rubric.empty()) inst.predefined_aspects = rubric;
        inst.task_category = i % 2 == 0 ? "writing" : "reasoning";
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

std::string synthetic_aspect(std::size_t index, std::size_t i) {
    static const char* kPoints[] = {"correctness", "coverage", "tone", "format", "brevity", "examples"};
    return "Does the output for " + tag(index) + " get the " + kPoints[i % 6] + " right (point " +
           std::to_string(i + 1) + ")?";
}

SyntheticAnswers synthetic_answers(std::size_t index, std::size_t k) {
    static const std::vector<std::vector<int>> kWeightRows3 = {{50, 30, 20}, {20, 30, 50}, {40, 40, 20}, {10, 45, 45}};
    SyntheticAnswers out;
    for (std::size_t j = 0; j < k; ++j) {
        const int a = 1 + static_cast<int>((index * 3 + j * 5) % 10);
        const int b = 1 + static_cast<int>((index * 7 + j * 2 + 4) % 10);
        out.scores.emplace_back(a, b);
    }
    if (k == 3) {
        out.weights = kWeightRows3[index % kWeightRows3.size()];
    } else {
        // Equal shares with the remainder on the first aspect, e.g. 34 33 33.
        out.weights.assign(k, static_cast<int>(100 / k));
        out.weights[0] += static_cast<int>(100 % k);
    }
    return out;
}

MockScript synthetic_script(const Dataset& dataset, std::size_t k) {
    MockScript script;
    script.default_reply = "I cannot answer that.";
    auto rule = [](std::vector<std::string> patterns, std::string reply, std::int64_t in, std::int64_t out) {
        MockRule r;
        r.match = MockRule::Match::Substring;
        r.patterns = std::move(patterns);
        r.reply = std::move(reply);
        r.input_tokens = in;
        r.output_tokens = out;
        return r;
    };
    std::vector<MockRule> aggregation, weighting, scoring, generation, direct;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& inst = dataset.instances[i];
        std::vector<std::string> aspects;
        if (inst.predefined_aspects) {
            aspects = *inst.predefined_aspects;
        } else {
            for (std::size_t j = 0; j < k; ++j) aspects.push_back(synthetic_aspect(i, j));
        }
        const auto answers = synthetic_answers(i, aspects.size());
        const auto in = static_cast<std::int64_t>(100 + i);

        // Weighting prompts list every aspect; only they contain the whole enumeration.
        std::vector<std::string> all{inst.context};
        std::string weights;
        for (std::size_t j = 0; j < aspects.size(); ++j) {
            all.push_back(std::to_string(j + 1) + ". " + aspects[j]);
            weights += (j ? " " : "") + std::to_string(answers.weights[j]) + "%";
        }
        weighting.push_back(rule(all, weights, in, 13));

        for (std::size_t j = 0; j < aspects.size(); ++j) {
            const auto [a, b] = answers.scores[j];
            scoring.push_back(rule({inst.context, "\n" + aspects[j] + "\n"},
                                   std::to_string(a) + " " + std::to_string(b), in, 12));
        }

        if (!inst.predefined_aspects) {
            std::string list;
            for (std::size_t j = 0; j < aspects.size(); ++j) list += std::to_string(j + 1) + ". " + aspects[j] + "\n";
            generation.push_back(rule({inst.context}, list, in, 11));
        }
        double overall_a = 0.0, overall_b = 0.0;
        for (std::size_t j = 0; j < aspects.size(); ++j) {
            overall_a += answers.scores[j].first * answers.weights[j] / 100.0;
            overall_b += answers.scores[j].second * answers.weights[j] / 100.0;
        }
        char overall[64];
        std::snprintf(overall, sizeof overall, "%.2f %.2f", overall_a, overall_b);
        aggregation.push_back(rule({inst.context, " | Assistant 1: "}, overall, in, 14));

        const auto [a, b] = answers.scores[0];
        direct.push_back(rule({inst.context, inst.response_first},
                              "Assistant 1: " + std::to_string(a) + "\nAssistant 2: " + std::to_string(b), in, 10));
    }
    for (auto* group : {&aggregation, &weighting, &scoring, &direct, &generation}) {
        for (auto& r : *group) script.rules.push_back(std::move(r));
    }
    return script;
}

}  // namespace dnaeval::testkit
