#include "dnaeval/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dnaeval {

using json = nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
    throw Error(ErrorKind::SchemaError, where + ": " + what);
}

[[noreturn]] void layout_error(const std::string& what) {
    throw Error(ErrorKind::UpstreamLayoutError, what);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) layout_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) layout_error("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            layout_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        fn(rec, line_no);
    }
}

std::string string_field(const json& rec, const char* field, const std::string& where) {
    if (!rec.contains(field)) layout_error(where + ": missing field '" + field + "'");
    const auto& v = rec.at(field);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    layout_error(where + ": field '" + field + "' has the wrong type");
}

}  // namespace

const std::vector<std::string>& faireval_aspects() {
    static const std::vector<std::string> kAspects{"helpfulness", "relevance", "accuracy",
                                                   "level of details"};
    return kAspects;
}

const std::vector<std::string>& mtbench_aspects() {
    static const std::vector<std::string> kAspects{"helpfulness", "relevance", "accuracy",
                                                   "creativity",  "depth",     "detail"};
    return kAspects;
}

void Dataset::validate() const {
    std::set<std::string_view> ids;
    const std::vector<std::string>* rubric = nullptr;
    for (const auto& inst : instances) {
        inst.validate();
        if (!ids.insert(inst.id).second) {
            throw Error(ErrorKind::DuplicateId, "duplicate instance id '" + inst.id + "'");
        }
        if (!allows_ties && inst.human_label == PreferenceLabel::Tie) {
            schema_error("instance '" + inst.id + "'", "tie label in a dataset without ties");
        }
        if (has_predefined_aspects) {
            if (!inst.predefined_aspects) {
                schema_error("instance '" + inst.id + "'", "missing predefined_aspects");
            }
            if (rubric == nullptr) {
                rubric = &*inst.predefined_aspects;
            } else if (*rubric != *inst.predefined_aspects) {
                schema_error("instance '" + inst.id + "'", "predefined_aspects differ from the dataset rubric");
            }
        }
    }
}

const EvalInstance* Dataset::find(std::string_view id) const {
    for (const auto& inst : instances) {
        if (inst.id == id) return &inst;
    }
    return nullptr;
}

namespace {

EvalInstance instance_from_json(const json& rec, const std::string& where) {
    if (!rec.is_object()) schema_error(where, "record is not an object");
    auto text = [&](const char* field) {
        if (!rec.contains(field)) schema_error(where, std::string("missing field '") + field + "'");
        if (!rec[field].is_string()) schema_error(where, std::string("field '") + field + "' must be a string");
        return rec[field].get<std::string>();
    };
    EvalInstance inst;
    inst.id = text("id");
    inst.context = text("context");
    inst.response_first = text("response_first");
    inst.response_second = text("response_second");
    if (!rec.contains("human_label")) schema_error(where, "missing field 'human_label'");
    if (!rec["human_label"].is_number_integer()) schema_error(where, "human_label must be 0, 1 or 2");
    try {
        inst.human_label = label_from_int(rec["human_label"].get<int>());
    } catch (const Error& e) {
        schema_error(where, e.what());
    }
    if (rec.contains("predefined_aspects") && !rec["predefined_aspects"].is_null()) {
        const auto& a = rec["predefined_aspects"];
        if (!a.is_array()) schema_error(where, "predefined_aspects must be a list of strings");
        std::vector<std::string> aspects;
        for (const auto& item : a) {
            if (!item.is_string()) schema_error(where, "predefined_aspects must be a list of strings");
            aspects.push_back(item.get<std::string>());
        }
        inst.predefined_aspects = std::move(aspects);
    }
    if (rec.contains("task_category") && !rec["task_category"].is_null()) {
        if (!rec["task_category"].is_string()) schema_error(where, "task_category must be a string");
        inst.task_category = rec["task_category"].get<std::string>();
    }
    try {
        inst.validate();
    } catch (const Error& e) {
        schema_error(where, e.what());
    }
    return inst;
}

json instance_to_json(const EvalInstance& inst) {
    json rec = {
        {"id", inst.id},
        {"context", inst.context},
        {"response_first", inst.response_first},
        {"response_second", inst.response_second},
        {"human_label", to_int(inst.human_label)},
    };
    if (inst.predefined_aspects) rec["predefined_aspects"] = *inst.predefined_aspects;
    if (inst.task_category) rec["task_category"] = *inst.task_category;
    return rec;
}

}  // namespace

Dataset parse_canonical(std::istream& in, const std::string& source_name, const LoadOptions& options) {
    Dataset ds;
    ds.name = options.name.value_or(std::filesystem::path(source_name).stem().string());
    std::optional<bool> header_ties;
    std::optional<bool> header_rubric;
    std::map<std::string, std::size_t> seen;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = source_name + ":" + std::to_string(line_no);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            schema_error(where, std::string("not valid JSON: ") + e.what());
        }
        if (rec.is_object() && rec.contains("dataset") && !rec.contains("id")) {
            if (!ds.instances.empty()) schema_error(where, "dataset header must be the first record");
            const auto& h = rec["dataset"];
            if (!h.is_object()) schema_error(where, "dataset header must be an object");
            if (h.contains("name") && !options.name) ds.name = h["name"].get<std::string>();
            if (h.contains("allows_ties")) header_ties = h["allows_ties"].get<bool>();
            if (h.contains("has_predefined_aspects")) header_rubric = h["has_predefined_aspects"].get<bool>();
            continue;
        }
        auto inst = instance_from_json(rec, where);
        if (auto [it, inserted] = seen.emplace(inst.id, line_no); !inserted) {
            throw Error(ErrorKind::DuplicateId, where + ": duplicate id '" + inst.id +
                                                    "' (first seen on line " +
                                                    std::to_string(it->second) + ")");
        }
        ds.allows_ties = options.allows_ties.value_or(header_ties.value_or(true));
        if (!ds.allows_ties && inst.human_label == PreferenceLabel::Tie) {
            schema_error(where, "human_label 0 (tie) in a dataset that has no ties");
        }
        ds.instances.push_back(std::move(inst));
    }
    ds.allows_ties = options.allows_ties.value_or(header_ties.value_or(true));

    const bool uniform_rubric =
        !ds.instances.empty() &&
        std::all_of(ds.instances.begin(), ds.instances.end(), [&](const EvalInstance& i) {
            return i.predefined_aspects && *i.predefined_aspects == *ds.instances.front().predefined_aspects;
        });
    if (header_rubric.value_or(false) && !uniform_rubric && !ds.instances.empty()) {
        schema_error(source_name, "header declares a shared rubric but instances disagree");
    }
    ds.has_predefined_aspects = header_rubric.value_or(uniform_rubric);
    ds.validate();
    return ds;
}

Dataset load_canonical(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open dataset " + path.string());
    return parse_canonical(in, path.string(), options);
}

std::string serialize_canonical(const Dataset& dataset) {
    std::string out;
    json header = {{"dataset",
                    {{"name", dataset.name},
                     {"allows_ties", dataset.allows_ties},
                     {"has_predefined_aspects", dataset.has_predefined_aspects}}}};
    out += header.dump();
    out += '\n';
    for (const auto& inst : dataset.instances) {
        out += instance_to_json(inst).dump();
        out += '\n';
    }
    return out;
}

void save_canonical(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << serialize_canonical(dataset);
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

const std::vector<std::string>& benchmark_formats() {
    static const std::vector<std::string> kFormats{"faireval", "mtbench400", "llmbar_adversarial",
                                                   "instrusum_pairs"};
    return kFormats;
}

namespace {

PreferenceLabel parse_upstream_label(std::string token, const std::string& where) {
    token.erase(0, token.find_first_not_of(" \t\r"));
    token.erase(token.find_last_not_of(" \t\r") + 1);
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (token == "1") return PreferenceLabel::First;
    if (token == "2") return PreferenceLabel::Second;
    if (token == "0" || token == "3" || token == "tie") return PreferenceLabel::Tie;
    layout_error(where + ": unrecognized label '" + token + "'");
}

Dataset import_faireval(const std::filesystem::path& dir) {
    const auto questions_path = dir / "question.jsonl";
    struct Question {
        std::string id;
        std::string text;
        std::optional<std::string> category;
    };
    std::vector<Question> questions;
    for_each_json_line(questions_path, [&](const json& rec, std::size_t line) {
        const std::string where = questions_path.string() + ":" + std::to_string(line);
        Question q{string_field(rec, "question_id", where), string_field(rec, "text", where), {}};
        if (rec.contains("category") && rec["category"].is_string()) q.category = rec["category"].get<std::string>();
        questions.push_back(std::move(q));
    });

    auto load_answers = [](const std::filesystem::path& path) {
        std::map<std::string, std::string> answers;
        for_each_json_line(path, [&](const json& rec, std::size_t line) {
            const std::string where = path.string() + ":" + std::to_string(line);
            answers[string_field(rec, "question_id", where)] = string_field(rec, "text", where);
        });
        return answers;
    };
    const auto first = load_answers(dir / "answer" / "answer_gpt35.jsonl");
    const auto second = load_answers(dir / "answer" / "answer_vicuna-13b.jsonl");

    const auto labels_path = dir / "review" / "review_gpt35_vicuna-13b_human.txt";
    std::vector<PreferenceLabel> labels;
    {
        std::istringstream in(read_file(labels_path));
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            labels.push_back(parse_upstream_label(line, labels_path.string() + ":" + std::to_string(line_no)));
        }
    }
    if (labels.size() != questions.size()) {
        layout_error(labels_path.string() + " has " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(questions.size()) + " questions");
    }

    Dataset ds;
    ds.name = "faireval";
    ds.allows_ties = true;
    ds.has_predefined_aspects = true;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        const auto& q = questions[i];
        auto a = first.find(q.id);
        auto b = second.find(q.id);
        if (a == first.end() || b == second.end()) {
            layout_error("question " + q.id + " lacks an answer from both systems");
        }
        EvalInstance inst;
        inst.id = "faireval-" + q.id;
        inst.context = q.text;
        inst.response_first = a->second;
        inst.response_second = b->second;
        inst.human_label = labels[i];
        inst.predefined_aspects = faireval_aspects();
        inst.task_category = q.category;
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

std::string turn_content(const json& conversation, std::size_t index, const std::string& where) {
    if (!conversation.is_array() || conversation.size() <= index) {
        layout_error(where + ": conversation is too short");
    }
    return string_field(conversation[index], "content", where);
}

Dataset import_mtbench(const std::filesystem::path& source, const ImportOptions& options) {
    const bool is_dir = std::filesystem::is_directory(source);
    const auto judgments = is_dir ? source / "human_judgments.jsonl" : source;
    const auto questions_path = (is_dir ? source : source.parent_path()) / "question.jsonl";

    std::map<std::string, std::string> categories;
    if (std::filesystem::exists(questions_path)) {
        for_each_json_line(questions_path, [&](const json& rec, std::size_t line) {
            const std::string where = questions_path.string() + ":" + std::to_string(line);
            if (rec.contains("category")) {
                categories[string_field(rec, "question_id", where)] = string_field(rec, "category", where);
            }
        });
    }

    Dataset ds;
    ds.name = "mtbench400";
    ds.allows_ties = true;
    ds.has_predefined_aspects = true;
    std::map<std::string, int> id_counts;
    for_each_json_line(judgments, [&](const json& rec, std::size_t line) {
        const std::string where = judgments.string() + ":" + std::to_string(line);
        const int turn = rec.value("turn", 1);
        if (turn != 1) return;
        const auto qid = string_field(rec, "question_id", where);
        const auto winner = string_field(rec, "winner", where);
        PreferenceLabel label;
        if (winner == "model_a") label = PreferenceLabel::First;
        else if (winner == "model_b") label = PreferenceLabel::Second;
        else if (winner.rfind("tie", 0) == 0) label = PreferenceLabel::Tie;
        else layout_error(where + ": unrecognized winner '" + winner + "'");

        EvalInstance inst;
        std::string base = "mtbench-" + qid + "-" + string_field(rec, "model_a", where) + "-" +
                           string_field(rec, "model_b", where) + "-" + rec.value("judge", "human");
        const int n = id_counts[base]++;
        inst.id = n == 0 ? base : base + "#" + std::to_string(n);
        if (!rec.contains("conversation_a") || !rec.contains("conversation_b")) {
            layout_error(where + ": missing conversation_a/conversation_b");
        }
        inst.context = turn_content(rec["conversation_a"], 0, where);
        inst.response_first = turn_content(rec["conversation_a"], 1, where);
        inst.response_second = turn_content(rec["conversation_b"], 1, where);
        inst.human_label = label;
        inst.predefined_aspects = mtbench_aspects();
        if (auto it = categories.find(qid); it != categories.end()) {
            inst.task_category = it->second;
        } else if (rec.contains("category") && rec["category"].is_string()) {
            inst.task_category = rec["category"].get<std::string>();
        } else {
            layout_error(where + ": no task category for question " + qid +
                         " (expected question.jsonl next to the judgments)");
        }
        ds.instances.push_back(std::move(inst));
    });

    if (ds.instances.size() > options.mtbench_sample_size) {
        if (!options.seed) {
            throw Error(ErrorKind::InvalidArgument,
                        "mtbench400 samples " + std::to_string(options.mtbench_sample_size) + " of " +
                            std::to_string(ds.instances.size()) + " single-turn items and needs an explicit seed");
        }
        ds = stratified_sample(ds, options.mtbench_sample_size, "context", *options.seed);
        ds.name = "mtbench400";
    }
    return ds;
}

Dataset import_llmbar(const std::filesystem::path& source) {
    static const std::vector<std::string> kSubsets{"Neighbor", "GPTInst", "GPTOut", "Manual"};
    auto root = source;
    if (std::filesystem::is_directory(source / "Adversarial")) root = source / "Adversarial";
    else if (std::filesystem::is_directory(source / "LLMBar" / "Adversarial")) root = source / "LLMBar" / "Adversarial";

    Dataset ds;
    ds.name = "llmbar_adversarial";
    ds.allows_ties = false;
    ds.has_predefined_aspects = false;
    for (const auto& subset : kSubsets) {
        const auto path = root / subset / "dataset.json";
        json doc;
        try {
            doc = json::parse(read_file(path));
        } catch (const json::exception& e) {
            layout_error(path.string() + ": " + e.what());
        }
        if (!doc.is_array()) layout_error(path.string() + ": expected a JSON array");
        for (std::size_t i = 0; i < doc.size(); ++i) {
            const std::string where = path.string() + "[" + std::to_string(i) + "]";
            const auto& rec = doc[i];
            EvalInstance inst;
            inst.id = "llmbar-" + subset + "-" + std::to_string(i);
            inst.context = string_field(rec, "input", where);
            inst.response_first = string_field(rec, "output_1", where);
            inst.response_second = string_field(rec, "output_2", where);
            const auto label = parse_upstream_label(string_field(rec, "label", where), where);
            if (label == PreferenceLabel::Tie) layout_error(where + ": LLMBar items cannot be ties");
            inst.human_label = label;
            inst.task_category = subset;
            ds.instances.push_back(std::move(inst));
        }
    }
    return ds;
}

Dataset import_instrusum(const std::filesystem::path& source, const ImportOptions& options) {
    const auto path = std::filesystem::is_directory(source) ? source / "human_eval.jsonl" : source;
    Dataset ds;
    ds.name = "instrusum_pairs";
    ds.allows_ties = true;
    ds.has_predefined_aspects = false;
    for_each_json_line(path, [&](const json& rec, std::size_t line) {
        const std::string where = path.string() + ":" + std::to_string(line);
        if (!rec.contains("summaries") || !rec.contains("overall")) {
            layout_error(where + ": missing 'summaries' or 'overall'");
        }
        const auto& summaries = rec["summaries"];
        const auto& overall = rec["overall"];
        for (const auto* sys : {&options.instrusum_first, &options.instrusum_second}) {
            if (!summaries.contains(*sys) || !overall.contains(*sys)) {
                layout_error(where + ": no summary or rating for system '" + *sys + "'");
            }
        }
        const double r1 = overall[options.instrusum_first].get<double>();
        const double r2 = overall[options.instrusum_second].get<double>();

        EvalInstance inst;
        inst.id = "instrusum-" + string_field(rec, "id", where);
        inst.context = "Article:\n" + string_field(rec, "article", where) +
                       "\n\nSummary requirement:\n" + string_field(rec, "requirement", where);
        inst.response_first = summaries[options.instrusum_first].get<std::string>();
        inst.response_second = summaries[options.instrusum_second].get<std::string>();
        inst.human_label = decide(r1, r2, 0.0);
        inst.task_category = "summarization";
        ds.instances.push_back(std::move(inst));
    });
    return ds;
}

}  // namespace

Dataset import_benchmark(std::string_view format, const std::filesystem::path& source,
                         const ImportOptions& options) {
    if (!std::filesystem::exists(source)) {
        throw Error(ErrorKind::UpstreamLayoutError, "source path does not exist: " + source.string());
    }
    Dataset ds;
    if (format == "faireval") ds = import_faireval(source);
    else if (format == "mtbench400") ds = import_mtbench(source, options);
    else if (format == "llmbar_adversarial") ds = import_llmbar(source);
    else if (format == "instrusum_pairs") ds = import_instrusum(source, options);
    else throw Error(ErrorKind::UnknownFormat, "unknown benchmark format '" + std::string(format) + "'");

    try {
        ds.validate();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidArgument) throw;
        throw Error(ErrorKind::UpstreamLayoutError, e.what());
    }
    return ds;
}

Dataset stratified_sample(const Dataset& dataset, std::size_t n, std::string_view stratum_field,
                          std::uint64_t seed) {
    if (n > dataset.size()) {
        throw Error(ErrorKind::InvalidArgument, "cannot sample " + std::to_string(n) + " of " +
                                                    std::to_string(dataset.size()) + " instances");
    }
    if (stratum_field != "task_category" && stratum_field != "context") {
        throw Error(ErrorKind::MissingStratumField, "unsupported stratum field '" + std::string(stratum_field) + "'");
    }

    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
        const auto& inst = dataset.instances[i];
        std::string key;
        if (stratum_field == "context") {
            key = inst.context;
        } else {
            if (!inst.task_category) {
                throw Error(ErrorKind::MissingStratumField,
                            "instance '" + inst.id + "' has no task_category");
            }
            key = *inst.task_category;
        }
        auto [it, inserted] = strata.try_emplace(key);
        if (inserted) order.push_back(key);
        it->second.push_back(i);
    }

    const std::size_t total = dataset.size();
    struct Quota {
        std::size_t stratum;
        std::size_t take;
        std::size_t remainder;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < order.size(); ++s) {
        const std::size_t size = strata[order[s]].size();
        quotas.push_back({s, n * size / total, n * size % total});
        assigned += quotas.back().take;
    }
    std::vector<std::size_t> by_remainder(quotas.size());
    std::iota(by_remainder.begin(), by_remainder.end(), 0);
    std::stable_sort(by_remainder.begin(), by_remainder.end(), [&](std::size_t a, std::size_t b) {
        return quotas[a].remainder > quotas[b].remainder;
    });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++quotas[by_remainder[i]].take;

    // Fisher-Yates with an explicit modulo draw so the sample only depends on mt19937_64.
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    chosen.reserve(n);
    for (const auto& q : quotas) {
        auto members = strata[order[q.stratum]];
        for (std::size_t i = 0; i < q.take; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng() % (members.size() - i));
            std::swap(members[i], members[j]);
            chosen.push_back(members[i]);
        }
    }
    std::sort(chosen.begin(), chosen.end());

    Dataset out;
    out.name = dataset.name;
    out.allows_ties = dataset.allows_ties;
    out.has_predefined_aspects = dataset.has_predefined_aspects;
    for (auto idx : chosen) out.instances.push_back(dataset.instances[idx]);
    return out;
}

}  // namespace dnaeval
