#include "dnaeval/prompting.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dnaeval {

namespace detail {
extern const std::string kDirectScoringTemplate;
extern const std::string kCoTScoringTemplate;
extern const std::string kAspectGenerationTemplate;
extern const std::string kAspectScoringTemplate;
extern const std::string kWeightProposalTemplate;
extern const std::string kPromptedAggregationTemplate;
}  // namespace detail

namespace {

constexpr std::array<std::pair<Stage, std::string_view>, 6> kStageNames{{
    {Stage::DirectScoring, "direct_scoring"},
    {Stage::CoTScoring, "cot_scoring"},
    {Stage::AspectGeneration, "aspect_generation"},
    {Stage::AspectScoring, "aspect_scoring"},
    {Stage::WeightProposal, "weight_proposal"},
    {Stage::PromptedAggregation, "prompted_aggregation"},
}};

const std::string kDefaultVariant = "default";

std::string normalize_variant(const std::string& variant) {
    return variant.empty() ? kDefaultVariant : variant;
}

bool is_placeholder_char(char c) {
    return (c >= 'a' && c <= 'z') || c == '_';
}

}  // namespace

std::string_view to_string(Stage stage) noexcept {
    for (const auto& [s, name] : kStageNames) {
        if (s == stage) return name;
    }
    return "unknown";
}

Stage stage_from_string(std::string_view name) {
    for (const auto& [s, n] : kStageNames) {
        if (n == name) return s;
    }
    throw Error(ErrorKind::TemplateInvalid, "unknown prompt stage '" + std::string(name) + "'");
}

const std::vector<std::string>& required_placeholders(Stage stage) {
    static const std::vector<std::string> pair{"context", "response_first", "response_second"};
    static const std::vector<std::string> generation{"context", "k"};
    static const std::vector<std::string> aspect{"context", "response_first", "response_second",
                                                 "aspect"};
    static const std::vector<std::string> weighting{"context", "aspects"};
    static const std::vector<std::string> aggregation{"score_rows"};
    switch (stage) {
        case Stage::DirectScoring:
        case Stage::CoTScoring: return pair;
        case Stage::AspectGeneration: return generation;
        case Stage::AspectScoring: return aspect;
        case Stage::WeightProposal: return weighting;
        case Stage::PromptedAggregation: return aggregation;
    }
    return pair;
}

const std::vector<std::string>& allowed_placeholders(Stage stage) {
    static const std::vector<std::string> pair{"context", "response_first", "response_second",
                                               "scale_min", "scale_max"};
    static const std::vector<std::string> generation{"context", "k"};
    static const std::vector<std::string> aspect{"context",   "response_first", "response_second",
                                                 "aspect",    "scale_min",      "scale_max"};
    static const std::vector<std::string> weighting{"context", "aspects", "k"};
    static const std::vector<std::string> aggregation{
        "context", "response_first", "response_second", "aspects",
        "k",       "score_rows",     "scale_min",       "scale_max"};
    switch (stage) {
        case Stage::DirectScoring:
        case Stage::CoTScoring: return pair;
        case Stage::AspectGeneration: return generation;
        case Stage::AspectScoring: return aspect;
        case Stage::WeightProposal: return weighting;
        case Stage::PromptedAggregation: return aggregation;
    }
    return pair;
}

std::vector<std::string> placeholders_in(std::string_view body) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] != '{') continue;
        if (i + 1 < body.size() && body[i + 1] == '{') {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < body.size() && is_placeholder_char(body[j])) ++j;
        if (j < body.size() && body[j] == '}' && j > i + 1) {
            std::string name(body.substr(i + 1, j - i - 1));
            if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
            i = j;
        }
    }
    return out;
}

std::string count_word(std::size_t n) {
    static constexpr std::array<std::string_view, 21> kWords{
        "zero",    "one",     "two",       "three",    "four",     "five",     "six",
        "seven",   "eight",   "nine",      "ten",      "eleven",   "twelve",   "thirteen",
        "fourteen", "fifteen", "sixteen",  "seventeen", "eighteen", "nineteen", "twenty"};
    if (n < kWords.size()) return std::string(kWords[n]);
    return std::to_string(n);
}

std::string format_number(double value) {
    std::array<char, 512> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed);
    if (ec != std::errc{}) return std::to_string(value);
    return std::string(buf.data(), ptr);
}

std::string substitute(std::string_view body, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
        const char c = body[i];
        if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
            out.push_back('{');
            ++i;
            continue;
        }
        if (c == '}' && i + 1 < body.size() && body[i + 1] == '}') {
            out.push_back('}');
            ++i;
            continue;
        }
        if (c == '{') {
            std::size_t j = i + 1;
            while (j < body.size() && is_placeholder_char(body[j])) ++j;
            if (j < body.size() && body[j] == '}' && j > i + 1) {
                const std::string name(body.substr(i + 1, j - i - 1));
                auto it = slots.find(name);
                if (it == slots.end()) {
                    throw Error(ErrorKind::TemplateInvalid, "no value for placeholder {" + name + "}");
                }
                out += it->second;
                i = j;
                continue;
            }
        }
        out.push_back(c);
    }
    return out;
}

void PromptTemplate::validate() const {
    const auto present = placeholders_in(body);
    const auto& allowed = allowed_placeholders(stage);
    for (const auto& name : present) {
        if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
            throw Error(ErrorKind::TemplateInvalid, "placeholder {" + name + "} is not allowed in a " +
                                                        std::string(to_string(stage)) + " template");
        }
    }
    for (const auto& name : required_placeholders(stage)) {
        if (std::find(present.begin(), present.end(), name) == present.end()) {
            throw Error(ErrorKind::TemplateInvalid, std::string(to_string(stage)) +
                                                        " template is missing {" + name + "}");
        }
    }
}

const std::string& default_template_body(Stage stage) {
    switch (stage) {
        case Stage::DirectScoring: return detail::kDirectScoringTemplate;
        case Stage::CoTScoring: return detail::kCoTScoringTemplate;
        case Stage::AspectGeneration: return detail::kAspectGenerationTemplate;
        case Stage::AspectScoring: return detail::kAspectScoringTemplate;
        case Stage::WeightProposal: return detail::kWeightProposalTemplate;
        case Stage::PromptedAggregation: return detail::kPromptedAggregationTemplate;
    }
    return detail::kDirectScoringTemplate;
}

TemplateRegistry TemplateRegistry::defaults() {
    TemplateRegistry reg;
    for (const auto& [stage, name] : kStageNames) {
        reg.add(PromptTemplate{stage, default_template_body(stage), std::nullopt});
    }
    return reg;
}

TemplateRegistry TemplateRegistry::from_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw Error(ErrorKind::IoError, "cannot open template manifest " + manifest.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::TemplateInvalid,
                    "template manifest " + manifest.string() + ": " + e.what());
    }
    if (!doc.contains("templates") || !doc["templates"].is_array()) {
        throw Error(ErrorKind::TemplateInvalid, "template manifest needs a 'templates' array");
    }

    TemplateRegistry reg = defaults();
    const auto base = manifest.parent_path();
    for (const auto& entry : doc["templates"]) {
        if (!entry.contains("stage") || !entry.contains("path")) {
            throw Error(ErrorKind::TemplateInvalid, "manifest entry needs 'stage' and 'path'");
        }
        PromptTemplate tmpl;
        tmpl.stage = stage_from_string(entry["stage"].get<std::string>());
        const std::string bench = entry.value("benchmark", kDefaultVariant);
        if (bench != kDefaultVariant) tmpl.benchmark_variant = bench;

        std::filesystem::path path = entry["path"].get<std::string>();
        if (path.is_relative()) path = base / path;
        std::ifstream tin(path, std::ios::binary);
        if (!tin) throw Error(ErrorKind::TemplateMissing, "cannot open template " + path.string());
        std::ostringstream ss;
        ss << tin.rdbuf();
        tmpl.body = ss.str();
        reg.add(std::move(tmpl));
    }
    return reg;
}

void TemplateRegistry::add(PromptTemplate tmpl) {
    tmpl.validate();
    auto key = std::make_pair(tmpl.stage, normalize_variant(tmpl.benchmark_variant.value_or("")));
    templates_.insert_or_assign(std::move(key), std::move(tmpl));
}

const PromptTemplate& TemplateRegistry::get(Stage stage, const std::string& variant) const {
    if (auto it = templates_.find({stage, normalize_variant(variant)}); it != templates_.end()) {
        return it->second;
    }
    if (auto it = templates_.find({stage, kDefaultVariant}); it != templates_.end()) {
        return it->second;
    }
    throw Error(ErrorKind::TemplateMissing, "no " + std::string(to_string(stage)) +
                                                " template for benchmark '" + variant + "'");
}

PromptRenderer::PromptRenderer(TemplateRegistry registry, std::string benchmark_variant,
                               ScoreScale scale)
    : registry_(std::move(registry)), variant_(std::move(benchmark_variant)), scale_(scale) {}

RenderedPrompt PromptRenderer::render(Stage stage, const EvalInstance& instance,
                                      const std::map<std::string, std::string>& slots) const {
    const auto& tmpl = registry_.get(stage, variant_);
    RenderedPrompt out;
    out.stage = stage;
    out.instance_id = instance.id;
    out.text = substitute(tmpl.body, slots);
    return out;
}

namespace {

std::map<std::string, std::string> pair_slots(const EvalInstance& inst, const ScoreScale& scale) {
    return {{"context", inst.context},
            {"response_first", inst.response_first},
            {"response_second", inst.response_second},
            {"scale_min", format_number(scale.min)},
            {"scale_max", format_number(scale.max)}};
}

std::string enumerate_aspects(const AspectSet& aspects) {
    std::string out;
    for (std::size_t i = 0; i < aspects.size(); ++i) {
        if (i) out += '\n';
        out += std::to_string(i + 1) + ". " + aspects[i].text;
    }
    return out;
}

}  // namespace

RenderedPrompt PromptRenderer::direct_scoring(const EvalInstance& instance) const {
    return render(Stage::DirectScoring, instance, pair_slots(instance, scale_));
}

RenderedPrompt PromptRenderer::cot_scoring(const EvalInstance& instance) const {
    return render(Stage::CoTScoring, instance, pair_slots(instance, scale_));
}

RenderedPrompt PromptRenderer::aspect_generation(const EvalInstance& instance, std::size_t k) const {
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "aspect generation needs k >= 1");
    if (instance.predefined_aspects) {
        throw Error(ErrorKind::PredefinedAspectsPresent,
                    "instance '" + instance.id + "' already has predefined aspects");
    }
    return render(Stage::AspectGeneration, instance,
                  {{"context", instance.context}, {"k", count_word(k)}});
}

RenderedPrompt PromptRenderer::aspect_scoring(const EvalInstance& instance, const std::string& aspect,
                                              std::optional<std::size_t> aspect_index) const {
    if (aspect.empty()) throw Error(ErrorKind::InvalidArgument, "aspect must be nonempty");
    auto slots = pair_slots(instance, scale_);
    slots["aspect"] = aspect;
    auto out = render(Stage::AspectScoring, instance, slots);
    out.aspect_index = aspect_index;
    return out;
}

RenderedPrompt PromptRenderer::weighting(const EvalInstance& instance, const AspectSet& aspects) const {
    return render(Stage::WeightProposal, instance,
                  {{"context", instance.context},
                   {"aspects", enumerate_aspects(aspects)},
                   {"k", count_word(aspects.size())}});
}

RenderedPrompt PromptRenderer::prompted_aggregation(const EvalInstance& instance,
                                                    const AspectSet& aspects,
                                                    const ScoreMatrix& scores) const {
    if (scores.size() == 0 || scores.size() != aspects.size()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "prompted aggregation needs one score row per aspect (" +
                        std::to_string(aspects.size()) + " aspects, " +
                        std::to_string(scores.size()) + " rows)");
    }
    std::string rows;
    for (const auto& row : scores.rows()) {
        if (!rows.empty()) rows += '\n';
        rows += std::to_string(row.aspect_index + 1) + ". " + aspects[row.aspect_index].text +
                " | Assistant 1: " + format_number(row.score_first) +
                " | Assistant 2: " + format_number(row.score_second);
    }
    auto slots = pair_slots(instance, scores.scale());
    slots["aspects"] = enumerate_aspects(aspects);
    slots["k"] = count_word(aspects.size());
    slots["score_rows"] = rows;
    return render(Stage::PromptedAggregation, instance, slots);
}

}  // namespace dnaeval
