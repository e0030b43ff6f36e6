#include <gtest/gtest.h>

#include <cstdlib>

#include "dnaeval/prompting.hpp"
#include "fixtures.hpp"

using namespace dnaeval;

namespace {

EvalInstance sample(std::optional<std::vector<std::string>> aspects = std::nullopt) {
    return {"i1", "Name a prime number.", "Seven is prime.", "Nine is prime.", PreferenceLabel::First,
            std::move(aspects), std::nullopt};
}

std::filesystem::path template_dir() {
    if (const char* env = std::getenv("DNAEVAL_TEMPLATE_DIR")) return env;
    return std::filesystem::path(__FILE__).parent_path().parent_path().parent_path() / "templates";
}

}  // namespace

TEST(Stage, NamesRoundTrip) {
    for (auto s : {Stage::DirectScoring, Stage::CoTScoring, Stage::AspectGeneration, Stage::AspectScoring,
                   Stage::WeightProposal, Stage::PromptedAggregation}) {
        EXPECT_EQ(stage_from_string(to_string(s)), s);
    }
    EXPECT_ANY_THROW(stage_from_string("nope"));
}

TEST(CountWord, SmallNumbersSpelledOut) {
    EXPECT_EQ(count_word(3), "three");
    EXPECT_EQ(count_word(6), "six");
    EXPECT_EQ(count_word(25), "25");
}

TEST(Substitute, SinglePassAndEscapes) {
    EXPECT_EQ(substitute("a {x} b", {{"x", "{y}"}, {"y", "no"}}), "a {y} b");
    EXPECT_EQ(substitute("{{literal}} {x}", {{"x", "1"}}), "{literal} 1");
    EXPECT_THROW(substitute("{missing}", {}), Error);
}

TEST(PlaceholdersIn, FirstAppearanceOrder) {
    EXPECT_EQ(placeholders_in("{b} {a} {b} {{c}}"), (std::vector<std::string>{"b", "a"}));
}

TEST(FormatNumber, ShortestFixed) {
    EXPECT_EQ(format_number(8), "8");
    EXPECT_EQ(format_number(7.5), "7.5");
    EXPECT_EQ(format_number(1e-5), "0.00001");
}

TEST(PromptTemplate, ValidateRequiredAndUnknown) {
    PromptTemplate ok{Stage::WeightProposal, "{context} {aspects}", std::nullopt};
    EXPECT_NO_THROW(ok.validate());
    PromptTemplate missing{Stage::WeightProposal, "{context}", std::nullopt};
    try {
        missing.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TemplateInvalid);
    }
    PromptTemplate leaky{Stage::WeightProposal, "{context} {aspects} {response_first}", std::nullopt};
    EXPECT_THROW(leaky.validate(), Error);
}

TEST(TemplateRegistry, DefaultsCoverEveryStage) {
    const auto reg = TemplateRegistry::defaults();
    for (auto s : {Stage::DirectScoring, Stage::CoTScoring, Stage::AspectGeneration, Stage::AspectScoring,
                   Stage::WeightProposal, Stage::PromptedAggregation}) {
        EXPECT_FALSE(reg.get(s).body.empty());
        EXPECT_EQ(reg.get(s, "unknown-benchmark").body, reg.get(s).body);
    }
}

TEST(TemplateRegistry, ManifestVariants) {
    const auto reg = TemplateRegistry::from_manifest(template_dir() / "manifest.json");
    EXPECT_NE(reg.get(Stage::DirectScoring, "llmbar").body, reg.get(Stage::DirectScoring).body);
    EXPECT_NE(reg.get(Stage::WeightProposal, "instrusum").body, reg.get(Stage::WeightProposal).body);
    EXPECT_EQ(reg.get(Stage::AspectScoring, "instrusum").body, reg.get(Stage::AspectScoring).body);
}

TEST(TemplateRegistry, ManifestWithMissingFile) {
    testkit::TempDir dir;
    testkit::write_text(dir / "m.json", R"({"templates":[{"stage":"direct_scoring","path":"nope.txt"}]})");
    try {
        TemplateRegistry::from_manifest(dir / "m.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TemplateMissing);
    }
}

TEST(PromptRenderer, DirectScoringHasBothResponses) {
    PromptRenderer r;
    const auto p = r.direct_scoring(sample());
    EXPECT_EQ(p.stage, Stage::DirectScoring);
    EXPECT_EQ(p.instance_id, "i1");
    EXPECT_NE(p.text.find("Seven is prime."), std::string::npos);
    EXPECT_NE(p.text.find("Nine is prime."), std::string::npos);
    EXPECT_NE(p.text.find("1 to 10"), std::string::npos);
}

TEST(PromptRenderer, ScaleIsConfigurable) {
    PromptRenderer r(TemplateRegistry::defaults(), "", ScoreScale{0, 5});
    EXPECT_NE(r.direct_scoring(sample()).text.find("0 to 5"), std::string::npos);
}

TEST(PromptRenderer, AspectGenerationOmitsResponses) {
    PromptRenderer r;
    const auto p = r.aspect_generation(sample(), 3);
    EXPECT_NE(p.text.find("three"), std::string::npos);
    EXPECT_NE(p.text.find("Name a prime number."), std::string::npos);
    EXPECT_EQ(p.text.find("Seven is prime."), std::string::npos);
    EXPECT_EQ(p.text.find("Nine is prime."), std::string::npos);
}

TEST(PromptRenderer, AspectGenerationRefusesRubricInstances) {
    PromptRenderer r;
    try {
        r.aspect_generation(sample(std::vector<std::string>{"accuracy"}), 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::PredefinedAspectsPresent);
    }
}

TEST(PromptRenderer, AspectScoringMentionsOnlyItsAspect) {
    PromptRenderer r;
    const auto p = r.aspect_scoring(sample(), "correctness", 1);
    EXPECT_EQ(p.aspect_index, std::optional<std::size_t>(1));
    EXPECT_NE(p.text.find("correctness"), std::string::npos);
    EXPECT_EQ(p.text.find("fluency"), std::string::npos);
}

TEST(PromptRenderer, WeightingListsAspectsWithoutResponses) {
    PromptRenderer r;
    const auto aspects = AspectSet::from_texts({"correctness", "fluency", "brevity"}, AspectSource::Generated);
    const auto p = r.weighting(sample(), aspects);
    EXPECT_NE(p.text.find("1. correctness\n2. fluency\n3. brevity"), std::string::npos);
    EXPECT_EQ(p.text.find("Seven is prime."), std::string::npos);
    EXPECT_EQ(p.text.find("Nine is prime."), std::string::npos);
}

TEST(PromptRenderer, PromptedAggregationRows) {
    PromptRenderer r;
    const auto aspects = AspectSet::from_texts({"correctness", "fluency"}, AspectSource::Generated);
    const ScoreMatrix m({{0, 7, 8}, {1, 9.5, 6}}, ScoreScale{});
    const auto p = r.prompted_aggregation(sample(), aspects, m);
    EXPECT_NE(p.text.find("1. correctness | Assistant 1: 7 | Assistant 2: 8"), std::string::npos);
    EXPECT_NE(p.text.find("2. fluency | Assistant 1: 9.5 | Assistant 2: 6"), std::string::npos);
    const ScoreMatrix short_m({{0, 7, 8}}, ScoreScale{});
    try {
        r.prompted_aggregation(sample(), aspects, short_m);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
    }
}

TEST(PromptRenderer, ValuesAreNotReexpanded) {
    PromptRenderer r;
    auto inst = sample();
    inst.response_first = "{response_second}";
    const auto p = r.direct_scoring(inst);
    EXPECT_NE(p.text.find("{response_second}"), std::string::npos);
}

TEST(PromptRenderer, InstrusumWeightingTalksAboutSummaries) {
    PromptRenderer r(TemplateRegistry::from_manifest(template_dir() / "manifest.json"), "instrusum");
    const auto aspects = AspectSet::from_texts({"faithfulness", "coverage"}, AspectSource::Generated);
    EXPECT_NE(r.weighting(sample(), aspects).text.find("summary"), std::string::npos);
}
