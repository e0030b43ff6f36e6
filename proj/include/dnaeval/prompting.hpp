#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dnaeval/core.hpp"

namespace dnaeval {

enum class Stage {
    DirectScoring,
    CoTScoring,
    AspectGeneration,
    AspectScoring,
    WeightProposal,
    PromptedAggregation,
};

std::string_view to_string(Stage stage) noexcept;
/// Accepts the snake_case names used in manifests ("direct_scoring", ...).
Stage stage_from_string(std::string_view name);

/// Placeholders a template body may use.
///   {context} {response_first} {response_second} {aspect} {aspects} {k} {score_rows}
///   {scale_min} {scale_max}
/// `{{` and `}}` render as literal braces.
struct PromptTemplate {
    Stage stage = Stage::DirectScoring;
    std::string body;
    std::optional<std::string> benchmark_variant;

    /// Throws TemplateInvalid if a required placeholder is missing or an unknown one is present.
    void validate() const;
};

struct RenderedPrompt {
    Stage stage = Stage::DirectScoring;
    std::string text;
    std::string instance_id;
    std::optional<std::size_t> aspect_index;

    friend bool operator==(const RenderedPrompt&, const RenderedPrompt&) = default;
};

/// Placeholder names required and allowed for a stage.
const std::vector<std::string>& required_placeholders(Stage stage);
const std::vector<std::string>& allowed_placeholders(Stage stage);

/// Names of placeholders that appear in a template body, in order of first appearance.
std::vector<std::string> placeholders_in(std::string_view body);

/// "three" for 3 and so on up to twenty; digits beyond that.
std::string count_word(std::size_t n);

/// Immutable lookup of templates by (stage, benchmark variant). A variant with no override
/// falls back to the default template for the stage.
class TemplateRegistry {
public:
    /// Registry holding the built-in default for every stage.
    static TemplateRegistry defaults();

    /// Loads a JSON manifest: {"templates": [{"stage": ..., "benchmark": ..., "path": ...}]}.
    /// Relative paths resolve against the manifest's directory. Entries without a benchmark
    /// (or with "default") replace the built-in default for their stage.
    static TemplateRegistry from_manifest(const std::filesystem::path& manifest);

    /// Adds or replaces a template after validating it.
    void add(PromptTemplate tmpl);

    /// Throws TemplateMissing when neither the variant nor a default exists.
    const PromptTemplate& get(Stage stage, const std::string& variant = {}) const;

private:
    std::map<std::pair<Stage, std::string>, PromptTemplate> templates_;
};

/// Built-in default body for a stage.
const std::string& default_template_body(Stage stage);

/// Renders prompts for one benchmark variant.
class PromptRenderer {
public:
    explicit PromptRenderer(TemplateRegistry registry = TemplateRegistry::defaults(),
                            std::string benchmark_variant = {}, ScoreScale scale = {});

    RenderedPrompt direct_scoring(const EvalInstance& instance) const;
    RenderedPrompt cot_scoring(const EvalInstance& instance) const;
    /// Throws PredefinedAspectsPresent when the instance already carries a rubric.
    RenderedPrompt aspect_generation(const EvalInstance& instance, std::size_t k) const;
    RenderedPrompt aspect_scoring(const EvalInstance& instance, const std::string& aspect,
                                  std::optional<std::size_t> aspect_index = std::nullopt) const;
    RenderedPrompt weighting(const EvalInstance& instance, const AspectSet& aspects) const;
    /// Throws DimensionMismatch unless aspects.size() == scores.size().
    RenderedPrompt prompted_aggregation(const EvalInstance& instance, const AspectSet& aspects,
                                        const ScoreMatrix& scores) const;

    const std::string& benchmark_variant() const noexcept { return variant_; }
    const ScoreScale& scale() const noexcept { return scale_; }

private:
    RenderedPrompt render(Stage stage, const EvalInstance& instance,
                          const std::map<std::string, std::string>& slots) const;

    TemplateRegistry registry_;
    std::string variant_;
    ScoreScale scale_;
};

/// Single-pass substitution. Values are inserted verbatim and never re-expanded.
/// Throws TemplateInvalid for a placeholder with no slot value.
std::string substitute(std::string_view body, const std::map<std::string, std::string>& slots);

/// Numeric formatting used inside prompts: shortest round-trip fixed notation ("8", "7.5").
std::string format_number(double value);

}  // namespace dnaeval
