#include "dnaeval/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace dnaeval {

PreferenceLabel label_from_int(int value) {
    switch (value) {
        case 0: return PreferenceLabel::Tie;
        case 1: return PreferenceLabel::First;
        case 2: return PreferenceLabel::Second;
        default:
            throw Error(ErrorKind::SchemaError,
                        "preference label must be 0, 1 or 2, got " + std::to_string(value));
    }
}

int to_int(PreferenceLabel label) noexcept { return static_cast<int>(label); }

std::string_view to_string(PreferenceLabel label) noexcept {
    switch (label) {
        case PreferenceLabel::First: return "first";
        case PreferenceLabel::Second: return "second";
        case PreferenceLabel::Tie: return "tie";
    }
    return "tie";
}

PreferenceLabel swapped(PreferenceLabel label) noexcept {
    switch (label) {
        case PreferenceLabel::First: return PreferenceLabel::Second;
        case PreferenceLabel::Second: return PreferenceLabel::First;
        case PreferenceLabel::Tie: return PreferenceLabel::Tie;
    }
    return label;
}

void EvalInstance::validate() const {
    auto require = [this](const std::string& value, const char* field) {
        if (value.empty()) {
            throw Error(ErrorKind::SchemaError,
                        "instance '" + id + "': field '" + field + "' must be nonempty");
        }
    };
    require(id, "id");
    require(context, "context");
    require(response_first, "response_first");
    require(response_second, "response_second");
    if (predefined_aspects) {
        // Reuse AspectSet's checks so a bad rubric fails at load time.
        try {
            AspectSet::from_texts(*predefined_aspects, AspectSource::Predefined);
        } catch (const Error& e) {
            throw Error(ErrorKind::SchemaError, "instance '" + id + "': " + e.what());
        }
    }
}

EvalInstance EvalInstance::with_swapped_responses() const {
    EvalInstance out = *this;
    std::swap(out.response_first, out.response_second);
    out.human_label = swapped(human_label);
    return out;
}

std::string_view to_string(AspectSource source) noexcept {
    return source == AspectSource::Predefined ? "predefined" : "generated";
}

AspectSet::AspectSet(std::vector<Aspect> aspects) : aspects_(std::move(aspects)) {
    if (aspects_.empty()) {
        throw Error(ErrorKind::InvalidArgument, "aspect set must contain at least one aspect");
    }
    std::set<std::string_view> seen;
    for (const auto& a : aspects_) {
        if (a.text.empty()) {
            throw Error(ErrorKind::InvalidArgument, "aspect text must be nonempty");
        }
        if (a.source != aspects_.front().source) {
            throw Error(ErrorKind::InvalidArgument, "aspects in one set must share a source");
        }
        if (!seen.insert(a.text).second) {
            throw Error(ErrorKind::InvalidArgument, "duplicate aspect: " + a.text);
        }
    }
}

AspectSet AspectSet::from_texts(const std::vector<std::string>& texts, AspectSource source) {
    std::vector<Aspect> aspects;
    aspects.reserve(texts.size());
    for (const auto& t : texts) aspects.push_back({t, source});
    return AspectSet(std::move(aspects));
}

std::vector<std::string> AspectSet::texts() const {
    std::vector<std::string> out;
    out.reserve(aspects_.size());
    for (const auto& a : aspects_) out.push_back(a.text);
    return out;
}

ScoreMatrix::ScoreMatrix(std::vector<ScoreRow> rows, ScoreScale scale)
    : rows_(std::move(rows)), scale_(scale) {
    if (!(std::isfinite(scale_.min) && std::isfinite(scale_.max)) || !(scale_.min < scale_.max)) {
        throw Error(ErrorKind::InvalidArgument, "score scale requires min < max");
    }
    std::sort(rows_.begin(), rows_.end(),
              [](const ScoreRow& a, const ScoreRow& b) { return a.aspect_index < b.aspect_index; });
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (rows_[i].aspect_index != i) {
            throw Error(ErrorKind::InvalidArgument,
                        "score matrix needs exactly one row per aspect index 0.." +
                            std::to_string(rows_.size() - 1));
        }
        if (!scale_.contains(rows_[i].score_first) || !scale_.contains(rows_[i].score_second)) {
            throw Error(ErrorKind::InvalidArgument,
                        "score outside scale in row " + std::to_string(i));
        }
    }
}

std::vector<double> ScoreMatrix::column(Candidate candidate) const {
    std::vector<double> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) {
        out.push_back(candidate == Candidate::First ? r.score_first : r.score_second);
    }
    return out;
}

ScoreMatrix ScoreMatrix::swapped() const {
    std::vector<ScoreRow> rows = rows_;
    for (auto& r : rows) std::swap(r.score_first, r.score_second);
    return ScoreMatrix(std::move(rows), scale_);
}

WeightVector::WeightVector(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) {
        throw Error(ErrorKind::InvalidArgument, "weight vector must be nonempty");
    }
    double sum = 0.0;
    for (double w : weights_) {
        if (!std::isfinite(w) || w < 0.0) {
            throw Error(ErrorKind::NegativeEntry, "weights must be finite and nonnegative");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > kWeightSumTolerance) {
        throw Error(ErrorKind::InvalidArgument, "weights must sum to 1");
    }
}

WeightVector WeightVector::uniform(std::size_t k) {
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "uniform weights need k >= 1");
    return WeightVector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

WeightVector normalize_weights(std::span<const double> raw) {
    if (raw.empty()) {
        throw Error(ErrorKind::InvalidArgument, "normalize_weights needs at least one entry");
    }
    double sum = 0.0;
    for (double r : raw) {
        if (!std::isfinite(r)) throw Error(ErrorKind::InvalidArgument, "weight is not finite");
        if (r < 0.0) throw Error(ErrorKind::NegativeEntry, "negative weight entry");
        sum += r;
    }
    if (sum == 0.0) throw Error(ErrorKind::AllZero, "all weight entries are zero");
    std::vector<double> out;
    out.reserve(raw.size());
    for (double r : raw) out.push_back(r / sum);
    return WeightVector(std::move(out));
}

double aggregate(const ScoreMatrix& scores, const WeightVector& weights, Candidate candidate) {
    if (scores.size() != weights.size()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "weights have k=" + std::to_string(weights.size()) + " but scores have " +
                        std::to_string(scores.size()) + " rows");
    }
    double total = 0.0;
    for (const auto& row : scores.rows()) {
        const double s = candidate == Candidate::First ? row.score_first : row.score_second;
        total += weights[row.aspect_index] * s;
    }
    return total;
}

PreferenceLabel decide(double overall_first, double overall_second, double tie_tol) {
    if (overall_first - overall_second > tie_tol) return PreferenceLabel::First;
    if (overall_second - overall_first > tie_tol) return PreferenceLabel::Second;
    return PreferenceLabel::Tie;
}

Verdict evaluate_pair(const ScoreMatrix& scores, const WeightVector& weights, double tie_tol) {
    Verdict v;
    v.overall_first = aggregate(scores, weights, Candidate::First);
    v.overall_second = aggregate(scores, weights, Candidate::Second);
    v.label = decide(v.overall_first, v.overall_second, tie_tol);
    return v;
}

}  // namespace dnaeval
