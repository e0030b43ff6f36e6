#include "dnaeval/parsing.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

namespace dnaeval {

std::string_view to_string(ParseStatus status) noexcept {
    switch (status) {
        case ParseStatus::Ok: return "ok";
        case ParseStatus::Recovered: return "recovered";
        case ParseStatus::Failed: return "failed";
    }
    return "failed";
}

namespace {

struct NumberToken {
    double value = 0.0;
    std::size_t begin = 0;  // includes a leading '-' when negative
    std::size_t end = 0;    // includes a trailing '%' when present
    bool percent = false;
    bool negative = false;
    bool denominator = false;  // directly follows '/', as in "8/10"
};

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return is_alpha(c) || is_digit(c) || c == '_'; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

// Decimal numbers that stand alone: not glued to letters ("gpt4", "3rd") or to other digits.
std::vector<NumberToken> scan_numbers(std::string_view s) {
    std::vector<NumberToken> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_digit(s[i]) || (i > 0 && (is_alnum(s[i - 1]) || s[i - 1] == '.'))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_digit(s[j])) ++j;
        if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
            ++j;
            while (j < s.size() && is_digit(s[j])) ++j;
        }
        if (j < s.size() && is_alpha(s[j])) {
            i = j;
            continue;
        }
        NumberToken tok;
        std::from_chars(s.data() + i, s.data() + j, tok.value);
        tok.begin = i;
        tok.end = j;
        if (i > 0 && s[i - 1] == '-' && (i < 2 || !is_alnum(s[i - 2]))) {
            tok.negative = true;
            tok.value = -tok.value;
            tok.begin = i - 1;
        }
        std::size_t back = i;
        while (back > 0 && s[back - 1] == ' ') --back;
        tok.denominator = back > 0 && s[back - 1] == '/';
        std::size_t k = j;
        if (k < s.size() && s[k] == ' ') ++k;
        if (k < s.size() && s[k] == '%') {
            tok.percent = true;
            tok.end = k + 1;
        }
        out.push_back(tok);
        i = j;
    }
    return out;
}

std::string describe(const std::vector<double>& values) {
    std::string out;
    for (double v : values) {
        if (!out.empty()) out += ' ';
        std::array<char, 32> buf{};
        auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
        out.append(buf.data(), p);
    }
    return out;
}

}  // namespace

ParseOutcome<std::vector<double>> parse_weights(std::string_view text, std::size_t k) {
    using Outcome = ParseOutcome<std::vector<double>>;
    if (k == 0) return Outcome::failed("k must be at least 1");

    std::optional<Outcome> fallback;
    std::string rejected;
    std::size_t line_no = 0;
    for (auto line : split_lines(text)) {
        ++line_no;
        const auto tokens = scan_numbers(line);
        std::vector<NumberToken> chosen;
        if (tokens.size() == k) {
            chosen = tokens;
        } else {
            for (const auto& t : tokens) {
                if (t.percent) chosen.push_back(t);
            }
            if (chosen.size() != k) continue;
        }

        std::vector<double> values;
        bool negative = false;
        double sum = 0.0;
        for (const auto& t : chosen) {
            negative = negative || t.negative;
            values.push_back(t.value);
            sum += t.value;
        }
        if (negative) {
            rejected = "line " + std::to_string(line_no) + " has a negative weight";
            continue;
        }
        if (sum < kWeightSumLow || sum > kWeightSumHigh) {
            rejected = "line " + std::to_string(line_no) + " sums to " + describe({sum}) +
                       ", outside [90, 110]";
            continue;
        }

        bool only_tokens = chosen.size() == tokens.size();
        std::size_t pos = 0;
        for (const auto& t : chosen) {
            if (!trim(line.substr(pos, t.begin - pos)).empty()) only_tokens = false;
            pos = t.end;
        }
        if (!trim(line.substr(pos)).empty()) only_tokens = false;
        const bool all_percent =
            std::all_of(chosen.begin(), chosen.end(), [](const auto& t) { return t.percent; });
        const bool exact_sum = std::abs(sum - 100.0) <= 1e-6;

        if (only_tokens && all_percent && exact_sum) {
            return Outcome::ok(std::move(values));
        }
        if (!fallback) {
            std::string note = "line " + std::to_string(line_no) + ":";
            if (!only_tokens) note += " extra text around weights;";
            if (!all_percent) note += " '%' missing;";
            if (!exact_sum) note += " sum " + describe({sum}) + " != 100;";
            note.pop_back();
            fallback = Outcome::recovered(std::move(values), std::move(note));
        }
    }
    if (fallback) return *fallback;
    if (!rejected.empty()) return Outcome::failed(rejected);
    return Outcome::failed("no line holds exactly " + std::to_string(k) + " weights");
}

namespace {

struct Marker {
    int side = 0;  // 1 or 2
    std::size_t begin = 0;
    std::size_t end = 0;
};

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<Marker> find_markers(std::string_view text) {
    static const std::vector<std::string> kWords{"response", "assistant", "output", "answer",
                                                 "summary"};
    const std::string low = lower(text);
    std::vector<Marker> out;
    for (const auto& word : kWords) {
        std::size_t pos = 0;
        while ((pos = low.find(word, pos)) != std::string::npos) {
            const std::size_t start = pos;
            pos += word.size();
            if (start > 0 && is_alpha(low[start - 1])) continue;
            std::size_t i = pos;
            while (i < low.size() && (low[i] == ' ' || low[i] == '#')) ++i;
            const bool paren = i < low.size() && low[i] == '(';
            if (paren) ++i;
            if (i >= low.size()) continue;
            int side = 0;
            if (text[i] == '1') side = 1;
            else if (text[i] == '2') side = 2;
            else if (paren && low[i] == 'a') side = 1;
            else if (paren && low[i] == 'b') side = 2;
            else if (text[i] == 'A') side = 1;
            else if (text[i] == 'B') side = 2;
            if (side == 0) continue;
            ++i;
            if (paren) {
                if (i >= low.size() || low[i] != ')') continue;
                ++i;
            }
            if (i < low.size() && is_alnum(low[i])) continue;
            out.push_back({side, start, i});
        }
    }
    std::sort(out.begin(), out.end(), [](const Marker& a, const Marker& b) { return a.begin < b.begin; });
    return out;
}

bool score_candidate(const NumberToken& t, const ScoreScale& scale) {
    return !t.percent && !t.negative && !t.denominator && scale.contains(t.value);
}

}  // namespace

ParseOutcome<std::pair<double, double>> parse_pair_scores(std::string_view text,
                                                          const ScoreScale& scale) {
    using Outcome = ParseOutcome<std::pair<double, double>>;
    const auto markers = find_markers(text);
    const auto tokens = scan_numbers(text);

    auto labeled = [&](int side) -> std::optional<double> {
        for (std::size_t m = 0; m < markers.size(); ++m) {
            if (markers[m].side != side) continue;
            const std::size_t from = markers[m].end;
            const std::size_t to = m + 1 < markers.size() ? markers[m + 1].begin : text.size();
            for (const auto& t : tokens) {
                if (t.begin >= from && t.end <= to && score_candidate(t, scale)) return t.value;
            }
        }
        return std::nullopt;
    };
    const auto first = labeled(1);
    const auto second = labeled(2);
    if (first && second) return Outcome::ok({*first, *second});

    // The two-values-on-the-first-line format most scoring templates ask for.
    for (auto line : split_lines(text)) {
        if (trim(line).empty()) continue;
        const auto line_tokens = scan_numbers(line);
        if (line_tokens.size() == 2 && score_candidate(line_tokens[0], scale) &&
            score_candidate(line_tokens[1], scale)) {
            std::size_t pos = 0;
            bool clean = true;
            for (const auto& t : line_tokens) {
                const auto gap = trim(line.substr(pos, t.begin - pos));
                if (!(gap.empty() || gap == ",")) clean = false;
                pos = t.end;
            }
            if (clean && trim(line.substr(pos)).empty()) {
                return Outcome::ok({line_tokens[0].value, line_tokens[1].value});
            }
        }
        break;
    }

    std::vector<double> positional;
    for (const auto& t : tokens) {
        const bool in_marker = std::any_of(markers.begin(), markers.end(), [&](const Marker& m) {
            return t.begin >= m.begin && t.begin < m.end;
        });
        if (!in_marker && score_candidate(t, scale)) positional.push_back(t.value);
        if (positional.size() == 2) break;
    }
    if (positional.size() == 2) {
        return Outcome::recovered({positional[0], positional[1]},
                                  "scores taken positionally from the first two in-range numbers");
    }
    return Outcome::failed("fewer than two in-range scores in reply");
}

ParseOutcome<std::pair<double, double>> parse_trailing_pair_scores(std::string_view text,
                                                                   const ScoreScale& scale) {
    const auto lines = split_lines(text);
    std::size_t offset = text.size();
    for (std::size_t n = 0; n < lines.size(); ++n) {
        const auto& line = lines[lines.size() - 1 - n];
        offset = static_cast<std::size_t>(line.data() - text.data());
        if (trim(line).empty()) continue;
        auto outcome = parse_pair_scores(text.substr(offset), scale);
        if (outcome.usable()) return outcome;
    }
    return parse_pair_scores(text, scale);
}

namespace {

// Returns the text after an enumeration marker, or nullopt when the line has none.
std::optional<std::string_view> strip_marker(std::string_view line) {
    static constexpr std::string_view kBullet = "\xE2\x80\xA2";
    if (line.starts_with(kBullet)) return trim(line.substr(kBullet.size()));
    if (line.size() >= 2 && (line[0] == '-' || line[0] == '*') && is_space(line[1])) {
        return trim(line.substr(2));
    }
    std::size_t i = 0;
    const bool paren = !line.empty() && line[0] == '(';
    if (paren) ++i;
    const std::size_t digits_start = i;
    while (i < line.size() && is_digit(line[i])) ++i;
    if (i == digits_start || i >= line.size()) return std::nullopt;
    if (paren) {
        if (line[i] != ')') return std::nullopt;
    } else if (line[i] != '.' && line[i] != ')') {
        return std::nullopt;
    }
    ++i;
    if (i < line.size() && !is_space(line[i])) return std::nullopt;
    return trim(line.substr(i));
}

}  // namespace

ParseOutcome<AspectSet> parse_aspects(std::string_view text, std::size_t k) {
    using Outcome = ParseOutcome<AspectSet>;
    if (k == 0) return Outcome::failed("k must be at least 1");

    std::vector<std::string> marked;
    std::vector<std::string> plain;
    for (auto raw : split_lines(text)) {
        const auto line = trim(raw);
        if (line.empty()) continue;
        if (auto item = strip_marker(line)) {
            if (!item->empty()) marked.emplace_back(*item);
        } else {
            plain.emplace_back(line);
        }
    }
    const bool has_markers = !marked.empty();
    auto items = has_markers ? std::move(marked) : std::move(plain);

    std::vector<std::string> unique;
    std::set<std::string> seen;
    for (auto& item : items) {
        if (seen.insert(item).second) unique.push_back(std::move(item));
    }
    const bool had_duplicates = unique.size() != items.size();

    if (unique.size() < k) {
        return Outcome::failed("found " + std::to_string(unique.size()) + " aspects, need " +
                               std::to_string(k));
    }
    std::string note;
    if (unique.size() > k) {
        note = "kept first " + std::to_string(k) + " of " + std::to_string(unique.size()) + " items";
        unique.resize(k);
    }
    if (!has_markers) note += std::string(note.empty() ? "" : "; ") + "no enumeration markers";
    if (had_duplicates) note += std::string(note.empty() ? "" : "; ") + "duplicate items dropped";

    auto set = AspectSet::from_texts(unique, AspectSource::Generated);
    if (note.empty()) return Outcome::ok(std::move(set));
    return Outcome::recovered(std::move(set), std::move(note));
}

}  // namespace dnaeval
