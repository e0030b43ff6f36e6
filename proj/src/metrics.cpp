#include "dnaeval/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dnaeval {

using json = nlohmann::json;

namespace {

// Printed for a fraction whose denominator is empty.
constexpr const char* kAbsentCell = "\xE2\x80\x94";

std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

void finish(AgreementCell& cell) {
    cell.with_ties = ratio(cell.agree_all, cell.n_total);
    cell.without_ties = ratio(cell.agree_nontie, cell.n_nontie);
}

void merge_into(AgreementCell& into, const AgreementCell& from) {
    into.n_total += from.n_total;
    into.n_nontie += from.n_nontie;
    into.n_excluded += from.n_excluded;
    into.agree_all += from.agree_all;
    into.agree_nontie += from.agree_nontie;
    finish(into);
}

std::string shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string pad(const std::string& s, std::size_t width) {
    // Width counts code points so the dash placeholder lines up.
    std::size_t cps = 0;
    for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
    return cps >= width ? s : std::string(width - cps, ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

double agreement(std::span<const PreferenceLabel> preds, std::span<const PreferenceLabel> golds,
                 AgreementMode mode, const AgreementOptions& options) {
    if (preds.size() != golds.size()) {
        throw Error(ErrorKind::DimensionMismatch, "agreement: " + std::to_string(preds.size()) +
                                                      " predictions for " + std::to_string(golds.size()) +
                                                      " gold labels");
    }
    std::size_t num = 0, den = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (mode == AgreementMode::WithoutTies) {
            if (golds[i] == PreferenceLabel::Tie) continue;
            if (!options.predicted_tie_counts_as_wrong && preds[i] == PreferenceLabel::Tie) continue;
        }
        ++den;
        num += preds[i] == golds[i];
    }
    if (den == 0) throw Error(ErrorKind::EmptyDenominator, "agreement: nothing to count");
    return static_cast<double>(num) / static_cast<double>(den);
}

AgreementCell agreement_cell(const RunResult& run, const Dataset& gold, const AgreementOptions& options) {
    AgreementCell cell;
    std::set<std::string_view> seen;
    for (const auto& rec : run.records) {
        const auto* inst = gold.find(rec.instance_id);
        if (inst == nullptr) {
            throw Error(ErrorKind::IdMismatch, "record '" + rec.instance_id + "' is not in dataset '" + gold.name + "'");
        }
        if (!seen.insert(rec.instance_id).second) {
            throw Error(ErrorKind::IdMismatch, "record '" + rec.instance_id + "' appears twice");
        }
        const auto pred = rec.label();
        const auto g = inst->human_label;
        if (!pred) {
            ++cell.n_excluded;
            if (options.drop_excluded) continue;
        }
        ++cell.n_total;
        cell.agree_all += pred == g;
        if (g == PreferenceLabel::Tie) continue;
        if (!options.predicted_tie_counts_as_wrong && pred == PreferenceLabel::Tie) continue;
        ++cell.n_nontie;
        cell.agree_nontie += pred == g;
    }
    if (seen.size() != gold.size()) {
        throw Error(ErrorKind::IdMismatch, "run covers " + std::to_string(seen.size()) + " of " +
                                               std::to_string(gold.size()) + " instances of '" + gold.name + "'");
    }
    finish(cell);
    return cell;
}

AgreementReport agreement_report(std::span<const ScoredRun> runs, const AgreementOptions& options) {
    AgreementReport report;
    for (const auto& r : runs) {
        if (r.run == nullptr || r.gold == nullptr) throw Error(ErrorKind::InvalidArgument, "null run or dataset");
        const auto cell = agreement_cell(*r.run, *r.gold, options);
        merge_into(report.overall, cell);
        merge_into(report.per_method[std::string(to_string(r.run->summary.method))], cell);
        merge_into(report.per_dataset[r.gold->name], cell);
    }
    finish(report.overall);
    return report;
}

std::string format_percent(const std::optional<double>& fraction) {
    if (!fraction) return kAbsentCell;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", *fraction * 100.0);
    return buf;
}

void write_agreement_csv(const AgreementReport& report, std::ostream& out) {
    out << "scope,key,n_total,n_nontie,n_excluded,agree_with_ties,agree_without_ties\n";
    auto row = [&](const char* scope, const std::string& key, const AgreementCell& c) {
        out << scope << ',' << key << ',' << c.n_total << ',' << c.n_nontie << ',' << c.n_excluded << ','
            << (c.with_ties ? shortest(*c.with_ties) : "") << ','
            << (c.without_ties ? shortest(*c.without_ties) : "") << '\n';
    };
    row("overall", "all", report.overall);
    for (const auto& [k, c] : report.per_method) row("method", k, c);
    for (const auto& [k, c] : report.per_dataset) row("dataset", k, c);
}

std::string format_agreement_table(const AgreementReport& report) {
    std::ostringstream out;
    std::size_t w = 12;
    for (const auto& [k, c] : report.per_method) w = std::max(w, k.size() + 9);
    for (const auto& [k, c] : report.per_dataset) w = std::max(w, k.size() + 9);
    out << pad_right("scope", w) << pad("n", 7) << pad("nontie", 8) << pad("excl", 6) << pad("w/ ties", 9)
        << pad("w/o ties", 10) << '\n';
    auto row = [&](const std::string& label, const AgreementCell& c) {
        out << pad_right(label, w) << pad(std::to_string(c.n_total), 7) << pad(std::to_string(c.n_nontie), 8)
            << pad(std::to_string(c.n_excluded), 6) << pad(format_percent(c.with_ties), 9)
            << pad(format_percent(c.without_ties), 10) << '\n';
    };
    for (const auto& [k, c] : report.per_dataset) row("dataset " + k, c);
    for (const auto& [k, c] : report.per_method) row("method " + k, c);
    row("overall", report.overall);
    return out.str();
}

Ranking weights_to_ranking(std::span<const double> weights) {
    Ranking r;
    r.ranks.reserve(weights.size());
    for (double wi : weights) {
        std::size_t better = 0;
        for (double wj : weights) better += wj > wi;
        r.ranks.push_back(better + 1);
    }
    return r;
}

Ranking weights_to_ranking(const WeightVector& weights) { return weights_to_ranking(weights.values()); }

double kendall_distance(const Ranking& r1, const Ranking& r2, bool normalized, double p) {
    if (r1.size() != r2.size()) {
        throw Error(ErrorKind::DimensionMismatch, "kendall_distance: rankings of length " +
                                                      std::to_string(r1.size()) + " and " +
                                                      std::to_string(r2.size()));
    }
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidArgument, "tie penalty must lie in [0, 1]");
    const std::size_t k = r1.size();
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            const bool tie1 = r1.ranks[i] == r1.ranks[j];
            const bool tie2 = r2.ranks[i] == r2.ranks[j];
            if (tie1 && tie2) continue;
            if (tie1 || tie2) {
                total += p;
            } else if ((r1.ranks[i] < r1.ranks[j]) != (r2.ranks[i] < r2.ranks[j])) {
                total += 1.0;
            }
        }
    }
    if (!normalized) return total;
    if (k < 2) return 0.0;
    return total / (static_cast<double>(k * (k - 1)) / 2.0);
}

std::optional<double> MeanWeightTable::cell(const std::string& task, const std::string& aspect) const {
    auto row = mean.find(task);
    if (row == mean.end()) return std::nullopt;
    auto it = row->second.find(aspect);
    if (it == row->second.end()) return std::nullopt;
    return it->second;
}

MeanWeightTable per_task_mean_weights(std::span<const EvaluationRecord> records) {
    std::map<std::string, std::map<std::string, std::vector<double>>> values;
    MeanWeightTable table;
    for (const auto& rec : records) {
        if (!rec.aspects || !rec.weights || rec.weights->size() != rec.aspects->size()) continue;
        const std::string task = rec.task_category.value_or("(none)");
        const bool use_raw = rec.raw_weights && rec.raw_weights->size() == rec.aspects->size();
        for (std::size_t j = 0; j < rec.aspects->size(); ++j) {
            const auto& aspect = (*rec.aspects)[j].text;
            if (std::find(table.aspects.begin(), table.aspects.end(), aspect) == table.aspects.end()) {
                table.aspects.push_back(aspect);
            }
            values[task][aspect].push_back(use_raw ? (*rec.raw_weights)[j] : 100.0 * (*rec.weights)[j]);
        }
        ++table.record_count[task];
    }
    for (auto& [task, row] : values) {
        table.tasks.push_back(task);
        for (auto& [aspect, xs] : row) {
            // Sorted summation so the mean does not depend on record order.
            std::sort(xs.begin(), xs.end());
            double sum = 0.0;
            for (double x : xs) sum += x;
            table.mean[task][aspect] = sum / static_cast<double>(xs.size());
        }
    }
    return table;
}

void write_mean_weights_csv(const MeanWeightTable& table, std::ostream& out) {
    out << "task,records";
    for (const auto& a : table.aspects) out << ',' << '"' << a << '"';
    out << '\n';
    for (const auto& t : table.tasks) {
        out << '"' << t << '"' << ',' << table.record_count.at(t);
        for (const auto& a : table.aspects) {
            out << ',';
            if (auto v = table.cell(t, a)) out << shortest(*v);
        }
        out << '\n';
    }
}

std::string format_mean_weights_table(const MeanWeightTable& table) {
    std::ostringstream out;
    std::size_t w = 6;
    for (const auto& t : table.tasks) w = std::max(w, t.size() + 2);
    out << pad_right("task", w);
    std::vector<std::size_t> widths;
    for (const auto& a : table.aspects) {
        widths.push_back(std::max<std::size_t>(a.size() + 2, 8));
        out << pad(a, widths.back());
    }
    out << '\n';
    for (const auto& t : table.tasks) {
        out << pad_right(t, w);
        for (std::size_t j = 0; j < table.aspects.size(); ++j) {
            std::string v = kAbsentCell;
            if (auto x = table.cell(t, table.aspects[j])) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.1f", *x);
                v = buf;
            }
            out << pad(v, widths[j]);
        }
        out << '\n';
    }
    return out.str();
}

std::map<std::string, Ranking> load_reference_rankings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::map<std::string, Ranking> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
        try {
            const auto j = json::parse(line);
            const auto id = j.at("instance_id").get<std::string>();
            Ranking r;
            if (j.contains("ranks")) {
                r.ranks = j["ranks"].get<std::vector<std::size_t>>();
            } else {
                r = weights_to_ranking(j.at("weights").get<std::vector<double>>());
            }
            if (!out.emplace(id, std::move(r)).second) {
                throw Error(ErrorKind::DuplicateId, where + "duplicate instance id '" + id + "'");
            }
        } catch (const json::exception& e) {
            throw Error(ErrorKind::SchemaError, where + e.what());
        }
    }
    return out;
}

PriceTable PriceTable::from_json_text(std::string_view text) {
    PriceTable table;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("price table: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorKind::SchemaError, "price table must be a JSON object");
    for (const auto& [model, entry] : doc.items()) {
        if (!entry.is_object() || !entry.contains("input") || !entry.contains("output") ||
            !entry["input"].is_number() || !entry["output"].is_number()) {
            throw Error(ErrorKind::SchemaError, "price table entry '" + model + "' needs numeric input and output");
        }
        table.set(model, {entry["input"].get<double>(), entry["output"].get<double>()});
    }
    return table;
}

PriceTable PriceTable::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open price table " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

void PriceTable::set(const std::string& model_id, ModelPrice price) {
    if (!(price.input_per_token >= 0.0) || !(price.output_per_token >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "negative price for '" + model_id + "'");
    }
    prices_[model_id] = price;
}

const ModelPrice* PriceTable::find(const std::string& model_id) const {
    auto it = prices_.find(model_id);
    return it == prices_.end() ? nullptr : &it->second;
}

CostReport estimate_cost(std::span<const EvaluationRecord> records, const PriceTable& prices) {
    std::map<std::pair<std::string, std::string>, CostLine> lines;
    for (const auto& rec : records) {
        if (rec.calls.empty()) continue;
        auto& line = lines[{std::string(to_string(rec.method)), rec.model_id}];
        line.method = rec.method;
        line.model_id = rec.model_id;
        for (const auto& c : rec.calls) {
            ++line.inferences;
            if (c.reply.cached) {
                ++line.cached;
            } else {
                line.input_tokens += static_cast<std::uint64_t>(c.reply.input_tokens);
                line.output_tokens += static_cast<std::uint64_t>(c.reply.output_tokens);
            }
        }
    }
    CostReport report;
    for (auto& [key, line] : lines) {
        const auto* price = prices.find(line.model_id);
        if (price == nullptr) {
            throw Error(ErrorKind::UnknownModelPrice, "no price for model '" + line.model_id + "'");
        }
        line.cost = static_cast<double>(line.input_tokens) * price->input_per_token +
                    static_cast<double>(line.output_tokens) * price->output_per_token;
        report.total_cost += line.cost;
        report.total_inferences += line.inferences;
        report.lines.push_back(line);
    }
    return report;
}

std::map<PreferenceLabel, PairedCounts> significance_stub(const RunResult& a, const RunResult& b,
                                                          const Dataset& gold) {
    auto index = [&](const RunResult& run, const char* name) {
        std::map<std::string_view, const EvaluationRecord*> by_id;
        for (const auto& r : run.records) {
            if (!by_id.emplace(r.instance_id, &r).second) {
                throw Error(ErrorKind::IdMismatch, std::string(name) + " repeats id '" + r.instance_id + "'");
            }
        }
        if (by_id.size() != gold.size()) {
            throw Error(ErrorKind::IdMismatch, std::string(name) + " covers " + std::to_string(by_id.size()) +
                                                   " of " + std::to_string(gold.size()) + " instances");
        }
        return by_id;
    };
    const auto ia = index(a, "run a");
    const auto ib = index(b, "run b");
    std::map<PreferenceLabel, PairedCounts> out;
    for (const auto& inst : gold.instances) {
        auto ra = ia.find(inst.id);
        auto rb = ib.find(inst.id);
        if (ra == ia.end() || rb == ib.end()) {
            throw Error(ErrorKind::IdMismatch, "instance '" + inst.id + "' is missing from a run");
        }
        const bool ca = ra->second->label() == inst.human_label;
        const bool cb = rb->second->label() == inst.human_label;
        auto& cell = out[inst.human_label];
        if (ca && cb) ++cell.both_correct;
        else if (ca) ++cell.only_a;
        else if (cb) ++cell.only_b;
        else ++cell.neither;
    }
    return out;
}

}  // namespace dnaeval
