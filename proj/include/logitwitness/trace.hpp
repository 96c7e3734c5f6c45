#pragma once

// Passage traces: per-token observed log-probabilities plus the scoring
// model's candidate next-token distribution, and their JSONL encoding.
//
// File layout (one JSON object per line, field order fixed):
//   {"schema":1}
//   {"id":..,"label":"human"|"machine"|"unknown","meta":{..},
//    "tokens":[{"lp":..,"rank":..,"cand":[..],"tail":..|null}, ..]}

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "logitwitness/error.hpp"

namespace lw {

inline constexpr int trace_schema_version = 1;
inline constexpr double logprob_tolerance = 1e-6;
inline constexpr double mass_tolerance = 1e-3;
inline constexpr double tail_warning_mass = 0.01;

enum class Label { human, machine, unknown };

inline std::string_view to_string(Label label) {
    switch (label) {
    case Label::human: return "human";
    case Label::machine: return "machine";
    case Label::unknown: return "unknown";
    }
    return "unknown";
}

inline std::optional<Label> parse_label(std::string_view s) {
    if (s == "human") return Label::human;
    if (s == "machine") return Label::machine;
    if (s == "unknown") return Label::unknown;
    return std::nullopt;
}

struct CandidateDistribution {
    std::vector<double> logprobs;          // natural log, non-increasing
    std::optional<double> tail_logmass;    // log of the mass not enumerated

    bool operator==(const CandidateDistribution&) const = default;
};

struct TokenObservation {
    double observed_logprob = 0.0;
    std::int64_t observed_rank = 1;
    CandidateDistribution candidates;

    bool operator==(const TokenObservation&) const = default;
};

struct PassageTrace {
    std::string id;
    Label label = Label::unknown;
    std::vector<TokenObservation> tokens;
    std::map<std::string, std::string> meta;

    std::size_t length() const noexcept { return tokens.size(); }

    bool operator==(const PassageTrace&) const = default;
};

struct TraceCorpus {
    int schema_version = trace_schema_version;
    std::vector<PassageTrace> passages;

    std::size_t size() const noexcept { return passages.size(); }
    bool empty() const noexcept { return passages.empty(); }

    bool operator==(const TraceCorpus&) const = default;
};

// Counts gathered while parsing; lenient mode drops passages instead of failing.
struct ParseReport {
    std::size_t dropped = 0;
    std::size_t tail_warnings = 0;
};

/// Enumerated candidate probabilities renormalized to sum to one. Moment
/// computations use these; the tail mass only enters validation.
inline std::vector<double> normalized_probs(const CandidateDistribution& cand) {
    double top = cand.logprobs.empty() ? 0.0 : cand.logprobs.front();
    std::vector<double> p(cand.logprobs.size());
    double total = 0.0;
    for (std::size_t v = 0; v < p.size(); ++v) {
        p[v] = std::exp(cand.logprobs[v] - top);
        total += p[v];
    }
    for (auto& x : p) {
        x /= total;
    }
    return p;
}

inline double enumerated_mass(const CandidateDistribution& cand) {
    double mass = 0.0;
    for (double lp : cand.logprobs) {
        mass += std::exp(lp);
    }
    return mass;
}

namespace detail {

enum class Violation { none, mass, structural };

struct Check {
    Violation kind = Violation::none;
    std::string message;
};

inline Check check_token(const TokenObservation& tok, std::size_t t) {
    const auto where = [t](const std::string& what) { return "token " + std::to_string(t) + ": " + what; };
    const auto& cand = tok.candidates;
    if (cand.logprobs.empty()) {
        return {Violation::structural, where("empty candidate list")};
    }
    for (std::size_t v = 0; v < cand.logprobs.size(); ++v) {
        const double lp = cand.logprobs[v];
        if (!std::isfinite(lp)) {
            return {Violation::structural, where("non-finite candidate log-prob")};
        }
        if (lp > logprob_tolerance) {
            return {Violation::structural, where("candidate log-prob above 0")};
        }
        if (v > 0 && lp > cand.logprobs[v - 1]) {
            return {Violation::structural, where("candidate log-probs not sorted non-increasing")};
        }
    }
    if (cand.tail_logmass && !(*cand.tail_logmass <= logprob_tolerance)) {
        return {Violation::structural, where("tail log-mass above 0 or NaN")};
    }
    if (!std::isfinite(tok.observed_logprob)) {
        return {Violation::structural, where("non-finite observed log-prob")};
    }
    if (tok.observed_logprob > cand.logprobs.front() + logprob_tolerance) {
        return {Violation::structural, where("observed log-prob exceeds the top candidate")};
    }
    if (tok.observed_rank < 1) {
        return {Violation::structural, where("rank must be >= 1")};
    }
    const double mass = enumerated_mass(cand) + (cand.tail_logmass ? std::exp(*cand.tail_logmass) : 0.0);
    if (mass < 1.0 - mass_tolerance || mass > 1.0 + mass_tolerance) {
        std::ostringstream os;
        os << "probability mass " << mass << " outside [1-1e-3, 1+1e-3]";
        return {Violation::mass, where(os.str())};
    }
    return {};
}

inline Check check_passage(const PassageTrace& passage) {
    if (passage.tokens.empty()) {
        return {Violation::structural, "passage has no tokens"};
    }
    for (std::size_t t = 0; t < passage.tokens.size(); ++t) {
        if (auto c = check_token(passage.tokens[t], t); c.kind != Violation::none) {
            return c;
        }
    }
    return {};
}

inline bool tail_exceeds_warning(const PassageTrace& passage) {
    for (const auto& tok : passage.tokens) {
        if (tok.candidates.tail_logmass && std::exp(*tok.candidates.tail_logmass) > tail_warning_mass) {
            return true;
        }
    }
    return false;
}

using ojson = nlohmann::ordered_json;

inline ojson passage_to_json(const PassageTrace& p) {
    ojson j;
    j["id"] = p.id;
    j["label"] = std::string(to_string(p.label));
    j["meta"] = ojson::object();
    for (const auto& [k, v] : p.meta) {
        j["meta"][k] = v;
    }
    ojson tokens = ojson::array();
    for (const auto& tok : p.tokens) {
        ojson t;
        t["lp"] = tok.observed_logprob;
        t["rank"] = tok.observed_rank;
        t["cand"] = tok.candidates.logprobs;
        if (tok.candidates.tail_logmass) {
            t["tail"] = *tok.candidates.tail_logmass;
        } else {
            t["tail"] = nullptr;
        }
        tokens.push_back(std::move(t));
    }
    j["tokens"] = std::move(tokens);
    return j;
}

inline double number_field(const nlohmann::json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number()) {
        throw domain_error(std::string("field '") + key + "' must be a number");
    }
    return v.get<double>();
}

inline PassageTrace passage_from_json(const nlohmann::json& j) {
    PassageTrace p;
    p.id = j.at("id").get<std::string>();
    const auto label = parse_label(j.at("label").get<std::string>());
    if (!label) {
        throw domain_error("passage '" + p.id + "': unknown label '" + j.at("label").get<std::string>() + "'");
    }
    p.label = *label;
    if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
        for (const auto& [k, v] : it->items()) {
            p.meta.emplace(k, v.get<std::string>());
        }
    }
    const auto& tokens = j.at("tokens");
    p.tokens.reserve(tokens.size());
    for (const auto& t : tokens) {
        TokenObservation tok;
        tok.observed_logprob = number_field(t, "lp");
        tok.observed_rank = t.at("rank").get<std::int64_t>();
        tok.candidates.logprobs = t.at("cand").get<std::vector<double>>();
        if (auto it = t.find("tail"); it != t.end() && !it->is_null()) {
            tok.candidates.tail_logmass = it->get<double>();
        }
        p.tokens.push_back(std::move(tok));
    }
    return p;
}

} // namespace detail

/// Throws a domain error naming the passage if any invariant is violated.
inline void validate_passage(const PassageTrace& passage) {
    if (auto c = detail::check_passage(passage); c.kind != detail::Violation::none) {
        throw domain_error("passage '" + passage.id + "': " + c.message);
    }
}

inline void validate_corpus(const TraceCorpus& corpus) {
    std::set<std::string> ids;
    for (const auto& p : corpus.passages) {
        validate_passage(p);
        if (!ids.insert(p.id).second) {
            throw domain_error("duplicate passage id '" + p.id + "'");
        }
    }
}

/// Parses a JSONL trace stream. Strict mode rejects any invariant violation;
/// lenient mode drops passages whose probability mass is out of tolerance and
/// counts them in `report`.
inline TraceCorpus parse_corpus(std::istream& in, bool strict, ParseReport* report = nullptr) {
    TraceCorpus corpus;
    ParseReport local;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw domain_error("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!have_header) {
            if (!j.is_object() || !j.contains("schema")) {
                throw domain_error("line " + std::to_string(line_no) + ": expected header {\"schema\":1}");
            }
            if (!j["schema"].is_number_integer() || j["schema"].get<int>() != trace_schema_version) {
                throw domain_error("line " + std::to_string(line_no) + ": unsupported schema " + j["schema"].dump());
            }
            corpus.schema_version = j["schema"].get<int>();
            have_header = true;
            continue;
        }
        PassageTrace passage;
        try {
            passage = detail::passage_from_json(j);
        } catch (const nlohmann::json::exception& e) {
            throw domain_error("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw domain_error("line " + std::to_string(line_no) + ": " + e.what());
        }
        const auto check = detail::check_passage(passage);
        if (check.kind == detail::Violation::mass && !strict) {
            ++local.dropped;
            continue;
        }
        if (check.kind != detail::Violation::none) {
            throw domain_error("line " + std::to_string(line_no) + ": passage '" + passage.id + "': " + check.message);
        }
        if (!ids.insert(passage.id).second) {
            throw domain_error("line " + std::to_string(line_no) + ": duplicate passage id '" + passage.id + "'");
        }
        if (detail::tail_exceeds_warning(passage)) {
            ++local.tail_warnings;
        }
        corpus.passages.push_back(std::move(passage));
    }
    if (corpus.passages.empty()) {
        throw domain_error("empty corpus");
    }
    if (report) {
        *report = local;
    }
    return corpus;
}

inline TraceCorpus parse_corpus(std::string_view text, bool strict, ParseReport* report = nullptr) {
    std::istringstream in{std::string(text)};
    return parse_corpus(in, strict, report);
}

inline void serialize_passage(const PassageTrace& passage, std::ostream& out) {
    out << detail::passage_to_json(passage).dump() << '\n';
}

/// Deterministic encoding: fixed field order, sorted meta keys, shortest
/// round-trip float formatting.
inline void serialize_corpus(const TraceCorpus& corpus, std::ostream& out) {
    out << "{\"schema\":" << corpus.schema_version << "}\n";
    for (const auto& p : corpus.passages) {
        serialize_passage(p, out);
    }
}

inline std::string serialize_corpus(const TraceCorpus& corpus) {
    std::ostringstream out;
    serialize_corpus(corpus, out);
    return out.str();
}

} // namespace lw
