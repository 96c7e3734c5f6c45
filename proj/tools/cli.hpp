#pragma once

// Command-line front end. Exit codes: 0 success, 1 I/O, 2 domain error, 64 usage.
// Data goes to --out or stdout; diagnostics go to stderr.

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "logitwitness/logitwitness.hpp"

namespace lw::cli {

struct RunConfig {
    std::string human_path;
    std::string machine_path;
    std::string traces_path;
    std::vector<std::string> score_paths;
    std::string witness_path;
    std::vector<std::string> report_paths;
    std::string method;
    std::string out_path;
    std::string format = "json";
    double alpha = default_alpha;
    int n_base = default_n_base;
    int degree = default_degree;
    double ridge = default_ridge;
    std::uint64_t seed = 42;
    bool strict = false;
    unsigned jobs = 1;

    // simulate / diagnose
    std::string role = "machine";
    std::size_t n = 200;
    std::size_t length = 400;
    std::string id_prefix;
    double q1 = 0.6;
    std::vector<double> p_series{0.5};
    std::size_t vocab = 50;
    double zipf = 1.1;
    double jitter = 0.2;
    std::uint64_t lang_seed = 7;
    double human_temperature = 1.5;
    std::vector<double> alphas{0.05, 0.1, 0.2, 0.5};
    std::string bit_witness = "identity";
    std::vector<std::size_t> length_grid{100, 150, 200, 250, 300};
    std::string scores_path;
    std::string label_filter = "machine";
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open '" + path + "' for reading");
    }
    return in;
}

inline TraceCorpus read_corpus(const std::string& path, bool strict, std::ostream& err) {
    auto in = open_input(path);
    ParseReport report;
    auto corpus = parse_corpus(in, strict, &report);
    if (report.dropped > 0) {
        err << "warning: " << path << ": dropped " << report.dropped
            << " passage(s) with probability mass outside tolerance\n";
    }
    if (report.tail_warnings > 0) {
        err << "warning: " << path << ": " << report.tail_warnings
            << " passage(s) have a token with unenumerated tail mass > " << tail_warning_mass << "\n";
    }
    return corpus;
}

inline WitnessModel read_model(const std::string& path) {
    auto in = open_input(path);
    return load_model(in);
}

// Writes through `sink` to --out when given, else to stdout.
class Output {
public:
    Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
        if (!path.empty()) {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) {
                throw io_error("cannot open '" + path + "' for writing");
            }
            stream_ = file_.get();
        }
    }

    std::ostream& stream() { return *stream_; }

    void finish() {
        stream_->flush();
        if (!*stream_) {
            throw io_error("write failed");
        }
    }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* stream_;
};

inline void warn_on_label_mismatch(const TraceCorpus& corpus, Label expected, const std::string& path,
                                   std::ostream& err) {
    std::size_t mismatched = 0;
    for (const auto& p : corpus.passages) {
        if (p.label != expected && p.label != Label::unknown) {
            ++mismatched;
        }
    }
    if (mismatched > 0) {
        err << "warning: " << path << ": " << mismatched << " passage(s) labeled other than '" << to_string(expected)
            << "'\n";
    }
}

inline Label parse_role(const std::string& role) {
    const auto label = parse_label(role);
    if (!label) {
        throw usage_error("role must be human, machine or unknown");
    }
    return *label;
}

inline MarkovLanguage machine_language(const RunConfig& cfg) {
    return make_peaked_language(cfg.vocab, cfg.zipf, cfg.jitter, cfg.lang_seed);
}

inline std::vector<double> read_scores(const RunConfig& cfg) {
    std::vector<double> scores;
    if (!cfg.scores_path.empty()) {
        auto in = open_input(cfg.scores_path);
        double x = 0.0;
        while (in >> x) {
            scores.push_back(x);
        }
        if (!in.eof()) {
            throw domain_error("'" + cfg.scores_path + "' contains a non-numeric entry");
        }
        return scores;
    }
    if (cfg.report_paths.empty()) {
        throw usage_error("diagnose normality needs --scores or --reports");
    }
    const auto want = parse_role(cfg.label_filter);
    for (const auto& path : cfg.report_paths) {
        auto in = open_input(path);
        for (const auto& r : parse_reports(in)) {
            if (r.ok() && r.label == want) {
                scores.push_back(*r.statistic);
            }
        }
    }
    return scores;
}

/// Applies `key = value` lines to the options of `sub` that were not given on
/// the command line. Blank lines, `#` comments and `[section]` headers are
/// skipped; keys the subcommand does not take are ignored.
inline void apply_config(const std::string& path, CLI::App& sub) {
    auto in = open_input(path);
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string{};
        const auto e = s.find_last_not_of(" \t\r");
        s = s.substr(b, e - b + 1);
        if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
            s = s.substr(1, s.size() - 2);
        }
        return s;
    };
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty() || text.front() == '#' || text.front() == '[') {
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw usage_error(path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        auto key = trim(text.substr(0, eq));
        std::replace(key.begin(), key.end(), '_', '-');
        auto* opt = sub.get_option_no_throw("--" + key);
        if (opt == nullptr || opt->count() > 0) {
            continue;
        }
        opt->add_result(trim(text.substr(eq + 1)));
        opt->run_callback();
    }
}

// ---------------------------------------------------------------------------

inline int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto human = read_corpus(cfg.human_path, cfg.strict, err);
    const auto machine = read_corpus(cfg.machine_path, cfg.strict, err);
    warn_on_label_mismatch(human, Label::human, cfg.human_path, err);
    warn_on_label_mismatch(machine, Label::machine, cfg.machine_path, err);

    std::vector<double> pooled;
    for (const auto* corpus : {&human, &machine}) {
        for (const auto& p : corpus->passages) {
            for (const auto& tok : p.tokens) {
                pooled.push_back(tok.observed_logprob);
            }
        }
    }
    const auto basis = build_basis(pooled, cfg.n_base, cfg.degree);
    const auto moments = accumulate_moments(human, machine, basis, cfg.jobs);
    const Eigen::MatrixXd s0 = moments.sigma_human + moments.sigma_machine;
    TrainingInfo info;
    info.corpus_ids = {cfg.human_path, cfg.machine_path};
    const auto model = solve_witness(moments, basis, cfg.ridge, info);
    const auto check = solve_closed_form(s0, moments.psi(), cfg.ridge);

    Output sink(cfg.out_path, out);
    save_model(model, sink.stream());
    sink.finish();
    err << "trained witness: d=" << basis.dim() << " objective=" << model.objective()
        << " n_human=" << human.size() << " n_machine=" << machine.size()
        << " route_discrepancy=" << check.route_discrepancy << "\n";
    return 0;
}

inline int cmd_score(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    std::string method_name = cfg.method;
    if (method_name.empty()) {
        if (cfg.witness_path.empty()) {
            throw usage_error("score needs --witness or --method");
        }
        method_name = "ada";
    }
    const auto method = parse_method(method_name);
    if (!method) {
        throw usage_error("unknown method '" + method_name + "'");
    }
    std::optional<WitnessModel> witness;
    if (*method == Method::ada) {
        if (cfg.witness_path.empty()) {
            throw usage_error("method 'ada' needs --witness");
        }
        witness = read_model(cfg.witness_path);
    }
    check_alpha(cfg.alpha);
    std::vector<DetectionReport> reports;
    for (const auto& path : cfg.score_paths) {
        const auto corpus = read_corpus(path, cfg.strict, err);
        auto part = score_corpus(corpus, *method, witness ? &*witness : nullptr, cfg.alpha, cfg.jobs);
        reports.insert(reports.end(), part.begin(), part.end());
    }

    Output sink(cfg.out_path, out);
    std::size_t failed = 0;
    for (const auto& r : reports) {
        write_report(r, sink.stream());
        failed += r.ok() ? 0 : 1;
    }
    sink.finish();
    if (failed > 0) {
        err << "warning: " << failed << " of " << reports.size() << " passage(s) could not be scored\n";
    }
    if (failed == reports.size()) {
        err << R"({"error":"domain","message":"no passage could be scored"})" << "\n";
        return exit_code(ErrorKind::domain);
    }
    return 0;
}

inline int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& /*err*/) {
    std::vector<DetectionReport> reports;
    for (const auto& path : cfg.report_paths) {
        auto in = open_input(path);
        auto part = parse_reports(in);
        reports.insert(reports.end(), part.begin(), part.end());
    }
    if (reports.empty()) {
        throw domain_error("no reports to evaluate");
    }
    const auto summaries = evaluate_reports(reports, cfg.alpha);
    Output sink(cfg.out_path, out);
    if (cfg.format == "table") {
        write_summary_table(summaries, sink.stream());
    } else {
        write_summary_json(summaries, cfg.alpha, sink.stream());
    }
    sink.finish();
    return 0;
}

inline GenerateOptions generate_options(const RunConfig& cfg, const std::string& language) {
    GenerateOptions go;
    go.seed = cfg.seed;
    go.id_prefix = cfg.id_prefix.empty() ? cfg.role : cfg.id_prefix;
    go.meta = {{"language", language}, {"seed", std::to_string(cfg.seed)}};
    go.jobs = cfg.jobs;
    return go;
}

inline int cmd_simulate_bit(const RunConfig& cfg, std::ostream& out, std::ostream& /*err*/) {
    const BitKingdom kingdom{cfg.q1, cfg.p_series};
    const auto label = parse_role(cfg.role);
    const auto q = kingdom.machine_language();
    const auto go = generate_options(cfg, "bit");
    const auto corpus = label == Label::human ? generate_corpus(kingdom.human_author(), q, cfg.n, cfg.length, label, go)
                                              : generate_corpus(q, cfg.n, cfg.length, label, go);
    Output sink(cfg.out_path, out);
    serialize_corpus(corpus, sink.stream());
    sink.finish();
    return 0;
}

inline int cmd_simulate_markov(const RunConfig& cfg, std::ostream& out, std::ostream& /*err*/) {
    const auto label = parse_role(cfg.role);
    const auto q = machine_language(cfg);
    const auto go = generate_options(cfg, "markov");
    const auto corpus = label == Label::human
                            ? generate_corpus(temper(q, cfg.human_temperature), q, cfg.n, cfg.length, label, go)
                            : generate_corpus(q, cfg.n, cfg.length, label, go);
    Output sink(cfg.out_path, out);
    serialize_corpus(corpus, sink.stream());
    sink.finish();
    return 0;
}

inline int cmd_simulate_fnr(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto q = machine_language(cfg);
    FnrResult result;
    std::string witness_name;
    if (!cfg.witness_path.empty()) {
        const auto w = read_model(cfg.witness_path);
        result = fnr_experiment(q, w, cfg.alphas, cfg.n, cfg.length, cfg.seed, cfg.jobs);
        witness_name = cfg.witness_path;
    } else if (cfg.method.empty() || cfg.method == "fast") {
        result = fnr_experiment(q, IdentityWitness{}, cfg.alphas, cfg.n, cfg.length, cfg.seed, cfg.jobs);
        witness_name = "identity";
    } else {
        throw usage_error("simulate fnr takes --witness or --method fast");
    }
    if (result.n_degenerate > 0) {
        err << "warning: " << result.n_degenerate << " degenerate passage(s) skipped\n";
    }
    Output sink(cfg.out_path, out);
    if (cfg.format == "table") {
        sink.stream() << "alpha      fnr        se\n";
        for (const auto& row : result.rows) {
            sink.stream() << std::fixed << std::setprecision(4) << std::setw(6) << row.alpha << std::setw(10)
                          << row.fnr << std::setw(10) << row.standard_error << '\n';
        }
    } else {
        nlohmann::ordered_json j;
        j["witness"] = witness_name;
        j["n"] = cfg.n;
        j["L"] = cfg.length;
        j["seed"] = cfg.seed;
        j["n_degenerate"] = result.n_degenerate;
        j["rows"] = nlohmann::ordered_json::array();
        for (const auto& row : result.rows) {
            j["rows"].push_back({{"alpha", row.alpha}, {"fnr", row.fnr}, {"se", row.standard_error}});
        }
        sink.stream() << j.dump(2) << '\n';
    }
    sink.finish();
    return 0;
}

inline int cmd_simulate_bit_value(const RunConfig& cfg, std::ostream& out, std::ostream& /*err*/) {
    const BitKingdom kingdom{cfg.q1, cfg.p_series};
    double value = 0.0;
    if (cfg.bit_witness == "identity") {
        value = bit_example_value(kingdom, BitWitness::identity);
    } else if (cfg.bit_witness == "indicator") {
        value = bit_example_value(kingdom, BitWitness::indicator);
    } else {
        value = bit_example_value(kingdom, read_model(cfg.bit_witness));
    }
    nlohmann::ordered_json j;
    j["q1"] = cfg.q1;
    j["mean_p1"] = kingdom.mean_p();
    j["witness"] = cfg.bit_witness;
    j["value"] = value;
    Output sink(cfg.out_path, out);
    sink.stream() << j.dump() << '\n';
    sink.finish();
    return 0;
}

inline int cmd_diagnose_normality(const RunConfig& cfg, std::ostream& out, std::ostream& /*err*/) {
    const auto scores = read_scores(cfg);
    const auto d = normality_diagnostics(scores);
    nlohmann::ordered_json j;
    j["n"] = scores.size();
    j["ks_stat"] = d.ks_stat;
    j["ks_pvalue"] = d.ks_pvalue;
    j["mean"] = d.mean;
    j["var"] = d.var;
    Output sink(cfg.out_path, out);
    sink.stream() << j.dump() << '\n';
    sink.finish();
    return 0;
}

inline int cmd_diagnose_variance_ratio(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto corpus = read_corpus(cfg.traces_path, cfg.strict, err);
    std::vector<VarianceRatioRow> rows;
    if (!cfg.witness_path.empty()) {
        rows = variance_ratio_diagnostics(corpus, read_model(cfg.witness_path), cfg.length_grid);
    } else {
        rows = variance_ratio_diagnostics(corpus, IdentityWitness{}, cfg.length_grid);
    }
    Output sink(cfg.out_path, out);
    if (cfg.format == "table") {
        sink.stream() << "     L   ratio(var)   inverse(var)  flagged\n";
        for (const auto& r : rows) {
            sink.stream() << std::setw(6) << r.length << std::fixed << std::setprecision(2) << std::setw(7)
                          << r.mean_ratio << "(" << r.var_ratio << ")" << std::setw(9) << r.mean_inverse << "("
                          << r.var_inverse << ")" << std::setw(6) << r.n_flagged << '\n';
        }
    } else {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            j.push_back({{"L", r.length},
                         {"mean_ratio", r.mean_ratio},
                         {"var_ratio", r.var_ratio},
                         {"mean_inverse", r.mean_inverse},
                         {"var_inverse", r.var_inverse},
                         {"n_flagged", r.n_flagged}});
        }
        sink.stream() << j.dump(2) << '\n';
    }
    sink.finish();
    return 0;
}

inline int cmd_diagnose_tnr_bound(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto corpus = read_corpus(cfg.traces_path, cfg.strict, err);
    const auto est = cfg.witness_path.empty() ? tnr_bound_estimate(corpus, IdentityWitness{}, cfg.alpha)
                                              : tnr_bound_estimate(corpus, read_model(cfg.witness_path), cfg.alpha);
    nlohmann::ordered_json j;
    j["value"] = est.value;
    j["numerator"] = est.numerator;
    j["denominator"] = est.denominator;
    j["alpha"] = cfg.alpha;
    j["tnr_lower_bound"] = *est.bound;
    Output sink(cfg.out_path, out);
    sink.stream() << j.dump() << '\n';
    sink.finish();
    return 0;
}

} // namespace detail

/// Parses `args` (without the program name) and runs the chosen subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"Detect machine-generated text from token log-probability traces", "logitwitness"};
    std::string config_path;
    app.add_option("--config", config_path, "key=value config file; command-line flags take precedence");
    app.require_subcommand(1);

    const auto add_out = [&](CLI::App* sub) { sub->add_option("--out,-o", cfg.out_path, "Output path (default stdout)"); };
    const auto add_jobs = [&](CLI::App* sub) {
        sub->add_option("--jobs,-j", cfg.jobs, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 256u));
    };
    const auto add_alpha = [&](CLI::App* sub) {
        sub->add_option("--alpha", cfg.alpha, "Target false-negative rate")->capture_default_str()->check(
            CLI::Range(0.0, 1.0));
    };
    const auto add_markov = [&](CLI::App* sub) {
        sub->add_option("--vocab", cfg.vocab, "Vocabulary size")->capture_default_str();
        sub->add_option("--zipf", cfg.zipf, "Zipf exponent of the row profile")->capture_default_str();
        sub->add_option("--jitter", cfg.jitter, "Log-normal jitter of each row")->capture_default_str();
        sub->add_option("--lang-seed", cfg.lang_seed, "Seed of the language itself")->capture_default_str();
    };
    const std::vector<std::string> methods{"ada", "fast", "likelihood", "entropy", "logrank", "lrr"};

    auto* train = app.add_subcommand("train", "Learn a witness function from human and machine traces");
    train->add_option("--human", cfg.human_path, "Human trace JSONL")->required();
    train->add_option("--machine", cfg.machine_path, "Machine trace JSONL")->required();
    train->add_option("--n-base", cfg.n_base, "Number of B-spline basis functions")->capture_default_str();
    train->add_option("--degree", cfg.degree, "B-spline polynomial degree")->capture_default_str();
    train->add_option("--ridge", cfg.ridge, "Ridge, relative to the mean eigenvalue")->capture_default_str();
    train->add_flag("--strict", cfg.strict, "Reject any invalid passage");
    add_out(train);
    add_jobs(train);

    auto* score = app.add_subcommand("score", "Score traces and classify at an FNR-controlled threshold");
    score->add_option("--traces", cfg.score_paths, "Trace JSONL file(s), scored in order")->required();
    score->add_option("--witness", cfg.witness_path, "Witness model JSON (method ada)");
    score->add_option("--method", cfg.method, "ada|fast|likelihood|entropy|logrank|lrr")->check(CLI::IsMember(methods));
    score->add_flag("--strict", cfg.strict, "Reject any invalid passage");
    add_alpha(score);
    add_out(score);
    add_jobs(score);

    auto* eval = app.add_subcommand("eval", "AUC and classification rates from labeled score reports");
    eval->add_option("--reports", cfg.report_paths, "Report JSONL file(s)")->required();
    eval->add_option("--format", cfg.format, "json|table")->check(CLI::IsMember({"json", "table"}))->capture_default_str();
    add_alpha(eval);
    add_out(eval);

    auto* simulate = app.add_subcommand("simulate", "Synthetic languages and Monte Carlo experiments");
    simulate->require_subcommand(1);

    auto* sim_bit = simulate->add_subcommand("bit", "Two-token language traces");
    sim_bit->add_option("--q1", cfg.q1, "Machine P(token = 1)")->capture_default_str();
    sim_bit->add_option("--p1", cfg.p_series, "Human P(token = 1) schedule (one value = constant)")->delimiter(',');
    auto* sim_markov = simulate->add_subcommand("markov", "Order-1 Markov language traces");
    add_markov(sim_markov);
    sim_markov->add_option("--human-temperature", cfg.human_temperature, "Human author = language tempered by this")
        ->capture_default_str();
    for (auto* sub : {sim_bit, sim_markov}) {
        sub->add_option("--role", cfg.role, "human|machine")->check(CLI::IsMember({"human", "machine"}))->capture_default_str();
        sub->add_option("--n", cfg.n, "Number of passages")->capture_default_str();
        sub->add_option("--L", cfg.length, "Tokens per passage")->capture_default_str();
        sub->add_option("--seed", cfg.seed, "Sampling seed")->capture_default_str();
        sub->add_option("--id-prefix", cfg.id_prefix, "Passage id prefix (default: role)");
        add_out(sub);
        add_jobs(sub);
    }

    auto* sim_fnr = simulate->add_subcommand("fnr", "Empirical FNR of machine passages at several alphas");
    add_markov(sim_fnr);
    sim_fnr->add_option("--witness", cfg.witness_path, "Witness model JSON (default identity)");
    sim_fnr->add_option("--method", cfg.method, "fast (identity witness)")->check(CLI::IsMember({"fast"}));
    sim_fnr->add_option("--alphas", cfg.alphas, "Comma-separated alphas")->delimiter(',');
    sim_fnr->add_option("--n", cfg.n, "Number of passages")->capture_default_str();
    sim_fnr->add_option("--L", cfg.length, "Tokens per passage")->capture_default_str();
    sim_fnr->add_option("--seed", cfg.seed, "Sampling seed")->capture_default_str();
    sim_fnr->add_option("--format", cfg.format, "json|table")->check(CLI::IsMember({"json", "table"}));
    add_out(sim_fnr);
    add_jobs(sim_fnr);

    auto* sim_value = simulate->add_subcommand("bit-value", "Closed-form detection quantity in the two-token language");
    sim_value->add_option("--q1", cfg.q1, "Machine P(token = 1)")->capture_default_str();
    sim_value->add_option("--p1", cfg.p_series, "Human P(token = 1) schedule")->delimiter(',');
    sim_value->add_option("--witness", cfg.bit_witness, "identity|indicator|<model.json>")->capture_default_str();
    add_out(sim_value);

    auto* diagnose = app.add_subcommand("diagnose", "Normality, variance-ratio and TNR-bound diagnostics");
    diagnose->require_subcommand(1);
    auto* diag_norm = diagnose->add_subcommand("normality", "KS test of scores against N(0,1)");
    diag_norm->add_option("--scores", cfg.scores_path, "Whitespace-separated scores");
    diag_norm->add_option("--reports", cfg.report_paths, "Report JSONL file(s)");
    diag_norm->add_option("--label", cfg.label_filter, "Which reports to use")->check(CLI::IsMember({"human", "machine"}))
        ->capture_default_str();
    add_out(diag_norm);
    auto* diag_ratio = diagnose->add_subcommand("variance-ratio", "Conditional vs cross-passage variance of w");
    diag_ratio->add_option("--traces", cfg.traces_path, "Trace JSONL")->required();
    diag_ratio->add_option("--witness", cfg.witness_path, "Witness model JSON (default identity)");
    diag_ratio->add_option("--L-grid", cfg.length_grid, "Comma-separated prefix lengths")->delimiter(',');
    diag_ratio->add_option("--format", cfg.format, "json|table")->check(CLI::IsMember({"json", "table"}));
    diag_ratio->add_flag("--strict", cfg.strict, "Reject any invalid passage");
    add_out(diag_ratio);
    auto* diag_tnr = diagnose->add_subcommand("tnr-bound", "Empirical separation on human traces and the implied TNR bound");
    diag_tnr->add_option("--traces", cfg.traces_path, "Human trace JSONL")->required();
    diag_tnr->add_option("--witness", cfg.witness_path, "Witness model JSON (default identity)");
    diag_tnr->add_flag("--strict", cfg.strict, "Reject any invalid passage");
    add_alpha(diag_tnr);
    add_out(diag_tnr);

    std::vector<std::string> argv_storage;
    argv_storage.reserve(args.size() + 1);
    argv_storage.emplace_back("logitwitness");
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) {
        argv.push_back(a.c_str());
    }

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_code(ErrorKind::usage);
    }

    try {
        if (!config_path.empty()) {
            CLI::App* active = &app;
            while (!active->get_subcommands().empty()) {
                active = active->get_subcommands().front();
            }
            detail::apply_config(config_path, *active);
        }
        if (*train) return detail::cmd_train(cfg, out, err);
        if (*score) return detail::cmd_score(cfg, out, err);
        if (*eval) return detail::cmd_eval(cfg, out, err);
        if (*sim_bit) return detail::cmd_simulate_bit(cfg, out, err);
        if (*sim_markov) return detail::cmd_simulate_markov(cfg, out, err);
        if (*sim_fnr) return detail::cmd_simulate_fnr(cfg, out, err);
        if (*sim_value) return detail::cmd_simulate_bit_value(cfg, out, err);
        if (*diag_norm) return detail::cmd_diagnose_normality(cfg, out, err);
        if (*diag_ratio) return detail::cmd_diagnose_variance_ratio(cfg, out, err);
        if (*diag_tnr) return detail::cmd_diagnose_tnr_bound(cfg, out, err);
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        return exit_code(ErrorKind::usage);
    } catch (const Error& e) {
        const char* kind = e.kind() == ErrorKind::io ? "io" : e.kind() == ErrorKind::usage ? "usage" : "domain";
        nlohmann::ordered_json j;
        j["error"] = kind;
        j["message"] = e.what();
        err << j.dump() << '\n';
        return exit_code(e.kind());
    }
    return exit_code(ErrorKind::usage);
}

} // namespace lw::cli
