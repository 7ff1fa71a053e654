// covscan: change-point detection and inference for high-dimensional
// linear regression over CSV data.
//
// Subcommands: detect, path, estimate, infer, simulate, bench.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "covscan/csv.hpp"
#include "covscan/detect.hpp"
#include "covscan/diff.hpp"
#include "covscan/inference.hpp"
#include "covscan/parallel.hpp"
#include "covscan/sim.hpp"
#include "covscan/version.hpp"

namespace {

using namespace covscan;

struct CommonOpts {
    std::string input;
    std::string output;
    std::string plot_data;
    int threads = 0;
};

std::ostream& open_sink(const CommonOpts& opts, std::unique_ptr<std::ofstream>& holder) {
    if (opts.output.empty()) return std::cout;
    holder = std::make_unique<std::ofstream>(opts.output);
    if (!*holder) throw invalid_input("cannot open output file: " + opts.output);
    return *holder;
}

std::string fmt(double v, int digits = 12) { return format_double(v, digits); }

struct ThresholdSpec {
    std::string raw = "default";
    ThresholdPolicy parse(double trim) const {
        ThresholdPolicy policy;
        policy.trim = trim;
        if (raw == "auto") {
            policy.kind = ThresholdPolicy::Kind::Automatic;
        } else if (raw == "default") {
            policy.kind = ThresholdPolicy::Kind::DefaultFixed;
        } else if (raw.rfind("default:", 0) == 0) {
            policy.kind = ThresholdPolicy::Kind::DefaultFixed;
            policy.c_pi = std::stod(raw.substr(8));
        } else if (raw.rfind("fixed:", 0) == 0) {
            policy.kind = ThresholdPolicy::Kind::Fixed;
            policy.pi = std::stod(raw.substr(6));
        } else {
            throw CLI::ValidationError("--threshold",
                                       "expected auto | fixed:<v> | default[:c]");
        }
        return policy;
    }
};

double parse_trim(const std::string& raw) {
    if (raw == "default") return -1.0;
    return std::stod(raw);
}

double parse_cv_or_value(const std::string& raw, const char* flag) {
    if (raw == "cv") return -1.0;
    try {
        return std::stod(raw);
    } catch (...) {
        throw CLI::ValidationError(flag, "expected cv | <value>");
    }
}

std::vector<long> parse_changes(const std::string& raw) {
    std::vector<long> out;
    std::stringstream ss(raw);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stol(tok));
    }
    return out;
}

void print_provenance(std::ostream& os, const std::string& command,
                      const std::vector<std::pair<std::string, std::string>>& kv) {
    os << "# covscan " << kVersion << " " << command << "\n";
    for (const auto& [k, v] : kv) os << "# " << k << "=" << v << "\n";
}

std::string cps_to_string(const std::vector<long>& cps) {
    std::string s;
    for (size_t i = 0; i < cps.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(cps[i]);
    }
    return s;
}

SegmentationResult run_detect(const RegressionDataset& data, const ThresholdSpec& spec,
                              const std::string& trim_raw, bool standardize) {
    const double trim = parse_trim(trim_raw);
    return detect(data, spec.parse(trim), standardize);
}

void emit_detect(std::ostream& os, const RegressionDataset& data,
                 const SegmentationResult& res, const std::string& threshold_raw) {
    print_provenance(os, "detect",
                     {{"n", std::to_string(data.n())},
                      {"p", std::to_string(data.p())},
                      {"threshold", threshold_raw},
                      {"threshold_value", fmt(res.threshold_used)},
                      {"trimming", fmt(res.trimming)},
                      {"standardize", res.standardized ? "1" : "0"},
                      {"mad_constant", fmt(kMadConstant)}});
    os << "change_points: " << cps_to_string(res.change_points) << "\n";
    os << "q_hat\t" << res.q_hat() << "\n";
    os << "change\ttheta\tinterval_a\tinterval_b\tt_stat\tcoord\n";
    for (size_t j = 0; j < res.change_points.size(); ++j) {
        const auto& pk = res.peaks[j];
        os << (j + 1) << "\t" << res.change_points[j] << "\t" << pk.interval.a << "\t"
           << pk.interval.b << "\t" << fmt(pk.t_star) << "\t" << (pk.argmax_coord + 1)
           << "\n";
    }
}

int cmd_detect(const CommonOpts& common, const ThresholdSpec& spec,
               const std::string& trim_raw, bool standardize) {
    const RegressionDataset data = read_dataset_csv(common.input);
    const SegmentationResult res = run_detect(data, spec, trim_raw, standardize);
    std::unique_ptr<std::ofstream> holder;
    emit_detect(open_sink(common, holder), data, res, spec.raw);
    return 0;
}

int cmd_path(const CommonOpts& common, const std::string& trim_raw, bool standardize) {
    const RegressionDataset data = read_dataset_csv(common.input);
    const SolutionPath path = solution_path(data, parse_trim(trim_raw), standardize);
    const SegmentationResult pick = auto_select(path);
    std::unique_ptr<std::ofstream> holder;
    std::ostream& os = open_sink(common, holder);
    print_provenance(os, "path",
                     {{"n", std::to_string(data.n())},
                      {"p", std::to_string(data.p())},
                      {"trimming", fmt(path.trimming)},
                      {"standardize", path.standardized ? "1" : "0"},
                      {"max_t", fmt(path.max_t)}});
    os << "selected_change_points: " << cps_to_string(pick.change_points) << "\n";
    os << "entry\tnum_cps\tscore\tthreshold_low\tthreshold_high\tchange_points\n";
    for (size_t i = 0; i < path.entries.size(); ++i) {
        const auto& e = path.entries[i];
        os << i << "\t" << e.num_cps << "\t" << fmt(e.score) << "\t" << fmt(e.threshold_low)
           << "\t" << fmt(e.threshold_high) << "\t" << cps_to_string(e.change_points)
           << "\n";
    }
    if (!common.plot_data.empty()) {
        std::ofstream pd(common.plot_data);
        if (!pd) throw invalid_input("cannot open plot-data file: " + common.plot_data);
        pd << "entry\tmetric\tvalue\n";
        for (size_t i = 0; i < path.entries.size(); ++i) {
            pd << i << "\tnum_cps\t" << path.entries[i].num_cps << "\n";
            pd << i << "\tscore\t" << fmt(path.entries[i].score) << "\n";
        }
    }
    return 0;
}

int cmd_estimate(const CommonOpts& common, const ThresholdSpec& spec,
                 const std::string& trim_raw, bool standardize,
                 const std::string& changes_raw, const std::string& method_raw,
                 const std::string& lambda_raw) {
    const RegressionDataset data = read_dataset_csv(common.input);
    std::vector<long> cps = changes_raw.empty()
                                ? run_detect(data, spec, trim_raw, standardize).change_points
                                : parse_changes(changes_raw);
    DiffMethod method = DiffMethod::Lope;
    if (method_raw == "clom")
        method = DiffMethod::Clom;
    else if (method_raw == "naive")
        method = DiffMethod::Naive;
    else if (method_raw != "lope")
        throw CLI::ValidationError("--method", "expected lope | clom | naive");
    const double lambda_opt = parse_cv_or_value(lambda_raw, "--lambda");

    std::unique_ptr<std::ofstream> holder;
    std::ostream& os = open_sink(common, holder);
    print_provenance(os, "estimate",
                     {{"n", std::to_string(data.n())},
                      {"p", std::to_string(data.p())},
                      {"method", method_raw},
                      {"lambda", lambda_raw},
                      {"change_points", cps_to_string(cps)}});
    os << "change\ttheta\ta\tb\tlambda\tkkt_residual\tcoord\tdelta_hat\n";
    const auto anchors = anchor_intervals(cps, data.n());
    for (const auto& ai : anchors) {
        const double lambda =
            lambda_opt >= 0.0
                ? lambda_opt
                : cv_lambda(data, ai.a, ai.theta_hat, ai.b, method);
        const DiffEstimate est = estimate_at_anchor(data, ai, method, lambda);
        for (Index i = 0; i < est.delta.size(); ++i)
            os << ai.j << "\t" << ai.theta_hat << "\t" << ai.a << "\t" << ai.b << "\t"
               << fmt(est.lambda) << "\t" << fmt(est.kkt_residual) << "\t" << (i + 1)
               << "\t" << fmt(est.delta(i)) << "\n";
    }
    return 0;
}

int cmd_infer(const CommonOpts& common, const ThresholdSpec& spec,
              const std::string& trim_raw, bool standardize, const std::string& changes_raw,
              double alpha, int B, std::uint64_t seed, bool split, double eps,
              const std::string& ci_raw, const std::string& lambda_raw,
              const std::string& eta_raw) {
    const RegressionDataset data = read_dataset_csv(common.input);
    std::vector<long> cps = changes_raw.empty()
                                ? run_detect(data, spec, trim_raw, standardize).change_points
                                : parse_changes(changes_raw);
    InferOptions opt;
    opt.split = split;
    opt.eps = eps;
    opt.B = B;
    opt.seed = seed;
    opt.lambda = parse_cv_or_value(lambda_raw, "--lambda");
    opt.eta = parse_cv_or_value(eta_raw, "--eta");
    if (ci_raw == "gauss")
        opt.method = CiMethod::GaussianLimit;
    else if (ci_raw == "boot")
        opt.method = CiMethod::MultiplierBootstrap;
    else
        throw CLI::ValidationError("--ci", "expected gauss | boot");

    const auto bands = infer_all(data, cps, alpha, opt);
    std::unique_ptr<std::ofstream> holder;
    std::ostream& os = open_sink(common, holder);
    print_provenance(
        os, "infer",
        {{"n", std::to_string(data.n())},
         {"p", std::to_string(data.p())},
         {"alpha", fmt(alpha)},
         {"B", std::to_string(B)},
         {"seed", std::to_string(seed)},
         {"split", split ? "1" : "0"},
         {"eps", fmt(eps)},
         {"ci", ci_raw},
         {"rng", kRngDescription},
         {"change_points", cps_to_string(cps)}});
    os << "bands\t" << bands.size() << "\n";
    os << "change\ttheta\ta\tb\tlambda\teta\tquantile\tquantile_level\thalf_width\tpools_"
          "center_norm\trejected\n";
    for (const auto& band : bands) {
        std::string rej;
        for (size_t i = 0; i < band.rejected.size(); ++i) {
            if (i) rej += ",";
            rej += std::to_string(band.rejected[i] + 1);
        }
        os << band.change_index << "\t" << band.theta << "\t" << band.a << "\t" << band.b
           << "\t" << fmt(band.lambda_used) << "\t" << fmt(band.eta_used) << "\t"
           << fmt(band.quantile) << "\t" << fmt(band.quantile_level) << "\t"
           << fmt(band.half_width) << "\t" << (band.quantile_includes_center ? 1 : 0)
           << "\t" << (rej.empty() ? "-" : rej) << "\n";
    }
    os << "change\tcoord\tdelta_tilde\tlower\tupper\trejected\n";
    for (const auto& band : bands)
        for (Index i = 0; i < band.delta_tilde.size(); ++i) {
            const bool rej = !(band.lower(i) < 0.0 && 0.0 < band.upper(i));
            os << band.change_index << "\t" << (i + 1) << "\t" << fmt(band.delta_tilde(i))
               << "\t" << fmt(band.lower(i)) << "\t" << fmt(band.upper(i)) << "\t"
               << (rej ? 1 : 0) << "\n";
        }
    if (!common.plot_data.empty()) {
        std::ofstream pd(common.plot_data);
        if (!pd) throw invalid_input("cannot open plot-data file: " + common.plot_data);
        pd << "change\tcoord\tmetric\tvalue\n";
        for (const auto& band : bands)
            for (Index i = 0; i < band.delta_tilde.size(); ++i) {
                pd << band.change_index << "\t" << (i + 1) << "\tdelta_tilde\t"
                   << fmt(band.delta_tilde(i)) << "\n";
                pd << band.change_index << "\t" << (i + 1) << "\tlower\t" << fmt(band.lower(i))
                   << "\n";
                pd << band.change_index << "\t" << (i + 1) << "\tupper\t" << fmt(band.upper(i))
                   << "\n";
            }
    }
    return 0;
}

int cmd_simulate(const CommonOpts& common, ScenarioConfig cfg, const std::string& prefix,
                 bool run_detect_flag, const ThresholdSpec& spec, const std::string& trim_raw,
                 bool standardize, const std::string& config_path) {
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw invalid_input("cannot open config file: " + config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = scenario_from_kv(ss.str());
    }
    std::unique_ptr<std::ofstream> holder;
    std::ostream& os = open_sink(common, holder);
    print_provenance(os, "simulate",
                     {{"scenario", cfg.scenario},
                      {"n", std::to_string(cfg.n)},
                      {"p", std::to_string(cfg.p)},
                      {"seed", std::to_string(cfg.seed)},
                      {"reps", std::to_string(cfg.reps)},
                      {"rng", kRngDescription}});
    if (!prefix.empty()) {
        std::ofstream cfg_out(prefix + "_config.txt");
        if (!cfg_out) throw invalid_input("cannot write config next to " + prefix);
        cfg_out << scenario_to_kv(cfg);
    }
    os << "rep\tfile\ttruth\tq_true\tchange_points";
    if (run_detect_flag) os << "\tq_hat\testimated\thausdorff\tv_measure";
    os << "\n";
    for (long r = 0; r < cfg.reps; ++r) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, 0x73696dULL, static_cast<std::uint64_t>(r));
        auto [data, truth] = generate(cfg, rep_seed);
        std::string data_file = "-", truth_file = "-";
        if (!prefix.empty()) {
            data_file = prefix + "_rep" + std::to_string(r + 1) + "_data.csv";
            truth_file = prefix + "_rep" + std::to_string(r + 1) + "_truth.txt";
            write_dataset_csv(data_file, data);
            std::ofstream tf(truth_file);
            if (!tf) throw invalid_input("cannot open truth file: " + truth_file);
            tf << "change_points: " << cps_to_string(truth.thetas) << "\n";
            tf << "change\tcoord\tdelta\n";
            for (Index j = 0; j < truth.deltas.cols(); ++j)
                for (Index i = 0; i < truth.deltas.rows(); ++i)
                    if (truth.deltas(i, j) != 0.0)
                        tf << (j + 1) << "\t" << (i + 1) << "\t"
                           << format_double(truth.deltas(i, j)) << "\n";
        }
        os << (r + 1) << "\t" << data_file << "\t" << truth_file << "\t"
           << truth.thetas.size() << "\t" << cps_to_string(truth.thetas);
        if (run_detect_flag) {
            const SegmentationResult res = run_detect(data, spec, trim_raw, standardize);
            const EvalReport rep = evaluate_detection(res.change_points, truth.thetas, cfg.n);
            os << "\t" << res.q_hat() << "\t" << cps_to_string(res.change_points) << "\t"
               << fmt(rep.hausdorff) << "\t" << fmt(rep.vmeasure);
        }
        os << "\n";
    }
    return 0;
}

int cmd_bench(const CommonOpts& common, const std::string& n_list, const std::string& p_list,
              std::uint64_t seed) {
    std::unique_ptr<std::ofstream> holder;
    std::ostream& os = open_sink(common, holder);
    print_provenance(os, "bench", {{"threads", std::to_string(max_threads())}});
    os << "n\tp\tdetect_seconds\tq_hat\n";
    for (long n : parse_changes(n_list))
        for (long p : parse_changes(p_list)) {
            auto [data, truth] =
                gen_m1(n, p, 2.0, std::min<long>(5, p), n / 4, derive_seed(seed, n, p));
            const auto start = std::chrono::steady_clock::now();
            const SegmentationResult res = detect(data, ThresholdPolicy::defaults());
            const std::chrono::duration<double> dur = std::chrono::steady_clock::now() - start;
            os << n << "\t" << p << "\t" << fmt(dur.count(), 6) << "\t" << res.q_hat() << "\n";
        }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"change-point detection and differential-parameter inference for "
                 "high-dimensional linear regression"};
    app.set_version_flag("--version", covscan::kVersion);
    app.require_subcommand(1);

    CommonOpts common;
    ThresholdSpec threshold;
    std::string trim_raw = "default";
    bool standardize = false;
    std::string changes_raw;
    std::string method_raw = "lope";
    std::string lambda_raw = "cv";
    std::string eta_raw = "cv";
    std::string ci_raw = "boot";
    double alpha = 0.1;
    int B = 999;
    std::uint64_t seed = 0;
    bool split = false;
    double eps = 0.0;
    ScenarioConfig scenario;
    std::string prefix;
    bool sim_detect = false;
    std::string config_path;
    std::string bench_n = "500,1000,2000";
    std::string bench_p = "100,500";

    auto add_common = [&](CLI::App* cmd, bool needs_input) {
        if (needs_input)
            cmd->add_option("--input", common.input, "input CSV/TSV file")->required();
        cmd->add_option("--output", common.output, "output file (default: stdout)");
        cmd->add_option("--threads", common.threads,
                        "max worker threads (default: COVSCAN_THREADS or hardware)");
    };
    auto add_detect_opts = [&](CLI::App* cmd) {
        cmd->add_option("--threshold", threshold.raw, "auto | fixed:<v> | default[:c]");
        cmd->add_option("--trim", trim_raw, "trimming value or 'default' (2 log(np))");
        cmd->add_flag("--standardize", standardize, "MAD-standardize the regressor columns");
    };

    CLI::App* detect_cmd = app.add_subcommand("detect", "detect change points");
    add_common(detect_cmd, true);
    add_detect_opts(detect_cmd);

    CLI::App* path_cmd = app.add_subcommand("path", "solution path and elbow selection");
    add_common(path_cmd, true);
    path_cmd->add_option("--trim", trim_raw, "trimming value or 'default'");
    path_cmd->add_flag("--standardize", standardize, "MAD-standardize the regressor columns");
    path_cmd->add_option("--plot-data", common.plot_data, "long-format plot data export");

    CLI::App* est_cmd = app.add_subcommand("estimate", "estimate differential parameters");
    add_common(est_cmd, true);
    add_detect_opts(est_cmd);
    est_cmd->add_option("--changes", changes_raw, "comma-separated change points (skip detection)");
    est_cmd->add_option("--method", method_raw, "lope | clom | naive");
    est_cmd->add_option("--lambda", lambda_raw, "cv | <value>");

    CLI::App* infer_cmd = app.add_subcommand("infer", "simultaneous confidence bands");
    add_common(infer_cmd, true);
    add_detect_opts(infer_cmd);
    infer_cmd->add_option("--changes", changes_raw, "comma-separated change points (skip detection)");
    infer_cmd->add_option("--alpha", alpha, "simultaneous level (default 0.1)");
    infer_cmd->add_option("--B", B, "replicate count (default 999)");
    infer_cmd->add_option("--seed", seed, "rng seed");
    infer_cmd->add_flag("--split", split, "even/odd sample splitting");
    infer_cmd->add_option("--eps", eps, "covariance window shrink factor (default 0)");
    infer_cmd->add_option("--ci", ci_raw, "gauss | boot");
    infer_cmd->add_option("--lambda", lambda_raw, "cv | <value>");
    infer_cmd->add_option("--eta", eta_raw, "cv | <value>");
    infer_cmd->add_option("--plot-data", common.plot_data, "long-format plot data export");

    CLI::App* sim_cmd = app.add_subcommand("simulate", "generate scenario datasets");
    add_common(sim_cmd, false);
    sim_cmd->add_option("--scenario", scenario.scenario, "M1 | M2 | M3");
    sim_cmd->add_option("--n", scenario.n, "observations");
    sim_cmd->add_option("--p", scenario.p, "regressors");
    sim_cmd->add_option("--rho", scenario.rho, "M1 signal scale");
    sim_cmd->add_option("--gamma", scenario.gamma, "M2 Toeplitz decay");
    sim_cmd->add_option("--nu", scenario.nu, "M2 mean scale");
    sim_cmd->add_option("--sparsity", scenario.sparsity, "support size");
    sim_cmd->add_option("--theta", scenario.theta1, "single change location");
    sim_cmd->add_option("--seed", scenario.seed, "rng seed");
    sim_cmd->add_option("--reps", scenario.reps, "repetitions");
    sim_cmd->add_option("--config", config_path, "key=value scenario config file");
    sim_cmd->add_option("--output-prefix", prefix, "write datasets/truth under this prefix");
    sim_cmd->add_flag("--detect", sim_detect, "run detection and report metrics per rep");
    add_detect_opts(sim_cmd);

    CLI::App* bench_cmd = app.add_subcommand("bench", "detection timing grid");
    add_common(bench_cmd, false);
    bench_cmd->add_option("--n-grid", bench_n, "comma-separated n values");
    bench_cmd->add_option("--p-grid", bench_p, "comma-separated p values");
    bench_cmd->add_option("--seed", seed, "rng seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (common.threads > 0) set_max_threads(common.threads);
        if (detect_cmd->parsed()) return cmd_detect(common, threshold, trim_raw, standardize);
        if (path_cmd->parsed()) return cmd_path(common, trim_raw, standardize);
        if (est_cmd->parsed())
            return cmd_estimate(common, threshold, trim_raw, standardize, changes_raw,
                                method_raw, lambda_raw);
        if (infer_cmd->parsed())
            return cmd_infer(common, threshold, trim_raw, standardize, changes_raw, alpha, B,
                             seed, split, eps, ci_raw, lambda_raw, eta_raw);
        if (sim_cmd->parsed())
            return cmd_simulate(common, scenario, prefix, sim_detect, threshold, trim_raw,
                                standardize, config_path);
        if (bench_cmd->parsed()) return cmd_bench(common, bench_n, bench_p, seed);
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const covscan::invalid_input& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const covscan::numeric_failure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
