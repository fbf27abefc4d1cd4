#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "jcel/config.hpp"
#include "jcel/harness.hpp"
#include "jcel/selftest.hpp"

namespace {

struct Overrides {
    std::string extractor;
    std::string baseline;
    int trials = 0;
    std::int64_t seed = -1;
    int threads = -1;
    std::string out;
    std::string sweep;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--extractor", o.extractor, "Delay extractor")->check(CLI::IsMember({"omp", "bpvi"}));
    cmd->add_option("--baseline", o.baseline, "Deployment")->check(CLI::IsMember({"pass", "multi_bs"}));
    cmd->add_option("--trials", o.trials, "Monte-Carlo trials per sweep point")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "Base random seed")->check(CLI::NonNegativeNumber);
    cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--sweep", o.sweep, "Sweep as variable=v1,v2,... (tx_power_dbm, num_subcarriers, num_frames, k_loss)");
}

void parse_sweep(const std::string& text, jcel::ExperimentConfig& cfg) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw jcel::ParameterError("--sweep expects variable=v1,v2,...");
    cfg.sweep_variable = jcel::parse_sweep_variable(text.substr(0, eq));
    cfg.sweep_values.clear();
    std::stringstream ss(text.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) throw jcel::ParameterError("--sweep: bad value '" + item + "'");
        cfg.sweep_values.push_back(v);
    }
}

void apply(const Overrides& o, jcel::ExperimentConfig& cfg) {
    if (!o.extractor.empty()) cfg.extractor = jcel::parse_extractor(o.extractor);
    if (!o.baseline.empty()) cfg.baseline = jcel::parse_baseline(o.baseline);
    if (o.trials > 0) cfg.trials = o.trials;
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    if (o.threads >= 0) cfg.threads = o.threads;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.sweep.empty()) parse_sweep(o.sweep, cfg);
    cfg.validate();
}

void print_rows(const jcel::ExperimentConfig& cfg, const std::vector<jcel::MetricRow>& rows) {
    std::printf("%-14s %10s %10s %10s %10s %10s %10s %7s %6s\n", jcel::to_string(cfg.sweep_variable).c_str(), "nmse_h",
                "crlb_h", "nmse_z", "crlb_z", "nmse_pos", "crlb_pos", "iters", "failed");
    for (const auto& r : rows)
        std::printf("%-14g %10.2f %10.2f %10.2f %10.2f %10.2f %10.2f %7.1f %6d\n", r.sweep_value, r.nmse_h_db, r.crlb_h_db,
                    r.nmse_z_db, r.crlb_z_db, r.nmse_pos_db, r.crlb_pos_db, r.mean_outer_iterations, r.failed_trials);
}

int run_experiment(const jcel::ExperimentConfig& cfg, bool loss) {
    const auto result = loss ? jcel::loss_sweep(cfg) : jcel::run_scheme(cfg);
    jcel::ExperimentConfig written = cfg;
    if (loss) {
        written.sweep_variable = jcel::SweepVariable::k_loss;
        written.sweep_values = {0.01, 0.05, 0.1};
    }
    print_rows(written, result.rows);
    jcel::emit_results(result, written, cfg.output_dir);
    std::cout << "results written to " << cfg.output_dir << "\n";
    for (const auto& t : result.trials)
        if (!t.ok) std::cerr << "trial " << t.trial << " at " << t.sweep_value << " failed: " << t.error << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint channel estimation and localization for pinching-antenna uplinks"};
    app.set_version_flag("--version", jcel::version_string());
    app.require_subcommand(1);

    Overrides sim_o, scheme_o, crlb_o;
    std::string sim_config;
    auto* sim = app.add_subcommand("simulate", "Run the experiment described by a config file");
    sim->add_option("--config", sim_config, "JSON config file")->required()->check(CLI::ExistingFile);
    add_overrides(sim, sim_o);

    int scheme_id = 1;
    bool loss = false;
    auto* scheme = app.add_subcommand("scheme", "Run one of the canned schemes");
    scheme->add_option("id", scheme_id, "Scheme number")->required()->check(CLI::Range(1, 4));
    scheme->add_flag("--loss", loss, "Sweep the waveguide attenuation constant instead");
    std::string write_config;
    scheme->add_option("--write-config", write_config, "Write the resolved config to this file and exit");
    add_overrides(scheme, scheme_o);

    int crlb_scheme = 1;
    std::string crlb_config;
    auto* crlb = app.add_subcommand("crlb", "Print the bounds only");
    crlb->add_option("--scheme", crlb_scheme, "Scheme number")->check(CLI::Range(1, 4));
    crlb->add_option("--config", crlb_config, "JSON config file")->check(CLI::ExistingFile);
    add_overrides(crlb, crlb_o);

    std::uint64_t selftest_seed = 1;
    auto* self = app.add_subcommand("selftest", "Run the invariant suite");
    self->add_option("--seed", selftest_seed, "Seed of the randomized checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            auto cfg = jcel::load_config(sim_config);
            apply(sim_o, cfg);
            return run_experiment(cfg, false);
        }
        if (*scheme) {
            auto cfg = jcel::scheme_config(scheme_id);
            apply(scheme_o, cfg);
            if (!write_config.empty()) {
                jcel::save_config(cfg, write_config);
                return 0;
            }
            return run_experiment(cfg, loss);
        }
        if (*crlb) {
            auto cfg = crlb_config.empty() ? jcel::scheme_config(crlb_scheme) : jcel::load_config(crlb_config);
            apply(crlb_o, cfg);
            std::printf("%-14s %10s %10s %10s\n", jcel::to_string(cfg.sweep_variable).c_str(), "crlb_h", "crlb_z",
                        "crlb_pos");
            for (double v : cfg.sweep_values) {
                const auto row = jcel::crlb_row(cfg, v);
                std::printf("%-14g %10.2f %10.2f %10.2f\n", v, row.channel_db, row.gain_db, row.position_db);
            }
            return 0;
        }
        if (*self) {
            bool ok = true;
            for (const auto& r : jcel::run_selftest(selftest_seed)) {
                std::printf("%-4s %-45s worst %.3e  tol %.1e  cases %d %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                            r.worst, r.tolerance, r.cases, r.detail.c_str());
                ok = ok && r.passed;
            }
            return ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
