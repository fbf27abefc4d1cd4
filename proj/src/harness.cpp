#include "jcel/harness.hpp"

#include <atomic>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "jcel/rng.hpp"

namespace jcel {

double nmse_db(double ratio) {
    if (!(ratio >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
    if (ratio == 0.0) return kNmseFloorDb;
    return std::max(10.0 * std::log10(ratio), kNmseFloorDb);
}

double nmse_ratio(const VectorXcd& est, const VectorXcd& truth) {
    if (est.size() != truth.size()) throw ParameterError("nmse: shape mismatch");
    const double ref = truth.squaredNorm();
    if (!(ref > 0.0)) throw ParameterError("nmse: zero reference");
    return (est - truth).squaredNorm() / ref;
}

double nmse_ratio(const VectorXd& est, const VectorXd& truth) {
    return nmse_ratio(VectorXcd(est.cast<Complex>()), VectorXcd(truth.cast<Complex>()));
}

double nmse(const VectorXcd& est, const VectorXcd& truth) { return nmse_db(nmse_ratio(est, truth)); }

std::string version_string() {
#ifdef JCEL_VERSION
    return JCEL_VERSION;
#else
    return "unknown";
#endif
}

Scene experiment_scene(const ExperimentConfig& cfg, double sweep_value) {
    Scene s = build_scene(cfg, sweep_value);
    return cfg.baseline == Baseline::multi_bs ? multi_bs_scene(s) : s;
}

namespace {

double noise_watts(const ExperimentConfig& cfg) { return dbm_to_watts(cfg.noise_dbm); }

// Squared gain error of one (k, m) slice after aligning estimates to the true
// paths by delay; missing estimates count as zero gain.
double gain_error(const PathList& est, const std::vector<PathParams>& truth, double delta) {
    const std::size_t n = truth.size();
    VectorXd e(n), t(n);
    std::vector<Complex> g(n, Complex{});
    for (std::size_t i = 0; i < n; ++i) {
        t(i) = truth[i].delay;
        if (i < est.size()) {
            e(i) = est[i].delay_mean;
            g[i] = est[i].gain_mean;
        } else {
            e(i) = -1.0;
        }
    }
    const auto a = match_delays({e}, {t}, delta);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) err += std::norm(g[i] - truth[a.perm[0][i]].gain);
    return err;
}

}  // namespace

TrialRecord run_trial(const ExperimentConfig& cfg, double sweep_value, int trial) {
    TrialRecord rec;
    rec.sweep_value = sweep_value;
    rec.trial = trial;
    try {
        const Scene scene = experiment_scene(cfg, sweep_value);
        const auto paths = composite_paths(scene);
        const ChannelTensor h = channel_tensor(scene, paths);
        const auto pilots = pilot_matrix(scene.num_users(), frames_at(cfg, sweep_value), pilot_power_watts(cfg, sweep_value));
        Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(trial), StreamId::noise);
        FreqObservation obs = simulate_rx(h, pilots, noise_watts(cfg), rng);
        obs.seed = cfg.seed;

        const JcelResult res = jcel_run(obs, scene, jcel_options(cfg), &h);
        rec.channel_ratio = channel_error_ratio(res.channel, h);

        const double T = scene.sample_period();
        double gain_err = 0.0, gain_ref = 0.0;
        for (int k = 0; k < scene.num_users(); ++k)
            for (int m = 0; m < scene.num_waveguides(); ++m) {
                std::vector<PathParams> truth;
                for (const auto& p : paths)
                    if (p.user == k && p.waveguide == m) truth.push_back(p);
                for (const auto& p : truth) gain_ref += std::norm(p.gain);
                gain_err += gain_error(res.paths[k][m], truth, (T / 10.0) * (T / 10.0));
            }
        rec.gain_ratio = gain_err / gain_ref;

        double pos_err = 0.0, pos_ref = 0.0;
        for (int k = 0; k < scene.num_users(); ++k) {
            const Vec2 truth = scene.users[k].position.head<2>();
            pos_err += (res.positions[k].mean - truth).squaredNorm();
            pos_ref += truth.squaredNorm();
        }
        rec.position_ratio = pos_err / pos_ref;

        rec.iterations = res.iterations;
        rec.clamp_events = res.clamp_events;
        rec.extractor_failures = res.extractor_failures;
        rec.localization_failures = res.localization_failures;
        rec.trace = res.trace;
        rec.positions = res.positions;
        for (const auto& a : res.assignments) rec.assignments.push_back(a.perm);
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

CrlbRow crlb_row(const ExperimentConfig& cfg, double sweep_value) {
    const Scene scene = experiment_scene(cfg, sweep_value);
    const auto pilots = pilot_matrix(scene.num_users(), frames_at(cfg, sweep_value), pilot_power_watts(cfg, sweep_value));
    const auto f = fim(scene, pilots.entries, noise_watts(cfg));
    const auto b = crlb_bounds(f);
    return {nmse_db(b.channel_nmse), nmse_db(b.gain_nmse), nmse_db(b.position_nmse)};
}

SchemeResult run_scheme(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t points = cfg.sweep_values.size();
    const std::size_t total = points * static_cast<std::size_t>(cfg.trials);
    SchemeResult out;
    out.trials.resize(total);

    unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::thread::hardware_concurrency();
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(total)));
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t i = next++; i < total; i = next++) {
            const std::size_t s = i / cfg.trials;
            const int t = static_cast<int>(i % cfg.trials);
            out.trials[i] = run_trial(cfg, cfg.sweep_values[s], t);
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    for (std::size_t s = 0; s < points; ++s) {
        MetricRow row;
        row.sweep_value = cfg.sweep_values[s];
        double h = 0.0, z = 0.0, p = 0.0, iters = 0.0;
        int ok = 0;
        for (int t = 0; t < cfg.trials; ++t) {
            const auto& r = out.trials[s * cfg.trials + t];
            ++row.trials;
            if (!r.ok) {
                ++row.failed_trials;
                continue;
            }
            ++ok;
            h += r.channel_ratio;
            z += r.gain_ratio;
            p += r.position_ratio;
            iters += r.iterations;
            row.clamp_events += r.clamp_events;
            row.extractor_failures += r.extractor_failures;
            row.localization_failures += r.localization_failures;
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.nmse_h_db = ok ? nmse_db(h / ok) : nan;
        row.nmse_z_db = ok ? nmse_db(z / ok) : nan;
        row.nmse_pos_db = ok ? nmse_db(p / ok) : nan;
        row.mean_outer_iterations = ok ? iters / ok : nan;
        try {
            const auto c = crlb_row(cfg, row.sweep_value);
            row.crlb_h_db = c.channel_db;
            row.crlb_z_db = c.gain_db;
            row.crlb_pos_db = c.position_db;
        } catch (const std::exception&) {
            row.crlb_h_db = row.crlb_z_db = row.crlb_pos_db = nan;
        }
        out.rows.push_back(row);
    }
    return out;
}

SchemeResult loss_sweep(ExperimentConfig cfg) {
    cfg.sweep_variable = SweepVariable::k_loss;
    cfg.sweep_values = {0.01, 0.05, 0.1};
    return run_scheme(cfg);
}

}  // namespace jcel
