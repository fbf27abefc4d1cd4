// Acceptance checks. Prints one PASS/FAIL line per criterion; exit code is the
// number of failures. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>

#include "jcel/bpvi_delay.hpp"
#include "jcel/config.hpp"
#include "jcel/crlb.hpp"
#include "jcel/harness.hpp"
#include "jcel/jcel_run.hpp"
#include "jcel/localize.hpp"
#include "jcel/omp_delay.hpp"
#include "jcel/rng.hpp"
#include "jcel/selftest.hpp"

using namespace jcel;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double db(double ratio) { return 10.0 * std::log10(ratio); }

ExperimentConfig explicit_scene(std::vector<Vec3> pas, std::vector<Vec2> users) {
    ExperimentConfig cfg;
    cfg.scheme = 0;
    SceneSpec spec;
    spec.waveguides.push_back({std::move(pas), std::nullopt});
    spec.users = std::move(users);
    cfg.scene = spec;
    return cfg;
}

// 1. Analytic FIM vs Monte-Carlo score covariance; Jacobian vs finite differences.
Outcome crlb_self_consistency() {
    auto cfg = explicit_scene({{-10, -5, 3}, {-10, 0, 3}}, {{2.85, 1.0}});
    cfg.num_subcarriers = 4;
    cfg.cp_length = 2;
    cfg.bandwidth = 10e6;  // T = 100 ns keeps both paths inside the prefix at L = 4
    cfg.num_frames = 2;
    const Scene scene = build_scene(cfg);
    const auto paths = composite_paths(scene);
    const auto pilots = pilot_matrix(1, 2, pilot_power_watts(cfg));
    const double noise = dbm_to_watts(cfg.noise_dbm);
    const int L = scene.num_subcarriers;
    const double T = scene.sample_period();
    const auto f = fim(scene, pilots.entries, noise);
    const auto np = f.fim.rows();

    // Independent model: gains free, delays from the user position.
    const Vec3 user = scene.users[0].position;
    std::vector<double> inner(paths.size());
    for (std::size_t n = 0; n < paths.size(); ++n)
        inner[n] = paths[n].delay - (user - scene.waveguides[0].pas[n].position).norm() / kSpeedOfLight;
    const auto N = static_cast<Eigen::Index>(paths.size());
    auto model_h = [&](const VectorXd& th, int l) {
        Complex h{};
        for (Eigen::Index n = 0; n < N; ++n) {
            const Vec3 p(th(2 * N), th(2 * N + 1), 0.0);
            const double tau = inner[n] + (p - scene.waveguides[0].pas[n].position).norm() / kSpeedOfLight;
            h += Complex(th(n), th(N + n)) * std::polar(1.0, -kTwoPi * tau * l / (L * T));
        }
        return h;
    };
    VectorXd theta(np);
    for (Eigen::Index n = 0; n < N; ++n) {
        theta(n) = paths[n].gain.real();
        theta(N + n) = paths[n].gain.imag();
    }
    theta(2 * N) = user.x();
    theta(2 * N + 1) = user.y();

    // Jacobian of h[l] against central differences.
    double jac_err = 0.0;
    std::vector<MatrixXcd> dh(L, MatrixXcd(1, np));
    for (int l = 0; l < L; ++l) {
        for (Eigen::Index j = 0; j < np; ++j) {
            const double step = 1e-6 * std::max(std::abs(theta(j)), j < 2 * N ? std::abs(paths[0].gain) : 1.0);
            VectorXd a = theta, b = theta;
            a(j) += step;
            b(j) -= step;
            dh[l](0, j) = (model_h(a, l) - model_h(b, l)) / (2.0 * step);
        }
        const MatrixXcd J = jacobian_h(scene, l);
        for (Eigen::Index j = 0; j < np; ++j)
            jac_err = std::max(jac_err, std::abs(J(0, j) - dh[l](0, j)) / std::max(dh[l].col(j).norm(), 1e-300));
    }

    // Score s = 2/sigma^2 sum_l Re[(d mu_l)^H (y_l - mu_l)], mu_l = h_l X.
    const int draws = 100000;
    Rng rng = Rng::stream(7, 0, StreamId::test);
    const MatrixXcd& X = pilots.entries;
    MatrixXd acc = MatrixXd::Zero(np, np);
    VectorXd s(np);
    for (int d = 0; d < draws; ++d) {
        s.setZero();
        for (int l = 0; l < L; ++l)
            for (Eigen::Index p = 0; p < X.cols(); ++p) {
                const Complex w = rng.complex_normal(noise);
                for (Eigen::Index j = 0; j < np; ++j) s(j) += 2.0 / noise * std::real(std::conj(dh[l](0, j) * X(0, p)) * w);
            }
        acc.noalias() += s * s.transpose();
    }
    acc /= draws;
    double fim_err = 0.0;
    for (Eigen::Index i = 0; i < np; ++i)
        for (Eigen::Index j = 0; j < np; ++j)
            fim_err = std::max(fim_err, std::abs(acc(i, j) - f.fim(i, j)) / std::sqrt(f.fim(i, i) * f.fim(j, j)));
    return {fim_err <= 0.03 && jac_err <= 1e-6,
            fmt("max normalized FIM deviation %.4f (<= 0.03), Jacobian rel. error %.2e (<= 1e-6)", fim_err, jac_err)};
}

// 2. Noiseless on-grid single path: EP + OMP recovers the channel.
Outcome noiseless_recovery() {
    auto cfg = explicit_scene({{-10, 0, 3}}, {{2.85, 1.0}});
    const Scene scene = build_scene(cfg);
    auto paths = composite_paths(scene);
    const auto dict = build_dictionary(scene.num_subcarriers, scene.cp_length, cfg.dictionary_size, scene.sample_period());
    Eigen::Index idx = 0;
    (dict.grid.array() - paths[0].delay).abs().minCoeff(&idx);
    paths[0].delay = dict.grid(idx);
    const auto h = channel_tensor(scene, paths);
    const auto pilots = pilot_matrix(1, cfg.num_frames, pilot_power_watts(cfg));
    FreqObservation obs;
    obs.pilots = pilots;
    for (const auto& hl : h) obs.y.push_back(hl * pilots.entries);
    double energy = 0.0;
    for (const auto& y : obs.y) energy += y.squaredNorm();
    obs.noise_var = 1e-16 * energy / (obs.y.size() * obs.y[0].size());

    JcelOptions opt = jcel_options(cfg);
    opt.extractor = Extractor::omp;
    opt.localize = false;
    opt.max_outer = 2;
    const auto res = jcel_run(obs, scene, opt, &h);
    const double nmse = nmse_db(channel_error_ratio(res.channel, h));
    return {nmse <= -100.0 && res.iterations <= 2,
            fmt("channel NMSE %.1f dB after %d outer iterations (<= -100 dB within 2)", nmse, res.iterations)};
}

// 3. BP-VI single-tone delay accuracy against the single-tone CRLB.
Outcome gridless_accuracy() {
    const int L = 32;
    const double T = 10e-9;
    const double noise = 0.01;  // unit gain, 20 dB per-sample SNR
    BpviOptions opt;
    double se = 0.0, bound = 0.0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::stream(3, t, StreamId::test);
        const double tau = rng.uniform(0.05, 0.95) * opt.cp_length * T;
        const Complex z = std::polar(1.0, rng.uniform(-kPi, kPi));
        VectorXcd h(L);
        for (int l = 0; l < L; ++l) h(l) = z * std::polar(1.0, -kTwoPi * tau * l / (L * T)) + rng.complex_normal(noise);
        const auto est = bpvi_extract(h, noise, 1, opt);
        se += std::pow(est[0].delay_mean - tau, 2);
        bound += tone_delay_crlb(z, tau, noise, L, T);
    }
    const double gap = db(se / bound);
    return {gap <= 3.0, fmt("delay MSE %.2f dB above the single-tone CRLB (<= 3 dB), RMSE %.3e s", gap,
                            std::sqrt(se / trials))};
}

// 4. Newton localization from (1, 1) with exact delays on the six-anchor geometry.
Outcome localization_geometry() {
    auto cfg = scheme_config(2);
    const Scene scene = build_scene(cfg);
    const auto paths = composite_paths(scene);
    const AnchorSet anchors = anchor_set(scene);
    std::vector<PathList> est(scene.num_waveguides());
    for (const auto& p : paths)
        if (p.user == 0) {
            PathEstimate e;
            e.delay_mean = p.delay;
            e.delay_var = 1e-20;
            est[p.waveguide].push_back(e);
        }
    // Slots in reverse PA order so the association step has work to do.
    for (auto& list : est) std::reverse(list.begin(), list.end());
    LocalizeOptions opt;
    opt.region = scene.region;
    opt.delta = std::pow(scene.sample_period() / 10.0, 2);
    const auto res = localize_newton(est, anchors, Vec2(1.0, 1.0), opt);
    const double err = (res.position.mean - Vec2(2.85, 1.0)).norm();
    return {res.position.converged && err <= 1e-6 && res.position.iterations <= 10,
            fmt("error %.2e m after %d iterations (<= 1e-6 m within 10), converged=%d", err, res.position.iterations,
                res.position.converged)};
}

ExperimentConfig scheme_at(int scheme, double power, int trials) {
    auto cfg = scheme_config(scheme);
    cfg.sweep_variable = SweepVariable::tx_power_dbm;
    cfg.sweep_values = {power};
    cfg.tx_power_dbm = power;
    cfg.trials = trials;
    return cfg;
}

// 5. Scheme 1 localization NMSE near the CRLB.
Outcome crlb_proximity() {
    const auto row = run_scheme(scheme_at(1, 8.0, 50)).rows.at(0);
    const double gap = row.nmse_pos_db - row.crlb_pos_db;
    return {std::abs(gap) <= 3.0 && row.failed_trials == 0,
            fmt("position NMSE %.2f dB vs CRLB %.2f dB, gap %+.2f dB (|gap| <= 3 dB)", row.nmse_pos_db, row.crlb_pos_db,
                gap)};
}

// 6. Scheme 4 channel NMSE trace settles by outer iteration 6.
Outcome convergence_speed() {
    auto cfg = scheme_config(4);
    cfg.sweep_values = {4.0, 8.0, 12.0};
    cfg.trials = 20;
    const auto res = run_scheme(cfg);
    bool pass = true;
    std::string detail;
    for (double pt : cfg.sweep_values) {
        std::vector<std::vector<double>> traces;
        std::size_t len = 0;
        for (const auto& t : res.trials)
            if (t.ok && t.sweep_value == pt && !t.trace.empty()) {
                std::vector<double> lin;
                for (const auto& it : t.trace) lin.push_back(std::pow(10.0, it.channel_nmse_db / 10.0));
                len = std::max(len, lin.size());
                traces.push_back(std::move(lin));
            }
        if (traces.empty()) return {false, "no successful trials"};
        std::vector<double> median(len);
        for (std::size_t i = 0; i < len; ++i) {
            std::vector<double> v;
            for (const auto& tr : traces) v.push_back(tr[std::min(i, tr.size() - 1)]);
            std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
            median[i] = v[v.size() / 2];
        }
        const double final_value = median.back();
        const double at6 = median[std::min<std::size_t>(5, len - 1)];
        std::size_t first = len;
        for (std::size_t i = 0; i < len; ++i)
            if (std::abs(median[i] - final_value) <= 0.1 * final_value) {
                first = i + 1;
                break;
            }
        const bool ok = std::abs(at6 - final_value) <= 0.1 * final_value;
        pass = pass && ok;
        detail += fmt("P_t=%g: iter6 %.2f dB, final %.2f dB, first within 10%% at %zu; ", pt, db(at6), db(final_value), first);
    }
    return {pass, detail};
}

// 7. BP-VI beats OMP at L = 64; OMP floors at high power in PASS mode.
Outcome extractor_ordering() {
    auto cfg = scheme_config(3);
    cfg.sweep_variable = SweepVariable::num_subcarriers;
    cfg.sweep_values = {64};
    cfg.tx_power_dbm = 8.0;
    cfg.trials = 50;
    cfg.extractor = Extractor::bpvi;
    const auto bp = run_scheme(cfg).rows.at(0);
    cfg.extractor = Extractor::omp;
    const auto om = run_scheme(cfg).rows.at(0);

    auto floor_cfg = scheme_config(1);
    floor_cfg.sweep_values = {12.0, 16.0};
    floor_cfg.trials = 50;
    floor_cfg.extractor = Extractor::omp;
    const auto rows = run_scheme(floor_cfg).rows;
    const double flat = std::abs(rows.at(1).nmse_h_db - rows.at(0).nmse_h_db);
    return {bp.nmse_h_db <= om.nmse_h_db && flat <= 1.0,
            fmt("L=64: BP-VI %.2f dB vs OMP %.2f dB; OMP 12->16 dBm change %.2f dB (<= 1 dB)", bp.nmse_h_db,
                om.nmse_h_db, flat)};
}

// 8. Multi-BS cooperative baseline vs PASS localization.
Outcome baseline_ordering() {
    auto cfg = scheme_at(1, 8.0, 50);
    const auto pass_row = run_scheme(cfg).rows.at(0);
    cfg.baseline = Baseline::multi_bs;
    const auto multi_row = run_scheme(cfg).rows.at(0);
    const double gap = pass_row.nmse_pos_db - multi_row.nmse_pos_db;
    return {gap >= 0.0 && gap <= 3.0,
            fmt("position NMSE PASS %.2f dB, multi-BS %.2f dB, gap %.2f dB (0 <= gap <= 3); CRLBs %.2f / %.2f dB",
                pass_row.nmse_pos_db, multi_row.nmse_pos_db, gap, pass_row.crlb_pos_db, multi_row.crlb_pos_db)};
}

// 9. Waveguide attenuation sweep.
Outcome loss_sweep_check() {
    auto cfg = scheme_at(1, 8.0, 50);
    cfg.sweep_variable = SweepVariable::k_loss;
    cfg.sweep_values = {0.0, 0.01, 0.05, 0.1};
    const auto rows = run_scheme(cfg).rows;
    bool pass = true;
    std::string detail;
    for (const auto& [name, member] : {std::pair{"position", &MetricRow::nmse_pos_db}, std::pair{"channel", &MetricRow::nmse_h_db}}) {
        const double n0 = rows[0].*member, n1 = rows[1].*member, n5 = rows[2].*member, n10 = rows[3].*member;
        const bool ok = n10 >= n5 && n5 >= n1 && n1 - n0 <= 1.5;
        pass = pass && ok;
        detail += fmt("%s: %.2f / %.2f / %.2f / %.2f dB at k=0/0.01/0.05/0.1; ", name, n0, n1, n5, n10);
    }
    return {pass, detail};
}

// 10. Invariant suite.
Outcome property_suite() {
    const auto start = std::chrono::steady_clock::now();
    const auto results = run_selftest(1);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool pass = secs < 120.0;
    int failed = 0;
    for (const auto& r : results)
        if (!r.passed) {
            pass = false;
            ++failed;
        }
    return {pass, fmt("%zu checks, %d failed, %.2f s (< 120 s)", results.size(), failed, secs)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"CRLB self-consistency", crlb_self_consistency},
        {"noiseless exact recovery", noiseless_recovery},
        {"gridless accuracy", gridless_accuracy},
        {"localization geometry", localization_geometry},
        {"CRLB proximity", crlb_proximity},
        {"convergence speed", convergence_speed},
        {"extractor ordering", extractor_ordering},
        {"baseline ordering", baseline_ordering},
        {"loss sweep", loss_sweep_check},
        {"property suite", property_suite},
    };
    // Wall-clock limits per criterion, seconds.
    const double limits[] = {60, 1, 60, 1, 1800, 1200, 1e9, 1e9, 1e9, 120};
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs > limits[i]) {
            o.pass = false;
            o.detail += fmt(" [runtime %.1f s over limit %.0f s]", secs, limits[i]);
        }
        if (!o.pass) ++failures;
        std::printf("criterion %2d %-26s %s  %s (%.1f s)\n", id, criteria[i].first, o.pass ? "PASS" : "FAIL",
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures;
}
