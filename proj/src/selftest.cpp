#include "jcel/selftest.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "jcel/config.hpp"
#include "jcel/ep.hpp"
#include "jcel/localize.hpp"
#include "jcel/rng.hpp"
#include "jcel/scene.hpp"
#include "jcel/vonmises.hpp"
#include "jcel/waveform.hpp"

namespace jcel {

namespace {

PropertyResult make(std::string name, double tolerance) {
    PropertyResult r;
    r.name = std::move(name);
    r.tolerance = tolerance;
    return r;
}

void finish(PropertyResult& r) { r.passed = r.cases > 0 && r.worst <= r.tolerance; }

VectorXcd naive_dft(const VectorXcd& x) {
    const auto n = x.size();
    VectorXcd out = VectorXcd::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index t = 0; t < n; ++t)
            out(k) += x(t) * std::polar(1.0, -kTwoPi * static_cast<double>((k * t) % n) / static_cast<double>(n));
    return out;
}

VectorXcd random_cvec(Rng& rng, Eigen::Index n) {
    VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.complex_normal(1.0);
    return v;
}

}  // namespace

PropertyResult check_dft_shift(std::uint64_t seed) {
    auto r = make("circular-shift/DFT identity", 1e-12);
    Rng rng = Rng::stream(seed, 0, StreamId::test);
    const double T = 10e-9;
    for (int L : {4, 8, 16, 32, 64}) {
        for (int rep = 0; rep < 10; ++rep) {
            // DFT(x shifted by d) = DFT(x) .* exp(-j 2 pi d l / L)
            const VectorXcd x = random_cvec(rng, L);
            const int d = static_cast<int>(rng.uniform(0.0, L)) % L;
            VectorXcd shifted(L);
            for (int t = 0; t < L; ++t) shifted((t + d) % L) = x(t);
            const VectorXcd lhs = naive_dft(shifted);
            VectorXcd rhs = naive_dft(x);
            for (int l = 0; l < L; ++l) rhs(l) *= std::polar(1.0, -kTwoPi * static_cast<double>((d * l) % L) / L);
            r.worst = std::max(r.worst, (lhs - rhs).norm() / rhs.norm());
            ++r.cases;

            // An on-grid path of the channel model is the DFT of a unit tap at d.
            std::vector<PathParams> paths(1);
            paths[0].gain = rng.complex_normal(1.0);
            paths[0].delay = d * T;
            VectorXcd taps = VectorXcd::Zero(L);
            taps(d) = paths[0].gain;
            const VectorXcd expected = naive_dft(taps);
            VectorXcd model(L);
            for (int l = 0; l < L; ++l) model(l) = freq_channel(paths, l, L, T, 1, 1)(0, 0);
            r.worst = std::max(r.worst, (model - expected).norm() / expected.norm());
            ++r.cases;
        }
    }
    finish(r);
    return r;
}

PropertyResult check_bessel_roundtrip(std::uint64_t seed) {
    auto r = make("Bessel ratio round trip", 1e-8);
    Rng rng = Rng::stream(seed, 1, StreamId::test);
    for (int i = 0; i < 400; ++i) {
        const double ratio = rng.uniform(0.0, 0.9999);
        const double kappa = bessel_ratio_inv(ratio);
        r.worst = std::max(r.worst, std::abs(bessel_ratio(kappa) - ratio));
        ++r.cases;
    }
    for (int i = 0; i < 200; ++i) {
        const double kappa = std::pow(10.0, rng.uniform(-3.0, 6.0));
        const double back = bessel_ratio_inv(bessel_ratio(kappa));
        r.worst = std::max(r.worst, std::abs(back - kappa) / kappa);
        ++r.cases;
    }
    finish(r);
    return r;
}

PropertyResult check_hungarian_exhaustive(std::uint64_t seed) {
    auto r = make("Hungarian vs exhaustive 5x5", 1e-12);
    Rng rng = Rng::stream(seed, 2, StreamId::test);
    for (int rep = 0; rep < 300; ++rep) {
        const int n = 1 + rep % 5;
        MatrixXd cost(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                // Integer-valued costs force ties now and then.
                cost(i, j) = rep % 3 == 0 ? std::floor(rng.uniform(0.0, 4.0)) : rng.uniform(-5.0, 5.0);
        const auto perm = hungarian(cost);
        double got = 0.0;
        std::vector<int> seen(n, 0);
        for (int i = 0; i < n; ++i) {
            got += cost(i, perm[i]);
            ++seen[perm[i]];
        }
        if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) {
            r.worst = std::numeric_limits<double>::infinity();
            r.detail = "result is not a permutation";
        }
        std::vector<int> p(n);
        std::iota(p.begin(), p.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            double c = 0.0;
            for (int i = 0; i < n; ++i) c += cost(i, p[i]);
            best = std::min(best, c);
        } while (std::next_permutation(p.begin(), p.end()));
        r.worst = std::max(r.worst, std::abs(got - best));
        ++r.cases;
    }
    finish(r);
    return r;
}

PropertyResult check_fusion_grid(std::uint64_t seed) {
    auto r = make("fuse_position vs 1 cm grid argmin", 0.01);
    Rng rng = Rng::stream(seed, 3, StreamId::test);
    const Scene scene = build_scene(scheme_config(2));
    const AnchorSet anchors = anchor_set(scene);
    const Region& region = scene.region;
    const double step = 0.01;
    for (int rep = 0; rep < 5; ++rep) {
        const Vec2 truth(rng.uniform(region.x_min + 1, region.x_max - 1), rng.uniform(region.y_min + 1, region.y_max - 1));
        const Vec2 around = truth + Vec2(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        std::vector<DelayMeasurement> meas;
        for (std::size_t m = 0; m < anchors.positions.size(); ++m)
            for (std::size_t n = 0; n < anchors.positions[m].size(); ++n) {
                DelayMeasurement z;
                z.lin = linearize_delay(anchors.positions[m][n], around, anchors.intrinsic[m][n]);
                z.var = std::pow(rng.uniform(0.05, 0.5) * 1e-9, 2);
                z.delay = predicted_delay(anchors.positions[m][n], truth, anchors.intrinsic[m][n]) +
                          std::sqrt(z.var) * rng.normal();
                meas.push_back(z);
            }
        const auto fused = fuse_position(meas);
        if (!region.contains(fused.mean)) continue;
        double best = std::numeric_limits<double>::infinity();
        Vec2 arg = Vec2::Zero();
        const int nx = static_cast<int>(std::round((region.x_max - region.x_min) / step));
        const int ny = static_cast<int>(std::round((region.y_max - region.y_min) / step));
        for (int i = 0; i <= nx; ++i)
            for (int j = 0; j <= ny; ++j) {
                const Vec2 p(region.x_min + i * step, region.y_min + j * step);
                double c = 0.0;
                for (const auto& z : meas) {
                    const double e = z.delay - (z.lin.a * p.x() + z.lin.b * p.y() + z.lin.c);
                    c += e * e / z.var;
                }
                if (c < best) {
                    best = c;
                    arg = p;
                }
            }
        r.worst = std::max(r.worst, (arg - fused.mean).norm());
        ++r.cases;
    }
    finish(r);
    return r;
}

PropertyResult check_ep_block_solve(std::uint64_t seed) {
    auto r = make("EP block solve vs dense solve", 1e-10);
    Rng rng = Rng::stream(seed, 4, StreamId::test);
    const ObservationDims shapes[] = {{1, 1, 1, 4}, {1, 3, 4, 4}, {2, 3, 4, 4}, {2, 4, 8, 8}, {3, 2, 2, 5}};
    for (const auto& d : shapes) {
        for (int rep = 0; rep < 4; ++rep) {
            FreqObservation obs;
            obs.pilots.entries.resize(d.users, d.frames);
            for (int k = 0; k < d.users; ++k)
                for (int p = 0; p < d.frames; ++p) obs.pilots.entries(k, p) = rng.complex_normal(1.0);
            obs.noise_var = rng.uniform(0.05, 2.0);
            obs.y.resize(d.subcarriers);
            for (auto& y : obs.y) {
                y.resize(d.waveguides, d.frames);
                for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rng.complex_normal(1.0);
            }
            const RealStack stack = stack_real(obs);
            GaussMsg prior;
            prior.mean.resize(2 * d.channel_size());
            for (Eigen::Index i = 0; i < prior.mean.size(); ++i) prior.mean(i) = rng.normal();
            prior.var = rng.uniform(0.1, 3.0);

            const auto fast = ep_linear(prior, stack);
            const MatrixXd op = stack.dense_operator();
            const double a = 1.0 / stack.noise_var_real;
            const double b = 1.0 / prior.var;
            const MatrixXd precision = a * op.transpose() * op + b * MatrixXd::Identity(op.cols(), op.cols());
            const Eigen::LDLT<MatrixXd> ldlt(precision);
            const VectorXd mean = ldlt.solve(a * op.transpose() * stack.y + b * prior.mean);
            const MatrixXd cov = ldlt.solve(MatrixXd::Identity(op.cols(), op.cols()));
            const double var = cov.trace() / static_cast<double>(op.cols());
            r.worst = std::max(r.worst, (fast.posterior.mean - mean).norm() / std::max(mean.norm(), 1e-300));
            r.worst = std::max(r.worst, std::abs(fast.posterior.var - var) / var);
            ++r.cases;
        }
    }
    finish(r);
    return r;
}

PropertyResult check_delta_jacobian(std::uint64_t seed) {
    auto r = make("delta-method Jacobian vs finite differences", 1e-4);
    Rng rng = Rng::stream(seed, 5, StreamId::test);
    for (int scheme : {1, 2}) {
        const Scene scene = build_scene(scheme_config(scheme));
        const AnchorSet anchors = anchor_set(scene);
        const double T = scene.sample_period();
        for (int rep = 0; rep < 4; ++rep) {
            std::vector<PathList> paths(scene.num_waveguides());
            for (int m = 0; m < scene.num_waveguides(); ++m)
                for (int n = 0; n < scene.num_pas(m); ++n) {
                    PathEstimate e;
                    e.gain_mean = rng.complex_normal(1.0);
                    e.gain_var = 0.01;
                    e.delay_mean = rng.uniform(0.0, scene.cp_length * T);
                    e.delay_var = 1e-22;
                    paths[m].push_back(e);
                }
            PositionEstimate pos;
            pos.mean = Vec2(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0));
            pos.info = Eigen::Matrix2d::Identity() * 1e4;
            for (const bool position_route : {true, false}) {
                const UserChannelMap map(scene, anchors, paths,
                                         position_route ? std::optional<PositionEstimate>(pos) : std::nullopt);
                const VectorXd p0 = map.params();
                const MatrixXcd J = map.jacobian(p0);
                const auto gains = position_route ? p0.size() - 2 : 2 * p0.size() / 3;
                for (Eigen::Index j = 0; j < p0.size(); ++j) {
                    const double scale = j < gains ? 1.0 : (position_route ? 1.0 : T);
                    const double h = 1e-6 * scale;
                    VectorXd plus = p0, minus = p0;
                    plus(j) += h;
                    minus(j) -= h;
                    const MatrixXcd diff = (map.evaluate(plus) - map.evaluate(minus)) / (2.0 * h);
                    VectorXcd col(diff.size());
                    for (int l = 0; l < diff.cols(); ++l)
                        for (int m = 0; m < diff.rows(); ++m) col(l * diff.rows() + m) = diff(m, l);
                    const double ref = std::max(J.col(j).norm(), 1e-300);
                    r.worst = std::max(r.worst, (col - J.col(j)).norm() / ref);
                    ++r.cases;
                }
            }
        }
    }
    finish(r);
    return r;
}

std::vector<PropertyResult> run_selftest(std::uint64_t seed) {
    std::vector<PropertyResult> out;
    for (auto check : {check_dft_shift, check_bessel_roundtrip, check_hungarian_exhaustive, check_fusion_grid,
                       check_ep_block_solve, check_delta_jacobian}) {
        try {
            out.push_back(check(seed));
        } catch (const std::exception& e) {
            PropertyResult failed;
            failed.name = "exception";
            failed.detail = e.what();
            out.push_back(failed);
        }
    }
    return out;
}

}  // namespace jcel
