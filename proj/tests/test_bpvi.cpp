#include <algorithm>

#include <catch_amalgamated.hpp>

#include "jcel/bpvi_delay.hpp"
#include "jcel/crlb.hpp"
#include "jcel/rng.hpp"

using namespace jcel;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr int kL = 32;
constexpr double kT = 10e-9;

VectorXcd tones(const std::vector<std::pair<Complex, double>>& lines, int L = kL) {
    VectorXcd h = VectorXcd::Zero(L);
    for (const auto& [z, th] : lines) h += z * steering(th, L);
    return h;
}

SinusoidPath line(double theta, double kappa, Complex z, double z_var) {
    SinusoidPath p;
    p.theta = p.theta_lik = {theta, kappa};
    p.z = z;
    p.z_var = z_var;
    p.s_back = z * vm_moments(p.theta, kL);
    p.s_back_var = z_var / kL;
    p.valid = true;
    return p;
}

// (I_l(kappa) / I_0(kappa)) exp(j theta l) from the power series of I_n.
Complex moment_oracle(const VMMsg& m, int l) {
    auto series = [](int n, long double x) {
        long double term = 1;
        for (int i = 1; i <= n; ++i) term *= x / 2 / i;
        long double sum = term;
        for (int k = 1; k < 400; ++k) {
            term *= (x / 2) * (x / 2) / (static_cast<long double>(k) * (k + n));
            sum += term;
            if (term < 1e-22L * sum) break;
        }
        return sum;
    };
    const double r = static_cast<double>(series(l, m.kappa) / series(0, m.kappa));
    return std::polar(r, m.mean_dir * l);
}

BpviOptions options() {
    BpviOptions o;
    o.cp_length = 16;
    o.sample_period = kT;
    return o;
}

}  // namespace

TEST_CASE("phase search domain", "[bpvi]") {
    const auto d = theta_domain(32, 16);
    CHECK_THAT(d.lo, WithinAbs(-kPi, 1e-15));
    CHECK(d.hi == 0.0);
    CHECK_THAT(theta_domain(64, 16).lo, WithinAbs(-kPi / 2, 1e-15));
}

TEST_CASE("matched-filter initialization", "[bpvi]") {
    const auto opt = options();
    const double th = -1.0137;
    const auto st = bpvi_init(tones({{Complex(1.5, -0.3), th}}), 1e-4, 1, opt);
    REQUIRE(st.paths.size() == 1);
    CHECK(st.valid_count() == 1);
    CHECK(std::abs(st.paths[0].theta.mean_dir - th) <= kTwoPi / (8 * kL));
    CHECK(st.paths[0].s_back_var == 1e-4);

    const auto zero = bpvi_init(VectorXcd::Zero(kL), 1e-4, 3, opt);
    for (const auto& p : zero.paths) CHECK(std::abs(p.z) == 0.0);
    CHECK_THROWS_AS(bpvi_init(VectorXcd::Zero(kL), 1.0, 0, opt), ParameterError);
}

TEST_CASE("forward message", "[bpvi]") {
    auto rng = Rng::stream(1, 0, StreamId::test);
    VectorXcd h(kL);
    for (int l = 0; l < kL; ++l) h(l) = rng.complex_normal(1.0);

    SinusoidMsgState one;
    one.paths = {line(-0.5, 10, Complex(1, 0), 0.1)};
    const auto f1 = forward_msg(one, h, 0.3, 0);
    CHECK(f1.mean == h);
    CHECK(f1.var == 0.3);

    const Complex z2(0.4, 0.9);
    const double th2 = -2.1;
    SinusoidMsgState two;
    two.paths = {line(-0.5, 10, Complex(1, 0), 0.1), line(th2, 1e8, z2, 0.0)};
    two.paths[1].s_back = z2 * steering(th2, kL);
    const auto f2 = forward_msg(two, h, 0.3, 0);
    CHECK((f2.mean - (h - z2 * steering(th2, kL))).norm() < 1e-14);

    SinusoidMsgState three;
    three.paths = {line(-0.5, 3, Complex(1, 1), 0.2), line(-1.5, 7, Complex(-1, 0.5), 0.05),
                   line(-2.5, 20, Complex(0.3, -2), 0.4)};
    for (int n = 0; n < 3; ++n) {
        VectorXcd m = h;
        double v = 0.3;
        for (int i = 0; i < 3; ++i)
            if (i != n) {
                m -= three.paths[i].s_back;
                v += three.paths[i].s_back_var;
            }
        const auto f = forward_msg(three, h, 0.3, n);
        CHECK((f.mean - m).norm() < 1e-14);
        CHECK_THAT(f.var, WithinRel(v, 1e-15));
    }
    three.paths[2].valid = false;
    CHECK((forward_msg(three, h, 0.3, 0).mean - (h - three.paths[1].s_back)).norm() < 1e-14);
}

TEST_CASE("phase update", "[bpvi]") {
    const auto dom = theta_domain(kL, 16);
    const double th = -1.2345678;
    const Complex z(0.8, -0.6);
    const ForwardMsg fwd{z * steering(th, kL), 1e-6};

    const auto up = theta_update(fwd, z, 1e-2, dom, VMMsg{}, VMMsg{});
    CHECK_FALSE(up.flat);
    CHECK_THAT(up.likelihood.mean_dir, WithinAbs(th, 1e-9));
    CHECK(up.likelihood.kappa > 1e5);

    const auto vac = theta_update(fwd, z, 0.0, dom, VMMsg{}, VMMsg{});
    CHECK(vac.posterior.mean_dir == Catch::Approx(vac.likelihood.mean_dir).margin(1e-15));
    CHECK(vac.posterior.kappa == Catch::Approx(vac.likelihood.kappa).epsilon(1e-14));

    const VMMsg prev_lik{-0.3, 4.0}, prev_post{-0.31, 4.01};
    const auto flat = theta_update(ForwardMsg{VectorXcd::Zero(kL), 1.0}, z, 1e-2, dom, prev_lik, prev_post);
    CHECK(flat.flat);
    CHECK(flat.likelihood.mean_dir == prev_lik.mean_dir);
    CHECK(flat.posterior.kappa == prev_post.kappa);
}

TEST_CASE("gain update", "[bpvi]") {
    const Complex c(1.3, -0.4);
    const double th = -0.77;
    const ForwardMsg fwd{c * steering(th, kL), 1e-3};
    // Moments at finite kappa shrink by about l^2 / (2 kappa).
    const auto g = z_update(fwd, VMMsg{th, 1e8}, 1e12);
    CHECK(std::abs(g.z - c) < 1e-5);

    const auto u = z_update(fwd, VMMsg{th, 0.0}, 1e300);
    CHECK(std::abs(u.z - fwd.mean(0) / double(kL)) < 1e-15);

    auto rng = Rng::stream(2, 0, StreamId::test);
    for (int t = 0; t < 50; ++t) {
        ForwardMsg f{VectorXcd(kL), rng.uniform(0.01, 1)};
        for (int l = 0; l < kL; ++l) f.mean(l) = rng.complex_normal(1.0);
        const VMMsg m{rng.uniform(-kPi, kPi), rng.uniform(0, 40)};
        const double xi2 = rng.uniform(0.1, 10);
        Complex zf = 0;
        for (int l = 0; l < kL; ++l) zf += std::conj(moment_oracle(m, l)) * f.mean(l);
        zf /= double(kL);
        const double vf = f.var / kL;
        const double v = 1.0 / (1.0 / vf + 1.0 / xi2);
        const auto gu = z_update(f, m, xi2);
        CHECK_THAT(gu.var, WithinRel(v, 1e-14));
        CHECK(std::abs(gu.z - v / vf * zf) <= 1e-12 * (1 + std::abs(zf)));
    }
}

TEST_CASE("sinusoid extrinsic", "[bpvi]") {
    const VMMsg th{-1.1, 50.0};
    const ForwardMsg fwd{VectorXcd::Constant(kL, Complex(0.2, 0.1)), 2.0};
    const GainUpdate tight{Complex(1, -1), 1e-9};
    const auto e = s_posterior_extrinsic(th, tight, fwd);
    const VectorXcd post = tight.z * vm_moments(th, kL);
    CHECK((e.mean - post).norm() <= 1e-9 * post.norm());
    CHECK_FALSE(e.clamped);

    const GainUpdate equal{Complex(1, -1), 2.0 * kL};
    CHECK(s_posterior_extrinsic(th, equal, fwd).clamped);

    auto rng = Rng::stream(3, 0, StreamId::test);
    for (int t = 0; t < 50; ++t) {
        ForwardMsg f{VectorXcd(kL), rng.uniform(0.5, 2)};
        for (int l = 0; l < kL; ++l) f.mean(l) = rng.complex_normal(1.0);
        const GainUpdate g{rng.complex_normal(1.0), rng.uniform(0.01, 10)};
        const VMMsg m{rng.uniform(-kPi, kPi), rng.uniform(0, 40)};
        const double vs = g.var / kL;
        const auto ex = s_posterior_extrinsic(m, g, f);
        if (vs < f.var) {
            const double v = 1.0 / (1.0 / vs - 1.0 / f.var);
            const VectorXcd s = g.z * vm_moments(m, kL);
            const VectorXcd want = v * (s / vs - f.mean / f.var);
            CHECK_THAT(ex.var, WithinRel(v, 1e-12));
            CHECK((ex.mean - want).norm() <= 1e-10 * (1 + want.norm()));
        } else {
            CHECK(ex.clamped);
        }
    }
}

TEST_CASE("spectral line fusion", "[bpvi]") {
    const double eps = kTwoPi / (4 * kL);
    SECTION("identical lines") {
        SinusoidMsgState st;
        st.paths = {line(-1.0, 30, Complex(0.5, 0.5), 0.2), line(-1.0, 30, Complex(0.5, 0.5), 0.2)};
        CHECK(merge_artifacts(st, eps) == 1);
        CHECK(st.valid_count() == 1);
        CHECK_THAT(st.paths[0].theta.kappa, WithinRel(60.0, 1e-14));
        CHECK(std::abs(st.paths[0].z - Complex(0.5, 0.5)) < 1e-15);
        CHECK_THAT(st.paths[0].z_var, WithinRel(0.1, 1e-14));
    }
    SECTION("separated lines untouched") {
        SinusoidMsgState st;
        st.paths = {line(-0.2, 30, Complex(1, 0), 0.2), line(-1.0, 30, Complex(0, 1), 0.2),
                    line(-2.0, 5, Complex(1, 1), 0.1)};
        const auto before = st;
        CHECK(merge_artifacts(st, eps) == 0);
        for (int i = 0; i < 3; ++i) {
            CHECK(st.paths[i].valid);
            CHECK(st.paths[i].z == before.paths[i].z);
            CHECK(st.paths[i].theta.mean_dir == before.paths[i].theta.mean_dir);
            CHECK(st.paths[i].s_back == before.paths[i].s_back);
        }
    }
    SECTION("clusters against a pairwise-distance oracle") {
        auto rng = Rng::stream(4, 0, StreamId::test);
        for (int t = 0; t < 100; ++t) {
            std::vector<double> th(3);
            for (auto& v : th) v = -1.5 + rng.uniform(-1.5 * eps, 1.5 * eps);
            SinusoidMsgState st;
            for (double v : th) st.paths.push_back(line(v, 20, Complex(1, 0), 0.1));
            std::sort(th.begin(), th.end());
            const int close = (th[1] - th[0] < eps) + (th[2] - th[1] < eps);
            const int merges = merge_artifacts(st, eps);
            CHECK(merges <= 2);
            CHECK(st.valid_count() == 3 - merges);
            if (close == 0) CHECK(merges == 0);
            if (th[2] - th[0] < eps) CHECK(merges == 2);
            if (close > 0) CHECK(merges >= 1);
        }
    }
}

TEST_CASE("three separated noiseless lines", "[bpvi]") {
    const auto opt = options();
    const std::vector<double> delays = {23.7e-9, 71.3e-9, 128.9e-9};
    const std::vector<Complex> gains = {Complex(1.0, 0.2), Complex(-0.5, 0.7), Complex(0.3, -0.8)};
    VectorXcd h = VectorXcd::Zero(kL);
    for (int i = 0; i < 3; ++i) h += gains[i] * steering(-kTwoPi * delays[i] / (kL * kT), kL);
    const auto res = bpvi_extract_detailed(h, 1e-12 * h.squaredNorm() / kL, 3, opt);
    REQUIRE(res.paths.size() == 3);
    auto got = res.paths;
    std::sort(got.begin(), got.end(), [](const auto& a, const auto& b) { return a.delay_mean < b.delay_mean; });
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(got[i].delay_mean - delays[i]) <= 1e-6 * kT);
        CHECK(std::abs(got[i].gain_mean - gains[i]) <= 1e-5);
        CHECK(got[i].delay_var > 0.0);
    }
}

TEST_CASE("zero input extraction", "[bpvi]") {
    const auto opt = options();
    const auto res = bpvi_extract_detailed(VectorXcd::Zero(kL), 1e-3, 2, opt);
    for (const auto& p : res.paths) CHECK(std::abs(p.gain_mean) == 0.0);
    for (const auto& p : res.state.paths) CHECK(p.theta.kappa <= opt.prior_kappa + 1e-12);
    CHECK_THROWS_AS(bpvi_extract(VectorXcd::Zero(kL), 0.0, 1, opt), ParameterError);
}

TEST_CASE("phase-to-delay conversion", "[bpvi]") {
    const auto dom = theta_domain(kL, 16);
    for (double k : {0.5, 5.0, 500.0, 1e6}) {
        const auto p = theta_to_delay(VMMsg{-1.3, k}, kL, kT, dom);
        const double scale = kL * kT / kTwoPi;
        CHECK_THAT(p.delay_mean, WithinRel(1.3 * scale, 1e-14));
        CHECK_THAT(p.delay_var, WithinRel(-2.0 * std::log(bessel_ratio(k)) * scale * scale, 1e-12));
        const auto lit = theta_to_delay(VMMsg{-1.3, k}, kL, kT, dom, true);
        CHECK_THAT(lit.delay_var, WithinRel(k * scale * scale, 1e-14));
    }
    // Large concentration approaches 1 / kappa.
    const auto p = theta_to_delay(VMMsg{-1.0, 1e6}, kL, kT, dom);
    const double scale = kL * kT / kTwoPi;
    CHECK_THAT(p.delay_var / (scale * scale), WithinRel(1e-6, 1e-5));
}

TEST_CASE("joint delay covariance of one line is the tone bound", "[bpvi]") {
    PathEstimate p;
    p.delay_mean = 47e-9;
    p.gain_mean = Complex(0.6, -0.2);
    p.delay_var = 1.0;
    const double nv = 1e-3;
    const MatrixXd c = joint_delay_covariance({p}, nv, kL, kT);
    REQUIRE(c.rows() == 1);
    CHECK_THAT(c(0, 0), WithinRel(tone_delay_crlb(p.gain_mean, p.delay_mean, nv, kL, kT), 1e-8));

    PathEstimate q = p;
    q.delay_mean = 90e-9;
    q.gain_mean = Complex(0.0, 0.4);
    const MatrixXd c2 = joint_delay_covariance({p, q}, nv, kL, kT);
    CHECK(c2.rows() == 2);
    CHECK(std::abs(c2(0, 1) - c2(1, 0)) <= 1e-12 * c2(0, 0));
    CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(c2).eigenvalues().minCoeff() > 0.0);
}
