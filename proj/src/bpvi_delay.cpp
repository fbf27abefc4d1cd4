#include "jcel/bpvi_delay.hpp"

#include <algorithm>
#include <numeric>

#include "jcel/ep.hpp"

namespace jcel {

namespace {

struct PhaseSums {
    double f = 0.0;    // Re sum c_l e^{j theta l}
    double df = 0.0;   // first derivative in theta
    double d2f = 0.0;  // second derivative in theta
};

PhaseSums phase_sums(const VectorXcd& c, double theta) {
    PhaseSums s;
    const Complex step = std::polar(1.0, theta);
    Complex rot = 1.0;
    for (Eigen::Index l = 0; l < c.size(); ++l) {
        const Complex v = c(l) * rot;
        const double dl = static_cast<double>(l);
        s.f += v.real();
        s.df += -dl * v.imag();
        s.d2f += -dl * dl * v.real();
        rot *= step;
    }
    return s;
}

double phase_objective(const VectorXcd& c, double theta) {
    const Complex step = std::polar(1.0, theta);
    Complex rot = 1.0, acc = 0.0;
    for (Eigen::Index l = 0; l < c.size(); ++l) {
        acc += c(l) * rot;
        rot *= step;
    }
    return acc.real();
}

double gain_prior_var(const VectorXcd& h, double noise_var, const BpviOptions& opt) {
    return opt.gain_prior_scale * std::max(h.squaredNorm() / static_cast<double>(h.size()), noise_var);
}

double default_merge_threshold(int L, const BpviOptions& opt) {
    return opt.merge_threshold > 0.0 ? opt.merge_threshold : kTwoPi / (4.0 * L);
}

// Concentration matching the local curvature of a tone fit with gain z.
double initial_kappa(Complex z, double noise_var, int L, double prior_kappa) {
    const double amp2 = std::norm(z);
    if (!(amp2 > 0.0)) return prior_kappa;
    const double info = 2.0 * amp2 * L * (static_cast<double>(L) * L - 1.0) / 12.0 / noise_var;
    return std::clamp(info, prior_kappa, kKappaCap);
}

struct Detection {
    double theta = 0.0;
    Complex z;
};

// Matched-filter peak of `r` on an 8L grid over the domain.
Detection detect_line(const VectorXcd& r, const ThetaDomain& domain, const std::vector<double>& retained,
                      double exclusion) {
    const int L = static_cast<int>(r.size());
    const double step = kTwoPi / (8.0 * L);
    const int count = static_cast<int>(std::floor((domain.hi - domain.lo) / step + 1e-9)) + 1;
    Detection best;
    double best_val = -1.0, fallback_val = -1.0;
    Detection fallback;
    for (int g = 0; g < count; ++g) {
        const double theta = domain.hi - g * step;
        const Complex corr = steering(theta, L).dot(r);  // a^H r
        const double v = std::abs(corr);
        if (v > fallback_val) {
            fallback_val = v;
            fallback = {theta, corr / static_cast<double>(L)};
        }
        bool excluded = false;
        for (double t : retained)
            if (std::abs(wrap_angle(theta - t)) < exclusion + 1e-9) excluded = true;
        if (!excluded && v > best_val) {
            best_val = v;
            best = {theta, corr / static_cast<double>(L)};
        }
    }
    return best_val >= 0.0 ? best : fallback;
}

void seed_path(SinusoidPath& p, const Detection& d, double var, int L, double prior_kappa) {
    p.theta = {wrap_angle(d.theta), initial_kappa(d.z, var, L, prior_kappa)};
    p.theta_lik = p.theta;
    p.z = d.z;
    p.z_var = var / L;
    p.s_back = d.z * steering(d.theta, L);
    p.s_back_var = var;
    p.valid = true;
}

}  // namespace

int SinusoidMsgState::valid_count() const {
    return static_cast<int>(std::count_if(paths.begin(), paths.end(), [](const auto& p) { return p.valid; }));
}

ThetaDomain theta_domain(int num_subcarriers, int cp_length) {
    if (num_subcarriers < 1 || cp_length < 1) throw ParameterError("theta_domain: sizes must be positive");
    return {-kTwoPi * std::min(cp_length, num_subcarriers) / num_subcarriers, 0.0};
}

ComplexVector<double> steering(double theta, int length) {
    ComplexVector<double> a(length);
    for (int l = 0; l < length; ++l) a(l) = std::polar(1.0, theta * l);
    return a;
}

int reseed_free_slots(SinusoidMsgState& state, const VectorXcd& h, double noise_var, double exclusion,
                      const BpviOptions& opt) {
    const int L = static_cast<int>(h.size());
    const auto domain = theta_domain(L, opt.cp_length);
    int seeded = 0;
    for (auto& slot : state.paths) {
        if (slot.valid) continue;
        VectorXcd residual = h;
        double var = noise_var;
        std::vector<double> retained;
        for (const auto& q : state.paths) {
            if (!q.valid) continue;
            residual -= q.s_back;
            var += q.s_back_var;
            retained.push_back(q.theta.mean_dir);
        }
        seed_path(slot, detect_line(residual, domain, retained, exclusion), var, L, opt.prior_kappa);
        ++seeded;
    }
    return seeded;
}

SinusoidMsgState bpvi_init(const VectorXcd& h, double noise_var, int num_paths, const BpviOptions& opt) {
    if (num_paths < 1) throw ParameterError("bpvi_init: number of paths must be positive");
    SinusoidMsgState state;
    state.paths.resize(num_paths);
    reseed_free_slots(state, h, noise_var, default_merge_threshold(static_cast<int>(h.size()), opt), opt);
    // Every slot starts from the observation noise level.
    for (auto& p : state.paths) p.s_back_var = noise_var;
    return state;
}

ForwardMsg forward_msg(const SinusoidMsgState& state, const VectorXcd& h, double noise_var, int n) {
    if (n < 0 || n >= static_cast<int>(state.paths.size())) throw ParameterError("forward_msg: slot out of range");
    ForwardMsg f{h, noise_var};
    for (int i = 0; i < static_cast<int>(state.paths.size()); ++i) {
        if (i == n || !state.paths[i].valid) continue;
        f.mean -= state.paths[i].s_back;
        f.var += state.paths[i].s_back_var;
    }
    return f;
}

ThetaUpdate theta_update(const ForwardMsg& fwd, Complex z, double prior_kappa, const ThetaDomain& domain,
                         const VMMsg& previous_lik, const VMMsg& previous_post) {
    const int L = static_cast<int>(fwd.mean.size());
    const VectorXcd c = z * fwd.mean.conjugate();
    ThetaUpdate out{previous_lik, previous_post, false};

    // Aligned phase: best point of a 16L grid, then Newton on the same objective.
    const double step = kTwoPi / (16.0 * L);
    const int count = static_cast<int>(std::floor((domain.hi - domain.lo) / step + 1e-9)) + 1;
    double theta = domain.hi, best = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < count; ++g) {
        const double t = domain.hi - g * step;
        const double v = phase_objective(c, t);
        if (v > best) {
            best = v;
            theta = t;
        }
    }
    for (int it = 0; it < 5; ++it) {
        const auto s = phase_sums(c, theta);
        if (!(s.d2f < 0.0)) break;
        const double next = std::clamp(theta - s.df / s.d2f, domain.lo, domain.hi);
        if (phase_objective(c, next) < s.f) break;
        const bool done = std::abs(next - theta) < 1e-13;
        theta = next;
        if (done) break;
    }

    const double scale = 2.0 / fwd.var;
    const auto s = phase_sums(c, theta);
    const double q1 = scale * s.df;
    const double q2 = scale * s.d2f;
    if (!(q2 < 0.0) || std::abs(q2) < 1e-18 || !std::isfinite(q2)) {
        out.flat = true;
        return out;
    }
    const double r = std::exp(1.0 / (2.0 * q2));
    const double kappa = r < 1.0 ? bessel_ratio_inv(r) : kKappaCap;
    out.likelihood = {wrap_angle(theta - q1 / q2), kappa};
    out.posterior = vm_multiply(out.likelihood, VMMsg{0.0, prior_kappa});
    return out;
}

GainUpdate z_update(const ForwardMsg& fwd, const VMMsg& theta, double gain_prior_var) {
    const int L = static_cast<int>(fwd.mean.size());
    const VectorXcd a_hat = vm_moments(theta, L);
    const Complex z_f = a_hat.dot(fwd.mean) / static_cast<double>(L);
    const double var_f = fwd.var / L;
    GainUpdate g;
    g.var = 1.0 / (1.0 / var_f + 1.0 / gain_prior_var);
    g.z = (g.var / var_f) * z_f;
    return g;
}

SinusoidExtrinsic s_posterior_extrinsic(const VMMsg& theta, const GainUpdate& gain, const ForwardMsg& fwd,
                                        const VarianceLimits& limits) {
    const int L = static_cast<int>(fwd.mean.size());
    const VectorXcd s_hat = gain.z * vm_moments(theta, L);
    const double s_var = gain.var / L;
    const auto d = gauss_divide(s_var, fwd.var, limits);
    return {d.numerator_weight * s_hat - d.denominator_weight * fwd.mean, d.var, d.clamped};
}

int merge_artifacts(SinusoidMsgState& state, double threshold) {
    int merges = 0;
    auto& ps = state.paths;
    const int L = ps.empty() ? 0 : static_cast<int>(ps.front().s_back.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (!ps[i].valid) continue;
        for (std::size_t j = i + 1; j < ps.size(); ++j) {
            if (!ps[j].valid) continue;
            if (std::abs(wrap_angle(ps[i].theta.mean_dir - ps[j].theta.mean_dir)) >= threshold) continue;
            auto& a = ps[i];
            auto& b = ps[j];
            a.theta = vm_multiply(a.theta, b.theta);
            a.theta_lik = vm_multiply(a.theta_lik, b.theta_lik);
            const double var = 1.0 / (1.0 / a.z_var + 1.0 / b.z_var);
            a.z = var * (a.z / a.z_var + b.z / b.z_var);
            a.z_var = var;
            a.s_back = a.z * vm_moments(a.theta, L);
            a.s_back_var = a.z_var / L;
            b.valid = false;
            b.s_back.setZero();
            ++merges;
        }
    }
    return merges;
}

PathEstimate theta_to_delay(const VMMsg& theta, int num_subcarriers, double sample_period, const ThetaDomain& domain,
                            bool literal_kappa_variance) {
    const double center = 0.5 * (domain.lo + domain.hi);
    const double t = std::clamp(center + wrap_angle(theta.mean_dir - center), domain.lo, domain.hi);
    const double scale = num_subcarriers * sample_period / kTwoPi;
    PathEstimate p;
    p.delay_mean = -scale * t;
    if (literal_kappa_variance) {
        p.delay_var = scale * scale * theta.kappa;
    } else {
        // Inverse of the kappa assignment: f_I(kappa) = exp(-var / 2).
        const double ratio = bessel_ratio(theta.kappa);
        const double g = ratio > 0.0 ? std::min(-2.0 * std::log(ratio), kPi * kPi / 3.0) : kPi * kPi / 3.0;
        p.delay_var = scale * scale * g;
    }
    return p;
}

BpviResult bpvi_extract_detailed(const VectorXcd& h, double noise_var, int num_paths, const BpviOptions& opt,
                                 const SinusoidMsgState* warm_start) {
    if (!(noise_var > 0.0)) throw ParameterError("bpvi_extract: noise variance must be positive");
    if (h.size() < 2) throw ParameterError("bpvi_extract: need at least two subcarriers");
    const int L = static_cast<int>(h.size());
    const auto domain = theta_domain(L, opt.cp_length);
    const double eps = default_merge_threshold(L, opt);
    const double xi2 = gain_prior_var(h, noise_var, opt);
    const VarianceLimits limits{opt.var_floor, opt.var_cap};

    BpviResult res;
    const bool warm = warm_start && static_cast<int>(warm_start->paths.size()) == num_paths &&
                      warm_start->valid_count() > 0 && warm_start->paths.front().s_back.size() == L;
    res.state = warm ? *warm_start : bpvi_init(h, noise_var, num_paths, opt);
    auto& state = res.state;

    auto sweep = [&]() {
        std::vector<int> order;
        for (int n = 0; n < num_paths; ++n)
            if (state.paths[n].valid) order.push_back(n);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return std::abs(state.paths[a].z) > std::abs(state.paths[b].z); });
        double max_shift = 0.0;
        for (int n : order) {
            auto& p = state.paths[n];
            const auto fwd = forward_msg(state, h, noise_var, n);
            const auto tu = theta_update(fwd, p.z, opt.prior_kappa, domain, p.theta_lik, p.theta);
            if (tu.flat) ++res.flags.flat_objective;
            if (tu.posterior.kappa >= kKappaCap) ++res.flags.kappa_capped;
            max_shift = std::max(max_shift, std::abs(wrap_angle(tu.posterior.mean_dir - p.theta.mean_dir)));
            p.theta_lik = tu.likelihood;
            p.theta = tu.posterior;
            const auto g = z_update(fwd, p.theta, xi2);
            const auto ext = s_posterior_extrinsic(p.theta, g, fwd, limits);
            if (ext.clamped) ++res.flags.clamped;
            p.z = g.z;
            p.z_var = g.var;
            p.s_back = ext.mean;
            p.s_back_var = ext.var;
        }
        return max_shift;
    };

    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        const int reseeded = reseed_free_slots(state, h, noise_var, eps, opt);
        res.flags.reseeds += reseeded;
        const double shift = sweep();
        const int merged = opt.merge ? merge_artifacts(state, eps) : 0;
        res.flags.merges += merged;
        res.iterations = iter;
        if (reseeded == 0 && merged == 0 && shift < opt.theta_tol) {
            res.converged = true;
            break;
        }
    }
    if (state.valid_count() < num_paths) {
        res.flags.reseeds += reseed_free_slots(state, h, noise_var, eps, opt);
        sweep();
    }

    for (int n = 0; n < num_paths; ++n) {
        const auto& p = state.paths[n];
        PathEstimate e = theta_to_delay(p.theta, L, opt.sample_period, domain, opt.literal_kappa_variance);
        e.gain_mean = p.z;
        e.gain_var = p.z_var;
        e.slot = n;
        res.paths.push_back(e);
    }
    return res;
}

PathList bpvi_extract(const VectorXcd& h, double noise_var, int num_paths, const BpviOptions& opt) {
    return bpvi_extract_detailed(h, noise_var, num_paths, opt).paths;
}

MatrixXd joint_delay_covariance(const PathList& paths, double noise_var, int num_subcarriers, double sample_period) {
    if (!(noise_var > 0.0)) throw ParameterError("joint_delay_covariance: noise variance must be positive");
    const auto n = static_cast<Eigen::Index>(paths.size());
    const int L = num_subcarriers;
    const double w = 2.0 * kPi / (L * sample_period);
    MatrixXcd J(L, 3 * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int l = 0; l < L; ++l) {
            const Complex e = std::polar(1.0, -w * paths[i].delay_mean * l);
            J(l, i) = paths[i].gain_mean * e * Complex(0.0, -w * l);
            J(l, n + i) = e;
            J(l, 2 * n + i) = Complex(0.0, 1.0) * e;
        }
    const MatrixXd fim = (2.0 / noise_var) * (J.adjoint() * J).real();
    const VectorXd d = fim.diagonal();
    bool ok = d.allFinite() && d.minCoeff() > 0.0;
    MatrixXd cov;
    if (ok) {
        const VectorXd s = d.cwiseSqrt().cwiseInverse();
        const MatrixXd eq = s.asDiagonal() * fim * s.asDiagonal();
        const Eigen::LDLT<MatrixXd> ldlt(eq);
        ok = ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 1e-12;
        if (ok) {
            MatrixXd sel = MatrixXd::Zero(3 * n, n);
            sel.topRows(n) = s.head(n).asDiagonal();
            cov = s.head(n).asDiagonal() * ldlt.solve(sel).topRows(n);
            cov = 0.5 * (cov + cov.transpose());
            ok = cov.allFinite() && cov.diagonal().minCoeff() > 0.0;
        }
    }
    if (!ok) {
        cov = MatrixXd::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) cov(i, i) = paths[i].delay_var;
    }
    return cov;
}

}  // namespace jcel
