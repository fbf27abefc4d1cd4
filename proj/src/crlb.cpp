#include "jcel/crlb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace jcel {

std::vector<FimParam> fim_parameters(const Scene& scene) {
    std::vector<FimParam> idx;
    const auto paths = composite_paths(scene);
    for (auto kind : {FimParam::Kind::gain_re, FimParam::Kind::gain_im})
        for (const auto& p : paths) idx.push_back({kind, p.user, p.waveguide, p.pa});
    for (int k = 0; k < scene.num_users(); ++k) idx.push_back({FimParam::Kind::x, k, -1, -1});
    for (int k = 0; k < scene.num_users(); ++k) idx.push_back({FimParam::Kind::y, k, -1, -1});
    return idx;
}

MatrixXcd jacobian_h(const Scene& scene, std::span<const PathParams> paths, int l) {
    const int M = scene.num_waveguides(), K = scene.num_users();
    const int P = static_cast<int>(paths.size());
    const double w = kTwoPi * l / (scene.num_subcarriers * scene.sample_period());
    const Complex j(0.0, 1.0);
    MatrixXcd J = MatrixXcd::Zero(static_cast<Eigen::Index>(M) * K, 2 * P + 2 * K);
    for (int i = 0; i < P; ++i) {
        const auto& p = paths[i];
        const int row = p.user * M + p.waveguide;
        const Complex e = std::polar(1.0, -w * p.delay);
        J(row, i) = e;
        J(row, P + i) = j * e;
        const Vec3& anchor = scene.waveguides[p.waveguide].pas[p.pa].position;
        const Vec3 diff = scene.users[p.user].position - anchor;
        const double d = diff.norm();
        const Complex dtau = p.gain * e * (-j * w);
        J(row, 2 * P + p.user) += dtau * diff.x() / (kSpeedOfLight * d);
        J(row, 2 * P + K + p.user) += dtau * diff.y() / (kSpeedOfLight * d);
    }
    return J;
}

MatrixXcd jacobian_h(const Scene& scene, int l) {
    const auto paths = composite_paths(scene);
    return jacobian_h(scene, paths, l);
}

FimResult fim(const Scene& scene, const MatrixXcd& pilots, double noise_var) {
    if (!(noise_var > 0.0)) throw ParameterError("fim: noise variance must be positive");
    const int M = scene.num_waveguides(), K = scene.num_users();
    if (pilots.rows() != K) throw ParameterError("fim: pilot rows must equal the number of users");
    const auto paths = composite_paths(scene);
    const int P = static_cast<int>(paths.size());

    FimResult out;
    out.index = fim_parameters(scene);
    out.truth.resize(2 * P + 2 * K);
    for (int i = 0; i < P; ++i) {
        out.truth(i) = paths[i].gain.real();
        out.truth(P + i) = paths[i].gain.imag();
    }
    for (int k = 0; k < K; ++k) {
        out.truth(2 * P + k) = scene.users[k].position.x();
        out.truth(2 * P + K + k) = scene.users[k].position.y();
    }

    const MatrixXcd gram = pilots.conjugate() * pilots.transpose();
    // gram kron I_M
    MatrixXcd weight = MatrixXcd::Zero(static_cast<Eigen::Index>(M) * K, static_cast<Eigen::Index>(M) * K);
    for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b)
            for (int m = 0; m < M; ++m) weight(a * M + m, b * M + m) = gram(a, b);

    out.fim = MatrixXd::Zero(2 * P + 2 * K, 2 * P + 2 * K);
    for (int l = 0; l < scene.num_subcarriers; ++l) {
        MatrixXcd J = jacobian_h(scene, paths, l);
        out.fim += (J.adjoint() * weight * J).real();
        out.jacobians.push_back(std::move(J));
        out.channel_energy += freq_channel(paths, l, scene.num_subcarriers, scene.sample_period(), M, K).squaredNorm();
    }
    out.fim *= 2.0 / noise_var;
    out.fim = 0.5 * (out.fim + out.fim.transpose()).eval();
    return out;
}

MatrixXd equilibrated_pinv(const MatrixXd& a, double rel_tol, int* rank) {
    const Eigen::Index n = a.rows();
    VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = a(i, i) > 0.0 ? 1.0 / std::sqrt(a(i, i)) : 1.0;
    const MatrixXd scaled = d.asDiagonal() * a * d.asDiagonal();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(scaled);
    const VectorXd& ev = eig.eigenvalues();
    const double top = ev.cwiseAbs().maxCoeff();
    VectorXd inv = VectorXd::Zero(n);
    int r = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (ev(i) > rel_tol * top) {
            inv(i) = 1.0 / ev(i);
            ++r;
        }
    if (rank) *rank = r;
    const MatrixXd& V = eig.eigenvectors();
    return d.asDiagonal() * (V * inv.asDiagonal() * V.transpose()) * d.asDiagonal();
}

CrlbBounds crlb_bounds(const FimResult& f, std::optional<std::vector<int>> subset, bool others_known) {
    const int n = static_cast<int>(f.fim.rows());
    std::vector<int> sel;
    if (subset) {
        sel = *subset;
    } else {
        sel.resize(n);
        for (int i = 0; i < n; ++i) sel[i] = i;
    }
    for (int i : sel)
        if (i < 0 || i >= n) throw ParameterError("crlb_bounds: subset index out of range");

    CrlbBounds out;
    out.subset = sel;
    MatrixXd cov;  // covariance bound over `sel`
    int rank = 0;
    if (others_known) {
        MatrixXd sub(sel.size(), sel.size());
        for (std::size_t a = 0; a < sel.size(); ++a)
            for (std::size_t b = 0; b < sel.size(); ++b) sub(a, b) = f.fim(sel[a], sel[b]);
        cov = equilibrated_pinv(sub, 1e-13, &rank);
        out.rank_deficient = rank < static_cast<int>(sel.size());
    } else {
        const MatrixXd full = equilibrated_pinv(f.fim, 1e-13, &rank);
        out.rank_deficient = rank < n;
        cov.resize(sel.size(), sel.size());
        for (std::size_t a = 0; a < sel.size(); ++a)
            for (std::size_t b = 0; b < sel.size(); ++b) cov(a, b) = full(sel[a], sel[b]);
    }
    out.rank = rank;
    out.diag = cov.diagonal();

    const int K = static_cast<int>(std::count_if(f.index.begin(), f.index.end(),
                                                 [](const FimParam& p) { return p.kind == FimParam::Kind::x; }));
    out.position_per_user = VectorXd::Constant(K, std::numeric_limits<double>::quiet_NaN());
    double pos_energy = 0.0, gain_energy = 0.0;
    // Aggregates need labelled parameters; a bare information matrix only yields the diagonal.
    const bool labelled = static_cast<int>(f.index.size()) == n && f.truth.size() == n;
    for (std::size_t a = 0; labelled && a < sel.size(); ++a) {
        const auto& p = f.index[sel[a]];
        const double v = out.diag(a);
        const double t = f.truth(sel[a]);
        if (p.kind == FimParam::Kind::x || p.kind == FimParam::Kind::y) {
            if (std::isnan(out.position_per_user(p.user))) out.position_per_user(p.user) = 0.0;
            out.position_per_user(p.user) += v;
            out.position_total += v;
            pos_energy += t * t;
        } else {
            out.gain_total += v;
            gain_energy += t * t;
        }
    }
    out.position_nmse = pos_energy > 0.0 ? out.position_total / pos_energy : 0.0;
    out.gain_nmse = gain_energy > 0.0 ? out.gain_total / gain_energy : 0.0;

    if (labelled && !f.jacobians.empty()) {
        for (const auto& J : f.jacobians) {
            MatrixXcd Js(J.rows(), sel.size());
            for (std::size_t a = 0; a < sel.size(); ++a) Js.col(a) = J.col(sel[a]);
            out.channel_total += (Js * cov.cast<Complex>() * Js.adjoint()).trace().real();
        }
        out.channel_nmse = f.channel_energy > 0.0 ? out.channel_total / f.channel_energy : 0.0;
    }
    return out;
}

double tone_delay_crlb(Complex gain, double delay, double noise_var, int num_subcarriers, double sample_period) {
    if (!(noise_var > 0.0)) throw ParameterError("tone_delay_crlb: noise variance must be positive");
    const double w = kTwoPi / (num_subcarriers * sample_period);
    const Complex j(0.0, 1.0);
    MatrixXcd D(num_subcarriers, 3);
    for (int l = 0; l < num_subcarriers; ++l) {
        const Complex e = std::polar(1.0, -w * delay * l);
        D(l, 0) = e;
        D(l, 1) = j * e;
        D(l, 2) = gain * e * (-j * w * static_cast<double>(l));
    }
    const MatrixXd F = (2.0 / noise_var) * (D.adjoint() * D).real();
    int rank = 0;
    const MatrixXd C = equilibrated_pinv(F, 1e-13, &rank);
    if (rank < 3) return std::numeric_limits<double>::infinity();
    return C(2, 2);
}

}  // namespace jcel
