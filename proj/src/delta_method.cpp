#include <algorithm>

#include "jcel/localize.hpp"
#include "jcel/waveform.hpp"

namespace jcel {

UserChannelMap::UserChannelMap(const Scene& scene, const AnchorSet& anchors, std::vector<PathList> paths,
                               std::optional<PositionEstimate> position)
    : position_(std::move(position)),
      num_waveguides_(scene.num_waveguides()),
      num_subcarriers_(scene.num_subcarriers),
      sample_period_(scene.sample_period()) {
    if (static_cast<int>(paths.size()) != num_waveguides_)
        throw ParameterError("UserChannelMap: one path list per waveguide required");
    std::vector<const PathEstimate*> flat;
    for (int m = 0; m < num_waveguides_; ++m) {
        if (position_ && paths[m].size() != anchors.positions[m].size())
            throw ParameterError("UserChannelMap: position route needs one path per PA");
        for (std::size_t n = 0; n < paths[m].size(); ++n) {
            PathRef r;
            r.m = m;
            if (position_) {
                r.anchor = anchors.positions[m][n];
                r.intrinsic = anchors.intrinsic[m][n];
            }
            refs_.push_back(r);
            flat.push_back(&paths[m][n]);
        }
    }
    const int N = static_cast<int>(flat.size());
    const int extra = position_ ? 2 : N;
    params_.resize(2 * N + extra);
    cov_ = MatrixXd::Zero(params_.size(), params_.size());
    // Delay variance never exceeds that of a phase uniform over one period.
    const double period = num_subcarriers_ * sample_period_;
    const double max_delay_var = period * period / 12.0;
    for (int i = 0; i < N; ++i) {
        params_(i) = flat[i]->gain_mean.real();
        params_(N + i) = flat[i]->gain_mean.imag();
        cov_(i, i) = cov_(N + i, N + i) = 0.5 * std::max(flat[i]->gain_var, 0.0);
    }
    if (position_) {
        params_.tail<2>() = position_->mean;
        cov_.bottomRightCorner<2, 2>() = position_->covariance();
    } else {
        for (int i = 0; i < N; ++i) {
            params_(2 * N + i) = flat[i]->delay_mean;
            const double v = flat[i]->delay_var;
            cov_(2 * N + i, 2 * N + i) = std::isfinite(v) ? std::clamp(v, 0.0, max_delay_var) : max_delay_var;
        }
    }
}

void refit_gains(std::vector<PathList>& paths, const std::vector<VectorXcd>& slices, double noise_var,
                 const AnchorSet& anchors, const Vec2& position, double sample_period) {
    if (paths.size() != slices.size() || paths.size() != anchors.positions.size())
        throw ParameterError("refit_gains: waveguide count mismatch");
    for (std::size_t m = 0; m < paths.size(); ++m) {
        const auto N = static_cast<Eigen::Index>(paths[m].size());
        if (N != static_cast<Eigen::Index>(anchors.positions[m].size()))
            throw ParameterError("refit_gains: need one path per PA");
        const auto L = slices[m].size();
        const double w = kTwoPi / (L * sample_period);
        MatrixXcd a(L, N);
        for (Eigen::Index n = 0; n < N; ++n) {
            const double tau = predicted_delay(anchors.positions[m][n], position, anchors.intrinsic[m][n]);
            for (Eigen::Index l = 0; l < L; ++l) a(l, n) = std::polar(1.0, -w * tau * static_cast<double>(l));
        }
        const Eigen::ColPivHouseholderQR<MatrixXcd> qr(a);
        if (qr.rank() < N) continue;
        const VectorXcd z = qr.solve(slices[m]);
        const MatrixXcd gram_inv = (a.adjoint() * a).inverse();
        for (Eigen::Index n = 0; n < N; ++n) {
            paths[m][n].gain_mean = z(n);
            paths[m][n].gain_var = noise_var * gram_inv(n, n).real();
        }
    }
}

MatrixXcd UserChannelMap::evaluate(const VectorXd& p) const {
    const int N = static_cast<int>(refs_.size());
    MatrixXcd h = MatrixXcd::Zero(num_waveguides_, num_subcarriers_);
    const double w = kTwoPi / (num_subcarriers_ * sample_period_);
    for (int i = 0; i < N; ++i) {
        const Complex z(p(i), p(N + i));
        const double tau = position_ ? predicted_delay(refs_[i].anchor, p.tail<2>(), refs_[i].intrinsic) : p(2 * N + i);
        for (int l = 0; l < num_subcarriers_; ++l) h(refs_[i].m, l) += z * std::polar(1.0, -w * tau * l);
    }
    return h;
}

MatrixXcd UserChannelMap::jacobian(const VectorXd& p) const {
    const int N = static_cast<int>(refs_.size());
    const int M = num_waveguides_;
    MatrixXcd J = MatrixXcd::Zero(static_cast<Eigen::Index>(M) * num_subcarriers_, p.size());
    const double w = kTwoPi / (num_subcarriers_ * sample_period_);
    const Complex j(0.0, 1.0);
    for (int i = 0; i < N; ++i) {
        const Complex z(p(i), p(N + i));
        double tau = 0.0;
        Vec2 grad = Vec2::Zero();
        if (position_) {
            const Vec2 pos = p.tail<2>();
            const Vec3 diff = Vec3(pos.x(), pos.y(), 0.0) - refs_[i].anchor;
            const double d = diff.norm();
            tau = refs_[i].intrinsic + d / kSpeedOfLight;
            grad = diff.head<2>() / (kSpeedOfLight * d);
        } else {
            tau = p(2 * N + i);
        }
        for (int l = 0; l < num_subcarriers_; ++l) {
            const Eigen::Index row = static_cast<Eigen::Index>(l) * M + refs_[i].m;
            const Complex e = std::polar(1.0, -w * tau * l);
            const Complex dtau = z * e * (-j * w * static_cast<double>(l));
            J(row, i) += e;
            J(row, N + i) += j * e;
            if (position_) {
                J(row, 2 * N) += dtau * grad.x();
                J(row, 2 * N + 1) += dtau * grad.y();
            } else {
                J(row, 2 * N + i) += dtau;
            }
        }
    }
    return J;
}

GaussMsg delta_method_channel(const std::vector<UserChannelMap>& users, int num_waveguides, int num_subcarriers) {
    const int K = static_cast<int>(users.size());
    const ObservationDims dims{num_waveguides, K, 1, num_subcarriers};
    const int n = dims.channel_size();
    GaussMsg out;
    out.mean = VectorXd::Zero(2 * n);
    double trace = 0.0;
    for (int k = 0; k < K; ++k) {
        const auto& u = users[k];
        const MatrixXcd h = u.evaluate(u.params());
        for (int l = 0; l < num_subcarriers; ++l)
            for (int m = 0; m < num_waveguides; ++m) {
                const int v = channel_real_index(dims, k, m, l);
                out.mean(v) = h(m, l).real();
                out.mean(v + n) = h(m, l).imag();
            }
        // tr(J Sigma J^T) for the real-stacked Jacobian equals Re tr(J_c Sigma J_c^H).
        const MatrixXcd J = u.jacobian(u.params());
        trace += (J * u.covariance().cast<Complex>() * J.adjoint()).trace().real();
    }
    out.var = trace / (2.0 * n);
    return out;
}

}  // namespace jcel
