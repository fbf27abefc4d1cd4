#include "jcel/localize.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace jcel {

std::vector<int> hungarian(const MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw ParameterError("hungarian: cost matrix must be square");
    if (n == 0) return {};
    const double inf = std::numeric_limits<double>::infinity();
    // Potentials u (rows), v (columns); p[j] = row matched to column j (1-based, 0 = none).
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n);
    for (int j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

Assignment match_delays(const std::vector<VectorXd>& estimated, const std::vector<VectorXd>& predicted, double delta) {
    if (estimated.size() != predicted.size()) throw ParameterError("match_delays: waveguide count mismatch");
    if (!(delta > 0.0)) throw ParameterError("match_delays: delta must be positive");
    Assignment out;
    for (std::size_t m = 0; m < estimated.size(); ++m) {
        const auto& e = estimated[m];
        const auto& q = predicted[m];
        if (e.size() != q.size()) throw ParameterError("match_delays: delay lists differ in length");
        MatrixXd cost(e.size(), q.size());
        for (Eigen::Index i = 0; i < e.size(); ++i)
            for (Eigen::Index j = 0; j < q.size(); ++j) cost(i, j) = std::log1p((e(i) - q(j)) * (e(i) - q(j)) / delta);
        auto perm = hungarian(cost);
        for (std::size_t i = 0; i < perm.size(); ++i) out.total_cost += cost(i, perm[i]);
        out.perm.push_back(std::move(perm));
    }
    return out;
}

namespace {

Vec3 ground(const Vec2& p) { return {p.x(), p.y(), 0.0}; }

}  // namespace

double predicted_delay(const Vec3& anchor, const Vec2& point, double intrinsic) {
    return intrinsic + (ground(point) - anchor).norm() / kSpeedOfLight;
}

DelayLinearization linearize_delay(const Vec3& anchor, const Vec2& point, double intrinsic) {
    const double d = (ground(point) - anchor).norm();
    if (!(d > 0.0)) throw GeometryError("linearize_delay: point coincides with the anchor");
    DelayLinearization lin;
    lin.a = (point.x() - anchor.x()) / (kSpeedOfLight * d);
    lin.b = (point.y() - anchor.y()) / (kSpeedOfLight * d);
    lin.c = intrinsic + d / kSpeedOfLight - lin.a * point.x() - lin.b * point.y();
    return lin;
}

namespace {

PositionEstimate solve_information(const Eigen::Matrix2d& info, const Vec2& info_vec) {
    const double scale = info.cwiseAbs().maxCoeff();
    const double det = info.determinant();
    if (!(scale > 0.0) || !(std::abs(det) > 1e-12 * scale * scale))
        throw GeometryError("fuse_position: singular information matrix");
    PositionEstimate out;
    out.info = 0.5 * (info + info.transpose());
    out.mean = out.info.ldlt().solve(info_vec);
    return out;
}

// Rows (a, b) and offsets (delay - c) of a measurement group.
std::pair<Eigen::Matrix<double, Eigen::Dynamic, 2>, VectorXd> design(const std::vector<DelayMeasurement>& ms) {
    Eigen::Matrix<double, Eigen::Dynamic, 2> g(ms.size(), 2);
    VectorXd r(ms.size());
    for (std::size_t i = 0; i < ms.size(); ++i) {
        g(i, 0) = ms[i].lin.a;
        g(i, 1) = ms[i].lin.b;
        r(i) = ms[i].delay - ms[i].lin.c;
    }
    return {g, r};
}

}  // namespace

PositionEstimate fuse_position(const std::vector<DelayMeasurement>& measurements) {
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    Vec2 info_vec = Vec2::Zero();
    for (const auto& z : measurements) {
        if (!(z.var > 0.0) || !std::isfinite(z.var)) throw ParameterError("fuse_position: variances must be positive");
        const Vec2 g(z.lin.a, z.lin.b);
        info += g * g.transpose() / z.var;
        info_vec += g * (z.delay - z.lin.c) / z.var;
    }
    return solve_information(info, info_vec);
}

PositionEstimate fuse_position(const std::vector<CorrelatedDelays>& groups) {
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    Vec2 info_vec = Vec2::Zero();
    for (const auto& grp : groups) {
        const auto n = static_cast<Eigen::Index>(grp.measurements.size());
        if (grp.cov.rows() != n || grp.cov.cols() != n) throw ParameterError("fuse_position: covariance shape mismatch");
        const Eigen::LDLT<MatrixXd> ldlt(grp.cov);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(ldlt.vectorD().minCoeff() > 0.0))
            throw ParameterError("fuse_position: covariance must be positive definite");
        const auto [g, r] = design(grp.measurements);
        const Eigen::Matrix<double, Eigen::Dynamic, 2> wg = ldlt.solve(g);
        info += g.transpose() * wg;
        info_vec += wg.transpose() * r;
    }
    return solve_information(info, info_vec);
}

AnchorSet anchor_set(const Scene& scene) {
    AnchorSet a;
    for (const auto& wg : scene.waveguides) {
        std::vector<Vec3> pos;
        std::vector<double> intr;
        for (const auto& pa : wg.pas) {
            pos.push_back(pa.position);
            intr.push_back(intrinsic_delay(wg, pa, scene.delay_model));
        }
        a.positions.push_back(std::move(pos));
        a.intrinsic.push_back(std::move(intr));
    }
    return a;
}

LocalizeResult localize_newton(const std::vector<PathList>& paths, const AnchorSet& anchors, const Vec2& init,
                               const LocalizeOptions& opt) {
    const std::size_t M = anchors.positions.size();
    if (paths.size() != M) throw ParameterError("localize_newton: waveguide count mismatch");
    if (!opt.region.contains(init, opt.region.diameter())) throw ParameterError("localize_newton: init outside region");

    std::vector<VectorXd> est(M);
    double common_var = 0.0;
    int finite = 0;
    for (std::size_t m = 0; m < M; ++m) {
        if (paths[m].size() != anchors.positions[m].size())
            throw ParameterError("localize_newton: need one delay per PA on every waveguide");
        est[m].resize(paths[m].size());
        for (std::size_t s = 0; s < paths[m].size(); ++s) {
            est[m](s) = paths[m][s].delay_mean;
            if (std::isfinite(paths[m][s].delay_var) && paths[m][s].delay_var > 0.0) {
                common_var += paths[m][s].delay_var;
                ++finite;
            }
        }
    }
    common_var = finite > 0 ? common_var / finite : 1.0;

    const bool correlated = !opt.equal_weights && !opt.delay_cov.empty();
    if (correlated) {
        if (opt.delay_cov.size() != M) throw ParameterError("localize_newton: one delay covariance per waveguide");
        for (std::size_t m = 0; m < M; ++m)
            if (opt.delay_cov[m].rows() != static_cast<Eigen::Index>(paths[m].size()) ||
                opt.delay_cov[m].cols() != static_cast<Eigen::Index>(paths[m].size()))
                throw ParameterError("localize_newton: delay covariance shape mismatch");
    }

    auto measurements_at = [&](const Vec2& x, Assignment& assignment) {
        std::vector<VectorXd> pred(M);
        for (std::size_t m = 0; m < M; ++m) {
            pred[m].resize(anchors.positions[m].size());
            for (std::size_t n = 0; n < anchors.positions[m].size(); ++n)
                pred[m](n) = predicted_delay(anchors.positions[m][n], x, anchors.intrinsic[m][n]);
        }
        assignment = match_delays(est, pred, opt.delta);
        std::vector<CorrelatedDelays> groups(M);
        double residual = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            VectorXd r(paths[m].size());
            for (std::size_t s = 0; s < paths[m].size(); ++s) {
                const int n = assignment.perm[m][s];
                DelayMeasurement z;
                z.delay = est[m](s);
                const double v = paths[m][s].delay_var;
                z.var = opt.equal_weights || !(std::isfinite(v) && v > 0.0) ? common_var : v;
                z.lin = linearize_delay(anchors.positions[m][n], x, anchors.intrinsic[m][n]);
                r(s) = z.delay - predicted_delay(anchors.positions[m][n], x, anchors.intrinsic[m][n]);
                if (!correlated) residual += r(s) * r(s) / z.var;
                groups[m].measurements.push_back(z);
            }
            if (correlated) {
                groups[m].cov = opt.delay_cov[m];
                residual += r.dot(groups[m].cov.ldlt().solve(r));
            }
        }
        return std::make_pair(groups, residual);
    };

    auto fuse = [&](const std::vector<CorrelatedDelays>& groups) {
        if (correlated) return fuse_position(groups);
        std::vector<DelayMeasurement> flat;
        for (const auto& g : groups) flat.insert(flat.end(), g.measurements.begin(), g.measurements.end());
        return fuse_position(flat);
    };

    LocalizeResult out;
    Vec2 x = init;
    double best_residual = std::numeric_limits<double>::infinity();
    LocalizeResult best;
    const double pad = 10.0 * opt.region.diameter();
    auto residual_at = [&](const Vec2& x) {
        Assignment a;
        try {
            return measurements_at(x, a).second;
        } catch (const GeometryError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    for (int it = 1; it <= opt.max_iter; ++it) {
        Assignment assignment;
        auto [meas, residual] = measurements_at(x, assignment);
        PositionEstimate fused = fuse(meas);
        if (residual < best_residual) {
            best_residual = residual;
            best.position = fused;
            best.position.mean = x;
            best.assignment = assignment;
        }
        fused.iterations = it;
        out.position = fused;
        out.assignment = assignment;
        if (!fused.mean.allFinite()) {
            out = best;
            out.position.iterations = it;
            out.position.diverged = true;
            return out;
        }
        // Backtrack until the re-matched weighted residual does not increase.
        const Vec2 dir = fused.mean - x;
        double t = 1.0;
        bool accepted = false;
        for (int h = 0; h < 30 && !accepted; ++h, t *= 0.5) {
            const Vec2 next = x + t * dir;
            accepted = opt.region.contains(next, pad) && residual_at(next) <= residual;
            if (accepted) break;
        }
        if (!accepted) {
            if (!opt.region.contains(fused.mean, pad)) {
                out = best;
                out.position.iterations = it;
                out.position.diverged = true;
                return out;
            }
            out.position.converged = dir.norm() < opt.tol;
            break;
        }
        const double step = t * dir.norm();
        x += t * dir;
        if (step < opt.tol) {
            out.position.converged = true;
            break;
        }
    }
    // Report the information at the final point with the final assignment.
    Assignment assignment;
    auto [meas, residual] = measurements_at(x, assignment);
    (void)residual;
    const auto final_fit = fuse(meas);
    out.position.info = final_fit.info;
    out.position.mean = x;
    out.assignment = assignment;
    return out;
}

}  // namespace jcel
