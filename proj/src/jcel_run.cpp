#include "jcel/jcel_run.hpp"

#include <limits>

namespace jcel {

double channel_error_ratio(const ChannelTensor& est, const ChannelTensor& truth) {
    if (est.size() != truth.size()) throw ParameterError("channel_error_ratio: subcarrier count mismatch");
    double err = 0.0, ref = 0.0;
    for (std::size_t l = 0; l < truth.size(); ++l) {
        if (est[l].rows() != truth[l].rows() || est[l].cols() != truth[l].cols())
            throw ParameterError("channel_error_ratio: shape mismatch");
        err += (est[l] - truth[l]).squaredNorm();
        ref += truth[l].squaredNorm();
    }
    if (!(ref > 0.0)) throw ParameterError("channel_error_ratio: zero reference channel");
    return err / ref;
}

namespace {

// Amplitude that brings the channel to O(1): estimated from the received
// power, never below the noise floor.
double channel_scale(const FreqObservation& obs) {
    const auto d = obs.dims();
    double energy = 0.0;
    for (const auto& y : obs.y) energy += y.squaredNorm();
    const double per_entry = std::max(energy / d.observation_size(), obs.noise_var);
    const double pilot_power = obs.pilots.entries.cwiseAbs2().mean();
    return std::sqrt(per_entry / (d.users * pilot_power));
}

FreqObservation scaled(const FreqObservation& obs, double alpha) {
    FreqObservation s = obs;
    for (auto& y : s.y) y /= alpha;
    s.noise_var = obs.noise_var / (alpha * alpha);
    return s;
}

std::vector<PathList> reorder_by_pa(const std::vector<PathList>& paths, const Assignment& a) {
    std::vector<PathList> out(paths.size());
    for (std::size_t m = 0; m < paths.size(); ++m) {
        out[m].resize(paths[m].size());
        for (std::size_t s = 0; s < paths[m].size(); ++s) out[m][a.perm[m][s]] = paths[m][s];
    }
    return out;
}

}  // namespace

JcelResult jcel_run(const FreqObservation& obs, const Scene& scene_prior, const JcelOptions& options,
                    const ChannelTensor* truth) {
    obs.validate();
    const auto dims = obs.dims();
    const int M = dims.waveguides, K = dims.users, L = dims.subcarriers;
    if (M != scene_prior.num_waveguides() || L != scene_prior.num_subcarriers)
        throw ParameterError("jcel_run: observation does not match the scene geometry");
    if (!(options.damping > 0.0 && options.damping <= 1.0)) throw ParameterError("jcel_run: damping out of range");

    const double T = scene_prior.sample_period();
    const double alpha = channel_scale(obs);
    const RealStack stack = stack_real(scaled(obs, alpha));
    const AnchorSet anchors = anchor_set(scene_prior);

    BpviOptions bopt = options.bpvi;
    bopt.cp_length = scene_prior.cp_length;
    bopt.sample_period = T;
    LocalizeOptions lopt = options.localization;
    lopt.region = scene_prior.region;
    if (!(lopt.delta > 0.0)) lopt.delta = (T / 10.0) * (T / 10.0);
    lopt.equal_weights = lopt.equal_weights || options.extractor == Extractor::omp;

    std::optional<DelayDictionary> dict;
    if (options.extractor == Extractor::omp)
        dict = build_dictionary(L, scene_prior.cp_length, options.dictionary_size, T);

    JcelResult res;
    res.paths.assign(K, std::vector<PathList>(M));
    res.positions.assign(K, PositionEstimate{});
    res.localized.assign(K, false);
    res.assignments.assign(K, Assignment{});
    std::vector<std::optional<Vec2>> last_position(K);
    std::vector<std::vector<SinusoidMsgState>> bpvi_state(K, std::vector<SinusoidMsgState>(M));

    GaussMsg prior = ep_init(dims);
    GaussMsg extrinsic_old;
    VectorXd last_out;
    GaussMsg denoised;

    for (int it = 1; it <= options.max_outer; ++it) {
        const auto lin = ep_linear(prior, stack, options.limits);
        if (lin.clamped) ++res.clamp_events;
        const GaussMsg extrinsic = it == 1 ? lin.extrinsic : ep_damp(lin.extrinsic, extrinsic_old, options.damping);
        extrinsic_old = extrinsic;

        // Delay extraction on every (k, m) slice.
        std::vector<std::vector<PathList>> extracted(K, std::vector<PathList>(M));
        std::vector<std::vector<MatrixXd>> delay_cov(K, std::vector<MatrixXd>(M));
        std::vector<std::vector<VectorXcd>> slices(K, std::vector<VectorXcd>(M));
        double slice_var = 0.0;
        for (int k = 0; k < K; ++k)
            for (int m = 0; m < M; ++m) {
                const auto slice = unstack_channel(extrinsic.mean, extrinsic.var, dims, k, m);
                const int n_paths = scene_prior.num_pas(m);
                slices[k][m] = slice.values;
                slice_var = slice.variance;
                try {
                    if (options.extractor == Extractor::omp) {
                        extracted[k][m] = omp_extract(slice.values, *dict, n_paths);
                    } else {
                        auto r = bpvi_extract_detailed(slice.values, slice.variance, n_paths, bopt,
                                                       options.warm_start ? &bpvi_state[k][m] : nullptr);
                        bpvi_state[k][m] = r.state;
                        res.bpvi_flags.flat_objective += r.flags.flat_objective;
                        res.bpvi_flags.clamped += r.flags.clamped;
                        res.bpvi_flags.merges += r.flags.merges;
                        res.bpvi_flags.reseeds += r.flags.reseeds;
                        res.bpvi_flags.kappa_capped += r.flags.kappa_capped;
                        extracted[k][m] = std::move(r.paths);
                        if (options.joint_delay_covariance)
                            delay_cov[k][m] = joint_delay_covariance(extracted[k][m], slice.variance, L, T);
                    }
                    for (auto& p : extracted[k][m]) {
                        p.user = k;
                        p.waveguide = m;
                    }
                } catch (const std::exception&) {
                    ++res.extractor_failures;
                    extracted[k][m] = res.paths[k][m];
                }
            }

        // Localization and channel rebuild per user.
        std::vector<UserChannelMap> maps;
        maps.reserve(K);
        for (int k = 0; k < K; ++k) {
            std::optional<PositionEstimate> pos;
            std::vector<PathList> user_paths = extracted[k];
            if (options.localize) {
                try {
                    const Vec2 init = last_position[k].value_or(lopt.region.centroid());
                    LocalizeOptions user_opt = lopt;
                    bool all_cov = true;
                    for (int m = 0; m < M; ++m)
                        all_cov = all_cov && delay_cov[k][m].rows() == static_cast<Eigen::Index>(user_paths[m].size());
                    if (all_cov && options.extractor == Extractor::bpvi && options.joint_delay_covariance)
                        user_opt.delay_cov = delay_cov[k];
                    auto loc = localize_newton(user_paths, anchors, init, user_opt);
                    if (loc.position.diverged) throw GeometryError("localization diverged");
                    user_paths = reorder_by_pa(user_paths, loc.assignment);
                    if (options.refit_gains)
                        refit_gains(user_paths, slices[k], slice_var, anchors, loc.position.mean, T);
                    pos = loc.position;
                    res.assignments[k] = loc.assignment;
                    last_position[k] = loc.position.mean;
                } catch (const std::exception&) {
                    ++res.localization_failures;
                }
            }
            try {
                maps.emplace_back(scene_prior, anchors, user_paths, pos);
            } catch (const std::exception&) {
                pos.reset();
                maps.emplace_back(scene_prior, anchors, user_paths, std::nullopt);
            }
            res.localized[k] = pos.has_value();
            if (pos) res.positions[k] = *pos;
            res.paths[k] = user_paths;
        }

        denoised = delta_method_channel(maps, M, L);
        denoised.var = std::max(denoised.var, options.limits.floor);

        IterationRecord rec;
        rec.iteration = it;
        rec.extrinsic_var = extrinsic.var * alpha * alpha;
        rec.channel_nmse_db = std::numeric_limits<double>::quiet_NaN();
        if (truth) {
            auto est = unstack_tensor(denoised.mean, M, K, L);
            for (auto& h : est) h *= alpha;
            const double ratio = channel_error_ratio(est, *truth);
            rec.channel_nmse_db = ratio > 0.0 ? 10.0 * std::log10(ratio) : -300.0;
        }

        const auto comb = ep_combine(denoised, extrinsic, options.limits);
        if (comb.clamped) ++res.clamp_events;
        rec.clamp_count = res.clamp_events;
        res.trace.push_back(rec);
        res.iterations = it;

        double change = std::numeric_limits<double>::infinity();
        if (last_out.size() == denoised.mean.size()) {
            const double ref = denoised.mean.norm();
            change = ref > 0.0 ? (denoised.mean - last_out).norm() / ref : 0.0;
        }
        last_out = denoised.mean;
        prior = comb.prior;
        if (change < options.tol_outer) {
            res.converged = true;
            break;
        }
    }

    res.channel = unstack_tensor(denoised.mean, M, K, L);
    for (auto& h : res.channel) h *= alpha;
    for (auto& user : res.paths)
        for (auto& list : user)
            for (auto& p : list) {
                p.gain_mean *= alpha;
                p.gain_var *= alpha * alpha;
            }
    return res;
}

}  // namespace jcel
