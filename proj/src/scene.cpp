#include "jcel/scene.hpp"

#include <cmath>
#include <sstream>

namespace jcel {

int Scene::total_pas() const {
    int total = 0;
    for (const auto& wg : waveguides) total += static_cast<int>(wg.pas.size());
    return total;
}

void Scene::validate() const {
    if (num_subcarriers <= 0 || cp_length <= 0) throw ParameterError("scene: L and L_CP must be positive");
    if (bandwidth <= 0.0 || carrier_freq <= 0.0) throw ParameterError("scene: bandwidth and carrier must be positive");
    if (waveguides.empty() || users.empty()) throw ParameterError("scene: needs at least one waveguide and one user");
    for (std::size_t m = 0; m < waveguides.size(); ++m) {
        const auto& wg = waveguides[m];
        if (wg.pas.empty()) throw ParameterError("scene: waveguide without PAs");
        if (wg.refractive_index < 1.0) throw ParameterError("scene: refractive index below 1");
        if (wg.loss_constant < 0.0) throw ParameterError("scene: negative loss constant");
        for (const auto& pa : wg.pas) {
            if (pa.position.z() != wg.pas.front().position.z())
                throw ParameterError("scene: PAs on one waveguide must share a height");
            if (pa.waveguide_index != static_cast<int>(m)) throw ParameterError("scene: PA waveguide index mismatch");
        }
    }
    for (const auto& u : users) {
        if (u.position.z() != 0.0) throw ParameterError("scene: users must lie on the ground plane");
        if (!region.contains(u.position.head<2>())) throw ParameterError("scene: user outside region bounds");
        if (u.tx_power <= 0.0) throw ParameterError("scene: transmit power must be positive");
    }
}

PathSegment free_space_path(const Vec3& user, const Vec3& pa, double carrier_freq) {
    const double dist = (user - pa).norm();
    if (!(dist > 0.0)) throw GeometryError("free_space_path: user and PA coincide");
    const double eta = kSpeedOfLight * kSpeedOfLight / (16.0 * kPi * kPi * carrier_freq * carrier_freq);
    const double phase = std::fmod(kTwoPi * carrier_freq * dist / kSpeedOfLight, kTwoPi);
    return {std::polar(std::sqrt(eta) / dist, phase), dist / kSpeedOfLight};
}

double intrinsic_delay(const Waveguide& wg, const PaAnchor& pa, InWaveguideDelay model) {
    const double length = (wg.sink_position - pa.position).norm();
    return model == InWaveguideDelay::nominal ? length / (wg.refractive_index * kSpeedOfLight)
                                            : length * wg.refractive_index / kSpeedOfLight;
}

PathSegment inwaveguide_path(const Waveguide& wg, const PaAnchor& pa, double carrier_freq, InWaveguideDelay model,
                             bool with_phase) {
    if (pa.pa_index < 0 || pa.pa_index >= static_cast<int>(wg.pas.size()) ||
        wg.pas[pa.pa_index].position != pa.position)
        throw ParameterError("inwaveguide_path: PA does not belong to waveguide");
    const double length = (wg.sink_position - pa.position).norm();
    const double magnitude = std::sqrt(std::exp(-wg.loss_constant * length));
    const double phase =
        with_phase ? -std::fmod(kTwoPi * wg.refractive_index * carrier_freq * length / kSpeedOfLight, kTwoPi) : 0.0;
    return {std::polar(magnitude, phase), intrinsic_delay(wg, pa, model)};
}

std::vector<PathParams> composite_paths(const Scene& scene) {
    std::vector<PathParams> paths;
    paths.reserve(scene.users.size() * scene.total_pas());
    const double cp = scene.cp_duration();
    for (int k = 0; k < scene.num_users(); ++k) {
        for (int m = 0; m < scene.num_waveguides(); ++m) {
            const auto& wg = scene.waveguides[m];
            for (int n = 0; n < scene.num_pas(m); ++n) {
                const auto& pa = wg.pas[n];
                const auto outer = free_space_path(scene.users[k].position, pa.position, scene.carrier_freq);
                const auto inner =
                    inwaveguide_path(wg, pa, scene.carrier_freq, scene.delay_model, scene.inwaveguide_phase);
                PathParams p{inner.gain * outer.gain, outer.delay + inner.delay, k, m, n};
                if (p.delay > cp * (1.0 + 1e-12)) {
                    std::ostringstream msg;
                    msg << "composite_paths: delay " << p.delay << " s of path (" << k << "," << m << "," << n
                        << ") exceeds the cyclic prefix " << cp << " s";
                    throw CpViolationError(msg.str());
                }
                paths.push_back(p);
            }
        }
    }
    return paths;
}

MatrixXcd freq_channel(std::span<const PathParams> paths, int l, int num_subcarriers, double sample_period,
                       int num_waveguides, int num_users) {
    MatrixXcd h = MatrixXcd::Zero(num_waveguides, num_users);
    const double scale = -kTwoPi * l / (num_subcarriers * sample_period);
    for (const auto& p : paths) h(p.waveguide, p.user) += p.gain * std::polar(1.0, scale * p.delay);
    return h;
}

ChannelTensor channel_tensor(const Scene& scene, std::span<const PathParams> paths) {
    ChannelTensor h;
    h.reserve(scene.num_subcarriers);
    for (int l = 0; l < scene.num_subcarriers; ++l)
        h.push_back(freq_channel(paths, l, scene.num_subcarriers, scene.sample_period(), scene.num_waveguides(),
                                 scene.num_users()));
    return h;
}

ChannelTensor channel_tensor(const Scene& scene) {
    const auto paths = composite_paths(scene);
    return channel_tensor(scene, paths);
}

Waveguide make_waveguide(int index, const std::vector<Vec3>& pa_positions, double refractive_index,
                         double loss_constant, std::optional<Vec3> sink, double sink_offset) {
    if (pa_positions.empty()) throw ParameterError("make_waveguide: no PA positions");
    Waveguide wg;
    wg.refractive_index = refractive_index;
    wg.loss_constant = loss_constant;
    for (std::size_t n = 0; n < pa_positions.size(); ++n)
        wg.pas.push_back({pa_positions[n], index, static_cast<int>(n)});
    if (sink) {
        wg.sink_position = *sink;
    } else if (pa_positions.size() == 1) {
        wg.sink_position = pa_positions.front();
    } else {
        const Vec3 dir = (pa_positions.front() - pa_positions[1]).normalized();
        wg.sink_position = pa_positions.front() + sink_offset * dir;
    }
    return wg;
}

}  // namespace jcel
