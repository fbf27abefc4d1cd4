#pragma once

#include <optional>
#include <span>
#include <vector>

#include "jcel/types.hpp"

namespace jcel {

/// Pinching antenna: a point on a waveguide acting as a virtual anchor.
struct PaAnchor {
    Vec3 position = Vec3::Zero();
    int waveguide_index = 0;
    int pa_index = 0;
};

/// How the PA-to-sink delay depends on the refractive index.
/// `nominal` divides the guided length by n_d, `physical` multiplies by it.
enum class InWaveguideDelay { nominal, physical };

struct Waveguide {
    Vec3 sink_position = Vec3::Zero();
    std::vector<PaAnchor> pas;
    double refractive_index = 1.4;
    double loss_constant = 0.0;  // per meter
};

struct User {
    Vec3 position = Vec3::Zero();
    double tx_power = 1.0;  // watts
};

struct Region {
    double x_min = -5.0;
    double x_max = 5.0;
    double y_min = -5.0;
    double y_max = 5.0;

    Vec2 centroid() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
    double diameter() const { return std::hypot(x_max - x_min, y_max - y_min); }
    bool contains(const Vec2& p, double pad = 0.0) const {
        return p.x() >= x_min - pad && p.x() <= x_max + pad && p.y() >= y_min - pad && p.y() <= y_max + pad;
    }
};

struct Scene {
    std::vector<Waveguide> waveguides;
    std::vector<User> users;
    double carrier_freq = 28e9;
    double bandwidth = 100e6;
    int num_subcarriers = 32;
    int cp_length = 16;
    Region region;
    InWaveguideDelay delay_model = InWaveguideDelay::nominal;
    bool inwaveguide_phase = false;

    double sample_period() const { return 1.0 / bandwidth; }
    double cp_duration() const { return cp_length * sample_period(); }
    int num_waveguides() const { return static_cast<int>(waveguides.size()); }
    int num_users() const { return static_cast<int>(users.size()); }
    int num_pas(int m) const { return static_cast<int>(waveguides[m].pas.size()); }
    int total_pas() const;

    /// Throws ParameterError on any broken structural invariant.
    void validate() const;
};

/// Gain and delay of one propagation segment.
struct PathSegment {
    Complex gain;
    double delay = 0.0;
};

struct PathParams {
    Complex gain;
    double delay = 0.0;
    int user = 0;
    int waveguide = 0;
    int pa = 0;
};

PathSegment free_space_path(const Vec3& user, const Vec3& pa, double carrier_freq);

PathSegment inwaveguide_path(const Waveguide& wg, const PaAnchor& pa, double carrier_freq,
                             InWaveguideDelay model = InWaveguideDelay::nominal, bool with_phase = false);

/// Guided delay from PA to sink; depends only on waveguide geometry.
double intrinsic_delay(const Waveguide& wg, const PaAnchor& pa, InWaveguideDelay model);

/// Composite paths ordered by (user, waveguide, pa). Throws CpViolationError when
/// any delay exceeds the cyclic prefix.
std::vector<PathParams> composite_paths(const Scene& scene);

/// M x K frequency response at 0-based subcarrier l.
MatrixXcd freq_channel(std::span<const PathParams> paths, int l, int num_subcarriers, double sample_period,
                       int num_waveguides, int num_users);

ChannelTensor channel_tensor(const Scene& scene, std::span<const PathParams> paths);
ChannelTensor channel_tensor(const Scene& scene);

/// Waveguide whose sink sits `sink_offset` meters beyond the first PA, along the PA line.
/// A single-PA waveguide without an explicit sink terminates at the PA.
Waveguide make_waveguide(int index, const std::vector<Vec3>& pa_positions, double refractive_index,
                         double loss_constant, std::optional<Vec3> sink = std::nullopt, double sink_offset = 5.0);

}  // namespace jcel
