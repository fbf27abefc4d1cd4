#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "jcel/jcel_run.hpp"
#include "jcel/scene.hpp"

namespace jcel {

enum class Baseline { pass, multi_bs };
enum class SweepVariable { tx_power_dbm, num_subcarriers, num_frames, k_loss };

std::string to_string(Extractor e);
std::string to_string(Baseline b);
std::string to_string(SweepVariable v);
Extractor parse_extractor(const std::string& s);
Baseline parse_baseline(const std::string& s);
SweepVariable parse_sweep_variable(const std::string& s);

/// Geometry given explicitly instead of through a scheme number.
struct SceneSpec {
    struct WaveguideSpec {
        std::vector<Vec3> pas;
        std::optional<Vec3> sink;
    };
    std::vector<WaveguideSpec> waveguides;
    std::vector<Vec2> users;
};

struct ExperimentConfig {
    int scheme = 1;                     // 1..4, or 0 with `scene` set
    std::optional<SceneSpec> scene;
    Extractor extractor = Extractor::bpvi;
    Baseline baseline = Baseline::pass;
    SweepVariable sweep_variable = SweepVariable::tx_power_dbm;
    std::vector<double> sweep_values{0, 2, 4, 6, 8, 10, 12, 14, 16};
    int trials = 50;
    std::uint64_t seed = 1;
    std::string output_dir = "results";
    int threads = 0;  // 0 selects the hardware concurrency

    // Numerology and model defaults.
    double carrier_freq = 28e9;
    double bandwidth = 100e6;
    int num_subcarriers = 32;
    int cp_length = 16;
    int num_frames = 8;
    double tx_power_dbm = 8.0;
    double noise_dbm = -90.0;
    double refractive_index = 1.4;
    double k_loss = 0.0;
    double sink_offset = 5.0;
    InWaveguideDelay delay_model = InWaveguideDelay::nominal;
    bool inwaveguide_phase = false;
    Region region;

    // Estimator settings.
    int dictionary_size = 1000;
    int max_outer = 20;
    int max_inner = 100;
    double damping = 0.1;
    bool localize = true;
    bool literal_kappa_variance = false;

    void validate() const;
};

/// Table-backed defaults of the four canned schemes.
ExperimentConfig scheme_config(int scheme);

/// Scene of `cfg` at one sweep value (the sweep variable overrides the base setting).
Scene build_scene(const ExperimentConfig& cfg, std::optional<double> sweep_value = std::nullopt);

/// Every PA becomes a single-PA waveguide terminating at the PA itself.
Scene multi_bs_scene(const Scene& scene);

/// Pilot power and frame count after applying the sweep value.
double pilot_power_watts(const ExperimentConfig& cfg, std::optional<double> sweep_value = std::nullopt);
int frames_at(const ExperimentConfig& cfg, std::optional<double> sweep_value = std::nullopt);

JcelOptions jcel_options(const ExperimentConfig& cfg);

std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace jcel
