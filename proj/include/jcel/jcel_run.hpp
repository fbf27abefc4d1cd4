#pragma once

#include <optional>
#include <vector>

#include "jcel/bpvi_delay.hpp"
#include "jcel/ep.hpp"
#include "jcel/localize.hpp"
#include "jcel/omp_delay.hpp"
#include "jcel/scene.hpp"
#include "jcel/waveform.hpp"

namespace jcel {

enum class Extractor { omp, bpvi };

struct JcelOptions {
    Extractor extractor = Extractor::bpvi;
    bool localize = true;
    int max_outer = 20;
    double tol_outer = 1e-5;
    double damping = 0.1;
    bool warm_start = true;  // BP-VI resumes from the previous outer iteration
    bool joint_delay_covariance = true;  // fuse BP-VI delays with their joint covariance
    bool refit_gains = true;             // re-solve gains at the localized delays
    int dictionary_size = 1000;
    BpviOptions bpvi;             // cp_length and sample_period are taken from the scene
    LocalizeOptions localization;  // delta <= 0 selects (T / 10)^2; region from the scene
    VarianceLimits limits;
};

struct IterationRecord {
    int iteration = 0;
    double channel_nmse_db = 0.0;  // NaN without ground truth
    double extrinsic_var = 0.0;    // per real coordinate, in observation units
    int clamp_count = 0;           // cumulative
};

struct JcelResult {
    ChannelTensor channel;                     // L matrices M x K
    std::vector<std::vector<PathList>> paths;  // [k][m]; PA order when the user was localized
    std::vector<PositionEstimate> positions;
    std::vector<bool> localized;
    std::vector<Assignment> assignments;  // per user, from the last localization
    std::vector<IterationRecord> trace;
    int iterations = 0;
    bool converged = false;
    int clamp_events = 0;
    int extractor_failures = 0;
    int localization_failures = 0;
    BpviFlags bpvi_flags;
};

/// Iterative EP channel estimation with delay extraction and localization in
/// the loop. `scene_prior` supplies the known geometry (waveguides, PAs, region,
/// numerology); its user positions are ignored. With `truth` the per-iteration
/// channel NMSE is recorded.
JcelResult jcel_run(const FreqObservation& obs, const Scene& scene_prior, const JcelOptions& options,
                    const ChannelTensor* truth = nullptr);

/// sum ||est - truth||^2 / sum ||truth||^2 over subcarriers (linear).
double channel_error_ratio(const ChannelTensor& est, const ChannelTensor& truth);

}  // namespace jcel
