#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "jcel/config.hpp"
#include "jcel/crlb.hpp"
#include "jcel/jcel_run.hpp"

namespace jcel {

inline constexpr double kNmseFloorDb = -300.0;

/// 10 log10 of a linear error ratio, with exact recovery reported as the floor.
double nmse_db(double ratio);

/// ||est - truth||^2 / ||truth||^2; throws ParameterError for zero truth.
double nmse_ratio(const VectorXcd& est, const VectorXcd& truth);
double nmse_ratio(const VectorXd& est, const VectorXd& truth);
double nmse(const VectorXcd& est, const VectorXcd& truth);  // dB

/// Outcome of one Monte-Carlo trial at one sweep point.
struct TrialRecord {
    double sweep_value = 0.0;
    int trial = 0;
    bool ok = false;
    std::string error;
    double channel_ratio = 0.0;
    double gain_ratio = 0.0;
    double position_ratio = 0.0;
    int iterations = 0;
    int clamp_events = 0;
    int extractor_failures = 0;
    int localization_failures = 0;
    std::vector<IterationRecord> trace;
    std::vector<PositionEstimate> positions;
    std::vector<std::vector<std::vector<int>>> assignments;  // [k][m][slot]
};

struct MetricRow {
    double sweep_value = 0.0;
    double nmse_h_db = 0.0;
    double nmse_z_db = 0.0;
    double nmse_pos_db = 0.0;
    double crlb_h_db = 0.0;
    double crlb_z_db = 0.0;
    double crlb_pos_db = 0.0;
    double mean_outer_iterations = 0.0;
    int clamp_events = 0;
    int extractor_failures = 0;
    int localization_failures = 0;
    int trials = 0;
    int failed_trials = 0;
};

struct SchemeResult {
    std::vector<MetricRow> rows;
    std::vector<TrialRecord> trials;  // ordered by (sweep index, trial)
};

/// Scene actually simulated: the configured geometry or its multi-BS counterpart.
Scene experiment_scene(const ExperimentConfig& cfg, double sweep_value);

TrialRecord run_trial(const ExperimentConfig& cfg, double sweep_value, int trial);

/// CRLB companions (dB) for one sweep point.
struct CrlbRow {
    double channel_db = 0.0;
    double gain_db = 0.0;
    double position_db = 0.0;
};
CrlbRow crlb_row(const ExperimentConfig& cfg, double sweep_value);

SchemeResult run_scheme(const ExperimentConfig& cfg);

/// Scheme-1 style run over k_loss in {0.01, 0.05, 0.1}.
SchemeResult loss_sweep(ExperimentConfig cfg);

/// Writes channel_nmse.csv, gain_nmse.csv, position_nmse.csv, summary.csv,
/// plot_long.csv, trace.csv, positions.csv and manifest.json into `dir`.
void emit_results(const SchemeResult& result, const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Column names of summary.csv, in order.
const std::vector<std::string>& summary_columns();

std::string version_string();

}  // namespace jcel
