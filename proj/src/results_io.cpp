#include <fstream>
#include <sstream>

#include <json.hpp>

#include "jcel/harness.hpp"

namespace jcel {

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("emit_results: cannot open " + path.string());
    os.precision(10);
    return os;
}

void check(const std::ofstream& os, const std::filesystem::path& path) {
    if (!os) throw IoError("emit_results: write failed for " + path.string());
}

void metric_csv(const std::filesystem::path& path, const std::string& variable, const std::vector<MetricRow>& rows,
                double MetricRow::*sim, double MetricRow::*bound) {
    auto os = open_csv(path);
    os << variable << ",nmse_db,crlb_db\n";
    for (const auto& r : rows) os << r.sweep_value << ',' << r.*sim << ',' << r.*bound << '\n';
    check(os, path);
}

}  // namespace

const std::vector<std::string>& summary_columns() {
    static const std::vector<std::string> cols = {
        "sweep_value", "nmse_h_db",  "nmse_z_db",           "nmse_pos_db",  "crlb_h_db",
        "crlb_z_db",   "crlb_pos_db", "mean_outer_iterations", "clamp_events", "extractor_failures",
        "localization_failures", "trials", "failed_trials"};
    return cols;
}

void emit_results(const SchemeResult& result, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("emit_results: cannot create " + dir.string() + ": " + ec.message());
    const std::string var = to_string(cfg.sweep_variable);
    const auto& rows = result.rows;

    metric_csv(dir / "channel_nmse.csv", var, rows, &MetricRow::nmse_h_db, &MetricRow::crlb_h_db);
    metric_csv(dir / "gain_nmse.csv", var, rows, &MetricRow::nmse_z_db, &MetricRow::crlb_z_db);
    metric_csv(dir / "position_nmse.csv", var, rows, &MetricRow::nmse_pos_db, &MetricRow::crlb_pos_db);

    {
        const auto path = dir / "summary.csv";
        auto os = open_csv(path);
        const auto& cols = summary_columns();
        for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
        os << '\n';
        for (const auto& r : rows)
            os << r.sweep_value << ',' << r.nmse_h_db << ',' << r.nmse_z_db << ',' << r.nmse_pos_db << ','
               << r.crlb_h_db << ',' << r.crlb_z_db << ',' << r.crlb_pos_db << ',' << r.mean_outer_iterations << ','
               << r.clamp_events << ',' << r.extractor_failures << ',' << r.localization_failures << ',' << r.trials
               << ',' << r.failed_trials << '\n';
        check(os, path);
    }
    {
        const auto path = dir / "plot_long.csv";
        auto os = open_csv(path);
        os << "sweep_variable,sweep_value,metric,source,value_db\n";
        for (const auto& r : rows) {
            const std::pair<const char*, std::pair<double, double>> metrics[] = {
                {"channel", {r.nmse_h_db, r.crlb_h_db}},
                {"gain", {r.nmse_z_db, r.crlb_z_db}},
                {"position", {r.nmse_pos_db, r.crlb_pos_db}}};
            for (const auto& [name, v] : metrics) {
                os << var << ',' << r.sweep_value << ',' << name << ",simulation," << v.first << '\n';
                os << var << ',' << r.sweep_value << ',' << name << ",crlb," << v.second << '\n';
            }
        }
        check(os, path);
    }
    {
        const auto path = dir / "trace.csv";
        auto os = open_csv(path);
        os << "sweep_value,trial,iteration,channel_nmse_db,extrinsic_var,clamp_count\n";
        for (const auto& t : result.trials)
            for (const auto& it : t.trace)
                os << t.sweep_value << ',' << t.trial << ',' << it.iteration << ',' << it.channel_nmse_db << ','
                   << it.extrinsic_var << ',' << it.clamp_count << '\n';
        check(os, path);
    }
    {
        const auto path = dir / "positions.csv";
        auto os = open_csv(path);
        os << "sweep_value,trial,user,x_hat,y_hat,cov_xx,cov_xy,cov_yy,iterations,assignment\n";
        for (const auto& t : result.trials)
            for (std::size_t k = 0; k < t.positions.size(); ++k) {
                const auto& p = t.positions[k];
                const bool invertible = std::abs(p.info.determinant()) > 0.0;
                const Eigen::Matrix2d cov =
                    invertible ? p.covariance()
                               : Eigen::Matrix2d::Constant(std::numeric_limits<double>::quiet_NaN());
                std::ostringstream assign;
                if (k < t.assignments.size())
                    for (std::size_t m = 0; m < t.assignments[k].size(); ++m) {
                        if (m) assign << '|';
                        for (std::size_t s = 0; s < t.assignments[k][m].size(); ++s)
                            assign << (s ? " " : "") << t.assignments[k][m][s];
                    }
                os << t.sweep_value << ',' << t.trial << ',' << k << ',' << p.mean.x() << ',' << p.mean.y() << ','
                   << cov(0, 0) << ',' << cov(0, 1) << ',' << cov(1, 1) << ',' << p.iterations << ',' << assign.str()
                   << '\n';
            }
        check(os, path);
    }
    {
        const auto path = dir / "manifest.json";
        std::ofstream os(path);
        if (!os) throw IoError("emit_results: cannot open " + path.string());
        nlohmann::json m;
        m["version"] = version_string();
        m["seed"] = cfg.seed;
        m["config"] = nlohmann::json::parse(config_to_json(cfg));
        m["summary_columns"] = summary_columns();
        int failed = 0;
        for (const auto& t : result.trials)
            if (!t.ok) ++failed;
        m["failed_trials"] = failed;
        os << m.dump(2) << '\n';
        check(os, path);
    }
}

}  // namespace jcel
