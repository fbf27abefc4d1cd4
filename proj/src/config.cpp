#include "jcel/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace jcel {

using nlohmann::json;

std::string to_string(Extractor e) { return e == Extractor::omp ? "omp" : "bpvi"; }
std::string to_string(Baseline b) { return b == Baseline::pass ? "pass" : "multi_bs"; }
std::string to_string(SweepVariable v) {
    switch (v) {
        case SweepVariable::tx_power_dbm: return "tx_power_dbm";
        case SweepVariable::num_subcarriers: return "num_subcarriers";
        case SweepVariable::num_frames: return "num_frames";
        case SweepVariable::k_loss: return "k_loss";
    }
    return "tx_power_dbm";
}

Extractor parse_extractor(const std::string& s) {
    if (s == "omp") return Extractor::omp;
    if (s == "bpvi") return Extractor::bpvi;
    throw ParameterError("unknown extractor '" + s + "' (expected omp or bpvi)");
}

Baseline parse_baseline(const std::string& s) {
    if (s == "pass") return Baseline::pass;
    if (s == "multi_bs") return Baseline::multi_bs;
    throw ParameterError("unknown baseline '" + s + "' (expected pass or multi_bs)");
}

SweepVariable parse_sweep_variable(const std::string& s) {
    for (auto v : {SweepVariable::tx_power_dbm, SweepVariable::num_subcarriers, SweepVariable::num_frames,
                   SweepVariable::k_loss})
        if (to_string(v) == s) return v;
    throw ParameterError("unknown sweep variable '" + s + "'");
}

void ExperimentConfig::validate() const {
    if (trials < 1) throw ParameterError("config: trials must be at least 1");
    if (sweep_values.empty()) throw ParameterError("config: sweep values must be nonempty");
    if (scheme == 0 && !scene) throw ParameterError("config: scheme 0 needs an explicit scene");
    if (scheme < 0 || scheme > 4) throw ParameterError("config: scheme must be 0..4");
    if (num_subcarriers < 1 || cp_length < 1 || num_frames < 1) throw ParameterError("config: sizes must be positive");
    if (!(damping > 0.0 && damping <= 1.0)) throw ParameterError("config: damping must lie in (0, 1]");
    if (max_outer < 1 || max_inner < 1 || dictionary_size < 1) throw ParameterError("config: iteration caps must be positive");
    if (sweep_variable == SweepVariable::num_subcarriers || sweep_variable == SweepVariable::num_frames)
        for (double v : sweep_values)
            if (v < 1 || v != std::floor(v)) throw ParameterError("config: size sweeps need positive integers");
}

namespace {

const std::vector<Vec3> kWg1 = {{-10, -5, 3}, {-10, 0, 3}, {-10, 5, 3}};
const std::vector<Vec3> kWg2 = {{-5, 10, 3}, {0, 10, 3}, {5, 10, 3}};
const std::vector<Vec2> kUsers = {{2.85, 1.0}, {3.0, -0.8}, {-2.0, 2.3}, {1.5, -3.0}};

SceneSpec scheme_geometry(int scheme) {
    SceneSpec s;
    const bool both = scheme == 2 || scheme == 3;
    s.waveguides.push_back({kWg1, std::nullopt});
    if (both) s.waveguides.push_back({kWg2, std::nullopt});
    const int users = (scheme == 2 || scheme == 4) ? 4 : 3;
    s.users.assign(kUsers.begin(), kUsers.begin() + users);
    return s;
}

}  // namespace

ExperimentConfig scheme_config(int scheme) {
    if (scheme < 1 || scheme > 4) throw ParameterError("scheme must be 1..4");
    ExperimentConfig cfg;
    cfg.scheme = scheme;
    cfg.output_dir = "results/scheme" + std::to_string(scheme);
    if (scheme == 3) {
        cfg.sweep_variable = SweepVariable::num_subcarriers;
        cfg.sweep_values = {16, 32, 64};
    }
    return cfg;
}

Scene build_scene(const ExperimentConfig& cfg, std::optional<double> sweep_value) {
    const SceneSpec spec = cfg.scheme == 0 ? *cfg.scene : scheme_geometry(cfg.scheme);
    double k_loss = cfg.k_loss;
    int L = cfg.num_subcarriers;
    if (sweep_value) {
        if (cfg.sweep_variable == SweepVariable::k_loss) k_loss = *sweep_value;
        if (cfg.sweep_variable == SweepVariable::num_subcarriers) L = static_cast<int>(*sweep_value);
    }
    Scene s;
    s.carrier_freq = cfg.carrier_freq;
    s.bandwidth = cfg.bandwidth;
    s.num_subcarriers = L;
    s.cp_length = cfg.cp_length;
    s.region = cfg.region;
    s.delay_model = cfg.delay_model;
    s.inwaveguide_phase = cfg.inwaveguide_phase;
    for (std::size_t m = 0; m < spec.waveguides.size(); ++m)
        s.waveguides.push_back(make_waveguide(static_cast<int>(m), spec.waveguides[m].pas, cfg.refractive_index,
                                              k_loss, spec.waveguides[m].sink, cfg.sink_offset));
    const double power = pilot_power_watts(cfg, sweep_value);
    for (const auto& u : spec.users) s.users.push_back({Vec3(u.x(), u.y(), 0.0), power});
    s.validate();
    return s;
}

Scene multi_bs_scene(const Scene& scene) {
    Scene out = scene;
    out.waveguides.clear();
    for (const auto& wg : scene.waveguides)
        for (const auto& pa : wg.pas) {
            const int index = static_cast<int>(out.waveguides.size());
            out.waveguides.push_back(make_waveguide(index, {pa.position}, wg.refractive_index, wg.loss_constant,
                                                    pa.position));
        }
    out.validate();
    return out;
}

double pilot_power_watts(const ExperimentConfig& cfg, std::optional<double> sweep_value) {
    if (sweep_value && cfg.sweep_variable == SweepVariable::tx_power_dbm) return dbm_to_watts(*sweep_value);
    return dbm_to_watts(cfg.tx_power_dbm);
}

int frames_at(const ExperimentConfig& cfg, std::optional<double> sweep_value) {
    if (sweep_value && cfg.sweep_variable == SweepVariable::num_frames) return static_cast<int>(*sweep_value);
    return cfg.num_frames;
}

JcelOptions jcel_options(const ExperimentConfig& cfg) {
    JcelOptions o;
    o.extractor = cfg.extractor;
    o.localize = cfg.localize;
    o.max_outer = cfg.max_outer;
    o.damping = cfg.damping;
    o.dictionary_size = cfg.dictionary_size;
    o.bpvi.max_iterations = cfg.max_inner;
    o.bpvi.literal_kappa_variance = cfg.literal_kappa_variance;
    return o;
}

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ParameterError("config: expected [x, y, z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["scheme"] = cfg.scheme;
    if (cfg.scene) {
        json sc;
        for (const auto& wg : cfg.scene->waveguides) {
            json w;
            for (const auto& p : wg.pas) w["pas"].push_back(vec3_json(p));
            if (wg.sink) w["sink"] = vec3_json(*wg.sink);
            sc["waveguides"].push_back(w);
        }
        for (const auto& u : cfg.scene->users) sc["users"].push_back(json::array({u.x(), u.y()}));
        j["scene"] = sc;
    }
    j["extractor"] = to_string(cfg.extractor);
    j["baseline"] = to_string(cfg.baseline);
    j["sweep"] = {{"variable", to_string(cfg.sweep_variable)}, {"values", cfg.sweep_values}};
    j["trials"] = cfg.trials;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["threads"] = cfg.threads;
    j["carrier_freq_hz"] = cfg.carrier_freq;
    j["bandwidth_hz"] = cfg.bandwidth;
    j["num_subcarriers"] = cfg.num_subcarriers;
    j["cp_length"] = cfg.cp_length;
    j["num_frames"] = cfg.num_frames;
    j["tx_power_dbm"] = cfg.tx_power_dbm;
    j["noise_dbm"] = cfg.noise_dbm;
    j["refractive_index"] = cfg.refractive_index;
    j["k_loss"] = cfg.k_loss;
    j["sink_offset_m"] = cfg.sink_offset;
    j["inwg_delay_model"] = cfg.delay_model == InWaveguideDelay::nominal ? "nominal" : "physical";
    j["inwg_phase"] = cfg.inwaveguide_phase;
    j["region"] = {cfg.region.x_min, cfg.region.x_max, cfg.region.y_min, cfg.region.y_max};
    j["dictionary_size"] = cfg.dictionary_size;
    j["max_outer"] = cfg.max_outer;
    j["max_inner"] = cfg.max_inner;
    j["damping"] = cfg.damping;
    j["localize"] = cfg.localize;
    j["literal_kappa_variance"] = cfg.literal_kappa_variance;
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParameterError(std::string("config: malformed JSON: ") + e.what());
    }
    try {
        int scheme = j.value("scheme", 1);
        ExperimentConfig cfg = scheme >= 1 && scheme <= 4 ? scheme_config(scheme) : ExperimentConfig{};
        cfg.scheme = scheme;
        if (j.contains("scene")) {
            SceneSpec spec;
            for (const auto& w : j.at("scene").at("waveguides")) {
                SceneSpec::WaveguideSpec ws;
                for (const auto& p : w.at("pas")) ws.pas.push_back(vec3_from(p));
                if (w.contains("sink")) ws.sink = vec3_from(w.at("sink"));
                spec.waveguides.push_back(std::move(ws));
            }
            for (const auto& u : j.at("scene").at("users")) spec.users.emplace_back(u.at(0).get<double>(), u.at(1).get<double>());
            cfg.scene = std::move(spec);
        }
        if (j.contains("extractor")) cfg.extractor = parse_extractor(j.at("extractor").get<std::string>());
        if (j.contains("baseline")) cfg.baseline = parse_baseline(j.at("baseline").get<std::string>());
        if (j.contains("sweep")) {
            const auto& s = j.at("sweep");
            if (s.contains("variable")) cfg.sweep_variable = parse_sweep_variable(s.at("variable").get<std::string>());
            if (s.contains("values")) cfg.sweep_values = s.at("values").get<std::vector<double>>();
        }
        read_opt(j, "trials", cfg.trials);
        read_opt(j, "seed", cfg.seed);
        read_opt(j, "output_dir", cfg.output_dir);
        read_opt(j, "threads", cfg.threads);
        read_opt(j, "carrier_freq_hz", cfg.carrier_freq);
        read_opt(j, "bandwidth_hz", cfg.bandwidth);
        read_opt(j, "num_subcarriers", cfg.num_subcarriers);
        read_opt(j, "cp_length", cfg.cp_length);
        read_opt(j, "num_frames", cfg.num_frames);
        read_opt(j, "tx_power_dbm", cfg.tx_power_dbm);
        read_opt(j, "noise_dbm", cfg.noise_dbm);
        read_opt(j, "refractive_index", cfg.refractive_index);
        read_opt(j, "k_loss", cfg.k_loss);
        read_opt(j, "sink_offset_m", cfg.sink_offset);
        if (j.contains("inwg_delay_model")) {
            const auto m = j.at("inwg_delay_model").get<std::string>();
            if (m != "nominal" && m != "physical") throw ParameterError("config: inwg_delay_model must be nominal or physical");
            cfg.delay_model = m == "nominal" ? InWaveguideDelay::nominal : InWaveguideDelay::physical;
        }
        read_opt(j, "inwg_phase", cfg.inwaveguide_phase);
        if (j.contains("region")) {
            const auto r = j.at("region").get<std::vector<double>>();
            if (r.size() != 4) throw ParameterError("config: region must be [x_min, x_max, y_min, y_max]");
            cfg.region = {r[0], r[1], r[2], r[3]};
        }
        read_opt(j, "dictionary_size", cfg.dictionary_size);
        read_opt(j, "max_outer", cfg.max_outer);
        read_opt(j, "max_inner", cfg.max_inner);
        read_opt(j, "damping", cfg.damping);
        read_opt(j, "localize", cfg.localize);
        read_opt(j, "literal_kappa_variance", cfg.literal_kappa_variance);
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_config: cannot open " + path.string());
    std::stringstream buf;
    buf << is.rdbuf();
    return config_from_json(buf.str());
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("save_config: cannot open " + path.string());
    os << config_to_json(cfg) << '\n';
    if (!os) throw IoError("save_config: write failed for " + path.string());
}

}  // namespace jcel
