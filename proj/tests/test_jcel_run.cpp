#include <catch_amalgamated.hpp>

#include "jcel/config.hpp"
#include "jcel/jcel_run.hpp"
#include "jcel/omp_delay.hpp"
#include "jcel/rng.hpp"

using namespace jcel;

namespace {

ExperimentConfig single_path_config() {
    ExperimentConfig cfg;
    cfg.scheme = 0;
    SceneSpec spec;
    spec.waveguides.push_back({{Vec3(-10, 0, 3)}, std::nullopt});
    spec.users = {Vec2(2.85, 1.0)};
    cfg.scene = spec;
    return cfg;
}

}  // namespace

TEST_CASE("noiseless on-grid path is recovered exactly", "[jcel_run]") {
    const auto cfg = single_path_config();
    const Scene scene = build_scene(cfg);
    auto paths = composite_paths(scene);
    const auto dict = build_dictionary(scene.num_subcarriers, scene.cp_length, cfg.dictionary_size, scene.sample_period());
    Eigen::Index idx = 0;
    (dict.grid.array() - paths[0].delay).abs().minCoeff(&idx);
    paths[0].delay = dict.grid(idx);
    const auto h = channel_tensor(scene, paths);
    const auto pilots = pilot_matrix(1, cfg.num_frames, pilot_power_watts(cfg));
    FreqObservation obs;
    obs.pilots = pilots;
    for (const auto& hl : h) obs.y.push_back(hl * pilots.entries);
    double energy = 0.0;
    for (const auto& y : obs.y) energy += y.squaredNorm();
    obs.noise_var = 1e-16 * energy / (obs.y.size() * obs.y[0].size());

    JcelOptions opt = jcel_options(cfg);
    opt.extractor = Extractor::omp;
    opt.localize = false;
    opt.max_outer = 2;
    const auto res = jcel_run(obs, scene, opt, &h);
    CHECK(channel_error_ratio(res.channel, h) < 1e-10);
    CHECK(res.iterations <= 2);

    // Fixed point: the rebuilt channel reproduces the observation.
    const auto st = stack_real(obs);
    const VectorXd hv = stack_tensor(res.channel);
    CHECK((st.apply(hv) - st.y).norm() <= 1e-6 * st.y.norm());
    CHECK(res.trace.size() == static_cast<std::size_t>(res.iterations));
}

TEST_CASE("both extractors return a complete result", "[jcel_run]") {
    auto cfg = scheme_config(1);
    const Scene scene = build_scene(cfg, 8.0);
    const auto h = channel_tensor(scene);
    const auto pilots = pilot_matrix(scene.num_users(), cfg.num_frames, pilot_power_watts(cfg, 8.0));
    for (Extractor e : {Extractor::omp, Extractor::bpvi}) {
        Rng rng = Rng::stream(17, 0, StreamId::noise);
        const auto obs = simulate_rx(h, pilots, dbm_to_watts(cfg.noise_dbm), rng);
        JcelOptions opt = jcel_options(cfg);
        opt.extractor = e;
        opt.max_outer = 4;
        const auto res = jcel_run(obs, scene, opt, &h);
        const int K = scene.num_users(), M = scene.num_waveguides();
        REQUIRE(res.channel.size() == static_cast<std::size_t>(scene.num_subcarriers));
        CHECK(res.channel[0].rows() == M);
        CHECK(res.channel[0].cols() == K);
        REQUIRE(res.paths.size() == static_cast<std::size_t>(K));
        for (const auto& pk : res.paths) {
            REQUIRE(pk.size() == static_cast<std::size_t>(M));
            CHECK(pk[0].size() == 3);
        }
        CHECK(res.positions.size() == static_cast<std::size_t>(K));
        CHECK(res.localized.size() == static_cast<std::size_t>(K));
        CHECK(res.assignments.size() == static_cast<std::size_t>(K));
        CHECK(res.iterations >= 1);
        CHECK(res.iterations <= 4);
        REQUIRE(res.trace.size() == static_cast<std::size_t>(res.iterations));
        for (const auto& t : res.trace) CHECK(std::isfinite(t.channel_nmse_db));
        CHECK(channel_error_ratio(res.channel, h) < 1.0);
        if (e == Extractor::bpvi)
            for (int k = 0; k < K; ++k)
                if (res.localized[k]) CHECK((res.positions[k].mean - scene.users[k].position.head<2>()).norm() < 0.5);
    }
}

TEST_CASE("without ground truth the trace holds NaN", "[jcel_run]") {
    auto cfg = scheme_config(1);
    const Scene scene = build_scene(cfg, 8.0);
    const auto h = channel_tensor(scene);
    Rng rng = Rng::stream(5, 0, StreamId::noise);
    const auto obs = simulate_rx(h, pilot_matrix(3, 8, pilot_power_watts(cfg, 8.0)), dbm_to_watts(cfg.noise_dbm), rng);
    JcelOptions opt = jcel_options(cfg);
    opt.max_outer = 2;
    const auto res = jcel_run(obs, scene, opt);
    for (const auto& t : res.trace) CHECK(std::isnan(t.channel_nmse_db));
}

TEST_CASE("channel error ratio", "[jcel_run]") {
    ChannelTensor a(2, MatrixXcd::Constant(2, 2, Complex(1, 0)));
    ChannelTensor b = a;
    CHECK(channel_error_ratio(b, a) == 0.0);
    b[1](0, 0) = Complex(3, 0);
    CHECK(channel_error_ratio(b, a) == Catch::Approx(4.0 / 8.0));
}
