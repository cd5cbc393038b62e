#include <gtest/gtest.h>

#include "helpers.hpp"
#include "pqos/models/gbt.hpp"
#include "pqos/stats.hpp"
#include "pqos/synthgen.hpp"
#include "pqos/workbench.hpp"

using namespace pqos;
using namespace pqos::synth;
using pqos::testing::TempDir;

namespace {

SynthConfig small() {
    SynthConfig c;
    c.n_measurements = 2;
    c.duration_s = 600;
    return c;
}

}  // namespace

TEST(Field, SamePointIdenticalAndExponentialCorrelation) {
    std::mt19937_64 rng(12345);
    const double L = 50.0, res = 10.0, sd = 6.0;
    auto f = generate_field(1e6 - res, res, L, sd, rng);
    ASSERT_EQ(f.values.size(), 100000u);
    EXPECT_EQ(f.at(1234.5), f.at(1234.5));
    EXPECT_EQ(f.at(20.0), f.values[2]);

    const auto lag = static_cast<std::size_t>(L / res);
    auto a = stats::acf(f.values, lag);
    EXPECT_NEAR(a[lag], std::exp(-1.0), 0.05);
    double m = 0, v = 0;
    for (double x : f.values) m += x;
    m /= static_cast<double>(f.values.size());
    for (double x : f.values) v += (x - m) * (x - m);
    v /= static_cast<double>(f.values.size() - 1);
    EXPECT_NEAR(v, sd * sd, 0.05 * sd * sd);
}

TEST(Field, InvalidParameters) {
    std::mt19937_64 rng(1);
    EXPECT_THROW(generate_field(100, 0, 50, 6, rng), Error);
    EXPECT_THROW(generate_field(100, 1, 0, 6, rng), Error);
}

TEST(Config, ValidationAndJsonRoundTrip) {
    SynthConfig c;
    EXPECT_NO_THROW(c.validate());
    c.duration_s = c.headway_max_s + 120;
    EXPECT_THROW(c.validate(), Error);
    c = SynthConfig{};
    c.sample_period_s = 0;
    EXPECT_THROW(generate_traces(c), Error);
    c = SynthConfig{};
    c.correlation_length_m = -1;
    EXPECT_THROW(c.validate(), Error);

    SynthConfig r;
    r.route = {{52.5, 13.3}, {52.51, 13.31}, {52.5, 13.32}};
    r.seed = 77;
    r.link.snr_base_db = 3.25;
    r.lead_noise_scale = 0.5;
    nlohmann::json j = r;
    EXPECT_EQ(j.get<SynthConfig>().route, r.route);
    EXPECT_EQ(j.get<SynthConfig>().link, r.link);
    EXPECT_EQ(nlohmann::json(j.get<SynthConfig>()).dump(), j.dump());
    EXPECT_EQ(nlohmann::json::object().get<SynthConfig>().link, LinkModel{});
}

TEST(Traces, StoreInvariantsAndRoles) {
    auto cfg = small();
    cfg.kpi_null_probability = 0.01;
    auto out = generate_traces(cfg);
    EXPECT_EQ(out.traces.measurement_ids(), (std::set<int>{0, 1}));
    for (const auto& [key, series] : out.traces.groups()) {
        ASSERT_FALSE(series.empty());
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (i > 0) {
                EXPECT_LT(series[i - 1].timestamp, series[i].timestamp);
            }
            EXPECT_GE(series[i].latitude, -90);
            EXPECT_LE(series[i].latitude, 90);
            EXPECT_GE(series[i].longitude, -180);
            EXPECT_LE(series[i].longitude, 180);
            EXPECT_GE(series[i].datarate, 0.0);
            EXPECT_TRUE(ScenarioFilter::a3d().matches(series[i]));
        }
    }
    for (const auto& t : out.truth) {
        auto s = split_ego_lead(out.traces, t.measurement_id, out.roles);
        EXPECT_EQ(s.ego.front().device_id, kEgoDevice);
        EXPECT_EQ(s.lead.front().device_id, kLeadDevice);
        EXPECT_EQ(s.ego.size(), 600u);
        EXPECT_EQ(s.lead.size(), 600u + static_cast<std::size_t>(t.headway_s));
        EXPECT_GE(t.headway_s, cfg.headway_min_s);
        EXPECT_LE(t.headway_s, cfg.headway_max_s);
    }
}

TEST(Traces, BitReproducibleAndSeedSensitive) {
    TempDir dir;
    auto cfg = small();
    write_traces(generate_traces(cfg).traces, dir / "a.csv");
    write_traces(generate_traces(cfg).traces, dir / "b.csv");
    EXPECT_EQ(csv::slurp(dir / "a.csv"), csv::slurp(dir / "b.csv"));
    cfg.seed = 2;
    write_traces(generate_traces(cfg).traces, dir / "c.csv");
    EXPECT_NE(csv::slurp(dir / "a.csv"), csv::slurp(dir / "c.csv"));
    auto loaded = load_traces(dir / "a.csv");
    EXPECT_TRUE(loaded.same_samples(generate_traces(small()).traces));
}

TEST(Traces, ExactRetraceWithoutJitter) {
    auto cfg = small();
    cfg.lateral_jitter_m = 0;
    cfg.headway_min_s = cfg.headway_max_s = 60;
    auto out = generate_traces(cfg);
    auto a = align_measurements(out.traces, out.roles);
    for (const auto& [mid, bins] : a.spatial) {
        ASSERT_EQ(bins.size(), 2u);
        ASSERT_EQ(bins[1].pairs.size(), 600u) << "measurement " << mid;
        for (const auto& p : bins[1].pairs) {
            EXPECT_EQ(p.delta_s, 0.0);
            EXPECT_EQ(p.delta_t, 60.0);
        }
    }
}

TEST(Traces, NoiselessDatarateIsFunctionOfPosition) {
    auto cfg = small().noiseless();
    cfg.headway_min_s = cfg.headway_max_s = 45;
    auto out = generate_traces(cfg);
    auto a = align_measurements(out.traces, out.roles);
    std::size_t checked = 0;
    for (const auto& [mid, bins] : a.spatial) {
        for (const auto& p : bins[0].pairs) {
            ASSERT_EQ(p.delta_s, 0.0);
            EXPECT_EQ(p.ego.datarate, p.lead.datarate);
            ++checked;
        }
    }
    EXPECT_EQ(checked, 1200u);

    // the ego KPIs determine the datarate, so a tree ensemble fits the test split almost exactly
    auto big = SynthConfig{}.noiseless();
    auto gen = generate_traces(big);
    auto d = prepare_dataset(align_measurements(gen.traces, gen.roles), features::DatasetKind::EGF);
    auto sp = features::temporal_split(d);
    models::GbtConfig g;
    auto m = models::train_gbt(sp.train.X, sp.train.y, g);
    auto p = m.predict(sp.test.X);
    double mae = 0;
    for (std::size_t i = 0; i < p.size(); ++i) mae += std::abs(p[i] - sp.test.y[i]);
    mae /= static_cast<double>(p.size());
    EXPECT_LT(mae, 0.01);
}

TEST(Traces, DefaultRsrpPairwiseCorrelationInFirstBin) {
    SynthConfig cfg;
    auto out = generate_traces(cfg);
    auto a = align_measurements(out.traces, out.roles);
    std::map<int, std::vector<align::AlignedPair>> first_bin;
    for (const auto& [mid, bins] : a.spatial) {
        if (bins[0].pairs.size() >= 2) first_bin[mid] = bins[0].pairs;
    }
    ASSERT_FALSE(first_bin.empty());
    auto m = stats::pairwise_avg_corr(first_bin, {"PCell_RSRP_max"});
    ASSERT_TRUE(m.at(0, 0));
    EXPECT_GT(*m.at(0, 0), 0.5);
}

TEST(Traces, TbSizeTopCorrelateOfDatarate) {
    auto out = generate_traces(SynthConfig{});
    auto a = align_measurements(out.traces, out.roles);
    auto r = stats::cross_feature_corr(a.ego, "datarate");
    EXPECT_EQ(r.ranked.front().feature_a, "PCell_Downlink_TB_Size");
}

TEST(Traces, TruthSidecar) {
    auto cfg = small();
    auto out = generate_traces(cfg);
    auto j = truth_json(out, cfg);
    ASSERT_EQ(j.at("measurements").size(), 2u);
    EXPECT_EQ(j.at("measurements")[0].at("ego_field_db").size(), 600u);
    EXPECT_EQ(j.at("config").get<SynthConfig>().seed, cfg.seed);
    EXPECT_EQ(j.at("role_map").get<RoleMap>().per_measurement.at(1).ego, kEgoDevice);
}
