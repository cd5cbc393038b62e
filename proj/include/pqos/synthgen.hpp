#pragma once

// Leader/follower trace generator. Both vehicles drive the same route, the
// lead `headway` seconds ahead. They sample one shared spatial shadowing field
// (exponentially correlated along arc length) and one shared temporal cell
// load process; measurement noise and fast fading are independent per device.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "pqos/error.hpp"
#include "pqos/trace_store.hpp"

namespace pqos::synth {

struct LatLon {
    double lat;
    double lon;
    bool operator==(const LatLon&) const = default;
};

/// Coefficients of the KPI chain. Quality q (dB) = route trend + shadowing +
/// fast fading. Load in (0, 1) and the shared report fluctuations are cell-wide
/// processes seen identically by both devices at equal wall time; they enter
/// throughput (load) or only the reported KPIs (the shared_* terms).
#define PQOS_LINK_FIELDS(X)                                                                                  \
    X(rsrp_base_dbm, -95.0)                                                                                  \
    X(snr_base_db, 5.0)                                                                                      \
    X(trend_amplitude_db, 4.0)                                                                               \
    X(trend_period_m, 3000.0)                                                                                \
    X(fast_fading_std_db, 1.0)                                                                               \
    X(fast_fading_tau_s, 2.0)                                                                                \
    X(measurement_noise_std_db, 6.0) /* device error common to all reference-signal KPIs */                  \
    X(measurement_noise_tau_s, 5.0)                                                                          \
    X(kpi_noise_std_db, 2.0)         /* independent per-KPI noise on SNR, RSRP */                            \
    X(snr2_extra_noise_db, 1.5)                                                                              \
    X(mcs_noise_std_db, 2.0)                                                                                 \
    X(rsrq_load_gain_db, -3.0)                                                                               \
    X(rsrq_noise_std_db, 3.0)                                                                                \
    X(rssi_noise_std_db, 1.0)                                                                                \
    X(interference_std_db, 6.0)                                                                              \
    X(interference_tau_s, 10.0)                                                                              \
    X(load_mean_logit, 0.0)                                                                                  \
    X(load_std_logit, 2.0)                                                                                   \
    X(load_tau_s, 20.0)                                                                                      \
    X(rb_total, 100.0)                                                                                       \
    X(rb_noise_std, 25.0)                                                                                    \
    X(peak_rate_bps, 100e6)                                                                                  \
    X(rate_noise_std, 0.05)          /* log-normal multiplicative datarate noise */                          \
    X(tb_noise_std, 0.3)             /* log-normal multiplicative TB-size report noise */                    \
    X(shared_tb_std, 20000.0)        /* cell-wide additive TB report fluctuation, bits */                    \
    X(shared_rb_std, 20.0)                                                                                   \
    X(shared_mcs_std_db, 3.0)                                                                                \
    X(shared_report_tau_s, 10.0)                                                                             \
    X(tx_power_dbm, 10.0)                                                                                    \
    X(tx_power_noise_db, 2.0)

struct LinkModel {
#define PQOS_DECLARE(name, init) double name = init;
    PQOS_LINK_FIELDS(PQOS_DECLARE)
#undef PQOS_DECLARE
    bool operator==(const LinkModel&) const = default;
};

struct SynthConfig {
    std::vector<LatLon> route;  // empty: auto-generated gently curving path
    LatLon origin{52.5125, 13.3269};
    std::size_t n_measurements = 4;
    double duration_s = 2400.0;
    double sample_period_s = 1.0;
    double headway_min_s = 30.0;
    double headway_max_s = 90.0;
    double mean_speed_mps = 10.0;
    double speed_std_mps = 2.0;
    double min_speed_mps = 3.0;
    double lateral_jitter_m = 3.0;
    double correlation_length_m = 50.0;
    double field_std_db = 6.0;
    double lead_noise_scale = 0.3;  // lead device noise relative to the ego's
    double kpi_null_probability = 0.0;
    double start_time = 1.6e9;
    LinkModel link;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(sample_period_s > 0.0)) throw Error(Errc::InvalidConfig, "sample period must be positive");
        if (!(correlation_length_m > 0.0)) throw Error(Errc::InvalidConfig, "correlation length must be positive");
        if (headway_min_s < 0.0 || headway_max_s < headway_min_s)
            throw Error(Errc::InvalidConfig, "headway range must satisfy 0 <= min <= max");
        if (!(duration_s > headway_max_s + 120.0))
            throw Error(Errc::InvalidConfig, "duration must exceed headway + 120 s");
        if (n_measurements < 1) throw Error(Errc::InvalidConfig, "need at least one measurement");
        if (!(mean_speed_mps > 0.0) || min_speed_mps < 0.0)
            throw Error(Errc::InvalidConfig, "speeds must be positive");
        if (field_std_db < 0.0 || lateral_jitter_m < 0.0) throw Error(Errc::InvalidConfig, "stds must be >= 0");
        if (lead_noise_scale < 0.0) throw Error(Errc::InvalidConfig, "lead_noise_scale must be >= 0");
        if (kpi_null_probability < 0.0 || kpi_null_probability >= 1.0)
            throw Error(Errc::InvalidConfig, "kpi_null_probability must lie in [0, 1)");
        if (!route.empty() && route.size() < 2) throw Error(Errc::InvalidConfig, "route needs at least two waypoints");
    }

    /// Every random component switched off: datarate becomes a deterministic
    /// function of position.
    [[nodiscard]] SynthConfig noiseless() const {
        SynthConfig c = *this;
        c.field_std_db = 0.0;
        c.lateral_jitter_m = 0.0;
        c.link.fast_fading_std_db = 0.0;
        c.link.measurement_noise_std_db = 0.0;
        c.link.kpi_noise_std_db = 0.0;
        c.link.snr2_extra_noise_db = 0.0;
        c.link.mcs_noise_std_db = 0.0;
        c.link.rsrq_noise_std_db = 0.0;
        c.link.rssi_noise_std_db = 0.0;
        c.link.interference_std_db = 0.0;
        c.link.load_std_logit = 0.0;
        c.link.rb_noise_std = 0.0;
        c.link.rate_noise_std = 0.0;
        c.link.tb_noise_std = 0.0;
        c.link.shared_tb_std = 0.0;
        c.link.shared_rb_std = 0.0;
        c.link.shared_mcs_std_db = 0.0;
        c.link.tx_power_noise_db = 0.0;
        c.kpi_null_probability = 0.0;
        return c;
    }
};

inline const std::string kLeadDevice = "pc1";
inline const std::string kEgoDevice = "pc4";

/// Shadowing values on a regular arc-length grid.
struct FadingField {
    double resolution_m = 1.0;
    std::vector<double> values;

    /// Linear interpolation; positions beyond the grid clamp to its ends.
    [[nodiscard]] double at(double arc_m) const {
        if (values.empty()) return 0.0;
        const double x = std::clamp(arc_m / resolution_m, 0.0, static_cast<double>(values.size() - 1));
        const auto i = static_cast<std::size_t>(x);
        if (i + 1 >= values.size()) return values.back();
        const double f = x - static_cast<double>(i);
        return values[i] * (1.0 - f) + values[i + 1] * f;
    }
};

/// Stationary Gauss-Markov process along arc length with correlation
/// exp(-d / correlation_length) and marginal standard deviation `std_db`.
inline FadingField generate_field(double length_m, double resolution_m, double correlation_length_m, double std_db,
                                  std::mt19937_64& rng) {
    if (!(resolution_m > 0.0) || !(correlation_length_m > 0.0) || length_m < 0.0)
        throw Error(Errc::InvalidConfig, "field needs positive resolution and correlation length");
    FadingField f;
    f.resolution_m = resolution_m;
    const auto n = static_cast<std::size_t>(std::ceil(length_m / resolution_m)) + 1;
    f.values.resize(n);
    std::normal_distribution<double> z(0.0, 1.0);
    const double rho = std::exp(-resolution_m / correlation_length_m);
    const double innov = std::sqrt(1.0 - rho * rho);
    f.values[0] = std_db * z(rng);
    for (std::size_t i = 1; i < n; ++i) f.values[i] = rho * f.values[i - 1] + innov * std_db * z(rng);
    return f;
}

/// Route as a polyline in local east/north meters with cumulative arc length.
class Route {
public:
    Route(std::vector<double> east, std::vector<double> north, LatLon origin, bool closed)
        : east_(std::move(east)), north_(std::move(north)), origin_(origin), closed_(closed) {
        if (closed_) {
            east_.push_back(east_.front());
            north_.push_back(north_.front());
        }
        arc_.assign(east_.size(), 0.0);
        for (std::size_t i = 1; i < east_.size(); ++i)
            arc_[i] = arc_[i - 1] + std::hypot(east_[i] - east_[i - 1], north_[i] - north_[i - 1]);
        if (!(arc_.back() > 0.0)) throw Error(Errc::InvalidConfig, "route has zero length");
    }

    [[nodiscard]] double length() const { return arc_.back(); }

    /// Position and unit heading at arc length `s` (wrapping on closed routes).
    void locate(double s, double& e, double& n, double& he, double& hn) const {
        if (closed_) {
            s = std::fmod(s, length());
            if (s < 0) s += length();
        }
        s = std::clamp(s, 0.0, length());
        auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
        std::size_t i = it == arc_.begin() ? 0 : static_cast<std::size_t>(it - arc_.begin()) - 1;
        if (i + 1 >= arc_.size()) i = arc_.size() - 2;
        const double seg = arc_[i + 1] - arc_[i];
        const double f = seg > 0 ? (s - arc_[i]) / seg : 0.0;
        e = east_[i] + f * (east_[i + 1] - east_[i]);
        n = north_[i] + f * (north_[i + 1] - north_[i]);
        he = seg > 0 ? (east_[i + 1] - east_[i]) / seg : 1.0;
        hn = seg > 0 ? (north_[i + 1] - north_[i]) / seg : 0.0;
    }

    [[nodiscard]] LatLon to_latlon(double e, double n) const {
        constexpr double deg = 180.0 / std::numbers::pi;
        constexpr double R = 6371008.8;
        return {origin_.lat + n / R * deg, origin_.lon + e / (R * std::cos(origin_.lat / deg)) * deg};
    }

    /// Smooth random path: heading random walk in 10 m steps.
    static Route random(double length_m, LatLon origin, std::mt19937_64& rng) {
        std::normal_distribution<double> turn(0.0, 0.04);
        std::vector<double> e = {0.0}, n = {0.0};
        double heading = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
        const double step = 10.0;
        for (double s = 0.0; s < length_m + step; s += step) {
            heading += turn(rng);
            e.push_back(e.back() + step * std::cos(heading));
            n.push_back(n.back() + step * std::sin(heading));
        }
        return Route(std::move(e), std::move(n), origin, false);
    }

    static Route from_waypoints(const std::vector<LatLon>& pts) {
        constexpr double rad = std::numbers::pi / 180.0;
        constexpr double R = 6371008.8;
        const LatLon o = pts.front();
        std::vector<double> e, n;
        for (const auto& p : pts) {
            e.push_back((p.lon - o.lon) * rad * R * std::cos(o.lat * rad));
            n.push_back((p.lat - o.lat) * rad * R);
        }
        return Route(std::move(e), std::move(n), o, true);
    }

private:
    std::vector<double> east_, north_, arc_;
    LatLon origin_;
    bool closed_;
};

/// Per-measurement ground truth written next to generated traces.
struct MeasurementTruth {
    int measurement_id = 0;
    double headway_s = 0.0;
    std::vector<double> ego_field;   // shadowing value at each ego sample
    std::vector<double> lead_field;  // shadowing value at each lead sample
    std::vector<double> ego_load;
    std::vector<double> lead_load;
};

struct SynthOutput {
    TraceCollection traces;
    RoleMap roles;
    std::vector<MeasurementTruth> truth;
};

namespace detail {

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    return std::mt19937_64(seq);
}

/// Ornstein-Uhlenbeck sample path on a regular grid, stationary start.
inline std::vector<double> ou_path(std::size_t n, double dt, double tau, double mean, double std,
                                   std::mt19937_64& rng) {
    std::vector<double> x(n, mean);
    if (n == 0 || std == 0.0) return x;
    std::normal_distribution<double> z(0.0, 1.0);
    const double rho = std::exp(-dt / tau);
    const double innov = std::sqrt(1.0 - rho * rho);
    x[0] = mean + std * z(rng);
    for (std::size_t i = 1; i < n; ++i) x[i] = mean + rho * (x[i - 1] - mean) + innov * std * z(rng);
    return x;
}

inline double mcs_from_snr(double snr_db) { return std::clamp(std::round((snr_db + 6.0) * 28.0 / 30.0), 0.0, 28.0); }

inline double spectral_efficiency(double snr_db) {
    return std::min(5.55, std::log2(1.0 + std::pow(10.0, snr_db / 10.0)));
}

}  // namespace detail

/// Generates `n_measurements` independent drives. The lead records from
/// `headway` before the ego's first sample so that every ego position has a
/// recorded lead visit.
inline SynthOutput generate_traces(const SynthConfig& cfg) {
    cfg.validate();
    SynthOutput out;
    std::vector<TraceSample> samples;
    const auto& L = cfg.link;
    const double dt = cfg.sample_period_s;
    const auto n_ego = static_cast<std::size_t>(std::floor(cfg.duration_s / dt));

    for (std::size_t m = 0; m < cfg.n_measurements; ++m) {
        const int mid = static_cast<int>(m);
        auto rng = detail::substream(cfg.seed, m, 0);
        double headway = std::uniform_real_distribution<double>(cfg.headway_min_s, cfg.headway_max_s)(rng);
        headway = std::round(headway / dt) * dt;
        const auto lag = static_cast<std::size_t>(std::llround(headway / dt));
        const std::size_t n_traj = n_ego + lag;  // trajectory grid index j <-> time t0 - headway + j*dt

        // speed and arc length along the shared trajectory
        auto speed_rng = detail::substream(cfg.seed, m, 1);
        auto speed = detail::ou_path(n_traj, dt, 30.0, cfg.mean_speed_mps, cfg.speed_std_mps, speed_rng);
        for (auto& v : speed) v = std::max(cfg.min_speed_mps, v);
        std::vector<double> arc(n_traj, 0.0);
        for (std::size_t j = 1; j < n_traj; ++j) arc[j] = arc[j - 1] + 0.5 * (speed[j - 1] + speed[j]) * dt;

        auto route_rng = detail::substream(cfg.seed, m, 2);
        const Route route = cfg.route.empty()
                                ? Route::random(arc.back() + 100.0, cfg.origin, route_rng)
                                : Route::from_waypoints(cfg.route);
        auto field_rng = detail::substream(cfg.seed, m, 3);
        const FadingField field = generate_field(arc.back() + 10.0, 1.0, cfg.correlation_length_m, cfg.field_std_db,
                                                 field_rng);
        // cell-wide processes, indexed like the trajectory grid (wall time)
        auto cell_rng = detail::substream(cfg.seed, m, 4);
        const auto load_logit = detail::ou_path(n_traj, dt, L.load_tau_s, L.load_mean_logit, L.load_std_logit, cell_rng);
        const auto interference = detail::ou_path(n_traj, dt, L.interference_tau_s, 0.0, L.interference_std_db, cell_rng);
        const auto shared_tb = detail::ou_path(n_traj, dt, L.shared_report_tau_s, 0.0, L.shared_tb_std, cell_rng);
        const auto shared_rb = detail::ou_path(n_traj, dt, L.shared_report_tau_s, 0.0, L.shared_rb_std, cell_rng);
        const auto shared_mcs = detail::ou_path(n_traj, dt, L.shared_report_tau_s, 0.0, L.shared_mcs_std_db, cell_rng);

        MeasurementTruth truth;
        truth.measurement_id = mid;
        truth.headway_s = headway;
        const double t0 = cfg.start_time + static_cast<double>(m) * (cfg.duration_s + cfg.headway_max_s + 3600.0);

        for (int role = 0; role < 2; ++role) {  // 0 = lead, 1 = ego
            const bool is_ego = role == 1;
            const double scale = is_ego ? 1.0 : cfg.lead_noise_scale;
            auto noise_rng = detail::substream(cfg.seed, m, 10 + static_cast<std::uint64_t>(role));
            std::normal_distribution<double> z(0.0, 1.0);
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const std::size_t n = is_ego ? n_ego : n_traj;
            const auto fast = detail::ou_path(n, dt, L.fast_fading_tau_s, 0.0, L.fast_fading_std_db, noise_rng);
            const auto meas_err =
                detail::ou_path(n, dt, L.measurement_noise_tau_s, 0.0, scale * L.measurement_noise_std_db, noise_rng);
            for (std::size_t k = 0; k < n; ++k) {
                // the ego visits trajectory point k at wall index k + lag; the lead at wall index k
                const std::size_t wall = is_ego ? k + lag : k;
                const double s = arc[k];
                double e, nn, he, hn;
                route.locate(s, e, nn, he, hn);
                if (is_ego && cfg.lateral_jitter_m > 0.0) {
                    const double off = cfg.lateral_jitter_m * z(noise_rng);
                    e += -hn * off;
                    nn += he * off;
                }
                const LatLon pos = route.to_latlon(e, nn);
                const double shadow = field.at(s);
                const double load = 1.0 / (1.0 + std::exp(-load_logit[wall]));
                const double trend = L.trend_amplitude_db * std::sin(2.0 * std::numbers::pi * s / L.trend_period_m);
                const double q = trend + shadow + fast[k];
                const double rb_share = 1.0 - 0.8 * load;
                const double rate_true =
                    L.peak_rate_bps * (detail::spectral_efficiency(L.snr_base_db + q) / 5.55) * rb_share;
                const double datarate = std::max(0.0, rate_true * std::exp(L.rate_noise_std * z(noise_rng)));
                const double qm = q + meas_err[k];  // what the device's reference-signal measurement sees
                const double snr = L.snr_base_db + qm;
                auto noise = [&](double std) { return scale * std * z(noise_rng); };

                TraceSample smp;
                smp.timestamp = t0 + (static_cast<double>(wall) - static_cast<double>(lag)) * dt;
                smp.device_id = is_ego ? kEgoDevice : kLeadDevice;
                smp.measurement_id = mid;
                smp.operator_id = 1;
                smp.direction = Direction::downlink;
                smp.target_datarate = 350000.0;
                smp.latitude = pos.lat;
                smp.longitude = pos.lon;
                smp.speed = speed[k];
                smp.datarate = datarate;
                const double snr1 = snr + noise(L.kpi_noise_std_db);
                smp.set(Kpi::SNR_1, snr1);
                smp.set(Kpi::SNR_2, snr1 + noise(L.snr2_extra_noise_db));
                smp.set(Kpi::RSRP_max, L.rsrp_base_dbm + qm + noise(L.kpi_noise_std_db));
                smp.set(Kpi::RSRQ_max, -10.5 + 0.25 * qm + L.rsrq_load_gain_db * load + noise(L.rsrq_noise_std_db));
                smp.set(Kpi::RSSI_max, -65.0 + 0.7 * qm + interference[wall] + noise(L.rssi_noise_std_db));
                smp.set(Kpi::TB_Size,
                        std::round(rate_true / 1000.0 * std::exp(noise(L.tb_noise_std)) + shared_tb[wall]));
                smp.set(Kpi::Num_RBs, std::clamp(std::round(L.rb_total * rb_share + shared_rb[wall] + noise(L.rb_noise_std)),
                                                 0.0, L.rb_total));
                smp.set(Kpi::Average_MCS, detail::mcs_from_snr(snr + shared_mcs[wall] + noise(L.mcs_noise_std_db)));
                smp.set(Kpi::Tx_Power, L.tx_power_dbm + L.tx_power_noise_db * z(noise_rng));
                if (cfg.kpi_null_probability > 0.0)
                    for (auto& v : smp.kpi)
                        if (u(noise_rng) < cfg.kpi_null_probability) v.reset();
                samples.push_back(std::move(smp));
                (is_ego ? truth.ego_field : truth.lead_field).push_back(shadow);
                (is_ego ? truth.ego_load : truth.lead_load).push_back(load);
            }
        }
        out.roles.per_measurement[mid] = {kLeadDevice, kEgoDevice};
        out.truth.push_back(std::move(truth));
    }
    out.traces = TraceCollection::from_samples(std::move(samples), Provenance{"synthetic", "none", 0});
    out.traces.set_roles(out.roles);
    return out;
}

// --- JSON ----------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const LinkModel& l) {
    j = nlohmann::json::object();
#define PQOS_TO_JSON(name, init) j[#name] = l.name;
    PQOS_LINK_FIELDS(PQOS_TO_JSON)
#undef PQOS_TO_JSON
}

inline void from_json(const nlohmann::json& j, LinkModel& l) {
    const LinkModel d;
#define PQOS_FROM_JSON(name, init) l.name = j.value(#name, d.name);
    PQOS_LINK_FIELDS(PQOS_FROM_JSON)
#undef PQOS_FROM_JSON
}

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
    nlohmann::json route = nlohmann::json::array();
    for (const auto& p : c.route) route.push_back({p.lat, p.lon});
    j = {{"route", route},
         {"origin", {c.origin.lat, c.origin.lon}},
         {"n_measurements", c.n_measurements},
         {"duration_s", c.duration_s},
         {"sample_period_s", c.sample_period_s},
         {"headway_min_s", c.headway_min_s},
         {"headway_max_s", c.headway_max_s},
         {"mean_speed_mps", c.mean_speed_mps},
         {"speed_std_mps", c.speed_std_mps},
         {"min_speed_mps", c.min_speed_mps},
         {"lateral_jitter_m", c.lateral_jitter_m},
         {"correlation_length_m", c.correlation_length_m},
         {"field_std_db", c.field_std_db},
         {"lead_noise_scale", c.lead_noise_scale},
         {"kpi_null_probability", c.kpi_null_probability},
         {"start_time", c.start_time},
         {"link", c.link},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
    SynthConfig d;
    c = d;
    if (j.contains("route"))
        for (const auto& p : j.at("route")) c.route.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    if (j.contains("origin")) c.origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>()};
    c.n_measurements = j.value("n_measurements", d.n_measurements);
    c.duration_s = j.value("duration_s", d.duration_s);
    c.sample_period_s = j.value("sample_period_s", d.sample_period_s);
    c.headway_min_s = j.value("headway_min_s", d.headway_min_s);
    c.headway_max_s = j.value("headway_max_s", d.headway_max_s);
    c.mean_speed_mps = j.value("mean_speed_mps", d.mean_speed_mps);
    c.speed_std_mps = j.value("speed_std_mps", d.speed_std_mps);
    c.min_speed_mps = j.value("min_speed_mps", d.min_speed_mps);
    c.lateral_jitter_m = j.value("lateral_jitter_m", d.lateral_jitter_m);
    c.correlation_length_m = j.value("correlation_length_m", d.correlation_length_m);
    c.field_std_db = j.value("field_std_db", d.field_std_db);
    c.lead_noise_scale = j.value("lead_noise_scale", d.lead_noise_scale);
    c.kpi_null_probability = j.value("kpi_null_probability", d.kpi_null_probability);
    c.start_time = j.value("start_time", d.start_time);
    if (j.contains("link")) c.link = j.at("link").get<LinkModel>();
    c.seed = j.value("seed", d.seed);
}

inline nlohmann::json truth_json(const SynthOutput& o, const SynthConfig& cfg) {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& t : o.truth)
        m.push_back({{"measurement_id", t.measurement_id},
                     {"headway_s", t.headway_s},
                     {"ego_field_db", t.ego_field},
                     {"lead_field_db", t.lead_field},
                     {"ego_load", t.ego_load},
                     {"lead_load", t.lead_load}});
    return {{"config", cfg}, {"role_map", o.roles}, {"measurements", m}};
}

}  // namespace pqos::synth
