#pragma once

// Trace schema, CSV ingestion and scenario/role grouping.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pqos/csv.hpp"
#include "pqos/error.hpp"

namespace pqos {

enum class Direction { downlink, uplink };

inline std::string_view to_string(Direction d) {
    return d == Direction::downlink ? "downlink" : "uplink";
}

inline std::optional<Direction> parse_direction(std::string_view s) {
    std::string v(csv::trim(s));
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "downlink" || v == "dl") return Direction::downlink;
    if (v == "uplink" || v == "ul") return Direction::uplink;
    return std::nullopt;
}

/// Optional per-sample radio KPIs, in dataset column order.
enum class Kpi : std::size_t {
    SNR_1,
    SNR_2,
    RSRP_max,
    RSRQ_max,
    RSSI_max,
    TB_Size,
    Num_RBs,
    Average_MCS,
    Tx_Power,
};

inline constexpr std::size_t kKpiCount = 9;

inline constexpr std::array<std::string_view, kKpiCount> kKpiNames = {
    "PCell_SNR_1",
    "PCell_SNR_2",
    "PCell_RSRP_max",
    "PCell_RSRQ_max",
    "PCell_RSSI_max",
    "PCell_Downlink_TB_Size",
    "PCell_Downlink_Num_RBs",
    "PCell_Downlink_Average_MCS",
    "PCell_Downlink_Tx_Power",
};

constexpr std::string_view name_of(Kpi k) { return kKpiNames[static_cast<std::size_t>(k)]; }

inline std::optional<Kpi> kpi_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kKpiCount; ++i)
        if (kKpiNames[i] == name) return static_cast<Kpi>(i);
    return std::nullopt;
}

struct TraceSample {
    double timestamp = 0.0;  // seconds since epoch
    std::string device_id;
    int measurement_id = 0;
    int operator_id = 1;
    Direction direction = Direction::downlink;
    double target_datarate = 0.0;  // kbit/s
    double latitude = 0.0;
    double longitude = 0.0;
    double speed = 0.0;     // m/s
    double datarate = 0.0;  // bit/s
    std::array<std::optional<double>, kKpiCount> kpi{};

    [[nodiscard]] std::optional<double> get(Kpi k) const { return kpi[static_cast<std::size_t>(k)]; }
    void set(Kpi k, std::optional<double> v) { kpi[static_cast<std::size_t>(k)] = v; }

    bool operator==(const TraceSample&) const = default;
};

/// Canonical non-KPI numeric columns usable in correlation analyses.
inline constexpr std::array<std::string_view, 4> kMotionColumns = {"datarate", "speed", "latitude",
                                                                   "longitude"};

/// Looks up a numeric column by canonical name; nullopt when the name is unknown
/// or the KPI is null.
inline std::optional<double> numeric_value(const TraceSample& s, std::string_view column) {
    if (auto k = kpi_from_name(column)) return s.get(*k);
    if (column == "datarate") return s.datarate;
    if (column == "speed") return s.speed;
    if (column == "latitude") return s.latitude;
    if (column == "longitude") return s.longitude;
    if (column == "timestamp") return s.timestamp;
    if (column == "target_datarate") return s.target_datarate;
    return std::nullopt;
}

inline bool is_numeric_column(std::string_view column) {
    return kpi_from_name(column).has_value() || column == "datarate" || column == "speed" ||
           column == "latitude" || column == "longitude" || column == "timestamp" ||
           column == "target_datarate";
}

/// Canonical column order used when writing traces.
inline std::vector<std::string> canonical_columns() {
    std::vector<std::string> cols = {"timestamp", "device_id", "measurement_id", "operator_id",
                                     "direction", "target_datarate", "latitude", "longitude",
                                     "speed", "datarate"};
    for (auto n : kKpiNames) cols.emplace_back(n);
    return cols;
}

inline constexpr std::array<std::string_view, 10> kMandatoryColumns = {
    "timestamp", "device_id", "measurement_id", "operator_id", "direction",
    "target_datarate", "latitude", "longitude", "speed", "datarate"};

/// Target datarates (kbit/s) present in the real measurement campaign.
inline constexpr std::array<double, 3> kCampaignTargetRates = {400.0, 75000.0, 350000.0};

struct ScenarioFilter {
    std::optional<int> operator_id;
    std::optional<Direction> direction;
    std::optional<double> target_datarate;
    std::optional<std::set<int>> measurement_ids;

    /// Operator 1, downlink, 350000 kbit/s.
    static ScenarioFilter a3d() {
        ScenarioFilter f;
        f.operator_id = 1;
        f.direction = Direction::downlink;
        f.target_datarate = 350000.0;
        return f;
    }

    [[nodiscard]] bool matches(const TraceSample& s) const {
        if (operator_id && s.operator_id != *operator_id) return false;
        if (direction && s.direction != *direction) return false;
        if (target_datarate && s.target_datarate != *target_datarate) return false;
        if (measurement_ids && !measurement_ids->contains(s.measurement_id)) return false;
        return true;
    }

    [[nodiscard]] std::string describe() const {
        std::string out;
        auto add = [&](const std::string& part) {
            if (!out.empty()) out += ' ';
            out += part;
        };
        if (operator_id) add("operator=" + std::to_string(*operator_id));
        if (direction) add("direction=" + std::string(to_string(*direction)));
        if (target_datarate) add("target_datarate=" + csv::format_double(*target_datarate));
        if (measurement_ids) {
            std::string ids;
            for (int m : *measurement_ids) ids += (ids.empty() ? "" : ",") + std::to_string(m);
            add("measurement_ids={" + ids + "}");
        }
        return out.empty() ? "none" : out;
    }
};

struct RoleAssignment {
    std::string lead;
    std::string ego;
    bool operator==(const RoleAssignment&) const = default;
};

/// Lead/ego device per measurement; `fallback` applies to measurements without
/// an explicit entry.
struct RoleMap {
    std::map<int, RoleAssignment> per_measurement;
    std::optional<RoleAssignment> fallback;

    [[nodiscard]] std::optional<RoleAssignment> lookup(int measurement_id) const {
        if (auto it = per_measurement.find(measurement_id); it != per_measurement.end())
            return it->second;
        return fallback;
    }
    [[nodiscard]] bool empty() const { return per_measurement.empty() && !fallback; }
    bool operator==(const RoleMap&) const = default;
};

/// canonical column name -> column name in the source file
using ColumnMap = std::map<std::string, std::string>;

struct GroupKey {
    int measurement_id;
    std::string device_id;
    auto operator<=>(const GroupKey&) const = default;
};

struct Provenance {
    std::string source;
    std::string filter = "none";
    std::size_t rejected_count = 0;
};

/// Samples grouped by (measurement_id, device_id), each group sorted by time.
class TraceCollection {
public:
    using Series = std::vector<TraceSample>;

    TraceCollection() = default;

    /// Builds groups from unordered samples. Duplicate (device, measurement,
    /// timestamp) triples keep the first occurrence; the count of discarded
    /// duplicates is returned through `duplicates` when given.
    static TraceCollection from_samples(std::vector<TraceSample> samples, Provenance prov = {},
                                        std::size_t* duplicates = nullptr) {
        TraceCollection c;
        c.provenance_ = std::move(prov);
        for (auto& s : samples) c.groups_[{s.measurement_id, s.device_id}].push_back(std::move(s));
        std::size_t dropped = 0;
        for (auto& [key, series] : c.groups_) {
            std::stable_sort(series.begin(), series.end(),
                             [](const TraceSample& a, const TraceSample& b) { return a.timestamp < b.timestamp; });
            auto last = std::unique(series.begin(), series.end(), [](const TraceSample& a, const TraceSample& b) {
                return a.timestamp == b.timestamp;
            });
            dropped += static_cast<std::size_t>(series.end() - last);
            series.erase(last, series.end());
        }
        if (duplicates) *duplicates = dropped;
        return c;
    }

    [[nodiscard]] const std::map<GroupKey, Series>& groups() const { return groups_; }
    [[nodiscard]] const Provenance& provenance() const { return provenance_; }
    Provenance& provenance() { return provenance_; }

    [[nodiscard]] const std::optional<RoleMap>& roles() const { return roles_; }
    void set_roles(RoleMap r) { roles_ = std::move(r); }

    [[nodiscard]] bool empty() const { return groups_.empty(); }

    [[nodiscard]] std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [k, s] : groups_) n += s.size();
        return n;
    }

    [[nodiscard]] std::set<int> measurement_ids() const {
        std::set<int> ids;
        for (const auto& [k, s] : groups_) ids.insert(k.measurement_id);
        return ids;
    }

    [[nodiscard]] std::vector<std::string> devices(int measurement_id) const {
        std::vector<std::string> out;
        for (const auto& [k, s] : groups_)
            if (k.measurement_id == measurement_id) out.push_back(k.device_id);
        return out;
    }

    [[nodiscard]] const Series* find(int measurement_id, const std::string& device) const {
        auto it = groups_.find({measurement_id, device});
        return it == groups_.end() ? nullptr : &it->second;
    }

    /// All samples, group by group.
    [[nodiscard]] std::vector<TraceSample> flatten() const {
        std::vector<TraceSample> out;
        out.reserve(size());
        for (const auto& [k, s] : groups_) out.insert(out.end(), s.begin(), s.end());
        return out;
    }

    /// Structural equality of the grouped samples (provenance ignored).
    [[nodiscard]] bool same_samples(const TraceCollection& other) const { return groups_ == other.groups_; }

private:
    friend TraceCollection filter_scenario(const TraceCollection&, const ScenarioFilter&);

    std::map<GroupKey, Series> groups_;
    Provenance provenance_;
    std::optional<RoleMap> roles_;
};

// --- timestamps -------------------------------------------------------------

namespace detail {

// days since 1970-01-01 for a proleptic Gregorian date
constexpr long long days_from_civil(long long y, unsigned m, unsigned d) {
    y -= m <= 2;
    const long long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long long>(doe) - 719468;
}

}  // namespace detail

/// Accepts either numeric epoch seconds or `YYYY-MM-DD[ T]HH:MM:SS[.fff][Z|+HH:MM]`.
inline std::optional<double> parse_timestamp(std::string_view raw) {
    auto s = csv::trim(raw);
    if (auto v = csv::parse_double(s)) return v;
    if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') || s[13] != ':' ||
        s[16] != ':')
        return std::nullopt;
    auto num = [&](std::size_t pos, std::size_t len) -> std::optional<long long> {
        return csv::parse_int(s.substr(pos, len));
    };
    auto y = num(0, 4), mo = num(5, 2), d = num(8, 2), h = num(11, 2), mi = num(14, 2), se = num(17, 2);
    if (!y || !mo || !d || !h || !mi || !se) return std::nullopt;
    if (*mo < 1 || *mo > 12 || *d < 1 || *d > 31 || *h > 23 || *mi > 59 || *se > 60) return std::nullopt;
    double frac = 0.0;
    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        std::size_t end = pos + 1;
        while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
        auto f = csv::parse_double(std::string("0") + std::string(s.substr(pos, end - pos)));
        if (!f) return std::nullopt;
        frac = *f;
        pos = end;
    }
    long long offset = 0;
    if (pos < s.size()) {
        auto tz = s.substr(pos);
        if (tz == "Z") {
        } else if ((tz.size() == 6 && tz[3] == ':') && (tz[0] == '+' || tz[0] == '-')) {
            auto oh = csv::parse_int(tz.substr(1, 2)), om = csv::parse_int(tz.substr(4, 2));
            if (!oh || !om) return std::nullopt;
            offset = (tz[0] == '+' ? 1 : -1) * (*oh * 3600 + *om * 60);
        } else {
            return std::nullopt;
        }
    }
    const long long days = detail::days_from_civil(*y, static_cast<unsigned>(*mo), static_cast<unsigned>(*d));
    const long long secs = days * 86400 + *h * 3600 + *mi * 60 + *se - offset;
    return static_cast<double>(secs) + frac;
}

// --- ingestion --------------------------------------------------------------

enum class TraceFormat { csv, parquet };

struct LoadOptions {
    TraceFormat format = TraceFormat::csv;
    ColumnMap column_map;  // missing entries default to the canonical name
    /// Reject rows whose target datarate is not one of the campaign values.
    bool enforce_campaign_rates = false;
};

namespace detail {

inline std::optional<TraceSample> parse_row(const csv::Row& row, const std::vector<std::optional<std::size_t>>& idx,
                                            bool enforce_rates) {
    auto field = [&](std::size_t canon) -> std::string_view {
        const auto& i = idx[canon];
        if (!i || *i >= row.size()) return {};
        return row[*i];
    };
    TraceSample s;
    auto ts = parse_timestamp(field(0));
    auto dev = csv::trim(field(1));
    auto mid = csv::parse_int(field(2));
    auto op = csv::parse_int(field(3));
    auto dir = parse_direction(field(4));
    auto target = csv::parse_double(field(5));
    auto lat = csv::parse_double(field(6));
    auto lon = csv::parse_double(field(7));
    auto speed = csv::parse_double(field(8));
    auto rate = csv::parse_double(field(9));
    if (!ts || dev.empty() || csv::is_null_token(dev) || !mid || !op || !dir || !target || !lat || !lon || !speed ||
        !rate)
        return std::nullopt;
    if (*lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0 || *rate < 0.0) return std::nullopt;
    if (enforce_rates && std::find(kCampaignTargetRates.begin(), kCampaignTargetRates.end(), *target) ==
                             kCampaignTargetRates.end())
        return std::nullopt;
    s.timestamp = *ts;
    s.device_id = std::string(dev);
    s.measurement_id = static_cast<int>(*mid);
    s.operator_id = static_cast<int>(*op);
    s.direction = *dir;
    s.target_datarate = *target;
    s.latitude = *lat;
    s.longitude = *lon;
    s.speed = *speed;
    s.datarate = *rate;
    for (std::size_t k = 0; k < kKpiCount; ++k) s.kpi[k] = csv::parse_double(field(kMandatoryColumns.size() + k));
    return s;
}

}  // namespace detail

/// Parses an in-memory CSV table. Rows with an unparseable or out-of-range
/// mandatory field are rejected and counted in the provenance.
inline TraceCollection traces_from_table(const csv::Table& table, const LoadOptions& opts, std::string source = {}) {
    const auto canon = canonical_columns();
    std::vector<std::optional<std::size_t>> idx(canon.size());
    for (std::size_t c = 0; c < canon.size(); ++c) {
        auto it = opts.column_map.find(canon[c]);
        const std::string& src = it == opts.column_map.end() ? canon[c] : it->second;
        idx[c] = table.column(src);
        if (!idx[c] && c < kMandatoryColumns.size())
            throw Error(Errc::SchemaMismatch, "missing mandatory column '" + src + "' (canonical '" + canon[c] + "')");
    }
    std::vector<TraceSample> samples;
    samples.reserve(table.rows.size());
    std::size_t rejected = 0;
    for (const auto& row : table.rows) {
        if (auto s = detail::parse_row(row, idx, opts.enforce_campaign_rates))
            samples.push_back(std::move(*s));
        else
            ++rejected;
    }
    if (samples.empty()) throw Error(Errc::EmptyCollection, "no parseable rows in " + (source.empty() ? "input" : source));
    std::size_t dups = 0;
    auto c = TraceCollection::from_samples(std::move(samples), Provenance{source, "none", 0}, &dups);
    c.provenance().rejected_count = rejected + dups;
    return c;
}

inline TraceCollection load_traces(const std::filesystem::path& path, const LoadOptions& opts = {}) {
    if (!std::filesystem::exists(path)) throw Error(Errc::FileNotFound, path.string());
    if (opts.format == TraceFormat::parquet)
        throw Error(Errc::UnsupportedFormat, "columnar input is not built into this loader; convert to CSV");
    return traces_from_table(csv::read_file(path), opts, path.string());
}

/// Writes the collection in canonical column order; nulls become empty fields.
inline void write_traces(const TraceCollection& c, const std::filesystem::path& path) {
    csv::Writer w(path);
    w.row(canonical_columns());
    for (const auto& [key, series] : c.groups()) {
        for (const auto& s : series) {
            csv::Row r = {csv::format_double(s.timestamp),
                          s.device_id,
                          std::to_string(s.measurement_id),
                          std::to_string(s.operator_id),
                          std::string(to_string(s.direction)),
                          csv::format_double(s.target_datarate),
                          csv::format_double(s.latitude),
                          csv::format_double(s.longitude),
                          csv::format_double(s.speed),
                          csv::format_double(s.datarate)};
            for (const auto& v : s.kpi) r.push_back(v ? csv::format_double(*v) : std::string{});
            w.row(r);
        }
    }
    w.close();
}

// --- filtering and roles ------------------------------------------------------

/// Keeps samples matching every set field. An empty result is a valid
/// outcome; callers check `empty()`.
inline TraceCollection filter_scenario(const TraceCollection& c, const ScenarioFilter& f) {
    if (c.empty()) throw Error(Errc::EmptyCollection, "cannot filter an empty collection");
    TraceCollection out;
    out.provenance_ = c.provenance_;
    out.provenance_.filter = f.describe();
    out.roles_ = c.roles_;
    for (const auto& [key, series] : c.groups_) {
        TraceCollection::Series kept;
        for (const auto& s : series)
            if (f.matches(s)) kept.push_back(s);
        if (!kept.empty()) out.groups_.emplace(key, std::move(kept));
    }
    return out;
}

struct EgoLeadSeries {
    std::vector<TraceSample> ego;
    std::vector<TraceSample> lead;
};

/// Role assignment always comes from the role map; there is no inference.
inline EgoLeadSeries split_ego_lead(const TraceCollection& c, int measurement_id, const RoleMap& roles) {
    const auto devs = c.devices(measurement_id);
    if (devs.empty()) throw Error(Errc::UnknownMeasurement, "measurement " + std::to_string(measurement_id));
    const auto role = roles.lookup(measurement_id);
    if (!role || devs.size() < 2)
        throw Error(Errc::AmbiguousRoles, "measurement " + std::to_string(measurement_id) + " has " +
                                              std::to_string(devs.size()) + " device(s) and " +
                                              (role ? "a role map entry" : "no role map entry"));
    const auto* ego = c.find(measurement_id, role->ego);
    const auto* lead = c.find(measurement_id, role->lead);
    if (!ego || !lead || role->ego == role->lead)
        throw Error(Errc::AmbiguousRoles, "role map for measurement " + std::to_string(measurement_id) +
                                              " names devices not present in the group");
    return {*ego, *lead};
}

// --- JSON config ------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ScenarioFilter& f) {
    j = nlohmann::json::object();
    if (f.operator_id) j["operator_id"] = *f.operator_id;
    if (f.direction) j["direction"] = to_string(*f.direction);
    if (f.target_datarate) j["target_datarate"] = *f.target_datarate;
    if (f.measurement_ids) j["measurement_ids"] = *f.measurement_ids;
}

inline void from_json(const nlohmann::json& j, ScenarioFilter& f) {
    f = {};
    if (j.contains("operator_id")) f.operator_id = j.at("operator_id").get<int>();
    if (j.contains("direction")) {
        auto d = parse_direction(j.at("direction").get<std::string>());
        if (!d) throw Error(Errc::InvalidConfig, "bad direction in scenario filter");
        f.direction = *d;
    }
    if (j.contains("target_datarate")) f.target_datarate = j.at("target_datarate").get<double>();
    if (j.contains("measurement_ids")) f.measurement_ids = j.at("measurement_ids").get<std::set<int>>();
}

inline void to_json(nlohmann::json& j, const RoleMap& r) {
    j = nlohmann::json::object();
    for (const auto& [m, a] : r.per_measurement) j[std::to_string(m)] = {{"lead", a.lead}, {"ego", a.ego}};
    if (r.fallback) j["default"] = {{"lead", r.fallback->lead}, {"ego", r.fallback->ego}};
}

inline void from_json(const nlohmann::json& j, RoleMap& r) {
    r = {};
    for (const auto& [key, v] : j.items()) {
        RoleAssignment a{v.at("lead").get<std::string>(), v.at("ego").get<std::string>()};
        if (key == "default") {
            r.fallback = a;
        } else {
            auto m = csv::parse_int(key);
            if (!m) throw Error(Errc::InvalidConfig, "role_map key '" + key + "' is not a measurement id");
            r.per_measurement[static_cast<int>(*m)] = a;
        }
    }
}

/// Ingestion-related config: `column_map`, `role_map`, `scenario_presets`.
struct TraceConfig {
    ColumnMap column_map;
    RoleMap role_map;
    std::map<std::string, ScenarioFilter> scenario_presets = {{"A3D", ScenarioFilter::a3d()}};

    [[nodiscard]] ScenarioFilter preset(const std::string& name) const {
        auto it = scenario_presets.find(name);
        if (it == scenario_presets.end()) throw Error(Errc::InvalidConfig, "unknown scenario preset '" + name + "'");
        return it->second;
    }
};

inline void to_json(nlohmann::json& j, const TraceConfig& c) {
    j = {{"column_map", c.column_map}, {"role_map", c.role_map}, {"scenario_presets", c.scenario_presets}};
}

inline void from_json(const nlohmann::json& j, TraceConfig& c) {
    c = {};
    if (j.contains("column_map")) c.column_map = j.at("column_map").get<ColumnMap>();
    if (j.contains("role_map")) c.role_map = j.at("role_map").get<RoleMap>();
    if (j.contains("scenario_presets"))
        for (const auto& [k, v] : j.at("scenario_presets").items()) c.scenario_presets[k] = v.get<ScenarioFilter>();
}

}  // namespace pqos
