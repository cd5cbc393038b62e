#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "pqos/trace_store.hpp"

namespace pqos::testing {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("pqos_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline TraceSample sample(double ts, const std::string& device = "pc4", int mid = 1) {
    TraceSample s;
    s.timestamp = ts;
    s.device_id = device;
    s.measurement_id = mid;
    s.operator_id = 1;
    s.direction = Direction::downlink;
    s.target_datarate = 350000;
    s.latitude = 52.5;
    s.longitude = 13.4;
    s.speed = 10;
    s.datarate = 1e6;
    for (std::size_t k = 0; k < kKpiCount; ++k) s.kpi[k] = static_cast<double>(k) + ts;
    return s;
}

/// Point displaced from (lat, lon) by `north` and `east` meters (local plane).
inline std::pair<double, double> offset_m(double lat, double lon, double north, double east) {
    constexpr double R = 6371008.8;
    constexpr double deg = 180.0 / 3.14159265358979323846;
    return {lat + north / R * deg, lon + east / (R * std::cos(lat / deg)) * deg};
}

}  // namespace pqos::testing
