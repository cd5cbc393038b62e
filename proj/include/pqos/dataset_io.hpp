#pragma once

// Feature datasets on disk: `<name>.csv` (timestamp, feature columns, target)
// plus `<name>.json` with columns, scaling parameters and split index.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"
#include "pqos/csv.hpp"
#include "pqos/featureset.hpp"

namespace pqos::features {

inline constexpr std::string_view kTargetColumn = "target_datarate_scaled";

struct DatasetFiles {
    std::filesystem::path csv;
    std::filesystem::path sidecar;
};

inline DatasetFiles dataset_files(const std::filesystem::path& dir, const std::string& name) {
    return {dir / (name + ".csv"), dir / (name + ".json")};
}

inline DatasetFiles write_dataset(const FeatureDataset& d, const std::filesystem::path& dir,
                                  std::optional<std::size_t> split_index = std::nullopt,
                                  const nlohmann::json& provenance = nlohmann::json::object()) {
    std::filesystem::create_directories(dir);
    auto files = dataset_files(dir, d.name);
    {
        csv::Writer w(files.csv);
        std::vector<std::string> header = {"timestamp"};
        header.insert(header.end(), d.columns.begin(), d.columns.end());
        header.emplace_back(kTargetColumn);
        w.row(header);
        std::vector<std::string> cells(header.size());
        for (std::size_t r = 0; r < d.rows(); ++r) {
            cells[0] = csv::format_double(d.timestamps[r]);
            for (std::size_t c = 0; c < d.n_features(); ++c) cells[c + 1] = csv::format_double(d.X(r, c));
            cells.back() = csv::format_double(d.y[r]);
            w.row(cells);
        }
        w.close();
    }
    nlohmann::json j = {{"name", d.name},
                        {"columns", d.columns},
                        {"rows", d.rows()},
                        {"chronological", d.chronological},
                        {"scale_params", d.scale ? nlohmann::json(*d.scale) : nlohmann::json(nullptr)},
                        {"split_index", split_index ? nlohmann::json(*split_index) : nlohmann::json(nullptr)},
                        {"provenance", provenance}};
    std::ofstream out(files.sidecar);
    if (!out) throw Error(Errc::IoError, "cannot write " + files.sidecar.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error(Errc::IoError, "write failed for " + files.sidecar.string());
    return files;
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw Error(Errc::FileNotFound, p.string());
    try {
        return nlohmann::json::parse(csv::slurp(p), nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, p.string() + ": " + e.what());
    }
}

struct LoadedDataset {
    FeatureDataset dataset;
    std::optional<std::size_t> split_index;
    nlohmann::json sidecar;
};

inline LoadedDataset read_dataset(const std::filesystem::path& dir, const std::string& name) {
    auto files = dataset_files(dir, name);
    LoadedDataset out;
    out.sidecar = read_json_file(files.sidecar);
    auto table = csv::read_file(files.csv);
    FeatureDataset& d = out.dataset;
    d.name = out.sidecar.at("name").get<std::string>();
    d.columns = out.sidecar.at("columns").get<std::vector<std::string>>();
    d.chronological = out.sidecar.value("chronological", true);
    if (!out.sidecar.at("scale_params").is_null()) d.scale = out.sidecar.at("scale_params").get<ScaleParams>();
    if (!out.sidecar.at("split_index").is_null()) out.split_index = out.sidecar.at("split_index").get<std::size_t>();
    if (table.header.size() != d.columns.size() + 2 || table.header.front() != "timestamp" ||
        table.header.back() != kTargetColumn)
        throw Error(Errc::SchemaMismatch, files.csv.string() + " header does not match its sidecar");
    for (std::size_t c = 0; c < d.columns.size(); ++c)
        if (table.header[c + 1] != d.columns[c])
            throw Error(Errc::SchemaMismatch, files.csv.string() + " column " + table.header[c + 1]);
    d.X = Matrix(0, d.columns.size());
    std::vector<double> row(d.columns.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& cells = table.rows[r];
        if (cells.size() != table.header.size())
            throw Error(Errc::ParseError, files.csv.string() + " row " + std::to_string(r + 2) + " has wrong arity");
        auto num = [&](std::size_t i) {
            auto v = csv::parse_double(cells[i]);
            if (!v) throw Error(Errc::ParseError, files.csv.string() + " row " + std::to_string(r + 2));
            return *v;
        };
        d.timestamps.push_back(num(0));
        for (std::size_t c = 0; c < d.columns.size(); ++c) row[c] = num(c + 1);
        d.X.append_row(row);
        d.y.push_back(num(cells.size() - 1));
    }
    return out;
}

}  // namespace pqos::features
