#pragma once

// CSV and JSON plumbing for the batch tools: a strict numeric CSV reader
// with row-level diagnostics, deterministic writers, and JSON views of fit
// results. Payload files never carry timestamps; run metadata lives in the
// paired .meta.json.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cspin/nlls.hpp"

namespace cspin::io {

class ingestion_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows; // row-major, one entry per column

    bool has_column(const std::string& name) const {
        for (const auto& c : columns)
            if (c == name) return true;
        return false;
    }

    std::vector<double> column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i] != name) continue;
            std::vector<double> out;
            out.reserve(rows.size());
            for (const auto& r : rows) out.push_back(r[i]);
            return out;
        }
        throw ingestion_error("missing column '" + name + "'");
    }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    out.push_back(field);
    for (auto& f : out) {
        while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.erase(f.begin());
        while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.pop_back();
    }
    return out;
}

inline bool parse_number(const std::string& field, double& value) {
    if (field.empty()) return false;
    char* end = nullptr;
    value = std::strtod(field.c_str(), &end);
    return end == field.c_str() + field.size();
}

} // namespace detail

// Reads a plain numeric CSV with a mandatory header row. Malformed rows are
// collected and reported together in one error.
inline Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ingestion_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw ingestion_error("'" + path + "': missing header row");
    Table t;
    t.columns = detail::split_line(line);

    std::vector<std::string> bad;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_line(line);
        if (fields.size() != t.columns.size()) {
            bad.push_back("line " + std::to_string(lineno) + ": expected " +
                          std::to_string(t.columns.size()) + " fields, got " +
                          std::to_string(fields.size()));
            continue;
        }
        std::vector<double> row(fields.size());
        bool ok = true;
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (!detail::parse_number(fields[i], row[i])) {
                bad.push_back("line " + std::to_string(lineno) + ": column '" +
                              t.columns[i] + "' is not a number: '" + fields[i] + "'");
                ok = false;
                break;
            }
        }
        if (ok) t.rows.push_back(std::move(row));
    }
    if (!bad.empty()) {
        std::string msg = "'" + path + "': " + std::to_string(bad.size()) +
                          " malformed row(s)";
        for (const auto& b : bad) msg += "; " + b;
        throw ingestion_error(msg);
    }
    return t;
}

// Shortest-round-trip-ish fixed formatting keeps payloads byte-stable
// across runs.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline void ensure_parent_dir(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline void write_csv(const std::string& path, const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows) {
    if (columns.empty()) throw std::invalid_argument("write_csv: no columns");
    for (const auto& r : rows)
        if (r.size() != columns.size())
            throw std::invalid_argument("write_csv: ragged row");
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary); // binary keeps line endings stable
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (std::size_t i = 0; i < columns.size(); ++i)
        out << (i ? "," : "") << columns[i];
    out << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i)
            out << (i ? "," : "") << format_number(r[i]);
        out << '\n';
    }
}

inline nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ingestion_error("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ingestion_error("'" + path + "': " + e.what());
    }
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

inline nlohmann::json fit_to_json(const fit::FitResult& r) {
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < r.names.size(); ++i)
        params.push_back({{"name", r.names[i]},
                          {"estimate", r.estimates[i]},
                          {"sigma", r.sigmas[i]}});
    return {{"parameters", params},
            {"rss", r.rss},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"warnings", r.warnings}};
}

} // namespace cspin::io
