#pragma once

// Table and manifest export: 17-significant-digit CSV, JSON, atomic writes,
// and the readers used for round-trip checks.

#include "kryloscope/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace kryloscope {

inline constexpr std::string_view schema_version = "kryloscope/1";
inline constexpr std::string_view library_version = "1.0.0";

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add_row(std::vector<double> row)
    {
        if (row.size() != columns.size()) throw validation_error("table row width does not match the header");
        rows.push_back(std::move(row));
    }
};

inline std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline double parse_double(const std::string& s)
{
    if (s == "nan") return NAN;
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters in '" + s + "'");
    return v;
}

inline std::string to_csv(const Table& t)
{
    std::string out;
    for (std::size_t c = 0; c < t.columns.size(); ++c) out += (c ? "," : "") + t.columns[c];
    out += '\n';
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out += ',';
            out += format_double(row[c]);
        }
        out += '\n';
    }
    return out;
}

inline Table parse_csv(const std::string& text)
{
    Table t;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!header) {
            t.columns = cells;
            header = true;
            continue;
        }
        if (cells.size() != t.columns.size()) throw parse_error("column count mismatch", line_no);
        std::vector<double> row;
        for (const auto& c : cells) {
            try {
                row.push_back(parse_double(c));
            } catch (const std::exception&) {
                throw parse_error("not a number: '" + c + "'", line_no);
            }
        }
        t.rows.push_back(std::move(row));
    }
    if (!header) throw parse_error("missing header", line_no);
    return t;
}

inline nlohmann::json json_number(double x)
{
    if (std::isfinite(x)) return x;
    return format_double(x); // JSON has no inf/nan
}

inline nlohmann::json to_json(const Table& t)
{
    nlohmann::json j;
    j["columns"] = t.columns;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : t.rows) {
        nlohmann::json r = nlohmann::json::array();
        for (double v : row) r.push_back(json_number(v));
        j["rows"].push_back(r);
    }
    return j;
}

inline Table table_from_json(const nlohmann::json& j)
{
    Table t;
    t.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows")) {
        std::vector<double> row;
        for (const auto& v : r) row.push_back(v.is_string() ? parse_double(v.get<std::string>()) : v.get<double>());
        t.add_row(std::move(row));
    }
    return t;
}

/// Writes to a sibling temporary and renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw error("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes a table as CSV or JSON (format "csv" | "json").
inline void write_table(const std::filesystem::path& path, const Table& t, const std::string& format)
{
    if (format == "csv") {
        write_atomic(path, to_csv(t));
    } else if (format == "json") {
        write_atomic(path, to_json(t).dump(2) + "\n");
    } else {
        throw validation_error("unknown format '" + format + "'");
    }
}

inline Table read_table(const std::filesystem::path& path)
{
    const std::string text = read_file(path);
    if (path.extension() == ".json") return table_from_json(nlohmann::json::parse(text));
    return parse_csv(text);
}

} // namespace kryloscope
