#pragma once

// CSV/TSV data files: first column is the response y, the remaining p
// columns are the regressors, one observation per row in time order. An
// optional header row is auto-detected; the delimiter may be ',', '\t'
// or ';'.

#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "covscan/dataset.hpp"

namespace covscan {

namespace detail {

inline char detect_delimiter(const std::string& line) {
    if (line.find('\t') != std::string::npos) return '\t';
    if (line.find(';') != std::string::npos && line.find(',') == std::string::npos) return ';';
    return ',';
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, delim)) out.push_back(cell);
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

inline bool parse_double(const std::string& cell, double* value) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    errno = 0;
    *value = std::strtod(begin, &end);
    if (end == begin || errno == ERANGE) return false;
    while (*end != '\0') {
        if (!std::isspace(static_cast<unsigned char>(*end))) return false;
        ++end;
    }
    return true;
}

}  // namespace detail

inline RegressionDataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open input file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    char delim = ',';
    bool first = true;
    size_t width = 0;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        if (first) delim = detail::detect_delimiter(line);
        const auto cells = detail::split_line(line, delim);
        std::vector<double> vals(cells.size());
        bool numeric = true;
        for (size_t i = 0; i < cells.size(); ++i)
            if (!detail::parse_double(cells[i], &vals[i])) {
                numeric = false;
                break;
            }
        if (!numeric) {
            if (first) {  // header row
                first = false;
                width = cells.size();
                continue;
            }
            throw invalid_input("non-numeric cell at line " + std::to_string(lineno) +
                                " of " + path);
        }
        if (width == 0) width = cells.size();
        if (cells.size() != width)
            throw invalid_input("ragged row at line " + std::to_string(lineno) + " of " + path);
        rows.push_back(std::move(vals));
        first = false;
    }
    if (rows.empty()) throw invalid_input("no data rows in " + path);
    if (width < 2) throw invalid_input("need a response column and at least one regressor");
    RegressionDataset data;
    const auto n = static_cast<Index>(rows.size());
    const auto p = static_cast<Index>(width - 1);
    data.X.resize(n, p);
    data.y.resize(n);
    for (Index t = 0; t < n; ++t) {
        data.y(t) = rows[static_cast<size_t>(t)][0];
        for (Index i = 0; i < p; ++i)
            data.X(t, i) = rows[static_cast<size_t>(t)][static_cast<size_t>(i) + 1];
    }
    data.validate();
    return data;
}

inline std::string format_double(double v, int digits = 17) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return buf;
}

inline void write_dataset_csv(const std::string& path, const RegressionDataset& data) {
    std::ofstream out(path);
    if (!out) throw invalid_input("cannot open output file: " + path);
    out << "y";
    for (Index i = 0; i < data.p(); ++i) out << ",x" << (i + 1);
    out << "\n";
    for (Index t = 0; t < data.n(); ++t) {
        out << format_double(data.y(t));
        for (Index i = 0; i < data.p(); ++i) out << "," << format_double(data.X(t, i));
        out << "\n";
    }
}

}  // namespace covscan
