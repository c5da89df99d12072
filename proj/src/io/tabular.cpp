#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "cerf/error.hpp"
#include "cerf/io.hpp"

namespace cerf::io {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

double parse_real(const std::string& cell, std::size_t line) {
    const std::string t = trim(cell);
    double value = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (t.empty() || ec != std::errc() || ptr != last)
        fail_data(at_line(line) + "'" + t + "' is not a number");
    if (!std::isfinite(value)) fail_data(at_line(line) + "'" + t + "' is not finite");
    return value;
}

long long parse_integer(const std::string& cell, std::size_t line) {
    const std::string t = trim(cell);
    long long value = 0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (t.empty() || ec != std::errc() || ptr != last)
        fail_data(at_line(line) + "label '" + t + "' is not an integer");
    return value;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) cells.push_back(cell);
    if (!line.empty() && line.back() == sep) cells.emplace_back();
    return cells;
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows, Eigen::Index cols) {
    Matrix X(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (Eigen::Index j = 0; j < cols; ++j) X(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    return X;
}

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_data("cannot open '" + path + "' for reading");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_data("cannot open '" + path + "' for writing");
    out << contents;
    if (!out) fail_data("failed writing '" + path + "'");
}

LabeledTable parse_dense_csv(const std::string& text, bool has_label) {
    std::vector<std::vector<double>> rows;
    LabeledTable table;
    std::size_t width = 0;
    std::size_t line_no = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (rows.empty()) {
            width = cells.size();
            if (has_label && width < 2) fail_data(at_line(line_no) + "a labeled row needs a feature and a label");
        } else if (cells.size() != width) {
            fail_data(at_line(line_no) + "ragged row with " + std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(width));
        }
        const std::size_t features = has_label ? width - 1 : width;
        std::vector<double> row(features);
        for (std::size_t j = 0; j < features; ++j) row[j] = parse_real(cells[j], line_no);
        if (has_label) table.labels.push_back(parse_integer(cells.back(), line_no));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) fail_data("dense CSV has no rows");
    table.X = to_matrix(rows, static_cast<Eigen::Index>(has_label ? width - 1 : width));
    return table;
}

LabeledTable load_dense_csv(const std::string& path, bool has_label) {
    try {
        return parse_dense_csv(read_file(path), has_label);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

LabeledTable parse_libsvm(const std::string& text, Eigen::Index dim) {
    require(dim >= 1, "libsvm: dimension must be positive");
    std::vector<std::vector<double>> rows;
    LabeledTable table;
    std::size_t line_no = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream tokens(line);
        std::string token;
        if (!(tokens >> token)) continue;
        table.labels.push_back(parse_integer(token, line_no));
        std::vector<double> row(static_cast<std::size_t>(dim), 0.0);
        long long previous = 0;
        while (tokens >> token) {
            const auto colon = token.find(':');
            if (colon == std::string::npos) fail_data(at_line(line_no) + "'" + token + "' is not idx:val");
            const long long index = parse_integer(token.substr(0, colon), line_no);
            if (index < 1 || index > dim)
                fail_data(at_line(line_no) + "index " + std::to_string(index) + " is outside [1, " +
                          std::to_string(dim) + "]");
            if (index <= previous)
                fail_data(at_line(line_no) + "index " + std::to_string(index) + " does not increase");
            previous = index;
            row[static_cast<std::size_t>(index - 1)] = parse_real(token.substr(colon + 1), line_no);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) fail_data("libsvm file has no rows");
    table.X = to_matrix(rows, dim);
    return table;
}

LabeledTable load_libsvm(const std::string& path, Eigen::Index dim) {
    try {
        return parse_libsvm(read_file(path), dim);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

apps::Dataset to_dataset(const LabeledTable& table) {
    apps::Dataset data;
    data.X = table.X;
    if (!table.labels.empty()) {
        std::vector<long long> values = table.labels;
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        data.labels.reserve(table.labels.size());
        for (long long l : table.labels)
            data.labels.push_back(static_cast<int>(std::lower_bound(values.begin(), values.end(), l) - values.begin()));
    }
    data.validate();
    return data;
}

std::string format_dense_csv(const Matrix& X, const std::vector<int>& labels) {
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != X.rows())
        fail_argument("format_dense_csv: label count does not match rows");
    std::string out;
    char buf[32];
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", X(i, j));
            if (j > 0) out += ',';
            out += buf;
        }
        if (!labels.empty()) out += "," + std::to_string(labels[static_cast<std::size_t>(i)]);
        out += '\n';
    }
    return out;
}

}  // namespace cerf::io
