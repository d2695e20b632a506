#pragma once

// File formats: chain JSON-lines, trace CSV, metrics CSV, observation CSV.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/tokenizer.hpp>
#include <nlohmann/json.hpp>

#include "sparj/analysis.hpp"
#include "sparj/error.hpp"
#include "sparj/lgssm.hpp"
#include "sparj/sampler.hpp"

namespace sparj {

inline nlohmann::json matrix_to_json(const Matrix& m)
{
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j)
{
    if (!j.is_array() || j.empty()) {
        throw ParseError("expected a non-empty array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ParseError("ragged matrix in JSON");
        }
        for (Eigen::Index jj = 0; jj < cols; ++jj) {
            m(i, jj) = row[static_cast<std::size_t>(jj)].get<double>();
        }
    }
    return m;
}

/// One record per iteration: {"iter", "loglik", "mask", "A"} with A flattened
/// row-major. In compact mode A is written only when it differs from the
/// previous record's.
inline void write_chain_jsonl(std::ostream& out, const Chain& chain, bool compact = false)
{
    const Matrix* last = nullptr;
    for (std::size_t n = 0; n < chain.size(); ++n) {
        const ChainState& s = chain.states[n];
        nlohmann::json rec;
        rec["iter"] = n + 1;
        rec["loglik"] = s.log_lik;
        rec["mask"] = s.model.to_bitstring();
        if (!compact || last == nullptr || *last != s.A) {
            std::vector<double> flat;
            flat.reserve(static_cast<std::size_t>(s.A.size()));
            for (Eigen::Index i = 0; i < s.A.rows(); ++i) {
                for (Eigen::Index j = 0; j < s.A.cols(); ++j) {
                    flat.push_back(s.A(i, j));
                }
            }
            rec["A"] = flat;
        }
        last = &s.A;
        out << rec.dump() << '\n';
    }
}

inline void write_chain_jsonl(const std::string& path, const Chain& chain, bool compact = false)
{
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path + " for writing");
    }
    write_chain_jsonl(out, chain, compact);
}

/// Reads states back. Sampler counters are not part of the format and come back zero.
inline Chain read_chain_jsonl(std::istream& in)
{
    Chain chain;
    std::string line;
    std::size_t line_no = 0;
    std::optional<Matrix> last;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("chain line " + std::to_string(line_no) + ": " + e.what());
        }
        ChainState s;
        s.model = SparsityModel::from_bitstring(rec.at("mask").get<std::string>());
        s.log_lik = rec.at("loglik").get<double>();
        const int dx = s.model.dim();
        if (rec.contains("A")) {
            const auto flat = rec["A"].get<std::vector<double>>();
            if (static_cast<int>(flat.size()) != dx * dx) {
                throw ParseError("chain line " + std::to_string(line_no) + ": A has the wrong length");
            }
            Matrix A(dx, dx);
            for (int i = 0; i < dx; ++i) {
                for (int j = 0; j < dx; ++j) {
                    A(i, j) = flat[static_cast<std::size_t>(i * dx + j)];
                }
            }
            last = std::move(A);
        } else if (!last) {
            throw ParseError("chain line " + std::to_string(line_no) + ": compact record without a preceding A");
        }
        s.A = *last;
        chain.states.push_back(std::move(s));
    }
    return chain;
}

inline Chain read_chain_jsonl(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open chain file " + path);
    }
    return read_chain_jsonl(in);
}

inline void write_trace_csv(std::ostream& out, const TraceDiagnostics& trace)
{
    out << "iter,spectral_norm,sparse_count\n" << std::setprecision(17);
    for (std::size_t n = 0; n < trace.spectral_norms.size(); ++n) {
        out << n + 1 << ',' << trace.spectral_norms[n] << ',' << trace.sparse_counts[n] << '\n';
    }
}

/// Columns of summary.csv and runs.csv.
inline constexpr const char* kMetricsHeader = "method,dx,rmse,spec,recall,prec,f1,time_s";

/// Metric row; an undefined precision is rendered "--".
inline std::string metrics_csv_row(const std::string& method, int dx, double rmse, double spec, double recall,
                                   std::optional<double> prec, double f1, double time_s)
{
    std::ostringstream row;
    row << std::setprecision(6) << method << ',' << dx << ',' << rmse << ',' << spec << ',' << recall << ',';
    if (prec) {
        row << *prec;
    } else {
        row << "--";
    }
    row << ',' << f1 << ',' << time_s;
    return row.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
    std::string trimmed = line;
    if (!trimmed.empty() && trimmed.back() == '\r') {
        trimmed.pop_back();
    }
    Tokenizer tok(trimmed);
    return {tok.begin(), tok.end()};
}

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_number(const std::string& cell)
{
    const std::string t = trim(cell);
    if (t.empty()) {
        return std::nullopt;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        throw ParseError("non-numeric cell '" + t + "'");
    }
    if (used != t.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric cell '" + t + "'");
    }
    return v;
}

} // namespace detail

/// Rows to keep: those whose `column` parses to `value`.
struct YearFilter {
    std::string column;
    int value = 0;
};

/// Reads the named columns (in the order given) of a headed CSV file into a
/// T x dy series. Empty cells in a selected column are an error naming the
/// data row (1-based, header excluded) and the column.
inline ObservationSeries load_csv_series(std::istream& in, const std::vector<std::string>& columns,
                                         const std::optional<YearFilter>& year_filter = std::nullopt)
{
    if (columns.empty()) {
        throw Error("load_csv_series: no columns requested");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("CSV file is empty");
    }
    const auto header = detail::split_csv_line(line);
    auto find_column = [&header](const std::string& name) {
        for (std::size_t k = 0; k < header.size(); ++k) {
            if (detail::trim(header[k]) == name) {
                return k;
            }
        }
        throw ParseError("column '" + name + "' not found in CSV header");
    };
    std::vector<std::size_t> picks;
    for (const auto& c : columns) {
        picks.push_back(find_column(c));
    }
    std::optional<std::size_t> year_col;
    if (year_filter) {
        year_col = find_column(year_filter->column);
    }

    std::vector<std::vector<double>> rows;
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty() || line == "\r") {
            continue;
        }
        ++row_no;
        const auto cells = detail::split_csv_line(line);
        auto cell = [&](std::size_t k) -> const std::string& {
            if (k >= cells.size()) {
                throw ParseError("row " + std::to_string(row_no) + " has only " + std::to_string(cells.size()) +
                                 " cells");
            }
            return cells[k];
        };
        if (year_col) {
            const auto y = detail::parse_number(cell(*year_col));
            if (!y || static_cast<int>(*y) != year_filter->value) {
                continue;
            }
        }
        std::vector<double> values;
        for (std::size_t k = 0; k < picks.size(); ++k) {
            std::optional<double> v;
            try {
                v = detail::parse_number(cell(picks[k]));
            } catch (const ParseError& e) {
                throw ParseError(std::string(e.what()) + " at row " + std::to_string(row_no) + ", column '" +
                                 columns[k] + "'");
            }
            if (!v) {
                throw ParseError("missing value at row " + std::to_string(row_no) + ", column '" + columns[k] + "'");
            }
            values.push_back(*v);
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) {
        throw ParseError("CSV selection contains no rows");
    }
    ObservationSeries obs{Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()))};
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t k = 0; k < columns.size(); ++k) {
            obs.y(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = rows[t][k];
        }
    }
    return obs;
}

inline ObservationSeries load_csv_series(const std::string& path, const std::vector<std::string>& columns,
                                         const std::optional<YearFilter>& year_filter = std::nullopt)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open CSV file " + path);
    }
    return load_csv_series(in, columns, year_filter);
}

/// Headed CSV with columns y1..y_dy.
inline void write_series_csv(std::ostream& out, const Matrix& rows, const std::string& prefix)
{
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        out << (j ? "," : "") << prefix << j + 1;
    }
    out << '\n' << std::setprecision(17);
    for (Eigen::Index t = 0; t < rows.rows(); ++t) {
        for (Eigen::Index j = 0; j < rows.cols(); ++j) {
            out << (j ? "," : "") << rows(t, j);
        }
        out << '\n';
    }
}

} // namespace sparj
