#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "abda/error.hpp"
#include "abda/likelihoods.hpp"
#include "abda/math.hpp"

namespace abda {

/// N x D table of mixed-type cells, row-major, with an observation mask.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> names, std::vector<MetaType> meta, std::size_t rows)
      : names_(std::move(names)), meta_(std::move(meta)), rows_(rows) {
    if (names_.size() != meta_.size()) throw Error(ErrorCode::InvalidArgument, "names and meta types differ in length");
    values_.assign(rows_ * cols(), 0.0);
    observed_.assign(rows_ * cols(), 1);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return meta_.size(); }

  const std::string& name(std::size_t d) const { return names_[d]; }
  const std::vector<std::string>& names() const { return names_; }
  MetaType meta(std::size_t d) const { return meta_[d]; }
  const std::vector<MetaType>& meta_types() const { return meta_; }

  double value(std::size_t n, std::size_t d) const { return values_[n * cols() + d]; }
  bool observed(std::size_t n, std::size_t d) const { return observed_[n * cols() + d] != 0; }

  void set(std::size_t n, std::size_t d, double v) {
    values_[n * cols() + d] = v;
    observed_[n * cols() + d] = 1;
  }
  void set_missing(std::size_t n, std::size_t d) {
    values_[n * cols() + d] = std::numeric_limits<double>::quiet_NaN();
    observed_[n * cols() + d] = 0;
  }

  std::span<const double> row_values(std::size_t n) const { return {values_.data() + n * cols(), cols()}; }
  std::span<const std::uint8_t> row_mask(std::size_t n) const { return {observed_.data() + n * cols(), cols()}; }

  /// Observed cells of column d, in row order.
  std::vector<double> observed_column(std::size_t d) const {
    std::vector<double> out;
    out.reserve(rows_);
    for (std::size_t n = 0; n < rows_; ++n) {
      if (observed(n, d)) out.push_back(value(n, d));
    }
    return out;
  }

  std::size_t missing_count() const {
    std::size_t c = 0;
    for (auto m : observed_) c += m == 0;
    return c;
  }

  /// Appends one row; `mask` may be empty (all observed).
  void push_row(std::span<const double> values, std::span<const std::uint8_t> mask = {}) {
    if (values.size() != cols()) throw Error(ErrorCode::InvalidArgument, "row width does not match dataset");
    for (std::size_t d = 0; d < cols(); ++d) {
      const bool obs = mask.empty() || mask[d] != 0;
      values_.push_back(obs ? values[d] : std::numeric_limits<double>::quiet_NaN());
      observed_.push_back(obs ? 1 : 0);
    }
    ++rows_;
  }

  /// Rows at the given indices, in that order.
  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out(names_, meta_, 0);
    for (std::size_t n : indices) out.push_row(row_values(n), row_mask(n));
    out.provenance = provenance;
    return out;
  }

  std::vector<std::string> provenance;  // '#' comment lines

 private:
  std::vector<std::string> names_;
  std::vector<MetaType> meta_;
  std::size_t rows_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> observed_;
};

/// Shortest decimal text that reads back to the same double (at most 17
/// significant digits).
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_number(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline Error parse_error(std::size_t line, std::size_t column, const std::string& reason) {
  return Error(ErrorCode::ParseError,
               "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + reason);
}

}  // namespace detail

/// Parses the CSV dialect: a `name:C` / `name:D` header, numeric cells,
/// `?` or empty for missing, `#` lines kept as provenance.
inline Dataset parse_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> provenance;
  std::vector<std::string> names;
  std::vector<MetaType> meta;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      provenance.emplace_back(t);
      continue;
    }
    std::size_t col = 0;
    for (auto field : detail::split_fields(t)) {
      ++col;
      const auto colon = field.rfind(':');
      if (colon == std::string_view::npos || colon + 2 != field.size()) {
        throw detail::parse_error(line_no, col, "header cell must be name:C or name:D");
      }
      const char tag = field.back();
      if (tag != 'C' && tag != 'D') throw detail::parse_error(line_no, col, "unknown meta type tag");
      names.emplace_back(field.substr(0, colon));
      meta.push_back(tag == 'C' ? MetaType::Continuous : MetaType::Discrete);
    }
    break;
  }
  if (names.empty()) throw detail::parse_error(line_no, 0, "missing header row");

  Dataset data(names, meta, 0);
  data.provenance = std::move(provenance);
  std::vector<double> values(names.size());
  std::vector<std::uint8_t> mask(names.size());
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      data.provenance.emplace_back(t);
      continue;
    }
    const auto fields = detail::split_fields(t);
    if (fields.size() != names.size()) {
      throw detail::parse_error(line_no, fields.size(),
                                "expected " + std::to_string(names.size()) + " cells, found " +
                                    std::to_string(fields.size()));
    }
    for (std::size_t d = 0; d < fields.size(); ++d) {
      const auto f = fields[d];
      if (f.empty() || f == "?") {
        mask[d] = 0;
        values[d] = 0.0;
        continue;
      }
      double v = 0.0;
      if (!detail::parse_number(f, v)) throw detail::parse_error(line_no, d + 1, "not a number: " + std::string(f));
      if (!std::isfinite(v)) throw detail::parse_error(line_no, d + 1, "non-finite cell");
      if (meta[d] == MetaType::Discrete && !is_integral(v)) {
        throw Error(ErrorCode::MixedTypeColumn, "line " + std::to_string(line_no) + ", column " +
                                                     std::to_string(d + 1) + ": discrete column '" + names[d] +
                                                     "' holds non-integer " + std::string(f));
      }
      values[d] = v;
      mask[d] = 1;
    }
    data.push_row(values, mask);
  }
  return data;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return parse_csv(in);
}

inline void write_csv(std::ostream& out, const Dataset& data, bool with_provenance = true) {
  for (std::size_t d = 0; d < data.cols(); ++d) {
    out << (d ? "," : "") << data.name(d) << ':' << (data.meta(d) == MetaType::Continuous ? 'C' : 'D');
  }
  out << '\n';
  for (std::size_t n = 0; n < data.rows(); ++n) {
    for (std::size_t d = 0; d < data.cols(); ++d) {
      if (d) out << ',';
      if (data.observed(n, d)) {
        out << format_double(data.value(n, d));
      } else {
        out << '?';
      }
    }
    out << '\n';
  }
  if (with_provenance) {
    for (const auto& p : data.provenance) out << p << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  write_csv(out, data);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

/// Content hash of the canonical CSV form (provenance excluded).
inline std::uint64_t dataset_hash(const Dataset& data) {
  std::ostringstream os;
  write_csv(os, data, false);
  return fnv1a(os.str());
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Per-feature summaries over observed cells.
inline std::vector<FeatureStats> feature_stats(const Dataset& data) {
  std::vector<FeatureStats> out;
  out.reserve(data.cols());
  for (std::size_t d = 0; d < data.cols(); ++d) out.push_back(compute_feature_stats(data.observed_column(d)));
  return out;
}

}  // namespace abda
