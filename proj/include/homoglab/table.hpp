#pragma once

#include <homoglab/common.hpp>

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <variant>

namespace homoglab {

/// 17 significant digits: enough to round-trip any binary double, and
/// locale-independent via to_chars, so identical values always serialize to
/// identical bytes.
inline std::string format_real(Real v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

using Cell = std::variant<Real, std::int64_t, std::string, bool>;

/// Fixed-column result table with deterministic CSV/JSON serialization.
class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_row(std::vector<Cell> cells) {
    contract(cells.size() == columns_.size(), "table row width mismatch");
    rows_.push_back(std::move(cells));
  }

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t row_count() const { return rows_.size(); }

  std::string to_csv() const {
    std::string out;
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (c) out += ',';
      out += columns_[c];
    }
    out += '\n';
    for (const auto& row : rows_) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out += ',';
        out += cell_to_string(row[c]);
      }
      out += '\n';
    }
    return out;
  }

  nlohmann::json to_json(const nlohmann::json& meta = {}) const {
    nlohmann::json j;
    if (!meta.is_null()) j["meta"] = meta;
    j["columns"] = columns_;
    j["rows"] = nlohmann::json::array();
    for (const auto& row : rows_) {
      nlohmann::json jr = nlohmann::json::array();
      for (const auto& cell : row) {
        std::visit([&jr](const auto& v) { jr.push_back(v); }, cell);
      }
      j["rows"].push_back(std::move(jr));
    }
    return j;
  }

  void write_csv(const std::filesystem::path& path) const { write_text(path, to_csv()); }

  void write_json(const std::filesystem::path& path, const nlohmann::json& meta = {}) const {
    write_text(path, to_json(meta).dump(2) + "\n");
  }

  static void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << text;
    os.flush();
    if (!os) throw IoError("write to '" + path.string() + "' failed");
  }

 private:
  static std::string cell_to_string(const Cell& cell) {
    if (std::holds_alternative<Real>(cell)) return format_real(std::get<Real>(cell));
    if (std::holds_alternative<std::int64_t>(cell))
      return std::to_string(std::get<std::int64_t>(cell));
    if (std::holds_alternative<bool>(cell)) return std::get<bool>(cell) ? "1" : "0";
    return std::get<std::string>(cell);
  }

  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

}  // namespace homoglab
