#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "heartbrain/cohort.hpp"
#include "heartbrain/errors.hpp"
#include "heartbrain/format.hpp"

namespace hb::cohort {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace

void write_csv(const FeatureTable& table, std::ostream& out) {
  out << "subject_id";
  for (const auto name : kColumns) out << ',' << name;
  out << '\n';
  std::vector<const Column*> cols;
  for (const auto name : kColumns) cols.push_back(&table.column(name));
  for (std::size_t i = 0; i < table.n_subjects(); ++i) {
    out << table.subject_ids[i];
    for (const Column* c : cols) {
      out << ',';
      if (c->observed[i]) out << format_double(c->values[i]);
    }
    out << '\n';
  }
}

void write_csv(const FeatureTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(table, out);
  if (!out) throw IoError("failed writing " + path.string());
}

FeatureTable read_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw SchemaError("empty CSV: missing header row");
  strip_cr(header);
  const auto names = split_line(header);
  if (names.empty() || names.front() != "subject_id")
    throw SchemaError("first header column must be subject_id");

  std::vector<int> index_of(kColumns.size(), -1);
  for (std::size_t k = 1; k < names.size(); ++k) {
    const auto it = std::find(kColumns.begin(), kColumns.end(), names[k]);
    if (it == kColumns.end()) throw SchemaError("unknown column '" + names[k] + "'");
    const auto c = static_cast<std::size_t>(it - kColumns.begin());
    if (index_of[c] != -1) throw SchemaError("duplicate column '" + names[k] + "'");
    index_of[c] = static_cast<int>(k);
  }
  for (std::size_t c = 0; c < kColumns.size(); ++c)
    if (index_of[c] == -1)
      throw SchemaError("missing column '" + std::string(kColumns[c]) + "'");

  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != names.size())
      throw SchemaError("ragged row at line " + std::to_string(line_no) + ": expected " +
                        std::to_string(names.size()) + " cells, got " +
                        std::to_string(cells.size()));
    rows.push_back(std::move(cells));
  }

  FeatureTable t = FeatureTable::with_schema(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string& id = rows[i][0];
    std::int64_t sid = 0;
    const auto res = std::from_chars(id.data(), id.data() + id.size(), sid);
    if (res.ec != std::errc() || res.ptr != id.data() + id.size())
      throw SchemaError("non-numeric subject_id '" + id + "' at data row " + std::to_string(i + 1));
    t.subject_ids[i] = sid;
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
      const std::string& cell = rows[i][static_cast<std::size_t>(index_of[c])];
      if (cell.empty()) continue;  // masked
      const auto v = parse_double(cell);
      if (!v || !std::isfinite(*v))
        throw SchemaError("non-numeric cell '" + cell + "' in column " +
                          std::string(kColumns[c]) + " at data row " + std::to_string(i + 1));
      t.columns[c].values[i] = *v;
      t.columns[c].observed[i] = 1;
    }
  }
  return t;
}

FeatureTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in);
}

void write_transform_log(const TransformLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << log.to_json().dump(2) << '\n';
}

TransformLog read_transform_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return TransformLog::from_json(nlohmann::json::parse(in));
}

}  // namespace hb::cohort
