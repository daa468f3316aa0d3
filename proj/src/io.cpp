#include "sbp/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace sbp {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& token) {
  // strtod rather than stod: subnormal values set ERANGE but are valid round-trip output.
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (token.empty() || end != token.c_str() + token.size() || (errno == ERANGE && std::isinf(v))) {
    throw std::invalid_argument("cannot parse number '" + token + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_vector(const VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v(i));
  }
  return out;
}

std::string format_matrix(const MatrixXd& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!out.empty()) out += ' ';
      out += format_double(m(i, j));
    }
  return out;
}

VectorXd parse_vector(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> values;
  std::string token;
  while (in >> token) values.push_back(parse_double(token));
  return Eigen::Map<VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

MatrixXd parse_matrix(const std::string& text, Eigen::Index rows, Eigen::Index cols) {
  const VectorXd flat = parse_vector(text);
  if (flat.size() != rows * cols) {
    throw std::invalid_argument("parse_matrix: expected " + std::to_string(rows * cols) +
                                " entries, got " + std::to_string(flat.size()));
  }
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = flat(i * cols + j);
  return m;
}

void KeyValues::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

bool KeyValues::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

const std::string& KeyValues::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw std::out_of_range("missing key '" + key + "'");
}

double KeyValues::get_double(const std::string& key) const { return parse_double(get(key)); }

long long KeyValues::get_int(const std::string& key) const {
  const double v = get_double(key);
  if (v != static_cast<double>(static_cast<long long>(v))) {
    throw std::invalid_argument("key '" + key + "' is not an integer");
  }
  return static_cast<long long>(v);
}

VectorXd KeyValues::get_vector(const std::string& key) const { return parse_vector(get(key)); }

void KeyValues::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

KeyValues KeyValues::read(std::istream& in) {
  KeyValues kv;
  std::string line, prefix;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw std::invalid_argument("line " + std::to_string(lineno) + ": unterminated section");
      const std::string name = trim(t.substr(1, t.size() - 2));
      prefix = name.empty() ? "" : name + ".";
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    kv.set(prefix + trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

void write_key_values_file(const std::string& path, const KeyValues& kv) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  kv.write(out);
}

KeyValues read_key_values_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return KeyValues::read(in);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << "# d=" << data.samples.rows() << '\n';
  out << "# seed=" << data.seed << '\n';
  out << "# target=" << data.target << '\n';
  for (Eigen::Index j = 0; j < data.samples.cols(); ++j) {
    out << format_vector(data.samples.col(j)) << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  Dataset data;
  long long d = -1;
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const std::string body = trim(t.substr(1));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = trim(body.substr(0, eq));
      const std::string value = trim(body.substr(eq + 1));
      if (key == "d") d = std::stoll(value);
      if (key == "seed") data.seed = std::stoull(value);
      if (key == "target") data.target = value;
      continue;
    }
    if (d < 1) throw std::invalid_argument("dataset: '# d=' header must precede samples");
    const VectorXd row = parse_vector(t);
    if (row.size() != d) throw std::invalid_argument("dataset: row has wrong number of columns");
    values.insert(values.end(), row.data(), row.data() + row.size());
  }
  if (d < 1) throw std::invalid_argument("dataset: missing '# d=' header");
  if (values.empty()) throw std::invalid_argument("dataset: no samples");
  data.samples = Eigen::Map<MatrixXd>(values.data(), d, static_cast<Eigen::Index>(values.size()) / d);
  return data;
}

void write_dataset_file(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_dataset(out, data);
}

Dataset read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_dataset(in);
}

CsvWriter::CsvWriter(std::ostream& out, std::vector<std::string> columns)
    : out_(out), width_(columns.size()) {
  row(columns);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw std::logic_error("CsvWriter: row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

}  // namespace sbp
