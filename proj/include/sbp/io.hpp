#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "sbp/types.hpp"

namespace sbp {

/// Floats are written with 17 significant digits so that they round-trip.
std::string format_double(double v);
std::string format_vector(const VectorXd& v);
/// Row-major, whitespace separated.
std::string format_matrix(const MatrixXd& m);

VectorXd parse_vector(const std::string& text);
MatrixXd parse_matrix(const std::string& text, Eigen::Index rows, Eigen::Index cols);

/// Ordered `key = value` document. Lines starting with '#' are comments; a
/// `[name]` line prefixes the keys that follow with `name.`.
class KeyValues {
 public:
  void set(const std::string& key, std::string value);
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, const VectorXd& value) { set(key, format_vector(value)); }

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  VectorXd get_vector(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(std::ostream& out) const;
  static KeyValues read(std::istream& in);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

void write_key_values_file(const std::string& path, const KeyValues& kv);
KeyValues read_key_values_file(const std::string& path);

/// Samples stored one per row, preceded by `# d=`, `# seed=`, `# target=` headers.
struct Dataset {
  MatrixXd samples;  // d × n, one column per sample
  std::uint64_t seed = 0;
  std::string target;
};

void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void write_dataset_file(const std::string& path, const Dataset& data);
Dataset read_dataset_file(const std::string& path);

/// Minimal CSV writer: fixed header, rows of already formatted cells.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::vector<std::string> columns);
  void row(const std::vector<std::string>& cells);

 private:
  std::ostream& out_;
  std::size_t width_;
};

}  // namespace sbp
