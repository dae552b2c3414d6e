#pragma once

// Versioned line-oriented text files shared by every serialized artifact.
// Each file starts with "<magic> v<version>"; records are whitespace
// separated tokens, '#' starts a comment line. Doubles are written with 17
// significant digits so that save/load round-trips bit-exactly.

#include <Eigen/Core>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace deckshift {

std::string format_double(double v);
double parse_double(std::string_view token, std::size_t line);
long long parse_int(std::string_view token, std::size_t line);

struct FlatRecord {
  std::size_t line = 0;
  std::vector<std::string> tokens;

  const std::string& key() const { return tokens.front(); }
  std::size_t arity() const { return tokens.size() - 1; }
  double number(std::size_t i) const;
  long long integer(std::size_t i) const;
};

void write_flat_header(std::ostream& out, std::string_view magic, int version);

// Reads all records after validating the header.
std::vector<FlatRecord> read_flat(std::istream& in, std::string_view magic,
                                  int version);

// "key = value" configuration files. Blank lines and '#' comments ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig load(const std::string& path);

  // Keys starting with `prefix`, with the prefix removed.
  KeyValueConfig with_prefix(const std::string& prefix) const;
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  long long get_int(const std::string& key, long long def) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& def) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
};

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

struct TensorFile {
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;

  const Eigen::MatrixXd& at(const std::string& name) const;
};

// Tensor files: "meta <key> <value>" lines and "tensor <name> <rows> <cols>"
// headers each followed by one line of row-major values.
void write_tensors(std::ostream& out, const TensorFile& file);
TensorFile read_tensors(std::istream& in);

void save_tensors(const std::string& path, const TensorFile& file);
TensorFile load_tensors(const std::string& path);

}  // namespace deckshift
