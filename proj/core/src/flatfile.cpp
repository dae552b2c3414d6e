#include "deckshift/flatfile.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "deckshift/common.hpp"

namespace deckshift {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(std::string_view token, std::size_t line) {
  // from_chars for double is unavailable on some toolchains; strtod is exact.
  std::string s(token);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw ParseError(line, "expected a number, got '" + s + "'");
  return v;
}

long long parse_int(std::string_view token, std::size_t line) {
  long long v = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
    throw ParseError(line, "expected an integer, got '" + std::string(token) + "'");
  return v;
}

double FlatRecord::number(std::size_t i) const {
  if (i + 1 >= tokens.size())
    throw ParseError(line, "record '" + key() + "' is missing field " + std::to_string(i));
  return parse_double(tokens[i + 1], line);
}

long long FlatRecord::integer(std::size_t i) const {
  if (i + 1 >= tokens.size())
    throw ParseError(line, "record '" + key() + "' is missing field " + std::to_string(i));
  return parse_int(tokens[i + 1], line);
}

void write_flat_header(std::ostream& out, std::string_view magic, int version) {
  out << magic << " v" << version << '\n';
}

std::vector<FlatRecord> read_flat(std::istream& in, std::string_view magic,
                                  int version) {
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::vector<FlatRecord> records;
  while (std::getline(in, line)) {
    ++lineno;
    auto tokens = split_ws(line);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    if (!have_header) {
      if (tokens.size() != 2 || tokens[0] != magic)
        throw ParseError(lineno, "expected header '" + std::string(magic) + "'");
      if (tokens[1] != "v" + std::to_string(version))
        throw ParseError(lineno, "unsupported version " + tokens[1]);
      have_header = true;
      continue;
    }
    records.push_back({lineno, std::move(tokens)});
  }
  if (!have_header) throw ParseError(lineno, "missing header");
  return records;
}

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
    const auto key = trim(t.substr(0, eq));
    const auto value = trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError(lineno, "empty key");
    cfg.values_[key] = value;
    cfg.lines_[key] = lineno;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in);
}

KeyValueConfig KeyValueConfig::with_prefix(const std::string& prefix) const {
  KeyValueConfig sub;
  for (const auto& [k, v] : values_)
    if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0) {
      const auto key = k.substr(prefix.size());
      sub.values_[key] = v;
      sub.lines_[key] = lines_.at(k);
    }
  return sub;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  lines_.emplace(key, 0);
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& def) const {
  auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double def) const {
  auto it = values_.find(key);
  return it == values_.end() ? def : parse_double(it->second, lines_.at(key));
}

long long KeyValueConfig::get_int(const std::string& key, long long def) const {
  auto it = values_.find(key);
  return it == values_.end() ? def : parse_int(it->second, lines_.at(key));
}

std::vector<double> KeyValueConfig::get_doubles(
    const std::string& key, const std::vector<double>& def) const {
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  std::string s = it->second;
  for (char& c : s)
    if (c == ',') c = ' ';
  std::vector<double> out;
  for (const auto& tok : split_ws(s)) out.push_back(parse_double(tok, lines_.at(key)));
  return out;
}

const Eigen::MatrixXd& TensorFile::at(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw DataError("tensor file has no tensor named '" + name + "'");
}

void write_tensors(std::ostream& out, const TensorFile& file) {
  write_flat_header(out, "deckshift-tensors", 1);
  for (const auto& [k, v] : file.meta) out << "meta " << k << ' ' << v << '\n';
  for (const auto& t : file.tensors) {
    out << "tensor " << t.name << ' ' << t.value.rows() << ' ' << t.value.cols() << '\n';
    out << "values";
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c)
        out << ' ' << format_double(t.value(r, c));
    out << '\n';
  }
}

TensorFile read_tensors(std::istream& in) {
  TensorFile file;
  const auto records = read_flat(in, "deckshift-tensors", 1);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (rec.key() == "meta") {
      if (rec.arity() != 2) throw ParseError(rec.line, "meta needs key and value");
      file.meta[rec.tokens[1]] = rec.tokens[2];
    } else if (rec.key() == "tensor") {
      if (rec.arity() != 3) throw ParseError(rec.line, "tensor needs name rows cols");
      const auto rows = rec.integer(1);
      const auto cols = rec.integer(2);
      if (rows < 0 || cols < 0) throw ParseError(rec.line, "negative tensor shape");
      if (i + 1 >= records.size() || records[i + 1].key() != "values")
        throw ParseError(rec.line, "tensor header without values line");
      const auto& vals = records[++i];
      if (vals.arity() != static_cast<std::size_t>(rows * cols))
        throw ParseError(vals.line, "tensor " + rec.tokens[1] + " has wrong value count");
      Eigen::MatrixXd m(rows, cols);
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = vals.number(k++);
      file.tensors.push_back({rec.tokens[1], std::move(m)});
    } else {
      throw ParseError(rec.line, "unknown record '" + rec.key() + "'");
    }
  }
  return file;
}

void save_tensors(const std::string& path, const TensorFile& file) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_tensors(out, file);
}

TensorFile load_tensors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_tensors(in);
}

}  // namespace deckshift
