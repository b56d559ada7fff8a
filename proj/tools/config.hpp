#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tractor/integrals.hpp"

namespace tractorcalc {

using tractor::bad_input;
using tractor::Vec;

// One [section] of the config file; values stay as raw text until asked for.
class Section {
 public:
  Section() = default;
  Section(std::string name, const boost::property_tree::ptree& pt) : name_(std::move(name)) {
    for (const auto& [k, v] : pt) {
      if (!v.empty()) throw bad_input("config: nested key in [" + name_ + "]");
      values_[k] = v.data();
    }
  }

  const std::string& name() const { return name_; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : values_)
      if (!ok.count(k)) throw bad_input("config: unknown key '" + k + "' in [" + name_ + "]");
  }

  const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw bad_input("config: missing key '" + key + "' in [" + name_ + "]");
    return it->second;
  }

  std::string str(const std::string& key) const { return unquote(raw(key)); }
  std::string str(const std::string& key, const std::string& def) const { return has(key) ? str(key) : def; }

  double num(const std::string& key) const { return parse_num(raw(key), key); }
  double num(const std::string& key, double def) const { return has(key) ? num(key) : def; }

  int integer(const std::string& key) const {
    const double v = num(key);
    if (v != static_cast<double>(static_cast<int>(v))) throw bad_input("config: '" + key + "' must be an integer");
    return static_cast<int>(v);
  }
  int integer(const std::string& key, int def) const { return has(key) ? integer(key) : def; }

  bool flag(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const std::string v = str(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw bad_input("config: '" + key + "' must be true or false");
  }

  Vec nums(const std::string& key) const {
    Vec out;
    for (const auto& e : items(key)) out.push_back(parse_num(e, key));
    return out;
  }

  std::vector<int> ints(const std::string& key) const {
    std::vector<int> out;
    for (double v : nums(key)) {
      if (v != static_cast<double>(static_cast<int>(v))) throw bad_input("config: '" + key + "' must hold integers");
      out.push_back(static_cast<int>(v));
    }
    return out;
  }

  std::vector<std::string> strs(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& e : items(key)) out.push_back(unquote(e));
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
  }

  static std::string unquote(const std::string& raw) {
    const std::string s = trim(raw);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    if (s.find('"') != std::string::npos) throw bad_input("config: unbalanced quotes in " + s);
    return s;
  }

  double parse_num(const std::string& raw, const std::string& key) const {
    const std::string s = trim(raw);
    double v = 0.0;
    const char* first = s.data();
    if (!s.empty() && s[0] == '+') ++first;
    auto [p, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
      throw bad_input("config: '" + key + "' in [" + name_ + "] is not a number: " + s);
    return v;
  }

  // [a, "b, c", d] split on top-level commas.
  std::vector<std::string> items(const std::string& key) const {
    const std::string s = trim(raw(key));
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
      throw bad_input("config: '" + key + "' in [" + name_ + "] must be an array [ ... ]");
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      const char c = s[i];
      if (c == '"') quoted = !quoted;
      if (c == ',' && !quoted) {
        out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (quoted) throw bad_input("config: unbalanced quotes in '" + key + "'");
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    for (const auto& e : out)
      if (e.empty()) throw bad_input("config: empty array element in '" + key + "'");
    return out;
  }

  std::string name_;
  std::map<std::string, std::string> values_;
};

struct FieldConfig {
  std::vector<std::string> components;
  std::vector<tractor::Valence> valence;
  tractor::Symmetry symmetry = tractor::Symmetry::None;
  double weight = 0.0;
};

struct IntegralConfig {
  std::string label;
  tractor::IntegralKind kind = tractor::IntegralKind::Killing;
  std::optional<FieldConfig> field;
  std::string tractor;  // generic pairing source
  std::string builder = "conformal";
  int m0 = 1;
  std::optional<double> tol;
};

struct RunConfig {
  Section metric, curve, scan, residual, output, transport;
  bool has_curve = false, has_scan = false, has_residual = false, has_transport = false;
  std::vector<IntegralConfig> integrals;
};

inline std::vector<tractor::Valence> parse_valence(const std::string& s) {
  std::vector<tractor::Valence> v;
  for (char c : s) {
    if (c == 'l') v.push_back(tractor::Valence::Lower);
    else if (c == 'u') v.push_back(tractor::Valence::Upper);
    else if (c != ' ') throw bad_input("config: valence is a string of 'l' and 'u', got '" + s + "'");
  }
  return v;
}

inline tractor::Symmetry parse_symmetry(const std::string& s) {
  if (s == "none") return tractor::Symmetry::None;
  if (s == "symmetric") return tractor::Symmetry::Symmetric;
  if (s == "skew") return tractor::Symmetry::Skew;
  throw bad_input("config: symmetry must be none, symmetric or skew, got '" + s + "'");
}

inline FieldConfig parse_field(const Section& s) {
  FieldConfig f;
  f.components = s.strs("field");
  f.valence = parse_valence(s.str("valence", ""));
  f.symmetry = parse_symmetry(s.str("symmetry", "none"));
  f.weight = s.num("weight", 0.0);
  return f;
}

inline RunConfig parse_config(std::istream& in) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw bad_input(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  RunConfig rc;
  bool has_metric = false;
  for (const auto& [name, sub] : pt) {
    if (sub.empty() && !sub.data().empty()) throw bad_input("config: key '" + name + "' outside any section");
    Section s(name, sub);
    if (name == "metric") {
      s.allow({"name", "n", "p", "q", "radius", "components", "signature", "projective_phi", "conformal_phi"});
      rc.metric = s;
      has_metric = true;
    } else if (name == "curve") {
      s.allow({"kind", "x0", "u0", "a0", "h", "steps", "renormalize", "box"});
      rc.curve = s;
      rc.has_curve = true;
    } else if (name.rfind("integral.", 0) == 0 && name.size() > 9) {
      s.allow({"kind", "field", "valence", "symmetry", "weight", "tractor", "builder", "m0", "tol"});
      IntegralConfig ic;
      ic.label = name.substr(9);
      const auto k = tractor::integral_kind_from(s.str("kind"));
      if (!k) throw bad_input("config: unknown integral kind '" + s.str("kind") + "' in [" + name + "]");
      ic.kind = *k;
      if (s.has("field")) ic.field = parse_field(s);
      ic.tractor = s.str("tractor", "");
      ic.builder = s.str("builder", "conformal");
      ic.m0 = s.integer("m0", 1);
      if (s.has("tol")) ic.tol = s.num("tol");
      rc.integrals.push_back(std::move(ic));
    } else if (name == "scan") {
      s.allow({"predicate", "field", "valence", "symmetry", "weight", "box", "resolution", "tol", "seed_x", "seed_u",
               "seed_a"});
      rc.scan = s;
      rc.has_scan = true;
    } else if (name == "residual") {
      s.allow({"kind", "field", "valence", "symmetry", "weight", "box", "resolution", "tol"});
      rc.residual = s;
      rc.has_residual = true;
    } else if (name == "transport") {
      s.allow({"builder", "tol"});
      rc.transport = s;
      rc.has_transport = true;
    } else if (name == "output") {
      s.allow({"prefix"});
      rc.output = s;
    } else {
      throw bad_input("config: unknown section [" + name + "]");
    }
  }
  if (!has_metric) throw bad_input("config: missing [metric] section");
  return rc;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw bad_input("config: cannot open " + path);
  return parse_config(in);
}

}  // namespace tractorcalc
