#pragma once
// Run configuration for the command-line tool.
//
// A RunConfig is a flat JSON object. Every command accepts a fixed set of
// keys; each key has a type, an optional choice list or lower bound, and an
// optional default. Validation collects every problem before reporting, and
// unknown keys are rejected.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mera/errors.hpp"

namespace mera {

enum class KeyType { uint, real, boolean, text, uint_list };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string help;
  std::set<std::string> commands;
  nlohmann::json fallback;            // null: no default
  std::vector<std::string> choices;   // text keys only
  std::optional<double> min;          // numeric keys only
  std::optional<double> max;
  std::set<std::string> required_for;
  std::map<std::string, nlohmann::json> fallback_for = {};  // overrides `fallback` per command
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"prepare-state", "tomograph", "conditioning", "budget", "certify"};
  return names;
}

inline const std::vector<KeySpec>& config_schema() {
  using J = nlohmann::json;
  const std::set<std::string> all{"prepare-state", "tomograph", "conditioning", "budget", "certify"};
  static const std::vector<KeySpec> schema{
      {"model", KeyType::text, "target state", {"prepare-state", "conditioning"}, J(),
       {"ising-critical", "xx", "random-mera", "identity-mera", "haar"}, {}, {},
       {"prepare-state", "conditioning"}},
      {"n", KeyType::uint, "number of qubits", {"prepare-state", "conditioning"}, J(), {}, 2, 24,
       {"prepare-state", "conditioning"}},
      {"geometry", KeyType::text, "MERA geometry", {"prepare-state", "tomograph", "conditioning"}, "binary",
       {"binary", "ternary"}, {}, {}, {}},
      {"chi", KeyType::uint, "bond dimension", {"prepare-state", "tomograph", "conditioning"}, 2, {}, 2, 2, {}},
      {"delta", KeyType::real, "amplitude of the Haar-random admixture", {"prepare-state"}, 0.0, {}, 0.0, 0.999999, {}},
      {"mode", KeyType::text, "measurement model", {"tomograph", "conditioning"}, "exact", {"exact", "sampled"}, {}, {},
       {}},
      {"shots", KeyType::uint, "shots per Pauli setting on physical blocks", {"tomograph", "conditioning"}, 10000, {}, 1,
       {}, {}},
      {"M0", KeyType::uint, "reference shots per renormalized observable", {"tomograph", "conditioning", "budget"}, 100,
       {}, 1, {}, {}},
      {"seed", KeyType::uint, "random seed", all, 1, {}, {}, {}, {}},
      {"seeds", KeyType::uint, "number of consecutive seeds", {"conditioning"}, 10, {}, 1, {}, {}},
      {"route", KeyType::text,
       "how upper-level block density matrices are obtained (default: basis for tomograph, renormalized for "
       "conditioning)",
       {"tomograph", "conditioning"}, J(), {"basis", "renormalized"}, {}, {}, {},
       {{"tomograph", "basis"}, {"conditioning", "renormalized"}}},
      {"max_sweeps", KeyType::uint, "disentangler sweep cap per layer", {"tomograph", "conditioning"}, 2000, {}, 1, {},
       {}},
      {"sweep_tol", KeyType::real, "stop when the objective changes less than this", {"tomograph", "conditioning"},
       1e-12, {}, 0.0, {}, {}},
      {"gradient_tol", KeyType::real, "stop when the anti-Hermitian part of u Gamma is below this",
       {"tomograph", "conditioning"}, 1e-13, {}, 0.0, {}, {}},
      {"random_init", KeyType::boolean,
       "start disentanglers from Haar-random unitaries (default: false for tomograph, true for conditioning)",
       {"tomograph", "conditioning"}, J(), {}, {}, {}, {}, {{"tomograph", false}, {"conditioning", true}}},
      {"restarts", KeyType::uint, "extra random starts per layer (default: 0 for tomograph, 9 for conditioning)",
       {"tomograph", "conditioning"}, J(), {}, {}, {}, {}, {{"tomograph", 0}, {"conditioning", 9}}},
      {"window", KeyType::text, "candidate window for conditioning bases", {"conditioning"}, "isometry-inputs",
       {"isometry-inputs", "confined"}, {}, {}, {}},
      {"max_level", KeyType::uint, "highest level profiled (0: all)", {"conditioning"}, 0, {}, {}, {}, {}},
      {"n_values", KeyType::uint_list, "system sizes", {"budget"}, J::array({8, 16, 24}), {}, {}, {}, {}},
      {"S", KeyType::real, "conditioning factor of the binary scheme", {"budget"}, 6.0, {}, 1.0, {}, {}},
      {"lambda", KeyType::real, "per-site overhead of the naive ternary scheme", {"budget"}, 6.0, {}, 1.0, {}, {}},
      {"state", KeyType::text, "input state file", {"tomograph"}, J(), {}, {}, {}, {"tomograph"}},
      {"truth", KeyType::text, "true state file for exact comparison", {"certify"}, J(), {}, {}, {}, {}},
      {"circuit", KeyType::text, "circuit directory", {"certify"}, J(), {}, {}, {}, {"certify"}},
      {"report", KeyType::text, "truncation report JSON", {"certify"}, J(), {}, {}, {}, {"certify"}},
      {"factor_form", KeyType::text, "trace-norm factor of the reconstruction term", {"tomograph", "certify"}, "summed",
       {"summed", "per-observable"}, {}, {}, {}},
      {"label", KeyType::text, "first column of the certificate CSV row", {"tomograph", "certify"}, "", {}, {}, {}, {}},
      {"output", KeyType::text, "output file or directory", all, J(), {}, {}, {}, all},
  };
  return schema;
}

inline const KeySpec* find_key(const std::string& name) {
  for (const auto& k : config_schema())
    if (k.name == name) return &k;
  return nullptr;
}

class RunConfig {
 public:
  RunConfig(std::string command, nlohmann::json values) : command_(std::move(command)), values_(std::move(values)) {}

  const std::string& command() const { return command_; }
  const nlohmann::json& values() const { return values_; }
  bool has(const std::string& key) const { return values_.contains(key) && !values_.at(key).is_null(); }

  template <class T>
  T get(const std::string& key) const {
    if (!has(key)) throw ValidationError("config: key \"" + key + "\" is not set");
    return values_.at(key).get<T>();
  }

 private:
  std::string command_;
  nlohmann::json values_;
};

namespace detail {

inline std::string type_name(KeyType t) {
  switch (t) {
    case KeyType::uint: return "a non-negative integer";
    case KeyType::real: return "a number";
    case KeyType::boolean: return "a boolean";
    case KeyType::text: return "a string";
    default: return "a list of non-negative integers";
  }
}

inline bool type_matches(KeyType t, const nlohmann::json& v) {
  switch (t) {
    case KeyType::uint: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case KeyType::real: return v.is_number();
    case KeyType::boolean: return v.is_boolean();
    case KeyType::text: return v.is_string();
    default:
      if (!v.is_array() || v.empty()) return false;
      for (const auto& e : v)
        if (!type_matches(KeyType::uint, e)) return false;
      return true;
  }
}

}  // namespace detail

// Validates `doc` for `command`, fills defaults, and returns the config.
// Throws ValidationError listing every problem found.
inline RunConfig validate_config(const std::string& command, const nlohmann::json& doc) {
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end())
    throw ValidationError("unknown command \"" + command + "\"");
  if (!doc.is_object()) throw ValidationError("config: expected a JSON object");
  std::vector<std::string> problems;
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [key, value] : doc.items()) {
    const KeySpec* spec = find_key(key);
    if (!spec || !spec->commands.count(command)) {
      problems.push_back("unknown key \"" + key + "\" for " + command);
      continue;
    }
    if (!detail::type_matches(spec->type, value)) {
      problems.push_back("\"" + key + "\" must be " + detail::type_name(spec->type));
      continue;
    }
    if (!spec->choices.empty() &&
        std::find(spec->choices.begin(), spec->choices.end(), value.get<std::string>()) == spec->choices.end()) {
      std::string list;
      for (const auto& c : spec->choices) list += (list.empty() ? "" : ", ") + c;
      problems.push_back("\"" + key + "\" must be one of " + list);
      continue;
    }
    if (spec->type == KeyType::uint || spec->type == KeyType::real) {
      const double x = value.get<double>();
      if (spec->min && x < *spec->min) problems.push_back("\"" + key + "\" must be >= " + nlohmann::json(*spec->min).dump());
      if (spec->max && x > *spec->max) problems.push_back("\"" + key + "\" must be <= " + nlohmann::json(*spec->max).dump());
    }
    out[key] = value;
  }
  for (const auto& spec : config_schema()) {
    if (!spec.commands.count(command) || out.contains(spec.name)) continue;
    if (spec.required_for.count(command) && !doc.contains(spec.name))
      problems.push_back("missing required key \"" + spec.name + "\"");
    else if (spec.fallback_for.count(command))
      out[spec.name] = spec.fallback_for.at(command);
    else if (!spec.fallback.is_null())
      out[spec.name] = spec.fallback;
  }
  if (!problems.empty()) {
    std::string msg = "invalid " + command + " config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ValidationError(msg);
  }
  return RunConfig(command, out);
}

// Converts a command-line flag value to the JSON type its key expects.
inline nlohmann::json parse_flag_value(const std::string& key, const std::string& text) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ValidationError("unknown key \"" + key + "\"");
  try {
    switch (spec->type) {
      case KeyType::uint: {
        std::size_t pos = 0;
        if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
        const unsigned long long v = std::stoull(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing");
        return v;
      }
      case KeyType::real: {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument("trailing");
        return v;
      }
      case KeyType::boolean:
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw std::invalid_argument("bool");
      case KeyType::text: return text;
      default: {
        nlohmann::json arr = nlohmann::json::array();
        std::size_t start = 0;
        while (start <= text.size()) {
          const std::size_t comma = std::min(text.find(',', start), text.size());
          arr.push_back(parse_flag_value("n", text.substr(start, comma - start)));
          start = comma + 1;
        }
        return arr;
      }
    }
  } catch (const std::logic_error&) {
    throw ValidationError("--" + key + ": \"" + text + "\" is not " + detail::type_name(spec->type));
  }
}

}  // namespace mera
