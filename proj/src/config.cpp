#include "pdmp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace pdmp {

namespace {

struct Value {
  enum class Kind { Number, String, Bool, List } kind = Kind::Number;
  std::string raw;                 // numbers: the literal text
  double number = 0.0;
  std::string text;                // strings
  bool flag = false;
  std::vector<Value> items;        // lists
};

const char* kind_name(Value::Kind k) {
  switch (k) {
    case Value::Kind::Number: return "a number";
    case Value::Kind::String: return "a string";
    case Value::Kind::Bool: return "a boolean";
    case Value::Kind::List: return "a list";
  }
  return "?";
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Drops a trailing '#' comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    if (line[k] == '"' && (k == 0 || line[k - 1] != '\\')) quoted = !quoted;
    if (line[k] == '#' && !quoted) return line.substr(0, k);
  }
  return line;
}

std::optional<Value> parse_scalar(const std::string& text, std::string& error) {
  Value v;
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    v.kind = Value::Kind::String;
    for (std::size_t k = 1; k + 1 < text.size(); ++k) {
      if (text[k] == '\\' && k + 2 < text.size()) ++k;
      else if (text[k] == '"') {
        error = "unexpected quote inside string";
        return std::nullopt;
      }
      v.text.push_back(text[k]);
    }
    return v;
  }
  if (text == "true" || text == "false") {
    v.kind = Value::Kind::Bool;
    v.flag = text == "true";
    return v;
  }
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v.number);
  if (text.empty() || ec != std::errc() || ptr != end) {
    error = fmt::format("cannot parse value '{}' (expected a number, \"string\", true/false or [list])", text);
    return std::nullopt;
  }
  v.raw = text;
  return v;
}

std::optional<Value> parse_value(const std::string& text, std::string& error) {
  if (text.empty()) {
    error = "missing value";
    return std::nullopt;
  }
  if (text.front() != '[') return parse_scalar(text, error);
  if (text.back() != ']') {
    error = "list is missing its closing ']'";
    return std::nullopt;
  }
  Value list;
  list.kind = Value::Kind::List;
  const std::string body = trim(text.substr(1, text.size() - 2));
  if (body.empty()) return list;
  std::string item;
  bool quoted = false;
  auto flush = [&]() -> bool {
    auto v = parse_scalar(trim(item), error);
    if (!v) return false;
    list.items.push_back(std::move(*v));
    item.clear();
    return true;
  };
  for (char ch : body) {
    if (ch == '"') quoted = !quoted;
    if (ch == ',' && !quoted) {
      if (!flush()) return std::nullopt;
    } else {
      item.push_back(ch);
    }
  }
  if (!flush()) return std::nullopt;
  return list;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  return out + "\"";
}

std::string num(double x) { return fmt::format("{:.17g}", x); }

std::string num_list(const std::vector<double>& xs) {
  std::vector<std::string> parts;
  for (double x : xs) parts.push_back(num(x));
  return fmt::format("[{}]", fmt::join(parts, ", "));
}

using Setter = std::function<std::optional<std::string>(ExperimentConfig&, const Value&)>;
using Getter = std::function<std::optional<std::string>(const ExperimentConfig&)>;

struct Field {
  std::string section;  // "" for top level
  std::string key;
  Setter set;
  Getter get;  // nullopt: omit from render
};

std::optional<std::string> expect(const Value& v, Value::Kind kind, const std::string& key) {
  if (v.kind == kind) return std::nullopt;
  return fmt::format("type mismatch: {} expects {}, found {}", key, kind_name(kind), kind_name(v.kind));
}

template <typename Int>
Field integer(std::string section, std::string key, Int ExperimentConfig::*member, Int min) {
  return {section, key,
          [member, min, key](ExperimentConfig& c, const Value& v) -> std::optional<std::string> {
            if (auto e = expect(v, Value::Kind::Number, key)) return e;
            Int out{};
            const auto* end = v.raw.data() + v.raw.size();
            const auto [ptr, ec] = std::from_chars(v.raw.data(), end, out);
            if (!v.raw.empty() && v.raw.front() == '-') return fmt::format("{} must be >= {}", key, min);
            if (ec != std::errc() || ptr != end) return fmt::format("type mismatch: {} must be an integer", key);
            if (out < min) return fmt::format("{} must be >= {}", key, min);
            c.*member = out;
            return std::nullopt;
          },
          [member](const ExperimentConfig& c) -> std::optional<std::string> { return fmt::format("{}", c.*member); }};
}

Field real(std::string section, std::string key, double ExperimentConfig::*member,
           std::function<bool(double)> ok, std::string requirement) {
  return {section, key,
          [member, ok, key, requirement](ExperimentConfig& c, const Value& v) -> std::optional<std::string> {
            if (auto e = expect(v, Value::Kind::Number, key)) return e;
            if (!std::isfinite(v.number) || !ok(v.number)) return fmt::format("{} must be {}", key, requirement);
            c.*member = v.number;
            return std::nullopt;
          },
          [member](const ExperimentConfig& c) -> std::optional<std::string> { return num(c.*member); }};
}

Field optional_real(std::string section, std::string key, std::optional<double> ExperimentConfig::*member) {
  return {section, key,
          [member, key](ExperimentConfig& c, const Value& v) -> std::optional<std::string> {
            if (auto e = expect(v, Value::Kind::Number, key)) return e;
            c.*member = v.number;
            return std::nullopt;
          },
          [member](const ExperimentConfig& c) -> std::optional<std::string> {
            if (!(c.*member)) return std::nullopt;
            return num(*(c.*member));
          }};
}

Field text(std::string section, std::string key, std::string ExperimentConfig::*member,
           std::vector<std::string> choices = {}) {
  return {section, key,
          [member, choices, key](ExperimentConfig& c, const Value& v) -> std::optional<std::string> {
            if (auto e = expect(v, Value::Kind::String, key)) return e;
            if (!choices.empty() && std::find(choices.begin(), choices.end(), v.text) == choices.end()) {
              return fmt::format("{} must be one of: {}", key, fmt::join(choices, ", "));
            }
            c.*member = v.text;
            return std::nullopt;
          },
          [member](const ExperimentConfig& c) -> std::optional<std::string> { return quote(c.*member); }};
}

Field numbers(std::string section, std::string key, std::vector<double> ExperimentConfig::*member) {
  return {section, key,
          [member, key](ExperimentConfig& c, const Value& v) -> std::optional<std::string> {
            if (auto e = expect(v, Value::Kind::List, key)) return e;
            std::vector<double> out;
            for (const auto& item : v.items) {
              if (item.kind != Value::Kind::Number) return fmt::format("type mismatch: {} expects a list of numbers", key);
              out.push_back(item.number);
            }
            c.*member = std::move(out);
            return std::nullopt;
          },
          [member](const ExperimentConfig& c) -> std::optional<std::string> { return num_list(c.*member); }};
}

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names{"rank", "positivity", "accessibility", "small-set", "hypotheses",
                                              "anchors"};
  return names;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(integer<std::uint64_t>("", "seed", &ExperimentConfig::seed, 0));
    f.push_back(numbers("simulation", "init", &ExperimentConfig::init));
    f.push_back(integer<int>("simulation", "init_mode", &ExperimentConfig::init_mode, 1));
    f.push_back(integer<std::size_t>("simulation", "n_traj", &ExperimentConfig::n_traj, 1));
    f.push_back(integer<std::size_t>("simulation", "n_steps", &ExperimentConfig::n_steps, 1));
    f.push_back(integer<std::size_t>("simulation", "burn_in", &ExperimentConfig::burn_in, 0));
    f.push_back(integer<std::size_t>("simulation", "n_keep", &ExperimentConfig::n_keep, 1));
    f.push_back(integer<std::size_t>("simulation", "thin", &ExperimentConfig::thin, 1));
    f.push_back(real("metric", "c", &ExperimentConfig::c, [](double x) { return x > 0; }, "> 0"));
    f.push_back(integer<int>("rate", "n_max", &ExperimentConfig::rate_n_max, 4));
    f.push_back(integer<std::size_t>("rate", "n_rep", &ExperimentConfig::rate_n_rep, 2));
    f.push_back(integer<std::size_t>("rate", "n_boot", &ExperimentConfig::rate_n_boot, 1));
    f.push_back(integer<std::size_t>("correspond", "n_boot", &ExperimentConfig::correspond_n_boot, 1));
    f.push_back({"diagnose", "checks",
                 [](ExperimentConfig& c, const Value& v) -> std::optional<std::string> {
                   if (auto e = expect(v, Value::Kind::List, "checks")) return e;
                   std::vector<std::string> out;
                   for (const auto& item : v.items) {
                     const auto& names = check_names();
                     if (item.kind != Value::Kind::String ||
                         std::find(names.begin(), names.end(), item.text) == names.end()) {
                       return fmt::format("checks must be names from: {}", fmt::join(names, ", "));
                     }
                     out.push_back(item.text);
                   }
                   c.checks = std::move(out);
                   return std::nullopt;
                 },
                 [](const ExperimentConfig& c) -> std::optional<std::string> {
                   std::vector<std::string> parts;
                   for (const auto& s : c.checks) parts.push_back(quote(s));
                   return fmt::format("[{}]", fmt::join(parts, ", "));
                 }});
    f.push_back(numbers("diagnose", "y_hat", &ExperimentConfig::y_hat));
    f.push_back(integer<int>("diagnose", "mode", &ExperimentConfig::anchor_mode, 1));
    f.push_back(numbers("diagnose", "path_modes", &ExperimentConfig::path_modes));
    f.push_back(numbers("diagnose", "path_times", &ExperimentConfig::path_times));
    f.push_back(numbers("diagnose", "path_thetas", &ExperimentConfig::path_thetas));
    f.push_back(real("diagnose", "fd_step", &ExperimentConfig::fd_step, [](double x) { return x >= 0; }, ">= 0"));
    f.push_back(real("diagnose", "svd_rtol", &ExperimentConfig::svd_rtol, [](double x) { return x > 0; }, "> 0"));
    f.push_back(real("diagnose", "radius", &ExperimentConfig::radius, [](double x) { return x > 0; }, "> 0"));
    f.push_back(numbers("diagnose", "starts", &ExperimentConfig::starts));
    f.push_back(numbers("diagnose", "start_modes", &ExperimentConfig::start_modes));
    f.push_back(integer<int>("diagnose", "n_max", &ExperimentConfig::access_n_max, 1));
    f.push_back(integer<int>("diagnose", "attempts", &ExperimentConfig::access_attempts, 1));
    f.push_back(real("diagnose", "t_max", &ExperimentConfig::access_t_max, [](double x) { return x > 0; }, "> 0"));
    f.push_back(integer<int>("diagnose", "small_set_n", &ExperimentConfig::small_set_n, 1));
    f.push_back(integer<std::size_t>("diagnose", "n_mc", &ExperimentConfig::small_set_n_mc, 1000));
    f.push_back(integer<std::size_t>("diagnose", "n_pairs", &ExperimentConfig::n_pairs, 1));
    f.push_back(optional_real("constants", "alpha", &ExperimentConfig::alpha));
    f.push_back(optional_real("constants", "L", &ExperimentConfig::L));
    f.push_back(optional_real("constants", "L_w", &ExperimentConfig::L_w));
    f.push_back(optional_real("constants", "L_p", &ExperimentConfig::L_p));
    f.push_back(optional_real("constants", "c_pi", &ExperimentConfig::c_pi));
    f.push_back(optional_real("constants", "c_p", &ExperimentConfig::c_p));
    f.push_back(text("output", "dir", &ExperimentConfig::out_dir));
    f.push_back(text("output", "format", &ExperimentConfig::format, {"csv", "json"}));
    f.push_back(integer<int>("output", "workers", &ExperimentConfig::workers, 1));
    return f;
  }();
  return table;
}

const std::vector<std::string>& sections() {
  static const std::vector<std::string> names{"model",      "simulation", "metric",    "rate",
                                              "correspond", "diagnose",   "constants", "output"};
  return names;
}

}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : PreconditionError([&] {
        std::vector<std::string> lines;
        for (const auto& i : issues) {
          lines.push_back(i.line > 0 ? fmt::format("line {}: {}", i.line, i.message) : i.message);
        }
        return fmt::format("{}", fmt::join(lines, "\n"));
      }()),
      issues_(std::move(issues)) {}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::vector<ConfigIssue> issues;
  std::map<std::string, std::size_t> seen;  // "section.key" -> line
  struct ModelEntry {
    std::size_t line;
    std::string key;
    Value value;
  };
  std::vector<ModelEntry> model_entries;
  std::optional<std::size_t> name_line;
  bool have_seed = false;

  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        issues.push_back({line_no, "section header is missing its closing ']'"});
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      const auto& known = sections();
      if (std::find(known.begin(), known.end(), section) == known.end()) {
        issues.push_back({line_no, fmt::format("unknown section [{}]", section)});
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      issues.push_back({line_no, "expected 'key = value'"});
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    if (const auto it = seen.find(full); it != seen.end()) {
      issues.push_back({line_no, fmt::format("duplicate key '{}' (first set on line {}, again on line {})", full,
                                             it->second, line_no)});
      continue;
    }
    seen[full] = line_no;
    std::string error;
    const auto value = parse_value(trim(line.substr(eq + 1)), error);
    if (!value) {
      issues.push_back({line_no, fmt::format("{}: {}", full, error)});
      continue;
    }

    if (section == "model") {
      if (key == "name") {
        name_line = line_no;
        if (auto e = expect(*value, Value::Kind::String, "name")) {
          issues.push_back({line_no, fmt::format("model.name: {}", *e)});
        } else {
          config.model = value->text;
        }
      } else {
        model_entries.push_back({line_no, key, *value});
      }
      continue;
    }
    const auto& table = fields();
    const auto field = std::find_if(table.begin(), table.end(),
                                    [&](const Field& f) { return f.section == section && f.key == key; });
    if (field == table.end()) {
      issues.push_back({line_no, fmt::format("unknown key '{}'", full)});
      continue;
    }
    if (auto e = field->set(config, *value)) {
      issues.push_back({line_no, *e});
      continue;
    }
    have_seed |= full == "seed";
  }

  if (!have_seed && seen.find("seed") == seen.end()) issues.push_back({0, "missing required key 'seed'"});
  if (!name_line) {
    issues.push_back({0, "missing required key 'name' in section [model]"});
  } else if (!config.model.empty()) {
    try {
      builtin_model_params(config.model);
      for (const auto& entry : model_entries) {
        ParamValue value;
        if (entry.value.kind == Value::Kind::Number) {
          value = entry.value.number;
        } else if (entry.value.kind == Value::Kind::String) {
          value = entry.value.text;
        } else {
          issues.push_back({entry.line, fmt::format("type mismatch: model parameter '{}' must be a number or string",
                                                    entry.key)});
          continue;
        }
        if (auto e = validate_model_param(config.model, entry.key, value)) {
          issues.push_back({entry.line, *e});
          continue;
        }
        config.params[entry.key] = value;
      }
    } catch (const PreconditionError& e) {
      issues.push_back({*name_line, e.what()});
    }
  }

  if (!config.path_modes.empty() || !config.path_times.empty() || !config.path_thetas.empty()) {
    if (config.path_modes.size() != config.path_times.size() || config.path_thetas.size() != config.path_times.size()) {
      issues.push_back({seen.count("diagnose.path_times") ? seen["diagnose.path_times"] : 0,
                        "path_modes, path_times and path_thetas must have equal lengths"});
    }
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({{0, fmt::format("cannot open config file '{}'", path)}});
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string render(const ExperimentConfig& config) {
  std::string out;
  std::string current = "";
  for (const auto& f : fields()) {
    if (f.section != current) {
      if (current.empty()) {
        out += fmt::format("\n[model]\nname = {}\n", quote(config.model));
        for (const auto& [key, value] : config.params) {
          const auto* number = std::get_if<double>(&value);
          out += fmt::format("{} = {}\n", key, number ? num(*number) : quote(std::get<std::string>(value)));
        }
      }
      current = f.section;
      out += fmt::format("\n[{}]\n", current);
    }
    if (auto value = f.get(config)) out += fmt::format("{} = {}\n", f.key, *value);
  }
  return out;
}

PdmpModel make_model(const ExperimentConfig& config) { return builtin_model(config.model, config.params); }

}  // namespace pdmp
