#include "gcagc/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gcagc/error.hpp"

namespace gcagc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

std::string str(std::size_t v) { return std::to_string(v); }

// Shortest form that parses back to the same double.
std::string str(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

#define COUNT_FIELD(expr)                                                                  \
  Field {                                                                                  \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = to_count(k, v); }, \
        [](const RunConfig& c) { return str(c.expr); }                                     \
  }
#define REAL_FIELD(expr)                                                                  \
  Field {                                                                                 \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = to_real(k, v); }, \
        [](const RunConfig& c) { return str(c.expr); }                                    \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"encoder.input_size", COUNT_FIELD(model.encoder.input_size)},
      {"encoder.stage_channels",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          std::stringstream ss(v);
          std::string part;
          std::vector<std::size_t> vals;
          while (std::getline(ss, part, ',')) vals.push_back(to_count(k, trim(part)));
          if (vals.size() != 3) throw ConfigError(k + ": expected three comma-separated widths");
          for (int i = 0; i < 3; ++i) c.model.encoder.stage_channels[i] = vals[i];
        },
        [](const RunConfig& c) {
          const auto& s = c.model.encoder.stage_channels;
          return str(s[0]) + ", " + str(s[1]) + ", " + str(s[2]);
        }}},
      {"encoder.fpn_channels", COUNT_FIELD(model.encoder.fpn_channels)},
      {"encoder.graph_stride", COUNT_FIELD(model.encoder.graph_stride)},
      {"agcn.rank", COUNT_FIELD(model.agcn.rank)},
      {"agcn.hidden", COUNT_FIELD(model.agcn.hidden)},
      {"agcn.out", COUNT_FIELD(model.agcn.out)},
      {"agcn.block_rows", COUNT_FIELD(model.agcn.block_rows)},
      {"agcm.solver_steps", COUNT_FIELD(model.agcm.solver_steps)},
      {"agcm.step_size", REAL_FIELD(model.agcm.step_size)},
      {"agcm.epsilon", REAL_FIELD(model.agcm.epsilon)},
      {"loss.lambda", REAL_FIELD(model.lambda)},
      {"loss.weighting",
       {[](RunConfig& c, const std::string&, const std::string& v) {
          c.model.weighting = parse_loss_weighting(v);
        },
        [](const RunConfig& c) { return to_string(c.model.weighting); }}},
      {"train.seed", COUNT_FIELD(train.seed)},
      {"train.steps", COUNT_FIELD(train.steps)},
      {"train.lr", REAL_FIELD(train.lr.base)},
      {"train.lr_period", COUNT_FIELD(train.lr.period)},
      {"train.weight_decay", REAL_FIELD(train.adam.weight_decay)},
      {"train.beta1", REAL_FIELD(train.adam.beta1)},
      {"train.beta2", REAL_FIELD(train.adam.beta2)},
      {"train.eps", REAL_FIELD(train.adam.eps)},
      {"train.checkpoint_every", COUNT_FIELD(train.checkpoint_every)},
      {"data.group_size", COUNT_FIELD(group_size)},
  };
  return table;
}

#undef COUNT_FIELD
#undef REAL_FIELD

}  // namespace

std::vector<IniEntry> parse_ini(const std::string& text, const std::string& source) {
  std::vector<IniEntry> out;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    IniEntry e{section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
    if (e.key.empty()) throw ConfigError(where + ": missing key");
    out.push_back(std::move(e));
  }
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& section, const std::string& key,
                   const std::string& value) {
  const std::string full = section + "." + key;
  auto it = fields().find(full);
  if (it == fields().end()) throw ConfigError("unknown configuration key '" + full + "'");
  it->second.set(cfg, full, value);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  }
  apply_setting(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
                trim(assignment.substr(eq + 1)));
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  for (const auto& e : parse_ini(ss.str(), path.string())) {
    try {
      apply_setting(cfg, e.section, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(path.string() + ":" + std::to_string(e.line) + ": " + err.what());
    }
  }
  return cfg;
}

std::string format_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  std::string current;
  for (const auto& [name, field] : fields()) {
    const auto dot = name.find('.');
    const std::string section = name.substr(0, dot);
    if (section != current) {
      if (!current.empty()) os << '\n';
      os << '[' << section << "]\n";
      current = section;
    }
    os << name.substr(dot + 1) << " = " << field.get(cfg) << '\n';
  }
  return os.str();
}

}  // namespace gcagc
