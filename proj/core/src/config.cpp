#include "nxnflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>

#include "nxnflow/data.hpp"
#include "nxnflow/error.hpp"
#include "nxnflow/verify.hpp"

namespace nxnflow {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': cannot use '" + std::string(value) + "' (expected " +
                    std::string(expected) + ")");
}

template <class T>
T parse_unsigned(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a non-negative integer");
  }
  if (v > std::numeric_limits<T>::max()) bad_value(key, value, "a smaller integer");
  return static_cast<T>(v);
}

double parse_real(std::string_view key, std::string_view value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty() || !std::isfinite(v)) {
    bad_value(key, value, "a finite number");
  }
  return v;
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

template <class T, class Field>
Setter unsigned_field(Field field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { field(c) = parse_unsigned<T>(k, v); };
}

template <class Field>
Setter real_field(Field field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { field(c) = parse_real(k, v); };
}

template <class Field>
Setter string_field(Field field) {
  return [field](RunConfig& c, std::string_view, std::string_view v) { field(c) = std::string(v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"seed", unsigned_field<std::uint64_t>([](RunConfig& c) -> auto& { return c.seed; })},
      {"model.depth_k", unsigned_field<std::size_t>([](RunConfig& c) -> auto& { return c.model.depth; })},
      {"model.levels_l", unsigned_field<std::size_t>([](RunConfig& c) -> auto& { return c.model.levels; })},
      {"model.hidden_width", unsigned_field<std::size_t>([](RunConfig& c) -> auto& { return c.model.hidden; })},
      {"model.mode",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         try {
           c.model.rank = parse_data_rank(v);
         } catch (const ConfigError&) {
           bad_value(k, v, "rank2 or rank4");
         }
       }},
      {"model.inv1x1",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         try {
           c.model.inv1x1 = parse_inv1x1_mode(v);
         } catch (const ConfigError&) {
           bad_value(k, v, "plu or direct");
         }
       }},
      {"data.kind", string_field([](RunConfig& c) -> auto& { return c.data.kind; })},
      {"data.path", string_field([](RunConfig& c) -> auto& { return c.data.path; })},
      {"data.count", unsigned_field<std::size_t>([](RunConfig& c) -> auto& { return c.data.count; })},
      {"data.bits", unsigned_field<std::uint32_t>([](RunConfig& c) -> auto& { return c.data.bits; })},
      {"data.channels", unsigned_field<std::uint32_t>([](RunConfig& c) -> auto& { return c.data.channels; })},
      {"data.height", unsigned_field<std::uint32_t>([](RunConfig& c) -> auto& { return c.data.height; })},
      {"data.width", unsigned_field<std::uint32_t>([](RunConfig& c) -> auto& { return c.data.width; })},
      {"train.batch_size", unsigned_field<std::size_t>([](RunConfig& c) -> auto& { return c.train.batch_size; })},
      {"train.steps", unsigned_field<std::uint64_t>([](RunConfig& c) -> auto& { return c.train.steps; })},
      {"train.lr", real_field([](RunConfig& c) -> auto& { return c.train.adam.lr; })},
      {"train.beta1", real_field([](RunConfig& c) -> auto& { return c.train.adam.beta1; })},
      {"train.beta2", real_field([](RunConfig& c) -> auto& { return c.train.adam.beta2; })},
      {"train.eps", real_field([](RunConfig& c) -> auto& { return c.train.adam.eps; })},
      {"train.clip_norm", real_field([](RunConfig& c) -> auto& { return c.train.clip_norm; })},
      {"train.checkpoint_every",
       unsigned_field<std::uint64_t>([](RunConfig& c) -> auto& { return c.train.checkpoint_every; })},
      {"train.checkpoint", string_field([](RunConfig& c) -> auto& { return c.checkpoint; })},
      {"train.metrics", string_field([](RunConfig& c) -> auto& { return c.metrics; })},
      {"sample.count", unsigned_field<std::size_t>([](RunConfig& c) -> auto& { return c.sample.count; })},
      {"sample.temperature", real_field([](RunConfig& c) -> auto& { return c.sample.temperature; })},
      {"sample.out", string_field([](RunConfig& c) -> auto& { return c.sample.out; })},
      {"eval.out", string_field([](RunConfig& c) -> auto& { return c.eval_out; })},
      {"verify.suite", string_field([](RunConfig& c) -> auto& { return c.verify_suite; })},
      {"verify.out", string_field([](RunConfig& c) -> auto& { return c.verify_out; })},
  };
  return table;
}

const std::set<std::string, std::less<>> kPointKinds = {"eight_gaussians", "two_moons", "checkerboard", "csv"};
const std::set<std::string, std::less<>> kImageKinds = {"textures", "nxni", "ppm"};

}  // namespace

bool DataConfig::is_points() const { return kPointKinds.contains(kind); }
bool DataConfig::is_file() const { return kind == "csv" || kind == "nxni" || kind == "ppm"; }

void RunConfig::validate() const {
  if (!kPointKinds.contains(data.kind) && !kImageKinds.contains(data.kind)) {
    throw ConfigError("config key 'data.kind': unknown kind '" + data.kind +
                      "' (expected eight_gaussians, two_moons, checkerboard, textures, csv, nxni or ppm)");
  }
  const bool points = data.is_points();
  if (points != (model.rank == DataRank::kRank2)) {
    throw ConfigError("config key 'model.mode': data.kind '" + data.kind + "' needs " +
                      (points ? "rank2" : "rank4"));
  }
  if (data.is_file() && data.path.empty()) throw ConfigError("config key 'data.path': required for " + data.kind);
  if (!data.is_file() && data.count == 0) throw ConfigError("config key 'data.count': must be >= 1");
  if (data.bits < 1 || data.bits > 8) throw ConfigError("config key 'data.bits': must be in [1, 8]");
  if (data.channels == 0 || data.height == 0 || data.width == 0) {
    throw ConfigError("config keys 'data.channels/height/width': must be >= 1");
  }
  if (model.depth > 4096) throw ConfigError("config key 'model.depth_k': too large");
  if (model.levels == 0) throw ConfigError("config key 'model.levels_l': must be >= 1");
  if (model.hidden == 0) throw ConfigError("config key 'model.hidden_width': must be >= 1");
  if (!(sample.temperature > 0.0)) throw ConfigError("config key 'sample.temperature': must be > 0");
  if (checkpoint.empty()) throw ConfigError("config key 'train.checkpoint': must not be empty");
  verify::parse_suite(verify_suite);
  train.validate();
}

KeyValues parse_config_text(std::string_view text) {
  KeyValues out;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key + "' repeated");
    }
    out.emplace_back(key, value);
  }
  return out;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(config, key, value);
}

void apply_settings(RunConfig& config, const KeyValues& settings) {
  for (const auto& [k, v] : settings) apply_setting(config, k, v);
}

std::pair<std::string, std::string> parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(text) + "' must look like key=value");
  }
  return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

RunConfig load_run_config(const std::filesystem::path& path, const KeyValues& overrides) {
  RunConfig config;
  KeyValues file_settings;
  if (!path.empty()) {
    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_file(path);
    } catch (const Error& e) {
      throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    file_settings = parse_config_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  apply_settings(config, file_settings);
  apply_settings(config, overrides);

  // Unless given, the data rank follows the data kind, and point data gets a single level.
  const auto given = [&](std::string_view key) {
    const auto has = [&](const KeyValues& kv) {
      return std::any_of(kv.begin(), kv.end(), [&](const auto& p) { return p.first == key; });
    };
    return has(file_settings) || has(overrides);
  };
  if (!given("model.mode")) {
    config.model.rank = config.data.is_points() ? DataRank::kRank2 : DataRank::kRank4;
    if (config.data.is_points() && !given("model.levels_l")) config.model.levels = 1;
  }
  return config;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

}  // namespace nxnflow
