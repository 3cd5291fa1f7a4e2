#include "flood/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "flood/errors.hpp"

namespace flood {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ValidationError("config key '" + std::string(key) + "': expected " + std::string(want) + ", got '" +
                        std::string(value) + "'");
}

template <typename T>
T parse_int(std::string_view key, std::string_view value, T lo, T hi) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  if (out < lo || out > hi) {
    throw ValidationError("config key '" + std::string(key) + "' = " + std::string(value) + " is out of range [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(out)) {
    bad_value(key, value, "a finite number");
  }
  return out;
}

double parse_real_in(std::string_view key, std::string_view value, double lo, double hi, bool open_lo = false,
                     bool open_hi = false) {
  const double v = parse_real(key, value);
  const bool ok = (open_lo ? v > lo : v >= lo) && (open_hi ? v < hi : v <= hi);
  if (!ok) {
    std::ostringstream os;
    os << "config key '" << key << "' = " << value << " is out of range " << (open_lo ? '(' : '[') << lo << ", " << hi
       << (open_hi ? ')' : ']');
    throw ValidationError(os.str());
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

fs::path resolve(const fs::path& base, std::string_view value) {
  fs::path p{std::string(value)};
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "manifest",  "out_dir",      "resume",           "seed",       "max_epochs", "batch_size", "lr_init",
      "lr_floor",  "plateau_factor", "plateau_patience", "min_delta", "alpha",      "gamma",      "smooth",
      "input_size", "widths",      "reduction",        "clip_vv",    "clip_vh",    "threshold",  "threads",
      "augment"};
  return keys;
}

std::pair<float, float> parse_range(std::string_view text, std::string_view key) {
  const auto comma = text.find(',');
  if (comma == std::string_view::npos) bad_value(key, text, "lo,hi");
  const double lo = parse_real(key, trim(text.substr(0, comma)));
  const double hi = parse_real(key, trim(text.substr(comma + 1)));
  if (!(lo < hi)) bad_value(key, text, "lo < hi");
  return {static_cast<float>(lo), static_cast<float>(hi)};
}

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir) {
  const auto& known = run_config_keys();
  std::map<std::string, std::string, std::less<>> values;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (value.empty()) throw ValidationError("config key '" + key + "' has no value");
    if (!values.emplace(key, std::string(value)).second) {
      throw ValidationError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }

  for (const char* required : {"manifest", "out_dir"}) {
    if (!values.contains(required)) throw ValidationError(std::string("config is missing required key '") + required + "'");
  }

  RunConfig rc;
  TrainConfig& t = rc.train;
  for (const auto& [key, value] : values) {
    if (key == "manifest") {
      rc.manifest = resolve(base_dir, value);
    } else if (key == "out_dir") {
      rc.out_dir = resolve(base_dir, value);
    } else if (key == "resume") {
      rc.resume = resolve(base_dir, value);
    } else if (key == "seed") {
      t.seed = parse_int<std::uint64_t>(key, value, 0, UINT64_MAX);
    } else if (key == "max_epochs") {
      t.max_epochs = parse_int<std::uint32_t>(key, value, 0, 100000);
    } else if (key == "batch_size") {
      t.batch_size = parse_int<std::uint32_t>(key, value, 1, 4096);
    } else if (key == "lr_init") {
      t.schedule.lr_init = parse_real_in(key, value, 0.0, 1.0, true);
    } else if (key == "lr_floor") {
      t.schedule.lr_floor = parse_real_in(key, value, 0.0, 1.0, true);
    } else if (key == "plateau_factor") {
      t.schedule.factor = parse_real_in(key, value, 0.0, 1.0, true, true);
    } else if (key == "plateau_patience") {
      t.schedule.patience = parse_int<std::uint32_t>(key, value, 1, 100000);
    } else if (key == "min_delta") {
      t.schedule.min_delta = parse_real_in(key, value, 0.0, 1.0);
    } else if (key == "alpha") {
      t.loss.alpha = static_cast<float>(parse_real_in(key, value, 0.0, 1.0));
    } else if (key == "gamma") {
      t.loss.gamma = static_cast<float>(parse_real_in(key, value, 0.0, 10.0));
    } else if (key == "smooth") {
      t.loss.smooth = static_cast<float>(parse_real_in(key, value, 0.0, 1e6, true));
    } else if (key == "input_size") {
      t.model.input_size = parse_int<std::uint32_t>(key, value, 16, 8192);
    } else if (key == "widths") {
      std::istringstream ws(value);
      std::string item;
      std::size_t i = 0;
      while (std::getline(ws, item, ',')) {
        if (i >= 4) bad_value(key, value, "four comma-separated widths");
        t.model.widths[i++] = parse_int<std::uint32_t>(key, trim(item), 1, 4096);
      }
      if (i != 4) bad_value(key, value, "four comma-separated widths");
    } else if (key == "reduction") {
      t.model.reduction = parse_int<std::uint32_t>(key, value, 1, 4096);
    } else if (key == "clip_vv") {
      std::tie(t.clip.vv_lo, t.clip.vv_hi) = parse_range(value, key);
    } else if (key == "clip_vh") {
      std::tie(t.clip.vh_lo, t.clip.vh_hi) = parse_range(value, key);
    } else if (key == "threshold") {
      t.threshold = static_cast<float>(parse_real_in(key, value, 0.0, 1.0, true, true));
    } else if (key == "threads") {
      t.threads = parse_int<int>(key, value, 1, 1024);
    } else if (key == "augment") {
      t.augment = parse_bool(key, value);
    }
  }
  t.validate();
  return rc;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

}  // namespace flood
