#include "pipeline_config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ipr/errors.hpp"
#include "ipr/io_util.hpp"

namespace ipr::tools {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Strips a trailing comment; '#' inside a quoted string does not count.
std::string strip_comment(const std::string& line) {
  bool in_quotes = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quotes = !in_quotes;
    else if (line[i] == '#' && !in_quotes) return line.substr(0, i);
  }
  return line;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("config key " + key + ": cannot parse \"" + value + "\" as " + expected);
}

long long parse_int(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0') bad_value(key, value, "an integer");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0' || value.find('-') != std::string::npos)
    bad_value(key, value, "a non-negative integer");
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0' || !std::isfinite(v))
    bad_value(key, value, "a finite number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value, "true or false");
}

std::string parse_string(const std::string& key, const std::string& value) {
  if (value.size() < 2 || value.front() != '"' || value.back() != '"')
    bad_value(key, value, "a quoted string");
  return value.substr(1, value.size() - 2);
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) bad_value(key, value, "a comma-separated number list");
  return out;
}

}  // namespace

void PipelineConfig::apply_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
}

void PipelineConfig::validate() const {
  if (scan.azimuths < 1) throw ConfigError("scan.azimuths must be >= 1");
  if (scan.bins < 1) throw ConfigError("scan.bins must be >= 1");
  if (scan.bin_size <= 0.0) throw ConfigError("scan.bin_size must be > 0");
  if (scan.cartesian_w < 2 || scan.cartesian_w % 2 != 0)
    throw ConfigError("scan.cartesian_w must be even and >= 2");
  if (scan.cell_size <= 0.0) throw ConfigError("scan.cell_size must be > 0");

  noise.validate();

  if (synth.landmarks < 0) throw ConfigError("synth.landmarks must be >= 0");
  if (synth.extent <= 0.0) throw ConfigError("synth.extent must be > 0");
  if (synth.route != "loop" && synth.route != "line")
    throw ConfigError("synth.route must be \"loop\" or \"line\"");
  if (synth.frames < 1) throw ConfigError("synth.frames must be >= 1");
  if (synth.spacing <= 0.0) throw ConfigError("synth.spacing must be > 0");
  if (synth.traversals < 1) throw ConfigError("synth.traversals must be >= 1");
  if (synth.noise_scales.size() != 1 &&
      synth.noise_scales.size() != static_cast<size_t>(synth.traversals))
    throw ConfigError("synth.noise_scales must hold 1 value or one per traversal");
  for (double s : synth.noise_scales)
    if (s < 0.0) throw ConfigError("synth.noise_scales entries must be >= 0");

  if (model.input_w != scan.cartesian_w)
    throw ConfigError("model input width must equal scan.cartesian_w");
  model.validate();
  train.validate();

  if (map.match_threshold <= 0.0) throw ConfigError("map.match_threshold must be > 0");
  if (query.k < 1) throw ConfigError("query.k must be >= 1");
  if (!std::isfinite(query.threshold)) throw ConfigError("query.threshold must be finite");
  if (eval.positive_radius <= 0.0) throw ConfigError("eval.positive_radius must be > 0");
  if (!(eval.positive_radius < eval.negative_radius))
    throw ConfigError("eval.positive_radius must be < eval.negative_radius");
  if (eval.delta <= 0.0) throw ConfigError("eval.delta must be > 0");
  if (eval.nlevels < 1) throw ConfigError("eval.nlevels must be >= 1");
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) + ": malformed section");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "run" && section != "scan" && section != "noise" &&
          section != "synth" && section != "model" && section != "train" &&
          section != "map" && section != "query" && section != "eval")
        throw ConfigError("unknown config section: [" + section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;
    if (section.empty())
      throw ConfigError("config key " + key + " appears before any section");

    bool known = true;
    if (section == "run") {
      if (key == "seed") cfg.apply_seed(parse_u64(qual, value));
      else known = false;
    } else if (section == "scan") {
      if (key == "azimuths") cfg.scan.azimuths = static_cast<int>(parse_int(qual, value));
      else if (key == "bins") cfg.scan.bins = static_cast<int>(parse_int(qual, value));
      else if (key == "bin_size") cfg.scan.bin_size = parse_double(qual, value);
      else if (key == "cartesian_w")
        cfg.scan.cartesian_w = static_cast<int>(parse_int(qual, value));
      else if (key == "cell_size") cfg.scan.cell_size = parse_double(qual, value);
      else known = false;
    } else if (section == "noise") {
      if (key == "speckle_sigma") cfg.noise.speckle_sigma = parse_double(qual, value);
      else if (key == "saturation_prob") cfg.noise.saturation_prob = parse_double(qual, value);
      else if (key == "occlusion_sectors")
        cfg.noise.occlusion_sectors = static_cast<int>(parse_int(qual, value));
      else if (key == "occlusion_width") cfg.noise.occlusion_width = parse_double(qual, value);
      else if (key == "blur_azimuths")
        cfg.noise.blur_azimuths = static_cast<int>(parse_int(qual, value));
      else known = false;
    } else if (section == "synth") {
      if (key == "landmarks") cfg.synth.landmarks = static_cast<int>(parse_int(qual, value));
      else if (key == "extent") cfg.synth.extent = parse_double(qual, value);
      else if (key == "route") cfg.synth.route = parse_string(qual, value);
      else if (key == "route_x") cfg.synth.route_x = parse_double(qual, value);
      else if (key == "route_y") cfg.synth.route_y = parse_double(qual, value);
      else if (key == "route_param") cfg.synth.route_param = parse_double(qual, value);
      else if (key == "frames") cfg.synth.frames = static_cast<int>(parse_int(qual, value));
      else if (key == "spacing") cfg.synth.spacing = parse_double(qual, value);
      else if (key == "traversals")
        cfg.synth.traversals = static_cast<int>(parse_int(qual, value));
      else if (key == "noise_scales") cfg.synth.noise_scales = parse_double_list(qual, value);
      else known = false;
    } else if (section == "model") {
      if (key == "c1") cfg.model.c1 = static_cast<int>(parse_int(qual, value));
      else if (key == "c2") cfg.model.c2 = static_cast<int>(parse_int(qual, value));
      else if (key == "pool") cfg.model.pool = static_cast<int>(parse_int(qual, value));
      else if (key == "d") cfg.model.d = static_cast<int>(parse_int(qual, value));
      else if (key == "f") cfg.model.f = static_cast<int>(parse_int(qual, value));
      else known = false;
    } else if (section == "train") {
      if (key == "learning_rate") cfg.train.learning_rate = parse_double(qual, value);
      else if (key == "batch_size")
        cfg.train.batch_size = static_cast<int>(parse_int(qual, value));
      else if (key == "temperature") cfg.train.temperature = parse_double(qual, value);
      else if (key == "negative_margin")
        cfg.train.negative_margin = parse_double(qual, value);
      else if (key == "epochs") cfg.train.epochs = static_cast<int>(parse_int(qual, value));
      else if (key == "w_inv") cfg.train.w_inv = parse_double(qual, value);
      else if (key == "w_var") cfg.train.w_var = parse_double(qual, value);
      else if (key == "w_kl") cfg.train.w_kl = parse_double(qual, value);
      else if (key == "w_rec") cfg.train.w_rec = parse_double(qual, value);
      else if (key == "temporal_window")
        cfg.train.temporal_window = static_cast<int>(parse_int(qual, value));
      else if (key == "rotate_random") cfg.train.rotate_random = parse_bool(qual, value);
      else if (key == "rotate_fixed_angle")
        cfg.train.rotate_fixed_angle = parse_double(qual, value);
      else known = false;
    } else if (section == "map") {
      if (key == "match_threshold") cfg.map.match_threshold = parse_double(qual, value);
      else if (key == "alg1_literal") cfg.map.alg1_literal = parse_bool(qual, value);
      else known = false;
    } else if (section == "query") {
      if (key == "k") cfg.query.k = static_cast<int>(parse_int(qual, value));
      else if (key == "threshold") cfg.query.threshold = parse_double(qual, value);
      else known = false;
    } else if (section == "eval") {
      if (key == "positive_radius") cfg.eval.positive_radius = parse_double(qual, value);
      else if (key == "negative_radius") cfg.eval.negative_radius = parse_double(qual, value);
      else if (key == "delta") cfg.eval.delta = parse_double(qual, value);
      else if (key == "nlevels") cfg.eval.nlevels = static_cast<int>(parse_int(qual, value));
      else known = false;
    }
    if (!known) throw ConfigError("unknown config key: " + qual);
  }

  cfg.model.input_w = cfg.scan.cartesian_w;
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string emit_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  const auto num = [](double v) { return io::fmt_double(v); };
  out << "[run]\n";
  out << "seed = " << cfg.seed << "\n\n";
  out << "[scan]\n";
  out << "azimuths = " << cfg.scan.azimuths << '\n';
  out << "bins = " << cfg.scan.bins << '\n';
  out << "bin_size = " << num(cfg.scan.bin_size) << '\n';
  out << "cartesian_w = " << cfg.scan.cartesian_w << '\n';
  out << "cell_size = " << num(cfg.scan.cell_size) << "\n\n";
  out << "[noise]\n";
  out << "speckle_sigma = " << num(cfg.noise.speckle_sigma) << '\n';
  out << "saturation_prob = " << num(cfg.noise.saturation_prob) << '\n';
  out << "occlusion_sectors = " << cfg.noise.occlusion_sectors << '\n';
  out << "occlusion_width = " << num(cfg.noise.occlusion_width) << '\n';
  out << "blur_azimuths = " << cfg.noise.blur_azimuths << "\n\n";
  out << "[synth]\n";
  out << "landmarks = " << cfg.synth.landmarks << '\n';
  out << "extent = " << num(cfg.synth.extent) << '\n';
  out << "route = \"" << cfg.synth.route << "\"\n";
  out << "route_x = " << num(cfg.synth.route_x) << '\n';
  out << "route_y = " << num(cfg.synth.route_y) << '\n';
  out << "route_param = " << num(cfg.synth.route_param) << '\n';
  out << "frames = " << cfg.synth.frames << '\n';
  out << "spacing = " << num(cfg.synth.spacing) << '\n';
  out << "traversals = " << cfg.synth.traversals << '\n';
  out << "noise_scales = ";
  for (size_t i = 0; i < cfg.synth.noise_scales.size(); ++i)
    out << (i ? "," : "") << num(cfg.synth.noise_scales[i]);
  out << "\n\n";
  out << "[model]\n";
  out << "c1 = " << cfg.model.c1 << '\n';
  out << "c2 = " << cfg.model.c2 << '\n';
  out << "pool = " << cfg.model.pool << '\n';
  out << "d = " << cfg.model.d << '\n';
  out << "f = " << cfg.model.f << "\n\n";
  out << "[train]\n";
  out << "learning_rate = " << num(cfg.train.learning_rate) << '\n';
  out << "batch_size = " << cfg.train.batch_size << '\n';
  out << "temperature = " << num(cfg.train.temperature) << '\n';
  out << "negative_margin = " << num(cfg.train.negative_margin) << '\n';
  out << "epochs = " << cfg.train.epochs << '\n';
  out << "w_inv = " << num(cfg.train.w_inv) << '\n';
  out << "w_var = " << num(cfg.train.w_var) << '\n';
  out << "w_kl = " << num(cfg.train.w_kl) << '\n';
  out << "w_rec = " << num(cfg.train.w_rec) << '\n';
  out << "temporal_window = " << cfg.train.temporal_window << '\n';
  out << "rotate_random = " << (cfg.train.rotate_random ? "true" : "false") << '\n';
  out << "rotate_fixed_angle = " << num(cfg.train.rotate_fixed_angle) << "\n\n";
  out << "[map]\n";
  out << "match_threshold = " << num(cfg.map.match_threshold) << '\n';
  out << "alg1_literal = " << (cfg.map.alg1_literal ? "true" : "false") << "\n\n";
  out << "[query]\n";
  out << "k = " << cfg.query.k << '\n';
  out << "threshold = " << num(cfg.query.threshold) << "\n\n";
  out << "[eval]\n";
  out << "positive_radius = " << num(cfg.eval.positive_radius) << '\n';
  out << "negative_radius = " << num(cfg.eval.negative_radius) << '\n';
  out << "delta = " << num(cfg.eval.delta) << '\n';
  out << "nlevels = " << cfg.eval.nlevels << '\n';
  return out.str();
}

NoiseConfig scale_noise(const NoiseConfig& base, double s) {
  if (s < 0.0) throw ConfigError("noise scale must be >= 0");
  NoiseConfig scaled = base;
  scaled.speckle_sigma = base.speckle_sigma * s;
  scaled.saturation_prob = std::min(1.0, base.saturation_prob * s);
  scaled.occlusion_sectors = s > 0.0 ? base.occlusion_sectors : 0;
  scaled.occlusion_width = base.occlusion_width * s;
  scaled.blur_azimuths = static_cast<int>(std::lround(base.blur_azimuths * s));
  return scaled;
}

}  // namespace ipr::tools
