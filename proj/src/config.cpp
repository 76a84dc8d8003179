#include "almrr/config.hpp"

#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "almrr/error.hpp"

namespace almrr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const auto s = trim(v);
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  if (ec != std::errc() || p != end) throw ArgumentError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  const auto s = trim(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ArgumentError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, item));
  if (out.empty()) throw ArgumentError("config key '" + key + "': empty list");
  return out;
}

std::string int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// Shortest representation that parses back to the same double.
std::string real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

const char* to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

RunConfig RunConfig::full_profile() { return RunConfig{}; }

RunConfig RunConfig::desk_profile() {
  RunConfig c;
  c.image_size = 128;
  c.grid_size = 32;
  c.batch_size = 4;
  c.epochs = 60;
  c.lr = 1e-3;
  c.backbone = BackboneSpec::tinytex();
  c.mfrm.embed_dim = 32;
  c.mfrm.depth = 2;
  c.mfrm.reduced_channels = 32;
  c.mfrm.state_dim = 8;
  c.frm.base_channels = 16;
  return c;
}

RunConfig RunConfig::profile(const std::string& name) {
  if (name == "full") return full_profile();
  if (name == "desk") return desk_profile();
  throw ArgumentError("unknown profile '" + name + "' (expected full or desk)");
}

void RunConfig::set(const std::string& raw_key, const std::string& value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(value);
  auto i = [&] { return parse_number<int>(key, v); };
  auto d = [&] { return parse_number<double>(key, v); };
  if (key == "image_size") image_size = i();
  else if (key == "grid_size") grid_size = i();
  else if (key == "batch_size") batch_size = i();
  else if (key == "epochs") epochs = i();
  else if (key == "lr") lr = d();
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
  else if (key == "backbone") backbone = BackboneSpec::by_name(v);
  else if (key == "backbone.stage_channels") backbone.stage_channels = parse_int_list(key, v);
  else if (key == "backbone.stage_strides") backbone.stage_strides = parse_int_list(key, v);
  else if (key == "backbone.selected_stages") backbone.selected_stages = parse_int_list(key, v);
  else if (key == "backbone.kernel_size") backbone.kernel_size = i();
  else if (key == "backbone.seed") backbone.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "backbone.weights_source") backbone.weights_source = v;
  else if (key == "mfrm.embed_dim") mfrm.embed_dim = i();
  else if (key == "mfrm.depth") mfrm.depth = i();
  else if (key == "mfrm.patch_size") mfrm.patch_size = i();
  else if (key == "mfrm.reduced_channels") mfrm.reduced_channels = i();
  else if (key == "mfrm.state_dim") mfrm.state_dim = i();
  else if (key == "mfrm.conv_width") mfrm.conv_width = i();
  else if (key == "mfrm.expand_factor") mfrm.expand_factor = i();
  else if (key == "mfrm.dt_rank") mfrm.dt_rank = i();
  else if (key == "recon_arch") mfrm.arch = parse_recon_arch(v);
  else if (key == "frm.depth") frm.depth = i();
  else if (key == "frm.base_channels") frm.base_channels = i();
  else if (key == "frm_enabled") frm_enabled = parse_bool(key, v);
  else if (key == "synth.alpha_min") synth.alpha_min = d();
  else if (key == "synth.alpha_max") synth.alpha_max = d();
  else if (key == "synth.resolutions") synth.resolutions = parse_int_list(key, v);
  else if (key == "synth.threshold") synth.threshold = d();
  else if (key == "synth.min_area") synth.bounds.min_fraction = d();
  else if (key == "synth.max_area") synth.bounds.max_fraction = d();
  else if (key == "synth.texture_dir") texture_dir = v;
  else if (key == "precision") {
    if (v == "f32" || v == "32") precision = Precision::f32;
    else if (v == "f64" || v == "64") precision = Precision::f64;
    else throw ArgumentError("config key 'precision': expected f32 or f64, got '" + v + "'");
  } else if (key == "strict_deterministic") strict_deterministic = parse_bool(key, v);
  else if (key == "checkpoint_every") checkpoint_every = i();
  else if (key == "image_score") {
    if (v != "max" && v != "topk_mean") throw ArgumentError("config key 'image_score': expected max or topk_mean");
    image_score = v;
  } else throw ArgumentError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::to_map() const {
  return {
      {"image_size", std::to_string(image_size)},
      {"grid_size", std::to_string(grid_size)},
      {"batch_size", std::to_string(batch_size)},
      {"epochs", std::to_string(epochs)},
      {"lr", real(lr)},
      {"seed", std::to_string(seed)},
      {"backbone", backbone.name},
      {"backbone.stage_channels", int_list(backbone.stage_channels)},
      {"backbone.stage_strides", int_list(backbone.stage_strides)},
      {"backbone.selected_stages", int_list(backbone.selected_stages)},
      {"backbone.kernel_size", std::to_string(backbone.kernel_size)},
      {"backbone.seed", std::to_string(backbone.seed)},
      {"backbone.weights_source", backbone.weights_source},
      {"mfrm.embed_dim", std::to_string(mfrm.embed_dim)},
      {"mfrm.depth", std::to_string(mfrm.depth)},
      {"mfrm.patch_size", std::to_string(mfrm.patch_size)},
      {"mfrm.reduced_channels", std::to_string(mfrm.reduced_channels)},
      {"mfrm.state_dim", std::to_string(mfrm.state_dim)},
      {"mfrm.conv_width", std::to_string(mfrm.conv_width)},
      {"mfrm.expand_factor", std::to_string(mfrm.expand_factor)},
      {"mfrm.dt_rank", std::to_string(mfrm.dt_rank)},
      {"recon_arch", to_string(mfrm.arch)},
      {"frm.depth", std::to_string(frm.depth)},
      {"frm.base_channels", std::to_string(frm.base_channels)},
      {"frm_enabled", frm_enabled ? "true" : "false"},
      {"synth.alpha_min", real(synth.alpha_min)},
      {"synth.alpha_max", real(synth.alpha_max)},
      {"synth.resolutions", int_list(synth.resolutions)},
      {"synth.threshold", real(synth.threshold)},
      {"synth.min_area", real(synth.bounds.min_fraction)},
      {"synth.max_area", real(synth.bounds.max_fraction)},
      {"synth.texture_dir", texture_dir},
      {"precision", to_string(precision)},
      {"strict_deterministic", strict_deterministic ? "true" : "false"},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"image_score", image_score},
  };
}

void RunConfig::validate() const {
  auto bad = [](const std::string& m) { throw ArgumentError("config: " + m); };
  if (image_size < 1 || grid_size < 1) bad("image_size and grid_size must be positive");
  if (image_size % grid_size) bad("image_size " + std::to_string(image_size) + " not divisible by grid_size " +
                                  std::to_string(grid_size));
  if (image_size % 4) bad("image_size must be divisible by 4");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (epochs < 0) bad("epochs must be >= 0");
  if (!(lr > 0.0)) bad("lr must be positive");
  if (checkpoint_every < 1) bad("checkpoint_every must be >= 1");
  backbone.validate();
  if (image_size % backbone.deepest_stride())
    bad("image_size must be a multiple of the backbone stride " + std::to_string(backbone.deepest_stride()));
  mfrm.validate(static_cast<std::size_t>(grid_size));
  if (static_cast<std::size_t>(mfrm.reduced_channels) > backbone.embed_channels())
    bad("mfrm.reduced_channels exceeds the embedding width " + std::to_string(backbone.embed_channels()));
  if (frm_enabled) frm.validate(static_cast<std::size_t>(grid_size), static_cast<std::size_t>(image_size));
  if (!(synth.alpha_min > 0.0 && synth.alpha_min <= synth.alpha_max && synth.alpha_max <= 1.0))
    bad("synth alpha range must satisfy 0 < alpha_min <= alpha_max <= 1");
  if (!(synth.threshold >= -1.0 && synth.threshold < 1.0)) bad("synth.threshold must lie in [-1, 1)");
  if (!(synth.bounds.min_fraction >= 0.0 && synth.bounds.min_fraction < synth.bounds.max_fraction &&
        synth.bounds.max_fraction <= 1.0))
    bad("synth area bounds must satisfy 0 <= min_area < max_area <= 1");
}

std::string RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : to_map()) j[k] = v;
  return j.dump();
}

RunConfig RunConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("config JSON: ") + e.what());
  }
  if (!j.is_object()) throw ArgumentError("config JSON must be an object");
  RunConfig c;
  // Sorted keys put "backbone" ahead of "backbone.*", so a named backbone is
  // loaded before its fields are overridden.
  for (const auto& [k, v] : j.items()) c.set(k, v.is_string() ? v.get<std::string>() : v.dump());
  return c;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ArgumentError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    base.set(t.substr(0, eq), t.substr(eq + 1));
  }
  return base;
}

}  // namespace almrr
