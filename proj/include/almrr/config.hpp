#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "almrr/embed.hpp"
#include "almrr/frm.hpp"
#include "almrr/mfrm.hpp"
#include "almrr/synth.hpp"

namespace almrr {

enum class Precision { f32, f64 };

/// Everything that determines a run. Keys accepted by set() are the same
/// dotted names written by to_map().
struct RunConfig {
  int image_size = 256;
  int grid_size = 64;
  int batch_size = 4;
  int epochs = 700;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  BackboneSpec backbone = BackboneSpec::resnet50_like();
  MfrmConfig mfrm{};
  FrmConfig frm{};
  SynthOptions synth{};
  /// Empty selects the built-in procedural texture bank.
  std::string texture_dir;
  bool frm_enabled = true;
  Precision precision = Precision::f32;
  bool strict_deterministic = false;
  int checkpoint_every = 50;
  /// "max" or "topk_mean".
  std::string image_score = "max";

  /// Full-scale profile: 256 px input, 64 x 64 grid, D = 192, L = 8.
  static RunConfig full_profile();
  /// Reduced profile for single-core CPU runs.
  static RunConfig desk_profile();
  static RunConfig profile(const std::string& name);

  /// Sets one key from its string form; throws ArgumentError on an unknown key
  /// or a malformed value.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;

  void validate() const;

  /// Compact JSON object with keys in sorted order.
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

/// Applies `key = value` lines from a file on top of `base`. Blank lines and
/// lines starting with '#' are ignored.
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base);

const char* to_string(Precision p);

}  // namespace almrr
