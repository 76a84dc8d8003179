#include "almrr/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <set>

#include "almrr/error.hpp"
#include "almrr/ops.hpp"
#include "almrr/rng.hpp"
#include "almrr/synth.hpp"

namespace fs = std::filesystem;

namespace almrr {

namespace {

constexpr std::uint64_t kTagInit = 0x696e6974, kTagShuffle = 0x73687566, kTagSynth = 0x73796e74;

std::string real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string epoch_name(int epoch) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "checkpoint_epoch%04d.almr", epoch);
  return buf;
}

template <typename T>
AnomalyMap l2_map(const FeatureStack<T>& f, const FeatureStack<T>& f_hat, std::size_t size, const std::string& id) {
  const auto d = ops::bilinear_resize(ops::channel_l2(ops::sub(f.data, f_hat.data)), size, size);
  AnomalyMap m = to_anomaly_map(d, id);
  // Distances are unbounded; d / (1 + d) maps them monotonically into [0, 1).
  for (auto& s : m.scores) s = s / (1.0 + s);
  return m;
}

template <typename T>
TrainResult train_impl(const RunConfig& cfg, const std::vector<Image>& images, const TrainOptions& opts) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  cfg.validate();
  if (images.empty()) throw DataContractError("train: no training images");
  const auto size = static_cast<std::size_t>(cfg.image_size);
  for (const auto& im : images)
    if (im.channels != 3 || im.height != size || im.width != size)
      throw ShapeError("train: images must be 3 x " + std::to_string(size) + " x " + std::to_string(size));

  Model<T> model(cfg);
  const auto textures =
      cfg.texture_dir.empty() ? TextureSource::builtin(0) : TextureSource::directory(cfg.texture_dir, size, size);
  fs::create_directories(opts.out_dir);
  std::ofstream log(opts.out_dir / "train_log.csv", std::ios::trunc);
  if (!log) throw Error("cannot write " + (opts.out_dir / "train_log.csv").string());
  log << "step,l_rec,l_focal,l_dice,l_ref,l_total\n";

  // The backbone is frozen, so clean-image embeddings are fixed for the run.
  std::vector<FeatureStack<T>> phi;
  phi.reserve(images.size());
  for (const auto& im : images) phi.push_back(model.embedder().embed(im, FeatureOrigin::phi));

  TrainResult result;
  const AdamOptions adam{cfg.lr};
  const std::size_t n = images.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);

    for (std::size_t b0 = 0; b0 < n && !stop; b0 += batch) {
      const std::size_t b1 = std::min(n, b0 + batch);
      const T inv_b = static_cast<T>(1.0 / static_cast<double>(b1 - b0));
      double rec = 0.0, focal = 0.0, dice = 0.0;
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = b0; k < b1; ++k) {
        const std::size_t idx = order[k];
        const std::uint64_t seed =
            derive_seed(cfg.seed, {kTagSynth, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx)});
        seeds.push_back(seed);
        const SynthPair pair = sample_anomaly(images[idx], textures, cfg.synth, seed);
        const TotalLoss<T> tl = model.loss(phi[idx], pair.image_a, pair.mask);
        if (!std::isfinite(tl.report.l_total)) {
          nlohmann::json dump = {{"epoch", epoch},
                                 {"step", result.steps},
                                 {"image_index", idx},
                                 {"synth_seed", seed},
                                 {"batch_seeds", seeds},
                                 {"l_rec", real(tl.report.l_rec)},
                                 {"l_focal", real(tl.report.l_focal)},
                                 {"l_dice", real(tl.report.l_dice)}};
          std::ofstream(opts.out_dir / "nan_dump.json") << dump.dump(2) << "\n";
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(result.steps) + ", image " + std::to_string(idx) + ", synth seed " +
                               std::to_string(seed) + " (see nan_dump.json)");
        }
        ops::scale(tl.total, inv_b).backward();
        rec += tl.report.l_rec;
        focal += tl.report.l_focal;
        dice += tl.report.l_dice;
      }
      adam_step(model.store(), adam);
      ++result.steps;
      const double nb = static_cast<double>(b1 - b0);
      const auto r = LossReport::from_components(rec / nb, focal / nb, dice / nb);
      result.log.push_back(r);
      log << result.steps << ',' << real(r.l_rec) << ',' << real(r.l_focal) << ',' << real(r.l_dice) << ','
          << real(r.l_ref) << ',' << real(r.l_total) << '\n';
      if (opts.max_steps >= 0 && result.steps >= static_cast<std::uint64_t>(opts.max_steps)) stop = true;
    }
    if (opts.progress && !result.log.empty()) {
      const auto& r = result.log.back();
      *opts.progress << "epoch " << epoch + 1 << "/" << cfg.epochs << " step " << result.steps
                     << " l_rec=" << r.l_rec << " l_ref=" << r.l_ref << " l_total=" << r.l_total << " ("
                     << std::chrono::duration<double>(clock::now() - start).count() << " s)\n";
    }
    if ((epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs)
      save_checkpoint(model.store(), cfg.to_json(), opts.out_dir / epoch_name(epoch + 1));
  }
  log.flush();
  result.checkpoint = opts.out_dir / "model.almr";
  save_checkpoint(model.store(), cfg.to_json(), result.checkpoint);
  result.seconds = std::chrono::duration<double>(clock::now() - start).count();
  return result;
}

// Keys that change parameter shapes or the scoring path.
const char* const kStructuralKeys[] = {
    "image_size", "grid_size", "backbone", "backbone.stage_channels", "backbone.stage_strides",
    "backbone.selected_stages", "backbone.kernel_size", "mfrm.embed_dim", "mfrm.depth", "mfrm.patch_size",
    "mfrm.reduced_channels", "mfrm.state_dim", "mfrm.conv_width", "mfrm.expand_factor", "mfrm.dt_rank",
    "recon_arch", "frm.depth", "frm.base_channels", "frm_enabled"};

}  // namespace

template <typename T>
Model<T>::Model(const RunConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      embedder_(cfg.backbone, static_cast<std::size_t>(cfg.grid_size), store_),
      mfrm_(cfg.mfrm, embedder_.channels(), static_cast<std::size_t>(cfg.grid_size), store_,
            derive_seed(cfg.seed, {kTagInit, 1})) {
  if (cfg.frm_enabled)
    frm_.emplace(cfg.frm, static_cast<std::size_t>(cfg.grid_size), static_cast<std::size_t>(cfg.image_size), store_,
                 derive_seed(cfg.seed, {kTagInit, 2}));
}

template <typename T>
Model<T>::Model(const RunConfig& cfg, const Checkpoint& ckpt) : Model(cfg) {
  std::set<std::string> expected, found;
  for (const auto& [name, _] : store_.entries()) expected.insert(name);
  for (const auto& e : ckpt.entries) found.insert(e.name);
  for (const auto& name : expected)
    if (!found.count(name)) throw ShapeError("checkpoint is missing parameter '" + name + "' required by its config");
  for (const auto& name : found)
    if (!expected.count(name)) throw ShapeError("checkpoint has parameter '" + name + "' unknown to its config");
  restore_params(ckpt, store_);
}

template <typename T>
TotalLoss<T> Model<T>::loss(const FeatureStack<T>& phi, const Image& augmented, const Mask& mask) const {
  const FeatureStack<T> f = embedder_.embed(augmented, FeatureOrigin::f_input);
  const FeatureStack<T> f_hat = mfrm_.forward(f);
  const Tensor<T> l_rec = rec_loss(f_hat, phi);
  if (!frm_) {
    return {l_rec, LossReport::from_components(static_cast<double>(l_rec.item()), 0.0, 0.0)};
  }
  const Tensor<T> map = frm_->refine(channel_mean(f), channel_mean(f_hat));
  return total_loss(l_rec, map, mask);
}

template <typename T>
AnomalyMap Model<T>::score(const Image& image, const std::string& id) const {
  NoGradGuard no_grad;
  const auto size = static_cast<std::size_t>(cfg_.image_size);
  const Image sized = image.height == size && image.width == size ? image : resize(image, size, size);
  const FeatureStack<T> f = embedder_.embed(sized, FeatureOrigin::f_input);
  const FeatureStack<T> f_hat = mfrm_.forward(f);
  if (!frm_) return l2_map(f, f_hat, size, id);
  return to_anomaly_map(frm_->refine(channel_mean(f), channel_mean(f_hat)), id);
}

TrainResult train(const RunConfig& cfg, const std::vector<Image>& images, const TrainOptions& opts) {
  return cfg.precision == Precision::f64 ? train_impl<double>(cfg, images, opts)
                                         : train_impl<float>(cfg, images, opts);
}

TrainResult train_category(const RunConfig& cfg, const DatasetHandle& data, const std::string& category,
                           const TrainOptions& opts) {
  std::vector<std::string> warnings;
  const auto loaded = load_items(data.items(category, Split::train), static_cast<std::size_t>(cfg.image_size),
                                 false, &warnings);
  if (opts.progress)
    for (const auto& w : warnings) *opts.progress << "warning: " << w << "\n";
  std::vector<Image> images;
  for (const auto& li : loaded) images.push_back(li.image);
  if (images.empty()) throw DataContractError("category '" + category + "' has no usable training images");
  return train(cfg, images, opts);
}

Predictor Predictor::load(const Checkpoint& ckpt) {
  Predictor p;
  p.cfg_ = RunConfig::from_json(checkpoint_config_json(ckpt));
  if (p.cfg_.precision == Precision::f64)
    p.model_ = std::make_shared<Model<double>>(p.cfg_, ckpt);
  else
    p.model_ = std::make_shared<Model<float>>(p.cfg_, ckpt);
  return p;
}

Predictor Predictor::load(const fs::path& checkpoint) { return load(read_checkpoint(checkpoint)); }

Predictor Predictor::load(const fs::path& checkpoint, const RunConfig& expected) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  const RunConfig found = RunConfig::from_json(checkpoint_config_json(ckpt));
  const auto e = expected.to_map(), f = found.to_map();
  std::string diff;
  for (const char* k : kStructuralKeys)
    if (e.at(k) != f.at(k)) diff += std::string("\n  ") + k + ": expected " + e.at(k) + ", found " + f.at(k);
  if (!diff.empty()) throw ShapeError("checkpoint " + checkpoint.string() + " is incompatible with the config:" + diff);
  return load(ckpt);
}

AnomalyMap Predictor::score(const Image& image, const std::string& id) const {
  return std::visit([&](const auto& m) { return m->score(image, id); }, model_);
}

Checkpoint Predictor::checkpoint() const {
  return std::visit([&](const auto& m) { return make_checkpoint(m->store(), cfg_.to_json()); }, model_);
}

Image overlay_heatmap(const Image& image, const AnomalyMap& map) {
  const Image base = image.height == map.height && image.width == map.width ? image : resize(image, map.height, map.width);
  Image out(3, map.height, map.width);
  for (std::size_t i = 0; i < map.scores.size(); ++i) {
    const double s = std::clamp(map.scores[i], 0.0, 1.0);
    const double heat[3] = {std::clamp(2.0 * s, 0.0, 1.0), std::clamp(2.0 * s - 1.0, 0.0, 1.0) * 0.6, 0.0};
    for (std::size_t c = 0; c < 3; ++c) {
      const double g = base.channels == 3 ? base.data[c * base.plane() + i] : base.data[i];
      out.data[c * out.plane() + i] = (1.0 - 0.5 * s) * g + 0.5 * s * heat[c];
    }
  }
  return out;
}

std::vector<InferRecord> infer(const Predictor& model, const fs::path& input, const InferOptions& opts) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(input)) {
    files.push_back(input);
  } else {
    throw DataContractError("infer: input not found: " + input.string());
  }
  if (files.empty()) throw DataContractError("infer: no images in " + input.string());
  fs::create_directories(opts.out_dir);
  const auto rule = model.config().image_score == "max" ? ImageScoreRule::max : ImageScoreRule::top_k_mean;
  const auto size = static_cast<std::size_t>(model.config().image_size);
  std::vector<InferRecord> records;
  for (const auto& f : files) {
    const Image img = resize(read_image(f, true), size, size);
    const std::string id = f.stem().string();
    const AnomalyMap map = model.score(img, id);
    Image heat(1, map.height, map.width);
    heat.data = map.scores;
    InferRecord rec{id, image_score(map, rule), opts.out_dir / (id + "_heatmap.png")};
    write_png(rec.heatmap, heat);
    if (opts.overlay) write_png(opts.out_dir / (id + "_overlay.png"), overlay_heatmap(img, map));
    records.push_back(rec);
  }
  std::ofstream csv(opts.out_dir / "scores.csv", std::ios::trunc);
  csv << "image_id,image_score\n";
  for (const auto& r : records) csv << r.image_id << ',' << real(r.image_score) << '\n';
  return records;
}

CategoryReport evaluate_category(const Predictor& model, const DatasetHandle& data, const std::string& category,
                                 std::vector<ScoredImage>* scored) {
  const auto size = static_cast<std::size_t>(model.config().image_size);
  std::vector<std::string> warnings;
  const auto loaded = load_items(data.items(category, Split::test), size, true, &warnings);
  std::vector<ScoredImage> images;
  for (const auto& li : loaded)
    images.push_back({model.score(li.image, category + "/" + li.item.id), li.mask, li.item.label});
  const auto rule = model.config().image_score == "max" ? ImageScoreRule::max : ImageScoreRule::top_k_mean;
  CategoryReport r = category_report(category, images, rule);
  if (scored) *scored = std::move(images);
  return r;
}

std::vector<CategoryReport> evaluate(const DatasetHandle& data, const fs::path& checkpoints) {
  std::vector<CategoryReport> reports;
  std::optional<Predictor> shared;
  if (fs::is_regular_file(checkpoints)) shared = Predictor::load(checkpoints);
  for (const auto& cat : data.categories) {
    if (shared) {
      reports.push_back(evaluate_category(*shared, data, cat));
    } else {
      const fs::path p = checkpoints / cat / "model.almr";
      if (!fs::is_regular_file(p)) throw DataContractError("evaluate: no checkpoint for '" + cat + "' at " + p.string());
      reports.push_back(evaluate_category(Predictor::load(p), data, cat));
    }
  }
  return with_average(std::move(reports));
}

template <typename T>
BenchResult bench_impl(const RunConfig& cfg, int n_images, std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  Model<T> model(cfg);
  NoGradGuard no_grad;
  const auto size = static_cast<std::size_t>(cfg.image_size);
  BenchResult r;
  for (int i = 0; i < n_images; ++i) {
    const Image img = procedural_texture(static_cast<TextureKind>(i % 3), size, size,
                                         derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    const auto f = model.embedder().embed(img, FeatureOrigin::f_input);
    const auto t0 = clock::now();
    (void)model.mfrm().forward(f);
    r.seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
  }
  if (!r.seconds.empty()) {
    r.mean = std::accumulate(r.seconds.begin(), r.seconds.end(), 0.0) / static_cast<double>(r.seconds.size());
    auto s = r.seconds;
    std::sort(s.begin(), s.end());
    r.median = s.size() % 2 ? s[s.size() / 2] : 0.5 * (s[s.size() / 2 - 1] + s[s.size() / 2]);
  }
  return r;
}

BenchResult bench_reconstruction(const RunConfig& cfg, int n_images, std::uint64_t seed) {
  if (n_images < 1) throw ArgumentError("bench: n_images must be >= 1");
  return cfg.precision == Precision::f64 ? bench_impl<double>(cfg, n_images, seed)
                                         : bench_impl<float>(cfg, n_images, seed);
}

template class Model<float>;
template class Model<double>;

}  // namespace almrr
