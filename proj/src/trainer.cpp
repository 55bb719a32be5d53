#include "ldct/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ldct/error.hpp"

namespace ldct::train {
namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kSampleStream = 0x73616d70;
constexpr double kPi = 3.14159265358979323846;

// Visits every TrainConfig field as (name, reference).
template <typename Config, typename F>
void for_each_field(Config& c, F&& f) {
  f("epochs", c.epochs);
  f("steps", c.steps);
  f("batch_size", c.batch_size);
  f("lr_max", c.lr_max);
  f("lr_min", c.lr_min);
  f("weight_decay", c.weight_decay);
  f("beta1", c.beta1);
  f("beta2", c.beta2);
  f("max_grad_norm", c.max_grad_norm);
  f("lambda", c.lambda);
  f("w_global", c.w_global);
  f("w_local", c.w_local);
  f("tau", c.tau);
  f("ema_momentum", c.ema_momentum);
  f("local_queries", c.local_queries);
  f("global_queries", c.global_queries);
  f("negatives", c.negatives);
  f("negative_radius", c.negative_radius);
  f("candidate_pool", c.candidate_pool);
  f("hu_lo", c.hu_lo);
  f("hu_hi", c.hu_hi);
  f("foreground_threshold_hu", c.foreground_threshold_hu);
  f("esau_width", c.esau_width);
  f("esau_heads", c.esau_heads);
  f("mac_width", c.mac_width);
  f("local_dim", c.local_dim);
  f("seed", c.seed);
  f("checkpoint_every", c.checkpoint_every);
}

void config_check(bool ok, const std::string& what) { require(ok, ErrorKind::kConfig, "config: " + what); }

std::string batch_list(const Batch& b) {
  std::string s;
  for (std::size_t i = 0; i < b.indices.size(); ++i) s += (i ? "," : "") + std::to_string(b.indices[i]);
  return s;
}

void check_finite(const ad::Var& loss, const char* component, int phase, const Batch& batch, std::uint64_t step,
                  const ad::Var* output = nullptr) {
  if (std::isfinite(loss.item())) return;
  std::string where = "batch indices [" + batch_list(batch) + "]";
  if (output) {
    const auto& v = output->value();
    const std::size_t per = v.size() / batch.indices.size();
    for (std::size_t n = 0; n < batch.indices.size(); ++n)
      if (!std::all_of(v.data() + n * per, v.data() + (n + 1) * per, [](double x) { return std::isfinite(x); })) {
        where = "batch index " + std::to_string(n) + " (dataset item " + std::to_string(batch.indices[n]) + ")";
        break;
      }
  }
  fail(ErrorKind::kNumerical, "non-finite " + std::string(component) + " in phase " + std::to_string(phase) +
                                  " of step " + std::to_string(step + 1) + ", " + where);
}

ad::Var weighted_contrastive(const contrastive::MacLosses& l, const TrainConfig& c) {
  if (c.w_global == 0.0) return ad::scale(l.local, c.w_local);
  if (c.w_local == 0.0) return ad::scale(l.global, c.w_global);
  return ad::add(ad::scale(l.global, c.w_global), ad::scale(l.local, c.w_local));
}

AdamHyper hyper(const TrainConfig& c, double lr) { return {lr, c.beta1, c.beta2, c.weight_decay, 1e-8}; }

void init_moments(const ParamTree& tree, AdamState& s) {
  s.m.clear();
  s.v.clear();
  for (const auto& e : tree.entries()) {
    s.m.emplace_back(e.var.shape(), 0.0);
    s.v.emplace_back(e.var.shape(), 0.0);
  }
}

void store_moments(checkpoint::Container& ckpt, const std::string& prefix, const ParamTree& tree, const AdamState& s) {
  for (std::size_t i = 0; i < tree.size(); ++i) {
    ckpt.add(prefix + "m." + tree.entries()[i].name, s.m[i]);
    ckpt.add(prefix + "v." + tree.entries()[i].name, s.v[i]);
  }
}

void load_moments(const checkpoint::Container& ckpt, const std::string& prefix, const ParamTree& tree,
                  AdamState& s) {
  init_moments(tree, s);
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto& name = tree.entries()[i].name;
    const auto& m = ckpt.tensor(prefix + "m." + name);
    const auto& v = ckpt.tensor(prefix + "v." + name);
    require(m.same_shape(s.m[i]) && v.same_shape(s.v[i]), ErrorKind::kShape,
            "checkpoint: optimizer moment shape mismatch for " + name);
    s.m[i] = m;
    s.v[i] = v;
  }
}

std::uint64_t parse_u64(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kFormat, std::string("checkpoint: bad ") + what + " '" + text + "'");
}

}  // namespace

esau::EsauConfig TrainConfig::esau_config() const {
  esau::EsauConfig e;
  e.base_width = esau_width;
  e.heads = esau_heads;
  return e;
}

mac::MacConfig TrainConfig::mac_config() const {
  mac::MacConfig m;
  m.base_width = mac_width;
  m.local_dim = local_dim;
  m.ema_momentum = ema_momentum;
  return m;
}

void validate(const TrainConfig& c) {
  config_check(c.steps > 0 || c.epochs >= 1, "epochs must be >= 1 when steps is 0");
  config_check(c.batch_size >= 1, "batch_size must be >= 1");
  config_check(c.lr_max > 0.0 && c.lr_min > 0.0, "learning rates must be positive");
  config_check(c.lr_min <= c.lr_max, "lr_min must not exceed lr_max");
  config_check(c.weight_decay >= 0.0, "weight_decay must be >= 0");
  config_check(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0, "betas must lie in [0, 1)");
  config_check(c.max_grad_norm >= 0.0, "max_grad_norm must be >= 0");
  config_check(c.lambda >= 0.0 && c.w_global >= 0.0 && c.w_local >= 0.0, "loss weights must be >= 0");
  config_check(c.tau > 0.0, "tau must be positive");
  config_check(c.ema_momentum >= 0.0 && c.ema_momentum <= 1.0, "ema_momentum must lie in [0, 1]");
  config_check(c.local_queries >= 1 && c.global_queries >= 1 && c.negatives >= 1, "sampling counts must be >= 1");
  config_check(c.negative_radius >= 1 && c.candidate_pool >= 1, "negative_radius and candidate_pool must be >= 1");
  config_check(c.hu_lo < c.hu_hi, "hu_lo must be below hu_hi");
  config_check(c.esau_width >= 1 && c.esau_heads >= 1 && c.esau_width % c.esau_heads == 0,
               "esau_width must be a positive multiple of esau_heads");
  config_check(c.mac_width >= 1 && c.local_dim >= 1, "mac_width and local_dim must be >= 1");
}

TrainConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("config: not valid JSON: ") + e.what());
  }
  config_check(j.is_object(), "top level must be an object");
  TrainConfig c;
  const auto names = config_field_names();
  for (const auto& [key, value] : j.items())
    config_check(std::find(names.begin(), names.end(), key) != names.end(), "unknown field '" + key + "'");
  for_each_field(c, [&](const char* name, auto& field) {
    if (!j.contains(name)) return;
    const auto& v = j.at(name);
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_floating_point_v<T>) {
      config_check(v.is_number(), std::string(name) + " must be a number");
      field = v.get<double>();
    } else {
      config_check(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0),
                   std::string(name) + " must be a non-negative integer");
      field = static_cast<T>(v.get<std::uint64_t>());
    }
  });
  validate(c);
  return c;
}

std::string config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  for_each_field(c, [&](const char* name, const auto& field) { j[name] = field; });
  return j.dump();
}

std::vector<std::string> config_field_names() {
  std::vector<std::string> names;
  TrainConfig c;
  for_each_field(c, [&](const char* name, const auto&) { names.emplace_back(name); });
  return names;
}

double lr_schedule(std::size_t step, std::size_t total, double lr_max, double lr_min) {
  require(total > 0, ErrorKind::kInvalidArgument, "lr_schedule: total_steps must be positive");
  require(step <= total, ErrorKind::kInvalidArgument, "lr_schedule: step exceeds total_steps");
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(kPi * t));
}

void adamw_step(ParamTree& tree, AdamState& s, const AdamHyper& h) {
  if (s.m.size() != tree.size()) init_moments(tree, s);
  ++s.steps;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.steps));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.steps));
  for (std::size_t i = 0; i < tree.size(); ++i) {
    auto& var = tree.entries()[i].var;
    if (!var.has_grad()) continue;
    auto& p = var.mutable_value();
    const auto& g = var.grad();
    auto& m = s.m[i];
    auto& v = s.v[i];
    require(g.same_shape(p) && m.same_shape(p), ErrorKind::kShape,
            "adamw_step: shape mismatch for " + tree.entries()[i].name);
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] -= h.lr * h.weight_decay * p[k];
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
      p[k] -= h.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + h.eps);
    }
    round_to_float(p.values());
    round_to_float(m.values());
    round_to_float(v.values());
  }
}

void clip_grad_norm(ParamTree& tree, double max_norm) {
  double sq = 0.0;
  for (const auto& e : tree.entries())
    if (e.var.has_grad())
      for (double g : e.var.grad().values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double f = max_norm / norm;
  for (auto& e : tree.entries())
    if (e.var.has_grad())
      for (auto& g : e.var.grad_buffer().values()) g *= f;
}

TrainState init_state(const TrainConfig& c) {
  validate(c);
  TrainState s{esau::init_esau(c.esau_config(), c.seed), mac::init_mac(c.mac_config(), c.seed), {}, {}, 0};
  init_moments(s.esau.tree, s.opt_esau);
  init_moments(s.mac.online, s.opt_mac);
  return s;
}

Batch make_batch(const data::Dataset& d, const std::vector<std::size_t>& indices) {
  require(!indices.empty(), ErrorKind::kInvalidArgument, "empty batch");
  const std::size_t h = d.height(), w = d.width(), n = indices.size();
  Batch b{Array({n, 1, h, w}), Array({n, 1, h, w}), {}, indices};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = indices[k];
    require(i < d.size(), ErrorKind::kInvalidArgument, "batch index out of range");
    std::copy(d.noisy[i].values.begin(), d.noisy[i].values.end(), b.noisy.data() + k * h * w);
    std::copy(d.clean[i].values.begin(), d.clean[i].values.end(), b.clean.data() + k * h * w);
    b.masks.push_back(d.masks[i]);
  }
  return b;
}

StepReport train_step(TrainState& state, const Batch& batch, const TrainConfig& c, double lr,
                      const PhaseObserver& observer) {
  if (observer) observer(Phase::kBegin, state);
  const auto step = state.step;
  const auto noisy = ad::constant(batch.noisy);
  const auto clean = ad::constant(batch.clean);
  const auto& mc = state.mac.config;
  StepReport report{step + 1, lr};

  // Phase 1: MAC online branch on the detached denoiser output.
  std::vector<contrastive::ImageSamples> samples;
  if (c.contrastive_enabled()) {
    state.esau.tree.set_requires_grad(false);
    state.mac.online.set_requires_grad(true);
    const auto denoised = ad::detach(esau::esau_forward(noisy, state.esau).denoised);
    const auto target = mac::disentangled_forward(clean, state.mac.target, mc);
    auto rng = derived_rng(c.seed, kSampleStream, step);
    samples = contrastive::draw_samples(target, batch.masks, c.sample_counts(), rng);
    const auto online = mac::disentangled_forward(denoised, state.mac.online, mc);
    const auto losses = contrastive::mac_losses(online, target, samples, state.mac, c.tau);
    check_finite(losses.global, "l_global", 1, batch, step);
    check_finite(losses.local, "l_local", 1, batch, step);
    state.mac.online.zero_grad();
    weighted_contrastive(losses, c).backward();
    if (c.max_grad_norm > 0.0) clip_grad_norm(state.mac.online, c.max_grad_norm);
    adamw_step(state.mac.online, state.opt_mac, hyper(c, lr));
    state.mac.online.zero_grad();
    mac::ema_update(state.mac, c.ema_momentum);
    state.mac.target.round_to_float();
  }
  if (observer) observer(Phase::kAfterMac, state);

  // Phase 2: denoiser update through the frozen MAC network.
  state.mac.online.set_requires_grad(false);
  state.esau.tree.set_requires_grad(true);
  const auto output = esau::esau_forward(noisy, state.esau).denoised;
  const auto pixel = contrastive::pixel_loss(output, clean);
  check_finite(pixel, "l_pixel", 2, batch, step, &output);
  report.l_pixel = pixel.item();
  auto total = ad::scale(pixel, c.lambda);
  if (c.contrastive_enabled()) {
    const auto target = mac::disentangled_forward(clean, state.mac.target, mc);
    const auto online = mac::disentangled_forward(output, state.mac.online, mc);
    const auto losses = contrastive::mac_losses(online, target, samples, state.mac, c.tau);
    check_finite(losses.global, "l_global", 2, batch, step);
    check_finite(losses.local, "l_local", 2, batch, step);
    report.l_global = losses.global.item();
    report.l_local = losses.local.item();
    total = ad::add(total, weighted_contrastive(losses, c));
  }
  report.l_total = total.item();
  state.esau.tree.zero_grad();
  total.backward();
  if (c.max_grad_norm > 0.0) clip_grad_norm(state.esau.tree, c.max_grad_norm);
  adamw_step(state.esau.tree, state.opt_esau, hyper(c, lr));
  state.esau.tree.zero_grad();
  state.esau.tree.set_requires_grad(false);
  state.step = step + 1;
  if (observer) observer(Phase::kAfterEsau, state);
  return report;
}

std::size_t total_steps(const TrainConfig& c, std::size_t n) {
  if (c.steps > 0) return c.steps;
  return c.epochs * std::max<std::size_t>(1, n / std::min(c.batch_size, n));
}

std::vector<std::size_t> batch_indices(const TrainConfig& c, std::size_t n, std::uint64_t step) {
  require(n >= 1, ErrorKind::kInvalidArgument, "dataset is empty");
  const std::size_t bs = std::min(c.batch_size, n);
  const std::size_t per_epoch = std::max<std::size_t>(1, n / bs);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = derived_rng(c.seed, kShuffleStream, step / per_epoch);
  // Fisher–Yates with an explicit draw so the order is library-independent.
  for (std::size_t i = n; i-- > 1;) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const std::size_t first = (step % per_epoch) * bs;
  return {order.begin() + static_cast<std::ptrdiff_t>(first), order.begin() + static_cast<std::ptrdiff_t>(first + bs)};
}

checkpoint::Container to_container(const TrainState& s, const TrainConfig& c) {
  checkpoint::Container ckpt;
  ckpt.set_meta("kind", "ldct-train-state");
  ckpt.set_meta("step", std::to_string(s.step));
  ckpt.set_meta("adam_esau_steps", std::to_string(s.opt_esau.steps));
  ckpt.set_meta("adam_mac_steps", std::to_string(s.opt_mac.steps));
  ckpt.set_meta("config", config_to_json(c));
  ckpt.add_tree("esau.", s.esau.tree);
  ckpt.add_tree("mac.online.", s.mac.online);
  ckpt.add_tree("mac.target.", s.mac.target);
  store_moments(ckpt, "adam.esau.", s.esau.tree, s.opt_esau);
  store_moments(ckpt, "adam.mac.", s.mac.online, s.opt_mac);
  return ckpt;
}

TrainState from_container(const checkpoint::Container& ckpt, TrainConfig* config) {
  const TrainConfig c = config_from_json(ckpt.meta("config"));
  TrainState s = init_state(c);
  ckpt.load_tree("esau.", s.esau.tree);
  ckpt.load_tree("mac.online.", s.mac.online);
  ckpt.load_tree("mac.target.", s.mac.target);
  load_moments(ckpt, "adam.esau.", s.esau.tree, s.opt_esau);
  load_moments(ckpt, "adam.mac.", s.mac.online, s.opt_mac);
  s.step = parse_u64(ckpt.meta("step"), "step");
  s.opt_esau.steps = parse_u64(ckpt.meta("adam_esau_steps"), "optimizer step count");
  s.opt_mac.steps = parse_u64(ckpt.meta("adam_mac_steps"), "optimizer step count");
  s.esau.tree.set_requires_grad(false);
  if (config) *config = c;
  return s;
}

esau::EsauNetParams load_denoiser(const checkpoint::Container& ckpt) {
  const TrainConfig c = config_from_json(ckpt.meta("config"));
  auto p = esau::init_esau(c.esau_config(), c.seed);
  ckpt.load_tree("esau.", p.tree);
  p.tree.set_requires_grad(false);
  return p;
}

std::string report_to_json(const StepReport& r) {
  nlohmann::ordered_json j{{"step", r.step},         {"lr", r.lr},           {"l_pixel", r.l_pixel},
                           {"l_global", r.l_global}, {"l_local", r.l_local}, {"l_total", r.l_total}};
  return j.dump();
}

TrainResult train(const TrainConfig& c, const data::Dataset& d, const TrainOptions& options) {
  validate(c);
  require(d.size() >= 1, ErrorKind::kInvalidArgument, "training dataset is empty");
  for (std::size_t i = 0; i < d.size(); ++i)
    require(d.noisy[i].same_shape(d.clean.front()) && d.clean[i].same_shape(d.clean.front()) &&
                d.masks[i].height == d.height() && d.masks[i].width == d.width(),
            ErrorKind::kShape, "dataset item " + d.names[i] + " does not match the first item's shape");
  require(d.height() % esau::kSpatialMultiple == 0 && d.width() % esau::kSpatialMultiple == 0, ErrorKind::kShape,
          "training slices must have sides divisible by 16");

  TrainResult result;
  if (options.resume) {
    TrainConfig stored;
    result.state = from_container(checkpoint::Container::load(*options.resume), &stored);
    require(config_to_json(stored) == config_to_json(c), ErrorKind::kConfig,
            "resume: checkpoint was written with a different configuration");
  } else {
    result.state = init_state(c);
  }
  auto& state = result.state;

  std::ofstream log_file;
  if (options.out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*options.out_dir, ec);
    require(!ec, ErrorKind::kIo, "cannot create " + options.out_dir->string());
    log_file.open(*options.out_dir / "metrics.ndjson", options.resume ? std::ios::app : std::ios::trunc);
    require(static_cast<bool>(log_file), ErrorKind::kIo, "cannot write metrics log in " + options.out_dir->string());
  }

  const std::size_t total = total_steps(c, d.size());
  const std::size_t stop = options.stop_after ? std::min(options.stop_after, total) : total;
  while (state.step < stop) {
    const double lr = lr_schedule(state.step, total, c.lr_max, c.lr_min);
    const auto report = train_step(state, make_batch(d, batch_indices(c, d.size(), state.step)), c, lr);
    result.reports.push_back(report);
    const auto line = report_to_json(report);
    if (log_file.is_open()) log_file << line << '\n' << std::flush;
    if (options.log) *options.log << line << '\n';
    if (options.out_dir && c.checkpoint_every > 0 && state.step % c.checkpoint_every == 0 && state.step < stop) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06llu.ckpt", static_cast<unsigned long long>(state.step));
      to_container(state, c).save(*options.out_dir / name);
    }
  }
  if (options.out_dir) to_container(state, c).save(*options.out_dir / "final.ckpt");
  return result;
}

}  // namespace ldct::train
