#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ldct/checkpoint.hpp"
#include "ldct/contrastive.hpp"
#include "ldct/dataset.hpp"
#include "ldct/esau_net.hpp"
#include "ldct/mac_net.hpp"

namespace ldct::train {

struct TrainConfig {
  // Schedule. `steps` = 0 means epochs × batches-per-epoch.
  std::size_t epochs = 1;
  std::size_t steps = 0;
  std::size_t batch_size = 4;
  // Optimizer.
  double lr_max = 1e-4;
  double lr_min = 1e-6;
  double weight_decay = 1e-9;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double max_grad_norm = 0.0;  // 0 disables clipping
  // Objective.
  double lambda = contrastive::kDefaultLambda;
  double w_global = 1.0;
  double w_local = 1.0;
  double tau = contrastive::kDefaultTau;
  double ema_momentum = 0.99;
  // Sampling.
  std::size_t local_queries = 16;
  std::size_t global_queries = 64;
  std::size_t negatives = 24;
  std::size_t negative_radius = contrastive::kNegativeRadius;
  std::size_t candidate_pool = contrastive::kCandidatePool;
  // Data.
  double hu_lo = -1000.0;
  double hu_hi = 2000.0;
  double foreground_threshold_hu = imaging::kDefaultForegroundThresholdHu;
  // Models.
  std::size_t esau_width = 8;
  std::size_t esau_heads = 4;
  std::size_t mac_width = 8;
  std::size_t local_dim = 256;
  // Bookkeeping.
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only

  bool contrastive_enabled() const { return w_global != 0.0 || w_local != 0.0; }
  imaging::HuWindow window() const { return {hu_lo, hu_hi}; }
  contrastive::SampleCounts sample_counts() const {
    return {local_queries, global_queries, negatives, negative_radius, candidate_pool};
  }
  esau::EsauConfig esau_config() const;
  mac::MacConfig mac_config() const;
};

/// Throws kConfig on any violated invariant.
void validate(const TrainConfig& c);
/// Unknown keys and wrong types are configuration errors; missing keys keep defaults.
TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& c);
/// Every field name, in declaration order.
std::vector<std::string> config_field_names();

/// Cosine annealing from lr_max at step 0 to lr_min at step = total.
double lr_schedule(std::size_t step, std::size_t total_steps, double lr_max, double lr_min);

struct AdamState {
  std::vector<Array> m;
  std::vector<Array> v;
  std::uint64_t steps = 0;
};

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.0;
  double eps = 1e-8;
};

/// One decoupled-weight-decay Adam update of every entry of `tree` using
/// the accumulated leaf gradients; entries without a gradient are skipped. Moments and
/// parameters are rounded to binary32 afterwards.
void adamw_step(ParamTree& tree, AdamState& state, const AdamHyper& h);

/// Scales all gradients of `tree` so their joint L2 norm is at most max_norm.
void clip_grad_norm(ParamTree& tree, double max_norm);

struct TrainState {
  esau::EsauNetParams esau;
  mac::MacNetState mac;
  AdamState opt_esau;
  AdamState opt_mac;
  std::uint64_t step = 0;  // completed steps
};

TrainState init_state(const TrainConfig& c);

struct Batch {
  Array noisy;  // (N, 1, H, W)
  Array clean;  // (N, 1, H, W)
  std::vector<imaging::Mask> masks;
  std::vector<std::size_t> indices;  // dataset positions, for diagnostics
};

Batch make_batch(const data::Dataset& d, const std::vector<std::size_t>& indices);

struct StepReport {
  std::uint64_t step = 0;
  double lr = 0.0;
  double l_pixel = 0.0;
  double l_global = 0.0;
  double l_local = 0.0;
  double l_total = 0.0;
};

enum class Phase { kBegin, kAfterMac, kAfterEsau };
using PhaseObserver = std::function<void(Phase, const TrainState&)>;

/// Phase 1 updates the MAC online branch on the detached denoiser output and
/// then the EMA target; phase 2 updates the denoiser with MAC frozen, reusing
/// the phase-1 index sets.
StepReport train_step(TrainState& state, const Batch& batch, const TrainConfig& c, double lr,
                      const PhaseObserver& observer = {});

/// Dataset positions of the batch trained at `step`; reshuffled per epoch.
std::vector<std::size_t> batch_indices(const TrainConfig& c, std::size_t dataset_size, std::uint64_t step);
std::size_t total_steps(const TrainConfig& c, std::size_t dataset_size);

checkpoint::Container to_container(const TrainState& s, const TrainConfig& c);
/// Rebuilds the state; the stored configuration is returned through `config`.
TrainState from_container(const checkpoint::Container& ckpt, TrainConfig* config = nullptr);
/// Denoiser only, for inference.
esau::EsauNetParams load_denoiser(const checkpoint::Container& ckpt);

std::string report_to_json(const StepReport& r);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + metrics.ndjson
  std::ostream* log = nullptr;                    // NDJSON records, in addition to the file
  std::optional<std::filesystem::path> resume;    // continue from this checkpoint
  std::size_t stop_after = 0;                     // stop early at this completed step (0: run to the end)
};

struct TrainResult {
  TrainState state;
  std::vector<StepReport> reports;
};

TrainResult train(const TrainConfig& c, const data::Dataset& d, const TrainOptions& options = {});

}  // namespace ldct::train
