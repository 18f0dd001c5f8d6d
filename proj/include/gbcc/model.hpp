#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gbcc/adam.hpp"
#include "gbcc/association.hpp"
#include "gbcc/diff.hpp"
#include "gbcc/granular.hpp"
#include "gbcc/matrix.hpp"
#include "gbcc/rng.hpp"

namespace gbcc::model {

enum class NetVariant { mlp, linear };
enum class LatentNorm { zscore, l2row, none };

struct TrainConfig {
  std::int64_t p = 2;        // samples per ball (granularity)
  double tau = 0.1;          // cross-view association threshold
  double lambda = 1.0;       // reconstruction weight
  double con_weight = 1.0;   // contrastive term weight; 0 trains reconstruction only
  std::int64_t d = 64;       // latent dimension
  double temperature = 1.0;  // similarity temperature
  std::int64_t batch_size = 256;
  std::int64_t epochs = 100;
  std::uint64_t seed = 1;
  double lr = 1e-4;
  NetVariant variant = NetVariant::mlp;
  LatentNorm latent_norm = LatentNorm::zscore;
  std::vector<std::int64_t> hidden = {2000, 500, 500};  // encoder hidden widths
  bool debug_literal = false;  // report the un-logged ratio form of the pair objective

  void validate() const;  // throws config_error on out-of-range fields
};

// One affine map y = x W + b with W: in x out and b: 1 x out.
struct Layer {
  diff::NodePtr w, b;
};

// Per-view autoencoder. Encoder dims {d_in, hidden..., d}; decoder mirrors
// them when present. The mlp variant applies ReLU between layers, the linear
// variant applies none (an empty hidden list gives a single affine map).
class ViewNetwork {
 public:
  ViewNetwork(std::int64_t d_in, const TrainConfig& cfg, Rng& rng, bool with_decoder);

  diff::NodePtr encode_raw(const diff::NodePtr& x) const;  // encoder stack output
  diff::NodePtr normalize_latent(const diff::NodePtr& h_raw) const;
  diff::NodePtr encode(const diff::NodePtr& x) const;      // normalize_latent(encode_raw(x))
  diff::NodePtr decode(const diff::NodePtr& h_raw) const;  // reconstruction from encode_raw

  std::int64_t input_dim() const { return d_in_; }
  std::int64_t latent_dim() const { return d_; }
  bool has_decoder() const { return !decoder_.empty(); }

  // Encoder layers first, then decoder layers; each layer contributes w, b.
  std::vector<diff::NodePtr> parameters() const;
  std::vector<diff::NodePtr> decoder_parameters() const;
  // Stable names for checkpointing: enc0.w, enc0.b, ..., dec0.w, ...
  std::vector<std::pair<std::string, diff::NodePtr>> named_parameters() const;

 private:
  std::int64_t d_in_ = 0;
  std::int64_t d_ = 0;
  NetVariant variant_ = NetVariant::mlp;
  LatentNorm latent_norm_ = LatentNorm::zscore;
  std::vector<Layer> encoder_, decoder_;
};

// Sum over views and samples of ||x - xhat||^2 (no averaging).
diff::NodePtr reconstruction_loss(
    const std::vector<std::pair<diff::NodePtr, diff::NodePtr>>& pairs);

// Masked contrastive loss for one view pair: stack centers, take pairwise
// cosine similarities divided by temperature, then the masked negative-log
// ratio normalized by k (the per-view ball count).
diff::NodePtr contrastive_loss_pair(const diff::NodePtr& c_m, const diff::NodePtr& c_n,
                                    const assoc::MaskMatrix& mask, double temperature);

// Masks for every view pair m < n in lexicographic order.
std::vector<assoc::MaskMatrix> pair_masks(const std::vector<granular::BallSet>& sets,
                                          double tau);

// (2 / (V(V-1))) * sum over pairs of contrastive_loss_pair. masks must come
// from pair_masks (same pair order).
diff::NodePtr total_contrastive(const std::vector<granular::BallSet>& sets,
                                const std::vector<assoc::MaskMatrix>& masks,
                                double temperature);

// l_con + lambda * l_rec. A null l_rec is treated as zero.
diff::NodePtr total_loss(const diff::NodePtr& l_con, const diff::NodePtr& l_rec,
                         double lambda);

// The pair objective exactly as the un-logged ratio mean: (1/k) sum_i
// sum_{j in Omega_i} exp(S_ij) / (exp(S_ij) + sum_{z in Phi_i} exp(S_iz)).
// Inspection only; higher is "better" for this form.
double literal_ratio_pair(const Matrix& logits, const assoc::MaskMatrix& mask,
                          std::int64_t k);

struct EpochSummary {
  std::int64_t epoch = 0;  // 1-based index of the epoch just finished
  double mean_con = 0.0;
  double mean_rec = 0.0;
  double mean_total = 0.0;
  std::int64_t batches = 0;
  double literal_ratio = 0.0;  // filled only when cfg.debug_literal is set
};

// Owns the per-view networks, optimizer and epoch counter; one instance is
// single-threaded. Views must share row count and order.
class Trainer {
 public:
  Trainer(std::vector<Matrix> views, TrainConfig cfg);

  // One pass over the data in shuffled mini-batches (Adam step per batch).
  // Batches smaller than 2p are dropped so every ball set has k >= 2.
  EpochSummary train_epoch();

  // Latent-normalized encodings of the full dataset, one matrix per view,
  // computed in a single pass and detached from any graph.
  std::vector<Matrix> embeddings() const;

  const TrainConfig& config() const { return cfg_; }
  std::int64_t epochs_done() const { return epoch_; }
  void set_epochs_done(std::int64_t e) { epoch_ = e; }
  std::int64_t samples() const { return n_; }
  std::int64_t view_count() const { return static_cast<std::int64_t>(views_.size()); }
  std::vector<std::int64_t> view_dims() const;

  // Checkpoint plumbing: "v{i}."-prefixed stable names, and the optimizer.
  std::vector<std::pair<std::string, diff::NodePtr>> named_parameters();
  const std::vector<diff::NodePtr>& parameters() const { return params_; }
  optim::Adam& optimizer() { return opt_; }

 private:
  std::vector<Matrix> views_;
  TrainConfig cfg_;
  std::vector<ViewNetwork> nets_;
  std::vector<diff::NodePtr> params_;
  optim::Adam opt_;
  std::int64_t epoch_ = 0;
  std::int64_t n_ = 0;
};

}  // namespace gbcc::model
