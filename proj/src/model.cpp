#include "gbcc/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gbcc/errors.hpp"

namespace gbcc::model {

namespace {

// Stream tags for deriving independent RNG streams from the master seed.
constexpr std::uint64_t kStreamInit = 0xA1;
constexpr std::uint64_t kStreamShuffle = 0xA2;
constexpr std::uint64_t kStreamBalls = 0xA3;

Layer make_layer(std::int64_t in, std::int64_t out, NetVariant variant, Rng& rng) {
  // Kaiming-style fan-in uniform bound: gain^2 * 3 / fan_in with gain
  // sqrt(2) for ReLU stacks and 1 for linear ones.
  double bound = std::sqrt((variant == NetVariant::mlp ? 6.0 : 3.0) / static_cast<double>(in));
  Layer l;
  l.w = diff::leaf(Matrix::rand_uniform(in, out, rng, -bound, bound));
  l.b = diff::leaf(Matrix::zeros(1, out));
  return l;
}

diff::NodePtr run_stack(const std::vector<Layer>& layers, const diff::NodePtr& x,
                        NetVariant variant) {
  diff::NodePtr y = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    y = diff::add_rowvec(diff::matmul(y, layers[i].w), layers[i].b);
    if (variant == NetVariant::mlp && i + 1 < layers.size()) y = diff::relu(y);
  }
  return y;
}

void append_layer_params(const std::vector<Layer>& layers, const std::string& prefix,
                         std::vector<std::pair<std::string, diff::NodePtr>>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back(prefix + std::to_string(i) + ".w", layers[i].w);
    out.emplace_back(prefix + std::to_string(i) + ".b", layers[i].b);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (p < 1) throw config_error("p must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw config_error("tau must be in (0, 1]");
  if (lambda < 0.0) throw config_error("lambda must be >= 0");
  if (con_weight < 0.0) throw config_error("contrastive weight must be >= 0");
  if (con_weight == 0.0 && lambda == 0.0)
    throw config_error("lambda and contrastive weight cannot both be zero");
  if (d < 1) throw config_error("latent dimension must be >= 1");
  if (!(temperature > 0.0)) throw config_error("temperature must be positive");
  if (batch_size < 1) throw config_error("batch size must be >= 1");
  if (epochs < 0) throw config_error("epochs must be >= 0");
  if (lr < 0.0) throw config_error("learning rate must be >= 0");
  for (auto h : hidden)
    if (h < 1) throw config_error("hidden widths must be >= 1");
}

ViewNetwork::ViewNetwork(std::int64_t d_in, const TrainConfig& cfg, Rng& rng,
                         bool with_decoder)
    : d_in_(d_in), d_(cfg.d), variant_(cfg.variant), latent_norm_(cfg.latent_norm) {
  if (d_in < 1) throw config_error("view input dimension must be >= 1");
  std::vector<std::int64_t> dims;
  dims.push_back(d_in);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.d);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    encoder_.push_back(make_layer(dims[i], dims[i + 1], variant_, rng));
  if (with_decoder) {
    std::reverse(dims.begin(), dims.end());
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
      decoder_.push_back(make_layer(dims[i], dims[i + 1], variant_, rng));
  }
}

diff::NodePtr ViewNetwork::encode_raw(const diff::NodePtr& x) const {
  if (x->value.cols != d_in_)
    throw shape_error("encode: input has " + std::to_string(x->value.cols) +
                      " columns, view expects " + std::to_string(d_in_));
  return run_stack(encoder_, x, variant_);
}

diff::NodePtr ViewNetwork::normalize_latent(const diff::NodePtr& h_raw) const {
  switch (latent_norm_) {
    case LatentNorm::zscore:
      return diff::standardize(h_raw);
    case LatentNorm::l2row:
      return diff::row_l2_normalize(h_raw);
    case LatentNorm::none:
      return h_raw;
  }
  throw contract_error("unknown latent norm");
}

diff::NodePtr ViewNetwork::encode(const diff::NodePtr& x) const {
  return normalize_latent(encode_raw(x));
}

diff::NodePtr ViewNetwork::decode(const diff::NodePtr& h_raw) const {
  if (decoder_.empty()) throw contract_error("decode called on a network without a decoder");
  return run_stack(decoder_, h_raw, variant_);
}

std::vector<diff::NodePtr> ViewNetwork::parameters() const {
  std::vector<diff::NodePtr> out;
  for (const auto& l : encoder_) {
    out.push_back(l.w);
    out.push_back(l.b);
  }
  for (const auto& l : decoder_) {
    out.push_back(l.w);
    out.push_back(l.b);
  }
  return out;
}

std::vector<diff::NodePtr> ViewNetwork::decoder_parameters() const {
  std::vector<diff::NodePtr> out;
  for (const auto& l : decoder_) {
    out.push_back(l.w);
    out.push_back(l.b);
  }
  return out;
}

std::vector<std::pair<std::string, diff::NodePtr>> ViewNetwork::named_parameters() const {
  std::vector<std::pair<std::string, diff::NodePtr>> out;
  append_layer_params(encoder_, "enc", out);
  append_layer_params(decoder_, "dec", out);
  return out;
}

diff::NodePtr reconstruction_loss(
    const std::vector<std::pair<diff::NodePtr, diff::NodePtr>>& pairs) {
  diff::NodePtr total;
  for (const auto& [x, xhat] : pairs) {
    auto d = diff::sub(x, xhat);
    auto s = diff::sum(diff::mul(d, d));
    total = total ? diff::add(total, s) : s;
  }
  if (!total) total = diff::constant(Matrix::zeros(1, 1));
  return total;
}

diff::NodePtr contrastive_loss_pair(const diff::NodePtr& c_m, const diff::NodePtr& c_n,
                                    const assoc::MaskMatrix& mask, double temperature) {
  if (!(temperature > 0.0)) throw config_error("temperature must be positive");
  const std::int64_t k = c_m->value.rows;
  if (c_n->value.rows != k || c_n->value.cols != c_m->value.cols)
    throw contract_error("center blocks disagree: " + c_m->value.shape_str() + " vs " +
                         c_n->value.shape_str());
  if (mask.m.rows != 2 * k)
    throw contract_error("mask is " + mask.m.shape_str() + ", expected " +
                         std::to_string(2 * k) + " rows");
  auto c = diff::concat_rows({c_m, c_n});
  auto s = diff::cosine_matrix(c, c);
  if (temperature != 1.0) s = diff::scale(s, 1.0 / temperature);
  return diff::masked_infonce(s, mask.positives, mask.negatives, k);
}

std::vector<assoc::MaskMatrix> pair_masks(const std::vector<granular::BallSet>& sets,
                                          double tau) {
  const std::size_t v = sets.size();
  if (v < 2) throw config_error("contrastive objective needs at least two views");
  std::vector<assoc::MaskMatrix> out;
  out.reserve(v * (v - 1) / 2);
  for (std::size_t m = 0; m < v; ++m)
    for (std::size_t n = m + 1; n < v; ++n) {
      Matrix p = assoc::cross_association(sets[m], sets[n], tau);
      out.push_back(assoc::assemble_mask(sets[m].overlap, sets[n].overlap, p));
    }
  return out;
}

diff::NodePtr total_contrastive(const std::vector<granular::BallSet>& sets,
                                const std::vector<assoc::MaskMatrix>& masks,
                                double temperature) {
  const std::size_t v = sets.size();
  if (v < 2) throw config_error("contrastive objective needs at least two views");
  if (masks.size() != v * (v - 1) / 2)
    throw contract_error("expected " + std::to_string(v * (v - 1) / 2) + " masks, got " +
                         std::to_string(masks.size()));
  diff::NodePtr acc;
  std::size_t idx = 0;
  for (std::size_t m = 0; m < v; ++m)
    for (std::size_t n = m + 1; n < v; ++n) {
      auto l = contrastive_loss_pair(sets[m].centers, sets[n].centers, masks[idx++],
                                     temperature);
      acc = acc ? diff::add(acc, l) : l;
    }
  return diff::scale(acc, 2.0 / (static_cast<double>(v) * static_cast<double>(v - 1)));
}

diff::NodePtr total_loss(const diff::NodePtr& l_con, const diff::NodePtr& l_rec,
                         double lambda) {
  if (lambda < 0.0) throw config_error("lambda must be >= 0");
  if (!l_rec || lambda == 0.0) return l_con;
  return diff::add(l_con, lambda == 1.0 ? l_rec : diff::scale(l_rec, lambda));
}

double literal_ratio_pair(const Matrix& logits, const assoc::MaskMatrix& mask,
                          std::int64_t k) {
  if (k < 1) throw contract_error("k must be >= 1");
  if (logits.rows != logits.cols ||
      logits.rows != static_cast<std::int64_t>(mask.positives.size()))
    throw contract_error("logits/mask size mismatch");
  double total = 0.0;
  for (std::int64_t i = 0; i < logits.rows; ++i) {
    const auto& omega = mask.positives[i];
    const auto& phi = mask.negatives[i];
    if (omega.empty() || phi.empty()) continue;
    double mx = -HUGE_VAL;
    for (auto j : omega) mx = std::max(mx, logits(i, j));
    for (auto z : phi) mx = std::max(mx, logits(i, z));
    double neg = 0.0;
    for (auto z : phi) neg += std::exp(logits(i, z) - mx);
    for (auto j : omega) {
      double ej = std::exp(logits(i, j) - mx);
      total += ej / (ej + neg);
    }
  }
  return total / static_cast<double>(k);
}

Trainer::Trainer(std::vector<Matrix> views, TrainConfig cfg)
    : views_(std::move(views)), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (views_.size() < 2) throw config_error("training needs at least two views");
  n_ = views_[0].rows;
  if (n_ < 1) throw data_error("views are empty");
  for (std::size_t v = 1; v < views_.size(); ++v)
    if (views_[v].rows != n_)
      throw data_error("view rows differ: view 0 has " + std::to_string(n_) + ", view " +
                       std::to_string(v) + " has " + std::to_string(views_[v].rows));
  if (cfg_.con_weight > 0.0 && std::min(cfg_.batch_size, n_) < 2 * cfg_.p)
    throw config_error("effective batch size " +
                       std::to_string(std::min(cfg_.batch_size, n_)) +
                       " is below 2p = " + std::to_string(2 * cfg_.p) +
                       "; every ball set needs at least two balls");
  const bool with_decoder = cfg_.lambda > 0.0;
  for (std::size_t v = 0; v < views_.size(); ++v) {
    Rng r = Rng::derive(cfg_.seed, {kStreamInit, static_cast<std::uint64_t>(v)});
    nets_.emplace_back(views_[v].cols, cfg_, r, with_decoder);
  }
  for (const auto& net : nets_) {
    auto ps = net.parameters();
    params_.insert(params_.end(), ps.begin(), ps.end());
  }
  opt_.lr = cfg_.lr;
}

EpochSummary Trainer::train_epoch() {
  const auto e = static_cast<std::uint64_t>(epoch_);
  Rng shuffle_rng = Rng::derive(cfg_.seed, {kStreamShuffle, e});
  std::vector<std::int64_t> perm(n_);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::int64_t i = n_ - 1; i > 0; --i) {
    auto j = static_cast<std::int64_t>(
        shuffle_rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }

  const std::int64_t bsz = std::min(cfg_.batch_size, n_);
  const std::size_t nviews = views_.size();
  const bool with_con = cfg_.con_weight > 0.0;
  double sum_con = 0.0, sum_rec = 0.0, sum_total = 0.0;
  double lit_sum = 0.0;
  std::int64_t lit_count = 0;
  std::int64_t batches = 0;

  for (std::int64_t b0 = 0, bi = 0; b0 < n_; b0 += bsz, ++bi) {
    const std::int64_t b1 = std::min(b0 + bsz, n_);
    const std::int64_t bs = b1 - b0;
    if (with_con && bs < 2 * cfg_.p) continue;  // too small to hold two balls
    std::vector<std::int64_t> ids(perm.begin() + b0, perm.begin() + b1);

    std::vector<granular::BallSet> sets(nviews);
    std::vector<std::pair<diff::NodePtr, diff::NodePtr>> rec_pairs;
    for (std::size_t v = 0; v < nviews; ++v) {
      const Matrix& src = views_[v];
      Matrix xb = Matrix::zeros(bs, src.cols);
      for (std::int64_t r = 0; r < bs; ++r)
        std::copy(src.row(ids[r]), src.row(ids[r]) + src.cols, xb.row(r));
      auto x = diff::constant(std::move(xb));
      auto h_raw = nets_[v].encode_raw(x);
      if (with_con) {
        auto h = nets_[v].normalize_latent(h_raw);
        Rng ball_rng = Rng::derive(
            cfg_.seed, {kStreamBalls, e, static_cast<std::uint64_t>(bi),
                        static_cast<std::uint64_t>(v)});
        sets[v] = granular::generate_balls_kmeans(h, cfg_.p, ids, ball_rng);
        sets[v].view_id = static_cast<int>(v);
      }
      if (cfg_.lambda > 0.0) rec_pairs.emplace_back(x, nets_[v].decode(h_raw));
    }

    diff::NodePtr l_con;
    std::vector<assoc::MaskMatrix> masks;
    if (with_con) {
      masks = pair_masks(sets, cfg_.tau);
      l_con = total_contrastive(sets, masks, cfg_.temperature);
    }
    diff::NodePtr l_rec;
    if (cfg_.lambda > 0.0) l_rec = reconstruction_loss(rec_pairs);
    diff::NodePtr loss;
    if (with_con) {
      auto weighted = cfg_.con_weight == 1.0 ? l_con : diff::scale(l_con, cfg_.con_weight);
      loss = total_loss(weighted, l_rec, cfg_.lambda);
    } else {
      loss = cfg_.lambda == 1.0 ? l_rec : diff::scale(l_rec, cfg_.lambda);
    }

    const double con_v = with_con ? l_con->scalar() : 0.0;
    const double rec_v = l_rec ? l_rec->scalar() : 0.0;
    const double loss_v = loss->scalar();
    if (!std::isfinite(loss_v)) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << epoch_ + 1 << " batch " << bi
          << ": l_con=" << con_v << " l_rec=" << rec_v;
      throw numeric_error(msg.str());
    }

    opt_.zero_grads(params_);
    diff::backward(loss);
    opt_.step(params_);

    sum_con += con_v;
    sum_rec += rec_v;
    sum_total += loss_v;
    ++batches;

    if (cfg_.debug_literal && with_con) {
      std::size_t idx = 0;
      for (std::size_t m = 0; m < nviews; ++m)
        for (std::size_t n = m + 1; n < nviews; ++n) {
          auto c = diff::concat_rows({diff::constant(sets[m].centers->value),
                                      diff::constant(sets[n].centers->value)});
          auto s = diff::scale(diff::cosine_matrix(c, c), 1.0 / cfg_.temperature);
          lit_sum += literal_ratio_pair(s->value, masks[idx++], sets[m].k());
          ++lit_count;
        }
    }
  }

  ++epoch_;
  EpochSummary s;
  s.epoch = epoch_;
  s.batches = batches;
  if (batches > 0) {
    s.mean_con = sum_con / static_cast<double>(batches);
    s.mean_rec = sum_rec / static_cast<double>(batches);
    s.mean_total = sum_total / static_cast<double>(batches);
  }
  if (lit_count > 0) s.literal_ratio = lit_sum / static_cast<double>(lit_count);
  return s;
}

std::vector<Matrix> Trainer::embeddings() const {
  std::vector<Matrix> out;
  out.reserve(views_.size());
  for (std::size_t v = 0; v < views_.size(); ++v) {
    auto h = nets_[v].encode(diff::constant(views_[v]));
    out.push_back(h->value);
  }
  return out;
}

std::vector<std::int64_t> Trainer::view_dims() const {
  std::vector<std::int64_t> out;
  out.reserve(views_.size());
  for (const auto& v : views_) out.push_back(v.cols);
  return out;
}

std::vector<std::pair<std::string, diff::NodePtr>> Trainer::named_parameters() {
  std::vector<std::pair<std::string, diff::NodePtr>> out;
  for (std::size_t v = 0; v < nets_.size(); ++v)
    for (auto& [name, node] : nets_[v].named_parameters())
      out.emplace_back("v" + std::to_string(v) + "." + name, node);
  return out;
}

}  // namespace gbcc::model
