#include "deckshift/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "deckshift/flatfile.hpp"

namespace deckshift {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd sigmoid_m(const MatrixXd& a) {
  return a.unaryExpr([](double v) { return sigmoid(v); });
}

MatrixXd uniform(std::size_t rows, std::size_t cols, double a, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-a, a);
  MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = d(rng);
  return m;
}

MatrixXd xavier(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  return uniform(out, in, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
}

struct StepCache {
  MatrixXd h_prev, r, u, n, h;
};

struct DirCache {
  std::vector<StepCache> steps;  // indexed by time
};

struct LayerCache {
  std::vector<MatrixXd> input;  // per time, in x B
  std::array<DirCache, 2> dirs;
};

struct Forward {
  std::size_t batch = 0;
  std::vector<MatrixXd> cont_norm;  // per time, 2 x B
  std::vector<MatrixXd> cont_aff;   // per time, 2 x B
  std::vector<LayerCache> layers;
  MatrixXd zin;    // 2H x B
  MatrixXd mf;     // 7 x B
  MatrixXd z_raw;  // d_z x B
  MatrixXd z_cls;  // d_z x B
  MatrixXd out;    // 9 x B
};

Eigen::Index card_column(CardIndex c, std::size_t vocab) {
  return static_cast<Eigen::Index>(c < vocab ? c : vocab);
}

void gru_forward(const GruParams& p, const std::vector<MatrixXd>& x, bool reverse,
                 DirCache& cache) {
  const auto hdim = p.u.cols();
  const auto steps = x.size();
  const auto b = x.front().cols();
  cache.steps.assign(steps, {});
  MatrixXd h = MatrixXd::Zero(hdim, b);
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = reverse ? steps - 1 - i : i;
    MatrixXd a = p.w * x[t];
    a.colwise() += p.b.col(0);
    a.topRows(2 * hdim) += p.u.topRows(2 * hdim) * h;
    auto& c = cache.steps[t];
    c.r = sigmoid_m(a.topRows(hdim));
    c.u = sigmoid_m(a.middleRows(hdim, hdim));
    const MatrixXd rh = c.r.cwiseProduct(h);
    c.n = (a.bottomRows(hdim) + p.u.bottomRows(hdim) * rh).array().tanh().matrix();
    c.h_prev = h;
    c.h = (1.0 - c.u.array()).matrix().cwiseProduct(c.n) + c.u.cwiseProduct(h);
    h = c.h;
  }
}

// dh_out[t] is the external gradient on the output at time t. Accumulates
// parameter gradients and adds the input gradients into dx.
void gru_backward(const GruParams& p, GruParams& g, const std::vector<MatrixXd>& x,
                  const DirCache& cache, bool reverse, const std::vector<MatrixXd>& dh_out,
                  std::vector<MatrixXd>& dx) {
  const auto hdim = p.u.cols();
  const auto steps = x.size();
  MatrixXd dh = MatrixXd::Zero(hdim, x.front().cols());
  MatrixXd da(3 * hdim, x.front().cols());
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = reverse ? i : steps - 1 - i;
    const auto& c = cache.steps[t];
    dh += dh_out[t];
    const MatrixXd dn = dh.cwiseProduct((1.0 - c.u.array()).matrix());
    const MatrixXd du = dh.cwiseProduct(c.h_prev - c.n);
    MatrixXd dhp = dh.cwiseProduct(c.u);
    auto dan = da.bottomRows(hdim);
    dan = dn.cwiseProduct((1.0 - c.n.array().square()).matrix());
    const MatrixXd rh = c.r.cwiseProduct(c.h_prev);
    g.u.bottomRows(hdim).noalias() += dan * rh.transpose();
    const MatrixXd drh = p.u.bottomRows(hdim).transpose() * dan;
    dhp += drh.cwiseProduct(c.r);
    const MatrixXd dr = drh.cwiseProduct(c.h_prev);
    da.topRows(hdim) = dr.cwiseProduct(c.r.cwiseProduct((1.0 - c.r.array()).matrix()));
    da.middleRows(hdim, hdim) = du.cwiseProduct(c.u.cwiseProduct((1.0 - c.u.array()).matrix()));
    g.u.topRows(2 * hdim).noalias() += da.topRows(2 * hdim) * c.h_prev.transpose();
    dhp.noalias() += p.u.topRows(2 * hdim).transpose() * da.topRows(2 * hdim);
    g.w.noalias() += da * x[t].transpose();
    g.b += da.rowwise().sum();
    dx[t].noalias() += p.w.transpose() * da;
    dh = dhp;
  }
}

void check_window(const Window& w, std::size_t k) {
  if (w.steps.size() != k) throw DataError("window length does not match the encoder");
}

}  // namespace

void EncoderConfig::validate() const {
  if (k == 0 || card_dim == 0 || cat_dim == 0 || hidden == 0 || layers == 0 || d_z == 0)
    throw ConfigError("encoder dimensions must be positive");
  if (batch == 0) throw ConfigError("encoder batch size must be positive");
  for (double w : head_weights)
    if (!(w >= 0.0)) throw ConfigError("head loss weights must be non-negative");
  if (!(optim.lr > 0.0)) throw ConfigError("learning rate must be positive");
}

void EncoderConfig::apply(const KeyValueConfig& kv) {
  auto sz = [&](const char* key, std::size_t& dst) {
    dst = static_cast<std::size_t>(kv.get_int(std::string("encoder.") + key, static_cast<long long>(dst)));
  };
  sz("card_dim", card_dim);
  sz("cat_dim", cat_dim);
  sz("hidden", hidden);
  sz("layers", layers);
  sz("d_z", d_z);
  sz("batch", batch);
  sz("epochs", epochs);
  sz("patience", patience);
  sz("max_train_windows", max_train_windows);
  sz("max_val_windows", max_val_windows);
  if (kv.has("encoder.head_weights")) {
    const auto w = kv.get_doubles("encoder.head_weights", {});
    if (w.size() != kNumHeads) throw ConfigError("encoder.head_weights needs 5 values");
    std::copy(w.begin(), w.end(), head_weights.begin());
  }
  optim.kind = parse_optimizer(kv.get_string("encoder.optimizer", std::string(to_string(optim.kind))));
  optim.lr = kv.get_double("encoder.lr", optim.lr);
  optim.clip_norm = kv.get_double("encoder.clip_norm", optim.clip_norm);
  validate();
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  z.for_each([](const std::string&, MatrixXd& m) { m.setZero(); });
  return z;
}

void EncoderParams::for_each(const std::function<void(const std::string&, MatrixXd&)>& f) {
  f("emb_state", emb_state);
  f("emb_outcome", emb_outcome);
  f("emb_dc", emb_dc);
  f("emb_crown", emb_crown);
  f("emb_card", emb_card);
  f("cont_gain", cont_gain);
  f("cont_bias", cont_bias);
  f("cont_proj", cont_proj);
  f("cont_proj_b", cont_proj_b);
  for (std::size_t l = 0; l < gru.size(); ++l)
    for (std::size_t d = 0; d < 2; ++d) {
      const std::string p = "gru." + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
      f(p + "w", gru[l][d].w);
      f(p + "u", gru[l][d].u);
      f(p + "b", gru[l][d].b);
    }
  f("w_out", w_out);
  f("mastery_w", mastery_w);
  f("mastery_b", mastery_b);
  f("head_w", head_w);
  f("head_b", head_b);
}

std::size_t EncoderParams::num_parameters() {
  std::size_t n = 0;
  for_each([&](const std::string&, MatrixXd& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

EncoderParams init_encoder(const EncoderConfig& c, std::uint64_t seed) {
  c.validate();
  std::mt19937_64 rng(seed);
  EncoderParams p;
  p.config = c;
  p.emb_state = uniform(c.cat_dim, kNumStates + 1, 0.1, rng);
  p.emb_outcome = uniform(c.cat_dim, 2, 0.1, rng);
  p.emb_dc = uniform(c.cat_dim, 2, 0.1, rng);
  p.emb_crown = uniform(c.cat_dim, kNumCrownBuckets, 0.1, rng);
  p.emb_card = uniform(c.card_dim, c.vocab + 1, 0.1, rng);
  p.cont_gain = MatrixXd::Ones(2, 1);
  p.cont_bias = MatrixXd::Zero(2, 1);
  p.cont_proj = xavier(c.cat_dim, 2, rng);
  p.cont_proj_b = MatrixXd::Zero(static_cast<Eigen::Index>(c.cat_dim), 1);
  const double a = 1.0 / std::sqrt(static_cast<double>(c.hidden));
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::size_t in = l == 0 ? c.input_dim() : 2 * c.hidden;
    std::array<GruParams, 2> layer;
    for (auto& g : layer) {
      g.w = uniform(3 * c.hidden, in, a, rng);
      g.u = uniform(3 * c.hidden, c.hidden, a, rng);
      g.b = uniform(3 * c.hidden, 1, a, rng);
    }
    p.gru.push_back(std::move(layer));
  }
  p.w_out = xavier(c.d_z, 2 * c.hidden, rng);
  p.mastery_w = xavier(c.d_z, kNumMastery, rng);
  p.mastery_b = MatrixXd::Zero(static_cast<Eigen::Index>(c.d_z), 1);
  p.head_w = xavier(kNumHeadOutputs, c.d_z, rng);
  p.head_b = MatrixXd::Zero(kNumHeadOutputs, 1);
  return p;
}

Encoder::Encoder(EncoderParams params) : params_(std::move(params)) { params_.config.validate(); }

namespace {

Forward run_forward(const EncoderParams& p, const std::vector<const Window*>& batch) {
  const auto& c = p.config;
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto cat = static_cast<Eigen::Index>(c.cat_dim);
  const auto card = static_cast<Eigen::Index>(c.card_dim);
  Forward f;
  f.batch = batch.size();
  f.layers.resize(c.layers);
  auto& in0 = f.layers[0].input;
  in0.assign(c.k, MatrixXd(static_cast<Eigen::Index>(c.input_dim()), b));
  f.cont_norm.assign(c.k, MatrixXd(2, b));
  f.cont_aff.assign(c.k, MatrixXd(2, b));
  f.mf.resize(kNumMastery, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const Window& w = *batch[static_cast<std::size_t>(j)];
    check_window(w, c.k);
    for (std::size_t i = 0; i < kNumMastery; ++i) f.mf(static_cast<Eigen::Index>(i), j) = w.mf[i];
    for (std::size_t t = 0; t < c.k; ++t) {
      const auto& s = w.steps[t];
      auto col = in0[t].col(j);
      col.segment(0, cat) = p.emb_state.col(std::clamp(s.state, 0, kUnknownState));
      col.segment(cat, cat) = p.emb_outcome.col(s.outcome ? 1 : 0);
      col.segment(2 * cat, cat) = p.emb_dc.col(s.dc ? 1 : 0);
      col.segment(3 * cat, cat) = p.emb_crown.col(std::clamp(s.crown_bucket(), 0, 6));
      VectorXd mean = VectorXd::Zero(card);
      for (auto id : s.deck) mean += p.emb_card.col(card_column(id, c.vocab));
      col.segment(4 * cat, card) = mean / static_cast<double>(kDeckSize);
      f.cont_norm[t](0, j) = (s.log_dt - p.cont_mean(0, 0)) / p.cont_std(0, 0);
      f.cont_norm[t](1, j) = (s.avg_elixir - p.cont_mean(1, 0)) / p.cont_std(1, 0);
    }
  }
  for (std::size_t t = 0; t < c.k; ++t) {
    f.cont_aff[t] = (f.cont_norm[t].array().colwise() * p.cont_gain.col(0).array()).matrix();
    f.cont_aff[t].colwise() += p.cont_bias.col(0);
    MatrixXd proj = p.cont_proj * f.cont_aff[t];
    proj.colwise() += p.cont_proj_b.col(0);
    in0[t].bottomRows(cat) = proj;
  }
  const auto h = static_cast<Eigen::Index>(c.hidden);
  for (std::size_t l = 0; l < c.layers; ++l) {
    auto& layer = f.layers[l];
    gru_forward(p.gru[l][0], layer.input, false, layer.dirs[0]);
    gru_forward(p.gru[l][1], layer.input, true, layer.dirs[1]);
    if (l + 1 < c.layers) {
      auto& next = f.layers[l + 1].input;
      next.assign(c.k, MatrixXd(2 * h, b));
      for (std::size_t t = 0; t < c.k; ++t) {
        next[t].topRows(h) = layer.dirs[0].steps[t].h;
        next[t].bottomRows(h) = layer.dirs[1].steps[t].h;
      }
    }
  }
  const auto& top = f.layers.back();
  f.zin.resize(2 * h, b);
  f.zin.topRows(h) = top.dirs[0].steps[c.k - 1].h;
  f.zin.bottomRows(h) = top.dirs[1].steps[0].h;
  f.z_raw = p.w_out * f.zin;
  f.z_cls = p.mastery_w * f.mf;
  f.z_cls.colwise() += p.mastery_b.col(0);
  f.z_cls += f.z_raw;
  f.out = p.head_w * f.z_cls;
  f.out.colwise() += p.head_b.col(0);
  return f;
}

// Softmax cross-entropy over three logits; writes d loss / d logits.
double softmax_ce(const double* z, int label, double* grad) {
  const double m = std::max({z[0], z[1], z[2]});
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += std::exp(z[i] - m);
  const double lse = m + std::log(s);
  for (int i = 0; i < 3; ++i) grad[i] = std::exp(z[i] - lse) - (i == label ? 1.0 : 0.0);
  return lse - z[label];
}

// Returns the gradients on the step inputs.
std::vector<MatrixXd> run_backward(const EncoderParams& p, const Forward& f,
                                   const MatrixXd& dout, EncoderParams& g) {
  const auto& c = p.config;
  const auto h = static_cast<Eigen::Index>(c.hidden);
  const auto cat = static_cast<Eigen::Index>(c.cat_dim);
  const auto b = dout.cols();
  g.head_w.noalias() += dout * f.z_cls.transpose();
  g.head_b += dout.rowwise().sum();
  const MatrixXd dz = p.head_w.transpose() * dout;
  g.mastery_w.noalias() += dz * f.mf.transpose();
  g.mastery_b += dz.rowwise().sum();
  g.w_out.noalias() += dz * f.zin.transpose();
  const MatrixXd dzin = p.w_out.transpose() * dz;

  std::vector<MatrixXd> dy(c.k, MatrixXd::Zero(2 * h, b));
  dy[c.k - 1].topRows(h) = dzin.topRows(h);
  dy[0].bottomRows(h) += dzin.bottomRows(h);
  for (std::size_t li = c.layers; li-- > 0;) {
    const auto& layer = f.layers[li];
    const auto in = layer.input.front().rows();
    std::vector<MatrixXd> dx(c.k, MatrixXd::Zero(in, b));
    std::vector<MatrixXd> dfw(c.k), dbw(c.k);
    for (std::size_t t = 0; t < c.k; ++t) {
      dfw[t] = dy[t].topRows(h);
      dbw[t] = dy[t].bottomRows(h);
    }
    gru_backward(p.gru[li][0], g.gru[li][0], layer.input, layer.dirs[0], false, dfw, dx);
    gru_backward(p.gru[li][1], g.gru[li][1], layer.input, layer.dirs[1], true, dbw, dx);
    dy = std::move(dx);
  }
  for (std::size_t t = 0; t < c.k; ++t) {
    const MatrixXd dproj = dy[t].bottomRows(cat);
    g.cont_proj.noalias() += dproj * f.cont_aff[t].transpose();
    g.cont_proj_b += dproj.rowwise().sum();
    const MatrixXd daff = p.cont_proj.transpose() * dproj;
    g.cont_bias += daff.rowwise().sum();
    g.cont_gain += daff.cwiseProduct(f.cont_norm[t]).rowwise().sum();
  }
  return dy;
}

void scatter_embeddings(const EncoderParams& p, const std::vector<const Window*>& batch,
                        const std::vector<MatrixXd>& dx, EncoderParams& g) {
  const auto& c = p.config;
  const auto cat = static_cast<Eigen::Index>(c.cat_dim);
  const auto card = static_cast<Eigen::Index>(c.card_dim);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Window& w = *batch[j];
    const auto jj = static_cast<Eigen::Index>(j);
    for (std::size_t t = 0; t < c.k; ++t) {
      const auto& s = w.steps[t];
      const auto col = dx[t].col(jj);
      g.emb_state.col(std::clamp(s.state, 0, kUnknownState)) += col.segment(0, cat);
      g.emb_outcome.col(s.outcome ? 1 : 0) += col.segment(cat, cat);
      g.emb_dc.col(s.dc ? 1 : 0) += col.segment(2 * cat, cat);
      g.emb_crown.col(std::clamp(s.crown_bucket(), 0, 6)) += col.segment(3 * cat, cat);
      const VectorXd dcard = col.segment(4 * cat, card) / static_cast<double>(kDeckSize);
      for (auto id : s.deck) g.emb_card.col(card_column(id, c.vocab)) += dcard;
    }
  }
}

}  // namespace

VectorXd Encoder::encode_raw(const Window& w) const {
  const auto f = run_forward(params_, {&w});
  return f.z_raw.col(0);
}

VectorXd Encoder::mastery_projection(const MasteryVector& mf) const {
  VectorXd v(static_cast<Eigen::Index>(kNumMastery));
  for (std::size_t i = 0; i < kNumMastery; ++i) v(static_cast<Eigen::Index>(i)) = mf[i];
  return params_.mastery_w * v + params_.mastery_b.col(0);
}

SessionEmbedding Encoder::encode(const Window& w, const VectorXd& prior_user) const {
  const auto d = static_cast<Eigen::Index>(d_z());
  if (prior_user.size() != d) throw DataError("z_user has the wrong dimension");
  const auto f = run_forward(params_, {&w});
  SessionEmbedding e;
  e.z_raw = f.z_raw.col(0);
  e.z_cls = f.z_cls.col(0);
  e.z_user = prior_user;
  e.z_user_next = ema_update(prior_user, e.z_cls);
  return e;
}

VectorXd Encoder::head_outputs(const VectorXd& z_cls) const {
  return params_.head_w * z_cls + params_.head_b.col(0);
}

double Encoder::loss(const std::vector<Window>& batch, EncoderParams* grad) const {
  return loss(batch, params_.config.head_weights, grad);
}

double Encoder::loss(const std::vector<Window>& batch, const std::array<double, kNumHeads>& wts,
                     EncoderParams* grad) const {
  if (batch.empty()) throw DataError("empty batch");
  std::vector<const Window*> ptrs;
  for (const auto& w : batch) {
    if (!w.has_target) throw DataError("training window has no target");
    ptrs.push_back(&w);
  }
  const auto f = run_forward(params_, ptrs);
  const auto b = static_cast<Eigen::Index>(batch.size());
  const double inv = 1.0 / static_cast<double>(b);
  MatrixXd dout = MatrixXd::Zero(kNumHeadOutputs, b);
  double total = 0.0;
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto& t = batch[static_cast<std::size_t>(j)].target;
    const double* o = f.out.col(j).data();
    double* d = dout.col(j).data();
    double g3[3];
    total += wts[kHeadDc] * bce_with_logit(o[0], t.next_dc);
    d[0] = wts[kHeadDc] * bce_grad(o[0], t.next_dc) * inv;
    total += wts[kHeadDv] * softmax_ce(o + 1, t.next_type, g3);
    for (int i = 0; i < 3; ++i) d[1 + i] = wts[kHeadDv] * g3[i] * inv;
    total += wts[kHeadWin] * bce_with_logit(o[4], t.next_outcome);
    d[4] = wts[kHeadWin] * bce_grad(o[4], t.next_outcome) * inv;
    total += wts[kHeadSub] * softmax_ce(o + 5, t.subtype, g3);
    for (int i = 0; i < 3; ++i) d[5 + i] = wts[kHeadSub] * g3[i] * inv;
    const double e = o[8] - t.next_cd;
    total += wts[kHeadCd] * e * e;
    d[8] = wts[kHeadCd] * 2.0 * e * inv;
  }
  if (grad) scatter_embeddings(params_, ptrs, run_backward(params_, f, dout, *grad), *grad);
  return total * inv;
}

MatrixXd Encoder::batch_head_outputs(const std::vector<Window>& batch) const {
  std::vector<const Window*> ptrs;
  for (const auto& w : batch) ptrs.push_back(&w);
  return run_forward(params_, ptrs).out;
}

VectorXd ema_update(const VectorXd& z_user, const VectorXd& z_cls) {
  return kUserDecay * z_user + kUserMix * z_cls;
}

SequenceEmbeddings encode_sequence(const Encoder& enc, const PlayerSequence& seq,
                                   std::size_t max_start) {
  SequenceEmbeddings out;
  const std::size_t k = enc.config().k;
  if (seq.steps.size() < k) return out;
  const std::size_t last = std::min(seq.steps.size() - k, max_start);
  VectorXd user = VectorXd::Zero(static_cast<Eigen::Index>(enc.d_z()));
  for (std::size_t s = 0; s <= last; ++s) {
    const auto e = enc.encode(make_window(seq, s, k), user);
    out.z_user.push_back(user);
    out.z_cls.push_back(e.z_cls);
    user = e.z_user_next;
  }
  return out;
}

void fit_continuous_stats(EncoderParams& params, const std::vector<PlayerSequence>& seqs,
                          const std::vector<WindowRef>& windows) {
  const std::size_t k = params.config.k;
  double n = 0.0;
  std::array<double, 2> sum{}, sq{};
  for (const auto& ref : windows) {
    const auto& steps = seqs.at(ref.player).steps;
    for (std::size_t t = ref.start; t < ref.start + k && t < steps.size(); ++t) {
      const double v[2] = {steps[t].log_dt, steps[t].avg_elixir};
      for (int i = 0; i < 2; ++i) sum[i] += v[i], sq[i] += v[i] * v[i];
      n += 1.0;
    }
  }
  for (int i = 0; i < 2; ++i) {
    const double mu = n > 0 ? sum[i] / n : 0.0;
    const double var = n > 0 ? sq[i] / n - mu * mu : 0.0;
    params.cont_mean(i, 0) = mu;
    params.cont_std(i, 0) = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
}

namespace {

std::vector<WindowRef> cap_windows(std::vector<WindowRef> refs, std::size_t cap, std::uint64_t seed) {
  if (cap == 0 || refs.size() <= cap) return refs;
  std::mt19937_64 rng(seed);
  std::shuffle(refs.begin(), refs.end(), rng);
  refs.resize(cap);
  std::sort(refs.begin(), refs.end(), [](const WindowRef& a, const WindowRef& b) {
    return a.player != b.player ? a.player < b.player : a.start < b.start;
  });
  return refs;
}

std::vector<Window> materialize(const std::vector<PlayerSequence>& seqs,
                                const std::vector<WindowRef>& refs, std::size_t begin,
                                std::size_t end, std::size_t k) {
  std::vector<Window> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i)
    out.push_back(make_window(seqs.at(refs[i].player), refs[i].start, k));
  return out;
}

double mean_loss(const Encoder& enc, const std::vector<PlayerSequence>& seqs,
                 const std::vector<WindowRef>& refs) {
  const auto& c = enc.config();
  double total = 0.0;
  for (std::size_t i = 0; i < refs.size(); i += c.batch) {
    const std::size_t end = std::min(refs.size(), i + c.batch);
    total += enc.loss(materialize(seqs, refs, i, end, c.k)) * static_cast<double>(end - i);
  }
  return refs.empty() ? 0.0 : total / static_cast<double>(refs.size());
}

std::vector<ParamRef> param_refs(EncoderParams& value, EncoderParams& grad) {
  std::vector<ParamRef> refs;
  value.for_each([&](const std::string& name, MatrixXd& m) { refs.push_back({name, &m, nullptr}); });
  std::size_t i = 0;
  grad.for_each([&](const std::string&, MatrixXd& m) { refs[i++].grad = &m; });
  return refs;
}

}  // namespace

HeadMetrics evaluate_heads(const Encoder& enc, const std::vector<PlayerSequence>& seqs,
                           const std::vector<WindowRef>& windows) {
  const auto& c = enc.config();
  HeadMetrics m;
  std::vector<double> s_dc, s_win;
  std::vector<int> y_dc, y_win;
  double dv_hits = 0.0, sub_hits = 0.0, se = 0.0;
  for (std::size_t i = 0; i < windows.size(); i += c.batch) {
    const std::size_t end = std::min(windows.size(), i + c.batch);
    const auto batch = materialize(seqs, windows, i, end, c.k);
    const MatrixXd out = enc.batch_head_outputs(batch);
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto& t = batch[j].target;
      if (!batch[j].has_target) continue;
      const auto col = out.col(static_cast<Eigen::Index>(j));
      s_dc.push_back(col(0));
      y_dc.push_back(t.next_dc);
      s_win.push_back(col(4));
      y_win.push_back(t.next_outcome);
      Eigen::Index dv = 0, sub = 0;
      col.segment(1, 3).maxCoeff(&dv);
      col.segment(5, 3).maxCoeff(&sub);
      dv_hits += dv == t.next_type;
      sub_hits += sub == t.subtype;
      se += (col(8) - t.next_cd) * (col(8) - t.next_cd);
      ++m.windows;
    }
  }
  if (m.windows == 0) return m;
  const double n = static_cast<double>(m.windows);
  m.auc_dc = roc_auc(s_dc, y_dc);
  m.auc_win = roc_auc(s_win, y_win);
  m.acc_dv = dv_hits / n;
  m.acc_sub = sub_hits / n;
  m.mse_cd = se / n;
  return m;
}

PretrainReport pretrain(Encoder& enc, const std::vector<PlayerSequence>& seqs,
                        const std::vector<WindowRef>& train_all,
                        const std::vector<WindowRef>& val_all, std::ostream* log) {
  auto& params = enc.mutable_params();
  const auto cfg = params.config;
  if (train_all.empty()) throw DataError("pre-training needs at least one training window");
  const auto train = cap_windows(train_all, cfg.max_train_windows, derive_seed(cfg.seed, std::string_view("train-cap")));
  const auto val = cap_windows(val_all, cfg.max_val_windows, derive_seed(cfg.seed, std::string_view("val-cap")));
  fit_continuous_stats(params, seqs, train);

  PretrainReport rep;
  rep.train_windows = train.size();
  EncoderParams grad = params.zeros_like();
  const auto refs = param_refs(params, grad);
  Optimizer opt(cfg.optim);
  EncoderParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch) {
      const std::size_t end = std::min(order.size(), i + cfg.batch);
      std::vector<Window> batch;
      batch.reserve(end - i);
      for (std::size_t j = i; j < end; ++j) {
        const auto& r = train[order[j]];
        batch.push_back(make_window(seqs.at(r.player), r.start, cfg.k));
      }
      zero_grads(refs);
      const double l = enc.loss(batch, &grad);
      if (!std::isfinite(l))
        throw DivergenceError("encoder loss became non-finite in epoch " + std::to_string(epoch + 1) +
                              " at batch " + std::to_string(i / cfg.batch));
      opt.step(refs);
      epoch_loss += l * static_cast<double>(end - i);
    }
    epoch_loss /= static_cast<double>(order.size());
    const double vl = val.empty() ? epoch_loss : mean_loss(enc, seqs, val);
    if (!std::isfinite(vl)) throw DivergenceError("encoder validation loss became non-finite");
    rep.train_loss.push_back(epoch_loss);
    rep.val_loss.push_back(vl);
    if (log)
      *log << "encoder epoch " << epoch + 1 << " train " << format_double(epoch_loss) << " val "
           << format_double(vl) << '\n';
    if (vl < best_val) {
      best_val = vl;
      best = params;
      rep.best_epoch = epoch + 1;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      rep.early_stopped = true;
      break;
    }
  }
  params = best;
  if (!val.empty()) rep.val_metrics = evaluate_heads(enc, seqs, val);
  return rep;
}

GradCheckResult gradient_check(const Encoder& enc, const std::vector<Window>& batch, double eps) {
  Encoder probe = enc;
  EncoderParams grad = probe.params().zeros_like();
  probe.loss(batch, &grad);
  std::vector<std::pair<std::string, MatrixXd*>> values;
  probe.mutable_params().for_each([&](const std::string& n, MatrixXd& m) { values.push_back({n, &m}); });
  std::vector<const MatrixXd*> grads;
  grad.for_each([&](const std::string&, MatrixXd& m) { grads.push_back(&m); });
  GradCheckResult res;
  for (std::size_t p = 0; p < values.size(); ++p) {
    MatrixXd& v = *values[p].second;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + eps;
      const double up = probe.loss(batch);
      v.data()[i] = orig - eps;
      const double down = probe.loss(batch);
      v.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grads[p]->data()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      const double rel = std::abs(numeric - analytic) / denom;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = values[p].first + "[" + std::to_string(i) + "]";
      }
      ++res.checked;
    }
  }
  return res;
}

TensorFile encoder_to_tensors(const Encoder& enc) {
  TensorFile f;
  EncoderParams p = enc.params();
  const auto& c = p.config;
  f.meta["kind"] = "encoder";
  f.meta["k"] = std::to_string(c.k);
  f.meta["vocab"] = std::to_string(c.vocab);
  f.meta["card_dim"] = std::to_string(c.card_dim);
  f.meta["cat_dim"] = std::to_string(c.cat_dim);
  f.meta["hidden"] = std::to_string(c.hidden);
  f.meta["layers"] = std::to_string(c.layers);
  f.meta["d_z"] = std::to_string(c.d_z);
  std::string hw;
  for (double w : c.head_weights) hw += (hw.empty() ? "" : ",") + format_double(w);
  f.meta["head_weights"] = hw;
  f.tensors.push_back({"cont_mean", p.cont_mean});
  f.tensors.push_back({"cont_std", p.cont_std});
  p.for_each([&](const std::string& n, MatrixXd& m) { f.tensors.push_back({n, m}); });
  return f;
}

Encoder encoder_from_tensors(const TensorFile& f) {
  auto meta = [&](const char* key) -> const std::string& {
    const auto it = f.meta.find(key);
    if (it == f.meta.end()) throw DataError(std::string("encoder file lacks meta '") + key + "'");
    return it->second;
  };
  if (meta("kind") != "encoder") throw DataError("tensor file does not hold an encoder");
  EncoderConfig c;
  auto num = [&](const char* key) { return static_cast<std::size_t>(parse_int(meta(key), 0)); };
  c.k = num("k");
  c.vocab = num("vocab");
  c.card_dim = num("card_dim");
  c.cat_dim = num("cat_dim");
  c.hidden = num("hidden");
  c.layers = num("layers");
  c.d_z = num("d_z");
  {
    std::string s = meta("head_weights");
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    for (auto& w : c.head_weights) {
      std::string tok;
      in >> tok;
      w = parse_double(tok, 0);
    }
  }
  EncoderParams p = init_encoder(c, 0);
  p.cont_mean = f.at("cont_mean");
  p.cont_std = f.at("cont_std");
  p.for_each([&](const std::string& n, MatrixXd& m) {
    const auto& src = f.at(n);
    if (src.rows() != m.rows() || src.cols() != m.cols())
      throw DataError("encoder tensor '" + n + "' has the wrong shape");
    m = src;
  });
  return Encoder(std::move(p));
}

void save_encoder(const std::string& path, const Encoder& enc) { save_tensors(path, encoder_to_tensors(enc)); }

Encoder load_encoder(const std::string& path) { return encoder_from_tensors(load_tensors(path)); }

}  // namespace deckshift
