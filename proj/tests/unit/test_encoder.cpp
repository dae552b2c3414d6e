#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "deckshift/encoder.hpp"
#include "deckshift/flatfile.hpp"
#include "fixtures.hpp"

using namespace deckshift;
using Eigen::VectorXd;

namespace {

struct Tiny {
  Population pop;
  std::vector<PlayerSequence> seqs;
  Encoder enc;
};

Tiny tiny(std::uint64_t seed = 1) {
  Tiny t;
  t.pop = fixture::small_population(3, seed, 40, 40);
  t.seqs = fixture::true_sequences(t.pop);
  auto cfg = fixture::tiny_encoder_config(t.pop.catalog.size());
  t.enc = Encoder(init_encoder(cfg, seed));
  return t;
}

std::vector<Window> some_windows(const Tiny& t) {
  return {make_window(t.seqs[0], 0), make_window(t.seqs[1], 7), make_window(t.seqs[2], 20)};
}

// Independent central-difference check over every parameter entry.
double max_fd_error(Encoder enc, const std::vector<Window>& batch) {
  EncoderParams grad = enc.params().zeros_like();
  enc.loss(batch, &grad);
  std::vector<Eigen::MatrixXd*> vals, grads;
  enc.mutable_params().for_each([&](const std::string&, Eigen::MatrixXd& m) { vals.push_back(&m); });
  grad.for_each([&](const std::string&, Eigen::MatrixXd& m) { grads.push_back(&m); });
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t p = 0; p < vals.size(); ++p)
    for (Eigen::Index i = 0; i < vals[p]->size(); ++i) {
      double& v = vals[p]->data()[i];
      const double orig = v;
      v = orig + h;
      const double up = enc.loss(batch);
      v = orig - h;
      const double down = enc.loss(batch);
      v = orig;
      const double fd = (up - down) / (2 * h);
      const double an = grads[p]->data()[i];
      const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, std::abs(fd - an) / scale);
    }
  return worst;
}

}  // namespace

TEST(Encoder, AnalyticGradientMatchesFiniteDifferences) {
  const auto t = tiny();
  EXPECT_LT(max_fd_error(t.enc, some_windows(t)), 1e-3);
  const auto lib = gradient_check(t.enc, some_windows(t));
  EXPECT_LT(lib.max_rel_error, 1e-3) << lib.worst_param;
  auto p = t.enc.params();
  EXPECT_EQ(lib.checked, p.num_parameters());
}

TEST(Encoder, GradientIsLinearInHeadWeights) {
  const auto t = tiny(2);
  const auto batch = some_windows(t);
  const std::array<double, kNumHeads> w{1.5, 1.5, 1.0, 1.0, 0.5};
  std::array<double, kNumHeads> w2 = w;
  w2[kHeadWin] *= 2.0;
  std::array<double, kNumHeads> only_win{0, 0, 1.0, 0, 0};
  auto g = t.enc.params().zeros_like();
  auto g2 = g, gw = g;
  t.enc.loss(batch, w, &g);
  t.enc.loss(batch, w2, &g2);
  t.enc.loss(batch, only_win, &gw);
  // head_w row 4 only sees the win head.
  EXPECT_TRUE(g2.head_w.row(4) == 2.0 * g.head_w.row(4));
  EXPECT_TRUE(gw.head_w.row(4) == g.head_w.row(4));
  EXPECT_TRUE(gw.head_w.row(0).isZero(0.0));
}

TEST(Encoder, SingleTaskLossIsWeightedBce) {
  const auto t = tiny(3);
  const auto batch = some_windows(t);
  const auto out = t.enc.batch_head_outputs(batch);
  double want = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const double p = 1.0 / (1.0 + std::exp(-out(0, static_cast<Eigen::Index>(j))));
    const double y = batch[j].target.next_dc;
    want -= y * std::log(p) + (1 - y) * std::log(1 - p);
  }
  want = 1.5 * want / static_cast<double>(batch.size());
  EXPECT_NEAR(t.enc.loss(batch, {1.5, 0, 0, 0, 0}, nullptr), want, 1e-12);
}

TEST(Encoder, MasteryInjectionIsAdditive) {
  const auto t = tiny(4);
  for (const auto& w : some_windows(t)) {
    const auto e = t.enc.encode(w, VectorXd::Zero(4));
    EXPECT_TRUE(e.z_cls == VectorXd(e.z_raw + t.enc.mastery_projection(w.mf)));
    EXPECT_TRUE(e.z_raw == t.enc.encode_raw(w));
    auto zero = w;
    zero.mf.fill(0.0);
    const auto z = t.enc.encode(zero, VectorXd::Zero(4));
    EXPECT_TRUE(z.z_cls == z.z_raw);
  }
}

TEST(Encoder, UserVectorFollowsTheEmaRecurrence) {
  const auto t = tiny(5);
  const auto se = encode_sequence(t.enc, t.seqs[0]);
  ASSERT_EQ(se.z_cls.size(), t.seqs[0].steps.size() - 10 + 1);
  EXPECT_TRUE(se.z_user[0].isZero(0.0));
  for (std::size_t i = 1; i < se.z_user.size(); ++i)
    EXPECT_TRUE(se.z_user[i] == VectorXd(0.9 * se.z_user[i - 1] + 0.1 * se.z_cls[i - 1]));
  EXPECT_LT((se.z_user[1] - 0.1 * se.z_cls[0]).norm(), 1e-15);
  EXPECT_LT((se.z_user[2] - (0.09 * se.z_cls[0] + 0.1 * se.z_cls[1])).norm(), 1e-15);
}

TEST(Encoder, TruncatingTheFutureLeavesEarlierEmbeddingsUnchanged) {
  const auto t = tiny(6);
  const auto full = encode_sequence(t.enc, t.seqs[1]);
  for (std::size_t i : {0u, 5u, 17u}) {
    auto cut = t.seqs[1];
    cut.steps.resize(i + 10);
    const auto part = encode_sequence(t.enc, cut);
    ASSERT_EQ(part.z_user.size(), i + 1);
    EXPECT_TRUE(part.z_user[i] == full.z_user[i]);
    EXPECT_TRUE(part.z_cls[i] == full.z_cls[i]);
    const auto capped = encode_sequence(t.enc, t.seqs[1], i);
    EXPECT_TRUE(capped.z_user.back() == full.z_user[i]);
  }
}

TEST(Encoder, BatchEqualsElementwise) {
  const auto t = tiny(7);
  const auto batch = some_windows(t);
  const auto out = t.enc.batch_head_outputs(batch);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto e = t.enc.encode(batch[j], VectorXd::Zero(4));
    EXPECT_LT((out.col(static_cast<Eigen::Index>(j)) - t.enc.head_outputs(e.z_cls)).norm(), 1e-12);
  }
  EXPECT_TRUE(t.enc.encode_raw(batch[0]) == t.enc.encode_raw(batch[0]));
}

TEST(Encoder, UnknownCardsShareTheReservedEmbedding) {
  const auto t = tiny(8);
  auto seq = t.seqs[0];
  const auto vocab = static_cast<CardIndex>(t.pop.catalog.size());
  auto a = seq, b = seq;
  a.steps[3].deck[0] = static_cast<CardIndex>(vocab + 5);
  b.steps[3].deck[0] = vocab;
  EXPECT_TRUE(t.enc.encode_raw(make_window(a, 0)) == t.enc.encode_raw(make_window(b, 0)));
  EXPECT_FALSE(t.enc.encode_raw(make_window(a, 0)) == t.enc.encode_raw(make_window(seq, 0)));
}

TEST(Encoder, TensorRoundTripIsBitExact) {
  const auto t = tiny(9);
  std::stringstream io;
  write_tensors(io, encoder_to_tensors(t.enc));
  const auto back = encoder_from_tensors(read_tensors(io));
  for (const auto& w : some_windows(t)) {
    const auto a = t.enc.encode(w, VectorXd::Ones(4));
    const auto b = back.encode(w, VectorXd::Ones(4));
    EXPECT_TRUE(a.z_cls == b.z_cls);
    EXPECT_TRUE(a.z_user_next == b.z_user_next);
  }
}

TEST(Encoder, ConfigValidation) {
  auto c = fixture::tiny_encoder_config(10);
  c.hidden = 0;
  EXPECT_THROW(init_encoder(c, 1), ConfigError);
  c = fixture::tiny_encoder_config(10);
  c.head_weights[0] = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  std::istringstream in("encoder.hidden = 6\nencoder.optimizer = adam\nencoder.head_weights = 1 1 1 1\n");
  auto d = fixture::tiny_encoder_config(10);
  EXPECT_THROW(d.apply(KeyValueConfig::parse(in)), ConfigError);
  std::istringstream ok("encoder.hidden = 6\nencoder.optimizer = adam\n");
  d.apply(KeyValueConfig::parse(ok));
  EXPECT_EQ(d.hidden, 6u);
  EXPECT_EQ(d.optim.kind, OptimizerKind::Adam);
}

TEST(Pretrain, LossFallsAndSwitchingIsPredictable) {
  auto pop = fixture::small_population(160, 13, 150, 170);
  const auto seqs = fixture::true_sequences(pop);
  const auto splits = make_splits(pop.histories);
  auto cfg = fixture::tiny_encoder_config(pop.catalog.size());
  cfg.card_dim = 4;
  cfg.hidden = 8;
  cfg.layers = 1;
  cfg.d_z = 8;
  cfg.epochs = 4;
  cfg.batch = 64;
  cfg.patience = 10;
  cfg.optim.kind = OptimizerKind::Adam;
  cfg.optim.lr = 3e-3;
  Encoder enc(init_encoder(cfg, 1));
  const auto train = extract_windows(pop.histories, splits, Split::Train);
  const auto val = extract_windows(pop.histories, splits, Split::Val);
  const auto rep = pretrain(enc, seqs, train, val);
  ASSERT_EQ(rep.train_loss.size(), 4u);
  EXPECT_LT(rep.train_loss[1], rep.train_loss[0]);
  EXPECT_LT(rep.train_loss[2], rep.train_loss[1]);
  EXPECT_GT(rep.val_metrics.auc_dc, 0.75);
  EXPECT_GT(rep.val_metrics.windows, 0u);
  const auto w = make_window(seqs[0], 0);
  EXPECT_TRUE(enc.encode_raw(w) == enc.encode_raw(w));
}

TEST(Pretrain, EmptyTrainingSetThrows) {
  const auto t = tiny();
  Encoder e = t.enc;
  EXPECT_THROW(pretrain(e, t.seqs, {}, {}), DataError);
}
