#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wit/autodiff/gradcheck.hpp"
#include "wit/training/procedures.hpp"

using namespace wit;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Small task and model so a few epochs take well under a second.
struct Small {
  video::SyntheticTaskSpec spec;
  video::Dataset data;
  ModelDims dims;
  TrainConfig cfg;

  explicit Small(std::size_t videos = 6, std::size_t captions = 2) {
    spec.K = 6;
    spec.C = 4;
    spec.C_a = 2;
    spec.N = spec.M = 2;
    spec.min_event_length = spec.max_event_length = 2;
    spec.captions_per_video = captions;
    data = video::make_dataset(spec, videos);
    dims.channels = spec.C;
    dims.audio = spec.C_a;
    dims.hidden = 6;
    dims.vocab = data.vocab.size();
    cfg.learning_rate = 0.05;
    cfg.epochs = 3;
    cfg.pretrain_epochs = 1;
  }
  Model model(std::uint64_t seed = 3) const { return Model::create(dims, seed); }
};

}  // namespace

// ------------------------------------------------------------ cross-entropy

TEST(Xent, CertainModelHasZeroLoss) {
  Graph g;
  std::vector<Var> lp;
  const TokenSeq target = {3, 4, Vocabulary::kEos};
  for (std::size_t t = 0; t < target.size(); ++t) {
    Tensor v({6}, -1e3);
    v[target[t]] = 0.0;
    lp.push_back(g.constant(v));
  }
  EXPECT_EQ(xent_loss(g, lp, target).item(), 0.0);
}

TEST(Xent, UniformModelCostsNLogV) {
  Graph g;
  const std::size_t V = 7;
  std::vector<Var> lp(5, g.constant(Tensor({V}, -std::log(static_cast<double>(V)))));
  const TokenSeq target = {3, 6, 5, Vocabulary::kEos, Vocabulary::kPad};
  EXPECT_NEAR(xent_loss(g, lp, target).item(), 4 * std::log(7.0), 1e-14);
}

TEST(Xent, MatchesLoopOracleAndIgnoresPadding) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g;
    std::vector<Var> lp;
    std::vector<Tensor> raw;
    for (int t = 0; t < 8; ++t) {
      raw.push_back(random_tensor({9}, rng));
      lp.push_back(log_softmax(g.constant(raw.back())));
    }
    TokenSeq target = {4, 8, 3, 5, Vocabulary::kEos};
    double oracle = 0;
    for (std::size_t t = 0; t < target.size(); ++t) {
      double z = 0;
      for (double v : raw[t].values()) z += std::exp(v);
      oracle -= raw[t][target[t]] - std::log(z);
    }
    EXPECT_NEAR(xent_loss(g, lp, target).item(), oracle, 1e-12);
    const double base = xent_loss(g, lp, target).item();
    for (int pads = 1; pads <= 3; ++pads) {
      target.push_back(Vocabulary::kPad);
      EXPECT_EQ(xent_loss(g, lp, target).item(), base);
    }
  }
}

TEST(Xent, RejectsOutOfVocabularyToken) {
  Graph g;
  std::vector<Var> lp(2, g.constant(Tensor({4})));
  EXPECT_THROW(xent_loss(g, lp, TokenSeq{3, 4}), std::out_of_range);
  EXPECT_THROW(xent_loss(g, lp, TokenSeq{3, 3, 2}), std::invalid_argument);
}

// ------------------------------------------------------------ reward and L_R+

TEST(Reward, Definition) {
  EXPECT_EQ(reward(1.25, 1.25), 0.0);
  EXPECT_DOUBLE_EQ(reward(2.0, 1.5), 0.5);
  EXPECT_DOUBLE_EQ(reward(1.5, 2.0), -reward(2.0, 1.5));
}

namespace {

struct RlEval {
  double loss, grad;
};

RlEval rl_at(double diff, double alpha) {
  Graph g;
  Var a = g.variable(Tensor::scalar(alpha));
  Var l = rl_loss_plus(g, diff, 0.0, a);
  RlEval out{l.item(), 0.0};
  if (g.requires_grad(l)) {
    g.backward(l);
    out.grad = (*g.grad(a))[0];
  }
  return out;
}

}  // namespace

TEST(RlLoss, EqualRewardsGiveZero) {
  auto r = rl_at(0.0, 0.4);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad, 0.0);
}

TEST(RlLoss, ImprovementRaisesKeyProbability) {
  auto r = rl_at(1.0, 0.5);
  EXPECT_NEAR(r.loss, 0.6931471805599453, 1e-15);
  EXPECT_NEAR(r.grad, -2.0, 1e-14);
}

TEST(RlLoss, RegressionLowersKeyProbability) {
  auto r = rl_at(-1.0, 0.9);
  // -|d| log(1 - alpha) = -log 0.1; d/dalpha = |d| / (1 - alpha) = 10
  EXPECT_NEAR(r.loss, -std::log(0.1), 1e-13);
  EXPECT_NEAR(r.grad, 10.0, 1e-12);
  const double eps = 1e-6;
  const double fd = (rl_at(-1.0, 0.9 + eps).loss - rl_at(-1.0, 0.9 - eps).loss) / (2 * eps);
  EXPECT_GT(fd, 0.0);
  EXPECT_GT(rl_at(-1.0, 0.9 - 0.01).loss, -1.0);
  EXPECT_LT(rl_at(-1.0, 0.9 - 0.01).loss, r.loss);  // a gradient step down lowers the loss
}

TEST(RlLoss, SignGridAgainstCentralDifferences) {
  for (double diff : {-10.0, -1.0, -0.1, 0.1, 1.0, 10.0})
    for (double alpha : {0.05, 0.5, 0.95}) {
      auto r = rl_at(diff, alpha);
      const double eps = 1e-6;
      const double fd = (rl_at(diff, alpha + eps).loss - rl_at(diff, alpha - eps).loss) / (2 * eps);
      const double analytic = diff > 0 ? -diff / alpha : -diff / (1.0 - alpha);
      EXPECT_NEAR(r.grad, analytic, 1e-12 * std::abs(analytic));
      EXPECT_NEAR(r.grad, fd, 1e-8 * std::max(1.0, std::abs(fd))) << diff << " " << alpha;
      if (diff > 0) EXPECT_LT(r.grad, 0.0);
      else EXPECT_GT(r.grad, 0.0);
      EXPECT_GT(r.loss, 0.0);
    }
}

TEST(RlLoss, ClampsExtremeProbabilities) {
  auto hi = rl_at(1.0, 1.0);
  EXPECT_NEAR(hi.loss, -std::log(1.0 - kAlphaClamp), 1e-15);
  auto lo = rl_at(-1.0, 0.0);
  EXPECT_NEAR(lo.loss, -std::log(1.0 - kAlphaClamp), 1e-15);
  EXPECT_TRUE(std::isfinite(rl_at(1.0, 0.0).loss));
  EXPECT_THROW(rl_at(1.0, 1.5), std::domain_error);
  EXPECT_THROW(rl_at(1.0, std::nan("")), std::domain_error);
}

TEST(RlLoss, RewardIsDetached) {
  // The loss is linear in the reward change and only alpha is a graph input.
  auto a = rl_at(2.0, 0.3), b = rl_at(1.0, 0.3);
  EXPECT_NEAR(a.loss, 2 * b.loss, 1e-15);
  EXPECT_NEAR(a.grad, 2 * b.grad, 1e-14);
}

// ------------------------------------------------------------ combined

TEST(Combined, Arithmetic) {
  Graph g;
  auto c = [&](double v) { return g.constant(Tensor::scalar(v)); };
  EXPECT_DOUBLE_EQ(combined_loss(c(1), c(2), c(10), 0.03).item(), 3.3);
  EXPECT_DOUBLE_EQ(combined_loss(c(1), c(2), c(10), 0.0).item(), 3.0);
  EXPECT_THROW(combined_loss(c(1), c(2), c(10), -0.1), std::invalid_argument);
}

TEST(Combined, GradientIsWeightedSumOfParts) {
  const double beta = 0.03;
  auto f = [beta](Graph& g, Var x) {
    Var xe1 = sum(mul(slice(x, 0, 0, 1), slice(x, 0, 0, 1)));
    Var xe2 = sum(tanh(slice(x, 0, 1, 2)));
    Var alpha = reshape(sigmoid(slice(x, 0, 2, 3)), {1});
    return combined_loss(xe1, xe2, rl_loss_plus(g, 0.7, 0.2, alpha), beta);
  };
  const Tensor x = Tensor::vector({0.3, -0.4, 0.8});
  EXPECT_LT(finite_difference_check(f, x, 1e-6), 1e-8);

  Graph g;
  Var xv = g.variable(x);
  g.backward(f(g, xv));
  const double s = 1.0 / (1.0 + std::exp(-0.8));
  EXPECT_NEAR((*g.grad(xv))[0], 2 * 0.3, 1e-14);
  EXPECT_NEAR((*g.grad(xv))[1], 1 - std::tanh(-0.4) * std::tanh(-0.4), 1e-14);
  EXPECT_NEAR((*g.grad(xv))[2], beta * -0.5 * (1 - s), 1e-14);
}

// ------------------------------------------------------------ SCST loss

TEST(Scst, ZeroAdvantageGivesZeroLoss) {
  Graph g;
  Var z = g.variable(Tensor::vector({0.3, -0.2}));
  std::vector<Var> lp = {log_softmax(z), log_softmax(z)};
  Var l = scst_loss(g, lp, TokenSeq{0, 1}, 0.0);
  EXPECT_EQ(l.item(), 0.0);
  EXPECT_FALSE(g.requires_grad(l));
}

// Two-token vocabulary: d/dz [-A log softmax(z)_0] = -A (e_0 - p).
TEST(Scst, GradientSignFollowsAdvantage) {
  for (double adv : {-0.8, 0.5}) {
    Graph g;
    Var z = g.variable(Tensor::vector({0.3, -0.2}));
    g.backward(scst_loss(g, {log_softmax(z)}, TokenSeq{0}, adv));
    const double p0 = 1.0 / (1.0 + std::exp(-0.5));
    const double dz0 = -adv * (1 - p0);
    EXPECT_NEAR((*g.grad(z))[0], dz0, 1e-14);
    EXPECT_NEAR((*g.grad(z))[1], -dz0, 1e-14);
    // descent moves logit 0 up exactly when the sample beat the baseline
    EXPECT_EQ(-(*g.grad(z))[0] > 0, adv > 0);
  }
}

// ------------------------------------------------------------ optimizer

TEST(Optim, SgdStepAndClipping) {
  ParamStore s;
  auto w = s.add("w", Tensor::vector({1.0, 2.0}));
  GradBuffer g(s);
  g[w] = Tensor::vector({6.0, 8.0});
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 5.0), 10.0);
  EXPECT_NEAR(g.global_norm(), 5.0, 1e-15);
  Optimizer opt(OptimizerKind::Sgd, 0.1, s);
  opt.step(s, g);
  EXPECT_NEAR(s.value(w)[0], 1.0 - 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(s.value(w)[1], 2.0 - 0.1 * 4.0, 1e-15);
  GradBuffer small(s);
  small[w] = Tensor::vector({0.3, 0.4});
  clip_global_norm(small, 5.0);
  EXPECT_EQ(small[w][0], 0.3);
}

TEST(Optim, AdamFirstStepIsLearningRateTimesSign) {
  ParamStore s;
  auto w = s.add("w", Tensor::vector({0.0, 0.0, 0.0}));
  GradBuffer g(s);
  g[w] = Tensor::vector({3.0, -1e-3, 0.0});
  Optimizer opt(OptimizerKind::Adam, 0.01, s);
  opt.step(s, g);
  EXPECT_NEAR(s.value(w)[0], -0.01, 1e-10);
  EXPECT_NEAR(s.value(w)[1], 0.01, 1e-7);
  EXPECT_EQ(s.value(w)[2], 0.0);
}

TEST(Optim, RestrictedParametersStayFixed) {
  ParamStore s;
  auto a = s.add("a", Tensor::vector({1.0}));
  auto b = s.add("b", Tensor::vector({1.0}));
  GradBuffer g(s);
  g[a] = Tensor::vector({1.0});
  g[b] = Tensor::vector({1.0});
  Optimizer opt(OptimizerKind::Sgd, 0.5, s);
  opt.restrict_to({b});
  opt.step(s, g);
  EXPECT_EQ(s.value(a)[0], 1.0);
  EXPECT_EQ(s.value(b)[0], 0.5);
  EXPECT_THROW(optimizer_from_name("rmsprop"), std::invalid_argument);
}

// ------------------------------------------------------------ schedule and ledger

TEST(Train, PretrainOnlyLeavesLedgerUntouched) {
  Small t;
  t.cfg.epochs = t.cfg.pretrain_epochs = 2;
  Model m = t.model();
  RewardLedger ledger;
  auto r = train(m, t.data.samples, t.cfg, ledger);
  ASSERT_EQ(r.history.size(), 2u);
  for (const auto& e : r.history) {
    EXPECT_EQ(e.phase, 'A');
    EXPECT_TRUE(std::isnan(e.mean_xe2));
    EXPECT_EQ(e.rl_applied, 0u);
  }
  EXPECT_TRUE(ledger.empty());
  EXPECT_EQ(ledger.epoch(), 0u);
}

TEST(Train, LedgerProtocolOnOneSample) {
  Small t(1, 1);
  t.cfg.pretrain_epochs = 0;
  t.cfg.epochs = 2;
  Model m = t.model();
  RewardLedger ledger;
  std::vector<double> stored;
  TrainHooks hooks;
  hooks.on_epoch_end = [&](const EpochStats&, const Model&) { stored.push_back(*ledger.get(t.data.samples[0].id, 0)); };
  auto r = train(m, t.data.samples, t.cfg, ledger, hooks);
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_EQ(r.history[0].rl_applied, 0u);  // seed only
  EXPECT_EQ(r.history[1].rl_applied, 1u);
  ASSERT_EQ(stored.size(), 2u);
  EXPECT_EQ(stored[0], r.history[0].mean_reward);
  EXPECT_EQ(stored[1], r.history[1].mean_reward);
  EXPECT_EQ(ledger.epoch(), 2u);
  EXPECT_EQ(ledger.size(), 1u);
}

// The second epoch's update must use the first epoch's reward as threshold.
TEST(Train, SecondEpochLossUsesStoredThreshold) {
  Small t(1, 1);
  t.cfg.pretrain_epochs = 0;
  t.cfg.epochs = 1;
  t.cfg.dropout = 0.0;
  t.cfg.scheduled_sampling_p = 0.0;
  t.cfg.beta = 1.0;
  Model m = t.model();
  RewardLedger ledger;
  train(m, t.data.samples, t.cfg, ledger);
  const double threshold = *ledger.get(t.data.samples[0].id, 0);

  PairContext ctx;
  ctx.two_step = true;
  ctx.threshold = threshold;
  GradBuffer gb(m.store);
  auto out = forward_backward(m, t.data.samples[0], 0, t.cfg, ctx, gb);
  EXPECT_TRUE(out.rl_applied);
  const double d = out.reward - threshold;
  const double rl = d > 0 ? -d * std::log(out.alpha_key) : d * std::log(1 - out.alpha_key);
  EXPECT_NEAR(out.loss, out.xe1 + out.xe2 + rl, 1e-12);
}

TEST(Train, PhaseBoundaryAndHistoryShape) {
  Small t;
  Model m = t.model();
  RewardLedger ledger;
  auto r = train(m, t.data.samples, t.cfg, ledger);
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_EQ(r.history[0].phase, 'A');
  EXPECT_EQ(r.history[1].phase, 'B');
  EXPECT_EQ(r.history[1].rl_applied, 0u);
  EXPECT_EQ(r.history[2].rl_applied, t.data.samples.size() * 2);
  for (const auto& e : r.history) {
    EXPECT_TRUE(std::isfinite(e.mean_xe1));
    EXPECT_GE(e.keyframe_inside_event_fraction, 0.0);
    EXPECT_LE(e.keyframe_inside_event_fraction, 1.0);
  }
  EXPECT_NEAR(r.history[2].mean_reward, r.history[2].mean_xe1 - r.history[2].mean_xe2, 1e-12);
}

TEST(Train, WorkersAndBatchesAreDeterministic) {
  Small t;
  t.cfg.batch_size = 4;
  auto run = [&](std::size_t workers) {
    TrainConfig c = t.cfg;
    c.workers = workers;
    Model m = t.model();
    RewardLedger ledger;
    train(m, t.data.samples, c, ledger);
    return m.store;
  };
  const ParamStore a = run(1), b = run(3), c = run(1);
  EXPECT_TRUE(a == c);
  EXPECT_TRUE(a == b);
}

TEST(Train, NonFiniteLossNamesTheSample) {
  Small t;
  Model m = t.model();
  m.store.value(m.dec.b_out).fill(std::nan(""));
  RewardLedger ledger;
  try {
    train(m, t.data.samples, t.cfg, ledger);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("vid"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsBadConfig) {
  Small t;
  Model m = t.model();
  RewardLedger ledger;
  for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& c) { c.beta = -1; }, [](TrainConfig& c) { c.scheduled_sampling_p = 1.5; },
           [](TrainConfig& c) { c.dropout = 1.0; }, [](TrainConfig& c) { c.optimizer = "lbfgs"; }}) {
    TrainConfig c = t.cfg;
    mutate(c);
    EXPECT_THROW(train(m, t.data.samples, c, ledger), std::invalid_argument);
  }
  EXPECT_THROW(train(m, {}, t.cfg, ledger), std::invalid_argument);
}

TEST(Train, BestModelTrackedByValidationCider) {
  Small t;
  auto val = video::make_dataset(t.spec, 3, 1000, "val");
  Model m = t.model();
  RewardLedger ledger;
  TrainHooks hooks;
  hooks.validation = &val.samples;
  auto r = train(m, t.data.samples, t.cfg, ledger, hooks);
  ASSERT_TRUE(r.best.has_value());
  EXPECT_GE(r.best_epoch, 2u);  // phase-B epochs only
  double best = -1;
  for (const auto& e : r.history)
    if (e.phase == 'B') best = std::max(best, e.val_cider);
  EXPECT_EQ(r.best_val_cider, best);
  EXPECT_NEAR(evaluate(*r.best, val.samples).cider, best, 1e-12);
}

// ------------------------------------------------------------ frozen keys

TEST(Freeze, DefaultKeysMeanNoRefocusing) {
  Small t;
  video::KeyFrameMap keys;
  for (const auto& s : t.data.samples) keys[s.id] = t.spec.K / 2;
  Model m = t.model();
  RewardLedger ledger;
  TrainHooks hooks;
  hooks.key_overrides = &keys;
  auto r = train(m, t.data.samples, t.cfg, ledger, hooks);
  EXPECT_TRUE(ledger.empty());
  for (const auto& e : r.history) {
    EXPECT_EQ(e.rl_applied, 0u);
    EXPECT_TRUE(std::isnan(e.mean_alpha_key));
  }
  EvalOptions eo;
  eo.key_overrides = &keys;
  for (const auto& v : evaluate(m, t.data.samples, eo).videos) {
    EXPECT_EQ(v.i_key, t.spec.K / 2);
    EXPECT_TRUE(v.alpha.empty());
  }
}

TEST(Freeze, RetrainedModelUsesSavedKeys) {
  Small t;
  Model best = t.model(5);
  RewardLedger ledger;
  train(best, t.data.samples, t.cfg, ledger);
  auto extra = video::make_dataset(t.spec, 2, 500, "x");
  auto fr = freeze_keyframes_retrain(best, t.data.samples, {&extra.samples}, t.cfg, 9);
  EXPECT_EQ(fr.keys.size(), t.data.samples.size() + 2);
  EXPECT_EQ(fr.keys, [&] {
    auto k = predict_keyframes(best, t.data.samples);
    for (auto& [id, v] : predict_keyframes(best, extra.samples)) k[id] = v;
    return k;
  }());
  EvalOptions eo;
  eo.key_overrides = &fr.keys;
  for (const auto& v : evaluate(fr.model, t.data.samples, eo).videos) EXPECT_EQ(v.i_key, fr.keys.at(v.id));
  // fresh initialization, then trained
  EXPECT_FALSE(fr.model.store == best.store);
  for (const auto& e : fr.training.history) EXPECT_EQ(e.rl_applied, 0u);
}

// ------------------------------------------------------------ self-critical fine-tuning

TEST(ScstFinetune, OnlyDecoderMoves) {
  Small t;
  Model m = t.model();
  RewardLedger ledger;
  train(m, t.data.samples, t.cfg, ledger);
  const ParamStore before = m.store;
  TrainConfig c = t.cfg;
  c.learning_rate = 0.01;
  auto hist = scst_finetune(m, t.data.samples, ScstMetric::Cider, c, 2);
  ASSERT_EQ(hist.size(), 2u);
  const auto dec = m.decoder_params();
  bool decoder_moved = false;
  for (ParamId id = 0; id < m.store.size(); ++id) {
    const bool is_dec = std::find(dec.begin(), dec.end(), id) != dec.end();
    if (is_dec) decoder_moved |= !(m.store.value(id) == before.value(id));
    else EXPECT_TRUE(m.store.value(id) == before.value(id)) << m.store.name(id);
  }
  EXPECT_TRUE(decoder_moved);
  for (const auto& e : hist) {
    EXPECT_GE(e.mean_sample_reward, 0.0);
    EXPECT_GE(e.mean_greedy_reward, 0.0);
  }
}

TEST(ScstFinetune, MetricNames) {
  EXPECT_EQ(scst_metric_from_name("cider"), ScstMetric::Cider);
  EXPECT_EQ(scst_metric_from_name("rouge_l"), ScstMetric::RougeL);
  EXPECT_EQ(scst_metric_from_name("rouge-l"), ScstMetric::RougeL);
  EXPECT_THROW(scst_metric_from_name("bleu"), std::invalid_argument);
}
