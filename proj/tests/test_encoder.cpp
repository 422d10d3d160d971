#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wit/autodiff/gradcheck.hpp"
#include "wit/encoder/vre.hpp"

using namespace wit;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Gives every parameter a random nonzero value (biases start at zero otherwise).
void randomize(ParamStore& store, std::mt19937_64& rng, double scale = 0.5) {
  for (ParamId i = 0; i < store.size(); ++i) store.value(i) = random_tensor(store.value(i).shape(), rng, scale);
}

void copy_gru(ParamStore& dst, const GruParams& d, const ParamStore& src, const GruParams& s) {
  for (auto [a, b] : {std::pair{d.W_xz, s.W_xz}, {d.W_hz, s.W_hz}, {d.b_z, s.b_z}, {d.W_xr, s.W_xr}, {d.W_hr, s.W_hr},
                      {d.b_r, s.b_r}, {d.W_xn, s.W_xn}, {d.W_hn, s.W_hn}, {d.b_n, s.b_n}})
    dst.value(a) = src.value(b);
}

Tensor reverse_rows(const Tensor& V) {
  const std::size_t K = V.dim(0), C = V.dim(1);
  Tensor out(V.shape());
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < C; ++c) out.at(k, c) = V.at(K - 1 - k, c);
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

// ------------------------------------------------------------ GRU

TEST(Gru, ZeroParamsHalveHiddenState) {
  ParamStore store;
  std::mt19937_64 rng(1);
  auto p = GruParams::create(store, "g.", 3, 4, rng);
  for (ParamId i = 0; i < store.size(); ++i) store.value(i).fill(0.0);
  Graph g(store);
  Tensor h = Tensor::vector({0.4, -0.8, 0.1, 0.9});
  Var out = gru_step(g, p, g.constant(Tensor::vector({1, 2, 3})), g.constant(h));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.value()[i], 0.5 * h[i], 1e-15);
}

TEST(Gru, OutputStaysInOpenUnitBox) {
  ParamStore store;
  std::mt19937_64 rng(2);
  auto p = GruParams::create(store, "g.", 5, 6, rng);
  // Moderate scale: in doubles tanh rounds to exactly +-1 beyond |x| ~ 19.
  randomize(store, rng, 1.0);
  std::uniform_real_distribution<double> u(-0.999, 0.999);
  for (int trial = 0; trial < 100; ++trial) {
    Graph g(store);
    Tensor h({6});
    for (auto& v : h.values()) v = u(rng);
    Var out = gru_step(g, p, g.constant(random_tensor({5}, rng, 1.0)), g.constant(h));
    for (double v : out.value().values()) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Gru, GradientMatchesFiniteDifferences) {
  ParamStore store;
  std::mt19937_64 rng(3);
  auto p = GruParams::create(store, "g.", 3, 4, rng);
  randomize(store, rng);
  const Tensor x = random_tensor({3}, rng), h = random_tensor({4}, rng, 0.5), w = random_tensor({4}, rng);
  auto res = finite_difference_check(store, [&](Graph& g) {
    return sum(mul(gru_step(g, p, g.constant(x), g.constant(h)), g.constant(w)));
  });
  EXPECT_LT(res.max_rel_error, 1e-6) << res.worst;
}

TEST(Gru, ShapeMismatchThrows) {
  ParamStore store;
  std::mt19937_64 rng(4);
  auto p = GruParams::create(store, "g.", 3, 4, rng);
  Graph g(store);
  EXPECT_THROW(gru_step(g, p, g.constant(Tensor({2})), g.constant(Tensor({4}))), ShapeError);
  EXPECT_THROW(gru_step(g, p, g.constant(Tensor({3})), g.constant(Tensor({5}))), ShapeError);
}

// ------------------------------------------------------------ KBiGRU

TEST(KBiGru, SingleFrameIsOneStepEachWay) {
  ParamStore store;
  std::mt19937_64 rng(5);
  auto p = KBiGruParams::create(store, 3, 4, rng);
  randomize(store, rng);
  const Tensor V = random_tensor({1, 3}, rng);
  Graph g(store);
  auto out = kbigru_encode(g, p, g.constant(V), 0);

  Graph ref(store);
  Var x = ref.constant(Tensor::vector({V[0], V[1], V[2]}));
  Var zero = ref.constant(Tensor({4}));
  Var gl = gru_step(ref, p.left, x, zero), gr = gru_step(ref, p.right, x, zero);
  // tanh([gl, gr] W_c + b_c), by hand
  const Tensor& Wc = store.value(p.W_c);
  const Tensor& bc = store.value(p.b_c);
  for (std::size_t j = 0; j < 4; ++j) {
    double acc = bc[j];
    for (std::size_t i = 0; i < 4; ++i) acc += gl.value()[i] * Wc.at(i, j) + gr.value()[i] * Wc.at(4 + i, j);
    EXPECT_NEAR(out.combined.value()[j], std::tanh(acc), 1e-14);
  }
  EXPECT_EQ(out.left_end.value(), gl.value());
  EXPECT_EQ(out.right_end.value(), gr.value());
}

TEST(KBiGru, FrameOrderPerDirection) {
  ParamStore store;
  std::mt19937_64 rng(6);
  auto p = KBiGruParams::create(store, 2, 3, rng);
  randomize(store, rng);
  const std::size_t K = 5;
  const Tensor V = random_tensor({K, 2}, rng);
  for (std::size_t key = 0; key < K; ++key) {
    Graph g(store);
    auto out = kbigru_encode(g, p, g.constant(V), key);

    Graph ref(store);
    auto row = [&](std::size_t k) { return ref.constant(Tensor::vector({V.at(k, 0), V.at(k, 1)})); };
    Var hl = ref.constant(Tensor({3})), hr = ref.constant(Tensor({3}));
    for (std::size_t i = key + 1; i-- > 0;) hl = gru_step(ref, p.left, row(i), hl);
    for (std::size_t j = key; j < K; ++j) hr = gru_step(ref, p.right, row(j), hr);
    EXPECT_EQ(out.left_end.value(), hl.value()) << "key " << key;
    EXPECT_EQ(out.right_end.value(), hr.value()) << "key " << key;
  }
}

TEST(KBiGru, LastKeyGivesRightOneFrame) {
  ParamStore store;
  std::mt19937_64 rng(7);
  auto p = KBiGruParams::create(store, 2, 3, rng);
  randomize(store, rng);
  const Tensor V = random_tensor({4, 2}, rng);
  Graph g(store);
  auto out = kbigru_encode(g, p, g.constant(V), 3);
  Graph ref(store);
  Var single = gru_step(ref, p.right, ref.constant(Tensor::vector({V.at(3, 0), V.at(3, 1)})), ref.constant(Tensor({3})));
  EXPECT_EQ(out.right_end.value(), single.value());
}

TEST(KBiGru, KeyOutOfRangeThrows) {
  ParamStore store;
  std::mt19937_64 rng(8);
  auto p = KBiGruParams::create(store, 2, 3, rng);
  Graph g(store);
  EXPECT_THROW(kbigru_encode(g, p, g.constant(Tensor({4, 2})), 4), std::out_of_range);
}

// Swapping the direction GRUs, reversing time and mirroring the key must swap
// the terminal states; block-swapping W_c rows then reproduces the output.
TEST(KBiGru, ReversalSymmetryExhaustive) {
  std::mt19937_64 rng(9);
  const std::size_t C = 3, H = 4;
  for (int draw = 0; draw < 3; ++draw) {
    ParamStore a, b;
    auto pa = KBiGruParams::create(a, C, H, rng);
    auto pb = KBiGruParams::create(b, C, H, rng);
    randomize(a, rng);
    copy_gru(b, pb.left, a, pa.right);
    copy_gru(b, pb.right, a, pa.left);
    Tensor Wc(a.value(pa.W_c).shape());
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < H; ++j) {
        Wc.at(i, j) = a.value(pa.W_c).at(H + i, j);
        Wc.at(H + i, j) = a.value(pa.W_c).at(i, j);
      }
    b.value(pb.W_c) = Wc;
    b.value(pb.b_c) = a.value(pa.b_c);

    for (std::size_t K = 1; K <= 5; ++K) {
      const Tensor V = random_tensor({K, C}, rng);
      for (std::size_t key = 0; key < K; ++key) {
        Graph ga(a), gb(b);
        auto oa = kbigru_encode(ga, pa, ga.constant(V), key);
        auto ob = kbigru_encode(gb, pb, gb.constant(reverse_rows(V)), K - 1 - key);
        EXPECT_LE(max_abs_diff(oa.left_end.value(), ob.right_end.value()), 1e-12);
        EXPECT_LE(max_abs_diff(oa.right_end.value(), ob.left_end.value()), 1e-12);
        EXPECT_LE(max_abs_diff(oa.combined.value(), ob.combined.value()), 1e-12) << "K=" << K << " key=" << key;
      }
    }
  }
}

// ------------------------------------------------------------ refocus

namespace {

struct RefocusFixture {
  ParamStore store;
  RefocusParams p;
  std::mt19937_64 rng{11};
  RefocusFixture(std::size_t H = 4, std::size_t C = 3, std::size_t D = 5) {
    p = RefocusParams::create(store, H, C, D, rng);
    randomize(store, rng, 1.0);
  }
  RefocusOutput run(const Tensor& o1, const Tensor& V) {
    Graph g(store);
    auto r = refocus(g, p, g.constant(o1), g.constant(V));
    alpha = r.alpha.value();
    scores = r.scores.value();
    return r;
  }
  Tensor alpha, scores;
};

}  // namespace

TEST(Refocus, IdenticalFramesGiveUniformWeightsAndFirstKey) {
  RefocusFixture f;
  const Tensor o1 = random_tensor({4}, f.rng);
  const Tensor row = random_tensor({3}, f.rng);
  Tensor V({6, 3});
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t c = 0; c < 3; ++c) V.at(k, c) = row[c];
  auto r = f.run(o1, V);
  for (double a : f.alpha.values()) EXPECT_NEAR(a, 1.0 / 6.0, 1e-15);
  EXPECT_EQ(r.i_key, 0u);
}

TEST(Refocus, ScoresMatchIndependentLoops) {
  for (int trial = 0; trial < 20; ++trial) {
    RefocusFixture f;
    f.rng.seed(100 + trial);
    randomize(f.store, f.rng, 1.0);
    const Tensor o1 = random_tensor({4}, f.rng), V = random_tensor({5, 3}, f.rng);
    auto r = f.run(o1, V);
    const Tensor &Wo = f.store.value(f.p.W_o), &Wv = f.store.value(f.p.W_v), &Wa = f.store.value(f.p.W_alpha);
    const double b = f.store.value(f.p.b_alpha)[0];
    std::vector<double> a(5);
    for (std::size_t k = 0; k < 5; ++k) {
      double s = b;
      for (std::size_t d = 0; d < 5; ++d) {
        double q = 0, v = 0;
        for (std::size_t h = 0; h < 4; ++h) q += o1[h] * Wo.at(h, d);
        for (std::size_t c = 0; c < 3; ++c) v += V.at(k, c) * Wv.at(c, d);
        s += Wa.at(d, 0) * std::tanh(q * v);
      }
      a[k] = s;
      EXPECT_NEAR(f.scores[k], s, 1e-13);
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < 5; ++k)
      if (a[k] > a[best]) best = k;
    EXPECT_EQ(r.i_key, best);
    double z = 0;
    for (double s : a) z += std::exp(s);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(f.alpha[k], std::exp(a[k]) / z, 1e-13);
  }
}

TEST(Refocus, ShiftOfAllScoresChangesNothing) {
  RefocusFixture f;
  const Tensor o1 = random_tensor({4}, f.rng), V = random_tensor({7, 3}, f.rng);
  auto r1 = f.run(o1, V);
  const Tensor alpha1 = f.alpha;
  f.store.value(f.p.b_alpha)[0] += 3.7;
  auto r2 = f.run(o1, V);
  EXPECT_EQ(r1.i_key, r2.i_key);
  EXPECT_LE(max_abs_diff(alpha1, f.alpha), 1e-14);
}

TEST(Refocus, PositiveRescaleKeepsArgmax) {
  RefocusFixture f;
  for (int trial = 0; trial < 30; ++trial) {
    const Tensor o1 = random_tensor({4}, f.rng), V = random_tensor({6, 3}, f.rng);
    randomize(f.store, f.rng);
    auto r1 = f.run(o1, V);
    for (double c : {0.01, 0.5, 7.0}) {
      ParamStore saved = f.store;
      for (auto& v : f.store.value(f.p.W_alpha).values()) v *= c;
      f.store.value(f.p.b_alpha)[0] *= c;
      EXPECT_EQ(f.run(o1, V).i_key, r1.i_key) << "scale " << c;
      f.store = saved;
    }
  }
}

TEST(Refocus, AlphaIsProbabilityVector) {
  RefocusFixture f;
  for (int trial = 0; trial < 50; ++trial) {
    randomize(f.store, f.rng, 4.0);
    auto r = f.run(random_tensor({4}, f.rng, 3.0), random_tensor({9, 3}, f.rng, 3.0));
    double s = 0;
    for (double a : f.alpha.values()) {
      EXPECT_GE(a, 0.0);
      s += a;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    for (double a : f.alpha.values()) EXPECT_LE(a, f.alpha[r.i_key]);
  }
}

TEST(Refocus, ArgmaxTiesGoLow) {
  EXPECT_EQ(argmax_lowest(Tensor::vector({0.2, 0.4, 0.4, 0.1})), 1u);
  EXPECT_EQ(argmax_lowest(Tensor::vector({1, 1, 1})), 0u);
  EXPECT_EQ(argmax_lowest(Tensor::vector({-1, -2, 3})), 2u);
}

// ------------------------------------------------------------ VRE

namespace {

struct VreFixture {
  ParamStore store;
  VreParams p;
  std::mt19937_64 rng;
  VreFixture(std::size_t C, std::size_t Ca, std::size_t H, std::uint64_t seed = 12) : rng(seed) {
    p = VreParams::create(store, C, Ca, H, H, rng);
    randomize(store, rng);
  }
};

}  // namespace

TEST(Vre, DefaultKeyIsFloorHalf) {
  EXPECT_EQ(default_key_frame(2), 1u);
  EXPECT_EQ(default_key_frame(5), 2u);
  EXPECT_EQ(default_key_frame(12), 6u);
  VreFixture f(3, 0, 4);
  Graph g(f.store);
  auto r = vre_encode(g, f.p, g.constant(random_tensor({2, 3}, f.rng)), std::nullopt);
  EXPECT_EQ(r.default_key, 1u);
}

TEST(Vre, IdenticalFramesRefocusToFirst) {
  VreFixture f(3, 2, 4);
  Tensor V({6, 3}, 0.3);
  Graph g(f.store);
  auto r = vre_encode(g, f.p, g.constant(V), g.constant(Tensor::vector({0.1, -0.2})));
  EXPECT_EQ(r.i_key, 0u);
  ASSERT_TRUE(r.alpha.has_value());
  for (double v : r.o2.value().values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Vre, MatchesStepByStepConstruction) {
  VreFixture f(3, 2, 4);
  const Tensor V = random_tensor({6, 3}, f.rng), va = random_tensor({2}, f.rng);
  Graph g(f.store);
  auto r = vre_encode(g, f.p, g.constant(V), g.constant(va));

  Graph ref(f.store);
  Var Vc = ref.constant(V), a = ref.constant(va);
  Var h1 = kbigru_encode(ref, f.p.kbigru, Vc, 3).combined;
  Var o1 = tanh(affine(concat({h1, a}), ref.param(f.p.W_a), ref.param(f.p.b_a)));
  auto rf = refocus(ref, f.p.refocus, o1, Vc);
  Var h2 = kbigru_encode(ref, f.p.kbigru, Vc, rf.i_key).combined;
  Var m = tanh(affine(concat({h1, h2}), ref.param(f.p.W_m), ref.param(f.p.b_m)));
  Var o2 = tanh(affine(concat({m, a}), ref.param(f.p.W_a), ref.param(f.p.b_a)));
  EXPECT_EQ(r.i_key, rf.i_key);
  EXPECT_EQ(r.o1.value(), o1.value());
  EXPECT_EQ(r.o2.value(), o2.value());
}

TEST(Vre, KeyOverrideBypassesRefocus) {
  VreFixture f(3, 0, 4);
  const Tensor V = random_tensor({5, 3}, f.rng);
  for (std::size_t key = 0; key < 5; ++key) {
    Graph g(f.store);
    VreOptions opt;
    opt.key_override = key;
    auto r = vre_encode(g, f.p, g.constant(V), std::nullopt, opt);
    EXPECT_EQ(r.i_key, key);
    EXPECT_FALSE(r.alpha.has_value());
    Graph ref(f.store);
    Var h2 = kbigru_encode(ref, f.p.kbigru, ref.constant(V), key).combined;
    EXPECT_EQ(r.h2.value(), h2.value());
  }
  Graph g(f.store);
  VreOptions bad;
  bad.key_override = 5;
  EXPECT_THROW(vre_encode(g, f.p, g.constant(V), std::nullopt, bad), std::out_of_range);
}

TEST(Vre, AudioPresenceMustMatchModel) {
  VreFixture with(3, 2, 4), without(3, 0, 4);
  const Tensor V = random_tensor({4, 3}, with.rng);
  Graph g1(with.store), g2(without.store);
  EXPECT_THROW(vre_encode(g1, with.p, g1.constant(V), std::nullopt), std::invalid_argument);
  EXPECT_THROW(vre_encode(g2, without.p, g2.constant(V), g2.constant(Tensor({2}))), std::invalid_argument);
  EXPECT_THROW(vre_encode(g1, with.p, g1.constant(V), g1.constant(Tensor({3}))), ShapeError);
}

TEST(Vre, EndToEndGradientMatchesFiniteDifferences) {
  VreFixture f(3, 2, 5, 21);
  const Tensor V = random_tensor({4, 3}, f.rng), va = random_tensor({2}, f.rng), w = random_tensor({5}, f.rng);
  auto fn = [&](Graph& g) {
    auto r = vre_encode(g, f.p, g.constant(V), g.constant(va));
    return sum(mul(r.o2, g.constant(w)));
  };
  std::size_t key0;
  {
    Graph g(f.store);
    key0 = vre_encode(g, f.p, g.constant(V), g.constant(va)).i_key;
  }
  auto res = finite_difference_check(f.store, fn, 1e-6);
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
  Graph g(f.store);
  EXPECT_EQ(vre_encode(g, f.p, g.constant(V), g.constant(va)).i_key, key0);
}

TEST(Vre, NoGradientThroughKeySelection) {
  VreFixture f(3, 2, 4);
  const Tensor V = random_tensor({6, 3}, f.rng), va = random_tensor({2}, f.rng);
  Graph g(f.store);
  auto r = vre_encode(g, f.p, g.constant(V), g.constant(va));
  g.backward(sum(r.o2));
  GradBuffer gb(f.store);
  g.accumulate_param_grads(gb);
  for (ParamId id : {f.p.refocus.W_o, f.p.refocus.W_v, f.p.refocus.W_alpha, f.p.refocus.b_alpha})
    for (double v : gb[id].values()) EXPECT_EQ(v, 0.0) << f.store.name(id);
  double other = 0;
  for (double v : gb[f.p.W_m].values()) other += std::abs(v);
  EXPECT_GT(other, 0.0);
}

TEST(Vre, StepOneOnlyStopsAfterFirstOutput) {
  VreFixture f(3, 0, 4);
  Graph g(f.store);
  VreOptions opt;
  opt.step1_only = true;
  auto r = vre_encode(g, f.p, g.constant(random_tensor({6, 3}, f.rng)), std::nullopt, opt);
  EXPECT_EQ(r.i_key, 3u);
  EXPECT_EQ(r.o1.shape(), (Shape{4}));
  EXPECT_FALSE(r.alpha.has_value());
}
