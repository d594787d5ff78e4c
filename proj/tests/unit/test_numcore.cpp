#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "vib/core/gradcheck.hpp"
#include "vib/core/ops.hpp"
#include "vib/core/tape.hpp"

using namespace vib;
using vib::test::random_tensor;

namespace {

// Direct nested-loop convolution, the reference for conv2d.
Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& w,
                              const Tensor<double>& b, std::size_t stride) {
  const std::size_t ci = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (H - kh) / stride + 1, ow = (W - kw) / stride + 1;
  Tensor<double> y({co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double s = b[o];
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t u = 0; u < kh; ++u)
            for (std::size_t v = 0; v < kw; ++v)
              s += x[(c * H + i * stride + u) * W + j * stride + v] *
                   w[((o * ci + c) * kh + u) * kw + v];
        y[(o * oh + i) * ow + j] = s;
      }
  return y;
}

}  // namespace

TEST(Tensor, RejectsZeroDimension) {
  EXPECT_THROW(Tensor<float>({3, 0, 2}), DimensionError);
  try {
    Tensor<float>({3, 0});
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("axis 1"), std::string::npos) << e.what();
  }
}

TEST(Tensor, SizeMatchesShapeProduct) {
  Tensor<double> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>(5)), DimensionError);
}

TEST(Tensor, GradHasSameShape) {
  Tensor<double> t({2, 3});
  t.set_requires_grad(true);
  t.zero_grad();
  EXPECT_EQ(t.grad().size(), t.size());
}

TEST(Conv2d, ZeroInputGivesBias) {
  Tape<double> tape;
  std::mt19937_64 rng(1);
  Tensor<double> x({2, 5, 6}, 0.0), w = random_tensor({3, 2, 2, 3}, rng), b({3});
  b[0] = 0.5;
  b[1] = -1.0;
  b[2] = 2.0;
  auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 1).value();
  ASSERT_EQ(y.shape(), (Shape{3, 4, 4}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(y[c * 16 + k], b[c]);
}

TEST(Conv2d, IdentityKernel) {
  Tape<double> tape;
  std::mt19937_64 rng(2);
  Tensor<double> x = random_tensor({1, 4, 5}, rng);
  Tensor<double> w({1, 1, 1, 1}, 1.0), b({1}, 0.0);
  auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 1).value();
  EXPECT_EQ(y.storage(), x.storage());
}

TEST(Conv2d, OnesWindowSum) {
  Tape<double> tape;
  Tensor<double> x({1, 3, 3}, 1.0), w({1, 1, 2, 2}, 1.0), b({1}, 0.0);
  auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 1).value();
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 4.0);
}

TEST(Conv2d, MatchesDirectLoopsAndShapeFormula) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(1, 4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t ci = d(rng), co = d(rng), kh = d(rng), kw = d(rng), s = d(rng) % 3 + 1;
    const std::size_t H = kh + d(rng) + 1, W = kw + d(rng) + 2;
    Tensor<double> x = random_tensor({ci, H, W}, rng), w = random_tensor({co, ci, kh, kw}, rng),
                   b = random_tensor({co}, rng);
    Tape<double> tape;
    auto y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), s).value();
    auto ref = conv_reference(x, w, b, s);
    ASSERT_EQ(y.shape(), (Shape{co, (H - kh) / s + 1, (W - kw) / s + 1}));
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Conv2d, ErrorsNameTheAxis) {
  Tape<double> tape;
  Tensor<double> x({2, 3, 3}), w({1, 3, 2, 2}), b({1}), wk({1, 2, 4, 2});
  try {
    conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
  try {
    conv2d(tape.constant(x), tape.constant(wk), tape.constant(b), 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("height"), std::string::npos) << e.what();
  }
  EXPECT_THROW(conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 0), Error);
}

TEST(Dense, Examples) {
  Tape<double> tape;
  Tensor<double> x = Tensor<double>::vector({1.0, 2.0});
  Tensor<double> w({1, 2}, std::vector<double>{1.0, 1.0});
  Tensor<double> b = Tensor<double>::vector({0.5});
  EXPECT_EQ(dense(tape.constant(x), tape.constant(w), tape.constant(b)).value().item(), 3.5);

  Tensor<double> eye({2, 2}, std::vector<double>{1, 0, 0, 1}), zb({2}, 0.0);
  EXPECT_EQ(dense(tape.constant(x), tape.constant(eye), tape.constant(zb)).value().storage(),
            x.storage());

  Tensor<double> zx({2}, 0.0), b2 = Tensor<double>::vector({7.0, -3.0});
  EXPECT_EQ(dense(tape.constant(zx), tape.constant(eye), tape.constant(b2)).value().storage(),
            b2.storage());
  EXPECT_THROW(dense(tape.constant(Tensor<double>({3})), tape.constant(eye), tape.constant(zb)),
               DimensionError);
}

TEST(Relu, Examples) {
  Tape<double> tape;
  auto y = relu(tape.constant(Tensor<double>::vector({-1.0, 0.0, 2.0}))).value();
  EXPECT_EQ(y.storage(), (std::vector<double>{0.0, 0.0, 2.0}));
  auto z = relu(tape.constant(Tensor<double>::vector({-3.0, -0.5}))).value();
  EXPECT_EQ(z.storage(), (std::vector<double>{0.0, 0.0}));
}

TEST(Relu, GradientOfSum) {
  Tensor<double> x = Tensor<double>::vector({-1.0, 2.0});
  x.set_requires_grad(true);
  Tape<double> tape;
  tape.backward(sum(relu(tape.leaf(x))));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  // Zero is treated as the inactive side.
  Tensor<double> z = Tensor<double>::vector({0.0});
  z.set_requires_grad(true);
  Tape<double> t2;
  t2.backward(sum(relu(t2.leaf(z))));
  EXPECT_EQ(z.grad()[0], 0.0);
}

TEST(Maxpool, Examples) {
  Tape<double> tape;
  auto c = maxpool2d(tape.constant(Tensor<double>({2, 4, 4}, 3.25))).value();
  for (double v : c.data()) EXPECT_EQ(v, 3.25);
  auto m = maxpool2d(tape.constant(Tensor<double>({1, 2, 2}, std::vector<double>{1, 2, 3, 4})))
               .value();
  EXPECT_EQ(m.storage(), (std::vector<double>{4.0}));
  auto s = maxpool2d(tape.constant(Tensor<double>({1, 5, 5}, 0.0))).value();
  EXPECT_EQ(s.shape(), (Shape{1, 2, 2}));
  EXPECT_THROW(maxpool2d(tape.constant(Tensor<double>({1, 1, 4}))), DimensionError);
}

TEST(Maxpool, TieRoutesToFirstElement) {
  Tensor<double> x({1, 2, 2}, 5.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  tape.backward(sum(maxpool2d(tape.leaf(x))));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 0, 0, 0}));
}

TEST(SoftmaxCrossEntropy, Examples) {
  Tape<double> tape;
  EXPECT_NEAR(softmax_cross_entropy(tape.constant(Tensor<double>({10}, 0.3)), 4).value().item(),
              std::log(10.0), 1e-12);
  EXPECT_NEAR(softmax_cross_entropy(tape.constant(Tensor<double>({50}, -2.0)), 0).value().item(),
              std::log(50.0), 1e-12);
  const double big =
      softmax_cross_entropy(tape.constant(Tensor<double>::vector({1000.0, 0.0})), 0).value().item();
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 0.0, 1e-12);
  EXPECT_THROW(softmax_cross_entropy(tape.constant(Tensor<double>({3})), 3), InputError);
}

TEST(SoftmaxCrossEntropy, ShiftInvariance) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 100; ++i) {
    Tensor<double> l = random_tensor({7}, rng, -5.0, 5.0);
    Tensor<double> shifted = l;
    const double c = u(rng);
    for (auto& v : shifted.data()) v += c;
    Tape<double> tape;
    const double a = softmax_cross_entropy(tape.constant(l), 2).value().item();
    const double b = softmax_cross_entropy(tape.constant(shifted), 2).value().item();
    EXPECT_NEAR(a, b, 1e-12);
    EXPECT_GE(a, 0.0);
  }
}

TEST(Backward, SumGivesOnes) {
  std::mt19937_64 rng(5);
  Tensor<double> x = random_tensor({2, 3, 2}, rng);
  x.set_requires_grad(true);
  Tape<double> tape;
  tape.backward(sum(tape.leaf(x)));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, FanOutAccumulates) {
  Tensor<double> x = Tensor<double>::vector({1.5, -2.0});
  x.set_requires_grad(true);
  Tape<double> tape;
  Var<double> v = tape.leaf(x);
  tape.backward(sum(add(v, v)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2.0, 2.0}));

  for (int n = 1; n <= 5; ++n) {
    x.zero_grad();
    Tape<double> t;
    Var<double> l = t.leaf(x);
    Var<double> acc = l;
    for (int k = 1; k < n; ++k) acc = add(acc, l);
    t.backward(sum(acc));
    EXPECT_EQ(x.grad()[0], n);
  }
}

TEST(Backward, NonScalarLossIsUsageError) {
  Tensor<double> x({3}, 1.0);
  x.set_requires_grad(true);
  Tape<double> tape;
  EXPECT_THROW(tape.backward(tape.leaf(x)), UsageError);
}

TEST(Backward, DenseCrossEntropyMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  Tensor<double> x = random_tensor({5}, rng), w = random_tensor({3, 5}, rng),
                 b = random_tensor({3}, rng);
  TapeFunction f = [&](Tape<double>& t) {
    return softmax_cross_entropy(dense(t.constant(x), t.leaf(w), t.leaf(b)), 1);
  };
  auto r = gradcheck_params(f, {&w, &b}, {"w", "b"}, 1e-3, 1e-4);
  EXPECT_TRUE(r.pass) << r.max_rel_error << " at " << r.worst;
}

TEST(Gradcheck, QuadraticIsExact) {
  std::mt19937_64 rng(7);
  Tensor<double> p = random_tensor({4, 3}, rng);
  auto r = gradcheck([](Var<double> x) { return scale(sum_squares(x), 0.5); }, p, 1e-3, 1e-6);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.checked, 12u);
}

TEST(Gradcheck, ReluKinkIsExcluded) {
  Tensor<double> p = Tensor<double>::vector({0.0, 1.0, -2.0});
  auto r = gradcheck([](Var<double> x) { return sum(relu(x)); }, p, 1e-3, 1e-4);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.excluded, 1u);
  EXPECT_EQ(r.checked, 2u);
}

TEST(Gradcheck, NondeterministicFunctionIsUsageError) {
  Tensor<double> p({2}, 1.0);
  int calls = 0;
  auto f = [&](Var<double> x) { return scale(sum(x), static_cast<double>(++calls)); };
  EXPECT_THROW(gradcheck(f, p, 1e-3, 1e-4), UsageError);
}

// Every differentiable primitive over random shapes and seeds.
class PrimitiveGradcheck : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradcheck, AllPrimitivesPass) {
  const int seed = GetParam();
  std::mt19937_64 rng(100 + seed);
  std::uniform_int_distribution<int> d(1, 3);
  const double tol = 1e-4, h = 1e-3;
  auto check = [&](const char* what, const TapeFunction& f, std::vector<Tensor<double>*> ps) {
    std::vector<std::string> names(ps.size(), what);
    auto r = gradcheck_params(f, ps, names, h, tol);
    EXPECT_TRUE(r.pass) << what << " seed " << seed << ": " << r.max_rel_error << " at "
                        << r.worst;
  };
  // A fixed random projection turns vector outputs into a scalar.
  auto project = [&](Tape<double>& t, Var<double> y, std::uint64_t s) {
    std::mt19937_64 r2(s);
    Tensor<double> c = random_tensor(y.shape(), r2);
    return sum(mul(y, t.constant(c)));
  };

  const std::size_t ci = d(rng), co = d(rng), kh = d(rng), kw = d(rng);
  Tensor<double> x = random_tensor({ci, kh + d(rng) + 1, kw + d(rng) + 1}, rng);
  Tensor<double> w = random_tensor({co, ci, kh, kw}, rng), b = random_tensor({co}, rng);
  const std::size_t stride = static_cast<std::size_t>(d(rng));
  check("conv2d",
        [&](Tape<double>& t) { return project(t, conv2d(t.leaf(x), t.leaf(w), t.leaf(b), stride), 1); },
        {&x, &w, &b});

  const std::size_t n = 2 + d(rng), m = d(rng);
  Tensor<double> v = random_tensor({n}, rng), dw = random_tensor({m, n}, rng),
                 db = random_tensor({m}, rng);
  check("dense", [&](Tape<double>& t) { return project(t, dense(t.leaf(v), t.leaf(dw), t.leaf(db)), 2); },
        {&v, &dw, &db});

  Tensor<double> r = random_tensor({2, 3, 4}, rng);
  check("relu", [&](Tape<double>& t) { return project(t, relu(t.leaf(r)), 3); }, {&r});

  Tensor<double> p = random_tensor({2, 2 + d(rng), 3 + d(rng)}, rng);
  check("maxpool2d", [&](Tape<double>& t) { return project(t, maxpool2d(t.leaf(p)), 4); }, {&p});

  Tensor<double> l = random_tensor({2 + static_cast<std::size_t>(d(rng))}, rng, -3, 3);
  const std::size_t label = static_cast<std::size_t>(seed) % l.size();
  check("softmax_cross_entropy",
        [&](Tape<double>& t) { return softmax_cross_entropy(t.leaf(l), label); }, {&l});

  Tensor<double> a = random_tensor({3, 2}, rng), c = random_tensor({3, 2}, rng);
  check("add", [&](Tape<double>& t) { return project(t, add(t.leaf(a), t.leaf(c)), 5); }, {&a, &c});
  check("mul", [&](Tape<double>& t) { return project(t, mul(t.leaf(a), t.leaf(c)), 6); }, {&a, &c});
  check("scale", [&](Tape<double>& t) { return project(t, scale(t.leaf(a), -1.7), 7); }, {&a});
  check("add_scalar", [&](Tape<double>& t) { return project(t, add_scalar(t.leaf(a), 0.3), 8); }, {&a});
  check("sum_squares", [&](Tape<double>& t) { return sum_squares(t.leaf(a)); }, {&a});
  check("softplus", [&](Tape<double>& t) { return project(t, softplus(t.leaf(a)), 9); }, {&a});
  check("reshape", [&](Tape<double>& t) { return project(t, reshape(t.leaf(a), Shape{2, 3}), 10); }, {&a});
  check("slice", [&](Tape<double>& t) { return project(t, slice(flatten(t.leaf(a)), 1, 4), 11); }, {&a});
  check("channel_scale",
        [&](Tape<double>& t) { return project(t, channel_scale(t.leaf(r), {0.0, 1.25}), 12); }, {&r});
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGradcheck, ::testing::Range(0, 20));

TEST(Argmax, TiesGoToLowestIndex) {
  std::vector<double> v{1.0, 3.0, 3.0, 2.0};
  EXPECT_EQ(argmax<double>(v), 1u);
}
