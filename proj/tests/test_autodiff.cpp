#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "tarpro/autodiff.hpp"

using namespace tarpro;
using tarpro::testing::grad_check;
using tarpro::testing::random_coords;
using tarpro::testing::random_tensor;
using V = ad::Var<double>;

namespace {

void expect_grad_ok(V leaf, const std::function<V()>& f, std::size_t coords = 12, std::uint64_t seed = 1) {
  Rng rng(Seed{seed});
  const auto r = grad_check(leaf, f, random_coords(rng, leaf.size(), coords), 1e-5, 1e-5);
  EXPECT_EQ(r.failures, 0u) << "max rel error " << r.max_rel_error;
}

}  // namespace

TEST(Autodiff, MatmulVariants) {
  Rng rng(Seed{1});
  V a = V::parameter(random_tensor(rng, {4, 5}));
  V b = V::parameter(random_tensor(rng, {5, 3}));
  V c = V::parameter(random_tensor(rng, {6, 5}));
  expect_grad_ok(a, [&] { return ad::sum(ad::square(ad::matmul(a, b))); });
  expect_grad_ok(b, [&] { return ad::sum(ad::square(ad::matmul(a, b))); });
  expect_grad_ok(c, [&] { return ad::sum(ad::square(ad::matmul_nt(c, a))); });
  expect_grad_ok(a, [&] { return ad::sum(ad::square(ad::matmul_nt(c, a))); });
  expect_grad_ok(a, [&] { return ad::sum(ad::mul(ad::transpose(a), ad::transpose(a))); });
}

TEST(Autodiff, MatmulValueMatchesNaive) {
  Rng rng(Seed{2});
  V a = V::constant(random_tensor(rng, {3, 4}));
  V b = V::constant(random_tensor(rng, {4, 2}));
  const auto c = ad::matmul(a, b).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += a.value().at(i, k) * b.value().at(k, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-12);
    }
}

TEST(Autodiff, Elementwise) {
  Rng rng(Seed{3});
  V a = V::parameter(random_tensor(rng, {3, 4}));
  V b = V::parameter(random_tensor(rng, {3, 4}));
  V r = V::parameter(random_tensor(rng, {4}));
  expect_grad_ok(a, [&] { return ad::sum(ad::mul(ad::tanh(a), ad::sigmoid(b))); });
  expect_grad_ok(b, [&] { return ad::sum(ad::mul(ad::tanh(a), ad::sigmoid(b))); });
  expect_grad_ok(a, [&] { return ad::mean(ad::gelu(ad::sub(a, b))); });
  expect_grad_ok(a, [&] { return ad::sum(ad::square(ad::add_scalar(ad::scale(a, 3.0), 0.5))); });
  expect_grad_ok(r, [&] { return ad::sum(ad::square(ad::add_rowvec(a, r))); });
  expect_grad_ok(a, [&] { return ad::mse(a, b); });
  expect_grad_ok(b, [&] { return ad::mse(a, b); });
}

TEST(Autodiff, ClampPassesGradientInsideOnly) {
  V a = V::parameter(Tensor<double>(Shape{3}, {-0.5, 0.5, 1.5}));
  ad::backward(ad::sum(ad::clamp(a, 0.0, 1.0)));
  EXPECT_EQ(a.grad()[0], 0.0);
  EXPECT_EQ(a.grad()[1], 1.0);
  EXPECT_EQ(a.grad()[2], 0.0);
}

TEST(Autodiff, SoftmaxAndLayerNorm) {
  Rng rng(Seed{4});
  V a = V::parameter(random_tensor(rng, {4, 6}));
  V w = V::constant(random_tensor(rng, {4, 6}));
  V g = V::parameter(random_tensor(rng, {6}, 0.5, 1.5));
  V be = V::parameter(random_tensor(rng, {6}));
  expect_grad_ok(a, [&] { return ad::sum(ad::mul(ad::softmax_rows(a), w)); });
  expect_grad_ok(a, [&] { return ad::sum(ad::mul(ad::layernorm_rows(a, g, be), w)); });
  expect_grad_ok(g, [&] { return ad::sum(ad::mul(ad::layernorm_rows(a, g, be), w)); });
  expect_grad_ok(be, [&] { return ad::sum(ad::mul(ad::layernorm_rows(a, g, be), w)); });
  const auto s = ad::softmax_rows(a).value();
  for (std::size_t i = 0; i < 4; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < 6; ++j) row += s.at(i, j);
    EXPECT_NEAR(row, 1.0, 1e-12);
  }
}

TEST(Autodiff, SliceConcatReshapeMax) {
  Rng rng(Seed{5});
  V a = V::parameter(random_tensor(rng, {3, 8}));
  V w = V::constant(random_tensor(rng, {3, 8}));
  expect_grad_ok(a, [&] {
    auto l = ad::slice_cols(a, 0, 3), m = ad::slice_cols(a, 3, 8);
    return ad::sum(ad::mul(ad::concat_cols<double>({m, l}), w));
  });
  expect_grad_ok(a, [&] { return ad::sum(ad::square(ad::reshape(a, Shape{4, 6}))); });
  a.zero_grad();
  ad::backward(ad::max_all(a));
  std::size_t arg = 0;
  for (std::size_t i = 1; i < a.size(); ++i)
    if (a.value()[i] > a.value()[arg]) arg = i;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.grad()[i], i == arg ? 1.0 : 0.0);
}

TEST(Autodiff, PatchifyIsAPermutation) {
  Tensor<double> img(Shape{3, 16, 8});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  auto tok = ad::patchify(V::constant(img), 4);
  ASSERT_EQ(tok.shape(), (Shape{8, 48}));
  // Token 1 is grid row 0, column 1; element k = (c, dy, dx).
  EXPECT_EQ(tok.value().at(1, 0), img.at(0, 0, 4));
  EXPECT_EQ(tok.value().at(1, 1 * 16 + 2 * 4 + 3), img.at(1, 2, 7));
  EXPECT_EQ(tok.value().at(2, 0), img.at(0, 4, 0));
  auto back = ad::unpatchify(tok, 3, 16, 8, 4);
  EXPECT_EQ(back.value(), img);
  V leaf = V::parameter(img);
  V w = V::constant(Tensor<double>(Shape{8, 48}, 0.5));
  expect_grad_ok(leaf, [&] { return ad::sum(ad::mul(ad::square(ad::patchify(leaf, 4)), w)); });
}

TEST(Autodiff, ConstantsStayDetached) {
  V c = V::constant(Tensor<double>(Shape{2}, 1.0));
  V p = V::parameter(Tensor<double>(Shape{2}, 2.0));
  auto y = ad::sum(ad::mul(c, p));
  EXPECT_TRUE(y.requires_grad());
  ad::backward(y);
  EXPECT_FALSE(c.has_grad());
  EXPECT_EQ(p.grad()[0], 1.0);
  auto z = ad::sum(ad::square(c));
  EXPECT_FALSE(z.requires_grad());
}

TEST(Autodiff, SharedSubgraphAccumulates) {
  V a = V::parameter(Tensor<double>(Shape{1}, 3.0));
  auto b = ad::square(a);
  ad::backward(ad::sum(ad::add(b, b)));
  EXPECT_DOUBLE_EQ(a.grad()[0], 12.0);
}
