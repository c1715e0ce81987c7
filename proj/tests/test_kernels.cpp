#include <gtest/gtest.h>

#include <omp.h>

#include <random>
#include <vector>

#include "gazeattn/error.hpp"
#include "gazeattn/kernels.hpp"
#include "gazeattn/reference.hpp"

using namespace gazeattn;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = T(u(rng));
  return v;
}

template <typename T>
double max_abs_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

struct ConvCase {
  int channels, out;
  Triple in, kernel, stride, pad;
};

const ConvCase kCases[] = {
    {3, 4, {5, 6, 7}, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
    {2, 5, {4, 9, 8}, {3, 3, 3}, {2, 2, 2}, {1, 1, 1}},
    {4, 3, {3, 5, 5}, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}},
    {3, 2, {6, 7, 5}, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}},
    {1, 3, {2, 4, 4}, {2, 2, 3}, {1, 1, 2}, {0, 0, 1}},
};

Window3d window_of(const ConvCase& c) {
  Window3d g;
  g.channels = c.channels;
  g.in = c.in;
  g.kernel = c.kernel;
  g.stride = c.stride;
  g.pad = c.pad;
  return g;
}

}  // namespace

TEST(Gemm, MatchesReferenceForAllTransposes) {
  const int m = 37, n = 29, k = 41;
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      const auto a = random_vec<double>(std::size_t(m) * k, 1);
      const auto b = random_vec<double>(std::size_t(k) * n, 2);
      auto c = random_vec<double>(std::size_t(m) * n, 3), c_ref = c;
      const int lda = ta ? m : k, ldb = tb ? k : n;
      kernels::gemm(ta, tb, m, n, k, 0.7, a.data(), lda, b.data(), ldb, 0.3, c.data(), n);
      reference::gemm(ta, tb, m, n, k, 0.7, a.data(), lda, b.data(), ldb, 0.3, c_ref.data(), n);
      EXPECT_LT(max_abs_diff(c, c_ref), 1e-12) << ta << tb;
    }
}

TEST(Gemm, BetaZeroIgnoresGarbage) {
  std::vector<float> a{1, 2, 3, 4}, b{1, 0, 0, 1};
  std::vector<float> c(4, std::numeric_limits<float>::quiet_NaN());
  kernels::gemm(false, false, 2, 2, 2, 1.0f, a.data(), 2, b.data(), 2, 0.0f, c.data(), 2);
  EXPECT_EQ(c, a);
}

TEST(Conv3d, ForwardMatchesReference) {
  for (const auto& c : kCases) {
    const Window3d g = window_of(c);
    const int batch = 2;
    const auto x = random_vec<double>(batch * c.channels * g.in_volume(), 4);
    const auto w = random_vec<double>(std::size_t(c.out) * c.channels * g.taps(), 5);
    const auto bias = random_vec<double>(c.out, 6);
    std::vector<double> y(batch * c.out * g.out_volume()), y_ref(y.size()), ws;
    kernels::conv3d_forward(g, batch, c.out, x.data(), w.data(), bias.data(), y.data(), ws);
    reference::conv3d_forward(g, batch, c.out, x.data(), w.data(), bias.data(), y_ref.data());
    EXPECT_LT(max_abs_diff(y, y_ref), 1e-12);
  }
}

TEST(Conv3d, BackwardMatchesReference) {
  for (const auto& c : kCases) {
    const Window3d g = window_of(c);
    const int batch = 3;
    const auto x = random_vec<double>(batch * c.channels * g.in_volume(), 7);
    const auto w = random_vec<double>(std::size_t(c.out) * c.channels * g.taps(), 8);
    const auto dy = random_vec<double>(batch * c.out * g.out_volume(), 9);
    std::vector<double> dx(x.size()), dx_ref(x.size()), dw(w.size()), dw_ref(w.size()), db(c.out), db_ref(c.out), ws;
    kernels::conv3d_backward(g, batch, c.out, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data(), ws);
    reference::conv3d_backward(g, batch, c.out, x.data(), w.data(), dy.data(), dx_ref.data(), dw_ref.data(),
                               db_ref.data());
    EXPECT_LT(max_abs_diff(dx, dx_ref), 1e-11);
    EXPECT_LT(max_abs_diff(dw, dw_ref), 1e-11);
    EXPECT_LT(max_abs_diff(db, db_ref), 1e-11);
  }
}

TEST(Conv3d, BackwardAccumulatesParameterGradients) {
  const Window3d g = window_of(kCases[0]);
  const auto x = random_vec<float>(g.channels * g.in_volume(), 10);
  const auto w = random_vec<float>(std::size_t(4) * g.channels * g.taps(), 11);
  const auto dy = random_vec<float>(4 * g.out_volume(), 12);
  std::vector<float> dw(w.size(), 0.f), db(4, 0.f), ws;
  kernels::conv3d_backward(g, 1, 4, x.data(), w.data(), dy.data(), static_cast<float*>(nullptr), dw.data(), db.data(), ws);
  const auto once = dw;
  kernels::conv3d_backward(g, 1, 4, x.data(), w.data(), dy.data(), static_cast<float*>(nullptr), dw.data(), db.data(), ws);
  for (std::size_t i = 0; i < dw.size(); ++i) EXPECT_FLOAT_EQ(dw[i], 2 * once[i]);
}

TEST(MaxPool3d, ForwardMatchesReferenceAndRoutesGradient) {
  Window3d g;
  g.channels = 3;
  g.in = {4, 5, 6};
  g.kernel = {3, 3, 3};
  g.pad = {1, 1, 1};
  const auto x = random_vec<double>(2 * g.channels * g.in_volume(), 13);
  std::vector<double> y(2 * g.channels * g.out_volume()), y_ref(y.size());
  std::vector<int> argmax;
  kernels::maxpool3d_forward(g, 2, x.data(), y.data(), argmax);
  reference::maxpool3d_forward(g, 2, x.data(), y_ref.data());
  EXPECT_EQ(y, y_ref);

  std::vector<double> dy(y.size(), 1.0), dx(x.size(), 0.0);
  kernels::maxpool3d_backward(g, 2, dy.data(), argmax, dx.data());
  double total = 0.0;
  for (double v : dx) total += v;
  EXPECT_DOUBLE_EQ(total, double(y.size()));
}

TEST(Window3d, RejectsKernelLargerThanPaddedInput) {
  Window3d g;
  g.in = {2, 2, 2};
  g.kernel = {3, 3, 3};
  EXPECT_THROW(g.validate(), ShapeError);
  g.pad = {1, 1, 1};
  EXPECT_NO_THROW(g.validate());
}

TEST(Determinism, ThreadCountDoesNotChangeBits) {
  const ConvCase c{8, 16, {4, 16, 16}, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
  const Window3d g = window_of(c);
  const int batch = 2;
  const auto x = random_vec<float>(batch * c.channels * g.in_volume(), 14);
  const auto w = random_vec<float>(std::size_t(c.out) * c.channels * g.taps(), 15);
  const auto dy = random_vec<float>(batch * c.out * g.out_volume(), 16);

  auto run = [&](int threads) {
    const int saved = omp_get_max_threads();
    omp_set_num_threads(threads);
    std::vector<float> y(batch * c.out * g.out_volume()), dx(x.size()), dw(w.size(), 0.f), ws;
    kernels::conv3d_forward(g, batch, c.out, x.data(), w.data(), static_cast<const float*>(nullptr), y.data(), ws);
    kernels::conv3d_backward(g, batch, c.out, x.data(), w.data(), dy.data(), dx.data(), dw.data(),
                             static_cast<float*>(nullptr), ws);
    omp_set_num_threads(saved);
    y.insert(y.end(), dx.begin(), dx.end());
    y.insert(y.end(), dw.begin(), dw.end());
    return y;
  };
  EXPECT_EQ(run(1), run(4));
}

TEST(Relu, ForwardBackward) {
  std::vector<float> x{-1.f, 0.f, 2.f}, y(3), dy{1.f, 1.f, 1.f}, dx(3);
  kernels::relu_forward(3, x.data(), y.data());
  EXPECT_EQ(y, (std::vector<float>{0.f, 0.f, 2.f}));
  kernels::relu_backward(3, y.data(), dy.data(), dx.data());
  EXPECT_EQ(dx, (std::vector<float>{0.f, 0.f, 1.f}));
}
