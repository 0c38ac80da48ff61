#include "doctest.h"
#include "helpers.hpp"

#include "dan/rng.hpp"
#include "dan/tensor.hpp"

using namespace dan;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("philox known answers") {
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter rng streams") {
  CounterRng a(5, 1), b(5, 1), c(5, 2);
  bool differs = false;
  for (int i = 0; i < 16; ++i) {
    const auto x = a.next_u32();
    CHECK(x == b.next_u32());
    differs = differs || x != c.next_u32();
  }
  CHECK(differs);
  CounterRng r(9);
  for (int i = 0; i < 1000; ++i) CHECK(r.next_below(7) < 7u);
}

TEST_CASE("tensor construction contracts") {
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at(1, 2) == 6);
  CHECK(shape_str(t.shape()) == "[2x3]");
  CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
  CHECK(t.reshaped({3, 2}).at(2, 1) == 6);
  CHECK_THROWS_AS(t.item(), ContractError);
  CHECK(Tensor::scalar(3).item() == 3);
  Tensor bad({2}, {1.0f, std::nanf("")});
  CHECK_THROWS_AS(bad.check_finite("probe"), NumericError);
}

TEST_CASE("matmul matches the triple loop") {
  for (std::size_t m : {1u, 3u, 5u, 17u})
    for (std::size_t k : {1u, 4u, 9u})
      for (std::size_t n : {1u, 6u, 513u}) {
        const auto a = random_tensor<double>({m, k}, m * 100 + k);
        const auto b = random_tensor<double>({k, n}, k * 100 + n);
        CHECK(max_abs_diff(matmul(a, b), testutil::naive_matmul(a, b)) < 1e-12);
      }
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST_CASE("gemm_tn and transpose") {
  const auto a = random_tensor<double>({4, 3}, 1);  // k×m
  const auto b = random_tensor<double>({4, 5}, 2);
  Tensor64 c({3, 5});
  gemm_tn<double>(3, 5, 4, a.data().data(), b.data().data(), c.data().data());
  CHECK(max_abs_diff(c, testutil::naive_matmul(transpose(a), b)) < 1e-12);
  CHECK(transpose(transpose(a)) == a);
}

TEST_CASE("multiply-add counter") {
  std::uint64_t macs = 0;
  {
    MacCountScope scope(macs);
    (void)matmul(Tensor({3, 4}), Tensor({4, 5}));
    std::uint64_t inner = 0;
    {
      MacCountScope nested(inner);
      (void)matmul(Tensor({2, 2}), Tensor({2, 2}));
    }
    CHECK(inner == 8);
  }
  CHECK(macs == 60);
  (void)matmul(Tensor({3, 4}), Tensor({4, 5}));
  CHECK(macs == 60);
}

TEST_CASE("conv2d matches direct convolution") {
  struct Case {
    std::size_t ci, co, h, w, k, pad, stride;
  };
  for (const Case& c : {Case{1, 1, 5, 5, 3, 1, 1}, Case{2, 3, 6, 7, 3, 1, 1}, Case{3, 4, 8, 8, 3, 1, 2},
                        Case{5, 2, 4, 4, 1, 0, 1}, Case{2, 2, 7, 5, 5, 2, 2}, Case{1, 16, 9, 9, 3, 1, 2}}) {
    const auto x = random_tensor<double>({c.ci, c.h, c.w}, c.ci * 7 + c.h);
    const auto k = random_tensor<double>({c.co, c.ci, c.k, c.k}, c.co * 3 + c.k);
    const auto b = random_tensor<double>({c.co}, 11);
    CHECK(max_abs_diff(conv2d(x, k, c.pad, c.stride, &b), testutil::naive_conv(x, k, c.pad, c.stride, &b)) < 1e-12);
  }
}

TEST_CASE("conv2d of a constant image with a hand kernel") {
  Tensor x({1, 5, 5}, 2.0f);
  Tensor k({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor y = conv2d(x, k, 1);
  CHECK(y.at(0, 2, 2) == doctest::Approx(45 * 2));
  CHECK(y.at(0, 0, 0) == doctest::Approx((5 + 6 + 8 + 9) * 2));
}

TEST_CASE("conv2d geometry errors") {
  CHECK_THROWS_AS(conv2d(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), 1), DimensionError);
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 5, 5}), 0), DimensionError);
  CHECK_THROWS_AS(conv2d(Tensor({1, 4, 4}), Tensor({1, 1, 2, 2}), 0), DimensionError);
}

TEST_CASE("softmax_cols") {
  const auto s = random_tensor<double>({7, 5}, 3, -5, 5);
  const auto a = softmax_cols(s);
  for (std::size_t j = 0; j < 5; ++j) {
    double sum = 0;
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(a.at(i, j) > 0);
      sum += a.at(i, j);
    }
    CHECK(sum == doctest::Approx(1).epsilon(1e-14));
  }
  Tensor64 shifted = s;
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 5; ++j) shifted.at(i, j) += 100.0 * static_cast<double>(j);
  CHECK(max_abs_diff(softmax_cols(shifted), a) < 1e-12);
  Tensor64 big({2, 1}, {1000.0, 0.0});
  CHECK(softmax_cols(big).at(0, 0) == 1.0);
}

TEST_CASE("concat_channels") {
  Tensor a({1, 2, 2}, {1, 2, 3, 4}), b({2, 2, 2}, 5.0f);
  const Tensor c = concat_channels<float>({&a, &b});
  CHECK(c.shape() == Shape{3, 2, 2});
  CHECK(c.at(0, 1, 1) == 4);
  CHECK(c.at(2, 0, 0) == 5);
  Tensor d({1, 3, 2});
  CHECK_THROWS_AS(concat_channels<float>({&a, &d}), DimensionError);
}

TEST_CASE("seeded_normal is reproducible and roughly standard") {
  const auto a = seeded_normal<double>({20000}, 42, 2.0);
  CHECK(a == seeded_normal<double>({20000}, 42, 2.0));
  CHECK(a != seeded_normal<double>({20000}, 43, 2.0));
  double mean = 0, sq = 0;
  for (auto v : a.storage()) {
    mean += v;
    sq += v * v;
  }
  mean /= a.size();
  const double sd = std::sqrt(sq / a.size() - mean * mean);
  CHECK(std::abs(mean) < 0.05);
  CHECK(sd == doctest::Approx(2.0).epsilon(0.03));
  // The float instantiation rounds the same double samples.
  const auto f = seeded_normal<float>({16}, 42, 2.0);
  for (std::size_t i = 0; i < 16; ++i) CHECK(f[i] == static_cast<float>(a[i]));
  CHECK_THROWS_AS(seeded_normal<float>({2}, 1, -1.0), ContractError);
}
