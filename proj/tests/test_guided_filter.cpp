#include <doctest.h>

#include <cmath>
#include <random>

#include <torch/torch.h>

#include "fsgnet/errors.hpp"
#include "fsgnet/guided_filter.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace fsg;
using fsg::testing::Plane;

namespace {

torch::Tensor rand2d(int h, int w, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({h, w}, gen, torch::dtype(torch::kDouble));
}

double max_abs(const torch::Tensor& a, const torch::Tensor& b) {
  return (a - b).abs().max().item<double>();
}

}  // namespace

TEST_CASE("box_mean clips windows at the border") {
  auto row = torch::tensor({0.0, 3.0, 6.0}, torch::kDouble).view({1, 3});
  auto m = gf::box_mean(row, 1);
  CHECK(m[0][0].item<double>() == doctest::Approx(1.5));
  CHECK(m[0][1].item<double>() == doctest::Approx(3.0));
  CHECK(m[0][2].item<double>() == doctest::Approx(4.5));

  auto c = torch::full({7, 5}, 5.0, torch::kDouble);
  CHECK(max_abs(gf::box_mean(c, 1), c) < 1e-15);
  auto z = torch::zeros({6, 6}, torch::kDouble);
  CHECK(gf::box_mean(z, 3).abs().max().item<double>() == 0.0);
}

TEST_CASE("box_mean matches direct window sums and is linear") {
  for (int r : {1, 2, 4}) {
    auto x = rand2d(9, 11, 10 + r);
    const auto oracle = fsg::testing::box_oracle(fsg::testing::to_plane(x), r);
    const auto got = fsg::testing::to_plane(gf::box_mean(x, r));
    for (size_t i = 0; i < got.v.size(); ++i) {
      CHECK(std::abs(static_cast<double>(got.v[i] - oracle.v[i])) < 1e-12);
    }
  }
  auto x = rand2d(8, 8, 1);
  auto y = rand2d(8, 8, 2);
  CHECK(max_abs(gf::box_mean(2.5 * x - 0.75 * y, 2),
                2.5 * gf::box_mean(x, 2) - 0.75 * gf::box_mean(y, 2)) < 1e-6);
}

TEST_CASE("box_mean rejects bad input") {
  auto x = rand2d(4, 4, 3);
  x[1][1] = std::nan("");
  CHECK_THROWS_AS(gf::box_mean(x, 1), ValidationError);
  CHECK_THROWS_AS(gf::box_mean(rand2d(4, 4, 3), 0), ValidationError);
  CHECK_THROWS_AS(gf::WindowSpec({0, 0.1}).validate(), ValidationError);
  CHECK_THROWS_AS(gf::WindowSpec({1, -1.0}).validate(), ValidationError);
}

TEST_CASE("window_count counts in-bounds pixels") {
  auto c = gf::window_count(5, 4, 1);
  CHECK(c[0][0].item<double>() == 4);
  CHECK(c[2][1].item<double>() == 9);
  CHECK(c[4][3].item<double>() == 4);
  CHECK(c[0][1].item<double>() == 6);
}

TEST_CASE("guided_filter coefficients match the per-window least-squares oracle") {
  auto guide = rand2d(8, 8, 21);
  auto input = rand2d(8, 8, 22);
  const gf::WindowSpec spec{2, 0.1};
  const auto field = gf::guided_coefficients(guide, input, spec);
  const auto I = fsg::testing::to_plane(guide);
  const auto p = fsg::testing::to_plane(input);
  const Plane ones{8, 8, std::vector<long double>(64, 1.0L)};
  const auto a = fsg::testing::to_plane(field.a);
  const auto b = fsg::testing::to_plane(field.b);
  const auto count = fsg::testing::to_plane(gf::window_count(8, 8, 2));
  double worst = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      // Mean-normalized regularizer: the window sum carries |w| * eps.
      const auto [oa, ob] =
          fsg::testing::window_solve(I, p, ones, y, x, 2, count.at(y, x) * 0.1L);
      worst = std::max<double>(worst, std::abs(a.at(y, x) - oa) / std::max(1.0L, std::abs(oa)));
      worst = std::max<double>(worst, std::abs(b.at(y, x) - ob) / std::max(1.0L, std::abs(ob)));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("guided_filter constant propagation and smoothing limit") {
  auto c = torch::full({10, 10}, 0.37, torch::kDouble);
  CHECK(max_abs(gf::guided_filter(c, c, {2, 1e-2}), c) < 1e-12);

  auto guide = rand2d(12, 12, 5);
  auto input = rand2d(12, 12, 6);
  auto out = gf::guided_filter(guide, input, {2, 1e12});
  auto twice = gf::box_mean(gf::box_mean(input, 2), 2);
  CHECK(max_abs(out, twice) < 1e-3);

  double prev = std::numeric_limits<double>::infinity();
  for (double eps = 1e-2; eps <= 1e6; eps *= 10) {
    const double v = gf::guided_filter(guide, input, {2, eps}).var().item<double>();
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("guided_filter rejects shape mismatch") {
  CHECK_THROWS_AS(gf::guided_filter(rand2d(4, 4, 1), rand2d(4, 5, 1), {1, 0.1}),
                  ValidationError);
}

TEST_CASE("unsharp_mask identities and impulse response") {
  auto x = rand2d(9, 9, 7);
  CHECK(max_abs(gf::unsharp_mask(x, 0.0, 1.0), x) == 0.0);
  auto c = torch::full({6, 6}, 2.0, torch::kDouble);
  CHECK(max_abs(gf::unsharp_mask(c, 3.0, 1.5), c) < 1e-12);

  auto impulse = torch::tensor({0.0, 0.0, 1.0, 0.0, 0.0}, torch::kDouble).view({1, 5});
  auto out = gf::unsharp_mask(impulse, 1.0, 1.0);
  CHECK(out[0][2].item<double>() > 1.0);
  CHECK(out[0][1].item<double>() < 0.0);
  CHECK(out[0][3].item<double>() < 0.0);

  // Direct convolution with explicit renormalized Gaussian taps.
  for (int i = 0; i < 5; ++i) {
    double num = 0, den = 0;
    for (int k = 0; k < 5; ++k) {
      if (std::abs(k - i) > 3) continue;
      const double w = std::exp(-0.5 * (k - i) * (k - i));
      num += w * (k == 2 ? 1.0 : 0.0);
      den += w;
    }
    const double expect = (i == 2 ? 1.0 : 0.0) * 2 - num / den;
    CHECK(out[0][i].item<double>() == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK_THROWS_AS(gf::unsharp_mask(x, 1.0, 0.0), ValidationError);
}

TEST_CASE("attention coefficients match the weighted normal equations") {
  std::mt19937_64 rng(3);
  for (double eps : {0.0, 0.01, 1.0}) {
    for (int r : {1, 2}) {
      auto I = rand2d(6, 6, rng());
      auto g = rand2d(6, 6, rng());
      auto M = rand2d(6, 6, rng());
      const auto field = gf::attention_guided_coefficients(I, g, M, {r, eps});
      const auto pI = fsg::testing::to_plane(I);
      const auto pg = fsg::testing::to_plane(g);
      const auto pm = fsg::testing::to_plane(M);
      const auto a = fsg::testing::to_plane(field.a);
      const auto b = fsg::testing::to_plane(field.b);
      for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 6; ++x) {
          const auto [oa, ob] = fsg::testing::window_solve(pI, pg, pm, y, x, r, eps);
          CHECK(std::abs(static_cast<double>(a.at(y, x) - oa)) / std::max(1.0L, std::abs(oa)) <
                1e-6);
          CHECK(std::abs(static_cast<double>(b.at(y, x) - ob)) / std::max(1.0L, std::abs(ob)) <
                1e-6);
          // Local-minimum probe.
          const auto e0 = fsg::testing::window_energy(pI, pg, pm, y, x, r, eps, a.at(y, x),
                                                      b.at(y, x));
          for (double da : {-1e-3, 1e-3}) {
            for (double db : {-1e-3, 1e-3}) {
              CHECK(e0 <= fsg::testing::window_energy(pI, pg, pm, y, x, r, eps,
                                                      a.at(y, x) + da, b.at(y, x) + db));
            }
          }
        }
      }
    }
  }
}

TEST_CASE("attention coefficients with unit attention reduce to the classical filter") {
  auto I = rand2d(12, 10, 41);
  auto g = rand2d(12, 10, 42);
  auto ones = torch::ones_like(I);
  const double eps = 0.05;
  const int r = 2;
  const auto att = gf::attention_guided_coefficients(I, g, ones, {r, eps});
  const auto eps_map = eps / gf::window_count(12, 10, r);
  const auto cls = gf::guided_coefficients(I, g, r, eps_map);
  CHECK(max_abs(att.a, cls.a) < 1e-6);
  CHECK(max_abs(att.b, cls.b) < 1e-6);
}

TEST_CASE("attention coefficients degenerate and flat windows") {
  auto I = rand2d(5, 5, 1);
  auto g = rand2d(5, 5, 2);
  auto zero = torch::zeros_like(I);
  const auto z = gf::attention_guided_coefficients(I, g, zero, {1, 0.1});
  CHECK(z.a.abs().max().item<double>() == 0.0);
  CHECK(z.b.abs().max().item<double>() == 0.0);

  auto flat = torch::full({5, 5}, 0.4, torch::kDouble);
  const auto f = gf::attention_guided_coefficients(flat, g, torch::ones_like(g), {1, 0.0});
  CHECK(torch::isfinite(f.a).all().item<bool>());
  CHECK(f.a.abs().max().item<double>() == 0.0);
  CHECK(max_abs(f.b, gf::box_mean(g, 1)) < 1e-12);

  auto bad = torch::full({5, 5}, 1.5, torch::kDouble);
  CHECK_THROWS_AS(gf::attention_guided_coefficients(I, g, bad, {1, 0.1}), ValidationError);
  CHECK_THROWS_AS(gf::attention_guided_coefficients(I, g, -bad, {1, 0.1}), ValidationError);
}

TEST_CASE("attention_guided_filter limits and constants") {
  auto guide = rand2d(16, 16, 9).view({1, 1, 16, 16}) + 0.5;
  auto ones = torch::ones_like(guide);
  auto out = gf::attention_guided_filter(guide, guide, ones, {1, 1e-10});
  CHECK(max_abs(out, guide) < 1e-3);

  auto c = torch::full({1, 2, 16, 16}, 0.8, torch::kDouble);
  auto clo = torch::full({1, 2, 8, 8}, 0.8, torch::kDouble);
  auto m = rand2d(16, 16, 4).view({1, 1, 16, 16});
  CHECK(max_abs(gf::attention_guided_filter(c, clo, m, {1, 1e-2}), c) < 1e-12);

  CHECK_THROWS_AS(gf::attention_guided_filter(c, torch::zeros({1, 3, 8, 8}, torch::kDouble), m,
                                              {1, 1e-2}),
                  ValidationError);
  CHECK_THROWS_AS(gf::attention_guided_filter(c, torch::zeros({1, 2, 5, 5}, torch::kDouble), m,
                                              {1, 1e-2}),
                  ValidationError);
}

TEST_CASE("attention_guided_filter upsamples low-resolution coefficients bilinearly") {
  auto guide = rand2d(8, 8, 31).view({1, 1, 8, 8});
  auto input = rand2d(4, 4, 32).view({1, 1, 4, 4});
  auto m = rand2d(8, 8, 33).view({1, 1, 8, 8});
  const gf::WindowSpec spec{1, 0.01};
  auto out = gf::attention_guided_filter(guide, input, m, spec);

  // Independent composition with the bilinear oracle.
  const auto g_lo = fsg::testing::bilinear_oracle(fsg::testing::to_plane(guide), 4, 4);
  const auto m_lo = fsg::testing::bilinear_oracle(fsg::testing::to_plane(m), 4, 4);
  const auto pin = fsg::testing::to_plane(input);
  Plane a{4, 4, std::vector<long double>(16)}, b = a;
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      std::tie(a.at(y, x), b.at(y, x)) =
          fsg::testing::window_solve(g_lo, pin, m_lo, y, x, 1, 0.01L);
    }
  }
  const auto a_up = fsg::testing::bilinear_oracle(fsg::testing::box_oracle(a, 1), 8, 8);
  const auto b_up = fsg::testing::bilinear_oracle(fsg::testing::box_oracle(b, 1), 8, 8);
  const auto pg = fsg::testing::to_plane(guide);
  const auto got = fsg::testing::to_plane(out);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const long double expect = a_up.at(y, x) * pg.at(y, x) + b_up.at(y, x);
      CHECK(std::abs(static_cast<double>(got.at(y, x) - expect)) < 1e-9);
    }
  }
}

TEST_CASE("guided filters pass finite-difference gradient checks") {
  using fsg::testing::gradcheck;
  using fsg::testing::weighted_sum;
  auto guide = rand2d(8, 8, 51).view({1, 1, 8, 8});
  auto input = rand2d(8, 8, 52).view({1, 1, 8, 8});
  auto r1 = gradcheck(
      [](const std::vector<torch::Tensor>& v) {
        return weighted_sum(gf::guided_filter(v[0], v[1], {2, 0.05}));
      },
      {guide, input});
  CHECK(r1.rel_error < 1e-4);

  auto r2 = gradcheck(
      [](const std::vector<torch::Tensor>& v) {
        return weighted_sum(gf::unsharp_mask(v[0], 0.7, 1.0));
      },
      {guide});
  CHECK(r2.rel_error < 1e-4);

  auto gh = torch::rand({1, 2, 8, 8}, torch::kDouble);
  auto il = torch::rand({1, 2, 4, 4}, torch::kDouble);
  auto m = torch::rand({1, 1, 8, 8}, torch::kDouble) * 0.8 + 0.1;
  auto r3 = gradcheck(
      [](const std::vector<torch::Tensor>& v) {
        return weighted_sum(gf::attention_guided_filter(v[0], v[1], v[2], {1, 1e-2}));
      },
      {gh, il, m});
  CHECK(r3.rel_error < 1e-4);
  CHECK(r3.analytic_norm > 0);
}
