#include <doctest.h>

#include "psynth/error.hpp"
#include "psynth/losses.hpp"
#include "support.hpp"

using namespace psynth;

namespace {

// Test-side magnitude STFT: periodic Hann, per-frame naive DFT.
std::vector<std::vector<double>> naive_stft(const std::vector<double>& x, std::size_t frame, std::size_t hop) {
  std::vector<std::vector<double>> out;
  std::vector<double> buf(frame);
  for (std::size_t start = 0; start + frame <= x.size(); start += hop) {
    for (std::size_t n = 0; n < frame; ++n) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(frame));
      buf[n] = w * x[start + n];
    }
    const auto spec = test::naive_dft(buf.data(), frame);
    std::vector<double> mag(spec.size());
    for (std::size_t k = 0; k < spec.size(); ++k) mag[k] = std::abs(spec[k]);
    out.push_back(std::move(mag));
  }
  return out;
}

std::vector<double> add(std::vector<double> a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

LossConfig mode(LossMode m, double lambda = 0.5) {
  LossConfig c;
  c.mode = m;
  c.lambda = lambda;
  return c;
}

}  // namespace

TEST_CASE("stft_mag matches a naive per-frame DFT") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto x = test::uniform_noise(2048, seed);
    const auto s = stft_mag(x, 1024, 512);
    const auto o = naive_stft(x, 1024, 512);
    REQUIRE(s.frames == o.size());
    REQUIRE(s.bins == 513);
    double worst = 0.0;
    for (std::size_t m = 0; m < s.frames; ++m) {
      for (std::size_t k = 0; k < s.bins; ++k) {
        const double ref = o[m][k];
        worst = std::max(worst, std::abs(s.at(m, k) - ref) / std::max(ref, 1e-12));
      }
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("stft shapes, zero signal and a bin-centred sine") {
  const std::vector<double> zero(16000, 0.0);
  const auto z = stft_mag(zero);
  CHECK(z.frames == 30);
  CHECK(z.bins == 513);
  for (double v : z.magnitude) REQUIRE(v == 0.0);

  const auto s = stft_mag(test::sine(1000.0, 16000).samples);
  for (std::size_t m = 0; m < s.frames; ++m) {
    std::vector<double> row(s.magnitude.begin() + static_cast<long>(m * s.bins),
                            s.magnitude.begin() + static_cast<long>((m + 1) * s.bins));
    REQUIRE(test::argmax(row) == 64);
  }

  const std::vector<double> short_x(1000, 0.0);
  try {
    stft_mag(short_x);
    FAIL("expected TooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooShort);
  }
}

TEST_CASE("hann window is periodic") {
  const auto w = hann_window(8);
  CHECK(w[0] == 0.0);
  CHECK(w[4] == doctest::Approx(1.0));
  CHECK(w[2] == doctest::Approx(w[6]));
}

TEST_CASE("l1_recon definitions") {
  const auto x = test::uniform_noise(1000, 4);
  CHECK(l1_recon(x, x) == 0.0);
  auto y = x;
  for (auto& v : y) v += 0.1;
  CHECK(l1_recon(y, x) == doctest::Approx(0.1).epsilon(1e-12));
  const auto z = test::uniform_noise(1000, 5);
  double s = 0.0;
  for (std::size_t i = 0; i < 1000; ++i) s += std::abs(z[i] - x[i]);
  CHECK(std::abs(l1_recon(z, x) - s / 1000.0) <= 1e-9);
}

TEST_CASE("stft_loss matches the naive STFT and separates bands") {
  const auto a = test::uniform_noise(4096, 6);
  const auto b = test::uniform_noise(4096, 7);
  const auto sa = naive_stft(a, 1024, 512), sb = naive_stft(b, 1024, 512);
  double full = 0.0, high = 0.0;
  for (std::size_t m = 0; m < sa.size(); ++m) {
    for (std::size_t k = 0; k < 513; ++k) {
      full += std::abs(sa[m][k] - sb[m][k]);
      if (k >= 40) high += std::abs(sa[m][k] - sb[m][k]);
    }
  }
  full /= static_cast<double>(sa.size() * 513);
  high /= static_cast<double>(sa.size() * (513 - 40));
  CHECK(stft_loss(a, b, mode(LossMode::Full)) == doctest::Approx(full).epsilon(1e-9));
  CHECK(stft_loss(a, b, mode(LossMode::High)) == doctest::Approx(high).epsilon(1e-9));
  CHECK(stft_loss(a, a, mode(LossMode::Full)) == 0.0);

  const std::vector<double> silence(16000, 0.0);
  const auto low = test::sine(100.0, 16000).samples;
  const double low_high = stft_loss(silence, low, mode(LossMode::High));
  const double low_full = stft_loss(silence, low, mode(LossMode::Full));
  CHECK(low_high < 0.05 * low_full);

  const auto two_k = test::sine(2000.0, 16000).samples;
  CHECK(stft_loss(silence, two_k, mode(LossMode::High)) > 0.0);
}

TEST_CASE("total_loss composition for each mode") {
  const auto a = test::uniform_noise(16000, 8, 0.5);
  const auto b = test::uniform_noise(16000, 9, 0.5);
  const double l1 = l1_recon(a, b);
  const double sf = stft_loss(a, b, mode(LossMode::Full));
  const double sh = stft_loss(a, b, mode(LossMode::High));

  const auto w = total_loss(a, b, mode(LossMode::Wave));
  CHECK(w.total == l1);
  CHECK(w.stft == 0.0);
  CHECK(total_loss(a, b, mode(LossMode::Full)).total == doctest::Approx(l1 + 0.5 * sf).epsilon(1e-12));
  CHECK(total_loss(a, b, mode(LossMode::High)).total == doctest::Approx(l1 + 0.5 * sh).epsilon(1e-12));
  CHECK(total_loss(a, b, mode(LossMode::Full, 0.0)).total == w.total);
  for (auto m : {LossMode::Wave, LossMode::High, LossMode::Full}) CHECK(std::abs(total_loss(a, a, mode(m)).total) <= 1e-6);
}

TEST_CASE("property: losses are non-negative and vanish only on equality") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = test::uniform_noise(4096, seed);
    auto b = a;
    b[seed * 100 + 7] += 0.25;
    for (auto m : {LossMode::Wave, LossMode::High, LossMode::Full}) {
      const auto p = total_loss(b, a, mode(m));
      CHECK(p.total > 0.0);
      CHECK(p.l1 > 0.0);
      CHECK(p.stft >= 0.0);
      CHECK(std::isfinite(p.total));
    }
  }
}

TEST_CASE("property: HIGH loss ignores equal low-frequency content added to both sides") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = test::uniform_noise(16000, 10 + seed, 0.3);
    const auto b = test::uniform_noise(16000, 20 + seed, 0.3);
    const double base = stft_loss(a, b, mode(LossMode::High));
    for (double hz : {60.0, 150.0, 300.0, 500.0}) {
      const auto low = test::sine(hz, 16000, 0.5).samples;
      const double shifted = stft_loss(add(a, low), add(b, low), mode(LossMode::High));
      INFO("seed " << seed << " hz " << hz);
      CHECK(std::abs(shifted - base) <= 0.05 * base);
    }
  }
}

TEST_CASE("total_loss_grad matches central differences") {
  const std::size_t n = 2048;
  const auto x = test::uniform_noise(n, 30, 0.5);
  const auto y = test::uniform_noise(n, 31, 0.5);
  for (auto m : {LossMode::Wave, LossMode::High, LossMode::Full}) {
    const auto cfg = mode(m);
    std::vector<double> g(n);
    const auto parts = total_loss_grad(x, y, cfg, g);
    CHECK(parts.total == doctest::Approx(total_loss(x, y, cfg).total).epsilon(1e-12));
    auto xp = x;
    std::mt19937_64 rng(32);
    for (int probe = 0; probe < 40; ++probe) {
      const std::size_t i = rng() % n;
      if (std::abs(x[i] - y[i]) < 1e-3) continue;
      const double eps = 1e-5;
      xp[i] = x[i] + eps;
      const double up = total_loss(xp, y, cfg).total;
      xp[i] = x[i] - eps;
      const double dn = total_loss(xp, y, cfg).total;
      xp[i] = x[i];
      const double num = (up - dn) / (2 * eps);
      INFO(to_string(m) << " index " << i);
      CHECK(std::abs(g[i] - num) <= 1e-5 * std::max(std::abs(num), 1e-3));
    }
  }
}

TEST_CASE("loss config parsing and validation") {
  CHECK(parse_loss_mode("FULL") == LossMode::Full);
  CHECK(parse_loss_mode("wave") == LossMode::Wave);
  CHECK(parse_loss_mode("High") == LossMode::High);
  CHECK_THROWS_AS(parse_loss_mode("spectral"), Error);
  LossConfig c;
  CHECK(c.lambda == 0.5);
  CHECK(c.first_bin() == 0);
  c.mode = LossMode::High;
  CHECK(c.first_bin() == 40);
  CHECK(loss_config_from_json(nlohmann::json::parse(to_json(c).dump())) == c);
  c.lambda = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.high_cut_bin = 600;
  CHECK_THROWS_AS(c.validate(), Error);
}
