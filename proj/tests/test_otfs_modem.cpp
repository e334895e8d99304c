#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "otfs_radar/otfs_modem.hpp"

using namespace otfs_radar;

namespace {

DelayDopplerFrame random_frame(std::size_t N, std::size_t M, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    DelayDopplerFrame x(N, M);
    for (auto& v : x.flat()) v = {g(rng), g(rng)};
    return x;
}

double max_abs_diff(std::span<const cd> a, std::span<const cd> b) {
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
    return e;
}

}  // namespace

TEST(Isfft, ZeroFrame) {
    const DelayDopplerFrame x(5, 7);
    const auto X = isfft(x);
    for (const auto& v : X.flat()) EXPECT_EQ(v, cd(0.0, 0.0));
}

TEST(Isfft, ImpulseAtOrigin) {
    DelayDopplerFrame x(5, 7);
    x(0, 0) = 1.0;
    const auto X = isfft(x);
    for (const auto& v : X.flat()) EXPECT_NEAR(std::abs(v - cd(1.0, 0.0)), 0.0, 1e-14);
}

TEST(Isfft, AllOnes) {
    DelayDopplerFrame x(4, 6);
    for (auto& v : x.flat()) v = 1.0;
    const auto X = isfft(x);
    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t m = 0; m < 6; ++m)
            EXPECT_NEAR(std::abs(X(n, m) - cd(n == 0 && m == 0 ? 24.0 : 0.0)), 0.0, 1e-12);
}

TEST(Isfft, MatchesDoubleSum) {
    const auto x = random_frame(4, 4, 11);
    const auto ref = oracle::isfft(x.vector(), 4, 4);
    EXPECT_LE(max_abs_diff(isfft(x).flat(), ref), 1e-12);
    const auto y = random_frame(3, 5, 12);
    EXPECT_LE(max_abs_diff(isfft(y).flat(), oracle::isfft(y.vector(), 3, 5)), 1e-12);
}

TEST(Sfft, AllOnes) {
    TimeFrequencyFrame Y(4, 6);
    for (auto& v : Y.flat()) v = 1.0;
    const auto y = sfft(Y);
    for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t l = 0; l < 6; ++l)
            EXPECT_NEAR(std::abs(y(k, l) - cd(k == 0 && l == 0 ? 1.0 : 0.0)), 0.0, 1e-14);
}

TEST(Sfft, MatchesDoubleSum) {
    const auto x = random_frame(4, 4, 21);
    const TimeFrequencyFrame Y(4, 4, x.vector());
    EXPECT_LE(max_abs_diff(sfft(Y).flat(), oracle::sfft(Y.vector(), 4, 4)), 1e-12);
}

TEST(Sfft, InvertsIsfft) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto x = random_frame(50, 64, s);
        EXPECT_LE(max_abs_diff(sfft(isfft(x)).flat(), x.flat()), 1e-12);
        const TimeFrequencyFrame Y(50, 64, x.vector());
        EXPECT_LE(max_abs_diff(isfft(sfft(Y)).flat(), Y.flat()), 1e-12);
    }
}

TEST(Isfft, Parseval) {
    const auto x = random_frame(6, 10, 3);
    const auto X = isfft(x);
    double ex = 0.0, eX = 0.0;
    for (const auto& v : x.flat()) ex += std::norm(v);
    for (const auto& v : X.flat()) eX += std::norm(v);
    EXPECT_NEAR(eX / (60.0 * ex), 1.0, 1e-12);
}

TEST(Symbols, DeterministicInSeed) {
    const auto cfg = make_system_config(16, 32, 75e6, 60e9, 8, 1, AngleSector{});
    EXPECT_EQ(generate_symbols(cfg, 99), generate_symbols(cfg, 99));
    EXPECT_NE(generate_symbols(cfg, 99), generate_symbols(cfg, 100));
}

TEST(Symbols, QpskPhasesAndModulus) {
    const auto cfg = make_system_config(16, 32, 75e6, 60e9, 8, 1, AngleSector{});
    const auto x = generate_symbols(cfg, 5);
    const double r0 = std::abs(x.flat()[0]);
    std::size_t seen[4] = {0, 0, 0, 0};
    for (const auto& v : x.flat()) {
        EXPECT_NEAR(std::abs(v), r0, 1e-15 * r0);
        double ph = std::arg(v);
        if (ph < 0) ph += 2 * kPi;
        const double q = (ph - kPi / 4) / (kPi / 2);
        EXPECT_NEAR(q, std::round(q), 1e-12);
        ++seen[static_cast<int>(std::round(q)) & 3];
    }
    for (auto c : seen) EXPECT_GT(c, 0u);
}

TEST(Symbols, AveragePowerConstraint) {
    for (std::size_t n_a : {1u, 8u, 16u}) {
        auto cfg = make_system_config(16, 32, 75e6, 60e9, n_a, 1, AngleSector{});
        cfg.P_avg = 2.5;
        const auto X = isfft(generate_symbols(cfg, 8));
        double mean = 0.0;
        for (const auto& v : X.flat()) mean += std::norm(v);
        mean /= double(X.size());
        EXPECT_NEAR(mean / (cfg.P_avg / double(n_a)), 1.0, 1e-10);
    }
}

TEST(FrameDump, RoundTrip) {
    const auto x = random_frame(3, 4, 77);
    const auto path = std::filesystem::temp_directory_path() / "otfs_radar_test_dump.bin";
    write_frame_dump(path, x.flat());
    EXPECT_EQ(std::filesystem::file_size(path), 12 * 16u);
    const auto back = read_frame_dump(path);
    ASSERT_EQ(back.size(), 12u);
    for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], x.flat()[i]);
    std::filesystem::remove(path);
}
