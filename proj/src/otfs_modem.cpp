#include "otfs_radar/otfs_modem.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "fft.hpp"

namespace otfs_radar {

using detail::FftSign;

TimeFrequencyFrame isfft(const DelayDopplerFrame& x) {
    TimeFrequencyFrame out(x.rows(), x.cols(), x.vector());
    // exp(-j2pi ml/M) along delay, exp(+j2pi nk/N) along Doppler.
    detail::fft_rows(out.flat(), out.rows(), out.cols(), FftSign::Forward);
    detail::fft_cols(out.flat(), out.rows(), out.cols(), FftSign::Backward);
    return out;
}

DelayDopplerFrame sfft(const TimeFrequencyFrame& y) {
    DelayDopplerFrame out(y.rows(), y.cols(), y.vector());
    detail::fft_rows(out.flat(), out.rows(), out.cols(), FftSign::Backward);
    detail::fft_cols(out.flat(), out.rows(), out.cols(), FftSign::Forward);
    const double scale = 1.0 / static_cast<double>(out.size());
    for (auto& v : out.flat()) v *= scale;
    return out;
}

DelayDopplerFrame generate_symbols(const SystemConfig& cfg, std::uint64_t seed) {
    DelayDopplerFrame x(cfg.N, cfg.M);
    // sum |X|^2 = NM sum |x|^2, so mean |X|^2 = NM |x|^2 for constant modulus.
    const double nm = static_cast<double>(cfg.N * cfg.M);
    const double amplitude = std::sqrt(cfg.P_avg / (static_cast<double>(cfg.N_a) * nm));
    std::mt19937_64 rng(seed);
    for (auto& s : x.flat()) {
        const auto quadrant = static_cast<double>(rng() >> 62);
        s = std::polar(amplitude, kPi / 4.0 + quadrant * kPi / 2.0);
    }
    return x;
}

void write_frame_dump(const std::filesystem::path& path, std::span<const cd> samples) {
    static_assert(std::endian::native == std::endian::little, "dump format is little-endian");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(samples.data()),
              static_cast<std::streamsize>(samples.size() * sizeof(cd)));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<cd> read_frame_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % sizeof(cd) != 0)
        throw std::runtime_error(path.string() + " is not a whole number of complex samples");
    std::vector<cd> samples(bytes / sizeof(cd));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(samples.data()), static_cast<std::streamsize>(bytes));
    return samples;
}

}  // namespace otfs_radar
