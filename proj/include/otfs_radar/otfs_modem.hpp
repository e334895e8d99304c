#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "otfs_radar/core_model.hpp"

namespace otfs_radar {

/// Row-major N x M complex grid. The tag distinguishes the delay-Doppler
/// domain (rows k, columns l) from the time-frequency domain (rows n,
/// columns m) so the two cannot be mixed up at call sites.
template <class Domain>
class Frame {
public:
    Frame() = default;
    Frame(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
    Frame(std::size_t rows, std::size_t cols, std::vector<cd> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        data_.resize(rows_ * cols_);
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    cd& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const cd& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<cd> flat() { return data_; }
    std::span<const cd> flat() const { return data_; }
    std::vector<cd>& vector() { return data_; }
    const std::vector<cd>& vector() const { return data_; }

    friend bool operator==(const Frame&, const Frame&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<cd> data_;
};

struct DelayDopplerDomain {};
struct TimeFrequencyDomain {};

using DelayDopplerFrame = Frame<DelayDopplerDomain>;
using TimeFrequencyFrame = Frame<TimeFrequencyDomain>;

/// X[n,m] = sum_k sum_l x[k,l] exp(j2pi(nk/N - ml/M)), no normalization.
TimeFrequencyFrame isfft(const DelayDopplerFrame& x);

/// y[k,l] = (1/NM) sum_n sum_m Y[n,m] exp(j2pi(ml/M - nk/N)); inverse of isfft.
DelayDopplerFrame sfft(const TimeFrequencyFrame& y);

/// Seeded unit-modulus QPSK frame scaled so the time-frequency samples have
/// mean power P_avg / N_a exactly.
DelayDopplerFrame generate_symbols(const SystemConfig& cfg, std::uint64_t seed);

/// Debug dump: row-major, little-endian f64 interleaved (re, im), no header.
void write_frame_dump(const std::filesystem::path& path, std::span<const cd> samples);
std::vector<cd> read_frame_dump(const std::filesystem::path& path);

}  // namespace otfs_radar
