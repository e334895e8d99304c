#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace otfs_radar::detail {

enum class FftSign { Forward, Backward };

/// Unnormalized in-place 1D DFTs over a row-major rows x cols grid.
/// Forward uses exp(-j2pi ...), Backward exp(+j2pi ...). Plans are cached
/// per shape and the transforms are safe to call from several threads.
void fft_rows(std::span<std::complex<double>> grid, std::size_t rows, std::size_t cols,
              FftSign sign);
void fft_cols(std::span<std::complex<double>> grid, std::size_t rows, std::size_t cols,
              FftSign sign);

}  // namespace otfs_radar::detail
