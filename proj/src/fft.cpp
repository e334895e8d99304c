#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>
#include <vector>

namespace otfs_radar::detail {
namespace {

enum class Axis { Rows, Cols };

using PlanKey = std::tuple<std::size_t, std::size_t, Axis, FftSign>;

class PlanCache {
public:
    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    fftw_plan get(std::size_t rows, std::size_t cols, Axis axis, FftSign sign) {
        std::lock_guard lock(mutex_);
        const PlanKey key{rows, cols, axis, sign};
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;

        std::vector<std::complex<double>> scratch(rows * cols);
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        const int dir = sign == FftSign::Forward ? FFTW_FORWARD : FFTW_BACKWARD;
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        fftw_plan plan = nullptr;
        if (axis == Axis::Rows) {
            int n = static_cast<int>(cols);
            plan = fftw_plan_many_dft(1, &n, static_cast<int>(rows), buf, nullptr, 1, n, buf,
                                      nullptr, 1, n, dir, flags);
        } else {
            int n = static_cast<int>(rows);
            const int stride = static_cast<int>(cols);
            plan = fftw_plan_many_dft(1, &n, static_cast<int>(cols), buf, nullptr, stride, 1, buf,
                                      nullptr, stride, 1, dir, flags);
        }
        plans_.emplace(key, plan);
        return plan;
    }

private:
    std::mutex mutex_;
    std::map<PlanKey, fftw_plan> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

void run(std::span<std::complex<double>> grid, std::size_t rows, std::size_t cols, Axis axis,
         FftSign sign) {
    if (grid.empty()) return;
    fftw_plan plan = plan_cache().get(rows, cols, axis, sign);
    auto* buf = reinterpret_cast<fftw_complex*>(grid.data());
    fftw_execute_dft(plan, buf, buf);
}

}  // namespace

void fft_rows(std::span<std::complex<double>> grid, std::size_t rows, std::size_t cols,
              FftSign sign) {
    run(grid, rows, cols, Axis::Rows, sign);
}

void fft_cols(std::span<std::complex<double>> grid, std::size_t rows, std::size_t cols,
              FftSign sign) {
    run(grid, rows, cols, Axis::Cols, sign);
}

}  // namespace otfs_radar::detail
