#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include <fftw3.h>

namespace dpd::fft {

namespace detail {

// FFTW planning is not thread-safe; execution on a shared plan is. Plans are
// created once per (size, direction) with FFTW_UNALIGNED so the new-array
// execute interface accepts any std::vector storage, and FFTW_ESTIMATE so the
// chosen algorithm (and therefore every output bit) is reproducible.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(std::size_t n, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_pair(n, sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        fftw_complex* in = fftw_alloc_complex(n);
        fftw_complex* out = fftw_alloc_complex(n);
        fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), in, out, sign,
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(in);
        fftw_free(out);
        plans_.emplace(key, plan);
        return plan;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    std::mutex mutex_;
    std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

inline std::vector<std::complex<double>> transform(std::span<const std::complex<double>> in, int sign) {
    std::vector<std::complex<double>> src(in.begin(), in.end());
    std::vector<std::complex<double>> dst(in.size());
    if (in.empty()) return dst;
    fftw_plan plan = PlanCache::instance().get(in.size(), sign);
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(src.data()),
                     reinterpret_cast<fftw_complex*>(dst.data()));
    return dst;
}

} // namespace detail

/// Unnormalized forward DFT: X[k] = sum_n x[n] exp(-j 2 pi k n / N).
inline std::vector<std::complex<double>> forward(std::span<const std::complex<double>> x) {
    return detail::transform(x, FFTW_FORWARD);
}

/// Inverse DFT including the 1/N factor, so inverse(forward(x)) == x.
inline std::vector<std::complex<double>> inverse(std::span<const std::complex<double>> X) {
    auto x = detail::transform(X, FFTW_BACKWARD);
    const double scale = x.empty() ? 1.0 : 1.0 / static_cast<double>(x.size());
    for (auto& v : x) v *= scale;
    return x;
}

/// Rotate so that bin 0 (DC) lands in the middle: [-N/2, N/2).
template <typename T>
std::vector<T> shift(std::span<const T> x) {
    const std::size_t n = x.size();
    std::vector<T> out(n);
    const std::size_t half = n / 2;
    for (std::size_t i = 0; i < n; ++i) out[(i + half) % n] = x[i];
    return out;
}

} // namespace dpd::fft
