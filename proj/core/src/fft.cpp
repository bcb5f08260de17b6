#include "fft.hpp"

#include <map>
#include <mutex>
#include <tuple>

namespace rotstar::detail {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

enum class PlanKind { r2c, c2r, c2c };

struct PlanCache {
    std::map<std::tuple<PlanKind, int, int>, fftw_plan> plans;
    ~PlanCache() {
        for (auto& [key, plan] : plans) fftw_destroy_plan(plan);
    }
};

PlanCache& cache() {
    static PlanCache c;
    return c;
}

fftw_plan get_plan(PlanKind kind, int rows, int cols) {
    std::lock_guard lock(planner_mutex());
    auto& plans = cache().plans;
    const auto key = std::make_tuple(kind, rows, cols);
    if (auto it = plans.find(key); it != plans.end()) return it->second;

    const std::size_t nreal = static_cast<std::size_t>(rows) * cols;
    const std::size_t nhalf = static_cast<std::size_t>(rows) * (cols / 2 + 1);
    fftw_plan plan = nullptr;
    switch (kind) {
        case PlanKind::r2c: {
            FftwArray<double> in(nreal);
            FftwArray<fftw_complex> out(nhalf);
            plan = fftw_plan_dft_r2c_2d(rows, cols, in.data(), out.data(), FFTW_ESTIMATE);
            break;
        }
        case PlanKind::c2r: {
            FftwArray<fftw_complex> in(nhalf);
            FftwArray<double> out(nreal);
            plan = fftw_plan_dft_c2r_2d(rows, cols, in.data(), out.data(), FFTW_ESTIMATE);
            break;
        }
        case PlanKind::c2c: {
            FftwArray<fftw_complex> in(nreal);
            FftwArray<fftw_complex> out(nreal);
            plan = fftw_plan_dft_2d(rows, cols, in.data(), out.data(), FFTW_FORWARD, FFTW_ESTIMATE);
            break;
        }
    }
    plans.emplace(key, plan);
    return plan;
}

}  // namespace

int next_fast_size(int n) {
    for (int m = std::max(n, 1);; ++m) {
        int r = m;
        for (int p : {2, 3, 5, 7}) {
            while (r % p == 0) r /= p;
        }
        if (r == 1) return m;
    }
}

fftw_plan r2c_plan(int rows, int cols) { return get_plan(PlanKind::r2c, rows, cols); }
fftw_plan c2r_plan(int rows, int cols) { return get_plan(PlanKind::c2r, rows, cols); }
fftw_plan c2c_forward_plan(int rows, int cols) { return get_plan(PlanKind::c2c, rows, cols); }

}  // namespace rotstar::detail
