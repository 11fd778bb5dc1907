#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace dfcp {

/// Static-chunked parallel loop. Each index must write only its own slots,
/// so results are identical for any thread count.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    if (threads <= 1 || n < 2 * threads) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const int lo = static_cast<int>(static_cast<long long>(n) * w / workers);
        const int hi = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

/// Shortest representation that round-trips a double exactly; used for every
/// emitted CSV/JSON number so reruns are byte-identical.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // trim to the shortest form that still round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char probe[40];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(probe, "%lf", &back);
        if (back == v) return probe;
    }
    return buf;
}

}  // namespace dfcp
