// Compares the serial reference matmul against the OpenMP kernel: timing
// plus a bit-exactness check (the kernels share accumulation order, so the
// outputs must match exactly, not just approximately).

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "vdrv/kernels.hpp"
#include "vdrv/rng.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double run_case(size_t m, size_t k, size_t n, int reps) {
    vdrv::Rng rng(0xBE5C0000 + m * 131 + n);
    std::vector<double> a(m * k), b(k * n), c_serial(m * n), c_parallel(m * n);
    for (double& v : a) v = rng.gaussian();
    for (double& v : b) v = rng.gaussian();

    auto time_it = [&](auto&& fn, std::vector<double>& c) {
        fn(a.data(), b.data(), c.data(), m, k, n);  // warm-up
        auto t0 = clock_type::now();
        for (int r = 0; r < reps; ++r) fn(a.data(), b.data(), c.data(), m, k, n);
        auto t1 = clock_type::now();
        return std::chrono::duration<double>(t1 - t0).count() / reps;
    };

    const double ts = time_it(vdrv::kernels::serial::matmul, c_serial);
    const double tp = time_it(vdrv::kernels::matmul, c_parallel);

    const bool exact = std::memcmp(c_serial.data(), c_parallel.data(), m * n * sizeof(double)) == 0;
    const double gflops = 2.0 * m * k * n / 1e9;
    std::printf("%4zu x %4zu x %4zu  serial %8.3f ms (%6.2f GF/s)  parallel %8.3f ms (%6.2f GF/s)  "
                "speedup %.2fx  bit-identical: %s\n",
                m, k, n, ts * 1e3, gflops / ts, tp * 1e3, gflops / tp, ts / tp, exact ? "yes" : "NO");
    return exact ? 0.0 : 1.0;
}

}  // namespace

int main() {
    int failures = 0;
    failures += static_cast<int>(run_case(55, 64, 64, 200));
    failures += static_cast<int>(run_case(55, 64, 128, 200));
    failures += static_cast<int>(run_case(128, 128, 128, 100));
    failures += static_cast<int>(run_case(256, 256, 256, 20));
    failures += static_cast<int>(run_case(512, 512, 512, 5));
    return failures == 0 ? 0 : 1;
}
