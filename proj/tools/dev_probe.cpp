// Scratch probe (not shipped): streaming-mode sort throughput for the
// acceptance runtime budgets.
#include <chrono>
#include <cstdio>

#include "spms/generators.hpp"
#include "spms/sort.hpp"

using namespace spms;

static double time_sort(u64 n, u64 seed) {
  const auto input = generate_input("uniform", n, seed);
  const auto t0 = std::chrono::steady_clock::now();
  SortOutcome so = run_sort(input);
  const auto t1 = std::chrono::steady_clock::now();
  const double sec = std::chrono::duration<double>(t1 - t0).count();
  std::printf("n=%-7llu work=%-10llu accesses=%-10llu time=%.3fs  (%.1f Mword/s)\n",
              (unsigned long long)n, (unsigned long long)so.ex.metrics().work,
              (unsigned long long)so.ex.metrics().accesses(), sec,
              so.ex.metrics().accesses() / sec / 1e6);
  return sec;
}

int main() {
  time_sort(10000, 1);
  time_sort(50000, 2);
  time_sort(100000, 3);
  return 0;
}
