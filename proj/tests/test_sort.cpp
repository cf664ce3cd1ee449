// The merge sort end to end: output correctness against std::sort, tie
// handling through duplicates, subproblem size windows on the sampling
// path, memory-discipline audits, and determinism of the recording.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "spms/sort.hpp"

using namespace spms;

namespace {

ExecOptions quiet_opts(bool deep = false) {
  ExecOptions o;
  o.deep_checks = deep;
  return o;
}

std::vector<u64> sorted_copy(std::vector<u64> v) {
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<u64> random_vec(u64 n, u64 seed, u64 span = ~0ull) {
  Rng rng{seed};
  std::vector<u64> v(n);
  for (auto& e : v) e = span == ~0ull ? rng.next() : rng.below(span);
  return v;
}

}  // namespace

TEST_CASE("tiny inputs sort exactly, all permutations") {
  std::vector<u64> base{3, 1, 4, 1, 5, 9};
  std::sort(base.begin(), base.end());
  do {
    std::vector<u64> in(base.begin(), base.end());
    SortOutcome out = run_sort(in, {}, quiet_opts(true));
    CHECK(out.output == sorted_copy(in));
  } while (std::next_permutation(base.begin(), base.end()));
}

TEST_CASE("assorted sizes and shapes match the reference sort") {
  for (u64 n : {1ull, 2ull, 7ull, 24ull, 25ull, 100ull, 477ull, 1024ull, 5000ull}) {
    CAPTURE(n);
    SUBCASE("uniform random") {
      const std::vector<u64> in = random_vec(n, 1000 + n);
      SortOutcome out = run_sort(in, {}, quiet_opts(n <= 1024));
      CHECK(out.output == sorted_copy(in));
      CHECK(out.ex.mem().audit_violations().empty());
      CHECK(out.checks.size_violations == 0);
    }
    SUBCASE("already sorted") {
      std::vector<u64> in(n);
      std::iota(in.begin(), in.end(), 0);
      SortOutcome out = run_sort(in, {}, quiet_opts());
      CHECK(out.output == in);
    }
    SUBCASE("reverse sorted") {
      std::vector<u64> in(n);
      for (u64 i = 0; i < n; ++i) in[i] = n - i;
      SortOutcome out = run_sort(in, {}, quiet_opts());
      CHECK(out.output == sorted_copy(in));
    }
    SUBCASE("few distinct values") {
      const std::vector<u64> in = random_vec(n, 77 + n, 3);
      SortOutcome out = run_sort(in, {}, quiet_opts(n <= 1024));
      CHECK(out.output == sorted_copy(in));
      CHECK(out.checks.size_violations == 0);
    }
  }
}

TEST_CASE("all-equal keys survive the sampling machinery") {
  const std::vector<u64> in(5000, 42);
  SortOutcome out = run_sort(in, {}, quiet_opts(true));
  CHECK(out.output == in);
  CHECK(out.checks.sample_calls > 0);  // ties must flow through the partition
  CHECK(out.checks.size_violations == 0);
  CHECK(out.ex.mem().audit_violations().empty());
}

TEST_CASE("merging pre-sorted lists works at every arity shape") {
  Rng rng{221};
  for (int it = 0; it < 12; ++it) {
    const u64 r = 2 + rng.below(15);
    const u64 rl = 1 + rng.below(r);
    std::vector<std::vector<u64>> lists(rl);
    std::vector<u64> all;
    for (auto& li : lists) {
      li.resize(rng.below(60));
      for (auto& e : li) e = rng.below(40);  // duplicate-heavy
      std::sort(li.begin(), li.end());
      all.insert(all.end(), li.begin(), li.end());
    }
    CAPTURE(r);
    CAPTURE(rl);
    SortOutcome out = run_merge(lists, r, {}, quiet_opts(true));
    CHECK(out.output == sorted_copy(all));
    CHECK(out.ex.mem().audit_violations().empty());
  }
}

TEST_CASE("an oversized merge partitions into size-bounded subproblems") {
  // 16 lists totalling 1e5 elements at arity 16 exceed 3*16^3, so the
  // sampling path must fire and cut subproblems of 4097..12287 elements.
  Rng rng{5511};
  const u64 r = 16;
  std::vector<std::vector<u64>> lists(r);
  for (auto& li : lists) {
    li.resize(6250);
    for (auto& e : li) e = rng.next();
    std::sort(li.begin(), li.end());
  }
  std::vector<u64> all;
  for (auto& li : lists) all.insert(all.end(), li.begin(), li.end());
  SortOutcome out = run_merge(lists, r, {}, quiet_opts());
  CHECK(out.output == sorted_copy(all));
  CHECK(out.checks.sample_calls >= 1);
  CHECK(out.checks.size_checks >= 9);  // ~1e5 / (2*16^3) subproblems
  CHECK(out.checks.size_weak == 0);
  CHECK(out.checks.size_violations == 0);
  CHECK(out.checks.partition_checks > 0);
  CHECK(out.ex.mem().audit_violations().empty());
}

TEST_CASE("recursion bookkeeping looks structurally sane") {
  const std::vector<u64> in = random_vec(1 << 10, 9);
  SortOutcome out = run_sort(in, {}, quiet_opts());
  CHECK(out.checks.merge_calls > 0);
  CHECK(out.checks.base_calls > 0);
  CHECK((out.landing == 0 || out.landing == 1));
  CHECK(out.ex.metrics().work > 0);
  CHECK(out.ex.metrics().span > 0);
  CHECK(out.ex.metrics().span < out.ex.metrics().work);
}

TEST_CASE("two identical runs record identical computations") {
  const std::vector<u64> in = random_vec(2000, 4242);
  ExecOptions rec;
  rec.record = true;
  SortOutcome a = run_sort(in, {}, rec);
  SortOutcome b = run_sort(in, {}, rec);
  CHECK(a.output == b.output);
  CHECK(a.landing == b.landing);
  CHECK(a.ex.metrics().work == b.ex.metrics().work);
  CHECK(a.ex.metrics().span == b.ex.metrics().span);
  REQUIRE(a.ex.dag().size() == b.ex.dag().size());
  bool nodes_equal = true;
  for (u32 i = 0; i < a.ex.dag().size(); ++i) {
    const Node& x = a.ex.dag().nodes[i];
    const Node& y = b.ex.dag().nodes[i];
    nodes_equal = nodes_equal && x.kind == y.kind && x.weight == y.weight &&
                  x.next == y.next && x.aux == y.aux;
  }
  CHECK(nodes_equal);
}

TEST_CASE("bad inputs are rejected up front") {
  CHECK_THROWS_AS(run_merge({{3, 1, 2}}, 4), SimFault);          // unsorted list
  CHECK_THROWS_AS(run_merge({{1}, {2}, {3}}, 2), SimFault);      // arity too low
  SortParams odd;
  odd.c = 7;
  CHECK_THROWS_AS(run_sort({1, 2, 3}, odd), SimFault);           // odd exponent
  SortParams tiny;
  tiny.c = 4;
  CHECK_THROWS_AS(run_sort({1, 2, 3}, tiny), SimFault);          // exponent too small
}

TEST_CASE("a larger streaming run keeps the memory audits clean") {
  const std::vector<u64> in = random_vec(20000, 31);
  SortOutcome out = run_sort(in, {}, quiet_opts());
  CHECK(out.output == sorted_copy(in));
  CHECK(out.ex.mem().audit_violations().empty());
  CHECK(out.checks.size_violations == 0);
  CHECK(out.checks.size_weak == 0);
}
