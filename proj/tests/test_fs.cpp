// False-sharing accountant: window-based foreign-write charging, stack
// transition audit, per-block delay gates, and the transpose-order mutation
// diagnostic that the sharing audit exists to catch.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "spms/engine.hpp"
#include "spms/fs.hpp"
#include "spms/scheduler.hpp"
#include "spms/sort.hpp"

using namespace spms;

namespace {

ExecOptions rec_opts() {
  ExecOptions o;
  o.record = true;
  return o;
}

std::vector<u64> random_vec(u64 n, u64 seed) {
  Rng rng(seed);
  std::vector<u64> v(n);
  for (auto& x : v) x = rng.below(1u << 20);
  return v;
}

SchedPlan trivial_plan(const Dag& d) {
  SchedPlan pl;
  pl.kernels.push_back({0, static_cast<u32>(d.size()), 0, 0});
  pl.task_of.assign(d.size(), 0);
  return pl;
}

// Two-processor plan stealing the right subtree of the first fork.
SchedPlan one_steal_plan(const Dag& d, u64 thief_delay = 1) {
  u32 f = kNoNode;
  for (u32 v = 0; v < d.size(); ++v)
    if (d.nodes[v].kind == NodeKind::Fork) {
      f = v;
      break;
    }
  REQUIRE(f != kNoNode);
  const u32 rc = d.nodes[f].aux;
  const u32 jn = d.nodes[f].pair;
  auto prefix = [&](u32 lo, u32 hi) {
    u64 s = 0;
    for (u32 v = lo; v < hi; ++v) s += d.nodes[v].weight;
    return s;
  };
  SchedPlan pl;
  pl.p = 2;
  pl.task_count = 2;
  pl.task_of.assign(d.size(), 0);
  for (u32 v = rc; v < jn; ++v) pl.task_of[v] = 1;
  pl.kernels.push_back({0, rc, 0, 0});
  pl.kernels.push_back({rc, jn, 1, thief_delay});
  pl.kernels.push_back({jn, static_cast<u32>(d.size()), 0,
                        std::max(prefix(0, rc), thief_delay + prefix(rc, jn))});
  return pl;
}

std::vector<u64> usurp_counts(const Schedule& sch) {
  std::vector<u64> u(sch.task_count(), 0);
  for (const UsurpRec& ur : sch.usurpations) ++u[ur.task];
  return u;
}

bool reports_equal(const FsReport& a, const FsReport& b) {
  return a.f_heap == b.f_heap && a.f_heap_scratch == b.f_heap_scratch &&
         a.f_stack == b.f_stack && a.stack_x_words == b.stack_x_words &&
         a.stack_audit_checked == b.stack_audit_checked &&
         a.stack_audit_violations == b.stack_audit_violations &&
         a.heap_delay_max == b.heap_delay_max && a.stack_delay_max == b.stack_delay_max &&
         a.sharing_blocks_max == b.sharing_blocks_max &&
         a.sharing_blocks_total == b.sharing_blocks_total && a.pw_audit_max == b.pw_audit_max;
}

}  // namespace

TEST_CASE("a single processor shares nothing") {
  SortOutcome so = run_sort(random_vec(1500, 5), {}, rec_opts());
  const Dag& d = so.ex.dag();
  FsOutcome out = account_false_sharing(d, so.ex.mem(), so.ex.options().cache,
                                        trivial_plan(d), {0});
  CHECK(out.fs.f_total() == 0);
  CHECK(out.fs.f_heap == 0);
  CHECK(out.fs.f_stack == 0);
  CHECK(out.fs.stack_x_words == 0);
  CHECK(out.fs.stack_audit_violations == 0);
  CHECK(out.fs.stack_delay_max == 0);
  CHECK(out.fs.sharing_blocks_total == 0);
  CHECK(out.fs.pw_audit_max == 0);
  CHECK(out.replay.inval_misses == 0);
  // the heap delay gate still sees the ordinary write traffic
  CHECK(out.fs.heap_delay_max > 0);
  SeqReplay seq = replay_sequential(d, so.ex.options().cache);
  CHECK(out.replay.q_par == seq.cache.misses());
}

TEST_CASE("foreign writes inside a stolen task's window are charged exactly") {
  Execution ex(rec_opts());
  ArrRef x = ex.alloc(64);  // one block, shared across the fork below
  ex.leaf([&](LeafCtx& c) {
    for (u64 i = 0; i < 64; ++i) c.wr(x, i, i);  // before any window: free
  });
  ex.par_spawn(2, [&](u64 i) {
    if (i == 0) {
      ex.leaf([&](LeafCtx& c) {
        for (u64 j = 0; j < 32; ++j) c.wr(x, j, j + 1);  // foreign, in-window
      });
    } else {
      ex.leaf([&](LeafCtx& c) {
        for (u64 j = 32; j < 64; ++j) c.wr(x, j, j + 1);
      });
      // Two staged delays: nodes replay atomically at their start tick, so
      // the second one pops after the owner's overwrite and keeps the
      // window open across it.
      ex.leaf([&](LeafCtx& c) { c.charge(500); });
      ex.leaf([&](LeafCtx& c) { c.charge(500); });
    }
  });
  ex.finish();
  const Dag& d = ex.dag();

  FsOutcome out = account_false_sharing(d, ex.mem(), ex.options().cache,
                                        one_steal_plan(d), {0, 0});
  // Only the left branch's 32 words land inside the thief's window; the
  // 64-word prologue writes are ordered before it and charge nothing.
  CHECK(out.fs.f_heap == 32);
  CHECK(out.fs.f_heap_scratch == 0);
  CHECK(out.fs.sharing_blocks_max == 1);
  CHECK(out.fs.sharing_blocks_total == 1);
  CHECK(out.fs.heap_delay_max == 128);  // 64 + 32 + 32 writes, one block
  // The stolen entry reads its parent's two-word segment: foreign stack
  // traffic, bounded ownership churn, no audit violations.
  CHECK(out.fs.stack_x_words >= 2);
  CHECK(out.fs.f_stack >= 1);
  CHECK(out.fs.f_stack <= 8);
  CHECK(out.fs.stack_audit_violations == 0);
}

TEST_CASE("accounting a stolen schedule is deterministic and audit-clean") {
  SortOutcome so = run_sort(random_vec(3000, 9), {}, rec_opts());
  const Dag& d = so.ex.dag();
  for (u32 p : {2u, 4u}) {
    CAPTURE(p);
    Schedule sch = simulate_schedule(d, p, 23);
    REQUIRE(!sch.steals.empty());
    FsOutcome a = account_false_sharing(d, so.ex.mem(), so.ex.options().cache, sch.plan(),
                                        usurp_counts(sch));
    FsOutcome b = account_false_sharing(d, so.ex.mem(), so.ex.options().cache, sch.plan(),
                                        usurp_counts(sch));
    CHECK(reports_equal(a.fs, b.fs));
    CHECK(a.replay.q_par == b.replay.q_par);
    // Structural guarantees: transition budget and stack alignment hold on
    // real schedules, and invalidation misses never exceed write fan-out.
    CHECK(a.fs.stack_audit_violations == 0);
    CHECK(a.replay.walk.misalign_violations == 0);
    CHECK(a.replay.inval_misses <= a.replay.fanout_sum);
    CHECK(a.fs.f_total() >= a.fs.f_stack);
    if (a.fs.f_heap > 0) CHECK(a.fs.sharing_blocks_max >= 1);
  }
}

TEST_CASE("transpose outer order in input order wrecks the sharing audit") {
  // Four long sorted lists at low arity force the sampling path, whose
  // redistribution transpose is the fs-sensitive kernel.
  std::vector<std::vector<u64>> lists(4);
  Rng rng(77);
  for (auto& l : lists) {
    l.resize(2500);
    for (auto& v : l) v = rng.below(1u << 30);
    std::sort(l.begin(), l.end());
  }
  ExecOptions clean = rec_opts();
  ExecOptions mut = rec_opts();
  mut.tr_outer_input_order = true;

  SortOutcome sc = run_merge(lists, 4, {}, clean);
  SortOutcome sm = run_merge(lists, 4, {}, mut);
  CHECK(sc.output == sm.output);  // the mutation reorders writes, not values

  // The mutation changes the leaf decomposition, so each recording gets its
  // own schedule from the same seed.
  Schedule shc = simulate_schedule(sc.ex.dag(), 4, 13);
  Schedule shm = simulate_schedule(sm.ex.dag(), 4, 13);
  REQUIRE(!shc.steals.empty());
  REQUIRE(!shm.steals.empty());
  FsOutcome oc = account_false_sharing(sc.ex.dag(), sc.ex.mem(), sc.ex.options().cache,
                                       shc.plan(), usurp_counts(shc));
  FsOutcome om = account_false_sharing(sm.ex.dag(), sm.ex.mem(), sm.ex.options().cache,
                                       shm.plan(), usurp_counts(shm));
  CAPTURE(oc.fs.f_heap);
  CAPTURE(om.fs.f_heap);
  CAPTURE(oc.fs.sharing_blocks_max);
  CAPTURE(om.fs.sharing_blocks_max);
  CHECK(om.fs.f_heap > oc.fs.f_heap);
  CHECK(om.fs.sharing_blocks_max > oc.fs.sharing_blocks_max);
}

TEST_CASE("redistribution forks write disjoint slices until the fault is injected") {
  const std::vector<u64> input = random_vec(4000, 13);
  ExecOptions mut = rec_opts();
  mut.tr_outer_input_order = true;
  const SortOutcome sc = run_sort(input, {}, rec_opts());
  const SortOutcome sm = run_sort(input, {}, mut);
  CHECK(sc.output == sm.output);

  const SliceAudit ac = audit_disjoint_slices(sc.ex.dag(), 64);
  const SliceAudit am = audit_disjoint_slices(sm.ex.dag(), 64);
  REQUIRE(ac.forks_checked > 0);
  CHECK(ac.overlap_max <= 2);  // one straddled boundary block per fork at most
  CHECK(ac.violations == 0);
  CHECK(am.violations > 0);
  CHECK(am.overlap_max > 2);

  // The audit is purely structural, so it bites at any block width.
  CHECK(audit_disjoint_slices(sc.ex.dag(), 32).violations == 0);
  CHECK(audit_disjoint_slices(sm.ex.dag(), 32).violations > 0);
}
