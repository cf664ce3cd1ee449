// Work-stealing simulator: the nominal discrete-event pass (steal set,
// usurpations, kernels, per-processor time ledgers) and the cache-aware
// timed replay layered on top of it.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "spms/cache.hpp"
#include "spms/engine.hpp"
#include "spms/scheduler.hpp"
#include "spms/sort.hpp"

using namespace spms;

namespace {

std::vector<u64> random_vec(u64 n, u64 seed) {
  Rng rng(seed);
  std::vector<u64> v(n);
  for (auto& x : v) x = rng.below(1u << 20);
  return v;
}

// A recorded sort to schedule against.
SortOutcome recorded_sort(u64 n, u64 seed) {
  ExecOptions o;
  o.record = true;
  return run_sort(random_vec(n, seed), {}, o);
}

void check_invariants(const Dag& d, const Schedule& sch) {
  const u64 S = sch.steals.size();
  CHECK(sch.kernels.size() == 2 * S + 1);
  CHECK(sch.usurpations.size() <= S);
  CHECK(sch.makespan <= dag_work(d));
  CHECK(sch.makespan >= dag_span(d));
  CHECK(sch.makespan >= (dag_work(d) + sch.p - 1) / sch.p);
  u64 work = 0;
  for (u32 q = 0; q < sch.p; ++q) {
    CHECK(sch.work_ticks[q] + sch.steal_ticks[q] + sch.wasted_ticks[q] == sch.makespan);
    work += sch.work_ticks[q];
  }
  CHECK(work == dag_work(d));
  CHECK(sch.total_steal_ticks() == S * sch.cost.s);

  std::set<u32> joins;
  for (u32 i = 0; i < S; ++i) {
    const StealRec& st = sch.steals[i];
    CHECK(st.thief != st.victim);
    CHECK(st.entry == d.nodes[st.fork].aux);
    CHECK(st.join == d.nodes[st.fork].pair);
    CHECK(st.time >= sch.cost.s);
    CHECK(st.time <= sch.makespan);
    // The stolen interval is the innermost one at its own entry, and its
    // join belongs to the parent task, same as the fork.
    CHECK(sch.task_of[st.entry] == i + 1);
    CHECK(sch.task_of[st.join] == sch.task_of[st.fork]);
    CHECK(sch.node_proc[st.entry] == st.thief);
    joins.insert(st.join);
  }
  for (const UsurpRec& u : sch.usurpations) {
    CHECK(joins.count(u.join) == 1);
    CHECK(sch.node_proc[u.join] == u.proc);
    CHECK(u.time <= sch.makespan);
    CHECK(u.task == sch.task_of[u.join]);
  }
  // Each task's fork spine must thread through exactly its own steals.
  for (u32 task = 0; task < sch.task_count(); ++task) {
    std::vector<StealRec> own;
    for (const StealRec& st : sch.steals)
      if (sch.task_of[st.fork] == task) own.push_back(st);
    const u32 entry = task == 0 ? 0 : sch.steals[task - 1].entry;
    const u32 end_join = task == 0 ? kNoNode : sch.steals[task - 1].join;
    CHECK_NOTHROW(steal_path(d, own, entry, end_join));
  }
}

}  // namespace

TEST_CASE("one processor executes everything serially") {
  SortOutcome so = recorded_sort(1500, 7);
  const Dag& d = so.ex.dag();
  Schedule sch = simulate_schedule(d, 1, 42);
  CHECK(sch.steals.empty());
  CHECK(sch.usurpations.empty());
  CHECK(sch.kernels.size() == 1);
  CHECK(sch.kernels[0].begin == 0);
  CHECK(sch.kernels[0].end == d.size());
  CHECK(sch.makespan == dag_work(d));
  CHECK(sch.total_steal_ticks() == 0);
  CHECK(sch.total_wasted_ticks() == 0);
  CHECK(*std::max_element(sch.node_proc.begin(), sch.node_proc.end()) == 0);
  CHECK(*std::max_element(sch.task_of.begin(), sch.task_of.end()) == 0);
}

TEST_CASE("identical seeds reproduce the schedule exactly") {
  SortOutcome so = recorded_sort(2000, 11);
  const Dag& d = so.ex.dag();
  Schedule a = simulate_schedule(d, 4, 99);
  Schedule b = simulate_schedule(d, 4, 99);
  REQUIRE(a.steals.size() == b.steals.size());
  for (u32 i = 0; i < a.steals.size(); ++i) {
    CHECK(a.steals[i].fork == b.steals[i].fork);
    CHECK(a.steals[i].thief == b.steals[i].thief);
    CHECK(a.steals[i].victim == b.steals[i].victim);
    CHECK(a.steals[i].time == b.steals[i].time);
  }
  CHECK(a.makespan == b.makespan);
  CHECK(a.failed_attempts == b.failed_attempts);
  CHECK(a.kernel_start == b.kernel_start);
  CHECK(a.node_proc == b.node_proc);
}

TEST_CASE("steals happen and the ledgers balance across processor counts") {
  SortOutcome so = recorded_sort(3000, 3);
  const Dag& d = so.ex.dag();
  for (u32 p : {2u, 4u, 8u}) {
    CAPTURE(p);
    Schedule sch = simulate_schedule(d, p, 5);
    check_invariants(d, sch);
    CHECK(!sch.steals.empty());
    // With thieves around, the span-bound makespan beats the serial one.
    CHECK(sch.makespan < dag_work(d));
  }
}

TEST_CASE("different seeds explore different schedules") {
  SortOutcome so = recorded_sort(2000, 21);
  const Dag& d = so.ex.dag();
  std::set<std::pair<u64, u64>> shapes;
  for (u64 seed = 1; seed <= 8; ++seed) {
    Schedule sch = simulate_schedule(d, 4, seed);
    check_invariants(d, sch);
    shapes.insert({sch.steals.size(), sch.makespan});
  }
  CHECK(shapes.size() >= 2);
}

TEST_CASE("a forkless computation leaves thieves empty-handed") {
  Execution ex(ExecOptions{.record = true});
  ArrRef a = ex.alloc(64);
  ex.leaf([&](LeafCtx& c) {
    for (u64 i = 0; i < 64; ++i) c.wr(a, i, i * i);
  });
  ex.finish();
  Schedule sch = simulate_schedule(ex.dag(), 4, 17);
  CHECK(sch.steals.empty());
  CHECK(sch.kernels.size() == 1);
  CHECK(sch.makespan == dag_work(ex.dag()));
  for (u32 q = 1; q < 4; ++q) CHECK(sch.wasted_ticks[q] == sch.makespan);
  // Only attempts that resolved empty-handed count; ones cut off by the end
  // of the computation are wasted ticks without being failures.
  CHECK(sch.failed_attempts == 3 * ((sch.makespan - 1) / sch.cost.s));
}

TEST_CASE("timed replay on one processor is work plus miss stalls") {
  SortOutcome so = recorded_sort(1200, 13);
  const Dag& d = so.ex.dag();
  Schedule sch = simulate_schedule(d, 1, 1);
  SchedReplay rep = replay_scheduled(d, so.ex.mem(), so.ex.options().cache, sch.plan());
  Timed t = timed_replay(d, sch, rep.node_miss, rep.node_inval);
  CHECK(t.makespan == dag_work(d) + sch.cost.b * rep.q_par);
  CHECK(t.per_proc[0].work == dag_work(d));
  CHECK(t.per_proc[0].miss == sch.cost.b * rep.q_par);
  CHECK(t.per_proc[0].fs == 0);
  CHECK(t.per_proc[0].steal == 0);
  CHECK(t.per_proc[0].gap == 0);
}

TEST_CASE("timed replay balances its ledgers under stealing") {
  SortOutcome so = recorded_sort(2500, 29);
  const Dag& d = so.ex.dag();
  for (u32 p : {2u, 4u}) {
    CAPTURE(p);
    Schedule sch = simulate_schedule(d, p, 31);
    SchedReplay rep = replay_scheduled(d, so.ex.mem(), so.ex.options().cache, sch.plan());
    Timed t = timed_replay(d, sch, rep.node_miss, rep.node_inval);
    CHECK(t.ledger_total() == t.makespan * p);
    CHECK(t.makespan >= dag_span(d));
    u64 work = 0, steal = 0, fs = 0;
    for (const ProcLedger& l : t.per_proc) {
      work += l.work;
      steal += l.steal;
      fs += l.fs;
    }
    CHECK(work == dag_work(d));
    CHECK(steal == sch.steals.size() * sch.cost.s);
    CHECK(fs == sch.cost.b * rep.inval_misses);
  }
}

TEST_CASE("scheduled plans keep every kernel on a single processor") {
  SortOutcome so = recorded_sort(1800, 41);
  const Dag& d = so.ex.dag();
  Schedule sch = simulate_schedule(d, 4, 77);
  REQUIRE(!sch.steals.empty());
  SchedPlan pl = sch.plan();
  REQUIRE(pl.kernels.size() == sch.kernels.size());
  for (u32 k = 0; k < pl.kernels.size(); ++k) {
    const PlanKernel& pk = pl.kernels[k];
    for (u32 v = pk.begin; v < pk.end; ++v) CHECK(sch.node_proc[v] == pk.proc);
    if (k > 0) CHECK(pk.begin == pl.kernels[k - 1].end);
  }
  CHECK(pl.kernels.front().begin == 0);
  CHECK(pl.kernels.back().end == d.size());
  CHECK(pl.task_count == sch.steals.size() + 1);
}
