#include "spms/scheduler.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <unordered_map>
#include <utility>

namespace spms {

u64 Schedule::total_steal_ticks() const {
  return std::accumulate(steal_ticks.begin(), steal_ticks.end(), u64{0});
}

u64 Schedule::total_wasted_ticks() const {
  return std::accumulate(wasted_ticks.begin(), wasted_ticks.end(), u64{0});
}

u64 Schedule::usurpations_of(u32 task) const {
  u64 c = 0;
  for (const UsurpRec& u : usurpations) c += u.task == task;
  return c;
}

SchedPlan Schedule::plan() const {
  SchedPlan pl;
  pl.p = p;
  pl.task_count = task_count();
  pl.task_of = task_of;
  pl.kernels.reserve(kernels.size());
  for (size_t k = 0; k < kernels.size(); ++k)
    pl.kernels.push_back({kernels[k].begin, kernels[k].end, kernel_proc[k], kernel_start[k]});
  return pl;
}

namespace {

// Lifecycle of a fork's deque entry (the handle to its right subtask).
enum : u8 { kUnpushed = 0, kInDeque = 1, kConsumed = 2, kStolen = 3 };

struct ProcEvent {
  u64 time = 0;
  u8 kind = 0;  // 0 = node completion, 1 = attempt resolution; 0 wins ties
  u32 node = kNoNode;
  u32 victim = 0;
  u64 attempt_start = 0;
};

}  // namespace

Schedule simulate_schedule(const Dag& d, u32 p, u64 seed, const CostModel& cost) {
  SPMS_CHECK(p >= 1 && p <= 255, "processor count out of range");
  SPMS_CHECK(cost.s >= 1, "steal attempts must take at least one tick");
  const u32 n = static_cast<u32>(d.size());
  SPMS_CHECK(n > 0, "cannot schedule an empty computation");

  Schedule sch;
  sch.p = p;
  sch.seed = seed;
  sch.cost = cost;
  sch.node_proc.assign(n, 0);
  sch.work_ticks.assign(p, 0);
  sch.steal_ticks.assign(p, 0);
  sch.wasted_ticks.assign(p, 0);

  std::vector<u8> fork_state(n, kUnpushed);
  std::vector<u8> join_seen(n, 0);  // a first arriver parked at this join
  std::vector<std::deque<u32>> deques(p);
  std::vector<Rng> rngs;
  rngs.reserve(p);
  for (u32 q = 0; q < p; ++q) rngs.emplace_back(mix_seed(seed, q));
  std::unordered_map<u32, u64> join_continue;  // stolen join -> continuation tick
  std::vector<ProcEvent> ev(p);

  auto begin_node = [&](u32 q, u32 v, u64 t) {
    sch.node_proc[v] = static_cast<u8>(q);
    ev[q] = ProcEvent{t + d.nodes[v].weight, 0, v, 0, 0};
  };
  auto start_attempt = [&](u32 q, u64 t) {
    u64 r = rngs[q].below(p - 1);  // uniform over the other processors
    const u32 victim = static_cast<u32>(r < q ? r : r + 1);
    ev[q] = ProcEvent{t + cost.s, 1, kNoNode, victim, t};
  };

  begin_node(0, 0, 0);
  for (u32 q = 1; q < p; ++q) start_attempt(q, 0);

  u64 makespan = 0;
  u32 sink_proc = 0;
  bool done = false;
  while (!done) {
    u32 q = 0;
    for (u32 r = 1; r < p; ++r) {
      if (ev[r].time < ev[q].time ||
          (ev[r].time == ev[q].time && ev[r].kind < ev[q].kind))
        q = r;
    }
    const u64 t = ev[q].time;

    if (ev[q].kind == 1) {  // attempt resolves against the victim's deque now
      const u32 vic = ev[q].victim;
      if (!deques[vic].empty()) {
        const u32 f = deques[vic].front();
        deques[vic].pop_front();  // thieves take the oldest entry
        fork_state[f] = kStolen;
        sch.steal_ticks[q] += cost.s;
        sch.steals.push_back(
            {d.nodes[f].aux, f, d.nodes[f].pair, q, vic, t});
        begin_node(q, d.nodes[f].aux, t);
      } else {
        sch.wasted_ticks[q] += cost.s;
        ++sch.failed_attempts;
        start_attempt(q, t);
      }
      continue;
    }

    const u32 v = ev[q].node;
    const Node& nd = d.nodes[v];
    sch.work_ticks[q] += nd.weight;
    if (nd.kind == NodeKind::Fork) {
      fork_state[v] = kInDeque;
      deques[q].push_back(v);
      begin_node(q, v + 1, t);  // dive into the left subtask
      continue;
    }
    const u32 w = nd.next;
    if (w == kNoNode) {
      makespan = t;
      sink_proc = q;
      done = true;
      continue;
    }
    if (d.nodes[w].kind != NodeKind::Join) {
      begin_node(q, w, t);
      continue;
    }

    // Arrived at join w of fork f; the right subtask spans [entry, w).
    const u32 f = d.nodes[w].pair;
    const u32 entry = d.nodes[f].aux;
    if (v + 1 != w) {
      // Left side finished. If nobody took the entry, flow into it ourselves.
      const u8 st = fork_state[f];
      if (st == kInDeque) {
        SPMS_CHECK(!deques[q].empty() && deques[q].back() == f,
                   "fork entry not at the top of its owner's deque");
        deques[q].pop_back();
        fork_state[f] = kConsumed;
        begin_node(q, entry, t);
        continue;
      }
      SPMS_CHECK(st == kStolen, "left side finished before its fork ran");
    } else {
      if (fork_state[f] == kConsumed) {
        begin_node(q, w, t);  // serial flow-through: both sides were ours
        continue;
      }
      SPMS_CHECK(fork_state[f] == kStolen, "right side ran without its entry");
    }
    // One side of a stolen fork is done. First arriver parks and goes
    // hunting; the second continues through the join, possibly taking the
    // parent task over from the processor that carried it in.
    if (!join_seen[w]) {
      join_seen[w] = 1;
      SPMS_CHECK(deques[q].empty(), "parked at a join with work still in hand");
      start_attempt(q, t);
      continue;
    }
    join_continue[w] = t;
    if (sch.node_proc[entry - 1] != q)
      sch.usurpations.push_back({w, q, t, 0});  // task id filled in below
    begin_node(q, w, t);
  }
  sch.makespan = makespan;

  // Attempts still in flight stop dead with the computation.
  for (u32 q = 0; q < p; ++q) {
    if (q == sink_proc) continue;
    SPMS_CHECK(ev[q].kind == 1, "processor still mid-node at the end");
    sch.wasted_ticks[q] += makespan - ev[q].attempt_start;
    SPMS_CHECK(deques[q].empty(), "deque not drained at the end");
  }
  SPMS_CHECK(deques[sink_proc].empty(), "deque not drained at the end");
  u64 busy = 0;
  for (u32 q = 0; q < p; ++q) {
    SPMS_CHECK(sch.work_ticks[q] + sch.steal_ticks[q] + sch.wasted_ticks[q] == makespan,
               "processor time does not add up to the makespan");
    busy += sch.work_ticks[q];
  }
  SPMS_CHECK(busy == dag_work(d), "scheduled work does not match the recording");
  SPMS_CHECK(sch.usurpations.size() <= sch.steals.size(),
             "more usurpations than stolen subtasks");

  // Innermost stolen subtask per node: the intervals [entry, join) are
  // laminar in index order, so one stack sweep labels everything.
  sch.task_of.assign(n, 0);
  std::vector<u32> by_entry(sch.steals.size());
  std::iota(by_entry.begin(), by_entry.end(), 0);
  std::sort(by_entry.begin(), by_entry.end(),
            [&](u32 a, u32 b) { return sch.steals[a].entry < sch.steals[b].entry; });
  std::vector<std::pair<u32, u32>> open;  // (join, task id)
  size_t next_open = 0;
  for (u32 v = 0; v < n; ++v) {
    while (!open.empty() && open.back().first == v) open.pop_back();
    if (next_open < by_entry.size() && sch.steals[by_entry[next_open]].entry == v) {
      const u32 idx = by_entry[next_open++];
      open.push_back({sch.steals[idx].join, idx + 1});
    }
    sch.task_of[v] = open.empty() ? 0 : open.back().second;
  }
  SPMS_CHECK(open.empty() && next_open == by_entry.size(), "steal intervals not laminar");
  for (UsurpRec& u : sch.usurpations) u.task = sch.task_of[u.join];

  // Kernel decomposition, its executors, and its nominal start ticks.
  sch.kernels = partition_kernels(d, sch.steals);
  std::unordered_map<u32, u64> entry_time;
  for (const StealRec& st : sch.steals) entry_time.emplace(st.entry, st.time);
  sch.kernel_proc.reserve(sch.kernels.size());
  sch.kernel_start.reserve(sch.kernels.size());
  for (const Kernel& k : sch.kernels) {
    const u32 proc = sch.node_proc[k.begin];
    for (u32 v = k.begin; v < k.end; ++v)
      SPMS_CHECK(sch.node_proc[v] == proc, "kernel split across processors");
    sch.kernel_proc.push_back(proc);
    u64 start = 0;
    if (k.begin != 0) {
      auto it = entry_time.find(k.begin);
      if (it != entry_time.end()) {
        start = it->second;
      } else {
        auto jc = join_continue.find(k.begin);
        SPMS_CHECK(jc != join_continue.end(), "kernel boundary is neither entry nor join");
        start = jc->second;
      }
    }
    sch.kernel_start.push_back(start);
  }
  return sch;
}

// ----- timed replay --------------------------------------------------------

u64 Timed::ledger_total() const {
  u64 t = 0;
  for (const ProcLedger& l : per_proc) t += l.total();
  return t;
}

Timed timed_replay(const Dag& d, const Schedule& sch, const std::vector<u16>& node_miss,
                   const std::vector<u16>& node_inval) {
  const u32 n = static_cast<u32>(d.size());
  SPMS_CHECK(node_miss.size() == n && node_inval.size() == n,
             "miss vectors do not match the recording");
  const u64 b = sch.cost.b;
  const u64 s = sch.cost.s;

  Timed out;
  out.per_proc.assign(sch.p, {});

  // Activities per processor, kept in their nominal chronological order:
  // every kernel plus every successful attempt (which immediately precedes
  // the kernel it paid for on the thief's own timeline).
  struct Activity {
    u64 nominal_start = 0;
    u32 proc = 0;
    u8 is_kernel = 0;
    u32 index = 0;  // kernel index or steal index
  };
  std::vector<Activity> acts;
  acts.reserve(sch.kernels.size() + sch.steals.size());
  for (u32 k = 0; k < sch.kernels.size(); ++k)
    acts.push_back({sch.kernel_start[k], sch.kernel_proc[k], 1, k});
  for (u32 i = 0; i < sch.steals.size(); ++i)
    acts.push_back({sch.steals[i].time - s, sch.steals[i].thief, 0, i});
  std::sort(acts.begin(), acts.end(), [](const Activity& a, const Activity& b) {
    return a.nominal_start != b.nominal_start ? a.nominal_start < b.nominal_start
                                              : a.proc < b.proc;
  });

  std::unordered_map<u32, u32> kernel_by_end;   // kernel end index -> kernel
  std::unordered_map<u32, u32> steal_by_entry;  // stolen entry -> steal index
  std::unordered_map<u32, u32> steal_by_fork;
  for (u32 k = 0; k < sch.kernels.size(); ++k) kernel_by_end.emplace(sch.kernels[k].end, k);
  for (u32 i = 0; i < sch.steals.size(); ++i) {
    steal_by_entry.emplace(sch.steals[i].entry, i);
    steal_by_fork.emplace(sch.steals[i].fork, i);
  }

  std::vector<u64> kernel_end2(sch.kernels.size(), 0);
  std::vector<u64> fork_end2(sch.steals.size(), 0);  // when the entry exists
  std::vector<u64> cursor(sch.p, 0);

  for (const Activity& a : acts) {
    u64 ready = cursor[a.proc];
    u64 duration = 0;
    if (!a.is_kernel) {
      duration = s;
      out.per_proc[a.proc].steal += s;
    } else {
      const Kernel& k = sch.kernels[a.index];
      if (k.begin != 0) {
        auto se = steal_by_entry.find(k.begin);
        if (se != steal_by_entry.end()) {
          // A stolen subtask cannot start before its fork has run.
          ready = std::max(ready, fork_end2[se->second]);
        } else {
          // A join continues once both sides' final kernels are done.
          const u32 fork = d.nodes[k.begin].pair;
          const u32 entry = d.nodes[fork].aux;
          ready = std::max(ready, kernel_end2[kernel_by_end.at(k.begin)]);
          ready = std::max(ready, kernel_end2[kernel_by_end.at(entry)]);
        }
      }
      for (u32 v = k.begin; v < k.end; ++v) {
        duration += d.nodes[v].weight + b * node_miss[v];
        auto sf = steal_by_fork.find(v);
        if (sf != steal_by_fork.end()) fork_end2[sf->second] = ready + duration;
        out.per_proc[a.proc].work += d.nodes[v].weight;
        out.per_proc[a.proc].miss += b * (node_miss[v] - node_inval[v]);
        out.per_proc[a.proc].fs += b * node_inval[v];
      }
      kernel_end2[a.index] = ready + duration;
    }
    out.per_proc[a.proc].gap += ready - cursor[a.proc];
    cursor[a.proc] = ready + duration;
    out.makespan = std::max(out.makespan, cursor[a.proc]);
  }
  for (u32 q = 0; q < sch.p; ++q) out.per_proc[q].gap += out.makespan - cursor[q];
  SPMS_CHECK(out.ledger_total() == out.makespan * sch.p,
             "timed ledgers do not add up to the makespan");
  return out;
}

}  // namespace spms
