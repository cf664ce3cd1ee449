#pragma once
// Randomized work-stealing over a recorded computation, in two passes.
//
// Pass 1 (simulate_schedule) is a discrete-event simulation at nominal cost:
// executing a node takes its weight in ticks and a steal attempt takes s
// ticks, win or lose. It fixes who executed what and when: the steal set, the
// usurpations, the kernel decomposition, and per-processor time ledgers.
//
// Pass 2 (timed_replay) re-times the frozen structure with cache stalls: each
// node additionally pays b ticks per block miss (as measured by a scheduled
// cache replay of the same plan), and kernels wait for their structural
// dependencies. No decisions are re-made; only times move.

#include <vector>

#include "spms/cache.hpp"
#include "spms/common.hpp"
#include "spms/dag.hpp"

namespace spms {

struct CostModel {
  u64 b = 8;   // ticks per block transfer (cache miss service)
  u64 s = 32;  // ticks per steal attempt
};

struct UsurpRec {
  u32 join = kNoNode;  // join through which the takeover happened
  u32 proc = 0;        // the continuing (usurping) processor
  u64 time = 0;        // nominal tick of the takeover
  u32 task = 0;        // task whose continuation was taken over
};

struct Schedule {
  u32 p = 1;
  u64 seed = 0;
  CostModel cost;

  std::vector<StealRec> steals;      // in resolve order; task i+1 = steal i
  std::vector<UsurpRec> usurpations;
  std::vector<u8> node_proc;         // executor per node
  std::vector<u32> task_of;          // innermost stolen subtask per node
  std::vector<Kernel> kernels;       // the 2S+1 decomposition, validated
  std::vector<u32> kernel_proc;
  std::vector<u64> kernel_start;     // nominal start tick per kernel

  u64 makespan = 0;
  std::vector<u64> work_ticks;    // per processor
  std::vector<u64> steal_ticks;   // successful attempts, charged to the thief
  std::vector<u64> wasted_ticks;  // failed and truncated attempts
  u64 failed_attempts = 0;

  u32 task_count() const { return static_cast<u32>(steals.size()) + 1; }
  u64 total_steal_ticks() const;
  u64 total_wasted_ticks() const;
  // Usurpations of one task (the u of the stack transfer bound).
  u64 usurpations_of(u32 task) const;
  // Adapter feeding the scheduled cache replay.
  SchedPlan plan() const;
};

// Run the nominal pass over a recorded computation. Deterministic in
// (d, p, seed, cost); victims are drawn per processor from mix_seed(seed,
// proc). Simultaneous events resolve executions first (the owner wins a tie
// against a thief), then by processor id.
Schedule simulate_schedule(const Dag& d, u32 p, u64 seed, const CostModel& cost = {});

// ----- timed replay --------------------------------------------------------

struct ProcLedger {
  u64 work = 0;   // node weights
  u64 miss = 0;   // b per cold/capacity miss
  u64 fs = 0;     // b per invalidation miss
  u64 steal = 0;  // s per successful attempt
  u64 gap = 0;    // waiting on dependencies / searching for work
  u64 total() const { return work + miss + fs + steal + gap; }
};

struct Timed {
  u64 makespan = 0;
  std::vector<ProcLedger> per_proc;
  // Conservation check value: sum of all ledgers always equals p * makespan.
  u64 ledger_total() const;
};

Timed timed_replay(const Dag& d, const Schedule& sch, const std::vector<u16>& node_miss,
                   const std::vector<u16>& node_inval);

}  // namespace spms
