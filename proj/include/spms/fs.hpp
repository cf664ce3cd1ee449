#pragma once
// False-sharing accountant. Charges the cross-task write traffic that can
// collide with a stolen task's working set, audits stack-block ownership
// churn against its structural budget, and gates per-block write delays.
//
// F = f_heap + f_stack:
//   f_heap: for each stolen task, word-writes by *other* tasks into blocks
//     the task itself touches, counted only during the task's execution
//     window in the replayed interleaving. Heap arrays are limited-access,
//     so write counting is sound there.
//   f_stack: execution-stack words are reused by push/pop, so raw write
//     counts mean nothing; what matters is how often a parallel stack block
//     changes accessing processor. Each such transition is one potential
//     block transfer. Audited per block against 2x + u: a foreign access
//     episode (a stolen child reading its parent's segment) flips ownership
//     at most twice, and each usurpation of the owning task at most once.
//
// Invalidation-induced misses from the p-cache simulation are a separate,
// exact quantity (fs_misses in the replay); they are reported alongside and
// never mixed into F.
//
// Implemented as two sink passes over the same scheduled replay: a dry walk
// collecting execution windows and per-task block interest, then the cached
// replay charging foreign writes and classifying misses.

#include <vector>

#include "spms/cache.hpp"
#include "spms/memory.hpp"

namespace spms {

struct FsReport {
  u64 f_heap = 0;          // foreign word-writes into active tasks' blocks
  u64 f_heap_scratch = 0;  //   subset landing in scratch-class allocations
  u64 f_stack = 0;         // processor transitions on parallel stack blocks
  u64 f_total() const { return f_heap + f_stack; }

  u64 stack_x_words = 0;           // foreign word-accesses to stack blocks
  u64 stack_audit_checked = 0;     // parallel stack blocks audited
  u64 stack_audit_violations = 0;  // transitions > 2x + u(owning task)

  u64 heap_delay_max = 0;   // word-writes to one block over one allocation
  u64 stack_delay_max = 0;  // transitions on one parallel stack block

  // Distinct heap blocks per stolen task that were either touched by the
  // task and foreign-written, or written by it and foreign-touched, inside
  // its window; scratch allocations excluded (audited separately below).
  u64 sharing_blocks_max = 0;
  u64 sharing_blocks_total = 0;

  // Worst scratch allocation: its invalidation misses plus its ownership
  // transitions. Write counts would be swamped by the scratch's own
  // single-owner zeroing, so they are deliberately not the measure here.
  u64 pw_audit_max = 0;
};

struct FsOutcome {
  FsReport fs;
  SchedReplay replay;  // the cached pass, reusable downstream
};

// `task_usurpations[t]` = how often task t's continuation changed processor;
// must have the plan's task_count entries (index 0 = the root task).
FsOutcome account_false_sharing(const Dag& d, const SimMemory& mem, const CacheConfig& cfg,
                                const SchedPlan& plan,
                                const std::vector<u64>& task_usurpations);

// Static slice-discipline audit, no schedule needed: inside a redistribution,
// the two sides of every fork must write disjoint output slices, so their
// heap write footprints may share at most the one block a slice boundary
// straddles (2 allowed for slack). Interleaved sides — the failure mode the
// input-order fault injection produces — share a block count on the order of
// their whole footprint and trip this immediately.
struct SliceAudit {
  u64 forks_checked = 0;
  u64 overlap_max = 0;  // worst shared-block count between one fork's sides
  u64 violations = 0;   // forks whose sides share more than 2 blocks
};
SliceAudit audit_disjoint_slices(const Dag& d, u64 b_words);

}  // namespace spms
