#pragma once
// Recorded fork-join dag: node store, packed memory-access event runs, and the
// structural analyses over them (span, well-formedness, steal paths, kernel
// decomposition under a given steal set).

#include <vector>

#include "spms/common.hpp"

namespace spms {

enum class NodeKind : u8 { Leaf, Fork, Join, ScopePush, ScopePop };

enum class ProcTag : u8 {
  None = 0,
  BaseSort,
  Sampling,
  PrefixSums,
  Redistribute,
  RedistributePrep,
  PermutingWrites,
  MultiMerge,
  Fixup,
  Other,
  kCount
};

inline const char* proc_tag_name(ProcTag t) {
  switch (t) {
    case ProcTag::None: return "untagged";
    case ProcTag::BaseSort: return "base_sort";
    case ProcTag::Sampling: return "sampling";
    case ProcTag::PrefixSums: return "prefix_sums";
    case ProcTag::Redistribute: return "redistribute";
    case ProcTag::RedistributePrep: return "redistribute_prep";
    case ProcTag::PermutingWrites: return "permuting_writes";
    case ProcTag::MultiMerge: return "multi_merge";
    case ProcTag::Fixup: return "fixup";
    default: return "other";
  }
}

// Nodes are appended in depth-first (= sequential execution) order, so every
// edge points forward and node index order is the serial schedule.
struct Node {
  u32 next = kNoNode;    // successor in the serial chain (not used by Fork)
  u32 aux = kNoNode;     // Fork: entry node of the right subtask
  u32 pair = kNoNode;    // Fork<->Join, ScopePush<->ScopePop
  u32 ev = 0;            // first event-run index; end = next node's ev
  u32 weight = 0;        // unit cost: max(1, accesses + explicit charge)
  u32 parent_fork = kNoNode;
  NodeKind kind = NodeKind::Leaf;
  u8 right_child = 0;    // 1 if this node starts the right subtask of parent
  u8 seg_words = 0;      // stack segment pushed at this node
  ProcTag tag = ProcTag::None;
};

// Access-event run: up to 2^13 consecutive same-kind accesses within one role.
//   role Heap: base is an absolute heap word address
//   role OwnSeg/ParentSeg: base is an offset within that stack segment
enum class EvRole : u8 { Heap = 0, OwnSeg = 1, ParentSeg = 2 };

struct EvRun {
  u64 bits = 0;
  static EvRun make(bool is_write, EvRole role, u64 len, u64 base) {
    SPMS_CHECK(len < (u64{1} << 13) && base < (u64{1} << 48), "event run out of range");
    EvRun r;
    r.bits = (u64{is_write} << 63) | (u64(static_cast<u8>(role)) << 61) | (len << 48) | base;
    return r;
  }
  bool is_write() const { return bits >> 63; }
  EvRole role() const { return static_cast<EvRole>((bits >> 61) & 3); }
  u64 len() const { return (bits >> 48) & 0x1fff; }
  u64 base() const { return bits & 0xffffffffffffull; }
};

struct Dag {
  std::vector<Node> nodes;
  std::vector<EvRun> events;

  u32 ev_end(u32 node) const {
    return node + 1 < nodes.size() ? nodes[node + 1].ev
                                   : static_cast<u32>(events.size());
  }
  u64 size() const { return nodes.size(); }
};

// Total work (sum of node weights).
u64 dag_work(const Dag& d);

// Critical-path length by longest-path DP over the recorded edges.
u64 dag_span(const Dag& d);

// Structural well-formedness: forward edges, matched fork/join and scope
// pairs, every node reachable exactly once on the serial chain. Throws
// SimFault on violation.
void dag_validate(const Dag& d);

// A steal: the right subtask entered at `entry` (the fork's aux) was executed
// by a different processor than its fork.
struct StealRec {
  u32 entry = kNoNode;   // first node of the stolen subtask
  u32 fork = kNoNode;
  u32 join = kNoNode;
  u32 thief = 0;
  u32 victim = 0;
  u64 time = 0;          // when the successful attempt resolved
};

// Maximal runs of consecutively-indexed nodes executed without interruption
// by steals; with S steals the dag always splits into exactly 2S+1 of these.
struct Kernel {
  u32 begin = 0;  // node index range [begin, end)
  u32 end = 0;
};

// Partition [0, N) by the steal set. Each steal with stolen entry rc and join
// jn splits its containing kernel [a, b) into [a, rc), [rc, jn), [jn, b); all
// three must be nonempty and the fork must lie in [a, rc), else SimFault.
std::vector<Kernel> partition_kernels(const Dag& d, const std::vector<StealRec>& steals);

// Entry-to-sink path through one task's nodes such that the parent fork of
// every subtask stolen *from that task* lies on it. `steals` must be the
// task's own steals (steals nested inside a stolen subtask belong to that
// subtask's path, not this one). `entry`/`end_join` delimit the task: the
// walk starts at `entry` and stops at the node whose successor is `end_join`
// (kNoNode = the whole computation, ending at the global sink). Also verifies
// that every off-path right child of an on-path fork is one of the steals.
// Throws SimFault if no such path exists (corrupt steal data).
std::vector<u32> steal_path(const Dag& d, const std::vector<StealRec>& steals,
                            u32 entry = 0, u32 end_join = kNoNode);

}  // namespace spms
