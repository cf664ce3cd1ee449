#pragma once
// Single-cache LRU simulator over block ids, with miss classification
// (cold / capacity / invalidation) and write-invalidation support, plus the
// replay drivers that run recorded computations through one or many caches.

#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "spms/common.hpp"
#include "spms/dag.hpp"
#include "spms/memory.hpp"

namespace spms {

struct CacheCounters {
  u64 hits = 0;
  u64 cold = 0;
  u64 capacity = 0;
  u64 invalidation = 0;
  u64 misses() const { return cold + capacity + invalidation; }
  u64 accesses() const { return hits + misses(); }
};

enum class MissClass : u8 { Hit = 0, Cold, Capacity, Invalidation };

class LruCache {
 public:
  explicit LruCache(u64 capacity_blocks) : cap_(capacity_blocks) {
    SPMS_CHECK(cap_ >= 1, "cache must hold at least one block");
    prev_.resize(cap_);
    next_.resize(cap_);
    blk_.resize(cap_);
  }

  // Touch a block; returns true on miss. Classification: a block evicted by
  // invalidation reloads as an invalidation miss, a never-seen block is cold,
  // anything else is a capacity miss.
  bool access(u64 blk) { return access_classified(blk) != MissClass::Hit; }

  MissClass access_classified(u64 blk) {
    auto it = pos_.find(blk);
    if (it != pos_.end()) {
      ++ctr_.hits;
      to_front(it->second);
      return MissClass::Hit;
    }
    MissClass cls;
    if (invalidated_.erase(blk)) {
      ++ctr_.invalidation;
      cls = MissClass::Invalidation;
    } else if (seen_.insert(blk).second) {
      ++ctr_.cold;
      cls = MissClass::Cold;
    } else {
      ++ctr_.capacity;
      cls = MissClass::Capacity;
    }
    insert_front(blk);
    return cls;
  }

  // Drop the block if resident (remote write); returns whether it was held.
  bool invalidate(u64 blk) {
    auto it = pos_.find(blk);
    if (it == pos_.end()) return false;
    unlink_free(it->second);
    pos_.erase(it);
    invalidated_.insert(blk);
    return true;
  }

  bool resident(u64 blk) const { return pos_.count(blk) != 0; }
  const CacheCounters& counters() const { return ctr_; }
  u64 capacity() const { return cap_; }

 private:
  void to_front(u32 s) {
    if (head_ == s) return;
    // unlink
    if (prev_[s] != kNoNode) next_[prev_[s]] = next_[s];
    if (next_[s] != kNoNode) prev_[next_[s]] = prev_[s];
    if (tail_ == s) tail_ = prev_[s];
    // relink at head
    prev_[s] = kNoNode;
    next_[s] = head_;
    if (head_ != kNoNode) prev_[head_] = s;
    head_ = s;
    if (tail_ == kNoNode) tail_ = s;
  }
  void unlink_free(u32 s) {
    if (prev_[s] != kNoNode) next_[prev_[s]] = next_[s];
    if (next_[s] != kNoNode) prev_[next_[s]] = prev_[s];
    if (head_ == s) head_ = next_[s];
    if (tail_ == s) tail_ = prev_[s];
    free_.push_back(s);
  }
  void insert_front(u64 blk) {
    u32 s;
    if (!free_.empty()) {
      s = free_.back();
      free_.pop_back();
    } else if (used_ < cap_) {
      s = static_cast<u32>(used_++);
    } else {
      s = tail_;  // evict LRU
      pos_.erase(blk_[s]);
      if (prev_[s] != kNoNode) next_[prev_[s]] = kNoNode;
      tail_ = prev_[s];
      if (head_ == s) head_ = kNoNode;
    }
    blk_[s] = blk;
    prev_[s] = kNoNode;
    next_[s] = head_;
    if (head_ != kNoNode) prev_[head_] = s;
    head_ = s;
    if (tail_ == kNoNode) tail_ = s;
    pos_.emplace(blk, s);
  }

  u64 cap_;
  u64 used_ = 0;
  u32 head_ = kNoNode, tail_ = kNoNode;
  std::vector<u32> prev_, next_;
  std::vector<u64> blk_;
  std::vector<u32> free_;
  std::unordered_map<u64, u32> pos_;
  std::unordered_set<u64> seen_;
  std::unordered_set<u64> invalidated_;
  CacheCounters ctr_;
};

// ----- sequential replay ---------------------------------------------------

// Walk a recorded computation in node order, rebuild the serial stack layout,
// and feed every access run through one LRU cache. Produces exactly the
// counters a streaming run of the same program yields.
struct SeqReplay {
  CacheCounters cache;
  u64 word_accesses = 0;
  u64 runs = 0;
  u64 peak_stack_words = 0;
};
SeqReplay replay_sequential(const Dag& d, const CacheConfig& cfg);

// ----- scheduled replay ----------------------------------------------------

// One contiguous node range executed without interruption by one processor,
// starting at a known nominal tick.
struct PlanKernel {
  u32 begin = 0, end = 0;  // node index range [begin, end)
  u32 proc = 0;
  u64 start = 0;
};

// Execution plan for a scheduled replay. Task 0 is the root; each stolen
// subtask gets the next id in steal order and owns exactly the nodes of its
// subtree not claimed by a nested steal. Kernels must partition [0, N) and be
// time-disjoint per processor.
struct SchedPlan {
  u32 p = 1;
  u32 task_count = 1;
  std::vector<PlanKernel> kernels;
  std::vector<u32> task_of;  // per node
};

// Per-access observer for scheduled walks; the false-sharing accountant plugs
// in here. `order` is the node's global position in the replayed interleaving
// (nodes are replayed atomically, merged across processors by nominal time).
// Runs are reported piecewise so each call stays within one block; addresses
// are parallel-layout. Miss fields are zero during layout-only walks.
class ReplaySink {
 public:
  virtual ~ReplaySink() = default;
  virtual void heap_run(u64 order, u32 node, u32 task, u32 proc, bool write, u64 par_addr,
                        u64 len, u32 alloc, u64 alloc_off, u32 owner_task, MissClass miss) {
    (void)order, (void)node, (void)task, (void)proc, (void)write, (void)par_addr, (void)len,
        (void)alloc, (void)alloc_off, (void)owner_task, (void)miss;
  }
  virtual void stack_run(u64 order, u32 node, u32 task, u32 proc, bool write, u64 par_addr,
                         u64 len, u32 region_task, MissClass miss) {
    (void)order, (void)node, (void)task, (void)proc, (void)write, (void)par_addr, (void)len,
        (void)region_task, (void)miss;
  }
  virtual void node_done(u64 order, u32 node, u32 task, u32 proc) {
    (void)order, (void)node, (void)task, (void)proc;
  }
};

// Structural results shared by cache-free walks and full replays.
struct WalkStats {
  u64 replayed_nodes = 0;
  u64 par_stack_words = 0;   // total words of per-task stack regions
  u64 par_heap_words = 0;    // total words of per-task heap arenas
  u64 cross_task_frees = 0;  // allocations released by a task other than the owner
  // Stolen-task stack fragmentation: per (stolen task, serial stack block it
  // touches), how many parallel-layout blocks hold those words.
  u64 misalign_checked = 0;
  u64 misalign_max = 0;
  u64 misalign_violations = 0;  // pairs spread over more than 4 blocks
};

struct SchedReplay {
  WalkStats walk;
  std::vector<CacheCounters> per_proc;
  u64 q_par = 0;         // total misses over all processors
  u64 inval_misses = 0;  // invalidation-class subset of q_par
  u64 fanout_sum = 0;    // caches invalidated, summed over write accesses
  u64 fanout_max = 0;    // most caches invalidated by one write access
  std::vector<u16> node_miss;   // per node: blocks missed
  std::vector<u16> node_inval;  // per node: invalidation-class subset
};

// Cache-free walk: layouts, interleaving, sink callbacks, structural audits.
WalkStats walk_scheduled(const Dag& d, const SimMemory& mem, const CacheConfig& cfg,
                         const SchedPlan& plan, ReplaySink* sink);

// Full replay: one LRU cache per processor; writes invalidate other caches.
SchedReplay replay_scheduled(const Dag& d, const SimMemory& mem, const CacheConfig& cfg,
                             const SchedPlan& plan, ReplaySink* sink = nullptr);

}  // namespace spms
