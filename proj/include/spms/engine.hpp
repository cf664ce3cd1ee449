#pragma once
// Execution engine: runs algorithm driver code once, sequentially, while
// building the fork-join dag and the per-node memory-access trace over the
// simulated heap and execution stack. Optionally streams every access through
// a sequential LRU cache so large runs need no materialized recording.
//
// Raw builders (leaf / fork2) create bare nodes for unit-level dag tests.
// Textured builders (par_spawn / par_range / frame) add the control traffic a
// real runtime would have: each node pushes a small stack segment, writes it,
// and subtask entry nodes read their parent fork's segment.

#include <initializer_list>
#include <memory>
#include <vector>

#include "spms/cache.hpp"
#include "spms/common.hpp"
#include "spms/dag.hpp"
#include "spms/memory.hpp"

namespace spms {

struct ExecOptions {
  CacheConfig cache{};
  bool record = false;        // keep dag nodes + event runs
  bool stream_cache = false;  // run a sequential LRU over the access stream
  u32 copy_grain = 16;        // leaf bundling for element loops
  // Fault-injection knob: drive the redistribution's outer loop in input
  // order instead of output order (used to prove the sharing audit bites).
  bool tr_outer_input_order = false;
  bool deep_checks = false;   // enable O(n)-ish invariant sweeps in drivers
};

struct Metrics {
  u64 work = 0;
  u64 span = 0;
  u64 nodes = 0;
  u64 reads = 0;
  u64 writes = 0;
  u64 charged = 0;
  u64 peak_stack_words = 0;
  u64 work_by_tag[static_cast<int>(ProcTag::kCount)] = {};
  u64 seq_miss_by_tag[static_cast<int>(ProcTag::kCount)] = {};
  CacheCounters seq_cache;  // filled when stream_cache is on
  u64 accesses() const { return reads + writes; }
};

class Execution;

// Handle passed to leaf bodies; the only way to touch simulated memory from
// inside a node.
class LeafCtx {
 public:
  Word rd(const ArrRef& a, u64 i);
  void wr(const ArrRef& a, u64 i, Word v);
  void charge(u64 units);

  // Rank of `key` among the `stride`-spaced slots of arr (key word first in
  // each slot) via binary search constrained to the window (lo, hi] of slot
  // indices: requires slot lo to compare before key and slot hi not to
  // (virtually; lo == -1 and hi == slot count are sentinels never probed).
  // count_equal selects whether equal keys compare before key. Returns hi'
  // = the rank; probe count is ceil(log2(hi - lo)).
  u64 rank_in_window(const ArrRef& arr, i64 lo, i64 hi, Word key, bool count_equal,
                     u64 stride = 1);

 private:
  friend class Execution;
  explicit LeafCtx(Execution* e) : ex_(e) {}
  Execution* ex_;
};

class Execution {
 public:
  explicit Execution(ExecOptions opt = {});
  Execution(Execution&&) = default;
  ~Execution();

  // ----- memory management (legal between nodes only) -----
  ArrRef alloc(u64 len, AllocClass cls = AllocClass::Plain);
  ArrRef alloc_buffered(u64 core_len, u64 q);
  void read_phase(const ArrRef& a);
  ArrRef underlying(const ArrRef& a) const;  // whole allocation incl. gaps
  void free(const ArrRef& a);

  Word peek(const ArrRef& a, u64 i) const;   // untraced, for drivers/tests
  void poke(const ArrRef& a, u64 i, Word v); // untraced setup

  // ----- raw structure -----
  template <class F>
  void leaf(F&& f) {
    leaf_node(false, static_cast<F&&>(f));
  }
  void leaf_charge(u64 units) {
    leaf([&](LeafCtx& c) { c.charge(units); });
  }
  template <class L, class R>
  void fork2(L&& l, R&& r) {
    fork_node(false, static_cast<L&&>(l), static_cast<R&&>(r));
  }

  // ----- textured structure -----
  // Balanced binary spawn tree over `count` subprograms; f(i) emits the i-th.
  template <class F>
  void par_spawn(u64 count, F&& f) {
    if (count == 0) return;
    spawn_rec(0, count, f);
  }
  // Parallel loop over [lo, hi), `grain` items per leaf; f(ctx, b, e).
  template <class F>
  void par_range(u64 lo, u64 hi, u64 grain, F&& f) {
    if (lo >= hi) return;
    SPMS_CHECK(grain >= 1, "grain must be positive");
    const u64 chunks = ceil_div(hi - lo, grain);
    par_spawn(chunks, [&](u64 i) {
      const u64 b = lo + i * grain;
      const u64 e = b + grain < hi ? b + grain : hi;
      leaf_node(true, [&](LeafCtx& c) { f(c, b, e); });
    });
  }
  // Call frame: a scope node writing `vars` control words to its own stack
  // segment, popped after `body`.
  template <class F>
  void frame(std::initializer_list<Word> vars, F&& body) {
    open_frame(static_cast<u8>(vars.size()));
    body();
    close_frame();
  }

  class TagScope {
   public:
    ~TagScope() { ex_->tag_ = saved_; }

   private:
    friend class Execution;
    TagScope(Execution* e, ProcTag t) : ex_(e), saved_(e->tag_) { e->tag_ = t; }
    Execution* ex_;
    ProcTag saved_;
  };
  TagScope tagged(ProcTag t) { return TagScope(this, t); }

  void finish();

  const Dag& dag() const { return dag_; }
  SimMemory& mem() { return *mem_; }
  const SimMemory& mem() const { return *mem_; }
  const Metrics& metrics() const { return metrics_; }
  const ExecOptions& options() const { return opt_; }
  u64 work() const { return metrics_.work; }
  u64 span_so_far() const { return span_acc_; }
  u64 node_count() const { return next_node_; }

 private:
  friend class LeafCtx;

  struct SegFrame {
    u32 node;
    u64 base;
    u8 words;
  };
  struct ParentRef {
    u32 fork;
    u64 seg_base;
  };

  template <class F>
  void leaf_node(bool textured, F&& f) {
    begin_node(NodeKind::Leaf, textured ? 2 : 0);
    LeafCtx ctx(this);
    f(ctx);
    span_acc_ += end_node();
  }

  template <class L, class R>
  void fork_node(bool textured, L&& l, R&& r) {
    const u32 f = begin_node(NodeKind::Fork, textured ? 2 : 0);
    const u64 wf = end_node();
    parents_.push_back({f, seg_frames_.back().base});
    const u64 saved = span_acc_;

    span_acc_ = 0;
    pend_fork_ = f;
    pend_right_ = false;
    pend_preamble_ = textured;
    const u64 nodes_before_l = next_node_;
    l();
    SPMS_CHECK(next_node_ > nodes_before_l, "empty left branch of fork");
    const u64 sl = span_acc_;
    const u32 left_final = prev_node_;

    span_acc_ = 0;
    pend_fork_ = f;
    pend_right_ = true;
    pend_preamble_ = textured;
    const u64 nodes_before_r = next_node_;
    r();
    SPMS_CHECK(next_node_ > nodes_before_r, "empty right branch of fork");
    const u64 sr = span_acc_;

    const u32 j = begin_node(NodeKind::Join, 0);
    if (opt_.record) {
      dag_.nodes[left_final].next = j;
      dag_.nodes[f].pair = j;
      dag_.nodes[j].pair = f;
    }
    join_pair_ = f;
    const u64 wj = end_node();

    parents_.pop_back();
    span_acc_ = saved + wf + (sl > sr ? sl : sr) + wj;
  }

  template <class F>
  void spawn_rec(u64 lo, u64 hi, F& f) {
    if (hi - lo == 1) {
      const u64 before = next_node_;
      f(lo);
      SPMS_CHECK(next_node_ > before, "spawned subprogram emitted no nodes");
      return;
    }
    const u64 mid = lo + (hi - lo + 1) / 2;
    fork_node(
        true, [&] { spawn_rec(lo, mid, f); }, [&] { spawn_rec(mid, hi, f); });
  }

  void open_frame(u8 vars);
  void close_frame();

  u32 begin_node(NodeKind kind, u8 seg_words);
  u64 end_node();  // returns the node's final weight
  void access(EvRole role, bool is_write, u64 addr_or_off);
  void flush_run();
  void feed_cache(u64 addr, u64 len);
  u64 resolve(EvRole role, u64 addr_or_off) const;
  ArrRef do_alloc(u64 words, AllocClass cls, u64 q, u64 core_len);

  ExecOptions opt_;
  std::unique_ptr<SimMemory> mem_;
  std::unique_ptr<LruCache> lru_;
  Dag dag_;
  Metrics metrics_;

  // node under construction
  bool open_ = false;
  NodeKind cur_kind_ = NodeKind::Leaf;
  u64 cur_accesses_ = 0;
  u64 cur_charge_ = 0;
  u32 cur_node_ = 0;
  u32 join_pair_ = kNoNode;

  // pending-entry info for the next begin_node
  u32 pend_fork_ = kNoNode;
  bool pend_right_ = false;
  bool pend_preamble_ = false;

  // serial chain linking
  u32 prev_node_ = kNoNode;
  u64 next_node_ = 0;

  // run-length buffer for the current node's accesses; maintained only when
  // something downstream (the recorded trace or the streaming cache) will
  // consume the runs
  bool track_runs_ = false;
  bool run_valid_ = false;
  bool run_write_ = false;
  EvRole run_role_ = EvRole::Heap;
  u64 run_base_ = 0;
  u64 run_len_ = 0;
  u64 run_addr_ = 0;  // resolved address of run_base_

  // live sequential stack + scopes
  std::vector<SegFrame> seg_frames_;
  std::vector<ParentRef> parents_;
  std::vector<u32> scope_stack_;
  u64 stack_top_ = 0;

  // Freed heap regions for serial reuse. The sequential layout reuses freed
  // space exactly as a serial execution would; the scheduled replay instead
  // rebuilds per-task arenas with the same pool logic.
  BlockPool free_pool_;

  u64 span_acc_ = 0;
  ProcTag tag_ = ProcTag::None;
  bool finished_ = false;
};

}  // namespace spms
