#include "spms/engine.hpp"

#include <algorithm>

namespace spms {

Execution::Execution(ExecOptions opt) : opt_(opt) {
  mem_ = std::make_unique<SimMemory>(opt_.cache);
  if (opt_.stream_cache) {
    lru_ = std::make_unique<LruCache>(opt_.cache.blocks());
  }
  track_runs_ = opt_.record || lru_ != nullptr;
}

Execution::~Execution() = default;

// ----- memory management -------------------------------------------------

ArrRef Execution::do_alloc(u64 words, AllocClass cls, u64 q, u64 core_len) {
  SPMS_CHECK(!open_, "allocation inside a node");
  const u64 blocks = std::max<u64>(1, ceil_div(words, opt_.cache.b_words));
  const u64 blk = free_pool_.take(blocks);
  const u64 reuse = blk == kNoAddr ? kNoAddr : blk * opt_.cache.b_words;
  const u32 id = mem_->acquire(words, cls, q, core_len, reuse, next_node_);
  const Allocation& a = mem_->info(id);
  if (cls == AllocClass::Buffered) return ArrRef{id, a.base + q, core_len};
  return ArrRef{id, a.base, words};
}

ArrRef Execution::alloc(u64 len, AllocClass cls) { return do_alloc(len, cls, 0, 0); }

ArrRef Execution::alloc_buffered(u64 core_len, u64 q) {
  return do_alloc(core_len + 2 * q, AllocClass::Buffered, q, core_len);
}

void Execution::read_phase(const ArrRef& a) { mem_->set_read_phase(a.id); }

ArrRef Execution::underlying(const ArrRef& a) const {
  const Allocation& al = mem_->info(a.id);
  return ArrRef{a.id, al.base, al.words};
}

void Execution::free(const ArrRef& a) {
  SPMS_CHECK(!open_, "free inside a node");
  const Allocation& al = mem_->info(a.id);
  const u64 base = al.base;
  const u64 blocks = al.blocks;
  mem_->release(a.id, next_node_);
  free_pool_.put(base / opt_.cache.b_words, blocks);
}

Word Execution::peek(const ArrRef& a, u64 i) const {
  SPMS_CHECK(i < a.len, "peek out of range");
  return mem_->peek(a.base + i);
}

void Execution::poke(const ArrRef& a, u64 i, Word v) {
  SPMS_CHECK(i < a.len, "poke out of range");
  mem_->poke(a.base + i, v);
}

// ----- node lifecycle ----------------------------------------------------

u32 Execution::begin_node(NodeKind kind, u8 seg_words) {
  SPMS_CHECK(!open_ && !finished_, "node nesting corrupt");
  open_ = true;
  cur_kind_ = kind;
  cur_accesses_ = 0;
  cur_charge_ = 0;
  const u32 id = static_cast<u32>(next_node_++);
  cur_node_ = id;

  if (opt_.record) {
    Node n;
    n.kind = kind;
    n.seg_words = seg_words;
    n.tag = tag_;
    n.ev = static_cast<u32>(dag_.events.size());
    dag_.nodes.push_back(n);
  }

  const bool entry = pend_fork_ != kNoNode;
  if (entry) {
    if (!pend_right_) {
      SPMS_CHECK(id == pend_fork_ + 1, "left subtask entry must follow its fork");
    }
    if (opt_.record) {
      dag_.nodes[id].parent_fork = pend_fork_;
      dag_.nodes[id].right_child = pend_right_ ? 1 : 0;
      if (pend_right_) dag_.nodes[pend_fork_].aux = id;
    }
  } else if (prev_node_ != kNoNode && opt_.record) {
    Node& p = dag_.nodes[prev_node_];
    if (p.kind != NodeKind::Fork && p.next == kNoNode) p.next = id;
  }

  if (kind == NodeKind::Fork || kind == NodeKind::Leaf || kind == NodeKind::ScopePush) {
    seg_frames_.push_back({id, kStackBase + stack_top_, seg_words});
    stack_top_ += seg_words;
    metrics_.peak_stack_words = std::max(metrics_.peak_stack_words, stack_top_);
  }

  const bool preamble = entry && pend_preamble_;
  pend_fork_ = kNoNode;
  pend_right_ = false;
  pend_preamble_ = false;
  if (preamble) {
    access(EvRole::ParentSeg, false, 0);
    access(EvRole::ParentSeg, false, 1);
  }
  for (u8 w = 0; w < seg_words; ++w) access(EvRole::OwnSeg, true, w);
  return id;
}

u64 Execution::end_node() {
  SPMS_CHECK(open_, "end_node without begin");
  flush_run();
  const u64 weight = std::max<u64>(1, cur_accesses_ + cur_charge_);
  SPMS_CHECK(weight < (u64{1} << 32), "node weight overflow");
  if (opt_.record) dag_.nodes[cur_node_].weight = static_cast<u32>(weight);
  metrics_.work += weight;
  metrics_.charged += cur_charge_;
  metrics_.work_by_tag[static_cast<int>(tag_)] += weight;

  if (cur_kind_ == NodeKind::Leaf) {
    SPMS_CHECK(!seg_frames_.empty() && seg_frames_.back().node == cur_node_,
               "leaf segment not on top at pop");
    stack_top_ -= seg_frames_.back().words;
    seg_frames_.pop_back();
  } else if (cur_kind_ == NodeKind::Join || cur_kind_ == NodeKind::ScopePop) {
    SPMS_CHECK(!seg_frames_.empty() && seg_frames_.back().node == join_pair_,
               "paired segment not on top at pop");
    stack_top_ -= seg_frames_.back().words;
    seg_frames_.pop_back();
    join_pair_ = kNoNode;
  }

  prev_node_ = cur_node_;
  open_ = false;
  return weight;
}

void Execution::open_frame(u8 vars) {
  const u32 id = begin_node(NodeKind::ScopePush, vars);
  span_acc_ += end_node();
  scope_stack_.push_back(id);
}

void Execution::close_frame() {
  SPMS_CHECK(!scope_stack_.empty(), "scope close without open");
  const u32 sp = scope_stack_.back();
  scope_stack_.pop_back();
  const u32 id = begin_node(NodeKind::ScopePop, 0);
  if (opt_.record) {
    dag_.nodes[sp].pair = id;
    dag_.nodes[id].pair = sp;
  }
  join_pair_ = sp;
  span_acc_ += end_node();
}

// ----- access plumbing ---------------------------------------------------

u64 Execution::resolve(EvRole role, u64 addr_or_off) const {
  switch (role) {
    case EvRole::Heap:
      return addr_or_off;
    case EvRole::OwnSeg:
      SPMS_CHECK(!seg_frames_.empty() && seg_frames_.back().node == cur_node_,
                 "own-segment access without a segment");
      SPMS_CHECK(addr_or_off < seg_frames_.back().words, "own-segment offset out of range");
      return seg_frames_.back().base + addr_or_off;
    case EvRole::ParentSeg:
      SPMS_CHECK(!parents_.empty(), "parent-segment access with no parent fork");
      return parents_.back().seg_base + addr_or_off;
  }
  return 0;
}

void Execution::access(EvRole role, bool is_write, u64 addr_or_off) {
  SPMS_CHECK(open_, "memory access outside a node");
  ++cur_accesses_;
  if (is_write) ++metrics_.writes; else ++metrics_.reads;
  if (!track_runs_) return;

  if (run_valid_ && run_write_ == is_write && run_role_ == role &&
      addr_or_off == run_base_ + run_len_ && run_len_ < ((u64{1} << 13) - 1)) {
    ++run_len_;
    return;
  }
  flush_run();
  run_valid_ = true;
  run_write_ = is_write;
  run_role_ = role;
  run_base_ = addr_or_off;
  run_len_ = 1;
  run_addr_ = resolve(role, addr_or_off);
}

void Execution::flush_run() {
  if (!run_valid_) return;
  if (opt_.record) {
    dag_.events.push_back(EvRun::make(run_write_, run_role_, run_len_, run_base_));
  }
  if (lru_) feed_cache(run_addr_, run_len_);
  run_valid_ = false;
}

void Execution::feed_cache(u64 addr, u64 len) {
  const u64 sh = ilog2(opt_.cache.b_words);
  for (u64 blk = addr >> sh; blk <= (addr + len - 1) >> sh; ++blk) {
    if (lru_->access(blk)) {
      ++metrics_.seq_miss_by_tag[static_cast<int>(tag_)];
    }
  }
}

void Execution::finish() {
  if (finished_) return;
  SPMS_CHECK(!open_, "finish inside a node");
  SPMS_CHECK(seg_frames_.empty() && parents_.empty() && scope_stack_.empty() &&
                 stack_top_ == 0,
             "finish with open structure");
  metrics_.span = span_acc_;
  metrics_.nodes = next_node_;
  if (lru_) metrics_.seq_cache = lru_->counters();
  finished_ = true;
  if (opt_.record) dag_validate(dag_);
}

// ----- LeafCtx -----------------------------------------------------------

Word LeafCtx::rd(const ArrRef& a, u64 i) {
  SPMS_CHECK(i < a.len, "read out of range");
  const Word v = ex_->mem_->read(a.base + i);
  ex_->access(EvRole::Heap, false, a.base + i);
  return v;
}

void LeafCtx::wr(const ArrRef& a, u64 i, Word v) {
  SPMS_CHECK(i < a.len, "write out of range");
  ex_->mem_->write(a.base + i, v);
  ex_->access(EvRole::Heap, true, a.base + i);
}

void LeafCtx::charge(u64 units) {
  SPMS_CHECK(ex_->open_, "charge outside a node");
  ex_->cur_charge_ += units;
}

u64 LeafCtx::rank_in_window(const ArrRef& arr, i64 lo, i64 hi, Word key, bool count_equal,
                            u64 stride) {
  SPMS_CHECK(stride >= 1, "bad slot stride");
  SPMS_CHECK(lo >= -1 && hi >= lo && hi <= static_cast<i64>(arr.len / stride),
             "rank window out of range");
  while (hi - lo > 1) {
    const i64 m = lo + (hi - lo) / 2;
    const Word v = rd(arr, static_cast<u64>(m) * stride);
    const bool counted = count_equal ? (v <= key) : (v < key);
    if (counted) lo = m; else hi = m;
  }
  return static_cast<u64>(hi);
}

}  // namespace spms
