#include "spms/fs.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace spms {

namespace {

struct BlockWindow {
  u32 task = 0;
  u64 first = 0;
  u64 last = 0;
};

using WindowMap = std::unordered_map<u64, std::vector<BlockWindow>>;

// Dry pass: execution windows per stolen task, the heap blocks each task
// touches and writes, and per-stack-block ownership statistics.
struct Collect final : public ReplaySink {
  const SimMemory* mem = nullptr;
  u64 b = 1;
  std::vector<u64> first_order, last_order;
  std::vector<u8> seen;
  std::vector<std::unordered_set<u64>> touched, written;  // parallel heap blocks

  struct StackBlk {
    u32 region_task = 0;
    u32 last_proc = 0;
    bool used = false;
    u64 transitions = 0;
    u64 x_words = 0;
  };
  std::unordered_map<u64, StackBlk> stack;

  std::unordered_map<u64, u32> scratch_last;   // (alloc, block) -> last proc
  std::unordered_map<u32, u64> scratch_trans;  // alloc -> ownership changes

  void init(u32 tasks) {
    first_order.assign(tasks, 0);
    last_order.assign(tasks, 0);
    seen.assign(tasks, 0);
    touched.resize(tasks);
    written.resize(tasks);
  }

  void heap_run(u64, u32, u32 task, u32 proc, bool write, u64 par_addr, u64, u32 alloc,
                u64 alloc_off, u32, MissClass) override {
    if (task != 0) {
      const u64 blk = par_addr / b;
      touched[task].insert(blk);
      if (write) written[task].insert(blk);
    }
    if (mem->info(alloc).cls == AllocClass::Scratch) {
      const u64 key = (u64{alloc} << 32) | (alloc_off / b);
      auto [it, fresh] = scratch_last.try_emplace(key, proc);
      if (!fresh && it->second != proc) {
        it->second = proc;
        ++scratch_trans[alloc];
      }
    }
  }

  void stack_run(u64, u32, u32 task, u32 proc, bool, u64 par_addr, u64 len,
                 u32 region_task, MissClass) override {
    StackBlk& sb = stack[par_addr / b];
    if (!sb.used) {
      sb.used = true;
      sb.region_task = region_task;
      sb.last_proc = proc;
    } else {
      SPMS_CHECK(sb.region_task == region_task, "stack block spans two task regions");
      if (sb.last_proc != proc) {
        sb.last_proc = proc;
        ++sb.transitions;
      }
    }
    if (task != region_task) sb.x_words += len;
  }

  void node_done(u64 order, u32, u32 task, u32) override {
    if (task == 0) return;
    if (!seen[task]) {
      seen[task] = 1;
      first_order[task] = order;
    }
    last_order[task] = order;
  }
};

// Cached pass: charge foreign word-writes against the collected windows,
// total per-(allocation, block) write delays, and classify scratch misses.
struct Charge final : public ReplaySink {
  const SimMemory* mem = nullptr;
  u64 b = 1;
  const std::vector<u8>* flags = nullptr;  // bit 1 = touched, bit 2 = written
  const WindowMap* touched = nullptr;
  const WindowMap* written = nullptr;
  std::vector<u64> delay_base;  // flat (allocation, block) counter layout
  std::vector<u32> delay;
  std::vector<std::unordered_set<u64>> shared;  // per task, non-scratch blocks
  std::unordered_map<u32, u64> scratch_fs;      // invalidation misses per alloc
  u64 f_heap = 0, f_heap_scratch = 0;

  void heap_run(u64 order, u32, u32 task, u32, bool write, u64 par_addr, u64 len, u32 alloc,
                u64 alloc_off, u32, MissClass miss) override {
    const bool scratch = mem->info(alloc).cls == AllocClass::Scratch;
    if (scratch && miss == MissClass::Invalidation) ++scratch_fs[alloc];
    if (write) delay[delay_base[alloc] + alloc_off / b] += static_cast<u32>(len);
    const u64 blk = par_addr / b;
    if (blk >= flags->size() || !(*flags)[blk]) return;
    if (write && ((*flags)[blk] & 1)) {
      for (const BlockWindow& w : touched->at(blk)) {
        if (w.task == task || order < w.first || order > w.last) continue;
        f_heap += len;
        if (scratch)
          f_heap_scratch += len;
        else
          shared[w.task].insert(blk);
      }
    }
    if ((*flags)[blk] & 2) {
      for (const BlockWindow& w : written->at(blk)) {
        if (w.task == task || order < w.first || order > w.last) continue;
        if (!scratch) shared[w.task].insert(blk);
      }
    }
  }
};

}  // namespace

FsOutcome account_false_sharing(const Dag& d, const SimMemory& mem, const CacheConfig& cfg,
                                const SchedPlan& plan,
                                const std::vector<u64>& task_usurpations) {
  SPMS_CHECK(task_usurpations.size() == plan.task_count,
             "usurpation counts do not match the plan");
  const u32 tasks = plan.task_count;

  Collect col;
  col.mem = &mem;
  col.b = cfg.b_words;
  col.init(tasks);
  const WalkStats wa = walk_scheduled(d, mem, cfg, plan, &col);

  FsOutcome out;
  FsReport& fs = out.fs;
  for (const auto& [blk, sb] : col.stack) {
    fs.f_stack += sb.transitions;
    fs.stack_delay_max = std::max(fs.stack_delay_max, sb.transitions);
    fs.stack_x_words += sb.x_words;
    ++fs.stack_audit_checked;
    if (sb.transitions > 2 * sb.x_words + task_usurpations[sb.region_task])
      ++fs.stack_audit_violations;
  }

  // Invert the per-task interest sets into per-block window lists.
  WindowMap touched_map, written_map;
  u64 max_blk = 0;
  for (u32 t = 1; t < tasks; ++t) {
    SPMS_CHECK(col.seen[t], "stolen task never executed");
    for (u64 blk : col.touched[t]) {
      touched_map[blk].push_back({t, col.first_order[t], col.last_order[t]});
      max_blk = std::max(max_blk, blk);
    }
    for (u64 blk : col.written[t]) {
      written_map[blk].push_back({t, col.first_order[t], col.last_order[t]});
      max_blk = std::max(max_blk, blk);
    }
  }
  std::vector<u8> flags(touched_map.empty() && written_map.empty() ? 0 : max_blk + 1, 0);
  for (const auto& [blk, v] : touched_map) flags[blk] |= 1;
  for (const auto& [blk, v] : written_map) flags[blk] |= 2;

  Charge ch;
  ch.mem = &mem;
  ch.b = cfg.b_words;
  ch.flags = &flags;
  ch.touched = &touched_map;
  ch.written = &written_map;
  ch.delay_base.resize(mem.alloc_count() + 1, 0);
  for (u64 a = 0; a < mem.alloc_count(); ++a)
    ch.delay_base[a + 1] = ch.delay_base[a] + mem.info(static_cast<u32>(a)).blocks;
  ch.delay.assign(ch.delay_base.back(), 0);
  ch.shared.resize(tasks);
  out.replay = replay_scheduled(d, mem, cfg, plan, &ch);

  // Both passes replay the same interleaving; their structural stats agree.
  const WalkStats& wb = out.replay.walk;
  SPMS_CHECK(wa.replayed_nodes == wb.replayed_nodes && wa.par_stack_words == wb.par_stack_words &&
                 wa.par_heap_words == wb.par_heap_words &&
                 wa.misalign_checked == wb.misalign_checked && wa.misalign_max == wb.misalign_max &&
                 wa.misalign_violations == wb.misalign_violations,
             "collect and charge passes diverged");

  fs.f_heap = ch.f_heap;
  fs.f_heap_scratch = ch.f_heap_scratch;
  for (u32 c : ch.delay) fs.heap_delay_max = std::max<u64>(fs.heap_delay_max, c);
  for (u32 t = 1; t < tasks; ++t) {
    fs.sharing_blocks_total += ch.shared[t].size();
    fs.sharing_blocks_max = std::max<u64>(fs.sharing_blocks_max, ch.shared[t].size());
  }
  std::unordered_map<u32, u64> pw = ch.scratch_fs;
  for (const auto& [alloc, n] : col.scratch_trans) pw[alloc] += n;
  for (const auto& [alloc, n] : pw) fs.pw_audit_max = std::max(fs.pw_audit_max, n);
  return out;
}

SliceAudit audit_disjoint_slices(const Dag& d, u64 b_words) {
  SPMS_CHECK(b_words >= 1, "block size must be positive");
  SliceAudit a;

  // Distinct heap blocks written anywhere in the node range [lo, hi).
  const auto write_blocks = [&](u32 lo, u32 hi, std::unordered_set<u64>& into) {
    for (u32 v = lo; v < hi; ++v) {
      for (u32 e = d.nodes[v].ev; e < d.ev_end(v); ++e) {
        const EvRun r = d.events[e];
        if (!r.is_write() || r.role() != EvRole::Heap || r.len() == 0) continue;
        const u64 last = (r.base() + r.len() - 1) / b_words;
        for (u64 blk = r.base() / b_words; blk <= last; ++blk) into.insert(blk);
      }
    }
  };

  for (u32 v = 0; v < d.size(); ++v) {
    const Node& nd = d.nodes[v];
    if (nd.kind != NodeKind::Fork || nd.tag != ProcTag::Redistribute) continue;
    ++a.forks_checked;
    std::unordered_set<u64> left;
    write_blocks(v + 1, nd.aux, left);
    std::unordered_set<u64> shared;
    for (u32 w = nd.aux; w < nd.pair; ++w) {
      for (u32 e = d.nodes[w].ev; e < d.ev_end(w); ++e) {
        const EvRun r = d.events[e];
        if (!r.is_write() || r.role() != EvRole::Heap || r.len() == 0) continue;
        const u64 last = (r.base() + r.len() - 1) / b_words;
        for (u64 blk = r.base() / b_words; blk <= last; ++blk)
          if (left.count(blk) != 0) shared.insert(blk);
      }
    }
    a.overlap_max = std::max<u64>(a.overlap_max, shared.size());
    if (shared.size() > 2) ++a.violations;
  }
  return a;
}

}  // namespace spms
