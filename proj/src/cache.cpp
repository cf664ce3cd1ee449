#include "spms/cache.hpp"

#include <algorithm>
#include <queue>
#include <tuple>
#include <unordered_map>

#include "spms/memory.hpp"

namespace spms {

namespace {

bool pushes_segment(NodeKind k) {
  return k == NodeKind::Leaf || k == NodeKind::Fork || k == NodeKind::ScopePush;
}

bool pops_pair(NodeKind k) { return k == NodeKind::Join || k == NodeKind::ScopePop; }

}  // namespace

// ----- sequential replay ---------------------------------------------------

SeqReplay replay_sequential(const Dag& d, const CacheConfig& cfg) {
  cfg.validate();
  const u64 b = cfg.b_words;
  const u32 n = static_cast<u32>(d.size());
  SeqReplay out;
  LruCache cache(cfg.blocks());

  // Serial stack layout: segment base per node, reconstructed by the same
  // push/pop discipline the recording used.
  std::vector<u32> seg_off(n, 0);
  u64 top = 0;

  for (u32 v = 0; v < n; ++v) {
    const Node& nd = d.nodes[v];
    if (pushes_segment(nd.kind)) {
      seg_off[v] = static_cast<u32>(top);
      top += nd.seg_words;
      out.peak_stack_words = std::max(out.peak_stack_words, top);
    }
    const u32 ee = d.ev_end(v);
    for (u32 e = nd.ev; e < ee; ++e) {
      const EvRun r = d.events[e];
      u64 addr;
      switch (r.role()) {
        case EvRole::Heap: addr = r.base(); break;
        case EvRole::OwnSeg: addr = kStackBase + seg_off[v] + r.base(); break;
        default: addr = kStackBase + seg_off[nd.parent_fork] + r.base(); break;
      }
      const u64 len = r.len();
      for (u64 blk = addr / b; blk <= (addr + len - 1) / b; ++blk) cache.access(blk);
      out.word_accesses += len;
      ++out.runs;
    }
    if (nd.kind == NodeKind::Leaf) {
      top -= nd.seg_words;
    } else if (pops_pair(nd.kind)) {
      top -= d.nodes[nd.pair].seg_words;
    }
  }
  SPMS_CHECK(top == 0, "stack not empty after replay");
  out.cache = cache.counters();
  return out;
}

// ----- scheduled replay ----------------------------------------------------

namespace {

// Parallel-layout bases for a plan: per-task stack regions sized by each
// task's own peak, per-task heap arenas rebuilt from the allocation event
// stream with serial-reuse pools, and per-serial-block acquire timelines for
// translating heap addresses at any point of the replay.
struct Layout {
  std::vector<u32> seq_seg_off;  // serial segment offset per node
  std::vector<u32> par_seg_off;  // offset within the task's region per node
  std::vector<u64> region_base;  // absolute stack region base per task
  std::vector<u64> arena_base;   // absolute heap arena base per task
  std::vector<u64> alloc_par_base;  // absolute parallel base per allocation
  std::vector<u32> alloc_task;      // owning task per allocation
  // per serial heap block: (acquiring node pos, allocation id), time-sorted
  std::vector<std::vector<std::pair<u32, u32>>> timeline;
  u64 par_stack_words = 0;
  u64 par_heap_words = 0;
  u64 cross_task_frees = 0;
};

Layout build_layout(const Dag& d, const SimMemory& mem, const CacheConfig& cfg,
                    const SchedPlan& plan) {
  const u32 n = static_cast<u32>(d.size());
  const u64 b = cfg.b_words;
  const u32 tc = plan.task_count;
  SPMS_CHECK(plan.task_of.size() == n, "plan does not cover the computation");
  Layout L;
  L.seq_seg_off.assign(n, 0);
  L.par_seg_off.assign(n, 0);

  // Stack walk: serial top plus one top per task. A task's own nodes appear
  // in index order and push/pop LIFO, so one pass over all nodes suffices.
  std::vector<u64> top(tc, 0), peak(tc, 0);
  u64 stop = 0;
  for (u32 v = 0; v < n; ++v) {
    const Node& nd = d.nodes[v];
    const u32 t = plan.task_of[v];
    SPMS_CHECK(t < tc, "task id out of range");
    if (pushes_segment(nd.kind)) {
      L.seq_seg_off[v] = static_cast<u32>(stop);
      L.par_seg_off[v] = static_cast<u32>(top[t]);
      stop += nd.seg_words;
      top[t] += nd.seg_words;
      peak[t] = std::max(peak[t], top[t]);
    } else if (pops_pair(nd.kind)) {
      SPMS_CHECK(plan.task_of[nd.pair] == t, "segment popped from a foreign task");
    }
    if (nd.kind == NodeKind::Leaf) {
      stop -= nd.seg_words;
      top[t] -= nd.seg_words;
    } else if (pops_pair(nd.kind)) {
      stop -= d.nodes[nd.pair].seg_words;
      top[t] -= d.nodes[nd.pair].seg_words;
    }
  }
  SPMS_CHECK(stop == 0, "serial stack not empty");
  for (u32 t = 0; t < tc; ++t) SPMS_CHECK(top[t] == 0, "task stack not empty");

  L.region_base.resize(tc);
  u64 at = kStackBase;
  for (u32 t = 0; t < tc; ++t) {
    L.region_base[t] = at;
    at += ceil_div(peak[t], b) * b;
  }
  L.par_stack_words = at - kStackBase;

  // Heap arenas: replay the allocation stream through per-task pools using
  // the same placement logic as the serial allocator. With a single task the
  // parallel layout therefore reproduces the serial addresses exactly.
  const auto& evs = mem.alloc_events();
  u32 acount = 0;
  for (const auto& ev : evs)
    if (ev.acquire) acount = std::max(acount, ev.alloc + 1);
  L.alloc_par_base.assign(acount, 0);
  L.alloc_task.assign(acount, 0);
  std::vector<u64> rel(acount, 0);
  std::vector<BlockPool> pool(tc);
  std::vector<u64> arena_top(tc, 0);  // block units
  for (const auto& ev : evs) {
    if (ev.acquire) {
      const u32 t = plan.task_of[std::min<u64>(ev.pos, n - 1)];
      u64 r = pool[t].take(ev.blocks);
      if (r == kNoAddr) {
        r = arena_top[t];
        arena_top[t] += ev.blocks;
      }
      rel[ev.alloc] = r;
      L.alloc_task[ev.alloc] = t;
    } else {
      // A release between nodes was executed by the code that just finished
      // node pos-1 (pos is the node the *next* begin would take, which can
      // already belong to a sibling branch).
      const u32 owner = L.alloc_task[ev.alloc];
      const u64 by = ev.pos == 0 ? 0 : std::min<u64>(ev.pos - 1, n - 1);
      if (plan.task_of[by] != owner) ++L.cross_task_frees;
      pool[owner].put(rel[ev.alloc], ev.blocks);
    }
  }
  L.arena_base.resize(tc);
  u64 hat = 0;
  for (u32 t = 0; t < tc; ++t) {
    L.arena_base[t] = hat;
    hat += arena_top[t] * b;
  }
  L.par_heap_words = hat;
  SPMS_CHECK(hat < kStackBase, "parallel heap runs into the stack range");
  for (u32 a = 0; a < acount; ++a)
    L.alloc_par_base[a] = L.arena_base[L.alloc_task[a]] + rel[a] * b;

  // Acquire timelines per serial block.
  L.timeline.resize(ceil_div(mem.heap_top(), b));
  for (const auto& ev : evs) {
    if (!ev.acquire) continue;
    const u64 b0 = ev.base / b;
    for (u64 k = 0; k < ev.blocks; ++k)
      L.timeline[b0 + k].emplace_back(static_cast<u32>(ev.pos), ev.alloc);
  }
  return L;
}

// Stolen-task stack fragmentation audit: for each (stolen task, serial stack
// block) pair, collect the parallel blocks holding those words.
struct MisalignAudit {
  std::unordered_map<u64, std::vector<u64>> sets;

  void note(u32 task, u64 seq_blk_off, u64 par_blk) {
    auto& v = sets[(u64{task} << 24) | seq_blk_off];
    if (std::find(v.begin(), v.end(), par_blk) == v.end()) v.push_back(par_blk);
  }
  void finish(WalkStats& w) const {
    w.misalign_checked = sets.size();
    for (const auto& [k, v] : sets) {
      (void)k;
      w.misalign_max = std::max<u64>(w.misalign_max, v.size());
      if (v.size() > 4) ++w.misalign_violations;
    }
  }
};

// Shared driver: merge the kernels' node streams by nominal time and process
// each node's access runs against the parallel layout. `feed` is called per
// (block-confined) piece: feed(node, task, proc, write, par_addr, len,
// is_heap, alloc, region_or_owner_task) -> MissClass.
template <class Feed>
void drive(const Dag& d, const SimMemory& mem, const CacheConfig& cfg, const SchedPlan& plan,
           const Layout& L, ReplaySink* sink, WalkStats& walk, MisalignAudit* audit,
           Feed&& feed) {
  const u32 n = static_cast<u32>(d.size());
  const u64 b = cfg.b_words;
  SPMS_CHECK(plan.p >= 1, "need at least one processor");

  // Validate the kernel cover.
  {
    std::vector<PlanKernel> ks(plan.kernels);
    std::sort(ks.begin(), ks.end(),
              [](const PlanKernel& a, const PlanKernel& c) { return a.begin < c.begin; });
    u32 at = 0;
    for (const auto& k : ks) {
      SPMS_CHECK(k.begin == at && k.end > k.begin && k.proc < plan.p, "bad kernel cover");
      at = k.end;
    }
    SPMS_CHECK(at == n, "kernels do not cover the computation");
  }

  using Cur = std::tuple<u64, u32, u32>;  // (next node time, proc, kernel index)
  std::priority_queue<Cur, std::vector<Cur>, std::greater<Cur>> pq;
  std::vector<u32> next_node(plan.kernels.size());
  for (u32 k = 0; k < plan.kernels.size(); ++k) {
    next_node[k] = plan.kernels[k].begin;
    pq.emplace(plan.kernels[k].start, plan.kernels[k].proc, k);
  }

  u64 order = 0;
  while (!pq.empty()) {
    auto [t, proc, k] = pq.top();
    pq.pop();
    const u32 v = next_node[k];
    const Node& nd = d.nodes[v];
    const u32 task = plan.task_of[v];

    const u32 ee = d.ev_end(v);
    for (u32 e = nd.ev; e < ee; ++e) {
      const EvRun r = d.events[e];
      const bool wr = r.is_write();
      u64 len = r.len();
      if (r.role() == EvRole::Heap) {
        // Split at serial block boundaries; each piece lies in one
        // allocation and maps to one parallel block.
        u64 addr = r.base();
        while (len) {
          const u64 piece = std::min(len, b - addr % b);
          const auto& tl = L.timeline[addr / b];
          auto it = std::upper_bound(tl.begin(), tl.end(),
                                     std::make_pair(v, u32{0xffffffff}));
          SPMS_CHECK(it != tl.begin(), "heap access before any allocation");
          const u32 alloc = std::prev(it)->second;
          const u64 off = addr - mem.info(alloc).base;
          const u64 par = L.alloc_par_base[alloc] + off;
          const u32 owner = L.alloc_task[alloc];
          const MissClass mc = feed(v, task, proc, wr, par, piece, true, alloc, owner);
          if (sink) sink->heap_run(order, v, task, proc, wr, par, piece, alloc, off, owner, mc);
          addr += piece;
          len -= piece;
        }
      } else {
        const bool own = r.role() == EvRole::OwnSeg;
        const u32 holder = own ? v : nd.parent_fork;
        const u32 rtask = plan.task_of[holder];
        u64 seq = kStackBase + L.seq_seg_off[holder] + r.base();
        u64 par = L.region_base[rtask] + L.par_seg_off[holder] + r.base();
        while (len) {
          // advance to the nearer of the two block boundaries
          const u64 piece = std::min({len, b - seq % b, b - par % b});
          if (audit && task != 0)
            audit->note(task, (seq - kStackBase) / b, par / b);
          const MissClass mc = feed(v, task, proc, wr, par, piece, false, kNoNode, rtask);
          if (sink) sink->stack_run(order, v, task, proc, wr, par, piece, rtask, mc);
          seq += piece;
          par += piece;
          len -= piece;
        }
      }
    }
    if (sink) sink->node_done(order, v, task, proc);
    ++order;
    ++walk.replayed_nodes;
    if (++next_node[k] < plan.kernels[k].end) pq.emplace(t + nd.weight, proc, k);
  }
  SPMS_CHECK(walk.replayed_nodes == n, "replay did not visit every node");
}

}  // namespace

WalkStats walk_scheduled(const Dag& d, const SimMemory& mem, const CacheConfig& cfg,
                         const SchedPlan& plan, ReplaySink* sink) {
  cfg.validate();
  const Layout L = build_layout(d, mem, cfg, plan);
  WalkStats w;
  w.par_stack_words = L.par_stack_words;
  w.par_heap_words = L.par_heap_words;
  w.cross_task_frees = L.cross_task_frees;
  MisalignAudit audit;
  drive(d, mem, cfg, plan, L, sink, w, &audit,
        [](u32, u32, u32, bool, u64, u64, bool, u32, u32) { return MissClass::Hit; });
  audit.finish(w);
  return w;
}

SchedReplay replay_scheduled(const Dag& d, const SimMemory& mem, const CacheConfig& cfg,
                             const SchedPlan& plan, ReplaySink* sink) {
  cfg.validate();
  const Layout L = build_layout(d, mem, cfg, plan);
  const u32 n = static_cast<u32>(d.size());
  SchedReplay out;
  out.walk.par_stack_words = L.par_stack_words;
  out.walk.par_heap_words = L.par_heap_words;
  out.walk.cross_task_frees = L.cross_task_frees;
  out.node_miss.assign(n, 0);
  out.node_inval.assign(n, 0);

  std::vector<LruCache> caches;
  caches.reserve(plan.p);
  for (u32 q = 0; q < plan.p; ++q) caches.emplace_back(cfg.blocks());

  MisalignAudit audit;
  drive(d, mem, cfg, plan, L, sink, out.walk, &audit,
        [&](u32 v, u32, u32 proc, bool wr, u64 par, u64, bool, u32, u32) {
          const u64 blk = par / cfg.b_words;
          const MissClass mc = caches[proc].access_classified(blk);
          if (mc != MissClass::Hit) {
            SPMS_CHECK(out.node_miss[v] != 0xffff, "per-node miss counter overflow");
            ++out.node_miss[v];
            if (mc == MissClass::Invalidation) ++out.node_inval[v];
          }
          if (wr) {
            u64 cnt = 0;
            for (u32 q = 0; q < plan.p; ++q)
              if (q != proc && caches[q].invalidate(blk)) ++cnt;
            out.fanout_sum += cnt;
            out.fanout_max = std::max(out.fanout_max, cnt);
          }
          return mc;
        });
  audit.finish(out.walk);

  out.per_proc.resize(plan.p);
  for (u32 q = 0; q < plan.p; ++q) {
    out.per_proc[q] = caches[q].counters();
    out.q_par += out.per_proc[q].misses();
    out.inval_misses += out.per_proc[q].invalidation;
  }
  return out;
}

}  // namespace spms
