#include "spms/procedures.hpp"

#include <algorithm>
#include <bit>
#include <vector>

namespace spms {

// Balanced tree scan: an up-sweep stores subtree sums in an auxiliary tree,
// a down-sweep pushes exclusive offsets back to the leaves. Both are
// recursive fork-joins of depth log2(len), so the span is logarithmic; a
// level-by-level loop nest would square it.
u64 prefix_sums(Execution& ex, ArrRef a) {
  auto tg = ex.tagged(ProcTag::PrefixSums);
  const u64 m = a.len;
  SPMS_CHECK(m >= 1, "prefix sums over empty array");
  const u64 pad = std::bit_ceil(m);
  ArrRef t = ex.alloc(2 * pad);

  // Subtree v covers leaf range [lo, hi); right subtrees holding no live
  // leaves are skipped (their tree slots stay zero from allocation).
  auto up = [&](auto&& self, u64 v, u64 lo, u64 hi) -> void {
    if (hi - lo == 1) {
      ex.leaf([&](LeafCtx& c) { c.wr(t, v, c.rd(a, lo)); });
      return;
    }
    const u64 mid = lo + (hi - lo) / 2;
    if (mid >= m) {
      self(self, 2 * v, lo, mid);
      ex.leaf([&](LeafCtx& c) { c.wr(t, v, c.rd(t, 2 * v)); });
    } else {
      ex.fork2([&] { self(self, 2 * v, lo, mid); },
               [&] { self(self, 2 * v + 1, mid, hi); });
      ex.leaf([&](LeafCtx& c) { c.wr(t, v, c.rd(t, 2 * v) + c.rd(t, 2 * v + 1)); });
    }
  };
  up(up, 1, 0, pad);

  const u64 total = ex.peek(t, 1);
  ex.leaf([&](LeafCtx& c) { c.wr(t, 1, 0); });

  auto down = [&](auto&& self, u64 v, u64 lo, u64 hi) -> void {
    if (hi - lo == 1) {
      ex.leaf([&](LeafCtx& c) { c.wr(a, lo, c.rd(t, v)); });
      return;
    }
    const u64 mid = lo + (hi - lo) / 2;
    if (mid >= m) {
      ex.leaf([&](LeafCtx& c) { c.wr(t, 2 * v, c.rd(t, v)); });
      self(self, 2 * v, lo, mid);
    } else {
      ex.leaf([&](LeafCtx& c) {
        const Word left = c.rd(t, 2 * v);
        const Word here = c.rd(t, v);
        c.wr(t, 2 * v, here);
        c.wr(t, 2 * v + 1, here + left);
      });
      ex.fork2([&] { self(self, 2 * v, lo, mid); },
               [&] { self(self, 2 * v + 1, mid, hi); });
    }
  };
  down(down, 1, 0, pad);

  ex.free(t);
  return total;
}

u64 straddle_search(Execution& ex, const ArrRef& list, Word key, i64 lo, i64 hi,
                    bool count_equal, u64 stride) {
  u64 out = 0;
  ex.leaf([&](LeafCtx& c) { out = c.rank_in_window(list, lo, hi, key, count_equal, stride); });
  return out;
}

void transposing_redistribution(Execution& ex, ArrRef y, u64 w, const TrDir& dir,
                                ArrRef out, InstanceLog* log) {
  auto tg = ex.tagged(ProcTag::Redistribute);
  const u64 units = dir.r * dir.k;
  SPMS_CHECK(w >= 1, "bad slot width");
  SPMS_CHECK(units >= 1 && dir.lens.len == units && dir.starts.len == units,
             "bad redistribution directory");
  const u32 first = static_cast<u32>(ex.node_count());
  const u32 grain = ex.options().copy_grain;

  ArrRef offs = ex.alloc(units);
  ex.par_range(0, units, grain, [&](LeafCtx& c, u64 b, u64 e) {
    for (u64 i = b; i < e; ++i) c.wr(offs, i, c.rd(dir.lens, i));
  });
  const u64 total = prefix_sums(ex, offs);
  SPMS_CHECK(total * w <= out.len, "redistribution output too small");

  ex.par_spawn(units, [&](u64 u) {
    u64 t = u;
    if (ex.options().tr_outer_input_order) {
      // Diagnostic layout: walk pieces source-list-major instead, so sibling
      // subtrees interleave their writes across output block boundaries.
      t = (u % dir.k) * dir.r + u / dir.k;
    }
    u64 len = 0, src = 0, dst = 0;
    ex.leaf([&](LeafCtx& c) {
      len = c.rd(dir.lens, t);
      src = c.rd(dir.starts, t);
      dst = c.rd(offs, t);
    });
    if (len == 0) return;  // the descriptor read above keeps the branch nonempty
    ex.par_range(0, len, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 q = b; q < e; ++q)
        for (u64 d = 0; d < w; ++d)
          c.wr(out, (dst + q) * w + d, c.rd(y, (src + q) * w + d));
    });
  });
  ex.free(offs);

  if (log != nullptr)
    log->tr.push_back({{first, static_cast<u32>(ex.node_count())}, w, total, out.base, out.len});
}

PrepOutput tr_prep(Execution& ex, const PrepInput& in, InstanceLog*) {
  auto tg = ex.tagged(ProcTag::RedistributePrep);
  SPMS_CHECK(in.w >= 1 && in.list_off.size() >= 2, "prep needs at least one list");
  const u64 r = in.list_off.size() - 1;
  SPMS_CHECK(in.npv >= 1, "prep needs at least one pivot");
  SPMS_CHECK(in.pivots.len >= 2 * in.npv, "pivot table too small");
  SPMS_CHECK(in.win_lo1.len == in.npv * r && in.win_hi.len == in.npv * r,
             "window table size mismatch");
  const u32 grain = ex.options().copy_grain;

  PrepOutput po;
  po.ranks = ex.alloc(in.npv * r);
  // Pivot-major search sweep: entry j*r + i ranks pivot j in list i. A
  // window with lo == hi is a precomputed rank and costs no probes.
  ex.par_spawn(in.npv * r, [&](u64 u) {
    const u64 j = u / r;
    const u64 i = u % r;
    ex.leaf([&](LeafCtx& c) {
      const i64 lo = static_cast<i64>(c.rd(in.win_lo1, u)) - 1;
      const i64 hi = static_cast<i64>(c.rd(in.win_hi, u));
      u64 rho;
      if (lo == hi) {
        rho = static_cast<u64>(hi);
      } else {
        const Word key = c.rd(in.pivots, 2 * j);
        const u64 je = c.rd(in.pivots, 2 * j + 1);
        const i64 base = static_cast<i64>(in.list_off[i]);
        rho = c.rank_in_window(in.data, base + lo, base + hi, key, i < je, in.w) -
              in.list_off[i];
      }
      c.wr(po.ranks, u, rho);
    });
  });

  // Consecutive rank rows (with virtual all-zero and all-length sentinel
  // rows) give piece lengths; a zip with the list origins gives starts.
  po.dir.r = r;
  po.dir.k = in.npv + 1;
  po.dir.lens = ex.alloc(po.dir.k * r);
  po.dir.starts = ex.alloc(po.dir.k * r);
  ex.par_range(0, po.dir.k * r, grain, [&](LeafCtx& c, u64 b, u64 e) {
    for (u64 u = b; u < e; ++u) {
      const u64 j = u / r;
      const u64 i = u % r;
      const u64 prev = j == 0 ? 0 : c.rd(po.ranks, (j - 1) * r + i);
      const u64 cur = j == in.npv ? in.list_off[i + 1] - in.list_off[i]
                                  : c.rd(po.ranks, j * r + i);
      SPMS_CHECK(cur >= prev, "partition ranks not monotone");
      c.wr(po.dir.lens, u, cur - prev);
    }
  });
  ex.par_range(0, po.dir.k * r, grain, [&](LeafCtx& c, u64 b, u64 e) {
    for (u64 u = b; u < e; ++u) {
      const u64 j = u / r;
      const u64 i = u % r;
      const u64 prev = j == 0 ? 0 : c.rd(po.ranks, (j - 1) * r + i);
      c.wr(po.dir.starts, u, in.list_off[i] + prev);
    }
  });
  return po;
}

void permuting_writes(Execution& ex, ArrRef a, u64 l, ArrRef perm, ArrRef out, u64 lp,
                      u64 wcopy, InstanceLog* log) {
  auto tg = ex.tagged(ProcTag::PermutingWrites);
  const u64 x = perm.len;
  SPMS_CHECK(x >= 1, "empty permutation");
  SPMS_CHECK(l >= 1 && lp >= 1 && wcopy >= 1 && wcopy <= l && wcopy <= lp,
             "bad slot widths");
  SPMS_CHECK(a.len >= x * l && out.len >= x * lp, "scatter buffers too small");
  {
    std::vector<u8> seen(x, 0);
    for (u64 i = 0; i < x; ++i) {
      const u64 p = ex.peek(perm, i);
      SPMS_CHECK(p < x && seen[p] == 0, "scatter targets are not a permutation");
      seen[p] = 1;
    }
  }
  const u64 bw = ex.options().cache.b_words;
  const u32 grain = ex.options().copy_grain;
  const u32 first = static_cast<u32>(ex.node_count());
  PwInst inst;
  inst.x = x;
  inst.wcopy = wcopy;

  if (x >= bw) {
    // Enough elements that each output block receives a block's worth of
    // slots; scatter directly.
    inst.dense = true;
    ex.par_range(0, x, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 i = b; i < e; ++i) {
        const u64 p = c.rd(perm, i);
        for (u64 d = 0; d < wcopy; ++d) c.wr(out, p * lp + d, c.rd(a, i * l + d));
      }
    });
  } else {
    // Few elements: scatter into a private row-per-slot staging grid, then
    // compact rows to the output in order. The staging rows are at least x
    // words apart so concurrent scatter leaves touch disjoint regions.
    const u64 stride = std::max(x, wcopy);
    ArrRef scratch = ex.alloc(x * stride, AllocClass::Scratch);
    inst.scratch_alloc = scratch.id;
    inst.scratch_words = x * stride;
    ex.par_range(0, x * stride, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 i = b; i < e; ++i) c.wr(scratch, i, 0);
    });
    ex.par_spawn(x, [&](u64 i) {
      ex.leaf([&](LeafCtx& c) {
        const u64 p = c.rd(perm, i);
        for (u64 d = 0; d < wcopy; ++d) c.wr(scratch, p * stride + d, c.rd(a, i * l + d));
      });
    });
    ex.par_range(0, x, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 p = b; p < e; ++p)
        for (u64 d = 0; d < wcopy; ++d) c.wr(out, p * lp + d, c.rd(scratch, p * stride + d));
    });
    ex.free(scratch);
  }

  if (log != nullptr) {
    inst.nodes = {first, static_cast<u32>(ex.node_count())};
    log->pw.push_back(inst);
  }
}

void small_multi_merge(Execution& ex, ArrRef data, u64 w, u64 rcap,
                       const std::vector<SmmProblem>& probs, ArrRef out,
                       InstanceLog* log) {
  auto tg = ex.tagged(ProcTag::MultiMerge);
  SPMS_CHECK(w >= 1 && rcap >= 1 && !probs.empty(), "bad merge batch");
  const u64 lp = w + 2 * rcap;
  const u32 grain = ex.options().copy_grain;
  const u32 first = static_cast<u32>(ex.node_count());
  u64 moved = 0;

  ex.par_spawn(probs.size(), [&](u64 pi) {
    const SmmProblem& pr = probs[pi];
    SPMS_CHECK(!pr.list_off.empty() && pr.list_off.front() == 0, "bad problem layout");
    const u64 nl = pr.list_off.size() - 1;
    const u64 m = pr.list_off.back();
    if (m == 0) {
      ex.leaf_charge(1);  // placeholder so the spawned branch stays nonempty
      return;
    }
    SPMS_CHECK(nl <= rcap, "problem exceeds list capacity");
    SPMS_CHECK((pr.base + m) * w <= data.len, "problem data out of range");
    SPMS_CHECK((pr.out_base + m) * lp <= out.len, "problem output out of range");
    moved += m;

    ArrRef table = ex.alloc(m * nl);
    ArrRef perm = ex.alloc(m);
    // Phase 1: rank every element in every list of the problem (its own by
    // position); the rank sum is its output slot.
    ex.par_range(0, m, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 q = b; q < e; ++q) {
        const u64 je =
            static_cast<u64>(std::upper_bound(pr.list_off.begin(), pr.list_off.end(), q) -
                             pr.list_off.begin()) - 1;
        const Word key = c.rd(data, (pr.base + q) * w);
        u64 sum = 0;
        for (u64 li = 0; li < nl; ++li) {
          u64 rho;
          if (li == je) {
            rho = q - pr.list_off[je];
          } else {
            const i64 lb = static_cast<i64>(pr.base + pr.list_off[li]);
            const i64 le = static_cast<i64>(pr.base + pr.list_off[li + 1]);
            rho = c.rank_in_window(data, lb - 1, le, key, li < je, w) -
                  (pr.base + pr.list_off[li]);
          }
          c.wr(table, q * nl + li, rho);
          sum += rho;
        }
        c.wr(perm, q, sum);
      }
    });

    // Phase 2: move the element words into their output slots.
    permuting_writes(ex, data.slice(pr.base * w, m * w), w, perm,
                     out.slice(pr.out_base * lp, m * lp), lp, w, log);

    // Phase 3: invert the permutation so rank rows can be written in output
    // order (scattered reads, sequential writes).
    ArrRef io = ex.alloc(m);
    ex.par_range(0, m, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 q = b; q < e; ++q) c.wr(io, q, q);
    });
    ArrRef inv = ex.alloc(m);
    permuting_writes(ex, io, 1, perm, inv, 1, 1, log);
    ex.par_range(0, m, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 qo = b; qo < e; ++qo) {
        const u64 q = c.rd(inv, qo);
        for (u64 li = 0; li < nl; ++li) {
          const u64 rho = c.rd(table, q * nl + li);
          c.wr(out, (pr.out_base + qo) * lp + w + 2 * li, rho);
          c.wr(out, (pr.out_base + qo) * lp + w + 2 * li + 1, rho + 1);
        }
      }
    });
    ex.free(inv);
    ex.free(io);
    ex.free(perm);
    ex.free(table);
  });

  if (log != nullptr)
    log->smm.push_back({{first, static_cast<u32>(ex.node_count())}, probs.size(), moved});
}

}  // namespace spms
