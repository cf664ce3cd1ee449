#include "spms/sort.hpp"

#include <algorithm>
#include <utility>

namespace spms {

namespace {

// Index of the range containing position t, given range start offsets
// off[0..m] (off is nondecreasing, off[0] == 0, t < off[m]).
u64 range_of(const std::vector<u64>& off, u64 t) {
  return static_cast<u64>(std::upper_bound(off.begin(), off.end(), t) - off.begin()) - 1;
}

struct Sorter {
  Execution& ex;
  const SortParams& par;
  InstanceLog* ilog;
  CheckLog log;
  ArrRef arena[2];
  u64 cutoff;

  Sorter(Execution& e, const SortParams& p, InstanceLog* il)
      : ex(e), par(p), ilog(il) {
    SPMS_CHECK(par.c >= 6 && par.c % 2 == 0,
               "sampling exponent must be even and at least 6");
    // Below 3*2^{c/2}, a merge at arity 2 would regroup into itself; the
    // sequential cutoff must absorb that range.
    cutoff = std::max(par.base_cutoff, sat_mul(3, u64{1} << (par.c / 2)));
  }

  // Sequential, stable insertion sort of the range in place. Stability over
  // the concatenated lists realizes the tie order (key, list, position).
  void base_sort(u32 src, u64 off, u64 n) {
    ++log.base_calls;
    auto tg = ex.tagged(ProcTag::BaseSort);
    ex.leaf([&](LeafCtx& c) {
      std::vector<Word> buf(n);
      for (u64 i = 0; i < n; ++i) buf[i] = c.rd(arena[src], off + i);
      u64 cmps = 0;
      for (u64 i = 1; i < n; ++i) {
        const Word v = buf[i];
        u64 j = i;
        while (j > 0) {
          ++cmps;
          if (buf[j - 1] <= v) break;
          buf[j] = buf[j - 1];
          --j;
        }
        buf[j] = v;
      }
      c.charge(cmps);
      for (u64 i = 0; i < n; ++i) c.wr(arena[src], off + i, buf[i]);
    });
  }

  void copy_range(u32 from, u32 to, u64 off, u64 len) {
    auto tg = ex.tagged(ProcTag::Fixup);
    ex.par_range(0, len, ex.options().copy_grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 i = b; i < e; ++i) c.wr(arena[to], off + i, c.rd(arena[from], off + i));
    });
    log.fixup_words += len;
  }

  // Copy the outputs of sibling subranges into one arena. offs[g..g+1]
  // bounds subrange g relative to `off`; landing[g] says where it lies now.
  void realign(const std::vector<u32>& landing, const std::vector<u64>& offs,
               u64 off, u32 target) {
    std::vector<u64> mis;
    for (u64 g = 0; g < landing.size(); ++g)
      if (landing[g] != target && offs[g + 1] > offs[g]) mis.push_back(g);
    if (mis.empty()) return;
    ex.par_spawn(mis.size(), [&](u64 t) {
      const u64 g = mis[t];
      copy_range(landing[g], target, off + offs[g], offs[g + 1] - offs[g]);
    });
  }

  u32 merge(u32 src, u64 off, const std::vector<u64>& bounds, u64 r);
  u32 sample_partition(u32 src, u64 off, const std::vector<u64>& bounds, u64 r,
                       u64 sample_gap, const std::vector<u64>& cnt,
                       const std::vector<u64>& soff, u64 s, u64 sc, u64 k);
};

u32 Sorter::merge(u32 src, u64 off, const std::vector<u64>& bounds, u64 r) {
  ++log.merge_calls;
  const u64 rl = bounds.size() - 1;
  const u64 n = bounds.back();
  SPMS_CHECK(rl >= 1 && rl <= r, "merge arity out of range");
  SPMS_CHECK(n <= sat_mul(3, sat_pow(r, par.c)), "merge size precondition violated");

  u32 land = src;
  if (rl == 1) {
    ex.leaf_charge(1);  // already merged; keep the surrounding branch nonempty
  } else if (n <= cutoff) {
    base_sort(src, off, n);
  } else if (const u64 part_cap = sat_mul(3, sat_pow(r, par.c / 2)); n > part_cap) {
    // Oversized for the group recursion: partition by sampled pivots.
    const u64 sample_gap = sat_pow(r, par.c / 2 - 1);
    std::vector<u64> cnt(rl), soff(rl + 1, 0);
    for (u64 j = 0; j < rl; ++j) {
      cnt[j] = (bounds[j + 1] - bounds[j]) / sample_gap;
      soff[j + 1] = soff[j] + cnt[j];
    }
    const u64 s = soff[rl];
    const u64 sc = s / r;
    const u64 k = s / (2 * r) + 1;
    SPMS_CHECK(sc >= 2 && k >= 2, "sample too thin for an oversized merge");
    land = sample_partition(src, off, bounds, r, sample_gap, cnt, soff, s, sc, k);
  } else {
    // Merge groups of ceil(sqrt(r)) consecutive lists recursively, then
    // merge the group outputs at the reduced arity.
    const u64 gsz = isqrt_ceil(r);
    const u64 ng = ceil_div(rl, gsz);
    std::vector<u64> goff(ng + 1);
    for (u64 g = 0; g <= ng; ++g) goff[g] = bounds[std::min(g * gsz, rl)];
    std::vector<u32> landing(ng);
    ex.par_spawn(ng, [&](u64 g) {
      const u64 lo = g * gsz;
      const u64 hi = std::min(lo + gsz, rl);
      std::vector<u64> sub(bounds.begin() + lo, bounds.begin() + hi + 1);
      for (auto& b : sub) b -= bounds[lo];
      landing[g] = merge(src, off + bounds[lo], sub, gsz);
    });
    u64 w1 = 0;
    for (u64 g = 0; g < ng; ++g)
      if (landing[g] == 1) w1 += goff[g + 1] - goff[g];
    const u64 w0 = n - w1;
    const u32 target = w1 > w0 ? 1u : (w0 > w1 ? 0u : (src ^ 1u));
    realign(landing, goff, off, target);
    land = merge(target, off, goff, gsz);
  }

  if (ex.options().deep_checks) {
    for (u64 i = 1; i < n; ++i)
      SPMS_CHECK(ex.peek(arena[land], off + i - 1) <= ex.peek(arena[land], off + i),
                 "merge output not sorted");
  }
  return land;
}

u32 Sorter::sample_partition(u32 src, u64 off, const std::vector<u64>& bounds, u64 r,
                             u64 sample_gap, const std::vector<u64>& cnt,
                             const std::vector<u64>& soff, u64 s, u64 sc, u64 k) {
  ++log.sample_calls;
  const u64 rl = bounds.size() - 1;
  const u64 n = bounds.back();
  const u32 dst = src ^ 1u;
  const u64 gap = ex.options().cache.b_words;  // buffer margin, one block
  const u32 grain = ex.options().copy_grain;

  // --- sample: every sample_gap-th element of each list, tagged with its
  // source list, forming one sorted sublist per input list.
  ArrRef samp = ex.alloc_buffered(2 * s, gap);
  {
    auto tg = ex.tagged(ProcTag::Sampling);
    ex.par_range(0, s, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 t = b; t < e; ++t) {
        const u64 j = range_of(soff, t);
        const u64 q = t - soff[j];
        c.wr(samp, 2 * t, c.rd(arena[src], off + bounds[j] + (q + 1) * sample_gap - 1));
        c.wr(samp, 2 * t + 1, j);
      }
    });
  }
  ex.read_phase(samp);

  // --- the sample is itself sorted by a recursive application of the same
  // idea one level down: extract every r-th sample position, sort those,
  // partition the sample about them, and sort the resulting chunks.

  // Positions of the sub-sample within sublist j: p0[j], p0[j]+r, ...
  std::vector<u64> p0(rl), sscnt(rl), ssoff(rl + 1, 0);
  for (u64 j = 0; j < rl; ++j) {
    p0[j] = (r - 1 - soff[j] % r) % r;
    sscnt[j] = cnt[j] > p0[j] ? ceil_div(cnt[j] - p0[j], r) : 0;
    ssoff[j + 1] = ssoff[j] + sscnt[j];
  }
  SPMS_CHECK(ssoff[rl] == sc, "sub-sample miscount");

  // Gather the sub-sample compactly: slots [key, source list, position].
  ArrRef ssg = ex.alloc(3 * sc);
  {
    auto tg = ex.tagged(ProcTag::Sampling);
    ex.par_range(0, sc, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 u = b; u < e; ++u) {
        const u64 j = range_of(ssoff, u);
        const u64 pos = p0[j] + (u - ssoff[j]) * r;
        c.wr(ssg, 3 * u, c.rd(samp, 2 * (soff[j] + pos)));
        c.wr(ssg, 3 * u + 1, j);
        c.wr(ssg, 3 * u + 2, pos);
      }
    });
  }

  // Sort the sub-sample in one multiway merge; output slots carry the rank
  // of each element within every sublist's sub-sample.
  const u64 ws3 = 3 + 2 * rl;
  ArrRef ssout = ex.alloc_buffered(sc * ws3, gap);
  {
    std::vector<u64> ssloff(ssoff);
    small_multi_merge(ex, ssg, 3, rl, {{0, 0, std::move(ssloff)}}, ssout, ilog);
  }
  ex.read_phase(ssout);
  ex.free(ssg);

  // --- partition the sample about the whole sorted sub-sample. Rank pairs
  // locate each pivot within r positions in every sublist.
  ArrRef pvs = ex.alloc(2 * sc);
  ArrRef wlo = ex.alloc(sc * rl);
  ArrRef whi = ex.alloc(sc * rl);
  {
    auto tg = ex.tagged(ProcTag::Sampling);
    ex.par_range(0, sc, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 u = b; u < e; ++u) {
        c.wr(pvs, 2 * u, c.rd(ssout, u * ws3));
        c.wr(pvs, 2 * u + 1, c.rd(ssout, u * ws3 + 1));
      }
    });
    ex.par_range(0, sc * rl, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 u = b; u < e; ++u) {
        const u64 jv = u / rl;
        const u64 i = u % rl;
        const u64 je = c.rd(ssout, jv * ws3 + 1);
        u64 lo1, hi;
        if (i == je) {
          const u64 pos = c.rd(ssout, jv * ws3 + 2);  // exact rank: own position
          lo1 = pos + 1;
          hi = pos;
        } else {
          const u64 rho = c.rd(ssout, jv * ws3 + 3 + 2 * i);
          SPMS_CHECK(rho <= sscnt[i], "sub-sample rank out of range");
          lo1 = rho == 0 ? 0 : p0[i] + (rho - 1) * r + 1;
          hi = rho < sscnt[i] ? p0[i] + rho * r : cnt[i];
        }
        c.wr(wlo, u, lo1);
        c.wr(whi, u, hi);
      }
    });
  }

  PrepInput pin;
  pin.data = samp;
  pin.w = 2;
  pin.list_off = soff;
  pin.pivots = pvs;
  pin.npv = sc;
  pin.win_lo1 = wlo;
  pin.win_hi = whi;
  PrepOutput prep_s = tr_prep(ex, pin, ilog);
  log.partition_checks += (sc + 1) * rl;
  ex.free(whi);
  ex.free(wlo);
  ex.free(pvs);
  ex.free(ssout);

  ArrRef spart = ex.alloc(2 * s);
  transposing_redistribution(ex, samp, 2, prep_s.dir, spart, ilog);
  ex.free(samp);

  // Chunk layout of the partitioned sample (driver-side mirror of the
  // directory the redistribution just consumed).
  std::vector<u64> clens((sc + 1) * rl);
  for (u64 u = 0; u < clens.size(); ++u) clens[u] = ex.peek(prep_s.dir.lens, u);
  ex.free(prep_s.dir.starts);
  ex.free(prep_s.dir.lens);
  std::vector<u64> coff(sc + 2, 0);
  std::vector<SmmProblem> chunks(sc + 1);
  for (u64 t = 0; t <= sc; ++t) {
    chunks[t].list_off.assign(1, 0);
    for (u64 i = 0; i < rl; ++i)
      chunks[t].list_off.push_back(chunks[t].list_off.back() + clens[t * rl + i]);
    chunks[t].base = coff[t];
    chunks[t].out_base = coff[t];
    coff[t + 1] = coff[t] + chunks[t].list_off.back();
  }
  SPMS_CHECK(coff[sc + 1] == s, "sample partition dropped elements");

  // Sort every chunk; output slots carry within-chunk per-sublist ranks.
  const u64 ws2 = 2 + 2 * rl;
  ArrRef ssorted = ex.alloc_buffered(s * ws2, gap);
  small_multi_merge(ex, spart, 2, rl, chunks, ssorted, ilog);
  ex.read_phase(ssorted);
  ex.free(spart);

  // --- pivots for the main partition: every 2r-th element of the sorted
  // sample. A pivot's rank in sublist j is its chunk's base rank plus its
  // within-chunk rank, which windows it within sample_gap positions of its
  // exact rank in full list j.
  const u64 np = k - 1;
  ArrRef pv2 = ex.alloc(2 * np);
  ArrRef wlo2 = ex.alloc(np * rl);
  ArrRef whi2 = ex.alloc(np * rl);
  {
    auto tg = ex.tagged(ProcTag::Sampling);
    ex.par_range(0, np, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 g = b; g < e; ++g) {
        const u64 pos = (g + 1) * 2 * r - 1;
        c.wr(pv2, 2 * g, c.rd(ssorted, pos * ws2));
        c.wr(pv2, 2 * g + 1, c.rd(ssorted, pos * ws2 + 1));
      }
    });
    ex.par_range(0, np * rl, grain, [&](LeafCtx& c, u64 b, u64 e) {
      for (u64 u = b; u < e; ++u) {
        const u64 g = u / rl;
        const u64 j = u % rl;
        const u64 pos = (g + 1) * 2 * r - 1;
        const u64 t = range_of(coff, pos);
        const u64 base_rank = t == 0 ? 0 : c.rd(prep_s.ranks, (t - 1) * rl + j);
        const u64 rho = base_rank + c.rd(ssorted, pos * ws2 + 2 + 2 * j);
        SPMS_CHECK(rho <= cnt[j], "sample rank out of range");
        const u64 je = c.rd(pv2, 2 * g + 1);
        const u64 len_j = bounds[j + 1] - bounds[j];
        u64 lo1, hi;
        if (j == je) {
          const u64 exact = (rho + 1) * sample_gap - 1;  // the pivot's own index
          lo1 = exact + 1;
          hi = exact;
        } else {
          lo1 = rho == 0 ? 0 : rho * sample_gap;
          hi = rho < cnt[j] ? (rho + 1) * sample_gap - 1 : len_j;
        }
        c.wr(wlo2, u, lo1);
        c.wr(whi2, u, hi);
      }
    });
  }
  ex.free(prep_s.ranks);

  PrepInput pin2;
  pin2.data = arena[src].slice(off, n);
  pin2.w = 1;
  pin2.list_off = bounds;
  pin2.pivots = pv2;
  pin2.npv = np;
  pin2.win_lo1 = wlo2;
  pin2.win_hi = whi2;
  PrepOutput prep_a = tr_prep(ex, pin2, ilog);
  log.partition_checks += k * rl;
  ex.free(whi2);
  ex.free(wlo2);
  ex.free(pv2);
  ex.free(ssorted);
  ex.free(prep_a.ranks);

  // Subproblem layout, with size-window checks: each non-final subproblem
  // should hold between r^{c/2}+1 and 3*r^{c/2}-1 elements.
  std::vector<u64> plens(k * rl);
  for (u64 u = 0; u < plens.size(); ++u) plens[u] = ex.peek(prep_a.dir.lens, u);
  std::vector<std::vector<u64>> subb(k);
  std::vector<u64> poff(k + 1, 0);
  const u64 strong_lo = sat_pow(r, par.c / 2) + 1;
  const u64 strong_hi = sat_mul(3, sat_pow(r, par.c / 2)) - 1;
  const u64 weak_hi = sat_mul(3 * par.c, sat_pow(r, par.c / 2));
  for (u64 t = 0; t < k; ++t) {
    subb[t].assign(1, 0);
    for (u64 i = 0; i < rl; ++i) subb[t].push_back(subb[t].back() + plens[t * rl + i]);
    poff[t + 1] = poff[t] + subb[t].back();
    const u64 sz = subb[t].back();
    ++log.size_checks;
    const bool strong = t + 1 == k ? sz <= strong_hi : (sz >= strong_lo && sz <= strong_hi);
    if (!strong) {
      if (sz <= weak_hi)
        ++log.size_weak;
      else
        ++log.size_violations;
    }
  }
  SPMS_CHECK(poff[k] == n, "partition dropped elements");

  transposing_redistribution(ex, arena[src].slice(off, n), 1, prep_a.dir,
                             arena[dst].slice(off, n), ilog);
  ex.free(prep_a.dir.starts);
  ex.free(prep_a.dir.lens);

  // Merge every subproblem at the same arity, then force the results into
  // the destination arena so the partition output is contiguous.
  std::vector<u32> landing(k);
  ex.par_spawn(k, [&](u64 t) { landing[t] = merge(dst, off + poff[t], subb[t], r); });
  realign(landing, poff, off, dst);
  return dst;
}

SortOutcome finish_outcome(Execution&& ex, Sorter& s, u32 land, u64 off, u64 n) {
  ex.finish();
  SortOutcome out{std::move(ex), {}, s.log, land};
  out.output.resize(n);
  for (u64 i = 0; i < n; ++i) out.output[i] = out.ex.peek(s.arena[land], off + i);
  return out;
}

}  // namespace

SortOutcome run_sort(const std::vector<u64>& input, const SortParams& par,
                     const ExecOptions& opt, InstanceLog* log) {
  const u64 n = input.size();
  SPMS_CHECK(n >= 1, "nothing to sort");
  Execution ex(opt);
  Sorter s(ex, par, log);
  s.arena[0] = ex.alloc(n);
  s.arena[1] = ex.alloc(n);
  for (u64 i = 0; i < n; ++i) ex.poke(s.arena[0], i, input[i]);
  std::vector<u64> bounds(n + 1);
  for (u64 i = 0; i <= n; ++i) bounds[i] = i;
  const u32 land = s.merge(0, 0, bounds, n);
  return finish_outcome(std::move(ex), s, land, 0, n);
}

SortOutcome run_merge(const std::vector<std::vector<u64>>& lists, u64 r_param,
                      const SortParams& par, const ExecOptions& opt,
                      InstanceLog* log) {
  SPMS_CHECK(!lists.empty() && lists.size() <= r_param, "list count exceeds arity");
  Execution ex(opt);
  Sorter s(ex, par, log);
  std::vector<u64> bounds{0};
  for (const auto& li : lists) {
    SPMS_CHECK(std::is_sorted(li.begin(), li.end()), "input lists must be sorted");
    bounds.push_back(bounds.back() + li.size());
  }
  const u64 n = bounds.back();
  s.arena[0] = ex.alloc(std::max<u64>(n, 1));
  s.arena[1] = ex.alloc(std::max<u64>(n, 1));
  u64 at = 0;
  for (const auto& li : lists)
    for (u64 v : li) ex.poke(s.arena[0], at++, v);
  const u32 land = s.merge(0, 0, bounds, r_param);
  return finish_outcome(std::move(ex), s, land, 0, n);
}

}  // namespace spms
