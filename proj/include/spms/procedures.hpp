#pragma once
// The data-movement building blocks of the merge: parallel prefix sums,
// straddle-bounded rank search, transposing redistribution (+ its
// rank-computing preparation pass), permuting writes, and the small
// multi-way merge. All operate on slotted arrays in simulated memory: an
// array holds fixed-width element slots whose first word is the key.

#include <vector>

#include "spms/engine.hpp"

namespace spms {

// Node-index range [first, end) of one procedure instance in the recorded
// dag, kept so block-sharing audits can group verdicts per instance.
struct InstRange {
  u32 first = 0;
  u32 end = 0;
  };

struct PwInst {
  InstRange nodes;
  u64 x = 0;          // elements moved
  u64 wcopy = 0;      // words copied per element
  u32 scratch_alloc = kNoNode;
  u64 scratch_words = 0;
  bool dense = false; // one-pass variant (x >= B)
};

struct TrInst {
  InstRange nodes;
  u64 elem_w = 0;
  u64 total = 0;       // elements moved
  u64 out_base = 0;    // absolute word address of the output
  u64 out_words = 0;
};

struct SmmInst {
  InstRange nodes;
  u64 problems = 0;
  u64 elements = 0;
};

struct InstanceLog {
  std::vector<PwInst> pw;
  std::vector<TrInst> tr;
  std::vector<SmmInst> smm;
};

// In-place exclusive prefix sums over a plain array; returns the total.
// Balanced up-sweep/down-sweep, O(len) work and O(log len) span.
u64 prefix_sums(Execution& ex, ArrRef a);

// One straddle-bounded search as a standalone single-leaf computation; same
// window semantics as LeafCtx::rank_in_window.
u64 straddle_search(Execution& ex, const ArrRef& list, Word key, i64 lo, i64 hi,
                    bool count_equal, u64 stride = 1);

// Directory describing a partition of r lists into k pieces each, in output
// (piece-major) order: entry t = j*r + i is piece j of list i, t in [0, k*r).
// lens[t] = piece length, starts[t] = absolute element index of the piece in
// the source array. All units are elements (slots), not words.
struct TrDir {
  ArrRef lens;
  ArrRef starts;
  u64 r = 0;
  u64 k = 0;
};

// Gather the pieces of y (slot width w) into out, concatenated in directory
// (output) order. The fork structure is built over the output order so each
// subtree writes one contiguous output range.
void transposing_redistribution(Execution& ex, ArrRef y, u64 w, const TrDir& dir,
                                ArrRef out, InstanceLog* log = nullptr);

// Inputs for the redistribution prep pass: r concatenated source lists (slot
// width w inside `data`, boundaries in list_off), and npv pivots given as
// width-2 slots [key, source-list-id]. For every (pivot, list) pair a search
// window (lo, hi] of slot indices with lo == hi meaning "rank already known".
// Windows are stored in sim arrays with lo biased by +1 (0 encodes -1).
struct PrepInput {
  ArrRef data;
  u64 w = 1;
  std::vector<u64> list_off;  // r+1 boundaries, element units
  ArrRef pivots;              // npv slots of width 2
  u64 npv = 0;
  ArrRef win_lo1;             // npv*r, window lo + 1
  ArrRef win_hi;              // npv*r, window hi
};

struct PrepOutput {
  ArrRef ranks;  // npv rows of r: rank of pivot j in list i at j*r + i
  TrDir dir;     // k = npv+1 pieces per list, with sentinel boundary rows
};

// Rank every pivot in every list (searches run in output order), then derive
// piece lengths by a lockstep scan of consecutive rank rows and piece starts
// by a lockstep zip with the list boundaries.
PrepOutput tr_prep(Execution& ex, const PrepInput& in, InstanceLog* log = nullptr);

// Scatter x elements: out slot perm[i] receives input slot i; wcopy words
// move per element. Input slots at stride l, output slots at stride lp.
// perm must be a permutation of [0, x) (structural fault otherwise). When
// x < B the scatter goes through a zero-filled x-by-max(x,wcopy) scratch
// whose rows are compacted into the output afterwards; when x >= B the
// element count already dominates block size and a direct pass is used.
void permuting_writes(Execution& ex, ArrRef a, u64 l, ArrRef perm, ArrRef out, u64 lp,
                      u64 wcopy, InstanceLog* log = nullptr);

// One ordered merge problem for the small multi-way merge: its lists are
// consecutive element ranges of a common array.
struct SmmProblem {
  u64 base = 0;                // element offset of the problem's data
  u64 out_base = 0;            // element offset of the problem's output
  std::vector<u64> list_off;   // boundaries relative to base, nl+1 entries
};

// Merge each problem's lists by full cross-ranking: every element is ranked
// in every list of its problem (positionally in its own), the rank sum gives
// its output slot, and permuting writes performs the reorder. Output slots
// have stride w + 2*rcap: the element's w words followed by per-list rank
// pairs (rho_i, rho_i + 1), zero-filled beyond the problem's list count.
void small_multi_merge(Execution& ex, ArrRef data, u64 w, u64 rcap,
                       const std::vector<SmmProblem>& probs, ArrRef out,
                       InstanceLog* log = nullptr);

}  // namespace spms
