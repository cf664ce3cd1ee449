#pragma once
// The multiway merge sort itself, expressed as a recorded fork-join
// computation over simulated memory. A merge call receives up to r sorted
// lists laid out consecutively in one of two ping-pong arenas and leaves
// their merge in the same element range of whichever arena it reports.
//
// Shape of a merge of n elements with arity parameter r (n <= 3*r^c):
//   - tiny inputs are insertion-sorted in place;
//   - oversized inputs (n > 3*r^{c/2}) are split by sampled pivots into
//     balanced subproblems, redistributed into the other arena, and merged
//     recursively at the same arity;
//   - otherwise lists are merged in ceil(sqrt(r))-sized groups recursively,
//     and the group outputs merged once more at arity ceil(sqrt(r)).
// Sorting is a merge of n singleton lists at arity n.

#include <vector>

#include "spms/engine.hpp"
#include "spms/procedures.hpp"

namespace spms {

struct SortParams {
  u64 c = 6;             // sampling exponent; must be even and at least 6
  u64 base_cutoff = 24;  // insertion-sort inputs no longer than this
};

// Structural facts observed while the recursion ran, for bound checking.
struct CheckLog {
  u64 merge_calls = 0;
  u64 sample_calls = 0;      // merges that took the sampling path
  u64 base_calls = 0;        // insertion-sort leaves
  u64 size_checks = 0;       // subproblem size-window tests performed
  u64 size_weak = 0;         // only inside the relaxed window (<= 3c*r^{c/2})
  u64 size_violations = 0;   // outside even the relaxed window
  u64 partition_checks = 0;  // audited partition boundaries
  u64 fixup_words = 0;       // words copied to realign sibling outputs
};

struct SortOutcome {
  Execution ex;
  std::vector<u64> output;
  CheckLog checks;
  u32 landing = 0;  // arena index holding the final output
};

// Sort `input` (treated as n singleton lists at arity n).
SortOutcome run_sort(const std::vector<u64>& input, const SortParams& par = {},
                     const ExecOptions& opt = {}, InstanceLog* log = nullptr);

// Merge already-sorted lists at the given arity parameter. Requires
// lists.size() <= r_param and a total length within 3*r_param^c.
SortOutcome run_merge(const std::vector<std::vector<u64>>& lists, u64 r_param,
                      const SortParams& par = {}, const ExecOptions& opt = {},
                      InstanceLog* log = nullptr);

}  // namespace spms
