#pragma once
// One flat record per measured run: the instance parameters, every raw
// quantity the simulators produce (work, span, misses, steal and sharing
// accounting, audit tallies), and the normalized ratios the sweep tables are
// judged on. Serialized as JSON for single runs and CSV for sweeps; both
// directions round-trip every field exactly.

#include <string>
#include <vector>

#include "spms/fs.hpp"
#include "spms/scheduler.hpp"
#include "spms/sort.hpp"

namespace spms {

// Field list in serialization order: one row per field, (name, type). Member
// declarations, JSON keys, CSV columns, and parsers all expand from this one
// table, so the formats cannot drift apart.
#define SPMS_REPORT_FIELDS(X)      \
  X(schema, u64)                   \
  X(n, u64)                        \
  X(c, u64)                        \
  X(m_words, u64)                  \
  X(b_words, u64)                  \
  X(p, u64)                        \
  X(input_kind, std::string)       \
  X(input_seed, u64)               \
  X(sched_seed, u64)               \
  X(b_cost, u64)                   \
  X(s_cost, u64)                   \
  X(work, u64)                     \
  X(span, u64)                     \
  X(nodes, u64)                    \
  X(kernel_count, u64)             \
  X(steals, u64)                   \
  X(usurpations, u64)              \
  X(steal_ticks, u64)              \
  X(wasted_ticks, u64)             \
  X(failed_attempts, u64)          \
  X(idle_ticks, u64)               \
  X(makespan, u64)                 \
  X(timed_makespan, u64)           \
  X(q_seq, u64)                    \
  X(q_par, u64)                    \
  X(r_signed, i64)                 \
  X(r_eps, u64)                    \
  X(f_total, u64)                  \
  X(f_heap, u64)                   \
  X(f_heap_scratch, u64)           \
  X(f_stack, u64)                  \
  X(fs_misses, u64)                \
  X(fanout_sum, u64)               \
  X(fanout_max, u64)               \
  X(heap_delay_max, u64)           \
  X(stack_delay_max, u64)          \
  X(sharing_blocks_max, u64)       \
  X(sharing_blocks_total, u64)     \
  X(pw_audit_max, u64)             \
  X(stack_x_words, u64)            \
  X(stack_audit_checked, u64)      \
  X(stack_audit_violations, u64)   \
  X(misalign_checked, u64)         \
  X(misalign_max, u64)             \
  X(misalign_violations, u64)      \
  X(sorted_ok, bool)               \
  X(size_checks, u64)              \
  X(size_weak, u64)                \
  X(size_violations, u64)          \
  X(partition_checks, u64)         \
  X(fixup_words, u64)              \
  X(memory_audit_violations, u64)  \
  X(peak_stack_words, u64)         \
  X(heap_top_words, u64)           \
  X(peak_live_blocks, u64)         \
  X(tp_estimate, double)           \
  X(ratio_work, double)            \
  X(ratio_span, double)            \
  X(ratio_q, double)               \
  X(ratio_r, double)               \
  X(ratio_f, double)               \
  X(ratio_kernels, double)

// Conventions baked into the ratios:
//   ratio_work    = work / (n log2 n)                         (0 when n < 2)
//   ratio_span    = span / (log2 n * log2 log2 n)             (0 when n < 3)
//   ratio_q       = q_seq * B * log2 M / (n log2 n)           (0 when n < 2)
//   ratio_r       = (q_par - q_seq) * B / (S * M)             (0 when S = 0)
//   ratio_f       = f_total / (S * B)                         (0 when S = 0)
//   ratio_kernels = kernel_count / (2S + 1)
// r_signed keeps the raw signed miss difference; r_eps is how far q_par fell
// below q_seq (usually 0 — a steal can briefly improve locality).
struct RunReport {
#define SPMS_X(name, type) type name{};
  SPMS_REPORT_FIELDS(SPMS_X)
#undef SPMS_X

  bool operator==(const RunReport&) const = default;

  std::string to_json() const;
  static RunReport from_json(const std::string& text);

  static std::string csv_header();
  std::string csv_row() const;
  // Parses one data row (the header is fixed and not consulted).
  static RunReport from_csv_row(const std::string& row);
};

// Everything that determines a run besides the input values themselves.
struct MeasureConfig {
  SortParams sort{};
  CacheConfig cache{};
  CostModel cost{};
  u32 p = 1;
  u64 sched_seed = 1;
  std::string input_kind = "explicit";  // recorded only; see generate_input
  u64 input_seed = 0;
};

struct MeasuredRun {
  RunReport report;
  Schedule schedule;
  std::vector<u64> output;
  i64 mismatch_at = -1;  // first index where output differs from std::sort, or -1
};

// The full pipeline on one input: record the sort, compare against std::sort,
// replay through one cache (q_seq), schedule onto p processors, replay through
// p caches with the sharing accountant attached, then time the schedule with
// miss and steal costs. p = 1 exercises the same path and yields zero steals,
// zero sharing, and q_par = q_seq.
MeasuredRun measure_run(const std::vector<u64>& input, const MeasureConfig& mc);

}  // namespace spms
