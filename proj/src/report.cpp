#include "spms/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace spms {

namespace {

// CSV cell formatting / parsing, one overload per field type in the table.
void put_cell(std::string& out, u64 v) { out += std::to_string(v); }
void put_cell(std::string& out, i64 v) { out += std::to_string(v); }
void put_cell(std::string& out, bool v) { out += v ? "true" : "false"; }
void put_cell(std::string& out, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}
void put_cell(std::string& out, const std::string& v) {
  SPMS_CHECK(v.find_first_of(",\"\n\r") == std::string::npos, "text field is not CSV-safe: " + v);
  out += v;
}

void get_cell(const std::string& s, u64& v) { v = std::stoull(s); }
void get_cell(const std::string& s, i64& v) { v = std::stoll(s); }
void get_cell(const std::string& s, bool& v) {
  SPMS_CHECK(s == "true" || s == "false", "bad boolean cell: " + s);
  v = (s == "true");
}
void get_cell(const std::string& s, double& v) { v = std::stod(s); }
void get_cell(const std::string& s, std::string& v) { v = s; }

constexpr u64 kFieldCount = 0
#define SPMS_X(name, type) +1
    SPMS_REPORT_FIELDS(SPMS_X)
#undef SPMS_X
    ;

std::vector<std::string> split_cells(const std::string& row) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : row) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\n' && ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

std::string RunReport::to_json() const {
  nlohmann::ordered_json j;
#define SPMS_X(name, type) j[#name] = name;
  SPMS_REPORT_FIELDS(SPMS_X)
#undef SPMS_X
  return j.dump(2) + "\n";
}

RunReport RunReport::from_json(const std::string& text) {
  const auto j = nlohmann::ordered_json::parse(text);
  RunReport r;
#define SPMS_X(name, type) r.name = j.at(#name).get<type>();
  SPMS_REPORT_FIELDS(SPMS_X)
#undef SPMS_X
  return r;
}

std::string RunReport::csv_header() {
  std::string h;
#define SPMS_X(name, type) \
  h += #name;              \
  h += ',';
  SPMS_REPORT_FIELDS(SPMS_X)
#undef SPMS_X
  h.back() = '\n';
  return h;
}

std::string RunReport::csv_row() const {
  std::string row;
#define SPMS_X(name, type) \
  put_cell(row, name);     \
  row += ',';
  SPMS_REPORT_FIELDS(SPMS_X)
#undef SPMS_X
  row.back() = '\n';
  return row;
}

RunReport RunReport::from_csv_row(const std::string& row) {
  const std::vector<std::string> cells = split_cells(row);
  SPMS_CHECK(cells.size() == kFieldCount, "row has " + std::to_string(cells.size()) +
                                              " cells, expected " + std::to_string(kFieldCount));
  RunReport r;
  u64 i = 0;
#define SPMS_X(name, type) get_cell(cells[i++], r.name);
  SPMS_REPORT_FIELDS(SPMS_X)
#undef SPMS_X
  return r;
}

MeasuredRun measure_run(const std::vector<u64>& input, const MeasureConfig& mc) {
  mc.cache.validate();
  SPMS_CHECK(mc.p >= 1, "need at least one processor");

  MeasuredRun out;
  RunReport& r = out.report;
  r.schema = 1;
  r.n = input.size();
  r.c = mc.sort.c;
  r.m_words = mc.cache.m_words;
  r.b_words = mc.cache.b_words;
  r.p = mc.p;
  r.input_kind = mc.input_kind;
  r.input_seed = mc.input_seed;
  r.sched_seed = mc.sched_seed;
  r.b_cost = mc.cost.b;
  r.s_cost = mc.cost.s;
  if (input.empty()) {
    // Nothing ran, so nothing is scheduled, replayed, or charged.
    r.sorted_ok = true;
    return out;
  }

  ExecOptions opt;
  opt.cache = mc.cache;
  opt.record = true;
  SortOutcome so = run_sort(input, mc.sort, opt);
  out.output = std::move(so.output);

  std::vector<u64> oracle = input;
  std::sort(oracle.begin(), oracle.end());
  SPMS_CHECK(out.output.size() == oracle.size(), "output length diverged from the input");
  for (u64 i = 0; i < oracle.size(); ++i) {
    if (out.output[i] != oracle[i]) {
      out.mismatch_at = static_cast<i64>(i);
      break;
    }
  }
  r.sorted_ok = out.mismatch_at < 0;

  const Execution& ex = so.ex;
  const Dag& d = ex.dag();
  const Metrics& m = ex.metrics();
  r.work = m.work;
  r.span = m.span;
  r.nodes = m.nodes;
  r.size_checks = so.checks.size_checks;
  r.size_weak = so.checks.size_weak;
  r.size_violations = so.checks.size_violations;
  r.partition_checks = so.checks.partition_checks;
  r.fixup_words = so.checks.fixup_words;
  r.memory_audit_violations = ex.mem().audit_violations().size();
  r.peak_stack_words = m.peak_stack_words;
  r.heap_top_words = ex.mem().heap_top();
  r.peak_live_blocks = ex.mem().peak_live_blocks();

  const SeqReplay seq = replay_sequential(d, mc.cache);
  r.q_seq = seq.cache.misses();

  out.schedule = simulate_schedule(d, mc.p, mc.sched_seed, mc.cost);
  const Schedule& sch = out.schedule;
  r.kernel_count = sch.kernels.size();
  r.steals = sch.steals.size();
  r.usurpations = sch.usurpations.size();
  r.steal_ticks = sch.total_steal_ticks();
  r.wasted_ticks = sch.total_wasted_ticks();
  r.failed_attempts = sch.failed_attempts;
  r.idle_ticks = 0;  // a processor without work is always mid-attempt, never idle
  r.makespan = sch.makespan;

  std::vector<u64> usurps(sch.task_count(), 0);
  for (const UsurpRec& u : sch.usurpations) ++usurps[u.task];
  const FsOutcome fo = account_false_sharing(d, ex.mem(), mc.cache, sch.plan(), usurps);
  const SchedReplay& rep = fo.replay;
  r.q_par = rep.q_par;
  r.r_signed = static_cast<i64>(rep.q_par) - static_cast<i64>(r.q_seq);
  r.r_eps = rep.q_par >= r.q_seq ? 0 : r.q_seq - rep.q_par;
  r.f_total = fo.fs.f_total();
  r.f_heap = fo.fs.f_heap;
  r.f_heap_scratch = fo.fs.f_heap_scratch;
  r.f_stack = fo.fs.f_stack;
  r.fs_misses = rep.inval_misses;
  r.fanout_sum = rep.fanout_sum;
  r.fanout_max = rep.fanout_max;
  r.heap_delay_max = fo.fs.heap_delay_max;
  r.stack_delay_max = fo.fs.stack_delay_max;
  r.sharing_blocks_max = fo.fs.sharing_blocks_max;
  r.sharing_blocks_total = fo.fs.sharing_blocks_total;
  r.pw_audit_max = fo.fs.pw_audit_max;
  r.stack_x_words = fo.fs.stack_x_words;
  r.stack_audit_checked = fo.fs.stack_audit_checked;
  r.stack_audit_violations = fo.fs.stack_audit_violations;
  r.misalign_checked = rep.walk.misalign_checked;
  r.misalign_max = rep.walk.misalign_max;
  r.misalign_violations = rep.walk.misalign_violations;

  const Timed tm = timed_replay(d, sch, rep.node_miss, rep.node_inval);
  r.timed_makespan = tm.makespan;

  // Predicted parallel time: serial work, serial misses, a cache refill per
  // steal, sharing delay, and attempt overhead, spread over p processors.
  // Takeovers at joins carry no tick cost of their own in this model (their
  // price surfaces as invalidation misses), and no processor is ever idle.
  const double S = static_cast<double>(r.steals);
  r.tp_estimate = (static_cast<double>(r.work) +
                   static_cast<double>(r.b_cost) *
                       (static_cast<double>(r.q_seq) + S * static_cast<double>(mc.cache.blocks()) +
                        static_cast<double>(r.f_total)) +
                   static_cast<double>(r.steal_ticks)) /
                  static_cast<double>(mc.p);

  const double dn = static_cast<double>(r.n);
  const double lg = r.n >= 2 ? std::log2(dn) : 0.0;
  r.ratio_work = r.n >= 2 ? static_cast<double>(r.work) / (dn * lg) : 0.0;
  r.ratio_span = r.n >= 3 ? static_cast<double>(r.span) / (lg * std::log2(lg)) : 0.0;
  r.ratio_q = r.n >= 2 ? static_cast<double>(r.q_seq) * static_cast<double>(r.b_words) *
                             std::log2(static_cast<double>(r.m_words)) / (dn * lg)
                       : 0.0;
  r.ratio_r = r.steals ? static_cast<double>(r.r_signed) * static_cast<double>(r.b_words) /
                             (S * static_cast<double>(r.m_words))
                       : 0.0;
  r.ratio_f = r.steals ? static_cast<double>(r.f_total) / (S * static_cast<double>(r.b_words)) : 0.0;
  r.ratio_kernels = static_cast<double>(r.kernel_count) / (2.0 * S + 1.0);

  return out;
}

}  // namespace spms
