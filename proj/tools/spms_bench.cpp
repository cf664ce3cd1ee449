// Benchmark and verification driver for the sorting simulator.
//
//   sort    one measured run; JSON report on stdout, optional output file
//   sweep   a grid of (n, p, scheduler seed) cells; CSV table of reports
//   verify  the invariant suites, one verdict line each
//
// Exit codes: 0 = pass, 1 = a verification failed, 2 = usage error.
// Setting SPMS_TRACE_DIR dumps one `time,proc,event,node` trace per run.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spms/fs.hpp"
#include "spms/generators.hpp"
#include "spms/report.hpp"
#include "spms/scheduler.hpp"
#include "spms/sort.hpp"

namespace {

using namespace spms;

struct CommonArgs {
  u64 n = 1000;
  std::string gen = "uniform";
  u64 seed = 1;
  std::string input_path;
  u64 c = 6;
  u64 m_words = u64{1} << 14;
  u64 b_words = 64;
  u64 cost_b = 8;
  u64 cost_s = 32;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--n", a.n, "elements to generate (ignored with --input)")
      ->capture_default_str();
  cmd->add_option("--gen", a.gen, "input distribution")
      ->check(CLI::IsMember({"uniform", "sorted", "reverse", "few-distinct"}))
      ->capture_default_str();
  cmd->add_option("--seed", a.seed, "input generator seed")->capture_default_str();
  cmd->add_option("--input", a.input_path, "read keys from a .bin or .txt file");
  cmd->add_option("--c", a.c, "sampling exponent (even, at least 6)")->capture_default_str();
  cmd->add_option("--M", a.m_words, "cache capacity in words")->capture_default_str();
  cmd->add_option("--B", a.b_words, "block size in words")->capture_default_str();
  cmd->add_option("--cost-b", a.cost_b, "ticks per block transfer")->capture_default_str();
  cmd->add_option("--cost-s", a.cost_s, "ticks per steal attempt")->capture_default_str();
}

// Validates everything the run would otherwise fault on mid-flight; returns
// an error message, or empty if the configuration is usable.
std::string config_error(const CommonArgs& a, u64 p) {
  if (!is_pow2(a.m_words) || !is_pow2(a.b_words))
    return "M and B must be powers of two";
  if (a.m_words < a.b_words * a.b_words)
    return "M must be at least B^2 (tall cache); got M=" + std::to_string(a.m_words) +
           ", B^2=" + std::to_string(a.b_words * a.b_words);
  if (a.c < 6 || a.c % 2 != 0) return "c must be even and at least 6";
  if (p < 1) return "p must be at least 1";
  if (a.cost_b < 1 || a.cost_s < a.cost_b)
    return "costs must satisfy s >= b >= 1";
  return "";
}

MeasureConfig make_config(const CommonArgs& a, u64 p, u64 sched_seed) {
  MeasureConfig mc;
  mc.sort.c = a.c;
  mc.cache.m_words = a.m_words;
  mc.cache.b_words = a.b_words;
  mc.cost.b = a.cost_b;
  mc.cost.s = a.cost_s;
  mc.p = static_cast<u32>(p);
  mc.sched_seed = sched_seed;
  mc.input_kind = a.input_path.empty() ? a.gen : "file";
  mc.input_seed = a.input_path.empty() ? a.seed : 0;
  return mc;
}

std::vector<u64> load_input(const CommonArgs& a, u64 n_override) {
  if (!a.input_path.empty()) return read_value_file(a.input_path);
  return generate_input(a.gen, n_override, a.seed);
}

void dump_trace(const Schedule& s, const std::string& label) {
  const char* dir = std::getenv("SPMS_TRACE_DIR");
  if (dir == nullptr || *dir == '\0') return;
  struct Row {
    u64 time;
    u32 proc;
    const char* event;
    u32 node;
  };
  std::vector<Row> rows;
  for (u64 k = 0; k < s.kernels.size(); ++k)
    rows.push_back({s.kernel_start[k], s.kernel_proc[k], "run", s.kernels[k].begin});
  for (const StealRec& st : s.steals) rows.push_back({st.time, st.thief, "steal", st.entry});
  for (const UsurpRec& u : s.usurpations) rows.push_back({u.time, u.proc, "usurp", u.join});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
    return x.time != y.time ? x.time < y.time : x.proc < y.proc;
  });
  std::ofstream f(std::filesystem::path(dir) / ("trace-" + label + ".csv"));
  f << "time,proc,event,node\n";
  for (const Row& r : rows)
    f << r.time << ',' << r.proc << ',' << r.event << ',' << r.node << '\n';
}

std::string cell_label(const char* cmd, u64 n, u64 p, u64 sched_seed) {
  return std::string(cmd) + "-n" + std::to_string(n) + "-p" + std::to_string(p) + "-s" +
         std::to_string(sched_seed);
}

// ----- sort ----------------------------------------------------------------

int cmd_sort(const CommonArgs& a, u64 p, u64 sched_seed, const std::string& output_path,
             const std::string& report_path) {
  const std::vector<u64> input = load_input(a, a.n);
  const MeasuredRun run = measure_run(input, make_config(a, p, sched_seed));
  dump_trace(run.schedule, cell_label("sort", run.report.n, p, sched_seed));

  const std::string json = run.report.to_json();
  std::cout << json;
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    f << json;
    SPMS_CHECK(f.good(), "cannot write report to " + report_path);
  }
  if (!output_path.empty()) write_value_file(output_path, run.output);

  if (run.mismatch_at >= 0) {
    std::vector<u64> want = input;
    std::sort(want.begin(), want.end());
    const u64 i = static_cast<u64>(run.mismatch_at);
    std::cerr << "error: output differs from the reference sort at index " << i << ": got "
              << run.output[i] << ", expected " << want[i] << "\n";
    return 1;
  }
  return 0;
}

// ----- sweep ---------------------------------------------------------------

int cmd_sweep(const CommonArgs& a, const std::vector<u64>& ns, const std::vector<u64>& ps,
              const std::vector<u64>& seeds, const std::string& out_path) {
  std::ostringstream table;
  table << RunReport::csv_header();
  bool failed = false;
  for (u64 n : ns) {
    const std::vector<u64> input = load_input(a, n);
    for (u64 p : ps) {
      for (u64 sd : seeds) {
        const std::string label = cell_label("sweep", input.size(), p, sd);
        try {
          const MeasuredRun run = measure_run(input, make_config(a, p, sd));
          dump_trace(run.schedule, label);
          table << run.report.csv_row();
          if (!run.report.sorted_ok) {
            std::cerr << "error: cell " << label << ": output mismatch at index "
                      << run.mismatch_at << "\n";
            failed = true;
          }
        } catch (const SimFault& e) {
          std::cerr << "error: cell " << label << ": " << e.what() << "\n";
          failed = true;
        }
      }
    }
  }
  if (out_path.empty()) {
    std::cout << table.str();
  } else {
    std::ofstream f(out_path);
    f << table.str();
    SPMS_CHECK(f.good(), "cannot write table to " + out_path);
  }
  return failed ? 1 : 0;
}

// ----- verify --------------------------------------------------------------

struct Verdicts {
  bool all_pass = true;
  std::ostringstream out;
  void suite(const std::string& name, bool pass, const std::string& detail) {
    out << name << ": " << (pass ? "pass" : "FAIL") << " (" << detail << ")\n";
    all_pass = all_pass && pass;
  }
  int finish() {
    out << "verify: " << (all_pass ? "pass" : "FAIL") << "\n";
    std::cout << out.str();
    return all_pass ? 0 : 1;
  }
};

int cmd_verify(const CommonArgs& a, u64 p, u64 sched_seed, bool inject) {
  const std::vector<u64> input = load_input(a, a.n);
  Verdicts v;
  if (input.empty()) {
    for (const char* s : {"oracle-equality", "partition-windows", "memory-discipline",
                          "kernel-structure", "sharing-audit"})
      v.suite(s, true, "nothing to run");
    return v.finish();
  }

  ExecOptions opt;
  opt.cache.m_words = a.m_words;
  opt.cache.b_words = a.b_words;
  opt.record = true;
  opt.tr_outer_input_order = inject;
  MeasureConfig mc = make_config(a, p, sched_seed);
  const SortOutcome so = run_sort(input, mc.sort, opt);
  const Dag& d = so.ex.dag();

  {
    std::vector<u64> want = input;
    std::sort(want.begin(), want.end());
    u64 bad = want.size();
    for (u64 i = 0; i < want.size(); ++i)
      if (so.output[i] != want[i]) {
        bad = i;
        break;
      }
    v.suite("oracle-equality", bad == want.size(),
            bad == want.size() ? std::to_string(want.size()) + " keys match the reference sort"
                               : "first mismatch at index " + std::to_string(bad));
  }

  v.suite("partition-windows", so.checks.size_violations == 0,
          "checked=" + std::to_string(so.checks.size_checks) +
              " weak=" + std::to_string(so.checks.size_weak) +
              " violations=" + std::to_string(so.checks.size_violations));

  {
    const auto& viol = so.ex.mem().audit_violations();
    v.suite("memory-discipline", viol.empty(),
            viol.empty() ? "allocation, phase, and write-count rules hold"
                         : "first violation: " + viol.front());
  }

  const Schedule sch = simulate_schedule(d, static_cast<u32>(p), sched_seed, mc.cost);
  dump_trace(sch, cell_label("verify", input.size(), p, sched_seed));
  {
    const u64 S = sch.steals.size();
    std::string detail = "S=" + std::to_string(S) + " U=" + std::to_string(sch.usurpations.size()) +
                         " kernels=" + std::to_string(sch.kernels.size());
    bool ok = sch.kernels.size() == 2 * S + 1 && sch.usurpations.size() <= S;
    for (u64 k = 0; ok && k < sch.kernels.size(); ++k) {
      const Kernel& kr = sch.kernels[k];
      ok = kr.begin < kr.end && (k == 0 ? kr.begin == 0 : kr.begin == sch.kernels[k - 1].end);
      for (u32 nd = kr.begin; ok && nd < kr.end; ++nd)
        ok = sch.node_proc[nd] == sch.kernel_proc[k];
    }
    if (ok) ok = sch.kernels.empty() || sch.kernels.back().end == d.size();
    // Each stolen task must admit an entry-to-join path carrying its own
    // nested steals; steal_path faults if the recorded data cannot.
    try {
      for (u32 t = 1; ok && t < sch.task_count(); ++t) {
        const StealRec& st = sch.steals[t - 1];
        std::vector<StealRec> own;
        for (const StealRec& o : sch.steals)
          if (sch.task_of[o.fork] == t) own.push_back(o);
        steal_path(d, own, st.entry, st.join);
      }
    } catch (const SimFault& e) {
      ok = false;
      detail += std::string("; ") + e.what();
    }
    v.suite("kernel-structure", ok, detail);
  }

  {
    std::vector<u64> us(sch.task_count(), 0);
    for (const UsurpRec& u : sch.usurpations) ++us[u.task];
    const FsOutcome fo = account_false_sharing(d, so.ex.mem(), opt.cache, sch.plan(), us);
    const SliceAudit sa = audit_disjoint_slices(d, a.b_words);
    const bool f_zero_ok = !sch.steals.empty() || fo.fs.f_total() == 0;
    const bool ok = fo.fs.stack_audit_violations == 0 &&
                    fo.replay.walk.misalign_violations == 0 && sa.violations == 0 && f_zero_ok;
    v.suite("sharing-audit", ok,
            "stack_violations=" + std::to_string(fo.fs.stack_audit_violations) +
                " misalign_violations=" + std::to_string(fo.replay.walk.misalign_violations) +
                " slice_violations=" + std::to_string(sa.violations) +
                " slice_overlap_max=" + std::to_string(sa.overlap_max) +
                " F=" + std::to_string(fo.fs.f_total()));
  }

  return v.finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instrumented multiway-mergesort simulator: sorts under a simulated "
               "block-structured memory and reports work, span, cache, steal, and "
               "sharing measurements."};
  app.require_subcommand(1);

  CommonArgs sort_args;
  u64 sort_p = 1, sort_sched_seed = 1;
  std::string output_path, report_path;
  CLI::App* sort_cmd = app.add_subcommand("sort", "run one measured sort");
  add_common(sort_cmd, sort_args);
  sort_cmd->add_option("--p", sort_p, "simulated processors")->capture_default_str();
  sort_cmd->add_option("--sched-seed", sort_sched_seed, "scheduler seed")->capture_default_str();
  sort_cmd->add_option("--output", output_path, "write sorted keys to a .bin or .txt file");
  sort_cmd->add_option("--report", report_path, "also write the JSON report to a file");

  CommonArgs sweep_args;
  std::vector<u64> sweep_ns{1 << 12}, sweep_ps{1}, sweep_seeds{1};
  std::string table_path;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a (n, p, seed) grid; CSV on stdout");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--n-list", sweep_ns, "grid of input sizes")->capture_default_str();
  sweep_cmd->add_option("--p-list", sweep_ps, "grid of processor counts")->capture_default_str();
  sweep_cmd->add_option("--seeds", sweep_seeds, "grid of scheduler seeds")->capture_default_str();
  sweep_cmd->add_option("--out", table_path, "write the CSV table to a file instead of stdout");

  CommonArgs verify_args;
  verify_args.n = 20000;
  u64 verify_p = 4, verify_sched_seed = 1;
  bool inject = false;
  CLI::App* verify_cmd = app.add_subcommand("verify", "run the invariant suites");
  add_common(verify_cmd, verify_args);
  verify_cmd->add_option("--p", verify_p, "simulated processors")->capture_default_str();
  verify_cmd->add_option("--sched-seed", verify_sched_seed, "scheduler seed")
      ->capture_default_str();
  verify_cmd->add_flag("--inject-tr-fault", inject,
                       "drive redistribution leaves in input order; the sharing audit "
                       "is expected to fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const CommonArgs& common = sort_cmd->parsed()    ? sort_args
                             : sweep_cmd->parsed() ? sweep_args
                                                   : verify_args;
  const u64 p_for_check = sort_cmd->parsed()     ? sort_p
                          : verify_cmd->parsed() ? verify_p
                                                 : *std::min_element(sweep_ps.begin(), sweep_ps.end());
  if (const std::string err = config_error(common, p_for_check); !err.empty()) {
    std::cerr << "error: " << err << "\n";
    return 2;
  }
  if (!common.input_path.empty() &&
      (!(common.input_path.ends_with(".bin") || common.input_path.ends_with(".txt")) ||
       !std::filesystem::exists(common.input_path))) {
    std::cerr << "error: input must be an existing .bin or .txt file: " << common.input_path
              << "\n";
    return 2;
  }

  try {
    if (sort_cmd->parsed()) return cmd_sort(sort_args, sort_p, sort_sched_seed, output_path, report_path);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, sweep_ns, sweep_ps, sweep_seeds, table_path);
    return cmd_verify(verify_args, verify_p, verify_sched_seed, inject);
  } catch (const SimFault& e) {
    // A fault this far in means a structural invariant broke mid-run.
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
