// Command-line harness: longitudinal simulation, bench grid runs, memory
// inspection, trace replay, plotting and default-document export.
//
// Exit codes: 0 success, 1 configuration error, 2 invariant breach.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "powerlens/powerlens.hpp"

namespace fs = std::filesystem;
using namespace powerlens;

namespace {

constexpr int kOk = 0;
constexpr int kConfig = 1;
constexpr int kBreach = 2;

struct Toggles {
  bool no_memory = false;
  bool no_pdl = false;
  bool no_feedback = false;
  bool no_multi_agent = false;
  bool adversarial = false;
  double adversarial_rate = 0.2;

  SimToggles get() const {
    SimToggles t;
    t.memory = !no_memory;
    t.pdl = !no_pdl;
    t.feedback = !no_feedback;
    t.multi_agent = !no_multi_agent;
    t.adversarial = adversarial;
    t.adversarial_rate = adversarial_rate;
    return t;
  }
};

void add_toggles(CLI::App* cmd, Toggles& t) {
  cmd->add_flag("--no-memory", t.no_memory, "Disable long-term memory");
  cmd->add_flag("--no-pdl", t.no_pdl, "Disable constraint verification");
  cmd->add_flag("--no-feedback", t.no_feedback, "Disable implicit feedback capture");
  cmd->add_flag("--no-multi-agent", t.no_multi_agent, "Use a single reasoning pass");
  cmd->add_flag("--adversarial", t.adversarial, "Replace a fraction of proposals with shutdown policies");
  cmd->add_option("--adversarial-rate", t.adversarial_rate, "Fraction of adversarial proposals")
      ->check(CLI::Range(0.0, 1.0));
}

void write(const fs::path& p, const std::string& text) { write_text_file(p.string(), text); }

// ---------------------------------------------------------------------------
// sim run

struct SimArgs {
  std::string profile, scenarios, out;
  std::string capabilities, constraints, energy_model;
  std::string backend = "heuristic";
  std::string gateway_config;
  int days = 14;
  std::uint64_t seed = 1;
  Toggles toggles;
};

int sim_run(const SimArgs& a) {
  const CapabilityProfile caps =
      a.capabilities.empty() ? default_capability_profile() : load_capability_file(a.capabilities);
  const ConstraintSet rules =
      a.constraints.empty() ? default_constraint_pack() : load_constraints_file(a.constraints, caps);
  const EnergyModel model =
      a.energy_model.empty() ? default_energy_model() : load_energy_model_file(a.energy_model, caps);
  SimRun run;
  run.seed = a.seed;
  run.days = a.days;
  run.profile = load_profile_file(a.profile, caps);
  run.scenarios = load_scenarios_file(a.scenarios);
  run.toggles = a.toggles.get();
  std::unique_ptr<RemoteBackend> remote;
  if (a.backend == "remote") {
    remote = std::make_unique<RemoteBackend>(load_gateway_config(a.gateway_config), caps, rules);
    run.backend = remote.get();
  }
  const LongitudinalTrace tr = run_days(caps, rules, model, run);

  fs::create_directories(a.out);
  const fs::path out(a.out);
  write(out / "days.csv", days_csv(tr));
  write(out / "cycles.csv", cycles_csv(tr));
  write(out / "confidence.csv", confidence_csv(tr));
  std::ofstream traces(out / "traces.jsonl", std::ios::binary);
  for (const auto& s : tr.sessions)
    for (const auto& c : s.cycles)
      if (c.outcome.trace) traces << to_json(*c.outcome.trace).dump() << "\n";
  for (const auto& [app, page] : tr.pages) persist_page(page, (out / "lpm").string());
  Json repl = Json::array();
  for (const auto& r : tr.replacements)
    repl.push_back({{"day", r.day}, {"app", r.app}, {"signature", r.signature}, {"old", to_json(r.old_pref)}, {"new", to_json(r.new_pref)}});
  const Json summary{{"days", a.days},
                     {"seed", a.seed},
                     {"profile", run.profile.name},
                     {"backend", a.backend},
                     {"cycles", tr.cycles},
                     {"strong_events", tr.strong_events},
                     {"weak_events", tr.weak_events},
                     {"contradictions", tr.contradictions},
                     {"post_violations", tr.post_violations},
                     {"replacements", repl}};
  write(out / "summary.json", canonical_dump(summary));
  std::cout << "simulated " << a.days << " days, " << tr.cycles << " cycles, " << tr.strong_events
            << " strong events -> " << a.out << "\n";
  if (run.toggles.pdl && tr.post_violations > 0) {
    std::cerr << "invariant breach: " << tr.post_violations << " hard predicate failures after execution\n";
    return kBreach;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// bench run

struct BenchArgs {
  std::string grid, baseline = "powerlens", out;
  Toggles toggles;
};

std::vector<BenchConfig> bench_configs(const BenchArgs& a) {
  if (a.baseline == "all") {
    std::vector<BenchConfig> v;
    for (auto b : {Baseline::stock, Baseline::battery_saver, Baseline::rule_based, Baseline::single_agent,
                   Baseline::powerlens})
      v.push_back({b, {}});
    SimToggles t;
    t.memory = false;
    v.push_back({Baseline::powerlens, t});
    t = {};
    t.pdl = false;
    v.push_back({Baseline::powerlens, t});
    t = {};
    t.feedback = false;
    v.push_back({Baseline::powerlens, t});
    t = {};
    t.multi_agent = false;
    v.push_back({Baseline::powerlens, t});
    t = {};
    t.adversarial = true;
    v.push_back({Baseline::powerlens, t});
    t.pdl = false;
    v.push_back({Baseline::powerlens, t});
    return v;
  }
  auto b = parse_baseline(a.baseline);
  if (!b) throw ConfigError("unknown baseline " + a.baseline);
  return {{*b, a.toggles.get()}};
}

int bench_run(const BenchArgs& a) {
  const BenchWorld w = load_bench_world(a.grid);
  const auto grid = build_bench_grid(w.profiles, w.pack, w.spec);
  fs::create_directories(a.out);
  std::vector<BenchReport> reps;
  int rc = kOk;
  for (const auto& cfg : bench_configs(a)) {
    BenchReport rep = run_bench(w, grid, cfg);
    write(fs::path(a.out) / ("instances_" + rep.config + ".csv"), instances_csv(rep));
    std::cout << rep.config << ": n=" << rep.overall.n << " acc=" << rep.overall.acc << " es=" << rep.overall.es
              << " viol_post=" << rep.overall.post.rate() << " ues=" << rep.overall.ues << "\n";
    if (cfg.uses_pipeline() && cfg.pipeline_config().pdl && rep.overall.post.violating > 0) {
      std::cerr << "invariant breach: " << rep.config << " executed " << rep.overall.post.violating
                << " violating actions\n";
      rc = kBreach;
    }
    reps.push_back(std::move(rep));
  }
  write(fs::path(a.out) / "summary.csv", summary_csv(reps));
  return rc;
}

// ---------------------------------------------------------------------------
// memory inspect, replay

int memory_inspect(const std::string& file) {
  Json j;
  try {
    j = read_json_file(file);
  } catch (const Error& e) {
    throw CorruptFileError(e.what());
  }
  LpmPage page;
  try {
    page = page_from_json(j);
  } catch (const Error& e) {
    throw CorruptFileError(file + ": " + e.what());
  }
  std::cout << "app " << page.app << " (version " << page.version << ")\n";
  std::cout << "stable rules: " << page.rules().size() << "\n";
  for (const auto& r : page.rules()) {
    std::cout << "  " << r.key() << "  c=" << r.confidence << "  day " << r.last_update_day << "  ";
    for (const auto& p : r.fragment) std::cout << p.target << to_string(p.cmp) << p.value << " ";
    std::cout << "\n";
  }
  std::cout << "candidates: " << page.candidates.size() << "\n";
  for (const auto& c : page.candidates)
    std::cout << "  " << c.key() << "  c=" << c.confidence << "  " << c.fragment.target << to_string(c.fragment.cmp)
              << c.fragment.value << "\n";
  std::cout << "general profile:";
  for (const auto& [id, v] : page.general) std::cout << " " << id << "=" << v;
  std::cout << "\npending events: " << page.pending.size() << "\n";
  return kOk;
}

int replay(const std::string& file, const std::string& capabilities, const std::string& constraints) {
  const CapabilityProfile caps = capabilities.empty() ? default_capability_profile() : load_capability_file(capabilities);
  const ConstraintSet rules =
      constraints.empty() ? default_constraint_pack() : load_constraints_file(constraints, caps);
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file);
  std::string line;
  long n = 0, bad = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++n;
    CycleTrace t;
    try {
      t = trace_from_json(Json::parse(line));
    } catch (const std::exception& e) {
      throw ConfigError(file + ":" + std::to_string(n) + ": " + e.what());
    }
    const std::string diff = replay_check(t, caps, rules);
    if (!diff.empty()) {
      ++bad;
      std::cerr << "cycle " << t.cycle_id << ": " << diff << "\n";
    }
  }
  std::cout << "replayed " << n << " cycles, " << bad << " mismatches\n";
  return bad == 0 ? kOk : kBreach;
}

// ---------------------------------------------------------------------------
// plots

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
      if (c == '"') quoted = !quoted;
      else if (c == ',' && !quoted) row.push_back(std::move(cell)), cell.clear();
      else cell += c;
    }
    row.push_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

int plots(const std::string& dir) {
  const fs::path d(dir);
  int written = 0;
  if (fs::exists(d / "days.csv") || fs::exists(d / "confidence.csv")) {
    LongitudinalTrace tr;
    for (const auto& r : read_csv(d / "days.csv")) {
      DayStats s;
      s.day = std::stoi(r.at(0));
      s.overrides = std::stoi(r.at(4));
      s.reverts = std::stoi(r.at(5));
      s.system_changes = std::stoi(r.at(6));
      tr.days.push_back(s);
    }
    for (const auto& r : read_csv(d / "confidence.csv")) {
      auto& v = tr.confidence[r.at(0)];
      const auto day = static_cast<std::size_t>(std::stoi(r.at(1)));
      if (v.size() <= day) v.resize(std::max(day + 1, tr.days.size()), -1.0);
      v[day] = std::stod(r.at(2));
    }
    write(d / "adaptation.svg", adaptation_plot(tr));
    write(d / "confidence.svg", confidence_plot(tr));
    written += 2;
  }
  if (fs::exists(d / "summary.csv")) {
    std::vector<BenchReport> reps;
    for (const auto& r : read_csv(d / "summary.csv")) {
      if (reps.empty() || reps.back().config != r.at(0)) {
        reps.emplace_back();
        reps.back().config = r.at(0);
      }
      Aggregate a;
      a.n = std::stoi(r.at(3));
      a.acc = std::stod(r.at(4));
      a.es = std::stod(r.at(5));
      if (r.at(1) == "all") reps.back().overall = a;
      if (r.at(1) == "category")
        if (auto c = parse_app_category(r.at(2))) reps.back().by_category[*c] = a;
    }
    write(d / "ablation_es.svg", ablation_plot(reps, "es"));
    write(d / "ablation_acc.svg", ablation_plot(reps, "acc"));
    written += 2;
    for (const auto& rep : reps) {
      write(d / ("savings_" + rep.config + ".svg"), savings_by_category_plot(rep));
      ++written;
    }
  }
  if (written == 0) throw ConfigError(dir + " holds no simulation or bench output");
  std::cout << "wrote " << written << " plots to " << dir << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware power management engine and simulator"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("sim", "Longitudinal simulation")->require_subcommand(1);
  SimArgs sa;
  auto* sim_run_cmd = sim->add_subcommand("run", "Run a multi-day simulation");
  sim_run_cmd->add_option("--profile", sa.profile, "User profile JSON")->required()->check(CLI::ExistingFile);
  sim_run_cmd->add_option("--scenarios", sa.scenarios, "Scenario pack JSON")->required()->check(CLI::ExistingFile);
  sim_run_cmd->add_option("--days", sa.days, "Days to simulate")->check(CLI::Range(1, 3650));
  sim_run_cmd->add_option("--seed", sa.seed, "RNG seed");
  sim_run_cmd->add_option("--out", sa.out, "Output directory")->required();
  sim_run_cmd->add_option("--capabilities", sa.capabilities, "Capability profile JSON")->check(CLI::ExistingFile);
  sim_run_cmd->add_option("--constraints", sa.constraints, "Constraint pack JSON")->check(CLI::ExistingFile);
  sim_run_cmd->add_option("--energy-model", sa.energy_model, "Energy model JSON")->check(CLI::ExistingFile);
  sim_run_cmd->add_option("--backend", sa.backend, "Reasoner backend")
      ->check(CLI::IsMember({"heuristic", "remote"}));
  sim_run_cmd->add_option("--gateway-config", sa.gateway_config, "Gateway config JSON for the remote backend");
  add_toggles(sim_run_cmd, sa.toggles);

  auto* bench = app.add_subcommand("bench", "Benchmark grid")->require_subcommand(1);
  BenchArgs ba;
  auto* bench_run_cmd = bench->add_subcommand("run", "Run a baseline over the grid");
  bench_run_cmd->add_option("--grid", ba.grid, "Grid JSON")->required()->check(CLI::ExistingFile);
  bench_run_cmd->add_option("--baseline", ba.baseline,
                            "stock|battery_saver|rule_based|single_agent|powerlens|all");
  bench_run_cmd->add_option("--out", ba.out, "Output directory")->required();
  add_toggles(bench_run_cmd, ba.toggles);

  auto* memory = app.add_subcommand("memory", "Long-term memory tools")->require_subcommand(1);
  std::string page_file_arg;
  auto* inspect = memory->add_subcommand("inspect", "Print an LPM page");
  inspect->add_option("file", page_file_arg, "Page JSON")->required();

  std::string trace_file, replay_caps, replay_rules;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the deterministic core of recorded cycles");
  replay_cmd->add_option("trace", trace_file, "Cycle trace JSONL")->required();
  replay_cmd->add_option("--capabilities", replay_caps, "Capability profile JSON")->check(CLI::ExistingFile);
  replay_cmd->add_option("--constraints", replay_rules, "Constraint pack JSON")->check(CLI::ExistingFile);

  std::string plot_dir;
  auto* plots_cmd = app.add_subcommand("plots", "Render SVG charts from a sim or bench output directory");
  plots_cmd->add_option("dir", plot_dir, "Output directory")->required()->check(CLI::ExistingDirectory);

  std::string export_dir = "data";
  auto* export_cmd = app.add_subcommand("export-defaults", "Write the shipped configuration documents");
  export_cmd->add_option("--out", export_dir, "Target directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (sim_run_cmd->parsed()) return sim_run(sa);
    if (bench_run_cmd->parsed()) return bench_run(ba);
    if (inspect->parsed()) return memory_inspect(page_file_arg);
    if (replay_cmd->parsed()) return replay(trace_file, replay_caps, replay_rules);
    if (plots_cmd->parsed()) return plots(plot_dir);
    if (export_cmd->parsed()) {
      export_defaults(export_dir);
      std::cout << "wrote defaults to " << export_dir << "\n";
      return kOk;
    }
  } catch (const ContradictionError& e) {
    std::cerr << "invariant breach: " << e.what() << "\n";
    return kBreach;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kConfig;
}
