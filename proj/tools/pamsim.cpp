// pamsim: simulator, control service and analysis front end.
//
// Every command prints a one-line JSON run summary as the last line of
// standard output. Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pamsim/pamsim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

struct CommonOptions {
  std::string config;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("--config", common.config, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "random seed");
}

struct Outcome {
  std::vector<std::string> outputs;
  json details = json::object();
};

Outcome run_serve(const pamsim::Settings& settings, const std::string& bind, const std::string& pacing,
                  const std::string& script, const std::string& emit, std::optional<std::uint64_t> ticks) {
  using namespace pamsim;
  service::ServeOptions opt;
  opt.bind = net::Endpoint::parse(bind);
  opt.sim = settings.sim;
  opt.mode = settings.service_mode;
  opt.pacing = service::parse_pacing(pacing);
  opt.watchdog_ticks = settings.watchdog_ticks();
  if (!script.empty()) opt.script = service::Script::load(script);
  if (!emit.empty()) opt.emit = net::Endpoint::parse(emit);
  opt.max_ticks = ticks;
  service::Service svc(std::move(opt));
  std::cerr << "pamsim serve: listening on " << bind.substr(0, bind.rfind(':')) << ':' << svc.port() << '\n';

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service::ServeReport report;
  std::atomic<bool> done{false};
  std::jthread worker([&](std::stop_token st) {
    report = svc.run(st);
    done.store(true);
  });
  while (!done.load()) {
    if (g_interrupted.load()) worker.request_stop();
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  worker.join();
  Outcome out;
  out.details = {{"ticks", report.ticks},
                 {"packets_sent", report.packets_sent},
                 {"malformed", report.malformed},
                 {"send_failures", report.send_failures},
                 {"port", svc.port()}};
  return out;
}

Outcome run_sysid(const pamsim::Settings& settings, std::uint64_t seed, int dof, const std::string& transport,
                  const fs::path& out_dir) {
  using namespace pamsim;
  auto design = settings.sysid.design();
  design.draw_phases(seed);
  sysid::SessionOptions opt;
  opt.dof = static_cast<std::size_t>(dof - 1);
  opt.sim = settings.sim;
  opt.transport = sysid::parse_transport(transport);
  fs::create_directories(out_dir);
  Outcome out;
  auto write_logs = [&](const std::vector<sysid::RealizationLog>& logs) {
    for (std::size_t l = 0; l < logs.size(); ++l) {
      char name[32];
      std::snprintf(name, sizeof name, "realization_%02zu.pamd", l);
      const auto path = (out_dir / name).string();
      dataset::write(path, logs[l].records);
      out.outputs.push_back(path);
    }
  };
  sysid::SessionResult result;
  try {
    result = sysid::run_sysid_session(opt, design);
  } catch (const sysid::SessionError& e) {
    write_logs(e.partial_logs());
    throw;
  }
  write_logs(result.logs);
  const auto csv = (out_dir / "bla.csv").string();
  sysid::write_summary_csv(csv, result.lines, result.bla);
  out.outputs.push_back(csv);
  double min_snlr = std::numeric_limits<double>::infinity();
  for (double v : result.bla.snlr) min_snlr = std::min(min_snlr, v);
  out.details = {{"dof", dof}, {"lines", result.lines.size()}, {"realizations", design.realizations},
                 {"min_snlr", min_snlr}};
  return out;
}

Outcome run_forcemap(const pamsim::Settings& settings, const std::string& grid_text, const std::string& out_path) {
  using namespace pamsim;
  const auto grid = forcemap::VelocityGrid::parse(grid_text);
  const auto& conditions = forcemap::contact_conditions();
  const auto entries = forcemap::build_force_map(grid.values(), conditions, settings.impact, settings.sim);
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
  forcemap::write_force_map_csv(out_path, entries);
  std::size_t exceeding = 0;
  for (const auto& e : entries) exceeding += e.exceeds_pain_threshold ? 1 : 0;
  Outcome out;
  out.outputs.push_back(out_path);
  out.details = {{"rows", entries.size()}, {"exceeding", exceeding}};
  return out;
}

Outcome run_longrun(const pamsim::Settings& settings, std::uint64_t seed, std::uint64_t episodes,
                    const fs::path& out_dir) {
  using namespace pamsim;
  longrun::RunPlan plan;
  plan.episodes = episodes;
  plan.seed = seed;
  plan.episode = settings.longrun.episode();
  const auto outcome = longrun::run_longrun(plan, settings.sim, out_dir);
  Outcome out;
  out.outputs = outcome.files;
  out.details = {{"episodes", outcome.episodes.size()},
                 {"ticks_per_episode", outcome.episodes.empty() ? 0 : outcome.episodes.front().ticks}};
  return out;
}

Outcome run_stats(const pamsim::Settings& settings, const fs::path& in_dir, std::size_t window,
                  const std::string& out_path) {
  using namespace pamsim;
  const auto layout = longrun::EpisodeLayout::of(settings.longrun.episode());
  const auto finals = longrun::read_snapshots(in_dir, layout);
  const auto st = longrun::repeatability(finals, window);
  if (const auto parent = fs::path(out_path).parent_path(); !parent.empty()) fs::create_directories(parent);
  longrun::write_stats_csv(out_path, st);
  double worst = 0.0;
  for (double v : st.stddev_mean) worst = std::max(worst, v);
  Outcome out;
  out.outputs.push_back(out_path);
  out.details = {{"episodes", finals.size()}, {"window", window}, {"max_std_mean", worst}};
  return out;
}

Outcome run_replay(const pamsim::Settings& settings, const std::string& in_path, const std::string& to,
                   const std::string& pacing) {
  using namespace pamsim;
  const auto data = dataset::read(in_path);
  for (const auto& w : data.warnings) std::cerr << "pamsim replay: warning: " << w << '\n';
  std::signal(SIGINT, on_signal);
  std::stop_source stop;
  std::jthread watcher([&](std::stop_token st) {
    while (!st.stop_requested()) {
      if (g_interrupted.load()) stop.request_stop();
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  });
  const auto sent = service::replay(data, net::Endpoint::parse(to), service::parse_pacing(pacing), settings.sim.muscle,
                                    stop.get_token());
  Outcome out;
  out.details = {{"records", data.records.size()}, {"packets_sent", sent}, {"truncated", data.truncated}};
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pamsim: antagonistic PAM arm simulator, control service and analysis tools"};
  app.require_subcommand(1, 1);
  CommonOptions common;

  auto* serve = app.add_subcommand("serve", "run the UDP control service");
  add_common(serve, common);
  std::string bind = "127.0.0.1:9000", pacing = "realtime", script, emit;
  std::optional<std::uint64_t> ticks;
  serve->add_option("--bind", bind, "host:port to listen on");
  serve->add_option("--pacing", pacing, "realtime or unpaced")->check(CLI::IsMember({"realtime", "unpaced"}));
  serve->add_option("--script", script, "tick-stamped command list for deterministic replay")->check(CLI::ExistingFile);
  serve->add_option("--emit", emit, "additional host:port receiving every state packet");
  serve->add_option("--ticks", ticks, "stop after this many ticks");

  auto* sysid_cmd = app.add_subcommand("sysid", "multisine identification of one joint");
  add_common(sysid_cmd, common);
  int dof = 1;
  std::string sysid_out, transport = "inproc";
  sysid_cmd->add_option("--dof", dof, "joint index 1..4")->required()->check(CLI::Range(1, 4));
  sysid_cmd->add_option("--out", sysid_out, "output directory")->required();
  sysid_cmd->add_option("--transport", transport, "inproc or udp")->check(CLI::IsMember({"inproc", "udp"}));

  auto* fm = app.add_subcommand("forcemap", "collision peak-force map over contact conditions");
  add_common(fm, common);
  std::string velocities = "0.12:1.94:14", fm_out = "map.csv";
  fm->add_option("--velocities", velocities, "velocity grid start:stop:count (m/s)");
  fm->add_option("--out", fm_out, "output CSV");

  auto* lr = app.add_subcommand("longrun", "long-term episode run writing one dataset per episode");
  add_common(lr, common);
  std::uint64_t episodes = 1;
  std::string lr_out;
  lr->add_option("--episodes", episodes, "number of episodes")->check(CLI::PositiveNumber);
  lr->add_option("--out", lr_out, "output directory")->required();

  auto* st = app.add_subcommand("stats", "moving repeatability statistics over a longrun directory");
  add_common(st, common);
  std::string st_in, st_out = "stats.csv";
  std::size_t window = 400;
  st->add_option("--in", st_in, "longrun output directory")->required()->check(CLI::ExistingDirectory);
  st->add_option("--window", window, "moving window in episodes")->check(CLI::Range(2, 1 << 30));
  st->add_option("--out", st_out, "output CSV");

  auto* rp = app.add_subcommand("replay", "re-emit a dataset file as state packets");
  add_common(rp, common);
  std::string rp_in, rp_to = "127.0.0.1:9001", rp_pacing = "realtime";
  rp->add_option("--in", rp_in, "dataset file")->required()->check(CLI::ExistingFile);
  rp->add_option("--to", rp_to, "destination host:port");
  rp->add_option("--pacing", rp_pacing, "realtime or unpaced")->check(CLI::IsMember({"realtime", "unpaced"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "pamsim: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  const auto* chosen = app.get_subcommands().front();
  const std::string command = chosen->get_name();
  const auto started = std::chrono::steady_clock::now();
  json summary = {{"command", command}, {"seed", common.seed}};
  int status = 0;
  try {
    const pamsim::Settings settings = pamsim::load_settings(common.config);
    summary["config_hash"] = settings.config_hash;
    Outcome out;
    if (command == "serve") {
      out = run_serve(settings, bind, pacing, script, emit, ticks);
    } else if (command == "sysid") {
      out = run_sysid(settings, common.seed, dof, transport, sysid_out);
    } else if (command == "forcemap") {
      out = run_forcemap(settings, velocities, fm_out);
    } else if (command == "longrun") {
      out = run_longrun(settings, common.seed, episodes, lr_out);
    } else if (command == "stats") {
      out = run_stats(settings, st_in, window, st_out);
    } else {
      out = run_replay(settings, rp_in, rp_to, rp_pacing);
    }
    summary["outputs"] = out.outputs;
    summary["details"] = out.details;
  } catch (const std::exception& e) {
    std::cerr << "pamsim " << command << ": " << e.what() << '\n';
    summary["error"] = e.what();
    if (!summary.contains("outputs")) summary["outputs"] = json::array();
    status = 2;
  }
  if (!summary.contains("config_hash")) summary["config_hash"] = nullptr;
  summary["duration_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  summary["exit_status"] = status;
  std::cout << summary.dump() << std::endl;
  return status;
}
