#pragma once

// Long-term repeatability runs. Each episode plays a random multisine on all
// joints, an open-loop reset (medium → minimum → medium pressures), and
// two sweeps through fixed target-pressure sets: one slow, one fast. The
// joint position at the end of the reset is the repeatability sample.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "pamsim/dataset.hpp"
#include "pamsim/error.hpp"
#include "pamsim/simulator.hpp"
#include "pamsim/sysid.hpp"

namespace pamsim::longrun {

using PressureSet = std::array<double, kNumMuscles>;
using JointVector = std::array<double, kNumJoints>;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t episode) {
  return splitmix64(run_seed ^ splitmix64(episode));
}

struct EpisodeSpec {
  std::uint64_t seed = 0;
  // One realization per joint; lines must stay at or below 10 Hz.
  sysid::ExcitationDesign multisine;
  double multisine_duration = 30.0;
  double reset_dwell = 2.0;
  std::vector<PressureSet> fixed_sets_slow;
  double slow_dwell = 3.0;
  std::vector<PressureSet> fixed_sets_fast;
  double fast_dwell = 0.5;

  static std::vector<PressureSet> default_fixed_sets() {
    return {
        PressureSet{3.5, 1.5, 3.5, 1.5, 3.5, 1.5, 3.5, 1.5},
        PressureSet{1.5, 3.5, 1.5, 3.5, 1.5, 3.5, 1.5, 3.5},
        PressureSet{4.0, 1.0, 1.0, 4.0, 4.0, 1.0, 1.0, 4.0},
        PressureSet{2.5, 2.5, 3.0, 2.0, 2.0, 3.0, 2.5, 2.5},
    };
  }

  static EpisodeSpec standard(std::uint64_t seed) {
    EpisodeSpec s;
    s.seed = seed;
    s.multisine = sysid::ExcitationDesign::standard();
    s.multisine.realizations = kNumJoints;
    s.multisine.periods = 3;
    s.multisine.discard = 0;
    s.multisine.draw_phases(seed);
    s.fixed_sets_slow = default_fixed_sets();
    s.fixed_sets_fast = default_fixed_sets();
    return s;
  }

  void validate() const {
    multisine.validate();
    if (multisine.realizations != kNumJoints) throw Error(ErrorKind::Config, "episode multisine needs one realization per joint");
    for (double f : multisine.lines) {
      if (f > 10.0) throw Error(ErrorKind::Config, "episode multisine lines must be <= 10 Hz");
    }
    for (double d : {multisine_duration, reset_dwell, slow_dwell, fast_dwell}) {
      if (!(d >= 0) || std::abs(d * kSampleRate - std::round(d * kSampleRate)) > 1e-9) {
        throw Error(ErrorKind::Config, "episode durations must be non-negative multiples of 2 ms");
      }
    }
  }
};

inline std::uint64_t to_ticks(double seconds) { return static_cast<std::uint64_t>(std::llround(seconds * kSampleRate)); }

struct EpisodeLayout {
  std::uint64_t multisine_ticks = 0;
  std::uint64_t reset_ticks = 0;
  std::uint64_t slow_ticks = 0;
  std::uint64_t fast_ticks = 0;

  static EpisodeLayout of(const EpisodeSpec& s) {
    EpisodeLayout l;
    l.multisine_ticks = to_ticks(s.multisine_duration);
    l.reset_ticks = 3 * to_ticks(s.reset_dwell);
    l.slow_ticks = s.fixed_sets_slow.size() * to_ticks(s.slow_dwell);
    l.fast_ticks = s.fixed_sets_fast.size() * to_ticks(s.fast_dwell);
    return l;
  }

  std::uint64_t total() const { return multisine_ticks + reset_ticks + slow_ticks + fast_ticks; }
  // Zero-based record index of the repeatability snapshot within the episode.
  std::uint64_t snapshot_index() const { return multisine_ticks + reset_ticks - 1; }
};

struct EpisodeSummary {
  JointVector final_position{};
  std::uint64_t ticks = 0;
};

// Open-loop: commands never read the joint state.
inline EpisodeSummary run_episode(const EpisodeSpec& spec, Session& session, dataset::Writer& recorder) {
  spec.validate();
  if (spec.reset_dwell <= 0) throw Error(ErrorKind::Config, "reset dwell must be positive");
  const SimConfig& sim = session.config();
  EpisodeSummary summary;
  auto advance = [&](const Command& c) {
    try {
      session.advance(c);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::IntegrationDiverged) recorder.write_error_marker();
      throw;
    }
    recorder.append(session.state());
    ++summary.ticks;
  };

  std::vector<std::vector<double>> periods;
  for (std::size_t j = 0; j < kNumJoints; ++j) periods.push_back(sysid::multisine_period(spec.multisine, j, 1));
  const std::uint64_t ms_ticks = to_ticks(spec.multisine_duration);
  for (std::uint64_t n = 0; n < ms_ticks; ++n) {
    Command c = Command::uniform_pressure(sim.medium_pressure);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double u = periods[j][n % periods[j].size()];
      c.targets[2 * j] = sim.medium_pressure + 0.5 * u;
      c.targets[2 * j + 1] = sim.medium_pressure - 0.5 * u;
    }
    advance(c);
  }

  const std::uint64_t dwell = to_ticks(spec.reset_dwell);
  for (double level : {sim.medium_pressure, sim.minimum_pressure, sim.medium_pressure}) {
    for (std::uint64_t n = 0; n < dwell; ++n) advance(Command::uniform_pressure(level));
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) summary.final_position[j] = session.state().joints[j].angle;

  const auto sweep = [&](const std::vector<PressureSet>& sets, double seconds) {
    const std::uint64_t ticks = to_ticks(seconds);
    for (const auto& set : sets) {
      for (std::uint64_t n = 0; n < ticks; ++n) advance(Command::pressures(set));
    }
  };
  sweep(spec.fixed_sets_slow, spec.slow_dwell);
  sweep(spec.fixed_sets_fast, spec.fast_dwell);
  recorder.flush();
  return summary;
}

inline std::string episode_file_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "episode_%06llu.pamd", static_cast<unsigned long long>(index));
  return buf;
}

struct RunPlan {
  std::uint64_t episodes = 1;
  std::uint64_t seed = 0;
  // Template for every episode; its seed and multisine phases are replaced
  // per episode.
  EpisodeSpec episode = EpisodeSpec::standard(0);
};

struct RunOutcome {
  std::vector<EpisodeSummary> episodes;
  std::vector<std::string> files;
};

// One continuous session across all episodes, one dataset file per episode,
// plus episodes.csv with the reset snapshots.
inline RunOutcome run_longrun(const RunPlan& plan, const SimConfig& sim, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  Session session(sim);
  RunOutcome outcome;
  for (std::uint64_t e = 0; e < plan.episodes; ++e) {
    EpisodeSpec spec = plan.episode;
    spec.seed = episode_seed(plan.seed, e);
    spec.multisine.draw_phases(spec.seed);
    const auto path = (out_dir / episode_file_name(e)).string();
    dataset::Writer writer(path);
    outcome.episodes.push_back(run_episode(spec, session, writer));
    outcome.files.push_back(path);
  }
  std::ofstream idx(out_dir / "episodes.csv");
  idx << "episode,ticks,q0,q1,q2,q3\n";
  for (std::size_t e = 0; e < outcome.episodes.size(); ++e) {
    idx << e << ',' << outcome.episodes[e].ticks;
    for (double q : outcome.episodes[e].final_position) idx << ',' << sysid::format_number(q);
    idx << '\n';
  }
  if (!idx) throw Error(ErrorKind::Io, "cannot write episodes.csv");
  outcome.files.push_back((out_dir / "episodes.csv").string());
  return outcome;
}

struct RepeatabilityStats {
  std::size_t window = 0;
  // Entry i covers episodes [i, i + window − 1].
  std::vector<JointVector> mean_rel;
  std::vector<JointVector> stddev;
  // stddev averaged over the joints.
  std::vector<double> stddev_mean;
  JointVector initial_mean{};
};

// Moving mean relative to the first window's mean, and moving sample
// standard deviation (n − 1 denominator).
inline RepeatabilityStats repeatability(std::span<const JointVector> finals, std::size_t window = 400) {
  if (window < 2) throw Error(ErrorKind::Domain, "window must be >= 2");
  if (finals.size() < window) {
    throw Error(ErrorKind::InsufficientData, "need at least " + std::to_string(window) + " episodes, got " +
                                                 std::to_string(finals.size()));
  }
  RepeatabilityStats st;
  st.window = window;
  const std::size_t count = finals.size() - window + 1;
  for (std::size_t i = 0; i < count; ++i) {
    JointVector mean{}, sd{};
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      // Shifted by the window's first sample so constant data stays exact.
      const double origin = finals[i][j];
      double sum = 0.0;
      for (std::size_t e = i; e < i + window; ++e) sum += finals[e][j] - origin;
      mean[j] = origin + sum / static_cast<double>(window);
      double ss = 0.0;
      for (std::size_t e = i; e < i + window; ++e) ss += (finals[e][j] - mean[j]) * (finals[e][j] - mean[j]);
      sd[j] = std::sqrt(ss / static_cast<double>(window - 1));
    }
    if (i == 0) st.initial_mean = mean;
    JointVector rel{};
    double sd_sum = 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      rel[j] = mean[j] - st.initial_mean[j];
      sd_sum += sd[j];
    }
    st.mean_rel.push_back(rel);
    st.stddev.push_back(sd);
    st.stddev_mean.push_back(sd_sum / kNumJoints);
  }
  return st;
}

// Reset snapshots recovered from episode files in `dir`, in file-name order.
inline std::vector<JointVector> read_snapshots(const std::filesystem::path& dir, const EpisodeLayout& layout) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pamd") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<JointVector> out;
  for (const auto& f : files) {
    const auto contents = dataset::read(f.string());
    if (contents.records.size() <= layout.snapshot_index()) {
      throw Error(ErrorKind::Format, f.string() + " ends before the reset snapshot");
    }
    const auto& r = contents.records[layout.snapshot_index()];
    JointVector q{};
    for (std::size_t j = 0; j < kNumJoints; ++j) q[j] = r.joint_pos[j];
    out.push_back(q);
  }
  return out;
}

inline void write_stats_csv(const std::string& path, const RepeatabilityStats& st) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "episode,mean_rel_q0,mean_rel_q1,mean_rel_q2,mean_rel_q3,std_q0,std_q1,std_q2,std_q3,std_mean\n";
  for (std::size_t i = 0; i < st.mean_rel.size(); ++i) {
    out << i + st.window - 1;
    for (double v : st.mean_rel[i]) out << ',' << sysid::format_number(v);
    for (double v : st.stddev[i]) out << ',' << sysid::format_number(v);
    out << ',' << sysid::format_number(st.stddev_mean[i]) << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write to " + path + " failed");
}

}  // namespace pamsim::longrun
