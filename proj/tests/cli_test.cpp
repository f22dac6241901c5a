#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliRun {
  int status = -1;
  std::string out;
  json summary;
};

CliRun pamsim(const std::string& args) {
  const std::string cmd = std::string(PAMSIM_CLI_PATH) + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) r.out += buf.data();
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::istringstream lines(r.out);
  std::string line, last;
  while (std::getline(lines, line)) {
    if (!line.empty()) last = line;
  }
  r.summary = json::parse(last, nullptr, false);
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("pamsim_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }
  fs::path dir_;
};

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(pamsim("badcmd").status, 1);
  EXPECT_EQ(pamsim("").status, 1);
  EXPECT_EQ(pamsim("sysid --dof 1").status, 1);
  EXPECT_EQ(pamsim("sysid --dof 5 --out " + path("x")).status, 1);
  EXPECT_EQ(pamsim("forcemap --bogus").status, 1);
  EXPECT_EQ(pamsim("--help").status, 0);
}

TEST_F(CliTest, SysidIsDeterministic) {
  const CliRun a = pamsim("sysid --dof 1 --seed 7 --out " + path("d"));
  const CliRun b = pamsim("sysid --dof 1 --seed 7 --out " + path("d"));
  ASSERT_EQ(a.status, 0) << a.out;
  ASSERT_EQ(b.status, 0);
  ASSERT_TRUE(a.summary.is_object());
  json ja = a.summary, jb = b.summary;
  EXPECT_GE(ja["duration_s"].get<double>(), 0.0);
  ja.erase("duration_s");
  jb.erase("duration_s");
  EXPECT_EQ(ja, jb);
  EXPECT_EQ(ja["command"], "sysid");
  EXPECT_EQ(ja["seed"], 7);
  EXPECT_EQ(ja["exit_status"], 0);
  EXPECT_EQ(ja["config_hash"], "cbf29ce484222325");
  EXPECT_EQ(ja["outputs"].size(), 11u);
  EXPECT_TRUE(fs::exists(path("d/bla.csv")));
  EXPECT_TRUE(fs::exists(path("d/realization_09.pamd")));

  std::ifstream csv(path("d/bla.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 101u);

  const CliRun c = pamsim("sysid --dof 1 --seed 8 --out " + path("e"));
  std::ifstream x(path("d/bla.csv")), y(path("e/bla.csv"));
  const std::string sx((std::istreambuf_iterator<char>(x)), {}), sy((std::istreambuf_iterator<char>(y)), {});
  EXPECT_NE(sx, sy);
}

TEST_F(CliTest, ForceMapGrid) {
  const CliRun r = pamsim("forcemap --velocities 0.1:1.9:10 --out " + path("m.csv"));
  ASSERT_EQ(r.status, 0) << r.out;
  std::ifstream in(path("m.csv"));
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "condition,body_part,velocity,peak_force,pain_threshold,exceeds");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 100u);
  EXPECT_EQ(r.summary["details"]["rows"], 100);
}

TEST_F(CliTest, LongrunThenStats) {
  const std::string cfg = write("short.cfg",
                                "longrun.multisine_duration = 1\n"
                                "longrun.reset_dwell = 0.2\n"
                                "longrun.slow_dwell = 0.1\n"
                                "longrun.fast_dwell = 0.02\n");
  const CliRun lr = pamsim("longrun --config " + cfg + " --episodes 3 --seed 4 --out " + path("runs"));
  ASSERT_EQ(lr.status, 0) << lr.out;
  EXPECT_EQ(lr.summary["details"]["episodes"], 3);
  EXPECT_TRUE(fs::exists(path("runs/episode_000002.pamd")));
  EXPECT_TRUE(fs::exists(path("runs/episodes.csv")));

  const CliRun st = pamsim("stats --config " + cfg + " --in " + path("runs") + " --window 2 --out " + path("s.csv"));
  ASSERT_EQ(st.status, 0) << st.out;
  std::ifstream in(path("s.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3u);

  const CliRun few = pamsim("stats --config " + cfg + " --in " + path("runs") + " --out " + path("t.csv"));
  EXPECT_EQ(few.status, 2);
  EXPECT_EQ(few.summary["exit_status"], 2);
  EXPECT_TRUE(few.summary.contains("error"));
}

TEST_F(CliTest, BadConfigIsRuntimeError) {
  const std::string cfg = write("bad.cfg", "muscle.colour = red\n");
  const CliRun r = pamsim("forcemap --config " + cfg + " --out " + path("m.csv"));
  EXPECT_EQ(r.status, 2);
  EXPECT_TRUE(r.summary["config_hash"].is_null());
}

TEST_F(CliTest, ScriptedServe) {
  const std::string script = write("s.txt", "0 pressure 3 2 3 2 3 2 3 2\nend 100\n");
  const CliRun r = pamsim("serve --bind 127.0.0.1:0 --pacing unpaced --script " + script);
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(r.summary["details"]["ticks"], 100);
}

TEST_F(CliTest, ReplayUnpaced) {
  const std::string cfg = write("short.cfg",
                                "longrun.multisine_duration = 0.2\n"
                                "longrun.reset_dwell = 0.02\n"
                                "longrun.slow_dwell = 0.02\n"
                                "longrun.fast_dwell = 0.02\n");
  ASSERT_EQ(pamsim("longrun --config " + cfg + " --out " + path("r")).status, 0);
  const CliRun r = pamsim("replay --pacing unpaced --to 127.0.0.1:9 --in " + path("r/episode_000000.pamd"));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(r.summary["details"]["records"], 100 + 30 + 40 + 40);
}

}  // namespace
