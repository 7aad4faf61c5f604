#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "darc/domains.hpp"
#include "darc/mdp.hpp"

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("darc_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args, const fs::path& root) {
  const std::string cmd = "DARC_OUTPUT_ROOT='" + root.string() + "' '" DARC_CLI "' " + args +
                          " > '" + (root / "stdout.txt").string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

TEST(Cli, ConfigErrorExitsOne) {
  const fs::path d = scratch("config");
  write(d / "bad.ini", "[darc]\ntarget_collect_period = 0\n");
  EXPECT_EQ(run("run '" + (d / "bad.ini").string() + "'", d), 1);
  write(d / "typo.ini", "kinds = darc\n");
  EXPECT_EQ(run("run '" + (d / "typo.ini").string() + "'", d), 1);
  EXPECT_EQ(run("run '" + (d / "missing.ini").string() + "'", d), 1);
  EXPECT_EQ(run("frobnicate", d), 1);
}

TEST(Cli, RunWritesUnderOutputRoot) {
  const fs::path d = scratch("run");
  write(d / "small.ini",
        "seeds = 0\noutput_dir = out\n[darc]\nnum_iterations = 30\neval_every = 10\n"
        "eval_episodes = 5\n");
  EXPECT_EQ(run("run '" + (d / "small.ini").string() + "'", d), 0);
  EXPECT_TRUE(fs::exists(d / "out" / "aggregate.csv"));
  EXPECT_TRUE(fs::exists(d / "out" / "seed_0.csv"));
  EXPECT_TRUE(fs::exists(d / "out" / "config.ini"));
}

TEST(Cli, TheoryPasses) {
  const fs::path d = scratch("theory");
  EXPECT_EQ(run("theory --instances 10", d), 0);
  EXPECT_TRUE(fs::exists(d / "theory" / "theory_report.csv"));
}

TEST(Cli, ValidateMdpFiles) {
  const fs::path d = scratch("validate");
  darc::DomainPair pair = darc::build_wall_gridworld(darc::GridworldSpec{});
  write(d / "source.mdp", darc::write_mdp(pair.source));
  write(d / "target.mdp", darc::write_mdp(pair.target));
  EXPECT_EQ(run("validate '" + (d / "source.mdp").string() + "' '" + (d / "target.mdp").string() + "'", d), 0);
  // the reverse direction puts source-only outcomes in the "target"
  darc::TabularMDP broken = pair.source;
  broken.transition[0] += 0.5;
  write(d / "broken.mdp", darc::write_mdp(broken));
  EXPECT_EQ(run("validate '" + (d / "broken.mdp").string() + "'", d), 2);
  EXPECT_EQ(run("validate '" + (d / "target.mdp").string() + "' '" + (d / "source.mdp").string() + "'", d), 2);
  write(d / "junk.mdp", "not an mdp\n");
  EXPECT_EQ(run("validate '" + (d / "junk.mdp").string() + "'", d), 1);
}

TEST(Cli, PlotInlineSpec) {
  const fs::path d = scratch("plot");
  write(d / "in.csv", "x,y\n0,1\n1,2\n");
  EXPECT_EQ(run("plot '" + (d / "in.csv").string() + "' 'x=x;y=y'", d), 0);
  EXPECT_TRUE(fs::exists(d / "in.svg"));
  EXPECT_EQ(run("plot '" + (d / "in.csv").string() + "' 'x=x;y=z'", d), 1);
}

}  // namespace
