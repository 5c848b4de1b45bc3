#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "test_support.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using encattack::testing::TempDir;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& args, const fs::path& stderr_file = "/dev/null") {
  const std::string cmd = std::string(ENCATTACK_CLI_PATH) + " " + args + " 2>" + stderr_file.string();
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kTinyAttack = R"({
  "pairs": {"num_encoders": 16, "images_per_encoder": 20},
  "similarity": {"hidden": [64, 64], "embedding_width": 32, "epochs": 3,
                 "heldout_encoders": 6, "heldout_images_per_encoder": 20, "heldout_pairs": 2000},
  "extraction": {"steps": 300}
})";

// gen + challenge of size n into dir/{data,bundle,bundle_solution}.
void make_bundle(const fs::path& dir, int n) {
  ASSERT_EQ(run("gen --count " + std::to_string(n) + " --seed 3 --out " + (dir / "data").string()).exit_code, 0);
  ASSERT_EQ(run("challenge --dataset " + (dir / "data").string() + " --n " + std::to_string(n) +
                " --seed 4 --out " + (dir / "bundle").string())
                .exit_code,
            0);
}

}  // namespace

TEST(Cli, EndToEndAtTwenty) {
  TempDir dir;
  make_bundle(dir.path(), 20);
  EXPECT_TRUE(fs::exists(dir / "bundle_solution" / "solution.json"));
  EXPECT_FALSE(fs::exists(dir / "bundle" / "solution.json"));
  EXPECT_FALSE(json::parse(slurp(dir / "bundle" / "run.json")).at("config").contains("seed"));
  write_file(dir / "attack.json", kTinyAttack);
  const RunResult a = run("attack --bundle " + (dir / "bundle").string() + " --config " +
                          (dir / "attack.json").string() + " --seed 5 --out " + (dir / "attack").string());
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(json::parse(a.out).at("n"), 20);
  for (const char* f : {"guess.json", "report.json", "timings.json", "run.json"}) {
    EXPECT_TRUE(fs::exists(dir / "attack" / f)) << f;
  }
  const RunResult s = run("score --guess " + (dir / "attack" / "guess.json").string() + " --solution " +
                          (dir / "bundle_solution").string() + " --out " + (dir / "score").string());
  ASSERT_EQ(s.exit_code, 0);
  const json score = json::parse(slurp(dir / "score" / "score.json"));
  EXPECT_EQ(score.at("n"), 20);
  EXPECT_GE(score.at("score").get<int>(), 15);
  const json rec = json::parse(slurp(dir / "score" / "run.json"));
  EXPECT_EQ(rec.at("format"), "encattack.run/1");
  EXPECT_EQ(rec.at("inputs").at("guess").get<std::string>().size(), 40u);
}

TEST(Cli, AttackIsByteDeterministicAndIgnoresTheSolutionDir) {
  TempDir dir;
  make_bundle(dir.path(), 8);
  write_file(dir / "attack.json", kTinyAttack);
  const std::string base = "attack --bundle " + (dir / "bundle").string() + " --config " +
                           (dir / "attack.json").string() + " --seed 6 --out ";
  ASSERT_EQ(run(base + (dir / "a1").string()).exit_code, 0);
  fs::rename(dir / "bundle_solution", dir / "elsewhere");
  ASSERT_EQ(run(base + (dir / "a2").string() + " --threads 4").exit_code, 0);
  // Only the recorded thread count may differ.
  json r1 = json::parse(slurp(dir / "a1" / "report.json"));
  json r2 = json::parse(slurp(dir / "a2" / "report.json"));
  EXPECT_EQ(r2.at("config").at("threads"), 4);
  r2["config"]["threads"] = 1;
  EXPECT_EQ(r1.dump(), r2.dump());
  EXPECT_EQ(slurp(dir / "a1" / "guess.json"), slurp(dir / "a2" / "guess.json"));
}

TEST(Cli, RefusesBundleHoldingTheSolution) {
  TempDir dir;
  make_bundle(dir.path(), 4);
  fs::copy_file(dir / "bundle_solution" / "solution.json", dir / "bundle" / "solution.json");
  const RunResult r = run("attack --bundle " + (dir / "bundle").string() + " --out " + (dir / "a").string(),
                          dir / "err.txt");
  EXPECT_EQ(r.exit_code, 7);
  const json err = json::parse(slurp(dir / "err.txt")).at("error");
  EXPECT_EQ(err.at("kind"), "protocol");
  EXPECT_EQ(err.at("code"), 7);
  EXPECT_FALSE(fs::exists(dir / "a" / "guess.json"));
}

TEST(Cli, NonBijectiveGuessIsValidationError) {
  TempDir dir;
  make_bundle(dir.path(), 3);
  write_file(dir / "guess.json", R"({"format": "encattack.guess/1", "guess": [0, 0, 1]})");
  const RunResult r = run("score --guess " + (dir / "guess.json").string() + " --solution " +
                          (dir / "bundle_solution").string() + " --out " + (dir / "s").string());
  EXPECT_EQ(r.exit_code, 4);
}

TEST(Cli, ErrorsMapToExitCodes) {
  TempDir dir;
  ASSERT_EQ(run("gen --count 0 --out " + (dir / "empty").string()).exit_code, 0);
  EXPECT_EQ(json::parse(slurp(dir / "empty" / "images.json")).at("count"), 0);
  EXPECT_EQ(run("gen --count 2 --style sketch --out " + (dir / "g").string()).exit_code, 2);
  EXPECT_EQ(run("gen").exit_code, 2);
  write_file(dir / "bad.json", R"({"count": 3, "colour": "red"})");
  EXPECT_EQ(run("gen --config " + (dir / "bad.json").string() + " --out " + (dir / "g").string()).exit_code, 9);
  EXPECT_EQ(run("challenge --dataset " + (dir / "missing").string() + " --out " + (dir / "c").string()).exit_code,
            8);
}

TEST(Cli, GenIsSeedDeterministic) {
  TempDir dir;
  ASSERT_EQ(run("gen --count 5 --seed 9 --out " + (dir / "a").string()).exit_code, 0);
  ASSERT_EQ(run("gen --count 5 --seed 9 --out " + (dir / "b").string()).exit_code, 0);
  EXPECT_EQ(slurp(dir / "a" / "images.bin"), slurp(dir / "b" / "images.bin"));
}

TEST(Cli, TheoryCommandsReportJson) {
  TempDir dir;
  const RunResult nia = run("theory nia --trials 2000 --seed 1 --out " + (dir / "nia").string());
  ASSERT_EQ(nia.exit_code, 0);
  EXPECT_TRUE(fs::exists(dir / "nia" / "result.json"));
  write_file(dir / "c2.json", R"({"tag_bits": [64, 256], "trials": 5, "count": 16})");
  const RunResult c2 =
      run("theory challenge2 --config " + (dir / "c2.json").string() + " --out " + (dir / "c2").string());
  ASSERT_EQ(c2.exit_code, 0);
  EXPECT_TRUE(json::parse(slurp(dir / "c2" / "result.json")).contains("non_increasing"));
}
