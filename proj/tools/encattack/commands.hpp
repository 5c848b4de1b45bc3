#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace encattack::cli {

struct Common {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  unsigned threads = 1;
};

struct GenOptions {
  std::optional<std::size_t> count;
  std::optional<std::string> style;
  std::optional<std::filesystem::path> import_dir;
};

struct ChallengeOptions {
  std::filesystem::path dataset;
  std::optional<std::size_t> n;
  std::optional<std::filesystem::path> solution_out;  // default: <out>_solution
};

struct AttackOptions {
  std::filesystem::path bundle;
  bool allow_oracle = false;
  std::optional<std::filesystem::path> csv_dir;
};

struct ScoreOptions {
  std::filesystem::path guess;
  std::filesystem::path solution;
};

struct TheoryOptions {
  std::string game;  // nia, cia, pred or challenge2
  std::optional<std::size_t> trials;
};

// Each command writes its artifacts and run.json under common.out and
// prints a one-line JSON summary on stdout.
void cmd_gen(const Common& common, const GenOptions& opt);
void cmd_challenge(const Common& common, const ChallengeOptions& opt);
void cmd_attack(const Common& common, const AttackOptions& opt);
void cmd_score(const Common& common, const ScoreOptions& opt);
void cmd_theory(const Common& common, const TheoryOptions& opt);

}  // namespace encattack::cli
