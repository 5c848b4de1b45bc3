#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "encattack/error.hpp"
#include "json.hpp"

namespace {

int report_error(std::string_view kind, int code, const std::string& message) {
  const nlohmann::json err = {{"error", {{"kind", kind}, {"code", code}, {"message", message}}}};
  std::cerr << err.dump() << '\n';
  return code;
}

void add_common(CLI::App* cmd, encattack::cli::Common& common, bool needs_out = true) {
  cmd->add_option("--config", common.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "master seed");
  auto* out = cmd->add_option("--out", common.out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--threads", common.threads, "worker threads (0 = all cores; 1 is the reference)");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace encattack::cli;
  CLI::App app{"Known-plaintext attack toolkit for keyed patch encoders"};
  app.require_subcommand(1);

  Common common;

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate or import a dataset");
  add_common(gen_cmd, common);
  gen_cmd->add_option("--count", gen.count, "number of images");
  gen_cmd->add_option("--style", gen.style, "lowfreq, blobs or import");
  gen_cmd->add_option("--import", gen.import_dir, "directory of binary PGM files");

  ChallengeOptions challenge;
  auto* challenge_cmd = app.add_subcommand("challenge", "encode a random subset and write bundle and solution");
  add_common(challenge_cmd, common);
  challenge_cmd->add_option("--dataset", challenge.dataset, "dataset directory")->required();
  challenge_cmd->add_option("--n", challenge.n, "challenge size");
  challenge_cmd->add_option("--solution-out", challenge.solution_out, "solution directory (default <out>_solution)");

  AttackOptions attack;
  auto* attack_cmd = app.add_subcommand("attack", "recover the matching from a bundle");
  add_common(attack_cmd, common);
  attack_cmd->add_option("--bundle", attack.bundle, "bundle directory")->required();
  attack_cmd->add_flag("--allow-oracle", attack.allow_oracle,
                       "accept a bundle directory that also holds the solution and score each stage");
  attack_cmd->add_option("--csv-dir", attack.csv_dir, "directory for per-stage CSV dumps");

  ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "score a guess against the solution");
  add_common(score_cmd, common);
  score_cmd->add_option("--guess", score.guess, "guess.json")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--solution", score.solution, "solution directory")->required();

  TheoryOptions theory;
  auto* theory_cmd = app.add_subcommand("theory", "finite-domain simulations");
  theory_cmd->require_subcommand(1);
  for (const char* game : {"nia", "cia", "pred", "challenge2"}) {
    auto* sub = theory_cmd->add_subcommand(game);
    add_common(sub, common);
    sub->add_option("--trials", theory.trials, "trials (queries for pred)");
    sub->callback([&theory, game] { theory.game = game; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error(encattack::to_string(encattack::ErrorKind::configuration),
                        static_cast<int>(encattack::ErrorKind::configuration), e.what());
  }

  try {
    if (*gen_cmd) cmd_gen(common, gen);
    if (*challenge_cmd) cmd_challenge(common, challenge);
    if (*attack_cmd) cmd_attack(common, attack);
    if (*score_cmd) cmd_score(common, score);
    if (*theory_cmd) cmd_theory(common, theory);
  } catch (const encattack::Error& e) {
    return report_error(encattack::to_string(e.kind()), e.exit_code(), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(encattack::to_string(encattack::ErrorKind::io), static_cast<int>(encattack::ErrorKind::io),
                        e.what());
  } catch (const std::exception& e) {
    return report_error("internal", 1, e.what());
  }
  return 0;
}
