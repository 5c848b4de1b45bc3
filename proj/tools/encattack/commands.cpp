#include "commands.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "encattack/attack.hpp"
#include "encattack/challenge.hpp"
#include "encattack/config.hpp"
#include "encattack/counterexample.hpp"
#include "encattack/dataset.hpp"
#include "encattack/error.hpp"
#include "encattack/rng.hpp"
#include "encattack/theory.hpp"
#include "json.hpp"
#include "run_record.hpp"

namespace encattack::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::uint64_t kDefaultSeed = 1;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json load_config(const Common& common, const std::set<std::string>& allowed) {
  if (!common.config) return json::object();
  const std::string where = common.config->string();
  json j;
  try {
    j = json::parse(read_text(*common.config));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::schema, where + ": invalid JSON: " + e.what());
  }
  require(j.is_object(), ErrorKind::schema, where + ": top level must be an object");
  for (const auto& [key, _] : j.items()) {
    require(allowed.contains(key), ErrorKind::schema, where + ": unknown field '" + key + "'");
  }
  return j;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::schema, where + ": field '" + key + "' has the wrong type: " + e.what());
  }
}

std::string where_of(const Common& common) { return common.config ? common.config->string() : "<defaults>"; }

void print_summary(const json& j) { std::cout << j.dump() << '\n'; }

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  f << j.dump(2) << '\n';
  require(static_cast<bool>(f), ErrorKind::io, "cannot write " + path.string());
}

void require_dir(const fs::path& dir, const std::string& what) {
  require(fs::is_directory(dir), ErrorKind::io, what + " directory " + dir.string() + " does not exist");
}

}  // namespace

void cmd_gen(const Common& common, const GenOptions& opt) {
  const json cfg = load_config(common, {"spec", "count", "style", "import_dir", "lowfreq", "blobs"});
  const std::string where = where_of(common);
  const ImageSpec spec =
      cfg.contains("spec") ? image_spec_from_json_text(cfg.at("spec").dump(), where + ": spec") : ImageSpec{};
  spec.validate();
  const std::uint64_t seed = common.seed.value_or(kDefaultSeed);
  const DatasetStyle style =
      dataset_style_from_string(opt.style.value_or(get_or<std::string>(cfg, "style", "lowfreq", where)));
  std::size_t count = opt.count.value_or(get_or<std::size_t>(cfg, "count", 100, where));

  json resolved = {{"spec", json::parse(to_json_text(spec))}, {"style", to_string(style)}, {"seed", seed}};
  json inputs = json::object();
  std::vector<Image> images;
  switch (style) {
    case DatasetStyle::lowfreq: {
      LowFreqConfig lf;
      const json sub = cfg.value("lowfreq", json::object());
      lf.components = get_or(sub, "components", lf.components, where + ": lowfreq");
      lf.max_frequency = get_or(sub, "max_frequency", lf.max_frequency, where + ": lowfreq");
      images = generate_lowfreq(spec, count, seed, lf);
      resolved["lowfreq"] = {{"components", lf.components}, {"max_frequency", lf.max_frequency}};
      break;
    }
    case DatasetStyle::blobs: {
      BlobsConfig bc;
      const json sub = cfg.value("blobs", json::object());
      bc.min_blobs = get_or(sub, "min_blobs", bc.min_blobs, where + ": blobs");
      bc.max_blobs = get_or(sub, "max_blobs", bc.max_blobs, where + ": blobs");
      bc.min_radius = get_or(sub, "min_radius", bc.min_radius, where + ": blobs");
      bc.max_radius = get_or(sub, "max_radius", bc.max_radius, where + ": blobs");
      images = generate_blobs(spec, count, seed, bc);
      resolved["blobs"] = {{"min_blobs", bc.min_blobs},
                           {"max_blobs", bc.max_blobs},
                           {"min_radius", bc.min_radius},
                           {"max_radius", bc.max_radius}};
      break;
    }
    case DatasetStyle::import: {
      const fs::path dir = opt.import_dir.value_or(fs::path(get_or<std::string>(cfg, "import_dir", "", where)));
      require(!dir.empty(), ErrorKind::configuration, "import needs --import or import_dir");
      require_dir(dir, "import");
      images = import_pgm_dir(spec, dir);
      count = images.size();
      resolved["import_dir"] = dir.string();
      inputs = hash_inputs(dir);
      break;
    }
  }
  resolved["count"] = count;
  fs::create_directories(common.out);
  save_images(images, spec, common.out, "images");
  write_run_record(common.out, "gen", resolved, inputs);
  print_summary({{"command", "gen"}, {"count", images.size()}, {"out", common.out.string()}});
}

void cmd_challenge(const Common& common, const ChallengeOptions& opt) {
  const json cfg = load_config(common, {"n", "key_distribution"});
  const std::string where = where_of(common);
  require_dir(opt.dataset, "dataset");
  const fs::path solution_dir = opt.solution_out.value_or(fs::path(common.out.string() + "_solution"));
  require(fs::weakly_canonical(solution_dir) != fs::weakly_canonical(common.out), ErrorKind::configuration,
          "the solution must not be written into the bundle directory");
  const KeyDistribution dist =
      cfg.contains("key_distribution")
          ? key_distribution_from_json_text(cfg.at("key_distribution").dump(), where + ": key_distribution")
          : KeyDistribution{};
  const std::vector<Image> dataset = load_images(opt.dataset, "images");
  const std::size_t n = opt.n.value_or(get_or<std::size_t>(cfg, "n", dataset.size(), where));
  const std::uint64_t seed = common.seed.value_or(kDefaultSeed);
  const ChallengeSeeds seeds{derive_seed(seed, 0), derive_seed(seed, 1), derive_seed(seed, 2)};

  auto [bundle, solution] = make_challenge(dataset, n, seeds, dist, common.threads);
  save_bundle(bundle, common.out);
  save_solution(solution, solution_dir);

  const json inputs = hash_inputs(opt.dataset);
  // The bundle's record leaves out every seed; the full one sits with the solution.
  write_run_record(common.out, "challenge", {{"n", n}, {"dataset", opt.dataset.string()}}, inputs);
  write_run_record(solution_dir, "challenge",
                   {{"n", n},
                    {"dataset", opt.dataset.string()},
                    {"seed", seed},
                    {"key_seed", seeds.key_seed},
                    {"sigma_seed", seeds.sigma_seed},
                    {"perm_seed", seeds.perm_seed},
                    {"key_distribution", json::parse(to_json_text(dist))},
                    {"bundle", common.out.string()}},
                   inputs);
  print_summary({{"command", "challenge"},
                 {"n", n},
                 {"bundle", common.out.string()},
                 {"solution", solution_dir.string()}});
}

void cmd_attack(const Common& common, const AttackOptions& opt) {
  require_dir(opt.bundle, "bundle");
  const bool has_solution = fs::exists(opt.bundle / "solution.json") || fs::exists(opt.bundle / "solution.bin");
  require(!has_solution || opt.allow_oracle, ErrorKind::protocol,
          "bundle directory " + opt.bundle.string() +
              " contains solution files; refusing to attack it without --allow-oracle");
  AttackConfig cfg = common.config ? attack_config_from_json_text(read_text(*common.config), where_of(common))
                                   : AttackConfig{};
  if (common.seed) cfg.seed = *common.seed;
  cfg.threads = common.threads;
  if (opt.csv_dir) cfg.csv_dir = *opt.csv_dir;
  const json inputs = hash_inputs(opt.bundle);

  const ChallengeBundle bundle = load_bundle(opt.bundle);
  AttackResult res = run_attack(bundle, cfg);
  if (has_solution) score_stages(res.report, load_solution(opt.bundle).sigma);

  fs::create_directories(common.out);
  save_guess(res.report.guess, common.out / "guess.json");
  save_attack_report(res.report, common.out / "report.json");
  save_attack_timings(res.report, common.out / "timings.json");
  write_run_record(common.out, "attack", json::parse(attack_config_to_json_text(cfg)), inputs);
  print_summary({{"command", "attack"},
                 {"n", res.report.n},
                 {"boost_rounds_run", res.report.boost_rounds_run},
                 {"out", common.out.string()}});
}

void cmd_score(const Common& common, const ScoreOptions& opt) {
  require_dir(opt.solution, "solution");
  const auto guess = load_guess(opt.guess);
  const HiddenSolution solution = load_solution(opt.solution);
  const ScoreReport report = score_matching(guess, solution);
  fs::create_directories(common.out);
  save_score_report(report, common.out / "score.json");
  json inputs = hash_inputs(opt.solution);
  inputs["guess"] = git_blob_sha1_file(opt.guess);
  write_run_record(common.out, "score", {{"guess", opt.guess.string()}, {"solution", opt.solution.string()}},
                   inputs);
  print_summary({{"command", "score"}, {"score", report.score}, {"n", report.n}});
}

namespace {

KeyedEncoder theory_encoder(const std::string& name, const Concept& c) {
  if (name == "ideal") return ideal_encoder(c);
  if (name == "identity") return identity_encoder();
  if (name == "rank_leaking") return rank_leaking_encoder(c);
  fail(ErrorKind::configuration, "unknown encoder '" + name + "' (ideal, identity, rank_leaking)");
}

json estimate_json(const AdvantageEstimate& e) {
  return {{"advantage", e.advantage}, {"standard_error", e.standard_error}, {"trials", e.trials}, {"wins", e.wins}};
}

json weak_ideal_json(const Concept& c) {
  const WeakIdealCheck w = check_weakly_ideal(c);
  return {{"label_preserving", w.label_preserving}, {"distribution_identical", w.distribution_identical},
          {"keys", w.keys}};
}

std::vector<double> query_weights(const std::string& name, std::size_t n) {
  std::vector<double> w(n);
  if (name == "uniform") {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
    return w;
  }
  require(name == "skewed", ErrorKind::configuration, "unknown query distribution '" + name + "' (uniform, skewed)");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += w[i] = 1.0 / static_cast<double>(i + 1);
  for (double& v : w) v /= sum;
  return w;
}

json theory_game(const Common& common, const TheoryOptions& opt, bool chosen) {
  const json cfg = load_config(common, {"domain_size", "threshold", "encoder", "adversary", "trials"});
  const std::string where = where_of(common);
  const auto n = get_or<std::size_t>(cfg, "domain_size", 8, where);
  const auto threshold = get_or<std::size_t>(cfg, "threshold", n / 2, where);
  const auto encoder_name = get_or<std::string>(cfg, "encoder", "ideal", where);
  const auto adversary = get_or<std::string>(cfg, "adversary", chosen ? "exhaustive" : "nearest", where);
  const std::size_t trials = opt.trials.value_or(get_or<std::size_t>(cfg, "trials", 10000, where));
  const std::uint64_t seed = common.seed.value_or(kDefaultSeed);
  const Concept c = threshold_concept(n, threshold);
  const KeyedEncoder enc = theory_encoder(encoder_name, c);

  AdvantageEstimate est;
  if (chosen) {
    CiaAdversary adv;
    if (adversary == "exhaustive") {
      adv = exhaustive_query_adversary(c);
    } else if (adversary == "rank_reading") {
      adv = rank_reading_adversary(c);
    } else {
      fail(ErrorKind::configuration, "unknown CIA adversary '" + adversary + "' (exhaustive, rank_reading)");
    }
    est = estimate_cia_advantage(enc, c, adv, trials, seed);
  } else {
    NiaAdversary adv;
    if (adversary == "nearest") {
      adv = nearest_instance_adversary(c);
    } else if (adversary == "equality") {
      adv = equality_adversary(c);
    } else if (adversary == "coin") {
      adv = coin_flip_adversary(c);
    } else {
      fail(ErrorKind::configuration, "unknown NIA adversary '" + adversary + "' (nearest, equality, coin)");
    }
    est = estimate_nia_advantage(enc, c, adv, trials, seed);
  }
  json result = {{"game", opt.game},
                 {"domain_size", n},
                 {"threshold", threshold},
                 {"encoder", encoder_name},
                 {"adversary", adversary},
                 {"seed", seed},
                 {"estimate", estimate_json(est)}};
  if (encoder_name == "ideal" && n <= 10) result["weakly_ideal"] = weak_ideal_json(c);
  return result;
}

json theory_pred(const Common& common, const TheoryOptions& opt) {
  const json cfg = load_config(common, {"domain_size", "threshold", "encoder", "x0", "x1", "m", "p", "epsilon",
                                        "delta", "tau", "votes", "retry_budget", "heldout", "queries",
                                        "query_distribution"});
  const std::string where = where_of(common);
  const auto n = get_or<std::size_t>(cfg, "domain_size", 64, where);
  const auto threshold = get_or<std::size_t>(cfg, "threshold", n / 2, where);
  require(threshold >= 1 && threshold < n, ErrorKind::configuration, "threshold must leave both classes nonempty");
  const auto encoder_name = get_or<std::string>(cfg, "encoder", "ideal", where);
  const auto x0 = get_or<std::size_t>(cfg, "x0", 0, where);
  const auto x1 = get_or<std::size_t>(cfg, "x1", n - 1, where);
  PredExtractorConfig pc;
  pc.m = get_or(cfg, "m", pc.m, where);
  pc.p = get_or(cfg, "p", pc.p, where);
  pc.epsilon = get_or(cfg, "epsilon", pc.epsilon, where);
  pc.delta = get_or(cfg, "delta", pc.delta, where);
  pc.tau = get_or(cfg, "tau", pc.tau, where);
  pc.votes = get_or<std::size_t>(cfg, "votes", chernoff_votes(pc.epsilon, pc.tau), where);
  pc.retry_budget = get_or(cfg, "retry_budget", pc.retry_budget, where);
  pc.heldout = get_or(cfg, "heldout", pc.heldout, where);
  const std::size_t queries = opt.trials.value_or(get_or<std::size_t>(cfg, "queries", 1000, where));
  const auto dist_name = get_or<std::string>(cfg, "query_distribution", "uniform", where);
  const std::uint64_t seed = common.seed.value_or(kDefaultSeed);

  const Concept c = threshold_concept(n, threshold);
  require(x0 < n && x1 < n && c.labels[x0] == 0 && c.labels[x1] == 1, ErrorKind::configuration,
          "x0 must carry label 0 and x1 label 1");
  const PredExtractor h =
      pred_extractor(frequency_table_learner(), theory_encoder(encoder_name, c), x0, x1, pc, derive_seed(seed, 0));
  const auto weights = query_weights(dist_name, n);
  const double risk = measure_risk(h, c, weights, queries, derive_seed(seed, 1));
  return {{"game", "pred"},
          {"domain_size", n},
          {"threshold", threshold},
          {"encoder", encoder_name},
          {"x0", x0},
          {"x1", x1},
          {"m", pc.m},
          {"votes", pc.votes},
          {"tau", pc.tau},
          {"attempts", h.attempts},
          {"heldout_accuracy", h.heldout_accuracy},
          {"query_distribution", dist_name},
          {"queries", queries},
          {"risk", risk},
          {"seed", seed}};
}

json theory_challenge2(const Common& common, const TheoryOptions& opt) {
  const json cfg = load_config(common, {"n", "tag_bits", "count", "trials", "guess"});
  const std::string where = where_of(common);
  const auto n = get_or<std::size_t>(cfg, "n", 8, where);
  std::vector<std::size_t> tags = {256, 1024, 4096};
  if (cfg.contains("tag_bits")) {
    tags = cfg.at("tag_bits").is_array() ? get_or(cfg, "tag_bits", tags, where)
                                         : std::vector<std::size_t>{get_or<std::size_t>(cfg, "tag_bits", 256, where)};
  }
  const auto count = get_or<std::size_t>(cfg, "count", 64, where);
  const std::size_t trials = opt.trials.value_or(get_or<std::size_t>(cfg, "trials", 100, where));
  const TagGuess guess = tag_guess_from_string(get_or<std::string>(cfg, "guess", "independent_random", where));
  const std::uint64_t seed = common.seed.value_or(kDefaultSeed);

  json rows = json::array();
  bool non_increasing = true;
  double previous = 0.0;
  for (std::size_t t = 0; t < tags.size(); ++t) {
    const Challenge2Result r = challenge2_counterexample(n, tags[t], count, trials, derive_seed(seed, t), guess);
    if (t > 0 && r.mean_score > previous) non_increasing = false;
    previous = r.mean_score;
    rows.push_back({{"tag_bits", tags[t]},
                    {"mean_score", r.mean_score},
                    {"reconstruction_exact", r.reconstruction_exact},
                    {"scores", r.scores}});
  }
  return {{"game", "challenge2"}, {"n", n},         {"count", count}, {"trials", trials},
          {"guess", to_string(guess)}, {"seed", seed}, {"results", rows}, {"non_increasing", non_increasing}};
}

}  // namespace

void cmd_theory(const Common& common, const TheoryOptions& opt) {
  json result;
  if (opt.game == "nia" || opt.game == "cia") {
    result = theory_game(common, opt, opt.game == "cia");
  } else if (opt.game == "pred") {
    result = theory_pred(common, opt);
  } else if (opt.game == "challenge2") {
    result = theory_challenge2(common, opt);
  } else {
    fail(ErrorKind::configuration, "unknown theory game '" + opt.game + "'");
  }
  fs::create_directories(common.out);
  write_json(common.out / "result.json", result);
  write_run_record(common.out, "theory " + opt.game, result, json::object());
  json summary = result;
  if (summary.contains("results")) {
    for (auto& r : summary["results"]) r.erase("scores");
  }
  print_summary(summary);
}

}  // namespace encattack::cli
