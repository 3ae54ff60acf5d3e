#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rulerec/datagen.hpp"
#include "rulerec/eval.hpp"
#include "rulerec/io.hpp"
#include "rulerec/train.hpp"

namespace rulerec {

inline constexpr const char* kVersionString = "rulerec 0.1.0";

// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIo = 4;

struct GenDataOptions {
  GenConfig gen;
  std::string out_dir = ".";
};

struct TrainOptions {
  std::string dataset;
  std::string vocab;
  std::string model_out = "model.json";
  std::string metrics_out;
  TrainConfig cfg;
  double test_fraction = 0.2;
};

struct EvaluateOptions {
  std::string model;
  std::string dataset;
  std::string vocab;
  uint64_t seed = 0;
  double test_fraction = 0.2;
  bool remove_train = false;
  bool use_filter = false;
  std::vector<int> hit_ns{1, 5, 10, 20, 40};
  std::string csv_out;
  std::string hit_curve_out;
  int hit_curve_max = 40;
};

struct RecommendOptions {
  std::string model;
  std::string dataset;
  std::string vocab;
  std::string user;
  int top_n = 10;
  bool use_filter = false;
};

namespace detail {

inline void check_fraction(double f) {
  if (f < 0.0 || f >= 1.0)
    throw ConfigError("test-fraction must be in [0, 1)");
}

inline ordered_json train_config_json(const TrainConfig& c, double test_fraction) {
  ordered_json j;
  j["mode"] = c.mode == TrainMode::central
                  ? "central"
                  : (c.mode == TrainMode::fedavg ? "fedavg" : "fedrule");
  j["rounds"] = c.rounds;
  j["local_steps"] = c.local_steps;
  j["lr_theta"] = c.lr_theta;
  j["lr_phi"] = c.lr_phi;
  j["lambda_theta"] = c.lambda_theta;
  j["lambda_phi"] = c.lambda_phi;
  j["optimizer"] = c.resolved_optimizer() == Optimizer::adam ? "adam" : "sgd";
  j["neg_ratio"] = c.neg_ratio;
  j["seed"] = c.seed;
  j["participation"] = c.participation;
  j["hidden"] = c.hidden;
  j["threads"] = c.threads;
  j["timing"] = c.timing;
  j["test_fraction"] = test_fraction;
  return j;
}

}  // namespace detail

inline void cmd_gen_data(const GenDataOptions& opts) {
  RunManifest manifest;
  manifest.command = "gen-data";
  manifest.version_string = kVersionString;
  manifest.started = now_iso8601_utc();
  manifest.seed = opts.gen.seed;

  GeneratedDataset gen = generate(opts.gen);
  HeterogeneityReport rep = heterogeneity_report(gen);

  std::filesystem::path dir(opts.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + opts.out_dir + "': " + ec.message());
  std::string dataset_path = (dir / "dataset.jsonl").string();
  std::string vocab_path = (dir / "vocab.txt").string();
  save_dataset(dataset_path, gen.dataset);
  save_vocab(vocab_path, gen.dataset.vocab);

  ordered_json cfg;
  cfg["users"] = opts.gen.users;
  cfg["entity_types"] = opts.gen.entity_types;
  cfg["rule_types"] = opts.gen.rule_types;
  cfg["clusters"] = opts.gen.clusters;
  cfg["templates_per_cluster"] = opts.gen.templates_per_cluster;
  cfg["entities_min"] = opts.gen.entities_min;
  cfg["entities_max"] = opts.gen.entities_max;
  cfg["rules_mean"] = opts.gen.rules_mean;
  cfg["alpha"] = opts.gen.alpha;
  cfg["seed"] = opts.gen.seed;
  manifest.config = std::move(cfg);
  manifest.outputs.push_back({"dataset", dataset_path, digest_file(dataset_path)});
  manifest.outputs.push_back({"vocab", vocab_path, digest_file(vocab_path)});
  manifest.finished = now_iso8601_utc();
  save_manifest((dir / "manifest.json").string(), manifest);

  std::cout << "wrote " << dataset_path << " (" << gen.dataset.users.size()
            << " users)\n";
  std::cout << "mean rules/user " << rep.mean_rules_per_user << ", mean entities/user "
            << rep.mean_entities_per_user << "\n";
  std::cout << "user histogram TV: intra-cluster " << rep.mean_intra_user_tv
            << ", inter-cluster " << rep.mean_inter_user_tv << "\n";
}

inline void cmd_train(const TrainOptions& opts) {
  detail::check_fraction(opts.test_fraction);
  opts.cfg.validate();
  RunManifest manifest;
  manifest.command = "train";
  manifest.version_string = kVersionString;
  manifest.started = now_iso8601_utc();
  manifest.seed = opts.cfg.seed;
  manifest.inputs.push_back({"vocab", opts.vocab, digest_file(opts.vocab)});
  manifest.inputs.push_back({"dataset", opts.dataset, digest_file(opts.dataset)});

  Vocab vocab = load_vocab(opts.vocab);
  Dataset ds = load_dataset(opts.dataset, vocab);
  prepare_splits(ds, opts.test_fraction, opts.cfg.seed);

  TrainResult result = train(ds, opts.cfg);

  save_model(opts.model_out, result.model);
  manifest.outputs.push_back(
      {"model", opts.model_out, digest_file(opts.model_out)});
  if (!opts.metrics_out.empty()) {
    save_metrics(opts.metrics_out, result.log);
    manifest.outputs.push_back(
        {"metrics", opts.metrics_out, digest_file(opts.metrics_out)});
  }
  manifest.config = detail::train_config_json(opts.cfg, opts.test_fraction);
  manifest.finished = now_iso8601_utc();
  save_manifest(opts.model_out + ".manifest.json", manifest);

  if (result.log.empty()) {
    std::cout << "wrote untrained model to " << opts.model_out << "\n";
  } else {
    const RoundLog& last = result.log.back();
    std::cout << "round " << last.round << ": train_loss " << last.train_loss
              << ", test_loss " << last.test_loss << ", test_auc " << last.test_auc
              << ", test_mean_rank " << last.test_mean_rank << " (rt "
              << last.test_mean_rank_rt << ")\n";
    std::cout << "wrote model to " << opts.model_out << "\n";
  }
}

inline void cmd_evaluate(const EvaluateOptions& opts) {
  detail::check_fraction(opts.test_fraction);
  for (int n : opts.hit_ns)
    if (n < 1) throw ConfigError("hit-n entries must be >= 1");
  if (opts.hit_curve_max < 1) throw ConfigError("hit-curve-max must be >= 1");

  Vocab vocab = load_vocab(opts.vocab);
  Dataset ds = load_dataset(opts.dataset, vocab);
  prepare_splits(ds, opts.test_fraction, opts.seed);
  ModelParams model = load_model(opts.model);
  if (model.num_entity_types != vocab.num_entity_types() ||
      model.num_rule_types != vocab.num_rule_types())
    throw DataError("model dimensions do not match the vocabulary (" +
                    std::to_string(model.num_entity_types) + " entity / " +
                    std::to_string(model.num_rule_types) + " rule types vs " +
                    std::to_string(vocab.num_entity_types()) + " / " +
                    std::to_string(vocab.num_rule_types()) + ")");

  ValidRuleFilter filter;
  if (opts.use_filter) filter = build_filter(ds);

  EvalOptions eo;
  eo.eval_seed = seed_stream(opts.seed, "eval");
  eo.hit_ns = opts.hit_ns;
  eo.filter = opts.use_filter ? &filter : nullptr;
  MetricsReport rep = evaluate(model, ds, eo);

  ordered_json out;
  out["users_scored"] = rep.users_scored;
  out["test_loss"] = rep.test_loss;
  out["test_auc"] = rep.test_auc;
  out["test_mean_rank"] = rep.test_mean_rank;
  out["test_mean_rank_rt"] = rep.test_mean_rank_rt;
  out["mean_rank_variant"] = opts.remove_train ? "remove_train" : "all_rules";
  ordered_json hits;
  for (const auto& [n, rate] : rep.hit_rate)
    hits["@" + std::to_string(n)] = rate;
  out["hit_rate"] = std::move(hits);
  std::cout << out.dump(2) << "\n";

  if (!opts.csv_out.empty()) {
    RoundLog row;
    row.round = 0;
    row.train_loss = std::numeric_limits<double>::quiet_NaN();
    row.test_loss = rep.test_loss;
    row.test_auc = rep.test_auc;
    row.test_mean_rank = rep.test_mean_rank;
    row.test_mean_rank_rt = rep.test_mean_rank_rt;
    save_metrics(opts.csv_out, {row});
  }
  if (!opts.hit_curve_out.empty()) {
    std::vector<double> curve =
        hit_rate_curve(model, ds, opts.hit_curve_max,
                       opts.use_filter ? &filter : nullptr, false);
    save_hit_curve(opts.hit_curve_out, curve);
  }
}

inline void cmd_recommend(const RecommendOptions& opts) {
  if (opts.top_n < 1) throw ConfigError("top-n must be >= 1");

  Vocab vocab = load_vocab(opts.vocab);
  Dataset ds = load_dataset(opts.dataset, vocab);
  // At recommendation time every stored rule counts as known data.
  prepare_splits(ds, 0.0, 0);
  ModelParams model = load_model(opts.model);
  if (model.num_entity_types != vocab.num_entity_types() ||
      model.num_rule_types != vocab.num_rule_types())
    throw DataError("model dimensions do not match the vocabulary");

  int ui = ds.find_user(opts.user);
  if (ui < 0) {
    std::string known;
    for (size_t i = 0; i < ds.users.size() && i < 5; ++i)
      known += (i ? ", " : "") + ds.users[i].graph.user_id;
    throw DataError("unknown user '" + opts.user + "' (dataset has " +
                    std::to_string(ds.users.size()) + " users, e.g. " + known + ")");
  }

  ValidRuleFilter filter;
  if (opts.use_filter) filter = build_filter(ds);

  const UserData& user = ds.users[ui];
  EntityGraph known_graph = with_edges(user.graph, user.train_edges());
  std::vector<Recommendation> recs = recommend_top_n(
      model, known_graph, opts.top_n, opts.use_filter ? &filter : nullptr);

  if (recs.empty()) {
    std::cout << "no candidates: every rule already exists for user '" << opts.user
              << "'\n";
    return;
  }
  for (size_t i = 0; i < recs.size(); ++i) {
    const Recommendation& r = recs[i];
    std::printf("%2zu. (%s, %s, %s)  p=%.4f\n", i + 1,
                known_graph.node_ids[r.src].c_str(),
                vocab.rule_types[r.rule].c_str(),
                known_graph.node_ids[r.dst].c_str(), r.prob);
  }
  if (recs.size() < static_cast<size_t>(opts.top_n))
    std::cout << "(only " << recs.size() << " candidates available)\n";
}

// Applies key=value lines from a config file to a subcommand's options.
// Values already given on the command line win; unknown keys are errors.
inline void apply_config_file(CLI::App& cmd, const std::string& path) {
  std::istringstream in(read_file_text(path));
  auto trim = [](const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string here = path + ":" + std::to_string(lineno);
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError(here + ": expected key=value, got '" + s + "'");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    CLI::Option* opt =
        key == "config" ? nullptr : cmd.get_option_no_throw("--" + key);
    if (opt == nullptr) throw ConfigError(here + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']')
      value = value.substr(1, value.size() - 2);
    size_t start = 0;
    while (true) {
      size_t comma = value.find(',', start);
      opt->add_result(trim(value.substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    opt->run_callback();
  }
}

// Builds the CLI and runs one subcommand, mapping failures to exit codes.
inline int cli_main(int argc, char** argv) {
  CLI::App app{"Graph-based rule recommendation: synthesize data, train "
               "centrally or federated, evaluate, recommend."};
  app.set_version_flag("--version", std::string(kVersionString));
  app.require_subcommand(1);

  std::map<std::string, TrainMode> mode_names{{"central", TrainMode::central},
                                              {"fedavg", TrainMode::fedavg},
                                              {"fedrule", TrainMode::fedrule}};
  std::map<std::string, Optimizer> opt_names{{"adam", Optimizer::adam},
                                             {"sgd", Optimizer::sgd}};

  GenDataOptions gen_opts;
  std::string gen_config;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--config", gen_config,
                  "key=value config file; command-line flags win");
  gen->add_option("--users", gen_opts.gen.users)->capture_default_str();
  gen->add_option("--entity-types", gen_opts.gen.entity_types)->capture_default_str();
  gen->add_option("--rule-types", gen_opts.gen.rule_types)->capture_default_str();
  gen->add_option("--clusters", gen_opts.gen.clusters)->capture_default_str();
  gen->add_option("--templates-per-cluster", gen_opts.gen.templates_per_cluster)
      ->capture_default_str();
  gen->add_option("--entities-min", gen_opts.gen.entities_min)->capture_default_str();
  gen->add_option("--entities-max", gen_opts.gen.entities_max)->capture_default_str();
  gen->add_option("--rules-mean", gen_opts.gen.rules_mean)->capture_default_str();
  gen->add_option("--alpha", gen_opts.gen.alpha)->capture_default_str();
  gen->add_option("--seed", gen_opts.gen.seed)->capture_default_str();
  gen->add_option("--out-dir", gen_opts.out_dir)->capture_default_str();
  gen->callback([&] {
    if (!gen_config.empty()) apply_config_file(*gen, gen_config);
    cmd_gen_data(gen_opts);
  });

  TrainOptions train_opts;
  double lambda_both = -1.0;
  std::string optimizer_name;
  std::string train_config;
  CLI::App* tr = app.add_subcommand("train", "Train a model on a dataset");
  tr->add_option("--config", train_config,
                 "key=value config file; command-line flags win");
  tr->add_option("--dataset", train_opts.dataset)->required();
  tr->add_option("--vocab", train_opts.vocab)->required();
  tr->add_option("--out", train_opts.model_out)->capture_default_str();
  tr->add_option("--metrics", train_opts.metrics_out,
                 "Per-round metrics CSV path");
  tr->add_option("--mode", train_opts.cfg.mode, "central, fedavg or fedrule")
      ->transform(CLI::CheckedTransformer(mode_names, CLI::ignore_case));
  tr->add_option("--rounds", train_opts.cfg.rounds)->capture_default_str();
  tr->add_option("--local-steps", train_opts.cfg.local_steps)->capture_default_str();
  tr->add_option("--lr-theta", train_opts.cfg.lr_theta)->capture_default_str();
  tr->add_option("--lr-phi", train_opts.cfg.lr_phi)->capture_default_str();
  tr->add_option("--lambda", lambda_both,
                 "Correction strength for both parameter halves");
  tr->add_option("--lambda-theta", train_opts.cfg.lambda_theta)->capture_default_str();
  tr->add_option("--lambda-phi", train_opts.cfg.lambda_phi)->capture_default_str();
  tr->add_option("--optimizer", optimizer_name,
                 "adam or sgd (default: adam centrally, sgd federated)")
      ->check(CLI::IsMember({"adam", "sgd"}));
  tr->add_option("--neg-ratio", train_opts.cfg.neg_ratio)->capture_default_str();
  tr->add_option("--seed", train_opts.cfg.seed)->capture_default_str();
  tr->add_option("--participation", train_opts.cfg.participation)
      ->capture_default_str();
  tr->add_option("--hidden", train_opts.cfg.hidden)->capture_default_str();
  tr->add_option("--threads", train_opts.cfg.threads)->capture_default_str();
  tr->add_flag("--timing", train_opts.cfg.timing,
               "Record wall time per round (breaks byte reproducibility)");
  tr->add_option("--test-fraction", train_opts.test_fraction)->capture_default_str();
  tr->callback([&] {
    if (!train_config.empty()) apply_config_file(*tr, train_config);
    if (lambda_both >= 0.0) {
      train_opts.cfg.lambda_theta = lambda_both;
      train_opts.cfg.lambda_phi = lambda_both;
    }
    if (!optimizer_name.empty())
      train_opts.cfg.optimizer = opt_names.at(optimizer_name);
    cmd_train(train_opts);
  });

  EvaluateOptions eval_opts;
  std::string eval_config;
  CLI::App* ev = app.add_subcommand("evaluate", "Score a trained model");
  ev->add_option("--config", eval_config,
                 "key=value config file; command-line flags win");
  ev->add_option("--model", eval_opts.model)->required();
  ev->add_option("--dataset", eval_opts.dataset)->required();
  ev->add_option("--vocab", eval_opts.vocab)->required();
  ev->add_option("--seed", eval_opts.seed,
                 "Must match the training seed to reproduce its split")
      ->capture_default_str();
  ev->add_option("--test-fraction", eval_opts.test_fraction)->capture_default_str();
  ev->add_flag("--remove-train", eval_opts.remove_train,
               "Report the mean rank that skips known training rules");
  ev->add_flag("--filter", eval_opts.use_filter,
               "Restrict hit-rate candidates to type signatures seen in training");
  ev->add_option("--hit-n", eval_opts.hit_ns, "Hit rate cutoffs")
      ->capture_default_str();
  ev->add_option("--csv", eval_opts.csv_out, "Write metrics as a one-row CSV");
  ev->add_option("--hit-curve", eval_opts.hit_curve_out,
                 "Write the hit-rate curve for N = 1..hit-curve-max");
  ev->add_option("--hit-curve-max", eval_opts.hit_curve_max)->capture_default_str();
  ev->callback([&] {
    if (!eval_config.empty()) apply_config_file(*ev, eval_config);
    cmd_evaluate(eval_opts);
  });

  RecommendOptions rec_opts;
  std::string rec_config;
  CLI::App* rec = app.add_subcommand("recommend", "Rank new rules for one user");
  rec->add_option("--config", rec_config,
                  "key=value config file; command-line flags win");
  rec->add_option("--model", rec_opts.model)->required();
  rec->add_option("--dataset", rec_opts.dataset)->required();
  rec->add_option("--vocab", rec_opts.vocab)->required();
  rec->add_option("--user", rec_opts.user)->required();
  rec->add_option("--top-n", rec_opts.top_n)->capture_default_str();
  rec->add_flag("--filter", rec_opts.use_filter,
                "Only suggest type signatures seen in training");
  rec->callback([&] {
    if (!rec_config.empty()) apply_config_file(*rec, rec_config);
    cmd_recommend(rec_opts);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}

}  // namespace rulerec
