// alsgen: dataset generation, training, search and evaluation front end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "als/circuit_io.hpp"
#include "als/pipeline/evolve.hpp"
#include "als/pipeline/oracle.hpp"
#include "als/pipeline/pareto.hpp"

using namespace als;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kSynthesis = 3, kVerification = 4 };

struct Common {
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct SearchFlags {
  std::string epsilon = "0";
  unsigned sims = 256;
  double c_puct = 1.0;
  double alpha = 1.0, beta = 10.0, delta = 1.0;
  std::string policy = "uniform";
  std::string rollout = "guided";
  std::size_t length_budget = kDefaultMaxLen;
  std::size_t err_samples = 0;  // 0: exhaustive
  double err_delta = 0.05;

  void add(CLI::App* app, bool with_epsilon = true) {
    if (with_epsilon) app->add_option("--epsilon", epsilon, "error-rate bound, decimal")->capture_default_str();
    app->add_option("--sims", sims, "simulations per emitted token")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--c-puct", c_puct, "exploration constant")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--alpha", alpha, "size reward weight")->capture_default_str();
    app->add_option("--beta", beta, "error penalty weight")->capture_default_str();
    app->add_option("--delta", delta, "reward per merged node")->capture_default_str();
    app->add_option("--policy", policy, "'uniform' or a checkpoint path")->capture_default_str();
    app->add_option("--rollout", rollout, "uniform | guided | policy")
        ->capture_default_str()
        ->check(CLI::IsMember({"uniform", "guided", "policy"}));
    app->add_option("--length-budget", length_budget, "max tokens per circuit, EOS included")->capture_default_str();
    app->add_option("--err-samples", err_samples, "sampled patterns for error checks, 0 for exhaustive")
        ->capture_default_str();
    app->add_option("--err-delta", err_delta, "Hoeffding confidence parameter for sampled checks")
        ->capture_default_str()
        ->check(CLI::Range(1e-12, 0.999999));
  }

  SearchConfig config(std::uint64_t seed) const {
    SearchConfig c;
    c.c_puct = c_puct;
    c.simulations = sims;
    c.reward = {alpha, beta, delta};
    c.length_budget = length_budget;
    c.rollout = rollout == "policy" ? RolloutMode::Policy : rollout == "uniform" ? RolloutMode::Uniform : RolloutMode::Guided;
    c.sampling = {err_samples > 0, err_samples ? err_samples : 1024, seed};
    return c;
  }

  json to_json() const {
    return {{"epsilon", epsilon},         {"sims", sims},
            {"c_puct", c_puct},           {"alpha", alpha},
            {"beta", beta},               {"delta", delta},
            {"policy", policy},           {"rollout", rollout},
            {"length_budget", length_budget}, {"err_samples", err_samples},
            {"err_delta", err_delta}};
  }
};

struct TrainFlags {
  double lr = 1e-4;
  std::size_t batch = 16;
  unsigned epochs = 1;
  double weight_decay = 0.01;

  void add(CLI::App* app) {
    app->add_option("--lr", lr, "AdamW learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--batch", batch, "pairs per step")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--epochs", epochs, "passes over the training split")->capture_default_str();
    app->add_option("--weight-decay", weight_decay, "decoupled weight decay")->capture_default_str();
  }

  pipeline::TrainHyper hyper(std::uint64_t seed) const {
    pipeline::TrainHyper h;
    h.adam.lr = lr;
    h.adam.weight_decay = weight_decay;
    h.batch = batch;
    h.epochs = epochs;
    h.seed = seed;
    return h;
  }

  json to_json() const { return {{"lr", lr}, {"batch", batch}, {"epochs", epochs}, {"weight_decay", weight_decay}}; }
};

void print_config(const std::string& cmd, const json& cfg) {
  std::cerr << json{{"command", cmd}, {"config", cfg}}.dump() << std::endl;
}

json rational_json(const Rational& r) { return {{"exact", to_string(r)}, {"decimal", to_double(r)}}; }

std::vector<ErrorBound> parse_epsilons(const std::string& list) {
  std::vector<ErrorBound> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(ErrorBound::parse(item));
  if (out.empty()) throw ContractError("empty epsilon list");
  return out;
}

std::optional<model::ModelParams> load_policy(const std::string& policy) {
  if (policy == "uniform") return std::nullopt;
  return model::load_checkpoint(policy);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

// ---------------------------------------------------------------------------

int cmd_gen(const Common& com, const std::string& kind, std::size_t count, unsigned inputs, unsigned outputs,
            unsigned max_gates, const std::string& epsilons, unsigned sims, const std::string& out) {
  print_config("gen", {{"kind", kind},
                       {"count", count},
                       {"inputs", inputs},
                       {"outputs", outputs},
                       {"max_gates", max_gates},
                       {"epsilons", epsilons},
                       {"sims", sims},
                       {"out", out},
                       {"seed", com.seed},
                       {"jobs", com.jobs}});
  pipeline::Dataset d;
  json summary{{"kind", kind}};
  if (kind == "pretrain") {
    pipeline::PretrainSpec spec;
    spec.num_inputs = inputs;
    spec.num_outputs = outputs;
    spec.max_gates = max_gates;
    spec.jobs = com.jobs;
    d = pipeline::gen_pretrain_dataset(count, com.seed, spec);
  } else {
    pipeline::FinetuneSpec spec;
    spec.epsilons = parse_epsilons(epsilons);
    spec.corpus.num_inputs = inputs;
    spec.corpus.num_outputs = outputs;
    spec.search.simulations = sims;
    spec.jobs = com.jobs;
    auto fd = pipeline::gen_finetune_dataset(count, com.seed, spec);
    d = std::move(fd.data);
    summary["skipped"] = fd.failures;
    json slices = json::object();
    for (const auto& e : spec.epsilons) {
      double sum = 0;
      std::size_t n = 0;
      for (const auto& r : d.records)
        if (r.epsilon == e) {
          sum += static_cast<double>(gate_count(decode_with_merge(r.target)));
          ++n;
        }
      slices[to_string(e)] = {{"records", n}, {"mean_gates", n ? sum / static_cast<double>(n) : 0.0}};
    }
    summary["slices"] = slices;
  }
  pipeline::save_dataset(d, out);
  summary["records"] = d.size();
  std::cout << summary.dump() << '\n';
  return kOk;
}

model::ModelParams init_or_load(const std::string& init, const model::ModelConfig& cfg, std::uint64_t seed) {
  if (!init.empty()) return model::load_checkpoint(init);
  return model::ModelParams::init(cfg, seed);
}

json epoch_json(const pipeline::EpochReport& r) {
  json j{{"epoch", r.epoch}, {"steps", r.steps}, {"train_ce", r.train_ce}, {"train_accuracy", r.train_accuracy}};
  j["valid_ce"] = std::isnan(r.valid_ce) ? json(nullptr) : json(r.valid_ce);
  if (r.mean_episode_reward != 0) j["mean_episode_reward"] = r.mean_episode_reward;
  return j;
}

int cmd_train(const Common& com, const std::string& data, const std::string& init, const std::string& out,
              const TrainFlags& tf, const model::ModelConfig& mc) {
  json cfg{{"data", data}, {"init", init}, {"out", out}, {"seed", com.seed}, {"train", tf.to_json()}};
  cfg["model"] = init.empty() ? model::to_json(mc) : json("from checkpoint");
  print_config("train", cfg);
  const auto d = pipeline::load_dataset(data);
  auto p = init_or_load(init, mc, com.seed);
  pipeline::train_supervised(p, d.split(false), d.split(true), tf.hyper(com.seed),
                             [](const pipeline::EpochReport& r) { std::cout << epoch_json(r).dump() << std::endl; });
  model::save_checkpoint(p, out, {{"stage", "supervised"}});
  return kOk;
}

int cmd_finetune(const Common& com, const std::string& data, const std::string& init, const std::string& out,
                 const TrainFlags& tf, double lambda, unsigned group, std::size_t budget) {
  print_config("finetune", {{"data", data},
                            {"init", init},
                            {"out", out},
                            {"seed", com.seed},
                            {"lambda", lambda},
                            {"group", group},
                            {"length_budget", budget},
                            {"train", tf.to_json()}});
  const auto d = pipeline::load_dataset(data);
  auto p = model::load_checkpoint(init);
  pipeline::RlHyper rl;
  rl.lambda = lambda;
  rl.group = group;
  rl.sample.length_budget = budget;
  pipeline::finetune_rl(p, d.split(false), d.split(true), tf.hyper(com.seed), rl,
                        [](const pipeline::EpochReport& r) { std::cout << epoch_json(r).dump() << std::endl; });
  model::save_checkpoint(p, out, {{"stage", "rl"}, {"lambda", lambda}});
  return kOk;
}

int cmd_evolve(const Common& com, const std::string& data, const std::string& init, const std::string& out,
               const std::string& data_out, const TrainFlags& tf, const SearchFlags& sf, unsigned iterations,
               std::size_t sample_size) {
  print_config("evolve", {{"data", data},
                          {"init", init},
                          {"out", out},
                          {"data_out", data_out},
                          {"seed", com.seed},
                          {"iterations", iterations},
                          {"sample_size", sample_size},
                          {"train", tf.to_json()},
                          {"search", sf.to_json()}});
  auto d = pipeline::load_dataset(data);
  auto p = model::load_checkpoint(init);
  pipeline::EvolveConfig cfg;
  cfg.iterations = iterations;
  cfg.sample_size = sample_size;
  cfg.train = tf.hyper(com.seed);
  cfg.search = sf.config(com.seed);
  pipeline::self_evolve(p, d, cfg, com.seed, [](const pipeline::IterationReport& r) {
    std::cout << json{{"iteration", r.iteration},   {"sampled", r.sampled},
                      {"generated", r.generated},   {"accepted", r.accepted},
                      {"dataset_size", r.dataset_size}}
                     .dump()
              << std::endl;
  });
  model::save_checkpoint(p, out, {{"stage", "evolve"}, {"iterations", iterations}});
  if (!data_out.empty()) pipeline::save_dataset(d, data_out);
  return kOk;
}

int cmd_synth(const Common& com, const std::string& target, const std::string& out, const SearchFlags& sf) {
  print_config("synth", {{"target", target}, {"out", out}, {"seed", com.seed}, {"search", sf.to_json()}});
  const Circuit src = parse_circuit_file(target);
  const TruthTable f = eval_truth_table(src);
  const auto policy = load_policy(sf.policy);
  const ErrorBound eps = ErrorBound::parse(sf.epsilon);
  const auto r = run_search(policy ? &*policy : nullptr, encode_dfs(src), f, eps, sf.config(com.seed), com.seed);
  if (!r.verified) {
    std::cerr << "verification failed: error " << to_string(r.error) << " exceeds " << to_string(eps) << '\n';
    return kVerification;
  }
  json j{{"gate_count", r.gate_count},
         {"source_gate_count", gate_count(src)},
         {"error_rate", rational_json(r.error)},
         {"total_reward", r.total_reward},
         {"tokens", tokens_to_text(r.tokens.tokens)}};
  if (sf.err_samples > 0) j["sampled_half_width"] = hoeffding_half_width(sf.err_samples, sf.err_delta);
  if (out.empty())
    j["circuit"] = write_circuit(r.circuit);
  else
    write_circuit_file(out, r.circuit);
  std::cout << j.dump() << '\n';
  return kOk;
}

int cmd_pareto(const Common& com, const std::string& target, const std::string& out, const SearchFlags& sf,
               const std::string& epsilons, unsigned restarts, bool strict, bool front) {
  print_config("pareto", {{"target", target},
                          {"out", out},
                          {"seed", com.seed},
                          {"epsilons", epsilons},
                          {"restarts", restarts},
                          {"strict", strict},
                          {"front", front},
                          {"search", sf.to_json()}});
  const Circuit src = parse_circuit_file(target);
  const auto policy = load_policy(sf.policy);
  const auto sweep =
      pipeline::pareto_sweep(policy ? &*policy : nullptr, src, parse_epsilons(epsilons), sf.config(com.seed), com.seed, restarts);
  auto pts = pipeline::sweep_points(sweep);
  if (front) pts = pipeline::dominance_filter(pts);
  write_text(out, pipeline::pareto_csv(pts));
  std::size_t failed = 0;
  for (const auto& e : sweep)
    if (!e.point) {
      ++failed;
      std::cerr << "epsilon " << to_string(e.epsilon) << ": " << e.failure << '\n';
    }
  std::cerr << json{{"points", pts.size()}, {"failed", failed}}.dump() << '\n';
  return strict && failed ? kSynthesis : kOk;
}

int cmd_eval(const std::string& g_path, const std::string& f_path) {
  print_config("eval", {{"g", g_path}, {"f", f_path}});
  const Circuit g = parse_circuit_file(g_path), f = parse_circuit_file(f_path);
  if (g.num_inputs() != f.num_inputs() || g.num_outputs() != f.num_outputs())
    throw DimensionError("circuits differ in input or output count");
  const TruthTable tg = eval_truth_table(g), tf = eval_truth_table(f);
  json j{{"gate_count", gate_count(g)},
         {"reference_gate_count", gate_count(f)},
         {"er", rational_json(error_rate(tg, tf))},
         {"mred", rational_json(mred(tg, tf))},
         {"mse", rational_json(mse(tg, tf))}};
  std::cout << j.dump() << '\n';
  return kOk;
}

int cmd_oracle(const std::string& target, const std::string& epsilon, unsigned max_gates) {
  print_config("oracle", {{"target", target}, {"epsilon", epsilon}, {"max_gates", max_gates}});
  const Circuit src = parse_circuit_file(target);
  const auto r = pipeline::brute_force_oracle(eval_truth_table(src), ErrorBound::parse(epsilon), max_gates);
  json j{{"states_explored", r.states_explored}};
  if (r.min_gates) {
    j["min_gates"] = *r.min_gates;
    j["witness"] = write_circuit(r.witness);
  } else {
    j["min_gates"] = nullptr;
    j["note"] = "unknown above max_gates";
  }
  std::cout << j.dump() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate logic synthesis by masked sequence generation and tree search"};
  app.require_subcommand(1);
  Common com;
  app.add_option("--seed", com.seed, "random seed")->envname("GTAC_SEED")->capture_default_str();
  app.add_option("--jobs", com.jobs, "worker threads across independent records")
      ->envname("GTAC_JOBS")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a JSON-lines dataset");
  std::string kind = "pretrain", gen_out, gen_eps = "0.01,0.05,0.1";
  std::size_t count = 100;
  unsigned inputs = 8, outputs = 2, max_gates = 16, gen_sims = 32;
  gen->add_option("--kind", kind, "pretrain | finetune")->capture_default_str()->check(CLI::IsMember({"pretrain", "finetune"}));
  gen->add_option("--count", count, "records (per epsilon for finetune)")->capture_default_str();
  gen->add_option("--inputs", inputs)->capture_default_str()->check(CLI::Range(1u, 16u));
  gen->add_option("--outputs", outputs)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--max-gates", max_gates, "largest random circuit (pretrain)")->capture_default_str();
  gen->add_option("--epsilons", gen_eps, "bounds for finetune records")->capture_default_str();
  gen->add_option("--sims", gen_sims, "search budget for finetune targets")->capture_default_str();
  gen->add_option("--out", gen_out, "output .jsonl")->required();

  // model shape, shared by train
  model::ModelConfig mc;
  auto add_model = [&](CLI::App* a) {
    a->add_option("--inputs", mc.num_inputs)->capture_default_str();
    a->add_option("--d-model", mc.d_model)->capture_default_str();
    a->add_option("--heads", mc.n_heads)->capture_default_str();
    a->add_option("--enc-layers", mc.n_enc_layers)->capture_default_str();
    a->add_option("--dec-layers", mc.n_dec_layers)->capture_default_str();
    a->add_option("--d-ff", mc.d_ff)->capture_default_str();
    a->add_option("--max-len", mc.max_len)->capture_default_str();
  };

  std::string data, init, out, data_out;
  TrainFlags tf;
  auto* train = app.add_subcommand("train", "supervised pretraining");
  train->add_option("--data", data)->required();
  train->add_option("--init", init, "start from a checkpoint");
  train->add_option("--out", out)->required();
  tf.add(train);
  add_model(train);

  double lambda = 0.1;
  unsigned group = 4;
  std::size_t ft_budget = kDefaultMaxLen;
  auto* finetune = app.add_subcommand("finetune", "CE plus lambda-weighted policy-gradient fine-tuning");
  finetune->add_option("--data", data)->required();
  finetune->add_option("--init", init)->required();
  finetune->add_option("--out", out)->required();
  finetune->add_option("--lambda", lambda, "RL weight")->capture_default_str()->check(CLI::NonNegativeNumber);
  finetune->add_option("--group", group, "episodes per pair")->capture_default_str()->check(CLI::PositiveNumber);
  finetune->add_option("--length-budget", ft_budget)->capture_default_str();
  tf.add(finetune);

  SearchFlags sf;
  unsigned iterations = 3;
  std::size_t sample_size = 32;
  auto* evolve = app.add_subcommand("evolve", "iterative self-evolution");
  evolve->add_option("--data", data)->required();
  evolve->add_option("--init", init)->required();
  evolve->add_option("--out", out)->required();
  evolve->add_option("--data-out", data_out, "write the grown dataset");
  evolve->add_option("--iterations", iterations)->capture_default_str()->check(CLI::PositiveNumber);
  evolve->add_option("--sample-size", sample_size)->capture_default_str();
  tf.add(evolve);
  sf.add(evolve, false);

  std::string target;
  auto* synth = app.add_subcommand("synth", "synthesize one circuit under a bound");
  synth->add_option("--target", target, "exact circuit file")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out, "write the result circuit here");
  sf.add(synth);

  std::string epsilons = "0,0.01,0.05,0.1";
  unsigned restarts = 1;
  bool strict = false, front = false;
  auto* pareto = app.add_subcommand("pareto", "sweep bounds and emit a CSV");
  pareto->add_option("--target", target)->required()->check(CLI::ExistingFile);
  pareto->add_option("--out", out, "CSV path, stdout by default");
  pareto->add_option("--epsilons", epsilons, "ascending bounds")->capture_default_str();
  pareto->add_option("--restarts", restarts, "seeds per bound, smallest kept")->capture_default_str();
  pareto->add_flag("--strict", strict, "nonzero exit when any bound fails");
  pareto->add_flag("--front", front, "write only non-dominated points");
  sf.add(pareto, false);

  std::string g_path, f_path;
  auto* eval = app.add_subcommand("eval", "error metrics of g against reference f");
  eval->add_option("g", g_path)->required()->check(CLI::ExistingFile);
  eval->add_option("f", f_path)->required()->check(CLI::ExistingFile);

  std::string oracle_eps = "0";
  unsigned oracle_gates = 5;
  auto* oracle = app.add_subcommand("oracle", "exhaustive minimum for at most 3 inputs");
  oracle->add_option("--target", target)->required()->check(CLI::ExistingFile);
  oracle->add_option("--epsilon", oracle_eps)->capture_default_str();
  oracle->add_option("--max-gates", oracle_gates)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return cmd_gen(com, kind, count, inputs, outputs, max_gates, gen_eps, gen_sims, gen_out);
    if (*train) return cmd_train(com, data, init, out, tf, mc);
    if (*finetune) return cmd_finetune(com, data, init, out, tf, lambda, group, ft_budget);
    if (*evolve) return cmd_evolve(com, data, init, out, data_out, tf, sf, iterations, sample_size);
    if (*synth) return cmd_synth(com, target, out, sf);
    if (*pareto) return cmd_pareto(com, target, out, sf, epsilons, restarts, strict, front);
    if (*eval) return cmd_eval(g_path, f_path);
    if (*oracle) return cmd_oracle(target, oracle_eps, oracle_gates);
  } catch (const SynthesisFailure& e) {
    std::cerr << "synthesis failed: " << e.what() << '\n';
    return kSynthesis;
  } catch (const DeadEndError& e) {
    std::cerr << "synthesis failed: " << e.what() << '\n';
    return kSynthesis;
  } catch (const VerificationError& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return kVerification;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
