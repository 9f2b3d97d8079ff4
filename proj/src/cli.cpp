// SPDX-License-Identifier: Apache-2.0
#include "advreg/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "advreg/checkpoint.hpp"
#include "advreg/errors.hpp"
#include "advreg/evaluation.hpp"
#include "advreg/hash.hpp"
#include "advreg/kvtext.hpp"

namespace advreg {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// --- config -------------------------------------------------------------------

RunConfig run_config_from_text(std::string_view text, std::string_view source) {
  const auto kv = KeyValueText::parse(text, source);
  kv.reject_unknown({"lambda_q", "lambda_h", "learning_rate", "batch_size", "epochs", "adam_beta1",
                     "adam_beta2", "adam_epsilon", "lr_decay_per_epoch", "seed", "spec_hash"});
  RunConfig config;
  TrainConfig& t = config.train;
  t.regularizer.lambda_q = kv.get_double("lambda_q");
  t.regularizer.lambda_h = kv.get_double("lambda_h");
  t.epochs = kv.get_uint("epochs");
  t.seed = kv.get_uint("seed");
  config.spec_hash = kv.get_string("spec_hash");
  if (kv.has("learning_rate")) t.learning_rate = kv.get_double("learning_rate");
  if (kv.has("batch_size")) t.batch_size = kv.get_uint("batch_size");
  if (kv.has("adam_beta1")) t.adam.beta1 = kv.get_double("adam_beta1");
  if (kv.has("adam_beta2")) t.adam.beta2 = kv.get_double("adam_beta2");
  if (kv.has("adam_epsilon")) t.adam.epsilon = kv.get_double("adam_epsilon");
  if (kv.has("lr_decay_per_epoch")) t.lr_decay_per_epoch = kv.get_double("lr_decay_per_epoch");
  try {
    t.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string(source) + ": " + e.what());
  }
  return config;
}

std::string run_config_to_text(const RunConfig& config) {
  const TrainConfig& t = config.train;
  std::ostringstream out;
  out << "lambda_q = " << format_double(t.regularizer.lambda_q) << '\n'
      << "lambda_h = " << format_double(t.regularizer.lambda_h) << '\n'
      << "learning_rate = " << format_double(t.learning_rate) << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "epochs = " << t.epochs << '\n'
      << "adam_beta1 = " << format_double(t.adam.beta1) << '\n'
      << "adam_beta2 = " << format_double(t.adam.beta2) << '\n'
      << "adam_epsilon = " << format_double(t.adam.epsilon) << '\n'
      << "lr_decay_per_epoch = " << format_double(t.lr_decay_per_epoch) << '\n'
      << "seed = " << t.seed << '\n'
      << "spec_hash = " << config.spec_hash << '\n';
  return out.str();
}

namespace {

// --- manifests ----------------------------------------------------------------

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Manifest {
  Manifest(std::string cmd, std::vector<std::string> argv)
      : command(std::move(cmd)), args(std::move(argv)) {}

  std::string command;
  std::vector<std::string> args;
  std::string config_path;
  Json config = Json::object();
  std::optional<std::uint64_t> seed;
  Json artifacts = Json::object();
  Json inputs = Json::object();

  void artifact(const std::string& name, const fs::path& path) {
    artifacts[name] = {{"path", path.string()}, {"hash", file_hash(path)}};
  }
  void input(const std::string& name, const fs::path& path) {
    inputs[name] = {{"path", path.string()}, {"hash", file_hash(path)}};
  }

  void write(const fs::path& path, const std::string& status, const std::string& error) const {
    Json doc;
    doc["command"] = command;
    doc["args"] = args;
    doc["config_path"] = config_path.empty() ? Json() : Json(config_path);
    doc["config"] = config;
    doc["seed"] = seed ? Json(*seed) : Json();
    doc["inputs"] = inputs;
    doc["artifacts"] = artifacts;
    doc["version"] = kToolVersion;
    doc["timestamp"] = utc_timestamp();
    doc["status"] = status;
    doc["error"] = error.empty() ? Json() : Json(error);
    write_file_atomic(path, doc.dump(2) + "\n");
  }
};

fs::path manifest_for(const fs::path& artifact) {
  return artifact.string() + ".manifest.json";
}

/// Runs `body`, then records the outcome in the manifest whether or not it
/// succeeded.
int guarded(Manifest& manifest, const fs::path& manifest_path, std::ostream& err,
            const std::function<void()>& body) {
  std::string error;
  try {
    body();
  } catch (const std::exception& e) {
    error = e.what();
  }
  try {
    manifest.write(manifest_path, error.empty() ? "ok" : "failed", error);
  } catch (const std::exception& e) {
    err << "error: could not write manifest " << manifest_path << ": " << e.what() << '\n';
    return kExitFailure;
  }
  if (!error.empty()) {
    err << "error: " << error << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

Json config_json(const RunConfig& config) {
  const TrainConfig& t = config.train;
  return Json{{"lambda_q", t.regularizer.lambda_q},
              {"lambda_h", t.regularizer.lambda_h},
              {"learning_rate", t.learning_rate},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"adam_beta1", t.adam.beta1},
              {"adam_beta2", t.adam.beta2},
              {"adam_epsilon", t.adam.epsilon},
              {"lr_decay_per_epoch", t.lr_decay_per_epoch},
              {"seed", t.seed},
              {"spec_hash", config.spec_hash}};
}

RunConfig load_config(const fs::path& path) {
  return run_config_from_text(read_file(path), path.string());
}

void require_spec_hash(const RunConfig& config, const Dataset& data, const std::string& what) {
  if (config.spec_hash != data.spec_hash)
    throw ConfigError("spec hash mismatch: config expects " + config.spec_hash + " but " + what +
                      " was generated from " + data.spec_hash);
}

// --- reports ------------------------------------------------------------------

Json nan_to_null(double v) { return std::isnan(v) ? Json() : Json(v); }

Json divergence_json(const std::vector<Divergence>& rows) {
  Json out = Json::array();
  for (const auto& d : rows) out.push_back({{"tv", nan_to_null(d.tv)}, {"kl", nan_to_null(d.kl)}});
  return out;
}

Json report_json(const MetricsReport& r) {
  Json doc;
  doc["examples"] = r.examples;
  doc["overall_accuracy"] = r.overall_accuracy;
  Json per_type = Json::array();
  for (std::size_t t = 0; t < r.per_type_accuracy.size(); ++t)
    per_type.push_back({{"type", t},
                        {"count", r.per_type_count[t]},
                        {"accuracy", nan_to_null(r.per_type_accuracy[t])},
                        {"predicted_marginal", r.per_type_marginals[t]}});
  doc["per_type"] = per_type;
  doc["mean_h_vqa"] = r.mean_h_vqa;
  doc["mean_h_qonly"] = r.mean_h_qonly;
  if (!r.vs_train_prior.empty()) {
    doc["vs_train_prior"] = divergence_json(r.vs_train_prior);
    doc["vs_test_prior"] = divergence_json(r.vs_test_prior);
    doc["mean_tv_train_prior"] = nan_to_null(r.mean_tv_train_prior);
    doc["mean_tv_test_prior"] = nan_to_null(r.mean_tv_test_prior);
  }
  return doc;
}

void write_json(const fs::path& path, const Json& doc) {
  write_file_atomic(path, doc.dump(2) + "\n");
  // Validate what landed on disk.
  if (Json::parse(read_file(path)) != doc) throw ParseError("report " + path.string() + " did not round-trip");
}

// --- commands -----------------------------------------------------------------

struct Context {
  std::vector<std::string> args;
  std::ostream& out;
  std::ostream& err;
};

struct SpecOptions {
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_spec(const SpecOptions& o, Context& ctx) {
  Manifest m{"spec", ctx.args};
  m.seed = o.seed;
  return guarded(m, manifest_for(o.out), ctx.err, [&] {
    const WorldSpec spec = default_cp_spec(o.seed);
    write_spec(spec, o.out);
    if (spec_hash(read_spec(o.out)) != spec_hash(spec)) throw ParseError("spec did not round-trip");
    m.artifact("spec", o.out);
    ctx.out << "spec " << spec_hash(spec) << " -> " << o.out << '\n';
  });
}

struct GenerateOptions {
  std::string spec;
  bool use_default = false;
  std::uint64_t spec_seed = 0;
  std::string split;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_generate(const GenerateOptions& o, Context& ctx) {
  Manifest m{"generate", ctx.args};
  m.seed = o.seed;
  m.config = {{"split", o.split}, {"n", o.n}};
  return guarded(m, manifest_for(o.out), ctx.err, [&] {
    WorldSpec spec;
    if (o.use_default) {
      spec = default_cp_spec(o.spec_seed);
      m.config["default_spec_seed"] = o.spec_seed;
    } else {
      m.config_path = o.spec;
      m.input("spec", o.spec);
      spec = read_spec(o.spec);
    }
    const Dataset data = generate_split(spec, parse_split(o.split), o.n, o.seed);
    write_dataset(data, o.out);
    const Dataset back = read_dataset(o.out);
    if (back.size() != data.size() || back.spec_hash != data.spec_hash)
      throw ParseError("dataset " + o.out + " did not round-trip");
    m.artifact("dataset", o.out);
    ctx.out << "wrote " << data.size() << ' ' << o.split << " records (spec " << data.spec_hash
            << ") -> " << o.out << '\n';
  });
}

struct TrainOptions {
  std::string config;
  std::string train_data;
  std::string out;
};

int cmd_train(const TrainOptions& o, Context& ctx) {
  const fs::path dir = o.out;
  Manifest m{"train", ctx.args};
  m.config_path = o.config;
  std::error_code ec;
  fs::create_directories(dir, ec);
  return guarded(m, dir / "manifest.json", ctx.err, [&] {
    m.input("config", o.config);
    const RunConfig config = load_config(o.config);
    m.config = config_json(config);
    m.seed = config.train.seed;
    m.input("train_data", o.train_data);
    const Dataset data = read_dataset(o.train_data);
    require_spec_hash(config, data, o.train_data);

    ModelBundle bundle = ModelBundle::initialize(dims_for(data), init_seed_for(config.train.seed));
    const TrainTrace trace = train(bundle, data, config.train, [&](const EpochRecord& e) {
      ctx.out << "epoch " << e.epoch << " l_vqa " << e.mean_terms.l_vqa << " l_qa "
              << e.mean_terms.l_qa << " l_h " << e.mean_terms.l_h << " acc " << e.train_accuracy
              << " (" << e.seconds << "s)\n";
    });

    const fs::path ckpt = dir / "checkpoint.bin";
    const fs::path trace_path = dir / "trace.csv";
    write_checkpoint(ckpt, bundle, data.spec_hash);
    if (bundle_hash(read_checkpoint(ckpt).bundle) != bundle_hash(bundle))
      throw ParseError("checkpoint did not round-trip");
    write_file_atomic(trace_path, trace_to_csv(trace));
    m.artifact("checkpoint", ckpt);
    m.artifact("trace", trace_path);
    ctx.out << "trained " << trace.epochs.size() << " epochs in " << trace.total_seconds
            << "s -> " << ckpt.string() << '\n';
  });
}

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string spec;
  std::optional<std::uint64_t> default_spec_seed;
  std::string out;
};

int cmd_eval(const EvalOptions& o, Context& ctx) {
  Manifest m{"eval", ctx.args};
  return guarded(m, manifest_for(o.out), ctx.err, [&] {
    m.input("checkpoint", o.checkpoint);
    m.input("data", o.data);
    const Checkpoint ckpt = read_checkpoint(o.checkpoint);
    const Dataset data = read_dataset(o.data);
    std::optional<WorldSpec> world;
    if (!o.spec.empty()) {
      m.input("spec", o.spec);
      world = read_spec(o.spec);
    } else if (o.default_spec_seed) {
      world = default_cp_spec(*o.default_spec_seed);
      m.config["default_spec_seed"] = *o.default_spec_seed;
    }
    if (world && spec_hash(*world) != data.spec_hash)
      throw ConfigError("spec hash " + spec_hash(*world) + " does not match the dataset's " +
                        data.spec_hash);
    const MetricsReport report = evaluate(ckpt.bundle, data, world ? &*world : nullptr);
    Json doc;
    doc["checkpoint_spec_hash"] = ckpt.spec_hash;
    doc["data_spec_hash"] = data.spec_hash;
    doc["split"] = std::string(split_name(data.split));
    doc["bundle_hash"] = bundle_hash(ckpt.bundle);
    doc["metrics"] = report_json(report);
    write_json(o.out, doc);
    m.artifact("report", o.out);
    ctx.out << "accuracy " << report.overall_accuracy << " on " << report.examples
            << " examples -> " << o.out << '\n';
  });
}

struct ProbeOptions {
  std::string checkpoint;
  std::string train_data;
  std::vector<std::string> data;
  std::uint64_t seed = 0;
  ProbeConfig probe;
  std::string out;
};

int cmd_probe(const ProbeOptions& o, Context& ctx) {
  Manifest m{"probe", ctx.args};
  m.seed = o.seed;
  m.config = {{"hidden", o.probe.hidden},
              {"epochs", o.probe.epochs},
              {"batch_size", o.probe.batch_size},
              {"learning_rate", o.probe.learning_rate}};
  return guarded(m, manifest_for(o.out), ctx.err, [&] {
    m.input("checkpoint", o.checkpoint);
    m.input("train_data", o.train_data);
    const Checkpoint ckpt = read_checkpoint(o.checkpoint);
    const Dataset train_set = read_dataset(o.train_data);
    std::vector<Dataset> evals;
    for (std::size_t i = 0; i < o.data.size(); ++i) {
      m.input("data[" + std::to_string(i) + "]", o.data[i]);
      evals.push_back(read_dataset(o.data[i]));
    }
    std::vector<const Dataset*> eval_ptrs;
    for (const auto& d : evals) eval_ptrs.push_back(&d);
    ProbeConfig pc = o.probe;
    pc.seed = o.seed;
    const std::string before = bundle_hash(ckpt.bundle);
    const ProbeReport report = qonly_probe(ckpt.bundle, train_set, eval_ptrs, pc);
    if (bundle_hash(ckpt.bundle) != before) throw ContractError("probe modified the bundle");
    Json doc;
    doc["bundle_hash"] = before;
    doc["train_accuracy"] = report.train_accuracy;
    Json rows = Json::array();
    for (std::size_t i = 0; i < o.data.size(); ++i)
      rows.push_back({{"data", o.data[i]},
                      {"split", std::string(split_name(evals[i].split))},
                      {"accuracy", report.eval_accuracy[i]}});
    doc["eval"] = rows;
    write_json(o.out, doc);
    m.artifact("report", o.out);
    ctx.out << "probe train accuracy " << report.train_accuracy;
    for (double a : report.eval_accuracy) ctx.out << ", eval " << a;
    ctx.out << " -> " << o.out << '\n';
  });
}

struct SweepOptions {
  std::string config;
  std::string train_data;
  std::string test_data;
  std::vector<double> lambda_q;
  std::vector<double> lambda_h;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
  bool probe = false;
  std::string out;
};

int cmd_sweep(const SweepOptions& o, Context& ctx) {
  Manifest m{"sweep", ctx.args};
  m.config_path = o.config;
  return guarded(m, manifest_for(o.out), ctx.err, [&] {
    m.input("config", o.config);
    const RunConfig config = load_config(o.config);
    m.config = config_json(config);
    m.config["lambda_q_grid"] = o.lambda_q;
    m.config["lambda_h_grid"] = o.lambda_h;
    m.config["probe"] = o.probe;
    m.input("train_data", o.train_data);
    m.input("test_data", o.test_data);
    const Dataset train_set = read_dataset(o.train_data);
    const Dataset test_set = read_dataset(o.test_data);
    require_spec_hash(config, train_set, o.train_data);
    require_spec_hash(config, test_set, o.test_data);

    std::vector<SweepPoint> grid;
    for (double q : o.lambda_q)
      for (double h : o.lambda_h) grid.push_back({q, h});
    const std::vector<std::uint64_t> seeds =
        o.seeds.empty() ? std::vector<std::uint64_t>{config.train.seed} : o.seeds;
    m.config["seeds"] = seeds;
    std::optional<ProbeConfig> probe;
    if (o.probe) probe = ProbeConfig{};
    const auto rows = lambda_sweep(config.train, grid, seeds, train_set, test_set, probe, o.jobs);
    write_file_atomic(o.out, sweep_to_csv(rows));
    if (read_file(o.out) != sweep_to_csv(rows)) throw ParseError("sweep table did not round-trip");
    m.artifact("table", o.out);
    std::size_t failed = 0;
    for (const auto& r : rows) failed += !r.error.empty();
    ctx.out << rows.size() << " runs (" << failed << " failed) -> " << o.out << '\n';
  });
}

struct EnsembleOptions {
  std::vector<std::string> checkpoints;
  std::string data;
  std::string out;
};

int cmd_ensemble(const EnsembleOptions& o, Context& ctx) {
  Manifest m{"ensemble", ctx.args};
  return guarded(m, manifest_for(o.out), ctx.err, [&] {
    m.input("checkpoint_a", o.checkpoints.at(0));
    m.input("checkpoint_b", o.checkpoints.at(1));
    m.input("data", o.data);
    const Checkpoint a = read_checkpoint(o.checkpoints[0]);
    const Checkpoint b = read_checkpoint(o.checkpoints[1]);
    const Dataset data = read_dataset(o.data);
    std::vector<std::size_t> labels;
    for (const auto& r : data.records) labels.push_back(r.answer);
    const EnsembleReport r = ensembles(run_model(a.bundle, data).probabilities,
                                       run_model(b.bundle, data).probabilities, labels);
    Json doc;
    doc["examples"] = data.size();
    doc["accuracy_a"] = r.accuracy_a;
    doc["accuracy_b"] = r.accuracy_b;
    doc["oracle_accuracy"] = r.oracle_accuracy;
    doc["mean_accuracy"] = r.mean_accuracy;
    write_json(o.out, doc);
    m.artifact("report", o.out);
    ctx.out << "members " << r.accuracy_a << " / " << r.accuracy_b << ", oracle "
            << r.oracle_accuracy << ", mean " << r.mean_accuracy << " -> " << o.out << '\n';
  });
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarially regularized question+image classifiers on a synthetic benchmark",
               "advreg"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  Context ctx{args, out, err};
  std::function<int()> action;

  SpecOptions spec_o;
  auto* spec = app.add_subcommand("spec", "Write the default world description");
  spec->add_option("--seed", spec_o.seed, "Seed for priors and prototypes");
  spec->add_option("--out", spec_o.out, "Output spec file")->required();
  spec->callback([&] { action = [&] { return cmd_spec(spec_o, ctx); }; });

  GenerateOptions gen_o;
  auto* gen = app.add_subcommand("generate", "Sample a dataset split");
  auto* gen_spec = gen->add_option("--spec", gen_o.spec, "World spec file")->check(CLI::ExistingFile);
  auto* gen_default = gen->add_flag("--default", gen_o.use_default, "Use the default world");
  gen_spec->excludes(gen_default);
  gen->add_option("--spec-seed", gen_o.spec_seed, "Seed of the default world")->needs(gen_default);
  gen->add_option("--split", gen_o.split, "train or test")
      ->required()
      ->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--n", gen_o.n, "Number of records")
      ->required()
      ->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()));
  gen->add_option("--seed", gen_o.seed, "Sampling seed")->required();
  gen->add_option("--out", gen_o.out, "Output dataset file")->required();
  gen->callback([&] {
    if (gen_o.spec.empty() && !gen_o.use_default)
      throw CLI::ValidationError("generate", "one of --spec or --default is required");
    action = [&] { return cmd_generate(gen_o, ctx); };
  });

  TrainOptions train_o;
  auto* tr = app.add_subcommand("train", "Train a bundle");
  tr->add_option("--config", train_o.config, "Run config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--train-data", train_o.train_data, "Training dataset")
      ->required()
      ->check(CLI::ExistingFile);
  tr->add_option("--out", train_o.out, "Output directory")->required();
  tr->callback([&] { action = [&] { return cmd_train(train_o, ctx); }; });

  EvalOptions eval_o;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", eval_o.checkpoint)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", eval_o.data)->required()->check(CLI::ExistingFile);
  auto* ev_spec = ev->add_option("--spec", eval_o.spec, "World spec for prior divergences")
                      ->check(CLI::ExistingFile);
  ev->add_option("--default-spec", eval_o.default_spec_seed,
                 "Use the default world with this seed for prior divergences")
      ->excludes(ev_spec);
  ev->add_option("--out", eval_o.out, "Report file (JSON)")->required();
  ev->callback([&] { action = [&] { return cmd_eval(eval_o, ctx); }; });

  ProbeOptions probe_o;
  auto* pr = app.add_subcommand("probe", "Question-only probe on frozen encodings");
  pr->add_option("--checkpoint", probe_o.checkpoint)->required()->check(CLI::ExistingFile);
  pr->add_option("--train-data", probe_o.train_data)->required()->check(CLI::ExistingFile);
  pr->add_option("--data", probe_o.data, "Evaluation datasets")->check(CLI::ExistingFile);
  pr->add_option("--seed", probe_o.seed)->required();
  pr->add_option("--epochs", probe_o.probe.epochs)->check(CLI::PositiveNumber);
  pr->add_option("--out", probe_o.out, "Report file (JSON)")->required();
  pr->callback([&] { action = [&] { return cmd_probe(probe_o, ctx); }; });

  SweepOptions sweep_o;
  auto* sw = app.add_subcommand("sweep", "Train and evaluate over a lambda grid");
  sw->add_option("--config", sweep_o.config)->required()->check(CLI::ExistingFile);
  sw->add_option("--train-data", sweep_o.train_data)->required()->check(CLI::ExistingFile);
  sw->add_option("--test-data", sweep_o.test_data)->required()->check(CLI::ExistingFile);
  sw->add_option("--lambda-q", sweep_o.lambda_q, "Comma-separated values")
      ->required()
      ->delimiter(',')
      ->check(CLI::NonNegativeNumber);
  sw->add_option("--lambda-h", sweep_o.lambda_h, "Comma-separated values")
      ->required()
      ->delimiter(',')
      ->check(CLI::NonNegativeNumber);
  sw->add_option("--seeds", sweep_o.seeds, "Comma-separated seeds (default: config seed)")
      ->delimiter(',');
  sw->add_option("--jobs", sweep_o.jobs)->check(CLI::PositiveNumber);
  sw->add_flag("--probe", sweep_o.probe, "Also run the question-only probe per run");
  sw->add_option("--out", sweep_o.out, "Sweep table (CSV)")->required();
  sw->callback([&] { action = [&] { return cmd_sweep(sweep_o, ctx); }; });

  EnsembleOptions ens_o;
  auto* en = app.add_subcommand("ensemble", "Oracle and mean ensembles of two checkpoints");
  en->add_option("--checkpoints", ens_o.checkpoints)
      ->required()
      ->expected(2)
      ->check(CLI::ExistingFile);
  en->add_option("--data", ens_o.data)->required()->check(CLI::ExistingFile);
  en->add_option("--out", ens_o.out, "Report file (JSON)")->required();
  en->callback([&] { action = [&] { return cmd_ensemble(ens_o, ctx); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  return action ? action() : kExitUsage;
}

}  // namespace advreg
