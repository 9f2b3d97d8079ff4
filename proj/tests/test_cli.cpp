// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "advreg/checkpoint.hpp"
#include "advreg/cli.hpp"
#include "advreg/errors.hpp"
#include "advreg/hash.hpp"
#include "advreg/synthcp.hpp"

using namespace advreg;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("advreg_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run_cli(args, out_, err_);
  }

  void write_config(const std::string& name, const std::string& spec_hash, std::size_t epochs = 1,
                    const std::string& extra = "") {
    write_file_atomic(path(name), "lambda_q = 0.5\nlambda_h = 1\nepochs = " + std::to_string(epochs) +
                                      "\nseed = 3\nbatch_size = 64\nspec_hash = " + spec_hash + "\n" + extra);
  }

  /// Default world train/test files; returns the spec hash.
  std::string make_data(std::size_t n_train = 200, std::size_t n_test = 100) {
    EXPECT_EQ(run({"generate", "--default", "--split", "train", "--n", std::to_string(n_train),
                   "--seed", "1", "--out", path("train.jsonl")}),
              kExitOk)
        << err_.str();
    EXPECT_EQ(run({"generate", "--default", "--split", "test", "--n", std::to_string(n_test), "--seed",
                   "2", "--out", path("test.jsonl")}),
              kExitOk)
        << err_.str();
    return read_dataset(path("train.jsonl")).spec_hash;
  }

  Json manifest(const std::string& name) const { return Json::parse(read_file(path(name))); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run({"generate", "--default", "--split", "train", "--n", "0", "--seed", "1", "--out",
                 path("x.jsonl")}),
            kExitUsage);
  EXPECT_FALSE(fs::exists(path("x.jsonl")));
  EXPECT_EQ(run({"generate", "--default", "--split", "valid", "--n", "5", "--seed", "1", "--out",
                 path("x.jsonl")}),
            kExitUsage);
  EXPECT_EQ(run({"generate", "--split", "train", "--n", "5", "--seed", "1", "--out", path("x.jsonl")}),
            kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), kExitUsage);
  EXPECT_EQ(run({}), kExitUsage);
  EXPECT_EQ(run({"--version"}), kExitOk);
  EXPECT_NE(out_.str().find(kToolVersion), std::string::npos);
}

TEST_F(Cli, GenerateIsByteIdenticalAcrossReruns) {
  const std::string spec = path("spec.txt");
  ASSERT_EQ(run({"spec", "--seed", "4", "--out", spec}), kExitOk) << err_.str();
  for (const char* name : {"a.jsonl", "b.jsonl"})
    ASSERT_EQ(run({"generate", "--spec", spec, "--split", "test", "--n", "50", "--seed", "8", "--out",
                   path(name)}),
              kExitOk);
  EXPECT_EQ(read_file(path("a.jsonl")), read_file(path("b.jsonl")));
  const Json m = manifest("a.jsonl.manifest.json");
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["seed"], 8);
  EXPECT_EQ(m["artifacts"]["dataset"]["hash"], file_hash(path("a.jsonl")));
  EXPECT_EQ(m["inputs"]["spec"]["hash"], file_hash(spec));
  EXPECT_EQ(read_dataset(path("a.jsonl")).spec_hash, spec_hash(default_cp_spec(4)));
}

TEST_F(Cli, ConfigErrorsNameTheKey) {
  const std::string hash = make_data();
  write_file_atomic(path("missing.cfg"), "lambda_q = 0\nlambda_h = 0\nepochs = 1\nseed = 1\n");
  EXPECT_EQ(run({"train", "--config", path("missing.cfg"), "--train-data", path("train.jsonl"), "--out",
                 path("run")}),
            kExitFailure);
  EXPECT_NE(err_.str().find("missing key 'spec_hash'"), std::string::npos) << err_.str();
  const Json m = manifest("run/manifest.json");
  EXPECT_EQ(m["status"], "failed");
  EXPECT_NE(m["error"].get<std::string>().find("spec_hash"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("run/checkpoint.bin")));

  write_config("typo.cfg", hash, 1, "lamda_q = 2\n");
  EXPECT_EQ(run({"train", "--config", path("typo.cfg"), "--train-data", path("train.jsonl"), "--out",
                 path("run2")}),
            kExitFailure);
  EXPECT_NE(err_.str().find("unknown field 'lamda_q'"), std::string::npos) << err_.str();

  write_file_atomic(path("neg.cfg"),
                    "lambda_q = -1\nlambda_h = 0\nepochs = 1\nseed = 1\nspec_hash = " + hash + "\n");
  EXPECT_EQ(run({"train", "--config", path("neg.cfg"), "--train-data", path("train.jsonl"), "--out",
                 path("run3")}),
            kExitFailure);
  EXPECT_NE(err_.str().find("lambda_q"), std::string::npos) << err_.str();
}

TEST_F(Cli, ConfigTextRoundTrips) {
  RunConfig c;
  c.train.regularizer = {0.125, 3.0};
  c.train.epochs = 7;
  c.train.learning_rate = 2.5e-4;
  c.train.lr_decay_per_epoch = 0.9;
  c.train.seed = 11;
  c.spec_hash = "abc";
  const RunConfig back = run_config_from_text(run_config_to_text(c), "cfg");
  EXPECT_EQ(run_config_to_text(back), run_config_to_text(c));
  EXPECT_EQ(back.train.regularizer, c.train.regularizer);
  EXPECT_THROW(run_config_from_text("lambda_q = 0\n", "cfg"), ParseError);
}

TEST_F(Cli, TrainRefusesDataFromAnotherWorld) {
  make_data();
  write_config("other.cfg", "0123456789abcdef");
  EXPECT_EQ(run({"train", "--config", path("other.cfg"), "--train-data", path("train.jsonl"), "--out",
                 path("run")}),
            kExitFailure);
  EXPECT_NE(err_.str().find("spec hash mismatch"), std::string::npos) << err_.str();
}

TEST_F(Cli, TrainEvalProbeEnsemble) {
  const std::string hash = make_data();
  write_config("run.cfg", hash, 2);
  ASSERT_EQ(run({"train", "--config", path("run.cfg"), "--train-data", path("train.jsonl"), "--out",
                 path("run")}),
            kExitOk)
      << err_.str();
  const Json tm = manifest("run/manifest.json");
  EXPECT_EQ(tm["status"], "ok");
  EXPECT_EQ(tm["config"]["lambda_q"], 0.5);
  EXPECT_EQ(tm["artifacts"]["checkpoint"]["hash"], file_hash(path("run/checkpoint.bin")));
  const std::string ckpt_bytes = read_file(path("run/checkpoint.bin"));

  // Retraining from the same inputs reproduces every artifact byte for byte.
  ASSERT_EQ(run({"train", "--config", path("run.cfg"), "--train-data", path("train.jsonl"), "--out",
                 path("again")}),
            kExitOk);
  EXPECT_EQ(read_file(path("again/checkpoint.bin")), ckpt_bytes);
  EXPECT_EQ(read_file(path("again/trace.csv")), read_file(path("run/trace.csv")));

  ASSERT_EQ(run({"eval", "--checkpoint", path("run/checkpoint.bin"), "--data", path("test.jsonl"),
                 "--default-spec", "0", "--out", path("eval.json")}),
            kExitOk)
      << err_.str();
  const Json report = Json::parse(read_file(path("eval.json")));
  EXPECT_EQ(report["split"], "test");
  EXPECT_EQ(report["metrics"]["examples"], 100);
  EXPECT_EQ(report["metrics"]["per_type"].size(), 8u);
  EXPECT_EQ(report["metrics"]["vs_train_prior"].size(), 8u);

  ASSERT_EQ(run({"probe", "--checkpoint", path("run/checkpoint.bin"), "--train-data", path("train.jsonl"),
                 "--data", path("test.jsonl"), "--seed", "5", "--epochs", "2", "--out",
                 path("probe.json")}),
            kExitOk)
      << err_.str();
  const Json probe = Json::parse(read_file(path("probe.json")));
  EXPECT_EQ(probe["bundle_hash"], bundle_hash(read_checkpoint(path("run/checkpoint.bin")).bundle));
  EXPECT_EQ(probe["eval"][0]["split"], "test");
  EXPECT_EQ(read_file(path("run/checkpoint.bin")), ckpt_bytes);

  ASSERT_EQ(run({"ensemble", "--checkpoints", path("run/checkpoint.bin"), path("again/checkpoint.bin"),
                 "--data", path("test.jsonl"), "--out", path("ens.json")}),
            kExitOk)
      << err_.str();
  const Json ens = Json::parse(read_file(path("ens.json")));
  EXPECT_EQ(ens["oracle_accuracy"], ens["accuracy_a"]);
  EXPECT_EQ(ens["mean_accuracy"], ens["accuracy_a"]);
  EXPECT_EQ(ens["accuracy_a"], report["metrics"]["overall_accuracy"]);
}

TEST_F(Cli, ShapeMismatchNamesDimensions) {
  const std::string hash = make_data();
  write_config("run.cfg", hash, 1);
  ASSERT_EQ(run({"train", "--config", path("run.cfg"), "--train-data", path("train.jsonl"), "--out",
                 path("run")}),
            kExitOk);
  WorldSpec narrow = default_cp_spec(0);
  narrow.feature_dim = 8;
  Tensor protos({narrow.num_answers(), 8});
  for (std::size_t a = 0; a < narrow.num_answers(); ++a)
    for (std::size_t c = 0; c < 8; ++c) protos.at(a, c) = narrow.prototypes.at(a, c);
  narrow.prototypes = protos;
  write_spec(narrow, path("narrow.txt"));
  ASSERT_EQ(run({"generate", "--spec", path("narrow.txt"), "--split", "test", "--n", "10", "--seed", "1",
                 "--out", path("narrow.jsonl")}),
            kExitOk);
  EXPECT_EQ(run({"eval", "--checkpoint", path("run/checkpoint.bin"), "--data", path("narrow.jsonl"),
                 "--out", path("bad.json")}),
            kExitFailure);
  EXPECT_NE(err_.str().find("feature_dim: model 16 vs data 8"), std::string::npos) << err_.str();
  EXPECT_EQ(manifest("bad.json.manifest.json")["status"], "failed");
  EXPECT_FALSE(fs::exists(path("bad.json")));
}

TEST_F(Cli, SweepWritesOneRowPerGridPointAndSeed) {
  const std::string hash = make_data(120, 60);
  write_config("sweep.cfg", hash, 1);
  ASSERT_EQ(run({"sweep", "--config", path("sweep.cfg"), "--train-data", path("train.jsonl"),
                 "--test-data", path("test.jsonl"), "--lambda-q", "0,0.5,2", "--lambda-h", "0,1,5",
                 "--seeds", "1,2", "--jobs", "2", "--out", path("sweep.csv")}),
            kExitOk)
      << err_.str();
  std::istringstream csv(read_file(path("sweep.csv")));
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    EXPECT_NE(line.find(",ok"), std::string::npos) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 18u);
  const Json m = manifest("sweep.csv.manifest.json");
  EXPECT_EQ(m["config"]["seeds"], Json::array({1, 2}));
  EXPECT_EQ(run({"sweep", "--config", path("sweep.cfg"), "--train-data", path("train.jsonl"),
                 "--test-data", path("test.jsonl"), "--lambda-q", "-1", "--lambda-h", "0", "--out",
                 path("neg.csv")}),
            kExitUsage);
}
