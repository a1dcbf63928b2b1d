#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "foc/commands.hpp"
#include "foc/trainer.hpp"

using namespace foc;
namespace fs = std::filesystem;

namespace {

const char* kQuickConfig =
    "seed = 3\n"
    "[train]\n"
    "epochs = 3\n"
    "warmup_epochs = 2\n"
    "head_only_epochs = 1\n"
    "[model]\n"
    "hidden_dims = 8\n"
    "head_copies = 2\n"
    "[gen]\n"
    "component.0.count = 40\n"
    "component.1.count = 40\n"
    "component.2.count = 40\n";

class Commands : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("foc_cmd_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write(path("run.ini"), kQuickConfig);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  static void write(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
  }
  static std::string read(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

  int cli(const std::string& args) const {
#ifdef FOC_CLI_PATH
    const std::string cmd = std::string("\"") + FOC_CLI_PATH + "\" " + args + " > \"" +
                            (dir_ / "stdout.txt").string() + "\" 2> \"" + (dir_ / "stderr.txt").string() + "\"";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
#else
    (void)args;
    return -1;
#endif
  }
  std::string cli_stderr() const { return read(dir_ / "stderr.txt"); }
  std::string q(const std::string& name) const { return "\"" + path(name).string() + "\""; }

  RunConfig config() const { return load_run_config(path("run.ini")); }

  fs::path dir_;
};

}  // namespace

TEST_F(Commands, GenDataIsDeterministic) {
  std::ostringstream log;
  cmd_gen_data(config(), path("a.csv"), log);
  cmd_gen_data(config(), path("b.csv"), log);
  const std::string a = read(path("a.csv"));
  EXPECT_EQ(a, read(path("b.csv")));
  EXPECT_EQ(static_cast<std::size_t>(std::count(a.begin(), a.end(), '\n')), 121u);
  EXPECT_EQ(load_dataset(path("a.csv")).size(), 120u);
}

TEST_F(Commands, TrainEvalReport) {
  std::ostringstream log;
  const RunConfig cfg = config();
  cmd_gen_data(cfg, path("data.csv"), log);
  const auto out = cmd_train(cfg, path("data.csv"), path("run"), std::nullopt, log);
  ASSERT_TRUE(fs::exists(out.checkpoint));
  ASSERT_TRUE(fs::exists(out.metrics_log));
  ASSERT_TRUE(fs::exists(out.manifest));

  std::ifstream ml(out.metrics_log);
  std::string line;
  std::size_t records = 0;
  std::getline(ml, line);
  EXPECT_TRUE(is_metrics_header(line));
  while (std::getline(ml, line)) records += !line.empty();
  EXPECT_EQ(records, 5u);  // 2 warm-up + 3 fine-tune

  const auto doc = nlohmann::json::parse(cmd_eval(out.checkpoint, path("data.csv"), cfg));
  EXPECT_TRUE(doc.contains("normal"));
  EXPECT_TRUE(doc["normal"].contains("accuracy"));
  EXPECT_TRUE(doc["over"].contains("macro_f1"));
  EXPECT_TRUE(doc.contains("consistency"));
  EXPECT_EQ(doc["points"].size(), 120u);
  const double acc = doc["normal"]["accuracy"].get<double>();
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);

  write(path("eval.json"), doc.dump());
  cmd_report(out.metrics_log, path("report.csv"), path("eval.json"), path("scatter.csv"));
  const std::string rep = read(path("report.csv"));
  EXPECT_EQ(rep.rfind("epoch,phase,", 0), 0u);
  EXPECT_EQ(std::count(rep.begin(), rep.end(), '\n'), 6);
  const std::string sc = read(path("scatter.csv"));
  EXPECT_EQ(std::count(sc.begin(), sc.end(), '\n'), 121);
}

TEST_F(Commands, ZeroEpochsWritesInitialModel) {
  RunConfig cfg = config();
  cfg.train.epochs = 0;
  cfg.train.warmup_epochs = 0;
  std::ostringstream log;
  cmd_gen_data(cfg, path("data.csv"), log);
  const auto out = cmd_train(cfg, path("data.csv"), path("run"), std::nullopt, log);
  const ModelState m = load_checkpoint(out.checkpoint);
  ModelConfig mc = cfg.model;
  mc.input_dim = 2;
  mc.k_gt = 2;
  const ModelState fresh = init_model(mc, derive_seed(cfg.seed, "init"));
  EXPECT_EQ(backbone_hash(m), backbone_hash(fresh));
}

TEST_F(Commands, EvalWithoutComponents) {
  const RunConfig cfg = config();
  std::ostringstream log;
  cmd_gen_data(cfg, path("data.csv"), log);
  const auto out = cmd_train(cfg, path("data.csv"), path("run"), std::nullopt, log);
  Dataset d = load_dataset(path("data.csv"));
  for (auto& c : d.component) c.reset();
  save_dataset(d, path("nocomp.csv"));
  const auto doc = nlohmann::json::parse(cmd_eval(out.checkpoint, path("nocomp.csv"), cfg));
  EXPECT_FALSE(doc.contains("consistency"));
}

TEST_F(Commands, EvalDimensionMismatch) {
  const RunConfig cfg = config();
  std::ostringstream log;
  cmd_gen_data(cfg, path("data.csv"), log);
  const auto out = cmd_train(cfg, path("data.csv"), path("run"), std::nullopt, log);
  write(path("wide.csv"), "id,f0,f1,f2,label,split,component\n0,1,2,3,0,validation,\n1,1,2,3,1,validation,\n");
  EXPECT_THROW(cmd_eval(out.checkpoint, path("wide.csv"), cfg), ConfigError);
}

TEST_F(Commands, ReportErrors) {
  const std::string good = metrics_line(MetricsRecord{});
  write(path("bad.jsonl"), metrics_header_line(TrainConfig{}) + "\n" + good + "\n{oops\n");
  try {
    cmd_report(path("bad.jsonl"), path("r.csv"), std::nullopt, std::nullopt);
    ADD_FAILURE() << "malformed log accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  write(path("empty.jsonl"), "");
  cmd_report(path("empty.jsonl"), path("r.csv"), std::nullopt, std::nullopt);
  const std::string header_only = read(path("r.csv"));
  EXPECT_EQ(std::count(header_only.begin(), header_only.end(), '\n'), 1);
}

#ifdef FOC_CLI_PATH

TEST_F(Commands, CliExitCodes) {
  EXPECT_EQ(cli("--version"), 0);
  EXPECT_EQ(cli("defaults"), 0);
  EXPECT_EQ(cli("gen-data"), 1);
  EXPECT_EQ(cli("no-such-command"), 1);
  EXPECT_EQ(cli("gen-data --config " + q("run.ini") + " --out " + q("d.csv")), 0);
  EXPECT_EQ(cli("gen-data --config " + q("run.ini") + " --out " + q("d2.csv")), 0);
  EXPECT_EQ(read(path("d.csv")), read(path("d2.csv")));
  EXPECT_NE(cli("gen-data --config " + q("run.ini") + " --out " + q("missing/dir/d.csv")), 0);

  write(path("broken.ini"), "[train]\nepochs = lots\n");
  EXPECT_EQ(cli("gen-data --config " + q("broken.ini") + " --out " + q("x.csv")), 1);
  EXPECT_NE(cli_stderr().find("train.epochs"), std::string::npos);
}

TEST_F(Commands, CliTrainEvalReport) {
  ASSERT_EQ(cli("gen-data --config " + q("run.ini") + " --out " + q("d.csv")), 0);
  ASSERT_EQ(cli("train --config " + q("run.ini") + " --data " + q("d.csv") + " --out " + q("run")), 0);
  EXPECT_TRUE(fs::exists(path("run") / "checkpoint.focckpt"));
  EXPECT_TRUE(fs::exists(path("run") / "metrics.jsonl"));
  EXPECT_TRUE(fs::exists(path("run") / "manifest.json"));
  ASSERT_EQ(cli("eval --checkpoint " + q("run/checkpoint.focckpt") + " --data " + q("d.csv") + " --config " +
                q("run.ini") + " --out " + q("eval.json")),
            0);
  EXPECT_TRUE(nlohmann::json::parse(read(path("eval.json"))).contains("over"));
  EXPECT_EQ(cli("report --metrics " + q("run/metrics.jsonl") + " --out " + q("r.csv") + " --eval " +
                q("eval.json")),
            0);
  EXPECT_TRUE(fs::exists(path("r.scatter.csv")));

  write(path("bad.jsonl"), "{\"epoch\": 1}\n{\"epoch\": 2}\nnope\n");
  EXPECT_EQ(cli("report --metrics " + q("bad.jsonl") + " --out " + q("r2.csv")), 1);
  EXPECT_NE(cli_stderr().find("line"), std::string::npos);
}

TEST_F(Commands, CliSingleClassData) {
  write(path("one.csv"),
        "id,f0,f1,label,split,component\n"
        "0,1,1,0,labeled,\n1,1.1,1,0,labeled,\n2,0.9,1,0,validation,\n3,0,0,,unlabeled,\n4,5,5,1,validation,\n");
  EXPECT_EQ(cli("train --config " + q("run.ini") + " --data " + q("one.csv") + " --out " + q("run")), 1);
  EXPECT_NE(cli_stderr().find("inverse cross-entropy"), std::string::npos);
}

TEST_F(Commands, CliEvalDimensionMismatch) {
  ASSERT_EQ(cli("gen-data --config " + q("run.ini") + " --out " + q("d.csv")), 0);
  ASSERT_EQ(cli("train --config " + q("run.ini") + " --data " + q("d.csv") + " --out " + q("run")), 0);
  write(path("wide.csv"), "id,f0,f1,f2,label,split,component\n0,1,2,3,0,validation,\n1,1,2,3,1,validation,\n");
  EXPECT_NE(cli("eval --checkpoint " + q("run/checkpoint.focckpt") + " --data " + q("wide.csv")), 0);
}

#endif
