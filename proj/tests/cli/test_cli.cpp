#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "ata/dataset.hpp"
#include "ata/model_io.hpp"
#include "ata/rollout.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr discarded; returns exit status and stdout.
Run cli(const std::string& args) {
  const std::string cmd = std::string(ATA_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// synth-bench -> split -> fit -> train-router, shared by the tests below.
struct Workspace {
  testutil::TempDir tmp{"cli"};
  fs::path raw = tmp / "raw";
  fs::path data = tmp / "data";
  fs::path bundle = tmp / "bundle";
  fs::path router = tmp / "router";

  Workspace() {
    REQUIRE(cli("synth-bench --seed 3 --n-per-class 150 --vision-dim 24 --text-dim 20 --out " + q(raw)).code == 0);
    REQUIRE(cli("split --seed 4 --data " + q(raw) + " --out " + q(data)).code == 0);
    REQUIRE(cli("fit --config gmm_vision --k 3 --rho 0.01 --starts 5 --seed 7 --data " + q(data) +
                " --out " + q(bundle))
                .code == 0);
    REQUIRE(cli("train-router --seed 8 --max-epochs 60 --data " + q(data) + " --bundle " + q(bundle) +
                " --out " + q(router))
                .code == 0);
  }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("fit echoes the requested hyperparameters") {
  auto& w = workspace();
  json cfg = ata::read_json(w.bundle / "config.json");
  CHECK(cfg["name"] == "gmm_vision");
  CHECK(cfg["k"] == 3);
  CHECK(cfg["rho"] == 0.01);
  CHECK(cfg["n_starts"] == 5);
  CHECK(cfg["seed"] == 7);
  CHECK(fs::exists(w.bundle / "run_config.json"));
  CHECK(fs::exists(w.router / "run_config.json"));
  CHECK(fs::exists(w.router / "training.json"));
}

TEST_CASE("route exit code matches the printed decision") {
  auto& w = workspace();
  auto data = ata::load_dataset(w.data);
  const std::map<std::string, int> code_of = {{"Act", 0}, {"Think", 10}, {"Abstain", 20}};
  bool saw_act = false, saw_abstain = false;
  for (auto label : {ata::Label::kId, ata::Label::kFullOod}) {
    auto ids = data.ids(ata::Split::kValidation, label);
    for (std::size_t i = 0; i < 5 && i < ids.size(); ++i) {
      auto r = cli("route --bundle " + q(w.bundle) + " --router " + q(w.router) + " --data " +
                   q(w.data) + " --id " + ids[i]);
      json d = json::parse(r.out);
      CHECK(r.code == code_of.at(d["strategy"]));
      double total = d["probabilities"]["Act"].get<double>() + d["probabilities"]["Think"].get<double>() +
                     d["probabilities"]["Abstain"].get<double>();
      CHECK(total == doctest::Approx(1.0));
      saw_act |= label == ata::Label::kId && r.code == 0;
      saw_abstain |= label == ata::Label::kFullOod && r.code == 20;
    }
  }
  CHECK(saw_act);
  CHECK(saw_abstain);
}

TEST_CASE("route accepts a sample file") {
  auto& w = workspace();
  auto data = ata::load_dataset(w.data);
  const auto id = data.ids(ata::Split::kValidation, ata::Label::kId).front();
  Eigen::VectorXd v = data.vector(ata::Modality::kVision, id);
  json sample = {{"id", id}, {"vision", std::vector<double>(v.data(), v.data() + v.size())}};
  std::ofstream(w.tmp / "sample.json") << sample.dump();
  auto from_file = cli("route --bundle " + q(w.bundle) + " --router " + q(w.router) + " --sample " +
                       q(w.tmp / "sample.json"));
  auto from_data = cli("route --bundle " + q(w.bundle) + " --router " + q(w.router) + " --data " +
                       q(w.data) + " --id " + id);
  CHECK(from_file.code == from_data.code);
  CHECK(json::parse(from_file.out)["strategy"] == json::parse(from_data.out)["strategy"]);
}

TEST_CASE("on-think hook runs once for a Think decision") {
  auto& w = workspace();
  auto data = ata::load_dataset(w.data);
  const fs::path marker = w.tmp / "thought.txt";
  bool found = false;
  for (const auto& id : data.ids(ata::Split::kValidation, ata::Label::kPartialOod)) {
    const std::string base =
        "route --bundle " + q(w.bundle) + " --router " + q(w.router) + " --data " + q(w.data) + " --id " + id;
    if (cli(base).code != 10) continue;
    fs::remove(marker);
    auto r = cli(base + " --on-think 'echo \"$ATA_SAMPLE_ID\" >> " + marker.string() + "'");
    CHECK(r.code == 10);
    CHECK(slurp(marker) == id + "\n");
    found = true;
    break;
  }
  REQUIRE(found);
  auto act_id = data.ids(ata::Split::kValidation, ata::Label::kId).front();
  fs::remove(marker);
  auto r = cli("route --bundle " + q(w.bundle) + " --router " + q(w.router) + " --data " + q(w.data) +
               " --id " + act_id + " --on-think 'touch " + marker.string() + "'");
  if (r.code != 10) CHECK(!fs::exists(marker));
}

TEST_CASE("eval writes the report, confusion table and predictions") {
  auto& w = workspace();
  const fs::path out = w.tmp / "eval";
  auto r = cli("eval --json --router " + q(w.router) + " --bundle " + q(w.bundle) + " --data " + q(w.data) +
               " --out " + q(out));
  REQUIRE(r.code == 0);
  json report = ata::read_json(out / "report.json");
  CHECK(report["confusion"].size() == 3);
  for (const auto& row : report["confusion"]) CHECK(row.size() == 3);
  CHECK(report.contains("macro_f1"));
  CHECK(report.contains("macro_precision"));
  CHECK(report.contains("macro_recall"));
  CHECK(slurp(out / "confusion.csv").rfind("truth,predicted,count,row_fraction", 0) == 0);
  CHECK(fs::exists(out / "predictions.jsonl"));
  CHECK(fs::exists(out / "run_config.json"));
}

TEST_CASE("eval on exported scores matches eval on the dataset") {
  auto& w = workspace();
  const fs::path scores = w.tmp / "val_scores.ataf";
  REQUIRE(cli("score --bundle " + q(w.bundle) + " --data " + q(w.data) + " --split validation --out " +
              q(scores))
              .code == 0);
  const fs::path a = w.tmp / "eval_a", b = w.tmp / "eval_b";
  REQUIRE(cli("eval --router " + q(w.router) + " --bundle " + q(w.bundle) + " --data " + q(w.data) +
              " --out " + q(a))
              .code == 0);
  REQUIRE(cli("eval --router " + q(w.router) + " --scores " + q(scores) + " --manifest " +
              q(w.data / "manifest.jsonl") + " --out " + q(b))
              .code == 0);
  CHECK(ata::read_json(a / "report.json")["confusion"] == ata::read_json(b / "report.json")["confusion"]);
}

TEST_CASE("simulate reproduces the Goal/swap row") {
  testutil::TempDir tmp("sim");
  auto log = oracle::table_goal_swap_fixture();
  ata::write_episode_log(log, tmp / "episodes.jsonl");
  auto r = cli("simulate --json --log " + q(tmp / "episodes.jsonl") + " --out " + q(tmp / "out"));
  REQUIRE(r.code == 0);
  CHECK(slurp(tmp / "out" / "rollout.csv").find("Goal,swap,30,0.00,28,0 / 2 / 28,4.33") !=
        std::string::npos);
}

TEST_CASE("subcommands are idempotent") {
  auto& w = workspace();
  const fs::path again = w.tmp / "bundle2";
  REQUIRE(cli("fit --config gmm_vision --k 3 --rho 0.01 --starts 5 --seed 7 --data " + q(w.data) +
              " --out " + q(again))
              .code == 0);
  for (const auto* f : {"vision/gmm/means.ataf", "vision/gmm/factors.ataf", "vision/pre/components.ataf"}) {
    CHECK(slurp(w.bundle / f) == slurp(again / f));
  }
  const fs::path data2 = w.tmp / "data2";
  REQUIRE(cli("split --seed 4 --data " + q(w.raw) + " --out " + q(data2)).code == 0);
  CHECK(slurp(w.data / "manifest.jsonl") == slurp(data2 / "manifest.jsonl"));
}

TEST_CASE("usage and data errors map to exit codes 1 and 2") {
  auto& w = workspace();
  CHECK(cli("fit --bogus-flag").code == 1);
  CHECK(cli("no-such-command").code == 1);
  CHECK(cli("--help").code == 0);
  CHECK(cli("fit --config not_a_config --data " + q(w.data) + " --out " + q(w.tmp / "x")).code == 1);
  CHECK(cli("fit --data " + q(w.tmp / "missing") + " --out " + q(w.tmp / "x")).code == 2);
  CHECK(cli("split --data " + q(w.data) + " --out " + q(w.data)).code == 1);
}
