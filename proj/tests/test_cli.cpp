#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "doctest.h"
#include "flowsac/checkpoint.hpp"
#include "flowsac/cli.hpp"
#include "flowsac/config.hpp"
#include "flowsac/oracle.hpp"
#include "json.hpp"

using namespace flowsac;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Fresh scratch directory under the system temp root.
fs::path scratch(const char* name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), "missing file ", p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("oracle prints the closed form and writes a byte-stable report") {
  const fs::path dir = scratch("flowsac_cli_oracle");
  const fs::path config = dir / "config.json";
  spit(config, R"({"seed": 5, "system": "scalar"})");

  const fs::path out1 = dir / "run1";
  REQUIRE(run_cli({"oracle", "--config", config.string(), "--out",
                   out1.string()}) == 0);
  const json doc = json::parse(slurp(out1 / "oracle.json"));
  CHECK(doc.at("P")[0][0].get<double>() ==
        doctest::Approx(1.5884033489984881).epsilon(1e-12));
  CHECK(doc.at("K")[0][0].get<double>() ==
        doctest::Approx(0.5884033489985452).epsilon(1e-9));
  CHECK(doc.at("riccati_residual").get<double>() < 1e-10);
  CHECK(doc.at("stability_margin").get<double>() < 1.0);
  // MC return of the optimal policy from x0 = 1 (analytic value circa -6.59)
  CHECK(doc.at("optimal_return").at("mean").get<double>() ==
        doctest::Approx(-6.59).epsilon(0.1));

  const fs::path out2 = dir / "run2";
  REQUIRE(run_cli({"oracle", "--config", config.string(), "--out",
                   out2.string()}) == 0);
  CHECK(slurp(out1 / "oracle.json") == slurp(out2 / "oracle.json"));
  fs::remove_all(dir);
}

TEST_CASE("train writes the log, periodic checkpoints, and the final policy") {
  const fs::path dir = scratch("flowsac_cli_train");
  const fs::path config = dir / "config.json";
  spit(config, R"({
    "seed": 11,
    "sac": {"episodes": 4, "q_warmup_episodes": 2, "eval_every": 2,
            "eval_trajectories": 2, "eval_horizon": 5, "batch_size": 8,
            "buffer_capacity": 64, "n_actions": 2, "hidden_width": 8,
            "train_ode_steps": 4, "eval_ode_steps": 8}
  })");

  const fs::path out1 = dir / "run1";
  REQUIRE(run_cli({"train", "--config", config.string(), "--out",
                   out1.string()}) == 0);

  const std::string log = slurp(out1 / "train_log.csv");
  CHECK(log.rfind("episode,eval_return_mean,eval_return_stderr,", 0) == 0);
  CHECK(count_lines(log) == 3);  // header + evaluations at episodes 2 and 4
  CHECK(fs::exists(out1 / "ckpt_000002.ckpt"));
  CHECK(fs::exists(out1 / "ckpt_000004.ckpt"));

  const Checkpoint fin = load_checkpoint((out1 / "final.ckpt").string());
  CHECK(fin.episode == 4);
  REQUIRE(std::holds_alternative<FlowPolicy>(fin.policy));
  const FlowPolicy& pol = std::get<FlowPolicy>(fin.policy);
  CHECK(pol.state_dim == 2);
  CHECK(pol.ode_steps == 8);  // snapshots carry the evaluation-grade steps

  // identical seed and config reproduce every artifact byte for byte
  const fs::path out2 = dir / "run2";
  REQUIRE(run_cli({"train", "--config", config.string(), "--out",
                   out2.string()}) == 0);
  CHECK(slurp(out1 / "train_log.csv") == slurp(out2 / "train_log.csv"));
  CHECK(slurp(out1 / "final.ckpt") == slurp(out2 / "final.ckpt"));
  CHECK(slurp(out1 / "ckpt_000002.ckpt") == slurp(out2 / "ckpt_000002.ckpt"));
  fs::remove_all(dir);
}

TEST_CASE("train with zero episodes leaves a header-only log and a fresh policy") {
  const fs::path dir = scratch("flowsac_cli_train0");
  const fs::path config = dir / "config.json";
  spit(config, R"({"seed": 2, "sac": {"episodes": 0, "hidden_width": 8}})");
  const fs::path out = dir / "run";
  REQUIRE(run_cli({"train", "--config", config.string(), "--out",
                   out.string()}) == 0);
  const std::string log = slurp(out / "train_log.csv");
  CHECK(count_lines(log) == 1);
  const Checkpoint fin = load_checkpoint((out / "final.ckpt").string());
  CHECK(fin.episode == 0);
  fs::remove_all(dir);
}

TEST_CASE("train refuses a non-empty output directory") {
  const fs::path dir = scratch("flowsac_cli_nonempty");
  const fs::path config = dir / "config.json";
  spit(config, R"({"seed": 2, "sac": {"episodes": 1}})");
  const fs::path out = dir / "run";
  fs::create_directories(out);
  spit(out / "leftover.txt", "previous run\n");
  CHECK(run_cli({"train", "--config", config.string(), "--out",
                 out.string()}) == 1);
  CHECK(slurp(out / "leftover.txt") == "previous run\n");  // untouched
  fs::remove_all(dir);
}

TEST_CASE("evaluate scores a reference gaussian policy near zero distance") {
  const fs::path dir = scratch("flowsac_cli_eval");
  const fs::path config = dir / "config.json";
  spit(config, R"({"seed": 9})");

  // checkpoint the exact optimal policy; distances are then pure sample noise
  const LqrSystem sys = preset_system("quickstart");
  const RiccatiSolution sol = riccati_value_iteration(sys);
  const fs::path ckpt = dir / "optimal.ckpt";
  save_gaussian_checkpoint(ckpt.string(), sol.K, sol.sigma, 0);

  const fs::path out1 = dir / "run1";
  REQUIRE(run_cli({"evaluate", "--config", config.string(), "--out",
                   out1.string(), "--checkpoint", ckpt.string(),
                   "--trajectories", "3", "--length", "4",
                   "--action-samples", "256"}) == 0);

  const json summary = json::parse(slurp(out1 / "evaluate_summary.json"));
  CHECK(summary.at("n_states").get<std::size_t>() == 12);
  CHECK(summary.at("n_action_samples").get<std::size_t>() == 256);
  // CLT scale: sd(mu_hat) per axis = sqrt(0.248/256) ~ 0.031, so the mean
  // 2-norm error over 12 states sits well under 0.1; same order for sigma.
  CHECK(summary.at("mu_dist").at("mean").get<double>() < 0.1);
  CHECK(summary.at("sigma_dist").at("mean").get<double>() < 0.15);

  const std::string csv = slurp(out1 / "evaluate.csv");
  CHECK(count_lines(csv) == 13);  // header + 3 x 4 states

  const fs::path out2 = dir / "run2";
  REQUIRE(run_cli({"evaluate", "--config", config.string(), "--out",
                   out2.string(), "--checkpoint", ckpt.string(),
                   "--trajectories", "3", "--length", "4",
                   "--action-samples", "256"}) == 0);
  CHECK(slurp(out1 / "evaluate.csv") == slurp(out2 / "evaluate.csv"));
  CHECK(slurp(out1 / "evaluate_summary.json") ==
        slurp(out2 / "evaluate_summary.json"));
  fs::remove_all(dir);
}

TEST_CASE("evaluate rejects checkpoints whose dimensions disagree") {
  const fs::path dir = scratch("flowsac_cli_eval_dim");
  const fs::path config = dir / "config.json";
  spit(config, R"({"seed": 9})");  // 2-dim quickstart system

  const LqrSystem scalar = preset_system("scalar");
  const RiccatiSolution sol = riccati_value_iteration(scalar);
  const fs::path ckpt = dir / "scalar.ckpt";
  save_gaussian_checkpoint(ckpt.string(), sol.K, sol.sigma, 0);

  CHECK(run_cli({"evaluate", "--config", config.string(), "--out",
                 (dir / "run").string(), "--checkpoint", ckpt.string(),
                 "--trajectories", "1", "--length", "1"}) == 1);
  fs::remove_all(dir);
}

TEST_CASE("usage and configuration problems exit with code 1") {
  const fs::path dir = scratch("flowsac_cli_usage");
  CHECK(run_cli({"frobnicate"}) == 1);                  // unknown subcommand
  CHECK(run_cli({"train"}) == 1);                       // missing --config
  CHECK(run_cli({"--help"}) == 0);                      // help is a clean exit
  CHECK(run_cli({"oracle", "--config", (dir / "none.json").string()}) == 1);
  const fs::path bad = dir / "bad.json";
  spit(bad, "{ not json");
  CHECK(run_cli({"oracle", "--config", bad.string()}) == 1);
  const fs::path noseed = dir / "noseed.json";
  spit(noseed, R"({"system": "scalar"})");
  CHECK(run_cli({"oracle", "--config", noseed.string()}) == 1);
  fs::remove_all(dir);
}

TEST_CASE("numerical blowups exit with code 2 and leave a diagnostic") {
  const fs::path dir = scratch("flowsac_cli_blowup");
  const fs::path config = dir / "config.json";
  // An absurd critic step overflows the Q network within a few updates.
  spit(config, R"({
    "seed": 3,
    "sac": {"episodes": 6, "q_warmup_episodes": 0, "eval_every": 0,
            "batch_size": 8, "buffer_capacity": 64, "n_actions": 2,
            "hidden_width": 8, "train_ode_steps": 4, "lr_q": 1e308,
            "polyak_tau": 1.0}
  })");
  const fs::path out = dir / "run";
  CHECK(run_cli({"train", "--config", config.string(), "--out",
                 out.string()}) == 2);
  const std::string note = slurp(out / "abort.txt");
  CHECK(note.find("episode") != std::string::npos);
  fs::remove_all(dir);
}

}  // TEST_SUITE
