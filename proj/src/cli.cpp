#include "flowsac/cli.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowsac/checkpoint.hpp"
#include "flowsac/config.hpp"
#include "flowsac/errors.hpp"
#include "flowsac/flow.hpp"
#include "flowsac/flow_matching.hpp"
#include "flowsac/lqr.hpp"
#include "flowsac/oracle.hpp"
#include "flowsac/parallel.hpp"
#include "flowsac/sac.hpp"

namespace flowsac {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Shared options; seed < 0 means "use the config's seed".
struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  long long seed_override = -1;
};

TrainConfig load_with_overrides(const CommonArgs& common) {
  TrainConfig cfg = load_config(common.config_path);
  if (common.seed_override >= 0)
    cfg.seed = static_cast<std::uint64_t>(common.seed_override);
  if (!common.out_dir.empty()) cfg.out_dir = common.out_dir;
  return cfg;
}

// Each run owns its output directory; refusing non-empty directories keeps
// concurrent runs from interleaving files.
fs::path prepare_out_dir(const std::string& dir) {
  if (dir.empty())
    throw std::invalid_argument("an output directory is required (--out)");
  const fs::path p(dir);
  std::error_code ec;
  if (fs::exists(p, ec)) {
    if (!fs::is_directory(p, ec))
      throw io_error("output path \"" + dir + "\" is not a directory");
    if (!fs::is_empty(p, ec))
      throw io_error("output directory \"" + dir +
                     "\" is not empty; refusing to overwrite");
  } else if (!fs::create_directories(p, ec)) {
    throw io_error("cannot create output directory \"" + dir + "\"");
  }
  return p;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open \"" + path.string() + "\" for writing");
  out << text;
  if (!out) throw io_error("write to \"" + path.string() + "\" failed");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// oracle: closed-form solution plus the Monte Carlo return of that policy.

int cmd_oracle(const CommonArgs& common) {
  const TrainConfig cfg = load_with_overrides(common);
  const LqrSystem& sys = cfg.system;

  const RiccatiSolution sol = riccati_value_iteration(sys);
  const double residual = riccati_residual(sys, sol.P);
  const double margin =
      std::sqrt(sys.gamma) * spectral_radius(sys.A - sys.B * sol.K);

  const GaussianPolicy opt = make_gaussian_policy(sol.K, sol.sigma);
  const ActionSampler sampler = [&](const Vector& x, Rng& r) {
    return sample_gaussian_action(opt, x, r);
  };
  // Same protocol as training-time evaluation, so the two returns compare.
  const MeanStderr ret =
      discounted_return(sys, sampler, cfg.sac.eval_horizon,
                        cfg.sac.eval_trajectories, Rng(cfg.seed));

  json doc;
  doc["P"] = matrix_rows(sol.P);
  doc["K"] = matrix_rows(sol.K);
  doc["Sigma"] = matrix_rows(sol.sigma);
  doc["c"] = sol.c;
  doc["riccati_residual"] = residual;
  doc["stability_margin"] = margin;
  doc["optimal_return"] = json{{"mean", ret.mean},
                               {"std_err", ret.std_err},
                               {"trajectories", cfg.sac.eval_trajectories},
                               {"horizon", cfg.sac.eval_horizon}};

  const std::string text = doc.dump(2) + "\n";
  std::fputs(text.c_str(), stdout);
  if (!cfg.out_dir.empty()) {
    const fs::path out = prepare_out_dir(cfg.out_dir);
    write_text_file(out / "oracle.json", text);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train: run the agent, streaming the log to CSV and checkpointing at every
// evaluation point.

constexpr char kTrainLogHeader[] =
    "episode,eval_return_mean,eval_return_stderr,loss_q,loss_pi,"
    "weight_entropy,grad_norm_q,grad_norm_pi\n";

std::string format_log_row(const TrainingLogRow& r) {
  std::string line = std::to_string(r.episode);
  for (double v : {r.eval_return_mean, r.eval_return_stderr, r.loss_q,
                   r.loss_pi, r.weight_entropy, r.grad_norm_q,
                   r.grad_norm_pi}) {
    line += ',';
    line += format_double(v);
  }
  line += '\n';
  return line;
}

int cmd_train(const CommonArgs& common) {
  const TrainConfig cfg = load_with_overrides(common);
  const fs::path out = prepare_out_dir(cfg.out_dir);

  std::ofstream csv(out / "train_log.csv", std::ios::binary);
  if (!csv) throw io_error("cannot open train_log.csv for writing");
  csv << kTrainLogHeader;

  const EvalObserver observer = [&](const SacState& st,
                                    const TrainingLogRow& row) {
    csv << format_log_row(row);
    csv.flush();
    std::printf("episode %zu/%zu  return %.4f +- %.4f\n", row.episode,
                cfg.sac.episodes, row.eval_return_mean,
                row.eval_return_stderr);
    std::fflush(stdout);

    FlowPolicy snapshot = st.policy;
    snapshot.ode_steps = cfg.sac.eval_ode_steps;
    char name[32];
    std::snprintf(name, sizeof name, "ckpt_%06zu.ckpt", row.episode);
    save_flow_checkpoint((out / name).string(), snapshot, row.episode);
  };

  SacState final_state;
  try {
    train(cfg.system, cfg.sac, Rng(cfg.seed), observer, &final_state);
  } catch (const numeric_error& e) {
    // Leave a diagnostic next to the partial log before failing.
    write_text_file(out / "abort.txt", std::string(e.what()) + "\n");
    throw;
  }

  FlowPolicy final_policy = final_state.policy;
  final_policy.ode_steps = cfg.sac.eval_ode_steps;
  save_flow_checkpoint((out / "final.ckpt").string(), final_policy,
                       final_state.episode);
  if (!csv) throw io_error("write to train_log.csv failed");
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate: roll out a checkpointed policy and measure its per-state action
// moments against the closed-form optimum.

struct StateRow {
  double mu_dist = 0.0;
  double sigma_dist = 0.0;
};

// Largest absolute eigenvalue = spectral norm of a symmetric matrix.
double spectral_norm_sym(const Matrix& m) {
  const SymEig eig = sym_eig(m);
  return std::max(std::abs(eig.values[0]),
                  std::abs(eig.values[eig.values.dim() - 1]));
}

int cmd_evaluate(const CommonArgs& common, const std::string& ckpt_path,
                 long long n_traj_flag, long long traj_len_flag,
                 long long n_samples_flag) {
  const TrainConfig cfg = load_with_overrides(common);
  const LqrSystem& sys = cfg.system;

  EvaluateProtocol proto = cfg.evaluate;
  if (n_traj_flag > 0)
    proto.n_trajectories = static_cast<std::size_t>(n_traj_flag);
  if (traj_len_flag > 0)
    proto.trajectory_length = static_cast<std::size_t>(traj_len_flag);
  if (n_samples_flag != 0)
    proto.n_action_samples =
        n_samples_flag > 0 ? static_cast<std::size_t>(n_samples_flag) : 0;
  if (proto.n_action_samples < 2)
    throw std::invalid_argument(
        "evaluate: need at least 2 action samples per state to form a "
        "sample covariance");

  // Claim the output directory before the expensive part.
  const fs::path out = prepare_out_dir(cfg.out_dir);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);

  // One sampling closure regardless of checkpoint kind.
  ActionSampler draw;
  if (const FlowPolicy* flow = std::get_if<FlowPolicy>(&ckpt.policy)) {
    if (flow->state_dim != sys.state_dim() ||
        flow->action_dim != sys.action_dim())
      throw std::invalid_argument(
          "evaluate: checkpoint dimensions do not match the configured "
          "system");
    draw = [flow](const Vector& x, Rng& r) {
      return rollout_action(*flow, x, r);
    };
  } else {
    const auto& g = std::get<GaussianCheckpointData>(ckpt.policy);
    if (g.K.rows() != sys.action_dim() || g.K.cols() != sys.state_dim())
      throw std::invalid_argument(
          "evaluate: checkpoint dimensions do not match the configured "
          "system");
    const GaussianPolicy gp = make_gaussian_policy(g.K, g.sigma);
    draw = [gp](const Vector& x, Rng& r) {
      return sample_gaussian_action(gp, x, r);
    };
  }

  const RiccatiSolution sol = riccati_value_iteration(sys);
  const Rng root(cfg.seed);
  const std::size_t n_traj = proto.n_trajectories;
  const std::size_t traj_len = proto.trajectory_length;
  const std::size_t n_samples = proto.n_action_samples;
  const std::size_t a_dim = sys.action_dim();

  // Trajectories are independent: stream 0 drives the rollouts, stream 1 the
  // per-state action draws, so neither can perturb the other.
  std::vector<std::vector<StateRow>> per_traj(n_traj);
  parallel_for(static_cast<std::int64_t>(n_traj), [&](std::int64_t t) {
    Rng walk = root.split(0).split(static_cast<std::uint64_t>(t));
    Vector x = draw_init_state(sys, walk);
    std::vector<StateRow>& rows = per_traj[static_cast<std::size_t>(t)];
    rows.reserve(traj_len);
    for (std::size_t s = 0; s < traj_len; ++s) {
      const Rng moment =
          root.split(1).split(static_cast<std::uint64_t>(t) * traj_len + s);
      std::vector<Vector> actions(n_samples);
      parallel_for(static_cast<std::int64_t>(n_samples), [&](std::int64_t i) {
        Rng r = moment.split(static_cast<std::uint64_t>(i));
        actions[static_cast<std::size_t>(i)] = draw(x, r);
      });

      Vector mu(a_dim);
      for (const Vector& a : actions) mu += (1.0 / n_samples) * a;
      Matrix cov(a_dim, a_dim);
      for (const Vector& a : actions)
        for (std::size_t i = 0; i < a_dim; ++i)
          for (std::size_t j = 0; j < a_dim; ++j)
            cov(i, j) +=
                (a[i] - mu[i]) * (a[j] - mu[j]) / (n_samples - 1.0);

      const Vector mu_star = -1.0 * (sol.K * x);
      StateRow row;
      row.mu_dist = (mu - mu_star).norm();
      row.sigma_dist = spectral_norm_sym(cov - sol.sigma);
      rows.push_back(row);

      const Vector u = draw(x, walk);
      x = env_step(sys, x, u, walk).x_next;
    }
  });

  std::string csv = "traj,step,mu_dist,sigma_dist\n";
  double mu_sum = 0.0, sig_sum = 0.0;
  for (std::size_t t = 0; t < n_traj; ++t)
    for (std::size_t s = 0; s < traj_len; ++s) {
      const StateRow& row = per_traj[t][s];
      csv += std::to_string(t) + ',' + std::to_string(s) + ',' +
             format_double(row.mu_dist) + ',' +
             format_double(row.sigma_dist) + '\n';
      mu_sum += row.mu_dist;
      sig_sum += row.sigma_dist;
    }
  const double n_states = static_cast<double>(n_traj * traj_len);
  const double mu_mean = mu_sum / n_states;
  const double sig_mean = sig_sum / n_states;
  double mu_ss = 0.0, sig_ss = 0.0;
  for (const auto& rows : per_traj)
    for (const StateRow& row : rows) {
      mu_ss += (row.mu_dist - mu_mean) * (row.mu_dist - mu_mean);
      sig_ss += (row.sigma_dist - sig_mean) * (row.sigma_dist - sig_mean);
    }
  const double denom = n_states > 1 ? n_states - 1 : 1;
  json summary;
  summary["n_states"] = n_traj * traj_len;
  summary["trajectories"] = n_traj;
  summary["trajectory_length"] = traj_len;
  summary["n_action_samples"] = n_samples;
  summary["checkpoint_episode"] = ckpt.episode;
  summary["mu_dist"] = json{{"mean", mu_mean},
                            {"std", std::sqrt(mu_ss / denom)}};
  summary["sigma_dist"] = json{{"mean", sig_mean},
                               {"std", std::sqrt(sig_ss / denom)}};

  write_text_file(out / "evaluate.csv", csv);
  const std::string summary_text = summary.dump(2) + "\n";
  write_text_file(out / "evaluate_summary.json", summary_text);
  std::fputs(summary_text.c_str(), stdout);
  return 0;
}

// ---------------------------------------------------------------------------
// isfm-bench: the sample-size / sampling-width sweep as CSV.

int cmd_isfm_bench(const CommonArgs& common) {
  const TrainConfig cfg = load_with_overrides(common);
  const fs::path out = prepare_out_dir(cfg.out_dir);
  const std::vector<IsfmBenchCell> cells = run_isfm_bench(cfg.isfm_bench);

  std::string csv = "N,sampling_sigma,D4_estimate,mean_W2sq,std_W2sq\n";
  for (const IsfmBenchCell& c : cells) {
    csv += std::to_string(c.n_samples) + ',' +
           format_double(c.sampling_sigma) + ',' +
           (c.d4_divergent ? std::string("divergent") : format_double(c.d4)) +
           ',' + format_double(c.mean_w2sq) + ',' +
           format_double(c.std_w2sq) + '\n';
  }
  write_text_file(out / "isfm_bench.csv", csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Max-entropy reinforcement learning with flow policies"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string ckpt_path;
  long long n_traj_flag = 0, traj_len_flag = 0, n_samples_flag = 0;

  const auto add_common = [&](CLI::App* sub, bool out_required) {
    sub->add_option("--config", common.config_path, "JSON config file")
        ->required();
    sub->add_option("--seed", common.seed_override,
                    "Override the config's seed");
    auto* out = sub->add_option("--out", common.out_dir,
                                "Output directory (must not exist or be empty)");
    if (out_required) out->required();
  };

  CLI::App* oracle = app.add_subcommand(
      "oracle", "Print the closed-form optimal policy and value");
  add_common(oracle, false);

  CLI::App* train = app.add_subcommand(
      "train", "Train the agent; writes train_log.csv and checkpoints");
  add_common(train, true);

  CLI::App* evaluate = app.add_subcommand(
      "evaluate",
      "Measure a checkpointed policy's action moments against the optimum");
  add_common(evaluate, true);
  evaluate->add_option("--checkpoint", ckpt_path, "Checkpoint file")
      ->required();
  evaluate->add_option("--trajectories", n_traj_flag,
                       "Override evaluate.n_trajectories");
  evaluate->add_option("--length", traj_len_flag,
                       "Override evaluate.trajectory_length");
  evaluate->add_option("--action-samples", n_samples_flag,
                       "Override evaluate.n_action_samples");

  CLI::App* bench = app.add_subcommand(
      "isfm-bench",
      "Sweep sample size and sampling width for the static weighted fit");
  add_common(bench, true);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("flowsac");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (oracle->parsed()) return cmd_oracle(common);
    if (train->parsed()) return cmd_train(common);
    if (evaluate->parsed())
      return cmd_evaluate(common, ckpt_path, n_traj_flag, traj_len_flag,
                          n_samples_flag);
    if (bench->parsed()) return cmd_isfm_bench(common);
    return 1;  // unreachable with require_subcommand
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace flowsac
