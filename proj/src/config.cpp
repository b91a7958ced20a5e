#include "flowsac/config.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "flowsac/errors.hpp"

namespace flowsac {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) {
  throw std::invalid_argument("config: " + msg);
}

// Strictness: every object must consist solely of keys we know.
void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known) bad("unknown key \"" + item.key() + "\" in " + where);
  }
}

double get_number(const json& obj, const std::string& where, const char* key,
                  double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) bad(where + "." + key + " must be a number");
  return v.get<double>();
}

std::size_t get_count(const json& obj, const std::string& where,
                      const char* key, std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    bad(where + "." + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

int get_int(const json& obj, const std::string& where, const char* key,
            int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) bad(where + "." + key + " must be an integer");
  return v.get<int>();
}

bool get_bool(const json& obj, const std::string& where, const char* key,
              bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) bad(where + "." + key + " must be a boolean");
  return v.get<bool>();
}

Vector parse_vector(const json& v, const std::string& where) {
  if (!v.is_array()) bad(where + " must be an array of numbers");
  std::vector<double> vals;
  vals.reserve(v.size());
  for (const json& e : v) {
    if (!e.is_number()) bad(where + " must contain only numbers");
    vals.push_back(e.get<double>());
  }
  return Vector::of(std::move(vals));
}

Matrix parse_matrix(const json& m, const std::string& where) {
  if (!m.is_array() || m.empty())
    bad(where + " must be a non-empty array of rows");
  const std::size_t cols = m.at(0).is_array() ? m.at(0).size() : 0;
  if (cols == 0) bad(where + " rows must be non-empty arrays");
  std::vector<double> vals;
  vals.reserve(m.size() * cols);
  for (const json& row : m) {
    if (!row.is_array() || row.size() != cols)
      bad(where + " must be rectangular");
    for (const json& e : row) {
      if (!e.is_number()) bad(where + " must contain only numbers");
      vals.push_back(e.get<double>());
    }
  }
  return Matrix::of(m.size(), cols, std::move(vals));
}

LqrSystem parse_system_object(const json& sys) {
  expect_keys(sys, "system",
              {"A", "B", "Q", "R", "sigma_w", "gamma", "alpha", "x0"});
  for (const char* key : {"A", "B", "Q", "R"})
    if (!sys.contains(key)) bad(std::string("system.") + key + " is required");

  const Matrix A = parse_matrix(sys.at("A"), "system.A");
  const Matrix B = parse_matrix(sys.at("B"), "system.B");
  const Matrix Q = parse_matrix(sys.at("Q"), "system.Q");
  const Matrix R = parse_matrix(sys.at("R"), "system.R");
  Matrix sigma_w(A.rows(), A.rows());  // default: deterministic dynamics
  if (sys.contains("sigma_w"))
    sigma_w = parse_matrix(sys.at("sigma_w"), "system.sigma_w");
  const double gamma = get_number(sys, "system", "gamma", 0.9);
  const double alpha = get_number(sys, "system", "alpha", 1.0);

  InitState init = Vector(A.rows());  // default: start at the origin
  if (sys.contains("x0")) {
    const json& x0 = sys.at("x0");
    if (x0.is_array()) {
      init = parse_vector(x0, "system.x0");
    } else if (x0.is_object()) {
      expect_keys(x0, "system.x0", {"mean", "cov"});
      if (!x0.contains("mean") || !x0.contains("cov"))
        bad("system.x0 must have both mean and cov");
      init = GaussianInit{parse_vector(x0.at("mean"), "system.x0.mean"),
                          parse_matrix(x0.at("cov"), "system.x0.cov")};
    } else {
      bad("system.x0 must be an array or a {mean, cov} object");
    }
  }
  return make_lqr_system(A, B, Q, R, sigma_w, gamma, alpha, std::move(init));
}

SacConfig parse_sac(const json& sj) {
  expect_keys(sj, "sac",
              {"episodes", "q_warmup_episodes", "rollout_len",
               "buffer_capacity", "batch_size", "n_actions", "mc_pairs",
               "lr_policy", "lr_q", "polyak_tau", "q_offset_rate",
               "hidden_width",
               "hidden_layers", "train_ode_steps", "eval_ode_steps",
               "eval_every", "eval_trajectories", "eval_horizon",
               "state_clip", "use_target_policy_for_eval_actions"});
  SacConfig c;
  c.episodes = get_count(sj, "sac", "episodes", c.episodes);
  c.q_warmup_episodes =
      get_count(sj, "sac", "q_warmup_episodes", c.q_warmup_episodes);
  c.rollout_len = get_count(sj, "sac", "rollout_len", c.rollout_len);
  c.buffer_capacity = get_count(sj, "sac", "buffer_capacity", c.buffer_capacity);
  c.batch_size = get_count(sj, "sac", "batch_size", c.batch_size);
  c.n_actions = get_count(sj, "sac", "n_actions", c.n_actions);
  c.mc_pairs = get_int(sj, "sac", "mc_pairs", c.mc_pairs);
  c.lr_policy = get_number(sj, "sac", "lr_policy", c.lr_policy);
  c.lr_q = get_number(sj, "sac", "lr_q", c.lr_q);
  c.polyak_tau = get_number(sj, "sac", "polyak_tau", c.polyak_tau);
  c.q_offset_rate = get_number(sj, "sac", "q_offset_rate", c.q_offset_rate);
  c.hidden_width = get_count(sj, "sac", "hidden_width", c.hidden_width);
  c.hidden_layers = get_count(sj, "sac", "hidden_layers", c.hidden_layers);
  c.train_ode_steps = get_int(sj, "sac", "train_ode_steps", c.train_ode_steps);
  c.eval_ode_steps = get_int(sj, "sac", "eval_ode_steps", c.eval_ode_steps);
  c.eval_every = get_count(sj, "sac", "eval_every", c.eval_every);
  c.eval_trajectories =
      get_count(sj, "sac", "eval_trajectories", c.eval_trajectories);
  c.eval_horizon = get_int(sj, "sac", "eval_horizon", c.eval_horizon);
  c.state_clip = get_number(sj, "sac", "state_clip", c.state_clip);
  c.use_target_policy_for_eval_actions =
      get_bool(sj, "sac", "use_target_policy_for_eval_actions",
               c.use_target_policy_for_eval_actions);
  validate_sac_config(c);
  return c;
}

EvaluateProtocol parse_evaluate(const json& ej) {
  expect_keys(ej, "evaluate",
              {"n_trajectories", "trajectory_length", "n_action_samples"});
  EvaluateProtocol p;
  p.n_trajectories = get_count(ej, "evaluate", "n_trajectories",
                               p.n_trajectories);
  p.trajectory_length = get_count(ej, "evaluate", "trajectory_length",
                                  p.trajectory_length);
  p.n_action_samples = get_count(ej, "evaluate", "n_action_samples",
                                 p.n_action_samples);
  if (p.n_trajectories < 1 || p.trajectory_length < 1)
    bad("evaluate needs at least one trajectory and one step");
  if (p.n_action_samples < 2)
    bad("evaluate.n_action_samples must be >= 2 (sample covariance)");
  return p;
}

IsfmBenchConfig parse_isfm_bench(const json& bj) {
  expect_keys(bj, "isfm_bench",
              {"target_mean", "target_var", "sampling_mean", "n_values",
               "sampling_sigmas", "n_seeds", "train_steps", "mc_pairs",
               "hidden_width", "hidden_layers", "learning_rate", "ode_steps",
               "eval_samples", "d4_samples"});
  IsfmBenchConfig c;
  c.base.target_mean = get_number(bj, "isfm_bench", "target_mean",
                                  c.base.target_mean);
  c.base.target_var = get_number(bj, "isfm_bench", "target_var",
                                 c.base.target_var);
  if (!(c.base.target_var > 0.0)) bad("isfm_bench.target_var must be > 0");
  c.base.sampling_mean = get_number(bj, "isfm_bench", "sampling_mean",
                                    c.base.sampling_mean);
  if (bj.contains("n_values")) {
    c.n_values.clear();
    for (const json& v : bj.at("n_values")) {
      if (!v.is_number_integer() || v.get<long long>() < 1)
        bad("isfm_bench.n_values must be positive integers");
      c.n_values.push_back(v.get<std::size_t>());
    }
  }
  if (bj.contains("sampling_sigmas")) {
    c.sampling_sigmas.clear();
    for (const json& v : bj.at("sampling_sigmas")) {
      if (!v.is_number() || !(v.get<double>() > 0.0))
        bad("isfm_bench.sampling_sigmas must be positive numbers");
      c.sampling_sigmas.push_back(v.get<double>());
    }
  }
  c.n_seeds = get_count(bj, "isfm_bench", "n_seeds", c.n_seeds);
  c.base.train_steps = get_int(bj, "isfm_bench", "train_steps",
                               c.base.train_steps);
  c.base.mc_pairs = get_int(bj, "isfm_bench", "mc_pairs", c.base.mc_pairs);
  c.base.hidden_width = get_count(bj, "isfm_bench", "hidden_width",
                                  c.base.hidden_width);
  c.base.hidden_layers = get_count(bj, "isfm_bench", "hidden_layers",
                                   c.base.hidden_layers);
  c.base.learning_rate = get_number(bj, "isfm_bench", "learning_rate",
                                    c.base.learning_rate);
  c.base.ode_steps = get_int(bj, "isfm_bench", "ode_steps", c.base.ode_steps);
  c.base.eval_samples = get_count(bj, "isfm_bench", "eval_samples",
                                  c.base.eval_samples);
  c.d4_samples = get_count(bj, "isfm_bench", "d4_samples", c.d4_samples);
  return c;
}

}  // namespace

LqrSystem preset_system(const std::string& name) {
  if (name == "scalar") {
    // One-dimensional system with deterministic dynamics started at x0 = 1.
    const Matrix one{{1.0}};
    return make_lqr_system(one, one, one, one, Matrix{{0.0}}, 0.9, 1.0,
                           Vector{1.0});
  }
  if (name == "quickstart") {
    // Two-dimensional decoupled system, small process noise, origin start.
    const Matrix I2 = Matrix::identity(2);
    return make_lqr_system(0.5 * I2, I2, I2, I2, 0.01 * I2, 0.9, 1.0,
                           Vector(2));
  }
  if (name == "paper_eq12") {
    // Five-dimensional cyclic chain: 0.55 on the diagonal and on the
    // superdiagonal, wrapping around in the last row.
    Matrix A(5, 5);
    for (std::size_t i = 0; i < 5; ++i) {
      A(i, i) = 0.55;
      A(i, (i + 1) % 5) = 0.55;
    }
    const Matrix I5 = Matrix::identity(5);
    return make_lqr_system(A, I5, I5, I5, I5, 0.9, 1.0, Vector(5));
  }
  throw std::invalid_argument("config: unknown system preset \"" + name +
                              "\" (have scalar, quickstart, paper_eq12)");
}

TrainConfig parse_config(const std::string& text, const std::string& where) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded())
    throw std::invalid_argument("config: " + where + " is not valid JSON");
  if (!doc.is_object())
    throw std::invalid_argument("config: " + where + " must be a JSON object");

  expect_keys(doc, where,
              {"seed", "system", "alpha", "sac", "evaluate", "isfm_bench",
               "out"});
  if (!doc.contains("seed"))
    bad("\"seed\" is required (runs must be reproducible)");
  if (!doc.at("seed").is_number_integer() ||
      doc.at("seed").get<long long>() < 0)
    bad("seed must be a non-negative integer");

  TrainConfig cfg;
  cfg.seed = doc.at("seed").get<std::uint64_t>();

  if (doc.contains("system")) {
    const json& sys = doc.at("system");
    if (sys.is_string())
      cfg.system = preset_system(sys.get<std::string>());
    else if (sys.is_object())
      cfg.system = parse_system_object(sys);
    else
      bad("system must be a preset name or an object");
  } else {
    cfg.system = preset_system("quickstart");
  }

  if (doc.contains("alpha")) {
    const double alpha = get_number(doc, where, "alpha", cfg.system.alpha);
    // Rebuild so validation and cached factors stay consistent.
    cfg.system = make_lqr_system(cfg.system.A, cfg.system.B, cfg.system.Q,
                                 cfg.system.R, cfg.system.sigma_w,
                                 cfg.system.gamma, alpha, cfg.system.init);
  }

  if (doc.contains("sac")) {
    if (!doc.at("sac").is_object()) bad("sac must be an object");
    cfg.sac = parse_sac(doc.at("sac"));
  }
  if (doc.contains("evaluate")) {
    if (!doc.at("evaluate").is_object()) bad("evaluate must be an object");
    cfg.evaluate = parse_evaluate(doc.at("evaluate"));
  }
  if (doc.contains("isfm_bench")) {
    if (!doc.at("isfm_bench").is_object()) bad("isfm_bench must be an object");
    cfg.isfm_bench = parse_isfm_bench(doc.at("isfm_bench"));
  }
  cfg.isfm_bench.seed = cfg.seed;
  if (doc.contains("out")) {
    if (!doc.at("out").is_string()) bad("out must be a string path");
    cfg.out_dir = doc.at("out").get<std::string>();
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open config \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), "\"" + path + "\"");
}

}  // namespace flowsac
