// Acceptance harness: one PASS/FAIL line per criterion. Exits non-zero if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "fdti/fdti.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace fdti;

namespace {

// Pinned tolerances and budgets.
constexpr int kGradientInstances = 30;
constexpr double kGradientTol = 1e-4;
constexpr double kGradientBudgetS = 60.0;
constexpr std::uint64_t kMaxUlps = 1;
constexpr double kTrainBudgetS = 300.0;
constexpr int kRolloutInstances = 100;
constexpr double kRolloutRelTol = 1e-12;
constexpr double kFtstgBudgetS = 10.0;
constexpr std::size_t kLargeN = 10000;
constexpr int kStmadK = 1;
constexpr std::size_t kStmadWindow = 5;

int failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s [%d] %s: %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::uint64_t ulp_distance(double a, double b) {
  if (a == b) return 0;
  auto key = [](double x) {
    const auto u = std::bit_cast<std::uint64_t>(x);
    return (u >> 63) ? ~u + 1 : u | (1ULL << 63);
  };
  const auto ka = key(a), kb = key(b);
  return ka > kb ? ka - kb : kb - ka;
}

void gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < kGradientInstances; ++k)
    worst = std::max(worst, testing::gradient_check(testing::gradient_instance(1000 + k)));
  const double s = seconds_since(t0);
  report(1, "gradient oracle", worst < kGradientTol && s < kGradientBudgetS,
         fmt("%d instances, max relative error %.3g (tol %.0e), %.2f s", kGradientInstances, worst, kGradientTol, s));
}

SimConfig acceptance_grid() {
  SimConfig c;
  c.rows = 4;
  c.cols = 4;
  c.demand_vpm = 12;
  c.cycle_s = 90;
  c.duration_min = 60;
  c.warmup_min = 10;
  c.seed = 7;
  return c;
}

void conservation_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  SimConfig heavy;
  heavy.rows = 1;
  heavy.cols = 3;
  heavy.demand_vpm = 30;
  heavy.saturation_vps = 0.4;
  heavy.right_always_green = true;
  heavy.seed = 99;
  std::size_t cells = 0, exact_bad = 0;
  std::uint64_t worst_ulps = 0;
  for (const auto& config : {SimConfig{}, acceptance_grid(), heavy}) {
    const auto d = run(config);
    for (std::size_t r = 0; r + 1 < d.volumes.rows(); ++r) {
      const auto next = transition_one_step(d.volumes.row(r), d.inflow.row(r), d.outflow.row(r), true);
      for (NodeId i = 0; i < d.n_nodes(); ++i, ++cells) {
        if (d.volumes(r + 1, i) != d.volumes(r, i) + d.inflow(r, i) - d.outflow(r, i)) ++exact_bad;
        worst_ulps = std::max(worst_ulps, ulp_distance(next[i], d.volumes(r + 1, i)));
      }
    }
  }
  report(2, "conservation oracle", exact_bad == 0 && worst_ulps <= kMaxUlps,
         fmt("%zu cells over 3 datasets, %zu inexact, transition max %llu ulp, %.2f s", cells, exact_bad,
             static_cast<unsigned long long>(worst_ulps), seconds_since(t0)));
}

ModelConfig acceptance_model(double discount) {
  ModelConfig c;
  c.hidden_dim = 32;
  c.n_layers = 2;
  c.window = 3;
  c.discount = discount;
  c.seed = 1;
  return c;
}

double rmse_at(const PredictionSet& p, const PredictionSet& truth, int horizon) {
  for (const auto& h : evaluate(p, truth).horizons)
    if (h.horizon == horizon) return h.rmse;
  return NAN;
}

void forecasting_criteria() {
  const auto data = run(acceptance_grid());
  const auto model = acceptance_model(0.9);
  TrainConfig tc;  // lr 5e-4, at most 500 epochs, patience 20

  auto t0 = std::chrono::steady_clock::now();
  const auto trained = train(data, model, tc);
  const double train_s = seconds_since(t0);

  const auto& split = trained.split;
  const auto origins = evaluation_origins(data, split.test, model.window, 1);
  const std::vector<int> h1{1};
  const auto truth = truth_for(data, origins, h1);
  const auto fdti = predict_fdti(data, origins, h1, trained.params, model);
  const auto ha = predict_ha(data, split.train, origins, h1);
  const auto pers = predict_persistence(data, origins, h1);
  const auto lr = predict_linreg(data, split.train, origins, h1);
  const auto avg = predict_neighbor_average(data, origins, h1);
  const double r_fdti = rmse_at(fdti, truth, 1), r_ha = rmse_at(ha, truth, 1), r_pers = rmse_at(pers, truth, 1),
               r_lr = rmse_at(lr, truth, 1);
  std::printf("      4x4 grid, %zu movements, test targets minutes %d-%d, %zu origins\n", data.n_nodes(),
              split.test.begin, split.test.end - 1, origins.size());
  std::printf("      trained %zu epochs (best %d) in %.1f s, %zu parameters\n", trained.history.size(),
              trained.best_epoch, train_s, trained.params.count());
  std::printf("      one-step RMSE  fdti %.4f  ha %.4f  persistence %.4f  linreg %.4f  neighbor-avg %.4f\n", r_fdti,
              r_ha, r_pers, r_lr, rmse_at(avg, truth, 1));
  report(3, "one-step ordering vs baselines",
         r_fdti < r_ha && r_fdti < r_pers && r_fdti < r_lr && train_s < kTrainBudgetS,
         fmt("fdti %.4f < min(ha %.4f, persistence %.4f, linreg %.4f); training %.1f s (budget %.0f s)", r_fdti, r_ha,
             r_pers, r_lr, train_s, kTrainBudgetS));

  const double s_truth = stmad(truth.series(1), data.graph, kStmadK, kStmadWindow).stmad;
  const double s_fdti = stmad(fdti.series(1), data.graph, kStmadK, kStmadWindow).stmad;
  const double s_avg = stmad(avg.series(1), data.graph, kStmadK, kStmadWindow).stmad;
  report(4, "STMAD closeness", std::abs(s_fdti - s_truth) < std::abs(s_avg - s_truth),
         fmt("k=%d window=%zu: truth %.4f, fdti %.4f (gap %.4f), neighbor-avg %.4f (gap %.4f)", kStmadK,
             kStmadWindow, s_truth, s_fdti, std::abs(s_fdti - s_truth), s_avg, std::abs(s_avg - s_truth)));

  // The discount only enters inference; the undiscounted model is trained from scratch
  // with the same data, seed and schedule.
  t0 = std::chrono::steady_clock::now();
  const auto undiscounted_model = acceptance_model(1.0);
  const auto undiscounted = train(data, undiscounted_model, tc);
  const bool same_training = undiscounted.params == trained.params;
  const auto o5 = evaluation_origins(data, split.test, model.window, 5);
  const std::vector<int> hs{1, 3, 5};
  const auto truth5 = truth_for(data, o5, hs);
  const auto with = predict_fdti(data, o5, hs, trained.params, model);
  const auto without = predict_fdti(data, o5, hs, undiscounted.params, undiscounted_model);
  std::printf("      lambda  h1_rmse  h3_rmse  h5_rmse   (%zu origins, retrain %.1f s)\n", o5.size(),
              seconds_since(t0));
  std::printf("      1.0     %.4f   %.4f   %.4f\n", rmse_at(without, truth5, 1), rmse_at(without, truth5, 3),
              rmse_at(without, truth5, 5));
  std::printf("      0.9     %.4f   %.4f   %.4f\n", rmse_at(with, truth5, 1), rmse_at(with, truth5, 3),
              rmse_at(with, truth5, 5));
  const double h5_1 = rmse_at(without, truth5, 5), h5_09 = rmse_at(with, truth5, 5);
  report(5, "discount comparison table", std::isfinite(h5_1) && std::isfinite(h5_09) && same_training,
         fmt("horizon-5 RMSE lambda=1.0 %.4f, lambda=0.9 %.4f (%s); training identical: %s", h5_1, h5_09,
             h5_09 < h5_1 ? "discount lower" : "discount not lower", same_training ? "yes" : "no"));
}

void rollout_accumulation() {
  SplitMix64 rng(2024);
  double worst = 0.0;
  int checked = 0;
  for (int k = 0; k < kRolloutInstances; ++k) {
    const auto n = 2 + rng.next() % 9;
    const int horizon = 2 + static_cast<int>(rng.next() % 7);
    ModelConfig c;
    c.hidden_dim = 2 + rng.next() % 7;
    c.n_layers = 1 + rng.next() % 3;
    c.window = c.n_layers + 1;
    c.discount = rng.uniform(0.05, 1.0);
    c.clamp_nonneg = false;
    c.seed = k;
    const int minutes = static_cast<int>(c.window) + horizon + 1;
    const auto data = testing::random_dataset(testing::random_graph(n, 0.3, rng), minutes, rng);
    auto params = init_params(c);
    testing::randomize(params, rng);
    const int t = static_cast<int>(c.window) - 1;
    const auto r = rollout(data, t, horizon, params, c);
    const auto x0 = data.volumes.row(data.row(t));
    for (int q = 0; q < horizon; ++q) {
      const std::vector<std::vector<double>> prefix(r.deltas.begin(), r.deltas.begin() + q + 1);
      const auto closed = discounted_sum_closed_form(x0, prefix, c.discount);
      for (std::size_t i = 0; i < n; ++i, ++checked) {
        const double denom = std::max(std::abs(closed[i]), std::numeric_limits<double>::min());
        worst = std::max(worst, std::abs(closed[i] - r.volumes[q][i]) / denom);
      }
    }
  }
  report(6, "closed-form vs incremental rollout", worst <= kRolloutRelTol,
         fmt("%d instances, %d cells, max relative difference %.3g (tol %.0e)", kRolloutInstances, checked, worst,
             kRolloutRelTol));
}

MovementGraph large_graph(std::size_t n, SplitMix64& rng) {
  std::vector<TrafficMovement> mv;
  std::vector<Edge> edges;
  for (NodeId i = 0; i < n; ++i) {
    mv.push_back({i, kDirections[i % 3], 100.0 + static_cast<double>(i % 300)});
    for (int e = 0; e < 3; ++e) {
      const auto j = static_cast<NodeId>(rng.next() % n);
      if (j != i) edges.emplace_back(i, j);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return MovementGraph(std::move(mv), std::move(edges));
}

void scalability() {
  // Oracle: enumerate tensor shapes by hand for the default configuration.
  const ModelConfig defaults;
  const std::size_t d = defaults.hidden_dim, layers = defaults.n_layers, f = kFeatureDim;
  std::size_t oracle = f * d + d;              // embedding weights and bias
  for (std::size_t l = 0; l < layers; ++l) oracle += 2 * d * d + d;  // aggregation per layer
  oracle += 2 * (d + 1);                       // inflow and outflow heads
  const auto p_default = init_params(defaults);

  SplitMix64 rng(5);
  ModelConfig small;
  small.hidden_dim = 8;
  small.n_layers = 2;
  small.window = 5;
  const auto params = init_params(small);
  const auto grid = run([] {
    SimConfig c;
    c.duration_min = 6;
    c.warmup_min = 0;
    return c;
  }());
  const auto big = large_graph(kLargeN, rng);
  auto big_data = testing::random_dataset(big, 5, rng);

  const auto t0 = std::chrono::steady_clock::now();
  const auto graph = build_ftstg(big, big_data.signal, 0, 5);
  const double build_s = seconds_since(t0);

  const auto small_out = forward_at(grid, 4, params, small);
  const auto big_out = forward_at(big_data, 4, params, small);
  const bool shapes_ok = small_out.inflow.size() == grid.n_nodes() && big_out.inflow.size() == kLargeN;
  const bool count_ok = p_default.count() == oracle && parameter_count(f, d, layers) == oracle &&
                        params.count() == parameter_count(f, small.hidden_dim, small.n_layers);
  report(7, "parameter count and FTSTG scale",
         count_ok && shapes_ok && build_s < kFtstgBudgetS,
         fmt("default model %zu parameters (oracle %zu); one %zu-parameter model serves N=%zu and N=%zu; "
             "FTSTG N=%zu T=5 (%zu edges) built in %.2f s",
             p_default.count(), oracle, params.count(), grid.n_nodes(), kLargeN, kLargeN, graph.n_edges(), build_s));
}

std::string pipeline_once(const fs::path& dir) {
  SimConfig sim;
  sim.duration_min = 40;
  sim.warmup_min = 5;
  sim.seed = 11;
  export_dataset(run(sim), dir / "data");
  const auto data = import_dataset(dir / "data", sim.warmup_min);
  ModelConfig model;
  model.hidden_dim = 8;
  model.n_layers = 2;
  model.window = 3;
  TrainConfig tc;
  tc.max_epochs = 10;
  const auto trained = train(data, model, tc);
  save_checkpoint(trained.params, model, (dir / "model.json").string());
  const auto ck = load_checkpoint((dir / "model.json").string(), model);
  const std::vector<int> hs{1, 3, 5};
  const auto p = predict_fdti(data, evaluation_origins(data, trained.split.test, model.window, 5), hs, ck.params,
                              ck.config);
  write_file((dir / "predictions.csv").string(), serialize_predictions(p));
  return read_file((dir / "predictions.csv").string());
}

void determinism() {
  const auto root = fs::temp_directory_path() / ("fdti_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const auto a = pipeline_once(root / "a");
  const auto b = pipeline_once(root / "b");
  const bool ckpt_same = read_file((root / "a/model.json").string()) == read_file((root / "b/model.json").string());
  fs::remove_all(root);
  report(8, "end-to-end determinism", a == b && ckpt_same && !a.empty(),
         fmt("predictions %zu bytes, identical: %s; checkpoints identical: %s", a.size(), a == b ? "yes" : "no",
             ckpt_same ? "yes" : "no"));
}

int run_suite(const char* path) {
  const std::string cmd = std::string(path) + " --gtest_brief=1 > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void unit_examples() {
  const int unit = run_suite(FDTI_UNIT_TESTS);
  const int cli = run_suite(FDTI_CLI_TESTS);
  report(9, "unit and CLI examples", unit == 0 && cli == 0,
         fmt("unit suite exit %d, CLI suite exit %d", unit, cli));
}

}  // namespace

int main() {
  gradient_oracle();
  conservation_oracle();
  forecasting_criteria();
  rollout_accumulation();
  scalability();
  determinism();
  unit_examples();
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
