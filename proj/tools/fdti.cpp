// fdti: simulate -> train -> predict -> evaluate -> stmad, plus an FTSTG debug dump.
//
// Exit codes: 0 success, 2 usage, 3 validation, 4 training divergence.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fdti/fdti.hpp"

namespace fs = std::filesystem;
using namespace fdti;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitDivergence = 4;

const std::vector<std::string> kDataFiles{"roadnet.json", "signal.csv", "volumes.csv", "flows.csv"};

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (auto f : split(s, ',')) {
    const auto v = parse_int(trim(f), what);
    require(v >= 1, what + ": values must be >= 1");
    out.push_back(static_cast<int>(v));
  }
  require(!out.empty(), what + ": empty list");
  return out;
}

std::string manifest_path(const std::string& artifact) { return artifact + ".manifest.json"; }

// Warm-up length comes from the dataset's manifest unless overridden.
int dataset_warmup(const fs::path& dir, std::optional<int> flag) {
  if (flag) return *flag;
  const auto path = dir / "manifest.json";
  if (!fs::exists(path)) return 0;
  try {
    return nlohmann::json::parse(read_file(path.string())).value("warmup_min", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dataset manifest: " + std::string(e.what()));
  }
}

Dataset load_data(const fs::path& dir, std::optional<int> warmup, RunManifest& m) {
  auto d = import_dataset(dir, dataset_warmup(dir, warmup));
  for (const auto& f : kDataFiles) m.input((dir / f).string());
  m["warmup_min"] = d.warmup_min;
  return d;
}

MinuteRange split_range(const Split& s, const std::string& name, const Dataset& d) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  return {d.range.begin + d.warmup_min, d.range.end};
}

struct Ablations {
  std::optional<double> lambda;
  bool no_roadnet_features = false;
  bool no_dynamic_edges = false;

  void add_to(CLI::App* app) {
    app->add_option("--lambda", lambda, "Rollout discount in (0, 1]; 1.0 disables discounting");
    app->add_flag("--no-roadnet-features", no_roadnet_features, "Zero green-time, length and direction features");
    app->add_flag("--no-dynamic-edges", no_dynamic_edges, "Fix every FTSTG edge weight to 1");
  }

  nlohmann::json apply(ModelConfig& c) const {
    nlohmann::json applied = nlohmann::json::object();
    if (lambda) c.discount = *lambda, applied["lambda"] = *lambda;
    if (no_roadnet_features) c.features.roadnet_features = false, applied["roadnet_features"] = false;
    if (no_dynamic_edges) c.graph.dynamic_edges = false, applied["dynamic_edges"] = false;
    return applied;
  }
};

int cmd_simulate(const std::string& config_path, const std::string& out) {
  RunManifest m("simulate");
  m.input(config_path);
  const auto config = sim_config_from(KeyValues::parse(read_file(config_path)));
  const auto d = run(config);
  export_dataset(d, out);
  m["config"] = describe(config);
  m["seed"] = config.seed;
  m["warmup_min"] = config.warmup_min;
  m["n_movements"] = d.n_nodes();
  for (const auto& f : kDataFiles) m.output((fs::path(out) / f).string());
  m.write((fs::path(out) / "manifest.json").string());
  std::fprintf(stderr, "simulated %d minutes on %zu movements -> %s\n", d.n_minutes(), d.n_nodes(), out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data, config, out;
  std::optional<int> warmup, epochs, patience;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  Ablations ablations;
};

int cmd_train(const TrainArgs& a) {
  RunManifest m("train");
  m.input(a.config);
  const auto d = load_data(a.data, a.warmup, m);
  auto rc = run_config_from(KeyValues::parse(read_file(a.config)));
  auto overrides = a.ablations.apply(rc.model);
  if (a.lr) rc.train.adam.lr = *a.lr, overrides["lr"] = *a.lr;
  if (a.epochs) rc.train.max_epochs = *a.epochs, overrides["epochs"] = *a.epochs;
  if (a.patience) rc.train.patience = *a.patience, overrides["patience"] = *a.patience;
  if (a.seed) rc.model.seed = *a.seed, overrides["seed"] = *a.seed;
  rc.model.validate();

  const auto result = train(d, rc.model, rc.train, [&](const EpochRecord& r) {
    if (!a.quiet)
      std::fprintf(stderr, "epoch %3d  train_loss %.6f  val_rmse %.6f  best %.6f\n", r.epoch, r.train_loss,
                   r.val_rmse, r.best_val_rmse);
  });
  save_checkpoint(result.params, rc.model, a.out);

  m["config"] = model_config_json(rc.model);
  m["train"] = {{"lr", rc.train.adam.lr}, {"max_epochs", rc.train.max_epochs}, {"patience", rc.train.patience}};
  m["overrides"] = overrides;
  m["seed"] = rc.model.seed;
  m["parameter_count"] = result.params.count();
  m["best_epoch"] = result.best_epoch;
  m["epochs_run"] = result.history.size();
  auto history = nlohmann::json::array();
  for (const auto& h : result.history) history.push_back({h.epoch, h.train_loss, h.val_rmse});
  m["history"] = history;
  m["split"] = {{"train", {result.split.train.begin, result.split.train.end}},
                {"val", {result.split.val.begin, result.split.val.end}},
                {"test", {result.split.test.begin, result.split.test.end}}};
  m.output(a.out);
  m.write(manifest_path(a.out));
  std::fprintf(stderr, "best epoch %d of %zu, %zu parameters -> %s\n", result.best_epoch, result.history.size(),
               result.params.count(), a.out.c_str());
  return 0;
}

struct PredictArgs {
  std::string data, ckpt, horizons, out, method = "fdti", split = "test";
  std::optional<int> warmup;
  std::size_t window = 5;
  Ablations ablations;
};

int cmd_predict(const PredictArgs& a) {
  RunManifest m("predict");
  const auto d = load_data(a.data, a.warmup, m);
  const auto horizons = parse_int_list(a.horizons, "--horizons");
  const int max_h = *std::max_element(horizons.begin(), horizons.end());
  const auto s = chronological_split(d.range, d.warmup_min);
  const auto range = split_range(s, a.split, d);

  PredictionSet p;
  if (a.method == "fdti") {
    require(!a.ckpt.empty(), "predict: --ckpt is required for the fdti method");
    m.input(a.ckpt);
    auto ck = load_checkpoint(a.ckpt);
    m["overrides"] = a.ablations.apply(ck.config);
    ck.config.validate();
    m["config"] = model_config_json(ck.config);
    m["parameter_count"] = ck.params.count();
    p = predict_fdti(d, evaluation_origins(d, range, ck.config.window, max_h), horizons, ck.params, ck.config);
  } else {
    const auto origins = evaluation_origins(d, range, a.window, max_h);
    if (a.method == "persistence") p = predict_persistence(d, origins, horizons);
    else if (a.method == "ha") p = predict_ha(d, s.train, origins, horizons);
    else if (a.method == "linreg") p = predict_linreg(d, s.train, origins, horizons);
    else p = predict_neighbor_average(d, origins, horizons);
  }
  require(!p.origins.empty(), "predict: split '" + a.split + "' has no origin with a full window and horizon");
  write_file(a.out, serialize_predictions(p));
  m["method"] = a.method;
  m["split"] = a.split;
  m["horizons"] = horizons;
  m.output(a.out);
  m.write(manifest_path(a.out));
  std::fprintf(stderr, "%s: %zu origins x %zu movements x %zu horizons -> %s\n", a.method.c_str(), p.origins.size(),
               p.n_nodes, horizons.size(), a.out.c_str());
  return 0;
}

PredictionSet select_horizons(const PredictionSet& p, const std::vector<int>& horizons) {
  PredictionSet out(p.origins, horizons, p.n_nodes);
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    const auto it = std::find(p.horizons.begin(), p.horizons.end(), horizons[h]);
    require(it != p.horizons.end(), "evaluate: horizon " + std::to_string(horizons[h]) + " not in predictions");
    out.values[h] = p.values[static_cast<std::size_t>(it - p.horizons.begin())];
  }
  return out;
}

Matrix read_volumes(const std::string& path, std::size_t n, int& first_minute) {
  std::vector<Matrix> vol;
  const auto r = parse_node_series(read_file(path), kVolumesHeader, n, 1, vol, "truth");
  first_minute = r.begin;
  return std::move(vol[0]);
}

int cmd_evaluate(const std::string& pred_path, const std::string& truth_path, const std::string& horizon_list,
                 const std::string& out) {
  RunManifest m("evaluate");
  m.input(pred_path);
  m.input(truth_path);
  const auto pred = select_horizons(parse_predictions(read_file(pred_path)), parse_int_list(horizon_list, "--horizons"));
  int first = 0;
  const auto volumes = read_volumes(truth_path, pred.n_nodes, first);
  const auto report = evaluate(pred, truth_for(volumes, first, pred));
  const auto text = std::string(kReportHeader) + "\n" + format_report("prediction", report);
  std::cout << text;
  for (const auto& h : report.horizons)
    std::fprintf(stderr, "horizon %d: RMSE %.4f  MAPE %.2f%% (%zu cells, %zu zero targets excluded)\n", h.horizon,
                 h.rmse, h.mape, h.n_cells, h.n_excluded);
  if (!out.empty()) {
    write_file(out, text);
    m.output(out);
    m.write(manifest_path(out));
  }
  return 0;
}

struct StmadArgs {
  std::string data, graph, k = "1", out;
  std::size_t window = 5;
  int horizon = 1;
  std::vector<int> minutes;
};

int cmd_stmad(const StmadArgs& a) {
  RunManifest m("stmad");
  m.input(a.data);
  m.input(a.graph);
  const auto g = parse_roadnet(read_file(a.graph));
  const auto text = read_file(a.data);
  Matrix series;
  int first = 0;
  if (text.rfind(kPredictionsHeader, 0) == 0) {
    const auto p = parse_predictions(text);
    require(p.n_nodes == g.size(), "stmad: predictions and graph disagree on movement count");
    series = p.series(a.horizon);
    // Row o holds the forecast for minute origins[o] + horizon.
    first = p.origins.empty() ? 0 : p.origins.front() + a.horizon;
    for (std::size_t o = 1; o < p.origins.size(); ++o)
      require(p.origins[o] == p.origins[o - 1] + 1, "stmad: prediction origins must be consecutive minutes");
  } else {
    std::vector<Matrix> vol;
    first = parse_node_series(text, kVolumesHeader, g.size(), 1, vol, "stmad").begin;
    series = std::move(vol[0]);
  }
  if (!a.minutes.empty()) {
    require(a.minutes.size() == 2 && a.minutes[0] >= first && a.minutes[1] > a.minutes[0] &&
                a.minutes[1] - first <= static_cast<int>(series.rows()),
            "stmad: --minutes must name a range inside the series");
    Matrix cut(static_cast<std::size_t>(a.minutes[1] - a.minutes[0]), series.cols());
    for (std::size_t r = 0; r < cut.rows(); ++r) {
      const auto src = series.row(static_cast<std::size_t>(a.minutes[0] - first) + r);
      std::copy(src.begin(), src.end(), cut.row(r).begin());
    }
    series = std::move(cut);
  }
  std::string report = "k,window,n_windows,stmad,skipped_pairs\n";
  for (int k : parse_int_list(a.k, "--k")) {
    const auto r = stmad(series, g, k, a.window);
    report += std::to_string(k) + ',' + std::to_string(a.window) + ',' + std::to_string(r.mad.size()) + ',' +
              format_real(r.stmad) + ',' + std::to_string(r.skipped_pairs) + '\n';
    std::fprintf(stderr, "k=%d: STMAD %.6f over %zu windows of %zu minutes\n", k, r.stmad, r.mad.size(), a.window);
  }
  std::cout << report;
  if (!a.out.empty()) {
    write_file(a.out, report);
    m.output(a.out);
    m.write(manifest_path(a.out));
  }
  return 0;
}

struct DumpArgs {
  std::string data, out;
  std::vector<int> window;
  bool no_dynamic_edges = false, constant_self_edges = false, raw_green = false;
};

int cmd_ftstg_dump(const DumpArgs& a) {
  RunManifest m("ftstg dump");
  const fs::path dir(a.data);
  const auto g = parse_roadnet(read_file((dir / "roadnet.json").string()));
  const MinuteRange range{a.window[0], a.window[0] + a.window[1]};
  const auto signal = parse_signal_plan(read_file((dir / "signal.csv").string()), g, range);
  FtstgOptions opt;
  opt.dynamic_edges = !a.no_dynamic_edges;
  opt.normalize_green = !a.raw_green;
  opt.self_edges = a.constant_self_edges ? SelfEdgeWeight::Constant : SelfEdgeWeight::SignalGated;
  const auto text = dump_ftstg(build_ftstg(g, signal, a.window[0], a.window[1], opt));
  if (a.out.empty()) {
    std::cout << text;
    return 0;
  }
  write_file(a.out, text);
  m.input((dir / "roadnet.json").string());
  m.input((dir / "signal.csv").string());
  m["window"] = a.window;
  m.output(a.out);
  m.write(manifest_path(a.out));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained traffic volume forecasting on signalised road networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string sim_config, sim_out;
  auto* sim = app.add_subcommand("simulate", "Generate a grid dataset with the queue simulator");
  sim->add_option("--config", sim_config, "Simulator config file")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", sim_out, "Output directory")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  tr->add_option("--data", ta.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--config", ta.config, "Training config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", ta.out, "Checkpoint path")->required();
  tr->add_option("--warmup", ta.warmup, "Warm-up minutes (default: from the dataset manifest)");
  tr->add_option("--lr", ta.lr, "Adam learning rate");
  tr->add_option("--epochs", ta.epochs, "Maximum epochs");
  tr->add_option("--patience", ta.patience, "Early-stopping patience in epochs");
  tr->add_option("--seed", ta.seed, "Initialisation seed");
  tr->add_flag("--quiet", ta.quiet, "Suppress per-epoch progress");
  ta.ablations.add_to(tr);

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Forecast volumes for every target minute in a split");
  pr->add_option("--data", pa.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  pr->add_option("--ckpt", pa.ckpt, "Checkpoint (fdti method)");
  pr->add_option("--horizons", pa.horizons, "Comma-separated horizons, e.g. 1,3,5")->required();
  pr->add_option("--out", pa.out, "Predictions file")->required();
  pr->add_option("--method", pa.method, "fdti, ha, persistence, linreg or neighbor-average")
      ->check(CLI::IsMember({"fdti", "ha", "persistence", "linreg", "neighbor-average"}));
  pr->add_option("--split", pa.split, "Target minutes from train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  pr->add_option("--window", pa.window, "History minutes per origin for baselines (fdti uses the checkpoint's)");
  pr->add_option("--warmup", pa.warmup, "Warm-up minutes (default: from the dataset manifest)");
  pa.ablations.add_to(pr);

  std::string ev_pred, ev_truth, ev_horizons, ev_out;
  auto* ev = app.add_subcommand("evaluate", "RMSE and MAPE per horizon");
  ev->add_option("--pred", ev_pred, "Predictions file")->required()->check(CLI::ExistingFile);
  ev->add_option("--truth", ev_truth, "Ground-truth volumes file")->required()->check(CLI::ExistingFile);
  ev->add_option("--horizons", ev_horizons, "Comma-separated horizons")->required();
  ev->add_option("--out", ev_out, "Also write the report here");

  StmadArgs sa;
  auto* st = app.add_subcommand("stmad", "k-hop spatial-temporal mean average distance");
  st->add_option("--data", sa.data, "Volumes or predictions file")->required()->check(CLI::ExistingFile);
  st->add_option("--graph", sa.graph, "Roadnet file")->required()->check(CLI::ExistingFile);
  st->add_option("--k", sa.k, "Comma-separated hop counts");
  st->add_option("--window", sa.window, "Minutes per subgraph")->check(CLI::PositiveNumber);
  st->add_option("--horizon", sa.horizon, "Horizon to read from a predictions file");
  st->add_option("--minutes", sa.minutes, "Restrict to minutes [begin, end)")->expected(2);
  st->add_option("--out", sa.out, "Also write the report here");

  DumpArgs da;
  auto* fg = app.add_subcommand("ftstg", "FTSTG utilities");
  fg->require_subcommand(1);
  auto* dump = fg->add_subcommand("dump", "Print the edge list t,src,dst,weight");
  dump->add_option("--data", da.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  dump->add_option("--window", da.window, "First minute and number of layers")->required()->expected(2);
  dump->add_option("--out", da.out, "Write here instead of stdout");
  dump->add_flag("--no-dynamic-edges", da.no_dynamic_edges, "Fix every weight to 1");
  dump->add_flag("--constant-self-edges", da.constant_self_edges, "Self edges weigh 1");
  dump->add_flag("--raw-green", da.raw_green, "Use green seconds instead of green fraction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(sim_config, sim_out);
    if (*tr) return cmd_train(ta);
    if (*pr) return cmd_predict(pa);
    if (*ev) return cmd_evaluate(ev_pred, ev_truth, ev_horizons, ev_out);
    if (*st) return cmd_stmad(sa);
    if (*dump) return cmd_ftstg_dump(da);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}
