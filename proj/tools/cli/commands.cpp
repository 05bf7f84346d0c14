#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "graphrefine/crossval.hpp"
#include "graphrefine/error.hpp"
#include "graphrefine/graph_io.hpp"
#include "graphrefine/metrics.hpp"
#include "graphrefine/selfcheck.hpp"
#include "graphrefine/serialization.hpp"
#include "graphrefine/synth.hpp"
#include "graphrefine/training.hpp"

namespace graphrefine::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
  int jobs = 1;
};

struct GenerateArgs {
  std::size_t n = 0;
  TreeSpec spec;
};

struct TrainArgs {
  std::string data;
  std::string model;
  std::optional<int> epochs;
  std::size_t batch_size = 12;
  std::size_t block_size = 500;
  double lr = 0.005;
  int layers = 10;
  std::size_t channels = 8;
  std::size_t gnn_layers = 2;
  double dropout = 0.5;
  std::size_t folds = 0;
};

struct InferArgs {
  std::string data;
  std::string checkpoint;
  int layers = 10;
};

struct EvalArgs {
  std::string data;
  std::string pred;
  double spacing = 0.5;
};

struct TraceArgs {
  std::string data;
  std::string checkpoint;
  int layers = 10;
  std::string schedule = "synchronous";
};

struct SelfcheckArgs {
  bool corrupt_gamma_sign = false;
};

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--config", c.config, "TOML/INI file with option values; flags override it");
  cmd->add_option("--seed", c.seed, "Root random seed");
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (needs_out) out->required();
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

// Creates the directory and proves it is writable before any work starts.
fs::path prepare_out_dir(const std::string& dir) {
  const fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw InputError("cannot create output directory " + dir);
  const fs::path probe = p / ".graphrefine-write-probe";
  {
    std::ofstream f(probe);
    if (!f) throw InputError("output directory " + dir + " is not writable");
  }
  fs::remove(probe, ec);
  return p;
}

struct LoadedData {
  std::vector<ManifestEntry> manifest;
  std::vector<GraphInstance> graphs;
};

LoadedData load_dataset(const std::string& manifest_path) {
  const fs::path path(manifest_path);
  if (!fs::is_regular_file(path)) throw InputError("manifest not found: " + manifest_path);
  LoadedData d;
  d.manifest = parse_manifest(read_text_file(path));
  if (d.manifest.empty()) throw InputError("manifest lists no graphs: " + manifest_path);
  for (const auto& e : d.manifest) {
    GraphInstance g = read_graph(path.parent_path() / e.path);
    if (g.id != e.id) {
      throw InputError("graph file " + e.path + " has id '" + g.id + "', manifest says '" + e.id + "'");
    }
    d.graphs.push_back(std::move(g));
  }
  return d;
}

void require_references(const LoadedData& d) {
  for (const auto& g : d.graphs) {
    if (!g.adjacency_ref) throw InputError("graph '" + g.id + "' has no reference adjacency");
  }
}

std::string loss_csv(const LossCurve& curve) {
  std::string s = "epoch,mean_loss,best_loss\n";
  for (std::size_t e = 0; e < curve.mean_loss.size(); ++e) {
    s += std::to_string(e) + "," + fmt17(curve.mean_loss[e]) + "," + fmt17(curve.best_loss[e]) + "\n";
  }
  return s;
}

ModelKind parse_model(const std::string& name) {
  if (name == "mfn") return ModelKind::mfn;
  if (name == "gnn") return ModelKind::gnn;
  throw CLI::ValidationError("--model", "must be mfn or gnn, got '" + name + "'");
}

// Trains on `train` and writes checkpoint + loss curve into `dir`. Returns
// a predictor for the trained model.
std::function<ConnectivityMatrix(const GraphInstance&)> train_into(
    const fs::path& dir, ModelKind kind, const std::vector<GraphInstance>& train,
    const TrainConfig& config, std::ostream& out) {
  if (kind == ModelKind::mfn) {
    auto r = train_mfn(train, config);
    write_text_file_atomic(dir / "model.mfn", mfn_params_to_text(r.params));
    write_text_file_atomic(dir / "loss.csv", loss_csv(r.curve));
    out << "trained mfn: best loss " << fmt17(r.curve.best_loss.back()) << " -> " << (dir / "model.mfn").string() << '\n';
    return [p = r.params, layers = config.mfn_layers](const GraphInstance& g) {
      return predict_mfn(g, p, layers);
    };
  }
  auto r = train_gnn(train, config);
  write_text_file_atomic(dir / "model.gnn.json", gnn_params_to_json(r.params));
  write_text_file_atomic(dir / "loss.csv", loss_csv(r.curve));
  out << "trained gnn: best loss " << fmt17(r.curve.best_loss.back()) << " -> " << (dir / "model.gnn.json").string() << '\n';
  return [p = r.params](const GraphInstance& g) { return predict_gnn(g, p); };
}

int cmd_generate(const Common& c, GenerateArgs a, std::ostream& out) {
  if (a.n < 1) throw CLI::ValidationError("--n", "must be at least 1");
  a.spec.validate();
  const fs::path dir = prepare_out_dir(c.out);
  const Dataset d = make_dataset(a.n, a.spec, c.seed);
  for (const auto& g : d.graphs) write_graph(dir / (g.id + ".json"), g);
  write_text_file_atomic(dir / "manifest.json", manifest_to_json(d.manifest));
  out << "wrote " << d.graphs.size() << " graphs and manifest.json to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_train(const Common& c, const TrainArgs& a, std::ostream& out) {
  const ModelKind kind = parse_model(a.model);
  TrainConfig config = kind == ModelKind::mfn ? TrainConfig::mfn_defaults() : TrainConfig::gnn_defaults();
  if (a.epochs) config.epochs = *a.epochs;
  config.batch_size = a.batch_size;
  config.block_size = a.block_size;
  config.optimizer.lr = a.lr;
  config.mfn_layers = a.layers;
  config.gnn_channels = a.channels;
  config.gnn_layers = a.gnn_layers;
  config.dropout = a.dropout;
  config.seed = c.seed;
  config.jobs = c.jobs;
  config.validate();

  const LoadedData d = load_dataset(a.data);
  require_references(d);
  const fs::path dir = prepare_out_dir(c.out);

  if (a.folds == 0) {
    train_into(dir, kind, d.graphs, config, out);
    return kExitOk;
  }

  const auto split = crossval_split(d.graphs.size(), a.folds, c.seed);
  std::vector<MetricReport> held_out;
  for (std::size_t f = 0; f < split.size(); ++f) {
    const fs::path fold_dir = prepare_out_dir((dir / ("fold_" + std::to_string(f))).string());
    std::vector<GraphInstance> train;
    std::string test_ids;
    for (std::size_t i = 0; i < d.graphs.size(); ++i) {
      if (std::binary_search(split[f].begin(), split[f].end(), i)) {
        test_ids += d.graphs[i].id + "\n";
      } else {
        train.push_back(d.graphs[i]);
      }
    }
    TrainConfig fold_config = config;
    fold_config.seed = derive_seed(c.seed, f);
    const auto predict = train_into(fold_dir, kind, train, fold_config, out);
    write_text_file_atomic(fold_dir / "test_ids.txt", test_ids);
    for (std::size_t i : split[f]) {
      held_out.push_back(evaluate(d.graphs[i], binarize_connectivity(predict(d.graphs[i]))));
    }
  }
  std::ostringstream csv;
  write_metric_csv(csv, held_out);
  write_text_file_atomic(dir / "crossval_metrics.csv", csv.str());
  const auto [mean, sd] = aggregate(held_out);
  out << "cross-validated dice " << fmt17(*mean.dice_pct) << " +- " << fmt17(*sd.dice_pct) << '\n';
  return kExitOk;
}

int cmd_infer(const Common& c, const InferArgs& a, std::ostream& out) {
  if (a.layers < 1) throw CLI::ValidationError("--layers", "must be at least 1");
  const std::string text = read_text_file(a.checkpoint);
  const ModelKind kind = detect_checkpoint(text);
  const LoadedData d = load_dataset(a.data);
  const fs::path dir = prepare_out_dir(c.out);

  std::function<ConnectivityMatrix(const GraphInstance&)> predict;
  if (kind == ModelKind::mfn) {
    const MfnParams p = parse_mfn_params(text);
    if (p.feature_dim() != kNodeFeatureDim) throw InputError("MFN checkpoint feature count does not match the graphs");
    predict = [p, layers = a.layers](const GraphInstance& g) { return predict_mfn(g, p, layers); };
  } else {
    const GnnParams p = parse_gnn_params(text);
    if (p.feature_dim() != kNodeFeatureDim) throw InputError("GNN checkpoint feature count does not match the graphs");
    predict = [p](const GraphInstance& g) { return predict_gnn(g, p); };
  }
  for (const auto& g : d.graphs) {
    const ConnectivityMatrix alpha = predict(g);
    write_text_file_atomic(dir / (g.id + ".alpha.json"), alpha_to_json(g.id, alpha));
    write_text_file_atomic(dir / (g.id + ".refined.json"),
                           adjacency_to_json(g.id, binarize_connectivity(alpha)));
  }
  out << "wrote predictions for " << d.graphs.size() << " graphs to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(const Common& c, const EvalArgs& a, std::ostream& out) {
  if (!(a.spacing > 0.0)) throw CLI::ValidationError("--spacing", "must be positive");
  const LoadedData d = load_dataset(a.data);
  require_references(d);
  const fs::path pred_dir(a.pred);
  if (!fs::is_directory(pred_dir)) throw InputError("prediction directory not found: " + a.pred);
  std::vector<Adjacency> predictions;
  for (const auto& g : d.graphs) {
    const fs::path file = pred_dir / (g.id + ".refined.json");
    if (!fs::is_regular_file(file)) throw InputError("no prediction for graph '" + g.id + "'");
    std::string id;
    Adjacency adj = parse_adjacency(read_text_file(file), &id);
    if (id != g.id) throw InputError(file.string() + " is for graph '" + id + "', expected '" + g.id + "'");
    if (adj.node_count() != g.node_count()) throw InputError(file.string() + ": node count differs from the graph");
    predictions.push_back(std::move(adj));
  }
  const fs::path dir = prepare_out_dir(c.out);
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < d.graphs.size(); ++i) reports.push_back(evaluate(d.graphs[i], predictions[i], a.spacing));
  std::ostringstream csv;
  write_metric_csv(csv, reports);
  write_text_file_atomic(dir / "metrics.csv", csv.str());
  const auto [mean, sd] = aggregate(reports);
  out << "mean dice " << fmt17(*mean.dice_pct) << " over " << reports.size() << " graphs\n";
  return kExitOk;
}

int cmd_elbo_trace(const Common& c, const TraceArgs& a, std::ostream& out) {
  if (a.layers < 1) throw CLI::ValidationError("--layers", "must be at least 1");
  MfnOptions options;
  options.layers = a.layers;
  options.record_elbo = true;
  if (a.schedule == "synchronous") {
    options.schedule = MfnSchedule::synchronous;
  } else if (a.schedule == "sequential") {
    options.schedule = MfnSchedule::sequential;
  } else {
    throw CLI::ValidationError("--schedule", "must be synchronous or sequential");
  }
  const MfnParams params = parse_mfn_params(read_text_file(a.checkpoint));
  const LoadedData d = load_dataset(a.data);
  const fs::path dir = prepare_out_dir(c.out);
  std::string csv = "graph_id,layer,elbo\n";
  for (const auto& g : d.graphs) {
    const MfnGraph mg{PreparedGraph(g)};
    const auto r = mfn_forward(mg, params, options);
    for (std::size_t t = 0; t < r.trace.values.size(); ++t) {
      csv += g.id + "," + std::to_string(t) + "," + fmt17(r.trace.values[t]) + "\n";
    }
  }
  write_text_file_atomic(dir / "elbo_trace.csv", csv);
  out << "wrote elbo_trace.csv for " << d.graphs.size() << " graphs\n";
  return kExitOk;
}

int cmd_selfcheck(const Common& c, const SelfcheckArgs& a, std::ostream& out) {
  SelfcheckOptions options;
  options.corrupt_gamma_sign = a.corrupt_gamma_sign;
  if (c.seed != 0) options.seed = c.seed;
  const auto checks = run_selfcheck(options);
  print_checks(out, checks);
  const bool ok = std::all_of(checks.begin(), checks.end(), [](const CheckResult& r) { return r.passed; });
  return ok ? kExitOk : kExitCheckFailed;
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&flag](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

// CLI11 only reads config files attached to the root app, so the subcommand's
// --config file is turned into "--key=value" arguments placed before the
// command-line flags, which then win.
std::vector<std::string> expand_config(const CLI::App& app, const std::vector<std::string>& args) {
  if (args.empty()) return args;
  const CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (sub == nullptr) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;

  std::vector<std::string> expanded{args[0]};
  for (const CLI::ConfigItem& item : CLI::ConfigTOML().from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;
    std::string key = item.name;
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string flag = "--" + key;
    if (!item.parents.empty() || key == "config" || sub->get_option_no_throw(flag) == nullptr) {
      throw CLI::ValidationError("--config", "unknown key '" + item.name + "' in " + path);
    }
    if (given_on_command_line(args, flag)) continue;
    for (const auto& value : item.inputs) expanded.push_back(flag + "=" + value);
  }
  expanded.insert(expanded.end(), args.begin() + 1, args.end());
  return expanded;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tree recovery from over-connected geometric graphs", "graphrefine"};
  app.require_subcommand(1);

  Common common;

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset and manifest");
  add_common(generate, common, true);
  generate->add_option("--n", gen.n, "Number of graphs")->required();
  generate->add_option("--generations", gen.spec.generations);
  generate->add_option("--root-radius", gen.spec.root_radius);
  generate->add_option("--radius-decay", gen.spec.radius_decay);
  generate->add_option("--branch-length", gen.spec.branch_length);
  generate->add_option("--branch-length-jitter", gen.spec.branch_length_jitter);
  generate->add_option("--bifurcation-angle", gen.spec.bifurcation_angle);
  generate->add_option("--angle-jitter", gen.spec.angle_jitter);
  generate->add_option("--node-spacing", gen.spec.node_spacing);
  generate->add_option("--trifurcation-prob", gen.spec.trifurcation_prob);
  generate->add_option("--clutter-rate", gen.spec.clutter_rate);
  generate->add_option("--feature-noise", gen.spec.feature_noise);
  generate->add_option("--knn", gen.spec.knn);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Fit an MFN or GNN, optionally per cross-validation fold");
  add_common(train, common, true);
  train->add_option("--data", tr.data, "Dataset manifest")->required();
  train->add_option("--model", tr.model, "mfn or gnn")->required();
  train->add_option("--epochs", tr.epochs, "Default 2000 (mfn) or 500 (gnn)");
  train->add_option("--batch-size", tr.batch_size);
  train->add_option("--block-size", tr.block_size, "MFN sub-graph size");
  train->add_option("--lr", tr.lr);
  train->add_option("--layers", tr.layers, "MFN layer count T");
  train->add_option("--channels", tr.channels, "GNN channels E");
  train->add_option("--gnn-layers", tr.gnn_layers, "GNN receptive field");
  train->add_option("--dropout", tr.dropout);
  train->add_option("--folds", tr.folds, "Cross-validation folds (0 trains on everything)");

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "Predict alpha and refined adjacency per graph");
  add_common(infer, common, true);
  infer->add_option("--data", inf.data, "Dataset manifest")->required();
  infer->add_option("--checkpoint", inf.checkpoint, "model.mfn or model.gnn.json")->required();
  infer->add_option("--layers", inf.layers, "MFN layer count T");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score refined adjacencies against references");
  add_common(eval, common, true);
  eval->add_option("--data", ev.data, "Dataset manifest with references")->required();
  eval->add_option("--pred", ev.pred, "Directory of <id>.refined.json files")->required();
  eval->add_option("--spacing", ev.spacing, "Centerline sampling step in mm");

  TraceArgs tc;
  auto* trace = app.add_subcommand("elbo-trace", "ELBO after each MFN layer");
  add_common(trace, common, true);
  trace->add_option("--data", tc.data, "Dataset manifest")->required();
  trace->add_option("--checkpoint", tc.checkpoint, "MFN checkpoint")->required();
  trace->add_option("--layers", tc.layers);
  trace->add_option("--schedule", tc.schedule, "synchronous or sequential");

  SelfcheckArgs sc;
  auto* selfcheck = app.add_subcommand("selfcheck", "Oracle and identity checks");
  add_common(selfcheck, common, false);
  selfcheck->add_flag("--corrupt-gamma-sign", sc.corrupt_gamma_sign, "Debug: negate gamma in the stationarity check");

  try {
    const std::vector<std::string> expanded = expand_config(app, args);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
    if (generate->parsed()) return cmd_generate(common, gen, out);
    if (train->parsed()) return cmd_train(common, tr, out);
    if (infer->parsed()) return cmd_infer(common, inf, out);
    if (eval->parsed()) return cmd_eval(common, ev, out);
    if (trace->parsed()) return cmd_elbo_trace(common, tc, out);
    if (selfcheck->parsed()) return cmd_selfcheck(common, sc, out);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitUsage;
}

}  // namespace graphrefine::cli
