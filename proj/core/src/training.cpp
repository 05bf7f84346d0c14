#include "graphrefine/training.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <thread>

#include "graphrefine/blocks.hpp"
#include "graphrefine/error.hpp"
#include "graphrefine/loss.hpp"
#include "graphrefine/rng.hpp"

namespace graphrefine {

namespace {

// Stream identifiers under the root seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

struct MfnSample {
  std::vector<MfnGraph> blocks;
  std::vector<DiceTarget> targets;
};

struct GnnSample {
  PreparedGraph graph;
  DiceTarget target;
};

const Adjacency& require_reference(const GraphInstance& g) {
  if (!g.adjacency_ref) throw InputError("graph '" + g.id + "' has no reference adjacency");
  return *g.adjacency_ref;
}

Adjacency induced_reference(const Adjacency& ref, std::span<const int> nodes) {
  std::vector<int> local(ref.node_count(), -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) local[static_cast<std::size_t>(nodes[i])] = static_cast<int>(i);
  Adjacency out(nodes.size());
  for (const Edge& e : ref.edges()) {
    const int a = local[static_cast<std::size_t>(e.i)];
    const int b = local[static_cast<std::size_t>(e.j)];
    if (a >= 0 && b >= 0) out.add_edge(a, b);
  }
  return out;
}

MfnSample prepare_mfn(const GraphInstance& g, std::size_t block_size) {
  const Adjacency& ref = require_reference(g);
  const PreparedGraph full(g);
  MfnSample s;
  for (const auto& nodes : partition_into_blocks(full, block_size)) {
    PreparedGraph block = full.induced(nodes);
    s.targets.push_back(dice_target(block.support(), induced_reference(ref, nodes)));
    s.blocks.emplace_back(std::move(block));
  }
  return s;
}

GnnSample prepare_gnn(const GraphInstance& g) {
  const Adjacency& ref = require_reference(g);
  PreparedGraph prepared(g);
  DiceTarget target = dice_target(prepared.support(), ref);
  return {std::move(prepared), std::move(target)};
}

DiffValue mfn_sample_gradient(const MfnSample& s, const MfnParams& params, int layers) {
  MfnOptions options;
  options.layers = layers;
  options.record_elbo = false;
  std::vector<MfnForwardResult> forwards;
  forwards.reserve(s.blocks.size());
  DiceAccumulator acc;
  for (std::size_t b = 0; b < s.blocks.size(); ++b) {
    if (s.blocks[b].support().pair_count() == 0) {
      forwards.emplace_back();
      acc.add({}, s.targets[b]);
      continue;
    }
    forwards.push_back(mfn_forward(s.blocks[b], params, options));
    acc.add(forwards.back().alpha.values(), s.targets[b]);
  }
  DiffValue out{acc.value(), std::vector<double>(mfn_param_count(params.feature_dim()), 0.0)};
  for (std::size_t b = 0; b < s.blocks.size(); ++b) {
    if (s.blocks[b].support().pair_count() == 0) continue;
    const auto alpha = forwards[b].alpha.values();
    const auto d_alpha = acc.gradient(alpha, s.targets[b]);
    const auto g = mfn_backward(s.blocks[b], params, forwards[b], d_alpha);
    for (std::size_t i = 0; i < g.size(); ++i) out.gradient[i] += g[i];
  }
  return out;
}

DiffValue gnn_sample_gradient(const GnnSample& s, const GnnParams& params, GnnMode mode,
                              std::uint64_t dropout_seed) {
  Rng rng(dropout_seed);
  const GnnForward fwd = gnn_forward(s.graph, params, mode, &rng);
  const DiffValue d = dice_loss_with_gradient(fwd.alpha.values(), s.target);
  return {d.value, gnn_backward(s.graph, params, fwd, d.gradient)};
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each call writes only
// its own slot, so results are independent of the thread count.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Shared epoch/batch loop. `gradient(i, epoch)` returns loss and flat
// gradient of graph i at the current parameters.
template <typename GradientFn>
LossCurve optimize(std::vector<double>& flat, std::vector<double>& best_flat, std::size_t n_graphs,
                   const TrainConfig& config, GradientFn&& gradient,
                   const EpochCallback& on_epoch) {
  AmsgradState state(flat.size(), config.optimizer);
  LossCurve curve;
  double best = std::numeric_limits<double>::infinity();
  best_flat = flat;
  std::vector<std::size_t> order(n_graphs);
  const std::uint64_t shuffle_root = derive_seed(config.seed, kShuffleStream);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(shuffle_root, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    const std::vector<double> start_of_epoch = flat;
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n_graphs; begin += config.batch_size) {
      const std::size_t end = std::min(n_graphs, begin + config.batch_size);
      std::vector<DiffValue> results(end - begin);
      parallel_for(results.size(), config.jobs,
                   [&](std::size_t b) { results[b] = gradient(order[begin + b], epoch, flat); });
      std::vector<double> mean_grad(flat.size(), 0.0);
      for (const auto& r : results) {
        loss_sum += r.value;
        for (std::size_t i = 0; i < flat.size(); ++i) mean_grad[i] += r.gradient[i];
      }
      const double scale = 1.0 / static_cast<double>(results.size());
      for (double& g : mean_grad) g *= scale;
      amsgrad_step(flat, mean_grad, state);
    }
    const double mean_loss = loss_sum / static_cast<double>(n_graphs);
    if (mean_loss < best) {
      best = mean_loss;
      best_flat = start_of_epoch;
    }
    curve.mean_loss.push_back(mean_loss);
    curve.best_loss.push_back(best);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return curve;
}

void check_dataset(std::span<const GraphInstance> dataset) {
  if (dataset.empty()) throw InputError("training set is empty");
  for (const auto& g : dataset) require_reference(g);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("epochs must be at least 1");
  if (batch_size < 1) throw ParameterError("batch size must be at least 1");
  if (block_size < 2) throw ParameterError("block size must be at least 2");
  if (mfn_layers < 1) throw ParameterError("MFN layer count must be at least 1");
  if (gnn_channels < 1 || gnn_layers < 1) throw ParameterError("GNN channels and layers must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("dropout must be in [0, 1)");
  if (!(optimizer.lr > 0.0)) throw ParameterError("learning rate must be positive");
  if (jobs < 1) throw ParameterError("jobs must be at least 1");
}

TrainConfig TrainConfig::mfn_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::gnn_defaults() {
  TrainConfig c;
  c.epochs = 500;
  return c;
}

MfnParams init_mfn(std::size_t feature_dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> flat(mfn_param_count(feature_dim));
  for (double& w : flat) w = rng.uniform(-0.01, 0.01);
  return MfnParams::unflatten(flat, feature_dim);
}

DiffValue mfn_loss_gradient(const GraphInstance& graph, const MfnParams& params, int layers,
                            std::size_t block_size) {
  return mfn_sample_gradient(prepare_mfn(graph, block_size), params, layers);
}

DiffValue gnn_loss_gradient(const GraphInstance& graph, const GnnParams& params, GnnMode mode,
                            std::uint64_t dropout_seed) {
  return gnn_sample_gradient(prepare_gnn(graph), params, mode, dropout_seed);
}

MfnTrainResult train_mfn(std::span<const GraphInstance> dataset, const TrainConfig& config,
                         const EpochCallback& on_epoch) {
  config.validate();
  check_dataset(dataset);
  std::vector<MfnSample> samples;
  samples.reserve(dataset.size());
  for (const auto& g : dataset) samples.push_back(prepare_mfn(g, config.block_size));

  const std::size_t f = kNodeFeatureDim;
  std::vector<double> flat = init_mfn(f, derive_seed(config.seed, kInitStream)).flatten();
  std::vector<double> best;
  auto curve = optimize(
      flat, best, samples.size(), config,
      [&](std::size_t i, int, const std::vector<double>& w) {
        return mfn_sample_gradient(samples[i], MfnParams::unflatten(w, f), config.mfn_layers);
      },
      on_epoch);
  return {MfnParams::unflatten(best, f), std::move(curve)};
}

GnnTrainResult train_gnn(std::span<const GraphInstance> dataset, const TrainConfig& config,
                         const EpochCallback& on_epoch) {
  config.validate();
  check_dataset(dataset);
  std::vector<GnnSample> samples;
  samples.reserve(dataset.size());
  for (const auto& g : dataset) samples.push_back(prepare_gnn(g));

  GnnParams params = init_gnn(kNodeFeatureDim, config.gnn_channels,
                              derive_seed(config.seed, kInitStream), config.gnn_layers,
                              config.dropout);
  std::vector<double> flat = params.flatten();
  std::vector<double> best;
  const std::uint64_t dropout_root = derive_seed(config.seed, kDropoutStream);
  auto curve = optimize(
      flat, best, samples.size(), config,
      [&](std::size_t i, int epoch, const std::vector<double>& w) {
        GnnParams local = params;
        local.assign(w);
        const std::uint64_t seed =
            derive_seed(derive_seed(dropout_root, static_cast<std::uint64_t>(epoch)), i);
        return gnn_sample_gradient(samples[i], local, GnnMode::train, seed);
      },
      on_epoch);
  params.assign(best);
  return {std::move(params), std::move(curve)};
}

ConnectivityMatrix predict_mfn(const GraphInstance& graph, const MfnParams& params, int layers) {
  const MfnGraph g{PreparedGraph(graph)};
  MfnOptions options;
  options.layers = layers;
  options.record_elbo = false;
  return mfn_forward(g, params, options).alpha;
}

ConnectivityMatrix predict_gnn(const GraphInstance& graph, const GnnParams& params) {
  return gnn_forward(PreparedGraph(graph), params, GnnMode::eval, nullptr).alpha;
}

}  // namespace graphrefine
