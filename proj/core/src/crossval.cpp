#include "graphrefine/crossval.hpp"

#include <algorithm>
#include <numeric>

#include "graphrefine/error.hpp"
#include "graphrefine/rng.hpp"

namespace graphrefine {

std::vector<std::vector<std::size_t>> crossval_split(std::size_t n, std::size_t folds,
                                                     std::uint64_t seed) {
  if (folds < 1) throw ParameterError("fold count must be at least 1");
  if (n < folds) {
    throw ParameterError("cannot split " + std::to_string(n) + " graphs into " +
                         std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = n / folds + (f < n % folds ? 1 : 0);
    out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                  order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(out[f].begin(), out[f].end());
    pos += size;
  }
  return out;
}

CrossvalResult run_crossval(std::span<const GraphInstance> dataset, ModelKind model,
                            const TrainConfig& config, std::size_t folds,
                            const std::function<void(std::size_t fold)>& on_fold) {
  const auto split = crossval_split(dataset.size(), folds, config.seed);
  CrossvalResult result;
  double dice_sum = 0.0;
  std::size_t dice_count = 0;
  for (std::size_t f = 0; f < split.size(); ++f) {
    FoldResult fold;
    fold.test = split[f];
    std::vector<GraphInstance> train;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (!std::binary_search(fold.test.begin(), fold.test.end(), i)) train.push_back(dataset[i]);
    }
    TrainConfig fold_config = config;
    fold_config.seed = derive_seed(config.seed, f);

    std::function<ConnectivityMatrix(const GraphInstance&)> predict;
    if (model == ModelKind::mfn) {
      auto trained = train_mfn(train, fold_config);
      fold.params = trained.params.flatten();
      fold.curve = std::move(trained.curve);
      predict = [params = std::move(trained.params), layers = config.mfn_layers](
                    const GraphInstance& g) { return predict_mfn(g, params, layers); };
    } else {
      auto trained = train_gnn(train, fold_config);
      fold.params = trained.params.flatten();
      fold.curve = std::move(trained.curve);
      predict = [params = std::move(trained.params)](const GraphInstance& g) {
        return predict_gnn(g, params);
      };
    }
    double fold_sum = 0.0;
    for (std::size_t i : fold.test) {
      const auto refined = binarize_connectivity(predict(dataset[i]));
      fold.reports.push_back(evaluate(dataset[i], refined));
      fold_sum += fold.reports.back().dice_pct;
    }
    fold.mean_dice = fold_sum / static_cast<double>(fold.test.size());
    dice_sum += fold_sum;
    dice_count += fold.test.size();
    result.folds.push_back(std::move(fold));
    if (on_fold) on_fold(f);
  }
  result.mean_dice = dice_sum / static_cast<double>(dice_count);
  return result;
}

}  // namespace graphrefine
