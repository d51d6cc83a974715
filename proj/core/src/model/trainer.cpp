#include "layerens/model/trainer.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "layerens/data/transforms.hpp"
#include "layerens/error.hpp"
#include "layerens/model/losses.hpp"

namespace layerens::model {

nn::Tensor prepare_input(const data::Sample& sample) { return data::normalize(sample.image); }

Batch make_batch(std::span<const data::Sample> samples) {
  std::vector<nn::Tensor> images, targets;
  images.reserve(samples.size());
  targets.reserve(samples.size());
  for (const auto& s : samples) {
    images.push_back(prepare_input(s));
    targets.push_back(one_hot(s.mask));
  }
  return {nn::stack(images), nn::stack(targets)};
}

double evaluate_loss(const Network& network, std::span<const data::Sample> samples, std::size_t batch_size) {
  if (samples.empty()) return 0.0;
  nn::NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, samples.size() - start);
    Batch batch = make_batch(samples.subspan(start, n));
    auto outputs = network.forward_all_heads_batch(batch.images);
    std::vector<nn::Var> heads;
    for (std::size_t h = 0; h < network.num_heads(); ++h) {
      std::vector<nn::Tensor> maps;
      for (auto& o : outputs) maps.push_back(std::move(o.probs[h]));
      heads.push_back(nn::constant(nn::stack(maps)));
    }
    total += multi_head_loss(network.config(), heads, batch.targets)->value[0] * static_cast<double>(n);
  }
  return total / static_cast<double>(samples.size());
}

TrainingLog train(Network& network, std::span<const data::Sample> train_set, std::span<const data::Sample> val_set,
                  const TrainOptions& options, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train_set.empty()) throw ConfigError("data.train_count", "training set is empty");
  if (options.batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  if (!(options.learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be positive");

  nn::Adam optimizer(network.parameters(), nn::AdamOptions{options.learning_rate});
  nn::PlateauScheduler scheduler(options.learning_rate, options.plateau);
  TrainingLog log;
  log.best_val_loss = std::numeric_limits<double>::infinity();
  auto best_state = network.state();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    auto shuffle_rng = data::derived_stream(options.seed, 100, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t n = std::min(options.batch_size, order.size() - start);
      std::vector<data::Sample> items;
      items.reserve(n);
      for (std::size_t i = start; i < start + n; ++i) {
        const auto& s = train_set[order[i]];
        if (options.augment) {
          auto rng = data::derived_stream(options.seed, 200 + epoch, order[i]);
          items.push_back(data::augment(s, rng));
        } else {
          items.push_back(s);
        }
      }
      Batch batch = make_batch(items);
      optimizer.zero_grad();
      auto heads = network.forward(batch.images, Mode::train);
      auto loss = multi_head_loss(network.config(), heads, batch.targets);
      nn::backward(loss);
      optimizer.step();
      epoch_loss += loss->value[0] * static_cast<double>(n);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(train_set.size());
    record.val_loss = val_set.empty() ? record.train_loss : evaluate_loss(network, val_set, options.batch_size);
    record.learning_rate = optimizer.learning_rate();
    if (record.val_loss < log.best_val_loss) {
      record.improved = true;
      log.best_val_loss = record.val_loss;
      log.best_epoch = epoch;
      best_state = network.state();
    }
    scheduler.step(record.val_loss);
    optimizer.set_learning_rate(scheduler.learning_rate());
    log.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  network.load_state(best_state);
  return log;
}

}  // namespace layerens::model
