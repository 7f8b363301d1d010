#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "facedepth/adam.hpp"
#include "facedepth/losses.hpp"
#include "facedepth/models.hpp"
#include "facedepth/rng.hpp"

// Adversarial training: per batch one discriminator update (real vs detached
// generated maps) followed by one generator update on the weighted sum of
// reconstruction and adversarial terms, with the discriminator frozen.

namespace facedepth {

struct TrainConfig {
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
  float lambda_mse = 100.0f;
  int batch_size = 16;
  int epochs = 30;
  uint64_t seed = 1;
  float width_multiplier = 1.0f;
  int image_size = 96;
  int checkpoint_every = 1;

  void validate() const {
    if (!(lr > 0.0f)) throw std::invalid_argument("train config: lr must be > 0");
    if (lambda_mse < 0.0f) throw std::invalid_argument("train config: lambda_mse must be >= 0");
    if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
    if (image_size % 16 != 0 || image_size <= 0) {
      throw std::invalid_argument("train config: image_size must be a positive multiple of 16");
    }
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (checkpoint_every < 1) throw std::invalid_argument("train config: checkpoint_every >= 1");
  }
};

// One paired image: normalized gray input and normalized target depth,
// each (1,H,W).
struct TrainPair {
  Tensor gray;
  Tensor depth;
};

struct EpochLosses {
  int epoch = 0;
  long step = 0;
  double d_loss = 0.0;
  double g_adv_loss = 0.0;
  double g_mse_loss = 0.0;
  long wall_ms = 0;
};

struct TrainState {
  GeneratorNet generator;
  DiscriminatorNet discriminator;
  AdamState adam_g;
  AdamState adam_d;
  int epoch = 0;
  long g_steps = 0;
  long d_steps = 0;
  std::vector<EpochLosses> history;

  static TrainState fresh(const TrainConfig& cfg) {
    TrainState s;
    s.generator = GeneratorNet(cfg.width_multiplier);
    s.discriminator = DiscriminatorNet(cfg.width_multiplier, cfg.image_size);
    s.generator.init_weights(Rng::mix(cfg.seed, 0x47454eull));
    s.discriminator.init_weights(Rng::mix(cfg.seed, 0x444953ull));
    s.adam_g = AdamState::for_params(s.generator.parameters());
    s.adam_d = AdamState::for_params(s.discriminator.parameters());
    return s;
  }
};

namespace detail {
inline void check_finite_loss(float value, const char* what) {
  if (!std::isfinite(value)) {
    throw std::runtime_error(std::string("training aborted: non-finite ") + what + " loss (" +
                             std::to_string(value) + ")");
  }
}
}  // namespace detail

// Generator objective for an already-generated batch. Caller is responsible
// for the discriminator freeze.
inline Tensor generator_loss_from_fake(const Tensor& fake, const Tensor& depth_batch,
                                       DiscriminatorNet& d, float lambda_mse) {
  Tensor mse = mse_loss(fake, depth_batch);
  Tensor pred = d.forward(fake, /*training=*/true);
  Tensor adv = bce_loss(pred, Tensor::ones(pred.shape()));
  return add(scale(mse, lambda_mse), adv);
}

// Generator objective: lambda * L_MSE(G(gray), depth) + L_adv(D(G(gray)), 1).
// The discriminator is evaluated with frozen parameters, so gradients reach
// the generator only.
inline Tensor generator_loss(const Tensor& gray_batch, const Tensor& depth_batch, GeneratorNet& g,
                             DiscriminatorNet& d, float lambda_mse) {
  set_requires_grad(d.parameters(), false);
  Tensor fake = g.forward(gray_batch, /*training=*/true);
  Tensor loss = generator_loss_from_fake(fake, depth_batch, d, lambda_mse);
  set_requires_grad(d.parameters(), true);
  return loss;
}

// One discriminator update: BCE toward 1 on the real batch and 0 on the
// (detached) generated batch. Both halves go through a single forward so the
// batch statistics see the real/fake mixture. Returns the loss value.
inline float discriminator_step(const Tensor& real_batch, const Tensor& fake_batch,
                                DiscriminatorNet& d, AdamState& opt, const TrainConfig& cfg) {
  if (fake_batch.requires_grad()) {
    throw std::invalid_argument("discriminator_step: fake batch must be detached");
  }
  const auto params = d.parameters();
  zero_grads(params);
  Tensor combined = concat_batch(real_batch, fake_batch);
  Tensor pred = d.forward(combined, /*training=*/true);
  std::vector<float> targets(static_cast<size_t>(pred.dim(0)), 0.0f);
  for (int i = 0; i < real_batch.dim(0); ++i) targets[static_cast<size_t>(i)] = 1.0f;
  Tensor loss = bce_loss(pred, Tensor(pred.shape(), std::move(targets)));
  detail::check_finite_loss(loss.item(), "discriminator");
  loss.backward();
  adam_step(params, opt, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  return loss.item();
}

// Shuffled full-batch order for one epoch, derived from (seed, epoch) so a
// resumed run replays the identical order.
inline std::vector<size_t> epoch_order(size_t n, uint64_t seed, int epoch) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(Rng::mix(seed, 0xE0C0 + static_cast<uint64_t>(epoch)));
  rng.shuffle(idx);
  return idx;
}

// One pass over the dataset: per full batch, a discriminator step then a
// generator step. Partial trailing batches are dropped. Appends one row of
// running-average losses to state.history.
inline void train_epoch(const std::vector<TrainPair>& data, TrainState& state,
                        const TrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  const size_t batch = static_cast<size_t>(cfg.batch_size);
  if (data.size() < batch) {
    throw std::invalid_argument("train_epoch: dataset smaller than one batch");
  }
  const auto order = epoch_order(data.size(), cfg.seed, state.epoch);
  const size_t n_batches = data.size() / batch;

  const auto g_params = state.generator.parameters();
  const auto d_params = state.discriminator.parameters();

  double d_sum = 0.0, adv_sum = 0.0, mse_sum = 0.0;
  for (size_t b = 0; b < n_batches; ++b) {
    std::vector<Tensor> grays, depths;
    grays.reserve(batch);
    depths.reserve(batch);
    for (size_t i = 0; i < batch; ++i) {
      const TrainPair& p = data[order[b * batch + i]];
      grays.push_back(p.gray);
      depths.push_back(p.depth);
    }
    Tensor gray_batch = stack(grays);
    Tensor depth_batch = stack(depths);

    Tensor fake = state.generator.forward(gray_batch, /*training=*/true);

    d_sum += discriminator_step(depth_batch, fake.detach(), state.discriminator, state.adam_d,
                                cfg);
    state.d_steps += 1;

    // Generator step; the discriminator is frozen while its output drives
    // gradients back into the generator.
    set_requires_grad(d_params, false);
    zero_grads(g_params);
    Tensor mse = mse_loss(fake, depth_batch);
    Tensor pred = state.discriminator.forward(fake, /*training=*/true);
    Tensor adv = bce_loss(pred, Tensor::ones(pred.shape()));
    Tensor loss = add(scale(mse, cfg.lambda_mse), adv);
    detail::check_finite_loss(loss.item(), "generator");
    loss.backward();
    adam_step(g_params, state.adam_g, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    set_requires_grad(d_params, true);
    state.g_steps += 1;

    adv_sum += adv.item();
    mse_sum += mse.item();
  }

  EpochLosses row;
  row.epoch = state.epoch;
  row.step = state.g_steps;
  row.d_loss = d_sum / static_cast<double>(n_batches);
  row.g_adv_loss = adv_sum / static_cast<double>(n_batches);
  row.g_mse_loss = mse_sum / static_cast<double>(n_batches);
  state.history.push_back(row);
  state.epoch += 1;
}

}  // namespace facedepth
