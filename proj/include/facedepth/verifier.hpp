#pragma once

#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "facedepth/adam.hpp"
#include "facedepth/dataprep.hpp"
#include "facedepth/losses.hpp"
#include "facedepth/models.hpp"
#include "facedepth/rng.hpp"
#include "facedepth/training.hpp"

// Supervised training of the Siamese verifier on original depth maps only.
// Pairs drawn from held-out subjects are a protocol violation and rejected.

namespace facedepth {

struct VerifierTrainConfig {
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
  int batch_size = 16;
  int epochs = 20;
  uint64_t seed = 1;
  float width_multiplier = 1.0f;
  int n_train_pairs = 2000;  // pair budget when the caller builds the set

  void validate() const {
    if (!(lr > 0.0f)) throw std::invalid_argument("verifier config: lr must be > 0");
    if (batch_size < 2) throw std::invalid_argument("verifier config: batch_size must be >= 2");
    if (epochs < 0) throw std::invalid_argument("verifier config: epochs must be >= 0");
    if (n_train_pairs < 2) throw std::invalid_argument("verifier config: n_train_pairs too small");
  }
};

struct TrainedVerifier {
  SiameseNet net;
  std::vector<double> epoch_losses;
};

// BCE between the sigmoid similarity score and the same-subject label.
// `images` holds the normalized original depth tensor for every sample index
// the pairs refer to; `subject_of` the matching subject ids.
inline TrainedVerifier train_verifier(const std::vector<VerificationPair>& pairs,
                                      const std::vector<Tensor>& images,
                                      const std::vector<int>& subject_of,
                                      const std::set<int>& forbidden_subjects,
                                      const VerifierTrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("train_verifier: empty pair list");
  if (images.size() != subject_of.size()) {
    throw std::invalid_argument("train_verifier: images and subject ids disagree");
  }
  for (const auto& p : pairs) {
    const int sa = subject_of.at(static_cast<size_t>(p.index_a));
    const int sb = subject_of.at(static_cast<size_t>(p.index_b));
    if (forbidden_subjects.count(sa) || forbidden_subjects.count(sb)) {
      throw std::invalid_argument(
          "train_verifier: pair touches a held-out subject (protocol violation)");
    }
  }

  const int image_size = images.front().dim(1);
  TrainedVerifier out;
  out.net = SiameseNet(cfg.width_multiplier, image_size);
  out.net.init_weights(Rng::mix(cfg.seed, 0x514Dull));
  const auto params = out.net.parameters();
  AdamState opt = AdamState::for_params(params);

  const size_t batch = static_cast<size_t>(cfg.batch_size);
  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(Rng::mix(cfg.seed, 0xA3F0 + static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    const size_t n_batches = pairs.size() / batch;
    if (n_batches == 0) {
      throw std::invalid_argument("train_verifier: fewer pairs than one batch");
    }
    double loss_sum = 0.0;
    for (size_t b = 0; b < n_batches; ++b) {
      std::vector<Tensor> lhs, rhs;
      std::vector<float> labels;
      lhs.reserve(batch);
      rhs.reserve(batch);
      for (size_t i = 0; i < batch; ++i) {
        const VerificationPair& p = pairs[order[b * batch + i]];
        lhs.push_back(images[static_cast<size_t>(p.index_a)]);
        rhs.push_back(images[static_cast<size_t>(p.index_b)]);
        labels.push_back(p.same_subject ? 1.0f : 0.0f);
      }
      zero_grads(params);
      Tensor score = out.net.forward_pair(stack(lhs), stack(rhs), /*training=*/true);
      Tensor loss = bce_loss(score, Tensor(score.shape(), std::move(labels)));
      if (!std::isfinite(loss.item())) {
        throw std::runtime_error("train_verifier: non-finite loss, aborting");
      }
      loss.backward();
      adam_step(params, opt, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
      loss_sum += loss.item();
    }
    out.epoch_losses.push_back(loss_sum / static_cast<double>(n_batches));
  }
  return out;
}

}  // namespace facedepth
