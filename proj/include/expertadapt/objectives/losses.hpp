#pragma once

#include <cmath>
#include <vector>

#include "expertadapt/data/dataset.hpp"
#include "expertadapt/nn/model.hpp"

namespace expertadapt::objectives {

/// One (image, mask) pair for the fine-tuning objective.
struct LabeledSample {
  data::ImageGrid image;
  data::BinaryMask mask;
};

namespace loss_detail {

/// Smoothed soft Dice on sigmoid probabilities for one instance; all
/// accumulation in double. Optionally writes dLoss/dLogit.
template <class T>
inline double dice_instance(const T* logits, const std::uint8_t* target, size_t count,
                            double smooth, T* dlogits) {
  std::vector<double> p(count);
  double sum_p = 0.0, sum_py = 0.0, sum_y = 0.0;
  for (size_t i = 0; i < count; ++i) {
    p[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
    sum_p += p[i];
    if (target[i]) {
      sum_py += p[i];
      sum_y += 1.0;
    }
  }
  const double num = 2.0 * sum_py + smooth;
  const double den = sum_p + sum_y + smooth;
  if (dlogits) {
    for (size_t i = 0; i < count; ++i) {
      const double y = target[i] ? 1.0 : 0.0;
      const double dldp = -(2.0 * y * den - num) / (den * den);
      dlogits[i] = static_cast<T>(dldp * p[i] * (1.0 - p[i]));
    }
  }
  return 1.0 - num / den;
}

}  // namespace loss_detail

/// Dice loss between one logit map and one binary mask:
/// 1 − (2·Σ sigmoid(z)·y + smooth) / (Σ sigmoid(z) + Σ y + smooth).
/// Always in [0, 1] for smooth > 0. If `dlogits` is given it receives the
/// analytic gradient (same shape as `logits`).
template <class T>
inline double dice_loss(const nn::Tensor<T>& logits, const data::BinaryMask& target,
                        double smooth = 1.0, nn::Tensor<T>* dlogits = nullptr) {
  if (!(smooth > 0.0)) throw NumericError("dice smooth term must be positive");
  if (logits.n != 1 || logits.c != 1 || logits.h != target.height() ||
      logits.w != target.width())
    throw NumericError("dice_loss: logit/target shapes differ");
  if (dlogits) *dlogits = nn::Tensor<T>(1, 1, logits.h, logits.w);
  return loss_detail::dice_instance(logits.v.data(), target.pixels().data(), logits.size(),
                                    smooth, dlogits ? dlogits->v.data() : nullptr);
}

/// Per-sample Dice losses summed over a batch tensor (n, 1, h, w).
template <class T>
inline double batch_dice_loss(const nn::Tensor<T>& logits,
                              const std::vector<const data::BinaryMask*>& targets,
                              double smooth, nn::Tensor<T>* dlogits) {
  if (!(smooth > 0.0)) throw NumericError("dice smooth term must be positive");
  if (logits.c != 1 || static_cast<size_t>(logits.n) != targets.size())
    throw NumericError("batch_dice_loss: batch shape mismatch");
  if (dlogits) *dlogits = nn::Tensor<T>(logits.n, 1, logits.h, logits.w);
  const size_t plane = static_cast<size_t>(logits.h) * logits.w;
  double loss = 0.0;
  for (int in = 0; in < logits.n; ++in) {
    const data::BinaryMask& y = *targets[static_cast<size_t>(in)];
    if (y.height() != logits.h || y.width() != logits.w)
      throw NumericError("batch_dice_loss: target shape mismatch");
    loss += loss_detail::dice_instance(logits.sample(in), y.pixels().data(), plane, smooth,
                                       dlogits ? dlogits->sample(in) : nullptr);
  }
  return loss;
}

namespace loss_detail {

template <class T>
inline nn::Tensor<T> batch_tensor(const std::vector<const data::ImageGrid*>& images) {
  const int n = static_cast<int>(images.size());
  const int h = images[0]->height(), w = images[0]->width();
  nn::Tensor<T> x(n, 1, h, w);
  for (int in = 0; in < n; ++in) {
    const auto& px = images[static_cast<size_t>(in)]->pixels();
    if (images[static_cast<size_t>(in)]->height() != h ||
        images[static_cast<size_t>(in)]->width() != w)
      throw NumericError("batch images must share one shape");
    std::copy(px.begin(), px.end(), x.sample(in));
  }
  return x;
}

}  // namespace loss_detail

/// Multi-expert training objective: the sum over batch cases and combo
/// experts of the per-instance Dice losses, each expert evaluated through
/// its own branch. With `accumulate_grads`, parameter gradients for the
/// shared weights and every combo branch are accumulated into the model
/// (expert branches are processed sequentially, which is equivalent to a
/// joint evaluation).
template <class T>
inline double multi_task_loss(nn::CinUNet<T>& model, const std::vector<data::AnnotatedCase>& batch,
                              const data::ExpertCombination& combo, double smooth = 1.0,
                              bool accumulate_grads = false) {
  combo.validate();
  if (batch.empty()) return 0.0;
  std::vector<const data::ImageGrid*> images;
  for (const auto& c : batch) images.push_back(&c.image);
  nn::Tensor<T> x = loss_detail::batch_tensor<T>(images);

  double total = 0.0;
  for (data::ExpertId expert : combo.members) {
    std::vector<const data::BinaryMask*> targets;
    for (const auto& c : batch) targets.push_back(&c.mask(expert));
    nn::Tensor<T> logits = model.forward(x, expert.value);
    nn::Tensor<T> dlogits;
    total += batch_dice_loss(logits, targets, smooth, accumulate_grads ? &dlogits : nullptr);
    if (accumulate_grads) model.backward(dlogits);
  }
  return total;
}

/// Fine-tuning objective: the sum over the given samples of the Dice loss
/// through the new expert's branch (an empty sample list sums to zero).
template <class T>
inline double finetune_loss(nn::CinUNet<T>& model, const std::vector<LabeledSample>& batch,
                            int new_expert, double smooth = 1.0,
                            bool accumulate_grads = false) {
  model.slot_of(new_expert);  // throws if the branch is missing
  if (batch.empty()) return 0.0;
  std::vector<const data::ImageGrid*> images;
  std::vector<const data::BinaryMask*> targets;
  for (const auto& s : batch) {
    images.push_back(&s.image);
    targets.push_back(&s.mask);
  }
  nn::Tensor<T> x = loss_detail::batch_tensor<T>(images);
  nn::Tensor<T> logits = model.forward(x, new_expert);
  nn::Tensor<T> dlogits;
  double loss = batch_dice_loss(logits, targets, smooth, accumulate_grads ? &dlogits : nullptr);
  if (accumulate_grads) model.backward(dlogits);
  return loss;
}

}  // namespace expertadapt::objectives
