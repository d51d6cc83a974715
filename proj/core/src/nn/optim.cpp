#include "layerens/nn/optim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace layerens::nn {

void adam_step(AdamState& state, std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: one gradient per parameter required");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], *grads[i], "adam_step");
    if (!grads[i]->all_finite()) {
      throw std::domain_error("adam_step: non-finite gradient for parameter " + std::to_string(i));
    }
  }
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->shape(), 0.0);
      state.second_moment.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: parameter count changed");

  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    require_same_shape(p, m, "adam_step moments");
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

Adam::Adam(std::vector<Var> params, AdamOptions options) : params_(std::move(params)) { state_.options = options; }

void Adam::step() {
  std::vector<Tensor*> values;
  std::vector<const Tensor*> grads;
  values.reserve(params_.size());
  grads.reserve(params_.size());
  for (auto& p : params_) {
    values.push_back(&p->value);
    grads.push_back(&p->grad_buffer());
  }
  try {
    adam_step(state_, values, grads);
  } catch (const std::domain_error&) {
    for (const auto& p : params_) {
      if (!p->grad.all_finite()) throw std::domain_error("adam_step: non-finite gradient for parameter " + p->name);
    }
    throw;
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

PlateauScheduler::PlateauScheduler(double learning_rate, PlateauOptions options)
    : options_(options), lr_(learning_rate), best_(std::numeric_limits<double>::infinity()) {
  if (!(options.factor > 0.0 && options.factor < 1.0)) throw std::invalid_argument("plateau factor must be in (0,1)");
  if (options.patience == 0) throw std::invalid_argument("plateau patience must be positive");
}

bool PlateauScheduler::step(double validation_loss) {
  if (!seen_any_ || validation_loss < best_ - options_.min_delta) {
    best_ = validation_loss;
    bad_epochs_ = 0;
    seen_any_ = true;
    return false;
  }
  if (++bad_epochs_ < options_.patience) return false;
  bad_epochs_ = 0;
  const double reduced = std::max(lr_ * options_.factor, options_.min_learning_rate);
  const bool changed = reduced < lr_;
  lr_ = reduced;
  return changed;
}

double reduce_lr_on_plateau(std::span<const double> history, double learning_rate, PlateauOptions options) {
  PlateauScheduler scheduler(learning_rate, options);
  for (double loss : history) scheduler.step(loss);
  return scheduler.learning_rate();
}

}  // namespace layerens::nn
