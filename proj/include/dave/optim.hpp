#pragma once

#include <utility>
#include <vector>

#include "dave/tensor.hpp"

namespace dave {

/// Per-parameter state for momentum SGD with decoupled-from-nothing classic
/// L2 weight decay: v <- m*v - lr*(g + wd*p); p <- p + v.
template <typename T>
struct OptimizerState {
    std::vector<T> velocity;
    T learning_rate = T(1e-3);
    T momentum = T(0.9);
    T weight_decay = T(2e-4);
};

template <typename T>
void sgd_step(Tensor<T>& param, OptimizerState<T>& state) {
    check_arg(state.learning_rate > T(0), "sgd_step: learning_rate must be > 0");
    check_state(param.has_grad(), "sgd_step: parameter has no gradient");
    if (state.velocity.empty()) state.velocity.assign(param.data.size(), T(0));
    check_arg(state.velocity.size() == param.data.size(), "sgd_step: velocity shape mismatch");

    const T lr = state.learning_rate, m = state.momentum, wd = state.weight_decay;
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        const T v = m * state.velocity[i] - lr * (param.grad[i] + wd * param.data[i]);
        state.velocity[i] = v;
        param.data[i] += v;
    }
    param.zero_grad();
}

/// Bundles the parameters of one or more networks with their SGD states.
template <typename T>
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<TensorPtr<T>> params, T lr, T momentum, T weight_decay) : params_(std::move(params)) {
        states_.resize(params_.size());
        for (auto& s : states_) {
            s.learning_rate = lr;
            s.momentum = momentum;
            s.weight_decay = weight_decay;
        }
    }

    void set_learning_rate(T lr) {
        for (auto& s : states_) s.learning_rate = lr;
    }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) sgd_step(*params_[i], states_[i]);
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

private:
    std::vector<TensorPtr<T>> params_;
    std::vector<OptimizerState<T>> states_;
};

}  // namespace dave
