#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "dave/tensor.hpp"

namespace dave {

/// Central finite differences vs the analytic gradient of a deterministic
/// scalar function. Runs in whatever precision T the caller instantiates;
/// gradient checking is meant to run with T = double.
///
/// `skip` may mark elements sitting on non-differentiable points (relu at 0,
/// smooth-L1 elbow, pooling ties); those are excluded from the comparison.
template <typename T, typename F>
T grad_check(F&& fn, const TensorPtr<T>& input, T eps = static_cast<T>(1e-5),
             const std::vector<bool>& skip = {}) {
    input->requires_grad = true;
    input->ensure_grad();
    input->zero_grad();
    {
        auto loss = fn(input);
        check_arg(loss && loss->numel() == 1, "grad_check: fn must produce a scalar");
        loss->backward();
    }
    std::vector<T> analytic = input->grad;
    input->zero_grad();

    T worst = T(0);
    NoGradGuard ng;
    for (std::size_t i = 0; i < input->data.size(); ++i) {
        if (!skip.empty() && skip[i]) continue;
        const T keep = input->data[i];
        input->data[i] = keep + eps;
        const T fp = fn(input)->item();
        input->data[i] = keep - eps;
        const T fm = fn(input)->item();
        input->data[i] = keep;
        const T numeric = (fp - fm) / (T(2) * eps);
        const T denom = std::max({T(1), std::abs(numeric), std::abs(analytic[i])});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace dave
