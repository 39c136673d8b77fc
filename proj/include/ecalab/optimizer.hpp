#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ecalab::model {

// Linear warm-up over the first warmup_frac of total_steps, then cosine
// annealing to lr_min.  at(0) = 0, at(warmup) = peak, at(total - 1) = lr_min.
class LrSchedule {
public:
    LrSchedule(double peak, double lr_min, double warmup_frac, std::size_t total_steps);

    double at(std::size_t step) const noexcept;
    std::size_t warmup_steps() const noexcept { return warmup_; }
    std::size_t total_steps() const noexcept { return total_; }

private:
    double peak_, min_;
    std::size_t warmup_, total_;
};

// Scales grads in place so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename S>
double clip_grad_norm(std::span<S> grads, double max_norm);

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    bool decoupled = false;  // false: L2 term added to the gradient (classic Adam)
};

// Adam over a flat parameter buffer; entries with trainable[i] == 0 are never
// touched, so frozen tensors stay bit-identical.
template <typename S>
class Adam {
public:
    Adam(std::size_t n_params, AdamOptions options);
    void step(std::span<S> params, std::span<const S> grads, double lr, std::span<const std::uint8_t> trainable);
    std::size_t steps_taken() const noexcept { return t_; }

private:
    AdamOptions opt_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace ecalab::model
