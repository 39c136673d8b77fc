#include "ecalab/optimizer.hpp"

#include "ecalab/error.hpp"

#include <cmath>
#include <numbers>

namespace ecalab::model {

LrSchedule::LrSchedule(double peak, double lr_min, double warmup_frac, std::size_t total_steps)
    : peak_(peak), min_(lr_min), total_(total_steps) {
    if (total_steps == 0) throw Error(ErrorKind::config_error, "schedule needs at least one step");
    if (!(warmup_frac >= 0 && warmup_frac < 1)) throw Error(ErrorKind::config_error, "warmup_frac must lie in [0, 1)");
    warmup_ = static_cast<std::size_t>(std::llround(warmup_frac * static_cast<double>(total_steps)));
    if (warmup_ >= total_steps) warmup_ = total_steps - 1;
}

double LrSchedule::at(std::size_t step) const noexcept {
    if (step < warmup_) return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
    const std::size_t span = total_ - 1 - warmup_;
    if (span == 0) return step == warmup_ ? peak_ : min_;
    const double progress = std::min(1.0, static_cast<double>(step - warmup_) / static_cast<double>(span));
    return min_ + (peak_ - min_) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename S>
double clip_grad_norm(std::span<S> grads, double max_norm) {
    double sq = 0;
    for (S g : grads) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const double factor = max_norm / (norm + 1e-12);
        for (S& g : grads) g = static_cast<S>(static_cast<double>(g) * factor);
    }
    return norm;
}

template double clip_grad_norm<float>(std::span<float>, double);
template double clip_grad_norm<double>(std::span<double>, double);

template <typename S>
Adam<S>::Adam(std::size_t n_params, AdamOptions options) : opt_(options), m_(n_params, 0.0), v_(n_params, 0.0) {}

template <typename S>
void Adam<S>::step(std::span<S> params, std::span<const S> grads, double lr, std::span<const std::uint8_t> trainable) {
    if (params.size() != m_.size() || grads.size() != m_.size() || trainable.size() != m_.size())
        throw Error(ErrorKind::contract_error, "optimizer buffer size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!trainable[i]) continue;
        const double p = static_cast<double>(params[i]);
        double g = static_cast<double>(grads[i]);
        if (!opt_.decoupled) g += opt_.weight_decay * p;
        m_[i] = opt_.beta1 * m_[i] + (1 - opt_.beta1) * g;
        v_[i] = opt_.beta2 * v_[i] + (1 - opt_.beta2) * g * g;
        const double update = (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + opt_.eps);
        double next = p - lr * update;
        if (opt_.decoupled) next -= lr * opt_.weight_decay * p;
        params[i] = static_cast<S>(next);
    }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace ecalab::model
