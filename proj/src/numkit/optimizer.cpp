#include "gpd/numkit/optimizer.hpp"

#include <cmath>

#include "gpd/errors.hpp"

namespace gpd::numkit {

const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "adabelief"; }

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "adabelief") return OptimizerKind::adabelief;
    throw ArgumentError("unknown optimizer '" + s + "'");
}

template <class T>
void optimizer_step(OptimizerState<T>& state, std::span<T> params, std::span<const T> grads, double lr,
                    std::span<const ParamBlock> blocks) {
    if (params.size() != grads.size() || state.first.size() != params.size() ||
        state.second.size() != params.size()) {
        throw ArgumentError("optimizer_step: parameter, gradient and state sizes differ");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (std::isfinite(static_cast<double>(grads[i]))) continue;
        std::string where = "parameter " + std::to_string(i);
        for (const ParamBlock& b : blocks)
            if (i >= b.offset && i < b.offset + b.size) where = "block " + b.name;
        throw TrainingError("training diverged: non-finite gradient in " + where + " at optimizer step " +
                            std::to_string(state.step + 1));
    }

    const OptimizerConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    const T b1 = static_cast<T>(c.beta1);
    const T b2 = static_cast<T>(c.beta2);
    const T eps = static_cast<T>(c.eps);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);

    if (c.kind == OptimizerKind::adam) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const T g = grads[i];
            state.first[i] = b1 * state.first[i] + (T(1) - b1) * g;
            state.second[i] = b2 * state.second[i] + (T(1) - b2) * g * g;
            params[i] -= step_size * state.first[i] / (std::sqrt(state.second[i] * inv_bc2) + eps);
        }
    } else {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const T g = grads[i];
            state.first[i] = b1 * state.first[i] + (T(1) - b1) * g;
            const T d = g - state.first[i];
            state.second[i] = b2 * state.second[i] + (T(1) - b2) * d * d + eps;
            params[i] -= step_size * state.first[i] / (std::sqrt(state.second[i] * inv_bc2) + eps);
        }
    }
}

template void optimizer_step<float>(OptimizerState<float>&, std::span<float>, std::span<const float>, double,
                                    std::span<const ParamBlock>);
template void optimizer_step<double>(OptimizerState<double>&, std::span<double>, std::span<const double>, double,
                                     std::span<const ParamBlock>);

std::uint64_t LrSchedule::total_steps() const {
    std::uint64_t total = 0;
    for (const auto& [steps, rate] : phases) total += steps;
    return total;
}

double LrSchedule::lr_at(std::uint64_t step) const {
    std::uint64_t end = 0;
    for (const auto& [steps, rate] : phases) {
        end += steps;
        if (step < end) return rate;
    }
    throw ArgumentError("lr_at: step " + std::to_string(step) + " beyond schedule of " + std::to_string(end) +
                        " steps");
}

LrSchedule LrSchedule::shortened(std::uint64_t factor) const {
    if (factor == 0) throw ArgumentError("schedule shortening factor must be positive");
    LrSchedule s;
    for (const auto& [steps, rate] : phases) s.phases.emplace_back(std::max<std::uint64_t>(1, steps / factor), rate);
    return s;
}

void LrSchedule::validate() const {
    if (phases.empty()) throw ArgumentError("learning-rate schedule has no phases");
    for (const auto& [steps, rate] : phases) {
        if (steps == 0) throw ArgumentError("learning-rate phase with zero steps");
        if (!(rate > 0.0) || !std::isfinite(rate)) throw ArgumentError("learning rates must be positive");
    }
}

}  // namespace gpd::numkit
