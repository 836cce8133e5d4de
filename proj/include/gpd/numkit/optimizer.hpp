#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpd/numkit/network.hpp"

namespace gpd::numkit {

enum class OptimizerKind { adam, adabelief };

const char* to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adabelief;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment accumulators for Adam / AdaBelief. For AdaBelief `second` holds
/// the belief term s (EMA of (g - m)^2) rather than the EMA of g^2.
template <class T>
struct OptimizerState {
    OptimizerConfig config;
    std::vector<T> first;
    std::vector<T> second;
    std::uint64_t step = 0;

    OptimizerState() = default;
    OptimizerState(OptimizerConfig cfg, std::size_t n) : config(cfg), first(n, T(0)), second(n, T(0)) {}
};

/// One bias-corrected update. Throws TrainingError naming the parameter
/// block when a gradient is NaN or infinite; parameters are left untouched
/// in that case.
template <class T>
void optimizer_step(OptimizerState<T>& state, std::span<T> params, std::span<const T> grads, double lr,
                    std::span<const ParamBlock> blocks = {});

/// Piecewise-constant learning-rate schedule.
struct LrSchedule {
    std::vector<std::pair<std::uint64_t, double>> phases;  // (steps, rate)

    std::uint64_t total_steps() const;
    /// Throws ArgumentError for steps beyond the schedule.
    double lr_at(std::uint64_t step) const;
    /// Every phase length divided by `factor` (at least one step each).
    LrSchedule shortened(std::uint64_t factor) const;
    void validate() const;
};

extern template void optimizer_step<float>(OptimizerState<float>&, std::span<float>, std::span<const float>, double,
                                           std::span<const ParamBlock>);
extern template void optimizer_step<double>(OptimizerState<double>&, std::span<double>, std::span<const double>,
                                            double, std::span<const ParamBlock>);

}  // namespace gpd::numkit
