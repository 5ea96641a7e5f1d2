#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "safekernel/viability.hpp"

namespace safekernel {

struct FalsificationConfig {
    // Worst-case measurement error, percent BP effect.
    double gamma = 17.0;
    bool strict = true;

    void validate() const;
};

struct FalsificationEvent {
    double t_s = 0.0;
    std::string model_id;
    double residual_pct = 0.0;
};

struct ModelSetState {
    std::vector<std::string> unfalsified;
    std::vector<FalsificationEvent> events;

    static ModelSetState all(const std::vector<std::string>& ids);
    bool is_unfalsified(const std::string& id) const;
};

double residual(double bp_measured, double bp_predicted);

// Removes every id whose residual exceeds gamma. Ids absent from the map are
// left alone, so an empty map (missing sample) changes nothing.
ModelSetState update(const ModelSetState& state, double t_s, const std::map<std::string, double>& residuals,
                     const FalsificationConfig& cfg);

// Intersection of the stored final kernels of the unfalsified models.
Polytope active_kernel(const ModelSetState& state, const KernelResult& kernels);

// Memoised active kernels keyed by the unfalsified set; shared by concurrent
// simulation runs over the same kernel result.
class ActiveKernelCache {
public:
    explicit ActiveKernelCache(const KernelResult& kernels) : kernels_(kernels) {}

    std::shared_ptr<const Polytope> get(const std::vector<std::string>& unfalsified);

private:
    const KernelResult& kernels_;
    std::mutex mutex_;
    std::map<std::vector<std::string>, std::shared_ptr<const Polytope>> cache_;
};

// Median of the last three samples of a stream (pass-through until three are
// available).
class MedianOf3 {
public:
    double push(double v);

private:
    double buf_[3] = {0.0, 0.0, 0.0};
    int count_ = 0;
};

} // namespace safekernel
