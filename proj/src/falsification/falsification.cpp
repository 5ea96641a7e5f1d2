#include "safekernel/falsification.hpp"

#include <algorithm>
#include <cmath>

namespace safekernel {

void FalsificationConfig::validate() const {
    if (!(gamma > 0.0)) fail(ErrorCode::ConfigError, "falsification: gamma must be positive");
}

ModelSetState ModelSetState::all(const std::vector<std::string>& ids) {
    ModelSetState s;
    s.unfalsified = ids;
    std::sort(s.unfalsified.begin(), s.unfalsified.end());
    s.unfalsified.erase(std::unique(s.unfalsified.begin(), s.unfalsified.end()), s.unfalsified.end());
    return s;
}

bool ModelSetState::is_unfalsified(const std::string& id) const {
    return std::binary_search(unfalsified.begin(), unfalsified.end(), id);
}

double residual(double bp_measured, double bp_predicted) {
    if (!std::isfinite(bp_measured) || !std::isfinite(bp_predicted))
        fail(ErrorCode::InvalidArgument, "residual: inputs must be finite");
    return std::abs(bp_measured - bp_predicted);
}

ModelSetState update(const ModelSetState& state, double t_s, const std::map<std::string, double>& residuals,
                     const FalsificationConfig& cfg) {
    cfg.validate();
    ModelSetState next = state;
    if (residuals.empty()) return next;
    next.unfalsified.clear();
    for (const auto& id : state.unfalsified) {
        const auto it = residuals.find(id);
        const bool exceeded = it != residuals.end() && (cfg.strict ? it->second > cfg.gamma : it->second >= cfg.gamma);
        if (exceeded)
            next.events.push_back({t_s, id, it->second});
        else
            next.unfalsified.push_back(id);
    }
    return next;
}

Polytope active_kernel(const ModelSetState& state, const KernelResult& kernels) {
    return intersect_final(kernels.per_model, state.unfalsified);
}

std::shared_ptr<const Polytope> ActiveKernelCache::get(const std::vector<std::string>& unfalsified) {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        const auto it = cache_.find(unfalsified);
        if (it != cache_.end()) return it->second;
    }
    auto p = std::make_shared<const Polytope>(intersect_final(kernels_.per_model, unfalsified));
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_.emplace(unfalsified, std::move(p)).first->second;
}

double MedianOf3::push(double v) {
    buf_[count_ % 3] = v;
    ++count_;
    if (count_ < 3) return v;
    double a = buf_[0], b = buf_[1], c = buf_[2];
    return std::max(std::min(a, b), std::min(std::max(a, b), c));
}

} // namespace safekernel
