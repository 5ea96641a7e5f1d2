#include "doctest.h"

#include "safekernel/falsification.hpp"

#include <random>

using namespace safekernel;

namespace {

// Two scalar kernels [-1, 1] and [-0.5, 2] under the identity dynamics.
KernelResult two_kernels() {
    KernelResult kr;
    kr.per_model["a"].steps = {Polytope::interval(-1.0, 1.0)};
    kr.per_model["b"].steps = {Polytope::interval(-0.5, 2.0)};
    return kr;
}

} // namespace

TEST_CASE("residual examples") {
    CHECK(residual(40.0, 40.0) == 0.0);
    CHECK(residual(40.0, 22.0) == 18.0);
    CHECK(residual(22.0, 40.0) == 18.0);
    CHECK(residual(40.0, 23.0) == 17.0);
    CHECK_THROWS_AS(residual(std::nan(""), 1.0), Error);
}

TEST_CASE("falsification uses a strict threshold") {
    const FalsificationConfig cfg;
    CHECK(cfg.gamma == 17.0);
    CHECK(cfg.strict);
    const ModelSetState s0 = ModelSetState::all({"B", "A"});
    CHECK(s0.unfalsified == std::vector<std::string>{"A", "B"});

    ModelSetState s1 = update(s0, 5.0, {{"A", 18.0}, {"B", 5.0}}, cfg);
    CHECK(s1.unfalsified == std::vector<std::string>{"B"});
    REQUIRE(s1.events.size() == 1);
    CHECK(s1.events[0].model_id == "A");
    CHECK(s1.events[0].t_s == 5.0);
    CHECK(s1.events[0].residual_pct == 18.0);

    CHECK(update(s0, 5.0, {{"A", residual(40.0, 23.0)}, {"B", 0.0}}, cfg).unfalsified.size() == 2);

    FalsificationConfig loose;
    loose.strict = false;
    CHECK(update(s0, 5.0, {{"A", 17.0}}, loose).unfalsified == std::vector<std::string>{"B"});

    FalsificationConfig bad;
    bad.gamma = 0.0;
    CHECK_THROWS_AS(update(s0, 0.0, {{"A", 1.0}}, bad), Error);
}

TEST_CASE("missing measurements leave the model set alone") {
    ModelSetState s = ModelSetState::all({"a", "b", "c"});
    s = update(s, 5.0, {{"b", 30.0}}, {});
    const ModelSetState same = update(s, 10.0, {}, {});
    CHECK(same.unfalsified == s.unfalsified);
    CHECK(same.events.size() == s.events.size());
}

TEST_CASE("falsification never reinstates a model") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> r(0.0, 25.0);
    const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
    ModelSetState s = ModelSetState::all(ids);
    std::size_t prev = s.unfalsified.size();
    std::vector<std::string> gone;
    for (int k = 0; k < 200; ++k) {
        std::map<std::string, double> res;
        for (const auto& id : s.unfalsified) res[id] = r(rng);
        s = update(s, 5.0 * k, res, {});
        CHECK(s.unfalsified.size() <= prev);
        prev = s.unfalsified.size();
        for (const auto& e : s.events) CHECK_FALSE(s.is_unfalsified(e.model_id));
    }
}

TEST_CASE("active kernel re-intersects the unfalsified models") {
    const KernelResult kr = two_kernels();
    ModelSetState s = ModelSetState::all({"a", "b"});
    CHECK(set_equal(active_kernel(s, kr), Polytope::interval(-0.5, 1.0)));
    s = update(s, 0.0, {{"a", 20.0}, {"b", 1.0}}, {});
    CHECK(set_equal(active_kernel(s, kr), Polytope::interval(-0.5, 2.0)));

    ActiveKernelCache cache(kr);
    const auto p1 = cache.get({"a", "b"});
    const auto p2 = cache.get({"a", "b"});
    CHECK(p1.get() == p2.get());
    CHECK(set_equal(*cache.get({"b"}), Polytope::interval(-0.5, 2.0)));

    s = update(s, 5.0, {{"b", 20.0}}, {});
    CHECK_THROWS_AS(active_kernel(s, kr), Error);
    CHECK_THROWS_AS(active_kernel(ModelSetState::all({"z"}), kr), Error);
}

TEST_CASE("median of three filter") {
    MedianOf3 f;
    CHECK(f.push(1.0) == 1.0);
    CHECK(f.push(5.0) == 5.0);
    CHECK(f.push(2.0) == 2.0);
    CHECK(f.push(100.0) == 5.0);
    CHECK(f.push(3.0) == 3.0);
    CHECK(f.push(-50.0) == 3.0);
}
