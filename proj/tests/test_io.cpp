#include "doctest.h"

#include "safekernel/io.hpp"

#include <cstdlib>
#include <random>

using namespace safekernel;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("safekernel-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path config(const std::string& name) { return fs::path(SAFEKERNEL_SOURCE_DIR) / "configs" / name; }

} // namespace

TEST_CASE("sha256 digests") {
    CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("polytope json round trip is exact and row-order free") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        Matrix n(6, 3);
        Vector b(6);
        for (Eigen::Index r = 0; r < 6; ++r) {
            for (Eigen::Index c = 0; c < 3; ++c) n(r, c) = g(rng);
            b(r) = 1.0 + std::abs(g(rng));
        }
        const Polytope p(n, b);
        const io::Json j = io::to_json(p);
        const Polytope back = io::polytope_from_json(io::Json::parse(j.dump()));
        CHECK(io::to_json(back).dump() == j.dump());
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
        perm.setIdentity();
        std::shuffle(perm.indices().data(), perm.indices().data() + 6, rng);
        CHECK(io::to_json(Polytope(perm * n, perm * b)).dump() == j.dump());
    }
    const Polytope e = io::polytope_from_json(io::to_json(Polytope::empty_set(2)));
    CHECK(e.is_empty());
    CHECK(e.dim() == 2);
    CHECK_THROWS_AS(io::polytope_from_json(io::Json{{"dim", 2}, {"normals", {{1.0}}}, {"offsets", {1.0}}}), Error);
}

TEST_CASE("cohort json round trip") {
    const Cohort c = synthesize_cohort(5, 3);
    const io::Json j = io::to_json(c);
    CHECK(j["schema"] == 1);
    const Cohort back = io::cohort_from_json(io::Json::parse(j.dump()));
    REQUIRE(back.models.size() == 3);
    CHECK(io::to_json(back).dump() == j.dump());
    io::Json bad = j;
    bad["models"][0]["colour"] = "red";
    CHECK_THROWS_AS(io::cohort_from_json(bad), Error);
}

TEST_CASE("default config reproduces the constraint and input boxes") {
    const io::KernelProblem p = io::load_kernel_problem(config("kernel_default.json"));
    CHECK(p.models.size() == 10);
    const io::Json k = io::box_json(p.config.constraint_set);
    const io::Json u = io::box_json(p.config.input_set);
    for (int i = 0; i < 3; ++i) {
        CHECK(k["lower"][i].get<double>() == 0.0);
        CHECK(k["upper"][i].get<double>() == 10.0);
    }
    CHECK(u.dump() == R"({"lower":[0.0],"upper":[600.0]})");
    const io::ScenarioFile f = io::load_scenario_file(config("scenario_default.json"));
    CHECK(f.scenario.falsification.gamma == 17.0);
    CHECK(FalsificationConfig{}.gamma == 17.0);
    CHECK(f.true_patients.size() == 10);
}

TEST_CASE("kernel archive round trip and tamper detection") {
    const io::KernelProblem p = io::load_kernel_problem(config("oracle_2d_cascade.json"));
    const KernelResult r = compute_kernels(p.models, p.config);
    const fs::path dir = scratch("archive");
    const io::Json m = io::write_kernel_archive(dir, r, io::Json{{"command", "test"}});
    CHECK(m["command"] == "test");
    CHECK(m["steps"] == 60);
    CHECK(fs::exists(dir / "alpha1" / "step60.json"));
    CHECK(fs::exists(dir / "intersection" / "step0.json"));

    const KernelResult back = io::read_kernel_archive(dir);
    CHECK(back.per_model.size() == 3);
    CHECK(io::to_json(back.intersection.final_kernel()).dump() == io::to_json(r.intersection.final_kernel()).dump());
    for (const auto& [id, seq] : r.per_model)
        for (std::size_t k = 0; k < seq.steps.size(); ++k)
            CHECK(io::to_json(back.per_model.at(id).steps[k]).dump() == io::to_json(seq.steps[k]).dump());

    io::write_file_atomic(dir / "alpha1" / "step3.json", io::to_json(Polytope::empty_set(2)).dump());
    CHECK_THROWS_AS(io::read_kernel_archive(dir), Error);
    fs::remove_all(dir);
}

TEST_CASE("config errors name the problem") {
    const fs::path dir = scratch("config");
    io::write_file_atomic(dir / "bad.json", R"({"kind": "pkpd", "cohort": "missing.json"})");
    try {
        io::load_kernel_problem(dir / "bad.json");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
        CHECK(std::string(e.what()).find("missing.json") != std::string::npos);
    }
    io::write_file_atomic(dir / "typo.json", R"({"kind": "pkpd", "cohort": {"synthetic": {}}, "horizon": 3})");
    CHECK_THROWS_AS(io::load_kernel_problem(dir / "typo.json"), Error);
    io::write_file_atomic(dir / "broken.json", "{");
    CHECK_THROWS_AS(io::load_kernel_problem(dir / "broken.json"), Error);
    io::write_file_atomic(dir / "id.json",
                          R"({"kind": "lti", "models": [{"id": "../x", "a": [[0]], "b": [[1]]}],
                              "constraint_set": {"lower": [0], "upper": [1]},
                              "input_set": {"lower": [0], "upper": [1]}})");
    CHECK_THROWS_AS(io::load_kernel_problem(dir / "id.json"), Error);
    CHECK_THROWS_AS(io::load_oracle_problem(config("kernel_default.json")), Error);
    fs::remove_all(dir);
}

TEST_CASE("scenario json round trip") {
    Scenario s;
    s.mode = SafetyMode::Individualized;
    s.band_width = 0.05;
    s.pid.kp = -2.5;
    s.initial_infusion = {100.0, 50.0};
    const io::Json j = io::to_json(s);
    const Scenario back = io::scenario_from_json(io::Json::parse(j.dump()));
    CHECK(io::to_json(back).dump() == j.dump());
    CHECK_THROWS_AS(io::scenario_from_json(io::Json{{"mode", "nope"}}), Error);
    CHECK_THROWS_AS(io::scenario_from_json(io::Json{{"gamma", 3}}), Error);
}

TEST_CASE("trace and events csv") {
    SimTrace t;
    t.model_ids = {"a"};
    TraceRow r;
    r.t_s = 5.0;
    r.u_pr = 123.456789;
    r.u_sp = 0.0;
    r.u_applied = 1.0 / 3.0;
    r.ce = {2.0};
    r.bp_true = 88.0;
    r.worst_model = "a";
    r.unfalsified = 1;
    t.rows.push_back(r);
    t.events.push_back({5.0, "a", 18.25});
    const std::string csv = io::trace_csv(t);
    CHECK(csv.rfind("t_s,u_pr,u_sp,u_applied,zeta,x1,x2,x3,ce_a,bp_true,", 0) == 0);
    CHECK(csv.find("5,123.457,0,0.333333,0,0,0,0,2,88,") != std::string::npos);
    CHECK(io::events_csv(t) == "t_s,model_id,residual_pct\n5,a,18.25\n");
}
