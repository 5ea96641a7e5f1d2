#include "safekernel/pkpd.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstdio>
#include <random>
#include <set>

namespace safekernel {

void LinearStateSpace::validate() const {
    if (a.rows() != a.cols() || a.rows() == 0)
        fail(ErrorCode::DimensionMismatch, "LinearStateSpace: A must be square and non-empty");
    if (b.rows() != a.rows()) fail(ErrorCode::DimensionMismatch, "LinearStateSpace: B rows != states");
    if (c.size() > 0 && c.cols() != a.rows())
        fail(ErrorCode::DimensionMismatch, "LinearStateSpace: C columns != states");
    if (!a.allFinite() || !b.allFinite() || !c.allFinite())
        fail(ErrorCode::InvalidArgument, "LinearStateSpace: non-finite entries");
}

void PdParams::validate() const {
    if (!(ke0 > 0.0) || !(ec50 > 0.0) || !(hill_slope > 0.0) || !(input_gain > 0.0))
        fail(ErrorCode::InvalidArgument, "PdParams: ke0, ec50, hill_slope and input_gain must be positive");
}

void PatientModel::validate() const {
    pk.validate();
    if (pk.states() != 3) fail(ErrorCode::InvalidArgument, "PatientModel " + id + ": PK must have 3 states");
    bp_pd.validate();
    doh_pd.validate();
    if (!(bp_baseline > 0.0)) fail(ErrorCode::InvalidArgument, "PatientModel " + id + ": baseline must be positive");
    if (!is_stable(cascade(pk, bp_pd), false))
        fail(ErrorCode::InvalidArgument, "PatientModel " + id + ": unstable cascade");
}

void Cohort::validate() const {
    if (models.empty()) fail(ErrorCode::InvalidArgument, "Cohort: no models");
    std::set<std::string> ids;
    for (const auto& m : models) {
        if (!ids.insert(m.id).second) fail(ErrorCode::InvalidArgument, "Cohort: duplicate id " + m.id);
        m.validate();
    }
}

const PatientModel& Cohort::find(const std::string& id) const {
    for (const auto& m : models)
        if (m.id == id) return m;
    fail(ErrorCode::InvalidArgument, "Cohort: unknown model id " + id);
}

LinearStateSpace three_compartment_pk(const PkParams& p) {
    LinearStateSpace s;
    s.a.resize(3, 3);
    s.a << -(p.k10 + p.k12 + p.k13), p.k12, p.k13,
            p.k21, -p.k21, 0.0,
            p.k31, 0.0, -p.k31;
    s.b = Matrix::Zero(3, 1);
    // ml/h -> mg/min -> mg/l per minute in the central volume.
    s.b(0, 0) = p.drug_mg_per_ml / 60.0 / p.v1_l;
    s.c = Matrix::Zero(1, 3);
    s.c(0, 0) = 1.0;
    return s;
}

LinearStateSpace cascade(const LinearStateSpace& pk, const PdParams& pd) {
    pk.validate();
    pd.validate();
    const int n = pk.states();
    LinearStateSpace s;
    s.a = Matrix::Zero(n + 1, n + 1);
    s.a.topLeftCorner(n, n) = pk.a;
    s.a.block(n, 0, 1, n) = pd.ke0 * pk.c.row(0);
    s.a(n, n) = -pd.ke0;
    s.b = Matrix::Zero(n + 1, pk.inputs());
    s.b.topRows(n) = pd.input_gain * pk.b;
    s.c = Matrix::Zero(1, n + 1);
    s.c(0, n) = 1.0;
    return s;
}

LinearStateSpace discretize_zoh(const LinearStateSpace& sys, double dt) {
    sys.validate();
    if (!(dt > 0.0)) fail(ErrorCode::InvalidArgument, "discretize_zoh: dt must be positive");
    const int n = sys.states();
    const int m = sys.inputs();
    Matrix aug = Matrix::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = sys.a * dt;
    aug.topRightCorner(n, m) = sys.b * dt;
    const Matrix e = aug.exp();
    LinearStateSpace d;
    d.a = e.topLeftCorner(n, n);
    d.b = e.topRightCorner(n, m);
    d.c = sys.c;
    d.sample_period = dt;
    return d;
}

double hill_effect(double ce, const PdParams& pd) {
    if (!(ce >= 0.0)) fail(ErrorCode::DomainError, "hill_effect: concentration must be non-negative");
    if (ce == 0.0) return 0.0;
    // Ratio form avoids overflow of ce^g for steep curves.
    const double r = std::pow(ce / pd.ec50, pd.hill_slope);
    return 100.0 * r / (1.0 + r);
}

double invert_hill_bound(double bound_pct, const PdParams& pd) {
    if (!(bound_pct > 0.0 && bound_pct < 100.0))
        fail(ErrorCode::DomainError, "invert_hill_bound: bound must lie in (0, 100)");
    return pd.ec50 * std::pow(bound_pct / (100.0 - bound_pct), 1.0 / pd.hill_slope);
}

double bp_from_effect(double effect_pct, double baseline) {
    if (!(baseline > 0.0)) fail(ErrorCode::DomainError, "bp_from_effect: baseline must be positive");
    return baseline * (1.0 - effect_pct / 100.0);
}

double effect_from_bp(double bp, double baseline) {
    if (!(baseline > 0.0)) fail(ErrorCode::DomainError, "effect_from_bp: baseline must be positive");
    return 100.0 * (1.0 - bp / baseline);
}

double doh_index(double ce, const PdParams& doh_pd) { return 100.0 - hill_effect(std::max(0.0, ce), doh_pd); }

bool is_stable(const LinearStateSpace& sys, bool strict) {
    const Eigen::VectorXcd ev = sys.a.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (strict ? ev(i).real() >= 0.0 : ev(i).real() > 1e-12) return false;
    }
    return true;
}

CohortSpread CohortSpread::named(const std::string& preset) {
    CohortSpread s;
    if (preset == "default") return s;
    if (preset == "elderly") {
        // Propofol alone in the elderly: BP responds near 2 mcg/ml while the
        // hypnotic EC50 sits above 7 mcg/ml; the hypnotic effect is faster.
        s.preset = preset;
        s.bp_ec50 = {1.8, 2.2};
        s.doh_ec50 = {7.2, 8.5};
        s.outlier_bp = {0.2, 1.2, 2.0, 1.3};
        s.outlier_doh = {0.5, 7.5, 2.8, 1.0};
        return s;
    }
    fail(ErrorCode::ConfigError, "unknown cohort preset '" + preset + "'");
}

Cohort synthesize_cohort(std::uint64_t seed, int n, const CohortSpread& spread) {
    if (n < 2) fail(ErrorCode::InvalidArgument, "synthesize_cohort: need at least two models");
    std::mt19937_64 rng(seed);
    auto draw = [&rng](ParamRange r) {
        std::uniform_real_distribution<double> u(std::log(r.lo), std::log(r.hi));
        return std::exp(u(rng));
    };
    Cohort cohort;
    const LinearStateSpace pk = three_compartment_pk(spread.pk);
    for (int i = 0; i < n; ++i) {
        PatientModel m;
        char id[16];
        std::snprintf(id, sizeof id, "p%02d", i + 1);
        m.id = id;
        m.pk = pk;
        m.bp_pd = {draw(spread.bp_ke0), draw(spread.bp_ec50), draw(spread.bp_slope), draw(spread.bp_gain)};
        m.doh_pd = {draw(spread.doh_ke0), draw(spread.doh_ec50), draw(spread.doh_slope), 1.0};
        m.bp_baseline = draw(spread.baseline);
        if (spread.with_outlier && i == n - 1) {
            m.bp_pd = spread.outlier_bp;
            m.doh_pd = spread.outlier_doh;
        }
        cohort.models.push_back(std::move(m));
    }
    cohort.provenance = "synthetic cohort: preset=" + spread.preset + " seed=" + std::to_string(seed) +
                        " n=" + std::to_string(n) +
                        "; shared three-compartment PK, PD parameters log-uniform within preset ranges" +
                        (spread.with_outlier ? "; last model is a forced restrictive outlier" : "");
    cohort.validate();
    return cohort;
}

} // namespace safekernel
