#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "safekernel/geometry.hpp"

namespace safekernel {

// x' = A x + B u, y = C x. Rates are per minute for the pharmacological
// models; `sample_period` is set once the pair has been discretised and is in
// the same time unit as A.
struct LinearStateSpace {
    Matrix a;
    Matrix b;
    Matrix c;
    std::optional<double> sample_period;

    int states() const { return static_cast<int>(a.rows()); }
    int inputs() const { return static_cast<int>(b.cols()); }
    void validate() const;
};

// Three-compartment mammillary model in concentration coordinates: x1 is the
// plasma concentration (mg/l), x2 and x3 the peripheral compartment
// concentrations. Infusion in ml/h of a drug solution at `drug_mg_per_ml`.
struct PkParams {
    double v1_l = 4.27;
    double k10 = 0.3836;
    double k12 = 0.1785;
    double k13 = 0.1958;
    double k21 = 0.0740;
    double k31 = 0.00351;
    double drug_mg_per_ml = 10.0;
};

// First-order effect-site filter plus Hill curve. `hill_slope` is the Hill
// exponent; `input_gain` scales the input of the cascaded model.
struct PdParams {
    double ke0 = 0.2;
    double ec50 = 3.0;
    double hill_slope = 2.0;
    double input_gain = 1.0;

    void validate() const;
};

struct PatientModel {
    std::string id;
    LinearStateSpace pk;
    PdParams bp_pd;
    PdParams doh_pd;
    double bp_baseline = 90.0;

    void validate() const;
};

struct Cohort {
    std::vector<PatientModel> models;
    std::string provenance;

    void validate() const;
    const PatientModel& find(const std::string& id) const;
};

LinearStateSpace three_compartment_pk(const PkParams& p);

// PK followed by the effect-site filter: states (x1, x2, x3, Ce), input scaled
// by pd.input_gain, output Ce.
LinearStateSpace cascade(const LinearStateSpace& pk, const PdParams& pd);

// Exact zero-order hold via the exponential of the augmented matrix
// [[A, B], [0, 0]] * dt. `dt` is in the time unit of A.
LinearStateSpace discretize_zoh(const LinearStateSpace& sys, double dt);

// Percent effect, 100 * ce^g / (ec50^g + ce^g).
double hill_effect(double ce, const PdParams& pd);
// Largest ce whose effect does not exceed bound_pct.
double invert_hill_bound(double bound_pct, const PdParams& pd);

double bp_from_effect(double effect_pct, double baseline);
double effect_from_bp(double bp, double baseline);

// Depth-of-hypnosis index (100 awake, 0 maximal effect).
double doh_index(double ce, const PdParams& doh_pd);

bool is_stable(const LinearStateSpace& sys, bool strict);

// Log-uniform ranges for the synthetic cohort, plus one forced outlier with a
// low BP EC50 and a high input gain.
struct ParamRange {
    double lo;
    double hi;
};

struct CohortSpread {
    std::string preset = "default";
    PkParams pk;
    ParamRange bp_ec50{3.3, 3.9};
    ParamRange bp_ke0{0.17, 0.23};
    ParamRange bp_slope{1.9, 2.2};
    ParamRange bp_gain{0.95, 1.05};
    ParamRange doh_ec50{2.0, 2.5};
    ParamRange doh_ke0{0.45, 0.6};
    ParamRange doh_slope{2.5, 3.2};
    ParamRange baseline{80.0, 100.0};
    bool with_outlier = true;
    PdParams outlier_bp{0.2, 1.5, 2.0, 1.3};
    PdParams outlier_doh{0.5, 0.9, 2.8, 1.0};

    static CohortSpread named(const std::string& preset);
};

Cohort synthesize_cohort(std::uint64_t seed, int n, const CohortSpread& spread = {});

} // namespace safekernel
