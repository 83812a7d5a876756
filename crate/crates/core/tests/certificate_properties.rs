//! Structural properties of the constants ledger and the KAM condition.

use std::collections::BTreeMap;

use proptest::prelude::*;
use qpkam::certificate::{
    check_kam_condition, derived_constants, derived_constants_with_overrides,
    HypothesisMeasurements, CASE_III_OVERRIDES,
};
use qpkam::geometry::StructureCase;

/// Measured bounds that are scaled alone.
const BOUNDS: [&str; 22] = [
    "c_Omega0", "c_Omega1", "c_G0", "c_G1", "c_G2", "c_J0", "c_J1", "c_J2", "c_JT0", "c_JT1",
    "c_Jinv", "c_JinvT", "c_H1", "c_Z0", "c_Z1", "c_Z2", "c_ZT1", "c_Th", "c_DTh", "c_ThT",
    "c_ThT1", "c_R",
];

/// Each `sigma` together with the measured norm it dominates.
const SIGMA_PAIRS: [(&str, &str); 4] = [
    ("sigma_L", "norm_DK"),
    ("sigma_LT", "norm_DKT"),
    ("sigma_B", "norm_B"),
    ("sigma_T", "norm_avgT_inv"),
];

fn measurements() -> impl Strategy<Value = HypothesisMeasurements> {
    (
        prop::collection::vec(0.0f64..2.0, BOUNDS.len()),
        prop::collection::vec((0.5f64..1.5, 0.02f64..0.3), SIGMA_PAIRS.len()),
        (0.05f64..0.2, 1.0f64..2.0, 0.02f64..0.2, 0.1f64..1.0),
    )
        .prop_map(|(bounds, sigmas, (gamma, tau, rho, dist))| {
            let mut m = HypothesisMeasurements::canonical(1, 1);
            for (name, v) in BOUNDS.iter().zip(&bounds) {
                *m.symbol_mut(name).unwrap() = *v;
            }
            // Keep the structure bounds away from zero, as for any real
            // symplectic form and metric.
            for name in ["c_Omega0", "c_G0", "c_J0", "c_JT0", "c_Jinv", "c_JinvT", "c_R"] {
                *m.symbol_mut(name).unwrap() += 0.5;
            }
            for ((s, nm), (norm, slack)) in SIGMA_PAIRS.iter().zip(&sigmas) {
                *m.symbol_mut(nm).unwrap() = *norm;
                *m.symbol_mut(s).unwrap() = norm * (1.0 + slack);
            }
            m.gamma = gamma;
            m.gamma_user = gamma;
            m.gamma_eff = gamma;
            m.tau = tau;
            m.rho = rho;
            m.delta = rho / 12.0;
            m.dist_b = dist;
            m
        })
}

fn c1(m: &HypothesisMeasurements, case: StructureCase) -> Option<f64> {
    derived_constants(m, case, 2.0, 2.0).ok().map(|l| l.c1())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn c1_is_monotone_in_every_bound(m in measurements()) {
        for case in [StructureCase::CaseII, StructureCase::CaseIII] {
            let base = c1(&m, case).expect("generated measurements have slack");
            for name in BOUNDS {
                let mut p = m.clone();
                *p.symbol_mut(name).unwrap() *= 1.01;
                let up = c1(&p, case).expect("raising a bound keeps the slack");
                prop_assert!(up >= base * (1.0 - 1e-12), "{case:?} {name}: {base} -> {up}");
            }
            for (s, nm) in SIGMA_PAIRS {
                let mut p = m.clone();
                *p.symbol_mut(s).unwrap() *= 1.01;
                *p.symbol_mut(nm).unwrap() *= 1.01;
                let up = c1(&p, case).expect("joint scaling keeps the slack");
                prop_assert!(up >= base * (1.0 - 1e-12), "{case:?} {s}: {base} -> {up}");
            }
        }
    }

    #[test]
    fn zeroing_a_reduces_case_ii_to_case_iii(m in measurements()) {
        let zero_a: BTreeMap<String, f64> =
            ["C_A", "C_LieA", "C_DA"].iter().map(|s| (s.to_string(), 0.0)).collect();
        let two =
            derived_constants_with_overrides(&m, StructureCase::CaseII, 2.0, 2.0, &zero_a).unwrap();
        let three = derived_constants(&m, StructureCase::CaseIII, 2.0, 2.0).unwrap();
        let differing: Vec<&str> = CASE_III_OVERRIDES
            .iter()
            .copied()
            .filter(|r| two.value(r) != three.value(r))
            .collect();
        let mut excluded = three.dependents_of(&differing);
        excluded.extend(&differing);
        let mut compared = 0;
        for e in &three.entries {
            if excluded.contains(&e.name) {
                continue;
            }
            let other = two.value(e.name);
            prop_assert!(
                (other - e.value).abs() <= 1e-12 * e.value.abs(),
                "{}: {other} vs {}", e.name, e.value
            );
            compared += 1;
        }
        prop_assert!(compared >= 10);
        for e in &three.entries {
            if CASE_III_OVERRIDES.contains(&e.name) {
                prop_assert!(e.formula.starts_with(&format!("{}*", e.name)), "{}", e.formula);
            }
        }
    }

    #[test]
    fn lhs_is_linear_in_the_error(m in measurements(), e in 1e-12f64..1e-3) {
        let ledger = derived_constants(&m, StructureCase::CaseIII, 2.0, 2.0).unwrap();
        let full = check_kam_condition(&ledger, e, m.gamma, m.rho, m.tau);
        let half = check_kam_condition(&ledger, e / 2.0, m.gamma, m.rho, m.tau);
        prop_assert_eq!(half.lhs, full.lhs / 2.0);
        prop_assert_eq!(check_kam_condition(&ledger, 0.0, m.gamma, m.rho, m.tau).lhs, 0.0);
    }
}
