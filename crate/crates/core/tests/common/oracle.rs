//! Frozen reference values from `tests/oracles/oracle.py`.

use qpkam::certificate::HypothesisMeasurements;

pub const SMALL_DIVISORS: &str = include_str!("../oracles/small_divisors.txt");
pub const LEDGER_ROTATOR: &str = include_str!("../oracles/ledger_rotator.txt");
pub const LEDGER_GENERIC_CASE2: &str = include_str!("../oracles/ledger_generic_case2.txt");
pub const LEDGER_GENERIC_CASE3: &str = include_str!("../oracles/ledger_generic_case3.txt");

/// `name value...` lines, comments skipped.
pub fn rows(text: &str) -> Vec<(String, Vec<String>)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace().map(str::to_string);
            let name = it.next().unwrap();
            (name, it.collect())
        })
        .collect()
}

pub fn scalar(text: &str, name: &str) -> f64 {
    rows(text)
        .into_iter()
        .find(|(n, _)| n == name)
        .unwrap_or_else(|| panic!("no oracle row {name}"))
        .1[0]
        .parse()
        .unwrap()
}

/// Ledger rows as `(name, value)`.
pub fn ledger_rows(text: &str) -> Vec<(String, f64)> {
    rows(text)
        .into_iter()
        .map(|(n, v)| (n, v[0].parse().unwrap()))
        .collect()
}

/// The hand measurements of the canonical rotator used by the oracle.
pub fn rotator_measurements() -> HypothesisMeasurements {
    let mut m = HypothesisMeasurements::canonical(1, 1);
    for name in ["c_H1", "c_Z0", "c_Z1", "c_ZT1", "c_Th", "c_ThT"] {
        *m.symbol_mut(name).unwrap() = 1.05;
    }
    m.dist_b = 0.5;
    m.c_r = scalar(SMALL_DIVISORS, "c_R");
    m
}

/// Every bound nonzero; mirrors `generic_measurements` in the script.
pub fn generic_measurements() -> HypothesisMeasurements {
    let mut m = HypothesisMeasurements::canonical(2, 1);
    let vals = [
        ("c_Omega0", 1.3),
        ("c_Omega1", 0.4),
        ("c_G0", 1.7),
        ("c_G1", 0.6),
        ("c_G2", 0.2),
        ("c_J0", 1.2),
        ("c_J1", 0.35),
        ("c_J2", 0.15),
        ("c_JT0", 1.1),
        ("c_JT1", 0.3),
        ("c_Jinv", 1.4),
        ("c_JinvT", 1.25),
        ("c_H1", 2.1),
        ("c_Z0", 0.9),
        ("c_Z1", 1.6),
        ("c_Z2", 0.8),
        ("c_ZT1", 1.5),
        ("c_Th", 1.9),
        ("c_DTh", 0.7),
        ("c_ThT", 2.2),
        ("c_ThT1", 0.45),
        ("sigma_L", 1.3),
        ("sigma_LT", 1.4),
        ("sigma_B", 1.6),
        ("sigma_T", 2.5),
        ("norm_DK", 1.1),
        ("norm_DKT", 1.2),
        ("norm_B", 1.5),
        ("norm_avgT_inv", 2.0),
        ("dist_B", 0.3),
        ("gamma", 0.05),
        ("gamma_user", 0.05),
        ("gamma_eff", 0.05),
        ("tau", 2.5),
        ("rho", 0.08),
        ("c_R", 0.6),
    ];
    for (name, v) in vals {
        *m.symbol_mut(name).unwrap() = v;
    }
    m.delta = m.rho / 12.0;
    m
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
