//! Derived constants of the a-posteriori theorem, evaluated row by row in
//! dependency order.
//!
//! Every row records the formula it implements as a plain-text audit
//! string. The strings are checked against `constants_manifest.txt`.

use std::collections::BTreeMap;

use super::{CertificateError, HypothesisMeasurements};
use crate::geometry::StructureCase;

/// One evaluated row.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    /// Table the row belongs to (1, 2 or 3).
    pub table: u8,
    pub name: &'static str,
    pub value: f64,
    /// `name = expression`, starred (`name* = ...`) for Case III overrides.
    pub formula: &'static str,
}

impl LedgerEntry {
    /// Names of ledger rows and measured symbols appearing on the right-hand
    /// side of the formula.
    pub fn dependencies(&self) -> Vec<&str> {
        let rhs = self.formula.split_once('=').map_or("", |(_, r)| r);
        let mut out: Vec<&str> = rhs
            .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .filter(|t| t.chars().next().is_some_and(|c| c.is_ascii_alphabetic()))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Every derived constant plus the inputs it was computed from.
#[derive(Debug, Clone)]
pub struct ConstantsLedger {
    pub case: StructureCase,
    pub measurements: HypothesisMeasurements,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub entries: Vec<LedgerEntry>,
    /// `C_E` evaluated through its normalized form
    /// `gamma^4 delta^{4 tau} (2 (C_L + C_N) C_lin / (gamma^3 delta^{3 tau + 1})
    ///  + c_Z2 C_DK^2 / (2 gamma^4 delta^{4 tau}))`.
    pub c_e_normalized: f64,
}

/// Usage of `C_sym` in the iterative step; reported next to the KAM
/// condition.
pub const SYM_CONDITION_FORMULA: &str = "2 C_sym ||E||_rho / (gamma delta^(tau + 1)) < 1";

/// Normalized form of `C_E`, recorded for audit.
pub const C_E_NORMALIZED_FORMULA: &str = "C_E = gamma^4 delta^(4 tau) (2 (C_L + C_N) C_lin / (gamma^3 delta^(3 tau + 1)) + 1/2 c_Z2 C_DK^2 / (gamma^4 delta^(4 tau)))";

/// Checked-in table of every formula string.
pub const MANIFEST: &str = include_str!("constants_manifest.txt");

/// Rows replaced in Case III (starred in the first table, plus `C_DA`).
pub const CASE_III_OVERRIDES: [&str; 7] = ["C_A", "C_N", "C_NT", "C_sym", "C_T", "C_LieA", "C_DA"];

impl ConstantsLedger {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entry(name).map(|e| e.value)
    }

    pub fn entry(&self, name: &str) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Panics on unknown names; use [`get`](Self::get) for fallible lookup.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("no ledger row named {name}"))
    }

    pub fn c1(&self) -> f64 {
        self.value("frakC1")
    }

    pub fn c2(&self) -> f64 {
        self.value("frakC2")
    }

    /// Which argument attains the max in `frakC1`.
    pub fn c1_branch(&self) -> C1Branch {
        let m = &self.measurements;
        let tau = m.tau;
        let a = (self.a1 * self.a3).powf(4.0 * tau) * self.value("C_E");
        let b = self.a3.powf(2.0 * tau + 1.0)
            * m.gamma.powi(2)
            * m.rho.powf(2.0 * tau - 1.0)
            * self.value("C_Delta");
        if a >= b {
            C1Branch::InvarianceError
        } else {
            C1Branch::Slack
        }
    }

    /// Names of every row depending, directly or transitively, on one of
    /// `roots`.
    pub fn dependents_of(&self, roots: &[&str]) -> Vec<&'static str> {
        let mut hit: Vec<&'static str> = Vec::new();
        for e in &self.entries {
            let deps = e.dependencies();
            if deps.iter().any(|d| roots.contains(d) || hit.contains(d)) {
                hit.push(e.name);
            }
        }
        hit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum C1Branch {
    /// `(a1 a3)^{4 tau} C_E`.
    InvarianceError,
    /// `a3^{2 tau + 1} gamma^2 rho^{2 tau - 1} C_Delta`.
    Slack,
}

impl C1Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            C1Branch::InvarianceError => "(a1 a3)^(4 tau) C_E",
            C1Branch::Slack => "a3^(2 tau + 1) gamma^2 rho^(2 tau - 1) C_Delta",
        }
    }
}

struct Builder<'a> {
    entries: Vec<LedgerEntry>,
    overrides: &'a BTreeMap<String, f64>,
}

impl Builder<'_> {
    fn row(&mut self, table: u8, name: &'static str, formula: &'static str, value: f64) -> f64 {
        let value = self.overrides.get(name).copied().unwrap_or(value);
        self.entries.push(LedgerEntry {
            table,
            name,
            value,
            formula,
        });
        value
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn slack(row: &'static str, what: &str, value: f64) -> Result<f64, CertificateError> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(CertificateError::HypothesisSlack {
            row,
            detail: format!("{what} = {value:e} is not positive"),
        })
    }
}

/// Evaluates the three tables. `delta` and `c_R` are taken from the
/// measurements, so `a1`, `a2` enter only through the third table.
pub fn derived_constants(
    m: &HypothesisMeasurements,
    case: StructureCase,
    a1: f64,
    a2: f64,
) -> Result<ConstantsLedger, CertificateError> {
    derived_constants_with_overrides(m, case, a1, a2, &BTreeMap::new())
}

/// As [`derived_constants`], with selected rows forced to given values
/// before their dependents are computed.
pub fn derived_constants_with_overrides(
    m: &HypothesisMeasurements,
    case: StructureCase,
    a1: f64,
    a2: f64,
    overrides: &BTreeMap<String, f64>,
) -> Result<ConstantsLedger, CertificateError> {
    m.validate()?;
    if !(a1 > 1.0 && a2 > 1.0) {
        return Err(CertificateError::InvalidInput(format!(
            "a1 = {a1} and a2 = {a2} must exceed 1"
        )));
    }
    let a3 = 3.0 * a1 / (a1 - 1.0) * a2 / (a2 - 1.0);
    // A vanishes identically whenever the triple is compatible.
    let case_iii = case.is_compatible();
    let n = m.n as f64;
    let HypothesisMeasurements {
        delta,
        gamma,
        tau,
        rho,
        c_r,
        c_omega0: co0,
        c_omega1: co1,
        c_g0: cg0,
        c_g1: cg1,
        c_j0: cj0,
        c_j1: cj1,
        c_jt0: cjt0,
        c_jt1: cjt1,
        c_jinv: cjinv,
        c_jinvt: cjinvt,
        c_z2: cz2,
        c_th: cth,
        c_dth: cdth,
        c_tht: ctht,
        c_tht1: ctht1,
        sigma_l: sl,
        sigma_lt: slt,
        sigma_b: sb,
        sigma_t: st,
        ..
    } = *m;
    let sdkt = m.sigma_dkt();
    let gd = gamma * delta.powf(tau);
    let mut b = Builder {
        entries: Vec::with_capacity(80),
        overrides,
    };

    // First table.
    let c_lie_ol = b.row(
        1,
        "C_LieOmegaL",
        "C_LieOmegaL = 2 n c_Omega0 sigma_L + sigma_LT c_Omega1 sigma_L delta + n sigma_LT c_Omega0",
        2.0 * n * co0 * sl + slt * co1 * sl * delta + n * slt * co0,
    );
    let c_ol = b.row(1, "C_OmegaL", "C_OmegaL = c_R C_LieOmegaL", c_r * c_lie_ol);
    let c_l = b.row(1, "C_L", "C_L = sigma_L", sl);
    let c_lt = b.row(1, "C_LT", "C_LT = sigma_LT", slt);
    b.row(1, "C_GL", "C_GL = C_LT c_G0 C_L", c_lt * cg0 * c_l);
    let c_n0 = b.row(1, "C_N0", "C_N0 = c_J0 C_L", cj0 * c_l);
    let c_n0t = b.row(1, "C_N0T", "C_N0T = C_LT c_JT0", c_lt * cjt0);
    let c_nt = b.row(1, "C_Nt", "C_Nt = C_N0 sigma_B", c_n0 * sb);
    let c_ntt = b.row(1, "C_NtT", "C_NtT = sigma_B C_N0T", sb * c_n0t);
    let (c_a, c_n, c_n_tr, c_sym, c_t);
    if case_iii {
        c_a = b.row(1, "C_A", "C_A* = 0", 0.0);
        c_n = b.row(1, "C_N", "C_N* = C_Nt", c_nt);
        c_n_tr = b.row(1, "C_NT", "C_NT* = C_NtT", c_ntt);
        c_sym = b.row(
            1,
            "C_sym",
            "C_sym* = C_OmegaL max{1, sigma_B^2}",
            c_ol * sb.powi(2).max(1.0),
        );
        c_t = b.row(1, "C_T", "C_T* = C_NT c_Th C_N", c_n_tr * cth * c_n);
    } else {
        c_a = b.row(
            1,
            "C_A",
            "C_A = 1/2 C_NtT c_Omega0 C_Nt",
            0.5 * c_ntt * co0 * c_nt,
        );
        c_n = b.row(1, "C_N", "C_N = C_L C_A + C_Nt", c_l * c_a + c_nt);
        c_n_tr = b.row(1, "C_NT", "C_NT = C_A C_LT + C_NtT", c_a * c_lt + c_ntt);
        c_sym = b.row(
            1,
            "C_sym",
            "C_sym = (1 + C_A) max{1, C_A} C_OmegaL",
            (1.0 + c_a) * c_a.max(1.0) * c_ol,
        );
        c_t = b.row(
            1,
            "C_T",
            "C_T = 1/2 (C_NtT c_Th C_Nt + C_NtT c_ThT C_Nt) + C_NtT c_ThT C_N + C_NT c_Th C_Nt",
            0.5 * (c_ntt * cth * c_nt + c_ntt * ctht * c_nt)
                + c_ntt * ctht * c_n
                + c_n_tr * cth * c_nt,
        );
    }
    let c_te = b.row(
        1,
        "C_TE",
        "C_TE = c_Omega1 delta + c_Omega0 c_J1 c_Jinv delta + 2 n c_JT0 C_L sigma_B c_Omega0^2 + n c_JT0 sigma_B C_LT c_Omega0^2",
        co1 * delta + co0 * cj1 * cjinv * delta + 2.0 * n * cjt0 * c_l * sb * co0.powi(2) + n * cjt0 * sb * c_lt * co0.powi(2),
    );
    let c_tet = b.row(
        1,
        "C_TET",
        "C_TET = c_Omega1 delta + c_JinvT c_JT1 c_Omega0 delta + n sigma_B C_LT c_J0 c_Omega0^2 + 2 n C_L sigma_B c_J0 c_Omega0^2",
        co1 * delta + cjinvt * cjt1 * co0 * delta + n * sb * c_lt * cj0 * co0.powi(2) + 2.0 * n * c_l * sb * cj0 * co0.powi(2),
    );
    let c_elieb = b.row(
        1,
        "C_ELieB",
        "C_ELieB = C_NtT c_JinvT C_TE C_Nt",
        c_ntt * cjinvt * c_te * c_nt,
    );
    let c_eliebt = b.row(
        1,
        "C_ELieBT",
        "C_ELieBT = C_NtT C_TET c_Jinv C_Nt",
        c_ntt * c_tet * cjinv * c_nt,
    );
    let c_elient = b.row(
        1,
        "C_ELieNt",
        "C_ELieNt = delta c_J1 C_L sigma_B + n c_J0 sigma_B + c_J0 C_L C_ELieB",
        delta * cj1 * c_l * sb + n * cj0 * sb + cj0 * c_l * c_elieb,
    );
    let c_elientt = b.row(
        1,
        "C_ELieNtT",
        "C_ELieNtT = delta sigma_B C_LT c_JT1 + 2 n sigma_B c_JT0 + C_ELieBT C_LT c_JT0",
        delta * sb * c_lt * cjt1 + 2.0 * n * sb * cjt0 + c_eliebt * c_lt * cjt0,
    );
    let c_eliea = b.row(
        1,
        "C_ELieA",
        "C_ELieA = 1/2 (C_ELieNtT c_Omega0 C_Nt + delta C_NtT c_Omega1 C_Nt + C_NtT c_Omega0 C_ELieNt)",
        0.5 * (c_elientt * co0 * c_nt + delta * c_ntt * co1 * c_nt + c_ntt * co0 * c_elient),
    );
    let c_elien = b.row(
        1,
        "C_ELieN",
        "C_ELieN = C_ELieNt + C_L C_ELieA + n C_A",
        c_elient + c_l * c_eliea + n * c_a,
    );
    let c_et = b.row(
        1,
        "C_ET",
        "C_ET = 1/2 (C_A C_OmegaL C_NtT c_ThT C_Nt + C_A C_OmegaL C_NtT c_Th C_Nt) + C_A C_OmegaL C_A c_Th C_Nt + C_A C_OmegaL C_NtT c_ThT C_Nt C_L C_A + gamma delta^tau C_A C_LT c_Omega0 C_ELieN + gamma delta^tau C_NtT c_Omega0 C_ELieN",
        0.5 * (c_a * c_ol * c_ntt * ctht * c_nt + c_a * c_ol * c_ntt * cth * c_nt)
            + c_a * c_ol * c_a * cth * c_nt
            + c_a * c_ol * c_ntt * ctht * c_nt * c_l * c_a
            + gd * c_a * c_lt * co0 * c_elien
            + gd * c_ntt * co0 * c_elien,
    );
    let c_ll = b.row(1, "C_LL", "C_LL = n", n);
    let c_llt = b.row(1, "C_LLT", "C_LLT = 2 n", 2.0 * n);
    let c_liea = if case_iii {
        b.row(1, "C_LieA", "C_LieA* = 0", 0.0)
    } else {
        b.row(
            1,
            "C_LieA",
            "C_LieA = 1/2 (C_NtT c_ThT C_Nt + C_NtT c_ThT c_Jinv C_Nt C_LT c_JT0 c_Omega0 C_Nt + C_NtT c_Th C_Nt + C_NtT c_Omega0 c_J0 C_L C_NtT c_JinvT c_Th C_Nt)",
            0.5 * (c_ntt * ctht * c_nt
                + c_ntt * ctht * cjinv * c_nt * c_lt * cjt0 * co0 * c_nt
                + c_ntt * cth * c_nt
                + c_ntt * co0 * cj0 * c_l * c_ntt * cjinvt * cth * c_nt),
        )
    };
    let c_red11 = b.row(
        1,
        "C_red11",
        "C_red11 = C_NT c_Omega0 C_LL",
        c_n_tr * co0 * c_ll,
    );
    let c_red12 = b.row(1, "C_red12", "C_red12 = C_ET", c_et);
    let c_red21 = b.row(
        1,
        "C_red21",
        "C_red21 = C_LT c_Omega0 C_LL",
        c_lt * co0 * c_ll,
    );
    let c_red22 = b.row(
        1,
        "C_red22",
        "C_red22 = (C_LT c_Omega1 C_N delta + C_LLT c_Omega0 C_N + C_LieOmegaL C_A + sigmaDKT c_Omega0 sigma_L C_ELieA) gamma delta^tau + C_OmegaL C_LieA",
        (c_lt * co1 * c_n * delta + c_llt * co0 * c_n + c_lie_ol * c_a + sdkt * co0 * sl * c_eliea) * gd + c_ol * c_liea,
    );
    let c_red = b.row(
        1,
        "C_red",
        "C_red = max{C_red11 gamma delta^tau + C_red12, C_red21 gamma delta^tau + C_red22}",
        (c_red11 * gd + c_red12).max(c_red21 * gd + c_red22),
    );

    // Second table.
    let c_xin0 = b.row(
        2,
        "C_xiN0",
        "C_xiN0 = sigma_T (C_NT c_Omega0 gamma delta^tau + c_R C_T C_LT c_Omega0)",
        st * (c_n_tr * co0 * gd + c_r * c_t * c_lt * co0),
    );
    let c_xin = b.row(
        2,
        "C_xiN",
        "C_xiN = C_xiN0 + c_R C_LT c_Omega0",
        c_xin0 + c_r * c_lt * co0,
    );
    let c_xil = b.row(
        2,
        "C_xiL",
        "C_xiL = c_R (C_NT c_Omega0 gamma delta^tau + C_T C_xiN)",
        c_r * (c_n_tr * co0 * gd + c_t * c_xin),
    );
    let c_xi = b.row(
        2,
        "C_xi",
        "C_xi = max{C_xiL, C_xiN gamma delta^tau}",
        c_xil.max(c_xin * gd),
    );
    let c_dk = b.row(
        2,
        "C_DK",
        "C_DK = C_L C_xiL + C_N C_xiN gamma delta^tau",
        c_l * c_xil + c_n * c_xin * gd,
    );
    let c_liexin = b.row(2, "C_LiexiN", "C_LiexiN = C_LT c_Omega0", c_lt * co0);
    let c_liexil = b.row(
        2,
        "C_LiexiL",
        "C_LiexiL = C_NT c_Omega0 gamma delta^tau + C_T C_xiN",
        c_n_tr * co0 * gd + c_t * c_xin,
    );
    let c_liexi = b.row(
        2,
        "C_Liexi",
        "C_Liexi = max{C_LiexiL, C_LiexiN gamma delta^tau}",
        c_liexil.max(c_liexin * gd),
    );
    let c_lin = b.row(
        2,
        "C_lin",
        "C_lin = C_red C_xi + c_Omega0 C_sym C_Liexi gamma delta^tau",
        c_red * c_xi + co0 * c_sym * c_liexi * gd,
    );
    let c_e = b.row(
        2,
        "C_E",
        "C_E = 2 (C_L + C_N) C_lin gamma delta^(tau - 1) + 1/2 c_Z2 C_DK^2",
        2.0 * (c_l + c_n) * c_lin * gamma * delta.powf(tau - 1.0) + 0.5 * cz2 * c_dk.powi(2),
    );
    let g4d = gamma.powi(4) * delta.powf(4.0 * tau);
    let c_e_normalized = g4d
        * (2.0 * (c_l + c_n) * c_lin / (gamma.powi(3) * delta.powf(3.0 * tau + 1.0))
            + 0.5 * cz2 * c_dk.powi(2) / g4d);
    let c_dl = b.row(2, "C_DL", "C_DL = n C_DK", n * c_dk);
    let c_dlt = b.row(2, "C_DLT", "C_DLT = 2 n C_DK", 2.0 * n * c_dk);
    let c_dg = b.row(2, "C_DG", "C_DG = c_G1 C_DK", cg1 * c_dk);
    let c_dgl = b.row(
        2,
        "C_DGL",
        "C_DGL = C_LT c_G0 C_DL + C_LT C_DG C_L delta + C_DLT c_G0 C_L",
        c_lt * cg0 * c_dl + c_lt * c_dg * c_l * delta + c_dlt * cg0 * c_l,
    );
    let c_db = b.row(2, "C_DB", "C_DB = sigma_B^2 C_DGL", sb.powi(2) * c_dgl);
    let c_domega = b.row(2, "C_DOmega", "C_DOmega = c_Omega1 C_DK", co1 * c_dk);
    let c_dj = b.row(2, "C_DJ", "C_DJ = c_J1 C_DK", cj1 * c_dk);
    let c_djt = b.row(2, "C_DJT", "C_DJT = c_JT1 C_DK", cjt1 * c_dk);
    let c_dn0 = b.row(
        2,
        "C_DN0",
        "C_DN0 = c_J0 C_DL + C_DJ C_L delta",
        cj0 * c_dl + c_dj * c_l * delta,
    );
    let c_dn0t = b.row(
        2,
        "C_DN0T",
        "C_DN0T = C_DLT c_JT0 + C_LT C_DJT delta",
        c_dlt * cjt0 + c_lt * c_djt * delta,
    );
    let c_dnt = b.row(
        2,
        "C_DNt",
        "C_DNt = C_DN0 sigma_B + C_N0 C_DB",
        c_dn0 * sb + c_n0 * c_db,
    );
    let c_dntt = b.row(
        2,
        "C_DNtT",
        "C_DNtT = sigma_B C_DN0T + C_DB C_N0T",
        sb * c_dn0t + c_db * c_n0t,
    );
    let c_da = if case_iii {
        b.row(2, "C_DA", "C_DA* = 0", 0.0)
    } else {
        b.row(
            2,
            "C_DA",
            "C_DA = 1/2 (C_DNtT c_Omega0 C_Nt + C_NtT C_DOmega C_Nt delta + C_NtT c_Omega0 C_DNt)",
            0.5 * (c_dntt * co0 * c_nt + c_ntt * c_domega * c_nt * delta + c_ntt * co0 * c_dnt),
        )
    };
    let c_dn = b.row(
        2,
        "C_DN",
        "C_DN = C_A C_DLT + C_DA C_LT + C_DNt",
        c_a * c_dlt + c_da * c_lt + c_dnt,
    );
    let c_dn_tr = b.row(
        2,
        "C_DNT",
        "C_DNT = C_A C_DLT + C_DA C_LT + C_DNtT",
        c_a * c_dlt + c_da * c_lt + c_dntt,
    );
    let c_dth_row = b.row(2, "C_DTh", "C_DTh = c_DTh C_DK", cdth * c_dk);
    let c_dtht = b.row(2, "C_DThT", "C_DThT = c_ThT1 C_DK", ctht1 * c_dk);
    let c_dt = b.row(
        2,
        "C_DT",
        "C_DT = 1/2 C_DNtT c_Th C_Nt + C_NtT C_DTh C_Nt delta + C_NtT c_Th C_DNt + 1/2 C_DNtT c_ThT C_Nt + C_NtT C_DThT C_Nt delta + C_NtT c_ThT C_DNt + C_DNtT c_ThT C_N + C_NtT C_DThT C_N delta + C_NtT c_ThT C_DN + C_DNT c_Th C_Nt + C_NT C_DTh C_Nt delta + C_NT c_Th C_DNt",
        0.5 * c_dntt * cth * c_nt
            + c_ntt * c_dth_row * c_nt * delta
            + c_ntt * cth * c_dnt
            + 0.5 * c_dntt * ctht * c_nt
            + c_ntt * c_dtht * c_nt * delta
            + c_ntt * ctht * c_dnt
            + c_dntt * ctht * c_n
            + c_ntt * c_dtht * c_n * delta
            + c_ntt * ctht * c_dn
            + c_dn_tr * cth * c_nt
            + c_n_tr * c_dth_row * c_nt * delta
            + c_n_tr * cth * c_dnt,
    );
    let c_dtinv = b.row(2, "C_DTinv", "C_DTinv = sigma_T^2 C_DT", st.powi(2) * c_dt);

    // Third table.
    let d_l = slack("C_D1", "sigma_L - norm_DK", sl - m.norm_dk)?;
    let d_lt = slack("C_D1", "sigma_LT - norm_DKT", slt - m.norm_dkt)?;
    let d_b = slack("C_D1", "sigma_B - norm_B", sb - m.norm_b)?;
    let d_t = slack("C_D1", "sigma_T - norm_avgT_inv", st - m.norm_avg_t_inv)?;
    let dist = slack("C_D2", "dist_B", m.dist_b)?;
    let c_d1 = b.row(
        3,
        "C_D1",
        "C_D1 = max{n C_DK / (sigma_L - norm_DK), 2 n C_DK / (sigma_LT - norm_DKT), C_DB / (sigma_B - norm_B), C_DTinv / (sigma_T - norm_avgT_inv)}",
        max_of(&[n * c_dk / d_l, 2.0 * n * c_dk / d_lt, c_db / d_b, c_dtinv / d_t]),
    );
    let c_d2 = b.row(3, "C_D2", "C_D2 = C_DK delta / dist_B", c_dk * delta / dist);
    let q1 = slack(
        "C_Delta",
        "1 - a1^(1 - 2 tau)",
        1.0 - a1.powf(1.0 - 2.0 * tau),
    )?;
    let q2 = slack("C_Delta", "1 - a1^(-2 tau)", 1.0 - a1.powf(-2.0 * tau))?;
    let c_delta = b.row(
        3,
        "C_Delta",
        "C_Delta = max{C_sym gamma delta^tau, C_D1 / (1 - a1^(1 - 2 tau)), C_D2 / (1 - a1^(-2 tau))}",
        max_of(&[c_sym * gd, c_d1 / q1, c_d2 / q2]),
    );
    b.row(
        3,
        "frakC1",
        "frakC1 = max{(a1 a3)^(4 tau) C_E, a3^(2 tau + 1) gamma^2 rho^(2 tau - 1) C_Delta}",
        ((a1 * a3).powf(4.0 * tau) * c_e)
            .max(a3.powf(2.0 * tau + 1.0) * gamma.powi(2) * rho.powf(2.0 * tau - 1.0) * c_delta),
    );
    b.row(
        3,
        "frakC2",
        "frakC2 = a3^(2 tau) C_DK / (1 - a1^(-2 tau))",
        a3.powf(2.0 * tau) * c_dk / q2,
    );

    if let Some(bad) = b.entries.iter().find(|e| !e.value.is_finite()) {
        return Err(CertificateError::NonFinite { row: bad.name });
    }
    Ok(ConstantsLedger {
        case,
        measurements: m.clone(),
        a1,
        a2,
        a3,
        entries: b.entries,
        c_e_normalized,
    })
}
