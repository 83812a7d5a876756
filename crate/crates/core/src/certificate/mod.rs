//! Hypothesis measurements, explicit constants and the KAM condition.
//!
//! Global bounds on the structure and the vector field are obtained by
//! maximizing over a sampling lattice of `B x T^ell`, refined until the
//! maxima settle. They are sampled, not rigorous.

mod ledger;

pub use ledger::{
    derived_constants, derived_constants_with_overrides, C1Branch, ConstantsLedger, LedgerEntry,
    CASE_III_OVERRIDES, C_E_NORMALIZED_FORMULA, MANIFEST, SYM_CONDITION_FORMULA,
};

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::cohomology::{check_diophantine, russmann_bound, CohomologyError, Frequencies};
use crate::geometry::{
    build_frame, row_sum_norm, torsion, torsion_kernel, torsion_kernel_point, AdaptedFrame,
    GeometryError, Torsion, TorusEmbedding,
};
use crate::system::{invariance_error, HamiltonianSystem, SystemError};

#[derive(Debug, Error)]
pub enum CertificateError {
    #[error("torus is not inside the domain: margin {margin:e}")]
    DomainMargin { margin: f64 },
    #[error("hypothesis slack in row {row}: {detail}")]
    HypothesisSlack { row: &'static str, detail: String },
    #[error("row {row} is not finite")]
    NonFinite { row: &'static str },
    #[error("invalid certificate input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Cohomology(#[from] CohomologyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Measured hypotheses. Structure and field bounds (`c_*`) are lattice
/// maxima; `sigma_*` are `inflation` times the measured torus norms, which
/// are kept alongside for the slack rows.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisMeasurements {
    pub n: usize,
    pub ell: usize,
    pub c_omega0: f64,
    pub c_omega1: f64,
    pub c_g0: f64,
    pub c_g1: f64,
    pub c_g2: f64,
    pub c_j0: f64,
    pub c_j1: f64,
    pub c_j2: f64,
    pub c_jt0: f64,
    pub c_jt1: f64,
    pub c_jinv: f64,
    pub c_jinvt: f64,
    pub c_h1: f64,
    pub c_z0: f64,
    pub c_z1: f64,
    pub c_z2: f64,
    pub c_zt1: f64,
    pub c_th: f64,
    pub c_dth: f64,
    pub c_tht: f64,
    pub c_tht1: f64,
    pub sigma_l: f64,
    pub sigma_lt: f64,
    pub sigma_b: f64,
    pub sigma_t: f64,
    pub norm_dk: f64,
    pub norm_dkt: f64,
    pub norm_b: f64,
    pub norm_avg_t_inv: f64,
    /// Lower estimate of the distance from the complex strip image of `K`
    /// to the boundary of `B`; infinite if `B` is unbounded.
    pub dist_b: f64,
    /// The `gamma` used in the arithmetic: `min(gamma_user, gamma_eff)`.
    pub gamma: f64,
    pub gamma_user: f64,
    pub gamma_eff: f64,
    pub tau: f64,
    pub rho: f64,
    pub delta: f64,
    pub c_r: f64,
    /// Lattice points per axis at the last refinement level.
    pub lattice_per_axis: usize,
    /// Whether the last refinement changed every bound by less than 1%.
    pub lattice_stable: bool,
}

impl HypothesisMeasurements {
    /// Canonical structure bounds, zero field bounds, unit torus norms with
    /// the default inflation, golden-like `gamma = 0.1`, `tau = 1.2`. A
    /// starting point for hand-specified measurements.
    pub fn canonical(n: usize, ell: usize) -> Self {
        Self {
            n,
            ell,
            c_omega0: 1.0,
            c_omega1: 0.0,
            c_g0: 1.0,
            c_g1: 0.0,
            c_g2: 0.0,
            c_j0: 1.0,
            c_j1: 0.0,
            c_j2: 0.0,
            c_jt0: 1.0,
            c_jt1: 0.0,
            c_jinv: 1.0,
            c_jinvt: 1.0,
            c_h1: 0.0,
            c_z0: 0.0,
            c_z1: 0.0,
            c_z2: 0.0,
            c_zt1: 0.0,
            c_th: 0.0,
            c_dth: 0.0,
            c_tht: 0.0,
            c_tht1: 0.0,
            sigma_l: DEFAULT_INFLATION,
            sigma_lt: DEFAULT_INFLATION,
            sigma_b: DEFAULT_INFLATION,
            sigma_t: DEFAULT_INFLATION,
            norm_dk: 1.0,
            norm_dkt: 1.0,
            norm_b: 1.0,
            norm_avg_t_inv: 1.0,
            dist_b: f64::INFINITY,
            gamma: 0.1,
            gamma_user: 0.1,
            gamma_eff: 0.1,
            tau: 1.2,
            rho: 0.1,
            delta: 0.1 / 12.0,
            c_r: 1.0,
            lattice_per_axis: 0,
            lattice_stable: true,
        }
    }

    /// The factor printed as `sigmaDKT` in two rows, read as `sigma_LT`.
    pub fn sigma_dkt(&self) -> f64 {
        self.sigma_lt
    }

    /// Named numeric fields, in a fixed order.
    pub fn symbols(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("n", self.n as f64),
            ("ell", self.ell as f64),
            ("c_Omega0", self.c_omega0),
            ("c_Omega1", self.c_omega1),
            ("c_G0", self.c_g0),
            ("c_G1", self.c_g1),
            ("c_G2", self.c_g2),
            ("c_J0", self.c_j0),
            ("c_J1", self.c_j1),
            ("c_J2", self.c_j2),
            ("c_JT0", self.c_jt0),
            ("c_JT1", self.c_jt1),
            ("c_Jinv", self.c_jinv),
            ("c_JinvT", self.c_jinvt),
            ("c_H1", self.c_h1),
            ("c_Z0", self.c_z0),
            ("c_Z1", self.c_z1),
            ("c_Z2", self.c_z2),
            ("c_ZT1", self.c_zt1),
            ("c_Th", self.c_th),
            ("c_DTh", self.c_dth),
            ("c_ThT", self.c_tht),
            ("c_ThT1", self.c_tht1),
            ("sigma_L", self.sigma_l),
            ("sigma_LT", self.sigma_lt),
            ("sigma_B", self.sigma_b),
            ("sigma_T", self.sigma_t),
            ("sigmaDKT", self.sigma_dkt()),
            ("norm_DK", self.norm_dk),
            ("norm_DKT", self.norm_dkt),
            ("norm_B", self.norm_b),
            ("norm_avgT_inv", self.norm_avg_t_inv),
            ("dist_B", self.dist_b),
            ("gamma", self.gamma),
            ("gamma_user", self.gamma_user),
            ("gamma_eff", self.gamma_eff),
            ("tau", self.tau),
            ("rho", self.rho),
            ("delta", self.delta),
            ("c_R", self.c_r),
        ]
    }

    /// Mutable access to an entry of [`symbols`](Self::symbols) by name
    /// (`n`, `ell` and the derived `sigmaDKT` excluded).
    pub fn symbol_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "c_Omega0" => &mut self.c_omega0,
            "c_Omega1" => &mut self.c_omega1,
            "c_G0" => &mut self.c_g0,
            "c_G1" => &mut self.c_g1,
            "c_G2" => &mut self.c_g2,
            "c_J0" => &mut self.c_j0,
            "c_J1" => &mut self.c_j1,
            "c_J2" => &mut self.c_j2,
            "c_JT0" => &mut self.c_jt0,
            "c_JT1" => &mut self.c_jt1,
            "c_Jinv" => &mut self.c_jinv,
            "c_JinvT" => &mut self.c_jinvt,
            "c_H1" => &mut self.c_h1,
            "c_Z0" => &mut self.c_z0,
            "c_Z1" => &mut self.c_z1,
            "c_Z2" => &mut self.c_z2,
            "c_ZT1" => &mut self.c_zt1,
            "c_Th" => &mut self.c_th,
            "c_DTh" => &mut self.c_dth,
            "c_ThT" => &mut self.c_tht,
            "c_ThT1" => &mut self.c_tht1,
            "sigma_L" => &mut self.sigma_l,
            "sigma_LT" => &mut self.sigma_lt,
            "sigma_B" => &mut self.sigma_b,
            "sigma_T" => &mut self.sigma_t,
            "norm_DK" => &mut self.norm_dk,
            "norm_DKT" => &mut self.norm_dkt,
            "norm_B" => &mut self.norm_b,
            "norm_avgT_inv" => &mut self.norm_avg_t_inv,
            "dist_B" => &mut self.dist_b,
            "gamma" => &mut self.gamma,
            "gamma_user" => &mut self.gamma_user,
            "gamma_eff" => &mut self.gamma_eff,
            "tau" => &mut self.tau,
            "rho" => &mut self.rho,
            "delta" => &mut self.delta,
            "c_R" => &mut self.c_r,
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), CertificateError> {
        if self.n == 0 {
            return Err(CertificateError::InvalidInput("n must be positive".into()));
        }
        for (name, v) in self.symbols() {
            let ok = if name == "dist_B" {
                v > 0.0
            } else {
                v.is_finite() && v >= 0.0
            };
            if !ok {
                return Err(CertificateError::InvalidInput(format!(
                    "{name} = {v} out of range"
                )));
            }
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("rho", self.rho),
            ("delta", self.delta),
        ] {
            if v <= 0.0 {
                return Err(CertificateError::InvalidInput(format!(
                    "{name} must be positive"
                )));
            }
        }
        Ok(())
    }

    fn warnings(&self) -> Vec<String> {
        let mut w = vec![
            "structure and field bounds are sampled on a lattice, not rigorous".to_string(),
            "sigmaDKT is read as sigma_LT".to_string(),
        ];
        if self.gamma < self.gamma_user {
            w.push(format!(
                "gamma replaced by the effective value {:e} (user value {:e})",
                self.gamma, self.gamma_user
            ));
        }
        if !self.lattice_stable {
            w.push(format!(
                "lattice maxima not stable to 1% at {} points per axis",
                self.lattice_per_axis
            ));
        }
        w
    }
}

pub const DEFAULT_INFLATION: f64 = 1.05;

#[derive(Debug, Clone)]
pub struct MeasureOptions {
    pub rho: f64,
    pub a1: f64,
    pub a2: f64,
    /// Radius of the Diophantine scan for `gamma_eff`.
    pub box_radius: usize,
    pub inflation: f64,
    /// Upper bound on lattice points per refinement level.
    pub lattice_budget: usize,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            rho: 0.1,
            a1: 2.0,
            a2: 2.0,
            box_radius: 50,
            inflation: DEFAULT_INFLATION,
            lattice_budget: 1 << 18,
        }
    }
}

impl MeasureOptions {
    pub fn a3(&self) -> f64 {
        3.0 * self.a1 / (self.a1 - 1.0) * self.a2 / (self.a2 - 1.0)
    }
}

/// Maxima over the lattice, in the order of [`GlobalBounds::names`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct GlobalBounds([f64; 21]);

impl GlobalBounds {
    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a = a.max(b);
        }
        self
    }

    fn rel_change(&self, prev: &Self) -> f64 {
        self.0
            .iter()
            .zip(prev.0)
            .map(|(a, b)| {
                let scale = a.abs().max(b.abs());
                if scale < 1e-300 {
                    0.0
                } else {
                    (a - b).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `max_i sum_{j,k} |d_k M_ij|` for the directional derivatives `dm[k]`.
fn tensor_norm(dm: &[DMatrix<f64>]) -> f64 {
    if dm.is_empty() {
        return 0.0;
    }
    let rows = dm[0].nrows();
    (0..rows)
        .map(|i| {
            dm.iter()
                .map(|d| d.row(i).iter().map(|x| x.abs()).sum::<f64>())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

fn basis(dim: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[k] = 1.0;
    e
}

const FD_STEP: f64 = 1e-5;

/// Central difference of a matrix-valued function along `e_k`.
fn fd(f: &dyn Fn(&[f64]) -> DMatrix<f64>, z: &[f64], k: usize) -> DMatrix<f64> {
    let mut zp = z.to_vec();
    let mut zm = z.to_vec();
    zp[k] += FD_STEP;
    zm[k] -= FD_STEP;
    (f(&zp) - f(&zm)) / (2.0 * FD_STEP)
}

fn point_bounds(system: &dyn HamiltonianSystem, z: &[f64], phi: &[f64]) -> GlobalBounds {
    let st = system.structure();
    let dim = z.len();
    let constant = st.is_constant();
    let dirs: Vec<Vec<f64>> = (0..dim).map(|k| basis(dim, k)).collect();

    let om = st.omega(z);
    let g = st.metric(z);
    let j = st.complex_structure(z);
    let j_inv = st.complex_structure_inverse(z);
    let d_om: Vec<_> = dirs.iter().map(|e| st.d_omega(z, e)).collect();
    let d_g: Vec<_> = dirs.iter().map(|e| st.d_metric(z, e)).collect();
    let d_j: Vec<_> = dirs.iter().map(|e| st.d_complex_structure(z, e)).collect();
    let d_jt: Vec<_> = d_j.iter().map(|m| m.transpose()).collect();
    let second = |f: &dyn Fn(&[f64], &[f64]) -> DMatrix<f64>| -> f64 {
        if constant {
            return 0.0;
        }
        let mut all = Vec::with_capacity(dim * dim);
        for a in 0..dim {
            for b in 0..dim {
                let ea = &dirs[a];
                all.push(fd(&|w| f(w, ea), z, b));
            }
        }
        tensor_norm(&all)
    };
    let c_g2 = second(&|w, e| st.d_metric(w, e));
    let c_j2 = second(&|w, e| st.d_complex_structure(w, e));

    let grad = system.gradient(z, phi);
    let field = system.field(z, phi);
    let dz = system.field_jacobian(z, phi);
    let mut d2: Vec<DMatrix<f64>> = Vec::with_capacity(dim);
    for jj in 0..dim {
        // Column k of the j-th slice is D^2 Z[e_j, e_k].
        let mut m = DMatrix::zeros(dim, dim);
        for kk in 0..dim {
            m.set_column(kk, &system.field_second(z, phi, &dirs[jj], &dirs[kk]));
        }
        d2.push(m);
    }
    let th = torsion_kernel_point(system, z, phi);
    let th_f = |w: &[f64]| torsion_kernel_point(system, w, phi);
    let d_th: Vec<_> = (0..dim).map(|k| fd(&th_f, z, k)).collect();
    let d_tht: Vec<_> = d_th.iter().map(|m| m.transpose()).collect();

    GlobalBounds([
        row_sum_norm(&om),
        tensor_norm(&d_om),
        row_sum_norm(&g),
        tensor_norm(&d_g),
        c_g2,
        row_sum_norm(&j),
        tensor_norm(&d_j),
        c_j2,
        row_sum_norm(&j.transpose()),
        tensor_norm(&d_jt),
        row_sum_norm(&j_inv),
        row_sum_norm(&j_inv.transpose()),
        grad.iter().map(|x| x.abs()).sum(),
        field.amax(),
        row_sum_norm(&dz),
        tensor_norm(&d2),
        row_sum_norm(&dz.transpose()),
        row_sum_norm(&th),
        tensor_norm(&d_th),
        row_sum_norm(&th.transpose()),
        tensor_norm(&d_tht),
    ])
}

/// Axis samples: bounded sides include both endpoints, unbounded
/// (angle-like) coordinates and external angles sample `[0, 1)`.
fn axis_points(lo: f64, hi: f64, level: usize) -> Vec<f64> {
    if lo.is_finite() && hi.is_finite() {
        let m = (1usize << level) + 1;
        (0..m)
            .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
            .collect()
    } else {
        let m = 1usize << level;
        (0..m).map(|i| i as f64 / m as f64).collect()
    }
}

fn lattice_max(system: &dyn HamiltonianSystem, level: usize) -> GlobalBounds {
    let dom = system.domain();
    let n2 = 2 * system.n();
    let mut axes: Vec<Vec<f64>> = (0..n2)
        .map(|i| axis_points(dom.lo()[i], dom.hi()[i], level))
        .collect();
    axes.extend((0..system.ell()).map(|_| axis_points(f64::NEG_INFINITY, f64::INFINITY, level)));
    let total: usize = axes.iter().map(Vec::len).product();
    (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut p = Vec::with_capacity(axes.len());
            for ax in axes.iter().rev() {
                p.push(ax[idx % ax.len()]);
                idx /= ax.len();
            }
            p.reverse();
            point_bounds(system, &p[..n2], &p[n2..])
        })
        .reduce(GlobalBounds::default, GlobalBounds::merge)
}

fn lattice_size(system: &dyn HamiltonianSystem, level: usize) -> usize {
    let dom = system.domain();
    let mut total = 1usize;
    for i in 0..2 * system.n() {
        total = total.saturating_mul(axis_points(dom.lo()[i], dom.hi()[i], level).len());
    }
    total.saturating_mul((1usize << level).saturating_pow(system.ell() as u32))
}

/// Refines the lattice by halving the spacing until every maximum changes
/// by less than 1% or the point budget is exhausted.
fn refine_global_bounds(
    system: &dyn HamiltonianSystem,
    budget: usize,
) -> (GlobalBounds, usize, bool) {
    let mut level = 2;
    let mut prev = lattice_max(system, level);
    loop {
        if lattice_size(system, level + 1) > budget {
            return (prev, 1 << level, false);
        }
        level += 1;
        let cur = lattice_max(system, level);
        let change = cur.rel_change(&prev);
        prev = prev.merge(cur);
        if change < 0.01 {
            return (prev, 1 << level, true);
        }
    }
}

/// Lower estimate of the distance from `K` on the complex strip of width
/// `rho` to the boundary of `B`: per bounded coordinate, the mean of the
/// component is moved by at most the weighted norm of its oscillating part.
fn domain_distance(k: &TorusEmbedding, system: &dyn HamiltonianSystem, rho: f64) -> f64 {
    let dom = system.domain();
    let winding = k.winding();
    let mut dist = f64::INFINITY;
    for (i, comp) in k.components().iter().enumerate() {
        if !dom.is_bounded(i) {
            continue;
        }
        if winding.row(i).amax() != 0.0 {
            return f64::NEG_INFINITY;
        }
        let mean = comp.average();
        let dev = comp.add_constant(-mean).analytic_norm(rho);
        dist = dist
            .min(dom.hi()[i] - mean - dev)
            .min(mean - dev - dom.lo()[i]);
    }
    dist
}

/// Measures every hypothesis on `k` with frame and torsion already built.
///
/// `delta = rho / a3` and `c_R` are fixed here, so later changes of `a1`,
/// `a2` in [`derived_constants`] only move the third table.
pub fn measure_hypotheses(
    k: &TorusEmbedding,
    frame: &AdaptedFrame,
    torsion: &Torsion,
    system: &dyn HamiltonianSystem,
    freqs: &Frequencies,
    opts: &MeasureOptions,
) -> Result<HypothesisMeasurements, CertificateError> {
    if !(opts.rho > 0.0 && opts.a1 > 1.0 && opts.a2 > 1.0 && opts.inflation > 1.0) {
        return Err(CertificateError::InvalidInput(
            "need rho > 0, a1 > 1, a2 > 1 and inflation > 1".into(),
        ));
    }
    let rho = opts.rho;
    let dist_b = domain_distance(k, system, rho);
    if !(dist_b > 0.0) {
        return Err(CertificateError::DomainMargin { margin: dist_b });
    }
    let dioph = check_diophantine(freqs, opts.box_radius)?;
    let gamma = freqs.gamma().min(dioph.effective_gamma);
    let delta = rho / opts.a3();
    let c_r = russmann_bound(&freqs.with_gamma(gamma)?, delta, k.trunc())?;

    let (g, per_axis, stable) = refine_global_bounds(system, opts.lattice_budget);
    let infl = opts.inflation;
    let [c_omega0, c_omega1, c_g0, c_g1, c_g2, c_j0, c_j1, c_j2, c_jt0, c_jt1, c_jinv, c_jinvt, c_h1, c_z0, c_z1, c_z2, c_zt1, c_th, c_dth, c_tht, c_tht1] =
        g.0.map(|v| v * infl);

    let norm_dk = frame.l.analytic_norm(rho);
    let norm_dkt = frame.l.transpose().analytic_norm(rho);
    let norm_b = frame.b.analytic_norm(rho);
    let norm_avg_t_inv = row_sum_norm(&torsion.average_inverse);
    let m = HypothesisMeasurements {
        n: system.n(),
        ell: system.ell(),
        c_omega0,
        c_omega1,
        c_g0,
        c_g1,
        c_g2,
        c_j0,
        c_j1,
        c_j2,
        c_jt0,
        c_jt1,
        c_jinv,
        c_jinvt,
        c_h1,
        c_z0,
        c_z1,
        c_z2,
        c_zt1,
        c_th,
        c_dth,
        c_tht,
        c_tht1,
        sigma_l: infl * norm_dk,
        sigma_lt: infl * norm_dkt,
        sigma_b: infl * norm_b,
        sigma_t: infl * norm_avg_t_inv,
        norm_dk,
        norm_dkt,
        norm_b,
        norm_avg_t_inv,
        dist_b,
        gamma,
        gamma_user: freqs.gamma(),
        gamma_eff: dioph.effective_gamma,
        tau: freqs.tau(),
        rho,
        delta,
        c_r,
        lattice_per_axis: per_axis,
        lattice_stable: stable,
    };
    m.validate()?;
    Ok(m)
}

/// Outcome of the KAM condition.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub ledger: ConstantsLedger,
    pub e_norm_rho: f64,
    pub gamma: f64,
    pub rho: f64,
    pub tau: f64,
    /// `frakC1 ||E||_rho / (gamma^4 rho^{4 tau})`.
    pub lhs: f64,
    /// `lhs < 1`.
    pub verdict: bool,
    /// `frakC2 ||E||_rho / (gamma^2 rho^{2 tau})`.
    pub closeness: f64,
    pub c1_branch: C1Branch,
    /// `2 C_sym ||E||_rho / (gamma delta^{tau + 1})`, reported for the
    /// first step of the iteration.
    pub sym_condition: f64,
    pub warnings: Vec<String>,
}

impl CertificateReport {
    pub fn measurements(&self) -> &HypothesisMeasurements {
        &self.ledger.measurements
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = self.measurements();
        let _ = writeln!(
            s,
            "KAM condition: frakC1 ||E||_rho / (gamma^4 rho^(4 tau)) < 1"
        );
        let _ = writeln!(s, "  ||E||_rho   = {:.6e}", self.e_norm_rho);
        let _ = writeln!(
            s,
            "  frakC1      = {:.6e}  (max attained by {})",
            self.ledger.c1(),
            self.c1_branch.as_str()
        );
        let _ = writeln!(s, "  lhs         = {:.6e}", self.lhs);
        let _ = writeln!(
            s,
            "  verdict     = {}",
            if self.verdict { "PASS" } else { "FAIL" }
        );
        let _ = writeln!(
            s,
            "  closeness   = {:.6e}  (frakC2 ||E||_rho / (gamma^2 rho^(2 tau)))",
            self.closeness
        );
        let _ = writeln!(
            s,
            "  step check  = {:.6e}  ({})",
            self.sym_condition, SYM_CONDITION_FORMULA
        );
        let _ = writeln!(
            s,
            "  case {}, n = {}, ell = {}, a1 = {}, a2 = {}, a3 = {}",
            self.ledger.case.as_str(),
            m.n,
            m.ell,
            self.ledger.a1,
            self.ledger.a2,
            self.ledger.a3
        );
        let _ = writeln!(s, "\nMeasurements:");
        for (name, v) in m.symbols() {
            let _ = writeln!(s, "  {name:<14} {v:.6e}");
        }
        let _ = writeln!(s, "\nConstants:");
        for e in &self.ledger.entries {
            let _ = writeln!(
                s,
                "  [{}] {:<12} {:.6e}   {}",
                e.table, e.name, e.value, e.formula
            );
        }
        let _ = writeln!(
            s,
            "  C_E via normalized form: {:.6e}   {}",
            self.ledger.c_e_normalized, C_E_NORMALIZED_FORMULA
        );
        if !self.warnings.is_empty() {
            let _ = writeln!(s, "\nWarnings:");
            for w in &self.warnings {
                let _ = writeln!(s, "  - {w}");
            }
        }
        s
    }

    /// One line per quantity: `name<TAB>value<TAB>formula`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut line = |name: &str, v: f64, f: &str| {
            let _ = writeln!(s, "{name}\t{v:.17e}\t{f}");
        };
        for (name, v) in self.measurements().symbols() {
            line(name, v, "measured");
        }
        for e in &self.ledger.entries {
            line(e.name, e.value, e.formula);
        }
        line(
            "C_E_normalized",
            self.ledger.c_e_normalized,
            C_E_NORMALIZED_FORMULA,
        );
        line("a1", self.ledger.a1, "input");
        line("a2", self.ledger.a2, "input");
        line("a3", self.ledger.a3, "a3 = 3 a1 / (a1 - 1) a2 / (a2 - 1)");
        line("E_norm_rho", self.e_norm_rho, "input");
        line(
            "lhs",
            self.lhs,
            "lhs = frakC1 E_norm_rho / (gamma^4 rho^(4 tau))",
        );
        line(
            "verdict",
            if self.verdict { 1.0 } else { 0.0 },
            "verdict = lhs < 1",
        );
        line(
            "closeness",
            self.closeness,
            "closeness = frakC2 E_norm_rho / (gamma^2 rho^(2 tau))",
        );
        line("sym_condition", self.sym_condition, SYM_CONDITION_FORMULA);
        s
    }
}

/// Evaluates `frakC1 ||E||_rho / (gamma^4 rho^{4 tau}) < 1` and the
/// closeness bound.
pub fn check_kam_condition(
    ledger: &ConstantsLedger,
    e_norm_rho: f64,
    gamma: f64,
    rho: f64,
    tau: f64,
) -> CertificateReport {
    let lhs = ledger.c1() * e_norm_rho / (gamma.powi(4) * rho.powf(4.0 * tau));
    let closeness = ledger.c2() * e_norm_rho / (gamma.powi(2) * rho.powf(2.0 * tau));
    let delta = ledger.measurements.delta;
    let sym_condition = 2.0 * ledger.value("C_sym") * e_norm_rho / (gamma * delta.powf(tau + 1.0));
    let mut warnings = ledger.measurements.warnings();
    if (ledger.value("C_E") - ledger.c_e_normalized).abs() > 1e-12 * ledger.value("C_E").abs() {
        warnings.push("C_E disagrees with its normalized form".into());
    }
    CertificateReport {
        ledger: ledger.clone(),
        e_norm_rho,
        gamma,
        rho,
        tau,
        lhs,
        verdict: lhs < 1.0,
        closeness,
        c1_branch: ledger.c1_branch(),
        sym_condition,
        warnings,
    }
}

/// Ratio of `||E||_rho` to the nodal sup norm above which the report warns
/// that round-off in the top modes dominates the weighted norm.
pub const TAIL_WARNING_RATIO: f64 = 1e3;

/// Full pipeline on a torus: error, frame, torsion, measurements, ledger
/// and the KAM condition at `opts.rho`.
pub fn certify(
    k: &TorusEmbedding,
    system: &dyn HamiltonianSystem,
    freqs: &Frequencies,
    shape: &[usize],
    opts: &MeasureOptions,
) -> Result<CertificateReport, CertificateError> {
    let e = invariance_error(k, system, freqs, shape)?;
    let frame = build_frame(k, system.structure(), shape)?;
    let kernel = torsion_kernel(&frame, system);
    let t = torsion(&frame, &kernel)?;
    let m = measure_hypotheses(k, &frame, &t, system, freqs, opts)?;
    let ledger = derived_constants(&m, system.structure().case(), opts.a1, opts.a2)?;
    let e_rho = e.analytic_norm(opts.rho);
    let mut report = check_kam_condition(&ledger, e_rho, m.gamma, m.rho, m.tau);
    if e_rho > TAIL_WARNING_RATIO * e.sup {
        report.warnings.push(format!(
            "||E||_rho = {e_rho:e} exceeds the nodal sup {:e} by more than {TAIL_WARNING_RATIO:e}: \
             the weighted norm is dominated by round-off in the highest modes; a smaller rho is advised",
            e.sup
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::StructureCase;
    use crate::geometry::{build_frame, torsion, torsion_kernel, TorusEmbedding};
    use crate::system::ForcedRotors;

    fn golden_freqs() -> Frequencies {
        Frequencies::new(vec![(5f64.sqrt() - 1.0) / 2.0], vec![1.0], 0.1, 1.2).unwrap()
    }

    fn rotator_measurements() -> HypothesisMeasurements {
        let freqs = golden_freqs();
        let sys = ForcedRotors::pendulum(0.0, 1, freqs.omega()[0]);
        let k = TorusEmbedding::rotator(freqs.dims(), &[8, 1], freqs.omega()).unwrap();
        let shape = [32, 8];
        let frame = build_frame(&k, sys.structure(), &shape).unwrap();
        let kernel = torsion_kernel(&frame, &sys);
        let t = torsion(&frame, &kernel).unwrap();
        measure_hypotheses(&k, &frame, &t, &sys, &freqs, &MeasureOptions::default()).unwrap()
    }

    #[test]
    fn rotator_measurements_match_canonical_values() {
        let m = rotator_measurements();
        assert!((m.norm_dk - 1.0).abs() < 1e-14);
        assert!((m.sigma_l - 1.05).abs() < 1e-14);
        // Canonical structure bounds, after inflation.
        for v in [m.c_omega0, m.c_g0, m.c_j0, m.c_jt0, m.c_jinv] {
            assert!((v - 1.05).abs() < 1e-14, "{v}");
        }
        for v in [m.c_omega1, m.c_g1, m.c_g2, m.c_j1, m.c_j2, m.c_jt1] {
            assert_eq!(v, 0.0);
        }
        // H = y^2/2: D_z Z = [[0, 1], [0, 0]], T_h = Omega_0 (DZ + J DZ J) = I.
        assert!((m.c_z1 - 1.05).abs() < 1e-12);
        assert!((m.c_th - 1.05).abs() < 1e-12);
        assert!(m.c_dth < 1e-6);
        assert!((m.dist_b - 0.5).abs() < 1e-14);
        assert!(m.lattice_stable);
        assert!((m.delta - 0.1 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn zero_error_passes_and_lhs_is_linear() {
        let m = rotator_measurements();
        let l = derived_constants(&m, StructureCase::Canonical, 2.0, 2.0).unwrap();
        let r0 = check_kam_condition(&l, 0.0, m.gamma, m.rho, m.tau);
        assert_eq!(r0.lhs, 0.0);
        assert!(r0.verdict);
        assert_eq!(r0.closeness, 0.0);
        let r1 = check_kam_condition(&l, 1e-12, m.gamma, m.rho, m.tau);
        let r2 = check_kam_condition(&l, 0.5e-12, m.gamma, m.rho, m.tau);
        assert_eq!(r2.lhs, r1.lhs * 0.5);
    }

    #[test]
    fn verdict_is_strict() {
        let m = HypothesisMeasurements::canonical(1, 1);
        let l = derived_constants(&m, StructureCase::Canonical, 2.0, 2.0).unwrap();
        let unit = l.c1() / (m.gamma.powi(4) * m.rho.powf(4.0 * m.tau));
        let at_one = 1.0 / unit;
        let r = check_kam_condition(&l, at_one, m.gamma, m.rho, m.tau);
        // Pick E so that lhs lands on 1 exactly when representable.
        let e = if r.lhs == 1.0 {
            at_one
        } else {
            at_one * (1.0 / r.lhs)
        };
        let r = check_kam_condition(&l, e, m.gamma, m.rho, m.tau);
        if r.lhs == 1.0 {
            assert!(!r.verdict);
        }
        let below = check_kam_condition(&l, e * (1.0 - 1e-15), m.gamma, m.rho, m.tau);
        assert_eq!(below.verdict, below.lhs < 1.0);
    }

    #[test]
    fn reports_serialize_every_row() {
        let m = rotator_measurements();
        let l = derived_constants(&m, StructureCase::Canonical, 2.0, 2.0).unwrap();
        let r = check_kam_condition(&l, 1e-10, m.gamma, m.rho, m.tau);
        let kv = r.to_kv();
        for e in &l.entries {
            assert!(kv.contains(&format!("{}\t", e.name)));
        }
        let text = r.to_text();
        assert!(text.contains(SYM_CONDITION_FORMULA));
        assert!(text.contains("sigmaDKT is read as sigma_LT"));
        assert!(text.contains("not rigorous"));
    }

    #[test]
    fn a1_changes_only_the_third_table() {
        let mut m = HypothesisMeasurements::canonical(1, 1);
        m.c_th = 1.2;
        m.c_tht = 1.2;
        m.c_z2 = 2.0;
        let l2 = derived_constants(&m, StructureCase::CaseII, 2.0, 2.0).unwrap();
        let l3 = derived_constants(&m, StructureCase::CaseII, 3.0, 2.0).unwrap();
        for (a, b) in l2.entries.iter().zip(&l3.entries) {
            if a.table < 3 {
                assert_eq!(a.value, b.value, "{}", a.name);
            }
        }
        assert_ne!(l2.c1(), l3.c1());
        assert_ne!(l2.c2(), l3.c2());
    }
}
