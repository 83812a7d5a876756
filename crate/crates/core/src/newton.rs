//! Quasi-Newton correction of an approximately invariant torus.
//!
//! One step projects the invariance error onto the adapted frame, solves the
//! upper-triangular pair of cohomological equations and moves the embedding
//! by `Delta K = L xi^L + N xi^N`. The frequencies are never touched.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::cohomology::{self, CohomologyError, Frequencies};
use crate::fourier::{FourierError, FourierSeries};
use crate::geometry::{
    build_frame, symplectic_error, torsion, torsion_kernel, AdaptedFrame, GeometryError,
    MatrixGrid, MatrixSeries, Torsion, TorusEmbedding,
};
use crate::system::{self, HamiltonianSystem, InvarianceError, SystemError};

#[derive(Debug, Error)]
pub enum NewtonError {
    #[error("invalid Newton configuration: {0}")]
    InvalidConfig(String),
    #[error("iteration diverged after {} steps (error increased twice in a row)", history.steps.len())]
    Divergence { history: History },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cohomology(#[from] CohomologyError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

/// Iteration controls and the strip schedule used for bookkeeping.
///
/// The schedule is `delta_s = delta_0 / a1^s`, `rho_{s+1} = rho_s - 3 delta_s`
/// with `delta_0 = rho_0 / a3` and `a3 = 3 a1 a2 / ((a1 - 1)(a2 - 1))`, so
/// that `rho_s` decreases to `rho_0 / a2`. The data themselves are never
/// shrunk.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    pub max_iters: usize,
    /// Stop once the nodal sup norm of `E` falls below this.
    pub stop_tol: f64,
    pub rho0: f64,
    pub a1: f64,
    pub a2: f64,
    /// Grid shape; `None` uses [`default_shape`].
    pub shape: Option<Vec<usize>>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iters: 20,
            stop_tol: 1e-11,
            rho0: 0.1,
            a1: 2.0,
            a2: 2.0,
            shape: None,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), NewtonError> {
        let bad = |m: &str| Err(NewtonError::InvalidConfig(m.into()));
        if !(self.a1 > 1.0 && self.a1.is_finite()) || !(self.a2 > 1.0 && self.a2.is_finite()) {
            return bad("a1 and a2 must be finite and greater than 1");
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return bad("rho0 must be positive");
        }
        if !(self.stop_tol >= 0.0) {
            return bad("stop_tol must be nonnegative");
        }
        Ok(())
    }

    pub fn a3(&self) -> f64 {
        3.0 * (self.a1 / (self.a1 - 1.0)) * (self.a2 / (self.a2 - 1.0))
    }

    pub fn delta0(&self) -> f64 {
        self.rho0 / self.a3()
    }

    pub fn delta(&self, step: usize) -> f64 {
        self.delta0() / self.a1.powi(step as i32)
    }

    pub fn rho(&self, step: usize) -> f64 {
        (0..step).fold(self.rho0, |rho, s| rho - 3.0 * self.delta(s))
    }

    pub fn shape_for(&self, trunc: &[usize]) -> Vec<usize> {
        self.shape.clone().unwrap_or_else(|| default_shape(trunc))
    }
}

/// Four samples per retained mode band, and never below the anti-aliasing
/// minimum `2 N + 2`.
pub fn default_shape(trunc: &[usize]) -> Vec<usize> {
    trunc.iter().map(|&n| (4 * n).max(2 * n + 2)).collect()
}

/// Frame components of the error, `eta^L = -N^T Omega E` and
/// `eta^N = L^T Omega E` with its average removed.
#[derive(Debug, Clone)]
pub struct Projection {
    pub eta_l: Vec<FourierSeries>,
    pub eta_n: Vec<FourierSeries>,
    /// Average of `eta^N` before removal; zero in exact arithmetic.
    pub eta_n_mean: DVector<f64>,
}

fn column_series(v: Vec<FourierSeries>) -> MatrixSeries {
    let rows = v.len();
    MatrixSeries::new(rows, 1, v)
}

fn column_grid(v: &[FourierSeries], shape: &[usize]) -> Result<MatrixGrid, FourierError> {
    column_series(v.to_vec()).to_grid(shape)
}

fn grid_to_column(
    g: &MatrixGrid,
    trunc: &[usize],
) -> Result<(Vec<FourierSeries>, f64), FourierError> {
    let (s, r) = g.to_series_with_residual(trunc)?;
    Ok((s.column(0), r))
}

fn vec_norm(v: &[FourierSeries], rho: f64) -> f64 {
    v.iter().map(|s| s.analytic_norm(rho)).fold(0.0, f64::max)
}

/// Projects the nodal error onto the frame.
pub fn project_error(
    e_nodal: &MatrixGrid,
    frame: &AdaptedFrame,
) -> Result<Projection, NewtonError> {
    let nodes = &frame.nodes;
    let trunc = frame.trunc();
    let om_e = nodes.omega_k.zip_map(e_nodal, |om, e| om * e);
    let eta_l = nodes.n.zip_map(&om_e, |n, oe| -(n.transpose() * oe));
    let eta_n = nodes.l.zip_map(&om_e, |l, oe| l.transpose() * oe);
    let (eta_l, _) = grid_to_column(&eta_l, trunc)?;
    let (eta_n, _) = grid_to_column(&eta_n, trunc)?;
    let eta_n_mean = DVector::from_iterator(eta_n.len(), eta_n.iter().map(|s| s.average()));
    let eta_n = eta_n.iter().map(|s| s.add_constant(-s.average())).collect();
    Ok(Projection {
        eta_l,
        eta_n,
        eta_n_mean,
    })
}

/// Solution of `L xi^N = eta^N`, `T xi^N + L xi^L = eta^L`.
#[derive(Debug, Clone)]
pub struct TriangularSolution {
    pub xi_l: Vec<FourierSeries>,
    pub xi_n: Vec<FourierSeries>,
    /// Average of `xi^N`.
    pub xi_n_00: DVector<f64>,
    /// Largest coefficient residual of both equations after substitution.
    pub residual: f64,
}

fn times_torsion(
    t: &MatrixGrid,
    v: &[FourierSeries],
    trunc: &[usize],
) -> Result<Vec<FourierSeries>, FourierError> {
    let vg = column_grid(v, t.shape())?;
    let prod = t.zip_map(&vg, |t, v| t * v);
    Ok(grid_to_column(&prod, trunc)?.0)
}

/// Solves the triangular system with the phase condition `<xi^L> = 0`.
///
/// `xi^N = <T>^{-1} <eta^L - T R eta^N> + R eta^N` and
/// `xi^L = R (eta^L - T xi^N)`. Products with `T` are formed at the nodes of
/// `torsion.nodal`.
pub fn solve_triangular(
    eta_l: &[FourierSeries],
    eta_n: &[FourierSeries],
    torsion: &Torsion,
    freqs: &Frequencies,
) -> Result<TriangularSolution, NewtonError> {
    let n = eta_l.len();
    if eta_n.len() != n || torsion.average.nrows() != n {
        return Err(NewtonError::InvalidConfig(format!(
            "dimension mismatch: eta^L {n}, eta^N {}, torsion {}",
            eta_n.len(),
            torsion.average.nrows()
        )));
    }
    let trunc = eta_l[0].trunc().to_vec();
    let t = &torsion.nodal;
    let r_eta_n = eta_n
        .iter()
        .map(|v| cohomology::solve_cohomological(v, freqs))
        .collect::<Result<Vec<_>, _>>()?;
    let t_r = times_torsion(t, &r_eta_n, &trunc)?;
    let rhs = DVector::from_iterator(
        n,
        eta_l
            .iter()
            .zip(&t_r)
            .map(|(a, b)| a.average() - b.average()),
    );
    let xi_n_00 = &torsion.average_inverse * rhs;
    let xi_n: Vec<FourierSeries> = r_eta_n
        .iter()
        .enumerate()
        .map(|(i, s)| s.add_constant(xi_n_00[i]))
        .collect();
    let t_xi = times_torsion(t, &xi_n, &trunc)?;
    let forcing: Vec<FourierSeries> = eta_l.iter().zip(&t_xi).map(|(a, b)| a - b).collect();
    let xi_l = forcing
        .iter()
        .map(|v| cohomology::solve_cohomological(v, freqs))
        .collect::<Result<Vec<_>, _>>()?;

    let mut residual: f64 = 0.0;
    for i in 0..n {
        let lx = cohomology::lie_derivative(&xi_n[i], freqs)?;
        residual = residual.max(lx.max_coeff_diff(&eta_n[i].add_constant(-eta_n[i].average())));
        let lxl = cohomology::lie_derivative(&xi_l[i], freqs)?;
        residual = residual.max((&t_xi[i] + &lxl).max_coeff_diff(&eta_l[i]));
    }
    Ok(TriangularSolution {
        xi_l,
        xi_n,
        xi_n_00,
        residual,
    })
}

/// Per-step health metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// Nodal sup norm of the input error.
    pub e_sup: f64,
    /// Weighted norm of the truncated input error at the step's `rho`.
    pub e_rho: f64,
    pub eta_l_norm: f64,
    pub eta_n_norm: f64,
    pub eta_n_mean: f64,
    pub xi_l_norm: f64,
    pub xi_n_norm: f64,
    pub xi_n_00: f64,
    pub delta_k_norm: f64,
    pub avg_torsion: DMatrix<f64>,
    pub torsion_condition: f64,
    pub metric_condition: f64,
    /// Largest entry of `<Omega_L>`.
    pub omega_l_average: f64,
    /// Nodal sup norm of `P^T Omega P - Omega_0`.
    pub esym_sup: f64,
    pub solve_residual: f64,
    pub truncation_residual: f64,
}

impl StepDiagnostics {
    fn check_finite(&self) -> Result<(), NewtonError> {
        let scalars = [
            self.e_sup,
            self.e_rho,
            self.eta_l_norm,
            self.eta_n_norm,
            self.xi_l_norm,
            self.xi_n_norm,
            self.delta_k_norm,
        ];
        if scalars.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(SystemError::NonFinite { node: 0 }.into())
        }
    }
}

/// Everything computed along the current torus during a step.
#[derive(Debug, Clone)]
pub struct StepState {
    pub error: InvarianceError,
    pub frame: AdaptedFrame,
    pub torsion: Torsion,
    pub projection: Projection,
    pub solution: TriangularSolution,
    pub delta_k: Vec<FourierSeries>,
}

/// One quasi-Newton correction. `rho` only sets the norm reported in the
/// diagnostics.
pub fn newton_step(
    k: &TorusEmbedding,
    system: &dyn HamiltonianSystem,
    freqs: &Frequencies,
    shape: &[usize],
    rho: f64,
) -> Result<(TorusEmbedding, StepDiagnostics, StepState), NewtonError> {
    let error = system::invariance_error(k, system, freqs, shape)?;
    let frame = build_frame(k, system.structure(), shape)?;
    let kernel = torsion_kernel(&frame, system);
    let torsion = torsion(&frame, &kernel)?;
    let projection = project_error(&error.nodal, &frame)?;
    let solution = solve_triangular(&projection.eta_l, &projection.eta_n, &torsion, freqs)?;

    let nodes = &frame.nodes;
    let xl = column_grid(&solution.xi_l, shape)?;
    let xn = column_grid(&solution.xi_n, shape)?;
    let dk_nodal = nodes
        .l
        .zip_map(&xl, |l, x| l * x)
        .zip_map(&nodes.n.zip_map(&xn, |n, x| n * x), |a, b| a + b);
    let (delta_k, dk_residual) = grid_to_column(&dk_nodal, k.trunc())?;
    let k_new = k.add_periodic(&delta_k);
    system::check_domain(&k_new.to_grid(shape)?, system)?;

    let esym = symplectic_error(&frame)?;
    let diag = StepDiagnostics {
        e_sup: error.sup,
        e_rho: error.analytic_norm(rho),
        eta_l_norm: vec_norm(&projection.eta_l, rho),
        eta_n_norm: vec_norm(&projection.eta_n, rho),
        eta_n_mean: projection.eta_n_mean.amax(),
        xi_l_norm: vec_norm(&solution.xi_l, rho),
        xi_n_norm: vec_norm(&solution.xi_n, rho),
        xi_n_00: solution.xi_n_00.amax(),
        delta_k_norm: vec_norm(&delta_k, rho),
        avg_torsion: torsion.average.clone(),
        torsion_condition: torsion.condition,
        metric_condition: frame.max_metric_condition,
        omega_l_average: frame.omega_l.average().amax(),
        esym_sup: esym.to_grid(shape)?.max_abs_entry(),
        solve_residual: solution.residual,
        truncation_residual: error
            .truncation_residual
            .max(frame.truncation_residual)
            .max(dk_residual),
    };
    diag.check_finite()?;
    let state = StepState {
        error,
        frame,
        torsion,
        projection,
        solution,
        delta_k,
    };
    Ok((k_new, diag, state))
}

/// One row of the iteration history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub step: usize,
    pub rho: f64,
    pub delta: f64,
    pub diagnostics: StepDiagnostics,
}

/// Record of a run. `errors` holds the nodal sup norm of `E` at every
/// iterate, including the final one, so it is one longer than `steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub steps: Vec<HistoryEntry>,
    pub errors: Vec<f64>,
    pub converged: bool,
}

impl History {
    pub fn final_error(&self) -> f64 {
        *self
            .errors
            .last()
            .expect("history always holds the initial error")
    }

    /// Least-squares slope of `log e_{s+1}` against `log e_s` over the last
    /// `window` transitions, or `None` if there are too few.
    pub fn fitted_order(&self, window: usize) -> Option<f64> {
        fitted_order(&self.errors, window)
    }

    /// Whether the last three transitions fit order `2 +- 0.3`.
    pub fn is_quadratic(&self) -> bool {
        self.fitted_order(3).is_some_and(|p| (p - 2.0).abs() <= 0.3)
    }

    /// Tab-separated table with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "step\trho\tdelta\te_sup\te_rho\tdelta_k\teta_n_mean\txi_n_00\tavg_torsion\ttorsion_cond\tmetric_cond\tsolve_residual\ttruncation_residual\n",
        );
        for h in &self.steps {
            let d = &h.diagnostics;
            let avg: Vec<String> = d.avg_torsion.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(
                out,
                "{}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{}\t{:e}\t{:e}\t{:e}\t{:e}",
                h.step,
                h.rho,
                h.delta,
                d.e_sup,
                d.e_rho,
                d.delta_k_norm,
                d.eta_n_mean,
                d.xi_n_00,
                avg.join(","),
                d.torsion_condition,
                d.metric_condition,
                d.solve_residual,
                d.truncation_residual
            );
        }
        let _ = writeln!(out, "# final_e_sup\t{:e}", self.final_error());
        out
    }
}

/// See [`History::fitted_order`].
pub fn fitted_order(errors: &[f64], window: usize) -> Option<f64> {
    if window == 0 || errors.len() < window + 1 {
        return None;
    }
    let tail = &errors[errors.len() - window - 1..];
    if tail.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let pts: Vec<(f64, f64)> = tail.windows(2).map(|w| (w[0].ln(), w[1].ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Final torus of a run together with its history.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub torus: TorusEmbedding,
    pub history: History,
}

/// Repeats [`newton_step`] until the sup error drops below `stop_tol` or
/// `max_iters` is reached. Two consecutive increases of the error abort
/// with [`NewtonError::Divergence`].
pub fn run_iteration(
    k0: &TorusEmbedding,
    system: &dyn HamiltonianSystem,
    freqs: &Frequencies,
    config: &NewtonConfig,
) -> Result<RunOutcome, NewtonError> {
    config.validate()?;
    let shape = config.shape_for(k0.trunc());
    let mut k = k0.clone();
    let mut history = History {
        steps: Vec::new(),
        errors: vec![system::invariance_error(&k, system, freqs, &shape)?.sup],
        converged: false,
    };
    let mut increases = 0;
    for step in 0..=config.max_iters {
        let e = history.final_error();
        if !e.is_finite() {
            return Err(NewtonError::Divergence { history });
        }
        if e < config.stop_tol {
            history.converged = true;
            break;
        }
        if step == config.max_iters {
            break;
        }
        let rho = config.rho(step);
        let (k_new, diagnostics, _) = match newton_step(&k, system, freqs, &shape, rho) {
            Ok(r) => r,
            // A correction that throws the torus out of the domain is an
            // unbounded step; anything else failing counts as divergence
            // once the error has been growing.
            Err(NewtonError::System(SystemError::DomainExit { .. })) => {
                return Err(NewtonError::Divergence { history });
            }
            Err(_) if increases > 0 => return Err(NewtonError::Divergence { history }),
            Err(err) => return Err(err),
        };
        history.steps.push(HistoryEntry {
            step,
            rho,
            delta: config.delta(step),
            diagnostics,
        });
        let e_new = system::invariance_error(&k_new, system, freqs, &shape)?.sup;
        history.errors.push(e_new);
        k = k_new;
        if e_new > e || !e_new.is_finite() {
            increases += 1;
            if increases >= 2 {
                return Err(NewtonError::Divergence { history });
            }
        } else {
            increases = 0;
        }
    }
    Ok(RunOutcome { torus: k, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::TorusDims;
    use crate::geometry::MatrixGrid;
    use crate::system::ForcedRotors;
    use rustfft::num_complex::Complex64;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn freqs() -> Frequencies {
        Frequencies::new(vec![golden()], vec![1.0], 0.1, 1.2).unwrap()
    }

    fn dims() -> TorusDims {
        TorusDims::new(1, 1).unwrap()
    }

    fn constant_torsion(t0: f64, shape: &[usize], trunc: &[usize]) -> Torsion {
        let nodal = MatrixGrid::from_fn(dims(), shape, |_, _| DMatrix::from_element(1, 1, t0));
        Torsion {
            series: nodal.to_series(trunc).unwrap(),
            nodal,
            average: DMatrix::from_element(1, 1, t0),
            average_inverse: DMatrix::from_element(1, 1, 1.0 / t0),
            condition: 1.0,
        }
    }

    #[test]
    fn schedule_matches_closed_form() {
        let c = NewtonConfig::default();
        assert_eq!(c.a3(), 12.0);
        assert!((c.delta0() - 0.1 / 12.0).abs() < 1e-17);
        assert!((c.rho(60) - c.rho0 / c.a2).abs() < 1e-15);
        assert!(c.rho(3) > c.rho(4));
        assert_eq!(default_shape(&[32, 32]), vec![128, 128]);
        assert_eq!(default_shape(&[1]), vec![4]);
    }

    #[test]
    fn constant_forcing_gives_constant_xi_n() {
        let trunc = [4, 4];
        let shape = [16, 16];
        let eta_l = vec![FourierSeries::constant(dims(), trunc.to_vec(), 0.3).unwrap()];
        let eta_n = vec![FourierSeries::zeros(dims(), trunc.to_vec()).unwrap()];
        let t = constant_torsion(2.0, &shape, &trunc);
        let s = solve_triangular(&eta_l, &eta_n, &t, &freqs()).unwrap();
        assert!((s.xi_n[0].average() - 0.15).abs() < 1e-15);
        assert!(s.xi_n[0].add_constant(-0.15).max_coeff_abs() < 1e-15);
        assert_eq!(s.xi_l[0].max_coeff_abs(), 0.0);
    }

    #[test]
    fn two_step_closed_form() {
        let trunc = [4, 4];
        let shape = [16, 16];
        let g = golden();
        let eta_l = vec![FourierSeries::zeros(dims(), trunc.to_vec()).unwrap()];
        let mut c = FourierSeries::zeros(dims(), trunc.to_vec()).unwrap();
        c.set_coeff(&[1, 0], Complex64::new(0.5, 0.0));
        let t = constant_torsion(1.0, &shape, &trunc);
        let s = solve_triangular(&eta_l, &[c], &t, &freqs()).unwrap();
        let tp = 2.0 * std::f64::consts::PI;
        for x in [0.1, 0.37, 0.8] {
            let p = [x, 0.4];
            let want_n = -(tp * x).sin() / (tp * g);
            // R(sin / (2 pi g)) = +cos / (2 pi g)^2 since L cos = 2 pi g sin.
            let want_l = (tp * x).cos() / (tp * g).powi(2);
            assert!((s.xi_n[0].evaluate(&p).unwrap() - want_n).abs() < 1e-14);
            assert!((s.xi_l[0].evaluate(&p).unwrap() - want_l).abs() < 1e-14);
        }
        assert_eq!(s.xi_l[0].average(), 0.0);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn rotator_offset_is_removed_in_one_step() {
        let sys = ForcedRotors::pendulum(0.0, 1, golden());
        let k = TorusEmbedding::rotator(dims(), &[8, 8], &[golden() + 0.1]).unwrap();
        let (k_new, d, st) = newton_step(&k, &sys, &freqs(), &[32, 32], 0.1).unwrap();
        assert!((d.e_sup - 0.1).abs() < 1e-15);
        assert!((st.projection.eta_l[0].average() + 0.1).abs() < 1e-15);
        assert!(st.projection.eta_n[0].max_coeff_abs() < 1e-15);
        let exact = TorusEmbedding::rotator(dims(), &[8, 8], &[golden()]).unwrap();
        for (a, b) in k_new.components().iter().zip(exact.components()) {
            assert!(a.max_coeff_diff(b) < 1e-12);
        }
    }

    #[test]
    fn exact_start_needs_no_iterations() {
        let sys = ForcedRotors::pendulum(0.0, 1, golden());
        let k = TorusEmbedding::rotator(dims(), &[8, 8], &[golden()]).unwrap();
        let out = run_iteration(&k, &sys, &freqs(), &NewtonConfig::default()).unwrap();
        assert!(out.history.converged);
        assert!(out.history.steps.is_empty());
    }

    #[test]
    fn order_fit_recovers_exponent() {
        let errs: Vec<f64> = (0..5).map(|i| 10f64.powf(-(2f64.powi(i)))).collect();
        assert!((fitted_order(&errs, 3).unwrap() - 2.0).abs() < 1e-12);
        assert!(fitted_order(&errs[..3], 3).is_none());
    }
}
