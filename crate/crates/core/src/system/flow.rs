//! Independent check of invariance by integrating the flow.

use nalgebra::DVector;
use rayon::prelude::*;

use super::{HamiltonianSystem, SystemError};
use crate::cohomology::Frequencies;
use crate::geometry::TorusEmbedding;

const MAX_STEPS: usize = 2_000_000;

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights minus fourth-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` with an adaptive Dormand-Prince 5(4) pair and
/// returns the state at each of `t_out` (increasing, starting after `t0`).
pub fn dopri5(
    f: impl Fn(f64, &DVector<f64>) -> DVector<f64>,
    t0: f64,
    y0: DVector<f64>,
    t_out: &[f64],
    tol: f64,
) -> Result<Vec<DVector<f64>>, SystemError> {
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = {
        let scale = y.amax().max(1.0);
        (0.01 * scale / k1.amax().max(1e-8)).min(0.1) * tol.powf(0.2).max(1e-3)
    };
    let mut out = Vec::with_capacity(t_out.len());
    let mut steps = 0usize;
    for &target in t_out {
        while t < target {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(SystemError::Integrator(format!(
                    "step limit reached at t = {t}"
                )));
            }
            let last = t + h >= target;
            let hs = if last { target - t } else { h };
            let mut k = [
                k1.clone(),
                k1.clone(),
                k1.clone(),
                k1.clone(),
                k1.clone(),
                k1.clone(),
                k1.clone(),
            ];
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate().take(s) {
                    if A[s][j] != 0.0 {
                        ys.axpy(hs * A[s][j], kj, 1.0);
                    }
                }
                k[s] = f(t + C[s] * hs, &ys);
                if s == 6 {
                    // Stage 7 is evaluated at the fifth-order solution.
                    let err_vec = k
                        .iter()
                        .zip(E.iter())
                        .fold(DVector::zeros(y.len()), |acc, (ki, &e)| acc + ki * (hs * e));
                    let err = err_vec
                        .iter()
                        .zip(y.iter().zip(ys.iter()))
                        .map(|(e, (a, b))| {
                            let sc = tol + tol * a.abs().max(b.abs());
                            (e / sc).powi(2)
                        })
                        .sum::<f64>()
                        / y.len() as f64;
                    let err = err.sqrt();
                    if !err.is_finite() {
                        return Err(SystemError::Integrator(format!(
                            "non-finite state at t = {t}"
                        )));
                    }
                    let factor = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if err <= 1.0 {
                        t = if last { target } else { t + hs };
                        y = ys;
                        k1 = k[6].clone();
                        if !last {
                            h = hs * factor;
                        }
                    } else {
                        h = hs * factor;
                    }
                    if h < 1e-14 * t.abs().max(1.0) {
                        return Err(SystemError::Integrator(format!(
                            "step size underflow at t = {t}"
                        )));
                    }
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub theta0: Vec<f64>,
    pub phi0: Vec<f64>,
    /// Largest `|z(t) - K(theta0 + t omega, phi0 + t alpha)|_inf` over checkpoints.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub t_final: f64,
    pub samples: Vec<FlowSample>,
    pub max_deviation: f64,
}

/// Integrates `z' = Z_H(z, phi0 + t alpha)` from `K(theta0, phi0)` for
/// `samples` deterministic starting angles and compares with the rotated
/// parameterization at `checkpoints` evenly spaced times.
pub fn flow_validate(
    k: &TorusEmbedding,
    system: &dyn HamiltonianSystem,
    freqs: &Frequencies,
    t_final: f64,
    samples: usize,
    checkpoints: usize,
    tol: f64,
) -> Result<FlowReport, SystemError> {
    if !(t_final > 0.0) || samples == 0 || checkpoints == 0 {
        return Err(SystemError::InvalidParameters(
            "flow validation needs t_final > 0, samples > 0 and checkpoints > 0".into(),
        ));
    }
    let n = system.n();
    let starts = super::sample_points(system, samples);
    let times: Vec<f64> = (1..=checkpoints)
        .map(|i| t_final * i as f64 / checkpoints as f64)
        .collect();
    let results: Vec<FlowSample> = starts
        .into_par_iter()
        .map(|(z, phi0)| -> Result<FlowSample, SystemError> {
            // Reuse the quasi-random angle coordinates of the sample point.
            let theta0: Vec<f64> = z[..n].iter().map(|x| x.rem_euclid(1.0)).collect();
            let mut start = theta0.clone();
            start.extend_from_slice(&phi0);
            let z0 = k.evaluate(&start)?;
            let rhs = |t: f64, y: &DVector<f64>| {
                let phi: Vec<f64> = phi0
                    .iter()
                    .zip(freqs.alpha())
                    .map(|(p, a)| p + t * a)
                    .collect();
                system.field(y.as_slice(), &phi)
            };
            let states = dopri5(rhs, 0.0, z0, &times, tol)?;
            let mut worst: f64 = 0.0;
            for (&t, state) in times.iter().zip(&states) {
                if !system.domain().contains(state.as_slice()) {
                    return Err(SystemError::DomainExit {
                        node: 0,
                        point: start.clone(),
                        z: state.as_slice().to_vec(),
                    });
                }
                let mut p: Vec<f64> = theta0
                    .iter()
                    .zip(freqs.omega())
                    .map(|(a, w)| a + t * w)
                    .collect();
                p.extend(phi0.iter().zip(freqs.alpha()).map(|(a, w)| a + t * w));
                let expected = k.evaluate(&p)?;
                worst = worst.max((state - expected).amax());
            }
            Ok(FlowSample {
                theta0,
                phi0,
                max_deviation: worst,
            })
        })
        .collect::<Result<_, _>>()?;
    let max_deviation = results.iter().map(|s| s.max_deviation).fold(0.0, f64::max);
    Ok(FlowReport {
        t_final,
        samples: results,
        max_deviation,
    })
}
