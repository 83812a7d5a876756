//! Grid <-> coefficient transforms built on per-axis complex FFTs.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::{check_shape, strides, FourierSeries, GridFunction, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// In-place multidimensional FFT, one axis at a time.
fn fft_nd(data: &mut [Complex64], shape: &[usize], direction: FftDirection) {
    let st = strides(shape);
    let total = data.len();
    for (axis, &m) in shape.iter().enumerate() {
        if m == 1 {
            continue;
        }
        let fft = plan(m, direction);
        let stride = st[axis];
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // Lines along `axis` start at indices whose `axis` digit is zero.
        let block = stride * m;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}

fn wrapped(k: i64, m: usize) -> usize {
    k.rem_euclid(m as i64) as usize
}

/// Coefficients of `grid` on the box `|k_j| <= trunc_j`, plus the summed
/// magnitude of the discarded grid modes.
pub fn forward_transform_with_residual(
    grid: &GridFunction,
    trunc: &[usize],
) -> Result<(FourierSeries, f64)> {
    check_shape(grid.shape(), trunc)?;
    let shape = grid.shape();
    let total = grid.len();
    let mut data: Vec<Complex64> = grid
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft_nd(&mut data, shape, FftDirection::Forward);
    let norm = 1.0 / total as f64;
    data.iter_mut().for_each(|c| *c *= norm);

    let mut series = FourierSeries::zeros(grid.dims(), trunc.to_vec())?;
    let gst = strides(shape);
    let mut kept = vec![false; total];
    for i in 0..series.coeffs.len() {
        let k = series.mode_of(i);
        let g: usize = k
            .iter()
            .zip(shape)
            .zip(&gst)
            .map(|((&kj, &m), &s)| wrapped(kj, m) * s)
            .sum();
        series.coeffs[i] = data[g];
        kept[g] = true;
    }
    series.enforce_symmetry();
    let residual = data
        .iter()
        .zip(&kept)
        .filter(|(_, &k)| !k)
        .map(|(c, _)| c.norm())
        .sum();
    Ok((series, residual))
}

/// Coefficients of `grid` on the box `|k_j| <= trunc_j`.
pub fn forward_transform(grid: &GridFunction, trunc: &[usize]) -> Result<FourierSeries> {
    forward_transform_with_residual(grid, trunc).map(|(s, _)| s)
}

/// Samples `series` on the grid of the given shape.
pub fn inverse_transform(series: &FourierSeries, shape: &[usize]) -> Result<GridFunction> {
    check_shape(shape, series.trunc())?;
    let total: usize = shape.iter().product();
    let gst = strides(shape);
    let mut data = vec![Complex64::new(0.0, 0.0); total];
    for (i, &c) in series.coeffs.iter().enumerate() {
        let k = series.mode_of(i);
        let g: usize = k
            .iter()
            .zip(shape)
            .zip(&gst)
            .map(|((&kj, &m), &s)| wrapped(kj, m) * s)
            .sum();
        data[g] = c;
    }
    fft_nd(&mut data, shape, FftDirection::Inverse);
    GridFunction::new(
        series.dims(),
        shape.to_vec(),
        data.into_iter().map(|c| c.re).collect(),
    )
}

/// Largest absolute sample.
pub fn grid_sup_norm(grid: &GridFunction) -> f64 {
    grid.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}
