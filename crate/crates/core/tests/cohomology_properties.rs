//! Solver, bound and scanner invariants for the cohomological equation.

mod common;

use common::golden_freqs;
use proptest::prelude::*;
use qpkam::cohomology::{
    check_diophantine, lie_derivative, russmann_bound, solve_cohomological, Frequencies,
};
use qpkam::fourier::{FourierSeries, TorusDims};
use rustfft::num_complex::Complex64;

const CUTOFF: usize = 8;

fn dims() -> TorusDims {
    TorusDims::new(1, 1).unwrap()
}

fn series(zero_average: bool) -> impl Strategy<Value = FourierSeries> {
    let len = (2 * CUTOFF + 1).pow(2);
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len).prop_map(move |raw| {
        let coeffs = raw.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
        let s = FourierSeries::from_coefficients(dims(), vec![CUTOFF; 2], coeffs).unwrap();
        if zero_average {
            s.add_constant(-s.average())
        } else {
            s
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn solve_then_differentiate(v in series(true)) {
        let u = solve_cohomological(&v, &golden_freqs()).unwrap();
        let back = lie_derivative(&u, &golden_freqs()).unwrap();
        prop_assert!(back.max_coeff_diff(&v) < 1e-12);
        prop_assert_eq!(u.average(), 0.0);
    }

    #[test]
    fn differentiate_then_solve(u in series(false)) {
        let v = lie_derivative(&u, &golden_freqs()).unwrap();
        let back = solve_cohomological(&v, &golden_freqs()).unwrap();
        prop_assert!(back.max_coeff_diff(&u.add_constant(-u.average())) < 1e-12);
    }

    #[test]
    fn russmann_constant_bounds_the_solver(
        v in series(true),
        rho in 0.02f64..0.2,
        frac in 0.05f64..0.9,
    ) {
        let freqs = golden_freqs();
        let delta = rho * frac;
        let c_r = russmann_bound(&freqs, delta, &[CUTOFF, CUTOFF]).unwrap();
        let factor = c_r / (freqs.gamma() * delta.powf(freqs.tau()));
        let lhs = solve_cohomological(&v, &freqs).unwrap().analytic_norm(rho - delta);
        prop_assert!(lhs <= factor * v.analytic_norm(rho) * (1.0 + 1e-12));
    }

    #[test]
    fn effective_gamma_is_monotone_in_radius(
        omega in 0.05f64..0.95,
        r in 1usize..30,
    ) {
        let freqs = Frequencies::new(vec![omega], vec![1.0], 1e-6, 1.2).unwrap();
        if let (Ok(a), Ok(b)) = (check_diophantine(&freqs, r), check_diophantine(&freqs, r + 5)) {
            prop_assert!(b.effective_gamma <= a.effective_gamma);
        }
    }
}
