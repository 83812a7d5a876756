//! Frame invariants on random, not necessarily invariant, embeddings.

mod common;

use common::case_ii_structure;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qpkam::fourier::{FourierSeries, TorusDims};
use qpkam::geometry::{
    build_frame, reduced_form, row_sum_norm, standard_symplectic, symplectic_error,
    symplectic_error_blocks, torsion, torsion_kernel, ConstantStructure, StructureCase,
    SymplecticStructure, TorusEmbedding,
};
use qpkam::system::{DomainBox, ForcedRotors};
use rustfft::num_complex::Complex64;

const TRUNC: [usize; 3] = [4, 4, 1];
const SHAPE: [usize; 3] = [16, 16, 4];

fn dims() -> TorusDims {
    TorusDims::new(2, 1).unwrap()
}

/// `K = (theta + u, y0 + v)` with small random periodic `u`, `v`.
fn embedding() -> impl Strategy<Value = TorusEmbedding> {
    let len: usize = TRUNC.iter().map(|n| 2 * n + 1).product();
    (
        prop::collection::vec(prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len), 4),
        (0.2f64..0.8, 0.2f64..0.8),
    )
        .prop_map(move |(raw, (y1, y2))| {
            let template = FourierSeries::zeros(dims(), TRUNC.to_vec()).unwrap();
            let comps = raw
                .iter()
                .enumerate()
                .map(|(c, r)| {
                    let coeffs = r
                        .iter()
                        .enumerate()
                        .map(|(i, &(re, im))| {
                            let k1: i64 = template.mode_of(i).iter().map(|k| k.abs()).sum();
                            Complex64::new(re, im) * 0.02 * (-(k1 as f64)).exp()
                        })
                        .collect();
                    let s = FourierSeries::from_coefficients(dims(), TRUNC.to_vec(), coeffs)
                        .unwrap();
                    match c {
                        2 => s.add_constant(y1),
                        3 => s.add_constant(y2),
                        _ => s,
                    }
                })
                .collect();
            TorusEmbedding::new(TorusEmbedding::standard_winding(2), comps).unwrap()
        })
}

fn case_iii_structure() -> ConstantStructure {
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5, 0.5, 2.0]));
    ConstantStructure::new(StructureCase::CaseIII, standard_symplectic(2), g).unwrap()
}

fn structures() -> Vec<ConstantStructure> {
    vec![ConstantStructure::canonical(2), case_iii_structure(), case_ii_structure()]
}

fn rotors(structure: ConstantStructure, eps: f64) -> ForcedRotors {
    let twist = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
    ForcedRotors::new(eps, 1, twist, structure, DomainBox::unbounded(4)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn reduced_form_has_zero_average(k in embedding()) {
        for st in structures() {
            let avg = reduced_form(&k, &st, &SHAPE).unwrap().average();
            prop_assert!(avg.amax() < 1e-10, "{:?}: {}", st.case(), avg);
        }
    }

    #[test]
    fn symplectic_error_has_block_form(k in embedding()) {
        for st in structures() {
            let frame = build_frame(&k, &st, &SHAPE).unwrap();
            let esym = symplectic_error(&frame).unwrap();
            let blocks = symplectic_error_blocks(&frame).unwrap();
            prop_assert!(esym.max_coeff_diff(&blocks) < 1e-10, "{:?}", st.case());
        }
    }

    #[test]
    fn cross_block_is_minus_identity_up_to_omega_l(k in embedding()) {
        for st in structures() {
            let frame = build_frame(&k, &st, &SHAPE).unwrap();
            let nd = &frame.nodes;
            for i in 0..nd.l.len() {
                let lon = nd.l.node(i).transpose() * nd.omega_k.node(i) * nd.n.node(i)
                    + DMatrix::<f64>::identity(2, 2);
                let bound = row_sum_norm(nd.omega_l.node(i)) * row_sum_norm(nd.a.node(i)) + 1e-10;
                prop_assert!(row_sum_norm(&lon) <= bound);
            }
        }
    }

    #[test]
    fn torsion_symmetry(k in embedding(), eps in 0.0f64..0.05) {
        for st in structures() {
            let case = st.case();
            let sys = rotors(st, eps);
            let frame = build_frame(&k, &sys.constant_structure().clone(), &SHAPE).unwrap();
            let t = torsion(&frame, &torsion_kernel(&frame, &sys)).unwrap();
            let avg = &t.average;
            prop_assert!((avg - avg.transpose()).amax() < 1e-10, "{case:?}");
            if case.is_compatible() {
                prop_assert!(t.series.max_coeff_diff(&t.series.transpose()) < 1e-10, "{case:?}");
            }
        }
    }
}
