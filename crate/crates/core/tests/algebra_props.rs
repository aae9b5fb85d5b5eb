//! Algebraic identities of the normal-ordered polynomial representation.

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use dressed_eme::algebra::{Freq, FreqBasis, Harmonics, Monomial, OperatorPoly, C64};

const BASIS: FreqBasis = FreqBasis { omega_q: 1.3, omega_c: 2.1, omega_d: 0.7 };

fn monomial(max_deg: u32) -> impl Strategy<Value = Monomial> {
    (0..=2u32, 0..=2u32, 0..=2u32, 0..=2u32)
        .prop_filter("degree", move |(m, n, p, q)| m + n + p + q <= max_deg)
        .prop_map(|(m, n, p, q)| Monomial::new(m, n, p, q))
}

fn harmonics() -> impl Strategy<Value = Harmonics> {
    prop::collection::vec(((-1..=1i32, -1..=1i32, -1..=1i32), -1.0..1.0f64, -1.0..1.0f64), 1..3).prop_map(
        |v| v.into_iter().map(|((q, c, d), re, im)| (Freq::new(q, c, d), C64::new(re, im))).collect(),
    )
}

fn poly(max_deg: u32) -> impl Strategy<Value = OperatorPoly> {
    prop::collection::vec((monomial(max_deg), harmonics()), 1..4).prop_map(|terms| {
        let mut p = OperatorPoly::zero();
        for (m, h) in terms {
            p.add_term(m, &h);
        }
        p
    })
}

fn assert_poly_zero(p: &OperatorPoly, scale: f64) {
    let mut p = p.clone();
    p.prune(1e-12 * scale.max(1.0));
    assert!(p.is_zero(), "{}", p.debug_text());
}

/// Vector supported on Fock states with at most one photon per mode.
fn low_state(dims: (usize, usize), amps: &[f64; 4]) -> DMatrix<C64> {
    let mut v = DMatrix::zeros(dims.0 * dims.1, 1);
    for (k, (nq, nc)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        v[(nq * dims.1 + nc, 0)] = C64::new(amps[k], 0.5 * amps[3 - k]);
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn commutator_is_antisymmetric(a in poly(3), b in poly(3)) {
        let s = a.commutator(&b).unwrap().add(&b.commutator(&a).unwrap());
        assert_poly_zero(&s, a.max_abs() * b.max_abs());
    }

    #[test]
    fn jacobi_identity(a in poly(2), b in poly(2), c in poly(2)) {
        let t1 = a.commutator(&b.commutator(&c).unwrap()).unwrap();
        let t2 = b.commutator(&c.commutator(&a).unwrap()).unwrap();
        let t3 = c.commutator(&a.commutator(&b).unwrap()).unwrap();
        assert_poly_zero(&t1.add(&t2).add(&t3), a.max_abs() * b.max_abs() * c.max_abs());
    }

    #[test]
    fn dagger_reverses_products(a in poly(3), b in poly(3)) {
        let lhs = a.mul(&b).unwrap().dagger();
        let rhs = b.dagger().mul(&a.dagger()).unwrap();
        assert_poly_zero(&lhs.sub(&rhs), a.max_abs() * b.max_abs());
        assert_eq!(a.dagger().dagger(), a);
    }

    #[test]
    fn product_matches_matrix_product(a in poly(2), b in poly(2), t in 0.0..10.0f64, amps in prop::array::uniform4(-1.0..1.0f64)) {
        let dims = (6, 6);
        let ab = a.mul(&b).unwrap().to_matrix(t, &BASIS, dims).unwrap();
        let ma = a.to_matrix(t, &BASIS, dims).unwrap();
        let mb = b.to_matrix(t, &BASIS, dims).unwrap();
        let psi = low_state(dims, &amps);
        let diff = (&ab * &psi - &ma * (&mb * &psi)).norm();
        prop_assert!(diff < 1e-11 * (1.0 + ab.norm()), "diff {}", diff);
    }

    #[test]
    fn harmonic_product_evaluates_pointwise(a in harmonics(), b in harmonics(), t in -5.0..5.0f64) {
        let lhs = a.mul(&b).eval(t, &BASIS);
        let rhs = a.eval(t, &BASIS) * b.eval(t, &BASIS);
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_difference(a in poly(3), t in 0.0..10.0f64) {
        let h = 1e-5;
        let d = a.derivative(&BASIS).to_matrix(t, &BASIS, (4, 4)).unwrap();
        let fd = (a.to_matrix(t + h, &BASIS, (4, 4)).unwrap() - a.to_matrix(t - h, &BASIS, (4, 4)).unwrap()) / C64::new(2.0 * h, 0.0);
        prop_assert!((d - fd).norm() < 1e-7 * (1.0 + a.max_abs() * 40.0));
    }
}

#[test]
fn ladder_commutators() {
    let one = OperatorPoly::identity();
    assert_eq!(OperatorPoly::a().commutator(&OperatorPoly::a_dag()).unwrap(), one);
    assert_eq!(OperatorPoly::c().commutator(&OperatorPoly::c_dag()).unwrap(), one);
    assert!(OperatorPoly::a().commutator(&OperatorPoly::c_dag()).unwrap().is_zero());
    // [X, Y] = 2i
    let xy = OperatorPoly::x_q().commutator(&OperatorPoly::y_q()).unwrap();
    assert_abs_diff_eq!(xy.coeff(&Monomial::IDENTITY).get(&Freq::ZERO).im, 2.0, epsilon = 1e-15);
}

#[test]
fn fourth_power_of_position() {
    // (a + a†)⁴ = a⁴ + 4a†a³ + 6a†²a² + 4a†³a + a†⁴ + 6a² + 12a†a + 6a†² + 3
    let x4 = OperatorPoly::x_q().pow(4).unwrap();
    let want = [
        ((0, 4), 1.0),
        ((1, 3), 4.0),
        ((2, 2), 6.0),
        ((3, 1), 4.0),
        ((4, 0), 1.0),
        ((0, 2), 6.0),
        ((1, 1), 12.0),
        ((2, 0), 6.0),
        ((0, 0), 3.0),
    ];
    assert_eq!(x4.len(), want.len());
    for ((m, n), v) in want {
        assert_abs_diff_eq!(x4.coeff(&Monomial::new(m, n, 0, 0)).get(&Freq::ZERO).re, v, epsilon = 1e-14);
    }
}

#[test]
fn debug_text_is_deterministic() {
    let p = OperatorPoly::x_q().add(&OperatorPoly::y_c()).pow(2).unwrap();
    let again = OperatorPoly::y_c().add(&OperatorPoly::x_q()).pow(2).unwrap();
    assert_eq!(p.debug_text(), again.debug_text());
}
