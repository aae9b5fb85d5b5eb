//! Normal-ordered two-mode bosonic polynomials with harmonic coefficients.
//!
//! A monomial `a†^m a^n c†^p c^q` carries a coefficient that is a finite sum
//! of oscillating terms `amp · exp(i (d_q ω_q + d_c ω_c + d_d ω_d) t)`.
//! Frequencies are stored as integer tuples so that grouping by frequency
//! never depends on float comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Highest monomial degree the algebra accepts.
pub const MAX_DEGREE: u32 = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("monomial degree {degree} exceeds the cap of {MAX_DEGREE}")]
    DegreeExceeded { degree: u32 },
    #[error("monomial {monomial} does not fit in truncation ({dim_q}, {dim_c})")]
    TruncationTooSmall {
        monomial: Monomial,
        dim_q: usize,
        dim_c: usize,
    },
}

/// Integer frequency label `d_q ω_q + d_c ω_c + d_d ω_d`.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Freq {
    pub q: i32,
    pub c: i32,
    pub d: i32,
}

impl Freq {
    pub const ZERO: Freq = Freq { q: 0, c: 0, d: 0 };

    pub const fn new(q: i32, c: i32, d: i32) -> Self {
        Freq { q, c, d }
    }

    pub fn value(&self, b: &FreqBasis) -> f64 {
        self.q as f64 * b.omega_q + self.c as f64 * b.omega_c + self.d as f64 * b.omega_d
    }

    pub fn is_zero(&self) -> bool {
        *self == Freq::ZERO
    }
}

impl Add for Freq {
    type Output = Freq;
    fn add(self, o: Freq) -> Freq {
        Freq::new(self.q + o.q, self.c + o.c, self.d + o.d)
    }
}

impl Sub for Freq {
    type Output = Freq;
    fn sub(self, o: Freq) -> Freq {
        Freq::new(self.q - o.q, self.c - o.c, self.d - o.d)
    }
}

impl Neg for Freq {
    type Output = Freq;
    fn neg(self) -> Freq {
        Freq::new(-self.q, -self.c, -self.d)
    }
}

impl fmt::Display for Freq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.q, self.c, self.d)
    }
}

/// Numeric values used to evaluate integer frequency labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqBasis {
    pub omega_q: f64,
    pub omega_c: f64,
    pub omega_d: f64,
}

/// `a†^m a^n c†^p c^q`.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Monomial {
    pub m: u32,
    pub n: u32,
    pub p: u32,
    pub q: u32,
}

impl Monomial {
    pub const IDENTITY: Monomial = Monomial {
        m: 0,
        n: 0,
        p: 0,
        q: 0,
    };

    pub const fn new(m: u32, n: u32, p: u32, q: u32) -> Self {
        Monomial { m, n, p, q }
    }

    pub fn degree(&self) -> u32 {
        self.m + self.n + self.p + self.q
    }

    pub fn is_number_conserving(&self) -> bool {
        self.m == self.n && self.p == self.q
    }

    pub fn dagger(&self) -> Monomial {
        Monomial::new(self.n, self.m, self.q, self.p)
    }

    /// Photon-number change, as the frequency picked up under free evolution:
    /// `[ω_q a†a + ω_c c†c, M] = shift(M)·M`.
    pub fn shift(&self) -> Freq {
        Freq::new(
            self.m as i32 - self.n as i32,
            self.p as i32 - self.q as i32,
            0,
        )
    }

    pub fn acts_on_qubit(&self) -> bool {
        self.m + self.n > 0
    }

    pub fn acts_on_cavity(&self) -> bool {
        self.p + self.q > 0
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.degree() == 0 {
            return write!(f, "1");
        }
        let mut parts = Vec::new();
        for (sym, e) in [("a†", self.m), ("a", self.n), ("c†", self.p), ("c", self.q)] {
            match e {
                0 => {}
                1 => parts.push(sym.to_string()),
                _ => parts.push(format!("{sym}^{e}")),
            }
        }
        write!(f, "{}", parts.join(" "))
    }
}

/// Finite sum of `amp · exp(i ν t)` keyed by integer frequency label.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Harmonics(BTreeMap<Freq, C64>);

impl Harmonics {
    pub fn zero() -> Self {
        Harmonics(BTreeMap::new())
    }

    pub fn constant(z: C64) -> Self {
        Harmonics::single(Freq::ZERO, z)
    }

    pub fn single(f: Freq, z: C64) -> Self {
        let mut h = Harmonics::zero();
        h.add_term(f, z);
        h
    }

    pub fn add_term(&mut self, f: Freq, z: C64) {
        if z == C64::new(0.0, 0.0) {
            return;
        }
        let e = self.0.entry(f).or_insert(C64::new(0.0, 0.0));
        *e += z;
        if *e == C64::new(0.0, 0.0) {
            self.0.remove(&f);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Freq, &C64)> {
        self.0.iter()
    }

    pub fn get(&self, f: &Freq) -> C64 {
        self.0.get(f).copied().unwrap_or_default()
    }

    pub fn eval(&self, t: f64, b: &FreqBasis) -> C64 {
        self.0
            .iter()
            .map(|(f, z)| z * C64::from_polar(1.0, f.value(b) * t))
            .sum()
    }

    /// Time derivative, term by term.
    pub fn derivative(&self, b: &FreqBasis) -> Harmonics {
        let mut out = Harmonics::zero();
        for (f, z) in &self.0 {
            out.add_term(*f, z * C64::new(0.0, f.value(b)));
        }
        out
    }

    pub fn conj(&self) -> Harmonics {
        Harmonics(self.0.iter().map(|(f, z)| (-*f, z.conj())).collect())
    }

    pub fn scale(&self, s: C64) -> Harmonics {
        let mut out = Harmonics::zero();
        for (f, z) in &self.0 {
            out.add_term(*f, z * s);
        }
        out
    }

    pub fn shift(&self, by: Freq) -> Harmonics {
        Harmonics(self.0.iter().map(|(f, z)| (*f + by, *z)).collect())
    }

    pub fn add_assign(&mut self, other: &Harmonics) {
        for (f, z) in &other.0 {
            self.add_term(*f, *z);
        }
    }

    pub fn mul(&self, other: &Harmonics) -> Harmonics {
        let mut out = Harmonics::zero();
        for (f1, z1) in &self.0 {
            for (f2, z2) in &other.0 {
                out.add_term(*f1 + *f2, z1 * z2);
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0.values().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Drop entries with magnitude at or below `tol`.
    pub fn prune(&mut self, tol: f64) {
        self.0.retain(|_, z| z.norm() > tol);
    }
}

impl FromIterator<(Freq, C64)> for Harmonics {
    fn from_iter<I: IntoIterator<Item = (Freq, C64)>>(iter: I) -> Self {
        let mut h = Harmonics::zero();
        for (f, z) in iter {
            h.add_term(f, z);
        }
        h
    }
}

/// Normal-ordered polynomial in `a, a†, c, c†` with harmonic coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OperatorPoly {
    terms: BTreeMap<Monomial, Harmonics>,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `(a†^m1 a^n1)(a†^m2 a^n2)` as a list of `(m, n, weight)`.
fn single_mode_product(m1: u32, n1: u32, m2: u32, n2: u32) -> Vec<(u32, u32, f64)> {
    (0..=n1.min(m2))
        .map(|j| {
            let w = binomial(n1, j) * binomial(m2, j) * factorial(j);
            (m1 + m2 - j, n1 + n2 - j, w)
        })
        .collect()
}

impl OperatorPoly {
    pub fn zero() -> Self {
        OperatorPoly::default()
    }

    pub fn identity() -> Self {
        OperatorPoly::term(Monomial::IDENTITY, Harmonics::constant(C64::new(1.0, 0.0)))
    }

    pub fn term(m: Monomial, h: Harmonics) -> Self {
        let mut p = OperatorPoly::zero();
        p.add_term(m, &h);
        p
    }

    pub fn scalar_term(m: Monomial, z: C64) -> Self {
        OperatorPoly::term(m, Harmonics::constant(z))
    }

    pub fn a() -> Self {
        OperatorPoly::scalar_term(Monomial::new(0, 1, 0, 0), C64::new(1.0, 0.0))
    }

    pub fn a_dag() -> Self {
        OperatorPoly::scalar_term(Monomial::new(1, 0, 0, 0), C64::new(1.0, 0.0))
    }

    pub fn c() -> Self {
        OperatorPoly::scalar_term(Monomial::new(0, 0, 0, 1), C64::new(1.0, 0.0))
    }

    pub fn c_dag() -> Self {
        OperatorPoly::scalar_term(Monomial::new(0, 0, 1, 0), C64::new(1.0, 0.0))
    }

    pub fn n_q() -> Self {
        OperatorPoly::scalar_term(Monomial::new(1, 1, 0, 0), C64::new(1.0, 0.0))
    }

    pub fn n_c() -> Self {
        OperatorPoly::scalar_term(Monomial::new(0, 0, 1, 1), C64::new(1.0, 0.0))
    }

    /// `X_q = a + a†`.
    pub fn x_q() -> Self {
        OperatorPoly::a().add(&OperatorPoly::a_dag())
    }

    /// `Y_q = -i (a - a†)`.
    pub fn y_q() -> Self {
        OperatorPoly::a()
            .sub(&OperatorPoly::a_dag())
            .scale(C64::new(0.0, -1.0))
    }

    pub fn x_c() -> Self {
        OperatorPoly::c().add(&OperatorPoly::c_dag())
    }

    pub fn y_c() -> Self {
        OperatorPoly::c()
            .sub(&OperatorPoly::c_dag())
            .scale(C64::new(0.0, -1.0))
    }

    pub fn add_term(&mut self, m: Monomial, h: &Harmonics) {
        if h.is_zero() {
            return;
        }
        let e = self.terms.entry(m).or_default();
        e.add_assign(h);
        if e.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Monomial, &Harmonics)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> Harmonics {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add(&self, other: &OperatorPoly) -> OperatorPoly {
        let mut out = self.clone();
        for (m, h) in &other.terms {
            out.add_term(*m, h);
        }
        out
    }

    pub fn sub(&self, other: &OperatorPoly) -> OperatorPoly {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> OperatorPoly {
        self.scale_harmonics(&Harmonics::constant(s))
    }

    pub fn scale_real(&self, s: f64) -> OperatorPoly {
        self.scale(C64::new(s, 0.0))
    }

    /// Multiply every coefficient by a time-dependent scalar.
    pub fn scale_harmonics(&self, h: &Harmonics) -> OperatorPoly {
        let mut out = OperatorPoly::zero();
        for (m, c) in &self.terms {
            out.add_term(*m, &c.mul(h));
        }
        out
    }

    /// Keep only the monomials selected by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&Monomial, &Harmonics) -> bool) -> OperatorPoly {
        OperatorPoly {
            terms: self
                .terms
                .iter()
                .filter(|(m, h)| keep(m, h))
                .map(|(m, h)| (*m, h.clone()))
                .collect(),
        }
    }

    /// Map each coefficient, dropping monomials whose image vanishes.
    pub fn map_coeffs(&self, mut f: impl FnMut(&Monomial, &Harmonics) -> Harmonics) -> OperatorPoly {
        let mut out = OperatorPoly::zero();
        for (m, h) in &self.terms {
            out.add_term(*m, &f(m, h));
        }
        out
    }

    pub fn dagger(&self) -> OperatorPoly {
        let mut out = OperatorPoly::zero();
        for (m, h) in &self.terms {
            out.add_term(m.dagger(), &h.conj());
        }
        out
    }

    /// Normal-ordered product `self · other`.
    pub fn mul(&self, other: &OperatorPoly) -> Result<OperatorPoly, AlgebraError> {
        let mut out = OperatorPoly::zero();
        for (m1, h1) in &self.terms {
            for (m2, h2) in &other.terms {
                let coeff = h1.mul(h2);
                if coeff.is_zero() {
                    continue;
                }
                let qs = single_mode_product(m1.m, m1.n, m2.m, m2.n);
                let cs = single_mode_product(m1.p, m1.q, m2.p, m2.q);
                for &(mq, nq, wq) in &qs {
                    for &(pc, qc, wc) in &cs {
                        let mono = Monomial::new(mq, nq, pc, qc);
                        if mono.degree() > MAX_DEGREE {
                            return Err(AlgebraError::DegreeExceeded {
                                degree: mono.degree(),
                            });
                        }
                        out.add_term(mono, &coeff.scale(C64::new(wq * wc, 0.0)));
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Result<OperatorPoly, AlgebraError> {
        (0..k).try_fold(OperatorPoly::identity(), |acc, _| acc.mul(self))
    }

    pub fn commutator(&self, other: &OperatorPoly) -> Result<OperatorPoly, AlgebraError> {
        Ok(self.mul(other)?.sub(&other.mul(self)?))
    }

    /// Split into number-conserving and number-nonconserving parts.
    pub fn split_number_conserving(&self) -> (OperatorPoly, OperatorPoly) {
        let s = self.filter(|m, _| m.is_number_conserving());
        let n = self.filter(|m, _| !m.is_number_conserving());
        (s, n)
    }

    pub fn derivative(&self, b: &FreqBasis) -> OperatorPoly {
        self.map_coeffs(|_, h| h.derivative(b))
    }

    /// Drop coefficients with magnitude at or below `tol`.
    pub fn prune(&mut self, tol: f64) {
        for h in self.terms.values_mut() {
            h.prune(tol);
        }
        self.terms.retain(|_, h| !h.is_zero());
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(Harmonics::max_abs).fold(0.0, f64::max)
    }

    /// Group all terms by the frequency of their coefficient.
    pub fn by_harmonic(&self) -> BTreeMap<Freq, OperatorPoly> {
        let mut out: BTreeMap<Freq, OperatorPoly> = BTreeMap::new();
        for (m, h) in &self.terms {
            for (f, z) in h.iter() {
                out.entry(*f)
                    .or_default()
                    .add_term(*m, &Harmonics::constant(*z));
            }
        }
        out
    }

    /// Dense matrix at time `t` on the basis `|n_q⟩⊗|n_c⟩`, index `n_q·dim_c + n_c`.
    pub fn to_matrix(
        &self,
        t: f64,
        basis: &FreqBasis,
        dims: (usize, usize),
    ) -> Result<DMatrix<C64>, AlgebraError> {
        let (dq, dc) = dims;
        let mut out = DMatrix::zeros(dq * dc, dq * dc);
        for (mono, h) in &self.terms {
            let z = h.eval(t, basis);
            if z == C64::new(0.0, 0.0) {
                continue;
            }
            if mono.m.max(mono.n) as usize >= dq || mono.p.max(mono.q) as usize >= dc {
                return Err(AlgebraError::TruncationTooSmall {
                    monomial: *mono,
                    dim_q: dq,
                    dim_c: dc,
                });
            }
            let mq = ladder_elements(mono.m, mono.n, dq);
            let mc = ladder_elements(mono.p, mono.q, dc);
            for &(rq, cq, vq) in &mq {
                for &(rc, cc, vc) in &mc {
                    out[(rq * dc + rc, cq * dc + cc)] += z * (vq * vc);
                }
            }
        }
        Ok(out)
    }

    /// Stable sorted text form: one monomial per line, followed by its
    /// `(d_q, d_c, d_d, re, im)` entries.
    pub fn debug_text(&self) -> String {
        let mut s = String::new();
        for (m, h) in &self.terms {
            s.push_str(&format!("{m} ->"));
            for (f, z) in h.iter() {
                s.push_str(&format!(
                    " ({}, {}, {}, {:.15e}, {:.15e})",
                    f.q, f.c, f.d, z.re, z.im
                ));
            }
            s.push('\n');
        }
        s
    }
}

/// Nonzero entries `(row, col, value)` of `a†^m a^n` on a `dim`-level mode.
fn ladder_elements(m: u32, n: u32, dim: usize) -> Vec<(usize, usize, f64)> {
    let (m, n) = (m as usize, n as usize);
    (n..dim)
        .filter_map(|k| {
            let mid = k - n;
            let out = mid + m;
            if out >= dim {
                return None;
            }
            let down: f64 = ((mid + 1)..=k).map(|j| j as f64).product();
            let up: f64 = ((mid + 1)..=out).map(|j| j as f64).product();
            Some((out, k, (down * up).sqrt()))
        })
        .collect()
}

impl fmt::Display for OperatorPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.debug_text())
    }
}
