//! Closed-form coefficient tables for `[X_q, G4]` (one mode) and `[Y_q, G4]`
//! (two modes) plus generator residual checks, shared by the integration
//! tests and the acceptance run.
#![allow(dead_code)]

use nalgebra::DMatrix;

use dressed_eme::algebra::{Freq, FreqBasis, Harmonics, Monomial, OperatorPoly, C64};
use dressed_eme::sw::{expand_displaced_hamiltonian, solve_generator, Nonlinearity};

pub const REL_TOL: f64 = 1e-12;

/// The `c†c` row as derived here from `(ω̄_a/2) u_aa u_ac² c†c X_q x(t)`
/// in the quartic expansion. The printed listing carries a quarter of it.
pub const CAVITY_NUMBER_ROW_FACTOR: f64 = 4.0;

pub fn i() -> C64 {
    C64::new(0.0, 1.0)
}

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn f(q: i32, c: i32, d: i32) -> Freq {
    Freq::new(q, c, d)
}

/// Golden row: a monomial and its expected harmonic content.
pub struct Row {
    pub name: &'static str,
    pub mono: Monomial,
    pub want: Harmonics,
}

impl Row {
    pub fn new(name: &'static str, mono: Monomial) -> Self {
        Row { name, mono, want: Harmonics::zero() }
    }

    /// `pref · Σ sign_k e^{i f_k t}`.
    pub fn phases(mut self, pref: C64, terms: &[(f64, Freq)]) -> Self {
        for (s, fr) in terms {
            self.want.add_term(*fr, pref * *s);
        }
        self
    }

    pub fn constant(self, z: C64) -> Self {
        self.phases(z, &[(1.0, Freq::ZERO)])
    }
}

/// Compares every listed row and checks that nothing outside the rows
/// (or their Hermitian conjugates) survives in the selected sector.
pub fn check_table(label: &str, got: &OperatorPoly, rows: &[Row], sector: impl Fn(&Monomial) -> bool) -> Vec<String> {
    let mut failures = Vec::new();
    let scale = got.max_abs().max(1e-300);
    for row in rows {
        let have = got.coeff(&row.mono);
        let mut freqs: Vec<Freq> = have.iter().map(|(fr, _)| *fr).collect();
        freqs.extend(row.want.iter().map(|(fr, _)| *fr));
        freqs.sort();
        freqs.dedup();
        let row_scale = row.want.max_abs().max(have.max_abs()).max(1e-3 * scale);
        for fr in freqs {
            let (a, b) = (have.get(&fr), row.want.get(&fr));
            if (a - b).norm() > REL_TOL * row_scale {
                failures.push(format!("{label} {} at {fr}: got {a:.15e}, want {b:.15e}", row.name));
            }
        }
        // conjugate row
        let dag = got.coeff(&row.mono.dagger());
        for (fr, z) in have.iter() {
            if (dag.get(&-*fr) - z.conj()).norm() > REL_TOL * row_scale {
                failures.push(format!("{label} {}†: not the conjugate of {}", row.name, row.name));
            }
        }
    }
    for (m, h) in got.iter() {
        if !sector(m) || h.max_abs() < 1e-14 * scale {
            continue;
        }
        if !rows.iter().any(|r| r.mono == *m || r.mono.dagger() == *m) {
            failures.push(format!("{label}: monomial {m} is not covered by the table"));
        }
    }
    failures
}

pub fn one_mode_table(w_q: f64, w_d: f64, eta: C64) -> Vec<Row> {
    let ec = eta.conj();
    let eta2 = eta * eta;
    let ec2 = ec * ec;
    let x = eta + ec;
    vec![
        Row::new("a", Monomial::new(0, 1, 0, 0))
            .phases(-w_q * eta2 / (8.0 * (w_d + w_q)), &[(-1.0, f(0, 0, -2)), (1.0, f(2, 0, 0))])
            .phases(-w_q * ec2 / (8.0 * (w_d - w_q)), &[(1.0, f(0, 0, 2)), (-1.0, f(2, 0, 0))])
            .phases((eta2 + ec2) / 8.0, &[(1.0, f(2, 0, 0))])
            .constant(re((2.0 * eta.norm_sqr() + 1.0) / 8.0)),
        Row::new("a^2", Monomial::new(0, 2, 0, 0))
            .phases(-w_q * eta / (4.0 * (w_d + 3.0 * w_q)), &[(-1.0, f(0, 0, -1)), (1.0, f(3, 0, 0))])
            .phases(-w_q * ec / (4.0 * (w_d - 3.0 * w_q)), &[(1.0, f(0, 0, 1)), (-1.0, f(3, 0, 0))])
            .phases(-w_q * eta / (4.0 * (w_d + w_q)), &[(1.0, f(0, 0, -1)), (-1.0, f(1, 0, 0))])
            .phases(w_q * ec / (4.0 * (w_d - w_q)), &[(1.0, f(0, 0, 1)), (-1.0, f(1, 0, 0))])
            .phases(x / 12.0, &[(-3.0, f(1, 0, 0)), (1.0, f(3, 0, 0))]),
        Row::new("a†a", Monomial::new(1, 1, 0, 0))
            .phases(re(w_q / (2.0 * (w_d - w_q))) * eta, &[(1.0, f(-1, 0, 0)), (-1.0, f(0, 0, -1))])
            .phases(re(w_q / (2.0 * (w_d - w_q))) * ec, &[(1.0, f(1, 0, 0)), (-1.0, f(0, 0, 1))])
            .phases(re(w_q / (2.0 * (w_d + w_q))) * eta, &[(1.0, f(0, 0, -1)), (-1.0, f(1, 0, 0))])
            .phases(re(w_q / (2.0 * (w_d + w_q))) * ec, &[(1.0, f(0, 0, 1)), (-1.0, f(-1, 0, 0))])
            .phases(x / 2.0, &[(1.0, f(1, 0, 0)), (1.0, f(-1, 0, 0))]),
        Row::new("a†^2 a", Monomial::new(2, 1, 0, 0)).constant(re(1.0 / 8.0)),
        Row::new("a†^3", Monomial::new(3, 0, 0, 0)).constant(re(-1.0 / 48.0)),
    ]
}

#[derive(Clone, Copy)]
pub struct TwoMode {
    pub wa: f64,
    pub uaa: f64,
    pub uac: f64,
    pub w_q: f64,
    pub w_c: f64,
    pub w_d: f64,
    pub eta: C64,
}

impl TwoMode {
    pub fn nonlinearity(&self) -> Nonlinearity {
        Nonlinearity {
            omega_a_bar: self.wa,
            u_aa: self.uaa,
            u_ac: self.uac,
            eta_x: self.eta,
            epsilon: 0.1,
            basis: FreqBasis { omega_q: self.w_q, omega_c: self.w_c, omega_d: self.w_d },
        }
    }

    pub fn qubit_only(&self) -> Vec<Row> {
        let TwoMode { wa, uaa, uac, w_q, w_d, eta, .. } = *self;
        let ec = eta.conj();
        let (eta2, ec2) = (eta * eta, ec * ec);
        let (u2, u3, u4) = (uaa.powi(2), uaa.powi(3), uaa.powi(4));
        let iw = i() * wa;
        vec![
            Row::new("a", Monomial::new(0, 1, 0, 0))
                .phases(iw * u2 * (eta2 + ec2) / (8.0 * w_q), &[(1.0, f(2, 0, 0))])
                .constant(iw * u2 * (u2 + uac * uac + 2.0 * eta.norm_sqr()) / (8.0 * w_q))
                .phases(-iw * eta2 * u2 / (8.0 * (w_d + w_q)), &[(-1.0, f(0, 0, -2)), (1.0, f(2, 0, 0))])
                .phases(-iw * ec2 * u2 / (8.0 * (w_q - w_d)), &[(1.0, f(2, 0, 0)), (-1.0, f(0, 0, 2))]),
            Row::new("a^2", Monomial::new(0, 2, 0, 0))
                .phases(-iw * ec * u3 / (4.0 * (w_q - w_d)), &[(1.0, f(1, 0, 0)), (-1.0, f(0, 0, 1))])
                .phases(-iw * ec * u3 / (4.0 * (3.0 * w_q - w_d)), &[(1.0, f(3, 0, 0)), (-1.0, f(0, 0, 1))])
                .phases(-iw * eta * u3 / (4.0 * (w_d + w_q)), &[(-1.0, f(0, 0, -1)), (1.0, f(1, 0, 0))])
                .phases(-iw * eta * u3 / (4.0 * (w_d + 3.0 * w_q)), &[(-1.0, f(0, 0, -1)), (1.0, f(3, 0, 0))])
                .phases(iw * (eta + ec) * u3 / (12.0 * w_q), &[(3.0, f(1, 0, 0)), (1.0, f(3, 0, 0))]),
            Row::new("a†a", Monomial::new(1, 1, 0, 0))
                .phases(-iw * u3 * ec / (2.0 * (w_d + w_q)), &[(1.0, f(0, 0, 1)), (-1.0, f(-1, 0, 0))])
                .phases(-iw * u3 * eta / (2.0 * (w_d + w_q)), &[(1.0, f(1, 0, 0)), (-1.0, f(0, 0, -1))])
                .phases(-iw * u3 * ec / (2.0 * (w_q - w_d)), &[(-1.0, f(0, 0, 1)), (1.0, f(1, 0, 0))])
                .phases(-iw * u3 * eta / (2.0 * (w_q - w_d)), &[(-1.0, f(-1, 0, 0)), (1.0, f(0, 0, -1))])
                .phases(iw * (eta + ec) * u3 / (2.0 * w_q), &[(-1.0, f(-1, 0, 0)), (1.0, f(1, 0, 0))]),
            Row::new("a^3", Monomial::new(0, 3, 0, 0)).constant(iw * u4 / (16.0 * w_q)),
            Row::new("a†a a", Monomial::new(1, 2, 0, 0)).constant(iw * u4 / (8.0 * w_q)),
        ]
    }

    pub fn cavity_only(&self, number_row_factor: f64) -> Vec<Row> {
        let TwoMode { wa, uaa, uac, w_q, w_c, w_d, eta } = *self;
        let ec = eta.conj();
        let (eta2, ec2) = (eta * eta, ec * ec);
        let iw = i() * wa;
        let k1 = iw * uaa * uac;
        let k2 = iw * uaa * uac * uac;
        let k3 = iw * uaa * uac.powi(3);
        let k2n = k2 * number_row_factor;
        let stat = uaa * uaa + uac * uac + 2.0 * eta.norm_sqr();
        let re2 = 2.0 * eta2.re;
        let (qm, qp) = (f(-1, 1, 0), f(1, 1, 0));
        vec![
            Row::new("c", Monomial::new(0, 0, 0, 1))
                .phases(-k1 * eta2 / (4.0 * (-w_q + 2.0 * w_d + w_c)), &[(-1.0, f(0, 0, -2)), (1.0, qm)])
                .phases(-k1 * ec2 / (4.0 * (-w_q - 2.0 * w_d + w_c)), &[(1.0, qm), (-1.0, f(0, 0, 2))])
                .phases(k1 * re2 / (4.0 * (w_c - w_q)), &[(1.0, qm)])
                .constant(k1 * stat / (4.0 * (w_c - w_q)))
                .phases(k1 * re2 / (4.0 * (w_q + w_c)), &[(1.0, qp)])
                .constant(k1 * stat / (4.0 * (w_q + w_c)))
                .phases(-k1 * eta2 / (4.0 * (w_q + 2.0 * w_d + w_c)), &[(-1.0, f(0, 0, -2)), (1.0, qp)])
                .phases(-k1 * ec2 / (4.0 * (w_q - 2.0 * w_d + w_c)), &[(1.0, qp), (-1.0, f(0, 0, 2))]),
            Row::new("c^2", Monomial::new(0, 0, 0, 2))
                .phases(-k2 * ec / (4.0 * (-w_q - w_d + 2.0 * w_c)), &[(1.0, f(-1, 2, 0)), (-1.0, f(0, 0, 1))])
                .phases(-k2 * ec / (4.0 * (w_q - w_d + 2.0 * w_c)), &[(1.0, f(1, 2, 0)), (-1.0, f(0, 0, 1))])
                .phases(k2 * eta / (4.0 * (-w_q + w_d + 2.0 * w_c)), &[(-1.0, f(-1, 2, 0)), (1.0, f(0, 0, -1))])
                .phases(-k2 * eta / (4.0 * (w_q + w_d + 2.0 * w_c)), &[(-1.0, f(0, 0, -1)), (1.0, f(1, 2, 0))])
                .phases(k2 * eta.re / (2.0 * (2.0 * w_c - w_q)), &[(1.0, f(-1, 2, 0))])
                .phases(k2 * eta.re / (2.0 * (w_q + 2.0 * w_c)), &[(1.0, f(1, 2, 0))]),
            Row::new("c†c", Monomial::new(0, 0, 1, 1))
                .phases(-k2n / (8.0 * (w_q + w_d)) * ec, &[(1.0, f(0, 0, 1)), (-1.0, f(-1, 0, 0))])
                .phases(-k2n / (8.0 * (w_q + w_d)) * eta, &[(1.0, f(1, 0, 0)), (-1.0, f(0, 0, -1))])
                .phases(-k2n / (8.0 * (w_q - w_d)) * ec, &[(-1.0, f(0, 0, 1)), (1.0, f(1, 0, 0))])
                .phases(-k2n / (8.0 * (w_q - w_d)) * eta, &[(-1.0, f(-1, 0, 0)), (1.0, f(0, 0, -1))])
                .phases(k2n * eta.re / (4.0 * w_q), &[(-1.0, f(-1, 0, 0)), (1.0, f(1, 0, 0))]),
            Row::new("c^3", Monomial::new(0, 0, 0, 3))
                .constant(k3 / (12.0 * (w_q + 3.0 * w_c)) + k3 / (12.0 * (3.0 * w_c - w_q))),
            Row::new("c†c c", Monomial::new(0, 0, 1, 2))
                .constant(k3 / (4.0 * (w_q + w_c)) + k3 / (4.0 * (w_c - w_q))),
        ]
    }

    pub fn correlated(&self) -> Vec<Row> {
        let TwoMode { wa, uaa, uac, w_q, w_c, w_d, eta } = *self;
        let ec = eta.conj();
        let iw = i() * wa;
        let k = iw * uac * uaa * uaa;
        let k22 = iw * uac * uac * uaa * uaa;
        let k13 = iw * uac * uaa.powi(3);
        let (hi, lo) = (f(2, 1, 0), f(2, -1, 0));
        vec![
            Row::new("a c", Monomial::new(0, 1, 0, 1))
                .phases(-k * ec / (2.0 * (w_c - w_d + 2.0 * w_q)), &[(1.0, hi), (-1.0, f(0, 0, 1))])
                .phases(-k * eta / (2.0 * (w_c + w_d + 2.0 * w_q)), &[(-1.0, f(0, 0, -1)), (1.0, hi)])
                .phases(-k * ec / (2.0 * (w_c - w_d)), &[(1.0, f(0, 1, 0)), (-1.0, f(0, 0, 1))])
                .phases(-k * eta / (2.0 * (w_c + w_d)), &[(-1.0, f(0, 0, -1)), (1.0, f(0, 1, 0))])
                .phases(k * eta.re / (w_c + 2.0 * w_q), &[(1.0, hi)])
                .phases(k * eta.re / w_c, &[(1.0, f(0, 1, 0))]),
            Row::new("a c†", Monomial::new(0, 1, 1, 0))
                .phases(k * ec / (2.0 * (w_c + w_d - 2.0 * w_q)), &[(1.0, lo), (-1.0, f(0, 0, 1))])
                .phases(k * eta / (2.0 * (w_c - w_d - 2.0 * w_q)), &[(-1.0, f(0, 0, -1)), (1.0, lo)])
                .phases(-k * ec / (2.0 * (w_c + w_d)), &[(-1.0, f(0, -1, 0)), (1.0, f(0, 0, 1))])
                .phases(-k * eta / (2.0 * (w_c - w_d)), &[(-1.0, f(0, -1, 0)), (1.0, f(0, 0, -1))])
                .phases(-k * eta.re / (w_c - 2.0 * w_q), &[(1.0, lo)])
                .phases(-k * eta.re / w_c, &[(1.0, f(0, -1, 0))]),
            Row::new("a c†c", Monomial::new(0, 1, 1, 1)).constant(k22 / (4.0 * w_q)),
            Row::new("a†a c", Monomial::new(1, 1, 0, 1))
                .constant(-k13 / (2.0 * (w_q - w_c)) + k13 / (2.0 * (w_c + w_q))),
            Row::new("a c^2", Monomial::new(0, 1, 0, 2))
                .constant(k22 / (8.0 * (w_c + w_q)) + k22 / (8.0 * w_c)),
            Row::new("a c†^2", Monomial::new(0, 1, 2, 0))
                .constant(-k22 / (8.0 * w_c) - k22 / (8.0 * (w_c - w_q))),
            Row::new("a^2 c", Monomial::new(0, 2, 0, 1))
                .constant(k13 / (4.0 * (w_c + 3.0 * w_q)) + k13 / (4.0 * (w_c + w_q))),
            Row::new("a^2 c†", Monomial::new(0, 2, 1, 0))
                .constant(-k13 / (4.0 * (w_c - w_q)) - k13 / (4.0 * (w_c - 3.0 * w_q))),
        ]
    }
}

pub fn readout_like() -> TwoMode {
    TwoMode {
        wa: 0.77 * std::f64::consts::PI,
        uaa: 0.9924054545973162,
        uac: 0.12088297815785787,
        w_q: 2.409470728056992,
        w_c: 3.1489273826386897,
        w_d: 3.147,
        eta: C64::new(0.071, -0.043),
    }
}

pub fn two_mode_commutator(tm: &TwoMode) -> OperatorPoly {
    let g4 = solve_generator(&expand_displaced_hamiltonian(&tm.nonlinearity()).unwrap()).unwrap();
    OperatorPoly::y_q().commutator(&g4).unwrap()
}

pub fn one_mode_commutator(w_d: f64, eta: C64) -> OperatorPoly {
    let nl = Nonlinearity::one_mode(1.0, w_d, eta, 0.2);
    let g4 = solve_generator(&expand_displaced_hamiltonian(&nl).unwrap()).unwrap();
    OperatorPoly::x_q().commutator(&g4).unwrap()
}

pub const ONE_MODE_POINTS: [(f64, C64); 2] = [(1.66, C64::new(0.3, 0.1)), (0.7, C64::new(-0.2, 0.25))];

pub fn qubit_sector(m: &Monomial) -> bool {
    m.acts_on_qubit() && !m.acts_on_cavity()
}

pub fn cavity_sector(m: &Monomial) -> bool {
    m.acts_on_cavity() && !m.acts_on_qubit()
}

pub fn correlated_sector(m: &Monomial) -> bool {
    m.acts_on_cavity() && m.acts_on_qubit()
}

fn mat(p: &OperatorPoly, t: f64, b: &FreqBasis, dims: (usize, usize)) -> DMatrix<C64> {
    p.to_matrix(t, b, dims).unwrap()
}

/// Largest entry of `−i Ġ4 + [H2, G4] − N4` at time `t`.
pub fn ode_residual(nl: &Nonlinearity, dims: (usize, usize), t: f64) -> f64 {
    let b = nl.basis;
    let qe = expand_displaced_hamiltonian(nl).unwrap();
    let g = solve_generator(&qe).unwrap();
    let mg = mat(&g, t, &b, dims);
    let h2 = mat(&qe.h2, t, &b, dims);
    let r = mat(&g.derivative(&b), t, &b, dims) * C64::new(0.0, -1.0) + &h2 * &mg - &mg * &h2 - mat(&qe.n4, t, &b, dims);
    r.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn comm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a * b - b * a
}

/// Off-diagonal weight of `e^{−εG4}(H_s − i∂_t)e^{εG4}` on the lowest `keep`
/// levels of a single driven mode, with the conjugation expanded to third order.
pub fn bch_residual(epsilon: f64, w_d: f64, eta: C64, times: &[f64]) -> f64 {
    const DIM: usize = 28;
    let keep = 4;
    let nl = Nonlinearity::one_mode(1.0, w_d, eta, epsilon);
    let b = nl.basis;
    let dims = (DIM, 1);
    let qe = expand_displaced_hamiltonian(&nl).unwrap();
    let g = solve_generator(&qe).unwrap();
    let h_s = qe.hamiltonian();
    let mut total = 0.0;
    for &t in times {
        let h = mat(&h_s, t, &b, dims);
        let x = mat(&g, t, &b, dims) * C64::new(epsilon, 0.0);
        let xd = mat(&g.derivative(&b), t, &b, dims) * C64::new(epsilon, 0.0);
        let h1 = comm(&h, &x);
        let h2 = comm(&h1, &x);
        let h3 = comm(&h2, &x);
        let d1 = comm(&xd, &x);
        let d2 = comm(&d1, &x);
        let half = C64::new(0.5, 0.0);
        let sixth = C64::new(1.0 / 6.0, 0.0);
        let k = &h + &h1 + &h2 * half + &h3 * sixth - (&xd + &d1 * half + &d2 * sixth) * C64::i();
        for r in 0..keep {
            for c in 0..keep {
                if r != c {
                    total += k[(r, c)].norm_sqr();
                }
            }
        }
    }
    total.sqrt()
}
