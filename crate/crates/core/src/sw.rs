//! Quartic expansion of the displaced Hamiltonian, the first-order
//! Schrieffer–Wolff generator `G4(t)`, the Kerr effective Hamiltonian and the
//! dressed bath-coupling quadratures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraError, Freq, FreqBasis, Harmonics, Monomial, OperatorPoly, C64};
use crate::circuit::{CircuitParams, NormalModes};
use crate::displacement::DisplacementData;

/// Denominators smaller than this are treated as resonant.
pub const RESONANCE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("resonant denominator {value:.3e} for monomial {monomial} at drive harmonic {harmonic}; detune ω_d")]
    ResonantDenominator {
        monomial: Monomial,
        harmonic: Freq,
        value: f64,
    },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Everything the quartic term needs: `(ω̄_a/48)(u_aa X_q + u_ac X_c + x(t))⁴`
/// with `x(t) = η_x e^{-iω_d t} + c.c.`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub omega_a_bar: f64,
    pub u_aa: f64,
    pub u_ac: f64,
    pub eta_x: C64,
    pub epsilon: f64,
    pub basis: FreqBasis,
}

impl Nonlinearity {
    pub fn two_mode(nm: &NormalModes, disp: &DisplacementData, params: &CircuitParams) -> Self {
        Nonlinearity {
            omega_a_bar: params.omega_a_bar,
            u_aa: nm.u.aa,
            u_ac: nm.u.ac,
            eta_x: disp.eta_x,
            epsilon: params.epsilon,
            basis: FreqBasis {
                omega_q: nm.omega_q,
                omega_c: nm.omega_c,
                omega_d: params.drive_freq,
            },
        }
    }

    /// Single oscillator with no cavity: `u_aa = 1`, `ω̄_a = ω_q`.
    pub fn one_mode(omega_q: f64, omega_d: f64, eta: C64, epsilon: f64) -> Self {
        Nonlinearity {
            omega_a_bar: omega_q,
            u_aa: 1.0,
            u_ac: 0.0,
            eta_x: eta,
            epsilon,
            basis: FreqBasis {
                omega_q,
                omega_c: 0.0,
                omega_d,
            },
        }
    }

    /// Drive displacement `x(t)` as a c-number polynomial.
    pub fn drive_displacement(&self) -> OperatorPoly {
        let h: Harmonics = [
            (Freq::new(0, 0, -1), self.eta_x),
            (Freq::new(0, 0, 1), self.eta_x.conj()),
        ]
        .into_iter()
        .collect();
        OperatorPoly::term(Monomial::IDENTITY, h)
    }

    /// Displaced qubit phase `u_aa X_q + u_ac X_c + x(t)`.
    pub fn displaced_phase(&self) -> OperatorPoly {
        OperatorPoly::x_q()
            .scale_real(self.u_aa)
            .add(&OperatorPoly::x_c().scale_real(self.u_ac))
            .add(&self.drive_displacement())
    }

    pub fn h2(&self) -> OperatorPoly {
        let b = &self.basis;
        let half = OperatorPoly::identity().scale_real(0.5);
        let mut h = OperatorPoly::n_q().add(&half).scale_real(b.omega_q);
        if self.u_ac != 0.0 || b.omega_c != 0.0 {
            h = h.add(&OperatorPoly::n_c().add(&half).scale_real(b.omega_c));
        }
        h
    }
}

/// `H_s(t) = H2 − ε (S4 + N4)`; `S4` and `N4` carry the `ω̄_a/48` prefactor.
#[derive(Clone, Debug, PartialEq)]
pub struct QuarticExpansion {
    pub nl: Nonlinearity,
    pub h2: OperatorPoly,
    pub s4: OperatorPoly,
    pub n4: OperatorPoly,
}

impl QuarticExpansion {
    pub fn hamiltonian(&self) -> OperatorPoly {
        self.h2
            .sub(&self.s4.add(&self.n4).scale_real(self.nl.epsilon))
    }

    /// Time-dependent number-conserving operator part of `S4` (c-numbers dropped).
    pub fn s4_oscillating(&self) -> OperatorPoly {
        self.s4
            .filter(|m, _| *m != Monomial::IDENTITY)
            .map_coeffs(|_, h| h.iter().filter(|(f, _)| !f.is_zero()).map(|(f, z)| (*f, *z)).collect())
    }
}

pub fn expand_displaced_hamiltonian(nl: &Nonlinearity) -> Result<QuarticExpansion, AlgebraError> {
    let quartic = nl
        .displaced_phase()
        .pow(4)?
        .scale_real(nl.omega_a_bar / 48.0);
    let (s4, n4) = quartic.split_number_conserving();
    Ok(QuarticExpansion {
        nl: *nl,
        h2: nl.h2(),
        s4,
        n4,
    })
}

/// Solve `−i Ġ4 + [H2, G4] = N4` with `[H2, G4(0)] = N4(0)`.
///
/// Per monomial with number shift `Δ`, a harmonic `n_h e^{iνt}` of `N4` gives
/// the particular term `n_h/(Δ+ν) e^{iνt}`; the homogeneous term
/// `(Σ n_h/Δ − Σ n_h/(Δ+ν)) e^{−iΔt}` fixes the initial condition.
pub fn solve_generator(qe: &QuarticExpansion) -> Result<OperatorPoly, GeneratorError> {
    let b = &qe.nl.basis;
    let mut g = OperatorPoly::zero();
    for (mono, coeff) in qe.n4.iter() {
        let shift = mono.shift();
        let delta = shift.value(b);
        if delta.abs() < RESONANCE_TOL {
            return Err(GeneratorError::ResonantDenominator {
                monomial: *mono,
                harmonic: Freq::ZERO,
                value: delta,
            });
        }
        let mut h = Harmonics::zero();
        let mut homogeneous = C64::new(0.0, 0.0);
        for (f, z) in coeff.iter() {
            let den = delta + f.value(b);
            if den.abs() < RESONANCE_TOL {
                return Err(GeneratorError::ResonantDenominator {
                    monomial: *mono,
                    harmonic: *f,
                    value: den,
                });
            }
            h.add_term(*f, z / den);
            homogeneous += z / delta - z / den;
        }
        h.add_term(-shift, homogeneous);
        g.add_term(*mono, &h);
    }
    Ok(g)
}

/// `I4(t) = i ∫₀ᵗ S_{4,d}(t') dt'`.
pub fn integrated_drive_shift(qe: &QuarticExpansion) -> OperatorPoly {
    let b = qe.nl.basis;
    qe.s4_oscillating().map_coeffs(|_, h| {
        let mut out = Harmonics::zero();
        for (f, z) in h.iter() {
            let nu = f.value(&b);
            out.add_term(*f, z / nu);
            out.add_term(Freq::ZERO, -z / nu);
        }
        out
    })
}

/// `Y + ε [Y, G4 + I4]`; pass `None` to leave out `I4`.
pub fn dressed_quadrature(
    y: &OperatorPoly,
    g4: &OperatorPoly,
    i4: Option<&OperatorPoly>,
    epsilon: f64,
) -> Result<OperatorPoly, AlgebraError> {
    let gen = match i4 {
        Some(i) => g4.add(i),
        None => g4.clone(),
    };
    Ok(y.add(&y.commutator(&gen)?.scale_real(epsilon)))
}

/// Normal-mode charge quadrature weighted by the bath line: `v_ca Y_q + v_cc Y_c`.
pub fn bath_quadrature(nm: &NormalModes) -> OperatorPoly {
    OperatorPoly::y_q()
        .scale_real(nm.v.ca)
        .add(&OperatorPoly::y_c().scale_real(nm.v.cc))
}

/// Coefficients of `ε S4 = λ_q n_q + λ_c n_c + χ n_q n_c + α_q n_q² + α_c n_c²`.
///
/// `λ_j(t) = lambda_j_static + lambda_j_osc e^{-2iω_d t} + c.c.`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveHamiltonian {
    pub omega_q: f64,
    pub omega_c: f64,
    pub lambda_q_static: f64,
    pub lambda_c_static: f64,
    pub lambda_q_osc: C64,
    pub lambda_c_osc: C64,
    pub chi_ac: f64,
    pub alpha_q: f64,
    pub alpha_c: f64,
    pub omega_d: f64,
}

impl EffectiveHamiltonian {
    /// `H_eff(t) = (ω_q − λ_q) n_q + (ω_c − λ_c) n_c − χ n_q n_c − α_q n_q² − α_c n_c²`.
    pub fn operator(&self, include_oscillating: bool) -> OperatorPoly {
        let n2 = |m: Monomial| {
            // n² = a†²a² + a†a
            let one = C64::new(1.0, 0.0);
            let mut p = OperatorPoly::scalar_term(m, one);
            let single = Monomial::new(m.m / 2, m.n / 2, m.p / 2, m.q / 2);
            p.add_term(single, &Harmonics::constant(one));
            p
        };
        let mut lq = Harmonics::constant(C64::new(self.omega_q - self.lambda_q_static, 0.0));
        let mut lc = Harmonics::constant(C64::new(self.omega_c - self.lambda_c_static, 0.0));
        if include_oscillating {
            let up = Freq::new(0, 0, 2);
            lq.add_term(-up, -self.lambda_q_osc);
            lq.add_term(up, -self.lambda_q_osc.conj());
            lc.add_term(-up, -self.lambda_c_osc);
            lc.add_term(up, -self.lambda_c_osc.conj());
        }
        let mut h = OperatorPoly::term(Monomial::new(1, 1, 0, 0), lq);
        h.add_term(Monomial::new(0, 0, 1, 1), &lc);
        h.add(&OperatorPoly::scalar_term(Monomial::new(1, 1, 1, 1), C64::new(-self.chi_ac, 0.0)))
            .add(&n2(Monomial::new(2, 2, 0, 0)).scale_real(-self.alpha_q))
            .add(&n2(Monomial::new(0, 0, 2, 2)).scale_real(-self.alpha_c))
    }
}

/// Read the Kerr coefficients off the symbolic `S4`.
pub fn effective_hamiltonian(qe: &QuarticExpansion) -> EffectiveHamiltonian {
    let eps = qe.nl.epsilon;
    let at = |m: Monomial, f: Freq| qe.s4.coeff(&m).get(&f) * eps;
    let osc = Freq::new(0, 0, -2);
    let nq = Monomial::new(1, 1, 0, 0);
    let nq2 = Monomial::new(2, 2, 0, 0);
    let nc = Monomial::new(0, 0, 1, 1);
    let nc2 = Monomial::new(0, 0, 2, 2);
    let alpha_q = at(nq2, Freq::ZERO).re;
    let alpha_c = at(nc2, Freq::ZERO).re;
    EffectiveHamiltonian {
        omega_q: qe.nl.basis.omega_q,
        omega_c: qe.nl.basis.omega_c,
        lambda_q_static: at(nq, Freq::ZERO).re - alpha_q,
        lambda_c_static: at(nc, Freq::ZERO).re - alpha_c,
        lambda_q_osc: at(nq, osc) - at(nq2, osc),
        lambda_c_osc: at(nc, osc) - at(nc2, osc),
        chi_ac: at(Monomial::new(1, 1, 1, 1), Freq::ZERO).re,
        alpha_q,
        alpha_c,
        omega_d: qe.nl.basis.omega_d,
    }
}

/// Undriven frequency shifts `ε (ω̄_a/8) u_aa² (u_aa² + 2u_ac²)` and the
/// cavity counterpart.
pub fn undriven_shifts(nl: &Nonlinearity) -> (f64, f64) {
    let (a2, c2) = (nl.u_aa.powi(2), nl.u_ac.powi(2));
    let k = nl.epsilon * nl.omega_a_bar / 8.0;
    (k * a2 * (a2 + 2.0 * c2), k * c2 * (c2 + 2.0 * a2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_mode(eta: C64) -> Nonlinearity {
        Nonlinearity::one_mode(1.0, 1.66, eta, 0.1)
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn undriven_one_mode_nonconserving_part() {
        let qe = expand_displaced_hamiltonian(&one_mode(c(0.0))).unwrap();
        let n4 = qe.n4.scale_real(48.0);
        let want = [
            ((4, 0), 1.0),
            ((0, 4), 1.0),
            ((3, 1), 4.0),
            ((1, 3), 4.0),
            ((2, 0), 6.0),
            ((0, 2), 6.0),
        ];
        assert_eq!(n4.len(), want.len());
        for ((m, n), v) in want {
            let got = n4.coeff(&Monomial::new(m, n, 0, 0)).get(&Freq::ZERO);
            assert!((got - c(v)).norm() < 1e-13, "{m},{n}: {got}");
        }
        let s4 = qe.s4.scale_real(48.0);
        assert!((s4.coeff(&Monomial::new(2, 2, 0, 0)).get(&Freq::ZERO) - c(6.0)).norm() < 1e-13);
        assert!((s4.coeff(&Monomial::new(1, 1, 0, 0)).get(&Freq::ZERO) - c(12.0)).norm() < 1e-13);
        assert!((s4.coeff(&Monomial::IDENTITY).get(&Freq::ZERO) - c(3.0)).norm() < 1e-13);
    }

    #[test]
    fn one_mode_generator_constants() {
        let qe = expand_displaced_hamiltonian(&one_mode(C64::new(0.1, 0.05))).unwrap();
        let g = solve_generator(&qe).unwrap();
        let g40 = g.coeff(&Monomial::new(4, 0, 0, 0));
        let g31 = g.coeff(&Monomial::new(3, 1, 0, 0));
        assert_eq!(g40.len(), 1);
        assert!((g40.get(&Freq::ZERO) - c(1.0 / 192.0)).norm() < 1e-15);
        assert!((g31.get(&Freq::ZERO) - c(1.0 / 24.0)).norm() < 1e-15);
        let undriven = solve_generator(&expand_displaced_hamiltonian(&one_mode(c(0.0))).unwrap()).unwrap();
        let g20 = undriven.coeff(&Monomial::new(2, 0, 0, 0));
        assert_eq!(g20.len(), 1);
        assert!((g20.get(&Freq::ZERO) - c(1.0 / 16.0)).norm() < 1e-15);
    }

    #[test]
    fn generator_is_antihermitian() {
        let qe = expand_displaced_hamiltonian(&one_mode(C64::new(0.2, -0.1))).unwrap();
        let g = solve_generator(&qe).unwrap();
        let mut s = g.add(&g.dagger());
        s.prune(1e-14);
        assert!(s.is_zero());
    }

    #[test]
    fn commensurate_drive_is_resonant() {
        let nl = Nonlinearity::one_mode(1.0, 3.0, c(0.1), 0.1);
        let qe = expand_displaced_hamiltonian(&nl).unwrap();
        assert!(matches!(
            solve_generator(&qe),
            Err(GeneratorError::ResonantDenominator { .. })
        ));
    }

    #[test]
    fn one_mode_effective_hamiltonian() {
        let eh = effective_hamiltonian(&expand_displaced_hamiltonian(&one_mode(c(0.0))).unwrap());
        assert!((eh.lambda_q_static - 0.1 / 8.0).abs() < 1e-15);
        assert!((eh.alpha_q - 0.1 / 8.0).abs() < 1e-15);
        assert_eq!(eh.chi_ac, 0.0);
        assert_eq!(eh.lambda_q_osc, c(0.0));
    }

    #[test]
    fn driven_one_mode_shift() {
        let eta = C64::new(0.3, 0.2);
        let eh = effective_hamiltonian(&expand_displaced_hamiltonian(&one_mode(eta)).unwrap());
        // ε/8 + (ε/2)|η|², oscillating part (ε/4) η² at e^{-2iω_d t}
        assert!((eh.lambda_q_static - (0.1 / 8.0 + 0.05 * eta.norm_sqr())).abs() < 1e-15);
        assert!((eh.lambda_q_osc - 0.025 * eta * eta).norm() < 1e-15);
    }
}
