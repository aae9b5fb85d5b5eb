//! Circuit parameters and the normal-mode transformation of the quadratic
//! qubit–cavity Hamiltonian.

use nalgebra::{Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("invalid circuit parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("quadratic form is not positive definite (smallest eigenvalue {min_eig:.3e}); coupling too large")]
    NonPositiveDefinite { min_eig: f64 },
    #[error("qubit and cavity are degenerate; critical photon number undefined")]
    DegenerateDetuning,
}

/// Bare circuit and drive parameters in rescaled units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    pub omega_a_bar: f64,
    pub omega_c_bar: f64,
    pub g: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub drive_amp: f64,
    #[serde(default)]
    pub drive_freq: f64,
    #[serde(default)]
    pub kappa_flat: f64,
}

impl CircuitParams {
    pub fn validate(&self) -> Result<(), CircuitError> {
        let fields = [
            ("omega_a_bar", self.omega_a_bar),
            ("omega_c_bar", self.omega_c_bar),
            ("g", self.g),
            ("epsilon", self.epsilon),
            ("drive_amp", self.drive_amp),
            ("drive_freq", self.drive_freq),
            ("kappa_flat", self.kappa_flat),
        ];
        for (field, v) in fields {
            if !v.is_finite() {
                return Err(CircuitError::Invalid {
                    field,
                    reason: format!("{v} is not finite"),
                });
            }
        }
        let check = |ok: bool, field: &'static str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(CircuitError::Invalid {
                    field,
                    reason: reason.to_string(),
                })
            }
        };
        check(self.omega_a_bar > 0.0, "omega_a_bar", "must be positive")?;
        check(self.omega_c_bar > 0.0, "omega_c_bar", "must be positive")?;
        check(self.g >= 0.0, "g", "must be non-negative")?;
        check(
            (0.0..1.0).contains(&self.epsilon),
            "epsilon",
            "must lie in [0, 1)",
        )?;
        check(self.drive_freq >= 0.0, "drive_freq", "must be non-negative")?;
        check(self.kappa_flat >= 0.0, "kappa_flat", "must be non-negative")?;
        Ok(())
    }

    pub fn detuning(&self) -> f64 {
        self.omega_c_bar - self.omega_a_bar
    }

    /// Warning text when the coupling is not small compared to the detuning.
    pub fn dispersive_warning(&self) -> Option<String> {
        let d = self.detuning().abs();
        let ratio = if d > 0.0 { self.g / d } else { f64::INFINITY };
        (ratio > 0.3).then(|| {
            format!("g/|Δ| = {ratio:.3} exceeds 0.3; dispersive expansion may be unreliable")
        })
    }
}

/// `(Δ / 2g)²` with `Δ = ω̄_c − ω̄_a`.
pub fn critical_photon_number(p: &CircuitParams) -> Result<f64, CircuitError> {
    let d = p.detuning();
    if d == 0.0 {
        return Err(CircuitError::DegenerateDetuning);
    }
    Ok((d / (2.0 * p.g)).powi(2))
}

/// 2×2 block indexed as `[bare][normal]`: `aa, ac` form the qubit row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub aa: f64,
    pub ac: f64,
    pub ca: f64,
    pub cc: f64,
}

impl Block {
    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.aa, self.ac, self.ca, self.cc)
    }

    fn from_matrix(m: &Matrix2<f64>) -> Self {
        Block {
            aa: m[(0, 0)],
            ac: m[(0, 1)],
            ca: m[(1, 0)],
            cc: m[(1, 1)],
        }
    }
}

/// Normal-mode frequencies and hybridization.
///
/// `X̄_q = u_aa X_q + u_ac X_c`, `X̄_c = u_ca X_q + u_cc X_c`, and the same
/// layout for the charge quadratures with `v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalModes {
    pub omega_q: f64,
    pub omega_c: f64,
    pub u: Block,
    pub v: Block,
}

impl NormalModes {
    /// Predicted `Q_q / Q_c` for a flat bath coupled through the cavity charge.
    pub fn q_ratio(&self) -> f64 {
        (self.omega_q / self.omega_c) * (self.v.cc / self.v.ca).powi(2)
    }
}

/// Diagonalize `(ω̄_a/4)(Ȳ_q² + X̄_q²) + (ω̄_c/4)(X̄_c² + Ȳ_c²) + g Ȳ_q Ȳ_c`.
///
/// With `X̄ = U X`, `Ȳ = V Y` and `V = U^{-T}`, choosing
/// `U = D^{-1/2} W Ω^{1/2}` reduces the problem to the symmetric
/// eigenproblem of `D^{1/2} K D^{1/2}`, whose eigenvalues are `Ω²`.
pub fn normal_modes(p: &CircuitParams) -> Result<NormalModes, CircuitError> {
    p.validate()?;
    let (wa, wc, g) = (p.omega_a_bar, p.omega_c_bar, p.g);
    let k = Matrix2::new(wa, 2.0 * g, 2.0 * g, wc);
    let sd = Matrix2::new(wa.sqrt(), 0.0, 0.0, wc.sqrt());
    let sd_inv = Matrix2::new(1.0 / wa.sqrt(), 0.0, 0.0, 1.0 / wc.sqrt());
    let m = sd * k * sd;
    let eig = SymmetricEigen::new(m);
    let min_eig = eig.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(CircuitError::NonPositiveDefinite { min_eig });
    }
    let mut w = eig.eigenvectors;
    let mut om = [eig.eigenvalues[0].sqrt(), eig.eigenvalues[1].sqrt()];
    // Label by overlap with the bare qubit, not by frequency order.
    if w[(0, 0)].abs() * w[(1, 1)].abs() < w[(0, 1)].abs() * w[(1, 0)].abs() {
        w.swap_columns(0, 1);
        om.swap(0, 1);
    }
    for j in 0..2 {
        if w[(j, j)] < 0.0 {
            w.column_mut(j).neg_mut();
        }
    }
    let u = sd_inv * w * Matrix2::new(om[0].sqrt(), 0.0, 0.0, om[1].sqrt());
    let v = sd * w * Matrix2::new(1.0 / om[0].sqrt(), 0.0, 0.0, 1.0 / om[1].sqrt());
    Ok(NormalModes {
        omega_q: om[0],
        omega_c: om[1],
        u: Block::from_matrix(&u),
        v: Block::from_matrix(&v),
    })
}
