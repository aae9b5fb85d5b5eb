//! Classical driven–damped steady state used to displace away the drive.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitParams, NormalModes};

type C64 = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisplacementError {
    #[error("drive at ω_d = {omega_d} is resonant with an undamped mode at {omega}")]
    ResonanceWithoutDamping { omega: f64, omega_d: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementData {
    pub eta_qx: C64,
    pub eta_cx: C64,
    pub eta_cy: C64,
    /// `u_aa η_{q,x} + u_ac η_{c,x}`: displacement of the qubit phase.
    pub eta_x: C64,
    pub nbar_c: f64,
    pub kappa_q: f64,
    pub kappa_c: f64,
}

/// Phase-quadrature amplitude of a mode with frequency `omega` and damping
/// `kappa` driven by `drive · sin(ω_d t)` on its charge quadrature.
pub fn phase_amplitude(drive: f64, omega: f64, omega_d: f64, kappa: f64) -> C64 {
    let w = C64::new(omega_d, kappa);
    drive * w / (omega * omega - w * w)
}

/// Charge-quadrature amplitude matching [`phase_amplitude`].
pub fn charge_amplitude(eta_x: C64, omega: f64, omega_d: f64, kappa: f64) -> C64 {
    C64::new(0.0, -omega) / C64::new(omega_d, kappa) * eta_x
}

/// `|(η_x + i η_y)/2|²`.
pub fn mean_population(eta_x: C64, eta_y: C64) -> f64 {
    ((eta_x + C64::i() * eta_y) / 2.0).norm_sqr()
}

/// Normal-mode damping from a flat bath seen through the cavity charge.
pub fn linear_rates(nm: &NormalModes, kappa_flat: f64) -> (f64, f64) {
    (kappa_flat * nm.v.ca.powi(2), kappa_flat * nm.v.cc.powi(2))
}

pub fn steady_state_displacement(
    nm: &NormalModes,
    params: &CircuitParams,
    kappa_q: f64,
    kappa_c: f64,
) -> Result<DisplacementData, DisplacementError> {
    let wd = params.drive_freq;
    for (omega, kappa) in [(nm.omega_q, kappa_q), (nm.omega_c, kappa_c)] {
        if kappa == 0.0 && (wd - omega).abs() < 1e-9 {
            return Err(DisplacementError::ResonanceWithoutDamping { omega, omega_d: wd });
        }
    }
    let ed = params.drive_amp;
    let eta_qx = phase_amplitude(nm.v.ca * ed, nm.omega_q, wd, kappa_q);
    let eta_cx = phase_amplitude(nm.v.cc * ed, nm.omega_c, wd, kappa_c);
    let eta_cy = charge_amplitude(eta_cx, nm.omega_c, wd, kappa_c);
    Ok(DisplacementData {
        eta_qx,
        eta_cx,
        eta_cy,
        eta_x: nm.u.aa * eta_qx + nm.u.ac * eta_cx,
        nbar_c: mean_population(eta_cx, eta_cy),
        kappa_q,
        kappa_c,
    })
}

/// Drive amplitude giving `nbar_c = target`; `nbar_c` is quadratic in `ε_d`.
pub fn drive_amp_for_target_nbar(
    target: f64,
    nm: &NormalModes,
    params: &CircuitParams,
    kappa_q: f64,
    kappa_c: f64,
) -> Result<f64, DisplacementError> {
    let unit = CircuitParams {
        drive_amp: 1.0,
        ..*params
    };
    let per_unit = steady_state_displacement(nm, &unit, kappa_q, kappa_c)?.nbar_c;
    Ok((target.max(0.0) / per_unit).sqrt())
}
