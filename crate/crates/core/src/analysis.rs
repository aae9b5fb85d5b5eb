//! Rate extraction and the three sweep protocols: drive power, drive
//! detuning and the single driven oscillator.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{self, CircuitError, CircuitParams, NormalModes};
use crate::displacement;
use crate::eme::{
    self, BathQuadrature, BinSelection, EmeError, EmeOptions, EmeVariant, LeadingTerms, MeGenerator,
    OneModeFamilies, OneModeParams, SpectralDensity, TwoModeModel,
};
use crate::lindblad::{self, EngineError, Tolerances, Trajectory, Truncation};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("observable `{0}` is not recorded")]
    UnknownObservable(String),
    #[error("fit window [{t0}, {t1}] holds {points} usable points; need at least 3")]
    TooFewPoints { t0: f64, t1: f64, points: usize },
    #[error("log-series rises by {rise:.3e} at t = {time:.4e}, more than 3x the rms residual {rms:.3e}")]
    NonMonotoneData { time: f64, rise: f64, rms: f64 },
    #[error("sweep axis is empty")]
    EmptyAxis,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Eme(#[from] EmeError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result of a log-linear fit `ln n(t) ≈ c − 2κ t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub kappa: f64,
    /// Standard error of `κ` from the regression.
    pub kappa_err: f64,
    /// Peak absolute residual, set by the subleading oscillatory terms.
    pub frequency_residual: f64,
    pub rms_residual: f64,
    pub fit_window: (f64, f64),
    pub points: usize,
}

/// Fit window and the population floor below which samples are dropped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    /// Window start; `None` uses the cavity ring-up time `5/κ_c`.
    #[serde(default)]
    pub t_start: Option<f64>,
    #[serde(default)]
    pub t_stop: Option<f64>,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_floor() -> f64 {
    1e-3
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            t_start: None,
            t_stop: None,
            floor: default_floor(),
        }
    }
}

/// Least-squares decay rate of a positive series on `[t0, t1]`.
pub fn fit_series(times: &[f64], values: &[f64], t0: f64, t1: f64, floor: f64) -> Result<RateFit, AnalysisError> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= t0 && **t <= t1 && **v > floor)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            t0,
            t1,
            points: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let resid: Vec<f64> = pts.iter().map(|p| p.1 - (ym + slope * (p.0 - tm))).collect();
    let ss: f64 = resid.iter().map(|r| r * r).sum();
    let rms = (ss / n).sqrt();
    for w in pts.windows(2) {
        let rise = w[1].1 - w[0].1;
        if rise > 3.0 * rms + 1e-12 {
            return Err(AnalysisError::NonMonotoneData {
                time: w[1].0,
                rise,
                rms,
            });
        }
    }
    let dof = (n - 2.0).max(1.0);
    let slope_err = (ss / dof / sxx).sqrt();
    Ok(RateFit {
        kappa: -slope / 2.0,
        kappa_err: slope_err / 2.0,
        frequency_residual: resid.iter().map(|r| r.abs()).fold(0.0, f64::max),
        rms_residual: rms,
        fit_window: (t0, t1),
        points: pts.len(),
    })
}

pub fn fit_rate(traj: &Trajectory, observable: &str, t0: f64, t1: f64, floor: f64) -> Result<RateFit, AnalysisError> {
    let v = traj
        .series(observable)
        .ok_or_else(|| AnalysisError::UnknownObservable(observable.to_string()))?;
    fit_series(&traj.times, &v, t0, t1, floor)
}

/// Worst diagnostics of one propagation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub max_trace_error: f64,
    pub hermiticity_drift: f64,
    pub min_eigenvalue: f64,
    pub truncation_leak: bool,
    pub accepted_steps: usize,
}

impl RunDiagnostics {
    pub fn of(traj: &Trajectory) -> Self {
        RunDiagnostics {
            max_trace_error: traj.max_trace_error(),
            hermiticity_drift: traj.hermiticity_drift,
            min_eigenvalue: traj.min_eigenvalue(),
            truncation_leak: traj.leak.is_some(),
            accepted_steps: traj.accepted_steps,
        }
    }

    pub fn within_limits(&self) -> bool {
        self.max_trace_error < 1e-8 && self.hermiticity_drift < 1e-10 && self.min_eigenvalue > -1e-7
    }

    pub fn worst(self, o: RunDiagnostics) -> RunDiagnostics {
        RunDiagnostics {
            max_trace_error: self.max_trace_error.max(o.max_trace_error),
            hermiticity_drift: self.hermiticity_drift.max(o.hermiticity_drift),
            min_eigenvalue: self.min_eigenvalue.min(o.min_eigenvalue),
            truncation_leak: self.truncation_leak || o.truncation_leak,
            accepted_steps: self.accepted_steps + o.accepted_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: String,
    pub axis_value: f64,
    pub fit: RateFit,
    /// `(κ(x) − κ(x₀)) / κ(x₀)` against the variant's own reference point.
    pub delta_kappa_norm: f64,
    /// `κ / κ_linear`, the rate relative to the `ε = 0` theory.
    pub kappa_ratio: f64,
    pub diagnostics: RunDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub axis_value: f64,
    pub terms: LeadingTerms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: String,
    pub kappa_linear: f64,
    pub rows: Vec<SweepRow>,
    #[serde(default)]
    pub coefficients: Vec<CoefficientRow>,
    /// Analytic single-photon estimate per curve, `(label, axis, ratio)`.
    #[serde(default)]
    pub estimates: Vec<(String, f64, f64)>,
}

impl SweepResult {
    pub fn series(&self, variant: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.variant == variant).collect()
    }

    pub fn diagnostics(&self) -> Option<RunDiagnostics> {
        self.rows.iter().map(|r| r.diagnostics).reduce(RunDiagnostics::worst)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["variant", "axis_value", "kappa", "kappa_err", "delta_kappa_norm", "kappa_ratio"])?;
        let f = |x: f64| format!("{x:.12e}");
        for r in &self.rows {
            out.write_record([
                r.variant.clone(),
                f(r.axis_value),
                f(r.fit.kappa),
                f(r.fit.kappa_err),
                f(r.delta_kappa_norm),
                f(r.kappa_ratio),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_coefficients_csv<W: Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["axis_value", "eta_x_abs", "single_photon", "correlated", "dephasing"])?;
        let f = |x: f64| format!("{x:.12e}");
        for c in &self.coefficients {
            out.write_record([
                f(c.axis_value),
                f(c.terms.eta_x_abs),
                f(c.terms.single_photon),
                f(c.terms.correlated),
                f(c.terms.dephasing),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Model of the two-mode readout sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    Eme(EmeVariant),
    Kerr,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Eme(v) => v.name(),
            ModelKind::Kerr => "kerr",
        }
    }

    pub const POWER_SWEEP: [ModelKind; 5] = [
        ModelKind::Eme(EmeVariant::Full),
        ModelKind::Kerr,
        ModelKind::Eme(EmeVariant::NoCorrelatedAc),
        ModelKind::Eme(EmeVariant::NoDephasing),
        ModelKind::Eme(EmeVariant::SinglePhotonOnly),
    ];
}

/// Shared settings of the two-mode sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoModeSetup {
    pub circuit: CircuitParams,
    /// Truncation for the displaced-frame EME.
    pub eme_truncation: Truncation,
    /// Truncation for the Kerr control, whose cavity holds the coherent drive.
    pub kerr_truncation: Truncation,
    pub t_end: f64,
    pub dt_out: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub bins: BinSelection,
    #[serde(default = "yes")]
    pub include_i4: bool,
}

fn yes() -> bool {
    true
}

impl TwoModeSetup {
    pub fn spectral(&self) -> SpectralDensity {
        SpectralDensity::FlatZeroT {
            kappa_flat: self.circuit.kappa_flat,
        }
    }

    /// Static cross-Kerr `χ_ac`, independent of the drive.
    pub fn chi(&self, nm: &NormalModes) -> Result<f64, AnalysisError> {
        let probe = CircuitParams {
            drive_amp: 0.0,
            drive_freq: 0.0,
            ..self.circuit
        };
        Ok(TwoModeModel::build(nm, &probe)?.heff.chi_ac)
    }

    /// Circuit parameters with drive frequency `ω_d` and amplitude giving `nbar_c`.
    pub fn driven(&self, nm: &NormalModes, omega_d: f64, nbar_c: f64) -> Result<CircuitParams, AnalysisError> {
        let p = CircuitParams {
            drive_freq: omega_d,
            ..self.circuit
        };
        let (kq, kc) = displacement::linear_rates(nm, p.kappa_flat);
        let ed = displacement::drive_amp_for_target_nbar(nbar_c, nm, &p, kq, kc)
            .map_err(EmeError::from)?;
        Ok(CircuitParams { drive_amp: ed, ..p })
    }

    pub fn generator(&self, nm: &NormalModes, p: &CircuitParams, kind: ModelKind) -> Result<MeGenerator, AnalysisError> {
        let sd = self.spectral();
        Ok(match kind {
            ModelKind::Kerr => eme::assemble_kerr_me(nm, p, &sd)?,
            ModelKind::Eme(variant) => {
                let model = TwoModeModel::build(nm, p)?;
                eme::assemble_eme(
                    &model,
                    &sd,
                    &EmeOptions {
                        variant,
                        bins: self.bins,
                        include_i4: self.include_i4,
                    },
                )?
            }
        })
    }

    fn fit_window(&self, nm: &NormalModes) -> (f64, f64) {
        let (_, kc) = displacement::linear_rates(nm, self.circuit.kappa_flat);
        let t0 = self.fit.t_start.unwrap_or(5.0 / kc);
        (t0, self.fit.t_stop.unwrap_or(self.t_end))
    }

    /// Propagate `|1_q 0_c⟩` and fit the qubit decay.
    pub fn run(&self, nm: &NormalModes, p: &CircuitParams, kind: ModelKind) -> Result<(RateFit, RunDiagnostics), AnalysisError> {
        let gen = self.generator(nm, p, kind)?;
        let trunc = match kind {
            ModelKind::Kerr => self.kerr_truncation,
            ModelKind::Eme(_) => self.eme_truncation,
        };
        let traj = lindblad::propagate(&gen, &trunc.fock(1, 0), &trunc, self.t_end, self.dt_out, &self.tolerances)?;
        let (t0, t1) = self.fit_window(nm);
        Ok((fit_rate(&traj, "n_q", t0, t1, self.fit.floor)?, RunDiagnostics::of(&traj)))
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Qubit relaxation versus cavity population at `ω_d = ω_c − detuning_chi·χ`.
pub fn power_sweep(
    setup: &TwoModeSetup,
    nbar_grid: &[f64],
    detuning_chi: f64,
    kinds: &[ModelKind],
    workers: usize,
) -> Result<SweepResult, AnalysisError> {
    if nbar_grid.is_empty() {
        return Err(AnalysisError::EmptyAxis);
    }
    let nm = circuit::normal_modes(&setup.circuit)?;
    let chi = setup.chi(&nm)?;
    let omega_d = nm.omega_c - detuning_chi * chi;
    // the reference point of δκ is always n̄ = 0
    let mut axis: Vec<f64> = vec![0.0];
    axis.extend(nbar_grid.iter().copied().filter(|x| *x != 0.0));
    let jobs: Vec<(usize, ModelKind, f64)> = kinds
        .iter()
        .enumerate()
        .flat_map(|(k, kind)| axis.iter().map(move |x| (k, *kind, *x)))
        .collect();
    let results: Vec<Result<(RateFit, RunDiagnostics), AnalysisError>> = in_pool(workers, || {
        jobs.par_iter()
            .map(|(_, kind, nbar)| {
                let p = setup.driven(&nm, omega_d, *nbar)?;
                setup.run(&nm, &p, *kind)
            })
            .collect()
    });
    let (kq, _) = displacement::linear_rates(&nm, setup.circuit.kappa_flat);
    let mut rows = Vec::new();
    let mut reference = vec![f64::NAN; kinds.len()];
    for ((k, kind, nbar), res) in jobs.iter().zip(results) {
        let (fit, diagnostics) = res?;
        if *nbar == 0.0 {
            reference[*k] = fit.kappa;
        }
        if !nbar_grid.contains(nbar) {
            continue;
        }
        rows.push(SweepRow {
            variant: kind.name().to_string(),
            axis_value: *nbar,
            fit,
            delta_kappa_norm: if *nbar == 0.0 { 0.0 } else { (fit.kappa - reference[*k]) / reference[*k] },
            kappa_ratio: fit.kappa / kq,
            diagnostics,
        });
    }
    Ok(SweepResult {
        axis: "nbar_c".to_string(),
        kappa_linear: kq,
        rows,
        coefficients: Vec::new(),
        estimates: Vec::new(),
    })
}

/// Full EME versus drive detuning at fixed `nbar_c`, with the undriven EME
/// as baseline and the leading coefficient magnitudes.
///
/// `detunings_chi` are values of `(ω_c − ω_d)/χ_ac`.
pub fn detuning_sweep(
    setup: &TwoModeSetup,
    nbar_c: f64,
    detunings_chi: &[f64],
    workers: usize,
) -> Result<SweepResult, AnalysisError> {
    if detunings_chi.is_empty() {
        return Err(AnalysisError::EmptyAxis);
    }
    let nm = circuit::normal_modes(&setup.circuit)?;
    let chi = setup.chi(&nm)?;
    let full = ModelKind::Eme(EmeVariant::Full);
    let undriven = CircuitParams {
        drive_amp: 0.0,
        drive_freq: nm.omega_c - detunings_chi[0] * chi,
        ..setup.circuit
    };
    let (base_fit, base_diag) = setup.run(&nm, &undriven, full)?;
    let results: Vec<Result<(RateFit, RunDiagnostics, LeadingTerms), AnalysisError>> = in_pool(workers, || {
        detunings_chi
            .par_iter()
            .map(|d| {
                let p = setup.driven(&nm, nm.omega_c - d * chi, nbar_c)?;
                let model = TwoModeModel::build(&nm, &p)?;
                let terms = eme::leading_terms(&model, &model.collapse_set(setup.include_i4)?);
                let (fit, diag) = setup.run(&nm, &p, full)?;
                Ok((fit, diag, terms))
            })
            .collect()
    });
    let (kq, _) = displacement::linear_rates(&nm, setup.circuit.kappa_flat);
    let mut rows = vec![SweepRow {
        variant: "undriven".to_string(),
        axis_value: f64::INFINITY,
        fit: base_fit,
        delta_kappa_norm: 0.0,
        kappa_ratio: base_fit.kappa / kq,
        diagnostics: base_diag,
    }];
    let mut coefficients = Vec::new();
    for (d, res) in detunings_chi.iter().zip(results) {
        let (fit, diagnostics, terms) = res?;
        let axis_value = d * chi;
        rows.push(SweepRow {
            variant: full.name().to_string(),
            axis_value,
            fit,
            delta_kappa_norm: (fit.kappa - base_fit.kappa) / base_fit.kappa,
            kappa_ratio: fit.kappa / kq,
            diagnostics,
        });
        coefficients.push(CoefficientRow { axis_value, terms });
    }
    Ok(SweepResult {
        axis: "omega_c_minus_omega_d".to_string(),
        kappa_linear: kq,
        rows,
        coefficients,
        estimates: Vec::new(),
    })
}

/// Settings of the single driven oscillator sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneModeSetup {
    pub omega_q: f64,
    pub q_factor: f64,
    /// `ω_d / ω_q`.
    pub drive_ratio: f64,
    pub bath: BathQuadrature,
    #[serde(default)]
    pub families: OneModeFamilies,
    pub dim: usize,
    /// Propagation time in units of the linear lifetime `1/(2κ)`.
    pub t_end_lifetimes: f64,
    pub samples: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Fit window start as a fraction of the propagation time.
    pub fit_start_fraction: f64,
    #[serde(default = "default_floor")]
    pub fit_floor: f64,
}

impl OneModeSetup {
    pub fn kappa(&self) -> f64 {
        self.omega_q / (2.0 * self.q_factor)
    }

    pub fn params(&self, epsilon: f64, nbar: f64) -> OneModeParams {
        let mut p = OneModeParams {
            omega_q: self.omega_q,
            epsilon,
            omega_d: self.drive_ratio * self.omega_q,
            drive_amp: 0.0,
            kappa: self.kappa(),
            bath: self.bath,
        };
        p.drive_amp = p.drive_for_nbar(nbar);
        p
    }

    pub fn spectral(&self) -> SpectralDensity {
        SpectralDensity::FlatZeroT {
            kappa_flat: self.kappa(),
        }
    }

    pub fn run(&self, epsilon: f64, nbar: f64) -> Result<(RateFit, RunDiagnostics), AnalysisError> {
        let p = self.params(epsilon, nbar);
        let gen = eme::assemble_one_mode(&p, &self.spectral(), &self.families)?;
        self.propagate_and_fit(&gen)
    }

    pub fn run_fock(&self, epsilon: f64, nbar: f64) -> Result<(RateFit, RunDiagnostics), AnalysisError> {
        let p = self.params(epsilon, nbar);
        let gen = eme::assemble_one_mode_fock(&p, &self.spectral(), self.dim)?;
        self.propagate_and_fit(&gen)
    }

    fn propagate_and_fit(&self, gen: &MeGenerator) -> Result<(RateFit, RunDiagnostics), AnalysisError> {
        let trunc = Truncation {
            dim_q: self.dim,
            dim_c: 1,
        };
        let t_end = self.t_end_lifetimes / (2.0 * self.kappa());
        let traj = lindblad::propagate(
            gen,
            &trunc.fock(1, 0),
            &trunc,
            t_end,
            t_end / self.samples as f64,
            &self.tolerances,
        )?;
        let fit = fit_rate(&traj, "n_q", self.fit_start_fraction * t_end, t_end, self.fit_floor)?;
        Ok((fit, RunDiagnostics::of(&traj)))
    }

    /// Single-photon estimate `κ_{1,↓}/κ` from the Fock-resolved rate at `n = 1`.
    pub fn single_photon_estimate(&self, epsilon: f64, nbar: f64) -> f64 {
        let p = self.params(epsilon, nbar);
        let (down, _, _) = eme::fock_rates(&p, &self.spectral(), 1);
        down / (2.0 * self.kappa())
    }
}

/// `κ^EME/κ` versus `n̄` for each `ε`.
pub fn one_mode_sweep(
    setup: &OneModeSetup,
    epsilons: &[f64],
    nbar_grid: &[f64],
    workers: usize,
) -> Result<SweepResult, AnalysisError> {
    if nbar_grid.is_empty() || epsilons.is_empty() {
        return Err(AnalysisError::EmptyAxis);
    }
    let mut axis = vec![0.0];
    axis.extend(nbar_grid.iter().copied().filter(|x| *x != 0.0));
    let jobs: Vec<(usize, f64, f64)> = epsilons
        .iter()
        .enumerate()
        .flat_map(|(k, e)| axis.iter().map(move |x| (k, *e, *x)))
        .collect();
    let results: Vec<Result<(RateFit, RunDiagnostics), AnalysisError>> =
        in_pool(workers, || jobs.par_iter().map(|(_, e, x)| setup.run(*e, *x)).collect());
    let kappa = setup.kappa();
    let mut reference = vec![f64::NAN; epsilons.len()];
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for ((k, eps, nbar), res) in jobs.iter().zip(results) {
        let (fit, diagnostics) = res?;
        if *nbar == 0.0 {
            reference[*k] = fit.kappa;
        }
        if !nbar_grid.contains(nbar) {
            continue;
        }
        let label = format!("eps={eps}");
        estimates.push((label.clone(), *nbar, setup.single_photon_estimate(*eps, *nbar)));
        rows.push(SweepRow {
            variant: label,
            axis_value: *nbar,
            fit,
            delta_kappa_norm: if *nbar == 0.0 { 0.0 } else { (fit.kappa - reference[*k]) / reference[*k] },
            kappa_ratio: fit.kappa / kappa,
            diagnostics,
        });
    }
    Ok(SweepResult {
        axis: "nbar".to_string(),
        kappa_linear: kappa,
        rows,
        coefficients: Vec::new(),
        estimates,
    })
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let syy: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let b = sxy / sxx;
    let a = ym - b * xm;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}
