//! Frequency binning of dressed quadratures and assembly of the master
//! equation generators: full two-mode EME, Kerr-only control and one-mode EME.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraError, Freq, FreqBasis, Harmonics, Monomial, OperatorPoly, C64};
use crate::circuit::{CircuitParams, NormalModes};
use crate::displacement::{self, DisplacementData, DisplacementError};
use crate::sw::{self, EffectiveHamiltonian, GeneratorError, Nonlinearity, QuarticExpansion};

/// Relative tolerance for distinct labels landing on the same frequency.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmeError {
    #[error("frequency labels {a} and {b} coincide numerically ({value:.6e}); choose a non-commensurate drive")]
    AccidentalDegeneracy { a: Freq, b: Freq, value: f64 },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Displacement(#[from] DisplacementError),
}

/// Bath spectral function `S(ω) = 2κ(ω)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectralDensity {
    /// `2κ` for `ω > 0`, zero otherwise.
    FlatZeroT { kappa_flat: f64 },
    /// `2κ` at every frequency.
    FlatAll { kappa_flat: f64 },
}

impl SpectralDensity {
    pub fn eval(&self, omega: f64) -> f64 {
        match *self {
            SpectralDensity::FlatZeroT { kappa_flat } => {
                if omega > 0.0 {
                    2.0 * kappa_flat
                } else {
                    0.0
                }
            }
            SpectralDensity::FlatAll { kappa_flat } => 2.0 * kappa_flat,
        }
    }

    pub fn kappa_flat(&self) -> f64 {
        match *self {
            SpectralDensity::FlatZeroT { kappa_flat } | SpectralDensity::FlatAll { kappa_flat } => {
                kappa_flat
            }
        }
    }
}

/// Operator at one transition frequency: the energy it removes from the system.
#[derive(Clone, Debug, PartialEq)]
pub struct Bin {
    pub label: Freq,
    pub omega: f64,
    pub op: OperatorPoly,
}

/// Interaction-picture decomposition `Σ_j C(ω_j) e^{-iω_j t}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CollapseSet {
    pub basis: FreqBasis,
    pub bins: Vec<Bin>,
}

impl CollapseSet {
    pub fn get(&self, label: Freq) -> Option<&Bin> {
        self.bins.iter().find(|b| b.label == label)
    }

    /// Dense reconstruction at time `t` in the interaction picture.
    pub fn reconstruct(&self, t: f64, dims: (usize, usize)) -> Result<DMatrix<C64>, AlgebraError> {
        let n = dims.0 * dims.1;
        let mut out = DMatrix::zeros(n, n);
        for b in &self.bins {
            let phase = C64::from_polar(1.0, -b.omega * t);
            out += b.op.to_matrix(0.0, &self.basis, dims)? * phase;
        }
        Ok(out)
    }
}

/// Group the dressed operator by transition frequency. A term with coefficient
/// harmonic `ν` on a monomial with number shift `s` oscillates as
/// `e^{i(ν+s)t}` under free evolution, so it lands in bin `−(ν+s)`.
pub fn bin_by_frequency(
    dressed: &OperatorPoly,
    basis: &FreqBasis,
    scale: f64,
) -> Result<CollapseSet, EmeError> {
    let mut bins: BTreeMap<Freq, OperatorPoly> = BTreeMap::new();
    let cutoff = 1e-14 * dressed.max_abs();
    // c-number parts couple only to the bath and never act on the system
    for (mono, h) in dressed.iter().filter(|(m, _)| **m != Monomial::IDENTITY) {
        for (f, z) in h.iter() {
            if z.norm() <= cutoff {
                continue;
            }
            let label = -(*f + mono.shift());
            bins.entry(label)
                .or_default()
                .add_term(*mono, &Harmonics::constant(*z));
        }
    }
    let labels: Vec<Freq> = bins.keys().copied().collect();
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            let (va, vb) = (a.value(basis), b.value(basis));
            if (va - vb).abs() < DEGENERACY_TOL * scale {
                return Err(EmeError::AccidentalDegeneracy {
                    a: *a,
                    b: *b,
                    value: va,
                });
            }
        }
    }
    Ok(CollapseSet {
        basis: *basis,
        bins: bins
            .into_iter()
            .map(|(label, op)| Bin {
                label,
                omega: label.value(basis),
                op,
            })
            .collect(),
    })
}

/// Coarse classification of a collapse-operator monomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermFamily {
    /// `a`, `a†`, `c`, `c†`.
    SinglePhoton,
    /// One qubit and one cavity ladder operator, e.g. `a c`, `a c†`.
    Correlated,
    /// Number-conserving, e.g. `a†a`.
    Dephasing,
    /// Everything else: state-dependent and multi-photon terms.
    Other,
}

impl TermFamily {
    pub fn of(m: &Monomial) -> TermFamily {
        if m.degree() == 1 {
            TermFamily::SinglePhoton
        } else if m.m + m.n == 1 && m.p + m.q == 1 {
            TermFamily::Correlated
        } else if m.is_number_conserving() {
            TermFamily::Dephasing
        } else {
            TermFamily::Other
        }
    }
}

/// Which terms of the two-mode EME are kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmeVariant {
    Full,
    NoCorrelatedAc,
    NoDephasing,
    SinglePhotonOnly,
}

impl EmeVariant {
    pub fn keeps(&self, fam: TermFamily) -> bool {
        match self {
            EmeVariant::Full => true,
            EmeVariant::NoCorrelatedAc => fam != TermFamily::Correlated,
            EmeVariant::NoDephasing => fam != TermFamily::Dephasing,
            EmeVariant::SinglePhotonOnly => fam == TermFamily::SinglePhoton,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EmeVariant::Full => "eme_full",
            EmeVariant::NoCorrelatedAc => "no_correlated_ac",
            EmeVariant::NoDephasing => "no_dephasing",
            EmeVariant::SinglePhotonOnly => "single_photon_only",
        }
    }
}

/// Which positive-frequency bins become dissipators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinSelection {
    /// Only the bins at exactly `ω_q` and `ω_c`.
    ModeFrequencies,
    /// Every bin with nonzero rate.
    #[default]
    AllPositive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmeOptions {
    pub variant: EmeVariant,
    #[serde(default)]
    pub bins: BinSelection,
    #[serde(default = "default_true")]
    pub include_i4: bool,
}

fn default_true() -> bool {
    true
}

impl Default for EmeOptions {
    fn default() -> Self {
        EmeOptions {
            variant: EmeVariant::Full,
            bins: BinSelection::AllPositive,
            include_i4: true,
        }
    }
}

/// Jump operator in either symbolic or explicit matrix form.
#[derive(Clone, Debug, PartialEq)]
pub enum JumpOp {
    Poly(OperatorPoly),
    /// Explicit `(row, col, value)` entries on the full truncated basis.
    Entries(Vec<(usize, usize, C64)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dissipator {
    pub label: String,
    pub omega: f64,
    pub rate: f64,
    pub op: JumpOp,
}

/// `ρ̇ = −i[H(t), ρ] + Σ rate·D[op]ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeGenerator {
    pub name: String,
    pub basis: FreqBasis,
    pub hamiltonian: OperatorPoly,
    pub dissipators: Vec<Dissipator>,
}

/// Rotate `op` so its largest single-photon coefficient (or largest overall,
/// if none) is real and positive. Leaves `D[op]` unchanged.
pub fn normalize_phase(op: &OperatorPoly) -> OperatorPoly {
    let lead = |single: bool| {
        op.iter()
            .filter(|(m, _)| !single || m.degree() == 1)
            .map(|(_, h)| h.get(&Freq::ZERO))
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
    };
    match lead(true).or_else(|| lead(false)) {
        Some(z) if z.norm() > 0.0 => op.scale(z.conj() / z.norm()),
        _ => op.clone(),
    }
}

/// Symbolic pieces of the two-mode construction at one operating point.
#[derive(Clone, Debug)]
pub struct TwoModeModel {
    pub nm: NormalModes,
    pub params: CircuitParams,
    pub disp: DisplacementData,
    pub qe: QuarticExpansion,
    pub heff: EffectiveHamiltonian,
    pub g4: OperatorPoly,
    pub i4: OperatorPoly,
}

impl TwoModeModel {
    pub fn build(nm: &NormalModes, params: &CircuitParams) -> Result<Self, EmeError> {
        let (kq, kc) = displacement::linear_rates(nm, params.kappa_flat);
        let disp = displacement::steady_state_displacement(nm, params, kq, kc)?;
        let nl = Nonlinearity::two_mode(nm, &disp, params);
        let qe = sw::expand_displaced_hamiltonian(&nl)?;
        let g4 = sw::solve_generator(&qe)?;
        let i4 = sw::integrated_drive_shift(&qe);
        let heff = sw::effective_hamiltonian(&qe);
        Ok(TwoModeModel {
            nm: *nm,
            params: *params,
            disp,
            qe,
            heff,
            g4,
            i4,
        })
    }

    pub fn basis(&self) -> FreqBasis {
        self.qe.nl.basis
    }

    pub fn dressed(&self, include_i4: bool) -> Result<OperatorPoly, AlgebraError> {
        sw::dressed_quadrature(
            &sw::bath_quadrature(&self.nm),
            &self.g4,
            include_i4.then_some(&self.i4),
            self.params.epsilon,
        )
    }

    pub fn collapse_set(&self, include_i4: bool) -> Result<CollapseSet, EmeError> {
        bin_by_frequency(
            &self.dressed(include_i4)?,
            &self.basis(),
            self.params.omega_c_bar,
        )
    }
}

pub const QUBIT_BIN: Freq = Freq::new(1, 0, 0);
pub const CAVITY_BIN: Freq = Freq::new(0, 1, 0);

/// Full or ablated two-mode EME in the displaced frame.
pub fn assemble_eme(
    model: &TwoModeModel,
    spectral: &SpectralDensity,
    opts: &EmeOptions,
) -> Result<MeGenerator, EmeError> {
    let set = model.collapse_set(opts.include_i4)?;
    let mut dissipators = Vec::new();
    for bin in &set.bins {
        let selected = match opts.bins {
            BinSelection::ModeFrequencies => bin.label == QUBIT_BIN || bin.label == CAVITY_BIN,
            BinSelection::AllPositive => true,
        };
        let rate = spectral.eval(bin.omega);
        if !selected || rate == 0.0 {
            continue;
        }
        let op = bin
            .op
            .filter(|m, _| opts.variant.keeps(TermFamily::of(m)));
        if op.is_zero() {
            continue;
        }
        dissipators.push(Dissipator {
            label: format!("C{}", bin.label),
            omega: bin.omega,
            rate,
            op: JumpOp::Poly(normalize_phase(&op)),
        });
    }
    Ok(MeGenerator {
        name: opts.variant.name().to_string(),
        basis: set.basis,
        hamiltonian: model.heff.operator(true),
        dissipators,
    })
}

/// Static Kerr terms plus the undisplaced drive, with bare dissipators
/// `2κ(ω_q) D[a]` and `2κ(ω_c) D[c]`.
pub fn assemble_kerr_me(
    nm: &NormalModes,
    params: &CircuitParams,
    spectral: &SpectralDensity,
) -> Result<MeGenerator, EmeError> {
    let undriven = CircuitParams {
        drive_amp: 0.0,
        ..*params
    };
    let model = TwoModeModel::build(nm, &undriven)?;
    let heff = model.heff.operator(false);
    let ed = params.drive_amp;
    // ε_d sin(ω_d t) = (ε_d / 2i)(e^{iω_d t} − e^{−iω_d t})
    let sin: Harmonics = [
        (Freq::new(0, 0, 1), C64::new(0.0, -ed / 2.0)),
        (Freq::new(0, 0, -1), C64::new(0.0, ed / 2.0)),
    ]
    .into_iter()
    .collect();
    let drive = sw::bath_quadrature(nm).scale_harmonics(&sin);
    let basis = model.basis();
    let kf = spectral.kappa_flat();
    let (kq, kc) = (kf * nm.v.ca.powi(2), kf * nm.v.cc.powi(2));
    let scale = |omega: f64, k: f64| spectral.eval(omega) / (2.0 * kf) * 2.0 * k;
    let mut dissipators = Vec::new();
    for (label, omega, k, op) in [
        ("a", nm.omega_q, kq, OperatorPoly::a()),
        ("c", nm.omega_c, kc, OperatorPoly::c()),
    ] {
        let rate = if kf > 0.0 { scale(omega, k) } else { 0.0 };
        if rate > 0.0 {
            dissipators.push(Dissipator {
                label: label.to_string(),
                omega,
                rate,
                op: JumpOp::Poly(op),
            });
        }
    }
    Ok(MeGenerator {
        name: "kerr".to_string(),
        basis,
        hamiltonian: heff.add(&drive),
        dissipators,
    })
}

/// Quadrature of the single oscillator that couples to its bath.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathQuadrature {
    /// `X = a + a†`.
    Flux,
    /// `Y = −i(a − a†)`.
    Charge,
}

impl BathQuadrature {
    pub fn operator(&self) -> OperatorPoly {
        match self {
            BathQuadrature::Flux => OperatorPoly::x_q(),
            BathQuadrature::Charge => OperatorPoly::y_q(),
        }
    }
}

/// Dissipator families of the one-mode EME.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneModeFamilies {
    /// Single-photon and dephasing terms in the bin at `ω_q`.
    pub qubit_frequency: bool,
    /// Single-photon and dephasing terms at drive-shifted frequencies.
    pub drive_sidebands: bool,
    /// Terms that change the photon number by two or more.
    pub multi_photon: bool,
}

impl Default for OneModeFamilies {
    fn default() -> Self {
        OneModeFamilies {
            qubit_frequency: true,
            drive_sidebands: true,
            multi_photon: true,
        }
    }
}

impl OneModeFamilies {
    fn keeps(&self, label: Freq, m: &Monomial) -> bool {
        if m.m.abs_diff(m.n) >= 2 {
            self.multi_photon
        } else if label == QUBIT_BIN {
            self.qubit_frequency
        } else {
            self.drive_sidebands
        }
    }
}

/// Driven weakly anharmonic oscillator on its own bath.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneModeParams {
    pub omega_q: f64,
    pub epsilon: f64,
    pub omega_d: f64,
    pub drive_amp: f64,
    pub kappa: f64,
    pub bath: BathQuadrature,
}

impl OneModeParams {
    /// Phase amplitude and linear steady-state population.
    pub fn displacement(&self) -> (C64, f64) {
        let eta = displacement::phase_amplitude(self.drive_amp, self.omega_q, self.omega_d, self.kappa);
        let eta_y = displacement::charge_amplitude(eta, self.omega_q, self.omega_d, self.kappa);
        (eta, displacement::mean_population(eta, eta_y))
    }

    /// Drive amplitude that gives a linear population `nbar`.
    pub fn drive_for_nbar(&self, nbar: f64) -> f64 {
        let unit = OneModeParams {
            drive_amp: 1.0,
            ..*self
        };
        (nbar.max(0.0) / unit.displacement().1).sqrt()
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        Nonlinearity::one_mode(self.omega_q, self.omega_d, self.displacement().0, self.epsilon)
    }

    pub fn collapse_set(&self) -> Result<CollapseSet, EmeError> {
        let nl = self.nonlinearity();
        let qe = sw::expand_displaced_hamiltonian(&nl)?;
        let g4 = sw::solve_generator(&qe)?;
        let i4 = sw::integrated_drive_shift(&qe);
        let dressed = sw::dressed_quadrature(&self.bath.operator(), &g4, Some(&i4), self.epsilon)?;
        bin_by_frequency(&dressed, &nl.basis, self.omega_q)
    }

    pub fn effective_hamiltonian(&self) -> Result<EffectiveHamiltonian, EmeError> {
        Ok(sw::effective_hamiltonian(&sw::expand_displaced_hamiltonian(
            &self.nonlinearity(),
        )?))
    }
}

/// One-mode EME with every bin rated by the spectral density.
pub fn assemble_one_mode(
    p: &OneModeParams,
    spectral: &SpectralDensity,
    families: &OneModeFamilies,
) -> Result<MeGenerator, EmeError> {
    let set = p.collapse_set()?;
    let heff = p.effective_hamiltonian()?;
    let mut dissipators = Vec::new();
    for bin in &set.bins {
        let rate = spectral.eval(bin.omega);
        let op = bin.op.filter(|m, _| families.keeps(bin.label, m));
        if rate == 0.0 || op.is_zero() {
            continue;
        }
        dissipators.push(Dissipator {
            label: format!("C{}", bin.label),
            omega: bin.omega,
            rate,
            op: JumpOp::Poly(normalize_phase(&op)),
        });
    }
    Ok(MeGenerator {
        name: "one_mode_eme".to_string(),
        basis: set.basis,
        hamiltonian: heff.operator(true),
        dissipators,
    })
}

/// Fock-resolved rates `(2κ_↓, 2κ_↑, 2κ_φ)` for level `n`.
///
/// The single-photon factor is `1 ± (ε/4)(n + 2|η|²)`, with `+` for flux
/// coupling and `−` for charge coupling; the transition frequency is shifted
/// by `−(ε/4)(n + 2|η|²) ω_q` in both cases.
pub fn fock_rates(p: &OneModeParams, spectral: &SpectralDensity, n: usize) -> (f64, f64, f64) {
    let (eta, _) = p.displacement();
    let e2 = eta.norm_sqr();
    let (wq, wd, eps) = (p.omega_q, p.omega_d, p.epsilon);
    let nf = n as f64;
    let shift = eps / 4.0 * (nf + 2.0 * e2);
    let sign = match p.bath {
        BathQuadrature::Flux => 1.0,
        BathQuadrature::Charge => -1.0,
    };
    let down = nf * (1.0 + sign * shift) * spectral.eval((1.0 - shift) * wq);
    let up = eps * eps * nf * e2 * e2 / 64.0
        * (spectral.eval(2.0 * wd - wq) * (wq / (wd - wq)).powi(2)
            + spectral.eval(wq) * (2.0 * wd * wd / (wd * wd - wq * wq)).powi(2));
    let deph = eps * eps * e2 * nf * nf / (wd * wd - wq * wq).powi(2)
        * (wd.powi(4) * spectral.eval(wq) + wq.powi(4) * spectral.eval(wd));
    (down, up, deph)
}

/// One-mode EME with explicit Fock-state jump operators on `dim` levels.
pub fn assemble_one_mode_fock(
    p: &OneModeParams,
    spectral: &SpectralDensity,
    dim: usize,
) -> Result<MeGenerator, EmeError> {
    let heff = p.effective_hamiltonian()?;
    let one = C64::new(1.0, 0.0);
    let mut dissipators = Vec::new();
    for n in 0..dim {
        let (down, up, deph) = fock_rates(p, spectral, n);
        let mut push = |label: String, rate: f64, row: usize, col: usize| {
            if rate > 0.0 {
                dissipators.push(Dissipator {
                    label,
                    omega: 0.0,
                    rate,
                    op: JumpOp::Entries(vec![(row, col, one)]),
                });
            }
        };
        if n >= 1 {
            push(format!("down{n}"), down, n - 1, n);
            push(format!("up{n}"), up, n, n - 1);
        }
        push(format!("dephase{n}"), deph, n, n);
    }
    Ok(MeGenerator {
        name: "one_mode_fock".to_string(),
        basis: heff_basis(p),
        hamiltonian: heff.operator(false),
        dissipators,
    })
}

fn heff_basis(p: &OneModeParams) -> FreqBasis {
    p.nonlinearity().basis
}

/// Magnitudes of the leading drive-dependent terms in the mode-frequency bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadingTerms {
    pub eta_x_abs: f64,
    /// `|coefficient of a in C(ω_q)| / |v_ca|`.
    pub single_photon: f64,
    /// Largest of `|a c|`, `|a c†|` in `C(ω_q)`.
    pub correlated: f64,
    /// `|a†a|` in `C(ω_c)`.
    pub dephasing: f64,
}

pub fn leading_terms(model: &TwoModeModel, set: &CollapseSet) -> LeadingTerms {
    let coeff = |label: Freq, m: Monomial| {
        set.get(label)
            .map(|b| b.op.coeff(&m).get(&Freq::ZERO).norm())
            .unwrap_or(0.0)
    };
    LeadingTerms {
        eta_x_abs: model.disp.eta_x.norm(),
        single_photon: coeff(QUBIT_BIN, Monomial::new(0, 1, 0, 0)) / model.nm.v.ca.abs(),
        correlated: coeff(QUBIT_BIN, Monomial::new(0, 1, 0, 1))
            .max(coeff(QUBIT_BIN, Monomial::new(0, 1, 1, 0))),
        dephasing: coeff(CAVITY_BIN, Monomial::new(1, 1, 0, 0)),
    }
}

/// Distinct labels present in the set.
pub fn labels(set: &CollapseSet) -> BTreeSet<Freq> {
    set.bins.iter().map(|b| b.label).collect()
}
