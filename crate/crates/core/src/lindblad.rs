//! Dense density-matrix propagation of time-dependent Lindblad generators.
//!
//! Propagation runs in the interaction picture of `ω_q n_q + ω_c n_c`, an
//! exact frame change that leaves only slow dynamics plus the explicitly
//! oscillating drive and AC-Stark terms. Collapse operators whose terms share
//! a single frequency in that frame become time-independent; the rest are
//! re-evaluated at every stage.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AlgebraError, FreqBasis, Monomial, OperatorPoly, C64};
use crate::eme::{JumpOp, MeGenerator};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("adaptive step size collapsed at t = {t:.6e} (h = {h:.3e}, {rejected} rejections)")]
    AdaptiveFailure { t: f64, h: f64, rejected: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("truncation {dim_q}x{dim_c} exceeds the cap of {cap} states")]
    TruncationTooLarge { dim_q: usize, dim_c: usize, cap: usize },
    #[error("invalid initial state: {0}")]
    InvalidState(String),
    #[error("invalid time grid: t_end = {t_end}, dt_out = {dt_out}")]
    InvalidTimeGrid { t_end: f64, dt_out: f64 },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("csv export failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Fock truncation of both modes; one-mode problems use `dim_c = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub dim_q: usize,
    pub dim_c: usize,
}

impl Truncation {
    pub const DEFAULT_CAP: usize = 64;

    pub fn total(&self) -> usize {
        self.dim_q * self.dim_c
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_q, self.dim_c)
    }

    pub fn check(&self, cap: usize) -> Result<(), EngineError> {
        if self.dim_q == 0 || self.dim_c == 0 || self.total() > cap {
            return Err(EngineError::TruncationTooLarge {
                dim_q: self.dim_q,
                dim_c: self.dim_c,
                cap,
            });
        }
        Ok(())
    }

    /// Basis index of `|n_q, n_c⟩`.
    pub fn index(&self, nq: usize, nc: usize) -> usize {
        nq * self.dim_c + nc
    }

    pub fn fock(&self, nq: usize, nc: usize) -> DMatrix<C64> {
        let n = self.total();
        let mut rho = DMatrix::zeros(n, n);
        let i = self.index(nq, nc);
        rho[(i, i)] = C64::new(1.0, 0.0);
        rho
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on accepted plus rejected steps.
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 50_000_000,
        }
    }
}

/// Row-compressed sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOp {
    pub dim: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

impl SparseOp {
    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != C64::new(0.0, 0.0))
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        SparseOp { dim: m.nrows(), rows }
    }

    pub fn from_entries(dim: usize, entries: &[(usize, usize, C64)]) -> Self {
        let mut rows = vec![Vec::new(); dim];
        for &(i, j, z) in entries {
            rows[i].push((j, z));
        }
        SparseOp { dim, rows }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, z) in row {
                m[(i, j)] += z;
            }
        }
        m
    }

    /// `out += γ · C ρ C†`, using `work` as scratch.
    fn sandwich_add(&self, rho: &DMatrix<C64>, gamma: f64, work: &mut DMatrix<C64>, out: &mut DMatrix<C64>) {
        let n = self.dim;
        work.fill(C64::new(0.0, 0.0));
        // work = C ρ
        for (i, row) in self.rows.iter().enumerate() {
            for &(l, z) in row {
                for k in 0..n {
                    work[(i, k)] += z * rho[(l, k)];
                }
            }
        }
        // out += γ work C†, (work C†)_{ik} = Σ_l work_il conj(C_kl)
        for (k, row) in self.rows.iter().enumerate() {
            for &(l, z) in row {
                let zc = z.conj() * gamma;
                for i in 0..n {
                    out[(i, k)] += work[(i, l)] * zc;
                }
            }
        }
    }
}

/// Operator `Σ_k M_k e^{iν_k t}` with dense static parts per frequency.
#[derive(Clone, Debug)]
struct TimeOp {
    parts: Vec<(f64, DMatrix<C64>)>,
}

impl TimeOp {
    fn eval_into(&self, t: f64, out: &mut DMatrix<C64>) {
        out.fill(C64::new(0.0, 0.0));
        for (nu, m) in &self.parts {
            let ph = C64::from_polar(1.0, nu * t);
            out.zip_apply(m, |o, x| *o += x * ph);
        }
    }
}

enum CompiledJump {
    Constant(SparseOp),
    Varying(TimeOp),
}

struct CompiledDissipator {
    rate: f64,
    jump: CompiledJump,
}

/// Rotate a Schrödinger-frame operator into the interaction picture of the
/// mode frequencies.
fn to_mode_frame(op: &OperatorPoly) -> OperatorPoly {
    op.map_coeffs(|m, h| h.shift(m.shift()))
}

fn compile_poly(op: &OperatorPoly, basis: &FreqBasis, trunc: &Truncation) -> Result<Vec<(f64, DMatrix<C64>)>, EngineError> {
    let zero = FreqBasis {
        omega_q: 0.0,
        omega_c: 0.0,
        omega_d: 0.0,
    };
    let mut parts: Vec<(f64, DMatrix<C64>)> = Vec::new();
    for (f, piece) in op.by_harmonic() {
        let nu = f.value(basis);
        let m = piece.to_matrix(0.0, &zero, trunc.dims())?;
        match parts.iter_mut().find(|(v, _)| *v == nu) {
            Some((_, acc)) => *acc += m,
            None => parts.push((nu, m)),
        }
    }
    Ok(parts)
}

/// Generator lowered to matrices on a truncation.
pub struct CompiledGenerator {
    pub trunc: Truncation,
    basis: FreqBasis,
    /// Hamiltonian in the mode frame, by frequency.
    ham: Vec<(f64, DMatrix<C64>)>,
    /// `Σ γ C†C` over constant dissipators.
    decay_const: DMatrix<C64>,
    dissipators: Vec<CompiledDissipator>,
}

impl CompiledGenerator {
    pub fn new(gen: &MeGenerator, trunc: &Truncation) -> Result<Self, EngineError> {
        let basis = gen.basis;
        let n = trunc.total();
        let mut frame = OperatorPoly::n_q().scale_real(basis.omega_q);
        if basis.omega_c != 0.0 {
            frame = frame.add(&OperatorPoly::n_c().scale_real(basis.omega_c));
        }
        let h = to_mode_frame(&gen.hamiltonian.sub(&frame))
            .filter(|m, _| *m != Monomial::IDENTITY);
        let ham = compile_poly(&h, &basis, trunc)?;
        let mut decay_const = DMatrix::zeros(n, n);
        let mut dissipators = Vec::new();
        for d in &gen.dissipators {
            let jump = match &d.op {
                JumpOp::Entries(e) => CompiledJump::Constant(SparseOp::from_entries(n, e)),
                JumpOp::Poly(p) => {
                    let parts = compile_poly(&to_mode_frame(p), &basis, trunc)?;
                    match parts.len() {
                        0 => continue,
                        // a single common frequency is a global phase
                        1 => CompiledJump::Constant(SparseOp::from_dense(&parts[0].1)),
                        _ => CompiledJump::Varying(TimeOp { parts }),
                    }
                }
            };
            if let CompiledJump::Constant(c) = &jump {
                let cd = c.to_dense();
                decay_const += cd.adjoint() * &cd * C64::new(d.rate, 0.0);
            }
            dissipators.push(CompiledDissipator { rate: d.rate, jump });
        }
        Ok(CompiledGenerator {
            trunc: *trunc,
            basis,
            ham,
            decay_const,
            dissipators,
        })
    }

    pub fn dim(&self) -> usize {
        self.trunc.total()
    }

    /// Fastest explicit frequency in the mode frame.
    pub fn max_frequency(&self) -> f64 {
        let mut w = self.ham.iter().map(|(nu, _)| nu.abs()).fold(0.0, f64::max);
        for d in &self.dissipators {
            if let CompiledJump::Varying(op) = &d.jump {
                for (nu, _) in &op.parts {
                    w = w.max(nu.abs());
                }
            }
        }
        w
    }

    /// `out = L(t) ρ` in the mode frame.
    fn apply(&self, t: f64, rho: &DMatrix<C64>, ws: &mut Workspace, out: &mut DMatrix<C64>) {
        // H_nh = H(t) − (i/2) Σ γ C†C
        let half_i = C64::new(0.0, 0.5);
        ws.hnh.fill(C64::new(0.0, 0.0));
        for (nu, m) in &self.ham {
            let ph = C64::from_polar(1.0, nu * t);
            ws.hnh.zip_apply(m, |o, x| *o += x * ph);
        }
        ws.hnh.zip_apply(&self.decay_const, |o, x| *o -= x * half_i);
        for d in &self.dissipators {
            if let CompiledJump::Varying(op) = &d.jump {
                op.eval_into(t, &mut ws.tmp);
                ws.tmp2.gemm_ad(C64::new(d.rate, 0.0), &ws.tmp, &ws.tmp, C64::new(0.0, 0.0));
                ws.hnh.zip_apply(&ws.tmp2, |o, x| *o -= x * half_i);
            }
        }
        // out = −i H_nh ρ + i ρ H_nh†
        let mi = C64::new(0.0, -1.0);
        out.gemm(mi, &ws.hnh, rho, C64::new(0.0, 0.0));
        // ρ H_nh† = (H_nh ρ)† for Hermitian ρ
        for i in 0..out.nrows() {
            for j in 0..=i {
                let a = out[(i, j)];
                let b = out[(j, i)];
                out[(i, j)] = a + b.conj();
                if i != j {
                    out[(j, i)] = b + a.conj();
                } else {
                    out[(i, i)] = C64::new(2.0 * a.re, 0.0);
                }
            }
        }
        for d in &self.dissipators {
            match &d.jump {
                CompiledJump::Constant(c) => c.sandwich_add(rho, d.rate, &mut ws.tmp, out),
                CompiledJump::Varying(op) => {
                    op.eval_into(t, &mut ws.tmp);
                    ws.tmp2.gemm(C64::new(1.0, 0.0), &ws.tmp, rho, C64::new(0.0, 0.0));
                    let cd = ws.tmp.adjoint();
                    out.gemm(C64::new(d.rate, 0.0), &ws.tmp2, &cd, C64::new(1.0, 0.0));
                }
            }
        }
    }

    /// Right-hand side at `t` for a Hermitian `ρ` given in the mode frame.
    pub fn rhs(&self, t: f64, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let mut ws = Workspace::new(self.dim());
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        self.apply(t, rho, &mut ws, &mut out);
        out
    }

    /// Diagonal of `ω_q n_q + ω_c n_c`.
    fn frame_energies(&self) -> Vec<f64> {
        let tr = self.trunc;
        (0..tr.dim_q)
            .flat_map(|nq| (0..tr.dim_c).map(move |nc| (nq, nc)))
            .map(|(nq, nc)| nq as f64 * self.basis.omega_q + nc as f64 * self.basis.omega_c)
            .collect()
    }

    /// `e^{∓iH_R t}` applied on both sides; `to_lab` selects the direction.
    fn change_frame(&self, rho: &DMatrix<C64>, t: f64, to_lab: bool) -> DMatrix<C64> {
        let e = self.frame_energies();
        let s = if to_lab { -1.0 } else { 1.0 };
        DMatrix::from_fn(rho.nrows(), rho.ncols(), |i, j| {
            rho[(i, j)] * C64::from_polar(1.0, s * (e[i] - e[j]) * t)
        })
    }
}

struct Workspace {
    hnh: DMatrix<C64>,
    tmp: DMatrix<C64>,
    tmp2: DMatrix<C64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            hnh: DMatrix::zeros(n, n),
            tmp: DMatrix::zeros(n, n),
            tmp2: DMatrix::zeros(n, n),
        }
    }
}

/// Population in the top two Fock levels exceeded the leak threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationLeak {
    pub time: f64,
    pub qubit_top: f64,
    pub cavity_top: f64,
}

pub const LEAK_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub n_q: Vec<C64>,
    pub n_c: Vec<C64>,
    pub trace: Vec<C64>,
    pub purity: Vec<C64>,
    pub trace_error: Vec<f64>,
    pub min_eig: Vec<f64>,
    /// Largest `‖ρ − ρ†‖` seen before re-Hermitization.
    pub hermiticity_drift: f64,
    pub leak: Option<TruncationLeak>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Final state in the Schrödinger frame.
    pub final_rho: DMatrix<C64>,
}

impl Trajectory {
    pub fn max_trace_error(&self) -> f64 {
        self.trace_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let re = |v: &[C64]| v.iter().map(|z| z.re).collect();
        match name {
            "n_q" => Some(re(&self.n_q)),
            "n_c" => Some(re(&self.n_c)),
            "purity" => Some(re(&self.purity)),
            _ => None,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EngineError> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| EngineError::Io(e.into());
        out.write_record([
            "time", "n_q_re", "n_q_im", "n_c_re", "n_c_im", "trace_re", "trace_im", "purity_re", "purity_im",
            "trace_error", "min_eig",
        ])
        .map_err(err)?;
        for i in 0..self.times.len() {
            let f = |x: f64| format!("{x:.12e}");
            out.write_record([
                f(self.times[i]),
                f(self.n_q[i].re),
                f(self.n_q[i].im),
                f(self.n_c[i].re),
                f(self.n_c[i].im),
                f(self.trace[i].re),
                f(self.trace[i].im),
                f(self.purity[i].re),
                f(self.purity[i].im),
                f(self.trace_error[i]),
                f(self.min_eig[i]),
            ])
            .map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `Tr[ρ op(t)]`.
pub fn expectation(
    rho: &DMatrix<C64>,
    op: &OperatorPoly,
    t: f64,
    basis: &FreqBasis,
    trunc: &Truncation,
) -> Result<C64, EngineError> {
    if rho.nrows() != trunc.total() || rho.ncols() != trunc.total() {
        return Err(EngineError::DimensionMismatch {
            expected: trunc.total(),
            got: rho.nrows(),
        });
    }
    let m = op.to_matrix(t, basis, trunc.dims())?;
    Ok((rho * m).trace())
}

fn number_diagonals(trunc: &Truncation) -> (Vec<f64>, Vec<f64>) {
    let mut nq = Vec::new();
    let mut nc = Vec::new();
    for q in 0..trunc.dim_q {
        for c in 0..trunc.dim_c {
            nq.push(q as f64);
            nc.push(c as f64);
        }
    }
    (nq, nc)
}

fn validate_state(rho: &DMatrix<C64>, n: usize) -> Result<(), EngineError> {
    if rho.nrows() != n || rho.ncols() != n {
        return Err(EngineError::DimensionMismatch {
            expected: n,
            got: rho.nrows(),
        });
    }
    if (rho.trace() - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(EngineError::InvalidState("trace is not 1".into()));
    }
    if (rho - rho.adjoint()).norm() > 1e-12 {
        return Err(EngineError::InvalidState("not Hermitian".into()));
    }
    let min = SymmetricEigen::new(rho.clone()).eigenvalues.min();
    if min < -1e-10 {
        return Err(EngineError::InvalidState(format!("negative eigenvalue {min:.3e}")));
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B_ERR: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

fn hermitize(m: &mut DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut drift: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let a = m[(i, j)];
            let b = m[(j, i)].conj();
            drift = drift.max((a - b).norm());
            let avg = (a + b) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    drift
}

/// Integrate `gen` from `rho0` (Schrödinger frame, `t = 0`) to `t_end`,
/// sampling every `dt_out`.
pub fn propagate(
    gen: &MeGenerator,
    rho0: &DMatrix<C64>,
    trunc: &Truncation,
    t_end: f64,
    dt_out: f64,
    tol: &Tolerances,
) -> Result<Trajectory, EngineError> {
    trunc.check(Truncation::DEFAULT_CAP)?;
    let compiled = CompiledGenerator::new(gen, trunc)?;
    propagate_compiled(&compiled, rho0, t_end, dt_out, tol)
}

pub fn propagate_compiled(
    gen: &CompiledGenerator,
    rho0: &DMatrix<C64>,
    t_end: f64,
    dt_out: f64,
    tol: &Tolerances,
) -> Result<Trajectory, EngineError> {
    if !(t_end > 0.0 && dt_out > 0.0 && t_end.is_finite() && dt_out.is_finite()) {
        return Err(EngineError::InvalidTimeGrid { t_end, dt_out });
    }
    let n = gen.dim();
    validate_state(rho0, n)?;
    let trunc = gen.trunc;
    let (dq, dn) = number_diagonals(&trunc);
    let n_out = (t_end / dt_out).round() as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n_out + 1),
        n_q: Vec::new(),
        n_c: Vec::new(),
        trace: Vec::new(),
        purity: Vec::new(),
        trace_error: Vec::new(),
        min_eig: Vec::new(),
        hermiticity_drift: 0.0,
        leak: None,
        accepted_steps: 0,
        rejected_steps: 0,
        final_rho: rho0.clone(),
    };
    let record = |traj: &mut Trajectory, t: f64, rho: &DMatrix<C64>| {
        let diag: Vec<f64> = (0..n).map(|i| rho[(i, i)].re).collect();
        let tr = rho.trace();
        traj.times.push(t);
        traj.n_q.push(C64::new(diag.iter().zip(&dq).map(|(p, k)| p * k).sum(), 0.0));
        traj.n_c.push(C64::new(diag.iter().zip(&dn).map(|(p, k)| p * k).sum(), 0.0));
        traj.trace.push(tr);
        traj.purity.push((rho * rho).trace());
        traj.trace_error.push((tr - C64::new(1.0, 0.0)).norm());
        traj.min_eig.push(SymmetricEigen::new(rho.clone()).eigenvalues.min());
        if traj.leak.is_none() {
            let top = |q_mode: bool| -> f64 {
                (0..n)
                    .filter(|&i| {
                        let (q, c) = (i / trunc.dim_c, i % trunc.dim_c);
                        if q_mode {
                            trunc.dim_q > 2 && q + 2 >= trunc.dim_q
                        } else {
                            trunc.dim_c > 2 && c + 2 >= trunc.dim_c
                        }
                    })
                    .map(|i| diag[i])
                    .sum()
            };
            let (qt, ct) = (top(true), top(false));
            if qt > LEAK_THRESHOLD || ct > LEAK_THRESHOLD {
                traj.leak = Some(TruncationLeak {
                    time: t,
                    qubit_top: qt,
                    cavity_top: ct,
                });
            }
        }
    };

    let mut rho = gen.change_frame(rho0, 0.0, false);
    record(&mut traj, 0.0, &rho);
    let mut ws = Workspace::new(n);
    let mut k: Vec<DMatrix<C64>> = (0..7).map(|_| DMatrix::zeros(n, n)).collect();
    let mut stage = DMatrix::zeros(n, n);
    let mut err = DMatrix::zeros(n, n);
    let w_max = gen.max_frequency().max(1e-3);
    let mut h = (0.05 / w_max).min(dt_out);
    let mut t = 0.0;
    gen.apply(t, &rho, &mut ws, &mut k[0]);
    for i_out in 1..=n_out {
        let t_target = (i_out as f64 * dt_out).min(t_end);
        while t < t_target {
            if traj.accepted_steps + traj.rejected_steps >= tol.max_steps || h < 1e-12 * t_end.max(1.0) {
                return Err(EngineError::AdaptiveFailure {
                    t,
                    h,
                    rejected: traj.rejected_steps,
                });
            }
            let last = t + h >= t_target;
            let hs = if last { t_target - t } else { h };
            for s in 1..7 {
                stage.copy_from(&rho);
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        stage.zip_apply(kj, |x, y| *x += y * (a * hs));
                    }
                }
                gen.apply(t + C[s] * hs, &stage, &mut ws, &mut k[s]);
            }
            // stage now holds the 5th-order solution (row 6 of A equals b)
            err.fill(C64::new(0.0, 0.0));
            for (j, kj) in k.iter().enumerate() {
                let b = B_ERR[j];
                if b != 0.0 {
                    err.zip_apply(kj, |x, y| *x += y * (b * hs));
                }
            }
            let mut sq = 0.0;
            for ((e, y0), y1) in err.iter().zip(rho.iter()).zip(stage.iter()) {
                let sc = tol.atol + tol.rtol * y0.norm().max(y1.norm());
                sq += (e.norm() / sc).powi(2);
            }
            let enorm = (sq / (n * n) as f64).sqrt();
            if enorm <= 1.0 {
                t = if last { t_target } else { t + hs };
                rho.copy_from(&stage);
                traj.hermiticity_drift = traj.hermiticity_drift.max(hermitize(&mut rho));
                k.swap(0, 6);
                traj.accepted_steps += 1;
                let fac = if enorm == 0.0 { 5.0 } else { (0.9 * enorm.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = hs * fac;
                }
                if last {
                    // k[0] must match the re-Hermitized state
                    gen.apply(t, &rho, &mut ws, &mut k[0]);
                }
            } else {
                traj.rejected_steps += 1;
                h = hs * (0.9 * enorm.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        record(&mut traj, t, &rho);
    }
    traj.final_rho = gen.change_frame(&rho, t, true);
    Ok(traj)
}
