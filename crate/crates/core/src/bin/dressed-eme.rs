use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use dressed_eme::algebra::Freq;
use dressed_eme::analysis::{self, AnalysisError, ModelKind, TwoModeSetup};
use dressed_eme::circuit::{self, CircuitParams, NormalModes};
use dressed_eme::config::{ConfigError, RunConfig, SimModel};
use dressed_eme::displacement;
use dressed_eme::eme::{self, EmeError, JumpOp, TwoModeModel};
use dressed_eme::lindblad::{self, EngineError};

#[derive(Parser)]
#[command(name = "dressed-eme", version, about = "Effective master equations for driven transmon readout")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration; ignored when --config is given.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Parent directory for the timestamped run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Fig2,
    Fig4,
    Fig5,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Normal-mode frequencies, hybridization and derived scales.
    NormalModes,
    /// Build the dressed collapse operators and dump the generator.
    BuildEme,
    /// Propagate the configured master equation from |1_q 0_c>.
    Simulate,
    /// Run one of the sweep protocols.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Power,
    Detuning,
    OneMode,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Eme(#[from] EmeError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Eme(_) => "eme",
            CliError::Engine(_) => "engine",
            CliError::Analysis(_) => "analysis",
            CliError::Io { .. } => "io",
        }
    }

    fn hint(&self) -> Option<&'static str> {
        let text = self.to_string();
        if text.contains("resonant denominator") || text.contains("coincide numerically") {
            Some("shift drive_freq slightly to avoid commensurate frequencies")
        } else if text.contains("resonant with an undamped mode") {
            Some("set kappa_flat or kappa_c, or detune the drive")
        } else {
            None
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

struct RunDir {
    path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    fn create(parent: &Path, command: &str) -> Result<Self, CliError> {
        let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
        let mut path = parent.join(format!("{stamp}-{command}"));
        let mut k = 1;
        while path.exists() {
            path = parent.join(format!("{stamp}-{command}-{k}"));
            k += 1;
        }
        fs::create_dir_all(&path).map_err(io_err(&path))?;
        Ok(RunDir { path, files: Vec::new() })
    }

    fn create_file(&mut self, name: &str) -> Result<fs::File, CliError> {
        let p = self.path.join(name);
        self.files.push(name.to_string());
        fs::File::create(&p).map_err(io_err(&p))
    }

    fn write_json(&mut self, name: &str, v: &impl Serialize) -> Result<(), CliError> {
        let p = self.path.join(name);
        let text = serde_json::to_string_pretty(v).expect("report serializes");
        fs::write(&p, text).map_err(io_err(&p))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn load_config(cli: &Cli) -> Result<(RunConfig, String), CliError> {
    let (mut cfg, source) = match (&cli.config, cli.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            (RunConfig::from_json(&text)?, path.display().to_string())
        }
        (None, Some(p)) => (RunConfig::preset(p.name())?, format!("preset:{}", p.name())),
        (None, None) => return Err(CliError::Usage("pass --config PATH or --preset NAME".into())),
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        cfg.workers = w;
    }
    Ok((cfg, source))
}

/// Circuit with the drive resolved from `drive` when present.
fn driven_circuit(cfg: &RunConfig, setup: &TwoModeSetup, nm: &NormalModes) -> Result<CircuitParams, CliError> {
    match cfg.drive {
        Some(d) => {
            let chi = setup.chi(nm)?;
            Ok(setup.driven(nm, nm.omega_c - d.detuning_chi * chi, d.nbar_c)?)
        }
        None => Ok(setup.circuit),
    }
}

fn normal_modes_report(cfg: &RunConfig) -> Result<Value, CliError> {
    let (p, nm) = cfg.resolved_circuit()?;
    let setup = cfg.two_mode_setup()?;
    let chi = setup.chi(&nm)?;
    let (kq, kc) = displacement::linear_rates(&nm, p.kappa_flat);
    Ok(json!({
        "omega_q": nm.omega_q,
        "omega_c": nm.omega_c,
        "u": nm.u,
        "v": nm.v,
        "n_crit": circuit::critical_photon_number(&p).ok(),
        "chi_ac": chi,
        "chi_ac_over_omega_c_bar": chi / p.omega_c_bar,
        "q_ratio": nm.q_ratio(),
        "kappa_flat": p.kappa_flat,
        "kappa_q": kq,
        "kappa_c": kc,
        "warning": p.dispersive_warning(),
    }))
}

fn build_eme_report(cfg: &RunConfig) -> Result<Value, CliError> {
    let setup = cfg.two_mode_setup()?;
    let (_, nm) = cfg.resolved_circuit()?;
    let p = driven_circuit(cfg, &setup, &nm)?;
    let model = TwoModeModel::build(&nm, &p)?;
    let set = model.collapse_set(cfg.eme.include_i4)?;
    let gen = eme::assemble_eme(&model, &setup.spectral(), &cfg.eme)?;
    let term_list = |op: &dressed_eme::algebra::OperatorPoly| -> Vec<Value> {
        op.iter()
            .map(|(m, h)| {
                let z = h.get(&Freq::ZERO);
                json!({ "monomial": m.to_string(), "re": z.re, "im": z.im })
            })
            .collect()
    };
    let dissipators: Vec<Value> = gen
        .dissipators
        .iter()
        .map(|d| {
            let terms = match &d.op {
                JumpOp::Poly(op) => term_list(op),
                JumpOp::Entries(e) => e
                    .iter()
                    .map(|(i, j, z)| json!({ "row": i, "col": j, "re": z.re, "im": z.im }))
                    .collect(),
            };
            json!({ "label": d.label, "omega": d.omega, "rate": d.rate, "terms": terms })
        })
        .collect();
    let bins: Vec<Value> = set
        .bins
        .iter()
        .map(|b| json!({ "label": b.label.to_string(), "omega": b.omega, "terms": b.op.len(), "max_abs": b.op.max_abs() }))
        .collect();
    Ok(json!({
        "circuit": p,
        "normal_modes": nm,
        "displacement": model.disp,
        "effective_hamiltonian": model.heff,
        "variant": gen.name,
        "dissipators": dissipators,
        "bins": bins,
        "leading_terms": eme::leading_terms(&model, &set),
    }))
}

fn simulate(cfg: &RunConfig, dir: &mut RunDir) -> Result<Value, CliError> {
    let setup = cfg.two_mode_setup()?;
    let (_, nm) = cfg.resolved_circuit()?;
    let p = driven_circuit(cfg, &setup, &nm)?;
    let (kind, trunc) = match cfg.model {
        SimModel::Eme => (ModelKind::Eme(cfg.eme.variant), setup.eme_truncation),
        SimModel::Kerr => (ModelKind::Kerr, setup.kerr_truncation),
    };
    let gen = setup.generator(&nm, &p, kind)?;
    let traj = lindblad::propagate(&gen, &trunc.fock(1, 0), &trunc, setup.t_end, setup.dt_out, &setup.tolerances)?;
    traj.write_csv(dir.create_file("trajectory.csv")?)?;
    let (_, kc) = displacement::linear_rates(&nm, p.kappa_flat);
    let t0 = cfg.fit.t_start.unwrap_or(5.0 / kc);
    let fit = analysis::fit_rate(&traj, "n_q", t0, cfg.fit.t_stop.unwrap_or(setup.t_end), cfg.fit.floor).ok();
    Ok(json!({
        "model": kind.name(),
        "truncation": trunc,
        "fit": fit,
        "diagnostics": analysis::RunDiagnostics::of(&traj),
        "truncation_leak": traj.leak,
        "rejected_steps": traj.rejected_steps,
    }))
}

fn sweep(cfg: &RunConfig, kind: SweepKind, dir: &mut RunDir) -> Result<Value, CliError> {
    let missing = |name: &str| CliError::Usage(format!("config has no sweep.{name} section"));
    let result = match kind {
        SweepKind::Power => {
            let spec = cfg.sweep.power.as_ref().ok_or_else(|| missing("power"))?;
            let setup = cfg.two_mode_setup()?;
            let r = analysis::power_sweep(&setup, &spec.nbar_grid, spec.detuning_chi, &ModelKind::POWER_SWEEP, cfg.workers)?;
            r.write_csv(dir.create_file("power_sweep.csv")?)?;
            r
        }
        SweepKind::Detuning => {
            let spec = cfg.sweep.detuning.as_ref().ok_or_else(|| missing("detuning"))?;
            let setup = cfg.two_mode_setup()?;
            let r = analysis::detuning_sweep(&setup, spec.nbar_c, &spec.detunings_chi, cfg.workers)?;
            r.write_csv(dir.create_file("detuning_sweep.csv")?)?;
            r.write_coefficients_csv(dir.create_file("coefficients.csv")?)?;
            r
        }
        SweepKind::OneMode => {
            let spec = cfg.sweep.one_mode.as_ref().ok_or_else(|| missing("one_mode"))?;
            let r = analysis::one_mode_sweep(&spec.setup, &spec.epsilons, &spec.nbar_grid, cfg.workers)?;
            r.write_csv(dir.create_file("one_mode_sweep.csv")?)?;
            let mut w = csv::Writer::from_writer(dir.create_file("single_photon_estimate.csv")?);
            let csv_err = |e: csv::Error| CliError::Analysis(AnalysisError::Csv(e));
            w.write_record(["variant", "axis_value", "kappa_ratio"]).map_err(csv_err)?;
            for (label, x, ratio) in &r.estimates {
                w.write_record([label.clone(), format!("{x:.12e}"), format!("{ratio:.12e}")])
                    .map_err(csv_err)?;
            }
            w.flush().map_err(|e| CliError::Analysis(AnalysisError::Io(e)))?;
            r
        }
    };
    Ok(json!({
        "axis": result.axis,
        "kappa_linear": result.kappa_linear,
        "rows": result.rows,
        "coefficients": result.coefficients,
        "diagnostics": result.diagnostics(),
    }))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let (cfg, source) = load_config(cli)?;
    let command = match &cli.command {
        Command::NormalModes => "normal-modes",
        Command::BuildEme => "build-eme",
        Command::Simulate => "simulate",
        Command::Sweep { kind: SweepKind::Power } => "sweep-power",
        Command::Sweep { kind: SweepKind::Detuning } => "sweep-detuning",
        Command::Sweep { kind: SweepKind::OneMode } => "sweep-one-mode",
    };
    let parent = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let mut dir = RunDir::create(&parent, command)?;
    let started = chrono::Local::now().to_rfc3339();
    let report = match &cli.command {
        Command::NormalModes => normal_modes_report(&cfg)?,
        Command::BuildEme => build_eme_report(&cfg)?,
        Command::Simulate => simulate(&cfg, &mut dir)?,
        Command::Sweep { kind } => sweep(&cfg, *kind, &mut dir)?,
    };
    dir.write_json("report.json", &report)?;
    let manifest = json!({
        "command": command,
        "config_source": source,
        "config": cfg,
        "version": env!("CARGO_PKG_VERSION"),
        "started": started,
        "finished": chrono::Local::now().to_rfc3339(),
        "files": dir.files,
    });
    dir.write_json("manifest.json", &manifest)?;
    // A closed pipe (`| head`) is not an error for a report dump.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    eprintln!("outputs written to {}", dir.path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({ "error": e.kind(), "message": e.to_string(), "hint": e.hint() });
            eprintln!("{body}");
            ExitCode::from(match e {
                CliError::Usage(_) | CliError::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
