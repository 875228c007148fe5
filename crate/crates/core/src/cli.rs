//! Configuration-driven experiment runner behind the `emlab` binary.
//!
//! Every subcommand reads an optional JSON config (one file may hold the
//! blocks for all subcommands), runs deterministically for a fixed
//! `(config, seed)`, and writes CSV/JSON artifacts plus a run manifest into
//! the output directory.  Files are staged and renamed so a failed run
//! leaves no partial outputs.  CSV cells carry 17 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::{self, DecayBench, GaussianParams};
use crate::lyapunov::{self, KappaWeights, ModulusHistory};
use crate::oracle;
use crate::propagator;
use crate::roots::solve_characteristic;
use crate::sim::{self, InitConfig, Simulation};
use crate::state::SpectralState;
use crate::util::{fnv1a64, log_spaced};
use crate::vec3::{ik_dot, CVec3, Vec3};
use crate::{checks, GAMMA_DEFAULT};

#[derive(Parser, Debug)]
#[command(name = "emlab", version, about = "Frequency-space laboratory for a damped electron fluid coupled to Maxwell's equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Characteristic root sweep: CSV of (kmag, sigma, beta, omega, residual)
    Roots(RunArgs),
    /// Exact linear evolution of one mode over a time list
    Propagate(RunArgs),
    /// Propagator-versus-integrator discrepancy over random cases
    VerifyLinear(RunArgs),
    /// Lyapunov functional diagnostics: equivalence, dissipation, pointwise bound
    Lyapunov(RunArgs),
    /// Decay-rate measurement for Gaussian data
    DecayFit(RunArgs),
    /// Nonlinear pseudo-spectral run with energy diagnostics
    Simulate(RunArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// JSON configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed override (otherwise from the config, default 1)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run the acceptance assertions for this subcommand; nonzero exit on failure
    #[arg(long)]
    pub check: bool,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

// ---------------------------------------------------------------------------
// configuration schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub gamma: Option<f64>,
    #[serde(default)]
    pub roots: RootsConfig,
    #[serde(default)]
    pub propagate: PropagateConfig,
    #[serde(default)]
    pub verify_linear: VerifyLinearConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub decay_fit: DecayFitConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootsConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub count: usize,
}

impl Default for RootsConfig {
    fn default() -> Self {
        RootsConfig { k_min: 1e-3, k_max: 1e3, count: 1000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagateConfig {
    pub k: [f64; 3],
    pub times: Vec<f64>,
    /// One of `random`, `b_only`, `e_transverse`; ignored when `state` given.
    pub generator: String,
    /// Explicit 10-component state as `[re, im]` pairs in the order
    /// `rho, ux, uy, uz, Ex, Ey, Ez, Bx, By, Bz` (projected to compatibility).
    pub state: Option<Vec<[f64; 2]>>,
}

impl Default for PropagateConfig {
    fn default() -> Self {
        PropagateConfig {
            k: [1.0, 0.0, 0.0],
            times: crate::util::linspace(21, 0.0, 10.0),
            generator: "random".into(),
            state: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyLinearConfig {
    pub cases: usize,
    pub k_min: f64,
    pub k_max: f64,
    pub t_max: f64,
    pub tol: f64,
    pub gammas: Vec<f64>,
}

impl Default for VerifyLinearConfig {
    fn default() -> Self {
        VerifyLinearConfig {
            cases: 100,
            k_min: 1e-3,
            k_max: 1e2,
            t_max: 10.0,
            tol: 1e-10,
            gammas: vec![1.4, GAMMA_DEFAULT, 2.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub kappa: [f64; 3],
    pub equivalence_samples: usize,
    pub dissipation_modes: usize,
    pub k_range_equivalence: [f64; 2],
    /// The 1e-3 finite-difference step bounds the usable wavenumbers here.
    pub k_range_dissipation: [f64; 2],
    pub t_end: f64,
    pub bound_trajectories: usize,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        let k = KappaWeights::default();
        LyapunovConfig {
            kappa: [k.kappa1, k.kappa2, k.kappa3],
            equivalence_samples: 10_000,
            dissipation_modes: 200,
            k_range_equivalence: [1e-3, 1e3],
            k_range_dissipation: [1e-3, 10.0],
            t_end: 5.0,
            bound_trajectories: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayFitConfig {
    pub width: f64,
    pub time_count: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub window: [f64; 2],
    pub emit_plot_script: bool,
}

impl Default for DecayFitConfig {
    fn default() -> Self {
        DecayFitConfig {
            width: 2.4,
            time_count: 40,
            t_min: 8.0,
            t_max: 520.0,
            window: [10.0, 500.0],
            emit_plot_script: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_grid: usize,
    pub box_len: f64,
    pub amplitude: f64,
    pub mode_cutoff: f64,
    pub steps: usize,
    pub n_order: usize,
    pub kappa: [f64; 3],
    pub output_every: usize,
    /// 0 disables snapshots.
    pub snapshot_every: usize,
    pub cfl: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let k = KappaWeights::default();
        SimulateConfig {
            n_grid: 32,
            box_len: 20.0 * std::f64::consts::PI,
            amplitude: 1e-2,
            mode_cutoff: 3.0,
            steps: 1000,
            n_order: 2,
            kappa: [k.kappa1, k.kappa2, k.kappa3],
            output_every: 10,
            snapshot_every: 0,
            cfl: 0.5,
        }
    }
}

fn kappa_of(raw: [f64; 3]) -> KappaWeights {
    KappaWeights { kappa1: raw[0], kappa2: raw[1], kappa3: raw[2] }
}

// ---------------------------------------------------------------------------
// artifact staging
// ---------------------------------------------------------------------------

/// In-memory artifacts, flushed atomically at the end of a successful run.
struct Artifacts {
    out_dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn new(out_dir: &Path) -> Artifacts {
        Artifacts { out_dir: out_dir.to_path_buf(), files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.add(name, buf);
        Ok(())
    }

    fn flush(&self) -> anyhow::Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        for (name, bytes) in &self.files {
            let target = self.out_dir.join(name);
            let tmp = self.out_dir.join(format!("{name}.tmp"));
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, &target)?;
        }
        Ok(())
    }
}

fn fmt_g(x: f64) -> String {
    format!("{x:.16e}")
}

struct Csv {
    buf: String,
}

impl Csv {
    fn new(header: &[&str]) -> Csv {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        Csv { buf }
    }

    fn row(&mut self, cells: &[f64]) {
        let line: Vec<String> = cells.iter().map(|&x| fmt_g(x)).collect();
        let _ = writeln!(self.buf, "{}", line.join(","));
    }

    fn into_bytes(self) -> Vec<u8> {
        self.buf.into_bytes()
    }
}

#[derive(Serialize)]
struct Manifest {
    subcommand: String,
    seed: u64,
    gamma: f64,
    config_hash: String,
    package_version: String,
    wall_seconds: f64,
}

fn manifest(sub: &str, seed: u64, gamma: f64, cfg: &Config, wall: f64) -> Manifest {
    let canon = serde_json::to_vec(cfg).unwrap_or_default();
    Manifest {
        subcommand: sub.to_string(),
        seed,
        gamma,
        config_hash: format!("fnv1a:{:016x}", fnv1a64(&canon)),
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_seconds: wall,
    }
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

/// Runs a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    let (name, args) = match &cli.command {
        Command::Roots(a) => ("roots", a),
        Command::Propagate(a) => ("propagate", a),
        Command::VerifyLinear(a) => ("verify-linear", a),
        Command::Lyapunov(a) => ("lyapunov", a),
        Command::DecayFit(a) => ("decay-fit", a),
        Command::Simulate(a) => ("simulate", a),
    };
    let cfg = load_config(args.config.as_deref())?;
    let seed = args.seed.or(cfg.seed).unwrap_or(1);
    let gamma = cfg.gamma.unwrap_or(GAMMA_DEFAULT);
    if gamma <= 1.0 {
        anyhow::bail!("config error: gamma must exceed 1, got {gamma}");
    }

    let started = std::time::Instant::now();
    let mut artifacts = Artifacts::new(&args.out);
    match cli.command {
        Command::Roots(_) => run_roots(&cfg.roots, &mut artifacts)?,
        Command::Propagate(_) => run_propagate(&cfg.propagate, gamma, seed, &mut artifacts)?,
        Command::VerifyLinear(_) => run_verify_linear(&cfg.verify_linear, seed, &mut artifacts)?,
        Command::Lyapunov(_) => run_lyapunov(&cfg.lyapunov, gamma, seed, &mut artifacts)?,
        Command::DecayFit(_) => run_decay_fit(&cfg.decay_fit, gamma, seed, &mut artifacts)?,
        Command::Simulate(_) => run_simulate(&cfg.simulate, gamma, seed, &mut artifacts)?,
    }
    let wall = started.elapsed().as_secs_f64();
    artifacts.add_json("run_manifest.json", &manifest(name, seed, gamma, &cfg, wall))?;
    artifacts.flush()?;

    if args.check {
        let outcomes = match name {
            "roots" => vec![checks::check_roots_lemma()?],
            "propagate" | "verify-linear" => vec![checks::check_propagator_oracle(seed)?],
            "lyapunov" => {
                vec![checks::check_lyapunov(seed)?, checks::check_pointwise_bound(seed)?]
            }
            "decay-fit" => vec![checks::check_decay_rates(seed)?, checks::check_decay_index()?],
            "simulate" => vec![checks::check_nonlinear(seed)?],
            _ => unreachable!(),
        };
        let mut ok = true;
        for o in &outcomes {
            println!("{o}");
            ok &= o.passed;
        }
        if !ok {
            return Ok(2);
        }
    }
    Ok(0)
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", p.display()))?;
            let cfg: Config = serde_json::from_str(&text)
                .map_err(|e| anyhow::anyhow!("config parse error in {}: {e}", p.display()))?;
            Ok(cfg)
        }
    }
}

// ---------------------------------------------------------------------------
// subcommand bodies
// ---------------------------------------------------------------------------

fn run_roots(cfg: &RootsConfig, artifacts: &mut Artifacts) -> anyhow::Result<()> {
    if cfg.count < 2 || cfg.k_min <= 0.0 || cfg.k_max <= cfg.k_min {
        anyhow::bail!("config error: roots grid requires 0 < k_min < k_max and count >= 2");
    }
    let grid = log_spaced(cfg.count, cfg.k_min, cfg.k_max);
    let mut csv = Csv::new(&["kmag", "sigma", "beta", "omega", "residual"]);
    for &k in &grid {
        let t = solve_characteristic(k)?;
        csv.row(&[t.kmag, t.sigma, t.beta, t.omega, t.residual()]);
    }
    artifacts.add("roots.csv", csv.into_bytes());
    Ok(())
}

/// Builds a compatible state at wavevector `k` from a named generator.
fn generated_state(k: Vec3, kind: &str, seed: u64) -> anyhow::Result<SpectralState> {
    use rand::SeedableRng;
    let kt = k.unit();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let draw = lyapunov::random_state(&mut rng, k.norm(), true);
    let st = match kind {
        "random" => SpectralState {
            k,
            rho: -ik_dot(k, draw.e),
            u: draw.u,
            e: draw.e,
            b: draw.b.perp_to(kt),
        },
        "b_only" => SpectralState {
            k,
            rho: C64::new(0.0, 0.0),
            u: CVec3::ZERO,
            e: CVec3::ZERO,
            b: draw.b.perp_to(kt),
        },
        "e_transverse" => SpectralState {
            k,
            rho: C64::new(0.0, 0.0),
            u: CVec3::ZERO,
            e: draw.e.perp_to(kt),
            b: CVec3::ZERO,
        },
        other => anyhow::bail!("config error: unknown generator '{other}'"),
    };
    Ok(st)
}

fn run_propagate(
    cfg: &PropagateConfig,
    gamma: f64,
    seed: u64,
    artifacts: &mut Artifacts,
) -> anyhow::Result<()> {
    let k = Vec3::new(cfg.k[0], cfg.k[1], cfg.k[2]);
    if k.norm() == 0.0 {
        anyhow::bail!("config error: propagate requires a nonzero wavevector");
    }
    let state0 = match &cfg.state {
        Some(raw) => {
            if raw.len() != 10 {
                anyhow::bail!("config error: state must list 10 complex components");
            }
            let c = |i: usize| C64::new(raw[i][0], raw[i][1]);
            let kt = k.unit();
            let e = CVec3([c(4), c(5), c(6)]);
            SpectralState {
                k,
                rho: -ik_dot(k, e), // projected to the Gauss constraint
                u: CVec3([c(1), c(2), c(3)]),
                e,
                b: CVec3([c(7), c(8), c(9)]).perp_to(kt),
            }
        }
        None => generated_state(k, &cfg.generator, seed)?,
    };

    let mut header: Vec<String> = vec!["t".into()];
    for comp in ["rho", "ux", "uy", "uz", "ex", "ey", "ez", "bx", "by", "bz"] {
        header.push(format!("{comp}_re"));
        header.push(format!("{comp}_im"));
    }
    header.push("gauss_residual".into());
    header.push("divb_residual".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = Csv::new(&header_refs);
    for &t in &cfg.times {
        let st = propagator::propagate(t, &state0, gamma)?;
        let flat = st.to_flat();
        let (g, d) = st.compat_residual();
        let mut row = vec![t];
        row.extend_from_slice(&flat);
        row.push(g);
        row.push(d);
        csv.row(&row);
    }
    artifacts.add("propagate.csv", csv.into_bytes());
    Ok(())
}

fn run_verify_linear(
    cfg: &VerifyLinearConfig,
    seed: u64,
    artifacts: &mut Artifacts,
) -> anyhow::Result<()> {
    if cfg.gammas.is_empty() {
        anyhow::bail!("config error: verify_linear.gammas must be non-empty");
    }
    let rows: Vec<[f64; 8]> = (0..cfg.cases)
        .into_par_iter()
        .map(|i| -> crate::Result<[f64; 8]> {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let gamma = cfg.gammas[i % cfg.gammas.len()];
            let kmag =
                (cfg.k_min.ln() + (cfg.k_max.ln() - cfg.k_min.ln()) * rng.random::<f64>()).exp();
            let st = lyapunov::random_state(&mut rng, kmag, true);
            let t = cfg.t_max * rng.random::<f64>();
            let prop = propagator::propagate(t, &st, gamma)?;
            let orac = oracle::integrate_linear_at(st.k, &st, &[t], cfg.tol, gamma)?[0];
            let rel = prop.sub(&orac).norm() / st.norm();
            Ok([i as f64, st.k.0[0], st.k.0[1], st.k.0[2], kmag, gamma, t, rel])
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let mut csv = Csv::new(&["case", "kx", "ky", "kz", "kmag", "gamma", "t", "rel_error"]);
    let mut max_rel = 0.0f64;
    for r in &rows {
        csv.row(r);
        max_rel = max_rel.max(r[7]);
    }
    artifacts.add("verify_linear.csv", csv.into_bytes());
    artifacts.add_json(
        "verify_linear.json",
        &serde_json::json!({ "cases": cfg.cases, "max_rel_error": max_rel, "tol": cfg.tol }),
    )?;
    Ok(())
}

fn run_lyapunov(
    cfg: &LyapunovConfig,
    gamma: f64,
    seed: u64,
    artifacts: &mut Artifacts,
) -> anyhow::Result<()> {
    let kappa = kappa_of(cfg.kappa);
    let scan = lyapunov::equivalence_scan(
        &kappa,
        gamma,
        cfg.equivalence_samples,
        (cfg.k_range_equivalence[0], cfg.k_range_equivalence[1]),
        seed,
    );
    let modes = log_spaced(
        cfg.dissipation_modes,
        cfg.k_range_dissipation[0],
        cfg.k_range_dissipation[1],
    );
    let report = lyapunov::verify_dissipation(&kappa, &modes, gamma, cfg.t_end, seed)?;

    // pointwise bound fit on an even/odd train-validate split
    let times: Vec<f64> = {
        let mut t = log_spaced(30, 0.05, 10.0);
        t.insert(0, 0.0);
        t
    };
    let histories: Vec<ModulusHistory> = (0..cfg.bound_trajectories)
        .into_par_iter()
        .map(|i| -> crate::Result<ModulusHistory> {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                seed ^ (i as u64).wrapping_mul(0x2545_f491_4f6c_dd1d),
            );
            let kmag = (1e-3f64.ln() + (1e2f64.ln() - 1e-3f64.ln()) * rng.random::<f64>()).exp();
            let st = lyapunov::random_state(&mut rng, kmag, true);
            let traj = oracle::integrate_linear(st.k, &st, 10.0, 1e-8, gamma)?;
            Ok(ModulusHistory::from_trajectory(&traj, &times))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let train: Vec<ModulusHistory> = histories.iter().step_by(2).cloned().collect();
    let validate: Vec<ModulusHistory> = histories.iter().skip(1).step_by(2).cloned().collect();
    let bound = lyapunov::fit_pointwise_bound(&train, &validate);

    artifacts.add_json(
        "lyapunov.json",
        &serde_json::json!({
            "kappa": kappa,
            "admissible": kappa.is_admissible(),
            "equivalence": scan,
            "dissipation": report,
            "pointwise_bound": bound,
        }),
    )?;
    Ok(())
}

fn run_decay_fit(
    cfg: &DecayFitConfig,
    gamma: f64,
    seed: u64,
    artifacts: &mut Artifacts,
) -> anyhow::Result<()> {
    if cfg.time_count < 10 || cfg.t_min <= 0.0 || cfg.t_max <= cfg.t_min {
        anyhow::bail!("config error: decay_fit time grid requires 0 < t_min < t_max, count >= 10");
    }
    let times = log_spaced(cfg.time_count, cfg.t_min, cfg.t_max);
    let window = (cfg.window[0], cfg.window[1]);

    let datasets = [
        ("generic", GaussianParams { width: cfg.width, seed, ..GaussianParams::default() }),
        ("zero_density", GaussianParams { width: cfg.width, ..GaussianParams::zero_density(seed) }),
    ];
    let mut fits = Vec::new();
    for (label, params) in datasets {
        let bench = DecayBench::new(decay::make_gaussian_data(params)?, gamma);
        let series = bench.series(&times)?;
        let mut csv = Csv::new(&[
            "t", "l2_rho", "l2_u", "l2_e", "l2_b", "linf_rho", "linf_u", "linf_e", "linf_b",
        ]);
        for s in &series {
            csv.row(&[
                s.t, s.l2[0], s.l2[1], s.l2[2], s.l2[3], s.linf[0], s.linf[1], s.linf[2],
                s.linf[3],
            ]);
        }
        artifacts.add(&format!("decay_{label}.csv"), csv.into_bytes());

        for comp in decay::Component::ALL {
            for (kind, get) in [("l2", false), ("linf", true)] {
                let norms: Vec<f64> = series
                    .iter()
                    .map(|s| if get { s.linf[comp.index()] } else { s.l2[comp.index()] })
                    .collect();
                let fit = decay::fit_slope(&times, &norms, window)?;
                fits.push(serde_json::json!({
                    "dataset": label,
                    "component": comp.name(),
                    "norm": kind,
                    "exponent": fit.exponent,
                    "r2": fit.r2,
                    "class": fit.class,
                    "window": fit.window,
                }));
            }
        }
    }
    artifacts.add_json("decay_fits.json", &fits)?;
    if cfg.emit_plot_script {
        artifacts.add("plot_decay.py", PLOT_SCRIPT.as_bytes().to_vec());
    }
    Ok(())
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot the decay-fit CSV output (log-log norms against 1 + t)."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(".")
for name in ("decay_generic.csv", "decay_zero_density.csv"):
    path = out_dir / name
    if not path.exists():
        continue
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    t = [1.0 + float(r["t"]) for r in rows]
    fig, ax = plt.subplots()
    for col in ("l2_rho", "l2_u", "l2_e", "l2_b", "linf_e", "linf_b"):
        ax.loglog(t, [max(float(r[col]), 1e-300) for r in rows], label=col)
    ax.set_xlabel("1 + t")
    ax.set_ylabel("norm")
    ax.set_title(name)
    ax.legend()
    fig.savefig(path.with_suffix(".png"), dpi=150)
    print(f"wrote {path.with_suffix('.png')}")
"#;

fn run_simulate(
    cfg: &SimulateConfig,
    gamma: f64,
    seed: u64,
    artifacts: &mut Artifacts,
) -> anyhow::Result<()> {
    if cfg.output_every == 0 {
        anyhow::bail!("config error: simulate.output_every must be positive");
    }
    if cfg.n_grid < 4 || cfg.n_grid % 2 != 0 {
        anyhow::bail!("config error: simulate.n_grid must be even and >= 4");
    }
    if !(cfg.mode_cutoff > 0.0) || !(cfg.box_len > 0.0) || !(cfg.cfl > 0.0 && cfg.cfl <= 1.0) {
        anyhow::bail!("config error: simulate needs mode_cutoff > 0, box_len > 0, cfl in (0, 1]");
    }
    if cfg.n_order < 1 {
        anyhow::bail!("config error: simulate.n_order must be at least 1");
    }
    let kappa = kappa_of(cfg.kappa);
    let init = InitConfig {
        n_grid: cfg.n_grid,
        box_len: cfg.box_len,
        gamma,
        amplitude: cfg.amplitude,
        mode_cutoff: cfg.mode_cutoff,
        seed,
    };
    let field = sim::random_compatible_field(&init)?;
    let mut s = Simulation::from_field(&field)?;
    s.cfl = cfg.cfl;
    let dt = s.suggested_dt();

    let mut csv = Csv::new(&[
        "t",
        "energy",
        "dissipation",
        "high_order_energy",
        "high_order_dissipation",
        "gauss_residual",
        "divb_residual",
        "l2_rho",
        "l2_u",
        "l2_e",
        "l2_b",
    ]);
    let record = |s: &mut Simulation, csv: &mut Csv| -> anyhow::Result<()> {
        let rep = s.energy_report(cfg.n_order, &kappa)?;
        let (g, d) = s.constraint_residual();
        let norms = s.component_norms();
        csv.row(&[
            s.time,
            rep.full_energy,
            rep.dissipation,
            rep.high_order_energy,
            rep.high_order_dissipation,
            g,
            d,
            norms[0],
            norms[1],
            norms[2],
            norms[3],
        ]);
        Ok(())
    };
    record(&mut s, &mut csv)?;
    for step_idx in 1..=cfg.steps {
        s.step(dt)?;
        if step_idx % cfg.output_every == 0 || step_idx == cfg.steps {
            record(&mut s, &mut csv)?;
        }
        if cfg.snapshot_every > 0 && step_idx % cfg.snapshot_every == 0 {
            let mut buf = Vec::new();
            sim::write_snapshot(&s.to_field(), &mut buf)?;
            artifacts.add(&format!("snapshot_{step_idx:06}.bin"), buf);
        }
    }
    artifacts.add("simulate.csv", csv.into_bytes());
    artifacts.add_json(
        "simulate.json",
        &serde_json::json!({
            "n_grid": cfg.n_grid,
            "box_len": cfg.box_len,
            "gamma": gamma,
            "dt": dt,
            "steps": cfg.steps,
            "final_time": s.time,
        }),
    )?;
    Ok(())
}
