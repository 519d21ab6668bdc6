//! Command-line front end. Exit codes: 0 success, 1 configuration or
//! usage error, 2 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::fit::{fit_global_dephasing, fit_slice, load_measurement, FitContext, FitOptions, FitResult};
use crate::model::{BiasPoint, DeviceParams};
use crate::oracle::{quasi_energy_csv, run_study, StudyConfig};
use crate::rates::total_rates;
use crate::sweep::{add_noise, run_map, write_csv};

#[derive(Debug, Parser)]
#[command(name = "dressed", version, about = "Dressed-qubit relaxation, readout and fitting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; its directory must exist.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads, 0 picks automatically.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulated S11 map over the configured grid (CSV).
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Simulated map plus seeded complex Gaussian noise (CSV).
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise per real component, relative to |S11|.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
    },
    /// Rate table (CSV) at one bias point, over the grid, or along a
    /// resonance at fixed mixing angle.
    Rates {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires = "amp")]
        ng: Option<f64>,
        #[arg(long)]
        amp: Option<f64>,
        /// Resonance index for the fixed-angle mode.
        #[arg(long, requires = "eta", conflicts_with = "ng")]
        n: Option<u32>,
        /// Mixing angle [rad] for the fixed-angle mode.
        #[arg(long, requires = "n")]
        eta: Option<f64>,
    },
    /// Per-slice fit of (s_phi0, s_rel, s_ohmic) to a map (JSON).
    Fit {
        #[command(flatten)]
        common: Common,
        /// Map CSV in the sweep layout.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Global fit of (s_x0, s_x_mu) with per-slice parameters fixed (JSON).
    FitGlobal {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Output of `fit`; when absent the slices are fitted first.
        #[arg(long)]
        fits: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Floquet check of the analytic rates and gaps (JSON).
    Oracle {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.4, 0.8, 1.6])]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.02, 0.04])]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        n: u32,
        #[arg(long, default_value_t = 2048)]
        steps: usize,
        #[arg(long, default_value_t = 7e9)]
        f_mu: f64,
        /// Exit with status 2 when any tolerance is missed.
        #[arg(long)]
        strict: bool,
        /// Also write quasi-energies versus α on the resonance (CSV).
        #[arg(long)]
        quasi_csv: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

enum Failure {
    Input(Error),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e)
        }
    }
}

fn check_out(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(Error::Config(format!("output directory {} does not exist", parent.display())));
    }
    Ok(())
}

fn set_threads(n: usize) {
    if n > 0 {
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Io(e.to_string()))
}

fn setup(common: &Common) -> Result<Config> {
    check_out(&common.out)?;
    set_threads(common.threads);
    let cfg = Config::load(&common.config)?;
    for w in cfg.device.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn map_csv(cfg: &Config, noise: Option<(f64, u64)>) -> Result<String> {
    let sweep = cfg.sweep()?;
    let mut map = run_map(&sweep.grid(), &cfg.device, &cfg.environment, sweep.options())?;
    if !map.defects.is_empty() {
        let d = &map.defects[0];
        eprintln!(
            "warning: {} grid points failed (first at amp #{}, ng #{}: {})",
            map.defects.len(),
            d.amp_index,
            d.ng_index,
            d.error
        );
    }
    if let Some((rel, seed)) = noise {
        add_noise(&mut map, rel, seed)?;
    }
    let mut buf = Vec::new();
    write_csv(&map, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

const RATE_HEADER: &str =
    "# ng,amp,alpha,n,eps,delta_n,eta,gamma_rel,gamma_exc,gamma_1,gamma_phi_pure,gamma_2,t_eff,s_z0";

fn rate_row(out: &mut String, b: &BiasPoint, cfg: &Config) -> Result<()> {
    let r = total_rates(b, &cfg.environment, &cfg.device, cfg.sweep.and_then(|s| s.m_max))?;
    let vals = [
        b.n_g,
        b.a_mu,
        b.alpha,
        b.n_res as f64,
        b.eps,
        b.delta_n,
        b.eta,
        r.gamma_rel,
        r.gamma_exc,
        r.gamma_1,
        r.gamma_phi_pure,
        r.gamma_2,
        r.t_eff,
        r.s_z0,
    ];
    let row: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
    let _ = writeln!(out, "{}", row.join(","));
    Ok(())
}

fn rates_csv(cfg: &Config, ng: Option<f64>, amp: Option<f64>, at_angle: Option<(u32, f64)>) -> Result<String> {
    let dev: &DeviceParams = &cfg.device;
    let mut out = format!("{RATE_HEADER}\n");
    match (ng, amp, at_angle) {
        (Some(ng), Some(amp), _) => rate_row(&mut out, &BiasPoint::new(ng, amp, dev)?, cfg)?,
        (None, amp, Some((n, eta))) => {
            let amps: Vec<f64> = match amp {
                Some(a) => vec![a],
                None => {
                    let g = cfg.sweep()?.grid();
                    (0..g.amp_steps).map(|j| g.amp(j)).collect()
                }
            };
            for a in amps {
                let alpha = crate::model::normalized_amplitude(a, dev.gamma_mu, dev.e_q, dev.f_mu);
                rate_row(&mut out, &BiasPoint::at_angle(n, alpha, eta, dev)?, cfg)?;
            }
        }
        _ => {
            let g = cfg.sweep()?.grid();
            for j in 0..g.amp_steps {
                for i in 0..g.ng_steps {
                    rate_row(&mut out, &BiasPoint::new(g.ng(i), g.amp(j), dev)?, cfg)?;
                }
            }
        }
    }
    Ok(out)
}

fn fit_context(cfg: &Config) -> FitContext {
    FitContext {
        device: cfg.device.clone(),
        env: cfg.environment,
        m_max: cfg.sweep.and_then(|s| s.m_max),
    }
}

fn fit_options(cfg: &Config, seed: u64) -> FitOptions {
    FitOptions {
        max_evals: cfg.fit.max_evals,
        restarts: cfg.fit.restarts,
        seed,
    }
}

fn fit_slices(cfg: &Config, data: &Path, seed: u64) -> Result<(crate::fit::MeasuredMap, Vec<FitResult>)> {
    use rayon::prelude::*;
    let map = load_measurement(data)?;
    let ctx = fit_context(cfg);
    let opts = fit_options(cfg, seed);
    let idx: Vec<usize> = match &cfg.fit.slices {
        Some(s) => s.clone(),
        None => (0..map.amp.len()).collect(),
    };
    if let Some(bad) = idx.iter().find(|&&j| j >= map.amp.len()) {
        return Err(Error::Config(format!("fit.slices index {bad} out of range")));
    }
    let fits = idx
        .par_iter()
        .map(|&j| {
            let o = FitOptions {
                seed: opts.seed.wrapping_add(j as u64),
                ..opts
            };
            fit_slice(&map.slice(j), &ctx, cfg.fit.init, &o)
        })
        .collect::<Result<Vec<_>>>()?;
    for f in &fits {
        if !f.converged {
            eprintln!("warning: slice at amp {} exhausted its evaluation budget", f.slice_amp);
        }
    }
    Ok((map, fits))
}

fn run(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Sweep { common } => {
            let cfg = setup(&common)?;
            let text = map_csv(&cfg, None)?;
            write_out(&common.out, &text)?;
        }
        Command::Synth { common, seed, noise } => {
            let cfg = setup(&common)?;
            let text = map_csv(&cfg, Some((noise, seed)))?;
            write_out(&common.out, &text)?;
        }
        Command::Rates {
            common,
            ng,
            amp,
            n,
            eta,
        } => {
            let cfg = setup(&common)?;
            let text = rates_csv(&cfg, ng, amp, n.zip(eta))?;
            write_out(&common.out, &text)?;
        }
        Command::Fit { common, data, seed } => {
            let cfg = setup(&common)?;
            let (_, fits) = fit_slices(&cfg, &data, seed)?;
            write_out(&common.out, &to_json(&fits)?)?;
        }
        Command::FitGlobal {
            common,
            data,
            fits,
            seed,
        } => {
            let cfg = setup(&common)?;
            let (map, per_slice) = match fits {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    let fits: Vec<FitResult> = serde_json::from_str(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    (load_measurement(&data)?, fits)
                }
                None => {
                    let cfg_all = Config {
                        fit: crate::config::FitSection {
                            slices: None,
                            ..cfg.fit.clone()
                        },
                        ..cfg.clone()
                    };
                    fit_slices(&cfg_all, &data, seed)?
                }
            };
            if per_slice.len() != map.amp.len() {
                return Err(Error::Config(format!(
                    "{} slice fits for a map with {} slices",
                    per_slice.len(),
                    map.amp.len()
                ))
                .into());
            }
            let params: Vec<_> = per_slice.iter().map(|f| f.params).collect();
            let r = fit_global_dephasing(&map, &fit_context(&cfg), &params, cfg.fit.init_dephasing, &fit_options(&cfg, seed))?;
            write_out(&common.out, &to_json(&r)?)?;
        }
        Command::Oracle {
            out,
            threads,
            alphas,
            ratios,
            n,
            steps,
            f_mu,
            strict,
            quasi_csv,
        } => {
            check_out(&out)?;
            if let Some(q) = &quasi_csv {
                check_out(q)?;
            }
            set_threads(threads);
            let cfg = StudyConfig {
                n,
                alphas,
                ratios,
                f_mu,
                steps,
                ..StudyConfig::default()
            };
            let report = run_study(&cfg)?;
            let quasi = match &quasi_csv {
                Some(_) => {
                    let r = cfg.ratios[0];
                    let mut grid: Vec<f64> = (0..=100).map(|k| 0.05 * k as f64).collect();
                    grid.extend(cfg.alphas.iter().copied());
                    grid.sort_by(f64::total_cmp);
                    grid.dedup();
                    Some(quasi_energy_csv(n, r * f_mu, f_mu, &grid, steps)?)
                }
                None => None,
            };
            write_out(&out, &to_json(&report)?)?;
            if let (Some(path), Some(text)) = (&quasi_csv, quasi) {
                write_out(path, &text)?;
            }
            let pass = report.rates_pass && report.gaps_pass;
            if strict && !pass {
                return Err(Failure::Numerical(format!(
                    "oracle tolerances missed (rates pass: {}, gaps pass: {})",
                    report.rates_pass, report.gaps_pass
                )));
            }
        }
    }
    Ok(())
}
