use std::path::{Path, PathBuf};

use aoi_starve_core::metrics::{ResetRule, TdrKind};
use aoi_starve_core::safety::{builtin_services, default_hazard_windows, load_catalog};
use aoi_starve_core::sim::PhyModel;
use aoi_starve_core::{AttackMode, Config};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analytic::{cmd_analytic, write_analytic, DEFAULT_X_GRID};
use crate::error::{CliError, EXIT_OK, EXIT_VALIDATION};
use crate::output::OutDir;
use crate::run::{canonical_text, cmd_simulate, RunRecord, RunSettings};
use crate::safety::{cmd_safety, load_run, write_safety};
use crate::sweep::{cmd_sweep, SweepAxis, SweepSpec};
use crate::validate::{cmd_validate, write_validation, Fault};

pub const OUT_ENV: &str = "AOI_STARVE_OUT";
pub const DEFAULT_OUT: &str = "aoi-starve-out";

#[derive(Debug, Parser)]
#[command(name = "aoi-starve", version, about = "AoI under SPS resource starvation: analysis, simulation and safety scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form and chain predictions over a grid of x.
    Analytic(Common),
    /// One simulation run next to its analytic prediction.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Stream every tx/rx/drop event to events.csv.
        #[arg(long)]
        events: bool,
    },
    /// Replicated runs over one parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(SweepAxis))]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        replicas: u32,
    },
    /// Service-level verdicts and hazard-window violation curves.
    Safety {
        #[command(flatten)]
        common: Common,
        /// Output directories of earlier `simulate` runs; without any, the
        /// runs are simulated here.
        #[arg(long = "from")]
        from: Vec<PathBuf>,
        /// Service catalog CSV (name,threshold_ms,target_slr).
        #[arg(long)]
        services: Option<PathBuf>,
        /// Hazard windows in seconds.
        #[arg(long = "window", value_delimiter = ',')]
        windows: Vec<f64>,
    },
    /// Analytic versus simulation checks; exits 4 on any failure.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "none")]
        fault: Fault,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; AOI_STARVE_OUT takes precedence.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "duration-ms")]
    pub duration_ms: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long = "attack-mode")]
    pub attack_mode: Option<AttackMode>,
    /// Starvation fraction; a comma list where several points make sense.
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<f64>,
    #[arg(long)]
    pub phy: Option<PhyModel>,
    /// AoI thresholds in ms to register for TDR.
    #[arg(long = "threshold", value_delimiter = ',')]
    pub thresholds: Vec<u64>,
    #[arg(long = "tdr-kind", default_value = "update_gap")]
    pub tdr_kind: TdrKind,
    #[arg(long = "reset-rule", default_value = "latency")]
    pub reset_rule: ResetRule,
    #[arg(long = "warmup-ms")]
    pub warmup_ms: Option<u64>,
    /// Constant-velocity drift on a ring road.
    #[arg(long)]
    pub mobility: bool,
    /// Extra config overrides, `key=value`.
    #[arg(long = "set")]
    pub set: Vec<String>,
}

impl Common {
    pub fn out_dir(&self) -> PathBuf {
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .or_else(|| self.out.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1)
    }

    /// Config file, then `--set`, then the dedicated flags. `--x` is left to
    /// the subcommand.
    pub fn config(&self) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(p) => Config::parse(&read(p)?)?,
            None => Config::default(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.duration_ms {
            cfg.sim_duration_ms = d;
        }
        if let Some(m) = self.attack_mode {
            cfg.attack.mode = m;
        }
        Ok(cfg)
    }

    pub fn settings(&self, default_phy: PhyModel) -> RunSettings {
        let mut s = RunSettings::default();
        s.sim.phy.model = self.phy.unwrap_or(default_phy);
        s.sim.warmup_ms = self.warmup_ms;
        s.sim.mobility = self.mobility;
        if !self.thresholds.is_empty() {
            s.thresholds_ms = self.thresholds.clone();
        }
        s.reset_rule = self.reset_rule;
        s.tdr_kind = self.tdr_kind;
        s
    }

    fn single_x(&self, cfg: &mut Config) -> Result<(), CliError> {
        match self.x.as_slice() {
            [] => Ok(()),
            [x] => {
                cfg.attack.x = *x;
                if self.attack_mode.is_none() && cfg.attack.mode == AttackMode::Off && *x > 0.0 {
                    cfg.attack.mode = AttackMode::Probabilistic;
                }
                Ok(())
            }
            _ => Err(CliError::Config("this subcommand takes a single --x".into())),
        }
    }

    fn x_grid(&self) -> Vec<f64> {
        if self.x.is_empty() { DEFAULT_X_GRID.to_vec() } else { self.x.clone() }
    }
}

fn read(p: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))
}

/// Runs one parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Analytic(c) => {
            let cfg = c.config()?;
            let rows = cmd_analytic(&cfg, &c.x_grid())?;
            write_analytic(&OutDir::create(c.out_dir())?, &cfg, &rows)?;
            println!("{:>6} {:>12} {:>12} {:>12} {:>14}", "x", "aoi_ms", "renewal_ms", "c0_ms", "dtmc_c0_ms");
            for r in &rows {
                let p = &r.prediction;
                let dtmc = r.dtmc_c0_ms.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
                println!("{:>6} {:>12.4} {:>12.4} {:>12.4} {:>14}", r.x, p.average_aoi_ms, p.average_aoi_renewal_ms, p.c0_ms, dtmc);
            }
            Ok(EXIT_OK)
        }
        Command::Simulate { common: c, events } => {
            let mut cfg = c.config()?;
            c.single_x(&mut cfg)?;
            let mut settings = c.settings(PhyModel::Abstract);
            settings.events = events;
            let out = OutDir::create(c.out_dir())?;
            let rec = cmd_simulate(&cfg, &settings, Some(&out))?;
            print!("{}", rec.report.to_text());
            if let Some(p) = rec.prediction {
                println!("analytic_aoi_ms  {:.4}", p.average_aoi_ms);
            }
            if let Some(g) = rec.analytic_gap {
                println!("analytic_gap     {:.4}", g);
            }
            println!("config_hash      {}", rec.config_hash);
            println!("wall_time_s      {:.2}", rec.wall_time_s);
            Ok(EXIT_OK)
        }
        Command::Sweep { common: c, axis, values, replicas } => {
            let mut cfg = c.config()?;
            if axis != SweepAxis::X {
                c.single_x(&mut cfg)?;
            }
            let spec = SweepSpec { axis, values, replicas_per_point: replicas, root_seed: cfg.seed };
            let table = cmd_sweep(&spec, &cfg, &c.settings(PhyModel::Abstract), c.jobs(), Some(&OutDir::create(c.out_dir())?))?;
            println!("{:>10} {:>4} {:>12} {:>10} {:>12}", axis.as_str(), "n", "mean_aoi_ms", "std", "analytic");
            for p in &table.points {
                let a = p.analytic_aoi_ms.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
                println!("{:>10} {:>4} {:>12.3} {:>10.3} {:>12}", p.value, p.replicas, p.mean_aoi_ms, p.std_aoi_ms, a);
            }
            Ok(EXIT_OK)
        }
        Command::Safety { common: c, from, services, windows } => {
            let cfg = c.config()?;
            let settings = c.settings(PhyModel::Collision);
            let xs = c.x_grid();
            let services = match services {
                Some(p) => load_catalog(read(&p)?.as_bytes())?,
                None => builtin_services(),
            };
            let windows = if windows.is_empty() { default_hazard_windows() } else { windows };
            let mut settings_th = settings.clone();
            for s in &services {
                if !settings_th.thresholds_ms.contains(&s.aoi_threshold_ms) {
                    settings_th.thresholds_ms.push(s.aoi_threshold_ms);
                }
            }
            let runs = if from.is_empty() {
                let mode = c.attack_mode.unwrap_or(AttackMode::ActiveEve);
                simulate_grid(&cfg, &settings_th, mode, &xs, c.jobs())?
            } else {
                from.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?
            };
            let verdicts = cmd_safety(&runs, &xs, &services, &windows, settings.tdr_kind)?;
            let mut echo = canonical_text(&cfg, &settings_th);
            echo.push_str(&format!("tdr_kind={}\n", settings.tdr_kind));
            write_safety(&OutDir::create(c.out_dir())?, &echo, &verdicts)?;
            println!("{:>5} {:>4} {:>10} {:>10} {:>8} {:>10}", "x", "svc", "tdr", "gap_pp", "unsafe", "p_viol@2s");
            for v in &verdicts {
                let at2 = v.violation_curve.iter().find(|p| (p.window_s - 2.0).abs() < 1e-9).map(|p| format!("{:.4}", p.violation_prob));
                println!(
                    "{:>5} {:>4} {:>10.4} {:>10.2} {:>8} {:>10}",
                    v.x, v.service, v.measured_tdr, v.gap_pp, v.unsafe_, at2.unwrap_or_else(|| "-".into())
                );
            }
            println!("assumption: {}", aoi_starve_core::safety::INDEPENDENCE_ASSUMPTION);
            Ok(EXIT_OK)
        }
        Command::Validate { common: c, fault } => {
            let cfg = c.config()?;
            let settings = c.settings(PhyModel::Abstract);
            let report = cmd_validate(&cfg, &settings, fault, c.jobs())?;
            let mut echo = canonical_text(&cfg, &settings);
            echo.push_str(&format!("fault={fault:?}\n"));
            write_validation(&OutDir::create(c.out_dir())?, &echo, &report)?;
            for ch in &report.checks {
                println!(
                    "{} {:<34} observed={:.6} expected={:.6} gap={:.3e} tol={:.1e}",
                    if ch.pass { "PASS" } else { "FAIL" },
                    ch.name,
                    ch.observed,
                    ch.expected,
                    ch.gap,
                    ch.tolerance
                );
            }
            if report.passed() {
                Ok(EXIT_OK)
            } else {
                eprintln!("failed checks: {}", report.failed().join(", "));
                Ok(EXIT_VALIDATION)
            }
        }
    }
}

/// One run per `x`, benign at zero, run concurrently.
pub fn simulate_grid(
    cfg: &Config,
    settings: &RunSettings,
    mode: AttackMode,
    xs: &[f64],
    jobs: usize,
) -> Result<Vec<RunRecord>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| {
        xs.par_iter()
            .map(|&x| {
                let mut c = cfg.clone();
                c.attack.x = x;
                c.attack.mode = if x == 0.0 { AttackMode::Off } else { mode };
                cmd_simulate(&c, settings, None)
            })
            .collect()
    })
}
