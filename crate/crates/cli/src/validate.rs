use aoi_starve_core::analytic::{
    average_aoi, build_sps_dtmc, inter_success_moments, mean_first_passage_idle_to_tx, reset_aoi_c0,
    stationary_distribution_with, SolveMethod,
};
use aoi_starve_core::{derive_substream, AttackMode, Config, Purpose, SpsParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::DEFAULT_X_GRID;
use crate::error::CliError;
use crate::output::OutDir;
use crate::run::{cmd_simulate, RunSettings};

pub const BENIGN_GAP_TOL: f64 = 0.02;
pub const ATTACK_GAP_TOL: f64 = 0.08;
pub const MC_DRAWS: u64 = 1_000_000;

/// A deliberate error injected into one side of the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    #[default]
    None,
    /// The analytic side sees twice the real Γ.
    AnalyticGamma,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Fault::None),
            "gamma" | "analytic_gamma" => Ok(Fault::AnalyticGamma),
            other => Err(format!("unknown fault `{other}` (expected none or gamma)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn abs(name: String, observed: f64, expected: f64, tolerance: f64) -> Self {
        let gap = (observed - expected).abs();
        Check { name, observed, expected, gap, tolerance, pass: gap <= tolerance }
    }

    fn rel(name: String, observed: f64, expected: f64, tolerance: f64) -> Self {
        let gap = (observed - expected).abs() / expected.abs();
        Check { name, observed, expected, gap, tolerance, pass: gap <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPoint {
    pub x: f64,
    pub sim_aoi_ms: f64,
    pub renewal_aoi_ms: f64,
    pub closed_aoi_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub points: Vec<SimPoint>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }
}

/// Analytic against simulated AoI over the attack grid, the explicit chain
/// against the closed form, and Monte Carlo against the geometric moments.
pub fn cmd_validate(cfg: &Config, settings: &RunSettings, fault: Fault, jobs: usize) -> Result<ValidationReport, CliError> {
    let cfg = cfg.clone().validate()?;
    let mut analytic_sps = cfg.sps.clone();
    if fault == Fault::AnalyticGamma {
        analytic_sps.gamma *= 2;
    }
    let mut checks = Vec::new();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    let sims: Vec<Result<(f64, Option<f64>), CliError>> = pool.install(|| {
        DEFAULT_X_GRID
            .par_iter()
            .map(|&x| {
                let mut c = cfg.clone();
                c.attack.x = x;
                c.attack.mode = if x == 0.0 { AttackMode::Off } else { AttackMode::Probabilistic };
                Ok((x, cmd_simulate(&c, settings, None)?.report.avg_aoi_ms))
            })
            .collect()
    });

    let mut points = Vec::new();
    for r in sims {
        let (x, sim) = r?;
        let p = average_aoi(analytic_sps.p_sch, x, analytic_sps.gamma, analytic_sps.phi)?;
        checks.push(Check::abs(format!("routes_agree_x{x}"), p.average_aoi_renewal_ms, p.average_aoi_ms, 1e-9 * p.average_aoi_ms));
        let sim = sim.ok_or_else(|| CliError::Validation(format!("x={x}: simulation produced no receptions")))?;
        let tol = if x == 0.0 { BENIGN_GAP_TOL } else { ATTACK_GAP_TOL };
        checks.push(Check::rel(format!("sim_vs_analytic_x{x}"), sim, p.average_aoi_ms, tol));
        points.push(SimPoint { x, sim_aoi_ms: sim, renewal_aoi_ms: p.average_aoi_renewal_ms, closed_aoi_ms: p.average_aoi_ms });
    }

    for gamma in [2u32, 10, 100] {
        for p in [1.0, 0.5, 0.1] {
            let chain_sps = SpsParams { gamma, ..cfg.sps.clone() };
            let closed_gamma = if fault == Fault::AnalyticGamma { gamma * 2 } else { gamma };
            let mfpt = mean_first_passage_idle_to_tx(&build_sps_dtmc(&chain_sps, p)?)?;
            checks.push(Check::abs(format!("dtmc_c0_gamma{gamma}_p{p}"), mfpt + 1.0, reset_aoi_c0(p, closed_gamma)?, 1e-9));
        }
    }

    let toy = SpsParams { gamma: 2, rc_min: 1, rc_max: 1, p_keep: 0.0, ..cfg.sps.clone() };
    let chain = build_sps_dtmc(&toy, 1.0)?.chain;
    let direct = stationary_distribution_with(&chain, SolveMethod::Direct)?;
    let power = stationary_distribution_with(&chain, SolveMethod::PowerIteration)?;
    let worst = direct.iter().zip(&power).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(Check::abs("stationary_direct_vs_power".into(), worst, 0.0, 1e-10));

    for (i, phi) in [0.5, 0.9, 1.0].into_iter().enumerate() {
        let m = inter_success_moments(analytic_sps.gamma, phi)?;
        let mut rng = derive_substream(cfg.seed, i as u64, Purpose::Oracle);
        let g = cfg.sps.gamma as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..MC_DRAWS {
            let t = g * rng.geometric(phi) as f64;
            s1 += t;
            s2 += t * t;
        }
        let n = MC_DRAWS as f64;
        checks.push(Check::rel(format!("geometric_mean_phi{phi}"), s1 / n, m.mean, 0.01));
        checks.push(Check::rel(format!("geometric_second_moment_phi{phi}"), s2 / n, m.second_moment, 0.01));
    }

    Ok(ValidationReport { checks, points })
}

pub fn write_validation(dir: &OutDir, echo: &str, report: &ValidationReport) -> Result<(), CliError> {
    dir.write("config.echo", echo)?;
    dir.write_json("summary.json", report)?;
    dir.write_csv(
        "validation.csv",
        &["check", "observed", "expected", "gap", "tolerance", "pass"],
        report.checks.iter().map(|c| {
            vec![
                c.name.clone(),
                format!("{:.9}", c.observed),
                format!("{:.9}", c.expected),
                format!("{:.3e}", c.gap),
                format!("{:.3e}", c.tolerance),
                c.pass.to_string(),
            ]
        }),
    )?;
    dir.write_csv(
        "validation_points.csv",
        &["x", "sim_aoi_ms", "renewal_aoi_ms", "closed_aoi_ms"],
        report.points.iter().map(|p| {
            vec![p.x.to_string(), format!("{:.6}", p.sim_aoi_ms), format!("{:.9}", p.renewal_aoi_ms), format!("{:.9}", p.closed_aoi_ms)]
        }),
    )
}
