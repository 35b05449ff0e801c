use std::fmt;
use std::str::FromStr;

use aoi_starve_core::metrics::TdrKind;
use aoi_starve_core::{replica_seed, Config};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::{fmt_opt, OutDir};
use crate::run::{canonical_text, cmd_simulate, RunRecord, RunSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    X,
    NVehicles,
    PKeep,
    Phi,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::X => "x",
            SweepAxis::NVehicles => "n_vehicles",
            SweepAxis::PKeep => "p_keep",
            SweepAxis::Phi => "phi",
        }
    }

    fn config_key(&self) -> &'static str {
        match self {
            SweepAxis::X => "attack_x",
            other => other.as_str(),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" | "attack_x" => Ok(SweepAxis::X),
            "n_vehicles" | "n" => Ok(SweepAxis::NVehicles),
            "p_keep" => Ok(SweepAxis::PKeep),
            "phi" => Ok(SweepAxis::Phi),
            other => Err(format!("unknown sweep axis `{other}` (expected x, n_vehicles, p_keep or phi)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub replicas_per_point: u32,
    pub root_seed: u64,
}

impl SweepSpec {
    /// Config for one point, checked against the parameter ranges.
    pub fn point_config(&self, base: &Config, value: f64) -> Result<Config, CliError> {
        let mut cfg = base.clone();
        let text = match self.axis {
            SweepAxis::NVehicles => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(CliError::Config(format!("n_vehicles sweep value {value} is not a positive integer")));
                }
                format!("{}", value as u64)
            }
            _ => value.to_string(),
        };
        cfg.set(self.axis.config_key(), &text)?;
        Ok(cfg.validate()?)
    }

    pub fn validate(&self, base: &Config) -> Result<(), CliError> {
        if self.replicas_per_point < 1 {
            return Err(CliError::Config("replicas must be >= 1".into()));
        }
        if self.values.is_empty() {
            return Err(CliError::Config("sweep needs at least one value".into()));
        }
        for &v in &self.values {
            self.point_config(base, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub replicas: u32,
    pub mean_aoi_ms: f64,
    /// Sample standard deviation across replicas; zero with one replica.
    pub std_aoi_ms: f64,
    pub mean_prr: Option<f64>,
    pub mean_availability: Option<f64>,
    pub analytic_aoi_ms: Option<f64>,
    /// Mean TDR per registered threshold, of the configured kind.
    pub mean_tdr: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub spec: SweepSpec,
    pub points: Vec<SweepPoint>,
    pub runs: Vec<(usize, u32, RunRecord)>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_of(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let all: Option<Vec<f64>> = v.collect();
    all.filter(|a| !a.is_empty()).map(|a| a.iter().sum::<f64>() / a.len() as f64)
}

/// Aggregates finished replicas, in point then replica order.
pub fn aggregate(spec: &SweepSpec, runs: &[(usize, u32, RunRecord)], kind: TdrKind) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    for (i, &value) in spec.values.iter().enumerate() {
        let recs: Vec<&RunRecord> = runs.iter().filter(|(p, _, _)| *p == i).map(|(_, _, r)| r).collect();
        let aoi: Vec<f64> = recs.iter().filter_map(|r| r.report.avg_aoi_ms).collect();
        if aoi.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&aoi);
        let thresholds = &recs[0].settings.thresholds_ms;
        let mean_tdr = thresholds
            .iter()
            .filter_map(|&th| mean_of(recs.iter().map(|r| r.report.tdr(th, kind).ok())).map(|m| (th, m)))
            .collect();
        points.push(SweepPoint {
            value,
            replicas: recs.len() as u32,
            mean_aoi_ms: mean,
            std_aoi_ms: std,
            mean_prr: mean_of(recs.iter().map(|r| r.report.prr)),
            mean_availability: mean_of(recs.iter().map(|r| r.report.available_resource_fraction)),
            analytic_aoi_ms: recs[0].prediction.map(|p| p.average_aoi_ms),
            mean_tdr,
        });
    }
    points
}

/// Runs every `(value, replica)` pair on up to `jobs` threads. A sweep over
/// `n_vehicles` keeps the base road length, so density grows with `N`.
///
/// On a replica failure the finished replicas are still written to `out`
/// before the error is returned.
pub fn cmd_sweep(
    spec: &SweepSpec,
    base: &Config,
    settings: &RunSettings,
    jobs: usize,
    out: Option<&OutDir>,
) -> Result<SweepTable, CliError> {
    let base = base.clone().validate()?;
    spec.validate(&base)?;
    let mut settings = settings.clone();
    if spec.axis == SweepAxis::NVehicles && settings.sim.road_length_m.is_none() {
        settings.sim.road_length_m = Some(base.road_length_m());
    }
    let jobs_list: Vec<(usize, u32)> =
        (0..spec.values.len()).flat_map(|p| (0..spec.replicas_per_point).map(move |r| (p, r))).collect();
    let run_one = |&(p, r): &(usize, u32)| -> Result<(usize, u32, RunRecord), CliError> {
        let mut cfg = spec.point_config(&base, spec.values[p])?;
        cfg.seed = replica_seed(spec.root_seed, p as u32, r);
        Ok((p, r, cmd_simulate(&cfg, &settings, None)?))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    let results: Vec<Result<(usize, u32, RunRecord), CliError>> = pool.install(|| jobs_list.par_iter().map(run_one).collect());

    let mut runs = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let table = SweepTable { spec: spec.clone(), points: aggregate(spec, &runs, settings.tdr_kind), runs };
    if let Some(dir) = out {
        write_sweep(dir, &base, &settings, &table)?;
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(table),
    }
}

pub fn write_sweep(dir: &OutDir, base: &Config, settings: &RunSettings, t: &SweepTable) -> Result<(), CliError> {
    let mut echo = canonical_text(base, settings);
    echo.push_str(&format!(
        "sweep_axis={}\nsweep_values={}\nreplicas={}\nroot_seed={}\n",
        t.spec.axis,
        t.spec.values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        t.spec.replicas_per_point,
        t.spec.root_seed
    ));
    dir.write("config.echo", echo)?;
    dir.write_json("summary.json", t)?;

    let ths = &settings.thresholds_ms;
    let mut header: Vec<String> = ["axis", "value", "replicas", "mean_aoi_ms", "std_aoi_ms", "analytic_aoi_ms", "mean_prr", "mean_availability"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(ths.iter().map(|th| format!("tdr_{th}")));
    let header_ref: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    dir.write_csv(
        "sweep.csv",
        &header_ref,
        t.points.iter().map(|p| {
            let mut row = vec![
                t.spec.axis.to_string(),
                p.value.to_string(),
                p.replicas.to_string(),
                format!("{:.6}", p.mean_aoi_ms),
                format!("{:.6}", p.std_aoi_ms),
                fmt_opt(p.analytic_aoi_ms),
                fmt_opt(p.mean_prr),
                fmt_opt(p.mean_availability),
            ];
            row.extend(ths.iter().map(|th| fmt_opt(p.mean_tdr.iter().find(|(t, _)| t == th).map(|(_, v)| *v))));
            row
        }),
    )?;
    dir.write_csv(
        "replicas.csv",
        &["axis", "value", "replica", "seed", "config_hash", "avg_aoi_ms", "prr", "available_resource_fraction"],
        t.runs.iter().map(|(p, r, rec)| {
            vec![
                t.spec.axis.to_string(),
                t.spec.values[*p].to_string(),
                r.to_string(),
                rec.seed.to_string(),
                rec.config_hash.clone(),
                fmt_opt(rec.report.avg_aoi_ms),
                fmt_opt(rec.report.prr),
                fmt_opt(rec.report.available_resource_fraction),
            ]
        }),
    )
}
