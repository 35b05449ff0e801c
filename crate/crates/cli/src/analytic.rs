use aoi_starve_core::analytic::{average_aoi, build_sps_dtmc, mean_first_passage_idle_to_tx, AoiPrediction};
use aoi_starve_core::Config;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::OutDir;

pub const DEFAULT_X_GRID: [f64; 4] = [0.0, 0.5, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticRow {
    pub x: f64,
    pub prediction: AoiPrediction,
    /// Mean first passage Idle to first transmission from the explicit
    /// chain, plus one queue slot.
    pub dtmc_c0_ms: Option<f64>,
}

pub fn cmd_analytic(cfg: &Config, xs: &[f64]) -> Result<Vec<AnalyticRow>, CliError> {
    cfg.clone().validate()?;
    xs.iter()
        .map(|&x| {
            let prediction = average_aoi(cfg.sps.p_sch, x, cfg.sps.gamma, cfg.sps.phi)?;
            let dtmc_c0_ms = build_sps_dtmc(&cfg.sps, prediction.p_sch_eff)
                .and_then(|m| mean_first_passage_idle_to_tx(&m))
                .map(|t| t + 1.0)
                .ok();
            Ok(AnalyticRow { x, prediction, dtmc_c0_ms })
        })
        .collect()
}

pub const ANALYTIC_CSV_HEADER: [&str; 9] = [
    "x",
    "p_sch_eff",
    "c0_ms",
    "dtmc_c0_ms",
    "expected_reset_ms",
    "mean_inter_success_ms",
    "second_moment_inter_success",
    "average_aoi_ms",
    "average_aoi_renewal_ms",
];

pub fn write_analytic(dir: &OutDir, cfg: &Config, rows: &[AnalyticRow]) -> Result<(), CliError> {
    dir.write("config.echo", cfg.to_kv_string())?;
    dir.write_json("summary.json", rows)?;
    dir.write_csv(
        "analytic.csv",
        &ANALYTIC_CSV_HEADER,
        rows.iter().map(|r| {
            let p = &r.prediction;
            vec![
                r.x.to_string(),
                format!("{:.9}", p.p_sch_eff),
                format!("{:.9}", p.c0_ms),
                r.dtmc_c0_ms.map(|v| format!("{v:.9}")).unwrap_or_default(),
                format!("{:.9}", p.expected_reset_ms),
                format!("{:.9}", p.mean_inter_success_ms),
                format!("{:.9}", p.second_moment_inter_success),
                format!("{:.9}", p.average_aoi_ms),
                format!("{:.9}", p.average_aoi_renewal_ms),
            ]
        }),
    )
}
