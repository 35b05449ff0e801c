use std::io::BufWriter;
use std::time::Instant;

use aoi_starve_core::analytic::{average_aoi, AoiPrediction};
use aoi_starve_core::metrics::{MetricsAccumulator, MetricsCollector, MetricsReport, ResetRule, TdrKind};
use aoi_starve_core::sim::{run_with_sink, CsvEventWriter, SimOptions};
use aoi_starve_core::Config;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::output::{fmt_opt, OutDir};

pub const DEFAULT_THRESHOLDS_MS: [u64; 3] = [100, 120, 400];

/// Everything besides the config that changes what a run measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub sim: SimOptions,
    pub thresholds_ms: Vec<u64>,
    pub reset_rule: ResetRule,
    pub tdr_kind: TdrKind,
    /// Also stream every event to `events.csv`.
    pub events: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            sim: SimOptions::default(),
            thresholds_ms: DEFAULT_THRESHOLDS_MS.to_vec(),
            reset_rule: ResetRule::Latency,
            tdr_kind: TdrKind::UpdateGap,
            events: false,
        }
    }
}

/// Canonical text covering the config and the measurement settings.
pub fn canonical_text(cfg: &Config, settings: &RunSettings) -> String {
    let o = &settings.sim;
    let mut s = cfg.to_kv_string();
    s.push_str(&format!("phy={}\n", o.phy.model));
    s.push_str(&format!("half_duplex={}\n", o.phy.half_duplex));
    s.push_str(&format!("warmup_ms={}\n", o.warmup_for(&cfg.sps)));
    s.push_str(&format!("eve_start_ms={}\n", o.eve_start_ms));
    s.push_str(&format!("mobility={}\n", o.mobility));
    s.push_str(&format!("road_length_m={}\n", o.road_length_m.unwrap_or_else(|| cfg.road_length_m())));
    s.push_str(&format!("reset_rule={}\n", settings.reset_rule.as_str()));
    let th: Vec<String> = settings.thresholds_ms.iter().map(|t| t.to_string()).collect();
    s.push_str(&format!("thresholds_ms={}\n", th.join(",")));
    s
}

/// SHA-256 of [`canonical_text`], hex encoded.
pub fn config_hash(cfg: &Config, settings: &RunSettings) -> String {
    hex::encode(Sha256::digest(canonical_text(cfg, settings).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub config: Config,
    pub settings: RunSettings,
    pub report: MetricsReport,
    pub prediction: Option<AoiPrediction>,
    /// `|sim − analytic| / analytic`.
    pub analytic_gap: Option<f64>,
    pub eve_reserved: usize,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn x(&self) -> f64 {
        self.config.attack.effective_x()
    }
}

/// Runs one simulation; with `out`, writes its artifacts there.
pub fn cmd_simulate(cfg: &Config, settings: &RunSettings, out: Option<&OutDir>) -> Result<RunRecord, CliError> {
    let cfg = cfg.clone().validate()?;
    let start = Instant::now();
    let warmup = settings.sim.warmup_for(&cfg.sps);
    let collector = MetricsCollector::new(cfg.scenario.n_vehicles, warmup, &settings.thresholds_ms, settings.reset_rule);
    let (acc, world) = match (out, settings.events) {
        (Some(dir), true) => {
            let file = dir.create_file("events.csv")?;
            let mut sink = (collector, CsvEventWriter::new(BufWriter::new(file)));
            let world = run_with_sink(&cfg, &settings.sim, &mut sink)?;
            let (collector, writer) = sink;
            writer.finish().map_err(|e| CliError::csv(dir.path("events.csv"), e))?;
            (collector.finish(cfg.sim_duration_ms)?, world)
        }
        _ => {
            let mut collector = collector;
            let world = run_with_sink(&cfg, &settings.sim, &mut collector)?;
            (collector.finish(cfg.sim_duration_ms)?, world)
        }
    };
    let report = acc.report();
    let prediction = average_aoi(cfg.sps.p_sch, cfg.attack.effective_x(), cfg.sps.gamma, cfg.sps.phi).ok();
    let analytic_gap = match (report.avg_aoi_ms, prediction) {
        (Some(sim), Some(p)) => Some((sim - p.average_aoi_ms).abs() / p.average_aoi_ms),
        _ => None,
    };
    let record = RunRecord {
        config_hash: config_hash(&cfg, settings),
        seed: cfg.seed,
        eve_reserved: world.reservation_map().eve_count(),
        config: cfg,
        settings: settings.clone(),
        report,
        prediction,
        analytic_gap,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        write_run(dir, &record, &acc)?;
    }
    Ok(record)
}

pub fn write_run(dir: &OutDir, record: &RunRecord, acc: &MetricsAccumulator) -> Result<(), CliError> {
    dir.write("config.echo", canonical_text(&record.config, &record.settings))?;
    dir.write_json("summary.json", record)?;
    dir.write_csv("metrics.csv", &["metric", "value"], metric_rows(record))?;
    let mut tdr_rows = Vec::new();
    for &th in &record.settings.thresholds_ms {
        for kind in [TdrKind::UpdateGap, TdrKind::ResetAge, TdrKind::TimeFraction] {
            tdr_rows.push(vec![th.to_string(), kind.to_string(), fmt_opt(record.report.tdr(th, kind).ok())]);
        }
    }
    dir.write_csv("tdr.csv", &["threshold_ms", "kind", "tdr"], tdr_rows)?;
    let hist = |h: &std::collections::BTreeMap<u64, u64>| {
        h.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]).collect::<Vec<_>>()
    };
    dir.write_csv("reset_hist.csv", &["reset_ms", "count"], hist(&acc.reset_hist))?;
    dir.write_csv("gap_hist.csv", &["gap_ms", "count"], hist(&acc.gap_hist))?;
    Ok(())
}

fn metric_rows(r: &RunRecord) -> Vec<Vec<String>> {
    let m = &r.report;
    let p = r.prediction;
    let mut rows = vec![
        ("config_hash", r.config_hash.clone()),
        ("seed", r.seed.to_string()),
        ("attack_mode", r.config.attack.mode.to_string()),
        ("x", r.x().to_string()),
        ("avg_aoi_ms", fmt_opt(m.avg_aoi_ms)),
        ("avg_aoi_per_pair_ms", fmt_opt(m.avg_aoi_per_pair_ms)),
        ("reset_aoi_mean_ms", fmt_opt(m.reset_aoi_mean_ms)),
        ("mean_update_gap_ms", fmt_opt(m.mean_update_gap_ms)),
        ("analytic_aoi_ms", fmt_opt(p.map(|p| p.average_aoi_ms))),
        ("analytic_aoi_renewal_ms", fmt_opt(p.map(|p| p.average_aoi_renewal_ms))),
        ("analytic_gap", fmt_opt(r.analytic_gap)),
        ("prr", fmt_opt(m.prr)),
        ("available_resource_fraction", fmt_opt(m.available_resource_fraction)),
        ("eve_reserved", r.eve_reserved.to_string()),
    ];
    let counts = [
        ("n_pairs", m.n_pairs),
        ("n_pairs_no_data", m.n_pairs_no_data),
        ("n_tx", m.n_tx),
        ("n_receptions", m.n_receptions),
        ("n_collisions", m.n_collisions),
        ("n_phy_loss", m.n_phy_loss),
        ("n_out_of_range", m.n_out_of_range),
        ("n_dropped_packets", m.n_dropped_packets),
        ("n_missed_by_drop", m.n_missed_by_drop),
        ("observed_ms", m.observed_ms),
    ];
    rows.extend(counts.iter().map(|(k, v)| (*k, v.to_string())));
    rows.into_iter().map(|(k, v)| vec![k.to_string(), v]).collect()
}
