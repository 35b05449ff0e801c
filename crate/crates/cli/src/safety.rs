use std::path::Path;

use aoi_starve_core::metrics::TdrKind;
use aoi_starve_core::safety::{evaluate_service, verdicts_to_json, write_verdicts_csv, SafetyVerdict, ServiceSpec};

use crate::error::CliError;
use crate::output::OutDir;
use crate::run::RunRecord;

const X_MATCH_TOL: f64 = 1e-9;

/// Verdicts for every service at every requested `x`, in that order.
pub fn cmd_safety(
    runs: &[RunRecord],
    xs: &[f64],
    services: &[ServiceSpec],
    windows_s: &[f64],
    kind: TdrKind,
) -> Result<Vec<SafetyVerdict>, CliError> {
    let find = |x: f64| runs.iter().find(|r| (r.x() - x).abs() <= X_MATCH_TOL);
    let missing: Vec<String> = xs.iter().filter(|&&x| find(x).is_none()).map(|x| x.to_string()).collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!("no completed run for x = {}", missing.join(", "))));
    }
    let mut out = Vec::new();
    for &x in xs {
        let run = find(x).expect("checked above");
        let rri = run.config.sps.t_rri_ms().round() as u64;
        for spec in services {
            out.push(evaluate_service(spec, &run.report, kind, x, windows_s, rri)?);
        }
    }
    Ok(out)
}

/// Reads the `summary.json` a `simulate` invocation left in `dir`.
pub fn load_run(dir: &Path) -> Result<RunRecord, CliError> {
    let p = dir.join("summary.json");
    let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: not a simulate summary: {e}", p.display())))
}

pub fn write_safety(dir: &OutDir, echo: &str, verdicts: &[SafetyVerdict]) -> Result<(), CliError> {
    dir.write("config.echo", echo)?;
    dir.write("summary.json", verdicts_to_json(verdicts) + "\n")?;
    let file = dir.create_file("safety.csv")?;
    write_verdicts_csv(std::io::BufWriter::new(file), verdicts).map_err(|e| CliError::csv(dir.path("safety.csv"), e))
}
