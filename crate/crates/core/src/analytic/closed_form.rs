//! Closed-form AoI model of SPS under resource starvation.
//!
//! All times are in subframes, which equal milliseconds for 1 ms subframes.

use serde::{Deserialize, Serialize};

use super::AnalyticError;

/// Tolerance for the agreement of the two routes to the average AoI.
pub const ROUTE_AGREEMENT_TOL: f64 = 1e-9;

/// Allocation success probability per ms once the adversary removes a
/// fraction `x` of the usable resources: `(1 − x)·p_sch`.
pub fn effective_sch_prob(p_sch: f64, x: f64) -> Result<f64, AnalyticError> {
    if !(p_sch > 0.0 && p_sch <= 1.0) {
        return Err(AnalyticError::Domain { name: "p_sch", value: p_sch, range: "(0, 1]" });
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(AnalyticError::Domain { name: "x", value: x, range: "[0, 1]" });
    }
    if x == 1.0 {
        return Err(AnalyticError::DegenerateStarvation);
    }
    Ok((1.0 - x) * p_sch)
}

fn check_gamma(gamma: u32) -> Result<f64, AnalyticError> {
    if gamma == 0 {
        return Err(AnalyticError::Domain { name: "gamma", value: 0.0, range: ">= 1" });
    }
    Ok(gamma as f64)
}

fn check_phi(phi: f64) -> Result<(), AnalyticError> {
    if !(phi > 0.0 && phi <= 1.0) {
        return Err(AnalyticError::Domain { name: "phi", value: phi, range: "(0, 1]" });
    }
    Ok(())
}

fn check_p_eff(p: f64) -> Result<(), AnalyticError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(AnalyticError::Domain { name: "p_sch_eff", value: p, range: "(0, 1]" });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterSuccessMoments {
    pub mean: f64,
    pub second_moment: f64,
}

/// First two moments of the time between successful receptions.
///
/// One attempt happens per RRI and each succeeds with probability `phi`,
/// so the gap is `Γ·H` with `H` geometric on `{1, 2, …}`:
/// `E[T] = Γ/φ`, `E[T²] = Γ²(2 − φ)/φ²`.
pub fn inter_success_moments(gamma: u32, phi: f64) -> Result<InterSuccessMoments, AnalyticError> {
    let g = check_gamma(gamma)?;
    check_phi(phi)?;
    Ok(InterSuccessMoments { mean: g / phi, second_moment: g * g * (2.0 - phi) / (phi * phi) })
}

/// Mean age of a successfully received packet:
/// idle dwell `1/P'` + alignment `(Γ−1)/2` + one full RRI + one queue slot.
pub fn reset_aoi_c0(p_sch_eff: f64, gamma: u32) -> Result<f64, AnalyticError> {
    check_p_eff(p_sch_eff)?;
    let g = check_gamma(gamma)?;
    Ok(1.0 / p_sch_eff + (g - 1.0) / 2.0 + g + 1.0)
}

/// Mean reset level `E[D] = C₀ + (1/φ − 1)·Γ`.
pub fn expected_reset(p_sch_eff: f64, gamma: u32, phi: f64) -> Result<f64, AnalyticError> {
    check_phi(phi)?;
    let c0 = reset_aoi_c0(p_sch_eff, gamma)?;
    Ok(c0 + (1.0 / phi - 1.0) * gamma as f64)
}

/// Everything the closed-form model predicts for one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoiPrediction {
    pub p_sch_eff: f64,
    pub c0_ms: f64,
    pub expected_reset_ms: f64,
    pub mean_inter_success_ms: f64,
    pub second_moment_inter_success: f64,
    /// `C₀ + Γ(2/φ − 3/2)`.
    pub average_aoi_ms: f64,
    /// `E[D] + E[T²]/(2E[T])`; equals `average_aoi_ms` up to rounding.
    pub average_aoi_renewal_ms: f64,
}

/// Time-average AoI, evaluated through both the renewal expression and the
/// simplified closed form.
pub fn average_aoi(p_sch: f64, x: f64, gamma: u32, phi: f64) -> Result<AoiPrediction, AnalyticError> {
    let p_eff = effective_sch_prob(p_sch, x)?;
    let moments = inter_success_moments(gamma, phi)?;
    let c0 = reset_aoi_c0(p_eff, gamma)?;
    let reset = expected_reset(p_eff, gamma, phi)?;
    let g = gamma as f64;

    let renewal = reset + moments.second_moment / (2.0 * moments.mean);
    let closed = c0 + g * (2.0 / phi - 1.5);
    let scale = closed.abs().max(1.0);
    if (renewal - closed).abs() > ROUTE_AGREEMENT_TOL * scale {
        return Err(AnalyticError::RouteMismatch { renewal, closed });
    }
    Ok(AoiPrediction {
        p_sch_eff: p_eff,
        c0_ms: c0,
        expected_reset_ms: reset,
        mean_inter_success_ms: moments.mean,
        second_moment_inter_success: moments.second_moment,
        average_aoi_ms: closed,
        average_aoi_renewal_ms: renewal,
    })
}
