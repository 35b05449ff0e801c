//! Reception outcomes for the transmissions of one subframe.

use serde::{Deserialize, Serialize};

use crate::model::SpsParams;
use crate::rng::Rng;

use super::events::{RxEvent, RxOutcome, TxEvent};
use super::geometry::Geometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhyModel {
    /// Range gate, then independent success with probability `phi`.
    #[default]
    Abstract,
    /// Adds destructive overlap (no capture) and half-duplex misses.
    Collision,
}

impl std::str::FromStr for PhyModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abstract" => Ok(PhyModel::Abstract),
            "collision" => Ok(PhyModel::Collision),
            other => Err(format!("unknown PHY model `{other}` (expected abstract or collision)")),
        }
    }
}

impl std::fmt::Display for PhyModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhyModel::Abstract => "abstract",
            PhyModel::Collision => "collision",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhyOptions {
    pub model: PhyModel,
    /// A UE transmitting in a subframe misses everything else in it.
    pub half_duplex: bool,
    pub emit_out_of_range: bool,
}

impl Default for PhyOptions {
    fn default() -> Self {
        Self { model: PhyModel::Abstract, half_duplex: true, emit_out_of_range: false }
    }
}

/// Resolves every `(tx, rx)` pair of one subframe. Receivers are visited
/// in id order per transmission, so the draw sequence is deterministic.
pub fn resolve_receptions(
    txs: &[TxEvent],
    geo: &Geometry,
    sps: &SpsParams,
    phy: &PhyOptions,
    rng: &mut Rng,
) -> Vec<RxEvent> {
    let mut out = Vec::new();
    resolve_into(txs, geo, sps, phy, rng, &mut out);
    out
}

pub(crate) fn resolve_into(
    txs: &[TxEvent],
    geo: &Geometry,
    sps: &SpsParams,
    phy: &PhyOptions,
    rng: &mut Rng,
    out: &mut Vec<RxEvent>,
) {
    for (a, tx) in txs.iter().enumerate() {
        let mut emit = |rx_id: u32, outcome: RxOutcome| {
            out.push(RxEvent {
                tx_id: tx.tx_id,
                rx_id,
                gen_time_ms: tx.gen_time_ms,
                rx_time_ms: tx.tx_time_ms,
                csr: tx.csr,
                outcome,
            })
        };
        if phy.emit_out_of_range {
            for rx in 0..geo.len() as u32 {
                if rx == tx.tx_id {
                    continue;
                }
                if geo.in_range(tx.tx_id, rx) {
                    let o = outcome_at(txs, a, rx, geo, sps, phy, rng);
                    emit(rx, o);
                } else {
                    emit(rx, RxOutcome::OutOfRange);
                }
            }
        } else {
            for &rx in geo.neighbors(tx.tx_id) {
                let o = outcome_at(txs, a, rx, geo, sps, phy, rng);
                emit(rx, o);
            }
        }
    }
}

fn outcome_at(
    txs: &[TxEvent],
    a: usize,
    rx: u32,
    geo: &Geometry,
    sps: &SpsParams,
    phy: &PhyOptions,
    rng: &mut Rng,
) -> RxOutcome {
    if phy.model == PhyModel::Collision {
        let me = &txs[a];
        for (b, other) in txs.iter().enumerate() {
            if b == a {
                continue;
            }
            if other.tx_id == rx {
                if phy.half_duplex {
                    return RxOutcome::Collision;
                }
                continue;
            }
            if other.csr.overlaps(&me.csr) && geo.in_range(other.tx_id, rx) {
                return RxOutcome::Collision;
            }
        }
    }
    if sps.phi >= 1.0 || rng.bernoulli(sps.phi) {
        RxOutcome::Ok
    } else {
        RxOutcome::PhyLoss
    }
}
