//! Shared domain types: MAC/timing parameters, scenario geometry, the
//! adversary configuration, candidate resources and the per-UE SPS state.
//!
//! Configuration text is a flat `key=value` file. Every key is optional and
//! falls back to the Table-I style defaults; an unknown key is an error.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Validation or parse failure, always naming the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("{field}: cannot parse `{value}`")]
    BadValue { field: &'static str, value: String },
    #[error("{field}: {reason}")]
    OutOfRange { field: &'static str, reason: String },
    #[error("degenerate starvation: no CSR ever found (attack_x = 1)")]
    DegenerateStarvation,
}

fn out_of_range(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::OutOfRange { field, reason: reason.into() }
}

/// MAC and timing parameters of the sidelink resource pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpsParams {
    pub delta_ms: f64,
    /// Subframes per resource reservation interval.
    pub gamma: u32,
    pub m_subchannels: u32,
    pub k_contiguous: u32,
    pub p_keep: f64,
    pub rc_min: u32,
    pub rc_max: u32,
    pub p_sch: f64,
    /// Per-attempt reception success probability.
    pub phi: f64,
    pub sensing_threshold_dbm: f64,
    /// Receiver awareness range in meters.
    pub raw_m: f64,
}

impl Default for SpsParams {
    fn default() -> Self {
        Self {
            delta_ms: 1.0,
            gamma: 100,
            m_subchannels: 5,
            k_contiguous: 1,
            p_keep: 0.4,
            rc_min: 5,
            rc_max: 15,
            p_sch: 1.0,
            phi: 1.0,
            sensing_threshold_dbm: -126.0,
            raw_m: 150.0,
        }
    }
}

impl SpsParams {
    /// Number of CSRs a UE can choose from: `Γ · (M − K + 1)`.
    pub fn selectable_csrs(&self) -> usize {
        self.gamma as usize * self.subchannel_starts() as usize
    }

    /// Distinct subchannel start positions for a `K`-wide CSR.
    pub fn subchannel_starts(&self) -> u32 {
        self.m_subchannels - self.k_contiguous + 1
    }

    pub fn t_rri_ms(&self) -> f64 {
        self.gamma as f64 * self.delta_ms
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.delta_ms != 1.0 {
            return Err(out_of_range(
                "delta_ms",
                format!("only 1 ms subframes are simulated, got {}", self.delta_ms),
            ));
        }
        if self.gamma < 1 {
            return Err(out_of_range("gamma", "must be >= 1"));
        }
        if self.m_subchannels < 1 {
            return Err(out_of_range("m_subchannels", "must be >= 1"));
        }
        if self.k_contiguous < 1 || self.k_contiguous > self.m_subchannels {
            return Err(out_of_range(
                "k_contiguous",
                format!("must lie in [1, m_subchannels={}], got {}", self.m_subchannels, self.k_contiguous),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_keep) {
            return Err(out_of_range("p_keep", format!("must lie in [0, 1], got {}", self.p_keep)));
        }
        if self.rc_min < 1 {
            return Err(out_of_range("rc_min", "must be >= 1"));
        }
        if self.rc_max < self.rc_min {
            return Err(out_of_range(
                "rc_max",
                format!("must be >= rc_min={}, got {}", self.rc_min, self.rc_max),
            ));
        }
        if !(self.p_sch > 0.0 && self.p_sch <= 1.0) {
            return Err(out_of_range("p_sch", format!("must lie in (0, 1], got {}", self.p_sch)));
        }
        if !(self.phi > 0.0 && self.phi <= 1.0) {
            return Err(out_of_range("phi", format!("must lie in (0, 1], got {}", self.phi)));
        }
        if !self.sensing_threshold_dbm.is_finite() {
            return Err(out_of_range("sensing_threshold_dbm", "must be finite"));
        }
        if !(self.raw_m > 0.0 && self.raw_m.is_finite()) {
            return Err(out_of_range("raw_m", format!("must be a positive distance, got {}", self.raw_m)));
        }
        Ok(())
    }
}

/// Road scenario. Vehicles sit on a 1-D road whose length follows from the
/// fleet size and the density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n_vehicles: u32,
    pub density_per_km: f64,
    pub lanes: u32,
    pub speed_kmh: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self { n_vehicles: 100, density_per_km: 100.0, lanes: 3, speed_kmh: 70.0 }
    }
}

impl ScenarioParams {
    pub fn road_length_m(&self) -> f64 {
        1000.0 * self.n_vehicles as f64 / self.density_per_km
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_vehicles < 1 {
            return Err(out_of_range("n_vehicles", "must be >= 1"));
        }
        if !(self.density_per_km > 0.0 && self.density_per_km.is_finite()) {
            return Err(out_of_range("density_per_km", format!("must be > 0, got {}", self.density_per_km)));
        }
        if self.lanes < 1 {
            return Err(out_of_range("lanes", "must be >= 1"));
        }
        if !(self.speed_kmh >= 0.0 && self.speed_kmh.is_finite()) {
            return Err(out_of_range("speed_kmh", format!("must be >= 0, got {}", self.speed_kmh)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Off,
    /// Thins the per-ms allocation success directly to `(1 − x)·p_sch`.
    Probabilistic,
    /// Explicit adversary announcing reservations on a rotating CSR set.
    ActiveEve,
}

impl AttackMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackMode::Off => "off",
            AttackMode::Probabilistic => "probabilistic",
            AttackMode::ActiveEve => "active_eve",
        }
    }
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "off" => Ok(AttackMode::Off),
            "probabilistic" => Ok(AttackMode::Probabilistic),
            "active_eve" | "active-eve" => Ok(AttackMode::ActiveEve),
            other => Err(ConfigError::BadValue { field: "attack_mode", value: other.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    /// Long-run fraction of selectable CSRs made unavailable.
    pub x: f64,
    pub mode: AttackMode,
    pub eve_rri_ms: u32,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self { x: 0.0, mode: AttackMode::Off, eve_rri_ms: 1 }
    }
}

impl AttackParams {
    /// Starvation fraction actually applied; zero when the attack is off.
    pub fn effective_x(&self) -> f64 {
        match self.mode {
            AttackMode::Off => 0.0,
            _ => self.x,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.x) {
            return Err(out_of_range("attack_x", format!("must lie in [0, 1], got {}", self.x)));
        }
        if self.eve_rri_ms < 1 {
            return Err(out_of_range("eve_rri_ms", "must be >= 1"));
        }
        if self.mode != AttackMode::Off && self.x >= 1.0 {
            return Err(ConfigError::DegenerateStarvation);
        }
        Ok(())
    }
}

/// A candidate resource: one subframe offset within the RRI and `K`
/// contiguous subchannels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Csr {
    pub subframe_offset: u32,
    pub subchannel_start: u32,
    pub width: u32,
}

impl Csr {
    pub fn new(subframe_offset: u32, subchannel_start: u32, width: u32) -> Self {
        Self { subframe_offset, subchannel_start, width }
    }

    /// Flat index in `[0, Γ·(M−K+1))`, subframe-major.
    pub fn index(&self, sps: &SpsParams) -> usize {
        self.subframe_offset as usize * sps.subchannel_starts() as usize + self.subchannel_start as usize
    }

    pub fn from_index(idx: usize, sps: &SpsParams) -> Self {
        let starts = sps.subchannel_starts() as usize;
        Self::new((idx / starts) as u32, (idx % starts) as u32, sps.k_contiguous)
    }

    pub fn is_valid(&self, sps: &SpsParams) -> bool {
        self.width == sps.k_contiguous
            && self.subframe_offset < sps.gamma
            && self.subchannel_start + self.width <= sps.m_subchannels
    }

    /// Whether two resources share a subframe and at least one subchannel.
    pub fn overlaps(&self, other: &Csr) -> bool {
        self.subframe_offset == other.subframe_offset
            && self.subchannel_start < other.subchannel_start + other.width
            && other.subchannel_start < self.subchannel_start + self.width
    }
}

/// Per-vehicle SPS state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UeState {
    /// Sensing for a new resource, one allocation attempt per ms.
    Idle { ms_in_idle: u64 },
    /// Aligning to the chosen resource; `w` subframes left.
    Wait { w: u32, csr: Csr },
    /// Holding `csr`; `rc` transmissions left before the keep/release
    /// decision, `tau` subframes to the next one.
    Active { rc: u32, tau: u32, csr: Csr },
}

impl UeState {
    pub fn csr(&self) -> Option<Csr> {
        match *self {
            UeState::Idle { .. } => None,
            UeState::Wait { csr, .. } | UeState::Active { csr, .. } => Some(csr),
        }
    }

    pub fn is_idle(&self) -> bool {
        matches!(self, UeState::Idle { .. })
    }
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub sps: SpsParams,
    pub scenario: ScenarioParams,
    pub attack: AttackParams,
    pub seed: u64,
    pub sim_duration_ms: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            sps: SpsParams::default(),
            scenario: ScenarioParams::default(),
            attack: AttackParams::default(),
            seed: 42,
            sim_duration_ms: 1_000_000,
        }
    }
}

/// Every accepted configuration key, in canonical order.
pub const CONFIG_KEYS: [&str; 20] = [
    "delta_ms",
    "gamma",
    "m_subchannels",
    "k_contiguous",
    "p_keep",
    "rc_min",
    "rc_max",
    "p_sch",
    "phi",
    "sensing_threshold_dbm",
    "raw_m",
    "n_vehicles",
    "density_per_km",
    "lanes",
    "speed_kmh",
    "attack_mode",
    "attack_x",
    "eve_rri_ms",
    "seed",
    "sim_duration_ms",
];

fn parse_field<T: FromStr>(field: &'static str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| ConfigError::BadValue { field, value: value.trim().to_string() })
}

impl Config {
    /// Parses `key=value` text on top of the defaults. Blank lines and `#`
    /// comments are ignored. The result is not yet validated.
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: line_no, text: raw.to_string() })?;
            let key = key.trim();
            if !CONFIG_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line: line_no, key: key.to_string() });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey { line: line_no, key: key.to_string() });
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "delta_ms" => self.sps.delta_ms = parse_field("delta_ms", value)?,
            "gamma" => self.sps.gamma = parse_field("gamma", value)?,
            "m_subchannels" => self.sps.m_subchannels = parse_field("m_subchannels", value)?,
            "k_contiguous" => self.sps.k_contiguous = parse_field("k_contiguous", value)?,
            "p_keep" => self.sps.p_keep = parse_field("p_keep", value)?,
            "rc_min" => self.sps.rc_min = parse_field("rc_min", value)?,
            "rc_max" => self.sps.rc_max = parse_field("rc_max", value)?,
            "p_sch" => self.sps.p_sch = parse_field("p_sch", value)?,
            "phi" => self.sps.phi = parse_field("phi", value)?,
            "sensing_threshold_dbm" => {
                self.sps.sensing_threshold_dbm = parse_field("sensing_threshold_dbm", value)?
            }
            "raw_m" => self.sps.raw_m = parse_field("raw_m", value)?,
            "n_vehicles" => self.scenario.n_vehicles = parse_field("n_vehicles", value)?,
            "density_per_km" => self.scenario.density_per_km = parse_field("density_per_km", value)?,
            "lanes" => self.scenario.lanes = parse_field("lanes", value)?,
            "speed_kmh" => self.scenario.speed_kmh = parse_field("speed_kmh", value)?,
            "attack_mode" => self.attack.mode = value.parse()?,
            "attack_x" => self.attack.x = parse_field("attack_x", value)?,
            "eve_rri_ms" => self.attack.eve_rri_ms = parse_field("eve_rri_ms", value)?,
            "seed" => self.seed = parse_field("seed", value)?,
            "sim_duration_ms" => self.sim_duration_ms = parse_field("sim_duration_ms", value)?,
            _ => return Err(ConfigError::UnknownKey { line: 0, key: key.to_string() }),
        }
        Ok(())
    }

    /// Canonical `key=value` rendering; reparses to an equal config.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            out.push_str(key);
            out.push('=');
            out.push_str(&self.value_of(key));
            out.push('\n');
        }
        out
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "delta_ms" => self.sps.delta_ms.to_string(),
            "gamma" => self.sps.gamma.to_string(),
            "m_subchannels" => self.sps.m_subchannels.to_string(),
            "k_contiguous" => self.sps.k_contiguous.to_string(),
            "p_keep" => self.sps.p_keep.to_string(),
            "rc_min" => self.sps.rc_min.to_string(),
            "rc_max" => self.sps.rc_max.to_string(),
            "p_sch" => self.sps.p_sch.to_string(),
            "phi" => self.sps.phi.to_string(),
            "sensing_threshold_dbm" => self.sps.sensing_threshold_dbm.to_string(),
            "raw_m" => self.sps.raw_m.to_string(),
            "n_vehicles" => self.scenario.n_vehicles.to_string(),
            "density_per_km" => self.scenario.density_per_km.to_string(),
            "lanes" => self.scenario.lanes.to_string(),
            "speed_kmh" => self.scenario.speed_kmh.to_string(),
            "attack_mode" => self.attack.mode.to_string(),
            "attack_x" => self.attack.x.to_string(),
            "eve_rri_ms" => self.attack.eve_rri_ms.to_string(),
            "seed" => self.seed.to_string(),
            "sim_duration_ms" => self.sim_duration_ms.to_string(),
            _ => unreachable!("not a config key: {key}"),
        }
    }

    pub fn validate(self) -> Result<Config, ConfigError> {
        validate_params(self.sps, self.scenario, self.attack).map(|v| Config {
            sps: v.sps,
            scenario: v.scenario,
            attack: v.attack,
            seed: self.seed,
            sim_duration_ms: self.sim_duration_ms,
        })
    }

    pub fn road_length_m(&self) -> f64 {
        self.scenario.road_length_m()
    }
}

/// Output of [`validate_params`]: the three parameter blocks with every
/// invariant checked, plus derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedParams {
    pub sps: SpsParams,
    pub scenario: ScenarioParams,
    pub attack: AttackParams,
    pub road_length_m: f64,
    pub gamma: u32,
    pub effective_x: f64,
}

pub fn validate_params(
    sps: SpsParams,
    scenario: ScenarioParams,
    attack: AttackParams,
) -> Result<ValidatedParams, ConfigError> {
    sps.validate()?;
    scenario.validate()?;
    attack.validate()?;
    Ok(ValidatedParams {
        road_length_m: scenario.road_length_m(),
        gamma: sps.gamma,
        effective_x: attack.effective_x(),
        sps,
        scenario,
        attack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let v = validate_params(SpsParams::default(), ScenarioParams::default(), AttackParams::default())
            .unwrap();
        assert_eq!(v.gamma, 100);
        assert_eq!(v.sps.m_subchannels, 5);
        assert_eq!(v.road_length_m, 1000.0);
        assert_eq!(v.sps.selectable_csrs(), 500);
    }

    #[test]
    fn p_keep_out_of_range_names_field() {
        let sps = SpsParams { p_keep: 1.5, ..Default::default() };
        let err = validate_params(sps, ScenarioParams::default(), AttackParams::default()).unwrap_err();
        assert!(matches!(err, ConfigError::OutOfRange { field: "p_keep", .. }));
        assert!(err.to_string().contains("p_keep"));
    }

    #[test]
    fn attack_off_zeroes_starvation() {
        let atk = AttackParams { x: 0.0, mode: AttackMode::Off, eve_rri_ms: 1 };
        let v = validate_params(SpsParams::default(), ScenarioParams::default(), atk).unwrap();
        assert_eq!(v.effective_x, 0.0);
        let atk = AttackParams { x: 0.7, mode: AttackMode::Off, eve_rri_ms: 1 };
        assert_eq!(atk.effective_x(), 0.0);
    }

    #[test]
    fn full_starvation_rejected() {
        let atk = AttackParams { x: 1.0, mode: AttackMode::Probabilistic, eve_rri_ms: 1 };
        assert_eq!(atk.validate(), Err(ConfigError::DegenerateStarvation));
    }

    #[test]
    fn invariant_violations() {
        let bad = [
            SpsParams { gamma: 0, ..Default::default() },
            SpsParams { k_contiguous: 6, ..Default::default() },
            SpsParams { k_contiguous: 0, ..Default::default() },
            SpsParams { rc_min: 0, ..Default::default() },
            SpsParams { rc_min: 9, rc_max: 8, ..Default::default() },
            SpsParams { p_sch: 0.0, ..Default::default() },
            SpsParams { phi: 0.0, ..Default::default() },
            SpsParams { phi: 1.2, ..Default::default() },
        ];
        for sps in bad {
            assert!(sps.validate().is_err(), "{sps:?}");
        }
        assert!(ScenarioParams { n_vehicles: 0, ..Default::default() }.validate().is_err());
        assert!(ScenarioParams { density_per_km: 0.0, ..Default::default() }.validate().is_err());
        assert!(ScenarioParams { lanes: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = Config::parse("gamma=100\nwarp_speed=9\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { line: 2, key: "warp_speed".into() });
    }

    #[test]
    fn parse_with_comments_and_modes() {
        let cfg = Config::parse("# scenario\n attack_mode = active-eve \nattack_x=0.9 # heavy\n\nseed=7\n")
            .unwrap();
        assert_eq!(cfg.attack.mode, AttackMode::ActiveEve);
        assert_eq!(cfg.attack.x, 0.9);
        assert_eq!(cfg.seed, 7);
        assert!(Config::parse("gamma").is_err());
        assert!(Config::parse("gamma=1\ngamma=2").is_err());
        assert!(matches!(
            Config::parse("gamma=abc"),
            Err(ConfigError::BadValue { field: "gamma", .. })
        ));
    }

    #[test]
    fn csr_index_round_trip_and_overlap() {
        let sps = SpsParams { k_contiguous: 2, ..Default::default() };
        for idx in 0..sps.selectable_csrs() {
            let c = Csr::from_index(idx, &sps);
            assert!(c.is_valid(&sps));
            assert_eq!(c.index(&sps), idx);
        }
        let a = Csr::new(3, 0, 2);
        assert!(a.overlaps(&Csr::new(3, 1, 2)));
        assert!(!a.overlaps(&Csr::new(3, 2, 2)));
        assert!(!a.overlaps(&Csr::new(4, 0, 2)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_config() -> impl Strategy<Value = Config> {
            (
                (1u32..300, 1u32..10, 0.0f64..=1.0, 1u32..10, 0u32..10),
                (0.01f64..=1.0, 0.01f64..=1.0, 1.0f64..500.0),
                (1u32..400, 1.0f64..300.0, 1u32..5, 0.0f64..150.0),
                (0usize..3, 0.0f64..0.99, 1u32..20, any::<u64>(), 0u64..10_000_000),
            )
                .prop_map(|(a, b, c, d)| {
                    let (gamma, m, p_keep, rc_min, rc_extra) = a;
                    let (p_sch, phi, raw_m) = b;
                    let (n, density, lanes, speed) = c;
                    let (mode, x, eve_rri, seed, dur) = d;
                    Config {
                        sps: SpsParams {
                            gamma,
                            m_subchannels: m,
                            k_contiguous: 1 + (m - 1) / 2,
                            p_keep,
                            rc_min,
                            rc_max: rc_min + rc_extra,
                            p_sch,
                            phi,
                            raw_m,
                            ..Default::default()
                        },
                        scenario: ScenarioParams { n_vehicles: n, density_per_km: density, lanes, speed_kmh: speed },
                        attack: AttackParams {
                            x,
                            mode: [AttackMode::Off, AttackMode::Probabilistic, AttackMode::ActiveEve][mode],
                            eve_rri_ms: eve_rri,
                        },
                        seed,
                        sim_duration_ms: dur,
                    }
                })
        }

        proptest! {
            #[test]
            fn kv_round_trip(cfg in any_config()) {
                let valid = cfg.validate().unwrap();
                let text = valid.to_kv_string();
                let again = Config::parse(&text).unwrap().validate().unwrap();
                prop_assert_eq!(valid, again);
            }
        }
    }
}
