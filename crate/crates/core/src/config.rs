//! TOML run configuration with `key=value` overrides.
//!
//! ```toml
//! scenario = 4              # preset shortcut, same as [impairments] preset
//!
//! [geometry]
//! m = 16
//! n = 16
//! l_max = 2
//! qam = 4
//! bandwidth_hz = 10e6
//!
//! [sim]
//! snr_db_grid = [10, 15, 20]
//! ```
//!
//! Every section is optional; unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;

use crate::channel::ChannelProfile;
use crate::detect::{DetectorConfig, DetectorKind};
use crate::error::{OtsmError, Result};
use crate::framing::FrameGeometry;
use crate::harness::{BoundSettings, SimConfig, SweepPlan};
use crate::impairments::{HwiScenario, Impairment, IqiParams, PaModel, PaSum, PnModel, StoParams};
use crate::verify::VerifySettings;
use crate::C64;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<u32>,
    geometry: Option<RawGeometry>,
    channel: Option<RawChannel>,
    impairments: Option<RawImpairments>,
    csi: Option<RawCsi>,
    detector: Option<RawDetector>,
    sim: Option<RawSim>,
    bound: Option<RawBound>,
    sweep: Option<RawSweep>,
    verify: Option<RawVerify>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    m: Option<usize>,
    n: Option<usize>,
    l_max: Option<usize>,
    qam: Option<u32>,
    bandwidth_hz: Option<f64>,
    delta_f_hz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    profile: Option<String>,
    delays_ns: Option<Vec<f64>>,
    powers_db: Option<Vec<f64>>,
    speed_kph: Option<f64>,
    carrier_hz: Option<f64>,
    truncate: Option<bool>,
    round_delays: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImpairments {
    preset: Option<u32>,
    tx_iqi_gain_db: Option<f64>,
    tx_iqi_phase_deg: Option<f64>,
    rx_iqi_gain_db: Option<f64>,
    rx_iqi_phase_deg: Option<f64>,
    tx_dco_db: Option<f64>,
    rx_dco_db: Option<f64>,
    tx_pn_var: Option<f64>,
    rx_pn_var: Option<f64>,
    pn_model: Option<PnModel>,
    pa_depth: Option<usize>,
    pa_order: Option<usize>,
    /// `[[re, im], ...]`, row-major over (memory, order).
    pa_coeffs: Option<Vec<[f64; 2]>>,
    pa_default_coeffs: Option<bool>,
    pa_sum: Option<PaSum>,
    cfo_hz: Option<f64>,
    sto_window: Option<[i64; 2]>,
    sto_int_offset: Option<i64>,
    sto_frac_offset: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCsi {
    b: Option<f64>,
    b_sq: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    kind: Option<String>,
    max_iters: Option<usize>,
    delta: Option<f64>,
    ml_max_candidates: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    snr_db_grid: Option<Vec<f64>>,
    min_bits: Option<u64>,
    min_errors: Option<u64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBound {
    snr_db_grid: Option<Vec<f64>>,
    policy: Option<String>,
    sampled_pairs: Option<usize>,
    max_exhaustive_bits: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    base: Option<u32>,
    levels: Option<Vec<u32>>,
    impairments: Option<Vec<Impairment>>,
    snr_db: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    frames: Option<usize>,
    noise_draws: Option<usize>,
    instances: Option<usize>,
}

/// Section-qualified names of every accepted key, used to resolve bare
/// override keys such as `snr_db_grid=10,20`.
const KEYS: &[(&str, &[&str])] = &[
    ("geometry", &["m", "n", "l_max", "qam", "bandwidth_hz", "delta_f_hz"]),
    (
        "channel",
        &[
            "profile",
            "delays_ns",
            "powers_db",
            "speed_kph",
            "carrier_hz",
            "truncate",
            "round_delays",
        ],
    ),
    (
        "impairments",
        &[
            "preset",
            "tx_iqi_gain_db",
            "tx_iqi_phase_deg",
            "rx_iqi_gain_db",
            "rx_iqi_phase_deg",
            "tx_dco_db",
            "rx_dco_db",
            "tx_pn_var",
            "rx_pn_var",
            "pn_model",
            "pa_depth",
            "pa_order",
            "pa_coeffs",
            "pa_default_coeffs",
            "pa_sum",
            "cfo_hz",
            "sto_window",
            "sto_int_offset",
            "sto_frac_offset",
        ],
    ),
    ("csi", &["b", "b_sq"]),
    ("detector", &["kind", "max_iters", "delta", "ml_max_candidates"]),
    ("sim", &["snr_db_grid", "min_bits", "min_errors", "seed"]),
    (
        "bound",
        &["snr_db_grid", "policy", "sampled_pairs", "max_exhaustive_bits"],
    ),
    ("sweep", &["base", "levels", "impairments", "snr_db"]),
    ("verify", &["frames", "noise_draws", "instances"]),
];

/// Everything a CLI invocation can need.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub bound: BoundSettings,
    pub sweep: SweepPlan,
    pub verify: VerifySettings,
    /// False when the file had no `[geometry]` section and defaults were used.
    pub geometry_given: bool,
}

/// Flat list keys; a single override value becomes a one-element list.
const LIST_KEYS: &[&str] = &[
    "delays_ns",
    "powers_db",
    "snr_db_grid",
    "levels",
    "impairments",
    "snr_db",
];

fn resolve_key(key: &str) -> Result<Vec<String>> {
    let parts: Vec<String> = key.split('.').map(|s| s.trim().to_string()).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(OtsmError::config(key, "malformed override key"));
    }
    if parts.len() > 1 || parts[0] == "scenario" {
        return Ok(parts);
    }
    let hits: Vec<&str> = KEYS
        .iter()
        .filter(|(_, ks)| ks.contains(&parts[0].as_str()))
        .map(|(s, _)| *s)
        .collect();
    match hits.as_slice() {
        [one] => Ok(vec![one.to_string(), parts[0].clone()]),
        // The simulation section wins when a bare key is shared.
        many if many.contains(&"sim") => Ok(vec!["sim".into(), parts[0].clone()]),
        [] => Err(OtsmError::config(key, "unknown key")),
        many => Err(OtsmError::config(
            key,
            format!("ambiguous key; qualify it with one of: {}", many.join(", ")),
        )),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    let attempt = |s: &str| s.parse::<toml::Table>().ok().and_then(|mut t| t.remove("v"));
    attempt(&format!("v = {raw}"))
        .or_else(|| attempt(&format!("v = [{raw}]")))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `key=value` override to a parsed document.
pub fn apply_override(doc: &mut toml::Table, kv: &str) -> Result<()> {
    let (key, value) = kv
        .split_once('=')
        .ok_or_else(|| OtsmError::config(kv, "override must look like key=value"))?;
    let path = resolve_key(key.trim())?;
    let mut table = doc;
    for part in &path[..path.len() - 1] {
        let entry = table
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| OtsmError::config(key.trim(), format!("`{part}` is not a section")))?;
    }
    let leaf = path[path.len() - 1].clone();
    let value = match parse_value(value) {
        v if LIST_KEYS.contains(&leaf.as_str()) && !v.is_array() => toml::Value::Array(vec![v]),
        v => v,
    };
    table.insert(leaf, value);
    Ok(())
}

fn toml_error(e: toml::de::Error) -> OtsmError {
    let msg = e.message().to_string();
    let key = msg
        .split_once("unknown field `")
        .and_then(|(_, rest)| rest.split_once('`'))
        .map(|(k, _)| k.to_string())
        .or_else(|| {
            msg.split_once("unknown variant `")
                .and_then(|(_, rest)| rest.split_once('`'))
                .map(|(k, _)| k.to_string())
        })
        .unwrap_or_else(|| "config".to_string());
    OtsmError::config(key, msg)
}

/// Parses text plus overrides into a validated configuration.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut doc: toml::Table = text.parse().map_err(toml_error)?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let raw: RawConfig = toml::Value::Table(doc).try_into().map_err(toml_error)?;
    build(raw)
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| OtsmError::config("--config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, overrides)
}

fn build_geometry(raw: RawGeometry) -> Result<FrameGeometry> {
    let m = raw.m.unwrap_or(16);
    let n = raw.n.unwrap_or(16);
    let delta_f = match (raw.bandwidth_hz, raw.delta_f_hz) {
        (Some(_), Some(_)) => {
            return Err(OtsmError::config(
                "geometry.delta_f_hz",
                "give either bandwidth_hz or delta_f_hz, not both",
            ))
        }
        (_, Some(df)) => df,
        (bw, None) => bw.unwrap_or(10e6) / m as f64,
    };
    FrameGeometry::new(m, n, raw.l_max.unwrap_or(2), delta_f, raw.qam.unwrap_or(4)).map_err(|e| match e {
        OtsmError::Geometry(msg) => OtsmError::config("geometry", msg),
        other => other,
    })
}

fn build_profile(raw: &RawChannel) -> Result<ChannelProfile> {
    let name = raw
        .profile
        .as_deref()
        .unwrap_or(if raw.delays_ns.is_some() { "custom" } else { "eva" });
    let p = match name {
        "eva" => {
            if raw.delays_ns.is_some() || raw.powers_db.is_some() {
                return Err(OtsmError::config(
                    "channel.delays_ns",
                    "set profile = \"custom\" to give taps",
                ));
            }
            ChannelProfile::eva()
        }
        "custom" => ChannelProfile {
            name: "custom".into(),
            tap_delays_ns: raw
                .delays_ns
                .clone()
                .ok_or_else(|| OtsmError::config("channel.delays_ns", "required for a custom profile"))?,
            tap_powers_db: raw
                .powers_db
                .clone()
                .ok_or_else(|| OtsmError::config("channel.powers_db", "required for a custom profile"))?,
        },
        other => {
            return Err(OtsmError::config(
                "channel.profile",
                format!("unknown profile `{other}`"),
            ))
        }
    };
    p.validate()
        .map_err(|e| OtsmError::config("channel.delays_ns", e.to_string()))?;
    Ok(p)
}

fn build_scenario(top: Option<u32>, raw: RawImpairments) -> Result<(HwiScenario, Option<u32>)> {
    let preset = match (top, raw.preset) {
        (Some(_), Some(_)) => {
            return Err(OtsmError::config(
                "impairments.preset",
                "preset given both as top-level `scenario` and in [impairments]",
            ))
        }
        (a, b) => a.or(b),
    };
    let mut sc = HwiScenario::preset(preset.unwrap_or(0))?;
    let mut touched = false;
    let mut set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
            touched = true;
        }
    };
    set(&mut sc.tx_iqi.gain_db, raw.tx_iqi_gain_db);
    set(&mut sc.tx_iqi.phase_deg, raw.tx_iqi_phase_deg);
    set(&mut sc.rx_iqi.gain_db, raw.rx_iqi_gain_db);
    set(&mut sc.rx_iqi.phase_deg, raw.rx_iqi_phase_deg);
    set(&mut sc.tx_dco_db, raw.tx_dco_db);
    set(&mut sc.rx_dco_db, raw.rx_dco_db);
    set(&mut sc.tx_pn_var, raw.tx_pn_var);
    set(&mut sc.rx_pn_var, raw.rx_pn_var);
    set(&mut sc.cfo_hz, raw.cfo_hz);
    if let Some(m) = raw.pn_model {
        sc.pn_model = m;
        touched = true;
    }
    if raw.pa_depth.is_some() || raw.pa_order.is_some() || raw.pa_coeffs.is_some() || raw.pa_default_coeffs.is_some() {
        touched = true;
        let depth = raw.pa_depth.unwrap_or(sc.pa.depth);
        let order = raw.pa_order.unwrap_or(sc.pa.order);
        sc.pa = match (raw.pa_coeffs, raw.pa_default_coeffs.unwrap_or(false)) {
            (Some(_), true) => {
                return Err(OtsmError::config(
                    "impairments.pa_coeffs",
                    "give pa_coeffs or pa_default_coeffs = true, not both",
                ))
            }
            (Some(c), false) => PaModel {
                depth,
                order,
                coeffs: c.iter().map(|[re, im]| C64::new(*re, *im)).collect(),
                sum: PaSum::Rectangular,
            },
            (None, true) => PaModel::with_default_coeffs(depth, order),
            (None, false) if (depth, order) == (0, 0) => PaModel::identity(),
            (None, false) => {
                return Err(OtsmError::config(
                    "impairments.pa_coeffs",
                    format!(
                        "missing coefficient table for (M_ρ, N_ρ) = ({depth}, {order}); \
                         give pa_coeffs or set pa_default_coeffs = true"
                    ),
                ))
            }
        };
    }
    if let Some(s) = raw.pa_sum {
        sc.pa.sum = s;
        touched = true;
    }
    if let Some([i1, i2]) = raw.sto_window {
        sc.sto = StoParams::from_window(i1, i2);
        touched = true;
    }
    if let Some(v) = raw.sto_int_offset {
        sc.sto.int_offset = v;
        touched = true;
    }
    if let Some(v) = raw.sto_frac_offset {
        sc.sto.frac_offset = v;
        touched = true;
    }
    for (key, iqi) in [
        ("impairments.tx_iqi_gain_db", sc.tx_iqi),
        ("impairments.rx_iqi_gain_db", sc.rx_iqi),
    ] {
        check_iqi(key, iqi)?;
    }
    sc.validate()?;
    let id = if touched { None } else { Some(preset.unwrap_or(0)) };
    Ok((sc, id))
}

fn check_iqi(key: &str, iqi: IqiParams) -> Result<()> {
    if !(iqi.gain_db.is_finite() && iqi.phase_deg.is_finite()) {
        return Err(OtsmError::config(key, "IQ imbalance parameters must be finite"));
    }
    Ok(())
}

fn build(raw: RawConfig) -> Result<RunConfig> {
    let geometry_given = raw.geometry.is_some();
    let geometry = build_geometry(raw.geometry.unwrap_or_default())?;
    let mut sim = SimConfig::new(geometry);

    let ch = raw.channel.unwrap_or_default();
    sim.profile = build_profile(&ch)?;
    sim.speed_kph = ch.speed_kph.unwrap_or(sim.speed_kph);
    sim.carrier_hz = ch.carrier_hz.unwrap_or(sim.carrier_hz);
    sim.truncate_profile = ch.truncate.unwrap_or(sim.truncate_profile);
    sim.round_delays = ch.round_delays.unwrap_or(sim.round_delays);

    let (scenario, id) = build_scenario(raw.scenario, raw.impairments.unwrap_or_default())?;
    sim.scenario = scenario;
    sim.scenario_id = id;

    let csi = raw.csi.unwrap_or_default();
    sim.b = match (csi.b, csi.b_sq) {
        (Some(_), Some(_)) => return Err(OtsmError::config("csi.b_sq", "give either b or b_sq, not both")),
        (Some(b), None) => b,
        (None, Some(b2)) => {
            if !(0.0..=1.0).contains(&b2) {
                return Err(OtsmError::config("csi.b_sq", format!("{b2} is outside [0, 1]")));
            }
            b2.sqrt()
        }
        (None, None) => 0.0,
    };

    let det = raw.detector.unwrap_or_default();
    let mut dc = DetectorConfig::default();
    if let Some(k) = det.kind {
        dc.kind = DetectorKind::parse(&k).ok_or_else(|| {
            OtsmError::config("detector.kind", format!("unknown detector `{k}`; expected ml or mfgs"))
        })?;
    }
    dc.max_iters = det.max_iters.unwrap_or(dc.max_iters);
    dc.delta = det.delta.unwrap_or(dc.delta);
    dc.ml_max_candidates = det.ml_max_candidates.unwrap_or(dc.ml_max_candidates);
    if dc.ml_max_candidates == 0 {
        return Err(OtsmError::config("detector.ml_max_candidates", "must be positive"));
    }
    sim.detector = dc;

    let s = raw.sim.unwrap_or_default();
    sim.snr_db_grid = s.snr_db_grid.unwrap_or(sim.snr_db_grid);
    sim.min_bits = s.min_bits.unwrap_or(sim.min_bits);
    sim.min_errors = s.min_errors.unwrap_or(sim.min_errors);
    sim.master_seed = s.seed.unwrap_or(sim.master_seed);
    sim.validate()?;

    let b = raw.bound.unwrap_or_default();
    let mut bound = BoundSettings::default();
    bound.snr_db_grid = b.snr_db_grid.unwrap_or(bound.snr_db_grid);
    bound.sampled_pairs = b.sampled_pairs.unwrap_or(bound.sampled_pairs);
    bound.max_exhaustive_bits = b.max_exhaustive_bits.unwrap_or(bound.max_exhaustive_bits);
    if let Some(p) = b.policy {
        bound.policy = p.parse()?;
    }
    bound.validate()?;

    let sw = raw.sweep.unwrap_or_default();
    let mut sweep = SweepPlan::default();
    sweep.base = sw.base.unwrap_or(sweep.base);
    sweep.levels = sw.levels.unwrap_or(sweep.levels);
    sweep.impairments = sw.impairments.unwrap_or(sweep.impairments);
    sweep.snr_db = sw.snr_db.unwrap_or(sweep.snr_db);
    sweep.validate()?;

    let v = raw.verify.unwrap_or_default();
    let mut verify = VerifySettings::default();
    verify.frames = v.frames.unwrap_or(verify.frames);
    verify.noise_draws = v.noise_draws.unwrap_or(verify.noise_draws);
    verify.instances = v.instances.unwrap_or(verify.instances);
    verify.validate()?;

    Ok(RunConfig {
        sim,
        bound,
        sweep,
        verify,
        geometry_given,
    })
}
