//! Monte-Carlo BER runner: per-frame link simulation, SNR sweeps and the
//! one-impairment-at-a-time scenario sweep.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::analysis::{
    build_omega, cond_pep, default_yp, noise_profile, path_structure, pep_bound, sigma_wbar_frame, AbepCalculator,
    BoundSystem, PairPolicy,
};
use crate::channel::{degrade_csi, draw_noise, sample_channel, ChannelProfile, CirTable};
use crate::detect::{mfgs_detect, ml_detect, BandedChannel, DetectorConfig, DetectorKind, DsLinearModel};
use crate::effective::linear_part;
use crate::error::{OtsmError, Result};
use crate::framing::{build_frame, DsGrid, FrameGeometry, Qam};
use crate::impairments::{draw_realization_split, HwiScenario, Impairment};
use crate::pipeline::transceive;
use crate::rng::{frame_rng, Stream};

/// Hard cap on simulated bits per point.
pub const MAX_BITS: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub geometry: FrameGeometry,
    pub profile: ChannelProfile,
    /// Drop taps beyond `l_max / B` before drawing.
    pub truncate_profile: bool,
    /// Snap tap delays to whole samples.
    pub round_delays: bool,
    pub scenario: HwiScenario,
    /// Preset id the scenario came from, if any; only used for labelling.
    pub scenario_id: Option<u32>,
    pub speed_kph: f64,
    pub carrier_hz: f64,
    /// CSI imperfectness `b`.
    pub b: f64,
    pub detector: DetectorConfig,
    pub snr_db_grid: Vec<f64>,
    pub min_bits: u64,
    pub min_errors: u64,
    pub master_seed: u64,
}

impl SimConfig {
    pub fn new(geometry: FrameGeometry) -> Self {
        Self {
            geometry,
            profile: ChannelProfile::eva(),
            truncate_profile: true,
            round_delays: false,
            scenario: HwiScenario::ideal(),
            scenario_id: Some(0),
            speed_kph: 480.0,
            carrier_hz: 40e9,
            b: 0.0,
            detector: DetectorConfig::default(),
            snr_db_grid: vec![20.0],
            min_bits: 100_000,
            min_errors: 100,
            master_seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.profile.validate()?;
        self.scenario.validate()?;
        self.detector.validate()?;
        if !(0.0..=1.0).contains(&self.b) {
            return Err(OtsmError::config("csi.b", format!("{} is outside [0, 1]", self.b)));
        }
        if self.snr_db_grid.is_empty() {
            return Err(OtsmError::config("sim.snr_db_grid", "must not be empty"));
        }
        if self.snr_db_grid.iter().any(|s| !s.is_finite()) {
            return Err(OtsmError::config("sim.snr_db_grid", "entries must be finite"));
        }
        if self.min_bits < 10_000 {
            return Err(OtsmError::config("sim.min_bits", "must be at least 10000"));
        }
        if !(self.speed_kph >= 0.0 && self.speed_kph.is_finite()) {
            return Err(OtsmError::config(
                "channel.speed_kph",
                "must be finite and non-negative",
            ));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(OtsmError::config("channel.carrier_hz", "must be positive"));
        }
        let prof = self.effective_profile();
        if prof.tap_delays_ns.is_empty() {
            return Err(OtsmError::Profile("no taps remain after truncation to l_max".into()));
        }
        Ok(())
    }

    /// The profile actually drawn from, after truncation and rounding.
    pub fn effective_profile(&self) -> ChannelProfile {
        let bw = self.geometry.bandwidth();
        let mut p = self.profile.clone();
        if self.truncate_profile {
            p = p.truncated(self.geometry.l_max as f64 / bw * 1e9);
        }
        if self.round_delays {
            p = p.rounded_to_samples(bw);
        }
        p
    }

    pub fn scenario_label(&self) -> String {
        self.scenario_id.map_or_else(|| "custom".to_string(), |i| i.to_string())
    }
}

/// `σ₀²` for a given `E_b/N₀`, with `E_b` the mean data energy per bit.
pub fn sigma0_sq(snr_db: f64, g: &FrameGeometry) -> f64 {
    let eb = g.data_symbols() as f64 / g.bits_per_frame() as f64;
    eb / 10f64.powf(snr_db / 10.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameOutcome {
    pub bits: u64,
    pub bit_errors: u64,
    pub frame_error: bool,
    pub converged: bool,
}

/// Runs one frame end to end. Every random draw comes from streams keyed by
/// `(master_seed, frame)`, so the outcome does not depend on scheduling.
pub fn simulate_frame(cfg: &SimConfig, profile: &ChannelProfile, sigma0_sq: f64, frame: u64) -> Result<FrameOutcome> {
    simulate_frame_detail(cfg, profile, sigma0_sq, frame).map(|d| d.outcome)
}

/// Frame outcome plus the transmitted and detected constellation indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetail {
    pub outcome: FrameOutcome,
    pub sent: Vec<usize>,
    pub detected: Vec<usize>,
}

pub fn simulate_frame_detail(
    cfg: &SimConfig,
    profile: &ChannelProfile,
    sigma0_sq: f64,
    frame: u64,
) -> Result<FrameDetail> {
    let g = &cfg.geometry;
    let qam = Qam::new(g.qam_order)?;
    let seed = cfg.master_seed;

    let mut bit_rng = frame_rng(seed, frame, Stream::Bits);
    let tx_idx: Vec<usize> = (0..g.data_symbols())
        .map(|_| bit_rng.gen_range(0..qam.order() as usize))
        .collect();
    let symbols: Vec<_> = tx_idx.iter().map(|&i| qam.symbol(i)).collect();
    let x = build_frame(&symbols, *g)?;

    let taps = sample_channel(
        profile,
        g,
        cfg.speed_kph,
        cfg.carrier_hz,
        &mut frame_rng(seed, frame, Stream::Channel),
    )?;
    let re = draw_realization_split(
        &cfg.scenario,
        g,
        &mut frame_rng(seed, frame, Stream::TxPhaseNoise),
        &mut frame_rng(seed, frame, Stream::RxPhaseNoise),
    )?;
    let w = draw_noise(g.len_cp(), sigma0_sq, &mut frame_rng(seed, frame, Stream::Noise));
    let link = transceive(&x, &CirTable::new(&taps, g), &cfg.scenario, &re, &w)?;

    let h_bar = degrade_csi(&taps.gains(), cfg.b, &mut frame_rng(seed, frame, Stream::Csi))?;
    let det = match cfg.detector.kind {
        DetectorKind::Mfgs => {
            let ch = BandedChannel::from_estimate(&taps.with_gains(&h_bar)?, &cfg.scenario, &re, g)?;
            mfgs_detect(&link.y, &ch, g, &qam, &cfg.detector)?
        }
        DetectorKind::Ml => {
            let paths = path_structure(&taps)?;
            let model = DsLinearModel::from_omega(g, &paths, &h_bar, &cfg.scenario, &re)?;
            ml_detect(&link.y, &model, &qam, cfg.detector.ml_max_candidates)?
        }
    };
    let bit_errors: u64 = tx_idx
        .iter()
        .zip(&det.indices)
        .map(|(a, b)| (a ^ b).count_ones() as u64)
        .sum();
    Ok(FrameDetail {
        outcome: FrameOutcome {
            bits: g.bits_per_frame() as u64,
            bit_errors,
            frame_error: bit_errors > 0,
            converged: det.converged,
        },
        sent: tx_idx,
        detected: det.indices,
    })
}

#[derive(Debug, Clone)]
pub struct BerRecord {
    pub snr_db: f64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub frames: u64,
    pub frame_errors: u64,
    pub abep_bound: Option<f64>,
    pub wall_seconds: f64,
}

/// Equality on the simulated counts; wall time is excluded.
impl PartialEq for BerRecord {
    fn eq(&self, o: &Self) -> bool {
        self.snr_db.to_bits() == o.snr_db.to_bits()
            && self.bits == o.bits
            && self.bit_errors == o.bit_errors
            && self.ber.to_bits() == o.ber.to_bits()
            && self.frames == o.frames
            && self.frame_errors == o.frame_errors
            && self.abep_bound.map(f64::to_bits) == o.abep_bound.map(f64::to_bits)
    }
}

impl BerRecord {
    /// Binomial standard error of the BER estimate.
    pub fn std_err(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        (self.ber * (1.0 - self.ber) / self.bits as f64).sqrt()
    }
}

fn batch_frames(g: &FrameGeometry) -> u64 {
    (4096 / g.bits_per_frame() as u64).clamp(8, 256)
}

/// Simulates frames in fixed-size batches until both `min_bits` and
/// `min_errors` are reached, or the bit cap.
pub fn run_point(cfg: &SimConfig, snr_db: f64) -> Result<BerRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let profile = cfg.effective_profile();
    let s2 = sigma0_sq(snr_db, &cfg.geometry);
    let batch = batch_frames(&cfg.geometry);
    let (mut bits, mut errs, mut frames, mut ferrs) = (0u64, 0u64, 0u64, 0u64);
    while !(bits >= cfg.min_bits && errs >= cfg.min_errors) && bits < MAX_BITS {
        let outs: Vec<FrameOutcome> = (frames..frames + batch)
            .into_par_iter()
            .map(|f| simulate_frame(cfg, &profile, s2, f))
            .collect::<Result<_>>()?;
        for o in outs {
            bits += o.bits;
            errs += o.bit_errors;
            ferrs += o.frame_error as u64;
        }
        frames += batch;
    }
    Ok(BerRecord {
        snr_db,
        bits,
        bit_errors: errs,
        ber: errs as f64 / bits as f64,
        frames,
        frame_errors: ferrs,
        abep_bound: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_sweep(cfg: &SimConfig) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    cfg.snr_db_grid.iter().map(|&s| run_point(cfg, s)).collect()
}

/// One-at-a-time sweep: every impairment at the `base` preset's values except
/// the swept one, which steps through `levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub base: u32,
    pub levels: Vec<u32>,
    pub impairments: Vec<Impairment>,
    pub snr_db: Vec<f64>,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            base: 4,
            levels: vec![1, 2, 3, 4],
            impairments: Impairment::ALL.to_vec(),
            snr_db: vec![20.0],
        }
    }
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        HwiScenario::preset(self.base).map_err(|_| OtsmError::config("sweep.base", "unknown scenario preset"))?;
        if self.levels.is_empty() {
            return Err(OtsmError::config("sweep.levels", "must not be empty"));
        }
        for &l in &self.levels {
            HwiScenario::preset(l)
                .map_err(|_| OtsmError::config("sweep.levels", format!("unknown scenario preset {l}")))?;
        }
        if self.impairments.is_empty() {
            return Err(OtsmError::config("sweep.impairments", "must not be empty"));
        }
        if self.snr_db.is_empty() {
            return Err(OtsmError::config("sweep.snr_db", "must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub scenario: String,
    pub impairment: String,
    pub record: BerRecord,
}

/// Cells share the master seed, so every cell sees the same bits, channels
/// and noise (common random numbers).
pub fn run_scenario_sweep(cfg: &SimConfig, plan: &SweepPlan) -> Result<Vec<SweepRecord>> {
    plan.validate()?;
    let base = HwiScenario::preset(plan.base)?;
    let mut out = Vec::new();
    for &imp in &plan.impairments {
        for &lvl in &plan.levels {
            let mut c = cfg.clone();
            c.scenario = base.with_impairment_from(imp, &HwiScenario::preset(lvl)?);
            c.scenario_id = Some(lvl);
            for &snr in &plan.snr_db {
                out.push(SweepRecord {
                    scenario: lvl.to_string(),
                    impairment: imp.name().to_string(),
                    record: run_point(&c, snr)?,
                });
            }
        }
    }
    Ok(out)
}

pub const BER_CSV_HEADER: [&str; 10] = [
    "scenario",
    "impairment_swept",
    "snr_db",
    "bits",
    "bit_errors",
    "ber",
    "frames",
    "frame_errors",
    "abep_bound",
    "seed",
];

pub fn write_ber_csv<W: Write>(out: W, rows: &[SweepRecord], seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| OtsmError::Io(std::io::Error::other(e));
    w.write_record(BER_CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        let b = &r.record;
        w.write_record([
            r.scenario.clone(),
            r.impairment.clone(),
            format!("{}", b.snr_db),
            b.bits.to_string(),
            b.bit_errors.to_string(),
            format!("{:e}", b.ber),
            b.frames.to_string(),
            b.frame_errors.to_string(),
            b.abep_bound.map_or_else(String::new, |v| format!("{v:e}")),
            seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundPolicy {
    /// Exhaustive when the frame fits the guard, sampled otherwise.
    Auto,
    Exhaustive,
    Sampled,
}

impl std::str::FromStr for BoundPolicy {
    type Err = OtsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "exhaustive" => Ok(Self::Exhaustive),
            "sampled" => Ok(Self::Sampled),
            other => Err(OtsmError::config(
                "bound.policy",
                format!("unknown policy `{other}`; expected auto, exhaustive or sampled"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSettings {
    pub snr_db_grid: Vec<f64>,
    pub policy: BoundPolicy,
    pub sampled_pairs: usize,
    pub max_exhaustive_bits: usize,
}

impl Default for BoundSettings {
    fn default() -> Self {
        Self {
            snr_db_grid: (0..=20).map(f64::from).collect(),
            policy: BoundPolicy::Auto,
            sampled_pairs: 2000,
            max_exhaustive_bits: 12,
        }
    }
}

impl BoundSettings {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db_grid.is_empty() {
            return Err(OtsmError::config("bound.snr_db_grid", "must not be empty"));
        }
        if self.snr_db_grid.iter().any(|s| !s.is_finite()) {
            return Err(OtsmError::config("bound.snr_db_grid", "entries must be finite"));
        }
        if self.sampled_pairs == 0 {
            return Err(OtsmError::config("bound.sampled_pairs", "must be positive"));
        }
        if self.max_exhaustive_bits > 16 {
            return Err(OtsmError::config("bound.max_exhaustive_bits", "at most 16"));
        }
        Ok(())
    }

    pub fn pair_policy(&self, g: &FrameGeometry, seed: u64) -> PairPolicy {
        let exhaustive = PairPolicy::Exhaustive {
            max_bits: self.max_exhaustive_bits,
        };
        let sampled = PairPolicy::Sampled {
            pairs: self.sampled_pairs,
            seed,
        };
        match self.policy {
            BoundPolicy::Exhaustive => exhaustive,
            BoundPolicy::Sampled => sampled,
            BoundPolicy::Auto if g.bits_per_frame() <= self.max_exhaustive_bits => exhaustive,
            BoundPolicy::Auto => sampled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub snr_db: f64,
    pub abep: f64,
    pub cond_pep: f64,
    pub chiani: f64,
    pub high_snr: f64,
    pub kappa: usize,
}

/// Analytical curves for one channel/impairment draw (frame 0 of the master
/// seed). The union bound averages over gains with `Y_p = I/P`; the pairwise
/// columns use the reference pair "all symbols 0" vs "first symbol 1" and
/// the drawn CSI estimate `h̄`. PA and timing offset are left out.
pub fn run_bound_sweep(cfg: &SimConfig, settings: &BoundSettings) -> Result<Vec<BoundRow>> {
    cfg.validate()?;
    settings.validate()?;
    let g = cfg.geometry;
    let seed = cfg.master_seed;
    let taps = sample_channel(
        &cfg.effective_profile(),
        &g,
        cfg.speed_kph,
        cfg.carrier_hz,
        &mut frame_rng(seed, 0, Stream::Channel),
    )?;
    let paths = path_structure(&taps)?;
    let sc = linear_part(&cfg.scenario);
    let re = draw_realization_split(
        &sc,
        &g,
        &mut frame_rng(seed, 0, Stream::TxPhaseNoise),
        &mut frame_rng(seed, 0, Stream::RxPhaseNoise),
    )?;
    let h_bar = degrade_csi(&taps.gains(), cfg.b, &mut frame_rng(seed, 0, Stream::Csi))?;
    let p = paths.len();
    let calc = AbepCalculator::new(
        BoundSystem {
            geometry: g,
            paths: paths.clone(),
            scenario: sc.clone(),
            realization: re.clone(),
            b: cfg.b,
            yp_diag: vec![1.0 / p as f64; p],
        },
        settings.pair_policy(&g, seed),
    )?;
    let qam = Qam::new(g.qam_order)?;
    let mut di = vec![qam.symbol(0); g.data_symbols()];
    let xi: DsGrid = build_frame(&di, g)?;
    di[0] = qam.symbol(1);
    let xj = build_frame(&di, g)?;
    let oi = build_omega(&xi, &paths, &sc, &re)?.omega_sum;
    let oj = build_omega(&xj, &paths, &sc, &re)?.omega_sum;
    let yp = default_yp(p);
    settings
        .snr_db_grid
        .iter()
        .map(|&snr| {
            let sw = sigma_wbar_frame(&noise_profile(&sc, &re, sigma0_sq(snr, &g), &g)?, &sc);
            let rep = pep_bound(&oi, &oj, cfg.b, sw, &yp, &h_bar)?;
            Ok(BoundRow {
                snr_db: snr,
                abep: calc.evaluate(sw).abep.min(1.0),
                cond_pep: cond_pep(&oi, &oj, &h_bar, cfg.b, sw),
                chiani: rep.chiani_bound,
                high_snr: rep.high_snr,
                kappa: rep.kappa,
            })
        })
        .collect()
}

pub const BOUND_CSV_HEADER: [&str; 6] = ["snr_db", "cond_pep", "chiani", "high_snr", "kappa", "abep"];

pub fn write_bound_csv<W: Write>(out: W, rows: &[BoundRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| OtsmError::Io(std::io::Error::other(e));
    w.write_record(BOUND_CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            format!("{}", r.snr_db),
            format!("{:e}", r.cond_pep),
            format!("{:e}", r.chiani),
            format!("{:e}", r.high_snr),
            r.kappa.to_string(),
            format!("{:e}", r.abep),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
