//! Transmitter and receiver hardware impairments.
//!
//! Tx chain: IQ imbalance, DC offset and phase noise, then a memory-polynomial
//! power amplifier. Rx chain: phase noise and CFO rotation, IQ imbalance, DC
//! offset, then fractional timing resampling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, OtsmError, Result};
use crate::framing::FrameGeometry;
use crate::C64;

/// IQ imbalance as gain mismatch (dB) and phase mismatch (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqiParams {
    pub gain_db: f64,
    pub phase_deg: f64,
}

impl Default for IqiParams {
    fn default() -> Self {
        Self::ideal()
    }
}

impl IqiParams {
    pub const fn ideal() -> Self {
        Self {
            gain_db: 0.0,
            phase_deg: 0.0,
        }
    }

    pub fn gain_linear(&self) -> f64 {
        10f64.powf(self.gain_db / 20.0)
    }

    pub fn phase_rad(&self) -> f64 {
        self.phase_deg.to_radians()
    }

    /// `α = (1 + g e^{-jφ/2}) / 2`
    pub fn alpha(&self) -> C64 {
        (1.0 + self.gain_linear() * C64::from_polar(1.0, -self.phase_rad() / 2.0)) / 2.0
    }

    /// `β = (1 - g e^{+jφ/2}) / 2`
    pub fn beta(&self) -> C64 {
        (1.0 - self.gain_linear() * C64::from_polar(1.0, self.phase_rad() / 2.0)) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PnModel {
    /// Random-walk phase; the endpoint variance equals the configured σ².
    #[default]
    Wiener,
    /// Independent Gaussian phase per sample with variance σ².
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaSum {
    /// `i ∈ [0, M_ρ]`, `j ∈ [0, N_ρ]`.
    #[default]
    Rectangular,
    /// `j ∈ [0, N_ρ - i]`.
    Triangular,
}

/// Memory polynomial `Σ_i Σ_j ρ_ij s[q-i] |s[q-i]|^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PaModel {
    pub depth: usize,
    pub order: usize,
    /// Row-major `(depth+1) × (order+1)`.
    pub coeffs: Vec<C64>,
    pub sum: PaSum,
}

impl PaModel {
    pub fn identity() -> Self {
        Self {
            depth: 0,
            order: 0,
            coeffs: vec![C64::new(1.0, 0.0)],
            sum: PaSum::Rectangular,
        }
    }

    /// Stand-in coefficient table: unit linear gain, a compressive third-order
    /// term `-0.05 + 0.01j`, decaying by 0.2 per extra order and 0.5 per memory tap.
    pub fn with_default_coeffs(depth: usize, order: usize) -> Self {
        let base = C64::new(-0.05, 0.01);
        let mut coeffs = vec![C64::default(); (depth + 1) * (order + 1)];
        coeffs[0] = C64::new(1.0, 0.0);
        for i in 0..=depth {
            for j in 2..=order {
                coeffs[i * (order + 1) + j] = base * 0.2f64.powi(j as i32 - 2) * 0.5f64.powi(i as i32);
            }
        }
        Self {
            depth,
            order,
            coeffs,
            sum: PaSum::Rectangular,
        }
    }

    pub fn coeff(&self, i: usize, j: usize) -> C64 {
        self.coeffs[i * (self.order + 1) + j]
    }

    pub fn validate(&self) -> Result<()> {
        if self.coeffs.len() != (self.depth + 1) * (self.order + 1) {
            return Err(OtsmError::config(
                "impairments.pa_coeffs",
                format!(
                    "expected {} coefficients for (M_ρ, N_ρ) = ({}, {}), got {}",
                    (self.depth + 1) * (self.order + 1),
                    self.depth,
                    self.order,
                    self.coeffs.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.coeffs[0] == C64::new(1.0, 0.0) && self.coeffs[1..].iter().all(|c| *c == C64::default())
    }

    pub fn apply(&self, s: &[C64]) -> Vec<C64> {
        if self.is_identity() {
            return s.to_vec();
        }
        let mut out = vec![C64::default(); s.len()];
        for (q, o) in out.iter_mut().enumerate() {
            for i in 0..=self.depth.min(q) {
                let v = s[q - i];
                let a = v.norm();
                let j_max = match self.sum {
                    PaSum::Rectangular => self.order,
                    PaSum::Triangular => self.order.saturating_sub(i),
                };
                let mut pow = 1.0;
                for j in 0..=j_max {
                    *o += self.coeff(i, j) * v * pow;
                    pow *= a;
                }
            }
        }
        out
    }
}

/// Timing offset: opaque window bounds plus the resampler offsets they map to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoParams {
    pub i1: i64,
    pub i2: i64,
    pub int_offset: i64,
    pub frac_offset: f64,
}

impl StoParams {
    pub const fn ideal() -> Self {
        Self {
            i1: 0,
            i2: 0,
            int_offset: 0,
            frac_offset: 0.0,
        }
    }

    /// Maps a window `(I1, I2)` to a fractional offset that grows with the
    /// window centre and shrinks with its width: `((I1+I2)/2 - (I2-I1)) * 1e-4`.
    pub fn from_window(i1: i64, i2: i64) -> Self {
        let frac = if i1 == 0 && i2 == 0 {
            0.0
        } else {
            ((i1 + i2) as f64 / 2.0 - (i2 - i1) as f64) * 1e-4
        };
        Self {
            i1,
            i2,
            int_offset: 0,
            frac_offset: frac,
        }
    }
}

/// Full impairment parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct HwiScenario {
    pub tx_iqi: IqiParams,
    pub rx_iqi: IqiParams,
    pub tx_dco_db: f64,
    pub rx_dco_db: f64,
    pub tx_pn_var: f64,
    pub rx_pn_var: f64,
    pub pn_model: PnModel,
    pub pa: PaModel,
    pub cfo_hz: f64,
    pub sto: StoParams,
}

struct PresetRow {
    iqi: (f64, f64),
    tx_dco: f64,
    pn: f64,
    pa: (usize, usize),
    rx_dco: f64,
    cfo_khz: f64,
    sto: (i64, i64),
}

const PRESETS: [PresetRow; 5] = [
    PresetRow {
        iqi: (0.0, 0.0),
        tx_dco: 0.0,
        pn: 0.0,
        pa: (0, 0),
        rx_dco: 0.0,
        cfo_khz: 0.0,
        sto: (0, 0),
    },
    PresetRow {
        iqi: (0.3, 1.0),
        tx_dco: 0.7,
        pn: 0.1,
        pa: (2, 2),
        rx_dco: 0.7,
        cfo_khz: 15.0,
        sto: (4167, 4567),
    },
    PresetRow {
        iqi: (0.8, 2.0),
        tx_dco: 1.2,
        pn: 0.8,
        pa: (3, 4),
        rx_dco: 1.2,
        cfo_khz: 20.0,
        sto: (4272, 4572),
    },
    PresetRow {
        iqi: (1.3, 3.0),
        tx_dco: 1.6,
        pn: 1.6,
        pa: (4, 6),
        rx_dco: 1.8,
        cfo_khz: 25.0,
        sto: (4388, 4588),
    },
    PresetRow {
        iqi: (2.0, 4.0),
        tx_dco: 2.5,
        pn: 3.0,
        pa: (5, 8),
        rx_dco: 2.5,
        cfo_khz: 30.0,
        sto: (4495, 4595),
    },
];

/// The nine individually sweepable impairments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Impairment {
    TxIqi,
    TxDco,
    TxPn,
    Pa,
    RxIqi,
    RxDco,
    RxPn,
    Cfo,
    Sto,
}

impl Impairment {
    pub const ALL: [Impairment; 9] = [
        Impairment::TxIqi,
        Impairment::TxDco,
        Impairment::TxPn,
        Impairment::Pa,
        Impairment::RxIqi,
        Impairment::RxDco,
        Impairment::RxPn,
        Impairment::Cfo,
        Impairment::Sto,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Impairment::TxIqi => "tx_iqi",
            Impairment::TxDco => "tx_dco",
            Impairment::TxPn => "tx_pn",
            Impairment::Pa => "pa",
            Impairment::RxIqi => "rx_iqi",
            Impairment::RxDco => "rx_dco",
            Impairment::RxPn => "rx_pn",
            Impairment::Cfo => "cfo",
            Impairment::Sto => "sto",
        }
    }
}

impl std::fmt::Display for Impairment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl HwiScenario {
    pub fn ideal() -> Self {
        Self::preset(0).expect("preset 0 exists")
    }

    pub fn preset(id: u32) -> Result<Self> {
        let row = PRESETS
            .get(id as usize)
            .ok_or_else(|| OtsmError::config("scenario", format!("unknown scenario preset {id}; expected 0-4")))?;
        let iqi = IqiParams {
            gain_db: row.iqi.0,
            phase_deg: row.iqi.1,
        };
        let pa = if row.pa == (0, 0) {
            PaModel::identity()
        } else {
            PaModel::with_default_coeffs(row.pa.0, row.pa.1)
        };
        Ok(Self {
            tx_iqi: iqi,
            rx_iqi: iqi,
            tx_dco_db: row.tx_dco,
            rx_dco_db: row.rx_dco,
            tx_pn_var: row.pn,
            rx_pn_var: row.pn,
            pn_model: PnModel::Wiener,
            pa,
            cfo_hz: row.cfo_khz * 1e3,
            sto: StoParams::from_window(row.sto.0, row.sto.1),
        })
    }

    /// Replaces one impairment with its value from another scenario.
    pub fn with_impairment_from(&self, which: Impairment, src: &HwiScenario) -> Self {
        let mut s = self.clone();
        match which {
            Impairment::TxIqi => s.tx_iqi = src.tx_iqi,
            Impairment::TxDco => s.tx_dco_db = src.tx_dco_db,
            Impairment::TxPn => s.tx_pn_var = src.tx_pn_var,
            Impairment::Pa => s.pa = src.pa.clone(),
            Impairment::RxIqi => s.rx_iqi = src.rx_iqi,
            Impairment::RxDco => s.rx_dco_db = src.rx_dco_db,
            Impairment::RxPn => s.rx_pn_var = src.rx_pn_var,
            Impairment::Cfo => s.cfo_hz = src.cfo_hz,
            Impairment::Sto => s.sto = src.sto,
        }
        s
    }

    /// Keeps only the listed impairments; everything else is ideal.
    pub fn only(&self, keep: &[Impairment]) -> Self {
        let mut s = Self::ideal();
        for &k in keep {
            s = s.with_impairment_from(k, self);
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("impairments.tx_dco_db", self.tx_dco_db),
            ("impairments.rx_dco_db", self.rx_dco_db),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OtsmError::config(
                    key,
                    format!("{v} dB is below the 0 dB (no offset) reference"),
                ));
            }
        }
        for (key, v) in [
            ("impairments.tx_pn_var", self.tx_pn_var),
            ("impairments.rx_pn_var", self.rx_pn_var),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OtsmError::config(key, format!("variance {v} must be non-negative")));
            }
        }
        if !self.cfo_hz.is_finite() {
            return Err(OtsmError::config("impairments.cfo_hz", "must be finite"));
        }
        if !self.sto.frac_offset.is_finite() {
            return Err(OtsmError::config("impairments.sto_frac_offset", "must be finite"));
        }
        self.pa.validate()
    }

    /// DC amplitude relative to unit average signal power: `10^{dB/20} - 1`.
    pub fn tx_dco(&self) -> f64 {
        dco_amplitude(self.tx_dco_db)
    }

    pub fn rx_dco(&self) -> f64 {
        dco_amplitude(self.rx_dco_db)
    }
}

pub fn dco_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0) - 1.0
}

/// Per-frame draws of the stochastic impairments plus derived ramps.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpairmentRealization {
    pub tx_theta: Vec<f64>,
    pub rx_theta: Vec<f64>,
    /// `e^{-jθ_tx}`
    pub tx_pn: Vec<C64>,
    /// `e^{-jθ_rx}`
    pub rx_pn: Vec<C64>,
    /// `e^{-j2π f_o q / (M Δf)}`
    pub cfo_phase: Vec<C64>,
    pub cfo_angle: Vec<f64>,
    pub sto_base: Vec<i64>,
    pub sto_frac: Vec<f64>,
}

impl ImpairmentRealization {
    pub fn ideal(g: &FrameGeometry) -> Self {
        Self::from_phases(&HwiScenario::ideal(), g, vec![0.0; g.len_cp()], vec![0.0; g.len_cp()])
            .expect("lengths match")
    }

    pub fn from_phases(s: &HwiScenario, g: &FrameGeometry, tx_theta: Vec<f64>, rx_theta: Vec<f64>) -> Result<Self> {
        let len = g.len_cp();
        check_len(len, tx_theta.len())?;
        check_len(len, rx_theta.len())?;
        let cfo_angle: Vec<f64> = (0..len)
            .map(|q| std::f64::consts::TAU * s.cfo_hz * q as f64 / g.bandwidth())
            .collect();
        Ok(Self {
            tx_pn: tx_theta.iter().map(|t| C64::from_polar(1.0, -t)).collect(),
            rx_pn: rx_theta.iter().map(|t| C64::from_polar(1.0, -t)).collect(),
            cfo_phase: cfo_angle.iter().map(|a| C64::from_polar(1.0, -a)).collect(),
            cfo_angle,
            tx_theta,
            rx_theta,
            sto_base: (0..len as i64).map(|q| q + s.sto.int_offset).collect(),
            sto_frac: vec![s.sto.frac_offset; len],
        })
    }

    pub fn len(&self) -> usize {
        self.tx_pn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx_pn.is_empty()
    }

    /// Total receive rotation `Θ[q] = S_pn^rx[q] S_cfo[q]`.
    pub fn rx_rotation(&self, q: usize) -> C64 {
        self.rx_pn[q] * self.cfo_phase[q]
    }

    /// The angle `ω[q]` with `Θ[q] = e^{-jω[q]}`.
    pub fn rx_angle(&self, q: usize) -> f64 {
        self.cfo_angle[q] + self.rx_theta[q]
    }
}

/// Phase-noise trajectory. Increments are always drawn so the RNG stream
/// advances identically whatever the variance.
pub fn draw_phase<R: Rng + ?Sized>(var: f64, model: PnModel, len: usize, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    match model {
        PnModel::Wiener => {
            let step = (var / len as f64).sqrt();
            let mut acc = 0.0;
            z.iter()
                .map(|x| {
                    acc += step * x;
                    acc
                })
                .collect()
        }
        PnModel::Iid => z.iter().map(|x| var.sqrt() * x).collect(),
    }
}

pub fn draw_realization_split<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    s: &HwiScenario,
    g: &FrameGeometry,
    tx_rng: &mut R1,
    rx_rng: &mut R2,
) -> Result<ImpairmentRealization> {
    s.validate()?;
    let len = g.len_cp();
    let tx = draw_phase(s.tx_pn_var, s.pn_model, len, tx_rng);
    let rx = draw_phase(s.rx_pn_var, s.pn_model, len, rx_rng);
    ImpairmentRealization::from_phases(s, g, tx, rx)
}

pub fn draw_realization<R: Rng + ?Sized>(
    s: &HwiScenario,
    g: &FrameGeometry,
    rng: &mut R,
) -> Result<ImpairmentRealization> {
    s.validate()?;
    let len = g.len_cp();
    let tx = draw_phase(s.tx_pn_var, s.pn_model, len, rng);
    let rx = draw_phase(s.rx_pn_var, s.pn_model, len, rng);
    ImpairmentRealization::from_phases(s, g, tx, rx)
}

/// IQI + DCO + phase noise on the transmit side, before the PA.
pub fn tx_front_end(s: &[C64], sc: &HwiScenario, re: &ImpairmentRealization) -> Result<Vec<C64>> {
    check_len(re.len(), s.len())?;
    let (a, b, d) = (sc.tx_iqi.alpha(), sc.tx_iqi.beta(), sc.tx_dco());
    Ok(s.iter()
        .zip(&re.tx_pn)
        .map(|(&x, &p)| {
            let v = x * p;
            a * v + b * v.conj() + d
        })
        .collect())
}

pub fn tx_impair(s: &[C64], sc: &HwiScenario, re: &ImpairmentRealization) -> Result<Vec<C64>> {
    sc.pa.validate()?;
    Ok(sc.pa.apply(&tx_front_end(s, sc, re)?))
}

pub fn rx_impair(r: &[C64], sc: &HwiScenario, re: &ImpairmentRealization) -> Result<Vec<C64>> {
    check_len(re.len(), r.len())?;
    let (a, b, d) = (sc.rx_iqi.alpha(), sc.rx_iqi.beta(), sc.rx_dco());
    Ok(r.iter()
        .enumerate()
        .map(|(q, &x)| {
            let v = x * re.rx_rotation(q);
            a * v + b * v.conj() + d
        })
        .collect())
}

/// Cubic Lagrange weights for nodes `i ∈ {-1, 0, 1, 2}` evaluated at `μ`.
pub fn lagrange_weights(mu: f64) -> [f64; 4] {
    let nodes = [-1.0, 0.0, 1.0, 2.0];
    let mut w = [0.0; 4];
    for (wi, &xi) in w.iter_mut().zip(&nodes) {
        *wi = nodes
            .iter()
            .filter(|&&xk| xk != xi)
            .map(|&xk| (xk - mu) / (xk - xi))
            .product();
    }
    w
}

/// `r_HI[q] = Σ_{i=-1}^{2} r̄[m_q - i] L_i(μ_q)`; samples outside the frame are zero.
pub fn sto_resample(r: &[C64], re: &ImpairmentRealization) -> Result<Vec<C64>> {
    check_len(re.len(), r.len())?;
    let len = r.len() as i64;
    let mut out = vec![C64::default(); r.len()];
    for (q, o) in out.iter_mut().enumerate() {
        let mu = re.sto_frac[q];
        let base = re.sto_base[q];
        if mu == 0.0 {
            if (0..len).contains(&base) {
                *o = r[base as usize];
            }
            continue;
        }
        let w = lagrange_weights(mu);
        for (k, i) in (-1i64..=2).enumerate() {
            let src = base - i;
            if (0..len).contains(&src) {
                *o += r[src as usize] * w[k];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::rng::complex_normal_vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom() -> FrameGeometry {
        FrameGeometry::new(8, 8, 1, 10e6 / 8.0, 4).unwrap()
    }

    #[test]
    fn ideal_iqi_coefficients() {
        let p = IqiParams::ideal();
        assert_eq!(p.alpha(), C64::new(1.0, 0.0));
        assert_eq!(p.beta(), C64::new(0.0, 0.0));
    }

    #[test]
    fn presets_match_table() {
        let s4 = HwiScenario::preset(4).unwrap();
        assert_eq!(
            s4.tx_iqi,
            IqiParams {
                gain_db: 2.0,
                phase_deg: 4.0
            }
        );
        assert_eq!((s4.tx_dco_db, s4.rx_dco_db), (2.5, 2.5));
        assert_eq!((s4.tx_pn_var, s4.rx_pn_var), (3.0, 3.0));
        assert_eq!((s4.pa.depth, s4.pa.order), (5, 8));
        assert_eq!(s4.cfo_hz, 30e3);
        assert_eq!((s4.sto.i1, s4.sto.i2), (4495, 4595));
        assert_eq!(HwiScenario::preset(3).unwrap().rx_dco_db, 1.8);
        assert!(matches!(HwiScenario::preset(7), Err(OtsmError::Config { .. })));
        let s0 = HwiScenario::preset(0).unwrap();
        assert_eq!(s0.tx_dco(), 0.0);
        assert!(s0.pa.is_identity());
        assert_eq!(s0.sto.frac_offset, 0.0);
    }

    #[test]
    fn sto_offsets_grow_with_scenario() {
        let mus: Vec<f64> = (1..=4)
            .map(|k| HwiScenario::preset(k).unwrap().sto.frac_offset)
            .collect();
        assert!(mus.windows(2).all(|w| w[1] > w[0]), "{mus:?}");
        assert!(mus.iter().all(|m| (0.0..1.0).contains(m)));
    }

    #[test]
    fn ideal_realization_is_all_ones() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let re = draw_realization(&HwiScenario::ideal(), &g, &mut rng).unwrap();
        let one = C64::new(1.0, 0.0);
        assert!(re.tx_pn.iter().chain(&re.rx_pn).chain(&re.cfo_phase).all(|v| *v == one));
        assert!(re.sto_frac.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn cfo_ramp_value() {
        let g = FrameGeometry::new(64, 64, 1, 10e6 / 64.0, 4).unwrap();
        let mut s = HwiScenario::ideal();
        s.cfo_hz = 15e3;
        let re = ImpairmentRealization::from_phases(&s, &g, vec![0.0; 4097], vec![0.0; 4097]).unwrap();
        let want = C64::from_polar(1.0, -std::f64::consts::TAU * 0.0015);
        assert!((re.cfo_phase[1] - want).norm() < 1e-15);
    }

    #[test]
    fn wiener_endpoint_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let len = 65;
        let n = 10_000;
        let ends: Vec<f64> = (0..n)
            .map(|_| draw_phase(3.0, PnModel::Wiener, len, &mut rng)[len - 1])
            .collect();
        let mean = ends.iter().sum::<f64>() / n as f64;
        let var = ends.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((2.7..=3.3).contains(&var), "{var}");
    }

    #[test]
    fn negative_variance_rejected() {
        let mut s = HwiScenario::ideal();
        s.rx_pn_var = -1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(
            draw_realization(&s, &geom(), &mut rng),
            Err(OtsmError::Config { .. })
        ));
    }

    #[test]
    fn scenario_zero_chain_is_identity() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sc = HwiScenario::ideal();
        let re = draw_realization(&sc, &g, &mut rng).unwrap();
        let s = complex_normal_vec(&mut rng, g.len_cp(), 1.0);
        let out = sto_resample(&rx_impair(&tx_impair(&s, &sc, &re).unwrap(), &sc, &re).unwrap(), &re).unwrap();
        assert!(max_abs_diff(&out, &s) < 1e-10);
    }

    #[test]
    fn dco_only_adds_constant() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sc = HwiScenario::ideal();
        sc.tx_dco_db = 2.5;
        let d = sc.tx_dco();
        assert!((d - 0.3335).abs() < 1e-4);
        let re = draw_realization(&sc, &g, &mut rng).unwrap();
        let s = complex_normal_vec(&mut rng, g.len_cp(), 1.0);
        let out = tx_impair(&s, &sc, &re).unwrap();
        for (o, x) in out.iter().zip(&s) {
            assert!((o - (x + d)).norm() < 1e-15);
        }
    }

    #[test]
    fn iqi_only_matches_scalar_form() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sc = HwiScenario::ideal();
        sc.tx_iqi = IqiParams {
            gain_db: 1.3,
            phase_deg: 3.0,
        };
        let re = draw_realization(&sc, &g, &mut rng).unwrap();
        let s = complex_normal_vec(&mut rng, g.len_cp(), 1.0);
        let out = tx_impair(&s, &sc, &re).unwrap();
        let gl = 10f64.powf(1.3 / 20.0);
        let phi = 3f64.to_radians();
        for (o, x) in out.iter().zip(&s) {
            let a = (1.0 + gl * C64::new((phi / 2.0).cos(), -(phi / 2.0).sin())) * 0.5;
            let b = (1.0 - gl * C64::new((phi / 2.0).cos(), (phi / 2.0).sin())) * 0.5;
            assert!((o - (a * x + b * x.conj())).norm() < 1e-12);
        }
    }

    #[test]
    fn rx_chain_scalar_oracle_scenario_four() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sc = HwiScenario::preset(4).unwrap();
        let re = draw_realization(&sc, &g, &mut rng).unwrap();
        let r = complex_normal_vec(&mut rng, g.len_cp(), 1.0);
        let out = rx_impair(&r, &sc, &re).unwrap();
        let gl = 10f64.powf(0.1);
        let phi = 4f64.to_radians();
        let d = 10f64.powf(2.5 / 20.0) - 1.0;
        for q in 0..r.len() {
            let ang = -(re.rx_theta[q] + std::f64::consts::TAU * 30e3 * q as f64 / 10e6);
            let v = r[q] * C64::new(ang.cos(), ang.sin());
            let a = (1.0 + gl * C64::from_polar(1.0, -phi / 2.0)) / 2.0;
            let b = (1.0 - gl * C64::from_polar(1.0, phi / 2.0)) / 2.0;
            assert!((out[q] - (a * v + b * v.conj() + d)).norm() < 1e-12);
        }
    }

    #[test]
    fn cfo_only_rotates() {
        let g = geom();
        let mut sc = HwiScenario::ideal();
        sc.cfo_hz = 25e3;
        let re = ImpairmentRealization::from_phases(&sc, &g, vec![0.0; 65], vec![0.0; 65]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = complex_normal_vec(&mut rng, 65, 1.0);
        let out = rx_impair(&r, &sc, &re).unwrap();
        for q in 0..65 {
            let want = r[q] * C64::from_polar(1.0, -std::f64::consts::TAU * 25e3 * q as f64 / 10e6);
            assert!((out[q] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn pa_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = complex_normal_vec(&mut rng, 200, 1.0);
        assert_eq!(PaModel::identity().apply(&s), s);
        // Distortion energy grows with memory depth and order.
        let mut last = 0.0;
        for k in 1..=4 {
            let pa = PaModel::with_default_coeffs(k, 2 * k);
            let e: f64 = pa.apply(&s).iter().zip(&s).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(e > last);
            last = e;
        }
        let mut tri = PaModel::with_default_coeffs(2, 2);
        tri.sum = PaSum::Triangular;
        // Triangular sum drops (i, j) = (1, 2) and (2, 1..2).
        let x = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        let y = tri.apply(&x);
        assert!((y[1]).norm() == 0.0 && (y[2]).norm() == 0.0);
        let bad = PaModel {
            coeffs: vec![C64::new(1.0, 0.0)],
            ..PaModel::with_default_coeffs(1, 1)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn lagrange_kernel_properties() {
        assert_eq!(lagrange_weights(0.0), [0.0, 1.0, 0.0, 0.0]);
        for mu in [0.1, 0.4445, 0.9] {
            let w = lagrange_weights(mu);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sto_integer_advance() {
        let g = geom();
        let mut sc = HwiScenario::ideal();
        sc.sto.int_offset = 1;
        let re = ImpairmentRealization::from_phases(&sc, &g, vec![0.0; 65], vec![0.0; 65]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = complex_normal_vec(&mut rng, 65, 1.0);
        let out = sto_resample(&r, &re).unwrap();
        assert_eq!(out[..64], r[1..]);
        assert_eq!(out[64], C64::default());
    }

    #[test]
    fn sto_half_sample_matches_sinc_interpolation() {
        let len = 400;
        let g = FrameGeometry::new(50, 8, 0, 1.0, 4).unwrap();
        assert_eq!(g.len_cp(), len);
        let mut sc = HwiScenario::ideal();
        sc.sto.frac_offset = 0.5;
        let re = ImpairmentRealization::from_phases(&sc, &g, vec![0.0; len], vec![0.0; len]).unwrap();
        let f = 0.02;
        let tone: Vec<C64> = (0..len)
            .map(|n| C64::from_polar(1.0, std::f64::consts::TAU * f * n as f64))
            .collect();
        let out = sto_resample(&tone, &re).unwrap();
        let (mut err, mut pow) = (0.0, 0.0);
        for q in 100..300 {
            let t = q as f64 - 0.5;
            let ideal: C64 = (q as i64 - 32..q as i64 + 32)
                .map(|n| tone[n as usize] * crate::channel::sinc(t - n as f64))
                .sum();
            err += (out[q] - ideal).norm_sqr();
            pow += ideal.norm_sqr();
        }
        assert!(10.0 * (err / pow).log10() < -40.0, "{}", 10.0 * (err / pow).log10());
    }

    #[test]
    fn impairments_are_repeatable() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sc = HwiScenario::preset(4).unwrap();
        let re = draw_realization(&sc, &g, &mut rng).unwrap();
        let s = complex_normal_vec(&mut rng, 65, 1.0);
        assert_eq!(tx_impair(&s, &sc, &re).unwrap(), tx_impair(&s, &sc, &re).unwrap());
        assert_eq!(rx_impair(&s, &sc, &re).unwrap(), rx_impair(&s, &sc, &re).unwrap());
    }

    proptest! {
        #[test]
        fn iqi_identities(gain_db in -3.0f64..3.0, phase_deg in -10.0f64..10.0) {
            let p = IqiParams { gain_db, phase_deg };
            let (a, b) = (p.alpha(), p.beta());
            let g = p.gain_linear();
            prop_assert!((a + b.conj() - 1.0).norm() < 1e-14);
            prop_assert!((a.norm_sqr() + b.norm_sqr() - (1.0 + g * g) / 2.0).abs() < 1e-14);
        }
    }
}
