//! Doubly-spread channel: tap generation, delay-time impulse response,
//! sample-domain application and dense channel matrices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, OtsmError, Result};
use crate::framing::{FrameGeometry, TimeSignal};
use crate::linalg::CMat;
use crate::rng::complex_normal;
use crate::C64;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One propagation path. Delay and Doppler are normalized to the sample
/// grid: delay in samples (`τ B`), Doppler in units of `1/(N T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTap {
    pub gain: C64,
    pub delay: f64,
    pub doppler: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTaps {
    pub paths: Vec<PathTap>,
}

impl ChannelTaps {
    pub fn new(paths: Vec<PathTap>) -> Self {
        Self { paths }
    }

    /// A single unit path with the given delay and Doppler.
    pub fn single(delay: f64, doppler: f64) -> Self {
        Self::new(vec![PathTap {
            gain: C64::new(1.0, 0.0),
            delay,
            doppler,
        }])
    }

    pub fn p_count(&self) -> usize {
        self.paths.len()
    }

    pub fn gains(&self) -> Vec<C64> {
        self.paths.iter().map(|p| p.gain).collect()
    }

    /// Same delays and Dopplers, new gains.
    pub fn with_gains(&self, gains: &[C64]) -> Result<Self> {
        check_len(self.paths.len(), gains.len())?;
        Ok(Self::new(
            self.paths
                .iter()
                .zip(gains)
                .map(|(p, &gain)| PathTap { gain, ..*p })
                .collect(),
        ))
    }

    pub fn max_delay(&self) -> f64 {
        self.paths.iter().map(|p| p.delay).fold(0.0, f64::max)
    }

    pub fn has_integer_delays(&self) -> bool {
        self.paths.iter().all(|p| p.delay.fract() == 0.0)
    }

    pub fn validate(&self, g: &FrameGeometry) -> Result<()> {
        for (i, p) in self.paths.iter().enumerate() {
            if !(p.delay >= 0.0 && p.delay <= g.l_max as f64) {
                return Err(OtsmError::Profile(format!(
                    "path {i} delay {} outside [0, l_max = {}]",
                    p.delay, g.l_max
                )));
            }
        }
        Ok(())
    }
}

/// Power-delay profile in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub name: String,
    pub tap_delays_ns: Vec<f64>,
    pub tap_powers_db: Vec<f64>,
}

impl ChannelProfile {
    /// Extended Vehicular A.
    pub fn eva() -> Self {
        Self {
            name: "eva".into(),
            tap_delays_ns: vec![0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0],
            tap_powers_db: vec![0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tap_delays_ns.len() != self.tap_powers_db.len() {
            return Err(OtsmError::Profile(format!(
                "{} delays but {} powers",
                self.tap_delays_ns.len(),
                self.tap_powers_db.len()
            )));
        }
        if self.tap_delays_ns.is_empty() {
            return Err(OtsmError::Profile("profile has no taps".into()));
        }
        if self.tap_delays_ns.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(OtsmError::Profile("tap delays must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Linear per-tap powers scaled to unit total.
    pub fn normalized_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self.tap_powers_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        lin.iter().map(|p| p / total).collect()
    }

    /// Keeps only taps with delay at most `max_delay_ns`.
    pub fn truncated(&self, max_delay_ns: f64) -> Self {
        let (d, p): (Vec<f64>, Vec<f64>) = self
            .tap_delays_ns
            .iter()
            .zip(&self.tap_powers_db)
            .filter(|(d, _)| **d <= max_delay_ns + 1e-9)
            .map(|(d, p)| (*d, *p))
            .unzip();
        Self {
            name: format!("{}-truncated", self.name),
            tap_delays_ns: d,
            tap_powers_db: p,
        }
    }

    /// Delays rounded to the nearest sample at bandwidth `bandwidth_hz`,
    /// expressed back in ns. Used where integer delays are required.
    pub fn rounded_to_samples(&self, bandwidth_hz: f64) -> Self {
        Self {
            name: format!("{}-rounded", self.name),
            tap_delays_ns: self
                .tap_delays_ns
                .iter()
                .map(|d| (d * 1e-9 * bandwidth_hz).round() / bandwidth_hz * 1e9)
                .collect(),
            tap_powers_db: self.tap_powers_db.clone(),
        }
    }
}

/// Maximum normalized Doppler `ν_max N T`.
pub fn max_doppler_index(speed_kph: f64, carrier_hz: f64, g: &FrameGeometry) -> f64 {
    let nu = speed_kph / 3.6 * carrier_hz / SPEED_OF_LIGHT;
    nu * g.n_seq as f64 / g.delta_f
}

/// Draws one realization: Gaussian gains per tap power, Jakes Doppler.
pub fn sample_channel<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    g: &FrameGeometry,
    speed_kph: f64,
    carrier_hz: f64,
    rng: &mut R,
) -> Result<ChannelTaps> {
    profile.validate()?;
    let b = g.bandwidth();
    let k_max = max_doppler_index(speed_kph, carrier_hz, g);
    let powers = profile.normalized_powers();
    let mut paths = Vec::with_capacity(powers.len());
    for (d_ns, p) in profile.tap_delays_ns.iter().zip(powers) {
        let delay = d_ns * 1e-9 * b;
        // Guard against 2510 ns * 10 MHz = 25.100000000000001 style noise.
        let delay = if (delay - delay.round()).abs() < 1e-9 {
            delay.round()
        } else {
            delay
        };
        if delay > g.l_max as f64 {
            return Err(OtsmError::Profile(format!(
                "tap at {d_ns} ns is {delay:.3} samples, beyond l_max = {}",
                g.l_max
            )));
        }
        let gain = complex_normal(rng, p);
        let xi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        paths.push(PathTap {
            gain,
            delay,
            doppler: k_max * xi.cos(),
        });
    }
    Ok(ChannelTaps::new(paths))
}

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x.fract() == 0.0 {
        0.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn check_cir_index(l: usize, q: usize, g: &FrameGeometry) -> Result<()> {
    if l > g.l_max || q >= g.len_cp() {
        return Err(OtsmError::Index(format!(
            "(l, q) = ({l}, {q}) outside [0, {}] x [0, {})",
            g.l_max,
            g.len_cp()
        )));
    }
    Ok(())
}

fn cir_value(taps: &ChannelTaps, l: usize, q: usize, nm: f64) -> C64 {
    taps.paths
        .iter()
        .map(|p| {
            let phase = std::f64::consts::TAU * p.doppler * (q as f64 - l as f64) / nm;
            p.gain * C64::from_polar(1.0, phase) * sinc(l as f64 - p.delay)
        })
        .sum()
}

/// Delay-time impulse response `g[l, q]`.
pub fn dt_cir(taps: &ChannelTaps, l: usize, q: usize, g: &FrameGeometry) -> Result<C64> {
    check_cir_index(l, q, g)?;
    Ok(cir_value(taps, l, q, g.nm() as f64))
}

/// `g[l, q]` for all `l ≤ l_max` and `q < NM + l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CirTable {
    l_max: usize,
    len: usize,
    values: Vec<C64>,
}

impl CirTable {
    pub fn new(taps: &ChannelTaps, g: &FrameGeometry) -> Self {
        let len = g.len_cp();
        let nm = g.nm() as f64;
        let mut values = Vec::with_capacity((g.l_max + 1) * len);
        for l in 0..=g.l_max {
            for q in 0..len {
                values.push(cir_value(taps, l, q, nm));
            }
        }
        Self {
            l_max: g.l_max,
            len,
            values,
        }
    }

    #[inline]
    pub fn get(&self, l: usize, q: usize) -> C64 {
        self.values[l * self.len + q]
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Dense band-form channel matrix, `H[q, q-l] = g[l, q]`.
    pub fn band_matrix(&self) -> CMat {
        let mut h = CMat::zeros(self.len, self.len);
        for q in 0..self.len {
            for l in 0..=self.l_max.min(q) {
                h[(q, q - l)] = self.get(l, q);
            }
        }
        h
    }
}

/// Linear time-varying convolution plus the given noise samples.
pub fn apply_channel_with_noise(s: &[C64], cir: &CirTable, w: &[C64]) -> Result<Vec<C64>> {
    check_len(cir.len(), s.len())?;
    check_len(cir.len(), w.len())?;
    let mut r = w.to_vec();
    for (q, rq) in r.iter_mut().enumerate() {
        for l in 0..=cir.l_max().min(q) {
            *rq += cir.get(l, q) * s[q - l];
        }
    }
    Ok(r)
}

pub fn draw_noise<R: Rng + ?Sized>(len: usize, noise_var: f64, rng: &mut R) -> Vec<C64> {
    (0..len).map(|_| complex_normal(rng, noise_var)).collect()
}

/// `r[q] = Σ_l g[l,q] s[q-l] + w[q]`, `w ~ CN(0, σ₀² I)`.
pub fn apply_channel<R: Rng + ?Sized>(
    s: &TimeSignal,
    taps: &ChannelTaps,
    g: &FrameGeometry,
    noise_var: f64,
    rng: &mut R,
) -> Result<TimeSignal> {
    let cir = CirTable::new(taps, g);
    let w = draw_noise(s.samples.len(), noise_var, rng);
    Ok(TimeSignal {
        samples: apply_channel_with_noise(&s.samples, &cir, &w)?,
        has_cp: s.has_cp,
    })
}

/// Band-form `H` of size `(NM + l_max)²`.
pub fn build_h_band(taps: &ChannelTaps, g: &FrameGeometry) -> CMat {
    CirTable::new(taps, g).band_matrix()
}

/// `H = Σ h_i Π^{ℓ_i} Δ^{k_i}` with cyclic shift `Π`; integer delays only.
pub fn build_h_analysis(taps: &ChannelTaps, g: &FrameGeometry) -> Result<CMat> {
    if !taps.has_integer_delays() {
        return Err(OtsmError::Unsupported(
            "the shift/phase channel form needs integer delays; round the profile or use the band form".into(),
        ));
    }
    let len = g.len_cp();
    let nm = g.nm() as f64;
    let mut h = CMat::zeros(len, len);
    for p in &taps.paths {
        let shift = p.delay as usize;
        for q in 0..len {
            let col = (q + len - shift % len) % len;
            let z = C64::from_polar(1.0, std::f64::consts::TAU * p.doppler * col as f64 / nm);
            h[(q, col)] += p.gain * z;
        }
    }
    Ok(h)
}

/// Imperfect CSI: `h̄ = sqrt(1 - b²) h + b ε`, `ε ~ CN(0, I)`.
pub fn degrade_csi<R: Rng + ?Sized>(h: &[C64], b: f64, rng: &mut R) -> Result<Vec<C64>> {
    if !(0.0..=1.0).contains(&b) {
        return Err(OtsmError::config("csi.b", format!("{b} is outside [0, 1]")));
    }
    if b == 0.0 {
        return Ok(h.to_vec());
    }
    let a = (1.0 - b * b).sqrt();
    Ok(h.iter().map(|&x| a * x + b * complex_normal(rng, 1.0)).collect())
}
