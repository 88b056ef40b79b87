//! Structural self-checks on a small geometry: the three evaluations of the
//! I/O relation agree, the operators have the expected sparsity, the image
//! and DC terms land where they should, the noise is white and the reduced
//! relations match the general one.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::noise_profile;
use crate::channel::{sample_channel, ChannelTaps, CirTable};
use crate::effective::{
    build_ds_matrices, ds_io_vector_with_kernel, ds_noise, linear_part, occupancy, out_of_band_max,
    special_case_residual, SequencySpread, SpecialCase, DENSE_MAX_NM,
};
use crate::error::{OtsmError, Result};
use crate::framing::{build_frame, DsGrid, FrameGeometry, Qam};
use crate::harness::SimConfig;
use crate::impairments::{draw_realization, HwiScenario, Impairment};
use crate::linalg::{max_abs_diff, CVec};
use crate::pipeline::transceive;
use crate::rng::{complex_normal, complex_normal_vec};
use crate::transforms::{dyadic_convolve, fwht_in_place};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifySettings {
    /// Random frames for the equivalence check.
    pub frames: usize,
    /// Noise draws for the covariance estimate.
    pub noise_draws: usize,
    /// Random instances per reduced relation.
    pub instances: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            frames: 50,
            noise_draws: 200_000,
            instances: 20,
        }
    }
}

impl VerifySettings {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("verify.frames", self.frames),
            ("verify.noise_draws", self.noise_draws),
            ("verify.instances", self.instances),
        ] {
            if v == 0 {
                return Err(OtsmError::config(k, "must be positive"));
            }
        }
        Ok(())
    }
}

/// Test hooks for checking that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// The per-row evaluation uses an unnormalized WHT.
    CorruptWht,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub note: String,
}

impl Check {
    fn below(name: &'static str, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            threshold,
            passed: value < threshold,
            note: String::new(),
        }
    }

    fn with_note(mut self, note: String) -> Self {
        self.note = note;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(
                f,
                "{:<4} {:<22} value {:.3e}  threshold {:.1e}",
                if c.passed { "ok" } else { "FAIL" },
                c.name,
                c.value,
                c.threshold
            )?;
            if !c.note.is_empty() {
                write!(f, "  ({})", c.note)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn unnormalized_wht(v: &mut [C64]) -> Result<()> {
    fwht_in_place(v)?;
    let s = (v.len() as f64).sqrt();
    v.iter_mut().for_each(|x| *x *= s);
    Ok(())
}

fn random_grid(g: &FrameGeometry, rng: &mut ChaCha8Rng) -> Result<DsGrid> {
    let q = Qam::new(g.qam_order)?;
    let d: Vec<C64> = (0..g.data_symbols())
        .map(|_| q.symbol(rng.gen_range(0..q.order() as usize)))
        .collect();
    build_frame(&d, *g)
}

/// Runs every check at the configured geometry and scenario.
pub fn run_verify(cfg: &SimConfig, settings: &VerifySettings, fault: Fault) -> Result<VerifyReport> {
    settings.validate()?;
    let g = cfg.geometry;
    g.validate()?;
    if g.nm() > DENSE_MAX_NM {
        return Err(OtsmError::Size(format!(
            "verify builds dense operators and needs NM <= {DENSE_MAX_NM}, got {}",
            g.nm()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    let sc = linear_part(&cfg.scenario);
    let bw = g.bandwidth();
    let mut profile = cfg.profile.truncated(g.l_max as f64 / bw * 1e9);
    if profile.tap_delays_ns.is_empty() {
        profile = cfg.profile.clone();
    }
    let int_profile = profile.rounded_to_samples(bw);
    let draw = |rng: &mut ChaCha8Rng, integer: bool| -> Result<ChannelTaps> {
        sample_channel(
            if integer { &int_profile } else { &profile },
            &g,
            cfg.speed_kph,
            cfg.carrier_hz,
            rng,
        )
    };
    let kernel = match fault {
        Fault::None => fwht_in_place,
        Fault::CorruptWht => unnormalized_wht,
    };
    let mut report = VerifyReport::default();

    // Per-row vector form, dense matrix form and sample pipeline.
    let mut worst = 0.0f64;
    for _ in 0..settings.frames {
        let x = random_grid(&g, &mut rng)?;
        let taps = draw(&mut rng, false)?;
        let cir = CirTable::new(&taps, &g);
        let re = draw_realization(&sc, &g, &mut rng)?;
        let w = complex_normal_vec(&mut rng, g.len_cp(), 0.1);
        let vec_path = ds_io_vector_with_kernel(&x, &cir, &sc, &re, &w, kernel)?;
        let mat_path = build_ds_matrices(&cir, &sc, &re, &g)?.apply(x.as_slice(), &w)?;
        let pipe = transceive(&x, &cir, &sc, &re, &w)?.y;
        worst = worst
            .max(max_abs_diff(&vec_path, &mat_path))
            .max(max_abs_diff(&vec_path, &pipe))
            .max(max_abs_diff(&mat_path, &pipe));
    }
    report.checks.push(Check::below("io_equivalence", worst, 1e-8));

    // Delay band of H_DS and block structure of the DT operator.
    let taps = draw(&mut rng, true)?;
    let cir = CirTable::new(&taps, &g);
    let re = draw_realization(&sc, &g, &mut rng)?;
    let ops = build_ds_matrices(&cir, &sc, &re, &g)?;
    let top = ops.h_ds.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let occ = occupancy(&ops.h_ds, 1e-9);
    let occ_limit = 2.0 * (g.l_max + 1) as f64 / g.m_delay as f64;
    let band = out_of_band_max(&ops.h_ds, &g) / top;
    let mut c =
        Check::below("sparsity_band", band, 1e-9).with_note(format!("occupancy {occ:.4} vs limit {occ_limit:.4}"));
    c.passed &= occ <= occ_limit;
    report.checks.push(c);

    let m = g.m_delay;
    let mut off_block = 0.0f64;
    for r in 0..g.nm() {
        for col in 0..g.nm() {
            if r / m != col / m {
                off_block = off_block.max(ops.g_dt[(r, col)].norm());
            }
        }
    }
    report.checks.push(Check::below("dt_block_diagonal", off_block, 1e-10));

    // Same-bin conjugate image under IQI only, flat static channel.
    let iqi = cfg.scenario.only(&[Impairment::TxIqi, Impairment::RxIqi]);
    let flat = CirTable::new(&ChannelTaps::single(0.0, 0.0), &g);
    let flat_ops = build_ds_matrices(&flat, &iqi, &crate::impairments::ImpairmentRealization::ideal(&g), &g)?;
    let coef = iqi.rx_iqi.alpha() * iqi.tx_iqi.beta() + iqi.rx_iqi.beta() * iqi.tx_iqi.alpha().conj();
    let mut scsi = 0.0f64;
    for _ in 0..settings.instances {
        let k0 = rng.gen_range(0..g.data_symbols());
        let mut xc = vec![C64::default(); g.nm()];
        xc[k0] = complex_normal(&mut rng, 1.0).conj();
        let img = &flat_ops.h_conj * CVec::from_column_slice(&xc);
        let want: Vec<C64> = xc.iter().map(|v| coef * v).collect();
        scsi = scsi.max(max_abs_diff(img.as_slice(), &want));
    }
    report.checks.push(Check::below("scsi_same_bin", scsi, 1e-10));

    // DC-only: every delay row is a zero-sequency impulse.
    let mut dco = HwiScenario::preset(4)?.only(&[Impairment::TxDco, Impairment::RxDco]);
    if cfg.scenario.tx_dco_db > 0.0 || cfg.scenario.rx_dco_db > 0.0 {
        dco = cfg.scenario.only(&[Impairment::TxDco, Impairment::RxDco]);
    }
    // The transmit DC only stays at zero sequency through a static channel.
    let mut still = draw(&mut rng, false)?;
    still.paths.iter_mut().for_each(|p| p.doppler = 0.0);
    let frac = CirTable::new(&still, &g);
    let zero = DsGrid::zeros(g);
    let y0 = build_ds_matrices(&frac, &dco, &crate::impairments::ImpairmentRealization::ideal(&g), &g)?
        .apply(zero.as_slice(), &vec![C64::default(); g.len_cp()])?;
    let mut zsi = 0.0f64;
    for row in y0.chunks(g.n_seq) {
        let total: f64 = row.iter().map(|v| v.norm_sqr()).sum();
        if total > 0.0 {
            zsi = zsi.max(row[1..].iter().map(|v| v.norm_sqr()).sum::<f64>() / total);
        }
    }
    report.checks.push(Check::below("zsi_zero_sequency", zsi, 1e-10));

    // Noise covariance at a fixed realization.
    let (white, diag_dev) = noise_whiteness(&sc, &re, &g, settings.noise_draws, &mut rng)?;
    report.checks.push(
        Check::below("noise_whiteness", white, 0.02)
            .with_note(format!("max diagonal deviation from per-sample model {diag_dev:.3}")),
    );

    // Reduced relations.
    for mode in SpecialCase::ALL {
        let mut worst = 0.0f64;
        for _ in 0..settings.instances {
            let x = random_grid(&g, &mut rng)?;
            let cir = CirTable::new(&draw(&mut rng, true)?, &g);
            let w = complex_normal_vec(&mut rng, g.len_cp(), 0.1);
            worst = worst.max(special_case_residual(mode, &x, &cir, &cfg.scenario, &w)?);
        }
        let name = match mode {
            SpecialCase::Ideal => "reduced_ideal",
            SpecialCase::RxIqi => "reduced_rx_iqi",
            SpecialCase::TxRxIqi => "reduced_tx_rx_iqi",
            SpecialCase::RxIqiCfo => "reduced_rx_iqi_cfo",
        };
        report.checks.push(Check::below(name, worst, 1e-9));
    }

    // Spread matrices against dyadic convolution.
    let mut spread = 0.0f64;
    for _ in 0..10 {
        let (mm, l) = (rng.gen_range(0..g.m_delay), rng.gen_range(0..=g.l_max));
        let sp = SequencySpread::new(&cir, &sc, &re, &g, mm, l)?;
        for _ in 0..10 {
            let v = complex_normal_vec(&mut rng, g.n_seq, 1.0);
            for i in 0..3 {
                let a = (&sp.big_u[i] * CVec::from_column_slice(&v)).as_slice().to_vec();
                spread = spread.max(max_abs_diff(&a, &dyadic_convolve(&sp.u[i], &v)?));
            }
        }
    }
    report.checks.push(Check::below("spread_matrices", spread, 1e-10));
    Ok(report)
}

/// Returns `‖off-diag‖_F / ‖diag‖_F` of the empirical DS noise covariance and
/// the largest relative gap between its diagonal and the per-sample model.
pub fn noise_whiteness(
    sc: &HwiScenario,
    re: &crate::impairments::ImpairmentRealization,
    g: &FrameGeometry,
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let nm = g.nm();
    let mut cov = vec![C64::default(); nm * nm];
    for _ in 0..draws {
        let w = complex_normal_vec(rng, g.len_cp(), 1.0);
        let v = ds_noise(sc, re, g, &w)?;
        for (i, vi) in v.iter().enumerate() {
            let row = &mut cov[i * nm..(i + 1) * nm];
            let vc = vi;
            for (c, vj) in row.iter_mut().zip(&v) {
                *c += vc * vj.conj();
            }
        }
    }
    let k = draws as f64;
    let (mut diag, mut off) = (0.0, 0.0);
    let model = noise_profile(sc, re, 1.0, g)?;
    let mut dev = 0.0f64;
    for i in 0..nm {
        for j in 0..nm {
            let e = (cov[i * nm + j] / k).norm_sqr();
            if i == j {
                diag += e;
                let d = cov[i * nm + i].re / k;
                dev = dev.max((d - model.per_sample_var[i]).abs() / model.per_sample_var[i]);
            } else {
                off += e;
            }
        }
    }
    Ok(((off / diag).sqrt(), dev))
}
