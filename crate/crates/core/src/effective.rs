//! Impairment-aware input/output relations in the delay-sequency domain.
//!
//! With the linear part of the impairment chain (IQI, DCO, phase noise, CFO)
//! the received DS vector is widely linear in the data:
//!
//! `y = H_DS x + H_conj x* + dc_tx + dc_rx + N1 w + N2 w*`.
//!
//! Two independent evaluations are provided: a per-delay-row form built from
//! sequency-spread vectors and dyadic convolutions, and a dense matrix form
//! composed from the CP, rotation, channel and transform matrices. The PA
//! nonlinearity and timing resampler have no such linear form.

use crate::channel::CirTable;
use crate::error::{check_len, OtsmError, Result};
use crate::framing::{modulation_matrix, DsGrid, FrameGeometry};
use crate::impairments::{HwiScenario, ImpairmentRealization};
use crate::linalg::{cp_add_matrix, cp_remove_matrix, diag, to_complex, CMat, CVec};
use crate::transforms::{fwht_in_place, hadamard_matrix};
use crate::C64;

/// Dense-path guard on NM.
pub const DENSE_MAX_NM: usize = 4096;

/// A WHT implementation; swappable so tests can inject a faulty kernel.
pub type WhtKernel = fn(&mut [C64]) -> Result<()>;

fn require_linear(sc: &HwiScenario) -> Result<()> {
    if !sc.pa.is_identity() {
        return Err(OtsmError::Unsupported(
            "the PA memory polynomial has no widely-linear DS-domain form".into(),
        ));
    }
    if sc.sto.frac_offset != 0.0 || sc.sto.int_offset != 0 {
        return Err(OtsmError::Unsupported(
            "timing resampling has no widely-linear DS-domain form".into(),
        ));
    }
    Ok(())
}

/// Drops the PA and timing offset, keeping the impairments the I/O relation covers.
pub fn linear_part(sc: &HwiScenario) -> HwiScenario {
    let mut s = sc.clone();
    s.pa = crate::impairments::PaModel::identity();
    s.sto = crate::impairments::StoParams::ideal();
    s
}

fn check_realization(re: &ImpairmentRealization, g: &FrameGeometry) -> Result<()> {
    check_len(g.len_cp(), re.len())
}

/// Composite coefficients for delay tap `l` at body sample `q = m + nM`.
///
/// Receive-side quantities are taken at the CP-extended index
/// `q_e = q + l_max`; the Tx phase noise at the source sample `q_e - l`.
pub fn gi_coeffs(
    cir: &CirTable,
    sc: &HwiScenario,
    re: &ImpairmentRealization,
    g: &FrameGeometry,
    l: usize,
    m: usize,
    n: usize,
) -> Result<(C64, C64, C64)> {
    if l > g.l_max || m >= g.m_delay || n >= g.n_seq {
        return Err(OtsmError::Index(format!("(l, m, n) = ({l}, {m}, {n}) out of range")));
    }
    check_realization(re, g)?;
    let qe = m + n * g.m_delay + g.l_max;
    Ok(gi_at(cir, sc, re, l, qe))
}

#[inline]
fn gi_at(cir: &CirTable, sc: &HwiScenario, re: &ImpairmentRealization, l: usize, qe: usize) -> (C64, C64, C64) {
    let (ar, br) = (sc.rx_iqi.alpha(), sc.rx_iqi.beta());
    let (at, bt) = (sc.tx_iqi.alpha(), sc.tx_iqi.beta());
    let th = re.rx_rotation(qe);
    let tt = re.tx_pn[qe - l];
    let gv = cir.get(l, qe);
    let a = th * gv;
    let b = a.conj();
    let g1 = ar * at * a * tt + br * bt.conj() * b * tt;
    let g2 = ar * bt * a * tt.conj() + br * at.conj() * b * tt.conj();
    let g3 = ar * a + br * b;
    (g1, g2, g3)
}

/// Sequency-spread vectors and matrices for one `(m, l)`.
#[derive(Debug, Clone)]
pub struct SequencySpread {
    /// `ũ_i = W g̃_i`
    pub u: [Vec<C64>; 3],
    /// `U_i = W diag(g̃_i) W`
    pub big_u: [CMat; 3],
}

impl SequencySpread {
    pub fn new(
        cir: &CirTable,
        sc: &HwiScenario,
        re: &ImpairmentRealization,
        g: &FrameGeometry,
        m: usize,
        l: usize,
    ) -> Result<Self> {
        let n = g.n_seq;
        let mut gt = [
            vec![C64::default(); n],
            vec![C64::default(); n],
            vec![C64::default(); n],
        ];
        for k in 0..n {
            let (a, b, c) = gi_coeffs(cir, sc, re, g, l, m, k)?;
            gt[0][k] = a;
            gt[1][k] = b;
            gt[2][k] = c;
        }
        let w = to_complex(&hadamard_matrix(n)?);
        let big_u = [0, 1, 2].map(|i| &w * diag(&gt[i]) * &w);
        let u = gt.map(|mut v| {
            fwht_in_place(&mut v).expect("power-of-two length");
            v
        });
        Ok(Self { u, big_u })
    }
}

fn dyadic_with(a: &[C64], b: &[C64], k: WhtKernel) -> Result<Vec<C64>> {
    let mut fa = a.to_vec();
    let mut fb = b.to_vec();
    k(&mut fa)?;
    k(&mut fb)?;
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    k(&mut fa)?;
    Ok(fa)
}

/// Per-delay-row evaluation:
/// `y_m = Σ_l ũ1 ⊠ x_{m-l} + ũ2 ⊠ x*_{m-l} + ũ3 ⊠ d̂_tx + d̂_rx + ŵ_m`.
pub fn ds_io_vector(
    x: &DsGrid,
    cir: &CirTable,
    sc: &HwiScenario,
    re: &ImpairmentRealization,
    w: &[C64],
) -> Result<Vec<C64>> {
    ds_io_vector_with_kernel(x, cir, sc, re, w, fwht_in_place)
}

pub fn ds_io_vector_with_kernel(
    x: &DsGrid,
    cir: &CirTable,
    sc: &HwiScenario,
    re: &ImpairmentRealization,
    w: &[C64],
    kernel: WhtKernel,
) -> Result<Vec<C64>> {
    require_linear(sc)?;
    let g = x.geometry();
    check_realization(re, g)?;
    check_len(g.len_cp(), w.len())?;
    check_len(g.len_cp(), cir.len())?;
    let (m_d, n_s, lm) = (g.m_delay, g.n_seq, g.l_max);
    let (ar, br) = (sc.rx_iqi.alpha(), sc.rx_iqi.beta());

    let mut d_tx = vec![C64::new(sc.tx_dco(), 0.0); n_s];
    kernel(&mut d_tx)?;
    let mut d_rx = vec![C64::new(sc.rx_dco(), 0.0); n_s];
    kernel(&mut d_rx)?;

    let mut y = Vec::with_capacity(g.nm());
    let mut gt = [
        vec![C64::default(); n_s],
        vec![C64::default(); n_s],
        vec![C64::default(); n_s],
    ];
    for m in 0..m_d {
        let mut acc = d_rx.clone();
        for l in 0..=lm {
            for n in 0..n_s {
                let (a, b, c) = gi_at(cir, sc, re, l, m + n * m_d + lm);
                gt[0][n] = a;
                gt[1][n] = b;
                gt[2][n] = c;
            }
            let mut u = gt.clone();
            for v in u.iter_mut() {
                kernel(v)?;
            }
            if m >= l {
                let xr = x.row(m - l);
                let xc: Vec<C64> = xr.iter().map(|v| v.conj()).collect();
                for (a, b) in acc.iter_mut().zip(dyadic_with(&u[0], xr, kernel)?) {
                    *a += b;
                }
                for (a, b) in acc.iter_mut().zip(dyadic_with(&u[1], &xc, kernel)?) {
                    *a += b;
                }
            }
            for (a, b) in acc.iter_mut().zip(dyadic_with(&u[2], &d_tx, kernel)?) {
                *a += b;
            }
        }
        let mut wt: Vec<C64> = (0..n_s)
            .map(|n| {
                let qe = m + n * m_d + lm;
                let v = re.rx_rotation(qe) * w[qe];
                ar * v + br * v.conj()
            })
            .collect();
        kernel(&mut wt)?;
        for (a, b) in acc.iter_mut().zip(wt) {
            *a += b;
        }
        y.extend(acc);
    }
    Ok(y)
}

/// All dense operators of the matrix-form relation.
#[derive(Debug, Clone)]
pub struct EffectiveOperators {
    /// Band-form channel, `(NM + l_max)²`.
    pub h: CMat,
    /// `R_cp H A_cp`
    pub g: CMat,
    /// Delay-time channel: `G` in time order `q = m + nM` with the ZP delay
    /// columns dropped. Block-diagonal (N blocks of M) for integer delays.
    pub g_dt: CMat,
    pub h_ds: CMat,
    pub h_conj: CMat,
    pub dc_tx_vec: CVec,
    pub dc_rx_vec: CVec,
    /// Noise operators: the noise term is `N1 w + N2 w*`.
    pub noise_direct: CMat,
    pub noise_conj: CMat,
}

impl EffectiveOperators {
    pub fn apply(&self, x: &[C64], w: &[C64]) -> Result<Vec<C64>> {
        check_len(self.h_ds.ncols(), x.len())?;
        check_len(self.noise_direct.ncols(), w.len())?;
        let xv = CVec::from_column_slice(x);
        let wv = CVec::from_column_slice(w);
        let y = &self.h_ds * &xv
            + &self.h_conj * xv.conjugate()
            + &self.dc_tx_vec
            + &self.dc_rx_vec
            + &self.noise_direct * &wv
            + &self.noise_conj * wv.conjugate();
        Ok(y.as_slice().to_vec())
    }

    /// Noise-free output without the receive DC term.
    pub fn signal(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.h_ds.ncols(), x.len())?;
        let xv = CVec::from_column_slice(x);
        let y = &self.h_ds * &xv + &self.h_conj * xv.conjugate() + &self.dc_tx_vec;
        Ok(y.as_slice().to_vec())
    }
}

fn dense_guard(g: &FrameGeometry) -> Result<()> {
    if g.nm() > DENSE_MAX_NM {
        return Err(OtsmError::Size(format!(
            "dense operators need NM <= {DENSE_MAX_NM}, got {}",
            g.nm()
        )));
    }
    Ok(())
}

pub fn build_ds_matrices(
    cir: &CirTable,
    sc: &HwiScenario,
    re: &ImpairmentRealization,
    g: &FrameGeometry,
) -> Result<EffectiveOperators> {
    dense_guard(g)?;
    require_linear(sc)?;
    check_realization(re, g)?;
    check_len(g.len_cp(), cir.len())?;
    let (nm, lm) = (g.nm(), g.l_max);
    let f = modulation_matrix(g)?;
    let ft = f.transpose();
    let a = to_complex(&cp_add_matrix(nm, lm));
    let r = to_complex(&cp_remove_matrix(nm, lm));
    let h = cir.band_matrix();
    let hc = h.conjugate();
    let rot: Vec<C64> = (0..g.len_cp()).map(|q| re.rx_rotation(q)).collect();
    let th = diag(&rot);
    let thc = th.conjugate();
    let tt = diag(&re.tx_pn);
    let ttc = tt.conjugate();
    let (ar, br) = (sc.rx_iqi.alpha(), sc.rx_iqi.beta());
    let (at, bt) = (sc.tx_iqi.alpha(), sc.tx_iqi.beta());

    let direct = &th * &h;
    let mirror = &thc * &hc;
    let t1 = &r * ((&direct * &tt) * (ar * at) + (&mirror * &tt) * (br * bt.conj())) * &a;
    let t2 = &r * ((&direct * &ttc) * (ar * bt) + (&mirror * &ttc) * (br * at.conj())) * &a;
    let h_ds = &ft * t1 * &f;
    let h_conj = &ft * t2 * &f;

    let ones_l = CVec::from_element(g.len_cp(), C64::new(1.0, 0.0));
    let dc_tx_vec = &ft * &r * (&direct * ar + &mirror * br) * ones_l * C64::new(sc.tx_dco(), 0.0);
    let dc_rx_vec = &ft * CVec::from_element(nm, C64::new(sc.rx_dco(), 0.0));
    let noise_direct = &ft * &r * &th * ar;
    let noise_conj = &ft * &r * &thc * br;

    let gm = &r * &h * &a;
    let mut g_dt = gm.clone();
    for c in 0..nm {
        if c % g.m_delay >= g.data_rows() {
            g_dt.column_mut(c).fill(C64::default());
        }
    }
    Ok(EffectiveOperators {
        h,
        g: gm,
        g_dt,
        h_ds,
        h_conj,
        dc_tx_vec,
        dc_rx_vec,
        noise_direct,
        noise_conj,
    })
}

/// DS-domain noise term `Fᵀ R (α_r Θ w + β_r (Θ w)*)` without dense operators.
pub fn ds_noise(sc: &HwiScenario, re: &ImpairmentRealization, g: &FrameGeometry, w: &[C64]) -> Result<Vec<C64>> {
    check_realization(re, g)?;
    check_len(g.len_cp(), w.len())?;
    let (a, b) = (sc.rx_iqi.alpha(), sc.rx_iqi.beta());
    let t: Vec<C64> = (g.l_max..g.len_cp())
        .map(|q| {
            let v = w[q] * re.rx_rotation(q);
            a * v + b * v.conj()
        })
        .collect();
    crate::framing::time_to_ds(&t, g)
}

/// The four reduced relations that follow from switching impairments off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialCase {
    /// Ideal hardware.
    Ideal,
    /// Receive IQI only.
    RxIqi,
    /// Transmit and receive IQI.
    TxRxIqi,
    /// Receive IQI plus CFO.
    RxIqiCfo,
}

impl SpecialCase {
    pub const ALL: [SpecialCase; 4] = [
        SpecialCase::Ideal,
        SpecialCase::RxIqi,
        SpecialCase::TxRxIqi,
        SpecialCase::RxIqiCfo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SpecialCase::Ideal => "ideal",
            SpecialCase::RxIqi => "rx-iqi",
            SpecialCase::TxRxIqi => "tx-rx-iqi",
            SpecialCase::RxIqiCfo => "rx-iqi-cfo",
        }
    }

    /// Keeps only the impairments the mode allows, taking values from `base`.
    pub fn scenario(&self, base: &HwiScenario) -> HwiScenario {
        use crate::impairments::Impairment::*;
        match self {
            SpecialCase::Ideal => base.only(&[]),
            SpecialCase::RxIqi => base.only(&[RxIqi]),
            SpecialCase::TxRxIqi => base.only(&[TxIqi, RxIqi]),
            SpecialCase::RxIqiCfo => base.only(&[RxIqi, Cfo]),
        }
    }
}

/// Dedicated reduced-form output for `mode`; impairments outside the mode are ignored.
pub fn special_case_output(
    mode: SpecialCase,
    x: &DsGrid,
    cir: &CirTable,
    sc: &HwiScenario,
    w: &[C64],
) -> Result<Vec<C64>> {
    let g = x.geometry();
    dense_guard(g)?;
    check_len(g.len_cp(), w.len())?;
    let (ar, br) = (sc.rx_iqi.alpha(), sc.rx_iqi.beta());
    let (at, bt) = (sc.tx_iqi.alpha(), sc.tx_iqi.beta());
    let (m_d, n_s, lm) = (g.m_delay, g.n_seq, g.l_max);
    match mode {
        SpecialCase::Ideal | SpecialCase::RxIqi => {
            let f = modulation_matrix(g)?;
            let a = to_complex(&cp_add_matrix(g.nm(), lm));
            let r = to_complex(&cp_remove_matrix(g.nm(), lm));
            let h = cir.band_matrix();
            let xv = CVec::from_column_slice(x.as_slice());
            let wv = CVec::from_column_slice(w);
            let gm = &r * &h * &a;
            let y = if mode == SpecialCase::Ideal {
                f.transpose() * (&gm * &f * &xv + &r * &wv)
            } else {
                let gc = &r * h.conjugate() * &a;
                f.transpose()
                    * ((&gm * &f * &xv) * ar + (&gc * &f * xv.conjugate()) * br + &r * (&wv * ar + wv.conjugate() * br))
            };
            Ok(y.as_slice().to_vec())
        }
        SpecialCase::TxRxIqi => {
            let wm = to_complex(&hadamard_matrix(n_s)?);
            let mut y = Vec::with_capacity(g.nm());
            for m in 0..m_d {
                let mut acc = CVec::zeros(n_s);
                for l in 0..=lm.min(m) {
                    let (mut d1, mut d2) = (vec![C64::default(); n_s], vec![C64::default(); n_s]);
                    for n in 0..n_s {
                        let gv = cir.get(l, m + n * m_d + lm);
                        d1[n] = ar * at * gv + br * bt.conj() * gv.conj();
                        d2[n] = ar * bt * gv + br * at.conj() * gv.conj();
                    }
                    let u1 = &wm * diag(&d1) * &wm;
                    let u2 = &wm * diag(&d2) * &wm;
                    let xr = CVec::from_column_slice(x.row(m - l));
                    acc += u1 * &xr + u2 * xr.conjugate();
                }
                let wt: Vec<C64> = (0..n_s)
                    .map(|n| {
                        let v = w[m + n * m_d + lm];
                        ar * v + br * v.conj()
                    })
                    .collect();
                acc += &wm * CVec::from_column_slice(&wt);
                y.extend(acc.iter().copied());
            }
            Ok(y)
        }
        SpecialCase::RxIqiCfo => {
            // Delay-time domain: per-sample gains on x̃, then WHT per row.
            let xt = {
                let mut v = x.as_slice().to_vec();
                for row in v.chunks_mut(n_s) {
                    fwht_in_place(row)?;
                }
                v
            };
            let b = g.bandwidth();
            let mut y = Vec::with_capacity(g.nm());
            for m in 0..m_d {
                let mut row = vec![C64::default(); n_s];
                for (n, out) in row.iter_mut().enumerate() {
                    let qe = m + n * m_d + lm;
                    let sc_q = C64::from_polar(1.0, -std::f64::consts::TAU * sc.cfo_hz * qe as f64 / b);
                    for l in 0..=lm.min(m) {
                        let gv = cir.get(l, qe);
                        let s = xt[(m - l) * n_s + n];
                        *out += ar * sc_q * gv * s + br * (sc_q * gv).conj() * s.conj();
                    }
                    let v = sc_q * w[qe];
                    *out += ar * v + br * v.conj();
                }
                fwht_in_place(&mut row)?;
                y.extend(row);
            }
            Ok(y)
        }
    }
}

/// Max deviation between the general dense relation and the dedicated
/// reduced form, with the scenario restricted to the mode.
pub fn special_case_residual(
    mode: SpecialCase,
    x: &DsGrid,
    cir: &CirTable,
    base: &HwiScenario,
    w: &[C64],
) -> Result<f64> {
    let g = x.geometry();
    let sc = mode.scenario(base);
    let re = ImpairmentRealization::from_phases(&sc, g, vec![0.0; g.len_cp()], vec![0.0; g.len_cp()])?;
    let general = build_ds_matrices(cir, &sc, &re, g)?.apply(x.as_slice(), w)?;
    let dedicated = special_case_output(mode, x, cir, &sc, w)?;
    Ok(crate::linalg::max_abs_diff(&general, &dedicated))
}

/// Fraction of entries above `rel_threshold · max|entry|`.
pub fn occupancy(m: &CMat, rel_threshold: f64) -> f64 {
    let thr = m.iter().map(|v| v.norm()).fold(0.0, f64::max) * rel_threshold;
    m.iter().filter(|v| v.norm() > thr).count() as f64 / (m.nrows() * m.ncols()) as f64
}

/// Largest entry of `h_ds` outside the cyclic block band: row block `m`
/// may only couple to column blocks `m - l (mod M)`, `l ≤ l_max`.
pub fn out_of_band_max(h_ds: &CMat, g: &FrameGeometry) -> f64 {
    let n = g.n_seq;
    let mut worst = 0.0f64;
    for r in 0..h_ds.nrows() {
        for c in 0..h_ds.ncols() {
            let dm = (r / n + g.m_delay - c / n) % g.m_delay;
            if dm > g.l_max {
                worst = worst.max(h_ds[(r, c)].norm());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelTaps, PathTap};
    use crate::framing::{build_frame, Qam};
    use crate::impairments::{draw_realization, Impairment, IqiParams};
    use crate::linalg::max_abs_diff;
    use crate::pipeline::transceive;
    use crate::rng::{complex_normal, complex_normal_vec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom() -> FrameGeometry {
        FrameGeometry::new(8, 8, 1, 10e6 / 8.0, 4).unwrap()
    }

    fn random_grid(g: &FrameGeometry, rng: &mut ChaCha8Rng) -> DsGrid {
        let q = Qam::new(4).unwrap();
        let d: Vec<C64> = (0..g.data_symbols()).map(|_| q.symbol(rng.gen_range(0..4))).collect();
        build_frame(&d, *g).unwrap()
    }

    fn random_taps(rng: &mut ChaCha8Rng, p: usize, l_max: usize, integer: bool) -> ChannelTaps {
        ChannelTaps::new(
            (0..p)
                .map(|_| {
                    let d: f64 = rng.gen_range(0.0..=l_max as f64);
                    PathTap {
                        gain: complex_normal(rng, 1.0 / p as f64),
                        delay: if integer { d.round() } else { d },
                        doppler: rng.gen_range(-0.5..0.5),
                    }
                })
                .collect(),
        )
    }

    #[test]
    fn ideal_coefficients_reduce_to_cir() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let taps = random_taps(&mut rng, 2, 1, false);
        let cir = CirTable::new(&taps, &g);
        let sc = HwiScenario::ideal();
        let re = ImpairmentRealization::ideal(&g);
        for l in 0..=1 {
            for m in 0..8 {
                for n in 0..8 {
                    let (g1, g2, g3) = gi_coeffs(&cir, &sc, &re, &g, l, m, n).unwrap();
                    let gv = cir.get(l, m + 8 * n + 1);
                    assert_eq!((g1, g2, g3), (gv, C64::default(), gv));
                }
            }
        }
        assert!(gi_coeffs(&cir, &sc, &re, &g, 2, 0, 0).is_err());
    }

    #[test]
    fn rx_iqi_coefficients() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cir = CirTable::new(&random_taps(&mut rng, 3, 1, false), &g);
        let sc = HwiScenario::preset(3).unwrap().only(&[Impairment::RxIqi]);
        let re = ImpairmentRealization::ideal(&g);
        let (a, b) = (sc.rx_iqi.alpha(), sc.rx_iqi.beta());
        let (g1, g2, _) = gi_coeffs(&cir, &sc, &re, &g, 1, 3, 5).unwrap();
        let gv = cir.get(1, 3 + 40 + 1);
        assert!((g1 - a * gv).norm() < 1e-15);
        assert!((g2 - b * gv.conj()).norm() < 1e-15);
    }

    #[test]
    fn scenario_four_coefficients_from_scalars() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cir = CirTable::new(&random_taps(&mut rng, 3, 1, false), &g);
        let sc = HwiScenario::preset(4).unwrap();
        let re = draw_realization(&sc, &g, &mut rng).unwrap();
        // Push a unit sample and its conjugate through the scalar chain.
        let (m, n, l) = (4, 6, 1);
        let qe = m + n * 8 + 1;
        let rx = |v: C64| {
            let u = v * re.rx_pn[qe] * re.cfo_phase[qe];
            sc.rx_iqi.alpha() * u + sc.rx_iqi.beta() * u.conj()
        };
        let tx = |v: C64| {
            let u = v * re.tx_pn[qe - l];
            sc.tx_iqi.alpha() * u + sc.tx_iqi.beta() * u.conj()
        };
        let gv = cir.get(l, qe);
        let out_re = rx(gv * tx(C64::new(1.0, 0.0)));
        let out_im = rx(gv * tx(C64::new(0.0, 1.0)));
        // Widely linear: f(s) = g1 s + g2 s*; f(1) = g1 + g2, f(j) = j(g1 - g2).
        let g1 = (out_re - C64::i() * out_im) / 2.0;
        let g2 = (out_re + C64::i() * out_im) / 2.0;
        let g3 = rx(gv);
        let (a, b, c) = gi_coeffs(&cir, &sc, &re, &g, l, m, n).unwrap();
        assert!((a - g1).norm() < 1e-12 && (b - g2).norm() < 1e-12 && (c - g3).norm() < 1e-12);
    }

    #[test]
    fn spread_matrices_match_dyadic_form() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cir = CirTable::new(&random_taps(&mut rng, 2, 1, false), &g);
        let sc = HwiScenario::preset(4).unwrap();
        let re = draw_realization(&sc, &g, &mut rng).unwrap();
        let sp = SequencySpread::new(&cir, &sc, &re, &g, 3, 1).unwrap();
        for _ in 0..100 {
            let v = complex_normal_vec(&mut rng, 8, 1.0);
            for i in 0..3 {
                let a = (&sp.big_u[i] * CVec::from_column_slice(&v)).as_slice().to_vec();
                let b = crate::transforms::dyadic_convolve(&sp.u[i], &v).unwrap();
                assert!(max_abs_diff(&a, &b) < 1e-10);
            }
        }
    }

    #[test]
    fn ideal_vector_form_matches_pipeline() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_grid(&g, &mut rng);
        let taps = random_taps(&mut rng, 3, 1, false);
        let cir = CirTable::new(&taps, &g);
        let sc = HwiScenario::ideal();
        let re = ImpairmentRealization::ideal(&g);
        let w = vec![C64::default(); g.len_cp()];
        let v = ds_io_vector(&x, &cir, &sc, &re, &w).unwrap();
        let p = transceive(&x, &cir, &sc, &re, &w).unwrap();
        assert!(max_abs_diff(&v, &p.y) < 1e-10);
    }

    #[test]
    fn dco_only_zero_data_stays_in_zero_sequency() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cir = CirTable::new(&ChannelTaps::single(0.0, 0.0), &g);
        let sc = HwiScenario::preset(4)
            .unwrap()
            .only(&[Impairment::TxDco, Impairment::RxDco]);
        let re = draw_realization(&sc, &g, &mut rng).unwrap();
        let y = ds_io_vector(&DsGrid::zeros(g), &cir, &sc, &re, &vec![C64::default(); 65]).unwrap();
        for m in 0..8 {
            assert!(y[m * 8].norm() > 0.1);
            assert!(y[m * 8 + 1..(m + 1) * 8].iter().all(|v| v.norm() < 1e-12));
        }
    }

    #[test]
    fn scenario_four_three_paths_agree() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sc = linear_part(&HwiScenario::preset(4).unwrap());
        for _ in 0..5 {
            let x = random_grid(&g, &mut rng);
            let cir = CirTable::new(&random_taps(&mut rng, 3, 1, false), &g);
            let re = draw_realization(&sc, &g, &mut rng).unwrap();
            let w = complex_normal_vec(&mut rng, g.len_cp(), 0.1);
            let v = ds_io_vector(&x, &cir, &sc, &re, &w).unwrap();
            let ops = build_ds_matrices(&cir, &sc, &re, &g).unwrap();
            let d = ops.apply(x.as_slice(), &w).unwrap();
            let p = transceive(&x, &cir, &sc, &re, &w).unwrap();
            assert!(max_abs_diff(&v, &d) < 1e-8);
            assert!(max_abs_diff(&v, &p.y) < 1e-8);
        }
    }

    #[test]
    fn nonlinear_parts_are_rejected() {
        let g = geom();
        let cir = CirTable::new(&ChannelTaps::single(0.0, 0.0), &g);
        let sc = HwiScenario::preset(1).unwrap();
        let re = ImpairmentRealization::ideal(&g);
        let err = build_ds_matrices(&cir, &sc, &re, &g);
        assert!(matches!(err, Err(OtsmError::Unsupported(_))));
        let w = vec![C64::default(); 65];
        assert!(ds_io_vector(&DsGrid::zeros(g), &cir, &sc, &re, &w).is_err());
    }

    #[test]
    fn ideal_operators_have_no_image_or_dc() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cir = CirTable::new(&random_taps(&mut rng, 2, 1, false), &g);
        let ops = build_ds_matrices(&cir, &HwiScenario::ideal(), &ImpairmentRealization::ideal(&g), &g).unwrap();
        assert_eq!(ops.h_conj.camax(), 0.0);
        assert_eq!(ops.dc_tx_vec.camax(), 0.0);
        assert_eq!(ops.dc_rx_vec.camax(), 0.0);
        let f = modulation_matrix(&g).unwrap();
        let direct = f.transpose() * &ops.g * &f;
        assert!((direct - &ops.h_ds).camax() < 1e-12);
    }

    #[test]
    fn dt_operator_is_block_diagonal_for_integer_delays() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let cir = CirTable::new(&random_taps(&mut rng, 2, 1, true), &g);
            let ops = build_ds_matrices(&cir, &HwiScenario::ideal(), &ImpairmentRealization::ideal(&g), &g).unwrap();
            for r in 0..64 {
                for c in 0..64 {
                    if r / g.m_delay != c / g.m_delay {
                        assert!(ops.g_dt[(r, c)].norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn ds_operator_is_banded() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sc = linear_part(&HwiScenario::preset(4).unwrap());
        let cir = CirTable::new(&random_taps(&mut rng, 3, 1, false), &g);
        let re = draw_realization(&sc, &g, &mut rng).unwrap();
        let ops = build_ds_matrices(&cir, &sc, &re, &g).unwrap();
        let thr = 1e-9 * ops.h_ds.camax();
        assert!(out_of_band_max(&ops.h_ds, &g) <= thr);
        assert!(occupancy(&ops.h_ds, 1e-9) <= 2.0 * 2.0 / 8.0);
    }

    #[test]
    fn image_lands_on_the_same_sequency_bin() {
        // Flat static channel with IQI at both ends: each sequency bin sees
        // its own conjugate, scaled by the composite image coefficient.
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sc = HwiScenario::ideal();
        sc.tx_iqi = IqiParams {
            gain_db: 1.3,
            phase_deg: 3.0,
        };
        sc.rx_iqi = IqiParams {
            gain_db: 0.8,
            phase_deg: 2.0,
        };
        let cir = CirTable::new(&ChannelTaps::single(0.0, 0.0), &g);
        let re = ImpairmentRealization::ideal(&g);
        let ops = build_ds_matrices(&cir, &sc, &re, &g).unwrap();
        let beta = sc.rx_iqi.alpha() * sc.tx_iqi.beta() + sc.rx_iqi.beta() * sc.tx_iqi.alpha().conj();
        for _ in 0..10 {
            let (m0, n0) = (rng.gen_range(0..5), rng.gen_range(0..8));
            let mut x = vec![C64::default(); 64];
            x[m0 * 8 + n0] = complex_normal(&mut rng, 1.0);
            let xc: Vec<C64> = x.iter().map(|v| v.conj()).collect();
            let img = &ops.h_conj * CVec::from_column_slice(&xc);
            for k in 0..64 {
                let want = if k == m0 * 8 + n0 { beta * xc[k] } else { C64::default() };
                assert!((img[k] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn special_cases_collapse() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let base = HwiScenario::preset(4).unwrap();
        for mode in SpecialCase::ALL {
            let x = random_grid(&g, &mut rng);
            let cir = CirTable::new(&random_taps(&mut rng, 2, 1, false), &g);
            let w = complex_normal_vec(&mut rng, 65, 0.1);
            let r = special_case_residual(mode, &x, &cir, &base, &w).unwrap();
            assert!(r < 1e-9, "{} residual {r}", mode.name());
        }
    }

    #[test]
    fn dense_guard_trips() {
        let g = FrameGeometry::new(128, 64, 1, 1.0, 4).unwrap();
        let cir = CirTable::new(&ChannelTaps::single(0.0, 0.0), &g);
        let re = ImpairmentRealization::ideal(&g);
        assert!(matches!(
            build_ds_matrices(&cir, &HwiScenario::ideal(), &re, &g),
            Err(OtsmError::Size(_))
        ));
    }

    #[test]
    fn noise_operator_matches_time_path() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let sc = linear_part(&HwiScenario::preset(4).unwrap());
        let re = draw_realization(&sc, &g, &mut rng).unwrap();
        let cir = CirTable::new(&ChannelTaps::single(0.0, 0.0), &g);
        let ops = build_ds_matrices(&cir, &sc, &re, &g).unwrap();
        let w = complex_normal_vec(&mut rng, 65, 1.0);
        let wv = CVec::from_column_slice(&w);
        let dense = &ops.noise_direct * &wv + &ops.noise_conj * wv.conjugate();
        assert!(max_abs_diff(dense.as_slice(), &ds_noise(&sc, &re, &g, &w).unwrap()) < 1e-12);
    }
}
