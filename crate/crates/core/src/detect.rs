//! Data detection: exhaustive ML over a widely-linear prediction model and
//! a matched-filter Gauss–Seidel (MFGS) iterative detector.

use crate::analysis::{build_omega, PathStructure};
use crate::channel::{ChannelTaps, CirTable};
use crate::effective::{gi_coeffs, linear_part};
use crate::error::{check_len, OtsmError, Result};
use crate::framing::{build_frame, ds_to_time, time_to_ds, DsGrid, FrameGeometry, Qam};
use crate::impairments::{HwiScenario, ImpairmentRealization};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Ml,
    Mfgs,
}

impl DetectorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Some(Self::Ml),
            "mfgs" => Some(Self::Mfgs),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ml => "ml",
            Self::Mfgs => "mfgs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub max_iters: usize,
    /// Relaxation weight on the hard-decision feedback.
    pub delta: f64,
    /// ML refuses candidate sets larger than this.
    pub ml_max_candidates: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            kind: DetectorKind::Mfgs,
            max_iters: 15,
            delta: 0.25,
            ml_max_candidates: 65_536,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(OtsmError::config("detector.max_iters", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(OtsmError::config("detector.delta", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Constellation indices of the data symbols, in fill order.
    pub indices: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Prediction `c + Σ_k (a_k x_k + b_k x_k*)` over the data symbols.
#[derive(Debug, Clone)]
pub struct DsLinearModel {
    pub offset: Vec<C64>,
    pub a: Vec<Vec<C64>>,
    pub b: Vec<Vec<C64>>,
}

impl DsLinearModel {
    /// Probes an affine widely-linear map with the zero frame and with
    /// `1` and `j` on each data position.
    pub fn probe<F>(g: &FrameGeometry, mut predict: F) -> Result<Self>
    where
        F: FnMut(&DsGrid) -> Result<Vec<C64>>,
    {
        let k = g.data_symbols();
        let mut d = vec![C64::default(); k];
        let offset = predict(&build_frame(&d, *g)?)?;
        let mut a = Vec::with_capacity(k);
        let mut b = Vec::with_capacity(k);
        for i in 0..k {
            d[i] = C64::new(1.0, 0.0);
            let p1 = predict(&build_frame(&d, *g)?)?;
            d[i] = C64::new(0.0, 1.0);
            let pj = predict(&build_frame(&d, *g)?)?;
            d[i] = C64::default();
            let mut ai = Vec::with_capacity(offset.len());
            let mut bi = Vec::with_capacity(offset.len());
            for ((u, v), c) in p1.iter().zip(&pj).zip(&offset) {
                let s = u - c;
                let t = v - c;
                // s = a + b, t = j(a - b)
                let av = (s - C64::i() * t) * 0.5;
                ai.push(av);
                bi.push(s - av);
            }
            a.push(ai);
            b.push(bi);
        }
        Ok(Self { offset, a, b })
    }

    /// Receiver model `Ω₁(x) h̄ + Ω₂(x) h̄*` for a known impairment realization.
    /// The PA and timing offset are not part of it.
    pub fn from_omega(
        g: &FrameGeometry,
        paths: &[PathStructure],
        h_bar: &[C64],
        sc: &HwiScenario,
        re: &ImpairmentRealization,
    ) -> Result<Self> {
        check_len(paths.len(), h_bar.len())?;
        let lin = linear_part(sc);
        Self::probe(g, |x| {
            let om = build_omega(x, paths, &lin, re)?;
            let mut y = vec![C64::default(); g.nm()];
            for (i, h) in h_bar.iter().enumerate() {
                for (k, yk) in y.iter_mut().enumerate() {
                    *yk += om.omega1[(k, i)] * h + om.omega2[(k, i)] * h.conj();
                }
            }
            Ok(y)
        })
    }

    pub fn predict(&self, x: &[C64]) -> Vec<C64> {
        let mut y = self.offset.clone();
        for (k, &xk) in x.iter().enumerate() {
            for (yi, (a, b)) in y.iter_mut().zip(self.a[k].iter().zip(&self.b[k])) {
                *yi += a * xk + b * xk.conj();
            }
        }
        y
    }
}

fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// Exhaustive ML: `argmin_x ‖y - pred(x)‖²` over all data-symbol combinations.
///
/// Uses the expansion `Σ_k d_k(s_k) + Σ_{k<k'} c_{kk'}(s_k, s_k')`, where
/// `d_k(s) = ‖v_{k,s}‖² - 2 Re⟨v_{k,s}, y'⟩` and `c = 2 Re⟨v_{k,s}, v_{k',s'}⟩`.
/// Candidates are visited in Gray-code order of the frame's bit vector;
/// ties keep the first one visited.
pub fn ml_detect(y: &[C64], model: &DsLinearModel, qam: &Qam, max_candidates: u64) -> Result<Detection> {
    check_len(model.offset.len(), y.len())?;
    let k = model.a.len();
    let q = qam.order() as usize;
    let total = (q as f64).powi(k as i32);
    if total > max_candidates as f64 {
        return Err(OtsmError::Size(format!(
            "ML over {k} symbols of {q}-QAM needs {total:e} candidates (limit {max_candidates})"
        )));
    }
    let yp: Vec<C64> = y.iter().zip(&model.offset).map(|(a, b)| a - b).collect();
    let v: Vec<Vec<Vec<C64>>> = (0..k)
        .map(|i| {
            (0..q)
                .map(|s| {
                    let p = qam.symbol(s);
                    model.a[i]
                        .iter()
                        .zip(&model.b[i])
                        .map(|(a, b)| a * p + b * p.conj())
                        .collect()
                })
                .collect()
        })
        .collect();
    let d: Vec<Vec<f64>> = v
        .iter()
        .map(|vk| vk.iter().map(|vs| inner(vs, vs).re - 2.0 * inner(vs, &yp).re).collect())
        .collect();
    // pair[(k*q + s) * k*q + (k'*q + s')]
    let kq = k * q;
    let mut pair = vec![0.0; kq * kq];
    for i in 0..k {
        for j in i + 1..k {
            for s in 0..q {
                for t in 0..q {
                    let c = 2.0 * inner(&v[i][s], &v[j][t]).re;
                    pair[(i * q + s) * kq + j * q + t] = c;
                }
            }
        }
    }
    let mut cur = vec![0usize; k];
    let mut best = cur.clone();
    let mut best_metric = f64::INFINITY;
    let total = total as u64;
    for n in 0..total {
        let mut r = n ^ (n >> 1);
        for slot in cur.iter_mut().rev() {
            *slot = (r % q as u64) as usize;
            r /= q as u64;
        }
        let mut m = 0.0;
        for i in 0..k {
            let si = cur[i];
            m += d[i][si];
            let row = &pair[(i * q + si) * kq..];
            for j in i + 1..k {
                m += row[j * q + cur[j]];
            }
        }
        if m < best_metric {
            best_metric = m;
            best.copy_from_slice(&cur);
        }
    }
    Ok(Detection {
        indices: best,
        iterations: 1,
        converged: true,
    })
}

/// Cyclic banded time-domain channel `G` with `G[q, (q-l) mod NM] = g_l[q]`.
#[derive(Debug, Clone)]
pub struct BandedChannel {
    nm: usize,
    l_max: usize,
    /// `taps[q * (l_max+1) + l]`
    taps: Vec<C64>,
    /// Known additive term in the time-domain body (Tx DC image).
    pub offset: Vec<C64>,
}

impl BandedChannel {
    /// Direct-path coefficients `g1` from the CSI estimate and a known
    /// impairment realization. The conjugate branch is left as interference.
    pub fn from_estimate(
        taps: &ChannelTaps,
        sc: &HwiScenario,
        re: &ImpairmentRealization,
        g: &FrameGeometry,
    ) -> Result<Self> {
        let cir = CirTable::new(taps, g);
        let (m, n, lm) = (g.m_delay, g.n_seq, g.l_max);
        let nm = g.nm();
        let mut tv = vec![C64::default(); nm * (lm + 1)];
        let mut offset = vec![C64::default(); nm];
        let d_tx = sc.tx_dco();
        for ni in 0..n {
            for mi in 0..m {
                let q = mi + ni * m;
                for l in 0..=lm {
                    let (g1, _, g3) = gi_coeffs(&cir, sc, re, g, l, mi, ni)?;
                    tv[q * (lm + 1) + l] = g1;
                    offset[q] += g3 * d_tx;
                }
            }
        }
        Ok(Self {
            nm,
            l_max: lm,
            taps: tv,
            offset,
        })
    }

    pub fn apply(&self, s: &[C64]) -> Vec<C64> {
        let mut r = vec![C64::default(); self.nm];
        for (q, rq) in r.iter_mut().enumerate() {
            for l in 0..=self.l_max {
                *rq += self.taps[q * (self.l_max + 1) + l] * s[(q + self.nm - l % self.nm) % self.nm];
            }
        }
        r
    }

    pub fn apply_adjoint(&self, r: &[C64]) -> Vec<C64> {
        let mut z = vec![C64::default(); self.nm];
        for q in 0..self.nm {
            for l in 0..=self.l_max {
                z[(q + self.nm - l % self.nm) % self.nm] += self.taps[q * (self.l_max + 1) + l].conj() * r[q];
            }
        }
        z
    }

    /// Sparse rows of `Γ = Gᴴ G`, duplicate columns merged.
    pub fn gram_rows(&self) -> Vec<Vec<(usize, C64)>> {
        let nm = self.nm;
        let lp = self.l_max + 1;
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::with_capacity(2 * self.l_max + 1); nm];
        for (i, row) in rows.iter_mut().enumerate() {
            for l1 in 0..lp {
                let q = (i + l1) % nm;
                let gi = self.taps[q * lp + l1].conj();
                for l2 in 0..lp {
                    let j = (q + nm - l2 % nm) % nm;
                    let v = gi * self.taps[q * lp + l2];
                    match row.iter_mut().find(|(c, _)| *c == j) {
                        Some(e) => e.1 += v,
                        None => row.push((j, v)),
                    }
                }
            }
        }
        rows
    }
}

fn hard_decide(s: &[C64], g: &FrameGeometry, qam: &Qam, idx: &mut [usize]) -> Result<Vec<C64>> {
    let x = time_to_ds(s, g)?;
    let k = g.data_symbols();
    let mut hard = vec![C64::default(); g.nm()];
    for i in 0..k {
        idx[i] = qam.nearest_index(x[i]);
        hard[i] = qam.symbol(idx[i]);
    }
    Ok(hard)
}

/// MFGS: matched filter `z = Gᴴ r`, Gauss–Seidel sweeps on `Γ s = z` in
/// ascending order, then DS hard decisions fed back with weight `δ`.
/// Stops once no decision changes.
pub fn mfgs_detect(
    y: &[C64],
    ch: &BandedChannel,
    g: &FrameGeometry,
    qam: &Qam,
    cfg: &DetectorConfig,
) -> Result<Detection> {
    check_len(g.nm(), y.len())?;
    check_len(g.nm(), ch.nm)?;
    let mut r = ds_to_time(y, g)?;
    for (a, b) in r.iter_mut().zip(&ch.offset) {
        *a -= b;
    }
    let z = ch.apply_adjoint(&r);
    let rows = ch.gram_rows();
    let diag: Vec<C64> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().find(|(c, _)| *c == i).map(|e| e.1).unwrap_or_default())
        .collect();
    let mut s: Vec<C64> = z
        .iter()
        .zip(&diag)
        .map(|(zi, di)| if di.norm_sqr() > 0.0 { zi / di } else { C64::default() })
        .collect();
    let k = g.data_symbols();
    let mut idx = vec![0usize; k];
    let mut prev: Option<Vec<usize>> = None;
    let mut best = (f64::INFINITY, vec![0usize; k]);
    for it in 1..=cfg.max_iters {
        for i in 0..s.len() {
            if diag[i].norm_sqr() == 0.0 {
                continue;
            }
            let mut acc = z[i];
            for &(j, v) in &rows[i] {
                if j != i {
                    acc -= v * s[j];
                }
            }
            s[i] = acc / diag[i];
        }
        let hard = hard_decide(&s, g, qam, &mut idx)?;
        let s_hard = ds_to_time(&hard, g)?;
        let resid: f64 = ch.apply(&s_hard).iter().zip(&r).map(|(a, b)| (a - b).norm_sqr()).sum();
        if resid < best.0 {
            best = (resid, idx.clone());
        }
        if prev.as_deref() == Some(&idx[..]) {
            return Ok(Detection {
                indices: idx,
                iterations: it,
                converged: true,
            });
        }
        prev = Some(idx.clone());
        for (si, hi) in s.iter_mut().zip(&s_hard) {
            *si = *si * (1.0 - cfg.delta) + hi * cfg.delta;
        }
    }
    Ok(Detection {
        indices: best.1,
        iterations: cfg.max_iters,
        converged: false,
    })
}
