//! Noise statistics, codeword matrices and pairwise / union error bounds.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelTaps;
use crate::error::{check_len, OtsmError, Result};
use crate::framing::{add_cp, build_frame, ds_to_time, time_to_ds, DsGrid, FrameGeometry, Qam};
use crate::impairments::{HwiScenario, ImpairmentRealization};
use crate::linalg::{det_in_place, CMat};
use crate::C64;

/// Gaussian tail `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Per-sample DS noise variance model for the receive front end.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    pub per_sample_var: Vec<f64>,
    pub sigma0_sq: f64,
    pub omega: Vec<f64>,
}

impl NoiseProfile {
    pub fn mean_var(&self) -> f64 {
        self.per_sample_var.iter().sum::<f64>() / self.per_sample_var.len() as f64
    }
}

/// `(1 + cos 2ω + g²(1 - cos(2ω + φ))) σ₀² / 2`
pub fn front_end_variance(sc: &HwiScenario, sigma0_sq: f64, omega: f64) -> f64 {
    let g = sc.rx_iqi.gain_linear();
    let phi = sc.rx_iqi.phase_rad();
    (1.0 + (2.0 * omega).cos() + g * g * (1.0 - (2.0 * omega + phi).cos())) * sigma0_sq / 2.0
}

pub fn noise_profile(
    sc: &HwiScenario,
    re: &ImpairmentRealization,
    sigma0_sq: f64,
    g: &FrameGeometry,
) -> Result<NoiseProfile> {
    check_len(g.len_cp(), re.len())?;
    let omega: Vec<f64> = (0..g.nm()).map(|q| re.rx_angle(q + g.l_max)).collect();
    Ok(NoiseProfile {
        per_sample_var: omega.iter().map(|&w| front_end_variance(sc, sigma0_sq, w)).collect(),
        sigma0_sq,
        omega,
    })
}

/// Effective noise variance including the receive DC offset power.
pub fn sigma_wbar(sc: &HwiScenario, sigma0_sq: f64, omega: f64) -> f64 {
    front_end_variance(sc, sigma0_sq, omega) + sc.rx_dco().powi(2)
}

/// Frame-level scalar: mean of the per-sample model plus `d_rx²`.
pub fn sigma_wbar_frame(profile: &NoiseProfile, sc: &HwiScenario) -> f64 {
    profile.mean_var() + sc.rx_dco().powi(2)
}

/// Integer delay and Doppler of one path, as the bound calculator needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStructure {
    pub delay: usize,
    pub doppler: f64,
}

pub fn path_structure(taps: &ChannelTaps) -> Result<Vec<PathStructure>> {
    if !taps.has_integer_delays() {
        return Err(OtsmError::Unsupported(
            "codeword matrices use the cyclic-shift channel form, which needs integer delays; \
             set channel.round_delays = true or use an integer-delay profile"
                .into(),
        ));
    }
    Ok(taps
        .paths
        .iter()
        .map(|p| PathStructure {
            delay: p.delay as usize,
            doppler: p.doppler,
        })
        .collect())
}

/// Codeword matrices: noiseless output is `Ω₁ h + Ω₂ h*`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaPair {
    pub omega1: CMat,
    pub omega2: CMat,
    pub omega_sum: CMat,
}

/// Builds `Ω₁(x)`, `Ω₂(x)` column by column: path `i` contributes
/// `Fᵀ R α_r Θ Π^{ℓ_i} Δ^{k_i} s̄` and its image `Fᵀ R β_r (Θ Π^{ℓ_i} Δ^{k_i} s̄)*`,
/// with `s̄` the Tx front-end output for `x`.
pub fn build_omega(
    x: &DsGrid,
    paths: &[PathStructure],
    sc: &HwiScenario,
    re: &ImpairmentRealization,
) -> Result<OmegaPair> {
    let g = x.geometry();
    check_len(g.len_cp(), re.len())?;
    if !sc.pa.is_identity() || sc.sto.frac_offset != 0.0 || sc.sto.int_offset != 0 {
        return Err(OtsmError::Unsupported(
            "codeword matrices cover IQI, DCO, phase noise and CFO only".into(),
        ));
    }
    let len = g.len_cp();
    let nm = g.nm();
    let s = add_cp(&ds_to_time(x.as_slice(), g)?, g.l_max);
    let sbar = crate::impairments::tx_front_end(&s, sc, re)?;
    let (ar, br) = (sc.rx_iqi.alpha(), sc.rx_iqi.beta());
    let p = paths.len();
    let mut omega1 = CMat::zeros(nm, p);
    let mut omega2 = CMat::zeros(nm, p);
    let mut v1 = vec![C64::default(); nm];
    let mut v2 = vec![C64::default(); nm];
    for (i, path) in paths.iter().enumerate() {
        if path.delay > g.l_max {
            return Err(OtsmError::Profile(format!(
                "path {i} delay {} beyond l_max",
                path.delay
            )));
        }
        for q in g.l_max..len {
            let src = (q + len - path.delay % len) % len;
            let z = C64::from_polar(1.0, std::f64::consts::TAU * path.doppler * src as f64 / nm as f64);
            let t = re.rx_rotation(q) * z * sbar[src];
            v1[q - g.l_max] = ar * t;
            v2[q - g.l_max] = br * t.conj();
        }
        let c1 = time_to_ds(&v1, g)?;
        let c2 = time_to_ds(&v2, g)?;
        for k in 0..nm {
            omega1[(k, i)] = c1[k];
            omega2[(k, i)] = c2[k];
        }
    }
    let omega_sum = &omega1 + &omega2;
    Ok(OmegaPair {
        omega1,
        omega2,
        omega_sum,
    })
}

fn mat_vec(m: &CMat, h: &[C64]) -> Vec<C64> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)] * h[c]).sum())
        .collect()
}

/// `Q( sqrt( ‖(Ω_i - Ω_j) h̄‖² / (2 b² ‖Ω_i‖_F² + 2 σ²) ) )`
pub fn cond_pep(omega_i: &CMat, omega_j: &CMat, h_bar: &[C64], b: f64, sigma_sq: f64) -> f64 {
    let d = omega_i - omega_j;
    let num: f64 = mat_vec(&d, h_bar).iter().map(|v| v.norm_sqr()).sum();
    let den = 2.0 * b * b * omega_i.norm_squared() + 2.0 * sigma_sq;
    if num == 0.0 {
        return 0.5;
    }
    if den == 0.0 {
        return 0.0;
    }
    q_function((num / den).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PepReport {
    pub conditional_bound: f64,
    pub chiani_bound: f64,
    pub high_snr: f64,
    pub kappa: usize,
    /// Eigenvalues of `Y_p Φ` (already including the `1/P` of the default `Y_p`).
    pub eigenvalues: Vec<f64>,
    pub rho1: f64,
    pub rho2: f64,
}

pub const RANK_THRESHOLD: f64 = 1e-10;

/// Square root of a Hermitian PSD matrix; rejects clearly negative spectra.
fn psd_sqrt(y: &CMat) -> Result<CMat> {
    let herm_err = (y - y.adjoint()).camax();
    if herm_err > 1e-10 * y.camax().max(1e-300) {
        return Err(OtsmError::Numeric("Y_p is not Hermitian".into()));
    }
    let eig = SymmetricEigen::new(y.clone());
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if eig.eigenvalues.iter().any(|&l| l < -1e-12 * top.max(1.0)) {
        return Err(OtsmError::Numeric("Y_p is not positive semi-definite".into()));
    }
    let s = eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0));
    Ok(&eig.eigenvectors * CMat::from_diagonal(&s) * eig.eigenvectors.adjoint())
}

/// Default channel covariance `(1/P) I`.
pub fn default_yp(p: usize) -> CMat {
    CMat::identity(p, p) * C64::new(1.0 / p as f64, 0.0)
}

pub fn pep_bound(omega_i: &CMat, omega_j: &CMat, b: f64, sigma_sq: f64, yp: &CMat, h_bar: &[C64]) -> Result<PepReport> {
    let p = omega_i.ncols();
    if yp.nrows() != p || yp.ncols() != p {
        return Err(OtsmError::Dimension {
            expected: p,
            got: yp.nrows(),
        });
    }
    let ys = psd_sqrt(yp)?;
    let d = omega_i - omega_j;
    let phi = d.adjoint() * &d;
    let m = &ys * phi * &ys;
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().map(|l| l.max(0.0)).collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    let kept: Vec<f64> = eigenvalues
        .iter()
        .copied()
        .filter(|&l| top > 0.0 && l > RANK_THRESHOLD * top)
        .collect();
    let fro = omega_i.norm_squared();
    let rho1 = 1.0 / (4.0 * b * b * fro + 4.0 * sigma_sq);
    let rho2 = 1.0 / (3.0 * b * b * fro + 3.0 * sigma_sq);
    let chiani = kept.iter().map(|l| 1.0 / (1.0 + rho1 * l)).product::<f64>() / 12.0
        + kept.iter().map(|l| 1.0 / (1.0 + rho2 * l)).product::<f64>() / 4.0;
    let high_snr = kept.iter().map(|l| 1.0 / (rho1 * l)).product::<f64>() / 12.0
        + kept.iter().map(|l| 1.0 / (rho2 * l)).product::<f64>() / 4.0;
    Ok(PepReport {
        conditional_bound: cond_pep(omega_i, omega_j, h_bar, b, sigma_sq),
        chiani_bound: chiani.clamp(0.0, 1.0),
        high_snr: high_snr.max(0.0),
        kappa: kept.len(),
        eigenvalues,
        rho1,
        rho2,
    })
}

/// Chiani-type bound `(1/12)/det(I + ρ₁ Y Φ) + (1/4)/det(I + ρ₂ Y Φ)` for one
/// pair, allocation-free. `y_diag` is the diagonal of a diagonal `Y_p`.
fn chiani_pair(oi: &[C64], oj: &[C64], nm: usize, y_diag: &[f64], rho1: f64, rho2: f64, buf: &mut [C64]) -> f64 {
    let p = y_diag.len();
    if p == 1 {
        let phi: f64 = oi.iter().zip(oj).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * y_diag[0];
        return (1.0 / 12.0) / (1.0 + rho1 * phi) + 0.25 / (1.0 + rho2 * phi);
    }
    // Columns are stored contiguously: column c is oi[c*nm..(c+1)*nm].
    let mut phi = vec![C64::default(); p * p];
    for r in 0..p {
        for c in r..p {
            let mut acc = C64::default();
            for k in 0..nm {
                let dr = oi[r * nm + k] - oj[r * nm + k];
                let dc = oi[c * nm + k] - oj[c * nm + k];
                acc += dr.conj() * dc;
            }
            phi[r * p + c] = acc;
            phi[c * p + r] = acc.conj();
        }
    }
    let mut out = 0.0;
    for (rho, w) in [(rho1, 1.0 / 12.0), (rho2, 0.25)] {
        for r in 0..p {
            for c in 0..p {
                buf[r * p + c] = phi[r * p + c] * (rho * y_diag[r]);
            }
            buf[r * p + r] += 1.0;
        }
        out += w / det_in_place(&mut buf[..p * p], p).re;
    }
    out
}

/// `(1 / (N_b 2^{N_b})) Σ PEP · N_be` given the already-summed numerator.
pub fn union_bound(n_bits: usize, weighted_sum: f64) -> f64 {
    weighted_sum / (n_bits as f64 * 2f64.powi(n_bits as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairPolicy {
    /// Every ordered codeword pair; guarded by `max_bits`.
    Exhaustive { max_bits: usize },
    /// Random single-symbol substitutions, reweighted by inverse inclusion probability.
    Sampled { pairs: usize, seed: u64 },
}

/// Everything the union bound needs besides the SNR.
#[derive(Debug, Clone)]
pub struct BoundSystem {
    pub geometry: FrameGeometry,
    pub paths: Vec<PathStructure>,
    pub scenario: HwiScenario,
    pub realization: ImpairmentRealization,
    pub b: f64,
    /// Diagonal of `Y_p`.
    pub yp_diag: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbepEstimate {
    pub abep: f64,
    pub pairs: u64,
}

struct Codebook {
    /// Per codeword, Ω(x) with columns stored contiguously.
    omegas: Vec<Vec<C64>>,
    fro: Vec<f64>,
}

fn codeword_grid(sys: &BoundSystem, qam: &Qam, symbols: &[usize]) -> Result<DsGrid> {
    let d: Vec<C64> = symbols.iter().map(|&i| qam.symbol(i)).collect();
    build_frame(&d, sys.geometry)
}

fn omega_columns(sys: &BoundSystem, grid: &DsGrid) -> Result<(Vec<C64>, f64)> {
    let om = build_omega(grid, &sys.paths, &sys.scenario, &sys.realization)?.omega_sum;
    let fro = om.norm_squared();
    Ok((om.as_slice().to_vec(), fro))
}

fn symbols_of(idx: usize, k: usize, bits_per_sym: usize) -> Vec<usize> {
    let mask = (1 << bits_per_sym) - 1;
    (0..k).map(|s| (idx >> ((k - 1 - s) * bits_per_sym)) & mask).collect()
}

impl BoundSystem {
    fn codebook(&self, qam: &Qam) -> Result<Codebook> {
        let k = self.geometry.data_symbols();
        let bps = qam.bits_per_symbol();
        let count = 1usize << self.geometry.bits_per_frame();
        let mut omegas = Vec::with_capacity(count);
        let mut fro = Vec::with_capacity(count);
        for idx in 0..count {
            let grid = codeword_grid(self, qam, &symbols_of(idx, k, bps))?;
            let (o, f) = omega_columns(self, &grid)?;
            omegas.push(o);
            fro.push(f);
        }
        Ok(Codebook { omegas, fro })
    }
}

/// Precomputed state for repeated ABEP evaluation over an SNR grid.
pub struct AbepCalculator {
    sys: BoundSystem,
    policy: PairPolicy,
    codebook: Option<Codebook>,
    samples: Vec<(Vec<C64>, f64, Vec<C64>, u32)>,
}

impl AbepCalculator {
    pub fn new(sys: BoundSystem, policy: PairPolicy) -> Result<Self> {
        let qam = Qam::new(sys.geometry.qam_order)?;
        let nb = sys.geometry.bits_per_frame();
        if sys.yp_diag.len() != sys.paths.len() {
            return Err(OtsmError::Dimension {
                expected: sys.paths.len(),
                got: sys.yp_diag.len(),
            });
        }
        if sys.yp_diag.iter().any(|&v| !(v >= 0.0)) {
            return Err(OtsmError::Numeric("Y_p diagonal must be non-negative".into()));
        }
        match policy {
            PairPolicy::Exhaustive { max_bits } => {
                if nb > max_bits {
                    return Err(OtsmError::Size(format!(
                        "exhaustive pairs need N_b <= {max_bits}, frame has {nb} bits"
                    )));
                }
                let codebook = Some(sys.codebook(&qam)?);
                Ok(Self {
                    sys,
                    policy,
                    codebook,
                    samples: Vec::new(),
                })
            }
            PairPolicy::Sampled { pairs, seed } => {
                if pairs == 0 {
                    return Err(OtsmError::config("bound.sampled_pairs", "must be positive"));
                }
                let k = sys.geometry.data_symbols();
                let q = qam.order() as usize;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut samples = Vec::with_capacity(pairs);
                for _ in 0..pairs {
                    let si: Vec<usize> = (0..k).map(|_| rng.gen_range(0..q)).collect();
                    let pos = rng.gen_range(0..k);
                    let mut sj = si.clone();
                    let other = rng.gen_range(0..q - 1);
                    sj[pos] = if other >= si[pos] { other + 1 } else { other };
                    let nbe = (si[pos] ^ sj[pos]).count_ones();
                    let (oi, fi) = omega_columns(&sys, &codeword_grid(&sys, &qam, &si)?)?;
                    let (oj, _) = omega_columns(&sys, &codeword_grid(&sys, &qam, &sj)?)?;
                    samples.push((oi, fi, oj, nbe));
                }
                Ok(Self {
                    sys,
                    policy,
                    codebook: None,
                    samples,
                })
            }
        }
    }

    pub fn evaluate(&self, sigma_sq: f64) -> AbepEstimate {
        let nm = self.sys.geometry.nm();
        let p = self.sys.paths.len();
        let b2 = self.sys.b * self.sys.b;
        let rho = |fro: f64| {
            (
                1.0 / (4.0 * b2 * fro + 4.0 * sigma_sq),
                1.0 / (3.0 * b2 * fro + 3.0 * sigma_sq),
            )
        };
        let mut buf = vec![C64::default(); p * p];
        let nb = self.sys.geometry.bits_per_frame();
        match (&self.policy, &self.codebook) {
            (PairPolicy::Exhaustive { .. }, Some(cb)) => {
                let count = cb.omegas.len();
                let mut sum = 0.0;
                for i in 0..count {
                    let (r1, r2) = rho(cb.fro[i]);
                    for j in 0..count {
                        if i == j {
                            continue;
                        }
                        let nbe = ((i ^ j) as u64).count_ones() as f64;
                        sum += nbe * chiani_pair(&cb.omegas[i], &cb.omegas[j], nm, &self.sys.yp_diag, r1, r2, &mut buf);
                    }
                }
                AbepEstimate {
                    abep: union_bound(nb, sum),
                    pairs: (count * (count - 1)) as u64,
                }
            }
            _ => {
                let k = self.sys.geometry.data_symbols() as f64;
                let q = self.sys.geometry.qam_order as f64;
                let mut sum = 0.0;
                for (oi, fi, oj, nbe) in &self.samples {
                    let (r1, r2) = rho(*fi);
                    sum += *nbe as f64 * chiani_pair(oi, oj, nm, &self.sys.yp_diag, r1, r2, &mut buf);
                }
                // Population of single-substitution pairs is 2^{N_b} K (Q-1).
                let abep = k * (q - 1.0) * sum / (nb as f64 * self.samples.len() as f64);
                AbepEstimate {
                    abep,
                    pairs: self.samples.len() as u64,
                }
            }
        }
    }
}

pub fn abep(policy: PairPolicy, sys: BoundSystem, sigma_sq: f64) -> Result<AbepEstimate> {
    Ok(AbepCalculator::new(sys, policy)?.evaluate(sigma_sq))
}
