//! QAM mapping, zero-padded delay-sequency frames and the ideal
//! modulate/demodulate chain.

use crate::error::{check_len, OtsmError, Result};
use crate::linalg::{kron_real, to_complex, CMat};
use crate::transforms::{fwht_in_place, hadamard_matrix, ShufflePermutation};
use crate::C64;

/// Frame dimensions. Rows are delay bins, columns sequency bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGeometry {
    pub m_delay: usize,
    pub n_seq: usize,
    pub l_max: usize,
    pub delta_f: f64,
    pub qam_order: u32,
}

impl FrameGeometry {
    pub fn new(m_delay: usize, n_seq: usize, l_max: usize, delta_f: f64, qam_order: u32) -> Result<Self> {
        let g = Self {
            m_delay,
            n_seq,
            l_max,
            delta_f,
            qam_order,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_delay <= 2 * self.l_max + 1 {
            return Err(OtsmError::Geometry(format!(
                "M = {} must exceed 2*l_max+1 = {}",
                self.m_delay,
                2 * self.l_max + 1
            )));
        }
        if self.n_seq == 0 || !self.n_seq.is_power_of_two() {
            return Err(OtsmError::Geometry(format!("N = {} is not a power of two", self.n_seq)));
        }
        if !(self.delta_f.is_finite() && self.delta_f > 0.0) {
            return Err(OtsmError::Geometry(format!(
                "delta_f = {} must be positive",
                self.delta_f
            )));
        }
        Qam::new(self.qam_order)?;
        Ok(())
    }

    /// NM, the CP-free frame length.
    pub fn nm(&self) -> usize {
        self.m_delay * self.n_seq
    }

    /// NM + l_max, the frame length with cyclic prefix.
    pub fn len_cp(&self) -> usize {
        self.nm() + self.l_max
    }

    pub fn zp_rows(&self) -> usize {
        2 * self.l_max + 1
    }

    pub fn data_rows(&self) -> usize {
        self.m_delay - self.zp_rows()
    }

    pub fn data_symbols(&self) -> usize {
        self.n_seq * self.data_rows()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.qam_order.trailing_zeros() as usize
    }

    /// N_b = N (M - 2 l_max - 1) log2 Q.
    pub fn bits_per_frame(&self) -> usize {
        self.data_symbols() * self.bits_per_symbol()
    }

    /// B = M Δf.
    pub fn bandwidth(&self) -> f64 {
        self.m_delay as f64 * self.delta_f
    }

    /// Row-major grid indices that carry data, in fill order.
    pub fn data_indices(&self) -> std::ops::Range<usize> {
        0..self.data_symbols()
    }
}

/// Gray-coded square QAM with unit average energy.
///
/// The symbol index is the bit group read MSB first. The first half of the
/// bits selects the in-phase level, the second half the quadrature level.
#[derive(Debug, Clone, PartialEq)]
pub struct Qam {
    order: u32,
    bits_per_axis: usize,
    scale: f64,
    points: Vec<C64>,
}

fn gray_to_bin(mut g: usize) -> usize {
    let mut b = 0;
    while g != 0 {
        b ^= g;
        g >>= 1;
    }
    b
}

fn bin_to_gray(b: usize) -> usize {
    b ^ (b >> 1)
}

impl Qam {
    pub fn new(order: u32) -> Result<Self> {
        if !matches!(order, 4 | 16 | 64) {
            return Err(OtsmError::config(
                "geometry.qam_order",
                format!("unsupported QAM order {order}; expected 4, 16 or 64"),
            ));
        }
        let bits = order.trailing_zeros() as usize;
        let bits_per_axis = bits / 2;
        let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let mut q = Self {
            order,
            bits_per_axis,
            scale,
            points: Vec::new(),
        };
        q.points = (0..order as usize).map(|i| q.point(i)).collect();
        Ok(q)
    }

    fn level(&self, axis_bits: usize) -> f64 {
        let side = 1usize << self.bits_per_axis;
        (side as f64 - 1.0 - 2.0 * gray_to_bin(axis_bits) as f64) / self.scale
    }

    fn axis_index(&self, v: f64) -> usize {
        let side = (1usize << self.bits_per_axis) as f64;
        let i = ((side - 1.0 - v * self.scale) / 2.0).round();
        bin_to_gray(i.clamp(0.0, side - 1.0) as usize)
    }

    fn point(&self, idx: usize) -> C64 {
        let k = self.bits_per_axis;
        C64::new(self.level(idx >> k), self.level(idx & ((1 << k) - 1)))
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Constellation indexed by symbol index.
    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn symbol(&self, idx: usize) -> C64 {
        self.points[idx]
    }

    /// Nearest constellation index (per-axis slicing).
    pub fn nearest_index(&self, s: C64) -> usize {
        (self.axis_index(s.re) << self.bits_per_axis) | self.axis_index(s.im)
    }

    pub fn slice(&self, s: C64) -> C64 {
        self.points[self.nearest_index(s)]
    }

    pub fn index_from_bits(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
    }

    pub fn push_bits(&self, idx: usize, out: &mut Vec<u8>) {
        let k = self.bits_per_symbol();
        for b in (0..k).rev() {
            out.push(((idx >> b) & 1) as u8);
        }
    }

    pub fn map(&self, bits: &[u8]) -> Result<Vec<C64>> {
        let k = self.bits_per_symbol();
        if bits.len() % k != 0 {
            return Err(OtsmError::InvalidLength {
                len: bits.len(),
                reason: "bit count is not a multiple of log2(Q)",
            });
        }
        Ok(bits.chunks(k).map(|c| self.points[self.index_from_bits(c)]).collect())
    }

    /// Hard-decision demapping.
    pub fn demap(&self, symbols: &[C64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for &s in symbols {
            self.push_bits(self.nearest_index(s), &mut out);
        }
        out
    }
}

/// M×N delay-sequency grid, row-major, with zero ZP rows at the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct DsGrid {
    geometry: FrameGeometry,
    symbols: Vec<C64>,
}

impl DsGrid {
    pub fn zeros(geometry: FrameGeometry) -> Self {
        Self {
            geometry,
            symbols: vec![C64::default(); geometry.nm()],
        }
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geometry
    }

    /// The row-major vector `x = vec(Xᵀ)`.
    pub fn as_slice(&self) -> &[C64] {
        &self.symbols
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.symbols
    }

    pub fn row(&self, m: usize) -> &[C64] {
        let n = self.geometry.n_seq;
        &self.symbols[m * n..(m + 1) * n]
    }

    pub fn data(&self) -> &[C64] {
        &self.symbols[..self.geometry.data_symbols()]
    }
}

/// Places data symbols row by row into the non-ZP rows.
pub fn build_frame(symbols: &[C64], geometry: FrameGeometry) -> Result<DsGrid> {
    geometry.validate()?;
    check_len(geometry.data_symbols(), symbols.len())?;
    let mut grid = DsGrid::zeros(geometry);
    grid.symbols[..symbols.len()].copy_from_slice(symbols);
    Ok(grid)
}

/// Time-domain frame, with or without cyclic prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<C64>,
    pub has_cp: bool,
}

/// `P (I_M ⊗ W_N) x`: WHT along each row, then the perfect shuffle.
pub fn ds_to_time(x: &[C64], g: &FrameGeometry) -> Result<Vec<C64>> {
    check_len(g.nm(), x.len())?;
    let (m, n) = (g.m_delay, g.n_seq);
    let mut rows = x.to_vec();
    for r in rows.chunks_mut(n) {
        fwht_in_place(r)?;
    }
    let mut out = vec![C64::default(); g.nm()];
    for mi in 0..m {
        for ni in 0..n {
            out[ni * m + mi] = rows[mi * n + ni];
        }
    }
    Ok(out)
}

/// `(I_M ⊗ W_N) Pᵀ r`, the inverse of [`ds_to_time`].
pub fn time_to_ds(r: &[C64], g: &FrameGeometry) -> Result<Vec<C64>> {
    check_len(g.nm(), r.len())?;
    let (m, n) = (g.m_delay, g.n_seq);
    let mut out = vec![C64::default(); g.nm()];
    for mi in 0..m {
        for ni in 0..n {
            out[mi * n + ni] = r[ni * m + mi];
        }
    }
    for row in out.chunks_mut(n) {
        fwht_in_place(row)?;
    }
    Ok(out)
}

pub fn add_cp(body: &[C64], cp: usize) -> Vec<C64> {
    let mut s = Vec::with_capacity(body.len() + cp);
    s.extend_from_slice(&body[body.len() - cp..]);
    s.extend_from_slice(body);
    s
}

pub fn otsm_modulate(grid: &DsGrid) -> Result<TimeSignal> {
    let g = grid.geometry();
    let body = ds_to_time(grid.as_slice(), g)?;
    Ok(TimeSignal {
        samples: add_cp(&body, g.l_max),
        has_cp: true,
    })
}

pub fn otsm_demodulate(r: &TimeSignal, g: &FrameGeometry) -> Result<Vec<C64>> {
    check_len(g.len_cp(), r.samples.len())?;
    time_to_ds(&r.samples[g.l_max..], g)
}

/// Dense `P (I_M ⊗ W_N)`.
pub fn modulation_matrix(g: &FrameGeometry) -> Result<CMat> {
    let p = ShufflePermutation::new(g.m_delay, g.n_seq)?.matrix();
    let w = hadamard_matrix(g.n_seq)?;
    let eye = nalgebra::DMatrix::<f64>::identity(g.m_delay, g.m_delay);
    Ok(to_complex(&(p * kron_real(&eye, &w))))
}

/// Dense `(W_N ⊗ I_M) P`, the same operator written in time-major form.
pub fn modulation_matrix_time_major(g: &FrameGeometry) -> Result<CMat> {
    let p = ShufflePermutation::new(g.m_delay, g.n_seq)?.matrix();
    let w = hadamard_matrix(g.n_seq)?;
    let eye = nalgebra::DMatrix::<f64>::identity(g.m_delay, g.m_delay);
    Ok(to_complex(&(kron_real(&w, &eye) * p)))
}
