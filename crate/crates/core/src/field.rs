//! Real fields on the torus `[0,1)^d` stored as truncated Fourier series.
//!
//! Convention: `u(x) = Σ_k û_k exp(2πi k·x)` with `û_k = N^{-d} Σ_x u(x) exp(-2πi k·x)`.
//! The Laplacian has symbol `-4π²|k|²` and the `H^s` norm is
//! `‖u‖²_{H^s} = Σ_k (1 + 4π²|k|²)^s |û_k|²`.
//!
//! Coefficients are kept on the full `N^d` grid in FFT order (axis 0 slowest,
//! index `i` holds wavenumber `i` for `i <= N/2` and `i - N` otherwise).

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// `4π²`, the Laplacian symbol per unit `|k|²`.
pub const FOUR_PI_SQ: f64 = 4.0 * PI * PI;

const CHECKPOINT_MAGIC: &[u8; 4] = b"MACF";
const CHECKPOINT_VERSION: u16 = 1;

/// Sobolev regularity order `s`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Sobolev(pub f64);

impl Sobolev {
    pub const L2: Sobolev = Sobolev(0.0);
    pub const H1: Sobolev = Sobolev(1.0);
    pub const H2: Sobolev = Sobolev(2.0);
    pub const H_MINUS_1: Sobolev = Sobolev(-1.0);

    #[inline]
    pub fn weight(self, k_sq: f64) -> f64 {
        (1.0 + FOUR_PI_SQ * k_sq).powf(self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    dim: usize,
    n: usize,
    coeffs: Vec<Complex64>,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Unnormalized in-place multi-dimensional FFT on an `n^dim` row-major buffer.
fn fft_nd(buf: &mut [Complex64], dim: usize, n: usize, inverse: bool) {
    let fft = plan(n, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    let mut lines = Vec::new();
    for axis in 0..dim.saturating_sub(1) {
        let stride = n.pow((dim - 1 - axis) as u32);
        let block = n * stride;
        lines.resize(block, Complex64::new(0.0, 0.0));
        for chunk in buf.chunks_exact_mut(block) {
            for i in 0..n {
                for r in 0..stride {
                    lines[r * n + i] = chunk[i * stride + r];
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            for i in 0..n {
                for r in 0..stride {
                    chunk[i * stride + r] = lines[r * n + i];
                }
            }
        }
    }
}

pub(crate) fn check_shape(dim: usize, n: usize) -> Result<()> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidDimension(dim));
    }
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidGridSize(n));
    }
    Ok(())
}

/// Grid used for dealiased products: at least `3N/2`, rounded up to even.
pub fn padded_size(n: usize) -> usize {
    let p = (3 * n).div_ceil(2);
    p + p % 2
}

#[inline]
fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[inline]
fn unflatten(flat: usize, dim: usize, n: usize) -> [usize; 3] {
    let mut idx = [0usize; 3];
    let mut rest = flat;
    for axis in (0..dim).rev() {
        idx[axis] = rest % n;
        rest /= n;
    }
    idx
}

#[inline]
fn flatten(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Per-axis index map from an `n` grid into a larger `p` grid. The Nyquist
/// mode is split evenly between `±n/2` so that realness is preserved.
fn pad_targets(i: usize, n: usize, p: usize) -> ([(usize, f64); 2], usize) {
    let h = n / 2;
    if p == n || i < h {
        ([(i, 1.0), (0, 0.0)], 1)
    } else if i == h {
        ([(h, 0.5), (p - h, 0.5)], 2)
    } else {
        ([(p - (n - i), 1.0), (0, 0.0)], 1)
    }
}

/// Inverse of [`pad_targets`]: sources in the `p` grid feeding index `i` of
/// the `n` grid. Both `±n/2` fold onto the Nyquist slot.
fn truncate_sources(i: usize, n: usize, p: usize) -> ([(usize, f64); 2], usize) {
    let h = n / 2;
    if p == n || i < h {
        ([(i, 1.0), (0, 0.0)], 1)
    } else if i == h {
        ([(h, 1.0), (p - h, 1.0)], 2)
    } else {
        ([(p - (n - i), 1.0), (0, 0.0)], 1)
    }
}

/// Visits every combination of per-axis mapped indices, yielding the flat
/// index in the other grid and the product weight.
fn for_each_mapped(
    idx: [usize; 3],
    dim: usize,
    n_other: usize,
    map: impl Fn(usize) -> ([(usize, f64); 2], usize),
    mut visit: impl FnMut(usize, f64),
) {
    let mut maps = [([(0usize, 0.0f64); 2], 1usize); 3];
    for a in 0..dim {
        maps[a] = map(idx[a]);
    }
    let mut choice = [0usize; 3];
    loop {
        let mut flat = 0;
        let mut w = 1.0;
        for a in 0..dim {
            let (t, wt) = maps[a].0[choice[a]];
            flat = flat * n_other + t;
            w *= wt;
        }
        visit(flat, w);
        let mut a = dim;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            choice[a] += 1;
            if choice[a] < maps[a].1 {
                break;
            }
            choice[a] = 0;
        }
    }
}

fn pad_coeffs(src: &[Complex64], dim: usize, n: usize, p: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::new(0.0, 0.0); p.pow(dim as u32)];
    for (flat, &c) in src.iter().enumerate() {
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        let idx = unflatten(flat, dim, n);
        for_each_mapped(idx, dim, p, |i| pad_targets(i, n, p), |t, w| {
            dst[t] += c * w;
        });
    }
    dst
}

fn truncate_coeffs(src: &[Complex64], dim: usize, p: usize, n: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::new(0.0, 0.0); n.pow(dim as u32)];
    for (flat, out) in dst.iter_mut().enumerate() {
        let idx = unflatten(flat, dim, n);
        let mut acc = Complex64::new(0.0, 0.0);
        for_each_mapped(idx, dim, p, |i| truncate_sources(i, n, p), |s, w| {
            acc += src[s] * w;
        });
        *out = acc;
    }
    dst
}

impl SpectralField {
    pub fn zeros(dim: usize, n: usize) -> Result<Self> {
        check_shape(dim, n)?;
        Ok(Self {
            dim,
            n,
            coeffs: vec![Complex64::new(0.0, 0.0); n.pow(dim as u32)],
        })
    }

    pub fn constant(dim: usize, n: usize, value: f64) -> Result<Self> {
        let mut f = Self::zeros(dim, n)?;
        f.coeffs[0] = Complex64::new(value, 0.0);
        Ok(f)
    }

    /// Builds a field from FFT-ordered coefficients, projecting onto the
    /// Hermitian-symmetric (real) subspace.
    pub fn from_coeffs(dim: usize, n: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_shape(dim, n)?;
        let expected = n.pow(dim as u32);
        if coeffs.len() != expected {
            return Err(Error::SampleCount {
                expected,
                got: coeffs.len(),
            });
        }
        let mut f = Self { dim, n, coeffs };
        f.symmetrize();
        Ok(f)
    }

    /// Sum of cosine modes: each entry `(k, a)` adds `a·cos(2π k·x)`.
    pub fn from_cosines(dim: usize, n: usize, terms: &[(&[i64], f64)]) -> Result<Self> {
        let mut f = Self::zeros(dim, n)?;
        for (k, a) in terms {
            if k.iter().all(|&c| c == 0) {
                f.coeffs[0] += *a;
                continue;
            }
            let i = f.index_of(k).ok_or_else(|| {
                Error::InvalidParameter(format!("mode {k:?} not resolved on N = {n}"))
            })?;
            let minus: Vec<i64> = k.iter().map(|c| -c).collect();
            let j = f.index_of(&minus).expect("negated mode resolvable");
            f.coeffs[i] += 0.5 * a;
            f.coeffs[j] += 0.5 * a;
        }
        Ok(f)
    }

    /// Forward transform of `N^d` uniform samples (row-major, axis 0 slowest).
    pub fn to_fourier(samples: &[f64], dim: usize, n: usize) -> Result<Self> {
        check_shape(dim, n)?;
        let expected = n.pow(dim as u32);
        if samples.len() != expected {
            return Err(Error::SampleCount {
                expected,
                got: samples.len(),
            });
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft_nd(&mut buf, dim, n, false);
        let scale = 1.0 / expected as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        let mut f = Self {
            dim,
            n,
            coeffs: buf,
        };
        f.symmetrize();
        Ok(f)
    }

    /// Physical samples on the native `N^d` grid.
    pub fn from_fourier(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        fft_nd(&mut buf, self.dim, self.n, true);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Physical samples on a finer `p^d` grid (trigonometric interpolation).
    pub fn to_physical_padded(&self, p: usize) -> Vec<f64> {
        debug_assert!(p >= self.n);
        let mut buf = pad_coeffs(&self.coeffs, self.dim, self.n, p);
        fft_nd(&mut buf, self.dim, p, true);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Padded samples of two fields from a single complex transform
    /// (`self` in the real part, `other` in the imaginary part).
    pub fn to_physical_padded_pair(&self, other: &Self, p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.same_shape(other)?;
        let joined: Vec<Complex64> = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + Complex64::i() * b)
            .collect();
        let mut buf = pad_coeffs(&joined, self.dim, self.n, p);
        fft_nd(&mut buf, self.dim, p, true);
        Ok(buf.into_iter().map(|c| (c.re, c.im)).unzip())
    }

    /// Transforms `p^d` samples and keeps the modes resolved on an `n` grid.
    pub fn from_physical_truncated(samples: &[f64], dim: usize, p: usize, n: usize) -> Result<Self> {
        check_shape(dim, n)?;
        check_shape(dim, p)?;
        if p < n {
            return Err(Error::InvalidParameter(format!(
                "padded grid {p} smaller than target grid {n}"
            )));
        }
        let full = Self::to_fourier(samples, dim, p)?;
        Ok(Self {
            dim,
            n,
            coeffs: truncate_coeffs(&full.coeffs, dim, p, n),
        })
    }

    /// Zero-pads the spectrum onto a finer grid.
    pub fn prolong(&self, n_fine: usize) -> Result<Self> {
        check_shape(self.dim, n_fine)?;
        if n_fine < self.n {
            return Err(Error::InvalidParameter(format!(
                "cannot prolong N = {} onto N = {n_fine}",
                self.n
            )));
        }
        Ok(Self {
            dim: self.dim,
            n: n_fine,
            coeffs: pad_coeffs(&self.coeffs, self.dim, self.n, n_fine),
        })
    }

    /// Keeps only the modes resolved on a coarser grid.
    pub fn restrict(&self, n_coarse: usize) -> Result<Self> {
        check_shape(self.dim, n_coarse)?;
        if n_coarse > self.n {
            return Err(Error::InvalidParameter(format!(
                "cannot restrict N = {} onto N = {n_coarse}",
                self.n
            )));
        }
        Ok(Self {
            dim: self.dim,
            n: n_coarse,
            coeffs: truncate_coeffs(&self.coeffs, self.dim, self.n, n_coarse),
        })
    }

    /// Smooth random field: independent Gaussian modes with amplitude
    /// `amplitude · (1 + 4π²|k|²)^{-decay/2}`, Nyquist modes zero. Modes are
    /// keyed by wavevector, so the same `rng` gives consistent fields across
    /// grid sizes.
    pub fn random(dim: usize, n: usize, rng: &CounterRng, stream: u64, decay: f64, amplitude: f64) -> Result<Self> {
        let mut f = Self::zeros(dim, n)?;
        let mut cursor = rng.stream(stream);
        for flat in 0..f.coeffs.len() {
            if f.is_nyquist(flat) {
                continue;
            }
            let conj = f.conjugate_index(flat);
            if conj < flat {
                continue;
            }
            let k = f.wavevector(flat);
            let scale = amplitude * Sobolev(-decay / 2.0).weight(f.k_squared(flat));
            let (a, b) = cursor.gaussian_pair(crate::noise::mode_code(&k[..dim]));
            if conj == flat {
                f.coeffs[flat] = Complex64::new(a * scale, 0.0);
            } else {
                let c = Complex64::new(a, b) * (scale * std::f64::consts::FRAC_1_SQRT_2);
                f.coeffs[flat] = c;
                f.coeffs[conj] = c.conj();
            }
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Mutable coefficient access. Callers are responsible for keeping the
    /// Hermitian symmetry; [`SpectralField::symmetrize`] restores it.
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.dim, self.n)
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn wavevector(&self, flat: usize) -> [i64; 3] {
        let idx = unflatten(flat, self.dim, self.n);
        let mut k = [0i64; 3];
        for a in 0..self.dim {
            k[a] = wavenumber(idx[a], self.n);
        }
        k
    }

    pub fn k_squared(&self, flat: usize) -> f64 {
        let k = self.wavevector(flat);
        (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64
    }

    /// `|k|²` for every coefficient slot.
    pub fn k_squared_table(&self) -> Vec<f64> {
        (0..self.coeffs.len()).map(|i| self.k_squared(i)).collect()
    }

    pub fn is_nyquist(&self, flat: usize) -> bool {
        let idx = unflatten(flat, self.dim, self.n);
        idx[..self.dim].contains(&(self.n / 2))
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let h = (self.n / 2) as i64;
        let mut idx = [0usize; 3];
        for (a, &c) in k.iter().enumerate() {
            if c < -h || c > h {
                return None;
            }
            idx[a] = c.rem_euclid(self.n as i64) as usize;
        }
        Some(flatten(&idx[..self.dim], self.n))
    }

    pub fn coeff(&self, k: &[i64]) -> Complex64 {
        self.index_of(k)
            .map(|i| self.coeffs[i])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn conjugate_index(&self, flat: usize) -> usize {
        let idx = unflatten(flat, self.dim, self.n);
        let mut neg = [0usize; 3];
        for a in 0..self.dim {
            neg[a] = (self.n - idx[a]) % self.n;
        }
        flatten(&neg[..self.dim], self.n)
    }

    /// Projects onto real fields: `c_k <- (c_k + conj(c_{-k})) / 2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.coeffs.len() {
            let j = self.conjugate_index(i);
            if j < i {
                continue;
            }
            if j == i {
                self.coeffs[i].im = 0.0;
            } else {
                let avg = (self.coeffs[i] + self.coeffs[j].conj()) * 0.5;
                self.coeffs[i] = avg;
                self.coeffs[j] = avg.conj();
            }
        }
    }

    /// Largest `|c_k - conj(c_{-k})|`.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[i] - self.coeffs[self.conjugate_index(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn sobolev_norm(&self, s: Sobolev) -> f64 {
        self.sobolev_norm_sq(s).sqrt()
    }

    pub fn sobolev_norm_sq(&self, s: Sobolev) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| s.weight(self.k_squared(i)) * c.norm_sqr())
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.sobolev_norm(Sobolev::L2)
    }

    /// `‖∇u‖_{L²}`.
    pub fn gradient_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| FOUR_PI_SQ * self.k_squared(i) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `⟨u, v⟩_{L²}`. Panics on shape mismatch.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "inner product shape mismatch");
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    /// `⟨u, v⟩_{H^s}`.
    pub fn inner_sobolev(&self, other: &Self, s: Sobolev) -> f64 {
        assert_eq!(self.shape(), other.shape(), "inner product shape mismatch");
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (a, b))| s.weight(self.k_squared(i)) * (a.re * b.re + a.im * b.im))
            .sum()
    }

    /// Applies a Fourier multiplier given as a function of `|k|²`.
    pub fn apply_multiplier(&self, symbol: impl Fn(f64) -> f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * symbol(self.k_squared(i)))
            .collect();
        Self {
            dim: self.dim,
            n: self.n,
            coeffs,
        }
    }

    /// Field whose coefficients are `symbol(|k|²)`; an even real kernel.
    pub fn fill_symbol(&self, symbol: impl Fn(f64) -> f64) -> Self {
        let coeffs = (0..self.coeffs.len())
            .map(|i| Complex64::new(symbol(self.k_squared(i)), 0.0))
            .collect();
        Self {
            dim: self.dim,
            n: self.n,
            coeffs,
        }
    }

    pub fn laplacian(&self) -> Self {
        self.apply_multiplier(|k2| -FOUR_PI_SQ * k2)
    }

    /// `R_δ = (I - δΔ)^{-1}`.
    pub fn resolvent(&self, delta: f64) -> Result<Self> {
        if delta.is_nan() || delta < 0.0 {
            return Err(Error::NegativeParameter {
                name: "delta",
                value: delta,
            });
        }
        if delta == 0.0 {
            return Ok(self.clone());
        }
        Ok(self.apply_multiplier(|k2| 1.0 / (1.0 + delta * FOUR_PI_SQ * k2)))
    }

    /// Convolution `self * u`, coefficient-wise product.
    pub fn convolve(&self, u: &Self) -> Result<Self> {
        self.same_shape(u)?;
        let coeffs = self.coeffs.iter().zip(&u.coeffs).map(|(a, b)| a * b).collect();
        Ok(Self {
            dim: self.dim,
            n: self.n,
            coeffs,
        })
    }

    /// Evaluates `g` pointwise on the `3N/2` padded grid and truncates back,
    /// which removes aliasing from quadratic products.
    pub fn pointwise_apply(&self, g: impl Fn(f64) -> f64) -> Result<Self> {
        let p = padded_size(self.n);
        let mut samples = self.to_physical_padded(p);
        map_checked(&mut samples, self.dim, p, g)?;
        Self::from_physical_truncated(&samples, self.dim, p, self.n)
    }

    /// Pointwise map on the native grid without padding.
    pub fn pointwise_apply_native(&self, g: impl Fn(f64) -> f64) -> Result<Self> {
        let mut samples = self.from_fourier();
        map_checked(&mut samples, self.dim, self.n, g)?;
        Self::to_fourier(&samples, self.dim, self.n)
    }

    /// Dealiased pointwise product.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let p = padded_size(self.n);
        let a = self.to_physical_padded(p);
        let b = other.to_physical_padded(p);
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Self::from_physical_truncated(&prod, self.dim, p, self.n)
    }

    /// Maximum of `|u|` over the native grid.
    pub fn sup_norm(&self) -> f64 {
        self.from_fourier().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            dim: self.dim,
            n: self.n,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// `self += a·x`. Panics on shape mismatch.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert_eq!(self.shape(), x.shape(), "axpy shape mismatch");
        self.coeffs
            .iter_mut()
            .zip(&x.coeffs)
            .for_each(|(y, x)| *y += x * a);
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Grid index of a flat physical sample.
    pub fn grid_point(&self, flat: usize) -> Vec<usize> {
        unflatten(flat, self.dim, self.n)[..self.dim].to_vec()
    }

    /// Coordinates `x ∈ [0,1)^d` of the native grid, row-major.
    pub fn grid_coordinates(dim: usize, n: usize) -> Vec<[f64; 3]> {
        (0..n.pow(dim as u32))
            .map(|flat| {
                let idx = unflatten(flat, dim, n);
                let mut x = [0.0; 3];
                for a in 0..dim {
                    x[a] = idx[a] as f64 / n as f64;
                }
                x
            })
            .collect()
    }

    /// Samples a function of `x ∈ [0,1)^d` and transforms it.
    pub fn from_fn(dim: usize, n: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        check_shape(dim, n)?;
        let samples: Vec<f64> = Self::grid_coordinates(dim, n)
            .iter()
            .map(|x| f(&x[..dim]))
            .collect();
        Self::to_fourier(&samples, dim, n)
    }

    fn half_spectrum_indices(&self) -> Vec<usize> {
        let h = (self.n / 2) as i64;
        let lead: Vec<i64> = (-h + 1..=h).collect();
        let last: Vec<i64> = (0..=h).collect();
        let mut out = Vec::new();
        let mut k = vec![0i64; self.dim];
        fn rec(
            f: &SpectralField,
            axis: usize,
            k: &mut Vec<i64>,
            lead: &[i64],
            last: &[i64],
            out: &mut Vec<usize>,
        ) {
            let range = if axis + 1 == f.dim { last } else { lead };
            for &c in range {
                k[axis] = c;
                if axis + 1 == f.dim {
                    out.push(f.index_of(k).expect("half-spectrum mode in range"));
                } else {
                    rec(f, axis + 1, k, lead, last, out);
                }
            }
        }
        rec(self, 0, &mut k, &lead, &last, &mut out);
        out
    }

    /// Binary checkpoint: `"MACF"`, version `u16`, `d` as `u8`, `N` as `u32`,
    /// then `(re, im)` little-endian `f64` pairs over the half-spectrum
    /// `k_d ∈ [0, N/2]`, `k_j ∈ (-N/2, N/2]` for `j < d`, in lexicographic
    /// order of the signed wavevector.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&[self.dim as u8])?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        for i in self.half_spectrum_indices() {
            w.write_all(&self.coeffs[i].re.to_le_bytes())?;
            w.write_all(&self.coeffs[i].im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let dim = b1[0] as usize;
        let n = u32::from_le_bytes(b4) as usize;
        let mut f = Self::zeros(dim, n)?;
        let stored = f.half_spectrum_indices();
        let mut present = vec![false; f.coeffs.len()];
        let mut b8 = [0u8; 8];
        for i in stored {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            f.coeffs[i] = Complex64::new(re, im);
            present[i] = true;
        }
        for i in 0..f.coeffs.len() {
            if !present[i] {
                f.coeffs[i] = f.coeffs[f.conjugate_index(i)].conj();
            }
        }
        Ok(f)
    }
}

fn map_checked(samples: &mut [f64], dim: usize, n: usize, g: impl Fn(f64) -> f64) -> Result<()> {
    for (flat, x) in samples.iter_mut().enumerate() {
        let y = g(*x);
        if !y.is_finite() {
            return Err(Error::NonFinite {
                index: unflatten(flat, dim, n)[..dim].to_vec(),
                value: y,
            });
        }
        *x = y;
    }
    Ok(())
}

impl Add for &SpectralField {
    type Output = SpectralField;

    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;

    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;

    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random(dim: usize, n: usize, seed: u64) -> SpectralField {
        SpectralField::random(dim, n, &CounterRng::new(seed, 0), 0, 1.0, 1.0).unwrap()
    }

    /// Trapezoidal rule on the periodic grid (exact for band-limited
    /// trigonometric polynomials of low enough degree).
    fn quadrature(samples: &[f64]) -> f64 {
        samples.iter().sum::<f64>() / samples.len() as f64
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(SpectralField::to_fourier(&[0.0; 5], 1, 5), Err(Error::InvalidGridSize(5))));
        assert!(matches!(SpectralField::zeros(1, 0), Err(Error::InvalidGridSize(0))));
        assert!(matches!(SpectralField::zeros(4, 8), Err(Error::InvalidDimension(4))));
        assert!(matches!(
            SpectralField::to_fourier(&[0.0; 7], 1, 8),
            Err(Error::SampleCount { expected: 8, got: 7 })
        ));
    }

    #[test]
    fn constant_has_only_mean_mode() {
        let f = SpectralField::to_fourier(&vec![2.5; 64], 2, 8).unwrap();
        assert!((f.coeffs()[0].re - 2.5).abs() < 1e-14);
        assert!(f.coeffs()[1..].iter().all(|c| c.norm() < 1e-14));
    }

    #[test]
    fn cosine_is_a_single_pair() {
        for dim in 1..=3 {
            let f = SpectralField::from_fn(dim, 8, |x| (2.0 * PI * x[0]).cos()).unwrap();
            let mut plus = vec![0i64; dim];
            plus[0] = 1;
            let minus: Vec<i64> = plus.iter().map(|c| -c).collect();
            for (i, c) in f.coeffs().iter().enumerate() {
                let k = f.wavevector(i);
                let expect = if k[..dim] == plus[..] || k[..dim] == minus[..] { 0.5 } else { 0.0 };
                assert!((c - Complex64::new(expect, 0.0)).norm() < 1e-14, "k={k:?} c={c}");
            }
        }
    }

    #[test]
    fn sobolev_norm_closed_forms() {
        let c = SpectralField::constant(2, 8, -3.0).unwrap();
        for s in [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
            assert!((c.sobolev_norm(Sobolev(s)) - 3.0).abs() < 1e-14);
        }
        let f = SpectralField::from_cosines(1, 16, &[(&[1], 1.0)]).unwrap();
        let expect = ((1.0 + FOUR_PI_SQ) / 2.0).sqrt();
        assert!((f.sobolev_norm(Sobolev::H1) - expect).abs() < 1e-12);
    }

    #[test]
    fn laplacian_eigenfunction_and_constants() {
        let c = SpectralField::constant(3, 4, 1.7).unwrap();
        assert!(c.laplacian().l2_norm() == 0.0);
        let f = SpectralField::from_cosines(1, 16, &[(&[1], 1.0)]).unwrap();
        let lap = f.laplacian();
        let expect = f.scaled(-FOUR_PI_SQ);
        assert!((&lap - &expect).l2_norm() < 1e-12);
    }

    #[test]
    fn resolvent_edge_cases() {
        let f = random(2, 16, 3);
        assert_eq!(f.resolvent(0.0).unwrap(), f);
        let c = SpectralField::constant(2, 16, 0.3).unwrap();
        assert_eq!(c.resolvent(0.7).unwrap(), c);
        assert!(matches!(f.resolvent(-1e-3), Err(Error::NegativeParameter { .. })));
    }

    #[test]
    fn convolution_edge_cases() {
        let u = random(2, 16, 5);
        let ones = SpectralField::from_coeffs(2, 16, vec![Complex64::new(1.0, 0.0); 256]).unwrap();
        assert!((&ones.convolve(&u).unwrap() - &u).l2_norm() < 1e-15);
        let c = SpectralField::constant(2, 16, 2.0).unwrap();
        let out = c.convolve(&u).unwrap();
        assert!((&out - &SpectralField::constant(2, 16, 2.0 * u.mean()).unwrap()).l2_norm() < 1e-15);
        assert!(matches!(
            u.convolve(&SpectralField::zeros(2, 8).unwrap()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn young_inequality_on_random_pairs() {
        for seed in 0..20 {
            let j = random(1, 64, 100 + seed);
            let u = random(1, 64, 200 + seed);
            let j_l1 = quadrature(&j.from_fourier().iter().map(|x| x.abs()).collect::<Vec<_>>());
            let lhs = j.convolve(&u).unwrap().l2_norm();
            // the discrete L¹ norm is a quadrature of the continuum one, so
            // allow a little room
            assert!(lhs <= j_l1 * u.l2_norm() * (1.0 + 1e-2), "seed {seed}");
        }
    }

    #[test]
    fn pointwise_identity_and_square() {
        let u = random(2, 16, 9);
        let same = u.pointwise_apply(|x| x).unwrap();
        assert!((&same - &u).sobolev_norm(Sobolev::L2) < 1e-12);

        let f = SpectralField::from_cosines(1, 16, &[(&[1], 1.0)]).unwrap();
        let sq = f.pointwise_apply(|x| x * x).unwrap();
        let expect = SpectralField::from_cosines(1, 16, &[(&[0], 0.5), (&[2], 0.5)]).unwrap();
        assert!((&sq - &expect).l2_norm() < 1e-14);
    }

    #[test]
    fn pointwise_cubic_matches_direct_evaluation() {
        // band-limited to N/8 so the cubic stays resolved on the native grid
        let n = 64;
        let mut u = SpectralField::random(1, n, &CounterRng::new(4, 0), 0, 0.0, 1.0).unwrap();
        let ks = u.k_squared_table();
        for (c, k2) in u.coeffs_mut().iter_mut().zip(ks) {
            if k2 > 64.0 {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        let wp = |x: f64| x * x * x - x;
        let out = u.pointwise_apply(wp).unwrap().from_fourier();
        for (x, y) in u.from_fourier().iter().zip(out) {
            assert!((wp(*x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pointwise_reports_location_of_non_finite_values() {
        let f = SpectralField::from_cosines(1, 8, &[(&[1], 1.0)]).unwrap();
        match f.pointwise_apply_native(|x| if x > 0.99 { f64::NAN } else { x }) {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, vec![0]),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn prolong_restrict_roundtrip() {
        let u = random(3, 8, 1);
        let fine = u.prolong(16).unwrap();
        assert!((fine.l2_norm() - u.l2_norm()).abs() < 1e-14);
        assert_eq!(fine.restrict(8).unwrap(), u);
        assert!(u.restrict(16).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_and_header() {
        for dim in 1..=3 {
            let u = SpectralField::random(dim, 8, &CounterRng::new(2, 0), 0, 0.5, 1.0).unwrap();
            let mut bytes = Vec::new();
            u.write_checkpoint(&mut bytes).unwrap();
            assert_eq!(&bytes[..4], b"MACF");
            assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
            assert_eq!(bytes[6] as usize, dim);
            assert_eq!(u32::from_le_bytes(bytes[7..11].try_into().unwrap()), 8);
            let half = 8usize.pow(dim as u32 - 1) * 5;
            assert_eq!(bytes.len(), 11 + 16 * half);
            let back = SpectralField::read_checkpoint(bytes.as_slice()).unwrap();
            assert_eq!(back, u);
        }
        assert!(SpectralField::read_checkpoint(&b"NOPE\x01\x00\x01\x08\x00\x00\x00"[..]).is_err());
    }

    #[test]
    fn checkpoint_order_is_signed_lexicographic() {
        let mut u = SpectralField::zeros(2, 4).unwrap();
        // first stored entry is k = (-1, 0)
        let i = u.index_of(&[-1, 0]).unwrap();
        let j = u.index_of(&[1, 0]).unwrap();
        u.coeffs_mut()[i] = Complex64::new(0.25, 0.5);
        u.coeffs_mut()[j] = Complex64::new(0.25, -0.5);
        let mut bytes = Vec::new();
        u.write_checkpoint(&mut bytes).unwrap();
        assert_eq!(f64::from_le_bytes(bytes[11..19].try_into().unwrap()), 0.25);
        assert_eq!(f64::from_le_bytes(bytes[19..27].try_into().unwrap()), 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn fourier_roundtrip(seed in 0u64..1000, dim in 1usize..=3, log_n in 1u32..=4) {
            let n = 2usize.pow(log_n);
            let samples: Vec<f64> = {
                let rng = CounterRng::new(seed, 9);
                let mut cur = rng.stream(0);
                (0..n.pow(dim as u32) as u64).map(|c| cur.gaussian_pair(c).0).collect()
            };
            let f = SpectralField::to_fourier(&samples, dim, n).unwrap();
            prop_assert!(f.hermitian_defect() == 0.0);
            let back = f.from_fourier();
            let err = samples.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-12);
        }

        #[test]
        fn parseval(seed in 0u64..1000, dim in 1usize..=3) {
            let f = random(dim, 8, seed);
            let phys: Vec<f64> = f.from_fourier().iter().map(|x| x * x).collect();
            let q = quadrature(&phys);
            let s = f.sobolev_norm_sq(Sobolev::L2);
            prop_assert!((s - q).abs() <= 1e-10 * s.max(1.0));
        }

        #[test]
        fn laplacian_negative_semidefinite(seed in 0u64..1000, dim in 1usize..=3) {
            let f = random(dim, 8, seed);
            prop_assert!(f.laplacian().inner(&f) <= 0.0);
        }

        #[test]
        fn resolvent_contracts_and_commutes(seed in 0u64..1000, delta in 1e-6f64..1.0, s in -1.0f64..2.0) {
            let f = random(2, 8, seed);
            let r = f.resolvent(delta).unwrap();
            prop_assert!(r.sobolev_norm(Sobolev(s)) <= f.sobolev_norm(Sobolev(s)));
            let a = f.laplacian().resolvent(delta).unwrap();
            let b = r.laplacian();
            prop_assert!((&a - &b).l2_norm() <= 1e-10 * a.l2_norm().max(1.0));
            let lhs = (&r - &f).sobolev_norm_sq(Sobolev::L2);
            prop_assert!(lhs <= delta * f.sobolev_norm_sq(Sobolev::H1) * (1.0 + 1e-10));
        }
    }
}
