//! Truncated `L²`-cylindrical Wiener process and the noise coefficient
//! `B(v)ψ = √(2σ(v)) · (j * ψ)`.
//!
//! Increments are drawn per `(seed, replicate, step, wavevector)` from a
//! counter-based generator. Because the key is the wavevector rather than a
//! grid index, a coarse grid sees exactly the subset of a fine grid's modes
//! it resolves, and a coarse time step sees the sum of the fine steps it
//! covers.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{padded_size, SpectralField};
use crate::model::{Mobility, NoiseKernel};
use crate::rng::CounterRng;

const MODE_OFFSET: i64 = 1 << 15;

/// Packs a wavevector into a counter. Consecutive `k_d` give consecutive
/// codes so a stream cursor walks its buffer linearly.
pub fn mode_code(k: &[i64]) -> u64 {
    k.iter()
        .fold(0u64, |acc, &c| (acc << 16) | ((c + MODE_OFFSET) as u64 & 0xffff))
}

/// Modes that carry noise on a given grid: one representative per `±k` pair
/// (first nonzero component positive), Nyquist modes excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTable {
    dim: usize,
    n: usize,
    /// `(flat, conjugate flat, code)`
    modes: Vec<(usize, usize, u64)>,
}

impl ModeTable {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        let f = SpectralField::zeros(dim, n)?;
        let mut modes = Vec::new();
        for flat in 0..f.len() {
            if f.is_nyquist(flat) {
                continue;
            }
            let conj = f.conjugate_index(flat);
            if conj < flat {
                continue;
            }
            let k = f.wavevector(flat);
            modes.push((flat, conj, mode_code(&k[..dim])));
        }
        Ok(Self { dim, n, modes })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.dim, self.n)
    }

    /// Number of independent real Gaussian directions.
    pub fn real_dimension(&self) -> usize {
        self.modes
            .iter()
            .map(|&(f, c, _)| if f == c { 1 } else { 2 })
            .sum()
    }
}

/// Steps `[target, target + len)` replay the draws of `[source, source + len)`.
/// Only used to build deliberately broken noise for negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepReuse {
    pub source: usize,
    pub target: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    rng: CounterRng,
    inner_dt: f64,
    horizon: usize,
    reuse: Option<StepReuse>,
}

impl NoisePath {
    pub fn new(seed: u64, replicate: u64, inner_dt: f64, horizon: usize) -> Result<Self> {
        if !(inner_dt > 0.0) || !inner_dt.is_finite() {
            return Err(Error::InvalidParameter(format!("inner_dt {inner_dt} must be positive")));
        }
        Ok(Self {
            rng: CounterRng::new(seed, replicate),
            inner_dt,
            horizon,
            reuse: None,
        })
    }

    pub fn with_reuse(mut self, reuse: StepReuse) -> Self {
        self.reuse = Some(reuse);
        self
    }

    pub fn seed(&self) -> u64 {
        self.rng.seed()
    }

    pub fn replicate(&self) -> u64 {
        self.rng.replicate()
    }

    pub fn inner_dt(&self) -> f64 {
        self.inner_dt
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn key_step(&self, step: usize) -> u64 {
        match self.reuse {
            Some(r) if step >= r.target && step < r.target + r.len => (r.source + step - r.target) as u64,
            _ => step as u64,
        }
    }

    /// Adds the increment of one finest step into `out`.
    fn accumulate_step(&self, step: usize, table: &ModeTable, out: &mut [Complex64]) {
        let mut cursor = self.rng.stream(self.key_step(step));
        let full = self.inner_dt.sqrt();
        let half = (0.5 * self.inner_dt).sqrt();
        for &(flat, conj, code) in &table.modes {
            let (a, b) = cursor.gaussian_pair(code);
            if flat == conj {
                out[flat].re += full * a;
            } else {
                let z = Complex64::new(half * a, half * b);
                out[flat] += z;
                out[conj] += z.conj();
            }
        }
    }

    /// `α_{end·dt} - α_{start·dt}` projected on the grid's modes, summed
    /// sequentially over the finest steps.
    pub fn wiener_increment(&self, table: &ModeTable, start: usize, end: usize) -> Result<SpectralField> {
        if start > end || end > self.horizon {
            return Err(Error::StepRange {
                start,
                end,
                horizon: self.horizon,
            });
        }
        let (dim, n) = table.shape();
        let mut out = SpectralField::zeros(dim, n)?;
        let coeffs = out.coeffs_mut();
        for step in start..end {
            self.accumulate_step(step, table, coeffs);
        }
        Ok(out)
    }
}

fn sqrt_two_sigma_samples(v: &SpectralField, m: &Mobility, p: usize) -> Result<Vec<f64>> {
    v.to_physical_padded(p)
        .into_iter()
        .map(|x| {
            let s = m.value(x);
            if s > 0.0 && s.is_finite() {
                Ok((2.0 * s).sqrt())
            } else {
                Err(Error::InvalidParameter(format!("mobility {s} at u = {x} is not positive")))
            }
        })
        .collect()
}

/// `B(v)ψ = √(2σ(v)) · (j * ψ)`, the product evaluated on the padded grid.
pub fn apply_b(v: &SpectralField, psi: &SpectralField, m: &Mobility, j: &NoiseKernel) -> Result<SpectralField> {
    v.same_shape(psi)?;
    let (dim, n) = v.shape();
    let p = padded_size(n);
    let jpsi = j.to_field(dim, n)?.convolve(psi)?;
    let s = sqrt_two_sigma_samples(v, m, p)?;
    let prod: Vec<f64> = jpsi
        .to_physical_padded(p)
        .iter()
        .zip(&s)
        .map(|(a, b)| a * b)
        .collect();
    SpectralField::from_physical_truncated(&prod, dim, p, n)
}

/// `B(v)* φ = j * (√(2σ(v)) φ)` (the kernel is real and even).
pub fn apply_b_adjoint(v: &SpectralField, phi: &SpectralField, m: &Mobility, j: &NoiseKernel) -> Result<SpectralField> {
    v.same_shape(phi)?;
    let (dim, n) = v.shape();
    let p = padded_size(n);
    let s = sqrt_two_sigma_samples(v, m, p)?;
    let prod: Vec<f64> = phi
        .to_physical_padded(p)
        .iter()
        .zip(&s)
        .map(|(a, b)| a * b)
        .collect();
    let weighted = SpectralField::from_physical_truncated(&prod, dim, p, n)?;
    j.to_field(dim, n)?.convolve(&weighted)
}

/// `Tr(B(v)B(v)*) = Σ_k ‖B(v)e_k‖²` over the grid's modes. Since `|e_k| ≡ 1`
/// each term equals `ĵ(k)² ∫ 2σ(v)`; the integral is a padded-grid quadrature.
pub fn hs_trace(v: &SpectralField, m: &Mobility, j: &NoiseKernel) -> Result<f64> {
    let (dim, n) = v.shape();
    let p = padded_size(n);
    let samples = v.to_physical_padded(p);
    let mean_sigma = samples.iter().map(|&x| m.value(x)).sum::<f64>() / samples.len() as f64;
    let jf = j.to_field(dim, n)?;
    Ok(2.0 * mean_sigma * jf.sobolev_norm_sq(crate::field::Sobolev::L2))
}

/// Quadratic-variation rate of `M^φ`: `2∫[j * (√σ(v) φ)]² = ‖B(v)*φ‖²_{L²}`.
pub fn martingale_increment_variance(v: &SpectralField, phi: &SpectralField, m: &Mobility, j: &NoiseKernel) -> Result<f64> {
    if m.is_constant() {
        v.same_shape(phi)?;
        let c = 2.0 * m.value(0.0);
        let (dim, n) = phi.shape();
        let jf = j.to_field(dim, n)?;
        return Ok(c * jf.convolve(phi)?.sobolev_norm_sq(crate::field::Sobolev::L2));
    }
    Ok(apply_b_adjoint(v, phi, m, j)?.sobolev_norm_sq(crate::field::Sobolev::L2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Sobolev;

    fn path(seed: u64) -> NoisePath {
        NoisePath::new(seed, 0, 1e-3, 64).unwrap()
    }

    #[test]
    fn empty_range_is_zero() {
        let t = ModeTable::new(1, 16).unwrap();
        let z = path(1).wiener_increment(&t, 5, 5).unwrap();
        assert_eq!(z.l2_norm(), 0.0);
    }

    #[test]
    fn range_errors() {
        let t = ModeTable::new(1, 16).unwrap();
        assert!(matches!(path(1).wiener_increment(&t, 0, 65), Err(Error::StepRange { .. })));
        assert!(matches!(path(1).wiener_increment(&t, 3, 2), Err(Error::StepRange { .. })));
    }

    #[test]
    fn additivity_is_coefficient_exact() {
        let t = ModeTable::new(2, 8).unwrap();
        let p = path(3);
        let mut sum = SpectralField::zeros(2, 8).unwrap();
        for s in 0..16 {
            sum.axpy(1.0, &p.wiener_increment(&t, s, s + 1).unwrap());
        }
        assert_eq!(sum, p.wiener_increment(&t, 0, 16).unwrap());
        let pair = &p.wiener_increment(&t, 4, 5).unwrap() + &p.wiener_increment(&t, 5, 6).unwrap();
        assert_eq!(pair, p.wiener_increment(&t, 4, 6).unwrap());
    }

    #[test]
    fn coarse_grid_sees_subset_of_fine_modes() {
        let p = path(5);
        let coarse = p.wiener_increment(&ModeTable::new(2, 8).unwrap(), 0, 3).unwrap();
        let fine = p.wiener_increment(&ModeTable::new(2, 16).unwrap(), 0, 3).unwrap();
        for flat in 0..coarse.len() {
            if coarse.is_nyquist(flat) {
                assert_eq!(coarse.coeffs()[flat], Complex64::new(0.0, 0.0));
                continue;
            }
            let k = coarse.wavevector(flat);
            assert_eq!(coarse.coeffs()[flat], fine.coeff(&k[..2]));
        }
    }

    #[test]
    fn increments_are_real_fields() {
        let t = ModeTable::new(3, 8).unwrap();
        let z = path(2).wiener_increment(&t, 0, 4).unwrap();
        assert_eq!(z.hermitian_defect(), 0.0);
    }

    #[test]
    fn reuse_replays_source_steps() {
        let t = ModeTable::new(1, 16).unwrap();
        let p = path(9).with_reuse(StepReuse {
            source: 0,
            target: 10,
            len: 4,
        });
        assert_eq!(p.wiener_increment(&t, 0, 4).unwrap(), p.wiener_increment(&t, 10, 14).unwrap());
        assert_ne!(p.wiener_increment(&t, 0, 4).unwrap(), p.wiener_increment(&t, 14, 18).unwrap());
    }

    #[test]
    fn b_collapses_to_identity() {
        let v = SpectralField::random(1, 32, &CounterRng::new(1, 0), 0, 1.0, 1.0).unwrap();
        let psi = SpectralField::random(1, 32, &CounterRng::new(2, 0), 0, 2.0, 1.0).unwrap();
        let half = Mobility::constant(0.5).unwrap();
        let flat = NoiseKernel::new(1.0, 0.0);
        let out = apply_b(&v, &psi, &half, &flat).unwrap();
        assert!((&out - &psi).l2_norm() < 1e-13);
        let zero = SpectralField::zeros(1, 32).unwrap();
        assert_eq!(apply_b(&v, &zero, &half, &flat).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn hs_trace_closed_forms() {
        let v = SpectralField::random(2, 16, &CounterRng::new(4, 0), 0, 1.0, 1.0).unwrap();
        let c = Mobility::constant(1.7).unwrap();
        let j = NoiseKernel::default();
        let mut oracle = 0.0;
        let jf = j.to_field(2, 16).unwrap();
        for k2 in jf.k_squared_table() {
            oracle += j.spectrum(k2).powi(2);
        }
        oracle *= 2.0 * 1.7;
        let got = hs_trace(&v, &c, &j).unwrap();
        assert!((got - oracle).abs() <= 1e-10 * oracle);
        assert_eq!(hs_trace(&v, &c, &NoiseKernel::zero()).unwrap(), 0.0);
        let doubled = NoiseKernel::new(2.0, 1.5);
        assert!((hs_trace(&v, &c, &doubled).unwrap() - 4.0 * got).abs() <= 1e-12 * got);
    }

    #[test]
    fn quadratic_variation_rate_closed_form() {
        let v = SpectralField::zeros(1, 16).unwrap();
        let phi = SpectralField::from_cosines(1, 16, &[(&[1], 1.0)]).unwrap();
        let half = Mobility::constant(0.5).unwrap();
        let flat = NoiseKernel::new(1.0, 0.0);
        let q = martingale_increment_variance(&v, &phi, &half, &flat).unwrap();
        assert!((q - 0.5).abs() < 1e-14);
        let zero = SpectralField::zeros(1, 16).unwrap();
        assert_eq!(martingale_increment_variance(&v, &zero, &half, &flat).unwrap(), 0.0);
    }

    #[test]
    fn b_bound_by_young() {
        let (_, m, j) = crate::model::default_model();
        for seed in 0..10 {
            let v = SpectralField::random(1, 32, &CounterRng::new(seed, 1), 0, 1.0, 2.0).unwrap();
            let psi = SpectralField::random(1, 32, &CounterRng::new(seed, 2), 0, 0.0, 1.0).unwrap();
            let jf = j.to_field(1, 32).unwrap();
            let j_l1 = jf.from_fourier().iter().map(|x| x.abs()).sum::<f64>() / 32.0;
            let lhs = apply_b(&v, &psi, &m, &j).unwrap().sobolev_norm(Sobolev::L2);
            let rhs = (2.0 * m.sup_sigma()).sqrt() * j_l1 * psi.l2_norm();
            assert!(lhs <= rhs * 1.01, "{lhs} > {rhs}");
        }
    }
}
