//! Numerical checks of two inequalities used by the uniqueness argument:
//!
//! * `max{(a-b)², (h(a)-h(b))²} ≤ C (h(a)-h(b))(a-b)` with
//!   `C = max{sup σ, 1/inf σ}`;
//! * `‖fg‖_{H⁻¹} ≤ C ‖f‖_{H¹} ‖g‖_{H^{-1/2}}` on `T^d`, `d ≤ 3`.

use crate::error::{Error, Result};
use crate::field::{Sobolev, SpectralField, FOUR_PI_SQ};
use crate::model::Mobility;
use crate::rng::CounterRng;

/// `max{(a-b)², (h(a)-h(b))²} - C (h(a)-h(b))(a-b)`; nonpositive when the
/// inequality holds.
pub fn abh_excess(m: &Mobility, a: f64, b: f64) -> Result<f64> {
    let c = m.abh_constant();
    let (ha, hb) = (m.h(a)?, m.h(b)?);
    let (dx, dh) = (a - b, ha - hb);
    Ok((dx * dx).max(dh * dh) - c * dh * dx)
}

/// `‖fg‖_{H⁻¹} / (‖f‖_{H¹} ‖g‖_{H^{-1/2}})` with the product formed exactly
/// on the doubled grid.
pub fn product_ratio(f: &SpectralField, g: &SpectralField) -> Result<f64> {
    f.same_shape(g)?;
    let (dim, n) = f.shape();
    let q = 2 * n;
    let (fs, gs) = f.to_physical_padded_pair(g, q)?;
    let prod: Vec<f64> = fs.iter().zip(&gs).map(|(a, b)| a * b).collect();
    let fg = SpectralField::to_fourier(&prod, dim, q)?;
    let den = f.sobolev_norm(Sobolev::H1) * g.sobolev_norm(Sobolev(-0.5));
    if den == 0.0 {
        return Err(Error::InvalidParameter("product ratio of a zero field".into()));
    }
    Ok(fg.sobolev_norm(Sobolev::H_MINUS_1) / den)
}

/// Tensor product `f(x) = Π_i f_i(x_i)` of one-dimensional fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableField {
    factors: Vec<SpectralField>,
}

/// Nodes of `∫_0^∞ φ(t) dt` after `t = e^s`, trapezoid in `s`.
const LOG_NODES: (f64, f64, f64) = (-70.0, 5.0, 0.1);

impl SeparableField {
    pub fn new(factors: Vec<SpectralField>) -> Result<Self> {
        if factors.is_empty() || factors.len() > 3 {
            return Err(Error::InvalidDimension(factors.len()));
        }
        let n = factors[0].grid_size();
        if factors.iter().any(|f| f.dim() != 1 || f.grid_size() != n) {
            return Err(Error::Incompatible("separable factors must be one-dimensional on one grid".into()));
        }
        Ok(Self { factors })
    }

    /// Wavevector-keyed random factors, consistent across grid sizes.
    pub fn random(dim: usize, n: usize, rng: &CounterRng, stream: u64, decay: f64) -> Result<Self> {
        let factors = (0..dim as u64)
            .map(|axis| SpectralField::random(1, n, rng, stream * 8 + axis, decay, 1.0))
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    /// Full field on the `N^d` grid.
    pub fn to_field(&self) -> Result<SpectralField> {
        let n = self.factors[0].grid_size();
        let dim = self.dim();
        let samples: Vec<Vec<f64>> = self.factors.iter().map(|f| f.from_fourier()).collect();
        let mut out = vec![1.0; n.pow(dim as u32)];
        for (flat, x) in out.iter_mut().enumerate() {
            let mut rest = flat;
            for axis in (0..dim).rev() {
                *x *= samples[axis][rest % n];
                rest /= n;
            }
        }
        SpectralField::to_fourier(&out, dim, n)
    }

    /// Per-axis spectral mass `A_k = |ĉ_k|² + |ĉ_{-k}|²` indexed by `k ≥ 0`.
    fn spectra(&self) -> Vec<Vec<f64>> {
        self.factors
            .iter()
            .map(|f| {
                let n = f.grid_size();
                let mut mass = vec![0.0; n / 2 + 1];
                for (i, c) in f.coeffs().iter().enumerate() {
                    mass[f.wavevector(i)[0].unsigned_abs() as usize] += c.norm_sqr();
                }
                mass
            })
            .collect()
    }

    /// Factor-wise product, exact on the doubled one-dimensional grid.
    fn product(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Incompatible("separable fields of different dimension".into()));
        }
        let factors = self
            .factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| {
                let q = 2 * a.grid_size();
                let (x, y) = a.to_physical_padded_pair(b, q)?;
                let prod: Vec<f64> = x.iter().zip(&y).map(|(p, r)| p * r).collect();
                SpectralField::to_fourier(&prod, 1, q)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { factors })
    }

    /// `‖f‖²_{H^s}` for `s ∈ {1} ∪ (-∞, 0)`: exact for `s = 1`, otherwise
    /// through `(1+λ)^s = Γ(-s)^{-1} ∫ t^{-s-1} e^{-t(1+λ)} dt`, which
    /// factorizes over the axes.
    pub fn sobolev_norm_sq(&self, s: Sobolev) -> Result<f64> {
        let spectra = self.spectra();
        let mass: Vec<f64> = spectra.iter().map(|sp| sp.iter().sum()).collect();
        if s.0 == 1.0 {
            let mut total = mass.iter().product::<f64>();
            for axis in 0..spectra.len() {
                let grad: f64 = spectra[axis]
                    .iter()
                    .enumerate()
                    .map(|(k, a)| FOUR_PI_SQ * (k * k) as f64 * a)
                    .sum();
                let others: f64 = (0..spectra.len()).filter(|&j| j != axis).map(|j| mass[j]).product();
                total += grad * others;
            }
            return Ok(total);
        }
        if s.0 == 0.0 {
            return Ok(mass.iter().product());
        }
        if s.0 > 0.0 {
            return Err(Error::InvalidParameter(format!("order {} not supported", s.0)));
        }
        let a = -s.0;
        let (lo, hi, h) = LOG_NODES;
        let steps = ((hi - lo) / h).round() as usize;
        let mut acc = 0.0;
        for i in 0..=steps {
            let sv = lo + h * i as f64;
            let t = sv.exp();
            let mut prod = (a * sv - t).exp();
            for sp in &spectra {
                prod *= heat_sum(sp, t);
            }
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            acc += w * prod;
        }
        Ok(acc * h / gamma(a))
    }
}

/// `Σ_k A_k e^{-4π² t k²}`, with `q^{k²}` advanced by `q^{2k+1}`.
fn heat_sum(mass: &[f64], t: f64) -> f64 {
    let q = (-FOUR_PI_SQ * t).exp();
    let q2 = q * q;
    let (mut term, mut step) = (1.0, q);
    let mut sum = 0.0;
    for a in mass {
        if term < 1e-300 {
            break;
        }
        sum += a * term;
        term *= step;
        step *= q2;
    }
    sum
}

/// `Γ(x)` for `x > 0` by the Lanczos approximation (g = 7, n = 9).
fn gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// [`product_ratio`] for separable pairs without forming `d`-dimensional grids.
pub fn separable_product_ratio(f: &SeparableField, g: &SeparableField) -> Result<f64> {
    let fg = f.product(g)?;
    let num = fg.sobolev_norm_sq(Sobolev::H_MINUS_1)?.sqrt();
    let den = (f.sobolev_norm_sq(Sobolev::H1)? * g.sobolev_norm_sq(Sobolev(-0.5))?).sqrt();
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_model;

    #[test]
    fn gamma_values() {
        assert!((gamma(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        assert!((gamma(1.0) - 1.0).abs() < 1e-13);
        assert!((gamma(5.0) - 24.0).abs() < 1e-11);
    }

    #[test]
    fn abh_on_grid_of_pairs() {
        let (_, m, _) = default_model();
        for i in -20..=20 {
            for j in -20..=20 {
                let e = abh_excess(&m, i as f64 * 0.37, j as f64 * 0.41).unwrap();
                assert!(e <= 1e-12, "{i} {j} {e}");
            }
        }
    }

    #[test]
    fn product_ratio_of_constants() {
        // f ≡ 1, g ≡ c: both sides equal |c|
        let f = SpectralField::constant(2, 8, 1.0).unwrap();
        let g = SpectralField::constant(2, 8, -3.0).unwrap();
        assert!((product_ratio(&f, &g).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn separable_norms_match_direct_sums() {
        let rng = CounterRng::new(3, 0);
        let f = SeparableField::random(3, 8, &rng, 0, 2.0).unwrap();
        let full = f.to_field().unwrap();
        for s in [1.0, 0.0, -0.5, -1.0] {
            let direct = full.sobolev_norm_sq(Sobolev(s));
            let sep = f.sobolev_norm_sq(Sobolev(s)).unwrap();
            assert!((direct - sep).abs() <= 1e-11 * direct, "s={s}: {direct} vs {sep}");
        }
    }

    #[test]
    fn separable_ratio_matches_grid_ratio() {
        let rng = CounterRng::new(4, 0);
        for dim in 1..=3 {
            let f = SeparableField::random(dim, 8, &rng, 0, 3.0).unwrap();
            let g = SeparableField::random(dim, 8, &rng, 1, 1.0).unwrap();
            let a = separable_product_ratio(&f, &g).unwrap();
            let b = product_ratio(&f.to_field().unwrap(), &g.to_field().unwrap()).unwrap();
            assert!((a - b).abs() <= 1e-10 * b, "d={dim}: {a} vs {b}");
        }
    }
}
