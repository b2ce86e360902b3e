//! Scalar functionals tracked along trajectories: free energy, its
//! regularized variant, the Willmore functional, the modulus of continuity,
//! the martingale statistic and the `H⁻¹` uniqueness metric.
//!
//! Nonlinear integrands are evaluated on a `2N` grid.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Sobolev, SpectralField};
use crate::model::{Mobility, Model, Potential, TruncatedPotential};
use crate::noise::martingale_increment_variance;
use crate::scheme::TrajectoryRecord;

/// Relative drift-quadrature error above which a martingale statistic is
/// flagged as too coarse.
pub const COARSE_THRESHOLD: f64 = 0.1;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fine_grid(u: &SpectralField) -> usize {
    2 * u.grid_size()
}

/// `F(u) = ∫ ½|∇u|² + W(u)`.
pub fn free_energy(u: &SpectralField, p: &Potential) -> f64 {
    let g = u.gradient_norm();
    let samples = u.to_physical_padded(fine_grid(u));
    0.5 * g * g + mean(&samples.iter().map(|&x| p.value(x)).collect::<Vec<_>>())
}

/// `F_{ℓ,η}(u) = ∫ ½|∇u|² + W_ℓ(R_η u)`.
pub fn regularized_free_energy(u: &SpectralField, tp: &TruncatedPotential, eta: f64) -> Result<f64> {
    let g = u.gradient_norm();
    let samples = u.resolvent(eta)?.to_physical_padded(fine_grid(u));
    Ok(0.5 * g * g + mean(&samples.iter().map(|&x| tp.value(x)).collect::<Vec<_>>()))
}

/// `𝒲(u) = ∫ σ(u)(Δu - W'(u))²`.
pub fn willmore(u: &SpectralField, p: &Potential, m: &Mobility) -> Result<f64> {
    let q = fine_grid(u);
    let (us, lap) = u.to_physical_padded_pair(&u.laplacian(), q)?;
    let vals: Vec<f64> = us
        .iter()
        .zip(&lap)
        .map(|(&x, &l)| {
            let r = l - p.d1(x);
            m.value(x) * r * r
        })
        .collect();
    Ok(mean(&vals))
}

/// `ω(u; δ) = max ‖u_t - u_s‖_{L²}` over checkpoint pairs with `|t - s| ≤ δ`.
pub fn modulus_of_continuity(rec: &TrajectoryRecord, delta: f64) -> Result<f64> {
    let cps = rec.checkpoints().ok_or(Error::TooFewCheckpoints(0))?;
    if cps.len() < 2 {
        return Err(Error::TooFewCheckpoints(cps.len()));
    }
    let times = rec.times();
    let mut best = 0.0f64;
    for i in 0..cps.len() {
        for k in i + 1..cps.len() {
            if times[k] - times[i] > delta * (1.0 + 1e-12) {
                break;
            }
            best = best.max((&cps[k] - &cps[i]).l2_norm());
        }
    }
    Ok(best)
}

/// Test function for the martingale statistic: constant in time, or
/// piecewise constant with slice `i` active on `[breaks[i], breaks[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Fixed(SpectralField),
    Piecewise { breaks: Vec<f64>, slices: Vec<SpectralField> },
}

impl TestFunction {
    /// `cos(2πx₁)`.
    pub fn default_cosine(dim: usize, n: usize) -> Result<Self> {
        let mut k = [0i64; 3];
        k[0] = 1;
        Ok(Self::Fixed(SpectralField::from_cosines(dim, n, &[(&k[..dim], 1.0)])?))
    }

    fn index_at(&self, t: f64) -> usize {
        match self {
            Self::Fixed(_) => 0,
            Self::Piecewise { breaks, slices } => {
                let i = breaks.partition_point(|&b| b <= t).saturating_sub(1);
                i.min(slices.len() - 1)
            }
        }
    }

    fn slice(&self, i: usize) -> &SpectralField {
        match self {
            Self::Fixed(f) => f,
            Self::Piecewise { slices, .. } => &slices[i],
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::Piecewise { breaks, slices } = self {
            if breaks.len() != slices.len() || slices.is_empty() {
                return Err(Error::InvalidParameter("piecewise test function needs one break per slice".into()));
            }
            if breaks.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter("test function breaks must increase".into()));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Fixed(f) => f.l2_norm() == 0.0,
            Self::Piecewise { slices, .. } => slices.iter().all(|f| f.l2_norm() == 0.0),
        }
    }
}

/// Drift of `⟨u, ψ⟩` under the continuum equation:
/// `⟨σ(u)(Δu - W'(u)), ψ⟩`.
pub fn drift_pairing(u: &SpectralField, psi: &SpectralField, p: &Potential, m: &Mobility) -> Result<f64> {
    u.same_shape(psi)?;
    if p.is_zero() && m.is_constant() {
        return Ok(m.value(0.0) * u.laplacian().inner(psi));
    }
    let q = fine_grid(u);
    let (us, lap) = u.to_physical_padded_pair(&u.laplacian(), q)?;
    let ps = psi.to_physical_padded(q);
    let vals: Vec<f64> = us
        .iter()
        .zip(&lap)
        .zip(&ps)
        .map(|((&x, &l), &f)| m.value(x) * (l - p.d1(x)) * f)
        .collect();
    Ok(mean(&vals))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingalePoint {
    pub t: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "QV_pred")]
    pub qv_pred: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleSeries {
    pub points: Vec<MartingalePoint>,
    /// `max_t |D_h(t) - D_{2h}(t)| / ∫|drift|`, the trapezoid drift integral
    /// compared against the same rule on every other checkpoint.
    pub drift_error: f64,
    pub coarse: bool,
}

/// `M^ψ_t = ⟨u_t, ψ⟩ - ⟨u_0, ψ⟩ - ∫_0^t ⟨σ(u)(Δu - W'(u)), ψ⟩ ds` with the
/// predicted quadratic variation `2∫∫[j * (√σ(u) ψ)]²`, both by trapezoid
/// over the record's checkpoints. Breaks of a piecewise `ψ` must be
/// checkpoint times.
pub fn martingale_statistic(rec: &TrajectoryRecord, psi: &TestFunction, model: &Model) -> Result<MartingaleSeries> {
    psi.validate()?;
    let cps = rec.checkpoints().ok_or(Error::TooFewCheckpoints(0))?;
    if cps.len() < 2 {
        return Err(Error::TooFewCheckpoints(cps.len()));
    }
    let times = rec.times();
    let tol = 1e-9 * times[times.len() - 1].abs().max(1.0);
    if let TestFunction::Piecewise { breaks, .. } = psi {
        for &b in &breaks[1..] {
            if b > times[0] && b < times[times.len() - 1] && !times.iter().any(|&t| (t - b).abs() <= tol) {
                return Err(Error::InvalidParameter(format!("test function break {b} is not a checkpoint time")));
            }
        }
    }
    // slice active on the step (times[i], times[i+1]]
    let slice_of = |i: usize| psi.index_at(0.5 * (times[i] + times[i + 1]));

    let (p, mob, j) = (&model.potential, &model.mobility, &model.kernel);
    let count = cps.len();
    let mut m = vec![0.0; count];
    let mut qv = vec![0.0; count];
    let mut drift_abs = 0.0;
    let mut step_drift = vec![0.0; count - 1];
    // drift and QV rate at both ends of each step, evaluated with that step's slice
    let mut ends = Vec::with_capacity(count - 1);
    let mut carried: Option<(usize, f64, f64)> = None;
    for i in 0..count - 1 {
        let s = slice_of(i);
        let f = psi.slice(s);
        let (d0, q0) = match carried {
            Some((cs, d, q)) if cs == s => (d, q),
            _ => (
                drift_pairing(&cps[i], f, p, mob)?,
                martingale_increment_variance(&cps[i], f, mob, j)?,
            ),
        };
        let d1 = drift_pairing(&cps[i + 1], f, p, mob)?;
        let q1 = martingale_increment_variance(&cps[i + 1], f, mob, j)?;
        carried = Some((s, d1, q1));
        ends.push((d0, d1));
        let h = times[i + 1] - times[i];
        step_drift[i] = 0.5 * h * (d0 + d1);
        drift_abs += 0.5 * h * (d0.abs() + d1.abs());
        let pair = cps[i + 1].inner(f) - cps[i].inner(f);
        m[i + 1] = m[i] + pair - step_drift[i];
        qv[i + 1] = qv[i] + 0.5 * h * (q0 + q1);
    }

    // coarser rule: trapezoid over pairs of steps using the outer endpoints
    let mut err = 0.0f64;
    let mut fine = 0.0;
    let mut coarse = 0.0;
    let mut i = 0;
    while i + 2 < count {
        let same = slice_of(i) == slice_of(i + 1);
        fine += step_drift[i] + step_drift[i + 1];
        if same {
            let h = times[i + 2] - times[i];
            coarse += 0.5 * h * (ends[i].0 + ends[i + 1].1);
        } else {
            coarse += step_drift[i] + step_drift[i + 1];
        }
        err = err.max((fine - coarse).abs());
        i += 2;
    }
    let drift_error = if drift_abs > 0.0 { err / drift_abs } else { 0.0 };
    let points = times
        .iter()
        .zip(m.iter().zip(&qv))
        .map(|(&t, (&m, &q))| MartingalePoint { t, m, qv_pred: q })
        .collect();
    Ok(MartingaleSeries {
        points,
        drift_error,
        coarse: drift_error > COARSE_THRESHOLD,
    })
}

/// `Ψ(u, v) = ½‖h(u) - h(v)‖²_{H⁻¹}` with `h' = 1/σ`.
pub fn uniqueness_metric(u: &SpectralField, v: &SpectralField, m: &Mobility) -> Result<f64> {
    u.same_shape(v)?;
    if u == v {
        return Ok(0.0);
    }
    let h = |x: f64| m.h(x).unwrap_or(f64::NAN);
    let hu = u.pointwise_apply(h)?;
    let hv = v.pointwise_apply(h)?;
    Ok(0.5 * (&hu - &hv).sobolev_norm_sq(Sobolev::H_MINUS_1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_model;
    use crate::rng::CounterRng;
    use std::f64::consts::PI;

    fn smooth(dim: usize, n: usize, seed: u64) -> SpectralField {
        // band-limited to n/4 so the 2n-grid quadrature is exact for quartics
        let f = SpectralField::random(dim, n / 4, &CounterRng::new(seed, 0), 0, 2.0, 1.0).unwrap();
        f.prolong(n).unwrap()
    }

    #[test]
    fn free_energy_closed_forms() {
        let p = Potential::double_well();
        let one = SpectralField::constant(2, 8, 1.0).unwrap();
        assert!(free_energy(&one, &p).abs() < 1e-15);
        let zero = SpectralField::zeros(3, 8).unwrap();
        assert!((free_energy(&zero, &p) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn free_energy_of_cosine_matches_quadrature() {
        let p = Potential::double_well();
        let u = SpectralField::from_cosines(1, 32, &[(&[1], 1.0)]).unwrap();
        // Simpson on 20001 points
        let n = 20000;
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let x = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * p.value((2.0 * PI * x).cos());
        }
        let oracle = 0.5 * (4.0 * PI * PI / 2.0) + s * h / 3.0;
        assert!((free_energy(&u, &p) - oracle).abs() < 1e-10);
    }

    #[test]
    fn regularized_energy_coincides_inside_truncation() {
        let (p, _, _) = default_model();
        let tp = TruncatedPotential::new(p.clone(), 10.0).unwrap();
        let u = smooth(1, 64, 1);
        assert_eq!(regularized_free_energy(&u, &tp, 0.0).unwrap(), free_energy(&u, &p));
        let zero = SpectralField::zeros(1, 16).unwrap();
        assert!((regularized_free_energy(&zero, &tp, 1e-2).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn regularized_energy_converges() {
        let (p, _, _) = default_model();
        let u = smooth(1, 64, 2).scaled(3.0);
        let f = free_energy(&u, &p);
        let mut prev = f64::INFINITY;
        for (eta, ell) in [(1e-2, 2.0), (1e-3, 4.0), (1e-4, 8.0), (1e-5, 16.0)] {
            let tp = TruncatedPotential::new(p.clone(), ell).unwrap();
            let gap = (regularized_free_energy(&u, &tp, eta).unwrap() - f).abs();
            assert!(gap < prev, "{gap} !< {prev}");
            prev = gap;
        }
        assert!(prev < 1e-3 * f);
    }

    #[test]
    fn willmore_closed_forms() {
        let (p, m, _) = default_model();
        let one = SpectralField::constant(1, 16, 1.0).unwrap();
        assert!(willmore(&one, &p, &m).unwrap().abs() < 1e-28);
        let u = smooth(2, 16, 3);
        let c1 = Mobility::constant(1.0).unwrap();
        let c3 = Mobility::constant(3.0).unwrap();
        let w1 = willmore(&u, &p, &c1).unwrap();
        assert!((willmore(&u, &p, &c3).unwrap() - 3.0 * w1).abs() <= 1e-12 * w1);
    }

    #[test]
    fn willmore_matches_pointwise_oracle() {
        let (p, m, _) = default_model();
        let u = smooth(1, 32, 4);
        // direct evaluation of the trigonometric series at many points
        let k = u.k_squared_table();
        let q = 4096;
        let mut acc = 0.0;
        for i in 0..q {
            let x = i as f64 / q as f64;
            let (mut val, mut lap) = (0.0, 0.0);
            for (flat, c) in u.coeffs().iter().enumerate() {
                let kx = u.wavevector(flat)[0] as f64;
                let e = (2.0 * PI * kx * x).cos() * c.re - (2.0 * PI * kx * x).sin() * c.im;
                val += e;
                lap -= 4.0 * PI * PI * k[flat] * e;
            }
            let r = lap - p.d1(val);
            acc += m.value(val) * r * r;
        }
        let oracle = acc / q as f64;
        let got = willmore(&u, &p, &m).unwrap();
        assert!((got - oracle).abs() <= 1e-8 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn uniqueness_metric_properties() {
        let (_, m, _) = default_model();
        let u = smooth(1, 32, 5);
        let v = smooth(1, 32, 6);
        assert_eq!(uniqueness_metric(&u, &u, &m).unwrap(), 0.0);
        let a = uniqueness_metric(&u, &v, &m).unwrap();
        let b = uniqueness_metric(&v, &u, &m).unwrap();
        assert!(a > 0.0 && (a - b).abs() <= 1e-14 * a);
        let one = Mobility::constant(1.0).unwrap();
        let plain = 0.5 * (&u - &v).sobolev_norm_sq(Sobolev::H_MINUS_1);
        assert!((uniqueness_metric(&u, &v, &one).unwrap() - plain).abs() <= 1e-12 * plain);
    }

    #[test]
    fn uniqueness_metric_sandwich() {
        let (_, m, _) = default_model();
        let c = m.abh_constant().powi(2);
        for seed in 0..20 {
            let u = smooth(2, 16, 10 + seed).scaled(2.0);
            let v = smooth(2, 16, 100 + seed).scaled(2.0);
            let psi = uniqueness_metric(&u, &v, &m).unwrap();
            let plain = 0.5 * (&u - &v).sobolev_norm_sq(Sobolev::H_MINUS_1);
            assert!(plain / c <= psi * c && psi <= c * plain, "seed {seed}");
        }
    }
}
