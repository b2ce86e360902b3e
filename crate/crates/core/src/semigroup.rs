//! The frozen-coefficient operators `A = σ(v)Δ` and
//! `A_δ = σ(R_δ v) R_δ Δ R_δ` on `H¹`: dissipativity shift, resolvent,
//! semigroup and the commutator `(I - δΔ)[σ(R_δ v), R_δ]`.
//!
//! Multiplication by `σ` is a dealiased pseudo-spectral product, which is
//! symmetric in `L²` on band-limited fields.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{padded_size, Sobolev, SpectralField, FOUR_PI_SQ};
use crate::model::Mobility;
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenOperator {
    v: SpectralField,
    delta: f64,
    sigma: Vec<f64>,
    sigma_min: f64,
    sigma_max: f64,
    sigma_mean: f64,
    /// `sup |σ'(v)|` over the grid
    sigma_slope: f64,
}

impl FrozenOperator {
    /// `δ = 0` gives `A`, `δ > 0` gives `A_δ`.
    pub fn new(v: &SpectralField, delta: f64, m: &Mobility) -> Result<Self> {
        let rv = v.resolvent(delta)?;
        let samples = rv.to_physical_padded(padded_size(v.grid_size()));
        let sigma: Vec<f64> = samples.iter().map(|&x| m.value(x)).collect();
        let sigma_min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
        let sigma_max = sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(sigma_min > 0.0) || !sigma_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "frozen mobility range [{sigma_min}, {sigma_max}] not positive"
            )));
        }
        let sigma_mean = sigma.iter().sum::<f64>() / sigma.len() as f64;
        let sigma_slope = samples.iter().map(|&x| m.d1(x).abs()).fold(0.0, f64::max);
        Ok(Self {
            v: v.clone(),
            delta,
            sigma,
            sigma_min,
            sigma_max,
            sigma_mean,
            sigma_slope,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn coefficient(&self) -> &SpectralField {
        &self.v
    }

    pub fn sigma_bounds(&self) -> (f64, f64) {
        (self.sigma_min, self.sigma_max)
    }

    fn shape(&self) -> (usize, usize) {
        self.v.shape()
    }

    fn check(&self, u: &SpectralField) -> Result<()> {
        if u.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                left: u.shape(),
                right: self.shape(),
            });
        }
        Ok(())
    }

    /// Multiplication by the frozen `σ`.
    fn multiply(&self, u: &SpectralField) -> Result<SpectralField> {
        let (dim, n) = self.shape();
        let p = padded_size(n);
        let samples = u.to_physical_padded(p);
        let prod: Vec<f64> = samples.iter().zip(&self.sigma).map(|(a, s)| a * s).collect();
        SpectralField::from_physical_truncated(&prod, dim, p, n)
    }

    /// Symbol of `Δ R_δ²`.
    fn diffusion_symbol(&self, k2: f64) -> f64 {
        let r = 1.0 / (1.0 + self.delta * FOUR_PI_SQ * k2);
        -FOUR_PI_SQ * k2 * r * r
    }

    pub fn apply(&self, u: &SpectralField) -> Result<SpectralField> {
        self.check(u)?;
        self.multiply(&u.apply_multiplier(|k2| self.diffusion_symbol(k2)))
    }

    /// Adjoint in `H¹`: `Λ⁻¹ Aᵀ Λ` with `Λ = I - Δ` and `Aᵀ = Δ R_δ² σ`.
    pub fn apply_adjoint(&self, u: &SpectralField) -> Result<SpectralField> {
        self.check(u)?;
        let lifted = u.apply_multiplier(|k2| 1.0 + FOUR_PI_SQ * k2);
        let m = self.multiply(&lifted)?;
        Ok(m.apply_multiplier(|k2| self.diffusion_symbol(k2) / (1.0 + FOUR_PI_SQ * k2)))
    }

    /// `½(A + A†)`, self-adjoint in `H¹`.
    fn symmetric_part(&self, u: &SpectralField) -> Result<SpectralField> {
        let mut s = self.apply(u)?;
        s.axpy(1.0, &self.apply_adjoint(u)?);
        Ok(s.scaled(0.5))
    }

    /// `sup σ + ‖σ'(v)‖_∞ ‖v‖_{H²}`, the shape of the analytic bound with
    /// its constant set to one.
    pub fn m0_proxy(&self) -> f64 {
        self.sigma_max + self.sigma_slope * self.v.sobolev_norm(Sobolev::H2)
    }
}

fn h1(u: &SpectralField, w: &SpectralField) -> f64 {
    u.inner_sobolev(w, Sobolev::H1)
}

fn h1_norm(u: &SpectralField) -> f64 {
    u.sobolev_norm(Sobolev::H1)
}

/// Probe fields with `H¹`-normalizable random spectra.
pub fn random_probes(dim: usize, n: usize, count: usize, seed: u64) -> Result<Vec<SpectralField>> {
    (0..count)
        .map(|i| {
            let decay = [1.5, 2.0, 2.5, 3.0][i % 4];
            let f = SpectralField::random(dim, n, &CounterRng::new(seed, i as u64), 0, decay, 1.0)?;
            let norm = h1_norm(&f);
            Ok(f.scaled(1.0 / norm))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct M0Estimate {
    /// `max(sup σ, largest Rayleigh quotient found + margin)`.
    pub certified: f64,
    /// Largest `⟨Au, u⟩_{H¹} / ‖u‖²_{H¹}` over probes and ascent iterates.
    pub rayleigh_max: f64,
    pub proxy: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Symmetric eigen-decomposition of a small dense matrix by cyclic Jacobi
/// rotations. Returns the eigenvalues and column eigenvectors.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

const ASCENT_ITERATIONS: usize = 200;
const ASCENT_TOL: f64 = 1e-7;

/// Locally optimal preconditioned ascent of the `H¹` Rayleigh quotient of
/// the symmetric part of `A`, started from one probe. Returns the best
/// quotient seen, the iteration count and whether the residual converged.
fn rayleigh_ascent(op: &FrozenOperator, start: &SpectralField) -> Result<(f64, usize, bool)> {
    let precondition = |r: &SpectralField| r.apply_multiplier(|k2| 1.0 / (1.0 + op.sigma_mean * FOUR_PI_SQ * k2));
    let mut x = start.scaled(1.0 / h1_norm(start));
    let mut sx = op.symmetric_part(&x)?;
    let mut best = h1(&sx, &x);
    let mut prev: Option<SpectralField> = None;
    let scale = op.sigma_max * FOUR_PI_SQ;
    for it in 1..=ASCENT_ITERATIONS {
        let rho = h1(&sx, &x);
        best = best.max(rho);
        let mut r = sx.clone();
        r.axpy(-rho, &x);
        if h1_norm(&r) <= ASCENT_TOL * scale {
            return Ok((best, it, true));
        }
        // orthonormal basis of span{x, T r, p} in H¹
        let mut basis: Vec<SpectralField> = vec![x.clone()];
        let mut candidates = vec![precondition(&r)];
        if let Some(p) = &prev {
            candidates.push(p.clone());
        }
        for mut c in candidates {
            for _ in 0..2 {
                for b in &basis {
                    let proj = h1(&c, b);
                    c.axpy(-proj, b);
                }
            }
            let norm = h1_norm(&c);
            if norm > 1e-10 {
                basis.push(c.scaled(1.0 / norm));
            }
        }
        let images = basis.iter().map(|b| op.symmetric_part(b)).collect::<Result<Vec<_>>>()?;
        let dim = basis.len();
        let mut t = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                t[i][j] = 0.5 * (h1(&images[i], &basis[j]) + h1(&images[j], &basis[i]));
            }
        }
        let (vals, vecs) = jacobi_eigen(t);
        let top = (0..dim).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("nonempty basis");
        let mut next = SpectralField::zeros(x.dim(), x.grid_size())?;
        let mut next_image = next.clone();
        let mut step = next.clone();
        for i in 0..dim {
            let c = vecs[i][top];
            next.axpy(c, &basis[i]);
            next_image.axpy(c, &images[i]);
            if i > 0 {
                step.axpy(c, &basis[i]);
            }
        }
        let norm = h1_norm(&next);
        x = next.scaled(1.0 / norm);
        sx = next_image.scaled(1.0 / norm);
        let sn = h1_norm(&step);
        prev = (sn > 1e-14).then(|| step.scaled(1.0 / sn));
        best = best.max(h1(&sx, &x));
    }
    Ok((best, ASCENT_ITERATIONS, false))
}

/// Smallest shift making `m₀I - A` dissipative in `H¹` on the probe set,
/// refined by Rayleigh ascent from each probe.
pub fn estimate_m0(op: &FrozenOperator, probes: usize, seed: u64) -> Result<M0Estimate> {
    if probes < 16 {
        return Err(Error::InvalidParameter(format!("at least 16 probes required, got {probes}")));
    }
    let (dim, n) = op.shape();
    let starts = random_probes(dim, n, probes, seed)?;
    let results = starts
        .par_iter()
        .map(|p| rayleigh_ascent(op, p))
        .collect::<Result<Vec<_>>>()?;
    let rayleigh_max = results.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let iterations = results.iter().map(|r| r.1).max().unwrap_or(0);
    let converged = results.iter().any(|r| r.2);
    let margin = 1e-9 * (1.0 + rayleigh_max.abs());
    Ok(M0Estimate {
        certified: (rayleigh_max + margin).max(op.sigma_max),
        rayleigh_max,
        proxy: op.m0_proxy(),
        iterations,
        converged,
    })
}

/// `⟨((m + m₀)I - A)u, u⟩_{H¹} - m‖u‖²_{H¹}`, nonnegative under dissipativity.
pub fn dissipativity_margin(op: &FrozenOperator, m0: f64, m: f64, u: &SpectralField) -> Result<f64> {
    let au = op.apply(u)?;
    let uu = h1(u, u);
    Ok((m + m0) * uu - h1(&au, u) - m * uu)
}

const GMRES_RESTART: usize = 40;
pub const RESOLVENT_TOL: f64 = 1e-8;
pub const RESOLVENT_MAX_ITERATIONS: usize = 10_000;

/// Solves `((m + m₀)I - A)u = f` by right-preconditioned restarted GMRES in
/// the `H¹` inner product, preconditioned with the constant-coefficient
/// resolvent at the mean of `σ`.
pub fn resolvent_solve(op: &FrozenOperator, m: f64, m0: f64, f: &SpectralField) -> Result<SpectralField> {
    op.check(f)?;
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("resolvent parameter {m} must be positive")));
    }
    let shift = m + m0;
    let (dim, n) = op.shape();
    let mut u = SpectralField::zeros(dim, n)?;
    let f_norm = h1_norm(f);
    if f_norm == 0.0 {
        return Ok(u);
    }
    let target = RESOLVENT_TOL * f_norm;
    let smean = op.sigma_mean;
    let precondition = |r: &SpectralField| r.apply_multiplier(|k2| 1.0 / (shift + smean * FOUR_PI_SQ * k2));
    let operator = |x: &SpectralField| -> Result<SpectralField> {
        let mut y = x.scaled(shift);
        y.axpy(-1.0, &op.apply(x)?);
        Ok(y)
    };
    let mut residual = f.clone();
    let mut iterations = 0;
    loop {
        let beta = h1_norm(&residual);
        if beta <= target {
            return Ok(u);
        }
        if iterations >= RESOLVENT_MAX_ITERATIONS {
            return Err(Error::NoConvergence {
                iterations,
                residual: beta / f_norm,
            });
        }
        let mut v = vec![residual.scaled(1.0 / beta)];
        let mut h = vec![vec![0.0; GMRES_RESTART]; GMRES_RESTART + 1];
        let mut cs = vec![0.0; GMRES_RESTART];
        let mut sn = vec![0.0; GMRES_RESTART];
        let mut g = vec![0.0; GMRES_RESTART + 1];
        g[0] = beta;
        let mut k = 0;
        while k < GMRES_RESTART && iterations < RESOLVENT_MAX_ITERATIONS {
            iterations += 1;
            let mut w = operator(&precondition(&v[k]))?;
            for i in 0..=k {
                h[i][k] = h1(&w, &v[i]);
                w.axpy(-h[i][k], &v[i]);
            }
            h[k + 1][k] = h1_norm(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let r = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / r;
            sn[k] = h[k + 1][k] / r;
            h[k][k] = r;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            let next_norm = h1_norm(&w);
            k += 1;
            if g[k].abs() <= 0.5 * target || next_norm == 0.0 {
                break;
            }
            v.push(w.scaled(1.0 / next_norm));
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut z = SpectralField::zeros(dim, n)?;
        for (yi, vi) in y.iter().zip(&v) {
            z.axpy(*yi, vi);
        }
        u.axpy(1.0, &precondition(&z));
        residual = f.clone();
        residual.axpy(-1.0, &operator(&u)?);
    }
}

/// `S(t)u₀` (or `S_δ(t)u₀`) by exponential Euler on the split
/// `A = L + (A - L)` with `L = σ_max Δ R_δ²`.
pub fn evolve(op: &FrozenOperator, u0: &SpectralField, t: f64, steps: usize) -> Result<SpectralField> {
    op.check(u0)?;
    if !(t >= 0.0) {
        return Err(Error::NegativeParameter { name: "t", value: t });
    }
    if t == 0.0 {
        return Ok(u0.clone());
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("evolve needs at least one step".into()));
    }
    let h = t / steps as f64;
    let smax = op.sigma_max;
    let propagator = |k2: f64| (h * smax * op.diffusion_symbol(k2)).exp();
    let phi1 = |k2: f64| {
        let z = h * smax * op.diffusion_symbol(k2);
        if z.abs() < 1e-8 {
            h * (1.0 + 0.5 * z)
        } else {
            h * z.exp_m1() / z
        }
    };
    let mut u = u0.clone();
    let limit = 1e12 * h1_norm(u0).max(1e-300);
    for step in 0..steps {
        let mut rest = op.apply(&u)?;
        rest.axpy(-smax, &u.apply_multiplier(|k2| op.diffusion_symbol(k2)));
        let mut next = u.apply_multiplier(propagator);
        next.axpy(1.0, &rest.apply_multiplier(phi1));
        let norm = h1_norm(&next);
        if !norm.is_finite() || norm > limit {
            return Err(Error::BlowUp {
                step: step + 1,
                time: (step + 1) as f64 * h,
                reason: format!("H1 norm {norm:.3e}"),
            });
        }
        u = next;
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommutatorEstimate {
    pub delta: f64,
    pub estimate: f64,
    pub probes: usize,
}

const POWER_ITERATIONS: usize = 60;

/// Lower bound on `‖(I - δΔ)[σ(R_δ v), R_δ]‖` on mean-zero `L²` by power
/// iteration on `KᵀK` from random mean-zero probes.
pub fn commutator_norm(v: &SpectralField, delta: f64, m: &Mobility, probes: usize, seed: u64) -> Result<CommutatorEstimate> {
    if probes < 8 {
        return Err(Error::InvalidParameter(format!("at least 8 probes required, got {probes}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("commutator needs delta > 0, got {delta}")));
    }
    let op = FrozenOperator::new(v, delta, m)?;
    let lift = |x: &SpectralField| x.apply_multiplier(|k2| 1.0 + delta * FOUR_PI_SQ * k2);
    let zero_mean = |mut x: SpectralField| {
        x.coeffs_mut()[0] = num_complex::Complex64::new(0.0, 0.0);
        x
    };
    let k = |x: &SpectralField| -> Result<SpectralField> {
        let mut y = lift(&op.multiply(&x.resolvent(delta)?)?);
        y.axpy(-1.0, &op.multiply(x)?);
        Ok(y)
    };
    let kt = |x: &SpectralField| -> Result<SpectralField> {
        let mut y = op.multiply(&lift(x))?.resolvent(delta)?;
        y.axpy(-1.0, &op.multiply(x)?);
        Ok(y)
    };
    let (dim, n) = v.shape();
    let starts = (0..probes)
        .map(|i| SpectralField::random(dim, n, &CounterRng::new(seed, i as u64), 0, 0.0, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let estimates = starts
        .into_par_iter()
        .map(|start| -> Result<f64> {
            let mut x = zero_mean(start);
            let mut best = 0.0f64;
            for _ in 0..POWER_ITERATIONS {
                let norm = x.l2_norm();
                if norm == 0.0 {
                    return Ok(best);
                }
                x = x.scaled(1.0 / norm);
                let kx = k(&x)?;
                best = best.max(kx.l2_norm());
                x = zero_mean(kt(&kx)?);
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CommutatorEstimate {
        delta,
        estimate: estimates.into_iter().fold(0.0, f64::max),
        probes,
    })
}
