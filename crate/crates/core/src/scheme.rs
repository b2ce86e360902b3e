//! Approximation scheme: outer intervals with frozen mobility, time averages
//! feeding the next interval, and a stabilized IMEX Euler-Maruyama inner
//! integrator.
//!
//! One inner step with frozen `s = σ(v)` and `s_max = max s` solves
//!
//! ```text
//! (I - dt s_max Δ) u⁺ = u + dt [s (Δu - R_η W'_ℓ(R_η u)) - s_max Δu] + √(2s) (j * ΔW)
//! ```
//!
//! where products with `s` and the nonlinearity are evaluated on the padded
//! grid.

use serde::Serialize;

use crate::diagnostics::{free_energy, regularized_free_energy, willmore};
use crate::error::{Error, Result};
use crate::field::{padded_size, Sobolev, SpectralField, FOUR_PI_SQ};
use crate::model::{Model, TruncatedPotential};
use crate::noise::{ModeTable, NoisePath};

/// `sup |u|` beyond `GUARD_FACTOR · ℓ` aborts a run.
pub const GUARD_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub dim: usize,
    pub grid: usize,
    pub horizon: f64,
    pub outer_steps: usize,
    pub inner_steps: usize,
    pub eta: f64,
    pub ell: f64,
    pub model: Model,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            grid: 128,
            horizon: 1.0,
            outer_steps: 32,
            inner_steps: 8,
            eta: 1e-3,
            ell: 10.0,
            model: Model::default(),
        }
    }
}

impl SchemeConfig {
    pub fn total_steps(&self) -> usize {
        self.outer_steps * self.inner_steps
    }

    pub fn inner_dt(&self) -> f64 {
        self.horizon / self.total_steps() as f64
    }

    pub fn validate(&self) -> Result<()> {
        crate::field::check_shape(self.dim, self.grid)?;
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon {} must be positive", self.horizon)));
        }
        if self.outer_steps == 0 || self.inner_steps == 0 {
            return Err(Error::InvalidParameter("outer and inner step counts must be at least 1".into()));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::NegativeParameter {
                name: "eta",
                value: self.eta,
            });
        }
        TruncatedPotential::new(self.model.potential.clone(), self.ell)?;
        Ok(())
    }

    /// Noise path whose finest step is this configuration's inner step.
    pub fn noise_path(&self, seed: u64, replicate: u64) -> Result<NoisePath> {
        NoisePath::new(seed, replicate, self.inner_dt(), self.total_steps())
    }
}

/// `ı_n * u` with the heat multiplier `exp(-4π²|k|²/n)`.
pub fn mollify_initial(u0: &SpectralField, n: usize) -> Result<SpectralField> {
    if n == 0 {
        return Err(Error::InvalidParameter("mollifier index must be at least 1".into()));
    }
    let n = n as f64;
    Ok(u0.apply_multiplier(|k2| (-FOUR_PI_SQ * k2 / n).exp()))
}

/// Initial datum, resolvable on any grid.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Constant(f64),
    /// `Σ a cos(2π k·x)`
    Cosines(Vec<(Vec<i64>, f64)>),
    /// Wavevector-keyed random field, identical across grid sizes on the
    /// modes both resolve.
    Random { seed: u64, decay: f64, amplitude: f64 },
    /// Fixed field, prolonged or restricted to the requested grid.
    Field(SpectralField),
}

impl InitialCondition {
    pub fn field(&self, dim: usize, n: usize) -> Result<SpectralField> {
        match self {
            Self::Constant(c) => SpectralField::constant(dim, n, *c),
            Self::Cosines(terms) => {
                if let Some((k, _)) = terms.iter().find(|(k, _)| k.len() != dim) {
                    return Err(Error::InvalidParameter(format!("wavevector {k:?} does not have {dim} components")));
                }
                let refs: Vec<(&[i64], f64)> = terms.iter().map(|(k, a)| (k.as_slice(), *a)).collect();
                SpectralField::from_cosines(dim, n, &refs)
            }
            Self::Random { seed, decay, amplitude } => {
                SpectralField::random(dim, n, &crate::rng::CounterRng::new(*seed, u64::MAX), 0, *decay, *amplitude)
            }
            Self::Field(f) => {
                if f.dim() != dim {
                    return Err(Error::ShapeMismatch {
                        left: f.shape(),
                        right: (dim, n),
                    });
                }
                match f.grid_size().cmp(&n) {
                    std::cmp::Ordering::Equal => Ok(f.clone()),
                    std::cmp::Ordering::Less => f.prolong(n),
                    std::cmp::Ordering::Greater => f.restrict(n),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    u: SpectralField,
    v: SpectralField,
    /// `σ(v)` on the padded grid
    sigma: Vec<f64>,
    noise_scale: Vec<f64>,
    sigma_min: f64,
    sigma_max: f64,
    implicit: Vec<f64>,
    accumulator: SpectralField,
    accumulated: usize,
    step: usize,
    dissipation: f64,
}

impl SchemeState {
    pub fn u(&self) -> &SpectralField {
        &self.u
    }

    /// Time average of the previous interval (mollified initial datum on
    /// the first one).
    pub fn v(&self) -> &SpectralField {
        &self.v
    }

    pub fn frozen_sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_bounds(&self) -> (f64, f64) {
        (self.sigma_min, self.sigma_max)
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Substeps accumulated in the current interval.
    pub fn accumulated(&self) -> usize {
        self.accumulated
    }

    /// `Σ dt ∫ σ(v)(Δu - R_η W'_ℓ(R_η u))²` over the steps taken.
    pub fn dissipation(&self) -> f64 {
        self.dissipation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    #[serde(rename = "F")]
    pub free_energy: f64,
    #[serde(rename = "F_le")]
    pub regularized_free_energy: f64,
    pub willmore: f64,
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    times: Vec<f64>,
    records: Vec<DiagnosticRecord>,
    checkpoints: Option<Vec<SpectralField>>,
    max_sup_norm: f64,
    dissipation: f64,
    final_state: SpectralField,
}

impl TrajectoryRecord {
    /// Builds a record from externally produced checkpoints; diagnostics are
    /// left empty.
    pub fn from_checkpoints(times: Vec<f64>, checkpoints: Vec<SpectralField>) -> Result<Self> {
        if times.len() != checkpoints.len() || times.is_empty() {
            return Err(Error::InvalidParameter("one checkpoint per time required".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("checkpoint times must increase".into()));
        }
        let max_sup_norm = checkpoints.iter().map(|c| c.sup_norm()).fold(0.0, f64::max);
        let final_state = checkpoints[checkpoints.len() - 1].clone();
        Ok(Self {
            times,
            records: Vec::new(),
            checkpoints: Some(checkpoints),
            max_sup_norm,
            dissipation: 0.0,
            final_state,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn records(&self) -> &[DiagnosticRecord] {
        &self.records
    }

    pub fn checkpoints(&self) -> Option<&[SpectralField]> {
        self.checkpoints.as_deref()
    }

    /// Largest grid sup-norm over the sample times.
    pub fn max_sup_norm(&self) -> f64 {
        self.max_sup_norm
    }

    pub fn dissipation(&self) -> f64 {
        self.dissipation
    }

    pub fn final_state(&self) -> &SpectralField {
        &self.final_state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub checkpoints: bool,
    /// Skip the diagnostic functionals (records stay empty).
    pub skip_diagnostics: bool,
}

#[derive(Debug, Clone)]
pub struct Scheme {
    cfg: SchemeConfig,
    tp: TruncatedPotential,
    kernel: SpectralField,
    k_sq: Vec<f64>,
    modes: ModeTable,
    padded: usize,
}

impl Scheme {
    pub fn new(cfg: SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        let tp = TruncatedPotential::new(cfg.model.potential.clone(), cfg.ell)?;
        let kernel = cfg.model.kernel.to_field(cfg.dim, cfg.grid)?;
        let k_sq = kernel.k_squared_table();
        let modes = ModeTable::new(cfg.dim, cfg.grid)?;
        let padded = padded_size(cfg.grid);
        Ok(Self {
            cfg,
            tp,
            kernel,
            k_sq,
            modes,
            padded,
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    pub fn truncated_potential(&self) -> &TruncatedPotential {
        &self.tp
    }

    pub fn mode_table(&self) -> &ModeTable {
        &self.modes
    }

    fn check_field(&self, u: &SpectralField) -> Result<()> {
        let want = (self.cfg.dim, self.cfg.grid);
        if u.shape() != want {
            return Err(Error::ShapeMismatch {
                left: u.shape(),
                right: want,
            });
        }
        Ok(())
    }

    /// State at `t = 0`: `u = u0`, `v = ı_n * u0`, `σ` frozen from `v`.
    pub fn initial_state(&self, u0: &SpectralField) -> Result<SchemeState> {
        self.check_field(u0)?;
        if !u0.is_finite() {
            return Err(Error::BlowUp {
                step: 0,
                time: 0.0,
                reason: "non-finite initial datum".into(),
            });
        }
        let v = mollify_initial(u0, self.cfg.outer_steps)?;
        let mut state = SchemeState {
            u: u0.clone(),
            v: SpectralField::zeros(self.cfg.dim, self.cfg.grid)?,
            sigma: Vec::new(),
            noise_scale: Vec::new(),
            sigma_min: 0.0,
            sigma_max: 0.0,
            implicit: Vec::new(),
            accumulator: SpectralField::zeros(self.cfg.dim, self.cfg.grid)?,
            accumulated: 0,
            step: 0,
            dissipation: 0.0,
        };
        self.freeze(&mut state, v)?;
        Ok(state)
    }

    fn freeze(&self, state: &mut SchemeState, v: SpectralField) -> Result<()> {
        let mob = &self.cfg.model.mobility;
        let samples = v.to_physical_padded(self.padded);
        let sigma: Vec<f64> = samples.iter().map(|&x| mob.value(x)).collect();
        let (lo, hi) = sigma
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        if !(lo > 0.0) || !hi.is_finite() {
            return Err(Error::BlowUp {
                step: state.step,
                time: state.step as f64 * self.cfg.inner_dt(),
                reason: format!("frozen mobility range [{lo}, {hi}] not positive and finite"),
            });
        }
        let dt = self.cfg.inner_dt();
        state.implicit = self.k_sq.iter().map(|&k2| 1.0 / (1.0 + dt * hi * FOUR_PI_SQ * k2)).collect();
        state.noise_scale = sigma.iter().map(|&s| (2.0 * s).sqrt()).collect();
        state.sigma = sigma;
        state.sigma_min = lo;
        state.sigma_max = hi;
        state.v = v;
        Ok(())
    }

    /// `Δu - R_η W'_ℓ(R_η u)` in Fourier space.
    fn drift(&self, u: &SpectralField) -> Result<SpectralField> {
        let lap = u.laplacian();
        if self.cfg.model.potential.is_zero() {
            return Ok(lap);
        }
        let eta = self.cfg.eta;
        let reaction = u.resolvent(eta)?.pointwise_apply(|x| self.tp.d1(x))?.resolvent(eta)?;
        Ok(&lap - &reaction)
    }

    /// One substep with the increment `dw` of the cylindrical process.
    pub fn inner_step(&self, state: &mut SchemeState, dw: &SpectralField) -> Result<()> {
        self.check_field(dw)?;
        let dt = self.cfg.inner_dt();
        let with_noise = !self.cfg.model.kernel.is_zero();
        state.accumulator.axpy(1.0, &state.u);
        state.accumulated += 1;

        let drift = self.drift(&state.u)?;
        let smax = state.sigma_max;
        let mut next = state.u.clone();
        if state.sigma_min == smax {
            // constant frozen mobility: every term is a Fourier multiplier
            let reaction = &drift - &state.u.laplacian();
            next.axpy(dt * smax, &reaction);
            if with_noise {
                next.axpy((2.0 * smax).sqrt(), &self.kernel.convolve(dw)?);
            }
            state.dissipation += dt * smax * drift.sobolev_norm_sq(Sobolev::L2);
        } else {
            let p = self.padded;
            let (g, noise) = if with_noise {
                let (g, z) = drift.to_physical_padded_pair(&self.kernel.convolve(dw)?, p)?;
                (g, Some(z))
            } else {
                (drift.to_physical_padded(p), None)
            };
            let mut dissipation = 0.0;
            let mut phys = Vec::with_capacity(g.len());
            for (i, &gi) in g.iter().enumerate() {
                let sg = state.sigma[i] * gi;
                dissipation += sg * gi;
                let mut x = dt * sg;
                if let Some(z) = &noise {
                    x += state.noise_scale[i] * z[i];
                }
                phys.push(x);
            }
            state.dissipation += dt * dissipation / g.len() as f64;
            let explicit = SpectralField::from_physical_truncated(&phys, self.cfg.dim, p, self.cfg.grid)?;
            next.axpy(1.0, &explicit);
            next.axpy(-dt * smax, &state.u.laplacian());
        }
        for (c, d) in next.coeffs_mut().iter_mut().zip(&state.implicit) {
            *c *= d;
        }
        state.step += 1;
        self.guard(&next, state.step)?;
        state.u = next;
        Ok(())
    }

    fn guard(&self, u: &SpectralField, step: usize) -> Result<()> {
        let limit = GUARD_FACTOR * self.cfg.ell;
        let bound: f64 = u.coeffs().iter().map(|c| c.norm()).sum();
        let time = step as f64 * self.cfg.inner_dt();
        if !bound.is_finite() {
            return Err(Error::BlowUp {
                step,
                time,
                reason: "non-finite coefficients".into(),
            });
        }
        if bound > limit {
            let sup = u.sup_norm();
            if sup > limit {
                return Err(Error::BlowUp {
                    step,
                    time,
                    reason: format!("sup norm {sup:.3e} exceeds {limit}"),
                });
            }
        }
        Ok(())
    }

    /// Replaces `v` by the completed interval's average and refreezes `σ`.
    pub fn close_outer_interval(&self, state: &mut SchemeState) -> Result<()> {
        if state.accumulated != self.cfg.inner_steps {
            return Err(Error::IntervalIncomplete {
                done: state.accumulated,
                expected: self.cfg.inner_steps,
            });
        }
        let v = state.accumulator.scaled(1.0 / state.accumulated as f64);
        self.freeze(state, v)?;
        state.accumulator = SpectralField::zeros(self.cfg.dim, self.cfg.grid)?;
        state.accumulated = 0;
        Ok(())
    }

    pub fn diagnostics(&self, u: &SpectralField, t: f64) -> Result<DiagnosticRecord> {
        let model = &self.cfg.model;
        Ok(DiagnosticRecord {
            t,
            free_energy: free_energy(u, &model.potential),
            regularized_free_energy: regularized_free_energy(u, &self.tp, self.cfg.eta)?,
            willmore: willmore(u, &model.potential, &model.mobility)?,
            l2: u.sobolev_norm(Sobolev::L2),
            h1: u.sobolev_norm(Sobolev::H1),
            h2: u.sobolev_norm(Sobolev::H2),
        })
    }

    /// Maps sample times to step indices; each must be a step time.
    pub fn sample_steps(&self, sample_times: &[f64]) -> Result<Vec<usize>> {
        let dt = self.cfg.inner_dt();
        let total = self.cfg.total_steps();
        let mut steps = Vec::with_capacity(sample_times.len());
        for &t in sample_times {
            let k = (t / dt).round();
            if !(k >= 0.0) || k > total as f64 || (k * dt - t).abs() > 1e-9 * dt.max(t.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "sample time {t} is not a step time in [0, {}]",
                    self.cfg.horizon
                )));
            }
            let k = k as usize;
            if steps.last().is_some_and(|&prev| prev >= k) {
                return Err(Error::InvalidParameter("sample times must be strictly increasing".into()));
            }
            steps.push(k);
        }
        Ok(steps)
    }

    /// Finest-step ratio between `path` and this scheme.
    fn path_ratio(&self, path: &NoisePath) -> Result<usize> {
        let total = self.cfg.total_steps();
        let ratio = path.horizon() / total;
        let consistent = ratio >= 1
            && ratio * total == path.horizon()
            && ((path.inner_dt() * ratio as f64) - self.cfg.inner_dt()).abs() <= 1e-12 * self.cfg.inner_dt();
        if !consistent {
            return Err(Error::Incompatible(format!(
                "noise path ({} steps of {}) does not refine {} steps of {}",
                path.horizon(),
                path.inner_dt(),
                total,
                self.cfg.inner_dt()
            )));
        }
        Ok(ratio)
    }

    pub fn run(
        &self,
        u0: &SpectralField,
        path: &NoisePath,
        sample_times: &[f64],
        opts: RunOptions,
    ) -> Result<TrajectoryRecord> {
        let ratio = self.path_ratio(path)?;
        let samples = self.sample_steps(sample_times)?;
        let dt = self.cfg.inner_dt();
        let mut state = self.initial_state(u0)?;
        let mut rec = TrajectoryRecord {
            times: Vec::with_capacity(samples.len()),
            records: Vec::new(),
            checkpoints: opts.checkpoints.then(Vec::new),
            max_sup_norm: 0.0,
            dissipation: 0.0,
            final_state: u0.clone(),
        };
        let mut next_sample = 0;
        let total = self.cfg.total_steps();
        for step in 0..=total {
            if next_sample < samples.len() && samples[next_sample] == step {
                let t = step as f64 * dt;
                self.record(&mut rec, &state.u, t, opts)?;
                next_sample += 1;
            }
            if step == total {
                break;
            }
            let dw = if self.cfg.model.kernel.is_zero() {
                SpectralField::zeros(self.cfg.dim, self.cfg.grid)?
            } else {
                path.wiener_increment(&self.modes, step * ratio, (step + 1) * ratio)?
            };
            self.inner_step(&mut state, &dw)?;
            if state.accumulated == self.cfg.inner_steps {
                self.close_outer_interval(&mut state)?;
            }
        }
        rec.dissipation = state.dissipation;
        rec.final_state = state.u;
        Ok(rec)
    }

    fn record(&self, rec: &mut TrajectoryRecord, u: &SpectralField, t: f64, opts: RunOptions) -> Result<()> {
        rec.times.push(t);
        rec.max_sup_norm = rec.max_sup_norm.max(u.sup_norm());
        if !opts.skip_diagnostics {
            let d = self.diagnostics(u, t)?;
            let values = [d.free_energy, d.regularized_free_energy, d.willmore, d.h2];
            if values.iter().any(|x| !x.is_finite()) {
                return Err(Error::BlowUp {
                    step: (t / self.cfg.inner_dt()).round() as usize,
                    time: t,
                    reason: "non-finite diagnostics".into(),
                });
            }
            rec.records.push(d);
        }
        if let Some(cps) = rec.checkpoints.as_mut() {
            cps.push(u.clone());
        }
        Ok(())
    }
}

/// `count + 1` equally spaced times covering `[0, horizon]`.
pub fn uniform_times(horizon: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| horizon * i as f64 / count as f64).collect()
}
