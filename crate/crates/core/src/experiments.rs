//! Monte Carlo ensembles, shared-noise refinement and coupling studies, and
//! statistical tests of the martingale characterization.
//!
//! Replicates run in parallel; results are collected in replicate order and
//! reduced sequentially, so reports do not depend on the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{martingale_statistic, uniqueness_metric, TestFunction};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::noise::{NoisePath, StepReuse};
use crate::scheme::{InitialCondition, RunOptions, Scheme, SchemeConfig, TrajectoryRecord};

/// Largest tolerated fraction of blown-up replicates.
pub const MAX_BLOWUP_FRACTION: f64 = 0.05;

/// z-score threshold of the martingale test.
pub const Z_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateSummary {
    pub replicate: u64,
    pub blown_up: bool,
    pub sup_free_energy: f64,
    pub sup_regularized_free_energy: f64,
    /// Trapezoid over sample times of the Willmore functional.
    pub willmore_integral: f64,
    /// `∫ σ(v)(Δu - R_η W'_ℓ(R_η u))² dt` accumulated by the scheme.
    pub dissipation: f64,
    pub sup_h1: f64,
}

impl ReplicateSummary {
    fn blown(replicate: u64) -> Self {
        Self {
            replicate,
            blown_up: true,
            sup_free_energy: f64::NAN,
            sup_regularized_free_energy: f64::NAN,
            willmore_integral: f64::NAN,
            dissipation: f64::NAN,
            sup_h1: f64::NAN,
        }
    }

    fn from_record(replicate: u64, rec: &TrajectoryRecord) -> Self {
        let r = rec.records();
        let sup = |f: fn(&crate::scheme::DiagnosticRecord) -> f64| r.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let mut willmore_integral = 0.0;
        for w in r.windows(2) {
            willmore_integral += 0.5 * (w[1].t - w[0].t) * (w[0].willmore + w[1].willmore);
        }
        Self {
            replicate,
            blown_up: false,
            sup_free_energy: sup(|d| d.free_energy),
            sup_regularized_free_energy: sup(|d| d.regularized_free_energy),
            willmore_integral,
            dissipation: rec.dissipation(),
            sup_h1: sup(|d| d.h1),
        }
    }
}

/// Estimate of `𝔼 X^p` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moment {
    pub p: u32,
    pub mean: f64,
    pub se: f64,
}

/// Sample mean and standard error `std/√M` of `x^p`.
pub fn moment(values: &[f64], p: u32) -> Moment {
    let xs: Vec<f64> = values.iter().map(|x| x.powi(p as i32)).collect();
    let (mean, sd) = mean_sd(&xs);
    Moment {
        p,
        mean,
        se: sd / (xs.len() as f64).sqrt(),
    }
}

/// Mean and unbiased standard deviation, summed in order.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub replicates: usize,
    pub blown_up: usize,
    pub summaries: Vec<ReplicateSummary>,
    /// `𝔼(sup_t F_{ℓ,η})^p` for `p = 1, 2`.
    pub sup_regularized_free_energy: [Moment; 2],
    pub sup_free_energy: [Moment; 2],
    /// `𝔼(∫ σ(v)(Δu - R_η W'_ℓ(R_η u))²)^p` for `p = 1, 2`.
    pub dissipation: [Moment; 2],
    pub willmore_integral: [Moment; 2],
}

fn moments_of(summaries: &[&ReplicateSummary], f: impl Fn(&ReplicateSummary) -> f64) -> [Moment; 2] {
    let xs: Vec<f64> = summaries.iter().map(|s| f(s)).collect();
    [moment(&xs, 1), moment(&xs, 2)]
}

/// Runs replicates `0..replicates` of `cfg` with noise seed `seed`.
pub fn run_ensemble(
    cfg: &SchemeConfig,
    initial: &InitialCondition,
    seed: u64,
    replicates: usize,
    sample_times: &[f64],
) -> Result<EnsembleReport> {
    if replicates < 2 {
        return Err(Error::InvalidParameter(format!("ensemble needs at least 2 replicates, got {replicates}")));
    }
    let scheme = Scheme::new(cfg.clone())?;
    let u0 = initial.field(cfg.dim, cfg.grid)?;
    scheme.sample_steps(sample_times)?;
    let summaries: Vec<ReplicateSummary> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| -> Result<ReplicateSummary> {
            let path = cfg.noise_path(seed, r)?;
            match scheme.run(&u0, &path, sample_times, RunOptions::default()) {
                Ok(rec) => Ok(ReplicateSummary::from_record(r, &rec)),
                Err(Error::BlowUp { .. }) => Ok(ReplicateSummary::blown(r)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let blown_up = summaries.iter().filter(|s| s.blown_up).count();
    if blown_up as f64 > MAX_BLOWUP_FRACTION * replicates as f64 {
        return Err(Error::TooManyBlowUps {
            blown: blown_up,
            total: replicates,
        });
    }
    let ok: Vec<&ReplicateSummary> = summaries.iter().filter(|s| !s.blown_up).collect();
    Ok(EnsembleReport {
        replicates,
        blown_up,
        sup_regularized_free_energy: moments_of(&ok, |s| s.sup_regularized_free_energy),
        sup_free_energy: moments_of(&ok, |s| s.sup_free_energy),
        dissipation: moments_of(&ok, |s| s.dissipation),
        willmore_integral: moments_of(&ok, |s| s.willmore_integral),
        summaries,
    })
}

/// Identity of a noise path: the same key on two schemes means literally
/// the same Brownian motions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NoiseKey {
    pub seed: u64,
    pub replicate: u64,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Finest common path for several schemes on the same horizon.
pub fn master_path(cfgs: &[&SchemeConfig], key: NoiseKey) -> Result<NoisePath> {
    let horizon = cfgs[0].horizon;
    if cfgs.iter().any(|c| c.horizon != horizon) {
        return Err(Error::Incompatible("schemes on different horizons cannot share noise".into()));
    }
    let steps = cfgs.iter().map(|c| c.total_steps()).fold(1, |acc, s| acc / gcd(acc, s) * s);
    NoisePath::new(key.seed, key.replicate, horizon / steps as f64, steps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingPoint {
    pub t: f64,
    pub psi: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub label_a: String,
    pub label_b: String,
    pub series: Vec<CouplingPoint>,
    /// `sup_t ‖u_t - u'_t‖_{L²}`
    pub sup_l2: f64,
    pub sup_psi: f64,
    pub final_psi: f64,
    /// Least-squares slope of `log Ψ_t` over the second half of the run.
    pub log_slope: Option<f64>,
}

fn compare(a: &TrajectoryRecord, b: &TrajectoryRecord, cfg: &SchemeConfig, labels: (String, String)) -> Result<CouplingReport> {
    let (ca, cb) = match (a.checkpoints(), b.checkpoints()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::TooFewCheckpoints(0)),
    };
    let mob = &cfg.model.mobility;
    let mut series = Vec::with_capacity(ca.len());
    for ((t, ua), ub) in a.times().iter().zip(ca).zip(cb) {
        let (ua, ub) = common_grid(ua, ub)?;
        series.push(CouplingPoint {
            t: *t,
            psi: uniqueness_metric(&ua, &ub, mob)?,
            l2: (&ua - &ub).l2_norm(),
        });
    }
    let sup_l2 = series.iter().map(|p| p.l2).fold(0.0, f64::max);
    let sup_psi = series.iter().map(|p| p.psi).fold(0.0, f64::max);
    let final_psi = series.last().map_or(0.0, |p| p.psi);
    Ok(CouplingReport {
        label_a: labels.0,
        label_b: labels.1,
        log_slope: log_slope(&series),
        series,
        sup_l2,
        sup_psi,
        final_psi,
    })
}

fn common_grid(a: &SpectralField, b: &SpectralField) -> Result<(SpectralField, SpectralField)> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let n = a.grid_size().max(b.grid_size());
    Ok((a.prolong(n)?, b.prolong(n)?))
}

fn log_slope(series: &[CouplingPoint]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series[series.len() / 2..]
        .iter()
        .filter(|p| p.psi > 0.0)
        .map(|p| (p.t, p.psi.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    slope.is_finite().then_some(slope)
}

/// Parameter varied by a refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// outer steps `n`
    N,
    /// inner substeps `m`
    M,
    Eta,
    Ell,
    /// grid size `N`
    Grid,
}

impl Axis {
    pub fn apply(self, base: &SchemeConfig, level: f64) -> Result<SchemeConfig> {
        let mut c = base.clone();
        let count = |x: f64| -> Result<usize> {
            if x >= 1.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::InvalidParameter(format!("level {x} is not a positive integer")))
            }
        };
        match self {
            Self::N => c.outer_steps = count(level)?,
            Self::M => c.inner_steps = count(level)?,
            Self::Eta => c.eta = level,
            Self::Ell => c.ell = level,
            Self::Grid => c.grid = count(level)?,
        }
        c.validate()?;
        Ok(c)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::N => "n",
            Self::M => "m",
            Self::Eta => "eta",
            Self::Ell => "ell",
            Self::Grid => "N",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Self::N),
            "m" => Ok(Self::M),
            "eta" => Ok(Self::Eta),
            "ell" => Ok(Self::Ell),
            "N" | "grid" => Ok(Self::Grid),
            other => Err(Error::InvalidParameter(format!("unknown refinement axis {other:?}"))),
        }
    }
}

/// Runs every level against one master noise path and compares
/// consecutive levels.
pub fn refinement_study(
    base: &SchemeConfig,
    axis: Axis,
    levels: &[f64],
    initial: &InitialCondition,
    key: NoiseKey,
    sample_times: &[f64],
) -> Result<Vec<CouplingReport>> {
    if levels.len() < 2 {
        return Err(Error::InvalidParameter("refinement needs at least two levels".into()));
    }
    let increasing = levels.windows(2).all(|w| w[1] > w[0]);
    let decreasing = levels.windows(2).all(|w| w[1] < w[0]);
    if !increasing && !decreasing {
        return Err(Error::InvalidParameter("refinement levels must be monotone".into()));
    }
    let cfgs = levels.iter().map(|&l| axis.apply(base, l)).collect::<Result<Vec<_>>>()?;
    if axis == Axis::Grid {
        let grids: Vec<usize> = cfgs.iter().map(|c| c.grid).collect();
        let nested = grids
            .windows(2)
            .all(|w| w[0].max(w[1]) % w[0].min(w[1]) == 0);
        if !nested {
            return Err(Error::Incompatible(format!("grid sizes {grids:?} do not nest")));
        }
    }
    let refs: Vec<&SchemeConfig> = cfgs.iter().collect();
    let path = master_path(&refs, key)?;
    let records = cfgs
        .par_iter()
        .map(|c| {
            let scheme = Scheme::new(c.clone())?;
            let u0 = initial.field(c.dim, c.grid)?;
            scheme.run(
                &u0,
                &path,
                sample_times,
                RunOptions {
                    checkpoints: true,
                    skip_diagnostics: true,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let name = axis.name();
    (0..levels.len() - 1)
        .map(|i| {
            compare(
                &records[i],
                &records[i + 1],
                base,
                (format!("{name}={}", levels[i]), format!("{name}={}", levels[i + 1])),
            )
        })
        .collect()
}

/// Runs two schemes for the same equation and tracks `Ψ_t` between them.
/// Equal keys share the noise path.
pub fn coupling_experiment(
    cfg_a: &SchemeConfig,
    key_a: NoiseKey,
    cfg_b: &SchemeConfig,
    key_b: NoiseKey,
    initial: &InitialCondition,
    sample_times: &[f64],
) -> Result<CouplingReport> {
    if cfg_a.dim != cfg_b.dim || cfg_a.horizon != cfg_b.horizon {
        return Err(Error::Incompatible("coupled schemes need the same dimension and horizon".into()));
    }
    if cfg_a.model != cfg_b.model {
        return Err(Error::Incompatible("coupled schemes must solve the same equation".into()));
    }
    let both = [cfg_a, cfg_b];
    let path_a = master_path(&both, key_a)?;
    let path_b = master_path(&both, key_b)?;
    let opts = RunOptions {
        checkpoints: true,
        skip_diagnostics: true,
    };
    let run = |c: &SchemeConfig, path: &NoisePath| -> Result<TrajectoryRecord> {
        let scheme = Scheme::new(c.clone())?;
        scheme.run(&initial.field(c.dim, c.grid)?, path, sample_times, opts)
    };
    let (a, b) = rayon::join(|| run(cfg_a, &path_a), || run(cfg_b, &path_b));
    let labels = (
        format!("seed={},replicate={}", key_a.seed, key_a.replicate),
        format!("seed={},replicate={}", key_b.seed, key_b.replicate),
    );
    compare(&a?, &b?, cfg_a, labels)
}

/// z-score of a sample mean against zero.
fn z_of(xs: &[f64]) -> f64 {
    let (mean, sd) = mean_sd(xs);
    if sd == 0.0 {
        if mean == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(mean)
        }
    } else {
        mean / (sd / (xs.len() as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalScore {
    pub start: f64,
    pub end: f64,
    /// `𝔼[M_t - M_s] = 0`
    pub z_mean: f64,
    /// `𝔼[(M_t - M_s)² - ([M]_t - [M]_s)] = 0`
    pub z_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub replicates: usize,
    pub blown_up: usize,
    /// No noise: the statistic is pure quadrature bias and is not scored.
    pub degenerate: bool,
    pub intervals: Vec<IntervalScore>,
    /// Scores of `(0, t]` for every test time.
    pub cumulative: Vec<IntervalScore>,
    /// `𝔼[ΔM_i ΔM_{i+1}] = 0` for consecutive intervals.
    pub orthogonality: Vec<f64>,
    /// Replicates whose drift quadrature was flagged as too coarse.
    pub coarse: usize,
    pub max_abs_z: f64,
    pub passed: bool,
    /// Ensemble mean of `M_t` and of the predicted quadratic variation at
    /// the test times.
    pub mean_series: Vec<(f64, f64, f64)>,
}

/// Options of [`martingale_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTestSpec {
    pub seed: u64,
    pub replicates: usize,
    pub test_times: Vec<f64>,
    /// Deliberately broken noise for negative controls.
    pub reuse: Option<StepReuse>,
}

/// Monte Carlo test of the martingale property of `M^ψ` and of its
/// quadratic variation, with drift quadrature over every inner step.
pub fn martingale_test(
    cfg: &SchemeConfig,
    initial: &InitialCondition,
    psi: &TestFunction,
    spec: &MartingaleTestSpec,
) -> Result<MartingaleReport> {
    let scheme = Scheme::new(cfg.clone())?;
    let test_steps = scheme.sample_steps(&spec.test_times)?;
    if test_steps.len() < 2 || test_steps[0] != 0 {
        return Err(Error::InvalidParameter("test times must start at 0 and contain at least two times".into()));
    }
    let degenerate = cfg.model.kernel.is_zero() || psi.is_zero();
    if degenerate {
        return Ok(MartingaleReport {
            replicates: spec.replicates,
            blown_up: 0,
            degenerate: true,
            intervals: Vec::new(),
            cumulative: Vec::new(),
            orthogonality: Vec::new(),
            coarse: 0,
            max_abs_z: 0.0,
            passed: true,
            mean_series: Vec::new(),
        });
    }
    if spec.replicates < 2 {
        return Err(Error::InvalidParameter("martingale test needs at least 2 replicates".into()));
    }
    let u0 = initial.field(cfg.dim, cfg.grid)?;
    let all_times: Vec<f64> = (0..=cfg.total_steps()).map(|k| k as f64 * cfg.inner_dt()).collect();
    let opts = RunOptions {
        checkpoints: true,
        skip_diagnostics: true,
    };
    // per replicate: (M, QV) at the test times, coarse flag
    type Sample = Option<(Vec<(f64, f64)>, bool)>;
    let samples: Vec<Sample> = (0..spec.replicates as u64)
        .into_par_iter()
        .map(|r| -> Result<Sample> {
            let mut path = cfg.noise_path(spec.seed, r)?;
            if let Some(reuse) = spec.reuse {
                path = path.with_reuse(reuse);
            }
            let rec = match scheme.run(&u0, &path, &all_times, opts) {
                Ok(rec) => rec,
                Err(Error::BlowUp { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let series = martingale_statistic(&rec, psi, &cfg.model)?;
            let at = test_steps.iter().map(|&k| (series.points[k].m, series.points[k].qv_pred)).collect();
            Ok(Some((at, series.coarse)))
        })
        .collect::<Result<_>>()?;
    let blown_up = samples.iter().filter(|s| s.is_none()).count();
    if blown_up as f64 > MAX_BLOWUP_FRACTION * spec.replicates as f64 {
        return Err(Error::TooManyBlowUps {
            blown: blown_up,
            total: spec.replicates,
        });
    }
    let ok: Vec<&(Vec<(f64, f64)>, bool)> = samples.iter().flatten().collect();
    let coarse = ok.iter().filter(|s| s.1).count();
    let times: Vec<f64> = test_steps.iter().map(|&k| all_times[k]).collect();

    let score = |i: usize, k: usize| -> IntervalScore {
        let dm: Vec<f64> = ok.iter().map(|s| s.0[k].0 - s.0[i].0).collect();
        let dv: Vec<f64> = ok
            .iter()
            .map(|s| (s.0[k].0 - s.0[i].0).powi(2) - (s.0[k].1 - s.0[i].1))
            .collect();
        IntervalScore {
            start: times[i],
            end: times[k],
            z_mean: z_of(&dm),
            z_variance: z_of(&dv),
        }
    };
    let intervals: Vec<IntervalScore> = (1..times.len()).map(|k| score(k - 1, k)).collect();
    let cumulative: Vec<IntervalScore> = (2..times.len()).map(|k| score(0, k)).collect();
    let orthogonality: Vec<f64> = (2..times.len())
        .map(|k| {
            let prod: Vec<f64> = ok
                .iter()
                .map(|s| (s.0[k].0 - s.0[k - 1].0) * (s.0[k - 1].0 - s.0[k - 2].0))
                .collect();
            z_of(&prod)
        })
        .collect();
    let max_abs_z = intervals
        .iter()
        .chain(&cumulative)
        .flat_map(|s| [s.z_mean.abs(), s.z_variance.abs()])
        .chain(orthogonality.iter().map(|z| z.abs()))
        .fold(0.0, f64::max);
    let count = ok.len() as f64;
    let mean_series = (0..times.len())
        .map(|k| {
            let m = ok.iter().map(|s| s.0[k].0).sum::<f64>() / count;
            let q = ok.iter().map(|s| s.0[k].1).sum::<f64>() / count;
            (times[k], m, q)
        })
        .collect();
    Ok(MartingaleReport {
        replicates: spec.replicates,
        blown_up,
        degenerate: false,
        intervals,
        cumulative,
        orthogonality,
        coarse,
        max_abs_z,
        passed: max_abs_z < Z_THRESHOLD,
        mean_series,
    })
}
