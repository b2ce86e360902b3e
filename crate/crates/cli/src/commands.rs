//! Subcommand implementations. Each writes its files into the output
//! directory and returns the verdicts to print.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use macf_core::experiments::{
    coupling_experiment, martingale_test, refinement_study, run_ensemble, CouplingReport, MartingaleTestSpec, NoiseKey,
};
use macf_core::diagnostics::MartingalePoint;
use macf_core::model::check_assumptions;
use macf_core::scheme::RunOptions;
use macf_core::semigroup::{
    commutator_norm, dissipativity_margin, estimate_m0, evolve, random_probes, resolvent_solve, FrozenOperator,
};
use macf_core::{Error as CoreError, Scheme, SchemeConfig, Sobolev, SpectralField};
use serde::Serialize;

use crate::config::{Config, ConfigError};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    BlowUp(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::BlowUp(_) => 3,
            Self::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::BlowUp(m) => f.write_str(m),
            Self::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(format!("i/o: {e}"))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::BlowUp { .. } | CoreError::TooManyBlowUps { .. } => Self::BlowUp(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Core errors caused by a section's values are reported against its key.
fn keyed(key: &'static str) -> impl Fn(CoreError) -> CliError {
    move |e| match e {
        CoreError::InvalidParameter(_) | CoreError::Incompatible(_) | CoreError::StepRange { .. } => {
            CliError::Config(ConfigError::new(key, e))
        }
        other => other.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub metric: &'static str,
    pub value: f64,
}

impl Verdict {
    fn new(name: impl Into<String>, pass: bool, metric: &'static str, value: f64) -> Self {
        Self {
            name: name.into(),
            pass,
            metric,
            value,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "VERDICT {} {status} {}={}", self.name, self.metric, self.value)
    }
}

/// Output directory plus the files written so far.
pub struct Run {
    pub config: Config,
    pub dir: PathBuf,
    pub outputs: Vec<PathBuf>,
    pub steps: Option<u64>,
    pub quiet: bool,
}

impl Run {
    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
        self.outputs.push(path);
        Ok(BufWriter::new(file))
    }

    fn info(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> CliResult<&'a T> {
        s.as_ref().ok_or_else(|| CliError::Config(ConfigError::new(name, "section required by this command is missing")))
    }
}

fn ndjson<T: Serialize>(w: &mut impl Write, value: &T) -> CliResult<()> {
    serde_json::to_writer(&mut *w, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn csv_row(w: &mut impl Write, fields: &[String]) -> CliResult<()> {
    writeln!(w, "{}", fields.join(","))?;
    Ok(())
}

fn csv_text(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn simulate(run: &mut Run) -> CliResult<Vec<Verdict>> {
    let cfg = run.config.scheme_config()?;
    let ic = run.config.initial_condition()?;
    let times = run.config.sample_times(&cfg)?;
    let scheme = Scheme::new(cfg.clone())?;
    let path = cfg.noise_path(run.config.noise.seed, run.config.noise.replicate)?;
    let u0 = ic.field(cfg.dim, cfg.grid)?;
    run.steps = Some(cfg.total_steps() as u64);
    let rec = scheme.run(&u0, &path, &times, RunOptions::default())?;
    let mut w = run.create("trajectory.ndjson")?;
    for r in rec.records() {
        ndjson(&mut w, r)?;
    }
    w.flush()?;
    let mut w = run.create("final.ckpt")?;
    rec.final_state().write_checkpoint(&mut w)?;
    w.flush()?;
    run.info(format!(
        "simulated {} steps; max sup|u| = {:.4}, dissipation = {:.6}",
        cfg.total_steps(),
        rec.max_sup_norm(),
        rec.dissipation()
    ));
    Ok(Vec::new())
}

fn spread(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

pub fn ensemble(run: &mut Run) -> CliResult<Vec<Verdict>> {
    let section = run.section(&run.config.ensemble, "ensemble")?.clone();
    let base = run.config.scheme_config()?;
    let ic = run.config.initial_condition()?;
    let times = run.config.sample_times(&base)?;
    let levels = if section.levels.is_empty() { vec![base.outer_steps] } else { section.levels.clone() };
    let mut rows = run.create("ensemble.csv")?;
    csv_row(
        &mut rows,
        &[
            "n",
            "replicate",
            "blown_up",
            "sup_free_energy",
            "sup_regularized_free_energy",
            "willmore_integral",
            "dissipation",
            "sup_h1",
        ]
        .map(String::from),
    )?;
    let mut moments = run.create("moments.csv")?;
    csv_row(&mut moments, &["n", "quantity", "p", "mean", "se"].map(String::from))?;
    let mut sup_f = [Vec::new(), Vec::new()];
    let mut willmore = [Vec::new(), Vec::new()];
    let mut finite = true;
    let mut blown = 0;
    let mut steps = 0u64;
    for &n in &levels {
        let cfg = SchemeConfig {
            outer_steps: n,
            ..base.clone()
        };
        cfg.validate().map_err(keyed("ensemble.levels"))?;
        Scheme::new(cfg.clone())?.sample_steps(&times).map_err(keyed("ensemble.levels"))?;
        let rep = run_ensemble(&cfg, &ic, run.config.noise.seed, section.replicates, &times).map_err(keyed("ensemble.replicates"))?;
        steps += (cfg.total_steps() * section.replicates) as u64;
        blown += rep.blown_up;
        for s in &rep.summaries {
            csv_row(
                &mut rows,
                &[
                    n.to_string(),
                    s.replicate.to_string(),
                    s.blown_up.to_string(),
                    s.sup_free_energy.to_string(),
                    s.sup_regularized_free_energy.to_string(),
                    s.willmore_integral.to_string(),
                    s.dissipation.to_string(),
                    s.sup_h1.to_string(),
                ],
            )?;
        }
        for (name, ms) in [
            ("sup_regularized_free_energy", &rep.sup_regularized_free_energy),
            ("sup_free_energy", &rep.sup_free_energy),
            ("willmore_integral", &rep.willmore_integral),
            ("dissipation", &rep.dissipation),
        ] {
            for m in ms {
                finite &= m.mean.is_finite();
                csv_row(&mut moments, &[n.to_string(), name.into(), m.p.to_string(), m.mean.to_string(), m.se.to_string()])?;
            }
        }
        for p in 0..2 {
            sup_f[p].push(rep.sup_regularized_free_energy[p].mean);
            willmore[p].push(rep.willmore_integral[p].mean);
        }
        run.info(format!(
            "n = {n}: E sup F_le = {:.6} ± {:.2e}, blown up {}",
            rep.sup_regularized_free_energy[0].mean, rep.sup_regularized_free_energy[0].se, rep.blown_up
        ));
    }
    rows.flush()?;
    moments.flush()?;
    run.steps = Some(steps);
    let mut verdicts = vec![Verdict::new("ensemble-moments-finite", finite, "blown_up", blown as f64)];
    if levels.len() > 1 {
        let rf = spread(&sup_f[0]).max(spread(&sup_f[1]));
        let rw = spread(&willmore[0]).max(spread(&willmore[1]));
        verdicts.push(Verdict::new("moment-uniformity-sup-energy", rf <= section.max_ratio, "max_ratio", rf));
        verdicts.push(Verdict::new("moment-uniformity-willmore", rw <= section.max_ratio, "max_ratio", rw));
    }
    Ok(verdicts)
}

#[derive(Serialize)]
struct SeriesLine<'a> {
    label_a: &'a str,
    label_b: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pair: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<&'static str>,
    t: f64,
    psi: f64,
    l2: f64,
}

fn write_series(w: &mut impl Write, rep: &CouplingReport, pair: Option<u64>, noise: Option<&'static str>) -> CliResult<()> {
    for p in &rep.series {
        ndjson(
            w,
            &SeriesLine {
                label_a: &rep.label_a,
                label_b: &rep.label_b,
                pair,
                noise,
                t: p.t,
                psi: p.psi,
                l2: p.l2,
            },
        )?;
    }
    Ok(())
}

pub fn converge(run: &mut Run) -> CliResult<Vec<Verdict>> {
    let section = run.section(&run.config.converge, "converge")?.clone();
    let axis = section.axis()?;
    let base = run.config.scheme_config()?;
    let ic = run.config.initial_condition()?;
    let times = run.config.sample_times(&base)?;
    let key = NoiseKey {
        seed: run.config.noise.seed,
        replicate: run.config.noise.replicate,
    };
    let reports = refinement_study(&base, axis, &section.levels, &ic, key, &times).map_err(keyed("converge.levels"))?;
    let mut series = run.create("converge.ndjson")?;
    let mut table = run.create("converge.csv")?;
    csv_row(&mut table, &["level_a", "level_b", "sup_l2", "sup_psi", "final_psi"].map(String::from))?;
    for r in &reports {
        write_series(&mut series, r, None, None)?;
        csv_row(
            &mut table,
            &[
                csv_text(&r.label_a),
                csv_text(&r.label_b),
                r.sup_l2.to_string(),
                r.sup_psi.to_string(),
                r.final_psi.to_string(),
            ],
        )?;
        run.info(format!("{} vs {}: sup L2 distance {:.4e}", r.label_a, r.label_b, r.sup_l2));
    }
    series.flush()?;
    table.flush()?;
    let d: Vec<f64> = reports.iter().map(|r| r.sup_l2).collect();
    let all_zero = d.iter().all(|x| *x == 0.0);
    let ratio = if all_zero {
        0.0
    } else {
        d.windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { f64::INFINITY })
            .fold(0.0, f64::max)
    };
    let pass = all_zero || ratio < 1.0;
    Ok(vec![Verdict::new(format!("converge-{}", axis.name()), pass, "max_step_ratio", ratio)])
}

pub fn couple(run: &mut Run) -> CliResult<Vec<Verdict>> {
    let section = run.section(&run.config.couple, "couple")?.clone();
    let a = run.config.scheme_config()?;
    let b = section.other_config(&a)?;
    let ic = run.config.initial_condition()?;
    let times = run.config.sample_times(&a)?;
    Scheme::new(b.clone())?.sample_steps(&times).map_err(keyed("couple.other"))?;
    if section.pairs == 0 {
        return Err(ConfigError::new("couple.pairs", "must be at least 1").into());
    }
    let seed = run.config.noise.seed;
    let mut series = run.create("couple.ndjson")?;
    let mut table = run.create("couple.csv")?;
    csv_row(&mut table, &["pair", "shared_sup_psi", "independent_sup_psi", "shared_sup_l2", "independent_sup_l2"].map(String::from))?;
    let (mut shared, mut independent) = (0.0, 0.0);
    for r in 0..section.pairs {
        let key = NoiseKey { seed, replicate: r };
        let other = NoiseKey {
            seed: seed.wrapping_add(1),
            replicate: r,
        };
        let s = coupling_experiment(&a, key, &b, key, &ic, &times).map_err(keyed("couple.other"))?;
        let i = coupling_experiment(&a, key, &b, other, &ic, &times).map_err(keyed("couple.other"))?;
        write_series(&mut series, &s, Some(r), Some("shared"))?;
        write_series(&mut series, &i, Some(r), Some("independent"))?;
        csv_row(
            &mut table,
            &[r.to_string(), s.sup_psi.to_string(), i.sup_psi.to_string(), s.sup_l2.to_string(), i.sup_l2.to_string()],
        )?;
        shared += s.sup_psi;
        independent += i.sup_psi;
    }
    series.flush()?;
    table.flush()?;
    let ratio = shared / independent;
    run.info(format!(
        "mean sup psi: shared {:.4e}, independent {:.4e}",
        shared / section.pairs as f64,
        independent / section.pairs as f64
    ));
    Ok(vec![Verdict::new("coupling-separation", ratio <= section.max_ratio, "ratio", ratio)])
}

pub fn mgtest(run: &mut Run) -> CliResult<Vec<Verdict>> {
    let section = run.section(&run.config.mgtest, "mgtest")?.clone();
    let cfg = run.config.scheme_config()?;
    let ic = run.config.initial_condition()?;
    let psi = section.test_function(cfg.dim, cfg.grid)?;
    let test_times = section.test_times(cfg.horizon)?;
    Scheme::new(cfg.clone())?
        .sample_steps(&test_times)
        .map_err(keyed("mgtest.test_times"))?;
    let reuse = section.reuse();
    if let Some(r) = reuse {
        if r.target + r.len > cfg.total_steps() || r.source + r.len > cfg.total_steps() {
            return Err(ConfigError::new("mgtest.reuse", format!("steps exceed the {} steps of the run", cfg.total_steps())).into());
        }
    }
    let spec = MartingaleTestSpec {
        seed: run.config.noise.seed,
        replicates: section.replicates,
        test_times,
        reuse,
    };
    let rep = martingale_test(&cfg, &ic, &psi, &spec).map_err(keyed("mgtest"))?;
    run.steps = Some((cfg.total_steps() * section.replicates) as u64);
    let mut w = run.create("mgtest.csv")?;
    csv_row(&mut w, &["kind", "start", "end", "z_mean", "z_variance"].map(String::from))?;
    for (kind, scores) in [("interval", &rep.intervals), ("cumulative", &rep.cumulative)] {
        for s in scores {
            csv_row(&mut w, &[kind.into(), s.start.to_string(), s.end.to_string(), s.z_mean.to_string(), s.z_variance.to_string()])?;
        }
    }
    for (i, z) in rep.orthogonality.iter().enumerate() {
        let (s, e) = (&rep.intervals[i], &rep.intervals[i + 1]);
        csv_row(&mut w, &["orthogonality".into(), s.start.to_string(), e.end.to_string(), z.to_string(), String::new()])?;
    }
    w.flush()?;
    let mut series = run.create("mgtest.ndjson")?;
    for &(t, m, qv_pred) in &rep.mean_series {
        ndjson(&mut series, &MartingalePoint { t, m, qv_pred })?;
    }
    series.flush()?;
    run.info(format!(
        "{} replicates, {} blown up, {} with coarse drift quadrature",
        rep.replicates, rep.blown_up, rep.coarse
    ));
    Ok(vec![Verdict::new("martingale", rep.passed, "max_abs_z", rep.max_abs_z)])
}

/// Least-squares slope and its standard error.
fn fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    if x.len() < 3 {
        return (slope, 0.0);
    }
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (rss / (n - 2.0) / sxx).sqrt())
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

pub fn semigroup(run: &mut Run) -> CliResult<Vec<Verdict>> {
    let s = run.section(&run.config.semigroup, "semigroup")?.clone();
    let cfg = run.config.scheme_config()?;
    let v = run.config.initial_condition()?.field(cfg.dim, cfg.grid)?;
    let mob = &cfg.model.mobility;
    let seed = run.config.noise.seed;
    if !(s.delta >= 0.0) {
        return Err(ConfigError::new("semigroup.delta", "must be non-negative").into());
    }
    if s.probes < 16 {
        return Err(ConfigError::new("semigroup.probes", "need at least 16 probes").into());
    }
    if s.m.iter().any(|m| !(*m > 0.0)) || s.m.is_empty() {
        return Err(ConfigError::new("semigroup.m", "values must be positive").into());
    }
    if s.deltas.len() < 2 || s.deltas.iter().any(|d| !(*d > 0.0)) || !strictly_decreasing(&s.deltas) {
        return Err(ConfigError::new("semigroup.deltas", "need at least two positive, strictly decreasing values").into());
    }
    let op = FrozenOperator::new(&v, s.delta, mob)?;
    let est = estimate_m0(&op, s.probes, seed)?;
    let m0 = est.certified;
    let probes = random_probes(cfg.dim, cfg.grid, s.probes, seed.wrapping_add(1))?;
    let mut w = run.create("semigroup-summary.csv")?;
    csv_row(&mut w, &["quantity", "parameter", "value"].map(String::from))?;
    let row = |w: &mut BufWriter<File>, q: &str, p: f64, v: f64| csv_row(w, &[q.into(), p.to_string(), v.to_string()]);
    row(&mut w, "m0_certified", s.delta, m0)?;
    row(&mut w, "m0_rayleigh_max", s.delta, est.rayleigh_max)?;
    row(&mut w, "m0_proxy", s.delta, est.proxy)?;

    let mut margin = f64::INFINITY;
    for u in &probes {
        for &m in &s.m {
            margin = margin.min(dissipativity_margin(&op, m0, m, u)?);
        }
    }
    row(&mut w, "min_dissipativity_margin", s.delta, margin)?;
    let mut resolvent = 0.0f64;
    for f in probes.iter().take(8) {
        for &m in &s.m {
            let u = resolvent_solve(&op, m, m0, f)?;
            let r = m * u.sobolev_norm(Sobolev::H1) / f.sobolev_norm(Sobolev::H1);
            row(&mut w, "resolvent_ratio", m, r)?;
            resolvent = resolvent.max(r);
        }
    }
    let growth_ratio = |op: &FrozenOperator, m0: f64| -> CliResult<f64> {
        let mut g = 0.0f64;
        for u in probes.iter().take(16) {
            let out = evolve(op, u, s.t, s.steps)?;
            g = g.max(out.sobolev_norm(Sobolev::H1) / ((m0 * s.t).exp() * u.sobolev_norm(Sobolev::H1)));
        }
        Ok(g)
    };
    let mut growth = growth_ratio(&op, m0)?;
    row(&mut w, "max_growth_ratio", s.t, growth)?;

    let mut k = [0i64; 3];
    k[0] = 1;
    let mut k3 = [0i64; 3];
    k3[0] = 3;
    let u0 = SpectralField::from_cosines(cfg.dim, cfg.grid, &[(&k[..cfg.dim], 1.0), (&k3[..cfg.dim], 0.3)])?;
    let exact_op = FrozenOperator::new(&v, 0.0, mob)?;
    let reference = evolve(&exact_op, &u0, s.t, s.steps)?;
    let au = exact_op.apply(&u0)?;

    let mut table = run.create("semigroup.csv")?;
    csv_row(
        &mut table,
        &["delta", "commutator_estimate", "m0", "max_growth_ratio", "operator_error", "semigroup_error"].map(String::from),
    )?;
    let (mut comm, mut s_err, mut a_err) = (Vec::new(), Vec::new(), Vec::new());
    for &d in &s.deltas {
        let c = commutator_norm(&v, d, mob, 8, seed)?.estimate;
        let opd = FrozenOperator::new(&v, d, mob)?;
        let m0d = estimate_m0(&opd, s.probes, seed)?.certified;
        let gd = growth_ratio(&opd, m0d)?;
        growth = growth.max(gd);
        let se = (&evolve(&opd, &u0, s.t, s.steps)? - &reference).sobolev_norm(Sobolev::H1);
        let ae = (&opd.apply(&u0)? - &au).sobolev_norm(Sobolev::H1);
        csv_row(&mut table, &[d, c, m0d, gd, ae, se].map(|x| x.to_string()))?;
        comm.push(c);
        s_err.push(se);
        a_err.push(ae);
    }
    table.flush()?;
    let positive = comm.iter().all(|c| *c > 0.0);
    let (slope, se) = if positive {
        let lx: Vec<f64> = s.deltas.iter().map(|d| d.ln()).collect();
        let ly: Vec<f64> = comm.iter().map(|c| c.ln()).collect();
        fit(&lx, &ly)
    } else {
        (f64::NAN, f64::NAN)
    };
    row(&mut w, "commutator_slope", f64::NAN, slope)?;
    row(&mut w, "commutator_slope_se", f64::NAN, se)?;
    w.flush()?;
    run.info(format!("certified m0 = {m0:.6} (Rayleigh max {:.6}, proxy {:.3})", est.rayleigh_max, est.proxy));

    let commutator_pass = positive && strictly_decreasing(&comm) && slope + se >= 0.125;
    let convergence_pass = strictly_decreasing(&s_err) && strictly_decreasing(&a_err);
    Ok(vec![
        Verdict::new("dissipativity", margin >= -1e-10, "min_margin", margin),
        Verdict::new("resolvent-bound", resolvent <= 1.0 + 1e-8, "max_ratio", resolvent),
        Verdict::new("semigroup-growth", growth <= 1.0 + s.growth_tol, "max_ratio", growth),
        Verdict::new("commutator-decay", commutator_pass, "slope", slope),
        Verdict::new("operator-convergence", convergence_pass, "final_semigroup_error", *s_err.last().unwrap_or(&f64::NAN)),
    ])
}

pub fn check_model(run: &mut Run) -> CliResult<Vec<Verdict>> {
    let model = run.config.model()?;
    let check = run.config.assumption_check()?;
    let report = check_assumptions(&model.potential, &model.mobility, &model.kernel, &check);
    let mut w = run.create("assumptions.csv")?;
    csv_row(&mut w, &["id", "name", "passed", "constant", "witness", "detail"].map(String::from))?;
    let mut verdicts = Vec::new();
    for item in &report.items {
        csv_row(
            &mut w,
            &[
                item.id.to_string(),
                csv_text(item.name),
                item.passed.to_string(),
                item.constant.to_string(),
                item.witness.to_string(),
                csv_text(&item.detail),
            ],
        )?;
        verdicts.push(Verdict::new(format!("assumption-{}", item.id), item.passed, "constant", item.constant));
    }
    csv_row(
        &mut w,
        &[
            "kernel".into(),
            csv_text("kernel H1 sum stable under grid doubling"),
            report.kernel_passed.to_string(),
            report.kernel_h1_sum_refined.to_string(),
            String::new(),
            csv_text(&format!("{} at N = {}", report.kernel_h1_sum, check.grid)),
        ],
    )?;
    w.flush()?;
    verdicts.push(Verdict::new("kernel-h1", report.kernel_passed, "sum", report.kernel_h1_sum_refined));
    Ok(verdicts)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}
