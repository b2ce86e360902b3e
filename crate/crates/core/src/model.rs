//! Potential, mobility, noise kernel and the sampling-based checker for the
//! structural assumptions the well-posedness theory needs.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SpectralField, Sobolev};
use crate::quadrature::integrate;

/// Polynomial with ascending coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * i as f64)
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn degree(&self) -> Option<usize> {
        self.0.iter().rposition(|&c| c != 0.0)
    }
}

/// `p/q` with cached derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Rational {
    num: Polynomial,
    den: Polynomial,
    /// `p'`, `p''`, `q'`, `q''`
    derivs: Box<[Polynomial; 4]>,
}

impl Rational {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let den = Polynomial(den);
        if den.is_zero() {
            return Err(Error::InvalidParameter("rational denominator is zero".into()));
        }
        let num = Polynomial(num);
        let derivs = Box::new([
            num.derivative(),
            num.derivative().derivative(),
            den.derivative(),
            den.derivative().derivative(),
        ]);
        Ok(Self { num, den, derivs })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::new(coeffs, vec![1.0]).expect("unit denominator")
    }

    pub fn numerator(&self) -> &Polynomial {
        &self.num
    }

    pub fn denominator(&self) -> &Polynomial {
        &self.den
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.num.eval(x) / self.den.eval(x)
    }

    /// Value, first and second derivative.
    pub fn eval3(&self, x: f64) -> (f64, f64, f64) {
        let (p, q) = (self.num.eval(x), self.den.eval(x));
        let d = &self.derivs;
        let (dp, ddp, dq, ddq) = (d[0].eval(x), d[1].eval(x), d[2].eval(x), d[3].eval(x));
        let f = p / q;
        let df = (dp * q - p * dq) / (q * q);
        let ddf = (ddp * q - p * ddq) / (q * q) - 2.0 * dq * df / q;
        (f, df, ddf)
    }
}

/// Double-well type potential `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    name: String,
    w: Rational,
    /// `W'' ≥ 1/C` is expected outside `[-convex_edge, convex_edge]`.
    convex_edge: f64,
}

impl Potential {
    /// `W(u) = ¼(u² - 1)²`.
    pub fn double_well() -> Self {
        Self {
            name: "double_well".into(),
            w: Rational::polynomial(vec![0.25, 0.0, -0.5, 0.0, 0.25]),
            convex_edge: 1.0,
        }
    }

    pub fn polynomial(coeffs: Vec<f64>, convex_edge: f64) -> Self {
        Self {
            name: "polynomial".into(),
            w: Rational::polynomial(coeffs),
            convex_edge,
        }
    }

    /// `W ≡ 0`; used by linear reference runs.
    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            w: Rational::polynomial(vec![0.0]),
            convex_edge: 0.0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn convex_edge(&self) -> f64 {
        self.convex_edge
    }

    pub fn is_zero(&self) -> bool {
        self.w.numerator().is_zero()
    }

    pub fn value(&self, u: f64) -> f64 {
        self.w.eval(u)
    }

    pub fn d1(&self, u: f64) -> f64 {
        self.w.eval3(u).1
    }

    pub fn d2(&self, u: f64) -> f64 {
        self.w.eval3(u).2
    }
}

/// `W_ℓ`: equal to `W` on `[-ℓ, ℓ]`, second-order Taylor polynomial of `W`
/// at the nearer endpoint beyond it.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedPotential {
    base: Potential,
    level: f64,
    plus: (f64, f64, f64),
    minus: (f64, f64, f64),
}

impl TruncatedPotential {
    pub fn new(base: Potential, level: f64) -> Result<Self> {
        if !(level > 0.0) || !level.is_finite() {
            return Err(Error::InvalidParameter(format!("truncation level {level} must be positive")));
        }
        let plus = base.w.eval3(level);
        let minus = base.w.eval3(-level);
        if !base.is_zero() {
            let curvature = plus.2.min(minus.2);
            if level < base.convex_edge || curvature <= 0.0 {
                return Err(Error::TruncationInNonConvexRegion { level, curvature });
            }
        }
        Ok(Self {
            base,
            level,
            plus,
            minus,
        })
    }

    pub fn base(&self) -> &Potential {
        &self.base
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn value(&self, u: f64) -> f64 {
        if u > self.level {
            let (w, dw, ddw) = self.plus;
            let h = u - self.level;
            w + dw * h + 0.5 * ddw * h * h
        } else if u < -self.level {
            let (w, dw, ddw) = self.minus;
            let h = u + self.level;
            w + dw * h + 0.5 * ddw * h * h
        } else {
            self.base.value(u)
        }
    }

    pub fn d1(&self, u: f64) -> f64 {
        if u > self.level {
            self.plus.1 + self.plus.2 * (u - self.level)
        } else if u < -self.level {
            self.minus.1 + self.minus.2 * (u + self.level)
        } else {
            self.base.d1(u)
        }
    }

    pub fn d2(&self, u: f64) -> f64 {
        if u > self.level {
            self.plus.2
        } else if u < -self.level {
            self.minus.2
        } else {
            self.base.d2(u)
        }
    }

    /// Global Lipschitz constant of `W'_ℓ`: `max |W''|` over `[-ℓ, ℓ]`,
    /// sampled densely (the tails have constant curvature equal to the
    /// endpoint values, which are included).
    pub fn lipschitz_constant(&self) -> f64 {
        let n = 20_000;
        (0..=n)
            .map(|i| -self.level + 2.0 * self.level * i as f64 / n as f64)
            .map(|u| self.base.d2(u).abs())
            .fold(0.0, f64::max)
    }
}

type ClosedForm = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Mobility `σ`, bounded and uniformly positive.
#[derive(Clone)]
pub struct Mobility {
    name: String,
    sigma: Rational,
    inf_sigma: f64,
    sup_sigma: f64,
    closed_h: Option<ClosedForm>,
}

impl fmt::Debug for Mobility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mobility")
            .field("name", &self.name)
            .field("sigma", &self.sigma)
            .field("inf_sigma", &self.inf_sigma)
            .field("sup_sigma", &self.sup_sigma)
            .field("closed_h", &self.closed_h.is_some())
            .finish()
    }
}

impl PartialEq for Mobility {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.sigma == other.sigma
    }
}

const MOBILITY_BOUND_RANGE: f64 = 100.0;
const MOBILITY_BOUND_SAMPLES: usize = 100_001;

impl Mobility {
    /// `σ(u) = 1 + 1/(1+u²)`, with `h(u) = u - atan(u/√2)/√2`.
    pub fn default_mobility() -> Self {
        let s2 = std::f64::consts::SQRT_2;
        Self {
            name: "default".into(),
            sigma: Rational::new(vec![2.0, 0.0, 1.0], vec![1.0, 0.0, 1.0]).expect("nonzero denominator"),
            inf_sigma: 1.0,
            sup_sigma: 2.0,
            closed_h: Some(Arc::new(move |u| u - (u / s2).atan() / s2)),
        }
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("constant mobility {c} must be positive")));
        }
        Ok(Self {
            name: "constant".into(),
            sigma: Rational::polynomial(vec![c]),
            inf_sigma: c,
            sup_sigma: c,
            closed_h: Some(Arc::new(move |u| u / c)),
        })
    }

    /// General rational mobility; `inf σ` and `sup σ` are estimated by dense
    /// sampling on `[-100, 100]`.
    pub fn rational(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let sigma = Rational::new(num, den)?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..MOBILITY_BOUND_SAMPLES {
            let u = -MOBILITY_BOUND_RANGE + 2.0 * MOBILITY_BOUND_RANGE * i as f64 / (MOBILITY_BOUND_SAMPLES - 1) as f64;
            let s = sigma.eval(u);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        Ok(Self {
            name: "rational".into(),
            sigma,
            inf_sigma: lo,
            sup_sigma: hi,
            closed_h: None,
        })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        let mut m = Self::rational(coeffs, vec![1.0])?;
        m.name = "polynomial".into();
        Ok(m)
    }

    /// Registers a closed form for `h`, cross-checked against quadrature.
    pub fn with_closed_h(mut self, h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        for u in [-3.0, -0.5, 0.7, 2.0, 5.0] {
            let quad = self.h_quadrature(u)?;
            if (h(u) - quad).abs() > 1e-9 * (1.0 + quad.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "closed-form h({u}) = {} disagrees with quadrature {quad}",
                    h(u)
                )));
            }
        }
        self.closed_h = Some(Arc::new(h));
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inf_sigma(&self) -> f64 {
        self.inf_sigma
    }

    pub fn sup_sigma(&self) -> f64 {
        self.sup_sigma
    }

    /// `max{sup σ, 1/inf σ}`.
    pub fn abh_constant(&self) -> f64 {
        self.sup_sigma.max(1.0 / self.inf_sigma)
    }

    pub fn is_constant(&self) -> bool {
        self.sigma.numerator().degree().unwrap_or(0) == 0 && self.sigma.denominator().degree().unwrap_or(0) == 0
    }

    pub fn value(&self, u: f64) -> f64 {
        self.sigma.eval(u)
    }

    pub fn d1(&self, u: f64) -> f64 {
        self.sigma.eval3(u).1
    }

    pub fn d2(&self, u: f64) -> f64 {
        self.sigma.eval3(u).2
    }

    /// `h(u) = ∫₀^u dr/σ(r)`.
    pub fn h(&self, u: f64) -> Result<f64> {
        match &self.closed_h {
            Some(h) => Ok(h(u)),
            None => self.h_quadrature(u),
        }
    }

    pub fn h_quadrature(&self, u: f64) -> Result<f64> {
        integrate(|r| 1.0 / self.sigma.eval(r), 0.0, u, 1e-12)
    }
}

/// Spectrum `ĵ(k) = amplitude · (1 + 4π²|k|²)^{-r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseKernel {
    pub amplitude: f64,
    pub decay_exponent: f64,
}

impl Default for NoiseKernel {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            decay_exponent: 1.5,
        }
    }
}

impl NoiseKernel {
    pub fn new(amplitude: f64, decay_exponent: f64) -> Self {
        Self {
            amplitude,
            decay_exponent,
        }
    }

    /// `j = 0`.
    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    pub fn spectrum(&self, k_sq: f64) -> f64 {
        self.amplitude * Sobolev(-self.decay_exponent).weight(k_sq)
    }

    pub fn to_field(&self, dim: usize, n: usize) -> Result<SpectralField> {
        Ok(SpectralField::zeros(dim, n)?.fill_symbol(|k2| self.spectrum(k2)))
    }

    /// `Σ_k (1+4π²|k|²) ĵ(k)²` over the modes of an `N^d` grid.
    pub fn h1_sum(&self, dim: usize, n: usize) -> Result<f64> {
        let f = self.to_field(dim, n)?;
        Ok(f.sobolev_norm_sq(Sobolev::H1))
    }

    /// Summability threshold `(d+2)/4` for the `H¹` kernel sum.
    pub fn admissible(&self, dim: usize) -> bool {
        self.is_zero() || self.decay_exponent > (dim as f64 + 2.0) / 4.0
    }
}

/// Parameters of the sampling-based assumption check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub range: (f64, f64),
    pub samples: usize,
    pub dim: usize,
    pub grid: usize,
}

impl Default for AssumptionCheck {
    fn default() -> Self {
        Self {
            range: (-20.0, 20.0),
            samples: 100_000,
            dim: 3,
            grid: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionItem {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Smallest constant witnessed on the sample.
    pub constant: f64,
    /// Sample point at which the item fails, or where the constant is attained.
    pub witness: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub items: Vec<AssumptionItem>,
    pub kernel_passed: bool,
    pub kernel_h1_sum: f64,
    pub kernel_h1_sum_refined: f64,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|i| i.passed) && self.kernel_passed
    }

    pub fn item(&self, id: u8) -> &AssumptionItem {
        &self.items[id as usize - 1]
    }
}

/// Growth exponents above the allowed degree by more than this fail.
const TAIL_EXPONENT_SLACK: f64 = 0.25;

/// `log₂(|f(R)| / |f(R/2)|)`, maximised over both tails.
fn tail_exponent(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let one = |r: f64| {
        let (a, b) = (f(r).abs(), f(r / 2.0).abs());
        if a == 0.0 && b == 0.0 {
            f64::NEG_INFINITY
        } else {
            (a / b.max(f64::MIN_POSITIVE)).log2()
        }
    };
    one(hi).max(one(lo))
}

/// Evaluates each structural assumption on `W` and `σ` over a dense sample,
/// plus `H¹` summability of the kernel.
pub fn check_assumptions(p: &Potential, m: &Mobility, j: &NoiseKernel, check: &AssumptionCheck) -> AssumptionReport {
    let (lo, hi) = check.range;
    let count = check.samples.max(2);
    let mut xs: Vec<f64> = (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect();
    xs.extend([0.0, p.convex_edge, -p.convex_edge]);

    let argmax = |f: &dyn Fn(f64) -> f64| {
        xs.iter()
            .map(|&u| (u, f(u)))
            .fold((0.0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
    };
    let argmin = |f: &dyn Fn(f64) -> f64| {
        xs.iter()
            .map(|&u| (u, f(u)))
            .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    };

    let mut items = Vec::with_capacity(6);

    // 1: W ≥ 0, uniformly convex outside K
    {
        let (u_neg, w_min) = argmin(&|u| p.value(u));
        let outside: Vec<f64> = xs.iter().copied().filter(|u| u.abs() > p.convex_edge).collect();
        let (u_cvx, curv) = outside
            .iter()
            .map(|&u| (u, p.d2(u)))
            .fold((0.0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
        let nonneg = w_min >= -1e-12;
        let convex = curv > 0.0;
        items.push(AssumptionItem {
            id: 1,
            name: "W nonnegative and uniformly convex at infinity",
            passed: nonneg && convex,
            constant: if convex { 1.0 / curv } else { f64::INFINITY },
            witness: if !nonneg { u_neg } else { u_cvx },
            detail: format!(
                "min W = {w_min:.3e}; min W'' = {curv:.6} outside |u| > {}",
                p.convex_edge
            ),
        });
    }

    // 2-4: growth bounds
    let growth = |id: u8, name: &'static str, f: &dyn Fn(f64) -> f64, bound: &dyn Fn(f64) -> f64, allowed: f64, tail: f64| {
        let (u, c) = argmax(&|u| f(u).abs() / bound(u));
        let passed = c.is_finite() && tail <= allowed + TAIL_EXPONENT_SLACK;
        AssumptionItem {
            id,
            name,
            passed,
            constant: c,
            witness: if passed { u } else if tail.is_finite() { hi } else { u },
            detail: format!("tail growth exponent {tail:.3} (allowed {allowed})"),
        }
    };
    let tail_w = tail_exponent(|u| p.value(u), lo, hi);
    let tail_dw = tail_exponent(|u| p.d1(u), lo, hi);
    let tail_ddw = tail_exponent(|u| p.d2(u), lo, hi);
    items.push(growth(2, "W has at most quartic growth", &|u| p.value(u), &|u| u.powi(4) + 1.0, 4.0, tail_w));
    items.push(growth(3, "W' has at most cubic growth", &|u| p.d1(u), &|u| u.abs().powi(3) + 1.0, 3.0, tail_dw));
    {
        // |W''| ≲ √W + 1: exponent of W'' at most half that of W
        let rel = if tail_w.is_finite() { tail_ddw - tail_w.max(0.0) / 2.0 } else { tail_ddw };
        items.push(growth(4, "W'' bounded by sqrt(W) + 1", &|u| p.d2(u), &|u| p.value(u).max(0.0).sqrt() + 1.0, 0.0, rel));
    }

    // 5: σ bounded and uniformly positive
    {
        let (u_min, s_min) = argmin(&|u| m.value(u));
        let (u_max, s_max) = argmax(&|u| m.value(u));
        let tail = tail_exponent(|u| m.value(u), lo, hi);
        let positive = s_min > 1e-12 * s_max.abs().max(1.0);
        let bounded = tail <= TAIL_EXPONENT_SLACK;
        items.push(AssumptionItem {
            id: 5,
            name: "sigma bounded and uniformly positive",
            passed: positive && bounded,
            constant: if positive { s_max.max(1.0 / s_min) } else { f64::INFINITY },
            witness: if !positive { u_min } else if !bounded { hi } else { u_max },
            detail: format!("inf sigma = {s_min:.6}, sup sigma = {s_max:.6}, tail exponent {tail:.3}"),
        });
    }

    // 6: σ', σ'' bounded
    {
        let (u1, c1) = argmax(&|u| m.d1(u).abs());
        let (u2, c2) = argmax(&|u| m.d2(u).abs());
        let tail = tail_exponent(|u| m.d1(u), lo, hi).max(tail_exponent(|u| m.d2(u), lo, hi));
        let passed = c1.is_finite() && c2.is_finite() && tail <= TAIL_EXPONENT_SLACK;
        items.push(AssumptionItem {
            id: 6,
            name: "sigma' and sigma'' bounded",
            passed,
            constant: c1.max(c2),
            witness: if passed { if c1 >= c2 { u1 } else { u2 } } else { hi },
            detail: format!("max |sigma'| = {c1:.6}, max |sigma''| = {c2:.6}, tail exponent {tail:.3}"),
        });
    }

    let coarse = j.h1_sum(check.dim, check.grid).unwrap_or(f64::INFINITY);
    let fine = j.h1_sum(check.dim, 2 * check.grid).unwrap_or(f64::INFINITY);
    let stable = coarse == 0.0 || (fine - coarse) / coarse < 0.01;
    AssumptionReport {
        items,
        kernel_passed: stable && fine.is_finite(),
        kernel_h1_sum: coarse,
        kernel_h1_sum_refined: fine,
    }
}

/// Default triple: double well, `σ = 1 + 1/(1+u²)`, `ĵ = (1+4π²|k|²)^{-3/2}`.
pub fn default_model() -> (Potential, Mobility, NoiseKernel) {
    (Potential::double_well(), Mobility::default_mobility(), NoiseKernel::default())
}

/// Bundle passed around by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub potential: Potential,
    pub mobility: Mobility,
    pub kernel: NoiseKernel,
}

impl Default for Model {
    fn default() -> Self {
        let (potential, mobility, kernel) = default_model();
        Self {
            potential,
            mobility,
            kernel,
        }
    }
}
