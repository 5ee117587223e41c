//! Invariant-measure decision procedure for the reduced dynamics.
//!
//! The basic one-form `β = h_e dq^e`, `h_e = B^c_ec + B^c_ce`, decides the
//! question for kinetic systems: an invariant volume `k ω^n` exists iff `β`
//! is exact, with `k = exp f` for `df = β`.
//!
//! Coordinate density: only the mixed `dq ∧ dv` block of
//! `ω = ω_{L*} − Ξ` survives in `ω^n` because `Ξ` is semi-basic, and that
//! block is `∂²L*/∂v∂v = g̃`. Hence `ω^n ∝ det g̃ dq dv` and the invariant
//! density is `ρ = k det g̃`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chaplygin::{grid, ChaplyginSystem};
use crate::dual::{seed, Dual, Scalar};
use crate::dynamics::{integrate_with_jacobian, IntegratorConfig, ReducedField, State};
use crate::error::{Error, Result};
use crate::expr::ParsedField;
use crate::linalg::Cholesky;
use crate::reconstruction::GL5;

/// Axis-aligned sampling box in base coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Grid points per axis.
    pub samples: usize,
    /// Caller's assertion that the region of interest is simply connected.
    pub simply_connected: bool,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, samples: usize, simply_connected: bool) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return Err(Error::Invalid("region box must have positive volume".into()));
        }
        if samples == 0 {
            return Err(Error::Invalid("region needs at least one sample per axis".into()));
        }
        Ok(Region { lo, hi, samples, simply_connected })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        grid(&self.lo, &self.hi, self.samples)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| *x >= *a && *x <= *b)
    }

    pub fn descriptor(&self) -> String {
        format!(
            "box(lo={:?}, hi={:?}, samples={}, simply_connected={})",
            self.lo, self.hi, self.samples, self.simply_connected
        )
    }
}

/// `h` computed from `β` and from `g̃^ab ∂α_b/∂v^a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HValue {
    pub from_beta: f64,
    pub from_alpha: f64,
}

impl HValue {
    pub fn value(&self) -> f64 {
        self.from_beta
    }

    pub fn mismatch(&self) -> f64 {
        (self.from_beta - self.from_alpha).abs()
    }
}

pub fn h_function(sys: &ChaplyginSystem, q: &[f64], v: &[f64]) -> Result<HValue> {
    let geo = sys.geometry_at(q)?;
    Ok(HValue { from_beta: geo.h(v), from_alpha: geo.h_from_alpha(v) })
}

pub fn beta_form(sys: &ChaplyginSystem, q: &[f64]) -> Result<Vec<f64>> {
    Ok(sys.beta(q)?)
}

/// `max_{a<b} |∂_a h_b − ∂_b h_a|` at one point.
pub fn closedness_at(sys: &ChaplyginSystem, q: &[f64]) -> Result<f64> {
    let n = q.len();
    let d: Vec<Vec<f64>> = (0..n)
        .map(|a| Ok(sys.beta(&seed(q, a))?.iter().map(|x: &Dual<f64>| x.eps).collect()))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in (a + 1)..n {
            worst = worst.max((d[a][b] - d[b][a]).abs());
        }
    }
    Ok(worst)
}

pub fn closedness_residual(sys: &ChaplyginSystem, region: &Region) -> Result<f64> {
    let mut worst = 0.0f64;
    for q in region.points() {
        worst = worst.max(closedness_at(sys, &q)?);
    }
    Ok(worst)
}

/// `∫ β` along the straight segment `from → to`, composite Gauss–Legendre.
fn segment_integral<S: Scalar>(sys: &ChaplyginSystem, from: &[S], to: &[S], panels: usize) -> Result<S> {
    let mut total = S::zero();
    let d: Vec<S> = from.iter().zip(to).map(|(a, b)| *b - *a).collect();
    let m = S::from_f64(panels as f64);
    for p in 0..panels {
        for (x, w) in GL5 {
            let s = (S::from_f64(p as f64) + S::from_f64(0.5 * (x + 1.0))) / m;
            let q: Vec<S> = from.iter().zip(&d).map(|(a, dd)| *a + s * *dd).collect();
            let beta = sys.beta(&q)?;
            let dot = beta.iter().zip(&d).fold(S::zero(), |acc, (b, dd)| acc + *b * *dd);
            total = total + dot.scale(0.5 * w) / m;
        }
    }
    if !total.re().is_finite() {
        return Err(Error::QuadratureFailure);
    }
    Ok(total)
}

fn panels_for(len: f64) -> usize {
    (libm::ceil(len.abs() * 4.0) as usize).clamp(2, 4096)
}

/// Potential `f` with `df = β`, `f(base_point) = 0`, integrated along axis-parallel segments.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub base_point: Vec<f64>,
    /// Max over sampled rectangular loops of `|∮ β|`.
    pub path_independence_residual: f64,
    /// `f` at the region grid points.
    pub grid: Vec<(Vec<f64>, f64)>,
}

impl Potential {
    pub fn eval<S: Scalar>(&self, sys: &ChaplyginSystem, q: &[S]) -> Result<S> {
        let mut cur: Vec<S> = self.base_point.iter().map(|x| S::from_f64(*x)).collect();
        let mut f = S::zero();
        for a in 0..q.len() {
            let mut next = cur.clone();
            next[a] = q[a];
            // zero-length legs still carry the derivative along `a`
            let len = q[a].re() - self.base_point[a];
            let panels = if len == 0.0 { 1 } else { panels_for(len) };
            f = f + segment_integral(sys, &cur, &next, panels)?;
            cur = next;
        }
        Ok(f)
    }

    pub fn k(&self, sys: &ChaplyginSystem, q: &[f64]) -> Result<f64> {
        Ok(libm::exp(self.eval(sys, q)?))
    }
}

fn loop_integral(sys: &ChaplyginSystem, corners: &[Vec<f64>]) -> Result<f64> {
    let mut s = 0.0;
    for i in 0..corners.len() {
        let (a, b) = (&corners[i], &corners[(i + 1) % corners.len()]);
        let len = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        s += segment_integral(sys, a, b, panels_for(len))?;
    }
    Ok(s)
}

/// `∮ β` around an anticlockwise axis-aligned rectangle in the `(a, b)` plane.
pub fn rectangle_loop_integral(
    sys: &ChaplyginSystem,
    corner: &[f64],
    axes: (usize, usize),
    sa: f64,
    sb: f64,
) -> Result<f64> {
    let at = |da: f64, db: f64| {
        let mut p = corner.to_vec();
        p[axes.0] += da;
        p[axes.1] += db;
        p
    };
    loop_integral(sys, &[at(0.0, 0.0), at(sa, 0.0), at(sa, sb), at(0.0, sb)])
}

/// Max `|∮ β|` over `loops` random rectangles inside the region.
pub fn path_independence_residual(sys: &ChaplyginSystem, region: &Region, loops: usize, rng_seed: u64) -> Result<f64> {
    let n = region.dim();
    if n < 2 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut worst = 0.0f64;
    for _ in 0..loops {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let corner: Vec<f64> = (0..n).map(|i| rng.random_range(region.lo[i]..region.hi[i])).collect();
        let sa = rng.random_range(0.0..1.0) * (region.hi[a] - corner[a]);
        let sb = rng.random_range(0.0..1.0) * (region.hi[b] - corner[b]);
        worst = worst.max(rectangle_loop_integral(sys, &corner, (a, b), sa, sb)?.abs());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureOptions {
    /// Closedness and loop-exactness threshold.
    pub threshold: f64,
    /// Residual above which `β` is treated as numerically non-closed.
    pub guard: f64,
    pub loops: usize,
    pub seed: u64,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions { threshold: 1e-8, guard: 1e-4, loops: 20, seed: 0 }
    }
}

/// Build `f` from `base_point`; fails with `NotClosed` above the threshold.
pub fn beta_potential(
    sys: &ChaplyginSystem,
    region: &Region,
    base_point: &[f64],
    opts: &MeasureOptions,
) -> Result<Potential> {
    let residual = closedness_residual(sys, region)?;
    if residual > opts.threshold {
        return Err(Error::NotClosed { residual });
    }
    let pir = path_independence_residual(sys, region, opts.loops, opts.seed)?;
    let mut p = Potential { base_point: base_point.to_vec(), path_independence_residual: pir, grid: Vec::new() };
    let pts = region.points();
    let mut values = Vec::with_capacity(pts.len());
    for q in pts {
        let f = p.eval(sys, &q)?;
        values.push((q, f));
    }
    p.grid = values;
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    NoInvariantMeasure,
    InvariantMeasure,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::NoInvariantMeasure => "NoInvariantMeasure",
            Verdict::InvariantMeasure => "InvariantMeasure",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureReport {
    pub region: Region,
    pub threshold: f64,
    pub guard: f64,
    pub closedness_residual: f64,
    pub verdict: Verdict,
    /// Present iff the verdict is `InvariantMeasure`.
    pub potential: Option<Potential>,
    pub path_independence_residual: Option<f64>,
    /// `max |∂_a f − h_a|` over the grid.
    pub exactness_residual: Option<f64>,
    pub has_potential_energy: bool,
    pub reason: String,
}

impl MeasureReport {
    /// `k = exp f`.
    pub fn density_k(&self, sys: &ChaplyginSystem, q: &[f64]) -> Option<Result<f64>> {
        self.potential.as_ref().map(|p| p.k(sys, q))
    }
}

fn exactness_residual(sys: &ChaplyginSystem, p: &Potential, pts: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for q in pts {
        let beta = beta_form(sys, q)?;
        for (a, b) in beta.iter().enumerate() {
            let df = p.eval(sys, &seed(q, a))?.eps;
            worst = worst.max((df - b).abs());
        }
    }
    Ok(worst)
}

/// Decide whether the reduced dynamics admit an invariant volume on the region.
///
/// The potential is normalized to vanish at the region center.
pub fn measure_verdict(sys: &ChaplyginSystem, region: &Region, opts: &MeasureOptions) -> Result<MeasureReport> {
    if region.dim() != sys.base_dim() {
        return Err(Error::Invalid("region dimension differs from the base dimension".into()));
    }
    let residual = closedness_residual(sys, region)?;
    let kinetic = !sys.has_potential();
    let mut report = MeasureReport {
        region: region.clone(),
        threshold: opts.threshold,
        guard: opts.guard,
        closedness_residual: residual,
        verdict: Verdict::Inconclusive,
        potential: None,
        path_independence_residual: None,
        exactness_residual: None,
        has_potential_energy: !kinetic,
        reason: String::new(),
    };
    if residual > opts.threshold {
        report.reason = if residual <= opts.guard {
            format!("closedness residual {residual:e} lies between the threshold and the guard")
        } else if !kinetic {
            "beta is not closed but the potential is nonzero, so necessity does not apply".into()
        } else {
            report.verdict = Verdict::NoInvariantMeasure;
            format!("beta is not closed: residual {residual:e}")
        };
        return Ok(report);
    }
    let p = beta_potential(sys, region, &region.center(), opts)?;
    report.path_independence_residual = Some(p.path_independence_residual);
    if p.path_independence_residual > opts.threshold {
        report.reason = format!("loop integrals of beta reach {:e}", p.path_independence_residual);
        return Ok(report);
    }
    if !region.simply_connected {
        report.reason = "beta is closed but the region is not asserted simply connected".into();
        return Ok(report);
    }
    let ex = exactness_residual(sys, &p, &region.points())?;
    report.exactness_residual = Some(ex);
    if ex > opts.threshold {
        report.reason = format!("df departs from beta by {ex:e}");
        return Ok(report);
    }
    report.verdict = Verdict::InvariantMeasure;
    report.reason = "beta is closed and loop-exact on the region".into();
    report.potential = Some(p);
    Ok(report)
}

/// Candidate density `k` for the invariant volume `k ω^n`.
pub trait DensityCandidate {
    fn ln_k<S: Scalar>(&self, sys: &ChaplyginSystem, q: &[S]) -> Result<S>;
}

/// `k ≡ 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnitDensity;

impl DensityCandidate for UnitDensity {
    fn ln_k<S: Scalar>(&self, _sys: &ChaplyginSystem, _q: &[S]) -> Result<S> {
        Ok(S::zero())
    }
}

impl DensityCandidate for Potential {
    fn ln_k<S: Scalar>(&self, sys: &ChaplyginSystem, q: &[S]) -> Result<S> {
        self.eval(sys, q)
    }
}

/// `k` given as a scalar expression of the base coordinates.
impl DensityCandidate for ParsedField {
    fn ln_k<S: Scalar>(&self, _sys: &ChaplyginSystem, q: &[S]) -> Result<S> {
        let k = self.eval(q)?[0];
        if !(k.re() > 0.0) {
            return Err(Error::Invalid("density candidate must be positive".into()));
        }
        Ok(k.ln())
    }
}

/// `ρ = k det g̃`.
pub fn density<K: DensityCandidate>(sys: &ChaplyginSystem, k: &K, q: &[f64]) -> Result<f64> {
    let det = Cholesky::new(&sys.reduced_metric(q)?)?.det();
    Ok(libm::exp(k.ln_k(sys, q)?) * det)
}

fn ln_density<K: DensityCandidate>(sys: &ChaplyginSystem, k: &K, q: &[f64]) -> Result<f64> {
    let det = Cholesky::new(&sys.reduced_metric(q)?)?.det();
    Ok(k.ln_k(sys, q)? + libm::log(det))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    /// Per trajectory, `max_t |ln ρ(q(t)) + ln det J(t) − ln ρ(q(0))|`.
    pub drifts: Vec<f64>,
    pub max_drift: f64,
    /// `max |X̄(ln k) − h|` at every `POINTWISE_STRIDE`-th sample and the last.
    pub pointwise_residual: f64,
}

pub const POINTWISE_STRIDE: usize = 10;

/// Transport check of `ρ = k det g̃` along reduced trajectories.
pub fn verify_invariance<K: DensityCandidate>(
    sys: &ChaplyginSystem,
    k: &K,
    initial: &[State],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<InvarianceReport> {
    let n = sys.base_dim();
    let field = ReducedField::new(sys);
    let mut drifts = Vec::with_capacity(initial.len());
    let mut pointwise = 0.0f64;
    for s0 in initial {
        let tr = integrate_with_jacobian(&field, &s0.flat(), t_span, cfg)?;
        let ldj = tr.log_det_jacobian.as_ref().ok_or(Error::Invalid("missing Jacobian".into()))?;
        let r0 = ln_density(sys, k, &s0.q)?;
        let mut drift = 0.0f64;
        let last = tr.len() - 1;
        for (i, (y, l)) in tr.states.iter().zip(ldj).enumerate() {
            let (q, v) = y.split_at(n);
            drift = drift.max((ln_density(sys, k, q)? + l - r0).abs());
            if i % POINTWISE_STRIDE == 0 || i == last {
                let dlnk = k.ln_k(sys, &crate::dual::seed_along(q, v))?.eps;
                pointwise = pointwise.max((dlnk - sys.geometry_at(q)?.h(v)).abs());
            }
        }
        drifts.push(drift);
    }
    let max_drift = drifts.iter().copied().fold(0.0, f64::max);
    Ok(InvarianceReport { drifts, max_drift, pointwise_residual: pointwise })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StanchenkoReport {
    /// `max |dF ∧ θ_{L*} − Ξ|` over samples and index pairs.
    pub as2: f64,
    /// `max |dF ∧ ω + dω|` on `(q, v)` space, `ω = −dθ_{L*} − Ξ`.
    pub as3: f64,
    pub tolerance: f64,
}

impl StanchenkoReport {
    pub fn as2_holds(&self) -> bool {
        self.as2 <= self.tolerance
    }

    pub fn as3_holds(&self) -> bool {
        self.as3 <= self.tolerance
    }
}

/// Residuals of the sufficient conditions for a basic function `F` of the base coordinates.
pub fn check_stanchenko(
    sys: &ChaplyginSystem,
    f: &ParsedField,
    samples: &[State],
    tolerance: f64,
) -> Result<StanchenkoReport> {
    let n = sys.base_dim();
    if f.variables().len() != n {
        return Err(Error::Invalid("F must depend on the base coordinates only".into()));
    }
    let (mut as2, mut as3) = (0.0f64, 0.0f64);
    for s in samples {
        let (q, v) = (&s.q, &s.v);
        let geo = sys.geometry_at(q)?;
        let dgeo: Vec<_> = (0..n).map(|a| sys.geometry_at(&seed(q, a))).collect::<Result<_>>()?;
        let df: Vec<f64> = (0..n).map(|a| Ok(f.eval(&seed(q, a))?[0].eps)).collect::<Result<_>>()?;
        let xi = geo.xi(v);
        let theta = geo.gt.matvec(v);
        for a in 0..n {
            for b in 0..n {
                let lhs = df[a] * theta[b] - df[b] * theta[a];
                as2 = as2.max((lhs - xi[(a, b)]).abs());
            }
        }
        // forms on z = (q, v), dimension 2n
        let m = 2 * n;
        let xi_z = |i: usize, j: usize| if i < n && j < n { xi[(i, j)] } else { 0.0 };
        // ∂_k Ξ_ij
        let dxi = |k: usize, i: usize, j: usize| -> f64 {
            if i >= n || j >= n {
                return 0.0;
            }
            if k < n {
                (0..n).map(|e| v[e] * dgeo[k].k_tilde[(e, i, j)].eps).sum()
            } else {
                geo.k_tilde[(k - n, i, j)]
            }
        };
        // ∂_i θ_j, θ_j = g̃_jc v^c on the q slots
        let dtheta = |i: usize, j: usize| -> f64 {
            if j >= n {
                return 0.0;
            }
            if i < n {
                (0..n).map(|c| dgeo[i].gt[(j, c)].eps * v[c]).sum()
            } else {
                geo.gt[(j, i - n)]
            }
        };
        let omega = |i: usize, j: usize| -(dtheta(i, j) - dtheta(j, i)) - xi_z(i, j);
        let dfz = |i: usize| if i < n { df[i] } else { 0.0 };
        for i in 0..m {
            for j in (i + 1)..m {
                for k in (j + 1)..m {
                    let wedge = dfz(i) * omega(j, k) + dfz(j) * omega(k, i) + dfz(k) * omega(i, j);
                    let dx = dxi(i, j, k) + dxi(j, k, i) + dxi(k, i, j);
                    // dω = −dΞ
                    as3 = as3.max((wedge - dx).abs());
                }
            }
        }
    }
    Ok(StanchenkoReport { as2, as3, tolerance })
}
