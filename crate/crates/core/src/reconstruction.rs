//! Horizontal lifts of reduced trajectories and holonomy of closed base loops.
//!
//! The fiber is parametrized by group coordinates `f` with the identity at the
//! coordinate origin. The lift solves `ḟ = E(f) ξ`, `ξ = −Γ(q) q̇`, where the
//! columns of `E` are the left-invariant frame `E_i = (L_f)_* e_i`. For the
//! abelian case `E = I` and the lift is a quadrature.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::chaplygin::ChaplyginSystem;
use crate::dual::{seed, Dual, Scalar};
use crate::dynamics::{State, Trajectory};
use crate::error::{Error, Result};
use crate::expr::{Expr, ParsedField, Shape};
use crate::linalg::{Lu, Mat};

/// Composition rule used for holonomy products.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupLaw {
    /// `(a·b) = a + b`.
    Additive,
    /// SE(2) in `(x, y, θ)`: `(p_a + R(θ_a) p_b, θ_a + θ_b)`.
    Se2,
}

/// Group acting on the fiber, with its frames written in fiber coordinates.
#[derive(Clone, Debug)]
pub struct GeneralFiber {
    pub names: Vec<String>,
    /// Left-invariant frame, `k × k` matrix field over (fiber, base) coordinates, column `i` is `E_i`.
    pub frame: ParsedField,
    /// Fundamental fields `(e_i)_Q` of the action, same layout.
    pub generators: ParsedField,
    pub law: GroupLaw,
}

#[derive(Clone, Debug)]
pub enum GroupModel {
    AbelianTranslations { names: Vec<String> },
    GeneralFiber(GeneralFiber),
}

impl GroupModel {
    pub fn abelian(k: usize) -> Self {
        GroupModel::AbelianTranslations { names: (1..=k).map(|i| alloc::format!("z{i}")).collect() }
    }

    pub fn abelian_named(names: Vec<String>) -> Self {
        GroupModel::AbelianTranslations { names }
    }

    /// SE(2) acting on itself in `(x, y, θ)`.
    pub fn se2() -> Self {
        let names: Vec<String> = ["x", "y", "theta"].iter().map(|s| s.to_string()).collect();
        let (x, y, th) = (Expr::var(0), Expr::var(1), Expr::var(2));
        let (o, l) = (Expr::Num(0.0), Expr::Num(1.0));
        let frame = vec![
            th.clone().cos(),
            -th.clone().sin(),
            o.clone(),
            th.clone().sin(),
            th.cos(),
            o.clone(),
            o.clone(),
            o.clone(),
            l.clone(),
        ];
        let generators = vec![l.clone(), o.clone(), -y, o.clone(), l.clone(), x, o.clone(), o, l];
        GroupModel::GeneralFiber(GeneralFiber {
            frame: ParsedField::from_exprs(names.clone(), frame, Shape::Matrix(3, 3)),
            generators: ParsedField::from_exprs(names.clone(), generators, Shape::Matrix(3, 3)),
            names,
            law: GroupLaw::Se2,
        })
    }

    pub fn dim(&self) -> usize {
        self.names().len()
    }

    pub fn names(&self) -> &[String] {
        match self {
            GroupModel::AbelianTranslations { names } => names,
            GroupModel::GeneralFiber(g) => &g.names,
        }
    }

    pub fn law(&self) -> GroupLaw {
        match self {
            GroupModel::AbelianTranslations { .. } => GroupLaw::Additive,
            GroupModel::GeneralFiber(g) => g.law,
        }
    }

    fn point<S: Scalar>(f: &[S], q: &[S]) -> Vec<S> {
        let mut p = f.to_vec();
        p.extend_from_slice(q);
        p
    }

    /// Left-invariant frame at fiber point `f` over base point `q`.
    pub fn frame<S: Scalar>(&self, f: &[S], q: &[S]) -> Result<Mat<S>> {
        let k = self.dim();
        match self {
            GroupModel::AbelianTranslations { .. } => Ok(Mat::identity(k)),
            GroupModel::GeneralFiber(g) => Ok(Mat::from_vec(k, k, g.frame.eval(&Self::point(f, q))?)),
        }
    }

    /// Fundamental fields at fiber point `f`, column `i` is `(e_i)_Q`.
    pub fn generators<S: Scalar>(&self, f: &[S], q: &[S]) -> Result<Mat<S>> {
        let k = self.dim();
        match self {
            GroupModel::AbelianTranslations { .. } => Ok(Mat::identity(k)),
            GroupModel::GeneralFiber(g) => Ok(Mat::from_vec(k, k, g.generators.eval(&Self::point(f, q))?)),
        }
    }

    pub fn identity(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    pub fn compose(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        match self.law() {
            GroupLaw::Additive => a.iter().zip(b).map(|(x, y)| x + y).collect(),
            GroupLaw::Se2 => {
                let (s, c) = libm::sincos(a[2]);
                vec![a[0] + c * b[0] - s * b[1], a[1] + s * b[0] + c * b[1], a[2] + b[2]]
            }
        }
    }

    pub fn inverse(&self, a: &[f64]) -> Vec<f64> {
        match self.law() {
            GroupLaw::Additive => a.iter().map(|x| -x).collect(),
            GroupLaw::Se2 => {
                let (s, c) = libm::sincos(a[2]);
                vec![-(c * a[0] + s * a[1]), s * a[0] - c * a[1], -a[2]]
            }
        }
    }

    /// Max residual of `[E_i, E_j] = c^l_ij E_l` and `[(e_i)_Q, (e_j)_Q] = −c^l_ij (e_l)_Q` at the identity.
    pub fn structure_residual(&self, sys: &ChaplyginSystem, q: &[f64]) -> Result<f64> {
        let k = self.dim();
        if k != sys.group_dim() {
            return Err(Error::Invalid("group model and system disagree on the group dimension".into()));
        }
        let f0 = self.identity();
        let mut worst = 0.0f64;
        for (sign, fields) in [(1.0, 0usize), (-1.0, 1usize)] {
            let at = |f: &[Dual<f64>]| -> Result<Mat<Dual<f64>>> {
                let qd: Vec<Dual<f64>> = q.iter().map(|x| Dual::constant(*x)).collect();
                if fields == 0 {
                    self.frame(f, &qd)
                } else {
                    self.generators(f, &qd)
                }
            };
            // derivatives of each column along each fiber coordinate
            let mut d = Vec::with_capacity(k);
            for j in 0..k {
                d.push(at(&seed(&f0, j))?);
            }
            let x = Mat::from_fn(k, k, |r, c| d[0][(r, c)].re);
            for i in 0..k {
                for j in 0..k {
                    for m in 0..k {
                        let mut br = 0.0;
                        for p in 0..k {
                            br += x[(p, i)] * d[p][(m, j)].eps - x[(p, j)] * d[p][(m, i)].eps;
                        }
                        let mut rhs = 0.0;
                        for l in 0..k {
                            rhs += sign * sys.structure(l, i, j) * x[(m, l)];
                        }
                        worst = worst.max((br - rhs).abs());
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Lift settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftOptions {
    /// RK4 substeps per base grid interval.
    pub substeps: usize,
    /// Bound on the estimated Hermite interpolation error of the base positions.
    pub interpolation_tolerance: f64,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions { substeps: 1, interpolation_tolerance: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftedTrajectory {
    pub t: Vec<f64>,
    pub base: Vec<State>,
    pub fiber: Vec<Vec<f64>>,
    /// `|E(f)⁻¹ ḟ + Γ(q) q̇|∞` with `ḟ` from finite differences of the fiber series.
    pub gamma_residual: Vec<f64>,
}

impl LiftedTrajectory {
    /// Full configuration and velocity `(q, f, q̇, E(f)ξ)` at grid index `i`.
    pub fn full_state(&self, sys: &ChaplyginSystem, gm: &GroupModel, i: usize) -> Result<Vec<f64>> {
        let s = &self.base[i];
        let fd = fiber_velocity(sys, gm, &self.fiber[i], &s.q, &s.v)?;
        let mut y = s.q.clone();
        y.extend_from_slice(&self.fiber[i]);
        y.extend_from_slice(&s.v);
        y.extend(fd);
        Ok(y)
    }

    pub fn max_gamma_residual(&self) -> f64 {
        self.gamma_residual.iter().copied().fold(0.0, f64::max)
    }
}

fn fiber_velocity(sys: &ChaplyginSystem, gm: &GroupModel, f: &[f64], q: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let xi: Vec<f64> = sys.gamma(q)?.matvec(v).iter().map(|x| -x).collect();
    Ok(gm.frame(f, q)?.matvec(&xi))
}

fn rk4_fiber(
    sys: &ChaplyginSystem,
    gm: &GroupModel,
    f: &[f64],
    h: f64,
    base: [(Vec<f64>, Vec<f64>); 3],
) -> Result<Vec<f64>> {
    let [(q0, v0), (qm, vm), (q1, v1)] = base;
    let add = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
    let k1 = fiber_velocity(sys, gm, f, &q0, &v0)?;
    let k2 = fiber_velocity(sys, gm, &add(f, h / 2.0, &k1), &qm, &vm)?;
    let k3 = fiber_velocity(sys, gm, &add(f, h / 2.0, &k2), &qm, &vm)?;
    let k4 = fiber_velocity(sys, gm, &add(f, h, &k3), &q1, &v1)?;
    Ok((0..f.len()).map(|i| f[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Cubic Hermite position and velocity at fraction `s ∈ [0, 1]` of an interval of length `h`.
fn hermite(a: &State, b: &State, h: f64, s: f64) -> (Vec<f64>, Vec<f64>) {
    let (s2, s3) = (s * s, s * s * s);
    let (h00, h10, h01, h11) = (2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2);
    let (d00, d10, d01, d11) = (6.0 * s2 - 6.0 * s, 3.0 * s2 - 4.0 * s + 1.0, -6.0 * s2 + 6.0 * s, 3.0 * s2 - 2.0 * s);
    let n = a.q.len();
    let q = (0..n).map(|i| h00 * a.q[i] + h10 * h * a.v[i] + h01 * b.q[i] + h11 * h * b.v[i]).collect();
    let v = (0..n).map(|i| (d00 * a.q[i] + d01 * b.q[i]) / h + d10 * a.v[i] + d11 * b.v[i]).collect();
    (q, v)
}

/// Estimated Hermite error `h⁴ |q⁗| / 384`, with `q⁗` from third divided differences of the velocity.
fn interpolation_error(t: &[f64], base: &[State]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..t.len().saturating_sub(3) {
        let n = base[i].v.len();
        for a in 0..n {
            let mut dd: Vec<f64> = (0..4).map(|j| base[i + j].v[a]).collect();
            for order in 1..4 {
                for j in 0..(4 - order) {
                    dd[j] = (dd[j + 1] - dd[j]) / (t[i + j + order] - t[i + j]);
                }
            }
            let h = (i..i + 3).map(|j| t[j + 1] - t[j]).fold(0.0, f64::max);
            worst = worst.max(libm::pow(h, 4.0) * (6.0 * dd[0]).abs() / 384.0);
        }
    }
    worst
}

/// First derivative of a sampled series by five-point differences (one-sided near the ends).
fn five_point_derivative(t: &[f64], y: &[Vec<f64>], i: usize) -> Vec<f64> {
    let n = t.len();
    if n < 5 {
        let (a, b) = if i + 1 < n { (i, i + 1) } else { (i - 1, i) };
        return (0..y[0].len()).map(|c| (y[b][c] - y[a][c]) / (t[b] - t[a])).collect();
    }
    let start = i.saturating_sub(2).min(n - 5);
    let ts = &t[start..start + 5];
    let x = t[i];
    // derivative of the Lagrange interpolant through five nodes
    let w: Vec<f64> = (0..5)
        .map(|j| {
            let mut denom = 1.0;
            for m in 0..5 {
                if m != j {
                    denom *= ts[j] - ts[m];
                }
            }
            let mut num = 0.0;
            for skip in 0..5 {
                if skip == j {
                    continue;
                }
                let mut p = 1.0;
                for m in 0..5 {
                    if m != j && m != skip {
                        p *= x - ts[m];
                    }
                }
                num += p;
            }
            num / denom
        })
        .collect();
    (0..y[0].len()).map(|c| (0..5).map(|j| w[j] * y[start + j][c]).sum()).collect()
}

fn gamma_residual_series(
    sys: &ChaplyginSystem,
    gm: &GroupModel,
    t: &[f64],
    base: &[State],
    fiber: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        if t.len() < 2 {
            out.push(0.0);
            continue;
        }
        let fd = five_point_derivative(t, fiber, i);
        let e = gm.frame(&fiber[i], &base[i].q)?;
        let body = Lu::new(&e)?.solve(&fd);
        let gv = sys.gamma(&base[i].q)?.matvec(&base[i].v);
        out.push(body.iter().zip(&gv).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max));
    }
    Ok(out)
}

/// Lift a reduced trajectory (flat `(q, v)` states) starting at fiber point `fiber_start`.
pub fn horizontal_lift(
    sys: &ChaplyginSystem,
    gm: &GroupModel,
    base: &Trajectory,
    fiber_start: &[f64],
    opts: &LiftOptions,
) -> Result<LiftedTrajectory> {
    let k = gm.dim();
    if k != sys.group_dim() || fiber_start.len() != k {
        return Err(Error::Invalid("fiber start does not match the group dimension".into()));
    }
    if opts.substeps == 0 {
        return Err(Error::Invalid("lift substeps must be positive".into()));
    }
    let states: Vec<State> = (0..base.len()).map(|i| base.state(i)).collect();
    let err = interpolation_error(&base.t, &states);
    if err > opts.interpolation_tolerance {
        return Err(Error::InterpolationTooCoarse { residual: err, tolerance: opts.interpolation_tolerance });
    }
    let mut fiber = Vec::with_capacity(base.len());
    let mut f = fiber_start.to_vec();
    fiber.push(f.clone());
    for i in 0..base.len().saturating_sub(1) {
        let (a, b) = (&states[i], &states[i + 1]);
        let dt = base.t[i + 1] - base.t[i];
        let m = opts.substeps as f64;
        for s in 0..opts.substeps {
            let (s0, s1) = (s as f64 / m, (s as f64 + 1.0) / m);
            let pts = [hermite(a, b, dt, s0), hermite(a, b, dt, 0.5 * (s0 + s1)), hermite(a, b, dt, s1)];
            f = rk4_fiber(sys, gm, &f, dt / m, pts)?;
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { t: base.t[i + 1] });
        }
        fiber.push(f.clone());
    }
    let gamma_residual = gamma_residual_series(sys, gm, &base.t, &states, &fiber)?;
    Ok(LiftedTrajectory { t: base.t.clone(), base: states, fiber, gamma_residual })
}

/// Residual maxima of a lifted trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftCheck {
    pub gamma_residual: f64,
    pub projection_mismatch: f64,
}

/// Recompute the `γ(ċ)` residual from the stored fiber series and compare the base against `base`.
pub fn verify_lift(
    sys: &ChaplyginSystem,
    gm: &GroupModel,
    lifted: &LiftedTrajectory,
    base: &Trajectory,
) -> Result<LiftCheck> {
    let res = gamma_residual_series(sys, gm, &lifted.t, &lifted.base, &lifted.fiber)?;
    let mut mismatch = if lifted.t.len() == base.len() { 0.0f64 } else { f64::INFINITY };
    for (i, s) in lifted.base.iter().enumerate().take(base.len()) {
        let y = s.flat();
        mismatch = mismatch.max((lifted.t[i] - base.t[i]).abs());
        for (a, b) in y.iter().zip(&base.states[i]) {
            mismatch = mismatch.max((a - b).abs());
        }
    }
    Ok(LiftCheck { gamma_residual: res.iter().copied().fold(0.0, f64::max), projection_mismatch: mismatch })
}

/// Smooth piece of a base loop, parametrized over `s ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Segment {
    Line { from: Vec<f64>, to: Vec<f64> },
    /// Arc in the `(a, b)` coordinate plane, angles in radians, anticlockwise when `to > from`.
    Arc { center: Vec<f64>, axes: (usize, usize), radius: f64, from: f64, to: f64 },
}

impl Segment {
    fn eval(&self, s: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            Segment::Line { from, to } => (
                from.iter().zip(to).map(|(a, b)| a + s * (b - a)).collect(),
                from.iter().zip(to).map(|(a, b)| b - a).collect(),
            ),
            Segment::Arc { center, axes, radius, from, to } => {
                let w = to - from;
                let (sn, cs) = libm::sincos(from + s * w);
                let mut q = center.clone();
                let mut v = vec![0.0; center.len()];
                q[axes.0] += radius * cs;
                q[axes.1] += radius * sn;
                v[axes.0] = -radius * w * sn;
                v[axes.1] = radius * w * cs;
                (q, v)
            }
        }
    }
}

/// Closed base loop as a chain of smooth segments.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseLoop {
    pub descriptor: String,
    pub segments: Vec<Segment>,
}

impl BaseLoop {
    /// Anticlockwise rectangle in the `(a, b)` plane from `corner` with sides `sa`, `sb`.
    pub fn rectangle(corner: &[f64], axes: (usize, usize), sa: f64, sb: f64) -> Self {
        let at = |da: f64, db: f64| {
            let mut p = corner.to_vec();
            p[axes.0] += da;
            p[axes.1] += db;
            p
        };
        let v = [at(0.0, 0.0), at(sa, 0.0), at(sa, sb), at(0.0, sb)];
        let segments = (0..4).map(|i| Segment::Line { from: v[i].clone(), to: v[(i + 1) % 4].clone() }).collect();
        BaseLoop { descriptor: alloc::format!("rectangle(corner={corner:?}, axes={axes:?}, sides=({sa}, {sb}))"), segments }
    }

    pub fn square(corner: &[f64], axes: (usize, usize), side: f64) -> Self {
        let mut l = Self::rectangle(corner, axes, side, side);
        l.descriptor = alloc::format!("square(corner={corner:?}, axes={axes:?}, side={side})");
        l
    }

    pub fn circle(center: &[f64], axes: (usize, usize), radius: f64) -> Self {
        BaseLoop {
            descriptor: alloc::format!("circle(center={center:?}, axes={axes:?}, radius={radius})"),
            segments: vec![Segment::Arc {
                center: center.to_vec(),
                axes,
                radius,
                from: 0.0,
                to: 2.0 * core::f64::consts::PI,
            }],
        }
    }

    /// Traverse `self` then `other`.
    pub fn then(&self, other: &BaseLoop) -> Self {
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        BaseLoop { descriptor: alloc::format!("{} then {}", self.descriptor, other.descriptor), segments }
    }

    fn endpoints(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let first = self.segments.first()?.eval(0.0).0;
        let last = self.segments.last()?.eval(1.0).0;
        Some((first, last))
    }

    /// Largest gap between consecutive segment endpoints, including the closing one.
    pub fn closure_residual(&self) -> f64 {
        let n = self.segments.len();
        let mut gap = 0.0f64;
        for i in 0..n {
            let a = self.segments[i].eval(1.0).0;
            let b = self.segments[(i + 1) % n].eval(0.0).0;
            gap = gap.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
        gap
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolonomyReport {
    pub descriptor: String,
    /// Fiber point reached from the identity after one traversal.
    pub displacement: Vec<f64>,
    pub closure_residual: f64,
    pub samples: usize,
}

/// Net fiber displacement of the horizontal lift over one traversal, `samples` RK4 steps per segment.
pub fn holonomy(sys: &ChaplyginSystem, gm: &GroupModel, lp: &BaseLoop, samples: usize) -> Result<HolonomyReport> {
    let (start, _) = lp.endpoints().ok_or_else(|| Error::Invalid("empty loop".into()))?;
    if start.len() != sys.base_dim() || gm.dim() != sys.group_dim() {
        return Err(Error::Invalid("loop and system dimensions differ".into()));
    }
    if samples == 0 {
        return Err(Error::Invalid("holonomy needs at least one sample per segment".into()));
    }
    let gap = lp.closure_residual();
    if gap > 1e-10 {
        return Err(Error::LoopNotClosed { gap });
    }
    let mut f = gm.identity();
    let h = 1.0 / samples as f64;
    for seg in &lp.segments {
        for i in 0..samples {
            let s = i as f64 * h;
            f = rk4_fiber(sys, gm, &f, h, [seg.eval(s), seg.eval(s + 0.5 * h), seg.eval(s + h)])?;
        }
    }
    Ok(HolonomyReport { descriptor: lp.descriptor.clone(), displacement: f, closure_residual: gap, samples })
}

/// `−∬ Ω^i_ab da db` over an axis-aligned rectangle, composite 5-point Gauss–Legendre with `panels²` cells.
///
/// Equals the holonomy of the anticlockwise boundary for abelian groups.
pub fn curvature_flux(
    sys: &ChaplyginSystem,
    corner: &[f64],
    axes: (usize, usize),
    sa: f64,
    sb: f64,
    panels: usize,
) -> Result<Vec<f64>> {
    if !sys.is_abelian() {
        return Err(Error::Invalid("curvature flux equals the holonomy only for abelian groups".into()));
    }
    let k = sys.group_dim();
    let mut out = vec![0.0; k];
    let (ha, hb) = (sa / panels as f64, sb / panels as f64);
    for pa in 0..panels {
        for pb in 0..panels {
            for (xa, wa) in GL5 {
                for (xb, wb) in GL5 {
                    let mut q = corner.to_vec();
                    q[axes.0] += ha * (pa as f64 + 0.5 * (xa + 1.0));
                    q[axes.1] += hb * (pb as f64 + 0.5 * (xb + 1.0));
                    let om = sys.curvature_coeffs(&q)?;
                    let w = wa * wb * ha * hb / 4.0;
                    for (i, o) in out.iter_mut().enumerate() {
                        *o -= w * om[i][(axes.0, axes.1)];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn se2_law_inverse() {
        let g = GroupModel::se2();
        let a = [0.3, -1.2, 0.7];
        let e = g.compose(&a, &g.inverse(&a));
        assert!(e.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let q = |t: f64| t * t * t - 2.0 * t;
        let v = |t: f64| 3.0 * t * t - 2.0;
        let a = State::new(vec![q(0.5)], vec![v(0.5)]);
        let b = State::new(vec![q(0.9)], vec![v(0.9)]);
        let (qm, vm) = hermite(&a, &b, 0.4, 0.3);
        assert!((qm[0] - q(0.62)).abs() < 1e-14);
        assert!((vm[0] - v(0.62)).abs() < 1e-13);
    }

    #[test]
    fn five_point_exact_on_quartics() {
        let t: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
        let y: Vec<Vec<f64>> = t.iter().map(|x| vec![x * x * x * x]).collect();
        for i in 0..9 {
            let d = five_point_derivative(&t, &y, i);
            assert!((d[0] - 4.0 * t[i].powi(3)).abs() < 1e-11);
        }
    }

    #[test]
    fn open_loop_rejected() {
        let lp = BaseLoop {
            descriptor: "open".into(),
            segments: vec![Segment::Line { from: vec![0.0, 0.0], to: vec![1.0, 0.0] }],
        };
        assert!(lp.closure_residual() > 0.5);
    }
}
