//! Equations of motion, integrators and the reduced-versus-full oracle.
//!
//! Second-order systems use the flat state `y = (q, v)`. The full-space
//! multiplier dynamics solve
//!
//! ```text
//! [ G  −μᵀ ] [ q̈ ]   [ −(∂_C G_AB − ½ ∂_A G_BC) q̇^B q̇^C − ∂_A V ]
//! [ μ   0  ] [ λ  ] = [ −(∂_C μ_iA q̇^C) q̇^A                     ]
//! ```
//!
//! i.e. `d/dt ∂L/∂q̇ − ∂L/∂q = λ^i μ_i` together with the differentiated
//! constraints. No constraint stabilization is applied.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::chaplygin::{ChaplyginSystem, ReducedConnection};
use crate::dual::{seed, seed_along, Dual, Scalar};
use crate::error::{Error, Result};
use crate::expr::{Expr, ParsedField, Shape};
use crate::geom::{geodesic_rhs, ConnectionField, MetricField, MetricSource};
use crate::linalg::{Cholesky, Lu, Mat};

/// Base configuration and velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl State {
    pub fn new(q: Vec<f64>, v: Vec<f64>) -> Self {
        State { q, v }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut y = self.q.clone();
        y.extend_from_slice(&self.v);
        y
    }

    pub fn from_flat(y: &[f64]) -> Self {
        let n = y.len() / 2;
        State { q: y[..n].to_vec(), v: y[n..].to_vec() }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// Autonomous first-order field `ẏ = F(y)`, evaluable over any scalar.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, y: &[S]) -> Result<Vec<S>>;

    fn energy(&self, _y: &[f64]) -> Option<f64> {
        None
    }

    fn constraint_residual(&self, _y: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Rk4 { step: f64 },
    Rk45 { rtol: f64, atol: f64, initial_step: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::rk4(1e-3)
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        IntegratorConfig { method: Method::Rk4 { step }, max_steps: 10_000_000 }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        IntegratorConfig { method: Method::Rk45 { rtol, atol, initial_step: 1e-3 }, max_steps: 10_000_000 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4 { step } => step > 0.0 && step.is_finite(),
            Method::Rk45 { rtol, atol, initial_step } => rtol > 0.0 && atol > 0.0 && initial_step > 0.0,
        };
        if !ok || self.max_steps == 0 {
            return Err(Error::Invalid("integrator step and tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self.method {
            Method::Rk4 { step } => alloc::format!("rk4(h={step:e})"),
            Method::Rk45 { rtol, atol, .. } => alloc::format!("rk45(rtol={rtol:e}, atol={atol:e})"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryMeta {
    pub integrator: String,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub log_det_jacobian: Option<Vec<f64>>,
    pub energy: Option<Vec<f64>>,
    pub constraint_residual: Option<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }

    /// Treat the flat state as `(q, v)`.
    pub fn state(&self, i: usize) -> State {
        State::from_flat(&self.states[i])
    }

    pub fn energy_drift(&self) -> Option<f64> {
        let e = self.energy.as_ref()?;
        let e0 = *e.first()?;
        Some(e.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max))
    }

    pub fn max_constraint_residual(&self) -> Option<f64> {
        Some(self.constraint_residual.as_ref()?.iter().copied().fold(0.0, f64::max))
    }
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4_step<F>(f: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k2))?;
    let k4 = f(t + h, &axpy(y, h, &k3))?;
    Ok((0..y.len()).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince attempt: 5th-order solution and the embedded error estimate.
fn dopri_step<F>(f: &mut F, t: f64, y: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let mut ys = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..n {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k.push(f(t + C[s] * h, &ys)?);
    }
    let mut y5 = y.to_vec();
    let mut err = vec![0.0; n];
    for s in 0..7 {
        for i in 0..n {
            y5[i] += h * B5[s] * k[s][i];
            err[i] += h * (B5[s] - B4[s]) * k[s][i];
        }
    }
    Ok((y5, err))
}

/// Integrate `ẏ = f(t, y)` over `[t0, t1]`, recording every accepted step.
pub fn integrate_fn<F>(mut f: F, y0: &[f64], t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<(Vec<f64>, Vec<Vec<f64>>, TrajectoryMeta)>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let (t0, t1) = t_span;
    if !(t1 >= t0) {
        return Err(Error::Invalid("time span must be increasing".into()));
    }
    let mut ts = vec![t0];
    let mut ys = vec![y0.to_vec()];
    let mut meta = TrajectoryMeta { integrator: cfg.describe(), ..Default::default() };
    let finite = |y: &[f64], t: f64| {
        if y.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteState { t })
        }
    };
    match cfg.method {
        Method::Rk4 { step } => {
            let span = t1 - t0;
            let n = libm::ceil(span / step - 1e-9).max(0.0) as usize;
            if n > cfg.max_steps {
                return Err(Error::StepLimitExceeded { max_steps: cfg.max_steps });
            }
            let mut y = y0.to_vec();
            for i in 0..n {
                let t = t0 + i as f64 * step;
                let h = if i + 1 == n { t1 - t } else { step };
                y = rk4_step(&mut f, t, &y, h)?;
                let tn = if i + 1 == n { t1 } else { t0 + (i + 1) as f64 * step };
                finite(&y, tn)?;
                ts.push(tn);
                ys.push(y.clone());
                meta.accepted_steps += 1;
            }
        }
        Method::Rk45 { rtol, atol, initial_step } => {
            let mut t = t0;
            let mut y = y0.to_vec();
            let mut h = initial_step.min(t1 - t0);
            let mut err_prev: f64 = 1e-4;
            let mut steps = 0usize;
            while t < t1 {
                steps += 1;
                if steps > cfg.max_steps {
                    return Err(Error::StepLimitExceeded { max_steps: cfg.max_steps });
                }
                let last = t + h >= t1;
                let hh = if last { t1 - t } else { h };
                let (yn, e) = dopri_step(&mut f, t, &y, hh)?;
                let mut acc = 0.0;
                for i in 0..y.len() {
                    let sc = atol + rtol * y[i].abs().max(yn[i].abs());
                    acc += (e[i] / sc) * (e[i] / sc);
                }
                let err = libm::sqrt(acc / y.len().max(1) as f64);
                if !err.is_finite() {
                    return Err(Error::NonFiniteState { t });
                }
                if err <= 1.0 {
                    t = if last { t1 } else { t + hh };
                    y = yn;
                    finite(&y, t)?;
                    ts.push(t);
                    ys.push(y.clone());
                    meta.accepted_steps += 1;
                    let fac = 0.9 * libm::pow(err.max(1e-10), -0.17) * libm::pow(err_prev, 0.04);
                    h = hh * fac.clamp(0.2, 5.0);
                    err_prev = err.max(1e-4);
                } else {
                    meta.rejected_steps += 1;
                    h = hh * (0.9 * libm::pow(err, -0.2)).max(0.2);
                }
                if h < 1e-14 * (1.0 + t.abs()) {
                    return Err(Error::NonFiniteState { t });
                }
            }
        }
    }
    Ok((ts, ys, meta))
}

fn finish<F: VectorField>(field: &F, t: Vec<f64>, states: Vec<Vec<f64>>, meta: TrajectoryMeta, ldj: Option<Vec<f64>>) -> Trajectory {
    let energy: Option<Vec<f64>> = states.iter().map(|y| field.energy(y)).collect();
    let constraint_residual: Option<Vec<f64>> = states.iter().map(|y| field.constraint_residual(y)).collect();
    Trajectory { t, states, log_det_jacobian: ldj, energy, constraint_residual, meta }
}

/// Integrate an autonomous field, recording energy and constraint residuals when available.
pub fn integrate<F: VectorField>(field: &F, y0: &[f64], t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<Trajectory> {
    let (t, ys, meta) = integrate_fn(|_, y| field.eval(y), y0, t_span, cfg)?;
    Ok(finish(field, t, ys, meta, None))
}

/// Integrate with the variational equation `J̇ = DF(y) J`, `J(0) = I`, storing `ln |det J|`.
pub fn integrate_with_jacobian<F: VectorField>(
    field: &F,
    y0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = field.dim();
    let mut z0 = y0.to_vec();
    let id = Mat::<f64>::identity(n);
    z0.extend_from_slice(id.as_slice());
    let rhs = |_: f64, z: &[f64]| -> Result<Vec<f64>> {
        let y = &z[..n];
        let mut out = field.eval(y)?;
        out.resize(n + n * n, 0.0);
        // column j of DF·J is the directional derivative along column j of J
        for j in 0..n {
            let dir: Vec<f64> = (0..n).map(|i| z[n + i * n + j]).collect();
            let d = field.eval(&seed_along(y, &dir))?;
            for i in 0..n {
                out[n + i * n + j] = d[i].eps;
            }
        }
        Ok(out)
    };
    let (t, zs, meta) = integrate_fn(rhs, &z0, t_span, cfg)?;
    let mut ldj = Vec::with_capacity(zs.len());
    let mut states = Vec::with_capacity(zs.len());
    for z in zs {
        let jm = Mat::from_vec(n, n, z[n..].to_vec());
        ldj.push(Lu::new(&jm)?.ln_abs_det());
        states.push(z[..n].to_vec());
    }
    Ok(finish(field, t, states, meta, Some(ldj)))
}

/// Which displayed form of the reduced equations to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReducedForm {
    /// `a = −g̃⁻¹(α + ∂Ṽ) − Γ^{LC}(v, v)`.
    Christoffel,
    /// `a = Ŵ(∂L*/∂q − q̇^c ∂p̂/∂q^c − α)` with every derivative taken of `L*` itself.
    Lagrangian,
}

/// Reduced dynamics `X̄` on the base.
pub struct ReducedField<'a> {
    pub sys: &'a ChaplyginSystem,
    pub form: ReducedForm,
}

impl<'a> ReducedField<'a> {
    pub fn new(sys: &'a ChaplyginSystem) -> Self {
        ReducedField { sys, form: ReducedForm::Christoffel }
    }
}

impl VectorField for ReducedField<'_> {
    fn dim(&self) -> usize {
        2 * self.sys.base_dim()
    }

    fn eval<S: Scalar>(&self, y: &[S]) -> Result<Vec<S>> {
        let n = self.sys.base_dim();
        let (q, v) = y.split_at(n);
        let a = match self.form {
            ReducedForm::Christoffel => reduced_acceleration(self.sys, q, v)?,
            ReducedForm::Lagrangian => reduced_acceleration_lagrangian(self.sys, q, v)?,
        };
        let mut out = v.to_vec();
        out.extend(a);
        Ok(out)
    }

    fn energy(&self, y: &[f64]) -> Option<f64> {
        let n = self.sys.base_dim();
        reduced_energy(self.sys, &y[..n], &y[n..]).ok()
    }
}

pub fn reduced_acceleration<S: Scalar>(sys: &ChaplyginSystem, q: &[S], v: &[S]) -> Result<Vec<S>> {
    Ok(sys.geometry_at(q)?.acceleration(v))
}

/// `L*(q, v) = ½ g̃(q)(v, v) − Ṽ(q)`.
pub fn reduced_lagrangian<S: Scalar>(sys: &ChaplyginSystem, q: &[S], v: &[S]) -> Result<S> {
    Ok(sys.reduced_metric(q)?.form(v, v).scale(0.5) - sys.potential(q)?)
}

pub fn reduced_energy(sys: &ChaplyginSystem, q: &[f64], v: &[f64]) -> Result<f64> {
    Ok(sys.reduced_metric(q)?.form(v, v) * 0.5 + sys.potential(q)?)
}

fn lift2<S: Scalar>(x: &[S]) -> Vec<Dual<Dual<S>>> {
    x.iter().map(|v| Dual::constant(Dual::constant(*v))).collect()
}

pub fn reduced_acceleration_lagrangian<S: Scalar>(sys: &ChaplyginSystem, q: &[S], v: &[S]) -> Result<Vec<S>> {
    let n = sys.base_dim();
    let qc = lift2(q);
    let mut hess = Mat::zeros(n, n);
    let mut rhs = vec![S::zero(); n];
    for b in 0..n {
        // ∂L*/∂q^b
        let lq = reduced_lagrangian(sys, &seed(q, b), &v.iter().map(|x| Dual::constant(*x)).collect::<Vec<_>>())?;
        // Σ_c v^c ∂²L*/∂q^c∂v^b: outer seed of q along v, inner seed of v along e_b
        let qo: Vec<Dual<Dual<S>>> = q.iter().zip(v).map(|(x, d)| Dual::new(Dual::constant(*x), Dual::constant(*d))).collect();
        let vi: Vec<Dual<Dual<S>>> = v.iter().enumerate().map(|(i, x)| Dual::constant(Dual::new(*x, if i == b { S::one() } else { S::zero() }))).collect();
        let mixed = reduced_lagrangian(sys, &qo, &vi)?.eps.eps;
        rhs[b] = lq.eps - mixed;
        for a in 0..n {
            let vv: Vec<Dual<Dual<S>>> = v
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let inner = Dual::new(*x, if i == a { S::one() } else { S::zero() });
                    Dual::new(inner, Dual::constant(if i == b { S::one() } else { S::zero() }))
                })
                .collect();
            hess[(a, b)] = reduced_lagrangian(sys, &qc, &vv)?.eps.eps;
        }
    }
    let alpha = sys.geometry_at(q)?.alpha(v);
    let f: Vec<S> = (0..n).map(|b| rhs[b] - alpha[b]).collect();
    let ch = Cholesky::new(&hess).map_err(|_| Error::SingularMetric { context: "reduced Hessian" })?;
    Ok(ch.solve(&f))
}

/// Which implementation of the full-space multiplier dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FullSolve {
    /// Bordered saddle system, LU with partial pivoting.
    Saddle,
    /// Explicit `W^{AB}`, `C^{ij}` closed form.
    Explicit,
}

/// Unreduced mechanical system with linear constraints `μ_iA(q) q̇^A = 0`.
#[derive(Clone, Debug)]
pub struct FullSystem {
    name: String,
    n: usize,
    k: usize,
    base: usize,
    metric: MetricField,
    constraints: ParsedField,
    potential: Option<ParsedField>,
}

impl FullSystem {
    /// Coordinates are ordered base first; `base` counts them. `constraints` is row-major `k × n`.
    pub fn new(
        name: impl Into<String>,
        coords: Vec<String>,
        base: usize,
        metric: Vec<Expr>,
        constraints: Vec<Expr>,
        potential: Option<Expr>,
    ) -> Result<Self> {
        let n = coords.len();
        if metric.len() != n * n || constraints.len() % n.max(1) != 0 || base > n {
            return Err(Error::Invalid("full system shapes do not match the coordinate count".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if metric[i * n + j] != metric[j * n + i] {
                    return Err(Error::Invalid("full metric is not symmetric".into()));
                }
            }
        }
        let k = constraints.len() / n.max(1);
        Ok(FullSystem {
            name: name.into(),
            n,
            k,
            base,
            metric: MetricField::from_matrix(coords.clone(), n, metric),
            constraints: ParsedField::from_exprs(coords.clone(), constraints, Shape::Matrix(k, n)),
            potential: potential.map(|p| ParsedField::from_exprs(coords, vec![p], Shape::Scalar)),
        })
    }

    /// Abelian translation bundle: fiber coordinates `z_i` with `ż_i = ξ^i`, so `μ = [Γ | I]`.
    pub fn from_abelian(sys: &ChaplyginSystem) -> Result<Self> {
        if !sys.is_abelian() {
            return Err(Error::Invalid("from_abelian needs vanishing structure constants".into()));
        }
        let nb = sys.base_dim();
        let k = sys.group_dim();
        let n = nb + k;
        let mut coords: Vec<String> = sys.base_names().to_vec();
        for i in 0..k {
            coords.push(alloc::format!("z{}", i + 1));
        }
        let bb = sys.g_bb().upper();
        let gg = sys.g_gg().upper();
        let upper_at = |f: &ParsedField, m: usize, i: usize, j: usize| {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            f.exprs()[i * m - i * (i + 1) / 2 + j].clone()
        };
        let mut metric = vec![Expr::Num(0.0); n * n];
        for r in 0..n {
            for c in 0..n {
                metric[r * n + c] = match (r < nb, c < nb) {
                    (true, true) => upper_at(bb, nb, r, c),
                    (true, false) => sys.g_bg().exprs()[r * k + (c - nb)].clone(),
                    (false, true) => sys.g_bg().exprs()[c * k + (r - nb)].clone(),
                    (false, false) => upper_at(gg, k, r - nb, c - nb),
                };
            }
        }
        let mut mu = vec![Expr::Num(0.0); k * n];
        for i in 0..k {
            for a in 0..nb {
                mu[i * n + a] = sys.gamma_field().exprs()[i * nb + a].clone();
            }
            mu[i * n + nb + i] = Expr::Num(1.0);
        }
        let pot = if sys.has_potential() {
            Some(potential_expr(sys))
        } else {
            None
        };
        FullSystem::new(sys.name(), coords, nb, metric, mu, pot)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn constraint_count(&self) -> usize {
        self.k
    }

    pub fn base_dim(&self) -> usize {
        self.base
    }

    pub fn coords(&self) -> &[String] {
        self.metric.variables()
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn constraint_matrix<S: Scalar>(&self, q: &[S]) -> Result<Mat<S>> {
        Ok(Mat::from_vec(self.k, self.n, self.constraints.eval(q)?))
    }

    pub fn potential<S: Scalar>(&self, q: &[S]) -> Result<S> {
        match &self.potential {
            Some(p) => Ok(p.eval(q)?[0]),
            None => Ok(S::zero()),
        }
    }

    pub fn energy(&self, q: &[f64], qd: &[f64]) -> Result<f64> {
        Ok(0.5 * self.metric.metric(q)?.form(qd, qd) + self.potential(q)?)
    }

    pub fn constraint_residual(&self, q: &[f64], qd: &[f64]) -> Result<f64> {
        let mu = self.constraint_matrix(q)?;
        Ok(mu.matvec(qd).iter().map(|x| x.abs()).fold(0.0, f64::max))
    }

    /// Pieces shared by both solvers: `G`, `μ`, free force `f`, and `d_i = (∂_C μ_iA q̇^C) q̇^A`.
    fn pieces<S: Scalar>(&self, q: &[S], qd: &[S]) -> Result<(Mat<S>, Mat<S>, Vec<S>, Vec<S>)> {
        let n = self.n;
        let (g, dg) = self.metric.metric_and_derivs(q)?;
        // ∂μ along q̇ and ∂V in one pass each
        let mu_d = Mat::from_vec(self.k, n, self.constraints.eval(&seed_along(q, qd))?);
        let mu = Mat::from_fn(self.k, n, |i, a| mu_d[(i, a)].re);
        let dmu = Mat::from_fn(self.k, n, |i, a| mu_d[(i, a)].eps);
        let d = dmu.matvec(qd);
        let mut f = vec![S::zero(); n];
        for (a, fa) in f.iter_mut().enumerate() {
            let mut s = -self.potential(&seed(q, a))?.eps;
            for b in 0..n {
                for c in 0..n {
                    s = s - (dg[c][(a, b)] - dg[a][(b, c)].scale(0.5)) * qd[b] * qd[c];
                }
            }
            *fa = s;
        }
        Ok((g, mu, f, d))
    }

    /// Accelerations `q̈` and multipliers `λ`.
    pub fn acceleration<S: Scalar>(&self, q: &[S], qd: &[S], how: FullSolve) -> Result<(Vec<S>, Vec<S>)> {
        let (n, k) = (self.n, self.k);
        let (g, mu, f, d) = self.pieces(q, qd)?;
        match how {
            FullSolve::Saddle => {
                let m = Mat::from_fn(n + k, n + k, |r, c| match (r < n, c < n) {
                    (true, true) => g[(r, c)],
                    (true, false) => -mu[(c - n, r)],
                    (false, true) => mu[(r - n, c)],
                    (false, false) => S::zero(),
                });
                let mut rhs = f;
                rhs.extend(d.iter().map(|x| -*x));
                let sol = Lu::new(&m)?.solve(&rhs);
                Ok((sol[..n].to_vec(), sol[n..].to_vec()))
            }
            FullSolve::Explicit => {
                // G need not be definite off the constraint distribution
                let w = Lu::new(&g)?.inverse();
                let wmu = w.matmul(&mu.transpose());
                let mwm = mu.matmul(&wmu);
                let cm = Mat::from_fn(k, k, |i, j| -mwm[(i, j)]);
                let cinv = Lu::new(&cm)?.inverse();
                let wf = w.matvec(&f);
                let muwf = mu.matvec(&wf);
                let rhs: Vec<S> = (0..k).map(|i| muwf[i] + d[i]).collect();
                let lambda = cinv.matvec(&rhs);
                let mut force = f;
                for (a, fa) in force.iter_mut().enumerate() {
                    for j in 0..k {
                        *fa = *fa + mu[(j, a)] * lambda[j];
                    }
                }
                Ok((w.matvec(&force), lambda))
            }
        }
    }

    /// Full state `(Q, Q̇)` over the base state, fiber at the identity (coordinate origin) with `ξ = −Γ v`.
    pub fn lift_initial(&self, sys: &ChaplyginSystem, s: &State) -> Result<Vec<f64>> {
        let nb = sys.base_dim();
        if self.base != nb || self.n != nb + sys.group_dim() {
            return Err(Error::Invalid("full and reduced systems have incompatible dimensions".into()));
        }
        let gam = sys.gamma(&s.q)?;
        let xi = gam.matvec(&s.v);
        let mut y = s.q.clone();
        y.resize(self.n, 0.0);
        y.extend_from_slice(&s.v);
        y.extend(xi.iter().map(|x| -x));
        Ok(y)
    }
}

fn potential_expr(sys: &ChaplyginSystem) -> Expr {
    sys.potential_field().map(|p| p.exprs()[0].clone()).unwrap_or(Expr::Num(0.0))
}

/// Full-space field with state `(Q, Q̇)`.
pub struct FullField<'a> {
    pub fs: &'a FullSystem,
    pub solve: FullSolve,
}

impl<'a> FullField<'a> {
    pub fn new(fs: &'a FullSystem) -> Self {
        FullField { fs, solve: FullSolve::Saddle }
    }
}

impl VectorField for FullField<'_> {
    fn dim(&self) -> usize {
        2 * self.fs.n
    }

    fn eval<S: Scalar>(&self, y: &[S]) -> Result<Vec<S>> {
        let (q, qd) = y.split_at(self.fs.n);
        let (a, _) = self.fs.acceleration(q, qd, self.solve)?;
        let mut out = qd.to_vec();
        out.extend(a);
        Ok(out)
    }

    fn energy(&self, y: &[f64]) -> Option<f64> {
        let (q, qd) = y.split_at(self.fs.n);
        self.fs.energy(q, qd).ok()
    }

    fn constraint_residual(&self, y: &[f64]) -> Option<f64> {
        let (q, qd) = y.split_at(self.fs.n);
        self.fs.constraint_residual(q, qd).ok()
    }
}

/// Geodesic spray of an affine connection.
pub struct GeodesicField<C> {
    pub conn: C,
}

impl<C: ConnectionField> VectorField for GeodesicField<C> {
    fn dim(&self) -> usize {
        2 * self.conn.dim()
    }

    fn eval<S: Scalar>(&self, y: &[S]) -> Result<Vec<S>> {
        let n = self.conn.dim();
        let (q, v) = y.split_at(n);
        let mut out = v.to_vec();
        out.extend(geodesic_rhs(&self.conn.symbols(q)?, v));
        Ok(out)
    }
}

/// Comparison of projected full and reduced trajectories on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleComparison {
    /// Sup over the grid of the base position and velocity mismatch.
    pub deviation: f64,
    pub max_constraint_residual: f64,
    pub full_energy_drift: f64,
    pub reduced_energy_drift: f64,
    pub full: Trajectory,
    pub reduced: Trajectory,
}

pub fn compare_full_reduced(
    fs: &FullSystem,
    sys: &ChaplyginSystem,
    s0: &State,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<OracleComparison> {
    let y0 = fs.lift_initial(sys, s0)?;
    let full = integrate(&FullField::new(fs), &y0, t_span, cfg)?;
    let reduced = integrate(&ReducedField::new(sys), &s0.flat(), t_span, cfg)?;
    if full.len() != reduced.len() {
        return Err(Error::Invalid("full and reduced grids differ".into()));
    }
    let (n, nb) = (fs.dim(), sys.base_dim());
    let mut dev = 0.0f64;
    for (yf, yr) in full.states.iter().zip(&reduced.states) {
        for a in 0..nb {
            dev = dev.max((yf[a] - yr[a]).abs()).max((yf[n + a] - yr[nb + a]).abs());
        }
    }
    Ok(OracleComparison {
        deviation: dev,
        max_constraint_residual: full.max_constraint_residual().unwrap_or(0.0),
        full_energy_drift: full.energy_drift().unwrap_or(0.0),
        reduced_energy_drift: reduced.energy_drift().unwrap_or(0.0),
        full,
        reduced,
    })
}

/// Max pairwise sup-norm deviation among the geodesics of `∇̃, ∇^H₁, ∇^H₂, ∇^{H/2}`.
pub fn geodesic_coincidence(sys: &ChaplyginSystem, s0: &State, t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<f64> {
    if sys.has_potential() {
        return Err(Error::Invalid("geodesic coincidence needs a vanishing potential".into()));
    }
    let kinds = [
        ReducedConnection::Tilde,
        ReducedConnection::Hamel1,
        ReducedConnection::Hamel2,
        ReducedConnection::HamelHalf,
    ];
    let y0 = s0.flat();
    let mut trajs = Vec::with_capacity(4);
    for which in kinds {
        let field = GeodesicField { conn: crate::chaplygin::ReducedConnectionField { sys, which } };
        trajs.push(integrate(&field, &y0, t_span, cfg)?);
    }
    let mut dev = 0.0f64;
    for i in 0..trajs.len() {
        for j in (i + 1)..trajs.len() {
            for (a, b) in trajs[i].states.iter().zip(&trajs[j].states) {
                for (x, y) in a.iter().zip(b) {
                    dev = dev.max((x - y).abs());
                }
            }
        }
    }
    Ok(dev)
}
