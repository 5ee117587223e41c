//! Metrics, affine connections and torsion.
//!
//! Index conventions: connection symbols are stored as `Γ[a][b][c] = Γ^a_{bc}`
//! with `∇_{∂b} ∂c = Γ^a_{bc} ∂a`; torsion is `T^a_{bc} = Γ^a_{bc} − Γ^a_{cb}`.
//! A (0,3) array `K[a][b][c]` is `K_{abc}`.
//!
//! Every derivative here is computed by seeding [`Dual`] numbers, so all
//! functions are generic over the scalar and can themselves be differentiated.
//!
//! The metric connection with prescribed torsion `T` is `Γ̄ = Γ^{LC} + S` with
//! the contorsion
//!
//! ```text
//! g_{ka} S^a_{bc} = ½ (T_{k;bc} − T_{b;ck} − T_{c;bk}),    T_{k;bc} = g_{km} T^m_{bc}
//! ```
//!
//! which has torsion `T` and satisfies `S_{k;bc} = −S_{c;bk}`, the condition for
//! `∇̄g = 0`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::dual::{seed, Scalar};
use crate::error::{Error, Result};
use crate::expr::{Expr, ParsedField, Shape};
use crate::linalg::{Cholesky, Mat};

/// Any smooth map of the coordinates. Expression fields are the only kind.
pub type SmoothMap = ParsedField;

/// Dense `n×n×n` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Array3<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> Array3<S> {
    pub fn zeros(n: usize) -> Self {
        Array3 { n, data: vec![S::zero(); n * n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    data.push(f(a, b, c));
                }
            }
        }
        Array3 { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn map_re(&self) -> Array3<f64> {
        Array3 { n: self.n, data: self.data.iter().map(|x| x.re()).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| libm::fabs(x.re())).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.data.iter().zip(&o.data).map(|(a, b)| libm::fabs(a.re() - b.re())).fold(0.0, f64::max)
    }

    /// `max |A[a][b][c] + A[a][c][b]|`.
    pub fn skew_residual(&self) -> f64 {
        let n = self.n;
        let mut r = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    r = r.max(libm::fabs((self[(a, b, c)] + self[(a, c, b)]).re()));
                }
            }
        }
        r
    }

    /// Part symmetric in the last two indices.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.n, |a, b, c| (self[(a, b, c)] + self[(a, c, b)]).scale(0.5))
    }

    /// `A[a][c][b]`.
    pub fn swap_last(&self) -> Self {
        Self::from_fn(self.n, |a, b, c| self[(a, c, b)])
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::from_fn(self.n, |a, b, c| self[(a, b, c)] + o[(a, b, c)])
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::from_fn(self.n, |a, b, c| self[(a, b, c)] - o[(a, b, c)])
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::from_fn(self.n, |a, b, c| self[(a, b, c)].scale(k))
    }
}

impl<S> Index<(usize, usize, usize)> for Array3<S> {
    type Output = S;
    #[inline]
    fn index(&self, (a, b, c): (usize, usize, usize)) -> &S {
        &self.data[(a * self.n + b) * self.n + c]
    }
}

impl<S> IndexMut<(usize, usize, usize)> for Array3<S> {
    #[inline]
    fn index_mut(&mut self, (a, b, c): (usize, usize, usize)) -> &mut S {
        &mut self.data[(a * self.n + b) * self.n + c]
    }
}

/// (1,2) tensor `T^a_{bc}`: torsion, contorsion, B, C and connection symbols.
pub type Tensor12<S> = Array3<S>;
/// (0,3) tensor `K_{abc}`.
pub type Tensor03<S> = Array3<S>;

/// `T_{k;bc} = g_{km} T^m_{bc}`.
pub fn lower<S: Scalar>(g: &Mat<S>, t: &Tensor12<S>) -> Tensor03<S> {
    let n = t.dim();
    Array3::from_fn(n, |k, b, c| {
        let mut s = S::zero();
        for m in 0..n {
            s = s + g[(k, m)] * t[(m, b, c)];
        }
        s
    })
}

/// `T^a_{bc} = g^{ak} T_{k;bc}`.
pub fn raise<S: Scalar>(ginv: &Mat<S>, t: &Tensor03<S>) -> Tensor12<S> {
    lower(ginv, t)
}

/// Anything that yields a Riemannian metric at a point.
pub trait MetricSource {
    fn dim(&self) -> usize;
    fn metric<S: Scalar>(&self, q: &[S]) -> Result<Mat<S>>;

    /// `g` and `∂_c g` for every coordinate `c`.
    fn metric_and_derivs<S: Scalar>(&self, q: &[S]) -> Result<(Mat<S>, Vec<Mat<S>>)> {
        let n = self.dim();
        let mut g = None;
        let mut dg = Vec::with_capacity(n);
        for c in 0..q.len() {
            let m = self.metric(&seed(q, c))?;
            if g.is_none() {
                g = Some(Mat::from_fn(n, n, |i, j| m[(i, j)].re));
            }
            dg.push(Mat::from_fn(n, n, |i, j| m[(i, j)].eps));
        }
        let g = match g {
            Some(g) => g,
            None => self.metric(q)?,
        };
        Ok((g, dg))
    }
}

/// Symmetric matrix field stored by its upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    n: usize,
    upper: ParsedField,
}

impl MetricField {
    /// `upper` lists `g_{ij}` for `i ≤ j`, row by row.
    pub fn from_upper(variables: Vec<String>, n: usize, upper: Vec<Expr>) -> Self {
        let len = n * (n + 1) / 2;
        MetricField { n, upper: ParsedField::from_exprs(variables, upper, Shape::Vector(len)) }
    }

    /// Take the upper triangle of a full row-major matrix of expressions.
    pub fn from_matrix(variables: Vec<String>, n: usize, full: Vec<Expr>) -> Self {
        assert_eq!(full.len(), n * n, "metric matrix size");
        let mut upper = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                upper.push(full[i * n + j].clone());
            }
        }
        Self::from_upper(variables, n, upper)
    }

    /// Constant diagonal metric.
    pub fn diagonal(variables: Vec<String>, diag: &[f64]) -> Self {
        let n = diag.len();
        let mut full = vec![Expr::Num(0.0); n * n];
        for (i, d) in diag.iter().enumerate() {
            full[i * n + i] = Expr::Num(*d);
        }
        Self::from_matrix(variables, n, full)
    }

    pub fn variables(&self) -> &[String] {
        self.upper.variables()
    }

    pub fn upper(&self) -> &ParsedField {
        &self.upper
    }

    /// Cholesky succeeds at each sample, i.e. the metric is positive definite there.
    pub fn check_positive(&self, samples: &[Vec<f64>]) -> Result<()> {
        for q in samples {
            Cholesky::new(&self.metric(q)?)?;
        }
        Ok(())
    }
}

impl MetricSource for MetricField {
    fn dim(&self) -> usize {
        self.n
    }

    fn metric<S: Scalar>(&self, q: &[S]) -> Result<Mat<S>> {
        let u = self.upper.eval(q)?;
        let n = self.n;
        let mut m = Mat::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m[(i, j)] = u[k];
                m[(j, i)] = u[k];
                k += 1;
            }
        }
        Ok(m)
    }
}

/// Anything that yields connection symbols at a point.
pub trait ConnectionField {
    fn dim(&self) -> usize;
    fn symbols<S: Scalar>(&self, q: &[S]) -> Result<Tensor12<S>>;
}

/// Levi-Civita connection of a metric.
#[derive(Clone, Copy, Debug)]
pub struct LeviCivita<'a, M>(pub &'a M);

impl<M: MetricSource> ConnectionField for LeviCivita<'_, M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn symbols<S: Scalar>(&self, q: &[S]) -> Result<Tensor12<S>> {
        levi_civita(self.0, q)
    }
}

/// Connection with constant symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantConnection(pub Tensor12<f64>);

impl ConnectionField for ConstantConnection {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn symbols<S: Scalar>(&self, _q: &[S]) -> Result<Tensor12<S>> {
        let t = &self.0;
        Ok(Array3::from_fn(t.dim(), |a, b, c| S::from_f64(t[(a, b, c)])))
    }
}

/// Levi-Civita connection `Γ` plus a fixed-torsion contorsion, built pointwise.
pub struct WithTorsion<'a, M, F> {
    pub metric: &'a M,
    pub torsion: F,
}

impl<M, F> ConnectionField for WithTorsion<'_, M, F>
where
    M: MetricSource,
    F: Fn(&[f64]) -> Tensor12<f64>,
{
    fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn symbols<S: Scalar>(&self, q: &[S]) -> Result<Tensor12<S>> {
        let qr: Vec<f64> = q.iter().map(|x| x.re()).collect();
        let t = (self.torsion)(&qr);
        let t = Array3::from_fn(t.dim(), |a, b, c| S::from_f64(t[(a, b, c)]));
        metric_connection_from_torsion(self.metric, &t, q)
    }
}

/// Jacobian `∂f_i/∂q_j` of a field, column `j` obtained by seeding coordinate `j`.
pub fn jacobian<S: Scalar>(f: &SmoothMap, q: &[S]) -> Result<Mat<S>> {
    let m = f.shape().len();
    let n = q.len();
    let mut jac = Mat::zeros(m, n);
    for j in 0..n {
        let col = f.eval(&seed(q, j))?;
        for i in 0..m {
            jac[(i, j)] = col[i].eps;
        }
    }
    Ok(jac)
}

fn christoffel_first<S: Scalar>(dg: &[Mat<S>]) -> Tensor03<S> {
    // [d; b c] = ½(∂_b g_{dc} + ∂_c g_{db} − ∂_d g_{bc})
    let n = dg.len();
    Array3::from_fn(n, |d, b, c| (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]).scale(0.5))
}

/// Levi-Civita symbols `Γ^a_{bc} = ½ g^{ad}(∂_b g_{dc} + ∂_c g_{db} − ∂_d g_{bc})`.
pub fn levi_civita<M: MetricSource, S: Scalar>(g: &M, q: &[S]) -> Result<Tensor12<S>> {
    let (gm, dg) = g.metric_and_derivs(q)?;
    let ginv = Cholesky::new(&gm)?.inverse();
    Ok(raise(&ginv, &christoffel_first(&dg)))
}

fn torsion_skew_check<S: Scalar>(t: &Tensor12<S>) -> Result<()> {
    let scale = 1.0 + t.max_abs();
    let r = t.skew_residual();
    if r > 1e-12 * scale {
        return Err(Error::NonSkewTorsion { residual: r });
    }
    Ok(())
}

/// Contorsion `S` of the unique metric connection with torsion `T` (see module docs).
pub fn contorsion_from_torsion<M: MetricSource, S: Scalar>(
    g: &M,
    t: &Tensor12<S>,
    q: &[S],
) -> Result<Tensor12<S>> {
    torsion_skew_check(t)?;
    let gm = g.metric(q)?;
    let ginv = Cholesky::new(&gm)?.inverse();
    Ok(contorsion_with(&gm, &ginv, t))
}

fn contorsion_with<S: Scalar>(gm: &Mat<S>, ginv: &Mat<S>, t: &Tensor12<S>) -> Tensor12<S> {
    let tl = lower(gm, t);
    let sl = Array3::from_fn(t.dim(), |k, b, c| (tl[(k, b, c)] - tl[(b, c, k)] - tl[(c, b, k)]).scale(0.5));
    raise(ginv, &sl)
}

/// `T^a_{bc} = S^a_{bc} − S^a_{cb}`.
pub fn torsion_from_contorsion<S: Scalar>(s: &Tensor12<S>) -> Tensor12<S> {
    s.sub(&s.swap_last())
}

/// Symbols of the metric connection with torsion `T`: Levi-Civita plus contorsion.
pub fn metric_connection_from_torsion<M: MetricSource, S: Scalar>(
    g: &M,
    t: &Tensor12<S>,
    q: &[S],
) -> Result<Tensor12<S>> {
    torsion_skew_check(t)?;
    let (gm, dg) = g.metric_and_derivs(q)?;
    let ginv = Cholesky::new(&gm)?.inverse();
    let lc = raise(&ginv, &christoffel_first(&dg));
    Ok(lc.add(&contorsion_with(&gm, &ginv, t)))
}

/// `max |∂_c g_{ab} − Γ^d_{ca} g_{db} − Γ^d_{cb} g_{ad}|` at `q`.
pub fn metric_residual<M: MetricSource>(g: &M, gamma: &Tensor12<f64>, q: &[f64]) -> Result<f64> {
    let (gm, dg) = g.metric_and_derivs(q)?;
    let n = gm.rows();
    let mut r = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut s = dg[c][(a, b)];
                for d in 0..n {
                    s -= gamma[(d, c, a)] * gm[(d, b)] + gamma[(d, c, b)] * gm[(a, d)];
                }
                r = r.max(s.abs());
            }
        }
    }
    Ok(r)
}

/// Metric-compatibility test of a connection; returns the verdict and the residual.
pub fn is_metric_connection<M: MetricSource, C: ConnectionField>(
    g: &M,
    conn: &C,
    q: &[f64],
    tol: f64,
) -> Result<(bool, f64)> {
    let r = metric_residual(g, &conn.symbols(q)?, q)?;
    Ok((r <= tol, r))
}

/// `∇_X Y + ∇_Y X` at `q` for vector fields given as expression fields.
pub fn symmetric_product<C: ConnectionField>(
    conn: &C,
    x: &SmoothMap,
    y: &SmoothMap,
    q: &[f64],
) -> Result<Vec<f64>> {
    let xv = x.eval(q)?;
    let yv = y.eval(q)?;
    let dx = jacobian(x, q)?;
    let dy = jacobian(y, q)?;
    let gamma = conn.symbols(q)?;
    let n = q.len();
    let mut out = vec![0.0; n];
    for (a, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for b in 0..n {
            s += xv[b] * dy[(a, b)] + yv[b] * dx[(a, b)];
            for c in 0..n {
                s += (gamma[(a, b, c)] + gamma[(a, c, b)]) * xv[b] * yv[c];
            }
        }
        *o = s;
    }
    Ok(out)
}

/// Geodesic acceleration `a^a = −Γ^a_{(bc)} v^b v^c`, symmetrized explicitly.
pub fn geodesic_rhs<S: Scalar>(gamma: &Tensor12<S>, v: &[S]) -> Vec<S> {
    let sym = gamma.symmetrized();
    let n = v.len();
    (0..n)
        .map(|a| {
            let mut s = S::zero();
            for b in 0..n {
                for c in 0..n {
                    s = s + sym[(a, b, c)] * v[b] * v[c];
                }
            }
            -s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use alloc::string::ToString;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn particle_base() -> MetricField {
        let vars = ["x", "y"];
        MetricField::from_upper(
            names(&vars),
            2,
            vec![parse("1+y^2", &vars).unwrap(), Expr::Num(0.0), Expr::Num(1.0)],
        )
    }

    #[test]
    fn euclidean_is_flat() {
        let g = MetricField::diagonal(names(&["x", "y", "z"]), &[1.0, 1.0, 1.0]);
        assert_eq!(levi_civita(&g, &[0.3, -1.0, 2.0]).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn particle_base_symbols() {
        let g = particle_base();
        let y = 0.7;
        let gam = levi_civita(&g, &[0.2, y]).unwrap();
        assert!((gam[(0, 0, 1)] - y / (1.0 + y * y)).abs() < 1e-15);
        assert!((gam[(0, 1, 0)] - y / (1.0 + y * y)).abs() < 1e-15);
        assert!((gam[(1, 0, 0)] + y).abs() < 1e-15);
        assert_eq!(gam[(1, 1, 1)], 0.0);
        assert!(metric_residual(&g, &gam, &[0.2, y]).unwrap() < 1e-14);
    }

    #[test]
    fn jacobian_of_monomial() {
        let f = ParsedField::parse(&["x", "y"], &["x^2*y"], Shape::Scalar).unwrap();
        let j = jacobian(&f, &[2.0, 3.0]).unwrap();
        assert_eq!((j[(0, 0)], j[(0, 1)]), (12.0, 4.0));
        let id = ParsedField::parse(&["x", "y"], &["x", "y"], Shape::Vector(2)).unwrap();
        assert_eq!(jacobian(&id, &[5.0, -1.0]).unwrap(), Mat::identity(2));
    }

    #[test]
    fn non_skew_torsion_rejected() {
        let g = MetricField::diagonal(names(&["x", "y"]), &[1.0, 1.0]);
        let mut t = Array3::zeros(2);
        t[(0, 0, 1)] = 1.0;
        assert!(matches!(
            metric_connection_from_torsion(&g, &t, &[0.0, 0.0]),
            Err(Error::NonSkewTorsion { .. })
        ));
    }

    #[test]
    fn singular_metric_rejected() {
        let g = MetricField::diagonal(names(&["x"]), &[-1.0]);
        assert!(matches!(levi_civita(&g, &[0.0]), Err(Error::SingularMetric { .. })));
    }

    #[test]
    fn geodesic_rhs_uses_symmetric_part() {
        let mut gam = Array3::zeros(2);
        gam[(0, 0, 1)] = 1.0;
        gam[(0, 1, 0)] = -1.0;
        assert_eq!(geodesic_rhs(&gam, &[1.0, 2.0]), vec![0.0, 0.0]);
        gam[(1, 0, 0)] = 2.0;
        assert_eq!(geodesic_rhs(&gam, &[1.0, 2.0]), vec![0.0, -2.0]);
    }
}
