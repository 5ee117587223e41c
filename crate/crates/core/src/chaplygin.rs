//! Bundle-local Chaplygin data and the reduced geometry it induces on the base.
//!
//! A system is given in one trivialization by base coordinates `q^a`, a Lie
//! algebra with structure constants `[e_j, e_k] = c^i_{jk} e_i`, connection
//! coefficients `Γ^i_a(q)` (constraints `ξ^i = −Γ^i_a q̇^a`, `ξ` the body
//! velocity) and the blocks of a G-invariant metric evaluated at the group
//! identity. From these, pointwise:
//!
//! ```text
//! g̃      = g_bb − g_bg Γ − Γᵀ g_bgᵀ + Γᵀ g_gg Γ
//! Ω^i_bc = ∂_b Γ^i_c − ∂_c Γ^i_b − c^i_jk Γ^j_b Γ^k_c
//! J_ai   = g_bg[a,i] − g_gg[i,j] Γ^j_a
//! K̃_abc  = J_ai Ω^i_bc
//! B^c_ab = g̃^cd K̃_abd,    C^c_ab = g̃^cd K̃_dab
//! α_b    = K̃_acb v^a v^c,  Ξ_ab = v^e K̃_eab,  β_e = B^c_ec + B^c_ce
//! ```
//!
//! The connections on the base are `∇̃ = LC + ½(B_ab + B_ba − C_ab)`,
//! `∇^H₁ = LC + B_ab`, `∇^H₂ = LC + B_ba` and `∇^{H/2}` their mean.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dual::{seed, Dual, Scalar};
use crate::error::{Error, Result};
use crate::expr::{Expr, ParsedField, Shape};
use crate::geom::{metric_residual, raise, Array3, ConnectionField, MetricField, MetricSource, Tensor03, Tensor12};
use crate::linalg::{Cholesky, Mat};

/// Raw description of a system; validated by [`ChaplyginSystem::new`].
#[derive(Clone, Debug)]
pub struct ChaplyginData {
    pub name: String,
    pub base: Vec<String>,
    pub group_dim: usize,
    /// `c^i_{jk}` at index `(i * k + j) * k + k'`.
    pub structure: Vec<f64>,
    /// `Γ^i_a`, row-major `k × n_b`.
    pub gamma: Vec<Expr>,
    /// Row-major `n_b × n_b`; must be structurally symmetric.
    pub g_bb: Vec<Expr>,
    /// Row-major `n_b × k`.
    pub g_bg: Vec<Expr>,
    /// Row-major `k × k`; must be structurally symmetric.
    pub g_gg: Vec<Expr>,
    pub potential: Option<Expr>,
}

#[derive(Clone, Debug)]
pub struct ChaplyginSystem {
    name: String,
    nb: usize,
    k: usize,
    structure: Vec<f64>,
    gamma: ParsedField,
    g_bb: MetricField,
    g_bg: ParsedField,
    g_gg: MetricField,
    potential: Option<ParsedField>,
}

fn symmetric(n: usize, m: &[Expr], what: &str) -> Result<()> {
    for i in 0..n {
        for j in (i + 1)..n {
            if m[i * n + j] != m[j * n + i] {
                return Err(Error::Invalid(alloc::format!("{what} is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

impl ChaplyginSystem {
    pub fn new(d: ChaplyginData) -> Result<Self> {
        let nb = d.base.len();
        let k = d.group_dim;
        let check_len = |v: usize, want: usize, what: &str| {
            if v == want {
                Ok(())
            } else {
                Err(Error::Invalid(alloc::format!("{what}: expected {want} entries, found {v}")))
            }
        };
        check_len(d.structure.len(), k * k * k, "structure constants")?;
        check_len(d.gamma.len(), k * nb, "connection coefficients")?;
        check_len(d.g_bb.len(), nb * nb, "g_bb")?;
        check_len(d.g_bg.len(), nb * k, "g_bg")?;
        check_len(d.g_gg.len(), k * k, "g_gg")?;
        symmetric(nb, &d.g_bb, "g_bb")?;
        symmetric(k, &d.g_gg, "g_gg")?;
        let all = d.gamma.iter().chain(&d.g_bb).chain(&d.g_bg).chain(&d.g_gg).chain(d.potential.iter());
        for e in all {
            if e.max_var().is_some_and(|m| m >= nb) {
                return Err(Error::Invalid("expression references a non-base coordinate".into()));
            }
        }
        let c = |i: usize, j: usize, l: usize| d.structure[(i * k + j) * k + l];
        let mut skew = 0.0f64;
        let mut jacobi = 0.0f64;
        for i in 0..k {
            for a in 0..k {
                for b in 0..k {
                    skew = skew.max((c(i, a, b) + c(i, b, a)).abs());
                    for e in 0..k {
                        // [[e_a,e_b],e_e] + cyclic
                        let mut s = 0.0;
                        for m in 0..k {
                            s += c(m, a, b) * c(i, m, e) + c(m, b, e) * c(i, m, a) + c(m, e, a) * c(i, m, b);
                        }
                        jacobi = jacobi.max(s.abs());
                    }
                }
            }
        }
        if skew > 1e-12 {
            return Err(Error::Invalid(alloc::format!("structure constants not skew (residual {skew:e})")));
        }
        if jacobi > 1e-12 {
            return Err(Error::Invalid(alloc::format!("Jacobi identity fails (residual {jacobi:e})")));
        }
        let base = d.base;
        Ok(ChaplyginSystem {
            name: d.name,
            nb,
            k,
            structure: d.structure,
            gamma: ParsedField::from_exprs(base.clone(), d.gamma, Shape::Matrix(k, nb)),
            g_bb: MetricField::from_matrix(base.clone(), nb, d.g_bb),
            g_bg: ParsedField::from_exprs(base.clone(), d.g_bg, Shape::Matrix(nb, k)),
            g_gg: MetricField::from_matrix(base.clone(), k, d.g_gg),
            potential: d
                .potential
                .map(|p| ParsedField::from_exprs(base, alloc::vec![p], Shape::Scalar)),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_dim(&self) -> usize {
        self.nb
    }

    pub fn group_dim(&self) -> usize {
        self.k
    }

    pub fn base_names(&self) -> &[String] {
        self.gamma.variables()
    }

    pub fn structure(&self, i: usize, j: usize, l: usize) -> f64 {
        self.structure[(i * self.k + j) * self.k + l]
    }

    pub fn is_abelian(&self) -> bool {
        self.structure.iter().all(|c| *c == 0.0)
    }

    pub fn gamma_field(&self) -> &ParsedField {
        &self.gamma
    }

    pub fn g_bb(&self) -> &MetricField {
        &self.g_bb
    }

    pub fn g_bg(&self) -> &ParsedField {
        &self.g_bg
    }

    pub fn g_gg(&self) -> &MetricField {
        &self.g_gg
    }

    pub fn potential_field(&self) -> Option<&ParsedField> {
        self.potential.as_ref()
    }

    pub fn has_potential(&self) -> bool {
        self.potential.is_some()
    }

    pub fn potential<S: Scalar>(&self, q: &[S]) -> Result<S> {
        match &self.potential {
            Some(p) => Ok(p.eval(q)?[0]),
            None => Ok(S::zero()),
        }
    }

    /// `Γ^i_a(q)` as a `k × n_b` matrix.
    pub fn gamma<S: Scalar>(&self, q: &[S]) -> Result<Mat<S>> {
        Ok(Mat::from_vec(self.k, self.nb, self.gamma.eval(q)?))
    }

    fn blocks<S: Scalar>(&self, q: &[S]) -> Result<Blocks<S>> {
        Ok(Blocks {
            gbb: self.g_bb.metric(q)?,
            gbg: Mat::from_vec(self.nb, self.k, self.g_bg.eval(q)?),
            ggg: self.g_gg.metric(q)?,
            gam: self.gamma(q)?,
        })
    }

    /// Full `(n_b + k)` block metric at the group identity.
    pub fn block_metric<S: Scalar>(&self, q: &[S]) -> Result<Mat<S>> {
        let b = self.blocks(q)?;
        let (nb, k) = (self.nb, self.k);
        Ok(Mat::from_fn(nb + k, nb + k, |r, c| match (r < nb, c < nb) {
            (true, true) => b.gbb[(r, c)],
            (true, false) => b.gbg[(r, c - nb)],
            (false, true) => b.gbg[(c, r - nb)],
            (false, false) => b.ggg[(r - nb, c - nb)],
        }))
    }

    /// Block metric positive definite at every sample.
    pub fn check_positive(&self, samples: &[Vec<f64>]) -> Result<()> {
        for q in samples {
            Cholesky::new(&self.block_metric(q)?).map_err(|_| Error::SingularMetric { context: "block metric" })?;
        }
        Ok(())
    }

    /// Reduced metric `g̃_ab`.
    pub fn reduced_metric<S: Scalar>(&self, q: &[S]) -> Result<Mat<S>> {
        Ok(self.blocks(q)?.reduced())
    }

    /// Curvature coefficients `Ω^i_bc`, one `n_b × n_b` matrix per `i`.
    pub fn curvature_coeffs<S: Scalar>(&self, q: &[S]) -> Result<Vec<Mat<S>>> {
        Ok(self.first_order(q)?.omega(self))
    }

    /// `J_ai`, an `n_b × k` matrix.
    pub fn momentum_pairing<S: Scalar>(&self, q: &[S]) -> Result<Mat<S>> {
        Ok(self.blocks(q)?.pairing())
    }

    /// `K̃_abc = J_ai Ω^i_bc`.
    pub fn metric_connection_tensor<S: Scalar>(&self, q: &[S]) -> Result<Tensor03<S>> {
        let fo = self.first_order(q)?;
        Ok(k_tilde(&fo.blocks.pairing(), &fo.omega(self)))
    }

    /// Values and first derivatives of every q-dependent field.
    fn first_order<S: Scalar>(&self, q: &[S]) -> Result<FirstOrder<S>> {
        let nb = self.nb;
        let mut blocks = None;
        let mut d_gamma = Vec::with_capacity(nb);
        let mut d_gt = Vec::with_capacity(nb);
        let mut d_pot = Vec::with_capacity(nb);
        let mut pot = S::zero();
        for b in 0..nb {
            let qd = seed(q, b);
            let bl: Blocks<Dual<S>> = self.blocks(&qd)?;
            let gt = bl.reduced();
            d_gamma.push(eps(&bl.gam));
            d_gt.push(eps(&gt));
            let p = self.potential(&qd)?;
            d_pot.push(p.eps);
            if blocks.is_none() {
                blocks = Some(bl.re());
                pot = p.re;
            }
        }
        let blocks = match blocks {
            Some(b) => b,
            None => self.blocks(q)?,
        };
        Ok(FirstOrder { blocks, d_gamma, d_gt, pot, d_pot })
    }

    /// `β_e = B^c_ec + B^c_ce` from `Γ`, its first derivatives and `g̃`, skipping the connection symbols.
    pub fn beta<S: Scalar>(&self, q: &[S]) -> Result<Vec<S>> {
        let nb = self.nb;
        let mut d_gamma = Vec::with_capacity(nb);
        for b in 0..nb {
            d_gamma.push(eps(&self.gamma(&seed(q, b))?));
        }
        let fo = FirstOrder { blocks: self.blocks(q)?, d_gamma, d_gt: Vec::new(), pot: S::zero(), d_pot: Vec::new() };
        let gt = fo.blocks.reduced();
        let gt_inv = Cholesky::new(&gt).map_err(|_| Error::SingularMetric { context: "reduced metric" })?.inverse();
        let kt = k_tilde(&fo.blocks.pairing(), &fo.omega(self));
        Ok((0..nb)
            .map(|e| {
                let mut s = S::zero();
                for c in 0..nb {
                    for d in 0..nb {
                        s = s + gt_inv[(c, d)] * (kt[(e, c, d)] + kt[(c, e, d)]);
                    }
                }
                s
            })
            .collect())
    }

    /// All reduced objects at `q`.
    pub fn geometry_at<S: Scalar>(&self, q: &[S]) -> Result<ReducedGeometryAt<S>> {
        let nb = self.nb;
        let fo = self.first_order(q)?;
        let gt = fo.blocks.reduced();
        let chol = Cholesky::new(&gt).map_err(|_| Error::SingularMetric { context: "reduced metric" })?;
        let gt_inv = chol.inverse();
        let first = Array3::from_fn(nb, |d, b, c| {
            (fo.d_gt[b][(d, c)] + fo.d_gt[c][(d, b)] - fo.d_gt[d][(b, c)]).scale(0.5)
        });
        let lc = raise(&gt_inv, &first);
        let omega = fo.omega(self);
        let pairing = fo.blocks.pairing();
        let kt = k_tilde(&pairing, &omega);
        let b = Array3::from_fn(nb, |c, a, bb| {
            let mut s = S::zero();
            for d in 0..nb {
                s = s + gt_inv[(c, d)] * kt[(a, bb, d)];
            }
            s
        });
        let c = raise(&gt_inv, &kt);
        let bt = b.swap_last();
        let tilde = lc.add(&b.add(&bt).sub(&c).scale(0.5));
        let h1 = lc.add(&b);
        let h2 = lc.add(&bt);
        let half = h1.add(&h2).scale(0.5);
        let beta = (0..nb)
            .map(|e| {
                let mut s = S::zero();
                for cc in 0..nb {
                    s = s + b[(cc, e, cc)] + b[(cc, cc, e)];
                }
                s
            })
            .collect();
        Ok(ReducedGeometryAt {
            q: q.to_vec(),
            gt,
            gt_inv,
            lc,
            omega,
            pairing,
            k_tilde: kt,
            b,
            c,
            tilde,
            h1,
            h2,
            half,
            beta,
            potential: fo.pot,
            d_potential: fo.d_pot,
        })
    }

    /// Classifies the system over sample points.
    pub fn classify(&self, samples: &[Vec<f64>], tol: f64) -> Result<Classification> {
        let mut rep = Classification {
            class: SystemClass::HamiltonianReducible,
            b_symmetric_part: 0.0,
            h2_metric_residual: 0.0,
            half_metric_residual: 0.0,
            half_minus_lc: 0.0,
            tilde_minus_half: 0.0,
            tilde_minus_lc: 0.0,
        };
        for q in samples {
            let geo = self.geometry_at(q.as_slice())?;
            rep.b_symmetric_part = rep.b_symmetric_part.max(geo.b.add(&geo.b.swap_last()).max_abs());
            rep.h2_metric_residual = rep.h2_metric_residual.max(metric_residual(self, &geo.h2, q)?);
            rep.half_metric_residual = rep.half_metric_residual.max(metric_residual(self, &geo.half, q)?);
            rep.half_minus_lc = rep.half_minus_lc.max(geo.half.max_abs_diff(&geo.lc));
            rep.tilde_minus_half = rep.tilde_minus_half.max(geo.tilde.max_abs_diff(&geo.half));
            rep.tilde_minus_lc = rep.tilde_minus_lc.max(geo.tilde.max_abs_diff(&geo.lc));
        }
        if rep.b_symmetric_part > tol {
            rep.class = SystemClass::GyroscopicallyForced;
        }
        Ok(rep)
    }

    /// Exterior derivative of `Ξ = ½ Ξ_ab dq^a ∧ dq^b` at `(q, v)`.
    pub fn xi_exterior_derivative(&self, q: &[f64], v: &[f64]) -> Result<XiDerivative> {
        let nb = self.nb;
        let mut dxi = Vec::with_capacity(nb);
        let vd: Vec<Dual<f64>> = v.iter().map(|x| Dual::constant(*x)).collect();
        for c in 0..nb {
            let geo = self.geometry_at(&seed(q, c))?;
            dxi.push(eps(&geo.xi(&vd)));
        }
        let dq = Array3::from_fn(nb, |c, a, b| dxi[c][(a, b)] + dxi[a][(b, c)] + dxi[b][(c, a)]);
        let dv = self.metric_connection_tensor(q)?;
        Ok(XiDerivative { dq, dv })
    }
}

impl MetricSource for ChaplyginSystem {
    fn dim(&self) -> usize {
        self.nb
    }

    fn metric<S: Scalar>(&self, q: &[S]) -> Result<Mat<S>> {
        self.reduced_metric(q)
    }
}

struct Blocks<S> {
    gbb: Mat<S>,
    gbg: Mat<S>,
    ggg: Mat<S>,
    gam: Mat<S>,
}

impl<S: Scalar> Blocks<S> {
    fn reduced(&self) -> Mat<S> {
        let gg = self.gbg.matmul(&self.gam);
        let gt = self.gam.transpose();
        let n = self.gbb.rows();
        let quad = gt.matmul(&self.ggg).matmul(&self.gam);
        let m = Mat::from_fn(n, n, |a, b| self.gbb[(a, b)] - gg[(a, b)] - gg[(b, a)] + quad[(a, b)]);
        // exact symmetry
        Mat::from_fn(n, n, |a, b| if a <= b { m[(a, b)] } else { m[(b, a)] })
    }

    fn pairing(&self) -> Mat<S> {
        let x = self.ggg.matmul(&self.gam);
        Mat::from_fn(self.gbb.rows(), self.ggg.rows(), |a, i| self.gbg[(a, i)] - x[(i, a)])
    }
}

impl<S: Scalar> Blocks<Dual<S>> {
    fn re(&self) -> Blocks<S> {
        Blocks { gbb: re(&self.gbb), gbg: re(&self.gbg), ggg: re(&self.ggg), gam: re(&self.gam) }
    }
}

fn re<S: Scalar>(m: &Mat<Dual<S>>) -> Mat<S> {
    Mat::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)].re)
}

fn eps<S: Scalar>(m: &Mat<Dual<S>>) -> Mat<S> {
    Mat::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)].eps)
}

struct FirstOrder<S> {
    blocks: Blocks<S>,
    d_gamma: Vec<Mat<S>>,
    d_gt: Vec<Mat<S>>,
    pot: S,
    d_pot: Vec<S>,
}

impl<S: Scalar> FirstOrder<S> {
    fn omega(&self, sys: &ChaplyginSystem) -> Vec<Mat<S>> {
        let (nb, k) = (sys.nb, sys.k);
        let g = &self.blocks.gam;
        (0..k)
            .map(|i| {
                Mat::from_fn(nb, nb, |b, c| {
                    let mut s = self.d_gamma[b][(i, c)] - self.d_gamma[c][(i, b)];
                    for j in 0..k {
                        for l in 0..k {
                            let cijl = sys.structure(i, j, l);
                            if cijl != 0.0 {
                                s = s - (g[(j, b)] * g[(l, c)]).scale(cijl);
                            }
                        }
                    }
                    s
                })
            })
            .collect()
    }
}

fn k_tilde<S: Scalar>(pairing: &Mat<S>, omega: &[Mat<S>]) -> Tensor03<S> {
    let nb = pairing.rows();
    Array3::from_fn(nb, |a, b, c| {
        let mut s = S::zero();
        for (i, om) in omega.iter().enumerate() {
            s = s + pairing[(a, i)] * om[(b, c)];
        }
        s
    })
}

/// Every reduced object at one base point.
#[derive(Clone, Debug)]
pub struct ReducedGeometryAt<S> {
    pub q: Vec<S>,
    pub gt: Mat<S>,
    pub gt_inv: Mat<S>,
    pub lc: Tensor12<S>,
    pub omega: Vec<Mat<S>>,
    pub pairing: Mat<S>,
    pub k_tilde: Tensor03<S>,
    pub b: Tensor12<S>,
    pub c: Tensor12<S>,
    pub tilde: Tensor12<S>,
    pub h1: Tensor12<S>,
    pub h2: Tensor12<S>,
    pub half: Tensor12<S>,
    pub beta: Vec<S>,
    pub potential: S,
    pub d_potential: Vec<S>,
}

/// Symbols of one of the reduced connections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReducedConnection {
    LeviCivita,
    Tilde,
    Hamel1,
    Hamel2,
    HamelHalf,
}

impl ReducedConnection {
    pub const ALL: [ReducedConnection; 5] = [
        ReducedConnection::LeviCivita,
        ReducedConnection::Tilde,
        ReducedConnection::Hamel1,
        ReducedConnection::Hamel2,
        ReducedConnection::HamelHalf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReducedConnection::LeviCivita => "levi_civita",
            ReducedConnection::Tilde => "tilde",
            ReducedConnection::Hamel1 => "hamel_1",
            ReducedConnection::Hamel2 => "hamel_2",
            ReducedConnection::HamelHalf => "hamel_half",
        }
    }
}

impl<S: Scalar> ReducedGeometryAt<S> {
    pub fn dim(&self) -> usize {
        self.gt.rows()
    }

    pub fn symbols(&self, which: ReducedConnection) -> &Tensor12<S> {
        match which {
            ReducedConnection::LeviCivita => &self.lc,
            ReducedConnection::Tilde => &self.tilde,
            ReducedConnection::Hamel1 => &self.h1,
            ReducedConnection::Hamel2 => &self.h2,
            ReducedConnection::HamelHalf => &self.half,
        }
    }

    /// `α_b = K̃_acb v^a v^c`.
    pub fn alpha<T: Scalar + From<S>>(&self, v: &[T]) -> Vec<T> {
        let n = self.dim();
        (0..n)
            .map(|b| {
                let mut s = T::zero();
                for a in 0..n {
                    for c in 0..n {
                        s = s + T::from(self.k_tilde[(a, c, b)]) * v[a] * v[c];
                    }
                }
                s
            })
            .collect()
    }

    /// `α_b = −p_i Ω^i_bc v^c` with `p_i = J_ai v^a`.
    pub fn alpha_from_curvature(&self, v: &[S]) -> Vec<S> {
        let n = self.dim();
        let k = self.omega.len();
        let p: Vec<S> = (0..k)
            .map(|i| (0..n).fold(S::zero(), |s, a| s + self.pairing[(a, i)] * v[a]))
            .collect();
        (0..n)
            .map(|b| {
                let mut s = S::zero();
                for (i, om) in self.omega.iter().enumerate() {
                    for c in 0..n {
                        s = s + p[i] * om[(b, c)] * v[c];
                    }
                }
                -s
            })
            .collect()
    }

    /// `Ξ_ab = v^e K̃_eab`.
    pub fn xi<T: Scalar + From<S>>(&self, v: &[T]) -> Mat<T> {
        let n = self.dim();
        Mat::from_fn(n, n, |a, b| {
            let mut s = T::zero();
            for e in 0..n {
                s = s + v[e] * T::from(self.k_tilde[(e, a, b)]);
            }
            s
        })
    }

    /// Antisymmetrization of `v^e B^c_ea g̃_bc`, the other displayed form of `Ξ`.
    pub fn xi_from_contorsion(&self, v: &[S]) -> Mat<S> {
        let n = self.dim();
        let x = Mat::from_fn(n, n, |a, b| {
            let mut s = S::zero();
            for e in 0..n {
                for c in 0..n {
                    s = s + v[e] * self.b[(c, e, a)] * self.gt[(b, c)];
                }
            }
            s
        });
        Mat::from_fn(n, n, |a, b| (x[(a, b)] - x[(b, a)]).scale(0.5))
    }

    /// `h = β_e v^e`.
    pub fn h(&self, v: &[S]) -> S {
        self.beta.iter().zip(v).fold(S::zero(), |s, (b, x)| s + *b * *x)
    }

    /// `h = g̃^ab ∂α_b/∂v^a`, differentiating `α` in the velocities.
    pub fn h_from_alpha(&self, v: &[S]) -> S {
        let n = self.dim();
        let mut s = S::zero();
        for a in 0..n {
            let da = self.alpha_generic(&seed(v, a));
            for (b, x) in da.iter().enumerate() {
                s = s + self.gt_inv[(a, b)] * x.eps;
            }
        }
        s
    }

    fn alpha_generic(&self, v: &[Dual<S>]) -> Vec<Dual<S>> {
        let n = self.dim();
        (0..n)
            .map(|b| {
                let mut s = Dual::<S>::zero();
                for a in 0..n {
                    for c in 0..n {
                        s = s + Dual::constant(self.k_tilde[(a, c, b)]) * v[a] * v[c];
                    }
                }
                s
            })
            .collect()
    }

    /// Reduced acceleration `−g̃⁻¹(α + ∂Ṽ) − Γ^{LC}(v, v)`.
    pub fn acceleration(&self, v: &[S]) -> Vec<S> {
        let n = self.dim();
        let alpha = self.alpha(v);
        let f: Vec<S> = (0..n).map(|b| alpha[b] + self.d_potential[b]).collect();
        let w = self.gt_inv.matvec(&f);
        let geo = crate::geom::geodesic_rhs(&self.lc, v);
        (0..n).map(|a| geo[a] - w[a]).collect()
    }

    /// `E = ½ g̃(v, v) + Ṽ`.
    pub fn energy(&self, v: &[S]) -> S {
        self.gt.form(v, v).scale(0.5) + self.potential
    }
}

/// Connection field on the base given by one of the reduced connections.
pub struct ReducedConnectionField<'a> {
    pub sys: &'a ChaplyginSystem,
    pub which: ReducedConnection,
}

impl ConnectionField for ReducedConnectionField<'_> {
    fn dim(&self) -> usize {
        self.sys.nb
    }

    fn symbols<S: Scalar>(&self, q: &[S]) -> Result<Tensor12<S>> {
        Ok(self.sys.geometry_at(q)?.symbols(self.which).clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemClass {
    /// `B` skew: no gyroscopic force.
    HamiltonianReducible,
    GyroscopicallyForced,
}

/// Classification plus the residuals of the equivalent predicates.
#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub class: SystemClass,
    /// `max |B_ab + B_ba|`.
    pub b_symmetric_part: f64,
    pub h2_metric_residual: f64,
    pub half_metric_residual: f64,
    /// `max |∇^{H/2} − LC|`.
    pub half_minus_lc: f64,
    pub tilde_minus_half: f64,
    pub tilde_minus_lc: f64,
}

/// Coefficients of `dΞ`: the `dq^c ∧ dq^a ∧ dq^b` part (cyclic sum) and the `dv^e ∧ dq^a ∧ dq^b` part.
#[derive(Clone, Debug)]
pub struct XiDerivative {
    pub dq: Array3<f64>,
    pub dv: Array3<f64>,
}

impl XiDerivative {
    pub fn max_abs(&self) -> f64 {
        self.dq.max_abs().max(self.dv.max_abs())
    }
}

/// Sample points on a regular grid over a box (inclusive corners).
pub fn grid(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    let total = per_axis.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut r = idx;
        let mut q = vec![0.0; n];
        for (d, x) in q.iter_mut().enumerate() {
            let i = r % per_axis;
            r /= per_axis;
            let t = if per_axis > 1 { i as f64 / (per_axis - 1) as f64 } else { 0.5 };
            *x = lo[d] + t * (hi[d] - lo[d]);
        }
        out.push(q);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use alloc::string::ToString;

    fn modified_particle() -> ChaplyginSystem {
        let vars = ["x", "y"];
        let p = |s: &str| parse(s, &vars).unwrap();
        ChaplyginSystem::new(ChaplyginData {
            name: "test".into(),
            base: vars.iter().map(|s| s.to_string()).collect(),
            group_dim: 1,
            structure: vec![0.0],
            gamma: vec![p("-y*x"), p("0")],
            g_bb: vec![p("1"), p("0"), p("0"), p("1")],
            g_bg: vec![p("0"), p("0")],
            g_gg: vec![p("1")],
            potential: None,
        })
        .unwrap()
    }

    #[test]
    fn counter_example_fields() {
        let sys = modified_particle();
        let (x, y) = (1.3, -0.4);
        let geo = sys.geometry_at(&[x, y]).unwrap();
        assert!((geo.omega[0][(0, 1)] - x).abs() < 1e-15);
        assert!((geo.pairing[(0, 0)] - y * x).abs() < 1e-15);
        assert!((geo.k_tilde[(0, 0, 1)] - x * x * y).abs() < 1e-15);
        assert!(geo.k_tilde[(1, 0, 1)].abs() < 1e-15);
        let d = 1.0 + x * x * y * y;
        assert!((geo.b[(1, 0, 0)] - x * x * y).abs() < 1e-14);
        assert!((geo.b[(0, 0, 1)] + x * x * y / d).abs() < 1e-14);
        assert!((geo.beta[1] + x * x * y / d).abs() < 1e-14);
        assert!(geo.beta[0].abs() < 1e-15);
    }

    #[test]
    fn bad_structure_constants_rejected() {
        let vars = ["x"];
        let p = |s: &str| parse(s, &vars).unwrap();
        let mut st = vec![0.0; 8];
        st[1] = 1.0; // c^0_{01} without its skew partner
        let r = ChaplyginSystem::new(ChaplyginData {
            name: "bad".into(),
            base: vec!["x".into()],
            group_dim: 2,
            structure: st,
            gamma: vec![p("0"), p("0")],
            g_bb: vec![p("1")],
            g_bg: vec![p("0"), p("0")],
            g_gg: vec![p("1"), p("0"), p("0"), p("1")],
            potential: None,
        });
        assert!(matches!(r, Err(Error::Invalid(_))));
    }

    #[test]
    fn asymmetric_block_rejected() {
        let vars = ["x", "y"];
        let p = |s: &str| parse(s, &vars).unwrap();
        let r = ChaplyginSystem::new(ChaplyginData {
            name: "bad".into(),
            base: vars.iter().map(|s| s.to_string()).collect(),
            group_dim: 1,
            structure: vec![0.0],
            gamma: vec![p("0"), p("0")],
            g_bb: vec![p("1"), p("x"), p("0"), p("1")],
            g_bg: vec![p("0"), p("0")],
            g_gg: vec![p("1")],
            potential: None,
        });
        assert!(r.is_err());
    }

    #[test]
    fn grid_covers_corners() {
        let g = grid(&[0.0, -1.0], &[1.0, 1.0], 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.0, -1.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
    }
}
