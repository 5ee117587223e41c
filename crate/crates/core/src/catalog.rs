//! Built-in systems: each entry carries the reduced model, an independent
//! full-space model written from the physical Lagrangian and constraints, the
//! group model used for reconstruction, and closed-form reference values.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::chaplygin::{ChaplyginData, ChaplyginSystem};
use crate::dynamics::{FullSystem, State};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::Mat;
use crate::reconstruction::GroupModel;

pub const NAMES: [&str; 4] = ["mobile_robot", "two_wheeled_robot", "particle_modified", "particle_classical"];

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub unit: &'static str,
    pub default: f64,
    pub description: &'static str,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    MobileRobot,
    TwoWheeledRobot,
    ParticleModified,
    ParticleClassical,
}

impl Kind {
    pub fn from_name(name: &str) -> Option<Kind> {
        match name {
            "mobile_robot" => Some(Kind::MobileRobot),
            "two_wheeled_robot" => Some(Kind::TwoWheeledRobot),
            "particle_modified" => Some(Kind::ParticleModified),
            "particle_classical" => Some(Kind::ParticleClassical),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::MobileRobot => "mobile_robot",
            Kind::TwoWheeledRobot => "two_wheeled_robot",
            Kind::ParticleModified => "particle_modified",
            Kind::ParticleClassical => "particle_classical",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Kind::MobileRobot => "three-wheeled robot with fixed body orientation, Q = S1 x S1 x R2, G = R2",
            Kind::TwoWheeledRobot => "two-wheeled planar carriage, Q = S1 x S1 x SE(2), G = SE(2)",
            Kind::ParticleModified => "particle in R3 with constraint z' = y x x' (no invariant measure)",
            Kind::ParticleClassical => "particle in R3 with constraint z' = y x' (invariant measure 1/sqrt(1+y^2))",
        }
    }

    pub fn schema(self) -> Vec<ParamSpec> {
        let p = |name, unit, default, description| ParamSpec { name, unit, default, description };
        match self {
            Kind::MobileRobot => vec![
                p("m", "kg", 2.0, "robot mass"),
                p("J", "kg m^2", 0.5, "robot moment of inertia"),
                p("J_w", "kg m^2", 0.1, "axial moment of inertia of each wheel"),
                p("R", "m", 0.3, "wheel radius"),
            ],
            Kind::TwoWheeledRobot => vec![
                p("m0", "kg", 10.0, "mass of the body without wheels"),
                p("m1", "kg", 1.0, "mass of each wheel"),
                p("J", "kg m^2", 2.0, "moment of inertia about the vertical axis"),
                p("J_wheel", "kg m^2", 1.0, "axial moment of inertia of each wheel"),
                p("l", "m", 0.5, "distance from the centre of mass to the wheel axis point"),
                p("R", "m", 0.1, "wheel radius"),
                p("c", "m", 0.3, "half the lateral length"),
            ],
            Kind::ParticleModified | Kind::ParticleClassical => Vec::new(),
        }
    }
}

/// One constructed catalog system.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub kind: Kind,
    pub params: Vec<(&'static str, f64)>,
    pub system: ChaplyginSystem,
    pub full: FullSystem,
    pub group: GroupModel,
}

fn n(x: f64) -> Expr {
    Expr::Num(x)
}

fn z() -> Expr {
    Expr::Num(0.0)
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// `c^i_{jk}` of se(2) in the basis (e₁, e₂ translations, e₃ rotation): `[e₃, e₁] = e₂`, `[e₃, e₂] = −e₁`.
pub fn se2_structure() -> Vec<f64> {
    let mut c = vec![0.0; 27];
    let idx = |i: usize, j: usize, k: usize| (i * 3 + j) * 3 + k;
    c[idx(1, 2, 0)] = 1.0;
    c[idx(1, 0, 2)] = -1.0;
    c[idx(0, 2, 1)] = -1.0;
    c[idx(0, 1, 2)] = 1.0;
    c
}

/// Build a catalog entry, overriding defaults with `overrides`.
pub fn build(name: &str, overrides: &[(&str, f64)]) -> Result<CatalogEntry> {
    let kind = Kind::from_name(name).ok_or_else(|| Error::Invalid(alloc::format!("unknown system `{name}`")))?;
    let schema = kind.schema();
    let mut params: Vec<(&'static str, f64)> = schema.iter().map(|p| (p.name, p.default)).collect();
    for (k, v) in overrides {
        let slot = params.iter_mut().find(|(n, _)| n == k).ok_or_else(|| Error::ParameterOutOfRange {
            name: k.to_string(),
            reason: alloc::format!("`{name}` has no such parameter"),
        })?;
        slot.1 = *v;
    }
    for (k, v) in &params {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::ParameterOutOfRange { name: k.to_string(), reason: "must be positive".into() });
        }
    }
    let get = |k: &str| params.iter().find(|(n, _)| *n == k).map(|p| p.1).unwrap_or(0.0);
    let (system, full, group) = match kind {
        Kind::MobileRobot => mobile_robot(get("m"), get("J"), get("J_w"), get("R"))?,
        Kind::TwoWheeledRobot => {
            two_wheeled(get("m0"), get("m1"), get("J"), get("J_wheel"), get("l"), get("R"), get("c"))?
        }
        Kind::ParticleModified => particle(kind, true)?,
        Kind::ParticleClassical => particle(kind, false)?,
    };
    Ok(CatalogEntry { kind, params, system, full, group })
}

fn mobile_robot(m: f64, j: f64, jw: f64, r: f64) -> Result<(ChaplyginSystem, FullSystem, GroupModel)> {
    let th = Expr::var(0);
    let sys = ChaplyginSystem::new(ChaplyginData {
        name: "mobile_robot".into(),
        base: names(&["theta", "psi"]),
        group_dim: 2,
        structure: vec![0.0; 8],
        gamma: vec![z(), -r * th.clone().cos(), z(), -r * th.clone().sin()],
        g_bb: vec![n(j), z(), z(), n(3.0 * jw)],
        g_bg: vec![z(); 4],
        g_gg: vec![n(m), z(), z(), n(m)],
        potential: None,
    })?;
    let mut metric = vec![z(); 16];
    for (i, d) in [j, 3.0 * jw, m, m].iter().enumerate() {
        metric[i * 4 + i] = n(*d);
    }
    let constraints = vec![
        z(),
        z(),
        th.clone().sin(),
        -th.clone().cos(),
        z(),
        n(-r),
        th.clone().cos(),
        th.sin(),
    ];
    let full = FullSystem::new("mobile_robot", names(&["theta", "psi", "x", "y"]), 2, metric, constraints, None)?;
    Ok((sys, full, GroupModel::abelian_named(names(&["x", "y"]))))
}

fn two_wheeled(
    m0: f64,
    m1: f64,
    j: f64,
    jw: f64,
    l: f64,
    r: f64,
    c: f64,
) -> Result<(ChaplyginSystem, FullSystem, GroupModel)> {
    let m = m0 + 2.0 * m1;
    let sys = ChaplyginSystem::new(ChaplyginData {
        name: "two_wheeled_robot".into(),
        base: names(&["psi1", "psi2"]),
        group_dim: 3,
        structure: se2_structure(),
        gamma: vec![n(r / 2.0), n(r / 2.0), z(), z(), n(r / (2.0 * c)), n(-r / (2.0 * c))],
        g_bb: vec![n(jw), z(), z(), n(jw)],
        g_bg: vec![z(); 6],
        g_gg: vec![n(m), z(), z(), z(), n(m), n(m0 * l), z(), n(m0 * l), n(j)],
        potential: None,
    })?;
    // coordinates (psi1, psi2, x, y, theta)
    let th = Expr::var(4);
    let mut g = vec![z(); 25];
    g[0] = n(jw);
    g[6] = n(jw);
    g[2 * 5 + 2] = n(m);
    g[3 * 5 + 3] = n(m);
    g[4 * 5 + 4] = n(j);
    let gxt = -(m0 * l) * th.clone().sin();
    let gyt = (m0 * l) * th.clone().cos();
    g[2 * 5 + 4] = gxt.clone();
    g[4 * 5 + 2] = gxt;
    g[3 * 5 + 4] = gyt.clone();
    g[4 * 5 + 3] = gyt;
    let constraints = vec![
        z(),
        z(),
        th.clone().sin(),
        -th.clone().cos(),
        z(),
        n(r),
        z(),
        th.clone().cos(),
        th.clone().sin(),
        n(c),
        z(),
        n(r),
        th.clone().cos(),
        th.sin(),
        n(-c),
    ];
    let full = FullSystem::new(
        "two_wheeled_robot",
        names(&["psi1", "psi2", "x", "y", "theta"]),
        2,
        g,
        constraints,
        None,
    )?;
    Ok((sys, full, GroupModel::se2()))
}

fn particle(kind: Kind, modified: bool) -> Result<(ChaplyginSystem, FullSystem, GroupModel)> {
    let (x, y) = (Expr::var(0), Expr::var(1));
    let coeff = if modified { y * x } else { y };
    let sys = ChaplyginSystem::new(ChaplyginData {
        name: kind.name().into(),
        base: names(&["x", "y"]),
        group_dim: 1,
        structure: vec![0.0],
        gamma: vec![-coeff.clone(), z()],
        g_bb: vec![n(1.0), z(), z(), n(1.0)],
        g_bg: vec![z(), z()],
        g_gg: vec![n(1.0)],
        potential: None,
    })?;
    let mut metric = vec![z(); 9];
    for i in 0..3 {
        metric[i * 3 + i] = n(1.0);
    }
    let full = FullSystem::new(kind.name(), names(&["x", "y", "z"]), 2, metric, vec![-coeff, z(), n(1.0)], None)?;
    Ok((sys, full, GroupModel::abelian_named(names(&["z"]))))
}

impl CatalogEntry {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params.iter().find(|(n, _)| *n == name).map(|p| p.1).unwrap_or(f64::NAN)
    }

    /// Box used by default for sampling and measure analysis.
    pub fn default_region(&self) -> (Vec<f64>, Vec<f64>) {
        match self.kind {
            Kind::MobileRobot | Kind::TwoWheeledRobot => {
                let p = core::f64::consts::PI;
                (vec![-p, -p], vec![p, p])
            }
            Kind::ParticleModified | Kind::ParticleClassical => (vec![-2.0, -2.0], vec![2.0, 2.0]),
        }
    }

    /// Initial base state used by default in simulations and verification.
    pub fn default_initial_state(&self) -> State {
        match self.kind {
            Kind::MobileRobot => State::new(vec![0.2, 0.0], vec![0.7, 1.3]),
            Kind::TwoWheeledRobot => State::new(vec![0.0, 0.0], vec![1.0, -0.5]),
            Kind::ParticleModified => State::new(vec![1.0, 1.0], vec![1.0, 0.0]),
            Kind::ParticleClassical => State::new(vec![0.0, 0.0], vec![1.0, 0.3]),
        }
    }

    /// Named first integrals beyond the energy, evaluated at a base state.
    pub fn first_integrals(&self, s: &State) -> Vec<(&'static str, f64)> {
        match self.kind {
            Kind::ParticleClassical => vec![("xdot_sqrt_1py2", s.v[0] * libm::sqrt(1.0 + s.q[1] * s.q[1]))],
            _ => Vec::new(),
        }
    }

    /// Closed-form reduced metric.
    pub fn reference_reduced_metric(&self, q: &[f64]) -> Mat<f64> {
        match self.kind {
            Kind::MobileRobot => {
                let (m, j, jw, r) = (self.param("m"), self.param("J"), self.param("J_w"), self.param("R"));
                Mat::from_vec(2, 2, vec![j, 0.0, 0.0, 3.0 * jw + m * r * r])
            }
            Kind::TwoWheeledRobot => {
                let mass = self.param("m0") + 2.0 * self.param("m1");
                let (j, j2, r, c) = (self.param("J"), self.param("J_wheel"), self.param("R"), self.param("c"));
                let d = j2 + mass * r * r / 4.0 + j * r * r / (4.0 * c * c);
                let o = mass * r * r / 4.0 - j * r * r / (4.0 * c * c);
                Mat::from_vec(2, 2, vec![d, o, o, d])
            }
            Kind::ParticleModified => {
                let (x, y) = (q[0], q[1]);
                Mat::from_vec(2, 2, vec![1.0 + x * x * y * y, 0.0, 0.0, 1.0])
            }
            Kind::ParticleClassical => Mat::from_vec(2, 2, vec![1.0 + q[1] * q[1], 0.0, 0.0, 1.0]),
        }
    }

    /// Scalar `m₀ l R³ / 4c²` of the carriage displays (zero for the other systems).
    pub fn carriage_kappa(&self) -> f64 {
        match self.kind {
            Kind::TwoWheeledRobot => {
                let c = self.param("c");
                self.param("m0") * self.param("l") * libm::pow(self.param("R"), 3.0) / (4.0 * c * c)
            }
            _ => 0.0,
        }
    }

    /// Closed-form `K̃_abc`.
    pub fn reference_k_tilde(&self, q: &[f64]) -> crate::geom::Tensor03<f64> {
        let mut k = crate::geom::Array3::zeros(2);
        match self.kind {
            Kind::MobileRobot => {}
            Kind::ParticleClassical => {
                k[(0, 0, 1)] = q[1];
                k[(0, 1, 0)] = -q[1];
            }
            Kind::TwoWheeledRobot => {
                let kap = self.carriage_kappa();
                k[(0, 0, 1)] = kap;
                k[(0, 1, 0)] = -kap;
                k[(1, 0, 1)] = -kap;
                k[(1, 1, 0)] = kap;
            }
            Kind::ParticleModified => {
                let v = q[0] * q[0] * q[1];
                k[(0, 0, 1)] = v;
                k[(0, 1, 0)] = -v;
            }
        }
        k
    }

    /// The gyroscopic form exactly as displayed for each system.
    pub fn reference_alpha_display(&self, _q: &[f64], v: &[f64]) -> Vec<f64> {
        match self.kind {
            Kind::TwoWheeledRobot => {
                let kap = self.carriage_kappa();
                let s = kap * (v[1] - v[0]);
                vec![-s * v[1], s * v[0]]
            }
            _ => vec![0.0; 2],
        }
    }

    /// Closed-form basic one-form `β`.
    pub fn reference_beta(&self, q: &[f64]) -> Vec<f64> {
        match self.kind {
            Kind::MobileRobot => vec![0.0, 0.0],
            Kind::TwoWheeledRobot => {
                let g = self.reference_reduced_metric(q);
                let b = -self.carriage_kappa() / (g[(0, 0)] - g[(0, 1)]);
                vec![b, b]
            }
            Kind::ParticleModified => {
                let (x, y) = (q[0], q[1]);
                vec![0.0, -x * x * y / (1.0 + x * x * y * y)]
            }
            Kind::ParticleClassical => vec![0.0, -q[1] / (1.0 + q[1] * q[1])],
        }
    }
}
