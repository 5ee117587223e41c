//! The `analyze`, `simulate`, `reconstruct`, `holonomy` and `list-systems` subcommands.

use std::collections::BTreeMap;

use chaplygin_core::catalog::{self, Kind};
use chaplygin_core::dynamics::{compare_full_reduced, integrate, integrate_with_jacobian, ReducedField, State};
use chaplygin_core::geom::Array3;
use chaplygin_core::linalg::Mat;
use chaplygin_core::measure::{self, density, MeasureOptions, MeasureReport, Verdict};
use chaplygin_core::reconstruction::{
    curvature_flux, holonomy, horizontal_lift, verify_lift, BaseLoop, GroupLaw, GroupModel, LiftOptions,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LoopRequest, ResolvedSystem, Settings};
use crate::error::{LabError, Result};
use crate::output::{csv_text, json, Sink, SCHEMA_VERSION};

pub fn mat(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn arr3(a: &Array3<f64>) -> Vec<Vec<Vec<f64>>> {
    let n = a.dim();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[(i, j, k)]).collect()).collect()).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionJson {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub samples: usize,
    pub simply_connected: bool,
}

impl RegionJson {
    fn of(s: &Settings) -> Self {
        let r = &s.region;
        RegionJson { lo: r.lo.clone(), hi: r.hi.clone(), samples: r.samples, simply_connected: r.simply_connected }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SystemJson {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub base: Vec<String>,
    pub group_dim: usize,
    pub abelian: bool,
    pub has_potential: bool,
}

impl SystemJson {
    pub fn of(r: &ResolvedSystem) -> Self {
        SystemJson {
            name: r.name().to_string(),
            params: r.params().into_iter().collect(),
            base: r.system.base_names().to_vec(),
            group_dim: r.system.group_dim(),
            abelian: r.system.is_abelian(),
            has_potential: r.system.has_potential(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    pub q: Vec<f64>,
    pub reduced_metric: Vec<Vec<f64>>,
    /// `Ω^i_{bc}`, one matrix per group index.
    pub curvature: Vec<Vec<Vec<f64>>>,
    pub k_tilde: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<Vec<f64>>>,
    pub beta: Vec<f64>,
    pub closedness: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationJson {
    pub class: String,
    pub tolerance: f64,
    pub b_symmetric_part: f64,
    pub h2_metric_residual: f64,
    pub half_metric_residual: f64,
    pub half_minus_lc: f64,
    pub tilde_minus_half: f64,
    pub tilde_minus_lc: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityPoint {
    pub q: Vec<f64>,
    pub f: f64,
    pub k: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureJson {
    pub verdict: String,
    pub reason: String,
    pub threshold: f64,
    pub guard: f64,
    pub closedness_residual: f64,
    pub path_independence_residual: Option<f64>,
    pub exactness_residual: Option<f64>,
    pub has_potential_energy: bool,
    /// Point where `f = 0`.
    pub base_point: Option<Vec<f64>>,
    /// `f` and `k = exp f` on the region grid.
    pub density: Vec<DensityPoint>,
}

impl MeasureJson {
    fn of(m: &MeasureReport) -> Self {
        let density = m
            .potential
            .as_ref()
            .map(|p| p.grid.iter().map(|(q, f)| DensityPoint { q: q.clone(), f: *f, k: f.exp() }).collect())
            .unwrap_or_default();
        MeasureJson {
            verdict: m.verdict.name().to_string(),
            reason: m.reason.clone(),
            threshold: m.threshold,
            guard: m.guard,
            closedness_residual: m.closedness_residual,
            path_independence_residual: m.path_independence_residual,
            exactness_residual: m.exactness_residual,
            has_potential_energy: m.has_potential_energy,
            base_point: m.potential.as_ref().map(|p| p.base_point.clone()),
            density,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub system: SystemJson,
    pub region: RegionJson,
    pub classification: ClassificationJson,
    pub closedness_residual: f64,
    pub measure: MeasureJson,
    pub grid: Vec<GridPoint>,
}

pub const CLASSIFY_TOLERANCE: f64 = 1e-10;

pub fn measure_options(s: &Settings) -> MeasureOptions {
    MeasureOptions { threshold: s.threshold, seed: s.seed, ..MeasureOptions::default() }
}

pub fn analyze_report(s: &Settings) -> Result<AnalyzeReport> {
    let sys = &s.system.system;
    let pts = s.region.points();
    let grid = pts
        .par_iter()
        .map(|q| -> Result<GridPoint> {
            let geo = sys.geometry_at(q.as_slice())?;
            Ok(GridPoint {
                q: q.clone(),
                reduced_metric: mat(&geo.gt),
                curvature: geo.omega.iter().map(mat).collect(),
                k_tilde: arr3(&geo.k_tilde),
                b: arr3(&geo.b),
                beta: geo.beta.clone(),
                closedness: measure::closedness_at(sys, q)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cl = sys.classify(&pts, CLASSIFY_TOLERANCE)?;
    let m = measure::measure_verdict(sys, &s.region, &measure_options(s))?;
    Ok(AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        command: "analyze",
        system: SystemJson::of(&s.system),
        region: RegionJson::of(s),
        classification: ClassificationJson {
            class: format!("{:?}", cl.class),
            tolerance: CLASSIFY_TOLERANCE,
            b_symmetric_part: cl.b_symmetric_part,
            h2_metric_residual: cl.h2_metric_residual,
            half_metric_residual: cl.half_metric_residual,
            half_minus_lc: cl.half_minus_lc,
            tilde_minus_half: cl.tilde_minus_half,
            tilde_minus_lc: cl.tilde_minus_lc,
        },
        closedness_residual: m.closedness_residual,
        measure: MeasureJson::of(&m),
        grid,
    })
}

pub fn analyze(s: &Settings, sink: &mut Sink) -> Result<()> {
    let rep = analyze_report(s)?;
    let text = json(&rep)?;
    if sink.dir.is_none() {
        return sink.raw(&text);
    }
    let path = sink.file("analyze.json", &text)?;
    sink.line(&format!("system          {}", rep.system.name))?;
    sink.line(&format!("classification  {}", rep.classification.class))?;
    sink.line(&format!("closedness      {:e}", rep.closedness_residual))?;
    sink.line(&format!("verdict         {}", rep.measure.verdict))?;
    sink.line(&format!("wrote           {}", path.display()))
}

#[derive(Clone, Debug, Serialize)]
pub struct StateJson {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl From<&State> for StateJson {
    fn from(s: &State) -> Self {
        StateJson { q: s.q.clone(), v: s.v.clone() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectorySidecar {
    pub schema_version: u32,
    pub command: &'static str,
    pub system: SystemJson,
    pub csv: String,
    pub columns: Vec<String>,
    pub integrator: String,
    pub t_final: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub seed: u64,
    pub initial_state: StateJson,
    pub energy_drift: f64,
    pub first_integral_drift: BTreeMap<String, f64>,
    /// `max |ln(ρ det J)|` relative to `t = 0` with `ρ = k det g̃`.
    pub transport_drift: Option<f64>,
    pub measure_verdict: Option<String>,
}

/// One simulated trajectory as CSV rows plus sidecar metadata.
#[derive(Clone, Debug)]
pub struct SimRun {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub sidecar: TrajectorySidecar,
}

fn state_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("q{i}")));
    h.extend((1..=n).map(|i| format!("v{i}")));
    h
}

/// Reduced trajectory from `s0`; with `jacobian`, also `logdetJ` and the transport residual.
pub fn simulate_one(s: &Settings, s0: &State, jacobian: bool, measure: Option<&MeasureReport>, csv: &str) -> Result<SimRun> {
    let sys = &s.system.system;
    let n = sys.base_dim();
    let field = ReducedField::new(sys);
    let span = (0.0, s.integration.t_final);
    let mut tr = if jacobian {
        integrate_with_jacobian(&field, &s0.flat(), span, &s.integration.config)?
    } else {
        integrate(&field, &s0.flat(), span, &s.integration.config)?
    };
    tr.meta.seed = Some(s.seed);
    let mut header = state_header(n);
    header.push("energy".into());
    if jacobian {
        header.push("logdetJ".into());
    }
    let fi_names: Vec<&str> = s.system.entry.as_ref().map(|e| e.first_integrals(s0).iter().map(|p| p.0).collect()).unwrap_or_default();
    header.extend(fi_names.iter().map(|s| s.to_string()));
    let potential = measure.and_then(|m| m.potential.as_ref()).filter(|_| jacobian);
    if potential.is_some() {
        header.push("transport".into());
    }
    let ln_rho = |q: &[f64]| -> Result<f64> {
        let p = potential.expect("potential present");
        Ok(density(sys, p, q)?.ln())
    };
    let rho0 = match potential {
        Some(_) => Some(ln_rho(&s0.q)?),
        None => None,
    };
    let energy = tr.energy.clone().unwrap_or_default();
    let mut rows = Vec::with_capacity(tr.len());
    let mut fi0 = Vec::new();
    let mut fi_drift = vec![0.0f64; fi_names.len()];
    let mut transport_drift = 0.0f64;
    for i in 0..tr.len() {
        let mut r = vec![tr.t[i]];
        r.extend_from_slice(&tr.states[i]);
        r.push(energy.get(i).copied().unwrap_or(f64::NAN));
        if let Some(l) = &tr.log_det_jacobian {
            r.push(l[i]);
        }
        if let Some(e) = &s.system.entry {
            let fi: Vec<f64> = e.first_integrals(&tr.state(i)).iter().map(|p| p.1).collect();
            if i == 0 {
                fi0 = fi.clone();
            }
            for (k, x) in fi.iter().enumerate() {
                fi_drift[k] = fi_drift[k].max((x - fi0[k]).abs());
            }
            r.extend(fi);
        }
        if let (Some(r0), Some(l)) = (rho0, &tr.log_det_jacobian) {
            let x = ln_rho(&tr.states[i][..n])? + l[i] - r0;
            transport_drift = transport_drift.max(x.abs());
            r.push(x);
        }
        rows.push(r);
    }
    let sidecar = TrajectorySidecar {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        system: SystemJson::of(&s.system),
        csv: csv.to_string(),
        columns: header.clone(),
        integrator: tr.meta.integrator.clone(),
        t_final: s.integration.t_final,
        accepted_steps: tr.meta.accepted_steps,
        rejected_steps: tr.meta.rejected_steps,
        seed: s.seed,
        initial_state: s0.into(),
        energy_drift: tr.energy_drift().unwrap_or(f64::NAN),
        first_integral_drift: fi_names.iter().map(|n| n.to_string()).zip(fi_drift).collect(),
        transport_drift: rho0.map(|_| transport_drift),
        measure_verdict: if jacobian { measure.map(|m| m.verdict.name().to_string()) } else { None },
    };
    Ok(SimRun { header, rows, sidecar })
}

fn numbered(stem: &str, i: usize, count: usize, ext: &str) -> String {
    if count == 1 {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}_{i}.{ext}")
    }
}

pub fn simulate(s: &Settings, jacobian: bool, sink: &mut Sink) -> Result<()> {
    let count = s.initial.len();
    if sink.dir.is_none() && count > 1 {
        return Err(LabError::Config("several initial states need --out".into()));
    }
    let measure = if jacobian { Some(measure::measure_verdict(&s.system.system, &s.region, &measure_options(s))?) } else { None };
    let runs = s
        .initial
        .par_iter()
        .enumerate()
        .map(|(i, s0)| simulate_one(s, s0, jacobian, measure.as_ref(), &numbered("trajectory", i, count, "csv")))
        .collect::<Result<Vec<_>>>()?;
    for (i, run) in runs.iter().enumerate() {
        let text = csv_text(&run.header, &run.rows)?;
        if sink.dir.is_none() {
            return sink.raw(&text);
        }
        let p = sink.file(&run.sidecar.csv, &text)?;
        sink.file(&numbered("trajectory", i, count, "json"), &json(&run.sidecar)?)?;
        sink.line(&format!("wrote {} ({} rows)", p.display(), run.rows.len()))?;
    }
    Ok(())
}

fn group_of(s: &Settings) -> Result<&GroupModel> {
    s.system
        .group
        .as_ref()
        .ok_or_else(|| LabError::Config("this system has no fiber model; custom groups must be abelian".into()))
}

#[derive(Clone, Debug, Serialize)]
pub struct LiftSidecar {
    pub schema_version: u32,
    pub command: &'static str,
    pub system: SystemJson,
    pub csv: String,
    pub columns: Vec<String>,
    pub fiber: Vec<String>,
    pub group_law: &'static str,
    pub integrator: String,
    pub t_final: f64,
    pub initial_state: StateJson,
    pub fiber_start: Vec<f64>,
    pub fiber_end: Vec<f64>,
    pub max_gamma_residual: f64,
    pub projection_mismatch: f64,
    /// Sup deviation of `(q, f, q̇, ḟ)` from the full multiplier flow.
    pub oracle_deviation: Option<f64>,
}

pub struct LiftRun {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub sidecar: LiftSidecar,
}

pub fn law_name(l: GroupLaw) -> &'static str {
    match l {
        GroupLaw::Additive => "additive",
        GroupLaw::Se2 => "se2",
    }
}

pub fn reconstruct_one(s: &Settings, s0: &State, csv: &str) -> Result<LiftRun> {
    let sys = &s.system.system;
    let gm = group_of(s)?;
    let span = (0.0, s.integration.t_final);
    let cfg = &s.integration.config;
    let (base, oracle) = match &s.system.full {
        Some(full) => {
            let cmp = compare_full_reduced(full, sys, s0, span, cfg)?;
            (cmp.reduced, Some(cmp.full))
        }
        None => (integrate(&ReducedField::new(sys), &s0.flat(), span, cfg)?, None),
    };
    let start = gm.identity();
    let lift = horizontal_lift(sys, gm, &base, &start, &LiftOptions::default())?;
    let chk = verify_lift(sys, gm, &lift, &base)?;
    let mut dev = oracle.as_ref().map(|_| 0.0f64);
    let mut header = state_header(sys.base_dim());
    header.extend(gm.names().iter().cloned());
    header.push("gamma_residual".into());
    let mut rows = Vec::with_capacity(lift.t.len());
    for i in 0..lift.t.len() {
        if let (Some(d), Some(o)) = (dev.as_mut(), &oracle) {
            let y = lift.full_state(sys, gm, i)?;
            for (a, b) in y.iter().zip(&o.states[i]) {
                *d = d.max((a - b).abs());
            }
        }
        let mut r = vec![lift.t[i]];
        r.extend(lift.base[i].flat());
        r.extend_from_slice(&lift.fiber[i]);
        r.push(lift.gamma_residual[i]);
        rows.push(r);
    }
    let sidecar = LiftSidecar {
        schema_version: SCHEMA_VERSION,
        command: "reconstruct",
        system: SystemJson::of(&s.system),
        csv: csv.to_string(),
        columns: header.clone(),
        fiber: gm.names().to_vec(),
        group_law: law_name(gm.law()),
        integrator: base.meta.integrator.clone(),
        t_final: s.integration.t_final,
        initial_state: s0.into(),
        fiber_start: start,
        fiber_end: lift.fiber.last().cloned().unwrap_or_default(),
        max_gamma_residual: chk.gamma_residual,
        projection_mismatch: chk.projection_mismatch,
        oracle_deviation: dev,
    };
    Ok(LiftRun { header, rows, sidecar })
}

pub fn reconstruct(s: &Settings, sink: &mut Sink) -> Result<()> {
    let count = s.initial.len();
    if sink.dir.is_none() && count > 1 {
        return Err(LabError::Config("several initial states need --out".into()));
    }
    let runs = s
        .initial
        .par_iter()
        .enumerate()
        .map(|(i, s0)| reconstruct_one(s, s0, &numbered("lift", i, count, "csv")))
        .collect::<Result<Vec<_>>>()?;
    for (i, run) in runs.iter().enumerate() {
        let text = csv_text(&run.header, &run.rows)?;
        if sink.dir.is_none() {
            return sink.raw(&text);
        }
        let p = sink.file(&run.sidecar.csv, &text)?;
        sink.file(&numbered("lift", i, count, "json"), &json(&run.sidecar)?)?;
        let dev = run.sidecar.oracle_deviation.map(|d| format!(", oracle deviation {d:e}")).unwrap_or_default();
        sink.line(&format!("wrote {} (gamma residual {:e}{dev})", p.display(), run.sidecar.max_gamma_residual))?;
    }
    Ok(())
}

/// Parsed loop shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Rectangle(f64, f64),
    Circle(f64),
}

pub fn parse_loop(text: &str) -> Result<Shape> {
    let bad = || LabError::Config(format!("loop `{text}` must be square:S, rect:A,B or circle:R with positive sizes"));
    let (kind, args) = text.split_once(':').ok_or_else(bad)?;
    let nums: Vec<f64> = args.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    if nums.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(bad());
    }
    match (kind, nums.as_slice()) {
        ("square", [s]) => Ok(Shape::Rectangle(*s, *s)),
        ("rect", [a, b]) => Ok(Shape::Rectangle(*a, *b)),
        ("circle", [r]) => Ok(Shape::Circle(*r)),
        _ => Err(bad()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HolonomyJson {
    pub schema_version: u32,
    pub command: &'static str,
    pub system: SystemJson,
    pub descriptor: String,
    pub at: Vec<f64>,
    pub axes: [usize; 2],
    pub samples: usize,
    pub fiber: Vec<String>,
    pub group_law: &'static str,
    pub displacement: Vec<f64>,
    pub closure_residual: f64,
    /// `curvature_flux` for abelian rectangles, otherwise `refined_lift` at four times the samples.
    pub oracle: &'static str,
    pub oracle_displacement: Vec<f64>,
    pub oracle_deviation: f64,
}

pub fn holonomy_report(s: &Settings, req: &LoopRequest) -> Result<HolonomyJson> {
    let sys = &s.system.system;
    if sys.base_dim() < 2 {
        return Err(LabError::Config("loops need a base of dimension two or more".into()));
    }
    let gm = group_of(s)?;
    let shape = parse_loop(&req.shape)?;
    let lp = match shape {
        Shape::Rectangle(a, b) => BaseLoop::rectangle(&req.at, req.axes, a, b),
        Shape::Circle(r) => BaseLoop::circle(&req.at, req.axes, r),
    };
    let h = holonomy(sys, gm, &lp, req.samples)?;
    let (oracle, reference) = match shape {
        Shape::Rectangle(a, b) if sys.is_abelian() => {
            let panels = (8.0 * a.max(b)).ceil().clamp(8.0, 512.0) as usize;
            ("curvature_flux", curvature_flux(sys, &req.at, req.axes, a, b, panels)?)
        }
        _ => ("refined_lift", holonomy(sys, gm, &lp, 4 * req.samples)?.displacement),
    };
    let dev = h.displacement.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(HolonomyJson {
        schema_version: SCHEMA_VERSION,
        command: "holonomy",
        system: SystemJson::of(&s.system),
        descriptor: h.descriptor,
        at: req.at.clone(),
        axes: [req.axes.0, req.axes.1],
        samples: h.samples,
        fiber: gm.names().to_vec(),
        group_law: law_name(gm.law()),
        displacement: h.displacement,
        closure_residual: h.closure_residual,
        oracle,
        oracle_displacement: reference,
        oracle_deviation: dev,
    })
}

pub fn holonomy_cmd(s: &Settings, sink: &mut Sink) -> Result<()> {
    let rep = holonomy_report(s, &s.holonomy)?;
    let text = json(&rep)?;
    if sink.dir.is_none() {
        return sink.raw(&text);
    }
    let p = sink.file("holonomy.json", &text)?;
    sink.line(&format!("loop          {}", rep.descriptor))?;
    sink.line(&format!("displacement  {:?}", rep.displacement))?;
    sink.line(&format!("{:<13} deviation {:e}", rep.oracle, rep.oracle_deviation))?;
    sink.line(&format!("wrote         {}", p.display()))
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamJson {
    pub name: &'static str,
    pub unit: &'static str,
    pub default: f64,
    pub description: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct SystemSchema {
    pub name: &'static str,
    pub description: &'static str,
    pub base: Vec<String>,
    pub fiber: Vec<String>,
    pub params: Vec<ParamJson>,
}

pub fn system_schemas() -> Result<Vec<SystemSchema>> {
    catalog::NAMES
        .iter()
        .map(|name| {
            let kind = Kind::from_name(name).expect("catalog name");
            let e = catalog::build(name, &[])?;
            Ok(SystemSchema {
                name: kind.name(),
                description: kind.description(),
                base: e.system.base_names().to_vec(),
                fiber: e.group.names().to_vec(),
                params: kind
                    .schema()
                    .into_iter()
                    .map(|p| ParamJson { name: p.name, unit: p.unit, default: p.default, description: p.description })
                    .collect(),
            })
        })
        .collect()
}

pub fn list_systems(as_json: bool, sink: &mut Sink) -> Result<()> {
    let schemas = system_schemas()?;
    if as_json {
        #[derive(Serialize)]
        struct Listing {
            schema_version: u32,
            systems: Vec<SystemSchema>,
        }
        return sink.raw(&json(&Listing { schema_version: SCHEMA_VERSION, systems: schemas })?);
    }
    for s in &schemas {
        sink.line(&format!("{}: {}", s.name, s.description))?;
        sink.line(&format!("  base ({})  fiber ({})", s.base.join(", "), s.fiber.join(", ")))?;
        for p in &s.params {
            sink.line(&format!("  {:<8} {:>6} {:<7} {}", p.name, p.default, p.unit, p.description))?;
        }
    }
    Ok(())
}

/// Verdict expected from the literature for each builtin.
pub fn expected_verdict(kind: Kind) -> Verdict {
    match kind {
        Kind::ParticleModified => Verdict::NoInvariantMeasure,
        _ => Verdict::InvariantMeasure,
    }
}
