//! The `verify` property suite.
//!
//! Independent checks run concurrently; results are collected in a fixed order so the table and
//! the JSON report are byte-identical for identical settings.

use chaplygin_core::catalog::CatalogEntry;
use chaplygin_core::chaplygin::grid;
use chaplygin_core::dynamics::{compare_full_reduced, geodesic_coincidence, integrate, ReducedField, State};
use chaplygin_core::geom::metric_residual;
use chaplygin_core::measure::{h_function, measure_verdict, verify_invariance, UnitDensity, Verdict};
use chaplygin_core::reconstruction::{horizontal_lift, verify_lift, LiftOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{expected_verdict, holonomy_report, measure_options, SystemJson, CLASSIFY_TOLERANCE};
use crate::config::Settings;
use crate::error::{LabError, Result};
use crate::output::{json, Sink, SCHEMA_VERSION};

/// Default pass thresholds.
pub mod limits {
    pub const ORACLE: f64 = 1e-6;
    pub const CONSTRAINT: f64 = 1e-9;
    /// Relative to `1 + |E(0)|`.
    pub const ENERGY: f64 = 1e-8;
    pub const GYROSCOPIC: f64 = 1e-12;
    pub const H_FORMS: f64 = 1e-10;
    pub const METRIC: f64 = 1e-10;
    pub const GEODESIC: f64 = 1e-8;
    pub const TRANSPORT: f64 = 1e-6;
    pub const LIFT_GAMMA: f64 = 1e-6;
    pub const LIFT_ORACLE: f64 = 1e-5;
    pub const STRUCTURE: f64 = 1e-10;
    pub const HOLONOMY: f64 = 1e-6;
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `value <= threshold` passes, except for lower bounds, which `detail` states.
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn bound(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, passed: value <= threshold, detail: String::new() }
    }

    fn with(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    fn failed(name: &str, err: &dyn std::fmt::Display) -> Self {
        Check { name: name.into(), value: f64::NAN, threshold: f64::NAN, passed: false, detail: format!("error: {err}") }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub system: SystemJson,
    pub seed: u64,
    pub t_final: f64,
    pub integrator: String,
    pub initial_states: usize,
    pub checks: Vec<Check>,
    /// Checks that do not apply to this system, with the reason.
    pub skipped: Vec<String>,
}

impl VerifyReport {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn table(&self) -> String {
        let mut s = format!("verify {} (seed {})\n", self.system.name, self.seed);
        s.push_str(&format!("{:<28} {:>12} {:>12}  {}\n", "check", "value", "threshold", "status"));
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let th = if c.threshold.is_nan() { "-".to_string() } else { format!("{:.1e}", c.threshold) };
            let mut line = format!("{:<28} {:>12.3e} {:>12}  {status}", c.name, c.value, th);
            if !c.detail.is_empty() {
                line.push_str("  ");
                line.push_str(&c.detail);
            }
            s.push_str(line.trim_end());
            s.push('\n');
        }
        for k in &self.skipped {
            s.push_str(&format!("skipped {k}\n"));
        }
        s.push_str(&format!("{} of {} checks passed\n", self.checks.len() - self.failed(), self.checks.len()));
        s
    }
}

/// Configured states followed by `random_states` seeded draws from the region.
pub fn initial_states(s: &Settings) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut out = s.initial.clone();
    let n = s.system.system.base_dim();
    for _ in 0..s.random_states {
        let q = (0..n).map(|a| rng.random_range(s.region.lo[a]..s.region.hi[a])).collect();
        let v = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        out.push(State::new(q, v));
    }
    out
}

fn samples(s: &Settings) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x5eed_5eed);
    let n = s.system.system.base_dim();
    (0..s.samples)
        .map(|_| {
            let q = (0..n).map(|a| rng.random_range(s.region.lo[a]..s.region.hi[a])).collect();
            let v = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            State::new(q, v)
        })
        .collect()
}

type Task<'a> = Box<dyn Fn() -> Result<Vec<Check>> + Send + Sync + 'a>;

fn oracle_checks(s: &Settings, states: &[State]) -> Result<Vec<Check>> {
    let Some(full) = &s.system.full else {
        return Ok(Vec::new());
    };
    let span = (0.0, s.integration.t_final);
    let (mut dev, mut res, mut drift) = (0.0f64, 0.0f64, 0.0f64);
    for s0 in states {
        let cmp = compare_full_reduced(full, &s.system.system, s0, span, &s.integration.config)?;
        dev = dev.max(cmp.deviation);
        res = res.max(cmp.max_constraint_residual);
        let e0 = full.energy(&cmp.full.states[0][..full.dim()], &cmp.full.states[0][full.dim()..])?;
        drift = drift.max(cmp.full_energy_drift / (1.0 + e0.abs()));
    }
    Ok(vec![
        Check::bound("oracle_deviation", dev, limits::ORACLE),
        Check::bound("full_constraint_residual", res, limits::CONSTRAINT),
        Check::bound("full_energy_drift", drift, limits::ENERGY),
    ])
}

fn energy_check(s: &Settings, states: &[State]) -> Result<Vec<Check>> {
    let field = ReducedField::new(&s.system.system);
    let mut worst = 0.0f64;
    for s0 in states {
        let tr = integrate(&field, &s0.flat(), (0.0, s.integration.t_final), &s.integration.config)?;
        let e = tr.energy.as_ref().ok_or_else(|| LabError::Output("reduced energy missing".into()))?;
        worst = worst.max(tr.energy_drift().unwrap_or(0.0) / (1.0 + e[0].abs()));
    }
    Ok(vec![Check::bound("energy_drift", worst, limits::ENERGY)])
}

fn pointwise_checks(s: &Settings, pts: &[State]) -> Result<Vec<Check>> {
    let sys = &s.system.system;
    let (mut av, mut ivxi, mut h) = (0.0f64, 0.0f64, 0.0f64);
    for st in pts {
        let geo = sys.geometry_at(st.q.as_slice())?;
        let a = geo.alpha(&st.v);
        av = av.max(a.iter().zip(&st.v).map(|(x, y)| x * y).sum::<f64>().abs());
        let xi = geo.xi(&st.v);
        for (b, ab) in a.iter().enumerate() {
            let c: f64 = (0..st.v.len()).map(|c| st.v[c] * xi[(c, b)]).sum();
            ivxi = ivxi.max((c - ab).abs());
        }
        h = h.max(h_function(sys, &st.q, &st.v)?.mismatch());
    }
    Ok(vec![
        Check::bound("gyroscopic_alpha_v", av, limits::GYROSCOPIC),
        Check::bound("contraction_i_v_xi", ivxi, limits::GYROSCOPIC),
        Check::bound("h_forms_agree", h, limits::H_FORMS),
    ])
}

fn geometry_checks(s: &Settings) -> Result<Vec<Check>> {
    let sys = &s.system.system;
    let pts = grid(&s.region.lo, &s.region.hi, 4);
    let mut worst = 0.0f64;
    for q in &pts {
        let geo = sys.geometry_at(q.as_slice())?;
        worst = worst.max(metric_residual(sys, &geo.tilde, q)?).max(metric_residual(sys, &geo.h1, q)?);
    }
    let cl = sys.classify(&s.region.points(), CLASSIFY_TOLERANCE)?;
    let preds = [
        cl.b_symmetric_part <= CLASSIFY_TOLERANCE,
        cl.h2_metric_residual <= CLASSIFY_TOLERANCE,
        cl.half_metric_residual <= CLASSIFY_TOLERANCE,
        cl.half_minus_lc <= CLASSIFY_TOLERANCE,
    ];
    let agree = preds.iter().all(|p| *p == preds[0]);
    let spread = if agree { 0.0 } else { 1.0 };
    let mut out = vec![
        Check::bound("connection_metric_residual", worst, limits::METRIC),
        Check::bound("classification_predicates", spread, 0.0).with(format!("{:?}", cl.class)),
    ];
    if let Some(gm) = &s.system.group {
        let mut r = 0.0f64;
        for q in grid(&s.region.lo, &s.region.hi, 3) {
            r = r.max(gm.structure_residual(sys, &q)?);
        }
        out.push(Check::bound("group_frame_structure", r, limits::STRUCTURE));
    }
    Ok(out)
}

fn geodesic_check(s: &Settings) -> Result<Vec<Check>> {
    if s.system.system.has_potential() {
        return Ok(Vec::new());
    }
    let d = geodesic_coincidence(&s.system.system, &s.initial[0], (0.0, s.integration.t_final), &s.integration.config)?;
    Ok(vec![Check::bound("geodesic_coincidence", d, limits::GEODESIC)])
}

fn measure_checks(s: &Settings, entry: Option<&CatalogEntry>, states: &[State]) -> Result<Vec<Check>> {
    let sys = &s.system.system;
    let rep = measure_verdict(sys, &s.region, &measure_options(s))?;
    let mut verdict = Check::bound("measure_verdict", rep.closedness_residual, f64::NAN);
    verdict.passed = match entry {
        Some(e) => rep.verdict == expected_verdict(e.kind),
        None => true,
    };
    verdict.detail = rep.verdict.name().into();
    let mut out = vec![verdict];
    let span = (0.0, s.integration.t_final);
    if rep.verdict == Verdict::NoInvariantMeasure {
        let inv = verify_invariance(sys, &UnitDensity, states, span, &s.integration.config)?;
        let mut c = Check::bound("unit_density_drift", inv.max_drift, limits::TRANSPORT);
        c.passed = inv.max_drift > limits::TRANSPORT;
        out.push(c.with("k = 1 drifts, as the obstruction requires"));
    }
    if let (Verdict::InvariantMeasure, Some(p)) = (rep.verdict, &rep.potential) {
        let per_state = states
            .par_iter()
            .map(|s0| verify_invariance(sys, p, std::slice::from_ref(s0), span, &s.integration.config))
            .collect::<chaplygin_core::Result<Vec<_>>>()?;
        let drift = per_state.iter().map(|r| r.max_drift).fold(0.0, f64::max);
        let pointwise = per_state.iter().map(|r| r.pointwise_residual).fold(0.0, f64::max);
        out.push(Check::bound("measure_transport", drift, limits::TRANSPORT));
        out.push(Check::bound("density_pointwise", pointwise, limits::TRANSPORT));
    }
    Ok(out)
}

fn lift_checks(s: &Settings, states: &[State]) -> Result<Vec<Check>> {
    let Some(gm) = &s.system.group else {
        return Ok(Vec::new());
    };
    let sys = &s.system.system;
    let span = (0.0, s.integration.t_final);
    let cfg = &s.integration.config;
    let (mut gamma, mut dev) = (0.0f64, 0.0f64);
    for s0 in states {
        let (base, full) = match &s.system.full {
            Some(f) => {
                let cmp = compare_full_reduced(f, sys, s0, span, cfg)?;
                (cmp.reduced, Some(cmp.full))
            }
            None => (integrate(&ReducedField::new(sys), &s0.flat(), span, cfg)?, None),
        };
        let lift = horizontal_lift(sys, gm, &base, &gm.identity(), &LiftOptions::default())?;
        let chk = verify_lift(sys, gm, &lift, &base)?;
        gamma = gamma.max(chk.gamma_residual).max(chk.projection_mismatch);
        if let Some(f) = full {
            for i in 0..lift.t.len() {
                let y = lift.full_state(sys, gm, i)?;
                for (a, b) in y.iter().zip(&f.states[i]) {
                    dev = dev.max((a - b).abs());
                }
            }
        }
    }
    let mut out = vec![Check::bound("lift_gamma_residual", gamma, limits::LIFT_GAMMA)];
    if s.system.full.is_some() {
        out.push(Check::bound("lift_oracle_deviation", dev, limits::LIFT_ORACLE));
    }
    Ok(out)
}

fn holonomy_check(s: &Settings) -> Result<Vec<Check>> {
    if s.system.group.is_none() || s.system.system.base_dim() < 2 {
        return Ok(Vec::new());
    }
    let rep = holonomy_report(s, &s.holonomy)?;
    Ok(vec![Check::bound("holonomy_oracle", rep.oracle_deviation, limits::HOLONOMY)
        .with(format!("{} vs {}", rep.descriptor, rep.oracle))])
}

/// Run every applicable check.
pub fn run_suite(s: &Settings) -> VerifyReport {
    let states = initial_states(s);
    let pts = samples(s);
    let entry = s.system.entry.as_ref();
    let tasks: Vec<(&str, Task)> = vec![
        ("oracle", Box::new(|| oracle_checks(s, &states))),
        ("energy", Box::new(|| energy_check(s, &states))),
        ("pointwise", Box::new(|| pointwise_checks(s, &pts))),
        ("geometry", Box::new(|| geometry_checks(s))),
        ("geodesic", Box::new(|| geodesic_check(s))),
        ("measure", Box::new(|| measure_checks(s, entry, &states))),
        ("lift", Box::new(|| lift_checks(s, &states))),
        ("holonomy", Box::new(|| holonomy_check(s))),
    ];
    let checks = tasks
        .par_iter()
        .map(|(name, task)| task().unwrap_or_else(|e| vec![Check::failed(name, &e)]))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut skipped = Vec::new();
    if s.system.full.is_none() {
        skipped.push("oracle checks: no full multiplier model for this system".to_string());
    }
    if s.system.group.is_none() {
        skipped.push("lift and holonomy checks: no fiber model; custom groups must be abelian".to_string());
    } else if s.system.system.base_dim() < 2 {
        skipped.push("holonomy check: loops need a base of dimension two or more".to_string());
    }
    if s.system.system.has_potential() {
        skipped.push("geodesic coincidence: the potential is nonzero".to_string());
    }
    VerifyReport {
        schema_version: SCHEMA_VERSION,
        command: "verify",
        system: SystemJson::of(&s.system),
        seed: s.seed,
        t_final: s.integration.t_final,
        integrator: s.integration.config.describe(),
        initial_states: states.len(),
        checks,
        skipped,
    }
}

pub fn verify(s: &Settings, sink: &mut Sink) -> Result<VerifyReport> {
    let rep = run_suite(s);
    sink.raw(&rep.table())?;
    if sink.dir.is_some() {
        let p = sink.file("verify.json", &json(&rep)?)?;
        sink.line(&format!("wrote {}", p.display()))?;
    }
    Ok(rep)
}
