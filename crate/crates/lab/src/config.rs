//! Run configuration: file schema, command-line overrides and resolution into core objects.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chaplygin_core::catalog::{self, CatalogEntry};
use chaplygin_core::chaplygin::{ChaplyginData, ChaplyginSystem};
use chaplygin_core::dynamics::{FullSystem, IntegratorConfig, State};
use chaplygin_core::expr::{parse, Expr};
use chaplygin_core::measure::Region;
use chaplygin_core::reconstruction::GroupModel;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Contents of a TOML or JSON configuration file.
#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<SystemConfig>,
    pub region: Option<RegionConfig>,
    pub integrator: Option<IntegratorSection>,
    #[serde(default)]
    pub initial_states: Vec<StateConfig>,
    pub seed: Option<u64>,
    pub output: Option<OutputConfig>,
    pub verify: Option<VerifyConfig>,
    pub holonomy: Option<HolonomyConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub builtin: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub custom: Option<CustomSystem>,
}

/// A system given by expression strings over the declared base coordinates.
#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSystem {
    pub name: Option<String>,
    pub base: Vec<String>,
    pub group_dim: usize,
    /// Fiber coordinate names of an abelian group, `z1..zk` when absent.
    pub fiber: Option<Vec<String>>,
    /// Nonzero `c^i_{jk}` as `[i, j, k, value]`, 1-based with `j < k`; `c^i_{kj}` follows by skew symmetry.
    #[serde(default)]
    pub structure: Vec<[f64; 4]>,
    /// `Γ^i_a`: `group_dim` rows of `base.len()` entries.
    pub gamma: Vec<Vec<String>>,
    pub g_bb: Vec<Vec<String>>,
    /// `base.len()` rows of `group_dim` entries; zero when absent.
    pub g_bg: Option<Vec<Vec<String>>>,
    pub g_gg: Vec<Vec<String>>,
    pub potential: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub samples: Option<usize>,
    pub simply_connected: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    /// `rk4` or `rk45`.
    pub method: Option<String>,
    pub step: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub t_final: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Closedness threshold of the measure analysis.
    pub threshold: Option<f64>,
    /// Random initial states added to the default one.
    pub random_states: Option<usize>,
    /// Random `(q, v)` samples for pointwise identities.
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HolonomyConfig {
    /// `square:S`, `rect:A,B` or `circle:R`.
    #[serde(rename = "loop")]
    pub shape: Option<String>,
    /// Square and rectangle corner, circle center.
    pub at: Option<Vec<f64>>,
    pub axes: Option<[usize; 2]>,
    pub samples: Option<usize>,
}

impl RunConfig {
    /// Parse by extension: `.json` as JSON, anything else as TOML.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub system: Option<String>,
    pub params: Vec<(String, f64)>,
    pub region: Option<(Vec<f64>, Vec<f64>)>,
    pub t_final: Option<f64>,
    pub step: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub shape: Option<String>,
    pub at: Option<Vec<f64>>,
}

/// `k=v` pairs, separated by commas or given as separate arguments.
pub fn parse_params(items: &[String]) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for item in items.iter().flat_map(|s| s.split(',')).filter(|s| !s.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| LabError::Config(format!("parameter `{item}` is not of the form name=value")))?;
        let x = v.trim().parse::<f64>().map_err(|_| LabError::Config(format!("parameter `{k}` has non-numeric value `{v}`")))?;
        out.push((k.trim().to_string(), x));
    }
    Ok(out)
}

/// `lo:hi` per axis, comma separated, e.g. `-2:2,-1:1`.
pub fn parse_region(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = || LabError::Config(format!("region `{text}` is not of the form lo:hi,lo:hi,..."));
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for axis in text.split(',') {
        let (a, b) = axis.split_once(':').ok_or_else(bad)?;
        lo.push(a.trim().parse::<f64>().map_err(|_| bad())?);
        hi.push(b.trim().parse::<f64>().map_err(|_| bad())?);
    }
    Ok((lo, hi))
}

pub fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| LabError::Config(format!("`{text}` is not a comma-separated point"))))
        .collect()
}

/// The system triple a run operates on.
#[derive(Clone, Debug)]
pub struct ResolvedSystem {
    pub system: ChaplyginSystem,
    /// Full multiplier model, when one can be built.
    pub full: Option<FullSystem>,
    pub group: Option<GroupModel>,
    pub entry: Option<CatalogEntry>,
}

impl ResolvedSystem {
    pub fn name(&self) -> &str {
        self.system.name()
    }

    pub fn params(&self) -> Vec<(String, f64)> {
        self.entry.as_ref().map(|e| e.params.iter().map(|(k, v)| (k.to_string(), *v)).collect()).unwrap_or_default()
    }
}

/// Integrator settings plus the time horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integration {
    pub config: IntegratorConfig,
    pub t_final: f64,
}

/// Loop request for `holonomy`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopRequest {
    pub shape: String,
    pub at: Vec<f64>,
    pub axes: (usize, usize),
    pub samples: usize,
}

/// Fully validated settings shared by the subcommands.
#[derive(Clone, Debug)]
pub struct Settings {
    pub system: ResolvedSystem,
    pub region: Region,
    pub integration: Integration,
    pub initial: Vec<State>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threshold: f64,
    pub random_states: usize,
    pub samples: usize,
    pub holonomy: LoopRequest,
}

pub const DEFAULT_T_FINAL: f64 = 1.0;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_REGION_SAMPLES: usize = 9;

impl Settings {
    pub fn resolve(cfg: &RunConfig, ov: &Overrides) -> Result<Self> {
        let system = resolve_system(cfg.system.as_ref(), ov)?;
        let nb = system.system.base_dim();
        let region = resolve_region(cfg.region.as_ref(), ov, &system)?;
        let integration = resolve_integrator(cfg.integrator.as_ref(), ov)?;
        let mut initial = Vec::new();
        for s in &cfg.initial_states {
            if s.q.len() != nb || s.v.len() != nb {
                return Err(LabError::Config(format!("initial state must have {nb} positions and {nb} velocities")));
            }
            if !s.q.iter().chain(&s.v).all(|x| x.is_finite()) {
                return Err(LabError::Config("initial state entries must be finite".into()));
            }
            initial.push(State::new(s.q.clone(), s.v.clone()));
        }
        if initial.is_empty() {
            initial.push(match &system.entry {
                Some(e) => e.default_initial_state(),
                None => {
                    let mut v = vec![0.0; nb];
                    v[0] = 1.0;
                    State::new(region.center(), v)
                }
            });
        }
        let vc = cfg.verify.clone().unwrap_or_default();
        let threshold = ov.threshold.or(vc.threshold).unwrap_or(DEFAULT_THRESHOLD);
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(LabError::Config("threshold must be positive".into()));
        }
        let hc = cfg.holonomy.clone().unwrap_or_default();
        let explicit = hc.axes.is_some();
        let axes = hc.axes.map(|[a, b]| (a, b)).unwrap_or((0, 1.min(nb.saturating_sub(1))));
        if (explicit || nb >= 2) && (axes.0 >= nb || axes.1 >= nb || axes.0 == axes.1) {
            return Err(LabError::Config(format!("holonomy axes must be two distinct indices below {nb}")));
        }
        let at = ov.at.clone().or(hc.at).unwrap_or_else(|| vec![0.0; nb]);
        if at.len() != nb {
            return Err(LabError::Config(format!("holonomy base point must have {nb} entries")));
        }
        let holonomy = LoopRequest {
            shape: ov.shape.clone().or(hc.shape).unwrap_or_else(|| "square:0.5".into()),
            at,
            axes,
            samples: hc.samples.unwrap_or(2000),
        };
        if holonomy.samples == 0 {
            return Err(LabError::Config("holonomy samples must be positive".into()));
        }
        let out = ov.out.clone().or(cfg.output.as_ref().and_then(|o| o.dir.clone()));
        Ok(Settings {
            system,
            region,
            integration,
            initial,
            seed: ov.seed.or(cfg.seed).unwrap_or(0),
            out,
            threshold,
            random_states: vc.random_states.unwrap_or(4),
            samples: vc.samples.unwrap_or(1000),
            holonomy,
        })
    }
}

fn resolve_system(sc: Option<&SystemConfig>, ov: &Overrides) -> Result<ResolvedSystem> {
    let default = SystemConfig::default();
    let sc = sc.unwrap_or(&default);
    let builtin = ov.system.clone().or_else(|| sc.builtin.clone());
    match (builtin, &sc.custom) {
        (Some(name), custom) => {
            if custom.is_some() && ov.system.is_none() {
                return Err(LabError::Config("give either system.builtin or system.custom, not both".into()));
            }
            if catalog::Kind::from_name(&name).is_none() {
                return Err(LabError::Config(format!(
                    "unknown system `{name}`; available: {}",
                    catalog::NAMES.join(", ")
                )));
            }
            let mut params: Vec<(String, f64)> = sc.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
            for (k, v) in &ov.params {
                params.retain(|(n, _)| n != k);
                params.push((k.clone(), *v));
            }
            let refs: Vec<(&str, f64)> = params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
            let entry = catalog::build(&name, &refs).map_err(|e| LabError::Config(e.to_string()))?;
            Ok(ResolvedSystem {
                system: entry.system.clone(),
                full: Some(entry.full.clone()),
                group: Some(entry.group.clone()),
                entry: Some(entry),
            })
        }
        (None, Some(c)) => {
            if !ov.params.is_empty() || !sc.params.is_empty() {
                return Err(LabError::Config("parameters apply to builtin systems only".into()));
            }
            build_custom(c)
        }
        (None, None) => Err(LabError::Config("no system selected: use --system or a [system] section".into())),
    }
}

fn parse_rows(rows: &[Vec<String>], r: usize, c: usize, what: &str, vars: &[&str]) -> Result<Vec<Expr>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(LabError::Config(format!("`{what}` must be {r} rows of {c} expressions")));
    }
    let mut out = Vec::with_capacity(r * c);
    for (i, row) in rows.iter().enumerate() {
        for (j, text) in row.iter().enumerate() {
            let e = parse(text, vars).map_err(|e| LabError::Config(format!("{what}[{i}][{j}] `{text}`: {e}")))?;
            out.push(e);
        }
    }
    Ok(out)
}

/// Validate and build a custom system; abelian ones also get a full model.
pub fn build_custom(c: &CustomSystem) -> Result<ResolvedSystem> {
    let (nb, k) = (c.base.len(), c.group_dim);
    if nb == 0 || k == 0 {
        return Err(LabError::Config("custom system needs at least one base and one group coordinate".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for n in &c.base {
        let ok = n.chars().next().is_some_and(|ch| ch.is_ascii_alphabetic() || ch == '_')
            && n.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_');
        if !ok || !seen.insert(n.as_str()) {
            return Err(LabError::Config(format!("base coordinate name `{n}` is invalid or repeated")));
        }
    }
    let vars: Vec<&str> = c.base.iter().map(|s| s.as_str()).collect();
    let mut structure = vec![0.0; k * k * k];
    for &[i, j, l, value] in &c.structure {
        let idx = |x: f64| (x.fract() == 0.0 && x >= 1.0 && x <= k as f64).then(|| x as usize - 1);
        let (Some(i), Some(j), Some(l)) = (idx(i), idx(j), idx(l)) else {
            return Err(LabError::Config(format!("structure indices must be integers in 1..={k}")));
        };
        if j >= l {
            return Err(LabError::Config("structure entries need j < k; the skew partner is implied".into()));
        }
        structure[(i * k + j) * k + l] = value;
        structure[(i * k + l) * k + j] = -value;
    }
    let zeros = vec![vec!["0".to_string(); k]; nb];
    let data = ChaplyginData {
        name: c.name.clone().unwrap_or_else(|| "custom".into()),
        base: c.base.clone(),
        group_dim: k,
        structure,
        gamma: parse_rows(&c.gamma, k, nb, "gamma", &vars)?,
        g_bb: parse_rows(&c.g_bb, nb, nb, "g_bb", &vars)?,
        g_bg: parse_rows(c.g_bg.as_ref().unwrap_or(&zeros), nb, k, "g_bg", &vars)?,
        g_gg: parse_rows(&c.g_gg, k, k, "g_gg", &vars)?,
        potential: match &c.potential {
            Some(p) => Some(parse(p, &vars).map_err(|e| LabError::Config(format!("potential `{p}`: {e}")))?),
            None => None,
        },
    };
    let system = ChaplyginSystem::new(data).map_err(|e| LabError::Config(e.to_string()))?;
    let (full, group) = if system.is_abelian() {
        let names = c.fiber.clone().unwrap_or_else(|| (1..=k).map(|i| format!("z{i}")).collect());
        if names.len() != k {
            return Err(LabError::Config(format!("`fiber` must list {k} names")));
        }
        let full = FullSystem::from_abelian(&system).map_err(|e| LabError::Config(e.to_string()))?;
        (Some(full), Some(GroupModel::abelian_named(names)))
    } else {
        (None, None)
    };
    Ok(ResolvedSystem { system, full, group, entry: None })
}

fn resolve_region(rc: Option<&RegionConfig>, ov: &Overrides, sys: &ResolvedSystem) -> Result<Region> {
    let nb = sys.system.base_dim();
    let (lo, hi) = match (&ov.region, rc) {
        (Some(r), _) => r.clone(),
        (None, Some(r)) => (r.lo.clone(), r.hi.clone()),
        (None, None) => match &sys.entry {
            Some(e) => e.default_region(),
            None => (vec![-1.0; nb], vec![1.0; nb]),
        },
    };
    if lo.len() != nb || hi.len() != nb {
        return Err(LabError::Config(format!("region must have {nb} axes")));
    }
    let samples = rc.and_then(|r| r.samples).unwrap_or(DEFAULT_REGION_SAMPLES);
    let simply_connected = rc.and_then(|r| r.simply_connected).unwrap_or(true);
    Region::new(lo, hi, samples, simply_connected).map_err(|e| LabError::Config(e.to_string()))
}

fn resolve_integrator(ic: Option<&IntegratorSection>, ov: &Overrides) -> Result<Integration> {
    let default = IntegratorSection::default();
    let ic = ic.unwrap_or(&default);
    let adaptive = ov.rtol.is_some() || ov.atol.is_some();
    let method = match (ic.method.as_deref(), adaptive, ov.step.is_some()) {
        (_, true, true) => return Err(LabError::Config("give either --step or --rtol/--atol".into())),
        (_, true, false) => "rk45",
        (_, false, true) => "rk4",
        (Some(m), _, _) => m,
        (None, _, _) => "rk4",
    };
    let mut config = match method {
        "rk4" => IntegratorConfig::rk4(ov.step.or(ic.step).unwrap_or(DEFAULT_STEP)),
        "rk45" => IntegratorConfig::rk45(ov.rtol.or(ic.rtol).unwrap_or(1e-10), ov.atol.or(ic.atol).unwrap_or(1e-12)),
        other => return Err(LabError::Config(format!("unknown integrator `{other}`; use rk4 or rk45"))),
    };
    if let Some(m) = ic.max_steps {
        config.max_steps = m;
    }
    config.validate().map_err(|e| LabError::Config(e.to_string()))?;
    let t_final = ov.t_final.or(ic.t_final).unwrap_or(DEFAULT_T_FINAL);
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(LabError::Config("t_final must be positive".into()));
    }
    Ok(Integration { config, t_final })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[system]\nbuiltin = \"mobile_robot\"\ncolour = 1\n").is_err());
        assert!(RunConfig::from_json(r#"{"sed": 3}"#).is_err());
    }

    #[test]
    fn params_and_regions() {
        let p = parse_params(&["m=2,J=0.5".into(), "R=0.2".into()]).unwrap();
        assert_eq!(p.len(), 3);
        assert!(parse_params(&["m".into()]).is_err());
        assert_eq!(parse_region("-2:2,-1:0.5").unwrap(), (vec![-2.0, -1.0], vec![2.0, 0.5]));
        assert!(parse_region("1,2").is_err());
    }

    #[test]
    fn flags_override_file() {
        let cfg = RunConfig::from_toml("seed = 3\n[system]\nbuiltin = \"mobile_robot\"\nparams = { m = 3.0 }\n").unwrap();
        let ov = Overrides { seed: Some(9), params: vec![("m".into(), 4.0)], ..Default::default() };
        let s = Settings::resolve(&cfg, &ov).unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.system.entry.as_ref().unwrap().param("m"), 4.0);
    }

    #[test]
    fn custom_structure_is_skew() {
        let c = CustomSystem {
            base: vec!["a".into()],
            group_dim: 2,
            structure: vec![[1.0, 1.0, 2.0, 1.0]],
            gamma: vec![vec!["0".into()], vec!["0".into()]],
            g_bb: vec![vec!["1".into()]],
            g_gg: vec![vec!["1".into(), "0".into()], vec!["0".into(), "1".into()]],
            ..Default::default()
        };
        let r = build_custom(&c).unwrap();
        assert_eq!(r.system.structure(0, 0, 1), 1.0);
        assert_eq!(r.system.structure(0, 1, 0), -1.0);
        assert!(r.full.is_none());
        let mut bad = c.clone();
        bad.structure = vec![[1.0, 2.0, 1.0, 1.0]];
        assert!(build_custom(&bad).is_err());
    }
}
