//! Mesh and perturbation spec strings and scenario construction.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use sff_flow::ambient::Ambient;
use sff_flow::mesh::{
    load_mesh, make_clifford_torus, make_flat_subtorus, make_genus2, make_sphere, make_torus, perturb, Immersion,
    Perturbation,
};

use crate::config::{resolve, ScenarioConfig};
use crate::CliError;

/// `icosphere:subdiv=3,r=1`, `torus:nu=48,nv=24,R=2,r=0.5`,
/// `flat_subtorus:n=16,h=1`, `clifford:nu=32,nv=32`, `genus2:cell=1` or
/// `file:<path>`.
#[derive(Clone, Debug, PartialEq)]
pub enum MeshSpec {
    Icosphere { subdiv: u32, radius: f64 },
    Torus { nu: usize, nv: usize, big_r: f64, small_r: f64 },
    FlatSubtorus { n: usize, height: f64 },
    Clifford { nu: usize, nv: usize },
    Genus2 { cell: f64 },
    File(String),
}

fn params(s: &str) -> Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for kv in s.split(',').filter(|t| !t.trim().is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("expected name=value, got {kv:?}"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("{}: not a number: {v:?}", k.trim()))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn take(p: &mut BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64, String> {
    match p.remove(key) {
        Some(v) => Ok(v),
        None => default.ok_or_else(|| format!("missing parameter {key}")),
    }
}

fn count(v: f64, key: &str) -> Result<usize, String> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(format!("{key} must be a nonnegative integer, got {v}"))
    }
}

impl MeshSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        if name == "file" {
            if rest.is_empty() {
                return Err("file: needs a path".into());
            }
            return Ok(MeshSpec::File(rest.to_string()));
        }
        let mut p = params(rest)?;
        let spec = match name {
            "icosphere" => MeshSpec::Icosphere {
                subdiv: count(take(&mut p, "subdiv", None)?, "subdiv")? as u32,
                radius: take(&mut p, "r", Some(1.0))?,
            },
            "torus" => MeshSpec::Torus {
                nu: count(take(&mut p, "nu", Some(48.0))?, "nu")?,
                nv: count(take(&mut p, "nv", Some(24.0))?, "nv")?,
                big_r: take(&mut p, "R", Some(2.0))?,
                small_r: take(&mut p, "r", Some(0.5))?,
            },
            "flat_subtorus" => MeshSpec::FlatSubtorus {
                n: count(take(&mut p, "n", Some(16.0))?, "n")?,
                height: take(&mut p, "h", Some(1.0))?,
            },
            "clifford" => MeshSpec::Clifford {
                nu: count(take(&mut p, "nu", Some(32.0))?, "nu")?,
                nv: count(take(&mut p, "nv", Some(32.0))?, "nv")?,
            },
            "genus2" => MeshSpec::Genus2 { cell: take(&mut p, "cell", Some(1.0))? },
            _ => return Err(format!("unknown mesh generator {name:?}")),
        };
        if let Some(k) = p.keys().next() {
            return Err(format!("unknown parameter {k} for {name}"));
        }
        Ok(spec)
    }

    pub fn build(&self, amb: Arc<Ambient>, base: &Path) -> Result<Immersion, CliError> {
        Ok(match self {
            MeshSpec::Icosphere { subdiv, radius } => make_sphere(*subdiv, *radius, [0.0; 3], amb)?,
            MeshSpec::Torus { nu, nv, big_r, small_r } => make_torus(*nu, *nv, *big_r, *small_r, amb)?,
            MeshSpec::FlatSubtorus { n, height } => make_flat_subtorus(*n, *height, amb)?,
            MeshSpec::Clifford { nu, nv } => make_clifford_torus(*nu, *nv, amb)?,
            MeshSpec::Genus2 { cell } => make_genus2(*cell, amb)?,
            MeshSpec::File(path) => load_mesh(&resolve(base, path), amb)?,
        })
    }
}

/// `none`, `random` or `harmonic:l=<int>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbSpec(pub Option<Perturbation>);

impl PerturbSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut p = params(rest)?;
        let mode = match name {
            "none" => None,
            "random" => Some(Perturbation::Random),
            "harmonic" => Some(Perturbation::Harmonic { l: count(take(&mut p, "l", None)?, "l")? as u32 }),
            _ => return Err(format!("unknown perturbation {name:?}")),
        };
        if let Some(k) = p.keys().next() {
            return Err(format!("unknown parameter {k} for {name}"));
        }
        Ok(PerturbSpec(mode))
    }
}

/// Builds the ambient, resolving a chart table against `base`.
pub fn build_ambient(spec: &str, base: &Path) -> Result<Arc<Ambient>, CliError> {
    let spec = match spec.strip_prefix("chart:") {
        Some(path) => format!("chart:{}", resolve(base, path).display()),
        None => spec.to_string(),
    };
    Ok(Arc::new(Ambient::from_spec(&spec)?))
}

/// The initial immersion of a scenario.
pub fn initial_mesh(c: &ScenarioConfig, base: &Path) -> Result<Immersion, CliError> {
    let amb = build_ambient(&c.ambient, base)?;
    let spec = MeshSpec::parse(&c.mesh).map_err(CliError::Spec)?;
    let m = spec.build(amb, base)?;
    match PerturbSpec::parse(&c.perturbation).map_err(CliError::Spec)?.0 {
        Some(mode) if c.amplitude > 0.0 => Ok(perturb(&m, mode, c.amplitude, c.seed)?),
        _ => Ok(m),
    }
}
