//! Scenario files: one `key = value` pair per line, values in TOML syntax,
//! `#` starts a comment line.
//!
//! ```text
//! ambient = "euclidean"
//! mesh = "icosphere:subdiv=3,r=1"
//! perturbation = "harmonic:l=3"
//! amplitude = 0.05
//! max_steps = 500
//! radii = [0.05, 0.1, 0.2]
//! ```
//!
//! Every key except `ambient` and `mesh` is optional. Parsing reports all
//! problems at once, each with its line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sff_flow::diagnostics::{default_radii, Constants};
use sff_flow::flow::{StepPolicy, Velocity};

/// Environment variable overriding `out_dir`.
pub const OUT_DIR_ENV: &str = "SFFFLOW_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigIssue {
    /// 1-based line, or 0 for problems not tied to a line.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}: {}", self.line, self.key, self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigErrors {
    pub path: String,
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} problem(s)", self.path, self.issues.len())?;
        for i in &self.issues {
            write!(f, "\n  {i}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub ambient: String,
    pub mesh: String,
    pub perturbation: String,
    pub amplitude: f64,
    pub seed: u64,
    pub dt_cfl: f64,
    pub beta: f64,
    pub max_backtracks: usize,
    pub stationarity: f64,
    pub max_steps: usize,
    pub remesh_every: usize,
    /// Fixed trial step; absent means the CFL rule.
    pub dt: Option<f64>,
    pub velocity: Velocity,
    pub diag_every: usize,
    pub snapshot_every: usize,
    pub radii: Vec<f64>,
    pub eps0_sq: f64,
    pub eps1: f64,
    pub c: f64,
    pub blowup_fraction: f64,
    pub out_dir: PathBuf,
}

impl ScenarioConfig {
    /// A config with every optional key at its default.
    pub fn with_defaults(ambient: &str, mesh: &str) -> Self {
        let p = StepPolicy::default();
        let k = Constants::default();
        ScenarioConfig {
            ambient: ambient.to_string(),
            mesh: mesh.to_string(),
            perturbation: "none".into(),
            amplitude: 0.0,
            seed: 0,
            dt_cfl: p.c_cfl,
            beta: p.beta,
            max_backtracks: p.max_backtracks,
            stationarity: p.stationarity,
            max_steps: p.max_steps,
            remesh_every: p.remesh_every,
            dt: None,
            velocity: p.velocity,
            diag_every: 50,
            snapshot_every: 100,
            radii: default_radii(),
            eps0_sq: k.eps0_sq,
            eps1: k.eps1,
            c: k.c,
            blowup_fraction: k.blowup_fraction,
            out_dir: PathBuf::from("out"),
        }
    }

    pub fn policy(&self) -> StepPolicy {
        StepPolicy {
            c_cfl: self.dt_cfl,
            beta: self.beta,
            max_backtracks: self.max_backtracks,
            stationarity: self.stationarity,
            max_steps: self.max_steps,
            remesh_every: self.remesh_every,
            dt_fixed: self.dt,
            velocity: self.velocity,
        }
    }

    pub fn constants(&self) -> Constants {
        Constants { eps0_sq: self.eps0_sq, eps1: self.eps1, c: self.c, blowup_fraction: self.blowup_fraction }
    }

    /// Canonical text form; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# sffflow scenario\n");
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("ambient", quote(&self.ambient));
        kv("mesh", quote(&self.mesh));
        kv("perturbation", quote(&self.perturbation));
        kv("amplitude", float(self.amplitude));
        kv("seed", self.seed.to_string());
        kv("dt_cfl", float(self.dt_cfl));
        kv("beta", float(self.beta));
        kv("max_backtracks", self.max_backtracks.to_string());
        kv("stationarity", float(self.stationarity));
        kv("max_steps", self.max_steps.to_string());
        kv("remesh_every", self.remesh_every.to_string());
        if let Some(dt) = self.dt {
            kv("dt", float(dt));
        }
        kv("velocity", quote(velocity_name(self.velocity)));
        kv("diag_every", self.diag_every.to_string());
        kv("snapshot_every", self.snapshot_every.to_string());
        let radii: Vec<String> = self.radii.iter().map(|r| float(*r)).collect();
        kv("radii", format!("[{}]", radii.join(", ")));
        kv("eps0_sq", float(self.eps0_sq));
        kv("eps1", float(self.eps1));
        kv("c", float(self.c));
        kv("blowup_fraction", float(self.blowup_fraction));
        kv("out_dir", quote(&self.out_dir.to_string_lossy()));
        s
    }
}

fn velocity_name(v: Velocity) -> &'static str {
    match v {
        Velocity::Normal => "normal",
        Velocity::Full => "full",
    }
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Shortest round-tripping form, always with a decimal point or exponent.
fn float(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E']) || !x.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

const KEYS: &[&str] = &[
    "ambient",
    "mesh",
    "perturbation",
    "amplitude",
    "seed",
    "dt_cfl",
    "beta",
    "max_backtracks",
    "stationarity",
    "max_steps",
    "remesh_every",
    "dt",
    "velocity",
    "diag_every",
    "snapshot_every",
    "radii",
    "eps0_sq",
    "eps1",
    "c",
    "blowup_fraction",
    "out_dir",
];

struct Reader {
    values: BTreeMap<String, (usize, toml::Value)>,
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn issue(&mut self, line: usize, key: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue { line, key: key.to_string(), message: message.into() });
    }

    fn line(&self, key: &str) -> usize {
        self.values.get(key).map_or(0, |(l, _)| *l)
    }

    fn string(&mut self, key: &str) -> Option<String> {
        let (line, v) = self.values.get(key)?.clone();
        match v {
            toml::Value::String(s) => Some(s),
            other => {
                self.issue(line, key, format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        let (line, v) = self.values.get(key)?.clone();
        match v {
            toml::Value::Float(x) => Some(x),
            toml::Value::Integer(i) => Some(i as f64),
            other => {
                self.issue(line, key, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn uint(&mut self, key: &str) -> Option<u64> {
        let (line, v) = self.values.get(key)?.clone();
        match v {
            toml::Value::Integer(i) if i >= 0 => Some(i as u64),
            toml::Value::Integer(i) => {
                self.issue(line, key, format!("must be nonnegative, got {i}"));
                None
            }
            other => {
                self.issue(line, key, format!("expected an integer, found {}", other.type_str()));
                None
            }
        }
    }

    fn floats(&mut self, key: &str) -> Option<Vec<f64>> {
        let (line, v) = self.values.get(key)?.clone();
        let toml::Value::Array(items) = v else {
            self.issue(line, key, format!("expected an array of numbers, found {}", v.type_str()));
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for it in items {
            match it {
                toml::Value::Float(x) => out.push(x),
                toml::Value::Integer(i) => out.push(i as f64),
                other => {
                    self.issue(line, key, format!("expected numbers, found {}", other.type_str()));
                    return None;
                }
            }
        }
        Some(out)
    }
}

/// Parses scenario text. Relative paths are resolved against `base`.
pub fn parse_config_str(text: &str, origin: &str, base: &Path) -> Result<ScenarioConfig, ConfigErrors> {
    let mut r = Reader { values: BTreeMap::new(), issues: Vec::new() };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let Some((key, _)) = t.split_once('=') else {
            r.issue(line, t, "expected `key = value`");
            continue;
        };
        let key = key.trim();
        match t.parse::<toml::Table>() {
            Ok(table) if table.len() == 1 => {
                let (k, v) = table.into_iter().next().expect("one entry");
                if !KEYS.contains(&k.as_str()) {
                    r.issue(line, &k, "unknown key");
                } else if let Some((first, _)) = r.values.get(&k) {
                    let msg = format!("duplicate key (first set on line {first})");
                    r.issue(line, &k, msg);
                } else {
                    r.values.insert(k, (line, v));
                }
            }
            Ok(_) => r.issue(line, key, "expected a single `key = value` pair"),
            Err(e) => r.issue(line, key, format!("invalid value: {}", e.message())),
        }
    }

    let ambient = r.string("ambient");
    let mesh = r.string("mesh");
    if !r.values.contains_key("ambient") {
        r.issue(0, "ambient", "missing required key");
    }
    if !r.values.contains_key("mesh") {
        r.issue(0, "mesh", "missing required key");
    }
    let mut c = ScenarioConfig::with_defaults(ambient.as_deref().unwrap_or(""), mesh.as_deref().unwrap_or(""));

    if let Some(v) = r.string("perturbation") {
        c.perturbation = v;
    }
    macro_rules! set {
        ($field:ident, float) => {
            if let Some(v) = r.float(stringify!($field)) {
                c.$field = v;
            }
        };
        ($field:ident, uint) => {
            if let Some(v) = r.uint(stringify!($field)) {
                c.$field = v as _;
            }
        };
    }
    set!(amplitude, float);
    set!(seed, uint);
    set!(dt_cfl, float);
    set!(beta, float);
    set!(max_backtracks, uint);
    set!(stationarity, float);
    set!(max_steps, uint);
    set!(remesh_every, uint);
    set!(diag_every, uint);
    set!(snapshot_every, uint);
    set!(eps0_sq, float);
    set!(eps1, float);
    set!(c, float);
    set!(blowup_fraction, float);
    c.dt = r.float("dt");
    if let Some(v) = r.string("velocity") {
        match v.as_str() {
            "normal" => c.velocity = Velocity::Normal,
            "full" => c.velocity = Velocity::Full,
            _ => {
                let l = r.line("velocity");
                r.issue(l, "velocity", format!("expected \"normal\" or \"full\", got {v:?}"));
            }
        }
    }
    if let Some(v) = r.floats("radii") {
        c.radii = v;
    }
    if let Some(v) = r.string("out_dir") {
        c.out_dir = PathBuf::from(v);
    }

    validate(&mut r, &c, base);
    if r.issues.is_empty() {
        Ok(c)
    } else {
        r.issues.sort_by_key(|i| i.line);
        Err(ConfigErrors { path: origin.to_string(), issues: r.issues })
    }
}

fn validate(r: &mut Reader, c: &ScenarioConfig, base: &Path) {
    let positive = |r: &mut Reader, key: &str, v: f64| {
        if !(v > 0.0 && v.is_finite()) {
            let l = r.line(key);
            r.issue(l, key, format!("must be positive, got {v}"));
        }
    };
    positive(r, "dt_cfl", c.dt_cfl);
    positive(r, "eps0_sq", c.eps0_sq);
    positive(r, "eps1", c.eps1);
    positive(r, "c", c.c);
    for (key, v) in [("beta", c.beta), ("blowup_fraction", c.blowup_fraction)] {
        if !(v > 0.0 && v < 1.0) {
            let l = r.line(key);
            r.issue(l, key, format!("must lie in (0, 1), got {v}"));
        }
    }
    for (key, v) in [("amplitude", c.amplitude), ("stationarity", c.stationarity)] {
        if !(v >= 0.0 && v.is_finite()) {
            let l = r.line(key);
            r.issue(l, key, format!("must be nonnegative, got {v}"));
        }
    }
    if let Some(dt) = c.dt {
        if !(dt >= 0.0 && dt.is_finite()) {
            let l = r.line("dt");
            r.issue(l, "dt", format!("must be nonnegative, got {dt}"));
        }
    }
    let l = r.line("radii");
    if c.radii.is_empty() {
        r.issue(l, "radii", "must not be empty");
    } else if c.radii.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        r.issue(l, "radii", "entries must be positive");
    } else if c.radii.windows(2).any(|w| w[0] >= w[1]) {
        r.issue(l, "radii", "must be strictly increasing");
    }
    if let Some(path) = c.ambient.strip_prefix("chart:") {
        if !resolve(base, path).exists() {
            let l = r.line("ambient");
            r.issue(l, "ambient", format!("metric table {path:?} does not exist"));
        }
    }
    if let Some(path) = c.mesh.strip_prefix("file:") {
        if !resolve(base, path).exists() {
            let l = r.line("mesh");
            r.issue(l, "mesh", format!("mesh file {path:?} does not exist"));
        }
    }
    if let Err(e) = crate::scenario::MeshSpec::parse(&c.mesh) {
        if !c.mesh.is_empty() {
            let l = r.line("mesh");
            r.issue(l, "mesh", e);
        }
    }
    if let Err(e) = crate::scenario::PerturbSpec::parse(&c.perturbation) {
        let l = r.line("perturbation");
        r.issue(l, "perturbation", e);
    }
    if !c.ambient.is_empty() && !c.ambient.starts_with("chart:") {
        if let Err(e) = sff_flow::ambient::Ambient::from_spec(&c.ambient) {
            let l = r.line("ambient");
            r.issue(l, "ambient", e.to_string());
        }
    }
}

/// `path` relative to `base` unless absolute.
pub fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads and parses a scenario file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigErrors> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors {
        path: origin.clone(),
        issues: vec![ConfigIssue { line: 0, key: "file".into(), message: e.to_string() }],
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, &origin, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig, ConfigErrors> {
        parse_config_str(text, "test.cfg", Path::new("."))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse("ambient = \"euclidean\"\nmesh = \"icosphere:subdiv=2,r=1\"\n").unwrap();
        assert_eq!(c.radii, default_radii());
        assert_eq!(c.dt_cfl, 0.05);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn negative_cfl_names_the_key() {
        let e = parse("ambient = \"euclidean\"\nmesh = \"icosphere:subdiv=2,r=1\"\ndt_cfl = -1\n").unwrap_err();
        assert_eq!(e.issues.len(), 1);
        assert_eq!(e.issues[0].key, "dt_cfl");
        assert_eq!(e.issues[0].line, 3);
    }

    #[test]
    fn all_errors_are_collected() {
        let text = "ambient = 3\nbogus = 1\nbeta = 2.0\nradii = [0.2, 0.1]\nmesh = \"icosphere:subdiv=2\"\nmesh = \"x\"\nseed = 1.5\n";
        let e = parse(text).unwrap_err();
        let keys: Vec<&str> = e.issues.iter().map(|i| i.key.as_str()).collect();
        for k in ["ambient", "bogus", "beta", "radii", "mesh", "seed"] {
            assert!(keys.contains(&k), "{k} missing from {e}");
        }
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = ScenarioConfig::with_defaults("sphere:r=1", "icosphere:subdiv=3,r=0.5");
        c.dt = Some(1e-5);
        c.radii = vec![0.1, 0.25, 1.0];
        c.amplitude = 0.05;
        c.perturbation = "random".into();
        let t = c.to_text();
        let back = parse(&t).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), t);
    }
}
