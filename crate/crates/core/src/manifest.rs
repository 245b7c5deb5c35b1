//! JSON run manifests.
//!
//! ```json
//! {
//!   "length": 1.0,
//!   "intervals": 256,
//!   "delta_p": [0.8, 0.0],
//!   "initial": { "preset": "perturbed-arc" }
//! }
//! ```
//!
//! Optional keys: `p_minus`, `seed`, `output_dir`, and the `flow` / `picard`
//! sections. Missing values are filled with defaults; [`RunManifest::to_json`]
//! echoes the fully resolved manifest, which parses back to the same value.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Scheme};
use crate::grid_curve::{ConstraintSpec, CurveMode, Grid};
use crate::heat_picard::{KernelParams, PicardConfig};
use crate::multipliers::MultiplierMethod;
use crate::par::Execution;
use crate::presets::{InitialData, PRESET_NAMES};

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub grid: Grid,
    pub constraint: ConstraintSpec,
    pub p_minus: [f64; 2],
    pub initial: InitialData,
    pub flow: FlowConfig,
    pub picard: PicardConfig,
    pub seed: u64,
    /// As written (possibly relative to [`RunManifest::base_dir`]).
    pub output_dir: PathBuf,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

/// Object view that remembers which keys were consumed.
struct Section<'a> {
    prefix: &'static str,
    map: &'a Map<String, Value>,
    seen: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn new(prefix: &'static str, value: &'a Value) -> Result<Self> {
        let name = if prefix.is_empty() { "<root>" } else { prefix };
        match value {
            Value::Object(map) => Ok(Self { prefix, map, seen: Vec::new() }),
            _ => Err(Error::manifest(name, "a JSON object")),
        }
    }

    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.push(key);
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn get<T: DeserializeOwned>(&mut self, key: &'static str, expected: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => {
                serde_json::from_value(v.clone()).map(Some).map_err(|_| Error::manifest(self.path(key), expected))
            }
        }
    }

    fn require<T: DeserializeOwned>(&mut self, key: &'static str, expected: &str) -> Result<T> {
        self.get(key, expected)?.ok_or_else(|| Error::manifest(self.path(key), format!("{expected} (required)")))
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().find(|k| !self.seen.contains(&k.as_str())) {
            Some(k) => Err(Error::manifest(self.path(k), "no such field")),
            None => Ok(()),
        }
    }
}

fn positive(field: String, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::manifest(field, "a positive finite number"))
    }
}

const POS: &str = "a positive number";
const COUNT: &str = "a nonnegative integer";

impl RunManifest {
    /// Read and validate a manifest file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        Self::parse(&text, &base, stem).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    /// Parse manifest text; `stem` names the default output directory `<stem>-out`.
    pub fn parse(text: &str, base_dir: &Path, stem: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::Parse { path: PathBuf::from("<manifest>"), message: e.to_string() })?;
        let mut root = Section::new("", &value)?;
        let length = positive("length".into(), root.require("length", POS)?)?;
        let intervals: usize = root.require("intervals", "an integer >= 8")?;
        let grid = Grid::new(length, intervals).map_err(|_| Error::manifest("intervals", "an integer >= 8"))?;
        let delta_p: [f64; 2] = root.require("delta_p", "a pair of numbers [x, y]")?;
        let constraint = ConstraintSpec::new(delta_p, length)?;
        let p_minus = root.get("p_minus", "a pair of numbers [x, y]")?.unwrap_or([0.0, 0.0]);
        let seed = root.get("seed", COUNT)?.unwrap_or(0);
        let output_dir =
            root.get::<PathBuf>("output_dir", "a path string")?.unwrap_or_else(|| PathBuf::from(format!("{stem}-out")));

        let initial_value = root
            .raw("initial")
            .ok_or_else(|| Error::manifest("initial", "an object with a `preset` field (required)"))?;
        let initial = parse_initial(initial_value, base_dir)?;

        let empty = Value::Object(Map::new());
        let flow = parse_flow(root.raw("flow").unwrap_or(&empty), &grid, &initial)?;
        let mut picard = parse_picard(root.raw("picard").unwrap_or(&empty))?;
        picard.seed = seed;
        root.finish()?;
        Ok(Self {
            grid,
            constraint,
            p_minus,
            initial,
            flow,
            picard,
            seed,
            output_dir,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// `output_dir` resolved against the manifest directory.
    pub fn resolved_output_dir(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            self.output_dir.clone()
        } else {
            self.base_dir.join(&self.output_dir)
        }
    }

    /// Fully resolved manifest in the input format.
    pub fn to_json(&self) -> Value {
        let mut picard = serde_json::to_value(self.picard).expect("picard config serializes");
        if let Value::Object(map) = &mut picard {
            map.remove("seed");
        }
        serde_json::json!({
            "length": self.grid.length(),
            "intervals": self.grid.intervals(),
            "delta_p": self.constraint.delta_p(),
            "p_minus": self.p_minus,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "initial": self.initial,
            "flow": self.flow,
            "picard": picard,
        })
    }
}

fn parse_initial(value: &Value, base_dir: &Path) -> Result<InitialData> {
    let preset = value
        .get("preset")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::manifest("initial.preset", format!("one of {}", PRESET_NAMES.join(", "))))?;
    if !PRESET_NAMES.contains(&preset) {
        return Err(Error::manifest("initial.preset", format!("one of {}", PRESET_NAMES.join(", "))));
    }
    let init: InitialData = serde_json::from_value(value.clone())
        .map_err(|e| Error::manifest("initial", format!("valid `{preset}` parameters ({e})")))?;
    if let InitialData::FromFile { path } = &init {
        let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
        if !full.is_file() {
            return Err(Error::manifest(
                "initial.path",
                format!("an existing angle file ({} not found)", full.display()),
            ));
        }
    }
    Ok(init)
}

fn parse_flow(value: &Value, grid: &Grid, initial: &InitialData) -> Result<FlowConfig> {
    let mut s = Section::new("flow", value)?;
    let dt = match s.get::<f64>("dt", POS)? {
        Some(v) => positive("flow.dt".into(), v)?,
        None => FlowConfig::default_dt(grid),
    };
    let l = grid.length();
    let t_end = match s.get::<f64>("t_end", POS)? {
        Some(v) => positive("flow.t_end".into(), v)?,
        None => 10.0 * l * l,
    };
    let mut cfg = FlowConfig::new(dt, t_end);
    if let Some(v) = s.get::<Scheme>("scheme", "\"imex\" or \"explicit-euler\"")? {
        cfg.scheme = v;
    }
    cfg.mode = s
        .get::<CurveMode>("mode", "\"open-hinged\" or \"closed-periodic\"")?
        .unwrap_or(if initial.is_closed() { CurveMode::ClosedPeriodic } else { CurveMode::OpenHinged });
    if let Some(v) =
        s.get::<MultiplierMethod>("multiplier_method", "\"discrete-constraint\", \"continuous-formula\" or \"zero\"")?
    {
        cfg.multiplier_method = v;
    }
    if let Some(v) = s.get::<f64>("equilibrium_tol", POS)? {
        cfg.equilibrium_tol = positive("flow.equilibrium_tol".into(), v)?;
    }
    if let Some(v) = s.get::<usize>("snapshot_stride", "a positive integer")? {
        if v == 0 {
            return Err(Error::manifest("flow.snapshot_stride", "a positive integer"));
        }
        cfg.snapshot_stride = v;
    }
    if let Some(v) = s.get::<bool>("stability_guard", "true or false")? {
        cfg.stability_guard = v;
    }
    s.finish()?;
    Ok(cfg)
}

fn parse_picard(value: &Value) -> Result<PicardConfig> {
    let mut s = Section::new("picard", value)?;
    let mut cfg = PicardConfig::default();
    if let Some(v) = s.get::<f64>("t0", POS)? {
        cfg.t0 = Some(positive("picard.t0".into(), v)?);
    }
    if let Some(v) = s.get("n_max", "a positive integer")? {
        cfg.n_max = v;
    }
    if let Some(v) = s.get::<f64>("tol", POS)? {
        cfg.tol = positive("picard.tol".into(), v)?;
    }
    if let Some(v) = s.get::<usize>("time_slices", "an integer >= 2")? {
        if v < 2 {
            return Err(Error::manifest("picard.time_slices", "an integer >= 2"));
        }
        cfg.time_slices = v;
    }
    if let Some(v) = s.get::<KernelParams>("kernel", "an object {image_count, quad_nodes, t_floor}")? {
        cfg.kernel = Some(v);
    }
    if let Some(v) = s.get("multipliers", "\"continuous-formula\", \"discrete-constraint\" or \"zero\"")? {
        cfg.multipliers = v;
    }
    if let Some(v) = s.get("c4_samples", "a positive integer")? {
        cfg.c4_samples = v;
    }
    if let Some(v) = s.get::<Execution>("execution", "\"parallel\" or \"sequential\"")? {
        cfg.execution = v;
    }
    s.finish()?;
    Ok(cfg)
}
