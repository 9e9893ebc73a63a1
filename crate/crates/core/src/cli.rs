//! Command-line pipelines: run configuration, subcommands and exit codes.
//!
//! Every run is described by one JSON [`RunConfig`]. Flags only override
//! fields of that document, and the SHA-256 of its canonical form (keys
//! sorted, no whitespace) is embedded in every file a run writes.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::acquisition::{normalize_global, CoilMapSet};
use crate::error::{Error, Result};
use crate::grid::{Domain, RealImage};
use crate::io::{
    export_grayscale_tagged, load_acquisition, load_real_images, save_acquisition_with, save_complex_images,
    save_real_images, SaveOptions, Window,
};
use crate::metrics::psnr;
use crate::recon::{reconstruct, Method, ReconConfig, ReconResult, StopReason, WeightSource};
use crate::sim::{simulate, ScenarioConfig};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged { .. } => EXIT_DIVERGED,
        Error::Config(_) | Error::InvalidParameter(_) | Error::DegenerateGeometry(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::MalformedHeader { .. } | Error::PayloadSize { .. } => EXIT_IO,
        _ => EXIT_FAILURE,
    }
}

fn stop_code(stop: StopReason) -> i32 {
    match stop {
        StopReason::Converged => EXIT_CONVERGED,
        StopReason::MaxIters => EXIT_MAX_ITERS,
    }
}

/// Input files; unset entries fall back to the names `simulate` writes
/// into the output directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub acquisition: Option<PathBuf>,
    pub coils: Option<PathBuf>,
    /// b = 0 image for the edge weights.
    pub m0: Option<PathBuf>,
    /// Ground-truth magnitude for `compare` and `metrics`.
    pub reference: Option<PathBuf>,
    /// Image scored by `metrics`.
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub eps_keep: Vec<usize>,
    pub sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub methods: Vec<Method>,
    /// When set, `recon.method` is run over the `(ε, σ)` grid instead.
    pub sweep: Option<Sweep>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Plrhm, Method::Phase, Method::PairTv, Method::Pair],
            sweep: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub scenario: ScenarioConfig,
    pub recon: ReconConfig,
    pub inputs: Inputs,
    pub compare: CompareConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            scenario: ScenarioConfig::default(),
            recon: ReconConfig::default(),
            inputs: Inputs::default(),
            compare: CompareConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config document; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Canonical text: object keys sorted, compact separators. `out_dir`
    /// is left out so that moving the outputs keeps the hash.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut value {
            map.remove("out_dir");
        }
        canonical(&value)
    }

    /// Hex SHA-256 of [`RunConfig::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.recon.validate()?;
        let s = &self.scenario;
        if s.rows == 0 || s.cols == 0 || s.shots == 0 || s.channels == 0 {
            return Err(Error::Config("scenario sizes must be positive".into()));
        }
        if let Some(sweep) = &self.compare.sweep {
            if sweep.eps_keep.is_empty() || sweep.sigma.is_empty() {
                return Err(Error::Config("sweep grids must be non-empty".into()));
            }
        } else if self.compare.methods.is_empty() {
            return Err(Error::Config("compare needs at least one method".into()));
        }
        Ok(())
    }

    /// Applies a dotted `key=value` override. The value is parsed as JSON
    /// and taken as a plain string when that fails.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        set_path(&mut doc, key, value)?;
        *self = serde_json::from_value(doc).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    fn input(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out_dir.join(name))
    }
}

fn canonical(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", Value::String((*k).clone()), canonical(&map[*k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical).collect();
            format!("[{}]", body.join(","))
        }
        other => other.to_string(),
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key {key:?}")));
    }
    let mut node = doc;
    for (i, part) in parts.iter().enumerate() {
        // Optional sections start out as null and accept new keys.
        let fresh = node.is_null();
        if fresh {
            *node = Value::Object(Map::new());
        }
        let map = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{key:?}: {part:?} is not inside a section")))?;
        if !fresh && !map.contains_key(*part) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("keys have at least one part")
}

#[derive(Debug, Parser)]
#[command(name = "pair", about = "Phase-aware multi-shot DWI reconstruction", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted override, e.g. `recon.beta=0.002`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Seed for both the scenario and the reconstruction.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate an acquisition with its ground truth.
    Simulate,
    /// Reconstruct `recon.method` from an acquisition.
    Recon,
    /// Score several methods, or one method over an (ε, σ) grid.
    Compare,
    /// PSNR of `inputs.test` against `inputs.reference`.
    Metrics,
}

impl Cli {
    /// Resolves the run configuration: defaults, file, overrides, flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                RunConfig::from_json(&text)?
            }
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            cfg.scenario.seed = seed;
            cfg.recon.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_CONVERGED };
        }
    };
    let outcome = cli.resolve().and_then(|cfg| match cli.command {
        Command::Simulate => cmd_simulate(&cfg).map(|_| EXIT_CONVERGED),
        Command::Recon => cmd_recon(&cfg).map(|r| stop_code(r.stop)),
        Command::Compare => cmd_compare(&cfg).map(|rows| compare_code(&rows)),
        Command::Metrics => cmd_metrics(&cfg).map(|v| {
            println!("psnr {v:.4}");
            EXIT_CONVERGED
        }),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn first_image(path: &Path) -> Result<RealImage> {
    load_real_images(path)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidParameter(format!("{} holds no image", path.display())))
}

/// Writes `acquisition`, `coils`, `truth_magnitude`, `truth_phases`, `m0`
/// containers, a preview PNG and `manifest.json`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Value> {
    let hash = cfg.hash();
    let opts = SaveOptions {
        dtype: None,
        config_hash: Some(hash.clone()),
    };
    let scenario = simulate(&cfg.scenario)?;
    let dir = &cfg.out_dir;
    save_acquisition_with(&scenario.acquisition, &dir.join("acquisition"), &opts)?;
    save_complex_images(scenario.coils.maps(), &dir.join("coils"), &opts)?;
    save_real_images(std::slice::from_ref(&scenario.magnitude), &dir.join("truth_magnitude"), &opts)?;
    save_complex_images(&scenario.phases.iter().cloned().collect::<Vec<_>>(), &dir.join("truth_phases"), &opts)?;
    save_real_images(std::slice::from_ref(&scenario.m0), &dir.join("m0"), &opts)?;
    export_grayscale_tagged(
        &scenario.magnitude,
        &dir.join("truth_magnitude.png"),
        Window::Auto,
        Some(&hash),
    )?;
    let masks: Vec<Value> = scenario
        .acquisition
        .masks()
        .iter()
        .enumerate()
        .map(|(j, m)| json!({ "shot": j, "kind": m.kind(), "lines": m.pe_lines() }))
        .collect();
    let manifest = json!({
        "config_hash": hash,
        "seed": cfg.scenario.seed,
        "scenario": cfg.scenario,
        "motion": scenario.motion,
        "masks": masks,
        "files": ["acquisition", "coils", "truth_magnitude", "truth_phases", "m0", "truth_magnitude.png"],
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!("simulated {} shots into {}", cfg.scenario.shots, dir.display());
    Ok(manifest)
}

/// Loaded inputs of a reconstruction.
struct Loaded {
    acq: crate::acquisition::AcquisitionSet,
    scale: f64,
    coils: CoilMapSet,
    m0: Option<RealImage>,
}

fn load_inputs(cfg: &RunConfig, need_m0: bool) -> Result<Loaded> {
    let acq = load_acquisition(&cfg.input(&cfg.inputs.acquisition, "acquisition"))?;
    let coil_set = load_acquisition(&cfg.input(&cfg.inputs.coils, "coils"))?;
    let maps = coil_set.all_kspace().iter().map(|g| g.clone().with_domain(Domain::Image)).collect();
    let coils = CoilMapSet::new(maps)?;
    let m0 = if need_m0 {
        Some(first_image(&cfg.input(&cfg.inputs.m0, "m0"))?)
    } else {
        None
    };
    let (acq, scale) = normalize_global(&acq)?;
    Ok(Loaded { acq, scale, coils, m0 })
}

fn run_method(data: &Loaded, config: &ReconConfig) -> Result<ReconResult> {
    let weights = match (&data.m0, config.method) {
        (Some(m0), Method::Pair) => WeightSource::Reference(m0.clone()),
        _ => WeightSource::Unit,
    };
    let mut result = reconstruct(&data.acq, &data.coils, config, weights)?;
    result.magnitude = result.magnitude.scaled(1.0 / data.scale);
    Ok(result)
}

/// Writes `recon_magnitude` (container and PNG), `recon_phases`,
/// `trace.json` (deterministic) and `timing.json` (wall clock).
pub fn cmd_recon(cfg: &RunConfig) -> Result<ReconResult> {
    let hash = cfg.hash();
    let opts = SaveOptions {
        dtype: None,
        config_hash: Some(hash.clone()),
    };
    let data = load_inputs(cfg, cfg.recon.method == Method::Pair)?;
    let result = run_method(&data, &cfg.recon)?;
    let dir = &cfg.out_dir;
    save_real_images(std::slice::from_ref(&result.magnitude), &dir.join("recon_magnitude"), &opts)?;
    save_complex_images(&result.phases.iter().cloned().collect::<Vec<_>>(), &dir.join("recon_phases"), &opts)?;
    export_grayscale_tagged(&result.magnitude, &dir.join("recon_magnitude.png"), Window::Auto, Some(&hash))?;
    let steps: Vec<Value> = result
        .trace
        .iter()
        .map(|t| json!({ "iteration": t.iteration, "relative_change": t.relative_change, "data_residual": t.data_residual }))
        .collect();
    write_json(
        &dir.join("trace.json"),
        &json!({
            "config_hash": hash,
            "method": cfg.recon.method,
            "stop": result.stop,
            "iterations": result.iterations,
            "trace": steps,
        }),
    )?;
    let elapsed: Vec<f64> = result.trace.iter().map(|t| t.elapsed_secs).collect();
    write_json(
        &dir.join("timing.json"),
        &json!({ "config_hash": hash, "wall_time_secs": result.wall_time_secs, "elapsed_secs": elapsed }),
    )?;
    println!(
        "{} {:?} after {} iterations",
        cfg.recon.method.name(),
        result.stop,
        result.iterations
    );
    Ok(result)
}

/// One row of a comparison report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: Method,
    pub eps_keep: usize,
    pub sigma: f64,
    /// `None` when the run diverged.
    pub psnr: Option<f64>,
    pub iterations: Option<usize>,
    pub status: String,
}

fn compare_code(rows: &[CompareRow]) -> i32 {
    let code = |r: &CompareRow| match r.status.as_str() {
        "converged" => EXIT_CONVERGED,
        "max-iters" => EXIT_MAX_ITERS,
        _ => EXIT_DIVERGED,
    };
    rows.iter().map(code).max().unwrap_or(EXIT_CONVERGED)
}

/// Runs every job, writes `compare.json` and `compare.csv` with rows
/// sorted by ascending PSNR (diverged runs first).
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<CompareRow>> {
    let hash = cfg.hash();
    let jobs: Vec<ReconConfig> = match &cfg.compare.sweep {
        Some(sweep) => sweep
            .eps_keep
            .iter()
            .flat_map(|&e| sweep.sigma.iter().map(move |&s| (e, s)))
            .map(|(e, s)| ReconConfig {
                eps_keep: e,
                sigma: s,
                ..cfg.recon.clone()
            })
            .collect(),
        None => cfg
            .compare
            .methods
            .iter()
            .map(|&m| ReconConfig {
                method: m,
                ..cfg.recon.clone()
            })
            .collect(),
    };
    let needs_m0 = jobs.iter().any(|j| j.method == Method::Pair);
    let data = load_inputs(cfg, needs_m0)?;
    let reference = first_image(&cfg.input(&cfg.inputs.reference, "truth_magnitude"))?;
    let mut rows = jobs
        .par_iter()
        .map(|job| {
            let (psnr_db, iterations, status) = match run_method(&data, job) {
                Ok(r) => {
                    let status = match r.stop {
                        StopReason::Converged => "converged",
                        StopReason::MaxIters => "max-iters",
                    };
                    (Some(psnr(&reference, &r.magnitude)?), Some(r.iterations), status)
                }
                Err(Error::Diverged { .. }) => (None, None, "diverged"),
                Err(e) => return Err(e),
            };
            Ok(CompareRow {
                method: job.method,
                eps_keep: job.eps_keep,
                sigma: job.sigma,
                psnr: psnr_db,
                iterations,
                status: status.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.psnr
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&b.psnr.unwrap_or(f64::NEG_INFINITY))
    });

    let dir = &cfg.out_dir;
    write_json(&dir.join("compare.json"), &json!({ "config_hash": hash, "rows": rows }))?;
    let mut csv = format!("# config-hash {hash}\nmethod,eps_keep,sigma,psnr_db,iterations,status\n");
    for r in &rows {
        let fmt_opt = |v: Option<String>| v.unwrap_or_default();
        csv += &format!(
            "{},{},{},{},{},{}\n",
            r.method.name(),
            r.eps_keep,
            r.sigma,
            fmt_opt(r.psnr.map(|p| format!("{p:.4}"))),
            fmt_opt(r.iterations.map(|i| i.to_string())),
            r.status
        );
    }
    let csv_path = dir.join("compare.csv");
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    for r in &rows {
        let p = r.psnr.map(|p| format!("{p:.2} dB")).unwrap_or_else(|| "-".into());
        println!("{:8} eps {:3} sigma {:.2}  {p}  {}", r.method.name(), r.eps_keep, r.sigma, r.status);
    }
    Ok(rows)
}

/// PSNR of `inputs.test` (default `recon_magnitude`) against
/// `inputs.reference` (default `truth_magnitude`); writes `metrics.json`.
pub fn cmd_metrics(cfg: &RunConfig) -> Result<f64> {
    let reference = first_image(&cfg.input(&cfg.inputs.reference, "truth_magnitude"))?;
    let test = first_image(&cfg.input(&cfg.inputs.test, "recon_magnitude"))?;
    let value = psnr(&reference, &test)?;
    write_json(
        &cfg.out_dir.join("metrics.json"),
        &json!({ "metric": "psnr", "value": value, "config_hash": cfg.hash() }),
    )?;
    Ok(value)
}
