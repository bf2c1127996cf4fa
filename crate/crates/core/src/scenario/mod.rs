//! Scenario files, run orchestration and stored-trajectory checks.

mod config;
mod output;

pub use config::{
    load_config, LawKind, LawSpec, Numerics, OutputSpec, ScenarioConfig, SceneSpec, SeedCurve,
};
pub use output::{
    read_json_lines, to_exact_json, ContactRecord, ExactFloats, FrameRecord, JsonLinesWriter,
    ReactionRecord,
};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::curves::{rodrigues, Vec3};
use crate::diagnostics::{
    audit_state, gronwall_certificate, rotation_field, weighted_norm, GronwallCertificate,
    WeightedNorm,
};
use crate::error::{ConfigError, DiagnosticsError};
use crate::reaction::{oracle_solve_reaction, ORACLE_MAX_CONTACTS};
use crate::stepper::{run_with, system_for_rows, Event, SimConfig, StemState, Terminal};

pub const EXIT_HORIZON: i32 = 0;
pub const EXIT_BREAKDOWN: i32 = 10;
pub const EXIT_INTEGRITY: i32 = 20;
pub const EXIT_USAGE: i32 = 1;

pub const FRAMES_FILE: &str = "frames.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DISTANCES_FILE: &str = "distances.jsonl";
pub const TWIN_SUMMARY_FILE: &str = "twin_summary.json";

pub fn exit_code(terminal: &Terminal) -> i32 {
    match terminal {
        Terminal::HorizonReached => EXIT_HORIZON,
        Terminal::Breakdown(_) => EXIT_BREAKDOWN,
        Terminal::IntegrityFailure(_) => EXIT_INTEGRITY,
    }
}

fn terminal_name(terminal: &Terminal) -> &'static str {
    match terminal {
        Terminal::HorizonReached => "horizon_reached",
        Terminal::Breakdown(_) => "breakdown",
        Terminal::IntegrityFailure(_) => "integrity_failure",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ScenarioConfig,
    pub started_unix_seconds: u64,
    pub wall_seconds: f64,
    pub frames: String,
    pub events: String,
    pub stride: usize,
    pub steps: usize,
    pub terminal: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub exit_code: i32,
    pub terminal: Terminal,
    pub frames: usize,
    pub steps: usize,
    pub events: Vec<Event>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ConfigError + '_ {
    move |source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a scenario from a TOML file or from the config stored in a run
/// manifest (`*.json`).
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let config = if path.extension().is_some_and(|e| e == "json") {
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        manifest.config
    } else {
        ScenarioConfig::from_toml(&text)?
    };
    Ok(config.with_defaults())
}

/// Runs a scenario, writing frames, events and a manifest into `out`.
pub fn run_scenario(
    config: &ScenarioConfig,
    out: &Path,
    stride: Option<usize>,
) -> Result<RunReport, ConfigError> {
    let config = config.clone().with_defaults();
    let sim = config.to_sim_config()?;
    let stride = stride.unwrap_or(config.output.stride);
    if stride == 0 {
        return Err(ConfigError::invalid("output.stride", "must be at least 1"));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let frames_path = out.join(FRAMES_FILE);
    let events_path = out.join(EVENTS_FILE);
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();

    let mut writer = JsonLinesWriter::create(&frames_path).map_err(io_err(&frames_path))?;
    let mut write_error = None;
    let mut frames = 0;
    let summary = run_with(&sim, stride, |frame| {
        if write_error.is_none() {
            match writer.write(&FrameRecord::from_frame(&frame)) {
                Ok(()) => frames += 1,
                Err(e) => write_error = Some(e),
            }
        }
    })
    .map_err(|e| ConfigError::invalid("seed_curve", e.to_string()))?;
    if let Some(e) = write_error {
        return Err(io_err(&frames_path)(e));
    }
    writer.finish().map_err(io_err(&frames_path))?;

    let mut events = JsonLinesWriter::create(&events_path).map_err(io_err(&events_path))?;
    for e in &summary.events {
        events.write(e).map_err(io_err(&events_path))?;
    }
    events.finish().map_err(io_err(&events_path))?;

    let exit = exit_code(&summary.terminal);
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config,
        started_unix_seconds: started,
        wall_seconds: clock.elapsed().as_secs_f64(),
        frames: FRAMES_FILE.into(),
        events: EVENTS_FILE.into(),
        stride,
        steps: summary.steps,
        terminal: terminal_name(&summary.terminal).into(),
        exit_code: exit,
    };
    let manifest_path = out.join(MANIFEST_FILE);
    fs::write(&manifest_path, to_exact_json(&manifest)).map_err(io_err(&manifest_path))?;
    log::info!(
        "{} steps, {frames} frames, terminal {}",
        summary.steps,
        terminal_name(&summary.terminal)
    );
    Ok(RunReport {
        exit_code: exit,
        terminal: summary.terminal,
        frames,
        steps: summary.steps,
        events: summary.events,
    })
}

/// Perturbation of the initial data for twin runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    /// Rigid rotation of the whole initial curve about an axis through the base.
    Tilt { angle: f64, axis: Option<[f64; 3]> },
}

impl std::str::FromStr for Perturbation {
    type Err = String;

    /// `tilt:<radians>` or `tilt:<radians>@<ax>,<ay>,<az>`.
    fn from_str(s: &str) -> Result<Self, String> {
        let rest = s
            .strip_prefix("tilt:")
            .ok_or_else(|| format!("unknown perturbation `{s}` (expected tilt:<radians>[@ax,ay,az])"))?;
        let (angle, axis) = match rest.split_once('@') {
            Some((a, axis)) => {
                let parts: Vec<f64> = axis
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| format!("bad tilt axis `{axis}`: {e}"))?;
                let [x, y, z] = parts[..] else {
                    return Err(format!("tilt axis needs three components, got `{axis}`"));
                };
                (a, Some([x, y, z]))
            }
            None => (rest, None),
        };
        let angle: f64 = angle
            .trim()
            .parse()
            .map_err(|e| format!("bad tilt angle `{angle}`: {e}"))?;
        if !angle.is_finite() {
            return Err("tilt angle must be finite".into());
        }
        Ok(Perturbation::Tilt { angle, axis })
    }
}

impl Perturbation {
    /// Applies the perturbation to the initial tangents.
    pub fn apply(&self, sim: &SimConfig) -> Result<SimConfig, ConfigError> {
        let Perturbation::Tilt { angle, axis } = *self;
        let axis = match axis {
            Some(a) => {
                let a = Vec3::from(a);
                if !(a.norm() > 1e-12) {
                    return Err(ConfigError::invalid("perturb", "tilt axis must be non-zero"));
                }
                a.normalize()
            }
            None => {
                let a = sim.initial.tip_tangent().cross(&Vec3::z());
                if a.norm() > 1e-12 {
                    a.normalize()
                } else {
                    Vec3::x()
                }
            }
        };
        let r = rodrigues(&(axis * angle));
        let mut out = sim.clone();
        for k in &mut out.initial.tangents {
            *k = r * *k;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSample {
    pub t: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinSummary {
    pub perturbation: Perturbation,
    pub samples: usize,
    pub initial_distance: f64,
    pub terminal_distance: f64,
    pub max_distance: f64,
    /// Envelope fit; absent when the runs coincide at some frame.
    pub certificate: Option<GronwallCertificate>,
    /// Runs identical at every frame.
    pub coincident: bool,
    pub terminal_reference: String,
    pub terminal_perturbed: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinReport {
    pub distances: Vec<DistanceSample>,
    pub summary: TwinSummary,
}

fn collect_states(sim: &SimConfig, stride: usize) -> Result<(Vec<StemState>, Terminal), ConfigError> {
    let mut states = Vec::new();
    let summary = run_with(sim, stride, |f| states.push(f.state))
        .map_err(|e| ConfigError::invalid("seed_curve", e.to_string()))?;
    Ok((states, summary.terminal))
}

/// Runs the scenario and its perturbed twin on the same grid and measures
/// the rotation-field distance frame by frame.
pub fn twin_run(
    config: &ScenarioConfig,
    perturbation: &Perturbation,
    out: Option<&Path>,
    stride: Option<usize>,
) -> Result<TwinReport, ConfigError> {
    let config = config.clone().with_defaults();
    let sim = config.to_sim_config()?;
    let twin = perturbation.apply(&sim)?;
    let stride = stride.unwrap_or(config.output.stride).max(1);
    let (a, b) = std::thread::scope(|scope| {
        let h = scope.spawn(|| collect_states(&twin, stride));
        let a = collect_states(&sim, stride);
        (a, h.join().expect("twin run panicked"))
    });
    let ((a_states, term_a), (b_states, term_b)) = (a?, b?);
    let mut distances = Vec::new();
    for (s1, s2) in a_states.iter().zip(&b_states) {
        let field = match rotation_field(s1, s2) {
            Ok(f) => f,
            Err(DiagnosticsError::GridMismatch(_)) => break,
            Err(e) => return Err(ConfigError::invalid("perturb", e.to_string())),
        };
        let norm = WeightedNorm {
            beta: sim.law.beta,
            t: s1.t(),
        };
        distances.push(DistanceSample {
            t: s1.t(),
            distance: weighted_norm(&field, &norm),
        });
    }
    let series: Vec<f64> = distances.iter().map(|d| d.distance).collect();
    let coincident = series.iter().all(|d| *d == 0.0);
    let certificate = match gronwall_certificate(&series, sim.dt * stride as f64) {
        Ok(c) => Some(c),
        Err(DiagnosticsError::NonPositiveDistance { .. }) | Err(DiagnosticsError::SeriesTooShort { .. }) => None,
        Err(e) => return Err(ConfigError::invalid("perturb", e.to_string())),
    };
    let summary = TwinSummary {
        perturbation: *perturbation,
        samples: series.len(),
        initial_distance: series.first().copied().unwrap_or(0.0),
        terminal_distance: series.last().copied().unwrap_or(0.0),
        max_distance: series.iter().copied().fold(0.0, f64::max),
        certificate,
        coincident,
        terminal_reference: terminal_name(&term_a).into(),
        terminal_perturbed: terminal_name(&term_b).into(),
    };
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(io_err(out))?;
        let path = out.join(DISTANCES_FILE);
        let mut w = JsonLinesWriter::create(&path).map_err(io_err(&path))?;
        for d in &distances {
            w.write(d).map_err(io_err(&path))?;
        }
        w.finish().map_err(io_err(&path))?;
        let path = out.join(TWIN_SUMMARY_FILE);
        fs::write(&path, to_exact_json(&summary)).map_err(io_err(&path))?;
    }
    Ok(TwinReport { distances, summary })
}

/// Manifest stored next to a frames file.
pub fn manifest_for(frames: &Path) -> Result<RunManifest, ConfigError> {
    let path = frames
        .parent()
        .map(|p| p.join(MANIFEST_FILE))
        .unwrap_or_else(|| PathBuf::from(MANIFEST_FILE));
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub frames: usize,
    pub failures: Vec<String>,
    pub max_unit_defect: f64,
    pub min_distance: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Re-checks the state invariants of every stored frame. Signed distances
/// are recomputed when a manifest sits next to the frames.
pub fn audit_frames(frames_path: &Path) -> Result<AuditReport, ConfigError> {
    let frames: Vec<FrameRecord> = read_json_lines(frames_path).map_err(io_err(frames_path))?;
    let sim = manifest_for(frames_path)
        .ok()
        .map(|m| m.config.with_defaults().to_sim_config())
        .transpose()?;
    let mut failures = Vec::new();
    let mut max_unit_defect: f64 = 0.0;
    let mut min_distance = f64::INFINITY;
    let mut last_t = f64::NEG_INFINITY;
    for (i, f) in frames.iter().enumerate() {
        let state = match f.state() {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("frame {i}: {e}"));
                continue;
            }
        };
        if f.t < last_t {
            failures.push(format!("frame {i}: time goes backwards"));
        }
        last_t = f.t;
        if (f.t - state.t()).abs() > 1e-12 * f.t.max(1.0) {
            failures.push(format!("frame {i}: t = {} but tip at s = {}", f.t, state.t()));
        }
        match &sim {
            Some(sim) => {
                let a = audit_state(&state, &sim.scene);
                max_unit_defect = max_unit_defect.max(a.unit_defect);
                min_distance = min_distance.min(a.min_distance);
                if !a.passes(sim.tolerances.penetration) {
                    failures.push(format!("frame {i} (t = {}): {a:?}", f.t));
                }
            }
            None => {
                if let Err(e) = state.check_invariants() {
                    failures.push(format!("frame {i}: {e}"));
                }
                min_distance = min_distance.min(f.min_distance);
            }
        }
    }
    Ok(AuditReport {
        frames: frames.len(),
        failures,
        max_unit_defect,
        min_distance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub checked: usize,
    pub skipped: usize,
    pub mismatches: Vec<String>,
    pub max_relative_error: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-solves every stored reaction with the enumeration oracle and compares
/// angular velocities.
pub fn oracle_check(frames_path: &Path) -> Result<OracleReport, ConfigError> {
    let manifest = manifest_for(frames_path)?;
    let beta = manifest.config.law.beta;
    let frames: Vec<FrameRecord> = read_json_lines(frames_path).map_err(io_err(frames_path))?;
    let mut report = OracleReport {
        checked: 0,
        skipped: 0,
        mismatches: Vec::new(),
        max_relative_error: 0.0,
    };
    for (i, f) in frames.iter().enumerate() {
        let Some(reaction) = &f.reaction else {
            continue;
        };
        if reaction.contacts.is_empty() {
            if reaction.energy != 0.0 {
                report
                    .mismatches
                    .push(format!("frame {i}: reaction energy {} without contacts", reaction.energy));
            }
            report.checked += 1;
            continue;
        }
        if reaction.contacts.len() > ORACLE_MAX_CONTACTS {
            report.skipped += 1;
            continue;
        }
        let state = f.state().map_err(|e| ConfigError::Parse(format!("frame {i}: {e}")))?;
        let system = system_for_rows(&state, beta, f.rows())
            .map_err(|e| ConfigError::Parse(format!("frame {i}: {e}")))?;
        let stored = system.omega_from_multipliers(&reaction.multipliers);
        match oracle_solve_reaction(&system) {
            Ok(oracle) => {
                let scale: f64 = oracle.omega.iter().map(|w| w.norm_squared()).sum::<f64>().sqrt();
                let diff: f64 = stored
                    .iter()
                    .zip(&oracle.omega)
                    .map(|(a, b)| (a - b).norm_squared())
                    .sum::<f64>()
                    .sqrt();
                let rel = diff / (1.0 + scale);
                report.max_relative_error = report.max_relative_error.max(rel);
                if rel > 1e-8 {
                    report
                        .mismatches
                        .push(format!("frame {i} (t = {}): relative difference {rel:e}", f.t));
                }
            }
            Err(e) => report.mismatches.push(format!("frame {i}: oracle failed: {e}")),
        }
        report.checked += 1;
    }
    Ok(report)
}
