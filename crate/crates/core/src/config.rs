//! JSON run configuration and the provenance manifest embedded in outputs.
//!
//! A run is described by one JSON document with five optional sections —
//! `timing`, `scenario`, `solver`, `sim`, and `outputs` — in which every
//! field is optional and falls back to the library defaults, so the minimal
//! valid configuration is `{}`.  Unknown keys are rejected so that typos
//! fail loudly instead of silently running with defaults.
//!
//! Payload quantities are given in **bytes** in the configuration file
//! (they are converted to bits internally); every duration is in seconds.
//!
//! The named timing profile is selected with the following precedence:
//! explicit `timing.profile` in the file, then the `DCF_PROFILE` environment
//! variable, then the built-in default profile.  Individual timing fields in
//! the file override the chosen profile field-by-field.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::SolverSettings;
use crate::params::{ProtocolTiming, Recovery, ScenarioParams};
use crate::sim::{PayloadChange, SimConfig, TimelineEvent, W0Change};

/// Environment variable naming a built-in timing profile.
pub const PROFILE_ENV_VAR: &str = "DCF_PROFILE";

/// Prefix of the manifest line carrying the generation timestamp.
///
/// This is the one manifest line excluded from byte-for-byte output
/// comparisons: two runs of the same command with the same inputs produce
/// identical files modulo lines starting with this prefix.
pub const TIMESTAMP_PREFIX: &str = "# generated-unix-s:";

/// Raw (pre-resolution) timing section: every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawTiming {
    /// Named base profile; see [`ProtocolTiming::by_name`].
    pub profile: Option<String>,
    pub mac_header_bits: Option<u64>,
    pub phy_header_bits: Option<u64>,
    pub ack_bits: Option<u64>,
    pub sigma_s: Option<f64>,
    pub sifs_s: Option<f64>,
    pub difs_s: Option<f64>,
    pub eifs_s: Option<f64>,
    pub prop_delay_s: Option<f64>,
    pub ack_timeout_s: Option<f64>,
    pub data_rate_bps: Option<f64>,
    pub control_rate_bps: Option<f64>,
    pub per_overhead_bits: Option<u64>,
    pub collision_recovery: Option<Recovery>,
    pub error_recovery: Option<Recovery>,
}

/// Raw scenario section: payload sizes in bytes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawScenario {
    pub n_stations: Option<u32>,
    pub lambda_pps: Option<f64>,
    pub w0: Option<u32>,
    pub m: Option<u32>,
    pub payload_bytes: Option<u64>,
    pub bit_error_prob: Option<f64>,
    pub packet_error_prob: Option<f64>,
    pub per_target: Option<f64>,
    pub pl_max_bytes: Option<u64>,
}

/// Raw solver section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSolver {
    pub tolerance: Option<f64>,
    pub max_iterations: Option<u64>,
    pub damping: Option<f64>,
}

/// Raw timeline entry (mirrors [`TimelineEvent`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTimelineEvent {
    pub time_s: f64,
    pub station: u32,
    pub on: bool,
}

/// Raw contention-window change (mirrors [`W0Change`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawW0Change {
    pub time_s: f64,
    pub w0: u32,
}

/// Raw payload change, in bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPayloadChange {
    pub time_s: f64,
    pub payload_bytes: u64,
}

/// Raw simulation section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSim {
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
    pub warmup_s: Option<f64>,
    pub min_slots: Option<u64>,
    pub queue_capacity: Option<u32>,
    pub saturated: Option<bool>,
    pub window_s: Option<f64>,
    pub timeline: Option<Vec<RawTimelineEvent>>,
    pub w0_schedule: Option<Vec<RawW0Change>>,
    pub payload_schedule: Option<Vec<RawPayloadChange>>,
    pub post_backoff: Option<bool>,
}

/// Raw outputs section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawOutputs {
    /// Output directory; overridden by the `--out` command-line flag.
    pub dir: Option<String>,
    /// Optional filename prefix for every emitted file.
    pub prefix: Option<String>,
}

/// Complete raw configuration document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawConfig {
    pub timing: RawTiming,
    pub scenario: RawScenario,
    pub solver: RawSolver,
    pub sim: RawSim,
    pub outputs: RawOutputs,
}

/// Fully resolved configuration: concrete structs, validated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub timing: ProtocolTiming,
    pub scenario: ScenarioParams,
    pub solver: SolverSettings,
    pub sim: SimConfig,
}

/// Read a raw configuration from `path`, or return the empty default when
/// `path` is `None`.
pub fn load_raw(path: Option<&Path>) -> Result<RawConfig> {
    match path {
        None => Ok(RawConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            parse_raw(&text)
        }
    }
}

/// Parse a raw configuration from JSON text.
pub fn parse_raw(text: &str) -> Result<RawConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
}

impl RawConfig {
    /// Resolve against library defaults, reading `DCF_PROFILE` from the
    /// process environment for the timing-profile fallback.
    pub fn resolve(&self) -> Result<Resolved> {
        let env = std::env::var(PROFILE_ENV_VAR).ok();
        self.resolve_with_env_profile(env.as_deref())
    }

    /// Resolve with an explicit environment-profile value (testable form).
    pub fn resolve_with_env_profile(&self, env_profile: Option<&str>) -> Result<Resolved> {
        let timing = self.resolve_timing(env_profile)?;
        let scenario = self.resolve_scenario()?;
        let solver = self.resolve_solver()?;
        let sim = self.resolve_sim(&scenario, &timing)?;
        Ok(Resolved { timing, scenario, solver, sim })
    }

    fn resolve_timing(&self, env_profile: Option<&str>) -> Result<ProtocolTiming> {
        let t = &self.timing;
        let profile_name = t.profile.as_deref().or(env_profile);
        let mut timing = match profile_name {
            None => ProtocolTiming::default(),
            Some(name) => ProtocolTiming::by_name(name).ok_or_else(|| {
                Error::Config(format!("unknown timing profile {name:?}"))
            })?,
        };
        if let Some(v) = t.mac_header_bits {
            timing.mac_header_bits = v;
        }
        if let Some(v) = t.phy_header_bits {
            timing.phy_header_bits = v;
        }
        if let Some(v) = t.ack_bits {
            timing.ack_bits = v;
        }
        if let Some(v) = t.sigma_s {
            timing.sigma_s = v;
        }
        if let Some(v) = t.sifs_s {
            timing.sifs_s = v;
        }
        if let Some(v) = t.difs_s {
            timing.difs_s = v;
        }
        if let Some(v) = t.eifs_s {
            timing.eifs_s = v;
        }
        if let Some(v) = t.prop_delay_s {
            timing.prop_delay_s = v;
        }
        if let Some(v) = t.ack_timeout_s {
            timing.ack_timeout_s = v;
        }
        if let Some(v) = t.data_rate_bps {
            timing.data_rate_bps = v;
        }
        if let Some(v) = t.control_rate_bps {
            timing.control_rate_bps = v;
        }
        if let Some(v) = t.per_overhead_bits {
            timing.per_overhead_bits = v;
        }
        if let Some(v) = t.collision_recovery {
            timing.collision_recovery = v;
        }
        if let Some(v) = t.error_recovery {
            timing.error_recovery = v;
        }
        timing.validate()?;
        Ok(timing)
    }

    fn resolve_scenario(&self) -> Result<ScenarioParams> {
        let s = &self.scenario;
        let mut scenario = ScenarioParams::default();
        if let Some(v) = s.n_stations {
            scenario.n_stations = v;
        }
        if let Some(v) = s.lambda_pps {
            scenario.lambda_pps = v;
        }
        if let Some(v) = s.w0 {
            scenario.w0 = v;
        }
        if let Some(v) = s.m {
            scenario.m = v;
        }
        if let Some(v) = s.payload_bytes {
            scenario.payload_bits = v.saturating_mul(8);
        }
        // The two channel descriptions are mutually exclusive; if the file
        // names either one, the default bit-error rate must not linger.
        if s.bit_error_prob.is_some() || s.packet_error_prob.is_some() {
            scenario.bit_error_prob = s.bit_error_prob;
            scenario.packet_error_prob = s.packet_error_prob;
        }
        if let Some(v) = s.per_target {
            scenario.per_target = v;
        }
        if let Some(v) = s.pl_max_bytes {
            scenario.pl_max_bits = v.saturating_mul(8);
        }
        scenario.validate()?;
        Ok(scenario)
    }

    fn resolve_solver(&self) -> Result<SolverSettings> {
        let s = &self.solver;
        let mut solver = SolverSettings::default();
        if let Some(v) = s.tolerance {
            solver.tolerance = v;
        }
        if let Some(v) = s.max_iterations {
            solver.max_iterations = v;
        }
        if let Some(v) = s.damping {
            solver.damping = v;
        }
        solver.validate()?;
        Ok(solver)
    }

    fn resolve_sim(&self, scenario: &ScenarioParams, timing: &ProtocolTiming) -> Result<SimConfig> {
        let s = &self.sim;
        let mut sim = SimConfig {
            scenario: scenario.clone(),
            timing: timing.clone(),
            ..SimConfig::default()
        };
        if let Some(v) = s.seed {
            sim.seed = v;
        }
        if let Some(v) = s.duration_s {
            sim.duration_s = v;
        }
        if let Some(v) = s.warmup_s {
            sim.warmup_s = v;
        }
        if let Some(v) = s.min_slots {
            sim.min_slots = v;
        }
        if let Some(v) = s.queue_capacity {
            sim.queue_capacity = v;
        }
        if let Some(v) = s.saturated {
            sim.saturated = v;
        }
        if s.window_s.is_some() {
            sim.window_s = s.window_s;
        }
        if let Some(tl) = &s.timeline {
            sim.timeline = tl
                .iter()
                .map(|e| TimelineEvent { time_s: e.time_s, station: e.station, on: e.on })
                .collect();
        }
        if let Some(ws) = &s.w0_schedule {
            sim.w0_schedule =
                ws.iter().map(|c| W0Change { time_s: c.time_s, w0: c.w0 }).collect();
        }
        if let Some(ps) = &s.payload_schedule {
            sim.payload_schedule = ps
                .iter()
                .map(|c| PayloadChange {
                    time_s: c.time_s,
                    payload_bits: c.payload_bytes.saturating_mul(8),
                })
                .collect();
        }
        if let Some(v) = s.post_backoff {
            sim.post_backoff = v;
        }
        sim.validate()?;
        Ok(sim)
    }
}

/// Provenance record embedded as `#`-prefixed comment lines at the top of
/// every emitted file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    /// Subcommand that produced the outputs.
    pub command: String,
    /// Library/tool version.
    pub version: String,
    /// Master seed every random draw derives from.
    pub seed: u64,
    /// Resolved configuration behind the run.
    pub resolved: Resolved,
    /// Paths of all files emitted by the command.
    pub output_paths: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, resolved: Resolved) -> Self {
        let seed = resolved.sim.seed;
        RunManifest {
            command: command.to_string(),
            version: crate::VERSION.to_string(),
            seed,
            resolved,
            output_paths: Vec::new(),
        }
    }

    /// Render the manifest as comment lines, each prefixed `# `, ending with
    /// a newline.  The timestamp line starts with [`TIMESTAMP_PREFIX`] and is
    /// the only line that varies between identical runs.
    pub fn header(&self) -> String {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "# dcf run manifest");
        let _ = writeln!(out, "# command: {}", self.command);
        let _ = writeln!(out, "# version: {}", self.version);
        let _ = writeln!(out, "# seed: {}", self.seed);
        let _ = writeln!(out, "{TIMESTAMP_PREFIX} {now}");
        let _ = writeln!(out, "# scenario: {}", to_json(&self.resolved.scenario));
        let _ = writeln!(out, "# timing: {}", to_json(&self.resolved.timing));
        let _ = writeln!(out, "# solver: {}", to_json(&self.resolved.solver));
        let _ = writeln!(out, "# sim: {}", to_json(&sim_summary(&self.resolved.sim)));
        let _ = writeln!(out, "# outputs: {}", self.output_paths.join(", "));
        out
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(|e| format!("<unserializable: {e}>"))
}

/// Compact view of a [`SimConfig`] for the manifest: the embedded scenario
/// and timing already have their own manifest lines, so only the
/// simulation-specific knobs are repeated here.
#[derive(Serialize)]
struct SimSummary<'a> {
    seed: u64,
    duration_s: f64,
    warmup_s: f64,
    min_slots: u64,
    queue_capacity: u32,
    saturated: bool,
    window_s: Option<f64>,
    timeline: &'a [TimelineEvent],
    w0_schedule: &'a [W0Change],
    payload_schedule: &'a [PayloadChange],
    post_backoff: bool,
}

fn sim_summary(sim: &SimConfig) -> SimSummary<'_> {
    SimSummary {
        seed: sim.seed,
        duration_s: sim.duration_s,
        warmup_s: sim.warmup_s,
        min_slots: sim.min_slots,
        queue_capacity: sim.queue_capacity,
        saturated: sim.saturated,
        window_s: sim.window_s,
        timeline: &sim.timeline,
        w0_schedule: &sim.w0_schedule,
        payload_schedule: &sim.payload_schedule,
        post_backoff: sim.post_backoff,
    }
}
