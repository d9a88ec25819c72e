//! Library-level implementations of the `dcf` commands.
//!
//! Each `cmd_*` function resolves a raw configuration, performs the work,
//! writes CSV files (every file begins with the run-manifest comment
//! header), and returns the written paths plus a human-readable summary.
//! The binary in `src/bin/dcf.rs` is a thin argument-parsing shell over
//! these functions, which keeps the full command surface testable in-process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{RawConfig, Resolved, RunManifest};
use crate::error::{Error, Result};
use crate::optimizer::{optimize, OptimizationOutcome};
use crate::params::{payload_bits_to_report_bytes, slot_durations};
use crate::sim::{PayloadChange, SimConfig, SimMetrics, Simulator, W0Change};
use crate::throughput::{link_capacity, operating_point, sweep, OperatingPoint, SweepAxis};

/// Paths written by a command plus a printable summary.
#[derive(Debug, Clone)]
pub struct CmdResult {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Output-location knobs shared by every command: `--out` beats
/// `outputs.dir` beats `"out"`; `outputs.prefix` prepends to file names.
fn output_paths(raw: &RawConfig, out_override: Option<&Path>, names: &[&str]) -> Vec<PathBuf> {
    let dir: PathBuf = match out_override {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(raw.outputs.dir.as_deref().unwrap_or("out")),
    };
    let prefix = raw.outputs.prefix.as_deref().unwrap_or("");
    names.iter().map(|n| dir.join(format!("{prefix}{n}"))).collect()
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, content)?;
    Ok(())
}

/// Assemble a CSV document: manifest comment header, column header, rows.
fn csv_document(manifest: &RunManifest, columns: &str, rows: &[String]) -> String {
    let mut out = manifest.header();
    out.push_str(columns);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    out
}

fn manifest_for(command: &str, resolved: &Resolved, files: &[PathBuf]) -> RunManifest {
    let mut manifest = RunManifest::new(command, resolved.clone());
    manifest.output_paths = files.iter().map(|p| p.display().to_string()).collect();
    manifest
}

fn resolve_with_seed(raw: &RawConfig, seed: Option<u64>) -> Result<Resolved> {
    let mut resolved = raw.resolve()?;
    if let Some(s) = seed {
        resolved.sim.seed = s;
    }
    Ok(resolved)
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Build an evenly spaced value grid, linear or logarithmic.
pub fn build_grid(from: f64, to: f64, points: usize, log: bool) -> Result<Vec<f64>> {
    if !(from.is_finite() && to.is_finite()) {
        return Err(Error::Config(format!("grid endpoints must be finite, got {from}..{to}")));
    }
    if points == 0 {
        return Err(Error::Config("grid needs at least one point".into()));
    }
    if log && (from <= 0.0 || to <= 0.0) {
        return Err(Error::Config(format!(
            "logarithmic grid needs positive endpoints, got {from}..{to}"
        )));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    let n = (points - 1) as f64;
    let values = (0..points)
        .map(|i| {
            let f = i as f64 / n;
            if log {
                (from.ln() + (to.ln() - from.ln()) * f).exp()
            } else {
                from + (to - from) * f
            }
        })
        .collect();
    Ok(values)
}

/// Resolve the sweep grid from mutually exclusive CLI forms: an explicit
/// `--values` list, or `--from/--to/--points [--log]`.
pub fn sweep_values(
    values: &[f64],
    from: Option<f64>,
    to: Option<f64>,
    points: Option<usize>,
    log: bool,
) -> Result<Vec<f64>> {
    let has_range = from.is_some() || to.is_some() || points.is_some();
    if !values.is_empty() {
        if has_range {
            return Err(Error::Config(
                "give either --values or --from/--to/--points, not both".into(),
            ));
        }
        return Ok(values.to_vec());
    }
    match (from, to, points) {
        (Some(a), Some(b), Some(p)) => build_grid(a, b, p, log),
        _ => Err(Error::Config(
            "sweep needs --values or all of --from, --to, --points".into(),
        )),
    }
}

const SOLVE_COLUMNS: &str =
    "tau,p_col,p_eq,q,E_slot_s,S_bps,tau_m,S_m_bps,lambda_c_pps,region,residual,iterations,multiple_roots";

fn solve_row(op: &OperatingPoint) -> String {
    let s = &op.solution;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.tau,
        s.p_col,
        s.p_eq,
        s.q,
        s.expected_slot_s,
        op.throughput_bps,
        op.tau_m,
        op.s_m_bps,
        op.lambda_c_pps,
        op.region,
        s.residual,
        s.iterations,
        s.multiple_roots,
    )
}

/// Solve the configured scenario and emit a one-row CSV.
pub fn cmd_solve(raw: &RawConfig, seed: Option<u64>, out: Option<&Path>) -> Result<CmdResult> {
    let resolved = resolve_with_seed(raw, seed)?;
    let op = operating_point(
        &resolved.scenario,
        &resolved.timing,
        &resolved.solver,
        resolved.sim.saturated,
    )?;
    let files = output_paths(raw, out, &["solve.csv"]);
    let manifest = manifest_for("solve", &resolved, &files);
    let doc = csv_document(&manifest, SOLVE_COLUMNS, &[solve_row(&op)]);
    write_file(&files[0], &doc)?;

    let s = &op.solution;
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "tau={:.6e}  p_col={:.6e}  p_eq={:.6e}  q={:.6e}  E_slot={:.6e} s",
        s.tau, s.p_col, s.p_eq, s.q, s.expected_slot_s
    );
    let _ = writeln!(
        summary,
        "S={:.1} bps  region={}  tau_m={:.6e}  S_m={:.1} bps  lambda_c={:.4} pkt/s",
        op.throughput_bps, op.region, op.tau_m, op.s_m_bps, op.lambda_c_pps
    );
    let _ = write!(summary, "wrote {}", files[0].display());
    Ok(CmdResult { files, summary })
}

const SWEEP_COLUMNS: &str =
    "axis_value,tau,p_col,p_eq,q,E_slot_s,S_bps,tau_m,S_m_bps,lambda_c_pps,region";

/// Sweep one scenario axis over a value grid and emit one CSV row per point.
pub fn cmd_sweep(
    raw: &RawConfig,
    axis_name: &str,
    values: &[f64],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<CmdResult> {
    let resolved = resolve_with_seed(raw, seed)?;
    let axis = SweepAxis::parse(axis_name)?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs a non-empty value grid".into()));
    }
    let rows = sweep(
        &resolved.scenario,
        &resolved.timing,
        &resolved.solver,
        axis,
        values,
        resolved.sim.saturated,
    )?;
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.axis_value,
                r.tau,
                r.p_col,
                r.p_eq,
                r.q,
                r.expected_slot_s,
                r.s_bps,
                r.tau_m,
                r.s_m_bps,
                r.lambda_c_pps,
                r.region,
            )
        })
        .collect();
    let files = output_paths(raw, out, &["sweep.csv"]);
    let manifest = manifest_for("sweep", &resolved, &files);
    let doc = csv_document(&manifest, SWEEP_COLUMNS, &lines);
    write_file(&files[0], &doc)?;
    let summary = format!(
        "swept {} over {} points ({}..{})\nwrote {}",
        axis_name,
        values.len(),
        values.first().copied().unwrap_or(f64::NAN),
        values.last().copied().unwrap_or(f64::NAN),
        files[0].display()
    );
    Ok(CmdResult { files, summary })
}

const OPTIMIZE_COLUMNS: &str =
    "region,w_op,payload_step1_B,payload_step2_B,payload_opt_B,achieved_pe,predicted_S_bps";

fn optimize_row(o: &OptimizationOutcome) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        o.region,
        fmt_opt(o.w_op),
        fmt_opt(o.payload_step1_bits.map(payload_bits_to_report_bytes)),
        fmt_opt(o.payload_step2_bits.map(payload_bits_to_report_bytes)),
        fmt_opt(o.payload_opt_bits.map(payload_bits_to_report_bytes)),
        o.achieved_pe,
        o.predicted_throughput_bps,
    )
}

/// Run the cross-layer tuning step for the configured scenario.
pub fn cmd_optimize(raw: &RawConfig, seed: Option<u64>, out: Option<&Path>) -> Result<CmdResult> {
    let resolved = resolve_with_seed(raw, seed)?;
    let outcome = optimize(&resolved.scenario, &resolved.timing)?;
    let files = output_paths(raw, out, &["optimize.csv"]);
    let manifest = manifest_for("optimize", &resolved, &files);
    let doc = csv_document(&manifest, OPTIMIZE_COLUMNS, &[optimize_row(&outcome)]);
    write_file(&files[0], &doc)?;

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "region={}  w_op={}  payload_step1={} B  payload_step2={} B  payload_opt={} B",
        outcome.region,
        fmt_opt(outcome.w_op),
        fmt_opt(outcome.payload_step1_bits.map(payload_bits_to_report_bytes)),
        fmt_opt(outcome.payload_step2_bits.map(payload_bits_to_report_bytes)),
        fmt_opt(outcome.payload_opt_bits.map(payload_bits_to_report_bytes)),
    );
    let _ = writeln!(
        summary,
        "achieved_pe={:.6}  predicted_S={:.1} bps  lambda_c={:.4} pkt/s{}",
        outcome.achieved_pe,
        outcome.predicted_throughput_bps,
        outcome.lambda_c_pps,
        if outcome.region_shift_warning { "  (warning: tuning shifted the region)" } else { "" },
    );
    let _ = write!(summary, "wrote {}", files[0].display());
    Ok(CmdResult { files, summary })
}

const METRICS_COLUMNS: &str = "sim_time_s,measured_time_s,slots,slots_measured,idle,success,\
collision,error,delivered_payload_bits,S_bps,measured_tau,measured_p_col";
const STATIONS_COLUMNS: &str =
    "station,generated,delivered,dropped,attempts,collisions,channel_errors,in_queue_at_end";
const TRACE_COLUMNS: &str = "t_start_s,t_end_s,S_bps";

fn metrics_row(m: &SimMetrics) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        m.sim_time_s,
        m.measured_time_s,
        m.tally.total(),
        m.tally_measured.total(),
        m.tally_measured.idle,
        m.tally_measured.success,
        m.tally_measured.collision,
        m.tally_measured.error,
        m.delivered_payload_bits,
        m.aggregate_throughput_bps,
        m.measured_tau,
        m.measured_p_col,
    )
}

fn station_rows(m: &SimMetrics) -> Vec<String> {
    m.per_station
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "{},{},{},{},{},{},{},{}",
                i,
                s.generated,
                s.delivered,
                s.dropped,
                s.attempts,
                s.collisions,
                s.channel_errors,
                s.in_queue_at_end,
            )
        })
        .collect()
}

fn trace_rows(m: &SimMetrics) -> Vec<String> {
    m.trace
        .iter()
        .map(|w| format!("{},{},{}", w.t_start_s, w.t_end_s, w.throughput_bps))
        .collect()
}

/// Run the slot-level simulator on the configured scenario.
pub fn cmd_simulate(raw: &RawConfig, seed: Option<u64>, out: Option<&Path>) -> Result<CmdResult> {
    let resolved = resolve_with_seed(raw, seed)?;
    let metrics = Simulator::run(resolved.sim.clone())?;

    let with_trace = resolved.sim.window_s.is_some();
    let names: &[&str] = if with_trace {
        &["metrics.csv", "stations.csv", "trace.csv"]
    } else {
        &["metrics.csv", "stations.csv"]
    };
    let files = output_paths(raw, out, names);
    let manifest = manifest_for("simulate", &resolved, &files);
    write_file(&files[0], &csv_document(&manifest, METRICS_COLUMNS, &[metrics_row(&metrics)]))?;
    write_file(&files[1], &csv_document(&manifest, STATIONS_COLUMNS, &station_rows(&metrics)))?;
    if with_trace {
        write_file(&files[2], &csv_document(&manifest, TRACE_COLUMNS, &trace_rows(&metrics)))?;
    }

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "simulated {:.3} s ({} slots)  S={:.1} bps  measured_tau={:.6e}  measured_p_col={:.6e}",
        metrics.sim_time_s,
        metrics.tally.total(),
        metrics.aggregate_throughput_bps,
        metrics.measured_tau,
        metrics.measured_p_col,
    );
    let _ = write!(
        summary,
        "wrote {}",
        files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(" ")
    );
    Ok(CmdResult { files, summary })
}

/// One constant-membership interval of the on/off timeline, annotated with
/// the tuning decision and capacity target for its active-station count.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig7Interval {
    pub t_start_s: f64,
    pub t_end_s: f64,
    /// Stations with traffic on during the interval.
    pub n_active: u32,
    /// Contention window selected for the interval, if the tuner chose one.
    pub w_op: Option<u32>,
    /// Payload selected for the interval, if the tuner chose one.
    pub payload_bits: Option<u64>,
    /// Capacity target for the interval's active-station count.
    pub s_m_bps: f64,
}

/// The two simulation runs of the on/off scenario plus the tuning decisions.
#[derive(Debug, Clone)]
pub struct Fig7Plan {
    pub resolved: Resolved,
    /// Fixed-parameter run.
    pub baseline: SimConfig,
    /// Same run with per-interval tuning applied via schedules.
    pub optimized: SimConfig,
    pub intervals: Vec<Fig7Interval>,
}

/// Default on/off scenario: ten stations at 1000 pkt/s each (far beyond
/// capacity), 1028-byte payloads on an ideal channel, W0=32, m=5; stations
/// 5-9 switch off at t=40 s and back on at t=80 s, for 120 s total with
/// 1-second trace windows.  Any field the raw configuration sets explicitly
/// overrides the corresponding default before resolution.
pub fn fig7_plan(raw: &RawConfig, seed: Option<u64>) -> Result<Fig7Plan> {
    let mut canned = raw.clone();
    canned.scenario.n_stations.get_or_insert(10);
    canned.scenario.lambda_pps.get_or_insert(1000.0);
    canned.scenario.w0.get_or_insert(32);
    canned.scenario.m.get_or_insert(5);
    canned.scenario.payload_bytes.get_or_insert(1028);
    if canned.scenario.bit_error_prob.is_none() && canned.scenario.packet_error_prob.is_none() {
        canned.scenario.packet_error_prob = Some(0.0);
    }
    canned.sim.duration_s.get_or_insert(120.0);
    canned.sim.warmup_s.get_or_insert(0.0);
    canned.sim.window_s.get_or_insert(1.0);
    if canned.sim.timeline.is_none() {
        let n = canned.scenario.n_stations.unwrap_or(10);
        let half = n / 2;
        let mut events = Vec::new();
        for station in half..n {
            events.push(crate::config::RawTimelineEvent { time_s: 40.0, station, on: false });
        }
        for station in half..n {
            events.push(crate::config::RawTimelineEvent { time_s: 80.0, station, on: true });
        }
        canned.sim.timeline = Some(events);
    }

    let mut resolved = canned.resolve()?;
    if let Some(s) = seed {
        resolved.sim.seed = s;
    }
    let baseline = resolved.sim.clone();

    // Interval boundaries: distinct timeline event times inside the run.
    let mut cuts: Vec<f64> = baseline
        .timeline
        .iter()
        .map(|e| e.time_s)
        .filter(|&t| t > 0.0 && t < baseline.duration_s)
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("validated times"));
    cuts.dedup();
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(0.0);
    bounds.extend(cuts);
    bounds.push(baseline.duration_s);

    let n = resolved.scenario.n_stations as usize;
    let mut intervals = Vec::new();
    let mut optimized = baseline.clone();
    for pair in bounds.windows(2) {
        let (t0, t1) = (pair[0], pair[1]);
        let mut active = vec![true; n];
        for e in &baseline.timeline {
            if e.time_s <= t0 {
                active[e.station as usize] = e.on;
            }
        }
        let n_active = active.iter().filter(|&&a| a).count() as u32;

        let (w_op, payload_bits, s_m_bps) = if n_active == 0 {
            (None, None, 0.0)
        } else {
            let mut sc = resolved.scenario.clone();
            sc.n_stations = n_active;
            let outcome = optimize(&sc, &resolved.timing)?;
            let payload_in_effect =
                outcome.payload_opt_bits.unwrap_or(resolved.scenario.payload_bits);
            sc.payload_bits = payload_in_effect;
            let p_e = sc.resolved_packet_error_prob(&resolved.timing)?;
            let d = slot_durations(&resolved.timing, payload_in_effect)?;
            let s_m = link_capacity(n_active, p_e, payload_in_effect, &d)?;
            (outcome.w_op, outcome.payload_opt_bits, s_m)
        };

        if let Some(w) = w_op {
            optimized.w0_schedule.push(W0Change { time_s: t0, w0: w });
        }
        if let Some(p) = payload_bits {
            optimized.payload_schedule.push(PayloadChange { time_s: t0, payload_bits: p });
        }
        intervals.push(Fig7Interval { t_start_s: t0, t_end_s: t1, n_active, w_op, payload_bits, s_m_bps });
    }
    optimized.w0_schedule.sort_by(|a, b| a.time_s.partial_cmp(&b.time_s).expect("finite"));
    optimized
        .payload_schedule
        .sort_by(|a, b| a.time_s.partial_cmp(&b.time_s).expect("finite"));
    optimized.validate()?;

    Ok(Fig7Plan { resolved, baseline, optimized, intervals })
}

/// Execute both runs of a plan: (baseline, optimized).
pub fn fig7_runs(plan: &Fig7Plan) -> Result<(SimMetrics, SimMetrics)> {
    let baseline = Simulator::run(plan.baseline.clone())?;
    let optimized = Simulator::run(plan.optimized.clone())?;
    Ok((baseline, optimized))
}

/// Mean windowed throughput over trace windows fully inside `[t0, t1)`.
pub fn mean_trace_throughput(metrics: &SimMetrics, t0: f64, t1: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in &metrics.trace {
        if w.t_start_s >= t0 && w.t_end_s <= t1 {
            sum += w.throughput_bps;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Run the on/off station scenario twice (fixed parameters, then with
/// per-interval tuning) and emit one windowed-trace CSV per run.
pub fn cmd_fig7(raw: &RawConfig, seed: Option<u64>, out: Option<&Path>) -> Result<CmdResult> {
    let plan = fig7_plan(raw, seed)?;
    let (baseline, optimized) = fig7_runs(&plan)?;

    let files = output_paths(raw, out, &["fig7_baseline.csv", "fig7_optimized.csv"]);
    let manifest = manifest_for("fig7", &plan.resolved, &files);
    write_file(&files[0], &csv_document(&manifest, TRACE_COLUMNS, &trace_rows(&baseline)))?;
    write_file(&files[1], &csv_document(&manifest, TRACE_COLUMNS, &trace_rows(&optimized)))?;

    let mut summary = String::new();
    for itv in &plan.intervals {
        let _ = writeln!(
            summary,
            "interval [{:.0},{:.0}) s: n_active={}  W0->{}  payload->{} B  S_m={:.1} bps",
            itv.t_start_s,
            itv.t_end_s,
            itv.n_active,
            fmt_opt(itv.w_op),
            fmt_opt(itv.payload_bits.map(payload_bits_to_report_bytes)),
            itv.s_m_bps,
        );
    }
    if let Some(first) = plan.intervals.first() {
        let (a, b) = (first.t_start_s, first.t_end_s);
        if let Some(mean) = mean_trace_throughput(&baseline, a, b) {
            let _ = writeln!(summary, "baseline  mean S in [{a:.0},{b:.0}) s: {mean:.1} bps");
        }
        if let Some(mean) = mean_trace_throughput(&optimized, a, b) {
            let _ = writeln!(summary, "optimized mean S in [{a:.0},{b:.0}) s: {mean:.1} bps");
        }
    }
    let _ = write!(
        summary,
        "wrote {}",
        files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(" ")
    );
    Ok(CmdResult { files, summary })
}
