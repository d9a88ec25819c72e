//! Deterministic slot-level discrete-event simulator of `N` stations running
//! binary-exponential backoff over a shared channel.
//!
//! Time advances in *virtual slots*: every station holding a frame counts its
//! backoff down by one per slot; a slot in which exactly one station's counter
//! is zero carries a transmission (lost to a channel error with probability
//! `p_e`, delivered otherwise), two or more zero counters collide, and a slot
//! with none is idle. The transmitting station then redraws its counter —
//! stage 0 after a success with more traffic queued, stage `min(i+1, m)`
//! after any loss — or parks idle when its queue runs dry. Each slot charges
//! the channel its outcome duration (`sigma`, `T_s`, `T_c`, `T_e`), and
//! Poisson arrivals materialize at slot boundaries.
//!
//! Determinism: every station owns two counter-mode RNG streams (arrivals,
//! backoff draws) and the channel a third, all derived from one master seed.
//! Runs with the same config are bit-identical, and arrival realizations are
//! unchanged across contention-window or payload variants, which makes paired
//! comparisons sharp.
//!
//! The wall clock is recomputed every slot from per-era outcome tallies
//! (counts times durations), so the final simulated time equals that
//! recomputation exactly, with no accumulated rounding drift. Eras only break
//! at payload-schedule changes, where slot durations (and a bit-error-derived
//! `p_e`) change.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{packet_error_rate, slot_durations, ProtocolTiming, ScenarioParams, SlotDurations};

/// Turn a station on or off at a point in simulated time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub time_s: f64,
    pub station: u32,
    pub on: bool,
}

/// Switch the contention window for all future backoff draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W0Change {
    pub time_s: f64,
    pub w0: u32,
}

/// Switch the payload size (and with it the slot durations and, when the
/// channel is specified by a bit error probability, the packet error rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadChange {
    pub time_s: f64,
    pub payload_bits: u64,
}

/// Full configuration of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Population, offered load, backoff configuration, channel.
    pub scenario: ScenarioParams,
    /// Protocol timing profile.
    pub timing: ProtocolTiming,
    /// Master seed for all RNG streams.
    pub seed: u64,
    /// Minimum simulated duration (s).
    pub duration_s: f64,
    /// Slots starting before this time are excluded from the headline
    /// metrics (they still appear in the full-run tallies and trace).
    pub warmup_s: f64,
    /// Keep running past `duration_s` until at least this many slots have
    /// elapsed (0 disables the floor).
    pub min_slots: u64,
    /// Per-station queue capacity, counting the frame in service.
    pub queue_capacity: u32,
    /// Saturated sources: queues are pinned full and the arrival process is
    /// bypassed.
    pub saturated: bool,
    /// Emit a windowed throughput trace with this window length (s).
    pub window_s: Option<f64>,
    /// Station on/off events, sorted by time.
    pub timeline: Vec<TimelineEvent>,
    /// Contention-window changes, sorted by time.
    pub w0_schedule: Vec<W0Change>,
    /// Payload changes, sorted by time.
    pub payload_schedule: Vec<PayloadChange>,
    /// After a success that empties the queue, run one more stage-0 backoff
    /// before parking (and transmit immediately on the next arrival if it
    /// expired); default `false` parks immediately and draws a fresh stage-0
    /// backoff on the next arrival.
    pub post_backoff: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: ScenarioParams::default(),
            timing: ProtocolTiming::default(),
            seed: 0xDCF,
            duration_s: 100.0,
            warmup_s: 1.0,
            min_slots: 0,
            queue_capacity: 2,
            saturated: false,
            window_s: None,
            timeline: Vec::new(),
            w0_schedule: Vec::new(),
            payload_schedule: Vec::new(),
            post_backoff: false,
        }
    }
}

impl SimConfig {
    /// Validate the configuration, including schedule ordering.
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.timing.validate()?;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "duration_s must be finite and > 0, got {}",
                self.duration_s
            )));
        }
        if !(self.warmup_s.is_finite() && self.warmup_s >= 0.0 && self.warmup_s < self.duration_s)
        {
            return Err(Error::InvalidParameter(format!(
                "warmup_s must be in [0, duration_s), got {}",
                self.warmup_s
            )));
        }
        if self.queue_capacity < 1 {
            return Err(Error::InvalidParameter("queue_capacity must be >= 1".into()));
        }
        if let Some(w) = self.window_s {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "window_s must be finite and > 0, got {w}"
                )));
            }
        }
        let sorted = |times: &mut dyn Iterator<Item = f64>, what: &str| -> Result<()> {
            let mut prev = 0.0f64;
            for t in times {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "{what} times must be finite and >= 0"
                    )));
                }
                if t < prev {
                    return Err(Error::InvalidParameter(format!(
                        "{what} must be sorted by time"
                    )));
                }
                prev = t;
            }
            Ok(())
        };
        sorted(&mut self.timeline.iter().map(|e| e.time_s), "timeline")?;
        sorted(&mut self.w0_schedule.iter().map(|e| e.time_s), "w0_schedule")?;
        sorted(&mut self.payload_schedule.iter().map(|e| e.time_s), "payload_schedule")?;
        for e in &self.timeline {
            if e.station >= self.scenario.n_stations {
                return Err(Error::InvalidParameter(format!(
                    "timeline station {} out of range (n_stations = {})",
                    e.station, self.scenario.n_stations
                )));
            }
        }
        for e in &self.w0_schedule {
            if e.w0 < 1 || e.w0 > 1 << 20 {
                return Err(Error::InvalidParameter(format!(
                    "w0_schedule value {} out of range",
                    e.w0
                )));
            }
        }
        for e in &self.payload_schedule {
            if e.payload_bits == 0 || e.payload_bits > 100_000_000 {
                return Err(Error::InvalidParameter(format!(
                    "payload_schedule value {} out of range",
                    e.payload_bits
                )));
            }
        }
        Ok(())
    }
}

/// Per-station counters over the full run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationStats {
    /// Packets offered by the arrival process (or synthesized in saturated
    /// mode).
    pub generated: u64,
    /// Packets delivered (ACKed).
    pub delivered: u64,
    /// Packets dropped: queue overflow, or flushed on a timeline switch-off.
    pub dropped: u64,
    /// Transmission attempts.
    pub attempts: u64,
    /// Attempts lost to collisions.
    pub collisions: u64,
    /// Attempts lost to channel errors.
    pub channel_errors: u64,
    /// Packets still queued when the run ended.
    pub in_queue_at_end: u64,
}

/// Slot-outcome counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotTally {
    pub idle: u64,
    pub success: u64,
    pub collision: u64,
    pub error: u64,
}

impl SlotTally {
    /// Total number of slots in the tally.
    pub fn total(&self) -> u64 {
        self.idle + self.success + self.collision + self.error
    }
}

/// One windowed-throughput trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceWindow {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub throughput_bps: f64,
}

/// Results of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    /// Final simulated time (s); equals the tally-weighted slot durations
    /// exactly.
    pub sim_time_s: f64,
    /// Length of the measurement window: `sim_time_s - warmup_s`.
    pub measured_time_s: f64,
    /// Slot outcomes over the full run.
    pub tally: SlotTally,
    /// Slot outcomes over the measurement window.
    pub tally_measured: SlotTally,
    /// Payload bits delivered inside the measurement window.
    pub delivered_payload_bits: u64,
    /// Aggregate throughput over the measurement window (bps).
    pub aggregate_throughput_bps: f64,
    /// Empirical per-station per-slot transmission probability:
    /// attempts / (n_stations * slots), measurement window.
    pub measured_tau: f64,
    /// Fraction of measured attempts that collided.
    pub measured_p_col: f64,
    /// Per-station counters, full run.
    pub per_station: Vec<StationStats>,
    /// Windowed throughput trace (only complete windows; empty unless
    /// `window_s` was set). Windows cover the full run including warmup.
    pub trace: Vec<TraceWindow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    /// No frame queued. `tx_ready` (post-backoff variant only): the last
    /// post-success backoff already expired, so the next arrival transmits
    /// without a fresh draw.
    Idle { tx_ready: bool },
    /// Counting down to a transmission; the queue is non-empty.
    Backoff,
    /// Post-backoff variant: counting down after a success emptied the queue.
    PostBackoff,
}

#[derive(Debug)]
struct Station {
    on: bool,
    mode: Mode,
    stage: u32,
    counter: u64,
    queue: u64,
    next_arrival_s: f64,
    arrival_rng: ChaCha12Rng,
    backoff_rng: ChaCha12Rng,
    stats: StationStats,
}

#[derive(Debug, Clone, Copy)]
struct Era {
    tally: SlotTally,
    d: SlotDurations,
    p_e: f64,
    payload_bits: u64,
}

impl Era {
    fn elapsed_s(&self) -> f64 {
        self.tally.idle as f64 * self.d.sigma_s
            + self.tally.success as f64 * self.d.t_success_s
            + self.tally.collision as f64 * self.d.t_collision_s
            + self.tally.error as f64 * self.d.t_error_s
    }
}

/// The simulator itself; [`Simulator::run`] is the one-call entry point.
#[derive(Debug)]
pub struct Simulator {
    cfg: SimConfig,
    stations: Vec<Station>,
    channel_rng: ChaCha12Rng,
    eras: Vec<Era>,
    clock_s: f64,
    w0: u32,
    // Measurement-window accumulators.
    tally_measured: SlotTally,
    delivered_bits_measured: u64,
    attempts_measured: u64,
    collided_attempts_measured: u64,
    // Trace accumulation (bits per window index).
    window_bits: Vec<u64>,
    // Event cursors.
    timeline_idx: usize,
    w0_idx: usize,
    payload_idx: usize,
    tx_buf: Vec<usize>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn exp_interval(rng: &mut ChaCha12Rng, lambda_pps: f64) -> f64 {
    if lambda_pps <= 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.random();
    -f64::ln_1p(-u) / lambda_pps
}

impl Simulator {
    /// Build a simulator; validates the whole configuration.
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let scenario = &cfg.scenario;
        let d = slot_durations(&cfg.timing, scenario.payload_bits)?;
        let p_e = scenario.resolved_packet_error_prob(&cfg.timing)?;
        let n = scenario.n_stations as usize;

        let mut stations = Vec::with_capacity(n);
        for i in 0..n {
            let arrival_rng = stream_rng(cfg.seed, 2 + 2 * i as u64);
            let backoff_rng = stream_rng(cfg.seed, 3 + 2 * i as u64);
            let mut st = Station {
                on: true,
                mode: Mode::Idle { tx_ready: false },
                stage: 0,
                counter: 0,
                queue: 0,
                next_arrival_s: f64::INFINITY,
                arrival_rng,
                backoff_rng,
                stats: StationStats::default(),
            };
            if cfg.saturated {
                st.queue = cfg.queue_capacity as u64;
                st.stats.generated = st.queue;
                st.mode = Mode::Backoff;
                st.counter = draw_counter(&mut st.backoff_rng, scenario.w0, 0);
            } else {
                st.next_arrival_s = exp_interval(&mut st.arrival_rng, scenario.lambda_pps);
            }
            stations.push(st);
        }

        let mut sim = Simulator {
            w0: scenario.w0,
            stations,
            channel_rng: stream_rng(cfg.seed, 1),
            eras: vec![Era {
                tally: SlotTally::default(),
                d,
                p_e,
                payload_bits: scenario.payload_bits,
            }],
            clock_s: 0.0,
            tally_measured: SlotTally::default(),
            delivered_bits_measured: 0,
            attempts_measured: 0,
            collided_attempts_measured: 0,
            window_bits: Vec::new(),
            timeline_idx: 0,
            w0_idx: 0,
            payload_idx: 0,
            tx_buf: Vec::new(),
            cfg,
        };
        sim.apply_events()?;
        Ok(sim)
    }

    /// Run a configuration to completion.
    pub fn run(cfg: SimConfig) -> Result<SimMetrics> {
        let mut sim = Simulator::new(cfg)?;
        let duration = sim.cfg.duration_s;
        let min_slots = sim.cfg.min_slots;
        while sim.clock_s < duration || sim.slot_count() < min_slots {
            sim.step()?;
        }
        Ok(sim.finish())
    }

    fn slot_count(&self) -> u64 {
        self.eras.iter().map(|e| e.tally.total()).sum()
    }

    fn recompute_clock(&mut self) {
        self.clock_s = self.eras.iter().map(Era::elapsed_s).sum();
    }

    /// Advance one virtual slot.
    fn step(&mut self) -> Result<()> {
        let slot_start = self.clock_s;
        let measured = slot_start >= self.cfg.warmup_s;
        let m_stages = self.cfg.scenario.m;
        let era = self.eras.last_mut().expect("era list is never empty");

        // 1. Who transmits this slot?
        self.tx_buf.clear();
        for (i, st) in self.stations.iter().enumerate() {
            if st.on && st.mode == Mode::Backoff && st.counter == 0 {
                debug_assert!(st.queue > 0, "backoff mode requires a queued frame");
                self.tx_buf.push(i);
            }
        }

        // 2. Resolve the slot outcome.
        let mut delivered_bits_this_slot = 0u64;
        match self.tx_buf.len() {
            0 => {
                era.tally.idle += 1;
                if measured {
                    self.tally_measured.idle += 1;
                }
            }
            1 => {
                let i = self.tx_buf[0];
                let errored = era.p_e > 0.0 && self.channel_rng.random::<f64>() < era.p_e;
                let payload_bits = era.payload_bits;
                let st = &mut self.stations[i];
                st.stats.attempts += 1;
                if measured {
                    self.attempts_measured += 1;
                }
                if errored {
                    era.tally.error += 1;
                    if measured {
                        self.tally_measured.error += 1;
                    }
                    st.stats.channel_errors += 1;
                    st.stage = (st.stage + 1).min(m_stages);
                    st.counter = draw_counter(&mut st.backoff_rng, self.w0, st.stage);
                } else {
                    era.tally.success += 1;
                    if measured {
                        self.tally_measured.success += 1;
                        self.delivered_bits_measured += payload_bits;
                    }
                    delivered_bits_this_slot = payload_bits;
                    st.stats.delivered += 1;
                    st.queue -= 1;
                    if self.cfg.saturated {
                        st.queue += 1;
                        st.stats.generated += 1;
                    }
                    st.stage = 0;
                    if st.queue > 0 {
                        st.counter = draw_counter(&mut st.backoff_rng, self.w0, 0);
                    } else if self.cfg.post_backoff {
                        st.mode = Mode::PostBackoff;
                        st.counter = draw_counter(&mut st.backoff_rng, self.w0, 0);
                    } else {
                        st.mode = Mode::Idle { tx_ready: false };
                        st.counter = 0;
                    }
                }
            }
            k => {
                era.tally.collision += 1;
                if measured {
                    self.tally_measured.collision += 1;
                    self.attempts_measured += k as u64;
                    self.collided_attempts_measured += k as u64;
                }
                for idx in 0..k {
                    let i = self.tx_buf[idx];
                    let st = &mut self.stations[i];
                    st.stats.attempts += 1;
                    st.stats.collisions += 1;
                    st.stage = (st.stage + 1).min(m_stages);
                    st.counter = draw_counter(&mut st.backoff_rng, self.w0, st.stage);
                }
            }
        }

        // 3. Exact clock from per-era tallies.
        self.recompute_clock();

        // 4. Windowed trace: delivered bits belong to the window containing
        // the slot start.
        if let (Some(w), true) = (self.cfg.window_s, delivered_bits_this_slot > 0) {
            let idx = (slot_start / w) as usize;
            if self.window_bits.len() <= idx {
                self.window_bits.resize(idx + 1, 0);
            }
            self.window_bits[idx] += delivered_bits_this_slot;
        }

        // 5. Every other backing-off station observed one slot.
        for (i, st) in self.stations.iter_mut().enumerate() {
            if !st.on || self.tx_buf.contains(&i) {
                continue;
            }
            match st.mode {
                Mode::Backoff => {
                    debug_assert!(st.counter > 0, "zero counters transmit");
                    st.counter -= 1;
                }
                Mode::PostBackoff => {
                    if st.counter == 0 {
                        st.mode = Mode::Idle { tx_ready: true };
                    } else {
                        st.counter -= 1;
                    }
                }
                Mode::Idle { .. } => {}
            }
        }

        // 6. Scheduled reconfiguration and station churn.
        self.apply_events()?;

        // 7. Arrivals that landed during the elapsed slot materialize now.
        if !self.cfg.saturated {
            let lambda = self.cfg.scenario.lambda_pps;
            let cap = self.cfg.queue_capacity as u64;
            let w0 = self.w0;
            for st in &mut self.stations {
                if !st.on {
                    continue;
                }
                while st.next_arrival_s <= self.clock_s {
                    st.stats.generated += 1;
                    if st.queue < cap {
                        st.queue += 1;
                        match st.mode {
                            Mode::Idle { tx_ready } => {
                                st.mode = Mode::Backoff;
                                st.stage = 0;
                                st.counter = if tx_ready {
                                    0
                                } else {
                                    draw_counter(&mut st.backoff_rng, w0, 0)
                                };
                            }
                            Mode::PostBackoff => {
                                // Keep the running countdown; it now guards a
                                // real frame.
                                st.mode = Mode::Backoff;
                                st.stage = 0;
                            }
                            Mode::Backoff => {}
                        }
                    } else {
                        st.stats.dropped += 1;
                    }
                    st.next_arrival_s += exp_interval(&mut st.arrival_rng, lambda);
                }
            }
        }
        Ok(())
    }

    /// Apply timeline and schedule entries that are due at the current clock.
    fn apply_events(&mut self) -> Result<()> {
        while self.timeline_idx < self.cfg.timeline.len()
            && self.cfg.timeline[self.timeline_idx].time_s <= self.clock_s
        {
            let ev = self.cfg.timeline[self.timeline_idx];
            self.timeline_idx += 1;
            let st = &mut self.stations[ev.station as usize];
            if ev.on == st.on {
                continue;
            }
            st.on = ev.on;
            if ev.on {
                if self.cfg.saturated {
                    let fill = self.cfg.queue_capacity as u64;
                    st.queue = fill;
                    st.stats.generated += fill;
                    st.mode = Mode::Backoff;
                    st.stage = 0;
                    st.counter = draw_counter(&mut st.backoff_rng, self.w0, 0);
                } else {
                    st.mode = Mode::Idle { tx_ready: false };
                    st.stage = 0;
                    st.counter = 0;
                    st.next_arrival_s = self.clock_s
                        + exp_interval(&mut st.arrival_rng, self.cfg.scenario.lambda_pps);
                }
            } else {
                // A departing station abandons its queue.
                st.stats.dropped += st.queue;
                st.queue = 0;
                st.mode = Mode::Idle { tx_ready: false };
                st.counter = 0;
                st.next_arrival_s = f64::INFINITY;
            }
        }
        while self.w0_idx < self.cfg.w0_schedule.len()
            && self.cfg.w0_schedule[self.w0_idx].time_s <= self.clock_s
        {
            self.w0 = self.cfg.w0_schedule[self.w0_idx].w0;
            self.w0_idx += 1;
        }
        while self.payload_idx < self.cfg.payload_schedule.len()
            && self.cfg.payload_schedule[self.payload_idx].time_s <= self.clock_s
        {
            let change = self.cfg.payload_schedule[self.payload_idx];
            self.payload_idx += 1;
            let d = slot_durations(&self.cfg.timing, change.payload_bits)?;
            let p_e = match (
                self.cfg.scenario.bit_error_prob,
                self.cfg.scenario.packet_error_prob,
            ) {
                (Some(pb), None) => packet_error_rate(pb, change.payload_bits, &self.cfg.timing)?,
                (None, Some(pe)) => pe,
                _ => 0.0,
            };
            self.eras.push(Era {
                tally: SlotTally::default(),
                d,
                p_e,
                payload_bits: change.payload_bits,
            });
        }
        Ok(())
    }

    /// Close the run and compute the metrics.
    pub fn finish(mut self) -> SimMetrics {
        self.recompute_clock();
        let sim_time_s = self.clock_s;
        let measured_time_s = (sim_time_s - self.cfg.warmup_s).max(0.0);

        let mut tally = SlotTally::default();
        for e in &self.eras {
            tally.idle += e.tally.idle;
            tally.success += e.tally.success;
            tally.collision += e.tally.collision;
            tally.error += e.tally.error;
        }

        let per_station: Vec<StationStats> = self
            .stations
            .iter()
            .map(|st| {
                let mut s = st.stats;
                s.in_queue_at_end = st.queue;
                s
            })
            .collect();
        #[cfg(debug_assertions)]
        for (i, s) in per_station.iter().enumerate() {
            debug_assert_eq!(
                s.generated,
                s.delivered + s.dropped + s.in_queue_at_end,
                "packet conservation violated at station {i}"
            );
            debug_assert_eq!(
                s.attempts,
                s.delivered + s.collisions + s.channel_errors,
                "attempt conservation violated at station {i}"
            );
        }

        let m_slots = self.tally_measured.total();
        let n = self.cfg.scenario.n_stations as f64;
        let measured_tau = if m_slots > 0 {
            self.attempts_measured as f64 / (n * m_slots as f64)
        } else {
            0.0
        };
        let measured_p_col = if self.attempts_measured > 0 {
            self.collided_attempts_measured as f64 / self.attempts_measured as f64
        } else {
            0.0
        };
        let aggregate_throughput_bps = if measured_time_s > 0.0 {
            self.delivered_bits_measured as f64 / measured_time_s
        } else {
            0.0
        };

        let mut trace = Vec::new();
        if let Some(w) = self.cfg.window_s {
            let mut k = 0usize;
            while (k + 1) as f64 * w <= sim_time_s {
                let bits = self.window_bits.get(k).copied().unwrap_or(0);
                trace.push(TraceWindow {
                    t_start_s: k as f64 * w,
                    t_end_s: (k + 1) as f64 * w,
                    throughput_bps: bits as f64 / w,
                });
                k += 1;
            }
        }

        SimMetrics {
            sim_time_s,
            measured_time_s,
            tally,
            tally_measured: self.tally_measured,
            delivered_payload_bits: self.delivered_bits_measured,
            aggregate_throughput_bps,
            measured_tau,
            measured_p_col,
            per_station,
            trace,
        }
    }
}

fn draw_counter(rng: &mut ChaCha12Rng, w0: u32, stage: u32) -> u64 {
    let width = (w0 as u64) << stage.min(32);
    rng.random_range(0..width)
}
