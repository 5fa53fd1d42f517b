//! Measurement harness: bandwidth arithmetic, frame-rate averaging,
//! screen-capture switch latency, feedback-loop display latency and the
//! camera-subset suite.

mod report;
mod suite;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{BenchReport, ClockInfo, ReportFormat, RunRecord};
pub use suite::{camera_subsets, run_suite, BenchConfig, SubsetMode};

use crate::compositor::decode_provenance;
use crate::sources::{frame_offset_us, Capability, RegistryEntry};
use crate::switching::Pipeline;

pub const MIB: f64 = 1_048_576.0;
pub const DEFAULT_SAMPLING_PERIOD_MS: f64 = 22.0;
pub const DEFAULT_RATE_FRAMES: usize = 250;
pub const DEFAULT_BURN_IN_US: u64 = 1_000_000;
/// Give up looking for a switch after this long.
pub const SWITCH_TIMEOUT_US: u64 = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("pipeline stalled: {0}")]
    Timeout(String),
    #[error("no view change observed within {}s", SWITCH_TIMEOUT_US / 1_000_000)]
    NoSwitchObserved,
    #[error("pipeline has not produced a frame")]
    NoFrames,
    #[error("pipeline: {0}")]
    Pipeline(#[from] crate::switching::PipelineError),
    #[error("invalid bench config: {0}")]
    Config(String),
}

/// Raw RGB24 data rate of one camera, bytes per second.
pub fn bandwidth_estimate(cap: &Capability) -> f64 {
    cap.resolution.width() as f64 * cap.resolution.height() as f64 * 3.0 * cap.fps
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRateOptions {
    pub n_frames: usize,
    /// Frames before `first + burn_in_us` are ignored.
    pub burn_in_us: u64,
    /// Virtual time allowed for the whole measurement.
    pub timeout_us: u64,
}

impl Default for FrameRateOptions {
    fn default() -> Self {
        Self {
            n_frames: DEFAULT_RATE_FRAMES,
            burn_in_us: DEFAULT_BURN_IN_US,
            timeout_us: 120_000_000,
        }
    }
}

/// Average output rate over `n_frames` consecutive composed frames:
/// `(n - 1) / (t_last - t_first)`.
pub fn measure_frame_rate(pipeline: &mut Pipeline, opts: &FrameRateOptions) -> Result<f64, BenchError> {
    if opts.n_frames < 2 {
        return Err(BenchError::Config("need at least two frames".into()));
    }
    let stalled = |why: &str| BenchError::Timeout(why.to_string());
    let origin = pipeline
        .next_output_at()
        .ok_or_else(|| stalled("pipeline not running"))?;
    let deadline = origin + opts.timeout_us;
    let mut first = None;
    let mut stamps = Vec::with_capacity(opts.n_frames);
    while stamps.len() < opts.n_frames {
        let t = pipeline.next_output_at().ok_or_else(|| stalled("pipeline stopped"))?;
        if t > deadline {
            return Err(stalled("not enough frames before the deadline"));
        }
        let Some(frame) = pipeline.frame_tick(t) else {
            continue;
        };
        let first = *first.get_or_insert(frame.timestamp_us);
        if frame.timestamp_us >= first + opts.burn_in_us {
            stamps.push(frame.timestamp_us);
        }
    }
    let span = (stamps[stamps.len() - 1] - stamps[0]) as f64 / 1e6;
    if span <= 0.0 {
        return Err(stalled("zero time span"));
    }
    Ok((stamps.len() - 1) as f64 / span)
}

/// Composed frames per wall-clock second when the pipeline runs flat out.
pub fn measure_throughput(pipeline: &mut Pipeline, frames: usize) -> Result<f64, BenchError> {
    let started = Instant::now();
    let mut done = 0;
    while done < frames {
        let t = pipeline
            .next_output_at()
            .ok_or_else(|| BenchError::Timeout("pipeline stopped".into()))?;
        if pipeline.frame_tick(t).is_some() {
            done += 1;
        }
    }
    Ok(done as f64 / started.elapsed().as_secs_f64().max(1e-9))
}

/// A screen recorder grabbing the display at a fixed period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureModel {
    pub sampling_period_ms: f64,
}

impl Default for CaptureModel {
    fn default() -> Self {
        Self {
            sampling_period_ms: DEFAULT_SAMPLING_PERIOD_MS,
        }
    }
}

impl CaptureModel {
    pub fn new(sampling_period_ms: f64) -> Result<Self, BenchError> {
        if !(sampling_period_ms.is_finite() && sampling_period_ms > 0.0) {
            return Err(BenchError::Config(format!("sampling period {sampling_period_ms} ms")));
        }
        Ok(Self { sampling_period_ms })
    }

    pub fn period_us(&self) -> u64 {
        ((self.sampling_period_ms * 1000.0).round() as u64).max(1)
    }

    /// A sampler with this period and the given phase.
    pub fn sampler(&self, phase_us: u64) -> Sampler {
        let period_us = self.period_us();
        Sampler {
            period_us,
            phase_us: phase_us % period_us,
        }
    }

    pub fn random_sampler(&self, rng: &mut impl Rng) -> Sampler {
        self.sampler(rng.random_range(0..self.period_us()))
    }
}

/// Sample instants `phase + j * period`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sampler {
    pub period_us: u64,
    pub phase_us: u64,
}

impl Sampler {
    /// First sample instant at or after `t`.
    pub fn first_at_or_after(&self, t: u64) -> u64 {
        if t <= self.phase_us {
            return self.phase_us;
        }
        let j = (t - self.phase_us).div_ceil(self.period_us);
        self.phase_us + j * self.period_us
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchMeasurement {
    /// Difference of the two sampled instants, as the recording shows it.
    pub latency_ms: f64,
    /// Exact time from request to the first output frame with the new view.
    pub true_latency_ms: f64,
    pub click_sample_us: u64,
    pub switch_sample_us: u64,
}

/// Issues one advance at `request_us` and times it the way a screen
/// recording would: the click is seen at the first sample after the
/// request, the switch at the first sample whose displayed frame shows a
/// different view. The pipeline is left running just past that sample.
pub fn measure_switch_latency(
    pipeline: &mut Pipeline,
    request_us: u64,
    sampler: &Sampler,
) -> Result<SwitchMeasurement, BenchError> {
    if request_us > 0 {
        pipeline.run_until(request_us - 1);
    }
    let baseline = pipeline
        .latest_output()
        .and_then(decode_provenance)
        .ok_or(BenchError::NoFrames)?
        .view_key();
    let outcome = pipeline.apply_switch(request_us)?;
    let click = sampler.first_at_or_after(request_us);
    let mut s = click;
    while s <= request_us + SWITCH_TIMEOUT_US {
        pipeline.run_until(s);
        let shown = pipeline
            .latest_output()
            .and_then(decode_provenance)
            .map(|p| p.view_key());
        if shown.is_some_and(|k| k != baseline) {
            return Ok(SwitchMeasurement {
                latency_ms: (s - click) as f64 / 1000.0,
                true_latency_ms: outcome.latency_us() as f64 / 1000.0,
                click_sample_us: click,
                switch_sample_us: s,
            });
        }
        s += sampler.period_us;
    }
    Err(BenchError::NoSwitchObserved)
}

/// Repeated switches on one running pipeline, each requested at a random
/// phase up to `max_gap_us` after the previous observation and recorded
/// with a freshly phased sampler.
pub fn switch_latency_trials(
    pipeline: &mut Pipeline,
    trials: usize,
    capture: &CaptureModel,
    max_gap_us: u64,
    rng: &mut impl Rng,
) -> Result<Vec<SwitchMeasurement>, BenchError> {
    let mut t = pipeline.next_output_at().ok_or(BenchError::NoFrames)?;
    // let the view settle before the first request
    t = settle(pipeline, t)?;
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let request = t + 1 + rng.random_range(0..max_gap_us.max(1));
        let sampler = capture.random_sampler(rng);
        let m = measure_switch_latency(pipeline, request, &sampler)?;
        t = m.switch_sample_us.max(request);
        out.push(m);
    }
    Ok(out)
}

/// Runs until the first output frame exists; returns its time.
fn settle(pipeline: &mut Pipeline, from: u64) -> Result<u64, BenchError> {
    let mut t = from;
    while pipeline.latest_output().is_none() {
        if t > from + SWITCH_TIMEOUT_US {
            return Err(BenchError::NoFrames);
        }
        t = pipeline.next_output_at().ok_or(BenchError::NoFrames)?;
        pipeline.frame_tick(t);
    }
    Ok(t)
}

/// One camera-to-display hop of the feedback loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopbackHop {
    /// Capture-to-display latency added by the hop.
    pub latency_us: u64,
    /// Camera capture rate.
    pub fps: f64,
}

impl LoopbackHop {
    pub fn from_entry(entry: &RegistryEntry) -> Self {
        Self {
            latency_us: entry.spec.delivery_latency_ms(&entry.selected) * 1000,
            fps: entry.selected.fps,
        }
    }

    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.fps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayLatencyOptions {
    pub iterations: u32,
    pub events: u32,
    pub capture: CaptureModel,
    /// Interval between counter increments.
    pub event_interval_us: u64,
}

impl Default for DisplayLatencyOptions {
    fn default() -> Self {
        Self {
            iterations: 3,
            events: 10,
            capture: CaptureModel::default(),
            event_interval_us: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplayLatency {
    pub mean_ms: f64,
    pub stddev_ms: f64,
    /// Per-event estimates.
    pub estimates_ms: Vec<f64>,
}

/// Simulates the camera filming its own preview window next to an on-screen
/// counter. Depth 0 is the counter, depth `i` the `i`-th nested preview; a
/// change reaches depth `i` at the first camera capture after it reached
/// depth `i - 1`, plus the hop latency. A screen recorder samples every
/// depth, and each counter increment yields the estimate
/// `(seen at depth iterations - seen at depth 0) / iterations`.
///
/// The camera free-runs with one random phase for the whole run; the
/// recorder has its own random phase.
pub fn measure_display_latency(
    hop: &LoopbackHop,
    opts: &DisplayLatencyOptions,
    rng: &mut impl Rng,
) -> Result<DisplayLatency, BenchError> {
    if opts.iterations == 0 || opts.events == 0 {
        return Err(BenchError::Config("iterations and events must be positive".into()));
    }
    if !(hop.fps.is_finite() && hop.fps > 0.0) {
        return Err(BenchError::Config(format!("camera rate {}", hop.fps)));
    }
    let sampler = opts.capture.random_sampler(rng);
    let period_us = (1e6 / hop.fps).ceil() as u64;
    let cam_phase = rng.random_range(0..period_us);
    // first capture instant at or after t
    let next_capture = |t: u64| -> u64 {
        if t <= cam_phase {
            return cam_phase;
        }
        let elapsed = t - cam_phase;
        let mut k = crate::sources::frames_elapsed(elapsed, hop.fps);
        if frame_offset_us(k, hop.fps) < elapsed {
            k += 1;
        }
        cam_phase + frame_offset_us(k, hop.fps)
    };
    let start = opts.event_interval_us;
    let estimates_ms: Vec<f64> = (0..u64::from(opts.events))
        .map(|e| {
            let t0 = start + e * opts.event_interval_us;
            let mut d = t0;
            for _ in 0..opts.iterations {
                d = next_capture(d) + hop.latency_us;
            }
            let seen0 = sampler.first_at_or_after(t0);
            let seen_k = sampler.first_at_or_after(d);
            (seen_k as f64 - seen0 as f64) / 1000.0 / f64::from(opts.iterations)
        })
        .collect();
    let (mean_ms, stddev_ms) = mean_stddev(&estimates_ms);
    Ok(DisplayLatency {
        mean_ms,
        stddev_ms,
        estimates_ms,
    })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
