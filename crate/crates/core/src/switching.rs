//! The advance state machine and the virtual-camera pipeline that applies it.
//!
//! The pipeline runs on a virtual microsecond clock. Sources deliver frames
//! into single-slot latest-wins mailboxes; the compositor samples every
//! mailbox it needs at each output instant, so slow sources repeat and fast
//! ones drop frames. Nothing here reads the wall clock.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compositor::{
    self, canvas_for_height, compose_primary_slots, compose_tiled_slots, CompositorError, Provenance,
};
use crate::frame::{Frame, Resolution};
use crate::sources::{
    frame_offset_us, frames_elapsed, ordinal_color, stamp_synth, Capability, Registry, DEFAULT_TARGET_HEIGHT,
};

const MS: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", content = "primary", rename_all = "lowercase")]
pub enum ViewState {
    Primary(u32),
    Tiled,
}

impl ViewState {
    pub fn is_valid_for(&self, n: u32) -> bool {
        match *self {
            ViewState::Primary(p) => (1..=n).contains(&p),
            ViewState::Tiled => true,
        }
    }

    pub fn primary(&self) -> Option<u32> {
        match *self {
            ViewState::Primary(p) => Some(p),
            ViewState::Tiled => None,
        }
    }
}

impl std::fmt::Display for ViewState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ViewState::Primary(p) => write!(f, "primary {p}"),
            ViewState::Tiled => f.write_str("tiled"),
        }
    }
}

/// Next view in the fixed cycle Primary(1) … Primary(n), Tiled.
pub fn advance(state: ViewState, n: u32, tiled_enabled: bool) -> ViewState {
    debug_assert!(n >= 1 && state.is_valid_for(n));
    match state {
        ViewState::Primary(i) if i < n => ViewState::Primary(i + 1),
        ViewState::Primary(_) if tiled_enabled => ViewState::Tiled,
        ViewState::Primary(_) | ViewState::Tiled => ViewState::Primary(1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchStrategy {
    /// Every camera streams continuously; a switch only changes what the
    /// compositor picks.
    #[default]
    #[serde(alias = "all")]
    AllAtOnce,
    /// Only the primary camera streams; a switch stops the pipeline, swaps
    /// the source and restarts. Tiled mode is unavailable.
    #[serde(alias = "one")]
    OneAtATime,
}

impl std::fmt::Display for SwitchStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SwitchStrategy::AllAtOnce => "all_at_once",
            SwitchStrategy::OneAtATime => "one_at_a_time",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub strategy: SwitchStrategy,
    pub canvas: Resolution,
    /// Compositor rate; defaults to the fastest selected camera rate.
    pub output_fps: Option<f64>,
    pub tiled_enabled: bool,
    pub thumbnails: bool,
    pub stop_cost_ms: u64,
    pub start_cost_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            strategy: SwitchStrategy::AllAtOnce,
            canvas: canvas_for_height(DEFAULT_TARGET_HEIGHT),
            output_fps: None,
            tiled_enabled: true,
            thumbnails: true,
            stop_cost_ms: 25,
            start_cost_ms: 25,
        }
    }
}

impl PipelineConfig {
    pub fn with_strategy(mut self, strategy: SwitchStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    /// Whether the advance cycle includes the tiled view.
    pub fn cycle_includes_tiled(&self) -> bool {
        self.tiled_enabled && self.strategy == SwitchStrategy::AllAtOnce
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid output frame rate {0}")]
    BadOutputRate(f64),
    #[error("pipeline is not running")]
    NotRunning,
    #[error(transparent)]
    Compose(#[from] CompositorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchOutcome {
    pub previous: ViewState,
    pub new_state: ViewState,
    pub requested_at_us: u64,
    /// Time of the first output frame that shows `new_state`.
    pub effective_at_us: u64,
}

impl SwitchOutcome {
    pub fn latency_us(&self) -> u64 {
        self.effective_at_us - self.requested_at_us
    }
}

/// Per-source mailbox counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SourceStats {
    /// Frames the camera put into its mailbox.
    pub delivered: u64,
    /// Frames the compositor took out of the mailbox.
    pub consumed: u64,
    /// Consumed frames that ended up visible in an output frame.
    pub used: u64,
}

impl SourceStats {
    /// Frames overwritten in the mailbox before the compositor saw them.
    pub fn overwritten(&self) -> u64 {
        self.delivered - self.consumed
    }
}

#[derive(Debug, Clone)]
struct SourceSlot {
    ordinal: u32,
    cap: Capability,
    warm_up_us: u64,
    latency_us: u64,
    running: bool,
    first_delivery_us: u64,
    /// Sequence number of this run's frame 0; keeps seq increasing across
    /// restarts.
    seq_base: u64,
    /// Index (within the current run) of the frame sitting in the mailbox.
    mailbox: Option<u64>,
    last_consumed: Option<u64>,
    background: Frame,
    cached: Option<Frame>,
    stats: SourceStats,
}

impl SourceSlot {
    fn new(ordinal: u32, cap: Capability, warm_up_ms: u64, latency_ms: u64) -> Self {
        Self {
            ordinal,
            cap,
            warm_up_us: warm_up_ms * MS,
            latency_us: latency_ms * MS,
            running: false,
            first_delivery_us: 0,
            seq_base: 0,
            mailbox: None,
            last_consumed: None,
            background: Frame::blank(cap.resolution, ordinal_color(ordinal)),
            cached: None,
            stats: SourceStats::default(),
        }
    }

    /// Starts the camera so its first frame lands at `first_delivery_us`.
    fn start_delivering_at(&mut self, first_delivery_us: u64) {
        self.running = true;
        self.first_delivery_us = first_delivery_us;
    }

    fn start(&mut self, now_us: u64) {
        self.start_delivering_at(now_us + self.warm_up_us);
    }

    fn stop(&mut self) {
        if let Some(k) = self.mailbox {
            self.seq_base += k + 1;
        }
        self.running = false;
        self.mailbox = None;
        self.last_consumed = None;
        self.cached = None;
    }

    fn delivery_time(&self, k: u64) -> u64 {
        self.first_delivery_us + frame_offset_us(k, self.cap.fps)
    }

    /// Moves every frame due by `now_us` into the mailbox, newest wins.
    fn pump(&mut self, now_us: u64) {
        if !self.running || now_us < self.first_delivery_us {
            return;
        }
        let k = frames_elapsed(now_us - self.first_delivery_us, self.cap.fps);
        let fresh = match self.mailbox {
            Some(prev) if prev >= k => 0,
            Some(prev) => k - prev,
            None => k + 1,
        };
        if fresh > 0 {
            self.stats.delivered += fresh;
            self.mailbox = Some(k);
        }
    }

    /// Takes the current mailbox frame; stale frames are reused.
    fn take(&mut self) -> Option<&Frame> {
        let k = self.mailbox?;
        if self.last_consumed != Some(k) {
            self.stats.consumed += 1;
            self.last_consumed = Some(k);
        }
        if self.cached.as_ref().map(|f| f.seq) != Some(self.seq_base + k) {
            let mut frame = self.background.clone();
            let seq = self.seq_base + k;
            stamp_synth(&mut frame, self.ordinal, &self.cap, seq);
            frame.timestamp_us = self.delivery_time(k).saturating_sub(self.latency_us);
            self.cached = Some(frame);
        }
        self.cached.as_ref()
    }
}

/// A running virtual camera: registry, switching strategy, view state and
/// compositor on one virtual clock.
#[derive(Debug, Clone)]
pub struct Pipeline {
    registry: Registry,
    config: PipelineConfig,
    output_fps: f64,
    state: ViewState,
    slots: Vec<SourceSlot>,
    running: bool,
    epoch_us: u64,
    next_k: u64,
    /// One-at-a-time surgery in progress: nothing is emitted before this.
    gap_until: Option<u64>,
    out_seq: u64,
    outbox: VecDeque<Frame>,
    latest: Option<Frame>,
    latest_state: Option<ViewState>,
}

impl Pipeline {
    pub fn new(registry: Registry, config: PipelineConfig) -> Result<Self, PipelineError> {
        let output_fps = match config.output_fps {
            Some(fps) => fps,
            None => registry.entries().iter().map(|e| e.selected.fps).fold(0.0, f64::max),
        };
        if !(output_fps.is_finite() && output_fps > 0.0) {
            return Err(PipelineError::BadOutputRate(output_fps));
        }
        let slots = Self::slots_for(&registry);
        Ok(Self {
            registry,
            config,
            output_fps,
            state: ViewState::Primary(1),
            slots,
            running: false,
            epoch_us: 0,
            next_k: 0,
            gap_until: None,
            out_seq: 0,
            outbox: VecDeque::new(),
            latest: None,
            latest_state: None,
        })
    }

    fn slots_for(registry: &Registry) -> Vec<SourceSlot> {
        registry
            .entries()
            .iter()
            .map(|e| {
                SourceSlot::new(
                    e.ordinal,
                    e.selected,
                    e.spec.warm_up_ms,
                    e.spec.delivery_latency_ms(&e.selected),
                )
            })
            .collect()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn strategy(&self) -> SwitchStrategy {
        self.config.strategy
    }

    pub fn num_cams(&self) -> u32 {
        self.registry.len() as u32
    }

    pub fn state(&self) -> ViewState {
        self.state
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn output_fps(&self) -> f64 {
        self.output_fps
    }

    pub fn output_period_us(&self) -> f64 {
        1e6 / self.output_fps
    }

    pub fn canvas(&self) -> Resolution {
        self.config.canvas
    }

    /// Latest output frame produced so far.
    pub fn latest_output(&self) -> Option<&Frame> {
        self.latest.as_ref()
    }

    /// View shown by the latest output frame.
    pub fn visible_state(&self) -> Option<ViewState> {
        self.latest_state
    }

    pub fn source_stats(&self, ordinal: u32) -> Option<SourceStats> {
        self.slot_index(ordinal).map(|i| self.slots[i].stats)
    }

    pub fn source_running(&self, ordinal: u32) -> bool {
        self.slot_index(ordinal).is_some_and(|i| self.slots[i].running)
    }

    fn slot_index(&self, ordinal: u32) -> Option<usize> {
        (ordinal as usize).checked_sub(1).filter(|&i| i < self.slots.len())
    }

    pub fn start(&mut self, now_us: u64) {
        if self.running {
            return;
        }
        self.running = true;
        self.epoch_us = now_us;
        self.next_k = 0;
        self.gap_until = None;
        match self.config.strategy {
            SwitchStrategy::AllAtOnce => self.slots.iter_mut().for_each(|s| s.start(now_us)),
            SwitchStrategy::OneAtATime => {
                let p = self.state.primary().unwrap_or(1);
                self.state = ViewState::Primary(p);
                let i = self.slot_index(p).expect("primary in registry");
                self.slots[i].start(now_us);
            }
        }
    }

    pub fn stop(&mut self) {
        self.running = false;
        self.slots.iter_mut().for_each(SourceSlot::stop);
        self.gap_until = None;
    }

    /// Replaces the registry (re-enumeration) and restarts at Primary(1).
    pub fn rebuild(&mut self, registry: Registry, now_us: u64) -> Result<(), PipelineError> {
        self.produce_before(now_us);
        let seq = self.out_seq;
        let outbox = std::mem::take(&mut self.outbox);
        let (latest, latest_state) = (self.latest.take(), self.latest_state);
        let mut fresh = Pipeline::new(registry, self.config.clone())?;
        fresh.out_seq = seq;
        fresh.outbox = outbox;
        fresh.latest = latest;
        fresh.latest_state = latest_state;
        *self = fresh;
        self.start(now_us);
        Ok(())
    }

    /// Time of the next output frame: either one already produced and
    /// waiting, or the next instant not yet processed.
    pub fn next_output_at(&self) -> Option<u64> {
        match self.outbox.front() {
            Some(frame) => Some(frame.timestamp_us),
            None => self.pending_instant(),
        }
    }

    fn pending_instant(&self) -> Option<u64> {
        if !self.running {
            return None;
        }
        let t = self.epoch_us + frame_offset_us(self.next_k, self.output_fps);
        Some(match self.gap_until {
            Some(g) if t < g => g,
            _ => t,
        })
    }

    /// Produces the next output frame due at or before `now_us`, if any.
    pub fn frame_tick(&mut self, now_us: u64) -> Option<Frame> {
        if self.outbox.front().is_some_and(|f| f.timestamp_us <= now_us) {
            return self.outbox.pop_front();
        }
        while let Some(t) = self.pending_instant() {
            if t > now_us {
                return None;
            }
            if let Some(frame) = self.produce_at(t) {
                return Some(frame);
            }
        }
        None
    }

    /// All output frames due up to and including `now_us`.
    pub fn run_until(&mut self, now_us: u64) -> Vec<Frame> {
        std::iter::from_fn(|| self.frame_tick(now_us)).collect()
    }

    /// Produces every instant strictly before `t` into the outbox.
    fn produce_before(&mut self, t: u64) {
        while let Some(next) = self.pending_instant().filter(|&next| next < t) {
            if let Some(frame) = self.produce_at(next) {
                self.outbox.push_back(frame);
            }
        }
    }

    /// Handles the output instant `t`; returns `None` when the frames the
    /// current view needs have not arrived yet.
    fn produce_at(&mut self, t: u64) -> Option<Frame> {
        if let Some(g) = self.gap_until {
            if t >= g {
                // the restarted graph runs on a fresh output timeline
                self.gap_until = None;
                self.epoch_us = g;
                self.next_k = 0;
            }
        }
        self.next_k += 1;
        for slot in &mut self.slots {
            slot.pump(t);
        }
        let canvas = self.config.canvas;
        let composed = match self.state {
            ViewState::Tiled => {
                let mut frames = Vec::with_capacity(self.slots.len());
                for slot in &mut self.slots {
                    frames.push(slot.take().cloned());
                }
                if frames.iter().all(Option::is_none) {
                    return None;
                }
                for (slot, f) in self.slots.iter_mut().zip(&frames) {
                    if f.is_some() {
                        slot.stats.used += 1;
                    }
                }
                let refs: Vec<Option<&Frame>> = frames.iter().map(Option::as_ref).collect();
                compose_tiled_slots(&refs, canvas)
            }
            ViewState::Primary(p) => {
                let mut frames = Vec::with_capacity(self.slots.len());
                for slot in &mut self.slots {
                    frames.push((slot.ordinal, slot.take().cloned()));
                }
                if !frames.iter().any(|(o, f)| *o == p && f.is_some()) {
                    return None;
                }
                let thumbs = self.config.thumbnails;
                for (slot, (o, f)) in self.slots.iter_mut().zip(&frames) {
                    if f.is_some() && (*o == p || thumbs) {
                        slot.stats.used += 1;
                    }
                }
                let refs: Vec<(u32, Option<&Frame>)> = frames.iter().map(|(o, f)| (*o, f.as_ref())).collect();
                compose_primary_slots(&refs, p, canvas, thumbs)
            }
        };
        let mut out = composed.expect("compositor inputs validated above");
        out.seq = self.out_seq;
        out.timestamp_us = t;
        out.source_ordinal = 0;
        self.out_seq += 1;
        self.latest = Some(out.clone());
        self.latest_state = Some(self.state);
        Some(out)
    }

    /// Applies one advance requested at `request_us`.
    ///
    /// Output instants before the request are produced with the old view
    /// first (they come out of later `frame_tick` calls unchanged).
    pub fn apply_switch(&mut self, request_us: u64) -> Result<SwitchOutcome, PipelineError> {
        if !self.running {
            return Err(PipelineError::NotRunning);
        }
        self.produce_before(request_us);
        let previous = self.state;
        let new_state = advance(previous, self.num_cams(), self.config.cycle_includes_tiled());
        self.state = new_state;

        let effective_at_us = match self.config.strategy {
            SwitchStrategy::AllAtOnce => self.first_emittable_at(request_us),
            SwitchStrategy::OneAtATime if new_state == previous => self.first_emittable_at(request_us),
            SwitchStrategy::OneAtATime => {
                let old = previous.primary().and_then(|p| self.slot_index(p));
                if let Some(i) = old {
                    self.slots[i].pump(request_us);
                    self.slots[i].stop();
                }
                let i = self
                    .slot_index(new_state.primary().expect("one-at-a-time has no tiled view"))
                    .expect("primary in registry");
                // requests arriving mid-surgery queue behind it
                let begin = self.gap_until.map_or(request_us, |g| g.max(request_us));
                let resume =
                    begin + (self.config.stop_cost_ms + self.config.start_cost_ms) * MS + self.slots[i].warm_up_us;
                self.slots[i].start_delivering_at(resume);
                self.gap_until = Some(resume);
                resume
            }
        };
        Ok(SwitchOutcome {
            previous,
            new_state,
            requested_at_us: request_us,
            effective_at_us,
        })
    }

    /// First pending output instant `>= from` at which the current view has
    /// the frames it needs.
    fn first_emittable_at(&self, from: u64) -> u64 {
        let ready = match self.state {
            ViewState::Primary(p) => self.slot_index(p).map(|i| &self.slots[i]).map(|s| s.first_delivery_us),
            ViewState::Tiled => self
                .slots
                .iter()
                .filter(|s| s.running)
                .map(|s| s.first_delivery_us)
                .min(),
        }
        .unwrap_or(from)
        .max(from);
        let mut k = self.next_k;
        let mut epoch = self.epoch_us;
        if let Some(g) = self.gap_until {
            if epoch + frame_offset_us(k, self.output_fps) < g {
                epoch = g;
                k = 0;
            }
        }
        let elapsed = ready.saturating_sub(epoch);
        let mut k2 = frames_elapsed(elapsed, self.output_fps);
        if epoch + frame_offset_us(k2, self.output_fps) < ready {
            k2 += 1;
        }
        epoch + frame_offset_us(k2.max(k), self.output_fps)
    }

    /// Provenance of the latest output frame.
    pub fn visible_provenance(&self) -> Option<Provenance> {
        self.latest.as_ref().and_then(compositor::decode_provenance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::{decode_provenance, tile_layout};
    use crate::sources::{build_registry, decode_ordinal, CameraSpec};
    use proptest::prelude::*;

    fn registry(fps: &[f64], warm_up_ms: u64) -> Registry {
        let specs: Vec<CameraSpec> = fps
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                CameraSpec::new(format!("cam{}", i + 1), vec![Capability::rgb(64, 48, f)])
                    .unwrap()
                    .with_warm_up_ms(warm_up_ms)
            })
            .collect();
        build_registry(&specs, 640, &[]).unwrap()
    }

    fn small_config(strategy: SwitchStrategy) -> PipelineConfig {
        PipelineConfig {
            strategy,
            canvas: canvas_for_height(96),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn advance_examples() {
        use ViewState::*;
        assert_eq!(advance(Primary(2), 4, true), Primary(3));
        assert_eq!(advance(Primary(3), 3, true), Tiled);
        assert_eq!(advance(Tiled, 3, true), Primary(1));
        assert_eq!(advance(Primary(1), 1, true), Tiled);
        assert_eq!(advance(Tiled, 1, true), Primary(1));
        assert_eq!(advance(Primary(3), 3, false), Primary(1));
    }

    fn all_states(n: u32) -> Vec<ViewState> {
        (1..=n).map(ViewState::Primary).chain([ViewState::Tiled]).collect()
    }

    #[test]
    fn advance_cycles_exhaustive() {
        for n in 1..=8 {
            for s in all_states(n) {
                let back = (0..=n).fold(s, |st, _| advance(st, n, true));
                assert_eq!(back, s, "n={n} tiled");
                if s != ViewState::Tiled {
                    let back = (0..n).fold(s, |st, _| advance(st, n, false));
                    assert_eq!(back, s, "n={n} untiled");
                }
            }
        }
    }

    #[test]
    fn view_state_json() {
        assert_eq!(serde_json::to_string(&ViewState::Tiled).unwrap(), r#"{"mode":"tiled"}"#);
        assert_eq!(
            serde_json::to_string(&ViewState::Primary(2)).unwrap(),
            r#"{"mode":"primary","primary":2}"#
        );
        let s: SwitchStrategy = serde_json::from_str(r#""one""#).unwrap();
        assert_eq!(s, SwitchStrategy::OneAtATime);
    }

    #[test]
    fn output_cadence_is_compositor_rate() {
        let mut p = Pipeline::new(registry(&[30.0, 15.0], 0), small_config(SwitchStrategy::AllAtOnce)).unwrap();
        p.start(0);
        let frames = p.run_until(1_000_000);
        assert_eq!(frames.len(), 31);
        for (k, f) in frames.iter().enumerate() {
            assert_eq!(f.timestamp_us, frame_offset_us(k as u64, 30.0));
            assert_eq!(f.seq, k as u64);
        }
    }

    #[test]
    fn slow_source_tile_repeats() {
        // oracle: a 15 fps source delivers frame j at j·66_666 µs; the tile at
        // output instant t shows the newest j with delivery ≤ t.
        let mut p = Pipeline::new(registry(&[30.0, 15.0], 0), small_config(SwitchStrategy::AllAtOnce)).unwrap();
        p.start(0);
        p.apply_switch(0).unwrap();
        p.apply_switch(0).unwrap();
        assert_eq!(p.state(), ViewState::Tiled);
        let cells = tile_layout(2, p.canvas()).unwrap();
        let mut seen = Vec::new();
        for f in p.run_until(400_000) {
            let t = f.timestamp_us;
            let expect = (0..).take_while(|&j| frame_offset_us(j, 15.0) <= t).last().unwrap();
            // the tile's top-left is the camera marker (ordinal, seq, 255)
            let fit = Resolution::new(64, 48)
                .unwrap()
                .fit_within(Resolution::new(cells[1].width, cells[1].height).unwrap());
            let at = cells[1].centered(fit);
            let m = f.pixel(at.x, at.y);
            assert_eq!(m, [2, expect as u8, 255], "t={t}");
            seen.push(m[1]);
        }
        assert_eq!(&seen[..6], &[0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn non_primary_frames_are_consumed_and_discarded() {
        let mut cfg = small_config(SwitchStrategy::AllAtOnce);
        cfg.thumbnails = false;
        let mut p = Pipeline::new(registry(&[30.0, 30.0], 0), cfg).unwrap();
        p.start(0);
        let frames = p.run_until(500_000);
        assert!(frames
            .iter()
            .all(|f| decode_provenance(f).unwrap().view_key() == (1, 0)));
        let cam2 = p.source_stats(2).unwrap();
        assert!(cam2.consumed > 0);
        assert_eq!(cam2.used, 0);
        assert_eq!(p.source_stats(1).unwrap().used, frames.len() as u64);
    }

    #[test]
    fn fast_source_overwrites() {
        let mut cfg = small_config(SwitchStrategy::AllAtOnce);
        cfg.output_fps = Some(10.0);
        let mut p = Pipeline::new(registry(&[30.0], 0), cfg).unwrap();
        p.start(0);
        p.run_until(1_000_000);
        let s = p.source_stats(1).unwrap();
        assert_eq!(s.delivered, 31);
        assert_eq!(s.consumed, 11);
        assert_eq!(s.overwritten(), 20);
    }

    #[test]
    fn all_at_once_switch_is_next_boundary() {
        let mut p = Pipeline::new(registry(&[30.0, 30.0], 500), small_config(SwitchStrategy::AllAtOnce)).unwrap();
        p.start(0);
        p.run_until(1_000_000);
        let req = 1_010_000;
        let out = p.apply_switch(req).unwrap();
        assert_eq!(out.new_state, ViewState::Primary(2));
        assert_eq!(out.effective_at_us, frame_offset_us(31, 30.0));
        assert!(out.latency_us() <= 33_334);
        let frames = p.run_until(1_200_000);
        let first_new = frames
            .iter()
            .find(|f| decode_provenance(f).unwrap().view_key() == (2, 0))
            .unwrap();
        assert_eq!(first_new.timestamp_us, out.effective_at_us);
    }

    #[test]
    fn one_at_a_time_gap() {
        let mut p = Pipeline::new(registry(&[30.0, 30.0], 500), small_config(SwitchStrategy::OneAtATime)).unwrap();
        p.start(0);
        p.run_until(1_000_000);
        assert!(p.source_running(1) && !p.source_running(2));
        let req = 1_010_000;
        let out = p.apply_switch(req).unwrap();
        assert_eq!(out.effective_at_us, req + 550_000);
        let frames = p.run_until(2_000_000);
        assert!(frames
            .iter()
            .all(|f| f.timestamp_us <= req || f.timestamp_us >= out.effective_at_us));
        let first_after = frames.iter().find(|f| f.timestamp_us > req).unwrap();
        assert_eq!(first_after.timestamp_us, out.effective_at_us);
        assert_eq!(decode_provenance(first_after).unwrap().view_key(), (2, 0));
        assert!(!p.source_running(1) && p.source_running(2));
    }

    #[test]
    fn one_at_a_time_skips_tiled() {
        let mut p = Pipeline::new(registry(&[30.0, 30.0], 0), small_config(SwitchStrategy::OneAtATime)).unwrap();
        p.start(0);
        let a = p.apply_switch(10).unwrap();
        let b = p.apply_switch(20).unwrap();
        assert_eq!(a.new_state, ViewState::Primary(2));
        assert_eq!(b.new_state, ViewState::Primary(1));
        // queued behind the first surgery
        assert_eq!(b.effective_at_us, a.effective_at_us + 50_000);
    }

    #[test]
    fn source_seq_keeps_increasing_across_restarts() {
        let mut p = Pipeline::new(registry(&[30.0, 30.0], 0), small_config(SwitchStrategy::OneAtATime)).unwrap();
        p.start(0);
        p.run_until(200_000);
        p.apply_switch(200_000).unwrap();
        p.run_until(400_000);
        p.apply_switch(400_000).unwrap();
        let frames = p.run_until(800_000);
        let seqs: Vec<u8> = frames
            .iter()
            .filter_map(|f| match decode_provenance(f) {
                Some(Provenance::Primary { ordinal: 1, seq_byte }) => Some(seq_byte),
                _ => None,
            })
            .collect();
        assert!(seqs.windows(2).all(|w| w[0] < w[1]), "{seqs:?}");
        assert!(seqs[0] > 0);
    }

    #[test]
    fn warm_up_delays_first_output() {
        let mut p = Pipeline::new(registry(&[30.0], 500), small_config(SwitchStrategy::AllAtOnce)).unwrap();
        p.start(0);
        let frames = p.run_until(600_000);
        assert_eq!(frames[0].timestamp_us, 500_000);
        assert!(p.frame_tick(600_000).is_none());
    }

    #[test]
    fn not_running_rejects_switch() {
        let mut p = Pipeline::new(registry(&[30.0], 0), small_config(SwitchStrategy::AllAtOnce)).unwrap();
        assert_eq!(p.apply_switch(0), Err(PipelineError::NotRunning));
    }

    #[test]
    fn tiled_cells_decode() {
        let mut p = Pipeline::new(
            registry(&[30.0, 30.0, 30.0], 0),
            small_config(SwitchStrategy::AllAtOnce),
        )
        .unwrap();
        p.start(0);
        for _ in 0..3 {
            p.apply_switch(0).unwrap();
        }
        let f = p.run_until(0).pop().unwrap();
        for (i, cell) in tile_layout(3, p.canvas()).unwrap().iter().enumerate() {
            let (x, y) = cell.center();
            assert_eq!(decode_ordinal(f.pixel(x, y)), Some(i as u32 + 1));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn state_after_k_requests_matches_advance(
            n in 1usize..5,
            k in 0usize..100,
            one in any::<bool>(),
            gaps in prop::collection::vec(0u64..200_000, 100),
        ) {
            let strategy = if one { SwitchStrategy::OneAtATime } else { SwitchStrategy::AllAtOnce };
            let cfg = small_config(strategy);
            let tiled = cfg.cycle_includes_tiled();
            let mut p = Pipeline::new(registry(&vec![30.0; n], 100), cfg).unwrap();
            p.start(0);
            let mut t = 0;
            let mut expected = ViewState::Primary(1);
            for gap in gaps.iter().take(k) {
                t += gap;
                p.run_until(t);
                let out = p.apply_switch(t).unwrap();
                prop_assert!(out.effective_at_us >= t);
                expected = advance(expected, n as u32, tiled);
            }
            prop_assert_eq!(p.state(), expected);
        }

        #[test]
        fn all_at_once_latency_within_two_periods(phase in 0u64..33_334, warm in 0u64..300) {
            let mut p = Pipeline::new(registry(&[30.0, 30.0], warm), small_config(SwitchStrategy::AllAtOnce)).unwrap();
            p.start(0);
            let req = 1_000_000 + phase;
            p.run_until(req);
            let out = p.apply_switch(req).unwrap();
            prop_assert!(out.latency_us() <= 66_667);
            let frames = p.run_until(req + 100_000);
            let first = frames.iter().find(|f| decode_provenance(f).unwrap().view_key() == (2, 0)).unwrap();
            prop_assert_eq!(first.timestamp_us, out.effective_at_us);
        }

        #[test]
        fn one_at_a_time_latency_at_least_warm_up(phase in 0u64..33_334, warm in 0u64..1500) {
            let mut p = Pipeline::new(registry(&[30.0, 30.0], warm), small_config(SwitchStrategy::OneAtATime)).unwrap();
            p.start(0);
            let req = 2_000_000 + phase;
            p.run_until(req);
            let out = p.apply_switch(req).unwrap();
            prop_assert!(out.latency_us() >= warm * 1000);
        }
    }
}
