use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    bandwidth_estimate, mean_stddev, measure_display_latency, measure_frame_rate, measure_throughput,
    switch_latency_trials, BenchError, BenchReport, CaptureModel, ClockInfo, DisplayLatencyOptions, FrameRateOptions,
    LoopbackHop, RunRecord, MIB,
};
use crate::sources::{build_registry, CameraSpec, Registry, DEFAULT_TARGET_HEIGHT};
use crate::switching::{Pipeline, PipelineConfig, SwitchStrategy};

/// Largest camera count the subset suite accepts (255 runs per strategy).
pub const MAX_SUITE_CAMERAS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetMode {
    /// Every non-empty subset.
    #[default]
    All,
    /// Each camera on its own.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub scenario: String,
    pub seed: u64,
    pub target_height: u32,
    pub whitelist: Vec<String>,
    pub strategies: Vec<SwitchStrategy>,
    pub subsets: SubsetMode,
    pub pipeline: PipelineConfig,
    pub frames: usize,
    pub burn_in_ms: u64,
    pub switch_trials: usize,
    /// Requests are spread uniformly over this window after the previous
    /// switch was observed.
    pub switch_gap_ms: u64,
    pub display_iterations: u32,
    pub display_events: u32,
    pub sampling_period_ms: f64,
    /// Also time composition against the wall clock.
    pub wall_throughput: bool,
    pub cameras: Vec<CameraSpec>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            seed: 0,
            target_height: DEFAULT_TARGET_HEIGHT,
            whitelist: Vec::new(),
            strategies: vec![SwitchStrategy::AllAtOnce],
            subsets: SubsetMode::All,
            pipeline: PipelineConfig::default(),
            frames: super::DEFAULT_RATE_FRAMES,
            burn_in_ms: super::DEFAULT_BURN_IN_US / 1000,
            switch_trials: 10,
            switch_gap_ms: 200,
            display_iterations: 3,
            display_events: 10,
            sampling_period_ms: super::DEFAULT_SAMPLING_PERIOD_MS,
            wall_throughput: false,
            cameras: Vec::new(),
        }
    }
}

impl BenchConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, BenchError> {
        toml::from_str(s).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.cameras.is_empty() {
            return Err(BenchError::Config("no cameras configured".into()));
        }
        if self.strategies.is_empty() {
            return Err(BenchError::Config("no strategies configured".into()));
        }
        if self.frames < 2 {
            return Err(BenchError::Config("frames must be at least 2".into()));
        }
        if self.display_iterations == 0 || self.display_events == 0 {
            return Err(BenchError::Config(
                "display iterations and events must be positive".into(),
            ));
        }
        CaptureModel::new(self.sampling_period_ms)?;
        Ok(())
    }
}

/// Ordinal lists of the subsets to run, smaller subsets first, each in
/// lexicographic order.
pub fn camera_subsets(n: usize, mode: SubsetMode) -> Vec<Vec<u32>> {
    match mode {
        SubsetMode::Single => (1..=n as u32).map(|o| vec![o]).collect(),
        SubsetMode::All => {
            let mut subsets: Vec<Vec<u32>> = (1u32..(1 << n))
                .map(|mask| (0..n as u32).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).collect())
                .collect();
            subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
            subsets
        }
    }
}

fn fresh_pipeline(registry: &Registry, cfg: &PipelineConfig) -> Result<Pipeline, BenchError> {
    let mut p = Pipeline::new(registry.clone(), cfg.clone())?;
    p.start(0);
    Ok(p)
}

/// One record per (camera subset, strategy), all on the virtual clock.
pub fn run_suite(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    config.validate()?;
    let full = build_registry(&config.cameras, config.target_height, &config.whitelist)
        .map_err(|e| BenchError::Config(e.to_string()))?;
    if full.len() > MAX_SUITE_CAMERAS {
        return Err(BenchError::Config(format!(
            "{} cameras; at most {MAX_SUITE_CAMERAS} are supported",
            full.len()
        )));
    }
    let capture = CaptureModel::new(config.sampling_period_ms)?;
    let rate_opts = FrameRateOptions {
        n_frames: config.frames,
        burn_in_us: config.burn_in_ms * 1000,
        ..FrameRateOptions::default()
    };
    let display_opts = DisplayLatencyOptions {
        iterations: config.display_iterations,
        events: config.display_events,
        capture,
        ..DisplayLatencyOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records = Vec::new();
    for subset in camera_subsets(full.len(), config.subsets) {
        let registry = full.subset(&subset).expect("ordinals from the registry");
        let names: Vec<&str> = registry.entries().iter().map(|e| e.spec.name.as_str()).collect();
        let bandwidth: f64 = registry.entries().iter().map(|e| bandwidth_estimate(&e.selected)).sum();
        for &strategy in &config.strategies {
            let pcfg = config.pipeline.clone().with_strategy(strategy);

            let mut p = fresh_pipeline(&registry, &pcfg)?;
            let fps_measured = measure_frame_rate(&mut p, &rate_opts)?;

            let mut p = fresh_pipeline(&registry, &pcfg)?;
            let switch_latency_ms = match switch_latency_trials(
                &mut p,
                config.switch_trials,
                &capture,
                config.switch_gap_ms * 1000,
                &mut rng,
            ) {
                Ok(ms) if !ms.is_empty() => Some(mean_stddev(&ms.iter().map(|m| m.latency_ms).collect::<Vec<_>>()).0),
                Ok(_) | Err(BenchError::NoSwitchObserved) => None,
                Err(e) => return Err(e),
            };

            let hop = LoopbackHop::from_entry(&registry.entries()[0]);
            let display = measure_display_latency(&hop, &display_opts, &mut rng)?;

            let throughput_fps = if config.wall_throughput {
                let mut p = fresh_pipeline(&registry, &pcfg)?;
                Some(measure_throughput(&mut p, config.frames)?)
            } else {
                None
            };

            records.push(RunRecord {
                scenario: config.scenario.clone(),
                camera_set: names.join("+"),
                num_cams: registry.len() as u32,
                strategy,
                fps_measured,
                switch_latency_ms,
                display_latency_ms: display.mean_ms,
                display_latency_stddev_ms: display.stddev_ms,
                bandwidth_bytes_per_s: bandwidth,
                bandwidth_mib_per_s: bandwidth / MIB,
                throughput_fps,
            });
        }
    }
    Ok(BenchReport {
        scenario: config.scenario.clone(),
        records,
        clock: ClockInfo {
            mode: "deterministic".into(),
            seed: config.seed,
            sampling_period_ms: config.sampling_period_ms,
            wall_throughput: config.wall_throughput,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::Capability;

    fn cameras(n: usize) -> Vec<CameraSpec> {
        (1..=n)
            .map(|i| CameraSpec::new(format!("cam{i}"), vec![Capability::rgb(64, 48, 30.0)]).unwrap())
            .collect()
    }

    fn small_config(n: usize) -> BenchConfig {
        BenchConfig {
            cameras: cameras(n),
            pipeline: PipelineConfig {
                canvas: crate::frame::Resolution::new(85, 64).unwrap(),
                ..PipelineConfig::default()
            },
            frames: 40,
            burn_in_ms: 100,
            switch_trials: 3,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn subsets() {
        assert_eq!(camera_subsets(4, SubsetMode::All).len(), 15);
        assert_eq!(camera_subsets(2, SubsetMode::All), vec![vec![1], vec![2], vec![1, 2]]);
        assert_eq!(camera_subsets(3, SubsetMode::Single), vec![vec![1], vec![2], vec![3]]);
        assert_eq!(
            camera_subsets(3, SubsetMode::All)[3..],
            [vec![1, 2], vec![1, 3], vec![2, 3], vec![1, 2, 3]]
        );
    }

    #[test]
    fn row_counts() {
        assert_eq!(run_suite(&small_config(2)).unwrap().records.len(), 3);
        let mut cfg = small_config(2);
        cfg.strategies = vec![SwitchStrategy::AllAtOnce, SwitchStrategy::OneAtATime];
        let report = run_suite(&cfg).unwrap();
        assert_eq!(report.records.len(), 6);
        // a lone camera cannot switch one-at-a-time
        let lone = report
            .records
            .iter()
            .find(|r| r.num_cams == 1 && r.strategy == SwitchStrategy::OneAtATime)
            .unwrap();
        assert_eq!(lone.switch_latency_ms, None);
        cfg.subsets = SubsetMode::Single;
        assert_eq!(run_suite(&cfg).unwrap().records.len(), 4);
    }

    #[test]
    fn empty_camera_list_is_config_error() {
        assert!(matches!(run_suite(&BenchConfig::default()), Err(BenchError::Config(_))));
    }

    #[test]
    fn parses_toml() {
        let cfg = BenchConfig::from_toml_str(
            r#"
            scenario = "desk"
            strategies = ["all", "one"]
            subsets = "single"
            [[cameras]]
            name = "a"
            capabilities = [{ width = 640, height = 480, fps = 30 }]
            "#,
        )
        .unwrap();
        assert_eq!(
            cfg.strategies,
            vec![SwitchStrategy::AllAtOnce, SwitchStrategy::OneAtATime]
        );
        assert_eq!(cfg.subsets, SubsetMode::Single);
        assert_eq!(cfg.frames, 250);
    }
}
