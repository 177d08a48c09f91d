//! Windowed evaluation protocols (chunked and cumulative) generic over a
//! pluggable set-level score function, plus report assembly for trajectory
//! precision/recall tables.

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{
    self, MetricsError, PrecisionRecall, TrajectoryMetric, TrajectorySet,
};
use crate::scalar::Scalar;
use crate::trajectory::{PlanarPath, PoseSequence};

/// Schema version stamped into every report.
pub const REPORT_VERSION: u32 = 1;

/// Evaluation window length (seconds) used by the windowed protocols.
pub const DEFAULT_WINDOW_SECONDS: f64 = 4.0;
/// Evaluation frame rate (Hz).
pub const DEFAULT_EVAL_RATE_HZ: f64 = 5.0;
/// Neighbor count for the precision/recall thresholds.
pub const DEFAULT_KNN_K: usize = 3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid window spec: {0}")]
    InvalidSpec(String),
    #[error("horizon exceeded: window needs {required} frames but a sequence has {available}")]
    HorizonExceeded { required: usize, available: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("score function failed: {0}")]
    Score(String),
}

/// Chunked windows tile the horizon; cumulative windows grow from the start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    Chunked,
    Cumulative,
}

/// Frame-window arithmetic for evaluating a horizon in fixed-length pieces.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowSpec {
    pub mode: WindowMode,
    pub window_seconds: f64,
    pub rate_hz: f64,
    pub horizon_seconds: f64,
}

impl WindowSpec {
    pub fn new(
        mode: WindowMode,
        window_seconds: f64,
        rate_hz: f64,
        horizon_seconds: f64,
    ) -> Result<Self, EvalError> {
        let spec = Self {
            mode,
            window_seconds,
            rate_hz,
            horizon_seconds,
        };
        spec.frames_per_window()?;
        if horizon_seconds + 1e-9 < window_seconds {
            return Err(EvalError::InvalidSpec(format!(
                "horizon {horizon_seconds}s shorter than window {window_seconds}s"
            )));
        }
        Ok(spec)
    }

    /// `window_seconds · rate_hz`, which must be a positive integer.
    pub fn frames_per_window(&self) -> Result<usize, EvalError> {
        let frames = self.window_seconds * self.rate_hz;
        if !(frames.is_finite() && frames > 0.0) {
            return Err(EvalError::InvalidSpec(format!(
                "window of {} frames",
                frames
            )));
        }
        if (frames - frames.round()).abs() > 1e-9 {
            return Err(EvalError::InvalidSpec(format!(
                "window_seconds * rate = {frames} is not an integer frame count"
            )));
        }
        Ok(frames.round() as usize)
    }

    /// Number of whole windows fitting in the horizon.
    pub fn window_count(&self) -> usize {
        ((self.horizon_seconds / self.window_seconds) + 1e-9).floor() as usize
    }

    /// `(start_frame, end_frame)` pairs, end exclusive, per the mode.
    pub fn windows(&self) -> Result<Vec<(usize, usize)>, EvalError> {
        match self.mode {
            WindowMode::Chunked => chunked_windows(self),
            WindowMode::Cumulative => cumulative_windows(self),
        }
    }
}

/// Non-overlapping consecutive windows starting at frame 0; a partial
/// trailing window is dropped.
pub fn chunked_windows(spec: &WindowSpec) -> Result<Vec<(usize, usize)>, EvalError> {
    let frames = spec.frames_per_window()?;
    if spec.horizon_seconds + 1e-9 < spec.window_seconds {
        return Err(EvalError::InvalidSpec(
            "horizon shorter than one window".into(),
        ));
    }
    Ok((0..spec.window_count())
        .map(|k| (k * frames, (k + 1) * frames))
        .collect())
}

/// Prefix windows `(0, k·frames)` for `k = 1 ..= floor(horizon/window)`.
pub fn cumulative_windows(spec: &WindowSpec) -> Result<Vec<(usize, usize)>, EvalError> {
    let frames = spec.frames_per_window()?;
    if spec.horizon_seconds + 1e-9 < spec.window_seconds {
        return Err(EvalError::InvalidSpec(
            "horizon shorter than one window".into(),
        ));
    }
    Ok((1..=spec.window_count()).map(|k| (0, k * frames)).collect())
}

/// Anything with a per-frame length the harness can bound-check windows
/// against.
pub trait FrameIndexed {
    fn num_frames(&self) -> usize;
}

impl<T: Scalar> FrameIndexed for PlanarPath<T> {
    fn num_frames(&self) -> usize {
        self.len()
    }
}

impl<T: Scalar> FrameIndexed for PoseSequence<T> {
    fn num_frames(&self) -> usize {
        self.len()
    }
}

impl<F> FrameIndexed for Vec<F> {
    fn num_frames(&self) -> usize {
        self.len()
    }
}

/// One window's score, labeled by its start time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowScore {
    pub start_seconds: f64,
    pub start_frame: usize,
    pub end_frame: usize,
    pub value: f64,
}

/// Score every window of the spec with the supplied set-level score
/// function. Every sequence in both sets must cover the last window.
pub fn evaluate_windows<D, F>(
    score: F,
    real: &[D],
    gen: &[D],
    spec: &WindowSpec,
) -> Result<Vec<WindowScore>, EvalError>
where
    D: FrameIndexed,
    F: Fn(&[D], &[D], (usize, usize)) -> Result<f64, EvalError>,
{
    let windows = spec.windows()?;
    let required = windows.iter().map(|&(_, end)| end).max().unwrap_or(0);
    for seq in real.iter().chain(gen.iter()) {
        if seq.num_frames() < required {
            return Err(EvalError::HorizonExceeded {
                required,
                available: seq.num_frames(),
            });
        }
    }
    windows
        .into_iter()
        .map(|(start, end)| {
            Ok(WindowScore {
                start_seconds: start as f64 / spec.rate_hz,
                start_frame: start,
                end_frame: end,
                value: score(real, gen, (start, end))?,
            })
        })
        .collect()
}

/// One precision/recall row of the trajectory table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PrecisionRecallRow {
    pub metric: TrajectoryMetric,
    pub precision: f64,
    pub recall: f64,
}

/// Table-shaped trajectory evaluation: per metric, precision and recall
/// (Fréchet columns before ADE), plus the optional index-paired mean ADE.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    pub real_label: String,
    pub gen_label: String,
    pub real_count: usize,
    pub gen_count: usize,
    pub k: usize,
    pub canonicalize: bool,
    pub rows: Vec<PrecisionRecallRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paired_ade: Option<f64>,
}

/// Compute precision/recall per metric between two trajectory sets.
///
/// `canonicalize` here only echoes whether upstream alignment ran; the sets
/// are scored as given. When `paired_ade` is requested the sets must have
/// equal size and uniform path lengths.
pub fn trajectory_report<T: Scalar>(
    real: &TrajectorySet<T>,
    gen: &TrajectorySet<T>,
    k: usize,
    metric_order: &[TrajectoryMetric],
    canonicalize: bool,
    paired_ade: bool,
) -> Result<TrajectoryReport, EvalError> {
    let mut rows = Vec::with_capacity(metric_order.len());
    for &metric in metric_order {
        let pr: PrecisionRecall = metrics::precision_recall(real, gen, k, metric)?;
        rows.push(PrecisionRecallRow {
            metric,
            precision: pr.precision,
            recall: pr.recall,
        });
    }
    let paired = if paired_ade {
        if real.len() != gen.len() {
            return Err(EvalError::Metrics(MetricsError::LengthMismatch {
                left: real.len(),
                right: gen.len(),
            }));
        }
        let mut sum = 0.0;
        for (r, g) in real.paths.iter().zip(&gen.paths) {
            sum += metrics::ade(r, g)
                .map_err(EvalError::Metrics)?
                .to_f64()
                .unwrap();
        }
        Some(sum / real.len() as f64)
    } else {
        None
    };
    Ok(TrajectoryReport {
        real_label: real.label.clone(),
        gen_label: gen.label.clone(),
        real_count: real.len(),
        gen_count: gen.len(),
        k,
        canonicalize,
        rows,
        paired_ade: paired,
    })
}

/// Default metric column order: Fréchet before ADE.
pub fn default_metric_order() -> Vec<TrajectoryMetric> {
    vec![TrajectoryMetric::Frechet, TrajectoryMetric::Ade]
}

/// Full evaluation report: a stable, versioned document echoing every
/// configurable parameter that affects the numbers.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub report_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectoryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_scores: Option<Vec<WindowScore>>,
}

/// Provenance of one input file.
#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl Report {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            report_version: REPORT_VERSION,
            generated_at: None,
            config,
            inputs: Vec::new(),
            trajectory: None,
            window_scores: None,
        }
    }

    /// Serialize with a stable field order so byte-level diffs are
    /// meaningful.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Flat CSV of per-window scores: `start_seconds,start_frame,end_frame,value`.
pub fn window_scores_csv(scores: &[WindowScore]) -> String {
    let mut out = String::from("start_seconds,start_frame,end_frame,value\n");
    for s in scores {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.start_seconds, s.start_frame, s.end_frame, s.value
        ));
    }
    out
}
