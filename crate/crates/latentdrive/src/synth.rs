//! Seeded synthetic trajectory generation via a planar unicycle model, with
//! behavior presets reproducing common generation failure modes (premature
//! stop, lateral drift, jitter) for metric validation and demo data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::metrics::TrajectorySet;
use crate::scalar::{cast, Scalar};
use crate::trajectory::{Pose, PoseSequence, TrajectoryError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid preset: {0}")]
    InvalidPreset(String),
    #[error("duration {duration}s at {rate}Hz yields fewer than 2 frames")]
    TooShort { duration: f64, rate: f64 },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Which motion pattern a preset produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BehaviorKind {
    /// Constant speed, fixed heading.
    Straight,
    /// Constant speed and yaw rate: a circle of radius v/ω.
    ConstantTurn,
    /// Drives normally, then freezes in place from `stop_time` on.
    PrematureStop,
    /// Translates sideways along the heading normal while the heading
    /// itself keeps turning normally.
    LateralSlide,
    /// Gaussian observation noise on every emitted position.
    Jitter,
}

/// Kinematic parameters of one synthetic behavior.
///
/// `yaw_rate` applies to every kind (zero for a straight drive), so the
/// failure-mode presets can corrupt turning maneuvers, not just straight
/// ones. `stop_time`, `slide_rate`, and `jitter_std` only take effect for
/// their respective kinds.
#[derive(Debug, Clone, Copy)]
pub struct BehaviorPreset<T> {
    pub kind: BehaviorKind,
    pub speed: T,
    pub yaw_rate: T,
    pub stop_time: T,
    pub slide_rate: T,
    pub jitter_std: T,
}

impl<T: Scalar> BehaviorPreset<T> {
    pub fn straight(speed: T) -> Self {
        Self {
            kind: BehaviorKind::Straight,
            speed,
            yaw_rate: T::zero(),
            stop_time: T::zero(),
            slide_rate: T::zero(),
            jitter_std: T::zero(),
        }
    }

    pub fn constant_turn(speed: T, yaw_rate: T) -> Self {
        Self {
            kind: BehaviorKind::ConstantTurn,
            yaw_rate,
            ..Self::straight(speed)
        }
    }

    pub fn premature_stop(speed: T, yaw_rate: T, stop_time: T) -> Self {
        Self {
            kind: BehaviorKind::PrematureStop,
            yaw_rate,
            stop_time,
            ..Self::straight(speed)
        }
    }

    pub fn lateral_slide(speed: T, yaw_rate: T, slide_rate: T) -> Self {
        Self {
            kind: BehaviorKind::LateralSlide,
            yaw_rate,
            slide_rate,
            ..Self::straight(speed)
        }
    }

    pub fn jitter(speed: T, yaw_rate: T, jitter_std: T) -> Self {
        Self {
            kind: BehaviorKind::Jitter,
            yaw_rate,
            jitter_std,
            ..Self::straight(speed)
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.speed.is_finite() && self.speed >= T::zero()) {
            return Err(SynthError::InvalidPreset(format!(
                "speed {} must be non-negative",
                self.speed
            )));
        }
        if !(self.jitter_std.is_finite() && self.jitter_std >= T::zero()) {
            return Err(SynthError::InvalidPreset(format!(
                "jitter std {} must be non-negative",
                self.jitter_std
            )));
        }
        if !self.yaw_rate.is_finite() {
            return Err(SynthError::InvalidPreset("non-finite yaw rate".into()));
        }
        Ok(())
    }
}

/// Unicycle integrator state.
#[derive(Debug, Clone, Copy)]
pub struct KinematicState<T> {
    pub position: [T; 2],
    pub heading: T,
    pub speed: T,
}

/// Per-parameter half-widths for uniform preset perturbation in
/// [`gen_sequences`]; values of zero leave a parameter fixed.
#[derive(Debug, Clone, Copy)]
pub struct ParamSpread<T> {
    pub speed: T,
    pub yaw_rate: T,
    pub stop_time: T,
    pub slide_rate: T,
    pub jitter_std: T,
}

impl<T: Scalar> Default for ParamSpread<T> {
    fn default() -> Self {
        Self {
            speed: T::zero(),
            yaw_rate: T::zero(),
            stop_time: T::zero(),
            slide_rate: T::zero(),
            jitter_std: T::zero(),
        }
    }
}

impl<T: Scalar> ParamSpread<T> {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with_speed(mut self, spread: T) -> Self {
        self.speed = spread;
        self
    }

    pub fn with_yaw_rate(mut self, spread: T) -> Self {
        self.yaw_rate = spread;
        self
    }
}

/// Integrate one trajectory at `rate` Hz for `duration` seconds (first pose
/// at t = 0, so `duration·rate + 1` frames).
///
/// Explicit Euler at the sample step: heading updates before position, the
/// premature-stop modifier zeroes speed from `stop_time` on, lateral slide
/// translates along the heading normal without touching the heading, and
/// jitter adds observation noise to the emitted positions only (the
/// integrator state stays clean).
pub fn gen_trajectory<T: Scalar, R: Rng + ?Sized>(
    preset: &BehaviorPreset<T>,
    duration: f64,
    rate: f64,
    rng: &mut R,
) -> Result<PoseSequence<T>, SynthError> {
    preset.validate()?;
    let frames = (duration * rate).round() as i64;
    if frames < 1 || !(rate > 0.0) {
        return Err(SynthError::TooShort { duration, rate });
    }
    let frames = frames as usize + 1;
    let dt = T::one() / cast::<T>(rate);

    let mut state = KinematicState {
        position: [T::zero(), T::zero()],
        heading: T::zero(),
        speed: preset.speed,
    };
    let mut poses = Vec::with_capacity(frames);
    poses.push(emit_pose(preset, &state, rng));
    for i in 1..frames {
        let t = cast::<T>(i as f64) * dt;
        if preset.kind == BehaviorKind::PrematureStop && t >= preset.stop_time {
            state.speed = T::zero();
        }
        state.heading += preset.yaw_rate * dt;
        let (sin_h, cos_h) = state.heading.sin_cos();
        state.position[0] += state.speed * dt * cos_h;
        state.position[1] += state.speed * dt * sin_h;
        if preset.kind == BehaviorKind::LateralSlide {
            state.position[0] += preset.slide_rate * dt * -sin_h;
            state.position[1] += preset.slide_rate * dt * cos_h;
        }
        poses.push(emit_pose(preset, &state, rng));
    }
    Ok(PoseSequence::uniform(cast::<T>(rate), poses)?)
}

fn emit_pose<T: Scalar, R: Rng + ?Sized>(
    preset: &BehaviorPreset<T>,
    state: &KinematicState<T>,
    rng: &mut R,
) -> Pose<T> {
    let mut position = [state.position[0], state.position[1], T::zero()];
    if preset.kind == BehaviorKind::Jitter && preset.jitter_std > T::zero() {
        position[0] += T::standard_normal(rng) * preset.jitter_std;
        position[1] += T::standard_normal(rng) * preset.jitter_std;
    }
    Pose::from_yaw(state.heading, position)
}

/// Generate `n` pose sequences with per-trajectory parameters drawn
/// uniformly within `spread` of the preset values.
///
/// Each trajectory runs on its own rng seeded from a u64 drawn up front
/// from `rng`, so members are independent and could be generated
/// concurrently without changing the output.
pub fn gen_sequences<T: Scalar, R: Rng + ?Sized>(
    preset: &BehaviorPreset<T>,
    n: usize,
    duration: f64,
    rate: f64,
    rng: &mut R,
    spread: &ParamSpread<T>,
) -> Result<Vec<PoseSequence<T>>, SynthError> {
    preset.validate()?;
    let mut jittered_presets = Vec::with_capacity(n);
    let mut child_seeds = Vec::with_capacity(n);
    for _ in 0..n {
        let mut p = *preset;
        p.speed = perturb(rng, preset.speed, spread.speed).max(T::zero());
        p.yaw_rate = perturb(rng, preset.yaw_rate, spread.yaw_rate);
        p.stop_time = perturb(rng, preset.stop_time, spread.stop_time).max(T::zero());
        p.slide_rate = perturb(rng, preset.slide_rate, spread.slide_rate);
        p.jitter_std = perturb(rng, preset.jitter_std, spread.jitter_std).max(T::zero());
        jittered_presets.push(p);
        child_seeds.push(rng.gen::<u64>());
    }
    jittered_presets
        .iter()
        .zip(child_seeds)
        .map(|(p, seed)| {
            let mut child = ChaCha8Rng::seed_from_u64(seed);
            gen_trajectory(p, duration, rate, &mut child)
        })
        .collect()
}

/// Like [`gen_sequences`], projected to a labeled planar trajectory set.
pub fn gen_set<T: Scalar, R: Rng + ?Sized>(
    preset: &BehaviorPreset<T>,
    n: usize,
    duration: f64,
    rate: f64,
    rng: &mut R,
    spread: &ParamSpread<T>,
    label: impl Into<String>,
) -> Result<TrajectorySet<T>, SynthError> {
    let paths = gen_sequences(preset, n, duration, rate, rng, spread)?
        .iter()
        .map(|seq| seq.planar_project())
        .collect();
    Ok(TrajectorySet::new(label, paths))
}

fn perturb<T: Scalar, R: Rng + ?Sized>(rng: &mut R, base: T, spread: T) -> T {
    if spread <= T::zero() {
        return base;
    }
    T::uniform(rng, base - spread, base + spread)
}
