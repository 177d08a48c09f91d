//! Trajectories as timestamped SE(3) pose sequences: planar projection,
//! canonical alignment, yaw-rate extraction, turn-event classification, and
//! rate resampling.

use thiserror::Error;

use crate::scalar::{cast, Scalar};

/// Row-major 3×3 rotation matrix.
pub type Mat3<T> = [[T; 3]; 3];
/// 3-vector, meters.
pub type Vec3<T> = [T; 3];
/// Planar point, meters.
pub type Point2<T> = [T; 2];

/// Yaw-rate threshold (rad/s) above which the start of a drive counts as a
/// turn event.
pub const DEFAULT_TURN_THRESHOLD_RAD_PER_S: f64 = 0.12;

/// Tolerance for rotation orthonormality and quaternion norm checks.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Displacement below which a trajectory has no usable initial heading.
pub const HEADING_EPSILON_M: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("degenerate trajectory: all points coincide within {threshold} m")]
    DegenerateTrajectory { threshold: f64 },
    #[error("frame index {index} out of range for sequence of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid resample rate {rate}: {reason}")]
    InvalidRate { rate: f64, reason: String },
}

/// One SE(3) extrinsic: orientation plus position in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    pub rotation: Mat3<T>,
    pub position: Vec3<T>,
}

impl<T: Scalar> Pose<T> {
    /// Build a pose, rejecting rotation blocks that are not orthonormal with
    /// determinant +1 within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Mat3<T>, position: Vec3<T>) -> Result<Self, TrajectoryError> {
        validate_rotation(&rotation)?;
        for c in position {
            if !c.is_finite() {
                return Err(TrajectoryError::InvalidPose(
                    "non-finite position component".into(),
                ));
            }
        }
        Ok(Self { rotation, position })
    }

    pub fn identity() -> Self {
        Self::from_yaw(T::zero(), [T::zero(); 3])
    }

    /// Pose rotated by `yaw` about the world vertical (z) axis.
    pub fn from_yaw(yaw: T, position: Vec3<T>) -> Self {
        Self {
            rotation: rotation_z(yaw),
            position,
        }
    }

    /// Heading about the world vertical axis: `atan2(R[1][0], R[0][0])`.
    ///
    /// Assumes a z-up world with the body-frame forward axis mapped to +x.
    pub fn yaw(&self) -> T {
        self.rotation[1][0].atan2(self.rotation[0][0])
    }

    /// Rotation as a unit quaternion `(w, x, y, z)`.
    pub fn to_quaternion(&self) -> [T; 4] {
        mat3_to_quat(&self.rotation)
    }

    /// Build from a quaternion `(w, x, y, z)`; the quaternion is normalized
    /// before conversion, so callers needing strict norm validation must
    /// check it first.
    pub fn from_quaternion(quat: [T; 4], position: Vec3<T>) -> Result<Self, TrajectoryError> {
        let norm = quat.iter().fold(T::zero(), |a, &c| a + c * c).sqrt();
        if norm < cast(1e-12) {
            return Err(TrajectoryError::InvalidPose("zero quaternion".into()));
        }
        let q = [
            quat[0] / norm,
            quat[1] / norm,
            quat[2] / norm,
            quat[3] / norm,
        ];
        Self::new(quat_to_mat3(&q), position)
    }
}

/// Ordered pose sequence with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence<T> {
    sample_rate: T,
    poses: Vec<Pose<T>>,
    timestamps: Vec<T>,
}

impl<T: Scalar> PoseSequence<T> {
    pub fn new(
        sample_rate: T,
        poses: Vec<Pose<T>>,
        timestamps: Vec<T>,
    ) -> Result<Self, TrajectoryError> {
        if !(sample_rate.is_finite() && sample_rate > T::zero()) {
            return Err(TrajectoryError::InvalidSequence(format!(
                "sample rate must be positive, got {}",
                sample_rate
            )));
        }
        if poses.len() < 2 {
            return Err(TrajectoryError::InvalidSequence(format!(
                "need at least 2 poses, got {}",
                poses.len()
            )));
        }
        if poses.len() != timestamps.len() {
            return Err(TrajectoryError::InvalidSequence(format!(
                "{} poses but {} timestamps",
                poses.len(),
                timestamps.len()
            )));
        }
        for pair in timestamps.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(TrajectoryError::InvalidSequence(
                    "timestamps must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self {
            sample_rate,
            poses,
            timestamps,
        })
    }

    /// Sequence sampled uniformly at `sample_rate`, timestamps `i / rate`.
    pub fn uniform(sample_rate: T, poses: Vec<Pose<T>>) -> Result<Self, TrajectoryError> {
        let timestamps = (0..poses.len())
            .map(|i| cast::<T>(i as f64) / sample_rate)
            .collect();
        Self::new(sample_rate, poses, timestamps)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 2 by construction
    }

    pub fn sample_rate(&self) -> T {
        self.sample_rate
    }

    pub fn poses(&self) -> &[Pose<T>] {
        &self.poses
    }

    pub fn timestamps(&self) -> &[T] {
        &self.timestamps
    }

    pub fn pose(&self, index: usize) -> &Pose<T> {
        &self.poses[index]
    }

    /// True when the timestamp spacing matches `1 / sample_rate` within
    /// 1e-6 s everywhere.
    pub fn is_uniform(&self) -> bool {
        let dt = T::one() / self.sample_rate;
        let tol = cast::<T>(1e-6);
        self.timestamps
            .windows(2)
            .all(|p| ((p[1] - p[0]) - dt).abs() <= tol)
    }

    /// Drop the z component of every position, keeping order and rate.
    pub fn planar_project(&self) -> PlanarPath<T> {
        let points = self
            .poses
            .iter()
            .map(|p| [p.position[0], p.position[1]])
            .collect();
        PlanarPath {
            points,
            sample_rate: self.sample_rate,
        }
    }

    /// Rigidly move the sequence so the first position sits at the origin and
    /// the initial travel direction points along +x.
    ///
    /// The initial direction is taken from the first point whose planar
    /// displacement from the start exceeds [`HEADING_EPSILON_M`].
    pub fn canonicalized(&self) -> Result<Self, TrajectoryError> {
        let origin = self.poses[0].position;
        let theta = initial_heading(
            self.poses
                .iter()
                .map(|p| [p.position[0] - origin[0], p.position[1] - origin[1]]),
        )?;
        let rot = rotation_z(-theta);
        let poses = self
            .poses
            .iter()
            .map(|p| {
                let rel = [
                    p.position[0] - origin[0],
                    p.position[1] - origin[1],
                    p.position[2] - origin[2],
                ];
                Pose {
                    rotation: mat_mul(&rot, &p.rotation),
                    position: mat_vec(&rot, &rel),
                }
            })
            .collect();
        Self::new(self.sample_rate, poses, self.timestamps.clone())
    }

    /// Heading change per second between `frame_index` and the next frame,
    /// with the yaw difference wrapped to `(-pi, pi]`.
    pub fn yaw_rate(&self, frame_index: usize) -> Result<T, TrajectoryError> {
        if frame_index + 1 >= self.len() {
            return Err(TrajectoryError::IndexOutOfRange {
                index: frame_index,
                len: self.len(),
            });
        }
        let dyaw = wrap_angle(self.poses[frame_index + 1].yaw() - self.poses[frame_index].yaw());
        let dt = self.timestamps[frame_index + 1] - self.timestamps[frame_index];
        Ok(dyaw / dt)
    }

    /// True when the yaw rate at frame 0 is at least `threshold` in absolute
    /// value (boundary inclusive).
    pub fn is_turn_event(&self, threshold: T) -> bool {
        let rate = self.yaw_rate(0).expect("sequence has at least two frames");
        rate.abs() >= threshold
    }

    /// Change the sample rate. When the source rate is an integer multiple of
    /// `target_hz` the sequence is decimated (every k-th pose kept); otherwise
    /// positions are interpolated linearly and rotations spherically at the
    /// new sample times.
    pub fn resample(&self, target_hz: T) -> Result<Self, TrajectoryError> {
        check_rate(target_hz)?;
        let ratio = (self.sample_rate / target_hz).to_f64().unwrap();
        if ratio >= 1.0 - 1e-9 && (ratio - ratio.round()).abs() <= 1e-9 {
            return self.decimate(target_hz);
        }
        self.interpolate_to(target_hz)
    }

    /// Keep every k-th pose where `k = sample_rate / target_hz` must be a
    /// positive integer.
    pub fn decimate(&self, target_hz: T) -> Result<Self, TrajectoryError> {
        check_rate(target_hz)?;
        if target_hz > self.sample_rate {
            return Err(TrajectoryError::InvalidRate {
                rate: target_hz.to_f64().unwrap(),
                reason: "exceeds source rate in decimation mode".into(),
            });
        }
        let ratio = (self.sample_rate / target_hz).to_f64().unwrap();
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(TrajectoryError::InvalidRate {
                rate: target_hz.to_f64().unwrap(),
                reason: "does not divide the source rate".into(),
            });
        }
        let stride = ratio.round() as usize;
        let poses: Vec<_> = self.poses.iter().copied().step_by(stride).collect();
        let timestamps: Vec<_> = self.timestamps.iter().copied().step_by(stride).collect();
        Self::new(target_hz, poses, timestamps)
    }

    fn interpolate_to(&self, target_hz: T) -> Result<Self, TrajectoryError> {
        let t0 = self.timestamps[0];
        let t_end = *self.timestamps.last().unwrap();
        let dt = T::one() / target_hz;
        let eps = cast::<T>(1e-9);

        let mut poses = Vec::new();
        let mut timestamps = Vec::new();
        let mut j = 0usize;
        loop {
            let t = t0 + cast::<T>(j as f64) * dt;
            if t > t_end + eps {
                break;
            }
            let t = if t > t_end { t_end } else { t };
            poses.push(self.pose_at(t));
            timestamps.push(t);
            j += 1;
        }
        if poses.len() < 2 {
            return Err(TrajectoryError::InvalidRate {
                rate: target_hz.to_f64().unwrap(),
                reason: "fewer than 2 frames after resampling".into(),
            });
        }
        Self::new(target_hz, poses, timestamps)
    }

    fn pose_at(&self, t: T) -> Pose<T> {
        let mut hi = match self
            .timestamps
            .binary_search_by(|ts| ts.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.poses[i],
            Err(i) => i,
        };
        if hi == 0 {
            hi = 1;
        }
        if hi >= self.len() {
            hi = self.len() - 1;
        }
        let lo = hi - 1;
        let span = self.timestamps[hi] - self.timestamps[lo];
        let alpha = ((t - self.timestamps[lo]) / span)
            .max(T::zero())
            .min(T::one());
        let a = &self.poses[lo];
        let b = &self.poses[hi];
        let position = [
            a.position[0] + (b.position[0] - a.position[0]) * alpha,
            a.position[1] + (b.position[1] - a.position[1]) * alpha,
            a.position[2] + (b.position[2] - a.position[2]) * alpha,
        ];
        let q = quat_slerp(&a.to_quaternion(), &b.to_quaternion(), alpha);
        Pose {
            rotation: quat_to_mat3(&q),
            position,
        }
    }
}

/// Ordered 2D positions (meters) at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarPath<T> {
    points: Vec<Point2<T>>,
    sample_rate: T,
}

impl<T: Scalar> PlanarPath<T> {
    pub fn new(points: Vec<Point2<T>>, sample_rate: T) -> Result<Self, TrajectoryError> {
        if !(sample_rate.is_finite() && sample_rate > T::zero()) {
            return Err(TrajectoryError::InvalidPath(format!(
                "sample rate must be positive, got {}",
                sample_rate
            )));
        }
        if points.len() < 2 {
            return Err(TrajectoryError::InvalidPath(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points
            .iter()
            .any(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(TrajectoryError::InvalidPath("non-finite coordinate".into()));
        }
        Ok(Self {
            points,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 2 by construction
    }

    pub fn points(&self) -> &[Point2<T>] {
        &self.points
    }

    pub fn sample_rate(&self) -> T {
        self.sample_rate
    }

    /// Rigidly move the path so it starts at the origin heading +x; see
    /// [`PoseSequence::canonicalized`].
    pub fn canonicalized(&self) -> Result<Self, TrajectoryError> {
        let origin = self.points[0];
        let theta = initial_heading(
            self.points
                .iter()
                .map(|p| [p[0] - origin[0], p[1] - origin[1]]),
        )?;
        let (sin, cos) = (-theta).sin_cos();
        let points = self
            .points
            .iter()
            .map(|p| {
                let x = p[0] - origin[0];
                let y = p[1] - origin[1];
                [cos * x - sin * y, sin * x + cos * y]
            })
            .collect();
        Self::new(points, self.sample_rate)
    }

    /// Linearly resample to exactly `count` points, keeping both endpoints.
    pub fn resampled_to_count(&self, count: usize) -> Result<Self, TrajectoryError> {
        if count < 2 {
            return Err(TrajectoryError::InvalidPath(
                "resample target below 2 points".into(),
            ));
        }
        if count == self.len() {
            return Ok(self.clone());
        }
        let n = self.len();
        let scale = (n - 1) as f64 / (count - 1) as f64;
        let points = (0..count)
            .map(|j| {
                let s = j as f64 * scale;
                let lo = (s.floor() as usize).min(n - 2);
                let alpha = cast::<T>(s - lo as f64);
                let a = self.points[lo];
                let b = self.points[lo + 1];
                [a[0] + (b[0] - a[0]) * alpha, a[1] + (b[1] - a[1]) * alpha]
            })
            .collect();
        // Same duration, different count.
        let rate = self.sample_rate * cast::<T>((count - 1) as f64 / (n - 1) as f64);
        Self::new(points, rate)
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle<T: Scalar>(angle: T) -> T {
    let pi = cast::<T>(std::f64::consts::PI);
    let two_pi = pi + pi;
    let mut a = angle % two_pi;
    if a > pi {
        a -= two_pi;
    } else if a <= -pi {
        a += two_pi;
    }
    a
}

fn check_rate<T: Scalar>(rate: T) -> Result<(), TrajectoryError> {
    if !(rate.is_finite() && rate > T::zero()) {
        return Err(TrajectoryError::InvalidRate {
            rate: rate.to_f64().unwrap_or(f64::NAN),
            reason: "rate must be positive and finite".into(),
        });
    }
    Ok(())
}

fn initial_heading<T: Scalar>(
    displacements: impl Iterator<Item = Point2<T>>,
) -> Result<T, TrajectoryError> {
    let eps = cast::<T>(HEADING_EPSILON_M);
    for d in displacements {
        if (d[0] * d[0] + d[1] * d[1]).sqrt() > eps {
            return Ok(d[1].atan2(d[0]));
        }
    }
    Err(TrajectoryError::DegenerateTrajectory {
        threshold: HEADING_EPSILON_M,
    })
}

fn validate_rotation<T: Scalar>(r: &Mat3<T>) -> Result<(), TrajectoryError> {
    let tol = cast::<T>(ROTATION_TOLERANCE);
    for row in r {
        for &e in row {
            if !e.is_finite() {
                return Err(TrajectoryError::InvalidPose(
                    "non-finite rotation entry".into(),
                ));
            }
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let dot = (0..3).fold(T::zero(), |a, k| a + r[i][k] * r[j][k]);
            let expect = if i == j { T::one() } else { T::zero() };
            if (dot - expect).abs() > tol {
                return Err(TrajectoryError::InvalidPose(
                    "rotation block not orthonormal".into(),
                ));
            }
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    if (det - T::one()).abs() > tol {
        return Err(TrajectoryError::InvalidPose(
            "rotation determinant is not +1".into(),
        ));
    }
    Ok(())
}

/// Rotation by `angle` about the world z axis.
pub fn rotation_z<T: Scalar>(angle: T) -> Mat3<T> {
    let (s, c) = angle.sin_cos();
    [
        [c, -s, T::zero()],
        [s, c, T::zero()],
        [T::zero(), T::zero(), T::one()],
    ]
}

pub(crate) fn mat_mul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).fold(T::zero(), |acc, k| acc + a[i][k] * b[k][j]);
        }
    }
    out
}

pub(crate) fn mat_vec<T: Scalar>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Shepperd's method, returning `(w, x, y, z)` with `w >= 0`.
fn mat3_to_quat<T: Scalar>(r: &Mat3<T>) -> [T; 4] {
    let quarter = cast::<T>(0.25);
    let two = cast::<T>(2.0);
    let trace = r[0][0] + r[1][1] + r[2][2];
    let mut q;
    if trace > T::zero() {
        let s = (trace + T::one()).sqrt() * two;
        q = [
            quarter * s,
            (r[2][1] - r[1][2]) / s,
            (r[0][2] - r[2][0]) / s,
            (r[1][0] - r[0][1]) / s,
        ];
    } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
        let s = (T::one() + r[0][0] - r[1][1] - r[2][2]).sqrt() * two;
        q = [
            (r[2][1] - r[1][2]) / s,
            quarter * s,
            (r[0][1] + r[1][0]) / s,
            (r[0][2] + r[2][0]) / s,
        ];
    } else if r[1][1] > r[2][2] {
        let s = (T::one() + r[1][1] - r[0][0] - r[2][2]).sqrt() * two;
        q = [
            (r[0][2] - r[2][0]) / s,
            (r[0][1] + r[1][0]) / s,
            quarter * s,
            (r[1][2] + r[2][1]) / s,
        ];
    } else {
        let s = (T::one() + r[2][2] - r[0][0] - r[1][1]).sqrt() * two;
        q = [
            (r[1][0] - r[0][1]) / s,
            (r[0][2] + r[2][0]) / s,
            (r[1][2] + r[2][1]) / s,
            quarter * s,
        ];
    }
    if q[0] < T::zero() {
        for c in &mut q {
            *c = -*c;
        }
    }
    let norm = q.iter().fold(T::zero(), |a, &c| a + c * c).sqrt();
    [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm]
}

fn quat_to_mat3<T: Scalar>(q: &[T; 4]) -> Mat3<T> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let two = cast::<T>(2.0);
    [
        [
            T::one() - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
        ],
        [
            two * (x * y + w * z),
            T::one() - two * (x * x + z * z),
            two * (y * z - w * x),
        ],
        [
            two * (x * z - w * y),
            two * (y * z + w * x),
            T::one() - two * (x * x + y * y),
        ],
    ]
}

/// Spherical linear interpolation between unit quaternions, falling back to a
/// normalized lerp when the arc is too small for a stable sine division.
fn quat_slerp<T: Scalar>(a: &[T; 4], b: &[T; 4], alpha: T) -> [T; 4] {
    let mut dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
    let mut b = *b;
    if dot < T::zero() {
        for c in &mut b {
            *c = -*c;
        }
        dot = -dot;
    }
    let (wa, wb) = if dot > cast::<T>(1.0 - 1e-9) {
        (T::one() - alpha, alpha)
    } else {
        let theta = dot.min(T::one()).acos();
        let sin_theta = theta.sin();
        (
            ((T::one() - alpha) * theta).sin() / sin_theta,
            (alpha * theta).sin() / sin_theta,
        )
    };
    let q = [
        wa * a[0] + wb * b[0],
        wa * a[1] + wb * b[1],
        wa * a[2] + wb * b[2],
        wa * a[3] + wb * b[3],
    ];
    let norm = q.iter().fold(T::zero(), |acc, &c| acc + c * c).sqrt();
    [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm]
}
