//! Text trajectory files (matrix and quaternion flavors) and JSONL rollout
//! dumps.
//!
//! Trajectory files are line-oriented: a header declaring flavor, sample
//! rate, and frame count, then one record per frame. Floats are written with
//! Rust's shortest round-trip formatting, so save/load reproduces values
//! exactly.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantizer::{LatentGrid, TokenGrid};
use crate::rollout::FrameLatent;
use crate::scalar::{cast, Scalar};
use crate::trajectory::{Mat3, Pose, PoseSequence, TrajectoryError, ROTATION_TOLERANCE};

/// File extension for trajectory files.
pub const TRAJECTORY_EXTENSION: &str = "traj";
/// Header keyword of the trajectory format.
pub const TRAJECTORY_HEADER_TAG: &str = "trajfile";
/// Trajectory format version.
pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {reason}")]
    Parse {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("{file}: declared rate {declared} Hz inconsistent with timestamps")]
    InconsistentRate { file: String, declared: f64 },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// How each record encodes the pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    /// `t` plus 16 row-major extrinsic-matrix floats.
    Matrix,
    /// `t x y z qw qx qy qz` with a unit quaternion.
    Quat,
}

impl Flavor {
    fn as_str(&self) -> &'static str {
        match self {
            Flavor::Matrix => "matrix",
            Flavor::Quat => "quat",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "matrix" => Some(Flavor::Matrix),
            "quat" => Some(Flavor::Quat),
            _ => None,
        }
    }
}

impl std::fmt::Display for Flavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

/// Write one pose sequence in the chosen flavor.
pub fn save_pose_sequence<T: Scalar>(
    path: &Path,
    seq: &PoseSequence<T>,
    flavor: Flavor,
) -> Result<(), IoError> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write_pose_sequence(&mut w, seq, flavor)
}

pub fn write_pose_sequence<T: Scalar, W: Write>(
    w: &mut W,
    seq: &PoseSequence<T>,
    flavor: Flavor,
) -> Result<(), IoError> {
    writeln!(
        w,
        "{} v{} {} rate={} frames={}",
        TRAJECTORY_HEADER_TAG,
        TRAJECTORY_FORMAT_VERSION,
        flavor,
        seq.sample_rate().to_f64().unwrap(),
        seq.len()
    )?;
    for (pose, &t) in seq.poses().iter().zip(seq.timestamps()) {
        let t = t.to_f64().unwrap();
        match flavor {
            Flavor::Matrix => {
                write!(w, "{t}")?;
                // Row-major 4x4 extrinsic: [R p; 0 1].
                for row in 0..3 {
                    for col in 0..3 {
                        write!(w, " {}", pose.rotation[row][col].to_f64().unwrap())?;
                    }
                    write!(w, " {}", pose.position[row].to_f64().unwrap())?;
                }
                writeln!(w, " 0 0 0 1")?;
            }
            Flavor::Quat => {
                let q = pose.to_quaternion();
                writeln!(
                    w,
                    "{t} {} {} {} {} {} {} {}",
                    pose.position[0].to_f64().unwrap(),
                    pose.position[1].to_f64().unwrap(),
                    pose.position[2].to_f64().unwrap(),
                    q[0].to_f64().unwrap(),
                    q[1].to_f64().unwrap(),
                    q[2].to_f64().unwrap(),
                    q[3].to_f64().unwrap(),
                )?;
            }
        }
    }
    Ok(())
}

/// Read one pose sequence, returning it with the flavor the header declared.
pub fn load_pose_sequence<T: Scalar>(path: &Path) -> Result<(PoseSequence<T>, Flavor), IoError> {
    let file = fs::File::open(path)?;
    read_pose_sequence(BufReader::new(file), &path.display().to_string())
}

pub fn read_pose_sequence<T: Scalar, R: Read>(
    r: R,
    file_name: &str,
) -> Result<(PoseSequence<T>, Flavor), IoError> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| IoError::Parse {
        file: file_name.into(),
        line: 1,
        reason: "empty file".into(),
    })?;
    let header = header?;
    let (flavor, rate, frames) = parse_header(&header, file_name)?;

    let mut poses = Vec::with_capacity(frames);
    let mut timestamps = Vec::with_capacity(frames);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| IoError::Parse {
                    file: file_name.into(),
                    line: line_no,
                    reason: format!("bad float {tok:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        let (t, pose) = parse_record::<T>(flavor, &fields, file_name, line_no)?;
        timestamps.push(t);
        poses.push(pose);
    }
    if poses.len() != frames {
        return Err(IoError::Parse {
            file: file_name.into(),
            line: poses.len() + 1,
            reason: format!("header declares {frames} frames, found {}", poses.len()),
        });
    }
    let seq = PoseSequence::new(cast::<T>(rate), poses, timestamps)?;
    if !seq.is_uniform() {
        return Err(IoError::InconsistentRate {
            file: file_name.into(),
            declared: rate,
        });
    }
    Ok((seq, flavor))
}

fn parse_header(header: &str, file_name: &str) -> Result<(Flavor, f64, usize), IoError> {
    let fail = |reason: String| IoError::Parse {
        file: file_name.into(),
        line: 1,
        reason,
    };
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 5 || tokens[0] != TRAJECTORY_HEADER_TAG {
        return Err(fail(format!(
            "expected '{TRAJECTORY_HEADER_TAG} v{TRAJECTORY_FORMAT_VERSION} <flavor> rate=<hz> frames=<n>'"
        )));
    }
    if tokens[1] != format!("v{TRAJECTORY_FORMAT_VERSION}") {
        return Err(fail(format!("unsupported version {}", tokens[1])));
    }
    let flavor = Flavor::parse(tokens[2])
        .ok_or_else(|| fail(format!("unknown flavor {:?}", tokens[2])))?;
    let rate = tokens[3]
        .strip_prefix("rate=")
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| fail(format!("bad rate field {:?}", tokens[3])))?;
    let frames = tokens[4]
        .strip_prefix("frames=")
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| fail(format!("bad frames field {:?}", tokens[4])))?;
    Ok((flavor, rate, frames))
}

fn parse_record<T: Scalar>(
    flavor: Flavor,
    fields: &[f64],
    file_name: &str,
    line_no: usize,
) -> Result<(T, Pose<T>), IoError> {
    let fail = |reason: String| IoError::Parse {
        file: file_name.into(),
        line: line_no,
        reason,
    };
    match flavor {
        Flavor::Matrix => {
            if fields.len() != 17 {
                return Err(fail(format!(
                    "matrix record needs 17 fields (t + 16), got {}",
                    fields.len()
                )));
            }
            let t = fields[0];
            let m = &fields[1..];
            let mut rotation: Mat3<T> = [[T::zero(); 3]; 3];
            let mut position = [T::zero(); 3];
            for row in 0..3 {
                for col in 0..3 {
                    rotation[row][col] = cast(m[row * 4 + col]);
                }
                position[row] = cast(m[row * 4 + 3]);
            }
            let bottom = &m[12..16];
            if bottom != [0.0, 0.0, 0.0, 1.0] {
                return Err(fail("bottom row of extrinsic must be 0 0 0 1".into()));
            }
            let pose = Pose::new(rotation, position)
                .map_err(|e| fail(format!("invalid extrinsic: {e}")))?;
            Ok((cast(t), pose))
        }
        Flavor::Quat => {
            if fields.len() != 8 {
                return Err(fail(format!(
                    "quat record needs 8 fields (t x y z qw qx qy qz), got {}",
                    fields.len()
                )));
            }
            let t = fields[0];
            let position = [cast(fields[1]), cast(fields[2]), cast(fields[3])];
            let q = [fields[4], fields[5], fields[6], fields[7]];
            let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > ROTATION_TOLERANCE {
                return Err(fail(format!("quaternion norm {norm} not unit")));
            }
            let pose = Pose::from_quaternion(
                [cast(q[0]), cast(q[1]), cast(q[2]), cast(q[3])],
                position,
            )
            .map_err(|e| fail(format!("invalid quaternion: {e}")))?;
            Ok((cast(t), pose))
        }
    }
}

/// Load every `.traj` file under a directory (or the single file given),
/// sorted lexicographically by file name for determinism.
///
/// `expected_flavor` rejects files whose header declares something else;
/// `None` accepts either flavor.
pub fn load_trajectories<T: Scalar>(
    dir_or_file: &Path,
    expected_flavor: Option<Flavor>,
) -> Result<Vec<(PathBuf, PoseSequence<T>)>, IoError> {
    let mut files: Vec<PathBuf> = if dir_or_file.is_dir() {
        fs::read_dir(dir_or_file)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .map(|e| e == TRAJECTORY_EXTENSION)
                        .unwrap_or(false)
            })
            .collect()
    } else {
        vec![dir_or_file.to_path_buf()]
    };
    files.sort();

    let mut out = Vec::with_capacity(files.len());
    for path in files {
        let (seq, flavor) = load_pose_sequence::<T>(&path)?;
        if let Some(expected) = expected_flavor {
            if flavor != expected {
                return Err(IoError::Parse {
                    file: path.display().to_string(),
                    line: 1,
                    reason: format!("expected flavor {expected}, file declares {flavor}"),
                });
            }
        }
        out.push((path, seq));
    }
    Ok(out)
}

/// One line of a rollout dump: a frame of continuous latents or discrete
/// tokens with its index and shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DumpRecord {
    Latent {
        frame: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    },
    Tokens {
        frame: usize,
        height: usize,
        width: usize,
        vocab: usize,
        data: Vec<u32>,
    },
}

impl DumpRecord {
    pub fn from_latent<T: Scalar>(frame: usize, latent: &FrameLatent<T>) -> Self {
        let (height, width, channels) = latent.shape();
        DumpRecord::Latent {
            frame,
            height,
            width,
            channels,
            data: latent
                .grid
                .data()
                .iter()
                .map(|v| v.to_f64().unwrap())
                .collect(),
        }
    }

    pub fn from_tokens(frame: usize, tokens: &TokenGrid) -> Self {
        DumpRecord::Tokens {
            frame,
            height: tokens.height(),
            width: tokens.width(),
            vocab: tokens.vocab_size(),
            data: tokens.indices().to_vec(),
        }
    }

    pub fn frame(&self) -> usize {
        match self {
            DumpRecord::Latent { frame, .. } => *frame,
            DumpRecord::Tokens { frame, .. } => *frame,
        }
    }

    pub fn into_latent<T: Scalar>(self) -> Option<FrameLatent<T>> {
        match self {
            DumpRecord::Latent {
                height,
                width,
                channels,
                data,
                ..
            } => {
                let data = data.into_iter().map(|v| cast::<T>(v)).collect();
                LatentGrid::new(height, width, channels, data)
                    .ok()
                    .map(FrameLatent::new)
            }
            DumpRecord::Tokens { .. } => None,
        }
    }

    pub fn into_tokens(self) -> Option<TokenGrid> {
        match self {
            DumpRecord::Tokens {
                height,
                width,
                vocab,
                data,
                ..
            } => TokenGrid::new(height, width, vocab, data).ok(),
            DumpRecord::Latent { .. } => None,
        }
    }
}

/// Write rollout records as JSONL, one frame per line.
pub fn write_dump<W: Write>(w: &mut W, records: &[DumpRecord]) -> Result<(), IoError> {
    for record in records {
        serde_json::to_writer(&mut *w, record)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Read a JSONL rollout dump.
pub fn read_dump<R: Read>(r: R) -> Result<Vec<DumpRecord>, IoError> {
    let reader = BufReader::new(r);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn load_dump(path: &Path) -> Result<Vec<DumpRecord>, IoError> {
    let file = fs::File::open(path)?;
    read_dump(BufReader::new(file))
}

pub fn save_dump(path: &Path, records: &[DumpRecord]) -> Result<(), IoError> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write_dump(&mut w, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::rotation_z;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_sequence(seed: u64) -> PoseSequence<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poses = (0..8)
            .map(|i| {
                Pose::from_yaw(
                    rng.gen_range(-3.0..3.0),
                    [i as f64 * 1.5, rng.gen_range(-4.0..4.0), rng.gen_range(-0.5..0.5)],
                )
            })
            .collect();
        PoseSequence::uniform(10.0, poses).unwrap()
    }

    #[test]
    fn roundtrip_both_flavors() {
        let seq = sample_sequence(1);
        for flavor in [Flavor::Matrix, Flavor::Quat] {
            let mut buf = Vec::new();
            write_pose_sequence(&mut buf, &seq, flavor).unwrap();
            let (back, parsed_flavor) =
                read_pose_sequence::<f64, _>(buf.as_slice(), "mem").unwrap();
            assert_eq!(parsed_flavor, flavor);
            assert_eq!(back.len(), seq.len());
            for (a, b) in seq.poses().iter().zip(back.poses()) {
                for i in 0..3 {
                    assert!((a.position[i] - b.position[i]).abs() < 1e-9);
                    for j in 0..3 {
                        assert!((a.rotation[i][j] - b.rotation[i][j]).abs() < 1e-9);
                    }
                }
            }
            for (&a, &b) in seq.timestamps().iter().zip(back.timestamps()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn matrix_flavor_roundtrip_is_exact() {
        let seq = sample_sequence(2);
        let mut buf = Vec::new();
        write_pose_sequence(&mut buf, &seq, Flavor::Matrix).unwrap();
        let (back, _) = read_pose_sequence::<f64, _>(buf.as_slice(), "mem").unwrap();
        // Shortest round-trip float formatting: bit-exact reload.
        for (a, b) in seq.poses().iter().zip(back.poses()) {
            assert_eq!(a.position, b.position);
            assert_eq!(a.rotation, b.rotation);
        }
    }

    #[test]
    fn rejects_bad_quaternion_norm_with_line() {
        let text = "trajfile v1 quat rate=10 frames=2\n\
                    0 0 0 0 1 0 0 0\n\
                    0.1 1 0 0 0.9 0 0 0\n";
        let err = read_pose_sequence::<f64, _>(text.as_bytes(), "bad.traj").unwrap_err();
        match err {
            IoError::Parse { file, line, reason } => {
                assert_eq!(file, "bad.traj");
                assert_eq!(line, 3);
                assert!(reason.contains("norm"), "{reason}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn rejects_header_frame_count_mismatch() {
        let text = "trajfile v1 quat rate=10 frames=3\n0 0 0 0 1 0 0 0\n0.1 1 0 0 1 0 0 0\n";
        assert!(matches!(
            read_pose_sequence::<f64, _>(text.as_bytes(), "mem"),
            Err(IoError::Parse { .. })
        ));
    }

    #[test]
    fn rejects_rate_inconsistent_with_timestamps() {
        let text = "trajfile v1 quat rate=5 frames=2\n0 0 0 0 1 0 0 0\n0.1 1 0 0 1 0 0 0\n";
        assert!(matches!(
            read_pose_sequence::<f64, _>(text.as_bytes(), "mem"),
            Err(IoError::InconsistentRate { .. })
        ));
    }

    #[test]
    fn rejects_malformed_header_and_floats() {
        assert!(matches!(
            read_pose_sequence::<f64, _>("not a header\n".as_bytes(), "mem"),
            Err(IoError::Parse { line: 1, .. })
        ));
        let text = "trajfile v1 quat rate=10 frames=1\n0 0 0 zzz 1 0 0 0\n";
        let err = read_pose_sequence::<f64, _>(text.as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 2, .. }));
    }

    #[test]
    fn load_trajectories_sorted_and_filtered() {
        let dir = tempdir();
        let seq = sample_sequence(3);
        for name in ["b.traj", "a.traj", "ignored.txt"] {
            if name.ends_with(".traj") {
                save_pose_sequence(&dir.join(name), &seq, Flavor::Quat).unwrap();
            } else {
                fs::write(dir.join(name), "not a trajectory").unwrap();
            }
        }
        let loaded = load_trajectories::<f64>(&dir, None).unwrap();
        let names: Vec<String> = loaded
            .iter()
            .map(|(p, _)| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["a.traj", "b.traj"]);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn load_trajectories_empty_dir() {
        let dir = tempdir();
        let loaded = load_trajectories::<f64>(&dir, None).unwrap();
        assert!(loaded.is_empty());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn load_trajectories_flavor_filter() {
        let dir = tempdir();
        let seq = sample_sequence(4);
        save_pose_sequence(&dir.join("a.traj"), &seq, Flavor::Quat).unwrap();
        assert!(load_trajectories::<f64>(&dir, Some(Flavor::Quat)).is_ok());
        assert!(matches!(
            load_trajectories::<f64>(&dir, Some(Flavor::Matrix)),
            Err(IoError::Parse { .. })
        ));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn dump_roundtrip() {
        let latent = FrameLatent::new(
            LatentGrid::new(1, 2, 2, vec![0.25, -1.5, 3.0, 0.125]).unwrap(),
        );
        let tokens = TokenGrid::new(2, 2, 8, vec![0, 7, 3, 8]).unwrap();
        let records = vec![
            DumpRecord::from_latent(0, &latent),
            DumpRecord::from_tokens(1, &tokens),
        ];
        let mut buf = Vec::new();
        write_dump(&mut buf, &records).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        let back = read_dump(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].frame(), 0);
        let lat_back = back[0].clone().into_latent::<f64>().unwrap();
        assert_eq!(lat_back.grid.data(), latent.grid.data());
        let tok_back = back[1].clone().into_tokens().unwrap();
        assert_eq!(tok_back.indices(), tokens.indices());
        assert_eq!(tok_back.vocab_size(), 8);
    }

    #[test]
    fn matrix_rejects_reflection() {
        let mut m = [0.0f64; 16];
        let r = rotation_z(0.3f64);
        for i in 0..3 {
            for j in 0..3 {
                m[i * 4 + j] = r[i][j];
            }
        }
        // Flip one axis: determinant -1.
        m[0] = -m[0];
        m[4] = -m[4];
        m[8] = -m[8];
        m[15] = 1.0;
        let mut text = String::from("trajfile v1 matrix rate=10 frames=1\n0");
        for v in m {
            text.push_str(&format!(" {v}"));
        }
        text.push('\n');
        let err = read_pose_sequence::<f64, _>(text.as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 2, .. }));
    }

    fn tempdir() -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "latentdrive-io-test-{}-{}",
            std::process::id(),
            rand::random::<u64>()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }
}
