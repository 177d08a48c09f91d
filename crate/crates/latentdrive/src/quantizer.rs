//! Vector-quantization bottleneck primitives: L2-normalized codebooks,
//! nearest-code lookup, the factorized dual-codebook codec with a continuous
//! bypass mode, code similarity, entropy penalty, VQ losses, and utilization
//! and copy-rate diagnostics.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{cast, Scalar};

/// File magic for the binary codebook format.
pub const CODEBOOK_MAGIC: &[u8; 4] = b"VQCB";
/// Current binary codebook format version.
pub const CODEBOOK_VERSION: u32 = 1;

/// Commitment-loss weight used when no explicit beta is configured.
pub const DEFAULT_COMMITMENT_BETA: f64 = 0.25;

#[derive(Debug, Error)]
pub enum QuantizerError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("zero vector at position {position}: cannot normalize")]
    ZeroVector { position: usize },
    #[error("masked token at position {position}")]
    MaskedTokenPresent { position: usize },
    #[error("token index {index} out of range for vocabulary of {vocab}")]
    IndexOutOfRange { index: u32, vocab: usize },
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("codebook io: {0}")]
    Io(#[from] std::io::Error),
    #[error("codebook json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad codebook file: {0}")]
    BadFormat(String),
}

/// K × d table of unit-norm code vectors.
///
/// Rows are L2-normalized at construction; a row too close to zero is
/// rejected rather than silently rescaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    entries: Vec<T>,
    size: usize,
    dim: usize,
}

impl<T: Scalar> Codebook<T> {
    /// Build from `size * dim` row-major entries, normalizing each row.
    pub fn new(size: usize, dim: usize, mut entries: Vec<T>) -> Result<Self, QuantizerError> {
        if size < 2 {
            return Err(QuantizerError::InvalidCodebook(format!(
                "need at least 2 codes, got {size}"
            )));
        }
        if dim < 1 {
            return Err(QuantizerError::InvalidCodebook("dim must be >= 1".into()));
        }
        if entries.len() != size * dim {
            return Err(QuantizerError::InvalidCodebook(format!(
                "expected {} entries, got {}",
                size * dim,
                entries.len()
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(QuantizerError::InvalidCodebook("non-finite entry".into()));
        }
        for row in 0..size {
            let slice = &mut entries[row * dim..(row + 1) * dim];
            let norm = slice.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            if norm < cast(1e-12) {
                return Err(QuantizerError::ZeroVector { position: row });
            }
            for v in slice {
                *v = *v / norm;
            }
        }
        Ok(Self { entries, size, dim })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One code vector.
    pub fn code(&self, index: usize) -> &[T] {
        &self.entries[index * self.dim..(index + 1) * self.dim]
    }

    /// Write the binary format: magic, version, K, d (u32 LE), then f32 LE
    /// row-major entries.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), QuantizerError> {
        w.write_all(CODEBOOK_MAGIC)?;
        w.write_all(&CODEBOOK_VERSION.to_le_bytes())?;
        w.write_all(&(self.size as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in &self.entries {
            w.write_all(&v.to_f32().unwrap().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, QuantizerError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CODEBOOK_MAGIC {
            return Err(QuantizerError::BadFormat("wrong magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CODEBOOK_VERSION {
            return Err(QuantizerError::BadFormat(format!(
                "unsupported version {version}"
            )));
        }
        r.read_exact(&mut word)?;
        let size = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let dim = u32::from_le_bytes(word) as usize;
        let mut entries = Vec::with_capacity(size * dim);
        for _ in 0..size * dim {
            r.read_exact(&mut word)?;
            entries.push(
                T::from_f32(f32::from_le_bytes(word))
                    .ok_or_else(|| QuantizerError::BadFormat("entry out of range".into()))?,
            );
        }
        Self::new(size, dim, entries)
    }

    /// Write the JSON flavor: `{"k":…, "d":…, "entries":[…]}` with f32
    /// precision entries, row-major.
    pub fn write_json<W: Write>(&self, w: W) -> Result<(), QuantizerError> {
        let ser = CodebookFile {
            k: self.size,
            d: self.dim,
            entries: self.entries.iter().map(|v| v.to_f32().unwrap()).collect(),
        };
        serde_json::to_writer(w, &ser)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, QuantizerError> {
        let ser: CodebookFile = serde_json::from_reader(r)?;
        let entries = ser
            .entries
            .into_iter()
            .map(|v| T::from_f32(v).unwrap())
            .collect();
        Self::new(ser.k, ser.d, entries)
    }
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    k: usize,
    d: usize,
    entries: Vec<f32>,
}

/// Whether the codec quantizes or passes latents through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecMode {
    Discrete,
    Continuous,
}

/// Dual-codebook codec over the semantic and detail latent branches.
#[derive(Debug, Clone)]
pub struct FactorizedCodec<T> {
    pub semantic: Codebook<T>,
    pub detail: Codebook<T>,
    pub mode: CodecMode,
}

impl<T: Scalar> FactorizedCodec<T> {
    pub fn new(
        semantic: Codebook<T>,
        detail: Codebook<T>,
        mode: CodecMode,
    ) -> Result<Self, QuantizerError> {
        if semantic.dim() != detail.dim() {
            return Err(QuantizerError::DimensionMismatch {
                expected: semantic.dim(),
                got: detail.dim(),
            });
        }
        Ok(Self {
            semantic,
            detail,
            mode,
        })
    }
}

/// H' × W' × channels grid of finite reals, row-major with the channel axis
/// innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> LatentGrid<T> {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<T>,
    ) -> Result<Self, QuantizerError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(QuantizerError::InvalidGrid("zero-sized axis".into()));
        }
        if data.len() != height * width * channels {
            return Err(QuantizerError::InvalidGrid(format!(
                "expected {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(QuantizerError::InvalidGrid("non-finite value".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of spatial positions (H' · W').
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Channel vector at a flat spatial position.
    pub fn vector(&self, position: usize) -> &[T] {
        &self.data[position * self.channels..(position + 1) * self.channels]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
}

/// H' × W' grid of token indices into a vocabulary of `vocab_size` codes,
/// with index `vocab_size` reserved as the MASK sentinel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGrid {
    height: usize,
    width: usize,
    vocab_size: usize,
    indices: Vec<u32>,
}

impl TokenGrid {
    pub fn new(
        height: usize,
        width: usize,
        vocab_size: usize,
        indices: Vec<u32>,
    ) -> Result<Self, QuantizerError> {
        if height == 0 || width == 0 {
            return Err(QuantizerError::InvalidGrid("zero-sized axis".into()));
        }
        if indices.len() != height * width {
            return Err(QuantizerError::InvalidGrid(format!(
                "expected {} indices, got {}",
                height * width,
                indices.len()
            )));
        }
        for &idx in &indices {
            if idx as usize > vocab_size {
                return Err(QuantizerError::IndexOutOfRange {
                    index: idx,
                    vocab: vocab_size,
                });
            }
        }
        Ok(Self {
            height,
            width,
            vocab_size,
            indices,
        })
    }

    /// Grid with every position set to the MASK sentinel.
    pub fn fully_masked(height: usize, width: usize, vocab_size: usize) -> Self {
        let mask = vocab_size as u32;
        Self {
            height,
            width,
            vocab_size,
            indices: vec![mask; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// The reserved sentinel index (one past the vocabulary).
    pub fn mask_token(&self) -> u32 {
        self.vocab_size as u32
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn indices_mut(&mut self) -> &mut [u32] {
        &mut self.indices
    }

    pub fn is_masked(&self, position: usize) -> bool {
        self.indices[position] == self.mask_token()
    }

    pub fn masked_count(&self) -> usize {
        let mask = self.mask_token();
        self.indices.iter().filter(|&&i| i == mask).count()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Nearest-code assignment of every latent vector in the grid.
///
/// Latents are L2-normalized before the distance comparison, so the argmin
/// over Euclidean distance to the unit-norm codes equals the argmax over
/// cosine similarity. Ties break toward the lowest code index. Returns the
/// token grid and the grid of selected (unit-norm) code vectors.
pub fn quantize<T: Scalar>(
    grid: &LatentGrid<T>,
    cb: &Codebook<T>,
) -> Result<(TokenGrid, LatentGrid<T>), QuantizerError> {
    if grid.channels() != cb.dim() {
        return Err(QuantizerError::DimensionMismatch {
            expected: cb.dim(),
            got: grid.channels(),
        });
    }
    let d = cb.dim();
    let mut indices = Vec::with_capacity(grid.positions());
    let mut codes = Vec::with_capacity(grid.positions() * d);
    let mut unit = vec![T::zero(); d];
    for pos in 0..grid.positions() {
        let v = grid.vector(pos);
        let norm = v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
        if norm < cast(1e-12) {
            return Err(QuantizerError::ZeroVector { position: pos });
        }
        for (u, &x) in unit.iter_mut().zip(v) {
            *u = x / norm;
        }
        let mut best = 0usize;
        let mut best_dist = T::infinity();
        for k in 0..cb.size() {
            let code = cb.code(k);
            let dist = unit
                .iter()
                .zip(code)
                .fold(T::zero(), |a, (&u, &c)| a + (u - c) * (u - c));
            if dist < best_dist {
                best_dist = dist;
                best = k;
            }
        }
        indices.push(best as u32);
        codes.extend_from_slice(cb.code(best));
    }
    let tokens = TokenGrid::new(grid.height(), grid.width(), cb.size(), indices)?;
    let selected = LatentGrid::new(grid.height(), grid.width(), d, codes)?;
    Ok((tokens, selected))
}

/// Position-wise code lookup; rejects MASK sentinels and indices outside the
/// codebook.
pub fn dequantize<T: Scalar>(
    tokens: &TokenGrid,
    cb: &Codebook<T>,
) -> Result<LatentGrid<T>, QuantizerError> {
    let mut data = Vec::with_capacity(tokens.positions() * cb.dim());
    for pos in 0..tokens.positions() {
        let idx = tokens.indices()[pos];
        if idx == tokens.mask_token() {
            return Err(QuantizerError::MaskedTokenPresent { position: pos });
        }
        if idx as usize >= cb.size() {
            return Err(QuantizerError::IndexOutOfRange {
                index: idx,
                vocab: cb.size(),
            });
        }
        data.extend_from_slice(cb.code(idx as usize));
    }
    LatentGrid::new(tokens.height(), tokens.width(), cb.dim(), data)
}

/// Joint representation produced by [`hybrid_encode`]: semantic channels
/// first, detail channels after.
#[derive(Debug, Clone)]
pub enum HybridEncoding<T> {
    /// VQ bottleneck bypassed; the joint grid carries the raw latents.
    Continuous { joint: LatentGrid<T> },
    /// Quantized per branch; the joint grid carries the selected codes.
    Discrete {
        joint: LatentGrid<T>,
        semantic_tokens: TokenGrid,
        detail_tokens: TokenGrid,
    },
}

impl<T> HybridEncoding<T> {
    pub fn joint(&self) -> &LatentGrid<T> {
        match self {
            HybridEncoding::Continuous { joint } => joint,
            HybridEncoding::Discrete { joint, .. } => joint,
        }
    }
}

/// Encode the two latent branches through the codec: channel-wise
/// concatenation in continuous mode, per-branch quantization plus
/// concatenation of the selected codes in discrete mode.
pub fn hybrid_encode<T: Scalar>(
    x_semantic: &LatentGrid<T>,
    x_detail: &LatentGrid<T>,
    codec: &FactorizedCodec<T>,
) -> Result<HybridEncoding<T>, QuantizerError> {
    if x_semantic.height() != x_detail.height() || x_semantic.width() != x_detail.width() {
        return Err(QuantizerError::ShapeMismatch(format!(
            "semantic {}x{} vs detail {}x{}",
            x_semantic.height(),
            x_semantic.width(),
            x_detail.height(),
            x_detail.width()
        )));
    }
    if x_semantic.channels() != codec.semantic.dim() {
        return Err(QuantizerError::DimensionMismatch {
            expected: codec.semantic.dim(),
            got: x_semantic.channels(),
        });
    }
    if x_detail.channels() != codec.detail.dim() {
        return Err(QuantizerError::DimensionMismatch {
            expected: codec.detail.dim(),
            got: x_detail.channels(),
        });
    }
    match codec.mode {
        CodecMode::Continuous => Ok(HybridEncoding::Continuous {
            joint: concat_channels(x_semantic, x_detail),
        }),
        CodecMode::Discrete => {
            let (semantic_tokens, q_semantic) = quantize(x_semantic, &codec.semantic)?;
            let (detail_tokens, q_detail) = quantize(x_detail, &codec.detail)?;
            Ok(HybridEncoding::Discrete {
                joint: concat_channels(&q_semantic, &q_detail),
                semantic_tokens,
                detail_tokens,
            })
        }
    }
}

fn concat_channels<T: Scalar>(a: &LatentGrid<T>, b: &LatentGrid<T>) -> LatentGrid<T> {
    let mut data = Vec::with_capacity(a.positions() * (a.channels() + b.channels()));
    for pos in 0..a.positions() {
        data.extend_from_slice(a.vector(pos));
        data.extend_from_slice(b.vector(pos));
    }
    LatentGrid {
        height: a.height(),
        width: a.width(),
        channels: a.channels() + b.channels(),
        data,
    }
}

/// K × K cosine similarities between code vectors (dot products, since codes
/// are unit-norm).
#[derive(Debug, Clone)]
pub struct SimilarityMatrix<T> {
    size: usize,
    values: Vec<T>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.size + j]
    }

    /// Similarity row for code `i`.
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.size..(i + 1) * self.size]
    }
}

pub fn similarity_matrix<T: Scalar>(cb: &Codebook<T>) -> SimilarityMatrix<T> {
    let k = cb.size();
    let mut values = vec![T::zero(); k * k];
    for i in 0..k {
        values[i * k + i] = T::one();
        for j in (i + 1)..k {
            let dot = cb
                .code(i)
                .iter()
                .zip(cb.code(j))
                .fold(T::zero(), |a, (&x, &y)| a + x * y);
            values[i * k + j] = dot;
            values[j * k + i] = dot;
        }
    }
    SimilarityMatrix { size: k, values }
}

/// Soft-assignment entropy penalty: mean per-position assignment entropy
/// minus the entropy of the mean assignment.
///
/// Assignments are `softmax(-dist² / temperature)` over the codes, with the
/// latent normalized first. Lower is better: confident per-position
/// assignments combined with diverse overall code usage.
pub fn entropy_penalty<T: Scalar>(
    grid: &LatentGrid<T>,
    cb: &Codebook<T>,
    temperature: T,
) -> Result<T, QuantizerError> {
    if grid.channels() != cb.dim() {
        return Err(QuantizerError::DimensionMismatch {
            expected: cb.dim(),
            got: grid.channels(),
        });
    }
    if !(temperature.is_finite() && temperature > T::zero()) {
        return Err(QuantizerError::InvalidTemperature(
            temperature.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let k = cb.size();
    let n = grid.positions();
    let n_scalar = T::from_usize(n).unwrap();
    let mut unit = vec![T::zero(); cb.dim()];
    let mut logits = vec![T::zero(); k];
    let mut mean_assignment = vec![T::zero(); k];
    let mut sample_entropy_sum = T::zero();
    for pos in 0..n {
        let v = grid.vector(pos);
        let norm = v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
        if norm < cast(1e-12) {
            return Err(QuantizerError::ZeroVector { position: pos });
        }
        for (u, &x) in unit.iter_mut().zip(v) {
            *u = x / norm;
        }
        for (ki, logit) in logits.iter_mut().enumerate() {
            let code = cb.code(ki);
            let dist = unit
                .iter()
                .zip(code)
                .fold(T::zero(), |a, (&u, &c)| a + (u - c) * (u - c));
            *logit = -dist / temperature;
        }
        let probs = softmax(&logits);
        sample_entropy_sum += entropy(&probs);
        for (m, p) in mean_assignment.iter_mut().zip(&probs) {
            *m += *p / n_scalar;
        }
    }
    let mean_sample_entropy = sample_entropy_sum / n_scalar;
    Ok(mean_sample_entropy - entropy(&mean_assignment))
}

fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &v| a + v);
    exps.into_iter().map(|v| v / sum).collect()
}

fn entropy<T: Scalar>(probs: &[T]) -> T {
    probs.iter().fold(T::zero(), |a, &p| {
        if p > T::zero() {
            a - p * p.ln()
        } else {
            a
        }
    })
}

/// Codebook and commitment losses between an encoder latent grid and its
/// quantized counterpart.
///
/// Both values reduce to squared gaps here; they differ only in gradient
/// routing, which matters for trainable ports: the codebook loss treats `x`
/// as constant (gradient flows into the codes), the commitment loss treats
/// `q` as constant (gradient flows into the encoder) and is scaled by `beta`.
pub fn vq_losses<T: Scalar>(
    x: &LatentGrid<T>,
    q: &LatentGrid<T>,
    beta: T,
) -> Result<(T, T), QuantizerError> {
    if !x.same_shape(q) {
        return Err(QuantizerError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x.shape(),
            q.shape()
        )));
    }
    let n = T::from_usize(x.positions()).unwrap();
    let gap = x
        .data()
        .iter()
        .zip(q.data())
        .fold(T::zero(), |a, (&xv, &qv)| a + (xv - qv) * (xv - qv));
    let mean_sq = gap / n;
    Ok((mean_sq, beta * mean_sq))
}

/// Code-usage histogram plus the fraction of codes used at least once.
#[derive(Debug, Clone)]
pub struct CodebookUsage {
    pub counts: Vec<u64>,
    pub utilization: f64,
}

pub fn codebook_usage(
    token_grids: &[TokenGrid],
    vocab_size: usize,
) -> Result<CodebookUsage, QuantizerError> {
    let mut counts = vec![0u64; vocab_size];
    for grid in token_grids {
        for &idx in grid.indices() {
            if idx as usize >= vocab_size {
                return Err(QuantizerError::IndexOutOfRange {
                    index: idx,
                    vocab: vocab_size,
                });
            }
            counts[idx as usize] += 1;
        }
    }
    let used = counts.iter().filter(|&&c| c > 0).count();
    Ok(CodebookUsage {
        counts,
        utilization: used as f64 / vocab_size as f64,
    })
}

/// Fraction of positions whose token index matches between the last context
/// frame and a generated frame.
pub fn token_copy_rate(
    last_context: &TokenGrid,
    generated: &TokenGrid,
) -> Result<f64, QuantizerError> {
    if !last_context.same_shape(generated) {
        return Err(QuantizerError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            last_context.height(),
            last_context.width(),
            generated.height(),
            generated.width()
        )));
    }
    let equal = last_context
        .indices()
        .iter()
        .zip(generated.indices())
        .filter(|(a, b)| a == b)
        .count();
    Ok(equal as f64 / last_context.positions() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_codebook() -> Codebook<f64> {
        Codebook::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    fn grid(h: usize, w: usize, c: usize, data: Vec<f64>) -> LatentGrid<f64> {
        LatentGrid::new(h, w, c, data).unwrap()
    }

    #[test]
    fn codebook_normalizes_rows() {
        let cb = Codebook::new(2, 2, vec![3.0, 0.0, 0.0, -2.0]).unwrap();
        assert_eq!(cb.code(0), &[1.0, 0.0]);
        assert_eq!(cb.code(1), &[0.0, -1.0]);
    }

    #[test]
    fn codebook_rejects_degenerate_inputs() {
        assert!(Codebook::<f64>::new(1, 2, vec![1.0, 0.0]).is_err());
        assert!(Codebook::<f64>::new(2, 0, vec![]).is_err());
        assert!(matches!(
            Codebook::<f64>::new(2, 2, vec![1.0, 0.0, 0.0, 0.0]),
            Err(QuantizerError::ZeroVector { position: 1 })
        ));
    }

    #[test]
    fn quantize_code_rows_are_fixed_points() {
        let cb = unit_codebook();
        let g = grid(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let (tokens, latents) = quantize(&g, &cb).unwrap();
        assert_eq!(tokens.indices(), &[0, 1]);
        assert_eq!(latents.data(), g.data());
    }

    #[test]
    fn quantize_picks_nearest_code() {
        let cb = unit_codebook();
        let g = grid(1, 1, 2, vec![0.9, 0.1]);
        let (tokens, _) = quantize(&g, &cb).unwrap();
        assert_eq!(tokens.indices(), &[0]);
    }

    #[test]
    fn quantize_tie_breaks_to_lowest_index() {
        let cb = unit_codebook();
        let g = grid(1, 1, 2, vec![1.0, 1.0]);
        let (tokens, _) = quantize(&g, &cb).unwrap();
        assert_eq!(tokens.indices(), &[0]);
    }

    #[test]
    fn quantize_rejects_zero_vector() {
        let cb = unit_codebook();
        let g = grid(1, 1, 2, vec![0.0, 0.0]);
        assert!(matches!(
            quantize(&g, &cb),
            Err(QuantizerError::ZeroVector { position: 0 })
        ));
    }

    #[test]
    fn quantize_dimension_mismatch() {
        let cb = unit_codebook();
        let g = grid(1, 1, 3, vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            quantize(&g, &cb),
            Err(QuantizerError::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn dequantize_looks_up_rows() {
        let cb = unit_codebook();
        let tokens = TokenGrid::new(1, 2, 2, vec![0, 1]).unwrap();
        let g = dequantize(&tokens, &cb).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.shape(), (1, 2, 2));
    }

    #[test]
    fn dequantize_rejects_mask_and_bad_index() {
        let cb = unit_codebook();
        let masked = TokenGrid::fully_masked(1, 2, 2);
        assert!(matches!(
            dequantize(&masked, &cb),
            Err(QuantizerError::MaskedTokenPresent { position: 0 })
        ));
        // Vocab-4 grid feeding a 2-code book: index 3 is out of range.
        let big = TokenGrid::new(1, 1, 4, vec![3]).unwrap();
        assert!(matches!(
            dequantize(&big, &cb),
            Err(QuantizerError::IndexOutOfRange { index: 3, vocab: 2 })
        ));
    }

    #[test]
    fn roundtrip_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let k = 8;
        let d = 3;
        let entries: Vec<f64> = (0..k * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cb = Codebook::new(k, d, entries).unwrap();
        for _ in 0..1000 {
            let indices: Vec<u32> = (0..6).map(|_| rng.gen_range(0..k as u32)).collect();
            let tokens = TokenGrid::new(2, 3, k, indices).unwrap();
            // quantize(dequantize(t)) == t
            let latents = dequantize(&tokens, &cb).unwrap();
            let (back, requantized) = quantize(&latents, &cb).unwrap();
            assert_eq!(back.indices(), tokens.indices());
            // dequantize∘quantize is idempotent on latent grids.
            let (again, re2) = quantize(&requantized, &cb).unwrap();
            assert_eq!(again.indices(), tokens.indices());
            assert_eq!(re2.data(), requantized.data());
        }
    }

    #[test]
    fn single_token_grid_roundtrip() {
        let cb = unit_codebook();
        let tokens = TokenGrid::new(1, 1, 2, vec![1]).unwrap();
        let g = dequantize(&tokens, &cb).unwrap();
        assert_eq!(g.shape(), (1, 1, 2));
        assert_eq!(g.data(), &[0.0, 1.0]);
    }

    #[test]
    fn hybrid_continuous_concatenates_semantic_first() {
        let codec = FactorizedCodec::new(unit_codebook(), unit_codebook(), CodecMode::Continuous)
            .unwrap();
        let xs = grid(1, 1, 2, vec![0.5, 0.25]);
        let xd = grid(1, 1, 2, vec![-1.0, 2.0]);
        let enc = hybrid_encode(&xs, &xd, &codec).unwrap();
        assert!(matches!(enc, HybridEncoding::Continuous { .. }));
        assert_eq!(enc.joint().channels(), 4);
        assert_eq!(enc.joint().data(), &[0.5, 0.25, -1.0, 2.0]);
    }

    #[test]
    fn hybrid_discrete_returns_codes_and_tokens() {
        let codec =
            FactorizedCodec::new(unit_codebook(), unit_codebook(), CodecMode::Discrete).unwrap();
        let xs = grid(1, 1, 2, vec![1.0, 0.0]);
        let xd = grid(1, 1, 2, vec![0.0, 1.0]);
        match hybrid_encode(&xs, &xd, &codec).unwrap() {
            HybridEncoding::Discrete {
                joint,
                semantic_tokens,
                detail_tokens,
            } => {
                assert_eq!(joint.data(), &[1.0, 0.0, 0.0, 1.0]);
                assert_eq!(semantic_tokens.indices(), &[0]);
                assert_eq!(detail_tokens.indices(), &[1]);
            }
            _ => panic!("expected discrete encoding"),
        }
    }

    #[test]
    fn hybrid_modes_agree_on_code_rows() {
        let xs = grid(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let xd = grid(1, 2, 2, vec![0.0, 1.0, 1.0, 0.0]);
        let discrete =
            FactorizedCodec::new(unit_codebook(), unit_codebook(), CodecMode::Discrete).unwrap();
        let continuous = FactorizedCodec::new(unit_codebook(), unit_codebook(), CodecMode::Continuous)
            .unwrap();
        let a = hybrid_encode(&xs, &xd, &discrete).unwrap();
        let b = hybrid_encode(&xs, &xd, &continuous).unwrap();
        assert_eq!(a.joint().data(), b.joint().data());
    }

    #[test]
    fn similarity_matrix_orthonormal_is_identity() {
        let s = similarity_matrix(&unit_codebook());
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(1, 1), 1.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(1, 0), 0.0);
    }

    #[test]
    fn similarity_matrix_duplicates_all_ones() {
        let cb = Codebook::<f64>::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let s = similarity_matrix(&cb);
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.get(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn similarity_matrix_hand_value() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let cb = Codebook::new(2, 2, vec![1.0, 0.0, r, r]).unwrap();
        let s = similarity_matrix(&cb);
        assert!((s.get(0, 1) - r).abs() < 1e-12);
        assert!((s.get(1, 0) - r).abs() < 1e-12);
    }

    #[test]
    fn similarity_matrix_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let entries: Vec<f64> = (0..16 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cb = Codebook::new(16, 4, entries).unwrap();
        let s = similarity_matrix(&cb);
        for i in 0..16 {
            assert!((s.get(i, i) - 1.0).abs() < 1e-9);
            for j in 0..16 {
                assert_eq!(s.get(i, j), s.get(j, i));
                assert!(s.get(i, j) <= 1.0 + 1e-9 && s.get(i, j) >= -1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn entropy_penalty_single_code_degenerate() {
        let cb = unit_codebook();
        let g = grid(2, 2, 2, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let p = entropy_penalty(&g, &cb, 0.001).unwrap();
        assert!(p.abs() < 1e-6, "penalty {p}");
    }

    #[test]
    fn entropy_penalty_diverse_and_confident() {
        let cb = unit_codebook();
        // Half the positions on each of the two orthogonal codes.
        let g = grid(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let p = entropy_penalty(&g, &cb, 0.001).unwrap();
        assert!((p + std::f64::consts::LN_2).abs() < 1e-6, "penalty {p}");
    }

    #[test]
    fn entropy_penalty_uniform_limit() {
        let cb = unit_codebook();
        let g = grid(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let p = entropy_penalty(&g, &cb, 1e9).unwrap();
        assert!(p.abs() < 1e-6, "penalty {p}");
    }

    #[test]
    fn entropy_penalty_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let entries: Vec<f64> = (0..6 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cb = Codebook::new(6, 3, entries.clone()).unwrap();
        // Reverse the row order.
        let mut permuted = Vec::new();
        for row in (0..6).rev() {
            permuted.extend_from_slice(&entries[row * 3..(row + 1) * 3]);
        }
        let cb_perm = Codebook::new(6, 3, permuted).unwrap();
        let data: Vec<f64> = (0..4 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = grid(2, 2, 3, data);
        let a = entropy_penalty(&g, &cb, 0.7).unwrap();
        let b = entropy_penalty(&g, &cb_perm, 0.7).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn vq_losses_zero_iff_equal() {
        let x = grid(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let (cb_loss, commit) = vq_losses(&x, &x, 0.25).unwrap();
        assert_eq!(cb_loss, 0.0);
        assert_eq!(commit, 0.0);
        let mut y = x.clone();
        y.data_mut()[0] += 1e-3;
        let (cb_loss, _) = vq_losses(&x, &y, 0.25).unwrap();
        assert!(cb_loss > 0.0);
    }

    #[test]
    fn vq_losses_unit_gap() {
        // Per-position gap of norm 1 -> mean squared gap 1.0.
        let x = grid(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let q = grid(1, 2, 2, vec![0.0, 0.0, 0.0, 0.0]);
        let (cb_loss, commit) = vq_losses(&x, &q, 0.25).unwrap();
        assert!((cb_loss - 1.0).abs() < 1e-12);
        assert!((commit - 0.25).abs() < 1e-12);
        let (_, zero_beta) = vq_losses(&x, &q, 0.0).unwrap();
        assert_eq!(zero_beta, 0.0);
    }

    #[test]
    fn usage_fractions() {
        let all_zero = TokenGrid::new(2, 2, 4, vec![0; 4]).unwrap();
        let usage = codebook_usage(&[all_zero], 4).unwrap();
        assert_eq!(usage.utilization, 0.25);
        assert_eq!(usage.counts, vec![4, 0, 0, 0]);

        let full = TokenGrid::new(2, 2, 4, vec![0, 1, 2, 3]).unwrap();
        let usage = codebook_usage(&[full], 4).unwrap();
        assert_eq!(usage.utilization, 1.0);
    }

    #[test]
    fn usage_uniform_random_covers_vocab() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let indices: Vec<u32> = (0..10_000).map(|_| rng.gen_range(0..16)).collect();
        let grid = TokenGrid::new(100, 100, 16, indices).unwrap();
        let usage = codebook_usage(&[grid], 16).unwrap();
        assert_eq!(usage.utilization, 1.0);
    }

    #[test]
    fn copy_rate_cases() {
        let a = TokenGrid::new(2, 2, 4, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(token_copy_rate(&a, &a).unwrap(), 1.0);
        let b = TokenGrid::new(2, 2, 4, vec![1, 2, 3, 0]).unwrap();
        assert_eq!(token_copy_rate(&a, &b).unwrap(), 0.0);
        let c = TokenGrid::new(2, 2, 4, vec![0, 1, 3, 0]).unwrap();
        assert_eq!(token_copy_rate(&a, &c).unwrap(), 0.5);
        let d = TokenGrid::new(1, 2, 4, vec![0, 1]).unwrap();
        assert!(token_copy_rate(&a, &d).is_err());
    }

    #[test]
    fn codebook_binary_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let entries: Vec<f64> = (0..8 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cb = Codebook::new(8, 4, entries).unwrap();
        let mut buf = Vec::new();
        cb.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], CODEBOOK_MAGIC);
        let back = Codebook::<f64>::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.size(), 8);
        assert_eq!(back.dim(), 4);
        for k in 0..8 {
            for (a, b) in cb.code(k).iter().zip(back.code(k)) {
                // Entries pass through f32 on disk.
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn codebook_json_roundtrip() {
        let cb = unit_codebook();
        let mut buf = Vec::new();
        cb.write_json(&mut buf).unwrap();
        let back = Codebook::<f64>::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, cb);
    }

    #[test]
    fn codebook_binary_rejects_bad_magic() {
        let buf = b"XXXX\x01\x00\x00\x00".to_vec();
        assert!(matches!(
            Codebook::<f64>::read_binary(buf.as_slice()),
            Err(QuantizerError::BadFormat(_))
        ));
    }
}
