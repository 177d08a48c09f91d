//! Next-frame generation machinery: flow-matching interpolation and Euler ODE
//! sampling, masked-token corruption with confidence-based iterative
//! unmasking, sliding-window autoregressive rollout, and the context
//! corruption ops used during training.
//!
//! Predictors are host-supplied callables; analytic test predictors live in
//! [`predictors`].

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::quantizer::{LatentGrid, TokenGrid};
use crate::scalar::{cast, Scalar};

/// Context length the models are trained with.
pub const DEFAULT_CONTEXT_FRAMES: usize = 5;
/// Context frame rate (Hz) the models are trained with.
pub const DEFAULT_CONTEXT_RATE_HZ: f64 = 5.0;
/// ODE integration steps for flow-matching sampling.
pub const DEFAULT_FM_STEPS: usize = 30;
/// Probability of noising the context during flow-matching training.
pub const DEFAULT_CONTEXT_NOISE_PROB: f64 = 0.5;
/// Largest interpolation level used when noising context frames.
pub const DEFAULT_CONTEXT_NOISE_TAU_MAX: f64 = 0.3;
/// Probability of dropping the whole context during training.
pub const DEFAULT_CONTEXT_DROPOUT_PROB: f64 = 0.5;
/// Fraction of context frames fully masked during discrete-model training.
pub const DEFAULT_MASK_FRAME_FRAC: f64 = 0.10;
/// Fraction of remaining context tokens masked during discrete-model training.
pub const DEFAULT_MASK_TOKEN_FRAC: f64 = 0.10;

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("tau {0} outside [0, 1]")]
    TauOutOfRange(f64),
    #[error("predictor output shape {got:?} does not match target {expected:?}")]
    PredictorShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("unmasking state exhausted after {steps} steps")]
    StateExhausted { steps: usize },
    #[error("context holds {len} frames but {capacity} are required")]
    ContextUnderfilled { len: usize, capacity: usize },
    #[error("steps must be at least 1")]
    NoSteps,
    #[error(transparent)]
    Quantizer(#[from] crate::quantizer::QuantizerError),
}

/// One frame's joint latent grid (semantic and detail channels concatenated).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLatent<T> {
    pub grid: LatentGrid<T>,
}

impl<T: Scalar> FrameLatent<T> {
    pub fn new(grid: LatentGrid<T>) -> Self {
        Self { grid }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.grid.shape()
    }

    /// Frame of standard-normal noise with the given shape.
    pub fn standard_normal<R: Rng + ?Sized>(
        height: usize,
        width: usize,
        channels: usize,
        rng: &mut R,
    ) -> Self {
        let data = (0..height * width * channels)
            .map(|_| T::standard_normal(rng))
            .collect();
        Self {
            grid: LatentGrid::new(height, width, channels, data)
                .expect("normal draws are finite"),
        }
    }
}

/// Fixed-capacity FIFO of the most recent frames used as conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow<F> {
    capacity: usize,
    rate_hz: f64,
    frames: VecDeque<F>,
}

impl<F: Clone> ContextWindow<F> {
    pub fn new(capacity: usize, rate_hz: f64) -> Self {
        assert!(capacity >= 1, "context capacity must be at least 1");
        Self {
            capacity,
            rate_hz,
            frames: VecDeque::with_capacity(capacity),
        }
    }

    pub fn from_frames(capacity: usize, rate_hz: f64, frames: Vec<F>) -> Self {
        let mut ctx = Self::new(capacity, rate_hz);
        for f in frames {
            ctx.push(f);
        }
        ctx
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() == self.capacity
    }

    /// Append a frame, discarding the oldest when at capacity.
    pub fn push(&mut self, frame: F) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    /// Frames ordered oldest to newest.
    pub fn frames(&self) -> impl Iterator<Item = &F> {
        self.frames.iter()
    }

    pub fn latest(&self) -> Option<&F> {
        self.frames.back()
    }
}

/// Velocity field queried by the flow-matching sampler.
pub trait VelocityPredictor<T: Scalar> {
    /// Velocity at the noised target frame for interpolation level `tau`,
    /// conditioned on the context.
    fn velocity(
        &self,
        noised: &FrameLatent<T>,
        tau: T,
        ctx: &ContextWindow<FrameLatent<T>>,
    ) -> FrameLatent<T>;
}

impl<T: Scalar, F> VelocityPredictor<T> for F
where
    F: Fn(&FrameLatent<T>, T, &ContextWindow<FrameLatent<T>>) -> FrameLatent<T>,
{
    fn velocity(
        &self,
        noised: &FrameLatent<T>,
        tau: T,
        ctx: &ContextWindow<FrameLatent<T>>,
    ) -> FrameLatent<T> {
        self(noised, tau, ctx)
    }
}

/// Per-position token logits queried by the masked-token sampler.
pub trait TokenPredictor<T: Scalar> {
    /// Logits over the vocabulary for every position of the partially masked
    /// target frame, shape H' × W' × K.
    fn logits(&self, masked: &TokenGrid, ctx: &ContextWindow<TokenGrid>) -> LatentGrid<T>;
}

impl<T: Scalar, F> TokenPredictor<T> for F
where
    F: Fn(&TokenGrid, &ContextWindow<TokenGrid>) -> LatentGrid<T>,
{
    fn logits(&self, masked: &TokenGrid, ctx: &ContextWindow<TokenGrid>) -> LatentGrid<T> {
        self(masked, ctx)
    }
}

/// Linear interpolation between a data frame and noise: `(1-tau)·x + tau·eps`.
pub fn fm_interpolate<T: Scalar>(
    x: &FrameLatent<T>,
    eps: &FrameLatent<T>,
    tau: T,
) -> Result<FrameLatent<T>, RolloutError> {
    if !x.grid.same_shape(&eps.grid) {
        return Err(RolloutError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x.shape(),
            eps.shape()
        )));
    }
    if tau < T::zero() || tau > T::one() {
        return Err(RolloutError::TauOutOfRange(tau.to_f64().unwrap_or(f64::NAN)));
    }
    let one_minus = T::one() - tau;
    let data = x
        .grid
        .data()
        .iter()
        .zip(eps.grid.data())
        .map(|(&a, &b)| one_minus * a + tau * b)
        .collect();
    let (h, w, c) = x.shape();
    Ok(FrameLatent::new(LatentGrid::new(h, w, c, data)?))
}

/// One Euler step toward the data manifold: `x - delta·v`.
pub fn fm_euler_step<T: Scalar>(
    x_tau: &FrameLatent<T>,
    v: &FrameLatent<T>,
    delta: T,
) -> Result<FrameLatent<T>, RolloutError> {
    if !x_tau.grid.same_shape(&v.grid) {
        return Err(RolloutError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x_tau.shape(),
            v.shape()
        )));
    }
    let data = x_tau
        .grid
        .data()
        .iter()
        .zip(v.grid.data())
        .map(|(&a, &b)| a - delta * b)
        .collect();
    let (h, w, c) = x_tau.shape();
    Ok(FrameLatent::new(LatentGrid::new(h, w, c, data)?))
}

/// Sample the next frame by integrating the velocity field from pure noise
/// (tau = 1) to the data manifold (tau = 0) with a uniform step `1/steps`.
///
/// Deterministic given the rng state and predictor.
pub fn fm_sample_frame<T: Scalar, P: VelocityPredictor<T>, R: Rng + ?Sized>(
    predictor: &P,
    ctx: &ContextWindow<FrameLatent<T>>,
    steps: usize,
    rng: &mut R,
) -> Result<FrameLatent<T>, RolloutError> {
    if steps == 0 {
        return Err(RolloutError::NoSteps);
    }
    let (h, w, c) = ctx
        .latest()
        .ok_or(RolloutError::ContextUnderfilled {
            len: 0,
            capacity: ctx.capacity(),
        })?
        .shape();
    let mut x = FrameLatent::<T>::standard_normal(h, w, c, rng);
    let delta = T::one() / T::from_usize(steps).unwrap();
    for i in 0..steps {
        let tau = T::one() - T::from_usize(i).unwrap() * delta;
        let v = predictor.velocity(&x, tau, ctx);
        if !v.grid.same_shape(&x.grid) {
            return Err(RolloutError::PredictorShapeMismatch {
                expected: x.shape(),
                got: v.shape(),
            });
        }
        x = fm_euler_step(&x, &v, delta)?;
    }
    Ok(x)
}

/// Cosine masking schedule: the fraction of positions left masked at
/// progress `u` in [0, 1].
pub fn mask_ratio<T: Scalar>(u: T) -> T {
    let half_pi = cast::<T>(std::f64::consts::FRAC_PI_2);
    (half_pi * u).cos()
}

/// Binary reveal mask over an H' × W' token grid: `true` = revealed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    revealed: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, revealed: Vec<bool>) -> Result<Self, RolloutError> {
        if revealed.len() != height * width {
            return Err(RolloutError::ShapeMismatch(format!(
                "mask of {} entries for {}x{} grid",
                revealed.len(),
                height,
                width
            )));
        }
        Ok(Self {
            height,
            width,
            revealed,
        })
    }

    pub fn all_revealed(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            revealed: vec![true; height * width],
        }
    }

    pub fn all_masked(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            revealed: vec![false; height * width],
        }
    }

    /// Mask with `round(ratio · H·W)` positions masked, chosen uniformly
    /// without replacement (round half up).
    pub fn sample<T: Scalar, R: Rng + ?Sized>(
        height: usize,
        width: usize,
        ratio: T,
        rng: &mut R,
    ) -> Self {
        let total = height * width;
        let count = round_half_up(ratio.to_f64().unwrap() * total as f64).min(total);
        let mut mask = Self::all_revealed(height, width);
        for idx in rand::seq::index::sample(rng, total, count) {
            mask.revealed[idx] = false;
        }
        mask
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn revealed(&self) -> &[bool] {
        &self.revealed
    }

    pub fn is_revealed(&self, position: usize) -> bool {
        self.revealed[position]
    }

    pub fn masked_count(&self) -> usize {
        self.revealed.iter().filter(|&&r| !r).count()
    }

    pub fn revealed_count(&self) -> usize {
        self.revealed.iter().filter(|&&r| r).count()
    }
}

/// Corrupt a token grid with a reveal mask: revealed positions keep their
/// index, masked positions carry the MASK sentinel.
pub fn apply_mask(tokens: &TokenGrid, mask: &BinaryMask) -> Result<TokenGrid, RolloutError> {
    if tokens.height() != mask.height() || tokens.width() != mask.width() {
        return Err(RolloutError::ShapeMismatch(format!(
            "tokens {}x{} vs mask {}x{}",
            tokens.height(),
            tokens.width(),
            mask.height(),
            mask.width()
        )));
    }
    let sentinel = tokens.mask_token();
    let indices = tokens
        .indices()
        .iter()
        .zip(mask.revealed())
        .map(|(&idx, &revealed)| if revealed { idx } else { sentinel })
        .collect();
    Ok(TokenGrid::new(
        tokens.height(),
        tokens.width(),
        tokens.vocab_size(),
        indices,
    )?)
}

/// Progress of one frame's iterative unmasking: the working token grid, the
/// reveal mask, and the step counter. Revealed positions never return to
/// masked within a frame.
#[derive(Debug, Clone)]
pub struct MaskState {
    tokens: TokenGrid,
    revealed: BinaryMask,
    step: usize,
    total_steps: usize,
}

impl MaskState {
    /// Fully masked start state for an H' × W' frame decoded in
    /// `total_steps` steps.
    pub fn fully_masked(
        height: usize,
        width: usize,
        vocab_size: usize,
        total_steps: usize,
    ) -> Self {
        Self {
            tokens: TokenGrid::fully_masked(height, width, vocab_size),
            revealed: BinaryMask::all_masked(height, width),
            step: 0,
            total_steps,
        }
    }

    pub fn tokens(&self) -> &TokenGrid {
        &self.tokens
    }

    pub fn revealed(&self) -> &BinaryMask {
        &self.revealed
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.total_steps
    }
}

/// One confidence-based unmasking step.
///
/// A candidate token is sampled per masked position from
/// `softmax(logits / temperature)`; its probability is the confidence. The
/// most confident candidates are revealed, enough to put the remaining
/// masked count on the cosine schedule (all positions revealed after the
/// final step). Already-revealed positions are frozen. Candidates are drawn
/// in row-major position order; confidence ties break toward the lower
/// position index.
pub fn mgm_unmask_step<T: Scalar, R: Rng + ?Sized>(
    logits: &LatentGrid<T>,
    state: &MaskState,
    rng: &mut R,
    temperature: T,
) -> Result<(TokenGrid, MaskState), RolloutError> {
    if state.is_done() {
        return Err(RolloutError::StateExhausted {
            steps: state.total_steps,
        });
    }
    let tokens = &state.tokens;
    if logits.height() != tokens.height()
        || logits.width() != tokens.width()
        || logits.channels() != tokens.vocab_size()
    {
        return Err(RolloutError::PredictorShapeMismatch {
            expected: (tokens.height(), tokens.width(), tokens.vocab_size()),
            got: logits.shape(),
        });
    }

    let total = tokens.positions() as f64;
    let next_progress =
        cast::<T>((state.step + 1) as f64 / state.total_steps as f64);
    // ceil(masked - total·ratio) computed as masked - floor(total·ratio),
    // which is exact for an integer masked count.
    let target_masked = (total * mask_ratio(next_progress).to_f64().unwrap()).floor() as usize;
    let masked_now = state.revealed.masked_count();
    let reveal_count = masked_now.saturating_sub(target_masked);

    // Sample one candidate per masked position, row-major.
    let mut candidates: Vec<(usize, u32, T)> = Vec::with_capacity(masked_now);
    for pos in 0..tokens.positions() {
        if state.revealed.is_revealed(pos) {
            continue;
        }
        let (token, confidence) = sample_categorical(logits.vector(pos), temperature, rng);
        candidates.push((pos, token, confidence));
    }
    // Most confident first; ties keep the lower position (stable sort over
    // row-major order).
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());

    let mut next_tokens = state.tokens.clone();
    let mut next_revealed = state.revealed.clone();
    for &(pos, token, _) in candidates.iter().take(reveal_count) {
        next_tokens.indices_mut()[pos] = token;
        next_revealed.revealed[pos] = true;
    }
    let next_state = MaskState {
        tokens: next_tokens.clone(),
        revealed: next_revealed,
        step: state.step + 1,
        total_steps: state.total_steps,
    };
    Ok((next_tokens, next_state))
}

/// Sample from `softmax(logits / temperature)`; returns the index and its
/// probability under the tempered distribution.
fn sample_categorical<T: Scalar, R: Rng + ?Sized>(
    logits: &[T],
    temperature: T,
    rng: &mut R,
) -> (u32, T) {
    let max = logits
        .iter()
        .map(|&l| l / temperature)
        .fold(T::neg_infinity(), |a, v| a.max(v));
    let exps: Vec<T> = logits.iter().map(|&l| (l / temperature - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &v| a + v);
    let draw = T::uniform(rng, T::zero(), T::one()) * sum;
    let mut acc = T::zero();
    for (i, &e) in exps.iter().enumerate() {
        acc += e;
        if draw < acc {
            return (i as u32, e / sum);
        }
    }
    let last = exps.len() - 1;
    (last as u32, exps[last] / sum)
}

/// Decode a full frame from all-masked by looping [`mgm_unmask_step`] with
/// fresh predictor logits each step. Deterministic given the rng state.
pub fn mgm_sample_frame<T: Scalar, P: TokenPredictor<T>, R: Rng + ?Sized>(
    predictor: &P,
    ctx: &ContextWindow<TokenGrid>,
    total_steps: usize,
    rng: &mut R,
    temperature: T,
) -> Result<TokenGrid, RolloutError> {
    if total_steps == 0 {
        return Err(RolloutError::NoSteps);
    }
    let template = ctx.latest().ok_or(RolloutError::ContextUnderfilled {
        len: 0,
        capacity: ctx.capacity(),
    })?;
    let mut state = MaskState::fully_masked(
        template.height(),
        template.width(),
        template.vocab_size(),
        total_steps,
    );
    let mut frame = state.tokens().clone();
    while !state.is_done() {
        let logits = predictor.logits(state.tokens(), ctx);
        let (next, next_state) = mgm_unmask_step(&logits, &state, rng, temperature)?;
        frame = next;
        state = next_state;
    }
    Ok(frame)
}

/// Autoregressive sliding-window generation: repeatedly sample the next frame
/// from the current context, append it, and drop the oldest frame.
///
/// `sampler` is typically [`fm_sample_frame`] or [`mgm_sample_frame`] closed
/// over its predictor and configuration.
pub fn rollout<F, E>(
    mut sampler: impl FnMut(&ContextWindow<F>) -> Result<F, E>,
    initial_ctx: &ContextWindow<F>,
    num_frames: usize,
) -> Result<Vec<F>, E>
where
    F: Clone,
    E: From<RolloutError>,
{
    if !initial_ctx.is_full() {
        return Err(RolloutError::ContextUnderfilled {
            len: initial_ctx.len(),
            capacity: initial_ctx.capacity(),
        }
        .into());
    }
    let mut ctx = initial_ctx.clone();
    let mut generated = Vec::with_capacity(num_frames);
    for _ in 0..num_frames {
        let frame = sampler(&ctx)?;
        ctx.push(frame.clone());
        generated.push(frame);
    }
    Ok(generated)
}

/// Flow-matching context corruption: with probability `p_apply`, every frame
/// is replaced by its interpolation toward fresh noise at a per-frame
/// `tau ~ Uniform(0, tau_max)`.
pub fn context_noise_fm<T: Scalar, R: Rng + ?Sized>(
    ctx: &ContextWindow<FrameLatent<T>>,
    rng: &mut R,
    tau_max: T,
    p_apply: T,
) -> Result<ContextWindow<FrameLatent<T>>, RolloutError> {
    let gate = T::uniform(rng, T::zero(), T::one());
    if gate >= p_apply {
        return Ok(ctx.clone());
    }
    let mut out = ContextWindow::new(ctx.capacity(), ctx.rate_hz());
    for frame in ctx.frames() {
        let tau = T::uniform(rng, T::zero(), tau_max);
        let (h, w, c) = frame.shape();
        let eps = FrameLatent::<T>::standard_normal(h, w, c, rng);
        out.push(fm_interpolate(frame, &eps, tau)?);
    }
    Ok(out)
}

/// Discrete-model context corruption: `round(frame_frac · N)` whole frames
/// become all-MASK, then `round(token_frac · remaining tokens)` uniformly
/// chosen positions across the remaining frames become MASK (round half up).
pub fn context_augment_mgm<R: Rng + ?Sized>(
    ctx: &ContextWindow<TokenGrid>,
    rng: &mut R,
    frame_frac: f64,
    token_frac: f64,
) -> ContextWindow<TokenGrid> {
    let n = ctx.len();
    let mut frames: Vec<TokenGrid> = ctx.frames().cloned().collect();
    let frames_to_mask = round_half_up(frame_frac * n as f64).min(n);
    let chosen = rand::seq::index::sample(rng, n, frames_to_mask).into_vec();
    for &fi in &chosen {
        frames[fi] =
            TokenGrid::fully_masked(frames[fi].height(), frames[fi].width(), frames[fi].vocab_size());
    }

    // Flat index space over positions of the frames that were not replaced.
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for (fi, frame) in frames.iter().enumerate() {
        if chosen.contains(&fi) {
            continue;
        }
        for pos in 0..frame.positions() {
            slots.push((fi, pos));
        }
    }
    let tokens_to_mask = round_half_up(token_frac * slots.len() as f64).min(slots.len());
    for idx in rand::seq::index::sample(rng, slots.len(), tokens_to_mask) {
        let (fi, pos) = slots[idx];
        let sentinel = frames[fi].mask_token();
        frames[fi].indices_mut()[pos] = sentinel;
    }
    ContextWindow::from_frames(ctx.capacity(), ctx.rate_hz(), frames)
}

/// With probability `p`, drop the whole context (the unconditional-generation
/// signal, `None`); otherwise return it unchanged.
pub fn context_dropout<F: Clone, R: Rng + ?Sized>(
    ctx: &ContextWindow<F>,
    rng: &mut R,
    p: f64,
) -> Option<ContextWindow<F>> {
    if rng.gen_range(0.0..1.0) < p {
        None
    } else {
        Some(ctx.clone())
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Analytic predictors for exercising the samplers without trained models.
pub mod predictors {
    use super::*;

    /// Exact conditional velocity for a known target frame: on the linear
    /// interpolation path toward `target`, `v = (x - target) / tau`, so the
    /// Euler sampler recovers `target` exactly for any step count.
    ///
    /// Only valid for `tau > 0`; the sampler never queries at `tau = 0`.
    #[derive(Debug, Clone)]
    pub struct OracleVelocity<T> {
        pub target: FrameLatent<T>,
    }

    impl<T: Scalar> VelocityPredictor<T> for OracleVelocity<T> {
        fn velocity(
            &self,
            noised: &FrameLatent<T>,
            tau: T,
            _ctx: &ContextWindow<FrameLatent<T>>,
        ) -> FrameLatent<T> {
            let (h, w, c) = noised.shape();
            let data = noised
                .grid
                .data()
                .iter()
                .zip(self.target.grid.data())
                .map(|(&x, &t)| (x - t) / tau)
                .collect();
            FrameLatent::new(LatentGrid::new(h, w, c, data).expect("finite velocity"))
        }
    }

    /// Constant velocity field; zero makes the sampler return its own noise
    /// draw.
    #[derive(Debug, Clone)]
    pub struct ConstantVelocity<T> {
        pub value: T,
    }

    impl<T: Scalar> VelocityPredictor<T> for ConstantVelocity<T> {
        fn velocity(
            &self,
            noised: &FrameLatent<T>,
            _tau: T,
            _ctx: &ContextWindow<FrameLatent<T>>,
        ) -> FrameLatent<T> {
            let (h, w, c) = noised.shape();
            FrameLatent::new(LatentGrid::filled(h, w, c, self.value))
        }
    }

    /// One-hot logits at a fixed token everywhere.
    #[derive(Debug, Clone)]
    pub struct ConstantToken {
        pub token: u32,
        pub margin: f64,
    }

    impl ConstantToken {
        pub fn new(token: u32) -> Self {
            Self {
                token,
                margin: 50.0,
            }
        }
    }

    impl<T: Scalar> TokenPredictor<T> for ConstantToken {
        fn logits(&self, masked: &TokenGrid, _ctx: &ContextWindow<TokenGrid>) -> LatentGrid<T> {
            one_hot_logits(masked.height(), masked.width(), masked.vocab_size(), |_| {
                self.token
            }, self.margin)
        }
    }

    /// One-hot logits at the last context frame's token per position: the
    /// content-copying pathology in its limit.
    #[derive(Debug, Clone)]
    pub struct CopyLastContext {
        pub margin: f64,
    }

    impl Default for CopyLastContext {
        fn default() -> Self {
            Self { margin: 50.0 }
        }
    }

    impl<T: Scalar> TokenPredictor<T> for CopyLastContext {
        fn logits(&self, masked: &TokenGrid, ctx: &ContextWindow<TokenGrid>) -> LatentGrid<T> {
            let last = ctx.latest().expect("copy predictor needs context");
            one_hot_logits(
                masked.height(),
                masked.width(),
                masked.vocab_size(),
                |pos| last.indices()[pos],
                self.margin,
            )
        }
    }

    fn one_hot_logits<T: Scalar>(
        height: usize,
        width: usize,
        vocab: usize,
        token_at: impl Fn(usize) -> u32,
        margin: f64,
    ) -> LatentGrid<T> {
        let mut data = vec![T::zero(); height * width * vocab];
        for pos in 0..height * width {
            let token = token_at(pos) as usize;
            data[pos * vocab + token] = cast::<T>(margin);
        }
        LatentGrid::new(height, width, vocab, data).expect("finite logits")
    }
}
