//! Training objectives as pure numeric functions with closed-form gradients:
//! flow-matching regression, masked cross-entropy, soft-target KL
//! distillation over code similarities, and their weighted combination.

use thiserror::Error;

use crate::quantizer::{LatentGrid, SimilarityMatrix, TokenGrid};
use crate::rollout::{BinaryMask, FrameLatent};
use crate::scalar::{cast, Scalar};

/// Model-logit temperature for the soft-target distillation loss.
pub const DEFAULT_KD_MODEL_TEMPERATURE: f64 = 2.0;
/// Similarity-target temperature for the soft-target distillation loss.
pub const DEFAULT_KD_TARGET_TEMPERATURE: f64 = 0.2;
/// Weight of the distillation term in the combined objective.
pub const DEFAULT_KD_WEIGHT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask reveals every position: nothing to score")]
    NoMaskedPositions,
    #[error("targets contain a MASK sentinel at position {position}")]
    MaskedTokenInTargets { position: usize },
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
}

/// A loss value together with its gradient grid (with respect to the
/// differentiated argument) when one was computed.
#[derive(Debug, Clone)]
pub struct LossValue<T> {
    pub value: T,
    pub gradient: Option<LatentGrid<T>>,
}

/// Per-position soft-target distributions with the temperature pair that
/// produced them.
#[derive(Debug, Clone)]
pub struct SoftTargets<T> {
    pub probabilities: LatentGrid<T>,
    pub model_temperature: T,
    pub target_temperature: T,
}

impl<T: Scalar> SoftTargets<T> {
    /// Validates that every per-position vector is a probability
    /// distribution (entries >= 0, summing to 1 within 1e-9).
    pub fn new(
        probabilities: LatentGrid<T>,
        model_temperature: T,
        target_temperature: T,
    ) -> Result<Self, LossError> {
        let tol = cast::<T>(1e-9);
        for pos in 0..probabilities.positions() {
            let row = probabilities.vector(pos);
            if row.iter().any(|&p| p < T::zero()) {
                return Err(LossError::ShapeMismatch(format!(
                    "negative probability at position {pos}"
                )));
            }
            let sum = row.iter().fold(T::zero(), |a, &p| a + p);
            if (sum - T::one()).abs() > tol {
                return Err(LossError::ShapeMismatch(format!(
                    "probabilities at position {pos} sum to {sum}"
                )));
            }
        }
        Ok(Self {
            probabilities,
            model_temperature,
            target_temperature,
        })
    }
}

/// Flow-matching regression: mean squared error between the predicted
/// velocity and the interpolation-path target `eps - x`, averaged over all
/// entries. Gradient is with respect to `v_pred`.
pub fn fm_loss<T: Scalar>(
    v_pred: &FrameLatent<T>,
    x: &FrameLatent<T>,
    eps: &FrameLatent<T>,
) -> Result<LossValue<T>, LossError> {
    if !v_pred.grid.same_shape(&x.grid) || !v_pred.grid.same_shape(&eps.grid) {
        return Err(LossError::ShapeMismatch(format!(
            "v_pred {:?}, x {:?}, eps {:?}",
            v_pred.shape(),
            x.shape(),
            eps.shape()
        )));
    }
    let count = T::from_usize(v_pred.grid.data().len()).unwrap();
    let mut value = T::zero();
    let mut grad = Vec::with_capacity(v_pred.grid.data().len());
    let two = cast::<T>(2.0);
    for ((&v, &xv), &ev) in v_pred
        .grid
        .data()
        .iter()
        .zip(x.grid.data())
        .zip(eps.grid.data())
    {
        let residual = v - (ev - xv);
        value += residual * residual;
        grad.push(two * residual / count);
    }
    let (h, w, c) = v_pred.shape();
    Ok(LossValue {
        value: value / count,
        gradient: Some(LatentGrid::new(h, w, c, grad).expect("finite gradient")),
    })
}

/// Cross-entropy over the masked positions only, normalized by the masked
/// count. Revealed positions contribute nothing. Gradient is with respect to
/// the logits.
pub fn masked_ce_loss<T: Scalar>(
    logits: &LatentGrid<T>,
    targets: &TokenGrid,
    mask: &BinaryMask,
) -> Result<LossValue<T>, LossError> {
    let k = targets.vocab_size();
    if logits.height() != targets.height()
        || logits.width() != targets.width()
        || logits.channels() != k
    {
        return Err(LossError::ShapeMismatch(format!(
            "logits {:?} vs targets {}x{} over {} tokens",
            logits.shape(),
            targets.height(),
            targets.width(),
            k
        )));
    }
    if mask.height() != targets.height() || mask.width() != targets.width() {
        return Err(LossError::ShapeMismatch(format!(
            "mask {}x{} vs targets {}x{}",
            mask.height(),
            mask.width(),
            targets.height(),
            targets.width()
        )));
    }
    for pos in 0..targets.positions() {
        if targets.is_masked(pos) {
            return Err(LossError::MaskedTokenInTargets { position: pos });
        }
    }
    let masked_count = mask.masked_count();
    if masked_count == 0 {
        return Err(LossError::NoMaskedPositions);
    }
    let norm = T::from_usize(masked_count).unwrap();

    let mut value = T::zero();
    let mut grad = vec![T::zero(); logits.data().len()];
    for pos in 0..targets.positions() {
        if mask.is_revealed(pos) {
            continue;
        }
        let row = logits.vector(pos);
        let target = targets.indices()[pos] as usize;
        let max = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
        let mut sum = T::zero();
        for &l in row {
            sum += (l - max).exp();
        }
        let log_sum = sum.ln() + max;
        value += log_sum - row[target];
        for (j, &l) in row.iter().enumerate() {
            let softmax = (l - max).exp() / sum;
            let indicator = if j == target { T::one() } else { T::zero() };
            grad[pos * k + j] = (softmax - indicator) / norm;
        }
    }
    let (h, w) = (targets.height(), targets.width());
    Ok(LossValue {
        value: value / norm,
        gradient: Some(LatentGrid::new(h, w, k, grad).expect("finite gradient")),
    })
}

/// Soft targets from similarity rows: per position, `softmax(s / T')` where
/// `s` is the similarity-matrix row of the ground-truth token.
pub fn soft_targets_from_similarity<T: Scalar>(
    similarity: &SimilarityMatrix<T>,
    targets: &TokenGrid,
    model_temperature: T,
    target_temperature: T,
) -> Result<SoftTargets<T>, LossError> {
    if target_temperature <= T::zero() || model_temperature <= T::zero() {
        return Err(LossError::InvalidTemperature(
            target_temperature
                .min(model_temperature)
                .to_f64()
                .unwrap_or(f64::NAN),
        ));
    }
    let k = similarity.size();
    if targets.vocab_size() != k {
        return Err(LossError::ShapeMismatch(format!(
            "targets over {} tokens vs {}x{} similarity matrix",
            targets.vocab_size(),
            k,
            k
        )));
    }
    let mut data = Vec::with_capacity(targets.positions() * k);
    for pos in 0..targets.positions() {
        let idx = targets.indices()[pos];
        if idx == targets.mask_token() {
            return Err(LossError::MaskedTokenInTargets { position: pos });
        }
        let row = similarity.row(idx as usize);
        data.extend(tempered_softmax(row, target_temperature));
    }
    let probabilities = LatentGrid::new(targets.height(), targets.width(), k, data)
        .expect("softmax outputs are finite");
    SoftTargets::new(probabilities, model_temperature, target_temperature)
}

/// Soft-target distillation: `T·T' · Σ_positions KL(p_t || p_o)` with
/// `p_o = softmax(u/T)` and the soft targets `p_t` supplied (normally
/// `softmax(s/T')` over similarity rows). Summed over positions, per the
/// objective's definition. Gradient is with respect to the logits `u`:
/// `T' · (p_o - p_t)` per entry.
pub fn kd_soft_target_loss<T: Scalar>(
    logits: &LatentGrid<T>,
    targets: &SoftTargets<T>,
) -> Result<LossValue<T>, LossError> {
    let p_t = &targets.probabilities;
    if !logits.same_shape(p_t) {
        return Err(LossError::ShapeMismatch(format!(
            "logits {:?} vs soft targets {:?}",
            logits.shape(),
            p_t.shape()
        )));
    }
    let t_model = targets.model_temperature;
    let t_target = targets.target_temperature;
    if t_model <= T::zero() || t_target <= T::zero() {
        return Err(LossError::InvalidTemperature(
            t_model.min(t_target).to_f64().unwrap_or(f64::NAN),
        ));
    }
    let k = logits.channels();
    let prefactor = t_model * t_target;
    let mut value = T::zero();
    let mut grad = vec![T::zero(); logits.data().len()];
    for pos in 0..logits.positions() {
        let p_o = tempered_softmax(logits.vector(pos), t_model);
        let target_row = p_t.vector(pos);
        for (j, (&pt, &po)) in target_row.iter().zip(&p_o).enumerate() {
            if pt > T::zero() {
                value += pt * (pt.ln() - po.ln());
            }
            // d/du_j of prefactor * KL = T' * (p_o - p_t).
            grad[pos * k + j] = t_target * (po - pt);
        }
    }
    let (h, w, c) = logits.shape();
    Ok(LossValue {
        value: prefactor * value,
        gradient: Some(LatentGrid::new(h, w, c, grad).expect("finite gradient")),
    })
}

/// Weighted sum `ce + lambda · kd`; gradients combine linearly when both
/// parts carry one of the same shape.
pub fn combined_mgm_loss<T: Scalar>(
    ce: &LossValue<T>,
    kd: &LossValue<T>,
    lambda: T,
) -> LossValue<T> {
    let gradient = match (&ce.gradient, &kd.gradient) {
        (Some(g_ce), Some(g_kd)) if g_ce.same_shape(g_kd) => {
            let data = g_ce
                .data()
                .iter()
                .zip(g_kd.data())
                .map(|(&a, &b)| a + lambda * b)
                .collect();
            let (h, w, c) = g_ce.shape();
            Some(LatentGrid::new(h, w, c, data).expect("finite gradient"))
        }
        _ => None,
    };
    LossValue {
        value: ce.value + lambda * kd.value,
        gradient,
    }
}

fn tempered_softmax<T: Scalar>(logits: &[T], temperature: T) -> Vec<T> {
    let max = logits
        .iter()
        .map(|&l| l / temperature)
        .fold(T::neg_infinity(), |a, v| a.max(v));
    let exps: Vec<T> = logits
        .iter()
        .map(|&l| (l / temperature - max).exp())
        .collect();
    let sum = exps.iter().fold(T::zero(), |a, &v| a + v);
    exps.into_iter().map(|v| v / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::{similarity_matrix, Codebook};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(h: usize, w: usize, c: usize, data: Vec<f64>) -> FrameLatent<f64> {
        FrameLatent::new(LatentGrid::new(h, w, c, data).unwrap())
    }

    fn random_frame(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> FrameLatent<f64> {
        let data = (0..h * w * c).map(|_| rng.gen_range(-2.0..2.0)).collect();
        frame(h, w, c, data)
    }

    /// Central finite differences of `f` with respect to the grid values.
    fn finite_difference_gradient(
        base: &LatentGrid<f64>,
        mut f: impl FnMut(&LatentGrid<f64>) -> f64,
    ) -> Vec<f64> {
        let h = 1e-5;
        let mut grad = Vec::with_capacity(base.data().len());
        for i in 0..base.data().len() {
            let mut plus = base.clone();
            plus.data_mut()[i] += h;
            let mut minus = base.clone();
            minus.data_mut()[i] -= h;
            grad.push((f(&plus) - f(&minus)) / (2.0 * h));
        }
        grad
    }

    fn assert_gradients_close(analytic: &[f64], numeric: &[f64]) {
        for (a, n) in analytic.iter().zip(numeric) {
            let scale = a.abs().max(n.abs()).max(1e-8);
            assert!(
                (a - n).abs() / scale <= 1e-5,
                "analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn fm_loss_zero_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_frame(2, 2, 3, &mut rng);
        let eps = random_frame(2, 2, 3, &mut rng);
        let target_data: Vec<f64> = eps
            .grid
            .data()
            .iter()
            .zip(x.grid.data())
            .map(|(&e, &xv)| e - xv)
            .collect();
        let v = frame(2, 2, 3, target_data);
        let loss = fm_loss(&v, &x, &eps).unwrap();
        assert!(loss.value.abs() < 1e-15);
    }

    #[test]
    fn fm_loss_unit_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_frame(2, 2, 2, &mut rng);
        let eps = random_frame(2, 2, 2, &mut rng);
        let v_data: Vec<f64> = eps
            .grid
            .data()
            .iter()
            .zip(x.grid.data())
            .map(|(&e, &xv)| e - xv + 1.0)
            .collect();
        let v = frame(2, 2, 2, v_data);
        let loss = fm_loss(&v, &x, &eps).unwrap();
        assert!((loss.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fm_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_frame(4, 4, 3, &mut rng);
        let eps = random_frame(4, 4, 3, &mut rng);
        let v = random_frame(4, 4, 3, &mut rng);
        let loss = fm_loss(&v, &x, &eps).unwrap();
        let numeric = finite_difference_gradient(&v.grid, |g| {
            fm_loss(&FrameLatent::new(g.clone()), &x, &eps).unwrap().value
        });
        assert_gradients_close(loss.gradient.as_ref().unwrap().data(), &numeric);
    }

    #[test]
    fn fm_loss_shape_mismatch() {
        let a = frame(1, 1, 2, vec![0.0, 0.0]);
        let b = frame(1, 2, 1, vec![0.0, 0.0]);
        assert!(matches!(
            fm_loss(&a, &a, &b),
            Err(LossError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn ce_confident_correct_logit_drives_loss_to_zero() {
        let k = 4;
        let targets = TokenGrid::new(1, 1, k, vec![2]).unwrap();
        let mask = BinaryMask::all_masked(1, 1);
        let mut logits_data = vec![0.0; k];
        logits_data[2] = 20.0;
        let logits = LatentGrid::new(1, 1, k, logits_data).unwrap();
        let loss = masked_ce_loss(&logits, &targets, &mask).unwrap();
        assert!(loss.value < 1e-8, "loss {}", loss.value);
    }

    #[test]
    fn ce_uniform_logits_is_log_k() {
        let k = 16;
        let targets = TokenGrid::new(2, 2, k, vec![3; 4]).unwrap();
        let mask = BinaryMask::all_masked(2, 2);
        let logits = LatentGrid::new(2, 2, k, vec![0.25; 4 * k]).unwrap();
        let loss = masked_ce_loss(&logits, &targets, &mask).unwrap();
        assert!((loss.value - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_only_masked_positions_count() {
        let k = 3;
        let targets = TokenGrid::new(1, 2, k, vec![0, 1]).unwrap();
        // Second position revealed: only the first contributes.
        let mask = BinaryMask::new(1, 2, vec![false, true]).unwrap();
        let logits =
            LatentGrid::new(1, 2, k, vec![5.0, 0.0, 0.0, 0.0, -3.0, 0.0]).unwrap();
        let loss = masked_ce_loss(&logits, &targets, &mask).unwrap();
        let expected = {
            let row: [f64; 3] = [5.0, 0.0, 0.0];
            let sum: f64 = row.iter().map(|l| l.exp()).sum();
            sum.ln() - 5.0
        };
        assert!((loss.value - expected).abs() < 1e-12);
        // Gradient at the revealed position is zero.
        let grad = loss.gradient.unwrap();
        assert!(grad.vector(1).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ce_monotone_in_correct_logit() {
        let k = 5;
        let targets = TokenGrid::new(1, 1, k, vec![1]).unwrap();
        let mask = BinaryMask::all_masked(1, 1);
        let mut last = f64::INFINITY;
        for step in 0..10 {
            let mut data = vec![0.7; k];
            data[1] = step as f64 * 0.5;
            let logits = LatentGrid::new(1, 1, k, data).unwrap();
            let loss = masked_ce_loss(&logits, &targets, &mask).unwrap();
            assert!(loss.value < last);
            last = loss.value;
        }
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = 4;
        let indices = (0..4).map(|_| rng.gen_range(0..k as u32)).collect();
        let targets = TokenGrid::new(2, 2, k, indices).unwrap();
        let mask = BinaryMask::new(2, 2, vec![false, true, false, false]).unwrap();
        let data = (0..4 * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let logits = LatentGrid::new(2, 2, k, data).unwrap();
        let loss = masked_ce_loss(&logits, &targets, &mask).unwrap();
        let numeric = finite_difference_gradient(&logits, |g| {
            masked_ce_loss(g, &targets, &mask).unwrap().value
        });
        assert_gradients_close(loss.gradient.as_ref().unwrap().data(), &numeric);
    }

    #[test]
    fn ce_error_paths() {
        let k = 3;
        let targets = TokenGrid::new(1, 1, k, vec![0]).unwrap();
        let logits = LatentGrid::new(1, 1, k, vec![0.0; 3]).unwrap();
        assert!(matches!(
            masked_ce_loss(&logits, &targets, &BinaryMask::all_revealed(1, 1)),
            Err(LossError::NoMaskedPositions)
        ));
        let masked_targets = TokenGrid::fully_masked(1, 1, k);
        assert!(matches!(
            masked_ce_loss(&logits, &masked_targets, &BinaryMask::all_masked(1, 1)),
            Err(LossError::MaskedTokenInTargets { position: 0 })
        ));
    }

    #[test]
    fn kd_zero_when_distributions_match() {
        // u/T == s/T' up to an additive constant per position -> KL = 0.
        let k = 4;
        let t_model = DEFAULT_KD_MODEL_TEMPERATURE;
        let t_target = DEFAULT_KD_TARGET_TEMPERATURE;
        let s_rows = vec![1.0, 0.2, -0.3, 0.05];
        let u: Vec<f64> = s_rows
            .iter()
            .map(|&s| s / t_target * t_model + 7.0)
            .collect();
        let p_t_data = {
            let exp: Vec<f64> = s_rows.iter().map(|&s| (s / t_target).exp()).collect();
            let z: f64 = exp.iter().sum();
            exp.into_iter().map(|e| e / z).collect::<Vec<f64>>()
        };
        let targets = SoftTargets::new(
            LatentGrid::new(1, 1, k, p_t_data).unwrap(),
            t_model,
            t_target,
        )
        .unwrap();
        let logits = LatentGrid::new(1, 1, k, u).unwrap();
        let loss = kd_soft_target_loss(&logits, &targets).unwrap();
        assert!(loss.value.abs() <= 1e-12, "loss {}", loss.value);
    }

    #[test]
    fn kd_hand_evaluated_two_tokens() {
        // K=2, s=(1,0), T'=0.2, u=(0,0), T=2:
        // p_t = (sigma(5), sigma(-5)), p_o = (0.5, 0.5),
        // loss = 0.4 * KL(p_t || p_o) = 0.2611870309797613.
        let cb = Codebook::<f64>::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let sim = similarity_matrix(&cb);
        let targets_grid = TokenGrid::new(1, 1, 2, vec![0]).unwrap();
        let soft = soft_targets_from_similarity(&sim, &targets_grid, 2.0, 0.2).unwrap();
        let sigma5 = 1.0 / (1.0 + (-5.0f64).exp());
        assert!((soft.probabilities.vector(0)[0] - sigma5).abs() < 1e-12);
        let logits = LatentGrid::new(1, 1, 2, vec![0.0, 0.0]).unwrap();
        let loss = kd_soft_target_loss(&logits, &soft).unwrap();
        assert!(
            (loss.value - 0.2611870309797613).abs() < 1e-12,
            "loss {}",
            loss.value
        );
    }

    #[test]
    fn kd_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 16;
        let entries: Vec<f64> = (0..k * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cb = Codebook::new(k, 6, entries).unwrap();
        let sim = similarity_matrix(&cb);
        let indices = (0..16).map(|_| rng.gen_range(0..k as u32)).collect();
        let targets_grid = TokenGrid::new(4, 4, k, indices).unwrap();
        let soft = soft_targets_from_similarity(&sim, &targets_grid, 2.0, 0.2).unwrap();
        let data = (0..16 * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let logits = LatentGrid::new(4, 4, k, data).unwrap();
        let loss = kd_soft_target_loss(&logits, &soft).unwrap();
        let numeric = finite_difference_gradient(&logits, |g| {
            kd_soft_target_loss(g, &soft).unwrap().value
        });
        assert_gradients_close(loss.gradient.as_ref().unwrap().data(), &numeric);
    }

    #[test]
    fn kd_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = 8;
        let entries: Vec<f64> = (0..k * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cb = Codebook::new(k, 4, entries).unwrap();
        let sim = similarity_matrix(&cb);
        let targets_grid = TokenGrid::new(1, 2, k, vec![1, 5]).unwrap();
        let soft = soft_targets_from_similarity(&sim, &targets_grid, 2.0, 0.2).unwrap();

        // Shifting all logits u by a constant leaves the loss unchanged.
        let data: Vec<f64> = (0..2 * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let shifted: Vec<f64> = data.iter().map(|&v| v + 11.5).collect();
        let a = kd_soft_target_loss(&LatentGrid::new(1, 2, k, data).unwrap(), &soft).unwrap();
        let b =
            kd_soft_target_loss(&LatentGrid::new(1, 2, k, shifted).unwrap(), &soft).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);

        // Shifting all similarities s by a constant leaves the soft targets
        // (and hence the loss) unchanged.
        let s_row: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let soft_of = |row: &[f64]| {
            let exp: Vec<f64> = row.iter().map(|&s| (s / 0.2).exp()).collect();
            let z: f64 = exp.iter().sum();
            let probs: Vec<f64> = exp.into_iter().map(|e| e / z).collect();
            SoftTargets::new(LatentGrid::new(1, 1, k, probs).unwrap(), 2.0, 0.2).unwrap()
        };
        let s_shifted: Vec<f64> = s_row.iter().map(|&s| s + 3.7).collect();
        let u = LatentGrid::new(1, 1, k, (0..k).map(|i| i as f64 * 0.3).collect()).unwrap();
        let plain = kd_soft_target_loss(&u, &soft_of(&s_row)).unwrap();
        let moved = kd_soft_target_loss(&u, &soft_of(&s_shifted)).unwrap();
        assert!((plain.value - moved.value).abs() < 1e-9);
    }

    #[test]
    fn soft_targets_reject_invalid_rows() {
        let bad = LatentGrid::new(1, 1, 2, vec![0.7, 0.7]).unwrap();
        assert!(SoftTargets::new(bad, 2.0, 0.2).is_err());
    }

    #[test]
    fn combined_loss_arithmetic() {
        let ce = LossValue {
            value: 1.0,
            gradient: None,
        };
        let kd = LossValue {
            value: 2.0,
            gradient: None,
        };
        assert_eq!(combined_mgm_loss(&ce, &kd, 0.5).value, 2.0);
        assert_eq!(combined_mgm_loss(&ce, &kd, 0.0).value, ce.value);
    }

    #[test]
    fn combined_loss_is_linear() {
        let mk = |v: f64| LossValue::<f64> {
            value: v,
            gradient: None,
        };
        let lambda = 0.5;
        let lhs = combined_mgm_loss(&mk(1.0), &mk(2.0), lambda).value
            + combined_mgm_loss(&mk(3.0), &mk(4.0), lambda).value;
        let rhs = combined_mgm_loss(&mk(4.0), &mk(6.0), lambda).value;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn combined_loss_merges_gradients() {
        let grid = |v: f64| LatentGrid::new(1, 1, 2, vec![v, v]).unwrap();
        let ce = LossValue {
            value: 1.0,
            gradient: Some(grid(1.0)),
        };
        let kd = LossValue {
            value: 2.0,
            gradient: Some(grid(4.0)),
        };
        let combined = combined_mgm_loss(&ce, &kd, 0.5);
        assert_eq!(combined.gradient.unwrap().data(), &[3.0, 3.0]);
    }
}
