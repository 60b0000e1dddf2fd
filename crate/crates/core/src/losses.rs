//! Detector training losses as pure scalar functions, with analytic
//! derivatives for verification. No training loop lives here — these exist
//! so the formulas can be checked and documented independently of any
//! framework.

use thiserror::Error;

use crate::model::{BoxParams, FocalParams};

/// Predictions are clamped to `[EPSILON, 1 - EPSILON]` before taking logs.
pub const EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("class vectors have mismatched lengths: {expected} vs {got}")]
    LengthMismatch { expected: usize, got: usize },
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(EPSILON, 1.0 - EPSILON)
}

/// Binary cross-entropy on the objectness prediction:
/// `-(y·ln ŷ + (1-y)·ln(1-ŷ))`.
pub fn objectness_loss(y: f64, y_hat: f64) -> f64 {
    let p = clamp_prob(y_hat);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Derivative of [`objectness_loss`] with respect to the prediction.
pub fn objectness_loss_grad(y: f64, y_hat: f64) -> f64 {
    let p = clamp_prob(y_hat);
    -y / p + (1.0 - y) / (1.0 - p)
}

/// Multi-class cross-entropy `-Σ_c y_c·ln ŷ_c` over a one-hot target.
pub fn classification_loss(y: &[f64], y_hat: &[f64]) -> Result<f64, LossError> {
    if y.len() != y_hat.len() {
        return Err(LossError::LengthMismatch {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    Ok(y.iter()
        .zip(y_hat)
        .map(|(&yc, &pc)| -yc * clamp_prob(pc).ln())
        .sum())
}

/// Gradient of [`classification_loss`] with respect to each prediction.
pub fn classification_loss_grad(y: &[f64], y_hat: &[f64]) -> Result<Vec<f64>, LossError> {
    if y.len() != y_hat.len() {
        return Err(LossError::LengthMismatch {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    Ok(y.iter()
        .zip(y_hat)
        .map(|(&yc, &pc)| -yc / clamp_prob(pc))
        .collect())
}

/// Sum of squared errors over the four box parameters.
pub fn bbox_loss(y: &BoxParams, y_hat: &BoxParams) -> f64 {
    let d = [
        y.cx - y_hat.cx,
        y.cy - y_hat.cy,
        y.w - y_hat.w,
        y.h - y_hat.h,
    ];
    d.iter().map(|e| e * e).sum()
}

/// Gradient of [`bbox_loss`] with respect to the predicted parameters,
/// ordered `(cx, cy, w, h)`.
pub fn bbox_loss_grad(y: &BoxParams, y_hat: &BoxParams) -> [f64; 4] {
    [
        2.0 * (y_hat.cx - y.cx),
        2.0 * (y_hat.cy - y.cy),
        2.0 * (y_hat.w - y.w),
        2.0 * (y_hat.h - y.h),
    ]
}

/// Focal loss on the center prediction: `-α·(1-ŷ)^γ·y·ln ŷ`.
///
/// The formula has no `(1-y)` term, so it is identically zero for `y = 0`.
pub fn center_focal_loss(y: f64, y_hat: f64, params: &FocalParams) -> f64 {
    let p = clamp_prob(y_hat);
    -params.alpha * (1.0 - p).powf(params.gamma) * y * p.ln()
}

/// Derivative of [`center_focal_loss`] with respect to the prediction.
pub fn center_focal_loss_grad(y: f64, y_hat: f64, params: &FocalParams) -> f64 {
    let p = clamp_prob(y_hat);
    let a = params.alpha;
    let g = params.gamma;
    // d/dp [-a (1-p)^g y ln p] = a y g (1-p)^(g-1) ln p - a y (1-p)^g / p
    let modulating = if g == 0.0 {
        0.0
    } else {
        a * y * g * (1.0 - p).powf(g - 1.0) * p.ln()
    };
    modulating - a * y * (1.0 - p).powf(g) / p
}

/// Per-term weights for [`total_loss`]; all default to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub objectness: f64,
    pub classification: f64,
    pub bbox: f64,
    pub center: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            objectness: 1.0,
            classification: 1.0,
            bbox: 1.0,
            center: 1.0,
        }
    }
}

/// Weighted sum of the four loss components.
pub fn total_loss(
    objectness: f64,
    classification: f64,
    bbox: f64,
    center: f64,
    weights: &LossWeights,
) -> f64 {
    weights.objectness * objectness
        + weights.classification * classification
        + weights.bbox * bbox
        + weights.center * center
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn objectness_examples() {
        assert!(objectness_loss(1.0, 1.0).abs() < 1e-10);
        assert_relative_eq!(
            objectness_loss(1.0, 0.5),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        // y <-> 1-y symmetry
        assert_eq!(objectness_loss(0.0, 0.5), objectness_loss(1.0, 0.5));
    }

    #[test]
    fn classification_examples() {
        let one_hot = [0.0, 1.0, 0.0, 0.0];
        assert!(classification_loss(&one_hot, &one_hot).unwrap() < 1e-10);
        let uniform = [0.25; 4];
        assert_relative_eq!(
            classification_loss(&one_hot, &uniform).unwrap(),
            4.0f64.ln(),
            epsilon = 1e-12
        );
        assert!(classification_loss(&one_hot, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn classification_is_permutation_invariant() {
        let y = [1.0, 0.0, 0.0];
        let p = [0.6, 0.3, 0.1];
        let y_perm = [0.0, 0.0, 1.0];
        let p_perm = [0.3, 0.1, 0.6];
        assert_eq!(
            classification_loss(&y, &p).unwrap(),
            classification_loss(&y_perm, &p_perm).unwrap()
        );
    }

    #[test]
    fn bbox_examples() {
        let a = BoxParams::new(0.5, 0.5, 0.2, 0.3).unwrap();
        assert_eq!(bbox_loss(&a, &a), 0.0);
        let b = BoxParams::new(0.6, 0.6, 0.3, 0.4).unwrap();
        assert_relative_eq!(bbox_loss(&a, &b), 0.04, epsilon = 1e-12);
        assert_eq!(bbox_loss(&a, &b), bbox_loss(&b, &a));
    }

    #[test]
    fn focal_examples() {
        let degenerate = FocalParams::new(1.0, 0.0).unwrap();
        // gamma = 0, alpha = 1 reduces to -y ln(p)
        assert_relative_eq!(
            center_focal_loss(1.0, 0.3, &degenerate),
            -(0.3f64.ln()),
            epsilon = 1e-12
        );
        let params = FocalParams::new(0.25, 2.0).unwrap();
        assert!(center_focal_loss(1.0, 1.0, &params).abs() < 1e-10);
        assert_relative_eq!(
            center_focal_loss(1.0, 0.5, &params),
            0.25 * 0.25 * std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        // no (1-y) term: zero for negative centers
        assert_eq!(center_focal_loss(0.0, 0.7, &params), 0.0);
    }

    #[test]
    fn losses_are_nonnegative_and_zero_only_at_match() {
        for p in [0.01, 0.2, 0.5, 0.8, 0.99] {
            assert!(objectness_loss(1.0, p) >= 0.0);
            assert!(objectness_loss(0.0, p) >= 0.0);
            if p != 1.0 {
                assert!(objectness_loss(1.0, p) > 0.0);
            }
        }
    }

    #[test]
    fn objectness_strictly_decreases_toward_true_label() {
        let mut previous = f64::INFINITY;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let loss = objectness_loss(1.0, p);
            assert!(loss < previous, "not decreasing at p={p}");
            previous = loss;
        }
    }

    #[test]
    fn focal_strictly_decreases_toward_true_label() {
        let params = FocalParams::new(0.25, 2.0).unwrap();
        let mut previous = f64::INFINITY;
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let loss = center_focal_loss(1.0, p, &params);
            assert!(loss < previous, "not decreasing at p={p}");
            previous = loss;
        }
    }

    #[test]
    fn total_loss_defaults_to_plain_sum() {
        assert_eq!(
            total_loss(1.0, 2.0, 3.0, 4.0, &LossWeights::default()),
            10.0
        );
        let weights = LossWeights {
            objectness: 2.0,
            ..Default::default()
        };
        assert_eq!(total_loss(1.0, 2.0, 3.0, 4.0, &weights), 11.0);
    }
}
