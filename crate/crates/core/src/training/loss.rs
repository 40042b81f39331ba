//! Normalized-space squared-error objective and its gradient.

use crate::error::{Error, Result};
use crate::model::{backward, forward_batch, forward_train, prepare_batch, FreezeMask, ModelConfig, ModelParameters};
use crate::numerics::{Matrix, Scalar};

/// Mean of squared differences.
pub fn teaf_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "prediction of length {} against target of length {}",
            pred.len(),
            target.len()
        )));
    }
    let n = T::from_usize(pred.len()).unwrap();
    Ok(pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum::<T>() / n)
}

/// Result of one batched forward against physical targets.
pub(crate) struct BatchFit<T> {
    /// Sum of squared normalized-space errors over the batch.
    pub sq_sum: f64,
    /// Predictions in physical units, one row per window.
    pub preds: Vec<Vec<T>>,
}

/// Forwards raw windows, scores them against raw targets and, when `grads`
/// is given, accumulates `scale · ∂(sum of squares)/∂θ`.
///
/// Errors are divided by `target_scales` when given (one σ per window),
/// otherwise by each input window's σ. Both coincide whenever the input
/// window is the ground-truth window.
pub(crate) fn fit_batch<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    inputs: &[&[T]],
    targets: &[&[T]],
    target_scales: Option<&[T]>,
    scale: T,
    grads: Option<(&mut ModelParameters<T>, &FreezeMask)>,
) -> Result<BatchFit<T>> {
    let (patches, stats) = prepare_batch(cfg, inputs)?;
    let (y, cache) = match &grads {
        Some(_) => {
            let (y, c) = forward_train(params, cfg, &patches)?;
            (y, Some(c))
        }
        None => (forward_batch(params, cfg, &patches)?, None),
    };
    if targets.len() != inputs.len() {
        return Err(Error::Shape(format!("{} targets for {} windows", targets.len(), inputs.len())));
    }
    if target_scales.is_some_and(|s| s.len() != inputs.len()) {
        return Err(Error::Shape("target scales do not match the batch".into()));
    }
    let mut d_out = Matrix::zeros(inputs.len(), cfg.l_pred);
    let mut sq_sum = 0.0;
    let mut preds = Vec::with_capacity(inputs.len());
    for (b, ((&(mu, sigma), target), row)) in
        stats.iter().zip(targets).zip(y.data().chunks_exact(cfg.l_pred)).enumerate()
    {
        if target.len() != cfg.l_pred {
            return Err(Error::Shape(format!("target of length {} but L_pred = {}", target.len(), cfg.l_pred)));
        }
        let sigma_t = target_scales.map_or(sigma, |s| s[b]);
        let gain = sigma / sigma_t;
        for (i, (&yi, &ti)) in row.iter().zip(target.iter()).enumerate() {
            let r = (yi * sigma + mu - ti) / sigma_t;
            sq_sum += (r * r).as_f64();
            d_out.set(b, i, T::lit(2.0) * r * gain * scale);
        }
        preds.push(row.iter().map(|&v| v * sigma + mu).collect());
    }
    if let (Some(cache), Some((g, freeze))) = (cache, grads) {
        backward(params, cfg, &cache, &d_out, freeze, g)?;
    }
    Ok(BatchFit { sq_sum, preds })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn loss_examples() {
        assert_eq!(teaf_loss(&[1.5f64, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert_eq!(teaf_loss(&[1.0f64], &[3.0]).unwrap(), 4.0);
        assert!(teaf_loss::<f64>(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn loss_matches_double_loop(pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let mut acc = 0.0;
            for i in 0..p.len() {
                for j in 0..t.len() {
                    if i == j {
                        acc += (p[i] - t[j]).powi(2);
                    }
                }
            }
            let want = acc / p.len() as f64;
            prop_assert!((teaf_loss(&p, &t).unwrap() - want).abs() < 1e-12);
        }
    }
}
