//! Softmax and the per-example log-likelihood it induces.

use crate::error::{structural, Result};

/// `log(sum(exp(z)))`, shifted by `max(z)` so large scores cannot overflow.
pub fn logsumexp(z: &[f64]) -> Result<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if z.is_empty() {
        return Err(structural("logsumexp of an empty vector"));
    }
    if max.is_infinite() {
        return Ok(max);
    }
    Ok(max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// `p_i = exp(z_i - logsumexp(z))`.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    let lse = logsumexp(z)?;
    let mut p: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
    // renormalize the rounding residue so rows sum to 1 to working precision
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

/// Log-likelihood `z_label - logsumexp(z)` and its gradient with respect to
/// the scores, `onehot(label) - softmax(z)` (the ascent direction).
pub fn nll_value_and_grad(scores: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= scores.len() {
        return Err(structural(format!("label {label} out of range for {} classes", scores.len())));
    }
    let lse = logsumexp(scores)?;
    let mut grad: Vec<f64> = scores.iter().map(|v| -(v - lse).exp()).collect();
    grad[label] += 1.0;
    Ok((scores[label] - lse, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gradcheck::{central_diff, rel_error};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn logsumexp_examples() {
        assert_eq!(logsumexp(&[0.0, 0.0]).unwrap(), LN_2);
        assert_eq!(logsumexp(&[1000.0, 1000.0]).unwrap(), 1000.0 + LN_2);
        assert_eq!(logsumexp(&[-3.5]).unwrap(), -3.5);
        assert!(logsumexp(&[]).is_err());
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0; 4]).unwrap(), vec![0.25; 4]);
        let p = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn likelihood_examples() {
        let (l, g) = nll_value_and_grad(&[0.0, 0.0], 0).unwrap();
        assert_eq!(l, -LN_2);
        assert_eq!(g, vec![0.5, -0.5]);
        let (l, _) = nll_value_and_grad(&[800.0, 0.0, -5.0], 0).unwrap();
        assert_eq!(l, 0.0);
        assert!(nll_value_and_grad(&[0.0, 0.0], 2).is_err());
        let z = [0.3, -1.2, 2.5, 0.0];
        let (_, g) = nll_value_and_grad(&z, 2).unwrap();
        let n = central_diff(&z, 1e-5, |v| nll_value_and_grad(v, 2).unwrap().0);
        assert!(rel_error(&g, &n) < 1e-6);
    }

    proptest! {
        #[test]
        fn logsumexp_bounds(z in prop::collection::vec(-1e8f64..1e8, 1..20)) {
            let lse = logsumexp(&z).unwrap();
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lse.is_finite());
            prop_assert!(lse >= max);
            prop_assert!(lse <= max + (z.len() as f64).ln() + max.abs() * f64::EPSILON);
        }

        #[test]
        fn softmax_normalized_and_shift_invariant(
            z in prop::collection::vec(-50.0f64..50.0, 1..20),
            c in -100.0f64..100.0,
        ) {
            let p = softmax(&z).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            for (a, b) in p.iter().zip(softmax(&shifted).unwrap()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
