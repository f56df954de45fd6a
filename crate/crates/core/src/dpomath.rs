//! Masked DPO loss and gradient over supplied log-probabilities, and the
//! unbiased pass@k estimator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpoError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("mask selects no position: {0}")]
    EmptyMask(&'static str),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("pass@k domain error: {0}")]
    DomainError(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoBatch {
    pub w_policy_logps: Vec<f64>,
    pub w_ref_logps: Vec<f64>,
    pub l_policy_logps: Vec<f64>,
    pub l_ref_logps: Vec<f64>,
    pub w_mask: Vec<bool>,
    pub l_mask: Vec<bool>,
    pub beta: f64,
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sum of `policy[t] - reference[t]` over masked positions.
pub fn masked_logratio(policy: &[f64], reference: &[f64], mask: &[bool]) -> Result<f64, DpoError> {
    if policy.len() != reference.len() || policy.len() != mask.len() {
        return Err(DpoError::LengthMismatch(format!(
            "policy {}, reference {}, mask {}",
            policy.len(),
            reference.len(),
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(DpoError::EmptyMask("no true entry"));
    }
    Ok(policy
        .iter()
        .zip(reference)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((p, r), _)| p - r)
        .sum())
}

impl DpoBatch {
    pub fn validate(&self) -> Result<(), DpoError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(DpoError::InvalidBatch(format!("beta must be positive, got {}", self.beta)));
        }
        for (name, v) in [
            ("w_policy_logps", &self.w_policy_logps),
            ("w_ref_logps", &self.w_ref_logps),
            ("l_policy_logps", &self.l_policy_logps),
            ("l_ref_logps", &self.l_ref_logps),
        ] {
            if let Some(x) = v.iter().find(|x| x.is_nan() || **x > 0.0) {
                return Err(DpoError::InvalidBatch(format!("{name} contains {x}, log-probabilities must be <= 0")));
            }
        }
        if self.w_policy_logps.len() != self.w_ref_logps.len() || self.w_policy_logps.len() != self.w_mask.len() {
            return Err(DpoError::LengthMismatch("preferred sample lists differ in length".into()));
        }
        if self.l_policy_logps.len() != self.l_ref_logps.len() || self.l_policy_logps.len() != self.l_mask.len() {
            return Err(DpoError::LengthMismatch("dispreferred sample lists differ in length".into()));
        }
        if !self.w_mask.iter().any(|&m| m) {
            return Err(DpoError::EmptyMask("w_mask"));
        }
        if !self.l_mask.iter().any(|&m| m) {
            return Err(DpoError::EmptyMask("l_mask"));
        }
        Ok(())
    }

    pub fn margin(&self) -> Result<f64, DpoError> {
        self.validate()?;
        let w = masked_logratio(&self.w_policy_logps, &self.w_ref_logps, &self.w_mask)?;
        let l = masked_logratio(&self.l_policy_logps, &self.l_ref_logps, &self.l_mask)?;
        Ok(self.beta * w - self.beta * l)
    }
}

/// `(loss, margin)` for one pair.
pub fn salv_dpo_loss(batch: &DpoBatch) -> Result<(f64, f64), DpoError> {
    let margin = batch.margin()?;
    Ok((softplus(-margin), margin))
}

/// Gradients of the loss with respect to the policy log-probabilities of the
/// preferred and dispreferred samples.
pub fn salv_dpo_grad(batch: &DpoBatch) -> Result<(Vec<f64>, Vec<f64>), DpoError> {
    let margin = batch.margin()?;
    let g = batch.beta * sigmoid(-margin);
    let d_w = batch.w_mask.iter().map(|&m| if m { -g } else { 0.0 }).collect();
    let d_l = batch.l_mask.iter().map(|&m| if m { g } else { 0.0 }).collect();
    Ok((d_w, d_l))
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences with step `h`.
pub fn gradient_check(batch: &DpoBatch, h: f64) -> Result<f64, DpoError> {
    let (d_w, d_l) = salv_dpo_grad(batch)?;
    let mut worst: f64 = 0.0;
    let mut probe = batch.clone();
    for (side, analytic) in [(0, &d_w), (1, &d_l)] {
        for (t, &a) in analytic.iter().enumerate() {
            let orig = if side == 0 { probe.w_policy_logps[t] } else { probe.l_policy_logps[t] };
            let set = |b: &mut DpoBatch, v: f64| {
                if side == 0 {
                    b.w_policy_logps[t] = v
                } else {
                    b.l_policy_logps[t] = v
                }
            };
            set(&mut probe, orig + h);
            let up = loss_unchecked(&probe);
            set(&mut probe, orig - h);
            let down = loss_unchecked(&probe);
            set(&mut probe, orig);
            let numeric = (up - down) / (2.0 * h);
            let scale = a.abs().max(numeric.abs());
            let err = if scale == 0.0 { 0.0 } else { (a - numeric).abs() / scale };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Loss without domain checks; probes may step past zero.
fn loss_unchecked(b: &DpoBatch) -> f64 {
    let sum = |p: &[f64], r: &[f64], m: &[bool]| -> f64 {
        p.iter().zip(r).zip(m).filter(|(_, &m)| m).map(|((p, r), _)| p - r).sum()
    };
    let margin = b.beta * sum(&b.w_policy_logps, &b.w_ref_logps, &b.w_mask)
        - b.beta * sum(&b.l_policy_logps, &b.l_ref_logps, &b.l_mask);
    softplus(-margin)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassAtKInput {
    pub n: u64,
    pub c: u64,
    pub k: u64,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `C(n-c, k) / C(n, k)` as a reduced fraction, if it fits in `u128`.
pub fn miss_probability_exact(n: u64, c: u64, k: u64) -> Option<(u128, u128)> {
    if n - c < k {
        return Some((0, 1));
    }
    let (mut num, mut den) = (1u128, 1u128);
    for i in 0..k {
        num = num.checked_mul((n - c - i) as u128)?;
        den = den.checked_mul((n - i) as u128)?;
        let g = gcd(num, den);
        num /= g;
        den /= g;
    }
    Some((num, den))
}

/// `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k(inp: PassAtKInput) -> Result<f64, DpoError> {
    let PassAtKInput { n, c, k } = inp;
    if c > n {
        return Err(DpoError::DomainError(format!("c = {c} exceeds n = {n}")));
    }
    if k < 1 || k > n {
        return Err(DpoError::DomainError(format!("k = {k} must lie in [1, n = {n}]")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    if let Some((num, den)) = miss_probability_exact(n, c, k) {
        return Ok((den - num) as f64 / den as f64);
    }
    let miss: f64 = (0..k).map(|i| (n - c - i) as f64 / (n - i) as f64).product();
    Ok(1.0 - miss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(w: (Vec<f64>, Vec<f64>, Vec<bool>), l: (Vec<f64>, Vec<f64>, Vec<bool>), beta: f64) -> DpoBatch {
        DpoBatch {
            w_policy_logps: w.0,
            w_ref_logps: w.1,
            w_mask: w.2,
            l_policy_logps: l.0,
            l_ref_logps: l.1,
            l_mask: l.2,
            beta,
        }
    }

    #[test]
    fn logratio_examples() {
        let r = [-1.0, -1.0, -1.0];
        let p = [-0.9, -0.8, -0.7];
        assert!((masked_logratio(&p, &r, &[true, false, true]).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(masked_logratio(&r, &r, &[true, true, true]).unwrap(), 0.0);
        assert!(matches!(masked_logratio(&p, &r[..2], &[true; 3]), Err(DpoError::LengthMismatch(_))));
        assert!(matches!(masked_logratio(&p, &r, &[false; 3]), Err(DpoError::EmptyMask(_))));
    }

    #[test]
    fn identity_loss_is_ln2() {
        let s = (vec![-1.0, -2.0], vec![-1.0, -2.0], vec![true, false]);
        let (loss, margin) = salv_dpo_loss(&batch(s.clone(), s, 0.1)).unwrap();
        assert_eq!(margin, 0.0);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn half_margin_example() {
        let b = batch(
            (vec![-1.0], vec![-3.0], vec![true]),
            (vec![-4.0], vec![-1.0], vec![true]),
            0.1,
        );
        let (loss, margin) = salv_dpo_loss(&b).unwrap();
        assert!((margin - 0.5).abs() < 1e-12);
        assert!((loss - 0.474_076_984_180_107_1).abs() < 1e-12);
    }

    #[test]
    fn large_margins_stay_finite() {
        for m in [500.0, -500.0, 1e6, -1e6] {
            let l = softplus(-m);
            assert!(l.is_finite() && l >= 0.0);
            assert!(sigmoid(m).is_finite());
        }
        assert!(softplus(-500.0) < 1e-200);
    }

    #[test]
    fn zero_margin_gradients() {
        let s = (vec![-1.0, -2.0, -3.0], vec![-1.0, -2.0, -3.0], vec![true, false, true]);
        let (dw, dl) = salv_dpo_grad(&batch(s.clone(), s, 0.1)).unwrap();
        assert_eq!(dw, vec![-0.05, 0.0, -0.05]);
        assert_eq!(dl, vec![0.05, 0.0, 0.05]);
    }

    #[test]
    fn invalid_batches() {
        let s = (vec![-1.0], vec![-1.0], vec![true]);
        assert!(matches!(salv_dpo_loss(&batch(s.clone(), s.clone(), 0.0)), Err(DpoError::InvalidBatch(_))));
        let pos = (vec![0.5], vec![-1.0], vec![true]);
        assert!(matches!(salv_dpo_loss(&batch(pos, s.clone(), 0.1)), Err(DpoError::InvalidBatch(_))));
        let none = (vec![-1.0], vec![-1.0], vec![false]);
        assert!(matches!(salv_dpo_loss(&batch(s, none, 0.1)), Err(DpoError::EmptyMask("l_mask"))));
    }

    #[test]
    fn pass_at_k_examples() {
        let p = |n, c, k| pass_at_k(PassAtKInput { n, c, k }).unwrap();
        assert_eq!(p(20, 20, 1), 1.0);
        assert_eq!(p(2, 1, 1), 0.5);
        assert_eq!(p(5, 2, 3), 0.9);
        assert_eq!(p(5, 0, 3), 0.0);
        assert!(pass_at_k(PassAtKInput { n: 3, c: 4, k: 1 }).is_err());
        assert!(pass_at_k(PassAtKInput { n: 3, c: 1, k: 0 }).is_err());
        assert!(pass_at_k(PassAtKInput { n: 3, c: 1, k: 4 }).is_err());
        let big = p(10_000, 37, 500);
        assert!(big > 0.0 && big < 1.0 && big.is_finite());
    }
}
