//! Group-relative advantages, importance ratios, the clipped surrogate and
//! the KL penalty, on plain values and on the tape.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Largest log-ratio whose exponential is finite.
const MAX_LOG_RATIO: f64 = 709.0;

/// Group mean computed as an offset from the first element, so a constant
/// group has exactly zero deviations.
pub fn group_mean(r: &[f64]) -> f64 {
    let r0 = r[0];
    r0 + r.iter().map(|x| x - r0).sum::<f64>() / r.len() as f64
}

/// Population standard deviation.
pub fn group_std(r: &[f64]) -> f64 {
    let m = group_mean(r);
    (r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / r.len() as f64).sqrt()
}

/// `A_i = (r_i - mean) / (std + eps)` with the population std. With
/// `eps = 0` a constant group gets zero advantages.
pub fn compute_advantages(r: &[f64], eps: f64) -> Vec<f64> {
    assert!(r.len() >= 2, "advantages need at least two rewards");
    let m = group_mean(r);
    let s = group_std(r);
    let denom = s + eps;
    if denom == 0.0 {
        return vec![0.0; r.len()];
    }
    r.iter().map(|x| (x - m) / denom).collect()
}

fn check_log_ratio(what: &'static str, index: usize, d: f64) -> Result<()> {
    if !d.is_finite() || d > MAX_LOG_RATIO {
        return Err(Error::StepAbort {
            what,
            index,
            log_ratio: d,
        });
    }
    Ok(())
}

/// `ρ_i = exp(logπ_θ − logπ_ref)`.
pub fn importance_ratios(logp: &[f64], logp_ref: &[f64]) -> Result<Vec<f64>> {
    if logp.len() != logp_ref.len() {
        return Err(Error::LengthMismatch(logp.len(), logp_ref.len()));
    }
    logp.iter()
        .zip(logp_ref)
        .enumerate()
        .map(|(i, (a, b))| {
            let d = a - b;
            check_log_ratio("importance ratio", i, d)?;
            Ok(d.exp())
        })
        .collect()
}

fn clip_term(rho: f64, a: f64, eps_clip: f64) -> (f64, bool) {
    let unclipped = rho * a;
    let clipped = rho.clamp(1.0 - eps_clip, 1.0 + eps_clip) * a;
    (unclipped.min(clipped), clipped < unclipped)
}

/// `−(1/K) Σ min(ρ_i A_i, clip(ρ_i, 1 − ε, 1 + ε) A_i)`.
pub fn clipped_loss(rho: &[f64], adv: &[f64], eps_clip: f64) -> Result<f64> {
    if rho.len() != adv.len() {
        return Err(Error::LengthMismatch(rho.len(), adv.len()));
    }
    let s: f64 = rho.iter().zip(adv).map(|(&r, &a)| clip_term(r, a, eps_clip).0).sum();
    Ok(-s / rho.len() as f64)
}

/// Per hypothesis: whether the clipped branch is the active minimum.
pub fn clip_active(rho: &[f64], adv: &[f64], eps_clip: f64) -> Vec<bool> {
    rho.iter().zip(adv).map(|(&r, &a)| clip_term(r, a, eps_clip).1).collect()
}

/// `mean(exp(d) − d − 1)` over the group, `d = logπ_θ − logπ_ref`.
pub fn kl_penalty(log_ratios: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for (i, &d) in log_ratios.iter().enumerate() {
        check_log_ratio("KL penalty", i, d)?;
        s += d.exp() - d - 1.0;
    }
    Ok(s / log_ratios.len() as f64)
}

/// Tape version of the surrogate: `logp` are scalar vars, everything else
/// is constant.
pub fn clipped_loss_tape(tape: &mut Tape, logp: &[Var], logp_ref: &[f64], adv: &[f64], eps_clip: f64) -> Result<Var> {
    let mut total: Option<Var> = None;
    for ((&lp, &lr), &a) in logp.iter().zip(logp_ref).zip(adv) {
        let d = tape.add_scalar(lp, -lr)?;
        let rho = tape.exp(d)?;
        let unclipped = tape.scale(rho, a)?;
        let c = tape.clamp(rho, 1.0 - eps_clip, 1.0 + eps_clip)?;
        let clipped = tape.scale(c, a)?;
        let term = tape.minimum(unclipped, clipped)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    let total = total.ok_or_else(|| Error::InvalidArgument("empty group".into()))?;
    Ok(tape.scale(total, -1.0 / logp.len() as f64)?)
}

pub fn kl_penalty_tape(tape: &mut Tape, logp: &[Var], logp_ref: &[f64]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (&lp, &lr) in logp.iter().zip(logp_ref) {
        let d = tape.add_scalar(lp, -lr)?;
        let e = tape.exp(d)?;
        let k = tape.sub(e, d)?;
        let k = tape.add_scalar(k, -1.0)?;
        total = Some(match total {
            Some(t) => tape.add(t, k)?,
            None => k,
        });
    }
    let total = total.ok_or_else(|| Error::InvalidArgument("empty group".into()))?;
    Ok(tape.scale(total, 1.0 / logp.len() as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantage_examples() {
        assert_eq!(compute_advantages(&[0.5, 0.5, 0.5], 1e-4), vec![0.0; 3]);
        assert_eq!(compute_advantages(&[0.0, 1.0], 0.0), vec![-1.0, 1.0]);
        let a = compute_advantages(&[0.0, 1.0], 1e-4);
        assert!((a[1] - 0.5 / 0.5001).abs() < 1e-15);
    }

    #[test]
    fn clip_and_kl_hand_cases() {
        assert!((clipped_loss(&[2.0], &[1.0], 0.2).unwrap() + 1.2).abs() < 1e-15);
        assert!((clipped_loss(&[0.5], &[-1.0], 0.2).unwrap() - 0.8).abs() < 1e-15);
        let l2 = std::f64::consts::LN_2;
        assert!((kl_penalty(&[l2]).unwrap() - 0.306_852_819_440_054_7).abs() < 1e-12);
        assert!((kl_penalty(&[-l2]).unwrap() - 0.193_147_180_559_945_3).abs() < 1e-12);
        assert_eq!(kl_penalty(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn overflow_aborts_with_index() {
        let e = importance_ratios(&[0.0, 800.0], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(e, Error::StepAbort { index: 1, .. }));
        assert!(kl_penalty(&[1000.0]).is_err());
    }

    #[test]
    fn tape_matches_values() {
        let lp = [-1.0, -2.5, -0.3];
        let lr = [-1.2, -2.0, -0.3];
        let adv = [0.7, -1.1, 0.4];
        let mut tape = Tape::new();
        let vars: Vec<Var> = lp
            .iter()
            .map(|&x| tape.leaf(crate::tensor::Tensor::scalar(x), true))
            .collect();
        let c = clipped_loss_tape(&mut tape, &vars, &lr, &adv, 0.2).unwrap();
        let k = kl_penalty_tape(&mut tape, &vars, &lr).unwrap();
        let rho = importance_ratios(&lp, &lr).unwrap();
        assert!((tape.value(c).item() - clipped_loss(&rho, &adv, 0.2).unwrap()).abs() < 1e-15);
        let d: Vec<f64> = lp.iter().zip(&lr).map(|(a, b)| a - b).collect();
        assert!((tape.value(k).item() - kl_penalty(&d).unwrap()).abs() < 1e-15);
    }
}
