use crate::error::AutodiffError;
use crate::tensor::Tensor;

use super::tape::{Tape, Var};

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Compares tape gradients of a scalar function against central
/// differences and returns the largest relative error
/// `|analytic − numeric| / max(|analytic|, |numeric|, GRAD_FLOOR)` over
/// every coordinate.
///
/// `f` receives a fresh tape and one leaf per entry of `params`.
pub fn finite_diff_check<F, E>(f: F, params: &[Tensor], h: f64) -> Result<f64, E>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<AutodiffError>,
{
    assert!(h > 0.0, "step must be positive");
    let eval = |values: &[Tensor]| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values
            .iter()
            .map(|t| tape.leaf(t.clone(), false))
            .collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if !v.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(v.shape().to_vec()).into());
        }
        Ok(v.item())
    };

    let first = eval(params)?;
    let second = eval(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(AutodiffError::NonDeterministic { first, second }.into());
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut probe = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("leaf gradient").data().to_vec();
        for j in 0..params[pi].len() {
            let orig = params[pi].data()[j];
            probe[pi].data_mut()[j] = orig + h;
            let plus = eval(&probe)?;
            probe[pi].data_mut()[j] = orig - h;
            let minus = eval(&probe)?;
            probe[pi].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
