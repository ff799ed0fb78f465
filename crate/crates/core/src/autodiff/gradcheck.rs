use serde::Serialize;

use super::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    /// `(parameter name, max relative error)` in store order.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Compares `analytic` gradients against central differences
/// `(f(θ+h) − f(θ−h)) / 2h`, one scalar at a time. The relative error uses
/// the denominator `max(|a|, |b|, 1e-8)`.
pub fn finite_diff_check<F>(params: &ParamStore, analytic: &[Tensor], h: f64, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape(
            "finite_diff_check",
            format!("{} gradients for {} parameters", analytic.len(), params.len()),
        ));
    }
    let mut work = params.clone();
    let mut per_param = Vec::with_capacity(params.len());
    let mut max_rel_err: f64 = 0.0;
    for (pi, g) in analytic.iter().enumerate() {
        if g.shape() != params.get(pi).shape() {
            return Err(Error::shape(
                "finite_diff_check",
                format!("`{}`: gradient {:?}, parameter {:?}", params.names()[pi], g.shape(), params.get(pi).shape()),
            ));
        }
        let mut worst: f64 = 0.0;
        for k in 0..g.len() {
            let orig = params.get(pi).data()[k];
            work.get_mut(pi).data_mut()[k] = orig + h;
            let fp = loss(&work)?;
            work.get_mut(pi).data_mut()[k] = orig - h;
            let fm = loss(&work)?;
            work.get_mut(pi).data_mut()[k] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = g.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        max_rel_err = max_rel_err.max(worst);
        per_param.push((params.names()[pi].clone(), worst));
    }
    Ok(GradCheckReport { per_param, max_rel_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn linear_setup() -> (ParamStore, Tensor) {
        let mut p = ParamStore::new();
        p.push("w", Tensor::from_vec(3, 1, vec![0.5, -1.0, 2.0]).unwrap());
        let x = Tensor::from_vec(4, 3, (0..12).map(|i| i as f64 * 0.1 - 0.6).collect()).unwrap();
        (p, x)
    }

    fn linear_loss(p: &ParamStore, x: &Tensor) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let vars = tape.bind(p, true);
        let xv = tape.leaf(x, false);
        let y = tape.matmul(xv, vars[0])?;
        let l = tape.sum(y)?;
        let value = tape.value(l).item()?;
        let mut g = tape.backward(l)?;
        Ok((value, vars.iter().map(|&v| g.take_or_zeros(v)).collect()))
    }

    #[test]
    fn linear_model_is_exact() {
        let (p, x) = linear_setup();
        let (_, grads) = linear_loss(&p, &x).unwrap();
        let r = finite_diff_check(&p, &grads, 1e-6, |q| Ok(linear_loss(q, &x)?.0)).unwrap();
        assert!(r.max_rel_err <= 1e-9, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let (p, x) = linear_setup();
        let (_, mut grads) = linear_loss(&p, &x).unwrap();
        grads[0].data_mut()[1] += 1.0;
        let r = finite_diff_check(&p, &grads, 1e-6, |q| Ok(linear_loss(q, &x)?.0)).unwrap();
        assert!(r.max_rel_err >= 0.5, "{r:?}");
    }
}
