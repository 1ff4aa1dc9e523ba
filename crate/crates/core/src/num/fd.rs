use crate::error::{Error, Result};
use crate::num::params::ParamVector;
use crate::num::tape::{eval, Tape, Var};

/// Central-difference gradient, one coordinate at a time.
pub fn finite_diff<F>(objective: F, params: &ParamVector, step: f64) -> Result<ParamVector>
where
    F: Fn(&mut Tape, &ParamVector) -> Var,
{
    finite_diff_fn(|p| eval(&objective, p), params, step)
}

/// Central differences of an arbitrary scalar function of the parameters.
pub fn finite_diff_fn<F>(f: F, params: &ParamVector, step: f64) -> Result<ParamVector>
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::invalid("finite_diff step must be positive"));
    }
    let mut out = params.zeros_like();
    let mut probe = params.clone();
    for i in 0..params.len() {
        let x0 = params.as_slice()[i];
        probe.as_mut_slice()[i] = x0 + step;
        let up = f(&probe)?;
        probe.as_mut_slice()[i] = x0 - step;
        let down = f(&probe)?;
        probe.as_mut_slice()[i] = x0;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite {
                primitive: "finite_diff objective",
            });
        }
        out.as_mut_slice()[i] = (up - down) / (2.0 * step);
    }
    Ok(out)
}

/// `|a - b|_2 / max(|a|_2, |b|_2)`, or the absolute error when both are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_and_constant() {
        let mut p = ParamVector::new();
        p.add("p", vec![1], vec![3.0]).unwrap();
        let g = finite_diff(
            |t, p| {
                let x = t.param(p, "p");
                t.square(x)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!((g.as_slice()[0] - 6.0).abs() < 1e-8);
        let g = finite_diff(|t, _| t.scalar(2.0), &p, 1e-5).unwrap();
        assert!(g.as_slice()[0].abs() < 1e-9);
        assert!(finite_diff(|t, _| t.scalar(2.0), &p, 0.0).is_err());
    }
}
