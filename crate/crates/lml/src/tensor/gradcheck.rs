//! Central-difference gradient checking.

use crate::error::{Error, Result};
use crate::tensor::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Builds the graph for a scalar function of the given parameter leaves.
pub trait ScalarFn {
    fn eval(&self, g: &mut Graph, params: &[Var]) -> Result<Var>;
}

impl<F> ScalarFn for F
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    fn eval(&self, g: &mut Graph, params: &[Var]) -> Result<Var> {
        self(g, params)
    }
}

fn forward(f: &impl ScalarFn, params: &[Tensor]) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone(), false)).collect();
    let loss = f.eval(&mut g, &vars)?;
    let v = g.value(loss).item();
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    Ok(v)
}

/// Max over all coordinates of
/// |analytic − central difference| / max(|analytic|, |numeric|, 1e-8).
pub fn grad_check(f: &impl ScalarFn, params: &[Tensor], eps: f64) -> Result<f64> {
    assert!(eps > 0.0);
    // analytic pass
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone(), true)).collect();
    let loss = f.eval(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for pi in 0..params.len() {
        for j in 0..params[pi].numel() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let plus = forward(f, &work)?;
            work[pi].data_mut()[j] = orig - eps;
            let minus = forward(f, &work)?;
            work[pi].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[j];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_function_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Tensor::from_vec((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let x = Tensor::from_vec((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let xc = x.clone();
        let f = move |g: &mut Graph, p: &[Var]| {
            let x = g.constant(xc.clone());
            g.dot(p[0], x)
        };
        let err = grad_check(&f, &[w], 1e-5).unwrap();
        assert!(err < 1e-8, "linear grad_check error {err}");
    }

    #[test]
    fn composite_nonlinear_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = Tensor::from_vec((0..6).map(|_| rng.gen_range(-0.5..0.5)).collect());
        let f = |g: &mut Graph, p: &[Var]| {
            let t = g.tanh(p[0])?;
            let s = g.sigmoid(t)?;
            let e = g.exp(s)?;
            g.sum_all(e)
        };
        let err = grad_check(&f, &[w], 1e-6).unwrap();
        assert!(err < 1e-7, "nonlinear grad_check error {err}");
    }

    #[test]
    fn non_finite_objective_is_error() {
        let f = |g: &mut Graph, p: &[Var]| {
            let s = g.scale(p[0], 1e308)?;
            let sq = g.square(s)?;
            g.sum_all(sq)
        };
        assert!(grad_check(&f, &[Tensor::scalar(2.0)], 1e-6).is_err());
    }

    #[test]
    fn many_shapes_and_seeds_under_tolerance() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..10);
            let m = rng.gen_range(2..6);
            let a = Tensor::new(
                vec![m, n],
                (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let b = Tensor::new(
                vec![n, m],
                (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let f = |g: &mut Graph, p: &[Var]| {
                let c = g.matmul(p[0], p[1])?;
                let t = g.tanh(c)?;
                let sq = g.square(t)?;
                g.mean_all(sq)
            };
            let err = grad_check(&f, &[a, b], 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: error {err}");
        }
    }
}
