//! The motion generator: an LSTM encoder seeds the state from z1, an LSTM
//! decoder consumes per-step noise, and each hidden state moves the code by
//! a bounded residual along the PCA basis rows.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::latent::PcaBasis;
use crate::nn::lstm::{lstm_cell, LstmCellParams, LstmCellVars};
use crate::nn::mlp::{mlp_forward, Activation, MlpParams, MlpVars};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone)]
pub struct MotionGeneratorParams {
    /// d -> k, applied once to z1 with zero initial state.
    pub encoder: LstmCellParams,
    /// d -> k, advanced once per generated frame.
    pub decoder: LstmCellParams,
    /// Mapping head H for the mutual-information loss, k -> d.
    pub mapper: MlpParams,
    /// Step scale for the residual.
    pub lambda: f64,
    pub basis: PcaBasis,
    /// Detach z_{t-1} when stepping (truncated backprop through the chain).
    pub detach_prev: bool,
    /// When false, the residual is dropped: z_t = h_t·V (with k = d and an
    /// identity basis this is exactly z_t = h_t).
    pub residual_enabled: bool,
}

impl MotionGeneratorParams {
    pub fn init(
        rng: &mut ChaCha8Rng,
        latent_dim: usize,
        basis: PcaBasis,
        lambda: f64,
        mapper_hidden: usize,
    ) -> Result<Self> {
        if basis.dim() != latent_dim {
            return Err(Error::ShapeMismatch {
                op: "motion_generator",
                detail: format!("basis dim {} vs latent dim {latent_dim}", basis.dim()),
            });
        }
        if lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        let k = basis.k();
        Ok(MotionGeneratorParams {
            encoder: LstmCellParams::init(rng, latent_dim, k),
            decoder: LstmCellParams::init(rng, latent_dim, k),
            mapper: MlpParams::init(
                rng,
                &[k, mapper_hidden, latent_dim],
                Activation::LeakyRelu(0.2),
                Activation::None,
            ),
            lambda,
            basis,
            detach_prev: false,
            residual_enabled: true,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.basis.k()
    }

    /// Same order as `bind` registers leaves.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.decoder.tensors_mut());
        out.extend(self.mapper.tensors_mut());
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.encoder.tensors();
        out.extend(self.decoder.tensors());
        out.extend(self.mapper.tensors());
        out
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> MotionVars {
        MotionVars {
            encoder: self.encoder.bind(g, trainable),
            decoder: self.decoder.bind(g, trainable),
            mapper: self.mapper.bind(g, trainable),
            basis: g.constant(self.basis.basis.clone()),
            lambda: self.lambda,
            detach_prev: self.detach_prev,
            residual_enabled: self.residual_enabled,
            k: self.hidden_dim(),
            d: self.latent_dim(),
        }
    }
}

pub struct MotionVars {
    pub encoder: LstmCellVars,
    pub decoder: LstmCellVars,
    pub mapper: MlpVars,
    pub basis: Var,
    pub lambda: f64,
    pub detach_prev: bool,
    pub residual_enabled: bool,
    k: usize,
    d: usize,
}

impl MotionVars {
    pub fn leaves(&self) -> Vec<Var> {
        let mut out = self.encoder.leaves();
        out.extend(self.decoder.leaves());
        out.extend(self.mapper.leaves());
        out
    }
}

/// h1, c1 from one encoder application with zero initial state.
pub fn encode_initial(g: &mut Graph, z1: Var, vars: &MotionVars) -> Result<(Var, Var)> {
    let h0 = g.constant(Tensor::zeros(&[vars.k, 1]));
    let c0 = g.constant(Tensor::zeros(&[vars.k, 1]));
    lstm_cell(g, z1, h0, c0, &vars.encoder)
}

/// Advances the decoder one step on noise eps_t.
pub fn decode_step(
    g: &mut Graph,
    eps_t: Var,
    state: (Var, Var),
    vars: &MotionVars,
) -> Result<(Var, Var)> {
    lstm_cell(g, eps_t, state.0, state.1, &vars.decoder)
}

/// z_t = z_{t-1} + λ·h_tᵀ·V (or h_tᵀ·V alone when the residual is disabled).
pub fn next_code(g: &mut Graph, z_prev: Var, h_t: Var, vars: &MotionVars) -> Result<Var> {
    let h_row = g.transpose2d(h_t)?;
    let step_row = g.matmul(h_row, vars.basis)?;
    let step = g.reshape(step_row, vec![vars.d, 1])?;
    if !vars.residual_enabled {
        return Ok(step);
    }
    let step = g.scale(step, vars.lambda)?;
    let prev = if vars.detach_prev { g.detach(z_prev) } else { z_prev };
    g.add(prev, step)
}

/// Graph-side trajectory: all codes, hidden states, and the noise handles.
pub struct TrajectoryVars {
    pub codes: Vec<Var>,
    pub hidden: Vec<Var>,
    pub eps: Vec<Var>,
}

/// Composes encode_initial / decode_step / next_code over a noise sequence.
/// `z1` is a [d, 1] column; `eps_seq` holds n-1 noise columns.
pub fn generate_trajectory_graph(
    g: &mut Graph,
    z1: Var,
    eps_seq: &[Var],
    vars: &MotionVars,
) -> Result<TrajectoryVars> {
    if g.shape(z1) != [vars.d, 1] {
        return Err(Error::ShapeMismatch {
            op: "generate_trajectory",
            detail: format!("z1 {:?}, expected [{}, 1]", g.shape(z1), vars.d),
        });
    }
    let mut codes = vec![z1];
    let mut hidden = Vec::with_capacity(eps_seq.len());
    let (mut h, mut c) = encode_initial(g, z1, vars)?;
    for &eps in eps_seq {
        let (h_t, c_t) = decode_step(g, eps, (h, c), vars)?;
        let z_t = next_code(g, *codes.last().unwrap(), h_t, vars)?;
        codes.push(z_t);
        hidden.push(h_t);
        h = h_t;
        c = c_t;
    }
    Ok(TrajectoryVars {
        codes,
        hidden,
        eps: eps_seq.to_vec(),
    })
}

/// Materialized trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// [n, d]; row 0 is the input z1.
    pub codes: Tensor,
    /// [n-1, d]
    pub eps: Tensor,
    /// [n-1, k]
    pub hidden: Tensor,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.codes.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.codes.shape()[1]
    }

    pub fn code(&self, t: usize) -> Tensor {
        let d = self.dim();
        Tensor::from_vec(self.codes.data()[t * d..(t + 1) * d].to_vec())
    }

    pub fn step_norms(&self) -> Vec<f64> {
        let d = self.dim();
        (1..self.len())
            .map(|t| {
                let prev = &self.codes.data()[(t - 1) * d..t * d];
                let cur = &self.codes.data()[t * d..(t + 1) * d];
                prev.iter()
                    .zip(cur)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Runs the recurrence outside any training graph. `eps_seq` is [(n-1), d];
/// n = eps rows + 1.
pub fn generate_trajectory(
    z1: &Tensor,
    eps_seq: &Tensor,
    params: &MotionGeneratorParams,
) -> Result<Trajectory> {
    let d = params.latent_dim();
    let k = params.hidden_dim();
    if z1.numel() != d {
        return Err(Error::ShapeMismatch {
            op: "generate_trajectory",
            detail: format!("z1 has {} elements, want {d}", z1.numel()),
        });
    }
    let steps = if eps_seq.numel() == 0 {
        0
    } else {
        if eps_seq.shape().len() != 2 || eps_seq.shape()[1] != d {
            return Err(Error::ShapeMismatch {
                op: "generate_trajectory",
                detail: format!("eps {:?}, want [n-1, {d}]", eps_seq.shape()),
            });
        }
        eps_seq.shape()[0]
    };

    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let z1v = g.constant(z1.clone().reshape(vec![d, 1])?);
    let eps_vars: Vec<Var> = (0..steps)
        .map(|t| {
            let row = Tensor::from_vec(eps_seq.data()[t * d..(t + 1) * d].to_vec());
            g.constant(row.reshape(vec![d, 1]).expect("eps row"))
        })
        .collect();
    let traj = generate_trajectory_graph(&mut g, z1v, &eps_vars, &vars)?;

    let mut codes = Vec::with_capacity((steps + 1) * d);
    for &cv in &traj.codes {
        codes.extend_from_slice(g.value(cv).data());
    }
    let mut hidden = Vec::with_capacity(steps * k);
    for &hv in &traj.hidden {
        hidden.extend_from_slice(g.value(hv).data());
    }
    Ok(Trajectory {
        codes: Tensor::new(vec![steps + 1, d], codes)?,
        eps: eps_seq.clone().reshape(vec![steps, d])?,
        hidden: Tensor::new(vec![steps, k], hidden)?,
    })
}

/// Mean cosine similarity between H(h_t) and eps_t; in [-1, 1], maximized
/// during training.
pub fn mutual_info_loss(
    g: &mut Graph,
    hidden: &[Var],
    eps: &[Var],
    mapper: &MlpVars,
) -> Result<Var> {
    if hidden.len() != eps.len() || hidden.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "mutual_info_loss",
            detail: format!("{} hidden vs {} eps", hidden.len(), eps.len()),
        });
    }
    let mut terms = Vec::with_capacity(hidden.len());
    for (&h, &e) in hidden.iter().zip(eps) {
        if g.value(e).norm() < 1e-9 {
            return Err(Error::Domain {
                op: "mutual_info_loss",
                detail: "zero-norm noise vector".into(),
            });
        }
        let mapped = mlp_forward(g, h, mapper)?;
        if g.value(mapped).norm() < 1e-12 {
            return Err(Error::Domain {
                op: "mutual_info_loss",
                detail: "zero-norm mapped hidden state".into(),
            });
        }
        terms.push(g.cosine_sim(mapped, e)?);
    }
    let stacked = g.concat0(&terms)?;
    g.mean_all(stacked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{compute_pca_basis, sample_z};
    use rand::SeedableRng;

    fn toy_params(seed: u64, d: usize, k: usize, lambda: f64) -> MotionGeneratorParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = sample_z(&mut rng, 50 * d, d);
        let basis = compute_pca_basis(&samples, k).unwrap();
        MotionGeneratorParams::init(&mut rng, d, basis, lambda, 2 * d).unwrap()
    }

    fn eps_block(seed: u64, rows: usize, d: usize) -> Tensor {
        sample_z(&mut ChaCha8Rng::seed_from_u64(seed), rows.max(1), d)
            .reshape(vec![rows.max(1), d])
            .unwrap()
    }

    #[test]
    fn zero_encoder_gives_zero_state() {
        let mut params = toy_params(1, 6, 4, 0.5);
        params.encoder = LstmCellParams::zeros(6, 4);
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let z1 = g.constant(Tensor::zeros(&[6, 1]));
        let (h, c) = encode_initial(&mut g, z1, &vars).unwrap();
        assert_eq!(g.value(h), &Tensor::zeros(&[4, 1]));
        assert_eq!(g.value(c), &Tensor::zeros(&[4, 1]));
    }

    #[test]
    fn encode_matches_standalone_cell() {
        let params = toy_params(2, 6, 4, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z1 = crate::nn::init::standard_normal_vec(&mut rng, 6);

        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let z1v = g.constant(z1.clone().reshape(vec![6, 1]).unwrap());
        let (h, _) = encode_initial(&mut g, z1v, &vars).unwrap();

        let mut g2 = Graph::new();
        let cell = params.encoder.bind(&mut g2, false);
        let x = g2.constant(z1.reshape(vec![6, 1]).unwrap());
        let h0 = g2.constant(Tensor::zeros(&[4, 1]));
        let c0 = g2.constant(Tensor::zeros(&[4, 1]));
        let (h2, _) = lstm_cell(&mut g2, x, h0, c0, &cell).unwrap();

        assert_eq!(g.value(h), g2.value(h2));
    }

    #[test]
    fn lambda_zero_is_constant_trajectory() {
        let params = toy_params(4, 6, 4, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z1 = crate::nn::init::standard_normal_vec(&mut rng, 6);
        let eps = eps_block(6, 7, 6);
        let traj = generate_trajectory(&z1, &eps, &params).unwrap();
        for t in 0..traj.len() {
            assert_eq!(traj.code(t), z1, "frame {t} drifted");
        }
    }

    #[test]
    fn single_code_trajectory() {
        let params = toy_params(4, 6, 4, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z1 = crate::nn::init::standard_normal_vec(&mut rng, 6);
        let eps = Tensor::new(vec![0, 6], vec![]).unwrap();
        let traj = generate_trajectory(&z1, &eps, &params).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.code(0), z1);
    }

    #[test]
    fn identity_basis_step_is_axis_move() {
        let mut params = toy_params(7, 4, 4, 0.5);
        params.basis.basis = Tensor::eye(4);
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let z_prev = g.constant(Tensor::new(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let h = g.constant(Tensor::new(vec![4, 1], vec![0.0, 1.0, 0.0, 0.0]).unwrap());
        let z = next_code(&mut g, z_prev, h, &vars).unwrap();
        assert_eq!(g.value(z).data(), &[1.0, 2.5, 3.0, 4.0]);
    }

    #[test]
    fn zero_hidden_keeps_code() {
        let params = toy_params(7, 5, 3, 0.5);
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let z_prev = g.constant(Tensor::new(vec![5, 1], vec![1.0, -1.0, 0.5, 0.0, 2.0]).unwrap());
        let h = g.constant(Tensor::zeros(&[3, 1]));
        let z = next_code(&mut g, z_prev, h, &vars).unwrap();
        assert_eq!(g.value(z), g.value(z_prev));
    }

    #[test]
    fn next_code_matches_matmul_oracle() {
        let params = toy_params(8, 5, 3, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let zp = crate::nn::init::standard_normal_vec(&mut rng, 5);
        let hv: Vec<f64> = (0..3).map(|_| 0.3 * crate::nn::init::standard_normal(&mut rng)).collect();
        let v = params.basis.basis.data();
        let mut want = zp.data().to_vec();
        for kx in 0..3 {
            for c in 0..5 {
                want[c] += 0.7 * hv[kx] * v[kx * 5 + c];
            }
        }
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let zv = g.constant(zp.reshape(vec![5, 1]).unwrap());
        let hvar = g.constant(Tensor::new(vec![3, 1], hv).unwrap());
        let z = next_code(&mut g, zv, hvar, &vars).unwrap();
        for (got, want) in g.value(z).data().iter().zip(&want) {
            assert!((got - want).abs() < 1e-6);
        }
    }

    #[test]
    fn step_norm_bounded_by_lambda_sqrt_k() {
        let params = toy_params(10, 8, 5, 0.5);
        let bound = 0.5 * (5.0f64).sqrt() + 1e-9;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..50 {
            let z1 = crate::nn::init::standard_normal_vec(&mut rng, 8);
            let eps = eps_block(100 + trial, 6, 8);
            let traj = generate_trajectory(&z1, &eps, &params).unwrap();
            for norm in traj.step_norms() {
                assert!(norm <= bound, "step norm {norm} above {bound}");
            }
        }
    }

    #[test]
    fn determinism() {
        let params = toy_params(12, 6, 4, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let z1 = crate::nn::init::standard_normal_vec(&mut rng, 6);
        let eps = eps_block(14, 5, 6);
        let a = generate_trajectory(&z1, &eps, &params).unwrap();
        let b = generate_trajectory(&z1, &eps, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_noise_changes_hidden() {
        let params = toy_params(15, 6, 4, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let z1 = crate::nn::init::standard_normal_vec(&mut rng, 6);
        let a = generate_trajectory(&z1, &eps_block(17, 4, 6), &params).unwrap();
        let b = generate_trajectory(&z1, &eps_block(18, 4, 6), &params).unwrap();
        assert!(a.hidden.max_abs_diff(&b.hidden) > 1e-6);
    }

    #[test]
    fn hidden_bounded_over_many_steps() {
        let params = toy_params(19, 6, 4, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let z1 = crate::nn::init::standard_normal_vec(&mut rng, 6);
        let eps = eps_block(21, 200, 6);
        let traj = generate_trajectory(&z1, &eps, &params).unwrap();
        for &v in traj.hidden.data() {
            assert!(v.abs() < 1.0);
        }
    }

    #[test]
    fn mutual_info_extremes() {
        let params = toy_params(22, 4, 3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let e: Vec<Tensor> = (0..3)
            .map(|_| {
                crate::nn::init::standard_normal_vec(&mut rng, 4)
                    .reshape(vec![4, 1])
                    .unwrap()
            })
            .collect();

        // identity mapper stand-in: feed eps itself as the "mapped" vector
        // by using an identity MLP over h = eps
        let id = MlpParams::identity(4, 1, Activation::None);
        let mut g = Graph::new();
        let mapper = id.bind(&mut g, false);
        let hs: Vec<Var> = e.iter().map(|t| g.constant(t.clone())).collect();
        let eps_pos: Vec<Var> = e.iter().map(|t| g.constant(t.clone())).collect();
        let l = mutual_info_loss(&mut g, &hs, &eps_pos, &mapper).unwrap();
        assert!((g.value(l).item() - 1.0).abs() < 1e-9);

        let eps_neg: Vec<Var> = e.iter().map(|t| g.constant(t.scale(-1.0))).collect();
        let l = mutual_info_loss(&mut g, &hs, &eps_neg, &mapper).unwrap();
        assert!((g.value(l).item() + 1.0).abs() < 1e-9);
        let _ = params;
    }

    #[test]
    fn random_high_dim_cosines_concentrate() {
        let d = 512;
        let mut below = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = crate::nn::init::standard_normal_vec(&mut rng, d);
            let b = crate::nn::init::standard_normal_vec(&mut rng, d);
            let cos = a.dot(&b).unwrap() / (a.norm() * b.norm());
            if cos.abs() < 0.2 {
                below += 1;
            }
        }
        assert!(below >= 98, "only {below}/100 inside the concentration band");
    }

    #[test]
    fn noise_gradient_flows() {
        let params = toy_params(24, 5, 3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let z1 = crate::nn::init::standard_normal_vec(&mut rng, 5);
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let z1v = g.constant(z1.reshape(vec![5, 1]).unwrap());
        let eps: Vec<Var> = (0..3)
            .map(|_| {
                let t = crate::nn::init::standard_normal_vec(&mut rng, 5)
                    .reshape(vec![5, 1])
                    .unwrap();
                g.leaf(t, true)
            })
            .collect();
        let traj = generate_trajectory_graph(&mut g, z1v, &eps, &vars).unwrap();
        let last = *traj.codes.last().unwrap();
        let sq = g.square(last).unwrap();
        let loss = g.sum_all(sq).unwrap();
        g.backward(loss).unwrap();
        let gnorm = g.grad(eps[0]).map(|t| t.norm()).unwrap_or(0.0);
        assert!(gnorm > 1e-10, "noise is structurally detached");
    }

    #[test]
    fn no_residual_mode_changes_only_next_code() {
        let mut params = toy_params(26, 4, 4, 0.5);
        params.basis.basis = Tensor::eye(4);
        params.residual_enabled = false;
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let z1 = crate::nn::init::standard_normal_vec(&mut rng, 4);
        let eps = eps_block(28, 3, 4);
        let traj = generate_trajectory(&z1, &eps, &params).unwrap();
        // with identity basis, z_t literally equals h_t
        for t in 1..traj.len() {
            let code = traj.code(t);
            let h = &traj.hidden.data()[(t - 1) * 4..t * 4];
            for (c, hh) in code.data().iter().zip(h) {
                assert!((c - hh).abs() < 1e-12);
            }
        }
    }
}
