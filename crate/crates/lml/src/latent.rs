//! Latent sampling, the mapping-network analog, and PCA basis construction.
//!
//! The basis rows span the directions motion residuals may take; they are
//! the top-k eigenvectors of the sample covariance of codes drawn from the
//! latent prior (optionally pushed through the mapping network first).

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::checkpoint::ModelCheckpoint;
use crate::nn::init::standard_normal;
use crate::nn::mlp::{mlp_forward, MlpParams};
use crate::tensor::{Graph, Tensor};

/// d-dimensional latent code.
pub type LatentCode = Tensor;

/// Draws `count` i.i.d. standard-normal codes of dimension `dim`, as rows
/// of a [count, dim] tensor.
pub fn sample_z(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Tensor {
    assert!(count >= 1);
    let data = (0..count * dim).map(|_| standard_normal(rng)).collect();
    Tensor::new(vec![count, dim], data).expect("sample shape")
}

/// Pushes a code through the mapping network. An identity-configured
/// mapping realizes "z-mode" (w = z).
pub fn map_to_w(z: &Tensor, mapping: &MlpParams) -> Result<LatentCode> {
    let d = z.numel();
    if mapping.input_dim() != d {
        return Err(Error::ShapeMismatch {
            op: "map_to_w",
            detail: format!("code dim {d} vs mapping input {}", mapping.input_dim()),
        });
    }
    let mut g = Graph::new();
    let vars = mapping.bind(&mut g, false);
    let x = g.constant(z.clone().reshape(vec![d, 1])?);
    let y = mlp_forward(&mut g, x, &vars)?;
    let out_dim = g.value(y).numel();
    Ok(g.value(y).clone().reshape(vec![out_dim])?)
}

/// Row-orthonormal PCA basis with its eigenvalue spectrum.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    /// [k, d]; rows are principal directions, first nonzero coordinate of
    /// each row is positive.
    pub basis: Tensor,
    /// Eigenvalues of the sample covariance, descending.
    pub explained_variance: Vec<f64>,
    /// Mean of the samples the basis was computed from.
    pub sample_mean: Tensor,
    /// Number of samples used.
    pub sample_count: usize,
    /// Total variance (trace of the covariance), kept for capture curves.
    pub total_variance: f64,
}

impl PcaBasis {
    pub fn k(&self) -> usize {
        self.basis.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.basis.shape()[1]
    }

    /// Max |V·Vᵀ − I| entry.
    pub fn orthonormality_error(&self) -> f64 {
        let (k, d) = (self.k(), self.dim());
        let v = self.basis.data();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in i..k {
                let dot: f64 = (0..d).map(|c| v[i * d + c] * v[j * d + c]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }
}

/// PCA on mean-centered samples ([m, d] rows). Rows of the result are the
/// top-k covariance eigenvectors; eigenvalues are descending.
pub fn compute_pca_basis(samples: &Tensor, k: usize) -> Result<PcaBasis> {
    let shape = samples.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "compute_pca_basis",
            detail: format!("expected [m, d], got {shape:?}"),
        });
    }
    let (m, d) = (shape[0], shape[1]);
    if k < 1 || k > d || m <= k {
        return Err(Error::ShapeMismatch {
            op: "compute_pca_basis",
            detail: format!("need m > k >= 1 and k <= d, got m={m}, k={k}, d={d}"),
        });
    }
    if !samples.is_finite() {
        return Err(Error::DegenerateData("non-finite samples".into()));
    }

    let x = samples.data();
    let mut mean = vec![0.0; d];
    for row in x.chunks(d) {
        for (acc, &v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }

    // sample covariance (divides by m, matching the eigenvalue oracle)
    let mut cov = vec![0.0; d * d];
    for row in x.chunks(d) {
        for i in 0..d {
            let ci = row[i] - mean[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += ci * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / m as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    let total_variance: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if total_variance <= 0.0 {
        return Err(Error::DegenerateData(
            "zero-variance data: all samples identical".into(),
        ));
    }

    let (mut eigvals, mut eigvecs) = jacobi_eigh(&cov, d);

    // sort descending by eigenvalue
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());
    eigvals = order.iter().map(|&i| eigvals[i]).collect();
    eigvecs = order
        .iter()
        .map(|&i| eigvecs[i].clone())
        .collect();

    // sign convention: first nonzero coordinate of each row positive
    let mut basis = Vec::with_capacity(k * d);
    for vec in eigvecs.iter().take(k) {
        let sign = vec
            .iter()
            .find(|v| v.abs() > 1e-12)
            .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
            .unwrap_or(1.0);
        basis.extend(vec.iter().map(|&v| v * sign));
    }

    Ok(PcaBasis {
        basis: Tensor::new(vec![k, d], basis)?,
        explained_variance: eigvals[..k].iter().map(|&v| v.max(0.0)).collect(),
        sample_mean: Tensor::from_vec(mean),
        sample_count: m,
        total_variance,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric d x d matrix.
/// Returns (eigenvalues, eigenvectors as rows), unsorted.
fn jacobi_eigh(a: &[f64], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    // v starts as identity; accumulates rotations as columns
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let max_sweeps = 100;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += m[i * d + j] * m[i * d + j];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m, d)) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..d {
                    let mip = m[i * d + p];
                    let miq = m[i * d + q];
                    m[i * d + p] = c * mip - s * miq;
                    m[i * d + q] = s * mip + c * miq;
                }
                for j in 0..d {
                    let mpj = m[p * d + j];
                    let mqj = m[q * d + j];
                    m[p * d + j] = c * mpj - s * mqj;
                    m[q * d + j] = s * mpj + c * mqj;
                }
                for i in 0..d {
                    let vip = v[i * d + p];
                    let viq = v[i * d + q];
                    v[i * d + p] = c * vip - s * viq;
                    v[i * d + q] = s * vip + c * viq;
                }
            }
        }
    }
    let eigvals: Vec<f64> = (0..d).map(|i| m[i * d + i]).collect();
    let eigvecs: Vec<Vec<f64>> = (0..d)
        .map(|col| (0..d).map(|row| v[row * d + col]).collect())
        .collect();
    (eigvals, eigvecs)
}

fn frobenius(m: &[f64], d: usize) -> f64 {
    m.iter().take(d * d).map(|v| v * v).sum::<f64>().sqrt()
}

/// Cumulative fraction of total variance captured by the first i components,
/// for i = 1..=k. Monotone nondecreasing, bounded by 1.
pub fn variance_report(basis: &PcaBasis) -> Vec<f64> {
    let mut out = Vec::with_capacity(basis.explained_variance.len());
    let mut acc = 0.0;
    for &ev in &basis.explained_variance {
        acc += ev;
        out.push((acc / basis.total_variance).min(1.0));
    }
    out
}

const BASIS_META_TOTAL_VAR: &str = "total_variance";

impl PcaBasis {
    /// Stores the basis inside one MCKP archive: tensors `V`,
    /// `explained_variance`, `mean`, plus the scalar total variance and
    /// sample count.
    pub fn save(&self, path: &Path, config_hash: u64) -> Result<()> {
        let mut ck = ModelCheckpoint::new(config_hash, self.sample_count as u64);
        ck.insert("V", self.basis.clone())?;
        ck.insert(
            "explained_variance",
            Tensor::from_vec(self.explained_variance.clone()),
        )?;
        ck.insert("mean", self.sample_mean.clone())?;
        ck.insert(BASIS_META_TOTAL_VAR, Tensor::scalar(self.total_variance))?;
        ck.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = ModelCheckpoint::load(path)?;
        let basis = ck.require("V")?.clone();
        if basis.shape().len() != 2 {
            return Err(Error::corrupt(
                path.display().to_string(),
                "basis tensor V is not a matrix",
            ));
        }
        Ok(PcaBasis {
            explained_variance: ck.require("explained_variance")?.data().to_vec(),
            sample_mean: ck.require("mean")?.clone(),
            sample_count: ck.step as usize,
            total_variance: ck.require(BASIS_META_TOTAL_VAR)?.item(),
            basis,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sample_z_is_seed_stable() {
        let a = sample_z(&mut ChaCha8Rng::seed_from_u64(9), 16, 8);
        let b = sample_z(&mut ChaCha8Rng::seed_from_u64(9), 16, 8);
        assert_eq!(a, b);
    }

    #[test]
    fn sample_z_moments() {
        let dim = 8;
        let n = 100_000;
        let s = sample_z(&mut ChaCha8Rng::seed_from_u64(1), n, dim);
        for c in 0..dim {
            let mut mean = 0.0;
            for r in 0..n {
                mean += s.data()[r * dim + c];
            }
            mean /= n as f64;
            assert!(mean.abs() < 0.02, "coordinate {c} mean {mean}");
            let mut var = 0.0;
            for r in 0..n {
                let v = s.data()[r * dim + c] - mean;
                var += v * v;
            }
            var /= n as f64;
            assert!((var - 1.0).abs() < 0.05, "coordinate {c} var {var}");
        }
    }

    #[test]
    fn identity_mapping_is_identity() {
        use crate::nn::mlp::Activation;
        let mapping = MlpParams::identity(6, 2, Activation::None);
        let z = Tensor::from_vec(vec![0.5, -1.0, 2.0, 0.0, 3.0, -0.5]);
        let w = map_to_w(&z, &mapping).unwrap();
        assert_eq!(w, z);
    }

    #[test]
    fn nontrivial_mapping_shifts_distribution() {
        use crate::nn::mlp::Activation;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mapping = MlpParams::init(&mut rng, &[4, 8, 4], Activation::LeakyRelu(0.2), Activation::None);
        let n = 10_000;
        let zs = sample_z(&mut rng, n, 4);
        let mut mean_in = [0.0; 4];
        let mut mean_out = [0.0; 4];
        for r in 0..n {
            let z = Tensor::from_vec(zs.data()[r * 4..(r + 1) * 4].to_vec());
            let w = map_to_w(&z, &mapping).unwrap();
            for c in 0..4 {
                mean_in[c] += z.data()[c] / n as f64;
                mean_out[c] += w.data()[c] / n as f64;
            }
        }
        // leaky-relu kinks induce a detectable mean shift somewhere
        let shift: f64 = (0..4).map(|c| (mean_out[c] - mean_in[c]).abs()).sum();
        assert!(shift > 0.05, "no distribution shift detected: {shift}");
    }

    #[test]
    fn axis_aligned_two_dim_case() {
        // variances (4, 1) along the axes -> first row ±e1, ratio 0.8
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 5000;
        let mut data = Vec::with_capacity(m * 2);
        for _ in 0..m {
            data.push(2.0 * standard_normal(&mut rng));
            data.push(standard_normal(&mut rng));
        }
        let samples = Tensor::new(vec![m, 2], data).unwrap();
        let basis = compute_pca_basis(&samples, 2).unwrap();
        let first = &basis.basis.data()[..2];
        assert!(first[0].abs() > 0.99, "first row {:?}", first);
        assert!(first[0] > 0.0, "sign convention violated");
        let report = variance_report(&basis);
        assert!((report[0] - 0.8).abs() < 0.03, "capture {}", report[0]);
        assert!((report[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recovers_aligned_basis_up_to_sign() {
        // samples laid out exactly along coordinate axes with distinct scales
        let mut data = Vec::new();
        let scales = [3.0, 2.0, 1.0];
        for step in 0..60 {
            for axis in 0..3 {
                let mut row = vec![0.0; 3];
                row[axis] = scales[axis] * ((step as f64 / 10.0) - 3.0);
                data.extend(row);
            }
        }
        let samples = Tensor::new(vec![180, 3], data).unwrap();
        let basis = compute_pca_basis(&samples, 3).unwrap();
        for (i, row) in basis.basis.data().chunks(3).enumerate() {
            assert!(row[i] > 0.99, "row {i} = {row:?}");
        }
    }

    #[test]
    fn orthonormality_and_losslessness() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = sample_z(&mut rng, 200, 8);
        let basis = compute_pca_basis(&samples, 8).unwrap();
        assert!(basis.orthonormality_error() < 1e-6);

        // projection-reconstruction with k = d is lossless on centered data
        let d = 8;
        let v = basis.basis.data();
        for row in samples.data().chunks(d).take(20) {
            let centered: Vec<f64> = row
                .iter()
                .zip(basis.sample_mean.data())
                .map(|(x, m)| x - m)
                .collect();
            let mut recon = vec![0.0; d];
            for kx in 0..d {
                let coef: f64 = (0..d).map(|c| centered[c] * v[kx * d + c]).sum();
                for c in 0..d {
                    recon[c] += coef * v[kx * d + c];
                }
            }
            for c in 0..d {
                assert!((recon[c] - centered[c]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn rank_one_data_captures_everything_at_one() {
        let dir = [0.6, 0.8, 0.0, 0.0];
        let mut data = Vec::new();
        for i in 0..50 {
            let s = i as f64 - 25.0;
            data.extend(dir.iter().map(|&v| v * s));
        }
        let samples = Tensor::new(vec![50, 4], data).unwrap();
        let basis = compute_pca_basis(&samples, 4).unwrap();
        let report = variance_report(&basis);
        assert!((report[0] - 1.0).abs() < 1e-9, "curve {report:?}");
    }

    #[test]
    fn variance_report_monotone_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples = sample_z(&mut rng, 300, 10);
        let basis = compute_pca_basis(&samples, 10).unwrap();
        let report = variance_report(&basis);
        let mut prev = 0.0;
        for &v in &report {
            assert!(v >= prev - 1e-12 && v <= 1.0 + 1e-12);
            prev = v;
        }
        assert!((report[9] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_data_rejected() {
        let samples = Tensor::new(vec![10, 3], vec![1.0; 30]).unwrap();
        assert!(matches!(
            compute_pca_basis(&samples, 2),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn deterministic_given_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let samples = sample_z(&mut rng, 100, 6);
        let a = compute_pca_basis(&samples, 4).unwrap();
        let b = compute_pca_basis(&samples, 4).unwrap();
        assert_eq!(a.basis, b.basis);
        assert_eq!(a.explained_variance, b.explained_variance);
    }

    #[test]
    fn save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let samples = sample_z(&mut rng, 100, 6);
        let basis = compute_pca_basis(&samples, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.mckp");
        basis.save(&path, 7).unwrap();
        let back = PcaBasis::load(&path).unwrap();
        assert_eq!(basis.basis, back.basis);
        assert_eq!(basis.explained_variance, back.explained_variance);
        assert_eq!(basis.sample_mean, back.sample_mean);
        assert_eq!(basis.sample_count, back.sample_count);
    }
}
