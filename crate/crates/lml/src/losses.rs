//! Adversarial, contrastive and feature-matching objectives.
//!
//! All adversarial losses work on raw logits through the numerically stable
//! log-sigmoid, so patch grids of any shape are fine. The contrastive loss
//! is a symmetric InfoNCE over per-video view pairs: every view serves as an
//! anchor once and the loss is summed over anchors.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenLossForm {
    /// -log sigma(D(fake)); strong gradient when the generator is losing.
    NonSaturating,
    /// log sigma(-D(fake)); the original minimax form.
    Saturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContrastiveForm {
    /// The positive similarity is excluded from the denominator; only the
    /// other videos' views (and bank entries) appear there.
    Literal,
    /// The positive term is part of the denominator, as in standard InfoNCE.
    Standard,
}

fn mean_log_sigmoid(g: &mut Graph, logits: &[Var], negate_input: bool) -> Result<Var> {
    if logits.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "gan_loss",
            detail: "no logit grids".into(),
        });
    }
    let mut means = Vec::with_capacity(logits.len());
    for &l in logits {
        let l = if negate_input { g.neg(l)? } else { l };
        let ls = g.log_sigmoid(l)?;
        means.push(g.mean_all(ls)?);
    }
    let stacked = g.concat0(&means)?;
    g.mean_all(stacked)
}

/// Discriminator objective (to minimize):
/// -E[log sigma(D(real))] - E[log sigma(-D(fake))], averaged per grid and
/// uniformly over grids/scales.
pub fn disc_loss(g: &mut Graph, real_logits: &[Var], fake_logits: &[Var]) -> Result<Var> {
    let real = mean_log_sigmoid(g, real_logits, false)?;
    let fake = mean_log_sigmoid(g, fake_logits, true)?;
    let sum = g.add(real, fake)?;
    g.neg(sum)
}

/// Generator adversarial objective (to minimize).
pub fn gen_adv_loss(g: &mut Graph, fake_logits: &[Var], form: GenLossForm) -> Result<Var> {
    match form {
        GenLossForm::NonSaturating => {
            let m = mean_log_sigmoid(g, fake_logits, false)?;
            g.neg(m)
        }
        GenLossForm::Saturating => mean_log_sigmoid(g, fake_logits, true),
    }
}

/// Fraction of patch logits classified correctly (real > 0, fake < 0);
/// 0.5 is chance.
pub fn disc_accuracy(real_logits: &[&Tensor], fake_logits: &[&Tensor]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for t in real_logits {
        correct += t.data().iter().filter(|&&v| v > 0.0).count();
        total += t.numel();
    }
    for t in fake_logits {
        correct += t.data().iter().filter(|&&v| v < 0.0).count();
        total += t.numel();
    }
    if total == 0 {
        0.5
    } else {
        correct as f64 / total as f64
    }
}

/// Mean per-layer cosine similarity between two feature stacks. Higher
/// means better matched; callers negate it to minimize.
pub fn feature_matching_score(g: &mut Graph, a: &[Var], b: &[Var]) -> Result<Var> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "feature_matching",
            detail: format!("{} vs {} layers", a.len(), b.len()),
        });
    }
    let mut sims = Vec::with_capacity(a.len());
    for (&fa, &fb) in a.iter().zip(b) {
        if g.shape(fa) != g.shape(fb) {
            return Err(Error::ShapeMismatch {
                op: "feature_matching",
                detail: format!("{:?} vs {:?}", g.shape(fa), g.shape(fb)),
            });
        }
        sims.push(g.cosine_sim(fa, fb)?);
    }
    let stacked = g.concat0(&sims)?;
    g.mean_all(stacked)
}

/// Symmetric InfoNCE over `pairs` of unit-norm view embeddings [e, 1], one
/// pair per video, summed over all 2N anchors. Bank rows [M, e] join every
/// denominator. With `Literal` the positive is kept out of the denominator,
/// so the loss can go negative.
pub fn contrastive_loss(
    g: &mut Graph,
    pairs: &[(Var, Var)],
    bank: Option<&Tensor>,
    tau: f64,
    form: ContrastiveForm,
) -> Result<Var> {
    if pairs.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "contrastive_loss",
            detail: "no view pairs".into(),
        });
    }
    if pairs.len() < 2 && bank.map_or(true, |b| b.shape()[0] == 0) {
        return Err(Error::Domain {
            op: "contrastive_loss",
            detail: "need at least two videos or a non-empty bank".into(),
        });
    }
    if tau <= 0.0 {
        return Err(Error::Domain {
            op: "contrastive_loss",
            detail: format!("temperature {tau} must be positive"),
        });
    }
    let bank_var = match bank {
        Some(b) if b.shape()[0] > 0 => Some(g.constant(b.clone())),
        _ => None,
    };

    let mut terms = Vec::with_capacity(2 * pairs.len());
    for (i, &(a, b)) in pairs.iter().enumerate() {
        for (anchor, positive) in [(a, b), (b, a)] {
            let pos_sim = g.dot(anchor, positive)?;
            let pos_term = g.scale(pos_sim, 1.0 / tau)?;

            // exp(sim / tau) against every candidate key
            let mut denom_parts = Vec::new();
            for (j, &(ca, cb)) in pairs.iter().enumerate() {
                if j == i {
                    continue;
                }
                for key in [ca, cb] {
                    let s = g.dot(anchor, key)?;
                    let s = g.scale(s, 1.0 / tau)?;
                    denom_parts.push(g.exp(s)?);
                }
            }
            if let Some(bv) = bank_var {
                // bank [M, e] x anchor [e, 1] -> similarities [M, 1]
                let sims = g.matmul(bv, anchor)?;
                let sims = g.scale(sims, 1.0 / tau)?;
                let exps = g.exp(sims)?;
                let m = g.shape(exps)[0];
                let flat = g.reshape(exps, vec![m])?;
                denom_parts.push(g.sum_all(flat)?);
            }
            if matches!(form, ContrastiveForm::Standard) {
                denom_parts.push(g.exp(pos_term)?);
            }
            let stacked = g.concat0(&denom_parts)?;
            let denom = g.sum_all(stacked)?;
            let log_denom = g.log(denom)?;
            let term = g.sub(log_denom, pos_term)?; // -(pos - log denom)
            terms.push(term);
        }
    }
    let all = g.concat0(&terms)?;
    g.sum_all(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_col(g: &mut Graph, v: Vec<f64>) -> Var {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let t = Tensor::from_vec(v.iter().map(|x| x / n).collect())
            .reshape(vec![v.len(), 1])
            .unwrap();
        g.constant(t)
    }

    #[test]
    fn disc_loss_balanced_logits() {
        // D(real) = D(fake) = 0 -> loss = 2 ln 2
        let mut g = Graph::new();
        let r = g.constant(Tensor::zeros(&[1, 2, 2]));
        let f = g.constant(Tensor::zeros(&[1, 2, 2]));
        let l = disc_loss(&mut g, &[r], &[f]).unwrap();
        assert!((g.value(l).item() - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn disc_loss_confident_correct_is_small() {
        let mut g = Graph::new();
        let r = g.constant(Tensor::full(&[4], 10.0));
        let f = g.constant(Tensor::full(&[4], -10.0));
        let l = disc_loss(&mut g, &[r], &[f]).unwrap();
        assert!(g.value(l).item() < 1e-3);
    }

    #[test]
    fn gen_loss_forms_agree_in_sign_structure() {
        let mut g = Graph::new();
        let fooled = g.constant(Tensor::full(&[2], 5.0));
        let caught = g.constant(Tensor::full(&[2], -5.0));
        let ns_win = gen_adv_loss(&mut g, &[fooled], GenLossForm::NonSaturating).unwrap();
        let ns_lose = gen_adv_loss(&mut g, &[caught], GenLossForm::NonSaturating).unwrap();
        assert!(g.value(ns_win).item() < g.value(ns_lose).item());
        let s_win = gen_adv_loss(&mut g, &[fooled], GenLossForm::Saturating).unwrap();
        let s_lose = gen_adv_loss(&mut g, &[caught], GenLossForm::Saturating).unwrap();
        assert!(g.value(s_win).item() < g.value(s_lose).item());
        // at logit 0 both equal +/- ln 2
        let zero = g.constant(Tensor::zeros(&[3]));
        let ns0 = gen_adv_loss(&mut g, &[zero], GenLossForm::NonSaturating).unwrap();
        assert!((g.value(ns0).item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gen_nonsaturating_keeps_gradient_when_losing() {
        let mut g = Graph::new();
        let logit = g.leaf(Tensor::scalar(-8.0), true);
        let ns = gen_adv_loss(&mut g, &[logit], GenLossForm::NonSaturating).unwrap();
        g.backward(ns).unwrap();
        let grad_ns = g.take_grad(logit).unwrap().item();
        // saturating form on a fresh graph
        let mut g2 = Graph::new();
        let logit2 = g2.leaf(Tensor::scalar(-8.0), true);
        let s = gen_adv_loss(&mut g2, &[logit2], GenLossForm::Saturating).unwrap();
        g2.backward(s).unwrap();
        let grad_s = g2.take_grad(logit2).unwrap().item();
        assert!(grad_ns.abs() > 100.0 * grad_s.abs());
    }

    #[test]
    fn accuracy_counts_patches() {
        let r = Tensor::from_vec(vec![1.0, -1.0, 2.0, 3.0]);
        let f = Tensor::from_vec(vec![-1.0, -2.0, 0.5, -0.1]);
        let acc = disc_accuracy(&[&r], &[&f]);
        assert!((acc - 6.0 / 8.0).abs() < 1e-12);
        assert_eq!(disc_accuracy(&[], &[]), 0.5);
    }

    #[test]
    fn feature_matching_extremes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let b = g.constant(Tensor::from_vec(vec![2.0, 4.0, 6.0]));
        let s = feature_matching_score(&mut g, &[a], &[b]).unwrap();
        assert!((g.value(s).item() - 1.0).abs() < 1e-9);
        let c = g.constant(Tensor::from_vec(vec![-1.0, -2.0, -3.0]));
        let s = feature_matching_score(&mut g, &[a], &[c]).unwrap();
        assert!((g.value(s).item() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn contrastive_two_orthogonal_videos() {
        // identical views within a video, orthogonal across videos:
        // each of the 4 anchor terms is ln 2 - 1/tau
        let tau = 0.07;
        let mut g = Graph::new();
        let a = unit_col(&mut g, vec![1.0, 0.0, 0.0]);
        let b = unit_col(&mut g, vec![0.0, 1.0, 0.0]);
        let l = contrastive_loss(&mut g, &[(a, a), (b, b)], None, tau, ContrastiveForm::Literal)
            .unwrap();
        let want = 4.0 * (std::f64::consts::LN_2 - 1.0 / tau);
        assert!(
            (g.value(l).item() - want).abs() < 1e-6,
            "got {}, want {want}",
            g.value(l).item()
        );
    }

    #[test]
    fn contrastive_all_identical_views() {
        // every embedding equal: each anchor contributes ln(2N - 2)
        let tau = 0.07;
        for n in [2usize, 3, 5] {
            let mut g = Graph::new();
            let v = unit_col(&mut g, vec![0.6, 0.8]);
            let pairs: Vec<(Var, Var)> = (0..n).map(|_| (v, v)).collect();
            let l =
                contrastive_loss(&mut g, &pairs, None, tau, ContrastiveForm::Literal).unwrap();
            let want = 2.0 * n as f64 * ((2 * n - 2) as f64).ln();
            assert!(
                (g.value(l).item() - want).abs() < 1e-6,
                "N = {n}: got {}, want {want}",
                g.value(l).item()
            );
        }
    }

    #[test]
    fn standard_form_adds_positive_to_denominator() {
        let tau = 0.5;
        let mut g = Graph::new();
        let a = unit_col(&mut g, vec![1.0, 0.0]);
        let b = unit_col(&mut g, vec![0.0, 1.0]);
        let pairs = [(a, a), (b, b)];
        let lit =
            contrastive_loss(&mut g, &pairs, None, tau, ContrastiveForm::Literal).unwrap();
        let std_ =
            contrastive_loss(&mut g, &pairs, None, tau, ContrastiveForm::Standard).unwrap();
        // each anchor: -1/tau + ln(2 + e^{1/tau}) vs -1/tau + ln 2
        let want_std = 4.0 * (-(1.0 / tau) + (2.0 + (1.0 / tau).exp()).ln());
        assert!((g.value(std_).item() - want_std).abs() < 1e-9);
        assert!(g.value(std_).item() > g.value(lit).item());
    }

    #[test]
    fn bank_negatives_enter_denominator() {
        let tau = 0.2;
        let mut g = Graph::new();
        let a = unit_col(&mut g, vec![1.0, 0.0]);
        let bank = Tensor::new(vec![3, 2], vec![0.0, 1.0, 0.0, -1.0, -1.0, 0.0]).unwrap();
        let l = contrastive_loss(
            &mut g,
            &[(a, a)],
            Some(&bank),
            tau,
            ContrastiveForm::Literal,
        )
        .unwrap();
        // both anchors: -1/tau + ln(2 e^0 + e^{-1/tau})
        let want = 2.0 * (-(1.0 / tau) + (2.0 + (-1.0 / tau).exp()).ln());
        assert!((g.value(l).item() - want).abs() < 1e-9);
    }

    #[test]
    fn contrastive_gradient_matches_finite_difference() {
        let tau = 0.5;
        let eval = |a_vec: &[f64]| -> (f64, Option<Tensor>) {
            let mut g = Graph::new();
            let a = g.leaf(
                Tensor::new(vec![2, 1], a_vec.to_vec()).unwrap(),
                true,
            );
            let b = unit_col(&mut g, vec![0.6, 0.8]);
            let c = unit_col(&mut g, vec![-1.0, 0.0]);
            let l = contrastive_loss(
                &mut g,
                &[(a, b), (c, c)],
                None,
                tau,
                ContrastiveForm::Literal,
            )
            .unwrap();
            let val = g.value(l).item();
            g.backward(l).unwrap();
            (val, g.take_grad(a))
        };
        let x = [0.8, 0.6];
        let (_, grad) = eval(&x);
        let grad = grad.unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let num = (eval(&xp).0 - eval(&xm).0) / (2.0 * h);
            let ana = grad.data()[i];
            assert!(
                (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8) < 1e-4,
                "coord {i}: analytic {ana} vs numeric {num}"
            );
        }
    }

    #[test]
    fn degenerate_setups_rejected() {
        let mut g = Graph::new();
        let a = unit_col(&mut g, vec![1.0, 0.0]);
        assert!(contrastive_loss(&mut g, &[], None, 0.07, ContrastiveForm::Literal).is_err());
        assert!(
            contrastive_loss(&mut g, &[(a, a)], None, 0.07, ContrastiveForm::Literal).is_err()
        );
        assert!(
            contrastive_loss(&mut g, &[(a, a), (a, a)], None, 0.0, ContrastiveForm::Literal)
                .is_err()
        );
    }
}
