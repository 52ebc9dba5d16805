//! ELBO pieces: per-cell categorical cross-entropy and the Gaussian KL term.

/// Mean categorical cross-entropy over `n * cells` cells.
///
/// `logits` and `targets` hold `n` samples of 3 channel-major planes each.
/// Returns the mean and its gradient with respect to `logits`.
pub fn softmax_cross_entropy(logits: &[f64], targets: &[f64], n: usize, cells: usize) -> (f64, Vec<f64>) {
    assert_eq!(logits.len(), n * 3 * cells);
    assert_eq!(targets.len(), logits.len());
    let total = (n * cells) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for s in 0..n {
        let base = s * 3 * cells;
        for i in 0..cells {
            let idx = [base + i, base + cells + i, base + 2 * cells + i];
            let m = idx.iter().map(|&j| logits[j]).fold(f64::NEG_INFINITY, f64::max);
            let exps = idx.map(|j| (logits[j] - m).exp());
            let z: f64 = exps.iter().sum();
            let log_z = m + z.ln();
            for (k, &j) in idx.iter().enumerate() {
                loss += targets[j] * (log_z - logits[j]);
                grad[j] = (exps[k] / z - targets[j]) / total;
            }
        }
    }
    (loss / total, grad)
}

/// `KL(N(mu, exp(logvar)) || N(0, I))` summed over latent dims and averaged over
/// the batch, with gradients of that mean.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64], n: usize) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(mu.len(), logvar.len());
    let nf = n as f64;
    let mut kl = 0.0;
    let mut dmu = vec![0.0; mu.len()];
    let mut dlv = vec![0.0; mu.len()];
    for i in 0..mu.len() {
        let var = logvar[i].exp();
        kl += 0.5 * (mu[i] * mu[i] + var - 1.0 - logvar[i]);
        dmu[i] = mu[i] / nf;
        dlv[i] = 0.5 * (var - 1.0) / nf;
    }
    (kl / nf, dmu, dlv)
}

/// `z = mu + exp(logvar / 2) * eps`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Vec<f64> {
    assert!(mu.len() == logvar.len() && mu.len() == eps.len());
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kl_closed_forms() {
        let (kl, _, _) = gaussian_kl(&[0.0; 32], &[0.0; 32], 1);
        assert_eq!(kl, 0.0);
        let mut mu = vec![0.0; 32];
        mu[0] = 1.0;
        let (kl, _, _) = gaussian_kl(&mu, &[0.0; 32], 1);
        assert_eq!(kl, 0.5);
    }

    #[test]
    fn kl_is_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mu: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let lv: Vec<f64> = (0..8).map(|_| rng.random_range(-4.0..4.0)).collect();
            assert!(gaussian_kl(&mu, &lv, 2).0 >= 0.0);
        }
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, cells) = (4, 6);
        let logits: Vec<f64> = (0..n * 3 * cells).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut targets = vec![0.0; logits.len()];
        let mut classes = Vec::new();
        for s in 0..n {
            for i in 0..cells {
                let k = rng.random_range(0..3);
                targets[s * 3 * cells + k * cells + i] = 1.0;
                classes.push((s, i, k));
            }
        }
        // oracle: -log(softmax_k) computed naively per cell
        let mut oracle = 0.0;
        for &(s, i, k) in &classes {
            let p: Vec<f64> = (0..3).map(|c| logits[s * 3 * cells + c * cells + i].exp()).collect();
            oracle += -(p[k] / p.iter().sum::<f64>()).ln();
        }
        oracle /= (n * cells) as f64;
        let (got, _) = softmax_cross_entropy(&logits, &targets, n, cells);
        assert!((got - oracle).abs() <= 1e-9 * oracle.abs());
    }

    #[test]
    fn reparameterize_identities() {
        let mu = [0.5, -1.0, 2.0];
        assert_eq!(reparameterize(&mu, &[0.3, -2.0, 1.0], &[0.0; 3]), mu.to_vec());
        let eps = [0.1, -0.7, 1.3];
        assert_eq!(reparameterize(&[0.0; 3], &[0.0; 3], &eps), eps.to_vec());
    }

    #[test]
    fn reparameterized_sample_mean_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mu, lv) = (1.5f64, 0.8f64);
        let sigma = (0.5 * lv).exp();
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            sum += reparameterize(&[mu], &[lv], &[e])[0];
        }
        let mean = sum / n as f64;
        assert!((mean - mu).abs() <= 3.0 * sigma / (n as f64).sqrt());
    }
}
