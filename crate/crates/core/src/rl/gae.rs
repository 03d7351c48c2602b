use alloc::vec;
use alloc::vec::Vec;

/// Generalized advantage estimation over a `horizon × n_envs` rollout stored
/// step-major (`index = t · n_envs + i`).
///
/// `dones[k]` marks that the episode ended after step `k`; the value after a
/// terminal step is not bootstrapped. Returns `(advantages, returns)` with
/// `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    n_envs: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let len = rewards.len();
    assert!(n_envs > 0 && len % n_envs == 0, "rollout length must be a multiple of the env count");
    assert_eq!(values.len(), len);
    assert_eq!(dones.len(), len);
    assert_eq!(last_values.len(), n_envs);
    let horizon = len / n_envs;
    let mut adv = vec![0.0f64; len];
    let mut ret = vec![0.0f64; len];
    for i in 0..n_envs {
        let mut running = 0.0f64;
        for t in (0..horizon).rev() {
            let k = t * n_envs + i;
            let next_value = if t + 1 < horizon { values[k + n_envs] } else { last_values[i] };
            let live = if dones[k] { 0.0 } else { 1.0 };
            let delta = rewards[k] + gamma * live * next_value - values[k];
            running = delta + gamma * lambda * live * running;
            adv[k] = running;
            ret[k] = running + values[k];
        }
    }
    (adv, ret)
}

/// Shifts and scales to zero mean, unit (population) standard deviation.
pub fn normalize(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (*v - mean) * (*v - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var) + 1e-8;
    for v in x {
        *v = (*v - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, uniform};

    /// Direct sum `Σ_k (γλ)^k δ_{t+k}`, truncated at the first terminal step.
    fn brute_force(r: &[f64], v: &[f64], d: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
        let h = r.len();
        let value_after = |k: usize| if k + 1 < h { v[k + 1] } else { last };
        (0..h)
            .map(|t| {
                let mut total = 0.0;
                let mut weight = 1.0;
                for k in t..h {
                    let boot = if d[k] { 0.0 } else { gamma * value_after(k) };
                    total += weight * (r[k] + boot - v[k]);
                    if d[k] {
                        break;
                    }
                    weight *= gamma * lambda;
                }
                total
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_rollouts() {
        let mut rng = seeded(11);
        for trial in 0..50 {
            let n = 1 + trial % 4;
            let h = 1 + (trial * 7) % 23;
            let gamma = uniform(&mut rng, 0.8, 0.999);
            let lambda = uniform(&mut rng, 0.0, 1.0);
            let draw = |rng: &mut _| uniform(rng, -2.0, 2.0);
            let r: Vec<f64> = (0..n * h).map(|_| draw(&mut rng)).collect();
            let v: Vec<f64> = (0..n * h).map(|_| draw(&mut rng)).collect();
            let d: Vec<bool> = (0..n * h).map(|_| uniform(&mut rng, 0.0, 1.0) < 0.15).collect();
            let last: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let (adv, ret) = compute_gae(&r, &v, &d, &last, n, gamma, lambda);
            for i in 0..n {
                let col = |x: &[f64]| (0..h).map(|t| x[t * n + i]).collect::<Vec<f64>>();
                let dcol: Vec<bool> = (0..h).map(|t| d[t * n + i]).collect();
                let expect = brute_force(&col(&r), &col(&v), &dcol, last[i], gamma, lambda);
                for t in 0..h {
                    let k = t * n + i;
                    assert!((adv[k] - expect[t]).abs() < 1e-10);
                    assert!((ret[k] - (expect[t] + v[k])).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn lambda_one_gives_discounted_return_minus_value() {
        let r = [1.0, 1.0, 1.0];
        let v = [0.5, 0.25, 0.0];
        let (adv, _) = compute_gae(&r, &v, &[false; 3], &[2.0], 1, 0.5, 1.0);
        let g0 = 1.0 + 0.5 + 0.25 + 0.125 * 2.0;
        assert!((adv[0] - (g0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn normalize_gives_zero_mean_unit_std() {
        let mut x = [1.0, 2.0, 3.0, 4.0];
        normalize(&mut x);
        let mean: f64 = x.iter().sum::<f64>() / 4.0;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-7);
    }
}
