#![allow(dead_code)]

use dynpen::mlp::{Activation, Network};

/// Scalar-loop forward pass, independent of the ndarray path.
pub fn naive_forward(net: &Network, input: &[f64]) -> Vec<f64> {
    let mut a = input.to_vec();
    for ((spec, w), b) in net.specs().iter().zip(net.weights()).zip(net.biases()) {
        let mut z = vec![0.0; spec.output];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut acc = b[o];
            for (i, ai) in a.iter().enumerate() {
                acc += w[[o, i]] * ai;
            }
            *zo = match spec.activation {
                Activation::Relu => acc.max(0.0),
                Activation::Identity => acc,
            };
        }
        a = z;
    }
    a
}

pub fn naive_mse(net: &Network, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, t) in inputs.iter().zip(targets) {
        for (y, t) in naive_forward(net, x).iter().zip(t) {
            sum += (y - t) * (y - t);
            count += 1;
        }
    }
    sum / count as f64
}

/// Central finite differences of the batch MSE w.r.t. every parameter, in
/// `Network::params_mut` order.
pub fn finite_difference_gradient(net: &Network, inputs: &[Vec<f64>], targets: &[Vec<f64>], h: f64) -> Vec<f64> {
    let n = net.num_params();
    (0..n)
        .map(|i| {
            let mut plus = net.clone();
            *plus.params_mut().nth(i).unwrap() += h;
            let mut minus = net.clone();
            *minus.params_mut().nth(i).unwrap() -= h;
            (naive_mse(&plus, inputs, targets) - naive_mse(&minus, inputs, targets)) / (2.0 * h)
        })
        .collect()
}

/// Deterministic tabular MDP: `next[s][a]`, `reward[s][a]`.
pub struct TabularMdp {
    pub next: Vec<Vec<usize>>,
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn two_state() -> Self {
        Self {
            next: vec![vec![0, 1], vec![0, 1]],
            reward: vec![vec![0.0, 1.0], vec![2.0, -1.0]],
            gamma: 0.9,
        }
    }

    /// Optimal Q by value iteration to a fixed point.
    pub fn value_iteration(&self) -> Vec<Vec<f64>> {
        let ns = self.next.len();
        let na = self.next[0].len();
        let mut q = vec![vec![0.0; na]; ns];
        loop {
            let v: Vec<f64> = q.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
            let mut delta: f64 = 0.0;
            for s in 0..ns {
                for a in 0..na {
                    let new = self.reward[s][a] + self.gamma * v[self.next[s][a]];
                    delta = delta.max((new - q[s][a]).abs());
                    q[s][a] = new;
                }
            }
            if delta < 1e-13 {
                return q;
            }
        }
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.next.len()];
        v[s] = 1.0;
        v
    }
}

/// Exact minimum total stage cost over all action sequences that keep every
/// visited state inside the box, for Euler dynamics with unit step and the
/// 41-point action grid. States are tracked on the integer lattice of
/// cumulative acceleration (units of 1/80), so no rounding is involved.
/// `None` when no feasible sequence exists.
pub fn min_feasible_cost(x1: f64, x2: f64, horizon: usize) -> Option<f64> {
    use std::collections::HashMap;
    let eps = 1e-12;
    let n_min = ((-0.25 - x2) * 80.0 - 1e-9).ceil() as i64;
    let n_max = ((1.0 - x2) * 80.0 + 1e-9).floor() as i64;
    if !(-1.0..=1.0).contains(&x1) || n_min > 0 || n_max < 0 {
        return None;
    }
    // key: (velocity offset N, position offset M) with
    // x2_k = x2 + N/80, x1_k = x1 + k*x2 + M/80
    let mut layer: HashMap<(i64, i64), f64> = HashMap::from([((0, 0), 0.0)]);
    for k in 0..horizon {
        let mut next: HashMap<(i64, i64), f64> = HashMap::new();
        for (&(n, m), &cost) in &layer {
            let pos = x1 + k as f64 * x2 + m as f64 / 80.0;
            let m_next = m + n;
            let pos_next = x1 + (k + 1) as f64 * x2 + m_next as f64 / 80.0;
            if pos_next < -1.0 - eps || pos_next > 1.0 + eps {
                continue;
            }
            for du in -20i64..=20 {
                let n_next = n + du;
                if n_next < n_min || n_next > n_max {
                    continue;
                }
                let u = du as f64 / 80.0;
                let c = cost + pos * pos + u * u;
                let slot = next.entry((n_next, m_next)).or_insert(f64::INFINITY);
                if c < *slot {
                    *slot = c;
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        layer = next;
    }
    layer.values().copied().reduce(f64::min)
}

/// Pearson chi-square p-value of `counts` against the uniform distribution.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}
