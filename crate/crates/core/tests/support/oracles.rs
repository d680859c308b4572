//! Brute-force reference implementations used to check the library.
//!
//! Everything here works on plain vectors and is written for clarity over
//! speed: dense primal solves, explicit sums, no shared code with the crate
//! under test beyond the tie rule, which is part of the contract.

#![allow(dead_code)]

use rand::Rng;

/// Scores within this of the best tie; the lowest id wins.
pub const TIE_EPS: f64 = 1e-10;

/// Index of the best score under the tie rule.
pub fn pick(scores: &[(usize, f64)]) -> usize {
    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .filter(|s| s.1 >= best - TIE_EPS)
        .map(|s| s.0)
        .min()
        .expect("non-empty scores")
}

/// LU factorization with partial pivoting.
pub struct Lu {
    n: usize,
    lu: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(mut a: Vec<Vec<f64>>) -> Lu {
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
                .unwrap();
            assert!(a[p][k].abs() > 1e-300, "singular matrix");
            a.swap(k, p);
            perm.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                a[i][k] = f;
                for j in k + 1..n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        Lu { n, lu: a, perm }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                y[i] -= self.lu[i][j] * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] -= self.lu[i][j] * y[j];
            }
            y[i] /= self.lu[i][i];
        }
        y
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn preference(ranking: &[usize]) -> Vec<f64> {
    let mut pi = vec![0.0; ranking.len()];
    for (k, &v) in ranking.iter().enumerate() {
        pi[v] = 1.0 / (k as f64 + 1.0);
    }
    pi
}

/// `|Σ_v (2·1{q∈v} − 1) π(v)|` per open slot.
pub fn gbs_scores(pi: &[f64], rows: &[Vec<f64>], excluded: &[bool]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for q in 0..rows.len() {
        if excluded[q] {
            continue;
        }
        let mut s = 0.0;
        for v in 0..pi.len() {
            s += if rows[q][v] == 1.0 { pi[v] } else { -pi[v] };
        }
        out.push((q, s.abs()));
    }
    out
}

pub fn gbs_pick(pi: &[f64], rows: &[Vec<f64>], excluded: &[bool]) -> usize {
    let neg: Vec<(usize, f64)> = gbs_scores(pi, rows, excluded)
        .into_iter()
        .map(|(q, s)| (q, -s))
        .collect();
    pick(&neg)
}

/// LinRel in its primal `N x N` form:
/// `h_q = x_q (XᵀX + λI)⁻¹ Xᵀ`, score `h_q·r + (c/2)‖h_q‖`.
pub fn linrel_scores(
    rows: &[Vec<f64>],
    asked: &[usize],
    r: &[f64],
    c: f64,
    lambda: f64,
    excluded: &[bool],
) -> Vec<(usize, f64)> {
    let n = rows[0].len();
    let mut a = vec![vec![0.0; n]; n];
    for &s in asked {
        for i in 0..n {
            for j in 0..n {
                a[i][j] += rows[s][i] * rows[s][j];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += lambda;
    }
    let lu = Lu::new(a);
    // Columns of (XᵀX + λI)⁻¹ Xᵀ.
    let m: Vec<Vec<f64>> = asked.iter().map(|&s| lu.solve(&rows[s])).collect();
    let mut out = Vec::new();
    for q in 0..rows.len() {
        if excluded[q] {
            continue;
        }
        let h: Vec<f64> = m.iter().map(|col| dot(&rows[q], col)).collect();
        let norm = dot(&h, &h).sqrt();
        out.push((q, dot(&h, r) + c / 2.0 * norm));
    }
    out
}

pub fn rbf(a: &[f64], b: &[f64], sigma2: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    sigma2 * (-d / 2.0).exp()
}

/// `(μ, σ²)` per open slot from a dense solve on the raw rows.
pub fn gp_posteriors(
    rows: &[Vec<f64>],
    obs: &[(usize, f64)],
    sigma2: f64,
    noise: f64,
    excluded: &[bool],
) -> Vec<(usize, f64, f64)> {
    let t = obs.len();
    let mut k = vec![vec![0.0; t]; t];
    for i in 0..t {
        for j in 0..t {
            k[i][j] = rbf(&rows[obs[i].0], &rows[obs[j].0], sigma2) + if i == j { noise } else { 0.0 };
        }
    }
    let lu = Lu::new(k);
    let y: Vec<f64> = obs.iter().map(|o| o.1).collect();
    let alpha = lu.solve(&y);
    let mut out = Vec::new();
    for q in 0..rows.len() {
        if excluded[q] {
            continue;
        }
        let kq: Vec<f64> = obs.iter().map(|o| rbf(&rows[q], &rows[o.0], sigma2)).collect();
        let mu = dot(&kq, &alpha);
        let var = rbf(&rows[q], &rows[q], sigma2) - dot(&kq, &lu.solve(&kq));
        out.push((q, mu, var.max(0.0)));
    }
    out
}

pub fn ucb_scores(post: &[(usize, f64, f64)], beta: f64) -> Vec<(usize, f64)> {
    post.iter().map(|&(q, m, v)| (q, m + beta * v.sqrt())).collect()
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn ei(mu: f64, mu_star: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z = (mu - mu_star) / sigma;
    (mu - mu_star) * std_normal_cdf(z) + sigma * std_normal_pdf(z)
}

pub fn ei_scores(post: &[(usize, f64, f64)]) -> Vec<(usize, f64)> {
    let mu_star = post.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    post.iter()
        .map(|&(q, m, v)| (q, ei(m, mu_star, v.sqrt())))
        .collect()
}

/// A random question-selection instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub rows: Vec<Vec<f64>>,
    pub ranking: Vec<usize>,
    /// Asked slots with feedback, all distinct.
    pub asked: Vec<(usize, f64)>,
    /// Asked slots plus a few more.
    pub excluded: Vec<bool>,
}

pub fn random_instance<R: Rng>(rng: &mut R, max_slots: usize, max_items: usize, max_asked: usize) -> Instance {
    let f = rng.random_range(2..=max_slots);
    let n = rng.random_range(2..=max_items);
    let density = rng.random_range(0.05..0.6);
    let rows: Vec<Vec<f64>> = (0..f)
        .map(|_| {
            let mut r: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < density { 1.0 } else { 0.0 })
                .collect();
            if r.iter().all(|&x| x == 0.0) {
                r[rng.random_range(0..n)] = 1.0;
            }
            r
        })
        .collect();
    let mut ranking: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        ranking.swap(i, rng.random_range(0..=i));
    }
    let mut order: Vec<usize> = (0..f).collect();
    for i in (1..f).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let t = rng.random_range(1..=max_asked.min(f - 1));
    let asked: Vec<(usize, f64)> = order[..t]
        .iter()
        .map(|&s| (s, if rng.random::<bool>() { 1.0 } else { -1.0 }))
        .collect();
    let mut excluded = vec![false; f];
    for &(s, _) in &asked {
        excluded[s] = true;
    }
    for &s in &order[t..f - 1] {
        if rng.random::<f64>() < 0.1 {
            excluded[s] = true;
        }
    }
    Instance {
        rows,
        ranking,
        asked,
        excluded,
    }
}

/// `AP@k` with denominator `|relevant|`.
pub fn average_precision(ranking: &[usize], relevant: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for (pos, v) in ranking.iter().enumerate().take(k) {
        if relevant.contains(v) {
            let hits_so_far = ranking[..=pos].iter().filter(|x| relevant.contains(x)).count();
            total += hits_so_far as f64 / (pos + 1) as f64;
        }
    }
    total / relevant.len() as f64
}

pub fn reciprocal_rank(ranking: &[usize], relevant: &[usize], k: usize) -> f64 {
    for (pos, v) in ranking.iter().enumerate().take(k) {
        if relevant.contains(v) {
            return 1.0 / (pos + 1) as f64;
        }
    }
    0.0
}

pub fn ndcg(ranking: &[usize], relevant: &[usize], k: usize) -> f64 {
    let mut dcg = 0.0;
    for (pos, v) in ranking.iter().enumerate().take(k) {
        if relevant.contains(v) {
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let ideal: f64 = (0..relevant.len().min(k)).map(|pos| 1.0 / ((pos + 2) as f64).log2()).sum();
    dcg / ideal
}

/// `λ_u u + λ_Q tanh(W mean(words) + b) + λ_c Σ c`, with `W` row-major.
pub fn context(
    user: Option<&[f64]>,
    words: &[&[f64]],
    w: &[f64],
    b: &[f64],
    conv: &[Vec<f64>],
    lambdas: (f64, f64, f64),
) -> Vec<f64> {
    let d = b.len();
    let mut mean = vec![0.0; d];
    for word in words {
        for i in 0..d {
            mean[i] += word[i] / words.len() as f64;
        }
    }
    let mut z = vec![0.0; d];
    for i in 0..d {
        let pre: f64 = (0..d).map(|j| w[i * d + j] * mean[j]).sum::<f64>() + b[i];
        z[i] = lambdas.1 * pre.tanh();
        if let Some(u) = user {
            z[i] += lambdas.0 * u[i];
        }
        z[i] += lambdas.2 * conv.iter().map(|c| c[i]).sum::<f64>();
    }
    z
}

/// Normalized `exp(score)` over all items.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Item indices by descending probability, ties by ascending index.
pub fn order_by_probability(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    order
}
