//! Definition-level reference computations, independent of the sweep
//! kernels in the library.
#![allow(dead_code)]

use hazscreen_core::SurvivalDataset;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Naive {
    pub d: Array1<f64>,
    pub dmat: Array2<f64>,
    pub bmat: Array2<f64>,
}

/// Evaluates `d`, `D`, `B` for the given columns by direct double loops:
/// the at-risk indicator is `1(time_i >= t)`, the integral is taken over
/// the partition of `[0, tau]` by the observed times (integrand constant on
/// each `(a, b]`), and risk-set means are recomputed from scratch.
pub fn naive(times: &[f64], events: &[bool], z: &Array2<f64>, cols: &[usize], tau: f64) -> Naive {
    let n = times.len();
    let m = cols.len();
    let nf = n as f64;
    let zc = |i: usize, a: usize| z[[i, cols[a]]];
    let risk_mean = |t: f64| -> Option<Vec<f64>> {
        let at_risk: Vec<usize> = (0..n).filter(|&i| times[i] >= t).collect();
        if at_risk.is_empty() {
            return None;
        }
        Some((0..m).map(|a| at_risk.iter().map(|&i| zc(i, a)).sum::<f64>() / at_risk.len() as f64).collect())
    };

    let mut d = Array1::zeros(m);
    let mut bmat = Array2::zeros((m, m));
    for i in 0..n {
        if !events[i] {
            continue;
        }
        let zbar = risk_mean(times[i]).unwrap();
        for a in 0..m {
            d[a] += zc(i, a) - zbar[a];
            for c in 0..m {
                bmat[[a, c]] += (zc(i, a) - zbar[a]) * (zc(i, c) - zbar[c]);
            }
        }
    }

    let mut knots: Vec<f64> = times.iter().copied().filter(|&t| t <= tau).collect();
    knots.push(0.0);
    knots.push(tau);
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup();
    let mut dmat = Array2::zeros((m, m));
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let Some(zbar) = risk_mean(hi) else { continue };
        for i in (0..n).filter(|&i| times[i] >= hi) {
            for a in 0..m {
                for c in 0..m {
                    dmat[[a, c]] += (hi - lo) * (zc(i, a) - zbar[a]) * (zc(i, c) - zbar[c]);
                }
            }
        }
    }
    Naive { d: d / nf, dmat: dmat / nf, bmat: bmat / nf }
}

/// Naive evaluation on a dataset's stored (standardized, horizon-truncated) values.
pub fn naive_ds(ds: &SurvivalDataset<f64>, cols: &[usize]) -> Naive {
    naive(ds.times(), ds.events(), &ds.features().to_owned(), cols, ds.tau())
}

/// Random dataset with ties (times on a coarse grid) and random censoring.
pub fn random_dataset(seed: u64, n: usize, p: usize) -> SurvivalDataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let grid = rng.random_range(3..=n.max(4));
        let times: Vec<f64> = (0..n).map(|_| (rng.random_range(1..=grid) as f64) * 0.37).collect();
        let cens = rng.random_range(0.0..0.7);
        let events: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= cens).collect();
        let z = Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 4.0 - 2.0);
        if let Ok(ds) = SurvivalDataset::new(times, events, z) {
            return ds;
        }
    }
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1.0)
}

/// Random symmetric positive definite matrix with moderate conditioning.
pub fn random_spd(rng: &mut impl Rng, m: usize) -> Array2<f64> {
    let a = Array2::from_shape_fn((m, m), |_| rng.random::<f64>() * 2.0 - 1.0);
    let mut s = a.t().dot(&a);
    for i in 0..m {
        s[[i, i]] += 0.5;
    }
    s
}

/// Additive hazards data: `λ(t | Z) = base + αᵀZ` with `Z_j ~ U(−1, 1)`, so
/// the hazard stays positive when `base > Σ|α_j|`. Censoring is independent
/// exponential with rate `cens_rate`. Features are not standardized.
pub fn lin_ying_dataset(
    rng: &mut impl Rng,
    n: usize,
    alpha: &[f64],
    base: f64,
    cens_rate: f64,
) -> SurvivalDataset<f64> {
    assert!(base > alpha.iter().map(|a| a.abs()).sum::<f64>());
    let p = alpha.len();
    let z = Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0);
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let rate = base + (0..p).map(|j| alpha[j] * z[[i, j]]).sum::<f64>();
        let t = -rng.random::<f64>().ln() / rate;
        let c = -rng.random::<f64>().ln() / cens_rate;
        times.push(t.min(c));
        events.push(t <= c);
    }
    SurvivalDataset::builder(times, events, z).standardize(false).build().unwrap()
}

/// Dense solve of a small symmetric positive definite system by Gaussian
/// elimination with partial pivoting.
pub fn gauss_solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let m = b.len();
    let mut aug = Array2::zeros((m, m + 1));
    for i in 0..m {
        for j in 0..m {
            aug[[i, j]] = a[[i, j]];
        }
        aug[[i, m]] = b[i];
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| aug[[x, col]].abs().partial_cmp(&aug[[y, col]].abs()).unwrap()).unwrap();
        for j in 0..=m {
            aug.swap([col, j], [piv, j]);
        }
        for r in 0..m {
            if r != col {
                let f = aug[[r, col]] / aug[[col, col]];
                for j in col..=m {
                    aug[[r, j]] -= f * aug[[col, j]];
                }
            }
        }
    }
    Array1::from_shape_fn(m, |i| aug[[i, m]] / aug[[i, i]])
}

/// Additive hazards data with Bernoulli(1/2) features: hazard
/// `base + amp · Σ_{j < k} Z_j`, the remaining features are noise.
pub fn lin_ying_binary(
    rng: &mut impl Rng,
    n: usize,
    p: usize,
    k: usize,
    amp: f64,
    base: f64,
    cens_rate: f64,
) -> SurvivalDataset<f64> {
    let z = Array2::from_shape_fn((n, p), |_| if rng.random::<bool>() { 1.0 } else { 0.0 });
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let rate = base + amp * (0..k).map(|j| z[[i, j]]).sum::<f64>();
        let t = -rng.random::<f64>().ln() / rate;
        let c = -rng.random::<f64>().ln() / cens_rate;
        times.push(t.min(c));
        events.push(t <= c);
    }
    SurvivalDataset::new(times, events, z).unwrap()
}
