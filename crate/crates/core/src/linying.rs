//! Multivariate additive-hazards (Lin-Ying) estimation on feature subsets.
//!
//! For a subset of m features this builds the m-vector `d`, the m×m
//! information `D` and the m×m martingale variance `B` in one sweep, solves
//! `D β = d`, and forms the sandwich covariance `D⁻¹ B D⁻¹ / n`. The
//! re-recruitment kernel scores each candidate feature as if it were added
//! to a selected set, reusing one factorization of the selected block.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast_stat::KahanSum;
use crate::linalg::{self, Cholesky};
use crate::scalar::Scalar;
use crate::survival_data::SurvivalDataset;

/// `d`, `D`, `B` restricted to a feature subset.
#[derive(Debug, Clone, Serialize)]
pub struct SubsetModel<F> {
    pub subset: Vec<usize>,
    pub n: usize,
    pub d: Array1<F>,
    pub dmat: Array2<F>,
    pub bmat: Array2<F>,
}

/// Unpenalized solution of `D β = d` with its sandwich covariance.
#[derive(Debug, Clone, Serialize)]
pub struct LinYingFit<F> {
    pub beta: Array1<F>,
    pub cov: Array2<F>,
    pub se: Array1<F>,
    /// `|beta_j| / se_j`
    pub z: Array1<F>,
    /// Loss `βᵀDβ − 2βᵀd` at the solution, equal to `−βᵀd`.
    pub loss: F,
    /// 1-norm condition number of `D`.
    pub condition: F,
}

impl<F: Scalar> SubsetModel<F> {
    pub fn m(&self) -> usize {
        self.subset.len()
    }

    /// `βᵀDβ − 2βᵀd`
    pub fn loss(&self, beta: &Array1<F>) -> F {
        beta.dot(&self.dmat.dot(beta)) - F::lit(2.0) * beta.dot(&self.d)
    }

    /// Smallest eigenvalue of `D` is at least `−1e-8·trace/m`.
    pub fn is_psd(&self) -> bool {
        let m = self.m().max(1);
        let trace = self.dmat.diag().sum();
        linalg::is_positive_definite_shifted(self.dmat.view(), F::lit(1e-8) * trace / F::from_count(m))
    }

    pub fn solve(&self) -> Result<LinYingFit<F>> {
        let chol = Cholesky::factor(self.dmat.view())?;
        let beta = chol.solve(self.d.view());
        let dinv = chol.inverse();
        let nf = F::from_count(self.n);
        let mut cov = dinv.dot(&self.bmat).dot(&dinv).mapv(|v| v / nf);
        let m = self.m();
        for i in 0..m {
            for j in (i + 1)..m {
                let avg = (cov[[i, j]] + cov[[j, i]]) * F::lit(0.5);
                cov[[i, j]] = avg;
                cov[[j, i]] = avg;
            }
        }
        let se = cov.diag().mapv(|v| v.max(F::zero()).sqrt());
        let z = Array1::from_shape_fn(m, |j| if se[j] > F::zero() { beta[j].abs() / se[j] } else { F::zero() });
        let loss = -beta.dot(&self.d);
        Ok(LinYingFit { beta, cov, se, z, loss, condition: chol.condition() })
    }
}

fn check_subset<F: Scalar>(ds: &SurvivalDataset<F>, subset: &[usize]) -> Result<()> {
    let mut seen = vec![false; ds.p()];
    for &j in subset {
        ds.check_feature(j)?;
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::DuplicateIndex(j));
        }
    }
    Ok(())
}

/// Gathers the listed columns in sorted-position order: `out[pos*m + l]`.
fn gather_by_position<F: Scalar>(ds: &SurvivalDataset<F>, cols: &[usize]) -> Vec<F> {
    let m = cols.len();
    let mut out = vec![F::zero(); ds.n() * m];
    for (l, &j) in cols.iter().enumerate() {
        let col = ds.feature_slice(j);
        for (pos, &i) in ds.order().iter().enumerate() {
            out[pos * m + l] = col[i];
        }
    }
    out
}

/// Builds `d`, `D`, `B` for the given features in one sweep.
pub fn build_subset<F: Scalar>(ds: &SurvivalDataset<F>, subset: &[usize]) -> Result<SubsetModel<F>> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("subset must be nonempty".into()));
    }
    check_subset(ds, subset)?;
    let m = subset.len();
    let xs = gather_by_position(ds, subset);
    let groups = ds.groups();
    let mut count = F::zero();
    let mut mean = vec![F::zero(); m];
    let mut delta = vec![F::zero(); m];
    let mut comoment = vec![F::zero(); m * m];
    let mut d = vec![KahanSum::default(); m];
    let mut dint = vec![KahanSum::default(); m * m];
    let mut b = vec![KahanSum::default(); m * m];
    let mut dev = vec![F::zero(); m];
    for k in (0..groups.len()).rev() {
        let g = groups[k];
        for pos in g.start..g.end {
            let x = &xs[pos * m..(pos + 1) * m];
            count += F::one();
            for l in 0..m {
                delta[l] = x[l] - mean[l];
                mean[l] += delta[l] / count;
            }
            for a in 0..m {
                for c in a..m {
                    comoment[a * m + c] += delta[a] * (x[c] - mean[c]);
                }
            }
        }
        let prev = if k == 0 { F::zero() } else { groups[k - 1].time };
        let width = g.time - prev;
        for a in 0..m {
            for c in a..m {
                dint[a * m + c].add(width * comoment[a * m + c]);
            }
        }
        for pos in g.start..g.deaths_end {
            let x = &xs[pos * m..(pos + 1) * m];
            for l in 0..m {
                dev[l] = x[l] - mean[l];
                d[l].add(dev[l]);
            }
            for a in 0..m {
                for c in a..m {
                    b[a * m + c].add(dev[a] * dev[c]);
                }
            }
        }
    }
    let nf = F::from_count(ds.n());
    let mut dmat = Array2::zeros((m, m));
    let mut bmat = Array2::zeros((m, m));
    for a in 0..m {
        for c in a..m {
            let dv = dint[a * m + c].value() / nf;
            let bv = b[a * m + c].value() / nf;
            dmat[[a, c]] = dv;
            dmat[[c, a]] = dv;
            bmat[[a, c]] = bv;
            bmat[[c, a]] = bv;
        }
    }
    Ok(SubsetModel {
        subset: subset.to_vec(),
        n: ds.n(),
        d: Array1::from_iter(d.iter().map(|s| s.value() / nf)),
        dmat,
        bmat,
    })
}

/// How a candidate is scored when adjusted for the selected set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecruitScore {
    /// Absolute coefficient of the candidate in the joint model.
    Coef,
    /// Absolute Wald statistic of that coefficient (sandwich variance).
    ZStat,
    /// Decrease of the minimal loss when the candidate joins.
    LossDrop,
}

/// A candidate whose information is (numerically) explained by the selected
/// set; it receives score 0.
#[derive(Debug, Clone, Serialize)]
pub struct CollinearCandidate {
    pub feature: usize,
    /// Schur complement `e − fᵀ D̃⁻¹ f` relative to `e`.
    pub relative_pivot: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecruitScores<F> {
    /// One score per candidate, in the order given.
    pub scores: Vec<F>,
    pub skipped: Vec<CollinearCandidate>,
}

/// Moments of one candidate and its cross terms with the selected block.
struct CrossMoments<F> {
    d: F,
    e: F,
    b: F,
    f: Vec<F>,
    g: Vec<F>,
}

struct SelectedSweep<F> {
    m: usize,
    xs: Vec<F>,
    /// Running mean of the selected block after adding each sorted position.
    pos_mean: Vec<F>,
    /// Mean of the selected block over each group's full risk set.
    group_mean: Vec<F>,
}

impl<F: Scalar> SelectedSweep<F> {
    fn new(ds: &SurvivalDataset<F>, selected: &[usize]) -> Self {
        let m = selected.len();
        let n = ds.n();
        let xs = gather_by_position(ds, selected);
        let groups = ds.groups();
        let mut pos_mean = vec![F::zero(); n * m];
        let mut group_mean = vec![F::zero(); groups.len() * m];
        let mut mean = vec![F::zero(); m];
        let mut count = F::zero();
        for k in (0..groups.len()).rev() {
            let g = groups[k];
            for pos in g.start..g.end {
                count += F::one();
                for l in 0..m {
                    let delta = xs[pos * m + l] - mean[l];
                    mean[l] += delta / count;
                }
                pos_mean[pos * m..(pos + 1) * m].copy_from_slice(&mean);
            }
            group_mean[k * m..(k + 1) * m].copy_from_slice(&mean);
        }
        Self { m, xs, pos_mean, group_mean }
    }

    fn cross(&self, ds: &SurvivalDataset<F>, j: usize) -> CrossMoments<F> {
        let m = self.m;
        let col = ds.feature_slice(j);
        let order = ds.order();
        let groups = ds.groups();
        let mut count = F::zero();
        let mut mz = F::zero();
        let mut m2z = F::zero();
        let mut c = vec![F::zero(); m];
        let mut e = KahanSum::default();
        let mut f = vec![KahanSum::default(); m];
        let mut d = KahanSum::default();
        let mut b = KahanSum::default();
        let mut g_acc = vec![KahanSum::default(); m];
        for k in (0..groups.len()).rev() {
            let g = groups[k];
            for pos in g.start..g.end {
                let z = col[order[pos]];
                count += F::one();
                let dz = z - mz;
                mz += dz / count;
                m2z += dz * (z - mz);
                let x = &self.xs[pos * m..(pos + 1) * m];
                let xm = &self.pos_mean[pos * m..(pos + 1) * m];
                for l in 0..m {
                    c[l] += dz * (x[l] - xm[l]);
                }
            }
            let prev = if k == 0 { F::zero() } else { groups[k - 1].time };
            let width = g.time - prev;
            e.add(width * m2z);
            for l in 0..m {
                f[l].add(width * c[l]);
            }
            let gm = &self.group_mean[k * m..(k + 1) * m];
            for pos in g.start..g.deaths_end {
                let devz = col[order[pos]] - mz;
                d.add(devz);
                b.add(devz * devz);
                let x = &self.xs[pos * m..(pos + 1) * m];
                for l in 0..m {
                    g_acc[l].add(devz * (x[l] - gm[l]));
                }
            }
        }
        let nf = F::from_count(ds.n());
        CrossMoments {
            d: d.value() / nf,
            e: e.value() / nf,
            b: b.value() / nf,
            f: f.iter().map(|s| s.value() / nf).collect(),
            g: g_acc.iter().map(|s| s.value() / nf).collect(),
        }
    }
}

/// Relative Schur-complement pivot below which a candidate counts as
/// collinear with the selected set.
const COLLINEAR_PIVOT: f64 = 1e-12;

/// Scores each candidate adjusted for the `selected` features.
///
/// With the candidate placed first, the joint information matrix is
/// `[[e, fᵀ], [f, D̃]]` and only the first row of its inverse is needed:
/// `k⁻¹ [1, −(D̃⁻¹f)ᵀ]` with `k = e − fᵀD̃⁻¹f`. So one factorization of `D̃`
/// and one extra solve per candidate suffice.
pub fn rerecruit_scores<F: Scalar>(
    ds: &SurvivalDataset<F>,
    selected: &[usize],
    candidates: &[usize],
    kind: RecruitScore,
) -> Result<RecruitScores<F>> {
    check_subset(ds, selected)?;
    for &j in candidates {
        ds.check_feature(j)?;
        if selected.contains(&j) {
            return Err(Error::InvalidArgument(format!("candidate {j} is already selected")));
        }
    }
    let nf = F::from_count(ds.n());
    let (chol, beta_sel, bsel) = if selected.is_empty() {
        (None, Array1::zeros(0), Array2::zeros((0, 0)))
    } else {
        let sm = build_subset(ds, selected)?;
        let chol = Cholesky::factor(sm.dmat.view())?;
        let beta = chol.solve(sm.d.view());
        (Some(chol), beta, sm.bmat)
    };
    let sweep = SelectedSweep::new(ds, selected);
    let results: Vec<(F, Option<CollinearCandidate>)> = candidates
        .par_iter()
        .map(|&j| {
            let cm = sweep.cross(ds, j);
            let f = Array1::from(cm.f);
            let u = match &chol {
                Some(ch) => ch.solve(f.view()),
                None => Array1::zeros(0),
            };
            let pivot = cm.e - f.dot(&u);
            if !(pivot > F::lit(COLLINEAR_PIVOT) * cm.e) {
                let rel = if cm.e > F::zero() { (pivot / cm.e).as_f64() } else { 0.0 };
                return (F::zero(), Some(CollinearCandidate { feature: j, relative_pivot: rel }));
            }
            let coef = (cm.d - f.dot(&beta_sel)) / pivot;
            let score = match kind {
                RecruitScore::Coef => coef.abs(),
                RecruitScore::LossDrop => pivot * coef * coef,
                RecruitScore::ZStat => {
                    let g = Array1::from(cm.g);
                    let quad = cm.b - F::lit(2.0) * g.dot(&u) + u.dot(&bsel.dot(&u));
                    let var = quad / (pivot * pivot * nf);
                    if var > F::zero() {
                        coef.abs() / var.sqrt()
                    } else {
                        return (F::zero(), Some(CollinearCandidate { feature: j, relative_pivot: 0.0 }));
                    }
                }
            };
            (score, None)
        })
        .collect();
    let mut scores = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (s, diag) in results {
        scores.push(s);
        if let Some(d) = diag {
            log::debug!("candidate {} skipped: collinear with selected set", d.feature);
            skipped.push(d);
        }
    }
    Ok(RecruitScores { scores, skipped })
}
