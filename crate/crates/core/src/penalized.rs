//! Penalized minimization of the additive-hazards loss
//! `L(β) = βᵀDβ − 2βᵀd + Σ_j v_j(λ)|β_j|` by cyclic coordinate descent.
//!
//! Because the linear term carries a factor 2, the coordinate update
//! soft-thresholds at `v_j / 2`:
//! `β_j ← soft(d_j − Σ_{k≠j} D_jk β_k, v_j/2) / D_jj`.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::linying::{build_subset, LinYingFit, SubsetModel};
use crate::scalar::Scalar;
use crate::survival_data::SurvivalDataset;

pub const DEFAULT_SCAD_A: f64 = 3.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    Lasso,
    AdaptiveLasso,
    /// One-step SCAD: weighted L1 with weights `w_λ(D̄ |β̂_j|)`.
    OsScad,
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "lasso" => Ok(PenaltyKind::Lasso),
            "adaptive-lasso" | "adaptive" => Ok(PenaltyKind::AdaptiveLasso),
            "os-scad" | "scad" => Ok(PenaltyKind::OsScad),
            other => Err(Error::InvalidArgument(format!("unknown penalty {other:?}"))),
        }
    }
}

/// Penalty definition for one subset fit.
#[derive(Debug, Clone)]
pub struct PenaltySpec<F> {
    pub kind: PenaltyKind,
    /// SCAD shape parameter, must exceed 2.
    pub a: F,
    /// Per-feature multipliers on the penalty: 0 leaves a feature unpenalized,
    /// `+∞` freezes it at zero.
    pub weights: Option<Vec<F>>,
    /// Pilot estimate for adaptive and one-step SCAD weights. Defaults to the
    /// unpenalized solution on the subset.
    pub pilot: Option<Array1<F>>,
    /// Scale `D̄ = n⁻¹ tr(D)` applied to the pilot inside the SCAD weight.
    /// Defaults to the trace over the subset; pass the all-feature value
    /// (see [`FastSummary::diag_scale`](crate::fast_stat::FastSummary::diag_scale))
    /// when the full data are at hand.
    pub diag_scale: Option<F>,
}

impl<F: Scalar> PenaltySpec<F> {
    pub fn new(kind: PenaltyKind) -> Self {
        Self { kind, a: F::lit(DEFAULT_SCAD_A), weights: None, pilot: None, diag_scale: None }
    }

    pub fn lasso() -> Self {
        Self::new(PenaltyKind::Lasso)
    }

    pub fn os_scad() -> Self {
        Self::new(PenaltyKind::OsScad)
    }

    pub fn with_a(mut self, a: F) -> Self {
        self.a = a;
        self
    }

    pub fn with_weights(mut self, w: Vec<F>) -> Self {
        self.weights = Some(w);
        self
    }

    pub fn with_pilot(mut self, pilot: Array1<F>) -> Self {
        self.pilot = Some(pilot);
        self
    }

    pub fn with_diag_scale(mut self, dbar: F) -> Self {
        self.diag_scale = Some(dbar);
        self
    }

    fn needs_pilot(&self) -> bool {
        self.kind != PenaltyKind::Lasso
    }

    fn validate(&self, m: usize) -> Result<()> {
        if !(self.a > F::lit(2.0)) {
            return Err(Error::Domain(format!("SCAD shape a must exceed 2, got {}", self.a)));
        }
        if let Some(w) = &self.weights {
            if w.len() != m {
                return Err(Error::InvalidArgument(format!("{} penalty weights for {} features", w.len(), m)));
            }
            if w.iter().any(|v| v.is_nan() || *v < F::zero()) {
                return Err(Error::Domain("penalty weights must be nonnegative".into()));
            }
        }
        if let Some(p) = &self.pilot {
            if p.len() != m {
                return Err(Error::InvalidArgument(format!("pilot of length {} for {} features", p.len(), m)));
            }
        }
        Ok(())
    }

    /// Fills in the pilot (unpenalized solve) and `D̄` when they are needed
    /// and missing.
    pub fn resolved(&self, sm: &SubsetModel<F>) -> Result<Self> {
        self.validate(sm.m())?;
        let mut out = self.clone();
        if out.needs_pilot() && out.pilot.is_none() {
            out.pilot = Some(sm.solve()?.beta);
        }
        if out.diag_scale.is_none() {
            out.diag_scale = Some(sm.dmat.diag().sum() / F::from_count(sm.n));
        }
        Ok(out)
    }

    /// Effective L1 weights `v_j(λ)`. Requires a resolved spec for the
    /// pilot-based penalties.
    pub fn penalty_weights(&self, lambda: F, m: usize) -> Vec<F> {
        (0..m)
            .map(|j| {
                let mult = self.weights.as_ref().map_or(F::one(), |w| w[j]);
                if mult.is_infinite() {
                    return F::infinity();
                }
                if mult == F::zero() {
                    return F::zero();
                }
                let base = match self.kind {
                    PenaltyKind::Lasso => lambda,
                    PenaltyKind::AdaptiveLasso => {
                        let b = self.pilot_abs(j);
                        if b > F::zero() {
                            lambda / b
                        } else {
                            F::infinity()
                        }
                    }
                    PenaltyKind::OsScad => scad_weight_unchecked(self.scad_argument(j), lambda, self.a),
                };
                mult * base
            })
            .collect()
    }

    fn pilot_abs(&self, j: usize) -> F {
        self.pilot.as_ref().expect("penalty spec resolved with a pilot")[j].abs()
    }

    fn scad_argument(&self, j: usize) -> F {
        self.diag_scale.unwrap_or(F::one()) * self.pilot_abs(j)
    }

    /// Smallest λ at which feature `j` with residual correlation `r` stays at 0.
    fn zero_threshold(&self, j: usize, r: F) -> F {
        let mult = self.weights.as_ref().map_or(F::one(), |w| w[j]);
        if mult.is_infinite() || mult == F::zero() {
            return F::zero();
        }
        let target = F::lit(2.0) * r.abs() / mult;
        match self.kind {
            PenaltyKind::Lasso => target,
            PenaltyKind::AdaptiveLasso => target * self.pilot_abs(j),
            PenaltyKind::OsScad => {
                let x = self.scad_argument(j);
                if target <= x {
                    ((self.a - F::one()) * target + x) / self.a
                } else {
                    target
                }
            }
        }
    }
}

/// SCAD derivative weight: `λ` for `x ≤ λ`, `(aλ − x)₊ / (a − 1)` above.
pub fn scad_weight<F: Scalar>(x: F, lambda: F, a: F) -> Result<F> {
    if !(a > F::lit(2.0)) {
        return Err(Error::Domain(format!("SCAD shape a must exceed 2, got {a}")));
    }
    if !(x >= F::zero()) || !(lambda > F::zero()) {
        return Err(Error::Domain(format!("scad_weight needs x >= 0 and lambda > 0 (x = {x}, lambda = {lambda})")));
    }
    Ok(scad_weight_unchecked(x, lambda, a))
}

fn scad_weight_unchecked<F: Scalar>(x: F, lambda: F, a: F) -> F {
    if x <= lambda {
        lambda
    } else {
        (a * lambda - x).max(F::zero()) / (a - F::one())
    }
}

fn soft_threshold<F: Scalar>(z: F, gamma: F) -> F {
    if gamma.is_infinite() {
        return F::zero();
    }
    let mag = z.abs() - gamma;
    if mag > F::zero() {
        mag.copysign(z)
    } else {
        F::zero()
    }
}

/// Coordinate descent controls and λ grid.
#[derive(Debug, Clone)]
pub struct PathOptions<F> {
    /// Explicit descending grid. When absent an automatic grid is built.
    pub lambdas: Option<Vec<F>>,
    pub n_lambda: usize,
    pub lambda_min_ratio: F,
    pub max_iter: usize,
    pub tol: F,
}

impl<F: Scalar> Default for PathOptions<F> {
    fn default() -> Self {
        Self { lambdas: None, n_lambda: 100, lambda_min_ratio: F::lit(1e-3), max_iter: 10_000, tol: F::lit(1e-7) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PenalizedFit<F> {
    pub lambda: F,
    pub beta: Array1<F>,
    /// Positions (within the subset) of nonzero coefficients.
    pub active: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Loss `βᵀDβ − 2βᵀd` without the penalty.
    pub loss: F,
    pub pbic: Option<F>,
    pub cv_loss: Option<F>,
}

impl<F: Scalar> PenalizedFit<F> {
    pub fn df(&self) -> usize {
        self.active.len()
    }
}

/// Penalized objective `L(β) + Σ v_j |β_j|` (frozen features contribute 0).
pub fn objective<F: Scalar>(sm: &SubsetModel<F>, beta: &Array1<F>, v: &[F]) -> F {
    let pen = beta.iter().zip(v).filter(|(b, _)| **b != F::zero()).fold(F::zero(), |acc, (b, w)| acc + *w * b.abs());
    sm.loss(beta) + pen
}

/// Largest violation of the optimality conditions for weights `v`, scaled
/// per coordinate: active `|g_j + v_j sign β_j| / (1 + |d_j|)`, inactive
/// `(|g_j| − v_j)₊`, with `g = 2(Dβ − d)`.
pub fn kkt_violation<F: Scalar>(sm: &SubsetModel<F>, beta: &Array1<F>, v: &[F]) -> F {
    let grad = (sm.dmat.dot(beta) - &sm.d).mapv(|g| g * F::lit(2.0));
    let mut worst = F::zero();
    for j in 0..sm.m() {
        let viol = if beta[j] != F::zero() {
            (grad[j] + v[j] * beta[j].signum()).abs() / (F::one() + sm.d[j].abs())
        } else if v[j].is_infinite() {
            F::zero()
        } else {
            (grad[j].abs() - v[j]).max(F::zero())
        };
        worst = worst.max(viol);
    }
    worst
}

/// Smallest λ whose solution has every penalized coefficient at zero.
pub fn lambda_max<F: Scalar>(sm: &SubsetModel<F>, spec: &PenaltySpec<F>) -> Result<F> {
    let spec = spec.resolved(sm)?;
    let m = sm.m();
    let free: Vec<usize> = (0..m).filter(|&j| spec.weights.as_ref().is_some_and(|w| w[j] == F::zero())).collect();
    let mut beta_free = Array1::<F>::zeros(m);
    if !free.is_empty() {
        let sub = sm.dmat.select(ndarray::Axis(0), &free).select(ndarray::Axis(1), &free);
        let rhs = Array1::from_iter(free.iter().map(|&j| sm.d[j]));
        let sol = Cholesky::factor(sub.view())?.solve(rhs.view());
        for (k, &j) in free.iter().enumerate() {
            beta_free[j] = sol[k];
        }
    }
    let resid = &sm.d - &sm.dmat.dot(&beta_free);
    let lmax = (0..m).map(|j| spec.zero_threshold(j, resid[j])).fold(F::zero(), F::max);
    Ok(lmax * (F::one() + F::lit(8.0) * F::epsilon()))
}

fn auto_grid<F: Scalar>(lmax: F, opts: &PathOptions<F>) -> Vec<F> {
    let lmax = if lmax > F::zero() { lmax } else { F::epsilon() };
    let k = opts.n_lambda.max(1);
    if k == 1 {
        return vec![lmax];
    }
    let log_hi = lmax.ln();
    let log_lo = (lmax * opts.lambda_min_ratio).ln();
    (0..k)
        .map(|i| {
            let t = F::from_count(i) / F::from_count(k - 1);
            (log_hi + (log_lo - log_hi) * t).exp()
        })
        .collect()
}

/// The λ grid a path fit will use.
pub fn lambda_grid<F: Scalar>(sm: &SubsetModel<F>, spec: &PenaltySpec<F>, opts: &PathOptions<F>) -> Result<Vec<F>> {
    match &opts.lambdas {
        Some(l) => {
            if l.windows(2).any(|w| w[1] > w[0]) || l.iter().any(|v| !(*v >= F::zero())) {
                return Err(Error::InvalidArgument("lambda grid must be nonnegative and descending".into()));
            }
            Ok(l.clone())
        }
        None => Ok(auto_grid(lambda_max(sm, spec)?, opts)),
    }
}

fn coordinate_descent<F: Scalar>(
    sm: &SubsetModel<F>,
    v: &[F],
    beta: &mut Array1<F>,
    opts: &PathOptions<F>,
) -> (usize, bool) {
    let m = sm.m();
    let mut fitted = sm.dmat.dot(&*beta);
    #[cfg(debug_assertions)]
    let mut last_obj = objective(sm, beta, v);
    for cycle in 1..=opts.max_iter {
        let mut max_change = F::zero();
        for j in 0..m {
            let djj = sm.dmat[[j, j]];
            let old = beta[j];
            let new = if djj > F::zero() {
                let partial = sm.d[j] - fitted[j] + djj * old;
                soft_threshold(partial, v[j] * F::lit(0.5)) / djj
            } else {
                F::zero()
            };
            if new != old {
                let diff = new - old;
                fitted.scaled_add(diff, &sm.dmat.column(j));
                beta[j] = new;
                max_change = max_change.max(diff.abs());
            }
        }
        #[cfg(debug_assertions)]
        {
            let obj = objective(sm, beta, v);
            debug_assert!(
                obj <= last_obj + F::lit(1e-9).max(F::epsilon() * F::lit(100.0)) * (F::one() + last_obj.abs()),
                "coordinate cycle increased the objective: {last_obj} -> {obj}"
            );
            last_obj = obj;
        }
        let bmax = beta.iter().fold(F::zero(), |a, b| a.max(b.abs()));
        if max_change <= opts.tol * (F::one() + bmax) {
            return (cycle, true);
        }
    }
    (opts.max_iter, false)
}

/// Replaces a converged descent iterate by the exact stationary point on its
/// active set and sign pattern, when that point keeps the signs, satisfies the
/// inactive conditions and does not raise the objective.
fn polish_active_set<F: Scalar>(sm: &SubsetModel<F>, v: &[F], beta: &mut Array1<F>) {
    let active: Vec<usize> = (0..sm.m()).filter(|&j| beta[j] != F::zero()).collect();
    if active.is_empty() {
        return;
    }
    let sub = sm.dmat.select(ndarray::Axis(0), &active).select(ndarray::Axis(1), &active);
    let Ok(chol) = Cholesky::factor(sub.view()) else { return };
    let rhs = Array1::from_iter(active.iter().map(|&j| sm.d[j] - v[j] * F::lit(0.5) * beta[j].signum()));
    let sol = chol.solve(rhs.view());
    if active.iter().zip(sol.iter()).any(|(&j, &b)| b == F::zero() || b.signum() != beta[j].signum()) {
        return;
    }
    let mut cand = Array1::<F>::zeros(sm.m());
    for (&j, &b) in active.iter().zip(sol.iter()) {
        cand[j] = b;
    }
    let grad = sm.dmat.dot(&cand) - &sm.d;
    let slack = F::one() + F::epsilon().sqrt();
    for j in 0..sm.m() {
        if cand[j] == F::zero() && !v[j].is_infinite() && F::lit(2.0) * grad[j].abs() > v[j] * slack {
            return;
        }
    }
    let (old, new) = (objective(sm, beta, v), objective(sm, &cand, v));
    if new <= old + F::epsilon() * F::lit(16.0) * (F::one() + old.abs()) {
        *beta = cand;
    }
}

/// Fits one λ starting from `warm` (or zero).
pub fn fit_lambda<F: Scalar>(
    sm: &SubsetModel<F>,
    spec: &PenaltySpec<F>,
    lambda: F,
    warm: Option<&Array1<F>>,
    opts: &PathOptions<F>,
) -> Result<PenalizedFit<F>> {
    let spec = spec.resolved(sm)?;
    Ok(fit_resolved(sm, &spec, lambda, warm, opts))
}

fn fit_resolved<F: Scalar>(
    sm: &SubsetModel<F>,
    spec: &PenaltySpec<F>,
    lambda: F,
    warm: Option<&Array1<F>>,
    opts: &PathOptions<F>,
) -> PenalizedFit<F> {
    let m = sm.m();
    let v = spec.penalty_weights(lambda, m);
    let mut beta = warm.cloned().unwrap_or_else(|| Array1::zeros(m));
    for j in 0..m {
        if v[j].is_infinite() {
            beta[j] = F::zero();
        }
    }
    let (iterations, converged) = coordinate_descent(sm, &v, &mut beta, opts);
    if !converged {
        log::warn!("coordinate descent hit {} cycles at lambda {}", opts.max_iter, lambda);
    } else {
        polish_active_set(sm, &v, &mut beta);
    }
    let active = (0..m).filter(|&j| beta[j] != F::zero()).collect();
    let loss = sm.loss(&beta);
    PenalizedFit { lambda, beta, active, iterations, converged, loss, pbic: None, cv_loss: None }
}

/// Fits the whole λ path with warm starts, from the largest λ down.
pub fn fit_path<F: Scalar>(
    sm: &SubsetModel<F>,
    spec: &PenaltySpec<F>,
    opts: &PathOptions<F>,
) -> Result<Vec<PenalizedFit<F>>> {
    let spec = spec.resolved(sm)?;
    let grid = lambda_grid(sm, &spec, opts)?;
    let mut fits: Vec<PenalizedFit<F>> = Vec::with_capacity(grid.len());
    for &lambda in &grid {
        let warm = fits.last().map(|f| f.beta.clone());
        fits.push(fit_resolved(sm, &spec, lambda, warm.as_ref(), opts));
    }
    Ok(fits)
}

/// Scale `κ = dᵀB⁻¹d / dᵀD⁻¹d` and whether it fell back to 1 because `B`
/// could not be inverted.
pub fn pbic_kappa<F: Scalar>(sm: &SubsetModel<F>) -> Result<(F, bool)> {
    let dchol = Cholesky::factor(sm.dmat.view())?;
    let denom = sm.d.dot(&dchol.solve(sm.d.view()));
    match Cholesky::factor(sm.bmat.view()) {
        Ok(bchol) if denom > F::zero() => Ok((sm.d.dot(&bchol.solve(sm.d.view())) / denom, false)),
        _ => {
            log::warn!("B is singular on subset {:?}; PBIC scale falls back to 1", sm.subset);
            Ok((F::one(), true))
        }
    }
}

/// `κ {L(β_λ) − L(β̂)} + df_λ log(n) / n`
pub fn pbic<F: Scalar>(sm: &SubsetModel<F>, unpenalized: &LinYingFit<F>, kappa: F, fit: &PenalizedFit<F>) -> F {
    let nf = F::from_count(sm.n);
    kappa * (fit.loss - unpenalized.loss) + F::from_count(fit.df()) * nf.ln() / nf
}

#[derive(Debug, Clone, Serialize)]
pub struct PbicSelection<F> {
    pub index: usize,
    pub lambda: F,
    pub kappa: F,
    pub kappa_fallback: bool,
}

/// Scores every fit on the path and returns the PBIC minimizer (the largest
/// λ among exact ties).
pub fn select_by_pbic<F: Scalar>(sm: &SubsetModel<F>, fits: &mut [PenalizedFit<F>]) -> Result<PbicSelection<F>> {
    if fits.is_empty() {
        return Err(Error::InvalidArgument("empty path".into()));
    }
    let unpen = sm.solve()?;
    let (kappa, kappa_fallback) = pbic_kappa(sm)?;
    let scores: Vec<F> = fits
        .iter_mut()
        .map(|fit| {
            let score = pbic(sm, &unpen, kappa, fit);
            fit.pbic = Some(score);
            score
        })
        .collect();
    let best = argmin_first(&scores);
    Ok(PbicSelection { index: best, lambda: fits[best].lambda, kappa, kappa_fallback })
}

fn argmin_first<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Serialize)]
pub struct CvResult<F> {
    pub lambda_hat: F,
    pub index: usize,
    pub lambdas: Vec<F>,
    /// Summed held-out loss per λ.
    pub cv_loss: Vec<F>,
    /// Fold membership actually used (subject indices).
    pub folds: Vec<Vec<usize>>,
    pub seed_used: u64,
}

/// Maximum number of re-draws when a fold has no events.
pub const MAX_FOLD_ATTEMPTS: usize = 10;

/// Seeded partition of `0..n` into `k` folds of near-equal size, each with
/// at least one event.
pub fn make_folds(events: &[bool], k: usize, seed: u64) -> Result<(Vec<Vec<usize>>, u64)> {
    let n = events.len();
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("need 2 <= folds <= n, got {k} folds for n = {n}")));
    }
    for attempt in 0..MAX_FOLD_ATTEMPTS {
        let s = seed.wrapping_add(attempt as u64);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
        let mut folds = vec![Vec::new(); k];
        for (pos, &i) in perm.iter().enumerate() {
            folds[pos % k].push(i);
        }
        if folds.iter().all(|f| f.iter().any(|&i| events[i])) {
            for f in &mut folds {
                f.sort_unstable();
            }
            return Ok((folds, s));
        }
    }
    Err(Error::FoldsWithoutEvents { attempts: MAX_FOLD_ATTEMPTS })
}

/// K-fold cross-validation of λ on the held-out additive-hazards loss.
///
/// The grid comes from the full-data subset model; each fold refits the
/// path (and the pilot, unless one is supplied) without its own subjects
/// and is scored with the loss built from its subjects only.
pub fn cv_tune<F: Scalar>(
    ds: &SurvivalDataset<F>,
    subset: &[usize],
    spec: &PenaltySpec<F>,
    folds: usize,
    seed: u64,
    opts: &PathOptions<F>,
) -> Result<CvResult<F>> {
    let full = build_subset(ds, subset)?;
    let resolved = spec.resolved(&full)?;
    let lambdas = lambda_grid(&full, &resolved, opts)?;
    let (fold_sets, seed_used) = make_folds(ds.events(), folds, seed)?;
    let fold_opts = PathOptions { lambdas: Some(lambdas.clone()), ..opts.clone() };
    let per_fold: Vec<Vec<F>> = fold_sets
        .par_iter()
        .map(|test_rows| -> Result<Vec<F>> {
            let mut in_test = vec![false; ds.n()];
            test_rows.iter().for_each(|&i| in_test[i] = true);
            let train_rows: Vec<usize> = (0..ds.n()).filter(|&i| !in_test[i]).collect();
            let train = build_subset(&ds.select_rows(&train_rows)?, subset)?;
            let test = build_subset(&ds.select_rows(test_rows)?, subset)?;
            let mut fold_spec = spec.clone();
            fold_spec.diag_scale = resolved.diag_scale;
            let path = fit_path(&train, &fold_spec, &fold_opts)?;
            Ok(path.iter().map(|f| test.loss(&f.beta)).collect())
        })
        .collect::<Result<_>>()?;
    let mut cv_loss = vec![F::zero(); lambdas.len()];
    for fold in &per_fold {
        for (acc, v) in cv_loss.iter_mut().zip(fold) {
            *acc += *v;
        }
    }
    let index = argmin_first(&cv_loss);
    Ok(CvResult { lambda_hat: lambdas[index], index, lambdas, cv_loss, folds: fold_sets, seed_used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn identity_model(d: Array1<f64>) -> SubsetModel<f64> {
        let m = d.len();
        SubsetModel { subset: (0..m).collect(), n: 100, d, dmat: Array2::eye(m), bmat: Array2::eye(m) }
    }

    #[test]
    fn scad_weight_branches() {
        assert_eq!(scad_weight(0.5, 1.0, 3.7).unwrap(), 1.0);
        assert_eq!(scad_weight(5.0, 1.0, 3.7).unwrap(), 0.0);
        assert!((scad_weight(2.0f64, 1.0, 3.7).unwrap() - 1.7 / 2.7).abs() < 1e-15);
        assert!(matches!(scad_weight(1.0, 1.0, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn identity_gram_lasso_is_soft_threshold() {
        let sm = identity_model(array![1.0, -0.4, 0.1]);
        let fit = fit_lambda(&sm, &PenaltySpec::lasso(), 0.5, None, &PathOptions::default()).unwrap();
        for (b, e) in fit.beta.iter().zip([0.75, -0.15, 0.0]) {
            assert!((b - e).abs() <= 1e-12);
        }
        assert_eq!(fit.active, vec![0, 1]);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let sm = identity_model(array![1.0, -0.4, 0.1]);
        for spec in [PenaltySpec::lasso(), PenaltySpec::os_scad(), PenaltySpec::new(PenaltyKind::AdaptiveLasso)] {
            let lmax = lambda_max(&sm, &spec).unwrap();
            let fit = fit_lambda(&sm, &spec, lmax, None, &PathOptions::default()).unwrap();
            assert!(fit.active.is_empty(), "{:?} at {}", spec.kind, lmax);
            let below = fit_lambda(&sm, &spec, lmax * 0.99, None, &PathOptions::default()).unwrap();
            assert!(!below.active.is_empty());
        }
    }

    #[test]
    fn frozen_and_free_weights() {
        let sm = identity_model(array![1.0, -0.4, 0.1]);
        let spec = PenaltySpec::lasso().with_weights(vec![f64::INFINITY, 0.0, 1.0]);
        let fit = fit_lambda(&sm, &spec, 10.0, None, &PathOptions::default()).unwrap();
        assert_eq!(fit.beta, array![0.0, -0.4, 0.0]);
    }

    #[test]
    fn fully_penalized_pbic() {
        let sm: SubsetModel<f64> =
            SubsetModel { subset: vec![0], n: 50, d: array![0.3], dmat: array![[2.0]], bmat: array![[0.5]] };
        let (kappa, fallback) = pbic_kappa(&sm).unwrap();
        assert!(!fallback);
        assert!((kappa - 2.0 / 0.5).abs() < 1e-12);
        let unpen = sm.solve().unwrap();
        let zero = PenalizedFit {
            lambda: 1.0,
            beta: array![0.0],
            active: vec![],
            iterations: 0,
            converged: true,
            loss: 0.0,
            pbic: None,
            cv_loss: None,
        };
        assert!((pbic(&sm, &unpen, kappa, &zero) + kappa * unpen.loss).abs() < 1e-15);
    }

    #[test]
    fn singular_b_falls_back() {
        let sm = SubsetModel {
            subset: vec![0, 1],
            n: 50,
            d: array![0.3, 0.1],
            dmat: array![[2.0, 0.1], [0.1, 1.0]],
            bmat: array![[1.0, 1.0], [1.0, 1.0]],
        };
        assert_eq!(pbic_kappa(&sm).unwrap(), (1.0, true));
    }

    #[test]
    fn folds_are_seeded_and_balanced() {
        let events = vec![true; 23];
        let (a, _) = make_folds(&events, 5, 11).unwrap();
        let (b, _) = make_folds(&events, 5, 11).unwrap();
        assert_eq!(a, b);
        let sizes: Vec<usize> = a.iter().map(Vec::len).collect();
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        assert_eq!(sizes.iter().sum::<usize>(), 23);
    }

    #[test]
    fn folds_without_events_give_up() {
        let mut events = vec![false; 20];
        events[3] = true;
        assert!(matches!(make_folds(&events, 4, 1), Err(Error::FoldsWithoutEvents { attempts: 10 })));
    }
}
