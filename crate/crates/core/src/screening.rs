//! Marginal screening (SIS) and the iterated recruit/select/re-recruit loop.

use std::collections::BTreeSet;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast_stat::{compute_fast, FastSummary, Variant};
use crate::linying::{build_subset, rerecruit_scores, RecruitScore};
use crate::penalized::{cv_tune, fit_path, select_by_pbic, PathOptions, PenaltySpec, DEFAULT_SCAD_A};
use crate::scalar::Scalar;
use crate::survival_data::SurvivalDataset;

/// Which features survive screening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Keep<F> {
    TopK(usize),
    /// Features with `|score| > γ`.
    Threshold(F),
}

#[derive(Debug, Clone, Serialize)]
pub struct ScreenResult<F> {
    pub variant: Variant,
    pub scores: Array1<F>,
    /// Features by decreasing `|score|`, lower index first on ties.
    pub ranking: Vec<usize>,
    /// Kept features in rank order.
    pub kept: Vec<usize>,
    /// True when a requested top-k exceeded p and was clamped.
    pub clamped: bool,
}

/// `⌊n / ln n⌋`, the customary screening size.
pub fn default_keep(n: usize) -> usize {
    if n < 3 {
        return 1;
    }
    ((n as f64) / (n as f64).ln()).floor() as usize
}

/// Indices sorted by decreasing magnitude; ties go to the lower index.
pub fn rank_by_magnitude<F: Scalar>(scores: &[F]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (scores[a].abs(), scores[b].abs());
        y.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    idx
}

/// Ranks precomputed scores and applies the keep rule.
pub fn screen_scores<F: Scalar>(variant: Variant, scores: Array1<F>, keep: Keep<F>) -> Result<ScreenResult<F>> {
    let p = scores.len();
    let ranking = rank_by_magnitude(scores.as_slice().expect("contiguous scores"));
    let (kept, clamped) = match keep {
        Keep::TopK(k) => {
            if k > p {
                log::warn!("requested top {k} of only {p} features; keeping all");
            }
            (ranking[..k.min(p)].to_vec(), k > p)
        }
        Keep::Threshold(gamma) => {
            if !(gamma > F::zero()) {
                return Err(Error::InvalidArgument(format!("threshold must be positive, got {gamma}")));
            }
            (ranking.iter().copied().take_while(|&j| scores[j].abs() > gamma).collect(), false)
        }
    };
    Ok(ScreenResult { variant, scores, ranking, kept, clamped })
}

pub fn sis_from_summary<F: Scalar>(fs: &FastSummary<F>, variant: Variant, keep: Keep<F>) -> Result<ScreenResult<F>> {
    screen_scores(variant, fs.scaled(variant)?, keep)
}

/// Computes the marginal statistics and screens with the chosen scaling.
pub fn sis<F: Scalar>(ds: &SurvivalDataset<F>, variant: Variant, keep: Keep<F>) -> Result<ScreenResult<F>> {
    sis_from_summary(&compute_fast(ds), variant, keep)
}

/// Length of the shortest ranking prefix that contains every feature in
/// `truth`. Works for any ranking, including ones computed elsewhere.
pub fn minimum_model_size(ranking: &[usize], truth: &[usize]) -> Result<usize> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("truth set is empty".into()));
    }
    let mut position = vec![usize::MAX; ranking.len()];
    for (pos, &j) in ranking.iter().enumerate() {
        if j >= ranking.len() {
            return Err(Error::IndexOutOfRange { index: j, p: ranking.len() });
        }
        position[j] = pos;
    }
    truth
        .iter()
        .map(|&j| match position.get(j) {
            Some(&pos) if pos != usize::MAX => Ok(pos + 1),
            _ => Err(Error::IndexOutOfRange { index: j, p: ranking.len() }),
        })
        .try_fold(0, |acc, r| r.map(|v| acc.max(v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsisVariant {
    /// Recruit by `|d_j / D_jj|`, re-recruit by adjusted coefficients.
    LyCoef,
    /// Recruit by `|d_j| / sqrt(B_jj)`, re-recruit by adjusted Wald statistics.
    ZStat,
    /// Recruit by `d_j² / D_jj`, re-recruit by loss decrease.
    LossDrop,
}

impl IsisVariant {
    fn recruit_kind(self) -> RecruitScore {
        match self {
            IsisVariant::LyCoef => RecruitScore::Coef,
            IsisVariant::ZStat => RecruitScore::ZStat,
            IsisVariant::LossDrop => RecruitScore::LossDrop,
        }
    }

    fn initial_scores<F: Scalar>(self, fs: &FastSummary<F>) -> Result<Array1<F>> {
        match self {
            IsisVariant::LyCoef => fs.scaled(Variant::Ly),
            IsisVariant::ZStat => fs.scaled(Variant::Z),
            IsisVariant::LossDrop => Ok(fs.scaled(Variant::Loss)?.mapv(|v| v * v)),
        }
    }
}

impl std::str::FromStr for IsisVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ly" | "ly-coef" | "coef" => Ok(IsisVariant::LyCoef),
            "z" | "zstat" => Ok(IsisVariant::ZStat),
            "loss" | "loss-drop" => Ok(IsisVariant::LossDrop),
            other => Err(Error::InvalidArgument(format!("unknown ISIS variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tuner {
    Pbic,
    Cv { folds: usize, seed: u64 },
}

/// Number of new candidates taken at each re-recruitment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecruitCount {
    /// `d − |B_r|`: the next recruited set has exactly `d` features.
    FillToD,
    /// `d − |A_r|`, counting the previous recruited set.
    MinusRecruited,
}

/// Features eligible for re-recruitment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecruitPool {
    /// Only features never recruited in the current round (`M ∖ A_r`).
    OutsideRecruited,
    /// Every feature not currently selected (`M ∖ B_r`).
    OutsideSelected,
}

#[derive(Debug, Clone)]
pub struct IsisOptions<F> {
    pub variant: IsisVariant,
    /// Target recruited-set size.
    pub d: usize,
    pub r_max: usize,
    pub tuner: Tuner,
    pub scad_a: F,
    pub recruit_count: RecruitCount,
    pub recruit_pool: RecruitPool,
    pub path: PathOptions<F>,
}

impl<F: Scalar> IsisOptions<F> {
    pub fn new(variant: IsisVariant, d: usize) -> Self {
        Self {
            variant,
            d,
            r_max: 5,
            tuner: Tuner::Pbic,
            scad_a: F::lit(DEFAULT_SCAD_A),
            recruit_count: RecruitCount::FillToD,
            recruit_pool: RecruitPool::OutsideRecruited,
            path: PathOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IsisIteration<F> {
    pub r: usize,
    /// `A_r`, sorted.
    pub recruited: Vec<usize>,
    /// `B_r`, sorted.
    pub selected: Vec<usize>,
    /// Penalized coefficients on `selected`.
    pub beta: Vec<F>,
    pub lambda: F,
    /// Features recruited after this iteration with their adjusted scores.
    pub new_candidates: Vec<(usize, F)>,
    /// Candidates skipped as collinear with `selected`.
    pub collinear: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Stabilized,
    MaxIter,
    /// The selection step failed to converge; the trace stops at the last
    /// completed iteration.
    NonConvergence,
    /// The recruited set produced a singular system.
    Singular,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsisTrace<F> {
    pub variant: IsisVariant,
    pub d: usize,
    pub k0: usize,
    pub iterations: Vec<IsisIteration<F>>,
    pub final_set: Vec<usize>,
    pub final_beta: Vec<F>,
    pub termination: Termination,
}

/// Iterated screening: recruit the top `⌊2d/3⌋` features, select among them
/// with one-step SCAD, then re-score the remaining features adjusted for the
/// selection and refill; repeat until the selection repeats or `r_max`.
pub fn isis<F: Scalar>(ds: &SurvivalDataset<F>, opts: &IsisOptions<F>) -> Result<IsisTrace<F>> {
    let fs = compute_fast(ds);
    isis_with_summary(ds, &fs, opts)
}

pub fn isis_with_summary<F: Scalar>(
    ds: &SurvivalDataset<F>,
    fs: &FastSummary<F>,
    opts: &IsisOptions<F>,
) -> Result<IsisTrace<F>> {
    let p = ds.p();
    if opts.d == 0 || opts.d > ds.n() {
        return Err(Error::InvalidArgument(format!("need 1 <= d <= n, got d = {} for n = {}", opts.d, ds.n())));
    }
    if opts.r_max == 0 {
        return Err(Error::InvalidArgument("r_max must be at least 1".into()));
    }
    let d = opts.d.min(p);
    let k0 = ((2 * d) / 3).max(1);
    let dbar = fs.diag_scale();
    let initial = opts.variant.initial_scores(fs)?;
    let ranking = rank_by_magnitude(initial.as_slice().expect("contiguous"));
    let mut recruited: Vec<usize> = ranking[..k0].to_vec();
    recruited.sort_unstable();

    let mut iterations: Vec<IsisIteration<F>> = Vec::new();
    let mut termination = Termination::MaxIter;
    for r in 1..=opts.r_max {
        let sm = build_subset(ds, &recruited)?;
        let unpen = match sm.solve() {
            Ok(f) => f,
            Err(Error::Singular { .. }) => {
                termination = Termination::Singular;
                break;
            }
            Err(e) => return Err(e),
        };
        let spec = PenaltySpec::os_scad().with_a(opts.scad_a).with_pilot(unpen.beta.clone()).with_diag_scale(dbar);
        let (lambda, beta) = match opts.tuner {
            Tuner::Pbic => {
                let mut path = fit_path(&sm, &spec, &opts.path)?;
                let sel = select_by_pbic(&sm, &mut path)?;
                let fit = &path[sel.index];
                if !fit.converged {
                    termination = Termination::NonConvergence;
                    break;
                }
                (fit.lambda, fit.beta.clone())
            }
            Tuner::Cv { folds, seed } => {
                let cv_spec = PenaltySpec::os_scad().with_a(opts.scad_a).with_diag_scale(dbar);
                let cv = cv_tune(ds, &recruited, &cv_spec, folds, seed, &opts.path)?;
                let grid_opts = PathOptions { lambdas: Some(cv.lambdas.clone()), ..opts.path.clone() };
                let path = fit_path(&sm, &spec, &grid_opts)?;
                let fit = &path[cv.index];
                if !fit.converged {
                    termination = Termination::NonConvergence;
                    break;
                }
                (fit.lambda, fit.beta.clone())
            }
        };
        let selected: Vec<usize> =
            recruited.iter().zip(beta.iter()).filter(|(_, b)| **b != F::zero()).map(|(&j, _)| j).collect();
        let sel_beta: Vec<F> = beta.iter().copied().filter(|b| *b != F::zero()).collect();
        let mut iter = IsisIteration {
            r,
            recruited: recruited.clone(),
            selected: selected.clone(),
            beta: sel_beta,
            lambda,
            new_candidates: Vec::new(),
            collinear: Vec::new(),
        };
        let repeated = iterations.last().is_some_and(|prev| prev.selected == selected);
        if repeated {
            iterations.push(iter);
            termination = Termination::Stabilized;
            break;
        }
        if r == opts.r_max {
            iterations.push(iter);
            termination = Termination::MaxIter;
            break;
        }

        let excluded: BTreeSet<usize> = match opts.recruit_pool {
            RecruitPool::OutsideRecruited => recruited.iter().copied().collect(),
            RecruitPool::OutsideSelected => selected.iter().copied().collect(),
        };
        let pool: Vec<usize> = (0..p).filter(|j| !excluded.contains(j)).collect();
        let k_r = match opts.recruit_count {
            RecruitCount::FillToD => d.saturating_sub(selected.len()),
            RecruitCount::MinusRecruited => d.saturating_sub(recruited.len()),
        };
        let scored = match rerecruit_scores(ds, &selected, &pool, opts.variant.recruit_kind()) {
            Ok(s) => s,
            Err(Error::Singular { .. }) => {
                iterations.push(iter);
                termination = Termination::Singular;
                break;
            }
            Err(e) => return Err(e),
        };
        let order = rank_by_magnitude(&scored.scores);
        let new: Vec<(usize, F)> = order
            .iter()
            .filter(|&&k| scored.scores[k] > F::zero())
            .take(k_r)
            .map(|&k| (pool[k], scored.scores[k]))
            .collect();
        iter.collinear = scored.skipped.iter().map(|c| c.feature).collect();
        iter.new_candidates = new.clone();
        iterations.push(iter);
        let mut next: Vec<usize> = selected.iter().copied().chain(new.iter().map(|&(j, _)| j)).collect();
        next.sort_unstable();
        next.dedup();
        if next.is_empty() {
            termination = Termination::Stabilized;
            break;
        }
        recruited = next;
    }
    let (final_set, final_beta) =
        iterations.last().map(|it| (it.selected.clone(), it.beta.clone())).unwrap_or_default();
    Ok(IsisTrace { variant: opts.variant, d, k0, iterations, final_set, final_beta, termination })
}
