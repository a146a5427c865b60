//! Right-censored survival data: validation, standardization and risk-set
//! indexing shared by every estimator in the crate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

mod io;

pub use io::{load_dataset, write_binary, write_csv, DataFormat, BINARY_MAGIC};

/// A block of subjects sharing one observed time, in sorted-position space.
///
/// Positions `start..deaths_end` are the deaths at `time`, positions
/// `deaths_end..end` the censorings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGroup<F> {
    pub time: F,
    pub start: usize,
    pub deaths_end: usize,
    pub end: usize,
}

impl<F> TimeGroup<F> {
    pub fn n_deaths(&self) -> usize {
        self.deaths_end - self.start
    }
}

/// One step of the ascending risk-set sweep.
#[derive(Debug, Clone, Copy)]
pub struct RiskStep<'a, F> {
    pub time: F,
    /// Length of the interval since the previous observed time (or since 0).
    pub interval: F,
    /// Number of subjects with observed time `>= time`.
    pub at_risk: usize,
    /// Subjects (original indices) dying at `time`.
    pub deaths: &'a [usize],
    /// Subjects (original indices) whose observed time is `time`; they leave
    /// the risk set after this step.
    pub leaving: &'a [usize],
}

/// Validated right-censored dataset with standardized features.
///
/// Immutable after construction. Features are stored n×p in column-major
/// order so per-feature sweeps read contiguous memory.
#[derive(Debug, Clone)]
pub struct SurvivalDataset<F> {
    times: Vec<F>,
    events: Vec<bool>,
    features: Array2<F>,
    names: Vec<String>,
    order: Vec<usize>,
    groups: Vec<TimeGroup<F>>,
    tau: F,
    means: Option<Array1<F>>,
    scales: Option<Array1<F>>,
}

/// Builder for [`SurvivalDataset`]; see [`SurvivalDataset::builder`].
#[derive(Debug, Clone)]
pub struct DatasetBuilder<F> {
    times: Vec<F>,
    events: Vec<bool>,
    features: Array2<F>,
    names: Option<Vec<String>>,
    tau: Option<F>,
    standardize: bool,
}

impl<F: Scalar> DatasetBuilder<F> {
    /// Observation horizon. Subjects observed beyond it are censored at `tau`.
    pub fn tau(mut self, tau: F) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn names(mut self, names: Vec<String>) -> Self {
        self.names = Some(names);
        self
    }

    /// Skip column standardization (features are used exactly as given).
    pub fn standardize(mut self, yes: bool) -> Self {
        self.standardize = yes;
        self
    }

    pub fn build(self) -> Result<SurvivalDataset<F>> {
        let n = self.times.len();
        let p = self.features.ncols();
        if n < 2 {
            return Err(Error::Domain(format!("need at least 2 subjects, got {n}")));
        }
        if p < 1 {
            return Err(Error::Domain("need at least one feature column".into()));
        }
        if self.events.len() != n || self.features.nrows() != n {
            return Err(Error::InvalidArgument(format!(
                "length mismatch: {} times, {} events, {} feature rows",
                n,
                self.events.len(),
                self.features.nrows()
            )));
        }
        let names = match self.names {
            Some(names) if names.len() != p => {
                return Err(Error::InvalidArgument(format!("{} feature names for {} columns", names.len(), p)))
            }
            Some(names) => names,
            None => (1..=p).map(|j| format!("f{j}")).collect(),
        };
        if let Some(pos) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite feature value at row {}", pos / p.max(1) + 1)));
        }
        let (features, means, scales) = if self.standardize {
            let (z, m, s) = standardize_named(self.features.view(), &names)?;
            (z, Some(m), Some(s))
        } else {
            (to_column_major(self.features), None, None)
        };
        SurvivalDataset::assemble(self.times, self.events, features, names, self.tau, means, scales)
    }
}

impl<F: Scalar> SurvivalDataset<F> {
    /// Starts a dataset from raw features. Standardization is on by default.
    pub fn builder(times: Vec<F>, events: Vec<bool>, features: Array2<F>) -> DatasetBuilder<F> {
        DatasetBuilder { times, events, features, names: None, tau: None, standardize: true }
    }

    /// Validated, standardized dataset with the default horizon.
    pub fn new(times: Vec<F>, events: Vec<bool>, features: Array2<F>) -> Result<Self> {
        Self::builder(times, events, features).build()
    }

    fn assemble(
        mut times: Vec<F>,
        mut events: Vec<bool>,
        features: Array2<F>,
        names: Vec<String>,
        tau: Option<F>,
        means: Option<Array1<F>>,
        scales: Option<Array1<F>>,
    ) -> Result<Self> {
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Domain(format!("non-finite time for subject {}", i + 1)));
            }
            if t < F::zero() {
                return Err(Error::Domain(format!("negative time {} for subject {}", t, i + 1)));
            }
        }
        let max_time = times.iter().copied().fold(F::zero(), F::max);
        let tau = match tau {
            Some(tau) if !(tau > F::zero()) || !tau.is_finite() => {
                return Err(Error::Domain(format!("tau must be positive and finite, got {tau}")))
            }
            Some(tau) => tau,
            None => max_time,
        };
        if !(tau > F::zero()) {
            return Err(Error::Domain("all observed times are zero".into()));
        }
        for (t, e) in times.iter_mut().zip(events.iter_mut()) {
            if *t > tau {
                *t = tau;
                *e = false;
            }
        }
        if !events.iter().any(|&e| e) {
            return Err(Error::Domain("dataset contains no observed events".into()));
        }
        let order = sort_order(&times, &events);
        let groups = build_groups(&times, &events, &order);
        Ok(Self { times, events, features, names, order, groups, tau, means, scales })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn times(&self) -> &[F] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn features(&self) -> ArrayView2<'_, F> {
        self.features.view()
    }

    pub fn feature(&self, j: usize) -> ArrayView1<'_, F> {
        self.features.column(j)
    }

    /// Contiguous storage of column `j`.
    pub fn feature_slice(&self, j: usize) -> &[F] {
        let n = self.n();
        let all = self.features.as_slice_memory_order().expect("features are stored contiguously");
        &all[j * n..(j + 1) * n]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Subjects sorted by observed time, deaths before censorings at ties.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn groups(&self) -> &[TimeGroup<F>] {
        &self.groups
    }

    pub fn tau(&self) -> F {
        self.tau
    }

    /// Column means removed during standardization, if it was applied.
    pub fn means(&self) -> Option<&Array1<F>> {
        self.means.as_ref()
    }

    pub fn scales(&self) -> Option<&Array1<F>> {
        self.scales.as_ref()
    }

    pub fn check_feature(&self, j: usize) -> Result<()> {
        if j >= self.p() {
            Err(Error::IndexOutOfRange { index: j, p: self.p() })
        } else {
            Ok(())
        }
    }

    /// Visits unique observed times in increasing order.
    ///
    /// The risk set at a step holds every subject whose observed time is at
    /// least the step time; ties leave together after the step.
    pub fn risk_set_sweep<V>(&self, mut visitor: V)
    where
        V: FnMut(&RiskStep<'_, F>),
    {
        let n = self.n();
        let mut prev = F::zero();
        for g in &self.groups {
            let step = RiskStep {
                time: g.time,
                interval: g.time - prev,
                at_risk: n - g.start,
                deaths: &self.order[g.start..g.deaths_end],
                leaving: &self.order[g.start..g.end],
            };
            visitor(&step);
            prev = g.time;
        }
    }

    /// Restricts to the given subjects, keeping the parent's feature scaling
    /// and horizon. Used to build cross-validation folds.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty row selection".into()));
        }
        let p = self.p();
        let mut features = Array2::<F>::zeros((rows.len(), p).f());
        for (r, &i) in rows.iter().enumerate() {
            if i >= self.n() {
                return Err(Error::IndexOutOfRange { index: i, p: self.n() });
            }
            for j in 0..p {
                features[[r, j]] = self.features[[i, j]];
            }
        }
        let times: Vec<F> = rows.iter().map(|&i| self.times[i]).collect();
        let events: Vec<bool> = rows.iter().map(|&i| self.events[i]).collect();
        Self::assemble(
            times,
            events,
            features,
            self.names.clone(),
            Some(self.tau),
            self.means.clone(),
            self.scales.clone(),
        )
    }

    /// Converts to another scalar type (e.g. to run the estimators in `f32`).
    pub fn cast<G: Scalar>(&self) -> SurvivalDataset<G> {
        let conv = |v: F| G::lit(v.as_f64());
        SurvivalDataset {
            times: self.times.iter().map(|&t| conv(t)).collect(),
            events: self.events.clone(),
            features: to_column_major(self.features.mapv(conv)),
            names: self.names.clone(),
            order: self.order.clone(),
            groups: self
                .groups
                .iter()
                .map(|g| TimeGroup { time: conv(g.time), start: g.start, deaths_end: g.deaths_end, end: g.end })
                .collect(),
            tau: conv(self.tau),
            means: self.means.as_ref().map(|m| m.mapv(conv)),
            scales: self.scales.as_ref().map(|s| s.mapv(conv)),
        }
    }
}

/// Centers each column and scales it to unit sample variance (divisor n−1).
///
/// Returns the standardized matrix (column-major) with the means and scales
/// that were removed.
pub fn standardize<F: Scalar>(features: ArrayView2<F>) -> Result<(Array2<F>, Array1<F>, Array1<F>)> {
    let names: Vec<String> = (1..=features.ncols()).map(|j| format!("f{j}")).collect();
    standardize_named(features, &names)
}

fn standardize_named<F: Scalar>(
    features: ArrayView2<F>,
    names: &[String],
) -> Result<(Array2<F>, Array1<F>, Array1<F>)> {
    let (n, p) = features.dim();
    if n < 2 {
        return Err(Error::Domain("standardization needs at least 2 rows".into()));
    }
    let nf = F::from_count(n);
    let mut out = Array2::<F>::zeros((n, p).f());
    let mut means = Array1::<F>::zeros(p);
    let mut scales = Array1::<F>::zeros(p);
    for j in 0..p {
        let col = features.column(j);
        let mean = col.iter().copied().sum::<F>() / nf;
        let ss = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>();
        let var = ss / F::from_count(n - 1);
        let scale = var.sqrt();
        // a column is constant when its spread is at rounding level of its magnitude
        let magnitude = col.iter().fold(F::zero(), |a, &v| a.max(v.abs()));
        if !(scale > F::epsilon() * F::lit(16.0) * magnitude.max(F::min_positive_value())) {
            return Err(Error::ZeroVariance { column: j + 1, name: names[j].clone() });
        }
        means[j] = mean;
        scales[j] = scale;
        for i in 0..n {
            out[[i, j]] = (col[i] - mean) / scale;
        }
    }
    Ok((out, means, scales))
}

fn to_column_major<F: Scalar>(a: Array2<F>) -> Array2<F> {
    if a.t().is_standard_layout() {
        a
    } else {
        let mut out = Array2::<F>::zeros(a.raw_dim().f());
        out.assign(&a);
        out
    }
}

fn sort_order<F: Scalar>(times: &[F], events: &[bool]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| {
        times[a]
            .partial_cmp(&times[b])
            .expect("times are finite")
            .then_with(|| events[b].cmp(&events[a]))
            .then_with(|| a.cmp(&b))
    });
    order
}

fn build_groups<F: Scalar>(times: &[F], events: &[bool], order: &[usize]) -> Vec<TimeGroup<F>> {
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let t = times[order[start]];
        let mut end = start;
        let mut deaths_end = start;
        while end < order.len() && times[order[end]] == t {
            if events[order[end]] {
                deaths_end = end + 1;
            }
            end += 1;
        }
        groups.push(TimeGroup { time: t, start, deaths_end, end });
        start = end;
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> SurvivalDataset<f64> {
        SurvivalDataset::new(vec![1.0, 2.0, 3.0], vec![true, false, true], array![[0.0], [1.0], [-1.0]]).unwrap()
    }

    #[test]
    fn three_row_toy_is_standardized() {
        let ds = toy();
        assert_eq!((ds.n(), ds.p()), (3, 1));
        let col = ds.feature(0);
        let mean = col.sum() / 3.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert_eq!(ds.tau(), 3.0);
    }

    #[test]
    fn standardize_symmetric_column() {
        let (z, m, s) = standardize::<f64>(array![[1.0], [2.0], [3.0]].view()).unwrap();
        assert_eq!(z.column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
        assert_eq!((m[0], s[0]), (2.0, 1.0));
    }

    #[test]
    fn standardize_is_idempotent() {
        let (z, _, _) = standardize::<f64>(array![[0.3, 5.0], [1.7, -2.0], [-0.4, 1.0], [2.2, 0.5]].view()).unwrap();
        let (z2, _, _) = standardize(z.view()).unwrap();
        for (a, b) in z.iter().zip(z2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_matches_two_pass_oracle() {
        // column (0,0,4): mean 4/3, sample variance 16/3
        let (z, m, s) = standardize::<f64>(array![[0.0], [0.0], [4.0]].view()).unwrap();
        assert!((m[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((s[0] - (16.0f64 / 3.0).sqrt()).abs() < 1e-14);
        let expect = [-4.0 / 3.0, -4.0 / 3.0, 8.0 / 3.0].map(|v| v / (16.0f64 / 3.0).sqrt());
        for (a, b) in z.column(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_column_is_rejected_by_name() {
        let err = SurvivalDataset::new(
            vec![1.0, 2.0, 3.0],
            vec![true, true, false],
            array![[0.5, 1.0], [1.0, 1.0], [2.0, 1.0]],
        )
        .unwrap_err();
        match err {
            Error::ZeroVariance { column, name } => {
                assert_eq!(column, 2);
                assert_eq!(name, "f2");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn negative_time_and_no_events_rejected() {
        let z = array![[0.0], [1.0]];
        assert!(matches!(SurvivalDataset::new(vec![-1.0, 2.0], vec![true, true], z.clone()), Err(Error::Domain(_))));
        assert!(matches!(SurvivalDataset::new(vec![1.0, 2.0], vec![false, false], z), Err(Error::Domain(_))));
    }

    #[test]
    fn sweep_two_subjects() {
        let ds = SurvivalDataset::builder(vec![1.0, 2.0], vec![true, false], array![[1.0], [-1.0]])
            .standardize(false)
            .build()
            .unwrap();
        let mut steps = Vec::new();
        ds.risk_set_sweep(|s| steps.push((s.time, s.interval, s.at_risk, s.deaths.to_vec())));
        assert_eq!(steps, vec![(1.0, 1.0, 2, vec![0]), (2.0, 1.0, 1, vec![])]);
    }

    #[test]
    fn sweep_ties_share_a_step() {
        let ds = SurvivalDataset::builder(vec![1.0, 1.0], vec![true, true], array![[1.0], [-1.0]])
            .standardize(false)
            .build()
            .unwrap();
        let mut steps = Vec::new();
        ds.risk_set_sweep(|s| steps.push((s.at_risk, s.deaths.len())));
        assert_eq!(steps, vec![(2, 2)]);
    }

    #[test]
    fn deaths_precede_censorings_at_ties() {
        let ds = SurvivalDataset::builder(
            vec![2.0, 1.0, 2.0, 2.0],
            vec![false, true, true, false],
            array![[0.0], [1.0], [2.0], [3.0]],
        )
        .build()
        .unwrap();
        assert_eq!(ds.order(), &[1, 2, 0, 3]);
        assert_eq!(ds.groups()[1], TimeGroup { time: 2.0, start: 1, deaths_end: 2, end: 4 });
    }

    #[test]
    fn tau_override_censors_late_subjects() {
        let ds = SurvivalDataset::builder(vec![1.0, 2.0, 5.0], vec![true, true, true], array![[0.0], [1.0], [2.0]])
            .tau(3.0)
            .build()
            .unwrap();
        assert_eq!(ds.times(), &[1.0, 2.0, 3.0]);
        assert_eq!(ds.events(), &[true, true, false]);
    }
}
