//! Marginal aberration statistics: for every feature, the summed deviation
//! of dying subjects from the at-risk average, plus the diagonal of the
//! additive-hazards information (`D_jj`) and of the martingale variance
//! (`B_jj`). One O(n·p) pass after sorting.

use std::io::Write;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::survival_data::SurvivalDataset;

/// Features per parallel work item.
const FEATURE_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `d_j`
    Vanilla,
    /// `d_j / sqrt(B_jj)`: Wald-type standardization.
    Z,
    /// `d_j / D_jj`: univariate additive-hazards coefficient.
    Ly,
    /// `d_j / sqrt(D_jj)`: ranks like the univariate loss decrease `d_j² / D_jj`.
    Loss,
    /// `d_j / sqrt(B_jj)`, the loss scaling as it is sometimes printed. Ranks
    /// identically to [`Variant::Z`].
    LossLiteral,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Vanilla, Variant::Z, Variant::Ly, Variant::Loss];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Z => "z",
            Variant::Ly => "ly",
            Variant::Loss => "loss",
            Variant::LossLiteral => "loss-literal",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" | "d" => Ok(Variant::Vanilla),
            "z" => Ok(Variant::Z),
            "ly" => Ok(Variant::Ly),
            "loss" => Ok(Variant::Loss),
            "loss-literal" => Ok(Variant::LossLiteral),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

/// Per-feature marginal statistics.
#[derive(Debug, Clone, Serialize)]
pub struct FastSummary<F> {
    pub n: usize,
    pub p: usize,
    /// Aberration statistic, one entry per feature.
    pub d: Array1<F>,
    /// Diagonal of the information matrix `D`.
    pub d_diag: Array1<F>,
    /// Diagonal of the variance matrix `B`.
    pub b_diag: Array1<F>,
}

impl<F: Scalar> FastSummary<F> {
    /// The requested scaling of `d`. Errors name the first feature whose
    /// scale is zero.
    pub fn scaled(&self, kind: Variant) -> Result<Array1<F>> {
        let scale_by = |scale: &Array1<F>, f: fn(F) -> F| -> Result<Array1<F>> {
            let mut out = Array1::zeros(self.p);
            for j in 0..self.p {
                if !(scale[j] > F::zero()) {
                    return Err(Error::ZeroScale { feature: j });
                }
                out[j] = self.d[j] / f(scale[j]);
            }
            Ok(out)
        };
        match kind {
            Variant::Vanilla => Ok(self.d.clone()),
            Variant::Z | Variant::LossLiteral => scale_by(&self.b_diag, F::sqrt),
            Variant::Ly => scale_by(&self.d_diag, |v| v),
            Variant::Loss => scale_by(&self.d_diag, F::sqrt),
        }
    }

    /// `n⁻¹ tr(D)` over all features, the time-scale normalizer of the
    /// one-step SCAD weights.
    pub fn diag_scale(&self) -> F {
        self.d_diag.sum() / F::from_count(self.n)
    }

    /// Writes `feature,name,d,D_jj,B_jj` plus one column per variant.
    /// Variants whose scale is zero for a feature are written as `NaN`.
    pub fn write_csv<W: Write>(&self, names: &[String], variants: &[Variant], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["feature", "name", "d", "D_jj", "B_jj"].map(String::from).to_vec();
        header.extend(variants.iter().map(|v| v.label().to_string()));
        w.write_record(&header)?;
        let cols: Vec<Array1<F>> =
            variants.iter().map(|&v| self.scaled(v).unwrap_or_else(|_| self.scaled_lossy(v))).collect();
        for j in 0..self.p {
            let mut rec = vec![
                (j + 1).to_string(),
                names.get(j).cloned().unwrap_or_default(),
                self.d[j].to_string(),
                self.d_diag[j].to_string(),
                self.b_diag[j].to_string(),
            ];
            rec.extend(cols.iter().map(|c| c[j].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    fn scaled_lossy(&self, kind: Variant) -> Array1<F> {
        let scale = match kind {
            Variant::Vanilla => return self.d.clone(),
            Variant::Z | Variant::LossLiteral => self.b_diag.mapv(F::sqrt),
            Variant::Ly => self.d_diag.clone(),
            Variant::Loss => self.d_diag.mapv(F::sqrt),
        };
        Array1::from_shape_fn(self.p, |j| if scale[j] > F::zero() { self.d[j] / scale[j] } else { F::nan() })
    }
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum<F> {
    sum: F,
    comp: F,
}

impl<F: Scalar> KahanSum<F> {
    #[inline]
    pub(crate) fn add(&mut self, x: F) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> F {
        self.sum + self.comp
    }
}

/// `(d_j, D_jj, B_jj)` for one feature, unnormalized (not yet divided by n).
///
/// Sweeps time groups from latest to earliest so the risk set only grows;
/// the centered second moment of the risk set is kept by Welford updates,
/// which avoids the cancellation in `S2 - S1²/S0`.
pub(crate) fn feature_moments<F: Scalar>(ds: &SurvivalDataset<F>, col: &[F]) -> (F, F, F) {
    let order = ds.order();
    let groups = ds.groups();
    let mut count = F::zero();
    let mut mean = F::zero();
    let mut m2 = F::zero();
    let mut d = KahanSum::default();
    let mut b = KahanSum::default();
    let mut integral = KahanSum::default();
    for k in (0..groups.len()).rev() {
        let g = groups[k];
        for &i in &order[g.start..g.end] {
            let z = col[i];
            count += F::one();
            let delta = z - mean;
            mean += delta / count;
            m2 += delta * (z - mean);
        }
        let prev = if k == 0 { F::zero() } else { groups[k - 1].time };
        integral.add((g.time - prev) * m2);
        for &i in &order[g.start..g.deaths_end] {
            let dev = col[i] - mean;
            d.add(dev);
            b.add(dev * dev);
        }
    }
    (d.value(), integral.value(), b.value())
}

/// Computes the statistic and both diagonals for every feature.
///
/// Work is split over feature blocks; results do not depend on the number
/// of threads.
pub fn compute_fast<F: Scalar>(ds: &SurvivalDataset<F>) -> FastSummary<F> {
    let p = ds.p();
    let nf = F::from_count(ds.n());
    let blocks: Vec<Vec<(F, F, F)>> = (0..p)
        .into_par_iter()
        .step_by(FEATURE_BLOCK)
        .map(|start| {
            (start..(start + FEATURE_BLOCK).min(p)).map(|j| feature_moments(ds, ds.feature_slice(j))).collect()
        })
        .collect();
    let mut d = Array1::zeros(p);
    let mut d_diag = Array1::zeros(p);
    let mut b_diag = Array1::zeros(p);
    for (j, (dj, djj, bjj)) in blocks.into_iter().flatten().enumerate() {
        d[j] = dj / nf;
        d_diag[j] = djj / nf;
        b_diag[j] = bjj / nf;
    }
    FastSummary { n: ds.n(), p, d, d_diag, b_diag }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_subject() -> SurvivalDataset<f64> {
        SurvivalDataset::builder(vec![1.0, 2.0], vec![true, false], array![[1.0], [-1.0]])
            .standardize(false)
            .build()
            .unwrap()
    }

    #[test]
    fn two_subject_hand_values() {
        let fs = compute_fast(&two_subject());
        assert!((fs.d[0] - 0.5).abs() < 1e-15);
        assert!((fs.d_diag[0] - 1.0).abs() < 1e-15);
        assert!((fs.b_diag[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scaled_variants_on_hand_example() {
        let fs = compute_fast(&two_subject());
        assert!((fs.scaled(Variant::Ly).unwrap()[0] - 0.5).abs() < 1e-15);
        assert!((fs.scaled(Variant::Z).unwrap()[0] - 0.5 / 0.5f64.sqrt()).abs() < 1e-15);
        assert!((fs.scaled(Variant::Loss).unwrap()[0] - 0.5).abs() < 1e-15);
        assert_eq!(fs.scaled(Variant::Vanilla).unwrap()[0], 0.5);
    }

    #[test]
    fn single_early_death_at_risk_mean_gives_zero() {
        // the one death is subject 1, whose value equals the mean of everyone at risk
        let ds = SurvivalDataset::builder(vec![1.0, 2.0, 3.0], vec![true, false, false], array![[0.0], [1.0], [-1.0]])
            .standardize(false)
            .build()
            .unwrap();
        assert_eq!(compute_fast(&ds).d[0], 0.0);
    }

    #[test]
    fn zero_scale_names_feature() {
        let fs = FastSummary { n: 3, p: 2, d: array![0.1, 0.2], d_diag: array![1.0, 0.0], b_diag: array![1.0, 1.0] };
        assert!(matches!(fs.scaled(Variant::Ly), Err(Error::ZeroScale { feature: 1 })));
        assert!(fs.scaled(Variant::Z).is_ok());
    }

    #[test]
    fn csv_export_has_one_row_per_feature() {
        let fs = compute_fast(&two_subject());
        let mut buf = Vec::new();
        fs.write_csv(&["x".into()], &Variant::ALL, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "feature,name,d,D_jj,B_jj,vanilla,z,ly,loss");
        assert_eq!(lines.len(), 2);
    }
}
