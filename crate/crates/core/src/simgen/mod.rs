//! Simulation scenarios: feature laws, single-index hazard links, survival
//! and censoring samplers, and the benchmark protocols built on them.
//!
//! Every draw comes from a ChaCha stream keyed by `(seed, replicate)`, so a
//! replicate's data do not depend on which thread generated it.

use ndarray::{Array2, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::survival_data::SurvivalDataset;

pub mod protocol;

pub use protocol::{run_protocol, Protocol, ProtocolConfig, ProtocolReport};

pub const C_LOGIT: f64 = 1.39;
pub const C_COX: f64 = 0.68;
pub const C_LOG: f64 = 1.39;

/// Independent exponential censoring rates paired with each link.
pub const CENS_RATE_LOGIT: f64 = 0.12;
pub const CENS_RATE_COX: f64 = 0.3;
pub const CENS_RATE_LOG: f64 = 0.17;

/// Number of leading features sharing the common factor.
pub const CORRELATED_BLOCK: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    Logit,
    Cox,
    Log,
}

impl LinkKind {
    pub const ALL: [LinkKind; 3] = [LinkKind::Logit, LinkKind::Cox, LinkKind::Log];

    pub fn default_constant(self) -> f64 {
        match self {
            LinkKind::Logit => C_LOGIT,
            LinkKind::Cox => C_COX,
            LinkKind::Log => C_LOG,
        }
    }

    pub fn default_censoring_rate(self) -> f64 {
        match self {
            LinkKind::Logit => CENS_RATE_LOGIT,
            LinkKind::Cox => CENS_RATE_COX,
            LinkKind::Log => CENS_RATE_LOG,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LinkKind::Logit => "logit",
            LinkKind::Cox => "cox",
            LinkKind::Log => "log",
        }
    }
}

impl std::str::FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" => Ok(LinkKind::Logit),
            "cox" => Ok(LinkKind::Cox),
            "log" => Ok(LinkKind::Log),
            other => Err(Error::InvalidArgument(format!("unknown link {other:?}"))),
        }
    }
}

/// Time-constant hazard as a function of the linear score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub kind: LinkKind,
    pub c: f64,
}

impl Link {
    pub fn new(kind: LinkKind) -> Self {
        Self { kind, c: kind.default_constant() }
    }

    /// logit: `1/(1+e^{cx})`; cox: `e^{cx}`; log: `ln(e + (cx)²)/(1+e^{cx})`.
    pub fn hazard(&self, x: f64) -> f64 {
        let cx = self.c * x;
        match self.kind {
            LinkKind::Logit => logistic_complement(cx),
            LinkKind::Cox => cx.exp(),
            LinkKind::Log => (std::f64::consts::E + cx * cx).ln() * logistic_complement(cx),
        }
    }
}

/// `1 / (1 + e^u)` without overflow.
fn logistic_complement(u: f64) -> f64 {
    if u > 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

/// Distribution of the independent per-feature innovations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "law")]
pub enum Innovation {
    Gaussian,
    /// Student t scaled to unit variance (requires df > 2).
    StudentT {
        df: f64,
    },
    /// Unit-rate exponential shifted to mean zero.
    Exponential,
    /// Thirds of the columns: Gaussian, Laplace(0, 1), and the mixture
    /// `0.5 N(−1, 1) + 0.5 N(1, 0.5)`.
    MixedThirds,
}

/// Correlation structures of the iterated-screening benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationCase {
    /// Independent features.
    A,
    /// All pairs correlated 0.5.
    B,
    /// Pairs 0.5, except feature 4 correlated 1/√2 with every other feature.
    C,
    /// As C, but feature 5 is independent of everything.
    D,
}

impl std::str::FromStr for CorrelationCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(CorrelationCase::A),
            "b" => Ok(CorrelationCase::B),
            "c" => Ok(CorrelationCase::C),
            "d" => Ok(CorrelationCase::D),
            other => Err(Error::InvalidArgument(format!("unknown case {other:?}"))),
        }
    }
}

impl CorrelationCase {
    pub const ALL: [CorrelationCase; 4] =
        [CorrelationCase::A, CorrelationCase::B, CorrelationCase::C, CorrelationCase::D];

    pub fn label(self) -> &'static str {
        match self {
            CorrelationCase::A => "a",
            CorrelationCase::B => "b",
            CorrelationCase::C => "c",
            CorrelationCase::D => "d",
        }
    }

    /// Coefficients of the case (nonzero prefix).
    pub fn coefficients(self) -> Vec<f64> {
        let s2 = std::f64::consts::SQRT_2;
        match self {
            CorrelationCase::A | CorrelationCase::B => vec![-0.96, 0.90, 1.20, 0.96, -0.85, 1.08],
            CorrelationCase::C => vec![4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, -2.0 * s2],
            CorrelationCase::D => vec![4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, -2.0 * s2, 2.0 / 3.0],
        }
    }

    /// Population correlation between features `i` and `j` (0-based).
    pub fn correlation(self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let special = |k: usize| k == 3;
        match self {
            CorrelationCase::A => 0.0,
            CorrelationCase::B => 0.5,
            CorrelationCase::C if special(i) || special(j) => std::f64::consts::FRAC_1_SQRT_2,
            CorrelationCase::C => 0.5,
            CorrelationCase::D if i == 4 || j == 4 => 0.0,
            CorrelationCase::D if special(i) || special(j) => std::f64::consts::FRAC_1_SQRT_2,
            CorrelationCase::D => 0.5,
        }
    }

    pub fn correlation_matrix(self, p: usize) -> Array2<f64> {
        Array2::from_shape_fn((p, p), |(i, j)| self.correlation(i, j))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FeatureLaw {
    /// `Z_j = (ε_j + a_j ε)/sqrt(1 + a_j²)` with `a_j = sqrt(ρ/(1−ρ))` on the
    /// first [`CORRELATED_BLOCK`] features and 0 elsewhere. The common
    /// factor `ε` has the same law as the innovations (Gaussian for
    /// `MixedThirds`).
    Factor { innovation: Innovation, rho: f64 },
    /// Jointly Gaussian with one of the structured correlation cases.
    Case { case: CorrelationCase },
    /// Jointly Gaussian with an explicit correlation matrix.
    Matrix { correlation: Array2<f64> },
}

impl FeatureLaw {
    pub fn mixed_fan_song(rho: f64) -> Self {
        FeatureLaw::Factor { innovation: Innovation::MixedThirds, rho }
    }

    pub fn gaussian(rho: f64) -> Self {
        FeatureLaw::Factor { innovation: Innovation::Gaussian, rho }
    }

    pub fn student_t(df: f64, rho: f64) -> Self {
        FeatureLaw::Factor { innovation: Innovation::StudentT { df }, rho }
    }

    pub fn exponential(rho: f64) -> Self {
        FeatureLaw::Factor { innovation: Innovation::Exponential, rho }
    }

    pub fn label(&self) -> String {
        match self {
            FeatureLaw::Factor { innovation, rho } => match innovation {
                Innovation::Gaussian => format!("gaussian(rho={rho})"),
                Innovation::StudentT { df } => format!("t{df}(rho={rho})"),
                Innovation::Exponential => format!("exponential(rho={rho})"),
                Innovation::MixedThirds => format!("mixed(rho={rho})"),
            },
            FeatureLaw::Case { case } => format!("case-{}", case.label()),
            FeatureLaw::Matrix { correlation } => {
                format!("gaussian-matrix({}x{})", correlation.nrows(), correlation.ncols())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Censoring {
    /// Independent exponential censoring with the given rate.
    Exponential { rate: f64 },
    /// Censoring from the survival link with coefficients scaled by `k`,
    /// on the same feature draw.
    Linked { k: f64 },
}

/// Full description of one simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub n: usize,
    pub p: usize,
    pub features: FeatureLaw,
    /// Leading coefficients; features beyond its length have coefficient 0.
    pub alpha: Vec<f64>,
    pub link: Link,
    pub censoring: Censoring,
    pub tau: Option<f64>,
    pub seed: u64,
}

/// `(1, 1.3, 1, 1.3, ...)` of length `s`.
pub fn alternating_coefficients(s: usize) -> Vec<f64> {
    (0..s).map(|j| if j % 2 == 0 { 1.0 } else { 1.3 }).collect()
}

/// One generated replicate.
#[derive(Debug, Clone)]
pub struct SimDraw {
    pub dataset: SurvivalDataset<f64>,
    /// Indices of features with nonzero coefficient.
    pub truth: Vec<usize>,
    pub censoring_fraction: f64,
}

impl SimScenario {
    /// Checks the scenario before anything is sampled.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p == 0 {
            return Err(Error::InvalidArgument(format!("need n >= 2 and p >= 1, got n = {}, p = {}", self.n, self.p)));
        }
        if self.alpha.len() > self.p {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for only {} features",
                self.alpha.len(),
                self.p
            )));
        }
        if !(self.link.c > 0.0) {
            return Err(Error::Domain(format!("link constant must be positive, got {}", self.link.c)));
        }
        if let Censoring::Exponential { rate } = self.censoring {
            if !(rate > 0.0) {
                return Err(Error::Domain(format!("censoring rate must be positive, got {rate}")));
            }
        }
        match &self.features {
            FeatureLaw::Factor { innovation, rho } => {
                if !(0.0..1.0).contains(rho) {
                    return Err(Error::Domain(format!("rho must lie in [0, 1), got {rho}")));
                }
                if let Innovation::StudentT { df } = innovation {
                    if !(*df > 2.0) {
                        return Err(Error::Domain(format!("t innovations need df > 2 for unit variance, got {df}")));
                    }
                }
            }
            FeatureLaw::Case { case } => {
                let needed = case.coefficients().len();
                if self.p < needed {
                    return Err(Error::InvalidArgument(format!("case {} needs p >= {needed}", case.label())));
                }
            }
            FeatureLaw::Matrix { correlation } => {
                if correlation.dim() != (self.p, self.p) {
                    return Err(Error::InvalidArgument("correlation matrix must be p x p".into()));
                }
                Cholesky::factor(correlation.view())
                    .map_err(|_| Error::Domain("requested correlation matrix is not positive definite".into()))?;
            }
        }
        Ok(())
    }

    pub fn truth(&self) -> Vec<usize> {
        self.alpha.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, _)| j).collect()
    }

    /// Generator for replicate `replicate`.
    pub fn rng(&self, replicate: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate);
        rng
    }

    /// Draws one replicate: features, outcomes, and the standardized dataset.
    pub fn generate(&self, replicate: u64) -> Result<SimDraw> {
        self.validate()?;
        let mut rng = self.rng(replicate);
        let z = gen_features(self, &mut rng)?;
        let (times, events) = gen_outcomes(self, &z, &mut rng);
        let censored = events.iter().filter(|e| !**e).count();
        let mut builder = SurvivalDataset::builder(times, events, z);
        if let Some(tau) = self.tau {
            builder = builder.tau(tau);
        }
        let dataset = builder.build()?;
        Ok(SimDraw { dataset, truth: self.truth(), censoring_fraction: censored as f64 / self.n as f64 })
    }
}

fn draw_innovation<R: Rng>(law: Innovation, column: usize, p: usize, rng: &mut R) -> f64 {
    match law {
        Innovation::Gaussian => rng.sample(StandardNormal),
        Innovation::StudentT { df } => {
            let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
            t * ((df - 2.0) / df).sqrt()
        }
        Innovation::Exponential => {
            let e: f64 = rng.sample(Exp1);
            e - 1.0
        }
        Innovation::MixedThirds => {
            if column < p / 3 {
                rng.sample(StandardNormal)
            } else if column < 2 * p / 3 {
                let e: f64 = rng.sample(Exp1);
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            } else {
                let z: f64 = rng.sample(StandardNormal);
                if rng.random::<bool>() {
                    -1.0 + z
                } else {
                    1.0 + std::f64::consts::FRAC_1_SQRT_2 * z
                }
            }
        }
    }
}

/// Raw n×p feature draw (column-major), before empirical standardization.
pub fn gen_features<R: Rng>(sc: &SimScenario, rng: &mut R) -> Result<Array2<f64>> {
    sc.validate()?;
    let (n, p) = (sc.n, sc.p);
    let mut z = Array2::<f64>::zeros((n, p).f());
    match &sc.features {
        FeatureLaw::Factor { innovation, rho } => {
            let common_law = match innovation {
                Innovation::MixedThirds => Innovation::Gaussian,
                other => *other,
            };
            let common: Vec<f64> = (0..n).map(|_| draw_innovation(common_law, 0, p, rng)).collect();
            let a = (rho / (1.0 - rho)).sqrt();
            for j in 0..p {
                let aj = if j < CORRELATED_BLOCK { a } else { 0.0 };
                let norm = (1.0 + aj * aj).sqrt();
                for i in 0..n {
                    let e = draw_innovation(*innovation, j, p, rng);
                    z[[i, j]] = (e + aj * common[i]) / norm;
                }
            }
        }
        FeatureLaw::Case { case } => {
            let common: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let w = std::f64::consts::FRAC_1_SQRT_2;
            for j in 0..p {
                for i in 0..n {
                    let e: f64 = rng.sample(StandardNormal);
                    z[[i, j]] = match (case, j) {
                        (CorrelationCase::A, _) => e,
                        (CorrelationCase::C | CorrelationCase::D, 3) => common[i],
                        (CorrelationCase::D, 4) => e,
                        _ => w * (e + common[i]),
                    };
                }
            }
        }
        FeatureLaw::Matrix { correlation } => {
            let chol = Cholesky::factor(correlation.view())
                .map_err(|_| Error::Domain("requested correlation matrix is not positive definite".into()))?;
            let l = chol.factor_l();
            let mut e = vec![0.0; p];
            for i in 0..n {
                e.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                for j in 0..p {
                    z[[i, j]] = (0..=j).map(|k| l[[j, k]] * e[k]).sum();
                }
            }
        }
    }
    Ok(z)
}

/// Conditionally exponential survival and censoring times.
///
/// Returns observed times `min(T, C)` and event indicators `T <= C`.
pub fn gen_outcomes<R: Rng>(sc: &SimScenario, z: &Array2<f64>, rng: &mut R) -> (Vec<f64>, Vec<bool>) {
    let mut times = Vec::with_capacity(sc.n);
    let mut events = Vec::with_capacity(sc.n);
    for i in 0..sc.n {
        let score: f64 = sc.alpha.iter().enumerate().map(|(j, a)| a * z[[i, j]]).sum();
        let rate_t = sc.link.hazard(score);
        let rate_c = match sc.censoring {
            Censoring::Exponential { rate } => rate,
            Censoring::Linked { k } => sc.link.hazard(k * score),
        };
        assert!(rate_t >= 0.0 && rate_c >= 0.0, "hazard links are nonnegative");
        let e_t: f64 = rng.sample(Exp1);
        let e_c: f64 = rng.sample(Exp1);
        let t = if rate_t > 0.0 { e_t / rate_t } else { f64::INFINITY };
        let c = if rate_c > 0.0 { e_c / rate_c } else { f64::INFINITY };
        let t_obs = t.min(c);
        // both infinite only if both hazards underflow; censor at a large finite time
        times.push(if t_obs.is_finite() { t_obs } else { f64::MAX.sqrt() });
        events.push(t <= c && t.is_finite());
    }
    (times, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_values_at_zero() {
        assert_eq!(Link::new(LinkKind::Logit).hazard(0.0), 0.5);
        assert_eq!(Link::new(LinkKind::Cox).hazard(0.0), 1.0);
        assert!((Link::new(LinkKind::Log).hazard(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn links_are_finite_at_extremes() {
        for kind in LinkKind::ALL {
            let link = Link::new(kind);
            for x in [-700.0 / link.c, 700.0 / link.c] {
                let h = link.hazard(x);
                assert!(h.is_finite() && h >= 0.0, "{kind:?} at {x}: {h}");
            }
        }
    }

    #[test]
    fn case_c_matrix_is_positive_definite() {
        for case in CorrelationCase::ALL {
            assert!(Cholesky::factor(case.correlation_matrix(60).view()).is_ok(), "{case:?}");
        }
    }

    #[test]
    fn non_psd_matrix_rejected_before_sampling() {
        let bad = ndarray::array![[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]];
        let sc = SimScenario {
            n: 10,
            p: 3,
            features: FeatureLaw::Matrix { correlation: bad },
            alpha: vec![1.0],
            link: Link::new(LinkKind::Cox),
            censoring: Censoring::Exponential { rate: 0.3 },
            tau: None,
            seed: 1,
        };
        assert!(matches!(sc.generate(0), Err(Error::Domain(_))));
    }

    #[test]
    fn same_seed_same_draw() {
        let sc = SimScenario {
            n: 50,
            p: 30,
            features: FeatureLaw::mixed_fan_song(0.25),
            alpha: alternating_coefficients(3),
            link: Link::new(LinkKind::Logit),
            censoring: Censoring::Exponential { rate: CENS_RATE_LOGIT },
            tau: None,
            seed: 9,
        };
        let a = sc.generate(3).unwrap();
        let b = sc.generate(3).unwrap();
        let c = sc.generate(4).unwrap();
        assert_eq!(a.dataset.times(), b.dataset.times());
        assert_eq!(a.dataset.features(), b.dataset.features());
        assert_ne!(a.dataset.times(), c.dataset.times());
        assert_eq!(a.truth, vec![0, 1, 2]);
    }
}
