//! Replicated benchmark runs over the simulation grids.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    alternating_coefficients, Censoring, CorrelationCase, FeatureLaw, Innovation, Link, LinkKind, SimScenario,
};
use crate::error::{Error, Result};
use crate::fast_stat::{compute_fast, Variant};
use crate::screening::{isis_with_summary, minimum_model_size, rank_by_magnitude, IsisOptions, IsisVariant};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Feature correlation in the non-Gaussian / linked-censoring grid.
pub const TABLE2_RHO: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// SIS minimum model sizes over link × correlation × sparsity.
    Table1,
    /// SIS minimum model sizes over feature law × censoring association.
    Table2,
    /// Iterated screening over link × correlation case.
    Table3,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table1" => Ok(Protocol::Table1),
            "table2" => Ok(Protocol::Table2),
            "table3" => Ok(Protocol::Table3),
            other => Err(Error::InvalidArgument(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Innovation laws of the second grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Table2Law {
    Gaussian,
    T4,
    Exponential,
}

impl Table2Law {
    pub const ALL: [Table2Law; 3] = [Table2Law::Gaussian, Table2Law::T4, Table2Law::Exponential];

    pub fn innovation(self) -> Innovation {
        match self {
            Table2Law::Gaussian => Innovation::Gaussian,
            Table2Law::T4 => Innovation::StudentT { df: 4.0 },
            Table2Law::Exponential => Innovation::Exponential,
        }
    }
}

impl std::str::FromStr for Table2Law {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Table2Law::Gaussian),
            "t4" | "t" => Ok(Table2Law::T4),
            "exponential" | "exp" => Ok(Table2Law::Exponential),
            other => Err(Error::InvalidArgument(format!("unknown feature law {other:?}"))),
        }
    }
}

/// Grid and scale of a protocol run. Fields left at their defaults reproduce
/// the full grid at desk scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    pub n: usize,
    pub p: usize,
    pub replicates: usize,
    pub seed: u64,
    pub links: Vec<LinkKind>,
    /// Correlations of the table1 grid.
    pub rhos: Vec<f64>,
    /// Sparsity levels of the table1 grid.
    pub sparsities: Vec<usize>,
    /// Feature laws of the table2 grid.
    pub laws: Vec<Table2Law>,
    /// Censoring association constants of the table2 grid.
    pub ks: Vec<f64>,
    /// Correlation cases of the table3 grid.
    pub cases: Vec<CorrelationCase>,
    /// Screening scalings reported for the SIS grids.
    pub variants: Vec<Variant>,
    /// Iterated screening variants of the table3 grid.
    pub isis_variants: Vec<IsisVariant>,
    /// Recruited-set size for the table3 grid; `None` means `⌊n / ln n / 3⌋`.
    pub d: Option<usize>,
    pub r_max: usize,
}

impl ProtocolConfig {
    pub fn new(protocol: Protocol) -> Self {
        let base = Self {
            protocol,
            n: 300,
            p: 2000,
            replicates: 50,
            seed: 1,
            links: LinkKind::ALL.to_vec(),
            rhos: vec![0.0, 0.25, 0.5, 0.75],
            sparsities: vec![3, 6, 9],
            laws: Table2Law::ALL.to_vec(),
            ks: vec![0.0, -0.5, -0.25, 0.25, 0.5],
            cases: CorrelationCase::ALL.to_vec(),
            variants: vec![Variant::Vanilla, Variant::Ly, Variant::Z],
            isis_variants: vec![IsisVariant::LyCoef, IsisVariant::ZStat],
            d: None,
            r_max: 5,
        };
        match protocol {
            Protocol::Table1 => base,
            Protocol::Table2 => Self {
                links: vec![LinkKind::Log],
                variants: vec![Variant::Vanilla, Variant::Ly, Variant::Z, Variant::Loss],
                ..base
            },
            Protocol::Table3 => Self { p: 500, replicates: 100, variants: vec![Variant::Vanilla], ..base },
        }
    }

    /// The full-scale grid: p = 20 000 and 100 replicates for the SIS grids.
    pub fn full_scale(mut self) -> Self {
        if self.protocol != Protocol::Table3 {
            self.p = 20_000;
        }
        self.replicates = 100;
        self
    }

    pub fn resolved_d(&self) -> usize {
        self.d.unwrap_or_else(|| {
            let n = self.n as f64;
            ((n / n.ln() / 3.0).floor() as usize).max(1)
        })
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.r_max == 0 {
            return Err(Error::InvalidArgument("r_max must be at least 1".into()));
        }
        Ok(())
    }

    /// Scenarios of the grid, in report order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        match self.protocol {
            Protocol::Table1 => {
                for &link in &self.links {
                    for &rho in &self.rhos {
                        for &s in &self.sparsities {
                            cells.push(Cell {
                                link,
                                rho: Some(rho),
                                s: Some(s),
                                law: None,
                                k: None,
                                case: None,
                                scenario: table1_scenario(self.n, self.p, link, rho, s, 0),
                            });
                        }
                    }
                }
            }
            Protocol::Table2 => {
                for &link in &self.links {
                    for &law in &self.laws {
                        for &k in &self.ks {
                            cells.push(Cell {
                                link,
                                rho: None,
                                s: None,
                                law: Some(law),
                                k: Some(k),
                                case: None,
                                scenario: table2_scenario(self.n, self.p, law, k, 0).with_link(link),
                            });
                        }
                    }
                }
            }
            Protocol::Table3 => {
                for &link in &self.links {
                    for &case in &self.cases {
                        cells.push(Cell {
                            link,
                            rho: None,
                            s: None,
                            law: None,
                            k: None,
                            case: Some(case),
                            scenario: table3_scenario(self.n, self.p, link, case, 0),
                        });
                    }
                }
            }
        }
        for (i, cell) in cells.iter_mut().enumerate() {
            cell.scenario.seed = cell_seed(self.seed, i);
        }
        cells
    }
}

fn cell_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

impl SimScenario {
    fn with_link(mut self, kind: LinkKind) -> Self {
        self.link = Link::new(kind);
        self
    }
}

/// Mixed-innovation factor design with alternating coefficients.
pub fn table1_scenario(n: usize, p: usize, link: LinkKind, rho: f64, s: usize, seed: u64) -> SimScenario {
    SimScenario {
        n,
        p,
        features: FeatureLaw::mixed_fan_song(rho),
        alpha: alternating_coefficients(s),
        link: Link::new(link),
        censoring: Censoring::Exponential { rate: link.default_censoring_rate() },
        tau: None,
        seed,
    }
}

/// Log link, six alternating coefficients, censoring from the same link
/// with coefficients scaled by `k`.
pub fn table2_scenario(n: usize, p: usize, law: Table2Law, k: f64, seed: u64) -> SimScenario {
    SimScenario {
        n,
        p,
        features: FeatureLaw::Factor { innovation: law.innovation(), rho: TABLE2_RHO },
        alpha: alternating_coefficients(6),
        link: Link::new(LinkKind::Log),
        censoring: Censoring::Linked { k },
        tau: None,
        seed,
    }
}

/// Jointly Gaussian correlation cases with their fixed coefficients.
pub fn table3_scenario(n: usize, p: usize, link: LinkKind, case: CorrelationCase, seed: u64) -> SimScenario {
    SimScenario {
        n,
        p,
        features: FeatureLaw::Case { case },
        alpha: case.coefficients(),
        link: Link::new(link),
        censoring: Censoring::Exponential { rate: link.default_censoring_rate() },
        tau: None,
        seed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub link: LinkKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<Table2Law>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<CorrelationCase>,
    /// Fully resolved scenario, including the cell's seed.
    pub scenario: SimScenario,
}

impl Cell {
    fn label(&self) -> String {
        let mut s = self.link.label().to_string();
        if let Some(rho) = self.rho {
            let _ = write!(s, " rho={rho}");
        }
        if let Some(sp) = self.s {
            let _ = write!(s, " s={sp}");
        }
        if let Some(law) = self.law {
            let _ = write!(s, " law={law:?}");
        }
        if let Some(k) = self.k {
            let _ = write!(s, " k={k}");
        }
        if let Some(case) = self.case {
            let _ = write!(s, " case={}", case.label());
        }
        s
    }
}

/// Minimum model sizes of one screening variant across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsSummary {
    pub variant: Variant,
    pub mms: Vec<usize>,
    /// Median minimum model size.
    pub mmms: f64,
    /// Interquartile range divided by 1.34.
    pub rsd: f64,
}

impl MmsSummary {
    pub fn from_sizes(variant: Variant, mms: Vec<usize>) -> Self {
        let values: Vec<f64> = mms.iter().map(|&m| m as f64).collect();
        Self { variant, mmms: median(&values), rsd: robust_sd(&values), mms }
    }
}

/// Iterated-screening outcomes of one variant across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsisSummary {
    pub variant: IsisVariant,
    pub true_positives: Vec<usize>,
    pub model_sizes: Vec<usize>,
    pub avg_true_positives: f64,
    pub sd_true_positives: f64,
    pub avg_model_size: f64,
    pub sd_model_size: f64,
    /// Replicates whose selection step failed numerically.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    #[serde(flatten)]
    pub cell: Cell,
    pub label: String,
    pub censoring_mean: f64,
    pub sis: Vec<MmsSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub isis: Vec<IsisSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub schema_version: u32,
    pub config: ProtocolConfig,
    /// Recruited-set size actually used (table3 only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    pub cells: Vec<CellReport>,
}

struct ReplicateOutcome {
    censoring: f64,
    mms: Vec<usize>,
    isis: Vec<Option<(usize, usize)>>,
}

fn run_replicate(cfg: &ProtocolConfig, sc: &SimScenario, replicate: u64) -> Result<ReplicateOutcome> {
    let draw = sc.generate(replicate)?;
    let fs = compute_fast(&draw.dataset);
    let mms = cfg
        .variants
        .iter()
        .map(|&v| {
            let scores = fs.scaled(v)?;
            minimum_model_size(&rank_by_magnitude(scores.as_slice().expect("contiguous")), &draw.truth)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut isis = Vec::new();
    if cfg.protocol == Protocol::Table3 {
        for &variant in &cfg.isis_variants {
            let mut opts = IsisOptions::new(variant, cfg.resolved_d());
            opts.r_max = cfg.r_max;
            isis.push(match isis_with_summary(&draw.dataset, &fs, &opts) {
                Ok(trace) => {
                    let tp = trace.final_set.iter().filter(|j| draw.truth.contains(j)).count();
                    Some((tp, trace.final_set.len()))
                }
                Err(e) if e.is_numerical() => {
                    log::warn!("replicate {replicate}: {e}");
                    None
                }
                Err(e) => return Err(e),
            });
        }
    }
    Ok(ReplicateOutcome { censoring: draw.censoring_fraction, mms, isis })
}

/// Runs every cell of the configured grid. Replicates run in parallel on
/// independent random streams, so the report does not depend on the number
/// of threads.
pub fn run_protocol(cfg: &ProtocolConfig) -> Result<ProtocolReport> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for cell in cfg.cells() {
        cell.scenario.validate()?;
        log::info!("running {} ({} replicates)", cell.label(), cfg.replicates);
        let outcomes = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| run_replicate(cfg, &cell.scenario, r))
            .collect::<Result<Vec<_>>>()?;
        let censoring_mean = outcomes.iter().map(|o| o.censoring).sum::<f64>() / outcomes.len() as f64;
        let sis = cfg
            .variants
            .iter()
            .enumerate()
            .map(|(v, &variant)| MmsSummary::from_sizes(variant, outcomes.iter().map(|o| o.mms[v]).collect()))
            .collect();
        let isis = cfg
            .isis_variants
            .iter()
            .enumerate()
            .filter(|_| cfg.protocol == Protocol::Table3)
            .map(|(v, &variant)| {
                let ok: Vec<(usize, usize)> = outcomes.iter().filter_map(|o| o.isis[v]).collect();
                let tp: Vec<usize> = ok.iter().map(|x| x.0).collect();
                let size: Vec<usize> = ok.iter().map(|x| x.1).collect();
                let (avg_tp, sd_tp) = mean_sd(&tp);
                let (avg_size, sd_size) = mean_sd(&size);
                IsisSummary {
                    variant,
                    failures: outcomes.len() - ok.len(),
                    true_positives: tp,
                    model_sizes: size,
                    avg_true_positives: avg_tp,
                    sd_true_positives: sd_tp,
                    avg_model_size: avg_size,
                    sd_model_size: sd_size,
                }
            })
            .collect();
        let label = cell.label();
        cells.push(CellReport { cell, label, censoring_mean, sis, isis });
    }
    let d = (cfg.protocol == Protocol::Table3).then(|| cfg.resolved_d());
    Ok(ProtocolReport { schema_version: REPORT_SCHEMA_VERSION, config: cfg.clone(), d, cells })
}

impl ProtocolReport {
    /// Plain-text table, one row per cell.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        let mut header = format!("{:<34} {:>6}", "cell", "cens");
        for v in &self.config.variants {
            let _ = write!(header, " {:>16}", format!("MMMS {}", v.label()));
        }
        if self.config.protocol == Protocol::Table3 {
            for v in &self.config.isis_variants {
                let _ = write!(header, " {:>14} {:>14}", format!("TP {v:?}"), format!("size {v:?}"));
            }
        }
        out.push_str(&header);
        out.push('\n');
        for c in &self.cells {
            let _ = write!(out, "{:<34} {:>6.3}", c.label, c.censoring_mean);
            for s in &c.sis {
                let _ = write!(out, " {:>16}", format!("{} ({:.0})", s.mmms, s.rsd));
            }
            for s in &c.isis {
                let _ = write!(
                    out,
                    " {:>14} {:>14}",
                    format!("{:.1} ({:.1})", s.avg_true_positives, s.sd_true_positives),
                    format!("{:.1} ({:.1})", s.avg_model_size, s.sd_model_size)
                );
            }
            out.push('\n');
        }
        out
    }
}

/// Sample quantile with linear interpolation between order statistics
/// (the default "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Interquartile range divided by 1.34.
pub fn robust_sd(values: &[f64]) -> f64 {
    (quantile(values, 0.75) - quantile(values, 0.25)) / 1.34
}

fn mean_sd(values: &[usize]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<usize>() as f64 / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_match_linear_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert!((robust_sd(&v) - 1.5 / 1.34).abs() < 1e-15);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn default_d_matches_convention() {
        assert_eq!(ProtocolConfig::new(Protocol::Table3).resolved_d(), 17);
    }

    #[test]
    fn grids_have_expected_sizes() {
        assert_eq!(ProtocolConfig::new(Protocol::Table1).cells().len(), 36);
        assert_eq!(ProtocolConfig::new(Protocol::Table2).cells().len(), 15);
        assert_eq!(ProtocolConfig::new(Protocol::Table3).cells().len(), 12);
    }

    #[test]
    fn smoke_table1_single_replicate() {
        let cfg = ProtocolConfig {
            p: 200,
            n: 100,
            replicates: 1,
            rhos: vec![0.25],
            links: vec![LinkKind::Cox],
            ..ProtocolConfig::new(Protocol::Table1)
        };
        let report = run_protocol(&cfg).unwrap();
        assert_eq!(report.cells.len(), 3);
        for c in &report.cells {
            assert_eq!(c.sis.len(), 3);
            assert!(c.sis.iter().all(|s| s.mms.len() == 1));
        }
        assert!(report.format_table().lines().count() == 4);
    }

    #[test]
    fn replicate_rejects_zero() {
        let cfg = ProtocolConfig { replicates: 0, ..ProtocolConfig::new(Protocol::Table1) };
        assert!(run_protocol(&cfg).is_err());
    }
}
