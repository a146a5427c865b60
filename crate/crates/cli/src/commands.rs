use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use hazscreen_core::screening::{RecruitCount, RecruitPool};
use hazscreen_core::simgen::protocol::table1_scenario;
use hazscreen_core::simgen::{CorrelationCase, LinkKind, Protocol, ProtocolConfig, ProtocolReport};
use hazscreen_core::{
    build_subset, compute_fast, cv_tune, fit_lambda, fit_path, isis as run_isis, load_dataset, select_by_pbic,
    sis as run_sis, DataFormat, Error, IsisOptions, IsisVariant, Keep, PathOptions, PenaltyKind, PenaltySpec, Result,
    SurvivalDatasetF64, Tuner, Variant,
};
use serde::{Deserialize, Serialize};

/// Version of the JSON documents written by `isis` and `fit`.
const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Args, Serialize)]
pub struct SisArgs {
    /// Dataset (`time,status,features...` CSV, or `.bin`/`.hzs` binary).
    #[arg(long)]
    pub input: PathBuf,
    /// Statistic: vanilla, z, ly, loss or loss-literal.
    #[arg(long, default_value = "loss")]
    pub variant: String,
    /// Keep the k top-ranked features (default ⌊n / ln n⌋).
    #[arg(long, conflicts_with = "threshold")]
    pub top_k: Option<usize>,
    /// Keep features whose |score| exceeds this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Ranked CSV output (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IsisArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Scoring: ly, z or loss.
    #[arg(long, default_value = "ly")]
    pub variant: String,
    /// Recruited-set size (default ⌊n / ln n / 3⌋).
    #[arg(long)]
    pub d: Option<usize>,
    /// Maximum number of iterations.
    #[arg(long, default_value_t = 5)]
    pub rmax: usize,
    /// Tuning of the selection step: pbic or cv.
    #[arg(long, default_value = "pbic")]
    pub tuner: String,
    /// Folds for `--tuner cv`.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Seed for the fold assignment.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// SCAD shape parameter.
    #[arg(long, default_value_t = 3.7)]
    pub scad_a: f64,
    /// Re-recruit d − |A_r| candidates instead of d − |B_r|.
    #[arg(long)]
    pub kr_literal: bool,
    /// Let features dropped by the selection step be re-recruited.
    #[arg(long)]
    pub recruit_dropped: bool,
    /// JSON trace output (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated 1-based feature indices.
    #[arg(long, value_delimiter = ',', required = true)]
    pub subset: Vec<usize>,
    /// none, lasso, adaptive-lasso or os-scad.
    #[arg(long, default_value = "none")]
    pub penalty: String,
    #[arg(long, default_value_t = 3.7)]
    pub scad_a: f64,
    /// Smallest λ on the automatic grid relative to λ_max.
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_min_ratio: f64,
    #[arg(long, default_value_t = 100)]
    pub n_lambda: usize,
    /// Tuning of penalized fits: pbic or cv.
    #[arg(long, default_value = "pbic")]
    pub tuner: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// JSON output (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// table1, table2 or table3.
    #[arg(long, required_unless_present = "config")]
    pub protocol: Option<String>,
    /// Rerun the configuration stored in a report (or a bare config JSON).
    #[arg(long, conflicts_with = "protocol")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restrict to these links (logit, cox, log).
    #[arg(long, value_delimiter = ',')]
    pub link: Vec<String>,
    /// Restrict the table3 protocol to these correlation cases (a, b, c, d).
    #[arg(long, value_delimiter = ',')]
    pub case: Vec<String>,
    /// Recruited-set size for the table3 protocol.
    #[arg(long)]
    pub d: Option<usize>,
    /// Full-scale grid (p = 20 000, 100 replicates).
    #[arg(long)]
    pub full_scale: bool,
    /// JSON report output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 20_000)]
    pub p: usize,
    /// Timed repetitions; the fastest is reported.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn load(path: &Path) -> Result<SurvivalDatasetF64> {
    if !path.is_file() {
        return Err(Error::InvalidArgument(format!("input file {} not found", path.display())));
    }
    load_dataset(path, DataFormat::from_path(path))
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T> {
    s.parse()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes JSON to `out`, or to standard output.
fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Human-readable lines go to standard error when the artifact itself is on
/// standard output.
fn summary(out: Option<&Path>, line: &str) {
    if out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn feature_name(ds: &SurvivalDatasetF64, j: usize) -> String {
    ds.names().get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1))
}

#[derive(Debug, Serialize)]
struct Feature {
    /// 1-based column index.
    feature: usize,
    name: String,
}

fn features(ds: &SurvivalDatasetF64, idx: &[usize]) -> Vec<Feature> {
    idx.iter().map(|&j| Feature { feature: j + 1, name: feature_name(ds, j) }).collect()
}

#[derive(Debug, Serialize)]
struct RunEcho<'a, A> {
    command: &'a str,
    threads: usize,
    args: &'a A,
}

pub fn sis(args: SisArgs, threads: usize) -> Result<()> {
    let ds = load(&args.input)?;
    let variant: Variant = parse(&args.variant)?;
    let keep = match (args.top_k, args.threshold) {
        (_, Some(t)) => Keep::Threshold(t),
        (Some(k), None) => Keep::TopK(k),
        (None, None) => Keep::TopK(hazscreen_core::screening::default_keep(ds.n())),
    };
    let res = run_sis(&ds, variant, keep)?;
    let out = args.out.as_deref();
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["rank", "feature", "name", variant.label()]).map_err(Error::from)?;
    for (rank, &j) in res.kept.iter().enumerate() {
        w.write_record([(rank + 1).to_string(), (j + 1).to_string(), feature_name(&ds, j), res.scores[j].to_string()])?;
    }
    w.flush()?;
    if let Some(path) = out {
        // the ranked table is plain CSV, so the run configuration goes next to it
        let echo = RunEcho { command: "sis", threads, args: &args };
        emit_json(&echo, Some(&path.with_extension("run.json")))?;
    }
    summary(
        out,
        &format!(
            "sis: n = {}, p = {}, events = {}; kept {} features by {} (top: {})",
            ds.n(),
            ds.p(),
            ds.n_events(),
            res.kept.len(),
            variant.label(),
            res.kept.iter().take(5).map(|&j| feature_name(&ds, j)).collect::<Vec<_>>().join(", ")
        ),
    );
    Ok(())
}

fn tuner(name: &str, folds: usize, seed: u64) -> Result<Tuner> {
    match name.to_ascii_lowercase().as_str() {
        "pbic" => Ok(Tuner::Pbic),
        "cv" => Ok(Tuner::Cv { folds, seed }),
        other => Err(Error::InvalidArgument(format!("unknown tuner {other:?} (expected pbic or cv)"))),
    }
}

#[derive(Debug, Serialize)]
struct IsisIterationOut {
    r: usize,
    recruited: Vec<usize>,
    selected: Vec<usize>,
    beta: Vec<f64>,
    lambda: f64,
    new_candidates: Vec<(usize, f64)>,
    collinear: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct SelectedFeature {
    #[serde(flatten)]
    feature: Feature,
    beta: f64,
}

#[derive(Debug, Serialize)]
struct IsisOut<'a> {
    schema_version: u32,
    config: RunEcho<'a, IsisArgs>,
    n: usize,
    p: usize,
    d: usize,
    k0: usize,
    termination: hazscreen_core::Termination,
    /// All feature indices below are 1-based.
    selected: Vec<SelectedFeature>,
    iterations: Vec<IsisIterationOut>,
}

pub fn isis(args: IsisArgs, threads: usize) -> Result<()> {
    let ds = load(&args.input)?;
    let variant: IsisVariant = parse(&args.variant)?;
    let d = args.d.unwrap_or_else(|| {
        let n = ds.n() as f64;
        ((n / n.ln() / 3.0).floor() as usize).max(1)
    });
    let mut opts = IsisOptions::new(variant, d);
    opts.r_max = args.rmax;
    opts.tuner = tuner(&args.tuner, args.folds, args.seed)?;
    opts.scad_a = args.scad_a;
    if args.kr_literal {
        opts.recruit_count = RecruitCount::MinusRecruited;
    }
    if args.recruit_dropped {
        opts.recruit_pool = RecruitPool::OutsideSelected;
    }
    let trace = run_isis(&ds, &opts)?;
    let one = |v: &[usize]| v.iter().map(|j| j + 1).collect::<Vec<_>>();
    let doc = IsisOut {
        schema_version: SCHEMA_VERSION,
        config: RunEcho { command: "isis", threads, args: &args },
        n: ds.n(),
        p: ds.p(),
        d,
        k0: trace.k0,
        termination: trace.termination,
        selected: trace
            .final_set
            .iter()
            .zip(&trace.final_beta)
            .map(|(&j, &beta)| SelectedFeature {
                feature: Feature { feature: j + 1, name: feature_name(&ds, j) },
                beta,
            })
            .collect(),
        iterations: trace
            .iterations
            .iter()
            .map(|it| IsisIterationOut {
                r: it.r,
                recruited: one(&it.recruited),
                selected: one(&it.selected),
                beta: it.beta.clone(),
                lambda: it.lambda,
                new_candidates: it.new_candidates.iter().map(|&(j, s)| (j + 1, s)).collect(),
                collinear: one(&it.collinear),
            })
            .collect(),
    };
    let out = args.out.as_deref();
    emit_json(&doc, out)?;
    summary(
        out,
        &format!(
            "isis: {} iterations ({:?}); selected {} of d = {}: {}",
            trace.iterations.len(),
            trace.termination,
            trace.final_set.len(),
            d,
            trace.final_set.iter().map(|&j| feature_name(&ds, j)).collect::<Vec<_>>().join(", ")
        ),
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct Coefficient {
    #[serde(flatten)]
    feature: Feature,
    beta: f64,
    se: f64,
    abs_z: f64,
}

#[derive(Debug, Serialize)]
struct PenalizedOut {
    penalty: PenaltyKind,
    tuner: String,
    lambda: f64,
    /// Selected features with their penalized coefficients.
    active: Vec<SelectedFeature>,
    loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pbic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    kappa_fallback: bool,
    lambdas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pbic_path: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv_loss: Option<Vec<f64>>,
    diag_scale: f64,
}

#[derive(Debug, Serialize)]
struct FitOut<'a> {
    schema_version: u32,
    config: RunEcho<'a, FitArgs>,
    n: usize,
    subset: Vec<Feature>,
    /// Unpenalized coefficients with sandwich standard errors.
    coefficients: Vec<Coefficient>,
    loss: f64,
    condition: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    penalized: Option<PenalizedOut>,
}

pub fn fit(args: FitArgs, threads: usize) -> Result<()> {
    let ds = load(&args.input)?;
    let mut subset = Vec::with_capacity(args.subset.len());
    for &j in &args.subset {
        if j == 0 || j > ds.p() {
            return Err(Error::InvalidArgument(format!("subset index {j} outside 1..={}", ds.p())));
        }
        if subset.contains(&(j - 1)) {
            return Err(Error::InvalidArgument(format!("subset index {j} listed twice")));
        }
        subset.push(j - 1);
    }
    let sm = build_subset(&ds, &subset)?;
    let unpen = sm.solve()?;
    let coefficients = subset
        .iter()
        .enumerate()
        .map(|(l, &j)| Coefficient {
            feature: Feature { feature: j + 1, name: feature_name(&ds, j) },
            beta: unpen.beta[l],
            se: unpen.se[l],
            abs_z: unpen.z[l],
        })
        .collect();

    let penalized = match args.penalty.to_ascii_lowercase().as_str() {
        "none" => None,
        name => {
            let kind: PenaltyKind = parse(name)?;
            let diag_scale = compute_fast(&ds).diag_scale();
            let spec = PenaltySpec::new(kind).with_a(args.scad_a).with_diag_scale(diag_scale);
            let opts =
                PathOptions { lambda_min_ratio: args.lambda_min_ratio, n_lambda: args.n_lambda, ..Default::default() };
            let mut path = fit_path(&sm, &spec, &opts)?;
            let lambdas: Vec<f64> = path.iter().map(|f| f.lambda).collect();
            let (chosen, pbic, kappa, kappa_fallback, pbic_path, cv_loss) =
                match tuner(&args.tuner, args.folds, args.seed)? {
                    Tuner::Pbic => {
                        let sel = select_by_pbic(&sm, &mut path)?;
                        let scores = path.iter().map(|f| f.pbic.unwrap_or(f64::NAN)).collect();
                        (
                            path[sel.index].clone(),
                            path[sel.index].pbic,
                            Some(sel.kappa),
                            sel.kappa_fallback,
                            Some(scores),
                            None,
                        )
                    }
                    Tuner::Cv { folds, seed } => {
                        let opts = PathOptions { lambdas: Some(lambdas.clone()), ..opts.clone() };
                        let cv = cv_tune(&ds, &subset, &spec, folds, seed, &opts)?;
                        let fit = fit_lambda(&sm, &spec, cv.lambda_hat, None, &opts)?;
                        (fit, None, None, false, None, Some(cv.cv_loss))
                    }
                };
            if !chosen.converged {
                return Err(Error::NonConvergence { iterations: chosen.iterations, lambda: chosen.lambda });
            }
            Some(PenalizedOut {
                penalty: kind,
                tuner: args.tuner.to_ascii_lowercase(),
                lambda: chosen.lambda,
                active: chosen
                    .active
                    .iter()
                    .map(|&l| SelectedFeature {
                        feature: Feature { feature: subset[l] + 1, name: feature_name(&ds, subset[l]) },
                        beta: chosen.beta[l],
                    })
                    .collect(),
                loss: chosen.loss,
                pbic,
                kappa,
                kappa_fallback,
                lambdas,
                pbic_path,
                cv_loss,
                diag_scale,
            })
        }
    };

    let doc = FitOut {
        schema_version: SCHEMA_VERSION,
        config: RunEcho { command: "fit", threads, args: &args },
        n: ds.n(),
        subset: features(&ds, &subset),
        coefficients,
        loss: unpen.loss,
        condition: unpen.condition,
        penalized,
    };
    let out = args.out.as_deref();
    emit_json(&doc, out)?;
    let mut line = format!("fit: {} features, loss {:.6}", subset.len(), unpen.loss);
    if let Some(p) = &doc.penalized {
        line.push_str(&format!("; {} kept {} at lambda {:.4e}", args.penalty, p.active.len(), p.lambda));
    }
    summary(out, &line);
    Ok(())
}

/// A report file, or a bare configuration.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ConfigSource {
    Report(Box<ProtocolReport>),
    Config(Box<ProtocolConfig>),
}

fn read_config(path: &Path) -> Result<ProtocolConfig> {
    let text = std::fs::read_to_string(path)?;
    Ok(match serde_json::from_str::<ConfigSource>(&text)? {
        ConfigSource::Report(r) => r.config,
        ConfigSource::Config(c) => *c,
    })
}

pub fn simulate(args: SimulateArgs, threads: usize) -> Result<()> {
    let mut cfg = match (&args.config, &args.protocol) {
        (Some(path), _) => read_config(path)?,
        (None, Some(name)) => {
            let cfg = ProtocolConfig::new(parse::<Protocol>(name)?);
            if args.full_scale {
                cfg.full_scale()
            } else {
                cfg
            }
        }
        (None, None) => return Err(Error::InvalidArgument("either --protocol or --config is required".into())),
    };
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(r) = args.reps {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.d.is_some() {
        cfg.d = args.d;
    }
    if !args.link.is_empty() {
        cfg.links = args.link.iter().map(|s| parse::<LinkKind>(s)).collect::<Result<_>>()?;
    }
    if !args.case.is_empty() {
        cfg.cases = args.case.iter().map(|s| parse::<CorrelationCase>(s)).collect::<Result<_>>()?;
    }
    let start = Instant::now();
    let report = hazscreen_core::simgen::run_protocol(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    if let Some(path) = &args.out {
        emit_json(&report, Some(path))?;
    }
    print!("{}", report.format_table());
    println!(
        "{} cells x {} replicates, seed {}, {} threads, {:.1} s",
        report.cells.len(),
        cfg.replicates,
        cfg.seed,
        threads,
        secs
    );
    Ok(())
}

pub fn bench(args: BenchArgs, threads: usize) -> Result<()> {
    if args.reps == 0 {
        return Err(Error::InvalidArgument("--reps must be at least 1".into()));
    }
    let sc = table1_scenario(args.n, args.p, LinkKind::Logit, 0.25, 3.min(args.p), args.seed);
    let draw = sc.generate(0)?;
    let ds = draw.dataset;
    let mut best = f64::INFINITY;
    let mut checksum = 0.0;
    for _ in 0..args.reps {
        let start = Instant::now();
        let fs = compute_fast(&ds);
        best = best.min(start.elapsed().as_secs_f64());
        checksum = fs.d.sum();
    }
    let cells = (args.n * args.p) as f64;
    println!(
        "compute_fast n = {} p = {}: best of {} runs {:.4} s on {} threads ({:.1} M subject-features/s, {:.0} features/s); checksum {:.6e}",
        args.n,
        args.p,
        args.reps,
        best,
        threads,
        cells / best / 1e6,
        args.p as f64 / best,
        checksum
    );
    Ok(())
}
