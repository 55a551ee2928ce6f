//! `detval` command line: ingestion, fusion, evaluation and reports.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use detval_core::analysis::{
    agreement_analysis, criterion_comparison, default_agreement_criteria, default_comparison_criteria,
    default_sweep_grid, generate_synthetic, per_center_report, stratify_by_size, sweep_table, threshold_sweep,
    ComparisonConfig, ComparisonMetric, MetricSpec, NoiseModel, Pooling, SizeBucket, SizeBuckets, SynthConfig,
};
use detval_core::data_io::{
    emit_plot, emit_report, load_dataset, load_predictions, load_ratings, write_predictions, Cell, PlotKind,
    Report, ReportFormat, Table,
};
use detval_core::fusion::{fuse_predictions, FusionConfig};
use detval_core::metrics::{format_tau_grid, parse_tau_grid, APConfig, ApDefinition, CountingMetric, Interpolation};
use detval_core::{AssignmentStrategy, CriterionKind, CriterionSpec, Error, EvalSet, Exec, Result};

const CRITERION_HELP: &str = "\
Criteria use the grammar kind[:tau][:unit][:strict][:center]:
  kind    box_iou | mask_iou | hull_iou | point_in_box | point_in_mask |
          point_in_hull | center_distance
  tau     threshold; overlap kinds hit when score >= tau (score > tau with
          `strict`), center_distance hits when distance <= tau
  unit    px (default) or diag (tau as a fraction of the image diagonal)
  center  box_center (default) or centroid, for center_distance
Examples: box_iou:0.5, mask_iou:0:strict, point_in_mask, center_distance:0.05:diag

Exit status: 0 success, 1 validation or configuration error, 2 I/O error.";

#[derive(Debug, Parser)]
#[command(name = "detval", version, about = "Validation of polyp detectors across centers", after_help = CRITERION_HELP)]
pub struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Output directory
    #[arg(long, global = true, env = "DETVAL_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially, 0 uses every core
    #[arg(long, short = 'j', global = true)]
    jobs: Option<usize>,
    /// TOML file with defaults for any option
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// One-to-one assignment: greedy or optimal
    #[arg(long, global = true)]
    strategy: Option<AssignmentStrategy>,
}

#[derive(Debug, Args)]
struct Inputs {
    /// Dataset JSON (images and reference annotations)
    #[arg(long)]
    refs: PathBuf,
    /// Prediction JSON
    #[arg(long)]
    preds: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare criteria (rows = metrics, columns = criteria) and report per-center variability
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        /// Localization criterion; repeat for several columns
        #[arg(long = "criterion")]
        criteria: Vec<CriterionSpec>,
        /// Comma-separated rows: sensitivity, ppv, f1, f2, ap
        #[arg(long)]
        metrics: Option<String>,
        /// Per-center metric such as f2@point_in_mask or ap@box_iou[0.5:0.05:0.95]; repeatable
        #[arg(long = "center-metric")]
        center_metrics: Vec<MetricSpec>,
        /// Drop predictions below this confidence for counting metrics
        #[arg(long)]
        cutoff: Option<f64>,
        /// pooled or per_center_mean
        #[arg(long)]
        pooling: Option<Pooling>,
    },
    /// AP as a function of the overlap threshold
    Sweep {
        #[command(flatten)]
        inputs: Inputs,
        /// Comma-separated overlap kinds
        #[arg(long)]
        criteria: Option<String>,
        /// start:step:stop or a comma list
        #[arg(long)]
        taus: Option<String>,
    },
    /// AP per reference size class and center
    Stratify {
        #[command(flatten)]
        inputs: Inputs,
        /// Overlap kind
        #[arg(long)]
        kind: Option<CriterionKind>,
        /// Single threshold for the first AP block
        #[arg(long)]
        tau: Option<f64>,
        /// Threshold grid for the averaged AP block
        #[arg(long)]
        grid: Option<String>,
        /// Largest small area in pixels
        #[arg(long)]
        small_max: Option<f64>,
        /// Largest medium area in pixels
        #[arg(long)]
        medium_max: Option<f64>,
    },
    /// NMS per model, weighted boxes fusion across models, then shrinking
    Fuse {
        /// One prediction file per ensemble member
        #[arg(long = "preds", required = true)]
        preds: Vec<PathBuf>,
        /// Dataset for id checks and box clamping
        #[arg(long)]
        refs: Option<PathBuf>,
        #[arg(long)]
        nms_iou: Option<f64>,
        #[arg(long)]
        wbf_iou: Option<f64>,
        /// Drop boxes whose weighted confidence is below this value
        #[arg(long)]
        skip: Option<f64>,
        /// Relative width/height reduction of confident boxes
        #[arg(long)]
        shrink: Option<f64>,
        /// Confidence above which boxes are shrunk
        #[arg(long)]
        shrink_conf: Option<f64>,
        /// Comma-separated member weights
        #[arg(long)]
        weights: Option<String>,
        /// Keep the fused confidence unscaled by the member count
        #[arg(long)]
        no_rescale: bool,
    },
    /// Agreement of criteria with clinical usefulness ratings
    Agreement {
        #[command(flatten)]
        inputs: Inputs,
        /// Ratings CSV (prediction_id,rating,rater_id)
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long = "criterion")]
        criteria: Vec<CriterionSpec>,
    },
    /// Write a seeded synthetic dataset, predictions and ratings
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_images: Option<usize>,
        #[arg(long)]
        n_centers: Option<usize>,
        #[arg(long)]
        n_models: Option<usize>,
        /// Perfect detector on rectangular references
        #[arg(long)]
        zero_noise: bool,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    out: Option<PathBuf>,
    jobs: Option<usize>,
    strategy: Option<AssignmentStrategy>,
    evaluate: EvaluateFile,
    sweep: SweepFile,
    stratify: StratifyFile,
    fusion: Option<FusionConfig>,
    agreement: AgreementFile,
    synth: Option<SynthConfig>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateFile {
    criteria: Option<Vec<CriterionSpec>>,
    metrics: Option<Vec<ComparisonMetric>>,
    center_metrics: Option<Vec<MetricSpec>>,
    cutoff: Option<f64>,
    pooling: Option<Pooling>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepFile {
    kinds: Option<Vec<CriterionKind>>,
    taus: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StratifyFile {
    kind: Option<CriterionKind>,
    tau: Option<f64>,
    grid: Option<String>,
    buckets: Option<SizeBuckets>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AgreementFile {
    criteria: Option<Vec<CriterionSpec>>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

struct Ctx {
    out: PathBuf,
    exec: Exec,
    strategy: AssignmentStrategy,
    file: FileConfig,
}

fn execute(cli: Cli) -> Result<()> {
    let file = load_file_config(cli.global.config.as_deref())?;
    let out = cli.global.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let jobs = cli.global.jobs.or(file.jobs).unwrap_or(0);
    let strategy = cli.global.strategy.or(file.strategy).unwrap_or_default();
    let ctx = Ctx {
        out,
        exec: if jobs == 1 { Exec::Sequential } else { Exec::Parallel },
        strategy,
        file,
    };
    if jobs == 1 {
        return dispatch(&ctx, cli.command);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| dispatch(&ctx, cli.command))
}

fn dispatch(ctx: &Ctx, command: Command) -> Result<()> {
    match command {
        Command::Evaluate {
            inputs,
            criteria,
            metrics,
            center_metrics,
            cutoff,
            pooling,
        } => evaluate(ctx, &inputs, criteria, metrics, center_metrics, cutoff, pooling),
        Command::Sweep { inputs, criteria, taus } => sweep(ctx, &inputs, criteria, taus),
        Command::Stratify {
            inputs,
            kind,
            tau,
            grid,
            small_max,
            medium_max,
        } => stratify(ctx, &inputs, kind, tau, grid, small_max, medium_max),
        Command::Fuse {
            preds,
            refs,
            nms_iou,
            wbf_iou,
            skip,
            shrink,
            shrink_conf,
            weights,
            no_rescale,
        } => {
            let mut cfg = ctx.file.fusion.clone().unwrap_or_default();
            cfg.nms_iou = nms_iou.unwrap_or(cfg.nms_iou);
            cfg.wbf_iou = wbf_iou.unwrap_or(cfg.wbf_iou);
            cfg.skip_box_thresh = skip.unwrap_or(cfg.skip_box_thresh);
            cfg.shrink_factor = shrink.unwrap_or(cfg.shrink_factor);
            cfg.shrink_conf = shrink_conf.unwrap_or(cfg.shrink_conf);
            if let Some(w) = weights {
                cfg.model_weights = parse_list(&w, "weight")?;
            }
            if no_rescale {
                cfg.score_rescale = false;
            }
            fuse(ctx, &preds, refs.as_deref(), cfg)
        }
        Command::Agreement {
            inputs,
            ratings,
            criteria,
        } => agreement(ctx, &inputs, &ratings, criteria),
        Command::Synth {
            seed,
            n_images,
            n_centers,
            n_models,
            zero_noise,
        } => {
            let mut cfg = ctx.file.synth.clone().unwrap_or_default();
            cfg.n_images = n_images.unwrap_or(cfg.n_images);
            cfg.n_centers = n_centers.unwrap_or(cfg.n_centers);
            cfg.n_models = n_models.unwrap_or(cfg.n_models);
            if zero_noise {
                cfg.noise = NoiseModel::none();
                cfg.rectangular_fraction = 1.0;
            }
            synth(ctx, seed.or(ctx.file.seed).unwrap_or(0), cfg)
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::config(format!("invalid {what} {:?}", p.trim())))
        })
        .collect()
}

fn strings<T: ToString>(xs: &[T]) -> Vec<String> {
    xs.iter().map(ToString::to_string).collect()
}

/// JSON and CSV for the report, plus the listed plots.
fn emit(ctx: &Ctx, report: &Report, stem: &str, plots: &[(PlotKind, &str)]) -> Result<()> {
    let mut written = emit_report(report, &ctx.out, stem, ReportFormat::Json)?;
    written.extend(emit_report(report, &ctx.out, stem, ReportFormat::Csv)?);
    for (kind, name) in plots {
        let p = ctx.out.join(name);
        emit_plot(report, *kind, &p)?;
        written.push(p);
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn load_inputs(inputs: &Inputs) -> Result<(detval_core::data_io::Dataset, Vec<detval_core::data_io::ScoredPrediction>)> {
    let ds = load_dataset(&inputs.refs)?;
    let preds = load_predictions(&inputs.preds, Some(&ds))?;
    Ok((ds, preds))
}

fn input_echo(inputs: &Inputs) -> serde_json::Value {
    json!({"refs": inputs.refs.display().to_string(), "preds": inputs.preds.display().to_string()})
}

/// Sensitivity, PPV, F1, F2 and AP at `c`, plus AP over the default grid for overlap kinds.
fn default_center_metrics(c: &CriterionSpec) -> Vec<MetricSpec> {
    let mut out: Vec<MetricSpec> = [
        CountingMetric::Sensitivity,
        CountingMetric::Ppv,
        CountingMetric::FBeta(1.0),
        CountingMetric::FBeta(2.0),
    ]
    .into_iter()
    .map(|metric| MetricSpec::Counting { metric, criterion: *c })
    .collect();
    out.push(MetricSpec::Ap(ApDefinition {
        criterion: *c,
        grid: None,
    }));
    if c.kind.is_overlap() {
        let grid = APConfig::default().tau_grid;
        out.push(MetricSpec::Ap(ApDefinition {
            criterion: c.with_tau(grid[0]),
            grid: Some(grid),
        }));
    }
    out
}

const MATCHING_NOTE: &str = "one-to-one matching per image; AP uses 101-point interpolation over the confidence-ranked list";

#[allow(clippy::too_many_arguments)]
fn evaluate(
    ctx: &Ctx,
    inputs: &Inputs,
    criteria: Vec<CriterionSpec>,
    metrics: Option<String>,
    center_metrics: Vec<MetricSpec>,
    cutoff: Option<f64>,
    pooling: Option<Pooling>,
) -> Result<()> {
    let f = &ctx.file.evaluate;
    let criteria = if !criteria.is_empty() {
        criteria
    } else {
        f.criteria.clone().unwrap_or_else(default_comparison_criteria)
    };
    let metrics = match metrics {
        Some(m) => parse_list(&m, "metric")?,
        None => f.metrics.clone().unwrap_or_else(ComparisonMetric::defaults),
    };
    let cfg = ComparisonConfig {
        metrics,
        confidence_cutoff: cutoff.or(f.cutoff),
        pooling: pooling.or(f.pooling).unwrap_or_default(),
    };
    let center_metrics = if !center_metrics.is_empty() {
        center_metrics
    } else {
        f.center_metrics.clone().unwrap_or_else(|| default_center_metrics(&criteria[0]))
    };

    let (ds, preds) = load_inputs(inputs)?;
    let set = EvalSet::new(&ds, &preds)?.with_exec(ctx.exec).with_strategy(ctx.strategy);
    let table = criterion_comparison(&set, &criteria, &cfg)?;
    let centers = per_center_report(&set, &center_metrics)?;

    let mut report = Report::new(
        "evaluate",
        json!({
            "inputs": input_echo(inputs),
            "strategy": ctx.strategy,
            "criteria": strings(&criteria),
            "metrics": strings(&cfg.metrics),
            "confidence_cutoff": cfg.confidence_cutoff,
            "pooling": cfg.pooling,
            "center_metrics": strings(&center_metrics),
        }),
    );
    report.notes.insert("matching".into(), MATCHING_NOTE.into());
    report.notes.insert(
        "confidence_cutoff".into(),
        "applies to the counting metrics of the criterion comparison; per-center metrics use every prediction".into(),
    );
    report.tables.push(table.to_table());
    report.tables.extend(centers.to_tables());
    emit(ctx, &report, "evaluate", &[(PlotKind::Boxplot, "evaluate_boxplot.svg")])
}

fn sweep(ctx: &Ctx, inputs: &Inputs, criteria: Option<String>, taus: Option<String>) -> Result<()> {
    let f = &ctx.file.sweep;
    let kinds: Vec<CriterionKind> = match criteria {
        Some(s) => parse_list(&s, "criterion kind")?,
        None => f.kinds.clone().unwrap_or_else(|| CriterionKind::OVERLAP.to_vec()),
    };
    let taus = match taus.or_else(|| f.taus.clone()) {
        Some(s) => parse_tau_grid(&s)?,
        None => default_sweep_grid(),
    };
    let (ds, preds) = load_inputs(inputs)?;
    let set = EvalSet::new(&ds, &preds)?.with_exec(ctx.exec).with_strategy(ctx.strategy);
    let curves = threshold_sweep(&set, &kinds, &taus)?;
    let mut report = Report::new(
        "sweep",
        json!({
            "inputs": input_echo(inputs),
            "strategy": ctx.strategy,
            "kinds": strings(&kinds),
            "taus": format_tau_grid(&taus),
        }),
    );
    report.notes.insert("matching".into(), MATCHING_NOTE.into());
    report.tables.push(sweep_table(&curves));
    emit(ctx, &report, "sweep", &[(PlotKind::Curve, "sweep.svg")])
}

fn stratify(
    ctx: &Ctx,
    inputs: &Inputs,
    kind: Option<CriterionKind>,
    tau: Option<f64>,
    grid: Option<String>,
    small_max: Option<f64>,
    medium_max: Option<f64>,
) -> Result<()> {
    let f = &ctx.file.stratify;
    let kind = kind.or(f.kind).unwrap_or(CriterionKind::BoxIou);
    let tau = tau.or(f.tau).unwrap_or(0.5);
    let grid = match grid.or_else(|| f.grid.clone()) {
        Some(g) => parse_tau_grid(&g)?,
        None => APConfig::default().tau_grid,
    };
    let mut buckets = f.buckets.unwrap_or_default();
    buckets.small_max_area = small_max.unwrap_or(buckets.small_max_area);
    buckets.medium_max_area = medium_max.unwrap_or(buckets.medium_max_area);
    let range = APConfig {
        interpolation: Interpolation::Coco101Point,
        tau_grid: grid,
    };

    let (ds, preds) = load_inputs(inputs)?;
    let set = EvalSet::new(&ds, &preds)?.with_exec(ctx.exec).with_strategy(ctx.strategy);
    let table = stratify_by_size(&set, &buckets, kind, tau, &range)?;
    let mut report = Report::new(
        "stratify",
        json!({
            "inputs": input_echo(inputs),
            "strategy": ctx.strategy,
            "kind": kind,
            "single_tau": tau,
            "grid": format_tau_grid(&range.tau_grid),
            "buckets": buckets,
        }),
    );
    report.notes.insert(
        "size_semantics".into(),
        "reference size = foreground pixel count; per bucket, predictions matched to out-of-bucket references \
         and unmatched predictions with out-of-bucket box area are ignored (COCO-style)"
            .into(),
    );
    report.notes.insert(
        "summary_rows".into(),
        "all_centers = mean over centers where defined (n = total frames); sd = sample SD over centers".into(),
    );
    report.tables.extend(table.to_tables());
    emit(ctx, &report, "stratify", &[])
}

fn fuse(ctx: &Ctx, files: &[PathBuf], refs: Option<&Path>, cfg: FusionConfig) -> Result<()> {
    let ds = refs.map(load_dataset).transpose()?;
    let members = files
        .iter()
        .map(|p| load_predictions(p, ds.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_predictions(&members, &cfg, ctx.exec)?;
    let fused_path = ctx.out.join("fused.json");
    write_predictions(&fused, &fused_path)?;
    println!("{}", fused_path.display());

    let mut t = Table::new("fusion", ["source", "n_predictions", "n_images"]);
    let n_images = |ps: &[detval_core::data_io::ScoredPrediction]| {
        let mut ids: Vec<&str> = ps.iter().map(|p| p.image_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    for (k, m) in members.iter().enumerate() {
        t.push(vec![format!("model_{k}").into(), m.len().into(), n_images(m).into()]);
    }
    t.push(vec!["fused".into(), fused.len().into(), n_images(&fused).into()]);
    let mut report = Report::new(
        "fuse",
        json!({
            "inputs": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "refs": refs.map(|p| p.display().to_string()),
            "fusion": cfg,
        }),
    );
    report.notes.insert(
        "pipeline".into(),
        "NMS per member, weighted boxes fusion across members, then shrinking of boxes above shrink_conf".into(),
    );
    report.tables.push(t);
    emit(ctx, &report, "fuse", &[])
}

fn agreement(ctx: &Ctx, inputs: &Inputs, ratings: &Path, criteria: Vec<CriterionSpec>) -> Result<()> {
    let criteria = if !criteria.is_empty() {
        criteria
    } else {
        ctx.file.agreement.criteria.clone().unwrap_or_else(default_agreement_criteria)
    };
    let (ds, preds) = load_inputs(inputs)?;
    let rated = load_ratings(ratings, Some(&preds))?;
    let rep = agreement_analysis(&ds, &preds, &rated, &criteria, ctx.exec)?;
    let mut report = Report::new(
        "agreement",
        json!({
            "inputs": input_echo(inputs),
            "ratings": ratings.display().to_string(),
            "criteria": strings(&criteria),
        }),
    );
    report.notes.insert(
        "verdict".into(),
        "a rated prediction meets a criterion if it hits its best-scoring reference on the image".into(),
    );
    report.tables.push(rep.to_table());
    emit(ctx, &report, "agreement", &[(PlotKind::Bars, "agreement.svg")])
}

fn synth(ctx: &Ctx, seed: u64, cfg: SynthConfig) -> Result<()> {
    let data = generate_synthetic(seed, &cfg)?;
    for p in data.write(&ctx.out)? {
        println!("{}", p.display());
    }
    let buckets = SizeBuckets::default();
    let mut t = Table::new(
        "synth",
        ["center", "n", "phi", "n_references", "small", "medium", "large", "n_predictions"],
    );
    let set = EvalSet::new(&data.dataset, &data.predictions)?.with_exec(Exec::Sequential);
    for c in set.centers() {
        let s = set.for_center(c);
        let mut sizes = [0u64; 3];
        for v in s.images() {
            for r in &v.refs {
                let b = buckets.classify(r.area() as f64);
                sizes[SizeBucket::ALL.iter().position(|x| *x == b).expect("bucket")] += 1;
            }
        }
        t.push(vec![
            c.into(),
            s.n_images().into(),
            Cell::from(s.prevalence()),
            s.total_references().into(),
            sizes[0].into(),
            sizes[1].into(),
            sizes[2].into(),
            s.n_predictions().into(),
        ]);
    }
    let mut report = Report::new("synth", json!({"seed": seed, "synth": cfg}));
    report.tables.push(t);
    emit(ctx, &report, "synth", &[])
}
