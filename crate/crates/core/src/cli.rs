//! Command-line front end.
//!
//! Every subcommand produces one structured record (a JSON document) and a
//! human table; `--format` picks which is printed. `--manifest` writes a
//! manifest that `replay` turns back into a byte-identical record.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::division::{convexity_check, differential_vectors, locus_angles, shattering_check, Divider, InputDomain};
use crate::error::{Error, Result};
use crate::fusion::{compare_strategies, FusionExperimentConfig};
use crate::io::{
    read_feature_set, read_head, read_json, read_point_clouds, read_ratio_table, write_feature_set, write_head, write_text,
    ExperimentManifest,
};
use crate::metrics::{
    distance_matrix, div_statistic, knn_angular_eval, metrics_report, pearson, zscore, IntraDivisor, Subsample,
};
use crate::sensitivity::{linspace, response_surface, sensitivity, BiasHandling};
use crate::toytrain::{export_features, make_synthetic_dataset, train, TrainJob};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Record,
}

#[derive(Debug, Parser)]
#[command(name = "featspace", version, about = "Geometry of the pre-softmax feature space")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Write a replayable manifest of this run.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Differential vectors, locus angles, region membership and convexity.
    Divide(DivideArgs),
    /// Softmax partials w.r.t. feature norm and in-plane angle.
    Sensitivity(SensitivityArgs),
    /// z and S grids over (θ, R) in the plane of variations.
    Surface(SurfaceArgs),
    /// Centrality, separability and their test/train ratios.
    Metrics(MetricsArgs),
    /// Leave-one-out k-NN agreement under the cosine distance.
    Knn(KnnArgs),
    /// Point-cloud part diversity.
    Div(DivArgs),
    /// Pearson correlation of C_R·S_R with L_R.
    Correlate(CorrelateArgs),
    /// Train the toy MLP.
    Train(TrainArgs),
    /// Compare the fusion data-split strategies.
    Fusion(FusionArgs),
    /// VC-dimension desk check for affine separators.
    Shatter(ShatterArgs),
    /// Re-run a manifest.
    Replay(ReplayArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Divide(_) => "divide",
            Command::Sensitivity(_) => "sensitivity",
            Command::Surface(_) => "surface",
            Command::Metrics(_) => "metrics",
            Command::Knn(_) => "knn",
            Command::Div(_) => "div",
            Command::Correlate(_) => "correlate",
            Command::Train(_) => "train",
            Command::Fusion(_) => "fusion",
            Command::Shatter(_) => "shatter",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Unconstrained,
    Nonnegative,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DivideArgs {
    #[arg(long)]
    pub head: PathBuf,
    /// Feature file whose rows are assigned to class loci.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Same-region pairs for the convexity check (0 skips it).
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = Domain::Unconstrained)]
    pub domain: Domain,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Drop a head bias instead of refusing it.
    #[arg(long)]
    pub fold_bias: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SurfaceArgs {
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Row of the feature file to analyse.
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub theta_min: f64,
    #[arg(long, default_value_t = std::f64::consts::PI, allow_negative_numbers = true)]
    pub theta_max: f64,
    #[arg(long, default_value_t = 91)]
    pub theta_steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub radius_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub radius_max: f64,
    #[arg(long, default_value_t = 50)]
    pub radius_steps: usize,
    #[arg(long)]
    pub fold_bias: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Divide intra-class sums by N(N-1) instead of N².
    #[arg(long)]
    pub exact_mean: bool,
    /// Known L_R, carried into the record.
    #[arg(long)]
    pub loss_ratio: Option<f64>,
    /// Also emit class-sorted cosine-distance matrices.
    #[arg(long)]
    pub distance_matrix: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KnnArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Second split; the record then carries the accuracy gap.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31, 33, 35, 37, 39])]
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DivArgs {
    #[arg(long)]
    pub points: PathBuf,
    /// Part class; every class present when omitted.
    #[arg(long)]
    pub class: Option<usize>,
    /// Evaluate on a seeded fraction of the instances.
    #[arg(long)]
    pub subsample: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CorrelateArgs {
    /// `[group,]name,c_r,s_r,l_r` table.
    #[arg(long)]
    pub table: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// JSON train job (dataset, model, train).
    #[arg(long)]
    pub config: PathBuf,
    /// Write train/test features and the head here.
    #[arg(long)]
    pub export_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FusionArgs {
    /// JSON fusion experiment.
    #[arg(long)]
    pub config: PathBuf,
    /// Number of consecutive seeds, starting at `--seed` (or the config seed).
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ShatterArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(id = "replay_manifest", value_name = "MANIFEST")]
    pub manifest: PathBuf,
}

/// Result of one subcommand.
pub struct Outcome {
    pub record: Value,
    pub table: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Outcome {
    fn new(record: Value, table: String) -> Self {
        Self { record, table, inputs: Vec::new(), outputs: Vec::new() }
    }

    fn reading(mut self, paths: impl IntoIterator<Item = PathBuf>) -> Self {
        self.inputs.extend(paths);
        self
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("records serialize")
}

/// Runs one command and returns its outcome. Replays resolve recursively.
pub fn execute(command: &Command, seed: Option<u64>) -> Result<Outcome> {
    match command {
        Command::Divide(a) => divide(a, seed),
        Command::Sensitivity(a) => run_sensitivity(a),
        Command::Surface(a) => surface(a),
        Command::Metrics(a) => metrics(a),
        Command::Knn(a) => knn(a),
        Command::Div(a) => div(a, seed),
        Command::Correlate(a) => correlate(a),
        Command::Train(a) => run_train(a, seed),
        Command::Fusion(a) => fusion(a, seed),
        Command::Shatter(a) => shatter(a, seed),
        Command::Replay(a) => {
            let m = ExperimentManifest::load(&a.manifest)?;
            let cmd: Command = serde_json::from_value(json!({"command": m.command, "args": m.params}))
                .map_err(|source| Error::Json { path: a.manifest.clone(), source })?;
            if matches!(cmd, Command::Replay(_)) {
                return Err(Error::BadSpec("a manifest cannot replay another manifest".into()));
            }
            execute(&cmd, m.seeds.first().copied())
        }
    }
}

fn divide(a: &DivideArgs, seed: Option<u64>) -> Result<Outcome> {
    let head = read_head(&a.head)?;
    let diffs = differential_vectors(&head)?;
    let angles = locus_angles(&head).ok();
    let domain = match a.domain {
        Domain::Unconstrained => InputDomain::Unconstrained,
        Domain::Nonnegative => InputDomain::NonNegative,
    };
    let mut inputs = vec![a.head.clone()];
    let regions = match &a.features {
        Some(path) => {
            inputs.push(path.clone());
            let set = read_feature_set(path, None)?;
            let divider = Divider::new(&head)?.with_domain(domain);
            let rows: Vec<Value> = set
                .vectors()
                .iter()
                .map(|v| {
                    let mut e = v.clone();
                    if head.has_bias() {
                        e.push(1.0);
                    }
                    match divider.region_of(&e) {
                        Ok(c) => json!({"class": c}),
                        Err(Error::BoundaryTie(t)) => json!({"tie": t}),
                        Err(e) => json!({"error": e.to_string()}),
                    }
                })
                .collect();
            Some(rows)
        }
        None => None,
    };
    let convexity = if a.samples > 0 { Some(convexity_check(&head, a.samples, seed.unwrap_or(0), domain)?) } else { None };

    let mut table = String::new();
    writeln!(table, "classes: {}", head.n_classes()).unwrap();
    writeln!(table, "differential vectors: {}", diffs.count()).unwrap();
    for (i, j, w) in diffs.pairs() {
        writeln!(table, "  w_{i}{j} = {w:?}").unwrap();
    }
    if let Some(r) = &angles {
        for c in &r.classes {
            writeln!(table, "class {} locus angles: mean {:.4} deg, std {:.4}", c.class, c.mean, c.std).unwrap();
        }
    }
    if let Some(c) = &convexity {
        writeln!(table, "convexity: {} pairs, {} interior points, {} violations", c.pairs, c.interior_points, c.violations)
            .unwrap();
    }
    if let Some(r) = &regions {
        writeln!(table, "regions: {}", Value::Array(r.clone())).unwrap();
    }
    let record = json!({
        "n_classes": head.n_classes(),
        "differential_count": diffs.count(),
        "differentials": diffs.pairs().iter().map(|(i, j, w)| json!({"i": i, "j": j, "w": w})).collect::<Vec<_>>(),
        "locus_angles": angles,
        "convexity": convexity,
        "regions": regions,
    });
    Ok(Outcome::new(record, table).reading(inputs))
}

fn bias_mode(fold: bool) -> BiasHandling {
    if fold {
        BiasHandling::FoldOut
    } else {
        BiasHandling::Reject
    }
}

fn run_sensitivity(a: &SensitivityArgs) -> Result<Outcome> {
    let head = read_head(&a.head)?;
    let set = read_feature_set(&a.features, None)?;
    let mut table = String::from("row  class  S_i        dS_i/dR      dS_i/dθ\n");
    let mut rows = Vec::new();
    for (r, v) in set.vectors().iter().enumerate() {
        let res = sensitivity(v, &head, bias_mode(a.fold_bias))?;
        let i = res.prevailing;
        let dt = res.d_theta.as_ref().map_or("undefined".to_string(), |d| format!("{:+.4e}", d[i]));
        writeln!(table, "{r:<4} {i:<6} {:<10.6} {:+.4e}  {dt}", res.probabilities[i], res.d_radius[i]).unwrap();
        rows.push(json!({
            "row": r,
            "prevailing": i,
            "probabilities": res.probabilities,
            "d_radius": res.d_radius,
            "d_theta": res.d_theta,
            "radius": res.radius,
            "theta": res.theta,
        }));
    }
    Ok(Outcome::new(json!({ "rows": rows }), table).reading([a.head.clone(), a.features.clone()]))
}

fn surface(a: &SurfaceArgs) -> Result<Outcome> {
    let head = read_head(&a.head)?;
    let set = read_feature_set(&a.features, None)?;
    let v = set.vectors().get(a.row).ok_or_else(|| Error::BadSpec(format!("row {} out of range", a.row)))?;
    let s = response_surface(
        v,
        &head,
        linspace(a.theta_min, a.theta_max, a.theta_steps),
        linspace(a.radius_min, a.radius_max, a.radius_steps),
        bias_mode(a.fold_bias),
    )?;
    let mut table = String::new();
    writeln!(table, "prevailing class {}, θ_i = {:.6} rad, R = {:.6}", s.prevailing, s.plane.theta, s.plane.radius).unwrap();
    for p in &s.projections {
        writeln!(table, "  class {}: ‖w∥‖ = {:.6}, φ = {:+.6}", p.class_index, p.norm_parallel, p.phase).unwrap();
    }
    writeln!(table, "grid {} θ × {} R; use --format record for the values", s.theta_grid.len(), s.radius_grid.len()).unwrap();
    Ok(Outcome::new(to_value(&s), table).reading([a.head.clone(), a.features.clone()]))
}

fn metrics(a: &MetricsArgs) -> Result<Outcome> {
    let train = read_feature_set(&a.train, None)?;
    let test = read_feature_set(&a.test, Some(train.class_names()))?;
    let divisor = if a.exact_mean { IntraDivisor::ExactMean } else { IntraDivisor::Literal };
    let report = metrics_report(&train, &test, divisor, a.loss_ratio)?;
    let mut table = String::from("class        C_train    C_test     S_train    S_test\n");
    for (i, name) in report.class_names.iter().enumerate() {
        writeln!(
            table,
            "{name:<12} {:<10.6} {:<10.6} {:<10.6} {:<10.6}",
            report.train.centrality[i], report.test.centrality[i], report.train.separability[i], report.test.separability[i]
        )
        .unwrap();
    }
    writeln!(table, "C_R = {:.6}  S_R = {:.6}  C_R·S_R = {:.6}", report.c_r, report.s_r, report.c_r * report.s_r).unwrap();
    let mut record = json!({ "report": report });
    if a.distance_matrix {
        record["distance_matrix"] = json!({
            "train": distance_matrix(&train)?,
            "test": distance_matrix(&test)?,
        });
    }
    Ok(Outcome::new(record, table).reading([a.train.clone(), a.test.clone()]))
}

fn knn(a: &KnnArgs) -> Result<Outcome> {
    let set = read_feature_set(&a.features, None)?;
    let first = knn_angular_eval(&set, &a.k)?;
    let mut inputs = vec![a.features.clone()];
    let second = match &a.test {
        Some(p) => {
            inputs.push(p.clone());
            Some(knn_angular_eval(&read_feature_set(p, Some(set.class_names()))?, &a.k)?)
        }
        None => None,
    };
    let mut table = String::from("k    accuracy");
    if second.is_some() {
        table.push_str("   test       gap");
    }
    table.push('\n');
    for (n, acc) in first.iter().enumerate() {
        write!(table, "{:<4} {:<10.4}", acc.k, acc.accuracy).unwrap();
        if let Some(t) = &second {
            write!(table, " {:<10.4} {:+.4}", t[n].accuracy, acc.accuracy - t[n].accuracy).unwrap();
        }
        table.push('\n');
    }
    let gaps = second.as_ref().map(|t| first.iter().zip(t).map(|(a, b)| json!({"k": a.k, "gap": a.accuracy - b.accuracy})).collect::<Vec<_>>());
    Ok(Outcome::new(json!({"accuracy": first, "test_accuracy": second, "gap": gaps}), table).reading(inputs))
}

fn div(a: &DivArgs, seed: Option<u64>) -> Result<Outcome> {
    let clouds = read_point_clouds(&a.points)?;
    let classes: Vec<usize> = match a.class {
        Some(c) => vec![c],
        None => {
            let mut c: Vec<usize> = clouds.iter().flat_map(|i| i.part_labels.iter().copied()).collect();
            c.sort_unstable();
            c.dedup();
            c
        }
    };
    let sub = a.subsample.map(|fraction| Subsample { fraction, seed: seed.unwrap_or(0) });
    let mut table = String::from("class  DIV        P_i\n");
    let mut rows = Vec::new();
    for class in classes {
        match div_statistic(&clouds, class, sub) {
            Ok(r) => {
                writeln!(table, "{class:<6} {:<10.6} {:.2}%", r.div, 100.0 * r.presence).unwrap();
                rows.push(to_value(&r));
            }
            Err(e @ Error::InsufficientInstances { .. }) if a.class.is_none() => {
                writeln!(table, "{class:<6} skipped: {e}").unwrap();
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Outcome::new(json!({ "classes": rows }), table).reading([a.points.clone()]))
}

fn correlate(a: &CorrelateArgs) -> Result<Outcome> {
    let rows = read_ratio_table(&a.table)?;
    let mut groups: Vec<Option<String>> = Vec::new();
    for r in &rows {
        if !groups.contains(&r.group) {
            groups.push(r.group.clone());
        }
    }
    let mut table = String::from("group            n    rho\n");
    let mut out = Vec::new();
    for g in groups {
        let sel: Vec<_> = rows.iter().filter(|r| r.group == g).collect();
        let product: Vec<f64> = sel.iter().map(|r| r.c_r * r.s_r).collect();
        let loss: Vec<f64> = sel.iter().map(|r| r.l_r).collect();
        let rho = pearson(&product, &loss)?;
        let name = g.clone().unwrap_or_else(|| "all".into());
        writeln!(table, "{name:<16} {:<4} {rho:+.4}", sel.len()).unwrap();
        out.push(json!({
            "group": name,
            "n": sel.len(),
            "rho": rho,
            "names": sel.iter().map(|r| r.name.clone()).collect::<Vec<_>>(),
            "c_r_s_r": product,
            "z_c_r_s_r": zscore(&product)?,
            "z_l_r": zscore(&loss)?,
        }));
    }
    Ok(Outcome::new(json!({ "groups": out }), table).reading([a.table.clone()]))
}

fn run_train(a: &TrainArgs, seed: Option<u64>) -> Result<Outcome> {
    let mut job: TrainJob = read_json(&a.config)?;
    if let Some(s) = seed {
        job = job.with_seed(s);
    }
    let (tr, te) = make_synthetic_dataset(&job.dataset)?;
    let (model, trace) = train(&job.model, &job.train, &tr, Some(&te))?;
    let train_export = export_features(&model, &tr)?;
    let test_export = export_features(&model, &te)?;
    let report = metrics_report(
        &train_export.features.without_zero_vectors().0,
        &test_export.features.without_zero_vectors().0,
        IntraDivisor::Literal,
        trace.loss_ratio(),
    )
    .ok();
    let mut outputs = Vec::new();
    if let Some(dir) = &a.export_dir {
        for (name, set) in [("train_features.csv", &train_export.features), ("test_features.csv", &test_export.features)] {
            let p = dir.join(name);
            write_feature_set(&p, set)?;
            outputs.push(p);
        }
        let p = dir.join("head.csv");
        write_head(&p, &train_export.head)?;
        outputs.push(p);
    }
    let mut table = String::from("epoch  train_loss  train_acc  test_loss   test_acc  |dS/dR|     |dS/dθ|\n");
    for e in &trace.epochs {
        let (r, t) = e.probe.map_or((f64::NAN, f64::NAN), |p| (p.mean_abs_d_radius, p.mean_abs_d_theta));
        writeln!(
            table,
            "{:<6} {:<11.5} {:<10.4} {:<11.5} {:<9.4} {:<11.4e} {:.4e}",
            e.epoch,
            e.train_loss,
            e.train_accuracy,
            e.test_loss.unwrap_or(f64::NAN),
            e.test_accuracy.unwrap_or(f64::NAN),
            r,
            t
        )
        .unwrap();
    }
    if let Some(r) = &report {
        writeln!(table, "C_R = {:.6}  S_R = {:.6}  L_R = {:.6}", r.c_r, r.s_r, r.l_r.unwrap_or(f64::NAN)).unwrap();
    }
    let record = json!({
        "job": job,
        "trace": trace,
        "metrics": report,
        "scale": train_export.scale,
        "exports": outputs,
    });
    let mut o = Outcome::new(record, table).reading([a.config.clone()]);
    o.outputs = outputs;
    Ok(o)
}

fn fusion(a: &FusionArgs, seed: Option<u64>) -> Result<Outcome> {
    let config: FusionExperimentConfig = read_json(&a.config)?;
    let start = seed.unwrap_or(config.seed);
    let seeds: Vec<u64> = (start..start + a.seeds.max(1)).collect();
    let cmp = compare_strategies(&config, &seeds)?;
    let mut table = String::from("seed ");
    for s in &config.strategies {
        write!(table, " {:<8}", s.name()).unwrap();
    }
    table.push('\n');
    for o in &cmp.outcomes {
        write!(table, "{:<5}", o.seed).unwrap();
        for s in &config.strategies {
            write!(table, " {:<8.4}", o.accuracy(*s).unwrap_or(f64::NAN)).unwrap();
        }
        table.push('\n');
    }
    write!(table, "mean ").unwrap();
    for (_, m) in &cmp.mean_accuracy {
        write!(table, " {m:<8.4}").unwrap();
    }
    table.push('\n');
    let record = json!({
        "config": config,
        "seeds": seeds,
        "outcomes": cmp.outcomes,
        "mean_accuracy": cmp.mean_accuracy.iter().map(|(s, m)| json!({"strategy": s, "accuracy": m})).collect::<Vec<_>>(),
    });
    Ok(Outcome::new(record, table).reading([a.config.clone()]))
}

fn shatter(a: &ShatterArgs, seed: Option<u64>) -> Result<Outcome> {
    let r = shattering_check(a.dim, seed.unwrap_or(0))?;
    let mut table = String::new();
    writeln!(table, "n = {}: {} dichotomies of {} points tested", r.dim, r.dichotomies_tested, r.dim + 1).unwrap();
    writeln!(table, "n+1 points shattered: {}", r.shattered_n_plus_1).unwrap();
    writeln!(table, "n+2 witness has an inseparable labelling: {}", r.witness_dichotomy_failure_n_plus_2).unwrap();
    if let Some(l) = &r.witness_labels {
        writeln!(table, "  labels {l:?}").unwrap();
    }
    Ok(Outcome::new(to_value(&r), table))
}

/// The record document for an outcome: pretty JSON, trailing newline.
pub fn render_record(command: &str, seed: Option<u64>, record: &Value) -> String {
    let doc = json!({ "command": command, "seed": seed, "result": record });
    serde_json::to_string_pretty(&doc).expect("records serialize") + "\n"
}

fn run(cli: Cli) -> Result<()> {
    let (name, seed) = match &cli.command {
        Command::Replay(r) => {
            let m = ExperimentManifest::load(&r.manifest)?;
            (m.command.clone(), m.seeds.first().copied())
        }
        c => (c.name().to_string(), cli.seed),
    };
    let outcome = execute(&cli.command, cli.seed)?;
    let text = match cli.format {
        Format::Table => outcome.table.clone(),
        Format::Record => render_record(&name, seed, &outcome.record),
    };
    match &cli.output {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = &cli.manifest {
        if let Command::Replay(_) = cli.command {
            return Err(Error::Usage("--manifest cannot be combined with replay".into()));
        }
        let Value::Object(mut map) = to_value(&cli.command) else { unreachable!("commands serialize to objects") };
        let params = map.remove("args").unwrap_or(Value::Null);
        let mut m = ExperimentManifest::new(name, params);
        for input in &outcome.inputs {
            m.add_input(input)?;
        }
        m.seeds = cli.seed.into_iter().collect();
        m.outputs = cli.output.iter().cloned().chain(outcome.outputs.iter().cloned()).collect();
        m.save(path)?;
    }
    Ok(())
}

/// Parses `argv` (including the program name), runs it, and returns the
/// process exit code: 0 on success, 1 on usage or validation errors, 2 on I/O
/// errors.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Convenience for tests: runs a command and returns the record document.
pub fn record_of(command: &Command, seed: Option<u64>) -> Result<String> {
    let outcome = execute(command, seed)?;
    Ok(render_record(command.name(), seed, &outcome.record))
}
