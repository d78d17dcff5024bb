//! Command-line surface of the `dpc` binary.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{run_bench, BenchConfig};
use crate::concomp::{extract_components, MaskMode};
use crate::grid::{Connectivity, Domain, StructuredGrid};
use crate::io::{self, BenchRun, DType, FieldData, FieldFileHeader, Scaling, Semantic};
use crate::oracle;
use crate::pipeline::{run_pipeline, Algorithm, PipelineRun, RunConfig};
use crate::transport::TransportKind;

#[derive(Debug, Parser)]
#[command(name = "dpc", version, about = "Distributed path compression on scalar fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a Perlin-noise scalar field.
    Generate(GenerateArgs),
    /// Descending and/or ascending manifolds of a field.
    Segment(SegmentArgs),
    /// Connected components of a thresholded field.
    Components(ComponentsArgs),
    /// Compare distributed results against brute-force references.
    OracleCheck(OracleArgs),
    /// Scaling sweep over simulated rank counts.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Grid size as `nx,ny,nz`.
    #[arg(long, value_parser = parse_dims)]
    pub dims: [usize; 3],
    /// One frequency for all axes or `fx,fy,fz`.
    #[arg(long, default_value = "0.1", value_parser = parse_freq)]
    pub freq: [f64; 3],
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output stem; writes `<out>.json` and `<out>.raw`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Scalar field stem (`<input>.json` + `<input>.raw`).
    #[arg(long)]
    pub input: PathBuf,
    /// Edge list; the field is then indexed by graph vertex.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "freudenthal")]
    pub connectivity: Connectivity,
    #[arg(long, default_value_t = 1)]
    pub ranks: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_enum, default_value = "simulated")]
    pub transport: TransportKind,
    /// The field already is a global order (distinct integers `0..n`).
    #[arg(long)]
    pub precomputed_order: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Descending,
    Ascending,
    Both,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value = "descending")]
    pub direction: DirectionArg,
    /// Label output stem; with `--direction both` the suffixes
    /// `-descending` and `-ascending` are appended.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-phase statistics CSV.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Args)]
#[group(required = true, multiple = false)]
pub struct MaskArgs {
    /// Mask the given percentage of highest-order vertices.
    #[arg(long)]
    pub top_percent: Option<f64>,
    /// Mask vertices whose value is strictly above this.
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl MaskArgs {
    pub fn mode(&self) -> MaskMode {
        match (self.top_percent, self.threshold) {
            (Some(p), _) => MaskMode::TopPercent(p),
            (None, Some(t)) => MaskMode::Threshold(t),
            (None, None) => unreachable!("clap requires one mask flag"),
        }
    }
}

#[derive(Debug, Args)]
pub struct ComponentsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub mask: MaskArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write masked vertices and edges as text (`v id label`, `e u v`).
    #[arg(long)]
    pub extract: Option<PathBuf>,
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Mask percentage for the components check.
    #[arg(long, default_value_t = 10.0)]
    pub top_percent: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset size (strong) or size at one rank (weak).
    #[arg(long, value_parser = parse_dims, default_value = "64,64,64")]
    pub dims: [usize; 3],
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub ranks: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_enum, default_value = "strong")]
    pub scaling: Scaling,
    #[arg(long, value_delimiter = ',', default_value = "descending,ascending,components")]
    pub algorithms: Vec<String>,
    /// Mask percentage for components.
    #[arg(long, default_value_t = 10.0)]
    pub top_percent: f64,
    #[arg(long, value_enum, default_value = "freudenthal")]
    pub connectivity: Connectivity,
    #[arg(long, default_value_t = 0.1)]
    pub freq: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] if *x > 0 && *y > 0 && *z > 0 => Ok([*x, *y, *z]),
        _ => Err(format!("expected three positive sizes, got {s:?}")),
    }
}

fn parse_freq(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [f] => Ok([*f; 3]),
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(format!("expected one or three frequencies, got {s:?}")),
    }
}

/// Runs a command. `Ok(false)` means it completed but found mismatches.
pub fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Generate(a) => generate(&a).map(|_| true),
        Command::Segment(a) => segment(&a).map(|_| true),
        Command::Components(a) => components(&a).map(|_| true),
        Command::OracleCheck(a) => oracle_check(&a),
        Command::Bench(a) => bench(&a).map(|_| true),
    }
}

fn generate(a: &GenerateArgs) -> anyhow::Result<()> {
    let values = io::generate_perlin(a.dims, a.freq, a.amplitude, a.seed)?;
    let header = FieldFileHeader::new(a.dims, DType::F64, Semantic::Scalar);
    io::write_field(&a.out, &header, &FieldData::F64(values))?;
    Ok(())
}

/// A loaded dataset and the dims used for label files.
pub struct Dataset {
    pub domain: Domain,
    pub field: Vec<f64>,
    pub dims: [usize; 3],
}

pub fn load_dataset(input: &InputArgs) -> anyhow::Result<Dataset> {
    let (header, data) = io::read_field(&input.input)?;
    let field = data.to_f64();
    let domain: Domain = match &input.graph {
        Some(path) => {
            let graph = io::read_edge_list(path)?;
            if graph.vertex_count() != field.len() as u64 {
                bail!(
                    "graph has {} vertices but the field has {} values",
                    graph.vertex_count(),
                    field.len()
                );
            }
            graph.into()
        }
        None => StructuredGrid::new(header.dims, input.connectivity)?.into(),
    };
    Ok(Dataset {
        domain,
        field,
        dims: header.dims,
    })
}

fn run_config(input: &InputArgs) -> anyhow::Result<RunConfig> {
    if input.ranks == 0 || input.workers == 0 {
        bail!("--ranks and --workers must be at least 1");
    }
    let mut cfg = RunConfig::new(input.ranks, input.workers);
    cfg.transport = input.transport;
    cfg.precomputed_order = input.precomputed_order;
    Ok(cfg)
}

fn write_labels(path: &Path, dims: [usize; 3], labels: &[i64]) -> anyhow::Result<()> {
    let header = FieldFileHeader::new(dims, DType::I64, Semantic::Labels);
    io::write_field(path, &header, &FieldData::I64(labels.to_vec()))
        .with_context(|| format!("writing labels to {}", path.display()))
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = io::field_paths(path).0.with_extension("").into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_stats(path: &Path, dataset: &str, run: &PipelineRun) -> anyhow::Result<()> {
    let runs: Vec<BenchRun> = run
        .runs
        .iter()
        .enumerate()
        .map(|(i, r)| BenchRun {
            dataset: dataset.into(),
            algorithm: r.algorithm.name().into(),
            group: r.algorithm.name().into(),
            scaling: Scaling::Strong,
            stats: r.stats.clone(),
            preprocess: (i == 0).then_some((run.preprocess_seconds, run.preprocess_bytes)),
        })
        .collect();
    io::write_bench_csv_file(path, &runs)?;
    Ok(())
}

fn dataset_label(input: &InputArgs) -> String {
    input
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn segment(a: &SegmentArgs) -> anyhow::Result<()> {
    let data = load_dataset(&a.input)?;
    let algorithms = match a.direction {
        DirectionArg::Descending => vec![Algorithm::Descending],
        DirectionArg::Ascending => vec![Algorithm::Ascending],
        DirectionArg::Both => vec![Algorithm::Descending, Algorithm::Ascending],
    };
    let run = run_pipeline(&data.domain, &data.field, &algorithms, &run_config(&a.input)?)?;
    for r in &run.runs {
        let path = if a.direction == DirectionArg::Both {
            suffixed(&a.out, &format!("-{}", r.algorithm.name()))
        } else {
            a.out.clone()
        };
        write_labels(&path, data.dims, &r.labels)?;
    }
    if let Some(stats) = &a.stats {
        write_stats(stats, &dataset_label(&a.input), &run)?;
    }
    Ok(())
}

fn components(a: &ComponentsArgs) -> anyhow::Result<()> {
    let data = load_dataset(&a.input)?;
    let run = run_pipeline(
        &data.domain,
        &data.field,
        &[Algorithm::Components(a.mask.mode())],
        &run_config(&a.input)?,
    )?;
    let labels = &run.runs[0].labels;
    write_labels(&a.out, data.dims, labels)?;
    if let Some(path) = &a.extract {
        io::write_extract(path, &extract_components(&data.domain, labels)?)?;
    }
    if let Some(stats) = &a.stats {
        write_stats(stats, &dataset_label(&a.input), &run)?;
    }
    Ok(())
}

fn report_mismatch(name: &str, got: &[i64], expected: &[i64]) -> bool {
    let bad: Vec<usize> = (0..expected.len()).filter(|&v| got[v] != expected[v]).collect();
    if bad.is_empty() {
        println!("{name}: ok ({} vertices)", expected.len());
        true
    } else {
        let v = bad[0];
        println!(
            "{name}: {} mismatches, first at vertex {v} (got {}, expected {})",
            bad.len(),
            got[v],
            expected[v]
        );
        false
    }
}

fn oracle_check(a: &OracleArgs) -> anyhow::Result<bool> {
    let data = load_dataset(&a.input)?;
    let run = run_pipeline(
        &data.domain,
        &data.field,
        &[
            Algorithm::Descending,
            Algorithm::Ascending,
            Algorithm::Components(MaskMode::TopPercent(a.top_percent)),
        ],
        &run_config(&a.input)?,
    )?;
    let order = if a.input.precomputed_order {
        data.field.iter().map(|&v| v as i64).collect()
    } else {
        oracle::reference_order(&data.field)
    };
    let n = order.len() as u64;
    let cut = (n - crate::concomp::top_percent_count(a.top_percent, n)?) as i64;
    let mask: Vec<bool> = order.iter().map(|&o| o >= cut).collect();
    let mut ok = report_mismatch("order", &run.order, &order);
    ok &= report_mismatch(
        "descending",
        &run.runs[0].labels,
        &oracle::oracle_descending(&data.domain, &order),
    );
    ok &= report_mismatch(
        "ascending",
        &run.runs[1].labels,
        &oracle::oracle_ascending(&data.domain, &order),
    );
    ok &= report_mismatch(
        "components",
        &run.runs[2].labels,
        &oracle::oracle_components(&data.domain, &mask),
    );
    Ok(ok)
}

fn bench(a: &BenchArgs) -> anyhow::Result<()> {
    let algorithms = a
        .algorithms
        .iter()
        .map(|name| match name.as_str() {
            "descending" => Ok(Algorithm::Descending),
            "ascending" => Ok(Algorithm::Ascending),
            "components" => Ok(Algorithm::Components(MaskMode::TopPercent(a.top_percent))),
            other => bail!("unknown algorithm {other:?}"),
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if a.ranks.is_empty() || a.ranks.contains(&0) || a.workers == 0 {
        bail!("rank counts and --workers must be at least 1");
    }
    let runs = run_bench(&BenchConfig {
        dims: a.dims,
        ranks: a.ranks.clone(),
        workers: a.workers,
        scaling: a.scaling,
        algorithms,
        connectivity: a.connectivity,
        frequency: a.freq,
        seed: a.seed,
    })?;
    io::write_bench_csv_file(&a.out, &runs)?;
    Ok(())
}
