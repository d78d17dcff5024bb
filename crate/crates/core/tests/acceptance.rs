//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use dpc::concomp::{top_percent_count, MaskMode};
use dpc::exchange::{exchange_ghost_vertices, ExchangeOptions, ExchangeTrace};
use dpc::grid::{Connectivity, Domain, ExplicitGraph, StructuredGrid};
use dpc::io::{self, BenchRun, DType, FieldData, FieldFileHeader, Scaling, Semantic};
use dpc::manifold::{init_descending, local_path_compression};
use dpc::oracle;
use dpc::order::OrderField;
use dpc::partition::{build_distributed_domain, BlockPartition};
use dpc::pipeline::{run_pipeline, Algorithm, PipelineRun, RunConfig};
use dpc::transport::{Collective, SimulatedCluster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

const RANKS: [usize; 4] = [1, 2, 4, 8];
const WORKERS: [usize; 2] = [1, 4];

type Criterion = fn(&mut Diagnostics) -> Outcome;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("spiral golden example", spiral_golden),
        ("manifolds equal oracle", manifold_equivalence),
        ("components equal oracle", component_equivalence),
        ("rank and worker invariance", invariance),
        ("protocol shape", protocol_shape),
        ("convergence bounds", convergence_bounds),
        ("mask exactness", mask_exactness),
        ("scaling harness sanity", scaling_sanity),
        ("order field contract", order_contract),
    ];
    let mut diag = Diagnostics::default();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check(&mut diag);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} [{name}]: PASS ({secs:.2} s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL ({secs:.2} s) {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Observations gathered by the equivalence runs and judged later.
#[derive(Default)]
struct Diagnostics {
    protocol_runs: usize,
    protocol_errors: Vec<String>,
    sweep_checks: usize,
    sweep_violations: Vec<String>,
    component_rounds: Vec<usize>,
}

impl Diagnostics {
    fn record_protocol(&mut self, run: &PipelineRun, precomputed: bool, what: &str) {
        self.protocol_runs += 1;
        if let Err(e) = check_protocol(run, precomputed) {
            self.protocol_errors.push(format!("{what}: {e}"));
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1

const SPIRAL_TABLE: [&str; 12] = [
    "ABCFP", "BCDIP", "CDFLP", "DFIOP", "EFIOP", "FILP", "HILP", "ILOP", "KLOP", "LOP", "NOP", "OP",
];

/// Owned pointers right after local compression, per rank.
const SPIRAL_LOCAL: [&str; 4] = ["AB FI GI HI", "BC IL JL KL", "CD LO MO NO", "DF EF OP PP"];

fn table_column(col: usize) -> Vec<(u64, i64)> {
    SPIRAL_TABLE
        .iter()
        .map(|row| {
            let chars: Vec<char> = row.chars().collect();
            let target = chars[(col + 1).min(chars.len() - 1)];
            (letter_id(chars[0]) as u64, letter_id(target))
        })
        .collect()
}

fn spiral_golden(diag: &mut Diagnostics) -> Outcome {
    let start = Instant::now();
    let domain: Domain = ExplicitGraph::path(16).into();
    let partition = Arc::new(BlockPartition::from_owners(&SPIRAL_OWNERS, 4).map_err(|e| e.to_string())?);
    let run = SimulatedCluster::new(4)
        .and_then(|c| {
            c.run(|t| {
                let dd = build_distributed_domain(&domain, partition.clone(), t.rank())?;
                let order = OrderField::from_local(dd.local_to_global().iter().map(|&g| g as i64).collect());
                let (mut d, records) = init_descending(&dd, &order);
                local_path_compression(&dd, &mut d, 1)?;
                let local: Vec<(u64, i64)> = d.owned_labels(&dd).collect();
                let report = exchange_ghost_vertices(
                    &dd,
                    &mut d,
                    &records,
                    t,
                    ExchangeOptions {
                        workers: 1,
                        trace: true,
                        ..Default::default()
                    },
                )?;
                Ok((local, report, d.values().to_vec(), records.len()))
            })
        })
        .map_err(|e| e.to_string())?;

    for (rank, (local, _, _, _)) in run.results.iter().enumerate() {
        let expected: Vec<(u64, i64)> = SPIRAL_LOCAL[rank]
            .split(' ')
            .map(|p| {
                let c: Vec<char> = p.chars().collect();
                (letter_id(c[0]) as u64, letter_id(c[1]))
            })
            .collect();
        let mut got = local.clone();
        got.sort_unstable();
        ensure(got == expected, || {
            format!("rank {rank} after local compression: {got:?}")
        })?;
    }
    let ghost_counts: Vec<usize> = run.results.iter().map(|r| r.3).collect();
    ensure(ghost_counts == [3, 4, 4, 3], || {
        format!("ghost records per rank {ghost_counts:?}")
    })?;
    for (rank, (_, report, final_d, _)) in run.results.iter().enumerate() {
        let trace: &ExchangeTrace = report.trace.as_ref().ok_or("no trace")?;
        ensure(trace.table == table_column(0), || {
            format!("rank {rank} column P0 {:?}", trace.table)
        })?;
        ensure(
            report.jump_rounds <= 3 && trace.rounds.len() == report.jump_rounds,
            || format!("rank {rank} took {} jump rounds", report.jump_rounds),
        )?;
        for col in 1..=3 {
            let got = trace
                .rounds
                .get(col - 1)
                .or(trace.rounds.last())
                .ok_or("empty history")?;
            ensure(*got == table_column(col), || {
                format!("rank {rank} column P{col} {got:?}")
            })?;
        }
        ensure(final_d.iter().all(|&v| v == 15), || {
            format!("rank {rank} final {final_d:?}")
        })?;
        if rank == 0 {
            let gathered = trace.gathered.as_ref().ok_or("rank 0 kept no gather trace")?;
            let sizes: Vec<usize> = gathered.iter().map(Vec::len).collect();
            ensure(sizes == [3, 4, 4, 3], || format!("gathered {sizes:?}"))?;
        }
    }

    // same result through the full pipeline, on both algorithm families
    let field: Vec<f64> = (0..16).map(f64::from).collect();
    let mut cfg = RunConfig::new(4, 1).with_partition(partition.clone());
    cfg.precomputed_order = true;
    let algorithms = [
        Algorithm::Descending,
        Algorithm::Components(MaskMode::TopPercent(100.0)),
    ];
    let full = run_pipeline(&domain, &field, &algorithms, &cfg).map_err(|e| e.to_string())?;
    diag.record_protocol(&full, true, "spiral");
    for alg in &full.runs {
        ensure(alg.labels == vec![15; 16], || {
            format!("{} labels {:?}", alg.algorithm.name(), alg.labels)
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 1.0, || format!("took {secs:.3} s"))?;
    Ok("P0..P3 exact, all labels P".into())
}

// ---------------------------------------------------------------------------
// 2

struct Instance {
    name: String,
    domain: Domain,
    field: Vec<f64>,
}

fn manifold_instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut out = Vec::new();
    for i in 0..120 {
        let (domain, name): (Domain, String) = if i % 3 == 2 {
            let n = rng.gen_range(8..=2000);
            let degree = rng.gen_range(1.0..6.0);
            (random_graph(&mut rng, n, degree).into(), format!("graph{i}(n={n})"))
        } else {
            let conn = if i % 2 == 0 {
                Connectivity::Freudenthal
            } else {
                Connectivity::Face
            };
            let g = random_grid(&mut rng, 16, conn);
            let name = format!("grid{i}{:?}{:?}", g.dims(), conn);
            (g.into(), name)
        };
        let n = vertex_count(&domain);
        let field = if i % 4 == 0 {
            random_field(&mut rng, n)
        } else if let Domain::Grid(g) = &domain {
            io::generate_perlin(g.dims(), [rng.gen_range(0.05..0.5); 3], 1.0, rng.gen()).unwrap()
        } else {
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        out.push(Instance { name, domain, field });
    }
    out
}

fn manifold_equivalence(diag: &mut Diagnostics) -> Outcome {
    let start = Instant::now();
    let instances = manifold_instances();
    let mut runs = 0;
    for inst in &instances {
        let order = oracle::reference_order(&inst.field);
        let desc = oracle::oracle_descending(&inst.domain, &order);
        let asc = oracle::oracle_ascending(&inst.domain, &order);
        let bound_desc = sweep_bound(oracle::longest_ascent_path(&inst.domain, &order));
        let bound_asc = sweep_bound(oracle::longest_descent_path(&inst.domain, &order));
        for ranks in RANKS {
            for workers in WORKERS {
                let what = format!("{} ranks={ranks} workers={workers}", inst.name);
                let run = run_pipeline(
                    &inst.domain,
                    &inst.field,
                    &[Algorithm::Descending, Algorithm::Ascending],
                    &RunConfig::new(ranks, workers),
                )
                .map_err(|e| format!("{what}: {e}"))?;
                runs += 1;
                ensure(run.runs[0].labels == desc, || format!("{what}: descending mismatch"))?;
                ensure(run.runs[1].labels == asc, || format!("{what}: ascending mismatch"))?;
                diag.record_protocol(&run, false, &what);
                for (alg, bound) in run.runs.iter().zip([bound_desc, bound_asc]) {
                    diag.sweep_checks += 1;
                    if alg.stats.sweeps > bound {
                        diag.sweep_violations.push(format!(
                            "{what} {}: {} sweeps > {bound}",
                            alg.algorithm.name(),
                            alg.stats.sweeps
                        ));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("suite took {secs:.1} s"))?;
    Ok(format!("{} instances, {runs} runs, 0 mismatches", instances.len()))
}

// ---------------------------------------------------------------------------
// 3

fn component_cases() -> Vec<(Instance, MaskMode)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut out = Vec::new();
    for i in 0..120 {
        let conn = if i % 2 == 0 {
            Connectivity::Face
        } else {
            Connectivity::Freudenthal
        };
        let (domain, name): (Domain, String) = if i % 5 == 4 {
            let n = rng.gen_range(8..=600);
            let degree = rng.gen_range(1.0..4.0);
            (random_graph(&mut rng, n, degree).into(), format!("graph{i}(n={n})"))
        } else {
            let g = random_grid(&mut rng, 12, conn);
            let name = format!("grid{i}{:?}{:?}", g.dims(), conn);
            (g.into(), name)
        };
        let n = vertex_count(&domain);
        let field: Vec<f64> = if i % 3 == 0 {
            random_field(&mut rng, n)
        } else {
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let mode = if (i / 2) % 2 == 0 {
            MaskMode::TopPercent([10.0, 25.0, 50.0, 75.0, 90.0, 100.0, 33.3][rng.gen_range(0..7)])
        } else {
            MaskMode::Threshold(rng.gen_range(-1.0..0.8))
        };
        out.push((Instance { name, domain, field }, mode));
    }
    out
}

fn oracle_mask(field: &[f64], order: &[i64], mode: MaskMode) -> Vec<bool> {
    match mode {
        MaskMode::TopPercent(p) => {
            let n = order.len() as u64;
            let cut = (n - top_percent_count(p, n).unwrap()) as i64;
            order.iter().map(|&o| o >= cut).collect()
        }
        MaskMode::Threshold(t) => field.iter().map(|&f| f > t).collect(),
    }
}

fn component_equivalence(diag: &mut Diagnostics) -> Outcome {
    let start = Instant::now();
    let cases = component_cases();
    let mut runs = 0;
    let mut modes = BTreeMap::new();
    for (inst, mode) in &cases {
        let order = oracle::reference_order(&inst.field);
        let expected = oracle::oracle_components(&inst.domain, &oracle_mask(&inst.field, &order, *mode));
        let conn = match &inst.domain {
            Domain::Grid(g) => format!("{:?}", g.connectivity()),
            Domain::Graph(_) => "graph".into(),
        };
        let kind = if matches!(mode, MaskMode::TopPercent(_)) {
            "top"
        } else {
            "threshold"
        };
        *modes.entry(format!("{conn}/{kind}")).or_insert(0) += 1;
        for ranks in RANKS {
            for workers in WORKERS {
                let what = format!("{} {mode:?} ranks={ranks} workers={workers}", inst.name);
                let run = run_pipeline(
                    &inst.domain,
                    &inst.field,
                    &[Algorithm::Components(*mode)],
                    &RunConfig::new(ranks, workers),
                )
                .map_err(|e| format!("{what}: {e}"))?;
                runs += 1;
                let labels = &run.runs[0].labels;
                if labels != &expected {
                    let v = (0..expected.len()).find(|&v| labels[v] != expected[v]).unwrap();
                    return Err(format!("{what}: vertex {v} got {} expected {}", labels[v], expected[v]));
                }
                diag.record_protocol(&run, false, &what);
                if ranks > 1 {
                    diag.component_rounds.push(run.runs[0].stats.rounds);
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("suite took {secs:.1} s"))?;
    Ok(format!("{} pairs {modes:?}, {runs} runs, 0 mismatches", cases.len()))
}

// ---------------------------------------------------------------------------
// 4

fn label_hash(dir: &Path, dims: [usize; 3], labels: &[i64]) -> String {
    let stem = dir.join("labels");
    let header = FieldFileHeader::new(dims, DType::I64, Semantic::Labels);
    io::write_field(&stem, &header, &FieldData::I64(labels.to_vec())).unwrap();
    let (json, raw) = io::field_paths(&stem);
    let mut h = Sha256::new();
    h.update(std::fs::read(json).unwrap());
    h.update(std::fs::read(raw).unwrap());
    format!("{:x}", h.finalize())
}

fn invariance(diag: &mut Diagnostics) -> Outcome {
    // hundreds of small files: prefer a memory-backed directory when there is one
    let shm = Path::new("/dev/shm");
    let dir = if shm.is_dir() {
        tempfile::tempdir_in(shm)
    } else {
        tempfile::tempdir()
    }
    .or_else(|_| tempfile::tempdir())
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let algorithms = [
        Algorithm::Descending,
        Algorithm::Ascending,
        Algorithm::Components(MaskMode::TopPercent(30.0)),
    ];
    let mut files = 0;
    for i in 0..20 {
        let (domain, dims): (Domain, [usize; 3]) = if i % 4 == 3 {
            let n = rng.gen_range(50..=800);
            (random_graph(&mut rng, n, 3.0).into(), [n as usize, 1, 1])
        } else {
            let g = random_grid(&mut rng, 14, [Connectivity::Face, Connectivity::Freudenthal][i % 2]);
            (g.into(), g.dims())
        };
        let field = random_field(&mut rng, vertex_count(&domain));
        let mut hashes: Vec<Option<String>> = vec![None; algorithms.len()];
        for ranks in RANKS {
            for workers in WORKERS {
                let run = run_pipeline(&domain, &field, &algorithms, &RunConfig::new(ranks, workers))
                    .map_err(|e| e.to_string())?;
                diag.record_protocol(&run, false, &format!("invariance {i}"));
                for (slot, alg) in hashes.iter_mut().zip(&run.runs) {
                    let h = label_hash(dir.path(), dims, &alg.labels);
                    files += 1;
                    match slot {
                        None => *slot = Some(h),
                        Some(first) => ensure(*first == h, || {
                            format!(
                                "dataset {i} {} differs at ranks={ranks} workers={workers}",
                                alg.algorithm.name()
                            )
                        })?,
                    }
                }
            }
        }
    }
    Ok(format!(
        "20 datasets, {files} label files, all hashes identical per dataset"
    ))
}

// ---------------------------------------------------------------------------
// 5

fn protocol_shape(diag: &mut Diagnostics) -> Outcome {
    // a multi-rank run where no vertex is masked near a boundary: allreduce only
    let domain: Domain = ExplicitGraph::path(8).into();
    let field: Vec<f64> = (0..8).map(|v| if v == 0 { 1.0 } else { 0.0 }).collect();
    let run = run_pipeline(
        &domain,
        &field,
        &[Algorithm::Components(MaskMode::Threshold(0.5))],
        &RunConfig::new(2, 1),
    )
    .map_err(|e| e.to_string())?;
    diag.record_protocol(&run, false, "isolated mask");
    let report = &run.runs[0].exchanges[0][0];
    ensure(report.global_records == 0 && report.collectives.len() == 1, || {
        format!("masked-interior exchange issued {:?}", report.collectives)
    })?;
    // single rank: nothing at all
    let run =
        run_pipeline(&domain, &field, &[Algorithm::Descending], &RunConfig::new(1, 1)).map_err(|e| e.to_string())?;
    diag.record_protocol(&run, false, "single rank");
    ensure(run.transcripts[0].len() == 2, || {
        format!("single rank transcript {:?}", run.transcripts[0])
    })?;

    if diag.protocol_errors.is_empty() {
        Ok(format!(
            "{} runs checked, every exchange = allreduce, gather, scatter, allgather",
            diag.protocol_runs
        ))
    } else {
        Err(format!(
            "{} of {} runs violate: {}",
            diag.protocol_errors.len(),
            diag.protocol_runs,
            diag.protocol_errors[0]
        ))
    }
}

// ---------------------------------------------------------------------------
// 6

fn convergence_bounds(diag: &mut Diagnostics) -> Outcome {
    // long steepest paths stress the bound more than random fields do
    for n in [2u64, 3, 17, 64, 1000] {
        let domain: Domain = ExplicitGraph::path(n).into();
        let field: Vec<f64> = (0..n).map(|v| v as f64).collect();
        for workers in WORKERS {
            let run = run_pipeline(&domain, &field, &[Algorithm::Descending], &RunConfig::new(1, workers))
                .map_err(|e| e.to_string())?;
            diag.sweep_checks += 1;
            let bound = sweep_bound(n as usize - 1);
            if run.runs[0].stats.sweeps > bound {
                diag.sweep_violations
                    .push(format!("path {n}: {} > {bound}", run.runs[0].stats.sweeps));
            }
        }
    }
    if let Some(v) = diag.sweep_violations.first() {
        return Err(format!(
            "{} of {} sweep checks exceed the bound, e.g. {v}",
            diag.sweep_violations.len(),
            diag.sweep_checks
        ));
    }
    let rounds = &diag.component_rounds;
    ensure(!rounds.is_empty(), || "no multi-rank component runs recorded".into())?;
    let within = rounds.iter().filter(|&&r| r <= 2).count();
    let share = within as f64 / rounds.len() as f64;
    let mut hist = BTreeMap::new();
    for &r in rounds {
        *hist.entry(r).or_insert(0) += 1;
    }
    ensure(share >= 0.95, || {
        format!("only {:.1}% of component runs within 2 rounds {hist:?}", share * 100.0)
    })?;
    Ok(format!(
        "{} sweep checks within bound; component rounds {hist:?} ({:.1}% <= 2)",
        diag.sweep_checks,
        share * 100.0
    ))
}

// ---------------------------------------------------------------------------
// 7

fn mask_exactness(_: &mut Diagnostics) -> Outcome {
    let dims = [32, 32, 32];
    let field = io::generate_perlin(dims, [0.1; 3], 1.0, 1).map_err(|e| e.to_string())?;
    let domain: Domain = StructuredGrid::new(dims, Connectivity::Freudenthal).unwrap().into();
    let n = vertex_count(&domain) as u64;
    let mut counts = Vec::new();
    for p in [10.0, 50.0, 90.0] {
        let expected = (p as u64 * n).div_ceil(100);
        let run = run_pipeline(
            &domain,
            &field,
            &[Algorithm::Components(MaskMode::TopPercent(p))],
            &RunConfig::new(4, 2),
        )
        .map_err(|e| e.to_string())?;
        let masked = run.masked_counts[0];
        let labeled = run.runs[0].labels.iter().filter(|&&l| l >= 0).count() as u64;
        ensure(masked == expected && labeled == expected, || {
            format!("p={p}: masked {masked}, labeled {labeled}, expected {expected}")
        })?;
        counts.push(masked);
    }
    Ok(format!("masked counts {counts:?} of {n}"))
}

// ---------------------------------------------------------------------------
// 8

fn scaling_sanity(_: &mut Diagnostics) -> Outcome {
    let dims = [64, 64, 64];
    let field = io::generate_perlin(dims, [0.1; 3], 1.0, 1).map_err(|e| e.to_string())?;
    let domain: Domain = StructuredGrid::new(dims, Connectivity::Freudenthal).unwrap().into();
    let algorithms = [
        Algorithm::Descending,
        Algorithm::Ascending,
        Algorithm::Components(MaskMode::TopPercent(10.0)),
    ];
    let mut bench = Vec::new();
    let mut bytes: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for ranks in RANKS {
        let run = run_pipeline(&domain, &field, &algorithms, &RunConfig::new(ranks, 1)).map_err(|e| e.to_string())?;
        let records: Vec<u64> = run.runs.iter().map(|r| r.stats.ghost_records).collect();
        ensure(records[2] <= records[0], || {
            format!(
                "ranks={ranks}: component ghost records {} > manifold {}",
                records[2], records[0]
            )
        })?;
        for (i, alg) in run.runs.iter().enumerate() {
            bytes
                .entry(alg.algorithm.name())
                .or_default()
                .push(alg.stats.bytes_sent);
            bench.push(BenchRun {
                dataset: "perlin-64".into(),
                algorithm: alg.algorithm.name().into(),
                group: alg.algorithm.name().into(),
                scaling: Scaling::Strong,
                stats: alg.stats.clone(),
                preprocess: (i == 0).then_some((run.preprocess_seconds, run.preprocess_bytes)),
            });
        }
    }
    for (alg, series) in &bytes {
        ensure(series.windows(2).all(|w| w[0] <= w[1]), || {
            format!("{alg} bytes not nondecreasing: {series:?}")
        })?;
    }
    let mut csv = Vec::new();
    io::write_bench_csv(&mut csv, &bench).map_err(|e| e.to_string())?;
    let text = String::from_utf8(csv).unwrap();
    let header = text.lines().next().unwrap_or_default();
    ensure(header.ends_with("speedup,efficiency"), || {
        format!("csv header {header}")
    })?;
    let rows = io::read_bench_csv(text.as_bytes()).map_err(|e| e.to_string())?;
    ensure(rows.len() == 4 * (3 * 5 + 1), || format!("{} csv rows", rows.len()))?;
    ensure(
        rows.iter().filter(|r| r.rank_count == 1).all(|r| r.efficiency == 1.0),
        || "baseline efficiency is not 1".into(),
    )?;
    Ok(format!("bytes {bytes:?}, {} csv rows", rows.len()))
}

// ---------------------------------------------------------------------------
// 9

fn order_contract(_: &mut Diagnostics) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0009);
    for i in 0..20 {
        let domain: Domain = if i % 3 == 2 {
            let n = rng.gen_range(8..400);
            random_graph(&mut rng, n, 2.5).into()
        } else {
            random_grid(&mut rng, 10, Connectivity::Freudenthal).into()
        };
        let n = vertex_count(&domain);
        let field = if i == 0 {
            vec![0.25; n]
        } else {
            random_field(&mut rng, n)
        };
        let mut first: Option<Vec<i64>> = None;
        for ranks in RANKS {
            let order = dpc::pipeline::distributed_order(&domain, &field, &RunConfig::new(ranks, 1))
                .map_err(|e| e.to_string())?;
            let mut seen = vec![false; n];
            for &o in &order {
                ensure((0..n as i64).contains(&o) && !seen[o as usize], || {
                    format!("field {i}: not a bijection")
                })?;
                seen[o as usize] = true;
            }
            for a in 0..n {
                for b in (a + 1)..n.min(a + 40) {
                    let less = (field[a], a) < (field[b], b);
                    ensure(less == (order[a] < order[b]), || {
                        format!("field {i}: order of {a}, {b} breaks (f, id)")
                    })?;
                }
            }
            if i == 0 {
                ensure(order.iter().enumerate().all(|(v, &o)| o == v as i64), || {
                    "constant field is not the identity".into()
                })?;
            }
            match &first {
                None => first = Some(order),
                Some(f) => ensure(*f == order, || format!("field {i}: ranks={ranks} differs"))?,
            }
        }
    }
    Ok("20 fields, bijective, (f, id)-monotone, identical for ranks 1, 2, 4, 8".into())
}
