//! Subcommand implementations. The binary in `main.rs` only parses flags and
//! forwards here, so integration tests can drive the same code paths
//! in-process.

use std::fs;
use std::path::{Path, PathBuf};

use fedhpc_core::{run_scenario, AlgorithmKind, MetricsLog};

use crate::calibrate;
use crate::config::{parse_algorithm_name, ScenarioFile};
use crate::report;
use crate::scenarios;
use crate::{default_jobs, parallel_map, CliError};

/// Fraction of sweep seeds in which FedCompass must match or beat FedAsync
/// for `compare --sweep-seeds` to report PASS on that ordering line.
pub const COMPASS_ASYNC_PASS_FRACTION: f64 = 0.70;

/// Flavor of the per-run summary file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    /// `summary.txt` with `key = value` lines.
    StructuredText,
    /// `summary.csv` with `key,value` rows.
    Csv,
}

impl OutputFormat {
    fn summary_file(self) -> &'static str {
        match self {
            OutputFormat::StructuredText => "summary.txt",
            OutputFormat::Csv => "summary.csv",
        }
    }

    fn render(
        self,
        scenario: &str,
        algorithm: &str,
        seed: u64,
        log: &MetricsLog,
        names: &[String],
    ) -> String {
        match self {
            OutputFormat::StructuredText => {
                report::summary_text(scenario, algorithm, seed, &log.summary, names)
            }
            OutputFormat::Csv => {
                report::summary_csv(scenario, algorithm, seed, &log.summary, names)
            }
        }
    }
}

/// Arguments shared by `simulate` invocations.
#[derive(Debug, Clone)]
pub struct SimulateOpts {
    pub config: PathBuf,
    pub algorithm: Option<String>,
    /// Already resolved: flag beats `FEDHPC_SIM_SEED` beats the config value.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub trace: bool,
    pub force: bool,
    pub sweep_seeds: Option<u64>,
    pub jobs: Option<usize>,
    pub format: OutputFormat,
}

/// Arguments for `compare`.
#[derive(Debug, Clone)]
pub struct CompareOpts {
    pub config: PathBuf,
    /// Empty means all four algorithms.
    pub algorithms: Vec<String>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub trace: bool,
    pub force: bool,
    pub sweep_seeds: Option<u64>,
    pub jobs: Option<usize>,
}

/// Resolves the effective seed override: an explicit flag wins, otherwise the
/// `FEDHPC_SIM_SEED` environment variable, otherwise none (the config seed).
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>) -> Result<Option<u64>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match env {
        None => Ok(None),
        Some(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("FEDHPC_SIM_SEED must be a u64, got {raw:?}"))),
    }
}

/// Refuses to clobber existing files unless `--force`, then writes.
fn write_file(path: &Path, contents: &str, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Config(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| {
                CliError::Runtime(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn run_once(
    file: &ScenarioFile,
    algorithm: Option<AlgorithmKind>,
    seed: Option<u64>,
) -> Result<MetricsLog, CliError> {
    let config = file.lower(algorithm, seed)?;
    run_scenario(&config).map_err(CliError::from)
}

/// Writes the per-run artifacts (metrics, summary, optional trace) under
/// `dir` and returns the written paths for logging.
fn write_run_files(
    dir: &Path,
    file: &ScenarioFile,
    algorithm_name: &str,
    seed: u64,
    log: &MetricsLog,
    names: &[String],
    trace: bool,
    force: bool,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let metrics = dir.join("metrics.csv");
    write_file(&metrics, &report::metrics_csv(log, names), force)?;
    written.push(metrics);

    let summary = dir.join(format.summary_file());
    write_file(
        &summary,
        &format.render(&file.name, algorithm_name, seed, log, names),
        force,
    )?;
    written.push(summary);

    if trace {
        let events = dir.join("events.csv");
        write_file(&events, &report::events_csv(&log.events, names), force)?;
        written.push(events);
    }
    Ok(written)
}

/// `simulate`: one run (or a seed sweep) of a single algorithm.
pub fn simulate(opts: &SimulateOpts) -> Result<(), CliError> {
    let file = ScenarioFile::load(&opts.config)?;
    let algorithm = match &opts.algorithm {
        Some(name) => Some(parse_algorithm_name(name)?),
        None => None,
    };
    let names = file.facility_names();

    match opts.sweep_seeds {
        None => {
            let seed = opts.seed.unwrap_or(file.seed);
            let log = run_once(&file, algorithm, Some(seed))?;
            let algo_name = algorithm
                .map(|k| k.name().to_string())
                .unwrap_or_else(|| file.algorithm.kind.clone());
            let written = write_run_files(
                &opts.out,
                &file,
                &algo_name,
                seed,
                &log,
                &names,
                opts.trace,
                opts.force,
                opts.format,
            )?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            print!(
                "{}",
                report::summary_text(&file.name, &algo_name, seed, &log.summary, &names)
            );
            Ok(())
        }
        Some(0) => Err(CliError::Config("--sweep-seeds must be at least 1".into())),
        Some(n) => {
            let first = opts.seed.unwrap_or(file.seed);
            let seeds: Vec<u64> = (0..n).map(|i| first.wrapping_add(i)).collect();
            let jobs = opts.jobs.unwrap_or_else(default_jobs);
            let runs = parallel_map(seeds, jobs, |seed| {
                (seed, run_once(&file, algorithm, Some(seed)))
            });
            let algo_name = algorithm
                .map(|k| k.name().to_string())
                .unwrap_or_else(|| file.algorithm.kind.clone());
            // All runs finish before any files are written, so a failure
            // partway through the sweep leaves the output directory untouched.
            let mut rows = Vec::new();
            for (seed, run) in &runs {
                match run {
                    Ok(log) => rows.push((*seed, log.summary.clone())),
                    Err(e) => return Err(e.clone()),
                }
            }
            for (seed, run) in &runs {
                let log = run.as_ref().expect("errors returned above");
                let dir = opts.out.join(format!("seed_{seed}"));
                write_run_files(
                    &dir, &file, &algo_name, *seed, log, &names, opts.trace, opts.force,
                    opts.format,
                )?;
                println!(
                    "seed {seed}: {} aggregations, final loss {}",
                    log.summary.aggregations,
                    report::fmt_f64(log.summary.final_global_loss)
                );
            }
            let sweep = opts.out.join("sweep_summary.csv");
            write_file(&sweep, &report::sweep_csv(&rows, &names), opts.force)?;
            println!("wrote {}", sweep.display());
            Ok(())
        }
    }
}

fn requested_algorithms(names: &[String]) -> Result<Vec<AlgorithmKind>, CliError> {
    let kinds = if names.is_empty() {
        AlgorithmKind::ALL.to_vec()
    } else {
        names
            .iter()
            .map(|n| parse_algorithm_name(n))
            .collect::<Result<Vec<_>, _>>()?
    };
    if kinds.len() < 2 {
        return Err(CliError::Config(
            "compare needs at least 2 algorithms".into(),
        ));
    }
    let mut seen = Vec::new();
    for k in &kinds {
        if seen.contains(k) {
            return Err(CliError::Config(format!(
                "algorithm {} listed twice",
                k.name()
            )));
        }
        seen.push(*k);
    }
    Ok(kinds)
}

/// `compare`: run several algorithms under identical conditions.
pub fn compare(opts: &CompareOpts) -> Result<(), CliError> {
    let file = ScenarioFile::load(&opts.config)?;
    let kinds = requested_algorithms(&opts.algorithms)?;
    let names = file.facility_names();
    let first_seed = opts.seed.unwrap_or(file.seed);

    match opts.sweep_seeds {
        None => {
            let jobs = opts.jobs.unwrap_or_else(default_jobs);
            let runs = parallel_map(kinds.clone(), jobs, |kind| {
                run_once(&file, Some(kind), Some(first_seed))
            });
            let mut entries = Vec::new();
            for (kind, run) in kinds.iter().zip(runs) {
                let log = run?;
                let metrics = opts.out.join(format!("metrics_{}.csv", kind.name()));
                write_file(&metrics, &report::metrics_csv(&log, &names), opts.force)?;
                println!("wrote {}", metrics.display());
                if opts.trace {
                    let events = opts.out.join(format!("events_{}.csv", kind.name()));
                    write_file(&events, &report::events_csv(&log.events, &names), opts.force)?;
                    println!("wrote {}", events.display());
                }
                entries.push((kind.name().to_string(), log.summary));
            }
            let comparison = opts.out.join("comparison.csv");
            write_file(&comparison, &report::comparison_csv(&entries, &names), opts.force)?;
            println!("wrote {}", comparison.display());
            for (name, summary) in &entries {
                println!(
                    "{name}: final loss {}, final acc {}, {} aggregations",
                    report::fmt_f64(summary.final_global_loss),
                    report::fmt_f64(summary.final_global_acc),
                    summary.aggregations
                );
            }
            Ok(())
        }
        Some(0) => Err(CliError::Config("--sweep-seeds must be at least 1".into())),
        Some(n) => {
            let seeds: Vec<u64> = (0..n).map(|i| first_seed.wrapping_add(i)).collect();
            let jobs = opts.jobs.unwrap_or_else(default_jobs);
            // One work item per (seed, algorithm) pair.
            let mut items = Vec::new();
            for &seed in &seeds {
                for &kind in &kinds {
                    items.push((seed, kind));
                }
            }
            let runs = parallel_map(items, jobs, |(seed, kind)| {
                ((seed, kind), run_once(&file, Some(kind), Some(seed)))
            });
            let mut out = String::from(
                "seed,algorithm,final_global_loss,final_global_acc,aggregations,local_rounds_total\n",
            );
            let mut finals: Vec<((u64, AlgorithmKind), f64)> = Vec::new();
            for ((seed, kind), run) in runs {
                let log = run?;
                let s = &log.summary;
                out.push_str(&format!(
                    "{seed},{},{},{},{},{}\n",
                    kind.name(),
                    report::fmt_f64(s.final_global_loss),
                    report::fmt_f64(s.final_global_acc),
                    s.aggregations,
                    s.client_rounds.iter().sum::<u64>()
                ));
                finals.push(((seed, kind), s.final_global_loss));
            }
            let sweep = opts.out.join("sweep_comparison.csv");
            write_file(&sweep, &out, opts.force)?;
            println!("wrote {}", sweep.display());

            let loss = |seed: u64, kind: AlgorithmKind| {
                finals
                    .iter()
                    .find(|((s, k), _)| *s == seed && *k == kind)
                    .map(|(_, l)| *l)
            };
            if kinds.contains(&AlgorithmKind::FedCompass) && kinds.contains(&AlgorithmKind::FedAsync)
            {
                let mut hits = 0usize;
                for &seed in &seeds {
                    let (c, a) = (
                        loss(seed, AlgorithmKind::FedCompass).expect("ran above"),
                        loss(seed, AlgorithmKind::FedAsync).expect("ran above"),
                    );
                    if c <= a {
                        hits += 1;
                    }
                }
                let frac = hits as f64 / seeds.len() as f64;
                let verdict = if frac >= COMPASS_ASYNC_PASS_FRACTION {
                    "PASS"
                } else {
                    "FAIL"
                };
                println!(
                    "fedcompass final loss <= fedasync in {hits}/{} seeds ({:.1}%): {verdict} (needs >= {:.0}%)",
                    seeds.len(),
                    100.0 * frac,
                    100.0 * COMPASS_ASYNC_PASS_FRACTION
                );
            }
            Ok(())
        }
    }
}

/// `calibrate-check`: evaluate every configured anchor and print one
/// PASS/FAIL line each. Any FAIL is a runtime error (exit 3).
pub fn calibrate_check(config: &Path) -> Result<(), CliError> {
    let file = ScenarioFile::load(config)?;
    let lines = calibrate::run_checks(&file)?;
    if lines.is_empty() {
        println!("no calibration anchors configured");
        return Ok(());
    }
    for line in &lines {
        println!("{}", line.render());
    }
    let failed = lines.iter().filter(|l| !l.passed).count();
    if failed > 0 {
        return Err(CliError::Runtime(format!(
            "{failed} of {} calibration checks failed",
            lines.len()
        )));
    }
    Ok(())
}

/// `emit-defaults`: write the shipped scenario files byte-for-byte.
pub fn emit_defaults(out: &Path, force: bool) -> Result<(), CliError> {
    for (name, text) in scenarios::SHIPPED {
        let path = out.join(name);
        write_file(&path, text, force)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
