//! `adaptidx`: generate datasets, upload them to a simulated cluster, run job
//! workloads with adaptive indexing and inspect the resulting reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use adaptidx_core::dataset::{gen_synthetic, gen_uservisits, Table};
use adaptidx_core::jobs::load_jobs;
use adaptidx_core::report;
use adaptidx_core::{Cluster, Config, Engine, JobReport};

/// Config stored next to an uploaded cluster.
const CLUSTER_CONFIG: &str = "cluster.toml";

#[derive(Parser)]
#[command(name = "adaptidx", version, about = "Adaptive block-level indexing on a simulated cluster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the six-attribute synthetic dataset as CSV.
    GenSynthetic(GenArgs),
    /// Write the nine-attribute web-log dataset as CSV.
    GenUservisits(GenArgs),
    /// Split a CSV dataset into blocks and store replicas on the cluster.
    Upload(UploadArgs),
    /// Run a jobs file against an uploaded cluster.
    Run(RunArgs),
    /// Print a saved JSON report as CSV or as a table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UploadArgs {
    /// Cluster config (TOML, or JSON by extension). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Storage root; overrides `storage_root` from the config.
    #[arg(long)]
    root: Option<PathBuf>,
    /// CSV dataset written by a gen-* command.
    #[arg(long)]
    data: PathBuf,
    /// Sort and index normal replica k on the k-th attribute.
    #[arg(long, value_delimiter = ',')]
    index_attrs: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Storage root of an uploaded cluster.
    #[arg(long)]
    root: PathBuf,
    /// Jobs file: a JSON array or one JSON document per job.
    #[arg(long)]
    jobs: PathBuf,
    /// Engine and indexer settings to use instead of the stored ones.
    /// Placement settings always come from the upload.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Per-task metrics, one JSON object per line.
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Block-to-node assignment of every job.
    #[arg(long)]
    plan_dump: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report written by `run --json`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenSynthetic(a) => generate(&a, gen_synthetic),
        Command::GenUservisits(a) => generate(&a, gen_uservisits),
        Command::Upload(a) => upload(a),
        Command::Run(a) => run(a),
        Command::Report(a) => print_report(a),
    }
}

fn generate(args: &GenArgs, gen: fn(usize, u64) -> adaptidx_core::Result<Table>) -> Result<()> {
    let table = gen(args.rows, args.seed)?;
    table.write_csv(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} rows to {}", table.row_count(), args.out.display());
    Ok(())
}

fn upload(args: UploadArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(root) = args.root {
        config.cluster.storage_root = root;
    }
    config.validate()?;
    let table = Table::read_csv(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let cluster = Cluster::open(config.cluster.clone(), config.indexer)?;
    let attrs: Vec<&str> = args.index_attrs.iter().map(String::as_str).collect();
    let summary = cluster.upload_dataset(&table, &attrs)?;
    config.save(&cluster.root().join(CLUSTER_CONFIG))?;
    println!(
        "uploaded {} records as {} blocks ({} replicas, {} bytes) to {}",
        summary.records,
        summary.blocks,
        summary.normal_replicas,
        summary.bytes_written,
        cluster.root().display()
    );
    Ok(())
}

fn stored_config(root: &Path, overrides: Option<&Path>) -> Result<Config> {
    let path = root.join(CLUSTER_CONFIG);
    let mut config =
        Config::load(&path).with_context(|| format!("{} does not hold an uploaded cluster", root.display()))?;
    config.cluster.storage_root = root.to_owned();
    if let Some(p) = overrides {
        let other = Config::load(p)?;
        config.engine = other.engine;
        config.indexer = other.indexer;
    }
    config.validate()?;
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn run(args: RunArgs) -> Result<()> {
    let config = stored_config(&args.root, args.config.as_deref())?;
    let cluster = Cluster::open(config.cluster.clone(), config.indexer)?;
    let mut engine = Engine::new(cluster, config.engine)?;
    let jobs = load_jobs(&args.jobs, engine.schema())?;
    let mut tasks_out = args.tasks.as_deref().map(create).transpose()?;
    let mut plans_out = args.plan_dump.as_deref().map(create).transpose()?;

    let mut reports = Vec::new();
    let mut failure = None;
    for job in jobs {
        let id = job.job_id.clone();
        match engine.run_job(job) {
            Ok(outcome) => {
                if let Some(w) = tasks_out.as_mut() {
                    for t in &outcome.tasks {
                        let line = serde_json::json!({ "job_id": id, "task": t });
                        writeln!(w, "{line}")?;
                    }
                }
                if let Some(w) = plans_out.as_mut() {
                    writeln!(w, "# job={id}")?;
                    w.write_all(outcome.plan.dump().as_bytes())?;
                }
                let r = &outcome.report;
                println!(
                    "{id}: {} records out, {}/{} blocks indexed, rho {}, simulated {:.3}s",
                    r.records_out,
                    r.blocks_indexed,
                    r.blocks_total,
                    r.rho.map_or("-".into(), |v| format!("{v:.4}")),
                    r.simulated_t_job
                );
                reports.push(outcome.report);
            }
            Err(e) => {
                failure = Some(anyhow::Error::new(e).context(format!("job {id} failed")));
                break;
            }
        }
    }
    // Reports of completed jobs are written even when a later job fails.
    report::save(&reports, args.csv.as_deref(), args.json.as_deref())?;
    for w in [tasks_out.as_mut(), plans_out.as_mut()].into_iter().flatten() {
        w.flush()?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn print_report(args: ReportArgs) -> Result<()> {
    let reports = report::load_json(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let stdout = std::io::stdout();
    match args.format {
        Format::Csv => report::write_csv(&reports, stdout.lock())?,
        Format::Table => write_table(&reports, &mut stdout.lock())?,
    }
    Ok(())
}

const TABLE_COLUMNS: [&str; 9] =
    ["job_id", "mode", "rho", "index_splits", "full_splits", "indexed_fraction", "simulated_t_job", "records_out", "bytes_read"];

fn table_row(r: &JobReport) -> [String; 9] {
    [
        r.job_id.clone(),
        r.mode.clone(),
        r.rho.map_or("-".into(), |v| format!("{v:.4}")),
        r.index_splits.to_string(),
        r.full_splits.to_string(),
        format!("{:.4}", r.indexed_fraction),
        format!("{:.3}", r.simulated_t_job),
        r.records_out.to_string(),
        r.bytes_read.to_string(),
    ]
}

fn write_table(reports: &[JobReport], out: &mut impl Write) -> Result<()> {
    let rows: Vec<[String; 9]> = reports.iter().map(table_row).collect();
    let mut widths = TABLE_COLUMNS.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let header = TABLE_COLUMNS.map(str::to_owned);
    for row in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = row.iter().zip(widths).map(|(c, w)| format!("{c:>w$}")).collect();
        writeln!(out, "{}", cells.join("  ").trim_end())?;
    }
    Ok(())
}
