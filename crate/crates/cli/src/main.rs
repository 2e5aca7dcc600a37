use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use ttc_core::bench::{self, BenchPlan};
use ttc_core::emeg::{self, EmegConfig, InitialState};
use ttc_core::ingest::{self, NormalizeOptions};
use ttc_core::verify::{self, VerifyOptions};
use ttc_core::{
    create_engine, detect_engine, ContactSet, EngineKind, Error, GraphParams, PagerConfig, ReachabilityEngine, TtcArrayStore,
    TtcTreeStore, DEFAULT_CACHE_PAGES, DEFAULT_PAGE_SIZE,
};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  I/O or malformed input
  2  usage error (unknown flag, bad flag value)
  3  missing file
  4  parameter mismatch (vertex or timestamp out of range, conflicting delta)
  5  verification found a mismatch
  6  operation not supported by this engine";

#[derive(Parser)]
#[command(name = "ttc", version, about = "Disk-backed reachability for temporal graphs", after_help = EXIT_CODES)]
struct Cli {
    /// Page size in bytes (power of two, at least 512)
    #[arg(long, global = true, default_value_t = DEFAULT_PAGE_SIZE)]
    page_size: usize,
    /// Pages held by the LRU cache; 0 disables it
    #[arg(long, global = true, default_value_t = DEFAULT_CACHE_PAGES)]
    cache_pages: usize,
    /// Seed for generators and shuffles
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Latency of every contact [default: 1, or the contact file's sidecar]
    #[arg(long, global = true)]
    delta: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Emeg,
    Complete,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum Initial {
    Empty,
    Stationary,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Array,
    Tree,
}

impl From<EngineArg> for EngineKind {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Array => EngineKind::Array,
            EngineArg::Tree => EngineKind::Tree,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchEngine {
    Array,
    Tree,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic contact file
    Generate {
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        tau: u32,
        /// Probability that an active edge disappears
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        /// Probability that an inactive edge appears
        #[arg(long, default_value_t = 0.3)]
        q: f64,
        #[arg(long, value_enum, default_value = "stationary")]
        initial: Initial,
        /// Number of distinct contacts for --model uniform
        #[arg(long, required_if_eq("model", "uniform"))]
        count: Option<usize>,
        /// One chain per unordered pair, emitted in both directions
        #[arg(long)]
        undirected: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalize a raw edge list into a contact file
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        undirected: bool,
        #[arg(long)]
        keep_duplicates: bool,
        /// Rejected: self-loops never belong to a journey
        #[arg(long)]
        keep_self_loops: bool,
    },
    /// Create a store and insert every contact of a contact file
    Build {
        #[arg(long, value_enum)]
        engine: EngineArg,
        #[arg(long)]
        contacts: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Insert in a seeded random order instead of file order
        #[arg(long)]
        shuffle_seed: Option<u64>,
    },
    /// Ask a built store a question
    Query {
        #[arg(long)]
        store: PathBuf,
        /// Label map from `ingest`; journey vertices are printed as original labels
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(subcommand)]
        query: QueryCmd,
    },
    /// Time insertions and count page accesses
    Bench {
        #[arg(long, value_enum, default_value = "both")]
        engine: BenchEngine,
        #[arg(long)]
        contacts: PathBuf,
        /// Comma-separated insertion counts; defaults to --samples even steps
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<usize>>,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        reps: u32,
        /// Raw per-checkpoint rows
        #[arg(long)]
        csv: PathBuf,
        /// Mean and standard deviation per checkpoint
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Shuffle each repetition with seed + repetition
        #[arg(long)]
        shuffle_seed: Option<u64>,
        /// Abort a repetition once its insertion time exceeds this many seconds; 0 means no limit
        #[arg(long, default_value_t = 300.0)]
        time_limit: f64,
        /// Also time this many random can-reach queries on a cache-less store
        #[arg(long, default_value_t = 0)]
        queries: u64,
        /// Directory for temporary stores [default: next to --csv]
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
    /// Check both engines against each other or against brute force
    Verify {
        /// Check this contact file (inserted in file order)
        #[arg(long)]
        contacts: Option<PathBuf>,
        /// Compare with brute force instead of engine against engine
        #[arg(long)]
        against_oracle: bool,
        /// Check this many random instances
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 12)]
        max_n: u32,
        #[arg(long, default_value_t = 12)]
        max_tau: u32,
        /// Random is-connected windows per instance
        #[arg(long, default_value_t = 20)]
        windows: usize,
    },
}

#[derive(Subcommand)]
enum QueryCmd {
    /// Is there a journey from U to V leaving at or after T1 and arriving by T2?
    CanReach { u: i64, v: i64, t1: u32, t2: u32 },
    /// Is every ordered pair connected within [T1, T2]?
    IsConnected { t1: u32, t2: u32 },
    /// Print an earliest-arrival journey as "u v t" lines, or NONE
    Journey { u: i64, v: i64, t1: u32, t2: u32 },
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NotFound(_) => 3,
            Error::InvalidArgument(_) | Error::InvalidParams(_) => 4,
            Error::Unsupported(_) => 6,
            _ => 1,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    ttc_core::pager::check_page_size(cli.page_size).map_err(|e| usage(e.to_string()))?;
    let pager = PagerConfig::new(cli.page_size, cli.cache_pages);
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Generate { model, n, tau, p, q, initial, count, undirected, out: path } => {
            let delta = cli.delta.unwrap_or(ttc_core::DEFAULT_DELTA);
            let cs = match model {
                Model::Emeg => {
                    let cfg = EmegConfig {
                        directed: !undirected,
                        initial: match initial {
                            Initial::Empty => InitialState::Empty,
                            Initial::Stationary => InitialState::Stationary,
                        },
                        delta,
                        ..EmegConfig::new(n, tau, p, q, cli.seed)
                    };
                    cfg.validate().map_err(|e| usage(e.to_string()))?;
                    emeg::generate(&cfg)?
                }
                Model::Uniform => {
                    emeg::generate_uniform(n, tau, count.unwrap_or(0), cli.seed, delta).map_err(|e| usage(e.to_string()))?
                }
                Model::Complete => {
                    GraphParams::new(n, tau, delta).map_err(|e| usage(e.to_string()))?;
                    emeg::generate_complete(n, tau, delta)?
                }
            };
            ingest::write_contacts(&path, cs.params(), cs.contacts(), None)?;
            writeln!(out, "wrote {} contacts to {} (n={n}, tau={tau}, delta={delta})", cs.len(), path.display())?;
        }
        Command::Ingest { input, out: path, undirected, keep_duplicates, keep_self_loops } => {
            let file = File::open(&input).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::NotFound(input.clone()),
                _ => e.into(),
            })?;
            let records = ingest::parse(std::io::BufReader::new(file))?;
            let opts = NormalizeOptions { undirected, keep_duplicates, keep_self_loops };
            let norm = ingest::normalize(&records, cli.delta.unwrap_or(ttc_core::DEFAULT_DELTA), opts)?;
            ingest::write_contacts(&path, norm.params, &norm.contacts, Some(&norm.labels))?;
            let p = norm.params;
            writeln!(
                out,
                "wrote {} contacts to {} (n={}, tau={}, delta={})",
                norm.contacts.len(),
                path.display(),
                p.n,
                p.tau,
                p.delta
            )?;
        }
        Command::Build { engine, contacts, store, shuffle_seed } => {
            let (params, mut list) = ingest::read_contacts(&contacts, cli.delta)?;
            if let Some(s) = shuffle_seed {
                list = ingest::shuffle(&list, s);
            }
            let kind = EngineKind::from(engine);
            let mut e = create_engine(kind, &store, params, pager)?;
            let mut changed = 0usize;
            for c in &list {
                changed += usize::from(e.add_contact(*c)?);
            }
            e.flush()?;
            writeln!(
                out,
                "built {kind} store {} (n={}, tau={}, delta={}): {} contacts, {changed} changed the closure",
                store.display(),
                params.n,
                params.tau,
                params.delta,
                list.len()
            )?;
        }
        Command::Query { store, labels, query } => query_cmd(&mut out, &store, labels.as_deref(), query, cli.cache_pages)?,
        Command::Bench {
            engine,
            contacts,
            checkpoints,
            samples,
            reps,
            csv,
            summary,
            shuffle_seed,
            time_limit,
            queries,
            work_dir,
        } => {
            let time_limit = match time_limit {
                s if !(s.is_finite() && s >= 0.0) => return Err(usage(format!("--time-limit {s} is not a duration"))),
                0.0 => None,
                s => Some(Duration::from_secs_f64(s)),
            };
            if reps == 0 {
                return Err(usage("--reps must be at least 1"));
            }
            let (params, list) = ingest::read_contacts(&contacts, cli.delta)?;
            let checkpoints = checkpoints.unwrap_or_else(|| bench::even_checkpoints(list.len(), samples));
            let work_dir = work_dir.unwrap_or_else(|| csv.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf());
            let kinds = match engine {
                BenchEngine::Array => vec![EngineKind::Array],
                BenchEngine::Tree => vec![EngineKind::Tree],
                BenchEngine::Both => EngineKind::ALL.to_vec(),
            };
            let mut rows = Vec::new();
            for kind in kinds.iter().copied() {
                let plan = BenchPlan {
                    engine: kind,
                    params,
                    contacts: list.clone(),
                    checkpoints: checkpoints.clone(),
                    repetitions: reps,
                    seed: shuffle_seed,
                    pager,
                    time_limit,
                    work_dir: work_dir.clone(),
                };
                let outcome = bench::run(&plan)?;
                if !outcome.aborted.is_empty() {
                    writeln!(out, "{kind}: time limit reached in repetitions {:?}", outcome.aborted)?;
                }
                rows.extend(outcome.rows);
            }
            bench::write_rows(BufWriter::new(File::create(&csv)?), &rows)?;
            let table = bench::summarize(&rows, Some(reps as usize));
            if let Some(path) = summary {
                bench::write_summary(BufWriter::new(File::create(path)?), &table)?;
            }
            for kind in kinds.iter() {
                let last = table.iter().rev().find(|r| r.engine == kind.name() && r.inserted == list.len());
                match last.and_then(|r| r.elapsed_ns.map(|e| (r, e))) {
                    Some((r, e)) => writeln!(
                        out,
                        "{kind}: {} contacts in {:.3} s (sd {:.3}), {:.0} device reads, {:.0} device writes",
                        r.inserted,
                        e.mean / 1e9,
                        e.std / 1e9,
                        r.device_reads.map_or(0.0, |x| x.mean),
                        r.device_writes.map_or(0.0, |x| x.mean)
                    )?,
                    None => writeln!(out, "{kind}: -")?,
                }
            }
            if queries > 0 {
                for kind in kinds {
                    let path = work_dir.join(format!("bench-queries-{kind}.store"));
                    let _ = std::fs::remove_file(&path);
                    let stats = (|| {
                        let mut e = create_engine(kind, &path, params, pager)?;
                        for c in &list {
                            e.add_contact(*c)?;
                        }
                        e.flush()?;
                        drop(e);
                        let mut e = open_engine(&path, 0)?;
                        bench::query_bench(e.as_mut(), queries, 0)
                    })();
                    let _ = std::fs::remove_file(&path);
                    let stats = stats?;
                    writeln!(
                        out,
                        "{kind}: {} can-reach queries, {:.0} ns mean, {:.2} device reads each",
                        stats.queries, stats.mean_ns, stats.device_reads_per_query
                    )?;
                }
            }
        }
        Command::Verify { contacts, against_oracle, random, max_n, max_tau, windows } => {
            if contacts.is_none() && random.is_none() {
                return Err(usage("verify needs --contacts or --random"));
            }
            let dir = std::env::temp_dir().join(format!("ttc-verify-{}", std::process::id()));
            std::fs::create_dir_all(&dir)?;
            let opts = VerifyOptions { against_oracle, windows, pager, seed: cli.seed };
            let result = (|| -> ttc_core::Result<verify::VerifyReport> {
                let mut report = verify::VerifyReport::default();
                if let Some(path) = &contacts {
                    let (params, list) = ingest::read_contacts(path, cli.delta)?;
                    let cs = ContactSet::new(params, list.iter().copied())?;
                    let r = verify::verify_instance(&cs, &list, &dir, &opts)?;
                    report.instances += r.instances;
                    report.queries += r.queries;
                    report.mismatches.extend(r.mismatches);
                }
                if let Some(k) = random {
                    let r = verify::verify_random(k, max_n, max_tau, &dir, &opts)?;
                    report.instances += r.instances;
                    report.queries += r.queries;
                    report.mismatches.extend(r.mismatches);
                }
                Ok(report)
            })();
            let _ = std::fs::remove_dir_all(&dir);
            let report = result?;
            let against = if against_oracle { "brute force" } else { "each other" };
            if let Some(m) = report.mismatches.first() {
                return Err(Failure {
                    code: 5,
                    msg: format!("mismatch after {} instances checked against {against}: {m}", report.instances),
                });
            }
            writeln!(out, "ok: {} instances, {} answers checked against {against}", report.instances, report.queries)?;
        }
    }
    Ok(())
}

fn open_engine(path: &Path, cache_pages: usize) -> ttc_core::Result<Box<dyn ReachabilityEngine>> {
    Ok(match detect_engine(path)? {
        EngineKind::Array => Box::new(TtcArrayStore::open(path, cache_pages)?),
        EngineKind::Tree => Box::new(TtcTreeStore::open(path, cache_pages)?),
    })
}

struct Labels(Option<Vec<i64>>);

impl Labels {
    fn id(&self, x: i64) -> CliResult<u32> {
        u32::try_from(x).map_err(|_| Failure { code: 4, msg: format!("vertex {x} out of range") })
    }

    fn name(&self, id: u32) -> String {
        match &self.0 {
            Some(labels) => labels[id as usize].to_string(),
            None => id.to_string(),
        }
    }
}

fn query_cmd(out: &mut impl Write, store: &Path, labels: Option<&Path>, query: QueryCmd, cache_pages: usize) -> CliResult {
    let labels = Labels(labels.map(ingest::read_labels).transpose()?);
    match query {
        QueryCmd::CanReach { u, v, t1, t2 } => {
            let mut e = open_engine(store, cache_pages)?;
            writeln!(out, "{}", e.can_reach(labels.id(u)?, labels.id(v)?, t1, t2)?)?;
        }
        QueryCmd::IsConnected { t1, t2 } => {
            let mut e = open_engine(store, cache_pages)?;
            writeln!(out, "{}", e.is_connected(t1, t2)?)?;
        }
        QueryCmd::Journey { u, v, t1, t2 } => {
            if detect_engine(store)? != EngineKind::Array {
                return Err(Error::Unsupported("journey reconstruction needs a ttc-array store".into()).into());
            }
            let mut s = TtcArrayStore::open(store, cache_pages)?;
            let j = s.reconstruct_journey(labels.id(u)?, labels.id(v)?, t1, t2)?;
            if j.is_empty() {
                writeln!(out, "NONE")?;
            }
            for c in &j.contacts {
                writeln!(out, "{} {} {}", labels.name(c.u), labels.name(c.v), c.t)?;
            }
        }
    }
    Ok(())
}
