mod settings;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use secvault::codec::{CodeParams, CodecError, Mode, StoredAs};
use secvault::gf::Field;
use secvault::resilience::{
    resilience_table, write_resilience_csv, FailurePattern, Placement, ResilienceError,
};
use secvault::sim::{
    expected_io_sweep, mu_sweep, scenario_l5, scenario_rows, write_sim_csv, SimError, SparsityPmf,
};
use secvault::store::{encode_bytes, StoreError, StoredArchive};

use settings::{
    parse_list, parse_p_grid, CodeArgs, Defaults, FileSettings, LayoutArgs, OutArgs, RootArgs,
    SweepArgs,
};

#[derive(Debug, Parser)]
#[command(
    name = "secvault",
    version,
    about = "Delta-based erasure-coded archives"
)]
struct Cli {
    /// TOML file with default settings; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode version files (oldest first) into a new archive
    Encode {
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        layout: LayoutArgs,
        #[command(flatten)]
        root: RootArgs,
        /// Archive id
        #[arg(long)]
        id: String,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Add a new version to an existing archive
    Append {
        #[command(flatten)]
        root: RootArgs,
        #[arg(long)]
        id: String,
        input: PathBuf,
    },
    /// Rebuild one version, avoiding failed nodes
    Retrieve {
        #[command(flatten)]
        root: RootArgs,
        #[arg(long)]
        id: String,
        #[arg(long)]
        version: usize,
        /// Comma-separated failed node indices
        #[arg(long, default_value = "")]
        failed: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Loss probabilities, census counts and retention over a p grid (CSV)
    Resilience {
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        /// Sparsity of each delta z_2..z_L; defaults to one delta of --gamma
        #[arg(long)]
        deltas: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// I/O experiments (CSV)
    Simulate {
        #[command(flatten)]
        kind: SimKind,
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        /// exp:<alpha>, poisson:<lambda> or table:<file>; repeatable
        #[arg(long)]
        pmf: Vec<String>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct SimKind {
    /// Monte-Carlo average reads for a sparse delta
    #[arg(long)]
    mu: bool,
    /// Expected reads under sparsity distributions
    #[arg(long)]
    expected_io: bool,
    /// Five-version read-count table
    #[arg(long)]
    scenario_l5: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Unrecoverable(String),
    Io(String),
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Unrecoverable(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Unrecoverable(m)
            | CliError::Io(m)
            | CliError::Failed(m) => m,
        }
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        let msg = e.to_string();
        match e {
            CodecError::Unrecoverable { .. }
            | CodecError::InsufficientShares { .. }
            | CodecError::ShareErased { .. } => CliError::Unrecoverable(msg),
            CodecError::InvalidParams(_)
            | CodecError::VersionOutOfRange { .. }
            | CodecError::ShapeMismatch { .. }
            | CodecError::PlacementMismatch(_) => CliError::Usage(msg),
            _ => CliError::Failed(msg),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::Codec(c) => c.into(),
            StoreError::InvalidId(_) | StoreError::SizeMismatch { .. } => CliError::Usage(msg),
            StoreError::Io { .. }
            | StoreError::NotFound(_)
            | StoreError::Conflict(_)
            | StoreError::Corrupt { .. }
            | StoreError::Manifest(_) => CliError::Io(msg),
            _ => CliError::Failed(msg),
        }
    }
}

impl From<ResilienceError> for CliError {
    fn from(e: ResilienceError) -> Self {
        let msg = e.to_string();
        match e {
            ResilienceError::Codec(c) => c.into(),
            ResilienceError::Csv(_) | ResilienceError::Io(_) => CliError::Io(msg),
            _ => CliError::Usage(msg),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let msg = e.to_string();
        match e {
            SimError::Codec(c) => c.into(),
            SimError::Resilience(r) => r.into(),
            SimError::Csv(_) | SimError::Io(_) => CliError::Io(msg),
            SimError::InsufficientSamples { .. } => CliError::Failed(msg),
            _ => CliError::Usage(msg),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn build_params(code: &CodeArgs, file: &FileSettings) -> Result<CodeParams> {
    let n = code.n.or(file.n).unwrap_or(Defaults::N);
    let k = code.k.or(file.k).unwrap_or(Defaults::K);
    let width = code.width.or(file.width).unwrap_or(Defaults::WIDTH);
    let systematic = code.systematic().or(file.systematic).unwrap_or(false);
    let field = Field::with_width(width).map_err(|e| CliError::Usage(format!("--width: {e}")))?;
    CodeParams::cauchy(n, k, &field, systematic)
        .map_err(|e| CliError::Usage(format!("code ({n}, {k}) over GF(2^{width}): {e}")))
}

fn root_dir(root: &RootArgs, file: &FileSettings) -> Result<PathBuf> {
    root.root
        .clone()
        .or_else(|| file.root.clone())
        .ok_or_else(|| CliError::Usage("no archive root: pass --root or set SECVAULT_ROOT".into()))
}

fn p_grid(sweep: &SweepArgs, file: &FileSettings) -> Result<Vec<f64>> {
    if let Some(p) = sweep.p.or(file.p) {
        return parse_p_grid(&p.to_string()).map_err(CliError::Usage);
    }
    let spec = sweep
        .p_grid
        .clone()
        .or_else(|| file.p_grid.clone())
        .unwrap_or_else(|| Defaults::P_GRID.to_string());
    parse_p_grid(&spec).map_err(CliError::Usage)
}

fn output(out: &OutArgs, file: &FileSettings) -> Result<Box<dyn Write>> {
    match out.out.clone().or_else(|| file.out.clone()) {
        Some(path) if path != Path::new("-") => {
            let f = File::create(&path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(io::stdout().lock())),
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_pmf(spec: &str, k: usize) -> Result<SparsityPmf> {
    if let Some(path) = spec.strip_prefix("table:") {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
        let table = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("{path}: bad probability {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if table.len() != k {
            return Err(CliError::Usage(format!(
                "{path}: table has {} entries, expected k = {k}",
                table.len()
            )));
        }
        return Ok(SparsityPmf::explicit(table)?);
    }
    Ok(SparsityPmf::parse(spec, k)?)
}

fn stored_name(mode: Mode, version: usize, stored_as: StoredAs) -> String {
    match (mode, stored_as) {
        (_, StoredAs::Full) => format!("x{version}"),
        (Mode::Reversed, StoredAs::Delta) => format!("z{}", version + 1),
        (_, StoredAs::Delta) => format!("z{version}"),
    }
}

fn describe(archive: &StoredArchive) -> String {
    let m = archive.manifest();
    let pattern: Vec<String> = m
        .versions
        .iter()
        .map(|v| stored_name(m.mode, v.index, v.stored_as))
        .collect();
    format!(
        "archive {}: ({}, {}) over GF(2^{}), {}, mode {}, placement {}, {} versions of {} bytes\nstored: {{{}}}",
        m.id,
        m.n,
        m.k,
        m.width,
        if m.systematic { "systematic" } else { "non-systematic" },
        m.mode,
        m.placement,
        m.versions.len(),
        m.byte_len,
        pattern.join(", ")
    )
}

fn print_versions(archive: &StoredArchive, from: usize) {
    let m = archive.manifest();
    for v in &m.versions[from - 1..] {
        let gamma = v
            .delta_gamma
            .map_or_else(|| "-".to_string(), |g| g.to_string());
        println!(
            "version {}: gamma {gamma}, slot holds {} ({}), weight {}",
            v.index,
            stored_name(m.mode, v.index, v.stored_as),
            v.stored_as,
            v.weight
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileSettings::load(path).map_err(CliError::Usage)?,
        None => FileSettings::default(),
    };
    match cli.command {
        Command::Encode {
            code,
            layout,
            root,
            id,
            inputs,
        } => {
            let params = build_params(&code, &file)?;
            let mode = layout.mode.or(file.mode).unwrap_or(Mode::Basic);
            let placement = layout
                .placement
                .or(file.placement)
                .unwrap_or(Placement::Colocated);
            let objects = inputs
                .iter()
                .map(|p| read_input(p))
                .collect::<Result<Vec<_>>>()?;
            let root = root_dir(&root, &file)?;
            let archive = encode_bytes(&objects, &params, mode, placement, &root, &id)?;
            println!("{}", describe(&archive));
            print_versions(&archive, 1);
        }
        Command::Append { root, id, input } => {
            let root = root_dir(&root, &file)?;
            let mut archive = StoredArchive::open(&root, &id)?;
            let bytes = read_input(&input)?;
            archive.append(&bytes)?;
            println!("{}", describe(&archive));
            // reversed mode rewrites the previous slot as well
            let from = match archive.manifest().mode {
                Mode::Reversed => archive.len().saturating_sub(1).max(1),
                _ => archive.len(),
            };
            print_versions(&archive, from);
        }
        Command::Retrieve {
            root,
            id,
            version,
            failed,
            out,
        } => {
            let root = root_dir(&root, &file)?;
            let archive = StoredArchive::open(&root, &id)?;
            let nodes = archive.placement_map().node_count();
            let failed = parse_list(&failed, "node").map_err(CliError::Usage)?;
            if let Some(bad) = failed.iter().find(|&&f| f >= nodes) {
                return Err(CliError::Usage(format!(
                    "node {bad} does not exist; the archive uses nodes 0..{}",
                    nodes - 1
                )));
            }
            let failures = FailurePattern::from_failed(nodes, &failed);
            let (bytes, report) = archive.retrieve_bytes(version, &failures).map_err(|e| {
                match CliError::from(e) {
                    CliError::Unrecoverable(m) => {
                        CliError::Unrecoverable(format!("version {version} is unrecoverable: {m}"))
                    }
                    other => other,
                }
            })?;
            let target = out.out.clone().or_else(|| file.out.clone());
            let mut sink = output(&out, &file)?;
            sink.write_all(&bytes)?;
            sink.flush()?;
            // keep the report off stdout when the object goes there
            let mut log: Box<dyn Write> = match target {
                Some(p) if p != Path::new("-") => Box::new(io::stdout()),
                _ => Box::new(io::stderr()),
            };
            let mode = archive.manifest().mode;
            writeln!(
                log,
                "version {version}: {} reads, restart at stored object {}",
                report.total, report.restart
            )?;
            for o in &report.objects {
                writeln!(
                    log,
                    "  object {} ({}): {} decode, {} reads",
                    o.slot,
                    stored_name(mode, o.slot, o.stored_as),
                    o.path,
                    o.reads
                )?;
            }
        }
        Command::Resilience {
            code,
            sweep,
            deltas,
            out,
        } => {
            let params = build_params(&code, &file)?;
            let grid = p_grid(&sweep, &file)?;
            let gamma = sweep.gamma.or(file.gamma).unwrap_or(Defaults::GAMMA);
            let deltas = match deltas {
                Some(s) => parse_list(&s, "sparsity").map_err(CliError::Usage)?,
                None => file.deltas.clone().unwrap_or_else(|| vec![gamma]),
            };
            if let Some(bad) = deltas.iter().find(|&&g| g > params.k()) {
                return Err(CliError::Usage(format!(
                    "delta sparsity {bad} exceeds k = {}",
                    params.k()
                )));
            }
            let rows = resilience_table(&params, &deltas, &grid)?;
            write_resilience_csv(&rows, output(&out, &file)?)?;
        }
        Command::Simulate {
            kind,
            code,
            sweep,
            pmf,
            trials,
            seed,
            out,
        } => {
            let seed = seed.or(file.seed).unwrap_or(Defaults::SEED);
            if kind.scenario_l5 {
                let s = scenario_l5()?;
                write_sim_csv(&scenario_rows(&s), None, output(&out, &file)?)?;
            } else if kind.mu {
                let params = build_params(&code, &file)?;
                let gamma = sweep.gamma.or(file.gamma).unwrap_or(Defaults::GAMMA);
                let trials = trials.or(file.trials).unwrap_or(Defaults::TRIALS);
                let grid = p_grid(&sweep, &file)?;
                let rows = mu_sweep(&params, gamma, &grid, trials, seed)?;
                write_sim_csv(&rows, Some(seed), output(&out, &file)?)?;
            } else {
                let params = build_params(&code, &file)?;
                let specs = if pmf.is_empty() {
                    file.pmf.clone().unwrap_or_else(default_pmfs)
                } else {
                    pmf
                };
                let pmfs = specs
                    .iter()
                    .map(|s| parse_pmf(s, params.k()))
                    .collect::<Result<Vec<_>>>()?;
                let rows = expected_io_sweep(&params, &pmfs)?;
                write_sim_csv(&rows, None, output(&out, &file)?)?;
            }
        }
    }
    Ok(())
}

fn default_pmfs() -> Vec<String> {
    let grid = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
    grid.iter()
        .map(|a| format!("exp:{a}"))
        .chain(grid.iter().map(|l| format!("poisson:{l}")))
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
