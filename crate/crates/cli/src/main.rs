use std::fs;
use std::io::Write;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fedsvd::attacks::{attack_suite, AttackConfig};
use fedsvd::linalg::DenseMatrix;
use fedsvd::masks::{efficient_orthogonal, generate_p, split_q, SeededGaussianStream};
use fedsvd::protocol::{run_csp, run_ta, run_user, tcp_role_endpoint, SessionConfig, UserInput};
use fedsvd::storage::{read_matrix, streamed_mask_apply, write_blocks, write_matrix, write_strip, Layout};
use fedsvd::transport::{Endpoint, PartyId, ShaperConfig};
use fedsvd_cli::bench::{bench_sweep, linear_r2, write_bench_csv, BenchConfig};
use fedsvd_cli::config::{config_to_text, load_config};
use fedsvd_cli::data::{
    ml100k_like_ratings, mnist_like, ratings_to_dense, split_columns, synth_powerlaw, wine_like,
};
use fedsvd_cli::ingest::{ingest_csv, ingest_ratings};
use fedsvd_cli::manifest::RunManifest;
use fedsvd_cli::metrics::{metric_suite, Factors};
use fedsvd_cli::report::{write_attack_csv, write_attack_summary};
use fedsvd_cli::run::{role_dir, run_session, write_csp_output, write_outcome, write_ta_output, write_user_output};
use fedsvd_cli::run::{RunOptions, TransportMode};

#[derive(Parser)]
#[command(name = "fedsvd", version, about = "Federated SVD with removable orthogonal masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as a MatrixFile.
    GenData(GenDataArgs),
    /// Write the left mask for a seed as a BlockFile, and optionally the right-mask strips.
    GenMask(GenMaskArgs),
    /// Convert a CSV table or a ratings file into a MatrixFile.
    Ingest(IngestArgs),
    /// Run a session, all roles in one process or one role over TCP.
    Run(RunArgs),
    /// Compute `P·X·Qᵢ` from files under a memory budget.
    MaskApply(MaskApplyArgs),
    /// Run the ICA attack suite on masked data and write a CSV report.
    Attack(AttackArgs),
    /// Compare a session's output directory with the centralized SVD.
    Metrics(MetricsArgs),
    /// Time sessions over growing column counts.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Dataset {
    Powerlaw,
    Wine,
    Mnist,
    Ml100k,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(value_enum)]
    kind: Dataset,
    #[arg(long, default_value_t = 64)]
    m: usize,
    /// Columns; for mnist, the number of images.
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Store the transpose.
    #[arg(long)]
    transpose: bool,
    /// For ml100k, also write the `user item rating` triples here.
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenMaskArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    block_size: usize,
    #[arg(long)]
    seed: u64,
    /// Comma-separated user widths; writes `strip{i}.blk` next to the output,
    /// with `Q` drawn from seed + 1.
    #[arg(long, value_delimiter = ',')]
    widths: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    input: PathBuf,
    /// Skip the first CSV row.
    #[arg(long)]
    header: bool,
    /// Whitespace-separated `user item rating` triples, items as rows.
    #[arg(long)]
    ratings: bool,
    #[arg(long)]
    transpose: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Role {
    Ta,
    Csp,
    User,
    AllInOne,
}

#[derive(Args)]
struct SessionFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Row count, when no config is given.
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated column counts per user, when no config is given.
    #[arg(long, value_delimiter = ',')]
    widths: Vec<usize>,
    /// Master seed of the TA.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    frac_bits: Option<u32>,
    /// Bytes a user may hold in one aggregation batch.
    #[arg(long)]
    mem_budget: Option<usize>,
}

#[derive(Args)]
struct NetFlags {
    #[arg(long, value_enum, default_value = "mem")]
    transport: TransportArg,
    /// Address the TA or CSP listens on.
    #[arg(long)]
    listen: Option<SocketAddr>,
    /// `ta=ADDR` or `csp=ADDR`; a user needs both.
    #[arg(long)]
    connect: Vec<String>,
    /// Link bandwidth in bytes per second.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Round-trip time in milliseconds.
    #[arg(long)]
    rtt: Option<f64>,
    #[arg(long, default_value_t = 600)]
    timeout_secs: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Mem,
    Tcp,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "all-in-one")]
    role: Role,
    /// User index, for `--role user`.
    #[arg(long)]
    index: Option<usize>,
    #[command(flatten)]
    session: SessionFlags,
    #[command(flatten)]
    net: NetFlags,
    /// Data files: one per user, or a single file split by the widths. A user
    /// given the full matrix keeps its own columns.
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Labels for a regression session, one value per line.
    #[arg(long)]
    label: Option<PathBuf>,
    /// Transpose every data file after loading.
    #[arg(long)]
    transpose: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MaskApplyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    p: PathBuf,
    #[arg(long)]
    strip: PathBuf,
    #[arg(long, default_value_t = 8 << 20)]
    mem_budget: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    transpose: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 100, 1000])]
    block_sizes: Vec<usize>,
    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    max_components: usize,
    /// Report CSV; a `.summary.csv` sibling holds the means.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// The full plaintext matrix.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    transpose: bool,
    /// Output directory of a session.
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 256)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [2000, 4000, 8000, 16000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    users: usize,
    #[arg(long, default_value_t = 100)]
    block_size: usize,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    net: NetFlags,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::GenMask(a) => gen_mask(a),
        Command::Ingest(a) => ingest(a),
        Command::Run(a) => run(a),
        Command::MaskApply(a) => mask_apply(a),
        Command::Attack(a) => attack(a),
        Command::Metrics(a) => metrics(a),
        Command::Bench(a) => bench(a),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn save(path: &Path, x: &DenseMatrix) -> Result<()> {
    ensure_parent(path)?;
    write_matrix(path, x, Layout::RowMajor).with_context(|| format!("writing {}", path.display()))
}

fn load(path: &Path, transpose: bool) -> Result<DenseMatrix> {
    let x = read_matrix(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(if transpose { x.transpose() } else { x })
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let x = match a.kind {
        Dataset::Powerlaw => synth_powerlaw(a.m, a.n, a.alpha, a.seed)?,
        Dataset::Wine => wine_like(a.seed),
        Dataset::Mnist => mnist_like(a.n, a.seed),
        Dataset::Ml100k => {
            let ratings = ml100k_like_ratings(a.seed);
            if let Some(path) = &a.ratings {
                ensure_parent(path)?;
                let mut w = std::io::BufWriter::new(fs::File::create(path)?);
                for r in &ratings {
                    writeln!(w, "{}\t{}\t{}", r.user, r.item, r.rating)?;
                }
                w.flush()?;
            }
            ratings_to_dense(&ratings, None)
        }
    };
    let x = if a.transpose { x.transpose() } else { x };
    save(&a.out, &x)?;
    println!("wrote {}x{} to {}", x.rows(), x.cols(), a.out.display());
    Ok(())
}

fn gen_mask(a: GenMaskArgs) -> Result<()> {
    let p = generate_p(a.seed, a.m, a.block_size)?;
    ensure_parent(&a.out)?;
    write_blocks(&a.out, &p)?;
    if !a.widths.is_empty() {
        let n = a.widths.iter().sum();
        let q = efficient_orthogonal(n, a.block_size, &mut SeededGaussianStream::new(a.seed.wrapping_add(1)))?;
        let dir = a.out.parent().unwrap_or(Path::new("."));
        for (i, s) in split_q(&q, &a.widths)?.iter().enumerate() {
            write_strip(dir.join(format!("strip{i}.blk")), s)?;
        }
    }
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let x = if a.ratings {
        ingest_ratings(&a.input, None)?
    } else {
        ingest_csv(&a.input, a.header)?
    };
    let x = if a.transpose { x.transpose() } else { x };
    save(&a.out, &x)?;
    println!("wrote {}x{} to {}", x.rows(), x.cols(), a.out.display());
    Ok(())
}

fn session_config(f: &SessionFlags) -> Result<SessionConfig> {
    let mut cfg = match &f.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let m = f.m.ok_or_else(|| anyhow!("--m is required without --config"))?;
            if f.widths.is_empty() {
                bail!("--widths is required without --config");
            }
            let b = f.block_size.ok_or_else(|| anyhow!("--block-size is required without --config"))?;
            SessionConfig::new(m, f.widths.clone(), b)
        }
    };
    if let Some(s) = f.seed {
        cfg.master_seed = s;
    }
    if let Some(b) = f.block_size {
        cfg.block_size = b;
    }
    if let Some(bits) = f.frac_bits {
        cfg.codec = fedsvd::secagg::Codec::FixedPoint(fedsvd::secagg::FixedPointCodec::new(bits)?);
    }
    if let Some(budget) = f.mem_budget {
        cfg.batch_budget = budget;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn shaper(net: &NetFlags) -> Result<Option<ShaperConfig>> {
    if net.bandwidth.is_none() && net.rtt.is_none() {
        return Ok(None);
    }
    Ok(Some(ShaperConfig::new(net.bandwidth, net.rtt)?))
}

fn run_options(net: &NetFlags) -> Result<RunOptions> {
    Ok(RunOptions {
        transport: match net.transport {
            TransportArg::Mem => TransportMode::Mem,
            TransportArg::Tcp => TransportMode::Tcp,
        },
        shaper: shaper(net)?,
        timeout: Duration::from_secs(net.timeout_secs),
    })
}

fn read_label(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| l.parse().with_context(|| format!("label line {}: {l:?}", i + 1)))
        .collect()
}

fn peer_addr(connect: &[String], role: &str) -> Result<Option<SocketAddr>> {
    for c in connect {
        let (name, addr) = c.split_once('=').ok_or_else(|| anyhow!("--connect expects ROLE=ADDR, got {c:?}"))?;
        if name == role {
            return Ok(Some(addr.parse().with_context(|| format!("bad address {addr:?}"))?));
        }
    }
    Ok(None)
}

fn write_manifest(a: &RunArgs, cfg: &SessionConfig, opts: &RunOptions) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let manifest = RunManifest {
        command: "run".into(),
        config: a.session.config.clone(),
        seeds: vec![
            ("master_seed".into(), cfg.master_seed),
            ("user_seed".into(), cfg.user_seed),
        ],
        datasets: a.data.iter().chain(&a.label).cloned().collect(),
        out_dir: a.out.clone(),
        transport: opts.transport,
        bandwidth_bytes_per_sec: opts.shaper.and_then(|s| s.bandwidth_bytes_per_sec),
        rtt_ms: opts.shaper.and_then(|s| s.rtt_ms),
    };
    fs::write(a.out.join("manifest.txt"), manifest.to_text())?;
    fs::write(a.out.join("session.cfg"), config_to_text(cfg))?;
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = session_config(&a.session)?;
    let opts = run_options(&a.net)?;
    let label = a.label.as_deref().map(read_label).transpose()?;
    match a.role {
        Role::AllInOne => {
            let loaded = a.data.iter().map(|p| load(p, a.transpose)).collect::<Result<Vec<_>>>()?;
            let parts = match loaded.len() {
                1 if cfg.k() > 1 => split_columns(&loaded[0], &cfg.widths)?,
                n if n == cfg.k() => loaded,
                n => bail!("{n} data files for {} users", cfg.k()),
            };
            write_manifest(&a, &cfg, &opts)?;
            let outcome = run_session(&cfg, &parts, label.as_deref(), &opts)?;
            write_outcome(&a.out, &outcome)?;
            if !outcome.csp.sigma.is_empty() {
                println!("sigma_1={:?} rank={}", outcome.csp.sigma[0], outcome.csp.sigma.len());
            }
        }
        Role::Ta | Role::Csp => {
            let addr = a.net.listen.ok_or_else(|| anyhow!("--listen is required for the TA and the CSP"))?;
            let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            println!("listening on {}", listener.local_addr()?);
            std::io::stdout().flush()?;
            let me = if a.role == Role::Ta { PartyId::Ta } else { PartyId::Csp };
            let ep = shaped(tcp_role_endpoint(me, cfg.k(), Some(&listener), None, None, opts.timeout)?, &opts);
            write_manifest(&a, &cfg, &opts)?;
            if me == PartyId::Ta {
                write_ta_output(&role_dir(&a.out, me), &run_ta(&cfg, ep)?)?;
            } else {
                write_csp_output(&role_dir(&a.out, me), &run_csp(&cfg, ep)?)?;
            }
        }
        Role::User => {
            let index = a.index.ok_or_else(|| anyhow!("--index is required for a user"))?;
            if index >= cfg.k() {
                bail!("user {index} outside 0..{}", cfg.k());
            }
            let [path] = a.data.as_slice() else {
                bail!("a user takes exactly one --data file");
            };
            let mut x = load(path, a.transpose)?;
            if x.cols() == cfg.n() && cfg.k() > 1 {
                let start = cfg.col_starts()[index];
                x = x.slice_cols(start..start + cfg.widths[index]);
            }
            let ta = peer_addr(&a.net.connect, "ta")?.ok_or_else(|| anyhow!("--connect ta=ADDR is required"))?;
            let csp = peer_addr(&a.net.connect, "csp")?.ok_or_else(|| anyhow!("--connect csp=ADDR is required"))?;
            let me = PartyId::User(index as u32);
            let ep = shaped(tcp_role_endpoint(me, cfg.k(), None, Some(ta), Some(csp), opts.timeout)?, &opts);
            write_manifest(&a, &cfg, &opts)?;
            let input = UserInput {
                index,
                data: &x,
                label: label.as_deref(),
            };
            write_user_output(&role_dir(&a.out, me), &run_user(&cfg, input, ep)?)?;
        }
    }
    Ok(())
}

fn shaped(ep: Endpoint, opts: &RunOptions) -> Endpoint {
    match opts.shaper {
        Some(s) => ep.shape(s),
        None => ep,
    }
}

fn mask_apply(a: MaskApplyArgs) -> Result<()> {
    ensure_parent(&a.out)?;
    let report = streamed_mask_apply(&a.data, &a.p, &a.strip, &a.out, a.mem_budget, Layout::RowMajor)?;
    println!(
        "peak_bytes={} budget={} left_blocks={} segments={}",
        report.peak_bytes, report.budget, report.left_blocks, report.segments_applied
    );
    Ok(())
}

fn attack(a: AttackArgs) -> Result<()> {
    let x = load(&a.data, a.transpose)?;
    let cfg = AttackConfig {
        b_values: a.block_sizes.clone(),
        seeds: (a.seed..a.seed + a.seeds).collect(),
        max_components: a.max_components,
        ..AttackConfig::default()
    };
    let reports = attack_suite(&x, &cfg)?;
    ensure_parent(&a.out)?;
    write_attack_csv(&reports, fs::File::create(&a.out)?)?;
    write_attack_summary(&reports, &cfg.b_values, fs::File::create(a.out.with_extension("summary.csv"))?)?;
    write_attack_summary(&reports, &cfg.b_values, std::io::stdout())
}

/// Reads `U`, `Σ` and the stacked `Vᵀ` blocks from a session directory.
fn read_factors(dir: &Path) -> Result<Factors> {
    let first = dir.join("user0");
    let u = read_matrix(first.join("u.fsvm")).context("reading user0/u.fsvm")?;
    let sigma = read_label(&first.join("sigma.txt"))?;
    let mut blocks = Vec::new();
    for i in 0.. {
        let path = dir.join(format!("user{i}")).join("vt.fsvm");
        if !path.exists() {
            break;
        }
        blocks.push(read_matrix(&path)?);
    }
    if blocks.is_empty() {
        bail!("no user{{i}}/vt.fsvm under {}", dir.display());
    }
    let refs: Vec<&DenseMatrix> = blocks.iter().collect();
    Ok(Factors {
        u,
        sigma,
        vt: DenseMatrix::hstack(&refs)?,
    })
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let x = load(&a.data, a.transpose)?;
    let text = metric_suite(&read_factors(&a.result)?, &x)?.to_text();
    match &a.out {
        Some(path) => {
            ensure_parent(path)?;
            fs::write(path, &text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        m: a.m,
        sizes: a.sizes.clone(),
        users: a.users,
        block_size: a.block_size,
        alpha: a.alpha,
        seed: a.seed,
        opts: run_options(&a.net)?,
    };
    let points = bench_sweep(&cfg)?;
    ensure_parent(&a.out)?;
    write_bench_csv(&points, fs::File::create(&a.out)?)?;
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ts: Vec<f64> = points.iter().map(|p| p.wall_secs).collect();
    println!("time_vs_n_r2={:.4}", linear_r2(&ns, &ts));
    Ok(())
}
