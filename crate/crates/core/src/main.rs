use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ulsched::channel::generate_channels;
use ulsched::episode::{episode_seed, EpisodeOutput, EpisodeRunner, RunOptions};
use ulsched::gateway::{BackendConfig, Gateway, GatewayConfig, DEFAULT_CHAT_PATH};
use ulsched::metrics;
use ulsched::prompt::{PromptOptions, PromptTemplates, Strategy, TemplateId};
use ulsched::store::{self, RunManifest};
use ulsched::{ChannelRealization, EpisodeRecord, Error, McsTable, PolicySpec, WlanConfig};

const ENDPOINT_ENV: &str = "ULSCHED_ENDPOINT";

#[derive(Parser)]
#[command(name = "ulsched", version, about = "Uplink MU-MIMO-OFDMA scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw channel traces, one file per episode.
    GenChannels(GenArgs),
    /// Run a policy over traces (or freshly drawn channels) and record the results.
    Run(Box<RunArgs>),
    /// Compute metrics from recorded runs.
    Report {
        #[command(subcommand)]
        metric: ReportCmd,
    },
}

#[derive(Args, Clone)]
struct NetArgs {
    /// TOML file with WLAN parameters; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    stas: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    antennas: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=9))]
    rus: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    slots: Option<u64>,
    /// Cell radius in metres.
    #[arg(long)]
    radius: Option<f64>,
}

impl NetArgs {
    fn build(&self) -> Result<WlanConfig, Fail> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Fail::io(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Fail::Usage(format!("{}: {e}", p.display())))?
            }
            None => WlanConfig::default(),
        };
        if let Some(v) = self.stas {
            cfg.n_stations = v as usize;
        }
        if let Some(v) = self.antennas {
            cfg.n_antennas = v as usize;
        }
        if let Some(v) = self.rus {
            cfg.n_rus = v as usize;
        }
        if let Some(v) = self.slots {
            cfg.n_slots = v as usize;
        }
        if let Some(v) = self.radius {
            cfg.cell_radius_m = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn given(&self) -> bool {
        self.config.is_some()
            || self.stas.is_some()
            || self.antennas.is_some()
            || self.rus.is_some()
            || self.slots.is_some()
            || self.radius.is_some()
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    /// Master seed; episode seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write a JSON-lines export next to each trace.
    #[arg(long)]
    text: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Trace file or directory of traces.
    #[arg(long, conflicts_with_all = ["config", "stas", "antennas", "rus", "slots", "radius"])]
    trace: Option<PathBuf>,
    #[command(flatten)]
    net: NetArgs,
    /// Episodes to draw when no trace is given.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    /// Master seed when no trace is given.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// bcq:K, bcq-ru:K, random[:SEED[:P]], greedy, oracle[:BITS] or llm.
    #[arg(long)]
    policy: PolicySpec,
    #[arg(long, default_value = "pt1")]
    template: TemplateId,
    /// bcq:K or rate-sum.
    #[arg(long, default_value = "rate-sum")]
    strategy: Strategy,
    /// PT2: include impact factors next to the gains.
    #[arg(long)]
    include_impact: bool,
    /// Answer llm prompts with a classical policy instead of a model.
    #[arg(long)]
    mock: Option<PolicySpec>,
    /// Chat endpoint base URL (falls back to $ULSCHED_ENDPOINT).
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = DEFAULT_CHAT_PATH)]
    chat_path: String,
    #[arg(long, default_value_t = 120_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long, default_value_t = 500)]
    backoff_ms: u64,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long)]
    mcs_table: Option<PathBuf>,
    #[arg(long)]
    templates_dir: Option<PathBuf>,
    /// Report self-correction revocations back to affected agents.
    #[arg(long)]
    revocation_feedback: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct OutArgs {
    /// CSV destination; omitted means summary only.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Assignment error of an inferred run against a reference run.
    Error {
        #[arg(long)]
        inferred_run: PathBuf,
        #[arg(long)]
        actual_run: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Throughput gain of a policy run over a paired baseline run.
    Gain {
        #[arg(long)]
        policy_run: PathBuf,
        #[arg(long)]
        baseline_run: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Empirical CDF of per-slot rate-sums.
    Cdf {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-RU group-size histograms.
    Groupsize {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug)]
enum Fail {
    Usage(String),
    Code(u8, String),
}

impl Fail {
    fn io(msg: impl Into<String>) -> Self {
        Fail::Code(3, msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            Fail::Usage(_) => 2,
            Fail::Code(c, _) => *c,
        }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Format(_) => 3,
            Error::Gateway(_) => 4,
            _ => 5,
        };
        Fail::Code(code, e.to_string())
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::io(e.to_string())
    }
}

impl std::fmt::Display for Fail {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fail::Usage(m) | Fail::Code(_, m) => f.write_str(m),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::GenChannels(a) => gen_channels(a),
        Command::Run(a) => run(*a),
        Command::Report { metric } => report(metric),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn prepare_dir(dir: &Path, force: bool, owned: impl Fn(&str) -> bool) -> Result<(), Fail> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(Fail::io(format!("{} is not a directory", dir.display())));
        }
        let ours: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().is_some_and(|f| owned(&f.to_string_lossy())))
            .collect();
        if !ours.is_empty() {
            if !force {
                return Err(Fail::Usage(format!(
                    "{} already holds outputs; pass --force to overwrite",
                    dir.display()
                )));
            }
            for p in ours {
                fs::remove_file(p)?;
            }
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn check_file(path: &Path, force: bool) -> Result<(), Fail> {
    if path.exists() && !force {
        return Err(Fail::Usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn gen_channels(a: GenArgs) -> Result<(), Fail> {
    let base = a.net.build()?;
    prepare_dir(&a.out, a.force, |f| {
        f.starts_with("episode_") && (f.ends_with(".wisr") || f.ends_with(".jsonl"))
    })?;
    for e in 0..a.episodes as usize {
        let cfg = base.clone().with_seed(episode_seed(a.seed, e));
        let chan = generate_channels(&cfg)?;
        let path = a.out.join(store::trace_file_name(e));
        store::save_trace(&chan, &path)?;
        if a.text {
            store::write_trace_text(&chan, File::create(path.with_extension("jsonl"))?)?;
        }
        println!("{}  seed={}", path.display(), cfg.rng_seed);
    }
    println!(
        "wrote {} trace(s): N={} M={} R={} T={} seed={}",
        a.episodes, base.n_stations, base.n_antennas, base.n_rus, base.n_slots, a.seed
    );
    Ok(())
}

fn load_traces(path: &Path) -> Result<Vec<ChannelRealization>, Fail> {
    let files = if path.is_dir() {
        store::list_traces(path)?
    } else if path.exists() {
        vec![path.to_path_buf()]
    } else {
        return Err(Fail::io(format!("{}: no such trace", path.display())));
    };
    if files.is_empty() {
        return Err(Fail::io(format!("{}: no .wisr traces", path.display())));
    }
    files
        .iter()
        .map(|f| store::load_trace(f).map_err(|e| Fail::from(e).prefixed(f)))
        .collect()
}

impl Fail {
    fn prefixed(self, path: &Path) -> Self {
        match self {
            Fail::Usage(m) => Fail::Usage(format!("{}: {m}", path.display())),
            Fail::Code(c, m) => Fail::Code(c, format!("{}: {m}", path.display())),
        }
    }
}

fn gateway_config(a: &RunArgs, n_antennas: usize) -> Result<Option<GatewayConfig>, Fail> {
    if !matches!(a.policy, PolicySpec::Llm) {
        if a.mock.is_some() {
            return Err(Fail::Usage("--mock only applies to --policy llm".into()));
        }
        return Ok(None);
    }
    let backend = match (&a.mock, a.endpoint.clone().or_else(|| std::env::var(ENDPOINT_ENV).ok())) {
        (Some(p), _) => BackendConfig::Mock {
            policy: p.clone(),
            n_antennas,
        },
        (None, Some(endpoint)) => {
            let model = a
                .model
                .clone()
                .ok_or_else(|| Fail::Usage("--policy llm with an endpoint requires --model".into()))?;
            BackendConfig::Http {
                endpoint,
                model,
                path: a.chat_path.clone(),
                timeout_ms: a.timeout_ms,
                retries: a.retries,
                backoff_ms: a.backoff_ms,
            }
        }
        (None, None) => {
            return Err(Fail::Usage(format!(
                "--policy llm requires --endpoint (or ${ENDPOINT_ENV}) and --model, or --mock POLICY"
            )))
        }
    };
    let mut cfg = GatewayConfig::new(backend);
    cfg.max_in_flight = a.max_in_flight;
    cfg.validate()?;
    Ok(Some(cfg))
}

fn run(a: RunArgs) -> Result<(), Fail> {
    let channels: Vec<ChannelRealization> = match &a.trace {
        Some(p) => load_traces(p)?,
        None => {
            if !a.net.given() {
                return Err(Fail::Usage("run needs --trace or network flags (--stas, ...)".into()));
            }
            let base = a.net.build()?;
            (0..a.episodes as usize)
                .map(|e| generate_channels(&base.clone().with_seed(episode_seed(a.seed, e))))
                .collect::<Result<_, _>>()?
        }
    };
    let table = match &a.mcs_table {
        Some(p) => McsTable::load(p)?,
        None => McsTable::default(),
    };
    let templates = match &a.templates_dir {
        Some(d) => PromptTemplates::load_dir(d)?,
        None => PromptTemplates::default(),
    };
    let prompt = PromptOptions {
        template: a.template,
        strategy: a.strategy,
        include_impact: a.include_impact,
    };
    // fail on usage problems before touching the output directory
    let gw_configs = channels
        .iter()
        .map(|c| gateway_config(&a, c.n_antennas()))
        .collect::<Result<Vec<_>, _>>()?;
    for c in &channels {
        a.policy.validate(c.config())?;
    }

    let manifest = RunManifest {
        config_path: a.net.config.as_ref().map(|p| p.display().to_string()),
        trace: a.trace.as_ref().map(|p| p.display().to_string()),
        policy: a.policy.clone(),
        prompt: matches!(a.policy, PolicySpec::Llm).then(|| prompt.clone()),
        gateway: gw_configs.first().cloned().flatten(),
        out_dir: a.out.display().to_string(),
        master_seed: a.trace.is_none().then_some(a.seed),
        revocation_feedback: a.revocation_feedback,
    };
    manifest.validate()?;
    prepare_dir(&a.out, a.force, |f| {
        (f.starts_with("episode_") && f.ends_with(".json"))
            || matches!(f, "results.csv" | "responses.jsonl" | "manifest.json")
    })?;

    let options = RunOptions {
        prompt,
        revocation_feedback: a.revocation_feedback,
    };
    let mut outputs: Vec<EpisodeOutput> = Vec::with_capacity(channels.len());
    for (e, (chan, gw_cfg)) in channels.iter().zip(&gw_configs).enumerate() {
        let gateway = gw_cfg.as_ref().map(Gateway::from_config).transpose()?;
        let mut runner = EpisodeRunner::new(&table, &templates).with_options(options.clone());
        runner.gateway = gateway.as_ref();
        let out = runner.run(chan, &a.policy, e)?;
        store::save_record(&out.record, a.out.join(store::record_file_name(e)))?;
        outputs.push(out);
    }

    let records: Vec<EpisodeRecord> = outputs.iter().map(|o| o.record.clone()).collect();
    store::write_results(&records, File::create(a.out.join("results.csv"))?)?;
    store::save_json(&manifest, a.out.join("manifest.json"))?;
    let responses: Vec<_> = outputs.iter().flat_map(|o| o.responses.iter().cloned()).collect();
    if matches!(a.policy, PolicySpec::Llm) {
        store::write_response_log(&responses, File::create(a.out.join("responses.jsonl"))?)?;
    }

    println!("{:>7}  {:>20}  {:>14}  {:>12}", "episode", "seed", "mean_rate_sum", "parse_errors");
    for r in &records {
        println!(
            "{:>7}  {:>20}  {:>14.4}  {:>12}",
            r.episode,
            r.config.rng_seed,
            r.total_rate() / r.slots.len() as f64,
            r.parse_errors()
        );
    }
    let slots: usize = records.iter().map(|r| r.slots.len()).sum();
    let total: f64 = records.iter().map(EpisodeRecord::total_rate).sum();
    println!("policy {}: {} slot(s), mean rate-sum {:.4} -> {}", a.policy, slots, total / slots as f64, a.out.display());

    let failed: usize = outputs.iter().map(EpisodeOutput::transport_failures).sum();
    if !responses.is_empty() && failed == responses.len() {
        return Err(Fail::Code(4, format!("gateway unreachable: all {failed} requests failed")));
    }
    if failed > 0 {
        eprintln!("warning: {failed} of {} requests failed at the transport level", responses.len());
    }
    Ok(())
}

fn load_records(path: &Path) -> Result<Vec<EpisodeRecord>, Fail> {
    let recs = if path.is_dir() {
        store::load_run(path)
    } else {
        store::load_record(path).map(|r| vec![r])
    };
    recs.map_err(|e| match e {
        Error::Empty(_) => Fail::io(format!("{}: no episode records", path.display())),
        e => Fail::from(e).prefixed(path),
    })
}

fn write_csv(out: &OutArgs, f: impl FnOnce(File) -> ulsched::Result<()>) -> Result<(), Fail> {
    if let Some(p) = &out.out {
        check_file(p, out.force)?;
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        f(File::create(p)?)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn report(cmd: ReportCmd) -> Result<(), Fail> {
    match cmd {
        ReportCmd::Error {
            inferred_run,
            actual_run,
            out,
        } => {
            let inferred: Vec<_> = load_records(&inferred_run)?.iter().flat_map(EpisodeRecord::proposed).collect();
            let actual: Vec<_> = load_records(&actual_run)?.iter().flat_map(EpisodeRecord::assignments).collect();
            let rep = metrics::assignment_error(&inferred, &actual)?;
            println!("fp={} fn={} total={} error_rate={}", rep.fp, rep.fn_, rep.total, rep.error_rate);
            write_csv(&out, |f| store::write_error_csv(&rep, f))
        }
        ReportCmd::Gain {
            policy_run,
            baseline_run,
            out,
        } => {
            let rep = metrics::performance_gain(&load_records(&policy_run)?, &load_records(&baseline_run)?)?;
            println!(
                "policy_total={:.4} baseline_total={:.4} gain={:.4}%",
                rep.policy_total, rep.baseline_total, rep.gain_percent
            );
            write_csv(&out, |f| store::write_gain_csv(&rep, f))
        }
        ReportCmd::Cdf { run, out } => {
            let pts = metrics::rate_cdf(&load_records(&run)?)?;
            println!("{} distinct rate-sum(s); min {:.4}, max {:.4}", pts.len(), pts[0].0, pts[pts.len() - 1].0);
            write_csv(&out, |f| store::write_cdf_csv(&pts, f))
        }
        ReportCmd::Groupsize { run, out } => {
            let d = metrics::group_size_distribution(&load_records(&run)?)?;
            println!("{:>4}  {:>9}  {:>10}", "ru", "mean_size", "violations");
            for l in 0..d.post.len() {
                println!("{:>4}  {:>9.3}  {:>10}", l, d.mean_post(l), d.violations[l]);
            }
            write_csv(&out, |f| store::write_groupsize_csv(&d, f))
        }
    }
}
