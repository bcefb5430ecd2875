use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noma_alloc::harness::{
    self, compare_report, emit, read_records, resolve_output, summarize, ExperimentConfig, Format,
    Scenario, Summary, OUT_DIR_ENV, SWEEP_BANDWIDTHS_KHZ,
};
use noma_alloc::Error;

#[derive(Parser)]
#[command(name = "noma-alloc", version, about = "NOMA clustering and association experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario over its seeds and write per-episode metrics.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Summarize two or more metric files side by side.
    Compare {
        /// Metric files (.csv or .jsonl); the first is the reference.
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 100)]
        final_window: usize,
    },
    /// Run one scenario across total system bandwidths.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Total bandwidths in kHz, comma separated.
        #[arg(long, value_delimiter = ',')]
        bandwidths_khz: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    bandwidth_khz: Option<String>,
    /// light, medium, heavy or LO-HI.
    #[arg(long)]
    traffic: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    episodes: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    n_bs: Option<String>,
    #[arg(long)]
    n_subchannels: Option<String>,
    #[arg(long)]
    power_levels_dbm: Option<String>,
    #[arg(long)]
    power_cap_w: Option<String>,
    #[arg(long)]
    rate_threshold_bps: Option<String>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    extra: Vec<String>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; relative paths go under $NOMA_ALLOC_OUT_DIR when set.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match (&self.config, &self.scenario) {
            (Some(path), _) => ExperimentConfig::load(path).map_err(|e| match e {
                Error::Io { .. } => Error::Config(format!("config: {e}")),
                e => e,
            })?,
            (None, Some(name)) => ExperimentConfig::new(name.parse::<Scenario>()?),
            (None, None) => return Err(Error::Config("scenario: give --scenario or --config".into())),
        };
        if let (Some(_), Some(name)) = (&self.config, &self.scenario) {
            cfg.set("scenario", name)?;
        }
        let flags = [
            ("seeds", &self.seeds),
            ("bandwidth_khz", &self.bandwidth_khz),
            ("traffic", &self.traffic),
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
            ("epsilon", &self.epsilon),
            ("lambda", &self.lambda),
            ("activation", &self.activation),
            ("episodes", &self.episodes),
            ("trials", &self.trials),
            ("n_bs", &self.n_bs),
            ("n_subchannels", &self.n_subchannels),
            ("power_levels_dbm", &self.power_levels_dbm),
            ("power_cap_w", &self.power_cap_w),
            ("rate_threshold_bps", &self.rate_threshold_bps),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.extra {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set: expected KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl OutputArgs {
    fn resolve(&self, scenario: Scenario) -> Result<(PathBuf, Format), Error> {
        let format = match &self.format {
            Some(f) => f.parse()?,
            None => self
                .out
                .as_deref()
                .and_then(harness::emit::format_for_path)
                .unwrap_or(Format::Csv),
        };
        let ext = match format {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        };
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.{ext}", scenario.name())));
        let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
        Ok((resolve_output(&out, dir.as_deref()), format))
    }
}

fn print_summary(s: &Summary) {
    println!(
        "{} seeds={} episodes={} window={}",
        s.scenario, s.seeds, s.episodes, s.final_window
    );
    println!("  reward             {}", s.reward);
    println!("  sum_rate_bps       {}", s.sum_rate_bps);
    if let Some(l) = s.loss {
        println!("  loss               {l}");
    }
    println!("  clustering_time_s  {}", s.clustering_time_s);
    println!("  served_users       {}", s.served_users);
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{suffix}"),
    };
    path.with_file_name(name)
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { exp, output } => {
            let cfg = exp.load()?;
            let (path, format) = output.resolve(cfg.scenario)?;
            let out = harness::run(&cfg)?;
            emit(&out.records, format, &path)?;
            print_summary(&out.summary);
            for (seed, episode) in &out.fallbacks {
                println!("  seed {seed} switched to the deep agent after episode {episode}");
            }
            println!("wrote {}", path.display());
        }
        Command::Compare { files, final_window } => {
            let summaries = files
                .iter()
                .map(|f| {
                    let format = harness::emit::format_for_path(f).unwrap_or(Format::Csv);
                    summarize(&read_records(f, format)?, final_window)
                })
                .collect::<Result<Vec<_>, Error>>()?;
            print!("{}", compare_report(&summaries)?);
        }
        Command::Sweep {
            exp,
            output,
            bandwidths_khz,
        } => {
            let cfg = exp.load()?;
            let (path, format) = output.resolve(cfg.scenario)?;
            let bandwidths = bandwidths_khz.unwrap_or_else(|| SWEEP_BANDWIDTHS_KHZ.to_vec());
            println!("bandwidth_khz  sum_rate_bps");
            for (bw, out) in harness::sweep(&cfg, &bandwidths)? {
                let file = with_suffix(&path, &format!("bw{bw}"));
                emit(&out.records, format, &file)?;
                println!("{bw:<13}  {}", out.summary.sum_rate_bps);
            }
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::InstanceTooLarge { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
