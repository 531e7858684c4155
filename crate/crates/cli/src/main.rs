#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use commands::{Stage, Start};
use config::ScenarioConfig;
use error::{CliError, CliResult};

/// Scattering by obstacles buried in a two-layered medium: synthetic
/// phaseless data, direct imaging and shape reconstruction.
#[derive(Parser, Debug)]
#[command(name = "layerscat", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate noisy phaseless far-field data for a scenario.
    Synth {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value = "imaging")]
        stage: Stage,
        /// Dataset file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the imaging functional on a grid and extract peaks.
    Image {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Dataset with a full pair tensor.
        #[arg(long)]
        data: PathBuf,
        /// Frequency block of the dataset to image.
        #[arg(long, default_value_t = 0)]
        block: usize,
        /// Output prefix for `-grid.csv`, `.pgm`, `.pgm.json` and `-peaks.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct obstacle shapes by multi-frequency regularized Newton.
    #[command(group(ArgGroup::new("start").required(true).args(["peaks", "resume"])))]
    Invert {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Datasets with the frequency schedule; blocks are merged.
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        /// Peaks file from `image`: one initial circle per peak.
        #[arg(long)]
        peaks: Option<PathBuf>,
        /// Curves file from a previous `invert` run to start from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Output prefix for `-trajectory.jsonl`, `-curves.json` and `-boundary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a self-check suite and print a JSON report.
    Verify {
        #[arg(value_enum)]
        suite: verify::Suite,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Scenario selection plus per-field overrides.
#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario file; the built-in presets when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,

    #[arg(long)]
    n_f: Option<usize>,
    #[arg(long)]
    n_d: Option<usize>,
    /// Boundary nodes per obstacle in the data solves.
    #[arg(long)]
    data_nodes: Option<usize>,
    /// Relative noise level.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Imaging wave number in the upper medium.
    #[arg(long)]
    k_plus: Option<f64>,
    /// Sampling region as `x_lo,x_hi,y_lo,y_hi`.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    region: Option<Vec<f64>>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Peak threshold as a fraction of the grid maximum.
    #[arg(long)]
    threshold: Option<f64>,
    /// Peak suppression radius.
    #[arg(long)]
    radius: Option<f64>,
    /// Inversion wave numbers, comma separated.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Fourier order of the reconstructed radial functions.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Boundary nodes per obstacle in the inversion solves.
    #[arg(long)]
    inversion_nodes: Option<usize>,
}

impl ScenarioArgs {
    fn resolve(&self) -> CliResult<ScenarioConfig> {
        let mut s = config::load(self.config.as_deref(), self.preset.as_deref())?;
        set(&mut s.data.n_f, self.n_f);
        set(&mut s.data.n_d, self.n_d);
        set(&mut s.data.nodes, self.data_nodes);
        set(&mut s.noise.delta, self.delta);
        set(&mut s.noise.seed, self.seed);
        set(&mut s.imaging.k_plus, self.k_plus);
        if let Some(r) = &self.region {
            s.imaging.region.x = [r[0], r[1]];
            s.imaging.region.y = [r[2], r[3]];
        }
        set(&mut s.imaging.region.nx, self.nx);
        set(&mut s.imaging.region.ny, self.ny);
        set(&mut s.imaging.threshold, self.threshold);
        if self.radius.is_some() {
            s.imaging.radius = self.radius;
        }
        let touches_inversion = self.schedule.is_some()
            || [self.rho, self.tau, self.r0].iter().any(Option::is_some)
            || [self.order, self.max_iters, self.inversion_nodes].iter().any(Option::is_some);
        if touches_inversion {
            let inv = s
                .inversion
                .as_mut()
                .ok_or_else(|| CliError::Config("inversion flags given but the scenario has no inversion section".into()))?;
            if self.schedule.is_some() {
                inv.schedule.clone_from(&self.schedule);
            }
            let n = &mut inv.newton;
            set(&mut n.rho, self.rho);
            set(&mut n.tau, self.tau);
            set(&mut n.order, self.order);
            set(&mut n.r0, self.r0);
            set(&mut n.max_iters_per_freq, self.max_iters);
            set(&mut n.nodes, self.inversion_nodes);
        }
        s.validate()?;
        Ok(s)
    }
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth { scenario, stage, out } => {
            let s = scenario.resolve()?;
            let data = commands::synth(&s, stage, &out)?;
            log::info!("wrote {} blocks to {}", data.values.len(), out.display());
        }
        Command::Image { scenario, data, block, out } => {
            let s = scenario.resolve()?;
            let dataset = commands::load_dataset(&data)?;
            let peaks = commands::image(&s, &dataset, block, &out)?;
            for p in &peaks.peaks {
                println!("peak {:.4} {:.4} {:.6e}", p.location[0], p.location[1], p.value);
            }
        }
        Command::Invert { scenario, data, peaks, resume, out } => {
            let s = scenario.resolve()?;
            let sets = data.iter().map(|p| commands::load_dataset(p)).collect::<CliResult<Vec<_>>>()?;
            let merged = commands::merge_datasets(sets)?;
            let start = match (peaks, resume) {
                (_, Some(r)) => Start::Resume(r),
                (Some(p), None) => Start::Peaks(p),
                (None, None) => unreachable!("clap requires one start option"),
            };
            let result = commands::invert(&s, &merged, &start, &out)?;
            for f in &result.summaries {
                println!(
                    "k+ = {}: {} iterations, E = {:.4e}{}",
                    f.k_plus,
                    f.iterations,
                    f.error,
                    if f.converged { "" } else { " (not converged)" }
                );
            }
        }
        Command::Verify { suite, out } => {
            let report = verify::run(suite)?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            println!("{text}");
            if let Some(path) = out {
                std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
            }
            if !report.passed {
                let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                return Err(CliError::Numerical(format!("failed checks: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
