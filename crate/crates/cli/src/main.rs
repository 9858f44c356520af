use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

use passcheck::verifier::{Mode, ModePreset};

/// Passivity verification of pole-residue scattering macromodels.
#[derive(Parser, Debug)]
#[command(name = "passcheck", version, about)]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true, env = "PASSCHECK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the adaptive passivity check on one model.
    Check(CheckArgs),
    /// Compare the adaptive check against the Hamiltonian eigenvalue test.
    Compare(CompareArgs),
    /// Generate a synthetic model corpus with a manifest.
    GenCorpus(CorpusArgs),
    /// Sweep the metric densely over the warped axis.
    DenseCheck(DenseArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Model file (JSON, pole-residue form).
    #[arg(long)]
    model: PathBuf,
    /// Read frequencies, poles and residues as Hz-based and convert to rad/s.
    #[arg(long)]
    hz: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct PresetArgs {
    /// soft, hard or final.
    #[arg(long, default_value = "hard")]
    mode: String,
    /// JSON file holding a complete preset; replaces --mode.
    #[arg(long)]
    preset: Option<PathBuf>,
    /// Resolution parameter; "inf" disables the resolution scan.
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    r_cp: Option<usize>,
    #[arg(long)]
    r_rp: Option<usize>,
    #[arg(long)]
    r_hf: Option<usize>,
    /// Damping compensation factor for high-Q poles.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    q_max: Option<f64>,
    #[arg(long)]
    kappa: Option<usize>,
    /// Tail extent in decades above omega_max.
    #[arg(long)]
    decades: Option<f64>,
    /// Partition factor M (odd, >= 3).
    #[arg(long)]
    partition: Option<usize>,
    #[arg(long)]
    initial_level: Option<u32>,
    #[arg(long)]
    delta_zeta: Option<f64>,
    #[arg(long)]
    delta_theta: Option<f64>,
    #[arg(long)]
    delta_eta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon_decay: Option<f64>,
    /// Comma-separated budget totals.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    #[arg(long)]
    basket_reuse: Option<bool>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    preset: PresetArgs,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write merged samples as CSV here.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Write the search trace as line-delimited JSON here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also run the Hamiltonian test and print its verdict.
    #[arg(long)]
    oracle: bool,
    /// Also run a dense sweep with this many points.
    #[arg(long)]
    dense: Option<usize>,
    /// Relative tolerance of band-edge refinement.
    #[arg(long, default_value_t = 1e-9)]
    refine_tol: f64,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    preset: PresetArgs,
    /// Write the comparison JSON here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Points of the dense tiebreak sweep.
    #[arg(long, default_value_t = passcheck::compare::DENSE_TIEBREAK_POINTS)]
    dense_points: usize,
    /// Run the dense sweep even when both methods agree.
    #[arg(long)]
    always_dense: bool,
    /// Largest eigenproblem dimension the oracle accepts.
    #[arg(long, default_value_t = 4000)]
    max_dim: usize,
    /// Relative tolerance of the imaginary-axis eigenvalue test.
    #[arg(long, default_value_t = 1e-8)]
    imag_tol: f64,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    ports: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    min_order: usize,
    #[arg(long, default_value_t = 10)]
    max_order: usize,
    /// Target peak metrics, cycled through the entries.
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.99,1.001,1.2")]
    targets: Vec<f64>,
}

#[derive(Args, Debug)]
struct DenseArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1_000_000)]
    count: usize,
    /// Preset whose warping defines the sweep.
    #[arg(long, default_value = "hard")]
    mode: String,
}

impl PresetArgs {
    fn resolve(&self) -> anyhow::Result<ModePreset> {
        let mut preset = match &self.preset {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
            None => ModePreset::for_mode(self.mode.parse::<Mode>()?),
        };
        let w = &mut preset.warp;
        if let Some(rho) = &self.rho {
            w.rho = match rho.as_str() {
                "inf" | "infinity" => f64::INFINITY,
                v => v.parse()?,
            };
        }
        override_with(&mut w.r_cp, self.r_cp);
        override_with(&mut w.r_rp, self.r_rp);
        override_with(&mut w.r_hf, self.r_hf);
        override_with(&mut w.c, self.c);
        override_with(&mut w.q_max, self.q_max);
        override_with(&mut w.kappa, self.kappa);
        override_with(&mut w.decades, self.decades);
        let s = &mut preset.search;
        override_with(&mut s.partition, self.partition);
        override_with(&mut s.initial_level, self.initial_level);
        override_with(&mut s.delta_zeta, self.delta_zeta);
        override_with(&mut s.delta_theta, self.delta_theta);
        override_with(&mut s.delta_eta, self.delta_eta);
        override_with(&mut s.epsilon, self.epsilon);
        override_with(&mut s.epsilon_decay, self.epsilon_decay);
        override_with(&mut s.budget_schedule, self.budgets.clone());
        override_with(&mut s.basket_reuse, self.basket_reuse);
        preset.validate()?;
        for warning in preset.warp.warnings() {
            eprintln!("warning: {warning}");
        }
        Ok(preset)
    }
}

fn override_with<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Check(args) => commands::check(args),
        Command::Compare(args) => commands::compare(args),
        Command::GenCorpus(args) => commands::gen_corpus(args),
        Command::DenseCheck(args) => commands::dense_check(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
