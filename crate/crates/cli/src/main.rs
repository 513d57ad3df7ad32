//! Experiment drivers: random inputs, rank diagnostics, explicit MPS
//! construction, DMRG with and without mode optimization, tail truncations
//! and FCIDUMP import. Reports are JSON; human-readable tables go to stderr.

mod commands;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bond3::mps::DEFAULT_RANK_TOL;
use bond3::pair::PAIR_TOL;
use commands::{DmrgOptions, Source, Status};

#[derive(Parser)]
#[command(name = "bond3", version, about = "Two-fermion MPS experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gaussian random normalized two-particle state (DenseState JSON).
    RandomState {
        #[arg(long = "L")]
        orbitals: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Symmetrized Gaussian random integrals (Hamiltonian JSON).
    RandomHamiltonian {
        #[arg(long = "L")]
        orbitals: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Unfolding ranks before and after the natural-orbital rotation, and the
    /// lower-bound check over random rotations.
    Ranks {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explicit bond-dimension-three MPS of a two-particle state.
    BuildMps {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = PAIR_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ground and excited energies by DMRG against the exact sector solve.
    Dmrg(DmrgArgs),
    /// `dmrg --mo`: DMRG with orbital optimization.
    Modeopt(DmrgArgs),
    /// Truncations of the half-infinite pair MPS.
    Tail {
        /// JSON array of pair amplitudes.
        #[arg(long, conflicts_with = "geometric")]
        lambdas: Option<PathBuf>,
        /// Use lambda_l = 2^-l for l = 1..=COUNT instead of a file.
        #[arg(long, value_name = "COUNT")]
        geometric: Option<usize>,
        /// Comma-separated even lengths.
        #[arg(long, default_value = "8,12,16")]
        lengths: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Converts an FCIDUMP file to Hamiltonian JSON over spin orbitals.
    ParseFcidump {
        #[arg(long)]
        fcidump: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DmrgArgs {
    /// Hamiltonian JSON.
    #[arg(long, group = "source")]
    integrals: Option<PathBuf>,
    #[arg(long, group = "source")]
    fcidump: Option<PathBuf>,
    /// State JSON; runs on minus its projector in the state's natural orbitals.
    #[arg(long, group = "source")]
    parent: Option<PathBuf>,
    /// Orbitals of a random Hamiltonian drawn from --seed when no file is given.
    #[arg(long = "L", group = "source")]
    orbitals: Option<usize>,
    /// Particle number (default: NELEC for FCIDUMP input, otherwise 2).
    #[arg(long = "N")]
    particles: Option<usize>,
    /// Comma list, a single uniform value, or `theorem1`.
    #[arg(long, default_value = "theorem1")]
    bond_dims: String,
    #[arg(long, default_value_t = 1)]
    levels: usize,
    /// Optimize the orbitals as well.
    #[arg(long)]
    mo: bool,
    /// Also run the mode-optimized scan over bond dimensions 1, 2 and 3.
    #[arg(long)]
    scan: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Energy change between sweeps treated as converged.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_outer: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl DmrgArgs {
    fn options(self, force_mo: bool) -> anyhow::Result<(DmrgOptions, Option<PathBuf>)> {
        let source = match (self.integrals, self.fcidump, self.parent, self.orbitals) {
            (Some(p), None, None, None) => Source::Integrals(p),
            (None, Some(p), None, None) => Source::Fcidump(p),
            (None, None, Some(p), None) => Source::Parent(p),
            (None, None, None, Some(l)) => Source::Random { orbitals: l },
            _ => anyhow::bail!("give one of --integrals, --fcidump, --parent or --L"),
        };
        let opts = DmrgOptions {
            source,
            particles: self.particles,
            bond_dims: self.bond_dims,
            levels: self.levels,
            mode_opt: self.mo || force_mo,
            scan: self.scan,
            seed: self.seed,
            tol: self.tol,
            max_outer: self.max_outer,
        };
        Ok((opts, self.out))
    }
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::RandomState { orbitals, seed, out } => commands::random_state(orbitals, seed, out.as_deref()),
        Command::RandomHamiltonian { orbitals, seed, out } => {
            commands::random_hamiltonian(orbitals, seed, out.as_deref())
        }
        Command::Ranks {
            state,
            trials,
            seed,
            tol,
            out,
        } => commands::ranks(&state, trials, seed, tol, out.as_deref()),
        Command::BuildMps { state, tol, out } => commands::build_mps(&state, tol, out.as_deref()),
        Command::Dmrg(args) => {
            let (opts, out) = args.options(false)?;
            commands::run_dmrg(&opts, out.as_deref())
        }
        Command::Modeopt(args) => {
            let (opts, out) = args.options(true)?;
            commands::run_dmrg(&opts, out.as_deref())
        }
        Command::Tail {
            lambdas,
            geometric,
            lengths,
            out,
        } => {
            let values = commands::tail_lambdas(lambdas.as_deref(), geometric)?;
            commands::tail(values, &lengths, lambdas.as_deref(), out.as_deref())
        }
        Command::ParseFcidump { fcidump, out } => commands::parse_fcidump(&fcidump, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Status::ValidationFailure.code() as u8)
        }
    }
}
