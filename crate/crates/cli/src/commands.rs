use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use bond3::dmrg::{self, DmrgConfig, EnergyReport, ScanReport};
use bond3::error::Error;
use bond3::fcidump;
use bond3::fock::DenseState;
use bond3::hamiltonian::{self, TwoBodyHamiltonian};
use bond3::mps::{self, Mps};
use bond3::pair::{self, AntisymMatrix, PAIR_TOL};
use bond3::rank::{self, LowerBoundReport};

use crate::spec::{parse_bond_dims, parse_list, ExperimentSpec};

/// Relative reconstruction error accepted for the explicit construction.
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

/// How a command ended, mapped to the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    ValidationFailure,
    NotConverged,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::ValidationFailure => 2,
            Status::NotConverged => 3,
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Writes pretty JSON to `out`, or to stdout when absent.
pub fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn out_name(out: Option<&Path>) -> Option<String> {
    out.map(|p| p.display().to_string())
}

pub fn random_state(l: usize, seed: u64, out: Option<&Path>) -> Result<Status> {
    if l < 2 {
        bail!("a two-particle state needs at least 2 orbitals, got {l}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = pair::random_two_particle(l, &mut rng)?;
    let rank = pair::normal_form(&AntisymMatrix::from_state(&state)?, PAIR_TOL).gamma_rank();
    if rank < l {
        log::warn!("one-particle density matrix has rank {rank} < {l}");
    }
    eprintln!("random two-particle state: L = {l}, seed = {seed}, rank(gamma) = {rank}");
    emit(&state, out)?;
    Ok(Status::Success)
}

pub fn random_hamiltonian(l: usize, seed: u64, out: Option<&Path>) -> Result<Status> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ham = TwoBodyHamiltonian::random(l, &mut rng);
    eprintln!("random Hamiltonian: L = {l}, seed = {seed}");
    emit(&ham, out)?;
    Ok(Status::Success)
}

#[derive(Serialize)]
struct RanksOutput {
    spec: ExperimentSpec,
    before: mps::RankReport,
    after: mps::RankReport,
    explicit_bond_dims: Vec<usize>,
    lower_bound: Option<LowerBoundReport>,
    lower_bound_skipped: Option<String>,
}

pub fn ranks(state_path: &Path, trials: usize, seed: u64, tol: f64, out: Option<&Path>) -> Result<Status> {
    let state: DenseState = read_json(state_path)?;
    let l = state.orbitals();
    let mut spec = ExperimentSpec::new("ranks", seed)
        .tol("rank", tol)
        .input("state", state_path);
    spec.orbitals = Some(l);
    spec.particles = Some(2);
    spec.trials = Some(trials);
    spec.output = out_name(out);

    let psi = state.normalized()?;
    let before = mps::unfolding_ranks(&psi, tol);
    let nf = pair::normal_form(&AntisymMatrix::from_state(&psi)?, PAIR_TOL);
    let paired = nf.to_paired(&psi)?;
    let after = mps::unfolding_ranks(&paired, tol);
    let explicit_bond_dims = pair::build_explicit_mps(&nf.paired_state()?)?.bond_dims();
    let (lower_bound, skipped) = match rank::verify_lower_bound(&psi, trials, seed, tol) {
        Ok(r) => (Some(r), None),
        Err(e @ Error::DeficientRdm { .. }) => {
            log::info!("lower-bound check skipped: {e}");
            (None, Some(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    eprintln!("ranks before rotation: {:?}", before.ranks);
    eprintln!("ranks in natural orbitals: {:?}", after.ranks);
    let mut status = Status::Success;
    if let Some(r) = &lower_bound {
        eprintln!(
            "lower bound: {} trials, {} violations, minimal l1 {} (optimal {}), minimum is the explicit vector: {}",
            r.trials.len(),
            r.violations,
            r.min_l1,
            r.optimal_l1,
            r.minimum_is_optimal_vector
        );
        if r.even_length && (r.violations > 0 || !r.minimum_is_optimal_vector) {
            status = Status::ValidationFailure;
        }
    }
    emit(
        &RanksOutput {
            spec,
            before,
            after,
            explicit_bond_dims,
            lower_bound,
            lower_bound_skipped: skipped,
        },
        out,
    )?;
    Ok(status)
}

#[derive(Serialize)]
struct BuildOutput {
    spec: ExperimentSpec,
    bond_dims: Vec<usize>,
    reconstruction_error: f64,
    normal_form: pair::PairNormalForm,
    mps: Mps,
}

pub fn build_mps(state_path: &Path, tol: f64, out: Option<&Path>) -> Result<Status> {
    let state: DenseState = read_json(state_path)?;
    let mut spec = ExperimentSpec::new("build-mps", 0)
        .tol("normal_form", tol)
        .tol("reconstruction", RECONSTRUCTION_TOL)
        .input("state", state_path);
    spec.orbitals = Some(state.orbitals());
    spec.particles = Some(2);
    spec.output = out_name(out);
    let (mps, nf) = pair::build_bd3_from_dense(&state, tol)?;
    let rebuilt = nf.to_original(&mps.to_dense()?)?;
    let reconstruction_error = rebuilt.distance(&state) / state.norm();
    eprintln!(
        "bond dims {:?}, relative reconstruction error {reconstruction_error:.3e}",
        mps.bond_dims()
    );
    let status = if reconstruction_error <= RECONSTRUCTION_TOL {
        Status::Success
    } else {
        Status::ValidationFailure
    };
    emit(
        &BuildOutput {
            spec,
            bond_dims: mps.bond_dims(),
            reconstruction_error,
            normal_form: nf,
            mps,
        },
        out,
    )?;
    Ok(status)
}

/// Where the Hamiltonian of a `dmrg` run comes from.
pub enum Source {
    Integrals(PathBuf),
    Fcidump(PathBuf),
    Parent(PathBuf),
    Random { orbitals: usize },
}

pub struct DmrgOptions {
    pub source: Source,
    pub particles: Option<usize>,
    pub bond_dims: String,
    pub levels: usize,
    pub mode_opt: bool,
    pub scan: bool,
    pub seed: u64,
    pub tol: f64,
    pub max_outer: usize,
}

#[derive(Serialize)]
struct DmrgOutput {
    spec: ExperimentSpec,
    report: EnergyReport,
    scan: Option<ScanReport>,
}

pub fn run_dmrg(opts: &DmrgOptions, out: Option<&Path>) -> Result<Status> {
    let command = if opts.mode_opt { "modeopt" } else { "dmrg" };
    let mut spec = ExperimentSpec::new(command, opts.seed).tol("energy", opts.tol);
    spec.bond_dims = Some(opts.bond_dims.clone());
    spec.output = out_name(out);
    let config = DmrgConfig {
        energy_tol: opts.tol,
        seed: opts.seed,
        max_outer: opts.max_outer,
        ..DmrgConfig::default()
    };

    let (ham, default_n): (Option<TwoBodyHamiltonian>, usize) = match &opts.source {
        Source::Integrals(p) => {
            spec = spec.input("integrals", p);
            (Some(read_json(p)?), 2)
        }
        Source::Fcidump(p) => {
            spec = spec.input("fcidump", p);
            let (ham, data) = fcidump::parse_fcidump(p)?;
            (Some(ham), data.nelec)
        }
        Source::Random { orbitals } => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            (Some(TwoBodyHamiltonian::random(*orbitals, &mut rng)), 2)
        }
        Source::Parent(p) => {
            spec = spec.input("parent", p);
            (None, 2)
        }
    };
    let n = opts.particles.unwrap_or(default_n);
    spec.particles = Some(n);

    let (report, scan) = match (&opts.source, ham) {
        (Source::Parent(p), _) => {
            if opts.mode_opt || opts.scan {
                bail!("--parent runs in the state's natural orbitals; --mo and --scan do not apply");
            }
            let state: DenseState = read_json(p)?;
            let l = state.orbitals();
            spec.orbitals = Some(l);
            let nf = pair::normal_form(&AntisymMatrix::from_state(&state)?, PAIR_TOL);
            let natural = nf.to_paired(&state.normalized()?)?;
            let h = hamiltonian::parent_hamiltonian(&natural)?;
            let dims = parse_bond_dims(&opts.bond_dims, l)?;
            (dmrg::excited_levels(&h, &dims, n, opts.levels, &config)?.report, None)
        }
        (_, Some(ham)) => {
            let l = ham.orbitals();
            spec.orbitals = Some(l);
            let dims = parse_bond_dims(&opts.bond_dims, l)?;
            let report = if opts.mode_opt {
                dmrg::mode_optimize(&ham, &dims, n, opts.levels, &config)?.report
            } else {
                let h = ham.assemble_dense()?;
                dmrg::excited_levels(&h, &dims, n, opts.levels, &config)?.report
            };
            let scan = if opts.scan {
                Some(dmrg::bond_dim_scan(&ham, n, &config)?)
            } else {
                None
            };
            (report, scan)
        }
        (_, None) => unreachable!("every non-parent source yields a Hamiltonian"),
    };

    eprint!("{}", report.to_table());
    if let Some(s) = &scan {
        eprint!("{}", s.to_table());
    }
    let converged =
        report.converged && scan.as_ref().is_none_or(|s| s.entries.iter().all(|e| e.converged));
    emit(&DmrgOutput { spec, report, scan }, out)?;
    Ok(if converged {
        Status::Success
    } else {
        Status::NotConverged
    })
}

#[derive(Serialize)]
struct TailRow {
    #[serde(rename = "L")]
    length: usize,
    bond_dims: Vec<usize>,
    norm_sqr: f64,
    /// `|Psi - Psi_L|^2` from MPS overlaps with the longest truncation.
    tail_norm_sqr: f64,
    /// `sum_{l > L/2} lambda_l^2`.
    analytic_tail: f64,
}

#[derive(Serialize)]
struct TailOutput {
    spec: ExperimentSpec,
    lambdas: Vec<f64>,
    reference_length: usize,
    shared_cores_identical: bool,
    tail_monotone: bool,
    rows: Vec<TailRow>,
}

/// Lambdas from a JSON array file, or `2^-l` for `l = 1..=count`.
pub fn tail_lambdas(path: Option<&Path>, geometric: Option<usize>) -> Result<Vec<f64>> {
    match (path, geometric) {
        (Some(p), None) => read_json(p),
        (None, Some(k)) => Ok((1..=k).map(|l| 0.5f64.powi(l as i32)).collect()),
        _ => bail!("give exactly one of --lambdas and --geometric"),
    }
}

/// Bitwise equality of two cores.
fn same_bits(a: &bond3::mps::MpsCore, b: &bond3::mps::MpsCore) -> bool {
    a.shape() == b.shape()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
}

pub fn tail(lambdas: Vec<f64>, lengths: &str, source: Option<&Path>, out: Option<&Path>) -> Result<Status> {
    let lengths = parse_list(lengths)?;
    if lengths.is_empty() {
        bail!("no truncation lengths given");
    }
    let mut spec = ExperimentSpec::new("tail", 0);
    if let Some(p) = source {
        spec = spec.input("lambdas", p);
    }
    spec.output = out_name(out);
    let truncations = lengths
        .iter()
        .map(|&l| pair::build_tail_cores(&lambdas, l).map_err(anyhow::Error::from))
        .collect::<Result<Vec<Mps>>>()?;

    let shortest = *lengths.iter().min().expect("non-empty");
    let prefix = shortest - 1;
    let shared_cores_identical = truncations.windows(2).all(|w| {
        (0..prefix).all(|i| same_bits(&w[0].cores()[i], &w[1].cores()[i]))
    });

    // the full state lives on 2 * #lambdas orbitals
    let reference_length = (2 * lambdas.len()).max(*lengths.iter().max().expect("non-empty"));
    let full = pair::tail_truncation(&lambdas, reference_length)?;
    let full_norm = full.norm_sqr();
    let mut rows = Vec::with_capacity(lengths.len());
    for (&l, m) in lengths.iter().zip(&truncations) {
        let kept = &lambdas[..(l / 2).min(lambdas.len())];
        let embedded = pair::tail_truncation(kept, reference_length)?;
        let cross = embedded.inner(&full)?.re;
        let norm = m.norm_sqr();
        rows.push(TailRow {
            length: l,
            bond_dims: m.bond_dims(),
            norm_sqr: norm,
            tail_norm_sqr: full_norm + embedded.norm_sqr() - 2.0 * cross,
            analytic_tail: lambdas.iter().skip(l / 2).map(|x| x * x).sum(),
        });
    }
    let mut by_length: Vec<&TailRow> = rows.iter().collect();
    by_length.sort_by_key(|r| r.length);
    let tail_monotone = by_length
        .windows(2)
        .all(|w| w[1].tail_norm_sqr <= w[0].tail_norm_sqr + 1e-15);

    eprintln!("shared cores bitwise identical: {shared_cores_identical}");
    eprintln!("{:>4}  {:>22}  {:>22}", "L", "|Psi - Psi_L|^2", "analytic");
    for r in &rows {
        eprintln!("{:>4}  {:>22.15e}  {:>22.15e}", r.length, r.tail_norm_sqr, r.analytic_tail);
    }
    let status = if shared_cores_identical && tail_monotone {
        Status::Success
    } else {
        Status::ValidationFailure
    };
    emit(
        &TailOutput {
            spec,
            lambdas,
            reference_length,
            shared_cores_identical,
            tail_monotone,
            rows,
        },
        out,
    )?;
    Ok(status)
}

pub fn parse_fcidump(path: &Path, out: Option<&Path>) -> Result<Status> {
    let (ham, data) = fcidump::parse_fcidump(path)?;
    eprintln!(
        "NORB = {}, NELEC = {}, MS2 = {}, {} records -> {} spin orbitals, core energy {}",
        data.norb,
        data.nelec,
        data.ms2,
        data.records.len(),
        ham.orbitals(),
        ham.core_energy()
    );
    emit(&ham, out)?;
    Ok(Status::Success)
}
