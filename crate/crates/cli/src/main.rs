//! `locc`: runs one verification job and prints a JSON report.
//!
//! Exit status 0 when every check passes, 1 when a check fails and 2 on
//! malformed input or out-of-range parameters.

mod io;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use locc_core::casework;
use locc_core::channels::{self, choi, ChoiNormalization, KrausSet};
use locc_core::linalg;
use locc_core::locc::{self as protocol, branch_path, OperatorPath};
use locc_core::quadrature::SigmaRule;
use locc_core::report::{Check, CheckList};
use locc_core::zonoid::{self, ZonoidSpec};
use locc_core::ComplexMatrix;
use serde_json::{json, Map, Value};

use io::InputError;

#[derive(Parser, Debug)]
#[command(name = "locc", version, about = "Verification workflows for asymptotic LOCC constructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Normalization {
    Normalized,
    Unnormalized,
}

/// Built-in zonoid bases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum NamedBasis {
    /// minimal four-operator basis of the two-qubit limiting channel
    #[value(alias = "eq302")]
    Minimal,
    /// five-operator instrument basis, block diagonal over its CP maps
    Instrument,
    /// {[0], [1]} on a qubit: the unit square of diagonal operators
    Square,
    /// {|0⟩⟨0|, |0⟩⟨1|} on a qubit: all 0 ≤ z ≤ I
    Full,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Choi operator of a Kraus set
    Choi {
        /// Kraus set JSON (inline or a file path)
        #[arg(long)]
        kraus: String,
        #[arg(long, value_enum, default_value = "unnormalized")]
        normalization: Normalization,
        #[arg(long, default_value_t = 1e-8)]
        rank_tol: f64,
    },
    /// Normalized-Choi trace distance between two channels
    Distance {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Membership of an operator in a zonoid
    ZonoidCheck {
        /// "identity" or matrix JSON
        #[arg(long)]
        z: String,
        /// built-in basis name
        #[arg(long, value_enum, conflicts_with = "kraus")]
        basis: Option<NamedBasis>,
        /// Kraus set or instrument JSON whose operators form the basis
        #[arg(long)]
        kraus: Option<String>,
        #[arg(long, default_value_t = zonoid::MEMBERSHIP_TOL)]
        tol: f64,
    },
    /// Builds the cyclic protocol tree and verifies it
    Protocol {
        #[arg(long)]
        nu: usize,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 2)]
        parties: usize,
    },
    /// Main-branch distance to the limiting path against its bound
    Paths {
        #[arg(long)]
        nu: usize,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 2)]
        parties: usize,
        /// grid points across the main-branch domain
        #[arg(long, default_value_t = 401)]
        points: usize,
    },
    /// Limit conditions of the two-qubit family over the minimal basis
    Theorem1 {
        #[arg(long, default_value_t = 101)]
        sigma_points: usize,
        #[arg(long, default_value_t = 11)]
        x_points: usize,
        #[arg(long, default_value_t = 11)]
        path_samples: usize,
    },
    /// Block-structured limit conditions over the instrument basis
    Theorem8 {
        #[arg(long, default_value_t = 101)]
        sigma_points: usize,
        #[arg(long, default_value_t = 11)]
        x_points: usize,
        #[arg(long, default_value_t = 11)]
        path_samples: usize,
    },
    /// Two-qubit example: distance bound and Choi reproduction
    #[command(name = "paper-2q")]
    Paper2q {
        #[arg(long, default_value_t = 10_000)]
        nu: usize,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 64)]
        nodes: usize,
        #[arg(long, default_value_t = 401)]
        points: usize,
    },
    /// P-qubit example: closed-form channel and convergence of the protocol
    #[command(name = "paper-pq")]
    PaperPq {
        #[arg(long, default_value_t = 3)]
        parties: usize,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        nus: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// W-state outcome probability and concurrence
    Wstate,
    /// Hausdorff estimate between the protocol's zonoid and the limit's
    Hausdorff {
        #[arg(long)]
        nu: usize,
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

/// Checks plus command-specific values.
struct Outcome {
    checks: CheckList,
    values: Map<String, Value>,
}

impl Outcome {
    fn new() -> Self {
        Self { checks: CheckList::new(), values: Map::new() }
    }

    fn value(&mut self, key: &str, v: impl Into<Value>) {
        self.values.insert(key.into(), v.into());
    }
}

fn named_spec(b: NamedBasis) -> ZonoidSpec {
    let q = |ops: Vec<ComplexMatrix>| ZonoidSpec::new(ops, None).expect("independent qubit basis");
    match b {
        NamedBasis::Minimal => casework::hat_spec(),
        NamedBasis::Instrument => casework::instrument_spec(),
        NamedBasis::Square => q(vec![ComplexMatrix::projector(2, 0), ComplexMatrix::projector(2, 1)]),
        NamedBasis::Full => q(vec![ComplexMatrix::projector(2, 0), ComplexMatrix::unit(2, 2, 0, 1)]),
    }
}

fn spec_from_json(v: &Value) -> Result<ZonoidSpec, InputError> {
    if v.get("partition").is_some() {
        let inst = io::parse_instrument(v)?;
        Ok(ZonoidSpec::new(inst.kraus().operators().to_vec(), Some(inst.partition().to_vec()))?)
    } else {
        let k = io::parse_kraus(v)?;
        Ok(ZonoidSpec::from_kraus(&channels::minimal_kraus(&k, 1e-8))?)
    }
}

fn tp_check(name: &str, k: &KrausSet) -> Check {
    Check::at_most(name, k.completeness_defect(), channels::TP_TOL)
}

fn execute(cmd: &Command) -> Result<Outcome, InputError> {
    let mut out = Outcome::new();
    match cmd {
        Command::Choi { kraus, normalization, rank_tol } => {
            let k = io::parse_kraus(&io::load(kraus)?)?;
            let norm = match normalization {
                Normalization::Normalized => ChoiNormalization::Normalized,
                Normalization::Unnormalized => ChoiNormalization::Unnormalized,
            };
            let c = choi(&k, norm);
            out.checks.push(tp_check("trace_preserving", &k));
            out.value("kraus_rank", c.rank(*rank_tol));
            out.value("choi", io::matrix_json(c.matrix()));
            out.value("minimal_kraus", io::kraus_json(&channels::minimal_kraus(&k, *rank_tol)));
        }
        Command::Distance { a, b } => {
            let ka = io::parse_kraus(&io::load(a)?)?;
            let kb = io::parse_kraus(&io::load(b)?)?;
            out.checks.push(tp_check("a.trace_preserving", &ka));
            out.checks.push(tp_check("b.trace_preserving", &kb));
            out.value("distance", channels::choi_distance(&ka, &kb)?);
        }
        Command::ZonoidCheck { z, basis, kraus, tol } => {
            let spec = match (basis, kraus) {
                (_, Some(k)) => spec_from_json(&io::load(k)?)?,
                (Some(b), None) => named_spec(*b),
                (None, None) => named_spec(NamedBasis::Minimal),
            };
            let zm = if z == "identity" {
                ComplexMatrix::identity(spec.dim())
            } else {
                io::parse_matrix(&io::load(z)?)?
            };
            let r = zonoid::membership(&zm, &spec, *tol)?;
            out.checks.push(Check::at_most("membership", r.residual, *tol));
            out.value("feasible", r.feasible);
            out.value("residual", r.residual);
            out.value("iterations", r.iterations);
            out.value("witness", r.witness.map_or(Value::Null, |w| io::matrix_json(w.matrix())));
        }
        Command::Protocol { nu, c, parties } => {
            let tree = protocol::build_protocol_pq(*parties, *nu, *c)?;
            let r = protocol::verify_tree(&tree);
            out.checks.extend(r.checks());
            out.value("nodes", tree.len());
            out.value("leaves", tree.leaves().len());
            out.value("leaf_sum_failures", r.leaf_sum_failures.clone());
            out.value("locality_failures", r.locality_failures.iter().map(|&(p, c)| json!([p, c])).collect::<Vec<_>>());
        }
        Command::Paths { nu, c, parties, points } => {
            let grid = protocol::main_branch_grid(*parties, *nu, *c, *points)?;
            let r = protocol::path_distance_bound(*parties, *nu, *c, &grid)?;
            out.checks.push(Check::at_most("distance_bound", r.observed, r.bound));
            let tree = protocol::build_protocol_pq(*parties, *nu, *c)?;
            let path = branch_path(&tree, tree.main_leaf())?;
            out.checks.push(Check::at_most("trace_defect", path.trace_defect(&grid)?, 1e-12));
            out.value("max_distance", r.observed);
            out.value("worst_s", r.worst_s);
            out.value("bound", r.bound);
            out.value("domain", json!([path.s_min(), path.s_max()]));
            out.value("joints", path.joints().len());
        }
        Command::Theorem1 { sigma_points, x_points, path_samples } => {
            let r = casework::limit_conditions_minimal(*sigma_points, *x_points, *path_samples)?;
            out.checks.extend(r.checks.clone());
            out.value("worst_membership_residual", r.memberships.iter().map(|m| m.2).fold(0.0, f64::max));
        }
        Command::Theorem8 { sigma_points, x_points, path_samples } => {
            let r = casework::limit_conditions_blocked(*sigma_points, *x_points, *path_samples)?;
            out.checks.extend(r.checks.clone());
            out.value("worst_membership_residual", r.memberships.iter().map(|m| m.2).fold(0.0, f64::max));
        }
        Command::Paper2q { nu, c, nodes, points } => {
            let rule = SigmaRule::new(*nodes)?;
            let omega = casework::limiting_choi_2q_with(&rule);
            let m = omega.matrix();
            let offdiag = m[(0b0000, 0b0101)].re;
            out.checks.push(Check::at_most("choi_offdiag", (offdiag - 2.0 / 3.0).abs(), 1e-9));
            out.checks.push(Check::at_most("choi_offdiag_symmetric", (m[(0b0000, 0b1010)] - m[(0b0000, 0b0101)]).norm(), 1e-12));
            let direct = choi(&casework::two_qubit_instrument().minimal, ChoiNormalization::Unnormalized);
            out.checks.push(Check::at_most("choi_quadrature_vs_direct", linalg::trace_norm(&(m - direct.matrix())), 1e-8));
            let grid = protocol::main_branch_grid(2, *nu, *c, *points)?;
            let r = protocol::path_distance_bound(2, *nu, *c, &grid)?;
            out.checks.push(Check::at_most("distance_bound", r.observed, r.bound));
            out.value("lemma1_max_distance", r.observed);
            out.value("path_bound", r.bound);
            out.value("choi_offdiag", offdiag);
        }
        Command::PaperPq { parties, nus, c, samples, seed } => {
            use rand::SeedableRng;
            let r = casework::pqubit_limit_check(*parties, nus, *c)?;
            out.checks.extend(r.checks.clone());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
            let n = 1usize << parties;
            let mut worst = 0.0f64;
            for _ in 0..*samples {
                let rho = channels::random_density(n, &mut rng);
                worst = worst.max((casework::pqubit_apply(*parties, &rho)?.trace().re - 1.0).abs());
            }
            out.checks.push(Check::at_most("trace_preserving", worst, 1e-10));
            out.value("distances", r.distances.iter().map(|&(nu, d)| json!({"nu": nu, "distance": d})).collect::<Vec<_>>());
            out.value("density_identity_defect", r.density_identity_defect);
        }
        Command::Wstate => {
            let r = casework::wstate_analysis()?;
            out.checks.push(Check::at_most("probability", (r.bc_probability - 0.5).abs(), 1e-10));
            out.checks.push(Check::at_most("concurrence", (r.bc_concurrence - 8.0 / 9.0).abs(), 1e-9));
            out.value("probability", r.bc_probability);
            out.value("concurrence", r.bc_concurrence);
            out.value("state", io::matrix_json(&r.bc_state));
        }
        Command::Hausdorff { nu, c, samples, seed } => {
            let tree = protocol::build_protocol_2q(*nu, *c)?;
            let k = channels::minimal_kraus(&protocol::protocol_channel(&tree)?, 1e-8);
            let spec = ZonoidSpec::from_kraus(&k)?;
            let h = zonoid::hausdorff_estimate(&spec, &casework::hat_spec(), *samples, *seed)?;
            out.checks.push(Check::holds("finite", h.is_finite()));
            out.value("hausdorff", h);
        }
    }
    Ok(out)
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Choi { .. } => "choi",
        Command::Distance { .. } => "distance",
        Command::ZonoidCheck { .. } => "zonoid-check",
        Command::Protocol { .. } => "protocol",
        Command::Paths { .. } => "paths",
        Command::Theorem1 { .. } => "theorem1",
        Command::Theorem8 { .. } => "theorem8",
        Command::Paper2q { .. } => "paper-2q",
        Command::PaperPq { .. } => "paper-pq",
        Command::Wstate => "wstate",
        Command::Hausdorff { .. } => "hausdorff",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let outcome = match execute(&cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let pass = outcome.checks.pass();
    let mut report = Map::new();
    report.insert("command".into(), command_name(&cli.command).into());
    report.insert("pass".into(), pass.into());
    report.insert("checks".into(), serde_json::to_value(&outcome.checks.checks).expect("checks serialize"));
    report.insert("values".into(), Value::Object(outcome.values));
    report.insert("wall_time_seconds".into(), start.elapsed().as_secs_f64().into());
    println!("{}", io::render(&report));
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
