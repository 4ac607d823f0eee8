//! Command-line driver: session orchestration over in-process or TCP
//! channels, attack/game reports, state checkers, and a benchmark grid.
//!
//! Exit codes: 0 success, 2 protocol abort, 1 usage or internal error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use qsim::{Bits, DensityMatrix, SparseState};

use crate::channel::{self, Channel, FrameType};
use crate::error::{QotfError, Result};
use crate::functionalities::{check_postponable, check_semicollapsed_membership};
use crate::harness::{
    attack_report_csv, game_report_csv, run_attack, run_hybrid_game, ATTACK_IDS, GAME_IDS,
};
use crate::hashedqubit::DATA_REG;
use crate::hashfam::{FhMode, Profile};
use crate::predicate::{Predicate, PredicateSpec};
use crate::protocols::zkoqs::{self, qubit_layout, ProverInput};
use crate::protocols::{bit_ot, pred_ot, OfferPayload, Role, SessionConfig, Transcript};
use crate::zk::ZkBackend;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE_OR_INTERNAL: i32 = 1;
pub const EXIT_PROTOCOL_ABORT: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "qotf",
    about = "Two-party quantum oblivious transfer laboratory",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CliRole {
    Alice,
    Bob,
    /// Both parties in one process on an in-memory channel.
    Local,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CliZk {
    Ideal,
    Nizk,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CliFh {
    Crs,
    Plain,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CliHash {
    Toy,
    Demo,
}

#[derive(Args, Clone, Debug)]
pub struct SessionArgs {
    #[arg(long, value_enum, default_value = "local")]
    pub role: CliRole,
    /// host:port for networked roles; "mem:" (the default) is local-only.
    #[arg(long, default_value = "mem:")]
    pub endpoint: String,
    /// Session seed; falls back to env QOTF_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "ideal")]
    pub zk: CliZk,
    #[arg(long, value_enum, default_value = "crs")]
    pub fh: CliFh,
    #[arg(long, value_enum, default_value = "toy")]
    pub hash: CliHash,
    #[arg(long, default_value_t = 8)]
    pub witness_len: usize,
    /// Output directory for the run record and transcript.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SessionArgs {
    pub fn seed(&self) -> u64 {
        self.seed
            .or_else(|| std::env::var("QOTF_SEED").ok().and_then(|s| s.parse().ok()))
            .unwrap_or(0)
    }

    pub fn config(&self) -> SessionConfig {
        let mut c = SessionConfig::default_toy();
        c.zk_backend = match self.zk {
            CliZk::Ideal => ZkBackend::Ideal,
            CliZk::Nizk => ZkBackend::Nizk,
        };
        c.fh_mode = match self.fh {
            CliFh::Crs => FhMode::Crs,
            CliFh::Plain => FhMode::Plain,
        };
        c.profile = match self.hash {
            CliHash::Toy => Profile::Toy,
            CliHash::Demo => Profile::Demo,
        };
        c.witness_len = self.witness_len;
        c
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// 1-out-of-2 bit oblivious transfer.
    OtBit {
        /// Alice's choice bit (required for role alice/local).
        #[arg(long)]
        b: Option<u8>,
        /// Bob's message 0 (required for role bob/local).
        #[arg(long)]
        m0: Option<u8>,
        /// Bob's message 1 (required for role bob/local).
        #[arg(long)]
        m1: Option<u8>,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// 1-out-of-2 string OT over halves of length m.
    OtString {
        /// Half length m (the session carries 2m bits).
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Alice takes the second half instead of the first.
        #[arg(long, default_value_t = false)]
        second_half: bool,
        /// Bob's 2m message bits, e.g. "0110".
        #[arg(long)]
        messages: Option<String>,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// k-out-of-n block OT.
    OtKn {
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long, default_value_t = 2)]
        block_len: usize,
        /// Comma-separated chosen block indices, e.g. "0" or "0,2".
        #[arg(long)]
        chosen: Option<String>,
        /// Bob's blocks·block_len message bits.
        #[arg(long)]
        messages: Option<String>,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Run the semi-collapse proof layer on its own (local only).
    Zkoqs {
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Predicate DSL, e.g. "singleton:3", "string:2", "kofn:1:2:2",
        /// "table:3:001|110"; prefix "!" applies it to the complement.
        #[arg(long)]
        pred: Option<String>,
        /// Measured-set mask, e.g. "110" (defaults to the first allowed T).
        #[arg(long)]
        t: Option<String>,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Run a registered adversary strategy and print its report.
    Attack {
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a hybrid-game experiment and print its report.
    Game {
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an honest semi-collapse session and check the verifier's joint
    /// residual state against the quantum-language membership checker.
    CheckMembership {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long)]
        pred: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check that the semi-collapse measurement commutes with teleportation
    /// (exhaustive branch comparison; predicate width ≤ 3).
    CheckPostponable {
        #[arg(long)]
        pred: Option<String>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
    },
    /// Benchmark grid: wall clock, bytes on wire, proof and qubit counts
    /// across witness lengths.
    Bench {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Payload witness bits per block (the membership flag adds one more).
        #[arg(long, value_delimiter = ',', default_values_t = vec![8usize, 64, 160])]
        kappa: Vec<usize>,
    },
}

/// Machine-readable record of one protocol run; replaying the stored
/// transcript with the stored seed reproduces the outputs byte-exactly.
#[derive(Serialize)]
pub struct RunRecord {
    pub command: String,
    pub role: String,
    pub seed: u64,
    pub config_digest: String,
    pub outputs: serde_json::Value,
    pub transcript_file: Option<String>,
    pub transcript_digest: String,
    pub message_count: usize,
    pub total_bytes: usize,
    pub wall_clock_ms: f64,
}

fn write_outputs(
    out: &Option<PathBuf>,
    record: &RunRecord,
    transcript: &Transcript,
) -> Result<()> {
    let Some(dir) = out else { return Ok(()) };
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("transcript.jsonl"), transcript.to_jsonl())?;
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(record)?)?;
    Ok(())
}

fn parse_bit(v: Option<u8>, what: &str) -> Result<bool> {
    match v {
        Some(0) => Ok(false),
        Some(1) => Ok(true),
        _ => Err(QotfError::Params(format!("--{what} must be 0 or 1"))),
    }
}

fn parse_message_bits(s: Option<&str>, want: usize, what: &str) -> Result<Vec<bool>> {
    let s = s.ok_or_else(|| QotfError::Params(format!("--{what} is required for this role")))?;
    let bits =
        Bits::parse(s).map_err(|e| QotfError::Params(format!("--{what}: {e}")))?;
    if bits.len() != want {
        return Err(QotfError::Params(format!(
            "--{what} must have exactly {want} bits, got {}",
            bits.len()
        )));
    }
    Ok(bits.iter().collect())
}

/// Predicate DSL: `[!]singleton:<n>` | `[!]string:<m>` |
/// `[!]kofn:<k>:<blocks>:<block_len>` | `[!]table:<n>:<mask|mask|...>`.
pub fn parse_predicate(s: &str) -> Result<Predicate> {
    let (complement, body) = match s.strip_prefix('!') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let parts: Vec<&str> = body.split(':').collect();
    let usage = || QotfError::Params(format!("cannot parse predicate {s:?}"));
    let num = |t: &str| t.parse::<usize>().map_err(|_| usage());
    let spec = match parts.as_slice() {
        ["singleton", n] => PredicateSpec::SingletonDummy { n: num(n)? },
        ["string", m] => PredicateSpec::StringOt { m: num(m)? },
        ["kofn", k, blocks, len] => PredicateSpec::KOutOfN {
            k: num(k)?,
            blocks: num(blocks)?,
            block_len: num(len)?,
        },
        ["table", n, masks] => {
            let n = num(n)?;
            let allowed = masks
                .split('|')
                .map(Bits::parse)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(QotfError::Params)?;
            if allowed.iter().any(|m| m.len() != n) {
                return Err(usage());
            }
            PredicateSpec::Table { n, allowed }
        }
        _ => return Err(usage()),
    };
    Ok(if complement {
        Predicate::complemented(spec)
    } else {
        Predicate::direct(spec)
    })
}

fn open_networked(role: Role, endpoint: &str) -> Result<Box<dyn Channel>> {
    if endpoint == "mem:" {
        return Err(QotfError::Params(
            "networked roles need --endpoint host:port".into(),
        ));
    }
    // Bob listens, Alice connects; Alice also speaks first on the wire.
    Ok(match role {
        Role::Bob => Box::new(channel::serve(endpoint)?),
        Role::Alice => Box::new(channel::connect(endpoint)?),
    })
}

struct Finished {
    outputs: serde_json::Value,
    transcript: Transcript,
    stdout: String,
}

fn ot_bit_run(
    b: Option<u8>,
    m0: Option<u8>,
    m1: Option<u8>,
    session: &SessionArgs,
) -> Result<Finished> {
    let config = session.config();
    let seed = session.seed();
    match session.role {
        CliRole::Local => {
            let b = parse_bit(b, "b")?;
            let (m0, m1) = (parse_bit(m0, "m0")?, parse_bit(m1, "m1")?);
            let (a, bb) = bit_ot::run_local(b, (m0, m1), &config, seed)?;
            let out = a.output;
            Ok(Finished {
                outputs: serde_json::json!({
                    "alice_m_b": out,
                    "bob_completed": bb.output.is_some(),
                }),
                transcript: a.transcript,
                stdout: match out {
                    Some(m) => format!("m_b={}", m as u8),
                    None => "abort".into(),
                },
            })
        }
        CliRole::Alice => {
            let b = parse_bit(b, "b")?;
            let mut ch = open_networked(Role::Alice, &session.endpoint)?;
            let mut rng = SessionConfig::party_rng(seed, Role::Alice);
            let res = bit_ot::alice(b, &config, ch.as_mut(), &mut rng)?;
            Ok(Finished {
                outputs: serde_json::json!({ "alice_m_b": res.output }),
                stdout: match res.output {
                    Some(m) => format!("m_b={}", m as u8),
                    None => "abort".into(),
                },
                transcript: res.transcript,
            })
        }
        CliRole::Bob => {
            let (m0, m1) = (parse_bit(m0, "m0")?, parse_bit(m1, "m1")?);
            let mut ch = open_networked(Role::Bob, &session.endpoint)?;
            let mut rng = SessionConfig::party_rng(seed, Role::Bob);
            let res = bit_ot::bob(m0, m1, &config, ch.as_mut(), &mut rng)?;
            Ok(Finished {
                outputs: serde_json::json!({ "bob_completed": res.output.is_some() }),
                stdout: if res.output.is_some() {
                    "done".into()
                } else {
                    "abort".into()
                },
                transcript: res.transcript,
            })
        }
    }
}

fn mask_to_string(mask: &Bits) -> String {
    mask.iter().map(|b| if b { '1' } else { '0' }).collect()
}

fn pred_ot_run(
    pred: Predicate,
    b_mask: Option<Bits>,
    messages: Option<Vec<bool>>,
    session: &SessionArgs,
) -> Result<Finished> {
    let mut config = session.config();
    config.n = pred.n();
    config.predicate = Some(pred);
    let seed = session.seed();
    let render = |out: &Option<Vec<Option<bool>>>| match out {
        Some(v) => format!(
            "received={}",
            v.iter()
                .map(|x| match x {
                    Some(true) => '1',
                    Some(false) => '0',
                    None => '-',
                })
                .collect::<String>()
        ),
        None => "abort".into(),
    };
    match session.role {
        CliRole::Local => {
            let b_mask = b_mask.ok_or_else(|| QotfError::Params("choice is required".into()))?;
            let messages =
                messages.ok_or_else(|| QotfError::Params("--messages is required".into()))?;
            let (a, bb) = pred_ot::run_local(&b_mask, &messages, &config, seed)?;
            Ok(Finished {
                stdout: render(&a.output),
                outputs: serde_json::json!({
                    "alice_received": a.output,
                    "bob_completed": bb.output.is_some(),
                }),
                transcript: a.transcript,
            })
        }
        CliRole::Alice => {
            let b_mask = b_mask.ok_or_else(|| QotfError::Params("choice is required".into()))?;
            let mut ch = open_networked(Role::Alice, &session.endpoint)?;
            let mut rng = SessionConfig::party_rng(seed, Role::Alice);
            let res = pred_ot::alice(&b_mask, &config, ch.as_mut(), &mut rng)?;
            Ok(Finished {
                stdout: render(&res.output),
                outputs: serde_json::json!({ "alice_received": res.output }),
                transcript: res.transcript,
            })
        }
        CliRole::Bob => {
            let messages =
                messages.ok_or_else(|| QotfError::Params("--messages is required".into()))?;
            let mut ch = open_networked(Role::Bob, &session.endpoint)?;
            let mut rng = SessionConfig::party_rng(seed, Role::Bob);
            let res = pred_ot::bob(&messages, &config, ch.as_mut(), &mut rng)?;
            Ok(Finished {
                stdout: if res.output.is_some() {
                    "done".into()
                } else {
                    "abort".into()
                },
                outputs: serde_json::json!({ "bob_completed": res.output.is_some() }),
                transcript: res.transcript,
            })
        }
    }
}

fn zkoqs_run(n: usize, pred: Option<&str>, t: Option<&str>, session: &SessionArgs) -> Result<Finished> {
    if session.role != CliRole::Local {
        return Err(QotfError::Params(
            "the zkoqs subcommand runs both parties locally".into(),
        ));
    }
    let pred = match pred {
        Some(s) => parse_predicate(s)?,
        None => Predicate::direct(PredicateSpec::SingletonDummy { n }),
    };
    let mut config = session.config();
    config.n = pred.n();
    config.predicate = Some(pred.clone());
    let seed = session.seed();
    let t_mask = match t {
        Some(s) => Bits::parse(s).map_err(QotfError::Params)?,
        None => pred
            .allowed_masks()?
            .into_iter()
            .next()
            .ok_or_else(|| QotfError::Params("predicate allows no mask".into()))?,
    };
    if t_mask.len() != pred.n() {
        return Err(QotfError::Params("--t arity mismatch".into()));
    }
    let mut rng = SessionConfig::party_rng(seed ^ 0x5eed, Role::Alice);
    let inputs: Vec<SparseState> = (0..pred.n())
        .map(|i| {
            let r = rng.gen_bool(0.5);
            if t_mask.bit(i) {
                SparseState::basis(qubit_layout(), Bits::from_bools(vec![r]))
            } else {
                SparseState::zero(qubit_layout())
                    .apply_h(DATA_REG, 1)?
                    .apply_z(DATA_REG, 1, r)
            }
        })
        .collect::<qsim::Result<_>>()?;
    let (p, v) = zkoqs::run_local(
        ProverInput {
            t_mask: t_mask.clone(),
            inputs,
        },
        &config,
        seed,
    )?;
    let accepted = v.output.is_some();
    Ok(Finished {
        stdout: if accepted {
            format!("accepted t={}", mask_to_string(&t_mask))
        } else {
            "abort".into()
        },
        outputs: serde_json::json!({
            "t_mask": mask_to_string(&t_mask),
            "prover_measured": p.output.as_ref().map(|o| &o.measured),
            "prover_omega": p.output.as_ref().map(|o| &o.omega),
            "verifier_accepted": accepted,
        }),
        transcript: v.transcript,
    })
}

/// Joint density of the verifier's per-block residuals (qubit i = block i).
fn joint_residual_density(residuals: &[SparseState]) -> Result<DensityMatrix> {
    let mut joint: Option<nalgebra::DMatrix<num_complex::Complex64>> = None;
    for r in residuals {
        let single = DensityMatrix::pure(r)?;
        joint = Some(match joint {
            None => single.matrix().clone(),
            Some(j) => j.kronecker(single.matrix()),
        });
    }
    let joint = joint.ok_or_else(|| QotfError::Params("no residuals".into()))?;
    Ok(DensityMatrix::from_matrix(joint)?)
}

fn check_membership_run(n: usize, pred: Option<&str>, seed: u64) -> Result<(String, bool)> {
    let pred = match pred {
        Some(s) => parse_predicate(s)?,
        None => Predicate::direct(PredicateSpec::SingletonDummy { n }),
    };
    let mut config = SessionConfig::default_toy();
    config.n = pred.n();
    config.predicate = Some(pred.clone());
    let t_mask = pred
        .allowed_masks()?
        .into_iter()
        .next()
        .ok_or_else(|| QotfError::Params("predicate allows no mask".into()))?;
    let mut rng = SessionConfig::party_rng(seed ^ 0x5eed, Role::Alice);
    let inputs: Vec<SparseState> = (0..pred.n())
        .map(|i| {
            let r = rng.gen_bool(0.5);
            if t_mask.bit(i) {
                SparseState::basis(qubit_layout(), Bits::from_bools(vec![r]))
            } else {
                SparseState::zero(qubit_layout())
                    .apply_h(DATA_REG, 1)?
                    .apply_z(DATA_REG, 1, r)
            }
        })
        .collect::<qsim::Result<_>>()?;
    let claimed_inputs: Vec<SparseState> = inputs.clone();
    let (p, v) = zkoqs::run_local(
        ProverInput {
            t_mask: t_mask.clone(),
            inputs,
        },
        &config,
        seed,
    )?;
    let vout = v
        .output
        .ok_or_else(|| QotfError::abort("check-membership", "verifier aborted"))?;
    let rho = joint_residual_density(&vout.residuals)?;
    // The sub-class description: the Hadamard-basis value of each residual
    // outside T, which the honest prover knows from its own phases + ω.
    let pout = p.output.expect("prover output");
    let mut omega_s = Vec::new();
    for i in 0..pred.n() {
        if !t_mask.bit(i) {
            // Input was Z^r H|0⟩ = H|r⟩, further rotated by Z^{r'}; the
            // residual reads H|r ⊕ ω_i⟩.
            let input_r = claimed_inputs[i]
                .amplitudes()
                .any(|(_, a)| a.re < 0.0 || a.im.abs() > 1e-12);
            let omega = pout.omega[i].expect("omega off T");
            omega_s.push(input_r ^ omega);
        }
    }
    let report = check_semicollapsed_membership(&rho, &pred, Some((&t_mask, &omega_s)), None)?;
    let ok = report.in_language && report.in_subclass == Some(true);
    Ok((serde_json::to_string_pretty(&report)?, ok))
}

#[derive(Serialize)]
struct BenchRow {
    kappa: usize,
    witness_len: usize,
    profile: String,
    zk: String,
    simulated_qubits: usize,
    transmitted_qubits: usize,
    messages: usize,
    bytes_on_wire: usize,
    zk_proof_bytes: usize,
    wall_clock_ms: f64,
    alice_correct: bool,
}

fn bench_row(kappa: usize, config: &SessionConfig, zk_label: &str) -> Result<BenchRow> {
    let start = Instant::now();
    let (a, _) = bit_ot::run_local(true, (false, true), config, 42)?;
    let wall = start.elapsed().as_secs_f64() * 1e3;
    let mut zk_bytes = 0usize;
    for e in &a.transcript.entries {
        if e.frame_type == FrameType::Digests {
            let payload = hex::decode(&e.payload_hex)
                .map_err(|er| QotfError::Serde(er.to_string()))?;
            let offer: OfferPayload = serde_json::from_slice(&payload)?;
            zk_bytes = offer.zk_payload_hex.len() / 2;
        }
    }
    let wl = config.witness_len;
    Ok(BenchRow {
        kappa,
        witness_len: wl,
        profile: format!("{:?}", config.profile).to_lowercase(),
        zk: zk_label.into(),
        // Each of the two blocks simulates 1 data qubit + (κ payload + 1
        // membership-flag) witness qubits; the headline transmitted count
        // omits the explicit flag qubit.
        simulated_qubits: 2 * (1 + wl),
        transmitted_qubits: 2 * wl,
        messages: a.transcript.message_count(),
        bytes_on_wire: a.transcript.total_bytes(),
        zk_proof_bytes: zk_bytes,
        wall_clock_ms: wall,
        alice_correct: a.output == Some(true),
    })
}

fn bench(kappas: &[usize], out: Option<&Path>) -> Result<String> {
    let mut rows = Vec::new();
    for &kappa in kappas {
        let wl = kappa + 1; // payload bits + membership flag
        let mut config = SessionConfig::default_toy();
        config.witness_len = wl;
        config.profile = if wl + 1 <= crate::hashfam::TOY_MAX_INPUT_LEN {
            Profile::Toy
        } else {
            Profile::Demo
        };
        rows.push(bench_row(kappa, &config, "ideal")?);
        if config.profile == Profile::Toy {
            let mut nizk = config.clone();
            nizk.zk_backend = ZkBackend::Nizk;
            nizk.nizk_repetitions = 15;
            rows.push(bench_row(kappa, &nizk, "nizk")?);
        }
    }
    let mut csv = String::from(
        "kappa,witness_len,profile,zk,simulated_qubits,transmitted_qubits,\
         messages,bytes_on_wire,zk_proof_bytes,wall_clock_ms,alice_correct\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.2},{}\n",
            r.kappa,
            r.witness_len,
            r.profile,
            r.zk,
            r.simulated_qubits,
            r.transmitted_qubits,
            r.messages,
            r.bytes_on_wire,
            r.zk_proof_bytes,
            r.wall_clock_ms,
            r.alice_correct
        ));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("bench.csv"), &csv)?;
        std::fs::write(
            dir.join("bench.json"),
            serde_json::to_string_pretty(&rows)?,
        )?;
    }
    Ok(csv)
}

fn finish_session(
    command: &str,
    session: &SessionArgs,
    run: Result<Finished>,
    started: Instant,
) -> Result<i32> {
    let fin = run?;
    let record = RunRecord {
        command: command.into(),
        role: format!("{:?}", session.role).to_lowercase(),
        seed: session.seed(),
        config_digest: session.config().digest_hex(),
        outputs: fin.outputs,
        transcript_file: session
            .out
            .as_ref()
            .map(|_| "transcript.jsonl".to_string()),
        transcript_digest: fin.transcript.digest_hex(),
        message_count: fin.transcript.message_count(),
        total_bytes: fin.transcript.total_bytes(),
        wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    write_outputs(&session.out, &record, &fin.transcript)?;
    println!("{}", fin.stdout);
    Ok(if fin.transcript.abort_site.is_some() {
        EXIT_PROTOCOL_ABORT
    } else {
        EXIT_OK
    })
}

/// Run a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let started = Instant::now();
    match cli.command {
        Command::OtBit { b, m0, m1, session } => {
            finish_session("ot-bit", &session, ot_bit_run(b, m0, m1, &session), started)
        }
        Command::OtString {
            m,
            second_half,
            messages,
            session,
        } => {
            let pred = Predicate::direct(PredicateSpec::StringOt { m });
            let choice = match session.role {
                CliRole::Bob => None,
                _ => Some(pred_ot::string_choice_mask(m, second_half)),
            };
            let msgs = match session.role {
                CliRole::Alice => None,
                _ => Some(parse_message_bits(messages.as_deref(), 2 * m, "messages")?),
            };
            finish_session(
                "ot-string",
                &session,
                pred_ot_run(pred, choice, msgs, &session),
                started,
            )
        }
        Command::OtKn {
            k,
            blocks,
            block_len,
            chosen,
            messages,
            session,
        } => {
            let pred = Predicate::direct(PredicateSpec::KOutOfN {
                k,
                blocks,
                block_len,
            });
            let choice = match session.role {
                CliRole::Bob => None,
                _ => {
                    let chosen = chosen
                        .as_deref()
                        .ok_or_else(|| QotfError::Params("--chosen is required".into()))?
                        .split(',')
                        .map(|t| {
                            t.trim()
                                .parse::<usize>()
                                .map_err(|_| QotfError::Params(format!("bad block index {t:?}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(pred_ot::k_of_n_choice_mask(blocks, block_len, &chosen))
                }
            };
            let msgs = match session.role {
                CliRole::Alice => None,
                _ => Some(parse_message_bits(
                    messages.as_deref(),
                    blocks * block_len,
                    "messages",
                )?),
            };
            finish_session(
                "ot-kn",
                &session,
                pred_ot_run(pred, choice, msgs, &session),
                started,
            )
        }
        Command::Zkoqs {
            n,
            pred,
            t,
            session,
        } => finish_session(
            "zkoqs",
            &session,
            zkoqs_run(n, pred.as_deref(), t.as_deref(), &session),
            started,
        ),
        Command::Attack {
            id,
            trials,
            seed,
            out,
        } => {
            let report = run_attack(&id, trials, seed).map_err(|e| match e {
                QotfError::Params(_) => QotfError::Params(format!(
                    "unknown attack {id:?}; known: {}",
                    ATTACK_IDS.join(", ")
                )),
                other => other,
            })?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    dir.join(format!("attack_{id}.json")),
                    serde_json::to_string_pretty(&report)?,
                )?;
                std::fs::write(dir.join(format!("attack_{id}.csv")), attack_report_csv(&report))?;
            }
            Ok(if report.ok { EXIT_OK } else { EXIT_PROTOCOL_ABORT })
        }
        Command::Game { id, seed, out } => {
            let report = run_hybrid_game(&id, seed).map_err(|e| match e {
                QotfError::Params(_) => QotfError::Params(format!(
                    "unknown game {id:?}; known: {}",
                    GAME_IDS.join(", ")
                )),
                other => other,
            })?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(
                    dir.join(format!("game_{id}.json")),
                    serde_json::to_string_pretty(&report)?,
                )?;
                std::fs::write(dir.join(format!("game_{id}.csv")), game_report_csv(&report))?;
            }
            Ok(if report.ok { EXIT_OK } else { EXIT_PROTOCOL_ABORT })
        }
        Command::CheckMembership { n, pred, seed } => {
            let (json, ok) = check_membership_run(n, pred.as_deref(), seed)?;
            println!("{json}");
            Ok(if ok { EXIT_OK } else { EXIT_PROTOCOL_ABORT })
        }
        Command::CheckPostponable { pred, n, epsilon } => {
            let pred = match pred {
                Some(s) => parse_predicate(&s)?,
                None => Predicate::direct(PredicateSpec::SingletonDummy { n }),
            };
            let report = check_postponable(&pred, epsilon)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.ok { EXIT_OK } else { EXIT_PROTOCOL_ABORT })
        }
        Command::Bench { out, kappa } => {
            let csv = bench(&kappa, out.as_deref())?;
            print!("{csv}");
            Ok(EXIT_OK)
        }
    }
}

/// Entry point used by the binary: parse, run, map errors to exit codes.
pub fn main_with(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0.
            let code = if e.use_stderr() { EXIT_USAGE_OR_INTERNAL } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(QotfError::Abort { site, reason }) => {
            eprintln!("protocol abort at {site}: {reason}");
            EXIT_PROTOCOL_ABORT
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE_OR_INTERNAL
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::mem_pair;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("qotf").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn ot_bit_local_end_to_end() {
        let cli = parse(&["ot-bit", "--b", "0", "--m0", "1", "--m1", "0", "--seed", "3"]);
        assert_eq!(run(cli).unwrap(), EXIT_OK);
    }

    #[test]
    fn ot_bit_writes_run_record_and_replayable_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap().to_string();
        let cli = parse(&[
            "ot-bit", "--b", "1", "--m0", "0", "--m1", "1", "--seed", "9", "--out", &out,
        ]);
        assert_eq!(run(cli).unwrap(), EXIT_OK);
        let record: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("run.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(record["outputs"]["alice_m_b"], serde_json::json!(true));
        let transcript = Transcript::from_jsonl(
            &std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap(),
        )
        .unwrap();
        assert_eq!(record["transcript_digest"], transcript.digest_hex());
        // Byte-exact replay from the stored record.
        let mut replay = crate::protocols::ReplayChannel::new(&transcript, Role::Alice);
        let mut rng = SessionConfig::party_rng(9, Role::Alice);
        let config = SessionArgs {
            role: CliRole::Local,
            endpoint: "mem:".into(),
            seed: Some(9),
            zk: CliZk::Ideal,
            fh: CliFh::Crs,
            hash: CliHash::Toy,
            witness_len: 8,
            out: None,
        }
        .config();
        let again = bit_ot::alice(true, &config, &mut replay, &mut rng).unwrap();
        assert_eq!(again.output, Some(true));
        assert_eq!(again.transcript, transcript);
    }

    #[test]
    fn ot_string_and_kn_local() {
        let cli = parse(&[
            "ot-string", "--m", "2", "--second-half", "--messages", "0110", "--seed", "4",
        ]);
        assert_eq!(run(cli).unwrap(), EXIT_OK);
        let cli = parse(&[
            "ot-kn", "--k", "1", "--blocks", "2", "--block-len", "2", "--chosen", "1",
            "--messages", "1001", "--seed", "5",
        ]);
        assert_eq!(run(cli).unwrap(), EXIT_OK);
    }

    #[test]
    fn zkoqs_and_checkers() {
        let cli = parse(&["zkoqs", "--n", "2", "--seed", "6"]);
        assert_eq!(run(cli).unwrap(), EXIT_OK);
        let cli = parse(&["check-membership", "--n", "2", "--seed", "7"]);
        assert_eq!(run(cli).unwrap(), EXIT_OK);
        let cli = parse(&["check-postponable", "--n", "2"]);
        assert_eq!(run(cli).unwrap(), EXIT_OK);
    }

    #[test]
    fn attack_and_game_subcommands() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap().to_string();
        let cli = parse(&[
            "attack", "--id", "naive_plus", "--trials", "50", "--seed", "1", "--out", &out,
        ]);
        assert_eq!(run(cli).unwrap(), EXIT_OK);
        assert!(dir.path().join("attack_naive_plus.csv").exists());
        let cli = parse(&["game", "--id", "g4", "--out", &out]);
        assert_eq!(run(cli).unwrap(), EXIT_OK);
        assert!(dir.path().join("game_g4.json").exists());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(
            main_with(["qotf", "definitely-not-a-subcommand"].map(String::from)),
            EXIT_USAGE_OR_INTERNAL
        );
        assert_eq!(
            main_with(["qotf", "attack", "--id", "nope"].map(String::from)),
            EXIT_USAGE_OR_INTERNAL
        );
        // Missing required inputs for the chosen role.
        assert_eq!(
            main_with(["qotf", "ot-bit", "--b", "5"].map(String::from)),
            EXIT_USAGE_OR_INTERNAL
        );
    }

    #[test]
    fn predicate_dsl_parses() {
        assert_eq!(parse_predicate("singleton:3").unwrap().n(), 3);
        assert_eq!(parse_predicate("string:2").unwrap().n(), 4);
        assert_eq!(parse_predicate("kofn:1:2:2").unwrap().n(), 4);
        let table = parse_predicate("!table:3:001|110").unwrap();
        assert_eq!(table.n(), 3);
        assert!(table.on_complement);
        assert!(parse_predicate("bogus").is_err());
        assert!(parse_predicate("table:3:0011").is_err());
    }

    #[test]
    fn socket_and_mem_channels_agree_byte_for_byte() {
        let config = SessionConfig::default_toy();
        let seed = 11u64;
        let (mem_a, _mem_b) = bit_ot::run_local(true, (false, true), &config, seed).unwrap();

        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let config_b = config.clone();
        let server = std::thread::spawn(move || {
            let mut ch = channel::serve_listener(listener).unwrap();
            let mut rng = SessionConfig::party_rng(seed, Role::Bob);
            bit_ot::bob(false, true, &config_b, &mut ch, &mut rng).unwrap()
        });
        let mut ch = channel::connect(addr).unwrap();
        let mut rng = SessionConfig::party_rng(seed, Role::Alice);
        let sock_a = bit_ot::alice(true, &config, &mut ch, &mut rng).unwrap();
        let sock_b = server.join().unwrap();
        assert_eq!(sock_a.output, Some(true));
        assert!(sock_b.output.is_some());
        assert_eq!(sock_a.transcript, mem_a.transcript);
    }

    #[test]
    fn mem_loopback_echo_is_byte_identical() {
        let (mut a, mut b) = mem_pair();
        let frame = crate::channel::Frame::new(FrameType::Config, b"config-bytes".to_vec());
        a.send(frame.clone()).unwrap();
        let received = b.recv().unwrap();
        b.send(received).unwrap();
        assert_eq!(a.recv().unwrap(), frame);
    }

    #[test]
    fn bench_smallest_row_runs() {
        let csv = bench(&[8], None).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        // Header + ideal + nizk (toy width).
        assert_eq!(rows.len(), 3);
        assert!(rows[1].starts_with("8,9,toy,ideal,20,18,2"));
        assert!(rows[2].contains("nizk"));
    }
}
