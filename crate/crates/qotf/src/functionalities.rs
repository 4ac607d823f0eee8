//! Executable ideal functionalities: bit OT, predicate OT, the generic
//! partial-measurement functionality F_pm with its semi-collapsing
//! instantiation, the membership checker for the quantum language of
//! semi-collapsed states, and the postponability check that justifies
//! handing the verifier's state out before the measurement happens.
//!
//! Everything here is a pure function of (inputs, rng): these are the ideal
//! worlds the hybrid games in the harness compare the real protocols against.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use qsim::{
    bell_pair, measure_computational, trace_distance, Bits, DensityMatrix, RegisterLayout,
    SparseState,
};

use crate::error::{QotfError, Result};
use crate::predicate::Predicate;

/// Ideal bit OT: Bob inputs (m_0, m_1), Alice a choice bit; `None` models an
/// abort decision. Alice receives m_b unless either side aborted.
pub fn f_ot(bob: Option<(bool, bool)>, alice: Option<bool>) -> Option<bool> {
    let (m0, m1) = bob?;
    let b = alice?;
    Some(if b { m1 } else { m0 })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FOtPredRun {
    /// Alice's output: m_i on B, `None` entries elsewhere; `None` overall on
    /// abort.
    pub alice: Option<Vec<Option<bool>>>,
    /// Bob learns only whether the run aborted (including Pred(B) = ⊥).
    pub bob_abort: bool,
}

/// Ideal predicate OT: Alice receives exactly the messages indexed by her
/// subset B, provided Pred(B) = ⊤ and nobody aborted.
pub fn f_ot_pred(
    bob: Option<&[bool]>,
    alice: Option<&Bits>,
    pred: &Predicate,
) -> Result<FOtPredRun> {
    let (Some(messages), Some(b_mask)) = (bob, alice) else {
        return Ok(FOtPredRun {
            alice: None,
            bob_abort: true,
        });
    };
    if messages.len() != pred.n() || b_mask.len() != pred.n() {
        return Err(QotfError::Params("predicate OT arity mismatch".into()));
    }
    if !pred.eval(b_mask)? {
        return Ok(FOtPredRun {
            alice: None,
            bob_abort: true,
        });
    }
    let out = (0..pred.n())
        .map(|i| b_mask.bit(i).then(|| messages[i]))
        .collect();
    Ok(FOtPredRun {
        alice: Some(out),
        bob_abort: false,
    })
}

/// Outcome m of a registered measurement operator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PmOutcome {
    /// The operator rejected its input (m = ⊥).
    Bot,
    /// Semi-collapsing outcome (T, (m_j)_{j∈T}, (r_i)_{i∉T}).
    Semicol {
        t_mask: Bits,
        m: Vec<Option<bool>>,
        r: Vec<Option<bool>>,
    },
    /// Free-form outcome for other operators.
    Raw(String),
}

/// A collection of measurement operators {M_m} with its honest filter f_0.
pub struct MeasurementOperatorSpec {
    pub id: String,
    /// Sample one Born branch: outcome m and post-measured state.
    #[allow(clippy::type_complexity)]
    pub apply:
        Box<dyn Fn(&SparseState, &mut dyn RngCore) -> Result<(PmOutcome, SparseState)> + Send + Sync>,
    /// The filter applied to m in an honest run; `None` = ⊥.
    #[allow(clippy::type_complexity)]
    pub f0: Box<dyn Fn(&PmOutcome) -> Option<String> + Send + Sync>,
}

/// The verifier's reply f in the F_pm dance.
pub enum VerifierReply {
    Bot,
    Top,
    Custom(Box<dyn Fn(&PmOutcome) -> Option<String>>),
}

/// One complete run of F_pm from both interfaces' point of view.
#[derive(Debug)]
pub struct FpmRun {
    /// f(m) as delivered to the prover; `None` = ⊥.
    pub prover_msg: Option<String>,
    /// The post-measured state delivered to the verifier (absent if the
    /// prover aborted up front).
    pub verifier_state: Option<SparseState>,
    pub outcome: Option<PmOutcome>,
    pub aborted: bool,
}

/// The partial-measurement functionality: receive (ρ, a) from the prover,
/// abort on a = ⊥, otherwise measure with the registered operator, hand the
/// post-measured state to the verifier, interpret its reply f (⊥ aborts,
/// ⊤ selects f_0), and deliver f(m) to the prover.
pub fn f_pm(
    spec: &MeasurementOperatorSpec,
    input: Option<&SparseState>,
    verifier: impl FnOnce(&SparseState) -> VerifierReply,
    rng: &mut dyn RngCore,
) -> Result<FpmRun> {
    let Some(rho) = input else {
        return Ok(FpmRun {
            prover_msg: None,
            verifier_state: None,
            outcome: None,
            aborted: true,
        });
    };
    let (m, post) = (spec.apply)(rho, rng)?;
    let reply = verifier(&post);
    let prover_msg = match reply {
        VerifierReply::Bot => None,
        VerifierReply::Top => (spec.f0)(&m),
        VerifierReply::Custom(f) => f(&m),
    };
    let aborted = prover_msg.is_none();
    Ok(FpmRun {
        prover_msg,
        verifier_state: Some(post),
        outcome: Some(m),
        aborted,
    })
}

pub fn qubit_register(i: usize) -> String {
    format!("q{}", i + 1)
}

/// n single-qubit registers q1..qn.
pub fn qubits_layout(n: usize) -> RegisterLayout {
    RegisterLayout::new((0..n).map(|i| (qubit_register(i), 1)).collect()).expect("fixed layout")
}

/// The layout the semi-collapsing operator expects: the classical T register
/// followed by the n data qubits.
pub fn semicol_layout(n: usize) -> RegisterLayout {
    let mut regs = vec![("t".to_string(), n)];
    regs.extend((0..n).map(|i| (qubit_register(i), 1)));
    RegisterLayout::new(regs).expect("fixed layout")
}

/// The dummy rejection state |⊥⟩.
pub fn bot_state() -> SparseState {
    SparseState::basis(
        RegisterLayout::single("bot", 1).expect("fixed layout"),
        Bits::from_bools(vec![true]),
    )
    .expect("fixed state")
}

pub fn is_bot_state(state: &SparseState) -> bool {
    state.layout() == bot_state().layout()
}

/// The semi-collapsing measurement operator: measure the T register, reject
/// if Pred(T) = ⊥, otherwise measure every data qubit in T non-destructively
/// and rotate every other qubit by Z^{r_i} with a fresh coin r_i.
pub fn semicol_spec(pred: &Predicate) -> MeasurementOperatorSpec {
    let n = pred.n();
    let pred_apply = pred.clone();
    let apply = move |state: &SparseState, rng: &mut dyn RngCore| {
        if state.layout() != &semicol_layout(n) {
            return Err(QotfError::Structural(
                "semi-collapsing operator expects the T register plus n qubits".into(),
            ));
        }
        let (t_rec, state) = measure_computational(state, "t", rng)?;
        let t_mask = t_rec.outcome;
        if !pred_apply.eval(&t_mask)? {
            return Ok((PmOutcome::Bot, bot_state()));
        }
        let mut state = state.drop_register("t")?;
        let mut m = vec![None; n];
        let mut r = vec![None; n];
        for i in 0..n {
            let reg = qubit_register(i);
            if t_mask.bit(i) {
                let (rec, next) = measure_computational(&state, &reg, rng)?;
                m[i] = Some(rec.outcome.bit(0));
                state = next;
            } else {
                let coin = (rng.next_u32() & 1) == 1;
                r[i] = Some(coin);
                state = state.apply_z(&reg, 1, coin)?;
            }
        }
        Ok((PmOutcome::Semicol { t_mask, m, r }, state))
    };
    let f0 = |m: &PmOutcome| match m {
        PmOutcome::Semicol { r, .. } => Some(serde_json::to_string(r).expect("serialize")),
        _ => None,
    };
    MeasurementOperatorSpec {
        id: format!("semicol-n{n}"),
        apply: Box::new(apply),
        f0: Box::new(f0),
    }
}

/// F_semicol: F_pm instantiated with the semi-collapsing operator and the
/// dummy verifier that rejects exactly the |⊥⟩ state. The prover's abort bit
/// is modeled by `input = None`; a state on q1..qn plus the claimed T is the
/// honest input shape.
pub fn f_semicol(
    pred: &Predicate,
    input: Option<(&Bits, &SparseState)>,
    rng: &mut dyn RngCore,
) -> Result<FpmRun> {
    let spec = semicol_spec(pred);
    let composite = match input {
        None => None,
        Some((t_mask, state)) => {
            if t_mask.len() != pred.n() {
                return Err(QotfError::Params("T mask arity mismatch".into()));
            }
            let t_reg = SparseState::basis(
                RegisterLayout::single("t", pred.n())?,
                t_mask.clone(),
            )?;
            Some(t_reg.tensor(state)?)
        }
    };
    f_pm(
        &spec,
        composite.as_ref(),
        |post| {
            if is_bot_state(post) {
                VerifierReply::Bot
            } else {
                VerifierReply::Top
            }
        },
        rng,
    )
}

/// The honest sampling procedure G(T): fresh coins a_i, qubit i prepared as
/// H^{δ_{i∉T}}|a_i⟩.
pub fn g_sample(t_mask: &Bits, rng: &mut dyn RngCore) -> Result<(Bits, SparseState)> {
    let n = t_mask.len();
    let a = Bits::random(n, rng);
    let mut state: Option<SparseState> = None;
    for i in 0..n {
        let mut q = SparseState::basis(
            RegisterLayout::single(&qubit_register(i), 1)?,
            Bits::from_bools(vec![a.bit(i)]),
        )?;
        if !t_mask.bit(i) {
            q = q.apply_h(&qubit_register(i), 1)?;
        }
        state = Some(match state {
            None => q,
            Some(s) => s.tensor(&q)?,
        });
    }
    Ok((a, state.expect("n ≥ 1")))
}

/// Σ M†M − I for the semi-collapsing operator at a fixed T, in dense form.
/// Returns the largest entry magnitude of the deviation.
pub fn semicol_kraus_completeness(t_mask: &Bits) -> f64 {
    let n = t_mask.len();
    let dim = 1usize << n;
    let proj = |d: bool| {
        let mut m = DMatrix::<Complex64>::zeros(2, 2);
        m[(d as usize, d as usize)] = Complex64::new(1.0, 0.0);
        m
    };
    let zpow = |r: bool| {
        let mut m = DMatrix::<Complex64>::identity(2, 2);
        if r {
            m[(1, 1)] = Complex64::new(-1.0, 0.0);
        }
        m * Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
    };
    let free: Vec<usize> = (0..n).filter(|&i| !t_mask.bit(i)).collect();
    let measured: Vec<usize> = (0..n).filter(|&i| t_mask.bit(i)).collect();
    let mut sum = DMatrix::<Complex64>::zeros(dim, dim);
    for m_idx in 0..(1usize << measured.len()) {
        for r_idx in 0..(1usize << free.len()) {
            let mut op = DMatrix::<Complex64>::identity(1, 1);
            for i in 0..n {
                let factor = if let Some(k) = measured.iter().position(|&j| j == i) {
                    proj((m_idx >> k) & 1 == 1)
                } else {
                    let k = free.iter().position(|&j| j == i).expect("partition");
                    zpow((r_idx >> k) & 1 == 1)
                };
                op = op.kronecker(&factor);
            }
            sum += op.adjoint() * &op;
        }
    }
    let dev = sum - DMatrix::<Complex64>::identity(dim, dim);
    dev.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Single-qubit partial trace of a dense density matrix (qubit 0 is the most
/// significant index bit, matching the state-vector ordering).
fn reduced_single(rho: &DensityMatrix, qubit: usize) -> DMatrix<Complex64> {
    let n = rho.qubits();
    let dim = rho.dim();
    let shift = n - 1 - qubit;
    let mut out = DMatrix::<Complex64>::zeros(2, 2);
    for i in 0..dim {
        for j in 0..dim {
            if (i & !(1 << shift)) == (j & !(1 << shift)) {
                out[((i >> shift) & 1, (j >> shift) & 1)] += rho.matrix()[(i, j)];
            }
        }
    }
    out
}

fn basis_2x2(d: bool) -> DMatrix<Complex64> {
    let mut m = DMatrix::<Complex64>::zeros(2, 2);
    m[(d as usize, d as usize)] = Complex64::new(1.0, 0.0);
    m
}

fn hadamard_2x2(omega: bool) -> DMatrix<Complex64> {
    let s = if omega { -0.5 } else { 0.5 };
    DMatrix::<Complex64>::from_row_slice(
        2,
        2,
        &[
            Complex64::new(0.5, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(0.5, 0.0),
        ],
    )
}

fn td_2x2(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    dmatrix_trace_distance(a, b)
}

fn dmatrix_trace_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let da = DensityMatrix::from_matrix(a.clone()).expect("square power-of-two");
    let db = DensityMatrix::from_matrix(b.clone()).expect("square power-of-two");
    trace_distance(&da, &db).expect("same dimension")
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport {
    pub n: usize,
    pub epsilon: f64,
    /// ∃ T with Pred(T) = ⊤ such that every qubit in T is an unentangled
    /// computational-basis state (within ε in trace distance).
    pub in_language: bool,
    /// The first T certifying language membership, if any.
    pub witness_t: Option<String>,
    /// With a claimed (T, ω_s): additionally every non-T qubit equals
    /// H|ω_s[i]⟩. Absent when no claim was supplied.
    pub in_subclass: Option<bool>,
    pub violations: Vec<String>,
}

/// Decide membership in the language of semi-collapsed states for a dense
/// n-qubit state, optionally against a claimed (T, ω_s) description. ω_s is
/// indexed by the elements of [n] ∖ T in increasing order.
pub fn check_semicollapsed_membership(
    rho: &DensityMatrix,
    pred: &Predicate,
    claimed: Option<(&Bits, &[bool])>,
    epsilon: Option<f64>,
) -> Result<MembershipReport> {
    let eps = epsilon.unwrap_or(qsim::tol::DENSITY);
    let n = rho.qubits();
    if n != pred.n() {
        return Err(QotfError::Params("predicate arity mismatch".into()));
    }
    let singles: Vec<DMatrix<Complex64>> = (0..n).map(|i| reduced_single(rho, i)).collect();
    let collapsed = |i: usize| -> bool {
        td_2x2(&singles[i], &basis_2x2(false)) <= eps || td_2x2(&singles[i], &basis_2x2(true)) <= eps
    };
    let mut witness_t = None;
    for t in pred.allowed_masks()? {
        if (0..n).all(|i| !t.bit(i) || collapsed(i)) {
            witness_t = Some(t.to_string());
            break;
        }
    }
    let mut violations = Vec::new();
    let in_subclass = match claimed {
        None => None,
        Some((t_mask, omega_s)) => {
            let mut ok = true;
            if t_mask.len() != n {
                return Err(QotfError::Params("claimed T arity mismatch".into()));
            }
            let free: Vec<usize> = (0..n).filter(|&i| !t_mask.bit(i)).collect();
            if omega_s.len() != free.len() {
                return Err(QotfError::Params("ω_s arity mismatch".into()));
            }
            if !pred.eval(t_mask)? {
                violations.push("claimed T violates the predicate".into());
                ok = false;
            }
            for i in 0..n {
                if t_mask.bit(i) && !collapsed(i) {
                    violations.push(format!("qubit {} claimed collapsed but is not", i + 1));
                    ok = false;
                }
            }
            for (k, &i) in free.iter().enumerate() {
                if td_2x2(&singles[i], &hadamard_2x2(omega_s[k])) > eps {
                    violations.push(format!(
                        "qubit {} does not match H|{}⟩",
                        i + 1,
                        omega_s[k] as u8
                    ));
                    ok = false;
                }
            }
            Some(ok)
        }
    };
    Ok(MembershipReport {
        n,
        epsilon: eps,
        in_language: witness_t.is_some(),
        witness_t,
        in_subclass,
        violations,
    })
}

pub const POSTPONABLE_MAX_WIDTH: usize = 3;

#[derive(Clone, Debug, Serialize)]
pub struct PostponabilityCase {
    pub t_mask: String,
    pub branch_count: usize,
    pub max_probability_diff: f64,
    pub max_conditional_trace_distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PostponabilityReport {
    pub n: usize,
    pub epsilon: f64,
    pub cases: Vec<PostponabilityCase>,
    pub ok: bool,
}

type BranchMap = std::collections::BTreeMap<String, (f64, DMatrix<Complex64>)>;

fn add_branch(map: &mut BranchMap, key: String, prob: f64, state: &SparseState) -> Result<()> {
    let dm = DensityMatrix::pure(state)?;
    let entry = map
        .entry(key)
        .or_insert_with(|| (0.0, DMatrix::zeros(dm.dim(), dm.dim())));
    entry.0 += prob;
    entry.1 += dm.matrix() * Complex64::new(prob, 0.0);
    Ok(())
}

/// Direct side of the postponability identity: run the semi-collapsing
/// operator on a fresh G(T) sample, enumerating every Born branch exactly.
fn direct_branches(t_mask: &Bits) -> Result<BranchMap> {
    let n = t_mask.len();
    let free: Vec<usize> = (0..n).filter(|&i| !t_mask.bit(i)).collect();
    let mut map = BranchMap::new();
    for a_idx in 0..(1usize << n) {
        let a = Bits::from_index(a_idx, n);
        for r_idx in 0..(1usize << free.len()) {
            let mut m = vec![None; n];
            let mut r = vec![None; n];
            let mut state: Option<SparseState> = None;
            for i in 0..n {
                let reg = qubit_register(i);
                let mut q = SparseState::basis(
                    RegisterLayout::single(&reg, 1)?,
                    Bits::from_bools(vec![a.bit(i)]),
                )?;
                if t_mask.bit(i) {
                    m[i] = Some(a.bit(i));
                } else {
                    let k = free.iter().position(|&j| j == i).expect("partition");
                    let coin = (r_idx >> k) & 1 == 1;
                    r[i] = Some(coin);
                    q = q.apply_h(&reg, 1)?.apply_z(&reg, 1, coin)?;
                }
                state = Some(match state {
                    None => q,
                    Some(s) => s.tensor(&q)?,
                });
            }
            let outcome = PmOutcome::Semicol {
                t_mask: t_mask.clone(),
                m,
                r,
            };
            let prob = 1.0 / ((1usize << n) as f64 * (1usize << free.len()) as f64);
            add_branch(
                &mut map,
                serde_json::to_string(&outcome)?,
                prob,
                &state.expect("n ≥ 1"),
            )?;
        }
    }
    Ok(map)
}

/// Teleport side: keep Bell halves V, run the operator on the G(T) sample,
/// Bell-measure each (F_i, q_i) pair, and relabel the outcome by the Bell
/// X/Z bits. The verifier-side register V is never touched.
fn teleport_branches(t_mask: &Bits) -> Result<BranchMap> {
    let n = t_mask.len();
    let free: Vec<usize> = (0..n).filter(|&i| !t_mask.bit(i)).collect();
    let mut map = BranchMap::new();
    for a_idx in 0..(1usize << n) {
        let a = Bits::from_index(a_idx, n);
        for r_idx in 0..(1usize << free.len()) {
            // Bell pairs (v_i, f_i) for every i, then the G(T) sample.
            let mut state: Option<SparseState> = None;
            for i in 0..n {
                let pair = bell_pair(&format!("v{}", i + 1), &format!("f{}", i + 1))?;
                state = Some(match state {
                    None => pair,
                    Some(s) => s.tensor(&pair)?,
                });
            }
            let mut state = state.expect("n ≥ 1");
            let mut r = vec![None; n];
            let mut m = vec![None; n];
            for i in 0..n {
                let reg = qubit_register(i);
                let mut q = SparseState::basis(
                    RegisterLayout::single(&reg, 1)?,
                    Bits::from_bools(vec![a.bit(i)]),
                )?;
                if t_mask.bit(i) {
                    m[i] = Some(a.bit(i));
                } else {
                    let k = free.iter().position(|&j| j == i).expect("partition");
                    let coin = (r_idx >> k) & 1 == 1;
                    r[i] = Some(coin);
                    q = q.apply_h(&reg, 1)?.apply_z(&reg, 1, coin)?;
                }
                state = state.tensor(&q)?;
            }
            let base_prob = 1.0 / ((1usize << n) as f64 * (1usize << free.len()) as f64);
            // Enumerate all Bell outcomes (x_i, z_i) per qubit.
            let mut branches = vec![(state, base_prob, Vec::<(bool, bool)>::new())];
            for i in 0..n {
                let mut next = Vec::new();
                for (s, p, xz) in &branches {
                    for x in [false, true] {
                        for z in [false, true] {
                            let f_name = format!("f{}", i + 1);
                            let q_name = qubit_register(i);
                            let (bp, post) =
                                qsim::bell_project(s, (f_name.as_str(), 1), (q_name.as_str(), 1), x, z)?;
                            if let Some(post) = post {
                                let mut xz = xz.clone();
                                xz.push((x, z));
                                next.push((post, p * bp, xz));
                            }
                        }
                    }
                }
                branches = next;
            }
            for (post, prob, xz) in branches {
                if prob <= 1e-15 {
                    continue;
                }
                let relabeled = PmOutcome::Semicol {
                    t_mask: t_mask.clone(),
                    m: (0..n)
                        .map(|i| m[i].map(|mi| mi ^ xz[i].0))
                        .collect(),
                    r: (0..n)
                        .map(|i| r[i].map(|ri| ri ^ xz[i].1))
                        .collect(),
                };
                add_branch(&mut map, serde_json::to_string(&relabeled)?, prob, &post)?;
            }
        }
    }
    Ok(map)
}

/// Verify that the semi-collapsing operator is postponable: for every
/// predicate-allowed T the joint distribution over (relabeled outcome,
/// verifier-side state) of the direct and teleported runs coincide.
pub fn check_postponable(pred: &Predicate, epsilon: f64) -> Result<PostponabilityReport> {
    let n = pred.n();
    if n > POSTPONABLE_MAX_WIDTH {
        return Err(QotfError::Capability(format!(
            "postponability check limited to n ≤ {POSTPONABLE_MAX_WIDTH}"
        )));
    }
    let mut cases = Vec::new();
    let mut ok = true;
    for t_mask in pred.allowed_masks()? {
        let direct = direct_branches(&t_mask)?;
        let teleport = teleport_branches(&t_mask)?;
        let keys: std::collections::BTreeSet<&String> =
            direct.keys().chain(teleport.keys()).collect();
        let mut max_p = 0.0f64;
        let mut max_td = 0.0f64;
        for key in &keys {
            let zero = (0.0, DMatrix::zeros(1 << n, 1 << n));
            let (pd, md) = direct.get(*key).unwrap_or(&zero);
            let (pt, mt) = teleport.get(*key).unwrap_or(&zero);
            max_p = max_p.max((pd - pt).abs());
            if *pd > 1e-12 && *pt > 1e-12 {
                let cd = md / Complex64::new(*pd, 0.0);
                let ct = mt / Complex64::new(*pt, 0.0);
                max_td = max_td.max(dmatrix_trace_distance(&cd, &ct));
            }
        }
        if max_p > epsilon || max_td > epsilon {
            ok = false;
        }
        cases.push(PostponabilityCase {
            t_mask: t_mask.to_string(),
            branch_count: keys.len(),
            max_probability_diff: max_p,
            max_conditional_trace_distance: max_td,
        });
    }
    Ok(PostponabilityReport {
        n,
        epsilon,
        cases,
        ok,
    })
}
