//! Key verification: decide whether a candidate key sequence recovered from
//! accumulated differentiating patterns is functionally correct.
//!
//! The cascade runs three checks. First, a uniqueness query: if no other key
//! satisfies the recorded input/output constraints, the candidate must be
//! the correct key, which always satisfies them. Otherwise a bounded
//! equivalence check searches for another constraint-consistent key whose
//! post-activation behavior diverges from the candidate's within a few
//! cycles. If none exists, k-induction over the product machine attempts an
//! unbounded proof; when that also stalls the result is reported as unknown
//! rather than verified.

use crate::cnf::{
    add_io_constraint, const_lit, encode_frame, encode_gate, key_differs_clause, CnfError,
    CnfSink, Lit,
};
use crate::netlist::{GateKind, Netlist};
use crate::sim::{Dip, InputVector, KeySequence, SimError};
use crate::solver::{SatEngine, SolveResult, Solver, SolverError};
use crate::unroll::{unroll, UnrollError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Cnf(#[from] CnfError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Unroll(#[from] UnrollError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{what}: expected width {expected}, got {got}")]
    Width { what: &'static str, expected: usize, got: usize },
}

/// Resource caps applied to each satisfiability query.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveLimits {
    pub conflict_budget: Option<u64>,
    pub deadline: Option<Instant>,
}

impl SolveLimits {
    fn apply(&self, s: &mut Solver) {
        s.set_limits(self.conflict_budget, self.deadline);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMethod {
    /// No other key satisfies the accumulated constraints.
    UniqueKey,
    /// k-induction proved all consistent keys behaviorally equal.
    Induction { k: usize },
    /// Bounded check only (no unbounded claim).
    Bmc { depth: usize },
}

/// A witness that some constraint-consistent key disagrees with the
/// candidate: its key, the post-activation input frames, and the first
/// frame whose outputs differ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CexTrace {
    pub other_key: KeySequence,
    pub inputs: Vec<InputVector>,
    pub frame: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum VerifyOutcome {
    Verified { method: VerifyMethod },
    Refuted { cex: CexTrace },
    Unknown,
}

impl VerifyOutcome {
    pub fn is_verified(&self) -> bool {
        matches!(self, VerifyOutcome::Verified { .. })
    }
}

/// Lockstep composition of two same-interface circuits sharing inputs.
pub struct ProductMachine<'a> {
    pub left: &'a Netlist,
    pub right: &'a Netlist,
}

/// One product step: fresh shared inputs, both next states, and a literal
/// true exactly when the two output frames differ.
pub struct ProductFrame {
    pub inputs: Vec<Lit>,
    pub next_left: Vec<Lit>,
    pub next_right: Vec<Lit>,
    pub diff: Lit,
}

impl<'a> ProductMachine<'a> {
    pub fn new(left: &'a Netlist, right: &'a Netlist) -> Result<Self, VerifyError> {
        if left.inputs.len() != right.inputs.len() {
            return Err(VerifyError::Width {
                what: "product inputs",
                expected: left.inputs.len(),
                got: right.inputs.len(),
            });
        }
        if left.outputs.len() != right.outputs.len() {
            return Err(VerifyError::Width {
                what: "product outputs",
                expected: left.outputs.len(),
                got: right.outputs.len(),
            });
        }
        Ok(ProductMachine { left, right })
    }

    pub fn frame<S: CnfSink + ?Sized>(
        &self,
        s: &mut S,
        st_left: &[Lit],
        st_right: &[Lit],
    ) -> Result<ProductFrame, VerifyError> {
        let inputs: Vec<Lit> = (0..self.left.inputs.len()).map(|_| s.fresh()).collect();
        let fl = encode_frame(s, self.left, st_left, &inputs)?;
        let fr = encode_frame(s, self.right, st_right, &inputs)?;
        let mut xors = Vec::new();
        for (&a, &b) in fl.outputs.iter().zip(&fr.outputs) {
            let x = s.fresh();
            encode_gate(s, GateKind::Xor, x, &[a, b]);
            xors.push(x);
        }
        let diff = s.fresh();
        encode_gate(s, GateKind::Or, diff, &xors);
        Ok(ProductFrame { inputs, next_left: fl.next_state, next_right: fr.next_state, diff })
    }
}

fn flat(frames: &[Vec<bool>]) -> Vec<bool> {
    frames.iter().flatten().copied().collect()
}

fn chunked(bits: &[bool], width: usize) -> Vec<Vec<bool>> {
    bits.chunks(width).map(|c| c.to_vec()).collect()
}

/// Add one unrolled copy of the circuit per recorded pattern, all sharing
/// the same symbolic key literals.
fn constrain_key_by_dips<S: CnfSink + ?Sized>(
    s: &mut S,
    enc: &Netlist,
    t_k: usize,
    dips: &[Dip],
    key: &[Lit],
) -> Result<(), VerifyError> {
    let mut unrolls: HashMap<usize, crate::unroll::UnrolledCircuit> = HashMap::new();
    for dip in dips {
        let b = dip.inputs.len();
        if !unrolls.contains_key(&b) {
            unrolls.insert(b, unroll(enc, t_k, b)?);
        }
        add_io_constraint(s, &unrolls[&b], key, &dip.inputs, &dip.outputs)?;
    }
    Ok(())
}

/// True when the candidate is the only key sequence consistent with every
/// recorded pattern.
pub fn check_unique_key(
    enc: &Netlist,
    t_k: usize,
    dips: &[Dip],
    k_star: &KeySequence,
    limits: SolveLimits,
) -> Result<bool, VerifyError> {
    let mut s = Solver::default();
    limits.apply(&mut s);
    let key: Vec<Lit> = (0..t_k * enc.inputs.len()).map(|_| s.fresh()).collect();
    constrain_key_by_dips(&mut s, enc, t_k, dips, &key)?;
    s.add_clause(&key_differs_clause(&key, &flat(k_star)));
    Ok(s.solve_under(&[])? == SolveResult::Unsat)
}

/// Product model for multi-cycle equivalence of the candidate key against
/// every other constraint-consistent key: the left side starts from the
/// candidate's post-activation state, the right side from the symbolic
/// state reached by entering a symbolic consistent key.
pub struct MceModel {
    pub solver: Solver,
    pub other_key: Vec<Lit>,
    pub init_left: Vec<Lit>,
    pub init_right: Vec<Lit>,
}

pub fn build_mce_model(
    enc: &Netlist,
    t_k: usize,
    dips: &[Dip],
    k_star: &KeySequence,
    limits: SolveLimits,
) -> Result<MceModel, VerifyError> {
    let n = enc.inputs.len();
    if k_star.len() != t_k {
        return Err(VerifyError::Width { what: "key frames", expected: t_k, got: k_star.len() });
    }
    let mut s = Solver::default();
    limits.apply(&mut s);
    let other_key: Vec<Lit> = (0..t_k * n).map(|_| s.fresh()).collect();
    constrain_key_by_dips(&mut s, enc, t_k, dips, &other_key)?;
    s.add_clause(&key_differs_clause(&other_key, &flat(k_star)));

    // Left: concrete state after entering the candidate key.
    let mut state = crate::sim::reset_state(enc);
    for frame in k_star {
        let (next, _) = crate::sim::step(enc, &state, frame)?;
        state = next;
    }
    let init_left: Vec<Lit> = state.iter().map(|&v| const_lit(&mut s, v)).collect();

    // Right: symbolic state after entering the symbolic other key.
    let mut st: Vec<Lit> = enc.dffs.iter().map(|ff| const_lit(&mut s, ff.init)).collect();
    for j in 0..t_k {
        let fc = encode_frame(&mut s, enc, &st, &other_key[j * n..(j + 1) * n])?;
        st = fc.next_state;
    }
    Ok(MceModel { solver: s, other_key, init_left, init_right: st })
}

/// Bounded search for a consistent key whose behavior differs from the
/// candidate within `depth` post-activation cycles.
pub fn bmc_check(
    enc: &Netlist,
    t_k: usize,
    dips: &[Dip],
    k_star: &KeySequence,
    depth: usize,
    limits: SolveLimits,
) -> Result<Option<CexTrace>, VerifyError> {
    let mut m = build_mce_model(enc, t_k, dips, k_star, limits)?;
    let pm = ProductMachine::new(enc, enc)?;
    let mut st_l = m.init_left;
    let mut st_r = m.init_right;
    let mut frames = Vec::new();
    let mut diffs = Vec::new();
    for _ in 0..depth {
        let f = pm.frame(&mut m.solver, &st_l, &st_r)?;
        st_l = f.next_left;
        st_r = f.next_right;
        diffs.push(f.diff);
        frames.push(f.inputs);
    }
    m.solver.add_clause(&diffs);
    if m.solver.solve_under(&[])? == SolveResult::Unsat {
        return Ok(None);
    }
    let n = enc.inputs.len();
    let key_bits: Vec<bool> = m.other_key.iter().map(|&l| m.solver.model_value(l)).collect();
    let inputs: Vec<InputVector> = frames
        .iter()
        .map(|f| f.iter().map(|&l| m.solver.model_value(l)).collect())
        .collect();
    let frame = diffs.iter().position(|&d| m.solver.model_value(d)).unwrap();
    Ok(Some(CexTrace { other_key: chunked(&key_bits, n), inputs, frame }))
}

/// Does "both sides agree" hold inductively: assuming agreement on `k`
/// consecutive frames from an arbitrary product state (along a simple path),
/// must frame `k+1` agree too?
fn induction_step_holds(
    pm: &ProductMachine,
    k: usize,
    limits: SolveLimits,
) -> Result<bool, VerifyError> {
    let mut s = Solver::default();
    limits.apply(&mut s);
    let mut st_l: Vec<Lit> = (0..pm.left.dffs.len()).map(|_| s.fresh()).collect();
    let mut st_r: Vec<Lit> = (0..pm.right.dffs.len()).map(|_| s.fresh()).collect();
    let mut states = vec![(st_l.clone(), st_r.clone())];
    for f in 0..=k {
        let fr = pm.frame(&mut s, &st_l, &st_r)?;
        if f < k {
            s.add_clause(&[!fr.diff]);
        } else {
            s.add_clause(&[fr.diff]);
        }
        st_l = fr.next_left;
        st_r = fr.next_right;
        states.push((st_l.clone(), st_r.clone()));
    }
    states.pop(); // the state after the violating frame is unconstrained
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let mut any = Vec::new();
            let (la, ra) = &states[i];
            let (lb, rb) = &states[j];
            for (&x, &y) in la.iter().zip(lb).chain(ra.iter().zip(rb)) {
                let d = s.fresh();
                encode_gate(&mut s, GateKind::Xor, d, &[x, y]);
                any.push(d);
            }
            s.add_clause(&any);
        }
    }
    Ok(s.solve_under(&[])? == SolveResult::Unsat)
}

/// Unbounded check: either finds a real counterexample (base case), proves
/// the property by induction, or gives up at `max_k`.
pub fn kinduction_check(
    enc: &Netlist,
    t_k: usize,
    dips: &[Dip],
    k_star: &KeySequence,
    max_k: usize,
    limits: SolveLimits,
) -> Result<VerifyOutcome, VerifyError> {
    let pm = ProductMachine::new(enc, enc)?;
    for k in 1..=max_k {
        if let Some(cex) = bmc_check(enc, t_k, dips, k_star, k, limits)? {
            return Ok(VerifyOutcome::Refuted { cex });
        }
        if induction_step_holds(&pm, k, limits)? {
            return Ok(VerifyOutcome::Verified { method: VerifyMethod::Induction { k } });
        }
    }
    Ok(VerifyOutcome::Unknown)
}

/// Full verification cascade for a candidate key recovered at unroll depth
/// `b`: uniqueness, then bounded equivalence to `b + 1`, then k-induction.
pub fn key_verify(
    enc: &Netlist,
    t_k: usize,
    dips: &[Dip],
    k_star: &KeySequence,
    b: usize,
    max_k: usize,
    limits: SolveLimits,
) -> Result<VerifyOutcome, VerifyError> {
    if check_unique_key(enc, t_k, dips, k_star, limits)? {
        return Ok(VerifyOutcome::Verified { method: VerifyMethod::UniqueKey });
    }
    if let Some(cex) = bmc_check(enc, t_k, dips, k_star, b + 1, limits)? {
        return Ok(VerifyOutcome::Refuted { cex });
    }
    kinduction_check(enc, t_k, dips, k_star, max_k, limits)
}

/// White-box bounded equivalence of an encrypted circuit under a concrete
/// key against the original, both observed after the activation phase.
/// Returns the differing input frames if the check finds any.
pub fn keyed_equivalence_bmc(
    enc: &Netlist,
    t_k: usize,
    key: &KeySequence,
    original: &Netlist,
    depth: usize,
    limits: SolveLimits,
) -> Result<Option<CexTrace>, VerifyError> {
    if key.len() != t_k {
        return Err(VerifyError::Width { what: "key frames", expected: t_k, got: key.len() });
    }
    let pm = ProductMachine::new(enc, original)?;
    let mut s = Solver::default();
    limits.apply(&mut s);
    let mut state = crate::sim::reset_state(enc);
    for frame in key {
        let (next, _) = crate::sim::step(enc, &state, frame)?;
        state = next;
    }
    let mut st_l: Vec<Lit> = state.iter().map(|&v| const_lit(&mut s, v)).collect();
    let mut st_r: Vec<Lit> = original.dffs.iter().map(|ff| const_lit(&mut s, ff.init)).collect();
    let mut frames = Vec::new();
    let mut diffs = Vec::new();
    for _ in 0..depth {
        let f = pm.frame(&mut s, &st_l, &st_r)?;
        st_l = f.next_left;
        st_r = f.next_right;
        diffs.push(f.diff);
        frames.push(f.inputs);
    }
    s.add_clause(&diffs);
    if s.solve_under(&[])? == SolveResult::Unsat {
        return Ok(None);
    }
    let inputs: Vec<InputVector> =
        frames.iter().map(|f| f.iter().map(|&l| s.model_value(l)).collect()).collect();
    let frame = diffs.iter().position(|&d| s.model_value(d)).unwrap();
    Ok(Some(CexTrace { other_key: key.clone(), inputs, frame }))
}

/// White-box unbounded proof that a concrete key realizes the original
/// circuit: bounded base cases plus k-induction on the mixed product.
pub fn keyed_equivalence_prove(
    enc: &Netlist,
    t_k: usize,
    key: &KeySequence,
    original: &Netlist,
    max_k: usize,
    limits: SolveLimits,
) -> Result<VerifyOutcome, VerifyError> {
    let pm = ProductMachine::new(enc, original)?;
    for k in 1..=max_k {
        if let Some(cex) = keyed_equivalence_bmc(enc, t_k, key, original, k, limits)? {
            return Ok(VerifyOutcome::Refuted { cex });
        }
        if induction_step_holds(&pm, k, limits)? {
            return Ok(VerifyOutcome::Verified { method: VerifyMethod::Induction { k } });
        }
    }
    Ok(VerifyOutcome::Unknown)
}
