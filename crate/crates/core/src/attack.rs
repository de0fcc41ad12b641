//! Oracle-guided key recovery.
//!
//! The core loop is a sequential SAT attack: unroll the encrypted design,
//! build a difference miter over two key copies, and repeatedly ask the
//! solver for an input sequence on which some pair of still-viable keys
//! disagrees. Each such sequence is played against the black-box oracle and
//! the response is added as a constraint on both key copies. When no
//! disagreeing pair remains, any surviving assignment is extracted as the
//! candidate key and handed to the verification cascade.
//!
//! What makes the attack practical on sequential designs is choosing the
//! unroll depth `b`. [`fun_sat`] walks a window of depths, measures
//! functional corruptibility at each one, and commits to the depth where the
//! curve stops growing: past that point deeper unrolling mostly adds cost,
//! not distinguishing power. The [`reference_attack`] ignores corruption
//! statistics and climbs a fixed schedule instead; it is the baseline the
//! guided walk is measured against.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{add_io_constraint, encode_miter, CnfError, CnfSink, Lit};
use crate::netlist::Netlist;
use crate::rng::split_seed;
use crate::sim::{estimate_fc, Dip, FcEstimate, FcTrace, InputVector, KeySequence, Oracle, SimError};
use crate::solver::{SatEngine, SolveResult, Solver, SolverError};
use crate::unroll::{unroll, UnrollError, UnrolledCircuit};
use crate::verify::{key_verify, SolveLimits, VerifyError, VerifyMethod, VerifyOutcome};

/// Patterns recorded during an attack, in discovery order.
pub type DipList = Vec<Dip>;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("bad attack configuration: {0}")]
    BadConfig(String),
    #[error("unroll depth cap {0} exceeded without a verified key")]
    DepthCap(usize),
    #[error("oracle ports do not match the encrypted design: {0}")]
    PortMismatch(String),
    #[error("no key is consistent with the recorded oracle responses")]
    Inconsistent,
    #[error(transparent)]
    Cnf(#[from] CnfError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Unroll(#[from] UnrollError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// How the baseline schedule grows the unroll depth between rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    Increment,
    Double,
}

impl UpdateRule {
    fn next(self, b: usize) -> usize {
        match self {
            UpdateRule::Increment => b + 1,
            UpdateRule::Double => 2 * b,
        }
    }
}

/// Knobs for both attack drivers. The window fields (`t_win`, `delta`,
/// `hold`, `samples`) only steer [`fun_sat`]; `update` only steers
/// [`reference_attack`]; the rest apply to both.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunSatConfig {
    /// Depths examined by the first analysis window.
    pub t_win: usize,
    /// Growth below this counts as flat.
    pub delta: f64,
    /// Consecutive flat steps required before committing to a depth.
    pub hold: usize,
    /// Sample budget per corruption estimate (small spaces are enumerated).
    pub samples: u64,
    pub seed: u64,
    /// Hard ceiling on the unroll depth; exceeding it is an error.
    pub depth_cap: usize,
    pub update: UpdateRule,
    /// Largest induction depth the verification cascade will try.
    pub max_induction: usize,
    pub conflict_budget: Option<u64>,
    pub time_limit: Option<Duration>,
}

impl Default for FunSatConfig {
    fn default() -> Self {
        FunSatConfig {
            t_win: 10,
            delta: 0.01,
            hold: 5,
            samples: 1000,
            seed: 1,
            depth_cap: 64,
            update: UpdateRule::Increment,
            max_induction: 10,
            conflict_budget: None,
            time_limit: None,
        }
    }
}

impl FunSatConfig {
    fn validate(&self) -> Result<(), AttackError> {
        if self.t_win < 1 {
            return Err(AttackError::BadConfig("t_win must be at least 1".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(AttackError::BadConfig("delta must be nonnegative".into()));
        }
        if self.hold < 1 {
            return Err(AttackError::BadConfig("hold must be at least 1".into()));
        }
        if self.samples < 1 {
            return Err(AttackError::BadConfig("samples must be at least 1".into()));
        }
        if self.depth_cap < 1 {
            return Err(AttackError::BadConfig("depth_cap must be at least 1".into()));
        }
        Ok(())
    }

    fn limits(&self) -> SolveLimits {
        SolveLimits {
            conflict_budget: self.conflict_budget,
            deadline: self.time_limit.map(|d| Instant::now() + d),
        }
    }
}

/// Result of one SAT attack round at a fixed depth.
#[derive(Debug, Clone)]
pub struct SatAttackOutcome {
    pub key: KeySequence,
    /// Patterns discovered this round, in discovery order.
    pub new_dips: DipList,
    /// Solver calls that produced a pattern.
    pub iterations: u64,
    pub conflicts: u64,
}

/// One depth-selection plus attack plus verification round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseReport {
    /// Unroll depth attacked this phase.
    pub b: usize,
    /// Corruption estimates computed fresh this phase (cached ones are not
    /// repeated).
    pub fc_estimates: FcTrace,
    /// Set when every estimate across the phase's window was exactly zero:
    /// no wrong-key error is observable yet at these depths, so the selected
    /// depth carries no signal.
    pub zero_fc_window: bool,
    /// Whether the depth scan committed before the window's upper edge.
    pub early_break: bool,
    pub dips_added: usize,
    pub sat_iterations: u64,
    pub conflicts: u64,
    pub verify: VerifyOutcome,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackReport {
    pub algorithm: String,
    pub t_k: usize,
    pub config: FunSatConfig,
    pub key: KeySequence,
    /// Depth of the phase whose key passed verification.
    pub b_final: usize,
    pub verified_by: VerifyMethod,
    pub phases: Vec<PhaseReport>,
    /// Every corruption estimate computed during the run, by depth.
    pub fc_trace: FcTrace,
    pub oracle_queries: u64,
    pub total_dips: usize,
    pub seconds: f64,
}

fn check_oracle_ports(enc: &Netlist, oracle: &dyn Oracle) -> Result<(), AttackError> {
    if enc.inputs.len() != oracle.num_inputs() || enc.outputs.len() != oracle.num_outputs() {
        return Err(AttackError::PortMismatch(format!(
            "encrypted has {} inputs and {} outputs, oracle has {} and {}",
            enc.inputs.len(),
            enc.outputs.len(),
            oracle.num_inputs(),
            oracle.num_outputs()
        )));
    }
    Ok(())
}

/// Pin both key copies to agree with the oracle on one recorded pattern.
/// Patterns of any depth are accepted; each depth gets its own unrolling.
fn constrain_both<S: CnfSink + ?Sized>(
    s: &mut S,
    enc: &Netlist,
    t_k: usize,
    unrolls: &mut HashMap<usize, UnrolledCircuit>,
    key_a: &[Lit],
    key_b: &[Lit],
    dip: &Dip,
) -> Result<(), AttackError> {
    let len = dip.inputs.len();
    if !unrolls.contains_key(&len) {
        unrolls.insert(len, unroll(enc, t_k, len)?);
    }
    let u = &unrolls[&len];
    add_io_constraint(s, u, key_a, &dip.inputs, &dip.outputs)?;
    add_io_constraint(s, u, key_b, &dip.inputs, &dip.outputs)?;
    Ok(())
}

/// Sequential SAT attack at a fixed unroll depth `b`.
///
/// Previously recorded patterns are replayed as constraints first, so a
/// round never rediscovers a pattern and never resurrects a key an earlier
/// round ruled out. The returned key satisfies every recorded response; it is
/// correct only if the patterns pin the key, which is the verifier's job to
/// establish.
pub fn sat_attack(
    enc: &Netlist,
    t_k: usize,
    b: usize,
    oracle: &dyn Oracle,
    prior: &[Dip],
    limits: SolveLimits,
) -> Result<SatAttackOutcome, AttackError> {
    check_oracle_ports(enc, oracle)?;
    let width = enc.inputs.len();
    let mut unrolls = HashMap::new();
    unrolls.insert(b, unroll(enc, t_k, b)?);

    let mut s = Solver::default();
    s.set_limits(limits.conflict_budget, limits.deadline);
    let m = encode_miter(&mut s, &unrolls[&b])?;
    for dip in prior {
        constrain_both(&mut s, enc, t_k, &mut unrolls, &m.key_a, &m.key_b, dip)?;
    }

    let mut new_dips = Vec::new();
    loop {
        match s.solve_under(&[m.act])? {
            SolveResult::Sat => {
                let x: Vec<InputVector> = (0..b)
                    .map(|f| (0..width).map(|p| s.model_value(m.data[f * width + p])).collect())
                    .collect();
                let y = oracle.query(&x);
                let dip = Dip { inputs: x, outputs: y };
                constrain_both(&mut s, enc, t_k, &mut unrolls, &m.key_a, &m.key_b, &dip)?;
                new_dips.push(dip);
            }
            SolveResult::Unsat => break,
        }
    }

    // With the difference requirement dropped, any surviving assignment of
    // the first key copy is consistent with every response seen so far.
    match s.solve_under(&[])? {
        SolveResult::Sat => {
            let key: KeySequence = (0..t_k)
                .map(|f| (0..width).map(|p| s.model_value(m.key_a[f * width + p])).collect())
                .collect();
            let iterations = new_dips.len() as u64;
            Ok(SatAttackOutcome { key, new_dips, iterations, conflicts: s.conflicts() })
        }
        SolveResult::Unsat => Err(AttackError::Inconsistent),
    }
}

/// Pick the attack depth from a corruption trace over one window.
///
/// `trace` holds consecutive depths in order; `prev_fc` supplies the value
/// just below the window (absent for the very first window). A step that
/// grows the estimate by at most `delta` counts as flat; after `hold`
/// consecutive flat steps the depth at the start of the flat run is chosen
/// and the scan stops early (second result `true`). If the curve keeps
/// growing, the window's upper edge is chosen. The choice never drops below
/// depth 1.
pub fn select_unroll_depth(
    trace: &[(usize, FcEstimate)],
    delta: f64,
    hold: usize,
    prev_fc: Option<f64>,
) -> (usize, bool) {
    debug_assert!(trace.windows(2).all(|w| w[1].0 == w[0].0 + 1));
    let mut prev = prev_fc;
    let mut flat = 0usize;
    for &(b, est) in trace {
        if let Some(p) = prev {
            if est.fc - p <= delta {
                flat += 1;
                if flat == hold {
                    return (b.saturating_sub(hold).max(1), true);
                }
            } else {
                flat = 0;
            }
        }
        prev = Some(est.fc);
    }
    (trace.last().expect("empty corruption window").0, false)
}

/// Corruption estimates for every depth in `[b_l, b_u]`, reusing `cache` and
/// recording fresh values both there and in the returned `fresh` list.
fn window_trace(
    enc: &Netlist,
    oracle: &dyn Oracle,
    t_k: usize,
    b_l: usize,
    b_u: usize,
    cfg: &FunSatConfig,
    cache: &mut HashMap<usize, FcEstimate>,
) -> Result<(FcTrace, FcTrace), SimError> {
    let mut full = Vec::new();
    let mut fresh = Vec::new();
    for b in b_l..=b_u {
        let est = match cache.get(&b) {
            Some(e) => *e,
            None => {
                let e = estimate_fc(enc, oracle, t_k, b, cfg.samples, split_seed(cfg.seed, b as u64))?;
                cache.insert(b, e);
                fresh.push((b, e));
                e
            }
        };
        full.push((b, est));
    }
    Ok((full, fresh))
}

fn finish_report(
    algorithm: &str,
    t_k: usize,
    cfg: &FunSatConfig,
    key: KeySequence,
    b_final: usize,
    method: VerifyMethod,
    phases: Vec<PhaseReport>,
    cache: &HashMap<usize, FcEstimate>,
    oracle: &dyn Oracle,
    total_dips: usize,
    start: Instant,
) -> AttackReport {
    let mut fc_trace: FcTrace = cache.iter().map(|(&b, &e)| (b, e)).collect();
    fc_trace.sort_by_key(|&(b, _)| b);
    AttackReport {
        algorithm: algorithm.to_string(),
        t_k,
        config: cfg.clone(),
        key,
        b_final,
        verified_by: method,
        phases,
        fc_trace,
        oracle_queries: oracle.queries(),
        total_dips,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Corruption-guided attack driver.
///
/// Each phase estimates corruption across one depth window, commits to the
/// depth where the curve flattens, attacks there, and runs the verification
/// cascade on the recovered key. On failure the next window opens just past
/// the attacked depth; estimates already computed are reused, and every
/// phase attacks a strictly deeper unrolling than the one before, so the
/// walk either verifies a key or hits `depth_cap`.
pub fn fun_sat(
    enc: &Netlist,
    t_k: usize,
    oracle: &dyn Oracle,
    cfg: &FunSatConfig,
) -> Result<AttackReport, AttackError> {
    cfg.validate()?;
    check_oracle_ports(enc, oracle)?;
    let start = Instant::now();
    let limits = cfg.limits();
    let mut cache = HashMap::new();
    let mut dips: DipList = Vec::new();
    let mut phases = Vec::new();
    let mut last_b = 0usize;
    let mut b_l = 1usize;
    let mut b_u = cfg.t_win;
    loop {
        if b_l > cfg.depth_cap {
            return Err(AttackError::DepthCap(cfg.depth_cap));
        }
        b_u = b_u.min(cfg.depth_cap);
        let (trace, fresh) = window_trace(enc, oracle, t_k, b_l, b_u, cfg, &mut cache)?;
        let prev_fc = cache.get(&(b_l - 1)).map(|e| e.fc);
        let (chosen, early_break) = select_unroll_depth(&trace, cfg.delta, cfg.hold, prev_fc);
        // An early break just after the window opens can point at or below an
        // already-attacked depth; progress wins over the scan's suggestion.
        let b = chosen.max(last_b + 1);

        let phase_start = Instant::now();
        let round = sat_attack(enc, t_k, b, oracle, &dips, limits)?;
        dips.extend(round.new_dips.iter().cloned());
        let verify = key_verify(enc, t_k, &dips, &round.key, b, cfg.max_induction, limits)?;
        phases.push(PhaseReport {
            b,
            fc_estimates: fresh,
            zero_fc_window: trace.iter().all(|&(_, e)| e.fc == 0.0),
            early_break,
            dips_added: round.new_dips.len(),
            sat_iterations: round.iterations,
            conflicts: round.conflicts,
            verify: verify.clone(),
            seconds: phase_start.elapsed().as_secs_f64(),
        });
        if let VerifyOutcome::Verified { method } = verify {
            let n = dips.len();
            return Ok(finish_report("fun_sat", t_k, cfg, round.key, b, method, phases, &cache, oracle, n, start));
        }
        last_b = b;
        b_l = b + 1;
        b_u = b + 1 + cfg.t_win;
    }
}

/// Baseline driver: attack at depth 1 and grow the depth by `cfg.update`
/// after every failed verification, without measuring corruption.
pub fn reference_attack(
    enc: &Netlist,
    t_k: usize,
    oracle: &dyn Oracle,
    cfg: &FunSatConfig,
) -> Result<AttackReport, AttackError> {
    cfg.validate()?;
    check_oracle_ports(enc, oracle)?;
    let start = Instant::now();
    let limits = cfg.limits();
    let mut dips: DipList = Vec::new();
    let mut phases = Vec::new();
    let mut b = 1usize;
    loop {
        if b > cfg.depth_cap {
            return Err(AttackError::DepthCap(cfg.depth_cap));
        }
        let phase_start = Instant::now();
        let round = sat_attack(enc, t_k, b, oracle, &dips, limits)?;
        dips.extend(round.new_dips.iter().cloned());
        let verify = key_verify(enc, t_k, &dips, &round.key, b, cfg.max_induction, limits)?;
        phases.push(PhaseReport {
            b,
            fc_estimates: Vec::new(),
            zero_fc_window: false,
            early_break: false,
            dips_added: round.new_dips.len(),
            sat_iterations: round.iterations,
            conflicts: round.conflicts,
            verify: verify.clone(),
            seconds: phase_start.elapsed().as_secs_f64(),
        });
        if let VerifyOutcome::Verified { method } = verify {
            let n = dips.len();
            let cache = HashMap::new();
            return Ok(finish_report("reference", t_k, cfg, round.key, b, method, phases, &cache, oracle, n, start));
        }
        b = cfg.update.next(b);
    }
}
