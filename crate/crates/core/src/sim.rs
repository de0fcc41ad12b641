//! Cycle-accurate logic simulation, black-box oracle access, and functional
//! corruptibility (FC) measurement.
//!
//! FC at depth `b` for an encrypted circuit with `t_k` key cycles is the
//! fraction of (input sequence, key sequence) pairs whose last `b` output
//! frames disagree with the original circuit run for `b` cycles from reset.
//! A pair counts as corrupted if any bit of any of the `b` frames differs.

use crate::netlist::{Netlist, NetId};
use crate::rng::rng_from_seed;
use rand::Rng;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

pub type InputVector = Vec<bool>;
pub type OutputVector = Vec<bool>;
pub type State = Vec<bool>;
/// One input vector per key cycle, applied on the primary inputs.
pub type KeySequence = Vec<InputVector>;

/// A differentiating input pattern together with the oracle's response.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dip {
    pub inputs: Vec<InputVector>,
    pub outputs: Vec<OutputVector>,
}

/// Default ceiling on the (input, key) space size for exact enumeration.
pub const EXACT_FC_CAP: u64 = 1 << 24;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{what}: expected width {expected}, got {got}")]
    Width { what: &'static str, expected: usize, got: usize },
    #[error("enumeration space 2^{space_bits} exceeds cap {cap}")]
    TooLarge { space_bits: u32, cap: u64 },
    #[error("circuits disagree on port counts: {0}")]
    PortMismatch(String),
    #[error(transparent)]
    Netlist(#[from] crate::netlist::NetlistError),
}

/// Reset state: flip-flop init values in declaration order.
pub fn reset_state(c: &Netlist) -> State {
    c.dffs.iter().map(|f| f.init).collect()
}

/// Precomputed evaluation order for repeated stepping of one netlist.
pub struct Sim<'a> {
    c: &'a Netlist,
    order: Vec<usize>,
    vals: Vec<bool>,
}

impl<'a> Sim<'a> {
    pub fn new(c: &'a Netlist) -> Result<Self, SimError> {
        let order = c.topo_gates()?;
        Ok(Sim { c, order, vals: vec![false; c.num_nets()] })
    }

    /// One clock cycle: combinational settle, outputs sampled, state latched.
    pub fn step(&mut self, state: &State, inputs: &InputVector) -> Result<(State, OutputVector), SimError> {
        let c = self.c;
        if inputs.len() != c.inputs.len() {
            return Err(SimError::Width { what: "input vector", expected: c.inputs.len(), got: inputs.len() });
        }
        if state.len() != c.dffs.len() {
            return Err(SimError::Width { what: "state vector", expected: c.dffs.len(), got: state.len() });
        }
        for (&net, &v) in c.inputs.iter().zip(inputs) {
            self.vals[net.index()] = v;
        }
        for (f, &v) in c.dffs.iter().zip(state) {
            self.vals[f.q.index()] = v;
        }
        let mut ins = Vec::new();
        for &gi in &self.order {
            let g = &c.gates[gi];
            ins.clear();
            ins.extend(g.inputs.iter().map(|i| self.vals[i.index()]));
            self.vals[g.output.index()] = g.kind.eval(&ins);
        }
        let out = c.outputs.iter().map(|o| self.vals[o.index()]).collect();
        let next = c.dffs.iter().map(|f| self.vals[f.d.index()]).collect();
        Ok((next, out))
    }

    /// Value of an arbitrary net after the most recent `step`.
    pub fn probe(&self, net: NetId) -> bool {
        self.vals[net.index()]
    }
}

/// One clock cycle of `c`. Convenience wrapper over [`Sim`].
pub fn step(c: &Netlist, state: &State, inputs: &InputVector) -> Result<(State, OutputVector), SimError> {
    Sim::new(c)?.step(state, inputs)
}

/// Run from `s0`, one output frame per input vector.
pub fn run_sequence(c: &Netlist, s0: &State, inputs: &[InputVector]) -> Result<Vec<OutputVector>, SimError> {
    let mut sim = Sim::new(c)?;
    let mut state = s0.clone();
    let mut frames = Vec::with_capacity(inputs.len());
    for iv in inputs {
        let (next, out) = sim.step(&state, iv)?;
        frames.push(out);
        state = next;
    }
    Ok(frames)
}

/// Black-box access to the original (unlocked) circuit. Queries always start
/// from reset; the number of cycles equals the number of input vectors given.
pub trait Oracle {
    fn num_inputs(&self) -> usize;
    fn num_outputs(&self) -> usize;
    fn query(&self, inputs: &[InputVector]) -> Vec<OutputVector>;
    /// How many sequences have been queried so far.
    fn queries(&self) -> u64;
}

pub struct NetlistOracle {
    circuit: Netlist,
    counter: AtomicU64,
}

impl NetlistOracle {
    pub fn new(circuit: Netlist) -> Self {
        NetlistOracle { circuit, counter: AtomicU64::new(0) }
    }

    pub fn circuit(&self) -> &Netlist {
        &self.circuit
    }
}

impl Oracle for NetlistOracle {
    fn num_inputs(&self) -> usize {
        self.circuit.inputs.len()
    }

    fn num_outputs(&self) -> usize {
        self.circuit.outputs.len()
    }

    fn query(&self, inputs: &[InputVector]) -> Vec<OutputVector> {
        self.counter.fetch_add(1, Ordering::Relaxed);
        run_sequence(&self.circuit, &reset_state(&self.circuit), inputs)
            .expect("oracle circuit rejected stimulus")
    }

    fn queries(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }
}

/// 64-lane bit-parallel simulator; lane `l` of every word is an independent
/// assignment. Bit-identical to [`Sim`] lane by lane.
pub struct PackedSim<'a> {
    c: &'a Netlist,
    order: Vec<usize>,
    vals: Vec<u64>,
}

impl<'a> PackedSim<'a> {
    pub fn new(c: &'a Netlist) -> Result<Self, SimError> {
        let order = c.topo_gates()?;
        Ok(PackedSim { c, order, vals: vec![0; c.num_nets()] })
    }

    pub fn step(&mut self, state: &[u64], inputs: &[u64]) -> (Vec<u64>, Vec<u64>) {
        let c = self.c;
        debug_assert_eq!(inputs.len(), c.inputs.len());
        debug_assert_eq!(state.len(), c.dffs.len());
        for (&net, &v) in c.inputs.iter().zip(inputs) {
            self.vals[net.index()] = v;
        }
        for (f, &v) in c.dffs.iter().zip(state) {
            self.vals[f.q.index()] = v;
        }
        let mut ins = Vec::new();
        for &gi in &self.order {
            let g = &c.gates[gi];
            ins.clear();
            ins.extend(g.inputs.iter().map(|i| self.vals[i.index()]));
            self.vals[g.output.index()] = g.kind.eval_words(&ins);
        }
        let out = c.outputs.iter().map(|o| self.vals[o.index()]).collect();
        let next = c.dffs.iter().map(|f| self.vals[f.d.index()]).collect();
        (next, out)
    }
}

pub fn packed_reset_state(c: &Netlist) -> Vec<u64> {
    c.dffs.iter().map(|f| if f.init { !0u64 } else { 0 }).collect()
}

/// Word whose lane `l` holds bit `bit` of the integer `base + l`.
fn pair_bit_word(base: u64, bit: u32) -> u64 {
    const LANE: [u64; 6] = [
        0xaaaa_aaaa_aaaa_aaaa,
        0xcccc_cccc_cccc_cccc,
        0xf0f0_f0f0_f0f0_f0f0,
        0xff00_ff00_ff00_ff00,
        0xffff_0000_ffff_0000,
        0xffff_ffff_0000_0000,
    ];
    if bit < 6 {
        LANE[bit as usize]
    } else if (base >> bit) & 1 == 1 {
        !0
    } else {
        0
    }
}

/// Decode an integer index into per-cycle input vectors. Bit `f*width + p` of
/// `idx` is port `p` in frame `f` (frame 0 first). The inverse of
/// [`frames_to_index`]; exact enumeration and error tags share this order,
/// with the key index in the low bits of a pair index.
pub fn index_to_frames(idx: u64, frames: usize, width: usize) -> Vec<InputVector> {
    (0..frames)
        .map(|f| (0..width).map(|p| (idx >> (f * width + p)) & 1 == 1).collect())
        .collect()
}

pub fn frames_to_index(frames: &[InputVector]) -> u64 {
    let mut idx = 0u64;
    let mut bit = 0;
    for frame in frames {
        for &v in frame {
            if v {
                idx |= 1 << bit;
            }
            bit += 1;
        }
    }
    idx
}

/// FC measurement result. `exact` is set when the whole space was enumerated
/// instead of sampled; `samples` is the number of pairs inspected.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FcEstimate {
    pub fc: f64,
    pub exact: bool,
    pub samples: u64,
}

/// FC trace over a depth window, as produced by the analysis phase.
pub type FcTrace = Vec<(usize, FcEstimate)>;

fn check_ports(ce: &Netlist, num_inputs: usize, num_outputs: usize) -> Result<(), SimError> {
    if ce.inputs.len() != num_inputs {
        return Err(SimError::PortMismatch(format!(
            "encrypted has {} inputs, oracle has {num_inputs}",
            ce.inputs.len()
        )));
    }
    if ce.outputs.len() != num_outputs {
        return Err(SimError::PortMismatch(format!(
            "encrypted has {} outputs, oracle has {num_outputs}",
            ce.outputs.len()
        )));
    }
    Ok(())
}

fn space_bits(ce: &Netlist, t_k: usize, b: usize) -> u32 {
    ((t_k + b) * ce.inputs.len()) as u32
}

/// Monte-Carlo FC estimate from `s` uniform (input, key) samples drawn with
/// replacement. Falls over to exact enumeration when the space is no larger
/// than `s`.
pub fn estimate_fc(
    ce: &Netlist,
    oracle: &dyn Oracle,
    t_k: usize,
    b: usize,
    s: u64,
    seed: u64,
) -> Result<FcEstimate, SimError> {
    check_ports(ce, oracle.num_inputs(), oracle.num_outputs())?;
    let width = ce.inputs.len();
    let bits = space_bits(ce, t_k, b);
    if bits < 64 && (1u64 << bits) <= s {
        return exact_fc_via_oracle(ce, oracle, t_k, b);
    }
    let mut rng = rng_from_seed(seed);
    let mut sim = Sim::new(ce)?;
    let reset = reset_state(ce);
    let mut errors = 0u64;
    for _ in 0..s {
        let key: Vec<InputVector> =
            (0..t_k).map(|_| (0..width).map(|_| rng.gen::<bool>()).collect()).collect();
        let ins: Vec<InputVector> =
            (0..b).map(|_| (0..width).map(|_| rng.gen::<bool>()).collect()).collect();
        let golden = oracle.query(&ins);
        let mut state = reset.clone();
        for kv in &key {
            let (next, _) = sim.step(&state, kv)?;
            state = next;
        }
        let mut differs = false;
        for (iv, want) in ins.iter().zip(&golden) {
            let (next, out) = sim.step(&state, iv)?;
            state = next;
            if &out != want {
                differs = true;
                break;
            }
        }
        if differs {
            errors += 1;
        }
    }
    Ok(FcEstimate { fc: errors as f64 / s as f64, exact: false, samples: s })
}

fn exact_fc_via_oracle(
    ce: &Netlist,
    oracle: &dyn Oracle,
    t_k: usize,
    b: usize,
) -> Result<FcEstimate, SimError> {
    let width = ce.inputs.len();
    let key_bits = (t_k * width) as u32;
    let input_bits = (b * width) as u32;
    let total = 1u64 << (key_bits + input_bits);
    let mut errors = 0u64;
    let mut packed = PackedSim::new(ce)?;
    for i in 0..(1u64 << input_bits) {
        let ins = index_to_frames(i, b, width);
        let golden = oracle.query(&ins);
        errors += count_corrupt_keys(ce, &mut packed, t_k, &ins, &golden, key_bits)?;
    }
    Ok(FcEstimate { fc: errors as f64 / total as f64, exact: true, samples: total })
}

/// Count keys (packed 64 per step) whose run on `ins` after `t_k` key cycles
/// deviates from `golden` anywhere.
fn count_corrupt_keys(
    ce: &Netlist,
    packed: &mut PackedSim,
    t_k: usize,
    ins: &[InputVector],
    golden: &[OutputVector],
    key_bits: u32,
) -> Result<u64, SimError> {
    let width = ce.inputs.len();
    let keys = 1u64 << key_bits;
    let reset = packed_reset_state(ce);
    let mut errors = 0u64;
    let mut base = 0u64;
    while base < keys {
        let lanes = (keys - base).min(64);
        let mut state = reset.clone();
        for f in 0..t_k {
            let words: Vec<u64> =
                (0..width).map(|p| pair_bit_word(base, (f * width + p) as u32)).collect();
            let (next, _) = packed.step(&state, &words);
            state = next;
        }
        let mut diff = 0u64;
        for (iv, want) in ins.iter().zip(golden) {
            let words: Vec<u64> = iv.iter().map(|&v| if v { !0u64 } else { 0 }).collect();
            let (next, outs) = packed.step(&state, &words);
            state = next;
            for (o, &w) in outs.iter().zip(want.iter()) {
                diff |= o ^ if w { !0u64 } else { 0 };
            }
        }
        let mask = if lanes == 64 { !0u64 } else { (1u64 << lanes) - 1 };
        errors += (diff & mask).count_ones() as u64;
        base += lanes;
    }
    Ok(errors)
}

/// Exact FC by full enumeration, as an (errors, total) pair of counts.
/// Fractions are dyadic, so the `f64` from [`exact_fc`] is exact too.
pub fn exact_fc_counts(
    ce: &Netlist,
    co: &Netlist,
    t_k: usize,
    b: usize,
    cap: u64,
) -> Result<(u64, u64), SimError> {
    check_ports(ce, co.inputs.len(), co.outputs.len())?;
    let bits = space_bits(ce, t_k, b);
    if bits >= 63 || (1u64 << bits) > cap {
        return Err(SimError::TooLarge { space_bits: bits, cap });
    }
    let width = ce.inputs.len();
    let key_bits = (t_k * width) as u32;
    let total = 1u64 << bits;
    let mut errors = 0u64;
    let mut packed = PackedSim::new(ce)?;
    let mut co_sim = Sim::new(co)?;
    let co_reset = reset_state(co);
    for i in 0..(1u64 << (b * width)) {
        let ins = index_to_frames(i, b, width);
        let mut golden = Vec::with_capacity(b);
        let mut st = co_reset.clone();
        for iv in &ins {
            let (next, out) = co_sim.step(&st, iv)?;
            st = next;
            golden.push(out);
        }
        errors += count_corrupt_keys(ce, &mut packed, t_k, &ins, &golden, key_bits)?;
    }
    Ok((errors, total))
}

/// Exact FC with the default enumeration cap of 2^24 pairs.
pub fn exact_fc(ce: &Netlist, co: &Netlist, t_k: usize, b: usize) -> Result<f64, SimError> {
    let (errors, total) = exact_fc_counts(ce, co, t_k, b, EXACT_FC_CAP)?;
    Ok(errors as f64 / total as f64)
}

/// Error-tag table: every (input, key) pair carries either no tag (the runs
/// agree through depth `b`) or the first depth at which its observable frames
/// diverge. Tags at depth d < b are inherited from the pair's length-(d)
/// prefix; fresh divergences get tag b.
pub struct ErrorTags {
    pub b: usize,
    pub t_k: usize,
    pub width: usize,
    tags: Vec<u8>,
    counts: Vec<u64>,
}

impl ErrorTags {
    /// Tag for input index `i` (depth-b frames) and key index `k`.
    pub fn tag(&self, i: u64, k: u64) -> Option<u32> {
        let key_bits = (self.t_k * self.width) as u32;
        let t = self.tags[((i << key_bits) | k) as usize];
        (t != 0).then_some(t as u32)
    }

    /// Number of pairs tagged exactly `d` (1-based depth).
    pub fn count(&self, d: usize) -> u64 {
        self.counts[d]
    }

    /// Number of untagged pairs.
    pub fn count_clean(&self) -> u64 {
        self.counts[0]
    }

    pub fn total(&self) -> u64 {
        self.tags.len() as u64
    }

    /// Total tagged pairs (equals the exact-FC error count at depth `b`).
    pub fn count_errors(&self) -> u64 {
        self.total() - self.count_clean()
    }
}

/// Build the depth-`b` error-tag table by the recursive definition: a pair is
/// untagged if its full traces agree; a pair whose depth-(b-1) prefix was
/// already tagged inherits that tag; otherwise the divergence is new at b.
pub fn error_tags(ce: &Netlist, co: &Netlist, t_k: usize, b: usize) -> Result<ErrorTags, SimError> {
    check_ports(ce, co.inputs.len(), co.outputs.len())?;
    assert!(b >= 1 && b <= u8::MAX as usize, "depth out of range");
    let bits = space_bits(ce, t_k, b);
    if bits >= 63 || (1u64 << bits) > EXACT_FC_CAP {
        return Err(SimError::TooLarge { space_bits: bits, cap: EXACT_FC_CAP });
    }
    let width = ce.inputs.len();
    let key_bits = (t_k * width) as u32;

    // One packed enumeration of the full space records, per pair, whether
    // each observable frame d agrees. Frame-d agreement of a shorter prefix
    // pair is read off the zero-extended representative (frame d only sees
    // the first d data frames).
    let total = 1usize << bits;
    let words = total.div_ceil(64);
    let mut frame_eq: Vec<Vec<u64>> = vec![vec![!0u64; words]; b];
    let mut packed_ce = PackedSim::new(ce)?;
    let mut packed_co = PackedSim::new(co)?;
    let mut base = 0u64;
    while (base as usize) < total {
        let mut st_ce = packed_reset_state(ce);
        for f in 0..t_k {
            let ins: Vec<u64> =
                (0..width).map(|p| pair_bit_word(base, (f * width + p) as u32)).collect();
            let (next, _) = packed_ce.step(&st_ce, &ins);
            st_ce = next;
        }
        let mut st_co = packed_reset_state(co);
        for d in 0..b {
            let ins: Vec<u64> = (0..width)
                .map(|p| pair_bit_word(base, key_bits + (d * width + p) as u32))
                .collect();
            let (next_ce, out_ce) = packed_ce.step(&st_ce, &ins);
            let (next_co, out_co) = packed_co.step(&st_co, &ins);
            st_ce = next_ce;
            st_co = next_co;
            let mut diff = 0u64;
            for (a, bo) in out_ce.iter().zip(&out_co) {
                diff |= a ^ bo;
            }
            frame_eq[d][(base / 64) as usize] = !diff;
        }
        base += 64;
    }
    let eq_at = |d: usize, pair: u64| frame_eq[d][(pair / 64) as usize] >> (pair % 64) & 1 == 1;

    // Depth-by-depth table construction per the recursive definition.
    let mut prev: Vec<u8> = Vec::new();
    for d in 1..=b {
        let size = 1usize << (key_bits as usize + d * width);
        let mut cur = vec![0u8; size];
        for pair in 0..size as u64 {
            let prefix = (pair & ((1u64 << (key_bits as usize + (d - 1) * width)) - 1)) as usize;
            let inherited = if d == 1 { 0 } else { prev[prefix] };
            cur[pair as usize] = if inherited != 0 {
                inherited
            } else if eq_at(d - 1, pair) {
                0
            } else {
                d as u8
            };
        }
        prev = cur;
    }
    let mut counts = vec![0u64; b + 1];
    for &t in &prev {
        counts[t as usize] += 1;
    }
    Ok(ErrorTags { b, t_k, width, tags: prev, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_bench;

    fn dff_passthrough() -> Netlist {
        parse_bench("INPUT(a)\nOUTPUT(q)\nq = DFF(a)\n").unwrap()
    }

    #[test]
    fn step_latches_input_and_outputs_old_state() {
        let c = dff_passthrough();
        let (next, out) = step(&c, &vec![false], &vec![true]).unwrap();
        assert_eq!(out, vec![false]);
        assert_eq!(next, vec![true]);
    }

    #[test]
    fn shift_register_trace() {
        let c = parse_bench("INPUT(a)\nOUTPUT(q2)\nq1 = DFF(a)\nq2 = DFF(q1)\n").unwrap();
        let outs = run_sequence(&c, &vec![false, false], &[vec![true], vec![true]]).unwrap();
        assert_eq!(outs, vec![vec![false], vec![false]]);
        let mut state = vec![false, false];
        for iv in [vec![true], vec![true]] {
            let (next, _) = step(&c, &state, &iv).unwrap();
            state = next;
        }
        assert_eq!(state, vec![true, true]);
    }

    #[test]
    fn width_mismatch_is_reported() {
        let c = dff_passthrough();
        let e = step(&c, &vec![false], &vec![true, false]).unwrap_err();
        assert!(matches!(e, SimError::Width { .. }));
    }

    #[test]
    fn init_annotation_changes_reset() {
        let c = parse_bench("INPUT(a)\nOUTPUT(q)\n# init q 1\nq = DFF(a)\n").unwrap();
        assert_eq!(reset_state(&c), vec![true]);
    }

    #[test]
    fn packed_matches_scalar_lane_by_lane() {
        let text = "INPUT(a)\nINPUT(b)\nOUTPUT(y)\nOUTPUT(q)\nq = DFF(t)\nt = XOR(a, q)\ny = NAND(b, t)\n";
        let c = parse_bench(text).unwrap();
        let mut packed = PackedSim::new(&c).unwrap();
        // 64 lanes: lane l applies input bits (l&1, l>>1&1) for three cycles.
        let mut pstate = packed_reset_state(&c);
        let mut sstates: Vec<State> = vec![reset_state(&c); 64];
        for cycle in 0..3 {
            let a_word = pair_bit_word(0, 0);
            let b_word = pair_bit_word(0, 1);
            let rot = |w: u64| w.rotate_left(cycle as u32); // vary stimulus per cycle
            let (pnext, pout) = packed.step(&pstate, &[rot(a_word), rot(b_word)]);
            for lane in 0..64u64 {
                let iv = vec![rot(a_word) >> lane & 1 == 1, rot(b_word) >> lane & 1 == 1];
                let (snext, sout) = step(&c, &sstates[lane as usize], &iv).unwrap();
                assert_eq!(sout[0], pout[0] >> lane & 1 == 1);
                assert_eq!(sout[1], pout[1] >> lane & 1 == 1);
                sstates[lane as usize] = snext;
            }
            pstate = pnext;
        }
    }

    #[test]
    fn oracle_counts_queries() {
        let oracle = NetlistOracle::new(dff_passthrough());
        assert_eq!(oracle.queries(), 0);
        oracle.query(&[vec![true]]);
        oracle.query(&[vec![false], vec![true]]);
        assert_eq!(oracle.queries(), 2);
    }

    #[test]
    fn identical_circuits_have_zero_fc() {
        // "Encrypted" copy that ignores its key cycle entirely: a pure
        // combinational function matches the oracle at every depth.
        let ce = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n").unwrap();
        let co = ce.clone();
        for b in 1..=3 {
            assert_eq!(exact_fc(&ce, &co, 1, b).unwrap(), 0.0);
        }
        let oracle = NetlistOracle::new(co);
        let est = estimate_fc(&ce, &oracle, 1, 1, 1000, 7).unwrap();
        assert_eq!(est.fc, 0.0);
        assert!(est.exact, "4-point space should be enumerated");
        assert_eq!(est.samples, 4);
    }

    #[test]
    fn inverted_output_has_full_fc() {
        let co = parse_bench("INPUT(a)\nOUTPUT(y)\ny = BUF(a)\n").unwrap();
        let ce = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n").unwrap();
        assert_eq!(exact_fc(&ce, &co, 1, 2).unwrap(), 1.0);
    }

    #[test]
    fn estimate_matches_exact_on_tiny_space_and_flags_it() {
        let co = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)\n").unwrap();
        let ce = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = NAND(a, b)\n").unwrap();
        let oracle = NetlistOracle::new(co.clone());
        let est = estimate_fc(&ce, &oracle, 1, 1, 1000, 3).unwrap();
        assert!(est.exact);
        assert_eq!(est.fc, exact_fc(&ce, &co, 1, 1).unwrap());
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let c = crate::netlist::parse_bench(
            "INPUT(a)\nINPUT(b)\nINPUT(c)\nINPUT(d)\nINPUT(e)\nOUTPUT(y)\ny = AND(a, b, c, d, e)\n",
        )
        .unwrap();
        let e = exact_fc_counts(&c, &c, 2, 4, 1 << 24).unwrap_err();
        assert!(matches!(e, SimError::TooLarge { .. }));
    }

    #[test]
    fn error_tags_mark_first_divergence_depth() {
        // Encrypted copy equals a 1-cycle-delayed inverter only when the key
        // cycle loaded a 1; with key bit 0 the first frame already differs.
        let co = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n").unwrap();
        let ce = parse_bench("INPUT(a)\nOUTPUT(y)\ny = XNOR(a, q)\nq = DFF(a)\n").unwrap();
        // With t_k = 1: after key cycle k, state q = k. Oracle frame d wants
        // NOT(a_d); encrypted gives XNOR(a_d, prev input). Divergence depends
        // on the history, so tags spread over depths.
        let tags = error_tags(&ce, &co, 1, 3).unwrap();
        let exact = exact_fc_counts(&ce, &co, 1, 3, 1 << 24).unwrap();
        assert_eq!(tags.count_errors(), exact.0);
        assert_eq!(tags.total(), exact.1);
        // Inheritance: a pair tagged at depth 1 keeps its tag at depth 3.
        let t1 = error_tags(&ce, &co, 1, 1).unwrap();
        for i1 in 0..2u64 {
            for k in 0..2u64 {
                if let Some(d) = t1.tag(i1, k) {
                    assert_eq!(d, 1);
                    for ext in 0..4u64 {
                        let i3 = i1 | (ext << 1);
                        assert_eq!(tags.tag(i3, k), Some(1));
                    }
                }
            }
        }
    }
}
