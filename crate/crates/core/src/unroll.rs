//! Time-frame expansion of sequential circuits into pure combinational form.
//!
//! Frame f's state inputs are wired to frame f-1's next-state nets; frame 1
//! starts from the reset constants, which are folded into the logic. The
//! first `t_k` frames' primary inputs are the key ports, the remaining `b`
//! frames' are the data ports, and only the last `b` output frames are
//! observable.

use crate::netlist::{GateKind, NetId, Netlist, NetlistBuilder, NetlistError};
use crate::sim::{InputVector, KeySequence, OutputVector, Sim, SimError, State};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UnrollError {
    #[error("unroll depth b must be at least 1")]
    ZeroDepth,
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone)]
pub struct UnrolledCircuit {
    /// Flattened combinational circuit; its inputs are exactly
    /// `key_ports ++ data_ports` and its outputs are `obs_outputs`.
    pub comb: Netlist,
    pub t_k: usize,
    pub b: usize,
    /// Inputs of frames 1..=t_k, frame-major then port order.
    pub key_ports: Vec<NetId>,
    /// Inputs of frames t_k+1..=t_k+b.
    pub data_ports: Vec<NetId>,
    /// Outputs of the observable frames, frame-major.
    pub obs_outputs: Vec<NetId>,
    /// `state_taps[f]` is the state latched at the end of frame f+1 (i.e.
    /// entering frame f+2); length t_k+b. Constant bits are materialized.
    pub state_taps: Vec<Vec<NetId>>,
    /// Reset constants entering frame 1.
    pub init_state: State,
    pub source_inputs: usize,
    pub source_outputs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sig {
    Net(NetId),
    Const(bool),
}

struct Expander {
    b: NetlistBuilder,
    const_nets: [Option<NetId>; 2],
    anchor: Option<NetId>,
}

impl Expander {
    fn materialize(&mut self, sig: Sig) -> NetId {
        match sig {
            Sig::Net(n) => n,
            Sig::Const(v) => {
                if let Some(n) = self.const_nets[v as usize] {
                    return n;
                }
                let a = self.anchor.expect("constant requested before any input exists");
                let kind = if v { GateKind::Xnor } else { GateKind::Xor };
                let name = if v { "const1" } else { "const0" };
                let n = self.b.gate(name, kind, vec![a, a]);
                self.const_nets[v as usize] = Some(n);
                n
            }
        }
    }

    /// Evaluate one gate over signals, folding constants. Emits at most one
    /// gate; constant-free gates are replicated verbatim.
    fn fold_gate(&mut self, kind: GateKind, sigs: &[Sig], out_name: &str) -> Sig {
        use GateKind::*;
        let nets: Vec<NetId> = sigs
            .iter()
            .filter_map(|s| if let Sig::Net(n) = s { Some(*n) } else { None })
            .collect();
        let consts: Vec<bool> = sigs
            .iter()
            .filter_map(|s| if let Sig::Const(v) = s { Some(*v) } else { None })
            .collect();
        if consts.is_empty() {
            let out = self.b.net(out_name);
            self.b.add_gate(kind, nets, out);
            return Sig::Net(out);
        }
        match kind {
            Not => Sig::Const(!consts[0]),
            Buf => Sig::Const(consts[0]),
            And | Nand => {
                let neg = kind == Nand;
                if consts.iter().any(|&v| !v) {
                    Sig::Const(neg)
                } else {
                    self.reduced(if neg { Nand } else { And }, neg, !neg, nets, out_name)
                }
            }
            Or | Nor => {
                let neg = kind == Nor;
                if consts.iter().any(|&v| v) {
                    Sig::Const(!neg)
                } else {
                    self.reduced(if neg { Nor } else { Or }, neg, neg, nets, out_name)
                }
            }
            Xor | Xnor => {
                let mut parity = kind == Xnor;
                for v in consts {
                    parity ^= v;
                }
                match (nets.len(), parity) {
                    (0, p) => Sig::Const(p),
                    (1, false) => Sig::Net(nets[0]),
                    (1, true) => self.emit(Not, nets, out_name),
                    (_, false) => self.emit(Xor, nets, out_name),
                    (_, true) => self.emit(Xnor, nets, out_name),
                }
            }
        }
    }

    /// AND/NAND/OR/NOR after dropping neutral constants. `empty` is the gate
    /// value when every input was neutral: the identity element under `neg`.
    fn reduced(&mut self, kind: GateKind, neg: bool, empty: bool, nets: Vec<NetId>, out_name: &str) -> Sig {
        match (nets.len(), neg) {
            (0, _) => Sig::Const(empty),
            (1, false) => Sig::Net(nets[0]),
            (1, true) => self.emit(GateKind::Not, nets, out_name),
            _ => self.emit(kind, nets, out_name),
        }
    }

    fn emit(&mut self, kind: GateKind, nets: Vec<NetId>, out_name: &str) -> Sig {
        let out = self.b.net(out_name);
        self.b.add_gate(kind, nets, out);
        Sig::Net(out)
    }
}

/// Expand `c` into `t_k + b` combinational frames.
pub fn unroll(c: &Netlist, t_k: usize, b: usize) -> Result<UnrolledCircuit, UnrollError> {
    if b == 0 {
        return Err(UnrollError::ZeroDepth);
    }
    let frames = t_k + b;
    let gate_order = c.topo_gates()?;
    let mut ex = Expander {
        b: NetlistBuilder::new(&format!("{}_unrolled_{t_k}x{b}", c.name)),
        const_nets: [None, None],
        anchor: None,
    };
    let mut key_ports = Vec::new();
    let mut data_ports = Vec::new();
    let mut obs_outputs = Vec::new();
    let mut state_taps = Vec::new();
    let init_state: State = c.dffs.iter().map(|f| f.init).collect();
    let mut state_sigs: Vec<Sig> = c.dffs.iter().map(|f| Sig::Const(f.init)).collect();

    for f in 1..=frames {
        let mut sig: Vec<Option<Sig>> = vec![None; c.num_nets()];
        for &orig in &c.inputs {
            let name = format!("{}@f{f}", c.net_name(orig));
            let id = ex.b.net(&name);
            ex.b.add_input(id);
            ex.anchor.get_or_insert(id);
            sig[orig.index()] = Some(Sig::Net(id));
            if f <= t_k {
                key_ports.push(id);
            } else {
                data_ports.push(id);
            }
        }
        for (ff, s) in c.dffs.iter().zip(&state_sigs) {
            sig[ff.q.index()] = Some(*s);
        }
        for &gi in &gate_order {
            let g = &c.gates[gi];
            let ins: Vec<Sig> = g.inputs.iter().map(|i| sig[i.index()].unwrap()).collect();
            let name = format!("{}@f{f}", c.net_name(g.output));
            sig[g.output.index()] = Some(ex.fold_gate(g.kind, &ins, &name));
        }
        if f > t_k {
            for &o in &c.outputs {
                let s = sig[o.index()].unwrap();
                obs_outputs.push(ex.materialize(s));
            }
        }
        state_sigs = c.dffs.iter().map(|ff| sig[ff.d.index()].unwrap()).collect();
        state_taps.push(state_sigs.iter().map(|&s| ex.materialize(s)).collect());
    }
    for &o in &obs_outputs {
        ex.b.add_output(o);
    }
    let comb = ex.b.finish()?;
    Ok(UnrolledCircuit {
        comb,
        t_k,
        b,
        key_ports,
        data_ports,
        obs_outputs,
        state_taps,
        init_state,
        source_inputs: c.inputs.len(),
        source_outputs: c.outputs.len(),
    })
}

impl UnrolledCircuit {
    /// State latched at the end of frame `f` (1-based).
    pub fn state_after(&self, f: usize) -> &[NetId] {
        &self.state_taps[f - 1]
    }

    /// Evaluate the flattened circuit on a key sequence plus data frames;
    /// returns the observable output frames.
    pub fn evaluate(
        &self,
        key: &KeySequence,
        ins: &[InputVector],
    ) -> Result<Vec<OutputVector>, SimError> {
        let flat = self.flatten_inputs(key, ins)?;
        let mut sim = Sim::new(&self.comb)?;
        let (_, out) = sim.step(&vec![], &flat)?;
        Ok(out.chunks(self.source_outputs).map(|c| c.to_vec()).collect())
    }

    fn flatten_inputs(&self, key: &KeySequence, ins: &[InputVector]) -> Result<InputVector, SimError> {
        if key.len() != self.t_k {
            return Err(SimError::Width { what: "key sequence", expected: self.t_k, got: key.len() });
        }
        if ins.len() != self.b {
            return Err(SimError::Width { what: "input frames", expected: self.b, got: ins.len() });
        }
        let mut flat = Vec::with_capacity(self.comb.inputs.len());
        for frame in key.iter().chain(ins) {
            if frame.len() != self.source_inputs {
                return Err(SimError::Width {
                    what: "frame",
                    expected: self.source_inputs,
                    got: frame.len(),
                });
            }
            flat.extend_from_slice(frame);
        }
        Ok(flat)
    }
}

/// State entering frame `t_k + 1` after applying `k` on the key ports:
/// identical to simulating the original circuit for `t_k` cycles under `k`.
pub fn state_after_key(u: &UnrolledCircuit, k: &KeySequence) -> Result<State, UnrollError> {
    if u.t_k == 0 {
        return Ok(u.init_state.clone());
    }
    let zeros = vec![vec![false; u.source_inputs]; u.b];
    let flat = u.flatten_inputs(k, &zeros)?;
    let mut sim = Sim::new(&u.comb)?;
    sim.step(&vec![], &flat)?;
    Ok(u.state_after(u.t_k).iter().map(|&n| sim.probe(n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_bench;
    use crate::sim::{reset_state, run_sequence};

    #[test]
    fn rejects_zero_depth() {
        let c = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n").unwrap();
        assert!(matches!(unroll(&c, 1, 0), Err(UnrollError::ZeroDepth)));
    }

    #[test]
    fn combinational_circuit_replicates_exactly() {
        let c = parse_bench(
            "INPUT(a)\nINPUT(b)\nOUTPUT(y)\nt = NAND(a, b)\ny = XOR(t, a)\n",
        )
        .unwrap();
        for (t_k, b) in [(0, 1), (1, 1), (2, 3)] {
            let u = unroll(&c, t_k, b).unwrap();
            let frames = t_k + b;
            assert_eq!(u.comb.gates.len(), frames * c.gates.len());
            assert_eq!(u.comb.inputs.len(), frames * c.inputs.len());
            assert_eq!(u.key_ports.len(), t_k * c.inputs.len());
            assert_eq!(u.data_ports.len(), b * c.inputs.len());
            assert_eq!(u.obs_outputs.len(), b * c.outputs.len());
            assert_eq!(u.comb.dffs.len(), 0);
        }
    }

    #[test]
    fn sequential_circuit_folds_reset_constants() {
        let c = parse_bench("INPUT(a)\nOUTPUT(y)\nq = DFF(a)\ny = XOR(q, a)\n").unwrap();
        let u = unroll(&c, 0, 2).unwrap();
        // Frame 1: q is the reset constant 0, so y@f1 collapses to a@f1.
        // Frame 2: a real XOR over (a@f1, a@f2). One gate total.
        assert_eq!(u.comb.gates.len(), 1);
        assert_eq!(u.obs_outputs[0], u.data_ports[0]);
    }

    #[test]
    fn unrolled_evaluation_matches_sequential_run() {
        let text = std::fs::read_to_string(
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../benchmarks/s27.bench"),
        )
        .unwrap();
        let c = parse_bench(&text).unwrap();
        let (t_k, b) = (2, 3);
        let u = unroll(&c, t_k, b).unwrap();
        let mut rng = crate::rng::rng_from_seed(11);
        use rand::Rng;
        for _ in 0..100 {
            let mut mk = |n: usize| -> Vec<Vec<bool>> {
                (0..n).map(|_| (0..c.inputs.len()).map(|_| rng.gen()).collect()).collect()
            };
            let key = mk(t_k);
            let ins = mk(b);
            let all: Vec<_> = key.iter().cloned().chain(ins.iter().cloned()).collect();
            let golden = run_sequence(&c, &reset_state(&c), &all).unwrap();
            let got = u.evaluate(&key, &ins).unwrap();
            assert_eq!(&golden[t_k..], &got[..]);
        }
    }

    #[test]
    fn state_after_key_matches_simulation() {
        let text = std::fs::read_to_string(
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../benchmarks/s27.bench"),
        )
        .unwrap();
        let c = parse_bench(&text).unwrap();
        let u = unroll(&c, 2, 1).unwrap();
        let key = vec![vec![true, false, true, true], vec![false, true, false, false]];
        let via_taps = state_after_key(&u, &key).unwrap();
        let mut state = reset_state(&c);
        for kv in &key {
            let (next, _) = crate::sim::step(&c, &state, kv).unwrap();
            state = next;
        }
        assert_eq!(via_taps, state);
    }

    #[test]
    fn prefix_frames_agree_across_depths() {
        let c = parse_bench("INPUT(a)\nOUTPUT(y)\nq = DFF(d)\nd = XOR(q, a)\ny = NOT(q)\n").unwrap();
        let u2 = unroll(&c, 1, 2).unwrap();
        let u3 = unroll(&c, 1, 3).unwrap();
        for bits in 0..16u32 {
            let key = vec![vec![bits & 1 == 1]];
            let ins3: Vec<Vec<bool>> =
                (0..3).map(|j| vec![bits >> (j + 1) & 1 == 1]).collect();
            let o2 = u2.evaluate(&key, &ins3[..2].to_vec()).unwrap();
            let o3 = u3.evaluate(&key, &ins3).unwrap();
            assert_eq!(o2[..], o3[..2]);
        }
    }

    #[test]
    fn reset_constant_folds_match_simulation_for_every_kind() {
        // Frame 1 feeds every gate kind each mix of reset constants and a
        // live input; frame 2 re-checks the pure-net path. `y` sees constants
        // beside a net, `z` is fully constant at frame 1.
        for kind in ["AND", "NAND", "OR", "NOR", "XOR", "XNOR"] {
            for inits in 0..4u32 {
                let mut text = String::from("INPUT(a)\nOUTPUT(y)\nOUTPUT(z)\n");
                if inits & 1 == 1 {
                    text.push_str("# init p 1\n");
                }
                if inits & 2 == 2 {
                    text.push_str("# init q 1\n");
                }
                text.push_str(&format!(
                    "p = DFF(a)\nq = DFF(y)\ny = {kind}(p, q, a)\nz = {kind}(p, q)\n"
                ));
                let c = parse_bench(&text).unwrap();
                let u = unroll(&c, 0, 2).unwrap();
                for bits in 0..4u32 {
                    let ins: Vec<Vec<bool>> =
                        (0..2).map(|f| vec![bits >> f & 1 == 1]).collect();
                    let golden = run_sequence(&c, &reset_state(&c), &ins).unwrap();
                    let got = u.evaluate(&vec![], &ins).unwrap();
                    assert_eq!(golden, got, "kind {kind} inits {inits:02b} bits {bits:02b}");
                }
            }
        }
        for kind in ["NOT", "BUFF"] {
            for init in 0..2u32 {
                let init_line = if init == 1 { "# init q 1\n" } else { "" };
                let text = format!(
                    "INPUT(a)\nOUTPUT(y)\n{init_line}q = DFF(a)\ny = {kind}(q)\n"
                );
                let c = parse_bench(&text).unwrap();
                let u = unroll(&c, 0, 2).unwrap();
                for bits in 0..4u32 {
                    let ins: Vec<Vec<bool>> =
                        (0..2).map(|f| vec![bits >> f & 1 == 1]).collect();
                    let golden = run_sequence(&c, &reset_state(&c), &ins).unwrap();
                    let got = u.evaluate(&vec![], &ins).unwrap();
                    assert_eq!(golden, got, "kind {kind} init {init} bits {bits:02b}");
                }
            }
        }
    }

    #[test]
    fn constant_state_output_is_materialized() {
        // Output is the flip-flop itself: at frame 1 it is the reset constant
        // and must still appear as a driven net on the output list.
        let c = parse_bench("INPUT(a)\nOUTPUT(q)\n# init q 1\nq = DFF(a)\n").unwrap();
        let u = unroll(&c, 0, 1).unwrap();
        assert_eq!(u.obs_outputs.len(), 1);
        let out = u.evaluate(&vec![], &[vec![false]]).unwrap();
        assert_eq!(out, vec![vec![true]]);
    }
}
