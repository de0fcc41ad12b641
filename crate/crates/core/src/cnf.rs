//! CNF encoding: literals, clause storage, Tseitin translation of gate
//! networks, miter construction over unrolled circuits, and DIMACS I/O.

use crate::netlist::{GateKind, Netlist, NetlistError};
use crate::sim::{InputVector, OutputVector};
use crate::unroll::UnrolledCircuit;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CnfError {
    #[error("circuit is not combinational: {0} flip-flops present")]
    NotCombinational(usize),
    #[error("expected {expected} {what} literals, got {got}")]
    Width { what: &'static str, expected: usize, got: usize },
    #[error("DIMACS parse error: {0}")]
    Dimacs(String),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn lit(self, negated: bool) -> Lit {
        Lit(self.0 << 1 | negated as u32)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A literal packs its variable and polarity into one word; `!l` flips
/// polarity. The DIMACS form is 1-based and sign-encoded.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    /// Dense index usable for watch lists: `2*var + polarity`.
    pub fn code(self) -> usize {
        self.0 as usize
    }

    pub fn from_code(code: usize) -> Lit {
        Lit(code as u32)
    }

    pub fn to_dimacs(self) -> i32 {
        let v = (self.0 >> 1) as i32 + 1;
        if self.is_neg() {
            -v
        } else {
            v
        }
    }

    pub fn from_dimacs(n: i32) -> Option<Lit> {
        if n == 0 {
            return None;
        }
        Some(Var(n.unsigned_abs() - 1).lit(n < 0))
    }

    /// Truth value under a model indexed by variable.
    pub fn eval(self, model: &[bool]) -> bool {
        model[self.var().index()] ^ self.is_neg()
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

pub type Clause = Vec<Lit>;

/// Anything clauses can be emitted into: a plain formula or a live solver.
pub trait CnfSink {
    fn fresh_var(&mut self) -> Var;
    fn add_clause(&mut self, lits: &[Lit]);

    fn fresh(&mut self) -> Lit {
        self.fresh_var().lit(false)
    }
}

/// A literal pinned to a constant by a unit clause.
pub fn const_lit<S: CnfSink + ?Sized>(s: &mut S, value: bool) -> Lit {
    let l = s.fresh();
    s.add_clause(&[if value { l } else { !l }]);
    l
}

#[derive(Debug, Clone, Default)]
pub struct CnfFormula {
    num_vars: u32,
    pub clauses: Vec<Clause>,
}

impl CnfFormula {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars as usize
    }

    /// True when the assignment satisfies every clause.
    pub fn eval(&self, model: &[bool]) -> bool {
        self.clauses.iter().all(|c| c.iter().any(|l| l.eval(model)))
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                out.push_str(&l.to_dimacs().to_string());
                out.push(' ');
            }
            out.push_str("0\n");
        }
        out
    }

    pub fn parse_dimacs(text: &str) -> Result<CnfFormula, CnfError> {
        let mut f = CnfFormula::new();
        let mut declared: Option<(u32, usize)> = None;
        let mut cur: Clause = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('p') {
                if declared.is_some() {
                    return Err(CnfError::Dimacs("duplicate problem line".into()));
                }
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 || parts[0] != "cnf" {
                    return Err(CnfError::Dimacs(format!("bad problem line: {line}")));
                }
                let v = parts[1].parse().map_err(|_| CnfError::Dimacs("bad var count".into()))?;
                let c = parts[2].parse().map_err(|_| CnfError::Dimacs("bad clause count".into()))?;
                declared = Some((v, c));
                f.num_vars = v;
                continue;
            }
            let (nv, _) = declared.ok_or_else(|| CnfError::Dimacs("clause before problem line".into()))?;
            for tok in line.split_whitespace() {
                let n: i32 = tok.parse().map_err(|_| CnfError::Dimacs(format!("bad literal: {tok}")))?;
                match Lit::from_dimacs(n) {
                    Some(l) => {
                        if l.var().0 >= nv {
                            return Err(CnfError::Dimacs(format!("literal {n} out of range")));
                        }
                        cur.push(l);
                    }
                    None => f.clauses.push(std::mem::take(&mut cur)),
                }
            }
        }
        if !cur.is_empty() {
            return Err(CnfError::Dimacs("unterminated clause".into()));
        }
        let (_, nc) = declared.ok_or_else(|| CnfError::Dimacs("missing problem line".into()))?;
        if f.clauses.len() != nc {
            return Err(CnfError::Dimacs(format!(
                "declared {nc} clauses, found {}",
                f.clauses.len()
            )));
        }
        Ok(f)
    }
}

impl CnfSink for CnfFormula {
    fn fresh_var(&mut self) -> Var {
        let v = Var(self.num_vars);
        self.num_vars += 1;
        v
    }

    fn add_clause(&mut self, lits: &[Lit]) {
        debug_assert!(lits.iter().all(|l| l.var().0 < self.num_vars));
        self.clauses.push(lits.to_vec());
    }
}

fn and_clauses<S: CnfSink + ?Sized>(s: &mut S, out: Lit, ins: &[Lit]) {
    for &i in ins {
        s.add_clause(&[!out, i]);
    }
    let mut wide: Clause = ins.iter().map(|&i| !i).collect();
    wide.push(out);
    s.add_clause(&wide);
}

fn xor2<S: CnfSink + ?Sized>(s: &mut S, out: Lit, a: Lit, b: Lit) {
    s.add_clause(&[!out, a, b]);
    s.add_clause(&[!out, !a, !b]);
    s.add_clause(&[out, !a, b]);
    s.add_clause(&[out, a, !b]);
}

fn equiv<S: CnfSink + ?Sized>(s: &mut S, out: Lit, input: Lit) {
    s.add_clause(&[!out, input]);
    s.add_clause(&[out, !input]);
}

fn xor_chain<S: CnfSink + ?Sized>(s: &mut S, out: Lit, ins: &[Lit], invert: bool) {
    let out = if invert { !out } else { out };
    if ins.len() == 1 {
        equiv(s, out, ins[0]);
        return;
    }
    let mut acc = ins[0];
    for (j, &i) in ins[1..].iter().enumerate() {
        let t = if j == ins.len() - 2 { out } else { s.fresh() };
        xor2(s, t, acc, i);
        acc = t;
    }
}

/// Tseitin clauses constraining `out` to the gate function of `ins`.
pub fn encode_gate<S: CnfSink + ?Sized>(s: &mut S, kind: GateKind, out: Lit, ins: &[Lit]) {
    use GateKind::*;
    match kind {
        Buf => equiv(s, out, ins[0]),
        Not => equiv(s, out, !ins[0]),
        And => and_clauses(s, out, ins),
        Nand => and_clauses(s, !out, ins),
        Or => {
            let negs: Clause = ins.iter().map(|&i| !i).collect();
            and_clauses(s, !out, &negs);
        }
        Nor => {
            let negs: Clause = ins.iter().map(|&i| !i).collect();
            and_clauses(s, out, &negs);
        }
        Xor => xor_chain(s, out, ins, false),
        Xnor => xor_chain(s, out, ins, true),
    }
}

fn encode_gates<S: CnfSink + ?Sized>(
    s: &mut S,
    c: &Netlist,
    table: &mut [Option<Lit>],
) -> Result<(), CnfError> {
    for gi in c.topo_gates()? {
        let g = &c.gates[gi];
        let ins: Vec<Lit> = g.inputs.iter().map(|i| table[i.index()].unwrap()).collect();
        let out = s.fresh();
        encode_gate(s, g.kind, out, &ins);
        table[g.output.index()] = Some(out);
    }
    Ok(())
}

/// Encode a combinational circuit over caller-supplied input literals.
/// Returns one literal per net, indexed by `NetId`.
pub fn encode_comb<S: CnfSink + ?Sized>(
    s: &mut S,
    c: &Netlist,
    input_lits: &[Lit],
) -> Result<Vec<Lit>, CnfError> {
    if !c.dffs.is_empty() {
        return Err(CnfError::NotCombinational(c.dffs.len()));
    }
    if input_lits.len() != c.inputs.len() {
        return Err(CnfError::Width {
            what: "input",
            expected: c.inputs.len(),
            got: input_lits.len(),
        });
    }
    let mut table: Vec<Option<Lit>> = vec![None; c.num_nets()];
    for (&l, &n) in input_lits.iter().zip(&c.inputs) {
        table[n.index()] = Some(l);
    }
    encode_gates(s, c, &mut table)?;
    Ok(table.into_iter().map(|t| t.unwrap()).collect())
}

/// One transition-relation instance of a sequential circuit.
#[derive(Debug, Clone)]
pub struct FrameCoding {
    /// Literal per net of the source circuit.
    pub nets: Vec<Lit>,
    /// Literals of the flip-flop D nets (state entering the next frame).
    pub next_state: Vec<Lit>,
    pub outputs: Vec<Lit>,
}

/// Encode one time frame: flip-flop Q nets read from `state`, primary inputs
/// from `inputs`.
pub fn encode_frame<S: CnfSink + ?Sized>(
    s: &mut S,
    c: &Netlist,
    state: &[Lit],
    inputs: &[Lit],
) -> Result<FrameCoding, CnfError> {
    if state.len() != c.dffs.len() {
        return Err(CnfError::Width { what: "state", expected: c.dffs.len(), got: state.len() });
    }
    if inputs.len() != c.inputs.len() {
        return Err(CnfError::Width { what: "input", expected: c.inputs.len(), got: inputs.len() });
    }
    let mut table: Vec<Option<Lit>> = vec![None; c.num_nets()];
    for (&l, &n) in inputs.iter().zip(&c.inputs) {
        table[n.index()] = Some(l);
    }
    for (&l, ff) in state.iter().zip(&c.dffs) {
        table[ff.q.index()] = Some(l);
    }
    encode_gates(s, c, &mut table)?;
    let nets: Vec<Lit> = table.into_iter().map(|t| t.unwrap()).collect();
    Ok(FrameCoding {
        next_state: c.dffs.iter().map(|ff| nets[ff.d.index()]).collect(),
        outputs: c.outputs.iter().map(|o| nets[o.index()]).collect(),
        nets,
    })
}

/// Two copies of an unrolled encrypted circuit sharing data inputs, with an
/// activation literal guarding the output-difference clause. Solving under
/// the assumption `act` demands a differentiating input; solving without it
/// releases the difference requirement so the accumulated input/output
/// constraints alone pin the key.
#[derive(Debug, Clone)]
pub struct Miter {
    pub key_a: Vec<Lit>,
    pub key_b: Vec<Lit>,
    pub data: Vec<Lit>,
    pub out_a: Vec<Lit>,
    pub out_b: Vec<Lit>,
    pub act: Lit,
}

pub fn encode_miter<S: CnfSink + ?Sized>(
    s: &mut S,
    u: &UnrolledCircuit,
) -> Result<Miter, CnfError> {
    debug_assert!(u.comb.inputs.iter().eq(u.key_ports.iter().chain(&u.data_ports)));
    let key_a: Vec<Lit> = (0..u.key_ports.len()).map(|_| s.fresh()).collect();
    let key_b: Vec<Lit> = (0..u.key_ports.len()).map(|_| s.fresh()).collect();
    let data: Vec<Lit> = (0..u.data_ports.len()).map(|_| s.fresh()).collect();
    let mut ins_a = key_a.clone();
    ins_a.extend_from_slice(&data);
    let mut ins_b = key_b.clone();
    ins_b.extend_from_slice(&data);
    let ta = encode_comb(s, &u.comb, &ins_a)?;
    let tb = encode_comb(s, &u.comb, &ins_b)?;
    let out_a: Vec<Lit> = u.obs_outputs.iter().map(|o| ta[o.index()]).collect();
    let out_b: Vec<Lit> = u.obs_outputs.iter().map(|o| tb[o.index()]).collect();
    let act = s.fresh();
    let mut diff = vec![!act];
    for (&a, &b) in out_a.iter().zip(&out_b) {
        let d = s.fresh();
        xor2(s, d, a, b);
        diff.push(d);
    }
    s.add_clause(&diff);
    Ok(Miter { key_a, key_b, data, out_a, out_b, act })
}

/// Constrain one fresh copy of the unrolled circuit to map input frames `x`
/// to output frames `y` under the shared key literals.
pub fn add_io_constraint<S: CnfSink + ?Sized>(
    s: &mut S,
    u: &UnrolledCircuit,
    key: &[Lit],
    x: &[InputVector],
    y: &[OutputVector],
) -> Result<(), CnfError> {
    if key.len() != u.key_ports.len() {
        return Err(CnfError::Width { what: "key", expected: u.key_ports.len(), got: key.len() });
    }
    let t = const_lit(s, true);
    let f = const_lit(s, false);
    let bits: Vec<bool> = x.iter().flatten().copied().collect();
    if bits.len() != u.data_ports.len() {
        return Err(CnfError::Width {
            what: "data",
            expected: u.data_ports.len(),
            got: bits.len(),
        });
    }
    let mut ins = key.to_vec();
    ins.extend(bits.iter().map(|&v| if v { t } else { f }));
    let table = encode_comb(s, &u.comb, &ins)?;
    let want: Vec<bool> = y.iter().flatten().copied().collect();
    if want.len() != u.obs_outputs.len() {
        return Err(CnfError::Width {
            what: "output",
            expected: u.obs_outputs.len(),
            got: want.len(),
        });
    }
    for (&o, &v) in u.obs_outputs.iter().zip(&want) {
        let l = table[o.index()];
        s.add_clause(&[if v { l } else { !l }]);
    }
    Ok(())
}

/// Clause satisfied exactly when the key literals differ somewhere from the
/// concrete key bits.
pub fn key_differs_clause(key: &[Lit], bits: &[bool]) -> Clause {
    key.iter().zip(bits).map(|(&l, &v)| if v { !l } else { l }).collect()
}
