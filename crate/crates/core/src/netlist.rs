//! Gate-level netlist IR and the `.bench` reader/writer.
//!
//! A netlist is a set of named nets, each driven by exactly one of: a primary
//! input, a gate output, or a D flip-flop output. Combinational logic must be
//! acyclic; cycles through flip-flops are fine. All flip-flops reset to 0
//! unless a `# init <net> <0|1>` annotation says otherwise.

use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Dense handle for a net. Also indexes `Netlist::nets`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NetId(pub u32);

impl NetId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
}

impl GateKind {
    pub fn parse(s: &str) -> Option<GateKind> {
        match s.to_ascii_uppercase().as_str() {
            "AND" => Some(GateKind::And),
            "NAND" => Some(GateKind::Nand),
            "OR" => Some(GateKind::Or),
            "NOR" => Some(GateKind::Nor),
            "XOR" => Some(GateKind::Xor),
            "XNOR" => Some(GateKind::Xnor),
            "NOT" => Some(GateKind::Not),
            "BUF" | "BUFF" => Some(GateKind::Buf),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Nand => "NAND",
            GateKind::Or => "OR",
            GateKind::Nor => "NOR",
            GateKind::Xor => "XOR",
            GateKind::Xnor => "XNOR",
            GateKind::Not => "NOT",
            GateKind::Buf => "BUF",
        }
    }

    /// True if the kind takes exactly one input.
    pub fn unary(self) -> bool {
        matches!(self, GateKind::Not | GateKind::Buf)
    }

    /// Evaluate over plain booleans.
    pub fn eval(self, vals: &[bool]) -> bool {
        match self {
            GateKind::And => vals.iter().all(|&v| v),
            GateKind::Nand => !vals.iter().all(|&v| v),
            GateKind::Or => vals.iter().any(|&v| v),
            GateKind::Nor => !vals.iter().any(|&v| v),
            GateKind::Xor => vals.iter().fold(false, |a, &v| a ^ v),
            GateKind::Xnor => !vals.iter().fold(false, |a, &v| a ^ v),
            GateKind::Not => !vals[0],
            GateKind::Buf => vals[0],
        }
    }

    /// Evaluate 64 assignments at once, one per bit lane.
    pub fn eval_words(self, vals: &[u64]) -> u64 {
        match self {
            GateKind::And => vals.iter().fold(!0u64, |a, &v| a & v),
            GateKind::Nand => !vals.iter().fold(!0u64, |a, &v| a & v),
            GateKind::Or => vals.iter().fold(0u64, |a, &v| a | v),
            GateKind::Nor => !vals.iter().fold(0u64, |a, &v| a | v),
            GateKind::Xor => vals.iter().fold(0u64, |a, &v| a ^ v),
            GateKind::Xnor => !vals.iter().fold(0u64, |a, &v| a ^ v),
            GateKind::Not => !vals[0],
            GateKind::Buf => vals[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateKind,
    pub inputs: Vec<NetId>,
    pub output: NetId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dff {
    pub d: NetId,
    pub q: NetId,
    pub init: bool,
}

#[derive(Debug, Clone)]
pub struct Netlist {
    pub name: String,
    /// Net names, indexed by `NetId`.
    pub nets: Vec<String>,
    pub inputs: Vec<NetId>,
    pub outputs: Vec<NetId>,
    pub gates: Vec<Gate>,
    pub dffs: Vec<Dff>,
}

#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("net `{0}` has multiple drivers")]
    MultipleDrivers(String),
    #[error("net `{0}` is used but never driven")]
    Undriven(String),
    #[error("combinational cycle through nets: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("{kind} gate `{net}` has {got} inputs")]
    BadArity { kind: &'static str, net: String, got: usize },
    #[error("netlist has no primary inputs")]
    NoInputs,
    #[error("init annotation names `{0}`, which is not a flip-flop output")]
    BadInit(String),
}

impl Netlist {
    pub fn num_nets(&self) -> usize {
        self.nets.len()
    }

    pub fn net_name(&self, id: NetId) -> &str {
        &self.nets[id.index()]
    }

    /// Gate indices in dependency order: a gate appears after every gate that
    /// drives one of its inputs. Deterministic: ties broken by output `NetId`.
    pub fn topo_gates(&self) -> Result<Vec<usize>, NetlistError> {
        let n = self.nets.len();
        let mut driver: Vec<Option<usize>> = vec![None; n];
        for (gi, g) in self.gates.iter().enumerate() {
            driver[g.output.index()] = Some(gi);
        }
        let mut indegree: Vec<usize> = self
            .gates
            .iter()
            .map(|g| g.inputs.iter().filter(|i| driver[i.index()].is_some()).count())
            .collect();
        let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); self.gates.len()];
        for (gi, g) in self.gates.iter().enumerate() {
            for i in &g.inputs {
                if let Some(src) = driver[i.index()] {
                    fanout[src].push(gi);
                }
            }
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<(NetId, usize)>> = self
            .gates
            .iter()
            .enumerate()
            .filter(|(gi, _)| indegree[*gi] == 0)
            .map(|(gi, g)| std::cmp::Reverse((g.output, gi)))
            .collect();
        let mut order = Vec::with_capacity(self.gates.len());
        while let Some(std::cmp::Reverse((_, gi))) = ready.pop() {
            order.push(gi);
            for &succ in &fanout[gi] {
                indegree[succ] -= 1;
                if indegree[succ] == 0 {
                    ready.push(std::cmp::Reverse((self.gates[succ].output, succ)));
                }
            }
        }
        if order.len() != self.gates.len() {
            // Every stuck gate has a stuck predecessor, so walking predecessor
            // edges from any stuck gate must revisit one: that loop is a cycle.
            let start = (0..self.gates.len()).find(|&gi| indegree[gi] > 0).unwrap();
            let stuck_pred = |gi: usize| {
                self.gates[gi]
                    .inputs
                    .iter()
                    .filter_map(|i| driver[i.index()])
                    .find(|&p| indegree[p] > 0)
                    .unwrap()
            };
            let mut seen = HashMap::new();
            let mut cur = start;
            while !seen.contains_key(&cur) {
                seen.insert(cur, ());
                cur = stuck_pred(cur);
            }
            let mut cycle = vec![cur];
            let mut walk = stuck_pred(cur);
            while walk != cur {
                cycle.push(walk);
                walk = stuck_pred(walk);
            }
            cycle.reverse();
            return Err(NetlistError::Cycle(
                cycle
                    .into_iter()
                    .map(|gi| self.net_name(self.gates[gi].output).to_string())
                    .collect(),
            ));
        }
        Ok(order)
    }

    /// All nets in evaluation order: sources (primary inputs and flip-flop
    /// outputs) by id, then gate outputs in dependency order.
    pub fn topo_order(&self) -> Result<Vec<NetId>, NetlistError> {
        let mut order: Vec<NetId> = self.inputs.clone();
        order.extend(self.dffs.iter().map(|d| d.q));
        order.sort();
        for gi in self.topo_gates()? {
            order.push(self.gates[gi].output);
        }
        Ok(order)
    }

    fn validate(&self) -> Result<(), NetlistError> {
        if self.inputs.is_empty() {
            return Err(NetlistError::NoInputs);
        }
        let n = self.nets.len();
        let mut drivers = vec![0u8; n];
        for &i in &self.inputs {
            drivers[i.index()] += 1;
        }
        for g in &self.gates {
            drivers[g.output.index()] += 1;
        }
        for d in &self.dffs {
            drivers[d.q.index()] += 1;
        }
        for (i, &count) in drivers.iter().enumerate() {
            if count > 1 {
                return Err(NetlistError::MultipleDrivers(self.nets[i].clone()));
            }
        }
        let undriven = |id: NetId| -> Result<(), NetlistError> {
            if drivers[id.index()] == 0 {
                Err(NetlistError::Undriven(self.nets[id.index()].clone()))
            } else {
                Ok(())
            }
        };
        for &o in &self.outputs {
            undriven(o)?;
        }
        for g in &self.gates {
            for &i in &g.inputs {
                undriven(i)?;
            }
            let want_one = g.kind.unary();
            if (want_one && g.inputs.len() != 1) || (!want_one && g.inputs.len() < 2) {
                return Err(NetlistError::BadArity {
                    kind: g.kind.name(),
                    net: self.net_name(g.output).to_string(),
                    got: g.inputs.len(),
                });
            }
        }
        for d in &self.dffs {
            undriven(d.d)?;
        }
        self.topo_gates()?;
        Ok(())
    }
}

/// Incremental construction with name interning; validates on `finish`.
pub struct NetlistBuilder {
    name: String,
    nets: Vec<String>,
    by_name: HashMap<String, NetId>,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    gates: Vec<Gate>,
    dffs: Vec<Dff>,
}

impl NetlistBuilder {
    pub fn new(name: &str) -> Self {
        NetlistBuilder {
            name: name.to_string(),
            nets: Vec::new(),
            by_name: HashMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            gates: Vec::new(),
            dffs: Vec::new(),
        }
    }

    /// Net id for `name`, interning it on first use.
    pub fn net(&mut self, name: &str) -> NetId {
        if let Some(&id) = self.by_name.get(name) {
            return id;
        }
        let id = NetId(self.nets.len() as u32);
        self.nets.push(name.to_string());
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Fresh net with a unique name derived from `prefix`.
    pub fn fresh(&mut self, prefix: &str) -> NetId {
        if !self.by_name.contains_key(prefix) {
            return self.net(prefix);
        }
        let mut k = 0usize;
        loop {
            let candidate = format!("{prefix}_{k}");
            if !self.by_name.contains_key(&candidate) {
                return self.net(&candidate);
            }
            k += 1;
        }
    }

    pub fn add_input(&mut self, id: NetId) {
        self.inputs.push(id);
    }

    pub fn add_output(&mut self, id: NetId) {
        self.outputs.push(id);
    }

    pub fn add_gate(&mut self, kind: GateKind, inputs: Vec<NetId>, output: NetId) {
        self.gates.push(Gate { kind, inputs, output });
    }

    /// Convenience: fresh output net driving a new gate.
    pub fn gate(&mut self, prefix: &str, kind: GateKind, inputs: Vec<NetId>) -> NetId {
        let out = self.fresh(prefix);
        self.add_gate(kind, inputs, out);
        out
    }

    pub fn add_dff(&mut self, q: NetId, d: NetId, init: bool) {
        self.dffs.push(Dff { d, q, init });
    }

    /// Remap every gate input through `f(gate_output, input)`.
    pub fn rewire_gate_inputs(&mut self, f: impl Fn(NetId, NetId) -> NetId) {
        for g in &mut self.gates {
            for i in &mut g.inputs {
                *i = f(g.output, *i);
            }
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn finish(self) -> Result<Netlist, NetlistError> {
        let netlist = Netlist {
            name: self.name,
            nets: self.nets,
            inputs: self.inputs,
            outputs: self.outputs,
            gates: self.gates,
            dffs: self.dffs,
        };
        netlist.validate()?;
        Ok(netlist)
    }
}

/// Parse `.bench` text. Lines are `INPUT(x)`, `OUTPUT(x)`,
/// `x = KIND(a, b, ...)`, `x = DFF(d)`; `#` starts a comment. The extension
/// annotation `# init <net> <0|1>` sets a flip-flop's reset value.
pub fn parse_bench(text: &str) -> Result<Netlist, NetlistError> {
    let mut b = NetlistBuilder::new("bench");
    let mut inits: Vec<(String, bool, usize)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let toks: Vec<&str> = comment.split_whitespace().collect();
            if toks.len() == 3 && toks[0] == "init" && (toks[2] == "0" || toks[2] == "1") {
                inits.push((toks[1].to_string(), toks[2] == "1", lineno));
            }
            continue;
        }
        let line = match line.find('#') {
            Some(pos) => line[..pos].trim(),
            None => line,
        };
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| NetlistError::Parse { line: lineno, msg };
        if let Some(rest) = strip_call(line, "INPUT") {
            let id = b.net(parse_single(rest).map_err(err)?);
            b.add_input(id);
        } else if let Some(rest) = strip_call(line, "OUTPUT") {
            let id = b.net(parse_single(rest).map_err(err)?);
            b.add_output(id);
        } else if let Some(eq) = line.find('=') {
            let target = line[..eq].trim();
            if target.is_empty() || target.contains(|c: char| c.is_whitespace()) {
                return Err(err(format!("bad assignment target in `{line}`")));
            }
            let rhs = line[eq + 1..].trim();
            let open = rhs
                .find('(')
                .ok_or_else(|| err(format!("expected `KIND(...)` after `=` in `{line}`")))?;
            if !rhs.ends_with(')') {
                return Err(err(format!("missing `)` in `{line}`")));
            }
            let kind_str = rhs[..open].trim();
            let args: Vec<&str> = rhs[open + 1..rhs.len() - 1]
                .split(',')
                .map(|a| a.trim())
                .collect();
            if args.iter().any(|a| a.is_empty()) {
                return Err(err(format!("empty operand in `{line}`")));
            }
            let out = b.net(target);
            if kind_str.eq_ignore_ascii_case("DFF") {
                if args.len() != 1 {
                    return Err(err(format!("DFF takes one input, got {}", args.len())));
                }
                let d = b.net(args[0]);
                b.add_dff(out, d, false);
            } else {
                let kind = GateKind::parse(kind_str)
                    .ok_or_else(|| err(format!("unknown gate kind `{kind_str}`")))?;
                let ins: Vec<NetId> = args.iter().map(|a| b.net(a)).collect();
                b.add_gate(kind, ins, out);
            }
        } else {
            return Err(err(format!("unrecognized statement `{line}`")));
        }
    }
    for (name, value, lineno) in inits {
        if !b.contains(&name) {
            return Err(NetlistError::Parse {
                line: lineno,
                msg: format!("init annotation names unknown net `{name}`"),
            });
        }
        let id = b.net(&name);
        match b.dffs.iter_mut().find(|f| f.q == id) {
            Some(f) => f.init = value,
            None => return Err(NetlistError::BadInit(name)),
        }
    }
    b.finish()
}

fn strip_call<'a>(line: &'a str, kw: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(kw)?;
    let rest = rest.trim_start();
    rest.starts_with('(').then_some(rest)
}

fn parse_single(call: &str) -> Result<&str, String> {
    let inner = call
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| format!("malformed argument list `{call}`"))?;
    let name = inner.trim();
    if name.is_empty() || name.contains(',') {
        return Err(format!("expected exactly one net name in `{call}`"));
    }
    Ok(name)
}

/// Write `.bench` text that `parse_bench` reads back into an isomorphic
/// netlist (same structure; statement order is canonicalized).
pub fn write_bench(c: &Netlist) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {}\n", c.name));
    for &i in &c.inputs {
        out.push_str(&format!("INPUT({})\n", c.net_name(i)));
    }
    for &o in &c.outputs {
        out.push_str(&format!("OUTPUT({})\n", c.net_name(o)));
    }
    for f in &c.dffs {
        if f.init {
            out.push_str(&format!("# init {} 1\n", c.net_name(f.q)));
        }
        out.push_str(&format!("{} = DFF({})\n", c.net_name(f.q), c.net_name(f.d)));
    }
    for g in &c.gates {
        let args: Vec<&str> = g.inputs.iter().map(|&i| c.net_name(i)).collect();
        out.push_str(&format!(
            "{} = {}({})\n",
            c.net_name(g.output),
            g.kind.name(),
            args.join(", ")
        ));
    }
    out
}

impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} inputs, {} outputs, {} dffs, {} gates",
            self.name,
            self.inputs.len(),
            self.outputs.len(),
            self.dffs.len(),
            self.gates.len()
        )
    }
}
