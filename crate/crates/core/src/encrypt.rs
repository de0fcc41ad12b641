//! Sequential logic encryption. Both schemes prepend an obfuscation phase of
//! `t_k` clock cycles during which the key sequence is entered over the
//! primary inputs; original flip-flops are held at their reset values until
//! the phase ends, so a correct key hands over exactly the original machine.
//!
//! The mode-corruption scheme sprinkles XOR gates over random internal nets
//! that fire whenever the circuit is still obfuscated or a wrong key was
//! latched. The interlocking scheme instead plants decoy keys whose
//! corruption stays silent until the state machine first enters a trap state
//! at a known breadth-first distance from reset, bounding the unroll depth
//! an attack needs before any difference is observable.

use crate::netlist::{GateKind, NetId, Netlist, NetlistBuilder, NetlistError};
use crate::sim::{step, InputVector, KeySequence, SimError, State};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncryptError {
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("trap generation failed: {0}")]
    Generation(String),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A decoy key and the trap armed by it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapInfo {
    /// Breadth-first distance of the trap state from reset; equals the
    /// minimal observable error depth under the decoy key.
    pub depth: usize,
    /// Input frames driving the machine from reset into the trap state.
    pub witness: Vec<InputVector>,
    pub wrong_key: KeySequence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SchemeInfo {
    Harpoon { corrupted_sites: usize },
    Interlock { traps: Vec<TrapInfo> },
}

impl SchemeInfo {
    /// Deepest trap distance, when the scheme has traps.
    pub fn required_depth(&self) -> Option<usize> {
        match self {
            SchemeInfo::Harpoon { .. } => None,
            SchemeInfo::Interlock { traps } => traps.iter().map(|t| t.depth).max(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Encryption {
    pub encrypted: Netlist,
    pub key: KeySequence,
    pub t_k: usize,
    pub scheme: SchemeInfo,
}

/// Obfuscation-phase scaffolding shared by both schemes: copied original
/// logic, the one-hot mode chain, and cached input inverters.
struct Scaffold {
    nb: NetlistBuilder,
    map: Vec<NetId>,
    new_inputs: Vec<NetId>,
    mode: Vec<NetId>,
    in_obf: NetId,
    not_in_obf: NetId,
    not_inp: Vec<Option<NetId>>,
}

impl Scaffold {
    /// AND/OR reduction that degenerates to a wire for a single input.
    fn wide(nb: &mut NetlistBuilder, prefix: &str, kind: GateKind, ins: Vec<NetId>) -> NetId {
        if ins.len() == 1 {
            ins[0]
        } else {
            nb.gate(prefix, kind, ins)
        }
    }

    fn build(c: &Netlist, t_k: usize) -> Result<Scaffold, EncryptError> {
        if t_k == 0 {
            return Err(EncryptError::BadParam("t_k must be at least 1".into()));
        }
        let mut nb = NetlistBuilder::new(&c.name);
        // Register original names first so generated nets cannot collide.
        let map: Vec<NetId> = (0..c.num_nets())
            .map(|i| nb.net(c.net_name(NetId(i as u32))))
            .collect();
        let mut new_inputs = Vec::new();
        for &i in &c.inputs {
            nb.add_input(map[i.index()]);
            new_inputs.push(map[i.index()]);
        }
        let a0 = new_inputs[0];
        let const0 = nb.gate("obf_zero", GateKind::Xor, vec![a0, a0]);
        let mut mode = Vec::new();
        let mut prev = const0;
        for j in 0..t_k {
            let q = nb.fresh("obf_mode");
            nb.add_dff(q, prev, j == 0);
            mode.push(q);
            prev = q;
        }
        let in_obf = Self::wide(&mut nb, "obf_on", GateKind::Or, mode.clone());
        let not_in_obf = nb.gate("obf_off", GateKind::Not, vec![in_obf]);
        for g in &c.gates {
            let ins = g.inputs.iter().map(|i| map[i.index()]).collect();
            nb.add_gate(g.kind, ins, map[g.output.index()]);
        }
        Ok(Scaffold {
            nb,
            map,
            new_inputs,
            mode,
            in_obf,
            not_in_obf,
            not_inp: vec![None; c.inputs.len()],
        })
    }

    fn input_lit(&mut self, port: usize, want: bool) -> NetId {
        let inp = self.new_inputs[port];
        if want {
            inp
        } else {
            *self.not_inp[port].get_or_insert_with(|| {
                self.nb.gate("obf_ni", GateKind::Not, vec![inp])
            })
        }
    }

    /// Sticky register that latches when any obfuscation-phase frame fails
    /// to match the given key sequence; returns its Q net.
    fn miss_register(&mut self, key: &KeySequence) -> NetId {
        let mut mism = Vec::new();
        for (j, frame) in key.iter().enumerate() {
            let lits: Vec<NetId> =
                (0..frame.len()).map(|p| self.input_lit(p, frame[p])).collect();
            let matched = Self::wide(&mut self.nb, "obf_eq", GateKind::And, lits);
            let bad = self.nb.gate("obf_ne", GateKind::Not, vec![matched]);
            mism.push(self.nb.gate("obf_mm", GateKind::And, vec![self.mode[j], bad]));
        }
        let q = self.nb.fresh("obf_miss");
        let mut d_ins = vec![q];
        d_ins.extend(mism);
        let d = self.nb.gate("obf_missd", GateKind::Or, d_ins);
        self.nb.add_dff(q, d, false);
        q
    }

    /// Re-add the original flip-flops behind hold gates that pin them to
    /// their reset value while the obfuscation phase runs. Returns the new D
    /// nets (the next-state values seen in functional mode).
    fn hold_dffs(&mut self, c: &Netlist) -> Vec<NetId> {
        let mut held = Vec::new();
        for ff in &c.dffs {
            let d = self.map[ff.d.index()];
            let hd = if ff.init {
                self.nb.gate("obf_hold", GateKind::Or, vec![self.in_obf, d])
            } else {
                self.nb.gate("obf_hold", GateKind::And, vec![self.not_in_obf, d])
            };
            self.nb.add_dff(self.map[ff.q.index()], hd, ff.init);
            held.push(hd);
        }
        held
    }
}

fn random_key(rng: &mut impl Rng, t_k: usize, width: usize) -> KeySequence {
    (0..t_k).map(|_| (0..width).map(|_| rng.gen()).collect()).collect()
}

/// Mode-corruption encryption: a wrong key frame (or the obfuscation phase
/// itself) permanently activates XOR corruption on `ceil(r_mkf * gates)`
/// randomly chosen internal nets.
pub fn harpoon_encrypt(
    c: &Netlist,
    t_k: usize,
    r_mkf: f64,
    seed: u64,
) -> Result<Encryption, EncryptError> {
    if !(r_mkf > 0.0 && r_mkf <= 1.0) {
        return Err(EncryptError::BadParam(format!("r_mkf {r_mkf} outside (0, 1]")));
    }
    let mut rng = crate::rng::rng_from_seed(seed);
    let key = random_key(&mut rng, t_k, c.inputs.len());
    let mut sc = Scaffold::build(c, t_k)?;
    let miss = sc.miss_register(&key);
    let corrupt = sc.nb.gate("obf_bad", GateKind::Or, vec![sc.in_obf, miss]);

    let sites = (r_mkf * c.gates.len() as f64).ceil() as usize;
    let mut picks = rand::seq::index::sample(&mut rng, c.gates.len(), sites.min(c.gates.len()))
        .into_vec();
    picks.sort_unstable();
    let mut rewire: HashMap<NetId, NetId> = HashMap::new();
    for gi in &picks {
        let o = sc.map[c.gates[*gi].output.index()];
        let x = sc.nb.gate("obf_x", GateKind::Xor, vec![o, corrupt]);
        rewire.insert(o, x);
    }
    // Divert every original consumer (gates, state, outputs) to the
    // corrupted copies; the XOR gates themselves keep their pristine taps.
    let xor_outs: HashSet<NetId> = rewire.values().copied().collect();
    sc.nb.rewire_gate_inputs(|out, input| {
        if xor_outs.contains(&out) {
            input
        } else {
            rewire.get(&input).copied().unwrap_or(input)
        }
    });
    for ff in &c.dffs {
        let d = sc.map[ff.d.index()];
        if let Some(&x) = rewire.get(&d) {
            sc.map[ff.d.index()] = x;
        }
    }
    sc.hold_dffs(c);
    for &o in &c.outputs {
        let n = sc.map[o.index()];
        sc.nb.add_output(rewire.get(&n).copied().unwrap_or(n));
    }
    let encrypted = sc.nb.finish()?;
    Ok(Encryption {
        encrypted,
        key,
        t_k,
        scheme: SchemeInfo::Harpoon { corrupted_sites: picks.len() },
    })
}

/// Breadth-first reachability layers from reset plus a predecessor map for
/// witness reconstruction. Exploration is capped to keep generation bounded.
fn bfs_layers(
    c: &Netlist,
    d_max: usize,
    cap: usize,
) -> Result<(Vec<Vec<State>>, HashMap<State, (State, InputVector)>), EncryptError> {
    let n = c.inputs.len();
    if n > 16 {
        return Err(EncryptError::Generation(format!(
            "input enumeration over {n} ports is too wide"
        )));
    }
    let reset = crate::sim::reset_state(c);
    let mut visited: HashSet<State> = HashSet::new();
    visited.insert(reset.clone());
    let mut pred: HashMap<State, (State, InputVector)> = HashMap::new();
    let mut layers = vec![vec![reset]];
    for depth in 1..=d_max {
        let mut next = Vec::new();
        for s in &layers[depth - 1] {
            for bits in 0..1u64 << n {
                let iv: InputVector = (0..n).map(|p| bits >> p & 1 == 1).collect();
                let (ns, _) = step(c, s, &iv)?;
                if visited.insert(ns.clone()) {
                    pred.insert(ns.clone(), (s.clone(), iv));
                    next.push(ns);
                    if visited.len() > cap {
                        return Err(EncryptError::Generation(format!(
                            "state exploration exceeded {cap} states"
                        )));
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        layers.push(next);
    }
    Ok((layers, pred))
}

fn witness_to(
    pred: &HashMap<State, (State, InputVector)>,
    reset: &State,
    target: &State,
) -> Vec<InputVector> {
    let mut frames = Vec::new();
    let mut cur = target.clone();
    while &cur != reset {
        let (prev, iv) = pred.get(&cur).expect("broken predecessor chain");
        frames.push(iv.clone());
        cur = prev.clone();
    }
    frames.reverse();
    frames
}

pub fn interlock_encrypt(
    c: &Netlist,
    t_k: usize,
    d_max: usize,
    seed: u64,
) -> Result<Encryption, EncryptError> {
    interlock_encrypt_with(c, t_k, d_max, 1, None, seed)
}

/// Interlocking encryption with `traps` decoy keys. `force_distance` pins
/// every trap to one breadth-first distance instead of sampling one.
pub fn interlock_encrypt_with(
    c: &Netlist,
    t_k: usize,
    d_max: usize,
    traps: usize,
    force_distance: Option<usize>,
    seed: u64,
) -> Result<Encryption, EncryptError> {
    if d_max == 0 {
        return Err(EncryptError::BadParam("d_max must be at least 1".into()));
    }
    if traps == 0 {
        return Err(EncryptError::BadParam("need at least one trap".into()));
    }
    let n = c.inputs.len();
    let key_space = (t_k as u32 * n as u32).min(63);
    if (traps as u64 + 1) > 1u64 << key_space {
        return Err(EncryptError::BadParam(format!(
            "key space 2^{key_space} cannot hold {traps} decoys plus the correct key"
        )));
    }
    let mut rng = crate::rng::rng_from_seed(seed);
    let key = random_key(&mut rng, t_k, n);

    let (layers, pred) = bfs_layers(c, d_max, 200_000)?;
    let reachable: Vec<usize> =
        (1..layers.len()).filter(|&d| d <= d_max && !layers[d].is_empty()).collect();
    if reachable.is_empty() {
        return Err(EncryptError::Generation(
            "no states reachable within d_max; nothing to trap".into(),
        ));
    }
    if let Some(fd) = force_distance {
        if !reachable.contains(&fd) {
            return Err(EncryptError::Generation(format!(
                "no state at forced distance {fd} (reachable: {reachable:?})"
            )));
        }
    }

    let mut taken: HashSet<KeySequence> = HashSet::new();
    taken.insert(key.clone());
    let mut trap_infos = Vec::new();
    for _ in 0..traps {
        let mut wrong = random_key(&mut rng, t_k, n);
        let mut tries = 0;
        while taken.contains(&wrong) {
            wrong = random_key(&mut rng, t_k, n);
            tries += 1;
            if tries > 64 * (traps + 1) {
                return Err(EncryptError::Generation("could not sample distinct decoy keys".into()));
            }
        }
        taken.insert(wrong.clone());
        let depth = force_distance.unwrap_or_else(|| *reachable.choose(&mut rng).unwrap());
        let s_pre = layers[depth].choose(&mut rng).unwrap().clone();
        let witness = witness_to(&pred, &layers[0][0], &s_pre);
        debug_assert_eq!(witness.len(), depth);
        trap_infos.push((wrong, depth, s_pre, witness));
    }

    let mut sc = Scaffold::build(c, t_k)?;
    let miss_c = sc.miss_register(&key);
    let miss_w: Vec<NetId> =
        trap_infos.iter().map(|(w, ..)| sc.miss_register(w)).collect();
    let held = sc.hold_dffs(c);

    // A key matching neither the correct key nor any decoy corrupts at once.
    let mut all_missed = vec![sc.not_in_obf, miss_c];
    all_missed.extend(&miss_w);
    let stray = sc.nb.gate("obf_stray", GateKind::And, all_missed);

    let mut corrupt_terms = vec![sc.in_obf, stray];
    for ((_, _, s_pre, _), &mq) in trap_infos.iter().zip(&miss_w) {
        // Armed while the decoy was entered exactly; fires on entry to the
        // trap state, i.e. when the held next-state nets equal it.
        let nm = sc.nb.gate("obf_arm0", GateKind::Not, vec![mq]);
        let armed = sc.nb.gate("obf_arm", GateKind::And, vec![sc.not_in_obf, nm]);
        let cmp_ins: Vec<NetId> = held
            .iter()
            .zip(s_pre)
            .map(|(&hd, &bit)| {
                if bit {
                    hd
                } else {
                    sc.nb.gate("obf_cmpn", GateKind::Not, vec![hd])
                }
            })
            .collect();
        let at_trap = Scaffold::wide(&mut sc.nb, "obf_cmp", GateKind::And, cmp_ins);
        let fire = sc.nb.gate("obf_fire", GateKind::And, vec![armed, at_trap]);
        let tq = sc.nb.fresh("obf_trap");
        let td = sc.nb.gate("obf_trapd", GateKind::Or, vec![tq, fire]);
        sc.nb.add_dff(tq, td, false);
        corrupt_terms.push(fire);
        corrupt_terms.push(tq);
    }
    let corrupt = sc.nb.gate("obf_bad", GateKind::Or, corrupt_terms);
    for &o in &c.outputs {
        let y = sc.nb.gate("obf_y", GateKind::Xor, vec![sc.map[o.index()], corrupt]);
        sc.nb.add_output(y);
    }
    let encrypted = sc.nb.finish()?;
    Ok(Encryption {
        encrypted,
        key,
        t_k,
        scheme: SchemeInfo::Interlock {
            traps: trap_infos
                .into_iter()
                .map(|(wrong_key, depth, _, witness)| TrapInfo { depth, witness, wrong_key })
                .collect(),
        },
    })
}
