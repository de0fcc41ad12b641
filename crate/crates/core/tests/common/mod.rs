//! Shared fixtures and test-side oracles for the integration suites.
//!
//! The brute-force helpers here deliberately use only the scalar simulator
//! (`run_sequence`), never the packed enumerators or the attack machinery, so
//! they can serve as an independent check of both.

#![allow(dead_code)]

use funsat_core::encrypt::{harpoon_encrypt, interlock_encrypt, Encryption};
use funsat_core::netlist::{parse_bench, Netlist};
use funsat_core::rng::rng_from_seed;
use funsat_core::sim::{
    frames_to_index, index_to_frames, reset_state, run_sequence, Dip, OutputVector,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn load_bench(name: &str) -> Netlist {
    let path = format!("{}/../../benchmarks/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_bench(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Three-bit counter that advances every cycle regardless of its input; the
/// input only reaches the observable output. Breadth-first layers from reset
/// are singleton states, so an interlocking trap forced to distance d corrupts
/// at depth d on every input sequence: FC_b steps from 0 to 1/2 exactly at d.
pub fn counter3() -> Netlist {
    parse_bench(
        "INPUT(a)\n\
         OUTPUT(y)\n\
         s0 = DFF(n0)\n\
         s1 = DFF(n1)\n\
         s2 = DFF(n2)\n\
         n0 = NOT(s0)\n\
         n1 = XOR(s1, s0)\n\
         c1 = AND(s1, s0)\n\
         n2 = XOR(s2, c1)\n\
         y = XOR(s0, a)\n",
    )
    .unwrap()
}

/// Small random sequential circuit: 1..=3 inputs, 1..=3 flip-flops with random
/// resets, 4..=9 gates over already-defined nets (no combinational cycles by
/// construction), 1..=2 observable outputs.
pub fn random_toy(seed: u64) -> Netlist {
    let mut rng = rng_from_seed(seed);
    let n_in = rng.gen_range(1..=3usize);
    let n_ff = rng.gen_range(1..=3usize);
    let n_gate = rng.gen_range(4..=9usize);
    let kinds = ["AND", "OR", "NAND", "NOR", "XOR", "XNOR", "NOT"];

    let mut text = String::new();
    let mut pool: Vec<String> = Vec::new();
    for i in 0..n_in {
        text.push_str(&format!("INPUT(i{i})\n"));
        pool.push(format!("i{i}"));
    }
    for q in 0..n_ff {
        if rng.gen::<bool>() {
            text.push_str(&format!("# init q{q} 1\n"));
        }
        pool.push(format!("q{q}"));
    }
    let mut gate_lines = Vec::new();
    for g in 0..n_gate {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let arity = if kind == "NOT" { 1 } else { rng.gen_range(2..=3.min(pool.len())) };
        let mut ops: Vec<&str> = Vec::new();
        for _ in 0..arity {
            ops.push(pool.choose(&mut rng).unwrap());
        }
        gate_lines.push(format!("g{g} = {kind}({})\n", ops.join(", ")));
        pool.push(format!("g{g}"));
    }
    // Flip-flop inputs and outputs may tap anything, including late gates.
    for q in 0..n_ff {
        let d = pool.choose(&mut rng).unwrap();
        text.push_str(&format!("q{q} = DFF({d})\n"));
    }
    let n_out = rng.gen_range(1..=2usize);
    let mut gates: Vec<&String> = pool[n_in + n_ff..].iter().collect();
    gates.shuffle(&mut rng);
    for o in gates.iter().take(n_out) {
        text.push_str(&format!("OUTPUT({o})\n"));
    }
    for line in gate_lines {
        text.push_str(&line);
    }
    parse_bench(&text).unwrap()
}

pub struct ToyCase {
    pub name: String,
    pub orig: Netlist,
    pub enc: Encryption,
}

/// Deterministic corpus of small encrypted instances, alternating between the
/// two schemes and t_k in {1, 2}. Seeds that produce circuits a scheme cannot
/// lock (for example no reachable state at any allowed distance) are skipped.
pub fn toy_corpus(n: usize) -> Vec<ToyCase> {
    let mut out = Vec::new();
    let mut seed = 0u64;
    while out.len() < n {
        let orig = random_toy(seed);
        let t_k = 1 + (seed % 2) as usize;
        let case = if seed % 4 < 2 {
            let r = if seed % 8 < 4 { 0.34 } else { 0.67 };
            harpoon_encrypt(&orig, t_k, r, seed)
                .map(|enc| ToyCase { name: format!("toy{seed}_harpoon"), orig: orig.clone(), enc })
        } else {
            let d_max = 1 + (seed % 3) as usize;
            interlock_encrypt(&orig, t_k, d_max, seed)
                .map(|enc| ToyCase { name: format!("toy{seed}_interlock"), orig: orig.clone(), enc })
        };
        if let Ok(c) = case {
            out.push(c);
        }
        seed += 1;
    }
    out
}

/// Golden output frames of `orig` for every input sequence of length `b`,
/// indexed like `frames_to_index`.
pub fn golden_table(orig: &Netlist, b: usize) -> Vec<Vec<OutputVector>> {
    let w = orig.inputs.len();
    (0..1u64 << (w * b))
        .map(|i| {
            let ins = index_to_frames(i, b, w);
            run_sequence(orig, &reset_state(orig), &ins).unwrap()
        })
        .collect()
}

/// Keys (as indices) whose post-activation behavior matches the oracle on all
/// 2^(w*b) input sequences of length b. Scalar simulation only.
pub fn brute_survivors(enc: &Netlist, orig: &Netlist, t_k: usize, b: usize) -> Vec<u64> {
    let w = orig.inputs.len();
    let golden = golden_table(orig, b);
    let reset = reset_state(enc);
    let mut out = Vec::new();
    'keys: for k in 0..1u64 << (w * t_k) {
        let kf = index_to_frames(k, t_k, w);
        for i in 0..golden.len() as u64 {
            let mut full = kf.clone();
            full.extend(index_to_frames(i, b, w));
            let got = run_sequence(enc, &reset, &full).unwrap();
            if got[t_k..] != golden[i as usize][..] {
                continue 'keys;
            }
        }
        out.push(k);
    }
    out
}

/// Keys (as indices) consistent with every recorded IO pair. Scalar replay.
pub fn dip_survivors(enc: &Netlist, t_k: usize, w: usize, dips: &[Dip]) -> Vec<u64> {
    let reset = reset_state(enc);
    let mut out = Vec::new();
    'keys: for k in 0..1u64 << (w * t_k) {
        let kf = index_to_frames(k, t_k, w);
        for dip in dips {
            let mut full = kf.clone();
            full.extend(dip.inputs.iter().cloned());
            let got = run_sequence(enc, &reset, &full).unwrap();
            if got[t_k..] != dip.outputs[..] {
                continue 'keys;
            }
        }
        out.push(k);
    }
    out
}

/// Smallest depth at which brute force eliminates every wrong key, by scalar
/// simulation up to `cap`. Panics if any wrong key is still alive at the cap.
pub fn scalar_b_req(enc: &Encryption, orig: &Netlist, cap: usize) -> usize {
    let stable = brute_survivors(&enc.encrypted, orig, enc.t_k, cap);
    assert_eq!(stable, vec![frames_to_index(&enc.key)], "wrong keys survive the cap depth");
    for b in 1..cap {
        if brute_survivors(&enc.encrypted, orig, enc.t_k, b) == stable {
            return b;
        }
    }
    cap
}
