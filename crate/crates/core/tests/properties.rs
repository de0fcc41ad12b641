//! Randomized invariants over the core machinery. Each property pits two
//! independent implementations of the same contract against each other.

mod common;

use std::sync::OnceLock;

use common::{random_toy, toy_corpus, ToyCase};
use funsat_core::attack::select_unroll_depth;
use funsat_core::cnf::{CnfFormula, CnfSink, Lit, Var};
use funsat_core::netlist::{parse_bench, write_bench, Netlist};
use funsat_core::rng::rng_from_seed;
use funsat_core::sim::{
    estimate_fc, exact_fc, frames_to_index, index_to_frames, packed_reset_state, reset_state,
    run_sequence, FcEstimate, InputVector, NetlistOracle, PackedSim, Sim,
};
use funsat_core::solver::{SatEngine, SolveResult, Solver};
use funsat_core::unroll::unroll;
use proptest::prelude::*;
use rand::Rng;

fn random_frames(seed: u64, frames: usize, width: usize) -> Vec<InputVector> {
    let mut rng = rng_from_seed(seed);
    (0..frames).map(|_| (0..width).map(|_| rng.gen()).collect()).collect()
}

fn corpus() -> &'static [ToyCase] {
    static CORPUS: OnceLock<Vec<ToyCase>> = OnceLock::new();
    CORPUS.get_or_init(|| toy_corpus(8))
}

proptest! {
    /// Writing a netlist out and parsing it back must not change behavior.
    #[test]
    fn bench_text_round_trips_behavior(seed in any::<u64>(), drive in any::<u64>()) {
        let c = random_toy(seed);
        let d = parse_bench(&write_bench(&c)).unwrap();
        prop_assert_eq!(c.inputs.len(), d.inputs.len());
        prop_assert_eq!(c.outputs.len(), d.outputs.len());
        for s in 0..8u64 {
            let ins = random_frames(drive.wrapping_add(s), 4, c.inputs.len());
            let a = run_sequence(&c, &reset_state(&c), &ins).unwrap();
            let b = run_sequence(&d, &reset_state(&d), &ins).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    /// All 64 lanes of the packed simulator must agree with scalar runs.
    #[test]
    fn packed_simulation_matches_scalar_lanes(seed in any::<u64>(), drive in any::<u64>()) {
        let c = random_toy(seed);
        let w = c.inputs.len();
        let mut rng = rng_from_seed(drive);
        let mut packed = PackedSim::new(&c).unwrap();
        let mut pstate = packed_reset_state(&c);
        let mut sim = Sim::new(&c).unwrap();
        let mut states = vec![reset_state(&c); 64];
        for _ in 0..4 {
            let words: Vec<u64> = (0..w).map(|_| rng.gen()).collect();
            let (pnext, pout) = packed.step(&pstate, &words);
            for lane in 0..64 {
                let ins: InputVector = words.iter().map(|&x| (x >> lane) & 1 == 1).collect();
                let (next, out) = sim.step(&states[lane], &ins).unwrap();
                let packed_out: Vec<bool> =
                    pout.iter().map(|&x| (x >> lane) & 1 == 1).collect();
                prop_assert_eq!(&out, &packed_out);
                states[lane] = next;
            }
            pstate = pnext;
        }
    }

    /// A depth-b unrolling evaluated on concrete frames must reproduce the
    /// sequential run, observable frames only.
    #[test]
    fn unrolled_evaluation_matches_sequential_run(
        seed in any::<u64>(),
        t_k in 0usize..=2,
        b in 1usize..=4,
        drive in any::<u64>(),
    ) {
        let c = random_toy(seed);
        let u = unroll(&c, t_k, b).unwrap();
        let frames = random_frames(drive, t_k + b, c.inputs.len());
        let (key, ins) = frames.split_at(t_k);
        let got = u.evaluate(&key.to_vec(), ins).unwrap();
        let all = run_sequence(&c, &reset_state(&c), &frames).unwrap();
        prop_assert_eq!(&got[..], &all[t_k..]);
    }

    /// Same seed, same estimate; and an estimate flagged exact must equal the
    /// enumerated value bit for bit.
    #[test]
    fn corruption_estimates_are_reproducible(
        case_idx in 0usize..8,
        b in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let case = &corpus()[case_idx];
        let enc = &case.enc;
        let oracle = NetlistOracle::new(case.orig.clone());
        let a = estimate_fc(&enc.encrypted, &oracle, enc.t_k, b, 200, seed).unwrap();
        let b2 = estimate_fc(&enc.encrypted, &oracle, enc.t_k, b, 200, seed).unwrap();
        prop_assert_eq!(a, b2);
        prop_assert!((0.0..=1.0).contains(&a.fc));
        if a.exact {
            let full = exact_fc(&enc.encrypted, &case.orig, enc.t_k, b).unwrap();
            prop_assert_eq!(a.fc, full);
        }
    }

    /// Input frame indexing is a bijection.
    #[test]
    fn frame_indexing_round_trips(raw in any::<u64>(), w in 1usize..=4, f in 1usize..=5) {
        let idx = raw & ((1u64 << (w * f)) - 1);
        let frames = index_to_frames(idx, f, w);
        prop_assert_eq!(frames.len(), f);
        prop_assert!(frames.iter().all(|fr| fr.len() == w));
        prop_assert_eq!(frames_to_index(&frames), idx);
    }

    /// The solver must agree with direct enumeration on every formula small
    /// enough to enumerate, and its models must satisfy every clause.
    #[test]
    fn solver_agrees_with_enumeration(
        (n, spec) in (1usize..=12).prop_flat_map(|n| {
            let clause = prop::collection::vec((0..n, any::<bool>()), 1..=3);
            (Just(n), prop::collection::vec(clause, 1..=50))
        }),
    ) {
        let mut s = Solver::default();
        let lits: Vec<Lit> = (0..n).map(|_| s.fresh()).collect();
        for c in &spec {
            let clause: Vec<Lit> = c.iter().map(|&(v, neg)| if neg { !lits[v] } else { lits[v] }).collect();
            s.add_clause(&clause);
        }
        let truth = (0..1u64 << n).any(|m| {
            spec.iter().all(|c| c.iter().any(|&(v, neg)| ((m >> v) & 1 == 1) != neg))
        });
        match s.solve_under(&[]).unwrap() {
            SolveResult::Sat => {
                prop_assert!(truth, "solver found a model of an unsatisfiable formula");
                for c in &spec {
                    prop_assert!(c.iter().any(|&(v, neg)| s.model_value(lits[v]) != neg));
                }
            }
            SolveResult::Unsat => prop_assert!(!truth, "solver missed a satisfying assignment"),
        }
    }

    /// DIMACS text round trips formulas exactly, including variable count.
    #[test]
    fn dimacs_round_trips(
        (n, spec) in (1u32..=10).prop_flat_map(|n| {
            let clause = prop::collection::vec((0..n, any::<bool>()), 1..=4);
            (Just(n), prop::collection::vec(clause, 0..=20))
        }),
    ) {
        let mut f = CnfFormula::new();
        for _ in 0..n {
            f.fresh_var();
        }
        for c in &spec {
            let clause: Vec<Lit> = c.iter().map(|&(v, neg)| Var(v).lit(neg)).collect();
            f.add_clause(&clause);
        }
        let g = CnfFormula::parse_dimacs(&f.to_dimacs()).unwrap();
        prop_assert_eq!(f.num_vars(), g.num_vars());
        prop_assert_eq!(&f.clauses, &g.clauses);
    }

    /// The window scan picks a depth inside the window, and an early break
    /// really is preceded by the advertised run of flat steps.
    #[test]
    fn depth_selection_stays_in_window(
        start in 1usize..=6,
        vals in prop::collection::vec(0.0f64..=1.0, 1..=12),
        delta in 0.0f64..=0.2,
        hold in 1usize..=4,
        prev in prop::option::of(0.0f64..=1.0),
    ) {
        let trace: Vec<(usize, FcEstimate)> = vals
            .iter()
            .enumerate()
            .map(|(i, &fc)| (start + i, FcEstimate { fc, exact: false, samples: 1 }))
            .collect();
        let (chosen, early) = select_unroll_depth(&trace, delta, hold, prev);
        let last = trace.last().unwrap().0;
        prop_assert!(chosen >= 1 && chosen <= last);
        if !early {
            prop_assert_eq!(chosen, last);
        } else {
            let at = |b: usize| -> Option<f64> {
                if b + 1 == start { return prev; }
                trace.iter().find(|&&(d, _)| d == b).map(|&(_, e)| e.fc)
            };
            let flat_at = |b: usize| match (at(b), b.checked_sub(1).and_then(at)) {
                (Some(hi), Some(lo)) => hi - lo <= delta,
                _ => false,
            };
            // Some hold-long run of flat steps must end at a depth whose
            // clamped commit point is exactly the chosen depth.
            let explained = (start..=last)
                .filter(|&end| end.saturating_sub(hold).max(1) == chosen)
                .any(|end| (0..hold).all(|s| end > s && flat_at(end - s)));
            prop_assert!(explained, "early break not backed by a flat run of length {hold}");
        }
    }
}

/// Keys recovered as equal sequences must survive a write/parse of the
/// encrypted netlist: the lock is carried entirely by the netlist text.
#[test]
fn encrypted_netlists_round_trip_through_bench_text() {
    for case in corpus() {
        let enc = &case.enc;
        let back: Netlist = parse_bench(&write_bench(&enc.encrypted)).unwrap();
        for s in 0..16u64 {
            let frames = random_frames(s, enc.t_k + 3, case.orig.inputs.len());
            let a = run_sequence(&enc.encrypted, &reset_state(&enc.encrypted), &frames).unwrap();
            let b = run_sequence(&back, &reset_state(&back), &frames).unwrap();
            assert_eq!(a, b);
        }
    }
}
