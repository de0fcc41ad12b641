//! Incremental CDCL SAT solver: two-watched-literal propagation, first-UIP
//! conflict analysis, VSIDS branching, Luby restarts, learnt-clause database
//! reduction, and MiniSat-style assumption handling. Also provides an
//! adapter that shells out to an external DIMACS solver binary.

use crate::cnf::{CnfFormula, CnfSink, Lit, Var};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveResult {
    Sat,
    Unsat,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("conflict budget of {budget} exhausted")]
    ConflictBudget { budget: u64 },
    #[error("solver deadline exceeded")]
    Deadline,
    #[error("external solver failed: {0}")]
    External(String),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// VSIDS activity decay factor per conflict.
    pub var_decay: f64,
    /// Conflicts in the first Luby restart interval.
    pub luby_base: u64,
    /// Keep last assigned polarities as branching phases.
    pub phase_saving: bool,
    /// Learnt clauses tolerated before the first database reduction.
    pub learnt_limit_start: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            var_decay: 0.95,
            luby_base: 100,
            phase_saving: false,
            learnt_limit_start: 2000,
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct SolverStats {
    pub solves: u64,
    pub conflicts: u64,
    pub decisions: u64,
    pub propagations: u64,
    pub restarts: u64,
    pub learnt: u64,
    pub removed: u64,
}

/// Common interface over the built-in solver and external adapters.
pub trait SatEngine: CnfSink {
    fn solve_under(&mut self, assumptions: &[Lit]) -> Result<SolveResult, SolverError>;

    /// Value of a literal in the model of the last `Sat` answer.
    fn model_value(&self, l: Lit) -> bool;

    fn set_limits(&mut self, _conflict_budget: Option<u64>, _deadline: Option<Instant>) {}

    fn conflicts(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LBool {
    True,
    False,
    Undef,
}

#[derive(Debug)]
struct ClauseBox {
    lits: Vec<Lit>,
    learnt: bool,
    deleted: bool,
    activity: f64,
}

#[derive(Debug, Clone, Copy)]
struct Watcher {
    cref: u32,
    blocker: Lit,
}

/// Max-heap over variables ordered by activity, ties broken by lower index.
#[derive(Debug, Default)]
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<i32>,
}

impl VarHeap {
    fn better(act: &[f64], a: u32, b: u32) -> bool {
        let (x, y) = (act[a as usize], act[b as usize]);
        x > y || (x == y && a < b)
    }

    fn grow(&mut self) {
        self.pos.push(-1);
    }

    fn contains(&self, v: u32) -> bool {
        self.pos[v as usize] >= 0
    }

    fn place(&mut self, i: usize, v: u32) {
        self.heap[i] = v;
        self.pos[v as usize] = i as i32;
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let p = (i - 1) >> 1;
            if Self::better(act, v, self.heap[p]) {
                self.place(i, self.heap[p]);
                i = p;
            } else {
                break;
            }
        }
        self.place(i, v);
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        loop {
            let l = 2 * i + 1;
            if l >= self.heap.len() {
                break;
            }
            let r = l + 1;
            let c = if r < self.heap.len() && Self::better(act, self.heap[r], self.heap[l]) {
                r
            } else {
                l
            };
            if Self::better(act, self.heap[c], v) {
                self.place(i, self.heap[c]);
                i = c;
            } else {
                break;
            }
        }
        self.place(i, v);
    }

    fn insert(&mut self, v: u32, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.pos[v as usize] = self.heap.len() as i32;
        self.heap.push(v);
        self.sift_up(self.heap.len() - 1, act);
    }

    fn bumped(&mut self, v: u32, act: &[f64]) {
        if self.contains(v) {
            self.sift_up(self.pos[v as usize] as usize, act);
        }
    }

    fn pop(&mut self, act: &[f64]) -> Option<u32> {
        let root = *self.heap.first()?;
        self.pos[root as usize] = -1;
        let last = self.heap.pop().unwrap();
        if !self.heap.is_empty() {
            self.place(0, last);
            self.sift_down(0, act);
        }
        Some(root)
    }
}

pub struct Solver {
    config: SolverConfig,
    db: Vec<ClauseBox>,
    watches: Vec<Vec<Watcher>>,
    assigns: Vec<LBool>,
    phase: Vec<bool>,
    level: Vec<u32>,
    reason: Vec<Option<u32>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    cla_inc: f64,
    heap: VarHeap,
    seen: Vec<bool>,
    ok: bool,
    num_learnts: usize,
    reductions: u64,
    model: Vec<bool>,
    budget: Option<u64>,
    deadline: Option<Instant>,
    pub stats: SolverStats,
}

/// The Luby restart sequence 1,1,2,1,1,2,4,... (0-indexed).
fn luby(mut x: u64) -> u64 {
    let (mut size, mut seq) = (1u64, 0u32);
    while size < x + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != x {
        size = (size - 1) / 2;
        seq -= 1;
        x %= size;
    }
    1 << seq
}

impl Default for Solver {
    fn default() -> Self {
        Self::new(SolverConfig::default())
    }
}

impl Solver {
    pub fn new(config: SolverConfig) -> Self {
        Solver {
            config,
            db: Vec::new(),
            watches: Vec::new(),
            assigns: Vec::new(),
            phase: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: Vec::new(),
            var_inc: 1.0,
            cla_inc: 1.0,
            heap: VarHeap::default(),
            seen: Vec::new(),
            ok: true,
            num_learnts: 0,
            reductions: 0,
            model: Vec::new(),
            budget: None,
            deadline: None,
            stats: SolverStats::default(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.assigns.len()
    }

    /// Load every clause of a formula, allocating its variables.
    pub fn load(&mut self, f: &CnfFormula) {
        while self.num_vars() < f.num_vars() {
            self.fresh_var();
        }
        for c in &f.clauses {
            self.add_clause(c);
        }
    }

    fn value_lit(&self, l: Lit) -> LBool {
        match self.assigns[l.var().index()] {
            LBool::Undef => LBool::Undef,
            LBool::True => {
                if l.is_neg() {
                    LBool::False
                } else {
                    LBool::True
                }
            }
            LBool::False => {
                if l.is_neg() {
                    LBool::True
                } else {
                    LBool::False
                }
            }
        }
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn enqueue(&mut self, l: Lit, reason: Option<u32>) {
        debug_assert_eq!(self.value_lit(l), LBool::Undef);
        let v = l.var().index();
        self.assigns[v] = if l.is_neg() { LBool::False } else { LBool::True };
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn new_level(&mut self) {
        self.trail_lim.push(self.trail.len());
    }

    fn cancel_until(&mut self, lvl: usize) {
        if self.decision_level() <= lvl {
            return;
        }
        let bound = self.trail_lim[lvl];
        for i in (bound..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var();
            if self.config.phase_saving {
                self.phase[v.index()] = !l.is_neg();
            }
            self.assigns[v.index()] = LBool::Undef;
            self.reason[v.index()] = None;
            self.heap.insert(v.0, &self.activity);
        }
        self.trail.truncate(bound);
        self.trail_lim.truncate(lvl);
        self.qhead = self.trail.len();
    }

    fn bump_var(&mut self, v: Var) {
        let a = &mut self.activity[v.index()];
        *a += self.var_inc;
        if *a > 1e100 {
            for x in &mut self.activity {
                *x *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.bumped(v.0, &self.activity);
    }

    fn bump_clause(&mut self, cref: u32) {
        let a = &mut self.db[cref as usize].activity;
        *a += self.cla_inc;
        if *a > 1e20 {
            for c in &mut self.db {
                c.activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn attach(&mut self, cref: u32) {
        let c = &self.db[cref as usize];
        debug_assert!(c.lits.len() >= 2);
        let (l0, l1) = (c.lits[0], c.lits[1]);
        self.watches[(!l0).code()].push(Watcher { cref, blocker: l1 });
        self.watches[(!l1).code()].push(Watcher { cref, blocker: l0 });
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let idx = p.code();
            let mut ws = std::mem::take(&mut self.watches[idx]);
            let mut j = 0;
            let mut i = 0;
            let mut confl = None;
            'watchers: while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value_lit(w.blocker) == LBool::True {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                if self.db[w.cref as usize].deleted {
                    continue;
                }
                {
                    let lits = &mut self.db[w.cref as usize].lits;
                    if lits[0] == !p {
                        lits.swap(0, 1);
                    }
                    debug_assert_eq!(lits[1], !p);
                }
                let first = self.db[w.cref as usize].lits[0];
                if first != w.blocker && self.value_lit(first) == LBool::True {
                    ws[j] = Watcher { cref: w.cref, blocker: first };
                    j += 1;
                    continue;
                }
                let len = self.db[w.cref as usize].lits.len();
                for k in 2..len {
                    let lk = self.db[w.cref as usize].lits[k];
                    if self.value_lit(lk) != LBool::False {
                        let lits = &mut self.db[w.cref as usize].lits;
                        lits.swap(1, k);
                        self.watches[(!lk).code()].push(Watcher { cref: w.cref, blocker: first });
                        continue 'watchers;
                    }
                }
                ws[j] = Watcher { cref: w.cref, blocker: first };
                j += 1;
                if self.value_lit(first) == LBool::False {
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                    confl = Some(w.cref);
                } else {
                    self.enqueue(first, Some(w.cref));
                }
            }
            ws.truncate(j);
            ws.append(&mut self.watches[idx]);
            self.watches[idx] = ws;
            if confl.is_some() {
                self.qhead = self.trail.len();
                return confl;
            }
        }
        None
    }

    /// First-UIP learning; returns the learnt clause (asserting literal
    /// first) and the level to backjump to.
    fn analyze(&mut self, mut cref: u32) -> (Vec<Lit>, usize) {
        let mut learnt: Vec<Lit> = vec![Lit::from_code(0)];
        let mut counter = 0usize;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        loop {
            if self.db[cref as usize].learnt {
                self.bump_clause(cref);
            }
            let start = usize::from(p.is_some());
            let nlits = self.db[cref as usize].lits.len();
            for li in start..nlits {
                let q = self.db[cref as usize].lits[li];
                let v = q.var();
                if !self.seen[v.index()] && self.level[v.index()] > 0 {
                    self.seen[v.index()] = true;
                    self.bump_var(v);
                    if self.level[v.index()] as usize >= self.decision_level() {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var().index()] {
                    break;
                }
            }
            let pl = self.trail[idx];
            self.seen[pl.var().index()] = false;
            p = Some(pl);
            counter -= 1;
            if counter == 0 {
                break;
            }
            cref = self.reason[pl.var().index()].expect("UIP path literal must be implied");
        }
        learnt[0] = !p.unwrap();
        for l in &learnt[1..] {
            self.seen[l.var().index()] = false;
        }
        let bt = if learnt.len() == 1 {
            0
        } else {
            let mut hi = 1;
            for k in 2..learnt.len() {
                if self.level[learnt[k].var().index()] > self.level[learnt[hi].var().index()] {
                    hi = k;
                }
            }
            learnt.swap(1, hi);
            self.level[learnt[1].var().index()] as usize
        };
        (learnt, bt)
    }

    fn record_learnt(&mut self, lits: Vec<Lit>) {
        self.stats.learnt += 1;
        if lits.len() == 1 {
            self.enqueue(lits[0], None);
            return;
        }
        let cref = self.db.len() as u32;
        let first = lits[0];
        self.db.push(ClauseBox { lits, learnt: true, deleted: false, activity: self.cla_inc });
        self.num_learnts += 1;
        self.attach(cref);
        self.enqueue(first, Some(cref));
    }

    fn locked(&self, cref: u32) -> bool {
        let l0 = self.db[cref as usize].lits[0];
        self.reason[l0.var().index()] == Some(cref) && self.value_lit(l0) == LBool::True
    }

    fn reduce_db(&mut self) {
        let mut cands: Vec<u32> = (0..self.db.len() as u32)
            .filter(|&i| {
                let c = &self.db[i as usize];
                c.learnt && !c.deleted && c.lits.len() > 2 && !self.locked(i)
            })
            .collect();
        cands.sort_by(|&a, &b| {
            self.db[a as usize]
                .activity
                .partial_cmp(&self.db[b as usize].activity)
                .unwrap()
                .then(a.cmp(&b))
        });
        for &i in &cands[..cands.len() / 2] {
            self.db[i as usize].deleted = true;
            self.db[i as usize].lits = Vec::new();
            self.num_learnts -= 1;
            self.stats.removed += 1;
        }
        self.reductions += 1;
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v as usize] == LBool::Undef {
                return Some(Var(v).lit(!self.phase[v as usize]));
            }
        }
        None
    }

    #[cfg(debug_assertions)]
    fn assert_model_sound(&self) {
        for c in &self.db {
            if c.deleted || c.learnt {
                continue;
            }
            assert!(
                c.lits.iter().any(|&l| self.value_lit(l) == LBool::True),
                "model violates input clause {:?}",
                c.lits
            );
        }
    }
}

impl CnfSink for Solver {
    fn fresh_var(&mut self) -> Var {
        let v = Var(self.assigns.len() as u32);
        self.assigns.push(LBool::Undef);
        self.phase.push(false);
        self.level.push(0);
        self.reason.push(None);
        self.activity.push(0.0);
        self.seen.push(false);
        self.watches.push(Vec::new());
        self.watches.push(Vec::new());
        self.heap.grow();
        self.heap.insert(v.0, &self.activity);
        v
    }

    /// Clauses may only be added between `solve_under` calls (the solver is
    /// then at decision level 0).
    fn add_clause(&mut self, lits: &[Lit]) {
        debug_assert_eq!(self.decision_level(), 0);
        if !self.ok {
            return;
        }
        let mut c: Vec<Lit> = lits.to_vec();
        c.sort();
        c.dedup();
        if c.windows(2).any(|w| w[0].var() == w[1].var()) {
            return; // tautology
        }
        c.retain(|&l| self.value_lit(l) != LBool::False);
        if c.iter().any(|&l| self.value_lit(l) == LBool::True) {
            return;
        }
        match c.len() {
            0 => self.ok = false,
            1 => self.enqueue(c[0], None),
            _ => {
                let cref = self.db.len() as u32;
                self.db.push(ClauseBox { lits: c, learnt: false, deleted: false, activity: 0.0 });
                self.attach(cref);
            }
        }
    }
}

impl SatEngine for Solver {
    fn solve_under(&mut self, assumptions: &[Lit]) -> Result<SolveResult, SolverError> {
        self.stats.solves += 1;
        if let Some(d) = self.deadline {
            if Instant::now() >= d {
                return Err(SolverError::Deadline);
            }
        }
        if !self.ok {
            return Ok(SolveResult::Unsat);
        }
        self.cancel_until(0);
        let mut conflicts_call = 0u64;
        let mut since_restart = 0u64;
        let mut restart_limit = luby(self.stats.restarts) * self.config.luby_base;
        loop {
            if let Some(confl) = self.propagate() {
                self.stats.conflicts += 1;
                conflicts_call += 1;
                since_restart += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return Ok(SolveResult::Unsat);
                }
                let (lits, bt) = self.analyze(confl);
                self.cancel_until(bt);
                self.record_learnt(lits);
                self.var_inc /= self.config.var_decay;
                self.cla_inc /= 0.999;
                if let Some(b) = self.budget {
                    if conflicts_call >= b {
                        self.cancel_until(0);
                        return Err(SolverError::ConflictBudget { budget: b });
                    }
                }
                if conflicts_call % 128 == 0 {
                    if let Some(d) = self.deadline {
                        if Instant::now() >= d {
                            self.cancel_until(0);
                            return Err(SolverError::Deadline);
                        }
                    }
                }
            } else {
                if since_restart >= restart_limit {
                    self.stats.restarts += 1;
                    since_restart = 0;
                    restart_limit = luby(self.stats.restarts) * self.config.luby_base;
                    self.cancel_until(0);
                    continue;
                }
                if self.num_learnts
                    >= self.config.learnt_limit_start + 500 * self.reductions as usize
                {
                    self.reduce_db();
                }
                let mut next = None;
                while self.decision_level() < assumptions.len() {
                    let a = assumptions[self.decision_level()];
                    match self.value_lit(a) {
                        LBool::True => self.new_level(),
                        LBool::False => {
                            self.cancel_until(0);
                            return Ok(SolveResult::Unsat);
                        }
                        LBool::Undef => {
                            next = Some(a);
                            break;
                        }
                    }
                }
                if next.is_none() {
                    next = self.pick_branch();
                    if next.is_some() {
                        self.stats.decisions += 1;
                    }
                }
                match next {
                    None => {
                        #[cfg(debug_assertions)]
                        self.assert_model_sound();
                        debug_assert!(assumptions
                            .iter()
                            .all(|&a| self.value_lit(a) == LBool::True));
                        self.model = self
                            .assigns
                            .iter()
                            .map(|&a| a == LBool::True)
                            .collect();
                        self.cancel_until(0);
                        return Ok(SolveResult::Sat);
                    }
                    Some(l) => {
                        self.new_level();
                        self.enqueue(l, None);
                    }
                }
            }
        }
    }

    fn model_value(&self, l: Lit) -> bool {
        self.model[l.var().index()] ^ l.is_neg()
    }

    fn set_limits(&mut self, conflict_budget: Option<u64>, deadline: Option<Instant>) {
        self.budget = conflict_budget;
        self.deadline = deadline;
    }

    fn conflicts(&self) -> u64 {
        self.stats.conflicts
    }
}

/// Shells out to a DIMACS solver binary per `solve_under` call. Assumptions
/// are encoded as extra unit clauses; limits are not supported and ignored.
pub struct ExternalSolver {
    program: String,
    args: Vec<String>,
    formula: CnfFormula,
    model: Vec<bool>,
}

impl ExternalSolver {
    pub fn new(program: &str, args: &[String]) -> Self {
        ExternalSolver {
            program: program.to_string(),
            args: args.to_vec(),
            formula: CnfFormula::new(),
            model: Vec::new(),
        }
    }
}

impl CnfSink for ExternalSolver {
    fn fresh_var(&mut self) -> Var {
        self.formula.fresh_var()
    }

    fn add_clause(&mut self, lits: &[Lit]) {
        self.formula.add_clause(lits);
    }
}

impl SatEngine for ExternalSolver {
    fn solve_under(&mut self, assumptions: &[Lit]) -> Result<SolveResult, SolverError> {
        let mut f = self.formula.clone();
        for &a in assumptions {
            f.add_clause(&[a]);
        }
        let dir = tempfile::tempdir().map_err(|e| SolverError::External(e.to_string()))?;
        let path = dir.path().join("instance.cnf");
        std::fs::write(&path, f.to_dimacs()).map_err(|e| SolverError::External(e.to_string()))?;
        let out = std::process::Command::new(&self.program)
            .args(&self.args)
            .arg(&path)
            .output()
            .map_err(|e| SolverError::External(format!("spawn {}: {e}", self.program)))?;
        let stdout = String::from_utf8_lossy(&out.stdout);
        let mut answer = None;
        let mut model = vec![false; self.formula.num_vars()];
        for line in stdout.lines() {
            if let Some(rest) = line.strip_prefix("s ") {
                answer = match rest.trim() {
                    "SATISFIABLE" => Some(SolveResult::Sat),
                    "UNSATISFIABLE" => Some(SolveResult::Unsat),
                    other => return Err(SolverError::External(format!("bad status: {other}"))),
                };
            } else if let Some(rest) = line.strip_prefix("v ") {
                for tok in rest.split_whitespace() {
                    let n: i32 = tok
                        .parse()
                        .map_err(|_| SolverError::External(format!("bad model token: {tok}")))?;
                    if let Some(l) = Lit::from_dimacs(n) {
                        if l.var().index() < model.len() {
                            model[l.var().index()] = !l.is_neg();
                        }
                    }
                }
            }
        }
        match answer {
            Some(SolveResult::Sat) => {
                self.model = model;
                Ok(SolveResult::Sat)
            }
            Some(SolveResult::Unsat) => Ok(SolveResult::Unsat),
            None => Err(SolverError::External("no status line in solver output".into())),
        }
    }

    fn model_value(&self, l: Lit) -> bool {
        self.model[l.var().index()] ^ l.is_neg()
    }
}
