//! Propositional reasoning over feature models: CNF translation, a small
//! deterministic DPLL solver with assumptions and controllable decision
//! polarity, model enumeration via blocking clauses, core/dead feature
//! classification, and DIMACS export.
//!
//! Variable numbering follows the feature ids: feature id `i` maps to DIMACS
//! variable `i + 1`. The solver is intentionally simple (counter-based state,
//! chronological backtracking); every instance in this crate is tiny.

use std::fmt::Write as _;

use thiserror::Error;

use crate::fm::{CtcKind, FeatureId, FeatureModel, GroupKind};

/// A CNF formula: 1-based variables, clauses as signed literal lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cnf {
    pub var_count: usize,
    pub clauses: Vec<Vec<i32>>,
}

impl Cnf {
    pub fn new(var_count: usize) -> Self {
        Cnf {
            var_count,
            clauses: Vec::new(),
        }
    }

    pub fn push(&mut self, clause: Vec<i32>) {
        debug_assert!(clause
            .iter()
            .all(|&l| l != 0 && l.unsigned_abs() as usize <= self.var_count));
        self.clauses.push(clause);
    }
}

/// The literal for a feature with the given activation value.
pub fn lit(id: FeatureId, value: bool) -> i32 {
    let v = (id.0 + 1) as i32;
    if value {
        v
    } else {
        -v
    }
}

/// Translates a feature model to CNF. Clause order is deterministic: the
/// root unit clause; per non-root feature in id order its child-to-parent
/// clause, then (for mandatory children) the parent-to-child clause; per
/// group in declaration order the member disjunction, then (for xor groups)
/// pairwise member exclusions; finally the cross-tree constraints in
/// document order.
pub fn cnf_from_model(fm: &FeatureModel) -> Cnf {
    let mut cnf = Cnf::new(fm.feature_count());
    cnf.push(vec![lit(fm.root(), true)]);
    for (id, f) in fm.features() {
        let Some(parent) = f.parent else { continue };
        cnf.push(vec![lit(id, false), lit(parent, true)]);
        if f.relation == crate::fm::ParentRelation::Mandatory {
            cnf.push(vec![lit(parent, false), lit(id, true)]);
        }
    }
    for group in fm.groups() {
        let mut clause = vec![lit(group.parent, false)];
        clause.extend(group.members.iter().map(|&m| lit(m, true)));
        cnf.push(clause);
        if group.kind == GroupKind::Xor {
            for (i, &a) in group.members.iter().enumerate() {
                for &b in &group.members[i + 1..] {
                    cnf.push(vec![lit(a, false), lit(b, false)]);
                }
            }
        }
    }
    for ctc in fm.constraints() {
        match ctc.kind {
            CtcKind::Requires => cnf.push(vec![lit(ctc.lhs, false), lit(ctc.rhs, true)]),
            CtcKind::Excludes => cnf.push(vec![lit(ctc.lhs, false), lit(ctc.rhs, false)]),
        }
    }
    cnf
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// How the solver picks the first value of a decision variable.
#[derive(Clone, Debug)]
pub enum Polarity {
    /// Pseudo-random per-variable polarity derived from a seed.
    Seeded(u64),
    /// Prefer the given value per variable (missing entries default false).
    Prefer(Vec<bool>),
}

impl Polarity {
    pub fn all_false(var_count: usize) -> Self {
        Polarity::Prefer(vec![false; var_count])
    }

    pub fn all_true(var_count: usize) -> Self {
        Polarity::Prefer(vec![true; var_count])
    }

    fn first_value(&self, var0: usize) -> bool {
        match self {
            Polarity::Seeded(seed) => {
                splitmix64(seed.wrapping_add((var0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
                    & 1
                    == 1
            }
            Polarity::Prefer(prefs) => prefs.get(var0).copied().unwrap_or(false),
        }
    }
}

struct Decision {
    trail_pos: usize,
    var0: usize,
    value: bool,
    flipped: bool,
}

/// Counter-based DPLL state over a normalized clause set.
struct Search {
    clauses: Vec<Vec<i32>>,
    assignment: Vec<Option<bool>>,
    sat_count: Vec<u32>,
    unassigned: Vec<u32>,
    occ_pos: Vec<Vec<u32>>,
    occ_neg: Vec<Vec<u32>>,
    trail: Vec<usize>,
    queue_head: usize,
    decisions: Vec<Decision>,
}

impl Search {
    /// Returns `None` when normalization already exposes an empty clause.
    fn new(cnf: &Cnf) -> Option<Search> {
        let mut clauses = Vec::with_capacity(cnf.clauses.len());
        for clause in &cnf.clauses {
            let mut c = clause.clone();
            c.sort_unstable();
            c.dedup();
            if c.is_empty() {
                return None;
            }
            // Drop tautological clauses (v together with -v).
            if c.iter().any(|&l| c.binary_search(&-l).is_ok()) {
                continue;
            }
            clauses.push(c);
        }
        let n = cnf.var_count;
        let mut occ_pos = vec![Vec::new(); n];
        let mut occ_neg = vec![Vec::new(); n];
        for (ci, clause) in clauses.iter().enumerate() {
            for &l in clause {
                let v = l.unsigned_abs() as usize - 1;
                if l > 0 {
                    occ_pos[v].push(ci as u32);
                } else {
                    occ_neg[v].push(ci as u32);
                }
            }
        }
        let unassigned = clauses.iter().map(|c| c.len() as u32).collect();
        let sat_count = vec![0; clauses.len()];
        Some(Search {
            clauses,
            assignment: vec![None; n],
            sat_count,
            unassigned,
            occ_pos,
            occ_neg,
            trail: Vec::new(),
            queue_head: 0,
            decisions: Vec::new(),
        })
    }

    /// Records an assignment, returning `false` on a direct contradiction.
    fn enqueue(&mut self, var0: usize, value: bool) -> bool {
        match self.assignment[var0] {
            Some(v) => v == value,
            None => {
                self.assignment[var0] = Some(value);
                self.trail.push(var0);
                true
            }
        }
    }

    /// Propagates all queued assignments; `false` signals a conflict.
    fn propagate(&mut self) -> bool {
        while self.queue_head < self.trail.len() {
            let var0 = self.trail[self.queue_head];
            self.queue_head += 1;
            let value = self.assignment[var0].expect("queued var is assigned");
            let (sat_side, false_side) = if value {
                (&self.occ_pos[var0], &self.occ_neg[var0])
            } else {
                (&self.occ_neg[var0], &self.occ_pos[var0])
            };
            for &ci in sat_side {
                self.sat_count[ci as usize] += 1;
                self.unassigned[ci as usize] -= 1;
            }
            // Collect implications first: occurrence lists cannot be borrowed
            // while enqueueing.
            let mut implied: Vec<(usize, bool)> = Vec::new();
            let mut conflict = false;
            for &ci in false_side {
                let ci = ci as usize;
                self.unassigned[ci] -= 1;
                if self.sat_count[ci] > 0 {
                    continue;
                }
                match self.unassigned[ci] {
                    0 => conflict = true,
                    1 => {
                        // The counters lag behind the queue: the remaining
                        // literal may already be enqueued with a value. If
                        // so, the clause is re-examined when that assignment
                        // is dequeued.
                        let pending = self.clauses[ci]
                            .iter()
                            .find(|&&l| self.assignment[l.unsigned_abs() as usize - 1].is_none());
                        if let Some(&l) = pending {
                            implied.push((l.unsigned_abs() as usize - 1, l > 0));
                        }
                    }
                    _ => {}
                }
            }
            if conflict {
                return false;
            }
            for (v, val) in implied {
                if !self.enqueue(v, val) {
                    return false;
                }
            }
        }
        true
    }

    fn backtrack_to(&mut self, trail_pos: usize) {
        while self.trail.len() > trail_pos {
            let idx = self.trail.len() - 1;
            let var0 = self.trail.pop().expect("trail nonempty");
            let value = self.assignment[var0].take().expect("assigned");
            // Counters were only touched for entries that went through the
            // propagation queue; queued-but-unprocessed entries just lose
            // their assignment.
            if idx < self.queue_head {
                let (sat_side, false_side) = if value {
                    (&self.occ_pos[var0], &self.occ_neg[var0])
                } else {
                    (&self.occ_neg[var0], &self.occ_pos[var0])
                };
                for &ci in sat_side {
                    self.sat_count[ci as usize] -= 1;
                    self.unassigned[ci as usize] += 1;
                }
                for &ci in false_side {
                    self.unassigned[ci as usize] += 1;
                }
            }
        }
        self.queue_head = self.queue_head.min(trail_pos);
    }

    /// Undoes decisions until one can be flipped; `false` means exhausted.
    fn resolve_conflict(&mut self) -> bool {
        while let Some(d) = self.decisions.pop() {
            self.backtrack_to(d.trail_pos);
            if !d.flipped {
                let flipped = Decision {
                    trail_pos: self.trail.len(),
                    var0: d.var0,
                    value: !d.value,
                    flipped: true,
                };
                let ok = self.enqueue(flipped.var0, flipped.value);
                debug_assert!(ok, "fresh variable after backtracking");
                self.decisions.push(flipped);
                return true;
            }
        }
        false
    }

    fn run(&mut self, assumptions: &[i32], polarity: &Polarity) -> Option<Vec<bool>> {
        // Seed the queue with unit clauses, then the assumptions.
        for ci in 0..self.clauses.len() {
            if self.clauses[ci].len() == 1 {
                let l = self.clauses[ci][0];
                if !self.enqueue(l.unsigned_abs() as usize - 1, l > 0) {
                    return None;
                }
            }
        }
        for &l in assumptions {
            if !self.enqueue(l.unsigned_abs() as usize - 1, l > 0) {
                return None;
            }
        }
        loop {
            if !self.propagate() {
                if !self.resolve_conflict() {
                    return None;
                }
                continue;
            }
            let Some(var0) = self.assignment.iter().position(Option::is_none) else {
                return Some(self.assignment.iter().map(|v| v.expect("complete")).collect());
            };
            let value = polarity.first_value(var0);
            self.decisions.push(Decision {
                trail_pos: self.trail.len(),
                var0,
                value,
                flipped: false,
            });
            let ok = self.enqueue(var0, value);
            debug_assert!(ok, "decision variable was unassigned");
        }
    }
}

/// Solves the CNF under the given assumptions. Returns a full model (indexed
/// by variable minus one) or `None` when unsatisfiable. Deterministic for a
/// fixed polarity.
pub fn solve(cnf: &Cnf, assumptions: &[i32], polarity: &Polarity) -> Option<Vec<bool>> {
    // Conflicting assumptions on the same variable never reach the search.
    Search::new(cnf)?.run(assumptions, polarity)
}

/// Convenience wrapper: satisfiability under assumptions.
pub fn satisfiable(cnf: &Cnf, assumptions: &[i32]) -> bool {
    solve(cnf, assumptions, &Polarity::Seeded(0)).is_some()
}

/// Enumerates models by repeatedly solving and adding blocking clauses over
/// the full assignment. `limit` of `None` exhausts the model space. The
/// order is deterministic for a fixed polarity.
pub fn enumerate_models(
    cnf: &Cnf,
    assumptions: &[i32],
    limit: Option<usize>,
    polarity: &Polarity,
) -> Vec<Vec<bool>> {
    let mut work = cnf.clone();
    let mut models = Vec::new();
    while limit.map(|l| models.len() < l).unwrap_or(true) {
        let Some(model) = solve(&work, assumptions, polarity) else {
            break;
        };
        let blocking: Vec<i32> = model
            .iter()
            .enumerate()
            .map(|(v, &val)| if val { -((v + 1) as i32) } else { (v + 1) as i32 })
            .collect();
        work.push(blocking);
        models.push(model);
    }
    models
}

/// Core/dead classification of every feature in a model.
#[derive(Clone, Debug)]
pub struct FeatureClassification {
    core: Vec<bool>,
    dead: Vec<bool>,
}

/// The feature model admits no valid configuration at all.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("the feature model is unsatisfiable")]
pub struct UnsatisfiableModel;

impl FeatureClassification {
    pub fn is_core(&self, id: FeatureId) -> bool {
        self.core[id.0]
    }

    pub fn is_dead(&self, id: FeatureId) -> bool {
        self.dead[id.0]
    }

    /// Neither core nor dead: the feature can be toggled in some valid
    /// configuration. Only these features admit activation decisions.
    pub fn is_real_optional(&self, id: FeatureId) -> bool {
        !self.core[id.0] && !self.dead[id.0]
    }

    pub fn core_count(&self) -> usize {
        self.core.iter().filter(|&&b| b).count()
    }

    pub fn dead_count(&self) -> usize {
        self.dead.iter().filter(|&&b| b).count()
    }

    pub fn real_optional(&self) -> Vec<FeatureId> {
        (0..self.core.len())
            .map(FeatureId)
            .filter(|&id| self.is_real_optional(id))
            .collect()
    }
}

/// Classifies each feature as core (active in every valid configuration),
/// dead (active in none), or real-optional, by satisfiability queries
/// against the model CNF.
pub fn classify_features(fm: &FeatureModel) -> Result<FeatureClassification, UnsatisfiableModel> {
    let cnf = cnf_from_model(fm);
    if !satisfiable(&cnf, &[]) {
        return Err(UnsatisfiableModel);
    }
    let mut core = vec![false; fm.feature_count()];
    let mut dead = vec![false; fm.feature_count()];
    for id in fm.ids() {
        core[id.0] = !satisfiable(&cnf, &[lit(id, false)]);
        dead[id.0] = !satisfiable(&cnf, &[lit(id, true)]);
    }
    Ok(FeatureClassification { core, dead })
}

/// Renders the CNF in DIMACS format, with one `c feature <id> <name>`
/// comment per feature mapping ids to variables.
pub fn to_dimacs(cnf: &Cnf, fm: &FeatureModel) -> String {
    let mut out = String::new();
    for (id, f) in fm.features() {
        let _ = writeln!(out, "c feature {} {}", id.0, f.name);
    }
    let _ = writeln!(out, "p cnf {} {}", cnf.var_count, cnf.clauses.len());
    for clause in &cnf.clauses {
        for &l in clause {
            let _ = write!(out, "{l} ");
        }
        let _ = writeln!(out, "0");
    }
    out
}
