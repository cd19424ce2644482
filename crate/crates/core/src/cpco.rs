//! Generation of consistency-preserving configuration operations.
//!
//! For every feature decision, the sub-diagram reachable from it is folded
//! into a single *variability-based rule*: one node per reached decision,
//! guarded by a presence condition over rule variables (the rule root plus
//! one xor-group `OR_i` per or-node with alternatives `O_i_j`). Constraints
//! over those variables rule out contradictory or duplicated selections:
//!
//! - *or-implications* force a group on whenever its attaching node is
//!   present;
//! - *mutual exclusions* forbid selecting both polarities of one feature;
//! - *or-overlaps* canonicalize the choice when two groups can both
//!   re-select a decision that is already present;
//! - *cycle entries* require every group on a cycle of the or-implication
//!   graph to be justified by a path from outside the cycle.
//!
//! Rule variables that can never be true are removed, and the rule is
//! *flattened* into concrete operations by enumerating the models of its
//! CNF: each model selects the nodes whose presence condition holds, which
//! yields one executable variant (a set of feature decisions plus a
//! precondition on the root feature's current state).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::fad::{FeatureActivationDiagram, FeatureDecision};
use crate::fm::{Configuration, FeatureId, FeatureModel};
use crate::sat::{
    cnf_from_model, enumerate_models, lit, satisfiable, solve, Cnf, FeatureClassification,
    Polarity,
};

/// A propositional variable of a rule: the always-present root, a group
/// `OR_i`, or one of its alternatives `O_i_j`. Indices are zero-based
/// internally and rendered one-based.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum RuleVar {
    Root,
    Group(usize),
    Alt(usize, usize),
}

impl fmt::Display for RuleVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleVar::Root => write!(f, "root"),
            RuleVar::Group(g) => write!(f, "OR_{}", g + 1),
            RuleVar::Alt(g, a) => write!(f, "O_{}_{}", g + 1, a + 1),
        }
    }
}

impl FromStr for RuleVar {
    type Err = SuiteFormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SuiteFormatError(format!("invalid rule variable `{s}`"));
        if s == "root" {
            return Ok(RuleVar::Root);
        }
        let one_based = |part: &str| part.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(bad);
        if let Some(rest) = s.strip_prefix("OR_") {
            return Ok(RuleVar::Group(one_based(rest)? - 1));
        }
        if let Some(rest) = s.strip_prefix("O_") {
            let (g, a) = rest.split_once('_').ok_or_else(bad)?;
            return Ok(RuleVar::Alt(one_based(g)? - 1, one_based(a)? - 1));
        }
        Err(bad())
    }
}

/// A presence condition: a disjunction of rule variables. The condition of
/// the root node is `{root}`, which always holds.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Pc(pub BTreeSet<RuleVar>);

impl Pc {
    pub fn of(vars: impl IntoIterator<Item = RuleVar>) -> Self {
        Pc(vars.into_iter().collect())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn retain_live(&mut self, dead: &BTreeSet<RuleVar>) {
        self.0.retain(|v| !dead.contains(v));
    }
}

impl fmt::Display for Pc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.len() {
            0 => write!(f, "false"),
            1 => write!(f, "{}", self.0.iter().next().unwrap()),
            _ => {
                write!(f, "(or")?;
                for v in &self.0 {
                    write!(f, " {v}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl FromStr for Pc {
    type Err = SuiteFormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "false" {
            return Ok(Pc::default());
        }
        let inner = match s.strip_prefix("(or ") {
            Some(rest) => rest
                .strip_suffix(')')
                .ok_or_else(|| SuiteFormatError(format!("unterminated disjunction `{s}`")))?,
            None => s,
        };
        let vars = inner
            .split_whitespace()
            .map(RuleVar::from_str)
            .collect::<Result<BTreeSet<_>, _>>()?;
        if vars.is_empty() {
            return Err(SuiteFormatError(format!("empty presence condition `{s}`")));
        }
        Ok(Pc(vars))
    }
}

/// One node of a rule: a feature decision guarded by a presence condition.
/// Only the root node checks the feature's previous state.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RuleNode {
    pub feature: FeatureId,
    pub new_value: bool,
    pub old_value: Option<bool>,
    pub pc: Pc,
}

/// One alternative of a group; `index` is the stable position used for the
/// `O_i_j` name and survives removal of sibling alternatives.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RuleAlternative {
    pub index: usize,
    pub target: usize,
}

/// An xor-group of alternatives, one per or-node in the reached
/// sub-diagram. `index` is the stable position used for the `OR_i` name.
/// `attacher` is the node whose presence forces a choice from the group;
/// it becomes `None` when that node is removed as never-present (the group
/// then lingers without an implication towards it).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RuleGroup {
    pub index: usize,
    pub attacher: Option<usize>,
    pub alternatives: Vec<RuleAlternative>,
}

/// A constraint over rule variables.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum RuleConstraint {
    /// Whenever the attaching node is present, the group must be decided.
    OrImplication { antecedent: Pc, group: usize },
    /// Both polarities of one feature can never be present together.
    MutualExclusion {
        feature: FeatureId,
        positive: Pc,
        negative: Pc,
    },
    /// Once `earlier` has placed a decision, a later group containing an
    /// alternative that re-selects the same decision must choose it.
    OrOverlap {
        earlier: RuleVar,
        group: usize,
        alternative: RuleVar,
    },
    /// A group on a cycle of the or-implication graph may only be decided
    /// if one of these outside entries is present.
    CycleEntry { group: usize, entries: Pc },
}

impl fmt::Display for RuleConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleConstraint::OrImplication { antecedent, group } => {
                write!(f, "(implies {antecedent} {})", RuleVar::Group(*group))
            }
            RuleConstraint::MutualExclusion {
                feature,
                positive,
                negative,
            } => write!(f, "(mutex F{feature} {positive} {negative})"),
            RuleConstraint::OrOverlap {
                earlier,
                group,
                alternative,
            } => write!(
                f,
                "(implies (and {earlier} {}) {alternative})",
                RuleVar::Group(*group)
            ),
            RuleConstraint::CycleEntry { group, entries } => {
                write!(f, "(implies {} {entries})", RuleVar::Group(*group))
            }
        }
    }
}

/// A variability-based rule: all ways of executing one feature decision,
/// folded into a guarded node set.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct VbRule {
    /// `Act_<feature>` or `De_<feature>`.
    pub name: String,
    pub origin: FeatureDecision,
    /// Node 0 is the root decision.
    pub nodes: Vec<RuleNode>,
    pub groups: Vec<RuleGroup>,
    pub constraints: Vec<RuleConstraint>,
    /// False when the constraints admit no configuration at all; such a
    /// rule flattens to no variants.
    pub satisfiable: bool,
}

impl VbRule {
    pub fn node_of(&self, d: FeatureDecision) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.feature == d.feature && n.new_value == d.activate)
    }
}

/// One executable variant of a rule: a set of feature decisions applied
/// together, guarded by the root feature's previous state.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FlatRule {
    /// Name of the rule this variant was flattened from.
    pub origin: String,
    /// The decision the variant executes.
    pub root: FeatureDecision,
    /// All decisions, sorted by (feature, polarity); contains `root`.
    pub decisions: Vec<FeatureDecision>,
}

impl FlatRule {
    /// The state the root feature must currently have.
    pub fn precondition(&self) -> (FeatureId, bool) {
        (self.root.feature, !self.root.activate)
    }
}

/// Applies a flat rule, returning `None` when the root feature is already
/// in the target state (the variant does not apply — a normal signal, not
/// an error).
pub fn apply_flat_rule(rule: &FlatRule, c: &Configuration) -> Option<Configuration> {
    let (feature, required) = rule.precondition();
    if c.is_active(feature) != required {
        return None;
    }
    let mut out = c.clone();
    for d in &rule.decisions {
        out.set(d.feature, d.activate);
    }
    Some(out)
}

/// Per-rule generation record. `millis`/`variants` are `None` for rules
/// skipped because the time budget ran out.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GenerationLogEntry {
    pub rule: String,
    pub millis: Option<u64>,
    pub variants: Option<usize>,
}

impl fmt::Display for GenerationLogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.millis, self.variants) {
            (Some(ms), Some(n)) => write!(f, "{} {} ms {} variants", self.rule, ms, n),
            _ => write!(f, "{} skipped (time budget exhausted)", self.rule),
        }
    }
}

/// A full set of operations for a model: one rule and its flat variants per
/// (real-optional feature × polarity), plus the generation log. The log and
/// the truncation flag are reports, not data: serialization covers rules
/// and variants only, so regenerating a suite is byte-reproducible.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct CpcoSuite {
    pub rules: BTreeMap<FeatureDecision, VbRule>,
    pub variants: BTreeMap<FeatureDecision, Vec<FlatRule>>,
    pub log: Vec<GenerationLogEntry>,
    pub truncated: bool,
}

impl CpcoSuite {
    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn variant_count(&self) -> usize {
        self.variants.values().map(Vec::len).sum()
    }

    pub fn render_log(&self) -> String {
        let mut out = String::new();
        for entry in &self.log {
            out.push_str(&entry.to_string());
            out.push('\n');
        }
        out
    }
}

/// Toggles for the rule simplification stages; all on by default.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct RuleOptions {
    pub or_overlap: bool,
    pub cycle_entries: bool,
    pub remove_dead: bool,
}

impl Default for RuleOptions {
    fn default() -> Self {
        RuleOptions {
            or_overlap: true,
            cycle_entries: true,
            remove_dead: true,
        }
    }
}

/// Generates rules and flattens them against a fixed model, classification,
/// and diagram.
pub struct RuleGenerator<'a> {
    fm: &'a FeatureModel,
    cls: &'a FeatureClassification,
    fad: &'a FeatureActivationDiagram,
    model_cnf: Cnf,
    options: RuleOptions,
}

/// The sub-diagram reached from a rule's root decision, with rule-local
/// node indices. Kept separate from [`VbRule`]: edges matter only while
/// deriving presence conditions and constraints.
struct Traversal {
    decisions: Vec<FeatureDecision>,
    and_edges: Vec<Vec<usize>>,
    /// Group attached at each node, if any.
    group_of: Vec<Option<usize>>,
    /// Per group: attaching node and alternative target nodes.
    groups: Vec<(usize, Vec<usize>)>,
}

pub fn rule_name(fm: &FeatureModel, d: FeatureDecision) -> String {
    format!(
        "{}_{}",
        if d.activate { "Act" } else { "De" },
        fm.name_of(d.feature)
    )
}

pub fn decision_label(fm: &FeatureModel, d: FeatureDecision) -> String {
    d.label(fm)
}

pub fn parse_decision_label(fm: &FeatureModel, s: &str) -> Result<FeatureDecision, SuiteFormatError> {
    let bad = || SuiteFormatError(format!("invalid decision label `{s}`"));
    let (name, sign) = s.split_at(s.len().checked_sub(1).ok_or_else(bad)?);
    let activate = match sign {
        "+" => true,
        "-" => false,
        _ => return Err(bad()),
    };
    let feature = fm.id_of(name).ok_or_else(bad)?;
    Ok(FeatureDecision::new(feature, activate))
}

impl<'a> RuleGenerator<'a> {
    pub fn new(
        fm: &'a FeatureModel,
        cls: &'a FeatureClassification,
        fad: &'a FeatureActivationDiagram,
    ) -> Self {
        Self::with_options(fm, cls, fad, RuleOptions::default())
    }

    pub fn with_options(
        fm: &'a FeatureModel,
        cls: &'a FeatureClassification,
        fad: &'a FeatureActivationDiagram,
        options: RuleOptions,
    ) -> Self {
        RuleGenerator {
            fm,
            cls,
            fad,
            model_cnf: cnf_from_model(fm),
            options,
        }
    }

    /// Generates the rule for one decision: traversal, presence conditions,
    /// constraints, then dead-variable removal (per the active options).
    pub fn generate_vb_rule(&self, d: FeatureDecision) -> VbRule {
        let trav = self.traverse(d);
        let pcs = compute_pcs(&trav);

        let mut constraints = Vec::new();
        for (g, (attacher, _)) in trav.groups.iter().enumerate() {
            constraints.push(RuleConstraint::OrImplication {
                antecedent: pcs[*attacher].clone(),
                group: g,
            });
        }
        constraints.extend(mutual_exclusions(&trav, &pcs));
        if self.options.or_overlap {
            constraints.extend(or_overlaps(&trav));
        }
        if self.options.cycle_entries {
            constraints.extend(cycle_entries(&trav));
        }

        let nodes = trav
            .decisions
            .iter()
            .zip(&pcs)
            .enumerate()
            .map(|(i, (&decision, pc))| RuleNode {
                feature: decision.feature,
                new_value: decision.activate,
                old_value: (i == 0).then_some(!d.activate),
                pc: pc.clone(),
            })
            .collect();
        let groups = trav
            .groups
            .iter()
            .enumerate()
            .map(|(g, (attacher, targets))| RuleGroup {
                index: g,
                attacher: Some(*attacher),
                alternatives: targets
                    .iter()
                    .enumerate()
                    .map(|(j, &target)| RuleAlternative { index: j, target })
                    .collect(),
            })
            .collect();

        let rule = VbRule {
            name: rule_name(self.fm, d),
            origin: d,
            nodes,
            groups,
            constraints,
            satisfiable: true,
        };
        if self.options.remove_dead {
            self.remove_dead_rule_features(rule)
        } else {
            rule
        }
    }

    fn traverse(&self, d: FeatureDecision) -> Traversal {
        let root = self
            .fad
            .node_of(d)
            .expect("rules are generated for diagram decisions only");
        let mut trav = Traversal {
            decisions: Vec::new(),
            and_edges: Vec::new(),
            group_of: Vec::new(),
            groups: Vec::new(),
        };
        let mut index = HashMap::new();
        self.discover(root, &mut trav, &mut index);
        trav
    }

    fn discover(
        &self,
        fad_node: usize,
        trav: &mut Traversal,
        index: &mut HashMap<usize, usize>,
    ) -> usize {
        if let Some(&i) = index.get(&fad_node) {
            return i;
        }
        let i = trav.decisions.len();
        index.insert(fad_node, i);
        trav.decisions.push(self.fad.node(fad_node).decision);
        trav.and_edges.push(Vec::new());
        trav.group_of.push(None);
        for &t in &self.fad.node(fad_node).and_edges {
            let ti = self.discover(t, trav, index);
            trav.and_edges[i].push(ti);
        }
        if let Some(or) = self.fad.node(fad_node).or_edge {
            let g = trav.groups.len();
            trav.groups.push((i, Vec::new()));
            trav.group_of[i] = Some(g);
            for &alt in &self.fad.or_node(or).alternatives {
                let ti = self.discover(alt, trav, index);
                trav.groups[g].1.push(ti);
            }
        }
        i
    }

    /// Removes rule variables that no configuration of the rule can set,
    /// pruning presence conditions, dropping now-unreachable nodes and
    /// alternatives, and filtering constraints accordingly. Group and
    /// alternative names keep their original indices.
    pub fn remove_dead_rule_features(&self, mut rule: VbRule) -> VbRule {
        let (cnf, vars) = rule_cnf(&rule);
        let polarity = Polarity::all_false(cnf.var_count);
        if solve(&cnf, &[], &polarity).is_none() {
            rule.satisfiable = false;
            return rule;
        }
        let dead: BTreeSet<RuleVar> = vars
            .iter()
            .filter(|&(&v, &x)| v != RuleVar::Root && solve(&cnf, &[x], &polarity).is_none())
            .map(|(&v, _)| v)
            .collect();
        if dead.is_empty() {
            return rule;
        }

        let mut node_map = vec![None; rule.nodes.len()];
        let mut nodes = Vec::new();
        for (i, mut node) in rule.nodes.into_iter().enumerate() {
            node.pc.retain_live(&dead);
            if !node.pc.is_empty() {
                node_map[i] = Some(nodes.len());
                nodes.push(node);
            }
        }
        let remap = |i: usize| node_map[i].expect("live rule variables keep their nodes");

        let groups: Vec<RuleGroup> = rule
            .groups
            .into_iter()
            .filter(|g| !dead.contains(&RuleVar::Group(g.index)))
            .map(|g| RuleGroup {
                index: g.index,
                attacher: g.attacher.and_then(|i| node_map[i]),
                alternatives: g
                    .alternatives
                    .into_iter()
                    .filter(|a| !dead.contains(&RuleVar::Alt(g.index, a.index)))
                    .map(|a| RuleAlternative {
                        index: a.index,
                        target: remap(a.target),
                    })
                    .collect(),
            })
            .collect();

        let constraints = rule
            .constraints
            .into_iter()
            .filter_map(|c| match c {
                RuleConstraint::OrImplication {
                    mut antecedent,
                    group,
                } => {
                    if dead.contains(&RuleVar::Group(group)) {
                        return None;
                    }
                    antecedent.retain_live(&dead);
                    (!antecedent.is_empty())
                        .then_some(RuleConstraint::OrImplication { antecedent, group })
                }
                RuleConstraint::MutualExclusion {
                    feature,
                    mut positive,
                    mut negative,
                } => {
                    positive.retain_live(&dead);
                    negative.retain_live(&dead);
                    (!positive.is_empty() && !negative.is_empty()).then_some(
                        RuleConstraint::MutualExclusion {
                            feature,
                            positive,
                            negative,
                        },
                    )
                }
                RuleConstraint::OrOverlap {
                    earlier,
                    group,
                    alternative,
                } => (!dead.contains(&earlier)
                    && !dead.contains(&RuleVar::Group(group))
                    && !dead.contains(&alternative))
                .then_some(RuleConstraint::OrOverlap {
                    earlier,
                    group,
                    alternative,
                }),
                RuleConstraint::CycleEntry { group, mut entries } => {
                    if dead.contains(&RuleVar::Group(group)) {
                        return None;
                    }
                    entries.retain_live(&dead);
                    debug_assert!(
                        !entries.is_empty(),
                        "a live group on a cycle keeps at least one live entry"
                    );
                    Some(RuleConstraint::CycleEntry { group, entries })
                }
            })
            .collect();

        VbRule {
            name: rule.name,
            origin: rule.origin,
            nodes,
            groups,
            constraints,
            satisfiable: true,
        }
    }

    /// Flattens a rule into concrete variants by enumerating up to `limit`
    /// models of its CNF with seeded polarity. Decisions whose effect is
    /// already guaranteed whenever the rule applies are pruned; variants
    /// with identical decision sets are collapsed, keeping the first. An
    /// unsatisfiable rule yields no variants.
    pub fn flatten(&self, rule: &VbRule, limit: usize, seed: u64) -> Vec<FlatRule> {
        assert!(limit >= 1, "flatten needs room for at least one model");
        if !rule.satisfiable {
            return Vec::new();
        }
        let (cnf, vars) = rule_cnf(rule);
        let models = enumerate_models(&cnf, &[], Some(limit), &Polarity::Seeded(seed));
        let mut cache = HashMap::new();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for model in models {
            let holds = |pc: &Pc| pc.0.iter().any(|v| model[(vars[v] - 1) as usize]);
            let mut decisions: Vec<FeatureDecision> = rule
                .nodes
                .iter()
                .filter(|n| holds(&n.pc))
                .map(|n| FeatureDecision::new(n.feature, n.new_value))
                .collect();
            decisions
                .retain(|&d| d.feature == rule.origin.feature || !self.entailed(&mut cache, rule.origin, d));
            decisions.sort();
            if seen.insert(decisions.clone()) {
                out.push(FlatRule {
                    origin: rule.name.clone(),
                    root: rule.origin,
                    decisions,
                });
            }
        }
        out
    }

    /// True when every valid configuration in which `origin` applies
    /// already has `d.feature` at the decided value, making the decision a
    /// no-op.
    fn entailed(
        &self,
        cache: &mut HashMap<FeatureDecision, bool>,
        origin: FeatureDecision,
        d: FeatureDecision,
    ) -> bool {
        *cache.entry(d).or_insert_with(|| {
            !satisfiable(
                &self.model_cnf,
                &[
                    lit(origin.feature, !origin.activate),
                    lit(d.feature, !d.activate),
                ],
            )
        })
    }

    /// The no-op pruning applied by [`Self::flatten`], exposed so decision
    /// sets obtained by other means can be compared on equal footing.
    pub fn prune_entailed(
        &self,
        origin: FeatureDecision,
        decisions: &BTreeSet<FeatureDecision>,
    ) -> BTreeSet<FeatureDecision> {
        let mut cache = HashMap::new();
        decisions
            .iter()
            .copied()
            .filter(|&d| d.feature == origin.feature || !self.entailed(&mut cache, origin, d))
            .collect()
    }

    /// Generates rules and variants for every real-optional feature in
    /// (feature, deactivate-then-activate) order. Once `budget` is spent no
    /// new rules are started; skipped rules are logged and the suite is
    /// marked truncated.
    pub fn generate_suite(&self, limit: usize, seed: u64, budget: Duration) -> CpcoSuite {
        let start = Instant::now();
        let mut suite = CpcoSuite::default();
        for feature in self.cls.real_optional() {
            for activate in [false, true] {
                let d = FeatureDecision { feature, activate };
                if start.elapsed() > budget {
                    suite.truncated = true;
                    suite.log.push(GenerationLogEntry {
                        rule: rule_name(self.fm, d),
                        millis: None,
                        variants: None,
                    });
                    continue;
                }
                let t = Instant::now();
                let rule = self.generate_vb_rule(d);
                let variants = self.flatten(&rule, limit, seed);
                suite.log.push(GenerationLogEntry {
                    rule: rule.name.clone(),
                    millis: Some(t.elapsed().as_millis() as u64),
                    variants: Some(variants.len()),
                });
                suite.rules.insert(d, rule);
                suite.variants.insert(d, variants);
            }
        }
        suite
    }
}

/// Least fixpoint of the presence conditions: the root node holds `root`,
/// each alternative target holds its `O_i_j`, and conditions flow along
/// and-edges (a node inherits every way of arriving at its sources).
fn compute_pcs(trav: &Traversal) -> Vec<Pc> {
    let mut pcs = vec![Pc::default(); trav.decisions.len()];
    pcs[0].0.insert(RuleVar::Root);
    for (g, (_, targets)) in trav.groups.iter().enumerate() {
        for (j, &t) in targets.iter().enumerate() {
            pcs[t].0.insert(RuleVar::Alt(g, j));
        }
    }
    let mut changed = true;
    while changed {
        changed = false;
        for u in 0..trav.decisions.len() {
            for &w in &trav.and_edges[u] {
                let add: Vec<RuleVar> = pcs[u].0.difference(&pcs[w].0).copied().collect();
                if !add.is_empty() {
                    pcs[w].0.extend(add);
                    changed = true;
                }
            }
        }
    }
    // The root variable is unconditionally true, so it absorbs any other
    // way of arriving at a node.
    for pc in &mut pcs {
        if pc.0.contains(&RuleVar::Root) {
            *pc = Pc::of([RuleVar::Root]);
        }
    }
    pcs
}

fn mutual_exclusions(trav: &Traversal, pcs: &[Pc]) -> Vec<RuleConstraint> {
    let mut by_feature: BTreeMap<FeatureId, [Option<usize>; 2]> = BTreeMap::new();
    for (i, d) in trav.decisions.iter().enumerate() {
        by_feature.entry(d.feature).or_default()[usize::from(d.activate)] = Some(i);
    }
    by_feature
        .into_iter()
        .filter_map(|(feature, [neg, pos])| {
            Some(RuleConstraint::MutualExclusion {
                feature,
                positive: pcs[pos?].clone(),
                negative: pcs[neg?].clone(),
            })
        })
        .collect()
}

/// For every node that is the direct target of alternatives from several
/// groups, each pair is correlated once: selecting the earlier-discovered
/// group's alternative forces any later group to re-select the same node
/// rather than duplicate it through a different choice.
fn or_overlaps(trav: &Traversal) -> Vec<RuleConstraint> {
    let mut arrivals: Vec<Vec<(usize, usize)>> = vec![Vec::new(); trav.decisions.len()];
    for (g, (_, targets)) in trav.groups.iter().enumerate() {
        for (j, &t) in targets.iter().enumerate() {
            arrivals[t].push((g, j));
        }
    }
    let mut out = Vec::new();
    for alts in &arrivals {
        for (x, &(g1, j1)) in alts.iter().enumerate() {
            for &(g2, j2) in &alts[x + 1..] {
                debug_assert_ne!(g1, g2, "alternatives of one group have distinct targets");
                out.push(RuleConstraint::OrOverlap {
                    earlier: RuleVar::Alt(g1, j1),
                    group: g2,
                    alternative: RuleVar::Alt(g2, j2),
                });
            }
        }
    }
    out
}

/// The or-implication graph and the cycle-entry computation over it.
///
/// Nodes are the rule root, groups, and alternatives. The root and each
/// alternative point to every group whose attaching node their region (the
/// and-closure of the root node resp. the alternative's target) contains;
/// each group points to its alternatives. A depth-first traversal records,
/// per group found on a cycle, (add, delete) pairs whose resolution
/// `⋃adds − ⋃deletes` is the set of entries that can justify the group from
/// outside the cycle.
/// Per cycle-group record: the decisions added on the cycle path and the
/// alternative deleted by it, if any.
type EntryEvidence = (BTreeSet<RuleVar>, Option<RuleVar>);

struct CycleFinder<'t> {
    trav: &'t Traversal,
    follow_cache: HashMap<usize, Vec<usize>>,
    pre_alternatives: BTreeMap<usize, BTreeSet<RuleVar>>,
    entries: BTreeMap<usize, Vec<EntryEvidence>>,
    visited: BTreeSet<RuleVar>,
    stack: Vec<usize>,
}

fn cycle_entries(trav: &Traversal) -> Vec<RuleConstraint> {
    if trav.groups.is_empty() {
        return Vec::new();
    }
    let mut finder = CycleFinder {
        trav,
        follow_cache: HashMap::new(),
        pre_alternatives: BTreeMap::new(),
        entries: BTreeMap::new(),
        visited: BTreeSet::new(),
        stack: Vec::new(),
    };
    finder.index_incoming_edges();
    finder.recurse(RuleVar::Root, None);
    finder
        .entries
        .iter()
        .map(|(&group, tuples)| {
            let mut effective: BTreeSet<RuleVar> =
                tuples.iter().flat_map(|(add, _)| add.iter().copied()).collect();
            for (_, del) in tuples {
                if let Some(d) = del {
                    effective.remove(d);
                }
            }
            RuleConstraint::CycleEntry {
                group,
                entries: Pc(effective),
            }
        })
        .collect()
}

impl CycleFinder<'_> {
    /// Groups attached anywhere in the and-closure of `node`.
    fn follow_ors(&mut self, node: usize) -> Vec<usize> {
        if let Some(cached) = self.follow_cache.get(&node) {
            return cached.clone();
        }
        let mut seen = BTreeSet::new();
        let mut groups = BTreeSet::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if let Some(g) = self.trav.group_of[n] {
                groups.insert(g);
            }
            stack.extend(self.trav.and_edges[n].iter().copied());
        }
        let out: Vec<usize> = groups.into_iter().collect();
        self.follow_cache.insert(node, out.clone());
        out
    }

    fn index_incoming_edges(&mut self) {
        for g in 0..self.trav.groups.len() {
            self.pre_alternatives.insert(g, BTreeSet::new());
        }
        for g in self.follow_ors(0) {
            self.pre_alternatives.get_mut(&g).unwrap().insert(RuleVar::Root);
        }
        let groups: Vec<Vec<usize>> = self.trav.groups.iter().map(|(_, t)| t.clone()).collect();
        for (gi, targets) in groups.iter().enumerate() {
            for (j, &t) in targets.iter().enumerate() {
                for g in self.follow_ors(t) {
                    self.pre_alternatives
                        .get_mut(&g)
                        .unwrap()
                        .insert(RuleVar::Alt(gi, j));
                }
            }
        }
    }

    fn edges(&mut self, v: RuleVar) -> Vec<RuleVar> {
        match v {
            RuleVar::Root => self.follow_ors(0).into_iter().map(RuleVar::Group).collect(),
            RuleVar::Group(g) => (0..self.trav.groups[g].1.len())
                .map(|j| RuleVar::Alt(g, j))
                .collect(),
            RuleVar::Alt(g, j) => {
                let target = self.trav.groups[g].1[j];
                self.follow_ors(target).into_iter().map(RuleVar::Group).collect()
            }
        }
    }

    /// Returns the groups whose cycles are still open below this node;
    /// records entry bookkeeping on the way back up.
    fn recurse(&mut self, node: RuleVar, coming_from: Option<RuleVar>) -> BTreeSet<usize> {
        if self.visited.contains(&node) {
            return match node {
                RuleVar::Group(g) if self.stack.contains(&g) => {
                    let add = self.pre_alternatives[&g].clone();
                    self.entries.entry(g).or_default().push((add, coming_from));
                    BTreeSet::from([g])
                }
                _ => BTreeSet::new(),
            };
        }
        self.visited.insert(node);
        match node {
            RuleVar::Alt(..) => {
                // An alternative inside the scope of an already-recorded
                // cycle cannot serve as an outside entry to it.
                let recorded: Vec<usize> = self
                    .stack
                    .iter()
                    .copied()
                    .filter(|g| self.entries.contains_key(g))
                    .collect();
                for g in recorded {
                    self.entries.get_mut(&g).unwrap().push((BTreeSet::new(), Some(node)));
                }
            }
            RuleVar::Group(g) => self.stack.push(g),
            RuleVar::Root => {}
        }

        let mut open = BTreeSet::new();
        for next in self.edges(node) {
            open.extend(self.recurse(next, Some(node)));
        }

        if let RuleVar::Group(g) = node {
            self.stack.pop();
            if let Some(own) = self.entries.get(&g).cloned() {
                // This group closes a cycle: everything recorded for it
                // also describes entries for cycles still open further up.
                open.remove(&g);
                for &f in &open {
                    let bucket = self.entries.entry(f).or_default();
                    bucket.extend(own.iter().cloned());
                    bucket.push((BTreeSet::new(), coming_from));
                }
            } else {
                // A pass-through group on someone else's cycle: anything
                // arriving here (other than the edge we used) enters it.
                let pre = self.pre_alternatives[&g].clone();
                for &f in &open {
                    self.entries
                        .entry(f)
                        .or_default()
                        .push((pre.clone(), coming_from));
                }
            }
        }
        open
    }
}

/// Translates a rule to CNF. Variables: root first, then each group
/// followed by its alternatives, in stable index order. Clauses: root unit;
/// per group the member→group implications, the at-least-one, and the
/// pairwise at-most-one; then the rule constraints in order.
fn rule_cnf(rule: &VbRule) -> (Cnf, BTreeMap<RuleVar, i32>) {
    let mut vars = BTreeMap::new();
    let mut next = 1;
    vars.insert(RuleVar::Root, next);
    next += 1;
    for g in &rule.groups {
        vars.insert(RuleVar::Group(g.index), next);
        next += 1;
        for a in &g.alternatives {
            vars.insert(RuleVar::Alt(g.index, a.index), next);
            next += 1;
        }
    }

    let mut cnf = Cnf::new((next - 1) as usize);
    cnf.push(vec![vars[&RuleVar::Root]]);
    for g in &rule.groups {
        let gv = vars[&RuleVar::Group(g.index)];
        let alts: Vec<i32> = g
            .alternatives
            .iter()
            .map(|a| vars[&RuleVar::Alt(g.index, a.index)])
            .collect();
        for &a in &alts {
            cnf.push(vec![-a, gv]);
        }
        let mut at_least_one = vec![-gv];
        at_least_one.extend(&alts);
        cnf.push(at_least_one);
        for (x, &a) in alts.iter().enumerate() {
            for &b in &alts[x + 1..] {
                cnf.push(vec![-a, -b]);
            }
        }
    }
    for c in &rule.constraints {
        match c {
            RuleConstraint::OrImplication { antecedent, group } => {
                let gv = vars[&RuleVar::Group(*group)];
                for p in &antecedent.0 {
                    cnf.push(vec![-vars[p], gv]);
                }
            }
            RuleConstraint::MutualExclusion {
                positive, negative, ..
            } => {
                for p in &positive.0 {
                    for n in &negative.0 {
                        cnf.push(vec![-vars[p], -vars[n]]);
                    }
                }
            }
            RuleConstraint::OrOverlap {
                earlier,
                group,
                alternative,
            } => {
                cnf.push(vec![
                    -vars[earlier],
                    -vars[&RuleVar::Group(*group)],
                    vars[alternative],
                ]);
            }
            RuleConstraint::CycleEntry { group, entries } => {
                let mut clause = vec![-vars[&RuleVar::Group(*group)]];
                clause.extend(entries.0.iter().map(|e| vars[e]));
                cnf.push(clause);
            }
        }
    }
    (cnf, vars)
}

/// Raised when a suite document does not parse back.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid suite document: {0}")]
pub struct SuiteFormatError(pub String);

impl CpcoSuite {
    /// Serializes rules and variants as a deterministic JSON document.
    /// Presence conditions and constraints use a prefix boolean syntax;
    /// decisions are `<feature><+|->` labels.
    pub fn to_json(&self, fm: &FeatureModel) -> String {
        let mut rules = Map::new();
        for rule in self.rules.values() {
            rules.insert(rule.name.clone(), rule_to_json(rule, fm));
        }
        let mut variants = Map::new();
        for (d, flats) in &self.variants {
            let name = self.rules[d].name.clone();
            let list: Vec<Value> = flats.iter().map(|f| flat_to_json(f, fm)).collect();
            variants.insert(name, Value::Array(list));
        }
        let doc = json!({ "rules": rules, "variants": variants });
        let mut out = serde_json::to_string_pretty(&doc).expect("plain JSON tree");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str, fm: &FeatureModel) -> Result<CpcoSuite, SuiteFormatError> {
        let doc: Value =
            serde_json::from_str(text).map_err(|e| SuiteFormatError(e.to_string()))?;
        let rules_obj = expect_object(&doc, "rules")?;
        let variants_obj = expect_object(&doc, "variants")?;

        let mut suite = CpcoSuite::default();
        let mut by_name = BTreeMap::new();
        for (name, value) in rules_obj {
            let rule = rule_from_json(value, fm)?;
            if rule.name != *name {
                return Err(SuiteFormatError(format!(
                    "rule `{}` filed under key `{name}`",
                    rule.name
                )));
            }
            by_name.insert(name.clone(), rule.origin);
            suite.rules.insert(rule.origin, rule);
        }
        for (name, value) in variants_obj {
            let &origin = by_name
                .get(name)
                .ok_or_else(|| SuiteFormatError(format!("variants for unknown rule `{name}`")))?;
            let list = value
                .as_array()
                .ok_or_else(|| SuiteFormatError(format!("variants of `{name}` not a list")))?;
            let flats = list
                .iter()
                .map(|v| flat_from_json(v, fm))
                .collect::<Result<Vec<_>, _>>()?;
            suite.variants.insert(origin, flats);
        }
        if suite.variants.len() != suite.rules.len() {
            return Err(SuiteFormatError(
                "every rule needs a variants entry".to_string(),
            ));
        }
        Ok(suite)
    }
}

fn expect_object<'v>(
    doc: &'v Value,
    key: &str,
) -> Result<&'v Map<String, Value>, SuiteFormatError> {
    doc.get(key)
        .and_then(Value::as_object)
        .ok_or_else(|| SuiteFormatError(format!("missing `{key}` object")))
}

fn rule_to_json(rule: &VbRule, fm: &FeatureModel) -> Value {
    let nodes: Vec<Value> = rule
        .nodes
        .iter()
        .map(|n| {
            let mut obj = Map::new();
            obj.insert("feature".into(), json!(n.feature.0));
            obj.insert("attribute".into(), json!("active"));
            obj.insert("new".into(), json!(n.new_value));
            if let Some(old) = n.old_value {
                obj.insert("old".into(), json!(old));
            }
            obj.insert("pc".into(), json!(n.pc.to_string()));
            Value::Object(obj)
        })
        .collect();
    let node_label =
        |i: usize| decision_label(fm, FeatureDecision::new(rule.nodes[i].feature, rule.nodes[i].new_value));
    let groups: Vec<Value> = rule
        .groups
        .iter()
        .map(|g| {
            let alternatives: Vec<Value> = g
                .alternatives
                .iter()
                .map(|a| {
                    json!({
                        "name": RuleVar::Alt(g.index, a.index).to_string(),
                        "target": node_label(a.target),
                    })
                })
                .collect();
            let mut obj = Map::new();
            obj.insert("name".into(), json!(RuleVar::Group(g.index).to_string()));
            if let Some(attacher) = g.attacher {
                obj.insert("attacher".into(), json!(node_label(attacher)));
            }
            obj.insert("alternatives".into(), Value::Array(alternatives));
            Value::Object(obj)
        })
        .collect();
    let constraints: Vec<Value> = rule.constraints.iter().map(constraint_to_json).collect();
    json!({
        "name": rule.name,
        "origin": decision_label(fm, rule.origin),
        "nodes": nodes,
        "groups": groups,
        "constraints": constraints,
        "satisfiable": rule.satisfiable,
    })
}

fn constraint_to_json(c: &RuleConstraint) -> Value {
    match c {
        RuleConstraint::OrImplication { antecedent, group } => json!({
            "kind": "or-implication",
            "antecedent": antecedent.to_string(),
            "group": RuleVar::Group(*group).to_string(),
        }),
        RuleConstraint::MutualExclusion {
            feature,
            positive,
            negative,
        } => json!({
            "kind": "mutual-exclusion",
            "feature": feature.0,
            "positive": positive.to_string(),
            "negative": negative.to_string(),
        }),
        RuleConstraint::OrOverlap {
            earlier,
            group,
            alternative,
        } => json!({
            "kind": "or-overlap",
            "earlier": earlier.to_string(),
            "group": RuleVar::Group(*group).to_string(),
            "alternative": alternative.to_string(),
        }),
        RuleConstraint::CycleEntry { group, entries } => json!({
            "kind": "cycle-entry",
            "group": RuleVar::Group(*group).to_string(),
            "entries": entries.to_string(),
        }),
    }
}

fn rule_from_json(value: &Value, fm: &FeatureModel) -> Result<VbRule, SuiteFormatError> {
    let err = |msg: &str| SuiteFormatError(msg.to_string());
    let name = value
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| err("rule without name"))?
        .to_string();
    let origin = parse_decision_label(
        fm,
        value
            .get("origin")
            .and_then(Value::as_str)
            .ok_or_else(|| err("rule without origin"))?,
    )?;
    let satisfiable = value
        .get("satisfiable")
        .and_then(Value::as_bool)
        .ok_or_else(|| err("rule without satisfiable flag"))?;

    let mut nodes = Vec::new();
    let mut node_index = HashMap::new();
    for n in value
        .get("nodes")
        .and_then(Value::as_array)
        .ok_or_else(|| err("rule without nodes"))?
    {
        let feature = n
            .get("feature")
            .and_then(Value::as_u64)
            .map(|i| FeatureId(i as usize))
            .filter(|&i| i.0 < fm.feature_count())
            .ok_or_else(|| err("node with invalid feature"))?;
        let new_value = n
            .get("new")
            .and_then(Value::as_bool)
            .ok_or_else(|| err("node without new value"))?;
        let old_value = match n.get("old") {
            None => None,
            Some(v) => Some(v.as_bool().ok_or_else(|| err("node with invalid old value"))?),
        };
        let pc: Pc = n
            .get("pc")
            .and_then(Value::as_str)
            .ok_or_else(|| err("node without pc"))?
            .parse()?;
        node_index.insert(
            decision_label(fm, FeatureDecision::new(feature, new_value)),
            nodes.len(),
        );
        nodes.push(RuleNode {
            feature,
            new_value,
            old_value,
            pc,
        });
    }

    let resolve = |label: &Value| -> Result<usize, SuiteFormatError> {
        let label = label
            .as_str()
            .ok_or_else(|| err("node reference not a string"))?;
        node_index
            .get(label)
            .copied()
            .ok_or_else(|| SuiteFormatError(format!("reference to unknown node `{label}`")))
    };

    let mut groups = Vec::new();
    for g in value
        .get("groups")
        .and_then(Value::as_array)
        .ok_or_else(|| err("rule without groups"))?
    {
        let index = match g
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| err("group without name"))?
            .parse::<RuleVar>()?
        {
            RuleVar::Group(i) => i,
            other => return Err(SuiteFormatError(format!("`{other}` is not a group name"))),
        };
        let attacher = g.get("attacher").map(&resolve).transpose()?;
        let mut alternatives = Vec::new();
        for a in g
            .get("alternatives")
            .and_then(Value::as_array)
            .ok_or_else(|| err("group without alternatives"))?
        {
            let alt_index = match a
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| err("alternative without name"))?
                .parse::<RuleVar>()?
            {
                RuleVar::Alt(gi, j) if gi == index => j,
                other => {
                    return Err(SuiteFormatError(format!(
                        "`{other}` is not an alternative of OR_{}",
                        index + 1
                    )))
                }
            };
            let target = resolve(a.get("target").ok_or_else(|| err("alternative without target"))?)?;
            alternatives.push(RuleAlternative {
                index: alt_index,
                target,
            });
        }
        groups.push(RuleGroup {
            index,
            attacher,
            alternatives,
        });
    }

    let mut constraints = Vec::new();
    for c in value
        .get("constraints")
        .and_then(Value::as_array)
        .ok_or_else(|| err("rule without constraints"))?
    {
        constraints.push(constraint_from_json(c, fm)?);
    }

    Ok(VbRule {
        name,
        origin,
        nodes,
        groups,
        constraints,
        satisfiable,
    })
}

fn constraint_from_json(value: &Value, fm: &FeatureModel) -> Result<RuleConstraint, SuiteFormatError> {
    let err = |msg: String| SuiteFormatError(msg);
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| err("constraint without kind".into()))?;
    let group_of = |key: &str| -> Result<usize, SuiteFormatError> {
        match value
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| err(format!("constraint without `{key}`")))?
            .parse::<RuleVar>()?
        {
            RuleVar::Group(g) => Ok(g),
            other => Err(err(format!("`{other}` is not a group"))),
        }
    };
    let pc_of = |key: &str| -> Result<Pc, SuiteFormatError> {
        value
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| err(format!("constraint without `{key}`")))?
            .parse()
    };
    let var_of = |key: &str| -> Result<RuleVar, SuiteFormatError> {
        value
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| err(format!("constraint without `{key}`")))?
            .parse()
    };
    match kind {
        "or-implication" => Ok(RuleConstraint::OrImplication {
            antecedent: pc_of("antecedent")?,
            group: group_of("group")?,
        }),
        "mutual-exclusion" => {
            let feature = value
                .get("feature")
                .and_then(Value::as_u64)
                .map(|i| FeatureId(i as usize))
                .filter(|&i| i.0 < fm.feature_count())
                .ok_or_else(|| err("mutual exclusion with invalid feature".into()))?;
            Ok(RuleConstraint::MutualExclusion {
                feature,
                positive: pc_of("positive")?,
                negative: pc_of("negative")?,
            })
        }
        "or-overlap" => Ok(RuleConstraint::OrOverlap {
            earlier: var_of("earlier")?,
            group: group_of("group")?,
            alternative: var_of("alternative")?,
        }),
        "cycle-entry" => Ok(RuleConstraint::CycleEntry {
            group: group_of("group")?,
            entries: pc_of("entries")?,
        }),
        other => Err(err(format!("unknown constraint kind `{other}`"))),
    }
}

fn flat_to_json(flat: &FlatRule, fm: &FeatureModel) -> Value {
    let decisions: Vec<String> = flat
        .decisions
        .iter()
        .map(|&d| decision_label(fm, d))
        .collect();
    let (feature, active) = flat.precondition();
    json!({
        "origin": flat.origin,
        "precondition": { "feature": feature.0, "active": active },
        "decisions": decisions,
    })
}

fn flat_from_json(value: &Value, fm: &FeatureModel) -> Result<FlatRule, SuiteFormatError> {
    let err = |msg: &str| SuiteFormatError(msg.to_string());
    let origin = value
        .get("origin")
        .and_then(Value::as_str)
        .ok_or_else(|| err("variant without origin"))?
        .to_string();
    let pre = value
        .get("precondition")
        .ok_or_else(|| err("variant without precondition"))?;
    let feature = pre
        .get("feature")
        .and_then(Value::as_u64)
        .map(|i| FeatureId(i as usize))
        .filter(|&i| i.0 < fm.feature_count())
        .ok_or_else(|| err("precondition with invalid feature"))?;
    let active = pre
        .get("active")
        .and_then(Value::as_bool)
        .ok_or_else(|| err("precondition without state"))?;
    let decisions = value
        .get("decisions")
        .and_then(Value::as_array)
        .ok_or_else(|| err("variant without decisions"))?
        .iter()
        .map(|d| {
            d.as_str()
                .ok_or_else(|| err("decision not a string"))
                .and_then(|s| parse_decision_label(fm, s))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FlatRule {
        origin,
        root: FeatureDecision::new(feature, !active),
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fad::{build_fad, enumerate_toggle_graphs};
    use crate::fm;
    use crate::sat::classify_features;
    use std::ops::ControlFlow;

    struct Setup {
        fm: FeatureModel,
        cls: FeatureClassification,
        fad: FeatureActivationDiagram,
    }

    fn setup(name: &str) -> Setup {
        let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        let fm = fm::parse(&std::fs::read_to_string(path).expect("fixture readable"))
            .expect("fixture parses");
        let cls = classify_features(&fm).expect("satisfiable");
        let fad = build_fad(&fm, &cls);
        Setup { fm, cls, fad }
    }

    impl Setup {
        fn generator(&self) -> RuleGenerator<'_> {
            RuleGenerator::new(&self.fm, &self.cls, &self.fad)
        }

        fn generator_with(&self, options: RuleOptions) -> RuleGenerator<'_> {
            RuleGenerator::with_options(&self.fm, &self.cls, &self.fad, options)
        }

        fn decision(&self, name: &str, activate: bool) -> FeatureDecision {
            FeatureDecision::new(self.fm.id_of(name).unwrap(), activate)
        }

        fn decisions(&self, labels: &[&str]) -> BTreeSet<FeatureDecision> {
            labels
                .iter()
                .map(|s| parse_decision_label(&self.fm, s).unwrap())
                .collect()
        }
    }

    fn decision_sets(flats: &[FlatRule]) -> BTreeSet<BTreeSet<FeatureDecision>> {
        flats
            .iter()
            .map(|f| f.decisions.iter().copied().collect())
            .collect()
    }

    #[test]
    fn screen_deactivation_rule_shape() {
        let s = setup("mobilemedia.fm");
        let rule = s.generator().generate_vb_rule(s.decision("Screen3", false));
        assert_eq!(rule.name, "De_Screen3");
        assert!(rule.satisfiable);
        // The opposite-polarity node of the root feature is dead and gone.
        assert_eq!(rule.nodes.len(), 5);
        assert!(rule.node_of(s.decision("Screen3", true)).is_none());
        let root = &rule.nodes[0];
        assert_eq!(root.old_value, Some(true));
        assert!(!root.new_value);
        assert_eq!(root.pc.to_string(), "root");
        // Three groups survive; the two that re-activate a screen keep only
        // the alternative not contradicting the root decision.
        let widths: Vec<usize> = rule.groups.iter().map(|g| g.alternatives.len()).collect();
        assert_eq!(widths, vec![2, 1, 1]);
        let kinds: Vec<&str> = rule
            .constraints
            .iter()
            .map(|c| match c {
                RuleConstraint::OrImplication { .. } => "impl",
                RuleConstraint::MutualExclusion { .. } => "mutex",
                RuleConstraint::OrOverlap { .. } => "overlap",
                RuleConstraint::CycleEntry { .. } => "cycle",
            })
            .collect();
        assert_eq!(
            kinds,
            vec!["impl", "impl", "impl", "mutex", "mutex", "overlap", "overlap", "cycle", "cycle", "cycle"]
        );
    }

    #[test]
    fn consequence_free_activation_yields_single_node_rule() {
        let s = setup("mobilemedia.fm");
        let rule = s.generator().generate_vb_rule(s.decision("SortMedia", true));
        assert_eq!(rule.nodes.len(), 1);
        assert!(rule.groups.is_empty());
        assert!(rule.constraints.is_empty());
        let variants = s.generator().flatten(&rule, usize::MAX, 7);
        assert_eq!(decision_sets(&variants), BTreeSet::from([s.decisions(&["SortMedia+"])]));
    }

    #[test]
    fn screen_deactivation_flattens_to_two_variants() {
        let s = setup("mobilemedia.fm");
        let generator = s.generator();
        let rule = generator.generate_vb_rule(s.decision("Screen3", false));
        let variants = generator.flatten(&rule, 10, 42);
        let expect = BTreeSet::from([
            s.decisions(&["Screen3-", "Screen1+"]),
            s.decisions(&["Screen3-", "Screen2+"]),
        ]);
        assert_eq!(decision_sets(&variants), expect);
    }

    #[test]
    fn transfer_activation_flattens_to_its_closure() {
        let s = setup("mobilemedia.fm");
        let generator = s.generator();
        let rule = generator.generate_vb_rule(s.decision("SMSTransfer", true));
        let variants = generator.flatten(&rule, usize::MAX, 42);
        assert_eq!(
            decision_sets(&variants),
            BTreeSet::from([s.decisions(&[
                "SMSTransfer+",
                "ReceivePhoto+",
                "SendPhoto+",
                "CopyMedia+"
            ])])
        );
    }

    #[test]
    fn group_parent_deactivation_admits_one_configuration() {
        let s = setup("nested_or.fm");
        let generator = s.generator();
        let rule = generator.generate_vb_rule(s.decision("F1", false));
        let (cnf, _) = rule_cnf(&rule);
        let models = enumerate_models(&cnf, &[], None, &Polarity::Seeded(0));
        assert_eq!(models.len(), 1);
        let variants = generator.flatten(&rule, usize::MAX, 3);
        assert_eq!(
            decision_sets(&variants),
            BTreeSet::from([s.decisions(&["F1-", "F2-", "F3-"])])
        );
    }

    #[test]
    fn flatten_with_limit_one_yields_one_variant() {
        let s = setup("mobilemedia.fm");
        let generator = s.generator();
        for feature in s.cls.real_optional() {
            for activate in [false, true] {
                let rule = generator.generate_vb_rule(FeatureDecision { feature, activate });
                assert_eq!(generator.flatten(&rule, 1, 1234).len(), 1);
            }
        }
    }

    #[test]
    fn flatten_seed_selects_different_first_variants() {
        let s = setup("mobilemedia.fm");
        let generator = s.generator();
        let rule = generator.generate_vb_rule(s.decision("Screen3", false));
        let firsts: BTreeSet<Vec<FeatureDecision>> = (0..16)
            .map(|seed| generator.flatten(&rule, 1, seed)[0].decisions.clone())
            .collect();
        assert!(firsts.len() > 1, "one variant for every seed");
    }

    /// Flattened decision-set families must match the brute-force toggle
    /// enumeration on every decision of the small fixtures, after pruning
    /// entailed no-ops on both sides.
    #[test]
    fn flatten_families_match_toggle_enumeration() {
        for name in ["nested_or.fm", "xor_triple.fm", "cyclic.fm", "wget.fm"] {
            let s = setup(name);
            let generator = s.generator();
            for feature in s.cls.real_optional() {
                for activate in [false, true] {
                    let d = FeatureDecision { feature, activate };
                    let rule = generator.generate_vb_rule(d);
                    let flat = decision_sets(&generator.flatten(&rule, usize::MAX, 99));
                    let toggles: BTreeSet<BTreeSet<FeatureDecision>> =
                        enumerate_toggle_graphs(&s.fad, d, 1_000_000)
                            .unwrap()
                            .iter()
                            .map(|g| generator.prune_entailed(d, &g.decisions))
                            .collect();
                    assert_eq!(flat, toggles, "{name}: {}", d.label(&s.fm));
                }
            }
        }
    }

    /// Cycle-entry constraints drop exactly the variants that are not valid
    /// executions; without them a deactivation can smuggle in an unrelated
    /// group choice.
    #[test]
    fn cycle_entries_block_unjustified_selections() {
        let s = setup("cyclic.fm");
        let with = s.generator();
        let without = s.generator_with(RuleOptions {
            cycle_entries: false,
            ..RuleOptions::default()
        });
        let d = s.decision("Alpha", false);
        let constrained = decision_sets(&with.flatten(&with.generate_vb_rule(d), usize::MAX, 5));
        let unconstrained =
            decision_sets(&without.flatten(&without.generate_vb_rule(d), usize::MAX, 5));
        assert!(constrained.is_subset(&unconstrained));
        assert!(constrained.len() < unconstrained.len());
        assert_eq!(
            constrained,
            BTreeSet::from([
                s.decisions(&["Alpha-", "Beta+"]),
                s.decisions(&["Alpha-", "Gamma+", "Solo+", "Twin-"]),
            ])
        );
        assert!(unconstrained.contains(&s.decisions(&["Alpha-", "Beta+", "Solo+", "Twin-"])));
    }

    /// The simplification constraints only ever narrow the variant set.
    #[test]
    fn simplification_yields_subset_of_unconstrained_variants() {
        for name in ["nested_or.fm", "xor_triple.fm", "cyclic.fm", "wget.fm"] {
            let s = setup(name);
            let full = s.generator();
            let bare = s.generator_with(RuleOptions {
                or_overlap: false,
                cycle_entries: false,
                ..RuleOptions::default()
            });
            for feature in s.cls.real_optional() {
                for activate in [false, true] {
                    let d = FeatureDecision { feature, activate };
                    let narrowed = decision_sets(&full.flatten(&full.generate_vb_rule(d), usize::MAX, 1));
                    let wide = decision_sets(&bare.flatten(&bare.generate_vb_rule(d), usize::MAX, 1));
                    assert!(narrowed.is_subset(&wide), "{name}: {}", d.label(&s.fm));
                }
            }
        }
    }

    /// Dead-variable removal must not change what a rule flattens to.
    #[test]
    fn dead_removal_preserves_flat_decision_sets() {
        for name in ["nested_or.fm", "xor_triple.fm", "cyclic.fm", "wget.fm"] {
            let s = setup(name);
            let generator = s.generator();
            let raw_generator = s.generator_with(RuleOptions {
                remove_dead: false,
                ..RuleOptions::default()
            });
            for feature in s.cls.real_optional() {
                for activate in [false, true] {
                    let d = FeatureDecision { feature, activate };
                    let raw = raw_generator.generate_vb_rule(d);
                    let simplified = generator.remove_dead_rule_features(raw.clone());
                    assert_eq!(
                        decision_sets(&generator.flatten(&raw, usize::MAX, 11)),
                        decision_sets(&generator.flatten(&simplified, usize::MAX, 11)),
                        "{name}: {}",
                        d.label(&s.fm)
                    );
                }
            }
        }
    }

    #[test]
    fn rules_reference_only_live_variables() {
        let s = setup("mobilemedia.fm");
        let generator = s.generator();
        for feature in s.cls.real_optional() {
            for activate in [false, true] {
                let rule = generator.generate_vb_rule(FeatureDecision { feature, activate });
                let live: BTreeSet<RuleVar> = std::iter::once(RuleVar::Root)
                    .chain(rule.groups.iter().flat_map(|g| {
                        std::iter::once(RuleVar::Group(g.index)).chain(
                            g.alternatives
                                .iter()
                                .map(|a| RuleVar::Alt(g.index, a.index)),
                        )
                    }))
                    .collect();
                let check = |pc: &Pc| assert!(pc.0.iter().all(|v| live.contains(v)));
                for node in &rule.nodes {
                    check(&node.pc);
                }
                for c in &rule.constraints {
                    match c {
                        RuleConstraint::OrImplication { antecedent, group } => {
                            check(antecedent);
                            assert!(live.contains(&RuleVar::Group(*group)));
                        }
                        RuleConstraint::MutualExclusion {
                            positive, negative, ..
                        } => {
                            check(positive);
                            check(negative);
                        }
                        RuleConstraint::OrOverlap {
                            earlier,
                            group,
                            alternative,
                        } => {
                            assert!(live.contains(earlier));
                            assert!(live.contains(&RuleVar::Group(*group)));
                            assert!(live.contains(alternative));
                        }
                        RuleConstraint::CycleEntry { group, entries } => {
                            assert!(live.contains(&RuleVar::Group(*group)));
                            check(entries);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn flat_rules_flip_the_root_and_decide_each_feature_once() {
        for name in ["mobilemedia.fm", "wget.fm", "cyclic.fm"] {
            let s = setup(name);
            let generator = s.generator();
            let suite = generator.generate_suite(8, 21, Duration::from_secs(600));
            for (d, flats) in &suite.variants {
                for flat in flats {
                    assert!(flat.decisions.contains(d));
                    let features: BTreeSet<FeatureId> =
                        flat.decisions.iter().map(|x| x.feature).collect();
                    assert_eq!(features.len(), flat.decisions.len());
                    let sorted = {
                        let mut v = flat.decisions.clone();
                        v.sort();
                        v
                    };
                    assert_eq!(sorted, flat.decisions);
                }
            }
        }
    }

    #[test]
    fn suite_sizes_match_published_counts() {
        let s = setup("mobilemedia.fm");
        let suite = s.generator().generate_suite(1, 0, Duration::from_secs(600));
        assert_eq!(suite.rule_count(), 66);
        assert!(!suite.truncated);
        assert_eq!(suite.log.len(), 66);

        let s = setup("wget.fm");
        let suite = s.generator().generate_suite(1, 0, Duration::from_secs(600));
        assert_eq!(suite.rule_count(), 30);

        let s = setup("root_only.fm");
        let suite = s.generator().generate_suite(1, 0, Duration::from_secs(600));
        assert_eq!(suite.rule_count(), 0);
        assert!(suite.to_json(&s.fm).contains("\"rules\": {}"));
    }

    #[test]
    fn exhausted_budget_skips_and_marks_truncation() {
        let s = setup("mobilemedia.fm");
        let suite = s.generator().generate_suite(1, 0, Duration::ZERO);
        assert!(suite.truncated);
        assert_eq!(suite.rule_count(), 0);
        assert_eq!(suite.log.len(), 66);
        assert!(suite.render_log().contains("skipped (time budget exhausted)"));
    }

    #[test]
    fn suite_json_round_trips_and_regenerates_identically() {
        for name in ["mobilemedia.fm", "cyclic.fm"] {
            let s = setup(name);
            let suite = s.generator().generate_suite(4, 9, Duration::from_secs(600));
            let json = suite.to_json(&s.fm);
            let parsed = CpcoSuite::from_json(&json, &s.fm).unwrap();
            assert_eq!(parsed.rules, suite.rules);
            assert_eq!(parsed.variants, suite.variants);
            assert_eq!(parsed.to_json(&s.fm), json);

            let again = s.generator().generate_suite(4, 9, Duration::from_secs(600));
            assert_eq!(again.to_json(&s.fm), json);
        }
    }

    #[test]
    fn presence_condition_syntax_round_trips() {
        for text in ["root", "O_2_1", "(or root O_2_1)", "(or OR_1 O_1_2 O_3_4)"] {
            let pc: Pc = text.parse().unwrap();
            assert_eq!(pc.to_string(), text);
        }
        assert!("(or)".parse::<Pc>().is_err());
        assert!("OR_0".parse::<RuleVar>().is_err());
        assert!("O_1".parse::<RuleVar>().is_err());
        assert_eq!("O_12_3".parse::<RuleVar>().unwrap(), RuleVar::Alt(11, 2));
    }

    #[test]
    fn constraint_rendering_shows_prefix_formulas() {
        let c = RuleConstraint::OrImplication {
            antecedent: Pc::of([RuleVar::Root, RuleVar::Alt(1, 0)]),
            group: 1,
        };
        assert_eq!(c.to_string(), "(implies (or root O_2_1) OR_2)");
        let c = RuleConstraint::OrOverlap {
            earlier: RuleVar::Alt(0, 0),
            group: 1,
            alternative: RuleVar::Alt(1, 1),
        };
        assert_eq!(c.to_string(), "(implies (and O_1_1 OR_2) O_2_2)");
        let c = RuleConstraint::CycleEntry {
            group: 2,
            entries: Pc::of([RuleVar::Alt(0, 1)]),
        };
        assert_eq!(c.to_string(), "(implies OR_3 O_1_2)");
    }

    #[test]
    fn applying_a_screen_variant_swaps_screens() {
        let s = setup("mobilemedia.fm");
        let generator = s.generator();
        let rule = generator.generate_vb_rule(s.decision("Screen3", false));
        let variants = generator.flatten(&rule, 10, 42);
        let to_screen1 = variants
            .iter()
            .find(|v| v.decisions.contains(&s.decision("Screen1", true)))
            .unwrap();

        let mut c1 = Configuration::all_inactive(s.fm.feature_count());
        for name in [
            "MobileMedia", "MediaSelection", "Music", "MediaManagement", "ScreenSize",
            "Screen3", "Preferences", "ViewOptions", "GridView", "AlbumManagement",
            "StorageMedium", "InternalStorage", "Persistence", "ExceptionHandling",
        ] {
            c1.set(s.fm.id_of(name).unwrap(), true);
        }
        assert!(s.fm.is_valid(&c1));

        let after = apply_flat_rule(to_screen1, &c1).expect("applicable");
        assert!(s.fm.is_valid(&after));
        assert!(!after.is_active(s.fm.id_of("Screen3").unwrap()));
        assert!(after.is_active(s.fm.id_of("Screen1").unwrap()));

        // Already at the target state: the variant does not apply.
        assert_eq!(apply_flat_rule(to_screen1, &after), None);
    }

    #[test]
    fn random_applications_preserve_validity() {
        let s = setup("cyclic.fm");
        let generator = s.generator();
        let suite = generator.generate_suite(usize::MAX, 3, Duration::from_secs(600));
        let mut configs = Vec::new();
        s.fm.for_each_valid_configuration(|c| {
            configs.push(c.clone());
            ControlFlow::Continue(())
        });
        let mut checked = 0;
        for flats in suite.variants.values() {
            for flat in flats {
                for c in &configs {
                    if let Some(after) = apply_flat_rule(flat, c) {
                        assert!(s.fm.is_valid(&after), "{:?} on {:?}", flat.decisions, c);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 50);
    }
}
