//! Activation and deactivation principles, and the feature-activation
//! diagram built from them.
//!
//! A feature decision is a request to activate or deactivate one
//! real-optional feature. Applying the principles to a decision yields its
//! direct consequences: a set of and-connected decisions that must accompany
//! it, plus (at most) one or-group of alternative decisions of which one must
//! accompany it. The diagram materializes every decision's consequences as a
//! graph with dedicated or-nodes; it is built incrementally and reuses nodes
//! on revisit, so it stays linear in the model size.
//!
//! The module also provides a brute-force toggle-graph enumerator used as a
//! soundness and equivalence oracle by the rule generator's tests.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::fm::{Configuration, FeatureId, FeatureModel, GroupKind, ParentRelation};
use crate::sat::FeatureClassification;

/// A decision to activate (`true`) or deactivate (`false`) one feature.
/// Decisions exist only for real-optional features.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct FeatureDecision {
    pub feature: FeatureId,
    pub activate: bool,
}

impl FeatureDecision {
    pub fn new(feature: FeatureId, activate: bool) -> Self {
        FeatureDecision { feature, activate }
    }

    pub fn activate(feature: FeatureId) -> Self {
        FeatureDecision {
            feature,
            activate: true,
        }
    }

    pub fn deactivate(feature: FeatureId) -> Self {
        FeatureDecision {
            feature,
            activate: false,
        }
    }

    /// The feature state this decision requires before application.
    pub fn old_state(&self) -> bool {
        !self.activate
    }

    /// Human-readable form, e.g. `Screen3-` or `CopyMedia+`.
    pub fn label(&self, fm: &FeatureModel) -> String {
        format!(
            "{}{}",
            fm.name_of(self.feature),
            if self.activate { "+" } else { "-" }
        )
    }
}

/// Direct consequences of a decision: decisions that must all accompany it,
/// plus at most one group of alternatives of which one must accompany it.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ConsequenceSet {
    pub decisions: Vec<FeatureDecision>,
    pub alternatives: Option<Vec<FeatureDecision>>,
}

/// Raised when a decision targets a feature that cannot be toggled.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrincipleError {
    #[error("cannot make a decision on core feature `{0}`")]
    CoreFeature(String),
    #[error("cannot make a decision on dead feature `{0}`")]
    DeadFeature(String),
}

/// Applies the (de)activation principles to a single decision and returns
/// its direct consequences, in (feature id, polarity) order.
///
/// Activation: mandatory children are activated; the parent is activated
/// unless core; required features are activated unless core; excluded
/// features are deactivated; xor siblings are deactivated; an owned group
/// contributes an alternative set activating one member.
///
/// Deactivation: all children are deactivated; the parent is deactivated if
/// the feature is a mandatory child; features requiring this one are
/// deactivated; group membership contributes an alternative set activating
/// one sibling or deactivating the parent (unless the parent is core).
pub fn apply_principles(
    fm: &FeatureModel,
    cls: &FeatureClassification,
    d: FeatureDecision,
) -> Result<ConsequenceSet, PrincipleError> {
    let f = d.feature;
    if cls.is_core(f) {
        return Err(PrincipleError::CoreFeature(fm.name_of(f).to_string()));
    }
    if cls.is_dead(f) {
        return Err(PrincipleError::DeadFeature(fm.name_of(f).to_string()));
    }

    let feature = fm.feature(f);
    let mut decisions: Vec<FeatureDecision> = Vec::new();
    let mut alternatives: Option<Vec<FeatureDecision>> = None;

    if d.activate {
        for &child in &feature.children {
            if fm.feature(child).relation == ParentRelation::Mandatory {
                assert!(
                    !cls.is_dead(child),
                    "a dead mandatory child would make its parent dead"
                );
                decisions.push(FeatureDecision::activate(child));
            }
        }
        if let Some(parent) = feature.parent {
            assert!(!cls.is_dead(parent), "a dead parent would make the feature dead");
            if !cls.is_core(parent) {
                decisions.push(FeatureDecision::activate(parent));
            }
        }
        for g in fm.requires(f) {
            assert!(!cls.is_dead(g), "requiring a dead feature would make this one dead");
            if !cls.is_core(g) {
                decisions.push(FeatureDecision::activate(g));
            }
        }
        for g in fm.excludes(f) {
            if cls.is_dead(g) {
                continue;
            }
            assert!(!cls.is_core(g), "excluding a core feature would make this one dead");
            decisions.push(FeatureDecision::deactivate(g));
        }
        if let Some((_, group)) = fm.member_group(f) {
            if group.kind == GroupKind::Xor {
                for &m in &group.members {
                    if m == f || cls.is_dead(m) {
                        continue;
                    }
                    assert!(!cls.is_core(m), "a core xor sibling would make this feature dead");
                    decisions.push(FeatureDecision::deactivate(m));
                }
            }
        }
        if let Some((_, group)) = fm.owned_group(f) {
            let alts: Vec<FeatureDecision> = group
                .members
                .iter()
                .copied()
                .filter(|&m| !cls.is_dead(m))
                .map(FeatureDecision::activate)
                .collect();
            assert!(!alts.is_empty(), "a group of dead members would make the parent dead");
            alternatives = Some(alts);
        }
    } else {
        for &child in &feature.children {
            if cls.is_dead(child) {
                continue;
            }
            assert!(!cls.is_core(child), "a core child would make its parent core");
            decisions.push(FeatureDecision::deactivate(child));
        }
        if feature.relation == ParentRelation::Mandatory {
            let parent = feature.parent.expect("mandatory child has a parent");
            assert!(
                !cls.is_core(parent),
                "a core parent of a mandatory child would make the child core"
            );
            decisions.push(FeatureDecision::deactivate(parent));
        }
        for g in fm.required_by(f) {
            if cls.is_dead(g) {
                continue;
            }
            assert!(!cls.is_core(g), "a core feature requiring this one would make it core");
            decisions.push(FeatureDecision::deactivate(g));
        }
        if let Some((_, group)) = fm.member_group(f) {
            let live_siblings: Vec<FeatureId> = group
                .members
                .iter()
                .copied()
                .filter(|&m| m != f && !cls.is_dead(m))
                .collect();
            // A core sibling keeps the group satisfied regardless of this
            // deactivation, so no alternative set is needed at all.
            let has_core_sibling = live_siblings.iter().any(|&m| cls.is_core(m));
            if !has_core_sibling {
                let mut alts: Vec<FeatureDecision> = Vec::new();
                if !cls.is_core(group.parent) {
                    alts.push(FeatureDecision::deactivate(group.parent));
                }
                alts.extend(live_siblings.into_iter().map(FeatureDecision::activate));
                assert!(
                    !alts.is_empty(),
                    "no way to keep the group satisfied: the feature would be core"
                );
                alternatives = Some(alts);
            }
        }
    }

    decisions.retain(|c| c.feature != f);
    decisions.sort();
    decisions.dedup();
    if let Some(alts) = &mut alternatives {
        alts.retain(|c| c.feature != f);
        alts.sort();
        alts.dedup();
    }
    Ok(ConsequenceSet {
        decisions,
        alternatives,
    })
}

/// A decision node of the diagram with its outgoing consequence edges.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DecisionNode {
    pub decision: FeatureDecision,
    /// Indices of decision nodes that must accompany this decision.
    pub and_edges: Vec<usize>,
    /// Index of the or-node of alternatives, if the decision has one.
    pub or_edge: Option<usize>,
}

/// An or-node: one of its alternative decisions must accompany the owner.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OrNode {
    /// The decision node this or-node belongs to.
    pub owner: usize,
    /// Indices of the alternative decision nodes.
    pub alternatives: Vec<usize>,
}

/// The feature-activation diagram: every decision's consequences, fully
/// expanded, with shared nodes for revisited decisions.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct FeatureActivationDiagram {
    nodes: Vec<DecisionNode>,
    or_nodes: Vec<OrNode>,
    index: HashMap<FeatureDecision, usize>,
}

impl FeatureActivationDiagram {
    pub fn nodes(&self) -> &[DecisionNode] {
        &self.nodes
    }

    pub fn or_nodes(&self) -> &[OrNode] {
        &self.or_nodes
    }

    pub fn node_of(&self, d: FeatureDecision) -> Option<usize> {
        self.index.get(&d).copied()
    }

    pub fn node(&self, i: usize) -> &DecisionNode {
        &self.nodes[i]
    }

    pub fn or_node(&self, i: usize) -> &OrNode {
        &self.or_nodes[i]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn or_node_count(&self) -> usize {
        self.or_nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        let and_edges: usize = self.nodes.iter().map(|n| n.and_edges.len()).sum();
        let or_in: usize = self.nodes.iter().filter(|n| n.or_edge.is_some()).count();
        let or_out: usize = self.or_nodes.iter().map(|o| o.alternatives.len()).sum();
        and_edges + or_in + or_out
    }
}

/// Builds the full diagram: both decisions of every real-optional feature,
/// with all consequences expanded. Revisited decisions reuse their node, so
/// construction is linear in the final diagram size.
pub fn build_fad(fm: &FeatureModel, cls: &FeatureClassification) -> FeatureActivationDiagram {
    let mut fad = FeatureActivationDiagram::default();
    for feature in cls.real_optional() {
        for activate in [false, true] {
            add_decision(fm, cls, &mut fad, FeatureDecision { feature, activate });
        }
    }
    fad
}

fn add_decision(
    fm: &FeatureModel,
    cls: &FeatureClassification,
    fad: &mut FeatureActivationDiagram,
    d: FeatureDecision,
) -> usize {
    if let Some(&i) = fad.index.get(&d) {
        return i;
    }
    // Register the node before exploring so cycles resolve to it.
    let i = fad.nodes.len();
    fad.nodes.push(DecisionNode {
        decision: d,
        and_edges: Vec::new(),
        or_edge: None,
    });
    fad.index.insert(d, i);

    let consequences =
        apply_principles(fm, cls, d).expect("diagram decisions target real-optional features");
    for c in consequences.decisions {
        let child = add_decision(fm, cls, fad, c);
        fad.nodes[i].and_edges.push(child);
    }
    if let Some(alts) = consequences.alternatives {
        let j = fad.or_nodes.len();
        fad.or_nodes.push(OrNode {
            owner: i,
            alternatives: Vec::new(),
        });
        fad.nodes[i].or_edge = Some(j);
        for a in alts {
            let child = add_decision(fm, cls, fad, a);
            fad.or_nodes[j].alternatives.push(child);
        }
    }
    i
}

/// One way of executing a decision: the closure of the root decision where
/// every or-node en route has exactly one alternative selected, and no
/// feature is decided twice.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ToggleGraph {
    pub decisions: BTreeSet<FeatureDecision>,
    /// Selected alternative (decision node index) per reached or-node.
    pub chosen_or_edges: BTreeMap<usize, usize>,
}

impl ToggleGraph {
    /// Applies all decisions to a configuration. Each feature occurs at most
    /// once, so the result does not depend on application order.
    pub fn apply_to(&self, c: &Configuration) -> Configuration {
        let mut out = c.clone();
        for d in &self.decisions {
            out.set(d.feature, d.activate);
        }
        out
    }
}

/// Signals that toggle-graph enumeration exceeded its cap.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("more than {cap} toggle graphs")]
pub struct ToggleGraphOverflow {
    pub cap: usize,
}

/// Enumerates every valid toggle graph rooted at `d` by branching over
/// or-node choices and discarding branches that decide one feature both
/// ways. Deterministic; stops with an error once `cap` graphs exist.
pub fn enumerate_toggle_graphs(
    fad: &FeatureActivationDiagram,
    d: FeatureDecision,
    cap: usize,
) -> Result<Vec<ToggleGraph>, ToggleGraphOverflow> {
    let root = fad.node_of(d).expect("decision present in the diagram");
    let mut out = Vec::new();
    let mut state = BranchState::default();
    if !state.close_over(fad, root) {
        return Ok(out);
    }
    branch(fad, &state, &mut out, cap)?;
    Ok(out)
}

#[derive(Clone, Default)]
struct BranchState {
    included: BTreeSet<usize>,
    polarity: BTreeMap<FeatureId, bool>,
    chosen: BTreeMap<usize, usize>,
}

impl BranchState {
    /// Adds a node and everything reachable over and-edges; `false` on a
    /// contradictory pair of decisions.
    fn close_over(&mut self, fad: &FeatureActivationDiagram, start: usize) -> bool {
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if self.included.contains(&n) {
                continue;
            }
            let decision = fad.node(n).decision;
            match self.polarity.get(&decision.feature) {
                Some(&p) if p != decision.activate => return false,
                _ => {}
            }
            self.included.insert(n);
            self.polarity.insert(decision.feature, decision.activate);
            stack.extend(fad.node(n).and_edges.iter().copied());
        }
        true
    }

    fn pending_or(&self, fad: &FeatureActivationDiagram) -> Option<usize> {
        self.included
            .iter()
            .filter_map(|&n| fad.node(n).or_edge)
            .find(|j| !self.chosen.contains_key(j))
    }
}

fn branch(
    fad: &FeatureActivationDiagram,
    state: &BranchState,
    out: &mut Vec<ToggleGraph>,
    cap: usize,
) -> Result<(), ToggleGraphOverflow> {
    let Some(j) = state.pending_or(fad) else {
        if out.len() >= cap {
            return Err(ToggleGraphOverflow { cap });
        }
        out.push(ToggleGraph {
            decisions: state
                .included
                .iter()
                .map(|&n| fad.node(n).decision)
                .collect(),
            chosen_or_edges: state.chosen.clone(),
        });
        return Ok(());
    };
    for &alt in &fad.or_node(j).alternatives {
        let mut next = state.clone();
        next.chosen.insert(j, alt);
        if next.close_over(fad, alt) {
            branch(fad, &next, out, cap)?;
        }
    }
    Ok(())
}

/// Renders the diagram in DOT format. Decision nodes are labeled
/// `F<id><+|->`, or-nodes `OR<i>`.
pub fn to_dot(fad: &FeatureActivationDiagram) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("digraph feature_activation_diagram {\n");
    for (i, node) in fad.nodes().iter().enumerate() {
        let _ = writeln!(
            out,
            "  d{i} [label=\"F{}{}\"];",
            node.decision.feature.0,
            if node.decision.activate { "+" } else { "-" }
        );
    }
    for (j, _) in fad.or_nodes().iter().enumerate() {
        let _ = writeln!(out, "  o{j} [label=\"OR{j}\" shape=diamond];");
    }
    for (i, node) in fad.nodes().iter().enumerate() {
        for &t in &node.and_edges {
            let _ = writeln!(out, "  d{i} -> d{t};");
        }
        if let Some(j) = node.or_edge {
            let _ = writeln!(out, "  d{i} -> o{j};");
        }
    }
    for (j, or_node) in fad.or_nodes().iter().enumerate() {
        for &t in &or_node.alternatives {
            let _ = writeln!(out, "  o{j} -> d{t};");
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fm;
    use crate::sat::classify_features;
    use std::ops::ControlFlow;

    fn fixture(name: &str) -> (FeatureModel, FeatureClassification) {
        let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        let fm = fm::parse(&std::fs::read_to_string(path).expect("fixture readable"))
            .expect("fixture parses");
        let cls = classify_features(&fm).expect("satisfiable");
        (fm, cls)
    }

    fn decision(fm: &FeatureModel, name: &str, activate: bool) -> FeatureDecision {
        FeatureDecision::new(fm.id_of(name).unwrap(), activate)
    }

    #[test]
    fn activating_transfer_pulls_in_its_closure() {
        let (fm, cls) = fixture("mobilemedia.fm");
        let c = apply_principles(&fm, &cls, decision(&fm, "SMSTransfer", true)).unwrap();
        let expected: Vec<FeatureDecision> = ["ReceivePhoto", "SendPhoto", "CopyMedia"]
            .iter()
            .map(|n| decision(&fm, n, true))
            .collect();
        let mut expected_sorted = expected.clone();
        expected_sorted.sort();
        assert_eq!(c.decisions, expected_sorted);
        assert_eq!(c.alternatives, None);
    }

    #[test]
    fn deactivating_a_xor_member_offers_the_siblings() {
        let (fm, cls) = fixture("mobilemedia.fm");
        let c = apply_principles(&fm, &cls, decision(&fm, "Screen3", false)).unwrap();
        assert_eq!(c.decisions, vec![]);
        // The parent ScreenSize is core, so deactivating it is not offered.
        assert_eq!(
            c.alternatives,
            Some(vec![
                decision(&fm, "Screen1", true),
                decision(&fm, "Screen2", true)
            ])
        );
    }

    #[test]
    fn deactivating_an_or_member_may_offer_the_parent() {
        let (fm, cls) = fixture("mobilemedia.fm");
        let c = apply_principles(&fm, &cls, decision(&fm, "Bluetooth", false)).unwrap();
        // Connectivity is real-optional: deactivating it is an alternative,
        // listed first by feature id.
        assert_eq!(
            c.alternatives,
            Some(vec![
                decision(&fm, "Connectivity", false),
                decision(&fm, "Wifi", true),
                decision(&fm, "Usb", true),
            ])
        );
    }

    #[test]
    fn consequence_free_activation() {
        let (fm, cls) = fixture("mobilemedia.fm");
        let c = apply_principles(&fm, &cls, decision(&fm, "SortMedia", true)).unwrap();
        assert_eq!(c, ConsequenceSet::default());
    }

    #[test]
    fn decisions_on_core_or_dead_features_fail() {
        let (fm, cls) = fixture("mobilemedia.fm");
        let err = apply_principles(&fm, &cls, decision(&fm, "Persistence", false)).unwrap_err();
        assert_eq!(err, PrincipleError::CoreFeature("Persistence".into()));

        let dead_fm =
            fm::parse("Root\n  A [mandatory]\n  B [optional]\nconstraints:\n  B excludes A\n")
                .unwrap();
        let cls = classify_features(&dead_fm).unwrap();
        let err = apply_principles(
            &dead_fm,
            &cls,
            FeatureDecision::activate(dead_fm.id_of("B").unwrap()),
        )
        .unwrap_err();
        assert_eq!(err, PrincipleError::DeadFeature("B".into()));
    }

    #[test]
    fn diagram_has_two_nodes_per_real_optional_feature() {
        for name in [
            "mobilemedia.fm",
            "wget.fm",
            "nested_or.fm",
            "cyclic.fm",
            "xor_triple.fm",
            "root_only.fm",
        ] {
            let (fm, cls) = fixture(name);
            let fad = build_fad(&fm, &cls);
            assert_eq!(
                fad.node_count(),
                2 * cls.real_optional().len(),
                "{name}: one node per decision"
            );
        }
    }

    #[test]
    fn mobilemedia_diagram_has_66_decision_nodes() {
        let (fm, cls) = fixture("mobilemedia.fm");
        let fad = build_fad(&fm, &cls);
        assert_eq!(fad.node_count(), 66);
    }

    #[test]
    fn root_only_diagram_is_empty() {
        let (fm, cls) = fixture("root_only.fm");
        let fad = build_fad(&fm, &cls);
        assert_eq!(fad.node_count(), 0);
        assert_eq!(fad.or_node_count(), 0);
    }

    #[test]
    fn build_is_idempotent() {
        let (fm, cls) = fixture("mobilemedia.fm");
        assert_eq!(build_fad(&fm, &cls), build_fad(&fm, &cls));
    }

    #[test]
    fn deactivating_the_group_parent_deactivates_children() {
        let (fm, cls) = fixture("nested_or.fm");
        let fad = build_fad(&fm, &cls);
        let f1_off = fad.node_of(decision(&fm, "F1", false)).unwrap();
        let targets: Vec<FeatureDecision> = fad.node(f1_off)
            .and_edges
            .iter()
            .map(|&t| fad.node(t).decision)
            .collect();
        assert_eq!(
            targets,
            vec![decision(&fm, "F2", false), decision(&fm, "F3", false)]
        );
    }

    #[test]
    fn screen_deactivation_has_two_toggle_graphs() {
        let (fm, cls) = fixture("mobilemedia.fm");
        let fad = build_fad(&fm, &cls);
        let graphs =
            enumerate_toggle_graphs(&fad, decision(&fm, "Screen3", false), 1_000).unwrap();
        assert_eq!(graphs.len(), 2);
        let families: BTreeSet<BTreeSet<FeatureDecision>> =
            graphs.iter().map(|g| g.decisions.clone()).collect();
        let expect: BTreeSet<BTreeSet<FeatureDecision>> = [
            ["Screen3-", "Screen1+", "Screen2-"],
            ["Screen3-", "Screen2+", "Screen1-"],
        ]
        .iter()
        .map(|names| {
            names
                .iter()
                .map(|s| {
                    let (name, sign) = s.split_at(s.len() - 1);
                    decision(&fm, name, sign == "+")
                })
                .collect()
        })
        .collect();
        assert_eq!(families, expect);
    }

    #[test]
    fn consequence_free_decision_has_one_toggle_graph() {
        let (fm, cls) = fixture("mobilemedia.fm");
        let fad = build_fad(&fm, &cls);
        let d = decision(&fm, "SortMedia", true);
        let graphs = enumerate_toggle_graphs(&fad, d, 10).unwrap();
        assert_eq!(graphs.len(), 1);
        assert_eq!(graphs[0].decisions, BTreeSet::from([d]));
        assert!(graphs[0].chosen_or_edges.is_empty());
    }

    #[test]
    fn nested_or_deactivation_has_one_valid_toggle_graph() {
        let (fm, cls) = fixture("nested_or.fm");
        let fad = build_fad(&fm, &cls);
        let graphs = enumerate_toggle_graphs(&fad, decision(&fm, "F1", false), 100).unwrap();
        assert_eq!(graphs.len(), 1);
        let expect: BTreeSet<FeatureDecision> = ["F1", "F2", "F3"]
            .iter()
            .map(|n| decision(&fm, n, false))
            .collect();
        assert_eq!(graphs[0].decisions, expect);
    }

    #[test]
    fn cap_overflow_is_signaled() {
        let (fm, cls) = fixture("mobilemedia.fm");
        let fad = build_fad(&fm, &cls);
        let err = enumerate_toggle_graphs(&fad, decision(&fm, "Screen3", false), 1).unwrap_err();
        assert_eq!(err, ToggleGraphOverflow { cap: 1 });
    }

    /// Every valid toggle graph applied to a valid configuration in the
    /// decision's pre-state yields a valid configuration.
    #[test]
    fn toggle_graphs_preserve_validity() {
        for name in ["nested_or.fm", "cyclic.fm", "xor_triple.fm", "wget.fm"] {
            let (fm, cls) = fixture(name);
            let fad = build_fad(&fm, &cls);
            let mut configs = Vec::new();
            fm.for_each_valid_configuration(|c| {
                configs.push(c.clone());
                ControlFlow::Continue(())
            });
            for feature in cls.real_optional() {
                for activate in [false, true] {
                    let d = FeatureDecision { feature, activate };
                    let graphs = enumerate_toggle_graphs(&fad, d, 10_000).unwrap();
                    for g in &graphs {
                        for c in &configs {
                            if c.is_active(feature) == d.activate {
                                continue;
                            }
                            let after = g.apply_to(c);
                            assert!(
                                fm.is_valid(&after),
                                "{name}: {} via {:?} broke validity",
                                d.label(&fm),
                                g.decisions
                            );
                        }
                    }
                }
            }
        }
    }

    fn chain_model(n: usize) -> String {
        let mut text = String::from("Root\n");
        for i in 1..n {
            for _ in 0..i {
                text.push_str("  ");
            }
            text.push_str(&format!("C{i} [optional]\n"));
        }
        text
    }

    #[test]
    fn chain_diagrams_grow_linearly() {
        let mut sizes = Vec::new();
        for n in [50usize, 100, 200] {
            let fm = fm::parse(&chain_model(n)).unwrap();
            let cls = classify_features(&fm).unwrap();
            let fad = build_fad(&fm, &cls);
            assert_eq!(fad.node_count(), 2 * (n - 1));
            sizes.push(fad.node_count() + fad.edge_count());
        }
        // Doubling the model roughly doubles the diagram.
        let r1 = sizes[1] as f64 / sizes[0] as f64;
        let r2 = sizes[2] as f64 / sizes[1] as f64;
        assert!(r1 < 2.5 && r2 < 2.5, "sizes: {sizes:?}");
    }

    #[test]
    fn dot_export_labels_nodes() {
        let (fm, cls) = fixture("nested_or.fm");
        let fad = build_fad(&fm, &cls);
        let dot = to_dot(&fad);
        assert!(dot.starts_with("digraph"));
        let f1 = fm.id_of("F1").unwrap().0;
        assert!(dot.contains(&format!("label=\"F{f1}-\"")));
        assert!(dot.contains("label=\"OR0\""));
    }
}
