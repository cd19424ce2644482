//! Consistency-preserving configuration operations (CPCOs) for feature
//! models.
//!
//! The crate is organized in layers:
//!
//! - [`fm`] — feature-model trees, groups, cross-tree constraints, a text
//!   format, validity checking, and exhaustive configuration enumeration;
//! - [`sat`] — CNF translation, a small deterministic DPLL solver, model
//!   enumeration, and core/dead feature classification;
//! - [`fad`] — (de)activation principles and the feature-activation diagram,
//!   plus a toggle-graph enumeration oracle;
//! - [`cpco`] — variability-based rule generation from sub-diagrams,
//!   simplification constraints, and flattening into concrete operations;
//! - [`search`] — multi-objective configuration optimization (IBEA) driven
//!   either by the generated operations or by a repair-based baseline;
//! - [`metrics`] — Pareto fronts, exact hypervolume, and rank statistics.

pub mod cpco;
pub mod fad;
pub mod fm;
pub mod metrics;
pub mod sat;
pub mod search;

pub use cpco::{
    apply_flat_rule, CpcoSuite, FlatRule, GenerationLogEntry, Pc, RuleConstraint, RuleGenerator,
    RuleOptions, RuleVar, SuiteFormatError, VbRule,
};
pub use fad::{
    ConsequenceSet, FeatureActivationDiagram, FeatureDecision, PrincipleError, ToggleGraph,
};
pub use metrics::{
    a12, hypervolume, mann_whitney_u, pareto_front, summarize_runs, Alternative, HvConfig,
    ParetoFront, RunSeries,
};
pub use fm::{
    Configuration, ConstraintViolation, CrossTreeConstraint, Feature, FeatureId, FeatureModel,
    Group, GroupKind, ParentRelation, ViolationKind,
};
pub use sat::{Cnf, FeatureClassification, Polarity};
pub use search::{
    evaluate, generate_attributes, AttributeTable, Checkpoint, RunResult, SearchMode,
    SearchParams, Searcher, Solution, VariantId,
};
