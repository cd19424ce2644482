//! Feature models: a single-root tree of features with mandatory/optional
//! children, or/xor groups, and requires/excludes cross-tree constraints.
//!
//! The module provides a line-oriented text format (parser and bit-exact
//! serializer), configuration validity checking against the individual model
//! constraints, and exhaustive enumeration of valid configurations in
//! lexicographic bit-vector order. The enumerator doubles as the ground-truth
//! oracle for the CNF translation in [`crate::sat`].

use std::collections::HashMap;
use std::fmt;
use std::ops::ControlFlow;

use thiserror::Error;

/// Index of a feature in its model.
///
/// Ids are assigned in document (pre-)order, so the root is always id 0 and
/// every parent has a smaller id than its descendants.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct FeatureId(pub usize);

impl FeatureId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a feature relates to its parent.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ParentRelation {
    /// The root feature; it has no parent.
    Root,
    /// Must be active whenever the parent is active.
    Mandatory,
    /// May be active only if the parent is active.
    Optional,
    /// Belongs to the parent's or/xor group.
    Member,
}

/// Kind of a feature group.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GroupKind {
    /// At least one member must be active while the parent is active.
    Or,
    /// Exactly one member must be active while the parent is active.
    Xor,
}

/// An or/xor group owned by a parent feature.
#[derive(Clone, Debug)]
pub struct Group {
    pub parent: FeatureId,
    pub kind: GroupKind,
    pub members: Vec<FeatureId>,
}

/// Kind of a cross-tree constraint.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CtcKind {
    Requires,
    Excludes,
}

/// A binary cross-tree constraint between two features.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct CrossTreeConstraint {
    pub kind: CtcKind,
    pub lhs: FeatureId,
    pub rhs: FeatureId,
}

/// A single feature node.
#[derive(Clone, Debug)]
pub struct Feature {
    pub name: String,
    pub parent: Option<FeatureId>,
    pub relation: ParentRelation,
    /// Children in document order (both plain children and group members).
    pub children: Vec<FeatureId>,
    /// Index into [`FeatureModel::groups`] if this feature owns a group.
    pub group: Option<usize>,
}

/// A feature model: the feature tree, its groups, and its constraints.
#[derive(Clone, Debug)]
pub struct FeatureModel {
    features: Vec<Feature>,
    groups: Vec<Group>,
    constraints: Vec<CrossTreeConstraint>,
    names: HashMap<String, FeatureId>,
    /// For each feature, the index of the group it is a member of, if any.
    member_group: Vec<Option<usize>>,
}

impl FeatureModel {
    pub fn root(&self) -> FeatureId {
        FeatureId(0)
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn feature(&self, id: FeatureId) -> &Feature {
        &self.features[id.0]
    }

    pub fn features(&self) -> impl Iterator<Item = (FeatureId, &Feature)> {
        self.features.iter().enumerate().map(|(i, f)| (FeatureId(i), f))
    }

    pub fn ids(&self) -> impl Iterator<Item = FeatureId> {
        (0..self.features.len()).map(FeatureId)
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn constraints(&self) -> &[CrossTreeConstraint] {
        &self.constraints
    }

    pub fn name_of(&self, id: FeatureId) -> &str {
        &self.features[id.0].name
    }

    pub fn id_of(&self, name: &str) -> Option<FeatureId> {
        self.names.get(name).copied()
    }

    /// The group this feature is a member of, if any.
    pub fn member_group(&self, id: FeatureId) -> Option<(usize, &Group)> {
        self.member_group[id.0].map(|g| (g, &self.groups[g]))
    }

    /// The group this feature owns (is the parent of), if any.
    pub fn owned_group(&self, id: FeatureId) -> Option<(usize, &Group)> {
        self.features[id.0].group.map(|g| (g, &self.groups[g]))
    }

    /// Features `g` with a constraint `g requires id`.
    pub fn required_by(&self, id: FeatureId) -> impl Iterator<Item = FeatureId> + '_ {
        self.constraints
            .iter()
            .filter(move |c| c.kind == CtcKind::Requires && c.rhs == id)
            .map(|c| c.lhs)
    }

    /// Features `g` with a constraint `id requires g`.
    pub fn requires(&self, id: FeatureId) -> impl Iterator<Item = FeatureId> + '_ {
        self.constraints
            .iter()
            .filter(move |c| c.kind == CtcKind::Requires && c.lhs == id)
            .map(|c| c.rhs)
    }

    /// Features excluded by `id` (from either side of an excludes constraint).
    pub fn excludes(&self, id: FeatureId) -> impl Iterator<Item = FeatureId> + '_ {
        self.constraints.iter().filter_map(move |c| {
            if c.kind != CtcKind::Excludes {
                return None;
            }
            if c.lhs == id {
                Some(c.rhs)
            } else if c.rhs == id {
                Some(c.lhs)
            } else {
                None
            }
        })
    }

    fn depth(&self, id: FeatureId) -> usize {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.features[cur.0].parent {
            d += 1;
            cur = p;
        }
        d
    }
}

/// An activation state for every feature of a model, indexed by feature id.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Configuration(Vec<bool>);

impl Configuration {
    pub fn new(bits: Vec<bool>) -> Self {
        Configuration(bits)
    }

    pub fn all_inactive(feature_count: usize) -> Self {
        Configuration(vec![false; feature_count])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_active(&self, id: FeatureId) -> bool {
        self.0[id.0]
    }

    pub fn set(&mut self, id: FeatureId, active: bool) {
        self.0[id.0] = active;
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn inactive_count(&self) -> usize {
        self.0.len() - self.active_count()
    }

    /// Names of the active features, in id order.
    pub fn active_names<'m>(&self, fm: &'m FeatureModel) -> Vec<&'m str> {
        fm.ids()
            .filter(|&id| self.is_active(id))
            .map(|id| fm.name_of(id))
            .collect()
    }
}

/// Which individual model constraint a configuration violates.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ViolationKind {
    /// The root feature is inactive.
    CRoot,
    /// A mandatory child is inactive while its parent is active.
    CMand,
    /// A feature is active while its parent is inactive.
    CPar,
    /// An or-group parent is active but no member is.
    COr,
    /// An xor-group parent is active but not exactly one member is.
    CXor,
    /// The left side of a requires constraint is active, the right is not.
    CReq,
    /// Both sides of an excludes constraint are active.
    CExcl,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::CRoot => "CRoot",
            ViolationKind::CMand => "CMand",
            ViolationKind::CPar => "CPar",
            ViolationKind::COr => "COr",
            ViolationKind::CXor => "CXor",
            ViolationKind::CReq => "CReq",
            ViolationKind::CExcl => "CExcl",
        };
        f.write_str(s)
    }
}

/// One violated constraint: the kind, the feature the constraint is about,
/// and, where meaningful, a second feature witnessing the violation.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ConstraintViolation {
    pub kind: ViolationKind,
    pub subject: FeatureId,
    pub witness: Option<FeatureId>,
}

impl FeatureModel {
    /// Checks a configuration against all individual model constraints and
    /// returns every violation, in a deterministic order (root, parent/child
    /// relations by feature id, groups by index, cross-tree constraints in
    /// document order). An empty result means the configuration is valid.
    pub fn check_validity(&self, c: &Configuration) -> Vec<ConstraintViolation> {
        assert_eq!(
            c.len(),
            self.features.len(),
            "configuration length does not match feature count"
        );
        let mut out = Vec::new();
        if !c.is_active(self.root()) {
            out.push(ConstraintViolation {
                kind: ViolationKind::CRoot,
                subject: self.root(),
                witness: None,
            });
        }
        for (id, f) in self.features() {
            let Some(parent) = f.parent else { continue };
            if c.is_active(id) && !c.is_active(parent) {
                out.push(ConstraintViolation {
                    kind: ViolationKind::CPar,
                    subject: id,
                    witness: Some(parent),
                });
            }
            if f.relation == ParentRelation::Mandatory && c.is_active(parent) && !c.is_active(id) {
                out.push(ConstraintViolation {
                    kind: ViolationKind::CMand,
                    subject: id,
                    witness: Some(parent),
                });
            }
        }
        for group in &self.groups {
            if !c.is_active(group.parent) {
                continue;
            }
            let active: Vec<FeatureId> = group
                .members
                .iter()
                .copied()
                .filter(|&m| c.is_active(m))
                .collect();
            match group.kind {
                GroupKind::Or => {
                    if active.is_empty() {
                        out.push(ConstraintViolation {
                            kind: ViolationKind::COr,
                            subject: group.parent,
                            witness: None,
                        });
                    }
                }
                GroupKind::Xor => {
                    if active.len() != 1 {
                        out.push(ConstraintViolation {
                            kind: ViolationKind::CXor,
                            subject: group.parent,
                            witness: active.get(1).copied(),
                        });
                    }
                }
            }
        }
        for ctc in &self.constraints {
            match ctc.kind {
                CtcKind::Requires => {
                    if c.is_active(ctc.lhs) && !c.is_active(ctc.rhs) {
                        out.push(ConstraintViolation {
                            kind: ViolationKind::CReq,
                            subject: ctc.lhs,
                            witness: Some(ctc.rhs),
                        });
                    }
                }
                CtcKind::Excludes => {
                    if c.is_active(ctc.lhs) && c.is_active(ctc.rhs) {
                        out.push(ConstraintViolation {
                            kind: ViolationKind::CExcl,
                            subject: ctc.lhs,
                            witness: Some(ctc.rhs),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn is_valid(&self, c: &Configuration) -> bool {
        self.check_validity(c).is_empty()
    }
}

/// Result of counting valid configurations under an optional cap.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ConfigCount {
    Exact(u64),
    /// Counting stopped because more than `cap` configurations exist.
    MoreThan(u64),
}

impl fmt::Display for ConfigCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigCount::Exact(n) => write!(f, "{n}"),
            ConfigCount::MoreThan(n) => write!(f, ">{n}"),
        }
    }
}

/// Signals that enumeration hit its cap before exhausting the valid space.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("more than {cap} valid configurations")]
pub struct EnumerationOverflow {
    pub cap: usize,
}

impl FeatureModel {
    /// Calls `visit` for every valid configuration, in lexicographic
    /// bit-vector order (feature id 0 is the most significant position and
    /// `false < true`). The visitor returns `ControlFlow::Break(())` to stop.
    pub fn for_each_valid_configuration(
        &self,
        mut visit: impl FnMut(&Configuration) -> ControlFlow<()>,
    ) {
        // Deferred checks keyed by the highest feature id involved: once that
        // id is assigned, the check is decidable on the partial assignment.
        let mut group_checks: Vec<Vec<usize>> = vec![Vec::new(); self.features.len()];
        for (gi, group) in self.groups.iter().enumerate() {
            let last = group.members.iter().copied().max().expect("empty group");
            group_checks[last.0].push(gi);
        }
        let mut ctc_checks: Vec<Vec<usize>> = vec![Vec::new(); self.features.len()];
        for (ci, ctc) in self.constraints.iter().enumerate() {
            let last = ctc.lhs.max(ctc.rhs);
            ctc_checks[last.0].push(ci);
        }
        let mut bits = Configuration::all_inactive(self.features.len());
        let _ = self.walk(0, &mut bits, &group_checks, &ctc_checks, &mut visit);
    }

    fn walk(
        &self,
        next: usize,
        bits: &mut Configuration,
        group_checks: &[Vec<usize>],
        ctc_checks: &[Vec<usize>],
        visit: &mut impl FnMut(&Configuration) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        if next == self.features.len() {
            return visit(bits);
        }
        let id = FeatureId(next);
        let f = &self.features[next];
        'values: for value in [false, true] {
            match f.relation {
                ParentRelation::Root => {
                    if !value {
                        continue;
                    }
                }
                ParentRelation::Mandatory => {
                    let parent_active = bits.is_active(f.parent.unwrap());
                    if value != parent_active {
                        continue;
                    }
                }
                ParentRelation::Optional | ParentRelation::Member => {
                    if value && !bits.is_active(f.parent.unwrap()) {
                        continue;
                    }
                }
            }
            bits.set(id, value);
            for &gi in &group_checks[next] {
                let group = &self.groups[gi];
                if !bits.is_active(group.parent) {
                    continue;
                }
                let active = group.members.iter().filter(|&&m| bits.is_active(m)).count();
                let ok = match group.kind {
                    GroupKind::Or => active >= 1,
                    GroupKind::Xor => active == 1,
                };
                if !ok {
                    bits.set(id, false);
                    continue 'values;
                }
            }
            for &ci in &ctc_checks[next] {
                let ctc = &self.constraints[ci];
                let ok = match ctc.kind {
                    CtcKind::Requires => !bits.is_active(ctc.lhs) || bits.is_active(ctc.rhs),
                    CtcKind::Excludes => !(bits.is_active(ctc.lhs) && bits.is_active(ctc.rhs)),
                };
                if !ok {
                    bits.set(id, false);
                    continue 'values;
                }
            }
            self.walk(next + 1, bits, group_checks, ctc_checks, visit)?;
            bits.set(id, false);
        }
        ControlFlow::Continue(())
    }

    /// Counts valid configurations, stopping early once `cap` is exceeded.
    pub fn count_valid_configurations(&self, cap: Option<u64>) -> ConfigCount {
        let mut n: u64 = 0;
        let mut overflowed = false;
        self.for_each_valid_configuration(|_| {
            if let Some(cap) = cap {
                if n >= cap {
                    overflowed = true;
                    return ControlFlow::Break(());
                }
            }
            n += 1;
            ControlFlow::Continue(())
        });
        if overflowed {
            ConfigCount::MoreThan(n)
        } else {
            ConfigCount::Exact(n)
        }
    }

    /// Collects all valid configurations in lexicographic bit-vector order,
    /// failing once more than `cap` exist.
    pub fn enumerate_valid_configurations(
        &self,
        cap: usize,
    ) -> Result<Vec<Configuration>, EnumerationOverflow> {
        let mut out = Vec::new();
        let mut overflowed = false;
        self.for_each_valid_configuration(|c| {
            if out.len() >= cap {
                overflowed = true;
                return ControlFlow::Break(());
            }
            out.push(c.clone());
            ControlFlow::Continue(())
        });
        if overflowed {
            Err(EnumerationOverflow { cap })
        } else {
            Ok(out)
        }
    }
}

/// Errors produced while parsing the feature-model text format. Positions
/// are 1-based line and column numbers.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: duplicate feature name `{name}`")]
    DuplicateName {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: group under `{parent}` needs at least two members, found {found}")]
    GroupTooSmall {
        parent: String,
        found: usize,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: unknown feature `{name}` in constraint")]
    UnknownFeature {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: complex constraints are not supported (expected `A requires B` or `A excludes B`)")]
    ComplexConstraint { line: usize, col: usize },
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        col,
        message: message.into(),
    }
}

fn is_name_start(ch: char) -> bool {
    ch.is_ascii_alphabetic() || ch == '_'
}

fn is_name_char(ch: char) -> bool {
    ch.is_ascii_alphanumeric() || ch == '_'
}

/// Parses the feature-model text format.
///
/// Format summary: one feature per line, nesting expressed with two-space
/// indentation. A feature that owns a group carries a ` <or>` or ` <xor>`
/// suffix; its unmarked children are the group members. Every other non-root
/// child carries ` [mandatory]` or ` [optional]`. An optional trailing
/// section headed by `constraints:` lists one `A requires B` or
/// `A excludes B` per line. Blank lines and lines starting with `#` are
/// ignored.
pub fn parse(text: &str) -> Result<FeatureModel, ParseError> {
    let mut features: Vec<Feature> = Vec::new();
    let mut groups: Vec<Group> = Vec::new();
    let mut group_pos: Vec<(usize, usize)> = Vec::new();
    let mut constraints: Vec<CrossTreeConstraint> = Vec::new();
    let mut names: HashMap<String, FeatureId> = HashMap::new();
    // Ancestor at each depth of the current path.
    let mut stack: Vec<FeatureId> = Vec::new();
    let mut in_constraints = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        if let Some(pos) = raw.find('\t') {
            return Err(syntax(line, pos + 1, "tab characters are not allowed"));
        }
        if in_constraints {
            parse_constraint(raw, line, &names, &mut constraints)?;
            continue;
        }
        if raw == "constraints:" {
            if features.is_empty() {
                return Err(syntax(line, 1, "constraints section before any feature"));
            }
            in_constraints = true;
            continue;
        }

        let indent = raw.len() - raw.trim_start_matches(' ').len();
        if indent % 2 != 0 {
            return Err(syntax(line, indent + 1, "indentation must be a multiple of two spaces"));
        }
        let depth = indent / 2;
        let col0 = indent + 1;
        if features.is_empty() && depth != 0 {
            return Err(syntax(line, col0, "the first feature must start at column 1"));
        }
        if !features.is_empty() && depth == 0 {
            return Err(syntax(line, col0, "only one root feature is allowed"));
        }
        if depth > stack.len() {
            return Err(syntax(line, col0, "indentation skips a level"));
        }

        let (name, suffix_kind, marker, _end_col) = parse_feature_line(raw, indent, line)?;
        if names.contains_key(name) {
            return Err(ParseError::DuplicateName {
                name: name.to_string(),
                line,
                col: col0,
            });
        }

        let id = FeatureId(features.len());
        let parent = if depth == 0 { None } else { Some(stack[depth - 1]) };
        let relation = match (parent, marker) {
            (None, None) => ParentRelation::Root,
            (None, Some(_)) => {
                return Err(syntax(line, col0, "the root feature takes no [mandatory]/[optional] marker"));
            }
            (Some(p), None) => {
                if features[p.0].group.is_none() {
                    return Err(syntax(
                        line,
                        col0,
                        format!(
                            "feature `{name}` under `{}` needs a [mandatory] or [optional] marker",
                            features[p.0].name
                        ),
                    ));
                }
                ParentRelation::Member
            }
            (Some(_), Some(Marker::Mandatory)) => ParentRelation::Mandatory,
            (Some(_), Some(Marker::Optional)) => ParentRelation::Optional,
        };

        let group = suffix_kind.map(|kind| {
            groups.push(Group {
                parent: id,
                kind,
                members: Vec::new(),
            });
            group_pos.push((line, col0));
            groups.len() - 1
        });

        if let Some(p) = parent {
            features[p.0].children.push(id);
            if relation == ParentRelation::Member {
                let gi = features[p.0].group.expect("member under non-group parent");
                groups[gi].members.push(id);
            }
        }
        names.insert(name.to_string(), id);
        features.push(Feature {
            name: name.to_string(),
            parent,
            relation,
            children: Vec::new(),
            group,
        });
        stack.truncate(depth);
        stack.push(id);
    }

    if features.is_empty() {
        return Err(syntax(1, 1, "empty model: expected a root feature"));
    }
    for (gi, group) in groups.iter().enumerate() {
        if group.members.len() < 2 {
            let (line, col) = group_pos[gi];
            return Err(ParseError::GroupTooSmall {
                parent: features[group.parent.0].name.clone(),
                found: group.members.len(),
                line,
                col,
            });
        }
    }

    let mut member_group = vec![None; features.len()];
    for (gi, group) in groups.iter().enumerate() {
        for &m in &group.members {
            member_group[m.0] = Some(gi);
        }
    }
    Ok(FeatureModel {
        features,
        groups,
        constraints,
        names,
        member_group,
    })
}

enum Marker {
    Mandatory,
    Optional,
}

/// Parsed feature line: name, group suffix, relation marker, and the column
/// one past the last token (for trailing-garbage diagnostics).
type FeatureLine<'a> = (&'a str, Option<GroupKind>, Option<Marker>, usize);

/// Parses `NAME [<or>|<xor>] [[mandatory]|[optional]]` after `indent` spaces.
fn parse_feature_line(raw: &str, indent: usize, line: usize) -> Result<FeatureLine<'_>, ParseError> {
    let mut rest = &raw[indent..];
    let mut col = indent + 1;

    let name_len = rest.chars().take_while(|&c| is_name_char(c)).count();
    if name_len == 0 || !rest.chars().next().map(is_name_start).unwrap_or(false) {
        return Err(syntax(line, col, "expected a feature name"));
    }
    let name = &rest[..name_len];
    rest = &rest[name_len..];
    col += name_len;

    let take = |token: &str, col: &mut usize, rest: &mut &str| -> bool {
        let with_space = format!(" {token}");
        if let Some(r) = rest.strip_prefix(with_space.as_str()) {
            *col += 1 + token.len();
            *rest = r;
            true
        } else {
            false
        }
    };

    let suffix = if take("<or>", &mut col, &mut rest) {
        Some(GroupKind::Or)
    } else if take("<xor>", &mut col, &mut rest) {
        Some(GroupKind::Xor)
    } else {
        None
    };
    let marker = if take("[mandatory]", &mut col, &mut rest) {
        Some(Marker::Mandatory)
    } else if take("[optional]", &mut col, &mut rest) {
        Some(Marker::Optional)
    } else {
        None
    };
    if !rest.is_empty() {
        return Err(syntax(line, col + 1, format!("unexpected trailing input `{}`", rest.trim())));
    }
    Ok((name, suffix, marker, col))
}

fn parse_constraint(
    raw: &str,
    line: usize,
    names: &HashMap<String, FeatureId>,
    constraints: &mut Vec<CrossTreeConstraint>,
) -> Result<(), ParseError> {
    let indent = raw.len() - raw.trim_start_matches(' ').len();
    let mut col = indent + 1;
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    if tokens.len() > 3 {
        // Column of the first unexpected token.
        let consumed: usize = tokens[..3].iter().map(|t| t.len() + 1).sum();
        return Err(ParseError::ComplexConstraint {
            line,
            col: indent + consumed + 1,
        });
    }
    if tokens.len() != 3 {
        return Err(syntax(line, col, "expected `A requires B` or `A excludes B`"));
    }
    let kind = match tokens[1] {
        "requires" => CtcKind::Requires,
        "excludes" => CtcKind::Excludes,
        other => {
            return Err(syntax(
                line,
                indent + tokens[0].len() + 2,
                format!("unknown constraint operator `{other}`"),
            ));
        }
    };
    let resolve = |name: &str, col: usize| -> Result<FeatureId, ParseError> {
        names.get(name).copied().ok_or(ParseError::UnknownFeature {
            name: name.to_string(),
            line,
            col,
        })
    };
    let lhs = resolve(tokens[0], col)?;
    col += tokens[0].len() + 1 + tokens[1].len() + 1;
    let rhs = resolve(tokens[2], col)?;
    constraints.push(CrossTreeConstraint { kind, lhs, rhs });
    Ok(())
}

/// Serializes a model back to the text format. The output is canonical: it
/// uses two-space indentation, LF line endings, and the same token order the
/// parser accepts, so `parse(serialize(m))` reproduces `m` exactly.
pub fn serialize(fm: &FeatureModel) -> String {
    let mut out = String::new();
    for (id, f) in fm.features() {
        let depth = fm.depth(id);
        for _ in 0..depth {
            out.push_str("  ");
        }
        out.push_str(&f.name);
        if let Some((_, group)) = fm.owned_group(id) {
            out.push_str(match group.kind {
                GroupKind::Or => " <or>",
                GroupKind::Xor => " <xor>",
            });
        }
        match f.relation {
            ParentRelation::Mandatory => out.push_str(" [mandatory]"),
            ParentRelation::Optional => out.push_str(" [optional]"),
            ParentRelation::Root | ParentRelation::Member => {}
        }
        out.push('\n');
    }
    if !fm.constraints().is_empty() {
        out.push_str("constraints:\n");
        for ctc in fm.constraints() {
            let op = match ctc.kind {
                CtcKind::Requires => "requires",
                CtcKind::Excludes => "excludes",
            };
            out.push_str(&format!(
                "  {} {} {}\n",
                fm.name_of(ctc.lhs),
                op,
                fm.name_of(ctc.rhs)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> String {
        let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        std::fs::read_to_string(path).expect("fixture readable")
    }

    fn mobilemedia() -> FeatureModel {
        parse(&fixture("mobilemedia.fm")).expect("mobilemedia parses")
    }

    #[test]
    fn mobilemedia_shape() {
        let fm = mobilemedia();
        assert_eq!(fm.feature_count(), 43);
        assert_eq!(fm.groups().len(), 7);
        assert_eq!(fm.constraints().len(), 3);
        assert_eq!(fm.name_of(fm.root()), "MobileMedia");
        let screens = fm.id_of("ScreenSize").unwrap();
        let (_, group) = fm.owned_group(screens).unwrap();
        assert_eq!(group.kind, GroupKind::Xor);
        assert_eq!(group.members.len(), 3);
    }

    #[test]
    fn wget_shape() {
        let fm = parse(&fixture("wget.fm")).unwrap();
        assert_eq!(fm.feature_count(), 17);
        assert_eq!(fm.groups().len(), 1);
        assert_eq!(fm.constraints().len(), 0);
    }

    #[test]
    fn ids_follow_document_order() {
        let fm = mobilemedia();
        assert_eq!(fm.id_of("MobileMedia"), Some(FeatureId(0)));
        assert_eq!(fm.id_of("MediaSelection"), Some(FeatureId(1)));
        assert_eq!(fm.id_of("Music"), Some(FeatureId(2)));
        assert_eq!(fm.id_of("ExceptionHandling"), Some(FeatureId(42)));
        for (id, f) in fm.features() {
            if let Some(p) = f.parent {
                assert!(p < id, "parents precede children");
            }
        }
    }

    #[test]
    fn fixture_files_are_canonical() {
        for name in [
            "mobilemedia.fm",
            "wget.fm",
            "nested_or.fm",
            "cyclic.fm",
            "xor_triple.fm",
            "root_only.fm",
        ] {
            let text = fixture(name);
            let fm = parse(&text).unwrap();
            assert_eq!(serialize(&fm), text, "{name} round-trips bit-exactly");
        }
    }

    #[test]
    fn serialize_parse_identity() {
        let text = fixture("mobilemedia.fm");
        let once = serialize(&parse(&text).unwrap());
        let twice = serialize(&parse(&once).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn rejects_duplicate_names() {
        let err = parse("Root\n  A [optional]\n  A [optional]\n").unwrap_err();
        assert_eq!(
            err,
            ParseError::DuplicateName {
                name: "A".into(),
                line: 3,
                col: 3
            }
        );
    }

    #[test]
    fn rejects_small_groups() {
        let err = parse("Root\n  G <or> [optional]\n    M\n").unwrap_err();
        assert!(matches!(err, ParseError::GroupTooSmall { found: 1, .. }));
    }

    #[test]
    fn rejects_unknown_constraint_feature() {
        let err = parse("Root\n  A [optional]\nconstraints:\n  A requires Ghost\n").unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownFeature {
                name: "Ghost".into(),
                line: 4,
                col: 14
            }
        );
    }

    #[test]
    fn rejects_complex_constraints() {
        let err =
            parse("Root\n  A [optional]\n  B [optional]\nconstraints:\n  A requires B or_else\n")
                .unwrap_err();
        assert!(matches!(err, ParseError::ComplexConstraint { line: 5, .. }));
    }

    #[test]
    fn reports_syntax_position() {
        let err = parse("Root\n   Bad [optional]\n").unwrap_err();
        assert_eq!(
            err,
            syntax(2, 4, "indentation must be a multiple of two spaces")
        );
        let err = parse("Root\n  Bad\n").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 2, col: 3, .. }));
    }

    #[test]
    fn rejects_marker_on_member() {
        let err = parse("Root\n  G <or> [optional]\n    M [optional]\n    N\n").unwrap_err();
        // A marked child under a group parent is a plain child, which is
        // allowed; but then the group ends up with one member.
        assert!(matches!(err, ParseError::GroupTooSmall { found: 1, .. }));
    }

    fn config_of(fm: &FeatureModel, names: &[&str]) -> Configuration {
        let mut c = Configuration::all_inactive(fm.feature_count());
        for n in names {
            c.set(fm.id_of(n).unwrap_or_else(|| panic!("feature {n}")), true);
        }
        c
    }

    /// The published example configuration from the excerpt model, extended
    /// to the full model: core features plus one member per active group.
    fn c1(fm: &FeatureModel) -> Configuration {
        config_of(
            fm,
            &[
                "MobileMedia",
                "MediaSelection",
                "Music",
                "MediaManagement",
                "ScreenSize",
                "Screen3",
                "Preferences",
                "ViewOptions",
                "GridView",
                "AlbumManagement",
                "StorageMedium",
                "InternalStorage",
                "Persistence",
                "ExceptionHandling",
            ],
        )
    }

    #[test]
    fn c1_is_valid() {
        let fm = mobilemedia();
        assert_eq!(fm.check_validity(&c1(&fm)), vec![]);
    }

    #[test]
    fn violations_are_reported_with_kind_and_subject() {
        let fm = mobilemedia();

        let mut c = c1(&fm);
        c.set(fm.id_of("Screen2").unwrap(), true);
        let v = fm.check_validity(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::CXor);
        assert_eq!(v[0].subject, fm.id_of("ScreenSize").unwrap());

        let mut c = c1(&fm);
        c.set(fm.id_of("Music").unwrap(), false);
        let v = fm.check_validity(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::COr);

        let mut c = c1(&fm);
        c.set(fm.id_of("SMSTransfer").unwrap(), true);
        let v = fm.check_validity(&c);
        // SMSTransfer's mandatory children are inactive and CopyMedia is
        // required but inactive.
        let kinds: Vec<ViolationKind> = v.iter().map(|x| x.kind).collect();
        assert!(kinds.contains(&ViolationKind::CMand));
        assert!(kinds.contains(&ViolationKind::CReq));

        let mut c = c1(&fm);
        c.set(fm.id_of("MobileMedia").unwrap(), false);
        let kinds: Vec<ViolationKind> =
            fm.check_validity(&c).iter().map(|x| x.kind).collect();
        assert!(kinds.contains(&ViolationKind::CRoot));
        assert!(kinds.contains(&ViolationKind::CPar));
    }

    #[test]
    fn excludes_violation() {
        let fm = parse("Root\n  A [optional]\n  B [optional]\nconstraints:\n  A excludes B\n")
            .unwrap();
        let c = config_of(&fm, &["Root", "A", "B"]);
        let v = fm.check_validity(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::CExcl);
        assert_eq!(v[0].witness, fm.id_of("B"));
    }

    #[test]
    fn root_only_has_one_configuration() {
        let fm = parse(&fixture("root_only.fm")).unwrap();
        let all = fm.enumerate_valid_configurations(10).unwrap();
        assert_eq!(all.len(), 1);
        assert!(all[0].is_active(fm.root()));
    }

    #[test]
    fn enumeration_is_lexicographic_and_complete() {
        let fm = parse(&fixture("cyclic.fm")).unwrap();
        let all = fm.enumerate_valid_configurations(10_000).unwrap();
        // Brute-force oracle over all 2^8 bit vectors.
        let n = fm.feature_count();
        let mut expected = Vec::new();
        for mask in 0u32..(1 << n) {
            let bits: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            let c = Configuration::new(bits);
            if fm.is_valid(&c) {
                expected.push(c);
            }
        }
        expected.sort_by(|a, b| a.bits().cmp(b.bits()));
        assert_eq!(all, expected);
        let mut sorted = all.clone();
        sorted.sort_by(|a, b| a.bits().cmp(b.bits()));
        assert_eq!(all, sorted, "emitted in lexicographic order");
    }

    #[test]
    fn counts_match_published_sizes() {
        assert_eq!(
            mobilemedia().count_valid_configurations(None),
            ConfigCount::Exact(2_128_896)
        );
        assert_eq!(
            parse(&fixture("wget.fm")).unwrap().count_valid_configurations(None),
            ConfigCount::Exact(8_192)
        );
    }

    #[test]
    fn count_respects_cap() {
        let fm = mobilemedia();
        assert_eq!(
            fm.count_valid_configurations(Some(1_000)),
            ConfigCount::MoreThan(1_000)
        );
        let err = fm.enumerate_valid_configurations(1_000).unwrap_err();
        assert_eq!(err, EnumerationOverflow { cap: 1_000 });
    }

    #[test]
    fn small_fixture_counts() {
        // nested_or: F1 off, or F1 on with a nonempty subset of {F2, F3}.
        // cyclic: 3 Gamma-free or-combinations x 2 states + 4 Gamma
        // combinations forced to Solo.
        for (name, expect) in [
            ("nested_or.fm", 4u64),
            ("cyclic.fm", 10),
            ("xor_triple.fm", 3),
            ("root_only.fm", 1),
        ] {
            let fm = parse(&fixture(name)).unwrap();
            assert_eq!(
                fm.count_valid_configurations(None),
                ConfigCount::Exact(expect),
                "{name}"
            );
        }
    }
}
