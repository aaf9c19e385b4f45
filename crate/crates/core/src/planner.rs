//! Constraint mappings, compatibility checking and transformation plans.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Architecture, RoleTag, Stage};
use crate::patterns::{instantiate_scoped, BlockScope, PatternError, PatternKind, PatternLibrary, ScopedAction};
use crate::refine::{apply_action, AtomicAction, Condition, RefineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Conflicts,
    Requires,
    Independent,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Conflicts => "conflicts",
            Relation::Requires => "requires",
            Relation::Independent => "independent",
        }
    }

    pub fn parse(s: &str) -> Option<Relation> {
        match s {
            "conflicts" => Some(Relation::Conflicts),
            "requires" => Some(Relation::Requires),
            "independent" => Some(Relation::Independent),
            _ => None,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatibilityRule {
    pub pattern_a: String,
    pub pattern_b: String,
    pub relation: Relation,
}

impl CompatibilityRule {
    /// Whether the rule relates `a` to `b`; `requires` is directional.
    pub fn relates(&self, a: &str, b: &str) -> bool {
        let forward = self.pattern_a == a && self.pattern_b == b;
        match self.relation {
            Relation::Requires => forward,
            Relation::Conflicts | Relation::Independent => forward || (self.pattern_a == b && self.pattern_b == a),
        }
    }

    pub fn same_as(&self, other: &CompatibilityRule) -> bool {
        self.relation == other.relation && self.relates(&other.pattern_a, &other.pattern_b)
    }
}

/// One `--<ref::priority:p,range:r>--` annotation, with its pattern resolved
/// against a library and its scope computed against the architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintMapping {
    pub element: String,
    pub constraint_ref: String,
    pub priority: u32,
    pub range: u32,
    pub decl_index: usize,
    /// Canonical pattern name, or `constraint_ref` verbatim when unknown.
    pub pattern: String,
    /// Target plus every element within `range - 1` hops.
    pub scope: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownRef {
    pub decl_index: usize,
    pub element: String,
    pub constraint_ref: String,
}

impl fmt::Display for UnknownRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown-constraint-ref({}) on {}", self.constraint_ref, self.element)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingReport {
    pub mappings: Vec<ConstraintMapping>,
    pub unknown: Vec<UnknownRef>,
}

/// One mapping per annotation on a top-level element, in textual order.
pub fn extract_mappings(arch: &Architecture, library: &PatternLibrary) -> MappingReport {
    let mut report = MappingReport::default();
    for e in &arch.elements {
        for a in &e.annotations {
            let decl_index = report.mappings.len();
            let pattern = match library.canonical_name(&a.constraint_ref) {
                Some(p) => p,
                None => {
                    report.unknown.push(UnknownRef {
                        decl_index,
                        element: e.name.clone(),
                        constraint_ref: a.constraint_ref.clone(),
                    });
                    a.constraint_ref.clone()
                }
            };
            let mut scope = arch
                .neighbors(&e.name, a.range.saturating_sub(1) as usize)
                .unwrap_or_default();
            scope.insert(e.name.clone());
            report.mappings.push(ConstraintMapping {
                element: e.name.clone(),
                constraint_ref: a.constraint_ref.clone(),
                priority: a.priority,
                range: a.range,
                decl_index,
                pattern,
                scope,
            });
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    /// Index into the mapping list.
    pub first: usize,
    /// The other mapping for `conflicts`; absent for an unmet `requires`.
    pub second: Option<usize>,
    pub relation: Relation,
    pub detail: String,
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.second {
            Some(j) => write!(f, "mappings {} and {} {}: {}", self.first, j, self.relation, self.detail),
            None => write!(f, "mapping {} {}: {}", self.first, self.relation, self.detail),
        }
    }
}

pub fn check_compatibility(mappings: &[ConstraintMapping], rules: &[CompatibilityRule]) -> Vec<Conflict> {
    let mut out = Vec::new();
    for (i, mi) in mappings.iter().enumerate() {
        for (j, mj) in mappings.iter().enumerate().skip(i + 1) {
            if mi.scope.is_disjoint(&mj.scope) {
                continue;
            }
            let conflicting = rules
                .iter()
                .any(|r| r.relation == Relation::Conflicts && r.relates(&mi.pattern, &mj.pattern));
            if conflicting {
                out.push(Conflict {
                    first: i,
                    second: Some(j),
                    relation: Relation::Conflicts,
                    detail: format!(
                        "{} on {} overlaps {} on {}",
                        mi.pattern, mi.element, mj.pattern, mj.element
                    ),
                });
            }
        }
        let mut missing: Vec<&str> = rules
            .iter()
            .filter(|r| r.relation == Relation::Requires && r.pattern_a == mi.pattern)
            .map(|r| r.pattern_b.as_str())
            .filter(|b| !mappings.iter().any(|m| m.pattern == *b))
            .collect();
        missing.dedup();
        for b in missing {
            out.push(Conflict {
                first: i,
                second: None,
                relation: Relation::Requires,
                detail: format!("{} on {} requires {b}, which no mapping provides", mi.pattern, mi.element),
            });
        }
    }
    out.sort_by_key(|c| (c.first, c.second.unwrap_or(usize::MAX)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Qos,
    Platform,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub pattern: String,
    pub target: String,
    pub priority: u32,
    pub decl_index: usize,
    pub actions: Vec<ScopedAction>,
    pub scope_set: BTreeSet<String>,
    /// Conditions the pattern guarantees once the step is applied.
    pub provides: Vec<Condition>,
}

impl PlanStep {
    pub fn atomic_actions(&self) -> impl Iterator<Item = &AtomicAction> {
        self.actions.iter().map(|s| &s.action)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformationPlan {
    pub kind: PlanKind,
    pub steps: Vec<PlanStep>,
}

impl TransformationPlan {
    pub fn empty(kind: PlanKind) -> Self {
        TransformationPlan { kind, steps: Vec::new() }
    }

    /// `STEP <n> pattern=<p> target=<t> priority=<k>` followed by one
    /// `ACTION <verb> <args...>` per action.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (n, step) in self.steps.iter().enumerate() {
            let _ = writeln!(
                s,
                "STEP {n} pattern={} target={} priority={}",
                step.pattern, step.target, step.priority
            );
            for a in step.atomic_actions() {
                let _ = writeln!(s, "ACTION {} {}", a.verb(), a.args().join(" "));
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("{}", .0.iter().map(|u| u.to_string()).collect::<Vec<_>>().join("; "))]
    UnknownConstraintRef(Vec<UnknownRef>),
    #[error("plan-conflict: {}", .0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; "))]
    Conflict(Vec<Conflict>),
    #[error("scope-violation: step {step} action `{action}` touches {element}, outside {scope:?}")]
    ScopeViolation {
        step: usize,
        action: String,
        element: String,
        scope: BTreeSet<String>,
    },
    #[error("step {step} ({pattern} on {target}): {source}")]
    Pattern {
        step: usize,
        pattern: String,
        target: String,
        source: PatternError,
    },
    #[error("pattern {pattern} is a {found:?} pattern; expected {expected:?}")]
    WrongKind {
        pattern: String,
        expected: PatternKind,
        found: PatternKind,
    },
    #[error("unknown pattern `{0}`")]
    UnknownPattern(String),
}

impl PlanError {
    pub fn kind(&self) -> &'static str {
        match self {
            PlanError::UnknownConstraintRef(_) => "unknown-constraint-ref",
            PlanError::Conflict(_) => "plan-conflict",
            PlanError::ScopeViolation { .. } => "scope-violation",
            PlanError::Pattern { .. } => "pattern-error",
            PlanError::WrongKind { .. } => "wrong-pattern-kind",
            PlanError::UnknownPattern(_) => "unknown-pattern",
        }
    }
}

/// Orders the mappings by (priority, decl_index); stable.
pub fn order_mappings(mappings: &[ConstraintMapping]) -> Vec<&ConstraintMapping> {
    let mut ordered: Vec<&ConstraintMapping> = mappings.iter().collect();
    ordered.sort_by_key(|m| (m.priority, m.decl_index));
    ordered
}

/// Greedy QoS plan: one step per annotation, in priority order.
pub fn plan(arch: &Architecture, library: &PatternLibrary) -> Result<TransformationPlan, PlanError> {
    let report = extract_mappings(arch, library);
    if !report.unknown.is_empty() {
        return Err(PlanError::UnknownConstraintRef(report.unknown));
    }
    let conflicts = check_compatibility(&report.mappings, &library.rules);
    if !conflicts.is_empty() {
        return Err(PlanError::Conflict(conflicts));
    }
    let mut builder = Builder::new(PlanKind::Qos);
    for m in order_mappings(&report.mappings) {
        let pattern = library.get(&m.pattern).expect("resolved above");
        if pattern.kind != PatternKind::Qos {
            return Err(PlanError::WrongKind {
                pattern: pattern.name.clone(),
                expected: PatternKind::Qos,
                found: pattern.kind,
            });
        }
        builder.step(arch, library, &pattern.name, &m.element, m.priority, m.decl_index, m.scope.clone())?;
    }
    Ok(builder.plan)
}

/// Range used to scope platform adaptation: the interface plus direct
/// neighbours.
pub const PLATFORM_RANGE: u32 = 2;

/// Platform plan: the named pattern applied to every element tagged
/// `generic-interface`, in declaration order.
pub fn plan_platform(arch: &Architecture, library: &PatternLibrary, name: &str) -> Result<TransformationPlan, PlanError> {
    let pattern = library.get(name).ok_or_else(|| PlanError::UnknownPattern(name.to_string()))?;
    if pattern.kind != PatternKind::Platform {
        return Err(PlanError::WrongKind {
            pattern: pattern.name.clone(),
            expected: PatternKind::Platform,
            found: pattern.kind,
        });
    }
    let mut builder = Builder::new(PlanKind::Platform);
    let targets = arch
        .elements
        .iter()
        .filter(|e| e.role_tag == Some(RoleTag::GenericInterface));
    for (i, e) in targets.enumerate() {
        let mut scope = arch
            .neighbors(&e.name, (PLATFORM_RANGE - 1) as usize)
            .unwrap_or_default();
        scope.insert(e.name.clone());
        builder.step(arch, library, &pattern.name, &e.name, 1, i, scope)?;
    }
    Ok(builder.plan)
}

struct Builder {
    plan: TransformationPlan,
    introduced: BTreeSet<String>,
}

impl Builder {
    fn new(kind: PlanKind) -> Self {
        Builder {
            plan: TransformationPlan::empty(kind),
            introduced: BTreeSet::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        arch: &Architecture,
        library: &PatternLibrary,
        pattern_name: &str,
        target: &str,
        priority: u32,
        decl_index: usize,
        scope_set: BTreeSet<String>,
    ) -> Result<(), PlanError> {
        let pattern = library.get(pattern_name).expect("caller resolved the pattern");
        let index = self.plan.steps.len();
        let actions = instantiate_scoped(pattern, target, arch, &self.introduced).map_err(|source| PlanError::Pattern {
            step: index,
            pattern: pattern.name.clone(),
            target: target.to_string(),
            source,
        })?;
        for s in &actions {
            if s.scope == BlockScope::Element {
                for t in s.action.touched_elements() {
                    if !scope_set.contains(&t) && !self.introduced.contains(&t) {
                        return Err(PlanError::ScopeViolation {
                            step: index,
                            action: s.action.to_string(),
                            element: t,
                            scope: scope_set,
                        });
                    }
                }
            }
            self.introduced.extend(s.action.introduced_elements());
        }
        self.plan.steps.push(PlanStep {
            pattern: pattern.name.clone(),
            target: target.to_string(),
            priority,
            decl_index,
            actions,
            scope_set,
            provides: pattern.provides_for(target),
        });
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("step {step}, action {action}: {source}")]
    Step {
        step: usize,
        action: usize,
        source: RefineError,
    },
    #[error("step {step}: provided property `{condition}` does not hold")]
    Provides { step: usize, condition: Condition },
    #[error("cannot apply a {kind:?} plan to a {} model", .stage.as_str())]
    Stage { kind: PlanKind, stage: Stage },
    #[error("promoted model is not well formed: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Promotion(crate::model::Diagnostics),
}

impl ApplyError {
    /// Index of the failing step, when one is to blame.
    pub fn step(&self) -> Option<usize> {
        match self {
            ApplyError::Step { step, .. } | ApplyError::Provides { step, .. } => Some(*step),
            ApplyError::Stage { .. } | ApplyError::Promotion(_) => None,
        }
    }
}

/// Applies every step in order and promotes the stage. All-or-nothing: the
/// input is never modified.
pub fn apply_plan(arch: &Architecture, plan: &TransformationPlan) -> Result<Architecture, ApplyError> {
    let promoted = match (plan.kind, arch.stage) {
        (PlanKind::Qos, Stage::Geim | Stage::GeimPrime) => Stage::GeimPrime,
        (PlanKind::Platform, Stage::Geim | Stage::GeimPrime) => Stage::Gesm,
        (kind, stage) => return Err(ApplyError::Stage { kind, stage }),
    };
    let mut cur = arch.clone();
    for (step, s) in plan.steps.iter().enumerate() {
        for (action, a) in s.atomic_actions().enumerate() {
            cur = apply_action(&cur, a).map_err(|source| ApplyError::Step { step, action, source })?;
        }
        if let Some(c) = s.provides.iter().find(|c| !c.eval(&cur)) {
            return Err(ApplyError::Provides {
                step,
                condition: c.clone(),
            });
        }
    }
    cur.stage = promoted;
    let diagnostics = cur.validate();
    if !diagnostics.is_empty() {
        return Err(ApplyError::Promotion(diagnostics));
    }
    Ok(cur)
}
