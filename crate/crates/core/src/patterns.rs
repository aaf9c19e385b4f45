//! Constraint (QoS) and platform design patterns, and their instantiation
//! against a concrete target element.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Architecture, Direction, ElementPath};
use crate::parser::{self, ParseError, SourceKind, SourceUnit};
use crate::planner::{CompatibilityRule, Relation};
use crate::refine::{AtomicAction, Condition, Substitution};

/// Path written as `*` in a `unify`: stands for every current channel
/// partner of the other endpoint.
pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Qos,
    Platform,
}

impl PatternKind {
    /// Keyword used in pattern sources.
    pub fn keyword(self) -> &'static str {
        match self {
            PatternKind::Qos => "qualityOfServiceProperty",
            PatternKind::Platform => "gridPlatform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockScope {
    Architecture,
    Element,
}

impl BlockScope {
    pub fn keyword(self) -> &'static str {
        match self {
            BlockScope::Architecture => "architecture",
            BlockScope::Element => "architecturalElement",
        }
    }
}

/// An action whose identifiers may mention the pattern's element variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionTemplate(pub AtomicAction);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternBlock {
    pub scope: BlockScope,
    pub var: String,
    pub actions: Vec<ActionTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintPattern {
    pub name: String,
    /// Further names annotations may use to select this pattern.
    pub aliases: Vec<String>,
    pub kind: PatternKind,
    pub blocks: Vec<PatternBlock>,
    pub provides: Vec<Condition>,
    pub conflicts_with: Vec<String>,
}

impl ConstraintPattern {
    pub fn element_var(&self) -> Option<&str> {
        self.blocks
            .iter()
            .find(|b| b.scope == BlockScope::Element)
            .map(|b| b.var.as_str())
    }

    pub fn answers_to(&self, name: &str) -> bool {
        self.name == name || self.aliases.iter().any(|a| a == name)
    }

    pub fn substitution(&self, target: &str) -> Substitution {
        match self.element_var() {
            Some(var) => Substitution::new().bind(var, ElementPath::single(target)),
            None => Substitution::new(),
        }
    }

    /// `provides` conditions with the element variable bound to `target`.
    pub fn provides_for(&self, target: &str) -> Vec<Condition> {
        let s = self.substitution(target);
        self.provides.iter().map(|c| s.condition(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("name-collision({0})")]
    NameCollision(String),
    #[error("unbound-variable({0})")]
    UnboundVariable(String),
    #[error("unresolved-target({0})")]
    UnresolvedTarget(String),
}

/// Ground action together with the block scope it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopedAction {
    pub scope: BlockScope,
    pub action: AtomicAction,
}

pub fn instantiate(
    pattern: &ConstraintPattern,
    target: &str,
    arch: &Architecture,
) -> Result<Vec<AtomicAction>, PatternError> {
    Ok(instantiate_scoped(pattern, target, arch, &BTreeSet::new())?
        .into_iter()
        .map(|s| s.action)
        .collect())
}

/// Like [`instantiate`], additionally treating `taken` as occupied names
/// (used by the planner for names introduced by earlier plan steps).
pub fn instantiate_scoped(
    pattern: &ConstraintPattern,
    target: &str,
    arch: &Architecture,
    taken: &BTreeSet<String>,
) -> Result<Vec<ScopedAction>, PatternError> {
    let has_actions = pattern.blocks.iter().any(|b| !b.actions.is_empty());
    if !has_actions {
        return Ok(Vec::new());
    }
    if pattern.element_var().is_some() && !arch.has_element(target) {
        return Err(PatternError::UnresolvedTarget(target.to_string()));
    }
    let subst = pattern.substitution(target);
    let arch_vars: BTreeSet<&str> = pattern
        .blocks
        .iter()
        .filter(|b| b.scope == BlockScope::Architecture)
        .map(|b| b.var.as_str())
        .collect();

    let mut out = Vec::new();
    for block in &pattern.blocks {
        for ActionTemplate(tmpl) in &block.actions {
            if let Some(v) = tmpl
                .touched_elements()
                .into_iter()
                .find(|n| arch_vars.contains(n.as_str()))
            {
                return Err(PatternError::UnboundVariable(v));
            }
            let ground = subst.action(tmpl);
            for action in expand_wildcards(ground, arch) {
                out.push(ScopedAction {
                    scope: block.scope,
                    action,
                });
            }
        }
    }

    // Walk the name set forward so that `remove X; include X` is legal.
    let mut live: BTreeSet<String> = arch.element_names().map(str::to_string).collect();
    live.extend(taken.iter().cloned());
    for s in &out {
        if let AtomicAction::Remove { target } = &s.action {
            if target.segments.len() == 1 {
                live.remove(target.head());
            }
        }
        for name in s.action.introduced_elements() {
            if !live.insert(name.clone()) {
                return Err(PatternError::NameCollision(name));
            }
        }
    }
    Ok(out)
}

fn is_wildcard(p: &ElementPath) -> bool {
    p.segments.len() == 1 && p.segments[0] == WILDCARD
}

/// `unify * with X` becomes one `unify P with X` per current channel
/// partner; `attach * to E` one `attach A to E` per element attached to E.
fn expand_wildcards(action: AtomicAction, arch: &Architecture) -> Vec<AtomicAction> {
    if let AtomicAction::Attach { a, b } = &action {
        let (wild_first, anchor) = match (a == WILDCARD, b == WILDCARD) {
            (true, false) => (true, b),
            (false, true) => (false, a),
            _ => return vec![action],
        };
        return arch
            .attachments
            .iter()
            .filter_map(|at| match (&at.a, &at.b) {
                (x, y) if x == anchor && y != anchor => Some(y),
                (x, y) if y == anchor && x != anchor => Some(x),
                _ => None,
            })
            .map(|p| {
                let (a, b) = if wild_first { (p, anchor) } else { (anchor, p) };
                AtomicAction::Attach { a: a.clone(), b: b.clone() }
            })
            .collect();
    }
    let AtomicAction::Unify { out_path, in_path } = &action else {
        return vec![action];
    };
    let (wild_first, anchor) = match (is_wildcard(out_path), is_wildcard(in_path)) {
        (true, false) => (true, in_path),
        (false, true) => (false, out_path),
        _ => return vec![action],
    };
    let Some(conn) = arch.resolve_connection(anchor) else {
        return vec![];
    };
    let partners: Vec<&ElementPath> = match conn.direction {
        Direction::Incoming => arch.channels.iter().filter(|c| &c.to == anchor).map(|c| &c.from).collect(),
        Direction::Outgoing => arch.channels.iter().filter(|c| &c.from == anchor).map(|c| &c.to).collect(),
    };
    partners
        .into_iter()
        .map(|p| {
            let (a, b) = if wild_first { (p, anchor) } else { (anchor, p) };
            AtomicAction::Unify {
                out_path: a.clone(),
                in_path: b.clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternLibrary {
    pub patterns: BTreeMap<String, ConstraintPattern>,
    pub rules: Vec<CompatibilityRule>,
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate pattern name `{0}`")]
    DuplicatePattern(String),
    #[error("{path}:{line}: {message}")]
    Rules { path: String, line: usize, message: String },
    #[error("compatibility rule references unknown pattern `{0}`")]
    UnknownPattern(String),
}

impl PatternLibrary {
    pub fn new(patterns: Vec<ConstraintPattern>, mut rules: Vec<CompatibilityRule>) -> Result<Self, LibraryError> {
        let mut map = BTreeMap::new();
        for p in patterns {
            for c in &p.conflicts_with {
                rules.push(CompatibilityRule {
                    pattern_a: p.name.clone(),
                    pattern_b: c.clone(),
                    relation: Relation::Conflicts,
                });
            }
            if let Some(prev) = map.insert(p.name.clone(), p) {
                return Err(LibraryError::DuplicatePattern(prev.name));
            }
        }
        let mut lib = PatternLibrary { patterns: map, rules: Vec::new() };
        for r in rules {
            let a = lib.canonical_name(&r.pattern_a).ok_or_else(|| LibraryError::UnknownPattern(r.pattern_a.clone()))?;
            let b = lib.canonical_name(&r.pattern_b).ok_or_else(|| LibraryError::UnknownPattern(r.pattern_b.clone()))?;
            let rule = CompatibilityRule {
                pattern_a: a,
                pattern_b: b,
                relation: r.relation,
            };
            if !lib.rules.iter().any(|x| x.same_as(&rule)) {
                lib.rules.push(rule);
            }
        }
        Ok(lib)
    }

    /// Looks a pattern up by name or alias.
    pub fn get(&self, name: &str) -> Option<&ConstraintPattern> {
        self.patterns
            .get(name)
            .or_else(|| self.patterns.values().find(|p| p.answers_to(name)))
    }

    pub fn canonical_name(&self, name: &str) -> Option<String> {
        self.get(name).map(|p| p.name.clone())
    }

    /// Loads every `.gecm`/`.getm` pattern and `.rules` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, LibraryError> {
        let mut entries: Vec<_> = fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .collect();
        entries.sort();
        let mut patterns = Vec::new();
        let mut rules = Vec::new();
        for path in entries {
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            let shown = path.display().to_string();
            match ext {
                "gecm" | "getm" => {
                    let text = fs::read_to_string(&path)?;
                    let unit = SourceUnit::new(SourceKind::Pattern, text, &shown);
                    let p = parser::parse_pattern(&unit).map_err(|source| LibraryError::Parse { path: shown.clone(), source })?;
                    patterns.push(p);
                }
                "rules" => {
                    let text = fs::read_to_string(&path)?;
                    rules.extend(parse_rules(&text, &shown)?);
                }
                _ => {}
            }
        }
        PatternLibrary::new(patterns, rules)
    }
}

/// Line format: `conflicts|requires|independent <a> <b>`, `--` comments.
pub fn parse_rules(text: &str, origin: &str) -> Result<Vec<CompatibilityRule>, LibraryError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split("--").next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| LibraryError::Rules {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let [rel, a, b] = fields.as_slice() else {
            return Err(err(format!("expected `<relation> <pattern> <pattern>`, found `{line}`")));
        };
        let relation = Relation::parse(rel)
            .ok_or_else(|| err(format!("unknown relation `{rel}`; expected conflicts, requires or independent")))?;
        out.push(CompatibilityRule {
            pattern_a: a.to_string(),
            pattern_b: b.to_string(),
            relation,
        });
    }
    Ok(out)
}

pub(crate) const BUILTIN_SOURCES: &[(&str, &str)] = &[
    ("faulttolerance.gecm", include_str!("../library/faulttolerance.gecm")),
    ("loadbalancing.gecm", include_str!("../library/loadbalancing.gecm")),
    ("platform_a.getm", include_str!("../library/platform_a.getm")),
    ("platform_b.getm", include_str!("../library/platform_b.getm")),
];

pub(crate) const BUILTIN_RULES: &str = include_str!("../library/compat.rules");

/// The shipped pattern library, parsed from the embedded pattern sources.
pub fn builtin_library() -> PatternLibrary {
    let patterns = BUILTIN_SOURCES
        .iter()
        .map(|(name, text)| {
            let unit = SourceUnit::new(SourceKind::Pattern, *text, *name);
            parser::parse_pattern(&unit).unwrap_or_else(|e| panic!("builtin pattern {name} is invalid: {e}"))
        })
        .collect();
    let rules = parse_rules(BUILTIN_RULES, "compat.rules").expect("builtin rules are valid");
    PatternLibrary::new(patterns, rules).expect("builtin library is consistent")
}

/// Embedded pattern sources, keyed by file name.
pub fn builtin_sources() -> &'static [(&'static str, &'static str)] {
    BUILTIN_SOURCES
}
