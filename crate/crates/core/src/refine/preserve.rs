use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Condition;
use crate::model::{Architecture, ElementPath};

/// Renames applied between an abstract model and its refinement, keyed by
/// the old path. Entries rewrite any path they prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenameMap {
    pub entries: BTreeMap<ElementPath, ElementPath>,
}

impl RenameMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, old: ElementPath, new: ElementPath) {
        self.entries.insert(old, new);
    }

    pub fn path(&self, p: &ElementPath) -> ElementPath {
        // Longest matching prefix wins.
        let best = self
            .entries
            .iter()
            .filter(|(old, _)| p.starts_with(old))
            .max_by_key(|(old, _)| old.segments.len());
        match best {
            Some((old, new)) => {
                let mut segments = new.segments.clone();
                segments.extend_from_slice(&p.segments[old.segments.len()..]);
                ElementPath::new(segments)
            }
            None => p.clone(),
        }
    }

    pub fn name(&self, n: &str) -> String {
        self.entries
            .get(&ElementPath::single(n))
            .map_or_else(|| n.to_string(), |p| p.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreservationReport {
    pub checked: Vec<(Condition, bool)>,
    pub passed: bool,
}

impl PreservationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Condition> {
        self.checked.iter().filter(|(_, ok)| !ok).map(|(c, _)| c)
    }

    /// `PASS|FAIL <condition>` per property, then `RESULT PASS|FAIL`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (c, ok) in &self.checked {
            let _ = writeln!(s, "{} {c}", if *ok { "PASS" } else { "FAIL" });
        }
        let _ = writeln!(s, "RESULT {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}

/// Structural properties of `abstract_arch` a refinement must keep: every
/// top-level element, every attachment and every channel.
pub fn derive_properties(abstract_arch: &Architecture) -> Vec<Condition> {
    let mut props: Vec<Condition> = abstract_arch
        .elements
        .iter()
        .map(|e| Condition::Exists(ElementPath::single(&e.name)))
        .collect();
    props.extend(
        abstract_arch
            .attachments
            .iter()
            .map(|at| Condition::Attached(at.a.clone(), at.b.clone())),
    );
    props.extend(
        abstract_arch
            .channels
            .iter()
            .map(|ch| Condition::ChannelBetween(ch.from.clone(), ch.to.clone())),
    );
    props
}

pub fn verify_preservation(abstract_arch: &Architecture, concrete: &Architecture) -> PreservationReport {
    verify_preservation_with(abstract_arch, concrete, &RenameMap::new())
}

pub fn verify_preservation_with(
    abstract_arch: &Architecture,
    concrete: &Architecture,
    renames: &RenameMap,
) -> PreservationReport {
    let checked: Vec<(Condition, bool)> = derive_properties(abstract_arch)
        .into_iter()
        .map(|c| {
            let mapped = c.map_names(&|p| renames.path(p), &|n| renames.name(n));
            let ok = mapped.eval(concrete);
            (mapped, ok)
        })
        .collect();
    let passed = checked.iter().all(|(_, ok)| *ok);
    PreservationReport { checked, passed }
}
