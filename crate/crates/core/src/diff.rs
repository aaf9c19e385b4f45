//! Structural comparison of two architectures.
//!
//! The diff is empty exactly when the models are structurally equal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::model::{ArchElement, Architecture, Attachment, Channel, Stage};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ModelDiff {
    pub name: Option<(String, String)>,
    pub style: Option<(Option<String>, Option<String>)>,
    pub stage: Option<(Stage, Stage)>,
    pub types_changed: bool,
    /// (name, kind)
    pub added_elements: Vec<(String, String)>,
    pub removed_elements: Vec<String>,
    /// (name, changed aspects)
    pub changed_elements: Vec<(String, Vec<&'static str>)>,
    /// (old, new): same content under a new name
    pub renamed_elements: Vec<(String, String)>,
    pub added_channels: Vec<Channel>,
    pub removed_channels: Vec<Channel>,
    pub added_attachments: Vec<Attachment>,
    pub removed_attachments: Vec<Attachment>,
}

fn aspects(a: &ArchElement, b: &ArchElement) -> Vec<&'static str> {
    let mut v = Vec::new();
    if a.kind != b.kind {
        v.push("kind");
    }
    if a.role_tag != b.role_tag {
        v.push("role");
    }
    if a.weight != b.weight {
        v.push("weight");
    }
    if a.type_decls != b.type_decls {
        v.push("types");
    }
    if a.ports != b.ports {
        v.push("ports");
    }
    if a.behaviour != b.behaviour {
        v.push("behaviour");
    }
    if a.children != b.children {
        v.push("children");
    }
    if a.annotations != b.annotations {
        v.push("annotations");
    }
    v
}

fn same_but_name(a: &ArchElement, b: &ArchElement) -> bool {
    let mut b = b.clone();
    b.name = a.name.clone();
    *a == b
}

pub fn diff(before: &Architecture, after: &Architecture) -> ModelDiff {
    let a = before.canonical();
    let b = after.canonical();
    let mut d = ModelDiff::default();
    if a.name != b.name {
        d.name = Some((a.name.clone(), b.name.clone()));
    }
    if a.style_ref != b.style_ref {
        d.style = Some((a.style_ref.clone(), b.style_ref.clone()));
    }
    if a.stage != b.stage {
        d.stage = Some((a.stage, b.stage));
    }
    d.types_changed = a.type_decls != b.type_decls;

    let old: BTreeMap<&str, &ArchElement> = a.elements.iter().map(|e| (e.name.as_str(), e)).collect();
    let new: BTreeMap<&str, &ArchElement> = b.elements.iter().map(|e| (e.name.as_str(), e)).collect();
    let mut removed: Vec<&ArchElement> = Vec::new();
    for (name, e) in &old {
        match new.get(name) {
            None => removed.push(e),
            Some(n) if n != e => d.changed_elements.push((name.to_string(), aspects(e, n))),
            Some(_) => {}
        }
    }
    let mut added: Vec<&ArchElement> = new.iter().filter(|(n, _)| !old.contains_key(*n)).map(|(_, e)| *e).collect();
    removed.retain(|r| match added.iter().position(|x| same_but_name(r, x)) {
        Some(i) => {
            d.renamed_elements.push((r.name.clone(), added.remove(i).name.clone()));
            false
        }
        None => true,
    });
    d.removed_elements = removed.iter().map(|e| e.name.clone()).collect();
    d.added_elements = added.iter().map(|e| (e.name.clone(), e.kind.as_str().to_string())).collect();

    let ca: BTreeSet<&Channel> = a.channels.iter().collect();
    let cb: BTreeSet<&Channel> = b.channels.iter().collect();
    d.added_channels = cb.difference(&ca).map(|c| (*c).clone()).collect();
    d.removed_channels = ca.difference(&cb).map(|c| (*c).clone()).collect();
    let aa: BTreeSet<&Attachment> = a.attachments.iter().collect();
    let ab: BTreeSet<&Attachment> = b.attachments.iter().collect();
    d.added_attachments = ab.difference(&aa).map(|c| (*c).clone()).collect();
    d.removed_attachments = aa.difference(&ab).map(|c| (*c).clone()).collect();
    d
}

impl ModelDiff {
    pub fn is_empty(&self) -> bool {
        self.name.is_none()
            && self.style.is_none()
            && self.stage.is_none()
            && !self.types_changed
            && self.added_elements.is_empty()
            && self.removed_elements.is_empty()
            && self.changed_elements.is_empty()
            && self.renamed_elements.is_empty()
            && self.added_channels.is_empty()
            && self.removed_channels.is_empty()
            && self.added_attachments.is_empty()
            && self.removed_attachments.is_empty()
    }

    /// Top-level element names mentioned anywhere in the diff, including
    /// channel endpoints and attachments.
    pub fn touched_elements(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        s.extend(self.added_elements.iter().map(|(n, _)| n.clone()));
        s.extend(self.removed_elements.iter().cloned());
        s.extend(self.changed_elements.iter().map(|(n, _)| n.clone()));
        for (a, b) in &self.renamed_elements {
            s.insert(a.clone());
            s.insert(b.clone());
        }
        for c in self.added_channels.iter().chain(&self.removed_channels) {
            s.insert(c.from.head().to_string());
            s.insert(c.to.head().to_string());
        }
        for at in self.added_attachments.iter().chain(&self.removed_attachments) {
            s.insert(at.a.clone());
            s.insert(at.b.clone());
        }
        s
    }
}

impl fmt::Display for ModelDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((a, b)) = &self.name {
            writeln!(f, "name {a} -> {b}")?;
        }
        if let Some((a, b)) = &self.style {
            writeln!(f, "style {} -> {}", a.as_deref().unwrap_or("-"), b.as_deref().unwrap_or("-"))?;
        }
        if let Some((a, b)) = self.stage {
            writeln!(f, "stage {} -> {}", a.as_str(), b.as_str())?;
        }
        if self.types_changed {
            writeln!(f, "~ types")?;
        }
        for (n, k) in &self.added_elements {
            writeln!(f, "+ element {n} {k}")?;
        }
        for n in &self.removed_elements {
            writeln!(f, "- element {n}")?;
        }
        for (n, what) in &self.changed_elements {
            writeln!(f, "~ element {n} ({})", what.join(", "))?;
        }
        for (a, b) in &self.renamed_elements {
            writeln!(f, "> rename {a} {b}")?;
        }
        for c in &self.added_channels {
            writeln!(f, "+ channel {} -> {}", c.from, c.to)?;
        }
        for c in &self.removed_channels {
            writeln!(f, "- channel {} -> {}", c.from, c.to)?;
        }
        for at in &self.added_attachments {
            writeln!(f, "+ attach {} {}", at.a, at.b)?;
        }
        for at in &self.removed_attachments {
            writeln!(f, "- attach {} {}", at.a, at.b)?;
        }
        Ok(())
    }
}
