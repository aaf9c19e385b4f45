//! Checked refinement actions and refinement definitions.

mod condition;
mod preserve;
mod subst;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use condition::Condition;
pub use preserve::{derive_properties, verify_preservation, verify_preservation_with, PreservationReport, RenameMap};
pub use subst::Substitution;

use crate::behaviour::{Expr, Stmt};
use crate::model::{
    ArchElement, Architecture, Attachment, Channel, Diagnostics, Direction, ElementPath, ModelNode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Include,
    Replicate,
    Unify,
    Attach,
    Rename,
    Remove,
}

impl Verb {
    pub const ALL: [Verb; 6] = [
        Verb::Include,
        Verb::Replicate,
        Verb::Unify,
        Verb::Attach,
        Verb::Rename,
        Verb::Remove,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Include => "include",
            Verb::Replicate => "replicate",
            Verb::Unify => "unify",
            Verb::Attach => "attach",
            Verb::Rename => "rename",
            Verb::Remove => "remove",
        }
    }

    pub fn parse(s: &str) -> Option<Verb> {
        Verb::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "lowercase")]
pub enum AtomicAction {
    Include(Box<ArchElement>),
    Replicate { target: ElementPath, clone_name: String },
    Unify { out_path: ElementPath, in_path: ElementPath },
    Attach { a: String, b: String },
    Rename { target: ElementPath, new_name: String },
    Remove { target: ElementPath },
}

impl AtomicAction {
    pub fn verb(&self) -> Verb {
        match self {
            AtomicAction::Include(_) => Verb::Include,
            AtomicAction::Replicate { .. } => Verb::Replicate,
            AtomicAction::Unify { .. } => Verb::Unify,
            AtomicAction::Attach { .. } => Verb::Attach,
            AtomicAction::Rename { .. } => Verb::Rename,
            AtomicAction::Remove { .. } => Verb::Remove,
        }
    }

    /// Existing top-level elements the action reads or modifies.
    pub fn touched_elements(&self) -> Vec<String> {
        match self {
            AtomicAction::Include(_) => vec![],
            AtomicAction::Replicate { target, .. }
            | AtomicAction::Rename { target, .. }
            | AtomicAction::Remove { target } => vec![target.head().to_string()],
            AtomicAction::Unify { out_path, in_path } => {
                vec![out_path.head().to_string(), in_path.head().to_string()]
            }
            AtomicAction::Attach { a, b } => vec![a.clone(), b.clone()],
        }
    }

    /// Top-level names the action brings into existence.
    pub fn introduced_elements(&self) -> Vec<String> {
        match self {
            AtomicAction::Include(e) => vec![e.name.clone()],
            AtomicAction::Replicate { clone_name, .. } => vec![clone_name.clone()],
            AtomicAction::Rename { target, new_name } if target.segments.len() == 1 => {
                vec![new_name.clone()]
            }
            _ => vec![],
        }
    }

    /// Space-separated arguments, as used by the line-oriented plan format.
    pub fn args(&self) -> Vec<String> {
        match self {
            AtomicAction::Include(e) => vec![e.name.clone(), e.kind.as_str().to_string()],
            AtomicAction::Replicate { target, clone_name } => vec![target.to_string(), clone_name.clone()],
            AtomicAction::Unify { out_path, in_path } => vec![out_path.to_string(), in_path.to_string()],
            AtomicAction::Attach { a, b } => vec![a.clone(), b.clone()],
            AtomicAction::Rename { target, new_name } => vec![target.to_string(), new_name.clone()],
            AtomicAction::Remove { target } => vec![target.to_string()],
        }
    }
}

impl fmt::Display for AtomicAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomicAction::Include(e) => write!(f, "include {} is {}", e.name, e.kind.as_str()),
            AtomicAction::Replicate { target, clone_name } => write!(f, "replicate {target} to {clone_name}"),
            AtomicAction::Unify { out_path, in_path } => write!(f, "unify {out_path} with {in_path}"),
            AtomicAction::Attach { a, b } => write!(f, "attach {a} to {b}"),
            AtomicAction::Rename { target, new_name } => write!(f, "rename {target} to {new_name}"),
            AtomicAction::Remove { target } => write!(f, "remove {target}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefineError {
    #[error("precondition-failed({verb}, {detail})")]
    PreconditionFailed { verb: String, detail: String },
    #[error("postcondition-failed: {detail}")]
    PostconditionFailed {
        detail: String,
        condition: Option<Condition>,
        diagnostics: Diagnostics,
    },
    #[error("assumption-failed: {0}")]
    AssumptionFailed(Condition),
}

impl RefineError {
    fn pre(verb: impl fmt::Display, detail: impl Into<String>) -> Self {
        RefineError::PreconditionFailed {
            verb: verb.to_string(),
            detail: detail.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RefineError::PreconditionFailed { .. } => "precondition-failed",
            RefineError::PostconditionFailed { .. } => "postcondition-failed",
            RefineError::AssumptionFailed(_) => "assumption-failed",
        }
    }
}

/// Applies one action to a copy of `arch`. The result always validates.
pub fn apply_action(arch: &Architecture, action: &AtomicAction) -> Result<Architecture, RefineError> {
    let mut out = arch.clone();
    match action {
        AtomicAction::Include(e) => {
            if out.has_element(&e.name) {
                return Err(RefineError::pre(Verb::Include, "name-in-use"));
            }
            out.elements.push((**e).clone());
        }
        AtomicAction::Replicate { target, clone_name } => {
            if target.segments.len() != 1 {
                return Err(RefineError::pre(Verb::Replicate, "target-not-top-level"));
            }
            let Some(original) = out.element(target.head()) else {
                return Err(RefineError::pre(Verb::Replicate, "unresolved-target"));
            };
            if out.has_element(clone_name) {
                return Err(RefineError::pre(Verb::Replicate, "name-in-use"));
            }
            let mut clone = original.clone();
            clone.name = clone_name.clone();
            strip_annotations(&mut clone);
            out.elements.push(clone);
        }
        AtomicAction::Unify { out_path, in_path } => {
            let (from, to) = normalize_unify(&out, out_path, in_path)?;
            let ch = Channel { from, to };
            if out.channels.contains(&ch) {
                return Err(RefineError::pre(Verb::Unify, "duplicate-channel"));
            }
            out.channels.push(ch);
        }
        AtomicAction::Attach { a, b } => {
            if !out.has_element(a) || !out.has_element(b) {
                return Err(RefineError::pre(Verb::Attach, "unresolved-element"));
            }
            if a == b {
                return Err(RefineError::pre(Verb::Attach, "self-attachment"));
            }
            if out.attachments.iter().any(|at| at.links(a, b)) {
                return Err(RefineError::pre(Verb::Attach, "already-attached"));
            }
            out.attachments.push(Attachment { a: a.clone(), b: b.clone() });
        }
        AtomicAction::Rename { target, new_name } => rename(&mut out, target, new_name)?,
        AtomicAction::Remove { target } => remove(&mut out, target)?,
    }
    let diagnostics = out.validate();
    if !diagnostics.is_empty() {
        return Err(RefineError::PostconditionFailed {
            detail: format!("`{action}` produced an ill-formed architecture: {}", diagnostics[0]),
            condition: None,
            diagnostics,
        });
    }
    Ok(out)
}

fn strip_annotations(e: &mut ArchElement) {
    e.annotations.clear();
    for c in &mut e.children {
        strip_annotations(c);
    }
}

/// `unify A with B` names its endpoints in either order; the channel always
/// runs outgoing -> incoming.
fn normalize_unify(
    arch: &Architecture,
    a: &ElementPath,
    b: &ElementPath,
) -> Result<(ElementPath, ElementPath), RefineError> {
    let (Some(ca), Some(cb)) = (arch.resolve_connection(a), arch.resolve_connection(b)) else {
        return Err(RefineError::pre(Verb::Unify, "unresolved-connection"));
    };
    let (from, to, cf, ct) = match (ca.direction, cb.direction) {
        (Direction::Outgoing, Direction::Incoming) => (a, b, ca, cb),
        (Direction::Incoming, Direction::Outgoing) => (b, a, cb, ca),
        _ => return Err(RefineError::pre(Verb::Unify, "direction")),
    };
    if cf.payload != ct.payload {
        return Err(RefineError::pre(Verb::Unify, "payload-mismatch"));
    }
    Ok((from.clone(), to.clone()))
}

fn replace_prefix(p: &mut ElementPath, old: &ElementPath, new: &ElementPath) {
    if p.starts_with(old) {
        let mut segments = new.segments.clone();
        segments.extend_from_slice(&p.segments[old.segments.len()..]);
        *p = ElementPath::new(segments);
    }
}

fn rename(arch: &mut Architecture, target: &ElementPath, new_name: &str) -> Result<(), RefineError> {
    let node = arch
        .resolve(target)
        .map_err(|_| RefineError::pre(Verb::Rename, "unresolved-target"))?;
    let mut renamed = target.clone();
    *renamed.segments.last_mut().unwrap() = new_name.to_string();
    let sibling_taken = if target.segments.len() == 1 {
        arch.has_element(new_name)
    } else {
        let parent = ElementPath::new(target.segments[..target.segments.len() - 1].to_vec());
        match (node, arch.resolve(&parent)) {
            (ModelNode::Element(_) | ModelNode::Port(_), Ok(ModelNode::Element(pe))) => {
                pe.child(new_name).is_some() || pe.port(new_name).is_some()
            }
            (ModelNode::Connection(_), Ok(ModelNode::Port(pp))) => pp.connection(new_name).is_some(),
            _ => true,
        }
    };
    if sibling_taken {
        return Err(RefineError::pre(Verb::Rename, "name-in-use"));
    }

    let old_name = target.segments.last().unwrap().clone();
    let kind = node_kind(node);
    with_node_mut(arch, target, |n| match n {
        NodeMut::Element(e) => e.name = new_name.to_string(),
        NodeMut::Port(p) => p.name = new_name.to_string(),
        NodeMut::Connection(c) => c.name = new_name.to_string(),
    });

    for ch in &mut arch.channels {
        replace_prefix(&mut ch.from, target, &renamed);
        replace_prefix(&mut ch.to, target, &renamed);
    }

    if target.segments.len() == 1 {
        for at in &mut arch.attachments {
            for end in [&mut at.a, &mut at.b] {
                if *end == old_name {
                    *end = new_name.to_string();
                }
            }
        }
        // Element names also appear in behaviours as routing targets and
        // builtin arguments such as `serviceDown(X)`.
        for e in &mut arch.elements {
            rename_behaviour_refs(e, &old_name, new_name);
        }
    } else if kind != NodeKindTag::Element {
        // Ports and connections are referenced by `via` paths relative to the
        // owning element.
        let owner_len = match kind {
            NodeKindTag::Port => target.segments.len() - 1,
            _ => target.segments.len() - 2,
        };
        let owner = ElementPath::new(target.segments[..owner_len].to_vec());
        let local_old = ElementPath::new(target.segments[owner_len..].to_vec());
        let local_new = ElementPath::new(renamed.segments[owner_len..].to_vec());
        with_node_mut(arch, &owner, |n| {
            if let NodeMut::Element(e) = n {
                if let Some(b) = &mut e.behaviour {
                    for a in &mut b.abstractions {
                        for s in &mut a.body {
                            s.walk_mut(&mut |s| {
                                if let Stmt::Send { path, .. } | Stmt::Receive { path, .. } = s {
                                    replace_prefix(path, &local_old, &local_new);
                                    if kind == NodeKindTag::Connection
                                        && path.segments.len() == 1
                                        && path.segments[0] == old_name
                                    {
                                        path.segments[0] = new_name.to_string();
                                    }
                                }
                            });
                        }
                    }
                }
            }
        });
    }
    Ok(())
}

fn rename_behaviour_refs(e: &mut ArchElement, old: &str, new: &str) {
    if let Some(b) = &mut e.behaviour {
        let fix_expr = |x: &mut Expr| {
            x.walk_mut(&mut |x| {
                if let Expr::Var(v) = x {
                    if v == old {
                        *v = new.to_string();
                    }
                }
            })
        };
        for (_, x) in &mut b.values {
            fix_expr(x);
        }
        for a in &mut b.abstractions {
            for s in &mut a.body {
                s.walk_mut(&mut |s| match s {
                    Stmt::RouteAssign { target, .. } if target == old => *target = new.to_string(),
                    Stmt::If { cond, .. } => fix_expr(cond),
                    Stmt::Send { expr, .. } | Stmt::Assign { expr, .. } => fix_expr(expr),
                    Stmt::External { args, .. } => args.iter_mut().for_each(fix_expr),
                    _ => {}
                });
            }
        }
    }
    for c in &mut e.children {
        rename_behaviour_refs(c, old, new);
    }
}

fn remove(arch: &mut Architecture, target: &ElementPath) -> Result<(), RefineError> {
    arch.resolve(target)
        .map_err(|_| RefineError::pre(Verb::Remove, "unresolved-target"))?;
    if target.segments.len() == 1 {
        arch.elements.retain(|e| e.name != target.segments[0]);
        arch.attachments
            .retain(|at| at.a != target.segments[0] && at.b != target.segments[0]);
    } else {
        let parent = ElementPath::new(target.segments[..target.segments.len() - 1].to_vec());
        let last = target.segments.last().unwrap().clone();
        with_node_mut(arch, &parent, |n| match n {
            NodeMut::Element(e) => {
                if e.child(&last).is_some() {
                    e.children.retain(|c| c.name != last);
                } else {
                    e.ports.retain(|p| p.name != last);
                }
            }
            NodeMut::Port(p) => {
                p.incoming.retain(|c| c.name != last);
                p.outgoing.retain(|c| c.name != last);
            }
            NodeMut::Connection(_) => {}
        });
    }
    arch.channels
        .retain(|ch| !ch.from.starts_with(target) && !ch.to.starts_with(target));
    if arch.channels.iter().any(|ch| ch.from.starts_with(target) || ch.to.starts_with(target)) {
        return Err(RefineError::pre(Verb::Remove, "still-referenced"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeKindTag {
    Element,
    Port,
    Connection,
}

fn node_kind(n: ModelNode<'_>) -> NodeKindTag {
    match n {
        ModelNode::Element(_) => NodeKindTag::Element,
        ModelNode::Port(_) => NodeKindTag::Port,
        ModelNode::Connection(_) => NodeKindTag::Connection,
    }
}

enum NodeMut<'a> {
    Element(&'a mut ArchElement),
    Port(&'a mut crate::model::Port),
    Connection(&'a mut crate::model::Connection),
}

/// Mutable counterpart of [`Architecture::resolve`]; a no-op when unresolved.
fn with_node_mut(arch: &mut Architecture, path: &ElementPath, f: impl FnOnce(NodeMut<'_>)) {
    let mut segs = path.segments.iter();
    let Some(first) = segs.next() else { return };
    let Some(mut elem) = arch.elements.iter_mut().find(|e| &e.name == first) else {
        return;
    };
    let rest: Vec<&String> = segs.collect();
    let mut i = 0;
    while i < rest.len() && elem.children.iter().any(|c| &c.name == rest[i]) {
        elem = elem.children.iter_mut().find(|c| &c.name == rest[i]).unwrap();
        i += 1;
    }
    if i == rest.len() {
        return f(NodeMut::Element(elem));
    }
    let Some(port) = elem.ports.iter_mut().find(|p| &p.name == rest[i]) else {
        return;
    };
    if i + 1 == rest.len() {
        return f(NodeMut::Port(port));
    }
    if i + 2 != rest.len() {
        return;
    }
    let name = rest[i + 1];
    if let Some(c) = port
        .incoming
        .iter_mut()
        .chain(port.outgoing.iter_mut())
        .find(|c| &c.name == name)
    {
        f(NodeMut::Connection(c));
    }
}

/// `on a : architecture action <name> is refinement (<params>) { ... }`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementDefinition {
    /// Name of the architecture variable (`a` in `on a : architecture`).
    pub arch_var: String,
    pub name: String,
    pub params: Vec<String>,
    pub pre: Option<Condition>,
    pub post: Option<Condition>,
    /// `None` when the definition has no `transformation is { }` clause.
    pub transformation: Option<Vec<AtomicAction>>,
    pub assuming: Option<Condition>,
}

impl RefinementDefinition {
    pub fn actions(&self) -> &[AtomicAction] {
        self.transformation.as_deref().unwrap_or(&[])
    }

    pub fn bind(&self, args: &[ElementPath]) -> Result<Substitution, RefineError> {
        if args.len() != self.params.len() {
            return Err(RefineError::pre(
                &self.name,
                format!("arity: expected {} argument(s), got {}", self.params.len(), args.len()),
            ));
        }
        Ok(self
            .params
            .iter()
            .zip(args)
            .fold(Substitution::new(), |s, (p, a)| s.bind(p, a.clone())))
    }
}

/// Runs every action of `def` in order, all or nothing. On error `arch` is
/// untouched and remains the caller's current model.
pub fn execute_refinement(
    arch: &Architecture,
    def: &RefinementDefinition,
    args: &[ElementPath],
) -> Result<Architecture, RefineError> {
    let subst = def.bind(args)?;
    if let Some(pre) = &def.pre {
        let pre = subst.condition(pre);
        if !pre.eval(arch) {
            return Err(RefineError::pre(&def.name, format!("pre condition `{pre}` is false")));
        }
    }
    if let Some(assumption) = &def.assuming {
        let assumption = subst.condition(assumption);
        if !assumption.eval(arch) {
            return Err(RefineError::AssumptionFailed(assumption));
        }
    }
    let mut cur = arch.clone();
    for action in def.actions() {
        cur = apply_action(&cur, &subst.action(action))?;
    }
    if let Some(post) = &def.post {
        let post = subst.condition(post);
        if !post.eval(&cur) {
            return Err(RefineError::PostconditionFailed {
                detail: format!("post condition `{post}` is false"),
                condition: Some(post),
                diagnostics: Vec::new(),
            });
        }
    }
    Ok(cur)
}

/// Applies a ground action sequence as one atomic refinement.
pub fn apply_actions(arch: &Architecture, actions: &[AtomicAction]) -> Result<Architecture, (usize, RefineError)> {
    let mut cur = arch.clone();
    for (i, a) in actions.iter().enumerate() {
        cur = apply_action(&cur, a).map_err(|e| (i, e))?;
    }
    Ok(cur)
}
