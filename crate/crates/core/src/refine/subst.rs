//! Binding of pattern variables and refinement parameters.
//!
//! A variable `v` bound to a path rewrites any identifier equal to `v`, and
//! any identifier of the form `v` + suffix where the suffix starts with an
//! uppercase letter, digit or underscore (`vClone0` becomes `<target>Clone0`).

use crate::behaviour::{Behaviour, Expr, Stmt};
use crate::model::{ArchElement, ElementPath};

use super::{AtomicAction, Condition};

#[derive(Debug, Clone, Default)]
pub struct Substitution {
    bindings: Vec<(String, ElementPath)>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, var: impl Into<String>, value: ElementPath) -> Self {
        self.bindings.push((var.into(), value));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    fn lookup<'s, 'i>(&'s self, id: &'i str) -> Option<(&'s ElementPath, &'i str)> {
        for (var, value) in &self.bindings {
            if id == var {
                return Some((value, ""));
            }
            if let Some(rest) = id.strip_prefix(var.as_str()) {
                if rest
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
                {
                    return Some((value, rest));
                }
            }
        }
        None
    }

    /// Rewrites a single identifier. A multi-segment binding used as a bare
    /// identifier contributes its last segment.
    pub fn ident(&self, id: &str) -> String {
        match self.lookup(id) {
            Some((value, "")) => value.to_string(),
            Some((value, rest)) => format!("{}{rest}", value.segments.last().unwrap()),
            None => id.to_string(),
        }
    }

    pub fn path(&self, p: &ElementPath) -> ElementPath {
        let mut segments = Vec::with_capacity(p.segments.len());
        for seg in &p.segments {
            match self.lookup(seg) {
                Some((value, "")) => segments.extend(value.segments.iter().cloned()),
                Some((value, rest)) => {
                    let (last, init) = value.segments.split_last().unwrap();
                    segments.extend(init.iter().cloned());
                    segments.push(format!("{last}{rest}"));
                }
                None => segments.push(seg.clone()),
            }
        }
        ElementPath::new(segments)
    }

    pub fn condition(&self, c: &Condition) -> Condition {
        c.map_names(&|p| self.path(p), &|s| self.ident(s))
    }

    pub fn action(&self, a: &AtomicAction) -> AtomicAction {
        match a {
            AtomicAction::Include(e) => AtomicAction::Include(Box::new(self.element(e))),
            AtomicAction::Replicate { target, clone_name } => AtomicAction::Replicate {
                target: self.path(target),
                clone_name: self.ident(clone_name),
            },
            AtomicAction::Unify { out_path, in_path } => AtomicAction::Unify {
                out_path: self.path(out_path),
                in_path: self.path(in_path),
            },
            AtomicAction::Attach { a, b } => AtomicAction::Attach {
                a: self.ident(a),
                b: self.ident(b),
            },
            AtomicAction::Rename { target, new_name } => AtomicAction::Rename {
                target: self.path(target),
                new_name: self.ident(new_name),
            },
            AtomicAction::Remove { target } => AtomicAction::Remove {
                target: self.path(target),
            },
        }
    }

    /// Element name, child names and behaviour identifiers; ports and types
    /// are left alone.
    pub fn element(&self, e: &ArchElement) -> ArchElement {
        let mut out = e.clone();
        out.name = self.ident(&e.name);
        out.children = e.children.iter().map(|c| self.element(c)).collect();
        if let Some(b) = &mut out.behaviour {
            self.behaviour(b);
        }
        out
    }

    fn behaviour(&self, b: &mut Behaviour) {
        for (_, e) in &mut b.values {
            self.expr(e);
        }
        for a in &mut b.abstractions {
            for s in &mut a.body {
                s.walk_mut(&mut |s| match s {
                    Stmt::Send { expr, .. } | Stmt::Assign { expr, .. } => self.expr(expr),
                    Stmt::If { cond, .. } => self.expr(cond),
                    Stmt::External { args, .. } => args.iter_mut().for_each(|a| self.expr(a)),
                    Stmt::RouteAssign { target, .. } => *target = self.ident(target),
                    Stmt::Receive { .. } | Stmt::Invoke(_) => {}
                });
            }
        }
    }

    fn expr(&self, e: &mut Expr) {
        e.walk_mut(&mut |e| {
            if let Expr::Var(v) = e {
                *v = self.ident(v);
            }
        });
    }
}
