//! Behaviour IR attached to architecture elements.
//!
//! Statements are kept close to the surface syntax so that rendering is a
//! straight walk over the tree. The simulator interprets this IR directly.

use serde::{Deserialize, Serialize};

use crate::model::{ElementPath, TypeExpr};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Behaviour {
    /// `value x := expr;` bindings evaluated once when the element starts.
    pub values: Vec<(String, Expr)>,
    pub abstractions: Vec<Abstraction>,
    /// Abstractions started in parallel by `compose { a() and b() }`.
    pub main: Vec<String>,
}

impl Behaviour {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty() && self.abstractions.is_empty() && self.main.is_empty()
    }

    pub fn abstraction(&self, name: &str) -> Option<&Abstraction> {
        self.abstractions.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abstraction {
    pub name: String,
    pub recursive: bool,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stmt {
    /// `via <path> send <expr>`; path is relative to the owning element.
    Send { path: ElementPath, expr: Expr },
    /// `via <path> receive <var>:<type>`
    Receive {
        path: ElementPath,
        var: String,
        ty: TypeExpr,
    },
    Assign { var: String, expr: Expr },
    If { cond: Expr, then: Box<Stmt> },
    /// Call of an abstraction declared in the same behaviour.
    Invoke(String),
    /// Call of anything else; only observable as an `external` trace event.
    External { name: String, args: Vec<Expr> },
    /// `value <route> := <Element>`: updates the owning connector's routing table.
    RouteAssign { route: String, target: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Str(String),
    Var(String),
    Call(String, Vec<Expr>),
    Tuple(Vec<Expr>),
}

impl Stmt {
    /// Visits every statement, descending into `if` bodies.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        if let Stmt::If { then, .. } = self {
            then.walk(f);
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Stmt)) {
        f(self);
        if let Stmt::If { then, .. } = self {
            then.walk_mut(f);
        }
    }
}

impl Expr {
    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Expr)) {
        f(self);
        match self {
            Expr::Call(_, args) | Expr::Tuple(args) => {
                for a in args {
                    a.walk_mut(f);
                }
            }
            Expr::Str(_) | Expr::Var(_) => {}
        }
    }
}
