use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Architecture, ElementKind, ElementPath, ModelNode, TypeExpr};

/// Structural predicate language used by pre/post conditions, assumptions,
/// pattern guarantees and preservation checks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    True,
    False,
    Exists(ElementPath),
    IsComponent(ElementPath),
    IsConnector(ElementPath),
    HasPort(ElementPath, String),
    ChannelBetween(ElementPath, ElementPath),
    Attached(String, String),
    Unique(String),
    PayloadOf(ElementPath, TypeExpr),
    Not(Box<Condition>),
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
}

impl Condition {
    pub fn and(self, other: Condition) -> Condition {
        Condition::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Condition) -> Condition {
        Condition::Or(Box::new(self), Box::new(other))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Condition {
        Condition::Not(Box::new(self))
    }

    /// Total on any architecture; unresolvable names make atoms false.
    pub fn eval(&self, arch: &Architecture) -> bool {
        match self {
            Condition::True => true,
            Condition::False => false,
            Condition::Exists(p) => arch.resolve(p).is_ok(),
            Condition::IsComponent(p) => element_kind(arch, p) == Some(ElementKind::Component),
            Condition::IsConnector(p) => element_kind(arch, p) == Some(ElementKind::Connector),
            Condition::HasPort(p, port) => arch
                .resolve(p)
                .ok()
                .and_then(ModelNode::as_element)
                .is_some_and(|e| e.port(port).is_some()),
            Condition::ChannelBetween(p, q) => arch
                .channels
                .iter()
                .any(|c| (&c.from == p && &c.to == q) || (&c.from == q && &c.to == p)),
            Condition::Attached(a, b) => arch.attachments.iter().any(|at| at.links(a, b)),
            Condition::Unique(name) => {
                fn count(elems: &[crate::model::ArchElement], name: &str) -> usize {
                    elems
                        .iter()
                        .map(|e| usize::from(e.name == name) + count(&e.children, name))
                        .sum()
                }
                count(&arch.elements, name) == 1
            }
            Condition::PayloadOf(p, t) => arch.resolve_connection(p).is_some_and(|c| &c.payload == t),
            Condition::Not(c) => !c.eval(arch),
            Condition::And(a, b) => a.eval(arch) && b.eval(arch),
            Condition::Or(a, b) => a.eval(arch) || b.eval(arch),
        }
    }

    /// Rewrites every identifier and path segment through `f`.
    pub fn map_names(&self, f: &impl Fn(&ElementPath) -> ElementPath, g: &impl Fn(&str) -> String) -> Condition {
        match self {
            Condition::True => Condition::True,
            Condition::False => Condition::False,
            Condition::Exists(p) => Condition::Exists(f(p)),
            Condition::IsComponent(p) => Condition::IsComponent(f(p)),
            Condition::IsConnector(p) => Condition::IsConnector(f(p)),
            Condition::HasPort(p, port) => Condition::HasPort(f(p), port.clone()),
            Condition::ChannelBetween(p, q) => Condition::ChannelBetween(f(p), f(q)),
            Condition::Attached(a, b) => Condition::Attached(g(a), g(b)),
            Condition::Unique(n) => Condition::Unique(g(n)),
            Condition::PayloadOf(p, t) => Condition::PayloadOf(f(p), t.clone()),
            Condition::Not(c) => c.map_names(f, g).not(),
            Condition::And(a, b) => a.map_names(f, g).and(b.map_names(f, g)),
            Condition::Or(a, b) => a.map_names(f, g).or(b.map_names(f, g)),
        }
    }

    /// Top-level element names mentioned by atoms.
    pub fn mentioned_elements(&self, out: &mut Vec<String>) {
        match self {
            Condition::True | Condition::False => {}
            Condition::Exists(p)
            | Condition::IsComponent(p)
            | Condition::IsConnector(p)
            | Condition::HasPort(p, _)
            | Condition::PayloadOf(p, _) => out.push(p.head().to_string()),
            Condition::ChannelBetween(p, q) => {
                out.push(p.head().to_string());
                out.push(q.head().to_string());
            }
            Condition::Attached(a, b) => {
                out.push(a.clone());
                out.push(b.clone());
            }
            Condition::Unique(n) => out.push(n.clone()),
            Condition::Not(c) => c.mentioned_elements(out),
            Condition::And(a, b) | Condition::Or(a, b) => {
                a.mentioned_elements(out);
                b.mentioned_elements(out);
            }
        }
    }
}

fn element_kind(arch: &Architecture, p: &ElementPath) -> Option<ElementKind> {
    arch.resolve(p).ok().and_then(ModelNode::as_element).map(|e| e.kind)
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn operand(f: &mut fmt::Formatter<'_>, c: &Condition, paren: bool) -> fmt::Result {
            if paren {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        }
        match self {
            Condition::True => f.write_str("true"),
            Condition::False => f.write_str("false"),
            Condition::Exists(p) => write!(f, "exists({p})"),
            Condition::IsComponent(p) => write!(f, "is_component({p})"),
            Condition::IsConnector(p) => write!(f, "is_connector({p})"),
            Condition::HasPort(p, port) => write!(f, "has_port({p}, {port})"),
            Condition::ChannelBetween(p, q) => write!(f, "channel_between({p}, {q})"),
            Condition::Attached(a, b) => write!(f, "attached({a}, {b})"),
            Condition::Unique(n) => write!(f, "unique({n})"),
            Condition::PayloadOf(p, t) => write!(f, "payload_of({p}) = {t}"),
            Condition::Not(c) => {
                f.write_str("not ")?;
                operand(f, c, matches!(**c, Condition::And(..) | Condition::Or(..)))
            }
            // Binary operators parse left-associatively, so only a right
            // operand of the same or looser binding needs parentheses.
            Condition::And(a, b) => {
                operand(f, a, matches!(**a, Condition::Or(..)))?;
                f.write_str(" and ")?;
                operand(f, b, matches!(**b, Condition::Or(..) | Condition::And(..)))
            }
            Condition::Or(a, b) => {
                operand(f, a, false)?;
                f.write_str(" or ")?;
                operand(f, b, matches!(**b, Condition::Or(..)))
            }
        }
    }
}
