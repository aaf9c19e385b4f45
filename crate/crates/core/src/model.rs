//! The architecture model graph and its structural queries.
//!
//! One [`Architecture`] type carries a model through every pipeline stage;
//! [`Stage`] records how far it has been refined.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behaviour::{Behaviour, Stmt};

pub const PATH_SEPARATOR: &str = "::";

/// Type names every model may reference without declaring them.
pub const BUILTIN_TYPES: &[&str] = &["any", "String", "Integer", "Boolean", "Natural"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "GEIM")]
    Geim,
    #[serde(rename = "GEIM_PRIME")]
    GeimPrime,
    #[serde(rename = "GESM")]
    Gesm,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Geim => "GEIM",
            Stage::GeimPrime => "GEIM_PRIME",
            Stage::Gesm => "GESM",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s {
            "GEIM" => Some(Stage::Geim),
            "GEIM_PRIME" => Some(Stage::GeimPrime),
            "GESM" => Some(Stage::Gesm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Component,
    Connector,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Component => "component",
            ElementKind::Connector => "connector",
        }
    }

    pub fn parse(s: &str) -> Option<ElementKind> {
        match s {
            "component" => Some(ElementKind::Component),
            "connector" => Some(ElementKind::Connector),
            _ => None,
        }
    }
}

/// Service-level vocabulary of the grid DSL, layered on component/connector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleTag {
    Service,
    GenericInterface,
    Plain,
}

impl RoleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RoleTag::Service => "service",
            RoleTag::GenericInterface => "generic-interface",
            RoleTag::Plain => "plain",
        }
    }

    pub fn parse(s: &str) -> Option<RoleTag> {
        match s {
            "service" => Some(RoleTag::Service),
            "generic-interface" => Some(RoleTag::GenericInterface),
            "plain" => Some(RoleTag::Plain),
            _ => None,
        }
    }
}

/// Nominal type expression. Two payloads match only when they are equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeExpr {
    Any,
    Named(String),
    Tuple(Vec<TypeExpr>),
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Any => f.write_str("any"),
            TypeExpr::Named(n) => f.write_str(n),
            TypeExpr::Tuple(items) => {
                f.write_str("tuple [")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDecl {
    pub name: String,
    pub expr: TypeExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Incoming,
    Outgoing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub name: String,
    pub payload: TypeExpr,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub incoming: Vec<Connection>,
    pub outgoing: Vec<Connection>,
}

impl Port {
    pub fn connections(&self) -> impl Iterator<Item = &Connection> {
        self.incoming.iter().chain(self.outgoing.iter())
    }

    pub fn connection(&self, name: &str) -> Option<&Connection> {
        self.connections().find(|c| c.name == name)
    }
}

/// `--<ref::priority:p,range:r>--`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintAnnotation {
    pub constraint_ref: String,
    pub priority: u32,
    pub range: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchElement {
    pub name: String,
    pub kind: ElementKind,
    pub role_tag: Option<RoleTag>,
    /// Deployment weight; `None` means the default of 1.
    pub weight: Option<u32>,
    pub type_decls: Vec<TypeDecl>,
    pub ports: Vec<Port>,
    pub behaviour: Option<Behaviour>,
    pub children: Vec<ArchElement>,
    pub annotations: Vec<ConstraintAnnotation>,
}

impl ArchElement {
    pub fn new(name: impl Into<String>, kind: ElementKind) -> Self {
        ArchElement {
            name: name.into(),
            kind,
            role_tag: None,
            weight: None,
            type_decls: Vec::new(),
            ports: Vec::new(),
            behaviour: None,
            children: Vec::new(),
            annotations: Vec::new(),
        }
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn child(&self, name: &str) -> Option<&ArchElement> {
        self.children.iter().find(|c| c.name == name)
    }

    /// Role used for template lookup; an absent tag counts as `plain`.
    pub fn effective_role(&self) -> RoleTag {
        self.role_tag.unwrap_or(RoleTag::Plain)
    }

    pub fn effective_weight(&self) -> u32 {
        self.weight.unwrap_or(1)
    }

    /// Finds a connection by `Port::Conn` or by bare connection name when unique.
    pub fn local_connection(&self, path: &ElementPath) -> Option<(&Port, &Connection)> {
        match path.segments.as_slice() {
            [port, conn] => {
                let p = self.port(port)?;
                Some((p, p.connection(conn)?))
            }
            [conn] => {
                let mut found = self
                    .ports
                    .iter()
                    .flat_map(|p| p.connections().map(move |c| (p, c)))
                    .filter(|(_, c)| c.name == *conn);
                let first = found.next()?;
                if found.next().is_some() {
                    None
                } else {
                    Some(first)
                }
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementPath {
    pub segments: Vec<String>,
}

impl ElementPath {
    pub fn new(segments: Vec<String>) -> Self {
        debug_assert!(!segments.is_empty());
        ElementPath { segments }
    }

    pub fn parse(s: &str) -> Option<ElementPath> {
        let segments: Vec<String> = s.split(PATH_SEPARATOR).map(str::to_string).collect();
        if segments.iter().any(|s| s.is_empty()) {
            return None;
        }
        Some(ElementPath { segments })
    }

    pub fn single(name: impl Into<String>) -> Self {
        ElementPath {
            segments: vec![name.into()],
        }
    }

    /// First segment; for absolute paths this is a top-level element.
    pub fn head(&self) -> &str {
        &self.segments[0]
    }

    pub fn starts_with(&self, prefix: &ElementPath) -> bool {
        self.segments.len() >= prefix.segments.len()
            && self.segments[..prefix.segments.len()] == prefix.segments[..]
    }

    pub fn join(&self, seg: impl Into<String>) -> ElementPath {
        let mut segments = self.segments.clone();
        segments.push(seg.into());
        ElementPath { segments }
    }
}

impl fmt::Display for ElementPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.segments.join(PATH_SEPARATOR))
    }
}

/// Directed outgoing -> incoming link between two connections.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Channel {
    pub from: ElementPath,
    pub to: ElementPath,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Attachment {
    pub a: String,
    pub b: String,
}

impl Attachment {
    pub fn links(&self, x: &str, y: &str) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: String,
    pub style_ref: Option<String>,
    pub type_decls: Vec<TypeDecl>,
    pub elements: Vec<ArchElement>,
    pub channels: Vec<Channel>,
    pub attachments: Vec<Attachment>,
    pub stage: Stage,
}

/// Borrowed view of whatever an [`ElementPath`] names.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelNode<'a> {
    Element(&'a ArchElement),
    Port(&'a Port),
    Connection(&'a Connection),
}

impl<'a> ModelNode<'a> {
    pub fn as_connection(self) -> Option<&'a Connection> {
        match self {
            ModelNode::Connection(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_element(self) -> Option<&'a ArchElement> {
        match self {
            ModelNode::Element(e) => Some(e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unresolved-path: {0}")]
    UnresolvedPath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    DuplicateName,
    DuplicatePort,
    DuplicateConnection,
    DuplicateType,
    UndeclaredType,
    UnresolvedChannelEndpoint,
    ChannelDirection,
    ChannelTypeMismatch,
    UnresolvedAttachment,
    GenericInterfaceInGesm,
    AnnotationOnConnector,
    AnnotationOnNested,
    AnnotationBounds,
    DuplicateAbstraction,
    UndeclaredAbstraction,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::DuplicateName => "duplicate-name",
            Rule::DuplicatePort => "duplicate-port",
            Rule::DuplicateConnection => "duplicate-connection",
            Rule::DuplicateType => "duplicate-type",
            Rule::UndeclaredType => "undeclared-type",
            Rule::UnresolvedChannelEndpoint => "unresolved-channel-endpoint",
            Rule::ChannelDirection => "channel-direction",
            Rule::ChannelTypeMismatch => "channel-type-mismatch",
            Rule::UnresolvedAttachment => "unresolved-attachment",
            Rule::GenericInterfaceInGesm => "generic-interface-in-gesm",
            Rule::AnnotationOnConnector => "annotation-on-connector",
            Rule::AnnotationOnNested => "annotation-on-nested",
            Rule::AnnotationBounds => "annotation-bounds",
            Rule::DuplicateAbstraction => "duplicate-abstraction",
            Rule::UndeclaredAbstraction => "undeclared-abstraction",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.path, self.rule, self.message)
    }
}

pub type Diagnostics = Vec<Diagnostic>;

impl Architecture {
    pub fn new(name: impl Into<String>) -> Self {
        Architecture {
            name: name.into(),
            style_ref: None,
            type_decls: Vec::new(),
            elements: Vec::new(),
            channels: Vec::new(),
            attachments: Vec::new(),
            stage: Stage::Geim,
        }
    }

    pub fn element(&self, name: &str) -> Option<&ArchElement> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn element_mut(&mut self, name: &str) -> Option<&mut ArchElement> {
        self.elements.iter_mut().find(|e| e.name == name)
    }

    pub fn has_element(&self, name: &str) -> bool {
        self.element(name).is_some()
    }

    pub fn element_names(&self) -> impl Iterator<Item = &str> {
        self.elements.iter().map(|e| e.name.as_str())
    }

    /// Resolves `elem(::child)*(::port(::connection)?)?`.
    pub fn resolve(&self, path: &ElementPath) -> Result<ModelNode<'_>, ModelError> {
        self.try_resolve(path)
            .ok_or_else(|| ModelError::UnresolvedPath(path.to_string()))
    }

    fn try_resolve(&self, path: &ElementPath) -> Option<ModelNode<'_>> {
        let mut segs = path.segments.iter();
        let mut elem = self.element(segs.next()?)?;
        let mut node = ModelNode::Element(elem);
        for seg in segs {
            node = match node {
                ModelNode::Element(e) => {
                    if let Some(child) = e.child(seg) {
                        elem = child;
                        ModelNode::Element(child)
                    } else {
                        ModelNode::Port(elem.port(seg)?)
                    }
                }
                ModelNode::Port(p) => ModelNode::Connection(p.connection(seg)?),
                ModelNode::Connection(_) => return None,
            };
        }
        Some(node)
    }

    pub fn resolve_connection(&self, path: &ElementPath) -> Option<&Connection> {
        self.try_resolve(path).and_then(ModelNode::as_connection)
    }

    /// Undirected top-level adjacency induced by channels and attachments.
    pub fn adjacency(&self) -> Vec<(String, String)> {
        let mut edges = Vec::new();
        for ch in &self.channels {
            edges.push((ch.from.head().to_string(), ch.to.head().to_string()));
        }
        for at in &self.attachments {
            edges.push((at.a.clone(), at.b.clone()));
        }
        edges
    }

    /// Top-level elements within `hops` channel/attachment edges of `elem`.
    pub fn neighbors(&self, elem: &str, hops: usize) -> Result<BTreeSet<String>, ModelError> {
        if !self.has_element(elem) {
            return Err(ModelError::UnresolvedPath(elem.to_string()));
        }
        let edges = self.adjacency();
        let mut seen: HashSet<&str> = HashSet::from([elem]);
        let mut frontier = VecDeque::from([(elem, 0usize)]);
        let mut out = BTreeSet::new();
        while let Some((cur, depth)) = frontier.pop_front() {
            if depth == hops {
                continue;
            }
            for (a, b) in &edges {
                let next = if a == cur {
                    b.as_str()
                } else if b == cur {
                    a.as_str()
                } else {
                    continue;
                };
                if seen.insert(next) {
                    out.insert(next.to_string());
                    frontier.push_back((next, depth + 1));
                }
            }
        }
        Ok(out)
    }

    /// Every well-formedness violation, in a deterministic order.
    pub fn validate(&self) -> Diagnostics {
        let mut v = Validator {
            arch: self,
            out: Vec::new(),
        };
        v.run();
        v.out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Order-insensitive normal form: elements (recursively), channels and
    /// attachments sorted, attachment endpoints ordered.
    pub fn canonical(&self) -> Architecture {
        fn sort_elements(elems: &mut [ArchElement]) {
            elems.sort_by(|a, b| a.name.cmp(&b.name));
            for e in elems {
                sort_elements(&mut e.children);
            }
        }
        let mut c = self.clone();
        sort_elements(&mut c.elements);
        c.channels.sort();
        c.channels.dedup();
        for at in &mut c.attachments {
            if at.b < at.a {
                std::mem::swap(&mut at.a, &mut at.b);
            }
        }
        c.attachments.sort();
        c.attachments.dedup();
        c
    }

    /// Equality up to the order of elements, channels and attachments.
    pub fn structurally_eq(&self, other: &Architecture) -> bool {
        self.canonical() == other.canonical()
    }
}

pub fn validate(arch: &Architecture) -> Diagnostics {
    arch.validate()
}

pub fn resolve<'a>(arch: &'a Architecture, path: &ElementPath) -> Result<ModelNode<'a>, ModelError> {
    arch.resolve(path)
}

pub fn neighbors(arch: &Architecture, elem: &str, hops: usize) -> Result<BTreeSet<String>, ModelError> {
    arch.neighbors(elem, hops)
}

struct Validator<'a> {
    arch: &'a Architecture,
    out: Diagnostics,
}

impl<'a> Validator<'a> {
    fn push(&mut self, path: impl Into<String>, rule: Rule, message: impl Into<String>) {
        self.out.push(Diagnostic {
            path: path.into(),
            rule,
            message: message.into(),
        });
    }

    fn run(&mut self) {
        let arch = self.arch;
        self.check_type_decls(&arch.name, &arch.type_decls);
        self.check_unique_names(&arch.name, &arch.elements);
        let scope = vec![&arch.type_decls];
        for e in &arch.elements {
            self.check_element(&ElementPath::single(&e.name), e, &scope, true);
        }
        for ch in &arch.channels {
            self.check_channel(ch);
        }
        for at in &arch.attachments {
            for end in [&at.a, &at.b] {
                if !arch.has_element(end) {
                    self.push(
                        format!("{}--{}", at.a, at.b),
                        Rule::UnresolvedAttachment,
                        format!("attachment endpoint `{end}` is not a top-level element"),
                    );
                }
            }
        }
    }

    fn check_type_decls(&mut self, at: &str, decls: &[TypeDecl]) {
        let mut seen = HashSet::new();
        for d in decls {
            if !seen.insert(d.name.as_str()) {
                self.push(at, Rule::DuplicateType, format!("type `{}` declared twice", d.name));
            }
        }
    }

    fn check_unique_names(&mut self, at: &str, elems: &[ArchElement]) {
        let mut seen = HashSet::new();
        for e in elems {
            if !seen.insert(e.name.as_str()) {
                self.push(at, Rule::DuplicateName, format!("element `{}` declared twice", e.name));
            }
        }
    }

    fn check_element(
        &mut self,
        path: &ElementPath,
        e: &'a ArchElement,
        scope: &[&'a Vec<TypeDecl>],
        top_level: bool,
    ) {
        let p = path.to_string();
        self.check_type_decls(&p, &e.type_decls);
        let mut scope = scope.to_vec();
        scope.push(&e.type_decls);

        if !e.annotations.is_empty() {
            if e.kind == ElementKind::Connector {
                self.push(&p, Rule::AnnotationOnConnector, "constraint annotations attach only to components");
            }
            if !top_level {
                self.push(&p, Rule::AnnotationOnNested, "constraint annotations attach only to top-level elements");
            }
            for a in &e.annotations {
                if a.priority < 1 || a.range < 1 {
                    self.push(&p, Rule::AnnotationBounds, format!("annotation `{}` needs priority >= 1 and range >= 1", a.constraint_ref));
                }
            }
        }

        if self.arch.stage == Stage::Gesm && e.role_tag == Some(RoleTag::GenericInterface) {
            self.push(&p, Rule::GenericInterfaceInGesm, "a GESM model may not contain generic-interface elements");
        }

        let mut port_names = HashSet::new();
        for port in &e.ports {
            if !port_names.insert(port.name.as_str()) {
                self.push(&p, Rule::DuplicatePort, format!("port `{}` declared twice", port.name));
            }
            let mut conn_names = HashSet::new();
            for c in port.connections() {
                let cp = format!("{p}::{}::{}", port.name, c.name);
                if !conn_names.insert(c.name.as_str()) {
                    self.push(&cp, Rule::DuplicateConnection, format!("connection `{}` declared twice in port `{}`", c.name, port.name));
                }
                self.check_type_known(&cp, &c.payload, &scope);
            }
        }

        if let Some(b) = &e.behaviour {
            self.check_behaviour(&p, b);
        }

        self.check_unique_names(&p, &e.children);
        for child in &e.children {
            self.check_element(&path.join(&child.name), child, &scope, false);
        }
    }

    fn check_type_known(&mut self, at: &str, t: &TypeExpr, scope: &[&Vec<TypeDecl>]) {
        match t {
            TypeExpr::Any => {}
            TypeExpr::Named(n) => {
                let declared = scope.iter().any(|decls| decls.iter().any(|d| &d.name == n));
                if !declared && !BUILTIN_TYPES.contains(&n.as_str()) {
                    self.push(at, Rule::UndeclaredType, format!("type `{n}` is neither declared nor builtin"));
                }
            }
            TypeExpr::Tuple(items) => {
                for i in items {
                    self.check_type_known(at, i, scope);
                }
            }
        }
    }

    fn check_behaviour(&mut self, at: &str, b: &Behaviour) {
        let mut seen = HashSet::new();
        for a in &b.abstractions {
            if !seen.insert(a.name.as_str()) {
                self.push(at, Rule::DuplicateAbstraction, format!("abstraction `{}` declared twice", a.name));
            }
        }
        for m in &b.main {
            if b.abstraction(m).is_none() {
                self.push(at, Rule::UndeclaredAbstraction, format!("compose names undeclared abstraction `{m}`"));
            }
        }
        for a in &b.abstractions {
            for s in &a.body {
                s.walk(&mut |s| {
                    if let Stmt::Invoke(name) = s {
                        if b.abstraction(name).is_none() {
                            self.out.push(Diagnostic {
                                path: at.to_string(),
                                rule: Rule::UndeclaredAbstraction,
                                message: format!("`{}` invokes undeclared abstraction `{name}`", a.name),
                            });
                        }
                    }
                });
            }
        }
    }

    fn check_channel(&mut self, ch: &Channel) {
        let label = format!("{} -> {}", ch.from, ch.to);
        let from = self.arch.resolve_connection(&ch.from);
        let to = self.arch.resolve_connection(&ch.to);
        let (Some(from), Some(to)) = (from, to) else {
            for (end, resolved) in [(&ch.from, from), (&ch.to, to)] {
                if resolved.is_none() {
                    self.push(&label, Rule::UnresolvedChannelEndpoint, format!("`{end}` does not name a connection"));
                }
            }
            return;
        };
        if from.direction != Direction::Outgoing || to.direction != Direction::Incoming {
            self.push(&label, Rule::ChannelDirection, "channels run from an outgoing to an incoming connection");
        }
        if from.payload != to.payload {
            self.push(
                &label,
                Rule::ChannelTypeMismatch,
                format!("payload `{}` does not match `{}`", from.payload, to.payload),
            );
        }
    }
}
