//! Canonical pretty-printer. Output reparses to a structurally equal value.

use crate::behaviour::{Behaviour, Expr, Stmt};
use crate::model::{ArchElement, Architecture, ConstraintAnnotation, Port, Stage, TypeDecl};
use crate::patterns::{BlockScope, ConstraintPattern};
use crate::refine::{AtomicAction, RefinementDefinition};

struct Out {
    buf: String,
    depth: usize,
}

impl Out {
    fn new() -> Self {
        Out {
            buf: String::new(),
            depth: 0,
        }
    }

    fn line(&mut self, text: &str) {
        if !self.buf.is_empty() {
            self.buf.push('\n');
        }
        for _ in 0..self.depth {
            self.buf.push_str("  ");
        }
        self.buf.push_str(text);
    }

    fn open(&mut self, text: &str) {
        self.line(text);
        self.depth += 1;
    }

    fn close(&mut self, text: &str) {
        self.depth -= 1;
        self.line(text);
    }
}

pub fn render(arch: &Architecture) -> String {
    let mut o = Out::new();
    let mut header = format!("archetype {} is architecture", arch.name);
    if let Some(style) = &arch.style_ref {
        header.push_str(&format!(" style={style}"));
    }
    if arch.stage != Stage::Geim {
        header.push_str(&format!(" stage={}", arch.stage.as_str()));
    }
    header.push_str(" {");
    o.open(&header);
    if !arch.type_decls.is_empty() {
        types(&mut o, &arch.type_decls);
    }
    o.open("behaviour is {");
    for e in &arch.elements {
        element(&mut o, e, "archetype");
    }
    o.close("}");
    if !arch.attachments.is_empty() {
        o.open("link is {");
        for at in &arch.attachments {
            o.line(&format!("attach {} to {} .", at.a, at.b));
        }
        o.close("}");
    }
    for ch in &arch.channels {
        o.line(&format!("unifies {} with {} .", ch.from, ch.to));
    }
    o.close("}");
    o.buf
}

fn types(o: &mut Out, decls: &[TypeDecl]) {
    o.open("types is {");
    for t in decls {
        o.line(&format!("type {} is {} .", t.name, t.expr));
    }
    o.close("}");
}

fn annotation(a: &ConstraintAnnotation) -> String {
    format!("--<{}::priority:{},range:{}>--", a.constraint_ref, a.priority, a.range)
}

/// `lead` is `archetype` for declarations and `include` inside patterns.
fn element(o: &mut Out, e: &ArchElement, lead: &str) {
    for a in &e.annotations {
        o.line(&annotation(a));
    }
    let mut header = format!("{lead} {} is {}", e.name, e.kind.as_str());
    if let Some(r) = e.role_tag {
        header.push_str(&format!(" role={}", r.as_str()));
    }
    if let Some(w) = e.weight {
        header.push_str(&format!(" weight={w}"));
    }
    header.push_str(" {");
    o.open(&header);
    if !e.type_decls.is_empty() {
        types(o, &e.type_decls);
    }
    if !e.ports.is_empty() {
        o.open("ports is {");
        for p in &e.ports {
            port(o, p);
        }
        o.close("}");
    }
    if !e.children.is_empty() {
        o.open("structure is {");
        for c in &e.children {
            element(o, c, "archetype");
        }
        o.close("}");
    }
    if let Some(b) = &e.behaviour {
        behaviour(o, b);
    }
    o.close("} .");
}

fn port(o: &mut Out, p: &Port) {
    o.open(&format!("archetype {} is port {{", p.name));
    for (label, conns) in [("incoming", &p.incoming), ("outgoing", &p.outgoing)] {
        if conns.is_empty() {
            continue;
        }
        o.open(&format!("{label} is {{"));
        for c in conns.iter() {
            o.line(&format!("{} is connection ( {} ) .", c.name, c.payload));
        }
        o.close("}");
    }
    o.close("} .");
}

/// A behaviour block on its own, as it appears inside an element.
pub fn render_behaviour(b: &Behaviour) -> String {
    let mut o = Out::new();
    behaviour(&mut o, b);
    o.buf
}

fn behaviour(o: &mut Out, b: &Behaviour) {
    o.open("behaviour is {");
    for (name, e) in &b.values {
        o.line(&format!("value {name} := {};", expr(e)));
    }
    for a in &b.abstractions {
        let rec = if a.recursive { "recursive " } else { "" };
        o.open(&format!("{rec}value {} is abstraction() {{", a.name));
        for s in &a.body {
            o.line(&stmt(s));
        }
        o.close("};");
    }
    if !b.main.is_empty() {
        let calls: Vec<String> = b.main.iter().map(|m| format!("{m}()")).collect();
        o.line(&format!("compose {{ {} }};", calls.join(" and ")));
    }
    o.close("}");
}

fn stmt(s: &Stmt) -> String {
    match s {
        Stmt::Send { path, expr: e } => format!("via {path} send {};", expr(e)),
        Stmt::Receive { path, var, ty } => format!("via {path} receive {var}:{ty};"),
        Stmt::Assign { var, expr: e } => format!("{var} := {};", expr(e)),
        Stmt::If { cond, then } => format!("if ({}) {}", expr(cond), stmt(then)),
        Stmt::Invoke(name) => format!("{name}();"),
        Stmt::External { name, args } => format!("{name}({});", exprs(args)),
        Stmt::RouteAssign { route, target } => format!("value {route} := {target};"),
    }
}

fn exprs(items: &[Expr]) -> String {
    items.iter().map(expr).collect::<Vec<_>>().join(", ")
}

fn expr(e: &Expr) -> String {
    match e {
        Expr::Str(s) => quote(s),
        Expr::Var(v) => v.clone(),
        Expr::Call(f, args) => format!("{f}({})", exprs(args)),
        Expr::Tuple(items) => format!("[{}]", exprs(items)),
    }
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for ch in s.chars() {
        match ch {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            '\t' => q.push_str("\\t"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

fn action(o: &mut Out, a: &AtomicAction) {
    match a {
        AtomicAction::Include(e) => element(o, e, "include"),
        other => o.line(&format!("{other} .")),
    }
}

pub fn render_pattern(p: &ConstraintPattern) -> String {
    let mut o = Out::new();
    let mut header = format!("{} is {}", p.name, p.kind.keyword());
    for a in &p.aliases {
        header.push_str(&format!(" alias {a}"));
    }
    header.push_str(" {");
    o.open(&header);
    for b in &p.blocks {
        let scope = match b.scope {
            BlockScope::Architecture => BlockScope::Architecture.keyword(),
            BlockScope::Element => BlockScope::Element.keyword(),
        };
        o.open(&format!("on {} : {scope} actions {{", b.var));
        for t in &b.actions {
            action(&mut o, &t.0);
        }
        o.close("}");
    }
    for c in &p.provides {
        o.line(&format!("provides {{ {c} }}"));
    }
    if !p.conflicts_with.is_empty() {
        o.line(&format!("conflicts with {{ {} }}", p.conflicts_with.join(", ")));
    }
    o.close("}");
    o.buf
}

pub fn render_refinement_def(d: &RefinementDefinition) -> String {
    let mut o = Out::new();
    o.open(&format!(
        "on {} : architecture action {} is refinement ({}) {{",
        d.arch_var,
        d.name,
        d.params.join(", ")
    ));
    if let Some(c) = &d.pre {
        o.line(&format!("pre is {{ {c} }}"));
    }
    if let Some(c) = &d.post {
        o.line(&format!("post is {{ {c} }}"));
    }
    if let Some(actions) = &d.transformation {
        o.open("transformation is {");
        for a in actions {
            action(&mut o, a);
        }
        o.close("}");
    }
    match &d.assuming {
        Some(c) => o.close(&format!("}} assuming {{ {c} }}")),
        None => o.close("}"),
    }
    o.buf
}
