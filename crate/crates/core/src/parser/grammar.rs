use super::lexer::{tokenize, Tok, Token};
use super::ParseDiagnostic;
use crate::behaviour::{Abstraction, Behaviour, Expr, Stmt};
use crate::model::{
    ArchElement, Architecture, Attachment, Channel, ConstraintAnnotation, Connection, Direction, ElementKind,
    ElementPath, Port, RoleTag, Stage, TypeDecl, TypeExpr,
};
use crate::patterns::{ActionTemplate, BlockScope, ConstraintPattern, PatternBlock, PatternKind, WILDCARD};
use crate::refine::{AtomicAction, Condition, RefinementDefinition, Verb};

type PResult<T> = Result<T, ParseDiagnostic>;

const PREDICATES: &[&str] = &[
    "exists",
    "is_component",
    "is_connector",
    "has_port",
    "channel_between",
    "attached",
    "unique",
    "payload_of",
    "true",
    "false",
];

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            toks: tokenize(src)?,
            pos: 0,
        })
    }

    // ---- cursor -------------------------------------------------------

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>, expected: &[&str]) -> ParseDiagnostic {
        let t = &self.toks[self.pos];
        ParseDiagnostic::new(t.line, t.column, message, expected.iter().map(|s| s.to_string()).collect())
    }

    fn unexpected(&self, expected: &[&str]) -> ParseDiagnostic {
        let list = expected.join(", ");
        self.error_here(format!("expected {list}, found {}", self.peek()), expected)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn at_kw_at(&self, k: usize, kw: &str) -> bool {
        matches!(self.peek_at(k), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&[&format!("`{kw}`")]))
        }
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            Err(self.unexpected(&[&t.to_string()]))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn eat_term(&mut self) {
        let _ = self.eat(&Tok::Dot) || self.eat(&Tok::Semi);
    }

    fn expect_eof(&mut self) -> PResult<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.unexpected(&["end of input"]))
        }
    }

    fn skip_ellipsis(&mut self) -> bool {
        if self.eat(&Tok::Ellipsis) {
            self.eat_term();
            true
        } else {
            false
        }
    }

    /// `IDENT (:: IDENT)*`, or `*` when wildcards are permitted.
    fn path(&mut self) -> PResult<ElementPath> {
        if self.eat(&Tok::Star) {
            return Ok(ElementPath::single(WILDCARD));
        }
        let mut segments = vec![self.ident()?];
        while self.eat(&Tok::PathSep) {
            segments.push(self.ident()?);
        }
        Ok(ElementPath::new(segments))
    }

    /// Element name in a pattern `attach`, or `*`.
    fn attach_end(&mut self) -> PResult<String> {
        if self.eat(&Tok::Star) {
            return Ok(WILDCARD.to_string());
        }
        self.ident()
    }

    fn int(&mut self) -> PResult<i64> {
        match *self.peek() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.unexpected(&["integer"])),
        }
    }

    // ---- types --------------------------------------------------------

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        if self.eat_kw("any") {
            return Ok(TypeExpr::Any);
        }
        if self.at_kw("tuple") && *self.peek_at(1) == Tok::LBracket {
            self.bump();
            self.bump();
            let mut items = vec![self.type_expr()?];
            while self.eat(&Tok::Comma) {
                items.push(self.type_expr()?);
            }
            self.expect(Tok::RBracket)?;
            return Ok(TypeExpr::Tuple(items));
        }
        Ok(TypeExpr::Named(self.ident()?))
    }

    fn type_decls(&mut self, out: &mut Vec<TypeDecl>) -> PResult<()> {
        self.expect(Tok::LBrace)?;
        while !self.eat(&Tok::RBrace) {
            if self.skip_ellipsis() {
                continue;
            }
            self.expect_kw("type")?;
            let name = self.ident()?;
            self.expect_kw("is")?;
            let expr = self.type_expr()?;
            self.eat_term();
            out.push(TypeDecl { name, expr });
        }
        Ok(())
    }

    // ---- architecture -------------------------------------------------

    pub fn architecture_unit(&mut self) -> PResult<Architecture> {
        let mut arch;
        if self.eat_kw("archetype") {
            arch = Architecture::new(self.ident()?);
            self.expect_kw("is")?;
            self.expect_kw("architecture")?;
            while matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Eq {
                let key = self.ident()?;
                self.bump();
                match key.as_str() {
                    "style" => arch.style_ref = Some(self.ident()?),
                    "stage" => {
                        let s = self.ident()?;
                        arch.stage = Stage::parse(&s).ok_or_else(|| {
                            self.error_here(format!("unknown stage `{s}`"), &["GEIM", "GEIM_PRIME", "GESM"])
                        })?;
                    }
                    other => {
                        return Err(self.error_here(format!("unknown architecture attribute `{other}`"), &["style", "stage"]));
                    }
                }
            }
        } else {
            // `<name> is <Style> where { ... }`
            arch = Architecture::new(self.ident()?);
            self.expect_kw("is")?;
            arch.style_ref = Some(self.ident()?);
            self.expect_kw("where")?;
        }
        self.expect(Tok::LBrace)?;
        let mut raw_channels = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.skip_ellipsis() {
                continue;
            }
            if self.at_kw("types") {
                self.bump();
                self.expect_kw("is")?;
                self.type_decls(&mut arch.type_decls)?;
                self.eat_term();
            } else if self.at_kw("ports") {
                self.bump();
                self.expect_kw("is")?;
                self.expect(Tok::LBrace)?;
                while !self.eat(&Tok::RBrace) {
                    if !self.skip_ellipsis() {
                        return Err(self.error_here("architecture-level ports are not supported", &["`}`"]));
                    }
                }
                self.eat_term();
            } else if self.at_kw("behaviour") || self.at_kw("structure") {
                self.bump();
                self.expect_kw("is")?;
                self.expect(Tok::LBrace)?;
                let pending = self.annotations();
                self.element_list(pending, &mut arch.elements)?;
                self.eat_term();
            } else if self.at_kw("link") {
                self.bump();
                self.expect_kw("is")?;
                self.expect(Tok::LBrace)?;
                while !self.eat(&Tok::RBrace) {
                    if self.skip_ellipsis() {
                        continue;
                    }
                    self.expect_kw("attach")?;
                    let a = self.ident()?;
                    self.expect_kw("to")?;
                    let b = self.ident()?;
                    self.eat_term();
                    arch.attachments.push(Attachment { a, b });
                }
                self.eat_term();
            } else if self.at_kw("unifies") || self.at_kw("unify") {
                self.bump();
                let a = self.path()?;
                self.expect_kw("with")?;
                let b = self.path()?;
                self.eat_term();
                raw_channels.push((a, b));
            } else if self.at_kw("constraint") {
                return Err(self.error_here(
                    "`constraint is { }` blocks are not supported; annotate elements with `--<ref::priority:p,range:r>--`",
                    &[],
                ));
            } else if matches!(self.peek(), Tok::Annotation { .. }) {
                return Err(self.error_here("a constraint annotation must precede an element", &["`archetype`"]));
            } else {
                return Err(self.unexpected(&["`types`", "`behaviour`", "`structure`", "`link`", "`unifies`", "`}`"]));
            }
        }
        self.eat_term();
        self.expect_eof()?;
        // Endpoints are ordered by direction, not by position in the source.
        for (a, b) in raw_channels {
            let da = arch.resolve_connection(&a).map(|c| c.direction);
            let db = arch.resolve_connection(&b).map(|c| c.direction);
            let ch = if da == Some(Direction::Incoming) && db == Some(Direction::Outgoing) {
                Channel { from: b, to: a }
            } else {
                Channel { from: a, to: b }
            };
            arch.channels.push(ch);
        }
        Ok(arch)
    }

    fn annotations(&mut self) -> Vec<ConstraintAnnotation> {
        let mut out = Vec::new();
        while let Tok::Annotation {
            constraint_ref,
            priority,
            range,
        } = self.peek().clone()
        {
            self.bump();
            out.push(ConstraintAnnotation {
                constraint_ref,
                priority: priority as u32,
                range: range as u32,
            });
        }
        out
    }

    /// Elements up to and including the closing brace.
    fn element_list(&mut self, mut pending: Vec<ConstraintAnnotation>, out: &mut Vec<ArchElement>) -> PResult<()> {
        loop {
            pending.extend(self.annotations());
            if self.skip_ellipsis() {
                continue;
            }
            if *self.peek() == Tok::RBrace {
                if !pending.is_empty() {
                    return Err(self.error_here("a constraint annotation must precede an element", &["`archetype`"]));
                }
                self.bump();
                return Ok(());
            }
            self.expect_kw("archetype")?;
            let name = self.ident()?;
            self.expect_kw("is")?;
            let kind = self.element_kind()?;
            let mut e = self.element_rest(name, kind)?;
            let mut annotations = std::mem::take(&mut pending);
            annotations.append(&mut e.annotations);
            e.annotations = annotations;
            self.eat_term();
            out.push(e);
        }
    }

    fn element_kind(&mut self) -> PResult<ElementKind> {
        if self.eat_kw("component") {
            Ok(ElementKind::Component)
        } else if self.eat_kw("connector") {
            Ok(ElementKind::Connector)
        } else {
            Err(self.unexpected(&["`component`", "`connector`"]))
        }
    }

    /// Attributes and body following `<name> is component|connector`.
    fn element_rest(&mut self, name: String, kind: ElementKind) -> PResult<ArchElement> {
        let mut e = ArchElement::new(name, kind);
        while matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Eq {
            let key = self.ident()?;
            self.bump();
            match key.as_str() {
                "role" => {
                    let r = self.ident()?;
                    e.role_tag = Some(RoleTag::parse(&r).ok_or_else(|| {
                        self.error_here(format!("unknown role `{r}`"), &["service", "generic-interface", "plain"])
                    })?);
                }
                "weight" => {
                    let w = self.int()?;
                    if w < 1 {
                        return Err(self.error_here("weight must be ≥ 1", &[]));
                    }
                    e.weight = Some(w as u32);
                }
                other => return Err(self.error_here(format!("unknown element attribute `{other}`"), &["role", "weight"])),
            }
        }
        self.expect(Tok::LBrace)?;
        while !self.eat(&Tok::RBrace) {
            if self.skip_ellipsis() {
                continue;
            }
            if self.at_kw("types") {
                self.bump();
                self.expect_kw("is")?;
                self.type_decls(&mut e.type_decls)?;
            } else if self.at_kw("ports") {
                self.bump();
                self.expect_kw("is")?;
                self.expect(Tok::LBrace)?;
                while !self.eat(&Tok::RBrace) {
                    if self.skip_ellipsis() {
                        continue;
                    }
                    e.ports.push(self.port()?);
                }
            } else if self.at_kw("structure") {
                self.bump();
                self.expect_kw("is")?;
                self.expect(Tok::LBrace)?;
                let pending = self.annotations();
                self.element_list(pending, &mut e.children)?;
            } else if self.at_kw("behaviour") {
                self.bump();
                self.expect_kw("is")?;
                self.expect(Tok::LBrace)?;
                let header = self.annotations();
                let mut k = 0;
                while *self.peek_at(k) == Tok::Ellipsis {
                    k += 1;
                }
                if self.at_kw_at(k, "archetype") {
                    self.element_list(header, &mut e.children)?;
                } else {
                    e.annotations.extend(header);
                    if e.behaviour.is_some() {
                        return Err(self.error_here("duplicate behaviour block", &[]));
                    }
                    e.behaviour = Some(self.behaviour_body(&mut e.annotations)?);
                }
            } else if matches!(self.peek(), Tok::Annotation { .. }) {
                return Err(self.error_here("a constraint annotation must precede an element", &["`archetype`"]));
            } else {
                return Err(self.unexpected(&["`types`", "`ports`", "`structure`", "`behaviour`", "`}`"]));
            }
            self.eat_term();
        }
        Ok(e)
    }

    fn port(&mut self) -> PResult<Port> {
        self.expect_kw("archetype")?;
        let name = self.ident()?;
        self.expect_kw("is")?;
        self.expect_kw("port")?;
        self.expect(Tok::LBrace)?;
        let mut port = Port {
            name,
            incoming: Vec::new(),
            outgoing: Vec::new(),
        };
        while !self.eat(&Tok::RBrace) {
            if self.skip_ellipsis() {
                continue;
            }
            let direction = if self.eat_kw("incoming") {
                Direction::Incoming
            } else if self.eat_kw("outgoing") {
                Direction::Outgoing
            } else {
                return Err(self.unexpected(&["`incoming`", "`outgoing`", "`}`"]));
            };
            self.expect_kw("is")?;
            self.expect(Tok::LBrace)?;
            while !self.eat(&Tok::RBrace) {
                if self.skip_ellipsis() {
                    continue;
                }
                let cname = self.ident()?;
                self.expect_kw("is")?;
                self.expect_kw("connection")?;
                self.expect(Tok::LParen)?;
                let payload = self.type_expr()?;
                self.expect(Tok::RParen)?;
                self.eat_term();
                let c = Connection {
                    name: cname,
                    payload,
                    direction,
                };
                match direction {
                    Direction::Incoming => port.incoming.push(c),
                    Direction::Outgoing => port.outgoing.push(c),
                }
            }
            self.eat_term();
        }
        self.eat_term();
        Ok(port)
    }

    // ---- behaviour ----------------------------------------------------

    /// Body of `behaviour is { ... }` up to its closing brace. Annotations
    /// found here belong to the enclosing element.
    fn behaviour_body(&mut self, annotations: &mut Vec<ConstraintAnnotation>) -> PResult<Behaviour> {
        let mut b = Behaviour::default();
        while !self.eat(&Tok::RBrace) {
            annotations.extend(self.annotations());
            if *self.peek() == Tok::RBrace || self.skip_ellipsis() {
                continue;
            }
            if self.at_kw("compose") {
                self.bump();
                self.expect(Tok::LBrace)?;
                loop {
                    if self.skip_ellipsis() {
                        if *self.peek() == Tok::RBrace {
                            break;
                        }
                        continue;
                    }
                    let name = self.ident()?;
                    self.expect(Tok::LParen)?;
                    self.expect(Tok::RParen)?;
                    b.main.push(name);
                    if !self.eat_kw("and") {
                        let _ = self.skip_ellipsis();
                        break;
                    }
                }
                self.expect(Tok::RBrace)?;
                self.eat_term();
                continue;
            }
            let recursive = self.eat_kw("recursive");
            self.expect_kw("value")?;
            let name = self.ident()?;
            if !recursive && self.eat(&Tok::Assign) {
                let expr = self.expr()?;
                self.eat_term();
                b.values.push((name, expr));
                continue;
            }
            self.expect_kw("is")?;
            self.expect_kw("abstraction")?;
            self.expect(Tok::LParen)?;
            self.expect(Tok::RParen)?;
            self.eat(&Tok::Semi);
            self.expect(Tok::LBrace)?;
            let mut body = Vec::new();
            while !self.eat(&Tok::RBrace) {
                if self.skip_ellipsis() {
                    continue;
                }
                body.push(self.stmt()?);
            }
            self.eat_term();
            b.abstractions.push(Abstraction { name, recursive, body });
        }
        // Calls to declared abstractions are invocations; the rest are
        // uninterpreted external effects.
        let declared: Vec<String> = b.abstractions.iter().map(|a| a.name.clone()).collect();
        for a in &mut b.abstractions {
            for s in &mut a.body {
                s.walk_mut(&mut |s| {
                    if let Stmt::External { name, args } = s {
                        if args.is_empty() && declared.contains(name) {
                            *s = Stmt::Invoke(name.clone());
                        }
                    }
                });
            }
        }
        Ok(b)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        if self.eat_kw("via") {
            let path = self.path()?;
            let s = if self.eat_kw("send") {
                Stmt::Send {
                    path,
                    expr: self.expr()?,
                }
            } else if self.eat_kw("receive") {
                let var = self.ident()?;
                self.expect(Tok::Colon)?;
                Stmt::Receive {
                    path,
                    var,
                    ty: self.type_expr()?,
                }
            } else {
                return Err(self.unexpected(&["`send`", "`receive`"]));
            };
            self.eat_term();
            return Ok(s);
        }
        if self.at_kw("if") && *self.peek_at(1) == Tok::LParen {
            self.bump();
            self.bump();
            let cond = self.expr()?;
            self.expect(Tok::RParen)?;
            let then = Box::new(self.stmt()?);
            return Ok(Stmt::If { cond, then });
        }
        if self.at_kw("value") && *self.peek_at(2) == Tok::Assign {
            self.bump();
            let var = self.ident()?;
            self.bump();
            let expr = self.expr()?;
            self.eat_term();
            return Ok(match expr {
                Expr::Var(target) => Stmt::RouteAssign { route: var, target },
                expr => Stmt::Assign { var, expr },
            });
        }
        let name = self.ident()?;
        let s = if self.eat(&Tok::Assign) {
            Stmt::Assign {
                var: name,
                expr: self.expr()?,
            }
        } else if *self.peek() == Tok::LParen {
            Stmt::External {
                name,
                args: self.call_args()?,
            }
        } else {
            return Err(self.unexpected(&["`:=`", "`(`"]));
        };
        self.eat_term();
        Ok(s)
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if !self.eat(&Tok::RParen) {
            args.push(self.expr()?);
            while self.eat(&Tok::Comma) {
                args.push(self.expr()?);
            }
            self.expect(Tok::RParen)?;
        }
        Ok(args)
    }

    fn expr(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Str(n.to_string()))
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat(&Tok::RBracket) {
                    items.push(self.expr()?);
                    while self.eat(&Tok::Comma) {
                        items.push(self.expr()?);
                    }
                    self.expect(Tok::RBracket)?;
                }
                Ok(Expr::Tuple(items))
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    Ok(Expr::Call(name, self.call_args()?))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            _ => Err(self.unexpected(&["string", "identifier", "`[`"])),
        }
    }

    // ---- actions and conditions --------------------------------------

    fn action(&mut self) -> PResult<AtomicAction> {
        let leading = self.annotations();
        let verb_tok = self.ident().map_err(|_| self.unknown_verb())?;
        let verb = match verb_tok.as_str() {
            "unifies" => Verb::Unify,
            v => match Verb::parse(v) {
                Some(v) => v,
                None => {
                    self.pos -= 1;
                    return Err(self.unknown_verb());
                }
            },
        };
        if !leading.is_empty() && verb != Verb::Include {
            return Err(self.error_here("a constraint annotation must precede an element", &["`include`"]));
        }
        let a = match verb {
            Verb::Include => {
                let name = self.ident()?;
                self.expect_kw("is")?;
                let kind = self.element_kind()?;
                let mut e = self.element_rest(name, kind)?;
                let mut annotations = leading;
                annotations.append(&mut e.annotations);
                e.annotations = annotations;
                AtomicAction::Include(Box::new(e))
            }
            Verb::Replicate => {
                let target = self.path()?;
                self.expect_kw("to")?;
                AtomicAction::Replicate {
                    target,
                    clone_name: self.ident()?,
                }
            }
            Verb::Unify => {
                let out_path = self.path()?;
                self.expect_kw("with")?;
                AtomicAction::Unify {
                    out_path,
                    in_path: self.path()?,
                }
            }
            Verb::Attach => {
                let a = self.attach_end()?;
                self.expect_kw("to")?;
                AtomicAction::Attach { a, b: self.attach_end()? }
            }
            Verb::Rename => {
                let target = self.path()?;
                self.expect_kw("to")?;
                AtomicAction::Rename {
                    target,
                    new_name: self.ident()?,
                }
            }
            Verb::Remove => AtomicAction::Remove { target: self.path()? },
        };
        self.eat_term();
        Ok(a)
    }

    fn unknown_verb(&self) -> ParseDiagnostic {
        let verbs: Vec<&str> = Verb::ALL.iter().map(|v| v.as_str()).collect();
        let found = match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            t => t.to_string(),
        };
        self.error_here(
            format!("unknown action verb {found}; expected one of {}", verbs.join(", ")),
            &verbs,
        )
    }

    fn condition(&mut self) -> PResult<Condition> {
        let mut lhs = self.cond_and()?;
        while self.eat_kw("or") {
            lhs = lhs.or(self.cond_and()?);
        }
        Ok(lhs)
    }

    fn cond_and(&mut self) -> PResult<Condition> {
        let mut lhs = self.cond_unary()?;
        while self.eat_kw("and") {
            lhs = lhs.and(self.cond_unary()?);
        }
        Ok(lhs)
    }

    fn cond_unary(&mut self) -> PResult<Condition> {
        if self.eat_kw("not") {
            return Ok(self.cond_unary()?.not());
        }
        if self.eat(&Tok::LParen) {
            let c = self.condition()?;
            self.expect(Tok::RParen)?;
            return Ok(c);
        }
        let name = match self.peek() {
            Tok::Ident(s) if PREDICATES.contains(&s.as_str()) => s.clone(),
            _ => {
                let found = self.peek().to_string();
                return Err(self.error_here(
                    format!("expected a predicate, found {found}; expected one of {}", PREDICATES.join(", ")),
                    PREDICATES,
                ));
            }
        };
        self.bump();
        match name.as_str() {
            "true" => return Ok(Condition::True),
            "false" => return Ok(Condition::False),
            _ => {}
        }
        self.expect(Tok::LParen)?;
        let c = match name.as_str() {
            "exists" => Condition::Exists(self.path()?),
            "is_component" => Condition::IsComponent(self.path()?),
            "is_connector" => Condition::IsConnector(self.path()?),
            "has_port" => {
                let p = self.path()?;
                self.expect(Tok::Comma)?;
                Condition::HasPort(p, self.ident()?)
            }
            "channel_between" => {
                let p = self.path()?;
                self.expect(Tok::Comma)?;
                Condition::ChannelBetween(p, self.path()?)
            }
            "attached" => {
                let a = self.ident()?;
                self.expect(Tok::Comma)?;
                Condition::Attached(a, self.ident()?)
            }
            "unique" => Condition::Unique(self.ident()?),
            "payload_of" => {
                let p = self.path()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Eq)?;
                return Ok(Condition::PayloadOf(p, self.type_expr()?));
            }
            _ => unreachable!(),
        };
        self.expect(Tok::RParen)?;
        Ok(c)
    }

    // ---- patterns -----------------------------------------------------

    pub fn pattern_unit(&mut self) -> PResult<ConstraintPattern> {
        let name = self.ident()?;
        self.expect_kw("is")?;
        let kind = if self.eat_kw(PatternKind::Qos.keyword()) {
            PatternKind::Qos
        } else if self.eat_kw(PatternKind::Platform.keyword()) {
            PatternKind::Platform
        } else {
            return Err(self.unexpected(&["`qualityOfServiceProperty`", "`gridPlatform`"]));
        };
        let mut p = ConstraintPattern {
            name,
            aliases: Vec::new(),
            kind,
            blocks: Vec::new(),
            provides: Vec::new(),
            conflicts_with: Vec::new(),
        };
        while self.eat_kw("alias") {
            p.aliases.push(self.ident()?);
        }
        self.expect(Tok::LBrace)?;
        while !self.eat(&Tok::RBrace) {
            if self.skip_ellipsis() {
                continue;
            }
            if self.at_kw("on") {
                self.pattern_block(&mut p.blocks)?;
            } else if self.eat_kw("provides") {
                self.expect(Tok::LBrace)?;
                p.provides.push(self.condition()?);
                self.expect(Tok::RBrace)?;
                self.eat_term();
            } else if self.eat_kw("conflicts") {
                self.expect_kw("with")?;
                self.expect(Tok::LBrace)?;
                if !self.eat(&Tok::RBrace) {
                    p.conflicts_with.push(self.ident()?);
                    while self.eat(&Tok::Comma) {
                        p.conflicts_with.push(self.ident()?);
                    }
                    self.expect(Tok::RBrace)?;
                }
                self.eat_term();
            } else {
                return Err(self.unexpected(&["`on`", "`provides`", "`conflicts`", "`}`"]));
            }
        }
        self.eat_term();
        self.expect_eof()?;
        let mut element_vars = p.blocks.iter().filter(|b| b.scope == BlockScope::Element).map(|b| &b.var);
        if let Some(first) = element_vars.next() {
            if let Some(other) = element_vars.find(|v| *v != first) {
                return Err(ParseDiagnostic::new(
                    1,
                    1,
                    format!("a pattern binds at most one element variable; found `{first}` and `{other}`"),
                    vec![],
                ));
            }
        }
        Ok(p)
    }

    /// `on <var>:<scope> actions { ... }`; nested clauses become subsequent
    /// blocks.
    fn pattern_block(&mut self, out: &mut Vec<PatternBlock>) -> PResult<()> {
        self.expect_kw("on")?;
        let var = self.ident()?;
        self.expect(Tok::Colon)?;
        let scope = if self.eat_kw(BlockScope::Architecture.keyword()) {
            BlockScope::Architecture
        } else if self.eat_kw(BlockScope::Element.keyword()) {
            BlockScope::Element
        } else {
            let found = self.peek().to_string();
            return Err(self.error_here(
                format!("unknown scope {found}; expected `architecture` or `architecturalElement`"),
                &["architecture", "architecturalElement"],
            ));
        };
        self.expect_kw("actions")?;
        self.expect(Tok::LBrace)?;
        let idx = out.len();
        out.push(PatternBlock {
            scope,
            var,
            actions: Vec::new(),
        });
        let mut nested = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.skip_ellipsis() {
                continue;
            }
            if self.at_kw("on") {
                self.pattern_block(&mut nested)?;
            } else {
                let a = self.action()?;
                out[idx].actions.push(ActionTemplate(a));
            }
        }
        self.eat_term();
        out.extend(nested);
        Ok(())
    }

    // ---- refinement definitions --------------------------------------

    pub fn refinement_unit(&mut self) -> PResult<RefinementDefinition> {
        self.expect_kw("on")?;
        let arch_var = self.ident()?;
        self.expect(Tok::Colon)?;
        self.expect_kw("architecture")?;
        self.expect_kw("action")?;
        let name = self.ident()?;
        self.expect_kw("is")?;
        self.expect_kw("refinement")?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            params.push(self.ident()?);
            while self.eat(&Tok::Comma) {
                params.push(self.ident()?);
            }
            self.expect(Tok::RParen)?;
        }
        let mut def = RefinementDefinition {
            arch_var,
            name,
            params,
            pre: None,
            post: None,
            transformation: None,
            assuming: None,
        };
        const CLAUSES: [&str; 3] = ["pre", "post", "transformation"];
        let mut last: Option<usize> = None;
        self.expect(Tok::LBrace)?;
        while !self.eat(&Tok::RBrace) {
            let Some(idx) = CLAUSES.iter().position(|c| self.at_kw(c)) else {
                return Err(self.unexpected(&["`pre`", "`post`", "`transformation`", "`}`"]));
            };
            let seen = match idx {
                0 => def.pre.is_some(),
                1 => def.post.is_some(),
                _ => def.transformation.is_some(),
            };
            if seen {
                return Err(self.error_here(format!("duplicate {} clause", CLAUSES[idx]), &[]));
            }
            if let Some(prev) = last {
                if prev > idx {
                    return Err(self.error_here(
                        format!("`{}` clause must come before `{}`", CLAUSES[idx], CLAUSES[prev]),
                        &[],
                    ));
                }
            }
            last = Some(idx);
            self.bump();
            self.expect_kw("is")?;
            self.expect(Tok::LBrace)?;
            match idx {
                0 | 1 => {
                    let c = self.condition()?;
                    self.expect(Tok::RBrace)?;
                    if idx == 0 {
                        def.pre = Some(c);
                    } else {
                        def.post = Some(c);
                    }
                }
                _ => {
                    let mut actions = Vec::new();
                    while !self.eat(&Tok::RBrace) {
                        if self.skip_ellipsis() {
                            continue;
                        }
                        actions.push(self.action()?);
                    }
                    def.transformation = Some(actions);
                }
            }
            self.eat_term();
        }
        if self.eat_kw("assuming") {
            self.expect(Tok::LBrace)?;
            def.assuming = Some(self.condition()?);
            self.expect(Tok::RBrace)?;
        }
        self.eat_term();
        self.expect_eof()?;
        let declared: Vec<&String> = def.params.iter().collect();
        let mut seen = std::collections::HashSet::new();
        for p in &declared {
            if !seen.insert(*p) {
                return Err(ParseDiagnostic::new(1, 1, format!("duplicate parameter `{p}`"), vec![]));
            }
        }
        Ok(def)
    }
}
