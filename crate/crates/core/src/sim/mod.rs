//! Bounded simulation of element behaviours.
//!
//! Each scheduler step gives every live top-level element one turn, in
//! declaration order (or a seeded permutation with `ORDER random`). In its
//! turn an element advances each of its threads by at most one statement. A
//! thread that took part in a rendezvous during the step, as either side,
//! does not move again in that step.
//!
//! Communication is synchronous: a send fires only together with a receive
//! waiting on the other end of one of the sender's channels. Requests from
//! the scenario arrive from the environment (`env`), and sends by workload
//! elements on connections without channels are absorbed by it.
//!
//! Failover: when an element `X` is down and a live connector that shares a
//! channel with `X` holds a route to a live element `Y`, deliveries to
//! `X::P::C` go to `Y::P::C`, and `Y`'s sends on connections without
//! channels use `X`'s channels.

mod scenario;
mod trace;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use scenario::{FaultEvent, FaultMode, Order, Request, ScenarioError, SimScenario};
pub use trace::{check_trace, EventKind, EventPattern, Trace, TraceEvent, TraceProperty, Verdict, ENV};

use crate::behaviour::{Expr, Stmt};
use crate::model::{ArchElement, Architecture, Direction, ElementKind, ElementPath};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unresolved-behaviour-path: {element} uses `{path}`, which is not a {expected} connection of it")]
    UnresolvedBehaviourPath {
        element: String,
        path: String,
        expected: &'static str,
    },
    #[error("unknown element `{0}` in scenario")]
    UnknownElement(String),
    #[error("scenario port `{port}` of {element} does not name a single incoming connection")]
    UnresolvedRequestPort { element: String, port: String },
}

/// Builtin condition: true while the named element is down.
pub const SERVICE_DOWN: &str = "serviceDown";

#[derive(Debug, Clone)]
struct Thread {
    cont: VecDeque<Stmt>,
    locals: BTreeMap<String, String>,
    moved: bool,
    blocked_reported: bool,
}

#[derive(Debug)]
struct Elem<'a> {
    decl: &'a ArchElement,
    alive: bool,
    values: BTreeMap<String, String>,
    threads: Vec<Thread>,
    routes: BTreeMap<String, String>,
    workload: bool,
}

/// Where a send on some connection may be delivered.
#[derive(Default)]
struct Targets {
    /// (element index, relative connection path)
    live: Vec<(usize, String)>,
    down: Vec<String>,
    env_sink: bool,
}

struct Sim<'a> {
    elems: Vec<Elem<'a>>,
    index: BTreeMap<&'a str, usize>,
    /// Absolute outgoing path -> absolute incoming paths.
    out_map: BTreeMap<String, Vec<&'a ElementPath>>,
    /// Absolute incoming path -> absolute outgoing paths.
    in_map: BTreeMap<String, Vec<&'a ElementPath>>,
    /// Environment messages per (element, relative connection).
    pending: BTreeMap<(usize, String), VecDeque<(u64, String)>>,
    /// Channels between each pair of top-level elements, either direction.
    linked: BTreeSet<(usize, usize)>,
    step: u64,
    trace: Trace,
}

/// Runs `scenario` against `arch`. Identical inputs give identical traces.
pub fn simulate(arch: &Architecture, scenario: &SimScenario) -> Result<Trace, SimError> {
    let mut sim = Sim::new(arch, scenario)?;
    let mut faults: Vec<&FaultEvent> = scenario.faults.iter().collect();
    faults.sort_by_key(|f| f.step);
    let mut faults = faults.into_iter().peekable();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut order: Vec<usize> = (0..sim.elems.len()).collect();
    let has_threads = sim.elems.iter().any(|e| !e.threads.is_empty());
    for step in 1..=scenario.max_steps {
        sim.step = step;
        while let Some(f) = faults.next_if(|f| f.step <= step) {
            let i = sim.index[f.element.as_str()];
            sim.elems[i].alive = f.mode == FaultMode::Up;
            sim.emit(&f.element, EventKind::Fault, f.mode.as_str().to_string());
        }
        if !has_threads {
            continue;
        }
        for e in &mut sim.elems {
            for t in &mut e.threads {
                t.moved = false;
            }
        }
        if scenario.order == Order::Random {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            if !sim.elems[i].alive {
                continue;
            }
            for t in 0..sim.elems[i].threads.len() {
                if !sim.elems[i].threads[t].moved {
                    sim.turn(i, t);
                }
            }
        }
    }
    Ok(sim.trace)
}

fn rel_path(e: &ArchElement, path: &ElementPath, dir: Direction) -> Option<String> {
    let (port, conn) = e.local_connection(path)?;
    (conn.direction == dir).then(|| format!("{}::{}", port.name, conn.name))
}

fn split_abs(p: &ElementPath) -> Option<(&str, String)> {
    match p.segments.as_slice() {
        [e, port, conn] => Some((e.as_str(), format!("{port}::{conn}"))),
        _ => None,
    }
}

fn has_rel(e: &ArchElement, rel: &str) -> bool {
    ElementPath::parse(rel).is_some_and(|p| p.segments.len() == 2 && e.local_connection(&p).is_some())
}

impl<'a> Sim<'a> {
    fn new(arch: &'a Architecture, sc: &SimScenario) -> Result<Self, SimError> {
        let index: BTreeMap<&str, usize> = arch.elements.iter().enumerate().map(|(i, e)| (e.name.as_str(), i)).collect();
        for name in sc.faults.iter().map(|f| &f.element).chain(sc.workload.iter().map(|r| &r.element)) {
            if !index.contains_key(name.as_str()) {
                return Err(SimError::UnknownElement(name.clone()));
            }
        }
        let workload: BTreeSet<&str> = sc.workload.iter().map(|r| r.element.as_str()).collect();
        let mut elems = Vec::new();
        for e in &arch.elements {
            let mut el = Elem {
                decl: e,
                alive: true,
                values: BTreeMap::new(),
                threads: Vec::new(),
                routes: BTreeMap::new(),
                workload: workload.contains(e.name.as_str()),
            };
            if let Some(b) = &e.behaviour {
                for a in &b.abstractions {
                    for s in &a.body {
                        check_paths(e, s)?;
                    }
                }
                for (name, x) in &b.values {
                    let v = eval(x, &BTreeMap::new(), &el.values, &|_| false);
                    el.values.insert(name.clone(), v);
                }
                for m in &b.main {
                    if let Some(a) = b.abstraction(m) {
                        el.threads.push(Thread {
                            cont: a.body.iter().cloned().collect(),
                            locals: BTreeMap::new(),
                            moved: false,
                            blocked_reported: false,
                        });
                    }
                }
            }
            elems.push(el);
        }
        let mut out_map: BTreeMap<String, Vec<&ElementPath>> = BTreeMap::new();
        let mut in_map: BTreeMap<String, Vec<&ElementPath>> = BTreeMap::new();
        let mut linked = BTreeSet::new();
        for ch in &arch.channels {
            out_map.entry(ch.from.to_string()).or_default().push(&ch.to);
            in_map.entry(ch.to.to_string()).or_default().push(&ch.from);
            if let (Some(&a), Some(&b)) = (index.get(ch.from.head()), index.get(ch.to.head())) {
                linked.insert((a, b));
                linked.insert((b, a));
            }
        }
        let mut pending: BTreeMap<(usize, String), VecDeque<(u64, String)>> = BTreeMap::new();
        let mut reqs: Vec<&Request> = sc.workload.iter().collect();
        reqs.sort_by_key(|r| r.step);
        for r in reqs {
            let i = index[r.element.as_str()];
            let rel = request_rel(&arch.elements[i], &r.port).ok_or_else(|| SimError::UnresolvedRequestPort {
                element: r.element.clone(),
                port: r.port.clone(),
            })?;
            pending.entry((i, rel)).or_default().push_back((r.step, r.message.clone()));
        }
        Ok(Sim {
            elems,
            index,
            out_map,
            in_map,
            pending,
            linked,
            step: 0,
            trace: Trace::default(),
        })
    }

    fn emit(&mut self, element: &str, kind: EventKind, detail: String) {
        self.trace.events.push(TraceEvent {
            step: self.step,
            element: element.to_string(),
            kind,
            detail,
        });
    }

    fn name(&self, i: usize) -> &'a str {
        self.elems[i].decl.name.as_str()
    }

    /// Live replacement for a down element, if a connector routes to one.
    fn redirect(&self, x: usize) -> Option<usize> {
        if self.elems[x].alive {
            return None;
        }
        for (c, el) in self.elems.iter().enumerate() {
            if !el.alive || el.decl.kind != ElementKind::Connector || !self.linked.contains(&(c, x)) {
                continue;
            }
            for target in el.routes.values() {
                if let Some(&y) = self.index.get(target.as_str()) {
                    if y != x && self.elems[y].alive {
                        return Some(y);
                    }
                }
            }
        }
        None
    }

    /// The down element `y` currently stands in for.
    fn stands_in_for(&self, y: usize) -> Option<usize> {
        (0..self.elems.len()).find(|&x| x != y && self.redirect(x) == Some(y))
    }

    fn targets(&self, s: usize, rel: &str) -> Targets {
        let mut t = Targets::default();
        let abs = format!("{}::{rel}", self.name(s));
        let mut chans = self.out_map.get(&abs).cloned().unwrap_or_default();
        if chans.is_empty() {
            if let Some(x) = self.stands_in_for(s) {
                chans = self
                    .out_map
                    .get(&format!("{}::{rel}", self.name(x)))
                    .cloned()
                    .unwrap_or_default();
            }
        }
        if chans.is_empty() {
            t.env_sink = self.elems[s].workload;
            return t;
        }
        for to in chans {
            let Some((head, rel_r)) = split_abs(to) else { continue };
            let Some(&r) = self.index.get(head) else { continue };
            if self.elems[r].alive {
                t.live.push((r, rel_r));
            } else if let Some(y) = self.redirect(r).filter(|&y| has_rel(self.elems[y].decl, &rel_r)) {
                t.live.push((y, rel_r));
            } else {
                t.down.push(to.to_string());
            }
        }
        t
    }

    fn receiving_thread(&self, r: usize, rel: &str) -> Option<usize> {
        let e = &self.elems[r];
        e.threads.iter().position(|th| {
            !th.moved
                && matches!(th.cont.front(), Some(Stmt::Receive { path, .. })
                    if rel_path(e.decl, path, Direction::Incoming).as_deref() == Some(rel))
        })
    }

    fn env_value(&self, i: usize, t: usize, x: &Expr) -> String {
        let el = &self.elems[i];
        let alive = |name: &str| self.index.get(name).is_some_and(|&k| !self.elems[k].alive);
        eval(x, &el.threads[t].locals, &el.values, &alive)
    }

    fn advance(&mut self, i: usize, t: usize) {
        let th = &mut self.elems[i].threads[t];
        th.cont.pop_front();
        th.moved = true;
        th.blocked_reported = false;
    }

    fn bind(&mut self, i: usize, t: usize, value: String) {
        if let Some(Stmt::Receive { var, .. }) = self.elems[i].threads[t].cont.front().cloned() {
            self.elems[i].threads[t].locals.insert(var, value);
        }
        self.advance(i, t);
    }

    fn blocked(&mut self, i: usize, t: usize, detail: String) {
        if !self.elems[i].threads[t].blocked_reported {
            self.elems[i].threads[t].blocked_reported = true;
            let name = self.name(i);
            self.emit(name, EventKind::Blocked, detail);
        }
    }

    fn rendezvous(&mut self, sender: &str, receiver: &str, detail: String) {
        self.emit(sender, EventKind::Send, detail.clone());
        self.emit(receiver, EventKind::Receive, detail.clone());
        self.emit(sender, EventKind::Rendezvous, detail);
    }

    fn turn(&mut self, i: usize, t: usize) {
        loop {
            let Some(stmt) = self.elems[i].threads[t].cont.front().cloned() else {
                return;
            };
            match stmt {
                Stmt::If { cond, then } => {
                    let hold = self.env_value(i, t, &cond) == "true";
                    let th = &mut self.elems[i].threads[t];
                    th.cont.pop_front();
                    if hold {
                        th.cont.push_front(*then);
                        continue;
                    }
                    th.moved = true;
                }
                Stmt::Assign { var, expr } => {
                    let v = self.env_value(i, t, &expr);
                    self.elems[i].threads[t].locals.insert(var, v);
                    self.advance(i, t);
                }
                Stmt::Invoke(name) => {
                    let body = self.elems[i]
                        .decl
                        .behaviour
                        .as_ref()
                        .and_then(|b| b.abstraction(&name))
                        .map(|a| a.body.clone())
                        .unwrap_or_default();
                    self.advance(i, t);
                    let th = &mut self.elems[i].threads[t];
                    for s in body.into_iter().rev() {
                        th.cont.push_front(s);
                    }
                }
                Stmt::External { name, args } => {
                    let rendered: Vec<String> = args.iter().map(|a| self.env_value(i, t, a)).collect();
                    let detail = format!("{name}({})", rendered.join(", "));
                    let me = self.name(i);
                    self.emit(me, EventKind::External, detail);
                    self.advance(i, t);
                }
                Stmt::RouteAssign { route, target } => {
                    let el = &self.elems[i];
                    let target = el.threads[t]
                        .locals
                        .get(&target)
                        .or_else(|| el.values.get(&target))
                        .cloned()
                        .unwrap_or(target);
                    if self.elems[i].routes.get(&route) != Some(&target) {
                        self.elems[i].routes.insert(route.clone(), target.clone());
                        let me = self.name(i);
                        self.emit(me, EventKind::RouteUpdate, format!("{route} := {target}"));
                    }
                    self.advance(i, t);
                }
                Stmt::Send { path, expr } => self.try_send(i, t, &path, &expr),
                Stmt::Receive { path, .. } => self.try_receive(i, t, &path),
            }
            return;
        }
    }

    fn try_send(&mut self, s: usize, t: usize, path: &ElementPath, expr: &Expr) {
        let rel = rel_path(self.elems[s].decl, path, Direction::Outgoing).expect("checked at start");
        let value = self.env_value(s, t, expr);
        let targets = self.targets(s, &rel);
        let me = self.name(s);
        if targets.env_sink {
            self.rendezvous(me, ENV, format!("{me}::{rel} -> {ENV} {value}"));
            self.advance(s, t);
            return;
        }
        for (r, rel_r) in &targets.live {
            if let Some(rt) = self.receiving_thread(*r, rel_r) {
                if *r == s && rt == t {
                    continue;
                }
                let rname = self.name(*r);
                self.rendezvous(me, rname, format!("{me}::{rel} -> {rname}::{rel_r} {value}"));
                self.advance(s, t);
                self.bind(*r, rt, value);
                return;
            }
        }
        if let Some(d) = targets.down.first() {
            self.blocked(s, t, format!("{me}::{rel} -> {d} partner down"));
        }
    }

    fn try_receive(&mut self, r: usize, t: usize, path: &ElementPath) {
        let rel = rel_path(self.elems[r].decl, path, Direction::Incoming).expect("checked at start");
        let me = self.name(r);
        let key = (r, rel.clone());
        if let Some(q) = self.pending.get_mut(&key) {
            if q.front().is_some_and(|(at, _)| *at <= self.step) {
                let (_, msg) = q.pop_front().expect("front checked");
                self.rendezvous(ENV, me, format!("{ENV} -> {me}::{rel} {msg}"));
                self.bind(r, t, msg);
                return;
            }
        }
        for s in 0..self.elems.len() {
            if !self.elems[s].alive {
                continue;
            }
            for st in 0..self.elems[s].threads.len() {
                if (s, st) == (r, t) || self.elems[s].threads[st].moved {
                    continue;
                }
                let Some(Stmt::Send { path: sp, expr }) = self.elems[s].threads[st].cont.front().cloned() else {
                    continue;
                };
                let Some(srel) = rel_path(self.elems[s].decl, &sp, Direction::Outgoing) else { continue };
                let targets = self.targets(s, &srel);
                if targets.live.iter().any(|(x, xr)| *x == r && *xr == rel) {
                    let value = self.env_value(s, st, &expr);
                    let sname = self.name(s);
                    self.rendezvous(sname, me, format!("{sname}::{srel} -> {me}::{rel} {value}"));
                    self.advance(s, st);
                    self.bind(r, t, value);
                    return;
                }
            }
        }
        let abs = format!("{me}::{rel}");
        let down = self
            .in_map
            .get(&abs)
            .into_iter()
            .flatten()
            .find(|from| self.index.get(from.head()).is_some_and(|&k| !self.elems[k].alive))
            .map(|from| from.to_string());
        if let Some(d) = down {
            self.blocked(r, t, format!("{abs} <- {d} partner down"));
        }
    }
}

fn request_rel(e: &ArchElement, port: &str) -> Option<String> {
    let p = ElementPath::parse(port)?;
    if p.segments.len() == 2 {
        return rel_path(e, &p, Direction::Incoming);
    }
    let port = e.port(port)?;
    match port.incoming.as_slice() {
        [c] => Some(format!("{}::{}", port.name, c.name)),
        _ => None,
    }
}

fn check_paths(e: &ArchElement, s: &Stmt) -> Result<(), SimError> {
    let mut result = Ok(());
    s.walk(&mut |s| {
        let (path, dir, expected) = match s {
            Stmt::Send { path, .. } => (path, Direction::Outgoing, "outgoing"),
            Stmt::Receive { path, .. } => (path, Direction::Incoming, "incoming"),
            _ => return,
        };
        if result.is_ok() && rel_path(e, path, dir).is_none() {
            result = Err(SimError::UnresolvedBehaviourPath {
                element: e.name.clone(),
                path: path.to_string(),
                expected,
            });
        }
    });
    result
}

/// Values are strings; unknown identifiers evaluate to themselves and calls
/// to their rendered form, except the `serviceDown` builtin.
fn eval(
    x: &Expr,
    locals: &BTreeMap<String, String>,
    values: &BTreeMap<String, String>,
    is_down: &dyn Fn(&str) -> bool,
) -> String {
    match x {
        Expr::Str(s) => s.clone(),
        Expr::Var(v) => locals.get(v).or_else(|| values.get(v)).cloned().unwrap_or_else(|| v.clone()),
        Expr::Call(f, args) if f == SERVICE_DOWN && args.len() == 1 => {
            let target = eval(&args[0], locals, values, is_down);
            is_down(&target).to_string()
        }
        Expr::Call(f, args) => {
            let a: Vec<String> = args.iter().map(|a| eval(a, locals, values, is_down)).collect();
            format!("{f}({})", a.join(", "))
        }
        Expr::Tuple(items) => {
            let a: Vec<String> = items.iter().map(|a| eval(a, locals, values, is_down)).collect();
            format!("[{}]", a.join(", "))
        }
    }
}
