#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use archweave::behaviour::{Abstraction, Behaviour, Expr, Stmt};
use archweave::model::{
    ArchElement, Architecture, Attachment, Channel, ConstraintAnnotation, Connection, Direction, ElementKind,
    ElementPath, Port, RoleTag, Stage, TypeDecl, TypeExpr,
};
use archweave::emit::{clone_pairs, plan_deployment, ResourceInventory};
use archweave::parser::{parse_architecture, parse_pattern_str, SourceKind, SourceUnit};
use archweave::PatternLibrary;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn library_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("library")
}

pub fn load(path: &Path) -> Architecture {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let origin = path.display().to_string();
    parse_architecture(&SourceUnit::new(SourceKind::Architecture, text, &origin))
        .unwrap_or_else(|e| panic!("{}", e.render(&origin)))
}

pub fn model(name: &str) -> Architecture {
    load(&corpus().join("models").join(name))
}

pub fn read(rel: &str) -> String {
    fs::read_to_string(corpus().join(rel)).unwrap()
}

/// Every file under `dir` with one of the given extensions, sorted.
pub fn files_with(dir: &Path, exts: &[&str]) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.contains(&e)))
        .collect();
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// Random well-formed models

const STR_CHARS: &[char] = &['a', 'Z', '0', ' ', '"', '\\', '\n', '\t', 'é', '-', '<', '{', '}', ':', '.'];

struct Gen {
    rng: ChaCha8Rng,
    arch_types: Vec<String>,
}

impl Gen {
    fn string(&mut self) -> String {
        let n = self.rng.gen_range(0..8);
        (0..n).map(|_| *STR_CHARS.choose(&mut self.rng).unwrap()).collect()
    }

    fn ty(&mut self, local: &[String], depth: usize) -> TypeExpr {
        match self.rng.gen_range(0..5) {
            0 => TypeExpr::Any,
            1 if !self.arch_types.is_empty() => TypeExpr::Named(self.arch_types.choose(&mut self.rng).unwrap().clone()),
            2 if !local.is_empty() => TypeExpr::Named(local.choose(&mut self.rng).unwrap().clone()),
            3 if depth < 2 => {
                let n = self.rng.gen_range(1..3);
                TypeExpr::Tuple((0..n).map(|_| self.ty(local, depth + 1)).collect())
            }
            _ => TypeExpr::Named(["String", "Integer", "Boolean", "Natural"].choose(&mut self.rng).unwrap().to_string()),
        }
    }

    fn expr(&mut self, depth: usize) -> Expr {
        match self.rng.gen_range(0..4) {
            0 => Expr::Str(self.string()),
            1 => Expr::Var(format!("v{}", self.rng.gen_range(0..4))),
            2 if depth < 2 => {
                let n = self.rng.gen_range(0..3);
                Expr::Call(format!("f{}", self.rng.gen_range(0..3)), (0..n).map(|_| self.expr(depth + 1)).collect())
            }
            3 if depth < 2 => {
                let n = self.rng.gen_range(1..3);
                Expr::Tuple((0..n).map(|_| self.expr(depth + 1)).collect())
            }
            _ => Expr::Str(self.string()),
        }
    }

    fn stmt(&mut self, e: &ArchElement, local: &[String], abstractions: &[String], depth: usize) -> Stmt {
        let conns = |dir: Direction| -> Vec<ElementPath> {
            e.ports
                .iter()
                .flat_map(|p| {
                    p.connections()
                        .filter(move |c| c.direction == dir)
                        .map(move |c| ElementPath::new(vec![p.name.clone(), c.name.clone()]))
                })
                .collect()
        };
        loop {
            match self.rng.gen_range(0..7) {
                0 => {
                    if let Some(path) = conns(Direction::Outgoing).choose(&mut self.rng).cloned() {
                        return Stmt::Send { path, expr: self.expr(0) };
                    }
                }
                1 => {
                    if let Some(path) = conns(Direction::Incoming).choose(&mut self.rng).cloned() {
                        return Stmt::Receive {
                            path,
                            var: format!("v{}", self.rng.gen_range(0..4)),
                            ty: self.ty(local, 0),
                        };
                    }
                }
                2 => {
                    return Stmt::Assign {
                        var: format!("v{}", self.rng.gen_range(0..4)),
                        expr: self.expr(0),
                    }
                }
                3 if depth == 0 => {
                    return Stmt::If {
                        cond: self.expr(1),
                        then: Box::new(self.stmt(e, local, abstractions, 1)),
                    }
                }
                4 if !abstractions.is_empty() => return Stmt::Invoke(abstractions.choose(&mut self.rng).unwrap().clone()),
                5 => {
                    let n = self.rng.gen_range(0..3);
                    return Stmt::External {
                        name: format!("ext{}", self.rng.gen_range(0..3)),
                        args: (0..n).map(|_| self.expr(0)).collect(),
                    };
                }
                6 => {
                    return Stmt::RouteAssign {
                        route: format!("route{}", self.rng.gen_range(0..2)),
                        target: format!("E{}", self.rng.gen_range(0..4)),
                    }
                }
                _ => {}
            }
        }
    }

    fn ports(&mut self, local: &[String], builtin_only: bool) -> Vec<Port> {
        let np = self.rng.gen_range(0..3);
        (0..np)
            .map(|j| {
                let mk = |dir: Direction, prefix: &str, g: &mut Gen| -> Vec<Connection> {
                    let n = g.rng.gen_range(0..3);
                    (0..n)
                        .map(|k| Connection {
                            name: format!("{prefix}{j}C{k}"),
                            payload: if builtin_only {
                                TypeExpr::Named("String".into())
                            } else {
                                g.ty(local, 0)
                            },
                            direction: dir,
                        })
                        .collect()
                };
                let incoming = mk(Direction::Incoming, "In", self);
                let outgoing = mk(Direction::Outgoing, "Out", self);
                Port {
                    name: format!("P{j}"),
                    incoming,
                    outgoing,
                }
            })
            .collect()
    }

    fn child(&mut self, name: String, depth: usize) -> ArchElement {
        let mut c = ArchElement::new(name, if self.rng.gen_bool(0.7) { ElementKind::Component } else { ElementKind::Connector });
        c.ports = self.ports(&[], true);
        if depth < 1 && self.rng.gen_bool(0.3) {
            c.children.push(self.child("Inner0".into(), depth + 1));
        }
        c
    }

    fn element(&mut self, i: usize, stage: Stage) -> ArchElement {
        let kind = if self.rng.gen_bool(0.7) { ElementKind::Component } else { ElementKind::Connector };
        let mut e = ArchElement::new(format!("E{i}"), kind);
        let roles = if stage == Stage::Gesm {
            vec![RoleTag::Service, RoleTag::Plain]
        } else {
            vec![RoleTag::Service, RoleTag::Plain, RoleTag::GenericInterface]
        };
        if self.rng.gen_bool(0.5) {
            e.role_tag = Some(*roles.choose(&mut self.rng).unwrap());
        }
        if self.rng.gen_bool(0.3) {
            e.weight = Some(self.rng.gen_range(1..10));
        }
        let nt = self.rng.gen_range(0..3);
        e.type_decls = (0..nt)
            .map(|k| TypeDecl {
                name: format!("L{k}"),
                expr: TypeExpr::Any,
            })
            .collect();
        let local: Vec<String> = e.type_decls.iter().map(|t| t.name.clone()).collect();
        for k in 0..e.type_decls.len() {
            if k > 0 && self.rng.gen_bool(0.5) {
                e.type_decls[k].expr = TypeExpr::Named(local[k - 1].clone());
            }
        }
        e.ports = self.ports(&local, false);
        let nc = self.rng.gen_range(0..3);
        e.children = (0..nc).map(|k| self.child(format!("C{k}"), 0)).collect();
        if kind == ElementKind::Component && self.rng.gen_bool(0.3) {
            let n = self.rng.gen_range(1..3);
            e.annotations = (0..n)
                .map(|_| ConstraintAnnotation {
                    constraint_ref: ["faulttolerance", "loadbalancing", "FT"].choose(&mut self.rng).unwrap().to_string(),
                    priority: self.rng.gen_range(1..6),
                    range: self.rng.gen_range(1..4),
                })
                .collect();
        }
        if self.rng.gen_bool(0.7) {
            let na = self.rng.gen_range(0..3);
            let names: Vec<String> = (0..na).map(|k| format!("act{k}")).collect();
            let nv = self.rng.gen_range(0..3);
            let values = (0..nv).map(|k| (format!("w{k}"), self.expr(0))).collect();
            let abstractions = names
                .iter()
                .map(|n| {
                    let len = self.rng.gen_range(0..5);
                    Abstraction {
                        name: n.clone(),
                        recursive: self.rng.gen_bool(0.5),
                        body: (0..len).map(|_| self.stmt(&e, &local, &names, 0)).collect(),
                    }
                })
                .collect();
            let main = names.iter().filter(|_| self.rng.gen_bool(0.6)).cloned().collect();
            e.behaviour = Some(Behaviour {
                values,
                abstractions,
                main,
            });
        }
        e
    }
}

/// Deterministic random model that passes validation.
pub fn random_model(seed: u64) -> Architecture {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        arch_types: Vec::new(),
    };
    let mut a = Architecture::new(format!("gen{seed}"));
    if g.rng.gen_bool(0.3) {
        a.style_ref = Some("GridStyle".into());
    }
    a.stage = *[Stage::Geim, Stage::GeimPrime, Stage::Gesm].choose(&mut g.rng).unwrap();
    let nt = g.rng.gen_range(0..3);
    for k in 0..nt {
        let expr = g.ty(&[], 0);
        a.type_decls.push(TypeDecl {
            name: format!("T{k}"),
            expr,
        });
        g.arch_types.push(format!("T{k}"));
    }
    let n = g.rng.gen_range(0..6);
    for i in 0..n {
        let stage = a.stage;
        let e = g.element(i, stage);
        a.elements.push(e);
    }
    let mut outs = Vec::new();
    let mut ins = Vec::new();
    for e in &a.elements {
        for p in &e.ports {
            for c in p.connections() {
                let path = ElementPath::new(vec![e.name.clone(), p.name.clone(), c.name.clone()]);
                match c.direction {
                    Direction::Outgoing => outs.push((path, c.payload.clone())),
                    Direction::Incoming => ins.push((path, c.payload.clone())),
                }
            }
        }
    }
    for (from, ty) in &outs {
        let matching: Vec<&ElementPath> = ins.iter().filter(|(_, t)| t == ty).map(|(p, _)| p).collect();
        if let Some(to) = matching.choose(&mut g.rng) {
            if g.rng.gen_bool(0.6) {
                a.channels.push(Channel {
                    from: from.clone(),
                    to: (*to).clone(),
                });
            }
        }
    }
    if a.elements.len() >= 2 {
        for _ in 0..g.rng.gen_range(0..3) {
            let x = g.rng.gen_range(0..a.elements.len());
            let y = g.rng.gen_range(0..a.elements.len());
            if x != y {
                a.attachments.push(Attachment {
                    a: a.elements[x].name.clone(),
                    b: a.elements[y].name.clone(),
                });
            }
        }
    }
    a
}

// ---------------------------------------------------------------------------
// Deployment oracle

/// Whether some assignment of `weights` to `caps` keeps every listed pair on
/// different resources. Plain enumeration of all |caps|^n assignments.
pub fn brute_force_feasible(weights: &[u64], caps: &[u64], apart: &[(usize, usize)]) -> bool {
    let n = weights.len();
    let r = caps.len();
    if n == 0 {
        return true;
    }
    if r == 0 {
        return false;
    }
    let total = r.pow(n as u32);
    (0..total).any(|mut code| {
        let mut assign = vec![0usize; n];
        for slot in assign.iter_mut() {
            *slot = code % r;
            code /= r;
        }
        let mut load = vec![0u64; r];
        for (e, &res) in assign.iter().enumerate() {
            load[res] += weights[e];
        }
        load.iter().zip(caps).all(|(l, c)| l <= c) && apart.iter().all(|&(a, b)| assign[a] != assign[b])
    })
}

const POOL: [&str; 5] = ["A", "AClone0", "AClone1", "B", "BClone0"];

/// Every subset of a five-name pool (with clone pairs), every weight in
/// {1, 2}, every inventory of one to three resources with capacities 1..=3,
/// checked against brute force. Returns the number of cases and a tally of
/// outcomes.
pub fn deploy_sweep() -> Result<(usize, BTreeMap<&'static str, usize>), String> {
    let mut inventories: Vec<Vec<u32>> = Vec::new();
    for r in 1..=3u32 {
        for code in 0..3u32.pow(r) {
            inventories.push((0..r).map(|i| code / 3u32.pow(i) % 3 + 1).collect());
        }
    }
    let mut cases = 0;
    let mut tally: BTreeMap<&'static str, usize> = BTreeMap::new();
    for subset in 0..(1u32 << POOL.len()) {
        let names: Vec<&str> = (0..POOL.len()).filter(|i| subset >> i & 1 == 1).map(|i| POOL[i]).collect();
        for wcode in 0..(1u32 << names.len()) {
            let weights: Vec<u64> = (0..names.len()).map(|i| u64::from(wcode >> i & 1) + 1).collect();
            let mut arch = Architecture::new("d");
            arch.stage = Stage::Gesm;
            for (n, w) in names.iter().zip(&weights) {
                let mut e = ArchElement::new(*n, ElementKind::Component);
                e.weight = Some(*w as u32);
                arch.elements.push(e);
            }
            let pairs = clone_pairs(&names);
            for caps in &inventories {
                cases += 1;
                let named: Vec<(String, u32)> = caps.iter().enumerate().map(|(i, c)| (format!("r{i}"), *c)).collect();
                let refs: Vec<(&str, u32)> = named.iter().map(|(n, c)| (n.as_str(), *c)).collect();
                let c64: Vec<u64> = caps.iter().map(|&c| u64::from(c)).collect();
                let feasible = brute_force_feasible(&weights, &c64, &pairs);
                let case = format!("elements {names:?} weights {weights:?} capacities {caps:?}");
                match plan_deployment(&arch, &ResourceInventory::new(&refs)) {
                    Ok(plan) => {
                        if !feasible {
                            return Err(format!("{case}: plan found where brute force has none"));
                        }
                        if plan.assignments.len() != names.len() {
                            return Err(format!("{case}: incomplete plan"));
                        }
                        let mut load = vec![0u64; caps.len()];
                        for (e, r) in &plan.assignments {
                            let ei = names.iter().position(|n| n == e).ok_or(format!("{case}: unknown {e}"))?;
                            let ri = named.iter().position(|(n, _)| n == r).ok_or(format!("{case}: unknown {r}"))?;
                            load[ri] += weights[ei];
                        }
                        if load.iter().zip(&c64).any(|(l, c)| l > c) {
                            return Err(format!("{case}: capacity exceeded"));
                        }
                        if pairs.iter().any(|&(o, c)| plan.resource_of(names[o]) == plan.resource_of(names[c])) {
                            return Err(format!("{case}: clone shares a resource"));
                        }
                        *tally.entry("ok").or_default() += 1;
                    }
                    Err(e) => {
                        if feasible {
                            return Err(format!("{case}: missed a feasible plan ({e})"));
                        }
                        let expected = if (caps.len() == 1 && !pairs.is_empty()) || brute_force_feasible(&weights, &c64, &[]) {
                            "anti-affinity-unsatisfiable"
                        } else {
                            "insufficient-capacity"
                        };
                        if e.code() != expected {
                            return Err(format!("{case}: got {}, expected {expected}", e.code()));
                        }
                        *tally.entry(e.code()).or_default() += 1;
                    }
                }
            }
        }
    }
    Ok((cases, tally))
}

// ---------------------------------------------------------------------------
// Random annotation sets

pub const TAG_PATTERN: &str = "TAG is qualityOfServiceProperty {
  on X : architecturalElement actions {
    replicate X to XClone0 .
  }
  provides { exists(XClone0) }
}";

pub const MON_PATTERN: &str = "MON is qualityOfServiceProperty {
  on X : architecturalElement actions {
    include XMonitor is component { } .
    attach X to XMonitor .
  }
}";

pub fn annotation_library() -> PatternLibrary {
    PatternLibrary::new(
        vec![parse_pattern_str(TAG_PATTERN).unwrap(), parse_pattern_str(MON_PATTERN).unwrap()],
        vec![],
    )
    .unwrap()
}

/// Components E0..En, each with zero to two annotations at random priorities.
pub fn annotated(seed: u64) -> Architecture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Architecture::new("ordering");
    let n = rng.gen_range(1..7);
    for i in 0..n {
        let mut e = ArchElement::new(format!("E{i}"), ElementKind::Component);
        let mut used = BTreeSet::new();
        for _ in 0..rng.gen_range(0..3) {
            let r = if rng.gen_bool(0.5) { "TAG" } else { "MON" };
            if used.insert(r) {
                e.annotations.push(ConstraintAnnotation {
                    constraint_ref: r.into(),
                    priority: rng.gen_range(1..5),
                    range: 1,
                });
            }
        }
        a.elements.push(e);
    }
    a
}

/// (priority, textual index, pattern, element) of every annotation, sorted;
/// the order a plan must follow.
pub fn expected_order(a: &Architecture) -> Vec<(u32, usize, String, String)> {
    let mut v = Vec::new();
    for e in &a.elements {
        for an in &e.annotations {
            v.push((an.priority, v.len(), an.constraint_ref.clone(), e.name.clone()));
        }
    }
    v.sort();
    v
}
