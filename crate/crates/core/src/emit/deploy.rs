//! Placement of top-level elements onto grid resources.
//!
//! Best-fit-decreasing first; if that fails, an exhaustive backtracking
//! search in the same order decides feasibility.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::model::{Architecture, Stage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resource {
    pub name: String,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResourceInventory {
    pub resources: Vec<Resource>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeployError {
    #[error("insufficient-capacity: total weight {needed} cannot be placed on {available} units")]
    InsufficientCapacity { needed: u64, available: u64 },
    #[error("anti-affinity-unsatisfiable: {original} and {clone} cannot be separated")]
    AntiAffinityUnsatisfiable { original: String, clone: String },
    #[error("deployment needs a GESM model, got {}", .0.as_str())]
    WrongStage(Stage),
    #[error("{origin}:{line}: {message}")]
    Inventory { origin: String, line: usize, message: String },
}

impl DeployError {
    pub fn code(&self) -> &'static str {
        match self {
            DeployError::InsufficientCapacity { .. } => "insufficient-capacity",
            DeployError::AntiAffinityUnsatisfiable { .. } => "anti-affinity-unsatisfiable",
            DeployError::WrongStage(_) => "wrong-stage",
            DeployError::Inventory { .. } => "inventory",
        }
    }
}

impl ResourceInventory {
    pub fn new(resources: &[(&str, u32)]) -> Self {
        ResourceInventory {
            resources: resources
                .iter()
                .map(|(n, c)| Resource {
                    name: n.to_string(),
                    capacity: *c,
                })
                .collect(),
        }
    }

    pub fn total_capacity(&self) -> u64 {
        self.resources.iter().map(|r| u64::from(r.capacity)).sum()
    }

    /// `resource <name> capacity <n>` lines; `--` comments.
    pub fn parse(text: &str, origin: &str) -> Result<Self, DeployError> {
        let mut inv = ResourceInventory::default();
        let mut names = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let err = |message: String| DeployError::Inventory {
                origin: origin.to_string(),
                line: i + 1,
                message,
            };
            let line = raw.split("--").next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let ["resource", name, "capacity", cap] = f.as_slice() else {
                return Err(err(format!("expected `resource <name> capacity <n>`, found `{line}`")));
            };
            let capacity: u32 = cap
                .parse()
                .ok()
                .filter(|c| *c >= 1)
                .ok_or_else(|| err(format!("capacity must be a positive integer, found `{cap}`")))?;
            if !names.insert(name.to_string()) {
                return Err(err(format!("duplicate resource `{name}`")));
            }
            inv.resources.push(Resource {
                name: name.to_string(),
                capacity,
            });
        }
        if inv.resources.is_empty() {
            return Err(DeployError::Inventory {
                origin: origin.to_string(),
                line: 0,
                message: "inventory declares no resources".into(),
            });
        }
        Ok(inv)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeploymentPlan {
    /// (element, resource) in element declaration order.
    pub assignments: Vec<(String, String)>,
    pub strategy: String,
    pub violations: Vec<String>,
}

pub const STRATEGY_BFD: &str = "best-fit-decreasing";
pub const STRATEGY_SEARCH: &str = "backtracking";

impl DeploymentPlan {
    pub fn resource_of(&self, element: &str) -> Option<&str> {
        self.assignments.iter().find(|(e, _)| e == element).map(|(_, r)| r.as_str())
    }

    pub fn export(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for DeploymentPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (e, r) in &self.assignments {
            writeln!(f, "ASSIGN {e} {r}")?;
        }
        writeln!(f, "STRATEGY {}", self.strategy)
    }
}

/// True when `clone` is `original` followed by `Clone<digits>`.
pub fn is_clone_of(clone: &str, original: &str) -> bool {
    clone
        .strip_prefix(original)
        .and_then(|r| r.strip_prefix("Clone"))
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

/// Index pairs (original, clone) that must be separated.
pub fn clone_pairs(names: &[&str]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for (j, b) in names.iter().enumerate() {
            if i != j && is_clone_of(b, a) {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

struct Problem<'a> {
    weights: Vec<u64>,
    caps: Vec<u64>,
    /// For each element, the elements it may not share a resource with.
    apart: Vec<Vec<usize>>,
    order: Vec<usize>,
    inv: &'a ResourceInventory,
}

impl Problem<'_> {
    fn allowed(&self, assign: &[Option<usize>], e: usize, r: usize) -> bool {
        self.apart[e].iter().all(|&o| assign[o] != Some(r))
    }

    fn best_fit(&self) -> Option<Vec<usize>> {
        let mut load = vec![0u64; self.caps.len()];
        let mut assign = vec![None; self.weights.len()];
        for &e in &self.order {
            let r = (0..self.caps.len())
                .filter(|&r| load[r] + self.weights[e] <= self.caps[r] && self.allowed(&assign, e, r))
                .min_by_key(|&r| (self.caps[r] - load[r] - self.weights[e], r))?;
            load[r] += self.weights[e];
            assign[e] = Some(r);
        }
        Some(assign.into_iter().map(|a| a.expect("all placed")).collect())
    }

    fn search(&self, k: usize, load: &mut [u64], assign: &mut [Option<usize>]) -> bool {
        let Some(&e) = self.order.get(k) else { return true };
        for r in 0..self.caps.len() {
            if load[r] + self.weights[e] <= self.caps[r] && self.allowed(assign, e, r) {
                load[r] += self.weights[e];
                assign[e] = Some(r);
                if self.search(k + 1, load, assign) {
                    return true;
                }
                load[r] -= self.weights[e];
                assign[e] = None;
            }
        }
        false
    }

    fn solve(&self) -> Option<(Vec<usize>, &'static str)> {
        if let Some(a) = self.best_fit() {
            return Some((a, STRATEGY_BFD));
        }
        let mut load = vec![0u64; self.caps.len()];
        let mut assign = vec![None; self.weights.len()];
        self.search(0, &mut load, &mut assign)
            .then(|| (assign.into_iter().map(|a| a.expect("all placed")).collect(), STRATEGY_SEARCH))
    }

    fn plan(&self, names: &[&str], (assign, strategy): (Vec<usize>, &str)) -> DeploymentPlan {
        DeploymentPlan {
            assignments: names
                .iter()
                .zip(assign)
                .map(|(n, r)| (n.to_string(), self.inv.resources[r].name.clone()))
                .collect(),
            strategy: strategy.to_string(),
            violations: Vec::new(),
        }
    }
}

pub fn plan_deployment(arch: &Architecture, inv: &ResourceInventory) -> Result<DeploymentPlan, DeployError> {
    if arch.stage != Stage::Gesm {
        return Err(DeployError::WrongStage(arch.stage));
    }
    let names: Vec<&str> = arch.elements.iter().map(|e| e.name.as_str()).collect();
    let weights: Vec<u64> = arch.elements.iter().map(|e| u64::from(e.effective_weight())).collect();
    let pairs = clone_pairs(&names);
    let needed: u64 = weights.iter().sum();
    let insufficient = DeployError::InsufficientCapacity {
        needed,
        available: inv.total_capacity(),
    };
    let anti = |(o, c): (usize, usize)| DeployError::AntiAffinityUnsatisfiable {
        original: names[o].to_string(),
        clone: names[c].to_string(),
    };
    if inv.resources.is_empty() {
        return if names.is_empty() {
            Ok(DeploymentPlan {
                assignments: Vec::new(),
                strategy: STRATEGY_BFD.to_string(),
                violations: Vec::new(),
            })
        } else {
            Err(insufficient)
        };
    }
    if inv.resources.len() == 1 {
        if let Some(&p) = pairs.first() {
            return Err(anti(p));
        }
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(weights[i]));
    let mut problem = Problem {
        weights,
        caps: inv.resources.iter().map(|r| u64::from(r.capacity)).collect(),
        apart: vec![Vec::new(); names.len()],
        order,
        inv,
    };
    for &(o, c) in &pairs {
        problem.apart[o].push(c);
        problem.apart[c].push(o);
    }
    if let Some(sol) = problem.solve() {
        return Ok(problem.plan(&names, sol));
    }
    if pairs.is_empty() {
        return Err(insufficient);
    }
    problem.apart.iter_mut().for_each(Vec::clear);
    match problem.solve() {
        Some(_) => Err(anti(pairs[0])),
        None => Err(insufficient),
    }
}
