use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultMode {
    Down,
    Up,
}

impl FaultMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultMode::Down => "down",
            FaultMode::Up => "up",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub step: u64,
    pub element: String,
    pub mode: FaultMode,
}

/// A message offered by the environment on `element`'s `port`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub step: u64,
    pub element: String,
    /// A port name (its single incoming connection is used) or `Port::Conn`.
    pub port: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    /// Declaration order every step.
    #[default]
    RoundRobin,
    /// A fresh permutation per step drawn from the scenario seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimScenario {
    pub max_steps: u64,
    pub seed: u64,
    pub order: Order,
    pub faults: Vec<FaultEvent>,
    pub workload: Vec<Request>,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            max_steps: 100,
            seed: 0,
            order: Order::RoundRobin,
            faults: Vec::new(),
            workload: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{origin}:{line}: {message}")]
pub struct ScenarioError {
    pub origin: String,
    pub line: usize,
    pub message: String,
}

impl SimScenario {
    pub fn new(max_steps: u64) -> Self {
        SimScenario {
            max_steps,
            ..Default::default()
        }
    }

    pub fn fault(mut self, step: u64, element: &str, mode: FaultMode) -> Self {
        self.faults.push(FaultEvent {
            step,
            element: element.to_string(),
            mode,
        });
        self
    }

    pub fn request(mut self, step: u64, element: &str, port: &str, message: &str) -> Self {
        self.workload.push(Request {
            step,
            element: element.to_string(),
            port: port.to_string(),
            message: message.to_string(),
        });
        self
    }

    /// Line format: `MAXSTEPS n`, `SEED n`, `ORDER roundrobin|random`,
    /// `FAULT step element down|up`, `REQ step element port message`.
    /// Blank lines and `--`/`#` comments are ignored.
    pub fn parse(text: &str, origin: &str) -> Result<SimScenario, ScenarioError> {
        let mut sc = SimScenario::default();
        let mut saw_max = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split("--").next().unwrap_or("");
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ScenarioError {
                origin: origin.to_string(),
                line: i + 1,
                message,
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<u64>().map_err(|_| err(format!("expected a non-negative integer, found `{s}`")));
            match f[0] {
                "MAXSTEPS" if f.len() == 2 => {
                    sc.max_steps = num(f[1])?;
                    if sc.max_steps == 0 {
                        return Err(err("MAXSTEPS must be positive".into()));
                    }
                    saw_max = true;
                }
                "SEED" if f.len() == 2 => sc.seed = num(f[1])?,
                "ORDER" if f.len() == 2 => {
                    sc.order = match f[1] {
                        "roundrobin" => Order::RoundRobin,
                        "random" => Order::Random,
                        o => return Err(err(format!("unknown order `{o}`; expected roundrobin or random"))),
                    }
                }
                "FAULT" if f.len() == 4 => {
                    let mode = match f[3] {
                        "down" => FaultMode::Down,
                        "up" => FaultMode::Up,
                        m => return Err(err(format!("unknown fault mode `{m}`; expected down or up"))),
                    };
                    sc.faults.push(FaultEvent {
                        step: num(f[1])?,
                        element: f[2].to_string(),
                        mode,
                    });
                }
                "REQ" if f.len() >= 5 => sc.workload.push(Request {
                    step: num(f[1])?,
                    element: f[2].to_string(),
                    port: f[3].to_string(),
                    message: f[4..].join(" "),
                }),
                d => return Err(err(format!("malformed `{d}` directive"))),
            }
        }
        if !saw_max {
            return Err(ScenarioError {
                origin: origin.to_string(),
                line: 0,
                message: "missing MAXSTEPS directive".into(),
            });
        }
        let late = sc
            .faults
            .iter()
            .map(|f| f.step)
            .chain(sc.workload.iter().map(|r| r.step))
            .find(|s| *s > sc.max_steps);
        if let Some(s) = late {
            return Err(ScenarioError {
                origin: origin.to_string(),
                line: 0,
                message: format!("step {s} lies beyond MAXSTEPS {}", sc.max_steps),
            });
        }
        Ok(sc)
    }
}

impl fmt::Display for SimScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "MAXSTEPS {}", self.max_steps)?;
        writeln!(f, "SEED {}", self.seed)?;
        if self.order == Order::Random {
            writeln!(f, "ORDER random")?;
        }
        for x in &self.faults {
            writeln!(f, "FAULT {} {} {}", x.step, x.element, x.mode.as_str())?;
        }
        for r in &self.workload {
            writeln!(f, "REQ {} {} {} {}", r.step, r.element, r.port, r.message)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_directives() {
        let sc = SimScenario::parse(
            "MAXSTEPS 40\nSEED 7\nORDER random\n-- comment\nFAULT 10 X down\nREQ 12 P ClientP0 hello world\n",
            "t",
        )
        .unwrap();
        assert_eq!(sc.max_steps, 40);
        assert_eq!(sc.seed, 7);
        assert_eq!(sc.order, Order::Random);
        assert_eq!(sc.faults[0].mode, FaultMode::Down);
        assert_eq!(sc.workload[0].message, "hello world");
        assert_eq!(SimScenario::parse(&sc.to_string(), "t").unwrap(), sc);
    }

    #[test]
    fn rejects_late_steps_and_bad_lines() {
        assert!(SimScenario::parse("MAXSTEPS 5\nFAULT 6 X down\n", "t").is_err());
        assert!(SimScenario::parse("MAXSTEPS 5\nFAULT 1 X sideways\n", "t").is_err());
        assert!(SimScenario::parse("SEED 1\n", "t").is_err());
        assert!(SimScenario::parse("MAXSTEPS 0\n", "t").is_err());
    }
}
