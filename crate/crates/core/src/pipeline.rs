//! End-to-end driver: parse, validate, plan, refine, check preservation,
//! adapt to a platform, simulate, generate code and plan deployment, writing
//! one artifact per completed stage.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::emit::{generate_code, plan_deployment, CodegenMapping, ResourceInventory};
use crate::model::Architecture;
use crate::parser::{parse_architecture_unchecked, render, SourceKind, SourceUnit};
use crate::patterns::{builtin_library, PatternLibrary};
use crate::planner::{apply_plan, plan, plan_platform};
use crate::refine::verify_preservation;
use crate::sim::{check_trace, simulate, EventKind, EventPattern, SimScenario, Trace, TraceProperty, Verdict, ENV};

pub const ART_GEIM: &str = "01.geim";
pub const ART_PLAN: &str = "02.plan";
pub const ART_GEIM_PRIME: &str = "03.geim-prime";
pub const ART_PRESERVATION: &str = "04.preservation.txt";
pub const ART_GESM: &str = "05.gesm";
pub const ART_TRACE: &str = "06.trace.txt";
pub const ART_GESA: &str = "07.gesa";
pub const ART_GEDM: &str = "08.gedm.txt";

pub const ARTIFACTS: [&str; 8] = [
    ART_GEIM,
    ART_PLAN,
    ART_GEIM_PRIME,
    ART_PRESERVATION,
    ART_GESM,
    ART_TRACE,
    ART_GESA,
    ART_GEDM,
];

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PipelineStage {
    Validate,
    Plan,
    Refine,
    Preserve,
    Platform,
    Simulate,
    Codegen,
    Deploy,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 8] = [
        PipelineStage::Validate,
        PipelineStage::Plan,
        PipelineStage::Refine,
        PipelineStage::Preserve,
        PipelineStage::Platform,
        PipelineStage::Simulate,
        PipelineStage::Codegen,
        PipelineStage::Deploy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineStage::Validate => "validate",
            PipelineStage::Plan => "plan",
            PipelineStage::Refine => "refine",
            PipelineStage::Preserve => "preserve",
            PipelineStage::Platform => "platform",
            PipelineStage::Simulate => "simulate",
            PipelineStage::Codegen => "codegen",
            PipelineStage::Deploy => "deploy",
        }
    }

    /// Accepts the stage names plus `parse`, which stops where `validate` does.
    pub fn parse(s: &str) -> Option<PipelineStage> {
        if s == "parse" {
            return Some(PipelineStage::Validate);
        }
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const PARSE: i32 = 1;
    pub const VALIDATE: i32 = 2;
    pub const PLAN: i32 = 3;
    pub const REFINE: i32 = 4;
    pub const PRESERVE: i32 = 5;
    pub const SIMULATE: i32 = 6;
    pub const CODEGEN: i32 = 7;
    pub const DEPLOY: i32 = 8;
    /// Artifact directory could not be written.
    pub const IO: i32 = 10;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    /// `None` uses the built-in pattern library.
    pub patterns_dir: Option<PathBuf>,
    pub platform: String,
    pub gemm: PathBuf,
    pub germ: PathBuf,
    pub scenario: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub stop_after: Option<PipelineStage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineOutcome {
    pub exit_code: i32,
    /// `error[<code>] <stage>: <message>` lines.
    pub diagnostics: Vec<String>,
    /// Artifact names written, in order.
    pub artifacts: Vec<String>,
}

impl PipelineOutcome {
    pub fn success(&self) -> bool {
        self.exit_code == exit::OK
    }
}

struct Failure {
    code: i32,
    stage: &'static str,
    kind: String,
    message: String,
}

fn fail(code: i32, stage: &'static str, kind: impl Into<String>, message: impl fmt::Display) -> Failure {
    Failure {
        code,
        stage,
        kind: kind.into(),
        message: message.to_string(),
    }
}

fn io_fail(path: &Path, e: io::Error) -> Failure {
    fail(exit::IO, "io", "io", format!("{}: {e}", path.display()))
}

/// Reads and parses an architecture file without validating it.
pub fn read_architecture(path: &Path) -> Result<Architecture, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let origin = path.display().to_string();
    parse_architecture_unchecked(&SourceUnit::new(SourceKind::Architecture, text, &origin)).map_err(|e| e.render(&origin))
}

/// Properties checked on the simulated GESM: every send pairs with one
/// receive, nothing moves while down, and each request is answered to the
/// environment within the step bound.
pub fn trace_properties(trace: &Trace, scenario: &SimScenario) -> Vec<(String, Verdict)> {
    let mut out = Vec::new();
    let (s, r, z) = (
        trace.count(EventKind::Send),
        trace.count(EventKind::Receive),
        trace.count(EventKind::Rendezvous),
    );
    let conserved = s == r && r == z;
    out.push((
        "rendezvous-conservation".to_string(),
        Verdict {
            passed: conserved,
            witness: None,
            explanation: format!("{s} send, {r} receive, {z} rendezvous"),
        },
    ));
    out.push(("fault-soundness".to_string(), fault_soundness(trace)));
    for req in &scenario.workload {
        let prop = TraceProperty::Responds {
            request: EventPattern::new(Some(ENV), Some(EventKind::Send), Some(&req.message)),
            response: EventPattern::new(Some(ENV), Some(EventKind::Receive), Some(&req.message)),
            within: scenario.max_steps,
        };
        out.push((format!("responds({})", req.message), check_trace(trace, &prop)));
    }
    out
}

fn fault_soundness(trace: &Trace) -> Verdict {
    let mut down = std::collections::BTreeSet::new();
    for (i, e) in trace.events.iter().enumerate() {
        match e.kind {
            EventKind::Fault if e.detail == "down" => {
                down.insert(e.element.as_str());
            }
            EventKind::Fault => {
                down.remove(e.element.as_str());
            }
            EventKind::Send | EventKind::Receive | EventKind::Rendezvous | EventKind::External | EventKind::RouteUpdate
                if down.contains(e.element.as_str()) =>
            {
                return Verdict {
                    passed: false,
                    witness: Some(i),
                    explanation: format!("{} acts while down", e.element),
                };
            }
            _ => {}
        }
    }
    Verdict {
        passed: true,
        witness: None,
        explanation: "no activity while down".into(),
    }
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    written: Vec<String>,
}

impl Run<'_> {
    fn write(&mut self, name: &str, content: &str) -> Result<(), Failure> {
        let p = self.cfg.out_dir.join(name);
        fs::write(&p, content).map_err(|e| io_fail(&p, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn stop(&self, stage: PipelineStage) -> bool {
        self.cfg.stop_after == Some(stage)
    }

    fn clear(&self) -> Result<(), Failure> {
        let dir = &self.cfg.out_dir;
        fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))?;
        for name in ARTIFACTS {
            let p = dir.join(name);
            let r = if p.is_dir() {
                fs::remove_dir_all(&p)
            } else if p.exists() {
                fs::remove_file(&p)
            } else {
                Ok(())
            };
            r.map_err(|e| io_fail(&p, e))?;
        }
        Ok(())
    }

    fn go(&mut self) -> Result<(), Failure> {
        let cfg = self.cfg;
        self.clear()?;

        let text = fs::read_to_string(&cfg.input).map_err(|e| fail(exit::PARSE, "parse", "io", format!("{}: {e}", cfg.input.display())))?;
        let origin = cfg.input.display().to_string();
        let geim = parse_architecture_unchecked(&SourceUnit::new(SourceKind::Architecture, text, &origin))
            .map_err(|e| fail(exit::PARSE, "parse", "syntax", e.render(&origin)))?;
        let diags = geim.validate();
        if !diags.is_empty() {
            let msg = diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n");
            return Err(fail(exit::VALIDATE, "validate", "invalid-model", msg));
        }
        self.write(ART_GEIM, &(render(&geim) + "\n"))?;
        if self.stop(PipelineStage::Validate) {
            return Ok(());
        }

        let lib = match &cfg.patterns_dir {
            Some(d) => PatternLibrary::load_dir(d).map_err(|e| fail(exit::PLAN, "plan", "pattern-library", e))?,
            None => builtin_library(),
        };
        let qos = plan(&geim, &lib).map_err(|e| fail(exit::PLAN, "plan", e.kind(), &e))?;
        self.write(ART_PLAN, &qos.to_text())?;
        if self.stop(PipelineStage::Plan) {
            return Ok(());
        }

        let prime = apply_plan(&geim, &qos).map_err(|e| fail(exit::REFINE, "refine", "apply", e))?;
        self.write(ART_GEIM_PRIME, &(render(&prime) + "\n"))?;
        if self.stop(PipelineStage::Refine) {
            return Ok(());
        }

        let report = verify_preservation(&geim, &prime);
        self.write(ART_PRESERVATION, &report.to_text())?;
        if !report.passed {
            let failed: Vec<String> = report.failures().map(|c| c.to_string()).collect();
            return Err(fail(exit::PRESERVE, "preserve", "not-preserved", failed.join("; ")));
        }
        if self.stop(PipelineStage::Preserve) {
            return Ok(());
        }

        let platform = plan_platform(&prime, &lib, &cfg.platform).map_err(|e| fail(exit::PLAN, "platform", e.kind(), &e))?;
        let gesm = apply_plan(&prime, &platform).map_err(|e| fail(exit::REFINE, "platform", "apply", e))?;
        self.write(ART_GESM, &(render(&gesm) + "\n"))?;
        if self.stop(PipelineStage::Platform) {
            return Ok(());
        }

        if let Some(sp) = &cfg.scenario {
            let text = fs::read_to_string(sp).map_err(|e| fail(exit::SIMULATE, "simulate", "io", format!("{}: {e}", sp.display())))?;
            let scenario =
                SimScenario::parse(&text, &sp.display().to_string()).map_err(|e| fail(exit::SIMULATE, "simulate", "scenario", e))?;
            let trace = simulate(&gesm, &scenario).map_err(|e| fail(exit::SIMULATE, "simulate", "sim", e))?;
            let verdicts = trace_properties(&trace, &scenario);
            let mut out = trace.to_tsv();
            for (name, v) in &verdicts {
                out.push_str(&format!("# {} {name}: {}\n", if v.passed { "PASS" } else { "FAIL" }, v.explanation));
            }
            self.write(ART_TRACE, &out)?;
            let failed: Vec<String> = verdicts
                .iter()
                .filter(|(_, v)| !v.passed)
                .map(|(n, v)| format!("{n}: {}", v.explanation))
                .collect();
            if !failed.is_empty() {
                return Err(fail(exit::SIMULATE, "simulate", "property-violated", failed.join("; ")));
            }
        }
        if self.stop(PipelineStage::Simulate) {
            return Ok(());
        }

        let mapping = CodegenMapping::load_dir(&cfg.gemm).map_err(|e| fail(exit::CODEGEN, "codegen", "mapping", e))?;
        let files = generate_code(&gesm, &mapping).map_err(|e| fail(exit::CODEGEN, "codegen", "generate", e))?;
        let dir = cfg.out_dir.join(ART_GESA);
        files.write_to(&dir).map_err(|e| io_fail(&dir, e))?;
        self.written.push(ART_GESA.to_string());
        if self.stop(PipelineStage::Codegen) {
            return Ok(());
        }

        let text = fs::read_to_string(&cfg.germ).map_err(|e| fail(exit::DEPLOY, "deploy", "io", format!("{}: {e}", cfg.germ.display())))?;
        let inv = ResourceInventory::parse(&text, &cfg.germ.display().to_string()).map_err(|e| fail(exit::DEPLOY, "deploy", e.code(), &e))?;
        let plan = plan_deployment(&gesm, &inv).map_err(|e| fail(exit::DEPLOY, "deploy", e.code(), &e))?;
        self.write(ART_GEDM, &plan.export())?;
        Ok(())
    }
}

pub fn run(cfg: &PipelineConfig) -> PipelineOutcome {
    let mut r = Run {
        cfg,
        written: Vec::new(),
    };
    match r.go() {
        Ok(()) => PipelineOutcome {
            exit_code: exit::OK,
            diagnostics: Vec::new(),
            artifacts: r.written,
        },
        Err(f) => PipelineOutcome {
            exit_code: f.code,
            diagnostics: vec![format!("error[{}] {}: {}", f.kind, f.stage, f.message)],
            artifacts: r.written,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names() {
        assert_eq!(PipelineStage::parse("parse"), Some(PipelineStage::Validate));
        for s in PipelineStage::ALL {
            assert_eq!(PipelineStage::parse(s.as_str()), Some(s));
        }
        assert_eq!(PipelineStage::parse("emit"), None);
    }

    #[test]
    fn missing_input_is_a_parse_failure() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            input: dir.path().join("nope.geim"),
            patterns_dir: None,
            platform: "PLATFORM_A".into(),
            gemm: dir.path().into(),
            germ: dir.path().join("g.germ"),
            scenario: None,
            out_dir: dir.path().join("out"),
            stop_after: None,
        };
        let o = run(&cfg);
        assert_eq!(o.exit_code, exit::PARSE);
        assert!(o.artifacts.is_empty());
    }
}
