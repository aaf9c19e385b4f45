//! Acceptance criteria 1-9. Runs without the test harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};

use archweave::diff::diff;
use archweave::emit::{generate_code, CodegenMapping};
use archweave::model::{ElementPath, RoleTag};
use archweave::parser::{
    parse_architecture_str, parse_pattern_str, parse_refinement_def_str, render, render_pattern, render_refinement_def,
};
use archweave::patterns::{BlockScope, ScopedAction};
use archweave::planner::{extract_mappings, ApplyError};
use archweave::sim::{check_trace, simulate, EventKind, EventPattern, SimScenario, TraceProperty, ENV};
use archweave::{apply_action, apply_plan, builtin_library, plan, plan_platform, verify_preservation, AtomicAction};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// 1: annotation extraction, planning and application reproduce the golden
/// GEIM′ exactly.
fn golden_transformation() -> Outcome {
    let geim = model("mdeGrid.geim");
    let lib = builtin_library();
    let report = extract_mappings(&geim, &lib);
    ensure(report.unknown.is_empty() && report.mappings.len() == 1, || format!("mappings: {report:?}"))?;
    let m = &report.mappings[0];
    ensure(
        m.constraint_ref == "faulttolerance" && m.priority == 1 && m.range == 1 && m.pattern == "FT",
        || format!("mapping {m:?}"),
    )?;
    let prime = apply_plan(&geim, &plan(&geim, &lib).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(prime.structurally_eq(&model("mdeGrid.geim-prime")), || "differs from golden GEIM'".into())?;

    let d = diff(&geim, &prime);
    let mut added = d.added_elements.clone();
    added.sort();
    ensure(
        added
            == vec![
                ("DataCacheHandlerClone0".to_string(), "component".to_string()),
                ("FTConnector".to_string(), "connector".to_string()),
            ],
        || format!("added elements {added:?}"),
    )?;
    ensure(
        d.removed_elements.is_empty()
            && d.changed_elements.is_empty()
            && d.renamed_elements.is_empty()
            && d.removed_channels.is_empty()
            && d.added_attachments.is_empty()
            && d.removed_attachments.is_empty()
            && d.name.is_none()
            && d.style.is_none()
            && !d.types_changed,
        || format!("unexpected diff entries:\n{d}"),
    )?;
    // The pattern's channels: every added channel has an end on FTConnector.
    ensure(
        !d.added_channels.is_empty()
            && d.added_channels.iter().all(|c| c.from.head() == "FTConnector" || c.to.head() == "FTConnector"),
        || format!("added channels {:?}", d.added_channels),
    )?;
    Ok(format!("+2 elements, +{} channels, stage only otherwise", d.added_channels.len()))
}

/// 2: preservation passes, and deleting any original element breaks it.
fn preservation() -> Outcome {
    let geim = model("mdeGrid.geim");
    let golden = model("mdeGrid.geim-prime");
    let r = verify_preservation(&geim, &golden);
    let total = r.checked.len();
    ensure(r.passed && r.checked.iter().all(|(_, ok)| *ok), || r.to_text())?;
    for e in &geim.elements {
        let mutated = apply_action(&golden, &AtomicAction::Remove { target: ElementPath::single(&e.name) })
            .map_err(|err| format!("removing {}: {err}", e.name))?;
        ensure(!verify_preservation(&geim, &mutated).passed, || format!("deleting {} went unnoticed", e.name))?;
    }
    Ok(format!("{total}/{total} properties; {} mutants all detected", geim.elements.len()))
}

fn responds(msg: &str, within: u64) -> TraceProperty {
    TraceProperty::Responds {
        request: EventPattern::new(Some(ENV), Some(EventKind::Send), Some(msg)),
        response: EventPattern::new(Some(ENV), Some(EventKind::Receive), Some(msg)),
        within,
    }
}

/// 3: failover on GEIM′, none on GEIM, deterministic traces.
fn failover() -> Outcome {
    let sc = SimScenario::parse(&read("scenarios/failover.scn"), "failover.scn").map_err(|e| e.to_string())?;
    ensure(
        sc.faults.len() == 1 && sc.faults[0].step == 10 && sc.faults[0].element == "DataCacheHandler",
        || "scenario fault".into(),
    )?;
    let post: Vec<&str> = sc.workload.iter().filter(|r| r.step > 10).map(|r| r.message.as_str()).collect();
    ensure(
        sc.workload.iter().filter(|r| r.step > 10).map(|r| r.step).collect::<Vec<_>>() == [12, 14],
        || "scenario requests".into(),
    )?;

    let prime = model("mdeGrid.geim-prime");
    let t = simulate(&prime, &sc).map_err(|e| e.to_string())?;
    let takeover = TraceProperty::EventuallyAfter {
        trigger: EventPattern::new(Some("DataCacheHandler"), Some(EventKind::Fault), Some("down")),
        event: EventPattern::new(None, Some(EventKind::Rendezvous), Some("DataCacheHandlerClone0")),
    };
    let v = check_trace(&t, &takeover);
    ensure(v.passed, || format!("EventuallyAfter: {}", v.explanation))?;
    for m in &post {
        let v = check_trace(&t, &responds(m, 20));
        ensure(v.passed, || format!("GEIM' Responds({m}): {}", v.explanation))?;
    }

    let t0 = simulate(&model("mdeGrid.geim"), &sc).map_err(|e| e.to_string())?;
    let failing: Vec<&str> = post
        .iter()
        .copied()
        .filter(|m| !check_trace(&t0, &responds(m, 20)).passed)
        .collect();
    ensure(!failing.is_empty(), || "unrefined GEIM answers every post-fault request".into())?;

    let again = simulate(&prime, &sc).map_err(|e| e.to_string())?;
    ensure(t.to_tsv() == again.to_tsv(), || "traces differ between runs".into())?;
    Ok(format!("GEIM' answers {post:?} within 20; GEIM fails {failing:?}; traces identical"))
}

/// 4: parse then render is the identity on the corpus and on random models.
fn roundtrip() -> Outcome {
    let mut units = 0;
    for f in files_with(&corpus().join("models"), &["geim", "geim-prime", "gesm"])
        .into_iter()
        .chain(files_with(&corpus().join("negative"), &["geim"]))
    {
        let a = load(&f);
        let back = parse_architecture_str(&render(&a)).map_err(|e| format!("{}: {e}", f.display()))?;
        ensure(back.structurally_eq(&a), || format!("{} changed", f.display()))?;
        units += 1;
    }
    for f in files_with(&library_dir(), &["gecm", "getm"]) {
        let p = parse_pattern_str(&fs::read_to_string(&f).unwrap()).map_err(|e| e.to_string())?;
        let back = parse_pattern_str(&render_pattern(&p)).map_err(|e| format!("{}: {e}", f.display()))?;
        ensure(back == p, || format!("{} changed", f.display()))?;
        units += 1;
    }
    for f in files_with(&corpus().join("refinements"), &["refd"]) {
        let r = parse_refinement_def_str(&fs::read_to_string(&f).unwrap()).map_err(|e| e.to_string())?;
        let back = parse_refinement_def_str(&render_refinement_def(&r)).map_err(|e| format!("{}: {e}", f.display()))?;
        ensure(back == r, || format!("{} changed", f.display()))?;
        units += 1;
    }
    ensure(units >= 10, || format!("only {units} corpus units"))?;
    for seed in 0..50 {
        let a = random_model(seed);
        ensure(a.validate().is_empty(), || format!("generator seed {seed} is not well formed"))?;
        let back = parse_architecture_str(&render(&a)).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(back.structurally_eq(&a), || format!("seed {seed} changed"))?;
    }
    Ok(format!("{units} corpus units and 50 random models"))
}

/// 5: plan order and all-or-nothing application.
fn ordering_and_atomicity() -> Outcome {
    let lib = annotation_library();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut injected = 0;
    for seed in 0..100 {
        let a = annotated(seed);
        let input = a.clone();
        let pl = plan(&a, &lib).map_err(|e| format!("seed {seed}: {e}"))?;
        let got: Vec<(u32, usize, String, String)> = pl
            .steps
            .iter()
            .map(|s| (s.priority, s.decl_index, s.pattern.clone(), s.target.clone()))
            .collect();
        ensure(got == expected_order(&a), || format!("seed {seed}: order {got:?}"))?;
        let clean = apply_plan(&a, &pl).map_err(|e| format!("seed {seed}: {e}"))?;
        if pl.steps.is_empty() {
            continue;
        }
        let mut bad = pl.clone();
        let step = rng.gen_range(0..bad.steps.len());
        let at = rng.gen_range(0..=bad.steps[step].actions.len());
        bad.steps[step].actions.insert(
            at,
            ScopedAction {
                scope: BlockScope::Element,
                action: AtomicAction::Remove {
                    target: ElementPath::single("Missing"),
                },
            },
        );
        match apply_plan(&a, &bad) {
            Err(ApplyError::Step { step: s, action, .. }) if (s, action) == (step, at) => {}
            other => return Err(format!("seed {seed}: injected failure gave {other:?}")),
        }
        ensure(a.structurally_eq(&input), || format!("seed {seed}: input changed"))?;
        // Replay: the untouched input still yields the clean result.
        let replay = apply_plan(&a, &pl).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(replay.structurally_eq(&clean), || format!("seed {seed}: replay differs"))?;
        injected += 1;
    }
    Ok(format!("100 annotation sets ordered; {injected} injected failures rolled back"))
}

/// 6: PLATFORM_A and PLATFORM_B differ only inside the generic interface.
fn platform_confinement() -> Outcome {
    let prime = model("mdeGrid.geim-prime");
    let lib = builtin_library();
    let a = apply_plan(&prime, &plan_platform(&prime, &lib, "PLATFORM_A").map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let b = apply_plan(&prime, &plan_platform(&prime, &lib, "PLATFORM_B").map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let gi: BTreeSet<String> = prime
        .elements
        .iter()
        .filter(|e| e.effective_role() == RoleTag::GenericInterface)
        .map(|e| e.name.clone())
        .collect();
    ensure(!gi.is_empty(), || "no generic interface in GEIM'".into())?;
    let d = diff(&a, &b);
    ensure(!d.is_empty(), || "platforms produce identical models".into())?;
    ensure(d.name.is_none() && d.style.is_none() && d.stage.is_none() && !d.types_changed, || format!("{d}"))?;
    let outside: Vec<String> = d.touched_elements().difference(&gi).cloned().collect();
    ensure(outside.is_empty(), || format!("differences outside {gi:?}: {outside:?}\n{d}"))?;
    Ok(format!("diff touches only {gi:?}"))
}

/// 7: code generation is reproducible and fully substituted.
fn emission() -> Outcome {
    let g = model("mdeGrid_platform_a.gesm");
    let m = CodegenMapping::load_dir(&corpus().join("gemm")).map_err(|e| e.to_string())?;
    let x = generate_code(&g, &m).map_err(|e| e.to_string())?;
    let y = generate_code(&g, &m).map_err(|e| e.to_string())?;
    let mx = x.manifest().ok_or("no manifest")?;
    ensure(mx == y.manifest().unwrap_or_default() && x == y, || "runs differ".into())?;
    ensure(x.verify(), || "manifest does not match contents".into())?;
    for (p, bytes) in &x.files {
        ensure(!String::from_utf8_lossy(bytes).contains("{{"), || format!("{p} contains {{{{"))?;
    }
    Ok(format!("{} files, manifest digest {}", x.files.len(), &archweave::emit::sha256_hex(mx.as_bytes())[..16]))
}

/// 8: deployment planner agrees with brute force on every small instance.
fn deployment_oracle() -> Outcome {
    let (cases, tally) = deploy_sweep()?;
    Ok(format!("{cases} instances, outcomes {tally:?}"))
}

fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// 9: two end-to-end runs give byte-identical artifact directories.
fn pipeline_determinism() -> Outcome {
    let c = corpus();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let o = Command::new(env!("CARGO_BIN_EXE_archweave"))
            .arg("run")
            .arg("--input")
            .arg(c.join("models/mdeGrid.geim"))
            .args(["--platform", "PLATFORM_A"])
            .arg("--gemm")
            .arg(c.join("gemm"))
            .arg("--germ")
            .arg(c.join("resources/grid.germ"))
            .arg("--scenario")
            .arg(c.join("scenarios/failover.scn"))
            .arg("--out")
            .arg(d.path())
            .env_remove("ARCHWEAVE_PATTERNS")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
    }
    let (a, b) = (snapshot(dirs[0].path()), snapshot(dirs[1].path()));
    ensure(a == b, || "artifact directories differ".into())?;
    Ok(format!("{} files identical", a.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("golden mdeGrid transformation", golden_transformation),
        ("preservation and mutation sweep", preservation),
        ("failover behaviour", failover),
        ("parser round trip", roundtrip),
        ("planner ordering and atomicity", ordering_and_atomicity),
        ("platform confinement", platform_confinement),
        ("emission determinism", emission),
        ("deployment oracle equivalence", deployment_oracle),
        ("pipeline determinism", pipeline_determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
