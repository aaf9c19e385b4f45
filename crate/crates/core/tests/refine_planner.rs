mod common;

use archweave::diff::diff;
use archweave::model::{ConstraintAnnotation, ElementKind, ElementPath, Stage};
use archweave::parser::parse_refinement_def_str;
use archweave::patterns::{BlockScope, ScopedAction};
use archweave::planner::{extract_mappings, ApplyError, PlanError, PlanKind};
use archweave::refine::{apply_actions, RefineError};
use archweave::{
    apply_action, apply_plan, builtin_library, execute_refinement, plan, plan_platform, verify_preservation, ArchElement,
    AtomicAction,
};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p(s: &str) -> ElementPath {
    ElementPath::parse(s).unwrap()
}

fn refd(name: &str) -> archweave::refine::RefinementDefinition {
    parse_refinement_def_str(&read(&format!("refinements/{name}"))).unwrap()
}

#[test]
fn add_replica_refinement() {
    let a = model("mdeGrid.geim");
    let def = refd("add_cache_replica.refd");
    let out = execute_refinement(&a, &def, &[p("DataCacheHandler"), p("Portal")]).unwrap();
    assert!(out.has_element("DataCacheHandlerClone0"));
    assert!(out.attachments.iter().any(|at| at.links("Portal", "DataCacheHandlerClone0")));
    assert!(verify_preservation(&a, &out).passed);
    // Second application: pre condition rejects it.
    let err = execute_refinement(&out, &def, &[p("DataCacheHandler"), p("Portal")]).unwrap_err();
    assert_eq!(err.kind(), "precondition-failed");
}

#[test]
fn assumption_is_checked() {
    let mut a = model("mdeGrid.geim");
    a.elements.push(ArchElement::new("Hub", ElementKind::Connector));
    let def = refd("add_cache_replica.refd");
    match execute_refinement(&a, &def, &[p("Hub"), p("Portal")]) {
        Err(RefineError::AssumptionFailed(c)) => assert_eq!(c.to_string(), "is_component(Hub)"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn rename_refinement_and_arity() {
    let a = model("mdeGrid.geim");
    let def = refd("rename_interface.refd");
    let out = execute_refinement(&a, &def, &[p("genericGridInterface")]).unwrap();
    assert!(out.has_element("gridGateway") && !out.has_element("genericGridInterface"));
    // Channels and attachments follow the rename.
    assert_eq!(out.channels.len(), a.channels.len());
    assert!(out.channels.iter().any(|c| c.to.head() == "gridGateway" || c.from.head() == "gridGateway"));
    let d = diff(&a, &out);
    assert_eq!(d.renamed_elements, vec![("genericGridInterface".to_string(), "gridGateway".to_string())]);
    assert!(!verify_preservation(&a, &out).passed);

    let err = execute_refinement(&a, &def, &[]).unwrap_err();
    assert!(err.to_string().contains("arity"), "{err}");
}

#[test]
fn atomic_action_preconditions() {
    let a = model("mdeGrid.geim");
    let cases = [
        AtomicAction::Include(Box::new(ArchElement::new("Portal", ElementKind::Component))),
        AtomicAction::Replicate {
            target: p("Nope"),
            clone_name: "NopeClone0".into(),
        },
        AtomicAction::Replicate {
            target: p("Portal"),
            clone_name: "DataCacheHandler".into(),
        },
        AtomicAction::Attach {
            a: "Portal".into(),
            b: "Nope".into(),
        },
        AtomicAction::Rename {
            target: p("Portal"),
            new_name: "DataCacheHandler".into(),
        },
        AtomicAction::Remove { target: p("Nope") },
        AtomicAction::Unify {
            out_path: p("Portal::ClientP0::Nope"),
            in_path: p("genericGridInterface::GridP0::GridInC0"),
        },
    ];
    for c in cases {
        let err = apply_action(&a, &c).unwrap_err();
        assert_eq!(err.kind(), "precondition-failed", "{c}: {err}");
    }
}

#[test]
fn remove_drops_dangling_links() {
    let a = model("mdeGrid.geim");
    let out = apply_action(&a, &AtomicAction::Remove { target: p("DataCacheHandler") }).unwrap();
    assert!(out.validate().is_empty());
    assert!(out.channels.iter().all(|c| c.from.head() != "DataCacheHandler" && c.to.head() != "DataCacheHandler"));
    assert!(out.attachments.iter().all(|at| at.a != "DataCacheHandler" && at.b != "DataCacheHandler"));
}

#[test]
fn failed_sequence_reports_index() {
    let a = model("mdeGrid.geim");
    let seq = [
        AtomicAction::Replicate {
            target: p("Portal"),
            clone_name: "PortalClone0".into(),
        },
        AtomicAction::Remove { target: p("Nope") },
    ];
    let (i, e) = apply_actions(&a, &seq).unwrap_err();
    assert_eq!(i, 1);
    assert_eq!(e.kind(), "precondition-failed");
}

#[test]
fn ft_plan_reproduces_golden() {
    let a = model("mdeGrid.geim");
    let lib = builtin_library();
    let report = extract_mappings(&a, &lib);
    assert_eq!(report.mappings.len(), 1);
    assert_eq!(report.mappings[0].pattern, "FT");
    let pl = plan(&a, &lib).unwrap();
    assert_eq!(pl.steps.len(), 1);
    assert_eq!(pl.steps[0].atomic_actions().count(), 4);
    let out = apply_plan(&a, &pl).unwrap();
    assert!(out.structurally_eq(&model("mdeGrid.geim-prime")));
    assert_eq!(out.stage, Stage::GeimPrime);
    assert!(verify_preservation(&a, &out).passed);
    // Plans serialize.
    assert!(pl.to_text().starts_with("STEP 0 pattern=FT target=DataCacheHandler priority=1\n"));
    assert!(pl.to_json().contains("\"pattern\": \"FT\""));
}

#[test]
fn lb_plan_on_banking() {
    let a = model("bankingGrid.geim");
    let out = apply_plan(&a, &plan(&a, &builtin_library()).unwrap()).unwrap();
    assert!(out.has_element("LedgerClone0") && out.has_element("LBConnector"));
    assert!(verify_preservation(&a, &out).passed);
}

#[test]
fn conflicting_patterns_are_rejected() {
    let mut a = model("mdeGrid.geim");
    a.element_mut("DataCacheHandler").unwrap().annotations.push(ConstraintAnnotation {
        constraint_ref: "loadbalancing".into(),
        priority: 2,
        range: 1,
    });
    match plan(&a, &builtin_library()) {
        Err(e @ PlanError::Conflict(_)) => assert_eq!(e.kind(), "plan-conflict"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_reference_is_rejected() {
    let a = load(&corpus().join("negative/unknown_ref.geim"));
    let err = plan(&a, &builtin_library()).unwrap_err();
    assert_eq!(err.to_string(), "unknown-constraint-ref(availability) on DataCacheHandler");
}

#[test]
fn plans_cannot_run_on_gesm() {
    let g = model("mdeGrid_platform_a.gesm");
    let err = apply_plan(&g, &archweave::TransformationPlan::empty(PlanKind::Qos)).unwrap_err();
    assert!(matches!(err, ApplyError::Stage { .. }));
}

#[test]
fn platform_plans_reproduce_goldens() {
    let prime = model("mdeGrid.geim-prime");
    let lib = builtin_library();
    for (name, golden) in [("PLATFORM_A", "mdeGrid_platform_a.gesm"), ("globus", "mdeGrid_platform_b.gesm")] {
        let pl = plan_platform(&prime, &lib, name).unwrap();
        let out = apply_plan(&prime, &pl).unwrap();
        assert_eq!(out.stage, Stage::Gesm);
        assert!(out.structurally_eq(&model(golden)), "{name}");
    }
    assert!(matches!(plan_platform(&prime, &lib, "FT"), Err(PlanError::WrongKind { .. })));
    assert!(matches!(plan_platform(&prime, &lib, "nope"), Err(PlanError::UnknownPattern(_))));
}

// ---------------------------------------------------------------------------
// Ordering and atomicity over random annotation sets

#[test]
fn plan_order_is_priority_then_declaration() {
    let lib = annotation_library();
    for seed in 0..100 {
        let a = annotated(seed);
        let mappings = extract_mappings(&a, &lib).mappings;
        let pl = plan(&a, &lib).unwrap();
        assert_eq!(pl.steps.len(), mappings.len());
        let expected = expected_order(&a);
        let got: Vec<(u32, usize, String, String)> = pl
            .steps
            .iter()
            .map(|s| (s.priority, s.decl_index, s.pattern.clone(), s.target.clone()))
            .collect();
        assert_eq!(got, expected, "seed {seed}");
        let out = apply_plan(&a, &pl).unwrap();
        assert!(verify_preservation(&a, &out).passed);
    }
}

#[test]
fn injected_failure_leaves_input_untouched() {
    let lib = annotation_library();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..100 {
        let a = annotated(seed);
        let snapshot = a.clone();
        let mut pl = plan(&a, &lib).unwrap();
        if pl.steps.is_empty() {
            continue;
        }
        let step = rng.gen_range(0..pl.steps.len());
        let at = rng.gen_range(0..=pl.steps[step].actions.len());
        pl.steps[step].actions.insert(
            at,
            ScopedAction {
                scope: BlockScope::Element,
                action: AtomicAction::Remove { target: p("Missing") },
            },
        );
        match apply_plan(&a, &pl) {
            Err(ApplyError::Step { step: s, action, .. }) => {
                assert_eq!((s, action), (step, at), "seed {seed}");
            }
            other => panic!("seed {seed}: {other:?}"),
        }
        assert_eq!(a, snapshot);
        // Replaying the steps before the failure one action at a time
        // succeeds, so the failure is not an artefact of earlier steps.
        let mut cur = a.clone();
        for s in &pl.steps[..step] {
            for act in s.atomic_actions() {
                cur = apply_action(&cur, act).unwrap();
            }
        }
        for act in pl.steps[step].atomic_actions().take(at) {
            cur = apply_action(&cur, act).unwrap();
        }
    }
}

#[test]
fn mutated_goldens_fail_preservation() {
    let abs = model("mdeGrid.geim");
    let golden = model("mdeGrid.geim-prime");
    for e in &abs.elements {
        let mutated = apply_action(&golden, &AtomicAction::Remove { target: p(&e.name) }).unwrap();
        let report = verify_preservation(&abs, &mutated);
        assert!(!report.passed, "{}", e.name);
        assert!(report.failures().any(|c| c.to_string() == format!("exists({})", e.name)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Replicating any top-level element of a valid model keeps it valid and
    /// preserves every structural property of the original.
    #[test]
    fn replicate_preserves(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let a = random_model(seed);
        prop_assume!(!a.elements.is_empty());
        let e = &a.elements[pick.index(a.elements.len())];
        let out = apply_action(&a, &AtomicAction::Replicate {
            target: ElementPath::single(&e.name),
            clone_name: format!("{}Clone9", e.name),
        }).unwrap();
        prop_assert!(out.validate().is_empty());
        prop_assert!(verify_preservation(&a, &out).passed);
        prop_assert_eq!(out.elements.len(), a.elements.len() + 1);
    }

    /// Removing any element keeps the model valid.
    #[test]
    fn remove_keeps_validity(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let a = random_model(seed);
        prop_assume!(!a.elements.is_empty());
        let e = &a.elements[pick.index(a.elements.len())];
        let out = apply_action(&a, &AtomicAction::Remove { target: ElementPath::single(&e.name) }).unwrap();
        prop_assert!(out.validate().is_empty());
        prop_assert!(!out.has_element(&e.name));
    }
}
