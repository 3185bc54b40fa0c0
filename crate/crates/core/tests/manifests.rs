use std::fs;
use std::path::PathBuf;

use iotweave::aop::{emit_manifest, EmitMode, JoinPoint};
use iotweave::crosscut::{reference_aspects, SYNCHRONIZATION_ASPECT};
use iotweave::manifest::{parse_manifest, write_manifest, ModuleKind};
use iotweave::metrics::ReportFormat;
use iotweave::middleware::{core_registry, reference_manifest, BuildMode, Middleware};
use iotweave::{CohesionReportF64, ExactCohesionReport};
use num_rational::Rational64;

fn shipped(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../manifests");
    fs::read_to_string(root.join(name)).unwrap()
}

#[test]
fn emitted_manifests_equal_shipped_files() {
    assert_eq!(write_manifest(&reference_manifest(BuildMode::Tangled)), shipped("iot-java.cm"));
    assert_eq!(write_manifest(&reference_manifest(BuildMode::Woven)), shipped("iot-aspectj.cm"));
}

#[test]
fn reference_reports() {
    let java = CohesionReportF64::from_manifest(&reference_manifest(BuildMode::Tangled));
    let aj = CohesionReportF64::from_manifest(&reference_manifest(BuildMode::Woven));
    assert_eq!(java.summary_line(), "iot-java: CoI(J)=0.19, CoI(AJ)=-, avg=0.19");
    assert_eq!(aj.summary_line(), "iot-aspectj: CoI(J)=0.38, CoI(AJ)=1.00, avg=0.69");
    assert!(aj.coi_classes > java.coi_classes);

    let exact = ExactCohesionReport::from_manifest(&reference_manifest(BuildMode::Woven));
    assert_eq!(exact.coi_aspects, Some(Rational64::from_integer(1)));
    assert_eq!(exact.coi_classes, Some(Rational64::new(3, 8)));
    assert_eq!(exact.combined, Rational64::new(11, 16));
    let exact_java = ExactCohesionReport::from_manifest(&reference_manifest(BuildMode::Tangled));
    // 1/5, 1/6, 1/5, 1/5 averaged.
    assert_eq!(exact_java.coi_classes, Some(Rational64::new(23, 120)));
}

#[test]
fn table_rows_render_both_builds() {
    let reports: Vec<_> = [BuildMode::Tangled, BuildMode::Woven]
        .into_iter()
        .map(|m| CohesionReportF64::from_manifest(&reference_manifest(m)))
        .collect();
    let table = iotweave::metrics::render_report(&reports, ReportFormat::Table).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows[0], vec!["iot-java", "0.19", "-", "0.19"]);
    assert_eq!(rows[1], vec!["iot-aspectj", "0.38", "1.00", "0.69"]);
}

#[test]
fn no_aspects_means_no_aspect_modules() {
    let m = emit_manifest(&core_registry(), &[], EmitMode::Woven).unwrap();
    assert_eq!(m.aspect_count(), 0);
    assert_eq!(m.class_count(), 4);
    let t = emit_manifest(&core_registry(), &[], EmitMode::Tangled).unwrap();
    assert_eq!(t, m);
}

#[test]
fn every_reference_aspect_has_one_tag() {
    let m = reference_manifest(BuildMode::Woven);
    assert_eq!(m.aspect_count(), reference_aspects().len());
    for a in m.aspects() {
        assert_eq!(a.functionality_count(), 1, "{}", a.name());
    }
}

/// Brute force: which aspects match which modules, from the registry's
/// join points and each aspect's advice pointcuts directly.
#[test]
fn tangled_tags_follow_pointcut_matches() {
    let reg = core_registry();
    let aspects = reference_aspects();
    let m = reference_manifest(BuildMode::Tangled);
    for module in reg.modules() {
        let jps: Vec<JoinPoint> = reg.join_points_of(&module.name).collect();
        let mut expected: Vec<String> = module.core_tags.iter().map(|t| t.to_string()).collect();
        for a in &aspects {
            if jps.iter().any(|jp| a.advice().iter().any(|(p, _)| p.matches(jp))) {
                expected.push(a.concern_tag().to_string());
            }
        }
        let decl = m.module(&module.name).unwrap();
        assert_eq!(decl.kind(), ModuleKind::ClassModule);
        let got: Vec<String> = decl.tags().iter().map(|t| t.to_string()).collect();
        assert_eq!(got, expected);
    }
}

#[test]
fn weave_report_agrees_with_brute_force() {
    let mw = Middleware::build(BuildMode::Woven).unwrap();
    let report = mw.woven().report();
    let reg = core_registry();
    let aspects = reference_aspects();
    for (module, op) in reg.operations() {
        let jp = JoinPoint::new(module, op, "");
        let mut expected = Vec::new();
        for (ai, a) in aspects.iter().enumerate() {
            for (vi, (p, adv)) in a.advice().iter().enumerate() {
                if p.matches(&jp) {
                    expected.push((a.precedence(), ai, vi, a.name().to_string(), adv.phase()));
                }
            }
        }
        expected.sort_by_key(|e| (e.0, e.1, e.2));
        let got: Vec<_> = report
            .advice_for(module, op)
            .unwrap()
            .iter()
            .map(|x| (x.aspect.clone(), x.phase))
            .collect();
        let want: Vec<_> = expected.into_iter().map(|e| (e.3, e.4)).collect();
        assert_eq!(got, want, "{module}.{op}");
        assert_eq!(got[0].0, SYNCHRONIZATION_ASPECT);
    }
}

#[test]
fn weaving_is_deterministic() {
    let first = Middleware::build(BuildMode::Woven).unwrap().woven().report().clone();
    for _ in 0..120 {
        let again = Middleware::build(BuildMode::Woven).unwrap();
        assert_eq!(again.woven().report(), &first);
    }
}

#[test]
fn shipped_files_parse_and_rewrite_identically() {
    for name in ["iot-java.cm", "iot-aspectj.cm"] {
        let text = shipped(name);
        let m = parse_manifest(&text).unwrap();
        assert_eq!(write_manifest(&m), text);
    }
}
