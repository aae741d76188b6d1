mod common;

use std::time::Duration;

use common::{session, student};
use examforge_core::churn::ChurnResult;
use examforge_core::grading::{assemble_grade_record, compute_grade, round_and_clamp, GradeInputs, GradingError};
use examforge_core::model::{GradeScale, Rounding};
use examforge_core::testkit::{Outcome, OutcomeKind, RunOutcome, TestCaseResult, TestReport};
use examforge_core::{GradeStatus, GradingConstants};
use proptest::prelude::*;

fn constants() -> impl Strategy<Value = GradingConstants> {
    (0.0f64..10.0, 0.0f64..40.0, 0.1f64..500.0).prop_map(|(c0, c1, c2)| GradingConstants { c0, c1, c2 })
}

fn grade(s: f64, m: u64, k: &GradingConstants) -> f64 {
    compute_grade(GradeInputs::new(s, m).unwrap(), k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn more_churn_never_raises_the_grade(k in constants(), s in 0.0f64..=1.0, m in 0u64..100_000, extra in 1u64..10_000) {
        prop_assert!(grade(s, m + extra, &k) <= grade(s, m, &k) + 1e-12);
    }

    #[test]
    fn more_passing_tests_never_lower_the_grade(k in constants(), s in 0.0f64..=1.0, ds in 0.0f64..=1.0, m in 0u64..100_000) {
        let s2 = (s + ds).min(1.0);
        prop_assert!(grade(s2, m, &k) + 1e-12 >= grade(s, m, &k));
    }

    #[test]
    fn grade_lies_between_the_asymptotes(k in constants(), s in 0.0f64..=1.0, m in 0u64..1_000_000) {
        let g = grade(s, m, &k);
        prop_assert!(g >= k.c0 + k.c1 * s - 1e-9);
        prop_assert!(g <= k.c0 + k.c1 + 1e-9);
    }

    #[test]
    fn rounding_stays_on_the_scale(raw in -100.0f64..100.0) {
        let scale = GradeScale::default();
        let g = round_and_clamp(raw, &scale);
        prop_assert!((0.0..=30.0).contains(&g));
        prop_assert_eq!(g.fract(), 0.0);
        let unrounded = round_and_clamp(raw, &GradeScale { rounding: Rounding::None, ..scale });
        prop_assert!((g - unrounded).abs() <= 0.5 + 1e-12);
    }
}

fn report(total: u32, passed: u32) -> TestReport {
    TestReport::from_cases(
        (0..total)
            .map(|i| TestCaseResult {
                suite_name: "T".into(),
                case_name: format!("t{i}"),
                outcome: if i < passed { Outcome::Passed } else { Outcome::Failed },
                message: None,
            })
            .collect(),
    )
}

fn run(id: &str, kind: OutcomeKind) -> RunOutcome {
    RunOutcome {
        student: student(id),
        kind,
        duration: Duration::ZERO,
        log_excerpt: String::new(),
        artifact_sha256: None,
    }
}

/// Every combination of lab outcome, home outcome and churn presence maps to
/// exactly one status or one error, and the status agrees with the table.
#[test]
fn decision_table_is_total() {
    let s = session(1);
    let id = "s000";
    let kinds = || {
        vec![
            None,
            Some(OutcomeKind::Report(report(20, 20))),
            Some(OutcomeKind::Report(report(20, 7))),
            Some(OutcomeKind::Report(report(0, 0))),
            Some(OutcomeKind::CompileError),
            Some(OutcomeKind::Timeout),
            Some(OutcomeKind::InfraError),
        ]
    };
    let churn = ChurnResult::from_per_file([("A.java".to_string(), 40)].into());
    let mut seen = std::collections::HashSet::new();
    for lab in kinds() {
        for home in kinds() {
            for with_churn in [false, true] {
                let lab_run = lab.clone().map(|k| run(id, k));
                let home_run = home.clone().map(|k| run(id, k));
                let result = assemble_grade_record(
                    &student(id),
                    lab_run.as_ref(),
                    home_run.as_ref(),
                    with_churn.then_some(&churn),
                    &s,
                );
                let both = lab.is_some() && home.is_some();
                if with_churn != both {
                    assert!(matches!(result, Err(GradingError::InconsistentInputs { .. })));
                    continue;
                }
                let infra = |k: &Option<OutcomeKind>| k == &Some(OutcomeKind::InfraError);
                if infra(&lab) || (lab.is_some() && infra(&home)) {
                    assert!(matches!(result, Err(GradingError::NotGradable(_))), "{lab:?} {home:?}");
                    continue;
                }
                let record = result.unwrap();
                let expected = match (&lab, &home) {
                    (None, _) => GradeStatus::NoShow,
                    (Some(_), None) => GradeStatus::Dropout,
                    (Some(_), Some(OutcomeKind::Report(r))) if r.all_passed() => {
                        if lab == Some(OutcomeKind::CompileError) {
                            GradeStatus::CompileError
                        } else {
                            GradeStatus::Graded
                        }
                    }
                    (Some(_), Some(_)) => GradeStatus::HomeIncomplete,
                };
                assert_eq!(record.status, expected, "{lab:?} {home:?}");
                let graded = matches!(expected, GradeStatus::Graded | GradeStatus::CompileError);
                assert_eq!(record.final_grade.is_some(), graded);
                assert_eq!(record.raw_grade.is_some(), graded);
                seen.insert(expected);
            }
        }
    }
    assert_eq!(seen.len(), GradeStatus::ALL.len());
}

#[test]
fn outcome_of_another_student_is_rejected() {
    let s = session(2);
    let lab = run("s001", OutcomeKind::CompileError);
    assert!(matches!(
        assemble_grade_record(&student("s000"), Some(&lab), None, None, &s),
        Err(GradingError::InconsistentInputs { .. })
    ));
}
