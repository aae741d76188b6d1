//! Grade formula and final grade records.
//!
//! ```text
//! grade = c0 + c1 * (S + (1 - S) * c2 / (c2 + M))
//! ```
//!
//! `S` is the fraction of tests the lab version passes and `M` the churn
//! needed to reach the fully passing home version. With many modifications
//! the grade tends to `c0 + c1 * S`; with few it approaches `c0 + c1`.

use thiserror::Error;

use crate::churn::ChurnResult;
use crate::model::{ExamSession, GradeRecord, GradeScale, GradeStatus, GradingConstants, Rounding, StudentId};
use crate::testkit::{compute_pass_fraction, OutcomeKind, RunOutcome};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GradingError {
    #[error("inconsistent grading inputs for `{student}`: {reason}")]
    InconsistentInputs { student: String, reason: String },
    #[error("`{0}` cannot be graded until its infrastructure error is resolved")]
    NotGradable(String),
    #[error("invalid grade inputs: {0}")]
    InvalidInputs(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradeInputs {
    s: f64,
    m: u64,
}

impl GradeInputs {
    pub fn new(s: f64, m: u64) -> Result<Self, GradingError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(GradingError::InvalidInputs(format!("S = {s} is outside [0, 1]")));
        }
        Ok(GradeInputs { s, m })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn m(&self) -> u64 {
        self.m
    }
}

/// Raw grade, unrounded and unclamped.
pub fn compute_grade(inputs: GradeInputs, k: &GradingConstants) -> f64 {
    let s = inputs.s;
    let m = inputs.m as f64;
    k.c0 + k.c1 * (s + (1.0 - s) * (k.c2 / (k.c2 + m)))
}

/// Applies the scale's rounding, then clamps into `[min, max]`.
pub fn round_and_clamp(raw: f64, scale: &GradeScale) -> f64 {
    let rounded = match scale.rounding {
        Rounding::HalfUpInteger => {
            let floor = raw.floor();
            if raw - floor >= 0.5 {
                floor + 1.0
            } else {
                floor
            }
        }
        Rounding::None => raw,
    };
    rounded.clamp(scale.min, scale.max)
}

/// Derives the status and numbers for one student.
///
/// | lab      | home             | status         |
/// |----------|------------------|----------------|
/// | none     | any              | NoShow         |
/// | some     | none             | Dropout        |
/// | some     | not all passing  | HomeIncomplete |
/// | compile  | all passing      | CompileError   |
/// | other    | all passing      | Graded         |
///
/// Churn must be present exactly when both versions are. CompileError and
/// Graded records carry a grade; HomeIncomplete keeps S and M for review.
pub fn assemble_grade_record(
    student: &StudentId,
    lab: Option<&RunOutcome>,
    home: Option<&RunOutcome>,
    churn: Option<&ChurnResult>,
    session: &ExamSession,
) -> Result<GradeRecord, GradingError> {
    let inconsistent = |reason: &str| GradingError::InconsistentInputs {
        student: student.to_string(),
        reason: reason.to_string(),
    };
    if churn.is_some() != (lab.is_some() && home.is_some()) {
        return Err(inconsistent("churn must be present exactly when both versions exist"));
    }
    for outcome in lab.iter().chain(home.iter()) {
        if &outcome.student != student {
            return Err(inconsistent("outcome belongs to another student"));
        }
    }
    let mut record = GradeRecord {
        student: student.clone(),
        status: GradeStatus::NoShow,
        s: None,
        m: None,
        raw_grade: None,
        final_grade: None,
    };
    let Some(lab) = lab else {
        return Ok(record);
    };
    let s = compute_pass_fraction(lab).map_err(|e| GradingError::NotGradable(e.0))?;
    record.s = Some(s);
    let (Some(home), Some(churn)) = (home, churn) else {
        record.status = GradeStatus::Dropout;
        return Ok(record);
    };
    let home_fraction = compute_pass_fraction(home).map_err(|e| GradingError::NotGradable(e.0))?;
    record.m = Some(churn.total);
    let home_complete = matches!(&home.kind, OutcomeKind::Report(r) if r.all_passed());
    if !home_complete {
        debug_assert!(home_fraction < 1.0 || !matches!(home.kind, OutcomeKind::Report(_)));
        record.status = GradeStatus::HomeIncomplete;
        return Ok(record);
    }
    record.status = if lab.kind == OutcomeKind::CompileError {
        GradeStatus::CompileError
    } else {
        GradeStatus::Graded
    };
    let raw = compute_grade(GradeInputs::new(s, churn.total)?, &session.constants);
    record.raw_grade = Some(raw);
    record.final_grade = Some(round_and_clamp(raw, &session.grade_scale));
    Ok(record)
}

/// Renders `student_id,status,S,M,raw_grade,final_grade` rows ordered by
/// student id, leaving absent values empty.
pub fn grades_csv(records: &[GradeRecord]) -> String {
    let mut sorted: Vec<&GradeRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.student.cmp(&b.student));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["student_id", "status", "S", "M", "raw_grade", "final_grade"])
        .expect("in-memory write");
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in sorted {
        w.write_record([
            r.student.to_string(),
            r.status.to_string(),
            num(r.s),
            r.m.map(|m| m.to_string()).unwrap_or_default(),
            num(r.raw_grade),
            num(r.final_grade),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
