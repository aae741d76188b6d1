//! Lifecycle tooling for programming-exam assignments: per-student repository
//! provisioning, deadline-based submission selection, isolated parallel
//! acceptance testing, churn-based grading and commit-process analytics.

pub mod analytics;
pub mod churn;
pub mod diff;
pub mod grading;
pub mod model;
pub mod testkit;
pub mod vcs;

pub use model::{ExamSession, GradeRecord, GradeStatus, GradingConstants, StudentId, Timestamp};
