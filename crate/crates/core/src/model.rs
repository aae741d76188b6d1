//! Shared domain types, the session configuration format and roster ingestion.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Author identity used for seed commits when the config does not name one.
pub const DEFAULT_TEACHER_IDENTITY: &str = "teacher";

/// Per-project test timeout when the config does not set one.
pub const DEFAULT_TIMEOUT_SECS: u64 = 300;

/// Build output, IDE metadata and VCS directories never count towards churn.
pub const DEFAULT_IGNORE_GLOBS: &[&str] = &[
    ".git/**",
    "**/.git/**",
    ".svn/**",
    "**/.svn/**",
    ".examforge/**",
    "target/**",
    "build/**",
    "bin/**",
    "out/**",
    ".idea/**",
    ".settings/**",
    "**/*.class",
];

pub const DEFAULT_COMPILE_ERROR_MARKERS: &[&str] = &["error:", "error["];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed session config: {0}")]
    MalformedConfig(String),
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::InvalidField {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Name of the offending field, if this is an invariant violation.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::InvalidField { field, .. } => Some(field),
            ConfigError::MalformedConfig(_) => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RosterError {
    #[error("malformed roster csv: {0}")]
    MalformedCsv(String),
    #[error("duplicate student `{0}` in roster")]
    DuplicateStudent(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid student id {0:?}: {1}")]
pub struct InvalidStudentId(pub String, pub &'static str);

/// Institutional student identifier. Used verbatim in repository names and
/// directory paths, so it may not contain separators or whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StudentId(String);

impl StudentId {
    pub fn new(id: impl Into<String>) -> Result<Self, InvalidStudentId> {
        let id = id.into();
        if id.is_empty() {
            return Err(InvalidStudentId(id, "empty"));
        }
        if id.chars().any(|c| c == '/' || c == '\\' || c.is_whitespace()) {
            return Err(InvalidStudentId(id, "contains a path separator or whitespace"));
        }
        // Leading dots are reserved for session-internal repositories (and rule out `..`).
        if id.starts_with('.') {
            return Err(InvalidStudentId(id, "starts with '.'"));
        }
        Ok(StudentId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for StudentId {
    type Err = InvalidStudentId;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StudentId::new(s)
    }
}

impl TryFrom<String> for StudentId {
    type Error = InvalidStudentId;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        StudentId::new(s)
    }
}

impl From<StudentId> for String {
    fn from(id: StudentId) -> String {
        id.0
    }
}

/// UTC instant at second precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimestampError {
    #[error("not an ISO-8601 timestamp: {0}")]
    Syntax(String),
    #[error("sub-second precision is not supported: {0}")]
    SubSecond(String),
    #[error("timestamp out of range: {0}")]
    OutOfRange(i64),
}

impl Timestamp {
    pub fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub fn unix(self) -> i64 {
        self.0
    }

    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp())
    }

    pub fn parse_iso(text: &str) -> Result<Self, TimestampError> {
        let parsed = DateTime::parse_from_rfc3339(text.trim())
            .map_err(|_| TimestampError::Syntax(text.to_string()))?;
        if parsed.timestamp_subsec_nanos() != 0 {
            return Err(TimestampError::SubSecond(text.to_string()));
        }
        Ok(Timestamp(parsed.timestamp()))
    }

    pub fn plus_secs(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }

    pub fn to_iso(self) -> String {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            None => format!("@{}", self.0),
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso())
    }
}

impl FromStr for Timestamp {
    type Err = TimestampError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse_iso(s)
    }
}

/// Constants of the grade formula: offset `c0`, span `c1` and churn half-weight `c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradingConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl GradingConstants {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.c0.is_finite() {
            return Err(ConfigError::invalid("constants.c0", "must be finite"));
        }
        if !(self.c1.is_finite() && self.c1 > 0.0) {
            return Err(ConfigError::invalid("constants.c1", "must be > 0"));
        }
        if !(self.c2.is_finite() && self.c2 > 0.0) {
            return Err(ConfigError::invalid("constants.c2", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rounding {
    #[serde(rename = "half-up-integer")]
    HalfUpInteger,
    #[serde(rename = "none")]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradeScale {
    pub min: f64,
    pub max: f64,
    pub rounding: Rounding,
}

impl Default for GradeScale {
    fn default() -> Self {
        GradeScale {
            min: 0.0,
            max: 30.0,
            rounding: Rounding::HalfUpInteger,
        }
    }
}

/// Configuration of one exam session.
#[derive(Debug, Clone, PartialEq)]
pub struct ExamSession {
    pub session_id: String,
    pub deadline: Timestamp,
    pub constants: GradingConstants,
    /// Number of requirement sections in the assignment text.
    pub requirement_sections: u32,
    pub test_command: String,
    pub test_artifact: PathBuf,
    pub roster: Vec<StudentId>,
    pub grade_scale: GradeScale,
    /// Author name of teacher commits; every other author is a student.
    pub teacher_identity: String,
    pub timeout_secs: u64,
    pub ignore_globs: Vec<String>,
    pub compile_error_markers: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionDocument {
    session_id: String,
    deadline: String,
    constants: GradingConstants,
    requirement_sections: i64,
    test_command: String,
    test_artifact: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grade_scale: Option<GradeScale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roster: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roster_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    teacher_identity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timeout_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ignore_globs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compile_error_markers: Option<Vec<String>>,
}

/// Parses and validates a session config. A `roster_file` is resolved against
/// the current directory; use [`load_session_file`] to resolve it against the
/// config's own directory.
pub fn load_session(config_text: &str) -> Result<ExamSession, ConfigError> {
    load_session_in(config_text, Path::new(""))
}

/// Reads a session config from disk; relative paths inside it are resolved
/// against the directory containing the file.
pub fn load_session_file(path: &Path) -> Result<ExamSession, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigError::MalformedConfig(format!("cannot read {}: {e}", path.display()))
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    load_session_in(&text, base)
}

pub fn load_session_in(config_text: &str, base_dir: &Path) -> Result<ExamSession, ConfigError> {
    let doc: SessionDocument = serde_json::from_str(config_text)
        .map_err(|e| ConfigError::MalformedConfig(e.to_string()))?;

    if doc.session_id.is_empty()
        || doc
            .session_id
            .chars()
            .any(|c| c == '/' || c == '\\' || c.is_whitespace())
    {
        return Err(ConfigError::invalid(
            "session_id",
            "must be a non-empty token without separators or whitespace",
        ));
    }
    let deadline = Timestamp::parse_iso(&doc.deadline)
        .map_err(|e| ConfigError::invalid("deadline", e.to_string()))?;
    doc.constants.validate()?;
    if doc.requirement_sections < 1 || doc.requirement_sections > u32::MAX as i64 {
        return Err(ConfigError::invalid("requirement_sections", "must be >= 1"));
    }
    if doc.test_command.trim().is_empty() {
        return Err(ConfigError::invalid("test_command", "must not be empty"));
    }
    if doc.test_artifact.is_empty() {
        return Err(ConfigError::invalid("test_artifact", "must not be empty"));
    }
    let grade_scale = doc.grade_scale.unwrap_or_default();
    if !(grade_scale.min.is_finite() && grade_scale.max.is_finite())
        || grade_scale.min >= grade_scale.max
    {
        return Err(ConfigError::invalid("grade_scale", "min must be < max"));
    }

    let roster = match (doc.roster, doc.roster_file) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::invalid(
                "roster",
                "give either `roster` or `roster_file`, not both",
            ))
        }
        (Some(ids), None) => {
            let mut seen = HashSet::new();
            let mut roster = Vec::with_capacity(ids.len());
            for id in ids {
                let id = StudentId::new(id).map_err(|e| ConfigError::invalid("roster", e.to_string()))?;
                if !seen.insert(id.clone()) {
                    return Err(ConfigError::invalid("roster", format!("duplicate student `{id}`")));
                }
                roster.push(id);
            }
            roster
        }
        (None, Some(file)) => {
            let path = base_dir.join(file);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                ConfigError::invalid("roster_file", format!("cannot read {}: {e}", path.display()))
            })?;
            ingest_roster(&text).map_err(|e| ConfigError::invalid("roster", e.to_string()))?
        }
        (None, None) => return Err(ConfigError::invalid("roster", "missing roster")),
    };

    let teacher_identity = doc
        .teacher_identity
        .unwrap_or_else(|| DEFAULT_TEACHER_IDENTITY.to_string());
    if teacher_identity.trim().is_empty() || teacher_identity.contains(['<', '>', '|', '\n']) {
        return Err(ConfigError::invalid("teacher_identity", "must be a plain non-empty name"));
    }
    if roster.iter().any(|s| s.as_str() == teacher_identity) {
        return Err(ConfigError::invalid("teacher_identity", "collides with a roster entry"));
    }
    let timeout_secs = doc.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS);
    if timeout_secs == 0 {
        return Err(ConfigError::invalid("timeout_secs", "must be > 0"));
    }
    let ignore_globs = doc
        .ignore_globs
        .unwrap_or_else(|| DEFAULT_IGNORE_GLOBS.iter().map(|s| s.to_string()).collect());
    for g in &ignore_globs {
        globset::Glob::new(g).map_err(|e| ConfigError::invalid("ignore_globs", e.to_string()))?;
    }
    let compile_error_markers = doc.compile_error_markers.unwrap_or_else(|| {
        DEFAULT_COMPILE_ERROR_MARKERS
            .iter()
            .map(|s| s.to_string())
            .collect()
    });

    Ok(ExamSession {
        session_id: doc.session_id,
        deadline,
        constants: doc.constants,
        requirement_sections: doc.requirement_sections as u32,
        test_command: doc.test_command,
        test_artifact: base_dir.join(doc.test_artifact),
        roster,
        grade_scale,
        teacher_identity,
        timeout_secs,
        ignore_globs,
        compile_error_markers,
    })
}

impl ExamSession {
    /// Serializes to the config format with the roster inlined, so that
    /// `load_session(&s.to_config_json())` reproduces `s`.
    pub fn to_config_json(&self) -> String {
        let doc = SessionDocument {
            session_id: self.session_id.clone(),
            deadline: self.deadline.to_iso(),
            constants: self.constants,
            requirement_sections: self.requirement_sections as i64,
            test_command: self.test_command.clone(),
            test_artifact: self.test_artifact.to_string_lossy().into_owned(),
            grade_scale: Some(self.grade_scale),
            roster: Some(self.roster.iter().map(|s| s.to_string()).collect()),
            roster_file: None,
            teacher_identity: Some(self.teacher_identity.clone()),
            timeout_secs: Some(self.timeout_secs),
            ignore_globs: Some(self.ignore_globs.clone()),
            compile_error_markers: Some(self.compile_error_markers.clone()),
        };
        serde_json::to_string_pretty(&doc).expect("session document is always serializable")
    }

    pub fn is_teacher(&self, author: &str) -> bool {
        author == self.teacher_identity
    }
}

/// Parses a roster CSV with a single `student_id` column.
pub fn ingest_roster(csv_text: &str) -> Result<Vec<StudentId>, RosterError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| RosterError::MalformedCsv(e.to_string()))?
        .clone();
    let column = headers
        .iter()
        .position(|h| h == "student_id")
        .ok_or_else(|| RosterError::MalformedCsv("missing `student_id` header".into()))?;

    let mut seen = HashSet::new();
    let mut roster = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| RosterError::MalformedCsv(e.to_string()))?;
        let raw = record
            .get(column)
            .ok_or_else(|| RosterError::MalformedCsv(format!("row {} has no student_id", line + 2)))?;
        if raw.is_empty() && record.iter().all(str::is_empty) {
            continue;
        }
        let id = StudentId::new(raw)
            .map_err(|e| RosterError::MalformedCsv(format!("row {}: {e}", line + 2)))?;
        if !seen.insert(id.clone()) {
            return Err(RosterError::DuplicateStudent(id.to_string()));
        }
        roster.push(id);
    }
    Ok(roster)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GradeStatus {
    NoShow,
    Dropout,
    CompileError,
    HomeIncomplete,
    Graded,
}

impl GradeStatus {
    pub const ALL: [GradeStatus; 5] = [
        GradeStatus::NoShow,
        GradeStatus::Dropout,
        GradeStatus::CompileError,
        GradeStatus::HomeIncomplete,
        GradeStatus::Graded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GradeStatus::NoShow => "NoShow",
            GradeStatus::Dropout => "Dropout",
            GradeStatus::CompileError => "CompileError",
            GradeStatus::HomeIncomplete => "HomeIncomplete",
            GradeStatus::Graded => "Graded",
        }
    }
}

impl fmt::Display for GradeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Final outcome for one student.
#[derive(Debug, Clone, PartialEq)]
pub struct GradeRecord {
    pub student: StudentId,
    pub status: GradeStatus,
    /// Fraction of acceptance tests passed by the lab version.
    pub s: Option<f64>,
    /// Churn between the lab and home versions.
    pub m: Option<u64>,
    pub raw_grade: Option<f64>,
    pub final_grade: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "session_id": "2017-06",
        "deadline": "2017-06-12T11:00:00Z",
        "constants": {"c0": 3, "c1": 27, "c2": 100},
        "requirement_sections": 4,
        "test_command": "sh {tests} {workspace} {report}",
        "test_artifact": "tests/suite.sh",
        "roster": ["s100", "s101"]
    }"#;

    #[test]
    fn minimal_document_loads() {
        let s = load_session(MINIMAL).unwrap();
        assert_eq!(s.session_id, "2017-06");
        assert_eq!(s.requirement_sections, 4);
        assert_eq!(
            s.constants,
            GradingConstants {
                c0: 3.0,
                c1: 27.0,
                c2: 100.0
            }
        );
        assert_eq!(s.deadline, Timestamp::parse_iso("2017-06-12T11:00:00+00:00").unwrap());
        assert_eq!(s.deadline.unix(), 1_497_265_200);
        assert_eq!(s.roster, vec![StudentId::new("s100").unwrap(), StudentId::new("s101").unwrap()]);
        assert_eq!(s.grade_scale, GradeScale::default());
        assert_eq!(s.teacher_identity, DEFAULT_TEACHER_IDENTITY);
        assert_eq!(s.timeout_secs, 300);
    }

    #[test]
    fn zero_c1_is_rejected() {
        let text = MINIMAL.replace("\"c1\": 27", "\"c1\": 0");
        let err = load_session(&text).unwrap_err();
        assert_eq!(err.field(), Some("constants.c1"));
    }

    #[test]
    fn duplicate_roster_entry_is_rejected() {
        let text = MINIMAL.replace("[\"s100\", \"s101\"]", "[\"s100\", \"s100\"]");
        assert_eq!(load_session(&text).unwrap_err().field(), Some("roster"));
    }

    #[test]
    fn syntax_errors_are_malformed() {
        assert!(matches!(
            load_session("{ not json"),
            Err(ConfigError::MalformedConfig(_))
        ));
        assert!(matches!(
            load_session(&MINIMAL.replace("\"session_id\"", "\"sesion_id\"")),
            Err(ConfigError::MalformedConfig(_))
        ));
    }

    #[test]
    fn other_invariants() {
        let cases = [
            (MINIMAL.replace("\"requirement_sections\": 4", "\"requirement_sections\": 0"), "requirement_sections"),
            (MINIMAL.replace("2017-06-12T11:00:00Z", "yesterday"), "deadline"),
            (MINIMAL.replace("2017-06-12T11:00:00Z", "2017-06-12T11:00:00.5Z"), "deadline"),
            (MINIMAL.replace("\"c2\": 100", "\"c2\": -1"), "constants.c2"),
            (
                MINIMAL.replace(
                    "\"roster\"",
                    "\"grade_scale\": {\"min\": 30, \"max\": 0, \"rounding\": \"none\"}, \"roster\"",
                ),
                "grade_scale",
            ),
            (MINIMAL.replace("\"s101\"", "\"s 101\""), "roster"),
        ];
        for (text, field) in cases {
            assert_eq!(load_session(&text).unwrap_err().field(), Some(field), "{text}");
        }
    }

    #[test]
    fn deadline_offsets_normalize_to_utc() {
        let text = MINIMAL.replace("2017-06-12T11:00:00Z", "2017-06-12T13:00:00+02:00");
        let s = load_session(&text).unwrap();
        assert_eq!(s.deadline.to_iso(), "2017-06-12T11:00:00Z");
    }

    #[test]
    fn serialize_round_trips() {
        let s = load_session(MINIMAL).unwrap();
        assert_eq!(load_session(&s.to_config_json()).unwrap(), s);
    }

    #[test]
    fn roster_csv() {
        assert_eq!(
            ingest_roster("student_id\ns100\ns101").unwrap(),
            vec![StudentId::new("s100").unwrap(), StudentId::new("s101").unwrap()]
        );
        assert_eq!(ingest_roster("student_id\n").unwrap(), vec![]);
        assert_eq!(
            ingest_roster("student_id\ns100\ns100"),
            Err(RosterError::DuplicateStudent("s100".into()))
        );
        assert!(matches!(ingest_roster("name\nbob"), Err(RosterError::MalformedCsv(_))));
        assert!(matches!(ingest_roster("student_id\n../x"), Err(RosterError::MalformedCsv(_))));
    }

    #[test]
    fn student_id_rules() {
        assert!(StudentId::new("").is_err());
        assert!(StudentId::new("a/b").is_err());
        assert!(StudentId::new("a b").is_err());
        assert!(StudentId::new("..").is_err());
        assert!(StudentId::new("s-100_x").is_ok());
    }
}
