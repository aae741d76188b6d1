#![allow(dead_code)]

use examforge_core::model::load_session;
use examforge_core::{ExamSession, StudentId};

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:03}")).collect()
}

pub fn student(id: &str) -> StudentId {
    StudentId::new(id).unwrap()
}

pub fn session_with(roster: &[String], extra: &str) -> ExamSession {
    let roster = serde_json::to_string(roster).unwrap();
    let text = format!(
        r#"{{
            "session_id": "2017-06",
            "deadline": "2017-06-20T12:00:00Z",
            "constants": {{"c0": 3, "c1": 27, "c2": 100}},
            "requirement_sections": 4,
            "test_command": "sh {{tests}} {{workspace}} {{report}}",
            "test_artifact": "suite.sh",
            "roster": {roster}{extra}
        }}"#
    );
    load_session(&text).unwrap()
}

pub fn session(n: usize) -> ExamSession {
    session_with(&ids(n), "")
}
