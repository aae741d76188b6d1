#![allow(dead_code)]

use std::path::{Path, PathBuf};

use examforge::{Context, SessionPaths};
use examforge_core::model::load_session_in;
use examforge_core::vcs::{CommitRequest, FakeAdapter, FileChange, Gateway, RevisionId, VcsAdapter};
use examforge_core::{ExamSession, StudentId, Timestamp};
use tempfile::TempDir;

/// Stands in for a compiled acceptance suite. A project "fails to compile"
/// when its source contains BROKEN; otherwise `score` holds `passed total`.
pub const SUITE: &str = r#"ws="$1"; report="$2"
if grep -q BROKEN "$ws/src/Calc.java"; then
  echo "src/Calc.java:3: error: ';' expected" >&2; exit 2
fi
[ -f "$ws/crash" ] && { echo "jvm died" >&2; exit 1; }
[ -f "$ws/hang" ] && sleep 30
read passed total < "$ws/score" || exit 1
{
  echo "<testsuite name=\"CalcTest\" tests=\"$total\">"
  i=0
  while [ $i -lt $total ]; do
    if [ $i -lt $passed ]; then
      echo "  <testcase classname=\"CalcTest\" name=\"t$i\"/>"
    else
      echo "  <testcase classname=\"CalcTest\" name=\"t$i\"><failure message=\"wrong\"/></testcase>"
    fi
    i=$((i+1))
  done
  echo "</testsuite>"
} > "$report"
"#;

pub const DEADLINE: &str = "2017-06-20T12:00:00Z";

pub fn deadline() -> Timestamp {
    Timestamp::parse_iso(DEADLINE).unwrap()
}

pub fn sid(id: &str) -> StudentId {
    StudentId::new(id).unwrap()
}

pub const CALC: &str = "public class Calc {\n    public int add(int a, int b) {\n        return 0;\n    }\n}\n";

/// Files of the skeleton every repository starts from.
pub fn skeleton() -> Vec<(&'static str, String)> {
    vec![
        ("score", "0 4\n".to_string()),
        ("src/Calc.java", CALC.to_string()),
        ("README.md", "Implement Calc.\n".to_string()),
    ]
}

pub struct Exam {
    pub dir: TempDir,
    pub session: ExamSession,
    pub adapter: FakeAdapter,
    pub paths: SessionPaths,
}

impl Exam {
    pub fn new(roster: &[&str]) -> Self {
        Exam::with_config(roster, "")
    }

    /// `extra` is spliced into the config document after the roster.
    pub fn with_config(roster: &[&str], extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("suite.sh"), SUITE).unwrap();
        let project = dir.path().join("initial");
        for (path, text) in skeleton() {
            let p = project.join(path);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, text).unwrap();
        }
        let text = format!(
            r#"{{
                "session_id": "2017-06",
                "deadline": "{DEADLINE}",
                "constants": {{"c0": 3, "c1": 27, "c2": 100}},
                "requirement_sections": 2,
                "test_command": "sh {{tests}} {{workspace}} {{report}}",
                "test_artifact": "suite.sh",
                "timeout_secs": 3,
                "roster": {}{extra}
            }}"#,
            serde_json_list(roster)
        );
        let session = load_session_in(&text, dir.path()).unwrap();
        let paths = SessionPaths::new(dir.path().join("session"));
        // Repositories are seeded one day before the exam ends.
        let adapter = FakeAdapter::new(deadline().plus_secs(-86_400));
        Exam {
            dir,
            session,
            adapter,
            paths,
        }
    }

    pub fn ctx(&self) -> Context<'_> {
        Context {
            session: self.session.clone(),
            paths: self.paths.clone(),
            adapter: &self.adapter,
        }
    }

    pub fn project_dir(&self) -> PathBuf {
        self.dir.path().join("initial")
    }

    pub fn suite(&self) -> PathBuf {
        self.dir.path().join("suite.sh")
    }

    pub fn uri(&self, student: &str) -> String {
        Gateway::new(&self.adapter, &self.session).repo_uri(&sid(student))
    }

    /// Commits as the student at `at` seconds relative to the deadline.
    pub fn student_commit(&self, student: &str, at: i64, changes: &[FileChange]) -> RevisionId {
        self.adapter
            .commit(
                &self.uri(student),
                &CommitRequest {
                    author: student,
                    message: "work",
                    timestamp: Some(deadline().plus_secs(at)),
                    changes,
                },
            )
            .unwrap()
    }

    pub fn read(&self, path: impl AsRef<Path>) -> String {
        std::fs::read_to_string(self.paths.root.join(path)).unwrap()
    }
}

fn serde_json_list(items: &[&str]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("\"{s}\"")).collect();
    format!("[{}]", quoted.join(", "))
}

pub fn score(passed: u32, total: u32) -> FileChange {
    FileChange::write("score", format!("{passed} {total}\n"))
}

/// A new file of `n` distinct lines.
pub fn lines_file(path: &str, n: usize) -> FileChange {
    let text: String = (0..n).map(|i| format!("    // step {i}\n")).collect();
    FileChange::write(path, text)
}
