mod common;

use std::collections::HashSet;

use common::{session, student};
use examforge_core::vcs::{
    read_credentials_csv, select_home_revision, select_lab_revision, student_commit_count, write_credentials_csv,
    CommitRecord, CommitRequest, FakeAdapter, FileChange, FileTree, GitAdapter, Gateway, RevisionId, VcsAdapter,
    VcsError,
};
use examforge_core::Timestamp;

fn skeleton() -> FileTree {
    [
        ("pom.xml", "<project/>\n"),
        ("src/main/java/Calc.java", "class Calc {\n}\n"),
        ("src/main/java/Main.java", "class Main {\n}\n"),
        ("src/test/java/CalcTest.java", "class CalcTest {\n}\n"),
        ("README.txt", "Implement the four sections.\n"),
    ]
    .into_iter()
    .map(|(p, c)| (p.to_string(), c.as_bytes().to_vec()))
    .collect()
}

fn student_commit(adapter: &dyn VcsAdapter, uri: &str, author: &str, ts: i64, path: &str, body: &str) -> RevisionId {
    let changes = [FileChange::write(path, body)];
    adapter
        .commit(
            uri,
            &CommitRequest {
                author,
                message: "work",
                timestamp: Some(Timestamp::from_unix(ts)),
                changes: &changes,
            },
        )
        .unwrap()
}

#[test]
fn provisioning_gives_distinct_repos_and_tokens() {
    let s = session(3);
    let fake = FakeAdapter::default();
    let gw = Gateway::new(&fake, &s);
    let handles = gw.provision_repos(&s.roster).unwrap();
    assert_eq!(handles.len(), 3);
    let uris: HashSet<_> = handles.iter().map(|h| h.uri.clone()).collect();
    let tokens: HashSet<_> = handles.iter().map(|h| h.credentials.token.clone()).collect();
    assert_eq!(uris.len(), 3);
    assert_eq!(tokens.len(), 3);
    assert!(handles.iter().all(|h| h.credentials.token.len() == 32));

    match gw.provision_repos(&s.roster) {
        Err(VcsError::RepoExists(who)) => assert_eq!(who, "s000"),
        other => panic!("expected RepoExists, got {other:?}"),
    }
}

#[test]
fn hundred_students_provision_and_seed() {
    let s = session(100);
    let fake = FakeAdapter::default();
    let gw = Gateway::new(&fake, &s);
    let handles = gw.provision_repos(&s.roster).unwrap();
    let report = gw.seed_initial_project(&handles, &skeleton()).unwrap();
    assert!(report.is_complete());
    assert_eq!(report.revisions.len(), 100);
    let tokens: HashSet<_> = handles.iter().map(|h| &h.credentials.token).collect();
    assert_eq!(tokens.len(), 100);
}

#[test]
fn untouched_repository_snapshot_is_the_skeleton() {
    let s = session(2);
    let fake = FakeAdapter::default();
    let gw = Gateway::new(&fake, &s);
    let handles = gw.provision_repos(&s.roster).unwrap();
    let report = gw.seed_initial_project(&handles, &skeleton()).unwrap();
    let commits = gw.list_commits(&handles[0]).unwrap();
    assert_eq!(commits.len(), 1);
    assert_eq!(commits[0].author, "teacher");
    assert_eq!(student_commit_count(&commits, "teacher"), 0);
    let snap = gw.snapshot_at(&handles[0], &report.revisions[&handles[0].student]).unwrap();
    assert_eq!(snap.files, skeleton());
    assert_eq!(snap.files.len(), 5);
}

#[test]
fn seeding_refuses_an_empty_project_and_reports_partial_failures() {
    let s = session(3);
    let fake = FakeAdapter::default();
    let gw = Gateway::new(&fake, &s);
    let handles = gw.provision_repos(&s.roster).unwrap();
    assert!(matches!(
        gw.seed_initial_project(&handles, &FileTree::new()),
        Err(VcsError::Precondition(_))
    ));
    fake.fail_writes(&handles[1].uri);
    let report = gw.seed_initial_project(&handles, &skeleton()).unwrap();
    assert_eq!(report.revisions.len(), 2);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].0, student("s001"));
    assert!(matches!(report.failures[0].1, VcsError::SeedFailure { .. }));
}

#[test]
fn decreasing_timestamps_are_an_invariant_violation() {
    let s = session(1);
    let fake = FakeAdapter::default();
    let gw = Gateway::new(&fake, &s);
    let handles = gw.provision_repos(&s.roster).unwrap();
    gw.seed_initial_project(&handles, &skeleton()).unwrap();
    let uri = &handles[0].uri;
    student_commit(&fake, uri, "s000", 1_600_000_000, "a.txt", "1\n");
    fake.push_raw(
        uri,
        CommitRecord {
            revision: RevisionId("bad".into()),
            author: "s000".into(),
            timestamp: Timestamp::from_unix(1_599_999_000),
            message: "clock skew".into(),
        },
        skeleton(),
    )
    .unwrap();
    assert!(matches!(
        gw.list_commits(&handles[0]),
        Err(VcsError::InvariantViolation { .. })
    ));
}

#[test]
fn operations_touch_only_their_own_repository() {
    let s = session(3);
    let fake = FakeAdapter::default();
    let gw = Gateway::new(&fake, &s);
    let handles = gw.provision_repos(&s.roster).unwrap();
    gw.seed_initial_project(&handles, &skeleton()).unwrap();
    fake.clear_calls();
    let target = &handles[1];
    let commits = gw.list_commits(target).unwrap();
    gw.snapshot_at(target, &commits[0].revision).unwrap();
    student_commit(&fake, &target.uri, "s001", 1_600_000_000, "x", "y");
    let calls = fake.calls();
    assert!(!calls.is_empty());
    assert!(calls.iter().all(|c| c.uri == target.uri), "{calls:?}");
}

#[test]
fn missing_revision_and_repository_are_reported() {
    let s = session(1);
    let fake = FakeAdapter::default();
    let gw = Gateway::new(&fake, &s);
    let handles = gw.provision_repos(&s.roster).unwrap();
    assert!(matches!(
        gw.snapshot_at(&handles[0], &RevisionId("nope".into())),
        Err(VcsError::RevisionMissing { .. })
    ));
    assert!(matches!(fake.log("mem://ghost"), Err(VcsError::RepoMissing(_))));
}

#[test]
fn published_test_versions_are_retrievable() {
    let s = session(1);
    let fake = FakeAdapter::default();
    let gw = Gateway::new(&fake, &s);
    let dir = tempfile::tempdir().unwrap();
    let artifact = dir.path().join("suite.sh");
    let repo = gw.ensure_test_repo().unwrap();

    std::fs::write(&artifact, "v1").unwrap();
    let v1 = gw.publish_tests(&repo, &artifact).unwrap();
    std::fs::write(&artifact, "v2").unwrap();
    let v2 = gw.publish_tests(&repo, &artifact).unwrap();
    assert_ne!(v1, v2);
    assert_eq!(fake.checkout(&repo.uri, &v1).unwrap()["suite.sh"], b"v1");
    assert_eq!(fake.checkout(&repo.uri, &v2).unwrap()["suite.sh"], b"v2");
    assert_eq!(gw.ensure_test_repo().unwrap().uri, repo.uri);

    assert!(matches!(
        gw.publish_tests(&repo, &dir.path().join("absent.sh")),
        Err(VcsError::StorageFailure(_))
    ));
}

#[test]
fn deadline_selection_over_a_real_history() {
    let s = session(1);
    let fake = FakeAdapter::new(s.deadline.plus_secs(-86_400));
    let gw = Gateway::new(&fake, &s);
    let handles = gw.provision_repos(&s.roster).unwrap();
    gw.seed_initial_project(&handles, &skeleton()).unwrap();
    let deadline = s.deadline.unix();
    let uri = &handles[0].uri;
    let early = student_commit(&fake, uri, "s000", deadline - 60, "a", "1");
    student_commit(&fake, uri, "s000", deadline, "a", "2");
    let late = student_commit(&fake, uri, "s000", deadline + 3600, "a", "3");
    let commits = gw.list_commits(&handles[0]).unwrap();
    assert_eq!(select_lab_revision(&commits, s.deadline, "teacher").unwrap().revision, early);
    assert_eq!(select_home_revision(&commits, "teacher").unwrap().revision, late);
}

#[test]
fn fake_adapter_is_deterministic() {
    let run = || {
        let s = session(20);
        let fake = FakeAdapter::default();
        let gw = Gateway::new(&fake, &s);
        let handles = gw.provision_repos(&s.roster).unwrap();
        let report = gw.seed_initial_project(&handles, &skeleton()).unwrap();
        report.revisions
    };
    assert_eq!(run(), run());
}

#[test]
fn credentials_round_trip() {
    let s = session(4);
    let fake = FakeAdapter::default();
    let handles = Gateway::new(&fake, &s).provision_repos(&s.roster).unwrap();
    let text = write_credentials_csv(&handles).unwrap();
    assert!(text.starts_with("student_id,repo_uri,username,token\n"));
    assert_eq!(read_credentials_csv(&text).unwrap(), handles);
}

#[test]
fn git_adapter_full_cycle() {
    if !GitAdapter::available() {
        eprintln!("git not installed; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let git = GitAdapter::new(dir.path());
    let mut s = session(2);
    // The seed commit is stamped with the wall clock.
    s.deadline = Timestamp::now().plus_secs(3600);
    let gw = Gateway::new(&git, &s);
    let handles = gw.provision_repos(&s.roster).unwrap();
    assert!(matches!(gw.provision_repos(&s.roster), Err(VcsError::RepoExists(_))));
    let report = gw.seed_initial_project(&handles, &skeleton()).unwrap();
    assert!(report.is_complete(), "{:?}", report.failures);

    let uri = &handles[0].uri;
    let deadline = s.deadline.unix();
    let lab = student_commit(&git, uri, "s000", deadline - 10, "src/main/java/Calc.java", "class Calc {\n int x;\n}\n");
    let changes = [FileChange::Delete {
        path: "README.txt".into(),
    }];
    let home = git
        .commit(
            uri,
            &CommitRequest {
                author: "s000",
                message: "home",
                timestamp: Some(Timestamp::from_unix(deadline + 100)),
                changes: &changes,
            },
        )
        .unwrap();

    let commits = gw.list_commits(&handles[0]).unwrap();
    assert_eq!(commits.len(), 3);
    assert_eq!(commits[0].author, "teacher");
    assert_eq!(commits[1].timestamp, Timestamp::from_unix(deadline - 10));
    assert_eq!(select_lab_revision(&commits, s.deadline, "teacher").unwrap().revision, lab);
    assert_eq!(select_home_revision(&commits, "teacher").unwrap().revision, home);

    let lab_tree = gw.snapshot_at(&handles[0], &lab).unwrap().files;
    assert_eq!(lab_tree["src/main/java/Calc.java"], b"class Calc {\n int x;\n}\n");
    assert!(lab_tree.contains_key("README.txt"));
    let home_tree = gw.snapshot_at(&handles[0], &home).unwrap().files;
    assert!(!home_tree.contains_key("README.txt"));
    let untouched = gw.list_commits(&handles[1]).unwrap();
    assert_eq!(gw.snapshot_at(&handles[1], &untouched[0].revision).unwrap().files, skeleton());

    assert!(matches!(
        gw.snapshot_at(&handles[0], &RevisionId("0".repeat(40))),
        Err(VcsError::RevisionMissing { .. })
    ));
}
