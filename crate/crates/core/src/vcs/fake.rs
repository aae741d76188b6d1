use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, Mutex, MutexGuard};

use sha2::{Digest, Sha256};

use super::{check_changes, CommitRecord, CommitRequest, FileChange, FileTree, RevisionId, VcsAdapter, VcsError};
use crate::model::Timestamp;

/// One recorded adapter invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdapterCall {
    pub op: &'static str,
    pub uri: String,
}

#[derive(Default)]
struct Repo {
    history: Vec<(CommitRecord, FileTree)>,
}

struct State {
    repos: BTreeMap<String, Repo>,
    calls: Vec<AdapterCall>,
    failing: HashSet<String>,
    clock: i64,
}

/// Deterministic in-memory adapter. Clones share the same storage.
///
/// Commits without an explicit timestamp are stamped with the adapter clock,
/// or one second after the previous commit of the same repository if that is
/// later. Revision ids derive from the locator and history position, so runs
/// are reproducible regardless of the order repositories are touched in.
#[derive(Clone)]
pub struct FakeAdapter {
    state: Arc<Mutex<State>>,
}

impl Default for FakeAdapter {
    fn default() -> Self {
        FakeAdapter::new(Timestamp::from_unix(1_500_000_000))
    }
}

impl FakeAdapter {
    pub fn new(clock: Timestamp) -> Self {
        FakeAdapter {
            state: Arc::new(Mutex::new(State {
                repos: BTreeMap::new(),
                calls: Vec::new(),
                failing: HashSet::new(),
                clock: clock.unix(),
            })),
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn set_clock(&self, now: Timestamp) {
        self.lock().clock = now.unix();
    }

    /// Makes every subsequent write to `uri` fail with `StorageFailure`.
    pub fn fail_writes(&self, uri: &str) {
        self.lock().failing.insert(uri.to_string());
    }

    pub fn calls(&self) -> Vec<AdapterCall> {
        self.lock().calls.clone()
    }

    pub fn clear_calls(&self) {
        self.lock().calls.clear();
    }

    /// Appends a commit verbatim, bypassing timestamp checks. Lets tests build
    /// corrupt histories.
    pub fn push_raw(&self, uri: &str, record: CommitRecord, tree: FileTree) -> Result<(), VcsError> {
        let mut st = self.lock();
        let repo = st
            .repos
            .get_mut(uri)
            .ok_or_else(|| VcsError::RepoMissing(uri.to_string()))?;
        repo.history.push((record, tree));
        Ok(())
    }

    fn record(st: &mut State, op: &'static str, uri: &str) {
        st.calls.push(AdapterCall { op, uri: uri.to_string() });
    }
}

impl VcsAdapter for FakeAdapter {
    fn locate(&self, name: &str) -> String {
        format!("mem://{name}")
    }

    fn exists(&self, uri: &str) -> Result<bool, VcsError> {
        let mut st = self.lock();
        Self::record(&mut st, "exists", uri);
        Ok(st.repos.contains_key(uri))
    }

    fn create(&self, uri: &str) -> Result<(), VcsError> {
        let mut st = self.lock();
        Self::record(&mut st, "create", uri);
        if st.failing.contains(uri) {
            return Err(VcsError::StorageFailure(format!("{uri} is not writable")));
        }
        if st.repos.contains_key(uri) {
            return Err(VcsError::RepoExists(uri.to_string()));
        }
        st.repos.insert(uri.to_string(), Repo::default());
        Ok(())
    }

    fn commit(&self, uri: &str, request: &CommitRequest<'_>) -> Result<RevisionId, VcsError> {
        check_changes(request.changes)?;
        let mut st = self.lock();
        Self::record(&mut st, "commit", uri);
        if st.failing.contains(uri) {
            return Err(VcsError::StorageFailure(format!("{uri} is not writable")));
        }
        let clock = st.clock;
        let repo = st
            .repos
            .get_mut(uri)
            .ok_or_else(|| VcsError::RepoMissing(uri.to_string()))?;
        let mut tree = repo.history.last().map(|(_, t)| t.clone()).unwrap_or_default();
        for change in request.changes {
            match change {
                FileChange::Write { path, contents } => {
                    tree.insert(path.clone(), contents.clone());
                }
                FileChange::Delete { path } => {
                    tree.remove(path);
                }
            }
        }
        let timestamp = match request.timestamp {
            Some(t) => t,
            None => {
                let next = repo.history.last().map(|(c, _)| c.timestamp.unix() + 1);
                Timestamp::from_unix(next.map_or(clock, |n| n.max(clock)))
            }
        };
        let digest = Sha256::digest(format!("{uri}#{}", repo.history.len()).as_bytes());
        let revision = RevisionId(hex::encode(&digest[..6]));
        repo.history.push((
            CommitRecord {
                revision: revision.clone(),
                author: request.author.to_string(),
                timestamp,
                message: request.message.to_string(),
            },
            tree,
        ));
        Ok(revision)
    }

    fn log(&self, uri: &str) -> Result<Vec<CommitRecord>, VcsError> {
        let mut st = self.lock();
        Self::record(&mut st, "log", uri);
        let repo = st.repos.get(uri).ok_or_else(|| VcsError::RepoMissing(uri.to_string()))?;
        Ok(repo.history.iter().map(|(c, _)| c.clone()).collect())
    }

    fn checkout(&self, uri: &str, revision: &RevisionId) -> Result<FileTree, VcsError> {
        let mut st = self.lock();
        Self::record(&mut st, "checkout", uri);
        let repo = st.repos.get(uri).ok_or_else(|| VcsError::RepoMissing(uri.to_string()))?;
        repo.history
            .iter()
            .find(|(c, _)| &c.revision == revision)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| VcsError::RevisionMissing {
                uri: uri.to_string(),
                rev: revision.to_string(),
            })
    }
}
