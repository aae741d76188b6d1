//! Code churn between two project snapshots: the number of added plus
//! modified lines.
//!
//! A modified line shows up in a minimal line diff as one deletion paired with
//! one insertion, so the inserted-line count of the diff counts every added
//! line and every modified line exactly once while ignoring pure deletions.

use std::collections::{BTreeMap, BTreeSet};

use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;

use crate::diff::{compute_line_diff, split_lines, LineDiff};
use crate::model::DEFAULT_IGNORE_GLOBS;
use crate::vcs::FileTree;

/// Only this many leading bytes are inspected for NUL when sniffing binaries.
pub const BINARY_SNIFF_LEN: usize = 8000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChurnResult {
    pub per_file: BTreeMap<String, u64>,
    pub total: u64,
}

impl ChurnResult {
    pub fn from_per_file(per_file: BTreeMap<String, u64>) -> Self {
        let total = per_file.values().sum();
        ChurnResult { per_file, total }
    }

    /// Renders `path,churn` rows followed by a `TOTAL,<M>` row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["path", "churn"]).expect("in-memory write");
        for (path, churn) in &self.per_file {
            w.write_record([path.as_str(), &churn.to_string()]).expect("in-memory write");
        }
        w.write_record(["TOTAL", &self.total.to_string()]).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 input")
    }
}

/// Paths excluded from churn.
#[derive(Debug, Clone)]
pub struct IgnoreSet {
    set: GlobSet,
}

impl IgnoreSet {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, globset::Error> {
        let mut builder = GlobSetBuilder::new();
        for p in patterns {
            builder.add(Glob::new(p.as_ref())?);
        }
        Ok(IgnoreSet { set: builder.build()? })
    }

    pub fn empty() -> Self {
        IgnoreSet { set: GlobSet::empty() }
    }

    pub fn matches(&self, path: &str) -> bool {
        self.set.is_match(path)
    }
}

impl Default for IgnoreSet {
    fn default() -> Self {
        IgnoreSet::new(DEFAULT_IGNORE_GLOBS).expect("default globs are valid")
    }
}

pub fn is_binary(bytes: &[u8]) -> bool {
    bytes[..bytes.len().min(BINARY_SNIFF_LEN)].contains(&0)
}

/// Churn contributed by one file's diff: its inserted lines.
pub fn compute_file_churn<T: Clone>(diff: &LineDiff<T>) -> u64 {
    diff.inserted() as u64
}

/// Churn of a single text file going from `before` to `after`. A missing
/// `before` counts every line of `after`; a missing `after` counts nothing.
pub fn text_file_churn(before: Option<&[u8]>, after: Option<&[u8]>) -> u64 {
    let after = match after {
        Some(a) => a,
        None => return 0,
    };
    let source = before.map(split_lines).unwrap_or_default();
    let target = split_lines(after);
    compute_file_churn(&compute_line_diff(&source, &target))
}

/// Per-file and total churn from `before` to `after`, pairing files by path.
///
/// Binary files (in either snapshot) and ignored paths are left out. A file
/// deleted in `after` is listed with churn 0; a renamed file counts as a
/// deletion plus an addition.
pub fn compute_project_churn(before: &FileTree, after: &FileTree, ignore: &IgnoreSet) -> ChurnResult {
    let paths: BTreeSet<&String> = before.keys().chain(after.keys()).collect();
    let per_file: BTreeMap<String, u64> = paths
        .into_par_iter()
        .filter(|path| !ignore.matches(path))
        .filter_map(|path| {
            let old = before.get(path).map(Vec::as_slice);
            let new = after.get(path).map(Vec::as_slice);
            if old.is_some_and(is_binary) || new.is_some_and(is_binary) {
                return None;
            }
            Some((path.clone(), text_file_churn(old, new)))
        })
        .collect();
    ChurnResult::from_per_file(per_file)
}
