//! Minimal line diffs.
//!
//! Uses the linear-space variant of Myers' O(ND) shortest-edit-script
//! algorithm: find the middle snake of an optimal path, then recurse on the
//! two halves on either side of it.

use std::collections::HashMap;
use std::hash::Hash;

/// One contiguous change: `deleted` source lines starting at `old_start` are
/// replaced by `added`, which lands at `new_start` in the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk<T> {
    pub old_start: usize,
    pub deleted: usize,
    pub new_start: usize,
    pub added: Vec<T>,
}

impl<T> Hunk<T> {
    pub fn inserted(&self) -> usize {
        self.added.len()
    }
}

/// Edit script between two line sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiff<T> {
    pub hunks: Vec<Hunk<T>>,
}

impl<T: Clone> LineDiff<T> {
    pub fn is_empty(&self) -> bool {
        self.hunks.is_empty()
    }

    pub fn deleted(&self) -> usize {
        self.hunks.iter().map(|h| h.deleted).sum()
    }

    pub fn inserted(&self) -> usize {
        self.hunks.iter().map(Hunk::inserted).sum()
    }

    /// Number of deleted plus inserted lines.
    pub fn cost(&self) -> usize {
        self.deleted() + self.inserted()
    }

    /// Replays the script over `source`. Returns `None` if the script does not
    /// fit the source (hunks out of order or out of range).
    pub fn apply(&self, source: &[T]) -> Option<Vec<T>> {
        let mut out = Vec::with_capacity(source.len() + self.inserted());
        let mut cursor = 0;
        for hunk in &self.hunks {
            if hunk.old_start < cursor || hunk.old_start + hunk.deleted > source.len() {
                return None;
            }
            out.extend_from_slice(&source[cursor..hunk.old_start]);
            if out.len() != hunk.new_start {
                return None;
            }
            out.extend_from_slice(&hunk.added);
            cursor = hunk.old_start + hunk.deleted;
        }
        out.extend_from_slice(&source[cursor..]);
        Some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Equal,
    Delete,
    Insert,
}

/// Computes a minimal edit script turning `source` into `target`.
pub fn compute_line_diff<T: Hash + Eq + Clone>(source: &[T], target: &[T]) -> LineDiff<T> {
    // Intern lines so the inner loops compare integers.
    let mut ids: HashMap<&T, u32> = HashMap::new();
    let a = intern(&mut ids, source);
    let b = intern(&mut ids, target);

    let mut ops = Vec::with_capacity(a.len() + b.len());
    diff_range(&a, &b, &mut ops);
    build_hunks(&ops, target)
}

fn intern<'a, T: Hash + Eq>(ids: &mut HashMap<&'a T, u32>, lines: &'a [T]) -> Vec<u32> {
    lines
        .iter()
        .map(|line| {
            let next = ids.len() as u32;
            *ids.entry(line).or_insert(next)
        })
        .collect()
}

fn build_hunks<T: Clone>(ops: &[Op], target: &[T]) -> LineDiff<T> {
    let mut hunks = Vec::new();
    let (mut x, mut y) = (0usize, 0usize);
    let mut i = 0;
    while i < ops.len() {
        if ops[i] == Op::Equal {
            x += 1;
            y += 1;
            i += 1;
            continue;
        }
        let (old_start, new_start) = (x, y);
        while i < ops.len() && ops[i] != Op::Equal {
            match ops[i] {
                Op::Delete => x += 1,
                Op::Insert => y += 1,
                Op::Equal => unreachable!(),
            }
            i += 1;
        }
        hunks.push(Hunk {
            old_start,
            deleted: x - old_start,
            new_start,
            added: target[new_start..y].to_vec(),
        });
    }
    LineDiff { hunks }
}

fn diff_range(a: &[u32], b: &[u32], ops: &mut Vec<Op>) {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a_rest, b_rest) = (&a[prefix..], &b[prefix..]);
    let suffix = a_rest
        .iter()
        .rev()
        .zip(b_rest.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let a_mid = &a_rest[..a_rest.len() - suffix];
    let b_mid = &b_rest[..b_rest.len() - suffix];

    ops.extend(std::iter::repeat_n(Op::Equal, prefix));
    if a_mid.is_empty() {
        ops.extend(std::iter::repeat_n(Op::Insert, b_mid.len()));
    } else if b_mid.is_empty() {
        ops.extend(std::iter::repeat_n(Op::Delete, a_mid.len()));
    } else {
        let snake = middle_snake(a_mid, b_mid);
        diff_range(&a_mid[..snake.x_start], &b_mid[..snake.y_start], ops);
        ops.extend(std::iter::repeat_n(Op::Equal, snake.x_end - snake.x_start));
        diff_range(&a_mid[snake.x_end..], &b_mid[snake.y_end..], ops);
    }
    ops.extend(std::iter::repeat_n(Op::Equal, suffix));
}

#[derive(Debug, Clone, Copy)]
struct Snake {
    x_start: usize,
    y_start: usize,
    x_end: usize,
    y_end: usize,
}

/// Furthest-reaching x per diagonal, indexable by negative diagonals.
struct Frontier {
    offset: isize,
    v: Vec<usize>,
}

impl Frontier {
    fn new(max_d: usize) -> Self {
        Frontier {
            offset: max_d as isize + 1,
            v: vec![0; 2 * max_d + 3],
        }
    }

    fn get(&self, k: isize) -> usize {
        self.v[(k + self.offset) as usize]
    }

    fn set(&mut self, k: isize, x: usize) {
        self.v[(k + self.offset) as usize] = x;
    }
}

/// Finds a snake lying on some shortest edit path, searching from both ends
/// at once. Both inputs are non-empty.
fn middle_snake(a: &[u32], b: &[u32]) -> Snake {
    let n = a.len();
    let m = b.len();
    let delta = n as isize - m as isize;
    let odd = delta.rem_euclid(2) == 1;
    let max_d = (n + m).div_ceil(2);
    let mut fwd = Frontier::new(max_d);
    let mut rev = Frontier::new(max_d);

    for d in 0..=max_d as isize {
        let mut k = -d;
        while k <= d {
            let mut x = if k == -d || (k != d && fwd.get(k - 1) < fwd.get(k + 1)) {
                fwd.get(k + 1)
            } else {
                fwd.get(k - 1) + 1
            };
            let mut y = (x as isize - k) as usize;
            let (x0, y0) = (x, y);
            while x < n && y < m && a[x] == b[y] {
                x += 1;
                y += 1;
            }
            fwd.set(k, x);
            // The reverse search has completed d - 1 steps.
            let kr = delta - k;
            if odd && (-(d - 1)..=d - 1).contains(&kr) && x + rev.get(kr) >= n {
                return Snake {
                    x_start: x0,
                    y_start: y0,
                    x_end: x,
                    y_end: y,
                };
            }
            k += 2;
        }

        let mut k = -d;
        while k <= d {
            let mut x = if k == -d || (k != d && rev.get(k - 1) < rev.get(k + 1)) {
                rev.get(k + 1)
            } else {
                rev.get(k - 1) + 1
            };
            let mut y = (x as isize - k) as usize;
            let (x0, y0) = (x, y);
            while x < n && y < m && a[n - x - 1] == b[m - y - 1] {
                x += 1;
                y += 1;
            }
            rev.set(k, x);
            let kf = delta - k;
            if !odd && (-d..=d).contains(&kf) && x + fwd.get(kf) >= n {
                return Snake {
                    x_start: n - x,
                    y_start: m - y,
                    x_end: n - x0,
                    y_end: m - y0,
                };
            }
            k += 2;
        }
    }
    unreachable!("a shortest edit path always exists within (n + m) / 2 rounds")
}

/// Splits text into lines. CRLF and LF terminate lines alike; a missing
/// terminator on the last line is not a difference.
pub fn split_lines(text: &[u8]) -> Vec<&[u8]> {
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix(b"\n").unwrap_or(text);
    body.split(|&c| c == b'\n')
        .map(|line| line.strip_suffix(b"\r").unwrap_or(line))
        .collect()
}
