//! Commit-process compliance.
//!
//! With `r` requirement sections the recommended workflow is one commit per
//! section plus one from home, so `r + 1` student commits or more counts as
//! compliant. A repository without student commits is untouched; exactly one
//! commit marks a dropout. Percentages are taken over touched repositories.

use std::collections::BTreeMap;

use crate::model::StudentId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudentActivity {
    pub student: StudentId,
    /// Commits by the student; the teacher's seed commit is not included.
    pub student_commit_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComplianceClass {
    Untouched,
    Dropout,
    Intermediate,
    Compliant,
}

pub fn classify_student(activity: &StudentActivity, requirement_sections: u32) -> ComplianceClass {
    classify_count(activity.student_commit_count, requirement_sections)
}

fn classify_count(count: u32, r: u32) -> ComplianceClass {
    match count {
        0 => ComplianceClass::Untouched,
        1 => ComplianceClass::Dropout,
        c if c > r => ComplianceClass::Compliant,
        _ => ComplianceClass::Intermediate,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceSummary {
    pub booked: u32,
    pub untouched: u32,
    pub touched: u32,
    pub dropouts: u32,
    pub compliant: u32,
    pub dropout_pct: f64,
    pub compliant_pct: f64,
    /// Commit count to number of touched students.
    pub histogram: BTreeMap<u32, u32>,
    /// `None` for aggregates over sessions with different `r`.
    pub requirement_sections: Option<u32>,
}

fn pct(count: u32, of: u32) -> f64 {
    if of == 0 {
        0.0
    } else {
        f64::from(count) * 100.0 / f64::from(of)
    }
}

/// `count / of` as a percentage rounded half-up to one decimal, in integer
/// arithmetic so that ties are decided exactly.
pub fn percent_one_decimal(count: u32, of: u32) -> String {
    if of == 0 {
        return "0.0".to_string();
    }
    let (count, of) = (u64::from(count), u64::from(of));
    let tenths = (count * 2000 + of) / (2 * of);
    format!("{}.{}", tenths / 10, tenths % 10)
}

pub fn compliance_stats(activities: &[StudentActivity], requirement_sections: u32) -> ComplianceSummary {
    let mut histogram = BTreeMap::new();
    let (mut untouched, mut dropouts, mut compliant) = (0, 0, 0);
    for a in activities {
        match classify_student(a, requirement_sections) {
            ComplianceClass::Untouched => untouched += 1,
            ComplianceClass::Dropout => dropouts += 1,
            ComplianceClass::Compliant => compliant += 1,
            ComplianceClass::Intermediate => {}
        }
        if a.student_commit_count > 0 {
            *histogram.entry(a.student_commit_count).or_insert(0) += 1;
        }
    }
    let booked = activities.len() as u32;
    let touched = booked - untouched;
    ComplianceSummary {
        booked,
        untouched,
        touched,
        dropouts,
        compliant,
        dropout_pct: pct(dropouts, touched),
        compliant_pct: pct(compliant, touched),
        histogram,
        requirement_sections: Some(requirement_sections),
    }
}

impl ComplianceSummary {
    pub fn untouched_pct(&self) -> f64 {
        pct(self.untouched, self.booked)
    }

    pub fn untouched_pct_display(&self) -> String {
        percent_one_decimal(self.untouched, self.booked)
    }

    pub fn dropout_pct_display(&self) -> String {
        percent_one_decimal(self.dropouts, self.touched)
    }

    pub fn compliant_pct_display(&self) -> String {
        percent_one_decimal(self.compliant, self.touched)
    }

    /// Recomputes counts from the histogram and checks them against the
    /// reported ones.
    pub fn is_consistent(&self) -> bool {
        let hist_total: u32 = self.histogram.values().sum();
        let from_hist_dropouts = self.histogram.get(&1).copied().unwrap_or(0);
        let counts_ok = self.booked == self.untouched + self.touched
            && hist_total == self.touched
            && from_hist_dropouts == self.dropouts
            && (0.0..=100.0).contains(&self.dropout_pct)
            && (0.0..=100.0).contains(&self.compliant_pct)
            && self.dropout_pct == pct(self.dropouts, self.touched)
            && self.compliant_pct == pct(self.compliant, self.touched);
        let compliant_ok = match self.requirement_sections {
            Some(r) => self.histogram.range(r + 1..).map(|(_, n)| n).sum::<u32>() == self.compliant,
            None => true,
        };
        counts_ok && compliant_ok
    }

    /// Sums raw counts across sessions; percentages are recomputed, never averaged.
    pub fn aggregate<'a>(summaries: impl IntoIterator<Item = &'a ComplianceSummary>) -> ComplianceSummary {
        let mut all = ComplianceSummary {
            booked: 0,
            untouched: 0,
            touched: 0,
            dropouts: 0,
            compliant: 0,
            dropout_pct: 0.0,
            compliant_pct: 0.0,
            histogram: BTreeMap::new(),
            requirement_sections: None,
        };
        let mut rs = Vec::new();
        for s in summaries {
            all.booked += s.booked;
            all.untouched += s.untouched;
            all.touched += s.touched;
            all.dropouts += s.dropouts;
            all.compliant += s.compliant;
            for (c, n) in &s.histogram {
                *all.histogram.entry(*c).or_insert(0) += n;
            }
            rs.push(s.requirement_sections);
        }
        rs.dedup();
        if let [Some(r)] = rs.as_slice() {
            all.requirement_sections = Some(*r);
        }
        all.dropout_pct = pct(all.dropouts, all.touched);
        all.compliant_pct = pct(all.compliant, all.touched);
        all
    }
}

/// `commit_count,students` rows in ascending commit count.
pub fn commit_histogram_csv(summary: &ComplianceSummary) -> String {
    let mut out = String::from("commit_count,students\n");
    for (count, students) in &summary.histogram {
        out.push_str(&format!("{count},{students}\n"));
    }
    out
}

/// Per-session rows `session,students,dropout_pct,compliant_pct` plus an
/// `All` row aggregated from raw counts. `students` is the touched count.
pub fn compliance_table_csv(sessions: &[(String, ComplianceSummary)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["session", "students", "dropout_pct", "compliant_pct"])
        .expect("in-memory write");
    let mut row = |name: &str, s: &ComplianceSummary| {
        w.write_record([
            name.to_string(),
            s.touched.to_string(),
            s.dropout_pct_display(),
            s.compliant_pct_display(),
        ])
        .expect("in-memory write");
    };
    for (name, s) in sessions {
        row(name, s);
    }
    let all = ComplianceSummary::aggregate(sessions.iter().map(|(_, s)| s));
    row("All", &all);
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
