//! JUnit-style XML test reports.
//!
//! Accepted documents have a `<testsuite>` root (or a `<testsuites>` wrapper
//! around several of them) whose `<testcase>` children each carry at most one
//! of `<failure>`, `<error>` or `<skipped>`. The suite's `tests`, `failures`,
//! `errors` and `skipped` attributes must agree with its cases. Elements the
//! schema does not mention (`properties`, `system-out`, ...) are skipped.

use std::fmt;
use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Passed,
    Failed,
    Errored,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCaseResult {
    pub suite_name: String,
    pub case_name: String,
    pub outcome: Outcome,
    /// Assertion or exception text; always `None` for passed cases.
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestReport {
    pub total: u32,
    pub passed: u32,
    pub failed: u32,
    pub errored: u32,
    pub skipped: u32,
    pub cases: Vec<TestCaseResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed test report at {element}: {reason}")]
pub struct MalformedReport {
    /// The offending element, e.g. `testcase "CalcTest.add"`.
    pub element: String,
    pub reason: String,
}

fn malformed(element: impl Into<String>, reason: impl Into<String>) -> MalformedReport {
    MalformedReport {
        element: element.into(),
        reason: reason.into(),
    }
}

impl TestReport {
    pub fn from_cases(cases: Vec<TestCaseResult>) -> Self {
        let count = |o: Outcome| cases.iter().filter(|c| c.outcome == o).count() as u32;
        TestReport {
            total: cases.len() as u32,
            passed: count(Outcome::Passed),
            failed: count(Outcome::Failed),
            errored: count(Outcome::Errored),
            skipped: count(Outcome::Skipped),
            cases,
        }
    }

    /// Passed over total; 0 for an empty suite. Skipped cases count as not passed.
    pub fn pass_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            f64::from(self.passed) / f64::from(self.total)
        }
    }

    pub fn all_passed(&self) -> bool {
        self.total > 0 && self.passed == self.total
    }

    /// Checks the count identities.
    pub fn is_consistent(&self) -> bool {
        *self == TestReport::from_cases(self.cases.clone())
            && self
                .cases
                .iter()
                .all(|c| c.outcome != Outcome::Passed || c.message.is_none())
    }

    /// Renders the report as a single `<testsuite>` document.
    pub fn to_xml(&self, suite: &str) -> String {
        let esc = |s: &str| quick_xml::escape::escape(s).into_owned();
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<testsuite name=\"{}\" tests=\"{}\" failures=\"{}\" errors=\"{}\" skipped=\"{}\">",
            esc(suite),
            self.total,
            self.failed,
            self.errored,
            self.skipped
        );
        for case in &self.cases {
            let _ = write!(
                out,
                "  <testcase classname=\"{}\" name=\"{}\"",
                esc(&case.suite_name),
                esc(&case.case_name)
            );
            let child = match case.outcome {
                Outcome::Passed => None,
                Outcome::Failed => Some("failure"),
                Outcome::Errored => Some("error"),
                Outcome::Skipped => Some("skipped"),
            };
            match (child, &case.message) {
                (None, _) => out.push_str("/>\n"),
                (Some(tag), Some(msg)) => {
                    let _ = writeln!(out, "><{tag} message=\"{}\"/></testcase>", esc(msg));
                }
                (Some(tag), None) => {
                    let _ = writeln!(out, "><{tag}/></testcase>");
                }
            }
        }
        out.push_str("</testsuite>\n");
        out
    }
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} passed ({} failed, {} errors, {} skipped)",
            self.passed, self.total, self.failed, self.errored, self.skipped
        )
    }
}

fn local_name(e: &BytesStart<'_>) -> String {
    String::from_utf8_lossy(e.local_name().as_ref()).into_owned()
}

struct Attrs {
    element: String,
    pairs: Vec<(String, String)>,
}

impl Attrs {
    fn read(e: &BytesStart<'_>, element: &str) -> Result<Self, MalformedReport> {
        let mut pairs = Vec::new();
        for attr in e.attributes() {
            let attr = attr.map_err(|err| malformed(element, err.to_string()))?;
            let key = String::from_utf8_lossy(attr.key.local_name().as_ref()).into_owned();
            let value = attr
                .unescape_value()
                .map_err(|err| malformed(element, err.to_string()))?
                .into_owned();
            pairs.push((key, value));
        }
        Ok(Attrs {
            element: element.to_string(),
            pairs,
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn count(&self, key: &str) -> Result<Option<u32>, MalformedReport> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| malformed(&self.element, format!("attribute `{key}` is not a count: {v:?}"))),
        }
    }
}

/// Parses a test report and checks it against the accepted schema.
pub fn parse_test_report(xml_text: &str) -> Result<TestReport, MalformedReport> {
    let mut reader = Reader::from_str(xml_text);
    reader.config_mut().trim_text(true);
    let mut cases = Vec::new();
    let mut seen_root = false;
    loop {
        let event = reader
            .read_event()
            .map_err(|e| malformed("document", e.to_string()))?;
        match event {
            Event::Eof => break,
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Text(t) if t.iter().all(u8::is_ascii_whitespace) => {}
            Event::Start(e) | Event::Empty(e) if seen_root => {
                return Err(malformed(local_name(&e), "second root element"));
            }
            Event::Start(e) => {
                seen_root = true;
                match local_name(&e).as_str() {
                    "testsuite" => parse_suite(&mut reader, &e, false, &mut cases)?,
                    "testsuites" => parse_suites(&mut reader, &mut cases)?,
                    other => return Err(malformed(other, "expected <testsuite> root")),
                }
            }
            Event::Empty(e) => {
                seen_root = true;
                match local_name(&e).as_str() {
                    "testsuite" => parse_suite(&mut reader, &e, true, &mut cases)?,
                    "testsuites" => {}
                    other => return Err(malformed(other, "expected <testsuite> root")),
                }
            }
            _ => return Err(malformed("document", "content outside the root element")),
        }
    }
    if !seen_root {
        return Err(malformed("testsuite", "missing root element"));
    }
    Ok(TestReport::from_cases(cases))
}

fn parse_suites(reader: &mut Reader<&[u8]>, cases: &mut Vec<TestCaseResult>) -> Result<(), MalformedReport> {
    loop {
        match reader
            .read_event()
            .map_err(|e| malformed("testsuites", e.to_string()))?
        {
            Event::Start(e) if local_name(&e) == "testsuite" => parse_suite(reader, &e, false, cases)?,
            Event::Empty(e) if local_name(&e) == "testsuite" => parse_suite(reader, &e, true, cases)?,
            Event::Start(e) => skip(reader, &e)?,
            Event::End(_) => return Ok(()),
            Event::Eof => return Err(malformed("testsuites", "unterminated element")),
            _ => {}
        }
    }
}

fn skip(reader: &mut Reader<&[u8]>, e: &BytesStart<'_>) -> Result<(), MalformedReport> {
    let name = e.name().as_ref().to_vec();
    reader
        .read_to_end(quick_xml::name::QName(&name))
        .map(|_| ())
        .map_err(|err| malformed(local_name(e), err.to_string()))
}

fn parse_suite(
    reader: &mut Reader<&[u8]>,
    start: &BytesStart<'_>,
    empty: bool,
    cases: &mut Vec<TestCaseResult>,
) -> Result<(), MalformedReport> {
    let provisional = Attrs::read(start, "testsuite")?;
    let suite_name = provisional.get("name").unwrap_or("").to_string();
    let element = if suite_name.is_empty() {
        "testsuite".to_string()
    } else {
        format!("testsuite {suite_name:?}")
    };
    let attrs = Attrs { element: element.clone(), ..provisional };
    let tests = attrs
        .count("tests")?
        .ok_or_else(|| malformed(&element, "missing `tests` attribute"))?;
    let failures = attrs.count("failures")?;
    let errors = attrs.count("errors")?;
    let skipped = attrs.count("skipped")?;

    let mut own = Vec::new();
    if !empty {
        loop {
            match reader.read_event().map_err(|e| malformed(&element, e.to_string()))? {
                Event::Start(e) => match local_name(&e).as_str() {
                    "testcase" => own.push(parse_case(reader, &e, false, &suite_name)?),
                    "testsuite" => parse_suite(reader, &e, false, cases)?,
                    _ => skip(reader, &e)?,
                },
                Event::Empty(e) => match local_name(&e).as_str() {
                    "testcase" => own.push(parse_case(reader, &e, true, &suite_name)?),
                    "testsuite" => parse_suite(reader, &e, true, cases)?,
                    _ => {}
                },
                Event::End(_) => break,
                Event::Eof => return Err(malformed(&element, "unterminated element")),
                _ => {}
            }
        }
    }

    let summary = TestReport::from_cases(own);
    let checks = [
        ("tests", Some(tests), summary.total),
        ("failures", failures, summary.failed),
        ("errors", errors, summary.errored),
        ("skipped", skipped, summary.skipped),
    ];
    for (attr, declared, actual) in checks {
        if let Some(declared) = declared {
            if declared != actual {
                return Err(malformed(
                    &element,
                    format!("attribute `{attr}`=\"{declared}\" but {actual} matching <testcase> elements"),
                ));
            }
        }
    }
    cases.extend(summary.cases);
    Ok(())
}

fn parse_case(
    reader: &mut Reader<&[u8]>,
    start: &BytesStart<'_>,
    empty: bool,
    suite_name: &str,
) -> Result<TestCaseResult, MalformedReport> {
    let attrs = Attrs::read(start, "testcase")?;
    let case_name = attrs
        .get("name")
        .ok_or_else(|| malformed("testcase", "missing `name` attribute"))?
        .to_string();
    let classname = attrs.get("classname").unwrap_or(suite_name).to_string();
    let element = if classname.is_empty() {
        format!("testcase {case_name:?}")
    } else {
        format!("testcase \"{classname}.{case_name}\"")
    };

    let mut verdict: Option<(Outcome, Option<String>)> = None;
    if !empty {
        loop {
            match reader.read_event().map_err(|e| malformed(&element, e.to_string()))? {
                Event::Start(e) => {
                    if let Some(outcome) = outcome_of(&e) {
                        let attr_msg = Attrs::read(&e, &element)?.get("message").map(str::to_string);
                        let body = read_body(reader, &e, &element)?;
                        let message = attr_msg.or(body);
                        set_verdict(&mut verdict, outcome, message, &element)?;
                    } else {
                        skip(reader, &e)?;
                    }
                }
                Event::Empty(e) => {
                    if let Some(outcome) = outcome_of(&e) {
                        let message = Attrs::read(&e, &element)?.get("message").map(str::to_string);
                        set_verdict(&mut verdict, outcome, message, &element)?;
                    }
                }
                Event::End(_) => break,
                Event::Eof => return Err(malformed(&element, "unterminated element")),
                _ => {}
            }
        }
    }

    let (outcome, message) = verdict.unwrap_or((Outcome::Passed, None));
    Ok(TestCaseResult {
        suite_name: classname,
        case_name,
        outcome,
        message: if outcome == Outcome::Passed { None } else { message },
    })
}

fn outcome_of(e: &BytesStart<'_>) -> Option<Outcome> {
    match e.local_name().as_ref() {
        b"failure" => Some(Outcome::Failed),
        b"error" => Some(Outcome::Errored),
        b"skipped" => Some(Outcome::Skipped),
        _ => None,
    }
}

fn set_verdict(
    verdict: &mut Option<(Outcome, Option<String>)>,
    outcome: Outcome,
    message: Option<String>,
    element: &str,
) -> Result<(), MalformedReport> {
    if let Some((previous, _)) = verdict {
        return Err(malformed(
            element,
            format!("more than one outcome child ({previous:?} and {outcome:?})"),
        ));
    }
    *verdict = Some((outcome, message));
    Ok(())
}

/// Collects the text content of an outcome element, e.g. a stack trace.
fn read_body(
    reader: &mut Reader<&[u8]>,
    start: &BytesStart<'_>,
    element: &str,
) -> Result<Option<String>, MalformedReport> {
    let mut text = String::new();
    let mut depth = 0usize;
    loop {
        match reader.read_event().map_err(|e| malformed(element, e.to_string()))? {
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| malformed(element, e.to_string()))?;
                text.push_str(&s);
            }
            Event::CData(c) => text.push_str(&String::from_utf8_lossy(&c)),
            Event::Start(_) => depth += 1,
            Event::End(_) if depth == 0 => break,
            Event::End(_) => depth -= 1,
            Event::Eof => {
                return Err(malformed(
                    element,
                    format!("unterminated <{}>", local_name(start)),
                ))
            }
            _ => {}
        }
    }
    let text = text.trim();
    Ok(if text.is_empty() { None } else { Some(text.to_string()) })
}
