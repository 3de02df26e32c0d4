//! Reporting helpers for the acceptance harness.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

/// One judged sub-check of a criterion.
#[derive(Clone, Debug)]
pub struct Check {
    pub label: String,
    pub ok: bool,
    pub detail: String,
}

/// Collects the checks of one criterion and times it.
#[derive(Debug)]
pub struct Criterion {
    pub id: u32,
    pub title: String,
    pub budget: Option<Duration>,
    pub checks: Vec<Check>,
    started: Instant,
    elapsed: Option<Duration>,
}

impl Criterion {
    pub fn start(id: u32, title: &str, budget: Option<Duration>) -> Self {
        println!("\n[criterion {id}] {title}");
        Self { id, title: title.to_string(), budget, checks: Vec::new(), started: Instant::now(), elapsed: None }
    }

    pub fn check(&mut self, label: impl Into<String>, ok: bool, detail: impl Into<String>) -> bool {
        let c = Check { label: label.into(), ok, detail: detail.into() };
        println!("    {} {}: {}", if ok { "ok  " } else { "FAIL" }, c.label, c.detail);
        self.checks.push(c);
        ok
    }

    /// Free-form diagnostics that are not judged.
    pub fn note(&self, text: impl AsRef<str>) {
        println!("    .... {}", text.as_ref());
    }

    /// Stops the clock and judges the runtime budget, if any.
    pub fn finish(mut self) -> Self {
        let e = self.started.elapsed();
        self.elapsed = Some(e);
        if let Some(b) = self.budget {
            self.check("runtime", e <= b, format!("{:.1} s (budget {:.0} s)", e.as_secs_f64(), b.as_secs_f64()));
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn elapsed(&self) -> Duration {
        self.elapsed.unwrap_or_else(|| self.started.elapsed())
    }

    /// The one-line verdict.
    pub fn verdict(&self) -> String {
        let mut s = String::new();
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.ok).map(|c| c.label.as_str()).collect();
        write!(s, "{} criterion {:>2}: {} ({:.1} s)", if self.passed() { "PASS" } else { "FAIL" }, self.id, self.title, self.elapsed().as_secs_f64()).unwrap();
        if !failed.is_empty() {
            write!(s, " [failed: {}]", failed.join("; ")).unwrap();
        }
        s
    }
}

/// Criteria selected by command-line arguments such as `3 c5 7`; all when
/// none are given.
pub fn selected(args: &[String], all: u32) -> Vec<u32> {
    let picked: Vec<u32> = args
        .iter()
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.trim_start_matches(['c', 'C']).parse().ok())
        .filter(|&i| (1..=all).contains(&i))
        .collect();
    if picked.is_empty() {
        (1..=all).collect()
    } else {
        picked
    }
}
