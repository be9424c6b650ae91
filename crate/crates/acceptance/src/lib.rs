//! A small runner for acceptance criteria. Each criterion is a function
//! returning a one-line measurement on success; panics count as failures.
//! Set `PKTSEER_CRITERIA=6,7` to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

pub type Check = fn() -> Result<String, String>;

pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub check: Check,
}

#[derive(Debug)]
pub struct Outcome {
    pub id: u32,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Criterion ids selected by `PKTSEER_CRITERIA`, or all when unset.
pub fn selected(all: &[Criterion]) -> Vec<u32> {
    match std::env::var("PKTSEER_CRITERIA") {
        Ok(list) if !list.trim().is_empty() => list
            .split(',')
            .filter_map(|s| s.trim().parse().ok())
            .collect(),
        _ => all.iter().map(|c| c.id).collect(),
    }
}

/// Runs the selected criteria in order, printing one line each.
pub fn run_all(criteria: &[Criterion]) -> Vec<Outcome> {
    let wanted = selected(criteria);
    let mut out = Vec::new();
    for c in criteria.iter().filter(|c| wanted.contains(&c.id)) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| Err(panic_message(p.as_ref())));
        let seconds = start.elapsed().as_secs_f64();
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        println!(
            "criterion {}: {} {} ({detail}; {seconds:.1} s)",
            c.id,
            if passed { "PASS" } else { "FAIL" },
            c.title
        );
        out.push(Outcome {
            id: c.id,
            passed,
            detail,
            seconds,
        });
    }
    out
}
