//! Pass/fail bookkeeping for the acceptance run in `tests/acceptance.rs`.

use std::time::Duration;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Runs `check` and prints its line, timing it and failing it when it exceeds `budget`.
pub fn run(id: u32, budget: Option<Duration>, check: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = std::time::Instant::now();
    let (mut passed, mut detail) = check();
    let elapsed = start.elapsed();
    if let Some(b) = budget {
        if elapsed > b {
            passed = false;
            detail.push_str(&format!("; over the {:.0} s budget", b.as_secs_f64()));
        }
    }
    let o = Outcome { id, passed, detail, elapsed };
    println!("{}", o.line());
    o
}

/// Prints the tally and returns the process exit code.
pub fn summarize(outcomes: &[Outcome]) -> i32 {
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    i32::from(failed > 0)
}
