//! Pass/fail bookkeeping for the acceptance run.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Outcome of one numbered criterion.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {tag} [{:.1}s] {}: {}", self.id, self.seconds, self.name, self.detail)
    }
}

/// Runs `body`, turning a panic into a failing verdict.
pub fn evaluate(id: u32, name: &'static str, body: impl FnOnce() -> (bool, String)) -> Verdict {
    let start = Instant::now();
    let (pass, detail) = match catch_unwind(AssertUnwindSafe(body)) {
        Ok(r) => r,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (false, format!("panicked: {msg}"))
        }
    };
    Verdict { id, name, pass, detail, seconds: start.elapsed().as_secs_f64() }
}

/// Selected criteria from a comma-separated list such as `ACCEPTANCE_ONLY=1,8`.
pub fn selected(var: Option<String>) -> Option<Vec<u32>> {
    var.map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
}

/// Least-squares slope of `log2 err` against the refinement level.
pub fn convergence_order(errors: &[f64]) -> f64 {
    let n = errors.len() as f64;
    let xs: Vec<f64> = (0..errors.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    -sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_errors_is_first_order() {
        assert!((convergence_order(&[1.0, 0.5, 0.25]) - 1.0).abs() < 1e-12);
        assert!((convergence_order(&[1.0, 0.25, 0.0625]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn panics_become_failures() {
        let v = evaluate(3, "x", || panic!("boom"));
        assert!(!v.pass && v.detail.contains("boom"));
        assert!(v.to_string().starts_with("criterion  3 FAIL"));
    }

    #[test]
    fn selection_parses_lists() {
        assert_eq!(selected(Some("1, 8".into())), Some(vec![1, 8]));
        assert_eq!(selected(None), None);
    }
}
