//! Ordered log of data accesses within a run.
//!
//! Each cell logs when training starts and ends and when a task's test pairs are opened. The
//! run writes the trails to `audit.log` so that a reader (or [`check_test_isolation`]) can
//! confirm that no test partition was read before its models were final.

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditTrail {
    events: Vec<String>,
}

impl AuditTrail {
    pub fn record(&mut self, event: impl Into<String>) {
        self.events.push(event.into());
    }

    pub fn extend(&mut self, other: AuditTrail) {
        self.events.extend(other.events);
    }

    pub fn events(&self) -> &[String] {
        &self.events
    }
}

/// Checks one cell's trail: every `test-open` must follow a `train-end` with no training in
/// progress, and every `train-start` must be closed before the trail ends.
pub fn check_test_isolation(events: &[String]) -> CliResult<()> {
    let mut training = false;
    let mut trained = false;
    for (i, e) in events.iter().enumerate() {
        let kind = e.split_whitespace().next().unwrap_or_default();
        match kind {
            "train-start" => training = true,
            "train-end" => {
                training = false;
                trained = true;
            }
            "test-open" if training || !trained => {
                return Err(CliError::runtime(format!("event {i} reads test data before training finished: {e}")));
            }
            _ => {}
        }
    }
    if training {
        return Err(CliError::runtime("training never finished"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trail(events: &[&str]) -> Vec<String> {
        events.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn isolation_rules() {
        check_test_isolation(&trail(&["split", "train-start tasks=a", "train-end tasks=a", "test-open task=a"])).unwrap();
        assert!(check_test_isolation(&trail(&["test-open task=a", "train-start", "train-end"])).is_err());
        assert!(check_test_isolation(&trail(&["train-start", "test-open task=a", "train-end"])).is_err());
        assert!(check_test_isolation(&trail(&["train-start"])).is_err());
    }
}
