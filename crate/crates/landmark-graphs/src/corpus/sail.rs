//! Mapping from SAIL-style action annotations to the nine-action set.

use super::{Action, ActionSeq, CorpusError};

/// One SAIL action: a name plus an optional integer argument
/// (only `travel` takes one).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SailStep {
    pub name: String,
    pub steps: Option<i64>,
}

impl SailStep {
    pub fn new(name: &str, steps: Option<i64>) -> SailStep {
        SailStep {
            name: name.to_string(),
            steps,
        }
    }
}

/// Expand SAIL actions: `travel(n)` becomes `n` forward actions,
/// `turn_left`/`turn_right` become left/right, `null` becomes stand.
/// A terminal STOP is appended.
pub fn map_sail_actions(sail: &[SailStep]) -> Result<ActionSeq, CorpusError> {
    let mut out = Vec::new();
    for step in sail {
        match step.name.as_str() {
            "travel" => {
                let n = step.steps.unwrap_or(1);
                if n <= 0 {
                    return Err(CorpusError::Sail(format!(
                        "travel takes a positive step count, got {n}"
                    )));
                }
                out.extend(std::iter::repeat_n(Action::Forward, n as usize));
            }
            "turn_left" => out.push(Action::Left),
            "turn_right" => out.push(Action::Right),
            "null" => out.push(Action::Stand),
            other => {
                return Err(CorpusError::Sail(format!("unknown SAIL action {other:?}")));
            }
        }
    }
    out.push(Action::Stop);
    ActionSeq::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Action::*;

    #[test]
    fn travel_expands_to_forwards() {
        let seq = map_sail_actions(&[SailStep::new("travel", Some(3))]).unwrap();
        assert_eq!(seq.actions(), [Forward, Forward, Forward, Stop]);
    }

    #[test]
    fn null_becomes_stand() {
        let seq = map_sail_actions(&[SailStep::new("null", None)]).unwrap();
        assert_eq!(seq.actions(), [Stand, Stop]);
    }

    #[test]
    fn composition() {
        let seq = map_sail_actions(&[
            SailStep::new("turn_left", None),
            SailStep::new("travel", Some(1)),
        ])
        .unwrap();
        assert_eq!(seq.actions(), [Left, Forward, Stop]);
    }

    #[test]
    fn non_positive_travel_rejected() {
        assert!(map_sail_actions(&[SailStep::new("travel", Some(0))]).is_err());
        assert!(map_sail_actions(&[SailStep::new("travel", Some(-2))]).is_err());
    }

    #[test]
    fn output_length_is_one_plus_expanded() {
        let steps = [
            SailStep::new("travel", Some(4)),
            SailStep::new("turn_right", None),
            SailStep::new("travel", Some(2)),
        ];
        let seq = map_sail_actions(&steps).unwrap();
        assert_eq!(seq.len(), 1 + 4 + 1 + 2);
    }
}
