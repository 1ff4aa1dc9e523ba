//! Text rendering of the learner matrix.

use crate::learn::directed::{learner_matrix, CellStatus, PhiObjective, ThetaObjective};

/// Grid of learner names, then one line per cell with its note or reason.
pub fn render() -> String {
    let cells = learner_matrix();
    let width = 20;
    let mut out = String::new();
    out.push_str(&format!("{:<width$}", "phi \\ theta"));
    for t in ThetaObjective::ALL {
        out.push_str(&format!(" | {:<12}", t.label()));
    }
    out.push('\n');
    for p in PhiObjective::ALL {
        out.push_str(&format!("{:<width$}", p.label()));
        for t in ThetaObjective::ALL {
            let tag = match cells.iter().find(|c| c.0 == p && c.1 == t).map(|c| &c.2) {
                Some(CellStatus::Supported { learner, .. }) => learner.to_string(),
                _ => "x".to_string(),
            };
            out.push_str(&format!(" | {tag:<12}"));
        }
        out.push('\n');
    }
    out.push('\n');
    for (p, t, status) in &cells {
        let line = match status {
            CellStatus::Supported { learner, note } => format!("supported: {learner} ({note})"),
            CellStatus::Unsupported { reason } => format!("unsupported: {reason}"),
        };
        out.push_str(&format!("({} theta, {} phi) {line}\n", t.label(), p.label()));
    }
    out
}
