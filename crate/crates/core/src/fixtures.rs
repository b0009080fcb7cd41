//! Small named instances used by tests, the acceptance run and the CLI.

use std::sync::Arc;

use crate::mechanism::{FnMechanism, Mechanism};
use crate::model::{Allocation, Constraint};
use crate::preferences::Profile;

/// Two agents, no constraint: agent 0 gets her top and agent 1 gets agent
/// 0's second choice. Strategy-proof but bossy.
pub fn bossy(m: usize) -> impl Mechanism {
    let c = Arc::new(Constraint::full(2, m).expect("m >= 1"));
    FnMechanism::new(c, |p: &Profile| {
        Allocation(vec![p.0[0].best(), p.0[0].top(2).expect("at least two objects")])
    })
}

/// A two-agent constraint on eight objects with `R_1 = {3}`,
/// `R_2 = {3, 5}` and three blocks, one of them the four cells
/// `(1,0), (1,2), (5,2), (5,7)`.
pub fn eight_object_pair() -> Constraint {
    let blocked = [(1, 0), (1, 2), (5, 2), (5, 7), (0, 1), (2, 4), (7, 4)];
    Constraint::from_predicate(2, 8, |a| {
        a[0] != 3 && a[1] != 3 && a[1] != 5 && !blocked.contains(&(a[0], a[1]))
    })
    .expect("constraint is nonempty")
}
