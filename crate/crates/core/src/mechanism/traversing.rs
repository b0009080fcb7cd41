use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{AgentId, Allocation, Constraint};
use crate::preferences::Profile;

use super::{tabulate_codes, Mechanism, TabulatedMechanism, DEFAULT_TABULATION_BUDGET};

/// `alpha`: the agents who must compromise at each allocation.
///
/// Stored as one agent bitmask per allocation code, so at most 64 agents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompromiserAssignment {
    n: usize,
    m: usize,
    masks: Vec<u64>,
}

impl CompromiserAssignment {
    /// Checks that `alpha` is nonempty exactly on the infeasible allocations.
    pub fn from_fn(c: &Constraint, alpha: impl Fn(&Allocation) -> Vec<AgentId>) -> Result<Self> {
        if c.n() > 64 {
            return Err(Error::arg("compromiser assignments support at most 64 agents"));
        }
        let mut masks = vec![0u64; c.space()];
        for (code, mask) in masks.iter_mut().enumerate() {
            let a = c.decode(code as u32);
            for agent in alpha(&a) {
                if agent.0 >= c.n() {
                    return Err(Error::arg(format!("agent {agent} out of range at {a}")));
                }
                *mask |= 1 << agent.0;
            }
            let feasible = c.contains_code(code as u32);
            if feasible && *mask != 0 {
                return Err(Error::Validation(format!("feasible allocation {a} has compromisers")));
            }
            if !feasible && *mask == 0 {
                return Err(Error::Validation(format!("infeasible allocation {a} has no compromiser")));
            }
        }
        Ok(CompromiserAssignment {
            n: c.n(),
            m: c.m(),
            masks,
        })
    }

    /// Explicit entries for every infeasible allocation.
    pub fn from_entries(c: &Constraint, entries: impl IntoIterator<Item = (Allocation, Vec<AgentId>)>) -> Result<Self> {
        let mut table: Vec<Option<Vec<AgentId>>> = vec![None; c.space()];
        for (a, agents) in entries {
            if a.n() != c.n() || a.0.iter().any(|x| x.0 >= c.m()) {
                return Err(Error::arg(format!("allocation {a} does not fit the constraint")));
            }
            table[c.encode(&a.0) as usize] = Some(agents);
        }
        Self::from_fn(c, |a| table[c.encode(&a.0) as usize].clone().unwrap_or_default())
    }

    pub fn get(&self, a: &Allocation) -> Vec<AgentId> {
        let code = a.0.iter().fold(0usize, |acc, x| acc * self.m + x.0);
        Self::agents(self.masks[code])
    }

    #[inline]
    pub fn mask(&self, code: u32) -> u64 {
        self.masks[code as usize]
    }

    fn agents(mask: u64) -> Vec<AgentId> {
        (0..64).filter(|i| mask >> i & 1 == 1).map(AgentId).collect()
    }

    /// Infeasible allocation codes with their compromisers, ascending.
    pub fn entries(&self) -> impl Iterator<Item = (u32, Vec<AgentId>)> + '_ {
        self.masks
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0)
            .map(|(c, &m)| (c as u32, Self::agents(m)))
    }

    /// Checks the two conditions that make the traversal group
    /// strategy-proof and efficient on a single-compromising constraint: at
    /// most one compromiser everywhere, and a sole compromiser stays the
    /// compromiser at every infeasible allocation reached by changing only
    /// her own object.
    pub fn validate_for(&self, c: &Constraint) -> Result<()> {
        if c.n() != self.n || c.m() != self.m {
            return Err(Error::arg("compromiser assignment built for another shape"));
        }
        if !c.is_single_compromising() {
            return Err(Error::Validation("constraint is not single-compromising".into()));
        }
        for (code, &mask) in self.masks.iter().enumerate() {
            if mask.count_ones() > 1 {
                return Err(Error::Validation(format!(
                    "allocation {} has {} compromisers",
                    c.decode(code as u32),
                    mask.count_ones()
                )));
            }
            if mask == 0 {
                continue;
            }
            let i = mask.trailing_zeros() as usize;
            let w = c.weights()[i];
            let base = code as u32 - c.digit(code as u32, i) as u32 * w;
            for x in 0..self.m as u32 {
                let other = base + x * w;
                if !c.contains_code(other) && self.masks[other as usize] != mask {
                    return Err(Error::Validation(format!(
                        "agent {i} compromises at {} but not at {}",
                        c.decode(code as u32),
                        c.decode(other)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Runs the traversal: start from everyone's top choice and, while
/// infeasible, move each compromiser one step down her list. `None` if a
/// compromiser runs out of objects.
pub fn traverse(c: &Constraint, alpha: &CompromiserAssignment, profile: &Profile) -> Option<Allocation> {
    let n = c.n();
    let mut pos = vec![0usize; n];
    let mut code: u32 = (0..n).map(|i| profile.0[i].order()[0].0 as u32 * c.weights()[i]).sum();
    loop {
        if c.contains_code(code) {
            return Some(c.decode(code));
        }
        let mask = alpha.mask(code);
        if mask == 0 {
            return None;
        }
        for j in (0..n).filter(|j| mask >> j & 1 == 1) {
            let order = profile.0[j].order();
            if pos[j] + 1 >= order.len() {
                return None;
            }
            let w = c.weights()[j];
            code -= order[pos[j]].0 as u32 * w;
            pos[j] += 1;
            code += order[pos[j]].0 as u32 * w;
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConstraintTraversing {
    constraint: Arc<Constraint>,
    alpha: CompromiserAssignment,
}

impl ConstraintTraversing {
    /// Requires a single-compromising constraint and an assignment passing
    /// [`CompromiserAssignment::validate_for`].
    pub fn new(constraint: Arc<Constraint>, alpha: CompromiserAssignment) -> Result<Self> {
        alpha.validate_for(&constraint)?;
        Ok(ConstraintTraversing { constraint, alpha })
    }

    /// No structural checks; the traversal may be undefined at some profiles.
    pub fn new_unchecked(constraint: Arc<Constraint>, alpha: CompromiserAssignment) -> Result<Self> {
        if constraint.n() != alpha.n || constraint.m() != alpha.m {
            return Err(Error::arg("compromiser assignment built for another shape"));
        }
        Ok(ConstraintTraversing { constraint, alpha })
    }

    pub fn alpha(&self) -> &CompromiserAssignment {
        &self.alpha
    }

    pub fn try_assign(&self, profile: &Profile) -> Option<Allocation> {
        traverse(&self.constraint, &self.alpha, profile)
    }

    /// Tabulates, or `None` if the traversal is undefined at some profile.
    pub fn try_tabulate(&self) -> Result<Option<TabulatedMechanism>> {
        let Some(table) = tabulate_codes(&self.constraint, DEFAULT_TABULATION_BUDGET, |p| self.try_assign(p))? else {
            return Ok(None);
        };
        TabulatedMechanism::from_table(self.constraint.clone(), table).map(Some)
    }
}

impl Mechanism for ConstraintTraversing {
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        self.try_assign(profile)
            .expect("traversal exhausted a preference list; the assignment was not validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BuiltinKind;
    use crate::preferences::Preference;

    fn comp_diag() -> Arc<Constraint> {
        Arc::new(Constraint::builtin(BuiltinKind::ComplementDiagonal, 3, 2).unwrap())
    }

    fn agent0_everywhere(c: &Constraint) -> CompromiserAssignment {
        CompromiserAssignment::from_fn(c, |a| if c.contains(a) { vec![] } else { vec![AgentId(0)] }).unwrap()
    }

    #[test]
    fn all_top_zero_moves_agent_zero() {
        let c = comp_diag();
        let f = ConstraintTraversing::new(c.clone(), agent0_everywhere(&c)).unwrap();
        let p = Profile(vec![Preference::new(vec![0, 1]).unwrap(); 3]);
        assert_eq!(f.assign(&p), Allocation::from_indices(&[1, 0, 0]));
        let q = Profile(vec![
            Preference::new(vec![0, 1]).unwrap(),
            Preference::new(vec![1, 0]).unwrap(),
            Preference::new(vec![0, 1]).unwrap(),
        ]);
        assert_eq!(f.assign(&q), Allocation::from_indices(&[0, 1, 0]));
    }

    #[test]
    fn two_compromisers_rejected() {
        let c = comp_diag();
        let alpha = CompromiserAssignment::from_fn(&c, |a| {
            if c.contains(a) {
                vec![]
            } else {
                vec![AgentId(0), AgentId(1)]
            }
        })
        .unwrap();
        let err = ConstraintTraversing::new(c, alpha).unwrap_err();
        assert!(err.to_string().contains("2 compromisers"), "{err}");
    }

    #[test]
    fn non_persistent_assignment_rejected() {
        // agent 0 at (0,0), agent 1 at (1,0): changing agent 0's object moves
        // between the two infeasible cells
        let c = Constraint::new(
            2,
            2,
            vec![Allocation::from_indices(&[0, 1]), Allocation::from_indices(&[1, 1])],
        )
        .unwrap();
        let alpha = CompromiserAssignment::from_entries(
            &c,
            [
                (Allocation::from_indices(&[0, 0]), vec![AgentId(0)]),
                (Allocation::from_indices(&[1, 0]), vec![AgentId(1)]),
            ],
        )
        .unwrap();
        assert!(matches!(ConstraintTraversing::new(Arc::new(c), alpha), Err(Error::Validation(_))));
    }

    #[test]
    fn basic_invariant_enforced() {
        let c = comp_diag();
        assert!(CompromiserAssignment::from_fn(&c, |_| vec![]).is_err());
        assert!(CompromiserAssignment::from_fn(&c, |_| vec![AgentId(0)]).is_err());
    }

    #[test]
    fn non_single_compromising_rejected() {
        let c = Arc::new(Constraint::builtin(BuiltinKind::SocialChoice, 3, 2).unwrap());
        let alpha = agent0_everywhere(&c);
        assert!(ConstraintTraversing::new(c.clone(), alpha.clone()).is_err());
        let raw = ConstraintTraversing::new_unchecked(c, alpha).unwrap();
        assert!(raw.try_tabulate().unwrap().is_none());
    }
}
