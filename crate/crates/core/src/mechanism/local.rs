use std::sync::Arc;

use crate::blocks::BlockDecomposition;
use crate::error::{Error, Result};
use crate::model::{AgentId, Allocation, Constraint, ObjectId};
use crate::preferences::{Preference, Profile};

use super::Mechanism;

/// Two-agent mechanism with one dictator per block of infeasible cells.
///
/// Each agent's effective top is her best object that is not always
/// infeasible for her. If the pair of effective tops is feasible it is
/// chosen; otherwise it lies in some block, whose dictator gets her top and
/// the other agent gets her best object compatible with it.
#[derive(Clone, Debug)]
pub struct LocalDictatorship {
    constraint: Arc<Constraint>,
    decomposition: BlockDecomposition,
    dictators: Vec<AgentId>,
}

impl LocalDictatorship {
    /// `dictators[k]` rules block `k` of `decomposition`.
    pub fn new(constraint: Arc<Constraint>, decomposition: BlockDecomposition, dictators: &[AgentId]) -> Result<Self> {
        if constraint.n() != 2 {
            return Err(Error::arg("local dictatorships need exactly two agents"));
        }
        if BlockDecomposition::decompose(&constraint)? != decomposition {
            return Err(Error::arg("block decomposition does not belong to this constraint"));
        }
        if dictators.len() != decomposition.len() {
            return Err(Error::arg(format!(
                "{} blocks but {} dictators given",
                decomposition.len(),
                dictators.len()
            )));
        }
        if let Some(a) = dictators.iter().find(|a| a.0 > 1) {
            return Err(Error::arg(format!("dictator {a} is not one of the two agents")));
        }
        Ok(LocalDictatorship {
            constraint,
            decomposition,
            dictators: dictators.to_vec(),
        })
    }

    /// Convenience: decomposes `constraint` itself.
    pub fn from_constraint(constraint: Arc<Constraint>, dictators: &[AgentId]) -> Result<Self> {
        let d = BlockDecomposition::decompose(&constraint)?;
        Self::new(constraint, d, dictators)
    }

    pub fn decomposition(&self) -> &BlockDecomposition {
        &self.decomposition
    }

    pub fn dictators(&self) -> &[AgentId] {
        &self.dictators
    }

    fn effective_top(pref: &Preference, reserved: &std::collections::BTreeSet<ObjectId>) -> ObjectId {
        pref.order()
            .iter()
            .copied()
            .find(|x| !reserved.contains(x))
            .expect("a nonempty constraint leaves every agent some object")
    }
}

impl Mechanism for LocalDictatorship {
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        let c = &self.constraint;
        let (p0, p1) = (profile.get(AgentId(0)), profile.get(AgentId(1)));
        let a = Self::effective_top(p0, &self.decomposition.r1);
        let b = Self::effective_top(p1, &self.decomposition.r2);
        if c.contains_code(c.encode(&[a, b])) {
            return Allocation(vec![a, b]);
        }
        let block = self
            .decomposition
            .block_of(a, b)
            .expect("infeasible pair outside the reserved objects lies in a block");
        let feasible = |x: ObjectId, y: ObjectId| c.contains_code(c.encode(&[x, y]));
        let all = (0..c.m()).map(ObjectId);
        if self.dictators[block] == AgentId(0) {
            let y = p1.best_of(all.filter(|&y| feasible(a, y))).expect("a is not always infeasible");
            Allocation(vec![a, y])
        } else {
            let x = p0.best_of(all.filter(|&x| feasible(x, b))).expect("b is not always infeasible");
            Allocation(vec![x, b])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{tabulate, SerialDictatorship};
    use crate::model::BuiltinKind;

    fn builtin(kind: BuiltinKind, m: usize) -> Arc<Constraint> {
        Arc::new(Constraint::builtin(kind, 2, m).unwrap())
    }

    #[test]
    fn feasible_top_pair_is_returned() {
        let c = builtin(BuiltinKind::HouseAllocation, 3);
        let f = LocalDictatorship::from_constraint(c, &[AgentId(1); 3]).unwrap();
        let p = Profile(vec![
            Preference::new(vec![0, 1, 2]).unwrap(),
            Preference::new(vec![2, 1, 0]).unwrap(),
        ]);
        assert_eq!(f.assign(&p), Allocation::from_indices(&[0, 2]));
    }

    #[test]
    fn uniform_house_dictator_is_serial_dictatorship() {
        let c = builtin(BuiltinKind::HouseAllocation, 3);
        let ld = LocalDictatorship::from_constraint(c.clone(), &[AgentId(0); 3]).unwrap();
        let sd = SerialDictatorship::new(c, &[0, 1]).unwrap();
        assert_eq!(tabulate(&ld).unwrap(), tabulate(&sd).unwrap());
    }

    #[test]
    fn social_choice_single_block_is_dictatorship() {
        let c = builtin(BuiltinKind::SocialChoice, 3);
        let ld = tabulate(&LocalDictatorship::from_constraint(c, &[AgentId(0)]).unwrap()).unwrap();
        for idx in 0..ld.space().len() {
            let p = ld.space().profile(idx);
            assert_eq!(ld.allocation_at(idx), Allocation(vec![p.0[0].best(); 2]));
        }
    }

    #[test]
    fn missing_or_foreign_dictators_rejected() {
        let c = builtin(BuiltinKind::HouseAllocation, 3);
        assert!(LocalDictatorship::from_constraint(c.clone(), &[AgentId(0); 2]).is_err());
        assert!(LocalDictatorship::from_constraint(c.clone(), &[AgentId(2); 3]).is_err());
        let other = BlockDecomposition::decompose(&builtin(BuiltinKind::SocialChoice, 3)).unwrap();
        assert!(LocalDictatorship::new(c, other, &[AgentId(0)]).is_err());
    }
}
