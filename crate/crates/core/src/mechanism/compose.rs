use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{AgentId, Allocation, Constraint, ObjectId};
use crate::preferences::{Preference, Profile, ProfileSpace};

use super::{check_budget, tabulate_with_budget, Mechanism, TabulatedMechanism, DEFAULT_TABULATION_BUDGET};

/// Picks a mechanism for one group of agents from the other group's profile.
pub type SubMechanismFn = Arc<dyn Fn(&Profile) -> Arc<dyn Mechanism> + Send + Sync>;

/// `f ⊕ g`: `f` serves the first `f.n()` agents and `g` the rest.
pub struct DirectSum {
    constraint: Arc<Constraint>,
    f: Arc<dyn Mechanism>,
    g: Arc<dyn Mechanism>,
}

impl DirectSum {
    pub fn new(f: Arc<dyn Mechanism>, g: Arc<dyn Mechanism>) -> Result<Self> {
        if f.m() != g.m() {
            return Err(Error::arg(format!("object counts differ ({} vs {})", f.m(), g.m())));
        }
        let shift = g.constraint().space() as u32;
        let codes: Vec<u32> = f
            .constraint()
            .codes()
            .iter()
            .flat_map(|&a| g.constraint().codes().iter().map(move |&b| a * shift + b))
            .collect();
        let constraint = Arc::new(Constraint::from_codes(f.n() + g.n(), f.m(), codes)?);
        Ok(DirectSum { constraint, f, g })
    }
}

impl Mechanism for DirectSum {
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        let n1 = self.f.n();
        let mut out = self.f.assign(&Profile(profile.0[..n1].to_vec())).0;
        out.extend(self.g.assign(&Profile(profile.0[n1..].to_vec())).0);
        Allocation(out)
    }
}

/// `sigma ⊕ rho` over `n1 + n2` agents and all of `O^(n1+n2)`: the first
/// group is served by `rho(second group's profile)` and the second group by
/// `sigma(first group's profile)`.
pub struct ParamDirectSum {
    constraint: Arc<Constraint>,
    n1: usize,
    sigma: SubMechanismFn,
    rho: SubMechanismFn,
}

impl ParamDirectSum {
    pub fn new(n1: usize, n2: usize, m: usize, sigma: SubMechanismFn, rho: SubMechanismFn) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::arg("both groups of a direct sum need agents"));
        }
        Ok(ParamDirectSum {
            constraint: Arc::new(Constraint::full(n1 + n2, m)?),
            n1,
            sigma,
            rho,
        })
    }
}

impl Mechanism for ParamDirectSum {
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        let first = Profile(profile.0[..self.n1].to_vec());
        let second = Profile(profile.0[self.n1..].to_vec());
        let mut out = (self.rho)(&second).assign(&first).0;
        out.extend((self.sigma)(&first).assign(&second).0);
        Allocation(out)
    }
}

/// `tau ∘ f ∘ tau^-1`: inner agent `k` stands for outer agent `perm[k]`.
pub struct PermutedAgents {
    constraint: Arc<Constraint>,
    inner: Arc<dyn Mechanism>,
    perm: Vec<AgentId>,
}

impl PermutedAgents {
    pub fn new(inner: Arc<dyn Mechanism>, perm: &[AgentId]) -> Result<Self> {
        let n = inner.n();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|a| a.0 >= n || std::mem::replace(&mut seen[a.0], true)) {
            return Err(Error::arg("agent permutation must list every agent once"));
        }
        let ic = inner.constraint();
        let codes: Vec<u32> = ic
            .codes()
            .iter()
            .map(|&code| {
                let mut objects = vec![ObjectId(0); n];
                for (k, a) in perm.iter().enumerate() {
                    objects[a.0] = ic.object_of(code, k);
                }
                ic.encode(&objects)
            })
            .collect();
        Ok(PermutedAgents {
            constraint: Arc::new(Constraint::from_codes(n, ic.m(), codes)?),
            inner,
            perm: perm.to_vec(),
        })
    }
}

impl Mechanism for PermutedAgents {
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        let inner = Profile(self.perm.iter().map(|a| profile.get(*a).clone()).collect());
        let a = self.inner.assign(&inner);
        let mut out = vec![ObjectId(0); self.perm.len()];
        for (k, a_k) in self.perm.iter().zip(&a.0) {
            out[k.0] = *a_k;
        }
        Allocation(out)
    }
}

fn split_agents(n: usize, agents: &[AgentId]) -> Result<(Vec<AgentId>, Vec<AgentId>)> {
    let mut inside: Vec<AgentId> = agents.to_vec();
    inside.sort();
    inside.dedup();
    if let Some(a) = inside.iter().find(|a| a.0 >= n) {
        return Err(Error::arg(format!("agent {a} out of range (n={n})")));
    }
    if inside.is_empty() || inside.len() == n {
        return Err(Error::arg("the agent set must be a proper nonempty subset"));
    }
    let outside = (0..n).map(AgentId).filter(|a| !inside.contains(a)).collect();
    Ok((inside, outside))
}

/// `f^M` holding the other agents at `fixed` (listed in ascending agent order).
pub struct Marginal {
    constraint: Arc<Constraint>,
    f: Arc<dyn Mechanism>,
    agents: Vec<AgentId>,
    others: Vec<AgentId>,
    fixed: Vec<Preference>,
}

impl Marginal {
    pub fn new(f: Arc<dyn Mechanism>, agents: &[AgentId], fixed: &[Preference]) -> Result<Self> {
        let (agents, others) = split_agents(f.n(), agents)?;
        if fixed.len() != others.len() || fixed.iter().any(|p| p.m() != f.m()) {
            return Err(Error::arg(format!(
                "need {} fixed preferences over {} objects",
                others.len(),
                f.m()
            )));
        }
        let (proj, _) = f.constraint().project(&agents)?;
        Ok(Marginal {
            constraint: Arc::new(proj),
            f,
            agents,
            others,
            fixed: fixed.to_vec(),
        })
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }
}

impl Mechanism for Marginal {
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        let mut full: Vec<Option<Preference>> = vec![None; self.f.n()];
        for (a, p) in self.agents.iter().zip(&profile.0) {
            full[a.0] = Some(p.clone());
        }
        for (a, p) in self.others.iter().zip(&self.fixed) {
            full[a.0] = Some(p.clone());
        }
        let out = self.f.assign(&Profile(full.into_iter().map(Option::unwrap).collect()));
        Allocation(self.agents.iter().map(|a| out.get(*a)).collect())
    }
}

/// `I^M`: the image of the marginal mechanism.
pub fn option_set(f: Arc<dyn Mechanism>, agents: &[AgentId], fixed: &[Preference]) -> Result<BTreeSet<Allocation>> {
    let marginal = Marginal::new(f, agents, fixed)?;
    Ok(tabulate_with_budget(&marginal, DEFAULT_TABULATION_BUDGET)?
        .image()
        .into_iter()
        .map(|c| marginal.constraint().decode(c))
        .collect())
}

/// `g_i`: objects agent `i` obtains across all of her own reports, the
/// others held at `fixed` (ascending agent order, `i` omitted).
pub fn option_correspondence(f: &dyn Mechanism, agent: AgentId, fixed: &[Preference]) -> Result<BTreeSet<ObjectId>> {
    if agent.0 >= f.n() || fixed.len() + 1 != f.n() {
        return Err(Error::arg(format!(
            "agent {agent} with {} fixed preferences does not fit {} agents",
            fixed.len(),
            f.n()
        )));
    }
    let space = ProfileSpace::new(1, f.m())?;
    let mut prefs: Vec<Preference> = fixed.to_vec();
    prefs.insert(agent.0, space.preferences().preference(0));
    let mut profile = Profile::new(prefs)?;
    let mut out = BTreeSet::new();
    for own in space.preferences().iter() {
        profile.0[agent.0] = own;
        out.insert(f.assign(&profile).get(agent));
    }
    Ok(out)
}

/// A mechanism cut along a pair of agents: the pair's marginal at every
/// profile of the rest, and the rest's marginal at every profile of the pair.
pub struct PairSplit {
    pub pair: [AgentId; 2],
    pub rest: Vec<AgentId>,
    /// Indexed by the rest's profile index; two-agent mechanisms over `O^2`.
    pub sigma: Vec<Arc<TabulatedMechanism>>,
    /// Indexed by the pair's profile index; mechanisms over `O^(n-2)`.
    pub rho: Vec<Arc<TabulatedMechanism>>,
}

impl PairSplit {
    /// Rebuilds a mechanism on the original agent order from the pieces.
    pub fn reassemble(&self) -> Result<PermutedAgents> {
        let m = self.sigma[0].m();
        let rest_space = ProfileSpace::new(self.rest.len(), m)?;
        let pair_space = ProfileSpace::new(2, m)?;
        let sigma_tables = self.sigma.clone();
        let rho_tables = self.rho.clone();
        let sigma: SubMechanismFn = Arc::new(move |p: &Profile| {
            sigma_tables[rest_space.index(p).expect("rest profile")].clone() as Arc<dyn Mechanism>
        });
        let rho: SubMechanismFn = Arc::new(move |p: &Profile| {
            rho_tables[pair_space.index(p).expect("pair profile")].clone() as Arc<dyn Mechanism>
        });
        let sum = ParamDirectSum::new(self.rest.len(), 2, m, sigma, rho)?;
        let perm: Vec<AgentId> = self.rest.iter().chain(&self.pair).copied().collect();
        PermutedAgents::new(Arc::new(sum), &perm)
    }
}

/// Splits `f` (at least three agents) along the pair `{i, j}`.
pub fn split_at_pair(f: &TabulatedMechanism, i: AgentId, j: AgentId) -> Result<PairSplit> {
    let n = f.n();
    let m = f.m();
    if n < 3 {
        return Err(Error::arg("splitting along a pair needs at least three agents"));
    }
    let (pair, rest) = split_agents(n, &[i, j])?;
    if pair.len() != 2 {
        return Err(Error::arg("the pair must name two distinct agents"));
    }
    check_budget(n, m, DEFAULT_TABULATION_BUDGET)?;
    let space = f.space();
    let pair_space = ProfileSpace::new(2, m)?;
    let rest_space = ProfileSpace::new(rest.len(), m)?;
    let c = f.constraint();
    let pair_full = Arc::new(Constraint::full(2, m)?);
    let rest_full = Arc::new(Constraint::full(rest.len(), m)?);

    let mut sigma_tables = vec![vec![0u32; pair_space.len()]; rest_space.len()];
    let mut rho_tables = vec![vec![0u32; rest_space.len()]; pair_space.len()];
    let mut prefs = vec![0usize; n];
    for idx in 0..space.len() {
        for (a, p) in prefs.iter_mut().enumerate() {
            *p = space.pref_of(idx, a);
        }
        let pair_idx = pair_space.index_of_prefs(&pair.iter().map(|a| prefs[a.0]).collect::<Vec<_>>());
        let rest_idx = rest_space.index_of_prefs(&rest.iter().map(|a| prefs[a.0]).collect::<Vec<_>>());
        let code = f.code_at(idx);
        let on = |agents: &[AgentId]| agents.iter().fold(0u32, |acc, a| acc * m as u32 + c.digit(code, a.0) as u32);
        sigma_tables[rest_idx][pair_idx] = on(&pair);
        rho_tables[pair_idx][rest_idx] = on(&rest);
    }
    let wrap = |tables: Vec<Vec<u32>>, full: &Arc<Constraint>| -> Result<Vec<Arc<TabulatedMechanism>>> {
        tables
            .into_iter()
            .map(|t| TabulatedMechanism::from_table(full.clone(), t).map(Arc::new))
            .collect()
    };
    Ok(PairSplit {
        pair: [pair[0], pair[1]],
        rest,
        sigma: wrap(sigma_tables, &pair_full)?,
        rho: wrap(rho_tables, &rest_full)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{tabulate, SerialDictatorship};
    use crate::model::BuiltinKind;
    use crate::preferences::lex_preference;

    fn pref(order: &[usize]) -> Preference {
        Preference::new(order.to_vec()).unwrap()
    }

    fn house(n: usize, m: usize) -> Arc<Constraint> {
        Arc::new(Constraint::builtin(BuiltinKind::HouseAllocation, n, m).unwrap())
    }

    fn dictator(m: usize) -> Arc<dyn Mechanism> {
        Arc::new(SerialDictatorship::new(Arc::new(Constraint::full(1, m).unwrap()), &[0]).unwrap())
    }

    #[test]
    fn direct_sum_of_dictatorships_concatenates() {
        let sum = DirectSum::new(dictator(3), dictator(3)).unwrap();
        let t = tabulate(&sum).unwrap();
        for idx in 0..t.space().len() {
            let p = t.space().profile(idx);
            assert_eq!(t.allocation_at(idx), Allocation(vec![p.0[0].best(), p.0[1].best()]));
        }
    }

    #[test]
    fn constant_parameterization_is_plain_direct_sum() {
        let (f, g) = (dictator(3), dictator(3));
        let plain = tabulate(&DirectSum::new(f.clone(), g.clone()).unwrap()).unwrap();
        let sigma: SubMechanismFn = Arc::new(move |_: &Profile| g.clone());
        let rho: SubMechanismFn = Arc::new(move |_: &Profile| f.clone());
        let param = tabulate(&ParamDirectSum::new(1, 1, 3, sigma, rho).unwrap()).unwrap();
        assert_eq!(plain.table(), param.table());
    }

    #[test]
    fn direct_sum_rejects_mismatched_objects() {
        assert!(DirectSum::new(dictator(2), dictator(3)).is_err());
    }

    #[test]
    fn marginal_of_second_dictator() {
        let sd: Arc<dyn Mechanism> = Arc::new(SerialDictatorship::new(house(2, 3), &[0, 1]).unwrap());
        for held in lex_preference(3, &[vec![ObjectId(0)]]).unwrap() {
            let marg = Marginal::new(sd.clone(), &[AgentId(1)], std::slice::from_ref(&held)).unwrap();
            for p in crate::preferences::all_preferences(3).unwrap() {
                let want = p.best_of([ObjectId(1), ObjectId(2)]).unwrap();
                assert_eq!(marg.assign(&Profile(vec![p])), Allocation(vec![want]));
            }
            let opts = option_set(sd.clone(), &[AgentId(1)], &[held]).unwrap();
            assert_eq!(opts, BTreeSet::from([Allocation::from_indices(&[1]), Allocation::from_indices(&[2])]));
        }
        assert!(Marginal::new(sd.clone(), &[], &[]).is_err());
        assert!(Marginal::new(sd, &[AgentId(0), AgentId(1)], &[]).is_err());
    }

    #[test]
    fn option_correspondences_of_serial_dictatorship() {
        let sd = SerialDictatorship::new(house(2, 3), &[0, 1]).unwrap();
        for p in crate::preferences::all_preferences(3).unwrap() {
            let g0 = option_correspondence(&sd, AgentId(0), std::slice::from_ref(&p)).unwrap();
            assert_eq!(g0.len(), 3);
            let g1 = option_correspondence(&sd, AgentId(1), std::slice::from_ref(&p)).unwrap();
            let want: BTreeSet<ObjectId> = (0..3).map(ObjectId).filter(|&x| x != p.best()).collect();
            assert_eq!(g1, want);
        }
    }

    #[test]
    fn dictator_pins_the_other_agents_options() {
        let c = Arc::new(Constraint::builtin(BuiltinKind::SocialChoice, 2, 3).unwrap());
        let sd = SerialDictatorship::new(c, &[0, 1]).unwrap();
        let p0 = pref(&[1, 2, 0]);
        let g1 = option_correspondence(&sd, AgentId(1), &[p0]).unwrap();
        assert_eq!(g1, BTreeSet::from([ObjectId(1)]));
    }

    #[test]
    fn pair_split_reassembles() {
        let sd = tabulate(&SerialDictatorship::new(house(3, 3), &[2, 0, 1]).unwrap()).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let split = split_at_pair(&sd, AgentId(i), AgentId(j)).unwrap();
            assert_eq!(split.sigma.len(), 6);
            assert_eq!(split.rho.len(), 36);
            let back = tabulate(&split.reassemble().unwrap()).unwrap();
            assert_eq!(back.table(), sd.table());
        }
    }

    #[test]
    fn permuted_agents_round_trip() {
        let sd: Arc<dyn Mechanism> = Arc::new(SerialDictatorship::new(house(3, 3), &[0, 1, 2]).unwrap());
        let swapped = PermutedAgents::new(sd, &[AgentId(2), AgentId(0), AgentId(1)]).unwrap();
        let want = tabulate(&SerialDictatorship::new(house(3, 3), &[2, 0, 1]).unwrap()).unwrap();
        assert_eq!(tabulate(&swapped).unwrap().table(), want.table());
    }
}
