//! Exhaustive search for every mechanism satisfying a set of axioms, plus
//! enumeration of the local dictatorship and GSD families.
//!
//! The search treats each profile as a variable whose domain is a bitmask
//! over the feasible allocations. Efficiency is a unary filter. Strategy-
//! proofness links every pair of profiles that differ in one agent's report;
//! for group strategy-proofness nonbossiness is added to the same links.
//! Domains are kept arc consistent and the first open profile is branched
//! on. Complete assignments are then verified against the full checkers.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::blocks::BlockDecomposition;
use crate::checks::{self, Axiom, Engine};
use crate::error::{Error, Result};
use crate::mechanism::{tabulate, Gsd, GsdOrdering, LocalDictatorship, TabulatedMechanism};
use crate::model::{AgentId, Constraint, Suballocation};
use crate::preferences::ProfileSpace;

/// Axioms the search can impose.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AxiomSet {
    pub sp: bool,
    pub gsp: bool,
    pub pe: bool,
    pub pe_image: bool,
    pub surjective: bool,
}

impl AxiomSet {
    pub fn sp_pe() -> Self {
        AxiomSet {
            sp: true,
            pe: true,
            ..Default::default()
        }
    }

    pub fn gsp_pe() -> Self {
        AxiomSet {
            gsp: true,
            pe: true,
            ..Default::default()
        }
    }

    /// Accepts `sp`, `gsp`, `pe`, `pe-image` and `surjective`.
    pub fn parse(names: &[&str]) -> Result<Self> {
        let mut set = AxiomSet::default();
        for &name in names {
            match name {
                "sp" => set.sp = true,
                "gsp" => set.gsp = true,
                "pe" => set.pe = true,
                "pe-image" => set.pe_image = true,
                "surjective" => set.surjective = true,
                other => return Err(Error::arg(format!("search does not support axiom '{other}'"))),
            }
        }
        if set.is_empty() {
            return Err(Error::arg("select at least one axiom"));
        }
        Ok(set)
    }

    pub fn is_empty(&self) -> bool {
        *self == AxiomSet::default()
    }

    pub fn names(&self) -> Vec<&'static str> {
        [
            (self.sp, "sp"),
            (self.gsp, "gsp"),
            (self.pe, "pe"),
            (self.pe_image, "pe-image"),
            (self.surjective, "surjective"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchBudget {
    pub nodes: u64,
    pub time: Duration,
    /// Largest profile count searched.
    pub max_profiles: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            nodes: 10_000_000,
            time: Duration::from_secs(600),
            max_profiles: 500_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchSpec {
    pub constraint: Arc<Constraint>,
    pub axioms: AxiomSet,
    pub budget: SearchBudget,
}

impl SearchSpec {
    pub fn new(constraint: Arc<Constraint>, axioms: AxiomSet) -> Self {
        SearchSpec {
            constraint,
            axioms,
            budget: SearchBudget::default(),
        }
    }

    pub fn with_budget(mut self, budget: SearchBudget) -> Self {
        self.budget = budget;
        self
    }
}

/// Duplicate-free, sorted set of mechanism tables over one constraint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MechanismSet {
    constraint: Arc<Constraint>,
    tables: Vec<Vec<u32>>,
}

impl MechanismSet {
    pub fn new(constraint: Arc<Constraint>, mut tables: Vec<Vec<u32>>) -> Self {
        tables.sort_unstable();
        tables.dedup();
        MechanismSet { constraint, tables }
    }

    pub fn from_mechanisms(constraint: Arc<Constraint>, ms: impl IntoIterator<Item = TabulatedMechanism>) -> Self {
        Self::new(constraint, ms.into_iter().map(TabulatedMechanism::into_table).collect())
    }

    pub fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn tables(&self) -> &[Vec<u32>] {
        &self.tables
    }

    pub fn contains(&self, table: &[u32]) -> bool {
        self.tables.binary_search_by(|t| t.as_slice().cmp(table)).is_ok()
    }

    pub fn mechanisms(&self) -> impl Iterator<Item = TabulatedMechanism> + '_ {
        self.tables.iter().map(|t| {
            TabulatedMechanism::from_table(self.constraint.clone(), t.clone()).expect("tables in a set are feasible")
        })
    }
}

/// Outcome of comparing two mechanism sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetComparison {
    pub only_left: Vec<Vec<u32>>,
    pub only_right: Vec<Vec<u32>>,
}

impl SetComparison {
    pub fn is_equal(&self) -> bool {
        self.only_left.is_empty() && self.only_right.is_empty()
    }
}

pub fn set_equal(a: &MechanismSet, b: &MechanismSet) -> Result<SetComparison> {
    if a.constraint != b.constraint {
        return Err(Error::arg("mechanism sets range over different constraints"));
    }
    let only = |x: &MechanismSet, y: &MechanismSet| -> Vec<Vec<u32>> {
        x.tables.iter().filter(|t| !y.contains(t)).cloned().collect()
    };
    Ok(SetComparison {
        only_left: only(a, b),
        only_right: only(b, a),
    })
}

struct Solver<'a> {
    space: ProfileSpace,
    codes: &'a [u32],
    np: usize,
    /// `supp[((i * np + r) * np + q) * k + a]`: values at the profile where
    /// agent `i` reports `q` that are compatible with value `a` at the
    /// profile where she reports `r`.
    supp: Vec<u64>,
    domains: Vec<u64>,
    trail: Vec<(u32, u64)>,
    queue: VecDeque<u32>,
    queued: Vec<bool>,
}

impl<'a> Solver<'a> {
    fn new(c: &'a Constraint, axioms: AxiomSet) -> Result<Self> {
        let space = ProfileSpace::new(c.n(), c.m())?;
        let codes = c.codes();
        let k = codes.len();
        let n = c.n();
        let prefs = space.preferences().clone();
        let np = prefs.len();
        let all = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
        let digit = |a: usize, i: usize| c.digit(codes[a], i);

        let linked = axioms.sp || axioms.gsp;
        let mut supp = vec![all; if linked { n * np * np * k } else { 0 }];
        if linked {
            for i in 0..n {
                for r in 0..np {
                    for q in 0..np {
                        for a in 0..k {
                            let ai = digit(a, i);
                            let mut mask = 0u64;
                            for b in 0..k {
                                let bi = digit(b, i);
                                let sp = prefs.rank(r, ai) <= prefs.rank(r, bi) && prefs.rank(q, bi) <= prefs.rank(q, ai);
                                let nb = !axioms.gsp || ai != bi || a == b;
                                if sp && nb {
                                    mask |= 1 << b;
                                }
                            }
                            supp[((i * np + r) * np + q) * k + a] = mask;
                        }
                    }
                }
            }
        }

        let domains: Vec<u64> = (0..space.len())
            .into_par_iter()
            .map(|idx| {
                if !axioms.pe {
                    return all;
                }
                let ranks: Vec<&[u8]> = (0..n).map(|i| prefs.ranks(space.pref_of(idx, i))).collect();
                let mut mask = 0u64;
                for a in 0..k {
                    let dominated = (0..k).any(|b| {
                        b != a && (0..n).all(|i| ranks[i][digit(b, i)] <= ranks[i][digit(a, i)])
                    });
                    if !dominated {
                        mask |= 1 << a;
                    }
                }
                mask
            })
            .collect();

        let len = space.len();
        Ok(Solver {
            space,
            codes,
            np,
            supp,
            domains,
            trail: Vec::new(),
            queue: VecDeque::new(),
            queued: vec![false; len],
        })
    }

    fn enqueue(&mut self, p: usize) {
        if !self.queued[p] {
            self.queued[p] = true;
            self.queue.push_back(p as u32);
        }
    }

    fn set(&mut self, p: usize, mask: u64) {
        self.trail.push((p as u32, self.domains[p]));
        self.domains[p] = mask;
        self.enqueue(p);
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (p, old) = self.trail.pop().expect("trail longer than mark");
            self.domains[p as usize] = old;
        }
    }

    /// Restores arc consistency; false on a wiped-out domain.
    fn propagate(&mut self) -> bool {
        if self.supp.is_empty() {
            self.queue.clear();
            self.queued.iter_mut().for_each(|q| *q = false);
            return self.domains.iter().all(|&d| d != 0);
        }
        let k = self.codes.len();
        let n = self.space.n();
        let np = self.np;
        while let Some(p) = self.queue.pop_front() {
            let p = p as usize;
            self.queued[p] = false;
            let dp = self.domains[p];
            for i in 0..n {
                let r = self.space.pref_of(p, i);
                for q in 0..np {
                    if q == r {
                        continue;
                    }
                    let p2 = self.space.with_pref(p, i, q);
                    let row = &self.supp[((i * np + r) * np + q) * k..][..k];
                    let mut allowed = 0u64;
                    let mut rest = dp;
                    while rest != 0 {
                        let a = rest.trailing_zeros() as usize;
                        rest &= rest - 1;
                        allowed |= row[a];
                    }
                    let old = self.domains[p2];
                    let new = old & allowed;
                    if new != old {
                        if new == 0 {
                            self.queue.iter().for_each(|&x| self.queued[x as usize] = false);
                            self.queue.clear();
                            return false;
                        }
                        self.set(p2, new);
                    }
                }
            }
        }
        true
    }
}

enum Stop {
    Nodes,
    Time,
}

/// Every mechanism on `spec.constraint` satisfying `spec.axioms`.
///
/// Returns [`Error::Incomplete`] with the mechanisms found so far if the
/// node or time budget runs out.
pub fn search(spec: &SearchSpec) -> Result<MechanismSet> {
    let c = &spec.constraint;
    if spec.axioms.is_empty() {
        return Err(Error::arg("select at least one axiom"));
    }
    let profiles = ProfileSpace::count_for(c.n(), c.m());
    if profiles > spec.budget.max_profiles as u128 {
        return Err(Error::Budget {
            what: "search profile count",
            required: profiles,
            limit: spec.budget.max_profiles as u128,
        });
    }
    if c.len() > 64 {
        return Err(Error::Budget {
            what: "search domain size",
            required: c.len() as u128,
            limit: 64,
        });
    }
    let started = Instant::now();
    let mut solver = Solver::new(c, spec.axioms)?;
    let mut found: Vec<Vec<u32>> = Vec::new();
    let mut nodes: u64 = 0;

    for p in 0..solver.domains.len() {
        solver.enqueue(p);
    }
    let mut stop = None;
    if solver.propagate() {
        // (variable, untried values, trail mark)
        let mut stack: Vec<(usize, u64, usize)> = Vec::new();
        let mut cursor = 0usize;
        'outer: loop {
            while cursor < solver.domains.len() && solver.domains[cursor].count_ones() == 1 {
                cursor += 1;
            }
            if cursor == solver.domains.len() {
                let table: Vec<u32> = solver
                    .domains
                    .iter()
                    .map(|d| solver.codes[d.trailing_zeros() as usize])
                    .collect();
                if accept(c, spec.axioms, &table)? {
                    found.push(table);
                }
            } else {
                stack.push((cursor, solver.domains[cursor], solver.trail.len()));
            }
            // advance to the next untried value, backtracking as needed
            loop {
                let Some(top) = stack.last_mut() else { break 'outer };
                let (var, untried, mark) = *top;
                if untried == 0 {
                    solver.undo_to(mark);
                    stack.pop();
                    continue;
                }
                let bit = untried & untried.wrapping_neg();
                top.1 &= !bit;
                solver.undo_to(mark);
                nodes += 1;
                if nodes > spec.budget.nodes {
                    stop = Some(Stop::Nodes);
                    break 'outer;
                }
                if nodes % 1024 == 0 && started.elapsed() > spec.budget.time {
                    stop = Some(Stop::Time);
                    break 'outer;
                }
                solver.set(var, bit);
                if solver.propagate() {
                    cursor = var + 1;
                    continue 'outer;
                }
            }
        }
    }
    let set = MechanismSet::new(c.clone(), found);
    match stop {
        None => Ok(set),
        Some(Stop::Nodes | Stop::Time) => Err(Error::Incomplete {
            partial: Box::new(set),
            nodes,
        }),
    }
}

/// Checks the axioms that arc consistency does not fully enforce.
fn accept(c: &Arc<Constraint>, axioms: AxiomSet, table: &[u32]) -> Result<bool> {
    if axioms.surjective {
        let mut seen: Vec<u32> = table.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != c.len() {
            return Ok(false);
        }
    }
    if !(axioms.gsp || axioms.pe_image) {
        return Ok(true);
    }
    let f = TabulatedMechanism::from_table(c.clone(), table.to_vec())?;
    if axioms.pe_image && !checks::check_pe_on_image(&f)?.is_pass() {
        return Ok(false);
    }
    if axioms.gsp {
        let verdict = match checks::check_gsp_naive(&f) {
            Err(e) if e.is_resource() => checks::check_gsp(&f, Engine::Fast)?,
            other => other?,
        };
        return Ok(verdict.is_pass());
    }
    Ok(true)
}

/// Largest family the enumerators will tabulate.
pub const DEFAULT_FAMILY_BUDGET: u128 = 100_000;

/// Tables of all `2^p` dictator assignments over the blocks.
pub fn enumerate_local_dictatorships(c: &Arc<Constraint>) -> Result<MechanismSet> {
    let d = BlockDecomposition::decompose(c)?;
    let p = d.len();
    let count = d.count_sp_pe().unwrap_or(u128::MAX);
    if count > DEFAULT_FAMILY_BUDGET {
        return Err(Error::Budget {
            what: "local dictatorship enumeration",
            required: count,
            limit: DEFAULT_FAMILY_BUDGET,
        });
    }
    let tables = (0..count as u64)
        .map(|bits| {
            let dictators: Vec<AgentId> = (0..p).map(|b| AgentId((bits >> b & 1) as usize)).collect();
            let f = LocalDictatorship::new(c.clone(), d.clone(), &dictators)?;
            Ok(tabulate(&f)?.into_table())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MechanismSet::new(c.clone(), tables))
}

/// Agents still open at `mu` together with the objects each can get.
fn open_agents(c: &Constraint, mu: &Suballocation) -> Vec<(AgentId, Vec<crate::model::ObjectId>)> {
    (0..c.n())
        .map(AgentId)
        .filter(|a| !mu.contains(*a))
        .map(|a| (a, c.options(a, mu)))
        .collect()
}

/// Fills agents with a single option, recording the forced decisions.
fn fill_forced(c: &Constraint, mu: &mut Suballocation, decisions: &mut Vec<(Suballocation, AgentId)>) {
    loop {
        let forced = open_agents(c, mu).into_iter().find(|(_, opts)| opts.len() == 1);
        let Some((a, opts)) = forced else { return };
        decisions.push((mu.clone(), a));
        mu.assign(a, opts[0]);
    }
}

/// Number of distinct on-path decision rules, with forced agents filled
/// first. Saturates.
pub fn count_gsd_orderings(c: &Constraint) -> u128 {
    fn count(c: &Constraint, mu: &Suballocation) -> u128 {
        let mut mu = mu.clone();
        fill_forced(c, &mut mu, &mut Vec::new());
        let open = open_agents(c, &mu);
        if open.is_empty() {
            return 1;
        }
        open.iter().fold(0u128, |acc, (a, opts)| {
            let ways = opts
                .iter()
                .fold(1u128, |prod, &x| prod.saturating_mul(count(c, &mu.with(*a, x))));
            acc.saturating_add(ways)
        })
    }
    count(c, &Suballocation::empty(c.n()))
}

/// Every on-path decision rule. Agents whose object is forced are served
/// first, since their turn cannot affect anyone's options.
pub fn enumerate_gsd_orderings(c: &Constraint, budget: u128) -> Result<Vec<GsdOrdering>> {
    let count = count_gsd_orderings(c);
    if count > budget {
        return Err(Error::Budget {
            what: "GSD enumeration",
            required: count,
            limit: budget,
        });
    }
    type Rules = Vec<Vec<(Suballocation, AgentId)>>;
    fn rules(c: &Constraint, mu: &Suballocation) -> Rules {
        let mut mu = mu.clone();
        let mut forced = Vec::new();
        fill_forced(c, &mut mu, &mut forced);
        let open = open_agents(c, &mu);
        if open.is_empty() {
            return vec![forced];
        }
        let mut out = Vec::new();
        for (a, opts) in open {
            let mut partial: Rules = vec![{
                let mut base = forced.clone();
                base.push((mu.clone(), a));
                base
            }];
            for x in opts {
                let sub = rules(c, &mu.with(a, x));
                partial = partial
                    .iter()
                    .flat_map(|p| {
                        sub.iter().map(move |s| {
                            let mut v = p.clone();
                            v.extend(s.iter().cloned());
                            v
                        })
                    })
                    .collect();
            }
            out.extend(partial);
        }
        out
    }
    let default: Vec<usize> = (0..c.n()).collect();
    rules(c, &Suballocation::empty(c.n()))
        .into_iter()
        .map(|decisions| {
            decisions.into_iter().try_fold(GsdOrdering::fixed(c.n(), &default)?, |z, (mu, a)| z.with_override(mu, a))
        })
        .collect()
}

/// Distinct tables of every GSD on `c`.
pub fn enumerate_gsd(c: &Arc<Constraint>) -> Result<MechanismSet> {
    enumerate_gsd_with_budget(c, DEFAULT_FAMILY_BUDGET)
}

pub fn enumerate_gsd_with_budget(c: &Arc<Constraint>, budget: u128) -> Result<MechanismSet> {
    let orderings = enumerate_gsd_orderings(c, budget)?;
    let tables = orderings
        .into_par_iter()
        .map(|z| Ok(tabulate(&Gsd::new(c.clone(), z)?)?.into_table()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MechanismSet::new(c.clone(), tables))
}

/// A GSD whose next dictator is drawn uniformly among the open agents at
/// every reachable suballocation.
pub fn random_gsd<R: Rng + ?Sized>(c: &Arc<Constraint>, rng: &mut R) -> Result<Gsd> {
    fn walk<R: Rng + ?Sized>(
        c: &Constraint,
        mu: &Suballocation,
        rng: &mut R,
        out: &mut BTreeMap<Suballocation, AgentId>,
    ) {
        let open = open_agents(c, mu);
        let Some((a, opts)) = open.choose(rng) else { return };
        out.insert(mu.clone(), *a);
        for &x in opts {
            walk(c, &mu.with(*a, x), rng, out);
        }
    }
    let mut overrides = BTreeMap::new();
    walk(c, &Suballocation::empty(c.n()), rng, &mut overrides);
    let default: Vec<usize> = (0..c.n()).collect();
    let zeta = overrides
        .into_iter()
        .try_fold(GsdOrdering::fixed(c.n(), &default)?, |z, (mu, a)| z.with_override(mu, a))?;
    Gsd::new(c.clone(), zeta)
}

/// True iff every mechanism in `set` passes `axiom` (used for cross-checks).
pub fn all_pass(set: &MechanismSet, axiom: Axiom, engine: Engine) -> Result<bool> {
    for f in set.mechanisms() {
        if !checks::check(&f, axiom, engine)?.is_pass() {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::BuiltinKind;

    fn builtin(kind: BuiltinKind, n: usize, m: usize) -> Arc<Constraint> {
        Arc::new(Constraint::builtin(kind, n, m).unwrap())
    }

    #[test]
    fn social_choice_two_agents_three_objects() {
        let c = builtin(BuiltinKind::SocialChoice, 2, 3);
        let found = search(&SearchSpec::new(c.clone(), AxiomSet::sp_pe())).unwrap();
        assert_eq!(found.len(), 2);
        assert!(set_equal(&found, &enumerate_local_dictatorships(&c).unwrap()).unwrap().is_equal());
    }

    #[test]
    fn social_choice_two_objects_has_four() {
        let c = builtin(BuiltinKind::SocialChoice, 2, 2);
        assert_eq!(search(&SearchSpec::new(c, AxiomSet::sp_pe())).unwrap().len(), 4);
    }

    #[test]
    fn house_three_objects_has_eight() {
        let c = builtin(BuiltinKind::HouseAllocation, 2, 3);
        let found = search(&SearchSpec::new(c.clone(), AxiomSet::sp_pe())).unwrap();
        assert_eq!(found.len(), 8);
        let ld = enumerate_local_dictatorships(&c).unwrap();
        assert_eq!(ld.len(), 8);
        assert!(set_equal(&found, &ld).unwrap().is_equal());
        let gsp = search(&SearchSpec::new(c, AxiomSet::gsp_pe())).unwrap();
        assert!(gsp.tables().iter().all(|t| found.contains(t)));
    }

    #[test]
    fn gsd_family_sizes() {
        assert_eq!(enumerate_gsd(&builtin(BuiltinKind::Roommates, 4, 4)).unwrap().len(), 4);
        assert_eq!(enumerate_gsd(&builtin(BuiltinKind::SocialChoice, 2, 3)).unwrap().len(), 2);
        assert_eq!(enumerate_gsd(&Arc::new(Constraint::full(1, 3).unwrap())).unwrap().len(), 1);
        assert_eq!(count_gsd_orderings(&builtin(BuiltinKind::Roommates, 4, 4)), 4);
    }

    #[test]
    fn empty_block_set_gives_top_choice_mechanism() {
        let c = Arc::new(Constraint::full(2, 3).unwrap());
        assert_eq!(enumerate_local_dictatorships(&c).unwrap().len(), 1);
    }

    #[test]
    fn budgets_are_reported() {
        let c = builtin(BuiltinKind::HouseAllocation, 2, 3);
        let tiny = SearchBudget {
            nodes: 1,
            ..SearchBudget::default()
        };
        let spec = SearchSpec::new(c.clone(), AxiomSet::parse(&["sp"]).unwrap()).with_budget(tiny);
        assert!(matches!(search(&spec), Err(Error::Incomplete { .. })));
        let small = SearchBudget {
            max_profiles: 10,
            ..SearchBudget::default()
        };
        assert!(matches!(
            search(&SearchSpec::new(c, AxiomSet::sp_pe()).with_budget(small)),
            Err(Error::Budget { .. })
        ));
        assert!(AxiomSet::parse(&[]).is_err());
        assert!(AxiomSet::parse(&["nonsense"]).is_err());
    }

    #[test]
    fn random_gsds_are_valid() {
        let c = builtin(BuiltinKind::HouseAllocation, 3, 3);
        let all = enumerate_gsd(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let g = tabulate(&random_gsd(&c, &mut rng).unwrap()).unwrap();
            assert!(all.contains(g.table()));
        }
    }

    #[test]
    fn set_comparison_reports_differences() {
        let c = builtin(BuiltinKind::HouseAllocation, 2, 3);
        let all = enumerate_local_dictatorships(&c).unwrap();
        let some = MechanismSet::new(c, all.tables()[..3].to_vec());
        let cmp = set_equal(&all, &some).unwrap();
        assert_eq!(cmp.only_left.len(), 5);
        assert!(cmp.only_right.is_empty());
    }
}
