//! Exhaustive axiom checkers over tabulated mechanisms.
//!
//! Every checker returns [`Verdict::Pass`] or a replayable [`Witness`].
//! Parallel sweeps report the first violation in a fixed sequential order,
//! so witnesses do not depend on scheduling.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, TabulatedMechanism};
use crate::model::{AgentId, Allocation, BuiltinKind, Constraint, ObjectId};
use crate::preferences::{Preference, PreferenceSpace, Profile, ProfileSpace};

/// Default cap on `profiles * coalitions` for the coalition sweep.
pub const DEFAULT_NAIVE_GSP_BUDGET: u128 = 200_000_000;

/// Default cap on profile pairs for the two-profile Maskin sweep.
pub const DEFAULT_PAIRWISE_BUDGET: u128 = 100_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axiom {
    StrategyProof,
    GroupStrategyProof,
    WeakGroupStrategyProof,
    ParetoEfficient,
    ParetoEfficientOnImage,
    Nonbossy,
    /// Lower contour sets may weakly grow.
    Maskin,
    /// Lower contour sets must strictly grow.
    MaskinStrict,
    IrrelevantObjects,
    MutuallyBest,
}

impl Axiom {
    pub const ALL: [Axiom; 10] = [
        Axiom::StrategyProof,
        Axiom::GroupStrategyProof,
        Axiom::WeakGroupStrategyProof,
        Axiom::ParetoEfficient,
        Axiom::ParetoEfficientOnImage,
        Axiom::Nonbossy,
        Axiom::Maskin,
        Axiom::MaskinStrict,
        Axiom::IrrelevantObjects,
        Axiom::MutuallyBest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axiom::StrategyProof => "sp",
            Axiom::GroupStrategyProof => "gsp",
            Axiom::WeakGroupStrategyProof => "weak-gsp",
            Axiom::ParetoEfficient => "pe",
            Axiom::ParetoEfficientOnImage => "pe-image",
            Axiom::Nonbossy => "nonbossy",
            Axiom::Maskin => "maskin",
            Axiom::MaskinStrict => "maskin-strict",
            Axiom::IrrelevantObjects => "irrelevant",
            Axiom::MutuallyBest => "mutually-best",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which group strategy-proofness checker to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Engine {
    /// Every coalition.
    Naive,
    /// Singletons and pairs only.
    #[default]
    Fast,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Deviation {
    /// The coalition reports `reports` (same order) instead of the truth.
    Misreport {
        coalition: Vec<AgentId>,
        reports: Vec<Preference>,
    },
    /// A second profile, for the two-profile Maskin test.
    Profile(Profile),
    /// `after` dominates `before`. For image efficiency, `source` is a
    /// profile at which the mechanism chooses `after`.
    Dominated { source: Option<Profile> },
    /// The pair top each other but are not matched.
    Separated { pair: (AgentId, AgentId) },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub axiom: Axiom,
    pub profile: Profile,
    pub deviation: Deviation,
    /// The mechanism's choice at `profile`.
    pub before: Allocation,
    /// The outcome after the deviation, or the dominating allocation.
    pub after: Allocation,
}

impl Witness {
    /// The profile the deviation leads to, if it is one.
    pub fn deviated_profile(&self) -> Option<Profile> {
        match &self.deviation {
            Deviation::Misreport { coalition, reports } => {
                let mut p = self.profile.clone();
                for (a, r) in coalition.iter().zip(reports) {
                    p.0[a.0] = r.clone();
                }
                Some(p)
            }
            Deviation::Profile(p) => Some(p.clone()),
            Deviation::Dominated { source } => source.clone(),
            Deviation::Separated { .. } => None,
        }
    }

    /// Re-evaluates `f` and re-tests the violated condition.
    pub fn replay(&self, f: &dyn Mechanism) -> bool {
        if f.assign(&self.profile) != self.before {
            return false;
        }
        let truth = &self.profile;
        let (before, after) = (&self.before, &self.after);
        let pref = |a: AgentId| truth.get(a);
        if let Some(q) = self.deviated_profile() {
            if f.assign(&q) != *after {
                return false;
            }
        }
        match (&self.axiom, &self.deviation) {
            (Axiom::StrategyProof, Deviation::Misreport { coalition, .. }) => {
                coalition.len() == 1 && pref(coalition[0]).prefers(after.get(coalition[0]), before.get(coalition[0]))
            }
            (Axiom::GroupStrategyProof, Deviation::Misreport { coalition, .. }) => {
                coalition.iter().all(|&a| pref(a).weakly_prefers(after.get(a), before.get(a)))
                    && coalition.iter().any(|&a| after.get(a) != before.get(a))
            }
            (Axiom::WeakGroupStrategyProof, Deviation::Misreport { coalition, .. }) => {
                !coalition.is_empty() && coalition.iter().all(|&a| pref(a).prefers(after.get(a), before.get(a)))
            }
            (Axiom::Nonbossy, Deviation::Misreport { coalition, .. }) => {
                coalition.len() == 1 && after.get(coalition[0]) == before.get(coalition[0]) && after != before
            }
            (Axiom::Maskin | Axiom::MaskinStrict, dev) => {
                let Some(q) = self.deviated_profile() else { return false };
                let strict = self.axiom == Axiom::MaskinStrict;
                let changed: Vec<AgentId> = match dev {
                    Deviation::Misreport { coalition, .. } => coalition.clone(),
                    Deviation::Profile(_) => (0..truth.n()).map(AgentId).collect(),
                    _ => return false,
                };
                changed.iter().all(|&a| {
                    let x = before.get(a);
                    let old = truth.get(a).lower_contour(x);
                    let new = q.get(a).lower_contour(x);
                    new.is_superset(&old) && (!strict || new.len() > old.len())
                }) && after != before
            }
            (Axiom::ParetoEfficient | Axiom::ParetoEfficientOnImage, Deviation::Dominated { source }) => {
                let available = match self.axiom {
                    Axiom::ParetoEfficient => f.constraint().contains(after),
                    _ => source.is_some(),
                };
                available
                    && after != before
                    && (0..truth.n()).all(|i| pref(AgentId(i)).weakly_prefers(after.get(AgentId(i)), before.get(AgentId(i))))
            }
            (Axiom::IrrelevantObjects, Deviation::Misreport { coalition, reports }) => {
                if coalition.len() != 1 {
                    return false;
                }
                let i = coalition[0];
                let reserved = f.constraint().always_infeasible(i);
                let relevant = |p: &Preference| -> Vec<ObjectId> {
                    p.order().iter().copied().filter(|x| !reserved.contains(x)).collect()
                };
                relevant(pref(i)) == relevant(&reports[0]) && after != before
            }
            (Axiom::MutuallyBest, Deviation::Separated { pair: (i, j) }) => {
                pref(*i).best().0 == j.0 && pref(*j).best().0 == i.0 && before.get(*i).0 != j.0
            }
            _ => false,
        }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated at profile [{}]: ", self.axiom, self.profile)?;
        match &self.deviation {
            Deviation::Misreport { coalition, reports } => {
                let parts: Vec<String> = coalition.iter().zip(reports).map(|(a, r)| format!("{a} reports {r}")).collect();
                write!(f, "{} turns {} into {}", parts.join(", "), self.before, self.after)
            }
            Deviation::Profile(q) => write!(f, "moving to [{q}] turns {} into {}", self.before, self.after),
            Deviation::Dominated { .. } => write!(f, "{} is dominated by {}", self.before, self.after),
            Deviation::Separated { pair: (i, j) } => {
                write!(f, "agents {i} and {j} top each other but {} separates them", self.before)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(Box<Witness>),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Pass => None,
            Verdict::Fail(w) => Some(w),
        }
    }
}

impl From<Option<Witness>> for Verdict {
    fn from(w: Option<Witness>) -> Self {
        w.map_or(Verdict::Pass, |w| Verdict::Fail(Box::new(w)))
    }
}

/// Precomputed access to a tabulated mechanism.
struct Frame<'a> {
    f: &'a TabulatedMechanism,
    c: &'a Constraint,
    space: &'a ProfileSpace,
    prefs: &'a PreferenceSpace,
    n: usize,
    m: usize,
}

impl<'a> Frame<'a> {
    fn new(f: &'a TabulatedMechanism) -> Self {
        let space = f.space();
        Frame {
            f,
            c: f.constraint(),
            space,
            prefs: space.preferences(),
            n: space.n(),
            m: space.m(),
        }
    }

    #[inline]
    fn obj(&self, idx: usize, agent: usize) -> usize {
        self.c.digit(self.f.code_at(idx), agent)
    }

    /// Sum of stride offsets for every joint preference choice of `agents`
    /// (ascending), in ascending order.
    fn offsets(&self, agents: &[usize]) -> Vec<usize> {
        let mut out = vec![0usize];
        for &a in agents {
            let stride = self.space.stride(a);
            out = out
                .iter()
                .flat_map(|&o| (0..self.prefs.len()).map(move |p| o + p * stride))
                .collect();
        }
        out.sort_unstable();
        out
    }

    fn complement(&self, agents: &[usize]) -> Vec<usize> {
        (0..self.n).filter(|a| !agents.contains(a)).collect()
    }

    fn misreport(&self, axiom: Axiom, idx: usize, coalition: &[usize], dev: usize) -> Witness {
        Witness {
            axiom,
            profile: self.space.profile(idx),
            deviation: Deviation::Misreport {
                coalition: coalition.iter().map(|&a| AgentId(a)).collect(),
                reports: coalition
                    .iter()
                    .map(|&a| self.prefs.preference(self.space.pref_of(dev, a)))
                    .collect(),
            },
            before: self.f.allocation_at(idx),
            after: self.f.allocation_at(dev),
        }
    }

    /// Runs `body` on each slice fixing the agents outside `agents`, and
    /// returns the violation from the earliest slice.
    fn scan_slices<T, F>(&self, agents: &[usize], body: F) -> Option<T>
    where
        T: Send,
        F: Fn(usize, &[usize]) -> Option<T> + Sync,
    {
        let outer = self.offsets(&self.complement(agents));
        let inner = self.offsets(agents);
        outer.par_iter().find_map_first(|&base| body(base, &inner))
    }

    /// First profile (in index order) at which `coalition` can jointly
    /// deviate to an outcome it prefers. `all_strict` asks every member to
    /// gain strictly; otherwise all weakly and one strictly.
    fn coalition_violation(&self, axiom: Axiom, coalition: &[usize], all_strict: bool) -> Option<Witness> {
        let k = coalition.len();
        let m = self.m as u32;
        let inner_prefs: Vec<usize> = self
            .offsets(coalition)
            .iter()
            .flat_map(|&off| coalition.iter().map(move |&a| self.space.pref_of(off, a)))
            .collect();
        let inner_prefs = &inner_prefs;
        let found = self.scan_slices(coalition, |base, inner| {
            let key = |idx: usize| coalition.iter().fold(0u32, |acc, &a| acc * m + self.obj(idx, a) as u32);
            let mut seen: HashSet<u32> = HashSet::new();
            let mut image: Vec<u8> = Vec::new();
            let mut reps: Vec<usize> = Vec::new();
            for &off in inner {
                if seen.insert(key(base + off)) {
                    image.extend(coalition.iter().map(|&a| self.obj(base + off, a) as u8));
                    reps.push(base + off);
                }
            }
            if reps.len() < 2 {
                return None;
            }
            for (q, &off) in inner.iter().enumerate() {
                let idx = base + off;
                let own = &inner_prefs[q * k..(q + 1) * k];
                let cur: Vec<u8> = coalition.iter().map(|&a| self.obj(idx, a) as u8).collect();
                for (r, &rep) in reps.iter().enumerate() {
                    let alt = &image[r * k..(r + 1) * k];
                    let mut ok = true;
                    let mut gain = false;
                    for t in 0..k {
                        let ra = self.prefs.rank(own[t], alt[t] as usize);
                        let rc = self.prefs.rank(own[t], cur[t] as usize);
                        if all_strict {
                            ok &= ra < rc;
                        } else {
                            ok &= ra <= rc;
                            gain |= ra < rc;
                        }
                    }
                    if ok && (all_strict || gain) {
                        return Some((idx, rep));
                    }
                }
            }
            None
        });
        found.map(|(idx, dev)| self.misreport(axiom, idx, coalition, dev))
    }

    /// Per slice of `agent`: reports with equal `class` must give equal
    /// allocations.
    fn class_violation(&self, axiom: Axiom, agent: usize, class: impl Fn(usize, usize) -> u64 + Sync) -> Option<Witness> {
        let found = self.scan_slices(&[agent], |base, inner| {
            let mut first: HashMap<u64, usize> = HashMap::new();
            for &off in inner {
                let idx = base + off;
                let key = class(idx, self.space.pref_of(idx, agent));
                match first.get(&key) {
                    Some(&prev) if self.f.code_at(prev) != self.f.code_at(idx) => return Some((prev, idx)),
                    Some(_) => {}
                    None => {
                        first.insert(key, idx);
                    }
                }
            }
            None
        });
        found.map(|(idx, dev)| self.misreport(axiom, idx, &[agent], dev))
    }

    /// Lower contour masks: `lc[p * m + x]` holds the objects ranked below `x`.
    fn lower_contours(&self) -> Vec<u32> {
        let mut lc = vec![0u32; self.prefs.len() * self.m];
        for p in 0..self.prefs.len() {
            for x in 0..self.m {
                let rx = self.prefs.rank(p, x);
                lc[p * self.m + x] = (0..self.m)
                    .filter(|&y| self.prefs.rank(p, y) > rx)
                    .fold(0, |acc, y| acc | 1 << y);
            }
        }
        lc
    }

    fn dominated(&self, axiom: Axiom, candidates: &[u32], sources: Option<&HashMap<u32, usize>>) -> Option<Witness> {
        let n = self.n;
        let digits: Vec<u8> = candidates
            .iter()
            .flat_map(|&b| (0..n).map(move |i| self.c.digit(b, i) as u8))
            .collect();
        let found = (0..self.space.len()).into_par_iter().find_map_first(|idx| {
            let a = self.f.code_at(idx);
            let ranks: Vec<&[u8]> = (0..n).map(|i| self.prefs.ranks(self.space.pref_of(idx, i))).collect();
            let cur: Vec<u8> = (0..n).map(|i| ranks[i][self.obj(idx, i)]).collect();
            candidates.iter().enumerate().find_map(|(k, &b)| {
                let d = &digits[k * n..(k + 1) * n];
                (b != a && (0..n).all(|i| ranks[i][d[i] as usize] <= cur[i])).then_some((idx, b))
            })
        });
        found.map(|(idx, b)| Witness {
            axiom,
            profile: self.space.profile(idx),
            deviation: Deviation::Dominated {
                source: sources.map(|s| self.space.profile(s[&b])),
            },
            before: self.f.allocation_at(idx),
            after: self.c.decode(b),
        })
    }
}

pub fn check_sp(f: &TabulatedMechanism) -> Result<Verdict> {
    let fr = Frame::new(f);
    Ok((0..fr.n)
        .find_map(|i| fr.coalition_violation(Axiom::StrategyProof, &[i], false))
        .into())
}

fn coalitions(n: usize, max_size: usize) -> impl Iterator<Item = Vec<usize>> {
    (1..=max_size.min(n)).flat_map(move |k| itertools::Itertools::combinations(0..n, k))
}

fn naive_budget(f: &TabulatedMechanism, budget: u128) -> Result<()> {
    let coalitions = (1u128 << f.space().n().min(100)) - 1;
    let required = (f.space().len() as u128).saturating_mul(coalitions);
    if required > budget {
        return Err(Error::Budget {
            what: "coalition sweep (try the fast engine)",
            required,
            limit: budget,
        });
    }
    Ok(())
}

/// Tries every coalition, smallest first.
pub fn check_gsp_naive(f: &TabulatedMechanism) -> Result<Verdict> {
    check_gsp_naive_with_budget(f, DEFAULT_NAIVE_GSP_BUDGET)
}

pub fn check_gsp_naive_with_budget(f: &TabulatedMechanism, budget: u128) -> Result<Verdict> {
    naive_budget(f, budget)?;
    let fr = Frame::new(f);
    Ok(coalitions(fr.n, fr.n)
        .find_map(|m| fr.coalition_violation(Axiom::GroupStrategyProof, &m, false))
        .into())
}

/// Strategy-proofness plus efficiency of every two-agent marginal on its
/// own image; only singleton and pair coalitions are tried.
pub fn check_gsp_fast(f: &TabulatedMechanism) -> Result<Verdict> {
    let fr = Frame::new(f);
    Ok(coalitions(fr.n, 2)
        .find_map(|m| fr.coalition_violation(Axiom::GroupStrategyProof, &m, false))
        .into())
}

pub fn check_gsp(f: &TabulatedMechanism, engine: Engine) -> Result<Verdict> {
    match engine {
        Engine::Naive => check_gsp_naive(f),
        Engine::Fast => check_gsp_fast(f),
    }
}

/// No coalition can make every member strictly better off.
pub fn check_weak_gsp(f: &TabulatedMechanism) -> Result<Verdict> {
    check_weak_gsp_with_budget(f, DEFAULT_NAIVE_GSP_BUDGET)
}

pub fn check_weak_gsp_with_budget(f: &TabulatedMechanism, budget: u128) -> Result<Verdict> {
    naive_budget(f, budget)?;
    let fr = Frame::new(f);
    Ok(coalitions(fr.n, fr.n)
        .find_map(|m| fr.coalition_violation(Axiom::WeakGroupStrategyProof, &m, true))
        .into())
}

/// Efficiency against every allocation in the mechanism's constraint.
pub fn check_pe(f: &TabulatedMechanism) -> Result<Verdict> {
    let fr = Frame::new(f);
    Ok(fr.dominated(Axiom::ParetoEfficient, f.constraint().codes(), None).into())
}

pub fn check_pe_on_image(f: &TabulatedMechanism) -> Result<Verdict> {
    let fr = Frame::new(f);
    let mut sources: HashMap<u32, usize> = HashMap::new();
    for (idx, &code) in f.table().iter().enumerate() {
        sources.entry(code).or_insert(idx);
    }
    let mut image: Vec<u32> = sources.keys().copied().collect();
    image.sort_unstable();
    Ok(fr.dominated(Axiom::ParetoEfficientOnImage, &image, Some(&sources)).into())
}

pub fn check_nonbossy(f: &TabulatedMechanism) -> Result<Verdict> {
    let fr = Frame::new(f);
    Ok((0..fr.n)
        .find_map(|i| fr.class_violation(Axiom::Nonbossy, i, |idx, _| fr.obj(idx, i) as u64))
        .into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskinMode {
    /// One agent changes her report at a time; contours may weakly grow.
    Chain,
    /// As `Chain`, but contours must strictly grow.
    ChainStrict,
    /// The literal two-profile definition; contours may weakly grow.
    Pairwise,
    /// Two-profile definition with strict growth for every agent.
    PairwiseStrict,
}

pub fn check_maskin(f: &TabulatedMechanism) -> Result<Verdict> {
    check_maskin_with(f, MaskinMode::Chain)
}

pub fn check_maskin_with(f: &TabulatedMechanism, mode: MaskinMode) -> Result<Verdict> {
    let fr = Frame::new(f);
    let lc = fr.lower_contours();
    let m = fr.m;
    let np = fr.prefs.len();
    let strict = matches!(mode, MaskinMode::ChainStrict | MaskinMode::PairwiseStrict);
    let axiom = if strict { Axiom::MaskinStrict } else { Axiom::Maskin };
    let grows = |old: u32, new: u32| new & old == old && (!strict || new != old);
    match mode {
        MaskinMode::Chain | MaskinMode::ChainStrict => {
            let found = (0..fr.space.len()).into_par_iter().find_map_first(|idx| {
                (0..fr.n).find_map(|i| {
                    let x = fr.obj(idx, i);
                    let old = lc[fr.space.pref_of(idx, i) * m + x];
                    (0..np).find_map(|q| {
                        let dev = fr.space.with_pref(idx, i, q);
                        (dev != idx && grows(old, lc[q * m + x]) && f.code_at(dev) != f.code_at(idx))
                            .then_some((i, dev))
                    })
                })
                .map(|(i, dev)| (idx, i, dev))
            });
            Ok(found.map(|(idx, i, dev)| fr.misreport(axiom, idx, &[i], dev)).into())
        }
        MaskinMode::Pairwise | MaskinMode::PairwiseStrict => {
            let len = fr.space.len() as u128;
            if len * len > DEFAULT_PAIRWISE_BUDGET {
                return Err(Error::Budget {
                    what: "two-profile Maskin sweep",
                    required: len * len,
                    limit: DEFAULT_PAIRWISE_BUDGET,
                });
            }
            let found = (0..fr.space.len()).into_par_iter().find_map_first(|idx| {
                let old: Vec<(usize, u32)> = (0..fr.n)
                    .map(|i| {
                        let x = fr.obj(idx, i);
                        (x, lc[fr.space.pref_of(idx, i) * m + x])
                    })
                    .collect();
                (0..fr.space.len()).find_map(|dev| {
                    let all = (0..fr.n).all(|i| grows(old[i].1, lc[fr.space.pref_of(dev, i) * m + old[i].0]));
                    (all && f.code_at(dev) != f.code_at(idx)).then_some((idx, dev))
                })
            });
            Ok(found
                .map(|(idx, dev)| Witness {
                    axiom,
                    profile: fr.space.profile(idx),
                    deviation: Deviation::Profile(fr.space.profile(dev)),
                    before: f.allocation_at(idx),
                    after: f.allocation_at(dev),
                })
                .into())
        }
    }
}

/// Reordering only objects an agent can never receive leaves the outcome
/// unchanged.
pub fn check_irrelevant_objects(f: &TabulatedMechanism) -> Result<Verdict> {
    let fr = Frame::new(f);
    let m = fr.m;
    Ok((0..fr.n)
        .find_map(|i| {
            let reserved = f.constraint().always_infeasible(AgentId(i));
            if reserved.is_empty() {
                return None;
            }
            let keys: Vec<u64> = (0..fr.prefs.len())
                .map(|p| {
                    fr.prefs
                        .order(p)
                        .iter()
                        .filter(|&&x| !reserved.contains(&ObjectId(x as usize)))
                        .fold(0u64, |acc, &x| acc * m as u64 + x as u64)
                })
                .collect();
            fr.class_violation(Axiom::IrrelevantObjects, i, |_, p| keys[p])
        })
        .into())
}

/// Roommates only: agents who top each other are matched.
pub fn check_mutually_best(f: &TabulatedMechanism) -> Result<Verdict> {
    if !f.constraint().is_builtin(BuiltinKind::Roommates) {
        return Err(Error::arg("mutually-best applies to the roommates constraint only"));
    }
    let fr = Frame::new(f);
    let found = (0..fr.space.len()).into_par_iter().find_map_first(|idx| {
        let tops: Vec<usize> = (0..fr.n).map(|i| fr.prefs.order(fr.space.pref_of(idx, i))[0] as usize).collect();
        (0..fr.n)
            .find(|&i| tops[i] > i && tops[tops[i]] == i && fr.obj(idx, i) != tops[i])
            .map(|i| (idx, i, tops[i]))
    });
    Ok(found
        .map(|(idx, i, j)| Witness {
            axiom: Axiom::MutuallyBest,
            profile: fr.space.profile(idx),
            deviation: Deviation::Separated {
                pair: (AgentId(i), AgentId(j)),
            },
            before: f.allocation_at(idx),
            after: f.allocation_at(idx),
        })
        .into())
}

/// Dispatches on `axiom`; `engine` only affects group strategy-proofness.
pub fn check(f: &TabulatedMechanism, axiom: Axiom, engine: Engine) -> Result<Verdict> {
    match axiom {
        Axiom::StrategyProof => check_sp(f),
        Axiom::GroupStrategyProof => check_gsp(f, engine),
        Axiom::WeakGroupStrategyProof => check_weak_gsp(f),
        Axiom::ParetoEfficient => check_pe(f),
        Axiom::ParetoEfficientOnImage => check_pe_on_image(f),
        Axiom::Nonbossy => check_nonbossy(f),
        Axiom::Maskin => check_maskin(f),
        Axiom::MaskinStrict => check_maskin_with(f, MaskinMode::ChainStrict),
        Axiom::IrrelevantObjects => check_irrelevant_objects(f),
        Axiom::MutuallyBest => check_mutually_best(f),
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fixtures;
    use crate::mechanism::{tabulate, FnMechanism, Gsd, GsdOrdering, SerialDictatorship};

    fn full(n: usize, m: usize) -> Arc<Constraint> {
        Arc::new(Constraint::full(n, m).unwrap())
    }

    fn builtin(kind: BuiltinKind, n: usize, m: usize) -> Arc<Constraint> {
        Arc::new(Constraint::builtin(kind, n, m).unwrap())
    }

    fn replays(v: &Verdict, f: &TabulatedMechanism) {
        if let Some(w) = v.witness() {
            assert!(w.replay(f), "witness does not replay: {w}");
        }
    }

    #[test]
    fn dictatorship_on_social_choice() {
        let f = tabulate(&SerialDictatorship::new(builtin(BuiltinKind::SocialChoice, 2, 3), &[0, 1]).unwrap()).unwrap();
        for axiom in [Axiom::StrategyProof, Axiom::GroupStrategyProof, Axiom::Nonbossy, Axiom::Maskin, Axiom::ParetoEfficient] {
            assert!(check(&f, axiom, Engine::Naive).unwrap().is_pass(), "{axiom}");
        }
    }

    #[test]
    fn bossy_fixture() {
        let f = tabulate(&fixtures::bossy(3)).unwrap();
        assert!(check_sp(&f).unwrap().is_pass());
        assert!(check_weak_gsp(&f).unwrap().is_pass());
        for v in [check_nonbossy(&f), check_gsp_naive(&f), check_gsp_fast(&f), check_maskin(&f)] {
            let v = v.unwrap();
            assert!(!v.is_pass());
            replays(&v, &f);
        }
        let w = check_gsp_naive(&f).unwrap();
        match &w.witness().unwrap().deviation {
            Deviation::Misreport { coalition, .. } => assert_eq!(coalition, &vec![AgentId(0), AgentId(1)]),
            d => panic!("unexpected deviation {d:?}"),
        }
        let w = check_nonbossy(&f).unwrap();
        let w = w.witness().unwrap();
        assert_eq!(w.before.get(AgentId(0)), w.after.get(AgentId(0)));
    }

    #[test]
    fn second_choice_is_manipulable() {
        let f = tabulate(&FnMechanism::new(full(1, 3), |p: &Profile| Allocation(vec![p.0[0].top(2).unwrap()]))).unwrap();
        let v = check_sp(&f).unwrap();
        let w = v.witness().unwrap();
        replays(&v, &f);
        let Deviation::Misreport { reports, .. } = &w.deviation else { panic!() };
        assert_eq!(reports[0].top(2).unwrap(), w.profile.0[0].best());
    }

    #[test]
    fn constant_mechanisms() {
        let single = Arc::new(Constraint::new(2, 3, vec![Allocation::from_indices(&[1, 2])]).unwrap());
        let f = tabulate(&FnMechanism::new(single, |_: &Profile| Allocation::from_indices(&[1, 2]))).unwrap();
        assert!(check_gsp_naive(&f).unwrap().is_pass());
        assert!(check_pe(&f).unwrap().is_pass());

        let g = tabulate(&FnMechanism::new(full(2, 3), |_: &Profile| Allocation::from_indices(&[1, 2]))).unwrap();
        let v = check_pe(&g).unwrap();
        assert!(!v.is_pass());
        replays(&v, &g);
        assert!(check_pe_on_image(&g).unwrap().is_pass());
    }

    #[test]
    fn swapping_tops_fails_weak_gsp() {
        // each agent receives the other's top choice
        let f = tabulate(&FnMechanism::new(full(2, 3), |p: &Profile| Allocation(vec![p.0[1].best(), p.0[0].best()]))).unwrap();
        let v = check_weak_gsp(&f).unwrap();
        assert!(!v.is_pass());
        replays(&v, &f);
        let Deviation::Misreport { coalition, .. } = &v.witness().unwrap().deviation else { panic!() };
        assert_eq!(coalition.len(), 2);
    }

    #[test]
    fn social_choice_mechanisms_are_nonbossy() {
        let c = builtin(BuiltinKind::SocialChoice, 3, 3);
        let f = tabulate(&FnMechanism::new(c, |p: &Profile| Allocation(vec![p.0[2].top(3).unwrap(); 3]))).unwrap();
        assert!(check_nonbossy(&f).unwrap().is_pass());
        assert!(!check_sp(&f).unwrap().is_pass());
    }

    #[test]
    fn house_dictatorship_is_nonbossy() {
        let f = tabulate(&SerialDictatorship::new(builtin(BuiltinKind::HouseAllocation, 3, 3), &[1, 2, 0]).unwrap()).unwrap();
        assert!(check_nonbossy(&f).unwrap().is_pass());
        for mode in [MaskinMode::Chain, MaskinMode::Pairwise] {
            assert!(check_maskin_with(&f, mode).unwrap().is_pass());
        }
    }

    #[test]
    fn gsd_on_roommates() {
        let c = builtin(BuiltinKind::Roommates, 4, 4);
        let f = tabulate(&Gsd::new(c, GsdOrdering::fixed(4, &[0, 1, 2, 3]).unwrap()).unwrap()).unwrap();
        assert!(check_gsp_naive(&f).unwrap().is_pass());
        assert!(check_gsp_fast(&f).unwrap().is_pass());
        assert!(check_pe(&f).unwrap().is_pass());
        let v = check_mutually_best(&f).unwrap();
        assert!(!v.is_pass());
        replays(&v, &f);
    }

    #[test]
    fn mutually_best_needs_roommates() {
        let f = tabulate(&SerialDictatorship::new(full(2, 2), &[0, 1]).unwrap()).unwrap();
        assert!(check_mutually_best(&f).is_err());
        let two = builtin(BuiltinKind::Roommates, 2, 2);
        let g = tabulate(&SerialDictatorship::new(two, &[0, 1]).unwrap()).unwrap();
        assert!(check_mutually_best(&g).unwrap().is_pass());
    }

    #[test]
    fn ranking_a_reserved_object_is_detected() {
        // object 2 is never available to agent 0; agent 1 gets 0 or 1
        // depending on where agent 0 ranks it
        let c = Arc::new(Constraint::from_predicate(2, 3, |a| a[0] != 2 && a[1] != 2 && a[0] != a[1]).unwrap());
        let f = tabulate(&FnMechanism::new(c, |p: &Profile| {
            if p.0[0].rank(ObjectId(2)) == 0 {
                Allocation::from_indices(&[0, 1])
            } else {
                Allocation::from_indices(&[1, 0])
            }
        }))
        .unwrap();
        let v = check_irrelevant_objects(&f).unwrap();
        assert!(!v.is_pass());
        replays(&v, &f);

        let sd = tabulate(&SerialDictatorship::new(f.constraint().clone(), &[0, 1]).unwrap()).unwrap();
        assert!(check_irrelevant_objects(&sd).unwrap().is_pass());
        let open = tabulate(&SerialDictatorship::new(full(2, 3), &[0, 1]).unwrap()).unwrap();
        assert!(check_irrelevant_objects(&open).unwrap().is_pass());
    }

    #[test]
    fn naive_budget_is_enforced() {
        let f = tabulate(&SerialDictatorship::new(full(2, 3), &[0, 1]).unwrap()).unwrap();
        assert!(matches!(check_gsp_naive_with_budget(&f, 10), Err(Error::Budget { .. })));
    }

    #[test]
    fn axiom_names_round_trip() {
        for a in Axiom::ALL {
            assert_eq!(Axiom::from_name(a.name()), Some(a));
        }
    }
}
