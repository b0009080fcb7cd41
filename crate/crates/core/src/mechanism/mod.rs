//! Mechanisms: maps from preference profiles to feasible allocations.

mod compose;
mod local;
mod serial;
mod traversing;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

pub use compose::{
    option_correspondence, option_set, split_at_pair, DirectSum, Marginal, ParamDirectSum, PairSplit,
    PermutedAgents, SubMechanismFn,
};
pub use local::LocalDictatorship;
pub use serial::{Extension, Gsd, GsdOrdering, SerialDictatorship};
pub use traversing::{traverse, CompromiserAssignment, ConstraintTraversing};

use crate::error::{Error, Result};
use crate::model::{Allocation, Constraint};
use crate::preferences::{Profile, ProfileSpace};

/// Default cap on the number of profiles a table may cover.
pub const DEFAULT_TABULATION_BUDGET: usize = 10_000_000;

/// A deterministic feasible mechanism `f: P^N -> C`.
pub trait Mechanism: Send + Sync {
    fn constraint(&self) -> &Arc<Constraint>;

    fn assign(&self, profile: &Profile) -> Allocation;

    fn n(&self) -> usize {
        self.constraint().n()
    }

    fn m(&self) -> usize {
        self.constraint().m()
    }
}

impl<T: Mechanism + ?Sized> Mechanism for Arc<T> {
    fn constraint(&self) -> &Arc<Constraint> {
        (**self).constraint()
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        (**self).assign(profile)
    }
}

impl<T: Mechanism + ?Sized> Mechanism for Box<T> {
    fn constraint(&self) -> &Arc<Constraint> {
        (**self).constraint()
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        (**self).assign(profile)
    }
}

/// A mechanism given by a closure. Used for fixtures.
pub struct FnMechanism<F> {
    constraint: Arc<Constraint>,
    f: F,
}

impl<F> FnMechanism<F>
where
    F: Fn(&Profile) -> Allocation + Send + Sync,
{
    pub fn new(constraint: Arc<Constraint>, f: F) -> Self {
        FnMechanism { constraint, f }
    }
}

impl<F> Mechanism for FnMechanism<F>
where
    F: Fn(&Profile) -> Allocation + Send + Sync,
{
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        (self.f)(profile)
    }
}

/// Extensional form: one allocation code per profile index.
#[derive(Clone)]
pub struct TabulatedMechanism {
    constraint: Arc<Constraint>,
    space: ProfileSpace,
    table: Vec<u32>,
}

impl fmt::Debug for TabulatedMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TabulatedMechanism")
            .field("n", &self.space.n())
            .field("m", &self.space.m())
            .field("profiles", &self.table.len())
            .finish()
    }
}

impl PartialEq for TabulatedMechanism {
    fn eq(&self, other: &Self) -> bool {
        self.table == other.table && self.space.n() == other.space.n() && self.space.m() == other.space.m()
    }
}

impl Eq for TabulatedMechanism {}

impl TabulatedMechanism {
    /// Wraps an explicit table of allocation codes, checking length and feasibility.
    pub fn from_table(constraint: Arc<Constraint>, table: Vec<u32>) -> Result<Self> {
        let space = ProfileSpace::new(constraint.n(), constraint.m())?;
        if table.len() != space.len() {
            return Err(Error::arg(format!(
                "table has {} entries, expected {}",
                table.len(),
                space.len()
            )));
        }
        if let Some(profile) = table.iter().position(|&c| !constraint.contains_code(c)) {
            return Err(Error::Infeasible { profile });
        }
        Ok(TabulatedMechanism {
            constraint,
            space,
            table,
        })
    }

    pub fn table(&self) -> &[u32] {
        &self.table
    }

    pub fn into_table(self) -> Vec<u32> {
        self.table
    }

    pub fn space(&self) -> &ProfileSpace {
        &self.space
    }

    #[inline]
    pub fn code_at(&self, profile: usize) -> u32 {
        self.table[profile]
    }

    /// Object index `agent` receives at profile index `profile`.
    #[inline]
    pub fn object_at(&self, profile: usize, agent: usize) -> usize {
        self.constraint.digit(self.table[profile], agent)
    }

    pub fn allocation_at(&self, profile: usize) -> Allocation {
        self.constraint.decode(self.table[profile])
    }

    /// Distinct allocation codes in the image, ascending.
    pub fn image(&self) -> BTreeSet<u32> {
        self.table.iter().copied().collect()
    }

    /// Same table, viewed against a different (containing) constraint.
    pub fn with_constraint(&self, constraint: Arc<Constraint>) -> Result<Self> {
        if constraint.n() != self.space.n() || constraint.m() != self.space.m() {
            return Err(Error::arg("constraint has a different shape"));
        }
        Self::from_table(constraint, self.table.clone())
    }
}

impl Mechanism for TabulatedMechanism {
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        let idx = self
            .space
            .index(profile)
            .expect("profile shape matches the tabulated mechanism");
        self.allocation_at(idx)
    }
}

pub fn tabulate(f: &dyn Mechanism) -> Result<TabulatedMechanism> {
    tabulate_with_budget(f, DEFAULT_TABULATION_BUDGET)
}

/// Evaluates `f` at every profile. Errors if `(m!)^n` exceeds `budget` or
/// any output is infeasible.
pub fn tabulate_with_budget(f: &dyn Mechanism, budget: usize) -> Result<TabulatedMechanism> {
    let constraint = f.constraint().clone();
    let table = tabulate_codes(&constraint, budget, |p| Some(f.assign(p)))?
        .ok_or_else(|| Error::Defect("mechanism returned no allocation".into()))?;
    Ok(TabulatedMechanism {
        space: ProfileSpace::new(constraint.n(), constraint.m())?,
        constraint,
        table,
    })
}

pub(crate) fn check_budget(n: usize, m: usize, budget: usize) -> Result<()> {
    let required = ProfileSpace::count_for(n, m);
    if required > budget as u128 {
        return Err(Error::Budget {
            what: "profile tabulation",
            required,
            limit: budget as u128,
        });
    }
    Ok(())
}

/// Evaluates a partial map over every profile in parallel; `None` anywhere
/// makes the whole result `None`.
pub(crate) fn tabulate_codes<F>(constraint: &Constraint, budget: usize, f: F) -> Result<Option<Vec<u32>>>
where
    F: Fn(&Profile) -> Option<Allocation> + Sync,
{
    check_budget(constraint.n(), constraint.m(), budget)?;
    let space = ProfileSpace::new(constraint.n(), constraint.m())?;
    const CHUNK: usize = 1 << 12;
    let chunks: Vec<Option<Vec<u32>>> = (0..space.len().div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(space.len());
            let mut prefs = space.pref_indices(start);
            let mut profile = space.profile(start);
            let mut out = Vec::with_capacity(end - start);
            for idx in start..end {
                for (i, cur) in prefs.iter_mut().enumerate() {
                    let p = space.pref_of(idx, i);
                    if p != *cur {
                        *cur = p;
                        profile.0[i] = space.preferences().preference(p);
                    }
                }
                out.push(constraint.encode(&f(&profile)?.0));
            }
            Some(out)
        })
        .collect();
    let mut table = Vec::with_capacity(space.len());
    for (chunk, out) in chunks.into_iter().enumerate() {
        let Some(out) = out else { return Ok(None) };
        for (k, &code) in out.iter().enumerate() {
            if !constraint.contains_code(code) {
                return Err(Error::Infeasible {
                    profile: chunk * CHUNK + k,
                });
            }
        }
        table.extend(out);
    }
    Ok(Some(table))
}
