//! Strict preferences over objects, profiles, and their enumeration.
//!
//! Preferences are permutations stored best-first with a precomputed rank
//! array. [`PreferenceSpace`] lists all `m!` of them in lexicographic order
//! and [`ProfileSpace`] indexes the `(m!)^n` profiles in mixed radix, agent 0
//! most significant.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::model::{AgentId, Allocation, ObjectId};

/// Largest object count whose preference space is enumerated.
pub const MAX_ENUMERATED_OBJECTS: usize = 10;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Preference {
    order: Vec<ObjectId>,
    rank: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContourSide {
    Lower,
    Upper,
}

impl Preference {
    /// `order` lists objects best to worst and must be a permutation of `0..m`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let m = order.len();
        let mut rank = vec![usize::MAX; m];
        for (r, &x) in order.iter().enumerate() {
            if x >= m || rank[x] != usize::MAX {
                return Err(Error::arg(format!("{order:?} is not a permutation of 0..{m}")));
            }
            rank[x] = r;
        }
        Ok(Preference {
            order: order.into_iter().map(ObjectId).collect(),
            rank,
        })
    }

    pub(crate) fn from_order_unchecked(order: &[u8]) -> Self {
        let mut rank = vec![0; order.len()];
        for (r, &x) in order.iter().enumerate() {
            rank[x as usize] = r;
        }
        Preference {
            order: order.iter().map(|&x| ObjectId(x as usize)).collect(),
            rank,
        }
    }

    pub fn m(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[ObjectId] {
        &self.order
    }

    /// Position of `x`, 0 for the favourite.
    #[inline]
    pub fn rank(&self, x: ObjectId) -> usize {
        self.rank[x.0]
    }

    /// The `k`-th best object, `k` starting at 1.
    pub fn top(&self, k: usize) -> Result<ObjectId> {
        if k == 0 || k > self.m() {
            return Err(Error::arg(format!("rank {k} outside 1..={}", self.m())));
        }
        Ok(self.order[k - 1])
    }

    pub fn best(&self) -> ObjectId {
        self.order[0]
    }

    pub fn prefers(&self, x: ObjectId, y: ObjectId) -> bool {
        self.rank[x.0] < self.rank[y.0]
    }

    pub fn weakly_prefers(&self, x: ObjectId, y: ObjectId) -> bool {
        self.rank[x.0] <= self.rank[y.0]
    }

    /// Strict lower or upper contour set of `x`; never contains `x`.
    pub fn contour(&self, x: ObjectId, side: ContourSide) -> BTreeSet<ObjectId> {
        let r = self.rank[x.0];
        match side {
            ContourSide::Lower => self.order[r + 1..].iter().copied().collect(),
            ContourSide::Upper => self.order[..r].iter().copied().collect(),
        }
    }

    pub fn lower_contour(&self, x: ObjectId) -> BTreeSet<ObjectId> {
        self.contour(x, ContourSide::Lower)
    }

    pub fn upper_contour(&self, x: ObjectId) -> BTreeSet<ObjectId> {
        self.contour(x, ContourSide::Upper)
    }

    /// Most preferred member of `objects`, if any.
    pub fn best_of(&self, objects: impl IntoIterator<Item = ObjectId>) -> Option<ObjectId> {
        objects.into_iter().min_by_key(|x| self.rank[x.0])
    }

    /// Best object strictly below `x`.
    pub fn next_below(&self, x: ObjectId) -> Option<ObjectId> {
        self.order.get(self.rank[x.0] + 1).copied()
    }

    /// Lexicographic index among all `m!` preferences.
    pub fn index(&self) -> usize {
        let m = self.m();
        let mut used = vec![false; m];
        let mut idx = 0;
        for (pos, x) in self.order.iter().enumerate() {
            let smaller = (0..x.0).filter(|&y| !used[y]).count();
            idx += smaller * factorial(m - 1 - pos);
            used[x.0] = true;
        }
        idx
    }

    /// The same preference with `x` moved to the top.
    pub fn with_top(&self, x: ObjectId) -> Preference {
        let mut order: Vec<usize> = vec![x.0];
        order.extend(self.order.iter().filter(|&&y| y != x).map(|y| y.0));
        Preference::new(order).expect("moving an object keeps a permutation")
    }
}

impl fmt::Debug for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, x) in self.order.iter().enumerate() {
            if k > 0 {
                write!(f, ">")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

/// One preference per agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Profile(pub Vec<Preference>);

impl Profile {
    pub fn new(prefs: Vec<Preference>) -> Result<Self> {
        if let Some(first) = prefs.first() {
            if prefs.iter().any(|p| p.m() != first.m()) {
                return Err(Error::arg("preferences in a profile must range over the same objects"));
            }
        }
        Ok(Profile(prefs))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, agent: AgentId) -> &Preference {
        &self.0[agent.0]
    }

    /// `tau_k`: every agent's `k`-th choice.
    pub fn top(&self, k: usize) -> Result<Allocation> {
        self.0.iter().map(|p| p.top(k)).collect::<Result<Vec<_>>>().map(Allocation)
    }

    pub fn with(&self, agent: AgentId, pref: Preference) -> Profile {
        let mut p = self.clone();
        p.0[agent.0] = pref;
        p
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, p) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

pub fn factorial(k: usize) -> usize {
    (1..=k).product()
}

/// All `m!` preferences in lexicographic order, stored flat.
pub struct PreferenceSpace {
    m: usize,
    count: usize,
    orders: Vec<u8>,
    ranks: Vec<u8>,
}

impl fmt::Debug for PreferenceSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PreferenceSpace").field("m", &self.m).finish()
    }
}

impl PreferenceSpace {
    fn build(m: usize) -> Self {
        let count = factorial(m);
        let mut orders = Vec::with_capacity(count * m);
        let mut ranks = vec![0u8; count * m];
        let mut perm: Vec<u8> = (0..m as u8).collect();
        for k in 0..count {
            orders.extend_from_slice(&perm);
            for (r, &x) in perm.iter().enumerate() {
                ranks[k * m + x as usize] = r as u8;
            }
            next_permutation(&mut perm);
        }
        PreferenceSpace {
            m,
            count,
            orders,
            ranks,
        }
    }

    /// Shared space for `m` objects.
    pub fn get(m: usize) -> Result<Arc<PreferenceSpace>> {
        static SPACES: [OnceLock<Arc<PreferenceSpace>>; MAX_ENUMERATED_OBJECTS + 1] =
            [const { OnceLock::new() }; MAX_ENUMERATED_OBJECTS + 1];
        if m == 0 || m > MAX_ENUMERATED_OBJECTS {
            return Err(Error::Budget {
                what: "preference enumeration",
                required: (1..=m as u128).product(),
                limit: factorial(MAX_ENUMERATED_OBJECTS) as u128,
            });
        }
        Ok(SPACES[m].get_or_init(|| Arc::new(Self::build(m))).clone())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn order(&self, idx: usize) -> &[u8] {
        &self.orders[idx * self.m..(idx + 1) * self.m]
    }

    #[inline]
    pub fn ranks(&self, idx: usize) -> &[u8] {
        &self.ranks[idx * self.m..(idx + 1) * self.m]
    }

    #[inline]
    pub fn rank(&self, idx: usize, x: usize) -> u8 {
        self.ranks[idx * self.m + x]
    }

    pub fn preference(&self, idx: usize) -> Preference {
        Preference::from_order_unchecked(self.order(idx))
    }

    pub fn iter(&self) -> impl Iterator<Item = Preference> + '_ {
        (0..self.count).map(|k| self.preference(k))
    }
}

fn next_permutation(v: &mut [u8]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Mixed-radix indexing of all `(m!)^n` profiles.
#[derive(Clone, Debug)]
pub struct ProfileSpace {
    n: usize,
    prefs: Arc<PreferenceSpace>,
    count: usize,
    strides: Vec<usize>,
}

impl ProfileSpace {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("profiles need at least one agent"));
        }
        let prefs = PreferenceSpace::get(m)?;
        let base = prefs.len();
        let mut strides = vec![1usize; n];
        for i in (0..n - 1).rev() {
            strides[i] = strides[i + 1]
                .checked_mul(base)
                .ok_or_else(|| Error::arg("profile space overflows usize"))?;
        }
        let count = strides[0]
            .checked_mul(base)
            .ok_or_else(|| Error::arg("profile space overflows usize"))?;
        Ok(ProfileSpace {
            n,
            prefs,
            count,
            strides,
        })
    }

    /// `(m!)^n` without building anything, saturating.
    pub fn count_for(n: usize, m: usize) -> u128 {
        let base: u128 = (1..=m as u128).product();
        let mut total: u128 = 1;
        for _ in 0..n {
            total = total.saturating_mul(base);
        }
        total
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.prefs.m()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn preferences(&self) -> &Arc<PreferenceSpace> {
        &self.prefs
    }

    pub fn stride(&self, agent: usize) -> usize {
        self.strides[agent]
    }

    /// Preference index reported by `agent` in profile `idx`.
    #[inline]
    pub fn pref_of(&self, idx: usize, agent: usize) -> usize {
        (idx / self.strides[agent]) % self.prefs.len()
    }

    /// Profile `idx` with `agent`'s preference replaced by preference `pref`.
    #[inline]
    pub fn with_pref(&self, idx: usize, agent: usize, pref: usize) -> usize {
        let cur = self.pref_of(idx, agent);
        idx + pref * self.strides[agent] - cur * self.strides[agent]
    }

    /// Index of the profile with `agent`'s preference set to 0: the first
    /// member of `agent`'s slice through `idx`.
    #[inline]
    pub fn slice_base(&self, idx: usize, agent: usize) -> usize {
        idx - self.pref_of(idx, agent) * self.strides[agent]
    }

    pub fn pref_indices(&self, idx: usize) -> Vec<usize> {
        (0..self.n).map(|i| self.pref_of(idx, i)).collect()
    }

    pub fn index_of_prefs(&self, pref_indices: &[usize]) -> usize {
        pref_indices
            .iter()
            .zip(&self.strides)
            .map(|(p, s)| p * s)
            .sum()
    }

    pub fn profile(&self, idx: usize) -> Profile {
        Profile((0..self.n).map(|i| self.prefs.preference(self.pref_of(idx, i))).collect())
    }

    pub fn index(&self, profile: &Profile) -> Result<usize> {
        if profile.n() != self.n {
            return Err(Error::arg(format!("profile has {} agents, expected {}", profile.n(), self.n)));
        }
        if profile.0.iter().any(|p| p.m() != self.m()) {
            return Err(Error::arg("profile ranges over the wrong number of objects"));
        }
        Ok(self.index_of_prefs(&profile.0.iter().map(Preference::index).collect::<Vec<_>>()))
    }

    pub fn iter(&self) -> impl Iterator<Item = Profile> + '_ {
        (0..self.count).map(|k| self.profile(k))
    }
}

pub fn all_preferences(m: usize) -> Result<impl Iterator<Item = Preference>> {
    let space = PreferenceSpace::get(m)?;
    Ok((0..space.len()).map(move |k| space.preference(k)))
}

pub fn all_profiles(n: usize, m: usize) -> Result<impl Iterator<Item = Profile>> {
    let space = ProfileSpace::new(n, m)?;
    Ok((0..space.len()).map(move |k| space.profile(k)))
}

/// `P^up[A_1, ..., A_k]`: preferences ranking each group above everything
/// not in an earlier group. Returned in lexicographic order.
pub fn lex_preference(m: usize, groups: &[Vec<ObjectId>]) -> Result<Vec<Preference>> {
    let mut used = vec![false; m];
    for g in groups {
        for x in g {
            if x.0 >= m {
                return Err(Error::arg(format!("object {x} out of range")));
            }
            if used[x.0] {
                return Err(Error::arg(format!("object {x} appears in two groups")));
            }
            used[x.0] = true;
        }
    }
    let rest: Vec<ObjectId> = (0..m).filter(|&x| !used[x]).map(ObjectId).collect();
    let mut blocks: Vec<Vec<ObjectId>> = groups.iter().filter(|g| !g.is_empty()).cloned().collect();
    blocks.push(rest);

    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    for block in &blocks {
        let perms = permutations(block);
        out = out
            .into_iter()
            .flat_map(|head| {
                perms.iter().map(move |tail| {
                    let mut v = head.clone();
                    v.extend(tail.iter().map(|x| x.0));
                    v
                })
            })
            .collect();
    }
    out.sort();
    out.into_iter().map(Preference::new).collect()
}

fn permutations(items: &[ObjectId]) -> Vec<Vec<ObjectId>> {
    use itertools::Itertools;
    if items.is_empty() {
        return vec![Vec::new()];
    }
    items.iter().copied().permutations(items.len()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pref(xs: &[usize]) -> Preference {
        Preference::new(xs.to_vec()).unwrap()
    }

    fn set(xs: &[usize]) -> BTreeSet<ObjectId> {
        xs.iter().map(|&x| ObjectId(x)).collect()
    }

    #[test]
    fn tops() {
        let p = pref(&[2, 0, 1]);
        assert_eq!(p.top(1).unwrap(), ObjectId(2));
        assert_eq!(p.top(3).unwrap(), ObjectId(1));
        assert!(p.top(0).is_err());
        assert!(p.top(4).is_err());
        let prof = Profile::new(vec![pref(&[0, 1, 2]), pref(&[2, 1, 0])]).unwrap();
        assert_eq!(prof.top(2).unwrap(), Allocation::from_indices(&[1, 1]));
    }

    #[test]
    fn contours() {
        let p = pref(&[0, 1, 2]);
        assert_eq!(p.lower_contour(ObjectId(0)), set(&[1, 2]));
        assert!(p.upper_contour(ObjectId(0)).is_empty());
        assert_eq!(pref(&[2, 0, 1]).lower_contour(ObjectId(0)), set(&[1]));
    }

    #[test]
    fn rejects_non_permutations() {
        assert!(Preference::new(vec![0, 0, 1]).is_err());
        assert!(Preference::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(all_preferences(3).unwrap().count(), 6);
        let profiles: Vec<_> = all_profiles(2, 3).unwrap().collect();
        assert_eq!(profiles.len(), 36);
        let space = ProfileSpace::new(2, 3).unwrap();
        for (k, p) in profiles.iter().enumerate() {
            assert_eq!(space.index(p).unwrap(), k);
        }
        let distinct: std::collections::HashSet<_> = profiles.iter().collect();
        assert_eq!(distinct.len(), 36);
    }

    #[test]
    fn lexicographic_order() {
        let prefs: Vec<_> = all_preferences(3).unwrap().map(|p| p.to_string()).collect();
        assert_eq!(prefs, vec!["0>1>2", "0>2>1", "1>0>2", "1>2>0", "2>0>1", "2>1>0"]);
        for (k, p) in all_preferences(4).unwrap().enumerate() {
            assert_eq!(p.index(), k);
        }
    }

    #[test]
    fn lex_preference_sets() {
        assert_eq!(lex_preference(3, &[vec![ObjectId(0)]]).unwrap().len(), 2);
        let pinned = lex_preference(3, &[vec![ObjectId(0)], vec![ObjectId(1)]]).unwrap();
        assert_eq!(pinned, vec![pref(&[0, 1, 2])]);
        assert_eq!(lex_preference(4, &[vec![ObjectId(0), ObjectId(1)]]).unwrap().len(), 4);
        assert!(lex_preference(3, &[vec![ObjectId(0)], vec![ObjectId(0)]]).is_err());
    }

    proptest! {
        #[test]
        fn contour_partition(k in 0usize..24, x in 0usize..4) {
            let p = PreferenceSpace::get(4).unwrap().preference(k);
            let x = ObjectId(x);
            let lower = p.lower_contour(x);
            let upper = p.upper_contour(x);
            prop_assert!(lower.is_disjoint(&upper));
            prop_assert!(!lower.contains(&x) && !upper.contains(&x));
            prop_assert_eq!(lower.len() + upper.len() + 1, 4);
            prop_assert!(p.upper_contour(p.top(1).unwrap()).is_empty());
            prop_assert!(p.lower_contour(p.top(4).unwrap()).is_empty());
        }

        #[test]
        fn lex_preference_count(assign in proptest::collection::vec(0usize..3, 5)) {
            // object x goes to group assign[x]; group 2 is "unlisted"
            let groups: Vec<Vec<ObjectId>> = (0..2)
                .map(|g| (0..5).filter(|&x| assign[x] == g).map(ObjectId).collect())
                .collect();
            let got = lex_preference(5, &groups).unwrap();
            let expected: usize = groups.iter().map(|g| factorial(g.len())).product::<usize>()
                * factorial(5 - groups.iter().map(Vec::len).sum::<usize>());
            prop_assert_eq!(got.len(), expected);
            for p in &got {
                let mut placed = 0;
                for g in groups.iter().filter(|g| !g.is_empty()) {
                    for x in g {
                        prop_assert!(p.rank(*x) < placed + g.len());
                    }
                    placed += g.len();
                }
            }
        }
    }
}
