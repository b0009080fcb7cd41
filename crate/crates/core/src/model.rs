//! Agents, objects, allocations and constraints.
//!
//! A [`Constraint`] is stored extensionally: every allocation over `n` agents
//! and `m` objects has a mixed-radix code (agent 0 is the most significant
//! digit) and the feasible set is a bitset over those codes, alongside the
//! sorted list of feasible codes for iteration.

use std::collections::BTreeSet;
use std::fmt;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};

/// Largest allocation space `m^n` a constraint may span.
pub const MAX_ALLOCATIONS: u64 = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One object per agent; `assignment[i]` is agent `i`'s object.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Allocation(pub Vec<ObjectId>);

impl Allocation {
    pub fn from_indices(objects: &[usize]) -> Self {
        Allocation(objects.iter().map(|&x| ObjectId(x)).collect())
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, agent: AgentId) -> ObjectId {
        self.0[agent.0]
    }

    pub fn objects(&self) -> &[ObjectId] {
        &self.0
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|x| x.0).collect()
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, x) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// A partial allocation: `assignment[i]` is `Some` exactly on the domain.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Suballocation(pub Vec<Option<ObjectId>>);

impl Suballocation {
    pub fn empty(n: usize) -> Self {
        Suballocation(vec![None; n])
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut s = Self::empty(n);
        for &(i, x) in pairs {
            s.0[i] = Some(ObjectId(x));
        }
        s
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, agent: AgentId) -> Option<ObjectId> {
        self.0[agent.0]
    }

    pub fn assign(&mut self, agent: AgentId, object: ObjectId) {
        self.0[agent.0] = Some(object);
    }

    pub fn with(&self, agent: AgentId, object: ObjectId) -> Self {
        let mut s = self.clone();
        s.assign(agent, object);
        s
    }

    pub fn domain(&self) -> Vec<AgentId> {
        (0..self.0.len())
            .filter(|&i| self.0[i].is_some())
            .map(AgentId)
            .collect()
    }

    pub fn contains(&self, agent: AgentId) -> bool {
        self.0[agent.0].is_some()
    }

    pub fn is_complete(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }

    pub fn agrees_with(&self, a: &Allocation) -> bool {
        self.0
            .iter()
            .zip(&a.0)
            .all(|(s, x)| s.map_or(true, |s| s == *x))
    }

    pub fn to_allocation(&self) -> Option<Allocation> {
        self.0
            .iter()
            .copied()
            .collect::<Option<Vec<_>>>()
            .map(Allocation)
    }
}

impl fmt::Display for Suballocation {
    /// `agent:object` pairs separated by commas; `-` for the empty map.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "-");
        }
        let mut first = true;
        for (i, x) in self.0.iter().enumerate() {
            if let Some(x) = x {
                if !first {
                    write!(f, ",")?;
                }
                first = false;
                write!(f, "{i}:{x}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BuiltinKind {
    /// No two agents share an object.
    HouseAllocation,
    /// Objects are agents; feasible allocations are fixed-point-free involutions.
    Roommates,
    /// Every agent receives the same object.
    SocialChoice,
    /// Everything except the diagonal.
    ComplementDiagonal,
}

impl BuiltinKind {
    pub const ALL: [BuiltinKind; 4] = [
        BuiltinKind::HouseAllocation,
        BuiltinKind::Roommates,
        BuiltinKind::SocialChoice,
        BuiltinKind::ComplementDiagonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::HouseAllocation => "house_allocation",
            BuiltinKind::Roommates => "roommates",
            BuiltinKind::SocialChoice => "social_choice",
            BuiltinKind::ComplementDiagonal => "complement_diagonal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// A nonempty set of feasible allocations over `n` agents and `m` objects.
#[derive(Clone, PartialEq, Eq)]
pub struct Constraint {
    n: usize,
    m: usize,
    bits: FixedBitSet,
    feasible: Vec<u32>,
    /// `weights[i] = m^(n-1-i)`.
    weights: Vec<u32>,
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("feasible", &self.iter().map(|a| a.indices()).collect::<Vec<_>>())
            .finish()
    }
}

fn space_size(n: usize, m: usize) -> Result<u64> {
    if n == 0 || m == 0 {
        return Err(Error::arg("constraints need at least one agent and one object"));
    }
    let mut size: u64 = 1;
    for _ in 0..n {
        size = size.saturating_mul(m as u64);
        if size > MAX_ALLOCATIONS {
            return Err(Error::Budget {
                what: "allocation space",
                required: (m as u128).saturating_pow(n as u32),
                limit: MAX_ALLOCATIONS as u128,
            });
        }
    }
    Ok(size)
}

impl Constraint {
    fn from_bits(n: usize, m: usize, bits: FixedBitSet) -> Result<Self> {
        let feasible: Vec<u32> = bits.ones().map(|c| c as u32).collect();
        if feasible.is_empty() {
            return Err(Error::arg("constraint has no feasible allocation"));
        }
        let mut weights = vec![1u32; n];
        for i in (0..n.saturating_sub(1)).rev() {
            weights[i] = weights[i + 1] * m as u32;
        }
        Ok(Constraint {
            n,
            m,
            bits,
            feasible,
            weights,
        })
    }

    /// Builds a constraint from an explicit list of allocations.
    pub fn new(n: usize, m: usize, allocations: impl IntoIterator<Item = Allocation>) -> Result<Self> {
        let size = space_size(n, m)?;
        let mut bits = FixedBitSet::with_capacity(size as usize);
        for a in allocations {
            if a.n() != n {
                return Err(Error::arg(format!("allocation {a} does not have {n} entries")));
            }
            if let Some(x) = a.0.iter().find(|x| x.0 >= m) {
                return Err(Error::arg(format!("object {x} out of range in {a}")));
            }
            bits.insert(encode_with(m, &a.0) as usize);
        }
        Self::from_bits(n, m, bits)
    }

    pub fn from_codes(n: usize, m: usize, codes: impl IntoIterator<Item = u32>) -> Result<Self> {
        let size = space_size(n, m)?;
        let mut bits = FixedBitSet::with_capacity(size as usize);
        for c in codes {
            if c as u64 >= size {
                return Err(Error::arg(format!("allocation code {c} out of range")));
            }
            bits.insert(c as usize);
        }
        Self::from_bits(n, m, bits)
    }

    /// All allocations whose object indices satisfy `pred`.
    pub fn from_predicate(n: usize, m: usize, pred: impl Fn(&[usize]) -> bool) -> Result<Self> {
        let size = space_size(n, m)?;
        let mut bits = FixedBitSet::with_capacity(size as usize);
        let mut digits = vec![0usize; n];
        for code in 0..size as usize {
            if pred(&digits) {
                bits.insert(code);
            }
            for d in digits.iter_mut().rev() {
                *d += 1;
                if *d < m {
                    break;
                }
                *d = 0;
            }
        }
        Self::from_bits(n, m, bits)
    }

    pub fn full(n: usize, m: usize) -> Result<Self> {
        Self::from_predicate(n, m, |_| true)
    }

    pub fn builtin(kind: BuiltinKind, n: usize, m: usize) -> Result<Self> {
        match kind {
            BuiltinKind::HouseAllocation => {
                if m < n {
                    return Err(Error::arg(format!("house allocation needs m >= n (n={n}, m={m})")));
                }
                Self::from_predicate(n, m, |a| {
                    (0..a.len()).all(|i| (i + 1..a.len()).all(|j| a[i] != a[j]))
                })
            }
            BuiltinKind::Roommates => {
                if m != n || n % 2 != 0 {
                    return Err(Error::arg(format!(
                        "roommates needs an even number of agents and m = n (n={n}, m={m})"
                    )));
                }
                Self::from_predicate(n, m, |a| (0..a.len()).all(|i| a[i] != i && a[a[i]] == i))
            }
            BuiltinKind::SocialChoice => Self::from_predicate(n, m, |a| a.iter().all(|&x| x == a[0])),
            BuiltinKind::ComplementDiagonal => {
                if n < 2 || m < 2 {
                    return Err(Error::arg(format!(
                        "complement of the diagonal is empty unless m^n > m (n={n}, m={m})"
                    )));
                }
                Self::from_predicate(n, m, |a| a.iter().any(|&x| x != a[0]))
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of feasible allocations.
    pub fn len(&self) -> usize {
        self.feasible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feasible.is_empty()
    }

    /// Size of the allocation space, `m^n`.
    pub fn space(&self) -> usize {
        self.bits.len()
    }

    /// Sorted codes of the feasible allocations.
    pub fn codes(&self) -> &[u32] {
        &self.feasible
    }

    pub fn encode(&self, objects: &[ObjectId]) -> u32 {
        encode_with(self.m, objects)
    }

    pub fn decode(&self, code: u32) -> Allocation {
        Allocation((0..self.n).map(|i| self.object_of(code, i)).collect())
    }

    /// Object assigned to `agent` by the allocation with this code.
    #[inline]
    pub fn object_of(&self, code: u32, agent: usize) -> ObjectId {
        ObjectId(((code / self.weights[agent]) % self.m as u32) as usize)
    }

    #[inline]
    pub fn digit(&self, code: u32, agent: usize) -> usize {
        ((code / self.weights[agent]) % self.m as u32) as usize
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    #[inline]
    pub fn contains_code(&self, code: u32) -> bool {
        self.bits.contains(code as usize)
    }

    pub fn contains(&self, a: &Allocation) -> bool {
        a.n() == self.n && a.0.iter().all(|x| x.0 < self.m) && self.contains_code(self.encode(&a.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = Allocation> + '_ {
        self.feasible.iter().map(|&c| self.decode(c))
    }

    /// `C^M`: restrictions of feasible allocations to `agents`, re-indexed
    /// densely in ascending original order. Returns the mapping alongside
    /// (`mapping[k]` is the original agent behind new agent `k`).
    pub fn project(&self, agents: &[AgentId]) -> Result<(Constraint, Vec<AgentId>)> {
        let mut mapping: Vec<AgentId> = agents.to_vec();
        mapping.sort();
        mapping.dedup();
        if mapping.is_empty() {
            return Err(Error::arg("projection onto an empty agent set"));
        }
        if let Some(a) = mapping.iter().find(|a| a.0 >= self.n) {
            return Err(Error::arg(format!("agent {a} out of range (n={})", self.n)));
        }
        let k = mapping.len();
        let codes = self.feasible.iter().map(|&c| {
            let mut code = 0u32;
            for a in &mapping {
                code = code * self.m as u32 + self.digit(c, a.0) as u32;
            }
            code
        });
        let projected = Constraint::from_codes(k, self.m, codes.collect::<Vec<_>>())?;
        Ok((projected, mapping))
    }

    /// `C(mu)`: feasible allocations agreeing with `mu` on its domain.
    pub fn feasible_extensions(&self, mu: &Suballocation) -> Vec<Allocation> {
        self.extension_codes(mu).map(|c| self.decode(c)).collect()
    }

    pub(crate) fn extension_codes<'a>(&'a self, mu: &'a Suballocation) -> impl Iterator<Item = u32> + 'a {
        self.feasible.iter().copied().filter(move |&c| {
            mu.0.iter()
                .enumerate()
                .all(|(i, x)| x.map_or(true, |x| self.digit(c, i) == x.0))
        })
    }

    /// `pi_i C(mu)`: objects `agent` can still receive given `mu`, ascending.
    pub fn options(&self, agent: AgentId, mu: &Suballocation) -> Vec<ObjectId> {
        let mut seen = vec![false; self.m];
        for c in self.extension_codes(mu) {
            seen[self.digit(c, agent.0)] = true;
        }
        (0..self.m).filter(|&x| seen[x]).map(ObjectId).collect()
    }

    /// `R_i`: objects no feasible allocation gives to `agent`.
    pub fn always_infeasible(&self, agent: AgentId) -> BTreeSet<ObjectId> {
        let mut seen = vec![false; self.m];
        for &c in &self.feasible {
            seen[self.digit(c, agent.0)] = true;
        }
        (0..self.m).filter(|&x| !seen[x]).map(ObjectId).collect()
    }

    /// True iff every agent can unilaterally repair every infeasible allocation.
    pub fn is_single_compromising(&self) -> bool {
        let m = self.m as u32;
        (0..self.space() as u32)
            .filter(|&c| !self.contains_code(c))
            .all(|c| {
                (0..self.n).all(|i| {
                    let w = self.weights[i];
                    let base = c - self.digit(c, i) as u32 * w;
                    (0..m).any(|x| self.contains_code(base + x * w))
                })
            })
    }

    /// The constraint with objects renamed by `perm` (object `x` becomes `perm[x]`).
    pub fn relabel_objects(&self, perm: &[usize]) -> Result<Constraint> {
        if perm.len() != self.m {
            return Err(Error::arg("relabeling must cover every object"));
        }
        let allocations = self
            .iter()
            .map(|a| Allocation(a.0.iter().map(|x| ObjectId(perm[x.0])).collect()));
        Constraint::new(self.n, self.m, allocations.collect::<Vec<_>>())
    }

    pub fn is_builtin(&self, kind: BuiltinKind) -> bool {
        Constraint::builtin(kind, self.n, self.m).is_ok_and(|c| &c == self)
    }
}

fn encode_with(m: usize, objects: &[ObjectId]) -> u32 {
    objects.iter().fold(0u32, |code, x| code * m as u32 + x.0 as u32)
}
