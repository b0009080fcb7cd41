use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{AgentId, Allocation, Constraint, ObjectId, Suballocation};
use crate::preferences::Profile;

use super::Mechanism;

/// Cap on decision-tree nodes built for one GSD or extension.
const MAX_TREE_NODES: usize = 1 << 22;

fn check_order(n: usize, order: &[usize], full: bool) -> Result<Vec<AgentId>> {
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::arg(format!("agent order {order:?} is not a list of distinct agents below {n}")));
        }
        seen[i] = true;
    }
    if full && order.len() != n {
        return Err(Error::arg(format!("agent order {order:?} is not a permutation of 0..{n}")));
    }
    Ok(order.iter().map(|&i| AgentId(i)).collect())
}

/// Agent `order[k]` picks her favourite object among those still completable.
#[derive(Clone, Debug)]
pub struct SerialDictatorship {
    constraint: Arc<Constraint>,
    order: Vec<AgentId>,
}

impl SerialDictatorship {
    pub fn new(constraint: Arc<Constraint>, order: &[usize]) -> Result<Self> {
        let order = check_order(constraint.n(), order, true)?;
        Ok(SerialDictatorship { constraint, order })
    }

    pub fn order(&self) -> &[AgentId] {
        &self.order
    }
}

impl Mechanism for SerialDictatorship {
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        let c = &self.constraint;
        let mut live: Vec<u32> = c.codes().to_vec();
        for &d in &self.order {
            let pref = profile.get(d);
            let best = live
                .iter()
                .map(|&code| c.object_of(code, d.0))
                .min_by_key(|&x| pref.rank(x))
                .expect("feasible extensions stay nonempty");
            live.retain(|&code| c.digit(code, d.0) == best.0);
        }
        c.decode(live[0])
    }
}

/// `zeta`: picks the next dictator from the suballocation built so far.
///
/// Backed by a default order (first agent not yet assigned) and explicit
/// overrides for particular suballocations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GsdOrdering {
    n: usize,
    default: Vec<AgentId>,
    overrides: BTreeMap<Suballocation, AgentId>,
}

impl GsdOrdering {
    /// Default order only. `order` need not name every agent (extensions
    /// only consult it for agents outside the fixed set).
    pub fn fixed(n: usize, order: &[usize]) -> Result<Self> {
        Ok(GsdOrdering {
            n,
            default: check_order(n, order, false)?,
            overrides: BTreeMap::new(),
        })
    }

    pub fn with_override(mut self, mu: Suballocation, agent: AgentId) -> Result<Self> {
        if mu.n() != self.n || agent.0 >= self.n {
            return Err(Error::arg(format!("override {mu} -> {agent} does not fit {} agents", self.n)));
        }
        self.overrides.insert(mu, agent);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn default_order(&self) -> &[AgentId] {
        &self.default
    }

    pub fn overrides(&self) -> &BTreeMap<Suballocation, AgentId> {
        &self.overrides
    }

    /// The next dictator at `mu`, or `None` if the default order is used up.
    /// May return an assigned agent if an override says so; construction
    /// of a GSD rejects that.
    pub fn next(&self, mu: &Suballocation) -> Option<AgentId> {
        if let Some(&a) = self.overrides.get(mu) {
            return Some(a);
        }
        self.default.iter().copied().find(|&a| !mu.contains(a))
    }
}

#[derive(Clone, Copy, Debug)]
enum Child {
    Node(u32),
    Leaf(u32),
}

#[derive(Clone, Debug)]
struct Node {
    agent: usize,
    options: Vec<(usize, Child)>,
}

/// The GSD decisions reachable from some starting suballocations.
#[derive(Clone, Debug, Default)]
struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// Validates `zeta` along every path from `mu` while building.
    fn grow(&mut self, c: &Constraint, zeta: &GsdOrdering, mu: &mut Suballocation) -> Result<Child> {
        if let Some(a) = mu.to_allocation() {
            return Ok(Child::Leaf(c.encode(&a.0)));
        }
        let d = zeta
            .next(mu)
            .ok_or_else(|| Error::Validation(format!("next dictator undefined at suballocation {mu}")))?;
        if d.0 >= c.n() || mu.contains(d) {
            return Err(Error::Validation(format!(
                "next dictator at suballocation {mu} is agent {d}, who already holds an object"
            )));
        }
        let options = c.options(d, mu);
        if options.is_empty() {
            return Err(Error::Defect(format!("suballocation {mu} has no feasible extension")));
        }
        if self.nodes.len() >= MAX_TREE_NODES {
            return Err(Error::Budget {
                what: "dictatorship decision tree",
                required: self.nodes.len() as u128 + 1,
                limit: MAX_TREE_NODES as u128,
            });
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            agent: d.0,
            options: Vec::with_capacity(options.len()),
        });
        for x in options {
            mu.assign(d, x);
            let child = self.grow(c, zeta, mu)?;
            mu.0[d.0] = None;
            self.nodes[id].options.push((x.0, child));
        }
        Ok(Child::Node(id as u32))
    }

    fn eval(&self, mut at: Child, profile: &Profile) -> u32 {
        loop {
            match at {
                Child::Leaf(code) => return code,
                Child::Node(id) => {
                    let node = &self.nodes[id as usize];
                    let pref = profile.get(AgentId(node.agent));
                    at = node
                        .options
                        .iter()
                        .min_by_key(|(x, _)| pref.rank(ObjectId(*x)))
                        .expect("nodes have at least one option")
                        .1;
                }
            }
        }
    }
}

/// Generalized serial dictatorship.
#[derive(Clone, Debug)]
pub struct Gsd {
    constraint: Arc<Constraint>,
    zeta: GsdOrdering,
    tree: DecisionTree,
    root: Child,
}

impl Gsd {
    /// Errors if `zeta` names an assigned agent on any reachable suballocation.
    pub fn new(constraint: Arc<Constraint>, zeta: GsdOrdering) -> Result<Self> {
        if zeta.n() != constraint.n() {
            return Err(Error::arg("ordering and constraint disagree on the number of agents"));
        }
        let mut tree = DecisionTree::default();
        let root = tree.grow(&constraint, &zeta, &mut Suballocation::empty(constraint.n()))?;
        Ok(Gsd {
            constraint,
            zeta,
            tree,
            root,
        })
    }

    pub fn zeta(&self) -> &GsdOrdering {
        &self.zeta
    }

    /// Number of reachable decision points.
    pub fn decision_count(&self) -> usize {
        self.tree.nodes.len()
    }
}

impl Mechanism for Gsd {
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        self.constraint.decode(self.tree.eval(self.root, profile))
    }
}

/// `(f^M, zeta)`: the agents in `M` are served by a sub-mechanism on `C^M`,
/// then the GSD given by `zeta` serves everyone else.
pub struct Extension {
    constraint: Arc<Constraint>,
    sub: Arc<dyn Mechanism>,
    agents: Vec<AgentId>,
    zeta: GsdOrdering,
    tree: DecisionTree,
    roots: HashMap<u32, Child>,
}

impl Extension {
    pub fn new(
        sub: Arc<dyn Mechanism>,
        agents: &[AgentId],
        constraint: Arc<Constraint>,
        zeta: GsdOrdering,
    ) -> Result<Self> {
        let (proj, mapping) = constraint.project(agents)?;
        if mapping.len() == constraint.n() {
            return Err(Error::arg("the sub-mechanism's agents must be a proper subset"));
        }
        if zeta.n() != constraint.n() {
            return Err(Error::arg("ordering and constraint disagree on the number of agents"));
        }
        if sub.n() != mapping.len() || sub.m() != constraint.m() {
            return Err(Error::arg(format!(
                "sub-mechanism has shape n={}, m={}; expected n={}, m={}",
                sub.n(),
                sub.m(),
                mapping.len(),
                constraint.m()
            )));
        }
        if let Some(&code) = sub.constraint().codes().iter().find(|&&c| !proj.contains_code(c)) {
            return Err(Error::arg(format!(
                "sub-mechanism may choose {}, which is outside the projection",
                sub.constraint().decode(code)
            )));
        }
        let mut tree = DecisionTree::default();
        let mut roots = HashMap::new();
        for &code in sub.constraint().codes() {
            let mut mu = Suballocation::empty(constraint.n());
            for (k, &a) in mapping.iter().enumerate() {
                mu.assign(a, proj.object_of(code, k));
            }
            roots.insert(code, tree.grow(&constraint, &zeta, &mut mu)?);
        }
        Ok(Extension {
            constraint,
            sub,
            agents: mapping,
            zeta,
            tree,
            roots,
        })
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn sub(&self) -> &Arc<dyn Mechanism> {
        &self.sub
    }

    pub fn zeta(&self) -> &GsdOrdering {
        &self.zeta
    }
}

impl Mechanism for Extension {
    fn constraint(&self) -> &Arc<Constraint> {
        &self.constraint
    }

    fn assign(&self, profile: &Profile) -> Allocation {
        let inner = Profile(self.agents.iter().map(|&a| profile.get(a).clone()).collect());
        let mu = self.sub.assign(&inner);
        let root = self.roots[&self.sub.constraint().encode(&mu.0)];
        self.constraint.decode(self.tree.eval(root, profile))
    }
}
