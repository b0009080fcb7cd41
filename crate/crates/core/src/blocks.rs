//! Block structure of the infeasible cells of a two-agent constraint.
//!
//! Cells `(a, b)` of `C̄*` are infeasible allocations where neither object is
//! always infeasible for its agent. Two cells are linked when they share a
//! row or a column; the blocks are the connected components of that relation.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{AgentId, Constraint, ObjectId};

pub type Cell = (ObjectId, ObjectId);

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut x = x;
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockDecomposition {
    m: usize,
    pub r1: BTreeSet<ObjectId>,
    pub r2: BTreeSet<ObjectId>,
    /// Cells of `C̄*` in lexicographic order.
    pub cstar: Vec<Cell>,
    /// Blocks ordered by their smallest cell; cells sorted within each block.
    pub blocks: Vec<Vec<Cell>>,
    block_of: Vec<Option<usize>>,
}

impl BlockDecomposition {
    pub fn decompose(c: &Constraint) -> Result<Self> {
        if c.n() != 2 {
            return Err(Error::arg(format!(
                "block decomposition needs a two-agent constraint, got n={}",
                c.n()
            )));
        }
        let m = c.m();
        let r1 = c.always_infeasible(AgentId(0));
        let r2 = c.always_infeasible(AgentId(1));

        let mut cstar = Vec::new();
        for a in (0..m).map(ObjectId) {
            for b in (0..m).map(ObjectId) {
                if !r1.contains(&a) && !r2.contains(&b) && !c.contains_code(c.encode(&[a, b])) {
                    cstar.push((a, b));
                }
            }
        }

        let mut uf = UnionFind::new(cstar.len());
        let mut row_first = vec![None; m];
        let mut col_first = vec![None; m];
        for (k, &(a, b)) in cstar.iter().enumerate() {
            match row_first[a.0] {
                Some(first) => uf.union(first, k),
                None => row_first[a.0] = Some(k),
            }
            match col_first[b.0] {
                Some(first) => uf.union(first, k),
                None => col_first[b.0] = Some(k),
            }
        }

        // cstar is sorted, so numbering roots on first sight orders blocks by
        // their smallest cell.
        let mut root_block = vec![usize::MAX; cstar.len()];
        let mut blocks: Vec<Vec<Cell>> = Vec::new();
        let mut block_of = vec![None; m * m];
        for (k, &cell) in cstar.iter().enumerate() {
            let root = uf.find(k);
            if root_block[root] == usize::MAX {
                root_block[root] = blocks.len();
                blocks.push(Vec::new());
            }
            let id = root_block[root];
            blocks[id].push(cell);
            block_of[cell.0 .0 * m + cell.1 .0] = Some(id);
        }

        Ok(BlockDecomposition {
            m,
            r1,
            r2,
            cstar,
            blocks,
            block_of,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_of(&self, a: ObjectId, b: ObjectId) -> Option<usize> {
        self.block_of[a.0 * self.m + b.0]
    }

    /// Number of strategy-proof and Pareto efficient two-agent mechanisms,
    /// `2^p` for `p` blocks. `None` if that does not fit in a `u128`.
    pub fn count_sp_pe(&self) -> Option<u128> {
        1u128.checked_shl(self.blocks.len() as u32)
    }

    /// Row (agent 0) and column (agent 1) object orders that put `R_1`/`R_2`
    /// first and then lay each block out on contiguous rows and columns.
    ///
    /// Cells sharing a row or column always land in the same block, so the
    /// rows (and columns) of distinct blocks are disjoint and the grouping is
    /// always achievable.
    pub fn block_diagonal_order(&self) -> (Vec<ObjectId>, Vec<ObjectId>) {
        let axis = |reserved: &BTreeSet<ObjectId>, coord: fn(&Cell) -> ObjectId| {
            let mut order: Vec<ObjectId> = reserved.iter().copied().collect();
            let mut placed = vec![false; self.m];
            for x in &order {
                placed[x.0] = true;
            }
            for block in &self.blocks {
                let mut members: Vec<ObjectId> = block.iter().map(coord).collect();
                members.sort();
                members.dedup();
                for x in members {
                    if !placed[x.0] {
                        placed[x.0] = true;
                        order.push(x);
                    }
                }
            }
            order.extend((0..self.m).map(ObjectId).filter(|x| !placed[x.0]));
            order
        };
        (axis(&self.r1, |c| c.0), axis(&self.r2, |c| c.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Allocation, BuiltinKind};

    fn o(x: usize) -> ObjectId {
        ObjectId(x)
    }

    #[test]
    fn house_three_singletons() {
        let c = Constraint::builtin(BuiltinKind::HouseAllocation, 2, 3).unwrap();
        let d = BlockDecomposition::decompose(&c).unwrap();
        assert!(d.r1.is_empty() && d.r2.is_empty());
        assert_eq!(d.cstar, vec![(o(0), o(0)), (o(1), o(1)), (o(2), o(2))]);
        assert_eq!(d.len(), 3);
        assert_eq!(d.count_sp_pe(), Some(8));
        let (rows, cols) = d.block_diagonal_order();
        assert_eq!(rows, vec![o(0), o(1), o(2)]);
        assert_eq!(cols, vec![o(0), o(1), o(2)]);
    }

    #[test]
    fn social_choice_blocks() {
        let c3 = Constraint::builtin(BuiltinKind::SocialChoice, 2, 3).unwrap();
        let d = BlockDecomposition::decompose(&c3).unwrap();
        assert_eq!(d.cstar.len(), 6);
        assert_eq!(d.len(), 1);
        assert_eq!(d.count_sp_pe(), Some(2));
        let (rows, cols) = d.block_diagonal_order();
        assert_eq!(rows, vec![o(0), o(1), o(2)]);
        assert_eq!(cols, vec![o(0), o(1), o(2)]);

        let c2 = Constraint::builtin(BuiltinKind::SocialChoice, 2, 2).unwrap();
        let d = BlockDecomposition::decompose(&c2).unwrap();
        assert_eq!(d.blocks, vec![vec![(o(0), o(1))], vec![(o(1), o(0))]]);
    }

    #[test]
    fn full_constraint_has_no_blocks() {
        let d = BlockDecomposition::decompose(&Constraint::full(2, 3).unwrap()).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.count_sp_pe(), Some(1));
    }

    #[test]
    fn rejects_other_agent_counts() {
        let c = Constraint::full(3, 2).unwrap();
        assert!(BlockDecomposition::decompose(&c).is_err());
    }

    #[test]
    fn always_infeasible_objects_first() {
        // row 1 and column 2 are entirely infeasible
        let c = Constraint::new(
            2,
            3,
            vec![
                Allocation::from_indices(&[0, 0]),
                Allocation::from_indices(&[2, 1]),
                Allocation::from_indices(&[2, 0]),
            ],
        )
        .unwrap();
        let d = BlockDecomposition::decompose(&c).unwrap();
        assert_eq!(d.r1, BTreeSet::from([o(1)]));
        assert_eq!(d.r2, BTreeSet::from([o(2)]));
        assert_eq!(d.cstar, vec![(o(0), o(1))]);
        let (rows, cols) = d.block_diagonal_order();
        assert_eq!(rows[0], o(1));
        assert_eq!(cols[0], o(2));
    }
}
