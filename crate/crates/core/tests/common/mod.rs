//! Strategies and brute-force oracles shared by the integration tests.
//! The oracles deliberately avoid the library's checkers.

#![allow(dead_code)]

use std::sync::Arc;

use mechkit::{Constraint, Mechanism, TabulatedMechanism};
use proptest::prelude::*;

/// A nonempty constraint over `n` agents and `m` objects.
pub fn constraint(n: usize, m: usize) -> impl Strategy<Value = Arc<Constraint>> {
    let space = m.pow(n as u32);
    proptest::collection::vec(any::<bool>(), space)
        .prop_filter("nonempty", |bits| bits.iter().any(|&b| b))
        .prop_map(move |bits| {
            let codes = (0..space as u32).filter(|&c| bits[c as usize]);
            Arc::new(Constraint::from_codes(n, m, codes).unwrap())
        })
}

/// A nonempty constraint on one of the listed shapes.
pub fn constraint_of_shape(shapes: &'static [(usize, usize)]) -> impl Strategy<Value = Arc<Constraint>> {
    proptest::sample::select(shapes).prop_flat_map(|(n, m)| constraint(n, m))
}

/// Ranks of agent `i` at profile `idx`, object-indexed.
fn ranks(f: &TabulatedMechanism, idx: usize, i: usize) -> Vec<usize> {
    let space = f.space();
    let p = space.preferences().preference(space.pref_of(idx, i));
    (0..space.m()).map(|x| p.rank(mechkit::ObjectId(x))).collect()
}

fn digits(f: &TabulatedMechanism, code: u32) -> Vec<usize> {
    f.constraint().decode(code).indices()
}

/// No coalition can misreport to make all members weakly better and one
/// strictly better.
pub fn oracle_gsp(f: &TabulatedMechanism) -> bool {
    coalition_sweep(f, (1u32..1 << f.space().n()).collect())
}

/// No single agent gains by misreporting.
pub fn oracle_sp(f: &TabulatedMechanism) -> bool {
    coalition_sweep(f, (0..f.space().n()).map(|i| 1u32 << i).collect())
}

fn coalition_sweep(f: &TabulatedMechanism, masks: Vec<u32>) -> bool {
    let space = f.space();
    let n = space.n();
    let np = space.preferences().len();
    (0..space.len()).all(|idx| {
        let a = digits(f, f.code_at(idx));
        let rk: Vec<Vec<usize>> = (0..n).map(|i| ranks(f, idx, i)).collect();
        let base = space.pref_indices(idx);
        masks.iter().all(|&mask| {
            let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            (0..np.pow(members.len() as u32)).all(|mut k| {
                let mut prefs = base.clone();
                for &i in &members {
                    prefs[i] = k % np;
                    k /= np;
                }
                let b = digits(f, f.code_at(space.index_of_prefs(&prefs)));
                let weak = members.iter().all(|&i| rk[i][b[i]] <= rk[i][a[i]]);
                let strict = members.iter().any(|&i| rk[i][b[i]] < rk[i][a[i]]);
                !(weak && strict)
            })
        })
    })
}

/// No feasible allocation Pareto-dominates the chosen one.
pub fn oracle_pe(f: &TabulatedMechanism) -> bool {
    let c = f.constraint();
    let n = c.n();
    (0..f.space().len()).all(|idx| {
        let a = digits(f, f.code_at(idx));
        let rk: Vec<Vec<usize>> = (0..n).map(|i| ranks(f, idx, i)).collect();
        c.iter().all(|alt| {
            let b = alt.indices();
            let weak = (0..n).all(|i| rk[i][b[i]] <= rk[i][a[i]]);
            let strict = (0..n).any(|i| rk[i][b[i]] < rk[i][a[i]]);
            !(weak && strict)
        })
    })
}
