//! Human and machine renderings of decompositions, witnesses and tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use mechkit::blocks::{BlockDecomposition, Cell};
use mechkit::{Allocation, Constraint, Deviation, ObjectId, Profile, Witness};
use serde_json::{json, Value};

use crate::format::{block_labels, Instance};

fn block_char(k: usize) -> char {
    const LETTERS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
    LETTERS.get(k).map_or('*', |&b| b as char)
}

/// Large counts stay exact in JSON by falling back to strings.
pub fn count_json(v: u128) -> Value {
    u64::try_from(v).map_or_else(|_| Value::String(v.to_string()), Value::from)
}

pub struct DecompositionView<'a> {
    pub inst: &'a Instance,
    pub pair: (usize, usize),
    pub projection: &'a Constraint,
    pub d: &'a BlockDecomposition,
}

impl DecompositionView<'_> {
    fn names(&self, set: &BTreeSet<ObjectId>) -> Vec<&str> {
        set.iter().map(|&x| self.inst.name(x)).collect()
    }

    fn cell(&self, (a, b): Cell) -> String {
        format!("({},{})", self.inst.name(a), self.inst.name(b))
    }

    pub fn summary(&self) -> String {
        let (i, j) = self.pair;
        let set = |s: &BTreeSet<ObjectId>| {
            let v = self.names(s);
            if v.is_empty() {
                "-".to_string()
            } else {
                v.join(" ")
            }
        };
        let mut out = String::new();
        writeln!(out, "agents {i} and {j} over {} objects", self.d.m()).unwrap();
        writeln!(out, "never feasible for agent {i}: {}", set(&self.d.r1)).unwrap();
        writeln!(out, "never feasible for agent {j}: {}", set(&self.d.r2)).unwrap();
        let cells: Vec<String> = self.d.cstar.iter().map(|&c| self.cell(c)).collect();
        writeln!(out, "infeasible cells outside those rows and columns: {}", cells.len()).unwrap();
        if !cells.is_empty() {
            writeln!(out, "  {}", cells.join(" ")).unwrap();
        }
        writeln!(out, "blocks: {}", self.d.len()).unwrap();
        for (label, block) in block_labels(self.d).iter().zip(&self.d.blocks) {
            let cells: Vec<String> = block.iter().map(|&c| self.cell(c)).collect();
            writeln!(out, "  {label}: {}", cells.join(" ")).unwrap();
        }
        match self.d.count_sp_pe() {
            Some(c) => writeln!(out, "local dictatorships: {c}").unwrap(),
            None => writeln!(out, "local dictatorships: more than 2^127").unwrap(),
        }
        out
    }

    /// Rows are agent `i`'s objects, columns agent `j`'s, both in
    /// block-diagonal order. Feasible cells are `.`, cells in a block carry
    /// the block's letter and cells in a never-feasible row or column `#`.
    pub fn grid_lines(&self) -> Vec<String> {
        let (rows, cols) = self.d.block_diagonal_order();
        let w = self.inst.names.iter().map(|s| s.chars().count()).max().unwrap_or(1);
        let pad = |s: &str| format!("{s:>w$}");
        let mut lines = Vec::with_capacity(rows.len() + 2);
        let header: Vec<String> = cols.iter().map(|&b| pad(self.inst.name(b))).collect();
        lines.push(format!("{} | {}", pad(""), header.join(" ")));
        lines.push(format!("{}-+-{}", "-".repeat(w), "-".repeat(cols.len() * (w + 1) - 1)));
        for &a in &rows {
            let cells: Vec<String> = cols
                .iter()
                .map(|&b| {
                    let ch = if self.projection.contains(&Allocation(vec![a, b])) {
                        '.'
                    } else if self.d.r1.contains(&a) || self.d.r2.contains(&b) {
                        '#'
                    } else {
                        self.d.block_of(a, b).map_or('?', block_char)
                    };
                    pad(&ch.to_string())
                })
                .collect();
            lines.push(format!("{} | {}", pad(self.inst.name(a)), cells.join(" ")));
        }
        lines
    }

    pub fn legend(&self) -> String {
        let mut parts: Vec<String> = block_labels(self.d)
            .iter()
            .enumerate()
            .map(|(k, label)| format!("{} = {label}", block_char(k)))
            .collect();
        parts.push(". = feasible".into());
        parts.push("# = never feasible".into());
        parts.join(", ")
    }

    pub fn grid(&self) -> String {
        let mut out = self.grid_lines().join("\n");
        out.push('\n');
        writeln!(out, "{}", self.legend()).unwrap();
        out
    }

    pub fn json(&self) -> Value {
        let (rows, cols) = self.d.block_diagonal_order();
        let cell = |(a, b): Cell| json!([self.inst.name(a), self.inst.name(b)]);
        let blocks: Vec<Value> = block_labels(self.d)
            .into_iter()
            .zip(&self.d.blocks)
            .map(|(label, b)| json!({"label": label, "cells": b.iter().map(|&c| cell(c)).collect::<Vec<_>>()}))
            .collect();
        json!({
            "pair": [self.pair.0, self.pair.1],
            "never_feasible": [self.names(&self.d.r1), self.names(&self.d.r2)],
            "infeasible_cells": self.d.cstar.iter().map(|&c| cell(c)).collect::<Vec<_>>(),
            "blocks": blocks,
            "local_dictatorships": self.d.count_sp_pe().map_or(Value::Null, count_json),
            "row_order": rows.iter().map(|&x| self.inst.name(x)).collect::<Vec<_>>(),
            "column_order": cols.iter().map(|&x| self.inst.name(x)).collect::<Vec<_>>(),
            "grid": self.grid_lines(),
        })
    }
}

pub fn allocation_json(inst: &Instance, a: &Allocation) -> Value {
    json!(a.0.iter().map(|&x| inst.name(x)).collect::<Vec<_>>())
}

pub fn profile_json(inst: &Instance, p: &Profile) -> Value {
    json!(p
        .0
        .iter()
        .map(|q| q.order().iter().map(|&x| inst.name(x)).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

pub fn witness_text(inst: &Instance, w: &Witness) -> String {
    let at = inst.profile_text(&w.profile);
    let before = inst.allocation_text(&w.before);
    let after = inst.allocation_text(&w.after);
    match &w.deviation {
        Deviation::Misreport { coalition, reports } => {
            let parts: Vec<String> = coalition
                .iter()
                .zip(reports)
                .map(|(a, r)| format!("agent{} reports {}", a.0, inst.preference_text(r)))
                .collect();
            format!("at {at}: {} turns [{before}] into [{after}]", parts.join(", "))
        }
        Deviation::Profile(q) => {
            format!("at {at}: moving to {} turns [{before}] into [{after}]", inst.profile_text(q))
        }
        Deviation::Dominated { source } => {
            let mut s = format!("at {at}: [{before}] is dominated by [{after}]");
            if let Some(src) = source {
                write!(s, ", which is chosen at {}", inst.profile_text(src)).unwrap();
            }
            s
        }
        Deviation::Separated { pair: (i, j) } => {
            format!("at {at}: agent{} and agent{} top each other but get [{before}]", i.0, j.0)
        }
    }
}

pub fn witness_json(inst: &Instance, w: &Witness) -> Value {
    let deviation = match &w.deviation {
        Deviation::Misreport { coalition, reports } => json!({
            "kind": "misreport",
            "coalition": coalition.iter().map(|a| a.0).collect::<Vec<_>>(),
            "reports": reports.iter().map(|r| inst.preference_text(r)).collect::<Vec<_>>(),
        }),
        Deviation::Profile(q) => json!({"kind": "profile", "profile": profile_json(inst, q)}),
        Deviation::Dominated { source } => json!({
            "kind": "dominated",
            "source": source.as_ref().map_or(Value::Null, |p| profile_json(inst, p)),
        }),
        Deviation::Separated { pair: (i, j) } => json!({"kind": "separated", "pair": [i.0, j.0]}),
    };
    json!({
        "axiom": w.axiom.name(),
        "profile": profile_json(inst, &w.profile),
        "deviation": deviation,
        "before": allocation_json(inst, &w.before),
        "after": allocation_json(inst, &w.after),
    })
}

/// One line per table: the chosen allocations in profile order.
pub fn compact_table(inst: &Instance, c: &Constraint, table: &[u32]) -> String {
    table
        .iter()
        .map(|&code| {
            let a = c.decode(code);
            a.0.iter().map(|&x| inst.name(x)).collect::<Vec<_>>().join(",")
        })
        .collect::<Vec<_>>()
        .join(" ")
}
