use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use mechkit::blocks::BlockDecomposition;
use mechkit::checks::check;
use mechkit::search::{enumerate_gsd, enumerate_gsd_orderings, enumerate_local_dictatorships, DEFAULT_FAMILY_BUDGET};
use mechkit::{search, set_equal, tabulate, AgentId, Axiom, AxiomSet, Engine, Error, MechanismSet, SearchBudget,
    SearchSpec};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::format::{Instance, MechanismSpec};
use crate::render::{allocation_json, compact_table, profile_json, witness_json, witness_text,
    DecompositionView};
use crate::CliError;

/// What a command produced: human text, a structured document and an
/// exit status.
#[derive(Debug)]
pub struct Report {
    pub text: String,
    pub json: Value,
    pub code: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    LocalDictatorships,
    Gsd,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::LocalDictatorships => "local_dictatorships",
            Family::Gsd => "gsd",
        }
    }

    fn enumerate(self, inst: &Instance) -> Result<MechanismSet, CliError> {
        Ok(match self {
            Family::LocalDictatorships => enumerate_local_dictatorships(&inst.constraint)?,
            Family::Gsd => enumerate_gsd(&inst.constraint)?,
        })
    }
}

pub fn decompose(inst: &Instance, pair: (usize, usize), grid_only: bool) -> Result<Report, CliError> {
    let (i, j) = pair;
    if i >= j || j >= inst.n() {
        return Err(CliError::Usage(format!(
            "--pair needs two agents i<j below {}, got {i},{j}",
            inst.n()
        )));
    }
    let projection = if inst.n() == 2 {
        (*inst.constraint).clone()
    } else {
        inst.constraint.project(&[AgentId(i), AgentId(j)])?.0
    };
    let d = BlockDecomposition::decompose(&projection)?;
    let view = DecompositionView {
        inst,
        pair,
        projection: &projection,
        d: &d,
    };
    let text = if grid_only {
        view.grid()
    } else {
        format!("{}\n{}", view.summary(), view.grid())
    };
    let mut doc = view.json();
    doc["command"] = json!("decompose");
    Ok(Report {
        text,
        json: doc,
        code: 0,
    })
}

pub fn parse_axioms(list: &str) -> Result<Vec<Axiom>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            Axiom::from_name(s).ok_or_else(|| {
                let known: Vec<&str> = Axiom::ALL.iter().map(|a| a.name()).collect();
                CliError::Usage(format!("unknown axiom '{s}' (known: {})", known.join(", ")))
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(CliError::Usage("--axioms lists nothing".into()))
            } else {
                Ok(v)
            }
        })
}

pub fn check_cmd(inst: &Instance, spec: &MechanismSpec, axioms: &[Axiom], engine: Engine) -> Result<Report, CliError> {
    let f = spec.build(inst)?;
    let tab = tabulate(&*f)?;
    let mut text = format!(
        "{} over {} agents and {} objects, {} profiles\n",
        spec.type_name(),
        inst.n(),
        inst.m(),
        tab.table().len()
    );
    let mut results = Vec::new();
    let mut all_pass = true;
    for &axiom in axioms {
        let verdict = check(&tab, axiom, engine)?;
        match verdict.witness() {
            None => {
                writeln!(text, "{axiom}: pass").unwrap();
                results.push(json!({"axiom": axiom.name(), "pass": true}));
            }
            Some(w) => {
                all_pass = false;
                let replayed = w.replay(&tab);
                writeln!(text, "{axiom}: FAIL").unwrap();
                writeln!(text, "  {}", witness_text(inst, w)).unwrap();
                writeln!(text, "  replayed: {}", if replayed { "yes" } else { "no" }).unwrap();
                results.push(json!({
                    "axiom": axiom.name(),
                    "pass": false,
                    "witness": witness_json(inst, w),
                    "replayed": replayed,
                }));
            }
        }
    }
    Ok(Report {
        text,
        json: json!({
            "command": "check",
            "mechanism": spec.type_name(),
            "engine": engine_name(engine),
            "profiles": tab.table().len(),
            "results": results,
            "pass": all_pass,
        }),
        code: if all_pass { 0 } else { 1 },
    })
}

fn engine_name(e: Engine) -> &'static str {
    match e {
        Engine::Naive => "naive",
        Engine::Fast => "fast",
    }
}

pub struct SearchArgs<'a> {
    pub axioms: &'a [String],
    pub compare: Option<Family>,
    pub budget: SearchBudget,
    pub show_tables: bool,
    pub write_dir: Option<&'a Path>,
}

pub fn search_cmd(inst: &Instance, args: &SearchArgs) -> Result<Report, CliError> {
    let names: Vec<&str> = args.axioms.iter().map(String::as_str).collect();
    let axioms = AxiomSet::parse(&names)?;
    let spec = SearchSpec::new(inst.constraint.clone(), axioms).with_budget(args.budget);
    let (set, complete, nodes) = match search(&spec) {
        Ok(set) => (set, true, None),
        Err(Error::Incomplete { partial, nodes }) => (*partial, false, Some(nodes)),
        Err(e) => return Err(e.into()),
    };
    let c = &inst.constraint;
    let mut text = format!("axioms: {}\n", axioms.names().join(","));
    let mut doc = json!({
        "command": "search",
        "axioms": axioms.names(),
        "complete": complete,
        "count": set.len(),
    });
    let mut code = 0;
    if let Some(nodes) = nodes {
        writeln!(
            text,
            "search incomplete after {nodes} nodes; {} mechanisms found so far",
            set.len()
        )
        .unwrap();
        doc["nodes"] = json!(nodes);
        code = 3;
    } else {
        writeln!(text, "mechanisms: {}", set.len()).unwrap();
    }
    if args.show_tables {
        for (k, t) in set.tables().iter().enumerate() {
            writeln!(text, "  #{}: {}", k + 1, compact_table(inst, c, t)).unwrap();
        }
        doc["tables"] = json!(set.tables().iter().map(|t| compact_table(inst, c, t)).collect::<Vec<_>>());
    }
    if let (Some(family), true) = (args.compare, complete) {
        let other = family.enumerate(inst)?;
        let cmp = set_equal(&set, &other)?;
        let verdict = if cmp.is_equal() { "equal" } else { "unequal" };
        writeln!(
            text,
            "compared with {} ({} mechanisms): {verdict}",
            family.name(),
            other.len()
        )
        .unwrap();
        for (label, list) in [("only found by search", &cmp.only_left), ("only in the family", &cmp.only_right)] {
            if !list.is_empty() {
                writeln!(text, "{label}: {}", list.len()).unwrap();
                for t in list {
                    writeln!(text, "  {}", compact_table(inst, c, t)).unwrap();
                }
            }
        }
        let tables = |list: &Vec<Vec<u32>>| list.iter().map(|t| compact_table(inst, c, t)).collect::<Vec<_>>();
        doc["comparison"] = json!({
            "family": family.name(),
            "family_count": other.len(),
            "equal": cmp.is_equal(),
            "only_search": tables(&cmp.only_left),
            "only_family": tables(&cmp.only_right),
        });
        if !cmp.is_equal() {
            code = 1;
        }
    }
    if let Some(dir) = args.write_dir {
        let specs: Vec<MechanismSpec> = set.mechanisms().map(|f| MechanismSpec::from_table(&f)).collect();
        let n = write_files(dir, inst, &specs)?;
        writeln!(text, "wrote {n} mechanism files to {}", dir.display()).unwrap();
    }
    Ok(Report { text, json: doc, code })
}

pub fn run_cmd(inst: &Instance, spec: &MechanismSpec, profile: &str) -> Result<Report, CliError> {
    let f = spec.build(inst)?;
    let p = inst.parse_profile(profile)?;
    let a = f.assign(&p);
    Ok(Report {
        text: format!("{}\n", inst.allocation_text(&a)),
        json: json!({
            "command": "run",
            "profile": profile_json(inst, &p),
            "allocation": allocation_json(inst, &a),
        }),
        code: 0,
    })
}

/// Every member of `family`, one mechanism file per distinct table.
pub fn family_specs(inst: &Instance, family: Family) -> Result<Vec<MechanismSpec>, CliError> {
    let c = &inst.constraint;
    let candidates: Vec<MechanismSpec> = match family {
        Family::LocalDictatorships => {
            let d = BlockDecomposition::decompose(c)?;
            let count = d.count_sp_pe().unwrap_or(u128::MAX);
            if count > DEFAULT_FAMILY_BUDGET {
                return Err(Error::Budget {
                    what: "local dictatorship enumeration",
                    required: count,
                    limit: DEFAULT_FAMILY_BUDGET,
                }
                .into());
            }
            (0..count as u64)
                .map(|bits| MechanismSpec::LocalDictatorship {
                    dictators: (0..d.len()).map(|b| AgentId((bits >> b & 1) as usize)).collect(),
                })
                .collect()
        }
        Family::Gsd => enumerate_gsd_orderings(c, DEFAULT_FAMILY_BUDGET)?
            .iter()
            .map(MechanismSpec::from_ordering)
            .collect(),
    };
    let tables = candidates
        .par_iter()
        .map(|spec| Ok(tabulate(&*spec.build(inst)?)?.into_table()))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut first: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
    for (k, t) in tables.into_iter().enumerate() {
        first.entry(t).or_insert(k);
    }
    let mut keep: Vec<usize> = first.into_values().collect();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|k| candidates[k].clone()).collect())
}

pub fn enumerate_cmd(
    inst: &Instance,
    family: Family,
    show_tables: bool,
    write_dir: Option<&Path>,
) -> Result<Report, CliError> {
    let specs = family_specs(inst, family)?;
    let mut text = format!("{}: {} distinct mechanisms\n", family.name(), specs.len());
    let mut doc = json!({"command": "enumerate", "family": family.name(), "count": specs.len()});
    if show_tables {
        let c = &inst.constraint;
        let lines = specs
            .iter()
            .map(|s| Ok(compact_table(inst, c, tabulate(&*s.build(inst)?)?.table())))
            .collect::<Result<Vec<_>, CliError>>()?;
        for (k, line) in lines.iter().enumerate() {
            writeln!(text, "  #{}: {line}", k + 1).unwrap();
        }
        doc["tables"] = json!(lines);
    }
    if let Some(dir) = write_dir {
        let n = write_files(dir, inst, &specs)?;
        writeln!(text, "wrote {n} mechanism files to {}", dir.display()).unwrap();
        doc["written"] = json!(n);
    }
    Ok(Report { text, json: doc, code: 0 })
}

/// Writes `instance.txt` and `mechanism-NNNN.txt` files into `dir`.
fn write_files(dir: &Path, inst: &Instance, specs: &[MechanismSpec]) -> Result<usize, CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("instance.txt"), inst.write())?;
    for (k, spec) in specs.iter().enumerate() {
        fs::write(dir.join(format!("mechanism-{:04}.txt", k + 1)), spec.write(inst))?;
    }
    Ok(specs.len())
}

pub fn search_budget(nodes: Option<u64>, seconds: Option<u64>, max_profiles: Option<usize>) -> SearchBudget {
    let mut b = SearchBudget::default();
    if let Some(n) = nodes {
        b.nodes = n;
    }
    if let Some(s) = seconds {
        b.time = Duration::from_secs(s);
    }
    if let Some(p) = max_profiles {
        b.max_profiles = p;
    }
    b
}
