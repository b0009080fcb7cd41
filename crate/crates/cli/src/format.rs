//! Line-based instance and mechanism files.
//!
//! Both formats start with a versioned header, allow `#` comments and
//! refer to objects by name everywhere.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use mechkit::blocks::BlockDecomposition;
use mechkit::mechanism::{
    CompromiserAssignment, ConstraintTraversing, Extension, Gsd, GsdOrdering, LocalDictatorship, SerialDictatorship,
};
use mechkit::{AgentId, Allocation, BuiltinKind, Constraint, Mechanism, ObjectId, Preference, Profile, ProfileSpace,
    Suballocation, TabulatedMechanism};

use crate::CliError;

pub const INSTANCE_HEADER: &str = "mechkit-instance 1";
pub const MECHANISM_HEADER: &str = "mechkit-mechanism 1";

fn parse_err(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse { line, msg: msg.into() }
}

/// Non-empty lines with comments stripped, paired with 1-based line numbers.
fn significant_lines(text: &str) -> Vec<(usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let body = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = body.split_whitespace().collect();
            (!tokens.is_empty()).then_some((i + 1, tokens))
        })
        .collect()
}

fn parse_usize(line: usize, what: &str, tok: &str) -> Result<usize, CliError> {
    tok.parse().map_err(|_| parse_err(line, format!("{what}: expected a number, got '{tok}'")))
}

/// A constraint together with the names of its objects.
#[derive(Clone, Debug)]
pub struct Instance {
    pub names: Vec<String>,
    pub constraint: Arc<Constraint>,
    pub builtin: Option<BuiltinKind>,
}

impl Instance {
    pub fn new(names: Vec<String>, constraint: Constraint, builtin: Option<BuiltinKind>) -> Result<Self, CliError> {
        if names.len() != constraint.m() {
            return Err(CliError::Usage(format!(
                "{} object names for {} objects",
                names.len(),
                constraint.m()
            )));
        }
        Ok(Instance {
            names,
            constraint: Arc::new(constraint),
            builtin,
        })
    }

    pub fn n(&self) -> usize {
        self.constraint.n()
    }

    pub fn m(&self) -> usize {
        self.constraint.m()
    }

    pub fn name(&self, x: ObjectId) -> &str {
        &self.names[x.0]
    }

    pub fn object(&self, name: &str) -> Option<ObjectId> {
        self.names.iter().position(|s| s == name).map(ObjectId)
    }

    /// Same names over a different constraint (used for sub-mechanisms).
    pub fn with_constraint(&self, constraint: Constraint) -> Instance {
        Instance {
            names: self.names.clone(),
            constraint: Arc::new(constraint),
            builtin: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let lines = significant_lines(text);
        let Some((first, header)) = lines.first() else {
            return Err(parse_err(1, "empty instance file"));
        };
        if header.join(" ") != INSTANCE_HEADER {
            return Err(parse_err(*first, format!("expected header '{INSTANCE_HEADER}'")));
        }
        let mut n = None;
        let mut names: Option<Vec<String>> = None;
        let mut builtin = None;
        let mut explicit = false;
        let mut allocations: Vec<(usize, Vec<&str>)> = Vec::new();
        for (line, toks) in &lines[1..] {
            let line = *line;
            match toks[0] {
                "agents" => {
                    if toks.len() != 2 {
                        return Err(parse_err(line, "agents: expected one number"));
                    }
                    let v = parse_usize(line, "agents", toks[1])?;
                    if v == 0 {
                        return Err(parse_err(line, "agents: need at least one agent"));
                    }
                    n = Some(v);
                }
                "objects" => {
                    let list: Vec<String> = toks[1..].iter().map(|s| s.to_string()).collect();
                    if list.is_empty() {
                        return Err(parse_err(line, "objects: need at least one name"));
                    }
                    for (k, s) in list.iter().enumerate() {
                        if list[..k].contains(s) {
                            return Err(parse_err(line, format!("objects: duplicate name '{s}'")));
                        }
                        if s.contains([',', ':', '>', ';']) || s == "-" {
                            return Err(parse_err(line, format!("objects: name '{s}' uses a reserved character")));
                        }
                    }
                    names = Some(list);
                }
                "constraint" => match toks.get(1).copied() {
                    Some("builtin") => {
                        let kind = toks.get(2).copied().unwrap_or("");
                        builtin = Some(BuiltinKind::from_name(kind).ok_or_else(|| {
                            let known: Vec<&str> = BuiltinKind::ALL.iter().map(|k| k.name()).collect();
                            parse_err(line, format!("constraint: unknown builtin '{kind}' (known: {})", known.join(", ")))
                        })?);
                        if toks.len() > 3 {
                            return Err(parse_err(line, "constraint: unexpected trailing fields"));
                        }
                    }
                    Some("explicit") if toks.len() == 2 => explicit = true,
                    _ => return Err(parse_err(line, "constraint: expected 'builtin <kind>' or 'explicit'")),
                },
                "allocation" => allocations.push((line, toks[1..].to_vec())),
                other => return Err(parse_err(line, format!("unknown field '{other}'"))),
            }
        }
        let last = lines.last().map_or(1, |l| l.0);
        let n = n.ok_or_else(|| parse_err(last, "missing 'agents' line"))?;
        let names = names.ok_or_else(|| parse_err(last, "missing 'objects' line"))?;
        let m = names.len();
        if builtin.is_some() && explicit {
            return Err(parse_err(last, "constraint given twice"));
        }
        let constraint = if let Some(kind) = builtin {
            if let Some((line, _)) = allocations.first() {
                return Err(parse_err(*line, "allocation lines need 'constraint explicit'"));
            }
            Constraint::builtin(kind, n, m).map_err(|e| parse_err(last, e.to_string()))?
        } else if explicit {
            let mut list = Vec::with_capacity(allocations.len());
            for (line, toks) in &allocations {
                if toks.len() != n {
                    return Err(parse_err(*line, format!("allocation: expected {n} objects, got {}", toks.len())));
                }
                let objs = toks
                    .iter()
                    .map(|t| {
                        names
                            .iter()
                            .position(|s| s == t)
                            .map(ObjectId)
                            .ok_or_else(|| parse_err(*line, format!("allocation: unknown object '{t}'")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                list.push(Allocation(objs));
            }
            if list.is_empty() {
                return Err(parse_err(last, "explicit constraint lists no allocations"));
            }
            Constraint::new(n, m, list).map_err(|e| parse_err(last, e.to_string()))?
        } else {
            return Err(parse_err(last, "missing 'constraint' line"));
        };
        Instance::new(names, constraint, builtin)
    }

    pub fn write(&self) -> String {
        let mut out = format!("{INSTANCE_HEADER}\nagents {}\nobjects {}\n", self.n(), self.names.join(" "));
        match self.builtin {
            Some(kind) => writeln!(out, "constraint builtin {}", kind.name()).unwrap(),
            None => {
                out.push_str("constraint explicit\n");
                for a in self.constraint.iter() {
                    writeln!(out, "allocation {}", self.allocation_words(&a)).unwrap();
                }
            }
        }
        out
    }

    /// Object names separated by spaces.
    pub fn allocation_words(&self, a: &Allocation) -> String {
        a.0.iter().map(|&x| self.name(x)).collect::<Vec<_>>().join(" ")
    }

    /// `agent0:a agent1:b`
    pub fn allocation_text(&self, a: &Allocation) -> String {
        a.0.iter()
            .enumerate()
            .map(|(i, &x)| format!("agent{i}:{}", self.name(x)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn preference_text(&self, p: &Preference) -> String {
        p.order().iter().map(|&x| self.name(x)).collect::<Vec<_>>().join(">")
    }

    pub fn profile_text(&self, p: &Profile) -> String {
        p.0.iter().map(|q| self.preference_text(q)).collect::<Vec<_>>().join(";")
    }

    /// Parses `a>b>c;c>b>a`, one ranking per agent.
    pub fn parse_profile(&self, text: &str) -> Result<Profile, CliError> {
        let parts: Vec<&str> = text.split(';').collect();
        if parts.len() != self.n() {
            return Err(CliError::Usage(format!(
                "profile: expected {} rankings separated by ';', got {}",
                self.n(),
                parts.len()
            )));
        }
        let prefs = parts
            .iter()
            .enumerate()
            .map(|(i, part)| self.parse_ranking(part).map_err(|msg| CliError::Usage(format!("profile: agent {i}: {msg}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Profile::new(prefs).map_err(CliError::from)
    }

    fn parse_ranking(&self, text: &str) -> Result<Preference, String> {
        let mut order = Vec::with_capacity(self.m());
        for tok in text.split('>').map(str::trim) {
            let x = self.object(tok).ok_or_else(|| format!("unknown object '{tok}'"))?;
            if order.contains(&x.0) {
                return Err(format!("object '{tok}' ranked twice"));
            }
            order.push(x.0);
        }
        if order.len() != self.m() {
            return Err(format!("ranks {} objects, expected all {}", order.len(), self.m()));
        }
        Preference::new(order).map_err(|e| e.to_string())
    }
}

/// What a mechanism file describes, before it is bound to a constraint.
#[derive(Clone, Debug, PartialEq)]
pub enum MechanismSpec {
    SerialDictatorship {
        order: Vec<usize>,
    },
    Gsd {
        order: Vec<usize>,
        overrides: BTreeMap<Suballocation, AgentId>,
    },
    /// One dictator per block, blocks in decomposition order.
    LocalDictatorship {
        dictators: Vec<AgentId>,
    },
    ConstraintTraversing {
        alpha: Vec<(Allocation, Vec<AgentId>)>,
    },
    Extend {
        agents: Vec<AgentId>,
        sub: Box<MechanismSpec>,
        order: Vec<usize>,
        overrides: BTreeMap<Suballocation, AgentId>,
    },
    Table {
        rows: Vec<Allocation>,
    },
}

impl MechanismSpec {
    pub fn type_name(&self) -> &'static str {
        match self {
            MechanismSpec::SerialDictatorship { .. } => "serial_dictatorship",
            MechanismSpec::Gsd { .. } => "gsd",
            MechanismSpec::LocalDictatorship { .. } => "local_dictatorship",
            MechanismSpec::ConstraintTraversing { .. } => "constraint_traversing",
            MechanismSpec::Extend { .. } => "extend",
            MechanismSpec::Table { .. } => "table",
        }
    }

    pub fn from_ordering(zeta: &GsdOrdering) -> Self {
        MechanismSpec::Gsd {
            order: zeta.default_order().iter().map(|a| a.0).collect(),
            overrides: zeta.overrides().clone(),
        }
    }

    pub fn from_table(f: &TabulatedMechanism) -> Self {
        MechanismSpec::Table {
            rows: (0..f.table().len()).map(|p| f.allocation_at(p)).collect(),
        }
    }

    pub fn parse(text: &str, inst: &Instance) -> Result<Self, CliError> {
        let lines = significant_lines(text);
        let Some((first, header)) = lines.first() else {
            return Err(parse_err(1, "empty mechanism file"));
        };
        if header.join(" ") != MECHANISM_HEADER {
            return Err(parse_err(*first, format!("expected header '{MECHANISM_HEADER}'")));
        }
        let mut pos = 1;
        let spec = parse_body(&lines, &mut pos, inst, false)?;
        if let Some((line, _)) = lines.get(pos) {
            return Err(parse_err(*line, "unexpected content after the mechanism"));
        }
        Ok(spec)
    }

    pub fn write(&self, inst: &Instance) -> String {
        let mut out = format!("{MECHANISM_HEADER}\n");
        write_body(self, inst, "", &mut out);
        out
    }

    /// Binds the description to `inst`, validating it.
    pub fn build(&self, inst: &Instance) -> Result<Arc<dyn Mechanism>, CliError> {
        let c = inst.constraint.clone();
        Ok(match self {
            MechanismSpec::SerialDictatorship { order } => Arc::new(SerialDictatorship::new(c, order)?),
            MechanismSpec::Gsd { order, overrides } => Arc::new(Gsd::new(c, ordering(inst.n(), order, overrides)?)?),
            MechanismSpec::LocalDictatorship { dictators } => {
                Arc::new(LocalDictatorship::from_constraint(c, dictators)?)
            }
            MechanismSpec::ConstraintTraversing { alpha } => {
                let a = CompromiserAssignment::from_entries(&c, alpha.iter().cloned())?;
                Arc::new(ConstraintTraversing::new(c, a)?)
            }
            MechanismSpec::Extend {
                agents,
                sub,
                order,
                overrides,
            } => {
                let sub_inst = sub_instance(inst, agents)?;
                let f = sub.build(&sub_inst)?;
                Arc::new(Extension::new(f, agents, c, ordering(inst.n(), order, overrides)?)?)
            }
            MechanismSpec::Table { rows } => {
                let codes = rows.iter().map(|a| c.encode(&a.0)).collect();
                Arc::new(TabulatedMechanism::from_table(c, codes)?)
            }
        })
    }
}

fn ordering(n: usize, order: &[usize], overrides: &BTreeMap<Suballocation, AgentId>) -> Result<GsdOrdering, CliError> {
    let mut z = GsdOrdering::fixed(n, order)?;
    for (mu, &a) in overrides {
        z = z.with_override(mu.clone(), a)?;
    }
    Ok(z)
}

/// The instance a sub-mechanism over `agents` is read against: the same
/// object names over the projection.
fn sub_instance(inst: &Instance, agents: &[AgentId]) -> Result<Instance, CliError> {
    let (proj, _) = inst.constraint.project(agents)?;
    Ok(inst.with_constraint(proj))
}

fn parse_agents(line: usize, what: &str, toks: &[&str], n: usize) -> Result<Vec<usize>, CliError> {
    toks.iter()
        .map(|t| {
            let a = parse_usize(line, what, t)?;
            if a >= n {
                return Err(parse_err(line, format!("{what}: agent {a} out of range (n={n})")));
            }
            Ok(a)
        })
        .collect()
}

/// `-` or `agent:object,...`.
fn parse_suballocation(line: usize, tok: &str, inst: &Instance) -> Result<Suballocation, CliError> {
    let mut mu = Suballocation::empty(inst.n());
    if tok == "-" {
        return Ok(mu);
    }
    for pair in tok.split(',') {
        let (a, x) = pair
            .split_once(':')
            .ok_or_else(|| parse_err(line, format!("override: expected agent:object, got '{pair}'")))?;
        let a = parse_agents(line, "override", &[a], inst.n())?[0];
        let x = inst
            .object(x)
            .ok_or_else(|| parse_err(line, format!("override: unknown object '{x}'")))?;
        if mu.contains(AgentId(a)) {
            return Err(parse_err(line, format!("override: agent {a} assigned twice")));
        }
        mu.assign(AgentId(a), x);
    }
    Ok(mu)
}

fn write_suballocation(mu: &Suballocation, inst: &Instance) -> String {
    let parts: Vec<String> = mu
        .domain()
        .into_iter()
        .map(|a| format!("{}:{}", a.0, inst.name(mu.get(a).expect("in domain"))))
        .collect();
    if parts.is_empty() {
        "-".into()
    } else {
        parts.join(",")
    }
}

fn parse_allocation(line: usize, what: &str, toks: &[&str], inst: &Instance) -> Result<Allocation, CliError> {
    if toks.len() != inst.n() {
        return Err(parse_err(line, format!("{what}: expected {} objects, got {}", inst.n(), toks.len())));
    }
    toks.iter()
        .map(|t| inst.object(t).ok_or_else(|| parse_err(line, format!("{what}: unknown object '{t}'"))))
        .collect::<Result<Vec<_>, _>>()
        .map(Allocation)
}

fn parse_body(
    lines: &[(usize, Vec<&str>)],
    pos: &mut usize,
    inst: &Instance,
    nested: bool,
) -> Result<MechanismSpec, CliError> {
    let n = inst.n();
    let Some((line, toks)) = lines.get(*pos) else {
        return Err(parse_err(lines.last().map_or(1, |l| l.0), "missing 'type' line"));
    };
    if toks[0] != "type" || toks.len() != 2 {
        return Err(parse_err(*line, "expected 'type <kind>'"));
    }
    let kind = toks[1];
    let type_line = *line;
    *pos += 1;

    let mut order: Option<Vec<usize>> = None;
    let mut overrides = BTreeMap::new();
    let mut dictators: HashMap<usize, AgentId> = HashMap::new();
    let mut alpha = Vec::new();
    let mut agents: Option<Vec<AgentId>> = None;
    let mut sub = None;
    let mut rows = Vec::new();

    while let Some((line, toks)) = lines.get(*pos) {
        let line = *line;
        let field = toks[0];
        if nested && field == "sub" && toks.get(1) == Some(&"end") {
            break;
        }
        *pos += 1;
        let allowed = match kind {
            "serial_dictatorship" => &["order"][..],
            "gsd" => &["order", "override"][..],
            "local_dictatorship" => &["dictator"][..],
            "constraint_traversing" => &["alpha"][..],
            "extend" => &["agents", "sub", "order", "override"][..],
            "table" => &["row"][..],
            other => return Err(parse_err(type_line, format!("unknown mechanism type '{other}'"))),
        };
        if !allowed.contains(&field) {
            return Err(parse_err(line, format!("field '{field}' does not apply to type {kind}")));
        }
        match field {
            "order" => {
                if order.is_some() {
                    return Err(parse_err(line, "order given twice"));
                }
                order = Some(parse_agents(line, "order", &toks[1..], n)?);
            }
            "override" => {
                if toks.len() != 4 || toks[2] != "->" {
                    return Err(parse_err(line, "override: expected '<suballocation> -> <agent>'"));
                }
                let mu = parse_suballocation(line, toks[1], inst)?;
                let a = parse_agents(line, "override", &toks[3..], n)?[0];
                if overrides.insert(mu, AgentId(a)).is_some() {
                    return Err(parse_err(line, format!("override: '{}' given twice", toks[1])));
                }
            }
            "dictator" => {
                if toks.len() != 3 {
                    return Err(parse_err(line, "dictator: expected 'E<k> <agent>'"));
                }
                let k = toks[1]
                    .strip_prefix('E')
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| parse_err(line, format!("dictator: bad block label '{}'", toks[1])))?;
                let a = parse_agents(line, "dictator", &toks[2..], n)?[0];
                if dictators.insert(k - 1, AgentId(a)).is_some() {
                    return Err(parse_err(line, format!("dictator: block {} given twice", toks[1])));
                }
            }
            "alpha" => {
                let colon = toks
                    .iter()
                    .position(|&t| t == ":")
                    .ok_or_else(|| parse_err(line, "alpha: expected '<objects> : <agents>'"))?;
                let a = parse_allocation(line, "alpha", &toks[1..colon], inst)?;
                let who = parse_agents(line, "alpha", &toks[colon + 1..], n)?;
                if alpha.iter().any(|(b, _)| *b == a) {
                    return Err(parse_err(line, format!("alpha: allocation '{}' given twice", toks[1..colon].join(" "))));
                }
                alpha.push((a, who.into_iter().map(AgentId).collect()));
            }
            "agents" => {
                if agents.is_some() {
                    return Err(parse_err(line, "agents given twice"));
                }
                agents = Some(parse_agents(line, "agents", &toks[1..], n)?.into_iter().map(AgentId).collect());
            }
            "sub" => {
                if toks.get(1) != Some(&"begin") || toks.len() != 2 {
                    return Err(parse_err(line, "expected 'sub begin'"));
                }
                if sub.is_some() {
                    return Err(parse_err(line, "sub-mechanism given twice"));
                }
                let list = agents
                    .as_ref()
                    .ok_or_else(|| parse_err(line, "'agents' must precede the sub-mechanism"))?;
                let sub_inst = sub_instance(inst, list).map_err(|e| parse_err(line, e.to_string()))?;
                let spec = parse_body(lines, pos, &sub_inst, true)?;
                match lines.get(*pos) {
                    Some((_, t)) if t[..] == ["sub", "end"] => *pos += 1,
                    _ => return Err(parse_err(line, "sub-mechanism is missing 'sub end'")),
                }
                sub = Some(Box::new(spec));
            }
            "row" => rows.push(parse_allocation(line, "row", &toks[1..], inst)?),
            _ => unreachable!("filtered by the allowed list"),
        }
    }

    let end = lines.get(pos.saturating_sub(1)).map_or(type_line, |l| l.0);
    Ok(match kind {
        "serial_dictatorship" => MechanismSpec::SerialDictatorship {
            order: order.ok_or_else(|| parse_err(end, "missing 'order'"))?,
        },
        "gsd" => MechanismSpec::Gsd {
            order: order.ok_or_else(|| parse_err(end, "missing 'order'"))?,
            overrides,
        },
        "local_dictatorship" => {
            let p = dictators.len();
            let list = (0..p)
                .map(|k| dictators.get(&k).copied().ok_or_else(|| parse_err(end, format!("dictator: E{} missing", k + 1))))
                .collect::<Result<Vec<_>, _>>()?;
            MechanismSpec::LocalDictatorship { dictators: list }
        }
        "constraint_traversing" => MechanismSpec::ConstraintTraversing { alpha },
        "extend" => MechanismSpec::Extend {
            agents: agents.ok_or_else(|| parse_err(end, "missing 'agents'"))?,
            sub: sub.ok_or_else(|| parse_err(end, "missing sub-mechanism"))?,
            order: order.unwrap_or_default(),
            overrides,
        },
        "table" => {
            let expected = ProfileSpace::count_for(n, inst.m());
            if rows.len() as u128 != expected {
                return Err(parse_err(end, format!("table: expected {expected} rows, got {}", rows.len())));
            }
            MechanismSpec::Table { rows }
        }
        other => return Err(parse_err(type_line, format!("unknown mechanism type '{other}'"))),
    })
}

fn write_body(spec: &MechanismSpec, inst: &Instance, indent: &str, out: &mut String) {
    let join = |v: &[usize]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ");
    let write_overrides = |overrides: &BTreeMap<Suballocation, AgentId>, out: &mut String| {
        for (mu, a) in overrides {
            writeln!(out, "{indent}override {} -> {}", write_suballocation(mu, inst), a.0).unwrap();
        }
    };
    writeln!(out, "{indent}type {}", spec.type_name()).unwrap();
    match spec {
        MechanismSpec::SerialDictatorship { order } => writeln!(out, "{indent}order {}", join(order)).unwrap(),
        MechanismSpec::Gsd { order, overrides } => {
            writeln!(out, "{indent}order {}", join(order)).unwrap();
            write_overrides(overrides, out);
        }
        MechanismSpec::LocalDictatorship { dictators } => {
            for (k, a) in dictators.iter().enumerate() {
                writeln!(out, "{indent}dictator E{} {}", k + 1, a.0).unwrap();
            }
        }
        MechanismSpec::ConstraintTraversing { alpha } => {
            for (a, who) in alpha {
                let who: Vec<usize> = who.iter().map(|a| a.0).collect();
                writeln!(out, "{indent}alpha {} : {}", inst.allocation_words(a), join(&who)).unwrap();
            }
        }
        MechanismSpec::Extend {
            agents,
            sub,
            order,
            overrides,
        } => {
            let list: Vec<usize> = agents.iter().map(|a| a.0).collect();
            writeln!(out, "{indent}agents {}", join(&list)).unwrap();
            writeln!(out, "{indent}sub begin").unwrap();
            // A bad agent list cannot be written back; fall back to the
            // full names so the file at least shows what was intended.
            let sub_inst = sub_instance(inst, agents).unwrap_or_else(|_| inst.clone());
            write_body(sub, &sub_inst, &format!("{indent}  "), out);
            writeln!(out, "{indent}sub end").unwrap();
            if !order.is_empty() {
                writeln!(out, "{indent}order {}", join(order)).unwrap();
            }
            write_overrides(overrides, out);
        }
        MechanismSpec::Table { rows } => {
            for a in rows {
                writeln!(out, "{indent}row {}", inst.allocation_words(a)).unwrap();
            }
        }
    }
}

/// Labels `E1..Ep` with their cells, in decomposition order.
pub fn block_labels(d: &BlockDecomposition) -> Vec<String> {
    (1..=d.len()).map(|k| format!("E{k}")).collect()
}
