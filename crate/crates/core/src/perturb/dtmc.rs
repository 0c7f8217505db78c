//! PRISM-language export of one preservation experiment, and a parser for the
//! subset of the language the exporter emits.
//!
//! State 0 chooses uniformly among the `K` grid offsets (states `1..=K`).
//! Each offset state moves to the absorbing state `K+1` (labelled
//! `preserved`) or `K+2` (`changed`) according to this engine's forward
//! pass. `P=? [ F "preserved" ]` therefore evaluates to `preserved / K`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{check_node, check_seed, multipliers, offset, NoiseSweep, PreservationCount, SeedInput, Target};
use crate::error::{Error, Result};
use crate::model::Network;

pub const PROPERTY: &str = "P=? [ F \"preserved\" ]";

/// Offsets of the (single-node or joint) grid in enumeration order, with
/// their preservation outcome.
fn tabulate(
    net: &Network,
    seed: &SeedInput,
    sweep: &NoiseSweep,
    level: u32,
    budget: u64,
) -> Result<Vec<(Vec<f64>, bool)>> {
    sweep.check_level(level)?;
    check_seed(net, seed)?;
    let mults = multipliers(sweep.polarity, level);
    let mut eval = net.evaluator();
    let base = eval.label(&seed.x);
    let mut x = seed.x.clone();
    match sweep.target {
        Target::SingleNode(i) => {
            check_node(net, i)?;
            Ok(mults
                .iter()
                .map(|&j| {
                    let o = offset(j, sweep.step);
                    x[i] = seed.x[i] + o;
                    (vec![o], eval.label(&x) == base)
                })
                .collect())
        }
        Target::AllNodes => {
            let n = net.input_dim();
            let size = sweep.joint_size(level, n).filter(|&s| s <= budget).ok_or_else(|| {
                Error::Infeasible(format!(
                    "joint grid at level {level} over {n} nodes exceeds budget {budget}"
                ))
            })?;
            let mut rows = Vec::with_capacity(size as usize);
            let mut idx = vec![0usize; n];
            loop {
                let offs: Vec<f64> = idx.iter().map(|&k| offset(mults[k], sweep.step)).collect();
                for (c, o) in offs.iter().enumerate() {
                    x[c] = seed.x[c] + o;
                }
                rows.push((offs, eval.label(&x) == base));
                // Odometer with the last node fastest.
                let mut c = n;
                loop {
                    if c == 0 {
                        return Ok(rows);
                    }
                    c -= 1;
                    idx[c] += 1;
                    if idx[c] < mults.len() {
                        break;
                    }
                    idx[c] = 0;
                }
            }
        }
    }
}

/// PRISM model text for one (network, seed, target, level) cell, with its count.
pub fn render_dtmc(
    net: &Network,
    seed: &SeedInput,
    sweep: &NoiseSweep,
    level: u32,
    budget: u64,
) -> Result<(String, PreservationCount)> {
    let rows = tabulate(net, seed, sweep, level, budget)?;
    let k = rows.len();
    let preserved = rows.iter().filter(|(_, p)| *p).count();
    let count = PreservationCount::new(preserved as u64, k as u64);
    let (good, bad) = (k + 1, k + 2);

    let mut s = String::new();
    let target = match sweep.target {
        Target::AllNodes => "all nodes".to_string(),
        Target::SingleNode(i) => format!("node {}", i + 1),
    };
    let _ = writeln!(s, "// Classification preservation under discretized input noise.");
    let _ = writeln!(s, "// seed input: {} (class {})", seed.id, seed.class_label);
    let _ = writeln!(s, "// target: {target}");
    let _ = writeln!(
        s,
        "// polarity: {}, step: {}, level: {level}",
        sweep.polarity.as_str(),
        sweep.step
    );
    let _ = writeln!(s, "// preserved {preserved} of {k} offsets");
    s.push_str("dtmc\n\nmodule noise\n");
    let _ = writeln!(s, "  s : [0..{bad}] init 0;");
    s.push_str("  [] s=0 -> ");
    for i in 1..=k {
        if i > 1 {
            s.push_str(" + ");
        }
        let _ = write!(s, "1/{k} : (s'={i})");
    }
    s.push_str(";\n");
    for (i, (offs, kept)) in rows.iter().enumerate() {
        let dest = if *kept { good } else { bad };
        let shown: Vec<String> = offs.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "  [] s={} -> 1 : (s'={dest}); // eta=({})", i + 1, shown.join(", "));
    }
    let _ = writeln!(s, "  [] s={good} -> 1 : (s'={good});");
    let _ = writeln!(s, "  [] s={bad} -> 1 : (s'={bad});");
    s.push_str("endmodule\n\n");
    let _ = writeln!(s, "label \"preserved\" = s={good};");
    let _ = writeln!(s, "label \"changed\" = s={bad};");
    Ok((s, count))
}

fn props_path(model: &Path) -> PathBuf {
    model.with_extension("props")
}

/// Writes the model to `path` and the property to the sibling `.props` file.
pub fn export_dtmc(
    net: &Network,
    seed: &SeedInput,
    sweep: &NoiseSweep,
    level: u32,
    budget: u64,
    path: impl AsRef<Path>,
) -> Result<PreservationCount> {
    let path = path.as_ref();
    let (text, count) = render_dtmc(net, seed, sweep, level, budget)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let props = props_path(path);
    fs::write(&props, format!("{PROPERTY}\n")).map_err(|e| Error::io(&props, e))?;
    Ok(count)
}

/// A parsed single-variable DTMC.
#[derive(Debug, Clone, PartialEq)]
pub struct DtmcModel {
    pub init: u64,
    pub transitions: BTreeMap<u64, Vec<(BigRational, u64)>>,
    pub labels: BTreeMap<String, BTreeSet<u64>>,
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("dtmc line {line}: {msg}"))
}

fn parse_prob(text: &str, line: usize) -> Result<BigRational> {
    let text = text.trim();
    let int = |t: &str| {
        t.trim()
            .parse::<BigInt>()
            .map_err(|_| parse_err(line, format!("bad probability {text:?}")))
    };
    let p = match text.split_once('/') {
        Some((n, d)) => {
            let d = int(d)?;
            if d.is_zero() {
                return Err(parse_err(line, "zero denominator"));
            }
            BigRational::new(int(n)?, d)
        }
        None => BigRational::from_integer(int(text)?),
    };
    Ok(p)
}

fn parse_state_eq(text: &str, var: &str, line: usize) -> Result<u64> {
    let (lhs, rhs) = text
        .split_once('=')
        .ok_or_else(|| parse_err(line, format!("expected `{var}=N`, got {text:?}")))?;
    if lhs.trim() != var {
        return Err(parse_err(line, format!("unknown variable {:?}", lhs.trim())));
    }
    rhs.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad state {:?}", rhs.trim())))
}

/// Parses the DTMC subset produced by [`render_dtmc`]: one bounded integer
/// variable, guarded commands `[] v=N -> p : (v'=M) + ...;` and labels that
/// are disjunctions of `v=N`.
pub fn parse_dtmc(text: &str) -> Result<DtmcModel> {
    let mut var: Option<String> = None;
    let mut init = None;
    let mut saw_header = false;
    let mut transitions: BTreeMap<u64, Vec<(BigRational, u64)>> = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split("//").next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "dtmc" {
            saw_header = true;
        } else if line.starts_with("module ") || line == "endmodule" {
        } else if let Some(rest) = line.strip_prefix("label ") {
            let (name, expr) = rest
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, "label without `=`"))?;
            let name = name.trim().trim_matches('"').to_string();
            let v = var.as_deref().ok_or_else(|| parse_err(line_no, "label before variable"))?;
            let states = expr
                .trim()
                .trim_end_matches(';')
                .split('|')
                .map(|atom| parse_state_eq(atom, v, line_no))
                .collect::<Result<BTreeSet<u64>>>()?;
            labels.insert(name, states);
        } else if let Some(rest) = line.strip_prefix("[]") {
            let v = var.as_deref().ok_or_else(|| parse_err(line_no, "command before variable"))?;
            let (guard, updates) = rest
                .split_once("->")
                .ok_or_else(|| parse_err(line_no, "command without `->`"))?;
            let from = parse_state_eq(guard, v, line_no)?;
            let mut branches = Vec::new();
            for upd in updates.trim().trim_end_matches(';').split('+') {
                let (p, assign) = upd
                    .split_once(':')
                    .ok_or_else(|| parse_err(line_no, format!("update without probability: {upd:?}")))?;
                let assign = assign.trim().trim_start_matches('(').trim_end_matches(')');
                let primed = format!("{v}'");
                let to = parse_state_eq(assign, &primed, line_no)?;
                branches.push((parse_prob(p, line_no)?, to));
            }
            let sum: BigRational = branches.iter().map(|(p, _)| p.clone()).sum();
            if sum != BigRational::one() {
                return Err(parse_err(line_no, format!("probabilities sum to {sum}")));
            }
            if transitions.insert(from, branches).is_some() {
                return Err(parse_err(line_no, format!("state {from} has two commands")));
            }
        } else if line.contains(':') && line.contains("init") {
            // v : [lo..hi] init k;
            let (name, rest) = line.split_once(':').unwrap();
            let init_text = rest
                .split("init")
                .nth(1)
                .ok_or_else(|| parse_err(line_no, "missing init"))?;
            init = Some(
                init_text
                    .trim()
                    .trim_end_matches(';')
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| parse_err(line_no, "bad init value"))?,
            );
            var = Some(name.trim().to_string());
        } else {
            return Err(parse_err(line_no, format!("unsupported construct {line:?}")));
        }
    }
    if !saw_header {
        return Err(Error::Data("dtmc: missing `dtmc` header".into()));
    }
    Ok(DtmcModel {
        init: init.ok_or_else(|| Error::Data("dtmc: no state variable".into()))?,
        transitions,
        labels,
    })
}

/// Label name queried by a `P=? [ F "label" ]` property file.
pub fn parse_props(text: &str) -> Result<String> {
    let t = text.trim();
    let inner = t
        .strip_prefix("P=?")
        .map(str::trim)
        .and_then(|r| r.strip_prefix('['))
        .and_then(|r| r.trim_end().strip_suffix(']'))
        .map(str::trim)
        .and_then(|r| r.strip_prefix('F'))
        .ok_or_else(|| Error::Data(format!("unsupported property {t:?}")))?;
    Ok(inner.trim().trim_matches('"').to_string())
}

impl DtmcModel {
    /// Exact probability of eventually reaching a state carrying `label`.
    /// States without commands are absorbing; cycles other than self-loops
    /// are rejected.
    pub fn eventually(&self, label: &str) -> Result<BigRational> {
        let goal = self
            .labels
            .get(label)
            .ok_or_else(|| Error::Data(format!("dtmc: unknown label {label:?}")))?;
        let mut memo: BTreeMap<u64, BigRational> = BTreeMap::new();
        let mut on_stack = BTreeSet::new();
        self.reach(self.init, goal, &mut memo, &mut on_stack)
    }

    fn reach(
        &self,
        s: u64,
        goal: &BTreeSet<u64>,
        memo: &mut BTreeMap<u64, BigRational>,
        on_stack: &mut BTreeSet<u64>,
    ) -> Result<BigRational> {
        if goal.contains(&s) {
            return Ok(BigRational::one());
        }
        if let Some(p) = memo.get(&s) {
            return Ok(p.clone());
        }
        if !on_stack.insert(s) {
            return Err(Error::Data(format!("dtmc: cycle through state {s}")));
        }
        let mut acc = BigRational::zero();
        let mut stay = BigRational::zero();
        for (p, to) in self.transitions.get(&s).map(Vec::as_slice).unwrap_or(&[]) {
            if *to == s {
                stay += p;
            } else {
                acc += p * self.reach(*to, goal, memo, on_stack)?;
            }
        }
        let leave = BigRational::one() - stay;
        let p = if leave.is_zero() { BigRational::zero() } else { acc / leave };
        on_stack.remove(&s);
        memo.insert(s, p.clone());
        Ok(p)
    }
}
