//! Plain-text encodings of distributions, MDPs, value tables, traces,
//! network parameters and property reports.
//!
//! Numbers are written in decimal notation with at least twelve significant
//! digits. The digits are those of the shortest representation that parses
//! back to the same `f64`, padded with zeros, so every file round-trips
//! bit for bit.
//!
//! MDP files look like this:
//!
//! ```text
//! # two-state example
//! 2 states 2 actions 0.9 gamma
//! P 0 0 : 1 0
//! P 0 1 : 0.5 0.5
//! R 0 0 : 0.1
//! R 0 1 : dist -1 1 | 0.5 0.5
//! T 1
//! start 0
//! ```
//!
//! `P` rows are required for every non-terminal pair, missing `R` rows mean
//! a reward of zero, and terminal states default to zero-reward self-loops.

use std::fmt::Write as _;

use derl_core::dist::CategoricalDist;
use derl_core::mdp::{Reward, TabularMdp};
use derl_core::nn::{Activation, Network};
use derl_core::ops::{DistTable, QTable};
use derl_core::verify::PropertyReport;

use crate::error::{LabError, Result};

const MIN_SIGNIFICANT: usize = 12;

/// Decimal text for `x` with at least twelve significant digits.
pub fn fmt_num(x: f64) -> String {
    let mut s = format!("{x}");
    if !x.is_finite() {
        return s;
    }
    let digits = s.trim_start_matches('-').trim_start_matches(['0', '.']);
    let significant = if x == 0.0 { 1 } else { digits.chars().filter(char::is_ascii_digit).count() };
    if significant < MIN_SIGNIFICANT {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat('0').take(MIN_SIGNIFICANT - significant));
    }
    s
}

pub fn parse_num(token: &str, line: usize) -> Result<f64> {
    token.parse::<f64>().map_err(|_| LabError::parse(line, format!("invalid number `{token}`")))
}

fn parse_index(token: &str, line: usize) -> Result<usize> {
    token.parse::<usize>().map_err(|_| LabError::parse(line, format!("invalid index `{token}`")))
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(" ")
}

fn parse_list(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split_whitespace().map(|t| parse_num(t, line)).collect()
}

/// Meaningful lines with their 1-based numbers; `#` starts a comment.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then_some((i + 1, body))
    })
}

fn core(line: usize) -> impl Fn(derl_core::Error) -> LabError {
    move |e| LabError::parse(line, e.to_string())
}

fn dist_body(d: &CategoricalDist) -> String {
    format!("{} | {}", join(d.atoms()), join(d.probs()))
}

fn parse_dist_body(text: &str, line: usize) -> Result<CategoricalDist> {
    let (atoms, probs) = text
        .split_once('|')
        .ok_or_else(|| LabError::parse(line, "expected `atoms | probs`"))?;
    CategoricalDist::new(parse_list(atoms, line)?, parse_list(probs, line)?).map_err(core(line))
}

/// Two-line record `atoms: ...` / `probs: ...`.
pub fn write_dist(d: &CategoricalDist) -> String {
    format!("atoms: {}\nprobs: {}\n", join(d.atoms()), join(d.probs()))
}

pub fn parse_dist(text: &str) -> Result<CategoricalDist> {
    let mut atoms = None;
    let mut probs = None;
    let mut last = 0;
    for (line, body) in content_lines(text) {
        last = line;
        if let Some(rest) = body.strip_prefix("atoms:") {
            atoms = Some(parse_list(rest, line)?);
        } else if let Some(rest) = body.strip_prefix("probs:") {
            probs = Some(parse_list(rest, line)?);
        } else {
            return Err(LabError::parse(line, "expected `atoms:` or `probs:`"));
        }
    }
    match (atoms, probs) {
        (Some(a), Some(p)) => CategoricalDist::new(a, p).map_err(core(last)),
        _ => Err(LabError::parse(last, "record needs both `atoms:` and `probs:` lines")),
    }
}

pub fn write_mdp(mdp: &TabularMdp) -> String {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut out = format!("{ns} states {na} actions {} gamma\n", fmt_num(mdp.gamma()));
    for s in 0..ns {
        for a in 0..na {
            let _ = writeln!(out, "P {s} {a} : {}", join(mdp.next_probs(s, a)));
        }
    }
    for s in 0..ns {
        for a in 0..na {
            let _ = match mdp.reward(s, a) {
                Reward::Fixed(r) => writeln!(out, "R {s} {a} : {}", fmt_num(*r)),
                Reward::Dist(d) => writeln!(out, "R {s} {a} : dist {}", dist_body(d)),
            };
        }
    }
    for s in (0..ns).filter(|&s| mdp.is_terminal(s)) {
        let _ = writeln!(out, "T {s}");
    }
    let _ = writeln!(out, "start {}", mdp.start());
    out
}

pub fn parse_mdp(text: &str) -> Result<TabularMdp> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| LabError::parse(1, "empty MDP file"))?;
    let words: Vec<&str> = header.split_whitespace().collect();
    if words.len() != 6 || words[1] != "states" || words[3] != "actions" || words[5] != "gamma" {
        return Err(LabError::parse(hline, "expected header `S states A actions G gamma`"));
    }
    let ns = parse_index(words[0], hline)?;
    let na = parse_index(words[2], hline)?;
    let gamma = parse_num(words[4], hline)?;
    if ns == 0 || na == 0 {
        return Err(LabError::parse(hline, "empty state or action set"));
    }
    let mut transition: Vec<Option<Vec<f64>>> = vec![None; ns * na];
    let mut reward: Vec<Option<Reward>> = vec![None; ns * na];
    let mut terminal = vec![false; ns];
    let mut start = 0;
    let pair = |s: &str, a: &str, line: usize| -> Result<usize> {
        let (s, a) = (parse_index(s, line)?, parse_index(a, line)?);
        if s >= ns || a >= na {
            return Err(LabError::parse(line, format!("pair ({s}, {a}) out of range")));
        }
        Ok(s * na + a)
    };
    for (line, body) in lines {
        let (head, rest) = body.split_once(':').map_or((body, None), |(h, r)| (h, Some(r.trim())));
        let head: Vec<&str> = head.split_whitespace().collect();
        match (head.as_slice(), rest) {
            (["P", s, a], Some(rest)) => {
                let row = parse_list(rest, line)?;
                if row.len() != ns {
                    return Err(LabError::parse(line, format!("expected {ns} probabilities")));
                }
                transition[pair(s, a, line)?] = Some(row);
            }
            (["R", s, a], Some(rest)) => {
                let r = match rest.strip_prefix("dist") {
                    Some(d) => Reward::Dist(parse_dist_body(d, line)?),
                    None => Reward::Fixed(parse_num(rest, line)?),
                };
                reward[pair(s, a, line)?] = Some(r);
            }
            (["T", s], None) => {
                let s = parse_index(s, line)?;
                *terminal.get_mut(s).ok_or_else(|| LabError::parse(line, "terminal state out of range"))? = true;
            }
            (["start", s], None) => start = parse_index(s, line)?,
            _ => return Err(LabError::parse(line, format!("unrecognized line `{body}`"))),
        }
    }
    let mut flat = Vec::with_capacity(ns * na * ns);
    for (i, row) in transition.into_iter().enumerate() {
        let s = i / na;
        match row {
            Some(row) => flat.extend(row),
            None if terminal[s] => flat.extend((0..ns).map(|t| if t == s { 1.0 } else { 0.0 })),
            None => return Err(LabError::parse(0, format!("missing P row for ({s}, {})", i % na))),
        }
    }
    let reward = reward.into_iter().map(|r| r.unwrap_or(Reward::Fixed(0.0))).collect();
    Ok(TabularMdp::new(ns, na, flat, reward, gamma, terminal, start)?)
}

/// `S states A actions` header followed by `Q s a : value` lines.
pub fn write_qtable(q: &QTable) -> String {
    let mut out = format!("{} states {} actions\n", q.n_states(), q.n_actions());
    for s in 0..q.n_states() {
        for a in 0..q.n_actions() {
            let _ = writeln!(out, "Q {s} {a} : {}", fmt_num(q.get(s, a)));
        }
    }
    out
}

fn table_header(line: Option<(usize, &str)>) -> Result<(usize, usize)> {
    let (n, header) = line.ok_or_else(|| LabError::parse(1, "empty table"))?;
    match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        [s, "states", a, "actions"] => Ok((parse_index(s, n)?, parse_index(a, n)?)),
        _ => Err(LabError::parse(n, "expected header `S states A actions`")),
    }
}

/// Parses the `tag s a : body` lines of a table into row-major slots.
fn table_rows<'a>(
    lines: impl Iterator<Item = (usize, &'a str)>,
    tag: &str,
    ns: usize,
    na: usize,
) -> Result<Vec<(usize, &'a str)>> {
    let mut slots: Vec<Option<(usize, &str)>> = vec![None; ns * na];
    for (line, body) in lines {
        let (head, rest) = body.split_once(':').ok_or_else(|| LabError::parse(line, "expected `:`"))?;
        match head.split_whitespace().collect::<Vec<_>>().as_slice() {
            [t, s, a] if *t == tag => {
                let (s, a) = (parse_index(s, line)?, parse_index(a, line)?);
                if s >= ns || a >= na {
                    return Err(LabError::parse(line, format!("pair ({s}, {a}) out of range")));
                }
                slots[s * na + a] = Some((line, rest.trim()));
            }
            _ => return Err(LabError::parse(line, format!("expected `{tag} s a : ...`"))),
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, slot)| slot.ok_or_else(|| LabError::parse(0, format!("missing entry ({}, {})", i / na, i % na))))
        .collect()
}

pub fn parse_qtable(text: &str) -> Result<QTable> {
    let mut lines = content_lines(text);
    let (ns, na) = table_header(lines.next())?;
    let values = table_rows(lines, "Q", ns, na)?
        .into_iter()
        .map(|(line, body)| parse_num(body, line))
        .collect::<Result<Vec<_>>>()?;
    Ok(QTable::from_values(ns, na, values)?)
}

/// `S states A actions` header followed by `Z s a : atoms | probs` lines.
pub fn write_dist_table(z: &DistTable) -> String {
    let mut out = format!("{} states {} actions\n", z.n_states(), z.n_actions());
    for s in 0..z.n_states() {
        for a in 0..z.n_actions() {
            let _ = writeln!(out, "Z {s} {a} : {}", dist_body(z.get(s, a)));
        }
    }
    out
}

pub fn parse_dist_table(text: &str) -> Result<DistTable> {
    let mut lines = content_lines(text);
    let (ns, na) = table_header(lines.next())?;
    let entries = table_rows(lines, "Z", ns, na)?
        .into_iter()
        .map(|(line, body)| parse_dist_body(body, line))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistTable::new(ns, na, entries)?)
}

/// CSV with columns `iter,s,a,q`, one row per pair per iteration.
pub fn write_trace_csv(trace: &[QTable]) -> String {
    let mut out = String::from("iter,s,a,q\n");
    for (iter, q) in trace.iter().enumerate() {
        for s in 0..q.n_states() {
            for a in 0..q.n_actions() {
                let _ = writeln!(out, "{iter},{s},{a},{}", fmt_num(q.get(s, a)));
            }
        }
    }
    out
}

/// Shape header (`sizes`, `activations`, `softmax`, `params`) followed by
/// one parameter per line.
pub fn write_network(net: &Network) -> String {
    let sizes: Vec<String> = net.sizes().iter().map(usize::to_string).collect();
    let acts: Vec<&str> = net.activations().iter().map(|a| a.name()).collect();
    let group = net.softmax_group().map_or_else(|| "none".to_string(), |g| g.to_string());
    let mut out = format!(
        "sizes: {}\nactivations: {}\nsoftmax: {group}\nparams: {}\n",
        sizes.join(" "),
        acts.join(" "),
        net.params().len()
    );
    for &p in net.params() {
        out.push_str(&fmt_num(p));
        out.push('\n');
    }
    out
}

pub fn parse_network(text: &str) -> Result<Network> {
    let mut lines = content_lines(text);
    let mut field = |key: &str| -> Result<(usize, String)> {
        let (line, body) = lines.next().ok_or_else(|| LabError::parse(0, format!("missing `{key}:` line")))?;
        let rest = body
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(':'))
            .ok_or_else(|| LabError::parse(line, format!("expected `{key}:`")))?;
        Ok((line, rest.trim().to_string()))
    };
    let (line, sizes) = field("sizes")?;
    let sizes = sizes.split_whitespace().map(|t| parse_index(t, line)).collect::<Result<Vec<_>>>()?;
    let (line, acts) = field("activations")?;
    let acts = acts
        .split_whitespace()
        .map(|t| Activation::from_name(t).ok_or_else(|| LabError::parse(line, format!("unknown activation `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    let (line, group) = field("softmax")?;
    let group = if group == "none" { None } else { Some(parse_index(&group, line)?) };
    let (line, count) = field("params")?;
    let count = parse_index(&count, line)?;
    let params = lines.map(|(line, body)| parse_num(body, line)).collect::<Result<Vec<_>>>()?;
    if params.len() != count {
        return Err(LabError::parse(line, format!("header announces {count} parameters, found {}", params.len())));
    }
    Network::from_params(&sizes, &acts, group, params).map_err(core(line))
}

/// Aligned human-readable table of property reports.
pub fn report_table(reports: &[PropertyReport]) -> String {
    let mut out = format!("{:<26} {:>7} {:>9} {:>14}  {}\n", "property", "trials", "failures", "worst_margin", "status");
    for r in reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{:<26} {:>7} {:>9} {:>14.6e}  {status}", r.name, r.trials, r.failures, r.worst_margin);
    }
    out
}

/// CSV with columns `property,trials,failures,worst_margin,seed`.
pub fn report_csv(reports: &[PropertyReport]) -> String {
    let mut out = String::from("property,trials,failures,worst_margin,seed\n");
    for r in reports {
        let _ = writeln!(out, "{},{},{},{},{}", r.name, r.trials, r.failures, fmt_num(r.worst_margin), r.seed);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_twelve_significant_digits() {
        assert_eq!(fmt_num(0.1), "0.100000000000");
        assert_eq!(fmt_num(3.0), "3.00000000000");
        assert_eq!(fmt_num(-0.25), "-0.250000000000");
        assert_eq!(fmt_num(0.0), "0.00000000000");
        assert_eq!(fmt_num(1.0 / 3.0), format!("{}", 1.0 / 3.0));
    }

    #[test]
    fn numbers_round_trip_bitwise() {
        for x in [0.1, 1e-300, -7.5e12, 1.0 / 3.0, f64::MIN_POSITIVE, 5e-324, 123456789.125] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn dist_record_layout() {
        let d = CategoricalDist::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let text = write_dist(&d);
        assert!(text.starts_with("atoms: -1.00000000000 1.00000000000\nprobs: "));
        assert_eq!(parse_dist(&text).unwrap(), d);
    }

    #[test]
    fn mdp_file_with_defaults_and_comments() {
        let text = "# toy\n2 states 2 actions 0.9 gamma\nP 0 0 : 1 0\nP 0 1 : 0.5 0.5 # split\nR 0 1 : dist -1 1 | 0.5 0.5\nT 1\n";
        let mdp = parse_mdp(text).unwrap();
        assert_eq!(mdp.expected_reward(0, 0), 0.0);
        assert_eq!(mdp.expected_reward(0, 1), 0.0);
        assert!(mdp.is_terminal(1));
        assert_eq!(mdp.next_probs(1, 0), &[0.0, 1.0]);
        assert_eq!(parse_mdp(&write_mdp(&mdp)).unwrap(), mdp);
    }

    #[test]
    fn mdp_errors_carry_line_numbers() {
        let err = parse_mdp("2 states 1 actions 0.9 gamma\nP 0 0 : 1 0\nP 5 0 : 1 0\n").unwrap_err();
        assert!(matches!(err, LabError::Parse { line: 3, .. }), "{err}");
        let err = parse_mdp("2 states 1 actions 0.9 gamma\nP 0 0 : 1 0\n").unwrap_err();
        assert!(err.to_string().contains("missing P row"));
        let err = parse_mdp("2 states 1 actions 0.9 gamma\nP 0 0 : 1 0\nP 1 0 : 0.5 x\n").unwrap_err();
        assert!(matches!(err, LabError::Parse { line: 3, .. }));
    }

    #[test]
    fn report_csv_columns() {
        let r = PropertyReport { name: "prop1", trials: 3, failures: 0, worst_margin: 0.5, seed: 9 };
        assert_eq!(report_csv(&[r.clone()]), "property,trials,failures,worst_margin,seed\nprop1,3,0,0.500000000000,9\n");
        assert!(report_table(&[r]).contains("PASS"));
    }
}
