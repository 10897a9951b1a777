//! Reader for MATPOWER-style `.m` case files.
//!
//! Only the DC-relevant columns are used: bus loads, generator limits and
//! status, branch reactance, rating and status, and polynomial costs.

use std::path::Path;

use crate::error::{Error, Result};
use crate::netmodel::{Branch, Bus, CostCurve, Generator, PowerNetwork, DEFAULT_BASE_MVA};

struct Matrix {
    rows: Vec<(usize, Vec<f64>)>,
}

struct RawCase {
    base_mva: Option<f64>,
    bus: Option<Matrix>,
    gen: Option<Matrix>,
    branch: Option<Matrix>,
    gencost: Option<Matrix>,
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn parse_rows(body: &str, name: &str, line_no: usize, path: &str, m: &mut Matrix) -> Result<()> {
    for chunk in body.split(';').map(str::trim).filter(|c| !c.is_empty()) {
        let values = chunk
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(path, line_no, format!("invalid number `{t}` in mpc.{name}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        m.rows.push((line_no, values));
    }
    Ok(())
}

fn scan(text: &str, path: &str) -> Result<RawCase> {
    let mut raw = RawCase {
        base_mva: None,
        bus: None,
        gen: None,
        branch: None,
        gencost: None,
    };
    // Matrix being read: field name (None when skipped), opening line, rows.
    let mut open: Option<(Option<String>, usize, Matrix)> = None;

    for (k, full) in text.lines().enumerate() {
        let line_no = k + 1;
        let mut line = strip_comment(full).trim();
        if line.is_empty() {
            continue;
        }

        if open.is_none() {
            let Some(rest) = line.strip_prefix("mpc.") else {
                continue;
            };
            let Some((name, value)) = rest.split_once('=') else {
                return Err(parse_err(path, line_no, "expected `mpc.<field> = ...`"));
            };
            let (name, value) = (name.trim(), value.trim());
            if let Some(after) = value.strip_prefix('[') {
                let keep = matches!(name, "bus" | "gen" | "branch" | "gencost");
                open = Some((keep.then(|| name.to_string()), line_no, Matrix { rows: Vec::new() }));
                line = after.trim();
            } else if let Some(after) = value.strip_prefix('{') {
                // Cell arrays (bus names and similar) are skipped whole.
                if after.contains('}') {
                    continue;
                }
                open = Some((None, line_no, Matrix { rows: Vec::new() }));
                continue;
            } else {
                if name == "baseMVA" {
                    let v = value.trim_end_matches(';').trim();
                    raw.base_mva = Some(
                        v.parse()
                            .map_err(|_| parse_err(path, line_no, format!("invalid baseMVA `{v}`")))?,
                    );
                }
                continue;
            }
        }

        let (name, start, mut m) = open.take().expect("matrix open");
        let (body, closes) = match line.find([']', '}']) {
            Some(p) => (&line[..p], true),
            None => (line, false),
        };
        if let Some(name) = &name {
            parse_rows(body, name, line_no, path, &mut m)?;
        }
        if !closes {
            open = Some((name, start, m));
            continue;
        }
        match name.as_deref() {
            Some("bus") => raw.bus = Some(m),
            Some("gen") => raw.gen = Some(m),
            Some("branch") => raw.branch = Some(m),
            Some("gencost") => raw.gencost = Some(m),
            _ => {}
        }
    }
    if let Some((name, start, _)) = open {
        let name = name.unwrap_or_else(|| "field".into());
        return Err(parse_err(path, start, format!("mpc.{name} is never closed")));
    }
    Ok(raw)
}

fn require<'a>(m: &'a Option<Matrix>, name: &str, path: &str) -> Result<&'a Matrix> {
    m.as_ref()
        .ok_or_else(|| parse_err(path, 0, format!("missing mpc.{name} matrix")))
}

fn columns(row: &(usize, Vec<f64>), need: usize, name: &str, path: &str) -> Result<()> {
    if row.1.len() < need {
        return Err(parse_err(
            path,
            row.0,
            format!("mpc.{name} row has {} columns, need at least {need}", row.1.len()),
        ));
    }
    Ok(())
}

fn as_id(v: f64, line: usize, path: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(parse_err(path, line, format!("invalid bus number {v}")))
    }
}

/// Parse case text; `path` is used only in error messages. Every bus is
/// placed in area 1.
pub fn parse_case_str(text: &str, path: &str) -> Result<PowerNetwork> {
    let raw = scan(text, path)?;
    let base_mva = raw.base_mva.unwrap_or(DEFAULT_BASE_MVA);

    let mut buses = Vec::new();
    for row in &require(&raw.bus, "bus", path)?.rows {
        columns(row, 3, "bus", path)?;
        let load = row.1[2];
        if load < 0.0 {
            log::warn!("{path}:{}: negative load {load} MW kept as given", row.0);
        }
        buses.push(Bus {
            id: as_id(row.1[0], row.0, path)?,
            area: 1,
            load_mw: load,
            is_boundary: false,
        });
    }
    if buses.is_empty() {
        return Err(parse_err(path, 0, "case has no buses"));
    }

    let gen_rows = &require(&raw.gen, "gen", path)?.rows;
    let cost_rows = &require(&raw.gencost, "gencost", path)?.rows;
    if cost_rows.len() < gen_rows.len() {
        return Err(parse_err(
            path,
            cost_rows.last().map_or(0, |r| r.0),
            format!("{} generators but {} gencost rows", gen_rows.len(), cost_rows.len()),
        ));
    }
    let mut generators = Vec::new();
    for (row, cost_row) in gen_rows.iter().zip(cost_rows) {
        columns(row, 10, "gen", path)?;
        columns(cost_row, 4, "gencost", path)?;
        let in_service = row.1[7] > 0.0;
        let model = cost_row.1[0];
        if model != 2.0 {
            return Err(parse_err(
                path,
                cost_row.0,
                format!("unsupported gencost model {model}; only polynomial (2) is read"),
            ));
        }
        let n = cost_row.1[3];
        if !((1.0..=3.0).contains(&n) && n.fract() == 0.0) {
            return Err(parse_err(
                path,
                cost_row.0,
                format!("unsupported polynomial cost with {n} coefficients; at most quadratic"),
            ));
        }
        let n = n as usize;
        columns(cost_row, 4 + n, "gencost", path)?;
        let coeffs = &cost_row.1[4..4 + n];
        // Highest order first.
        let mut c = [0.0; 3];
        for (power, value) in coeffs.iter().rev().enumerate() {
            c[power] = *value;
        }
        if c[2] < 0.0 {
            return Err(parse_err(path, cost_row.0, "negative quadratic cost coefficient"));
        }
        if !in_service {
            continue;
        }
        generators.push(Generator {
            bus: as_id(row.1[0], row.0, path)?,
            g_min_mw: row.1[9],
            g_max_mw: row.1[8],
            cost: CostCurve::quadratic(c[0], c[1], c[2]),
        });
    }

    let mut branches = Vec::new();
    for row in &require(&raw.branch, "branch", path)?.rows {
        columns(row, 11, "branch", path)?;
        if row.1[10] <= 0.0 {
            continue;
        }
        let rate = row.1[5];
        branches.push(Branch {
            from_bus: as_id(row.1[0], row.0, path)?,
            to_bus: as_id(row.1[1], row.0, path)?,
            reactance_pu: row.1[3],
            // A zero rating means unlimited.
            limit_mw: if rate > 0.0 { rate } else { f64::INFINITY },
            is_tie_line: false,
        });
    }

    PowerNetwork::new(buses, branches, generators, base_mva)
        .map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn parse_case(path: impl AsRef<Path>) -> Result<PowerNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_case_str(&text, &path.display().to_string())
}
