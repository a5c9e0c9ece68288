//! MATPOWER `.m` case files: parsing, writing, and per-unit conversion.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::network::{NetworkError, PowerNetwork};

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read case file: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing required block `mpc.{0}`")]
    MissingBlock(&'static str),
    #[error("malformed row {row} in `mpc.{block}`: {reason}")]
    MalformedRow { block: &'static str, row: usize, reason: String },
    #[error("no reference bus (type 3)")]
    NoReferenceBus,
    #[error("{0} reference buses found, exactly one is supported")]
    MultipleReferenceBuses(usize),
    #[error("{what} references unknown bus {bus}")]
    UnknownBus { what: String, bus: i64 },
    #[error("generator cost row {row}: {reason}")]
    UnsupportedCost { row: usize, reason: String },
    #[error("bus {bus} is islanded (no in-service branch and no generator)")]
    IslandedBus { bus: i64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusType {
    Pq,
    Pv,
    Reference,
}

impl BusType {
    fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            1 => Some(Self::Pq),
            2 => Some(Self::Pv),
            3 => Some(Self::Reference),
            _ => None,
        }
    }

    fn code(self) -> u8 {
        match self {
            Self::Pq => 1,
            Self::Pv => 2,
            Self::Reference => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusRow {
    pub id: i64,
    pub kind: BusType,
    /// MW
    pub pd: f64,
    /// MVAr
    pub qd: f64,
    /// MW consumed at 1 p.u. voltage
    pub gs: f64,
    /// MVAr injected at 1 p.u. voltage
    pub bs: f64,
    pub vm: f64,
    /// degrees
    pub va: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRow {
    pub bus: i64,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    /// Voltage set point (p.u.)
    pub vg: f64,
    pub in_service: bool,
    pub pmax: f64,
    pub pmin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRow {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    /// MVA, 0 means unlimited
    pub rate_a: f64,
    /// 0 means nominal ratio 1
    pub tap: f64,
    /// degrees
    pub shift: f64,
    pub in_service: bool,
}

/// Polynomial cost `c2 p² + c1 p + c0` in $/h with `p` in MW.
#[derive(Debug, Clone, PartialEq)]
pub struct GenCostRow {
    pub model: u8,
    pub startup: f64,
    pub shutdown: f64,
    /// Highest degree first, as in the file.
    pub coefficients: Vec<f64>,
}

/// Raw tables of a case file, in file units.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseData {
    pub base_mva: f64,
    pub buses: Vec<BusRow>,
    pub gens: Vec<GenRow>,
    pub branches: Vec<BranchRow>,
    pub gencost: Vec<GenCostRow>,
}

impl CaseData {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.buses.len(), self.branches.len(), self.gens.len())
    }
}

pub fn read_case(path: impl AsRef<Path>) -> Result<CaseData, CaseError> {
    let text = std::fs::read_to_string(path)?;
    parse_case(&text)
}

/// Parses the `baseMVA`, `bus`, `gen`, `branch` and `gencost` blocks of a
/// MATPOWER case. Other blocks and extra columns are ignored.
pub fn parse_case(text: &str) -> Result<CaseData, CaseError> {
    let stripped = strip_comments(text);
    let base_mva = scalar_block(&stripped, "baseMVA")?;

    let bus_rows = matrix_block(&stripped, "bus", 13)?;
    let mut buses = Vec::with_capacity(bus_rows.len());
    for (i, r) in bus_rows.iter().enumerate() {
        let kind = BusType::from_code(r[1]).ok_or_else(|| CaseError::MalformedRow {
            block: "bus",
            row: i + 1,
            reason: format!("unsupported bus type {}", r[1]),
        })?;
        buses.push(BusRow {
            id: as_id(r[0], "bus", i)?,
            kind,
            pd: r[2],
            qd: r[3],
            gs: r[4],
            bs: r[5],
            vm: r[7],
            va: r[8],
            vmax: r[11],
            vmin: r[12],
        });
    }

    let gens = matrix_block(&stripped, "gen", 10)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(GenRow {
                bus: as_id(r[0], "gen", i)?,
                pg: r[1],
                qg: r[2],
                qmax: r[3],
                qmin: r[4],
                vg: r[5],
                in_service: r[7] > 0.0,
                pmax: r[8],
                pmin: r[9],
            })
        })
        .collect::<Result<Vec<_>, CaseError>>()?;

    let branches = matrix_block(&stripped, "branch", 11)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(BranchRow {
                from: as_id(r[0], "branch", i)?,
                to: as_id(r[1], "branch", i)?,
                r: r[2],
                x: r[3],
                b: r[4],
                rate_a: r[5],
                tap: r[8],
                shift: r[9],
                in_service: r[10] > 0.0,
            })
        })
        .collect::<Result<Vec<_>, CaseError>>()?;

    let gencost = matrix_block(&stripped, "gencost", 4)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let n = r[3];
            if n < 0.0 || n.fract() != 0.0 {
                return Err(CaseError::MalformedRow {
                    block: "gencost",
                    row: i + 1,
                    reason: format!("invalid coefficient count {n}"),
                });
            }
            let n = n as usize;
            let width = if r[0] as i64 == 1 { 2 * n } else { n };
            if r.len() < 4 + width {
                return Err(CaseError::MalformedRow {
                    block: "gencost",
                    row: i + 1,
                    reason: format!("expected {} columns, found {}", 4 + width, r.len()),
                });
            }
            Ok(GenCostRow { model: r[0] as u8, startup: r[1], shutdown: r[2], coefficients: r[4..4 + width].to_vec() })
        })
        .collect::<Result<Vec<_>, CaseError>>()?;

    let refs = buses.iter().filter(|b| b.kind == BusType::Reference).count();
    match refs {
        0 => return Err(CaseError::NoReferenceBus),
        1 => {}
        n => return Err(CaseError::MultipleReferenceBuses(n)),
    }
    let known: HashMap<i64, ()> = buses.iter().map(|b| (b.id, ())).collect();
    for (i, br) in branches.iter().enumerate() {
        for bus in [br.from, br.to] {
            if !known.contains_key(&bus) {
                return Err(CaseError::UnknownBus { what: format!("branch {}", i + 1), bus });
            }
        }
    }
    for (i, g) in gens.iter().enumerate() {
        if g.in_service && !known.contains_key(&g.bus) {
            return Err(CaseError::UnknownBus { what: format!("generator {}", i + 1), bus: g.bus });
        }
    }

    Ok(CaseData { base_mva, buses, gens, branches, gencost })
}

/// Writes the supported subset back in MATPOWER syntax. Unsupported columns
/// are written as zeros.
pub fn write_case(case: &CaseData) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = case_export\nmpc.version = '2';\nmpc.baseMVA = {};\n", num(case.base_mva));
    let _ = writeln!(out, "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin");
    out.push_str("mpc.bus = [\n");
    for b in &case.buses {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t0\t1\t{}\t{};",
            b.id,
            b.kind.code(),
            num(b.pd),
            num(b.qd),
            num(b.gs),
            num(b.bs),
            num(b.vm),
            num(b.va),
            num(b.vmax),
            num(b.vmin)
        );
    }
    out.push_str("];\n\nmpc.gen = [\n");
    for g in &case.gens {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus,
            num(g.pg),
            num(g.qg),
            num(g.qmax),
            num(g.qmin),
            num(g.vg),
            num(case.base_mva),
            u8::from(g.in_service),
            num(g.pmax),
            num(g.pmin)
        );
    }
    out.push_str("];\n\nmpc.branch = [\n");
    for br in &case.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t{}\t-360\t360;",
            br.from,
            br.to,
            num(br.r),
            num(br.x),
            num(br.b),
            num(br.rate_a),
            num(br.tap),
            num(br.shift),
            u8::from(br.in_service)
        );
    }
    out.push_str("];\n\nmpc.gencost = [\n");
    for c in &case.gencost {
        let n = if c.model == 1 { c.coefficients.len() / 2 } else { c.coefficients.len() };
        let _ = write!(out, "\t{}\t{}\t{}\t{}", c.model, num(c.startup), num(c.shutdown), n);
        for v in &c.coefficients {
            let _ = write!(out, "\t{}", num(*v));
        }
        out.push_str(";\n");
    }
    out.push_str("];\n");
    out
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "Inf".into()
    } else if v == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        // shortest representation that round-trips
        format!("{v:?}")
    }
}

fn as_id(v: f64, block: &'static str, row: usize) -> Result<i64, CaseError> {
    if v.fract() != 0.0 {
        return Err(CaseError::MalformedRow { block, row: row + 1, reason: format!("bus id {v} is not an integer") });
    }
    Ok(v as i64)
}

fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_str = false;
        for c in line.chars() {
            match c {
                '\'' => in_str = !in_str,
                '%' if !in_str => break,
                _ => {}
            }
            out.push(c);
        }
        out.push('\n');
    }
    out
}

/// Locates `mpc.<name> = ` and returns the text following the `=`.
fn block_start<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let key = format!("mpc.{name}");
    let mut search = text;
    while let Some(pos) = search.find(&key) {
        let rest = &search[pos + key.len()..];
        let trimmed = rest.trim_start();
        if let Some(after) = trimmed.strip_prefix('=') {
            return Some(after);
        }
        search = rest;
    }
    None
}

fn scalar_block(text: &str, name: &'static str) -> Result<f64, CaseError> {
    let rest = block_start(text, name).ok_or(CaseError::MissingBlock(name))?;
    let end = rest.find([';', '\n']).unwrap_or(rest.len());
    parse_number(rest[..end].trim()).ok_or_else(|| CaseError::MalformedRow {
        block: name,
        row: 1,
        reason: format!("expected a number, found `{}`", rest[..end].trim()),
    })
}

fn matrix_block(text: &str, name: &'static str, min_cols: usize) -> Result<Vec<Vec<f64>>, CaseError> {
    let rest = block_start(text, name).ok_or(CaseError::MissingBlock(name))?;
    let rest = rest.trim_start();
    let body = rest.strip_prefix('[').ok_or_else(|| CaseError::MalformedRow {
        block: name,
        row: 0,
        reason: "expected `[`".into(),
    })?;
    let end = body.find(']').ok_or_else(|| CaseError::MalformedRow {
        block: name,
        row: 0,
        reason: "unterminated matrix".into(),
    })?;
    let mut rows = Vec::new();
    for raw in body[..end].split([';', '\n']) {
        let tokens: Vec<&str> = raw.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        if tokens.is_empty() {
            continue;
        }
        let row_no = rows.len() + 1;
        let mut row = Vec::with_capacity(tokens.len());
        for t in tokens {
            row.push(parse_number(t).ok_or_else(|| CaseError::MalformedRow {
                block: name,
                row: row_no,
                reason: format!("non-numeric token `{t}`"),
            })?);
        }
        if row.len() < min_cols {
            return Err(CaseError::MalformedRow {
                block: name,
                row: row_no,
                reason: format!("expected at least {min_cols} columns, found {}", row.len()),
            });
        }
        if let Some(first) = rows.first().map(|r: &Vec<f64>| r.len()) {
            if first != row.len() && name != "gencost" {
                return Err(CaseError::MalformedRow {
                    block: name,
                    row: row_no,
                    reason: format!("found {} columns, previous rows have {first}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_number(t: &str) -> Option<f64> {
    match t {
        "Inf" | "inf" | "+Inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => t.parse::<f64>().ok(),
    }
}

/// Options for [`to_per_unit`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ConversionOptions {
    /// Reject buses that have neither an in-service branch nor a generator.
    pub check_connectivity: bool,
}

/// Per-unit generator data after dropping out-of-service units.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    /// Internal bus index.
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub vg: f64,
    /// $/h per p.u.²
    pub c2: f64,
    /// $/h per p.u.
    pub c1: f64,
    /// $/h
    pub c0: f64,
}

/// Per-unit branch data after dropping out-of-service branches.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    /// p.u.; `None` when the line has no thermal limit.
    pub rate: Option<f64>,
    pub tap: f64,
    /// radians
    pub shift: f64,
}

/// Per-unit bus data with contiguous internal indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: i64,
    pub kind: BusType,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vm: f64,
    /// radians
    pub va: f64,
    pub vmin: f64,
    pub vmax: f64,
}

/// Converts a parsed case to per-unit data and builds the network matrices.
pub fn to_per_unit(case: &CaseData, opts: ConversionOptions) -> Result<PowerNetwork, CaseError> {
    let base = case.base_mva;
    let index: HashMap<i64, usize> = case.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let lookup = |what: String, bus: i64| index.get(&bus).copied().ok_or(CaseError::UnknownBus { what, bus });

    let buses: Vec<Bus> = case
        .buses
        .iter()
        .map(|b| Bus {
            id: b.id,
            kind: b.kind,
            pd: b.pd / base,
            qd: b.qd / base,
            gs: b.gs / base,
            bs: b.bs / base,
            vm: b.vm,
            va: b.va * PI / 180.0,
            vmin: b.vmin,
            vmax: b.vmax,
        })
        .collect();

    let mut gens = Vec::new();
    for (i, g) in case.gens.iter().enumerate() {
        if !g.in_service {
            continue;
        }
        let cost = case
            .gencost
            .get(i)
            .ok_or_else(|| CaseError::UnsupportedCost { row: i + 1, reason: "no cost row for generator".into() })?;
        let (c2, c1, c0) = polynomial_cost(cost, i)?;
        gens.push(Generator {
            bus: lookup(format!("generator {}", i + 1), g.bus)?,
            pg: g.pg / base,
            qg: g.qg / base,
            pmin: g.pmin / base,
            pmax: g.pmax / base,
            qmin: g.qmin / base,
            qmax: g.qmax / base,
            vg: g.vg,
            c2: c2 * base * base,
            c1: c1 * base,
            c0,
        });
    }

    let branches: Vec<Branch> = case
        .branches
        .iter()
        .enumerate()
        .filter(|(_, br)| br.in_service)
        .map(|(k, br)| {
            Ok(Branch {
                from: lookup(format!("branch {}", k + 1), br.from)?,
                to: lookup(format!("branch {}", k + 1), br.to)?,
                r: br.r,
                x: br.x,
                b: br.b,
                rate: (br.rate_a > 0.0).then(|| br.rate_a / base),
                tap: if br.tap == 0.0 { 1.0 } else { br.tap },
                shift: br.shift * PI / 180.0,
            })
        })
        .collect::<Result<_, CaseError>>()?;

    if opts.check_connectivity {
        let mut touched = vec![false; buses.len()];
        for br in &branches {
            touched[br.from] = true;
            touched[br.to] = true;
        }
        for g in &gens {
            touched[g.bus] = true;
        }
        if let Some(i) = touched.iter().position(|t| !t) {
            return Err(CaseError::IslandedBus { bus: buses[i].id });
        }
    }

    Ok(PowerNetwork::new(base, buses, gens, branches)?)
}

fn polynomial_cost(cost: &GenCostRow, row: usize) -> Result<(f64, f64, f64), CaseError> {
    if cost.model != 2 {
        return Err(CaseError::UnsupportedCost {
            row: row + 1,
            reason: format!("cost model {} is not supported (only polynomial model 2)", cost.model),
        });
    }
    let c = &cost.coefficients;
    match c.len() {
        0 => Ok((0.0, 0.0, 0.0)),
        1 => Ok((0.0, 0.0, c[0])),
        2 => Ok((0.0, c[0], c[1])),
        3 => Ok((c[0], c[1], c[2])),
        n => {
            if c[..n - 3].iter().all(|&v| v == 0.0) {
                Ok((c[n - 3], c[n - 2], c[n - 1]))
            } else {
                Err(CaseError::UnsupportedCost {
                    row: row + 1,
                    reason: format!("polynomial of degree {} (at most 2 supported)", n - 1),
                })
            }
        }
    }
}
