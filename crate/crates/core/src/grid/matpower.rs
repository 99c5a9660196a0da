//! Reader for the numeric subset of the MATPOWER case format.
//!
//! Only `mpc.baseMVA` and the `bus`, `gen`, `branch` and `gencost` matrices
//! are interpreted. Other assignments (`mpc.version`, cell arrays such as
//! `mpc.bus_name`, ...) are skipped. Columns beyond the ones listed below are
//! ignored.

use std::collections::HashMap;
use std::path::Path;

use super::case::{Branch, Bus, BusRole, CostCurve, Generator, NetworkCase};
use super::GridError;

mod col {
    pub const BUS_I: usize = 0;
    pub const BUS_TYPE: usize = 1;
    pub const PD: usize = 2;
    pub const QD: usize = 3;
    pub const GS: usize = 4;
    pub const BS: usize = 5;
    pub const VM: usize = 7;
    pub const VA: usize = 8;
    pub const VMAX: usize = 11;
    pub const VMIN: usize = 12;
    pub const BUS_COLS: usize = 13;

    pub const GEN_BUS: usize = 0;
    pub const PG: usize = 1;
    pub const QG: usize = 2;
    pub const QMAX: usize = 3;
    pub const QMIN: usize = 4;
    pub const VG: usize = 5;
    pub const GEN_STATUS: usize = 7;
    pub const PMAX: usize = 8;
    pub const PMIN: usize = 9;
    pub const GEN_COLS: usize = 10;

    pub const F_BUS: usize = 0;
    pub const T_BUS: usize = 1;
    pub const BR_R: usize = 2;
    pub const BR_X: usize = 3;
    pub const BR_B: usize = 4;
    pub const RATE_A: usize = 5;
    pub const TAP: usize = 8;
    pub const SHIFT: usize = 9;
    pub const BR_STATUS: usize = 10;
    pub const BRANCH_COLS: usize = 11;

    pub const MODEL: usize = 0;
    pub const NCOST: usize = 3;
    pub const COST: usize = 4;
}

const PIECEWISE_LINEAR: f64 = 1.0;
const POLYNOMIAL: f64 = 2.0;

pub fn read_matpower_case(path: impl AsRef<Path>) -> Result<NetworkCase, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| GridError::Io(format!("{}: {e}", path.display())))?;
    let mut case = parse_matpower_case(&text)?;
    if case.name.is_empty() {
        case.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(case)
}

/// Parses MATPOWER case text into a per-unit [`NetworkCase`].
pub fn parse_matpower_case(text: &str) -> Result<NetworkCase, GridError> {
    let blocks = scan_blocks(text)?;
    let name = text
        .lines()
        .find_map(|l| {
            let l = strip_comment(l).trim();
            let rest = l.strip_prefix("function")?;
            Some(rest.split('=').nth(1)?.trim().trim_end_matches(';').to_string())
        })
        .unwrap_or_default();

    let base_mva = match blocks.get("baseMVA") {
        Some(Block::Scalar(v)) => *v,
        Some(Block::Matrix(_)) => {
            return Err(GridError::MalformedCase("mpc.baseMVA is not a scalar".into()))
        }
        None => return Err(GridError::MalformedCase("missing mpc.baseMVA".into())),
    };
    let bus_rows = matrix(&blocks, "bus", col::BUS_COLS)?;
    let gen_rows = matrix(&blocks, "gen", col::GEN_COLS)?;
    let branch_rows = matrix(&blocks, "branch", col::BRANCH_COLS)?;
    let cost_rows = matrix(&blocks, "gencost", col::COST)?;

    let buses = bus_rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let role = match row[col::BUS_TYPE] as i64 {
                1 => BusRole::Pq,
                2 => BusRole::Pv,
                3 => BusRole::Ref,
                t => {
                    return Err(GridError::MalformedCase(format!(
                        "bus row {k}: unsupported bus type {t}"
                    )))
                }
            };
            Ok(Bus {
                id: as_id(row[col::BUS_I], "bus", k)?,
                role,
                p_d: row[col::PD] / base_mva,
                q_d: row[col::QD] / base_mva,
                gs: row[col::GS] / base_mva,
                bs: row[col::BS] / base_mva,
                vm_init: row[col::VM],
                va_init: row[col::VA].to_radians(),
                v_min: row[col::VMIN],
                v_max: row[col::VMAX],
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    if cost_rows.len() < gen_rows.len() {
        return Err(GridError::MalformedCase(format!(
            "{} gencost rows for {} generators",
            cost_rows.len(),
            gen_rows.len()
        )));
    }
    let generators = gen_rows
        .iter()
        .zip(cost_rows.iter())
        .enumerate()
        .map(|(k, (row, cost))| {
            Ok(Generator {
                bus: as_id(row[col::GEN_BUS], "gen", k)?,
                p_g: row[col::PG] / base_mva,
                q_g: row[col::QG] / base_mva,
                q_max: row[col::QMAX] / base_mva,
                q_min: row[col::QMIN] / base_mva,
                v_setpoint: row[col::VG],
                in_service: row[col::GEN_STATUS] > 0.0,
                p_max: row[col::PMAX] / base_mva,
                p_min: row[col::PMIN] / base_mva,
                cost: cost_curve(cost, k)?,
            })
        })
        .collect::<Result<Vec<_>, GridError>>()?;

    let branches = branch_rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let tap = row[col::TAP];
            Ok(Branch {
                from_bus: as_id(row[col::F_BUS], "branch", k)?,
                to_bus: as_id(row[col::T_BUS], "branch", k)?,
                r: row[col::BR_R],
                x: row[col::BR_X],
                b_charge: row[col::BR_B],
                rate_a: (row[col::RATE_A] != 0.0).then(|| row[col::RATE_A] / base_mva),
                tap: if tap == 0.0 { 1.0 } else { tap },
                shift: row[col::SHIFT].to_radians(),
                in_service: row[col::BR_STATUS] > 0.0,
            })
        })
        .collect::<Result<Vec<_>, GridError>>()?;

    NetworkCase::new(name, base_mva, buses, branches, generators)
}

fn cost_curve(row: &[f64], k: usize) -> Result<CostCurve, GridError> {
    let model = row[col::MODEL];
    if model == PIECEWISE_LINEAR {
        return Err(GridError::UnsupportedCost {
            generator: k,
            reason: "piecewise-linear cost model".into(),
        });
    }
    if model != POLYNOMIAL {
        return Err(GridError::MalformedCase(format!(
            "gencost row {k}: unknown cost model {model}"
        )));
    }
    let n = row[col::NCOST];
    if n.fract() != 0.0 || n < 1.0 {
        return Err(GridError::MalformedCase(format!(
            "gencost row {k}: invalid coefficient count {n}"
        )));
    }
    let n = n as usize;
    if n > 3 {
        return Err(GridError::UnsupportedCost {
            generator: k,
            reason: format!("polynomial of degree {}", n - 1),
        });
    }
    let coeffs = row.get(col::COST..col::COST + n).ok_or_else(|| {
        GridError::MalformedCase(format!("gencost row {k}: expected {n} coefficients"))
    })?;
    // highest order first; missing leading terms are zero
    let mut padded = [0.0; 3];
    padded[3 - n..].copy_from_slice(coeffs);
    Ok(CostCurve {
        c2: padded[0],
        c1: padded[1],
        c0: padded[2],
    })
}

fn as_id(v: f64, what: &str, row: usize) -> Result<usize, GridError> {
    if v.fract() != 0.0 || v < 0.0 || !v.is_finite() {
        return Err(GridError::MalformedCase(format!(
            "{what} row {row}: invalid bus number {v}"
        )));
    }
    Ok(v as usize)
}

#[derive(Debug)]
enum Block {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

fn matrix<'a>(
    blocks: &'a HashMap<String, Block>,
    name: &str,
    min_cols: usize,
) -> Result<&'a [Vec<f64>], GridError> {
    let rows = match blocks.get(name) {
        Some(Block::Matrix(rows)) => rows,
        Some(Block::Scalar(_)) => {
            return Err(GridError::MalformedCase(format!("mpc.{name} is not a matrix")))
        }
        None => return Err(GridError::MalformedCase(format!("missing mpc.{name}"))),
    };
    if let Some((k, row)) = rows.iter().enumerate().find(|(_, r)| r.len() < min_cols) {
        return Err(GridError::MalformedCase(format!(
            "mpc.{name} row {k} has {} columns, expected at least {min_cols}",
            row.len()
        )));
    }
    Ok(rows)
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" | "+Inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse().ok(),
    }
}

/// Collects every `mpc.<name> = <scalar>;` and `mpc.<name> = [ ... ];`.
fn scan_blocks(text: &str) -> Result<HashMap<String, Block>, GridError> {
    let mut blocks = HashMap::new();
    let mut lines = text.lines().map(strip_comment);
    while let Some(line) = lines.next() {
        let Some(rest) = line.trim().strip_prefix("mpc.") else {
            continue;
        };
        let Some((name, rhs)) = rest.split_once('=') else {
            continue;
        };
        let name = name.trim().to_string();
        let rhs = rhs.trim();
        if let Some(body) = rhs.strip_prefix('[') {
            let mut content = String::new();
            let mut body = body.to_string();
            loop {
                if let Some(end) = body.find(']') {
                    content.push_str(&body[..end]);
                    break;
                }
                content.push_str(&body);
                content.push('\n');
                body = lines
                    .next()
                    .ok_or_else(|| {
                        GridError::MalformedCase(format!("unterminated matrix mpc.{name}"))
                    })?
                    .to_string();
            }
            let mut rows = Vec::new();
            for (k, raw) in content.split(['\n', ';']).enumerate() {
                let row = raw
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        parse_number(t).ok_or_else(|| {
                            GridError::MalformedCase(format!(
                                "mpc.{name}: unparsable entry '{t}' near row {k}"
                            ))
                        })
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                if !row.is_empty() {
                    rows.push(row);
                }
            }
            blocks.insert(name, Block::Matrix(rows));
        } else if let Some(v) = parse_number(rhs.trim_end_matches(';').trim()) {
            blocks.insert(name, Block::Scalar(v));
        }
        // other right-hand sides (strings, cell arrays) are not needed
    }
    Ok(blocks)
}
