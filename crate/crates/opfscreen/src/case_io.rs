//! Case files: MATPOWER-style `.m` text and a versioned JSON schema.
//!
//! Both formats carry physical units (MW, MVAr, MVA, p.u. impedances).
//! Parsing converts to per-unit on the system base; serializing converts
//! back.

use std::fmt::Write as _;
use std::path::Path;

use opfscreen_core::case::{Branch, Bus, Case, GenCost, Generator};
use serde::{Deserialize, Serialize};

pub const CASE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    Matpower,
    Json,
}

impl CaseFormat {
    /// `.json` selects JSON, anything else MATPOWER text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Matpower,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Validation(#[from] opfscreen_core::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub fn parse_case(text: &str, format: CaseFormat) -> Result<Case, CaseError> {
    match format {
        CaseFormat::Matpower => parse_matpower(text),
        CaseFormat::Json => parse_json(text),
    }
}

pub fn serialize_case(case: &Case, format: CaseFormat) -> String {
    match format {
        CaseFormat::Matpower => write_matpower(case),
        CaseFormat::Json => write_json(case),
    }
}

pub fn load_case(path: &Path) -> Result<Case, CaseError> {
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_case(&text, CaseFormat::from_path(path))
}

// ---------------------------------------------------------------------------
// MATPOWER text

#[derive(Debug, Default)]
struct RawCase {
    base_mva: Option<f64>,
    bus: Option<Vec<Vec<f64>>>,
    gen: Option<Vec<Vec<f64>>>,
    branch: Option<Vec<Vec<f64>>>,
    gencost: Option<Vec<Vec<f64>>>,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> CaseError {
    CaseError::Syntax {
        line: line + 1,
        column: column + 1,
        message: message.into(),
    }
}

/// Blanks out `%` comments, keeping character positions.
fn strip_comment(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut in_str = false;
    let mut comment = false;
    for ch in line.chars() {
        if comment {
            out.push(' ');
            continue;
        }
        match ch {
            '\'' => in_str = !in_str,
            '%' if !in_str => {
                comment = true;
                out.push(' ');
                continue;
            }
            _ => {}
        }
        out.push(ch);
    }
    out
}

enum Mode {
    Top,
    Matrix {
        name: String,
        rows: Vec<Vec<f64>>,
        row: Vec<f64>,
    },
    Cell,
}

fn parse_matpower(text: &str) -> Result<Case, CaseError> {
    let mut raw = RawCase::default();
    let mut mode = Mode::Top;

    for (ln, original) in text.lines().enumerate() {
        let line = strip_comment(original);
        let mut col = 0usize;
        let chars: Vec<char> = line.chars().collect();

        while col < chars.len() {
            match &mut mode {
                Mode::Top => {
                    let rest: String = chars[col..].iter().collect();
                    let trimmed = rest.trim_start();
                    col += rest.len() - trimmed.len();
                    if trimmed.is_empty() {
                        break;
                    }
                    if trimmed.starts_with("function") {
                        col = chars.len();
                        continue;
                    }
                    let Some(eq) = trimmed.find('=') else {
                        return Err(syntax(ln, col, "expected an assignment"));
                    };
                    let lhs = trimmed[..eq].trim();
                    let name = lhs
                        .strip_prefix("mpc.")
                        .ok_or_else(|| syntax(ln, col, format!("unexpected statement '{lhs}'")))?
                        .to_string();
                    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                        return Err(syntax(ln, col, format!("bad field name '{lhs}'")));
                    }
                    let after_eq = &trimmed[eq + 1..];
                    let value = after_eq.trim_start();
                    col += eq + 1 + (after_eq.len() - value.len());
                    if value.starts_with('[') {
                        col += 1;
                        mode = Mode::Matrix {
                            name,
                            rows: Vec::new(),
                            row: Vec::new(),
                        };
                    } else if value.starts_with('{') {
                        col += 1;
                        mode = Mode::Cell;
                    } else {
                        let end = value
                            .find(';')
                            .ok_or_else(|| syntax(ln, col, "missing ';' after value"))?;
                        let scalar = value[..end].trim();
                        if name == "baseMVA" {
                            let v: f64 = scalar
                                .parse()
                                .map_err(|_| syntax(ln, col, format!("invalid number '{scalar}'")))?;
                            raw.base_mva = Some(v);
                        }
                        col += end + 1;
                    }
                }
                Mode::Cell => {
                    if chars[col] == '}' {
                        mode = Mode::Top;
                        col += 1;
                        // optional trailing ';'
                        while col < chars.len() && (chars[col].is_whitespace() || chars[col] == ';') {
                            col += 1;
                        }
                    } else {
                        col += 1;
                    }
                }
                Mode::Matrix { name, rows, row } => {
                    let ch = chars[col];
                    if ch.is_whitespace() || ch == ',' {
                        col += 1;
                    } else if ch == ';' {
                        if !row.is_empty() {
                            rows.push(std::mem::take(row));
                        }
                        col += 1;
                    } else if ch == ']' {
                        if !row.is_empty() {
                            rows.push(std::mem::take(row));
                        }
                        let rows = std::mem::take(rows);
                        match name.as_str() {
                            "bus" => raw.bus = Some(rows),
                            "gen" => raw.gen = Some(rows),
                            "branch" => raw.branch = Some(rows),
                            "gencost" => raw.gencost = Some(rows),
                            _ => {}
                        }
                        mode = Mode::Top;
                        col += 1;
                        while col < chars.len() && (chars[col].is_whitespace() || chars[col] == ';') {
                            col += 1;
                        }
                    } else {
                        let start = col;
                        while col < chars.len()
                            && !chars[col].is_whitespace()
                            && !matches!(chars[col], ',' | ';' | ']')
                        {
                            col += 1;
                        }
                        let token: String = chars[start..col].iter().collect();
                        let v: f64 = token
                            .parse()
                            .map_err(|_| syntax(ln, start, format!("invalid number '{token}'")))?;
                        row.push(v);
                    }
                }
            }
        }
        // a line break inside brackets ends the current row
        if let Mode::Matrix { rows, row, .. } = &mut mode {
            if !row.is_empty() {
                rows.push(std::mem::take(row));
            }
        }
    }
    if !matches!(mode, Mode::Top) {
        return Err(syntax(text.lines().count().saturating_sub(1), 0, "unterminated matrix or cell block"));
    }
    build_from_raw(raw)
}

fn need(block: Option<Vec<Vec<f64>>>, name: &str, min_cols: usize) -> Result<Vec<Vec<f64>>, CaseError> {
    let rows = block.ok_or_else(|| CaseError::Format(format!("missing mpc.{name} block")))?;
    for (i, r) in rows.iter().enumerate() {
        if r.len() < min_cols {
            return Err(CaseError::Format(format!(
                "mpc.{name} row {} has {} columns, need at least {min_cols}",
                i + 1,
                r.len()
            )));
        }
    }
    Ok(rows)
}

fn as_id(v: f64, what: &str) -> Result<usize, CaseError> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(CaseError::Format(format!("{what} id {v} is not a non-negative integer")))
    }
}

fn build_from_raw(raw: RawCase) -> Result<Case, CaseError> {
    let base = raw
        .base_mva
        .ok_or_else(|| CaseError::Format("missing mpc.baseMVA".into()))?;
    let bus_rows = need(raw.bus, "bus", 13)?;
    let gen_rows = need(raw.gen, "gen", 10)?;
    let branch_rows = need(raw.branch, "branch", 11)?;
    let cost_rows = need(raw.gencost, "gencost", 4)?;

    let buses = bus_rows
        .iter()
        .map(|r| {
            Ok(Bus {
                id: as_id(r[0], "bus")?,
                pd: r[2] / base,
                qd: r[3] / base,
                gs: r[4] / base,
                bs: r[5] / base,
                vmax: r[11],
                vmin: r[12],
                is_ref: r[1] == 3.0,
            })
        })
        .collect::<Result<Vec<_>, CaseError>>()?;
    let generators = gen_rows
        .iter()
        .map(|r| {
            Ok(Generator {
                bus: as_id(r[0], "generator bus")?,
                qmax: r[3] / base,
                qmin: r[4] / base,
                in_service: r[7] > 0.0,
                pmax: r[8] / base,
                pmin: r[9] / base,
            })
        })
        .collect::<Result<Vec<_>, CaseError>>()?;
    let branches = branch_rows
        .iter()
        .map(|r| {
            Ok(Branch {
                from: as_id(r[0], "branch from-bus")?,
                to: as_id(r[1], "branch to-bus")?,
                r: r[2],
                x: r[3],
                b_chg: r[4],
                rate_a: r[5] / base,
                tap: if r[8] == 0.0 { 1.0 } else { r[8] },
                shift: r[9].to_radians(),
                in_service: r[10] > 0.0,
            })
        })
        .collect::<Result<Vec<_>, CaseError>>()?;
    if cost_rows.len() != gen_rows.len() {
        return Err(CaseError::Format(format!(
            "{} gencost rows for {} generators (reactive costs are not supported)",
            cost_rows.len(),
            gen_rows.len()
        )));
    }
    let costs = cost_rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r[0] != 2.0 || r[3] != 3.0 || r.len() < 7 {
                return Err(CaseError::Format(format!(
                    "gencost row {}: only quadratic polynomial costs (model 2, n = 3) are supported",
                    i + 1
                )));
            }
            Ok(GenCost {
                a: r[4],
                b: r[5],
                c: r[6],
            })
        })
        .collect::<Result<Vec<_>, CaseError>>()?;
    Ok(Case::new(base, buses, branches, generators, costs)?)
}

fn write_matpower(case: &Case) -> String {
    let base = case.base_mva();
    let mut s = String::new();
    s.push_str("function mpc = case\n\n%% MATPOWER Case Format : Version 2\nmpc.version = '2';\n\n");
    let _ = writeln!(s, "%% system MVA base\nmpc.baseMVA = {base};\n");

    s.push_str("%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for (i, b) in case.buses().iter().enumerate() {
        let kind = if b.is_ref {
            3
        } else if case.gen_bus().contains(&i) {
            2
        } else {
            1
        };
        let _ = writeln!(
            s,
            "\t{}\t{kind}\t{}\t{}\t{}\t{}\t1\t1\t0\t0\t1\t{}\t{};",
            b.id,
            b.pd * base,
            b.qd * base,
            b.gs * base,
            b.bs * base,
            b.vmax,
            b.vmin
        );
    }
    s.push_str("];\n\n");

    s.push_str("%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n");
    for g in case.generators() {
        let _ = writeln!(
            s,
            "\t{}\t0\t0\t{}\t{}\t1\t{base}\t1\t{}\t{};",
            g.bus,
            g.qmax * base,
            g.qmin * base,
            g.pmax * base,
            g.pmin * base
        );
    }
    s.push_str("];\n\n");

    s.push_str(
        "%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n",
    );
    for br in case.branches() {
        let rate = br.rate_a * base;
        let ratio = if br.tap == 1.0 { 0.0 } else { br.tap };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{rate}\t{rate}\t{rate}\t{ratio}\t{}\t1\t-360\t360;",
            br.from,
            br.to,
            br.r,
            br.x,
            br.b_chg,
            br.shift.to_degrees()
        );
    }
    s.push_str("];\n\n");

    s.push_str("%% generator cost data\n%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0\nmpc.gencost = [\n");
    for c in case.costs() {
        let _ = writeln!(s, "\t2\t0\t0\t3\t{}\t{}\t{};", c.a, c.b, c.c);
    }
    s.push_str("];\n");
    s
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Debug, Serialize, Deserialize)]
struct JsonCase {
    schema_version: u32,
    base_mva: f64,
    buses: Vec<JsonBus>,
    branches: Vec<JsonBranch>,
    generators: Vec<JsonGenerator>,
    costs: Vec<GenCost>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonBus {
    id: usize,
    #[serde(rename = "Pd")]
    pd: f64,
    #[serde(rename = "Qd")]
    qd: f64,
    #[serde(rename = "Gs", default)]
    gs: f64,
    #[serde(rename = "Bs", default)]
    bs: f64,
    #[serde(rename = "Vmin")]
    vmin: f64,
    #[serde(rename = "Vmax")]
    vmax: f64,
    #[serde(default)]
    is_ref: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonBranch {
    from: usize,
    to: usize,
    r: f64,
    x: f64,
    #[serde(default)]
    b_chg: f64,
    #[serde(default = "one")]
    tap: f64,
    /// radians
    #[serde(default)]
    shift: f64,
    /// MVA, 0 = unlimited
    #[serde(default)]
    rate_a: f64,
    #[serde(default = "yes")]
    in_service: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonGenerator {
    bus: usize,
    #[serde(rename = "Pmin")]
    pmin: f64,
    #[serde(rename = "Pmax")]
    pmax: f64,
    #[serde(rename = "Qmin")]
    qmin: f64,
    #[serde(rename = "Qmax")]
    qmax: f64,
    #[serde(default = "yes")]
    in_service: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn parse_json(text: &str) -> Result<Case, CaseError> {
    let jc: JsonCase = serde_json::from_str(text).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            syntax(e.line().saturating_sub(1), e.column().saturating_sub(1), e.to_string())
        } else {
            CaseError::Json(e)
        }
    })?;
    if jc.schema_version != CASE_SCHEMA_VERSION {
        return Err(CaseError::Format(format!(
            "unsupported case schema_version {} (expected {CASE_SCHEMA_VERSION})",
            jc.schema_version
        )));
    }
    let base = jc.base_mva;
    let buses = jc
        .buses
        .into_iter()
        .map(|b| Bus {
            id: b.id,
            pd: b.pd / base,
            qd: b.qd / base,
            gs: b.gs / base,
            bs: b.bs / base,
            vmin: b.vmin,
            vmax: b.vmax,
            is_ref: b.is_ref,
        })
        .collect();
    let branches = jc
        .branches
        .into_iter()
        .map(|b| Branch {
            from: b.from,
            to: b.to,
            r: b.r,
            x: b.x,
            b_chg: b.b_chg,
            tap: b.tap,
            shift: b.shift,
            rate_a: b.rate_a / base,
            in_service: b.in_service,
        })
        .collect();
    let generators = jc
        .generators
        .into_iter()
        .map(|g| Generator {
            bus: g.bus,
            pmin: g.pmin / base,
            pmax: g.pmax / base,
            qmin: g.qmin / base,
            qmax: g.qmax / base,
            in_service: g.in_service,
        })
        .collect();
    Ok(Case::new(base, buses, branches, generators, jc.costs)?)
}

fn write_json(case: &Case) -> String {
    let base = case.base_mva();
    let jc = JsonCase {
        schema_version: CASE_SCHEMA_VERSION,
        base_mva: base,
        buses: case
            .buses()
            .iter()
            .map(|b| JsonBus {
                id: b.id,
                pd: b.pd * base,
                qd: b.qd * base,
                gs: b.gs * base,
                bs: b.bs * base,
                vmin: b.vmin,
                vmax: b.vmax,
                is_ref: b.is_ref,
            })
            .collect(),
        branches: case
            .branches()
            .iter()
            .map(|b| JsonBranch {
                from: b.from,
                to: b.to,
                r: b.r,
                x: b.x,
                b_chg: b.b_chg,
                tap: b.tap,
                shift: b.shift,
                rate_a: b.rate_a * base,
                in_service: b.in_service,
            })
            .collect(),
        generators: case
            .generators()
            .iter()
            .map(|g| JsonGenerator {
                bus: g.bus,
                pmin: g.pmin * base,
                pmax: g.pmax * base,
                qmin: g.qmin * base,
                qmax: g.qmax * base,
                in_service: g.in_service,
            })
            .collect(),
        costs: case.costs().to_vec(),
    };
    serde_json::to_string_pretty(&jc).expect("case serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "
function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0  0  0 0 1 1 0 230 1 1.1 0.9;
    2 1 50 10 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 100 -100 1 100 1 200 0 ];
mpc.branch = [ 1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360 ];
mpc.gencost = [ 2 0 0 3 0.01 10 0 ];
";

    #[test]
    fn minimal_two_bus() {
        let case = parse_case(TWO_BUS, CaseFormat::Matpower).unwrap();
        assert_eq!(case.n_gen(), 1);
        assert_eq!(case.demand_buses().len(), 1);
        assert_eq!(case.buses()[1].pd, 0.5);
        assert!(case.buses()[0].is_ref);
    }

    #[test]
    fn dangling_bus_reference() {
        let text = TWO_BUS.replace("mpc.branch = [ 1 2", "mpc.branch = [ 1 99");
        let err = parse_case(&text, CaseFormat::Matpower).unwrap_err();
        assert!(matches!(err, CaseError::Validation(_)), "{err}");
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn syntax_error_position() {
        let text = TWO_BUS.replace("2 1 50 10", "2 1 5x0 10");
        match parse_case(&text, CaseFormat::Matpower).unwrap_err() {
            CaseError::Syntax { line, column, .. } => {
                assert_eq!(line, 6);
                assert_eq!(column, 9);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn piecewise_cost_rejected() {
        let text = TWO_BUS.replace("[ 2 0 0 3 0.01 10 0 ]", "[ 1 0 0 2 0 0 100 1000 ]");
        assert!(matches!(
            parse_case(&text, CaseFormat::Matpower),
            Err(CaseError::Format(_))
        ));
    }

    #[test]
    fn json_schema_version_checked() {
        let case = parse_case(TWO_BUS, CaseFormat::Matpower).unwrap();
        let json = serialize_case(&case, CaseFormat::Json).replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(matches!(parse_case(&json, CaseFormat::Json), Err(CaseError::Format(_))));
    }

    #[test]
    fn json_syntax_error_reports_position() {
        let err = parse_case("{\n  \"schema_version\": 1,\n  oops\n}", CaseFormat::Json).unwrap_err();
        assert!(matches!(err, CaseError::Syntax { line: 3, .. }), "{err}");
    }
}
