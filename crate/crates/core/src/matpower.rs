//! MATPOWER `.m` case files: parsing into a per-unit [`Network`] and writing back.
//!
//! Only the polynomial cost model is accepted. Columns past the ones consumed
//! are kept on each record so that a parse/serialize cycle loses nothing.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::grid::{Branch, Bus, BusKind, CostPolynomial, Generator, Network};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("line {line}: malformed case ({table}): {reason}")]
    Malformed {
        line: usize,
        table: String,
        reason: String,
    },
    #[error("line {line}: unsupported feature ({table}): {reason}")]
    UnsupportedFeature {
        line: usize,
        table: String,
        reason: String,
    },
}

fn malformed(line: usize, table: &str, reason: impl Into<String>) -> CaseError {
    CaseError::Malformed {
        line,
        table: table.to_string(),
        reason: reason.into(),
    }
}

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 13;

#[derive(Debug)]
struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Debug)]
struct Table {
    line: usize,
    rows: Vec<Row>,
}

#[derive(Default)]
struct RawCase {
    name: Option<String>,
    base_mva: Option<(usize, f64)>,
    bus: Option<Table>,
    gen: Option<Table>,
    branch: Option<Table>,
    gencost: Option<Table>,
}

enum Mode {
    Idle,
    Matrix {
        name: String,
        table: Table,
        pending: Vec<f64>,
        pending_line: usize,
    },
    Cell,
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_number(tok: &str, line: usize, table: &str) -> Result<f64, CaseError> {
    tok.parse::<f64>()
        .map_err(|_| malformed(line, table, format!("non-numeric field '{tok}'")))
}

/// Feed one chunk of matrix text. Returns the remainder after `]` once the matrix closes.
fn consume_matrix<'a>(
    text: &'a str,
    line: usize,
    name: &str,
    table: &mut Table,
    pending: &mut Vec<f64>,
    pending_line: &mut usize,
) -> Result<Option<&'a str>, CaseError> {
    let (body, rest) = match text.find(']') {
        Some(pos) => (&text[..pos], Some(&text[pos + 1..])),
        None => (text, None),
    };
    // Every ';' ends a row, and so does the end of a physical line.
    for seg in body.split(';') {
        for tok in seg.split(|c: char| c.is_whitespace() || c == ',') {
            if tok.is_empty() {
                continue;
            }
            if pending.is_empty() {
                *pending_line = line;
            }
            pending.push(parse_number(tok, line, name)?);
        }
        if !pending.is_empty() {
            table.rows.push(Row {
                line: *pending_line,
                values: std::mem::take(pending),
            });
        }
    }
    Ok(rest)
}

fn scan(text: &str) -> Result<RawCase, CaseError> {
    let mut raw = RawCase::default();
    let mut mode = Mode::Idle;

    for (idx, full_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(full_line);
        let mut cursor: &str = line;
        loop {
            match &mut mode {
                Mode::Cell => {
                    if cursor.contains('}') {
                        mode = Mode::Idle;
                    }
                    break;
                }
                Mode::Matrix {
                    name,
                    table,
                    pending,
                    pending_line,
                } => {
                    let rest = consume_matrix(cursor, line_no, name, table, pending, pending_line)?;
                    if rest.is_some() {
                        let Mode::Matrix { name, table, .. } =
                            std::mem::replace(&mut mode, Mode::Idle)
                        else {
                            unreachable!()
                        };
                        store_table(&mut raw, &name, table);
                    }
                    break;
                }
                Mode::Idle => {
                    let trimmed = cursor.trim();
                    if trimmed.is_empty() {
                        break;
                    }
                    if let Some(rest) = trimmed.strip_prefix("function") {
                        if let Some((_, name)) = rest.split_once('=') {
                            raw.name = Some(name.trim().trim_end_matches(';').to_string());
                        }
                        break;
                    }
                    let Some((lhs, rhs)) = trimmed.split_once('=') else {
                        break;
                    };
                    let Some(field) = lhs.trim().strip_prefix("mpc.") else {
                        break;
                    };
                    let field = field.trim().to_string();
                    let rhs = rhs.trim_start();
                    if let Some(body) = rhs.strip_prefix('[') {
                        mode = Mode::Matrix {
                            name: field,
                            table: Table {
                                line: line_no,
                                rows: Vec::new(),
                            },
                            pending: Vec::new(),
                            pending_line: line_no,
                        };
                        cursor = body;
                        continue;
                    }
                    if rhs.starts_with('{') {
                        if !rhs.contains('}') {
                            mode = Mode::Cell;
                        }
                        break;
                    }
                    if field == "baseMVA" {
                        let value = rhs.trim().trim_end_matches(';').trim();
                        raw.base_mva = Some((line_no, parse_number(value, line_no, "baseMVA")?));
                    }
                    break;
                }
            }
        }
    }
    if let Mode::Matrix { name, table, .. } = mode {
        return Err(malformed(
            table.line,
            &name,
            "table is never closed with ']'",
        ));
    }
    Ok(raw)
}

fn store_table(raw: &mut RawCase, name: &str, table: Table) {
    match name {
        "bus" => raw.bus = Some(table),
        "gen" => raw.gen = Some(table),
        "branch" => raw.branch = Some(table),
        "gencost" => raw.gencost = Some(table),
        _ => {}
    }
}

fn require<'a>(table: &'a Option<Table>, name: &str, eof: usize) -> Result<&'a Table, CaseError> {
    table
        .as_ref()
        .ok_or_else(|| malformed(eof, name, format!("missing '{name}' table")))
}

fn check_width(row: &Row, min: usize, table: &str) -> Result<(), CaseError> {
    if row.values.len() < min {
        return Err(malformed(
            row.line,
            table,
            format!(
                "expected at least {min} columns, found {}",
                row.values.len()
            ),
        ));
    }
    Ok(())
}

fn as_bus_id(value: f64, line: usize, table: &str) -> Result<usize, CaseError> {
    if value.fract() != 0.0 || value < 1.0 || !value.is_finite() {
        return Err(malformed(line, table, format!("invalid bus number {value}")));
    }
    Ok(value as usize)
}

/// Parse MATPOWER case text into a per-unit network.
pub fn parse_matpower_case(text: &str) -> Result<Network, CaseError> {
    let raw = scan(text)?;
    let eof = text.lines().count().max(1);
    let (_, base_mva) = raw
        .base_mva
        .ok_or_else(|| malformed(eof, "baseMVA", "missing 'baseMVA' value"))?;
    if !(base_mva > 0.0) {
        return Err(malformed(
            raw.base_mva.map(|b| b.0).unwrap_or(eof),
            "baseMVA",
            "baseMVA must be positive",
        ));
    }
    let bus_t = require(&raw.bus, "bus", eof)?;
    let gen_t = require(&raw.gen, "gen", eof)?;
    let branch_t = require(&raw.branch, "branch", eof)?;
    let cost_t = require(&raw.gencost, "gencost", eof)?;

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    for row in &bus_t.rows {
        check_width(row, BUS_COLS, "bus")?;
        let v = &row.values;
        let kind = match v[1] as i64 {
            1 if v[1] == 1.0 => BusKind::Pq,
            2 if v[1] == 2.0 => BusKind::Pv,
            3 if v[1] == 3.0 => BusKind::Slack,
            4 if v[1] == 4.0 => {
                return Err(CaseError::UnsupportedFeature {
                    line: row.line,
                    table: "bus".into(),
                    reason: "isolated bus (type 4)".into(),
                })
            }
            _ => return Err(malformed(row.line, "bus", format!("invalid bus type {}", v[1]))),
        };
        buses.push(Bus {
            id: as_bus_id(v[0], row.line, "bus")?,
            kind,
            p_load: v[2] / base_mva,
            q_load: v[3] / base_mva,
            g_shunt: v[4] / base_mva,
            b_shunt: v[5] / base_mva,
            area: v[6],
            v_init: v[7],
            delta_init: v[8].to_radians(),
            base_kv: v[9],
            zone: v[10],
            v_max: v[11],
            v_min: v[12],
            delta_min: -PI,
            delta_max: PI,
            extra: v[BUS_COLS..].to_vec(),
        });
    }

    if cost_t.rows.len() < gen_t.rows.len() {
        return Err(malformed(
            cost_t.line,
            "gencost",
            format!(
                "{} cost rows for {} generators",
                cost_t.rows.len(),
                gen_t.rows.len()
            ),
        ));
    }
    if cost_t.rows.len() > gen_t.rows.len() {
        let row = &cost_t.rows[gen_t.rows.len()];
        let reason = if cost_t.rows.len() == 2 * gen_t.rows.len() {
            "reactive power cost rows".to_string()
        } else {
            format!(
                "{} cost rows for {} generators",
                cost_t.rows.len(),
                gen_t.rows.len()
            )
        };
        return Err(CaseError::UnsupportedFeature {
            line: row.line,
            table: "gencost".into(),
            reason,
        });
    }

    let mut generators = Vec::with_capacity(gen_t.rows.len());
    for (row, cost_row) in gen_t.rows.iter().zip(&cost_t.rows) {
        check_width(row, GEN_COLS, "gen")?;
        check_width(cost_row, 4, "gencost")?;
        let c = &cost_row.values;
        match c[0] {
            m if m == 2.0 => {}
            m if m == 1.0 => {
                return Err(CaseError::UnsupportedFeature {
                    line: cost_row.line,
                    table: "gencost".into(),
                    reason: "piecewise-linear cost model".into(),
                })
            }
            m => {
                return Err(malformed(
                    cost_row.line,
                    "gencost",
                    format!("unknown cost model {m}"),
                ))
            }
        }
        let n = c[3];
        if n.fract() != 0.0 || n < 0.0 {
            return Err(malformed(cost_row.line, "gencost", format!("invalid coefficient count {n}")));
        }
        let n = n as usize;
        if c.len() < 4 + n {
            return Err(malformed(
                cost_row.line,
                "gencost",
                format!("declares {n} coefficients but has {}", c.len() - 4),
            ));
        }
        let coeffs = if n == 0 { vec![0.0] } else { c[4..4 + n].to_vec() };
        let v = &row.values;
        generators.push(Generator {
            bus_id: as_bus_id(v[0], row.line, "gen")?,
            p_init: v[1] / base_mva,
            q_init: v[2] / base_mva,
            q_max: v[3] / base_mva,
            q_min: v[4] / base_mva,
            v_setpoint: v[5],
            m_base: v[6],
            in_service: v[7] > 0.0,
            p_max: v[8] / base_mva,
            p_min: v[9] / base_mva,
            cost: CostPolynomial::from_mw_coefficients(&coeffs, base_mva),
            cost_startup: c[1],
            cost_shutdown: c[2],
            extra: v[GEN_COLS..].to_vec(),
        });
    }

    let mut branches = Vec::with_capacity(branch_t.rows.len());
    for row in &branch_t.rows {
        check_width(row, BRANCH_COLS, "branch")?;
        let v = &row.values;
        branches.push(Branch {
            from_bus: as_bus_id(v[0], row.line, "branch")?,
            to_bus: as_bus_id(v[1], row.line, "branch")?,
            r: v[2],
            x: v[3],
            b_charging: v[4],
            rate_mva: v[5],
            rate_b: v[6],
            rate_c: v[7],
            tap: if v[8] == 0.0 { 1.0 } else { v[8] },
            shift: v[9].to_radians(),
            in_service: v[10] > 0.0,
            ang_min: v[11].to_radians(),
            ang_max: v[12].to_radians(),
            extra: v[BRANCH_COLS..].to_vec(),
        });
    }

    Ok(Network {
        name: raw.name.unwrap_or_else(|| "case".to_string()),
        base_mva,
        buses,
        generators,
        branches,
    })
}

fn num(out: &mut String, v: f64) {
    if v.is_infinite() {
        out.push_str(if v > 0.0 { "Inf" } else { "-Inf" });
    } else {
        // Shortest representation that parses back to the same f64.
        write!(out, "{v}").unwrap();
    }
}

fn write_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    out.push('\t');
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push('\t');
        }
        num(out, v);
    }
    out.push_str(";\n");
}

/// Degrees whose conversion back to radians reproduces `rad` bit for bit, when
/// such a value is within a few ulps of the rounded conversion.
fn degrees_exact(rad: f64) -> f64 {
    let deg = rad.to_degrees();
    if !deg.is_finite() || deg.to_radians() == rad {
        return deg;
    }
    let (mut up, mut down) = (deg, deg);
    for _ in 0..8 {
        up = up.next_up();
        down = down.next_down();
        if up.to_radians() == rad {
            return up;
        }
        if down.to_radians() == rad {
            return down;
        }
    }
    deg
}

/// Write a network back out as MATPOWER case text.
pub fn serialize_case(net: &Network) -> String {
    let base = net.base_mva;
    let name = if net.name.is_empty() { "case" } else { &net.name };
    let mut out = String::new();
    writeln!(out, "function mpc = {name}").unwrap();
    out.push_str("mpc.version = '2';\n\n");
    out.push_str("mpc.baseMVA = ");
    num(&mut out, base);
    out.push_str(";\n\n");

    out.push_str("%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n");
    out.push_str("mpc.bus = [\n");
    for b in &net.buses {
        let cols = [
            b.id as f64,
            b.kind.matpower_code() as f64,
            b.p_load * base,
            b.q_load * base,
            b.g_shunt * base,
            b.b_shunt * base,
            b.area,
            b.v_init,
            degrees_exact(b.delta_init),
            b.base_kv,
            b.zone,
            b.v_max,
            b.v_min,
        ];
        write_row(&mut out, cols.into_iter().chain(b.extra.iter().copied()));
    }
    out.push_str("];\n\n");

    out.push_str("%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n");
    out.push_str("mpc.gen = [\n");
    for g in &net.generators {
        let cols = [
            g.bus_id as f64,
            g.p_init * base,
            g.q_init * base,
            g.q_max * base,
            g.q_min * base,
            g.v_setpoint,
            g.m_base,
            if g.in_service { 1.0 } else { 0.0 },
            g.p_max * base,
            g.p_min * base,
        ];
        write_row(&mut out, cols.into_iter().chain(g.extra.iter().copied()));
    }
    out.push_str("];\n\n");

    out.push_str("%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n");
    out.push_str("mpc.branch = [\n");
    for br in &net.branches {
        let cols = [
            br.from_bus as f64,
            br.to_bus as f64,
            br.r,
            br.x,
            br.b_charging,
            br.rate_mva,
            br.rate_b,
            br.rate_c,
            if br.tap == 1.0 { 0.0 } else { br.tap },
            degrees_exact(br.shift),
            if br.in_service { 1.0 } else { 0.0 },
            degrees_exact(br.ang_min),
            degrees_exact(br.ang_max),
        ];
        write_row(&mut out, cols.into_iter().chain(br.extra.iter().copied()));
    }
    out.push_str("];\n\n");

    out.push_str("%% generator cost data\n%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0\n");
    out.push_str("mpc.gencost = [\n");
    for g in &net.generators {
        let coeffs = g.cost.to_mw_coefficients(base);
        let head = [2.0, g.cost_startup, g.cost_shutdown, coeffs.len() as f64];
        write_row(&mut out, head.into_iter().chain(coeffs));
    }
    out.push_str("];\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = "function mpc = mini
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t50\t10\t0\t0\t1\t1\t0\t135\t1\t1.05\t0.95;
];
mpc.gen = [
\t1\t50\t0\t100\t-100\t1\t100\t1\t200\t0\t0\t0;
];
mpc.branch = [
];
mpc.gencost = [
\t2\t0\t0\t3\t0.02\t2\t0;
];
";

    #[test]
    fn minimal_single_bus_case() {
        let net = parse_matpower_case(MINI).unwrap();
        assert_eq!(net.name, "mini");
        assert_eq!(net.n_bus(), 1);
        assert!((net.buses[0].p_load - 0.5).abs() < 1e-15);
        assert_eq!(net.generators[0].extra, vec![0.0, 0.0]);
        assert!((net.generators[0].cost.eval(1.0) - 400.0).abs() < 1e-9);
        let text = serialize_case(&net);
        let bus_rows = text
            .lines()
            .skip_while(|l| !l.starts_with("mpc.bus"))
            .skip(1)
            .take_while(|l| !l.starts_with("];"))
            .count();
        assert_eq!(bus_rows, 1);
        assert_eq!(parse_matpower_case(&text).unwrap(), net);
    }

    #[test]
    fn empty_text_is_malformed() {
        assert!(matches!(
            parse_matpower_case(""),
            Err(CaseError::Malformed { .. })
        ));
    }

    #[test]
    fn short_row_names_line_and_table() {
        let text = MINI.replace("\t1\t50\t0\t100\t-100\t1\t100\t1\t200\t0\t0\t0;", "\t1\t50\t0\t100;");
        match parse_matpower_case(&text) {
            Err(CaseError::Malformed { line, table, .. }) => {
                assert_eq!(line, 8);
                assert_eq!(table, "gen");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field() {
        let text = MINI.replace("0.02", "abc");
        let err = parse_matpower_case(&text).unwrap_err();
        assert!(err.to_string().contains("line 13"), "{err}");
        assert!(err.to_string().contains("gencost"), "{err}");
    }

    #[test]
    fn piecewise_linear_rejected() {
        let text = MINI.replace("\t2\t0\t0\t3\t0.02\t2\t0;", "\t1\t0\t0\t2\t0\t0\t100\t2000;");
        assert!(matches!(
            parse_matpower_case(&text),
            Err(CaseError::UnsupportedFeature { line: 13, .. })
        ));
    }

    #[test]
    fn missing_table_named() {
        let text = MINI.replace("mpc.branch = [\n];\n", "");
        let err = parse_matpower_case(&text).unwrap_err();
        assert!(err.to_string().contains("'branch'"), "{err}");
    }

    #[test]
    fn unterminated_table() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 135 1 1.05 0.95;\n";
        let err = parse_matpower_case(text).unwrap_err();
        assert!(matches!(err, CaseError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn comments_commas_and_inline_rows() {
        let text = "mpc.baseMVA = 100; % base\n\
            mpc.bus = [1, 3, 0, 0, 0, 0, 1, 1, 0, 135, 1, 1.1, 0.9; 2 1 10 5 0 0 1 1 0 135 1 1.1 0.9];\n\
            mpc.bus_name = {\n'a';\n'b';\n};\n\
            mpc.gen = [1 0 0 1 -1 1 100 1 100 0];\n\
            mpc.branch = [1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360];\n\
            mpc.gencost = [2 0 0 2 10 0];";
        let net = parse_matpower_case(text).unwrap();
        assert_eq!(net.n_bus(), 2);
        assert_eq!(net.buses[1].kind, BusKind::Pq);
        assert_eq!(net.branches[0].tap, 1.0);
        assert!((net.generators[0].cost.coefficients[0] - 1000.0).abs() < 1e-12);
    }
}
