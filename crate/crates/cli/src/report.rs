//! Row-by-row comparison of a model table against a simulation estimate.

use std::collections::BTreeMap;

use crate::table::ResultTable;
use crate::CliError;

/// Which columns to join on and compare, and the absolute tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceRule {
    pub keys: Vec<String>,
    pub value: String,
    /// Standard-error column of the estimate table, if any.
    pub se: Option<String>,
    pub abs_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    /// Keys, then `model, estimate, abs_diff, se, pass`.
    pub table: ResultTable,
    pub passed: bool,
}

fn column(table: &ResultTable, name: &str) -> Result<usize, CliError> {
    table
        .column(name)
        .ok_or_else(|| CliError::Alignment(format!("table {} has no column {name}", table.name)))
}

fn keyed(table: &ResultTable, keys: &[usize]) -> Result<BTreeMap<Vec<u64>, usize>, CliError> {
    let mut map = BTreeMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let key: Vec<u64> = keys.iter().map(|&k| row[k].to_bits()).collect();
        if map.insert(key, i).is_some() {
            return Err(CliError::Alignment(format!("table {} repeats a key", table.name)));
        }
    }
    Ok(map)
}

/// Pairs rows by key; a row passes iff `|model − estimate| ≤ max(abs_tol, 3·SE)`.
/// Both tables must carry exactly the same keys.
pub fn compare_report(
    model: &ResultTable,
    estimate: &ResultTable,
    rule: &ToleranceRule,
) -> Result<CompareReport, CliError> {
    let mk: Vec<usize> = rule.keys.iter().map(|k| column(model, k)).collect::<Result<_, _>>()?;
    let ek: Vec<usize> = rule.keys.iter().map(|k| column(estimate, k)).collect::<Result<_, _>>()?;
    let mv = column(model, &rule.value)?;
    let ev = column(estimate, &rule.value)?;
    let se = rule.se.as_deref().map(|s| column(estimate, s)).transpose()?;
    let m_rows = keyed(model, &mk)?;
    let e_rows = keyed(estimate, &ek)?;
    if m_rows.is_empty() || m_rows.keys().ne(e_rows.keys()) {
        return Err(CliError::Alignment(format!(
            "tables {} and {} do not share the same keys",
            model.name, estimate.name
        )));
    }
    let mut columns = rule.keys.clone();
    columns.extend(["model", "estimate", "abs_diff", "se", "pass"].map(String::from));
    let mut table = ResultTable::new(&format!("{}_vs_{}", model.name, estimate.name), columns);
    table.meta("abs_tol", rule.abs_tol);
    let mut passed = true;
    for (key, &mi) in &m_rows {
        let ei = e_rows[key];
        let m = model.rows[mi][mv];
        let e = estimate.rows[ei][ev];
        let s = se.map_or(0.0, |c| estimate.rows[ei][c]);
        let diff = (m - e).abs();
        let ok = diff <= rule.abs_tol.max(3.0 * s);
        passed &= ok;
        let mut row: Vec<f64> = key.iter().map(|b| f64::from_bits(*b)).collect();
        row.extend([m, e, diff, s, if ok { 1.0 } else { 0.0 }]);
        table.push(row)?;
    }
    table.meta("verdict", if passed { "pass" } else { "fail" });
    Ok(CompareReport { table, passed })
}
