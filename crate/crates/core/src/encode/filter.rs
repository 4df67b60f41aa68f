//! Declarative cohort filters: a conjunction of `column op value` rules.

use std::fmt;
use std::path::Path;

use crate::config::{self, quote};
use crate::encode::RawTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Equals(String),
    NotEquals(String),
    AtLeast(f64),
    NonBlank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRule {
    pub column: String,
    pub predicate: Predicate,
}

/// Cells equal when their trimmed text matches, or when both parse as
/// numbers of equal value (so `0` matches `00`).
fn cell_equals(cell: &str, value: &str) -> bool {
    let (a, b) = (cell.trim(), value.trim());
    if a == b {
        return true;
    }
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

impl Predicate {
    pub fn matches(&self, cell: &str) -> bool {
        match self {
            Predicate::Equals(v) => cell_equals(cell, v),
            Predicate::NotEquals(v) => !cell_equals(cell, v),
            Predicate::AtLeast(x) => cell.trim().parse::<f64>().is_ok_and(|c| c >= *x),
            Predicate::NonBlank => !cell.trim().is_empty(),
        }
    }
}

impl fmt::Display for FilterRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let col = quote(&self.column);
        match &self.predicate {
            Predicate::Equals(v) => write!(f, "{col} == {}", quote(v)),
            Predicate::NotEquals(v) => write!(f, "{col} != {}", quote(v)),
            Predicate::AtLeast(x) => write!(f, "{col} >= {x}"),
            Predicate::NonBlank => write!(f, "{col} nonblank"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterRuleSet {
    pub rules: Vec<FilterRule>,
}

impl FilterRuleSet {
    /// Parse one rule per line: `column op value`, with `op` one of
    /// `==` (or `=`), `!=`, `>=`, or the value-less `nonblank`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for d in config::parse(text)? {
            let t = &d.tokens;
            let predicate = match (t.get(1).map(String::as_str), t.len()) {
                (Some("nonblank"), 2) => Predicate::NonBlank,
                (Some("==" | "="), 3) => Predicate::Equals(t[2].clone()),
                (Some("!="), 3) => Predicate::NotEquals(t[2].clone()),
                (Some(">="), 3) => Predicate::AtLeast(
                    t[2].trim()
                        .parse()
                        .map_err(|_| d.error(format!("`>=` needs a number, got `{}`", t[2])))?,
                ),
                _ => return Err(d.error("expected `column op value` or `column nonblank`")),
            };
            rules.push(FilterRule {
                column: t[0].clone(),
                predicate,
            });
        }
        Ok(FilterRuleSet { rules })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(Error::at(path))?).map_err(|e| e.with_path(path))
    }

    pub fn to_config(&self) -> String {
        self.rules.iter().map(|r| format!("{r}\n")).collect()
    }
}

/// Rows satisfying every rule, in their original order.
pub fn apply_filters(table: &RawTable, rules: &FilterRuleSet) -> Result<RawTable> {
    let compiled = rules
        .rules
        .iter()
        .map(|r| Ok((table.column_index(&r.column)?, &r.predicate)))
        .collect::<Result<Vec<_>>>()?;
    Ok(table.retain_rows(|row| compiled.iter().all(|(i, p)| p.matches(&row[*i]))))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn colon_rules() -> FilterRuleSet {
        FilterRuleSet::parse(
            r#"
# cohort filters for a colon extract
"SEQUENCE NUMBER-CENTRAL" != Unspecified
"AGE AT DIAGNOSIS" != "Unknown age"
"YEAR OF DIAGNOSIS" >= 2004
"SURVIVAL MONTHS FLAG" == 1
"CS TUMOR SIZE EXT/EVAL" != ""
"CS TUMOR SIZE" != 999
"PRIMARY SITE" == "LARGE INTESTINE, (EXCL. APPENDIX)"
"#,
        )
        .unwrap()
    }

    fn table(rows: &[[&str; 7]]) -> RawTable {
        RawTable::new(
            [
                "SEQUENCE NUMBER-CENTRAL",
                "AGE AT DIAGNOSIS",
                "YEAR OF DIAGNOSIS",
                "SURVIVAL MONTHS FLAG",
                "CS TUMOR SIZE EXT/EVAL",
                "CS TUMOR SIZE",
                "PRIMARY SITE",
            ]
            .map(String::from)
            .to_vec(),
            rows.iter().map(|r| r.map(String::from).to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn drops_unknown_tumor_size() {
        let site = "LARGE INTESTINE, (EXCL. APPENDIX)";
        let t = table(&[
            ["0", "63", "2008", "1", "3", "45", site],
            ["0", "70", "2009", "1", "3", "999", site],
            ["0", "70", "2003", "1", "3", "20", site],
            ["0", "70", "2010", "1", " ", "20", site],
            ["0", "55", "2010", "1", "1", "20", "LUNG & BRONCHUS"],
        ]);
        let out = apply_filters(&t, &colon_rules()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.rows()[0][5], "45");
    }

    #[test]
    fn empty_rules_are_identity() {
        let t = table(&[["a", "b", "c", "d", "e", "f", "g"]]);
        assert_eq!(apply_filters(&t, &FilterRuleSet::default()).unwrap(), t);
    }

    #[test]
    fn unknown_column_is_reported() {
        let t = table(&[]);
        let rules = FilterRuleSet::parse("missing == 1").unwrap();
        assert!(matches!(apply_filters(&t, &rules), Err(Error::UnknownColumn(c)) if c == "missing"));
    }

    #[test]
    fn config_round_trip() {
        let rules = colon_rules();
        assert_eq!(FilterRuleSet::parse(&rules.to_config()).unwrap(), rules);
    }

    #[test]
    fn bad_lines_carry_line_numbers() {
        let err = FilterRuleSet::parse("a == 1\nb >= x\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(2), .. }));
    }
}
