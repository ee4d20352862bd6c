//! Two-period panel data with selection indicators.
//!
//! A [`PanelDataset`] is an immutable, validated collection of [`UnitRecord`]s.
//! Rows are stored once behind an `Arc`; resampled datasets share the same
//! storage and only carry their own row index list, which keeps bootstrap
//! replicates cheap.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Treatment-group indicator `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Control,
    Treated,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Control, Group::Treated];

    pub fn index(self) -> usize {
        match self {
            Group::Control => 0,
            Group::Treated => 1,
        }
    }

    pub fn from_indicator(g: u8) -> Option<Self> {
        match g {
            0 => Some(Group::Control),
            1 => Some(Group::Treated),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Group::Control => Group::Treated,
            Group::Treated => Group::Control,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Control => f.write_str("control"),
            Group::Treated => f.write_str("treated"),
        }
    }
}

/// Direction in which treatment moves selection for a source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `s(1) >= s(0)` for every unit; rules out the observed-only-in-control stratum.
    Positive,
    /// `s(1) <= s(0)` for every unit; rules out the observed-only-in-treatment stratum.
    Negative,
}

impl Direction {
    /// Parses a comma-separated list such as `negative,positive`.
    pub fn parse_list(text: &str) -> Result<Vec<Direction>, String> {
        text.split(',')
            .map(|tok| tok.trim().parse())
            .collect()
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(Direction::Positive),
            "negative" | "neg" | "-" => Ok(Direction::Negative),
            other => Err(format!("unknown monotonicity direction `{other}`")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Positive => f.write_str("positive"),
            Direction::Negative => f.write_str("negative"),
        }
    }
}

/// One sampled unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: String,
    pub group: Group,
    /// Outcome at t=1, present iff `s1`.
    pub y1: Option<f64>,
    /// Outcome at t=2, present iff `s2`.
    pub y2: Option<f64>,
    pub s1: bool,
    pub s2: bool,
    /// Per-source indicators at t=1; empty when the single source is implicit.
    pub sources_t1: Vec<bool>,
    /// Per-source indicators at t=2; empty when the single source is implicit.
    pub sources_t2: Vec<bool>,
}

impl UnitRecord {
    /// A single-source record. Outcomes are attached only where the unit is observed.
    pub fn new(id: impl Into<String>, group: Group, s1: bool, s2: bool, y1: f64, y2: f64) -> Self {
        UnitRecord {
            id: id.into(),
            group,
            y1: s1.then_some(y1),
            y2: s2.then_some(y2),
            s1,
            s2,
            sources_t1: Vec::new(),
            sources_t2: Vec::new(),
        }
    }

    pub fn with_sources(mut self, t1: Vec<bool>, t2: Vec<bool>) -> Self {
        self.sources_t1 = t1;
        self.sources_t2 = t2;
        self
    }

    /// Differenced outcome `y2 - y1`, defined when both periods are observed.
    pub fn diff(&self) -> Option<f64> {
        match (self.y1, self.y2) {
            (Some(a), Some(b)) if self.s2 => Some(b - a),
            _ => None,
        }
    }

    /// Indicator of source `j` at t=1. With implicit single source this is `s1`.
    pub fn source_t1(&self, j: usize) -> bool {
        if self.sources_t1.is_empty() {
            self.s1
        } else {
            self.sources_t1[j]
        }
    }

    pub fn source_t2(&self, j: usize) -> bool {
        if self.sources_t2.is_empty() {
            self.s2
        } else {
            self.sources_t2[j]
        }
    }
}

/// Name of a violated data rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// `s1 = 0` but `s2 = 1`.
    AbsorbingState,
    /// An outcome cell is filled exactly when its selection indicator is 1.
    OutcomePresence,
    /// Overall selection equals the product of the per-source indicators.
    ProductConsistency,
    /// At most one source can remove a unit in a given period.
    MutualExclusivity,
    /// Every unit carries the same number of sources.
    SourceCount,
    /// Outcomes must be finite.
    NonFiniteOutcome,
    /// Each group needs at least one unit.
    GroupCoverage,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::AbsorbingState => "absorbing-state",
            Rule::OutcomePresence => "outcome-presence",
            Rule::ProductConsistency => "product-consistency",
            Rule::MutualExclusivity => "mutual-exclusivity",
            Rule::SourceCount => "source-count",
            Rule::NonFiniteOutcome => "non-finite-outcome",
            Rule::GroupCoverage => "group-coverage",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One rule violation. `row` is the 1-based data row; `None` marks a dataset-level rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub row: Option<usize>,
    pub id: Option<String>,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.row, &self.id) {
            (Some(row), Some(id)) => write!(f, "row {row} (id {id}): {}", self.rule),
            (Some(row), None) => write!(f, "row {row}: {}", self.rule),
            _ => write!(f, "dataset: {}", self.rule),
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}: {rule} violated")]
    InvariantViolation { row: usize, rule: Rule },
    #[error("group {0} has no units")]
    EmptyGroup(Group),
    #[error("dataset has {sources} sources but {directions} directions were configured")]
    DirectionCount { sources: usize, directions: usize },
}

/// Group-wise counts cached at construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Tallies {
    pub n: usize,
    /// Units per group, indexed by [`Group::index`].
    pub n_group: [usize; 2],
    pub s1: [usize; 2],
    pub s2: [usize; 2],
    /// Per-source t=1 sums, one entry per source.
    pub sources_t1: Vec<[usize; 2]>,
    pub sources_t2: Vec<[usize; 2]>,
}

impl Tallies {
    fn compute<'a>(units: impl Iterator<Item = &'a UnitRecord>, n_sources: usize) -> Self {
        let mut t = Tallies {
            sources_t1: vec![[0; 2]; n_sources],
            sources_t2: vec![[0; 2]; n_sources],
            ..Default::default()
        };
        for u in units {
            let g = u.group.index();
            t.n += 1;
            t.n_group[g] += 1;
            t.s1[g] += u.s1 as usize;
            t.s2[g] += u.s2 as usize;
            for j in 0..n_sources {
                t.sources_t1[j][g] += u.source_t1(j) as usize;
                t.sources_t2[j][g] += u.source_t2(j) as usize;
            }
        }
        t
    }

    /// Sample mean of `s1` within a group.
    pub fn mean_s1(&self, g: Group) -> f64 {
        self.s1[g.index()] as f64 / self.n_group[g.index()] as f64
    }

    pub fn mean_s2(&self, g: Group) -> f64 {
        self.s2[g.index()] as f64 / self.n_group[g.index()] as f64
    }

    pub fn mean_source_t1(&self, j: usize, g: Group) -> f64 {
        self.sources_t1[j][g.index()] as f64 / self.n_group[g.index()] as f64
    }

    pub fn mean_source_t2(&self, j: usize, g: Group) -> f64 {
        self.sources_t2[j][g.index()] as f64 / self.n_group[g.index()] as f64
    }
}

/// Validated, immutable panel.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    store: Arc<Vec<UnitRecord>>,
    /// Row view into `store`; `None` means every stored row in order.
    rows: Option<Arc<Vec<usize>>>,
    n_sources: usize,
    directions: Vec<Direction>,
    tallies: Tallies,
}

impl PanelDataset {
    /// Validates `units` and builds the dataset, failing on the first violation.
    pub fn new(units: Vec<UnitRecord>) -> Result<Self, DataError> {
        let violations = validate_units(&units);
        if let Some(v) = violations.first() {
            return Err(match v.row {
                Some(row) => DataError::InvariantViolation { row, rule: v.rule },
                None => {
                    let missing = Group::BOTH
                        .into_iter()
                        .find(|g| !units.iter().any(|u| u.group == *g))
                        .unwrap_or(Group::Control);
                    DataError::EmptyGroup(missing)
                }
            });
        }
        let n_sources = source_count(&units);
        let tallies = Tallies::compute(units.iter(), n_sources);
        Ok(PanelDataset {
            store: Arc::new(units),
            rows: None,
            n_sources,
            directions: Vec::new(),
            tallies,
        })
    }

    /// Attaches the per-source monotonicity configuration.
    pub fn with_directions(mut self, directions: Vec<Direction>) -> Result<Self, DataError> {
        if directions.len() != self.n_sources {
            return Err(DataError::DirectionCount {
                sources: self.n_sources,
                directions: directions.len(),
            });
        }
        self.directions = directions;
        Ok(self)
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    /// Number of selection sources `J` (1 when sources are implicit).
    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    /// Whether units carry explicit per-source columns.
    pub fn has_explicit_sources(&self) -> bool {
        self.units().next().is_some_and(|u| !u.sources_t1.is_empty())
    }

    pub fn tallies(&self) -> &Tallies {
        &self.tallies
    }

    pub fn len(&self) -> usize {
        self.tallies.n
    }

    pub fn is_empty(&self) -> bool {
        self.tallies.n == 0
    }

    /// Units in row order.
    pub fn units(&self) -> impl Iterator<Item = &UnitRecord> + '_ {
        let store = &self.store;
        let rows = self.rows.as_deref();
        let len = rows.map_or(store.len(), Vec::len);
        (0..len).map(move |i| match rows {
            Some(r) => &store[r[i]],
            None => &store[i],
        })
    }

    /// Indices (into [`Self::units`] order) of the units in `group`.
    pub fn group_rows(&self, group: Group) -> Vec<usize> {
        self.units()
            .enumerate()
            .filter(|(_, u)| u.group == group)
            .map(|(i, _)| i)
            .collect()
    }

    /// A dataset made of the given rows of this one, in the given order.
    /// Rows are already valid, so nothing is re-checked except group coverage.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, DataError> {
        let mapped: Vec<usize> = match self.rows.as_deref() {
            Some(base) => rows.iter().map(|&i| base[i]).collect(),
            None => rows.to_vec(),
        };
        let tallies = Tallies::compute(mapped.iter().map(|&i| &self.store[i]), self.n_sources);
        for g in Group::BOTH {
            if tallies.n_group[g.index()] == 0 {
                return Err(DataError::EmptyGroup(g));
            }
        }
        Ok(PanelDataset {
            store: Arc::clone(&self.store),
            rows: Some(Arc::new(mapped)),
            n_sources: self.n_sources,
            directions: self.directions.clone(),
            tallies,
        })
    }

    /// Row-level validation report. Always empty for a constructed dataset.
    pub fn validate(&self) -> Vec<Violation> {
        let units: Vec<UnitRecord> = self.units().cloned().collect();
        validate_units(&units)
    }

    /// Number of units with `s2 = 1`, i.e. rows entering bound estimation.
    pub fn n_observed_post(&self) -> usize {
        self.tallies.s2[0] + self.tallies.s2[1]
    }
}

fn source_count(units: &[UnitRecord]) -> usize {
    units
        .first()
        .map_or(1, |u| u.sources_t1.len().max(1))
}

/// Checks every row-level and dataset-level rule. Never fails; violations are data.
pub fn validate_units(units: &[UnitRecord]) -> Vec<Violation> {
    let mut out = Vec::new();
    let expected_sources = units.first().map_or(0, |u| u.sources_t1.len());
    for (i, u) in units.iter().enumerate() {
        let mut push = |rule| {
            out.push(Violation {
                row: Some(i + 1),
                id: Some(u.id.clone()),
                rule,
            })
        };
        if !u.s1 && u.s2 {
            push(Rule::AbsorbingState);
        }
        if u.y1.is_some() != u.s1 || u.y2.is_some() != u.s2 {
            push(Rule::OutcomePresence);
        }
        if u.y1.is_some_and(|y| !y.is_finite()) || u.y2.is_some_and(|y| !y.is_finite()) {
            push(Rule::NonFiniteOutcome);
        }
        if u.sources_t1.len() != expected_sources || u.sources_t2.len() != expected_sources {
            push(Rule::SourceCount);
            continue;
        }
        let j = u.sources_t1.len();
        if j == 0 {
            continue;
        }
        let mut product_ok = true;
        let mut exclusive_ok = true;
        for (s, sources) in [(u.s1, &u.sources_t1), (u.s2, &u.sources_t2)] {
            let product = sources.iter().all(|&b| b);
            let sum = sources.iter().filter(|&&b| b).count();
            product_ok &= product == s;
            exclusive_ok &= sum + 1 >= j;
        }
        if !exclusive_ok {
            push(Rule::MutualExclusivity);
        }
        if !product_ok {
            push(Rule::ProductConsistency);
        }
    }
    for g in Group::BOTH {
        if !units.iter().any(|u| u.group == g) {
            out.push(Violation {
                row: None,
                id: None,
                rule: Rule::GroupCoverage,
            });
        }
    }
    out
}

/// Differenced outcomes `y2 - y1` for units of `group` observed at t=2, in row order.
pub fn observed_diffs(ds: &PanelDataset, group: Group) -> Result<Vec<f64>, crate::EstimationError> {
    let diffs: Vec<f64> = ds
        .units()
        .filter(|u| u.group == group)
        .filter_map(UnitRecord::diff)
        .collect();
    if diffs.is_empty() {
        return Err(crate::EstimationError::EmptySelection(group));
    }
    Ok(diffs)
}

/// Column-name mapping for CSV input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub id: String,
    pub g: String,
    pub y1: String,
    pub y2: String,
    pub s1: String,
    pub s2: String,
    /// Per-source `(t1, t2)` column pairs. When empty, `src{j}_t1`/`src{j}_t2`
    /// columns are picked up from the header if present.
    pub sources: Vec<(String, String)>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            id: "id".into(),
            g: "g".into(),
            y1: "y1".into(),
            y2: "y2".into(),
            s1: "s1".into(),
            s2: "s2".into(),
            sources: Vec::new(),
        }
    }
}

impl Schema {
    /// Reads a TOML column mapping; omitted keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Parsed but not yet validated CSV content.
#[derive(Debug, Clone)]
pub struct RawPanel {
    pub units: Vec<UnitRecord>,
    /// Header columns not referenced by the schema (covariates are ignored).
    pub ignored_columns: Vec<String>,
}

/// Parses CSV rows without enforcing the data rules.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<RawPanel, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header_err = |message: String| DataError::Parse {
        row: 0,
        column: "header".into(),
        message,
    };
    let headers = rdr
        .headers()
        .map_err(|e| header_err(e.to_string()))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(header_err("empty file".into()));
    }
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };

    let sources: Vec<(String, String)> = if schema.sources.is_empty() {
        (1..)
            .map(|j| (format!("src{j}_t1"), format!("src{j}_t2")))
            .take_while(|(a, b)| index.contains_key(a.as_str()) && index.contains_key(b.as_str()))
            .collect()
    } else {
        schema.sources.clone()
    };

    let id_col = col(&schema.id)?;
    let g_col = col(&schema.g)?;
    let y1_col = col(&schema.y1)?;
    let y2_col = col(&schema.y2)?;
    let s1_col = col(&schema.s1)?;
    let s2_col = col(&schema.s2)?;
    let src_cols: Vec<(usize, usize)> = sources
        .iter()
        .map(|(a, b)| Ok((col(a)?, col(b)?)))
        .collect::<Result<_, DataError>>()?;

    let mut used = vec![id_col, g_col, y1_col, y2_col, s1_col, s2_col];
    used.extend(src_cols.iter().flat_map(|&(a, b)| [a, b]));
    let ignored_columns = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !used.contains(i))
        .map(|(_, h)| h.to_string())
        .collect();

    let mut units = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let parse_err = |c: usize, message: String| DataError::Parse {
            row,
            column: headers.get(c).unwrap_or("").to_string(),
            message,
        };
        let binary = |c: usize| -> Result<bool, DataError> {
            match field(c) {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(parse_err(c, format!("expected 0 or 1, found `{other}`"))),
            }
        };
        let outcome = |c: usize| -> Result<Option<f64>, DataError> {
            let text = field(c);
            if text.is_empty() {
                return Ok(None);
            }
            text.parse::<f64>()
                .map(Some)
                .map_err(|e| parse_err(c, format!("`{text}`: {e}")))
        };
        let group = if binary(g_col)? {
            Group::Treated
        } else {
            Group::Control
        };
        let mut t1 = Vec::with_capacity(src_cols.len());
        let mut t2 = Vec::with_capacity(src_cols.len());
        for &(a, b) in &src_cols {
            t1.push(binary(a)?);
            t2.push(binary(b)?);
        }
        units.push(UnitRecord {
            id: field(id_col).to_string(),
            group,
            y1: outcome(y1_col)?,
            y2: outcome(y2_col)?,
            s1: binary(s1_col)?,
            s2: binary(s2_col)?,
            sources_t1: t1,
            sources_t2: t2,
        });
    }
    Ok(RawPanel {
        units,
        ignored_columns,
    })
}

/// Reads and validates a CSV file. Errors name the first offending row.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<PanelDataset, DataError> {
    let file = std::fs::File::open(path)?;
    let raw = read_csv(std::io::BufReader::new(file), schema)?;
    PanelDataset::new(raw.units)
}

/// Writes the dataset with the default column names. Outcomes use the shortest
/// representation that round-trips exactly; missing outcomes are empty cells.
pub fn write_csv<W: Write>(ds: &PanelDataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let explicit = ds.has_explicit_sources();
    let mut header: Vec<String> = ["id", "g", "y1", "y2", "s1", "s2"].map(String::from).to_vec();
    if explicit {
        for j in 1..=ds.n_sources() {
            header.push(format!("src{j}_t1"));
            header.push(format!("src{j}_t2"));
        }
    }
    w.write_record(&header).map_err(csv_io)?;
    let bit = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    let num = |y: Option<f64>| y.map(|v| format!("{v:?}")).unwrap_or_default();
    for u in ds.units() {
        let mut rec = vec![
            u.id.clone(),
            bit(u.group == Group::Treated),
            num(u.y1),
            num(u.y2),
            bit(u.s1),
            bit(u.s2),
        ];
        for (a, b) in u.sources_t1.iter().zip(&u.sources_t2) {
            rec.push(bit(*a));
            rec.push(bit(*b));
        }
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> DataError {
    DataError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PanelDataset, DataError> {
        let raw = read_csv(text.as_bytes(), &Schema::default())?;
        PanelDataset::new(raw.units)
    }

    #[test]
    fn absorbing_state_violation_names_row() {
        let text = "id,g,y1,y2,s1,s2\n\
                    a,1,1.0,2.0,1,1\n\
                    b,0,1.0,,1,0\n\
                    c,1,,2.0,0,1\n\
                    d,0,0.5,0.7,1,1\n";
        match parse(text) {
            Err(DataError::InvariantViolation { row, rule }) => {
                assert_eq!(row, 3);
                assert_eq!(rule, Rule::AbsorbingState);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_header_parse_error() {
        match parse("") {
            Err(DataError::Parse { row, column, .. }) => {
                assert_eq!(row, 0);
                assert_eq!(column, "header");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column() {
        let err = parse("id,g,y1,y2,s1\n").unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(c) if c == "s2"));
    }

    #[test]
    fn bad_indicator_is_parse_error() {
        let err = parse("id,g,y1,y2,s1,s2\na,2,1,1,1,1\n").unwrap_err();
        assert!(matches!(err, DataError::Parse { row: 1, ref column, .. } if column == "g"));
    }

    #[test]
    fn tallies_match_fixture() {
        // treated: all s1=1, 60% s2=1; control: 20% s1=1, 10% s2=1
        let mut text = String::from("id,g,y1,y2,s1,s2\n");
        for i in 0..10 {
            let s2 = i < 6;
            text += &format!("t{i},1,1.0,{},1,{}\n", if s2 { "2.0" } else { "" }, s2 as u8);
        }
        for i in 0..10 {
            let s1 = i < 2;
            let s2 = i < 1;
            text += &format!(
                "c{i},0,{},{},{},{}\n",
                if s1 { "1.0" } else { "" },
                if s2 { "1.5" } else { "" },
                s1 as u8,
                s2 as u8
            );
        }
        let ds = parse(&text).unwrap();
        let t = ds.tallies();
        assert_eq!(t.mean_s1(Group::Treated), 1.0);
        assert_eq!(t.mean_s2(Group::Treated), 0.6);
        assert_eq!(t.mean_s1(Group::Control), 0.2);
        assert_eq!(t.mean_s2(Group::Control), 0.1);
    }

    #[test]
    fn validate_reports_source_rules() {
        let base = UnitRecord::new("a", Group::Treated, true, false, 1.0, 0.0);
        let bad_exclusive = base.clone().with_sources(vec![true, true], vec![false, false]);
        let unit_ok = UnitRecord::new("b", Group::Control, true, true, 1.0, 1.0)
            .with_sources(vec![true, true], vec![true, true]);
        let v = validate_units(&[bad_exclusive, unit_ok.clone()]);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::MutualExclusivity);
        assert_eq!(v[0].row, Some(1));

        let bad_product = UnitRecord::new("c", Group::Treated, true, true, 1.0, 1.0)
            .with_sources(vec![true, true], vec![true, false]);
        let v = validate_units(&[bad_product, unit_ok]);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::ProductConsistency);
    }

    #[test]
    fn validate_clean_dataset_is_empty() {
        let ds = PanelDataset::new(vec![
            UnitRecord::new("a", Group::Treated, true, true, 1.0, 3.0),
            UnitRecord::new("b", Group::Control, true, false, 1.0, 0.0),
        ])
        .unwrap();
        assert!(ds.validate().is_empty());
    }

    #[test]
    fn observed_diffs_filters_and_orders() {
        let ds = PanelDataset::new(vec![
            UnitRecord::new("a", Group::Treated, true, true, 1.0, 3.0),
            UnitRecord::new("b", Group::Treated, true, false, 1.0, 0.0),
            UnitRecord::new("c", Group::Treated, true, true, 2.0, 2.5),
            UnitRecord::new("d", Group::Control, true, false, 1.0, 0.0),
        ])
        .unwrap();
        assert_eq!(observed_diffs(&ds, Group::Treated).unwrap(), vec![2.0, 0.5]);
        assert!(matches!(
            observed_diffs(&ds, Group::Control),
            Err(crate::EstimationError::EmptySelection(Group::Control))
        ));
    }

    #[test]
    fn empty_group_rejected() {
        let err = PanelDataset::new(vec![UnitRecord::new("a", Group::Treated, true, true, 1.0, 3.0)])
            .unwrap_err();
        assert!(matches!(err, DataError::EmptyGroup(Group::Control)));
    }

    #[test]
    fn covariates_are_ignored() {
        let raw = read_csv(
            "id,g,age,y1,y2,s1,s2\na,1,30,1,2,1,1\n".as_bytes(),
            &Schema::default(),
        )
        .unwrap();
        assert_eq!(raw.ignored_columns, vec!["age".to_string()]);
    }

    #[test]
    fn select_rows_retallies() {
        let ds = PanelDataset::new(vec![
            UnitRecord::new("a", Group::Treated, true, true, 1.0, 3.0),
            UnitRecord::new("b", Group::Control, true, false, 1.0, 0.0),
            UnitRecord::new("c", Group::Control, true, true, 1.0, 2.0),
        ])
        .unwrap();
        let sub = ds.select_rows(&[0, 2, 2]).unwrap();
        assert_eq!(sub.tallies().n, 3);
        assert_eq!(sub.tallies().s2, [2, 1]);
        let ids: Vec<&str> = sub.units().map(|u| u.id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "c"]);
        let nested = sub.select_rows(&[2, 0]).unwrap();
        let ids: Vec<&str> = nested.units().map(|u| u.id.as_str()).collect();
        assert_eq!(ids, ["c", "a"]);
    }
}
