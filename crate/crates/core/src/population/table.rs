use std::io::Read;

use serde::Deserialize;

use super::{AgeGrid, BaselineRates, PopulationError};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct RateTableRow {
    pub age: f64,
    pub death_rate: f64,
    pub birth_rate: f64,
}

/// Reads a `age,death_rate,birth_rate` CSV with a header row. Ages must be
/// strictly increasing and rates nonnegative.
pub fn read_rate_table(reader: impl Read) -> Result<Vec<RateTableRow>, PopulationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<RateTableRow> = Vec::new();
    for (line, rec) in rdr.deserialize().enumerate() {
        let row: RateTableRow = rec.map_err(|e| PopulationError::Table(e.to_string()))?;
        if !(row.death_rate >= 0.0 && row.birth_rate >= 0.0) {
            return Err(PopulationError::Table(format!("row {}: rates must be nonnegative", line + 1)));
        }
        if rows.last().is_some_and(|p| p.age >= row.age) {
            return Err(PopulationError::Table(format!("row {}: ages must be strictly increasing", line + 1)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PopulationError::Table("no rows".into()));
    }
    Ok(rows)
}

impl BaselineRates {
    /// Piecewise-constant baseline: each bin takes the last row whose age is
    /// at or below the bin's age (the first row below the table's range).
    pub fn from_table(grid: &AgeGrid, rows: &[RateTableRow]) -> Self {
        let mut birth = Vec::with_capacity(grid.bins());
        let mut death = Vec::with_capacity(grid.bins());
        let mut j = 0;
        for i in 0..grid.bins() {
            let a = grid.age(i);
            while j + 1 < rows.len() && rows[j + 1].age <= a + 1e-12 {
                j += 1;
            }
            birth.push(rows[j].birth_rate);
            death.push(rows[j].death_rate);
        }
        Self { birth, death }
    }
}
