//! Built-in baseline-versus-gain fixture (13 languages).

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const FIXTURE_CSV: &str = include_str!("../../data/headroom_fixture.csv");

/// Reference correlations of the fixture rows.
pub const FIXTURE_RHO_FULL: f64 = 0.28;
pub const FIXTURE_RHO_EXCLUDED: f64 = 0.67;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub language: String,
    pub morphology: String,
    pub baseline_chrf: f64,
    pub discriminability: f64,
    pub delta_chrf: f64,
    pub flagged: u8,
}

/// Parses a fixture CSV, skipping `#` comment lines.
pub fn parse_fixture(text: &str) -> Result<Vec<FixtureRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

pub fn headroom_fixture() -> Vec<FixtureRow> {
    parse_fixture(FIXTURE_CSV).expect("built-in fixture parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_has_thirteen_rows_one_flagged() {
        let rows = headroom_fixture();
        assert_eq!(rows.len(), 13);
        assert_eq!(rows.iter().filter(|r| r.flagged == 1).count(), 1);
        assert_eq!(rows[0].language, "zho_Hant");
        assert_eq!(rows[12].delta_chrf, 2.30);
    }
}
