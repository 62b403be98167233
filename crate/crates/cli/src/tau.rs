//! The maximin oracle over a payoff table read from CSV.

use std::path::Path;

use anyhow::Context;
use gpmro::domain::{maximin_value, MaximinSolution, PayoffTable};

use crate::output::create_file;

pub fn oracle_tau(table_csv: &Path, eps: f64, strategy_out: Option<&Path>) -> anyhow::Result<MaximinSolution> {
    let file = std::fs::File::open(table_csv).with_context(|| format!("opening {}", table_csv.display()))?;
    let table = PayoffTable::read_csv(file)?;
    let sol = maximin_value(&table, eps)?;
    if let Some(p) = strategy_out {
        sol.strategy.write_csv(create_file(p)?)?;
    }
    Ok(sol)
}
