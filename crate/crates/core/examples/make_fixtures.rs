//! Writes the seeded synthetic regression fixtures.
//!
//! ```text
//! cargo run -p sra-core --example make_fixtures -- crates/cli/tests/fixtures
//! ```

use std::fs::File;
use std::path::PathBuf;

use sra_core::io::{write_dependency_records, write_rt_rows};
use sra_core::stats::synthetic::{study1_records, study2_rows, Study1Truth, Study2Truth};

fn main() -> sra_core::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).unwrap_or_else(|| ".".into()).into();
    let records = study1_records(2_000, 7, &Study1Truth::default());
    write_dependency_records(&records, File::create(dir.join("synthetic_records.csv"))?)?;
    let rows = study2_rows(300, 12, 8, &Study2Truth::default());
    write_rt_rows(&rows, File::create(dir.join("synthetic_rt.csv"))?)?;
    Ok(())
}
