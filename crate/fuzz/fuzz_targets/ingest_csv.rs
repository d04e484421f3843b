#![no_main]

use libfuzzer_sys::fuzz_target;
use molfuse::pipeline::{ingest_str, IngestMode};

fuzz_target!(|data: &str| {
    let _ = ingest_str(data, IngestMode::RequireEfficiency);
    if let Ok(records) = ingest_str(data, IngestMode::AllowMissingEfficiency) {
        assert!(!records.is_empty());
        for r in &records {
            assert!(r.efficiency.map_or(true, f64::is_finite));
        }
    }
});
