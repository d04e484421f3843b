#![no_main]

use libfuzzer_sys::fuzz_target;
use molfuse::pipeline::conformer::parse_xyz_blocks;

fuzz_target!(|data: &str| {
    if let Ok(table) = parse_xyz_blocks(data) {
        for atoms in table.values() {
            for (_, xyz) in atoms {
                assert!(xyz.iter().all(|v| v.is_finite()));
            }
        }
    }
});
