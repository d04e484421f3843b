#![no_main]

use libfuzzer_sys::fuzz_target;
use molfuse::pipeline::RunConfig;

fuzz_target!(|data: &str| {
    let mut config = RunConfig::preset("mini").expect("preset exists");
    if config.apply_file_str(data).is_ok() {
        let _ = config.validate();
    }
});
