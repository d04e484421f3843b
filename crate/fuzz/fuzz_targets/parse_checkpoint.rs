#![no_main]

use libfuzzer_sys::fuzz_target;
use molfuse::pipeline::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        // a decoded checkpoint must re-encode
        let bytes = ckpt.to_bytes().expect("decoded checkpoint re-encodes");
        let again = Checkpoint::from_bytes(&bytes).expect("round trip");
        assert_eq!(ckpt, again);
    }
});
