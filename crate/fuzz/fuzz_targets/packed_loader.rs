#![no_main]

use libfuzzer_sys::fuzz_target;
use rnet_core::dataset::{parse_packed, write_packed};

// The decoder must never panic on arbitrary bytes, and any accepted input
// must re-encode to the accepting bytes exactly (the format has a single
// canonical encoding per point set).
fuzz_target!(|data: &[u8]| {
    if let Ok(ps) = parse_packed(data) {
        assert!(ps.n() > 0 && ps.d() > 0);
        assert_eq!(ps.data().len(), ps.n() * ps.d());
        assert!(ps.data().iter().all(|v| v.is_finite()));
        assert_eq!(write_packed(&ps), data);
    }
});
