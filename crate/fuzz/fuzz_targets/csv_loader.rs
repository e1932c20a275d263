#![no_main]

use libfuzzer_sys::fuzz_target;
use rnet_core::dataset::parse_csv;
use rnet_core::Metric;

// The parser must never panic, and anything it accepts must be a coherent
// point set: n*d values, every one finite.
fuzz_target!(|data: &[u8]| {
    for metric in [Metric::L1, Metric::L2] {
        if let Ok(ps) = parse_csv(data, metric) {
            assert!(ps.n() > 0 && ps.d() > 0);
            assert_eq!(ps.data().len(), ps.n() * ps.d());
            assert!(ps.data().iter().all(|v| v.is_finite()));
        }
    }
});
