#![no_main]

use landau_cli::{parse_cutoff, parse_test_function};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = parse_test_function(s);
    if let Ok(psi) = parse_cutoff(s) {
        let mid = 0.5 * (psi.plateau.0 + psi.plateau.1);
        assert!((psi.eval(mid).0 - 1.0).abs() < 1e-12);
    }
});
