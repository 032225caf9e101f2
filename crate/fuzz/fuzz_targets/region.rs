#![no_main]

use landau_cli::Region;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(region) = s.parse::<Region>() {
        let again: Region = region.to_string().parse().expect("display form parses");
        assert_eq!(again, region);
        if region.validate(2f64.sqrt()).is_ok() {
            assert!(!region.boundary().is_empty());
        }
    }
});
