#![no_main]

use landau_core::model::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(doc) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::from_json(doc) {
        // Accepted configs survive their own canonical form.
        let again = Config::from_json(&cfg.to_json()).expect("canonical form parses");
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }
});
