#![no_main]

use landau_cli::Window;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(w) = s.parse::<Window>() {
        let pts = w.linear();
        assert_eq!(pts.len(), w.count);
        assert!(pts.windows(2).all(|p| p[0] <= p[1]));
        if let Ok(g) = w.geometric() {
            assert_eq!(g.len(), w.count);
        }
    }
});
