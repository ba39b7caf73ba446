#![no_main]

use libfuzzer_sys::fuzz_target;
use numeraire_cli::output::read_doob_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = read_doob_csv(text);
    }
});
