#![no_main]
use libfuzzer_sys::fuzz_target;

// first byte picks the table kind
fuzz_target!(|data: &[u8]| {
    let Some((&kind, rest)) = data.split_first() else { return };
    if let Ok(text) = std::str::from_utf8(rest) {
        if kind & 1 == 0 {
            let _ = slidesearch::report::parse_organ_rows(text);
        } else {
            let _ = slidesearch::report::parse_diagnosis_rows(text);
        }
    }
});
