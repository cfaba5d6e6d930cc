#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(block) = slidesearch::features::decode(data) {
        // a decoded block must survive a round trip
        if let Ok(again) = slidesearch::features::encode(&block) {
            assert!(slidesearch::features::decode(&again).is_ok());
        }
    }
});
