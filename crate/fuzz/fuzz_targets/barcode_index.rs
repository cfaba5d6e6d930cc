#![no_main]
use libfuzzer_sys::fuzz_target;
use slidesearch::BarcodeIndex;

fuzz_target!(|data: &[u8]| {
    if let Ok(index) = BarcodeIndex::decode(data) {
        let again = index.encode().unwrap();
        assert_eq!(BarcodeIndex::decode(&again).unwrap().encode().unwrap(), again);
    }
});
