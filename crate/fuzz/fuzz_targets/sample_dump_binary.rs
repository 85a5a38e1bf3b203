#![no_main]

use libfuzzer_sys::fuzz_target;
use tomobell::dump::{read_binary, write_dump, DumpFormat};

fuzz_target!(|data: &[u8]| {
    if let Ok(events) = read_binary(data) {
        assert!(events.iter().all(|e| e.is_finite()));
        let bytes = write_dump(Vec::new(), DumpFormat::Binary, &events).unwrap();
        assert_eq!(bytes, data);
    }
});
