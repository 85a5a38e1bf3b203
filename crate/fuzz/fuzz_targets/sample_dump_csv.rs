#![no_main]

use libfuzzer_sys::fuzz_target;
use tomobell::dump::{read_csv, write_dump, DumpFormat};

fuzz_target!(|data: &[u8]| {
    if let Ok(events) = read_csv(data) {
        assert!(events.iter().all(|e| e.is_finite()));
        let bytes = write_dump(Vec::new(), DumpFormat::Csv, &events).unwrap();
        assert_eq!(read_csv(&bytes[..]).unwrap(), events);
    }
});
