#![no_main]

use libfuzzer_sys::fuzz_target;
use tomobell::runner::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = RunConfig::from_toml_str(text) else { return };
    // validation must report, never panic or allocate without bound
    let _ = config.validate();
    if let Ok(again) = config.to_toml_string() {
        let back = RunConfig::from_toml_str(&again).expect("serialized config parses");
        assert_eq!(back.to_toml_string().ok(), Some(again));
    }
});
