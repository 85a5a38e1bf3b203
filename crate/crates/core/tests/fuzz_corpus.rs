//! Replays the checked-in fuzz corpus through the decoders on the stable
//! toolchain.

use std::fs;
use std::path::PathBuf;

use tomobell::dump::{read_binary, read_csv, write_dump, DumpFormat};
use tomobell::runner::RunConfig;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {target}");
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn config_seeds() {
    for (name, data) in corpus("config_toml") {
        let config = RunConfig::from_toml_str(std::str::from_utf8(&data).unwrap())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        let valid = config.validate().is_ok();
        assert_eq!(valid, name != "invalid.toml", "{name}");
        let text = config.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), config, "{name}");
    }
}

#[test]
fn binary_seeds() {
    for (name, data) in corpus("sample_dump_binary") {
        match read_binary(&data) {
            Ok(events) => {
                assert_eq!(events.len() * 64, data.len());
                assert_eq!(write_dump(Vec::new(), DumpFormat::Binary, &events).unwrap(), data);
            }
            Err(_) => assert!(name == "truncated.bin" || name == "nan.bin", "{name}"),
        }
    }
}

#[test]
fn csv_seeds() {
    for (name, data) in corpus("sample_dump_csv") {
        let events = read_csv(&data[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
        let bytes = write_dump(Vec::new(), DumpFormat::Csv, &events).unwrap();
        assert_eq!(read_csv(&bytes[..]).unwrap(), events, "{name}");
    }
}
