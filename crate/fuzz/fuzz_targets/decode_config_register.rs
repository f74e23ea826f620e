#![no_main]

use libfuzzer_sys::fuzz_target;
use shuntmeter::sensor::{decode_config, encode_config, SensorConfig};

fuzz_target!(|data: [u8; 2]| {
    let word = u16::from_be_bytes(data);
    let base = SensorConfig::default();
    if let Ok(config) = decode_config(word, &base) {
        assert_eq!(decode_config(encode_config(&config), &base).unwrap(), config);
    }
});
