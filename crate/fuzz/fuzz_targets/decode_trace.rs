#![no_main]

use libfuzzer_sys::fuzz_target;
use shuntmeter::buffer_io::{decode_header, TraceFile};

fuzz_target!(|data: &[u8]| {
    let _ = decode_header(data);
    // anything that decodes must re-encode to the same bytes
    if let Ok(file) = TraceFile::decode(data) {
        assert_eq!(file.encode(), data);
    }
});
