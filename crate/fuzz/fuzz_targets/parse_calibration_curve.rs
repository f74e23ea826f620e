#![no_main]

use libfuzzer_sys::fuzz_target;
use shuntmeter::calibration::CalibrationCurve;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(curve) = CalibrationCurve::parse(text) {
        let _ = curve.apply(0.1);
        assert_eq!(CalibrationCurve::parse(&curve.to_text()).unwrap(), curve);
    }
});
