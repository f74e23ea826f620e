use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Empirical CDF: one point per distinct value, carrying the fraction of
/// values at or below it. The last point is always 1.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Config("NaN in ECDF input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = p,
            _ => out.push((*v, p)),
        }
    }
    Ok(out)
}

/// `current_A,probability` rows.
pub fn ecdf_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("current_A,probability\n");
    for (x, p) in points {
        let _ = writeln!(out, "{x},{p}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_cases() {
        assert_eq!(ecdf(&[5e-3]).unwrap(), vec![(5e-3, 1.0)]);
        assert_eq!(ecdf(&[3e-3, 1e-3]).unwrap(), vec![(1e-3, 0.5), (3e-3, 1.0)]);
        assert_eq!(ecdf(&[2.0, 2.0, 1.0, 2.0]).unwrap(), vec![(1.0, 0.25), (2.0, 1.0)]);
        assert!(ecdf(&[]).is_err());
        assert!(ecdf(&[f64::NAN]).is_err());
    }

    #[test]
    fn matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // coarse grid so ties are common
        let values: Vec<f64> = (0..10_000).map(|_| f64::from(rng.gen_range(0..500u32)) * 1e-4).collect();
        let got = ecdf(&values).unwrap();
        let mut distinct = values.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(got.len(), distinct.len());
        for ((x, p), d) in got.iter().zip(&distinct) {
            assert_eq!(x, d);
            let below = values.iter().filter(|v| *v <= d).count();
            assert_eq!(*p, below as f64 / values.len() as f64);
        }
        assert_eq!(got.last().unwrap().1, 1.0);
    }

    #[test]
    fn csv_rows() {
        assert_eq!(ecdf_csv(&[(0.001, 0.5), (0.003, 1.0)]), "current_A,probability\n0.001,0.5\n0.003,1\n");
    }
}
