//! Mean-vector generators, the mean-file reader, and the c-spread check.
//!
//! Generators return means indexed by rank (index 0 is the best arm).
//! Experiments shuffle arm identities before handing an instance to an
//! algorithm.

use std::path::Path;

use crate::env::validate_means;
use crate::error::{check_positive, BanditError, Result};

/// Two well-separated groups: the top `k` arms at 0.7, the rest at 0.3.
pub fn gen_two_group(n: usize, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > n {
        return Err(BanditError::InvalidK { k, n });
    }
    Ok((0..n).map(|i| if i < k { 0.7 } else { 0.3 }).collect())
}

/// Arithmetic progression `1 - i/n` for ranks `i = 1..=n`.
pub fn gen_uniform(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(BanditError::Empty);
    }
    Ok((1..=n).map(|i| 1.0 - i as f64 / n as f64).collect())
}

/// Power-law family around the top-`k` boundary at `1 - k/n`.
///
/// `p > 1` pulls arms toward the boundary, `p < 1` pushes them away; `p = 1`
/// reproduces [`gen_uniform`].
pub fn gen_synthetic_p(n: usize, k: usize, p: f64) -> Result<Vec<f64>> {
    if k == 0 || k >= n {
        return Err(BanditError::InvalidK { k, n });
    }
    check_positive("p", p)?;
    let (nf, kf) = (n as f64, k as f64);
    let boundary = 1.0 - kf / nf;
    let means = (1..=n)
        .map(|i| {
            let i = i as f64;
            let theta = if i <= kf {
                boundary + (kf / nf) * (1.0 - i / kf).powf(p)
            } else {
                boundary - ((nf - kf) / nf) * ((i - kf) / (nf - kf)).powf(p)
            };
            theta.clamp(0.0, 1.0)
        })
        .collect();
    Ok(means)
}

/// Parses a mean file: one decimal per line, `#` comment lines and blank
/// lines ignored. Values must lie in `[0, 1]`.
pub fn parse_means(text: &str) -> Result<Vec<f64>> {
    let mut means = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| BanditError::Parse {
            line: lineno + 1,
            msg: format!("not a decimal number: `{line}`"),
        })?;
        if !(0.0..=1.0).contains(&value) {
            return Err(BanditError::Parse {
                line: lineno + 1,
                msg: format!("value {value} out of range [0, 1]"),
            });
        }
        means.push(value);
    }
    validate_means(&means)?;
    Ok(means)
}

pub fn load_means(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| BanditError::Io(format!("{}: {e}", path.display())))?;
    parse_means(&text)
}

/// Renders means in the format read by [`parse_means`].
pub fn format_means(means: &[f64]) -> String {
    let mut out = String::with_capacity(means.len() * 8);
    for m in means {
        out.push_str(&format!("{m}\n"));
    }
    out
}

const SPREAD_TOL: f64 = 1e-9;

/// Checks whether rank-sorted means are `c`-spread: every pair satisfies
/// `|i-j|/(c n) <= |θ_i - θ_j| <= c |i-j|/n`.
///
/// For sorted input the pairwise difference is the sum of the adjacent
/// differences in between, so checking adjacent pairs decides the pairwise
/// condition exactly. A relative slack of 1e-9 absorbs rounding in generated
/// progressions.
pub fn check_c_spread(means: &[f64], c: f64) -> Result<bool> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(BanditError::InvalidParameter {
            name: "c",
            value: c,
            reason: "must be at least 1",
        });
    }
    ensure_sorted_desc(means)?;
    let n = means.len() as f64;
    let lo = 1.0 / (c * n);
    let hi = c / n;
    Ok(means.windows(2).all(|w| {
        let d = w[0] - w[1];
        d >= lo * (1.0 - SPREAD_TOL) && d <= hi * (1.0 + SPREAD_TOL)
    }))
}

pub(crate) fn ensure_sorted_desc(means: &[f64]) -> Result<()> {
    match means.windows(2).position(|w| w[0] < w[1]) {
        Some(i) => Err(BanditError::Unsorted(i + 1)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn two_group_values() {
        assert_eq!(gen_two_group(4, 2).unwrap(), vec![0.7, 0.7, 0.3, 0.3]);
        assert_eq!(gen_two_group(1, 1).unwrap(), vec![0.7]);
        assert!(gen_two_group(3, 0).is_err());
        assert!(gen_two_group(3, 4).is_err());
    }

    #[test]
    fn uniform_values() {
        assert_eq!(gen_uniform(4).unwrap(), vec![0.75, 0.5, 0.25, 0.0]);
        assert_eq!(gen_uniform(1).unwrap(), vec![0.0]);
        let u = gen_uniform(1000).unwrap();
        for w in u.windows(2) {
            assert!(w[0] > w[1]);
            assert!((w[0] - w[1] - 0.001).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_small_case() {
        let m = gen_synthetic_p(4, 2, 1.0).unwrap();
        assert!(close(&m, &[0.75, 0.5, 0.25, 0.0]), "{m:?}");
        assert!(gen_synthetic_p(4, 4, 1.0).is_err());
        assert!(gen_synthetic_p(4, 2, 0.0).is_err());
    }

    #[test]
    fn synthetic_endpoints() {
        for &(n, k, p) in &[(1000, 100, 0.5), (1000, 500, 6.0), (50, 7, 3.0)] {
            let m = gen_synthetic_p(n, k, p).unwrap();
            assert!((m[k - 1] - (1.0 - k as f64 / n as f64)).abs() < 1e-12);
            assert!(m[n - 1].abs() < 1e-12);
            // θ_1 = 1 - K/n + K/n (1 - 1/K)^p approaches 1 only for large K; check the formula.
            let expect = 1.0 - k as f64 / n as f64 + (k as f64 / n as f64) * (1.0 - 1.0 / k as f64).powf(p);
            assert!((m[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn parse_and_errors() {
        assert_eq!(parse_means("0.9\n0.5\n").unwrap(), vec![0.9, 0.5]);
        assert_eq!(parse_means("# header\n0.9\n\n  0.5  \n").unwrap(), vec![0.9, 0.5]);
        assert!(matches!(parse_means("0.3\n1.2\n"), Err(BanditError::Parse { line: 2, .. })));
        assert!(matches!(parse_means("abc\n"), Err(BanditError::Parse { line: 1, .. })));
        assert_eq!(parse_means("# only comments\n"), Err(BanditError::Empty));
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("workers.txt");
        let accuracies: Vec<f64> = (0..164).map(|i| 0.5 + (i % 50) as f64 / 100.0).collect();
        std::fs::write(&path, format_means(&accuracies)).unwrap();
        let loaded = load_means(&path).unwrap();
        assert_eq!(loaded.len(), 164);
        assert_eq!(loaded, accuracies);
        assert!(matches!(load_means(dir.path().join("missing")), Err(BanditError::Io(_))));
    }

    #[test]
    fn spread_examples() {
        assert!(check_c_spread(&gen_uniform(1000).unwrap(), 1.0).unwrap());
        assert!(!check_c_spread(&gen_two_group(4, 2).unwrap(), 1.0).unwrap());
        assert!(check_c_spread(&[0.4], 1.0).unwrap());
        assert!(check_c_spread(&[0.4], 17.0).unwrap());
        assert_eq!(check_c_spread(&[0.1, 0.4], 1.0), Err(BanditError::Unsorted(1)));
        assert!(check_c_spread(&[0.4, 0.1], 0.5).is_err());
    }

    fn spread_pairwise(means: &[f64], c: f64) -> bool {
        let n = means.len() as f64;
        for i in 0..means.len() {
            for j in (i + 1)..means.len() {
                let d = (means[i] - means[j]).abs();
                let gap = (j - i) as f64;
                if d < gap / (c * n) * (1.0 - 1e-9) || d > c * gap / n * (1.0 + 1e-9) {
                    return false;
                }
            }
        }
        true
    }

    proptest! {
        #[test]
        fn generated_means_in_range(n in 2usize..300, kfrac in 0.0f64..1.0, p in 0.1f64..8.0) {
            let k = 1 + ((n - 1) as f64 * kfrac) as usize % (n - 1);
            for m in [gen_two_group(n, k).unwrap(), gen_uniform(n).unwrap(), gen_synthetic_p(n, k, p).unwrap()] {
                prop_assert!(m.iter().all(|x| (0.0..=1.0).contains(x)));
            }
            let s = gen_synthetic_p(n, k, p).unwrap();
            prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(close(&gen_synthetic_p(n, k, 1.0).unwrap(), &gen_uniform(n).unwrap()));
        }

        #[test]
        fn adjacent_scan_matches_pairwise(steps in proptest::collection::vec(0.0f64..0.05, 1..40), c in 1.0f64..4.0) {
            let mut means = vec![1.0];
            for s in &steps {
                let last = *means.last().unwrap();
                means.push((last - s).max(0.0));
            }
            prop_assert_eq!(check_c_spread(&means, c).unwrap(), spread_pairwise(&means, c));
        }
    }
}
