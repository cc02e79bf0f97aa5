use crate::error::{Error, Result};

/// Filtered rank of position `truth` in `scores` (the permitted set) under mean-rank ties:
/// `1 + #greater + #equal_others / 2`.
pub fn filtered_rank(scores: &[f64], truth: usize) -> Result<f64> {
    if truth >= scores.len() {
        return Err(Error::Lookup(format!(
            "true position {truth} outside {} candidates",
            scores.len()
        )));
    }
    masked_rank(scores, truth, std::iter::empty())
}

/// Rank of `truth` among all entries of `scores` except the `excluded` positions.
///
/// Counts over the full row, then subtracts the excluded entries, so the sweep and the
/// filter come from one pass. `excluded` must not contain `truth` or repeat.
pub(crate) fn masked_rank(scores: &[f64], truth: usize, excluded: impl Iterator<Item = u32>) -> Result<f64> {
    let target = scores[truth];
    if !target.is_finite() {
        return Err(Error::Numeric(format!("non-finite score {target} for the true entity")));
    }
    let mut greater = 0i64;
    let mut equal = 0i64;
    for &x in scores {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("non-finite candidate score {x}")));
        }
        if x > target {
            greater += 1;
        } else if x == target {
            equal += 1;
        }
    }
    equal -= 1; // the truth itself
    for e in excluded {
        let x = scores[e as usize];
        if x > target {
            greater -= 1;
        } else if x == target {
            equal -= 1;
        }
    }
    Ok(1.0 + greater as f64 + equal as f64 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_top_is_one() {
        assert_eq!(filtered_rank(&[0.1, 5.0, -2.0], 1).unwrap(), 1.0);
    }

    #[test]
    fn full_tie_is_midpoint() {
        for m in 1..8 {
            let s = vec![0.3; m];
            assert_eq!(filtered_rank(&s, m / 2).unwrap(), (m as f64 + 1.0) / 2.0);
        }
    }

    #[test]
    fn partial_tie() {
        assert_eq!(filtered_rank(&[3.0, 2.0, 2.0, 1.0], 1).unwrap(), 2.5);
        assert_eq!(filtered_rank(&[3.0, 2.0, 2.0, 1.0], 2).unwrap(), 2.5);
    }

    #[test]
    fn masked_entries_do_not_count() {
        let s = [3.0, 2.0, 2.0, 1.0, 4.0];
        assert_eq!(masked_rank(&s, 1, [0u32, 4].into_iter()).unwrap(), 1.5);
        assert_eq!(masked_rank(&s, 1, [2u32].into_iter()).unwrap(), 3.0);
    }

    #[test]
    fn non_finite_is_an_error() {
        assert!(filtered_rank(&[f64::NAN, 1.0], 1).is_err());
        assert!(filtered_rank(&[1.0, f64::INFINITY], 1).is_err());
        assert!(filtered_rank(&[1.0], 1).is_err());
    }
}
