//! Shape checks on seed-averaged curves.

/// Ranks starting at 1; ties share their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; NaN when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "spearman needs equal lengths");
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn strictly_increasing(ys: &[f64]) -> bool {
    ys.windows(2).all(|w| w[1] > w[0])
}

/// Index of the smallest value (first on ties).
pub fn argmin(ys: &[f64]) -> usize {
    (0..ys.len()).fold(0, |best, i| if ys[i] < ys[best] { i } else { best })
}

/// Index of the largest value (first on ties).
pub fn argmax(ys: &[f64]) -> usize {
    (0..ys.len()).fold(0, |best, i| if ys[i] > ys[best] { i } else { best })
}

/// Both end points lie strictly above the curve's minimum.
pub fn has_interior_minimum(ys: &[f64]) -> bool {
    if ys.len() < 3 {
        return false;
    }
    let min = ys[argmin(ys)];
    ys[0] > min && ys[ys.len() - 1] > min
}

/// The maximum is attained only away from the end points.
pub fn has_interior_argmax(ys: &[f64]) -> bool {
    if ys.len() < 3 {
        return false;
    }
    let i = argmax(ys);
    let max = ys[i];
    i > 0 && i < ys.len() - 1 && ys[ys.len() - 1] < max
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_checked_correlations() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        // d = (0, 1, -1): rho = 1 - 6 * 2 / (3 * 8)
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]) - 0.5).abs() < 1e-15);
        assert!(spearman(&[1.0, 2.0], &[1.0, 1.0]).is_nan());
    }

    #[test]
    fn shapes() {
        assert!(strictly_increasing(&[1.0, 2.0, 3.0]));
        assert!(!strictly_increasing(&[1.0, 1.0, 3.0]));
        assert!(has_interior_minimum(&[3.0, 1.0, 1.0, 2.0]));
        assert!(!has_interior_minimum(&[1.0, 1.0, 2.0]));
        assert!(has_interior_argmax(&[1.0, 3.0, 2.0]));
        assert!(!has_interior_argmax(&[3.0, 1.0, 2.0]));
        assert!(!has_interior_argmax(&[1.0, 3.0, 3.0]));
    }

    proptest! {
        #[test]
        fn spearman_is_bounded_and_monotone_invariant(ys in prop::collection::vec(-1e3f64..1e3, 3..20)) {
            let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let rho = spearman(&xs, &ys);
            if !rho.is_nan() {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&rho));
                let warped: Vec<f64> = ys.iter().map(|y| y.powi(3) + 2.0 * y).collect();
                prop_assert!((spearman(&xs, &warped) - rho).abs() < 1e-12);
            }
        }
    }
}
