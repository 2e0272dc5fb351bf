//! Weighted pool-adjacent-violators for non-decreasing fits.

/// Weighted least-squares non-decreasing fit of `values`.
///
/// Zero total weight in a block falls back to the unweighted mean of the
/// block. `values` and `weights` must have equal length.
pub fn pava_non_decreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(
        values.len(),
        weights.len(),
        "values and weights differ in length"
    );
    // Each block: (weighted sum, total weight, count, plain sum)
    struct Block {
        wsum: f64,
        w: f64,
        count: usize,
        sum: f64,
    }
    impl Block {
        fn level(&self) -> f64 {
            if self.w > 0.0 {
                self.wsum / self.w
            } else {
                self.sum / self.count as f64
            }
        }
    }

    let mut blocks: Vec<Block> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push(Block {
            wsum: v * w,
            w,
            count: 1,
            sum: v,
        });
        while blocks.len() > 1 {
            let k = blocks.len();
            if blocks[k - 2].level() <= blocks[k - 1].level() {
                break;
            }
            let last = blocks.pop().unwrap();
            let prev = blocks.last_mut().unwrap();
            prev.wsum += last.wsum;
            prev.w += last.w;
            prev.count += last.count;
            prev.sum += last.sum;
        }
    }

    let mut out = Vec::with_capacity(values.len());
    for b in &blocks {
        let level = b.level();
        out.extend(std::iter::repeat_n(level, b.count));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pools_a_single_violation() {
        let fit = pava_non_decreasing(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]);
        assert_eq!(fit, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn weights_shift_the_pooled_level() {
        let fit = pava_non_decreasing(&[0.6, 0.4], &[3.0, 1.0]);
        assert!((fit[0] - 0.55).abs() < 1e-12);
        assert_eq!(fit[0], fit[1]);
    }

    #[test]
    fn monotone_input_is_unchanged() {
        let v = [0.1, 0.2, 0.2, 0.9];
        assert_eq!(pava_non_decreasing(&v, &[2.0, 1.0, 5.0, 1.0]), v.to_vec());
    }

    /// Brute-force check: among non-decreasing sequences the PAVA output has
    /// no larger weighted SSE than any candidate built from cumulative maxima.
    fn wsse(fit: &[f64], v: &[f64], w: &[f64]) -> f64 {
        fit.iter()
            .zip(v)
            .zip(w)
            .map(|((f, x), w)| w * (f - x).powi(2))
            .sum()
    }

    proptest! {
        #[test]
        fn output_is_non_decreasing_and_mean_preserving(
            pairs in prop::collection::vec((0.0f64..1.0, 0.1f64..10.0), 1..30)
        ) {
            let v: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let fit = pava_non_decreasing(&v, &w);
            for k in 1..fit.len() {
                prop_assert!(fit[k - 1] <= fit[k] + 1e-12);
            }
            let a: f64 = v.iter().zip(&w).map(|(x, w)| x * w).sum();
            let b: f64 = fit.iter().zip(&w).map(|(x, w)| x * w).sum();
            prop_assert!((a - b).abs() < 1e-9);
            let running_max: Vec<f64> = v.iter().scan(f64::MIN, |m, &x| { *m = m.max(x); Some(*m) }).collect();
            prop_assert!(wsse(&fit, &v, &w) <= wsse(&running_max, &v, &w) + 1e-9);
        }
    }
}
