/// Maps each value to `(average rank − 1) / (N − 1)`, ranks taken over the
/// empirical CDF with ties sharing their average rank. Monotone, output in
/// `[0, 1]`. A single value or an all-equal input maps to all zeros.
pub fn histogram_equalize(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n <= 1 {
        return out;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    if values[order[0]] == values[order[n - 1]] {
        return out;
    }
    let denom = (n - 1) as f64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // zero-based ranks start..end-1 share their mean
        let rank = (start + end - 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank / denom;
        }
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(histogram_equalize(&[5.0, 1.0, 3.0]), vec![1.0, 0.0, 0.5]);
        assert_eq!(histogram_equalize(&[2.0, 2.0, 2.0]), vec![0.0; 3]);
        // ranks 1, 2.5, 2.5, 4 → (r − 1) / 3
        assert_eq!(histogram_equalize(&[1.0, 2.0, 2.0, 4.0]), vec![0.0, 0.5, 0.5, 1.0]);
        assert_eq!(histogram_equalize(&[7.0]), vec![0.0]);
        assert!(histogram_equalize(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(values in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let out = histogram_equalize(&values);
            for (i, a) in values.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(&out[i]));
                for (j, b) in values.iter().enumerate() {
                    if a <= b {
                        prop_assert!(out[i] <= out[j]);
                    }
                }
            }
        }

        #[test]
        fn distinct_values_map_to_uniform_grid(values in prop::collection::hash_set(-100_000i64..100_000, 2..300)) {
            let values: Vec<f64> = values.into_iter().map(|v| v as f64).collect();
            let n = values.len();
            let mut out = histogram_equalize(&values);
            out.sort_by(f64::total_cmp);
            for (k, v) in out.iter().enumerate() {
                prop_assert!((v - k as f64 / (n - 1) as f64).abs() < 1e-12);
            }
        }

        #[test]
        fn distinct_values_within_one_over_n_of_uniform(values in prop::collection::hash_set(-100_000i64..100_000, 2..300)) {
            let values: Vec<f64> = values.into_iter().map(|v| v as f64).collect();
            let n = values.len();
            let mut out = histogram_equalize(&values);
            out.sort_by(f64::total_cmp);
            let mut ks: f64 = 0.0;
            for (k, v) in out.iter().enumerate() {
                ks = ks.max((k as f64 / n as f64 - v).abs()).max(((k + 1) as f64 / n as f64 - v).abs());
            }
            prop_assert!(ks <= 1.0 / n as f64 + 1e-12, "ks = {ks}");
        }
    }
}
