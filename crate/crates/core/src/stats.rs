//! Goodness-of-fit helpers for checking sampled distributions.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Chi-square statistic with its degrees of freedom and upper-tail p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn p_value(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64).map_or(f64::NAN, |d| d.sf(statistic))
}

/// One-sample test of observed counts against cell probabilities. Cells whose
/// expected count falls below 5 are pooled into a single cell.
pub fn chi_square_goodness_of_fit(observed: &[u64], probabilities: &[f64]) -> ChiSquareTest {
    assert_eq!(observed.len(), probabilities.len());
    let n: u64 = observed.iter().sum();
    let n = n as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        let e = p * n;
        if e < 5.0 {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            statistic += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        statistic += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    let dof = cells.saturating_sub(1);
    ChiSquareTest {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
    }
}

/// Two-sample test of homogeneity on the union of both supports. Cells with a
/// combined count below 10 are pooled.
pub fn chi_square_two_sample<K: Ord + Clone>(
    a: &BTreeMap<K, u64>,
    b: &BTreeMap<K, u64>,
) -> ChiSquareTest {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let (ka, kb) = (
        (nb as f64 / na as f64).sqrt(),
        (na as f64 / nb as f64).sqrt(),
    );
    let mut keys: Vec<&K> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut statistic = 0.0;
    let mut cells = 0usize;
    let (mut pa, mut pb) = (0u64, 0u64);
    let mut add = |oa: u64, ob: u64| {
        let (oa, ob) = (oa as f64, ob as f64);
        statistic += (ka * oa - kb * ob).powi(2) / (oa + ob);
        cells += 1;
    };
    for k in keys {
        let (oa, ob) = (
            a.get(k).copied().unwrap_or(0),
            b.get(k).copied().unwrap_or(0),
        );
        if oa + ob < 10 {
            pa += oa;
            pb += ob;
        } else {
            add(oa, ob);
        }
    }
    if pa + pb > 0 {
        add(pa, pb);
    }
    let dof = cells.saturating_sub(1);
    ChiSquareTest {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
    }
}

/// Relative frequencies of a sample.
pub fn empirical_distribution<K: Ord + Clone>(counts: &BTreeMap<K, u64>) -> BTreeMap<K, f64> {
    let n: u64 = counts.values().sum();
    counts
        .iter()
        .map(|(k, &c)| (k.clone(), c as f64 / n as f64))
        .collect()
}

/// `sup_A |P(A) - Q(A)| = (1/2) sum |p - q|` over the union of supports.
pub fn total_variation<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, &pk) in p {
        sum += (pk - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &qk) in q {
        if !p.contains_key(k) {
            sum += qk.abs();
        }
    }
    0.5 * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_has_unit_p_value() {
        let t = chi_square_goodness_of_fit(&[25, 25, 50], &[0.25, 0.25, 0.5]);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 2);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gross_misfit_is_rejected() {
        let t = chi_square_goodness_of_fit(&[90, 10], &[0.5, 0.5]);
        assert!((t.statistic - 64.0).abs() < 1e-12);
        assert!(t.p_value < 1e-10);
    }

    #[test]
    fn two_sample_identical_counts() {
        let a: BTreeMap<u32, u64> = [(0, 40), (1, 60)].into();
        let t = chi_square_two_sample(&a, &a);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 1);
    }

    #[test]
    fn total_variation_of_disjoint_supports_is_one() {
        let p: BTreeMap<u32, f64> = [(0, 1.0)].into();
        let q: BTreeMap<u32, f64> = [(1, 1.0)].into();
        assert_eq!(total_variation(&p, &q), 1.0);
        assert_eq!(total_variation(&p, &p), 0.0);
    }
}
