//! Multi-precision evaluation of alternating finite differences of logarithms.
//!
//! The alternating binomial sums cancel to values many orders of magnitude
//! below their largest summand, so the working precision must grow with the
//! order. Precision is sized from a lower bound on the result and doubles if
//! the a-posteriori error bound still exceeds 2^-60 of the result.

use std::cell::RefCell;

use astro_float::{BigFloat, Consts, RoundingMode, Sign};

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const RM: RoundingMode = RoundingMode::ToEven;
const MAX_PRECISION: usize = 1 << 16;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("astro-float constants cache"));
}

fn big(x: f64, p: usize) -> BigFloat {
    BigFloat::from_f64(x, p)
}

fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

/// Nearest `f64` to a multi-precision value (up to a final double rounding).
pub(crate) fn big_to_f64(x: &BigFloat) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    if x.is_nan() {
        return f64::NAN;
    }
    let negative = matches!(x.sign(), Some(Sign::Neg));
    let (Some(exponent), Some(words)) = (x.exponent(), x.mantissa_digits()) else {
        return if negative {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    };
    // value = 0.<mantissa bits> * 2^exponent with the top bit of the last word set.
    let top = *words.last().unwrap_or(&0) as f64;
    let next = if words.len() > 1 {
        words[words.len() - 2] as f64
    } else {
        0.0
    };
    let mag = ldexp(top + ldexp(next, -64), exponent as i64 - 64);
    if negative {
        -mag
    } else {
        mag
    }
}

/// Logarithms `ln(1 + a (m - j))` for `j = 0..=max_order` at precision `p`.
fn log_terms(m: u64, max_order: u64, delta: f64, tau: f64, p: usize) -> Vec<BigFloat> {
    let a = big(delta, p).mul(&big(tau, p), p, RM);
    let one = BigFloat::from_u64(1, p);
    CONSTS.with(|cc| {
        let mut cc = cc.borrow_mut();
        (0..=max_order)
            .map(|j| {
                let x = one.add(&a.mul(&BigFloat::from_u64(m - j, p), p, RM), p, RM);
                x.ln(p, RM, &mut cc)
            })
            .collect()
    })
}

/// Bits needed for every order to pass the acceptance test on the first try.
///
/// The n-th forward difference equals an n-th derivative at an interior point,
/// so its magnitude is at least `(n-1)! a^n / (1 + a m)^n`, while the carried
/// error bound grows like `(n + 8) 2^n (ln(1 + a m) + 1)` units in the last place.
fn initial_precision(orders: &[u64], m: u64, delta: f64, tau: f64) -> usize {
    let a = delta * tau;
    let spread = (a * m as f64).ln_1p();
    let log2_top = ((spread + 1.0) * 2.0).log2();
    let needed = orders
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let log2_lower = (ln_gamma(nf) + nf * (a.ln() - spread)) / std::f64::consts::LN_2;
            nf + log2_top + (nf + 8.0).log2() + 60.0 - log2_lower.min(0.0)
        })
        .fold(0.0, f64::max);
    (needed.ceil() as usize + 32).next_multiple_of(64)
}

/// `(-1)` times the n-th forward difference of `j -> ln(1 + delta tau (m - j)) / tau`
/// for every requested order, evaluated in multi-precision arithmetic.
///
/// All orders come out of one difference table, `row_n[j] = row_(n-1)[j+1] -
/// row_(n-1)[j]`, so a pass costs `O(order^2)` subtractions. A running
/// absolute error bound is carried alongside every entry. Returns the values
/// in the order of `orders`.
pub(crate) fn finite_difference_log_orders(
    orders: &[u64],
    m: u64,
    delta: f64,
    tau: f64,
) -> Result<Vec<f64>> {
    if orders.is_empty() {
        return Ok(Vec::new());
    }
    let mut results = vec![f64::NAN; orders.len()];
    let mut pending: Vec<usize> = (0..orders.len()).collect();
    let mut p = initial_precision(orders, m, delta, tau);

    while !pending.is_empty() {
        if p > MAX_PRECISION {
            let order = orders[pending[0]];
            return Err(Error::PrecisionLoss {
                order,
                error: f64::INFINITY,
                value: f64::NAN,
            });
        }
        let top = pending.iter().map(|&i| orders[i]).max().unwrap_or(0);
        let unit = 2f64.powi(-(p as i32));
        let mut row = log_terms(m, top, delta, tau, p);
        let mut mag: Vec<f64> = row.iter().map(|l| big_to_f64(l).abs()).collect();
        // Logarithm of a rounded argument, rounded once more.
        let mut err: Vec<f64> = mag.iter().map(|l| 8.0 * unit * (l + 1.0)).collect();
        let tau_p = big(tau, p);

        let mut by_order = vec![(f64::NAN, f64::INFINITY); top as usize + 1];
        for slot in by_order.iter_mut().skip(1) {
            for j in 0..row.len() - 1 {
                row[j] = row[j + 1].sub(&row[j], p, RM);
                mag[j] += mag[j + 1];
                err[j] += err[j + 1] + unit * mag[j];
            }
            row.pop();
            mag.pop();
            err.pop();
            let value = -big_to_f64(&row[0].div(&tau_p, p, RM));
            *slot = (value, err[0] / tau + unit * value.abs());
        }

        let mut still = Vec::new();
        for &idx in &pending {
            let (value, error) = by_order[orders[idx] as usize];
            let underflow = value.abs() < f64::MIN_POSITIVE && error < f64::MIN_POSITIVE;
            if error <= value.abs() * 2f64.powi(-60) || underflow {
                results[idx] = value;
            } else {
                still.push(idx);
            }
        }
        pending = still;
        p *= 2;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_round_trips_doubles() {
        for x in [1.0, -2.5, 1e-300, 3.0e250, std::f64::consts::PI, 0.0] {
            assert_eq!(big_to_f64(&big(x, 256)), x, "{x}");
        }
    }

    #[test]
    fn low_orders_match_hand_values() {
        let v = finite_difference_log_orders(&[1, 2], 2, 1.0, 1.0).unwrap();
        assert!((v[0] - (3f64.ln() - 2f64.ln())).abs() < 1e-15);
        assert!((v[1] - (2.0 * 2f64.ln() - 3f64.ln())).abs() < 1e-15);
    }
}
