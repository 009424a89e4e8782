//! Adaptive Gauss-Kronrod (10/21 point) quadrature for vector-valued integrands.

use crate::error::{Error, Result};
use crate::scalar::{NeumaierSum, Scalar};

// Kronrod abscissae; odd indices are the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions<T> {
    /// Target for the summed error estimate, per component.
    pub abs_tol: T,
    pub initial_intervals: usize,
    pub max_intervals: usize,
}

impl<T: Scalar> Default for QuadratureOptions<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-12),
            initial_intervals: 16,
            max_intervals: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Integral<T> {
    pub values: Vec<T>,
    /// Summed |Kronrod - Gauss| over the final partition (max over components).
    pub error: T,
    pub intervals: usize,
}

struct Piece<T> {
    a: T,
    b: T,
    values: Vec<T>,
    error: T,
}

fn gauss_kronrod<T: Scalar, F: FnMut(T, &mut [T])>(
    f: &mut F,
    a: T,
    b: T,
    dim: usize,
    buf: &mut [T],
) -> Piece<T> {
    let half = (b - a) / T::lit(2.0);
    let center = (a + b) / T::lit(2.0);
    let mut kronrod = vec![T::zero(); dim];
    let mut gauss = vec![T::zero(); dim];
    for (i, &x) in XGK.iter().enumerate() {
        let offsets: &[T] = if i == 10 {
            &[T::zero()]
        } else {
            &[-half * T::lit(x), half * T::lit(x)]
        };
        for &dx in offsets {
            f(center + dx, buf);
            for d in 0..dim {
                kronrod[d] = kronrod[d] + T::lit(WGK[i]) * buf[d];
                if i % 2 == 1 {
                    gauss[d] = gauss[d] + T::lit(WG[i / 2]) * buf[d];
                }
            }
        }
    }
    let mut error = T::zero();
    for d in 0..dim {
        kronrod[d] = kronrod[d] * half;
        gauss[d] = gauss[d] * half;
        error = error.max((kronrod[d] - gauss[d]).abs());
    }
    Piece {
        a,
        b,
        values: kronrod,
        error,
    }
}

/// Integrates a `dim`-valued function over `[a, b]`; `f(x, out)` fills `out`.
pub fn integrate_vec<T, F>(
    mut f: F,
    dim: usize,
    a: T,
    b: T,
    opts: QuadratureOptions<T>,
) -> Result<Integral<T>>
where
    T: Scalar,
    F: FnMut(T, &mut [T]),
{
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::QuadratureFailure(format!("bad interval [{a}, {b}]")));
    }
    let mut buf = vec![T::zero(); dim];
    let n0 = opts.initial_intervals.max(1);
    let width = (b - a) / T::from_usize(n0).expect("interval count");
    let mut pieces: Vec<Piece<T>> = (0..n0)
        .map(|i| {
            let lo = a + width * T::from_usize(i).expect("index");
            let hi = if i + 1 == n0 { b } else { lo + width };
            gauss_kronrod(&mut f, lo, hi, dim, &mut buf)
        })
        .collect();

    loop {
        let total_error = pieces
            .iter()
            .map(|p| p.error)
            .collect::<NeumaierSum<T>>()
            .total();
        if !total_error.is_finite() {
            return Err(Error::QuadratureFailure("non-finite integrand".into()));
        }
        if total_error <= opts.abs_tol {
            let mut values = vec![NeumaierSum::new(); dim];
            for p in &pieces {
                for (acc, &v) in values.iter_mut().zip(&p.values) {
                    acc.add(v);
                }
            }
            return Ok(Integral {
                values: values.iter().map(NeumaierSum::total).collect(),
                error: total_error,
                intervals: pieces.len(),
            });
        }
        if pieces.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailure(format!(
                "error estimate {total_error} above tolerance {} after {} intervals",
                opts.abs_tol,
                pieces.len()
            )));
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| {
                x.1.error
                    .partial_cmp(&y.1.error)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
            .expect("nonempty partition");
        let p = pieces.swap_remove(worst);
        let mid = (p.a + p.b) / T::lit(2.0);
        if !(p.a < mid && mid < p.b) {
            return Err(Error::QuadratureFailure(
                "interval bisection underflow".into(),
            ));
        }
        pieces.push(gauss_kronrod(&mut f, p.a, mid, dim, &mut buf));
        pieces.push(gauss_kronrod(&mut f, mid, p.b, dim, &mut buf));
    }
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<T, F>(mut f: F, a: T, b: T, opts: QuadratureOptions<T>) -> Result<(T, T)>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let r = integrate_vec(|x, out: &mut [T]| out[0] = f(x), 1, a, b, opts)?;
    Ok((r.values[0], r.error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let k: f64 = WGK[10] + 2.0 * WGK[..10].iter().sum::<f64>();
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((k - 2.0).abs() < 1e-15);
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn polynomials_are_exact() {
        let (v, _) = integrate(
            |x: f64| x.powi(19) + 3.0 * x * x,
            0.0,
            1.0,
            QuadratureOptions::default(),
        )
        .unwrap();
        assert!((v - (0.05 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn smooth_functions_to_tolerance() {
        let (v, err) =
            integrate(|x: f64| (-x).exp(), 0.0, 40.0, QuadratureOptions::default()).unwrap();
        assert!((v - (1.0 - (-40f64).exp())).abs() < 1e-13);
        assert!(err <= 1e-12);
        let (v, _) = integrate(
            |x: f64| x.sin(),
            0.0,
            std::f64::consts::PI,
            QuadratureOptions::default(),
        )
        .unwrap();
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn single_precision_quadrature() {
        let opts = QuadratureOptions {
            abs_tol: 1e-5f32,
            ..Default::default()
        };
        let (v, _) = integrate(|x: f32| x.cos(), 0.0, 1.0, opts).unwrap();
        assert!((v - 1f32.sin()).abs() < 1e-5);
    }

    #[test]
    fn vector_components_are_independent() {
        let r = integrate_vec(
            |x: f64, out: &mut [f64]| {
                out[0] = 1.0;
                out[1] = x;
            },
            2,
            0.0,
            2.0,
            QuadratureOptions::default(),
        )
        .unwrap();
        assert!((r.values[0] - 2.0).abs() < 1e-14);
        assert!((r.values[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn unreachable_tolerance_fails() {
        let opts = QuadratureOptions {
            abs_tol: 0.0,
            initial_intervals: 1,
            max_intervals: 8,
        };
        let r = integrate(|x: f64| x.sqrt(), 0.0, 1.0, opts);
        assert!(matches!(r, Err(Error::QuadratureFailure(_))));
    }
}
