//! Exact binomial coefficients from a cached Pascal triangle.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest population per source compartment supported by the rate tables.
pub const DEFAULT_POPULATION_CAP: u64 = 300;

/// Pascal triangle holding exact coefficients and their rounded `f64` images.
///
/// Finite differences of order `y1 + y2` need rows up to twice the population
/// cap, so [`PascalTriangle::global`] is built to `2 * DEFAULT_POPULATION_CAP`.
#[derive(Debug)]
pub struct PascalTriangle {
    exact: Vec<Vec<BigUint>>,
    rounded: Vec<Vec<f64>>,
}

impl PascalTriangle {
    pub fn new(max_n: u64) -> Self {
        let rows = max_n as usize + 1;
        let mut exact: Vec<Vec<BigUint>> = Vec::with_capacity(rows);
        exact.push(vec![BigUint::from(1u32)]);
        for n in 1..rows {
            let prev = &exact[n - 1];
            let mut row = Vec::with_capacity(n + 1);
            row.push(BigUint::from(1u32));
            for k in 1..n {
                row.push(&prev[k - 1] + &prev[k]);
            }
            row.push(BigUint::from(1u32));
            exact.push(row);
        }
        let rounded = exact
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| c.to_f64().unwrap_or(f64::INFINITY))
                    .collect()
            })
            .collect();
        Self { exact, rounded }
    }

    /// Shared triangle sized for the default population cap.
    pub fn global() -> &'static PascalTriangle {
        static TRIANGLE: OnceLock<PascalTriangle> = OnceLock::new();
        TRIANGLE.get_or_init(|| PascalTriangle::new(2 * DEFAULT_POPULATION_CAP))
    }

    pub fn max_n(&self) -> u64 {
        self.exact.len() as u64 - 1
    }

    fn check(&self, n: u64) -> Result<()> {
        if n > self.max_n() {
            Err(Error::PopulationCapExceeded {
                requested: n,
                cap: self.max_n(),
            })
        } else {
            Ok(())
        }
    }

    /// `C(n, k)` exactly; zero when `k > n`.
    pub fn exact(&self, n: u64, k: u64) -> Result<BigUint> {
        self.check(n)?;
        if k > n {
            return Ok(BigUint::zero());
        }
        Ok(self.exact[n as usize][k as usize].clone())
    }

    /// `C(n, k)` rounded to the nearest `f64`.
    pub fn rounded(&self, n: u64, k: u64) -> Result<f64> {
        self.check(n)?;
        if k > n {
            return Ok(0.0);
        }
        Ok(self.rounded[n as usize][k as usize])
    }

    pub fn get<T: Scalar>(&self, n: u64, k: u64) -> Result<T> {
        self.rounded(n, k).map(T::lit)
    }

    /// Whole row `n` of exact coefficients.
    pub fn exact_row(&self, n: u64) -> Result<&[BigUint]> {
        self.check(n)?;
        Ok(&self.exact[n as usize])
    }
}
