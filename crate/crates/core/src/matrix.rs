//! Square big-integer matrices for the cocycle.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BigMatrix {
    d: usize,
    entries: Vec<BigInt>,
}

impl BigMatrix {
    pub fn zeros(d: usize) -> Self {
        BigMatrix {
            d,
            entries: vec![BigInt::zero(); d * d],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.entries[i * d + i] = BigInt::one();
        }
        m
    }

    /// `I + M_{row,col}`.
    pub fn elementary(d: usize, row: usize, col: usize) -> Self {
        let mut m = Self::identity(d);
        m.entries[row * d + col] += 1;
        m
    }

    pub fn from_rows(rows: Vec<Vec<BigInt>>) -> Self {
        let d = rows.len();
        assert!(rows.iter().all(|r| r.len() == d), "matrix must be square");
        BigMatrix {
            d,
            entries: rows.into_iter().flatten().collect(),
        }
    }

    pub fn from_i64_rows(rows: &[&[i64]]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, row: usize, col: usize) -> &BigInt {
        &self.entries[row * self.d + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: BigInt) {
        self.entries[row * self.d + col] = value;
    }

    pub fn rows(&self) -> Vec<Vec<BigInt>> {
        self.entries.chunks(self.d).map(<[BigInt]>::to_vec).collect()
    }

    /// Right multiplication by `I + M_{src,dst}`: column `dst` += column `src`.
    pub fn add_column(&mut self, dst: usize, src: usize) {
        for r in 0..self.d {
            let v = self.entries[r * self.d + src].clone();
            self.entries[r * self.d + dst] += v;
        }
    }

    pub fn mul(&self, other: &BigMatrix) -> BigMatrix {
        assert_eq!(self.d, other.d);
        let d = self.d;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = &self.entries[i * d + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..d {
                    out.entries[i * d + j] += a * &other.entries[k * d + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Rational]) -> Vec<Rational> {
        (0..self.d)
            .map(|i| {
                (0..self.d)
                    .map(|j| Rational::from_integer(self.get(i, j).clone()) * &v[j])
                    .sum()
            })
            .collect()
    }

    /// `|Q(α)| = Σ_β Q_{βα}`.
    pub fn column_norm(&self, col: usize) -> BigInt {
        (0..self.d).map(|r| self.get(r, col)).sum()
    }

    pub fn column_norms(&self) -> Vec<BigInt> {
        (0..self.d).map(|c| self.column_norm(c)).collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.entries.iter().all(|v| !v.is_negative())
    }

    pub fn is_positive(&self) -> bool {
        self.entries.iter().all(|v| v.is_positive())
    }

    /// Fraction-free Bareiss elimination; exact over the integers.
    pub fn determinant(&self) -> BigInt {
        let d = self.d;
        if d == 0 {
            return BigInt::one();
        }
        let mut a = self.rows();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..d - 1 {
            if a[k][k].is_zero() {
                match (k + 1..d).find(|&r| !a[r][k].is_zero()) {
                    Some(r) => {
                        a.swap(k, r);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..d {
                for j in k + 1..d {
                    let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                    a[i][j] = v / &prev;
                }
            }
            prev = a[k][k].clone();
        }
        sign * &a[d - 1][d - 1]
    }

    pub fn column_norm_gcd(&self) -> BigInt {
        self.column_norms()
            .iter()
            .fold(BigInt::zero(), |acc, v| acc.gcd(v))
    }

    pub fn to_string_rows(&self) -> Vec<Vec<String>> {
        self.entries
            .chunks(self.d)
            .map(|r| r.iter().map(ToString::to_string).collect())
            .collect()
    }

    pub fn from_string_rows(rows: &[Vec<String>]) -> Result<Self, num_bigint::ParseBigIntError> {
        let parsed = rows
            .iter()
            .map(|r| r.iter().map(|s| s.parse::<BigInt>()).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_rows(parsed))
    }
}

impl fmt::Display for BigMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells = self.to_string_rows();
        let width = cells.iter().flatten().map(String::len).max().unwrap_or(1);
        for row in cells {
            let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
            writeln!(f, "[{}]", line.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinant_small() {
        assert_eq!(BigMatrix::identity(4).determinant(), BigInt::one());
        let m = BigMatrix::from_i64_rows(&[&[1, 2], &[1, 1]]);
        assert_eq!(m.determinant(), BigInt::from(-1));
        let m = BigMatrix::from_i64_rows(&[&[0, 1, 0], &[1, 0, 0], &[0, 0, 1]]);
        assert_eq!(m.determinant(), BigInt::from(-1));
        let m = BigMatrix::from_i64_rows(&[&[0, 1, 1], &[1, 1, 1], &[1, 2, 3]]);
        assert_eq!(m.determinant(), BigInt::from(-1));
    }

    #[test]
    fn add_column_is_right_multiplication() {
        let mut q = BigMatrix::from_i64_rows(&[&[1, 2, 0], &[0, 1, 3], &[4, 0, 1]]);
        let expected = q.mul(&BigMatrix::elementary(3, 2, 0));
        q.add_column(0, 2);
        assert_eq!(q, expected);
    }

    #[test]
    fn column_norms_and_gcd() {
        let m = BigMatrix::from_i64_rows(&[&[1, 2], &[1, 1]]);
        assert_eq!(m.column_norms(), vec![BigInt::from(2), BigInt::from(3)]);
        assert_eq!(m.column_norm_gcd(), BigInt::one());
    }
}
