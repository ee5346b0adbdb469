//! Symmetric positive definite band matrices with an in-place Cholesky factor.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix: `data[r * (bw + 1) + d] = A[r][r - d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSpd {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn idx(&self, r: usize, c: usize) -> Option<usize> {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        let d = r - c;
        (d <= self.bw).then(|| r * (self.bw + 1) + d)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.idx(r, c).map_or(0.0, |k| self.data[k])
    }

    /// Adds `val` to the symmetric pair `(r, c)`, `(c, r)`.
    pub fn add(&mut self, r: usize, c: usize, val: f64) {
        let k = self
            .idx(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) outside bandwidth {}", self.bw));
        self.data[k] += val;
    }

    pub fn set(&mut self, r: usize, c: usize, val: f64) {
        let k = self
            .idx(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) outside bandwidth {}", self.bw));
        self.data[k] = val;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let base = r * (self.bw + 1);
            y[r] += self.data[base] * x[r];
            for d in 1..=self.bw.min(r) {
                let a = self.data[base + d];
                y[r] += a * x[r - d];
                y[r - d] += a * x[r];
            }
        }
        y
    }

    /// Cholesky factor `A = L L^T`, stored in the same band layout.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for r in 0..n {
            let lo = r.saturating_sub(bw);
            for c in lo..=r {
                let mut sum = self.data[r * w + (r - c)];
                let k0 = lo.max(c.saturating_sub(bw));
                for k in k0..c {
                    sum -= self.data[r * w + (r - k)] * self.data[c * w + (c - k)];
                }
                if c == r {
                    if !(sum > 0.0) {
                        return Err(Error::Linear(format!("matrix not positive definite at row {r}")));
                    }
                    self.data[r * w] = sum.sqrt();
                } else {
                    self.data[r * w + (r - c)] = sum / self.data[c * w];
                }
            }
        }
        Ok(BandedCholesky { factor: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    factor: BandedSpd,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let f = &self.factor;
        let (n, bw) = (f.n, f.bw);
        let w = bw + 1;
        let mut y = b.to_vec();
        for r in 0..n {
            let mut sum = y[r];
            for c in r.saturating_sub(bw)..r {
                sum -= f.data[r * w + (r - c)] * y[c];
            }
            y[r] = sum / f.data[r * w];
        }
        for r in (0..n).rev() {
            let mut sum = y[r];
            for k in r + 1..(r + bw + 1).min(n) {
                sum -= f.data[k * w + (k - r)] * y[k];
            }
            y[r] = sum / f.data[r * w];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_against_dense_reference() {
        let n = 12;
        let bw = 3;
        let mut a = BandedSpd::zeros(n, bw);
        let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            a.add(r, r, 10.0 + r as f64);
            dense[(r, r)] += 10.0 + r as f64;
            for d in 1..=bw.min(r) {
                let v = ((r * 7 + d) as f64).sin();
                a.add(r, r - d, v);
                dense[(r, r - d)] += v;
                dense[(r - d, r)] += v;
            }
        }
        let b: Vec<f64> = (0..n).map(|k| (k as f64).cos()).collect();
        let y = a.mul_vec(&b);
        let yd = &dense * nalgebra::DVector::from_vec(b.clone());
        for k in 0..n {
            approx::assert_relative_eq!(y[k], yd[k], epsilon = 1e-13);
        }
        let x = a.clone().cholesky().unwrap().solve(&b);
        let xd = dense.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b));
        for k in 0..n {
            approx::assert_relative_eq!(x[k], xd[k], epsilon = 1e-13);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(a.cholesky().is_err());
    }
}
