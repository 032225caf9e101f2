//! Dense complex square matrices and LU factorization.

use std::ops::{Index, IndexMut};

use num_complex::Complex64 as C64;

/// Row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        let n = self.n;
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: C64) {
        self.data.iter_mut().for_each(|z| *z *= c);
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for (o, b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

/// In-place LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    factors: CMatrix,
    perm: Vec<usize>,
    swaps: usize,
    singular: bool,
}

impl Lu {
    pub fn new(mut a: CMatrix) -> Self {
        let n = a.n;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        let mut singular = false;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[(i, k)].norm_sqr()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax == 0.0 || !pmax.is_finite() {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let (upper, lower) = a.data.split_at_mut((k + 1) * n);
            let pivot_row = &upper[k * n..];
            let inv = 1.0 / pivot_row[k];
            for row in lower.chunks_exact_mut(n) {
                let l = row[k] * inv;
                row[k] = l;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                for (x, y) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                    *x -= l * y;
                }
            }
        }
        Self {
            factors: a,
            perm,
            swaps,
            singular,
        }
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Sum of principal logarithms of the pivots plus iπ per row swap.
    /// `None` for an exactly singular matrix.
    pub fn log_det(&self) -> Option<C64> {
        if self.singular {
            return None;
        }
        let mut s = C64::new(0.0, std::f64::consts::PI * (self.swaps % 2) as f64);
        for i in 0..self.factors.n {
            s += self.factors[(i, i)].ln();
        }
        Some(s)
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.factors.n;
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.factors.row(i);
            let s: C64 = row[..i].iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.factors.row(i);
            let s: C64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn det_of_small_matrix() {
        let m = CMatrix::from_fn(2, |i, j| [[c(0.0, 1.0), c(2.0, 0.0)], [c(3.0, 0.0), c(4.0, -1.0)]][i][j]);
        // i(4-i) - 6 = -5 + 4i
        let d = Lu::new(m).log_det().unwrap().exp();
        assert!((d - c(-5.0, 4.0)).norm() < 1e-14);
    }

    #[test]
    fn singular_flag() {
        let m = CMatrix::from_fn(2, |i, _| c(i as f64 + 1.0, 0.0));
        assert!(Lu::new(m).log_det().is_none());
    }

    #[test]
    fn solve_recovers_rhs() {
        let m = CMatrix::from_fn(4, |i, j| c(((i * 7 + j * 3) % 5) as f64 + if i == j { 4.0 } else { 0.0 }, (i as f64 - j as f64) * 0.3));
        let x0: Vec<C64> = (0..4).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        let b: Vec<C64> = (0..4).map(|i| m.row(i).iter().zip(&x0).map(|(a, x)| a * x).sum()).collect();
        let x = Lu::new(m).solve(&b);
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
