//! Banded LU factorization with partial pivoting.
//!
//! Storage follows the usual layout: `kl` sub-diagonals, `ku` super-diagonals,
//! plus `kl` extra super-diagonals reserved for pivoting fill-in.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    /// Adds `v` to entry `(i, j)`. Panics if the entry lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut s = 0.0;
            for j in lo..=hi {
                s += self.data[self.idx(i, j)] * x[j];
            }
            out[i] = s;
        }
    }

    pub fn mul_vec_transpose(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let xi = x[i];
            for j in lo..=hi {
                out[j] += self.data[self.idx(i, j)] * xi;
            }
        }
    }

    pub fn factorize(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let ku2 = self.ku + self.kl;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Numerical(format!(
                    "singular step matrix: zero pivot in column {k} of {n}"
                )));
            }
            piv[k] = p;
            let jmax = (k + ku2).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku2,
            width: self.width,
            data: self.data,
            piv,
        })
    }
}

/// Factors of a band matrix; solves with the matrix or its transpose.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku2: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + (j + self.kl - i)]
    }

    /// Overwrites `b` with `A^{-1} b`.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.at(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + self.ku2).min(n - 1) {
                s -= self.at(k, j) * b[j];
            }
            b[k] = s / self.at(k, k);
        }
    }

    /// Overwrites `b` with `A^{-T} b`.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let mut s = b[k];
            for i in k.saturating_sub(self.ku2)..k {
                s -= self.at(i, k) * b[i];
            }
            b[k] = s / self.at(k, k);
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for i in k + 1..=(k + self.kl).min(n - 1) {
                s -= self.at(i, k) * b[i];
            }
            b[k] = s;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }
}
