//! Banded LU factorization with partial pivoting.
//!
//! Row `i` stores columns `i - kl ..= i + ku + kl`; the extra `kl` upper
//! diagonals hold fill-in from row interchanges (the LAPACK `gbtrf` layout,
//! row-major).

#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPivot {
    pub index: usize,
    pub value: f64,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl, "({i},{j}) outside band");
        i * self.width + (j + self.kl - i)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` at `(i, j)`; panics if the entry is outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i},{j}) outside band kl={} ku={}", self.kl, self.ku);
        let k = self.slot(i, j);
        self.data[k] += v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Factorizes in place. A pivot whose magnitude is at most
    /// `rel_tol * max|A|` is reported as singular.
    pub fn factorize(mut self, rel_tol: f64) -> Result<BandedLu, SingularPivot> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let tol = rel_tol * self.max_abs();
        let mut pivots = vec![0usize; n];
        let mut multipliers = vec![0.0; n * kl.max(1)];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tol || best == 0.0 {
                return Err(SingularPivot { index: k, value: best });
            }
            pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for i in k + 1..=last_row {
                let sik = self.slot(i, k);
                let m = self.data[sik] / pivot;
                self.data[sik] = 0.0;
                multipliers[k * kl + (i - k - 1)] = m;
                if m != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = self.data[self.slot(k, j)];
                        let ij = self.slot(i, j);
                        self.data[ij] -= m * kj;
                    }
                }
            }
        }
        Ok(BandedLu { lu: self, pivots, multipliers })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
    pivots: Vec<usize>,
    multipliers: Vec<f64>,
}

impl BandedLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        let (kl, ku) = (self.lu.kl, self.lu.ku);
        let mut b = rhs.to_vec();
        for k in 0..n {
            b.swap(k, self.pivots[k]);
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.multipliers[k * kl + (i - k - 1)] * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + kl + ku).min(n - 1) {
                acc -= self.lu.data[self.lu.slot(i, j)] * x[j];
            }
            x[i] = acc / self.lu.data[self.lu.slot(i, i)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        // oracle: dense Gaussian elimination with partial pivoting
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let m = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= m * a[k][j];
                }
                b[i] -= m * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn matches_dense_elimination_on_random_band_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..50 {
            let n = rng.gen_range(3..40);
            let kl = rng.gen_range(0..4);
            let ku = rng.gen_range(0..4);
            let mut band = BandedMatrix::zeros(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    // zero diagonal on some rows forces pivoting
                    let v = if i == j && trial % 3 == 0 && i % 2 == 0 && kl > 0 {
                        0.0
                    } else {
                        rng.gen_range(-2.0..2.0) + if i == j { 4.0 } else { 0.0 }
                    };
                    band.add(i, j, v);
                    dense[i][j] = v;
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let want = dense_solve(dense, b.clone());
            let got = match band.clone().factorize(1e-14) {
                Ok(lu) => lu.solve(&b),
                Err(_) => continue,
            };
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-8 * (1.0 + w.abs()), "trial {trial}: {g} vs {w}");
            }
            let r = band.mul_vec(&got);
            for (ri, bi) in r.iter().zip(&b) {
                assert!((ri - bi).abs() < 1e-9 * (1.0 + band.max_abs() * got.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
            }
        }
    }

    #[test]
    fn saddle_point_with_zero_leading_block() {
        // [0 1; 1 2] needs a row swap
        let mut m = BandedMatrix::zeros(2, 1, 1);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        m.add(1, 1, 2.0);
        let x = m.factorize(1e-14).unwrap().solve(&[3.0, 8.0]);
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn reports_singular_pivot() {
        let mut m = BandedMatrix::zeros(3, 1, 1);
        m.add(0, 0, 1.0);
        m.add(1, 0, 1.0);
        m.add(2, 2, 1.0);
        assert_eq!(m.factorize(1e-14).unwrap_err().index, 1);
    }
}
