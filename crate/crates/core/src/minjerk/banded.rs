//! Banded LU with partial pivoting for the junction systems.

/// Square matrix with `kl` sub- and `ku` super-diagonals. Storage reserves
/// `kl` extra super-diagonals for pivoting fill-in.
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
    fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let off = c as isize - r as isize + self.kl as isize;
        (off >= 0 && (off as usize) < self.width).then(|| r * self.width + off as usize)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.slot(r, c).map_or(0.0, |i| self.data[i])
    }

    /// Panics when `(r, c)` lies outside the declared band.
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            c + self.kl >= r && c <= r + self.ku,
            "({r}, {c}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let i = self.slot(r, c).expect("inside band");
        self.data[i] = v;
    }

    /// Solves `A X = B` in place for the columns of `rhs` (row-major, `k`
    /// values per row). Returns `false` on a zero pivot.
    pub fn solve(mut self, rhs: &mut [f64], k: usize) -> bool {
        let n = self.n;
        assert_eq!(rhs.len(), n * k);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * 1e-14;
        let reach = self.kl + self.ku;
        for i in 0..n {
            let last_row = (i + self.kl).min(n - 1);
            let mut p = i;
            for r in i + 1..=last_row {
                if self.get(r, i).abs() > self.get(p, i).abs() {
                    p = r;
                }
            }
            if !(self.get(p, i).abs() > tiny) {
                return false;
            }
            let last_col = (i + reach).min(n - 1);
            if p != i {
                for c in i..=last_col {
                    let a = self.get(i, c);
                    let b = self.get(p, c);
                    self.put(i, c, b);
                    self.put(p, c, a);
                }
                for j in 0..k {
                    rhs.swap(i * k + j, p * k + j);
                }
            }
            let pivot = self.get(i, i);
            for r in i + 1..=last_row {
                let f = self.get(r, i) / pivot;
                if f == 0.0 {
                    continue;
                }
                self.put(r, i, 0.0);
                for c in i + 1..=last_col {
                    let v = self.get(r, c) - f * self.get(i, c);
                    self.put(r, c, v);
                }
                for j in 0..k {
                    rhs[r * k + j] -= f * rhs[i * k + j];
                }
            }
        }
        for i in (0..n).rev() {
            let last_col = (i + reach).min(n - 1);
            for j in 0..k {
                let mut acc = rhs[i * k + j];
                for c in i + 1..=last_col {
                    acc -= self.get(i, c) * rhs[c * k + j];
                }
                rhs[i * k + j] = acc / self.get(i, i);
            }
        }
        true
    }

    #[inline]
    fn put(&mut self, r: usize, c: usize, v: f64) {
        if let Some(i) = self.slot(r, c) {
            self.data[i] = v;
        } else {
            debug_assert!(v == 0.0, "fill-in outside storage at ({r}, {c})");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = rng.random_range(5..40);
            let (kl, ku) = (rng.random_range(0..4), rng.random_range(0..4));
            let mut band = BandMatrix::zeros(n, kl, ku);
            let mut dense = DMatrix::zeros(n, n);
            for r in 0..n {
                for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                    // zero diagonal half the time to force pivoting
                    let v = if r == c && rng.random_bool(0.5) {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    };
                    band.set(r, c, v);
                    dense[(r, c)] = v;
                }
            }
            let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let Some(x) = dense.clone().lu().solve(&b) else {
                continue;
            };
            if dense.clone().lu().determinant().abs() < 1e-8 {
                continue;
            }
            let mut rhs: Vec<f64> = b.iter().copied().collect();
            assert!(band.solve(&mut rhs, 1));
            for i in 0..n {
                assert!(
                    (rhs[i] - x[i]).abs() < 1e-7 * (1.0 + x[i].abs()),
                    "{} vs {}",
                    rhs[i],
                    x[i]
                );
            }
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut m = BandMatrix::zeros(3, 1, 1);
        m.set(0, 0, 1.0);
        m.set(1, 1, 0.0);
        m.set(2, 2, 1.0);
        let mut rhs = vec![1.0; 3];
        assert!(!m.solve(&mut rhs, 1));
    }
}
