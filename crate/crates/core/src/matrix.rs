//! Small exact integer matrices used as unimodular loop transformations.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Square integer matrix stored row-major. Dimensions in this crate are tiny
/// (loop depth ≤ 4), so everything is computed exactly with cofactors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntMatrix {
    rows: Vec<Vec<i64>>,
}

impl IntMatrix {
    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
            .collect();
        IntMatrix { rows }
    }

    /// Builds a matrix from rows; returns `None` unless the rows form a square.
    pub fn from_rows(rows: Vec<Vec<i64>>) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(IntMatrix { rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.rows[r][c]
    }

    pub fn mul_vec(&self, v: &[i64]) -> Vec<i64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        self.rows.swap(a, b);
    }

    pub fn negate_row(&mut self, r: usize) {
        for x in &mut self.rows[r] {
            *x = -*x;
        }
    }

    /// `row[target] += factor * row[source]`
    pub fn add_row_multiple(&mut self, target: usize, source: usize, factor: i64) {
        let src = self.rows[source].clone();
        for (x, s) in self.rows[target].iter_mut().zip(src) {
            *x += factor * s;
        }
    }

    pub fn determinant(&self) -> i64 {
        det(&self.rows)
    }

    pub fn is_unimodular(&self) -> bool {
        self.determinant().abs() == 1
    }

    /// Exact inverse of a unimodular matrix (adjugate divided by ±1).
    pub fn inverse(&self) -> Option<IntMatrix> {
        let d = self.determinant();
        if d.abs() != 1 {
            return None;
        }
        let n = self.dim();
        if n == 1 {
            return Some(IntMatrix { rows: vec![vec![d]] });
        }
        let mut inv = vec![vec![0i64; n]; n];
        for (i, inv_row) in inv.iter_mut().enumerate() {
            for (j, cell) in inv_row.iter_mut().enumerate() {
                // adj[i][j] = cofactor(j, i)
                let minor = minor(&self.rows, j, i);
                let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                *cell = sign * det(&minor) * d;
            }
        }
        Some(IntMatrix { rows: inv })
    }

    /// Column `c` as a vector.
    pub fn column(&self, c: usize) -> Vec<i64> {
        self.rows.iter().map(|r| r[c]).collect()
    }

    /// True when every row and column holds exactly one nonzero entry of
    /// magnitude one (a permutation with optional sign flips).
    pub fn is_signed_permutation(&self) -> bool {
        let n = self.dim();
        let row_ok = self
            .rows
            .iter()
            .all(|r| r.iter().filter(|x| **x != 0).count() == 1 && r.iter().all(|x| x.abs() <= 1));
        let col_ok = (0..n).all(|c| self.rows.iter().filter(|r| r[c] != 0).count() == 1);
        row_ok && col_ok
    }

    /// Lexicographically first permutation `perm` with `self[k][perm[k]] != 0`
    /// for every row `k`. Always exists for a nonsingular matrix.
    pub fn dominant_permutation(&self) -> Option<Vec<usize>> {
        fn search(m: &IntMatrix, k: usize, used: &mut [bool], out: &mut Vec<usize>) -> bool {
            if k == m.dim() {
                return true;
            }
            for j in 0..m.dim() {
                if !used[j] && m.get(k, j) != 0 {
                    used[j] = true;
                    out.push(j);
                    if search(m, k + 1, used, out) {
                        return true;
                    }
                    out.pop();
                    used[j] = false;
                }
            }
            false
        }
        let mut used = vec![false; self.dim()];
        let mut out = Vec::with_capacity(self.dim());
        search(self, 0, &mut used, &mut out).then_some(out)
    }
}

impl fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body: Vec<String> = self
            .rows
            .iter()
            .map(|r| r.iter().map(i64::to_string).collect::<Vec<_>>().join(","))
            .collect();
        write!(f, "[{}]", body.join(";"))
    }
}

fn minor(m: &[Vec<i64>], skip_r: usize, skip_c: usize) -> Vec<Vec<i64>> {
    m.iter()
        .enumerate()
        .filter(|(r, _)| *r != skip_r)
        .map(|(_, row)| {
            row.iter()
                .enumerate()
                .filter(|(c, _)| *c != skip_c)
                .map(|(_, x)| *x)
                .collect()
        })
        .collect()
}

fn det(m: &[Vec<i64>]) -> i64 {
    match m.len() {
        0 => 1,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        n => (0..n)
            .filter(|&c| m[0][c] != 0)
            .map(|c| {
                let sign = if c % 2 == 0 { 1 } else { -1 };
                sign * m[0][c] * det(&minor(m, 0, c))
            })
            .sum(),
    }
}
