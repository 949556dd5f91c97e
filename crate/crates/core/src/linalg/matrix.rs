use std::fmt;
use std::ops::{Index, IndexMut};

use num::{One, Zero};

use super::rational::{render_exact, Rational};
use super::LinalgError;

/// Dense row-major matrix of exact rationals.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl RationalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Rational::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Rational::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Rational>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::EntryCount { rows, cols, entries: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != c {
                return Err(LinalgError::RaggedRow { row: i, expected: c, found: row.len() });
            }
            data.extend(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn from_i64_rows(rows: &[&[i64]]) -> Self {
        Self::from_rows(
            rows.iter().map(|r| r.iter().map(|&v| Rational::from_integer(v.into())).collect()).collect(),
        )
        .expect("rectangular literal")
    }

    pub fn diagonal(entries: &[Rational]) -> Self {
        let mut m = Self::zeros(entries.len(), entries.len());
        for (i, v) in entries.iter().enumerate() {
            m[(i, i)] = v.clone();
        }
        m
    }

    pub fn column(entries: &[Rational]) -> Self {
        Self { rows: entries.len(), cols: 1, data: entries.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Rational] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.same_shape("add", other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.same_shape("sub", other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn mul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Shape {
                op: "multiply",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other[(k, j)];
                    if !b.is_zero() {
                        out[(i, j)] += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: &Rational) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// `T · self · Tᵀ`.
    pub fn congruence(&self, t: &Self) -> Result<Self, LinalgError> {
        t.mul(self)?.mul(&t.transpose())
    }

    /// Places the blocks along the diagonal; zeros elsewhere.
    pub fn block_diag(blocks: &[&Self]) -> Self {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out[(r0 + i, c0 + j)] = b[(i, j)].clone();
                }
            }
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }

    /// 2×2 block assembly `[[a, b], [c, d]]`.
    pub fn block2x2(a: &Self, b: &Self, c: &Self, d: &Self) -> Result<Self, LinalgError> {
        if a.rows != b.rows || c.rows != d.rows || a.cols != c.cols || b.cols != d.cols {
            return Err(LinalgError::Shape { op: "block", left: a.shape(), right: d.shape() });
        }
        let mut out = Self::zeros(a.rows + c.rows, a.cols + b.cols);
        for (blk, r0, c0) in [(a, 0, 0), (b, 0, a.cols), (c, a.rows, 0), (d, a.rows, a.cols)] {
            for i in 0..blk.rows {
                for j in 0..blk.cols {
                    out[(r0 + i, c0 + j)] = blk[(i, j)].clone();
                }
            }
        }
        Ok(out)
    }

    /// Submatrix keeping the given rows and columns, in the given order.
    pub fn extract(&self, rows: &[usize], cols: &[usize]) -> Result<Self, LinalgError> {
        if rows.iter().any(|&r| r >= self.rows) || cols.iter().any(|&c| c >= self.cols) {
            return Err(LinalgError::IndexOutOfRange { shape: self.shape() });
        }
        let mut out = Self::zeros(rows.len(), cols.len());
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out[(i, j)] = self[(r, c)].clone();
            }
        }
        Ok(out)
    }

    /// Principal submatrix on `idx`.
    pub fn principal(&self, idx: &[usize]) -> Result<Self, LinalgError> {
        self.extract(idx, idx)
    }

    /// Exact inverse by Gauss-Jordan elimination.
    pub fn invert(&self) -> Result<Self, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare { shape: self.shape() });
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot = (col..n).find(|&r| !a[(r, col)].is_zero()).ok_or(LinalgError::Singular)?;
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let p = a[(col, col)].clone();
            for j in 0..n {
                a[(col, j)] /= &p;
                inv[(col, j)] /= &p;
            }
            for r in 0..n {
                if r == col || a[(r, col)].is_zero() {
                    continue;
                }
                let f = a[(r, col)].clone();
                for j in 0..n {
                    let da = &f * &a[(col, j)];
                    a[(r, j)] -= da;
                    let di = &f * &inv[(col, j)];
                    inv[(r, j)] -= di;
                }
            }
        }
        Ok(inv)
    }

    /// `vᵀ · self · v` for a square matrix.
    pub fn quadratic_form(&self, v: &[Rational]) -> Result<Rational, LinalgError> {
        if !self.is_square() || v.len() != self.rows {
            return Err(LinalgError::Shape { op: "quadratic form", left: self.shape(), right: (v.len(), 1) });
        }
        let mut acc = Rational::zero();
        for i in 0..self.rows {
            if v[i].is_zero() {
                continue;
            }
            let mut row = Rational::zero();
            for j in 0..self.cols {
                if !v[j].is_zero() {
                    row += &self[(i, j)] * &v[j];
                }
            }
            acc += &v[i] * row;
        }
        Ok(acc)
    }

    /// `self · v`.
    pub fn apply(&self, v: &[Rational]) -> Result<Vec<Rational>, LinalgError> {
        if v.len() != self.cols {
            return Err(LinalgError::Shape { op: "apply", left: self.shape(), right: (v.len(), 1) });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(Rational::zero(), |acc, (a, b)| acc + a * b))
            .collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(super::rational::to_f64).collect()
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn same_shape(&self, op: &'static str, other: &Self) -> Result<(), LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::Shape { op, left: self.shape(), right: other.shape() });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for RationalMatrix {
    type Output = Rational;

    fn index(&self, (i, j): (usize, usize)) -> &Rational {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of {}x{}", self.rows, self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RationalMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Rational {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of {}x{}", self.rows, self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for RationalMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            let row: Vec<String> = self.row(i).iter().map(render_exact).collect();
            write!(f, "{}", row.join(", "))?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rational::{parse_decimal, ratio, to_f64};

    fn dec(s: &str) -> Rational {
        parse_decimal(s).unwrap()
    }

    #[test]
    fn block_diag_places_blocks() {
        let a = RationalMatrix::from_i64_rows(&[&[1]]);
        let b = RationalMatrix::from_i64_rows(&[&[2]]);
        assert_eq!(RationalMatrix::block_diag(&[&a, &b]), RationalMatrix::from_i64_rows(&[&[1, 0], &[0, 2]]));
    }

    #[test]
    fn shape_errors_name_operands() {
        let a = RationalMatrix::zeros(2, 3);
        let b = RationalMatrix::zeros(2, 3);
        let err = a.mul(&b).unwrap_err();
        assert_eq!(err.to_string(), "dimension mismatch in multiply: 2x3 vs 2x3");
        assert!(a.add(&RationalMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn invert_small_cases() {
        let i = RationalMatrix::identity(3);
        assert_eq!(i.invert().unwrap(), i);
        let d = RationalMatrix::from_i64_rows(&[&[2, 0], &[0, 4]]);
        assert_eq!(d.invert().unwrap(), RationalMatrix::diagonal(&[ratio(1, 2), ratio(1, 4)]));
        let s = RationalMatrix::from_i64_rows(&[&[1, 2], &[2, 4]]);
        assert_eq!(s.invert().unwrap_err(), LinalgError::Singular);
    }

    #[test]
    fn stability_observer_inverse_matches_figure() {
        let p = RationalMatrix::from_rows(vec![
            vec![dec("6.742e-4"), dec("4.28e-5")],
            vec![dec("4.28e-5"), dec("2.4651e-3")],
        ])
        .unwrap();
        let q = p.invert().unwrap();
        assert_eq!(p.mul(&q).unwrap(), RationalMatrix::identity(2));
        let expected = [1484.8760396857954, -25.780980284188082, -25.780980284188082, 406.11067541120576];
        for (got, want) in q.entries().iter().zip(expected) {
            let g = to_f64(got);
            assert!(((g - want) / want).abs() < 1e-12, "{g} vs {want}");
        }
    }

    #[test]
    fn scalar_multiples_of_sprocedure() {
        let q = RationalMatrix::identity(1);
        let s = q.scale(&(ratio(1, 1) / dec("0.9991")));
        assert_eq!(s[(0, 0)], ratio(10000, 9991));
        assert!((to_f64(&s[(0, 0)]) - 1.0009008107296566).abs() < 1e-16);
        let t = q.scale(&(ratio(1, 1) / dec("0.0009")));
        assert_eq!(t[(0, 0)], ratio(10000, 9));
    }

    #[test]
    fn extract_and_congruence() {
        let m = RationalMatrix::from_i64_rows(&[&[1, 2, 3], &[4, 5, 6], &[7, 8, 9]]);
        assert_eq!(m.principal(&[0, 2]).unwrap(), RationalMatrix::from_i64_rows(&[&[1, 3], &[7, 9]]));
        let q = RationalMatrix::from_i64_rows(&[&[1]]);
        let t = RationalMatrix::from_i64_rows(&[&[1], &[2]]);
        assert_eq!(q.congruence(&t).unwrap(), RationalMatrix::from_i64_rows(&[&[1, 2], &[2, 4]]));
    }
}
