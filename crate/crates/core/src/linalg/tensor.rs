use super::DenseMatrix;
use crate::error::{Error, Result};

/// Three-way tensor stored row-major: `T[a, b, c]` lives at `(a·d_b + b)·d_c + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

/// Tensor mode used for unfolding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    A,
    B,
    C,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::A, Mode::B, Mode::C];

    pub fn index(self) -> usize {
        match self {
            Mode::A => 0,
            Mode::B => 1,
            Mode::C => 2,
        }
    }
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::ShapeError(format!(
                "buffer of length {} cannot hold a tensor of dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for a in 0..dims[0] {
            for b in 0..dims[1] {
                for c in 0..dims[2] {
                    data.push(f(a, b, c));
                }
            }
        }
        Self { dims, data }
    }

    /// Rank-one tensor `u ∘ v ∘ w`.
    pub fn outer(u: &[f64], v: &[f64], w: &[f64]) -> Self {
        Self::from_fn([u.len(), v.len(), w.len()], |a, b, c| u[a] * v[b] * w[c])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dims[1] + b) * self.dims[2] + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mode unfolding. Row `i` of the mode-`k` unfolding holds every entry
    /// whose mode-`k` index is `i`, with the two remaining indices flattened
    /// row-major in `(a, b, c)` order.
    pub fn mode_unfold(&self, mode: Mode) -> DenseMatrix {
        let [da, db, dc] = self.dims;
        match mode {
            Mode::A => DenseMatrix::from_vec(da, db * dc, self.data.clone())
                .expect("dims are consistent"),
            Mode::B => DenseMatrix::from_fn(db, da * dc, |j, col| {
                let (a, c) = (col / dc, col % dc);
                self.get(a, j, c)
            }),
            Mode::C => DenseMatrix::from_fn(dc, da * db, |k, col| {
                let (a, b) = (col / db, col % db);
                self.get(a, b, k)
            }),
        }
    }

    /// Inverse of [`Tensor3::mode_unfold`].
    pub fn fold(m: &DenseMatrix, mode: Mode, dims: [usize; 3]) -> Result<Self> {
        let [da, db, dc] = dims;
        let expected = match mode {
            Mode::A => (da, db * dc),
            Mode::B => (db, da * dc),
            Mode::C => (dc, da * db),
        };
        if m.shape() != expected {
            return Err(Error::ShapeError(format!(
                "cannot fold a {:?} matrix into dims {:?} along {:?}",
                m.shape(),
                dims,
                mode
            )));
        }
        Ok(Self::from_fn(dims, |a, b, c| match mode {
            Mode::A => m[(a, b * dc + c)],
            Mode::B => m[(b, a * dc + c)],
            Mode::C => m[(c, a * db + b)],
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_modes_give_column() {
        let t = Tensor3::from_vec([2, 1, 1], vec![3.0, -1.0]).unwrap();
        let u = t.mode_unfold(Mode::A);
        assert_eq!(u, DenseMatrix::from_rows(&[&[3.0], &[-1.0]]));
    }

    #[test]
    fn rank_one_mode_a_unfolding() {
        let (u, v, w) = ([1.0, 2.0], [3.0, -1.0, 0.5], [2.0, 4.0]);
        let t = Tensor3::outer(&u, &v, &w);
        // u · vec(v wᵀ)ᵀ
        let vw: Vec<f64> = v.iter().flat_map(|x| w.iter().map(move |y| x * y)).collect();
        let expected = DenseMatrix::from_fn(2, 6, |i, j| u[i] * vw[j]);
        assert_eq!(t.mode_unfold(Mode::A), expected);
    }

    #[test]
    fn mode_b_and_c_follow_remaining_index_order() {
        let t = Tensor3::from_fn([2, 3, 4], |a, b, c| (100 * a + 10 * b + c) as f64);
        let ub = t.mode_unfold(Mode::B);
        assert_eq!(ub.shape(), (3, 8));
        // column index = a·d_c + c
        assert_eq!(ub[(2, 4 + 3)], 123.0);
        let uc = t.mode_unfold(Mode::C);
        assert_eq!(uc.shape(), (4, 6));
        // column index = a·d_b + b
        assert_eq!(uc[(1, 3 + 2)], 121.0);
    }

    #[test]
    fn fold_inverts_unfold() {
        let t = Tensor3::from_fn([3, 2, 4], |a, b, c| (a as f64).sin() + (b * c) as f64);
        for mode in Mode::ALL {
            let back = Tensor3::fold(&t.mode_unfold(mode), mode, t.dims()).unwrap();
            assert_eq!(back, t);
        }
    }
}
