use lombard_core::Scalar;

/// Dense row-major tensor. Matrices are stored `rows x cols` with `shape = [rows, cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape/data mismatch");
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn squared_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// `out += W x` for a `rows x cols` matrix.
pub(crate) fn matvec_acc<T: Scalar>(w: &Tensor<T>, x: &[T], out: &mut [T]) {
    let cols = w.cols();
    debug_assert_eq!(x.len(), cols);
    for (o, row) in out.iter_mut().zip(w.data.chunks_exact(cols)) {
        let mut acc = T::zero();
        for (a, b) in row.iter().zip(x) {
            acc += *a * *b;
        }
        *o += acc;
    }
}

/// `out += W^T y`.
pub(crate) fn matvec_t_acc<T: Scalar>(w: &Tensor<T>, y: &[T], out: &mut [T]) {
    let cols = w.cols();
    for (&yi, row) in y.iter().zip(w.data.chunks_exact(cols)) {
        if yi == T::zero() {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += yi * *a;
        }
    }
}

/// `G += y x^T`.
pub(crate) fn outer_acc<T: Scalar>(g: &mut Tensor<T>, y: &[T], x: &[T]) {
    let cols = g.cols();
    for (&yi, row) in y.iter().zip(g.data.chunks_exact_mut(cols)) {
        if yi == T::zero() {
            continue;
        }
        for (o, &xj) in row.iter_mut().zip(x) {
            *o += yi * xj;
        }
    }
}

pub(crate) fn add_assign<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
