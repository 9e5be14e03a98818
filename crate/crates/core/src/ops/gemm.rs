/// Row/column strides of a matrix operand stored in a flat slice.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl Layout {
    pub fn row_major(rows: usize, cols: usize) -> Self {
        Self { rows, cols, row_stride: cols, col_stride: 1 }
    }

    /// The transpose of a row-major `rows × cols` matrix, viewed in place.
    pub fn transposed(rows: usize, cols: usize) -> Self {
        Self { rows: cols, cols: rows, row_stride: 1, col_stride: cols }
    }

    fn extent(&self) -> usize {
        (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride + 1
    }
}

/// `c = a·b + beta·c`.
pub(crate) fn gemm(a: &[f64], la: Layout, b: &[f64], lb: Layout, beta: f64, c: &mut [f64], lc: Layout) {
    assert_eq!(la.cols, lb.rows, "inner dimensions");
    assert_eq!(la.rows, lc.rows, "output rows");
    assert_eq!(lb.cols, lc.cols, "output cols");
    assert!(a.len() >= la.extent() && b.len() >= lb.extent() && c.len() >= lc.extent());
    // SAFETY: the asserts above keep every addressed element inside the
    // three slices, and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            la.rows,
            la.cols,
            lb.cols,
            1.0,
            a.as_ptr(),
            la.row_stride as isize,
            la.col_stride as isize,
            b.as_ptr(),
            lb.row_stride as isize,
            lb.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            lc.row_stride as isize,
            lc.col_stride as isize,
        );
    }
}
