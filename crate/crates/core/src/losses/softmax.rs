//! Full-catalog softmax cross-entropy over score rows.

use crate::numerics::softmax_into;

/// `−ln softmax(row)[col]`, writing `softmax − one_hot` into `grad`.
pub(crate) fn ce_row(row: &[f64], col: usize, grad: &mut [f64]) -> f64 {
    let lse = softmax_into(row, grad);
    grad[col] -= 1.0;
    lse - row[col]
}
