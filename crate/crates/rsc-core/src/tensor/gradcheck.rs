//! Central finite differences: the independent oracle against which every
//! analytic gradient in this crate is verified.

use super::Tensor;
use crate::error::Result;

/// Central-difference estimate of the gradient of `f` at `point`.
///
/// `f` is treated as a black box from tensors to scalars; the estimate uses
/// `(f(x + h e_i) - f(x - h e_i)) / 2h` independently per coordinate.
pub fn finite_diff<F>(f: F, point: &Tensor, step: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    assert!(step > 0.0, "finite_diff requires step > 0");
    let mut grad = vec![0.0; point.numel()];
    let mut probe = point.clone();
    for i in 0..point.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    Tensor::new(point.shape().to_vec(), grad)
}

/// Largest elementwise relative error between two gradients, with an absolute
/// floor so that near-zero entries compare absolutely.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| {
            let scale = a.abs().max(n.abs()).max(1.0);
            (a - n).abs() / scale
        })
        .fold(0.0, f64::max)
}
