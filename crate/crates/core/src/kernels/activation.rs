use crate::tensor::{Scalar, Tensor};

#[inline]
pub(crate) fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// `x · σ(x)`.
pub fn silu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * sigmoid_scalar(v))
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// `x · relu6(x + 3) / 6`.
pub fn hardswish<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let three = T::cast_from(3.0);
    let six = T::cast_from(6.0);
    x.map(|v| v * (v + three).max(T::zero()).min(six) / six)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_points() {
        let x = Tensor::<f64>::new([3], vec![0.0, 1.0, -1.0]).unwrap();
        let s = silu(&x);
        assert_eq!(s.data()[0], 0.0);
        // 1 / (1 + e^-1)
        assert_abs_diff_eq!(s.data()[1], 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_eq!(sigmoid(&x).data()[0], 0.5);
        assert_eq!(relu(&x).data(), &[0.0, 1.0, 0.0]);
        let h = hardswish(&Tensor::<f64>::new([3], vec![-4.0, 0.0, 4.0]).unwrap());
        assert_eq!(h.data(), &[0.0, 0.0, 4.0]);
    }
}
