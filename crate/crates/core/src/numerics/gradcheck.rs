use super::tensor::Tensor;

/// Central-difference gradient of a scalar function:
/// `(f(x+εeᵢ) − f(x−εeᵢ)) / 2ε` per coordinate.
pub fn finite_difference_grad(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, eps: f64) -> Tensor {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Largest `|a−n| / max(1, |a|, |n|)` over all coordinates.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_unit_gradient() {
        let x = Tensor::vector(vec![0.3, -1.0, 7.0]);
        let g = finite_difference_grad(|t| t.sum(), &x, 1e-5);
        for v in g.data() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn half_squared_norm() {
        let g = finite_difference_grad(|t| 0.5 * t.norm_sq(), &Tensor::vector(vec![3.0, 4.0]), 1e-5);
        assert!((g.data()[0] - 3.0).abs() < 1e-8);
        assert!((g.data()[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn softmax_first_component_matches_jacobian_row() {
        // d s0 / dx = s0 (e0 − s)
        let x = Tensor::vector(vec![1.0, 2.0]);
        let g = finite_difference_grad(
            |t| {
                let e: Vec<f64> = t.data().iter().map(|v| v.exp()).collect();
                e[0] / (e[0] + e[1])
            },
            &x,
            1e-5,
        );
        let s0 = 1.0 / (1.0 + 1f64.exp());
        let s1 = 1.0 - s0;
        assert!((g.data()[0] - s0 * (1.0 - s0)).abs() < 1e-9);
        assert!((g.data()[1] + s0 * s1).abs() < 1e-9);
    }
}
