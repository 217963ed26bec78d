//! Built-in regression fixtures.
//!
//! `proper_map_3x3` is a published example of a proper cross-positive map
//! Φ : M₃(ℝ) → M₃(ℝ): its biform p_Φ is nonnegative on V(I) but not a sum
//! of squares modulo I. `seed_points_3x3` is the orthogonal seed
//! configuration the randomized generator was run with to produce it; both
//! serve as end-to-end regression inputs.

use crate::polyalg::{pairs, MatK, SymMapTensor};
use crate::scalar::Coeff;
use num_rational::BigRational;

/// Images Φ(E₁₁), Φ(E₂₂), Φ(E₃₃), Φ(E₁₂+E₂₁), Φ(E₁₃+E₃₁), Φ(E₂₃+E₃₂).
const PHI_DIAG: [[[f64; 3]; 3]; 3] = [
    [[0.0, 0.0, 0.0], [0.0, 75.356, -32.6347], [0.0, -32.6347, 35.3881]],
    [
        [37.6343, -1.01742, 0.850636],
        [-1.01742, 38.8145, 4.68748],
        [0.850636, 4.68748, 66.6118],
    ],
    [
        [6.96833, 12.5116, -16.0886],
        [12.5116, 23.0293, -20.7328],
        [-16.0886, -20.7328, 22.9845],
    ],
];

const PHI_OFFDIAG: [[[f64; 3]; 3]; 3] = [
    [[0.0, 0.0, 0.0], [0.0, 89.2972, -40.0518], [0.0, -40.0518, 96.593]],
    [[0.0, 0.0, 0.0], [0.0, -19.9103, 28.2471], [0.0, 28.2471, -47.7404]],
    [
        [17.7278, 17.6168, -16.6623],
        [17.6168, 37.1699, 5.74284],
        [-16.6623, 5.74284, -66.1642],
    ],
];

fn mat3(rows: &[[f64; 3]; 3]) -> MatK<f64> {
    MatK::from_rows(rows.iter().map(|r| r.to_vec()).collect())
}

/// The proper cross-positive map Φ on 3×3 matrices, as a basis-image tensor.
pub fn proper_map_3x3() -> SymMapTensor<f64> {
    let mut a = SymMapTensor::zero(3);
    for i in 0..3 {
        a.diag[i] = mat3(&PHI_DIAG[i]);
    }
    for (idx, _) in pairs(3).into_iter().enumerate() {
        a.offdiag[idx] = mat3(&PHI_OFFDIAG[idx]);
    }
    a
}

/// Seed pairs (x⁽ⁱ⁾, y⁽ⁱ⁾), i = 1…5, each with x⁽ⁱ⁾ᵀy⁽ⁱ⁾ = 0 exactly.
pub fn seed_points_3x3() -> Vec<(Vec<BigRational>, Vec<BigRational>)> {
    let r = |num: i64, den: i64| BigRational::from_ratio(num, den);
    vec![
        (
            vec![r(-3, 2), r(1, 1), r(3, 2)],
            vec![r(-21, 2), r(-3, 2), r(-19, 2)],
        ),
        (
            vec![r(1, 3), r(0, 1), r(-3, 1)],
            vec![r(-24, 1), r(9, 1), r(-8, 3)],
        ),
        (
            vec![r(1, 1), r(-1, 1), r(-2, 3)],
            vec![r(14, 3), r(-2, 3), r(8, 1)],
        ),
        (
            vec![r(2, 1), r(-1, 1), r(1, 2)],
            vec![r(-4, 1), r(9, 2), r(25, 1)],
        ),
        (
            vec![r(-3, 2), r(3, 2), r(-3, 2)],
            vec![r(3, 2), r(3, 2), r(0, 1)],
        ),
    ]
}

/// Same seed pairs in floating point.
pub fn seed_points_3x3_f64() -> Vec<(Vec<f64>, Vec<f64>)> {
    seed_points_3x3()
        .into_iter()
        .map(|(x, y)| {
            (
                x.iter().map(Coeff::to_f64).collect(),
                y.iter().map(Coeff::to_f64).collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::map_to_biform;
    use num_traits::Zero;

    #[test]
    fn proper_map_biform_has_published_coefficients() {
        let p = map_to_biform(&proper_map_3x3());
        // Coefficient of x₁²y₂² and of x₂x₃y₁² (0-based indices below).
        assert_eq!(p.coeff(0, 0, 1, 1), 75.356);
        assert_eq!(p.coeff(1, 2, 0, 0), 17.7278);
        // A couple of doubled off-diagonal entries.
        assert_eq!(p.coeff(0, 0, 1, 2), 2.0 * -32.6347);
        assert_eq!(p.coeff(2, 2, 0, 1), 2.0 * 12.5116);
    }

    #[test]
    fn seed_pairs_are_exactly_orthogonal() {
        for (x, y) in seed_points_3x3() {
            let dot = x
                .iter()
                .zip(&y)
                .fold(BigRational::zero(), |acc, (a, b)| acc + a * b);
            assert!(dot.is_zero());
        }
    }
}
