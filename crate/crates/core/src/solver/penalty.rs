use crate::matrix::Matrix;

/// `p(Q) = lambda * sum (q^2 - q)`: zero at binary points, negative inside the box.
pub fn penalty(q: &Matrix, lambda: f64) -> f64 {
    lambda * q.as_slice().iter().map(|&x| x * x - x).sum::<f64>()
}

/// Entrywise `lambda * (2q - 1)`.
pub fn penalty_gradient(q: &Matrix, lambda: f64) -> Matrix {
    q.map(|x| lambda * (2.0 * x - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_on_binary_points() {
        let q = Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(penalty(&q, 7.0), 0.0);
    }

    #[test]
    fn half_matrix() {
        let q = Matrix::filled(2, 2, 0.5);
        assert_eq!(penalty(&q, 4.0), -4.0);
        assert!(penalty_gradient(&q, 4.0).as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let q = Matrix::from_vec(1, 3, vec![0.1, 0.6, 0.95]);
        let g = penalty_gradient(&q, 3.0);
        let h = 1e-6;
        for i in 0..3 {
            let mut up = q.clone();
            up.as_mut_slice()[i] += h;
            let mut dn = q.clone();
            dn.as_mut_slice()[i] -= h;
            let fd = (penalty(&up, 3.0) - penalty(&dn, 3.0)) / (2.0 * h);
            assert!((fd - g.as_slice()[i]).abs() < 1e-8);
        }
    }
}
