//! Singular values of 3x3 matrices from the eigenvalues of `M^T M`,
//! computed with cyclic Jacobi rotations.

use crate::geom::Mat3;

/// Singular values, descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularValues(pub [f64; 3]);

impl SingularValues {
    pub fn max(&self) -> f64 {
        self.0[0]
    }

    pub fn min(&self) -> f64 {
        self.0[2]
    }

    /// `sigma_max / sigma_min`, infinite when `sigma_min == 0`.
    pub fn condition_number(&self) -> f64 {
        if self.min() == 0.0 {
            f64::INFINITY
        } else {
            self.max() / self.min()
        }
    }
}

fn gram(m: &Mat3) -> Mat3 {
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = (0..3).map(|k| m[k][i] * m[k][j]).sum();
        }
    }
    a
}

/// Eigenvalues of a symmetric 3x3 matrix.
pub fn symmetric_eigenvalues(mut a: Mat3) -> [f64; 3] {
    for _sweep in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let diag = a[0][0].powi(2) + a[1][1].powi(2) + a[2][2].powi(2);
        if off <= 1e-32 * diag || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // A <- R^T A R with R the (p, q) rotation.
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
        }
    }
    [a[0][0], a[1][1], a[2][2]]
}

pub fn singular_values(m: &Mat3) -> SingularValues {
    let mut sv = symmetric_eigenvalues(gram(m)).map(|l| l.max(0.0).sqrt());
    sv.sort_by(|a, b| b.total_cmp(a));
    SingularValues(sv)
}

pub fn min_singular_value(m: &Mat3) -> f64 {
    singular_values(m).min()
}

pub fn condition_number(m: &Mat3) -> f64 {
    singular_values(m).condition_number()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity() {
        let m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(min_singular_value(&m), 1.0);
        assert_eq!(condition_number(&m), 1.0);
    }

    #[test]
    fn rank_deficient_diagonal() {
        let m = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
        assert_eq!(min_singular_value(&m), 0.0);
        assert_eq!(condition_number(&m), f64::INFINITY);
        assert_eq!(singular_values(&m).0, [2.0, 1.0, 0.0]);
    }
}
