//! Small dense linear-algebra helpers on top of nalgebra: sorted Hermitian
//! eigendecomposition with a reproducible phase convention, polynomial
//! rooting through the companion matrix, and a thresholded pseudo-inverse.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// `exp(j*pi*x)`.
#[inline]
pub fn cis_pi(x: f64) -> Complex64 {
    let (s, c) = (std::f64::consts::PI * x).sin_cos();
    Complex64::new(c, s)
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues come back in descending order. Each eigenvector is rotated so
/// that its first significant component is real and positive.
pub fn hermitian_eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "hermitian_eigh needs a square matrix");
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    // Symmetrize so tiny asymmetries from accumulation do not leak into the solver.
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

fn fix_phase(v: &mut CVec) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    if let Some(pivot) = v.iter().find(|z| z.norm() > 1e-8 * norm) {
        let rot = pivot.conj() / pivot.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

/// Roots of `sum_k coeffs[k] z^k` (coefficients in ascending powers).
///
/// Leading coefficients below `1e-14 * max|c|` are dropped (roots at infinity);
/// trailing zero coefficients contribute roots at the origin.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let tol = 1e-14 * scale;
    let mut hi = coeffs.len();
    while hi > 0 && coeffs[hi - 1].norm() <= tol {
        hi -= 1;
    }
    let mut lo = 0;
    while lo < hi && coeffs[lo].norm() == 0.0 {
        lo += 1;
    }
    let mut roots = vec![Complex64::new(0.0, 0.0); lo];
    let c = &coeffs[lo..hi];
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return roots;
    }

    // Companion matrix of the monic polynomial: ones on the subdiagonal,
    // negated normalized coefficients in the last column.
    let lead = c[deg];
    let mut comp = CMat::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    balance(&mut comp);

    let eig = Schur::new(comp)
        .eigenvalues()
        .expect("complex Schur form is upper triangular");
    roots.extend(eig.iter().copied());
    roots
}

/// Diagonal similarity balancing (Parlett-Reinsch, radix 2) to improve the
/// conditioning of companion-matrix eigenvalues.
fn balance(a: &mut CMat) {
    let n = a.nrows();
    let radix = 2.0_f64;
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].l1_norm();
                    r += a[(i, j)].l1_norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// Pseudo-inverse of a real symmetric matrix, discarding eigenvalues whose
/// magnitude is below `rel_tol * max|lambda|`.
pub fn pinv_symmetric(m: &RMat, rel_tol: f64) -> RMat {
    let n = m.nrows();
    if n == 0 {
        return RMat::zeros(0, 0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let cut = rel_tol * max;
    let mut out = RMat::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam.abs() <= cut || lam == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += (v * v.transpose()) / lam;
    }
    out
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &RMat) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}
