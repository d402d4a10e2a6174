//! Hermitian eigensolver and Cholesky factorisation for small dense matrices.
//!
//! The eigensolver is a cyclic complex Jacobi method. At the sizes used here
//! (a handful of transmit antennas) it converges in a few sweeps to machine
//! precision and yields the full spectrum, which makes tie handling in the
//! top eigenspace straightforward.

use num_complex::Complex64;

use super::matrix::{CMat, CVec};
use crate::error::{Error, Result};

/// Hermiticity tolerance, relative to the Frobenius norm.
const HERMITIAN_TOL: f64 = 1e-10;
/// Acceptance bound on `||A v - lambda v|| / ||A||`.
const RESIDUAL_TOL: f64 = 1e-8;
/// Eigenvalues within this relative distance of the maximum are treated as
/// one degenerate top eigenspace.
const DEGENERACY_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Largest eigenvalue with a unit eigenvector.
#[derive(Clone, Debug, PartialEq)]
pub struct EigPair {
    pub value: f64,
    pub vector: CVec,
}

fn check_hermitian(a: &CMat) -> Result<()> {
    if !a.is_square() {
        return Err(Error::domain(format!(
            "expected a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let norm = a.frobenius_norm();
    let skew = a.sub(&a.adjoint()).frobenius_norm();
    if skew > HERMITIAN_TOL * norm {
        return Err(Error::domain(format!(
            "matrix is not Hermitian (||A - A^H|| = {skew:e}, ||A|| = {norm:e})"
        )));
    }
    Ok(())
}

fn hermitian_part(a: &CMat) -> CMat {
    a.add(&a.adjoint()).scale_real(0.5)
}

/// Full eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as the columns of a unitary matrix. The input is assumed
/// Hermitian; only its Hermitian part is used.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    assert!(a.is_square());
    let n = a.rows();
    let mut m = hermitian_part(a);
    let mut v = CMat::identity(n);
    let scale = m.frobenius_norm();
    if n > 1 && scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if off <= f64::EPSILON * scale * 1e-2 {
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    rotate(&mut m, &mut v, p, q);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).re.total_cmp(&m.get(i, i).re));
    let values = order.iter().map(|&i| m.get(i, i).re).collect();
    let vectors = CMat::from_fn(n, n, |r, c| v.get(r, order[c]));
    (values, vectors)
}

/// One complex Jacobi rotation annihilating `m[p][q]`.
fn rotate(m: &mut CMat, v: &mut CMat, p: usize, q: usize) {
    let apq = m.get(p, q);
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let app = m.get(p, p).re;
    let aqq = m.get(q, q).re;
    // Skip rotations below rounding of the diagonal.
    if mag <= f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        m.set(p, q, Complex64::new(0.0, 0.0));
        m.set(q, p, Complex64::new(0.0, 0.0));
        return;
    }
    let phase = apq / mag;
    let tau = (aqq - app) / (2.0 * mag);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // J = diag(1, conj(phase)) * [[c, s], [-s, c]] on the (p, q) plane.
    let jpp = Complex64::new(c, 0.0);
    let jpq = Complex64::new(s, 0.0);
    let jqp = -phase.conj() * s;
    let jqq = phase.conj() * c;
    let n = m.rows();
    for k in 0..n {
        let akp = m.get(k, p);
        let akq = m.get(k, q);
        m.set(k, p, akp * jpp + akq * jqp);
        m.set(k, q, akp * jpq + akq * jqq);
    }
    for k in 0..n {
        let apk = m.get(p, k);
        let aqk = m.get(q, k);
        m.set(p, k, jpp.conj() * apk + jqp.conj() * aqk);
        m.set(q, k, jpq.conj() * apk + jqq.conj() * aqk);
    }
    m.set(p, q, Complex64::new(0.0, 0.0));
    m.set(q, p, Complex64::new(0.0, 0.0));
    let dp = m.get(p, p).re;
    let dq = m.get(q, q).re;
    m.set(p, p, Complex64::new(dp, 0.0));
    m.set(q, q, Complex64::new(dq, 0.0));
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, vkp * jpp + vkq * jqp);
        v.set(k, q, vkp * jpq + vkq * jqq);
    }
}

/// Largest eigenvalue of a Hermitian matrix and a unit eigenvector.
///
/// When the top eigenvalue is degenerate the returned vector is the
/// normalised projection of the all-ones seed `1/sqrt(n)` onto the top
/// eigenspace, the fixed point a power iteration from that seed converges
/// to. The vector's global phase is normalised so its largest-magnitude
/// entry is real and nonnegative.
pub fn hermitian_eig_max(a: &CMat) -> Result<EigPair> {
    check_hermitian(a)?;
    let n = a.rows();
    if n == 0 {
        return Err(Error::domain("empty matrix has no eigenpair"));
    }
    let (values, vectors) = hermitian_eigen(a);
    let top = values[0];
    let spread = values[0].abs().max(values[n - 1].abs());
    let tol = DEGENERACY_TOL * if spread > 0.0 { spread } else { 1.0 };
    let cluster = values.iter().take_while(|&&l| top - l <= tol).count();

    let vector = if cluster == 1 {
        vectors.column(0)
    } else {
        let seed = CVec::from_raw(vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n]);
        let mut proj = CVec::zeros(n);
        for k in 0..cluster {
            let u = vectors.column(k);
            proj = proj.add(&u.scale(u.dot(&seed)));
        }
        if proj.norm() > 1e-8 {
            proj.normalized().expect("nonzero projection")
        } else {
            vectors.column(0)
        }
    }
    .phase_normalized();

    let a_h = hermitian_part(a);
    let residual = a_h
        .mul_vec(&vector)
        .sub(&vector.scale(Complex64::new(top, 0.0)))
        .norm();
    let norm = a_h.frobenius_norm();
    if residual > RESIDUAL_TOL * norm.max(f64::MIN_POSITIVE) && residual > 0.0 {
        return Err(Error::Numerical {
            message: "Hermitian eigensolver did not converge".into(),
            residual,
        });
    }
    Ok(EigPair { value: top, vector })
}

/// Lower-triangular `L` with `L L^H = A` for Hermitian positive-definite `A`.
pub fn cholesky(a: &CMat) -> Result<CMat> {
    check_hermitian(a)?;
    let n = a.rows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut diag = a.get(j, j).re;
        for k in 0..j {
            diag -= l.get(j, k).norm_sqr();
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::domain(format!(
                "matrix is not positive definite: pivot {j} is {diag:e}"
            )));
        }
        let ljj = diag.sqrt();
        l.set(j, j, Complex64::new(ljj, 0.0));
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k).conj();
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &CMat, b: &CVec) -> CVec {
    let n = l.rows();
    let mut x = b.clone();
    let xs = x.data_mut();
    for i in 0..n {
        let mut s = xs[i];
        for k in 0..i {
            s -= l.get(i, k) * xs[k];
        }
        xs[i] = s / l.get(i, i);
    }
    x
}

/// Solves `L^H x = b` for lower-triangular `L`.
pub fn solve_lower_adjoint(l: &CMat, b: &CVec) -> CVec {
    let n = l.rows();
    let mut x = b.clone();
    let xs = x.data_mut();
    for i in (0..n).rev() {
        let mut s = xs[i];
        for k in i + 1..n {
            s -= l.get(k, i).conj() * xs[k];
        }
        xs[i] = s / l.get(i, i).conj();
    }
    x
}

/// `L^{-1} M L^{-H}` for lower-triangular `L`.
pub fn whiten(l: &CMat, m: &CMat) -> CMat {
    let n = l.rows();
    // Y = L^{-1} M, column by column.
    let mut y = CMat::zeros(n, n);
    for j in 0..n {
        let col = solve_lower(l, &m.column(j));
        for i in 0..n {
            y.set(i, j, col.data()[i]);
        }
    }
    // W = Y L^{-H} = (L^{-1} Y^H)^H.
    let yh = y.adjoint();
    let mut w = CMat::zeros(n, n);
    for j in 0..n {
        let col = solve_lower(l, &yh.column(j));
        for i in 0..n {
            w.set(j, i, col.data()[i].conj());
        }
    }
    w
}

/// Largest eigenvalue of `H^H H`, i.e. the squared spectral norm of `H`.
pub fn spectral_norm_sq_of_channel(h: &CMat) -> f64 {
    if h.cols() == 0 {
        return 0.0;
    }
    let (values, _) = hermitian_eigen(&h.gram());
    values[0].max(0.0)
}
