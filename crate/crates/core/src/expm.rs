//! Matrix exponential by scaling and squaring with a diagonal Padé approximant.

use nalgebra::DMatrix;

const PADE_DEGREE: usize = 6;

/// Padé coefficients c_k = (2q-k)! q! / ((2q)! k! (q-k)!).
fn pade_coefficients() -> [f64; PADE_DEGREE + 1] {
    let mut c = [0.0; PADE_DEGREE + 1];
    c[0] = 1.0;
    let q = PADE_DEGREE as f64;
    for k in 1..=PADE_DEGREE {
        let kf = k as f64;
        c[k] = c[k - 1] * (q - kf + 1.0) / (kf * (2.0 * q - kf + 1.0));
    }
    c
}

/// `exp(a)` for a square matrix.
///
/// The matrix is scaled by `2^-s` so that its infinity norm is at most 1/2,
/// where the [6/6] approximant has relative backward error below 4e-16, and
/// the result is squared `s` times.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm = inf_norm(a);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-s);

    let c = pade_coefficients();
    let ident = DMatrix::<f64>::identity(n, n);
    let mut power = ident.clone();
    let mut num = &ident * c[0];
    let mut den = &ident * c[0];
    for (k, ck) in c.iter().enumerate().skip(1) {
        power = &power * &scaled;
        num += &power * *ck;
        if k % 2 == 0 {
            den += &power * *ck;
        } else {
            den -= &power * *ck;
        }
    }
    let mut result = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for ||A|| <= 1/2");
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
