//! Elementwise jet kernels on equal-shape buffers.
//!
//! A buffer holds `batch` rows of `comps` components of `width` values,
//! indexed `(b * comps + c) * width + w`. Component 0 is the value,
//! components `1..=nt` are first directional derivatives and the following
//! `nh` components are pure second directional derivatives (`nh` is either
//! 0 or equal to `nt`).

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dims {
    pub batch: usize,
    pub nt: usize,
    pub nh: usize,
    pub width: usize,
}

impl Dims {
    pub fn comps(&self) -> usize {
        1 + self.nt + self.nh
    }
}

/// `z = a * b` with the product rule up to second order.
pub(crate) fn mul_fwd(z: &mut [f64], a: &[f64], b: &[f64], s: Dims) {
    let (c, w) = (s.comps(), s.width);
    for bi in 0..s.batch {
        let base = bi * c * w;
        let row = |k: usize| base + k * w..base + (k + 1) * w;
        for j in row(0) {
            z[j] = a[j] * b[j];
        }
        for t in 1..=s.nt {
            let (r0, rt) = (row(0), row(t));
            for (j0, jt) in r0.zip(rt) {
                z[jt] = a[jt] * b[j0] + a[j0] * b[jt];
            }
        }
        for i in 0..s.nh {
            let (r0, rt, rh) = (row(0), row(1 + i), row(1 + s.nt + i));
            for ((j0, jt), jh) in r0.zip(rt).zip(rh) {
                z[jh] = a[jh] * b[j0] + 2.0 * a[jt] * b[jt] + a[j0] * b[jh];
            }
        }
    }
}

/// Accumulates the adjoint of one factor of a product; `other` is the
/// partner factor.
pub(crate) fn mul_bwd(ga: &mut [f64], gz: &[f64], other: &[f64], s: Dims) {
    let (c, w) = (s.comps(), s.width);
    let b = other;
    for bi in 0..s.batch {
        let base = bi * c * w;
        let row = |k: usize| base + k * w..base + (k + 1) * w;
        for j in row(0) {
            ga[j] += gz[j] * b[j];
        }
        for t in 1..=s.nt {
            for (j0, jt) in row(0).zip(row(t)) {
                ga[j0] += gz[jt] * b[jt];
                ga[jt] += gz[jt] * b[j0];
            }
        }
        for i in 0..s.nh {
            for ((j0, jt), jh) in row(0).zip(row(1 + i)).zip(row(1 + s.nt + i)) {
                ga[j0] += gz[jh] * b[jh];
                ga[jt] += 2.0 * gz[jh] * b[jt];
                ga[jh] += gz[jh] * b[j0];
            }
        }
    }
}

/// `z = phi(a)`; `phi` returns the value and first three derivatives.
pub(crate) fn unary_fwd(z: &mut [f64], a: &[f64], s: Dims, phi: impl Fn(f64) -> [f64; 4]) {
    let (c, w) = (s.comps(), s.width);
    for bi in 0..s.batch {
        let base = bi * c * w;
        for k in 0..w {
            let j0 = base + k;
            let d = phi(a[j0]);
            z[j0] = d[0];
            for t in 0..s.nt {
                let jt = j0 + (1 + t) * w;
                z[jt] = d[1] * a[jt];
            }
            for i in 0..s.nh {
                let jt = j0 + (1 + i) * w;
                let jh = j0 + (1 + s.nt + i) * w;
                z[jh] = d[2] * a[jt] * a[jt] + d[1] * a[jh];
            }
        }
    }
}

pub(crate) fn unary_bwd(
    ga: &mut [f64],
    gz: &[f64],
    a: &[f64],
    s: Dims,
    phi: impl Fn(f64) -> [f64; 4],
) {
    let (c, w) = (s.comps(), s.width);
    for bi in 0..s.batch {
        let base = bi * c * w;
        for k in 0..w {
            let j0 = base + k;
            let d = phi(a[j0]);
            let mut g0 = gz[j0] * d[1];
            for t in 0..s.nt {
                let jt = j0 + (1 + t) * w;
                g0 += gz[jt] * d[2] * a[jt];
                ga[jt] += gz[jt] * d[1];
            }
            for i in 0..s.nh {
                let jt = j0 + (1 + i) * w;
                let jh = j0 + (1 + s.nt + i) * w;
                let at = a[jt];
                g0 += gz[jh] * (d[3] * at * at + d[2] * a[jh]);
                ga[jt] += 2.0 * gz[jh] * d[2] * at;
                ga[jh] += gz[jh] * d[1];
            }
            ga[j0] += g0;
        }
    }
}

/// Determinant by LU factorisation with partial pivoting. Destroys `m`.
pub(crate) fn det_in_place(m: &mut [f64], k: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..k {
        let mut piv = col;
        let mut best = m[col * k + col].abs();
        for r in col + 1..k {
            let v = m[r * k + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..k {
                m.swap(col * k + j, piv * k + j);
            }
            det = -det;
        }
        let p = m[col * k + col];
        det *= p;
        for r in col + 1..k {
            let f = m[r * k + col] / p;
            if f != 0.0 {
                for j in col + 1..k {
                    m[r * k + j] -= f * m[col * k + j];
                }
            }
        }
    }
    det
}

pub(crate) fn det(m: &[f64], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => {
            let mut tmp = m.to_vec();
            det_in_place(&mut tmp, k)
        }
    }
}

/// Cofactor matrix `C[i][j] = (-1)^(i+j) det(minor_ij)`, which is the
/// derivative of the determinant with respect to entry `(i, j)`. Computed
/// from minors so singular matrices are handled.
pub(crate) fn cofactors(m: &[f64], k: usize, out: &mut [f64]) {
    if k == 1 {
        out[0] = 1.0;
        return;
    }
    let mut minor = vec![0.0; (k - 1) * (k - 1)];
    for i in 0..k {
        for j in 0..k {
            let mut idx = 0;
            for r in (0..k).filter(|&r| r != i) {
                for c in (0..k).filter(|&c| c != j) {
                    minor[idx] = m[r * k + c];
                    idx += 1;
                }
            }
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            out[i * k + j] = sign * det(&minor, k - 1);
        }
    }
}
