//! Small dense kernels on column-major `d x d` buffers.
//!
//! The hot loops (one cocycle step per walk increment) run through these
//! routines instead of `nalgebra` so that nothing allocates per step.

use nalgebra::DMatrix;

#[inline]
pub(crate) fn idx(d: usize, row: usize, col: usize) -> usize {
    col * d + row
}

/// `out = a * b` for column-major square buffers.
pub(crate) fn matmul(d: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert!(a.len() == d * d && b.len() == d * d && out.len() == d * d);
    for j in 0..d {
        let bcol = &b[j * d..(j + 1) * d];
        let ocol = &mut out[j * d..(j + 1) * d];
        ocol.fill(0.0);
        for (k, &bkj) in bcol.iter().enumerate() {
            if bkj == 0.0 {
                continue;
            }
            let acol = &a[k * d..(k + 1) * d];
            for (o, &aik) in ocol.iter_mut().zip(acol) {
                *o += aik * bkj;
            }
        }
    }
}

/// Scratch space for [`qr_positive`].
#[derive(Debug, Clone)]
pub(crate) struct QrScratch {
    work: Vec<f64>,
    vs: Vec<f64>,
    betas: Vec<f64>,
}

impl QrScratch {
    pub(crate) fn new(d: usize) -> Self {
        Self {
            work: vec![0.0; d * d],
            vs: vec![0.0; d * d],
            betas: vec![0.0; d],
        }
    }
}

/// Householder QR of `a` normalized so that `R` has a strictly positive
/// diagonal. Writes the orthogonal factor to `q` and the upper-triangular
/// factor to `r` (both column-major). Returns `false` if a pivot vanishes.
pub(crate) fn qr_positive(
    d: usize,
    a: &[f64],
    q: &mut [f64],
    r: &mut [f64],
    scratch: &mut QrScratch,
) -> bool {
    let w = &mut scratch.work;
    w.copy_from_slice(a);
    let vs = &mut scratch.vs;
    let betas = &mut scratch.betas;

    for k in 0..d.saturating_sub(1) {
        let mut norm2 = 0.0;
        for i in k..d {
            let x = w[idx(d, i, k)];
            norm2 += x * x;
        }
        let norm = norm2.sqrt();
        let x0 = w[idx(d, k, k)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in column k of vs
        let v = &mut vs[k * d..(k + 1) * d];
        v.fill(0.0);
        for i in k..d {
            v[i] = w[idx(d, i, k)];
        }
        v[k] -= alpha;
        let vnorm2: f64 = v[k..].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            betas[k] = 0.0;
            continue;
        }
        let beta = 2.0 / vnorm2;
        betas[k] = beta;
        for j in k..d {
            let mut s = 0.0;
            for i in k..d {
                s += v[i] * w[idx(d, i, j)];
            }
            s *= beta;
            for i in k..d {
                w[idx(d, i, j)] -= s * v[i];
            }
        }
    }

    // R = upper triangle of w
    for j in 0..d {
        for i in 0..d {
            r[idx(d, i, j)] = if i <= j { w[idx(d, i, j)] } else { 0.0 };
        }
    }

    // Q = H_0 H_1 ... H_{d-2}, accumulated backwards onto the identity.
    q.fill(0.0);
    for i in 0..d {
        q[idx(d, i, i)] = 1.0;
    }
    for k in (0..d.saturating_sub(1)).rev() {
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        let v = &vs[k * d..(k + 1) * d];
        for j in k..d {
            let mut s = 0.0;
            for i in k..d {
                s += v[i] * q[idx(d, i, j)];
            }
            s *= beta;
            for i in k..d {
                q[idx(d, i, j)] -= s * v[i];
            }
        }
    }

    // Flip signs so that diag(R) > 0.
    for i in 0..d {
        let rii = r[idx(d, i, i)];
        if !(rii.abs() > 0.0) || !rii.is_finite() {
            return false;
        }
        if rii < 0.0 {
            for j in i..d {
                r[idx(d, i, j)] = -r[idx(d, i, j)];
            }
            for row in 0..d {
                q[idx(d, row, i)] = -q[idx(d, row, i)];
            }
        }
    }
    true
}

/// Determinant of a small square matrix (row-major or column-major, the
/// result is the same) by Gaussian elimination with partial pivoting.
pub(crate) fn det_in_place(k: usize, m: &mut [f64]) -> f64 {
    let mut det = 1.0;
    for c in 0..k {
        let mut piv = c;
        let mut best = m[c * k + c].abs();
        for rr in c + 1..k {
            let v = m[rr * k + c].abs();
            if v > best {
                best = v;
                piv = rr;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != c {
            for cc in 0..k {
                m.swap(c * k + cc, piv * k + cc);
            }
            det = -det;
        }
        let p = m[c * k + c];
        det *= p;
        for rr in c + 1..k {
            let f = m[rr * k + c] / p;
            if f != 0.0 {
                for cc in c..k {
                    m[rr * k + cc] -= f * m[c * k + cc];
                }
            }
        }
    }
    det
}

pub(crate) fn to_col_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.as_slice().to_vec()
}

pub(crate) fn from_col_major(d: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(d, d, data)
}

/// All `k`-element subsets of `0..d` in lexicographic order.
pub(crate) fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k == 0 || k > d {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == d - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}
