//! Raw buffer kernels shared by the forward and backward passes.

/// `c (+)= op(a) · op(b)` where `op(a)` is m×k and `op(b)` is k×n.
///
/// With `a_t` set, `a` is stored k×m; with `b_t`, `b` is stored n×k.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the bounds above guarantee every strided access stays inside
    // the slices, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}

/// Materializes the permutation `out[i_0..] = in[i_axes[0]..]`.
pub(crate) fn permute_data(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let rank = shape.len();
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let total = data.len();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return (out, out_shape);
    }
    if rank == 0 {
        out.push(data[0]);
        return (out, out_shape);
    }
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    let last = rank - 1;
    let (last_len, last_stride) = (out_shape[last], src[last]);
    while out.len() < total {
        let mut o = offset;
        for _ in 0..last_len {
            out.push(data[o]);
            o += last_stride;
        }
        // odometer over the leading axes
        let mut d = last;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            offset += src[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= src[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out, out_shape)
}

pub(crate) fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for t in 0..k {
                    c[i * n + j] += a[i * k + t] * b[t * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; x.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = x[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn gemm_transpose_flags_agree_with_naive() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let at = transpose(m, k, &a);
        let bt = transpose(k, n, &b);
        for (aa, a_t) in [(&a, false), (&at, true)] {
            for (bb, b_t) in [(&b, false), (&bt, true)] {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, aa, a_t, bb, b_t, &mut c, false);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn permute_round_trip() {
        let shape = [2, 3, 4];
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let axes = [2, 0, 1];
        let (p, ps) = permute_data(&data, &shape, &axes);
        assert_eq!(ps, vec![4, 2, 3]);
        // out[c][a][b] == in[a][b][c]
        assert_eq!(p[(2 + 1) * 3 + 2], data[(3 + 2) * 4 + 1]);
        let (back, bs) = permute_data(&p, &ps, &inverse_permutation(&axes));
        assert_eq!(bs, shape.to_vec());
        assert_eq!(back, data);
    }
}
