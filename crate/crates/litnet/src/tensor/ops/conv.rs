//! 2-D cross-correlation with stride 1 and same-padding.
//!
//! Forward and both backward passes are lowered to im2col plus a small
//! row-major matmul. The summation order for every output element is fixed by
//! construction, so results are bit-reproducible run to run.

use super::{finish, unify_tape};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `a [m x k] * b [k x n]`, row-major.
pub(crate) fn matmul_nn<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &b[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// `a [m x k] * b^T` where `b` is `[n x k]`, row-major.
fn matmul_nt<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc = acc + av * bv;
            }
            *o = *o + acc;
        }
    }
    out
}

/// `a^T * b` where `a` is `[p x m]` and `b` is `[p x n]`, row-major.
fn matmul_tn<T: Element>(a: &[T], b: &[T], p: usize, m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for l in 0..p {
        let arow = &a[l * m..(l + 1) * m];
        let brow = &b[l * n..(l + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// Unroll one image `[c, h, w]` into `[c*k*k, h*w]` patch columns with
/// zero-padding `pad` on every border.
fn im2col<T: Element>(img: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize) -> Vec<T> {
    let hw = h * w;
    let mut col = vec![T::zero(); c * k * k * hw];
    for ci in 0..c {
        let plane = &img[ci * hw..(ci + 1) * hw];
        for u in 0..k {
            for v in 0..k {
                let row = ((ci * k + u) * k + v) * hw;
                for y in 0..h {
                    let sy = y as isize + u as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    // Valid x range: 0 <= x + v - pad < w.
                    let x0 = pad.saturating_sub(v);
                    let x1 = (w as isize + pad as isize - v as isize).min(w as isize);
                    if x1 <= x0 as isize {
                        continue;
                    }
                    let x1 = x1 as usize;
                    let dst = row + y * w + x0;
                    let src = sy * w + x0 + v - pad;
                    col[dst..dst + (x1 - x0)].copy_from_slice(&plane[src..src + (x1 - x0)]);
                }
            }
        }
    }
    col
}

/// Scatter-add the inverse of `im2col`: fold `[c*k*k, h*w]` columns back into
/// an image gradient `[c, h, w]`.
fn col2im_add<T: Element>(
    col: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    img: &mut [T],
) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut img[ci * hw..(ci + 1) * hw];
        for u in 0..k {
            for v in 0..k {
                let row = ((ci * k + u) * k + v) * hw;
                for y in 0..h {
                    let sy = y as isize + u as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let x0 = pad.saturating_sub(v);
                    let x1 = (w as isize + pad as isize - v as isize).min(w as isize);
                    if x1 <= x0 as isize {
                        continue;
                    }
                    let x1 = x1 as usize;
                    let src = row + y * w + x0;
                    let dst = sy * w + x0 + v - pad;
                    for (d, s) in plane[dst..dst + (x1 - x0)]
                        .iter_mut()
                        .zip(&col[src..src + (x1 - x0)])
                    {
                        *d = *d + *s;
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `input [N,Cin,H,W]` with `weight [Cout,Cin,k,k]` and
/// optional `bias [Cout]`. `k` must be odd and `padding` must equal
/// `(k-1)/2`, so spatial dimensions are preserved.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, cin, h, w) = input.shape().nchw()?;
    let (cout, wcin, kh, kw) = weight.shape().nchw()?;
    if kh != kw || kh % 2 == 0 {
        return Err(Error::invalid(
            "conv2d kernel",
            format!("expected odd square kernel, got {kh}x{kw}"),
        ));
    }
    let k = kh;
    if wcin != cin {
        return Err(Error::shape(
            "conv2d",
            format!("weight input channels {cin}"),
            format!("{wcin}"),
        ));
    }
    if padding != (k - 1) / 2 {
        return Err(Error::invalid(
            "conv2d padding",
            format!("same-padding requires padding {} for kernel {k}, got {padding}", (k - 1) / 2),
        ));
    }
    if let Some(b) = bias {
        if b.dims() != [cout] {
            return Err(Error::shape("conv2d bias", format!("[{cout}]"), format!("{}", b.shape())));
        }
    }

    let hw = h * w;
    let ck2 = cin * k * k;
    let mut inputs: Vec<&Tensor<T>> = vec![input, weight];
    if let Some(b) = bias {
        inputs.push(b);
    }
    let tape = unify_tape(&inputs)?;

    let mut out = vec![T::zero(); n * cout * hw];
    {
        let idata = input.data();
        let wdata = weight.data();
        for ni in 0..n {
            let col = im2col(&idata[ni * cin * hw..(ni + 1) * cin * hw], cin, h, w, k, padding);
            let img_out = matmul_nn(wdata, &col, cout, ck2, hw);
            let dst = &mut out[ni * cout * hw..(ni + 1) * cout * hw];
            dst.copy_from_slice(&img_out);
            if let Some(b) = bias {
                for (co, &bv) in b.data().iter().enumerate() {
                    for o in &mut dst[co * hw..(co + 1) * hw] {
                        *o = *o + bv;
                    }
                }
            }
        }
    }
    let out = Tensor::from_vec([n, cout, h, w], out)?;

    let in_node = input.node();
    let w_node = weight.node();
    let b_node = bias.and_then(|b| b.node());
    let in_data = input.data_arc();
    let w_data = weight.data_arc();
    Ok(finish(out, tape, move |go, store| {
        let mut gw = if w_node.is_some() {
            Some(vec![T::zero(); cout * ck2])
        } else {
            None
        };
        let mut gi = if in_node.is_some() {
            Some(vec![T::zero(); n * cin * hw])
        } else {
            None
        };
        for ni in 0..n {
            let go_img = &go[ni * cout * hw..(ni + 1) * cout * hw];
            if gw.is_some() || gi.is_some() {
                // im2col is recomputed rather than saved: it is cheap next to
                // the matmuls and keeps forward memory flat.
                if let Some(gw) = &mut gw {
                    let col =
                        im2col(&in_data[ni * cin * hw..(ni + 1) * cin * hw], cin, h, w, k, padding);
                    let part = matmul_nt(go_img, &col, cout, hw, ck2);
                    for (g, p) in gw.iter_mut().zip(&part) {
                        *g = *g + *p;
                    }
                }
                if let Some(gi) = &mut gi {
                    let gcol = matmul_tn(&w_data, go_img, cout, ck2, hw);
                    col2im_add(
                        &gcol,
                        cin,
                        h,
                        w,
                        k,
                        padding,
                        &mut gi[ni * cin * hw..(ni + 1) * cin * hw],
                    );
                }
            }
        }
        if let (Some(node), Some(gw)) = (w_node, gw) {
            store.accumulate_owned(node, gw);
        }
        if let (Some(node), Some(gi)) = (in_node, gi) {
            store.accumulate_owned(node, gi);
        }
        if let Some(node) = b_node {
            let mut gb = vec![T::zero(); cout];
            for ni in 0..n {
                for co in 0..cout {
                    let row = &go[(ni * cout + co) * hw..(ni * cout + co + 1) * hw];
                    gb[co] = gb[co] + row.iter().fold(T::zero(), |acc, &v| acc + v);
                }
            }
            store.accumulate_owned(node, gb);
        }
    }))
}
