//! Differentiable tensor operations. Each op computes its forward value
//! eagerly and registers a backward rule closure that accumulates into the
//! parents' gradient buffers.

use crate::error::{Error, Result};
use crate::numerics::scalar::Real;
use crate::numerics::tensor::Tensor;

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b, "add")?;
    let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x + y).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(a.shape().to_vec(), data, vec![a.clone(), b.clone()], move |g| {
        if pa.is_tracked() {
            pa.accum_grad(g);
        }
        if pb.is_tracked() {
            pb.accum_grad(g);
        }
    }))
}

pub fn sub<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b, "sub")?;
    let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x - y).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(a.shape().to_vec(), data, vec![a.clone(), b.clone()], move |g| {
        if pa.is_tracked() {
            pa.accum_grad(g);
        }
        if pb.is_tracked() {
            let neg: Vec<T> = g.iter().map(|&x| -x).collect();
            pb.accum_grad(&neg);
        }
    }))
}

pub fn mul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b, "mul")?;
    let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x * y).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(a.shape().to_vec(), data, vec![a.clone(), b.clone()], move |g| {
        if pa.is_tracked() {
            let d: Vec<T> = g.iter().zip(pb.data().iter()).map(|(&go, &y)| go * y).collect();
            pa.accum_grad(&d);
        }
        if pb.is_tracked() {
            let d: Vec<T> = g.iter().zip(pa.data().iter()).map(|(&go, &x)| go * x).collect();
            pb.accum_grad(&d);
        }
    }))
}

pub fn div<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b, "div")?;
    let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x / y).collect();
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(a.shape().to_vec(), data, vec![a.clone(), b.clone()], move |g| {
        if pa.is_tracked() {
            let d: Vec<T> = g.iter().zip(pb.data().iter()).map(|(&go, &y)| go / y).collect();
            pa.accum_grad(&d);
        }
        if pb.is_tracked() {
            let d: Vec<T> = g
                .iter()
                .zip(pa.data().iter().zip(pb.data().iter()))
                .map(|(&go, (&x, &y))| -go * x / (y * y))
                .collect();
            pb.accum_grad(&d);
        }
    }))
}

/// `x [m×n] + bias [n]`, broadcast over rows.
pub fn add_bias<T: Real>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = (x.rows(), x.cols());
    if bias.shape() != [n] {
        return Err(Error::Shape(format!(
            "add_bias: x {:?} vs bias {:?}",
            x.shape(),
            bias.shape()
        )));
    }
    let xd = x.data();
    let bd = bias.data();
    let mut data = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            data.push(xd[i * n + j] + bd[j]);
        }
    }
    drop(xd);
    drop(bd);
    let (px, pb) = (x.clone(), bias.clone());
    Ok(Tensor::from_op(vec![m, n], data, vec![x.clone(), bias.clone()], move |g| {
        if px.is_tracked() {
            px.accum_grad(g);
        }
        if pb.is_tracked() {
            let mut d = vec![T::zero(); n];
            for i in 0..m {
                for j in 0..n {
                    d[j] += g[i * n + j];
                }
            }
            pb.accum_grad(&d);
        }
    }))
}

pub fn scale<T: Real>(a: &Tensor<T>, c: f64) -> Tensor<T> {
    let c = T::lit(c);
    let data = a.data().iter().map(|&x| x * c).collect();
    let pa = a.clone();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], move |g| {
        if pa.is_tracked() {
            let d: Vec<T> = g.iter().map(|&go| go * c).collect();
            pa.accum_grad(&d);
        }
    })
}

pub fn add_scalar<T: Real>(a: &Tensor<T>, c: f64) -> Tensor<T> {
    let c = T::lit(c);
    let data = a.data().iter().map(|&x| x + c).collect();
    let pa = a.clone();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], move |g| {
        if pa.is_tracked() {
            pa.accum_grad(g);
        }
    })
}

pub fn neg<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    scale(a, -1.0)
}

pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "matmul: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let ad = a.data();
    let bd = b.data();
    let mut data = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = ad[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            let crow = &mut data[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    drop(ad);
    drop(bd);
    let (pa, pb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(vec![m, n], data, vec![a.clone(), b.clone()], move |g| {
        // dA = dC · Bᵀ, dB = Aᵀ · dC
        if pa.is_tracked() {
            let bd = pb.data();
            let mut d = vec![T::zero(); m * k];
            for i in 0..m {
                for p in 0..k {
                    let mut acc = T::zero();
                    let grow = &g[i * n..(i + 1) * n];
                    let brow = &bd[p * n..(p + 1) * n];
                    for j in 0..n {
                        acc += grow[j] * brow[j];
                    }
                    d[i * k + p] = acc;
                }
            }
            pa.accum_grad(&d);
        }
        if pb.is_tracked() {
            let ad = pa.data();
            let mut d = vec![T::zero(); k * n];
            for i in 0..m {
                let grow = &g[i * n..(i + 1) * n];
                for p in 0..k {
                    let av = ad[i * k + p];
                    if av == T::zero() {
                        continue;
                    }
                    let drow = &mut d[p * n..(p + 1) * n];
                    for j in 0..n {
                        drow[j] += av * grow[j];
                    }
                }
            }
            pb.accum_grad(&d);
        }
    }))
}

pub fn transpose<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    assert_eq!(a.shape().len(), 2, "transpose expects rank 2");
    let (m, n) = (a.rows(), a.cols());
    let ad = a.data();
    let mut data = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            data[j * m + i] = ad[i * n + j];
        }
    }
    drop(ad);
    let pa = a.clone();
    Tensor::from_op(vec![n, m], data, vec![a.clone()], move |g| {
        if pa.is_tracked() {
            let mut d = vec![T::zero(); m * n];
            for j in 0..n {
                for i in 0..m {
                    d[i * n + j] = g[j * m + i];
                }
            }
            pa.accum_grad(&d);
        }
    })
}

pub fn relu<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    let data: Vec<T> = a.data().iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
    let pa = a.clone();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], move |g| {
        if pa.is_tracked() {
            let d: Vec<T> = g
                .iter()
                .zip(pa.data().iter())
                .map(|(&go, &x)| if x > T::zero() { go } else { T::zero() })
                .collect();
            pa.accum_grad(&d);
        }
    })
}

fn gelu_val_deriv<T: Real>(x: T) -> (T, T) {
    // tanh approximation: 0.5·x·(1 + tanh(c·(x + 0.044715·x³)))
    let c = T::lit(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = T::lit(0.044715);
    let half = T::lit(0.5);
    let one = T::one();
    let three = T::lit(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let val = half * x * (one + t);
    let du = c * (one + three * k * x * x);
    let deriv = half * (one + t) + half * x * (one - t * t) * du;
    (val, deriv)
}

pub fn gelu<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    let data: Vec<T> = a.data().iter().map(|&x| gelu_val_deriv(x).0).collect();
    let pa = a.clone();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], move |g| {
        if pa.is_tracked() {
            let d: Vec<T> = g
                .iter()
                .zip(pa.data().iter())
                .map(|(&go, &x)| go * gelu_val_deriv(x).1)
                .collect();
            pa.accum_grad(&d);
        }
    })
}

fn sigmoid_scalar<T: Real>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

pub fn sigmoid<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    let data: Vec<T> = a.data().iter().map(|&x| sigmoid_scalar(x)).collect();
    let pa = a.clone();
    let saved = data.clone();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], move |g| {
        if pa.is_tracked() {
            let d: Vec<T> = g
                .iter()
                .zip(saved.iter())
                .map(|(&go, &s)| go * s * (T::one() - s))
                .collect();
            pa.accum_grad(&d);
        }
    })
}

/// Row-wise layer normalization of `x [t×d]` with per-feature gain/bias.
pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let (t, d) = (x.rows(), x.cols());
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::Shape(format!(
            "layer_norm: x {:?}, gamma {:?}, beta {:?}",
            x.shape(),
            gamma.shape(),
            beta.shape()
        )));
    }
    let eps = T::lit(eps);
    let xd = x.data();
    let gd = gamma.data();
    let bd = beta.data();
    let dim = T::lit(d as f64);
    let mut data = vec![T::zero(); t * d];
    let mut xhat = vec![T::zero(); t * d];
    let mut inv_std = vec![T::zero(); t];
    for i in 0..t {
        let row = &xd[i * d..(i + 1) * d];
        let mut mu = T::zero();
        for &v in row {
            mu += v;
        }
        mu = mu / dim;
        let mut var = T::zero();
        for &v in row {
            let c = v - mu;
            var += c * c;
        }
        var = var / dim;
        let inv = T::one() / (var + eps).sqrt();
        inv_std[i] = inv;
        for j in 0..d {
            let h = (row[j] - mu) * inv;
            xhat[i * d + j] = h;
            data[i * d + j] = gd[j] * h + bd[j];
        }
    }
    drop(xd);
    drop(gd);
    drop(bd);
    let (px, pg, pb) = (x.clone(), gamma.clone(), beta.clone());
    Ok(Tensor::from_op(
        vec![t, d],
        data,
        vec![x.clone(), gamma.clone(), beta.clone()],
        move |g| {
            let gd = pg.data();
            if pb.is_tracked() {
                let mut db = vec![T::zero(); d];
                for i in 0..t {
                    for j in 0..d {
                        db[j] += g[i * d + j];
                    }
                }
                pb.accum_grad(&db);
            }
            if pg.is_tracked() {
                let mut dg = vec![T::zero(); d];
                for i in 0..t {
                    for j in 0..d {
                        dg[j] += g[i * d + j] * xhat[i * d + j];
                    }
                }
                pg.accum_grad(&dg);
            }
            if px.is_tracked() {
                let dim = T::lit(d as f64);
                let mut dx = vec![T::zero(); t * d];
                for i in 0..t {
                    let mut m1 = T::zero(); // mean(dy·γ)
                    let mut m2 = T::zero(); // mean(dy·γ·x̂)
                    for j in 0..d {
                        let dyg = g[i * d + j] * gd[j];
                        m1 += dyg;
                        m2 += dyg * xhat[i * d + j];
                    }
                    m1 = m1 / dim;
                    m2 = m2 / dim;
                    for j in 0..d {
                        let dyg = g[i * d + j] * gd[j];
                        dx[i * d + j] = inv_std[i] * (dyg - m1 - xhat[i * d + j] * m2);
                    }
                }
                px.accum_grad(&dx);
            }
        },
    ))
}

/// Gather rows of `table [V×d]` by token id; backward scatter-adds.
pub fn embedding<T: Real>(table: &Tensor<T>, ids: &[usize]) -> Result<Tensor<T>> {
    let (v, d) = (table.rows(), table.cols());
    if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
        return Err(Error::Contract(format!(
            "embedding id {bad} out of range for vocabulary of {v}"
        )));
    }
    let td = table.data();
    let mut data = Vec::with_capacity(ids.len() * d);
    for &i in ids {
        data.extend_from_slice(&td[i * d..(i + 1) * d]);
    }
    drop(td);
    let ids_owned = ids.to_vec();
    let pt = table.clone();
    Ok(Tensor::from_op(vec![ids.len(), d], data, vec![table.clone()], move |g| {
        if pt.is_tracked() {
            let mut dt = vec![T::zero(); v * d];
            for (r, &i) in ids_owned.iter().enumerate() {
                for j in 0..d {
                    dt[i * d + j] += g[r * d + j];
                }
            }
            pt.accum_grad(&dt);
        }
    }))
}

pub fn concat_rows<T: Real>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    if parts.is_empty() {
        return Err(Error::Degenerate("concat_rows of zero tensors".into()));
    }
    let d = parts[0].cols();
    let mut data = Vec::new();
    let mut rows = 0;
    for p in parts {
        if p.shape().len() != 2 || p.cols() != d {
            return Err(Error::Shape(format!(
                "concat_rows: expected [*×{d}], got {:?}",
                p.shape()
            )));
        }
        rows += p.rows();
        data.extend_from_slice(&p.data());
    }
    let owned: Vec<Tensor<T>> = parts.to_vec();
    Ok(Tensor::from_op(vec![rows, d], data, owned.clone(), move |g| {
        let mut off = 0;
        for p in &owned {
            let n = p.rows() * d;
            if p.is_tracked() {
                p.accum_grad(&g[off..off + n]);
            }
            off += n;
        }
    }))
}

pub fn slice_rows<T: Real>(a: &Tensor<T>, start: usize, end: usize) -> Result<Tensor<T>> {
    let (m, d) = (a.rows(), a.cols());
    if start > end || end > m {
        return Err(Error::Contract(format!(
            "slice_rows {start}..{end} out of bounds for {m} rows"
        )));
    }
    let data = a.data()[start * d..end * d].to_vec();
    let pa = a.clone();
    Ok(Tensor::from_op(vec![end - start, d], data, vec![a.clone()], move |g| {
        if pa.is_tracked() {
            let mut dx = vec![T::zero(); m * d];
            dx[start * d..end * d].copy_from_slice(g);
            pa.accum_grad(&dx);
        }
    }))
}

pub fn slice_cols<T: Real>(a: &Tensor<T>, start: usize, end: usize) -> Result<Tensor<T>> {
    let (m, n) = (a.rows(), a.cols());
    if start > end || end > n {
        return Err(Error::Contract(format!(
            "slice_cols {start}..{end} out of bounds for {n} cols"
        )));
    }
    let w = end - start;
    let ad = a.data();
    let mut data = Vec::with_capacity(m * w);
    for i in 0..m {
        data.extend_from_slice(&ad[i * n + start..i * n + end]);
    }
    drop(ad);
    let pa = a.clone();
    Ok(Tensor::from_op(vec![m, w], data, vec![a.clone()], move |g| {
        if pa.is_tracked() {
            let mut dx = vec![T::zero(); m * n];
            for i in 0..m {
                dx[i * n + start..i * n + end].copy_from_slice(&g[i * w..(i + 1) * w]);
            }
            pa.accum_grad(&dx);
        }
    }))
}

pub fn concat_cols<T: Real>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    if parts.is_empty() {
        return Err(Error::Degenerate("concat_cols of zero tensors".into()));
    }
    let m = parts[0].rows();
    let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
    let n: usize = widths.iter().sum();
    for p in parts {
        if p.shape().len() != 2 || p.rows() != m {
            return Err(Error::Shape(format!(
                "concat_cols: expected [{m}×*], got {:?}",
                p.shape()
            )));
        }
    }
    let mut data = vec![T::zero(); m * n];
    let mut off = 0;
    for p in parts {
        let w = p.cols();
        let pd = p.data();
        for i in 0..m {
            data[i * n + off..i * n + off + w].copy_from_slice(&pd[i * w..(i + 1) * w]);
        }
        off += w;
    }
    let owned: Vec<Tensor<T>> = parts.to_vec();
    Ok(Tensor::from_op(vec![m, n], data, owned.clone(), move |g| {
        let mut off = 0;
        for p in &owned {
            let w = p.cols();
            if p.is_tracked() {
                let mut d = vec![T::zero(); m * w];
                for i in 0..m {
                    d[i * w..(i + 1) * w].copy_from_slice(&g[i * n + off..i * n + off + w]);
                }
                p.accum_grad(&d);
            }
            off += w;
        }
    }))
}

pub fn sum<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    let mut s = T::zero();
    for &x in a.data().iter() {
        s += x;
    }
    let n = a.len();
    let pa = a.clone();
    Tensor::from_op(vec![], vec![s], vec![a.clone()], move |g| {
        if pa.is_tracked() {
            pa.accum_grad(&vec![g[0]; n]);
        }
    })
}

pub fn mean<T: Real>(a: &Tensor<T>) -> Tensor<T> {
    let n = a.len();
    scale(&sum(a), 1.0 / n as f64)
}

/// Softmax along `axis` of a rank-1 or rank-2 tensor, stabilized by
/// max-subtraction.
pub fn softmax<T: Real>(a: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let rank = a.shape().len().max(1);
    if axis >= rank {
        return Err(Error::Contract(format!(
            "softmax axis {axis} out of bounds for shape {:?}",
            a.shape()
        )));
    }
    // normalize to a row-slice view: `slices` of stride-contiguous runs
    let (rows, cols, row_major) = match a.shape() {
        [] | [_] => (1usize, a.len(), true),
        [m, n] => {
            if axis == 1 {
                (*m, *n, true)
            } else {
                (*n, *m, false)
            }
        }
        other => {
            return Err(Error::Contract(format!(
                "softmax supports rank <= 2, got {other:?}"
            )))
        }
    };
    let idx = move |slice: usize, k: usize| -> usize {
        if row_major {
            slice * cols + k
        } else {
            k * rows + slice
        }
    };
    let ad = a.data();
    let mut data = vec![T::zero(); a.len()];
    for s in 0..rows {
        let mut mx = ad[idx(s, 0)];
        for k in 1..cols {
            let v = ad[idx(s, k)];
            if v > mx {
                mx = v;
            }
        }
        let mut z = T::zero();
        for k in 0..cols {
            let e = (ad[idx(s, k)] - mx).exp();
            data[idx(s, k)] = e;
            z += e;
        }
        for k in 0..cols {
            data[idx(s, k)] = data[idx(s, k)] / z;
        }
    }
    drop(ad);
    let saved = data.clone();
    let pa = a.clone();
    Ok(Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], move |g| {
        if pa.is_tracked() {
            let mut d = vec![T::zero(); g.len()];
            for s in 0..rows {
                let mut dot = T::zero();
                for k in 0..cols {
                    dot += g[idx(s, k)] * saved[idx(s, k)];
                }
                for k in 0..cols {
                    let y = saved[idx(s, k)];
                    d[idx(s, k)] = y * (g[idx(s, k)] - dot);
                }
            }
            pa.accum_grad(&d);
        }
    }))
}

/// Mean over masked positions of `−log softmax(logits)[target]`.
pub fn cross_entropy_logits<T: Real>(
    logits: &Tensor<T>,
    targets: &[usize],
    mask: &[bool],
) -> Result<Tensor<T>> {
    let (t, v) = (logits.rows(), logits.cols());
    if targets.len() != t || mask.len() != t {
        return Err(Error::Shape(format!(
            "cross_entropy: logits [{t}×{v}], {} targets, {} mask flags",
            targets.len(),
            mask.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&x| x >= v) {
        return Err(Error::Contract(format!("target id {bad} >= vocabulary {v}")));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Degenerate("cross_entropy with all positions masked out".into()));
    }
    let ld = logits.data();
    let mut probs = vec![T::zero(); t * v];
    let mut loss = T::zero();
    for i in 0..t {
        let row = &ld[i * v..(i + 1) * v];
        let mut mx = row[0];
        for &x in row.iter() {
            if x > mx {
                mx = x;
            }
        }
        let mut z = T::zero();
        for j in 0..v {
            let e = (row[j] - mx).exp();
            probs[i * v + j] = e;
            z += e;
        }
        for j in 0..v {
            probs[i * v + j] = probs[i * v + j] / z;
        }
        if mask[i] {
            let lse = z.ln() + mx;
            loss += lse - row[targets[i]];
        }
    }
    drop(ld);
    loss = loss / T::lit(count as f64);
    let pl = logits.clone();
    let targets = targets.to_vec();
    let mask = mask.to_vec();
    Ok(Tensor::from_op(vec![], vec![loss], vec![logits.clone()], move |g| {
        if pl.is_tracked() {
            let go = g[0] / T::lit(count as f64);
            let mut d = vec![T::zero(); t * v];
            for i in 0..t {
                if !mask[i] {
                    continue;
                }
                for j in 0..v {
                    let mut p = probs[i * v + j];
                    if j == targets[i] {
                        p = p - T::one();
                    }
                    d[i * v + j] = go * p;
                }
            }
            pl.accum_grad(&d);
        }
    }))
}

/// Mean binary cross-entropy of `sigmoid(logits)` against hard targets,
/// computed in the numerically stable log-sum-exp form.
pub fn bce_with_logits<T: Real>(logits: &Tensor<T>, targets: &[T]) -> Result<Tensor<T>> {
    let n = logits.len();
    if targets.len() != n {
        return Err(Error::Shape(format!(
            "bce: {n} logits vs {} targets",
            targets.len()
        )));
    }
    let ld = logits.data();
    let mut loss = T::zero();
    for (&x, &y) in ld.iter().zip(targets) {
        // max(x,0) − x·y + ln(1 + e^{−|x|})
        let m = if x > T::zero() { x } else { T::zero() };
        loss += m - x * y + (T::one() + (-x.abs()).exp()).ln();
    }
    drop(ld);
    loss = loss / T::lit(n as f64);
    let pl = logits.clone();
    let targets = targets.to_vec();
    Ok(Tensor::from_op(vec![], vec![loss], vec![logits.clone()], move |g| {
        if pl.is_tracked() {
            let go = g[0] / T::lit(n as f64);
            let d: Vec<T> = pl
                .data()
                .iter()
                .zip(targets.iter())
                .map(|(&x, &y)| go * (sigmoid_scalar(x) - y))
                .collect();
            pl.accum_grad(&d);
        }
    }))
}

/// Row `g` of the output is the arithmetic mean of the input rows listed in
/// `groups[g]`. Gradient splits `1/|g|` back to each member. Backs both
/// superpoint pooling and k-NN neighborhood aggregation.
pub fn group_mean<T: Real>(a: &Tensor<T>, groups: &[Vec<usize>]) -> Result<Tensor<T>> {
    let (n, d) = (a.rows(), a.cols());
    for (gi, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::Contract(format!("group {gi} is empty")));
        }
        if let Some(&bad) = g.iter().find(|&&i| i >= n) {
            return Err(Error::Contract(format!(
                "group {gi} references row {bad} of {n}"
            )));
        }
    }
    let ad = a.data();
    let mut data = vec![T::zero(); groups.len() * d];
    for (gi, g) in groups.iter().enumerate() {
        let inv = T::one() / T::lit(g.len() as f64);
        for &i in g {
            for j in 0..d {
                data[gi * d + j] += ad[i * d + j];
            }
        }
        for j in 0..d {
            data[gi * d + j] *= inv;
        }
    }
    drop(ad);
    let pa = a.clone();
    let groups = groups.to_vec();
    Ok(Tensor::from_op(vec![groups.len(), d], data, vec![a.clone()], move |g| {
        if pa.is_tracked() {
            let mut dx = vec![T::zero(); n * d];
            for (gi, grp) in groups.iter().enumerate() {
                let inv = T::one() / T::lit(grp.len() as f64);
                for &i in grp {
                    for j in 0..d {
                        dx[i * d + j] += g[gi * d + j] * inv;
                    }
                }
            }
            pa.accum_grad(&dx);
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    type T64 = Tensor<f64>;

    #[test]
    fn matmul_identity() {
        let a = T64::from_f64s(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let i = T64::from_f64s(vec![2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let c = matmul(&a, &i).unwrap();
        assert_eq!(c.to_f64s(), a.to_f64s());
    }

    #[test]
    fn matmul_hand_case() {
        let a = T64::from_f64s(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = T64::from_f64s(vec![2, 1], &[5.0, 6.0]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.to_f64s(), vec![17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = T64::zeros(vec![2, 3]);
        let b = T64::zeros(vec![2, 3]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "got: {msg}");
    }

    #[test]
    fn softmax_uniform_slice_is_uniform() {
        let x = T64::from_f64s(vec![2, 4], &[3.0; 8]);
        let y = softmax(&x, 1).unwrap();
        for v in y.to_f64s() {
            assert_relative_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let x = T64::from_f64s(vec![2], &[0.0, 3.0f64.ln()]);
        let y = softmax(&x, 0).unwrap();
        assert_relative_eq!(y.to_f64s()[0], 0.25, epsilon = 1e-14);
        assert_relative_eq!(y.to_f64s()[1], 0.75, epsilon = 1e-14);
    }

    #[test]
    fn softmax_slices_sum_to_one() {
        let mut rng = crate::numerics::rng::SeedRng::new(11);
        let x = T64::rand_uniform(vec![5, 7], 30.0, &mut rng);
        for axis in [0usize, 1] {
            let y = softmax(&x, axis).unwrap();
            let yd = y.to_f64s();
            let (slices, k) = if axis == 1 { (5, 7) } else { (7, 5) };
            for s in 0..slices {
                let total: f64 = (0..k)
                    .map(|j| if axis == 1 { yd[s * 7 + j] } else { yd[j * 7 + s] })
                    .sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_entropy_uniform_is_ln_v() {
        let logits = T64::zeros(vec![3, 8]);
        let loss = cross_entropy_logits(&logits, &[0, 3, 7], &[true, true, true]).unwrap();
        assert_relative_eq!(loss.item(), 8.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn cross_entropy_confident_correct_is_near_zero() {
        let mut data = vec![0.0; 5];
        data[2] = 100.0;
        let logits = T64::from_f64s(vec![1, 5], &data);
        let loss = cross_entropy_logits(&logits, &[2], &[true]).unwrap();
        assert!(loss.item() < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_per_token_oracle() {
        let mut rng = crate::numerics::rng::SeedRng::new(42);
        let logits = T64::rand_uniform(vec![3, 5], 2.0, &mut rng);
        let targets = [4usize, 0, 2];
        let mask = [true, true, true];
        let loss = cross_entropy_logits(&logits, &targets, &mask).unwrap();
        // independent summation of −log p per position
        let ld = logits.to_f64s();
        let mut expect = 0.0;
        for i in 0..3 {
            let row = &ld[i * 5..(i + 1) * 5];
            let z: f64 = row.iter().map(|x| x.exp()).sum();
            expect += -(row[targets[i]].exp() / z).ln();
        }
        expect /= 3.0;
        assert_relative_eq!(loss.item(), expect, epsilon = 1e-12);
    }

    #[test]
    fn cross_entropy_all_masked_is_degenerate() {
        let logits = T64::zeros(vec![2, 4]);
        let err = cross_entropy_logits(&logits, &[0, 1], &[false, false]).unwrap_err();
        assert!(matches!(err, crate::error::Error::Degenerate(_)));
    }

    #[test]
    fn bce_zero_logits_is_ln2() {
        let logits = T64::zeros(vec![4]);
        let loss = bce_with_logits(&logits, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(loss.item(), 2.0f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn group_mean_hand_case() {
        let x = T64::from_f64s(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let y = group_mean(&x, &[vec![0, 1]]).unwrap();
        assert_eq!(y.to_f64s(), vec![2.0, 3.0]);
    }

    #[test]
    fn group_mean_singletons_is_identity() {
        let x = T64::from_f64s(vec![3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = group_mean(&x, &[vec![0], vec![1], vec![2]]).unwrap();
        assert_eq!(y.to_f64s(), x.to_f64s());
    }

    #[test]
    fn embedding_gathers_rows() {
        let t = T64::from_f64s(vec![3, 2], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let e = embedding(&t, &[2, 0]).unwrap();
        assert_eq!(e.to_f64s(), vec![4.0, 5.0, 0.0, 1.0]);
    }

    #[test]
    fn slice_concat_round_trip() {
        let x = T64::from_f64s(vec![2, 4], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let a = slice_cols(&x, 0, 2).unwrap();
        let b = slice_cols(&x, 2, 4).unwrap();
        let y = concat_cols(&[a, b]).unwrap();
        assert_eq!(y.to_f64s(), x.to_f64s());
    }
}
