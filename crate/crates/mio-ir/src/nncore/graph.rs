//! Tape-based reverse-mode autodiff over dense f64 tensors.
//!
//! Nodes are appended in execution order, so the tape itself is a
//! topological order; `backward` walks it in reverse and accumulates
//! gradients additively on fan-out.

use crate::error::{Error, Result};

use super::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize },
    LeakyRelu { x: NodeId, slope: f64 },
    Dense { x: NodeId, w: NodeId, b: NodeId },
    GlobalAvgPool { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    MeanReduce { x: NodeId },
    ChannelAffine { f: NodeId, s: NodeId, b: NodeId },
    SliceCols { x: NodeId, start: usize, len: usize },
    L1Loss { pred: NodeId, target: NodeId },
    SoftmaxCe { logits: NodeId, labels: Vec<usize>, softmax: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn pad_plane(src: &[f64], h: usize, w: usize, p: usize, dst: &mut [f64]) {
    let wp = w + 2 * p;
    for r in 0..h + 2 * p {
        let sr = (r as isize - p as isize).clamp(0, h as isize - 1) as usize;
        for c in 0..w + 2 * p {
            let sc = (c as isize - p as isize).clamp(0, w as isize - 1) as usize;
            dst[r * wp + c] = src[sr * w + sc];
        }
    }
}

/// Adjoint of replicate padding: fold padded-grid gradients back onto the
/// clamped source pixels.
fn fold_pad(gpad: &[f64], h: usize, w: usize, p: usize, gsrc: &mut [f64]) {
    let wp = w + 2 * p;
    for r in 0..h + 2 * p {
        let sr = (r as isize - p as isize).clamp(0, h as isize - 1) as usize;
        for c in 0..w + 2 * p {
            let sc = (c as isize - p as isize).clamp(0, w as isize - 1) as usize;
            gsrc[sr * w + sc] += gpad[r * wp + c];
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id].value.shape()
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        if stride != 1 && stride != 2 {
            return Err(Error::invalid(format!("conv2d stride must be 1 or 2, got {stride}")));
        }
        let (n, cin, h, wd) = self.nodes[x].value.dims4()?;
        let (cout, cin_w, k, k2) = self.nodes[w].value.dims4()?;
        if k != k2 || k % 2 == 0 {
            return Err(Error::shape(format!("conv2d kernel must be square and odd, got {k}x{k2}")));
        }
        if cin != cin_w {
            return Err(Error::shape(format!(
                "conv2d node: input has {cin} channels, weight expects {cin_w}"
            )));
        }
        if self.shape(b) != [cout] {
            return Err(Error::shape(format!(
                "conv2d node: bias shape {:?} does not match {cout} output channels",
                self.shape(b)
            )));
        }
        let p = k / 2;
        let (hp, wp) = (h + 2 * p, wd + 2 * p);
        let ho = (h + 2 * p - k) / stride + 1;
        let wo = (wd + 2 * p - k) / stride + 1;
        let xv = self.nodes[x].value.data();
        let wv = self.nodes[w].value.data();
        let bv = self.nodes[b].value.data();
        let mut out = vec![0.0; n * cout * ho * wo];
        let mut padded = vec![0.0; cin * hp * wp];
        for ni in 0..n {
            for ic in 0..cin {
                let plane = &xv[(ni * cin + ic) * h * wd..(ni * cin + ic + 1) * h * wd];
                pad_plane(plane, h, wd, p, &mut padded[ic * hp * wp..(ic + 1) * hp * wp]);
            }
            for oc in 0..cout {
                let oplane = &mut out[(ni * cout + oc) * ho * wo..(ni * cout + oc + 1) * ho * wo];
                oplane.fill(bv[oc]);
                for ic in 0..cin {
                    let ppl = &padded[ic * hp * wp..(ic + 1) * hp * wp];
                    for ky in 0..k {
                        for kx in 0..k {
                            let wval = wv[((oc * cin + ic) * k + ky) * k + kx];
                            for oy in 0..ho {
                                let row = &ppl[(oy * stride + ky) * wp + kx..];
                                let orow = &mut oplane[oy * wo..(oy + 1) * wo];
                                if stride == 1 {
                                    for ox in 0..wo {
                                        orow[ox] += wval * row[ox];
                                    }
                                } else {
                                    for ox in 0..wo {
                                        orow[ox] += wval * row[ox * stride];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, cout, ho, wo], out)?;
        Ok(self.push(value, Op::Conv2d { x, w, b, stride }))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let value = self.nodes[x]
            .value
            .data()
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect::<Vec<_>>();
        let t = Tensor::new(self.shape(x).to_vec(), value).expect("same shape");
        self.push(t, Op::LeakyRelu { x, slope })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.leaky_relu(x, 0.0)
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.nodes[x].value.dims2()?;
        let (out_dim, k_w) = self.nodes[w].value.dims2()?;
        if k != k_w {
            return Err(Error::shape(format!(
                "dense node: input dim {k} does not match weight dim {k_w}"
            )));
        }
        if self.shape(b) != [out_dim] {
            return Err(Error::shape(format!(
                "dense node: bias shape {:?} does not match {out_dim} outputs",
                self.shape(b)
            )));
        }
        let xv = self.nodes[x].value.data();
        let wv = self.nodes[w].value.data();
        let bv = self.nodes[b].value.data();
        let mut out = vec![0.0; n * out_dim];
        for ni in 0..n {
            for o in 0..out_dim {
                let mut acc = bv[o];
                let wrow = &wv[o * k..(o + 1) * k];
                let xrow = &xv[ni * k..(ni + 1) * k];
                for i in 0..k {
                    acc += wrow[i] * xrow[i];
                }
                out[ni * out_dim + o] = acc;
            }
        }
        let value = Tensor::new(vec![n, out_dim], out)?;
        Ok(self.push(value, Op::Dense { x, w, b }))
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = self.nodes[x].value.dims4()?;
        let xv = self.nodes[x].value.data();
        let hw = (h * w) as f64;
        let mut out = vec![0.0; n * c];
        for i in 0..n * c {
            out[i] = xv[i * h * w..(i + 1) * h * w].iter().sum::<f64>() / hw;
        }
        let value = Tensor::new(vec![n, c], out)?;
        Ok(self.push(value, Op::GlobalAvgPool { x }))
    }

    fn broadcast_check(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb {
            return Ok(());
        }
        if sa.len() == 4 && sb.len() == 1 && sb[0] == sa[1] {
            return Ok(());
        }
        Err(Error::shape(format!("{what} node: shapes {sa:?} and {sb:?} are not broadcastable")))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast_check(a, b, "add")?;
        let out = self.broadcast_apply(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.broadcast_check(a, b, "mul")?;
        let out = self.broadcast_apply(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul { a, b }))
    }

    fn broadcast_apply(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let av = self.nodes[a].value.data();
        let bv = self.nodes[b].value.data();
        let sa = self.shape(a).to_vec();
        if self.shape(b) == sa.as_slice() {
            let data = av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(sa, data).expect("same shape")
        } else {
            // b is [C], a is [N,C,H,W].
            let (n, c, h, w) = (sa[0], sa[1], sa[2], sa[3]);
            let mut data = vec![0.0; av.len()];
            for ni in 0..n {
                for ci in 0..c {
                    let base = (ni * c + ci) * h * w;
                    for i in 0..h * w {
                        data[base + i] = f(av[base + i], bv[ci]);
                    }
                }
            }
            Tensor::new(sa, data).expect("same shape")
        }
    }

    pub fn mean_reduce(&mut self, x: NodeId) -> NodeId {
        let xv = self.nodes[x].value.data();
        let mean = xv.iter().sum::<f64>() / xv.len() as f64;
        self.push(Tensor::scalar(mean), Op::MeanReduce { x })
    }

    /// out[n,c,h,w] = f[n,c,h,w] * s[.,c] + b[.,c]; s and b are [C] or [N,C].
    pub fn channel_affine(&mut self, f: NodeId, s: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = self.nodes[f].value.dims4()?;
        for (name, id) in [("scale", s), ("bias", b)] {
            let sh = self.shape(id);
            let ok = sh == [c] || sh == [n, c];
            if !ok {
                return Err(Error::shape(format!(
                    "channel_affine node: {name} shape {sh:?} must be [{c}] or [{n}, {c}]"
                )));
            }
        }
        let fv = self.nodes[f].value.data();
        let sv = self.nodes[s].value.data();
        let bv = self.nodes[b].value.data();
        let s_per_n = self.shape(s).len() == 2;
        let b_per_n = self.shape(b).len() == 2;
        let mut out = vec![0.0; fv.len()];
        for ni in 0..n {
            for ci in 0..c {
                let sval = sv[if s_per_n { ni * c + ci } else { ci }];
                let bval = bv[if b_per_n { ni * c + ci } else { ci }];
                let base = (ni * c + ci) * h * w;
                for i in 0..h * w {
                    out[base + i] = fv[base + i] * sval + bval;
                }
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(value, Op::ChannelAffine { f, s, b }))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (n, k) = self.nodes[x].value.dims2()?;
        if start + len > k {
            return Err(Error::shape(format!(
                "slice_cols node: columns {start}..{} out of {k}",
                start + len
            )));
        }
        let xv = self.nodes[x].value.data();
        let mut out = vec![0.0; n * len];
        for ni in 0..n {
            out[ni * len..(ni + 1) * len]
                .copy_from_slice(&xv[ni * k + start..ni * k + start + len]);
        }
        let value = Tensor::new(vec![n, len], out)?;
        Ok(self.push(value, Op::SliceCols { x, start, len }))
    }

    pub fn l1_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::shape(format!(
                "l1_loss node: shapes {:?} vs {:?}",
                self.shape(pred),
                self.shape(target)
            )));
        }
        let pv = self.nodes[pred].value.data();
        let tv = self.nodes[target].value.data();
        let loss = pv.iter().zip(tv).map(|(&a, &b)| (a - b).abs()).sum::<f64>() / pv.len() as f64;
        Ok(self.push(Tensor::scalar(loss), Op::L1Loss { pred, target }))
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let (n, k) = self.nodes[logits].value.dims2()?;
        if labels.len() != n {
            return Err(Error::shape(format!(
                "softmax_cross_entropy node: {n} rows but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
        }
        let lv = self.nodes[logits].value.data();
        let mut softmax = vec![0.0; n * k];
        let mut loss = 0.0;
        for ni in 0..n {
            let row = &lv[ni * k..(ni + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for i in 0..k {
                let e = (row[i] - max).exp();
                softmax[ni * k + i] = e;
                denom += e;
            }
            for i in 0..k {
                softmax[ni * k + i] /= denom;
            }
            loss -= (row[labels[ni]] - max - denom.ln()).min(0.0);
        }
        loss /= n as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe { logits, labels: labels.to_vec(), softmax },
        ))
    }

    /// Gradients of a scalar node w.r.t. every node on the tape.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<Option<Tensor>>> {
        if self.nodes[loss].value.numel() != 1 {
            return Err(Error::invalid("backward requires a scalar loss node"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Tensor::scalar(1.0));
        for id in (0..=loss).rev() {
            let Some(gout) = grads[id].take() else { continue };
            self.backprop_node(id, &gout, &mut grads)?;
            grads[id] = Some(gout);
        }
        Ok(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
        match &mut grads[id] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn backprop_node(
        &self,
        id: NodeId,
        gout: &Tensor,
        grads: &mut Vec<Option<Tensor>>,
    ) -> Result<()> {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, stride } => {
                self.backprop_conv2d(*x, *w, *b, *stride, gout, grads)?;
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.nodes[*x].value.data();
                let data = xv
                    .iter()
                    .zip(gout.data())
                    .map(|(&v, &g)| if v >= 0.0 { g } else { slope * g })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(self.shape(*x).to_vec(), data)?);
            }
            Op::Dense { x, w, b } => {
                let (n, k) = self.nodes[*x].value.dims2()?;
                let (out_dim, _) = self.nodes[*w].value.dims2()?;
                let xv = self.nodes[*x].value.data();
                let wv = self.nodes[*w].value.data();
                let gv = gout.data();
                let mut gx = vec![0.0; n * k];
                let mut gw = vec![0.0; out_dim * k];
                let mut gb = vec![0.0; out_dim];
                for ni in 0..n {
                    for o in 0..out_dim {
                        let g = gv[ni * out_dim + o];
                        gb[o] += g;
                        for i in 0..k {
                            gx[ni * k + i] += g * wv[o * k + i];
                            gw[o * k + i] += g * xv[ni * k + i];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![n, k], gx)?);
                self.accumulate(grads, *w, Tensor::new(vec![out_dim, k], gw)?);
                self.accumulate(grads, *b, Tensor::new(vec![out_dim], gb)?);
            }
            Op::GlobalAvgPool { x } => {
                let (n, c, h, w) = self.nodes[*x].value.dims4()?;
                let gv = gout.data();
                let hw = (h * w) as f64;
                let mut gx = vec![0.0; n * c * h * w];
                for i in 0..n * c {
                    let g = gv[i] / hw;
                    for j in 0..h * w {
                        gx[i * h * w + j] = g;
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![n, c, h, w], gx)?);
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, gout.clone());
                self.accumulate(grads, *b, self.reduce_to_shape(gout, *b));
            }
            Op::Mul { a, b } => {
                let ga = self.broadcast_grad_times(gout, *b, *a);
                let prod = {
                    let av = self.nodes[*a].value.data();
                    let mut d = gout.clone();
                    for (g, &x) in d.data_mut().iter_mut().zip(av) {
                        *g *= x;
                    }
                    d
                };
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, self.reduce_to_shape(&prod, *b));
            }
            Op::MeanReduce { x } => {
                let numel = self.nodes[*x].value.numel();
                let g = gout.item() / numel as f64;
                self.accumulate(
                    grads,
                    *x,
                    Tensor::filled(self.shape(*x).to_vec(), g),
                );
            }
            Op::ChannelAffine { f, s, b } => {
                let (n, c, h, w) = self.nodes[*f].value.dims4()?;
                let fv = self.nodes[*f].value.data();
                let sv = self.nodes[*s].value.data();
                let gv = gout.data();
                let s_per_n = self.shape(*s).len() == 2;
                let b_per_n = self.shape(*b).len() == 2;
                let mut gf = vec![0.0; fv.len()];
                let mut gs = vec![0.0; sv.len()];
                let mut gb = vec![0.0; self.nodes[*b].value.numel()];
                for ni in 0..n {
                    for ci in 0..c {
                        let sidx = if s_per_n { ni * c + ci } else { ci };
                        let bidx = if b_per_n { ni * c + ci } else { ci };
                        let sval = sv[sidx];
                        let base = (ni * c + ci) * h * w;
                        for i in 0..h * w {
                            let g = gv[base + i];
                            gf[base + i] = g * sval;
                            gs[sidx] += g * fv[base + i];
                            gb[bidx] += g;
                        }
                    }
                }
                self.accumulate(grads, *f, Tensor::new(vec![n, c, h, w], gf)?);
                self.accumulate(grads, *s, Tensor::new(self.shape(*s).to_vec(), gs)?);
                self.accumulate(grads, *b, Tensor::new(self.shape(*b).to_vec(), gb)?);
            }
            Op::SliceCols { x, start, len } => {
                let (n, k) = self.nodes[*x].value.dims2()?;
                let gv = gout.data();
                let mut gx = vec![0.0; n * k];
                for ni in 0..n {
                    gx[ni * k + start..ni * k + start + len]
                        .copy_from_slice(&gv[ni * len..(ni + 1) * len]);
                }
                self.accumulate(grads, *x, Tensor::new(vec![n, k], gx)?);
            }
            Op::L1Loss { pred, target } => {
                let pv = self.nodes[*pred].value.data();
                let tv = self.nodes[*target].value.data();
                let g = gout.item() / pv.len() as f64;
                // Subgradient at exact ties is 0.
                let gp: Vec<f64> = pv
                    .iter()
                    .zip(tv)
                    .map(|(&a, &b)| {
                        if a > b {
                            g
                        } else if a < b {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let gt: Vec<f64> = gp.iter().map(|&v| -v).collect();
                self.accumulate(grads, *pred, Tensor::new(self.shape(*pred).to_vec(), gp)?);
                self.accumulate(grads, *target, Tensor::new(self.shape(*target).to_vec(), gt)?);
            }
            Op::SoftmaxCe { logits, labels, softmax } => {
                let (n, k) = self.nodes[*logits].value.dims2()?;
                let g = gout.item() / n as f64;
                let mut gl = vec![0.0; n * k];
                for ni in 0..n {
                    for i in 0..k {
                        let onehot = if labels[ni] == i { 1.0 } else { 0.0 };
                        gl[ni * k + i] = g * (softmax[ni * k + i] - onehot);
                    }
                }
                self.accumulate(grads, *logits, Tensor::new(vec![n, k], gl)?);
            }
        }
        Ok(())
    }

    /// grad for `a` in a broadcast mul: gout * value(b) expanded to a's shape.
    fn broadcast_grad_times(&self, gout: &Tensor, b: NodeId, a: NodeId) -> Tensor {
        let bv = self.nodes[b].value.data();
        let sa = self.shape(a).to_vec();
        if self.shape(b) == sa.as_slice() {
            let data = gout.data().iter().zip(bv).map(|(&g, &v)| g * v).collect();
            Tensor::new(sa, data).expect("same shape")
        } else {
            let (n, c, h, w) = (sa[0], sa[1], sa[2], sa[3]);
            let mut data = vec![0.0; gout.numel()];
            for ni in 0..n {
                for ci in 0..c {
                    let base = (ni * c + ci) * h * w;
                    for i in 0..h * w {
                        data[base + i] = gout.data()[base + i] * bv[ci];
                    }
                }
            }
            Tensor::new(sa, data).expect("same shape")
        }
    }

    /// Sum a full-shape gradient down to the (possibly broadcast) shape of `id`.
    fn reduce_to_shape(&self, g: &Tensor, id: NodeId) -> Tensor {
        let target = self.shape(id);
        if g.shape() == target {
            return g.clone();
        }
        // g is [N,C,H,W], target [C].
        let (n, c, h, w) = (g.shape()[0], g.shape()[1], g.shape()[2], g.shape()[3]);
        let mut out = vec![0.0; c];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * h * w;
                out[ci] += g.data()[base..base + h * w].iter().sum::<f64>();
            }
        }
        Tensor::new(vec![c], out).expect("channel shape")
    }

    fn backprop_conv2d(
        &self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        gout: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let (n, cin, h, wd) = self.nodes[x].value.dims4()?;
        let (cout, _, k, _) = self.nodes[w].value.dims4()?;
        let p = k / 2;
        let (hp, wp) = (h + 2 * p, wd + 2 * p);
        let (_, _, ho, wo) = gout.dims4()?;
        let xv = self.nodes[x].value.data();
        let wv = self.nodes[w].value.data();
        let gv = gout.data();

        let mut gx = vec![0.0; n * cin * h * wd];
        let mut gw = vec![0.0; cout * cin * k * k];
        let mut gb = vec![0.0; cout];
        let mut padded = vec![0.0; cin * hp * wp];
        let mut gpad = vec![0.0; cin * hp * wp];
        for ni in 0..n {
            for ic in 0..cin {
                let plane = &xv[(ni * cin + ic) * h * wd..(ni * cin + ic + 1) * h * wd];
                pad_plane(plane, h, wd, p, &mut padded[ic * hp * wp..(ic + 1) * hp * wp]);
            }
            gpad.fill(0.0);
            for oc in 0..cout {
                let gplane = &gv[(ni * cout + oc) * ho * wo..(ni * cout + oc + 1) * ho * wo];
                gb[oc] += gplane.iter().sum::<f64>();
                for ic in 0..cin {
                    let ppl = &padded[ic * hp * wp..(ic + 1) * hp * wp];
                    let gpl = &mut gpad[ic * hp * wp..(ic + 1) * hp * wp];
                    for ky in 0..k {
                        for kx in 0..k {
                            let widx = ((oc * cin + ic) * k + ky) * k + kx;
                            let wval = wv[widx];
                            let mut wacc = 0.0;
                            for oy in 0..ho {
                                let base = (oy * stride + ky) * wp + kx;
                                let grow = &gplane[oy * wo..(oy + 1) * wo];
                                if stride == 1 {
                                    for ox in 0..wo {
                                        let g = grow[ox];
                                        wacc += g * ppl[base + ox];
                                        gpl[base + ox] += g * wval;
                                    }
                                } else {
                                    for ox in 0..wo {
                                        let g = grow[ox];
                                        wacc += g * ppl[base + ox * stride];
                                        gpl[base + ox * stride] += g * wval;
                                    }
                                }
                            }
                            gw[widx] += wacc;
                        }
                    }
                }
            }
            for ic in 0..cin {
                fold_pad(
                    &gpad[ic * hp * wp..(ic + 1) * hp * wp],
                    h,
                    wd,
                    p,
                    &mut gx[(ni * cin + ic) * h * wd..(ni * cin + ic + 1) * h * wd],
                );
            }
        }
        self.accumulate(grads, x, Tensor::new(vec![n, cin, h, wd], gx)?);
        self.accumulate(grads, w, Tensor::new(vec![cout, cin, k, k], gw)?);
        self.accumulate(grads, b, Tensor::new(vec![cout], gb)?);
        Ok(())
    }
}
