//! Forward passes and hand-written reverse-mode gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::activation::sigmoid;
use crate::error::NetError;
use crate::params::NetParams;
use crate::spec::{Activation, Arch, NetSpec};

struct Params<'a> {
    v: &'a [f64],
}

impl<'a> Params<'a> {
    fn take(&mut self, n: usize) -> &'a [f64] {
        let (head, tail) = self.v.split_at(n);
        self.v = tail;
        head
    }
}

struct Grads<'a> {
    v: &'a mut [f64],
}

impl<'a> Grads<'a> {
    fn take(&mut self, n: usize) -> &'a mut [f64] {
        let (head, tail) = std::mem::take(&mut self.v).split_at_mut(n);
        self.v = tail;
        head
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = W x + b` with `W` row-major `out.len() × x.len()`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = b[r] + dot(&w[r * n..(r + 1) * n], x);
    }
}

/// `out += W x`.
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += dot(&w[r * n..(r + 1) * n], x);
    }
}

/// Accumulates `dW += dout xᵀ` and, if given, `dx += Wᵀ dout`.
fn outer_back(w: &[f64], x: &[f64], dout: &[f64], dw: &mut [f64], dx: Option<&mut [f64]>) {
    let n = x.len();
    for (r, &g) in dout.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (d, xi) in dw[r * n..(r + 1) * n].iter_mut().zip(x) {
            *d += g * xi;
        }
    }
    if let Some(dx) = dx {
        for (r, &g) in dout.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, wi) in dx.iter_mut().zip(&w[r * n..(r + 1) * n]) {
                *d += g * wi;
            }
        }
    }
}

fn add_to(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Inverted-dropout mask: entries are 0 or `1/(1-p)`.
fn dropout_mask(n: usize, p: f64, rng: &mut Option<&mut ChaCha8Rng>) -> Option<Vec<f64>> {
    let rng = rng.as_deref_mut()?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some((0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect())
}

fn apply_mask(v: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (x, k) in v.iter_mut().zip(m) {
            *x *= k;
        }
    }
}

struct HeadCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
    hidden: Vec<f64>,
}

/// `W_ξ · dropout(φ(W_h v + b_h)) + b_ξ`.
fn head_forward(
    p: &mut Params,
    spec: &NetSpec,
    n_in: usize,
    n_out: usize,
    v: Vec<f64>,
    rng: &mut Option<&mut ChaCha8Rng>,
    out: &mut [f64],
) -> HeadCache {
    let z = spec.n_z;
    let w_h = p.take(z * n_in);
    let b_h = p.take(z);
    let w_xi = p.take(n_out * z);
    let b_xi = p.take(n_out);
    let mut pre = vec![0.0; z];
    affine(w_h, b_h, &v, &mut pre);
    let mut hidden: Vec<f64> = pre.iter().map(|&x| spec.activation.apply(x)).collect();
    let mask = dropout_mask(z, spec.dropout, rng);
    apply_mask(&mut hidden, &mask);
    affine(w_xi, b_xi, &hidden, out);
    HeadCache {
        input: v,
        pre,
        mask,
        hidden,
    }
}

/// Backward through the head; accumulates into `dv` (length of the input).
fn head_backward(
    p: &mut Params,
    g: &mut Grads,
    act: Activation,
    n_in: usize,
    n_out: usize,
    z: usize,
    c: &HeadCache,
    dout: &[f64],
    dv: &mut [f64],
) {
    let w_h = p.take(z * n_in);
    let _b_h = p.take(z);
    let w_xi = p.take(n_out * z);
    let _b_xi = p.take(n_out);
    let dw_h = g.take(z * n_in);
    let db_h = g.take(z);
    let dw_xi = g.take(n_out * z);
    let db_xi = g.take(n_out);
    add_to(db_xi, dout);
    let mut dh = vec![0.0; z];
    outer_back(w_xi, &c.hidden, dout, dw_xi, Some(&mut dh));
    apply_mask(&mut dh, &c.mask);
    for (d, &x) in dh.iter_mut().zip(&c.pre) {
        *d *= act.derivative(x);
    }
    add_to(db_h, &dh);
    outer_back(w_h, &c.input, &dh, dw_h, Some(dv));
}

struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pres: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

struct ConvBlockCache {
    input: Vec<f64>,
    c_in: usize,
    len_in: usize,
    len_conv: usize,
    pooled_pre: Vec<f64>,
    argmax: Vec<usize>,
}

struct CnnCache {
    blocks: Vec<ConvBlockCache>,
    head: HeadCache,
}

struct RnnLayerCache {
    xs: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
}

struct LstmLayerCache {
    xs: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    gates: Vec<Vec<f64>>,
    tanh_c: Vec<Vec<f64>>,
}

struct RecurrentCache {
    rnn: Vec<RnnLayerCache>,
    lstm: Vec<LstmLayerCache>,
    heads: Vec<HeadCache>,
}

enum Cache {
    Mlp(MlpCache),
    Cnn(CnnCache),
    Recurrent(RecurrentCache),
}

fn check_input(spec: &NetSpec, params: &NetParams, x: &[f64]) -> Result<(), NetError> {
    if x.len() != spec.input_len() {
        return Err(NetError::Shape(format!(
            "input has {} values, {} expects {}",
            x.len(),
            spec.label(),
            spec.input_len()
        )));
    }
    if params.values.len() != spec.param_count() {
        return Err(NetError::Shape(format!(
            "{} parameters for a spec needing {}",
            params.values.len(),
            spec.param_count()
        )));
    }
    Ok(())
}

/// Evaluation-mode forward pass (dropout off).
pub fn forward(spec: &NetSpec, params: &NetParams, x: &[f64]) -> Result<Vec<f64>, NetError> {
    check_input(spec, params, x)?;
    Ok(forward_cached(spec, params, x, None).0)
}

/// Forward pass keeping intermediates. Dropout is active iff `rng` is given.
fn forward_cached(spec: &NetSpec, params: &NetParams, x: &[f64], mut rng: Option<&mut ChaCha8Rng>) -> (Vec<f64>, Cache) {
    let mut p = Params { v: &params.values };
    let mut out = vec![0.0; spec.output_len()];
    let cache = match spec.arch {
        Arch::Mlp => {
            let z = spec.n_z;
            let mut a = x.to_vec();
            let mut c = MlpCache {
                inputs: Vec::with_capacity(spec.n_layer),
                pres: Vec::with_capacity(spec.n_layer),
                masks: Vec::with_capacity(spec.n_layer),
            };
            for _ in 0..spec.n_layer {
                let w = p.take(z * a.len());
                let b = p.take(z);
                let mut pre = vec![0.0; z];
                affine(w, b, &a, &mut pre);
                let mut h: Vec<f64> = pre.iter().map(|&v| spec.activation.apply(v)).collect();
                let mask = dropout_mask(z, spec.dropout, &mut rng);
                apply_mask(&mut h, &mask);
                c.inputs.push(std::mem::replace(&mut a, h));
                c.pres.push(pre);
                c.masks.push(mask);
            }
            let w = p.take(spec.n_k_xi * z);
            let b = p.take(spec.n_k_xi);
            affine(w, b, &a, &mut out);
            c.inputs.push(a);
            Cache::Mlp(c)
        }
        Arch::Cnn => {
            let f = spec.n_filter;
            let c_out = spec.n_channel;
            let mut input = x.to_vec();
            let mut c_in = spec.n_psi;
            let mut len_in = spec.n_k_psi;
            let mut blocks = Vec::with_capacity(spec.n_layer);
            for _ in 0..spec.n_layer {
                let k = p.take(c_out * c_in * f);
                let b = p.take(c_out);
                let len_conv = len_in + 1 - f;
                let mut conv = vec![0.0; c_out * len_conv];
                for o in 0..c_out {
                    let ko = &k[o * c_in * f..(o + 1) * c_in * f];
                    for t in 0..len_conv {
                        let mut s = b[o];
                        for ci in 0..c_in {
                            s += dot(&ko[ci * f..(ci + 1) * f], &input[ci * len_in + t..ci * len_in + t + f]);
                        }
                        conv[o * len_conv + t] = s;
                    }
                }
                let (pooled_pre, argmax, len_out) = if spec.n_pool > 0 {
                    let pl = spec.n_pool;
                    let lo = len_conv / pl;
                    let mut pooled = vec![0.0; c_out * lo];
                    let mut idx = vec![0; c_out * lo];
                    for o in 0..c_out {
                        for j in 0..lo {
                            let mut best = j * pl;
                            for t in j * pl..(j + 1) * pl {
                                if conv[o * len_conv + t] > conv[o * len_conv + best] {
                                    best = t;
                                }
                            }
                            pooled[o * lo + j] = conv[o * len_conv + best];
                            idx[o * lo + j] = best;
                        }
                    }
                    (pooled, idx, lo)
                } else {
                    let idx = (0..c_out * len_conv).map(|i| i % len_conv).collect();
                    (conv, idx, len_conv)
                };
                let act: Vec<f64> = pooled_pre.iter().map(|&v| spec.activation.apply(v)).collect();
                blocks.push(ConvBlockCache {
                    input: std::mem::replace(&mut input, act),
                    c_in,
                    len_in,
                    len_conv,
                    pooled_pre,
                    argmax,
                });
                c_in = c_out;
                len_in = len_out;
            }
            let n_flat = input.len();
            let head = head_forward(&mut p, spec, n_flat, spec.n_k_xi, input, &mut rng, &mut out);
            Cache::Cnn(CnnCache { blocks, head })
        }
        Arch::Rnn | Arch::Lstm => {
            let z = spec.n_z;
            let steps = spec.n_steps();
            let mut seq: Vec<Vec<f64>> = x.chunks(spec.n_psi).map(|c| c.to_vec()).collect();
            let mut rc = RecurrentCache {
                rnn: Vec::new(),
                lstm: Vec::new(),
                heads: Vec::with_capacity(spec.n_k_xi),
            };
            for _ in 0..spec.n_layer {
                let n_in = seq[0].len();
                if spec.arch == Arch::Rnn {
                    let w_ih = p.take(z * n_in);
                    let w_hh = p.take(z * z);
                    let b_ih = p.take(z);
                    let b_hh = p.take(z);
                    let mut hs = Vec::with_capacity(steps + 1);
                    hs.push(vec![0.0; z]);
                    for xt in &seq {
                        let mut pre = vec![0.0; z];
                        affine(w_ih, b_ih, xt, &mut pre);
                        add_to(&mut pre, b_hh);
                        matvec_add(w_hh, hs.last().unwrap(), &mut pre);
                        hs.push(pre.iter().map(|v| v.tanh()).collect());
                    }
                    let next = hs[1..].to_vec();
                    rc.rnn.push(RnnLayerCache {
                        xs: std::mem::replace(&mut seq, next),
                        hs,
                    });
                } else {
                    let w_ih = p.take(4 * z * n_in);
                    let w_hh = p.take(4 * z * z);
                    let b_ih = p.take(4 * z);
                    let b_hh = p.take(4 * z);
                    let mut hs = Vec::with_capacity(steps + 1);
                    let mut cs = Vec::with_capacity(steps + 1);
                    let mut gates = Vec::with_capacity(steps);
                    let mut tanh_c = Vec::with_capacity(steps);
                    hs.push(vec![0.0; z]);
                    cs.push(vec![0.0; z]);
                    for xt in &seq {
                        let mut g = vec![0.0; 4 * z];
                        affine(w_ih, b_ih, xt, &mut g);
                        add_to(&mut g, b_hh);
                        matvec_add(w_hh, hs.last().unwrap(), &mut g);
                        for j in 0..z {
                            g[j] = sigmoid(g[j]);
                            g[z + j] = sigmoid(g[z + j]);
                            g[2 * z + j] = g[2 * z + j].tanh();
                            g[3 * z + j] = sigmoid(g[3 * z + j]);
                        }
                        let c_prev = cs.last().unwrap();
                        let c: Vec<f64> = (0..z).map(|j| g[z + j] * c_prev[j] + g[j] * g[2 * z + j]).collect();
                        let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
                        hs.push((0..z).map(|j| g[3 * z + j] * tc[j]).collect());
                        cs.push(c);
                        gates.push(g);
                        tanh_c.push(tc);
                    }
                    let next = hs[1..].to_vec();
                    rc.lstm.push(LstmLayerCache {
                        xs: std::mem::replace(&mut seq, next),
                        hs,
                        cs,
                        gates,
                        tanh_c,
                    });
                }
            }
            let head_params = p.v;
            for (j, o) in out.iter_mut().enumerate() {
                let mut hp = Params { v: head_params };
                let mut one = [0.0];
                let h = seq[spec.n_k_psi + j].clone();
                rc.heads.push(head_forward(&mut hp, spec, z, 1, h, &mut rng, &mut one));
                *o = one[0];
            }
            Cache::Recurrent(rc)
        }
    };
    (out, cache)
}

/// Accumulates parameter gradients of `doutᵀ · output` into `grad`.
fn backward_cached(spec: &NetSpec, params: &NetParams, cache: &Cache, dout: &[f64], grad: &mut [f64]) {
    let act = spec.activation;
    let z = spec.n_z;
    match cache {
        Cache::Mlp(c) => {
            // walk blocks back to front using precomputed offsets
            let layout = spec.layout();
            let nb = layout.blocks.len();
            let (wo, bo) = (&layout.blocks[nb - 2], &layout.blocks[nb - 1]);
            let a_last = c.inputs.last().unwrap();
            add_to(&mut grad[bo.range()], dout);
            let mut da = vec![0.0; z];
            outer_back(&params.values[wo.range()], a_last, dout, &mut grad[wo.range()], Some(&mut da));
            for l in (0..spec.n_layer).rev() {
                let (wb, bb) = (&layout.blocks[2 * l], &layout.blocks[2 * l + 1]);
                apply_mask(&mut da, &c.masks[l]);
                for (d, &x) in da.iter_mut().zip(&c.pres[l]) {
                    *d *= act.derivative(x);
                }
                add_to(&mut grad[bb.range()], &da);
                let input = &c.inputs[l];
                if l > 0 {
                    let mut dprev = vec![0.0; input.len()];
                    outer_back(&params.values[wb.range()], input, &da, &mut grad[wb.range()], Some(&mut dprev));
                    da = dprev;
                } else {
                    outer_back(&params.values[wb.range()], input, &da, &mut grad[wb.range()], None);
                }
            }
        }
        Cache::Cnn(c) => {
            let layout = spec.layout();
            let nb = layout.blocks.len();
            let head_off = layout.blocks[nb - 4].offset;
            let f = spec.n_filter;
            let c_out = spec.n_channel;
            let mut dflat = vec![0.0; c.head.input.len()];
            {
                let mut hp = Params {
                    v: &params.values[head_off..],
                };
                let mut hg = Grads { v: &mut grad[head_off..] };
                head_backward(&mut hp, &mut hg, act, c.head.input.len(), spec.n_k_xi, z, &c.head, dout, &mut dflat);
            }
            let mut dact = dflat;
            for (bi, b) in c.blocks.iter().enumerate().rev() {
                let (kb, bb) = (&layout.blocks[2 * bi], &layout.blocks[2 * bi + 1]);
                let k = &params.values[kb.range()];
                let lo = b.pooled_pre.len() / c_out;
                let mut dconv = vec![0.0; c_out * b.len_conv];
                for o in 0..c_out {
                    for j in 0..lo {
                        let i = o * lo + j;
                        dconv[o * b.len_conv + b.argmax[i]] += dact[i] * act.derivative(b.pooled_pre[i]);
                    }
                }
                let mut dinput = if bi > 0 { vec![0.0; b.input.len()] } else { Vec::new() };
                {
                    let (gk, gb) = grad[kb.offset..bb.offset + bb.len()].split_at_mut(kb.len());
                    for o in 0..c_out {
                        let ko = &k[o * b.c_in * f..(o + 1) * b.c_in * f];
                        for t in 0..b.len_conv {
                            let d = dconv[o * b.len_conv + t];
                            if d == 0.0 {
                                continue;
                            }
                            gb[o] += d;
                            for ci in 0..b.c_in {
                                let xs = &b.input[ci * b.len_in + t..ci * b.len_in + t + f];
                                let gko = &mut gk[o * b.c_in * f + ci * f..o * b.c_in * f + (ci + 1) * f];
                                for (g, xv) in gko.iter_mut().zip(xs) {
                                    *g += d * xv;
                                }
                                if bi > 0 {
                                    let dx = &mut dinput[ci * b.len_in + t..ci * b.len_in + t + f];
                                    for (dxv, kv) in dx.iter_mut().zip(&ko[ci * f..(ci + 1) * f]) {
                                        *dxv += d * kv;
                                    }
                                }
                            }
                        }
                    }
                }
                dact = dinput;
            }
        }
        Cache::Recurrent(rc) => {
            let layout = spec.layout();
            let nb = layout.blocks.len();
            let head_off = layout.blocks[nb - 4].offset;
            let steps = spec.n_steps();
            // gradient w.r.t. the top layer's hidden output at each step
            let mut dh_in = vec![vec![0.0; z]; steps];
            for (j, hc) in rc.heads.iter().enumerate() {
                let mut hp = Params {
                    v: &params.values[head_off..],
                };
                let mut hg = Grads { v: &mut grad[head_off..] };
                head_backward(&mut hp, &mut hg, act, z, 1, z, hc, &dout[j..j + 1], &mut dh_in[spec.n_k_psi + j]);
            }
            let gates = if spec.arch == Arch::Lstm { 4 } else { 1 };
            for l in (0..spec.n_layer).rev() {
                let bw_ih = &layout.blocks[4 * l];
                let bw_hh = &layout.blocks[4 * l + 1];
                let bb_ih = &layout.blocks[4 * l + 2];
                let bb_hh = &layout.blocks[4 * l + 3];
                let w_ih = &params.values[bw_ih.range()];
                let w_hh = &params.values[bw_hh.range()];
                let xs = if spec.arch == Arch::Lstm { &rc.lstm[l].xs } else { &rc.rnn[l].xs };
                let n_in = xs[0].len();
                let mut dx_seq = if l > 0 { vec![vec![0.0; n_in]; steps] } else { Vec::new() };
                let mut dh_next = vec![0.0; z];
                let mut dc_next = vec![0.0; z];
                let mut dpre = vec![0.0; gates * z];
                let layer_grad = &mut grad[bw_ih.offset..bb_hh.offset + bb_hh.len()];
                let (g_wih, rest) = layer_grad.split_at_mut(bw_ih.len());
                let (g_whh, rest) = rest.split_at_mut(bw_hh.len());
                let (g_bih, g_bhh) = rest.split_at_mut(bb_ih.len());
                for t in (0..steps).rev() {
                    let dh: Vec<f64> = dh_in[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                    let h_prev;
                    if spec.arch == Arch::Rnn {
                        let c = &rc.rnn[l];
                        h_prev = &c.hs[t];
                        let h = &c.hs[t + 1];
                        for j in 0..z {
                            dpre[j] = dh[j] * (1.0 - h[j] * h[j]);
                        }
                    } else {
                        let c = &rc.lstm[l];
                        h_prev = &c.hs[t];
                        let g = &c.gates[t];
                        let tc = &c.tanh_c[t];
                        let c_prev = &c.cs[t];
                        for j in 0..z {
                            let (ig, fg, gg, og) = (g[j], g[z + j], g[2 * z + j], g[3 * z + j]);
                            let d_o = dh[j] * tc[j];
                            let dc = dc_next[j] + dh[j] * og * (1.0 - tc[j] * tc[j]);
                            dpre[j] = dc * gg * ig * (1.0 - ig);
                            dpre[z + j] = dc * c_prev[j] * fg * (1.0 - fg);
                            dpre[2 * z + j] = dc * ig * (1.0 - gg * gg);
                            dpre[3 * z + j] = d_o * og * (1.0 - og);
                            dc_next[j] = dc * fg;
                        }
                    }
                    add_to(g_bih, &dpre);
                    add_to(g_bhh, &dpre);
                    let mut dh_prev = vec![0.0; z];
                    outer_back(w_hh, h_prev, &dpre, g_whh, Some(&mut dh_prev));
                    if l > 0 {
                        outer_back(w_ih, &xs[t], &dpre, g_wih, Some(&mut dx_seq[t]));
                    } else {
                        outer_back(w_ih, &xs[t], &dpre, g_wih, None);
                    }
                    dh_next = dh_prev;
                }
                dh_in = dx_seq;
            }
        }
    }
}

/// Mean squared error over the batch and all outputs, and its exact gradient.
/// Dropout is active iff `rng` is given; masks are drawn in sample order.
pub fn loss_and_gradient(
    spec: &NetSpec,
    params: &NetParams,
    xs: &[&[f64]],
    ys: &[&[f64]],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<f64>), NetError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(NetError::Shape(format!("{} inputs and {} targets", xs.len(), ys.len())));
    }
    let n_out = spec.output_len();
    let scale = 1.0 / (xs.len() * n_out) as f64;
    let mut grad = vec![0.0; params.values.len()];
    let mut loss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        check_input(spec, params, x)?;
        if y.len() != n_out {
            return Err(NetError::Shape(format!("target has {} values, expected {n_out}", y.len())));
        }
        let (out, cache) = forward_cached(spec, params, x, rng.as_deref_mut());
        let dout: Vec<f64> = out.iter().zip(y.iter()).map(|(o, t)| 2.0 * (o - t) * scale).collect();
        loss += out.iter().zip(y.iter()).map(|(o, t)| (o - t).powi(2)).sum::<f64>() * scale;
        backward_cached(spec, params, &cache, &dout, &mut grad);
    }
    Ok((loss, grad))
}

/// Batch loss as in [`loss_and_gradient`] without the backward pass.
pub fn loss(spec: &NetSpec, params: &NetParams, xs: &[&[f64]], ys: &[&[f64]], mut rng: Option<&mut ChaCha8Rng>) -> Result<f64, NetError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(NetError::Shape(format!("{} inputs and {} targets", xs.len(), ys.len())));
    }
    let scale = 1.0 / (xs.len() * spec.output_len()) as f64;
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        check_input(spec, params, x)?;
        let (out, _) = forward_cached(spec, params, x, rng.as_deref_mut());
        total += out.iter().zip(y.iter()).map(|(o, t)| (o - t).powi(2)).sum::<f64>() * scale;
    }
    Ok(total)
}

/// Mean squared error in evaluation mode.
pub fn mse(spec: &NetSpec, params: &NetParams, xs: &[&[f64]], ys: &[&[f64]]) -> Result<f64, NetError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(NetError::Shape(format!("{} inputs and {} targets", xs.len(), ys.len())));
    }
    let mut s = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let out = forward(spec, params, x)?;
        if out.len() != y.len() {
            return Err(NetError::Shape(format!("target has {} values, expected {}", y.len(), out.len())));
        }
        s += out.iter().zip(y.iter()).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
    }
    Ok(s / (xs.len() * spec.output_len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn toy_input(spec: &NetSpec, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..spec.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_mlp_outputs_bias() {
        let spec = NetSpec::new(Arch::Mlp, 2, 5, Activation::Gelu).with_io(1, 8, 3);
        let mut p = NetParams::zeros(&spec);
        p.block_mut(&spec, "out.b_xi").unwrap().copy_from_slice(&[0.5, -1.0, 2.0]);
        let y = forward(&spec, &p, &toy_input(&spec, 1)).unwrap();
        assert_eq!(y, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn lstm_zero_input_is_constant() {
        let spec = NetSpec::new(Arch::Lstm, 1, 4, Activation::Relu).with_io(2, 3, 4);
        let mut p = NetParams::init(&spec, 3);
        p.block_mut(&spec, "cell0.w_hh").unwrap().fill(0.0);
        p.block_mut(&spec, "cell0.b_ih").unwrap().fill(0.0);
        p.block_mut(&spec, "cell0.b_hh").unwrap().fill(0.0);
        let y = forward(&spec, &p, &vec![0.0; spec.input_len()]).unwrap();
        // h = 0 everywhere, so ξ = W_ξ φ(b_h) + b_ξ
        let b_h = p.block(&spec, "head.b_h").unwrap();
        let w_xi = p.block(&spec, "head.w_xi").unwrap();
        let b_xi = p.block(&spec, "head.b_xi").unwrap()[0];
        let expect: f64 = b_xi + w_xi.iter().zip(b_h).map(|(w, b)| w * b.max(0.0)).sum::<f64>();
        for v in y {
            assert!((v - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn cnn_hand_trace() {
        // one channel, length 6, two filters of width 2, pool 2, one block
        let spec = NetSpec::new(Arch::Cnn, 1, 1, Activation::Relu)
            .with_io(1, 6, 1)
            .with_conv(2, 2, 2)
            .with_dropout(0.0);
        let mut p = NetParams::zeros(&spec);
        p.block_mut(&spec, "conv0.k").unwrap().copy_from_slice(&[1.0, -1.0, 0.5, 0.5]);
        p.block_mut(&spec, "conv0.b").unwrap().copy_from_slice(&[0.0, -1.0]);
        // conv length 5, pooled length 2, flat 4
        p.block_mut(&spec, "head.w_h").unwrap().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        p.block_mut(&spec, "head.w_xi").unwrap().copy_from_slice(&[1.0]);
        let x = [1.0, 3.0, 2.0, 0.0, 4.0, 1.0];
        // filter 0: x_t - x_{t+1} = [-2, 1, 2, -4, 3] -> pool [1, 2] -> relu [1, 2]
        // filter 1: mean - 1 = [1, 1.5, 0, 1, 1.5] -> pool [1.5, 1] -> relu [1.5, 1]
        // head: relu(1 + 4 + 4.5 + 4) = 13.5
        let y = forward(&spec, &p, &x).unwrap();
        assert!((y[0] - 13.5).abs() < 1e-14, "{y:?}");
    }

    #[test]
    fn rejects_wrong_shapes() {
        let spec = NetSpec::new(Arch::Rnn, 1, 3, Activation::Relu).with_io(2, 2, 2);
        let p = NetParams::init(&spec, 0);
        assert!(forward(&spec, &p, &[0.0; 7]).is_err());
        assert!(forward(&spec, &p, &[0.0; 8]).is_ok());
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        for arch in Arch::ALL {
            let spec = NetSpec::new(arch, 2, 4, Activation::Selu).with_io(2, 8, 3).with_conv(3, 2, 2);
            let p = NetParams::init(&spec, 5);
            let x = toy_input(&spec, 9);
            let y = forward(&spec, &p, &x).unwrap();
            let (loss, g) = loss_and_gradient(&spec, &p, &[&x], &[&y], None).unwrap();
            assert_eq!(loss, 0.0);
            assert!(g.iter().all(|v| *v == 0.0), "{arch:?}");
        }
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let spec = NetSpec::new(Arch::Lstm, 1, 3, Activation::Gelu).with_io(2, 3, 2);
        let p = NetParams::init(&spec, 2);
        let x = toy_input(&spec, 4);
        let y = [0.3, -0.2];
        let (l1, g1) = loss_and_gradient(&spec, &p, &[&x], &[&y], None).unwrap();
        let (l2, g2) = loss_and_gradient(&spec, &p, &[&x, &x], &[&y, &y], None).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
