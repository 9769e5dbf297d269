//! Forward pass and reverse-mode gradients over a compiled layer list.
//! Activations are flat `f64` buffers in channel-major order.

use super::spec::Layer;

/// Intermediate values kept for the backward pass. `values[k]` is the input
/// of layer `k`; the last entry is the logit.
pub(crate) struct Trace {
    values: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
}

impl Trace {
    pub(crate) fn logit(&self) -> f64 {
        self.values.last().unwrap()[0]
    }
}

pub(crate) fn forward<P: AsRef<[f64]>>(layers: &[Layer], params: &[P], input: &[f64]) -> Trace {
    let mut values = vec![input.to_vec()];
    let mut argmax = Vec::with_capacity(layers.len());
    for layer in layers {
        let x = values.last().unwrap();
        let mut picks = Vec::new();
        let y = match *layer {
            Layer::Dense { inputs, outputs, weight, bias } => {
                let (w, b) = (params[weight].as_ref(), params[bias].as_ref());
                (0..outputs)
                    .map(|o| {
                        let row = &w[o * inputs..(o + 1) * inputs];
                        b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
                    })
                    .collect()
            }
            Layer::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
            Layer::Conv { conv, weight, bias } => {
                let (w, b) = (params[weight].as_ref(), params[bias].as_ref());
                let (oh, ow, k, s, p) = (conv.out_height(), conv.out_width(), conv.kernel, conv.stride, conv.pad() as isize);
                let mut y = vec![0.0; conv.out_ch * oh * ow];
                for o in 0..conv.out_ch {
                    for r in 0..oh {
                        for c in 0..ow {
                            let mut acc = b[o];
                            for ch in 0..conv.in_ch {
                                for dr in 0..k {
                                    let ir = (r * s + dr) as isize - p;
                                    if ir < 0 || ir >= conv.height as isize {
                                        continue;
                                    }
                                    let xrow = (ch * conv.height + ir as usize) * conv.width;
                                    let wrow = ((o * conv.in_ch + ch) * k + dr) * k;
                                    for dc in 0..k {
                                        let ic = (c * s + dc) as isize - p;
                                        if ic >= 0 && ic < conv.width as isize {
                                            acc += w[wrow + dc] * x[xrow + ic as usize];
                                        }
                                    }
                                }
                            }
                            y[(o * oh + r) * ow + c] = acc;
                        }
                    }
                }
                y
            }
            Layer::MaxPool { channels, height, width, size } => {
                let (oh, ow) = (height / size, width / size);
                let mut y = vec![0.0; channels * oh * ow];
                picks = vec![0; y.len()];
                for ch in 0..channels {
                    for r in 0..oh {
                        for c in 0..ow {
                            let mut best = usize::MAX;
                            for dr in 0..size {
                                for dc in 0..size {
                                    let i = (ch * height + r * size + dr) * width + c * size + dc;
                                    if best == usize::MAX || x[i] > x[best] {
                                        best = i;
                                    }
                                }
                            }
                            let o = (ch * oh + r) * ow + c;
                            y[o] = x[best];
                            picks[o] = best;
                        }
                    }
                }
                y
            }
        };
        argmax.push(picks);
        values.push(y);
    }
    Trace { values, argmax }
}

/// Accumulates `d(scale * logit)/d(params)` into `grads` and returns the
/// gradient with respect to the input.
pub(crate) fn backward<P: AsRef<[f64]>>(
    layers: &[Layer],
    params: &[P],
    trace: &Trace,
    scale: f64,
    grads: Option<&mut [Vec<f64>]>,
) -> Vec<f64> {
    let mut grads = grads;
    let mut g = vec![scale];
    for (k, layer) in layers.iter().enumerate().rev() {
        let x = &trace.values[k];
        g = match *layer {
            Layer::Dense { inputs, outputs, weight, bias } => {
                let w = params[weight].as_ref();
                if let Some(grads) = grads.as_deref_mut() {
                    for o in 0..outputs {
                        grads[bias][o] += g[o];
                        let row = &mut grads[weight][o * inputs..(o + 1) * inputs];
                        for (d, v) in row.iter_mut().zip(x) {
                            *d += g[o] * v;
                        }
                    }
                }
                let mut dx = vec![0.0; inputs];
                for o in 0..outputs {
                    if g[o] == 0.0 {
                        continue;
                    }
                    for (d, a) in dx.iter_mut().zip(&w[o * inputs..(o + 1) * inputs]) {
                        *d += a * g[o];
                    }
                }
                dx
            }
            Layer::Relu => g.iter().zip(x).map(|(&d, &v)| if v > 0.0 { d } else { 0.0 }).collect(),
            Layer::Conv { conv, weight, bias } => {
                let w = params[weight].as_ref();
                let (oh, ow, kk, s, p) = (conv.out_height(), conv.out_width(), conv.kernel, conv.stride, conv.pad() as isize);
                let mut dx = vec![0.0; x.len()];
                let mut grads = grads.as_deref_mut();
                for o in 0..conv.out_ch {
                    for r in 0..oh {
                        for c in 0..ow {
                            let go = g[(o * oh + r) * ow + c];
                            if go == 0.0 {
                                continue;
                            }
                            if let Some(grads) = grads.as_deref_mut() {
                                grads[bias][o] += go;
                            }
                            for ch in 0..conv.in_ch {
                                for dr in 0..kk {
                                    let ir = (r * s + dr) as isize - p;
                                    if ir < 0 || ir >= conv.height as isize {
                                        continue;
                                    }
                                    let xrow = (ch * conv.height + ir as usize) * conv.width;
                                    let wrow = ((o * conv.in_ch + ch) * kk + dr) * kk;
                                    for dc in 0..kk {
                                        let ic = (c * s + dc) as isize - p;
                                        if ic >= 0 && ic < conv.width as isize {
                                            let xi = xrow + ic as usize;
                                            dx[xi] += w[wrow + dc] * go;
                                            if let Some(grads) = grads.as_deref_mut() {
                                                grads[weight][wrow + dc] += x[xi] * go;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                dx
            }
            Layer::MaxPool { .. } => {
                let mut dx = vec![0.0; x.len()];
                for (o, &i) in trace.argmax[k].iter().enumerate() {
                    dx[i] += g[o];
                }
                dx
            }
        };
    }
    g
}
