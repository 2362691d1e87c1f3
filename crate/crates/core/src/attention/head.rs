//! Proposal classifier, top-k aggregation, loss, gradients and the SGD update.

use rand::Rng;

use super::pool::{actor_of_interest_pool, pool_backward, SamplingGrid};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fully connected layer from flattened pooled features to class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// `(C * X * Y) x K`
    pub weights: Tensor,
    /// `K`
    pub bias: Tensor,
}

impl ClassifierParams {
    pub fn zeros(inputs: usize, classes: usize) -> Self {
        ClassifierParams {
            weights: Tensor::zeros(vec![inputs, classes]),
            bias: Tensor::zeros(vec![classes]),
        }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng>(inputs: usize, classes: usize, rng: &mut R) -> Self {
        let a = (6.0 / (inputs + classes) as f64).sqrt();
        let data = (0..inputs * classes).map(|_| rng.gen_range(-a..a)).collect();
        ClassifierParams {
            weights: Tensor::new(vec![inputs, classes], data).expect("length matches"),
            bias: Tensor::zeros(vec![classes]),
        }
    }

    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let [d, k] = weights.dims2()?;
        if bias.dims() != [k] {
            return Err(Error::Shape(format!(
                "bias dims {:?} do not match {k} classes",
                bias.dims()
            )));
        }
        if d == 0 || k == 0 {
            return Err(Error::Shape("classifier needs inputs and classes".into()));
        }
        if weights.data().iter().chain(bias.data()).any(|v| !v.is_finite()) {
            return Err(Error::Shape("classifier parameters must be finite".into()));
        }
        Ok(ClassifierParams { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn classes(&self) -> usize {
        self.bias.dims()[0]
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.data().iter().map(|w| w * w).sum()
    }

    fn zeros_like(&self) -> Self {
        ClassifierParams::zeros(self.inputs(), self.classes())
    }
}

/// Flattens each proposal's `[C, X, Y]` block row-major and applies the
/// affine map, giving `[P, K]` logits.
pub fn classify(pooled: &Tensor, params: &ClassifierParams) -> Result<Tensor> {
    let p = *pooled
        .dims()
        .first()
        .ok_or_else(|| Error::Shape("scalar pooled tensor".into()))?;
    let d: usize = pooled.dims()[1..].iter().product();
    let (din, k) = (params.inputs(), params.classes());
    if d != din {
        return Err(Error::Shape(format!(
            "pooled features have {d} values, classifier expects {din}"
        )));
    }
    let (f, w, b) = (pooled.data(), params.weights.data(), params.bias.data());
    let mut out = Vec::with_capacity(p * k);
    for row in f.chunks_exact(d.max(1)).take(p) {
        for c in 0..k {
            let dot: f64 = row.iter().enumerate().map(|(i, x)| x * w[i * k + c]).sum();
            out.push(dot + b[c]);
        }
    }
    Tensor::new(vec![p, k], out)
}

/// Per-class mean of the `k` largest proposal logits, plus the `[P, K]`
/// selection mask. Ties at the k-th value go to the lowest proposal index and
/// the selected values are summed in index order.
pub fn topk_aggregate(logits: &Tensor, k: usize) -> Result<(Vec<f64>, Tensor)> {
    let [p, classes] = logits.dims2()?;
    if k == 0 || k > p {
        return Err(Error::Config(format!("top-k {k} must lie in 1..={p}")));
    }
    let z = logits.data();
    let mut mask = Tensor::zeros(vec![p, classes]);
    let mut video = Vec::with_capacity(classes);
    let mut order: Vec<usize> = Vec::with_capacity(p);
    for c in 0..classes {
        order.clear();
        order.extend(0..p);
        order.sort_by(|&a, &b| z[b * classes + c].total_cmp(&z[a * classes + c]).then(a.cmp(&b)));
        let mut chosen = order[..k].to_vec();
        chosen.sort_unstable();
        let mut sum = 0.0;
        for &i in &chosen {
            sum += z[i * classes + c];
            mask.data_mut()[i * classes + c] = 1.0;
        }
        video.push(sum / k as f64);
    }
    Ok((video, mask))
}

/// Stable softmax and `-ln p[label]`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Config(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let (top, m) = logits.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
    );
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let rest: f64 = exps.iter().enumerate().filter(|&(i, _)| i != top).map(|(_, e)| e).sum();
    let total = 1.0 + rest;
    let loss = rest.ln_1p() - (logits[label] - m);
    Ok((loss, exps.iter().map(|e| e / total).collect()))
}

/// Descending order of one class's proposal logits; ties keep index order.
pub fn rank_proposals(logits: &Tensor, class_id: usize) -> Result<Vec<(usize, f64)>> {
    let [p, classes] = logits.dims2()?;
    if class_id >= classes {
        return Err(Error::Config(format!(
            "class {class_id} out of range for {classes} classes"
        )));
    }
    let mut ranked: Vec<(usize, f64)> = (0..p).map(|i| (i, logits.data()[i * classes + class_id])).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Intermediate values of one video's forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub pooled: Tensor,
    pub logits: Tensor,
    pub video_logits: Vec<f64>,
    pub mask: Tensor,
    pub probs: Vec<f64>,
    /// Cross-entropy, without the weight-decay term.
    pub loss: f64,
}

pub fn forward(
    u: &Tensor,
    grids: &[SamplingGrid],
    params: &ClassifierParams,
    label: usize,
    top_k: usize,
) -> Result<ForwardPass> {
    let pooled = actor_of_interest_pool(u, grids)?;
    let logits = classify(&pooled, params)?;
    let (video_logits, mask) = topk_aggregate(&logits, top_k)?;
    let (loss, probs) = softmax_cross_entropy(&video_logits, label)?;
    Ok(ForwardPass {
        pooled,
        logits,
        video_logits,
        mask,
        probs,
        loss,
    })
}

/// Training objective: cross-entropy plus `0.5 * wd * ||W||^2`.
pub fn objective(pass: &ForwardPass, params: &ClassifierParams, weight_decay: f64) -> f64 {
    pass.loss + 0.5 * weight_decay * params.squared_norm()
}

/// Gradient of the cross-entropy with respect to the per-proposal logits.
/// Non-zero only where the top-k mask is set.
pub fn logit_gradient(pass: &ForwardPass, label: usize, top_k: usize) -> Tensor {
    let classes = pass.video_logits.len();
    let mut g = pass.mask.clone();
    for (i, v) in g.data_mut().iter_mut().enumerate() {
        let c = i % classes;
        let dv = pass.probs[c] - if c == label { 1.0 } else { 0.0 };
        *v *= dv / top_k as f64;
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: ClassifierParams,
    pub d_u: Tensor,
}

/// Exact gradients of [`objective`]. Grid coordinates are constants.
pub fn backward(
    u: &Tensor,
    grids: &[SamplingGrid],
    params: &ClassifierParams,
    pass: &ForwardPass,
    label: usize,
    top_k: usize,
    weight_decay: f64,
) -> Result<Gradients> {
    let params_grad = param_backward(params, pass, label, top_k, weight_decay);
    let d_pooled = pooled_gradient(params, pass, label, top_k);
    let d_u = pool_backward(u.dims(), grids, &d_pooled)?;
    Ok(Gradients {
        params: params_grad,
        d_u,
    })
}

/// Gradient with respect to the classifier only; skips the feature map.
pub fn param_backward(
    params: &ClassifierParams,
    pass: &ForwardPass,
    label: usize,
    top_k: usize,
    weight_decay: f64,
) -> ClassifierParams {
    let dz = logit_gradient(pass, label, top_k);
    let (p, k, d) = (dz.dims()[0], params.classes(), params.inputs());
    let mut g = params.zeros_like();
    let f = pass.pooled.data();
    let dzd = dz.data();
    {
        let gw = g.weights.data_mut();
        for row in 0..p {
            for c in 0..k {
                let s = dzd[row * k + c];
                if s == 0.0 {
                    continue;
                }
                for i in 0..d {
                    gw[i * k + c] += f[row * d + i] * s;
                }
            }
        }
        for (gw, w) in gw.iter_mut().zip(params.weights.data()) {
            *gw += weight_decay * w;
        }
    }
    let gb = g.bias.data_mut();
    for row in 0..p {
        for c in 0..k {
            gb[c] += dzd[row * k + c];
        }
    }
    g
}

fn pooled_gradient(params: &ClassifierParams, pass: &ForwardPass, label: usize, top_k: usize) -> Tensor {
    let dz = logit_gradient(pass, label, top_k);
    let (p, k, d) = (dz.dims()[0], params.classes(), params.inputs());
    let w = params.weights.data();
    let mut out = Tensor::zeros(pass.pooled.dims().to_vec());
    let od = out.data_mut();
    for row in 0..p {
        for i in 0..d {
            od[row * d + i] = (0..k).map(|c| w[i * k + c] * dz.data()[row * k + c]).sum();
        }
    }
    out
}

/// Heavy-ball momentum: `v <- momentum * v - lr * g; w <- w + v`.
pub fn sgd_step(
    params: &mut ClassifierParams,
    grad: &ClassifierParams,
    velocity: &mut ClassifierParams,
    lr: f64,
    momentum: f64,
) {
    let pairs = [
        (
            params.weights.data_mut(),
            grad.weights.data(),
            velocity.weights.data_mut(),
        ),
        (params.bias.data_mut(), grad.bias.data(), velocity.bias.data_mut()),
    ];
    for (w, g, v) in pairs {
        for ((w, g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = momentum * *v - lr * g;
            *w += *v;
        }
    }
}
