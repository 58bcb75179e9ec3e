//! Convolutional backbone with hand-written backward passes.
//!
//! Tensors are `[channel][row][col]` row-major `f64` buffers. Three stages of
//! 3×3 conv + ReLU + 2×2 max-pool bring the map to stride 8; optional context
//! stages keep pooling, and their outputs are upsampled back to the stride-8
//! grid and concatenated before the prediction head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STRIDE: usize = 8;
/// Objectness logit plus four box parameters per cell.
pub const OUTPUTS: usize = 5;

/// Initial objectness bias, roughly a 1.5% positive prior.
const OBJ_PRIOR: f64 = -4.2;
/// Initial width/height bias: boxes four cells wide.
const SIZE_PRIOR: f64 = 1.386_294_361_119_890_6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Tile side `G` in map cells.
    pub input_size: usize,
    /// Output channels of the three stride-2 backbone stages.
    pub channels: [usize; 3],
    /// Extra pooled stages whose features are upsampled into the head.
    pub context_stages: usize,
    /// Head kernel side, 1 or 3.
    pub head_kernel: usize,
    /// Weight of the GIoU term relative to objectness BCE.
    pub giou_weight: f64,
    /// Detections below this objectness are discarded at inference.
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            input_size: 128,
            channels: [8, 16, 16],
            context_stages: 2,
            head_kernel: 3,
            giou_weight: 1.0,
            score_threshold: 0.5,
            nms_iou: 0.5,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    /// Gradient-check scale: `G = 16`, two channels per stage.
    pub fn tiny() -> Self {
        Self {
            input_size: 16,
            channels: [2, 2, 2],
            context_stages: 1,
            ..Self::default()
        }
    }

    pub fn grid(&self) -> usize {
        self.input_size / STRIDE
    }

    pub fn validate(&self) -> Result<()> {
        let total = STRIDE << self.context_stages;
        if self.input_size == 0 || self.input_size % total != 0 {
            return Err(Error::invalid(format!(
                "input size {} must be a positive multiple of {total}",
                self.input_size
            )));
        }
        if self.channels.contains(&0) {
            return Err(Error::invalid("stage channels must be positive"));
        }
        if self.head_kernel != 1 && self.head_kernel != 3 {
            return Err(Error::invalid("head kernel must be 1 or 3"));
        }
        if !(self.giou_weight >= 0.0) || !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::invalid("giou weight must be >= 0 and nms iou in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub w: usize,
    pub b: usize,
}

impl Conv {
    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.cout * self.cin * self.k * self.k]
    }

    fn bias<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.b..self.b + self.cout]
    }
}

/// Parameter offsets for every conv layer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    /// Backbone then context stages, in forward order.
    pub stages: Vec<Conv>,
    pub head: Conv,
    pub len: usize,
}

impl Layout {
    pub fn new(cfg: &DetectorConfig) -> Self {
        let mut len = 0;
        let mut conv = |cin: usize, cout: usize, k: usize| {
            let w = len;
            let b = w + cout * cin * k * k;
            len = b + cout;
            Conv { cin, cout, k, w, b }
        };
        let [c1, c2, c3] = cfg.channels;
        let mut stages = vec![conv(1, c1, 3), conv(c1, c2, 3), conv(c2, c3, 3)];
        for _ in 0..cfg.context_stages {
            stages.push(conv(c3, c3, 3));
        }
        let head = conv(c3 * (1 + cfg.context_stages), OUTPUTS, cfg.head_kernel);
        Self { stages, head, len }
    }

    pub fn convs(&self) -> impl Iterator<Item = &Conv> {
        self.stages.iter().chain(std::iter::once(&self.head))
    }
}

/// Flat detector parameters plus the config that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub config: DetectorConfig,
    pub values: Vec<f64>,
}

impl DetectorParams {
    /// He-uniform weights from `config.seed`, zero biases except the head
    /// priors.
    pub fn init(config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut values = vec![0.0; layout.len];
        for c in layout.convs() {
            let bound = (6.0 / (c.cin * c.k * c.k) as f64).sqrt();
            for v in &mut values[c.w..c.b] {
                *v = rng.random_range(-bound..bound);
            }
        }
        let h = layout.head;
        values[h.b] = OBJ_PRIOR;
        values[h.b + 3] = SIZE_PRIOR;
        values[h.b + 4] = SIZE_PRIOR;
        Ok(Self {
            config: config.clone(),
            values,
        })
    }

    pub fn zeros(config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            values: vec![0.0; Layout::new(config).len],
        })
    }

    pub fn from_values(config: &DetectorConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let len = Layout::new(config).len;
        if values.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                found: values.len(),
                context: "detector parameters".into(),
            });
        }
        Ok(Self {
            config: config.clone(),
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// True for weights, false for biases; weight decay skips biases.
    pub fn decay_mask(&self) -> Vec<bool> {
        let layout = Layout::new(&self.config);
        let mut mask = vec![false; layout.len];
        for c in layout.convs() {
            mask[c.w..c.b].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    /// Values rounded through `f32`, as stored in model files.
    pub fn rounded_to_f32(&self) -> Self {
        Self {
            config: self.config.clone(),
            values: self.values.iter().map(|&v| v as f32 as f64).collect(),
        }
    }

    #[cfg(test)]
    pub(crate) fn head_bias_index(&self) -> usize {
        Layout::new(&self.config).head.b
    }
}

pub(crate) fn conv_forward(x: &[f64], c: &Conv, p: &[f64], h: usize, w: usize) -> Vec<f64> {
    let plane = h * w;
    let pad = (c.k / 2) as isize;
    let wts = c.weights(p);
    let mut out = vec![0.0; c.cout * plane];
    for (co, &b) in c.bias(p).iter().enumerate() {
        let o = &mut out[co * plane..(co + 1) * plane];
        o.iter_mut().for_each(|v| *v = b);
        for ci in 0..c.cin {
            let inp = &x[ci * plane..(ci + 1) * plane];
            for ky in 0..c.k {
                let dy = ky as isize - pad;
                let (y0, y1) = shifted_range(h, dy);
                for kx in 0..c.k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = shifted_range(w, dx);
                    let wv = wts[((co * c.cin + ci) * c.k + ky) * c.k + kx];
                    if wv == 0.0 || x0 >= x1 {
                        continue;
                    }
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let src = &inp[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
                        let dst = &mut o[y * w + x0..y * w + x1];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates parameter gradients into `gp` and, when requested, returns
/// the gradient with respect to the conv input.
pub(crate) fn conv_backward(
    x: &[f64],
    gy: &[f64],
    c: &Conv,
    p: &[f64],
    gp: &mut [f64],
    h: usize,
    w: usize,
    want_input: bool,
) -> Option<Vec<f64>> {
    let plane = h * w;
    let pad = (c.k / 2) as isize;
    let wts = c.weights(p);
    let mut gx = want_input.then(|| vec![0.0; c.cin * plane]);
    for co in 0..c.cout {
        let g = &gy[co * plane..(co + 1) * plane];
        gp[c.b + co] += g.iter().sum::<f64>();
        for ci in 0..c.cin {
            let inp = &x[ci * plane..(ci + 1) * plane];
            for ky in 0..c.k {
                let dy = ky as isize - pad;
                let (y0, y1) = shifted_range(h, dy);
                for kx in 0..c.k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = shifted_range(w, dx);
                    if x0 >= x1 {
                        continue;
                    }
                    let wi = ((co * c.cin + ci) * c.k + ky) * c.k + kx;
                    let wv = wts[wi];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let s0 = sy * w + (x0 as isize + dx) as usize;
                        let src = &inp[s0..s0 + (x1 - x0)];
                        let gr = &g[y * w + x0..y * w + x1];
                        acc += src.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(gx) = gx.as_mut() {
                            let dst = &mut gx[ci * plane + s0..ci * plane + s0 + (x1 - x0)];
                            for (d, gv) in dst.iter_mut().zip(gr) {
                                *d += wv * gv;
                            }
                        }
                    }
                    gp[c.w + wi] += acc;
                }
            }
        }
    }
    gx
}

/// Output positions `y` whose source `y + d` lies inside `0..n`.
fn shifted_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(0) as usize;
    (lo.min(n), hi.min(n))
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// 2×2 max-pool; returns the pooled tensor and each output's source index.
fn maxpool(x: &[f64], ch: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; ch * oh * ow];
    let mut arg = vec![0u32; ch * oh * ow];
    for c in 0..ch {
        for y in 0..oh {
            for xo in 0..ow {
                let base = c * h * w + 2 * y * w + 2 * xo;
                let mut best = base;
                for k in [base + 1, base + w, base + w + 1] {
                    if x[k] > x[best] {
                        best = k;
                    }
                }
                let o = c * oh * ow + y * ow + xo;
                out[o] = x[best];
                arg[o] = best as u32;
            }
        }
    }
    (out, arg)
}

fn upsample(x: &[f64], ch: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h * f, w * f);
    let mut out = vec![0.0; ch * oh * ow];
    for c in 0..ch {
        for y in 0..oh {
            for xo in 0..ow {
                out[c * oh * ow + y * ow + xo] = x[c * h * w + (y / f) * w + xo / f];
            }
        }
    }
    out
}

fn upsample_backward(g: &[f64], ch: usize, h: usize, w: usize, f: usize) -> Vec<f64> {
    let (oh, ow) = (h * f, w * f);
    let mut out = vec![0.0; ch * h * w];
    for c in 0..ch {
        for y in 0..oh {
            for xo in 0..ow {
                out[c * h * w + (y / f) * w + xo / f] += g[c * oh * ow + y * ow + xo];
            }
        }
    }
    out
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each stage conv (index 0 is the tile itself).
    inputs: Vec<Vec<f64>>,
    /// Post-ReLU, pre-pool activation of each stage.
    relus: Vec<Vec<f64>>,
    pools: Vec<Vec<u32>>,
    /// Spatial side at each stage's conv.
    sides: Vec<usize>,
    head_in: Vec<f64>,
    /// Raw predictions `[5][n][n]`.
    pub out: Vec<f64>,
}

/// Runs the detector on one `G × G` tile.
pub fn forward(params: &DetectorParams, tile: &[f64]) -> Result<ForwardCache> {
    let cfg = &params.config;
    let g = cfg.input_size;
    if tile.len() != g * g {
        return Err(Error::LengthMismatch {
            expected: g * g,
            found: tile.len(),
            context: "detector tile".into(),
        });
    }
    let layout = Layout::new(cfg);
    let p = &params.values;
    let mut inputs = Vec::with_capacity(layout.stages.len());
    let mut relus = Vec::with_capacity(layout.stages.len());
    let mut pools = Vec::with_capacity(layout.stages.len());
    let mut sides = Vec::with_capacity(layout.stages.len());
    let mut x = tile.to_vec();
    let mut side = g;
    let mut pooled = Vec::with_capacity(layout.stages.len());
    for c in &layout.stages {
        let mut z = conv_forward(&x, c, p, side, side);
        relu(&mut z);
        let (pz, arg) = maxpool(&z, c.cout, side, side);
        inputs.push(std::mem::replace(&mut x, pz.clone()));
        relus.push(z);
        pools.push(arg);
        sides.push(side);
        pooled.push(pz);
        side /= 2;
    }
    let n = cfg.grid();
    let c3 = cfg.channels[2];
    let mut head_in = pooled[2].clone();
    for k in 1..=cfg.context_stages {
        head_in.extend(upsample(&pooled[2 + k], c3, n >> k, n >> k, 1 << k));
    }
    let out = conv_forward(&head_in, &layout.head, p, n, n);
    Ok(ForwardCache {
        inputs,
        relus,
        pools,
        sides,
        head_in,
        out,
    })
}

/// Back-propagates `g_out` (shaped like the predictions). Returns parameter
/// gradients and, if requested, the gradient with respect to the tile.
pub fn backward(
    params: &DetectorParams,
    cache: &ForwardCache,
    g_out: &[f64],
    want_input: bool,
) -> (Vec<f64>, Option<Vec<f64>>) {
    let cfg = &params.config;
    let layout = Layout::new(cfg);
    let p = &params.values;
    let mut gp = vec![0.0; layout.len];
    let n = cfg.grid();
    let c3 = cfg.channels[2];
    let g_head = conv_backward(&cache.head_in, g_out, &layout.head, p, &mut gp, n, n, true)
        .expect("head input gradient");
    let stages = layout.stages.len();
    // gradient w.r.t. each stage's pooled output
    let mut g_pooled: Vec<Vec<f64>> = (0..stages).map(|_| Vec::new()).collect();
    let plane = n * n;
    g_pooled[2] = g_head[..c3 * plane].to_vec();
    for k in 1..=cfg.context_stages {
        let chunk = &g_head[k * c3 * plane..(k + 1) * c3 * plane];
        g_pooled[2 + k] = upsample_backward(chunk, c3, n >> k, n >> k, 1 << k);
    }
    let mut g_input = None;
    for s in (0..stages).rev() {
        let c = &layout.stages[s];
        let side = cache.sides[s];
        let z = &cache.relus[s];
        let mut gz = vec![0.0; c.cout * side * side];
        for (o, &src) in cache.pools[s].iter().enumerate() {
            gz[src as usize] += g_pooled[s][o];
        }
        for (g, &a) in gz.iter_mut().zip(z) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        let need = s > 0 || want_input;
        let gx = conv_backward(&cache.inputs[s], &gz, c, p, &mut gp, side, side, need);
        if s > 0 {
            let gx = gx.expect("stage input gradient");
            if g_pooled[s - 1].is_empty() {
                g_pooled[s - 1] = gx;
            } else {
                g_pooled[s - 1].iter_mut().zip(&gx).for_each(|(a, b)| *a += b);
            }
        } else {
            g_input = gx;
        }
    }
    (gp, g_input)
}
