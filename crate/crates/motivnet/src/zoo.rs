//! Scalable architecture families at desk scale. Each family is an ordered
//! sequence of levels where level L+1 structurally contains level L, either
//! by depth (more residual blocks per stage) or width (more channels or
//! hidden units per layer).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::store::ParamStore;
use crate::tensor::Tensor;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Family {
    /// Residual conv net; levels add blocks per stage (depth growth).
    DepthResNet,
    /// Two-hidden-layer MLP with layernorm and an embedding-style 3-D head
    /// parameter; levels widen the hidden layers.
    WidthMlp,
    /// Plain conv-bn-relu net; levels widen the per-stage channel counts.
    WidthConvNet,
}

/// Everything needed to build one model deterministically.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArchConfig {
    pub family: Family,
    pub level: u32,
    pub num_classes: usize,
    /// (C, H, W)
    pub input_shape: (usize, usize, usize),
    /// Residual blocks per stage (depth families).
    pub stage_layers: Vec<usize>,
    /// Channel / hidden-unit count per stage (width families).
    pub stage_widths: Vec<usize>,
}

impl ArchConfig {
    /// Desk-scale defaults for a family at a level.
    pub fn preset(
        family: Family,
        level: u32,
        num_classes: usize,
        input_shape: (usize, usize, usize),
    ) -> Self {
        let (stage_layers, stage_widths) = match family {
            Family::DepthResNet => (vec![level as usize + 1; 3], vec![8, 16, 32]),
            Family::WidthMlp => {
                let scale = 1.5f64.powi(level as i32);
                (
                    vec![1, 1],
                    vec![
                        (32.0 * scale).ceil() as usize,
                        (32.0 * scale).ceil() as usize,
                    ],
                )
            }
            Family::WidthConvNet => {
                let scale = 1.2f64.powi(level as i32);
                (
                    vec![2, 2, 2],
                    [8usize, 16, 32]
                        .iter()
                        .map(|&w| (w as f64 * scale).ceil() as usize)
                        .collect(),
                )
            }
        };
        ArchConfig {
            family,
            level,
            num_classes,
            input_shape,
            stage_layers,
            stage_widths,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (stages, widths) = match self.family {
            Family::DepthResNet | Family::WidthConvNet => (3, 3),
            Family::WidthMlp => (2, 2),
        };
        if self.stage_layers.len() != stages {
            return Err(Error::Config(format!(
                "{:?} expects {stages} stage_layers entries, got {}",
                self.family,
                self.stage_layers.len()
            )));
        }
        if self.stage_widths.len() != widths {
            return Err(Error::Config(format!(
                "{:?} expects {widths} stage_widths entries, got {}",
                self.family,
                self.stage_widths.len()
            )));
        }
        if self.stage_layers.iter().any(|&l| l == 0) || self.stage_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("stage layer/width counts must be >= 1".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be >= 1".into()));
        }
        let (c, h, w) = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config("input shape dims must be >= 1".into()));
        }
        match self.family {
            Family::DepthResNet | Family::WidthConvNet => {
                // two 2x2/stride-2 downsampling convs
                if h % 4 != 0 || w % 4 != 0 {
                    return Err(Error::Config(format!(
                        "input {h}x{w} incompatible with stage strides (needs multiples of 4)"
                    )));
                }
            }
            Family::WidthMlp => {}
        }
        Ok(())
    }

    pub fn flat_input_dim(&self) -> usize {
        let (c, h, w) = self.input_shape;
        c * h * w
    }
}

/// A built network: its config plus the parameter store backing `forward`.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ArchConfig,
    pub store: ParamStore,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn kaiming_uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| self.rng.gen_range(-bound..bound)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }
}

fn register_conv(
    store: &mut ParamStore,
    init: &mut Init,
    name: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
) -> Result<()> {
    let w = init.kaiming_uniform(&[c_out, c_in, k, k], c_in * k * k);
    store.register(&format!("{name}.weight"), w, true)
}

fn register_bn(store: &mut ParamStore, name: &str, c: usize) -> Result<()> {
    store.register(&format!("{name}.gamma"), Tensor::ones(&[c]), true)?;
    store.register(&format!("{name}.beta"), Tensor::zeros(&[c]), true)?;
    store.register(&format!("{name}.running_mean"), Tensor::zeros(&[c]), false)?;
    store.register(&format!("{name}.running_var"), Tensor::ones(&[c]), false)
}

fn register_dense(
    store: &mut ParamStore,
    init: &mut Init,
    name: &str,
    d_in: usize,
    d_out: usize,
) -> Result<()> {
    let w = init.kaiming_uniform(&[d_in, d_out], d_in);
    store.register(&format!("{name}.weight"), w, true)?;
    store.register(&format!("{name}.bias"), Tensor::zeros(&[d_out]), true)
}

fn register_ln(store: &mut ParamStore, name: &str, d: usize) -> Result<()> {
    store.register(&format!("{name}.gamma"), Tensor::ones(&[d]), true)?;
    store.register(&format!("{name}.beta"), Tensor::zeros(&[d]), true)
}

impl Model {
    /// Deterministic build: Kaiming-uniform fan-in for conv/dense weights,
    /// zeros for biases and beta, ones for gamma, zeros/ones for running
    /// mean/var.
    pub fn build(config: ArchConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let (c_in, _, _) = config.input_shape;
        match config.family {
            Family::DepthResNet => {
                let w = &config.stage_widths;
                register_conv(&mut store, &mut init, "stem.conv", w[0], c_in, 3)?;
                register_bn(&mut store, "stem.bn", w[0])?;
                for s in 0..3 {
                    if s > 0 {
                        register_conv(
                            &mut store,
                            &mut init,
                            &format!("transition{s}.conv"),
                            w[s],
                            w[s - 1],
                            2,
                        )?;
                        register_bn(&mut store, &format!("transition{s}.bn"), w[s])?;
                    }
                    for b in 0..config.stage_layers[s] {
                        for conv in 0..2 {
                            register_conv(
                                &mut store,
                                &mut init,
                                &format!("stage{s}.block{b}.conv{conv}"),
                                w[s],
                                w[s],
                                3,
                            )?;
                            register_bn(&mut store, &format!("stage{s}.block{b}.bn{conv}"), w[s])?;
                        }
                    }
                }
                register_dense(&mut store, &mut init, "head", w[2], config.num_classes)?;
            }
            Family::WidthMlp => {
                let w = &config.stage_widths;
                let d_in = config.flat_input_dim();
                register_dense(&mut store, &mut init, "layer0", d_in, w[0])?;
                register_ln(&mut store, "layer0.ln", w[0])?;
                register_dense(&mut store, &mut init, "layer1", w[0], w[1])?;
                register_ln(&mut store, "layer1.ln", w[1])?;
                register_dense(&mut store, &mut init, "head", w[1], config.num_classes)?;
                let embed = init.kaiming_uniform(&[1, config.num_classes, w[1]], w[1]);
                store.register("class_embed", embed, true)?;
            }
            Family::WidthConvNet => {
                let w = &config.stage_widths;
                register_conv(&mut store, &mut init, "stem.conv", w[0], c_in, 3)?;
                register_bn(&mut store, "stem.bn", w[0])?;
                for s in 0..3 {
                    for b in 0..config.stage_layers[s] {
                        let name = format!("stage{s}.block{b}");
                        if b == 0 && s > 0 {
                            register_conv(
                                &mut store,
                                &mut init,
                                &format!("{name}.conv"),
                                w[s],
                                w[s - 1],
                                2,
                            )?;
                        } else {
                            register_conv(&mut store, &mut init, &format!("{name}.conv"), w[s], w[s], 3)?;
                        }
                        register_bn(&mut store, &format!("{name}.bn"), w[s])?;
                    }
                }
                register_dense(&mut store, &mut init, "head", w[2], config.num_classes)?;
            }
        }
        Ok(Model { config, store })
    }

    /// Record a forward pass on `graph`, returning the logits node.
    pub fn forward(&mut self, graph: &mut Graph, input: Tensor, training: bool) -> Result<NodeId> {
        let x = graph.constant(input);
        match self.config.family {
            Family::DepthResNet => self.forward_depth_resnet(graph, x, training),
            Family::WidthMlp => self.forward_width_mlp(graph, x),
            Family::WidthConvNet => self.forward_width_convnet(graph, x, training),
        }
    }

    fn conv_bn_relu(
        &mut self,
        graph: &mut Graph,
        x: NodeId,
        conv: &str,
        bn: &str,
        stride: usize,
        padding: usize,
        relu: bool,
        training: bool,
    ) -> Result<NodeId> {
        let w = graph.param(&self.store, &format!("{conv}.weight"))?;
        let y = graph.conv2d(x, w, stride, padding)?;
        let gamma = graph.param(&self.store, &format!("{bn}.gamma"))?;
        let beta = graph.param(&self.store, &format!("{bn}.beta"))?;
        // running stats are temporarily moved out to satisfy the borrow
        // checker; they are always written back
        let mut rm = std::mem::replace(
            self.store.value_mut(&format!("{bn}.running_mean"))?,
            Tensor::zeros(&[1]),
        );
        let mut rv = std::mem::replace(
            self.store.value_mut(&format!("{bn}.running_var"))?,
            Tensor::zeros(&[1]),
        );
        let out = graph.batchnorm2d(y, gamma, beta, &mut rm, &mut rv, training, BN_MOMENTUM, BN_EPS);
        *self.store.value_mut(&format!("{bn}.running_mean"))? = rm;
        *self.store.value_mut(&format!("{bn}.running_var"))? = rv;
        let out = out?;
        Ok(if relu { graph.relu(out) } else { out })
    }

    fn head(&mut self, graph: &mut Graph, feat: NodeId) -> Result<NodeId> {
        let w = graph.param(&self.store, "head.weight")?;
        let b = graph.param(&self.store, "head.bias")?;
        let y = graph.matmul(feat, w)?;
        graph.add_bias(y, b)
    }

    fn forward_depth_resnet(
        &mut self,
        graph: &mut Graph,
        x: NodeId,
        training: bool,
    ) -> Result<NodeId> {
        let mut h = self.conv_bn_relu(graph, x, "stem.conv", "stem.bn", 1, 1, true, training)?;
        for s in 0..3 {
            if s > 0 {
                h = self.conv_bn_relu(
                    graph,
                    h,
                    &format!("transition{s}.conv"),
                    &format!("transition{s}.bn"),
                    2,
                    0,
                    true,
                    training,
                )?;
            }
            for b in 0..self.config.stage_layers[s] {
                let name = format!("stage{s}.block{b}");
                let y = self.conv_bn_relu(
                    graph,
                    h,
                    &format!("{name}.conv0"),
                    &format!("{name}.bn0"),
                    1,
                    1,
                    true,
                    training,
                )?;
                let y = self.conv_bn_relu(
                    graph,
                    y,
                    &format!("{name}.conv1"),
                    &format!("{name}.bn1"),
                    1,
                    1,
                    false,
                    training,
                )?;
                let y = graph.add(y, h)?;
                h = graph.relu(y);
            }
        }
        let pooled = graph.global_avg_pool(h)?;
        self.head(graph, pooled)
    }

    fn forward_width_mlp(&mut self, graph: &mut Graph, x: NodeId) -> Result<NodeId> {
        let mut h = graph.flatten(x)?;
        for layer in 0..2 {
            let w = graph.param(&self.store, &format!("layer{layer}.weight"))?;
            let b = graph.param(&self.store, &format!("layer{layer}.bias"))?;
            h = graph.matmul(h, w)?;
            h = graph.add_bias(h, b)?;
            let gamma = graph.param(&self.store, &format!("layer{layer}.ln.gamma"))?;
            let beta = graph.param(&self.store, &format!("layer{layer}.ln.beta"))?;
            h = graph.layernorm(h, gamma, beta, LN_EPS)?;
            h = graph.gelu(h);
        }
        let logits = self.head(graph, h)?;
        // embedding-style bilinear head term: feat . embed[0, c, :]
        let embed = graph.param(&self.store, "class_embed")?;
        let emb2 = graph.reshape(embed, &[self.config.num_classes, self.config.stage_widths[1]])?;
        let embt = graph.transpose(emb2)?;
        let extra = graph.matmul(h, embt)?;
        graph.add(logits, extra)
    }

    fn forward_width_convnet(
        &mut self,
        graph: &mut Graph,
        x: NodeId,
        training: bool,
    ) -> Result<NodeId> {
        let mut h = self.conv_bn_relu(graph, x, "stem.conv", "stem.bn", 1, 1, true, training)?;
        for s in 0..3 {
            for b in 0..self.config.stage_layers[s] {
                let name = format!("stage{s}.block{b}");
                let downsample = b == 0 && s > 0;
                let (stride, padding) = if downsample { (2, 0) } else { (1, 1) };
                let y = self.conv_bn_relu(
                    graph,
                    h,
                    &format!("{name}.conv"),
                    &format!("{name}.bn"),
                    stride,
                    padding,
                    true,
                    training,
                )?;
                h = if downsample || b == 0 { y } else { graph.add(y, h)? };
            }
        }
        let pooled = graph.global_avg_pool(h)?;
        self.head(graph, pooled)
    }
}

/// Per-layer forward-pass cost of one input, in floating-point operations.
///
/// Conventions: conv `2*C_out*C_in*kh*kw*H'*W'`; dense `2*d_in*d_out +
/// d_out` (bias); batchnorm 2/element; relu and residual add 1/element;
/// gelu 10/element; global average pool `C*(H*W + 1)`; layernorm
/// 7/element; the bilinear head term is a dense product without bias.
pub fn flops_forward(config: &ArchConfig) -> Result<u64> {
    config.validate()?;
    let (c_in, h0, w0) = config.input_shape;
    let mut total: u64 = 0;
    let conv = |c_out: usize, c_in: usize, k: usize, h_out: usize, w_out: usize| -> u64 {
        2 * (c_out * c_in * k * k * h_out * w_out) as u64
    };
    match config.family {
        Family::DepthResNet => {
            let w = &config.stage_widths;
            let (mut h, mut wd) = (h0, w0);
            total += conv(w[0], c_in, 3, h, wd);
            total += 3 * (w[0] * h * wd) as u64; // bn + relu
            for s in 0..3 {
                if s > 0 {
                    h /= 2;
                    wd /= 2;
                    total += conv(w[s], w[s - 1], 2, h, wd);
                    total += 3 * (w[s] * h * wd) as u64;
                }
                let plane = (w[s] * h * wd) as u64;
                for _ in 0..config.stage_layers[s] {
                    total += conv(w[s], w[s], 3, h, wd) + 3 * plane; // conv0+bn0+relu
                    total += conv(w[s], w[s], 3, h, wd) + 2 * plane; // conv1+bn1
                    total += 2 * plane; // residual add + relu
                }
            }
            total += (w[2] * (h * wd + 1)) as u64; // global avg pool
            total += (2 * w[2] * config.num_classes + config.num_classes) as u64;
        }
        Family::WidthMlp => {
            let w = &config.stage_widths;
            let mut d_in = config.flat_input_dim();
            for &width in w {
                total += (2 * d_in * width + width) as u64; // dense
                total += 7 * width as u64; // layernorm
                total += 10 * width as u64; // gelu
                d_in = width;
            }
            total += (2 * w[1] * config.num_classes + config.num_classes) as u64; // head
            total += (2 * w[1] * config.num_classes) as u64; // bilinear embed term
            total += config.num_classes as u64; // add the two logit terms
        }
        Family::WidthConvNet => {
            let w = &config.stage_widths;
            let (mut h, mut wd) = (h0, w0);
            total += conv(w[0], c_in, 3, h, wd);
            total += 3 * (w[0] * h * wd) as u64;
            for s in 0..3 {
                for b in 0..config.stage_layers[s] {
                    let downsample = b == 0 && s > 0;
                    if downsample {
                        h /= 2;
                        wd /= 2;
                        total += conv(w[s], w[s - 1], 2, h, wd);
                    } else {
                        total += conv(w[s], w[s], 3, h, wd);
                    }
                    total += 3 * (w[s] * h * wd) as u64; // bn + relu
                    if !downsample && b > 0 {
                        total += (w[s] * h * wd) as u64; // residual add
                    }
                }
            }
            total += (w[2] * (h * wd + 1)) as u64;
            total += (2 * w[2] * config.num_classes + config.num_classes) as u64;
        }
    }
    Ok(total)
}
