//! Layer stacks with hand-written forward and backward passes.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Fully connected layer; weights stored row-major `outputs x inputs`, then biases.
    Dense {
        outputs: usize,
    },
    /// 3x3 convolution with zero "same" padding; weights `filters x channels x 3 x 3`, then biases.
    Conv3x3 {
        filters: usize,
    },
    Flatten,
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Spatial {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial {
                channels,
                height,
                width,
            } => channels * height * width,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LayerSpec {
    fn output_shape(&self, input: Shape) -> Result<Shape> {
        match (*self, input) {
            (LayerSpec::Dense { outputs }, Shape::Flat(_)) if outputs > 0 => {
                Ok(Shape::Flat(outputs))
            }
            (LayerSpec::Conv3x3 { filters }, Shape::Spatial { height, width, .. })
                if filters > 0 =>
            {
                Ok(Shape::Spatial {
                    channels: filters,
                    height,
                    width,
                })
            }
            (LayerSpec::Flatten, Shape::Spatial { .. }) => Ok(Shape::Flat(input.len())),
            (LayerSpec::Relu | LayerSpec::Sigmoid, s) => Ok(s),
            (layer, shape) => Err(Error::config(format!(
                "layer {layer:?} cannot follow shape {shape:?}"
            ))),
        }
    }

    fn param_count(&self, input: Shape) -> usize {
        match (*self, input) {
            (LayerSpec::Dense { outputs }, s) => outputs * s.len() + outputs,
            (LayerSpec::Conv3x3 { filters }, Shape::Spatial { channels, .. }) => {
                filters * channels * 9 + filters
            }
            _ => 0,
        }
    }
}

/// A validated layer stack with resolved shapes and parameter offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    layers: Vec<LayerSpec>,
    shapes: Vec<Shape>,
    offsets: Vec<usize>,
    param_count: usize,
}

/// Per-layer outputs of a forward pass; `values[0]` is the input.
#[derive(Debug, Clone)]
pub struct Activations {
    pub values: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("at least the input")
    }
}

impl Architecture {
    pub fn new(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        if input.is_empty() {
            return Err(Error::config("network input is empty"));
        }
        let mut shapes = vec![input];
        let mut offsets = Vec::with_capacity(layers.len());
        let mut param_count = 0;
        for layer in &layers {
            let inp = *shapes.last().expect("non-empty");
            offsets.push(param_count);
            param_count += layer.param_count(inp);
            shapes.push(layer.output_shape(inp)?);
        }
        Ok(Self {
            layers,
            shapes,
            offsets,
            param_count,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().expect("non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count];
        for (i, layer) in self.layers.iter().enumerate() {
            let inp = self.shapes[i];
            let (weights, fan_in, fan_out) = match (*layer, inp) {
                (LayerSpec::Dense { outputs }, s) => (outputs * s.len(), s.len(), outputs),
                (LayerSpec::Conv3x3 { filters }, Shape::Spatial { channels, .. }) => {
                    (filters * channels * 9, channels * 9, filters * 9)
                }
                _ => continue,
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let off = self.offsets[i];
            for p in &mut params[off..off + weights] {
                *p = rng.random_range(-limit..=limit);
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Activations {
        debug_assert_eq!(params.len(), self.param_count);
        debug_assert_eq!(input.len(), self.shapes[0].len());
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = &values[i];
            let p = &params[self.offsets[i]..];
            let y = match (*layer, self.shapes[i]) {
                (LayerSpec::Dense { outputs }, s) => dense_forward(p, x, s.len(), outputs),
                (
                    LayerSpec::Conv3x3 { filters },
                    Shape::Spatial {
                        channels,
                        height,
                        width,
                    },
                ) => conv_forward(p, x, channels, filters, height, width),
                (LayerSpec::Flatten, _) => x.clone(),
                (LayerSpec::Relu, _) => x.iter().map(|v| v.max(0.0)).collect(),
                (LayerSpec::Sigmoid, _) => x.iter().map(|v| sigmoid(*v)).collect(),
                _ => unreachable!("validated at construction"),
            };
            values.push(y);
        }
        Activations { values }
    }

    /// Back-propagates `grad_output`; parameter gradients are accumulated into
    /// `grad_params`. Returns the gradient with respect to the input.
    pub fn backward(
        &self,
        params: &[f64],
        acts: &Activations,
        grad_output: &[f64],
        grad_params: &mut [f64],
    ) -> Vec<f64> {
        let mut grad = grad_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &acts.values[i];
            let y = &acts.values[i + 1];
            let off = self.offsets[i];
            grad = match (*layer, self.shapes[i]) {
                (LayerSpec::Dense { outputs }, s) => dense_backward(
                    &params[off..],
                    x,
                    &grad,
                    s.len(),
                    outputs,
                    &mut grad_params[off..],
                ),
                (
                    LayerSpec::Conv3x3 { filters },
                    Shape::Spatial {
                        channels,
                        height,
                        width,
                    },
                ) => conv_backward(
                    &params[off..],
                    x,
                    &grad,
                    channels,
                    filters,
                    height,
                    width,
                    &mut grad_params[off..],
                ),
                (LayerSpec::Flatten, _) => grad,
                (LayerSpec::Relu, _) => grad
                    .iter()
                    .zip(x)
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect(),
                (LayerSpec::Sigmoid, _) => {
                    grad.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect()
                }
                _ => unreachable!("validated at construction"),
            };
        }
        grad
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dense_forward(p: &[f64], x: &[f64], inputs: usize, outputs: usize) -> Vec<f64> {
    let (w, b) = p[..outputs * inputs + outputs].split_at(outputs * inputs);
    w.chunks_exact(inputs)
        .zip(b)
        .map(|(row, bias)| bias + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

fn dense_backward(
    p: &[f64],
    x: &[f64],
    g: &[f64],
    inputs: usize,
    outputs: usize,
    gp: &mut [f64],
) -> Vec<f64> {
    let w = &p[..outputs * inputs];
    let (gw, gb) = gp[..outputs * inputs + outputs].split_at_mut(outputs * inputs);
    let mut gx = vec![0.0; inputs];
    for o in 0..outputs {
        let go = g[o];
        gb[o] += go;
        if go == 0.0 {
            continue;
        }
        let row = &w[o * inputs..(o + 1) * inputs];
        let grow = &mut gw[o * inputs..(o + 1) * inputs];
        for j in 0..inputs {
            grow[j] += go * x[j];
            gx[j] += go * row[j];
        }
    }
    gx
}

fn conv_forward(p: &[f64], x: &[f64], cin: usize, cout: usize, h: usize, w: usize) -> Vec<f64> {
    let nw = cout * cin * 9;
    let (kernel, bias) = p[..nw + cout].split_at(nw);
    let mut y = vec![0.0; cout * h * w];
    for o in 0..cout {
        let out = &mut y[o * h * w..(o + 1) * h * w];
        out.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..cin {
            let plane = &x[i * h * w..(i + 1) * h * w];
            let k = &kernel[(o * cin + i) * 9..(o * cin + i + 1) * 9];
            for r in 0..h {
                for c in 0..w {
                    let mut acc = 0.0;
                    for dr in 0..3 {
                        let rr = r as isize + dr as isize - 1;
                        if rr < 0 || rr >= h as isize {
                            continue;
                        }
                        for dc in 0..3 {
                            let cc = c as isize + dc as isize - 1;
                            if cc < 0 || cc >= w as isize {
                                continue;
                            }
                            acc += k[dr * 3 + dc] * plane[rr as usize * w + cc as usize];
                        }
                    }
                    out[r * w + c] += acc;
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    p: &[f64],
    x: &[f64],
    g: &[f64],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    gp: &mut [f64],
) -> Vec<f64> {
    let nw = cout * cin * 9;
    let kernel = &p[..nw];
    let (gk, gb) = gp[..nw + cout].split_at_mut(nw);
    let mut gx = vec![0.0; cin * h * w];
    for o in 0..cout {
        let gout = &g[o * h * w..(o + 1) * h * w];
        gb[o] += gout.iter().sum::<f64>();
        for i in 0..cin {
            let plane = &x[i * h * w..(i + 1) * h * w];
            let gplane = &mut gx[i * h * w..(i + 1) * h * w];
            let base = (o * cin + i) * 9;
            for r in 0..h {
                for c in 0..w {
                    let go = gout[r * w + c];
                    if go == 0.0 {
                        continue;
                    }
                    for dr in 0..3 {
                        let rr = r as isize + dr as isize - 1;
                        if rr < 0 || rr >= h as isize {
                            continue;
                        }
                        for dc in 0..3 {
                            let cc = c as isize + dc as isize - 1;
                            if cc < 0 || cc >= w as isize {
                                continue;
                            }
                            let idx = rr as usize * w + cc as usize;
                            gk[base + dr * 3 + dc] += go * plane[idx];
                            gplane[idx] += go * kernel[base + dr * 3 + dc];
                        }
                    }
                }
            }
        }
    }
    gx
}
