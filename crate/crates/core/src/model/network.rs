use crate::features::FeatureImage;
use crate::optim::InitSpec;
use crate::rng::Rng;
use crate::tensor::{softmax, Tape, Tensor, Var};
use crate::{Error, Result};

use super::spec::{Layer, ModelSpec};

/// A network built from a [`ModelSpec`] together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    layers: Vec<Layer>,
    names: Vec<String>,
    params: Vec<Tensor<f32>>,
}

/// Output of a forward pass recorded on a tape.
pub struct ForwardPass {
    pub logits: Var,
    /// Tape handles of the parameters, in [`Network::params`] order.
    pub params: Vec<Var>,
}

fn param_names(layers: &[Layer]) -> Vec<String> {
    let mut names = Vec::new();
    let (mut conv, mut dense) = (0, 0);
    for layer in layers {
        match layer {
            Layer::Conv { .. } => {
                names.push(format!("conv{conv}.kernel"));
                names.push(format!("conv{conv}.bias"));
                conv += 1;
            }
            Layer::Dense { .. } => {
                names.push(format!("dense{dense}.weight"));
                names.push(format!("dense{dense}.bias"));
                dense += 1;
            }
            _ => {}
        }
    }
    names
}

impl Network {
    pub fn new(spec: ModelSpec, init: InitSpec) -> Result<Self> {
        let layers = spec.layers()?;
        let names = param_names(&layers);
        let params = layers
            .iter()
            .flat_map(Layer::param_shapes)
            .enumerate()
            .map(|(i, shape)| init.init(&shape, i as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            spec,
            layers,
            names,
            params,
        })
    }

    /// Rebuilds a network from stored tensors, checking every shape.
    pub fn from_parts(spec: ModelSpec, named: Vec<(String, Tensor<f32>)>) -> Result<Self> {
        let layers = spec.layers()?;
        let names = param_names(&layers);
        let shapes: Vec<Vec<usize>> = layers.iter().flat_map(Layer::param_shapes).collect();
        if named.len() != names.len() {
            return Err(Error::Incompatible(format!(
                "expected {} tensors, found {}",
                names.len(),
                named.len()
            )));
        }
        let mut params = Vec::with_capacity(named.len());
        for ((name, t), (want_name, want_shape)) in named.into_iter().zip(names.iter().zip(&shapes))
        {
            if &name != want_name || t.shape() != &want_shape[..] {
                return Err(Error::Incompatible(format!(
                    "tensor `{name}` {:?} where `{want_name}` {want_shape:?} was expected",
                    t.shape()
                )));
            }
            params.push(t);
        }
        Ok(Network {
            spec,
            layers,
            names,
            params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<f32>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.params
    }

    /// Counts the allocated parameter values.
    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Records a forward pass. Dropout is active iff `dropout_rng` is given.
    pub fn forward(
        &self,
        tape: &mut Tape<f32>,
        input: Var,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<ForwardPass> {
        let expect = [self.spec.input_height, self.spec.input_width, 1];
        let shape = tape.value(input).shape();
        if shape.len() != 4 || shape[1..] != expect {
            return Err(Error::Shape(format!(
                "network expects [batch, {}, {}, 1] input, got {shape:?}",
                expect[0], expect[1]
            )));
        }
        let params: Vec<Var> = self.params.iter().map(|p| tape.param(p.clone())).collect();
        let mut next = params.iter().copied();
        let mut x = input;
        for layer in &self.layers {
            x = match *layer {
                Layer::Conv {
                    stride_h,
                    stride_w,
                    padding,
                    ..
                } => {
                    let (k, b) = (next.next().unwrap(), next.next().unwrap());
                    let c = tape.conv2d(x, k, stride_h, stride_w, padding)?;
                    tape.add_bias(c, b)?
                }
                Layer::MaxPool { size, stride } => tape.maxpool2d(x, size, size, stride)?,
                Layer::Activation(a) => tape.activation(x, a),
                Layer::Dropout => match dropout_rng.as_deref_mut() {
                    Some(rng) => tape.dropout(x, self.spec.keep_prob, true, rng)?,
                    None => x,
                },
                Layer::Flatten => tape.flatten(x)?,
                Layer::Dense { .. } => {
                    let (w, b) = (next.next().unwrap(), next.next().unwrap());
                    tape.dense(x, w, b)?
                }
            };
        }
        Ok(ForwardPass { logits: x, params })
    }

    /// Inference-mode logits for a `[batch, h, w, 1]` tensor.
    pub fn logits(&self, batch: Tensor<f32>) -> Result<Tensor<f32>> {
        let mut tape = Tape::new();
        let x = tape.constant(batch);
        let pass = self.forward(&mut tape, x, None)?;
        Ok(tape.value(pass.logits).clone())
    }

    pub fn probabilities(&self, batch: Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(softmax(&self.logits(batch)?))
    }

    /// Arg-max class per example.
    pub fn predict(&self, batch: Tensor<f32>) -> Result<Vec<usize>> {
        let logits = self.logits(batch)?;
        let classes = self.spec.num_classes;
        Ok(logits
            .data()
            .chunks(classes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f32::NEG_INFINITY), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }
}

/// Stacks images into a `[batch, h, w, 1]` tensor.
pub fn batch_from_images<'a, I>(images: I) -> Result<Tensor<f32>>
where
    I: IntoIterator<Item = &'a FeatureImage>,
{
    let mut data = Vec::new();
    let mut dims = None;
    let mut n = 0;
    for img in images {
        match dims {
            None => dims = Some((img.height, img.width)),
            Some(d) if d != (img.height, img.width) => {
                return Err(Error::Shape(format!(
                    "mixed image sizes {}x{} and {}x{}",
                    d.0, d.1, img.height, img.width
                )))
            }
            _ => {}
        }
        data.extend_from_slice(&img.pixels);
        n += 1;
    }
    let (h, w) = dims.ok_or_else(|| Error::Shape("empty batch".into()))?;
    Tensor::new(&[n, h, w, 1], data)
}
