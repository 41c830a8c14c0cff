use std::fmt;
use std::str::FromStr;

use crate::dataset::Label;
use crate::tensor::{output_dim, Activation, Padding};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    LowLatency,
    MnistCnn,
    ShallowCrm,
    DeepCrm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::LowLatency,
        Variant::MnistCnn,
        Variant::ShallowCrm,
        Variant::DeepCrm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::LowLatency => "low_latency",
            Variant::MnistCnn => "mnist_cnn",
            Variant::ShallowCrm => "shallow_crm",
            Variant::DeepCrm => "deep_crm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| Error::param("model", format!("unknown model variant `{s}`")))
    }
}

/// One step of an expanded network. Conv and dense layers own a weight and
/// a bias tensor; everything else is parameter-free.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv {
        kh: usize,
        kw: usize,
        stride_h: usize,
        stride_w: usize,
        cin: usize,
        cout: usize,
        padding: Padding,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    Activation(Activation),
    Dropout,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl Layer {
    /// Shapes of the weight and bias tensors, if any.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            Layer::Conv {
                kh, kw, cin, cout, ..
            } => vec![vec![kh, kw, cin, cout], vec![cout]],
            Layer::Dense { inputs, outputs } => vec![vec![inputs, outputs], vec![outputs]],
            _ => Vec::new(),
        }
    }
}

/// Declarative description of a network. Only the fields relevant to the
/// variant are used; the rest keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub input_height: usize,
    pub input_width: usize,
    pub num_classes: usize,
    pub activation: Activation,
    pub keep_prob: f64,
    /// Hidden stages whose output passes through dropout while training.
    pub dropout_after: Vec<usize>,
    pub conv_size: usize,
    pub conv_stride: usize,
    pub freq_stride_only: bool,
    pub conv_channels: usize,
    pub bottleneck: usize,
    pub hidden: usize,
    pub filters: Vec<usize>,
}

impl ModelSpec {
    pub fn new(variant: Variant, input_height: usize, input_width: usize) -> Self {
        let base = ModelSpec {
            variant,
            input_height,
            input_width,
            num_classes: Label::COUNT,
            activation: Activation::Relu,
            keep_prob: 0.5,
            dropout_after: Vec::new(),
            conv_size: 7,
            conv_stride: 3,
            freq_stride_only: false,
            conv_channels: 3,
            bottleneck: 51,
            hidden: 100,
            filters: Vec::new(),
        };
        match variant {
            Variant::LowLatency => base,
            Variant::MnistCnn => ModelSpec {
                conv_size: 5,
                conv_stride: 1,
                filters: vec![32, 64],
                hidden: 1024,
                dropout_after: vec![2],
                ..base
            },
            Variant::ShallowCrm => ModelSpec {
                conv_size: 3,
                conv_stride: 1,
                filters: vec![16, 32, 64],
                hidden: 256,
                ..base
            },
            Variant::DeepCrm => ModelSpec {
                conv_size: 3,
                conv_stride: 1,
                filters: vec![16, 32, 64, 128, 128],
                hidden: 256,
                ..base
            },
        }
    }

    pub fn low_latency(input_height: usize, input_width: usize) -> Self {
        Self::new(Variant::LowLatency, input_height, input_width)
    }

    pub fn mnist_cnn() -> Self {
        Self::new(Variant::MnistCnn, 28, 28)
    }

    pub fn shallow_crm(input_height: usize, input_width: usize) -> Self {
        Self::new(Variant::ShallowCrm, input_height, input_width)
    }

    pub fn deep_crm(input_height: usize, input_width: usize) -> Self {
        Self::new(Variant::DeepCrm, input_height, input_width)
    }

    /// Number of hidden stages that can be followed by dropout.
    pub fn hidden_stages(&self) -> usize {
        match self.variant {
            Variant::LowLatency => 3,
            _ => self.filters.len() + 1,
        }
    }

    /// Expands the spec into layers, checking every intermediate shape.
    pub fn layers(&self) -> Result<Vec<Layer>> {
        Ok(self.expand()?.0)
    }

    /// Per-layer output shapes `[h, w, c]` (or `[features]` after flatten).
    pub fn shape_trace(&self) -> Result<Vec<Vec<usize>>> {
        Ok(self.expand()?.1)
    }

    /// Spatial heights after the input and after each conv or pool layer.
    pub fn spatial_trace(&self) -> Result<Vec<usize>> {
        let (layers, shapes) = self.expand()?;
        let mut trace = vec![self.input_height];
        for (layer, shape) in layers.iter().zip(&shapes) {
            if matches!(layer, Layer::MaxPool { .. })
                || matches!(layer, Layer::Conv { stride_h, .. } if *stride_h > 1)
            {
                trace.push(shape[0]);
            }
        }
        Ok(trace)
    }

    fn validate(&self) -> Result<()> {
        if self.input_height == 0 || self.input_width == 0 {
            return Err(Error::Shape("input has a zero dimension".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::param("num_classes", "need at least two classes"));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::param(
                "keep_prob",
                format!("must be in (0, 1], got {}", self.keep_prob),
            ));
        }
        if let Some(&bad) = self
            .dropout_after
            .iter()
            .find(|&&s| s >= self.hidden_stages())
        {
            return Err(Error::param(
                "dropout_after",
                format!(
                    "stage {bad} does not exist; {} has {} hidden stages",
                    self.variant,
                    self.hidden_stages()
                ),
            ));
        }
        let zero = |name: &'static str, v: usize| {
            if v == 0 {
                Err(Error::param(name, "must be >= 1"))
            } else {
                Ok(())
            }
        };
        zero("conv_size", self.conv_size)?;
        zero("conv_stride", self.conv_stride)?;
        zero("conv_channels", self.conv_channels)?;
        zero("bottleneck", self.bottleneck)?;
        zero("hidden", self.hidden)?;
        for &f in &self.filters {
            zero("filters", f)?;
        }
        match self.variant {
            Variant::MnistCnn => {
                if (self.input_height, self.input_width) != (28, 28) {
                    return Err(Error::Shape(format!(
                        "mnist_cnn needs a 28x28 input, got {}x{}",
                        self.input_height, self.input_width
                    )));
                }
                if self.filters.len() != 2 {
                    return Err(Error::param(
                        "filters",
                        "mnist_cnn has exactly two conv layers",
                    ));
                }
            }
            Variant::ShallowCrm | Variant::DeepCrm if self.filters.is_empty() => {
                return Err(Error::param("filters", "need at least one C-R-M block"));
            }
            _ => {}
        }
        Ok(())
    }

    fn expand(&self) -> Result<(Vec<Layer>, Vec<Vec<usize>>)> {
        self.validate()?;
        let mut b = Builder {
            layers: Vec::new(),
            shapes: Vec::new(),
            shape: vec![self.input_height, self.input_width, 1],
        };
        let act = self.activation;
        let mut stage = 0;
        let mut end_stage = |b: &mut Builder| {
            if self.dropout_after.contains(&stage) {
                b.push(Layer::Dropout);
            }
            stage += 1;
        };
        match self.variant {
            Variant::LowLatency => {
                let stride_w = if self.freq_stride_only {
                    1
                } else {
                    self.conv_stride
                };
                b.conv(
                    self.conv_size,
                    self.conv_stride,
                    stride_w,
                    self.conv_channels,
                    Padding::Valid,
                )?;
                b.push(Layer::Activation(act));
                end_stage(&mut b);
                b.push(Layer::Flatten);
                b.dense(self.bottleneck);
                end_stage(&mut b);
                b.dense(self.hidden);
                b.push(Layer::Activation(act));
                end_stage(&mut b);
            }
            Variant::MnistCnn | Variant::ShallowCrm | Variant::DeepCrm => {
                for &f in &self.filters {
                    b.conv(self.conv_size, 1, 1, f, Padding::Same)?;
                    b.push(Layer::Activation(act));
                    b.pool(2)?;
                    end_stage(&mut b);
                }
                b.push(Layer::Flatten);
                b.dense(self.hidden);
                b.push(Layer::Activation(act));
                end_stage(&mut b);
            }
        }
        b.dense(self.num_classes);
        Ok((b.layers, b.shapes))
    }

    /// Stable text form; two specs are compatible iff their canonical
    /// texts are equal.
    pub fn canonical(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        for (k, v) in [
            ("variant", self.variant.to_string()),
            ("input_height", self.input_height.to_string()),
            ("input_width", self.input_width.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("activation", self.activation.as_str().to_string()),
            ("keep_prob", self.keep_prob.to_string()),
            ("dropout_after", list(&self.dropout_after)),
            ("conv_size", self.conv_size.to_string()),
            ("conv_stride", self.conv_stride.to_string()),
            ("freq_stride_only", self.freq_stride_only.to_string()),
            ("conv_channels", self.conv_channels.to_string()),
            ("bottleneck", self.bottleneck.to_string()),
            ("hidden", self.hidden.to_string()),
            ("filters", list(&self.filters)),
        ] {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn from_canonical(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines
            .next()
            .ok_or_else(|| Error::format("model spec", "empty"))?;
        let variant = match first.split_once('=') {
            Some(("variant", v)) => v.parse()?,
            _ => {
                return Err(Error::format(
                    "model spec",
                    "first line must be `variant=...`",
                ))
            }
        };
        let mut spec = ModelSpec::new(variant, 28, 28);
        for line in lines {
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format("model spec", format!("line `{line}` is not key=value"))
            })?;
            spec.set(k.trim(), v.trim())?;
        }
        Ok(spec)
    }

    /// Overrides one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{v}`")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<usize>> {
            v.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| num(key, s.trim()))
                .collect()
        }
        match key {
            "variant" => self.variant = value.parse()?,
            "input_height" => self.input_height = num(key, value)?,
            "input_width" => self.input_width = num(key, value)?,
            "num_classes" => self.num_classes = num(key, value)?,
            "activation" => self.activation = value.parse()?,
            "keep_prob" => self.keep_prob = num(key, value)?,
            "dropout_after" => self.dropout_after = list(key, value)?,
            "conv_size" => self.conv_size = num(key, value)?,
            "conv_stride" => self.conv_stride = num(key, value)?,
            "freq_stride_only" => {
                self.freq_stride_only = value.parse().map_err(|_| {
                    Error::Config(format!("`{key}` expects true or false, got `{value}`"))
                })?
            }
            "conv_channels" => self.conv_channels = num(key, value)?,
            "bottleneck" => self.bottleneck = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "filters" => self.filters = list(key, value)?,
            other => return Err(Error::Config(format!("unknown model key `{other}`"))),
        }
        Ok(())
    }
}

struct Builder {
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
    shape: Vec<usize>,
}

impl Builder {
    fn push(&mut self, layer: Layer) {
        if layer == Layer::Flatten {
            self.shape = vec![self.shape.iter().product()];
        }
        self.layers.push(layer);
        self.shapes.push(self.shape.clone());
    }

    fn conv(
        &mut self,
        k: usize,
        sh: usize,
        sw: usize,
        cout: usize,
        padding: Padding,
    ) -> Result<()> {
        let [h, w, cin] = self.shape[..] else {
            unreachable!()
        };
        let (oh, _) = output_dim(h, k, sh, padding)?;
        let (ow, _) = output_dim(w, k, sw, padding)?;
        self.shape = vec![oh, ow, cout];
        self.push(Layer::Conv {
            kh: k,
            kw: k,
            stride_h: sh,
            stride_w: sw,
            cin,
            cout,
            padding,
        });
        Ok(())
    }

    fn pool(&mut self, size: usize) -> Result<()> {
        let [h, w, c] = self.shape[..] else {
            unreachable!()
        };
        if h < size || w < size {
            return Err(Error::Shape(format!(
                "cannot pool a {h}x{w} map with a {size}x{size} window; the input is too small for this many poolings"
            )));
        }
        let (oh, _) = output_dim(h, size, size, Padding::Same)?;
        let (ow, _) = output_dim(w, size, size, Padding::Same)?;
        self.shape = vec![oh, ow, c];
        self.push(Layer::MaxPool { size, stride: size });
        Ok(())
    }

    fn dense(&mut self, outputs: usize) {
        let inputs = self.shape[0];
        self.shape = vec![outputs];
        self.push(Layer::Dense { inputs, outputs });
    }
}

/// Closed-form parameter count: kernel volume times output channels plus
/// biases for every conv, `m*n + n` for every dense layer.
pub fn count_params(spec: &ModelSpec) -> Result<usize> {
    Ok(spec
        .layers()?
        .iter()
        .map(|l| match *l {
            Layer::Conv {
                kh, kw, cin, cout, ..
            } => kh * kw * cin * cout + cout,
            Layer::Dense { inputs, outputs } => inputs * outputs + outputs,
            _ => 0,
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mnist_count_and_trace() {
        let spec = ModelSpec::mnist_cnn();
        assert_eq!(
            count_params(&spec).unwrap(),
            832 + 51_264 + 3_212_288 + 12_300
        );
        assert_eq!(count_params(&spec).unwrap(), 3_276_684);
        assert_eq!(spec.spatial_trace().unwrap(), vec![28, 14, 7]);
        assert!(ModelSpec::new(Variant::MnistCnn, 32, 28).layers().is_err());
    }

    #[test]
    fn low_latency_counts() {
        // conv 7*7*1*3+3, bottleneck, dense 100, output 12
        let hand = |flat: usize, b: usize| 150 + (flat * b + b) + (b * 100 + 100) + 1212;
        let spec = ModelSpec::low_latency(28, 28);
        assert_eq!(count_params(&spec).unwrap(), hand(8 * 8 * 3, 51));
        assert_eq!(count_params(&spec).unwrap(), 16_405);
        let big = ModelSpec::low_latency(40, 98);
        assert_eq!(count_params(&big).unwrap(), hand(12 * 31 * 3, 51));
        assert_eq!(count_params(&big).unwrap(), 63_529);
        let ratio = 63_529.0 / 63_800.0;
        assert!((ratio - 1.0f64).abs() < 0.1);
        assert!(ModelSpec::low_latency(6, 40).layers().is_err());

        let mut f = ModelSpec::low_latency(40, 98);
        f.freq_stride_only = true;
        let trace = f.shape_trace().unwrap();
        assert_eq!(trace[0], vec![12, 92, 3]);
    }

    #[test]
    fn crm_traces() {
        assert_eq!(
            ModelSpec::shallow_crm(28, 28).spatial_trace().unwrap(),
            vec![28, 14, 7, 4]
        );
        assert_eq!(
            ModelSpec::deep_crm(28, 28).spatial_trace().unwrap(),
            vec![28, 14, 7, 4, 2, 1]
        );
        let shallow = ModelSpec::shallow_crm(28, 28);
        let flat = shallow.shape_trace().unwrap();
        assert!(flat.contains(&vec![4 * 4 * 64]));

        let mut six = ModelSpec::deep_crm(28, 28);
        six.filters.push(8);
        assert!(matches!(six.layers(), Err(Error::Shape(_))));

        let mut elu = ModelSpec::shallow_crm(28, 28);
        elu.activation = Activation::Elu;
        assert_eq!(elu.shape_trace().unwrap(), shallow.shape_trace().unwrap());
        assert_eq!(count_params(&elu).unwrap(), count_params(&shallow).unwrap());
    }

    #[test]
    fn dropout_sites() {
        let spec = ModelSpec::mnist_cnn();
        let layers = spec.layers().unwrap();
        let pos = layers.iter().position(|l| *l == Layer::Dropout).unwrap();
        assert_eq!(layers[pos - 1], Layer::Activation(Activation::Relu));
        assert!(matches!(layers[pos + 1], Layer::Dense { outputs: 12, .. }));

        let mut bad = ModelSpec::shallow_crm(28, 28);
        bad.dropout_after = vec![4];
        assert!(bad.layers().is_err());
        bad.dropout_after = vec![0, 3];
        assert_eq!(
            bad.layers()
                .unwrap()
                .iter()
                .filter(|l| **l == Layer::Dropout)
                .count(),
            2
        );
    }

    #[test]
    fn canonical_round_trip() {
        for v in Variant::ALL {
            let mut spec = ModelSpec::new(v, 28, 28);
            spec.keep_prob = 0.75;
            let back = ModelSpec::from_canonical(&spec.canonical()).unwrap();
            assert_eq!(back, spec);
        }
        let mut s = ModelSpec::low_latency(28, 28);
        assert!(s.set("bogus", "1").is_err());
        assert!(s.set("hidden", "x").is_err());
        s.set("filters", "4, 8").unwrap();
        assert_eq!(s.filters, vec![4, 8]);
        assert!(ModelSpec::from_canonical("").is_err());
    }

    proptest! {
        #[test]
        fn closed_form_matches_layer_shapes(h in 7usize..60, w in 7usize..60, b in 1usize..80, crm: bool) {
            let mut spec = if crm { ModelSpec::shallow_crm(h, w) } else { ModelSpec::low_latency(h, w) };
            spec.bottleneck = b;
            let from_shapes: usize = spec
                .layers()
                .unwrap()
                .iter()
                .flat_map(|l| l.param_shapes())
                .map(|s| s.iter().product::<usize>())
                .sum();
            prop_assert_eq!(count_params(&spec).unwrap(), from_shapes);
        }
    }
}
