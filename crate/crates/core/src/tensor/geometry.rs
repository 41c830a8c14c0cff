use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero padding so that `out = ceil(in / stride)`; an odd padding
    /// total puts the extra row/column on the bottom/right.
    Same,
    /// No padding; `out = floor((in - k) / stride) + 1`.
    Valid,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Same => "same",
            Padding::Valid => "valid",
        }
    }
}

/// Output length and leading padding along one spatial axis.
pub fn output_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if stride == 0 || kernel == 0 {
        return Err(Error::param(
            "stride",
            "kernel size and stride must be >= 1",
        ));
    }
    if input == 0 {
        return Err(Error::Shape("spatial dimension is zero".into()));
    }
    match padding {
        Padding::Valid => {
            if kernel > input {
                return Err(Error::Shape(format!(
                    "kernel {kernel} larger than unpadded input {input}"
                )));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Ok((out, total / 2))
        }
    }
}

/// Fully resolved geometry of a 2-D convolution or pooling window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window2d {
    pub in_h: usize,
    pub in_w: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl Window2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_h: usize,
        in_w: usize,
        k_h: usize,
        k_w: usize,
        stride_h: usize,
        stride_w: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (out_h, pad_top) = output_dim(in_h, k_h, stride_h, padding)?;
        let (out_w, pad_left) = output_dim(in_w, k_w, stride_w, padding)?;
        Ok(Window2d {
            in_h,
            in_w,
            k_h,
            k_w,
            stride_h,
            stride_w,
            out_h,
            out_w,
            pad_top,
            pad_left,
        })
    }

    /// Input coordinate for output `o` and kernel offset `k`, or `None`
    /// when it falls in the padding.
    #[inline]
    pub fn src_row(&self, o: usize, k: usize) -> Option<usize> {
        (o * self.stride_h + k)
            .checked_sub(self.pad_top)
            .filter(|&r| r < self.in_h)
    }

    #[inline]
    pub fn src_col(&self, o: usize, k: usize) -> Option<usize> {
        (o * self.stride_w + k)
            .checked_sub(self.pad_left)
            .filter(|&c| c < self.in_w)
    }
}
