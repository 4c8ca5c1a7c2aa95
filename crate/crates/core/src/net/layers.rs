use super::params::{Bound, Init, ParamId, ParamStore};
use crate::error::Result;
use crate::ndgrad::{Padding, Var};

/// Registers parameters under a dotted name prefix.
pub(crate) struct Builder<'a> {
    store: &'a mut ParamStore,
    seed: u64,
    prefix: String,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Self {
            store,
            seed,
            prefix: String::new(),
        }
    }

    pub fn scope(&mut self, name: &str) -> Builder<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Builder {
            store: self.store,
            seed: self.seed,
            prefix,
        }
    }

    fn param(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId {
        let full = format!("{}.{name}", self.prefix);
        self.store.add(&full, shape, init, self.seed)
    }

    pub fn linear(&mut self, name: &str, d_in: usize, d_out: usize) -> Linear {
        let mut s = self.scope(name);
        Linear {
            w: s.param("w", &[d_in, d_out], Init::FanIn),
            b: s.param("b", &[d_out], Init::Zeros),
        }
    }

    pub fn zero_linear(&mut self, name: &str, d_in: usize, d_out: usize) -> Linear {
        let mut s = self.scope(name);
        Linear {
            w: s.param("w", &[d_in, d_out], Init::Zeros),
            b: s.param("b", &[d_out], Init::Zeros),
        }
    }

    pub fn conv(&mut self, name: &str, k: usize, d_in: usize, d_out: usize, stride: usize, init: Init) -> Conv {
        let mut s = self.scope(name);
        Conv {
            w: s.param("w", &[k, d_in, d_out], init),
            b: s.param("b", &[d_out], Init::Zeros),
            stride,
        }
    }

    pub fn conv_transpose(&mut self, name: &str, k: usize, d_in: usize, d_out: usize, stride: usize) -> ConvTranspose {
        let mut s = self.scope(name);
        ConvTranspose {
            w: s.param("w", &[k, d_out, d_in], Init::FanIn),
            b: s.param("b", &[d_out], Init::Zeros),
            stride,
        }
    }

    /// Layer widths `dims[0] → … → dims[last]`, GELU between layers.
    pub fn mlp(&mut self, name: &str, dims: &[usize]) -> Mlp {
        let mut s = self.scope(name);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| s.linear(&format!("l{i}"), w[0], w[1]))
            .collect();
        Mlp { layers }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.affine(p.get(self.w), p.get(self.b))
    }
}

/// Same-padded temporal convolution with bias.
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
}

impl Conv {
    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.temporal_conv(p.get(self.w), self.stride, Padding::Same)?
            .add(p.get(self.b))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvTranspose {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
}

impl ConvTranspose {
    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        x.conv_transpose(p.get(self.w), self.stride)?.add(p.get(self.b))
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn forward<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(p, h)?;
            if i + 1 < self.layers.len() {
                h = h.gelu()?;
            }
        }
        Ok(h)
    }
}
