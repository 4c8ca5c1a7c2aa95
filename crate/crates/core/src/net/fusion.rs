use super::config::{FusionKind, ModelConfig};
use super::layers::{Builder, Conv, Linear};
use super::params::{Bound, Init};
use crate::error::{Error, Result};
use crate::ndgrad::Var;

/// Cross-attention from `query` frames onto `context` frames. The output
/// projection starts at zero so the module is an identity residual at init.
#[derive(Clone, Copy, Debug)]
pub struct CrossAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    scale: f64,
}

impl CrossAttention {
    fn build(b: &mut Builder<'_>, name: &str, d: usize, d_attn: usize) -> Self {
        let mut s = b.scope(name);
        Self {
            q: s.linear("q", d, d_attn),
            k: s.linear("k", d, d_attn),
            v: s.linear("v", d, d),
            out: s.zero_linear("o", d, d),
            scale: 1.0 / (d_attn as f64).sqrt(),
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, query: Var<'t>, context: Var<'t>) -> Result<Var<'t>> {
        let q = self.q.forward(p, query)?;
        let k = self.k.forward(p, context)?;
        let v = self.v.forward(p, context)?;
        let weights = q.matmul(k.transpose()?)?.scale(self.scale)?.softmax(1)?;
        self.out.forward(p, weights.matmul(v)?)
    }
}

/// One inter-block fusion site.
#[derive(Clone, Debug)]
pub enum Fusion {
    None,
    Mlp {
        hidden: Linear,
        out: Linear,
    },
    Conv {
        conv: Conv,
    },
    /// Ordered (v←k, v←o, k←v, k←o, o←v, o←k).
    Attn {
        pairs: Box<[CrossAttention; 6]>,
    },
}

impl Fusion {
    pub(crate) fn build(b: &mut Builder<'_>, cfg: &ModelConfig) -> Self {
        let d = cfg.d_v;
        match cfg.fusion {
            FusionKind::None => Fusion::None,
            FusionKind::Mlp => Fusion::Mlp {
                hidden: b.linear("hidden", 3 * d, cfg.fusion_hidden),
                out: b.zero_linear("out", cfg.fusion_hidden, d),
            },
            FusionKind::Conv => Fusion::Conv {
                conv: b.conv("conv", cfg.kernel_size, 3 * d, d, 1, Init::Zeros),
            },
            FusionKind::Attn => {
                let names = ["v_k", "v_o", "k_v", "k_o", "o_v", "o_k"];
                let pairs = names.map(|n| CrossAttention::build(b, n, d, cfg.attn_dim));
                Fusion::Attn { pairs: Box::new(pairs) }
            }
        }
    }

    /// Returns the updated `(v, k, o)` features; shapes are preserved.
    pub fn forward<'t>(&self, p: &Bound<'t>, h: [Var<'t>; 3]) -> Result<[Var<'t>; 3]> {
        let [hv, hk, ho] = h;
        if hv.shape() != hk.shape() || hv.shape() != ho.shape() {
            return Err(Error::shape(
                "fuse",
                format!("{:?} / {:?} / {:?}", hv.shape(), hk.shape(), ho.shape()),
            ));
        }
        match self {
            Fusion::None => Ok(h),
            Fusion::Mlp { hidden, out } => {
                let cat = hv.tape().concat_cols(&[hv, hk, ho])?;
                let fused = out.forward(p, hidden.forward(p, cat)?.gelu()?)?;
                Ok([hv.add(fused)?, hk.add(fused)?, ho.add(fused)?])
            }
            Fusion::Conv { conv } => {
                let cat = hv.tape().concat_cols(&[hv, hk, ho])?;
                let fused = conv.forward(p, cat)?;
                Ok([hv.add(fused)?, hk.add(fused)?, ho.add(fused)?])
            }
            Fusion::Attn { pairs } => {
                let [vk, vo, kv, ko, ov, ok] = pairs.as_ref();
                let v = hv.add(vk.forward(p, hv, hk)?)?.add(vo.forward(p, hv, ho)?)?;
                let k = hk.add(kv.forward(p, hk, hv)?)?.add(ko.forward(p, hk, ho)?)?;
                let o = ho.add(ov.forward(p, ho, hv)?)?.add(ok.forward(p, ho, hk)?)?;
                Ok([v, k, o])
            }
        }
    }
}
