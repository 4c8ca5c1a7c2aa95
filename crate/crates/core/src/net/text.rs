//! Frozen, deterministic text encoder.
//!
//! Each gloss becomes one or two sub-tokens (two when the FNV hash of its
//! spelling is odd), an end-of-sentence token is appended, and every token
//! is encoded as `GELU(E_tok · W + mean(E) · U + b)` from fixed seeded
//! tables. The tables never receive gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::params::fnv1a;
use crate::ctc::GlossVocab;
use crate::error::Result;
use crate::ndgrad::{gelu, matmul, Array};

#[derive(Clone, Debug, PartialEq)]
pub struct TextFeatures {
    /// `[N1 + 1 × d_t]`; the last row is the end-of-sentence token.
    pub features: Array,
    /// Gloss position of each non-EOS token (length `N1`).
    pub token_to_gloss: Vec<usize>,
}

impl TextFeatures {
    pub fn eos_index(&self) -> usize {
        self.token_to_gloss.len()
    }

    pub fn eos_feature(&self) -> Array {
        let d = self.features.cols();
        Array::new(&[1, d], self.features.row(self.eos_index()).to_vec()).expect("row")
    }
}

/// Number of sub-tokens a gloss is split into.
pub fn subtoken_count(gloss: &str) -> usize {
    if fnv1a(gloss.as_bytes()) % 2 == 1 {
        2
    } else {
        1
    }
}

#[derive(Clone, Debug)]
pub struct TextEncoder {
    embed: Array,
    mix: Array,
    context: Array,
    bias: Array,
}

const EOS_TOKEN: usize = 0;

impl TextEncoder {
    pub fn new(num_classes: usize, d_t: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).expect("std > 0");
        let scaled = Normal::new(0.0, (1.0 / d_t as f64).sqrt()).expect("std > 0");
        let mut table = |rows: usize, cols: usize, dist: &Normal<f64>| {
            let data = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
            Array::new(&[rows, cols], data).expect("shape")
        };
        let tokens = 2 * num_classes.saturating_sub(1) + 1;
        let embed = table(tokens, d_t, &unit);
        let mix = table(d_t, d_t, &scaled);
        let context = table(d_t, d_t, &scaled);
        let bias = table(1, d_t, &unit).map(|v| 0.1 * v);
        Self {
            embed,
            mix,
            context,
            bias,
        }
    }

    /// Token ids and the gloss position each non-EOS token came from.
    pub fn tokenize<S: AsRef<str>>(&self, glosses: &[S], vocab: &GlossVocab) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut tokens = Vec::new();
        let mut map = Vec::new();
        for (pos, g) in glosses.iter().enumerate() {
            let id = vocab.id(g.as_ref())?;
            for part in 0..subtoken_count(g.as_ref()) {
                tokens.push(2 * (id - 1) + part + 1);
                map.push(pos);
            }
        }
        tokens.push(EOS_TOKEN);
        Ok((tokens, map))
    }

    pub fn encode<S: AsRef<str>>(&self, glosses: &[S], vocab: &GlossVocab) -> Result<TextFeatures> {
        let (tokens, token_to_gloss) = self.tokenize(glosses, vocab)?;
        let d = self.embed.cols();
        let mut e = Vec::with_capacity(tokens.len() * d);
        for &tok in &tokens {
            e.extend_from_slice(self.embed.row(tok));
        }
        let e = Array::new(&[tokens.len(), d], e)?;
        let mut mean = vec![0.0; d];
        for r in 0..e.rows() {
            for (m, &v) in mean.iter_mut().zip(e.row(r)) {
                *m += v / e.rows() as f64;
            }
        }
        let ctx = matmul(&Array::new(&[1, d], mean)?, &self.context)?;
        let mixed = matmul(&e, &self.mix)?;
        let mut out = mixed.into_vec();
        for row in out.chunks_mut(d) {
            for ((o, &c), &b) in row.iter_mut().zip(ctx.data()).zip(self.bias.data()) {
                *o = gelu(*o + c + b);
            }
        }
        Ok(TextFeatures {
            features: Array::new(&[tokens.len(), d], out)?,
            token_to_gloss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_token_contract() {
        let vocab = GlossVocab::new(["HELLO", "WORLD", "RAIN", "SUN"]).unwrap();
        let enc = TextEncoder::new(vocab.size(), 8, 3);
        let sent = ["RAIN", "HELLO", "RAIN"];
        let a = enc.encode(&sent, &vocab).unwrap();
        let b = TextEncoder::new(vocab.size(), 8, 3).encode(&sent, &vocab).unwrap();
        assert_eq!(a, b);
        let n1 = a.token_to_gloss.len();
        assert!((3..=6).contains(&n1));
        assert_eq!(a.features.rows(), n1 + 1);
        assert_eq!(a.eos_feature().shape(), &[1, 8]);
        assert!(enc.encode(&["NOPE"], &vocab).is_err());
    }

    #[test]
    fn both_split_kinds_occur() {
        let counts: Vec<usize> = (0..20).map(|i| subtoken_count(&format!("G{i}"))).collect();
        assert!(counts.contains(&1) && counts.contains(&2));
    }
}
