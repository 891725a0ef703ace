//! Encoder shape configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the encoder. The desk default (2 layers, 64 hidden, 4 heads)
/// trains in minutes on a CPU while leaving room for blockwise target
/// representations and attention analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Transformer layer count.
    pub layers: usize,
    /// Hidden width K.
    pub hidden: usize,
    /// Attention head count; must divide `hidden`.
    pub heads: usize,
    /// Feed-forward inner width.
    pub ffn: usize,
    /// Maximum sequence length (position table size).
    pub max_len: usize,
    /// Vocabulary size.
    pub vocab_size: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ffn", self.ffn),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::config(format!(
                "hidden {} not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// The desk default architecture.
    pub fn desk_default(vocab_size: usize) -> Self {
        EncoderConfig { layers: 2, hidden: 64, heads: 4, ffn: 256, max_len: 128, vocab_size }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indivisible_heads() {
        let mut c = EncoderConfig::desk_default(100);
        c.heads = 3;
        assert!(c.validate().is_err());
        c.heads = 4;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_zero_counts() {
        let mut c = EncoderConfig::desk_default(100);
        c.layers = 0;
        assert!(c.validate().is_err());
    }
}
