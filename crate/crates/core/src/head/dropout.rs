use rand::Rng;

use super::HeadConfig;

/// Keep flags for the input and hidden dropout sites.
///
/// Inverted dropout: kept units are scaled by `1/(1-p)` at train time, so
/// evaluation uses the identity mask with scale 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub input_keep: Vec<bool>,
    pub hidden_keep: Vec<bool>,
    pub scale: f64,
}

impl DropoutMask {
    pub fn identity(config: &HeadConfig) -> Self {
        DropoutMask {
            input_keep: vec![true; config.d_in],
            hidden_keep: vec![true; config.d_hidden],
            scale: 1.0,
        }
    }

    /// Draws input flags then hidden flags, each kept with probability `1-p`.
    pub fn sample<R: Rng + ?Sized>(config: &HeadConfig, rng: &mut R) -> Self {
        let mut mask = DropoutMask::identity(config);
        mask.resample(config.dropout_p, rng);
        mask
    }

    /// Redraws flags in place. With `p == 0` this is the identity.
    pub fn resample<R: Rng + ?Sized>(&mut self, p: f64, rng: &mut R) {
        if p == 0.0 {
            self.input_keep.fill(true);
            self.hidden_keep.fill(true);
            self.scale = 1.0;
            return;
        }
        for keep in self.input_keep.iter_mut().chain(self.hidden_keep.iter_mut()) {
            *keep = rng.random::<f64>() >= p;
        }
        self.scale = 1.0 / (1.0 - p);
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.input_keep.iter().chain(&self.hidden_keep).all(|&k| k)
    }
}
