//! Cross-modal scan orders: one token per spatial position, each drawn from
//! either the backbone features or the PAN features, with no position used
//! twice. The sequence therefore has length H*W, half of the pooled 2*H*W
//! tokens of the two modalities.

use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Which modality a token is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Backbone,
    Pan,
}

/// How positions are assigned to modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanPattern {
    /// Ordered-dither (Bayer matrix) thresholding: deterministic, evenly
    /// spread, and exactly a checkerboard at bfr = 0.5. The default.
    Bayer,
    /// Uniform random assignment of the exact backbone count, seeded.
    Random(u64),
}

/// An interleaved token sequence over positions `0..H*W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOrder {
    height: usize,
    width: usize,
    bfr: f64,
    tokens: Vec<(Source, usize)>,
}

/// 8x8 Bayer matrix with pixel-level recursion, so the lowest-valued half of
/// the cells forms a checkerboard.
fn bayer8(i: usize, j: usize) -> u32 {
    const M2: [[u32; 2]; 2] = [[0, 2], [3, 1]];
    let mut value = 0;
    let mut ii = i % 8;
    let mut jj = j % 8;
    for _ in 0..3 {
        value = 4 * value + M2[ii & 1][jj & 1];
        ii >>= 1;
        jj >>= 1;
    }
    value
}

/// Builds a scan order for an H x W grid with backbone feature ratio `bfr`.
///
/// Tokens follow raster order; position `(i, j)` is assigned to the backbone
/// when its threshold key ranks among the `round(bfr * H * W)` smallest.
/// The assignment is a pure function of `(H, W, bfr, pattern)`.
pub fn build_scan_order(
    height: usize,
    width: usize,
    bfr: f64,
    pattern: ScanPattern,
) -> Result<ScanOrder> {
    if !(bfr > 0.0 && bfr < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "backbone feature ratio {bfr} must lie in (0, 1)"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let hw = height * width;
    let n_backbone = (bfr * hw as f64).round() as usize;

    let backbone_positions: Vec<bool> = match pattern {
        ScanPattern::Bayer => {
            // Rank positions by Bayer threshold, raster index breaking ties.
            let mut keyed: Vec<(u32, usize)> = (0..hw)
                .map(|p| (bayer8(p / width, p % width), p))
                .collect();
            keyed.sort_unstable();
            let mut flags = vec![false; hw];
            for &(_, p) in keyed.iter().take(n_backbone) {
                flags[p] = true;
            }
            flags
        }
        ScanPattern::Random(seed) => {
            let mut positions: Vec<usize> = (0..hw).collect();
            let mut rng = CounterRng::new(seed);
            rng.shuffle(&mut positions);
            let mut flags = vec![false; hw];
            for &p in positions.iter().take(n_backbone) {
                flags[p] = true;
            }
            flags
        }
    };

    let tokens = (0..hw)
        .map(|p| {
            let src = if backbone_positions[p] {
                Source::Backbone
            } else {
                Source::Pan
            };
            (src, p)
        })
        .collect();
    Ok(ScanOrder {
        height,
        width,
        bfr,
        tokens,
    })
}

impl ScanOrder {
    /// Assembles an order from explicit tokens, checking the bijection
    /// invariant: every position in `0..H*W` appears exactly once.
    pub fn from_tokens(
        height: usize,
        width: usize,
        bfr: f64,
        tokens: Vec<(Source, usize)>,
    ) -> Result<Self> {
        let hw = height * width;
        if tokens.len() != hw {
            return Err(Error::InvalidArgument(format!(
                "{} tokens for {hw} positions",
                tokens.len()
            )));
        }
        let mut seen = vec![false; hw];
        for &(_, p) in &tokens {
            if p >= hw || seen[p] {
                return Err(Error::InvalidArgument(format!(
                    "position {p} repeated or out of range"
                )));
            }
            seen[p] = true;
        }
        Ok(ScanOrder {
            height,
            width,
            bfr,
            tokens,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bfr(&self) -> f64 {
        self.bfr
    }

    /// Sequence length, always exactly H*W.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[(Source, usize)] {
        &self.tokens
    }

    pub fn backbone_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|(s, _)| *s == Source::Backbone)
            .count()
    }

    /// New order with the token sequence permuted (sources travel with their
    /// positions). Used to probe positional sensitivity.
    pub fn permuted(&self, seed: u64) -> ScanOrder {
        let mut tokens = self.tokens.clone();
        CounterRng::new(seed).shuffle(&mut tokens);
        ScanOrder {
            height: self.height,
            width: self.width,
            bfr: self.bfr,
            tokens,
        }
    }

    /// Assignment rendered as an H*W byte mask (1 = backbone) for export.
    pub fn source_mask(&self) -> Vec<u8> {
        let mut mask = vec![0u8; self.height * self.width];
        for &(src, p) in &self.tokens {
            if src == Source::Backbone {
                mask[p] = 1;
            }
        }
        mask
    }
}
