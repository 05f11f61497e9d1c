use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How two concatenated multichannel embeddings are aligned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtwMode {
    /// One univariate DTW over the whole channel-major concatenation.
    #[default]
    Concatenated,
    /// DTW within each channel block, summed over channels; warping never
    /// crosses a channel boundary.
    ChannelBlocked,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtwOptions {
    /// Sakoe-Chiba half-width; `None` leaves the warping unconstrained.
    pub band: Option<usize>,
    pub mode: DtwMode,
}

/// Unconstrained DTW with local cost `|a_i - b_j|`.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    dtw_banded(a, b, None)
}

/// DTW restricted to cells with `|i - j| <= w`. The band is widened to the
/// length difference when needed so a complete alignment always exists.
pub fn dtw_banded(a: &[f64], b: &[f64], band: Option<usize>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("DTW requires non-empty sequences"));
    }
    let (n, m) = (a.len(), b.len());
    let w = band.map_or(usize::MAX, |w| w.max(n.abs_diff(m)));
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::INFINITY);
        let lo = if w == usize::MAX { 1 } else { i.saturating_sub(w).max(1) };
        let hi = if w == usize::MAX { m } else { (i + w).min(m) };
        for j in lo..=hi {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = best + (a[i - 1] - b[j - 1]).abs();
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Distance between two embeddings laid out as `channels` equal blocks.
pub fn embedding_distance(a: &[f64], b: &[f64], channels: usize, opts: &DtwOptions) -> Result<f64> {
    match opts.mode {
        DtwMode::Concatenated => dtw_banded(a, b, opts.band),
        DtwMode::ChannelBlocked => {
            if channels == 0 || !a.len().is_multiple_of(channels) || !b.len().is_multiple_of(channels) {
                return Err(Error::Incomparable(format!(
                    "lengths {} and {} do not split into {channels} channel blocks",
                    a.len(),
                    b.len()
                )));
            }
            a.chunks(a.len() / channels)
                .zip(b.chunks(b.len() / channels))
                .map(|(x, y)| dtw_banded(x, y, opts.band))
                .sum()
        }
    }
}
