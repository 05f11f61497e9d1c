use crate::{Error, Result};

/// Piecewise aggregate approximation with exact fractional segment boundaries.
///
/// Segment `j` covers the real interval `[j*T/n, (j+1)*T/n)` and sample `i`
/// covers `[i, i+1)`. Each output is the overlap-weighted mean of the samples
/// it touches, so `n` need not divide `T`, and `n > T` replicates samples
/// proportionally.
///
/// Boundaries are compared on the integer grid scaled by `n`, so the weights
/// are exact.
pub fn paa(series: &[f64], n: usize) -> Result<Vec<f64>> {
    let t = series.len();
    if t == 0 {
        return Err(Error::invalid("PAA input series is empty"));
    }
    if n == 0 {
        return Err(Error::invalid("PAA segment count must be at least 1"));
    }
    if n == t {
        return Ok(series.to_vec());
    }
    // In scaled units a sample spans `n` and a segment spans `t`.
    let (t_u, n_u) = (t as u64, n as u64);
    let mut out = Vec::with_capacity(n);
    let mut i = 0usize;
    for j in 0..n_u {
        let (seg_lo, seg_hi) = (j * t_u, (j + 1) * t_u);
        let mut acc = 0.0;
        while i < t {
            let (s_lo, s_hi) = (i as u64 * n_u, (i as u64 + 1) * n_u);
            let overlap = seg_hi.min(s_hi).saturating_sub(seg_lo.max(s_lo));
            acc += overlap as f64 * series[i];
            if s_hi <= seg_hi {
                i += 1;
            } else {
                break;
            }
        }
        out.push(acc / t as f64);
    }
    Ok(out)
}
