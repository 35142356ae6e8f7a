//! Closed-form parameter counts from hyper-parameters alone.
//!
//! These never look at allocated tensors; [`super::enumerated_params`] is the
//! independent route that does.

use super::BnCounting;

fn bn(c: u64, counting: BnCounting) -> u64 {
    match counting {
        BnCounting::Folded => c,
        BnCounting::Affine => 2 * c,
    }
}

/// Conv (no bias) → BN → activation.
pub fn conv(c1: usize, c2: usize, k: usize, groups: usize, counting: BnCounting) -> u64 {
    let (c1, c2, k, g) = (c1 as u64, c2 as u64, k as u64, groups as u64);
    c1 * c2 * k * k / g + bn(c2, counting)
}

pub fn ghost_conv(c1: usize, c2: usize, k: usize, counting: BnCounting) -> u64 {
    let hidden = c2 / 2;
    conv(c1, hidden, k, 1, counting) + conv(hidden, hidden, 5, hidden, counting)
}

pub fn ghost_bottleneck(c1: usize, c2: usize, k: usize, stride: usize, counting: BnCounting) -> u64 {
    let mid = c2 / 2;
    let mut total = ghost_conv(c1, mid, 1, counting) + ghost_conv(mid, c2, 1, counting);
    if stride == 2 {
        total += conv(mid, mid, k, mid, counting);
        total += conv(c1, c1, k, c1, counting) + conv(c1, c2, 1, 1, counting);
    } else if c1 != c2 {
        total += conv(c1, c2, 1, 1, counting);
    }
    total
}

/// Multiply-accumulates of a convolution producing `out_area` pixels per channel.
pub fn conv_macs(c1: usize, c2: usize, k: usize, groups: usize, out_area: usize) -> u64 {
    (c2 * c1 / groups * k * k) as u64 * out_area as u64
}

/// GhostConv MACs: primary conv to `c2/2` channels plus the 5×5 depthwise
/// cheap operation, both at the output resolution.
pub fn ghost_conv_macs(c1: usize, c2: usize, k: usize, out_area: usize) -> u64 {
    let hidden = c2 / 2;
    conv_macs(c1, hidden, k, 1, out_area) + conv_macs(hidden, hidden, 5, hidden, out_area)
}

pub fn bottleneck(c1: usize, c2: usize, counting: BnCounting) -> u64 {
    conv(c1, c2, 1, 1, counting) + conv(c2, c2, 3, 1, counting)
}

pub fn linear(din: usize, dout: usize, bias: bool) -> u64 {
    (din * dout + if bias { dout } else { 0 }) as u64
}

/// In-projection (3c×c + 3c) and out-projection (c×c + c).
pub fn multi_head_attention(c: usize) -> u64 {
    (3 * c * c + 3 * c) as u64 + linear(c, c, true)
}

pub fn transformer_layer(c: usize) -> u64 {
    3 * linear(c, c, false) + multi_head_attention(c) + 2 * linear(c, c, false)
}

pub fn transformer_block(c1: usize, c2: usize, layers: usize, counting: BnCounting) -> u64 {
    let stem = if c1 != c2 { conv(c1, c2, 1, 1, counting) } else { 0 };
    stem + linear(c2, c2, true) + layers as u64 * transformer_layer(c2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum C3Kind {
    Bottleneck,
    Ghost,
    Transformer { heads: usize },
}

pub fn c3(c1: usize, c2: usize, n: usize, kind: C3Kind, counting: BnCounting) -> u64 {
    let hidden = c2 / 2;
    let outer = 2 * conv(c1, hidden, 1, 1, counting) + conv(2 * hidden, c2, 1, 1, counting);
    let inner = match kind {
        C3Kind::Bottleneck => n as u64 * bottleneck(hidden, hidden, counting),
        C3Kind::Ghost => n as u64 * ghost_bottleneck(hidden, hidden, 3, 1, counting),
        C3Kind::Transformer { .. } => transformer_block(hidden, hidden, n, counting),
    };
    outer + inner
}

pub fn sppf(c1: usize, c2: usize, counting: BnCounting) -> u64 {
    let hidden = c1 / 2;
    conv(c1, hidden, 1, 1, counting) + conv(4 * hidden, c2, 1, 1, counting)
}

/// Width of the coordinate-attention bottleneck.
pub fn coord_att_mid(c: usize, reduction: usize) -> usize {
    (c / reduction).max(8)
}

/// Reduce conv (no bias) + standalone BN + two expand convs (no bias). The BN
/// is not part of a conv block, so both counting conventions keep γ and β.
pub fn coord_att(c: usize, reduction: usize) -> u64 {
    let mid = coord_att_mid(c, reduction) as u64;
    let c = c as u64;
    c * mid + 2 * mid + 2 * mid * c
}

pub fn detect(nc: usize, anchors_per_scale: usize, channels: &[usize]) -> u64 {
    let out = (anchors_per_scale * (nc + 5)) as u64;
    channels.iter().map(|&ch| ch as u64 * out + out).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use BnCounting::*;

    #[test]
    fn conv_block_examples() {
        assert_eq!(conv(3, 32, 6, 1, Affine), 3520);
        assert_eq!(conv(1, 1, 1, 1, Affine), 3);
        assert_eq!(conv(3, 32, 6, 1, Folded), 3488);
    }

    #[test]
    fn ghost_conv_example() {
        // (64·64 + 2·64) + (64·25 + 2·64)
        assert_eq!(ghost_conv(64, 128, 1, Affine), 4224 + 1728);
    }

    #[test]
    fn head_example() {
        assert_eq!(detect(1, 3, &[128, 256, 512]), 16_182);
    }

    #[test]
    fn coord_att_example() {
        // mid = max(8, 128/32) = 8 → 128·8 + 16 + 2·8·128
        assert_eq!(coord_att(128, 32), 3088);
        assert_eq!(coord_att(512, 32), 24_608);
    }

    #[test]
    fn ghost_c3_is_lighter_than_plain() {
        for c in [64, 128, 256, 512] {
            for n in 1..4 {
                for counting in [Folded, Affine] {
                    assert!(
                        c3(c, c, n, C3Kind::Ghost, counting) < c3(c, c, n, C3Kind::Bottleneck, counting)
                    );
                }
            }
        }
    }
}
