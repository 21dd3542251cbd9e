use serde::{Deserialize, Serialize};

use super::geometry::{fov_box, FovBox, LayerGeometry};
use crate::error::{Error, Result};
use crate::nn::{Model, PatchSource, Tensor};
use crate::parallel::{map_range, try_map_range, Execution};

/// Default ranking depth per channel.
pub const DEFAULT_TOP_K: usize = 100;

/// Spatial maximum of one channel's map for one patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScore {
    pub patch: u32,
    pub channel: u32,
    pub score: f32,
    /// Map position `(row, col)` of the first maximum in row-major order.
    pub argmax: (u32, u32),
}

/// One score per channel of a `[c, h, w]` activation map.
pub fn score_channels(map: &Tensor<f32>, patch: u32) -> Result<Vec<ChannelScore>> {
    let (c, h, w) = map.dims3()?;
    if h * w == 0 {
        return Err(Error::InvalidArgument("empty activation map".into()));
    }
    Ok((0..c)
        .map(|ch| {
            let values = &map.data()[ch * h * w..(ch + 1) * h * w];
            let mut best = 0;
            for (i, &v) in values.iter().enumerate() {
                if v > values[best] {
                    best = i;
                }
            }
            ChannelScore {
                patch,
                channel: ch as u32,
                score: values[best],
                argmax: ((best / w) as u32, (best % w) as u32),
            }
        })
        .collect())
}

/// Activation map of layer `layer` for one input.
pub fn layer_map(model: &Model<f32>, layer: usize, input: &Tensor<f32>) -> Result<Tensor<f32>> {
    let mut acts = model.forward_until(input, layer + 1)?;
    Ok(acts.outputs.swap_remove(layer))
}

/// Channel scores of every patch at `layer`; entry `i` belongs to patch `i`.
pub fn score_patches<S: PatchSource + ?Sized>(
    model: &Model<f32>,
    layer: usize,
    patches: &S,
    exec: Execution,
) -> Result<Vec<Vec<ChannelScore>>> {
    try_map_range(exec, patches.len(), |i| {
        score_channels(&layer_map(model, layer, &patches.patch(i))?, i as u32)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub patch: u32,
    pub score: f32,
    pub argmax: (u32, u32),
    pub fov: FovBox,
}

/// The top patches of one channel, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRanking {
    pub channel: u32,
    pub entries: Vec<RankEntry>,
}

impl ChannelRanking {
    pub fn patches(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.patch)
    }
}

/// Keeps the `k` highest scores of `channel` from `scores`; equal scores are
/// ordered by ascending patch id, so the result depends only on the set of
/// scores, not their order.
pub fn rank_top_k(
    channel: u32,
    scores: &[ChannelScore],
    k: usize,
    geometry: &LayerGeometry,
    patch_dims: (usize, usize),
) -> Result<ChannelRanking> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let mut own: Vec<&ChannelScore> = scores.iter().filter(|s| s.channel == channel).collect();
    own.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.patch.cmp(&b.patch)));
    own.truncate(k);
    let entries = own
        .into_iter()
        .map(|s| {
            Ok(RankEntry {
                patch: s.patch,
                score: s.score,
                argmax: s.argmax,
                fov: fov_box(geometry, (s.argmax.0 as usize, s.argmax.1 as usize), patch_dims)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ChannelRanking { channel, entries })
}

/// Ranks every channel; per-patch score lists must all have `channels`
/// entries in channel order.
pub fn rank_channels(
    per_patch: &[Vec<ChannelScore>],
    channels: usize,
    k: usize,
    geometry: &LayerGeometry,
    patch_dims: (usize, usize),
    exec: Execution,
) -> Result<Vec<ChannelRanking>> {
    if per_patch.iter().any(|s| s.len() != channels) {
        return Err(Error::InvalidArgument(format!(
            "every patch needs {channels} channel scores"
        )));
    }
    map_range(exec, channels, |c| {
        let column: Vec<ChannelScore> = per_patch.iter().map(|s| s[c]).collect();
        rank_top_k(c as u32, &column, k, geometry, patch_dims)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerKind;

    fn geom() -> LayerGeometry {
        LayerGeometry {
            layer: 0,
            kind: LayerKind::Conv,
            r: 3,
            j: 1,
            start: 0.0,
            map: (4, 5),
        }
    }

    #[test]
    fn constant_map_scores_at_origin() {
        let t = Tensor::filled(vec![2, 4, 5], 0.7);
        let s = score_channels(&t, 3).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|c| c.score == 0.7 && c.argmax == (0, 0) && c.patch == 3));
    }

    #[test]
    fn hot_neuron_is_found() {
        let mut t = Tensor::zeros(vec![1, 4, 5]);
        t.data_mut()[2 * 5 + 3] = 2.0;
        assert_eq!(score_channels(&t, 0).unwrap()[0].argmax, (2, 3));
    }

    #[test]
    fn ranking_clamps_and_breaks_ties() {
        let scores: Vec<ChannelScore> = [(5, 1.0), (2, 3.0), (9, 1.0), (1, 1.0)]
            .iter()
            .map(|&(p, s)| ChannelScore {
                patch: p,
                channel: 0,
                score: s,
                argmax: (0, 0),
            })
            .collect();
        let r = rank_top_k(0, &scores, 100, &geom(), (4, 5)).unwrap();
        assert_eq!(r.patches().collect::<Vec<_>>(), vec![2, 1, 5, 9]);
        let mut reversed = scores.clone();
        reversed.reverse();
        assert_eq!(rank_top_k(0, &reversed, 100, &geom(), (4, 5)).unwrap(), r);
        assert_eq!(rank_top_k(0, &scores, 2, &geom(), (4, 5)).unwrap().entries.len(), 2);
    }
}
