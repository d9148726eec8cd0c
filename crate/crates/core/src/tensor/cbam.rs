//! Convolutional block attention: channel gate followed by a spatial gate.

use super::conv::{conv2d, Padding};
use super::ops::{add, concat_channels, max_channels, max_spatial, mean_channels, mean_spatial, relu, scale_channels, scale_pixels, sigmoid};
use super::Var;
use crate::error::Result;

/// Weights of one attention block.
///
/// The shared channel MLP is two 1x1 convolutions (`C -> C/r -> C`); the
/// spatial gate is a single-output convolution over the stacked
/// channel-mean and channel-max maps.
#[derive(Clone, Copy, Debug)]
pub struct CbamVars<'t> {
    pub fc1_w: Var<'t>,
    pub fc1_b: Var<'t>,
    pub fc2_w: Var<'t>,
    pub fc2_b: Var<'t>,
    pub spatial_w: Var<'t>,
    pub spatial_b: Var<'t>,
}

fn channel_mlp<'t>(pooled: Var<'t>, p: &CbamVars<'t>) -> Result<Var<'t>> {
    let hidden = relu(conv2d(pooled, p.fc1_w, Some(p.fc1_b), 1, Padding::Same)?)?;
    conv2d(hidden, p.fc2_w, Some(p.fc2_b), 1, Padding::Same)
}

pub fn cbam<'t>(input: Var<'t>, p: &CbamVars<'t>) -> Result<Var<'t>> {
    let avg = channel_mlp(mean_spatial(input)?, p)?;
    let max = channel_mlp(max_spatial(input)?, p)?;
    let channel_gate = sigmoid(add(avg, max)?)?;
    let x = scale_channels(input, channel_gate)?;
    let maps = concat_channels(&[mean_channels(x)?, max_channels(x)?])?;
    let spatial_gate = sigmoid(conv2d(maps, p.spatial_w, Some(p.spatial_b), 1, Padding::Same)?)?;
    scale_pixels(x, spatial_gate)
}
