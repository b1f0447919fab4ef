use crate::backward::{backward, GradientBundle};
use crate::error::Result;
use crate::filter::{jbf_forward, FilterParams, ForwardCache, Window};
use crate::volume::Volume;

/// One trainable filter layer: forward produces the prediction and its
/// cache, backward maps an upstream `dL/dy` onto the sigmas, the input and
/// the guide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JbfLayer {
    pub params: FilterParams,
    pub window: Window,
}

impl JbfLayer {
    pub fn new(params: FilterParams, window: Window) -> Self {
        JbfLayer { params, window }
    }

    pub fn forward(&self, x: &Volume, guide: &Volume) -> Result<ForwardCache> {
        jbf_forward(x, guide, &self.params, &self.window)
    }

    pub fn backward(
        &self,
        x: &Volume,
        guide: &Volume,
        cache: &ForwardCache,
        dl_dy: &Volume,
    ) -> Result<GradientBundle> {
        backward(x, guide, &self.params, &self.window, cache, dl_dy)
    }
}
