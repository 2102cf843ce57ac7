use crate::data::{image_input, tensor_to_gray, Pnm, PnmKind};
use crate::error::{dim_err, Error, Result};
use crate::metrics::{Confusion, MetricsAccumulator, MetricsReport};
use crate::network::Model;
use crate::tensor::{resize_bilinear, sigmoid_scalar};

/// Binary P5 mask (0 or 255) at the image's own resolution: the image is
/// resized to the model's input size, the probability map is resized back
/// and thresholded at 0.5.
pub fn predict_mask(model: &Model<f32>, img: &Pnm) -> Result<Pnm> {
    if model.cfg.output_channels != 1 {
        return Err(Error::Contract(format!(
            "mask prediction needs one output channel, model has {}",
            model.cfg.output_channels
        )));
    }
    let size = model.cfg.input_size;
    let x = image_input(img, size)?.reshape(&[1, 3, size, size])?;
    let probs = model.forward(&x)?.map(sigmoid_scalar);
    let full = resize_bilinear(&probs, img.height, img.width)?;
    tensor_to_gray(&full.map(|p| if p > 0.5 { 1.0 } else { 0.0 }))
}

/// Metrics of one predicted mask against a target, both P5; pixels above
/// 127 count as foreground.
pub fn compare_masks(pred: &Pnm, target: &Pnm) -> Result<MetricsReport> {
    for m in [pred, target] {
        if m.kind != PnmKind::Gray {
            return Err(Error::UnsupportedFormat("masks must be grayscale (P5)".into()));
        }
    }
    if (pred.width, pred.height) != (target.width, target.height) {
        return Err(dim_err!(
            "prediction is {}x{}, target is {}x{}",
            pred.width,
            pred.height,
            target.width,
            target.height
        ));
    }
    let fg = |v: &u8| *v > 127;
    let mut acc = MetricsAccumulator::new();
    acc.add_image(&Confusion::from_masks(pred.pixels.iter().map(fg), target.pixels.iter().map(fg)));
    Ok(acc.finish())
}
