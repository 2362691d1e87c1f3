use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::tensor_file::{load_tensor, save_tensor, DType, TensorFile};
use crate::tensor::Tensor;

/// Raw pixel frames, `N x C x H x W` with samples in `[0, 1]` and `C` in {1, 3}.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFrames {
    tensor: Tensor,
}

impl VideoFrames {
    pub fn new(tensor: Tensor) -> Result<Self> {
        let [n, c, h, w] = tensor.dims4()?;
        if n == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("empty video {:?}", tensor.dims())));
        }
        if c != 1 && c != 3 {
            return Err(Error::Shape(format!("frames need 1 or 3 channels, got {c}")));
        }
        if let Some(v) = tensor.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Shape(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(VideoFrames { tensor })
    }

    pub fn num_frames(&self) -> usize {
        self.tensor.dims()[0]
    }

    pub fn channels(&self) -> usize {
        self.tensor.dims()[1]
    }

    pub fn height(&self) -> usize {
        self.tensor.dims()[2]
    }

    pub fn width(&self) -> usize {
        self.tensor.dims()[3]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    /// Grayscale plane of one frame, `H x W` row-major. RGB uses Rec. 601 luma.
    pub fn gray(&self, frame: usize) -> Vec<f64> {
        let (h, w) = (self.height(), self.width());
        let plane = h * w;
        let base = frame * self.channels() * plane;
        let data = self.tensor.data();
        if self.channels() == 1 {
            data[base..base + plane].to_vec()
        } else {
            (0..plane)
                .map(|i| 0.299 * data[base + i] + 0.587 * data[base + plane + i] + 0.114 * data[base + 2 * plane + i])
                .collect()
        }
    }
}

/// Encoder output, `N x C x W' x H'` (x before y), plus the number of pixels
/// per feature cell along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    tensor: Tensor,
    spatial_scale: (f64, f64),
}

impl FeatureTensor {
    pub fn new(tensor: Tensor, spatial_scale: (f64, f64)) -> Result<Self> {
        let [n, ..] = tensor.dims4()?;
        if n == 0 {
            return Err(Error::Shape("feature tensor without frames".into()));
        }
        let (sx, sy) = spatial_scale;
        if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
            return Err(Error::Shape(format!(
                "spatial scale {spatial_scale:?} must be positive"
            )));
        }
        Ok(FeatureTensor { tensor, spatial_scale })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn num_frames(&self) -> usize {
        self.tensor.dims()[0]
    }

    pub fn channels(&self) -> usize {
        self.tensor.dims()[1]
    }

    pub fn spatial_scale(&self) -> (f64, f64) {
        self.spatial_scale
    }

    /// Factor mapping pixel coordinates into feature-map coordinates.
    pub fn projection(&self) -> (f64, f64) {
        (1.0 / self.spatial_scale.0, 1.0 / self.spatial_scale.1)
    }

    /// Width of the source frames in pixels.
    pub fn image_width(&self) -> f64 {
        self.tensor.dims()[2] as f64 * self.spatial_scale.0
    }
}

pub fn load_frames(path: impl AsRef<Path>) -> Result<VideoFrames> {
    let path = path.as_ref();
    let file = load_tensor(path)?;
    VideoFrames::new(file.tensor).map_err(|e| Error::validation(path, e.to_string()))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    let path = path.as_ref();
    let file = load_tensor(path)?;
    let [sx, sy] = file
        .spatial_scale
        .ok_or_else(|| Error::validation(path, "feature tensor header lacks spatial_scale"))?;
    FeatureTensor::new(file.tensor, (sx, sy)).map_err(|e| Error::validation(path, e.to_string()))
}

pub fn save_frames(path: impl AsRef<Path>, frames: &VideoFrames, dtype: DType) -> Result<()> {
    save_tensor(
        path,
        &TensorFile {
            tensor: frames.tensor.clone(),
            dtype,
            spatial_scale: None,
        },
    )
}

pub fn save_features(path: impl AsRef<Path>, features: &FeatureTensor, dtype: DType) -> Result<()> {
    let (sx, sy) = features.spatial_scale;
    save_tensor(
        path,
        &TensorFile {
            tensor: features.tensor.clone(),
            dtype,
            spatial_scale: Some([sx, sy]),
        },
    )
}
