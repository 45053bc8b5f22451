use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Visual domain of an image or a training stage.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Domain {
    Color,
    Line,
    Style(String),
    /// Unsupervised learning-to-draw pretraining.
    Draw,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Color => f.write_str("COLOR"),
            Domain::Line => f.write_str("LINE"),
            Domain::Style(name) => write!(f, "STYLE:{name}"),
            Domain::Draw => f.write_str("DRAW"),
        }
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "COLOR" => Ok(Domain::Color),
            "LINE" => Ok(Domain::Line),
            "DRAW" => Ok(Domain::Draw),
            _ => match s.strip_prefix("STYLE:") {
                Some(name) if !name.is_empty() => Ok(Domain::Style(name.to_string())),
                _ => Err(Error::InvalidParams(format!("unknown domain `{s}`"))),
            },
        }
    }
}

impl TryFrom<String> for Domain {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Domain> for String {
    fn from(d: Domain) -> String {
        d.to_string()
    }
}

/// An `H x W x 3` image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage<T> {
    pub height: usize,
    pub width: usize,
    /// Row-major `H x W x 3`.
    pub pixels: Vec<T>,
    pub label: usize,
    pub domain: Domain,
    /// Stable identity shared by every conversion of the same source image.
    pub source_id: String,
}

impl<T: Scalar> LabeledImage<T> {
    pub fn new(height: usize, width: usize, pixels: Vec<T>, label: usize, domain: Domain, source_id: impl Into<String>) -> Self {
        assert_eq!(pixels.len(), height * width * 3, "pixel buffer does not match {height}x{width}x3");
        LabeledImage { height, width, pixels, label, domain, source_id: source_id.into() }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> T {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    pub fn in_unit_range(&self) -> bool {
        self.pixels.iter().all(|&v| v >= T::zero() && v <= T::one())
    }

    /// Rec. 601 luma, `H x W`.
    pub fn luminance(&self) -> Vec<T> {
        let (r, g, b) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        self.pixels.chunks(3).map(|p| r * p[0] + g * p[1] + b * p[2]).collect()
    }

    /// Same metadata with new pixels of possibly different size.
    pub fn with_pixels(&self, height: usize, width: usize, pixels: Vec<T>) -> Self {
        LabeledImage::new(height, width, pixels, self.label, self.domain.clone(), self.source_id.clone())
    }
}

/// A batch of equally sized images with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch<T> {
    pub height: usize,
    pub width: usize,
    /// `N x H x W x 3`.
    pub pixels: Vec<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> ImageBatch<T> {
    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a LabeledImage<T>>) -> Self {
        let mut it = images.into_iter().peekable();
        let (height, width) = it.peek().map(|i| (i.height, i.width)).unwrap_or((0, 0));
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for img in it {
            assert_eq!((img.height, img.width), (height, width), "batch images must share a size");
            pixels.extend_from_slice(&img.pixels);
            labels.push(img.label);
        }
        ImageBatch { height, width, pixels, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Images `range` as a new batch.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let per = self.height * self.width * 3;
        ImageBatch {
            height: self.height,
            width: self.width,
            pixels: self.pixels[range.start * per..range.end * per].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }

    /// Channel-major `[3, N, H, W]` network input.
    pub fn to_tensor(&self) -> Tensor<T> {
        let (n, hw) = (self.len(), self.height * self.width);
        let mut out = vec![T::zero(); 3 * n * hw];
        for (i, px) in self.pixels.chunks(3).enumerate() {
            let (b, p) = (i / hw, i % hw);
            for c in 0..3 {
                out[(c * n + b) * hw + p] = px[c];
            }
        }
        Tensor::from_vec(&[3, n, self.height, self.width], out).expect("batch tensor shape")
    }

    /// Luminance as a `[1, N, H, W]` tensor.
    pub fn to_gray_tensor(&self) -> Tensor<T> {
        let (r, g, b) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        let data = self.pixels.chunks(3).map(|p| r * p[0] + g * p[1] + b * p[2]).collect();
        Tensor::from_vec(&[1, self.len(), self.height, self.width], data).expect("gray tensor shape")
    }
}

/// Converts a `[1, N, H, W]` single-channel tensor into an `N x H x W x 3` batch by replication.
pub fn replicate_gray<T: Scalar>(t: &Tensor<T>, labels: Vec<usize>) -> ImageBatch<T> {
    let s = t.shape();
    let mut pixels = Vec::with_capacity(t.numel() * 3);
    for &v in t.data() {
        pixels.extend_from_slice(&[v, v, v]);
    }
    ImageBatch { height: s[2], width: s[3], pixels, labels }
}
