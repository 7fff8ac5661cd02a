//! Object locations: clicks, extreme-click boxes and the annotation file
//! format shared by pipeline output and ground truth.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aligner::Interval;
use crate::error::{read_file, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Click {
    pub fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }
}

/// Axis-aligned box in pixels, `x0 <= x1` and `y0 <= y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        debug_assert!(x0 <= x1 && y0 <= y1, "malformed box");
        Self { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    fn from_array(a: [f64; 4]) -> std::result::Result<Self, String> {
        let [x0, y0, x1, y1] = a;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(format!("non-finite box coordinates {a:?}"));
        }
        if x0 > x1 || y0 > y1 {
            return Err(format!("box {a:?} has x0 > x1 or y0 > y1"));
        }
        Ok(Self { x0, y0, x1, y1 })
    }
}

/// Box spanned by the top, bottom, left- and right-most clicks of an object.
pub fn box_from_extreme_clicks(clicks: &[Click]) -> Result<BBox> {
    if clicks.len() != 4 {
        return Err(Error::invalid(
            "extreme clicks",
            format!("expected 4 clicks, got {}", clicks.len()),
        ));
    }
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in clicks {
        x0 = x0.min(c.x);
        x1 = x1.max(c.x);
        y0 = y0.min(c.y);
        y1 = y1.max(c.y);
    }
    Ok(BBox { x0, y0, x1, y1 })
}

/// Intersection over union; 0 when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Inclusive containment test.
pub fn point_in_box(x: f64, y: f64, b: &BBox) -> bool {
    b.x0 <= x && x <= b.x1 && b.y0 <= y && y <= b.y1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    /// A single click on the object (class-labelling task).
    Point,
    /// Four extreme clicks.
    Box,
}

/// An object location together with the clicks that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEvent {
    pub kind: ObjectKind,
    pub clicks: Vec<Click>,
}

impl ObjectEvent {
    pub fn point(click: Click) -> Self {
        Self {
            kind: ObjectKind::Point,
            clicks: vec![click],
        }
    }

    pub fn extreme_box(clicks: [Click; 4]) -> Self {
        Self {
            kind: ObjectKind::Box,
            clicks: clicks.to_vec(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let expected = match self.kind {
            ObjectKind::Point => 1,
            ObjectKind::Box => 4,
        };
        if self.clicks.len() != expected {
            return Err(format!(
                "{:?} event needs {expected} click(s), got {}",
                self.kind,
                self.clicks.len()
            ));
        }
        for c in &self.clicks {
            if !(c.x.is_finite() && c.y.is_finite() && c.t.is_finite()) || c.x < 0.0 || c.y < 0.0 {
                return Err(format!("invalid click ({}, {}) at t={}", c.x, c.y, c.t));
            }
        }
        Ok(())
    }

    /// `[first click time, last click time]`.
    pub fn span(&self) -> Interval {
        let start = self.clicks.iter().map(|c| c.t).fold(f64::INFINITY, f64::min);
        let end = self.clicks.iter().map(|c| c.t).fold(f64::NEG_INFINITY, f64::max);
        Interval::new(start, end)
    }

    pub fn location(&self) -> Location {
        match self.kind {
            ObjectKind::Point => Location::Point {
                x: self.clicks[0].x,
                y: self.clicks[0].y,
            },
            ObjectKind::Box => Location::Box(box_from_extreme_clicks(&self.clicks).expect("validated event")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Box(BBox),
    Point { x: f64, y: f64 },
}

impl Location {
    pub fn as_box(&self) -> Option<&BBox> {
        match self {
            Location::Box(b) => Some(b),
            Location::Point { .. } => None,
        }
    }
}

/// A located object, labelled when a spoken class was aligned to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObjectRecord", into = "ObjectRecord")]
pub struct ObjectAnnotation {
    pub class_id: Option<String>,
    pub location: Location,
}

#[derive(Serialize, Deserialize)]
struct ObjectRecord {
    #[serde(rename = "class", default, skip_serializing_if = "Option::is_none")]
    class_id: Option<String>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point: Option<[f64; 2]>,
}

impl TryFrom<ObjectRecord> for ObjectAnnotation {
    type Error = String;

    fn try_from(r: ObjectRecord) -> std::result::Result<Self, String> {
        let location = match (r.bbox, r.point) {
            (Some(b), None) => Location::Box(BBox::from_array(b)?),
            (None, Some([x, y])) if x.is_finite() && y.is_finite() => Location::Point { x, y },
            (None, Some(p)) => return Err(format!("non-finite point {p:?}")),
            _ => return Err("object needs exactly one of \"box\" or \"point\"".into()),
        };
        Ok(ObjectAnnotation {
            class_id: r.class_id,
            location,
        })
    }
}

impl From<ObjectAnnotation> for ObjectRecord {
    fn from(a: ObjectAnnotation) -> Self {
        let (bbox, point) = match a.location {
            Location::Box(b) => (Some(b.to_array()), None),
            Location::Point { x, y } => (None, Some([x, y])),
        };
        ObjectRecord {
            class_id: a.class_id,
            bbox,
            point,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotations {
    pub image_id: String,
    pub objects: Vec<ObjectAnnotation>,
}

/// Contents of an annotation file (pipeline output or ground truth).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: Vec<ImageAnnotations>,
}

impl AnnotationSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&read_file(path)?).map_err(|e| e.within(&path.display().to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: AnnotationSet = serde_json::from_str(text).map_err(|e| Error::json("annotations", e))?;
        let mut seen = std::collections::HashSet::new();
        for image in &set.images {
            if !seen.insert(image.image_id.as_str()) {
                return Err(Error::invalid(
                    "annotations",
                    format!("duplicate image_id {:?}", image.image_id),
                ));
            }
        }
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("annotations serialize")
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageAnnotations> {
        self.images.iter().find(|i| i.image_id == image_id)
    }
}
