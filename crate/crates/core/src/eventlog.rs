//! Annotation session logs: per image, the clicked objects in time order
//! and an optional mouse trail.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::geometry::ObjectEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSession {
    pub image_id: String,
    pub session_start: f64,
    pub session_end: f64,
    pub objects: Vec<ObjectEvent>,
    /// `[x, y, t]` samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mouse_trail: Option<Vec<[f64; 3]>>,
}

impl ImageSession {
    pub fn duration(&self) -> f64 {
        self.session_end - self.session_start
    }

    fn validate(&mut self) -> Result<()> {
        let ctx = || format!("image {:?}", self.image_id);
        if !(self.session_start.is_finite() && self.session_end.is_finite()) || self.session_start > self.session_end {
            return Err(Error::invalid(
                ctx(),
                format!("bad session interval [{}, {}]", self.session_start, self.session_end),
            ));
        }
        for (k, object) in self.objects.iter().enumerate() {
            object
                .validate()
                .map_err(|m| Error::invalid(format!("{}, object {k}", ctx()), m))?;
            let span = object.span();
            if span.start < self.session_start || span.end > self.session_end {
                return Err(Error::invalid(
                    format!("{}, object {k}", ctx()),
                    format!(
                        "clicks at [{}, {}] fall outside the session [{}, {}]",
                        span.start, span.end, self.session_start, self.session_end
                    ),
                ));
            }
        }
        let ordered = self.objects.windows(2).all(|w| w[0].span().start <= w[1].span().start);
        if !ordered {
            log::warn!("{}: objects out of time order, sorting by first click", ctx());
            self.objects.sort_by(|a, b| a.span().start.total_cmp(&b.span().start));
        }
        if let Some(trail) = &self.mouse_trail {
            if trail.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid(ctx(), "non-finite mouse trail sample"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionLog {
    pub images: Vec<ImageSession>,
}

impl SessionLog {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&read_file(path)?).map_err(|e| e.within(&path.display().to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let log: SessionLog = serde_json::from_str(text).map_err(|e| Error::json("event log", e))?;
        log.validated()
    }

    pub fn validated(mut self) -> Result<Self> {
        let mut seen = HashSet::new();
        for image in &mut self.images {
            if !seen.insert(image.image_id.clone()) {
                return Err(Error::invalid(
                    "event log",
                    format!("duplicate image_id {:?}", image.image_id),
                ));
            }
            image.validate()?;
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("event log serializes")
    }
}
