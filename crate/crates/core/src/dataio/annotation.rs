//! Video annotations as JSON Lines.
//!
//! One frame record per line:
//!
//! ```text
//! {"video_id":"v0","frame_index":3,"instances":[{"id":1,"polygon":[[x,y],...],
//!   "transcription":"OPEN","ignore":false,"chars":[{"polygon":[...],"label":"O"},...]}]}
//! ```
//!
//! Coordinates are written rounded to 6 decimal places. `chars` is omitted
//! when an instance has no character boxes.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Result};
use crate::geometry::{Point2, Polygon};

#[derive(Debug, Clone, PartialEq)]
pub struct CharBox {
    pub polygon: Polygon,
    pub label: String,
}

/// One text object in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TextInstance {
    pub id: u32,
    pub polygon: Polygon,
    pub transcription: String,
    /// Don't-care region (e.g. `###` ground truth).
    pub ignore: bool,
    pub chars: Option<Vec<CharBox>>,
}

impl TextInstance {
    pub fn new(id: u32, polygon: Polygon, transcription: impl Into<String>) -> Self {
        Self {
            id,
            polygon,
            transcription: transcription.into(),
            ignore: false,
            chars: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub instances: Vec<TextInstance>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VideoAnnotation {
    pub video_id: String,
    /// Strictly increasing `frame_index`.
    pub frames: Vec<FrameRecord>,
}

impl VideoAnnotation {
    pub fn new(video_id: impl Into<String>) -> Self {
        Self {
            video_id: video_id.into(),
            frames: Vec::new(),
        }
    }

    pub fn frame(&self, index: usize) -> Option<&FrameRecord> {
        self.frames
            .binary_search_by_key(&index, |f| f.frame_index)
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn instances_at(&self, index: usize) -> &[TextInstance] {
        self.frame(index).map(|f| f.instances.as_slice()).unwrap_or(&[])
    }

    pub fn instance_count(&self) -> usize {
        self.frames.iter().map(|f| f.instances.len()).sum()
    }

    /// Distinct ids in first-seen order.
    pub fn ids(&self) -> Vec<u32> {
        let mut seen = Vec::new();
        for f in &self.frames {
            for i in &f.instances {
                if !seen.contains(&i.id) {
                    seen.push(i.id);
                }
            }
        }
        seen
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for w in self.frames.windows(2) {
            if w[1].frame_index <= w[0].frame_index {
                return Err(format!(
                    "frame_index {} follows {}",
                    w[1].frame_index, w[0].frame_index
                ));
            }
        }
        for f in &self.frames {
            if let Some(i) = f.instances.iter().find(|i| i.id == 0) {
                return Err(format!(
                    "frame {}: instance id must be positive ({:?})",
                    f.frame_index, i.transcription
                ));
            }
        }
        Ok(())
    }
}

type WirePolygon = Vec<[f64; 2]>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireChar {
    polygon: WirePolygon,
    label: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireInstance {
    id: u32,
    polygon: WirePolygon,
    transcription: String,
    #[serde(default)]
    ignore: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chars: Option<Vec<WireChar>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFrame {
    video_id: String,
    frame_index: usize,
    instances: Vec<WireInstance>,
}

/// Round to 6 decimal places, folding negative zero.
fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn wire_polygon(p: &Polygon) -> WirePolygon {
    p.vertices().iter().map(|v| [round6(v.x), round6(v.y)]).collect()
}

fn domain_polygon(w: &WirePolygon) -> std::result::Result<Polygon, String> {
    Polygon::new(w.iter().map(|&[x, y]| Point2::new(x, y)).collect()).map_err(|e| e.to_string())
}

fn to_wire(video_id: &str, f: &FrameRecord) -> WireFrame {
    WireFrame {
        video_id: video_id.to_owned(),
        frame_index: f.frame_index,
        instances: f
            .instances
            .iter()
            .map(|i| WireInstance {
                id: i.id,
                polygon: wire_polygon(&i.polygon),
                transcription: i.transcription.clone(),
                ignore: i.ignore,
                chars: i.chars.as_ref().map(|cs| {
                    cs.iter()
                        .map(|c| WireChar {
                            polygon: wire_polygon(&c.polygon),
                            label: c.label.clone(),
                        })
                        .collect()
                }),
            })
            .collect(),
    }
}

fn from_wire(w: WireFrame) -> std::result::Result<(String, FrameRecord), String> {
    let mut instances = Vec::with_capacity(w.instances.len());
    for (k, i) in w.instances.into_iter().enumerate() {
        if i.id == 0 {
            return Err(format!("instance {k}: id must be positive"));
        }
        let polygon = domain_polygon(&i.polygon).map_err(|e| format!("instance {k}: {e}"))?;
        let chars = match i.chars {
            None => None,
            Some(cs) => Some(
                cs.iter()
                    .enumerate()
                    .map(|(j, c)| {
                        Ok(CharBox {
                            polygon: domain_polygon(&c.polygon)
                                .map_err(|e| format!("instance {k} char {j}: {e}"))?,
                            label: c.label.clone(),
                        })
                    })
                    .collect::<std::result::Result<Vec<_>, String>>()?,
            ),
        };
        instances.push(TextInstance {
            id: i.id,
            polygon,
            transcription: i.transcription,
            ignore: i.ignore,
            chars,
        });
    }
    Ok((
        w.video_id,
        FrameRecord {
            frame_index: w.frame_index,
            instances,
        },
    ))
}

pub fn write_annotations_to(out: &mut impl Write, a: &VideoAnnotation, name: &Path) -> Result<()> {
    a.validate().map_err(|m| DataError::invalid(name, m))?;
    for f in &a.frames {
        let line = serde_json::to_string(&to_wire(&a.video_id, f))
            .map_err(|e| DataError::invalid(name, e.to_string()))?;
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| DataError::io(name, e))?;
    }
    Ok(())
}

pub fn encode_annotations(a: &VideoAnnotation) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_annotations_to(&mut buf, a, Path::new("<memory>"))?;
    Ok(buf)
}

pub fn write_annotations(path: &Path, a: &VideoAnnotation) -> Result<()> {
    let bytes = {
        let mut buf = Vec::new();
        write_annotations_to(&mut buf, a, path)?;
        buf
    };
    super::write_file(path, &bytes)
}

/// Stream frame records from a reader; `name` labels errors.
pub fn read_annotations_from(reader: impl BufRead, name: &Path) -> Result<VideoAnnotation> {
    let mut reader = reader;
    let mut out = VideoAnnotation::default();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| DataError::io(name, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let text = std::str::from_utf8(&buf)
            .map_err(|_| DataError::line(name, line_no, "line is not valid UTF-8"))?;
        if text.trim().is_empty() {
            continue;
        }
        let wire: WireFrame = serde_json::from_str(text)
            .map_err(|e| DataError::line(name, line_no, format!("malformed record: {e}")))?;
        let (vid, frame) = from_wire(wire).map_err(|m| DataError::line(name, line_no, m))?;
        if let Some(prev) = out.frames.last() {
            if vid != out.video_id {
                return Err(DataError::line(
                    name,
                    line_no,
                    format!("video_id {vid:?} differs from {:?}", out.video_id),
                ));
            }
            if frame.frame_index == prev.frame_index {
                return Err(DataError::line(
                    name,
                    line_no,
                    format!("duplicate frame_index {}", frame.frame_index),
                ));
            }
            if frame.frame_index < prev.frame_index {
                return Err(DataError::line(
                    name,
                    line_no,
                    format!(
                        "frame_index {} out of order after {}",
                        frame.frame_index, prev.frame_index
                    ),
                ));
            }
        } else {
            out.video_id = vid;
        }
        out.frames.push(frame);
    }
    Ok(out)
}

pub fn read_annotations(path: &Path) -> Result<VideoAnnotation> {
    let f = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    read_annotations_from(std::io::BufReader::new(f), path)
}
