//! SVG overlays for visual inspection of annotations.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use vtforge_core::{TextInstance, VideoAnnotation};

/// FNV-1a over the little-endian id bytes.
fn fnv1a(id: u32) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in id.to_le_bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

/// Stroke color for an id; the same in every file and every run.
pub fn id_color(id: u32) -> String {
    let h = fnv1a(id);
    // keep every channel below 0xc0 so strokes stay visible on white
    let c = |shift: u32| ((h >> shift) & 0xff) * 0xc0 / 0xff;
    format!("#{:02x}{:02x}{:02x}", c(16), c(8), c(0))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub fn overlay_name(frame: usize) -> String {
    format!("overlay_{frame:06}.svg")
}

/// SVG document for one frame.
pub fn render_frame(instances: &[TextInstance], dims: (usize, usize)) -> String {
    let (w, h) = dims;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    for inst in instances {
        let color = id_color(inst.id);
        let mut d = String::new();
        for (i, v) in inst.polygon.vertices().iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, v.x, v.y);
        }
        d.push('Z');
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2" data-id="{}"/>"#,
            inst.id
        );
        let first = inst.polygon.vertices()[0];
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}" font-family="monospace" font-size="12">{}</text>"#,
            first.x,
            first.y,
            escape(&inst.transcription)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write `overlay_<frame>.svg` for every frame from 0 to the last annotated
/// one; frames without a record get an empty canvas.
pub fn render_overlay(annotation: &VideoAnnotation, dims: (usize, usize), out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let count = annotation.frames.last().map_or(0, |f| f.frame_index + 1);
    let mut written = Vec::with_capacity(count);
    for k in 0..count {
        let path = out_dir.join(overlay_name(k));
        fs::write(&path, render_frame(annotation.instances_at(k), dims))?;
        written.push(path);
    }
    Ok(written)
}
