use std::fmt::Write;

use thiserror::Error;

use crate::planner::{Plan, Waypoint};
use crate::prediction::Prediction;
use crate::workspace::{Cell, CellKind, GridWorkspace};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("dimension mismatch: heatmap is {0}x{1}, workspace is {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

const SIZE: f64 = 600.0;

/// Static SVG of the workspace with optional heatmap overlay and plan.
/// `y` grows upwards, as in the workspace.
pub fn render_svg(ws: &GridWorkspace, plan: Option<&Plan>, heatmap: Option<&Prediction>) -> Result<String, RenderError> {
    let (rows, cols) = (ws.height(), ws.width());
    if let Some(h) = heatmap {
        if (h.rows, h.cols) != (rows, cols) {
            return Err(RenderError::DimensionMismatch(h.rows, h.cols, rows, cols));
        }
    }
    let (cw, ch) = (SIZE / cols as f64, SIZE / rows as f64);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);

    // one rect per horizontal run of equal cells
    let rect = |out: &mut String, r: usize, c0: usize, c1: usize, attrs: &str| {
        let y = SIZE - (r + 1) as f64 * ch;
        let _ = writeln!(
            out,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" {attrs}/>"#,
            c0 as f64 * cw,
            y,
            (c1 - c0) as f64 * cw,
            ch
        );
    };
    let _ = writeln!(out, r#"<g id="cells">"#);
    for r in 0..rows {
        let mut c = 0;
        while c < cols {
            let k = ws.kind(Cell::new(r, c));
            let mut e = c + 1;
            while e < cols && ws.kind(Cell::new(r, e)) == k {
                e += 1;
            }
            match k {
                CellKind::Obstacle => rect(&mut out, r, c, e, r##"fill="#808080""##),
                CellKind::Region(_) => rect(&mut out, r, c, e, r##"fill="#7fc97f""##),
                CellKind::Free => {}
            }
            c = e;
        }
    }
    let _ = writeln!(out, "</g>");

    // region labels at the centroid of each region's cells
    for l in 1..=ws.label_count() {
        let cells = ws.cells_with_symbol(Some(crate::label::Label(l as u16)));
        if cells.is_empty() {
            continue;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for &i in cells {
            let p = ws.cell_center(ws.cell_at_index(i as usize));
            sx += p.x;
            sy += p.y;
        }
        let k = cells.len() as f64;
        let _ = writeln!(
            out,
            r#"<text class="label" x="{:.3}" y="{:.3}" font-size="14" text-anchor="middle">l{l}</text>"#,
            sx / k * SIZE,
            SIZE - sy / k * SIZE
        );
    }

    if let Some(h) = heatmap {
        let _ = writeln!(out, r#"<g id="heatmap">"#);
        for r in 0..rows {
            let mut c = 0;
            while c < cols {
                let v = h.heat(Cell::new(r, c));
                let mut e = c + 1;
                while e < cols && h.heat(Cell::new(r, e)) == v {
                    e += 1;
                }
                if v > 0.0 {
                    rect(&mut out, r, c, e, &format!(r##"class="heat" fill="#ff7f00" fill-opacity="{v:.4}""##));
                }
                c = e;
            }
        }
        let _ = writeln!(out, "</g>");
    }

    if let Some(p) = plan {
        let line = |out: &mut String, w: &[Waypoint], id: &str, color: &str| {
            let pts: Vec<String> = w.iter().map(|w| format!("{:.3},{:.3}", w.x.x * SIZE, SIZE - w.x.y * SIZE)).collect();
            let _ = writeln!(
                out,
                r#"<polyline id="{id}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
        };
        line(&mut out, &p.prefix, "prefix", "red");
        line(&mut out, &p.suffix, "suffix", "blue");
    }
    let init = ws.init();
    let _ = writeln!(
        out,
        r#"<circle id="init" cx="{:.3}" cy="{:.3}" r="5" fill="black"/>"#,
        init.x * SIZE,
        SIZE - init.y * SIZE
    );
    out.push_str("</svg>\n");
    Ok(out)
}
