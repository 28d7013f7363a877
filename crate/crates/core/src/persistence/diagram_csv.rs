use super::{PersistenceDiagram, PersistencePoint};
use crate::error::parse_err;
use crate::grid_image::Pixel;
use crate::util::fmt_f64;
use crate::Result;

pub const DIAGRAM_CSV_HEADER: &str = "dim,death,birth,essential,birth_x,birth_y,death_x,death_y";

/// One row per point. The death pixel columns are empty for essential points.
pub fn write_diagram_csv(diagram: &PersistenceDiagram) -> String {
    let mut out = String::from(DIAGRAM_CSV_HEADER);
    out.push('\n');
    for p in &diagram.points {
        let (dx, dy) = match p.death_vertex {
            Some(v) => (v.x.to_string(), v.y.to_string()),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.dim,
            fmt_f64(p.death),
            fmt_f64(p.birth),
            p.essential,
            p.birth_vertex.x,
            p.birth_vertex.y,
            dx,
            dy
        ));
    }
    out
}

pub fn parse_diagram_csv(text: &str) -> Result<PersistenceDiagram> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == DIAGRAM_CSV_HEADER => {}
        _ => return Err(parse_err(1, 1, "missing diagram header")),
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 8 {
            return Err(parse_err(row, 1, format!("expected 8 fields, found {}", cells.len())));
        }
        let dim: u8 = cells[0]
            .parse()
            .ok()
            .filter(|d| *d <= 1)
            .ok_or_else(|| parse_err(row, 1, "dim must be 0 or 1"))?;
        let num = |c: usize| -> Result<f64> {
            cells[c]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(row, c + 1, format!("not a finite number: {:?}", cells[c])))
        };
        let coord = |c: usize| -> Result<usize> {
            cells[c]
                .parse::<usize>()
                .map_err(|_| parse_err(row, c + 1, format!("not a pixel coordinate: {:?}", cells[c])))
        };
        let death = num(1)?;
        let birth = num(2)?;
        let essential: bool = cells[3]
            .parse()
            .map_err(|_| parse_err(row, 4, "essential must be true or false"))?;
        let birth_vertex = Pixel::new(coord(4)?, coord(5)?);
        let death_vertex = if cells[6].is_empty() && cells[7].is_empty() {
            None
        } else {
            Some(Pixel::new(coord(6)?, coord(7)?))
        };
        if !essential && death_vertex.is_none() {
            return Err(parse_err(row, 7, "finite point without death pixel"));
        }
        points.push(PersistencePoint {
            dim,
            death,
            birth,
            essential,
            birth_vertex,
            death_vertex,
        });
    }
    Ok(PersistenceDiagram { points })
}
