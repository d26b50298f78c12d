//! On-disk artifacts: TODA1 field files, CSV tables, state directories,
//! JSON reports, and raster heatmaps. All writers are deterministic:
//! identical inputs produce bit-identical bytes.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Result, TodaError};
use crate::geometry::{PolarGrid, ScalarField};
use crate::toda_core::TodaState;

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    format: String,
    n_r: usize,
    n_theta: usize,
    outer_radius: f64,
    name: String,
}

/// Write a field: one JSON header line, then n_r·n_theta little-endian f64
/// values in row-major order (radial outer loop).
pub fn write_field(path: &Path, field: &ScalarField, name: &str) -> Result<()> {
    let header = FieldHeader {
        format: "TODA1".into(),
        n_r: field.grid.n_r,
        n_theta: field.grid.n_theta,
        outer_radius: field.grid.outer_radius,
        name: name.into(),
    };
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for &v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a TODA1 field file back; returns the field and its recorded name.
pub fn read_field(path: &Path) -> Result<(ScalarField, String)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: FieldHeader = serde_json::from_str(line.trim_end()).map_err(|e| {
        TodaError::BadFieldFile(format!("{}: bad header: {e}", path.display()))
    })?;
    if header.format != "TODA1" {
        return Err(TodaError::BadFieldFile(format!(
            "{}: format {:?}, expected TODA1",
            path.display(),
            header.format
        )));
    }
    let grid = PolarGrid {
        n_r: header.n_r,
        n_theta: header.n_theta,
        outer_radius: header.outer_radius,
    };
    let n = grid.n_nodes();
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|_| {
        TodaError::BadFieldFile(format!(
            "{}: truncated payload, expected {n} values",
            path.display()
        ))
    })?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(TodaError::BadFieldFile(format!(
            "{}: trailing bytes after {n} values",
            path.display()
        )));
    }
    let values = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((ScalarField { grid, values }, header.name))
}

/// CSV export with columns rho, theta, value in node order.
pub fn write_csv(path: &Path, field: &ScalarField) -> Result<()> {
    let grid = field.grid;
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "rho,theta,value")?;
    for i in 0..grid.n_r {
        for k in 0..grid.n_theta {
            writeln!(w, "{},{},{}", grid.rho(i), grid.theta(k), field.at(i, k))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Serialize a state as a directory: manifest.json plus one TODA1 file per
/// u_j and one for E. `weight_spec` is echoed verbatim into the manifest.
pub fn save_state(dir: &Path, state: &TodaState, weight_spec: &serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = json!({
        "r": state.r,
        "grid": state.grid,
        "weight": weight_spec,
        "boundary": state.boundary,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    for (j, u) in state.u.iter().enumerate() {
        write_field(&dir.join(format!("u{}.toda", j + 1)), u, &format!("u_{}", j + 1))?;
    }
    write_field(&dir.join("E.toda"), &state.e_field, "E")?;
    Ok(())
}

/// Load a state directory written by `save_state`. The weight spec in the
/// manifest is returned verbatim for the caller to interpret.
pub fn load_state(dir: &Path) -> Result<(TodaState, serde_json::Value)> {
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let r = manifest["r"]
        .as_u64()
        .ok_or_else(|| TodaError::BadFieldFile("manifest.json: missing r".into()))?
        as usize;
    let boundary: Vec<Vec<f64>> = serde_json::from_value(manifest["boundary"].clone())
        .map_err(|e| TodaError::BadFieldFile(format!("manifest.json: bad boundary: {e}")))?;
    let mut u = Vec::with_capacity(r - 1);
    for j in 1..r {
        let (f, _) = read_field(&dir.join(format!("u{j}.toda")))?;
        u.push(f);
    }
    let (e_field, _) = read_field(&dir.join("E.toda"))?;
    let grid = e_field.grid;
    if u.iter().any(|f| f.grid != grid) {
        return Err(TodaError::BadFieldFile(format!(
            "{}: inconsistent grids across fields",
            dir.display()
        )));
    }
    let state = TodaState { r, grid, u, e_field, boundary };
    Ok((state, manifest["weight"].clone()))
}

/// Pretty-printed JSON report with a trailing newline.
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorScale {
    Linear,
    Log,
}

// five-stop blue→green→yellow gradient
const STOPS: [[f64; 3]; 5] = [
    [0.267, 0.005, 0.329],
    [0.229, 0.322, 0.546],
    [0.128, 0.567, 0.551],
    [0.369, 0.789, 0.383],
    [0.993, 0.906, 0.144],
];

fn colorize(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let mut px = [0u8; 3];
    for c in 0..3 {
        px[c] = ((STOPS[i][c] * (1.0 - f) + STOPS[i + 1][c] * f) * 255.0).round() as u8;
    }
    px
}

/// Rasterize a polar field onto a square PNG by nearest-node sampling.
/// Linear scale normalizes the raw values; Log normalizes ln(value) and
/// requires a strictly positive field.
pub fn write_heatmap(path: &Path, field: &ScalarField, size: u32, scale: ColorScale) -> Result<()> {
    let grid = field.grid;
    let vals: Vec<f64> = match scale {
        ColorScale::Linear => field.values.clone(),
        ColorScale::Log => {
            if field.values.iter().any(|&v| v <= 0.0) {
                return Err(TodaError::InvalidArgument(
                    "log color scale requires a positive field".into(),
                ));
            }
            field.values.iter().map(|v| v.ln()).collect()
        }
    };
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let rr = grid.outer_radius;
    let mut img = image::RgbImage::new(size, size);
    for py in 0..size {
        for px in 0..size {
            let x = ((px as f64 + 0.5) / size as f64 * 2.0 - 1.0) * rr;
            let y = (1.0 - (py as f64 + 0.5) / size as f64 * 2.0) * rr;
            let rho = (x * x + y * y).sqrt();
            let pixel = if rho >= rr {
                [0u8, 0, 0]
            } else {
                let i = ((rho / grid.d_rho() - 0.5).round().max(0.0) as usize).min(grid.n_r - 1);
                let mut th = y.atan2(x);
                if th < 0.0 {
                    th += 2.0 * std::f64::consts::PI;
                }
                let k = (th / grid.d_theta()).round() as usize % grid.n_theta;
                colorize((vals[grid.idx(i, k)] - lo) / span)
            };
            img.put_pixel(px, py, image::Rgb(pixel));
        }
    }
    img.save(path).map_err(|e| TodaError::InvalidArgument(format!("png encode: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;

    fn sample_field() -> ScalarField {
        let grid = make_grid(6, 8, 0.5).unwrap();
        ScalarField::from_fn(grid, |rho, th| (3.0 * th).sin() + rho * rho)
    }

    #[test]
    fn field_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample_field();
        let path = dir.path().join("f.toda");
        write_field(&path, &f, "test").unwrap();
        let (g, name) = read_field(&path).unwrap();
        assert_eq!(name, "test");
        assert_eq!(f.grid, g.grid);
        assert!(f.values.iter().zip(&g.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        // writes are deterministic
        let path2 = dir.path().join("f2.toda");
        write_field(&path2, &f, "test").unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn field_read_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toda");
        fs::write(&path, b"{\"format\":\"NOPE\",\"n_r\":2,\"n_theta\":8,\"outer_radius\":0.5,\"name\":\"x\"}\n").unwrap();
        assert!(matches!(read_field(&path), Err(TodaError::BadFieldFile(_))));
        fs::write(&path, b"not json\n").unwrap();
        assert!(read_field(&path).is_err());
        // truncated payload
        let good = dir.path().join("good.toda");
        write_field(&good, &sample_field(), "x").unwrap();
        let mut bytes = fs::read(&good).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, &bytes).unwrap();
        assert!(read_field(&path).is_err());
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_csv(&path, &sample_field()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "rho,theta,value");
        let first = lines.next().unwrap();
        assert!(first.starts_with("0.041666666666666664,0,"), "{first}");
        assert_eq!(text.lines().count(), 1 + 6 * 8);
    }

    #[test]
    fn state_directory_round_trip() {
        use crate::geometry::background;
        use crate::toda_core::exact_hyperbolic;
        let grid = make_grid(5, 8, 0.5).unwrap();
        let bg = background(&grid);
        let state = exact_hyperbolic(3, &grid, &bg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let spec = serde_json::json!({"kind": "zero"});
        save_state(dir.path(), &state, &spec).unwrap();
        let (loaded, weight) = load_state(dir.path()).unwrap();
        assert_eq!(weight, spec);
        assert_eq!(loaded.r, 3);
        assert_eq!(loaded.boundary, state.boundary);
        for (a, b) in loaded.u.iter().zip(&state.u) {
            assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(loaded.e_field.values, state.e_field.values);
    }

    #[test]
    fn heatmaps_written_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let f = sample_field();
        let lin = dir.path().join("lin.png");
        write_heatmap(&lin, &f, 64, ColorScale::Linear).unwrap();
        let img = image::open(&lin).unwrap();
        assert_eq!((img.width(), img.height()), (64, 64));
        let lin2 = dir.path().join("lin2.png");
        write_heatmap(&lin2, &f, 64, ColorScale::Linear).unwrap();
        assert_eq!(fs::read(&lin).unwrap(), fs::read(&lin2).unwrap());
        // log scale wants positive values
        assert!(write_heatmap(&dir.path().join("log.png"), &f, 32, ColorScale::Log).is_err());
        let pos = f.map(f64::exp);
        write_heatmap(&dir.path().join("log.png"), &pos, 32, ColorScale::Log).unwrap();
    }
}
