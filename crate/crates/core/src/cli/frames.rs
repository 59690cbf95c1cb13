//! Per-step data frames and their PNG rasterization.
//!
//! Frame file layout: magic `QWF1`, `rank: u32`, `dims: [u64; rank]`, then
//! the coordinate axis of every dimension, then the data, all row-major
//! little-endian doubles.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};
use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::grids::{map_lanes, ProductGrid};
use crate::observe::{flux, reduced_density, wigner};
use crate::system::WaveFunction;

use super::config::{PlotKind, Representation};

pub const FRAME_MAGIC: &[u8; 4] = b"QWF1";

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// coordinates along every dimension of `data`
    pub axes: Vec<Vec<f64>>,
    pub data: ArrayD<f64>,
}

impl Frame {
    fn new(axes: Vec<Vec<f64>>, data: ArrayD<f64>) -> Self {
        debug_assert_eq!(axes.iter().map(Vec::len).collect::<Vec<_>>(), data.shape());
        Frame { axes, data }
    }
}

/// Frames of one step: named frames plus, for reduced densities, the purity
/// of every dof.
#[derive(Debug, Clone)]
pub struct StepFrames {
    pub frames: Vec<(String, Frame)>,
    pub purities: Option<Vec<f64>>,
}

fn index_axis(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64).collect()
}

fn densities(grid: &ProductGrid, psi: &WaveFunction, repr: Representation) -> Vec<ArrayD<f64>> {
    psi.channels
        .iter()
        .map(|c| match repr {
            Representation::Dvr => c.mapv(|v| v.norm_sqr()),
            Representation::Fbr => {
                let mut f = c.clone();
                for (k, g) in grid.dofs().iter().enumerate() {
                    map_lanes(&mut f, k, |lane| g.dvr_to_fbr_in_place(lane));
                }
                f.mapv(|v| v.norm_sqr())
            }
        })
        .collect()
}

fn axis(grid: &ProductGrid, k: usize, repr: Representation) -> Vec<f64> {
    let g = &grid.dofs()[k];
    match repr {
        Representation::Dvr => g.points().to_vec(),
        Representation::Fbr => g.fbr_labels().to_vec(),
    }
}

fn dims_error(kind: &str, need: &str, ndim: usize) -> Error {
    Error::Unsupported(format!(
        "`{kind}` plots need {need}; this grid has {ndim} dof(s). Available: curve (1 dof), wigner (1 fft dof), \
         flux (1-2 fft dofs), contour (2 dofs), reduced (2 or more dofs)"
    ))
}

/// Checks that `kind` makes sense for the grid before any step is computed.
pub fn check_kind(grid: &ProductGrid, kind: PlotKind, repr: Representation) -> Result<()> {
    let nd = grid.ndim();
    match kind {
        PlotKind::Curve if nd != 1 => return Err(dims_error("curve", "exactly one dof", nd)),
        PlotKind::Contour if nd != 2 => return Err(dims_error("contour", "exactly two dofs", nd)),
        PlotKind::Wigner if nd != 1 => return Err(dims_error("wigner", "exactly one dof", nd)),
        PlotKind::Flux if nd > 2 => return Err(dims_error("flux", "one or two dofs", nd)),
        PlotKind::Reduced if nd < 2 => return Err(dims_error("reduced", "at least two dofs", nd)),
        _ => {}
    }
    if repr == Representation::Fbr && !matches!(kind, PlotKind::Curve | PlotKind::Contour) {
        return Err(Error::config("plot.representation", "fbr applies to curve and contour plots only"));
    }
    Ok(())
}

pub fn compute(grid: &ProductGrid, psi: &WaveFunction, kind: PlotKind, repr: Representation) -> Result<StepFrames> {
    check_kind(grid, kind, repr)?;
    let mut purities = None;
    let frames = match kind {
        PlotKind::Curve => {
            let rows = densities(grid, psi, repr);
            let n = grid.shape()[0];
            let mut data = ArrayD::zeros(IxDyn(&[rows.len(), n]));
            for (c, r) in rows.iter().enumerate() {
                for i in 0..n {
                    data[[c, i]] = r[[i]];
                }
            }
            vec![("curve".into(), Frame::new(vec![index_axis(rows.len()), axis(grid, 0, repr)], data))]
        }
        PlotKind::Contour => {
            let rows = densities(grid, psi, repr);
            let mut total = ArrayD::zeros(IxDyn(grid.shape()));
            for r in &rows {
                total += r;
            }
            vec![("contour".into(), Frame::new(vec![axis(grid, 0, repr), axis(grid, 1, repr)], total))]
        }
        PlotKind::Wigner => {
            let w = wigner(grid, psi)?;
            vec![("wigner".into(), Frame::new(vec![w.x, w.p], w.values.into_dyn()))]
        }
        PlotKind::Flux => {
            let j = flux(grid, psi)?;
            let mut shape = vec![j.len()];
            shape.extend_from_slice(grid.shape());
            let mut data = ArrayD::zeros(IxDyn(&shape));
            for (k, jk) in j.iter().enumerate() {
                data.index_axis_mut(ndarray::Axis(0), k).assign(jk);
            }
            let mut axes = vec![index_axis(j.len())];
            axes.extend((0..grid.ndim()).map(|k| axis(grid, k, repr)));
            vec![("flux".into(), Frame::new(axes, data))]
        }
        PlotKind::Reduced => {
            let mut out = Vec::new();
            let mut pur = Vec::new();
            for k in 0..grid.ndim() {
                let (rho, p) = reduced_density(grid, psi, k)?;
                let n = rho.nrows();
                let mut data = ArrayD::zeros(IxDyn(&[2, n, n]));
                for i in 0..n {
                    for j in 0..n {
                        data[[0, i, j]] = rho[(i, j)].re;
                        data[[1, i, j]] = rho[(i, j)].im;
                    }
                }
                let pts = grid.dofs()[k].points().to_vec();
                out.push((format!("reduced{}", k + 1), Frame::new(vec![vec![0.0, 1.0], pts.clone(), pts], data)));
                pur.push(p);
            }
            purities = Some(pur);
            out
        }
    };
    Ok(StepFrames { frames, purities })
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut buf = Vec::new();
    buf.extend_from_slice(FRAME_MAGIC);
    buf.extend_from_slice(&(frame.data.ndim() as u32).to_le_bytes());
    for d in frame.data.shape() {
        buf.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for v in frame.axes.iter().flatten().chain(frame.data.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).and_then(|_| w.flush()).map_err(io)
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::format(path, m.to_string());
    if data.len() < 8 || &data[..4] != FRAME_MAGIC {
        return Err(bad("not a frame file"));
    }
    let rank = u32::from_le_bytes(data[4..8].try_into().expect("4 bytes")) as usize;
    let mut at = 8;
    let u64_at = |at: &mut usize| -> Result<u64> {
        let s = data.get(*at..*at + 8).ok_or_else(|| bad("truncated"))?;
        *at += 8;
        Ok(u64::from_le_bytes(s.try_into().expect("8 bytes")))
    };
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(u64_at(&mut at)? as usize);
    }
    let total: usize = dims.iter().sum::<usize>() + dims.iter().product::<usize>();
    if data.len() != at + 8 * total {
        return Err(bad("size does not match the declared dimensions"));
    }
    let mut vals = data[at..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let axes = dims.iter().map(|&d| vals.by_ref().take(d).collect()).collect();
    let body: Vec<f64> = vals.collect();
    let data = ArrayD::from_shape_vec(IxDyn(&dims), body).map_err(|_| bad("bad shape"))?;
    Ok(Frame { axes, data })
}

const PALETTE: [[u8; 3]; 6] = [
    [228, 26, 28],
    [55, 126, 184],
    [77, 175, 74],
    [152, 78, 163],
    [255, 127, 0],
    [166, 86, 40],
];

fn sequential(t: f64) -> Rgb<u8> {
    // dark blue through teal to yellow
    let stops = [[13.0, 8.0, 135.0], [33.0, 145.0, 140.0], [253.0, 231.0, 37.0]];
    let t = t.clamp(0.0, 1.0) * 2.0;
    let (i, f) = if t >= 2.0 { (1, 1.0) } else { (t.floor() as usize, t.fract()) };
    let c = |k: usize| (stops[i][k] + f * (stops[i + 1][k] - stops[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn diverging(t: f64) -> Rgb<u8> {
    let t = t.clamp(-1.0, 1.0);
    let fade = |c: f64| (255.0 - (255.0 - c) * t.abs()).round() as u8;
    if t >= 0.0 {
        Rgb([fade(178.0), fade(24.0), fade(43.0)])
    } else {
        Rgb([fade(33.0), fade(102.0), fade(172.0)])
    }
}

fn heat_map(values: &ndarray::ArrayView2<f64>) -> RgbImage {
    let (nx, ny) = values.dim();
    let scale = (512 / nx.max(ny)).max(1) as u32;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let signed = lo < 0.0;
    let top = if signed { lo.abs().max(hi.abs()) } else { hi };
    let top = if top > 0.0 { top } else { 1.0 };
    ImageBuffer::from_fn(nx as u32 * scale, ny as u32 * scale, |px, py| {
        let i = (px / scale) as usize;
        // second coordinate grows upward
        let j = ny - 1 - (py / scale) as usize;
        let v = values[[i, j]] / top;
        if signed {
            diverging(v)
        } else {
            sequential(v)
        }
    })
}

fn line_plot(rows: &ndarray::ArrayView2<f64>) -> RgbImage {
    let (w, h, pad) = (640u32, 400u32, 20u32);
    let mut img = ImageBuffer::from_pixel(w, h, Rgb([255, 255, 255]));
    let (nr, n) = rows.dim();
    let lo = rows.iter().copied().fold(0.0f64, f64::min);
    let hi = rows.iter().copied().fold(0.0f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let to_px = |i: usize, v: f64| {
        let x = pad as f64 + (w - 2 * pad) as f64 * i as f64 / (n.max(2) - 1) as f64;
        let y = (h - pad) as f64 - (h - 2 * pad) as f64 * (v - lo) / span;
        (x, y)
    };
    let zero = to_px(0, 0.0).1.round() as u32;
    for x in pad..w - pad {
        img.put_pixel(x, zero.min(h - 1), Rgb([160, 160, 160]));
    }
    for r in 0..nr {
        let color = Rgb(PALETTE[r % PALETTE.len()]);
        for i in 1..n {
            let (x0, y0) = to_px(i - 1, rows[[r, i - 1]]);
            let (x1, y1) = to_px(i, rows[[r, i]]);
            let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
            for s in 0..=steps {
                let f = s as f64 / steps as f64;
                let (x, y) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
                if x >= 0.0 && y >= 0.0 && (x as u32) < w && (y as u32) < h {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    img
}

/// Line plot for curves and one-dimensional flux, heat map otherwise
/// (magnitude for complex or vector frames).
pub fn render(name: &str, frame: &Frame) -> RgbImage {
    let d = &frame.data;
    let line = name == "curve" || (name == "flux" && d.ndim() == 2);
    if line {
        return line_plot(&d.view().into_dimensionality().expect("2-D"));
    }
    if d.ndim() == 2 {
        return heat_map(&d.view().into_dimensionality().expect("2-D"));
    }
    let first = d.index_axis(ndarray::Axis(0), 0);
    let mut mag = first.mapv(|v| v * v);
    for k in 1..d.shape()[0] {
        mag += &d.index_axis(ndarray::Axis(0), k).mapv(|v| v * v);
    }
    let mag = mag.mapv(f64::sqrt);
    heat_map(&mag.view().into_dimensionality().expect("2-D"))
}

pub fn write_png(path: &Path, name: &str, frame: &Frame) -> Result<()> {
    render(name, frame)
        .save(path)
        .map_err(|e| Error::format(path, format!("cannot write PNG: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::Grid1D;
    use crate::system::{init_gauss, product_state};

    fn grid(n: usize) -> ProductGrid {
        ProductGrid::new(vec![Grid1D::fft(16, -4.0, 4.0, 1.0).unwrap(); n]).unwrap()
    }

    fn gauss(g: &ProductGrid, p0: f64) -> WaveFunction {
        let amps: Vec<_> = g.dofs().iter().map(|d| init_gauss(d, 0.3, 0.8, p0).unwrap()).collect();
        product_state(g, &amps, 0, 1).unwrap()
    }

    #[test]
    fn frame_round_trip() {
        let g = grid(1);
        let f = compute(&g, &gauss(&g, 0.5), PlotKind::Wigner, Representation::Dvr).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.qwf");
        write_frame(&p, &f.frames[0].1).unwrap();
        assert_eq!(read_frame(&p).unwrap(), f.frames[0].1);
        assert_eq!(f.frames[0].1.data.shape(), &[16, 16]);
        let png = dir.path().join("w.png");
        write_png(&png, "wigner", &f.frames[0].1).unwrap();
        assert!(std::fs::metadata(&png).unwrap().len() > 0);
    }

    #[test]
    fn dimensionality_menu() {
        let three = grid(3);
        let psi = gauss(&three, 0.0);
        let e = compute(&three, &psi, PlotKind::Curve, Representation::Dvr).unwrap_err();
        assert!(matches!(e, Error::Unsupported(_)));
        assert_eq!(e.exit_code(), 2);
        assert!(compute(&grid(1), &gauss(&grid(1), 0.0), PlotKind::Reduced, Representation::Dvr).is_err());
        assert!(check_kind(&grid(1), PlotKind::Wigner, Representation::Fbr).is_err());
    }

    #[test]
    fn reduced_frames_of_a_product_state() {
        let g = grid(2);
        let f = compute(&g, &gauss(&g, 0.2), PlotKind::Reduced, Representation::Dvr).unwrap();
        assert_eq!(f.frames.len(), 2);
        for p in f.purities.unwrap() {
            assert!((p - 1.0).abs() < 1e-10);
        }
        assert_eq!(f.frames[1].1.data.shape(), &[2, 16, 16]);
    }

    #[test]
    fn curve_in_both_representations_conserves_norm() {
        let g = grid(1);
        let psi = gauss(&g, 1.0);
        let w = g.dofs()[0].weights()[0];
        for repr in [Representation::Dvr, Representation::Fbr] {
            let f = compute(&g, &psi, PlotKind::Curve, repr).unwrap();
            let total: f64 = f.frames[0].1.data.sum();
            let scale = if repr == Representation::Dvr { w } else { 1.0 };
            assert!((total * scale - 1.0).abs() < 1e-12, "{repr:?} {total}");
        }
    }

    #[test]
    fn flux_and_contour_render() {
        let g = grid(2);
        let psi = gauss(&g, 1.0);
        for kind in [PlotKind::Flux, PlotKind::Contour] {
            let f = compute(&g, &psi, kind, Representation::Dvr).unwrap();
            let img = render(&f.frames[0].0, &f.frames[0].1);
            assert_eq!(img.width(), 512);
        }
        let g1 = grid(1);
        let f = compute(&g1, &gauss(&g1, 1.0), PlotKind::Flux, Representation::Dvr).unwrap();
        assert_eq!(render("flux", &f.frames[0].1).width(), 640);
    }
}
