//! Interior local maxima of lattice fields, with sub-grid refinement by a
//! Newton step on central finite differences.

use crate::field::{FieldSample, Grid, RandomizationSplit};
use crate::linalg::{self, Mat};
use crate::{Error, Result};

/// Cells kept clear of the boundary when searching for maxima.
pub const BOUNDARY_MARGIN: usize = 2;

/// A refined local maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    /// Refined location `t̂`.
    pub location: Vec<f64>,
    /// Height of the local quadratic model at `t̂`.
    pub height: f64,
    pub grid_index: usize,
    /// `Ĥ = −∇²Y` at `t̂`.
    pub neg_hessian: Mat,
    /// Finite-difference gradient at the lattice point.
    pub gradient: Vec<f64>,
    /// Set when `Ĥ` is not positive definite.
    pub degenerate: bool,
}

impl Peak {
    pub fn dim(&self) -> usize {
        self.location.len()
    }
}

fn neighbor_offsets(grid: &Grid) -> Vec<isize> {
    let d = grid.dim();
    let strides = grid.strides();
    let mut out = Vec::with_capacity(3usize.pow(d as u32) - 1);
    let total = 3usize.pow(d as u32);
    for code in 0..total {
        let mut c = code;
        let mut off = 0isize;
        let mut zero = true;
        for k in 0..d {
            let step = (c % 3) as isize - 1;
            c /= 3;
            if step != 0 {
                zero = false;
            }
            off += step * strides[k] as isize;
        }
        if !zero {
            out.push(off);
        }
    }
    out
}

/// Interior lattice maxima of `sample`, refined and sorted by height.
pub fn find_local_maxima(sample: &FieldSample) -> Result<Vec<Peak>> {
    find_local_maxima_in(&sample.grid, &sample.values)
}

/// Lattice points that strictly exceed all `3^d − 1` neighbors and sit at
/// least [`BOUNDARY_MARGIN`] cells from the boundary, each refined with
/// [`refine_peak_in`]. Degenerate candidates are kept and flagged. Output is
/// sorted by height, descending, ties broken by grid index.
pub fn find_local_maxima_in(grid: &Grid, values: &[f64]) -> Result<Vec<Peak>> {
    if values.len() != grid.len() {
        return Err(Error::Parameter(
            "value count does not match the grid".into(),
        ));
    }
    if grid.counts().iter().any(|&n| n < 5) {
        return Err(Error::Parameter(
            "peak search needs at least 5 points per axis".into(),
        ));
    }
    let offsets = neighbor_offsets(grid);
    let d = grid.dim();
    let counts = grid.counts();
    let mut idx = vec![BOUNDARY_MARGIN; d];
    let mut peaks = Vec::new();
    'outer: loop {
        let flat = grid.flat_index(&idx);
        let y = values[flat];
        if offsets
            .iter()
            .all(|&o| y > values[(flat as isize + o) as usize])
        {
            peaks.push(refine_peak_in(grid, values, flat)?);
        }
        // Advance the odometer over the interior block.
        let mut k = d;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] + BOUNDARY_MARGIN < counts[k] {
                break;
            }
            idx[k] = BOUNDARY_MARGIN;
        }
    }
    sort_peaks(&mut peaks);
    Ok(peaks)
}

pub fn sort_peaks(peaks: &mut [Peak]) {
    peaks.sort_by(|a, b| {
        b.height
            .partial_cmp(&a.height)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.grid_index.cmp(&b.grid_index))
    });
}

/// Central-difference gradient and Hessian of the field at a lattice point
/// with at least one neighbor on each side.
pub fn fd_derivatives(grid: &Grid, values: &[f64], flat: usize) -> (Vec<f64>, Mat) {
    let d = grid.dim();
    let h = grid.spacing();
    let s = grid.strides();
    let at = |off: isize| values[(flat as isize + off) as usize];
    let y0 = values[flat];
    let mut g = vec![0.0; d];
    let mut hess = Mat::zeros(d, d);
    for k in 0..d {
        let sk = s[k] as isize;
        let (yp, ym) = (at(sk), at(-sk));
        g[k] = (yp - ym) / (2.0 * h[k]);
        hess[(k, k)] = (yp - 2.0 * y0 + ym) / (h[k] * h[k]);
        for l in 0..k {
            let sl = s[l] as isize;
            let v = (at(sk + sl) - at(sk - sl) - at(-sk + sl) + at(-sk - sl)) / (4.0 * h[k] * h[l]);
            hess[(k, l)] = v;
            hess[(l, k)] = v;
        }
    }
    (g, hess)
}

/// Refines a lattice maximum.
///
/// The Newton displacement `s = Ĥ⁻¹g` from the lattice point is scaled back
/// uniformly until `‖s‖_∞` fits in one cell, which keeps the quadratic-model
/// height at or above the lattice value. The reported `Ĥ` is the multilinear
/// interpolation of lattice Hessians at the refined location. A lattice
/// Hessian that is not negative definite leaves the point unmoved and flags
/// the peak as degenerate.
pub fn refine_peak_in(grid: &Grid, values: &[f64], flat: usize) -> Result<Peak> {
    let idx = grid.multi_index(flat);
    if idx
        .iter()
        .zip(grid.counts())
        .any(|(&i, &n)| i < 1 || i + 1 >= n)
    {
        return Err(Error::Domain(
            "refinement needs an interior lattice point".into(),
        ));
    }
    let d = grid.dim();
    let (g, hess) = fd_derivatives(grid, values, flat);
    let neg = -hess;
    let y0 = values[flat];
    let base = grid.point(flat);
    let Some(chol) = linalg::cholesky(&neg) else {
        return Ok(Peak {
            location: base,
            height: y0,
            grid_index: flat,
            neg_hessian: neg,
            gradient: g,
            degenerate: true,
        });
    };
    let mut step = chol.solve(&nalgebra::DVector::from_column_slice(&g));
    let h = grid.spacing();
    let theta = (0..d).map(|k| h[k] / step[k].abs()).fold(1.0, f64::min);
    step *= theta;
    let location: Vec<f64> = base.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
    let gs: f64 = g.iter().zip(step.iter()).map(|(a, b)| a * b).sum();
    let height = y0 + gs - 0.5 * linalg::quad_form(&neg, step.as_slice());
    let neg_hessian = interpolated_neg_hessian(grid, values, &location).unwrap_or(neg);
    if !linalg::is_positive_definite(&neg_hessian) {
        return Ok(Peak {
            location: base,
            height: y0,
            grid_index: flat,
            neg_hessian,
            gradient: g,
            degenerate: true,
        });
    }
    Ok(Peak {
        location,
        height: height.max(y0),
        grid_index: flat,
        neg_hessian,
        gradient: g,
        degenerate: false,
    })
}

/// Refines the lattice maximum at `grid_index` of `sample`.
pub fn refine_peak(sample: &FieldSample, grid_index: usize) -> Result<Peak> {
    refine_peak_in(&sample.grid, &sample.values, grid_index)
}

/// `−∇²Y` at an off-lattice location by multilinear interpolation of the
/// lattice finite-difference Hessians at the corners of the enclosing cell.
pub fn interpolated_neg_hessian(grid: &Grid, values: &[f64], location: &[f64]) -> Result<Mat> {
    let d = grid.dim();
    if location.len() != d {
        return Err(Error::Domain("location has the wrong dimension".into()));
    }
    let counts = grid.counts();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for k in 0..d {
        let u = (location[k] - grid.lower()[k]) / grid.spacing()[k];
        if !u.is_finite() {
            return Err(Error::Domain("non-finite location".into()));
        }
        let i = u.floor().clamp(0.0, (counts[k] - 2) as f64);
        base[k] = i as usize;
        frac[k] = u - i;
        if !(-1e-9..=1.0 + 1e-9).contains(&frac[k]) {
            return Err(Error::Domain(format!(
                "location {location:?} outside the grid"
            )));
        }
        frac[k] = frac[k].clamp(0.0, 1.0);
    }
    let mut acc = Mat::zeros(d, d);
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = base.clone();
        for k in 0..d {
            if corner >> k & 1 == 1 {
                w *= frac[k];
                idx[k] += 1;
            } else {
                w *= 1.0 - frac[k];
            }
        }
        if w == 0.0 {
            continue;
        }
        if idx.iter().zip(counts).any(|(&i, &n)| i < 1 || i + 1 >= n) {
            return Err(Error::Domain(format!(
                "location {location:?} too close to the boundary"
            )));
        }
        let (_, hess) = fd_derivatives(grid, values, grid.flat_index(&idx));
        acc -= hess * w;
    }
    Ok(linalg::symmetrize(&acc))
}

/// `Ĥ^inf = −∇²Y^inf` at `location`.
pub fn peak_hessian_inf(split: &RandomizationSplit, location: &[f64]) -> Result<Mat> {
    interpolated_neg_hessian(&split.grid, &split.inf_values, location)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..grid.len()).map(|i| f(&grid.point(i))).collect()
    }

    #[test]
    fn concave_bowl_has_single_peak() {
        let g = Grid::cube(2, -1.0, 1.0, 21).unwrap();
        let v = fill(&g, |t| -(t[0] * t[0] + t[1] * t[1]));
        let p = find_local_maxima_in(&g, &v).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p[0].location.iter().all(|x| x.abs() < 1e-12));
        assert!(!p[0].degenerate);
    }

    #[test]
    fn constant_field_has_no_peaks() {
        let g = Grid::cube(2, -1.0, 1.0, 11).unwrap();
        assert!(find_local_maxima_in(&g, &vec![1.0; g.len()])
            .unwrap()
            .is_empty());
    }

    #[test]
    fn quadratic_refinement_is_exact() {
        let g = Grid::cube(2, -1.0, 1.0, 41).unwrap();
        let a = [0.0123, -0.0177];
        let m = Mat::from_row_slice(2, 2, &[3.0, 0.7, 0.7, 2.0]);
        let v = fill(&g, |t| {
            let dx = [t[0] - a[0], t[1] - a[1]];
            4.0 - linalg::quad_form(&m, &dx)
        });
        let p = find_local_maxima_in(&g, &v).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0].location[0] - a[0]).abs() < 1e-10);
        assert!((p[0].location[1] - a[1]).abs() < 1e-10);
        assert!((p[0].height - 4.0).abs() < 1e-10);
        assert!((&p[0].neg_hessian - &m * 2.0).abs().max() < 1e-9);
    }

    #[test]
    fn saddle_stencil_is_flagged() {
        let g = Grid::cube(2, -1.0, 1.0, 11).unwrap();
        let mut v = fill(&g, |t| t[0] * t[0] - 3.0 * t[1] * t[1]);
        let c = g.flat_index(&[5, 5]);
        v[c] = 10.0;
        let p = refine_peak_in(&g, &v, c).unwrap();
        // The spike dominates both second differences, so perturb one axis to
        // make the stencil indefinite.
        let mut w = v.clone();
        w[g.flat_index(&[6, 5])] = 30.0;
        w[g.flat_index(&[4, 5])] = 30.0;
        let q = refine_peak_in(&g, &w, c).unwrap();
        assert!(!p.degenerate);
        assert!(q.degenerate);
        assert_eq!(q.location, g.point(c));
    }

    #[test]
    fn peaks_sorted_by_height() {
        let g = Grid::cube(1, 0.0, 1.0, 41).unwrap();
        let v = fill(&g, |t| (12.0 * t[0]).sin() + 0.1 * t[0]);
        let p = find_local_maxima_in(&g, &v).unwrap();
        assert!(p.len() >= 2);
        for w in p.windows(2) {
            assert!(w[0].height >= w[1].height);
        }
    }

    #[test]
    fn hessian_interpolation_exact_on_quadratic() {
        let g = Grid::cube(2, -1.0, 1.0, 21).unwrap();
        let v = fill(&g, |t| {
            -1.5 * t[0] * t[0] + 0.4 * t[0] * t[1] - 0.8 * t[1] * t[1]
        });
        let h = interpolated_neg_hessian(&g, &v, &[0.031, -0.277]).unwrap();
        let want = Mat::from_row_slice(2, 2, &[3.0, -0.4, -0.4, 1.6]);
        assert!((h - want).abs().max() < 1e-10);
        assert!(interpolated_neg_hessian(&g, &v, &[0.97, 0.0]).is_err());
    }
}
