//! Python bindings. Maps cross the boundary as nested lists indexed
//! `[y][x]`; distance-map pairs as `(horizontal, vertical)` tuples.

use std::collections::BTreeSet;

use bendseg::bending::{pattern_table as curve_patterns, polygon_bending_gradient as polygon_gradient};
use bendseg::losses;
use bendseg::pipeline::{identify_overlapped as overlapped_ids, watershed_postprocess};
use bendseg::{FloatMap, FloatMapPair, Grid, LabelFormat, LabelMap};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: bendseg::Error) -> PyErr {
    match e {
        bendseg::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn grid_from_rows<T: Copy>(rows: Vec<Vec<T>>) -> PyResult<Grid<T>> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Grid::new(h, w, rows.into_iter().flatten().collect()).map_err(py_err)
}

fn rows_of<T: Copy>(grid: &Grid<T>) -> Vec<Vec<T>> {
    grid.as_slice().chunks(grid.width()).map(<[T]>::to_vec).collect()
}

fn labels(rows: Vec<Vec<u32>>) -> PyResult<LabelMap> {
    grid_from_rows(rows)
}

fn float_map(rows: Vec<Vec<f32>>) -> PyResult<FloatMap> {
    FloatMap::from_grid(grid_from_rows(rows)?).map_err(py_err)
}

fn float_pair(pair: (Vec<Vec<f32>>, Vec<Vec<f32>>)) -> PyResult<FloatMapPair> {
    FloatMapPair::new(float_map(pair.0)?, float_map(pair.1)?).map_err(py_err)
}

fn pair_rows(pair: &FloatMapPair) -> (Vec<Vec<f32>>, Vec<Vec<f32>>) {
    (rows_of(pair.horizontal().grid()), rows_of(pair.vertical().grid()))
}

/// Bending-energy settings.
#[pyclass(frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct BendingParams {
    mu: f64,
    alpha: f64,
    concavity_extent: usize,
}

#[pymethods]
impl BendingParams {
    #[new]
    #[pyo3(signature = (mu = 20.0, alpha = 1.0, concavity_extent = 1))]
    fn new(mu: f64, alpha: f64, concavity_extent: usize) -> PyResult<Self> {
        let p = BendingParams { mu, alpha, concavity_extent };
        p.core().map(|_| p)
    }

    fn __repr__(&self) -> String {
        format!("BendingParams(mu={}, alpha={}, concavity_extent={})", self.mu, self.alpha, self.concavity_extent)
    }
}

impl BendingParams {
    fn core(&self) -> PyResult<bendseg::BendingParams> {
        let p = bendseg::BendingParams {
            mu: self.mu,
            alpha: self.alpha,
            concavity_extent: self.concavity_extent,
            ..Default::default()
        };
        p.validate().map_err(py_err)?;
        Ok(p)
    }
}

fn params_or_default(params: Option<&BendingParams>) -> PyResult<bendseg::BendingParams> {
    match params {
        Some(p) => p.core(),
        None => Ok(bendseg::BendingParams::default()),
    }
}

/// Per-image evaluation results.
#[pyclass(frozen, get_all)]
struct MetricsReport {
    aji: f64,
    dice: f64,
    rq: f64,
    sq: f64,
    pq: f64,
    ajio: Option<f64>,
    acco: Option<f64>,
    tau: f64,
    n_gt: usize,
    n_pred: usize,
    n_overlapped: usize,
    matched_overlapped: usize,
    tp: usize,
    fp: usize,
    fn_count: usize,
    pairs: Vec<(u32, u32, f64)>,
}

#[pymethods]
impl MetricsReport {
    fn __repr__(&self) -> String {
        format!(
            "MetricsReport(aji={:.4}, dice={:.4}, rq={:.4}, sq={:.4}, pq={:.4}, ajio={:?}, acco={:?})",
            self.aji, self.dice, self.rq, self.sq, self.pq, self.ajio, self.acco
        )
    }
}

/// Mean bending energy of a label map, with per-point details.
#[pyfunction]
#[pyo3(signature = (label_map, params = None))]
fn bending_loss<'py>(
    py: Python<'py>,
    label_map: Vec<Vec<u32>>,
    params: Option<&BendingParams>,
) -> PyResult<Bound<'py, PyDict>> {
    let report = bendseg::bending_loss(&labels(label_map)?, &params_or_default(params)?);
    let points: Vec<(i32, i32, f64, bool, f64)> =
        report.per_point.iter().map(|p| (p.point.x, p.point.y, p.kappa, p.concave, p.energy)).collect();
    let out = PyDict::new(py);
    out.set_item("loss", report.loss)?;
    out.set_item("weighted", report.weighted())?;
    out.set_item("max_energy", report.max_energy())?;
    out.set_item("contour_offsets", report.contour_offsets.clone())?;
    out.set_item("points", points)?;
    Ok(out)
}

/// The 28 neighbourhood curve patterns as
/// `(group, (dx1, dy1), (dx2, dy2), angle, convex, concave)` tuples.
#[pyfunction]
#[pyo3(signature = (mu = 20.0))]
#[allow(clippy::type_complexity)]
fn pattern_table(mu: f64) -> PyResult<Vec<(usize, (i32, i32), (i32, i32), f64, f64, f64)>> {
    let params = bendseg::BendingParams::with_mu(mu);
    params.validate().map_err(py_err)?;
    Ok(curve_patterns(&params)
        .into_iter()
        .map(|r| (r.group, (r.first.x, r.first.y), (r.second.x, r.second.y), r.angle_deg, r.convex, r.concave))
        .collect())
}

/// Mean bending energy of a closed polygon and its gradient per vertex.
#[pyfunction]
#[pyo3(signature = (vertices, concave, params = None))]
fn polygon_bending_gradient(
    vertices: Vec<(f64, f64)>,
    concave: Vec<bool>,
    params: Option<&BendingParams>,
) -> PyResult<(f64, Vec<(f64, f64)>)> {
    let verts: Vec<[f64; 2]> = vertices.into_iter().map(|(x, y)| [x, y]).collect();
    let (loss, grad) = polygon_gradient(&verts, &concave, &params_or_default(params)?).map_err(py_err)?;
    Ok((loss, grad.into_iter().map(|g| (g[0], g[1])).collect()))
}

/// Full metric battery for one image.
#[pyfunction]
#[pyo3(signature = (gt, pred, overlapped = None, tau = 0.5))]
fn evaluate(
    gt: Vec<Vec<u32>>,
    pred: Vec<Vec<u32>>,
    overlapped: Option<BTreeSet<u32>>,
    tau: f64,
) -> PyResult<MetricsReport> {
    let r = bendseg::evaluate(&labels(gt)?, &labels(pred)?, overlapped.as_ref(), tau).map_err(py_err)?;
    Ok(MetricsReport {
        aji: r.aji,
        dice: r.dice,
        rq: r.rq,
        sq: r.sq,
        pq: r.pq,
        ajio: r.ajio,
        acco: r.acco,
        tau: r.tau,
        n_gt: r.n_gt,
        n_pred: r.n_pred,
        n_overlapped: r.n_overlapped,
        matched_overlapped: r.matched_overlapped,
        tp: r.matching.tp,
        fp: r.matching.fp,
        fn_count: r.matching.fn_,
        pairs: r.matching.pairs,
    })
}

#[pyfunction]
fn identify_overlapped(gt: Vec<Vec<u32>>) -> PyResult<BTreeSet<u32>> {
    Ok(overlapped_ids(&labels(gt)?))
}

/// `(hv, ohv)` distance targets, each a `(horizontal, vertical)` pair.
#[pyfunction]
#[pyo3(signature = (gt, overlapped = None))]
#[allow(clippy::type_complexity)]
fn hv_ground_truth(
    gt: Vec<Vec<u32>>,
    overlapped: Option<BTreeSet<u32>>,
) -> PyResult<((Vec<Vec<f32>>, Vec<Vec<f32>>), (Vec<Vec<f32>>, Vec<Vec<f32>>))> {
    let gt = labels(gt)?;
    let ids = overlapped.unwrap_or_else(|| overlapped_ids(&gt));
    let t = bendseg::pipeline::hv_ground_truth(&gt, &ids);
    Ok((pair_rows(&t.all_nuclei), pair_rows(&t.overlapped_only)))
}

/// Marker-controlled watershed on a probability map and distance maps.
#[pyfunction]
#[pyo3(signature = (prob, hv, prob_threshold = 0.5, contour_threshold = 0.4, min_marker_area = 10))]
fn watershed(
    prob: Vec<Vec<f32>>,
    hv: (Vec<Vec<f32>>, Vec<Vec<f32>>),
    prob_threshold: f64,
    contour_threshold: f64,
    min_marker_area: usize,
) -> PyResult<Vec<Vec<u32>>> {
    let params = bendseg::PostprocessParams { prob_threshold, contour_threshold, min_marker_area };
    params.validate().map_err(py_err)?;
    let out = watershed_postprocess(&float_map(prob)?, &float_pair(hv)?, &params).map_err(py_err)?;
    Ok(rows_of(&out))
}

#[pyfunction]
fn cross_entropy(pred: Vec<Vec<f32>>, truth: Vec<Vec<bool>>) -> PyResult<f64> {
    losses::cross_entropy(&float_map(pred)?, &grid_from_rows(truth)?).map_err(py_err)
}

#[pyfunction]
fn dice_loss(pred: Vec<Vec<f32>>, truth: Vec<Vec<bool>>) -> PyResult<f64> {
    losses::dice_loss(&float_map(pred)?, &grid_from_rows(truth)?).map_err(py_err)
}

#[pyfunction]
#[allow(clippy::type_complexity)]
fn mse(d: (Vec<Vec<f32>>, Vec<Vec<f32>>), target: (Vec<Vec<f32>>, Vec<Vec<f32>>)) -> PyResult<f64> {
    losses::mse(&float_pair(d)?, &float_pair(target)?).map_err(py_err)
}

#[pyfunction]
#[allow(clippy::type_complexity)]
fn msge(
    d: (Vec<Vec<f32>>, Vec<Vec<f32>>),
    target: (Vec<Vec<f32>>, Vec<Vec<f32>>),
    region: Vec<Vec<bool>>,
) -> PyResult<f64> {
    losses::msge(&float_pair(d)?, &float_pair(target)?, &grid_from_rows(region)?).map_err(py_err)
}

/// Sum of the loss terms with `alpha` weighting the bending term.
#[pyfunction]
fn total_loss<'py>(
    py: Python<'py>,
    l_inst: f64,
    l_hv: f64,
    l_ohv: f64,
    l_be: f64,
    alpha: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let b = losses::total_loss(l_inst, l_hv, l_ohv, l_be, alpha).map_err(py_err)?;
    let out = PyDict::new(py);
    for (k, v) in b.fields() {
        out.set_item(k, v)?;
    }
    Ok(out)
}

fn format_for(path: &str, format: Option<&str>) -> PyResult<LabelFormat> {
    match format {
        Some(f) => f.parse().map_err(py_err),
        None => LabelFormat::from_path(path.as_ref())
            .ok_or_else(|| PyValueError::new_err(format!("{path}: cannot infer label-map format"))),
    }
}

#[pyfunction]
#[pyo3(signature = (path, format = None))]
fn read_label_map(path: &str, format: Option<&str>) -> PyResult<Vec<Vec<u32>>> {
    let map = bendseg::imgcore::read_label_map(path, format_for(path, format)?).map_err(py_err)?;
    Ok(rows_of(&map))
}

#[pyfunction]
#[pyo3(signature = (label_map, path, format = None))]
fn write_label_map(label_map: Vec<Vec<u32>>, path: &str, format: Option<&str>) -> PyResult<()> {
    bendseg::imgcore::write_label_map(&labels(label_map)?, path, format_for(path, format)?).map_err(py_err)
}

#[pyfunction]
fn read_float_maps(path: &str) -> PyResult<Vec<Vec<Vec<f32>>>> {
    let maps = bendseg::imgcore::read_float_maps(path).map_err(py_err)?;
    Ok(maps.iter().map(|m| rows_of(m.grid())).collect())
}

#[pyfunction]
fn write_float_maps(channels: Vec<Vec<Vec<f32>>>, path: &str) -> PyResult<()> {
    let maps = channels.into_iter().map(float_map).collect::<PyResult<Vec<_>>>()?;
    let refs: Vec<&FloatMap> = maps.iter().collect();
    bendseg::imgcore::write_float_maps(&refs, path).map_err(py_err)
}

#[pymodule]
fn pybendseg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BendingParams>()?;
    m.add_class::<MetricsReport>()?;
    m.add_function(wrap_pyfunction!(bending_loss, m)?)?;
    m.add_function(wrap_pyfunction!(pattern_table, m)?)?;
    m.add_function(wrap_pyfunction!(polygon_bending_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(identify_overlapped, m)?)?;
    m.add_function(wrap_pyfunction!(hv_ground_truth, m)?)?;
    m.add_function(wrap_pyfunction!(watershed, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(dice_loss, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(msge, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(read_label_map, m)?)?;
    m.add_function(wrap_pyfunction!(write_label_map, m)?)?;
    m.add_function(wrap_pyfunction!(read_float_maps, m)?)?;
    m.add_function(wrap_pyfunction!(write_float_maps, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let rows = vec![vec![1u32, 2, 3], vec![4, 5, 6]];
        let grid = grid_from_rows(rows.clone()).unwrap();
        assert_eq!(grid.dims(), (2, 3));
        assert_eq!(grid.get(2, 1), 6);
        assert_eq!(rows_of(&grid), rows);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        Python::initialize();
        assert!(grid_from_rows(vec![vec![1u32, 2], vec![3]]).is_err());
        assert!(grid_from_rows::<u32>(vec![]).is_err());
    }
}
