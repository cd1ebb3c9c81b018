//! Subcommand implementations. Each returns the text to print on success.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bendseg::bending::{bending_loss, pattern_table as curve_patterns};
use bendseg::imgcore::{write_float_map_pair, write_float_maps, write_label_map};
use bendseg::losses::{compute_loss, Prediction};
use bendseg::metrics::{evaluate as evaluate_pair, summarize, Aggregation, MetricsReport};
use bendseg::pipeline::{
    extract_patches, hv_ground_truth, identify_overlapped, merge_patches, watershed_postprocess, PatchLayout,
};
use bendseg::{BendingParams, FloatMap, FloatMapPair, Grid, LabelFormat, LabelMap, PostprocessParams};
use image::{Rgb, RgbImage};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::files::{
    create_dir, input_error, key_values, label_format, list_label_maps, list_with_suffix, parse_key_values,
    read_channels, read_labels, write_text,
};
use crate::{Aggregate, CliError, CliResult};

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

fn optional(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fixed)
}

/// Keeps the first error in input order so failures are reproducible.
fn collect_ordered<T>(results: Vec<CliResult<T>>) -> CliResult<Vec<T>> {
    results.into_iter().collect()
}

fn matched_pairs(gt: &Path, pred: &Path, format: Option<LabelFormat>) -> CliResult<Vec<(String, PathBuf, PathBuf)>> {
    if gt.is_file() && pred.is_file() {
        return Ok(vec![(file_stem(gt), gt.to_path_buf(), pred.to_path_buf())]);
    }
    if !(gt.is_dir() && pred.is_dir()) {
        return Err(CliError::Input("ground truth and prediction must both be files or both directories".into()));
    }
    let gts = list_label_maps(gt, format)?;
    let mut preds = list_label_maps(pred, format)?;
    if gts.is_empty() && preds.is_empty() {
        return Err(CliError::Input(format!("no label maps in {} or {}", gt.display(), pred.display())));
    }
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    for (stem, g) in gts {
        match preds.remove(&stem) {
            Some(p) => pairs.push((stem, g, p)),
            None => missing.push(format!("{stem} (no prediction)")),
        }
    }
    missing.extend(preds.into_keys().map(|s| format!("{s} (no ground truth)")));
    if !missing.is_empty() {
        return Err(CliError::Input(format!("unmatched files: {}", missing.join(", "))));
    }
    Ok(pairs)
}

pub fn evaluate(
    pool: &ThreadPool,
    gt: &Path,
    pred: &Path,
    tau: f64,
    aggregate: Aggregate,
    format: Option<LabelFormat>,
    out: Option<&Path>,
) -> CliResult<String> {
    let pairs = matched_pairs(gt, pred, format)?;
    let reports = collect_ordered(pool.install(|| {
        pairs
            .par_iter()
            .map(|(_, g, p)| {
                let gt = read_labels(g, format)?;
                let pred = read_labels(p, format)?;
                evaluate_pair(&gt, &pred, None, tau).map_err(|e| input_error(p, e))
            })
            .collect()
    }))?;
    let mode = match aggregate {
        Aggregate::Mean => Aggregation::PerImage,
        Aggregate::Pooled => Aggregation::Pooled,
    };
    let s = summarize(&reports, mode);

    let mut table = String::from("image\taji\tdice\trq\tsq\tpq\tajio\tacco\n");
    let row = |name: &str, vals: [f64; 5], ajio: Option<f64>, acco: Option<f64>| {
        let mut line = name.to_string();
        for v in vals {
            line.push('\t');
            line.push_str(&fixed(v));
        }
        format!("{line}\t{}\t{}\n", optional(ajio), optional(acco))
    };
    for ((stem, _, _), r) in pairs.iter().zip(&reports) {
        table.push_str(&row(stem, [r.aji, r.dice, r.rq, r.sq, r.pq], r.ajio, r.acco));
    }
    table.push_str(&row("summary", [s.aji, s.dice, s.rq, s.sq, s.pq], s.ajio, s.acco));

    if let Some(dir) = out {
        create_dir(dir)?;
        for ((stem, _, _), r) in pairs.iter().zip(&reports) {
            write_text(&dir.join(format!("{stem}.txt")), &report_text(r))?;
        }
        let aggregation = match aggregate {
            Aggregate::Mean => "mean",
            Aggregate::Pooled => "pooled",
        };
        let summary = key_values([
            ("acco", optional(s.acco)),
            ("aggregate", aggregation.to_string()),
            ("aji", fixed(s.aji)),
            ("ajio", optional(s.ajio)),
            ("dice", fixed(s.dice)),
            ("images", s.images.to_string()),
            ("pq", fixed(s.pq)),
            ("rq", fixed(s.rq)),
            ("sq", fixed(s.sq)),
            ("tau", tau.to_string()),
        ]);
        write_text(&dir.join("summary.txt"), &summary)?;
    }
    Ok(table)
}

fn report_text(r: &MetricsReport) -> String {
    key_values(r.fields())
}

/// Overlay palette: grey for flat points, blue up to the sharpest convex
/// corner, green up to a concave right angle, red beyond.
const PALETTE: [Rgb<u8>; 4] = [Rgb([160, 160, 160]), Rgb([40, 90, 255]), Rgb([30, 200, 60]), Rgb([255, 40, 40])];

fn energy_class(energy: f64) -> usize {
    const TOL: f64 = 1e-6;
    if energy <= TOL {
        0
    } else if energy <= 9.66 + TOL {
        1
    } else if energy <= 40.0 + TOL {
        2
    } else {
        3
    }
}

pub fn bend(
    input: &Path,
    params: &BendingParams,
    format: Option<LabelFormat>,
    backdrop: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<String> {
    let map = read_labels(input, format)?;
    let report = bending_loss(&map, params);

    // a pixel visited twice keeps its larger energy
    let mut strongest: BTreeMap<(i32, i32), f64> = BTreeMap::new();
    for p in &report.per_point {
        let e = strongest.entry((p.point.y, p.point.x)).or_insert(0.0);
        *e = e.max(p.energy);
    }
    let mut counts = [0usize; 4];
    for p in &report.per_point {
        counts[energy_class(p.energy)] += 1;
    }

    if let Some(out) = out {
        let (h, w) = map.dims();
        let mut img = match backdrop {
            Some(path) => {
                let grey = image::open(path).map_err(|e| input_error(path, e))?.to_luma8();
                if grey.dimensions() != (w as u32, h as u32) {
                    return Err(input_error(
                        path,
                        format!("backdrop is {}x{}, labels are {w}x{h}", grey.width(), grey.height()),
                    ));
                }
                RgbImage::from_fn(w as u32, h as u32, |x, y| {
                    let g = grey.get_pixel(x, y).0[0];
                    Rgb([g, g, g])
                })
            }
            None => RgbImage::from_fn(w as u32, h as u32, |x, y| {
                if map.get(x as usize, y as usize) != 0 {
                    Rgb([60, 60, 60])
                } else {
                    Rgb([0, 0, 0])
                }
            }),
        };
        for (&(y, x), &e) in &strongest {
            img.put_pixel(x as u32, y as u32, PALETTE[energy_class(e)]);
        }
        img.save_with_format(out, image::ImageFormat::Png).map_err(|e| input_error(out, e))?;
    }

    Ok(key_values([
        ("alpha", params.alpha.to_string()),
        ("blue_points", counts[1].to_string()),
        ("contours", report.contour_offsets.len().to_string()),
        ("green_points", counts[2].to_string()),
        ("grey_points", counts[0].to_string()),
        ("l_be", format!("{:.4}", report.loss)),
        ("max_be", format!("{:.4}", report.max_energy())),
        ("points", report.per_point.len().to_string()),
        ("red_points", counts[3].to_string()),
        ("weighted", format!("{:.4}", report.weighted())),
    ]))
}

pub fn pattern_table(mu: f64) -> CliResult<String> {
    let params = BendingParams::with_mu(mu);
    params.validate()?;
    let mut out = String::from("group\tprev\tnext\tangle\tconvex\tconcave\n");
    for r in curve_patterns(&params) {
        let _ = writeln!(
            out,
            "{}\t{},{}\t{},{}\t{:.0}\t{:.2}\t{:.2}",
            r.group, r.first.x, r.first.y, r.second.x, r.second.y, r.angle_deg, r.convex, r.concave
        );
    }
    Ok(out)
}

pub fn gt_distmap(input: &Path, format: Option<LabelFormat>, out: &Path) -> CliResult<String> {
    let gt = read_labels(input, format)?;
    let overlapped = identify_overlapped(&gt);
    let targets = hv_ground_truth(&gt, &overlapped);
    create_dir(out)?;
    let stem = file_stem(input);
    let hv = out.join(format!("{stem}_hv.fmap"));
    let ohv = out.join(format!("{stem}_ohv.fmap"));
    let ids = out.join(format!("{stem}_overlapped.txt"));
    write_float_map_pair(&targets.all_nuclei, &hv).map_err(|e| input_error(&hv, e))?;
    write_float_map_pair(&targets.overlapped_only, &ohv).map_err(|e| input_error(&ohv, e))?;
    write_text(&ids, &overlapped.iter().map(|id| format!("{id}\n")).collect::<String>())?;
    Ok(key_values([("instances", gt.instances().len().to_string()), ("overlapped", overlapped.len().to_string())]))
}

fn postprocess_one(prob: &Path, hv: &Path, params: &PostprocessParams) -> CliResult<LabelMap> {
    let prob = read_channels(prob, 1)?.remove(0);
    let mut channels = read_channels(hv, 2)?;
    let v = channels.pop().expect("two channels");
    let h = channels.pop().expect("two channels");
    let pair = FloatMapPair::new(h, v)?;
    Ok(watershed_postprocess(&prob, &pair, params)?)
}

pub fn postprocess(
    pool: &ThreadPool,
    inputs: &[PathBuf],
    params: &PostprocessParams,
    format: LabelFormat,
    out: &Path,
) -> CliResult<String> {
    if let [prob, hv] = inputs {
        let labels = postprocess_one(prob, hv, params)?;
        write_label_map(&labels, out, format).map_err(|e| input_error(out, e))?;
        return Ok(key_values([("instances", labels.instances().len())]));
    }
    let dir = &inputs[0];
    if !dir.is_dir() {
        return Err(CliError::Input(format!(
            "{}: expected a directory of <stem>_prob.fmap / <stem>_hv.fmap pairs, or two files",
            dir.display()
        )));
    }
    let probs = list_with_suffix(dir, "_prob.fmap")?;
    let hvs = list_with_suffix(dir, "_hv.fmap")?;
    if probs.is_empty() {
        return Err(input_error(dir, "no *_prob.fmap files"));
    }
    let missing: Vec<&str> = probs.keys().filter(|s| !hvs.contains_key(*s)).map(String::as_str).collect();
    if !missing.is_empty() {
        return Err(input_error(dir, format!("missing distance maps for: {}", missing.join(", "))));
    }
    create_dir(out)?;
    let jobs: Vec<(&String, &PathBuf)> = probs.iter().collect();
    let counts = collect_ordered(pool.install(|| {
        jobs.par_iter()
            .map(|(stem, prob)| {
                let labels = postprocess_one(prob, &hvs[*stem], params)?;
                let path = out.join(format!("{stem}.{}", format.extension()));
                write_label_map(&labels, &path, format).map_err(|e| input_error(&path, e))?;
                Ok(labels.instances().len())
            })
            .collect()
    }))?;
    let mut pairs: Vec<(String, usize)> =
        jobs.iter().zip(counts).map(|((stem, _), n)| (format!("instances.{stem}"), n)).collect();
    pairs.push(("images".to_string(), jobs.len()));
    Ok(key_values(pairs))
}

pub struct LossInputs {
    pub prob: PathBuf,
    pub hv: PathBuf,
    pub ohv: PathBuf,
    pub gt: PathBuf,
    pub labels: Option<PathBuf>,
}

fn read_pair(path: &Path) -> CliResult<FloatMapPair> {
    let mut c = read_channels(path, 2)?;
    let v = c.pop().expect("two channels");
    let h = c.pop().expect("two channels");
    FloatMapPair::new(h, v).map_err(|e| input_error(path, e))
}

pub fn loss(
    inputs: &LossInputs,
    params: &BendingParams,
    watershed: &PostprocessParams,
    whole_image_gradient: bool,
) -> CliResult<String> {
    let prob = read_channels(&inputs.prob, 1)?.remove(0);
    let hv = read_pair(&inputs.hv)?;
    let ohv = read_pair(&inputs.ohv)?;
    let gt = read_labels(&inputs.gt, None)?;
    let labels = match &inputs.labels {
        Some(path) => read_labels(path, None)?,
        None => watershed_postprocess(&prob, &hv, watershed)?,
    };
    let pred = Prediction { prob: &prob, hv: &hv, ohv: &ohv, labels: &labels };
    let breakdown = compute_loss(&pred, &gt, params, whole_image_gradient)?;
    Ok(key_values(breakdown.fields()))
}

const LAYOUT_FILE: &str = "layout.txt";

fn patch_name(row: usize, col: usize, ext: &str) -> String {
    format!("patch_{row:03}_{col:03}.{ext}")
}

fn is_fmap(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("fmap"))
}

pub fn patch(
    pool: &ThreadPool,
    input: &Path,
    patch: usize,
    window: usize,
    format: Option<LabelFormat>,
    out: &Path,
) -> CliResult<String> {
    create_dir(out)?;
    let (layout, kind, ext, channels) = if is_fmap(input) {
        let maps = bendseg::imgcore::read_float_maps(input).map_err(|e| input_error(input, e))?;
        let mut per_channel = Vec::new();
        let mut layout = None;
        for m in &maps {
            let (patches, l) = extract_patches(m.grid(), patch, window)?;
            per_channel.push(patches);
            layout = Some(l);
        }
        let layout = layout.ok_or_else(|| input_error(input, "no channels"))?;
        let placements = layout.placements();
        collect_ordered(pool.install(|| {
            placements
                .par_iter()
                .enumerate()
                .map(|(i, pl)| {
                    let tiles = per_channel
                        .iter()
                        .map(|c| FloatMap::from_grid(c[i].clone()))
                        .collect::<bendseg::Result<Vec<_>>>()?;
                    let refs: Vec<&FloatMap> = tiles.iter().collect();
                    let path = out.join(patch_name(pl.row, pl.col, "fmap"));
                    write_float_maps(&refs, &path).map_err(|e| input_error(&path, e))
                })
                .collect()
        }))?;
        (layout, "fmap", "fmap", maps.len())
    } else {
        let map = read_labels(input, format)?;
        let out_format = format.unwrap_or(label_format(input, None)?);
        let (patches, layout) = extract_patches(&map, patch, window)?;
        let placements = layout.placements();
        collect_ordered(pool.install(|| {
            placements
                .par_iter()
                .zip(&patches)
                .map(|(pl, p)| {
                    let path = out.join(patch_name(pl.row, pl.col, out_format.extension()));
                    write_label_map(p, &path, out_format).map_err(|e| input_error(&path, e))
                })
                .collect()
        }))?;
        (layout, "labels", out_format.extension(), 1)
    };
    let text = key_values([
        ("channels", channels.to_string()),
        ("cols", layout.cols.to_string()),
        ("extension", ext.to_string()),
        ("height", layout.height.to_string()),
        ("kind", kind.to_string()),
        ("patch", layout.patch.to_string()),
        ("rows", layout.rows.to_string()),
        ("width", layout.width.to_string()),
        ("window", layout.window.to_string()),
    ]);
    write_text(&out.join(LAYOUT_FILE), &text)?;
    Ok(key_values([("cols", layout.cols), ("patches", layout.count()), ("rows", layout.rows)]))
}

fn layout_field(fields: &BTreeMap<String, String>, key: &str, path: &Path) -> CliResult<String> {
    fields.get(key).cloned().ok_or_else(|| input_error(path, format!("missing '{key}'")))
}

fn layout_number(fields: &BTreeMap<String, String>, key: &str, path: &Path) -> CliResult<usize> {
    layout_field(fields, key, path)?.parse().map_err(|e| input_error(path, format!("'{key}': {e}")))
}

pub fn merge(dir: &Path, out: &Path) -> CliResult<String> {
    let layout_path = dir.join(LAYOUT_FILE);
    let fields = parse_key_values(&layout_path)?;
    let num = |k: &str| layout_number(&fields, k, &layout_path);
    let layout = PatchLayout::new(num("height")?, num("width")?, num("patch")?, num("window")?)?;
    if layout.rows != num("rows")? || layout.cols != num("cols")? {
        return Err(input_error(&layout_path, "rows/cols do not match the image and window sizes"));
    }
    let ext = layout_field(&fields, "extension", &layout_path)?;
    let kind = layout_field(&fields, "kind", &layout_path)?;
    let paths: Vec<PathBuf> = layout.placements().iter().map(|pl| dir.join(patch_name(pl.row, pl.col, &ext))).collect();
    if let Some(missing) = paths.iter().find(|p| !p.is_file()) {
        return Err(input_error(missing, "missing patch"));
    }
    match kind.as_str() {
        "labels" => {
            let in_format: LabelFormat = ext.parse()?;
            let tiles = paths.iter().map(|p| read_labels(p, Some(in_format))).collect::<CliResult<Vec<_>>>()?;
            let merged = merge_patches(&tiles, &layout)?;
            let out_format = label_format(out, None)?;
            write_label_map(&merged, out, out_format).map_err(|e| input_error(out, e))?;
        }
        "fmap" => {
            let channels = num("channels")?;
            let tiles = paths.iter().map(|p| read_channels(p, channels)).collect::<CliResult<Vec<_>>>()?;
            let merged = (0..channels)
                .map(|c| {
                    let grids: Vec<Grid<f32>> = tiles.iter().map(|t| t[c].grid().clone()).collect();
                    Ok(FloatMap::from_grid(merge_patches(&grids, &layout)?)?)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let refs: Vec<&FloatMap> = merged.iter().collect();
            write_float_maps(&refs, out).map_err(|e| input_error(out, e))?;
        }
        other => return Err(input_error(&layout_path, format!("unknown kind '{other}'"))),
    }
    Ok(key_values([("height", layout.height), ("patches", layout.count()), ("width", layout.width)]))
}
