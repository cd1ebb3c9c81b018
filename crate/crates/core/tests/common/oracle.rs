//! Brute-force metric implementations and map-pair generators shared by the
//! metric tests and the acceptance suite. Everything here works on per-id
//! boolean masks and floating-point Jaccard values, independently of the
//! contingency-table code in the library.

#![allow(dead_code)]

use std::collections::BTreeSet;

use bendseg::metrics::MetricsReport;
use bendseg::synth::random_blobs;
use bendseg::{Grid, LabelMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, PartialEq)]
pub struct Brute {
    pub aji: f64,
    pub dice: f64,
    pub rq: f64,
    pub sq: f64,
    pub pq: f64,
    pub ajio: Option<f64>,
    pub acco: Option<f64>,
    pub pairs: Vec<(u32, u32)>,
}

fn ids(map: &LabelMap) -> Vec<u32> {
    let set: BTreeSet<u32> = map.as_slice().iter().copied().filter(|&v| v != 0).collect();
    set.into_iter().collect()
}

fn mask(map: &LabelMap, id: u32) -> Vec<bool> {
    map.as_slice().iter().map(|&v| v == id).collect()
}

fn inter_union(a: &[bool], b: &[bool]) -> (u64, u64) {
    let mut i = 0;
    let mut u = 0;
    for (&x, &y) in a.iter().zip(b) {
        i += (x && y) as u64;
        u += (x || y) as u64;
    }
    (i, u)
}

fn area(m: &[bool]) -> u64 {
    m.iter().filter(|&&v| v).count() as u64
}

/// Ids having an 8-neighbour with a different non-zero id.
pub fn brute_overlapped(gt: &LabelMap) -> BTreeSet<u32> {
    let (h, w) = gt.dims();
    let mut out = BTreeSet::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let a = gt.get(x as usize, y as usize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let b = gt.get(nx as usize, ny as usize);
                    if a != 0 && b != 0 && a != b {
                        out.insert(a);
                    }
                }
            }
        }
    }
    out
}

/// Best-Jaccard prediction for a gt mask, ties to the smaller id; only
/// intersecting predictions qualify.
fn best(g: &[bool], preds: &[(u32, Vec<bool>)]) -> Option<(u32, u64, u64)> {
    let mut best: Option<(u32, u64, u64, f64)> = None;
    for (p, pm) in preds {
        let (i, u) = inter_union(g, pm);
        if i == 0 {
            continue;
        }
        let j = i as f64 / u as f64;
        if best.is_none_or(|b| j > b.3) {
            best = Some((*p, i, u, j));
        }
    }
    best.map(|b| (b.0, b.1, b.2))
}

pub fn brute_metrics(gt: &LabelMap, pred: &LabelMap, overlapped: &BTreeSet<u32>, tau: f64) -> Brute {
    let gts: Vec<(u32, Vec<bool>)> = ids(gt).into_iter().map(|g| (g, mask(gt, g))).collect();
    let preds: Vec<(u32, Vec<bool>)> = ids(pred).into_iter().map(|p| (p, mask(pred, p))).collect();

    let mut si = 0u64;
    let mut su = 0u64;
    let mut used = BTreeSet::new();
    for (_, gm) in &gts {
        match best(gm, &preds) {
            Some((p, i, u)) => {
                si += i;
                su += u;
                used.insert(p);
            }
            None => su += area(gm),
        }
    }
    for (p, pm) in &preds {
        if !used.contains(p) {
            su += area(pm);
        }
    }
    let aji = if su == 0 { 1.0 } else { si as f64 / su as f64 };

    let gf: Vec<bool> = gt.as_slice().iter().map(|&v| v != 0).collect();
    let pf: Vec<bool> = pred.as_slice().iter().map(|&v| v != 0).collect();
    let (fi, _) = inter_union(&gf, &pf);
    let ft = area(&gf) + area(&pf);
    let dice = if ft == 0 { 1.0 } else { (2 * fi) as f64 / ft as f64 };

    let mut pairs = Vec::new();
    let mut iou_sum = 0.0;
    for (g, gm) in &gts {
        for (p, pm) in &preds {
            let (i, u) = inter_union(gm, pm);
            let iou = i as f64 / u as f64;
            if iou > 0.5 {
                pairs.push((*g, *p));
                iou_sum += iou;
            }
        }
    }
    let tp = pairs.len() as f64;
    let fp = preds.len() as f64 - tp;
    let fn_ = gts.len() as f64 - tp;
    let (rq, sq) = if gts.is_empty() && preds.is_empty() {
        (1.0, 1.0)
    } else {
        let rq = tp / (tp + 0.5 * fp + 0.5 * fn_);
        (rq, if tp == 0.0 { 0.0 } else { iou_sum / tp })
    };
    let pq = if gts.is_empty() && preds.is_empty() { 1.0 } else { rq * sq };

    let (mut oi, mut ou, mut hit) = (0u64, 0u64, 0usize);
    for (_, gm) in gts.iter().filter(|(g, _)| overlapped.contains(g)) {
        match best(gm, &preds) {
            Some((_, i, u)) => {
                oi += i;
                ou += u;
            }
            None => ou += area(gm),
        }
        if preds.iter().any(|(_, pm)| {
            let (i, u) = inter_union(gm, pm);
            i as f64 / u as f64 > tau
        }) {
            hit += 1;
        }
    }
    let o = overlapped.len();
    Brute {
        aji,
        dice,
        rq,
        sq,
        pq,
        ajio: (o > 0).then(|| oi as f64 / ou as f64),
        acco: (o > 0).then(|| hit as f64 / o as f64),
        pairs,
    }
}

/// Compares a library report with the brute-force oracle, exactly.
pub fn compare(report: &MetricsReport, gt: &LabelMap, pred: &LabelMap) -> Result<(), String> {
    let ov = brute_overlapped(gt);
    let b = brute_metrics(gt, pred, &ov, report.tau);
    let got = (report.aji, report.dice, report.rq, report.sq, report.pq, report.ajio, report.acco);
    let want = (b.aji, b.dice, b.rq, b.sq, b.pq, b.ajio, b.acco);
    if got != want {
        return Err(format!("metrics differ: library {got:?} oracle {want:?}"));
    }
    let lib_pairs: Vec<(u32, u32)> = report.matching.pairs.iter().map(|p| (p.0, p.1)).collect();
    if lib_pairs != b.pairs {
        return Err(format!("matching differs: {lib_pairs:?} vs {:?}", b.pairs));
    }
    Ok(())
}

/// Number of gt or pred ids that take part in more than one IoU > 0.5 pair.
pub fn matching_violations(gt: &LabelMap, pred: &LabelMap) -> usize {
    let b = brute_metrics(gt, pred, &BTreeSet::new(), 0.5);
    let mut seen_g = BTreeSet::new();
    let mut seen_p = BTreeSet::new();
    b.pairs.iter().filter(|(g, p)| !seen_g.insert(*g) | !seen_p.insert(*p)).count()
}

/// All 4×4 maps built from four 2×2 blocks labelled 0, 1 or 2.
pub fn block_family() -> Vec<LabelMap> {
    (0..81u32)
        .map(|code| {
            let digit = |k: u32| (code / 3u32.pow(k)) % 3;
            Grid::from_fn(4, 4, |x, y| digit((y / 2 * 2 + x / 2) as u32))
        })
        .collect()
}

/// All 4×4 maps built from four full-height columns labelled 0, 1 or 2.
pub fn column_family() -> Vec<LabelMap> {
    (0..81u32).map(|code| Grid::from_fn(4, 4, |x, _| (code / 3u32.pow(x as u32)) % 3)).collect()
}

/// Exhaustive tiny pairs: block-family gt against block- and column-family
/// predictions.
pub fn exhaustive_pairs() -> Vec<(LabelMap, LabelMap)> {
    let gts = block_family();
    let preds: Vec<LabelMap> = block_family().into_iter().chain(column_family()).collect();
    let mut out = Vec::with_capacity(gts.len() * preds.len());
    for g in &gts {
        for p in &preds {
            out.push((g.clone(), p.clone()));
        }
    }
    out
}

fn shifted(map: &LabelMap, dx: i64, dy: i64) -> LabelMap {
    let (h, w) = map.dims();
    Grid::from_fn(h, w, |x, y| {
        let (sx, sy) = (x as i64 - dx, y as i64 - dy);
        if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
            0
        } else {
            map.get(sx as usize, sy as usize)
        }
    })
}

/// Random 32×32 pairs mixing independent maps, shifted and relabelled
/// copies, merged instances and pixel noise.
pub fn random_pairs(n: usize, seed: u64) -> Vec<(LabelMap, LabelMap)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let gt = random_blobs(32, 32, rng.gen_range(0..9), rng.gen());
            let pred = match i % 4 {
                0 => random_blobs(32, 32, rng.gen_range(0..9), rng.gen()),
                1 => {
                    let offset = rng.gen_range(1..50);
                    shifted(&gt, rng.gen_range(-2..=2), rng.gen_range(-2..=2))
                        .map(|v| if v == 0 { 0 } else { v + offset })
                }
                2 => gt.map(|v| v.div_ceil(2)),
                _ => {
                    let mut p = gt.clone();
                    for _ in 0..rng.gen_range(0..200) {
                        let (x, y) = (rng.gen_range(0..32), rng.gen_range(0..32));
                        p.set(x, y, rng.gen_range(0..10));
                    }
                    p
                }
            };
            (gt, pred)
        })
        .collect()
}
