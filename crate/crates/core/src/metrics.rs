//! Instance-segmentation evaluation: AJI, Dice, RQ/SQ/PQ with unique
//! matching, and the overlapped-nuclei metrics AJIO and ACCO.
//!
//! Jaccard comparisons are done on exact integer ratios, so ties are real
//! ties and are broken by the smaller prediction id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::imgcore::LabelMap;
use crate::pipeline::identify_overlapped;

/// Default Jaccard threshold for ACCO.
pub const DEFAULT_TAU: f64 = 0.5;

/// Pixel counts shared by a ground-truth and a predicted instance map.
#[derive(Clone, Debug)]
pub struct Overlap {
    pub gt_area: BTreeMap<u32, u64>,
    pub pred_area: BTreeMap<u32, u64>,
    /// For each gt id, `(pred id, intersection)` in ascending pred id.
    pub intersections: BTreeMap<u32, Vec<(u32, u64)>>,
    pub foreground_intersection: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    fn cmp_value(&self, other: &Ratio) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }

    fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Overlap {
    pub fn new(gt: &LabelMap, pred: &LabelMap) -> Result<Self> {
        gt.same_dims(pred)?;
        let mut gt_area = BTreeMap::new();
        let mut pred_area = BTreeMap::new();
        let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
        let mut foreground_intersection = 0;
        for (&g, &p) in gt.as_slice().iter().zip(pred.as_slice()) {
            if g != 0 {
                *gt_area.entry(g).or_insert(0) += 1;
            }
            if p != 0 {
                *pred_area.entry(p).or_insert(0) += 1;
            }
            if g != 0 && p != 0 {
                *pairs.entry((g, p)).or_insert(0) += 1;
                foreground_intersection += 1;
            }
        }
        let mut intersections: BTreeMap<u32, Vec<(u32, u64)>> = BTreeMap::new();
        for ((g, p), n) in pairs {
            intersections.entry(g).or_default().push((p, n));
        }
        for v in intersections.values_mut() {
            v.sort_unstable();
        }
        Ok(Overlap { gt_area, pred_area, intersections, foreground_intersection })
    }

    fn jaccard(&self, g: u32, p: u32, inter: u64) -> Ratio {
        Ratio { num: inter, den: self.gt_area[&g] + self.pred_area[&p] - inter }
    }

    /// Prediction with the largest Jaccard index against `g`, ties to the
    /// smaller id, as `(pred, intersection, union)`. `None` if nothing
    /// intersects `g`.
    fn best_match(&self, g: u32) -> Option<(u32, u64, u64)> {
        let mut best: Option<(u32, Ratio)> = None;
        for &(p, inter) in self.intersections.get(&g).map(Vec::as_slice).unwrap_or(&[]) {
            let j = self.jaccard(g, p, inter);
            if best.is_none_or(|(_, b)| j.cmp_value(&b) == Ordering::Greater) {
                best = Some((p, j));
            }
        }
        best.map(|(p, j)| (p, j.num, j.den))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult {
    /// `(gt id, pred id, IoU)` in ascending gt id.
    pub pairs: Vec<(u32, u32, f64)>,
    pub unmatched_gt: BTreeSet<u32>,
    pub unmatched_pred: BTreeSet<u32>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Panoptic {
    pub rq: f64,
    pub sq: f64,
    pub pq: f64,
}

/// Sums behind AJI: `intersection / union`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AjiSums {
    pub intersection: u64,
    pub union: u64,
}

fn aji_sums(ov: &Overlap) -> AjiSums {
    let mut sums = AjiSums::default();
    let mut used = BTreeSet::new();
    for (&g, &area) in &ov.gt_area {
        match ov.best_match(g) {
            Some((p, inter, union)) => {
                sums.intersection += inter;
                sums.union += union;
                used.insert(p);
            }
            None => sums.union += area,
        }
    }
    for (p, &area) in &ov.pred_area {
        if !used.contains(p) {
            sums.union += area;
        }
    }
    sums
}

fn ratio_or_one(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Aggregated Jaccard index. 1 when both maps are empty.
pub fn aji(gt: &LabelMap, pred: &LabelMap) -> Result<f64> {
    let s = aji_sums(&Overlap::new(gt, pred)?);
    Ok(ratio_or_one(s.intersection, s.union))
}

/// Instance-blind foreground Dice. 1 when both foregrounds are empty.
pub fn dice_global(gt: &LabelMap, pred: &LabelMap) -> Result<f64> {
    let ov = Overlap::new(gt, pred)?;
    let total: u64 = ov.gt_area.values().sum::<u64>() + ov.pred_area.values().sum::<u64>();
    Ok(ratio_or_one(2 * ov.foreground_intersection, total))
}

fn unique_matching(ov: &Overlap) -> MatchResult {
    let mut pairs = Vec::new();
    let mut matched_pred = BTreeSet::new();
    let mut unmatched_gt = BTreeSet::new();
    for &g in ov.gt_area.keys() {
        let hit = ov.intersections.get(&g).and_then(|v| {
            v.iter().find_map(|&(p, inter)| {
                let j = ov.jaccard(g, p, inter);
                (2 * j.num > j.den).then_some((p, j.value()))
            })
        });
        match hit {
            Some((p, iou)) => {
                pairs.push((g, p, iou));
                matched_pred.insert(p);
            }
            None => {
                unmatched_gt.insert(g);
            }
        }
    }
    let unmatched_pred: BTreeSet<u32> = ov.pred_area.keys().copied().filter(|p| !matched_pred.contains(p)).collect();
    MatchResult {
        tp: pairs.len(),
        fp: unmatched_pred.len(),
        fn_: unmatched_gt.len(),
        pairs,
        unmatched_gt,
        unmatched_pred,
    }
}

fn panoptic_from(tp: usize, fp: usize, fn_: usize, iou_sum: f64) -> Panoptic {
    if tp + fp + fn_ == 0 {
        return Panoptic { rq: 1.0, sq: 1.0, pq: 1.0 };
    }
    let rq = tp as f64 / (tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64);
    let sq = if tp == 0 { 0.0 } else { iou_sum / tp as f64 };
    Panoptic { rq, sq, pq: rq * sq }
}

/// Unique matching at IoU > 0.5 and the panoptic quality terms. Without any
/// instance on either side all three are 1.
pub fn panoptic(gt: &LabelMap, pred: &LabelMap) -> Result<(MatchResult, Panoptic)> {
    let m = unique_matching(&Overlap::new(gt, pred)?);
    let iou_sum = m.pairs.iter().map(|p| p.2).sum();
    let q = panoptic_from(m.tp, m.fp, m.fn_, iou_sum);
    Ok((m, q))
}

fn check_overlapped(ov: &Overlap, ids: &BTreeSet<u32>) -> Result<()> {
    if let Some(bad) = ids.iter().find(|id| !ov.gt_area.contains_key(id)) {
        return Err(Error::InvalidArgument(format!("overlapped id {bad} is not a ground-truth instance")));
    }
    Ok(())
}

fn ajio_sums(ov: &Overlap, ids: &BTreeSet<u32>) -> AjiSums {
    let mut s = AjiSums::default();
    for &g in ids {
        match ov.best_match(g) {
            Some((_, inter, union)) => {
                s.intersection += inter;
                s.union += union;
            }
            None => s.union += ov.gt_area[&g],
        }
    }
    s
}

fn acco_count(ov: &Overlap, ids: &BTreeSet<u32>, tau: f64) -> usize {
    ids.iter()
        .filter(|&&g| {
            ov.intersections.get(&g).is_some_and(|v| v.iter().any(|&(p, inter)| ov.jaccard(g, p, inter).value() > tau))
        })
        .count()
}

/// AJI restricted to the overlapped ground-truth nuclei, without the
/// unmatched-prediction penalty; a prediction may serve several nuclei.
/// `None` when there are no overlapped nuclei.
pub fn ajio(gt: &LabelMap, pred: &LabelMap, overlapped: &BTreeSet<u32>) -> Result<Option<f64>> {
    let ov = Overlap::new(gt, pred)?;
    check_overlapped(&ov, overlapped)?;
    if overlapped.is_empty() {
        return Ok(None);
    }
    let s = ajio_sums(&ov, overlapped);
    Ok(Some(s.intersection as f64 / s.union as f64))
}

/// Fraction of overlapped nuclei recovered by some prediction with Jaccard
/// index strictly above `tau`. `None` when there are no overlapped nuclei.
pub fn acco(gt: &LabelMap, pred: &LabelMap, overlapped: &BTreeSet<u32>, tau: f64) -> Result<Option<f64>> {
    let ov = Overlap::new(gt, pred)?;
    check_overlapped(&ov, overlapped)?;
    if overlapped.is_empty() {
        return Ok(None);
    }
    Ok(Some(acco_count(&ov, overlapped, tau) as f64 / overlapped.len() as f64))
}

/// All metrics of one image plus the raw counts needed for pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub aji: f64,
    pub dice: f64,
    pub rq: f64,
    pub sq: f64,
    pub pq: f64,
    pub ajio: Option<f64>,
    pub acco: Option<f64>,
    pub tau: f64,
    /// Ground-truth instances (N).
    pub n_gt: usize,
    /// Predicted instances (M).
    pub n_pred: usize,
    /// Overlapped ground-truth nuclei (O).
    pub n_overlapped: usize,
    /// Overlapped nuclei recovered above `tau`.
    pub matched_overlapped: usize,
    pub matching: MatchResult,
    pub aji_sums: AjiSums,
    pub ajio_sums: AjiSums,
    pub dice_intersection: u64,
    pub dice_total: u64,
    pub iou_sum: f64,
}

impl MetricsReport {
    /// `(key, value)` pairs sorted by key; absent metrics print as `NA`.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        vec![
            ("acco", opt(self.acco)),
            ("aji", format!("{:.6}", self.aji)),
            ("ajio", opt(self.ajio)),
            ("dice", format!("{:.6}", self.dice)),
            ("fn", self.matching.fn_.to_string()),
            ("fp", self.matching.fp.to_string()),
            ("matched_overlapped", self.matched_overlapped.to_string()),
            ("n_gt", self.n_gt.to_string()),
            ("n_overlapped", self.n_overlapped.to_string()),
            ("n_pred", self.n_pred.to_string()),
            ("pq", format!("{:.6}", self.pq)),
            ("rq", format!("{:.6}", self.rq)),
            ("sq", format!("{:.6}", self.sq)),
            ("tau", format!("{}", self.tau)),
            ("tp", self.matching.tp.to_string()),
        ]
    }
}

/// Evaluates the full battery. Overlapped nuclei default to the
/// ground-truth ids that touch another nucleus.
pub fn evaluate(gt: &LabelMap, pred: &LabelMap, overlapped: Option<&BTreeSet<u32>>, tau: f64) -> Result<MetricsReport> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must be in [0, 1), got {tau}")));
    }
    let ov = Overlap::new(gt, pred)?;
    let default_ids;
    let ids = match overlapped {
        Some(ids) => ids,
        None => {
            default_ids = identify_overlapped(gt);
            &default_ids
        }
    };
    check_overlapped(&ov, ids)?;

    let aji_sums = aji_sums(&ov);
    let dice_total = ov.gt_area.values().sum::<u64>() + ov.pred_area.values().sum::<u64>();
    let dice_intersection = 2 * ov.foreground_intersection;
    let matching = unique_matching(&ov);
    let iou_sum: f64 = matching.pairs.iter().map(|p| p.2).sum();
    let q = panoptic_from(matching.tp, matching.fp, matching.fn_, iou_sum);
    let ajio_sums = ajio_sums(&ov, ids);
    let matched_overlapped = acco_count(&ov, ids, tau);
    let present = !ids.is_empty();
    Ok(MetricsReport {
        aji: ratio_or_one(aji_sums.intersection, aji_sums.union),
        dice: ratio_or_one(dice_intersection, dice_total),
        rq: q.rq,
        sq: q.sq,
        pq: q.pq,
        ajio: present.then(|| ajio_sums.intersection as f64 / ajio_sums.union as f64),
        acco: present.then(|| matched_overlapped as f64 / ids.len() as f64),
        tau,
        n_gt: ov.gt_area.len(),
        n_pred: ov.pred_area.len(),
        n_overlapped: ids.len(),
        matched_overlapped,
        matching,
        aji_sums,
        ajio_sums,
        dice_intersection,
        dice_total,
        iou_sum,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    /// Unweighted mean of per-image values.
    PerImage,
    /// Metrics recomputed from counts summed over all images.
    Pooled,
}

/// Dataset-level summary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub images: usize,
    pub aji: f64,
    pub dice: f64,
    pub rq: f64,
    pub sq: f64,
    pub pq: f64,
    pub ajio: Option<f64>,
    pub acco: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Reduces per-image reports in the given order. ajio/acco of images
/// without overlapped nuclei are left out.
pub fn summarize(reports: &[MetricsReport], mode: Aggregation) -> Summary {
    let images = reports.len();
    match mode {
        Aggregation::PerImage => Summary {
            images,
            aji: mean(reports.iter().map(|r| r.aji)).unwrap_or(1.0),
            dice: mean(reports.iter().map(|r| r.dice)).unwrap_or(1.0),
            rq: mean(reports.iter().map(|r| r.rq)).unwrap_or(1.0),
            sq: mean(reports.iter().map(|r| r.sq)).unwrap_or(1.0),
            pq: mean(reports.iter().map(|r| r.pq)).unwrap_or(1.0),
            ajio: mean(reports.iter().filter_map(|r| r.ajio)),
            acco: mean(reports.iter().filter_map(|r| r.acco)),
        },
        Aggregation::Pooled => {
            let sum_u = |f: &dyn Fn(&MetricsReport) -> u64| reports.iter().map(f).sum::<u64>();
            let aji = ratio_or_one(sum_u(&|r| r.aji_sums.intersection), sum_u(&|r| r.aji_sums.union));
            let dice = ratio_or_one(sum_u(&|r| r.dice_intersection), sum_u(&|r| r.dice_total));
            let tp = reports.iter().map(|r| r.matching.tp).sum();
            let fp = reports.iter().map(|r| r.matching.fp).sum();
            let fn_ = reports.iter().map(|r| r.matching.fn_).sum();
            let q = panoptic_from(tp, fp, fn_, reports.iter().map(|r| r.iou_sum).sum());
            let o: usize = reports.iter().map(|r| r.n_overlapped).sum();
            let (ai, au) = (sum_u(&|r| r.ajio_sums.intersection), sum_u(&|r| r.ajio_sums.union));
            let matched: usize = reports.iter().map(|r| r.matched_overlapped).sum();
            Summary {
                images,
                aji,
                dice,
                rq: q.rq,
                sq: q.sq,
                pq: q.pq,
                ajio: (o > 0).then(|| ai as f64 / au as f64),
                acco: (o > 0).then(|| matched as f64 / o as f64),
            }
        }
    }
}
