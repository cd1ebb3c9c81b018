//! Acceptance suite: one PASS/FAIL line per criterion, with timings.
//! Runs as a plain binary so the report is printed on every run.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bendseg::bending::{bending_loss, pattern_table, polygon_bending_gradient, polygon_bending_loss};
use bendseg::imgcore::{
    instances_of, read_float_maps, read_label_map, write_float_map, write_float_map_pair, write_float_maps,
    write_label_map,
};
use bendseg::losses::{cross_entropy, dice_loss, dist_loss, mse, msge, total_loss};
use bendseg::metrics::{evaluate, DEFAULT_TAU};
use bendseg::pipeline::{
    extract_patches, hv_ground_truth, identify_overlapped, merge_patches, watershed_postprocess, PatchLayout,
};
use bendseg::synth::{disc, random_blobs, DiscPair};
use bendseg::{BendingParams, FloatMap, Grid, LabelFormat, LabelMap, PostprocessParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bendseg(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bendseg")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("bendseg {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn pattern_constants() -> Outcome {
    let out = bendseg(&["pattern-table", "--mu", "20"])?;
    let rows: Vec<Vec<String>> = out.lines().skip(1).map(|l| l.split('\t').map(str::to_string).collect()).collect();
    check(rows.len() == 28, || format!("{} rows", rows.len()))?;
    let groups: BTreeSet<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    check(groups.len() == 5, || format!("{} groups", groups.len()))?;
    let convex = [0.0, 0.28, 1.41, 2.00, 9.66];
    let concave = [0.0, 5.69, 28.28, 40.00, 193.14];
    // printed table and full-precision library values
    let lib = pattern_table(&BendingParams::with_mu(20.0));
    for (g, (&cx, &cc)) in convex.iter().zip(&concave).enumerate() {
        let group = (g + 1).to_string();
        for r in rows.iter().filter(|r| r[0] == group) {
            let (x, c): (f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap());
            check((x - cx).abs() <= 0.005 && (c - cc).abs() <= 0.005, || format!("group {group}: {x}/{c}"))?;
        }
        for r in lib.iter().filter(|r| r.group == g + 1) {
            check((r.convex - cx).abs() <= 0.005 && (r.concave - cc).abs() <= 0.005, || {
                format!("group {}: {}/{}", r.group, r.convex, r.concave)
            })?;
        }
    }
    Ok("28 patterns in 5 groups".into())
}

fn dihedral_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let params = BendingParams::default();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let (h, w) = (rng.gen_range(8..=64), rng.gen_range(8..=64));
        let map = random_blobs(h, w, rng.gen_range(1..8), i);
        let base = bending_loss(&map, &params).loss;
        for t in 1..8 {
            worst = worst.max((bending_loss(&map.dihedral(t), &params).loss - base).abs());
        }
    }
    check(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:e}"))
}

fn merged_vs_separated() -> Outcome {
    let params = BendingParams::default();
    let pair = DiscPair::default();
    let merged = bending_loss(&pair.merged(), &params);
    let separated = bending_loss(&pair.separated(), &params);
    let sharp = merged.per_point.iter().filter(|p| p.energy >= 28.0).count();
    check(sharp >= 2, || format!("{sharp} points with BE >= 28"))?;
    check(merged.loss > separated.loss, || format!("{} <= {}", merged.loss, separated.loss))?;
    check(separated.max_energy() <= 9.66, || format!("separated max BE {}", separated.max_energy()))?;
    Ok(format!(
        "merged L_be {:.3} ({sharp} points >= 28), separated L_be {:.3} (max BE {:.3})",
        merged.loss,
        separated.loss,
        separated.max_energy()
    ))
}

fn metrics_oracle() -> Outcome {
    let tiny = oracle::exhaustive_pairs();
    check(tiny.len() >= 10_000, || format!("only {} tiny pairs", tiny.len()))?;
    for (gt, pred) in &tiny {
        let r = evaluate(gt, pred, None, DEFAULT_TAU).map_err(|e| e.to_string())?;
        oracle::compare(&r, gt, pred)?;
    }
    let random = oracle::random_pairs(1000, 7);
    for (gt, pred) in &random {
        let r = evaluate(gt, pred, None, DEFAULT_TAU).map_err(|e| e.to_string())?;
        oracle::compare(&r, gt, pred)?;
    }
    Ok(format!("{} exhaustive + {} random pairs identical", tiny.len(), random.len()))
}

fn unique_matching() -> Outcome {
    let violations: usize = oracle::random_pairs(1000, 7).iter().map(|(g, p)| oracle::matching_violations(g, p)).sum();
    check(violations == 0, || format!("{violations} violations"))?;
    Ok("0 violations on 1000 pairs".into())
}

fn random_polygon(rng: &mut ChaCha8Rng) -> (Vec<[f64; 2]>, Vec<bool>) {
    let n = rng.gen_range(6..=40);
    let step = std::f64::consts::TAU / n as f64;
    let verts = (0..n)
        .map(|i| {
            let t = (i as f64 + rng.gen_range(-0.3..0.3)) * step;
            let r = rng.gen_range(5.0..15.0);
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    (verts, (0..n).map(|_| rng.gen_bool(0.3)).collect())
}

fn gradient_check() -> Outcome {
    let params = BendingParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (verts, flags) = random_polygon(&mut rng);
        let (_, grad) = polygon_bending_gradient(&verts, &flags, &params).map_err(|e| e.to_string())?;
        let (mut diff, mut norm) = (0.0, 0.0);
        for i in 0..verts.len() {
            for c in 0..2 {
                let mut plus = verts.clone();
                let mut minus = verts.clone();
                plus[i][c] += h;
                minus[i][c] -= h;
                let fd = (polygon_bending_loss(&plus, &flags, &params).unwrap()
                    - polygon_bending_loss(&minus, &flags, &params).unwrap())
                    / (2.0 * h);
                diff += (grad[i][c] - fd).powi(2);
                norm += fd * fd;
            }
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-300));
    }
    check(worst < 1e-4, || format!("worst relative error {worst:e}"))?;
    Ok(format!("worst relative error {worst:.2e}"))
}

fn ideal(gt: &LabelMap) -> (FloatMap, bendseg::FloatMapPair) {
    let prob = FloatMap::from_grid(gt.map(|v| (v != 0) as u8 as f32)).unwrap();
    (prob, hv_ground_truth(gt, &BTreeSet::new()).all_nuclei)
}

fn watershed_separation() -> Outcome {
    let params = PostprocessParams::default();
    let gt = DiscPair::default().separated();
    let (prob, hv) = ideal(&gt);
    let out = watershed_postprocess(&prob, &hv, &params).map_err(|e| e.to_string())?;
    let n = instances_of(&out).len();
    let r = evaluate(&gt, &out, None, DEFAULT_TAU).map_err(|e| e.to_string())?;
    check(n == 2 && r.aji >= 0.95 && r.acco == Some(1.0), || {
        format!("{n} instances, aji {}, acco {:?}", r.aji, r.acco)
    })?;
    let single = disc(41, 41, 20.0, 20.0, 12.0, 1);
    let (prob, hv) = ideal(&single);
    let one = instances_of(&watershed_postprocess(&prob, &hv, &params).map_err(|e| e.to_string())?).len();
    check(one == 1, || format!("isolated disc gave {one} instances"))?;
    Ok(format!("touching: 2 instances, aji {:.4}, acco 1.0; isolated: 1 instance", r.aji))
}

fn loss_kernels() -> Outcome {
    let truth = Grid::filled(16, 16, true);
    let half = FloatMap::from_fn(16, 16, |_, _| 0.5).unwrap();
    let ce = cross_entropy(&half, &truth).map_err(|e| e.to_string())?;
    check((ce - std::f64::consts::LN_2).abs() <= 1e-9, || format!("ce {ce}"))?;
    let gt = DiscPair::default().separated();
    let fg = gt.foreground();
    let prob = FloatMap::from_grid(fg.map(|v| v as u8 as f32)).unwrap();
    let dice = dice_loss(&prob, &fg).map_err(|e| e.to_string())?;
    check(dice == 0.0, || format!("dice {dice}"))?;
    let d = hv_ground_truth(&gt, &identify_overlapped(&gt)).all_nuclei;
    let zeros = [mse(&d, &d), msge(&d, &d, &fg), dist_loss(&d, &d, &fg)];
    for z in zeros {
        let z = z.map_err(|e| e.to_string())?;
        check(z == 0.0, || format!("distance term {z} at D = D*"))?;
    }
    let (a, b, c, be) = (0.731, 0.125, 0.0625, 2.367);
    let base = total_loss(a, b, c, be, 0.0).map_err(|e| e.to_string())?.total;
    for alpha in [0.5, 1.0, 2.0] {
        let t = total_loss(a, b, c, be, alpha).map_err(|e| e.to_string())?.total;
        check(t == base + alpha * be, || format!("alpha {alpha}: {t}"))?;
    }
    Ok(format!("ce {ce:.12}, dice 0, distance terms 0, affine in alpha"))
}

fn round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..100 {
        let (h, w) = (rng.gen_range(1..48), rng.gen_range(1..48));
        let labels = Grid::from_fn(h, w, |_, _| if rng.gen_bool(0.3) { 0 } else { rng.gen_range(1..=65535u32) });
        for format in [LabelFormat::Png16, LabelFormat::Lmap] {
            let path = dir.path().join(format!("{i}.{}", format.extension()));
            write_label_map(&labels, &path, format).map_err(|e| e.to_string())?;
            check(read_label_map(&path, format).map_err(|e| e.to_string())? == labels, || {
                format!("{format:?} map {i}")
            })?;
        }
        let f = FloatMap::from_fn(h, w, |_, _| rng.gen_range(-100.0f32..100.0)).unwrap();
        let path = dir.path().join(format!("{i}.fmap"));
        write_float_maps(&[&f, &f], &path).map_err(|e| e.to_string())?;
        let back = read_float_maps(&path).map_err(|e| e.to_string())?;
        check(back.len() == 2 && back[0] == f && back[1] == f, || format!("fmap {i}"))?;
    }
    let grid = Grid::from_fn(1000, 1000, |x, y| (x as u32) << 10 | y as u32);
    let (patches, layout) =
        extract_patches(&grid, PatchLayout::DEFAULT_PATCH, PatchLayout::DEFAULT_WINDOW).map_err(|e| e.to_string())?;
    check(patches.len() == 169, || format!("{} patches", patches.len()))?;
    check(merge_patches(&patches, &layout).map_err(|e| e.to_string())? == grid, || "patch merge differs".into())?;
    Ok("100 maps x 3 formats, 169-patch 1000x1000 round trip".into())
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let (gt_dir, pred_dir, maps_dir) = (d.join("gt"), d.join("pred"), d.join("maps"));
    for dir in [&gt_dir, &pred_dir, &maps_dir] {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    }
    for (i, (gt, pred)) in oracle::random_pairs(24, 77).into_iter().enumerate() {
        write_label_map(&gt, gt_dir.join(format!("img{i:02}.png")), LabelFormat::Png16).map_err(|e| e.to_string())?;
        write_label_map(&pred, pred_dir.join(format!("img{i:02}.png")), LabelFormat::Png16)
            .map_err(|e| e.to_string())?;
        let blobs = random_blobs(64, 64, 6, i as u64);
        let (prob, hv) = ideal(&blobs);
        write_float_map(&prob, maps_dir.join(format!("img{i:02}_prob.fmap"))).map_err(|e| e.to_string())?;
        write_float_map_pair(&hv, maps_dir.join(format!("img{i:02}_hv.fmap"))).map_err(|e| e.to_string())?;
    }
    let mut outputs = Vec::new();
    for (run, jobs) in [(0, "1"), (1, "1"), (2, "8")] {
        let eval_out = d.join(format!("eval{run}"));
        let post_out = d.join(format!("post{run}"));
        let table = bendseg(&["--jobs", jobs, "evaluate", p(&gt_dir), p(&pred_dir), "--out", p(&eval_out)])?;
        let post = bendseg(&["--jobs", jobs, "postprocess", p(&maps_dir), "--out", p(&post_out)])?;
        outputs.push((table, post, tree_bytes(&eval_out), tree_bytes(&post_out)));
    }
    check(outputs[0] == outputs[1], || "two runs with --jobs 1 differ".into())?;
    check(outputs[0] == outputs[2], || "--jobs 1 and --jobs 8 differ".into())?;
    Ok(format!("{} evaluate reports and {} label maps identical across runs", outputs[0].2.len(), outputs[0].3.len()))
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "pattern-table constants", limit: Some(Duration::from_secs(1)), run: pattern_constants },
        Criterion { name: "dihedral invariance", limit: Some(Duration::from_secs(10)), run: dihedral_invariance },
        Criterion { name: "merged vs separated", limit: Some(Duration::from_secs(1)), run: merged_vs_separated },
        Criterion { name: "metrics oracle", limit: Some(Duration::from_secs(60)), run: metrics_oracle },
        Criterion { name: "unique matching", limit: None, run: unique_matching },
        Criterion { name: "gradient check", limit: Some(Duration::from_secs(5)), run: gradient_check },
        Criterion { name: "watershed separation", limit: Some(Duration::from_secs(5)), run: watershed_separation },
        Criterion { name: "loss kernels", limit: None, run: loss_kernels },
        Criterion { name: "round trips", limit: None, run: round_trips },
        Criterion { name: "end-to-end determinism", limit: None, run: determinism },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(msg), Some(limit)) if elapsed > limit => Err(format!("{msg}; over the {limit:?} limit")),
            (o, _) => o,
        };
        let (status, detail) = match &outcome {
            Ok(msg) => ("PASS", msg),
            Err(msg) => ("FAIL", msg),
        };
        failed += outcome.is_err() as usize;
        println!("criterion {:>2} {status} [{:>8.3}s] {}: {detail}", i + 1, elapsed.as_secs_f64(), c.name);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
