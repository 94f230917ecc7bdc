use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use serde::Serialize;
use vesseltk::growth::{
    grow_iterative_observed, hysteresis_proposer, oracle_proposer, BranchProposer,
};
use vesseltk::labeling::label_case;
use vesseltk::metrics::{CaseMetrics, MetricsReport};
use vesseltk::phantom::{canonical_suite, generate_phantom, PhantomSpec};
use vesseltk::volume::{load_volume, save_volume_with, SaveOptions};
use vesseltk::{AnyVolume, IntensityVolume};

use crate::config::{
    distinct_paths, labeling_config, parse_connectivity, parse_defects, parse_kind, pick, require,
    FileConfig, LabelingOverrides, ProposerChoice, DEFAULT_PROPOSER,
};
use crate::{EvaluateArgs, Failure, LabelArgs, PhantomArgs, RefineArgs};

fn load(path: &Path, what: &str) -> Result<AnyVolume, Failure> {
    load_volume(path)
        .map_err(|e| Failure::domain("load", format!("{what} {}: {e}", path.display())))
}

fn save(volume: AnyVolume, path: &Path, options: SaveOptions) -> Result<(), Failure> {
    save_volume_with(&volume, path, options)
        .map_err(|e| Failure::domain("write", format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::domain("write", format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::domain("write", e))?;
    write_text(path, &(text + "\n"))
}

/// `dir/stem.suffix` for an output path `dir/stem.ext`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn as_image(volume: AnyVolume, path: &Path) -> Result<IntensityVolume, Failure> {
    match volume {
        AnyVolume::Intensity(v) => Ok(v),
        AnyVolume::Binary(v) => Ok(v.map(|&b| f32::from(u8::from(b)))),
        AnyVolume::Labels(_) => Err(Failure::domain(
            "load",
            format!(
                "image {}: expected intensities, found branch labels",
                path.display()
            ),
        )),
    }
}

pub fn refine(a: RefineArgs, file: &FileConfig) -> Result<(), Failure> {
    let mask_path = require(pick(a.mask, file.mask.clone()), "mask")?;
    let image_path = require(pick(a.image, file.image.clone()), "image")?;
    let out = require(pick(a.out, file.out.clone()), "out")?;
    let trace_path =
        pick(a.trace, file.trace.clone()).unwrap_or_else(|| sibling(&out, "trace.json"));
    let iters = pick(a.iters, file.iters).unwrap_or(2);
    let connectivity = parse_connectivity(pick(a.connectivity, file.connectivity))?;
    let spec =
        pick(a.proposer, file.proposer.clone()).unwrap_or_else(|| DEFAULT_PROPOSER.to_string());
    let choice: ProposerChoice = spec.parse().map_err(|e| Failure::usage("config", e))?;
    let mut paths = vec![
        ("mask", mask_path.as_path()),
        ("image", image_path.as_path()),
        ("out", out.as_path()),
        ("trace", trace_path.as_path()),
    ];
    if let ProposerChoice::Oracle(gt) = &choice {
        paths.push(("proposer", gt.as_path()));
    }
    distinct_paths(&paths)?;

    let mask = load(&mask_path, "mask")?.to_mask();
    let image = as_image(load(&image_path, "image")?, &image_path)?;
    let proposer: Box<dyn BranchProposer> = match choice {
        ProposerChoice::Hysteresis { low, high, band } => {
            Box::new(hysteresis_proposer(low, high, band).map_err(|e| Failure::usage("config", e))?)
        }
        ProposerChoice::Oracle(gt) => {
            Box::new(oracle_proposer(load(&gt, "oracle ground truth")?.to_mask()))
        }
    };
    let (refined, trace) = grow_iterative_observed(
        &mask,
        &image,
        proposer.as_ref(),
        iters,
        connectivity,
        |_, _| {},
    )
    .map_err(|e| Failure::domain("refine", e))?;
    save(refined.into(), &out, SaveOptions::default())?;
    write_json(&trace_path, &trace)
}

pub fn label(a: LabelArgs, file: &FileConfig) -> Result<(), Failure> {
    let mask_path = require(pick(a.mask, file.mask.clone()), "mask")?;
    let out = require(pick(a.out, file.out.clone()), "out")?;
    let landmarks = pick(a.landmarks, file.landmarks.clone())
        .unwrap_or_else(|| sibling(&out, "landmarks.json"));
    let pseudo = a.pseudo || file.pseudo.unwrap_or(false);
    let overrides = LabelingOverrides {
        iliac_ratio: a.iliac_ratio,
        end_fraction: a.end_fraction,
        foot_fraction: a.foot_fraction,
        kmeans_max_iterations: a.kmeans_max_iterations,
        postprocess: a.postprocess,
        no_postprocess: a.no_postprocess,
    };
    let cfg = labeling_config(overrides, file)?;
    distinct_paths(&[
        ("mask", &mask_path),
        ("out", &out),
        ("landmarks", &landmarks),
    ])?;

    let mask = load(&mask_path, "mask")?.to_mask();
    let result =
        label_case(&mask, &cfg).map_err(|e| Failure::domain(&e.stage.to_string(), e.source))?;
    save(
        result.labels.into(),
        &out,
        SaveOptions {
            pseudo_label: pseudo,
            ..SaveOptions::default()
        },
    )?;
    write_json(&landmarks, &result.report)
}

/// `.nrrd` files, and `.json` files with a `.raw` payload beside them.
fn is_volume_file(path: &Path) -> bool {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    path.is_file() && (ext == "nrrd" || (ext == "json" && path.with_extension("raw").is_file()))
}

/// `(case name, prediction, ground truth)` in name order.
fn collect_cases(pred: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, Failure> {
    let name = |p: &Path| {
        p.file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string()
    };
    if !pred.is_dir() {
        if gt.is_dir() {
            return Err(Failure::usage(
                "config",
                "--pred is a file but --gt is a directory",
            ));
        }
        return Ok(vec![(name(pred), pred.to_path_buf(), gt.to_path_buf())]);
    }
    if !gt.is_dir() {
        return Err(Failure::usage(
            "config",
            "--pred is a directory but --gt is not",
        ));
    }
    let entries = fs::read_dir(pred)
        .map_err(|e| Failure::domain("load", format!("{}: {e}", pred.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_volume_file(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::domain(
            "load",
            format!("{}: no .nrrd or .json volumes", pred.display()),
        ));
    }
    files
        .into_iter()
        .map(|p| {
            let g = gt.join(p.file_name().unwrap_or_default());
            if !g.is_file() {
                return Err(Failure::domain(
                    "load",
                    format!("case {}: missing ground truth {}", name(&p), g.display()),
                ));
            }
            Ok((name(&p), p, g))
        })
        .collect()
}

fn score_case(case: &str, pred: &Path, gt: &Path) -> Result<CaseMetrics, Failure> {
    let p = load(pred, &format!("case {case} prediction"))?;
    let g = load(gt, &format!("case {case} ground truth"))?;
    let scored = match (&p, &g) {
        (AnyVolume::Labels(p), AnyVolume::Labels(g)) => CaseMetrics::from_labels(case, p, g),
        _ => CaseMetrics::from_masks(case, &p.to_mask(), &g.to_mask()),
    };
    scored.map_err(|e| Failure::domain("evaluate", format!("case {case}: {e}")))
}

pub fn evaluate(a: EvaluateArgs, file: &FileConfig) -> Result<(), Failure> {
    let pred = require(pick(a.pred, file.pred.clone()), "pred")?;
    let gt = require(pick(a.gt, file.gt.clone()), "gt")?;
    let json = pick(a.json, file.json.clone());
    let table_path = pick(a.table, file.table.clone());
    let mut paths = vec![("pred", pred.as_path()), ("gt", gt.as_path())];
    paths.extend(json.as_deref().map(|p| ("json", p)));
    paths.extend(table_path.as_deref().map(|p| ("table", p)));
    distinct_paths(&paths)?;

    let cases = collect_cases(&pred, &gt)?;
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(cases.len());
    let chunk = cases.len().div_ceil(workers);
    let results: Vec<Result<CaseMetrics, Failure>> = thread::scope(|s| {
        let handles: Vec<_> = cases
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|(n, p, g)| score_case(n, p, g))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let metrics = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let report = MetricsReport::from_cases(metrics);
    let table = report.to_table();
    print!("{table}");
    if let Some(p) = &json {
        write_json(p, &report)?;
    }
    if let Some(p) = &table_path {
        write_text(p, &table)?;
    }
    Ok(())
}

fn write_phantom(dir: &Path, spec: &PhantomSpec, ext: &str) -> Result<(), Failure> {
    let p = generate_phantom(spec).map_err(|e| Failure::domain("phantom", e))?;
    fs::create_dir_all(dir)
        .map_err(|e| Failure::domain("write", format!("{}: {e}", dir.display())))?;
    let file = |name: &str| dir.join(format!("{name}.{ext}"));
    save(p.intensity.into(), &file("image"), SaveOptions::default())?;
    save(p.mask.into(), &file("mask"), SaveOptions::default())?;
    save(p.gt.into(), &file("gt"), SaveOptions::default())?;
    save(p.gt_labels.into(), &file("labels"), SaveOptions::default())?;
    write_json(&dir.join("landmarks.json"), &p.landmarks)?;
    write_json(&dir.join("spec.json"), spec)
}

pub fn phantom(a: PhantomArgs, file: &FileConfig) -> Result<(), Failure> {
    let out = require(pick(a.out, file.out.clone()), "out")?;
    let ext = pick(a.format, file.format.clone()).unwrap_or_else(|| "nrrd".into());
    if ext != "nrrd" && ext != "json" {
        return Err(Failure::usage(
            "config",
            format!("format must be nrrd or json, got {ext:?}"),
        ));
    }
    let suite = a.suite || file.suite.unwrap_or(false);
    let defects = if a.defects.is_empty() {
        file.defects.clone().unwrap_or_default()
    } else {
        a.defects
    };
    let kind = pick(a.kind, file.kind.clone());
    let seed = pick(a.seed, file.seed);
    let noise = pick(a.noise, file.noise);
    let jitter = pick(a.jitter, file.jitter);
    let cases = if suite {
        if kind.is_some()
            || seed.is_some()
            || noise.is_some()
            || jitter.is_some()
            || !defects.is_empty()
        {
            return Err(Failure::usage(
                "config",
                "--suite cannot be combined with per-case settings",
            ));
        }
        canonical_suite()
    } else {
        let kind = parse_kind(kind.as_deref().unwrap_or("whole"))?;
        let seed = seed.unwrap_or(0);
        for (name, v) in [("noise", noise), ("jitter", jitter)] {
            if v.is_some_and(|v| !(v.is_finite() && v >= 0.0)) {
                return Err(Failure::usage(
                    "config",
                    format!("{name} must be a non-negative number"),
                ));
            }
        }
        let spec = PhantomSpec::new(kind, seed)
            .with_noise(noise.unwrap_or(0.0))
            .with_jitter(jitter.unwrap_or(0.0))
            .with_defects(parse_defects(&defects)?);
        let prefix = if spec.kind == vesseltk::labeling::CaseKind::WholeAbdomen {
            "whole"
        } else {
            "upper"
        };
        vec![(format!("{prefix}_seed{seed}"), spec)]
    };
    for (name, spec) in &cases {
        write_phantom(&out.join(name), spec, &ext)?;
        println!("{name}");
    }
    Ok(())
}
