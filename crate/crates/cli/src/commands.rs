use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{bail, ensure, Context, Result};
use difs::formats::{
    load_dump, load_signatures, read_annotations, save_dump, save_report, save_signatures, save_simple_csv,
    ActivationDump, AnnotationRecord, DumpFrame,
};
use difs::net::reference::reference_network;
use difs::net::{load_network, save_network, MicroFcn};
use difs::pipeline::{annotation_signatures, detect, detection_signatures, run_frame};
use difs::synth::{render_scene, SceneConfig};
use difs::{
    balance_dataset, evaluate, kfold, FoldStrategy, Gallery, GalleryEntry, LabeledSample, LayerId, SignatureExtractor,
    SignatureLayerConfig,
};

use crate::images::{frame_path, list_frames, load_rgb, save_png};
use crate::{DumpArgs, EvaluateArgs, ExtractArgs, GenWeightsArgs, MatchArgs, RenderArgs};

fn layer_config(a: &ExtractArgs) -> SignatureLayerConfig {
    let cfg = match a.layer {
        Some(l) => SignatureLayerConfig::uniform(l),
        None => SignatureLayerConfig::new(a.scale_layer.iter().copied()),
    };
    cfg.with_area_normalize(a.area_normalize)
}

/// Annotations grouped by frame, file order kept within a frame.
fn by_frame(records: &[AnnotationRecord]) -> BTreeMap<u32, Vec<&AnnotationRecord>> {
    let mut map: BTreeMap<u32, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.frame).or_default().push(r);
    }
    map
}

fn join_ids(ids: &[LayerId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn run_extract(a: &ExtractArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = layer_config(a);
    let records = read_annotations(&a.annotations)?;
    let frames = by_frame(&records);
    let mut signatures: Vec<LabeledSample> = Vec::new();

    if let Some(dump_path) = &a.dump {
        let dump = load_dump(dump_path)?;
        let present = dump.layer_ids();
        for id in cfg.layer_ids() {
            if !dump.frames.is_empty() && !present.contains(&id) {
                bail!(
                    "signature layer {id} is not in activation dump {} (layers present: {})",
                    dump_path.display(),
                    join_ids(&present)
                );
            }
        }
        let dims = (dump.image_width as usize, dump.image_height as usize);
        for (&frame, recs) in &frames {
            let f = dump
                .frame(frame)
                .with_context(|| format!("frame {frame} is annotated but missing from {}", dump_path.display()))?;
            let ex = SignatureExtractor::new(&f.layers, &cfg, dump.transform, dump.side as usize)
                .with_context(|| format!("frame {frame}"))?;
            signatures.extend(
                annotation_signatures(&ex, &dump.transform, dump.side as usize, dims, recs.iter().copied())
                    .with_context(|| format!("frame {frame}"))?,
            );
        }
    } else {
        let (weights, images) = (a.weights.as_ref().expect("clap group"), a.images.as_ref().expect("clap requires"));
        let net = load_network(weights).with_context(|| format!("loading {}", weights.display()))?;
        check_layers(&net, &cfg.layer_ids())?;
        for (&frame, recs) in &frames {
            let image = load_rgb(&frame_path(images, frame)?)?;
            let features = run_frame(&net, &image, frame, &cfg.layer_ids())?;
            let side = net.input_side();
            let ex = SignatureExtractor::new(&features.output.cache, &cfg, features.transform, side)?;
            let sigs = if a.detector {
                let dets = detect(&net, &features, a.conf_threshold, a.nms_iou)?;
                detection_signatures(&ex, recs, &dets, a.match_iou)?
            } else {
                let dims = (features.image_width, features.image_height);
                annotation_signatures(&ex, &features.transform, side, dims, recs.iter().copied())?
            };
            signatures.extend(sigs);
        }
    }

    save_signatures(&a.output, &signatures)?;
    let skipped = records.len() - signatures.len();
    writeln!(
        out,
        "extracted {} signatures from {} frames ({} annotations, {} without a matching detection) -> {}",
        signatures.len(),
        frames.len(),
        records.len(),
        skipped,
        a.output.display()
    )?;
    Ok(())
}

fn check_layers(net: &MicroFcn, ids: &[LayerId]) -> Result<()> {
    let n = net.def().layer_count();
    if let Some(bad) = ids.iter().find(|&&id| id >= n) {
        bail!("signature layer {bad} does not exist; the network has layers 0..{}", n - 1);
    }
    Ok(())
}

pub fn run_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let samples = load_signatures(&a.signatures)?;
    let balanced = balance_dataset(&samples, a.samples_per_instance, a.min_occurrences, a.seed)?;
    let strategy = if a.holdout_frames {
        FoldStrategy::TemporalBlocks
    } else {
        FoldStrategy::Shuffled
    };
    let folds = kfold(&balanced, a.folds, a.seed, strategy)?;
    let mut report = evaluate(&balanced, &folds, a.k, a.metric)?;
    report.samples_per_instance = Some(a.samples_per_instance);
    report.min_occurrences = Some(a.min_occurrences);
    save_report(&a.output, &report)?;
    writeln!(
        out,
        "{} instances, {} samples, k={} {}: mean accuracy {:.4}, std {:.4} -> {}",
        report.instances,
        report.samples,
        a.k.get(),
        a.metric,
        report.mean_accuracy,
        report.std_accuracy,
        a.output.display()
    )?;
    Ok(())
}

pub fn run_match(a: &MatchArgs, out: &mut dyn Write) -> Result<()> {
    let gallery_samples = load_signatures(&a.gallery)?;
    ensure!(!gallery_samples.is_empty(), "gallery {} holds no signatures", a.gallery.display());
    ensure!(
        a.k <= gallery_samples.len(),
        "k = {} exceeds the gallery size {}",
        a.k,
        gallery_samples.len()
    );
    let gallery = Gallery::build(gallery_samples.iter().map(|s| GalleryEntry {
        label: s.label.clone(),
        values: s.values.clone(),
    }))?;
    let queries = load_signatures(&a.queries)?;
    for (qi, q) in queries.iter().enumerate() {
        let ranked = gallery
            .nearest(&q.values, a.k, a.metric)
            .with_context(|| format!("query {qi}"))?;
        for (rank, n) in ranked.iter().enumerate() {
            let g = &gallery_samples[n.index];
            writeln!(
                out,
                "query={qi} query_label={} rank={} label={} distance={} gallery_index={} gallery_frame={}",
                q.label,
                rank + 1,
                g.label,
                n.distance,
                n.index,
                g.frame
            )?;
        }
    }
    Ok(())
}

pub fn run_dump(a: &DumpArgs, out: &mut dyn Write) -> Result<()> {
    let net = load_network(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    check_layers(&net, &a.layers)?;
    let frames = list_frames(&a.images)?;
    ensure!(!frames.is_empty(), "no <frame>.png or .jpg images in {}", a.images.display());
    let mut dump: Option<ActivationDump> = None;
    for frame in frames {
        let path = frame_path(&a.images, frame)?;
        let image = load_rgb(&path)?;
        let f = run_frame(&net, &image, frame, &a.layers)?;
        let d = dump.get_or_insert_with(|| {
            ActivationDump::new(net.input_side() as u32, f.image_width as u32, f.image_height as u32)
        });
        ensure!(
            (f.image_width, f.image_height) == (d.image_width as usize, d.image_height as usize),
            "{} is {}x{} but earlier frames are {}x{}",
            path.display(),
            f.image_width,
            f.image_height,
            d.image_width,
            d.image_height
        );
        d.frames.push(DumpFrame {
            frame,
            layers: f.output.cache,
        });
    }
    let dump = dump.expect("at least one frame");
    save_dump(&a.output, &dump)?;
    writeln!(
        out,
        "dumped layers {} for {} frames -> {}",
        join_ids(&a.layers),
        dump.frames.len(),
        a.output.display()
    )?;
    Ok(())
}

pub fn run_gen_weights(a: &GenWeightsArgs, out: &mut dyn Write) -> Result<()> {
    ensure!(a.side >= 32 && a.side.is_multiple_of(32), "side must be a positive multiple of 32, got {}", a.side);
    let net = reference_network(a.side, a.seed);
    save_network(&a.output, &net)?;
    writeln!(out, "wrote reference weights (side {}, seed {}) -> {}", a.side, a.seed, a.output.display())?;
    Ok(())
}

pub fn run_render(a: &RenderArgs, out: &mut dyn Write) -> Result<()> {
    ensure!(
        a.vehicles > 0 && a.vehicles.is_multiple_of(4),
        "vehicles must be a positive multiple of 4, got {}",
        a.vehicles
    );
    let mut cfg = SceneConfig {
        vehicles: a.vehicles,
        frames_per_vehicle: a.frames_per_vehicle,
        ..SceneConfig::default()
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let scene = render_scene(&cfg);
    std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    for (frame, img) in &scene.frames {
        save_png(&a.output.join(format!("{frame:06}.png")), img)?;
    }
    let csv = a.output.join("annotations.csv");
    save_simple_csv(&csv, &scene.annotations)?;
    writeln!(
        out,
        "rendered {} frames with {} annotations -> {}",
        scene.frames.len(),
        scene.annotations.len(),
        a.output.display()
    )?;
    Ok(())
}
