use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;

use dysgrade_core::boost::ForestParams;
use dysgrade_core::corpus::{load_manifest, read_manifest_rows, save_corpus};
use dysgrade_core::corpus::synthesize_corpus;
use dysgrade_core::dsp::{trim_silence, DEFAULT_TRIM_MIN_VOICED_MS, DEFAULT_TRIM_THRESHOLD_DB};
use dysgrade_core::hier::{
    build_feature_vector, default_hierarchy_config, predict_many, read_config, train_hierarchy_report,
    write_config, AcousticFeatures, StageOneSpec,
};
use dysgrade_core::phasefeat::{utterance_phase_matrix, PhaseFrame};
use dysgrade_core::serial::write_atomic;
use dysgrade_core::{
    ConfusionMatrix, FusionMode, HierarchyModel, HierarchyOptions, Severity, TiePolicy, UtteranceKind,
};

use crate::{FeatureSet, StageTwo};

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("CSV encoding: {e}"))?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_config(path: Option<&Path>) -> Result<Vec<StageOneSpec>> {
    match path {
        Some(p) => read_config(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(default_hierarchy_config()),
    }
}

pub fn synth(n_per_class: usize, seed: u64, out: &Path) -> Result<()> {
    let records = synthesize_corpus(n_per_class, seed)?;
    create_dir(out)?;
    let manifest = save_corpus(&records, out)?;
    println!("wrote {} speakers to {}", records.len(), manifest.display());
    Ok(())
}

pub fn write_default_config(out: &Path) -> Result<()> {
    write_config(out, &default_hierarchy_config())?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn extract(manifest: &Path, out: &Path, feature_set: FeatureSet, config: Option<&Path>) -> Result<()> {
    let config = load_config(config)?;
    let records = load_manifest(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    create_dir(out)?;
    let warnings = AtomicUsize::new(0);

    if matches!(feature_set, FeatureSet::Acoustic12 | FeatureSet::Both) {
        let mut header: Vec<String> = [
            "speaker_id",
            "age",
            "gender",
            "label",
            "model_id",
            "sound",
            "frame_ms",
            "segment",
            "segment_fallback",
        ]
        .map(String::from)
        .to_vec();
        header.extend(AcousticFeatures::NAMES.map(String::from));
        let rows: Vec<Vec<String>> = records
            .par_iter()
            .flat_map_iter(|r| {
                let warnings = &warnings;
                config.iter().filter_map(move |spec| match build_feature_vector(r, spec) {
                    Ok(v) => {
                        let mut row = vec![
                            r.speaker_id.clone(),
                            r.age_years.to_string(),
                            r.gender.code().to_owned(),
                            r.severity.map(|s| s.to_string()).unwrap_or_default(),
                            spec.model_id.to_string(),
                            spec.sound.to_string(),
                            spec.frame_len_ms.to_string(),
                            spec.segment.to_string(),
                            u8::from(v.segment_fell_back).to_string(),
                        ];
                        row.extend(v.acoustic.to_array().iter().map(|x| x.to_string()));
                        Some(row)
                    }
                    Err(e) => {
                        warn!("speaker {} model {}: {e}", r.speaker_id, spec.model_id);
                        warnings.fetch_add(1, Ordering::Relaxed);
                        None
                    }
                })
            })
            .collect();
        let path = out.join("acoustic12.csv");
        write_atomic(&path, &csv_bytes(&header, &rows)?)?;
        println!("wrote {} rows to {}", rows.len(), path.display());
    }

    if matches!(feature_set, FeatureSet::Phase54 | FeatureSet::Both) {
        let mut header: Vec<String> = ["speaker_id", "kind", "frame"].map(String::from).to_vec();
        header.extend(PhaseFrame::feature_names());
        let mut kinds = UtteranceKind::RECORDED.to_vec();
        kinds.push(UtteranceKind::Combined);
        let rows: Vec<Vec<String>> = records
            .par_iter()
            .flat_map_iter(|r| {
                let warnings = &warnings;
                kinds.iter().flat_map(move |&kind| {
                    let matrix = r
                        .clip_for(kind)
                        .and_then(|clip| trim_silence(&clip, DEFAULT_TRIM_THRESHOLD_DB, DEFAULT_TRIM_MIN_VOICED_MS))
                        .and_then(|clip| utterance_phase_matrix(&clip));
                    match matrix {
                        Ok(m) => m.frames[..m.valid_frame_count]
                            .iter()
                            .enumerate()
                            .map(|(i, f)| {
                                let mut row = vec![r.speaker_id.clone(), kind.to_string(), i.to_string()];
                                row.extend(f.iter().map(|x| x.to_string()));
                                row
                            })
                            .collect::<Vec<_>>(),
                        Err(e) => {
                            warn!("speaker {} utterance {kind}: {e}", r.speaker_id);
                            warnings.fetch_add(1, Ordering::Relaxed);
                            Vec::new()
                        }
                    }
                })
            })
            .collect();
        let path = out.join("phase54.csv");
        write_atomic(&path, &csv_bytes(&header, &rows)?)?;
        println!("wrote {} rows to {}", rows.len(), path.display());
    }

    let warnings = warnings.into_inner();
    write_atomic(&out.join("extract_summary.txt"), format!("speakers={}\nwarnings={warnings}\n", records.len()).as_bytes())?;
    println!("warnings: {warnings}");
    Ok(())
}

pub struct TrainArgs<'a> {
    pub manifest: &'a Path,
    pub out: &'a Path,
    pub config: Option<&'a Path>,
    pub stage_two: StageTwo,
    pub mask_out_of_group: bool,
    pub tie_policy: TiePolicy,
    pub seed: u64,
}

pub fn train(args: TrainArgs<'_>) -> Result<()> {
    let config = load_config(args.config)?;
    let records = load_manifest(args.manifest).with_context(|| format!("loading {}", args.manifest.display()))?;
    let options = HierarchyOptions {
        stage_two: match args.stage_two {
            StageTwo::Forest => ForestParams::default(),
            StageTwo::Tree => ForestParams::single_tree(5),
        },
        evaluate_out_of_group: !args.mask_out_of_group,
        tie_policy: args.tie_policy,
        ..HierarchyOptions::default()
    };
    info!("training on {} speakers", records.len());
    let (model, report) = train_hierarchy_report(&records, &config, &options, args.seed).context("training failed")?;
    model.save(args.out)?;
    println!("{report}");
    println!("wrote model to {}", args.out.display());
    Ok(())
}

pub fn predict(manifest: &Path, model_path: &Path, out: &Path, fusion: FusionMode, policy: TiePolicy) -> Result<()> {
    let model = HierarchyModel::load(model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let records = load_manifest(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    let predictions = predict_many(&model, &records, fusion, policy)?;
    let mut header = vec!["speaker_id".to_owned(), "predicted".to_owned()];
    header.extend(model.config.iter().map(|s| format!("p_model{}", s.model_id)));
    let rows: Vec<Vec<String>> = records
        .iter()
        .zip(&predictions)
        .map(|(r, p)| {
            let mut row = vec![r.speaker_id.clone(), p.label.to_string()];
            row.extend(p.stage1.iter().map(|x| x.to_string()));
            row
        })
        .collect();
    write_atomic(out, &csv_bytes(&header, &rows)?)?;
    println!("wrote {} predictions to {}", rows.len(), out.display());
    Ok(())
}

pub fn evaluate(predictions: &Path, manifest: &Path, out: &Path) -> Result<()> {
    let labels: BTreeMap<String, Option<Severity>> = read_manifest_rows(manifest)
        .with_context(|| format!("reading {}", manifest.display()))?
        .into_iter()
        .map(|r| (r.speaker_id, r.severity))
        .collect();
    let mut reader = csv::Reader::from_path(predictions).with_context(|| format!("opening {}", predictions.display()))?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{} has no `{name}` column", predictions.display()))
    };
    let (id_col, pred_col) = (column("speaker_id")?, column("predicted")?);
    let mut pairs = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let id = &rec[id_col];
        let truth = match labels.get(id) {
            None => bail!("speaker {id} (predictions row {}) is not in the manifest", i + 1),
            Some(None) => bail!("speaker {id} has no label in the manifest"),
            Some(Some(s)) => *s,
        };
        let predicted: i64 = rec[pred_col]
            .trim()
            .parse()
            .with_context(|| format!("predictions row {}: bad label `{}`", i + 1, &rec[pred_col]))?;
        pairs.push((truth, Severity::try_from_i64(predicted)?));
    }
    let matrix = ConfusionMatrix::from_pairs(&pairs)?;
    let metrics = matrix.metrics()?;
    create_dir(out)?;
    let text = format!("{}\n{}", matrix.to_text(), metrics.to_text());
    write_atomic(&out.join("report.txt"), text.as_bytes())?;
    write_atomic(&out.join("metrics.txt"), metrics.to_key_values().as_bytes())?;
    print!("{text}");
    Ok(())
}
