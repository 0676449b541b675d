use dysgrade_core::corpus::{load_manifest, save_corpus, synthesize_corpus};
use dysgrade_core::hier::{default_hierarchy_config, predict_hierarchy, train_hierarchy};
use dysgrade_core::phasefeat::{utterance_phase_matrix, MAX_FRAMES};
use dysgrade_core::{HierarchyModel, HierarchyOptions, UtteranceKind};

#[test]
fn persisted_corpus_and_model_give_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthesize_corpus(4, 31).unwrap();
    let manifest = save_corpus(&corpus, dir.path()).unwrap();
    let loaded = load_manifest(&manifest).unwrap();
    assert_eq!(loaded.len(), corpus.len());
    for (a, b) in corpus.iter().zip(&loaded) {
        assert_eq!((&a.speaker_id, a.age_years, a.gender, a.severity), (&b.speaker_id, b.age_years, b.gender, b.severity));
        for kind in UtteranceKind::RECORDED {
            let (x, y) = (a.utterance(kind).unwrap(), b.utterance(kind).unwrap());
            assert_eq!(x.len(), y.len());
            let err = x.samples().iter().zip(y.samples()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            // Written as round(x * 32767), read back as n / 32768.
            assert!(err <= 2.0 / 32767.0, "{kind}: {err}");
        }
    }

    let model = train_hierarchy(&loaded, &default_hierarchy_config(), &HierarchyOptions::default(), 3).unwrap();
    let path = dir.path().join("model.bin");
    model.save(&path).unwrap();
    let reloaded = HierarchyModel::load(&path).unwrap();
    assert_eq!(reloaded.to_bytes(), model.to_bytes());
    for r in &loaded {
        let (p, q) = (predict_hierarchy(&model, r).unwrap(), predict_hierarchy(&reloaded, r).unwrap());
        assert_eq!(p.label, q.label);
        assert_eq!(p.stage1, q.stage1);
    }
}

#[test]
fn phase_matrices_on_corpus_clips() {
    let corpus = synthesize_corpus(1, 12).unwrap();
    for r in &corpus {
        for kind in UtteranceKind::RECORDED {
            let m = utterance_phase_matrix(r.utterance(kind).unwrap()).unwrap();
            assert_eq!(m.frames.len(), MAX_FRAMES);
            // 2 s at 8 kHz with 20 ms frames and a 10 ms hop.
            assert_eq!(m.valid_frame_count, 199);
            assert!(m.frames[..m.valid_frame_count].iter().all(|f| f.iter().all(|v| v.is_finite())));
            assert!(m.frames[m.valid_frame_count..].iter().all(|f| f.iter().all(|&v| v == 0.0)));
        }
        let combined = r.clip_for(UtteranceKind::Combined).unwrap();
        assert_eq!(utterance_phase_matrix(&combined).unwrap().valid_frame_count, MAX_FRAMES);
    }
}
