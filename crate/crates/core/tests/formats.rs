use moral_lens::embedding::{
    read_embedding_file, read_manifest, write_embedding_file, write_manifest, DatasetManifest, ManifestRow,
    EMBEDDING_HEADER_LEN,
};
use moral_lens::head::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint};
use moral_lens::{ClassifierHead, EmbeddingRecord, Error, HeadConfig, Label, Split};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite())
}

fn records_strategy() -> impl Strategy<Value = Vec<EmbeddingRecord>> {
    (1usize..24, 1usize..12).prop_flat_map(|(dim, n)| {
        prop::collection::vec(
            (prop::collection::vec(finite_f32(), dim), prop::option::of(any::<bool>())),
            n,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (v, label))| {
                    let mut r = EmbeddingRecord::new(format!("r{i}"), v).with_source("user");
                    r.label = label.map(Label::from);
                    r
                })
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn embedding_file_round_trip(records in records_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.clem");
        let second = dir.path().join("b.clem");
        let manifest = DatasetManifest::from_records(&records).unwrap();
        write_embedding_file(&records, &first).unwrap();
        let back = read_embedding_file(&first, &manifest).unwrap();
        prop_assert_eq!(back.len(), records.len());
        for (a, b) in back.iter().zip(&records) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(a.label, b.label);
            let bits_a: Vec<u32> = a.vector.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.vector.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits_a, bits_b);
        }
        write_embedding_file(&back, &second).unwrap();
        prop_assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    }

    #[test]
    fn checkpoint_round_trip(d_in in 1usize..20, d_hidden in 1usize..20, seed in any::<u64>(), tag in "[a-z]{0,12}") {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = ClassifierHead::init(HeadConfig::new(d_in, d_hidden, 0.5).unwrap(), &mut rng).unwrap();
        // Parameters already representable in f32 survive exactly.
        let mut head = head;
        let flat: Vec<f64> = head.flat_params().iter().map(|&p| p as f32 as f64).collect();
        head.set_flat_params(&flat).unwrap();
        let checkpoint = Checkpoint::new(head, &serde_json::json!({"tag": tag, "seed": seed})).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.clmh");
        write_checkpoint(&checkpoint, &path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        prop_assert_eq!(&back, &checkpoint);
        let bytes = std::fs::read(&path).unwrap();
        prop_assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }
}

#[test]
fn randomized_matrix_bytes_round_trip() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let records: Vec<EmbeddingRecord> = (0..100)
        .map(|i| EmbeddingRecord::new(format!("{i}"), (0..64).map(|_| rng.random_range(-4.0f32..4.0)).collect()))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_embedding_file(&records, &a).unwrap();
    let manifest = DatasetManifest::from_records(&records).unwrap();
    write_embedding_file(&read_embedding_file(&a, &manifest).unwrap(), &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn layout_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.clem");
    write_embedding_file(&[EmbeddingRecord::new("x", vec![0.0, 1.0])], &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), EMBEDDING_HEADER_LEN as u64 + 8);

    let records: Vec<_> = (0..3).map(|i| EmbeddingRecord::new(format!("{i}"), vec![0.5; 512])).collect();
    write_embedding_file(&records, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 3);
    assert_eq!(bytes.len() - EMBEDDING_HEADER_LEN, 3 * 512 * 4);
}

fn sample_file(dir: &std::path::Path) -> (std::path::PathBuf, DatasetManifest) {
    let records: Vec<_> = (0..3)
        .map(|i| EmbeddingRecord::new(format!("id{i}"), vec![i as f32, 1.0, 2.0]).with_split(Split::Train))
        .collect();
    let path = dir.join("e.clem");
    write_embedding_file(&records, &path).unwrap();
    (path, DatasetManifest::from_records(&records).unwrap())
}

#[test]
fn corrupted_embedding_files_report_categories() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = sample_file(dir.path());
    let good = std::fs::read(&path).unwrap();
    let check = |bytes: &[u8], category: &str| {
        let p = dir.path().join("bad.clem");
        std::fs::write(&p, bytes).unwrap();
        let err = read_embedding_file(&p, &manifest).unwrap_err();
        assert_eq!(err.category(), category, "{err}");
        err
    };

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(check(&magic, "format"), Error::BadMagic { .. }));

    let mut version = good.clone();
    version[4] = 9;
    assert!(matches!(check(&version, "format"), Error::UnsupportedVersion(9)));

    let mut padding = good.clone();
    padding[6] = 1;
    check(&padding, "format");

    check(&good[..10], "format");
    assert!(matches!(check(&good[..good.len() - 3], "format"), Error::Truncated { .. }));

    let mut nan = good.clone();
    let offset = EMBEDDING_HEADER_LEN + (3 + 1) * 4;
    nan[offset..offset + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    match check(&nan, "validation") {
        Error::NonFinite { row, id, component } => {
            assert_eq!((row, id.as_str(), component), (1, "id1", 1));
        }
        other => panic!("unexpected {other:?}"),
    }

    let short_manifest = DatasetManifest::new(manifest.rows[..2].to_vec()).unwrap();
    let err = read_embedding_file(&path, &short_manifest).unwrap_err();
    assert!(matches!(err, Error::CountMismatch { file: 3, manifest: 2 }));
    assert_eq!(err.category(), "validation");
}

#[test]
fn corrupted_checkpoints_report_categories() {
    let head = ClassifierHead::zeros(HeadConfig::new(4, 3, 0.5).unwrap()).unwrap();
    let good = encode_checkpoint(&Checkpoint::new(head, &serde_json::json!({"k": 1})).unwrap()).unwrap();
    assert!(decode_checkpoint(&good).is_ok());

    let mut magic = good.clone();
    magic[..4].copy_from_slice(b"CLEM");
    assert!(matches!(decode_checkpoint(&magic), Err(Error::BadMagic { .. })));

    let mut version = good.clone();
    version[4] = 2;
    assert_eq!(decode_checkpoint(&version).unwrap_err().category(), "format");

    for cut in [3, 15, 40, good.len() - 1] {
        let err = decode_checkpoint(&good[..cut]).unwrap_err();
        assert_eq!(err.category(), "format", "cut at {cut}: {err}");
    }

    let mut extra = good.clone();
    extra.push(0);
    assert_eq!(decode_checkpoint(&extra).unwrap_err().category(), "format");

    let mut nan = good.clone();
    nan[16..20].copy_from_slice(&f32::INFINITY.to_le_bytes());
    assert_eq!(decode_checkpoint(&nan).unwrap_err().category(), "numeric");
}

#[test]
fn manifest_round_trip_and_label_conversion() {
    let dir = tempfile::tempdir().unwrap();
    let mut smid_low = ManifestRow::new("s1", Split::Unlabeled, "smid");
    smid_low.moral_rate = Some(1.0);
    let mut smid_edge = ManifestRow::new("s2", Split::Unlabeled, "smid");
    smid_edge.moral_rate = Some(2.4);
    let mut nsfw = ManifestRow::new("n1", Split::Unlabeled, "nsfw");
    nsfw.raw_class = Some("drawings".into());
    let mut intent = ManifestRow::new("i1", Split::Unlabeled, "sexual_intent");
    intent.raw_class = Some("implicit".into());
    let mut bench = ManifestRow::new("b1", Split::Unlabeled, "benchmark");
    bench.category = Some("burglary".into());
    let mut explicit = ManifestRow::new("e1", Split::Train, "ethics");
    explicit.label = Some(Label::Immoral);
    let manifest = DatasetManifest::new(vec![smid_low, smid_edge, nsfw, intent, bench, explicit]).unwrap();

    let path = dir.path().join("m.jsonl");
    write_manifest(&manifest, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().next().unwrap().contains("\"label\":null"));
    let back = read_manifest(&path).unwrap();
    assert_eq!(back, manifest);

    let records: Vec<_> = (0..6).map(|i| EmbeddingRecord::new(format!("{i}"), vec![i as f32])).collect();
    let emb = dir.path().join("e.clem");
    write_embedding_file(&records, &emb).unwrap();
    let dataset = moral_lens::embedding::load_dataset(&emb, &back).unwrap();
    let labels: Vec<_> = dataset.records.iter().map(|r| (r.id.as_str(), r.label)).collect();
    assert_eq!(
        labels,
        vec![
            ("s1", Some(Label::Immoral)),
            ("n1", Some(Label::Moral)),
            ("b1", Some(Label::Immoral)),
            ("e1", Some(Label::Immoral)),
        ]
    );
    assert_eq!(dataset.excluded, vec!["s2".to_string(), "i1".to_string()]);
}

#[test]
fn manifest_rejects_duplicate_ids() {
    let rows = vec![
        ManifestRow::new("a", Split::Train, "ethics"),
        ManifestRow::new("a", Split::Test, "ethics"),
    ];
    assert!(DatasetManifest::new(rows).is_err());
}
