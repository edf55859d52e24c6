//! Accuracy, embedding export, a linear domain-confusion probe and the
//! ablation harness.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use candle_core::Tensor;
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{events_as_frame, Dataset, Domain};
use crate::error::{Error, Result};
use crate::nets::{global_avg_pool, Mode, ModelBundle, NetworkConfig};
use crate::trainer::{train, TrainConfig, TrainData};

/// How a dataset reaches the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPath {
    /// Frames through the frame encoder, events through the event content encoder.
    Native,
    /// Events collapsed to intensity frames and fed to the frame encoder: a
    /// source-only model applied to the target domain.
    EventsAsFrames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub domain: Domain,
    pub accuracy: f64,
    /// `None` for classes without samples.
    pub per_class: Vec<Option<f64>>,
    pub correct: usize,
    pub count: usize,
    pub epoch: Option<usize>,
}

/// Top-1 accuracy of `predict`, which maps an `(N, C, H, W)` batch to
/// `(N, K)` logits.
pub fn evaluate_with<F>(data: &Dataset, batch_size: usize, mut predict: F) -> Result<EvalReport>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    if data.is_empty() {
        return Err(Error::Argument("cannot evaluate an empty dataset".into()));
    }
    let batch_size = batch_size.max(1);
    let mut hits = vec![0usize; data.class_count];
    let mut totals = vec![0usize; data.class_count];
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let logits = predict(&data.batch(chunk)?)?;
        let pred: Vec<u32> = logits.argmax(1)?.to_vec1()?;
        if pred.len() != chunk.len() {
            return Err(Error::Shape {
                context: "evaluate(logits)",
                expected: vec![chunk.len()],
                actual: logits.dims().to_vec(),
            });
        }
        for (&i, &p) in chunk.iter().zip(&pred) {
            let label = data.labels[i];
            totals[label] += 1;
            if p as usize == label {
                hits[label] += 1;
            }
        }
    }
    let correct: usize = hits.iter().sum();
    Ok(EvalReport {
        domain: data.domain,
        accuracy: correct as f64 / data.len() as f64,
        per_class: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
        correct,
        count: data.len(),
        epoch: None,
    })
}

/// Accuracy of a bundle in evaluation mode. The event path uses only the
/// event content encoder and the classifier.
pub fn evaluate(
    bundle: &ModelBundle,
    data: &Dataset,
    path: EvalPath,
    batch_size: usize,
) -> Result<EvalReport> {
    match (path, data.domain) {
        (EvalPath::Native, Domain::Frame) => evaluate_with(data, batch_size, |x| bundle.predict_frames(x)),
        (EvalPath::Native, Domain::Event) => evaluate_with(data, batch_size, |x| bundle.predict_events(x)),
        (EvalPath::EventsAsFrames, Domain::Event) => {
            let channels = bundle.config.frame_channels;
            let converted: Vec<Array3<f32>> =
                data.samples.iter().map(|s| events_as_frame(s, channels)).collect();
            let as_frames = Dataset::new(
                Domain::Event,
                converted,
                data.labels.clone(),
                data.class_count,
            )?;
            evaluate_with(&as_frames, batch_size, |x| bundle.predict_frames(x))
        }
        (EvalPath::EventsAsFrames, Domain::Frame) => Err(Error::Argument(
            "events-as-frames evaluation needs an event dataset".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub domain: Domain,
    pub label: usize,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingDump {
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingDump {
    pub fn dim(&self) -> Option<usize> {
        self.rows.first().map(|r| r.vector.len())
    }
}

/// Average-pooled content features in evaluation mode, in dataset order.
pub fn embed(bundle: &ModelBundle, data: &Dataset, batch_size: usize) -> Result<EmbeddingDump> {
    let mut rows = Vec::with_capacity(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let x = data.batch(chunk)?;
        let z = match data.domain {
            Domain::Frame => bundle.encode_frame(&x, Mode::Eval)?,
            Domain::Event => bundle.encode_event_content(&x, Mode::Eval)?,
        };
        let v: Vec<Vec<f32>> = global_avg_pool(&z)?.to_vec2()?;
        for (&i, vector) in chunk.iter().zip(v) {
            rows.push(EmbeddingRow {
                domain: data.domain,
                label: data.labels[i],
                vector,
            });
        }
    }
    Ok(EmbeddingDump { rows })
}

/// Embeds every dataset in turn and writes one CSV file.
pub fn export_embeddings(
    bundle: &ModelBundle,
    sets: &[&Dataset],
    path: &Path,
    batch_size: usize,
) -> Result<EmbeddingDump> {
    let mut dump = EmbeddingDump::default();
    for d in sets {
        dump.rows.extend(embed(bundle, d, batch_size)?.rows);
    }
    write_embeddings(&dump, path)?;
    Ok(dump)
}

/// Header `domain,label,v0,...`, then one row per sample.
pub fn write_embeddings(dump: &EmbeddingDump, path: &Path) -> Result<()> {
    let dim = dump.dim().unwrap_or(0);
    if let Some(r) = dump.rows.iter().find(|r| r.vector.len() != dim) {
        return Err(Error::Shape {
            context: "write_embeddings",
            expected: vec![dim],
            actual: vec![r.vector.len()],
        });
    }
    let mut text = String::from("domain,label");
    for i in 0..dim {
        write!(text, ",v{i}").expect("write to string");
    }
    text.push('\n');
    for r in &dump.rows {
        write!(text, "{},{}", r.domain.name(), r.label).expect("write to string");
        for v in &r.vector {
            write!(text, ",{v}").expect("write to string");
        }
        text.push('\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingDump> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, reason: String| Error::Ingestion {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let dim = header.split(',').count().saturating_sub(2);
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let mut cells = line.split(',');
        let domain = match cells.next() {
            Some("frame") => Domain::Frame,
            Some("event") => Domain::Event,
            other => return Err(bad(n, format!("unknown domain {other:?}"))),
        };
        let label = cells
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad(n, "bad label".into()))?;
        let vector = cells
            .map(|c| c.parse::<f32>().map_err(|e| bad(n, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if vector.len() != dim {
            return Err(bad(n, format!("{} values, header has {dim}", vector.len())));
        }
        rows.push(EmbeddingRow {
            domain,
            label,
            vector,
        });
    }
    Ok(EmbeddingDump { rows })
}

/// Held-out balanced accuracy of a logistic-regression domain classifier on
/// standardized embeddings, using a seeded stratified 70/30 split. 0.5 means
/// the domains are linearly indistinguishable.
pub fn domain_confusion_probe(dump: &EmbeddingDump, seed: u64) -> Result<f64> {
    let dim = dump
        .dim()
        .ok_or_else(|| Error::Argument("probe needs a nonempty dump".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for domain in [Domain::Frame, Domain::Event] {
        let mut idx: Vec<usize> = (0..dump.rows.len())
            .filter(|&i| dump.rows[i].domain == domain)
            .collect();
        if idx.len() < 2 {
            return Err(Error::Argument(format!(
                "probe needs at least 2 {} rows, got {}",
                domain.name(),
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64 * 0.7).round() as usize).clamp(1, idx.len() - 1);
        train_idx.extend_from_slice(&idx[..n_train]);
        test_idx.extend_from_slice(&idx[n_train..]);
    }

    let x = |i: usize| dump.rows[i].vector.iter().map(|&v| v as f64);
    let y = |i: usize| if dump.rows[i].domain == Domain::Event { 1.0 } else { 0.0 };
    let n = train_idx.len() as f64;
    let mut mean = vec![0.0; dim];
    for &i in &train_idx {
        for (m, v) in mean.iter_mut().zip(x(i)) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; dim];
    for &i in &train_idx {
        for ((s, m), v) in std.iter_mut().zip(&mean).zip(x(i)) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let std: Vec<f64> = std.iter().map(|s| s.sqrt().max(1e-8)).collect();
    let features = |i: usize| -> Vec<f64> {
        x(i).zip(&mean)
            .zip(&std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    };
    let train_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| features(i)).collect();
    let train_y: Vec<f64> = train_idx.iter().map(|&i| y(i)).collect();

    // Class-balanced, L2-regularized logistic regression by gradient descent.
    let pos = train_y.iter().sum::<f64>();
    let neg = n - pos;
    let sample_w: Vec<f64> = train_y
        .iter()
        .map(|&t| if t > 0.5 { n / (2.0 * pos) } else { n / (2.0 * neg) })
        .collect();
    let (mut w, mut b) = (vec![0.0; dim], 0.0);
    let (lr, l2) = (0.5, 1e-3);
    for _ in 0..500 {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for ((xi, &t), &sw) in train_x.iter().zip(&train_y).zip(&sample_w) {
            let z: f64 = b + xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = sw * (1.0 / (1.0 + (-z).exp()) - t) / n;
            for (g, v) in gw.iter_mut().zip(xi) {
                *g += err * v;
            }
            gb += err;
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= lr * (g + l2 * *wj);
        }
        b -= lr * gb;
    }

    let mut hits = [0usize; 2];
    let mut totals = [0usize; 2];
    for &i in &test_idx {
        let xi = features(i);
        let z: f64 = b + xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
        let class = y(i) as usize;
        totals[class] += 1;
        if (z > 0.0) as usize == class {
            hits[class] += 1;
        }
    }
    Ok(0.5 * (hits[0] as f64 / totals[0] as f64 + hits[1] as f64 / totals[1] as f64))
}

/// One named configuration of an ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRun {
    pub name: String,
    pub config: TrainConfig,
}

/// Named grids: `losses` (the four self-supervision / decorrelation
/// conditions), `components` (the full model with one part removed at a
/// time) and `all` (both, plus the baseline without an attribute encoder).
pub fn ablation_grid(base: &TrainConfig, preset: &str) -> Result<Vec<AblationRun>> {
    let with = |name: &str, f: &dyn Fn(&mut TrainConfig)| {
        let mut config = base.clone();
        f(&mut config);
        AblationRun {
            name: name.to_string(),
            config,
        }
    };
    let losses = || {
        vec![
            with("Baseline", &|c| {
                c.enable_selfsup = false;
                c.enable_uncorr = false;
            }),
            with("With Self-Supervised Learning Loss", &|c| {
                c.enable_selfsup = true;
                c.enable_uncorr = false;
            }),
            with("With Uncorrelated Condition", &|c| {
                c.enable_selfsup = false;
                c.enable_uncorr = true;
            }),
            with("With Both", &|c| {
                c.enable_selfsup = true;
                c.enable_uncorr = true;
            }),
        ]
    };
    let components = || {
        vec![
            with("With everything", &|_| {}),
            with("Without Fake Image Generation", &|c| c.enable_fake_generation = false),
            with("Without Refinement Net", &|c| c.enable_refinement = false),
            with("Without Event Discriminator", &|c| c.enable_event_discriminator = false),
            with("Without Content Discriminator", &|c| c.enable_content_discriminator = false),
        ]
    };
    match preset {
        "losses" => Ok(losses()),
        "components" => Ok(components()),
        "all" => {
            let mut runs = vec![with("Baseline Without Event Attribute Encoder", &|c| {
                c.enable_selfsup = false;
                c.enable_uncorr = false;
                c.enable_attribute_encoder = false;
            })];
            runs.extend(losses());
            runs.extend(components());
            Ok(runs)
        }
        other => Err(Error::Config(format!(
            "unknown ablation preset `{other}` (expected losses, components or all)"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub config: TrainConfig,
    /// Final-epoch accuracy per evaluation set, keyed `<set>_acc`.
    pub accuracy: BTreeMap<String, f64>,
}

const FLAG_COLUMNS: [&str; 7] = [
    "selfsup",
    "uncorr",
    "refinement",
    "event_discriminator",
    "content_discriminator",
    "fake_generation",
    "attribute_encoder",
];

fn flags(c: &TrainConfig) -> [bool; 7] {
    [
        c.enable_selfsup,
        c.enable_uncorr,
        c.enable_refinement,
        c.enable_event_discriminator,
        c.enable_content_discriminator,
        c.enable_fake_generation,
        c.enable_attribute_encoder,
    ]
}

/// Directory-safe form of a run name.
pub fn run_slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

/// Trains and evaluates every run under `out_dir/<slug>/` and writes
/// `out_dir/ablation.csv`.
pub fn run_ablation(
    network: &NetworkConfig,
    runs: &[AblationRun],
    data: &TrainData,
    out_dir: &Path,
) -> Result<Vec<AblationRow>> {
    if runs.is_empty() {
        return Err(Error::Config("ablation grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let outcome = train(network, &run.config, data, &out_dir.join(run_slug(&run.name)), None)?;
        let accuracy = outcome
            .history
            .last()
            .map(|h| h.accuracy.clone())
            .unwrap_or_default();
        rows.push(AblationRow {
            name: run.name.clone(),
            config: run.config.clone(),
            accuracy,
        });
    }
    write_ablation_csv(&rows, &out_dir.join("ablation.csv"))?;
    Ok(rows)
}

pub fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let acc_cols: Vec<String> = rows
        .iter()
        .flat_map(|r| r.accuracy.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut text = String::from("name");
    for c in FLAG_COLUMNS.iter().map(|s| s.to_string()).chain(acc_cols.iter().cloned()) {
        text.push(',');
        text.push_str(&c);
    }
    text.push('\n');
    for r in rows {
        text.push_str(&format!("\"{}\"", r.name.replace('"', "\"\"")));
        for f in flags(&r.config) {
            text.push_str(&format!(",{f}"));
        }
        for c in &acc_cols {
            text.push(',');
            if let Some(a) = r.accuracy.get(c) {
                text.push_str(&a.to_string());
            }
        }
        text.push('\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Each sample is filled with its label value, so stubs can read it back.
    fn labeled(n_per_class: usize, classes: usize) -> Dataset {
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for _ in 0..n_per_class {
                samples.push(Array3::from_elem((1, 2, 2), c as f32));
                labels.push(c);
            }
        }
        Dataset::new(Domain::Frame, samples, labels, classes).unwrap()
    }

    fn one_hot_from_input(x: &Tensor, classes: usize) -> Result<Tensor> {
        let v: Vec<f32> = x.flatten_from(1)?.max(1)?.to_vec1()?;
        let mut logits = vec![0f32; v.len() * classes];
        for (i, c) in v.iter().enumerate() {
            logits[i * classes + *c as usize] = 1.0;
        }
        Ok(Tensor::from_vec(logits, (v.len(), classes), &Device::Cpu)?)
    }

    #[test]
    fn oracle_stub_scores_one() {
        let d = labeled(5, 10);
        let r = evaluate_with(&d, 7, |x| one_hot_from_input(x, 10)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.count, 50);
        assert!(r.per_class.iter().all(|a| *a == Some(1.0)));
    }

    #[test]
    fn constant_stub_scores_chance() {
        let d = labeled(5, 10);
        let r = evaluate_with(&d, 8, |x| {
            let n = x.dim(0)?;
            let mut v = vec![0f32; n * 10];
            for i in 0..n {
                v[i * 10 + 3] = 1.0;
            }
            Ok(Tensor::from_vec(v, (n, 10), &Device::Cpu)?)
        })
        .unwrap();
        assert!((r.accuracy - 0.1).abs() < 1e-12);
        assert_eq!(r.per_class[3], Some(1.0));
        assert_eq!(r.per_class[0], Some(0.0));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let d = Dataset::new(Domain::Frame, vec![], vec![], 10).unwrap();
        assert!(evaluate_with(&d, 4, |x| Ok(x.clone())).is_err());
    }

    fn gaussian_dump(n: usize, dim: usize, shift: f32, seed: u64) -> EmbeddingDump {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for (domain, offset) in [(Domain::Frame, 0.0), (Domain::Event, shift)] {
            for _ in 0..n {
                let vector = (0..dim)
                    .map(|_| {
                        let z: f32 = StandardNormal.sample(&mut rng);
                        z + offset
                    })
                    .collect();
                rows.push(EmbeddingRow {
                    domain,
                    label: rng.random_range(0..10),
                    vector,
                });
            }
        }
        EmbeddingDump { rows }
    }

    #[test]
    fn probe_identical_domains_near_half() {
        let r = domain_confusion_probe(&gaussian_dump(1000, 8, 0.0, 1), 0).unwrap();
        assert!((r - 0.5).abs() <= 0.05, "{r}");
    }

    #[test]
    fn probe_separated_domains_near_one() {
        let r = domain_confusion_probe(&gaussian_dump(200, 8, 10.0, 2), 0).unwrap();
        assert!(r > 0.99, "{r}");
    }

    #[test]
    fn probe_needs_both_domains() {
        let mut d = gaussian_dump(10, 3, 0.0, 3);
        d.rows.retain(|r| r.domain == Domain::Frame);
        assert!(domain_confusion_probe(&d, 0).is_err());
    }

    #[test]
    fn embeddings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let dump = gaussian_dump(3, 4, 1.0, 4);
        let path = dir.path().join("emb.csv");
        write_embeddings(&dump, &path).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), dump);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("domain,label,v0,v1,v2,v3\n"));
    }

    #[test]
    fn presets() {
        let base = TrainConfig::default();
        let g = ablation_grid(&base, "losses").unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[0].name, "Baseline");
        assert!(!g[0].config.enable_selfsup && !g[0].config.enable_uncorr);
        assert!(g[3].config.enable_selfsup && g[3].config.enable_uncorr);
        assert_eq!(ablation_grid(&base, "components").unwrap().len(), 5);
        assert_eq!(ablation_grid(&base, "all").unwrap().len(), 10);
        assert!(ablation_grid(&base, "nope").is_err());
        assert_eq!(run_slug("With Both"), "with_both");
    }

    #[test]
    fn empty_grid_is_rejected() {
        let d = labeled(1, 2);
        let data = TrainData {
            frames: d.clone(),
            events: d,
            eval: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            run_ablation(&NetworkConfig::default(), &[], &data, dir.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ablation_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<AblationRow> = ablation_grid(&TrainConfig::default(), "losses")
            .unwrap()
            .into_iter()
            .map(|r| AblationRow {
                name: r.name,
                config: r.config,
                accuracy: [("test_event_acc".to_string(), 0.5)].into(),
            })
            .collect();
        let path = dir.path().join("a.csv");
        write_ablation_csv(&rows, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].ends_with(",test_event_acc"));
        assert!(lines[1].starts_with("\"Baseline\",false,false,"));
    }
}
