//! Corpus generation, on-disk layout and loading.
//!
//! ```text
//! <root>/manifest.json
//! <root>/seq_0000/{mesh.obj, trajectory.jsonl, motion.jsonl, labels.json}
//! ...
//! ```
//!
//! Records are family-major: `per_family` records of each family in
//! [`Family::ALL`] order. Within a family, record `j` goes to the test split
//! of the subject scheme iff `j % test_period == test_period − 1`; test
//! records belong to the held-out subjects. The object scheme tests on every
//! record whose primitive kind equals `held_out_object`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{contact_labels, CONTACT_THRESHOLD};
use crate::geometry::obj::{read_obj, to_obj_string};
use crate::geometry::trajectory::{self, read_trajectory, Trajectory};
use crate::geometry::ObjectSequence;
use crate::kinematics::{PoseSequence, Skeleton};
use crate::pipeline::{read_motion, HandTrajectory, MotionFile};

use super::{generate_scenario, Family, HandChoice, ScenarioSpec, SubjectStyle, MAX_RETRIES};

pub const MANIFEST_SCHEMA: &str = "corpus-manifest";
pub const MANIFEST_VERSION: u32 = 1;
const LABELS_SCHEMA: &str = "contact-labels";
const LABELS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub per_family: usize,
    pub frames: usize,
    pub fps: f64,
    pub spacing: f64,
    pub test_period: usize,
    pub train_subjects: usize,
    pub test_subjects: usize,
    pub held_out_object: String,
    pub skeleton: Skeleton,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            per_family: 60,
            frames: 30,
            fps: 30.0,
            spacing: 0.05,
            test_period: 6,
            train_subjects: 15,
            test_subjects: 2,
            held_out_object: "lamp".into(),
            skeleton: Skeleton::stick9(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_family == 0 || self.frames < 2 || self.test_period < 2 {
            return Err(Error::Config("corpus needs per_family ≥ 1, frames ≥ 2, test_period ≥ 2".into()));
        }
        if self.train_subjects == 0 || self.test_subjects == 0 {
            return Err(Error::Config("corpus needs at least one train and one test subject".into()));
        }
        if !(self.fps > 0.0 && self.spacing > 0.0) {
            return Err(Error::Config("fps and spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.per_family * Family::ALL.len()
    }

    fn placement(&self, index: usize) -> (Family, Split, usize) {
        let family = Family::ALL[index / self.per_family];
        let j = index % self.per_family;
        let fam = index / self.per_family;
        if j % self.test_period == self.test_period - 1 {
            let k = j / self.test_period;
            (family, Split::Test, self.train_subjects + (k + fam) % self.test_subjects)
        } else {
            let k = j - j / self.test_period;
            (family, Split::Train, (k + fam) % self.train_subjects)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub index: usize,
    pub spec: ScenarioSpec,
    pub subject: usize,
    /// Subject-held-out scheme.
    pub split: Split,
    /// Object-held-out scheme.
    pub object_split: Split,
    pub object: ObjectSequence,
    pub poses: PoseSequence,
    pub hands: HandTrajectory,
    /// Per frame, left and right: hand within the contact threshold.
    pub labels: Vec<[bool; 2]>,
    pub grasp_vertices: [Option<usize>; 2],
}

fn record_id(index: usize) -> String {
    format!("seq_{index:04}")
}

/// Deterministic in `(config, index)`; independent of other records.
pub fn generate_record(config: &CorpusConfig, index: usize) -> Result<DatasetRecord> {
    if index >= config.total() {
        return Err(Error::IndexOutOfRange {
            index,
            len: config.total(),
        });
    }
    let (family, split, subject) = config.placement(index);
    let style = SubjectStyle::for_subject(config.seed, subject);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    for _ in 0..MAX_RETRIES {
        let spec = ScenarioSpec::draw(family, style, config.frames, config.fps, config.spacing, &mut rng);
        let scenario = match generate_scenario(&spec, &config.skeleton) {
            Ok(s) => s,
            Err(Error::Unreachable(_)) => continue,
            Err(e) => return Err(e),
        };
        let labels = contact_labels(&scenario.hands, &scenario.object, CONTACT_THRESHOLD)?;
        let object_split = if spec.primitive.kind() == config.held_out_object {
            Split::Test
        } else {
            Split::Train
        };
        return Ok(DatasetRecord {
            id: record_id(index),
            index,
            spec,
            subject,
            split,
            object_split,
            object: scenario.object,
            poses: scenario.poses,
            hands: scenario.hands,
            labels,
            grasp_vertices: scenario.grasp_vertices,
        });
    }
    Err(Error::Unreachable(format!("record {index}: no reachable scenario after {MAX_RETRIES} draws")))
}

/// All records, generated in parallel; order and content do not depend on
/// the worker count.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Vec<DatasetRecord>> {
    config.validate()?;
    (0..config.total()).into_par_iter().map(|i| generate_record(config, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LabelsFile {
    schema: String,
    version: u32,
    threshold: f64,
    labels: Vec<[bool; 2]>,
    subject: usize,
    split: Split,
    object_split: Split,
    grasp_vertices: [Option<usize>; 2],
    spec: ScenarioSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub family: Family,
    pub primitive: String,
    pub hands: HandChoice,
    pub subject: usize,
    pub split: Split,
    pub object_split: Split,
    pub frames: usize,
    /// File name → SHA-256 of its bytes.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: u32,
    pub config: CorpusConfig,
    pub counts: BTreeMap<String, usize>,
    pub sequences: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// SHA-256 of the serialized manifest (which covers every file hash).
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn record_files(rec: &DatasetRecord, skeleton: &Skeleton) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let traj = Trajectory {
        fps: rec.object.fps,
        transforms: rec.object.transforms.clone(),
    };
    let motion = MotionFile {
        fps: rec.object.fps,
        skeleton: skeleton.clone(),
        poses: rec.poses.clone(),
        anchors: Vec::new(),
        rectified: None,
    };
    let labels = LabelsFile {
        schema: LABELS_SCHEMA.into(),
        version: LABELS_VERSION,
        threshold: CONTACT_THRESHOLD,
        labels: rec.labels.clone(),
        subject: rec.subject,
        split: rec.split,
        object_split: rec.object_split,
        grasp_vertices: rec.grasp_vertices,
        spec: rec.spec.clone(),
    };
    Ok(vec![
        ("mesh.obj", to_obj_string(&rec.object.mesh).into_bytes()),
        ("trajectory.jsonl", trajectory::to_jsonl(&traj).into_bytes()),
        ("motion.jsonl", motion.to_jsonl()?.into_bytes()),
        (
            "labels.json",
            serde_json::to_vec_pretty(&labels).map_err(|e| Error::Config(e.to_string()))?,
        ),
    ])
}

fn create_fresh_dir(dir: &Path) -> Result<()> {
    match fs::create_dir(dir) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            let empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_none();
            if empty {
                Ok(())
            } else {
                Err(Error::io(
                    dir,
                    std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output directory exists and is not empty"),
                ))
            }
        }
        Err(e) => Err(Error::io(dir, e)),
    }
}

/// Generates the corpus and writes it under `out` (which must not exist
/// or be empty; its parent must exist).
pub fn build_corpus(config: &CorpusConfig, out: impl AsRef<Path>) -> Result<Manifest> {
    let out = out.as_ref();
    config.validate()?;
    create_fresh_dir(out)?;
    let records = generate_corpus(config)?;
    let mut sequences = Vec::with_capacity(records.len());
    for rec in &records {
        let dir = out.join(&rec.id);
        fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut files = BTreeMap::new();
        for (name, bytes) in record_files(rec, &config.skeleton)? {
            let path = dir.join(name);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            files.insert(name.to_string(), sha256_hex(&bytes));
        }
        sequences.push(ManifestEntry {
            id: rec.id.clone(),
            family: rec.spec.family,
            primitive: rec.spec.primitive.kind().into(),
            hands: rec.spec.hands,
            subject: rec.subject,
            split: rec.split,
            object_split: rec.object_split,
            frames: rec.spec.frames,
            files,
        });
    }
    let count = |f: &dyn Fn(&ManifestEntry) -> bool| sequences.iter().filter(|e| f(e)).count();
    let counts = BTreeMap::from([
        ("total".to_string(), sequences.len()),
        ("subject_train".to_string(), count(&|e| e.split == Split::Train)),
        ("subject_test".to_string(), count(&|e| e.split == Split::Test)),
        ("object_train".to_string(), count(&|e| e.object_split == Split::Train)),
        ("object_test".to_string(), count(&|e| e.object_split == Split::Test)),
    ]);
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        version: MANIFEST_VERSION,
        config: config.clone(),
        counts,
        sequences,
    };
    let path = out.join("manifest.json");
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(root: impl AsRef<Path>) -> Result<Manifest> {
    let path = root.as_ref().join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
    if m.schema != MANIFEST_SCHEMA || m.version != MANIFEST_VERSION {
        return Err(Error::parse(&path, format!("unsupported manifest {} v{}", m.schema, m.version)));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub records: Vec<DatasetRecord>,
}

/// Which held-out scheme to split by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    Subject,
    Object,
}

impl Corpus {
    pub fn skeleton(&self) -> &Skeleton {
        &self.manifest.config.skeleton
    }

    pub fn split(&self, scheme: SplitScheme, split: Split) -> Vec<&DatasetRecord> {
        self.records
            .iter()
            .filter(|r| match scheme {
                SplitScheme::Subject => r.split == split,
                SplitScheme::Object => r.object_split == split,
            })
            .collect()
    }
}

fn read_verified(dir: &Path, name: &str, entry: &ManifestEntry) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    match entry.files.get(name) {
        Some(h) if *h == sha256_hex(&bytes) => Ok(bytes),
        Some(_) => Err(Error::parse(&path, "content hash does not match the manifest")),
        None => Err(Error::parse(&path, "file not listed in the manifest")),
    }
}

/// Loads every record, verifying file hashes against the manifest.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<Corpus> {
    let root = root.as_ref();
    let manifest = read_manifest(root)?;
    let records = manifest
        .sequences
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let dir = root.join(&entry.id);
            for name in entry.files.keys() {
                read_verified(&dir, name, entry)?;
            }
            let mesh = read_obj(&dir.join("mesh.obj"))?;
            let traj = read_trajectory(&dir.join("trajectory.jsonl"))?;
            let mut object = ObjectSequence::new(mesh, traj.transforms, traj.fps)?;
            object.mesh.name = entry.primitive.clone();
            let motion = read_motion(dir.join("motion.jsonl"))?;
            let labels_path = dir.join("labels.json");
            let labels: LabelsFile = serde_json::from_slice(&read_verified(&dir, "labels.json", entry)?)
                .map_err(|e| Error::parse(&labels_path, e))?;
            if labels.schema != LABELS_SCHEMA || labels.version != LABELS_VERSION {
                return Err(Error::parse(&labels_path, "unsupported labels schema"));
            }
            let hands = HandTrajectory::from_poses(&motion.poses, &motion.skeleton);
            Ok(DatasetRecord {
                id: entry.id.clone(),
                index,
                spec: labels.spec,
                subject: labels.subject,
                split: labels.split,
                object_split: labels.object_split,
                object,
                poses: motion.poses,
                hands,
                labels: labels.labels,
                grasp_vertices: labels.grasp_vertices,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        root: root.to_path_buf(),
        manifest,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            per_family: 6,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn default_counts() {
        let c = CorpusConfig::default();
        let (mut train, mut test) = (0, 0);
        let mut test_subjects = std::collections::BTreeSet::new();
        for i in 0..c.total() {
            match c.placement(i) {
                (_, Split::Train, s) => {
                    train += 1;
                    assert!(s < 15);
                }
                (_, Split::Test, s) => {
                    test += 1;
                    test_subjects.insert(s);
                }
            }
        }
        assert_eq!((train, test), (200, 40));
        assert_eq!(test_subjects.into_iter().collect::<Vec<_>>(), vec![15, 16]);
    }

    #[test]
    fn records_are_reproducible_and_labelled() {
        let c = small();
        let a = generate_record(&c, 7).unwrap();
        let b = generate_record(&c, 7).unwrap();
        assert_eq!(a, b);
        let again = contact_labels(&a.hands, &a.object, CONTACT_THRESHOLD).unwrap();
        assert_eq!(again, a.labels);
        assert!(a.labels.iter().any(|l| l[0] || l[1]));
        assert!(!a.labels[0][0] && !a.labels[0][1]);
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("corpus");
        let c = small();
        let m = build_corpus(&c, &out).unwrap();
        assert_eq!(m.sequences.len(), 24);
        assert_eq!(m.counts["subject_test"], 4);
        let loaded = load_corpus(&out).unwrap();
        let fresh = generate_corpus(&c).unwrap();
        for (l, f) in loaded.records.iter().zip(&fresh) {
            assert_eq!(l.poses.flatten(), f.poses.flatten());
            assert_eq!(l.object.transforms, f.object.transforms);
            assert_eq!(l.object.mesh.vertices, f.object.mesh.vertices);
            assert_eq!(l.labels, f.labels);
        }
        for r in loaded.split(SplitScheme::Object, Split::Test) {
            assert_eq!(r.spec.primitive.kind(), "lamp");
        }
        let ids = |s| loaded.split(SplitScheme::Subject, s).iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        let (tr, te) = (ids(Split::Train), ids(Split::Test));
        assert!(te.iter().all(|id| !tr.contains(id)));
        assert!(build_corpus(&c, &out).is_err());
        let again = build_corpus(&c, dir.path().join("again")).unwrap();
        assert_eq!(again.content_hash(), m.content_hash());
    }

    #[test]
    fn missing_parent_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let r = build_corpus(&small(), dir.path().join("nope").join("corpus"));
        assert!(matches!(r, Err(Error::Io { .. })));
    }
}
