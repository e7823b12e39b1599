use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::clothing::{clothing_catalog, clothing_for};
use super::image::{extension, RgbImage};
use super::pose::{camera_id, sample_camera, sample_poses, CameraSample, PoseSpec};
use super::render::render;
use super::{make_subjects, Gender, Hair, SkinTone, SomatotypeMix, SubjectSpec};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const HEADER_FILE: &str = "manifest.header.json";
pub const DATASET_FORMAT_VERSION: u32 = 1;

const SUBJECT_STREAM: u64 = 1;
const POSE_STREAM: u64 = 2;
const OUTFIT_STREAM: u64 = 3;
const RECORD_STREAM: u64 = 1 << 32;

/// Below this many subjects the default network tends to leave neurons
/// that never fire.
const FEW_SUBJECTS: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png => "png",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_female: usize,
    pub n_male: usize,
    /// How many of each subject's 8 outfits to render, 1..=8.
    pub clothing_per_subject: usize,
    pub poses: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub image_format: ImageFormat,
}

impl Default for GenConfig {
    /// The mini profile: 10 subjects × 4 outfits × 30 poses at 128×64.
    fn default() -> Self {
        Self {
            n_female: 5,
            n_male: 5,
            clothing_per_subject: 4,
            poses: 30,
            width: 64,
            height: 128,
            seed: 0,
            image_format: ImageFormat::Ppm,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_female + self.n_male == 0 {
            return Err(Error::Config("at least one subject is required".into()));
        }
        if !(1..=8).contains(&self.clothing_per_subject) {
            return Err(Error::Config(format!(
                "clothing_per_subject must lie in 1..=8, got {}",
                self.clothing_per_subject
            )));
        }
        if self.poses == 0 {
            return Err(Error::Config("at least one pose is required".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn subjects(&self) -> usize {
        self.n_female + self.n_male
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Per-subject jitters needed to rebuild a [`SubjectSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyJitter {
    pub height_scale: f64,
    pub width_scale: f64,
    pub limb_asymmetry: f64,
}

/// Walk-cycle parameters needed to rebuild a [`PoseSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gait {
    pub phase: f64,
    pub stride_amplitude: f64,
    pub arm_swing: f64,
    pub yaw_offset: f64,
}

/// One manifest line. Synthetic images carry their full provenance;
/// external ones only identity and camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    /// Relative to the dataset root.
    pub path: String,
    pub subject_id: usize,
    pub camera_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clothing_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skin_tone: Option<SkinTone>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hair: Option<Hair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub somatotype: Option<SomatotypeMix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<BodyJitter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gait: Option<Gait>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render_seed: Option<u64>,
}

impl ImageRecord {
    fn synthetic(
        path: String,
        subject: &SubjectSpec,
        clothing_id: usize,
        pose: &PoseSpec,
        camera: CameraSample,
        render_seed: u64,
    ) -> Self {
        Self {
            path,
            subject_id: subject.subject_id,
            camera_id: camera_id(&camera),
            gender: Some(subject.gender),
            clothing_id: Some(clothing_id),
            pose_id: Some(pose.pose_id),
            camera: Some(camera),
            skin_tone: Some(subject.skin_tone),
            hair: Some(subject.hair),
            somatotype: Some(subject.somatotype),
            split: None,
            body: Some(BodyJitter {
                height_scale: subject.height_scale,
                width_scale: subject.width_scale,
                limb_asymmetry: subject.limb_asymmetry,
            }),
            gait: Some(Gait {
                phase: pose.phase,
                stride_amplitude: pose.stride_amplitude,
                arm_swing: pose.arm_swing,
                yaw_offset: pose.yaw_offset,
            }),
            render_seed: Some(render_seed),
        }
    }

    fn missing(&self, field: &str) -> Error {
        Error::Data(format!("{}: record has no `{field}`", self.path))
    }

    /// The subject as generated; fails for external records.
    pub fn subject_spec(&self) -> Result<SubjectSpec> {
        let body = self.body.ok_or_else(|| self.missing("body"))?;
        Ok(SubjectSpec {
            subject_id: self.subject_id,
            gender: self.gender.ok_or_else(|| self.missing("gender"))?,
            somatotype: self.somatotype.ok_or_else(|| self.missing("somatotype"))?,
            height_scale: body.height_scale,
            width_scale: body.width_scale,
            limb_asymmetry: body.limb_asymmetry,
            skin_tone: self.skin_tone.ok_or_else(|| self.missing("skin_tone"))?,
            hair: self.hair.ok_or_else(|| self.missing("hair"))?,
        })
    }

    pub fn pose_spec(&self) -> Result<PoseSpec> {
        let g = self.gait.ok_or_else(|| self.missing("gait"))?;
        Ok(PoseSpec {
            pose_id: self.pose_id.ok_or_else(|| self.missing("pose_id"))?,
            phase: g.phase,
            stride_amplitude: g.stride_amplitude,
            arm_swing: g.arm_swing,
            yaw_offset: g.yaw_offset,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    /// `None` for external datasets.
    pub seed: Option<u64>,
    pub width: usize,
    pub height: usize,
    pub subjects: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clothing_per_subject: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poses: Option<usize>,
    pub records: usize,
    pub image_format: ImageFormat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub header: DatasetHeader,
    pub records: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct subject ids, ascending.
    pub fn subject_ids(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.records.iter().map(|r| r.subject_id).collect();
        set.into_iter().collect()
    }

    /// Records tagged with `split`, in manifest order.
    pub fn split(&self, split: Split) -> Vec<&ImageRecord> {
        self.records
            .iter()
            .filter(|r| r.split == Some(split))
            .collect()
    }

    fn with_records(&self, records: Vec<ImageRecord>) -> Self {
        let mut header = self.header.clone();
        header.records = records.len();
        header.subjects = records
            .iter()
            .map(|r| r.subject_id)
            .collect::<BTreeSet<_>>()
            .len();
        if header.poses.is_some() {
            header.poses = Some(
                records
                    .iter()
                    .filter_map(|r| r.pose_id)
                    .collect::<BTreeSet<_>>()
                    .len(),
            );
        }
        Self { header, records }
    }

    /// Every (subject, clothing, pose) triple at most once and the header
    /// counts in agreement with the records.
    pub fn check(&self) -> Result<()> {
        if self.header.records != self.records.len() {
            return Err(Error::Data(format!(
                "header announces {} records, manifest has {}",
                self.header.records,
                self.records.len()
            )));
        }
        let mut paths = BTreeSet::new();
        let mut triples = BTreeSet::new();
        for r in &self.records {
            if !paths.insert(r.path.as_str()) {
                return Err(Error::Data(format!("duplicate image path {}", r.path)));
            }
            if let (Some(c), Some(p)) = (r.clothing_id, r.pose_id) {
                if !triples.insert((r.subject_id, c, p)) {
                    return Err(Error::Data(format!(
                        "subject {} outfit {c} pose {p} appears twice",
                        r.subject_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Writes `manifest.jsonl` and its sidecar header into `dir`.
pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let header_path = dir.join(HEADER_FILE);
    let mut header = serde_json::to_vec_pretty(&manifest.header)?;
    header.push(b'\n');
    fs::write(&header_path, header).map_err(|e| Error::io(&header_path, e))?;
    let path = dir.join(MANIFEST_FILE);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for r in &manifest.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let header_path = dir.join(HEADER_FILE);
    let bytes = fs::read(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: DatasetHeader = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", header_path.display())))?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest version {}",
            header.format_version
        )));
    }
    let path = dir.join(MANIFEST_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ImageRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))?;
        records.push(r);
    }
    let m = DatasetManifest { header, records };
    m.check()?;
    Ok(m)
}

/// Re-renders a synthetic record from its metadata alone.
pub fn render_record(record: &ImageRecord, width: usize, height: usize) -> Result<RgbImage> {
    let subject = record.subject_spec()?;
    let pose = record.pose_spec()?;
    let clothing_id = record
        .clothing_id
        .ok_or_else(|| record.missing("clothing_id"))?;
    let clothing = clothing_catalog()
        .into_iter()
        .nth(clothing_id)
        .ok_or_else(|| Error::Data(format!("{}: unknown outfit {clothing_id}", record.path)))?;
    if !clothing.availability.allows(subject.gender) {
        return Err(Error::Data(format!(
            "{}: outfit {clothing_id} not available to {:?}",
            record.path, subject.gender
        )));
    }
    let camera = record.camera.ok_or_else(|| record.missing("camera"))?;
    let seed = record
        .render_seed
        .ok_or_else(|| record.missing("render_seed"))?;
    Ok(render(&subject, &clothing, &pose, &camera, width, height, seed)?.0)
}

/// Renders every (subject, outfit, pose) combination into `out_dir` and
/// writes the manifest. The result depends only on `config`.
pub fn generate_dataset(config: &GenConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let subjects = make_subjects(
        config.n_female,
        config.n_male,
        &mut SeededRng::derive(config.seed, SUBJECT_STREAM),
    );
    let poses = sample_poses(
        config.poses,
        &mut SeededRng::derive(config.seed, POSE_STREAM),
    );
    let mut outfit_rng = SeededRng::derive(config.seed, OUTFIT_STREAM);
    let ext = config.image_format.extension();
    let mut records =
        Vec::with_capacity(subjects.len() * config.clothing_per_subject * poses.len());
    for s in &subjects {
        let sets = clothing_for(s);
        let mut picks = outfit_rng.sample_indices(sets.len(), config.clothing_per_subject);
        picks.sort_unstable();
        for &k in &picks {
            let clothing_id = sets[k].clothing_id;
            for p in &poses {
                let index = records.len() as u64;
                let mut rng = SeededRng::derive(config.seed, RECORD_STREAM + index);
                let camera = sample_camera(&mut rng);
                let render_seed = rng.next_u64();
                let path = format!(
                    "images/s{:03}_o{:02}_p{:03}.{ext}",
                    s.subject_id, clothing_id, p.pose_id
                );
                records.push(ImageRecord::synthetic(
                    path,
                    s,
                    clothing_id,
                    p,
                    camera,
                    render_seed,
                ));
            }
        }
    }
    let manifest = DatasetManifest {
        header: DatasetHeader {
            format_version: DATASET_FORMAT_VERSION,
            seed: Some(config.seed),
            width: config.width,
            height: config.height,
            subjects: subjects.len(),
            clothing_per_subject: Some(config.clothing_per_subject),
            poses: Some(poses.len()),
            records: records.len(),
            image_format: config.image_format,
        },
        records,
    };
    manifest.check()?;

    let images = out_dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    manifest.records.par_iter().try_for_each(|r| {
        let img = render_record(r, config.width, config.height)?;
        img.save(&out_dir.join(&r.path))
    })?;
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

/// Tags every record train/val/test. Within each subject the records are
/// shuffled; validation and test get `floor(f·n)` each and training the rest.
pub fn partition(
    manifest: &DatasetManifest,
    fractions: [f64; 3],
    rng: &mut SeededRng,
) -> Result<DatasetManifest> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let mut by_subject: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        by_subject.entry(r.subject_id).or_default().push(i);
    }
    let mut records = manifest.records.clone();
    for (subject, mut idx) in by_subject {
        let n = idx.len();
        let smallest = fractions
            .iter()
            .copied()
            .filter(|&f| f > 0.0)
            .fold(1.0, f64::min);
        if (n as f64) * smallest < 1.0 {
            warn!("subject {subject} has {n} images, too few for the requested split fractions");
        }
        rng.shuffle(&mut idx);
        let n_val = (fractions[1] * n as f64 + 1e-9).floor() as usize;
        let n_test = (fractions[2] * n as f64 + 1e-9).floor() as usize;
        for (k, &i) in idx.iter().enumerate() {
            records[i].split = Some(if k < n_val {
                Split::Val
            } else if k < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            });
        }
    }
    Ok(manifest.with_records(records))
}

/// Keeps every image of `keep_n` uniformly chosen subjects.
pub fn reduce_subjects(
    manifest: &DatasetManifest,
    keep_n: usize,
    rng: &mut SeededRng,
) -> Result<DatasetManifest> {
    let ids = manifest.subject_ids();
    let keep = choose(&ids, keep_n, rng, "subjects")?;
    if keep_n < FEW_SUBJECTS {
        warn!("only {keep_n} subjects kept; expect dead neurons in the default network");
    }
    let records = manifest
        .records
        .iter()
        .filter(|r| keep.contains(&r.subject_id))
        .cloned()
        .collect();
    Ok(manifest.with_records(records))
}

/// Keeps the same `keep_n` uniformly chosen poses for every subject.
pub fn reduce_poses(
    manifest: &DatasetManifest,
    keep_n: usize,
    rng: &mut SeededRng,
) -> Result<DatasetManifest> {
    let mut ids = BTreeSet::new();
    for r in &manifest.records {
        ids.insert(r.pose_id.ok_or_else(|| r.missing("pose_id"))?);
    }
    let ids: Vec<usize> = ids.into_iter().collect();
    let keep = choose(&ids, keep_n, rng, "poses")?;
    let records = manifest
        .records
        .iter()
        .filter(|r| r.pose_id.is_some_and(|p| keep.contains(&p)))
        .cloned()
        .collect();
    Ok(manifest.with_records(records))
}

fn choose(
    ids: &[usize],
    keep_n: usize,
    rng: &mut SeededRng,
    what: &str,
) -> Result<BTreeSet<usize>> {
    if keep_n == 0 || keep_n > ids.len() {
        return Err(Error::Config(format!(
            "cannot keep {keep_n} of {} {what}",
            ids.len()
        )));
    }
    Ok(rng
        .sample_indices(ids.len(), keep_n)
        .into_iter()
        .map(|i| ids[i])
        .collect())
}

/// Filename convention `<id><d><prefix><cam><d><idx>.<ext>`, by default
/// `0042_c3_017.ppm`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NamingRule {
    pub delimiter: char,
    pub camera_prefix: String,
}

impl Default for NamingRule {
    fn default() -> Self {
        Self {
            delimiter: '_',
            camera_prefix: "c".into(),
        }
    }
}

impl NamingRule {
    /// `(identity, camera, index)` or the reason the stem does not match.
    pub fn parse(&self, stem: &str) -> std::result::Result<(usize, u32, usize), String> {
        let parts: Vec<&str> = stem.split(self.delimiter).collect();
        let [id, cam, idx] = parts[..] else {
            return Err(format!(
                "expected 3 fields separated by `{}`, found {}",
                self.delimiter,
                parts.len()
            ));
        };
        let id = id
            .parse()
            .map_err(|_| format!("identity `{id}` is not a number"))?;
        let cam_num = cam
            .strip_prefix(self.camera_prefix.as_str())
            .ok_or_else(|| format!("camera field `{cam}` lacks prefix `{}`", self.camera_prefix))?;
        let cam = cam_num
            .parse()
            .map_err(|_| format!("camera `{cam_num}` is not a number"))?;
        let idx = idx
            .parse()
            .map_err(|_| format!("index `{idx}` is not a number"))?;
        Ok((id, cam, idx))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub path: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalDataset {
    pub manifest: DatasetManifest,
    pub rejects: Vec<Reject>,
}

/// Indexes the `.ppm`/`.png` files directly under `root`. Files that do not
/// follow `rule` are reported in `rejects`.
pub fn load_external_dataset(root: &Path, rule: &NamingRule) -> Result<ExternalDataset> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::io(root, e))?;
        if e.file_type()
            .map_err(|err| Error::io(e.path(), err))?
            .is_file()
        {
            files.push(e.path());
        }
    }
    files.sort();
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut seen: BTreeMap<(usize, u32, usize), String> = BTreeMap::new();
    let mut format = None;
    for f in files {
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let ext = extension(&f);
        let image_format = match ext.as_deref() {
            Some("ppm") => ImageFormat::Ppm,
            Some("png") => ImageFormat::Png,
            _ => {
                rejects.push(Reject {
                    path: name,
                    reason: "not a .ppm or .png file".into(),
                });
                continue;
            }
        };
        let stem = f
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (id, cam, idx) = match rule.parse(&stem) {
            Ok(v) => v,
            Err(reason) => {
                rejects.push(Reject { path: name, reason });
                continue;
            }
        };
        if let Some(prev) = seen.insert((id, cam, idx), name.clone()) {
            return Err(Error::Data(format!(
                "{name} and {prev} name the same image (identity {id}, camera {cam}, index {idx})"
            )));
        }
        format.get_or_insert(image_format);
        records.push(ImageRecord {
            path: name,
            subject_id: id,
            camera_id: cam,
            gender: None,
            clothing_id: None,
            pose_id: None,
            camera: None,
            skin_tone: None,
            hair: None,
            somatotype: None,
            split: None,
            body: None,
            gait: None,
            render_seed: None,
        });
    }
    if records.is_empty() {
        warn!("no usable images under {}", root.display());
    }
    let (width, height) = match records.first() {
        Some(r) => {
            let img = RgbImage::load(&root.join(&r.path))?;
            (img.width(), img.height())
        }
        None => (0, 0),
    };
    let subjects = records
        .iter()
        .map(|r| r.subject_id)
        .collect::<BTreeSet<_>>()
        .len();
    let manifest = DatasetManifest {
        header: DatasetHeader {
            format_version: DATASET_FORMAT_VERSION,
            seed: None,
            width,
            height,
            subjects,
            clothing_per_subject: None,
            poses: None,
            records: records.len(),
            image_format: format.unwrap_or_default(),
        },
        records,
    };
    Ok(ExternalDataset { manifest, rejects })
}

/// Loads the images of `records` from `root`, resampled to `width×height`
/// where their size differs.
pub fn load_images(
    root: &Path,
    records: &[&ImageRecord],
    width: usize,
    height: usize,
) -> Result<Vec<RgbImage>> {
    records
        .par_iter()
        .map(|r| {
            let img = RgbImage::load(&root.join(&r.path))?;
            Ok(img.resize(width, height))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naming_rule() {
        let rule = NamingRule::default();
        assert_eq!(rule.parse("0042_c3_017"), Ok((42, 3, 17)));
        assert!(rule.parse("0042_3_017").is_err());
        assert!(rule.parse("0042_c3").is_err());
        assert!(rule.parse("x_c3_1").is_err());
        let dash = NamingRule {
            delimiter: '-',
            camera_prefix: "cam".into(),
        };
        assert_eq!(dash.parse("7-cam12-0"), Ok((7, 12, 0)));
    }

    #[test]
    fn config_bounds() {
        assert!(GenConfig::default().validate().is_ok());
        for bad in [
            GenConfig {
                clothing_per_subject: 9,
                ..GenConfig::default()
            },
            GenConfig {
                poses: 0,
                ..GenConfig::default()
            },
            GenConfig {
                n_female: 0,
                n_male: 0,
                ..GenConfig::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }
}
