//! Frames, datasets, pain rescaling, on-disk ingestion and subject splits.
//!
//! On-disk layout, one directory per subject:
//!
//! ```text
//! root/<subject>/frames/<frame_id>.pgm     P5, 8-bit grayscale
//! root/<subject>/labels.csv                frame_id,pspi
//! root/<subject>/aus.csv                   frame_id,au<id>,...
//! root/<subject>/landmarks.csv             frame_id,au<id>_x,au<id>_y,...
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgm;
use crate::tensor::Tensor;

/// Highest PSPI score.
pub const PSPI_MAX: f64 = 15.0;
/// Number of discrete pain levels (0..=5).
pub const NUM_LEVELS: usize = 6;
/// Upper bound of an action unit intensity.
pub const AU_MAX: f64 = 5.0;

pub type AuId = u32;

/// Pixel coordinates: `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub subject_id: String,
    pub frame_id: String,
    /// `[1, H, W]`, values in `[0, 1]`
    pub image: Tensor,
    pub pspi: f64,
    pub level: u8,
    /// One intensity per entry of [`Dataset::au_ids`].
    pub au_values: Vec<f64>,
    /// One designated landmark per entry of [`Dataset::au_ids`].
    pub landmarks: Vec<Landmark>,
}

impl Frame {
    pub fn image_hw(&self) -> (usize, usize) {
        let s = self.image.shape();
        (s[1], s[2])
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Frame>,
    pub subjects: Vec<String>,
    pub au_ids: Vec<AuId>,
    /// Ground-truth pain-relevant AUs, known only for generated data.
    pub relevant_au_ids: Option<Vec<AuId>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn au_index(&self, id: AuId) -> Option<usize> {
        self.au_ids.iter().position(|&a| a == id)
    }

    /// Frame indices belonging to `subject`, in dataset order.
    pub fn subject_frames(&self, subject: &str) -> Vec<usize> {
        self.frames
            .iter()
            .enumerate()
            .filter(|(_, f)| f.subject_id == subject)
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks the cross-field invariants of every frame.
    pub fn validate(&self, table: &RescaleTable) -> Result<()> {
        let subjects: HashSet<&str> = self.subjects.iter().map(String::as_str).collect();
        let mut hw = None;
        for f in &self.frames {
            if !subjects.contains(f.subject_id.as_str()) {
                return Err(Error::Dataset(format!(
                    "frame {} has unlisted subject {}",
                    f.frame_id, f.subject_id
                )));
            }
            if f.au_values.len() != self.au_ids.len() || f.landmarks.len() != self.au_ids.len() {
                return Err(Error::Dataset(format!(
                    "frame {} has {} AU values and {} landmarks for {} AUs",
                    f.frame_id,
                    f.au_values.len(),
                    f.landmarks.len(),
                    self.au_ids.len()
                )));
            }
            if table.level(f.pspi)? != f.level {
                return Err(Error::Dataset(format!(
                    "frame {} level {} disagrees with pspi {}",
                    f.frame_id, f.level, f.pspi
                )));
            }
            let (h, w) = f.image_hw();
            if *hw.get_or_insert((h, w)) != (h, w) {
                return Err(Error::Dataset(format!("frame {} has a different image size", f.frame_id)));
            }
            check_landmarks(&f.frame_id, &f.landmarks, h, w)?;
        }
        Ok(())
    }
}

fn check_landmarks(frame_id: &str, lms: &[Landmark], h: usize, w: usize) -> Result<()> {
    for lm in lms {
        let inside = lm.x >= 0.0 && lm.y >= 0.0 && lm.x <= (w - 1) as f64 && lm.y <= (h - 1) as f64;
        if !inside {
            return Err(Error::Dataset(format!(
                "landmark ({}, {}) of frame {frame_id} lies outside the {w}x{h} image",
                lm.x, lm.y
            )));
        }
    }
    Ok(())
}

/// Monotone PSPI -> level mapping: the level is the number of thresholds
/// not exceeding the score.
///
/// The default thresholds `[1, 2, 3, 4, 6]` give 0->0, 1->1, 2->2, 3->3,
/// {4,5}->4 and [6,15]->5. This table is a configurable convention of this
/// crate, echoed in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescaleTable {
    pub thresholds: [f64; NUM_LEVELS - 1],
}

impl Default for RescaleTable {
    fn default() -> Self {
        Self {
            thresholds: [1.0, 2.0, 3.0, 4.0, 6.0],
        }
    }
}

impl RescaleTable {
    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if t.windows(2).any(|w| w[1] < w[0]) || t[0] <= 0.0 || t[NUM_LEVELS - 2] > PSPI_MAX {
            return Err(Error::Config(format!(
                "rescale thresholds {t:?} must be non-decreasing within (0, 15]"
            )));
        }
        Ok(())
    }

    pub fn level(&self, pspi: f64) -> Result<u8> {
        rescale_pain(pspi, self)
    }

    /// Integer PSPI scores that map to `level`.
    pub fn preimage(&self, level: u8) -> Vec<u32> {
        (0..=PSPI_MAX as u32)
            .filter(|&p| self.level(p as f64).ok() == Some(level))
            .collect()
    }
}

pub fn rescale_pain(pspi: f64, table: &RescaleTable) -> Result<u8> {
    if !(0.0..=PSPI_MAX).contains(&pspi) {
        return Err(Error::Range(format!("pspi {pspi} outside [0, 15]")));
    }
    Ok(table.thresholds.iter().filter(|&&t| t <= pspi).count() as u8)
}

/// Splits off every frame of `held_out` as the test set.
pub fn split_loso(ds: &Dataset, held_out: &str) -> Result<(Dataset, Dataset)> {
    if !ds.subjects.iter().any(|s| s == held_out) {
        return Err(Error::UnknownSubject(held_out.to_string()));
    }
    let (test, train): (Vec<Frame>, Vec<Frame>) =
        ds.frames.iter().cloned().partition(|f| f.subject_id == held_out);
    let part = |frames, subjects| Dataset {
        frames,
        subjects,
        au_ids: ds.au_ids.clone(),
        relevant_au_ids: ds.relevant_au_ids.clone(),
    };
    Ok((
        part(
            train,
            ds.subjects.iter().filter(|s| *s != held_out).cloned().collect(),
        ),
        part(test, vec![held_out.to_string()]),
    ))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// A parsed CSV: header plus rows keyed by `frame_id`, in file order.
struct Table {
    header: Vec<String>,
    rows: Vec<(String, Vec<f64>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err(path))?;
        let header: Vec<String> = rdr
            .headers()
            .map_err(csv_err(path))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.first().map(String::as_str) != Some("frame_id") {
            return Err(Error::Dataset(format!(
                "{}: first column must be frame_id",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err(path))?;
            let id = rec[0].to_string();
            if !seen.insert(id.clone()) {
                return Err(Error::Dataset(format!("{}: duplicate frame {id}", path.display())));
            }
            let vals = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>().map_err(|_| {
                        Error::Dataset(format!("{}: frame {id}: bad number {s:?}", path.display()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((id, vals));
        }
        Ok(Self { header, rows })
    }

    fn by_id(&self) -> HashMap<&str, &[f64]> {
        self.rows
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
            .collect()
    }
}

fn parse_au_header(path: &Path, header: &[String]) -> Result<Vec<AuId>> {
    header[1..]
        .iter()
        .map(|h| {
            h.strip_prefix("au")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Dataset(format!("{}: bad AU column {h:?}", path.display())))
        })
        .collect()
}

fn parse_landmark_header(path: &Path, header: &[String], au_ids: &[AuId]) -> Result<()> {
    let expected: Vec<String> = au_ids
        .iter()
        .flat_map(|a| [format!("au{a}_x"), format!("au{a}_y")])
        .collect();
    if header[1..] != expected[..] {
        return Err(Error::Dataset(format!(
            "{}: landmark columns {:?} do not match AU columns {:?}",
            path.display(),
            &header[1..],
            expected
        )));
    }
    Ok(())
}

/// Reads a dataset tree. A root without subject directories yields an
/// empty dataset.
pub fn load_dataset(root: &Path, table: &RescaleTable) -> Result<Dataset> {
    table.validate()?;
    let mut subject_dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    subject_dirs.sort();
    let mut ds = Dataset::default();
    let mut au_ids: Option<Vec<AuId>> = None;
    for dir in subject_dirs {
        let subject = dir
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Dataset(format!("non UTF-8 subject dir {}", dir.display())))?
            .to_string();
        let labels_path = dir.join("labels.csv");
        let aus_path = dir.join("aus.csv");
        let lm_path = dir.join("landmarks.csv");
        let labels = Table::read(&labels_path)?;
        if labels.header != ["frame_id", "pspi"] {
            return Err(Error::Dataset(format!(
                "{}: header must be frame_id,pspi",
                labels_path.display()
            )));
        }
        let aus = Table::read(&aus_path)?;
        let ids = parse_au_header(&aus_path, &aus.header)?;
        match &au_ids {
            None => au_ids = Some(ids.clone()),
            Some(prev) if *prev != ids => {
                return Err(Error::Dataset(format!(
                    "{}: AU columns {ids:?} differ from {prev:?}",
                    aus_path.display()
                )))
            }
            _ => {}
        }
        let lms = Table::read(&lm_path)?;
        parse_landmark_header(&lm_path, &lms.header, &ids)?;
        let aus_by = aus.by_id();
        let lms_by = lms.by_id();

        let frames_dir = dir.join("frames");
        let labelled: HashSet<&str> = labels.rows.iter().map(|(k, _)| k.as_str()).collect();
        if frames_dir.is_dir() {
            let mut on_disk: Vec<String> = fs::read_dir(&frames_dir)
                .map_err(|e| Error::io(&frames_dir, e))?
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    let p = e.path();
                    (p.extension().and_then(|s| s.to_str()) == Some("pgm"))
                        .then(|| p.file_stem().and_then(|s| s.to_str()).map(str::to_string))
                        .flatten()
                })
                .collect();
            on_disk.sort();
            if let Some(orphan) = on_disk.iter().find(|id| !labelled.contains(id.as_str())) {
                return Err(Error::Dataset(format!(
                    "subject {subject}: image {orphan} has no label row"
                )));
            }
        }
        for (frame_id, vals) in &labels.rows {
            let pspi = vals[0];
            let level = rescale_pain(pspi, table)
                .map_err(|e| Error::Dataset(format!("frame {frame_id}: {e}")))?;
            let au_values = aus_by
                .get(frame_id.as_str())
                .ok_or_else(|| Error::Dataset(format!("frame {frame_id} missing from {}", aus_path.display())))?
                .to_vec();
            if let Some(v) = au_values.iter().find(|v| !(0.0..=AU_MAX).contains(*v)) {
                return Err(Error::Dataset(format!("frame {frame_id}: AU value {v} outside [0, 5]")));
            }
            let coords = lms_by
                .get(frame_id.as_str())
                .ok_or_else(|| Error::Dataset(format!("frame {frame_id} missing from {}", lm_path.display())))?;
            let landmarks: Vec<Landmark> = coords
                .chunks_exact(2)
                .map(|c| Landmark { x: c[0], y: c[1] })
                .collect();
            let img_path = frames_dir.join(format!("{frame_id}.pgm"));
            if !img_path.is_file() {
                return Err(Error::Dataset(format!(
                    "frame {frame_id}: image file {} is missing",
                    img_path.display()
                )));
            }
            let image = pgm::read(&img_path)?;
            let (_, h, w) = image.chw()?;
            check_landmarks(frame_id, &landmarks, h, w)?;
            ds.frames.push(Frame {
                subject_id: subject.clone(),
                frame_id: frame_id.clone(),
                image,
                pspi,
                level,
                au_values,
                landmarks,
            });
        }
        ds.subjects.push(subject);
    }
    ds.au_ids = au_ids.unwrap_or_default();
    ds.validate(table)?;
    Ok(ds)
}

/// Writes a dataset in the layout read by [`load_dataset`]. Images are
/// quantized to 8 bits.
pub fn save_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    let mut by_subject: BTreeMap<&str, Vec<&Frame>> = BTreeMap::new();
    for s in &ds.subjects {
        by_subject.entry(s).or_default();
    }
    for f in &ds.frames {
        by_subject.entry(&f.subject_id).or_default().push(f);
    }
    for (subject, frames) in by_subject {
        let dir = root.join(subject);
        let frames_dir = dir.join("frames");
        fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        let mut labels = String::from("frame_id,pspi\n");
        let mut aus = String::from("frame_id");
        let mut lms = String::from("frame_id");
        for a in &ds.au_ids {
            aus.push_str(&format!(",au{a}"));
            lms.push_str(&format!(",au{a}_x,au{a}_y"));
        }
        aus.push('\n');
        lms.push('\n');
        for f in frames {
            labels.push_str(&format!("{},{}\n", f.frame_id, f.pspi));
            aus.push_str(&f.frame_id);
            for v in &f.au_values {
                aus.push_str(&format!(",{v}"));
            }
            aus.push('\n');
            lms.push_str(&f.frame_id);
            for lm in &f.landmarks {
                lms.push_str(&format!(",{},{}", lm.x, lm.y));
            }
            lms.push('\n');
            pgm::write(&frames_dir.join(format!("{}.pgm", f.frame_id)), &f.image)?;
        }
        for (name, body) in [("labels.csv", labels), ("aus.csv", aus), ("landmarks.csv", lms)] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_examples() {
        let t = RescaleTable::default();
        assert_eq!(rescale_pain(0.0, &t).unwrap(), 0);
        assert_eq!(rescale_pain(15.0, &t).unwrap(), 5);
        assert_eq!(rescale_pain(4.0, &t).unwrap(), 4);
        assert_eq!(rescale_pain(5.0, &t).unwrap(), 4);
        assert_eq!(rescale_pain(6.0, &t).unwrap(), 5);
        assert!(matches!(rescale_pain(15.5, &t), Err(Error::Range(_))));
        assert!(matches!(rescale_pain(-0.1, &t), Err(Error::Range(_))));
    }

    #[test]
    fn rescale_is_monotone_over_integer_scores() {
        let t = RescaleTable::default();
        let levels: Vec<u8> = (0..=15).map(|p| t.level(p as f64).unwrap()).collect();
        assert!(levels.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(t.preimage(4), vec![4, 5]);
        assert_eq!(t.preimage(5), (6..=15).collect::<Vec<_>>());
    }

    #[test]
    fn table_must_be_sorted() {
        let t = RescaleTable {
            thresholds: [1.0, 3.0, 2.0, 4.0, 6.0],
        };
        assert!(t.validate().is_err());
    }

    fn frame(subject: &str, id: &str) -> Frame {
        Frame {
            subject_id: subject.into(),
            frame_id: id.into(),
            image: Tensor::zeros(&[1, 4, 4]),
            pspi: 0.0,
            level: 0,
            au_values: vec![0.0],
            landmarks: vec![Landmark { x: 1.0, y: 1.0 }],
        }
    }

    fn two_subjects() -> Dataset {
        Dataset {
            frames: vec![frame("s1", "a"), frame("s2", "b"), frame("s1", "c")],
            subjects: vec!["s1".into(), "s2".into()],
            au_ids: vec![4],
            relevant_au_ids: None,
        }
    }

    #[test]
    fn loso_partitions_exactly() {
        let ds = two_subjects();
        let (train, test) = split_loso(&ds, "s1").unwrap();
        assert_eq!(test.frames.len(), 2);
        assert!(test.frames.iter().all(|f| f.subject_id == "s1"));
        assert_eq!(train.subjects, vec!["s2".to_string()]);
        let mut ids: Vec<_> = train
            .frames
            .iter()
            .chain(&test.frames)
            .map(|f| f.frame_id.clone())
            .collect();
        ids.sort();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(matches!(split_loso(&ds, "nobody"), Err(Error::UnknownSubject(_))));
    }

    #[test]
    fn landmark_outside_image_is_rejected() {
        let mut ds = two_subjects();
        ds.frames[0].landmarks[0] = Landmark { x: 4.0, y: 0.0 };
        assert!(ds.validate(&RescaleTable::default()).is_err());
    }
}
