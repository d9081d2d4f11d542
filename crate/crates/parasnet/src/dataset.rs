//! Dataset trees on disk.
//!
//! A dataset root holds one directory per class with zero-padded PGM files
//! and a `manifest.txt`:
//!
//! ```text
//! root/manifest.txt
//! root/others/00000.pgm …
//! root/crypto/00000.pgm …
//! root/giardia/00000.pgm …
//! ```
//!
//! `gen` writes a `train` and a `test` root side by side.

use std::fs;
use std::path::{Path, PathBuf};

use parasnet_core::exec::Executor;
use parasnet_core::image::{downscale_2x, Plane};
use parasnet_core::model::INPUT_SHAPE;
use parasnet_core::synth::{Dataset, LabeledImage, GENERATOR_VERSION};
use parasnet_core::{Class, Tensor};

use crate::error::{Error, Result};
use crate::pgm;

pub const MANIFEST: &str = "manifest.txt";
pub const TRAIN_DIR: &str = "train";
pub const TEST_DIR: &str = "test";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub split: String,
    pub generator_version: u32,
    pub seed: u64,
    pub counts: [usize; 3],
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = format!(
            "split {}\ngenerator_version {}\nseed {}\n",
            self.split, self.generator_version, self.seed
        );
        for class in Class::ALL {
            s.push_str(&format!("{} {}\n", class.name(), self.counts[class.index()]));
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut split = None;
        let mut version = None;
        let mut seed = None;
        let mut counts = [None; 3];
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::format(path, format!("line {}: expected `key value`, found {line:?}", n + 1));
            let (key, value) = line.trim().split_once(' ').ok_or_else(bad)?;
            let value = value.trim();
            match key {
                "split" => split = Some(value.to_string()),
                "generator_version" => version = Some(value.parse().map_err(|_| bad())?),
                "seed" => seed = Some(value.parse().map_err(|_| bad())?),
                _ => match Class::ALL.iter().find(|c| c.name() == key) {
                    Some(c) => counts[c.index()] = Some(value.parse().map_err(|_| bad())?),
                    None => return Err(Error::format(path, format!("line {}: unknown key {key:?}", n + 1))),
                },
            }
        }
        let missing = |what: &str| Error::format(path, format!("missing `{what}` entry"));
        let mut c = [0; 3];
        for class in Class::ALL {
            c[class.index()] = counts[class.index()].ok_or_else(|| missing(class.name()))?;
        }
        Ok(Self {
            split: split.ok_or_else(|| missing("split"))?,
            generator_version: version.ok_or_else(|| missing("generator_version"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            counts: c,
        })
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `dataset` under `root`. Refuses to mix with PGM files already in a
/// class directory, so stale images can never leak into a later read.
pub fn write_dataset<E: Executor>(dataset: &Dataset, root: &Path, split: &str, seed: u64, exec: &E) -> Result<()> {
    let mut jobs: Vec<(PathBuf, &Tensor<f32>)> = Vec::with_capacity(dataset.len());
    let mut next = [0usize; 3];
    for class in Class::ALL {
        let dir = root.join(class.name());
        create_dir(&dir)?;
        if pgm_files(&dir)?.next().is_some() {
            return Err(Error::format(&dir, "already contains PGM files; choose an empty output directory"));
        }
    }
    for s in &dataset.samples {
        let i = s.label.index();
        jobs.push((root.join(s.label.name()).join(format!("{:05}.pgm", next[i])), &s.pixels));
        next[i] += 1;
    }
    exec.map(jobs.len(), |i| pgm::write(&jobs[i].0, jobs[i].1))
        .into_iter()
        .collect::<Result<()>>()?;
    let manifest = Manifest {
        split: split.to_string(),
        generator_version: GENERATOR_VERSION,
        seed,
        counts: dataset.class_counts(),
    };
    let path = root.join(MANIFEST);
    fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))
}

fn pgm_files(dir: &Path) -> Result<impl Iterator<Item = PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "pgm") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files.into_iter())
}

/// Brings a decoded image to the network input size: native size passes
/// through, double size is 2×2 area-averaged, anything else is rejected.
pub fn to_input_size(image: Tensor<f32>, path: &Path) -> Result<Tensor<f32>> {
    let [h, w, _] = INPUT_SHAPE;
    match image.shape() {
        [ih, iw, 1] if (*ih, *iw) == (h, w) => Ok(image),
        [ih, iw, 1] if (*ih, *iw) == (2 * h, 2 * w) => {
            let plane = Plane::from_tensor(&image).map_err(|e| Error::core(path, e))?;
            Ok(downscale_2x(&plane).into_tensor())
        }
        [ih, iw, _] => Err(Error::format(
            path,
            format!("wrong dimensions {iw}x{ih}, expected {w}x{h} or {}x{}", 2 * w, 2 * h),
        )),
        _ => unreachable!("PGM decode yields rank-3 tensors"),
    }
}

/// Reads a dataset root in class-major, file-name order. Every class
/// directory must exist and hold at least one image; a manifest, when
/// present, must agree with the counts found.
pub fn read_dataset<E: Executor>(root: &Path, exec: &E) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::format(root, "dataset directory not found"));
    }
    let mut files: Vec<(PathBuf, Class)> = Vec::new();
    let mut counts = [0; 3];
    for class in Class::ALL {
        let dir = root.join(class.name());
        if !dir.is_dir() {
            return Err(Error::format(&dir, format!("missing directory for class {}", class.name())));
        }
        let found: Vec<PathBuf> = pgm_files(&dir)?.collect();
        if found.is_empty() {
            return Err(Error::format(&dir, format!("class {} has no images", class.name())));
        }
        counts[class.index()] = found.len();
        files.extend(found.into_iter().map(|p| (p, class)));
    }
    let manifest_path = root.join(MANIFEST);
    if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest = Manifest::parse(&text, &manifest_path)?;
        if manifest.counts != counts {
            return Err(Error::format(
                &manifest_path,
                format!("lists class counts {:?} but the directories hold {counts:?}", manifest.counts),
            ));
        }
    }
    let samples = exec.map(files.len(), |i| {
        let (path, class) = &files[i];
        let pixels = to_input_size(pgm::read(path)?, path)?;
        Ok(LabeledImage {
            pixels,
            label: *class,
            source: path.display().to_string(),
        })
    });
    Ok(Dataset {
        samples: samples.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

/// `(train, test)` from a directory written by `gen`.
pub fn read_splits<E: Executor>(dir: &Path, exec: &E) -> Result<(Dataset, Dataset)> {
    Ok((read_dataset(&dir.join(TRAIN_DIR), exec)?, read_dataset(&dir.join(TEST_DIR), exec)?))
}
