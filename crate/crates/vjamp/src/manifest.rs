//! Ground-truth and training manifests.
//!
//! Ground truth has one line per image, `path n_faces x y w h [x y w h ...]`.
//! Training manifests list `path label` with label `pos` or `neg`. Paths
//! are relative to the manifest's directory. `#` starts a comment.

use std::path::{Path, PathBuf};

use vjamp_core::{GrayImage, Rect};

use crate::netpbm::{load_image, NetpbmError};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}:{line}: {msg}")]
    Syntax { path: PathBuf, line: usize, msg: String },
    #[error("{path}: face {rect:?} lies outside the {width}x{height} image")]
    OutsideImage {
        path: PathBuf,
        rect: Rect,
        width: usize,
        height: usize,
    },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: NetpbmError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub path: PathBuf,
    pub faces: Vec<Rect>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, t)| !t.is_empty())
}

fn read(path: &Path) -> Result<String, ManifestError> {
    std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn parse_ground_truth(text: &str, base: &Path, manifest: &Path) -> Result<Vec<GroundTruth>, ManifestError> {
    let mut out = Vec::new();
    for (line, t) in content_lines(text) {
        let syntax = |msg: String| ManifestError::Syntax {
            path: manifest.to_path_buf(),
            line,
            msg,
        };
        let n: usize = t
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| syntax("expected `path n_faces x y w h ...`".into()))?;
        if t.len() != 2 + 4 * n {
            return Err(syntax(format!("{n} faces need {} numbers, found {}", 4 * n, t.len() - 2)));
        }
        let nums: Vec<usize> = t[2..]
            .iter()
            .map(|s| s.parse().map_err(|_| syntax(format!("`{s}` is not a coordinate"))))
            .collect::<Result<_, _>>()?;
        let faces = nums.chunks_exact(4).map(|c| Rect::new(c[0], c[1], c[2], c[3])).collect();
        out.push(GroundTruth {
            path: base.join(t[0]),
            faces,
        });
    }
    Ok(out)
}

pub fn serialize_ground_truth(entries: &[(String, Vec<Rect>)]) -> String {
    let mut out = String::new();
    for (p, faces) in entries {
        out.push_str(p);
        out.push_str(&format!(" {}", faces.len()));
        for r in faces {
            out.push_str(&format!(" {} {} {} {}", r.x, r.y, r.w, r.h));
        }
        out.push('\n');
    }
    out
}

/// A corpus image with its faces, checked to lie inside the image.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub path: PathBuf,
    pub image: GrayImage,
    pub faces: Vec<Rect>,
}

pub fn load_corpus(manifest: &Path) -> Result<Vec<LabeledImage>, ManifestError> {
    let text = read(manifest)?;
    let entries = parse_ground_truth(&text, &base_dir(manifest), manifest)?;
    entries
        .into_iter()
        .map(|e| {
            let image = load_image(&e.path).map_err(|source| ManifestError::Image {
                path: e.path.clone(),
                source,
            })?;
            if let Some(r) = e.faces.iter().find(|r| !r.fits(image.width(), image.height())) {
                return Err(ManifestError::OutsideImage {
                    path: e.path.clone(),
                    rect: *r,
                    width: image.width(),
                    height: image.height(),
                });
            }
            Ok(LabeledImage {
                path: e.path,
                image,
                faces: e.faces,
            })
        })
        .collect()
}

pub fn parse_labels(text: &str, base: &Path, manifest: &Path) -> Result<Vec<(PathBuf, bool)>, ManifestError> {
    content_lines(text)
        .map(|(line, t)| {
            let positive = match t.as_slice() {
                [_, "pos"] => true,
                [_, "neg"] => false,
                _ => {
                    return Err(ManifestError::Syntax {
                        path: manifest.to_path_buf(),
                        line,
                        msg: "expected `path pos|neg`".into(),
                    })
                }
            };
            Ok((base.join(t[0]), positive))
        })
        .collect()
}

/// Training windows from a label manifest, in file order.
pub fn load_labeled_windows(manifest: &Path) -> Result<Vec<(GrayImage, bool)>, ManifestError> {
    let text = read(manifest)?;
    parse_labels(&text, &base_dir(manifest), manifest)?
        .into_iter()
        .map(|(path, positive)| {
            load_image(&path)
                .map(|img| (img, positive))
                .map_err(|source| ManifestError::Image { path, source })
        })
        .collect()
}

/// Every `.pgm`/`.ppm` file in a directory, sorted by name.
pub fn load_dir(dir: &Path) -> Result<Vec<GrayImage>, ManifestError> {
    let io = |source| ManifestError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "pgm" || e == "ppm"));
    paths.sort();
    paths
        .into_iter()
        .map(|path| load_image(&path).map_err(|source| ManifestError::Image { path, source }))
        .collect()
}
