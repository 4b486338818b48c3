//! Scene directory layout: `cloud.json`, `depth.pgm` (16-bit, mm) and
//! `scene.json` (seed, intrinsics, ground-truth poses).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Scene;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthImage, PointCloud, Pose};

#[derive(Serialize, Deserialize)]
struct SceneMeta {
    seed: u64,
    cam: CameraIntrinsics,
    gt_poses: BTreeMap<String, Pose>,
}

pub(crate) fn save_scene(scene: &Scene, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    scene.cloud.save_json(&dir.join("cloud.json"))?;
    write_pgm(&scene.depth, &dir.join("depth.pgm"))?;
    let meta = SceneMeta { seed: scene.seed, cam: scene.cam, gt_poses: scene.gt_poses.clone() };
    let path = dir.join("scene.json");
    fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&path, e))
}

pub(crate) fn load_scene(dir: &Path) -> Result<Scene> {
    let cloud = PointCloud::load_json(&dir.join("cloud.json"))?;
    let depth = read_pgm(&dir.join("depth.pgm"))?;
    let path = dir.join("scene.json");
    let meta: SceneMeta = serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
    meta.cam.validate()?;
    if depth.width != meta.cam.width || depth.height != meta.cam.height {
        return Err(Error::Format { path: path.display().to_string(), message: "depth size does not match camera".into() });
    }
    Ok(Scene { cloud, gt_poses: meta.gt_poses, depth, cam: meta.cam, seed: meta.seed })
}

/// Binary 16-bit PGM, depth rounded to whole millimetres.
pub fn write_pgm(depth: &DepthImage, path: &Path) -> Result<()> {
    let mut buf = format!("P5\n{} {}\n65535\n", depth.width, depth.height).into_bytes();
    for &d in &depth.data {
        let v = d.round().clamp(0.0, 65535.0) as u16;
        buf.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<DepthImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Format { path: path.display().to_string(), message: m.to_string() };
    // header: magic, width, height, maxval separated by whitespace
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?.to_string());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("invalid header number"));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 65535 {
        return Err(bad("expected 16-bit PGM"));
    }
    let body = bytes.get(pos..).ok_or_else(|| bad("missing pixel data"))?;
    if body.len() != 2 * w * h {
        return Err(bad("pixel data length mismatch"));
    }
    let data = body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f32).collect();
    Ok(DepthImage { width: w, height: h, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{can, generate_scene};

    #[test]
    fn scene_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = generate_scene(&[can()], 0.4, 0.5, 21).unwrap();
        s.save_dir(dir.path()).unwrap();
        let back = Scene::load_dir(dir.path()).unwrap();
        assert_eq!(back.gt_poses, s.gt_poses);
        assert_eq!(back.seed, s.seed);
        assert_eq!(back.cloud.len(), s.cloud.len());
        for (a, b) in back.depth.data.iter().zip(&s.depth.data) {
            assert!((a - b).abs() <= 0.5);
        }
        // saving twice yields identical bytes
        let dir2 = tempfile::tempdir().unwrap();
        back.save_dir(dir2.path()).unwrap();
        let again = Scene::load_dir(dir2.path()).unwrap();
        assert_eq!(again.depth, back.depth);
    }

    #[test]
    fn rejects_malformed_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        fs::write(&p, b"P2\n2 2\n255\n0 0 0 0").unwrap();
        assert!(read_pgm(&p).is_err());
        fs::write(&p, b"P5\n2 2\n65535\n\0\0").unwrap();
        assert!(read_pgm(&p).is_err());
    }
}
