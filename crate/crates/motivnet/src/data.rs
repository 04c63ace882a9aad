//! Datasets: a CIFAR-10 binary-format subset loader and two deterministic
//! synthetic generators for minutes-scale experiments.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const CIFAR_CLASSES: usize = 10;
const CIFAR_DIM: usize = 32;
const CIFAR_RECORD: usize = 1 + 3 * CIFAR_DIM * CIFAR_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SyntheticKind {
    Blobs,
    Spirals,
}

/// In-memory dataset with disjoint train/eval splits, already normalized.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// (C, H, W)
    pub input_shape: (usize, usize, usize),
    pub num_classes: usize,
    /// Row-major (n, C*H*W).
    pub train_x: Vec<f64>,
    pub train_y: Vec<usize>,
    pub eval_x: Vec<f64>,
    pub eval_y: Vec<usize>,
    /// Per-channel standardization stats computed on the train split.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Horizontal flip + 4-pixel-pad random crop on train batches.
    pub augment: bool,
}

impl Dataset {
    pub fn sample_dim(&self) -> usize {
        let (c, h, w) = self.input_shape;
        c * h * w
    }

    pub fn train_len(&self) -> usize {
        self.train_y.len()
    }

    pub fn eval_len(&self) -> usize {
        self.eval_y.len()
    }

    /// Assemble a train batch from sample indices. With an RNG and
    /// `augment` set, each image is randomly flipped and crop-shifted.
    pub fn train_batch(
        &self,
        indices: &[usize],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Vec<usize>)> {
        self.gather(&self.train_x, &self.train_y, indices, rng)
    }

    pub fn eval_batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        self.gather(&self.eval_x, &self.eval_y, indices, None)
    }

    fn gather(
        &self,
        xs: &[f64],
        ys: &[usize],
        indices: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Vec<usize>)> {
        let d = self.sample_dim();
        let (c, h, w) = self.input_shape;
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= ys.len() {
                return Err(Error::Data(format!(
                    "sample index {i} out of range (have {})",
                    ys.len()
                )));
            }
            let sample = &xs[i * d..(i + 1) * d];
            match rng.as_deref_mut() {
                Some(r) if self.augment => {
                    data.extend_from_slice(&augment_image(sample, c, h, w, r))
                }
                _ => data.extend_from_slice(sample),
            }
            labels.push(ys[i]);
        }
        let t = Tensor::from_vec(&[indices.len(), c, h, w], data)?;
        Ok((t, labels))
    }
}

/// Horizontal flip with probability 1/2, then a random crop from a 4-pixel
/// zero-padded canvas.
fn augment_image(sample: &[f64], c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    const PAD: usize = 4;
    let flip = rng.gen_bool(0.5);
    let dy = rng.gen_range(0..=2 * PAD);
    let dx = rng.gen_range(0..=2 * PAD);
    let mut out = vec![0.0; sample.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                // position in the padded canvas that lands at (y, x)
                let sy = y + dy;
                let sx = x + dx;
                if sy < PAD || sx < PAD || sy >= h + PAD || sx >= w + PAD {
                    continue;
                }
                let mut src_x = sx - PAD;
                if flip {
                    src_x = w - 1 - src_x;
                }
                out[(ch * h + y) * w + x] = sample[(ch * h + (sy - PAD)) * w + src_x];
            }
        }
    }
    out
}

/// Epoch-keyed deterministic shuffle of `0..n`.
pub fn shuffled_indices(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

fn read_cifar_file(path: &Path, pool_x: &mut Vec<u8>, pool_y: &mut Vec<u8>) -> Result<()> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() % CIFAR_RECORD != 0 {
        let full = bytes.len() / CIFAR_RECORD;
        return Err(Error::Data(format!(
            "{}: truncated record at byte {} ({} trailing bytes)",
            path.display(),
            full * CIFAR_RECORD,
            bytes.len() - full * CIFAR_RECORD
        )));
    }
    for (r, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = rec[0];
        if label as usize >= CIFAR_CLASSES {
            return Err(Error::Data(format!(
                "{}: invalid label {label} at byte {}",
                path.display(),
                r * CIFAR_RECORD
            )));
        }
        pool_y.push(label);
        pool_x.extend_from_slice(&rec[1..]);
    }
    Ok(())
}

/// Draw `total` sample indices from `labels`, class-stratified: each class
/// contributes an equal share (the first `total % classes` classes get one
/// extra), sampled without replacement with the given RNG.
fn stratified_indices(
    labels: &[u8],
    total: usize,
    classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut out = Vec::with_capacity(total);
    for (c, pool) in by_class.iter_mut().enumerate() {
        let want = total / classes + usize::from(c < total % classes);
        if pool.len() < want {
            return Err(Error::Data(format!(
                "class {c} has only {} samples, need {want}",
                pool.len()
            )));
        }
        pool.shuffle(rng);
        out.extend_from_slice(&pool[..want]);
    }
    Ok(out)
}

/// Load a stratified subset of the standard CIFAR-10 binary batches:
/// `data_batch_{1..5}.bin` for train, `test_batch.bin` for eval. Pixels are
/// scaled to [0,1] and standardized per channel with train-split stats.
pub fn load_cifar10_subset(
    dir: &Path,
    train_n: usize,
    eval_n: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut train_pool_x = Vec::new();
    let mut train_pool_y = Vec::new();
    for i in 1..=5 {
        let path = dir.join(format!("data_batch_{i}.bin"));
        if !path.exists() && i > 1 {
            break; // subsets shipped as fewer batches are fine
        }
        read_cifar_file(&path, &mut train_pool_x, &mut train_pool_y)?;
    }
    let mut eval_pool_x = Vec::new();
    let mut eval_pool_y = Vec::new();
    read_cifar_file(&dir.join("test_batch.bin"), &mut eval_pool_x, &mut eval_pool_y)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_idx = stratified_indices(&train_pool_y, train_n, CIFAR_CLASSES, &mut rng)?;
    let eval_idx = stratified_indices(&eval_pool_y, eval_n, CIFAR_CLASSES, &mut rng)?;

    let d = 3 * CIFAR_DIM * CIFAR_DIM;
    let collect = |idx: &[usize], xs: &[u8], ys: &[u8]| -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(idx.len() * d);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend(xs[i * d..(i + 1) * d].iter().map(|&b| b as f64 / 255.0));
            y.push(ys[i] as usize);
        }
        (x, y)
    };
    let (mut train_x, train_y) = collect(&train_idx, &train_pool_x, &train_pool_y);
    let (mut eval_x, eval_y) = collect(&eval_idx, &eval_pool_x, &eval_pool_y);

    let (mean, std) = channel_stats(&train_x, 3, CIFAR_DIM * CIFAR_DIM);
    standardize(&mut train_x, &mean, &std, 3, CIFAR_DIM * CIFAR_DIM);
    standardize(&mut eval_x, &mean, &std, 3, CIFAR_DIM * CIFAR_DIM);

    Ok(Dataset {
        input_shape: (3, CIFAR_DIM, CIFAR_DIM),
        num_classes: CIFAR_CLASSES,
        train_x,
        train_y,
        eval_x,
        eval_y,
        mean,
        std,
        augment: true,
    })
}

fn channel_stats(xs: &[f64], channels: usize, plane: usize) -> (Vec<f64>, Vec<f64>) {
    let d = channels * plane;
    let n = xs.len() / d;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for s in 0..n {
        for c in 0..channels {
            for p in 0..plane {
                mean[c] += xs[s * d + c * plane + p];
            }
        }
    }
    for m in &mut mean {
        *m /= (n * plane) as f64;
    }
    for s in 0..n {
        for c in 0..channels {
            for p in 0..plane {
                let v = xs[s * d + c * plane + p] - mean[c];
                var[c] += v * v;
            }
        }
    }
    let std = var
        .iter()
        .map(|v| (v / (n * plane) as f64).sqrt().max(1e-8))
        .collect();
    (mean, std)
}

fn standardize(xs: &mut [f64], mean: &[f64], std: &[f64], channels: usize, plane: usize) {
    let d = channels * plane;
    for s in 0..xs.len() / d {
        for c in 0..channels {
            for p in 0..plane {
                let v = &mut xs[s * d + c * plane + p];
                *v = (*v - mean[c]) / std[c];
            }
        }
    }
}

/// Deterministic synthetic dataset. `n` train samples split evenly across
/// classes; the eval split is a disjoint draw of n/5 (at least one per
/// class) from the same distribution.
pub fn make_synthetic(
    kind: SyntheticKind,
    n: usize,
    num_classes: usize,
    noise: f64,
    seed: u64,
    input_shape: (usize, usize, usize),
) -> Result<Dataset> {
    if num_classes < 1 || n < num_classes {
        return Err(Error::Config(format!(
            "need n >= num_classes >= 1, got n={n}, classes={num_classes}"
        )));
    }
    if noise < 0.0 {
        return Err(Error::Config(format!("noise must be >= 0, got {noise}")));
    }
    let (c, h, w) = input_shape;
    let d = c * h * w;
    if d == 0 || (kind == SyntheticKind::Spirals && d < 2) {
        return Err(Error::Config(format!(
            "input shape {input_shape:?} too small for {kind:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval_n = (n / 5).max(num_classes);

    let mut centroids = vec![0.0; num_classes * d];
    if kind == SyntheticKind::Blobs {
        for v in &mut centroids {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let emit = |count: usize, rng: &mut ChaCha8Rng| -> (Vec<f64>, Vec<usize>) {
        let mut xs = Vec::with_capacity(count * d);
        let mut ys = Vec::with_capacity(count);
        for i in 0..count {
            // round-robin keeps class counts exactly balanced
            let class = i % num_classes;
            match kind {
                SyntheticKind::Blobs => {
                    for j in 0..d {
                        let g: f64 = rng.sample(StandardNormal);
                        xs.push(centroids[class * d + j] + noise * g);
                    }
                }
                SyntheticKind::Spirals => {
                    let t: f64 = rng.gen_range(0.0..1.0);
                    let angle =
                        t * 3.0 * std::f64::consts::PI + 2.0 * std::f64::consts::PI * class as f64
                            / num_classes as f64;
                    let r = 0.1 + 0.9 * t;
                    let gx: f64 = rng.sample(StandardNormal);
                    let gy: f64 = rng.sample(StandardNormal);
                    let mut point = vec![0.0; d];
                    point[0] = r * angle.cos() + noise * gx;
                    point[1] = r * angle.sin() + noise * gy;
                    xs.extend_from_slice(&point);
                }
            }
            ys.push(class);
        }
        (xs, ys)
    };
    let (mut train_x, train_y) = emit(n, &mut rng);
    let (mut eval_x, eval_y) = emit(eval_n, &mut rng);

    let (mean, std) = channel_stats(&train_x, c, h * w);
    standardize(&mut train_x, &mean, &std, c, h * w);
    standardize(&mut eval_x, &mean, &std, c, h * w);

    Ok(Dataset {
        input_shape,
        num_classes,
        train_x,
        train_y,
        eval_x,
        eval_y,
        mean,
        std,
        augment: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fake_cifar(dir: &Path, records_per_file: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut write = |name: &str| {
            let mut bytes = Vec::new();
            for r in 0..records_per_file {
                bytes.push((r % CIFAR_CLASSES) as u8);
                for _ in 0..CIFAR_RECORD - 1 {
                    bytes.push(rng.gen());
                }
            }
            std::fs::write(dir.join(name), bytes).unwrap();
        };
        for i in 1..=5 {
            write(&format!("data_batch_{i}.bin"));
        }
        write("test_batch.bin");
    }

    #[test]
    fn cifar_stratified_counts_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        write_fake_cifar(dir.path(), 200, 0);
        let a = load_cifar10_subset(dir.path(), 100, 50, 7).unwrap();
        let mut counts = vec![0usize; 10];
        for &y in &a.train_y {
            counts[y] += 1;
        }
        assert!(counts.iter().all(|&c| c == 10), "{counts:?}");
        assert_eq!(a.eval_len(), 50);
        let b = load_cifar10_subset(dir.path(), 100, 50, 7).unwrap();
        assert_eq!(a.train_x, b.train_x);
        assert_eq!(a.train_y, b.train_y);
        let c = load_cifar10_subset(dir.path(), 100, 50, 8).unwrap();
        assert_ne!(a.train_x, c.train_x);
    }

    #[test]
    fn truncated_file_reports_byte_offset() {
        let dir = tempfile::tempdir().unwrap();
        write_fake_cifar(dir.path(), 20, 0);
        let path = dir.path().join("data_batch_1.bin");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(3 * CIFAR_RECORD + 100);
        std::fs::write(&path, bytes).unwrap();
        let err = load_cifar10_subset(dir.path(), 10, 10, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(&format!("byte {}", 3 * CIFAR_RECORD)), "{msg}");
    }

    #[test]
    fn missing_test_batch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write_fake_cifar(dir.path(), 20, 0);
        std::fs::remove_file(dir.path().join("test_batch.bin")).unwrap();
        assert!(load_cifar10_subset(dir.path(), 10, 10, 0).is_err());
    }

    #[test]
    fn blobs_noise_zero_is_centroid_separable() {
        let ds = make_synthetic(SyntheticKind::Blobs, 60, 3, 0.0, 5, (1, 1, 4)).unwrap();
        // 1-nearest-centroid with centroids estimated from train data
        let d = ds.sample_dim();
        let mut centroids = vec![0.0; 3 * d];
        let mut counts = [0usize; 3];
        for (i, &y) in ds.train_y.iter().enumerate() {
            counts[y] += 1;
            for j in 0..d {
                centroids[y * d + j] += ds.train_x[i * d + j];
            }
        }
        for y in 0..3 {
            for j in 0..d {
                centroids[y * d + j] /= counts[y] as f64;
            }
        }
        let mut correct = 0;
        for (i, &y) in ds.eval_y.iter().enumerate() {
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = (0..d)
                        .map(|j| (ds.eval_x[i * d + j] - centroids[a * d + j]).powi(2))
                        .sum();
                    let db: f64 = (0..d)
                        .map(|j| (ds.eval_x[i * d + j] - centroids[b * d + j]).powi(2))
                        .sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            correct += usize::from(best == y);
        }
        assert_eq!(correct, ds.eval_len());
    }

    #[test]
    fn spirals_class_counts_are_exact() {
        let ds = make_synthetic(SyntheticKind::Spirals, 3000, 3, 0.05, 1, (1, 1, 2)).unwrap();
        let mut counts = [0usize; 3];
        for &y in &ds.train_y {
            counts[y] += 1;
        }
        assert_eq!(counts, [1000, 1000, 1000]);
    }

    #[test]
    fn synthetic_same_seed_identical() {
        let a = make_synthetic(SyntheticKind::Spirals, 300, 3, 0.1, 9, (1, 1, 2)).unwrap();
        let b = make_synthetic(SyntheticKind::Spirals, 300, 3, 0.1, 9, (1, 1, 2)).unwrap();
        assert_eq!(a.train_x, b.train_x);
        assert_eq!(a.eval_x, b.eval_x);
    }

    #[test]
    fn shuffle_is_epoch_keyed() {
        let a = shuffled_indices(3, 0, 100);
        let b = shuffled_indices(3, 0, 100);
        let c = shuffled_indices(3, 1, 100);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut sorted = c.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn augmentation_only_moves_pixels() {
        // with zero padding shifts can drop pixels but never invent values
        let ds = Dataset {
            input_shape: (1, 8, 8),
            num_classes: 2,
            train_x: (0..64).map(|v| v as f64 + 1.0).collect(),
            train_y: vec![0],
            eval_x: vec![],
            eval_y: vec![],
            mean: vec![0.0],
            std: vec![1.0],
            augment: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (batch, _) = ds.train_batch(&[0], Some(&mut rng)).unwrap();
        for &v in batch.data() {
            assert!(v == 0.0 || ds.train_x.contains(&v));
        }
    }
}
