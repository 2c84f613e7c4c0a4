use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data_io::{GroundTruth, HyperspectralImage};
use crate::error::{Error, Result};

/// Region id of every pixel, raster order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMap {
    height: usize,
    width: usize,
    region_of: Vec<usize>,
    n_regions: usize,
}

impl SegmentationMap {
    /// Wraps an existing labeling. Ids must be `0..n` with every id used.
    pub fn from_labels(height: usize, width: usize, region_of: Vec<usize>) -> Result<Self> {
        if region_of.len() != height * width || region_of.is_empty() {
            return Err(Error::Data(format!(
                "segmentation of {height}x{width} needs {} entries, got {}",
                height * width,
                region_of.len()
            )));
        }
        let n_regions = region_of.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; n_regions];
        for &r in &region_of {
            used[r] = true;
        }
        if let Some(r) = used.iter().position(|u| !u) {
            return Err(Error::Data(format!("region id {r} is unused")));
        }
        Ok(Self {
            height,
            width,
            region_of,
            n_regions,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn region_of(&self) -> &[usize] {
        &self.region_of
    }

    pub fn get(&self, y: usize, x: usize) -> usize {
        self.region_of[y * self.width + x]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_regions];
        for &r in &self.region_of {
            sizes[r] += 1;
        }
        sizes
    }

    /// True when every region forms a single 4-connected component.
    pub fn is_four_connected(&self) -> bool {
        let (_, comps) = components(&self.region_of, self.height, self.width);
        comps.len() == self.n_regions
    }

    /// Region ids in the 16-bit label-map format.
    pub fn to_label_map(&self) -> Result<GroundTruth> {
        if self.n_regions > u16::MAX as usize + 1 {
            return Err(Error::Data(format!(
                "{} regions do not fit a 16-bit map",
                self.n_regions
            )));
        }
        GroundTruth::new(
            self.height,
            self.width,
            self.region_of.iter().map(|&r| r as u16).collect(),
        )
    }
}

/// Parameters of [`slic_segment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicConfig {
    pub n_regions: usize,
    pub compactness: f64,
    pub max_iters: usize,
}

pub const DEFAULT_COMPACTNESS: f64 = 0.1;
pub const DEFAULT_SLIC_ITERS: usize = 10;

/// Default region count: about 100 pixels per region.
pub fn default_region_count(height: usize, width: usize) -> usize {
    (height * width).div_ceil(100)
}

struct Center {
    spectrum: Vec<f64>,
    y: f64,
    x: f64,
}

/// SLIC over full spectra of the band-standardized cube.
///
/// Assignment searches a `2S x 2S` window around each center with
/// `S = sqrt(HW / n)` and distance
/// `||spectral diff|| + (compactness / S) * ||spatial offset||`; ties go to
/// the lower center id. After convergence, every label keeps its largest
/// 4-connected piece and stray pieces join the adjacent region with the
/// closest mean spectrum.
pub fn slic_segment(
    image: &HyperspectralImage,
    n_target_regions: usize,
    compactness: f64,
    max_iters: usize,
) -> Result<SegmentationMap> {
    let (h, w) = (image.height(), image.width());
    if n_target_regions == 0 || n_target_regions > h * w {
        return Err(Error::Config(format!(
            "region count must lie in [1, {}], got {n_target_regions}",
            h * w
        )));
    }
    if !(compactness > 0.0) {
        return Err(Error::Config(format!(
            "compactness must be > 0, got {compactness}"
        )));
    }
    if max_iters == 0 {
        return Err(Error::Config("max_iters must be >= 1".into()));
    }

    let img = image.standardized();
    let step = ((h * w) as f64 / n_target_regions as f64).sqrt();
    let mut centers = initial_centers(&img, n_target_regions);
    let spatial_weight = compactness / step;

    let mut labels = vec![usize::MAX; h * w];
    for _ in 0..max_iters {
        let next = assign(&img, &centers, step, spatial_weight);
        let changed = next != labels;
        labels = next;
        update_centers(&img, &labels, &mut centers);
        if !changed {
            break;
        }
    }

    let labels = enforce_connectivity(&img, &labels);
    SegmentationMap::from_labels(h, w, labels)
}

fn initial_centers(img: &HyperspectralImage, n: usize) -> Vec<Center> {
    let (h, w) = (img.height(), img.width());
    let (ny, nx) = grid_shape(h, w, n);

    let gradient = |y: usize, x: usize| {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
        let (l, r) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (u, dn) = (y.saturating_sub(1), (y + 1).min(h - 1));
        d(img.pixel(y, r), img.pixel(y, l)) + d(img.pixel(dn, x), img.pixel(u, x))
    };

    let mut centers = Vec::with_capacity(ny * nx);
    for i in 0..ny {
        for j in 0..nx {
            let cy = ((2 * i + 1) * h) / (2 * ny);
            let cx = ((2 * j + 1) * w) / (2 * nx);
            let mut best = (gradient(cy, cx), cy, cx);
            for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = gradient(y, x);
                    if g < best.0 {
                        best = (g, y, x);
                    }
                }
            }
            let (_, y, x) = best;
            centers.push(Center {
                spectrum: img.pixel(y, x).to_vec(),
                y: y as f64,
                x: x as f64,
            });
        }
    }
    centers
}

/// Center grid with `ny * nx` as close to `n` as possible, preferring the
/// squarest cells.
fn grid_shape(h: usize, w: usize, n: usize) -> (usize, usize) {
    let mut best = (usize::MAX, f64::INFINITY, 1, 1);
    for ny in 1..=h.min(n) {
        let nx = ((n as f64 / ny as f64).round() as usize).clamp(1, w);
        let miss = (ny * nx).abs_diff(n);
        let skew = (h as f64 / ny as f64 - w as f64 / nx as f64).abs();
        if miss < best.0 || (miss == best.0 && skew < best.1) {
            best = (miss, skew, ny, nx);
        }
    }
    (best.2, best.3)
}

fn distance(spec: &[f64], y: usize, x: usize, c: &Center, spatial_weight: f64) -> f64 {
    let s: f64 = spec
        .iter()
        .zip(&c.spectrum)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let p = ((y as f64 - c.y).powi(2) + (x as f64 - c.x).powi(2)).sqrt();
    s + spatial_weight * p
}

fn assign(
    img: &HyperspectralImage,
    centers: &[Center],
    step: f64,
    spatial_weight: f64,
) -> Vec<usize> {
    let (h, w) = (img.height(), img.width());
    let mut best = vec![f64::INFINITY; h * w];
    let mut labels = vec![usize::MAX; h * w];
    for (k, c) in centers.iter().enumerate() {
        let y0 = (c.y - step).floor().max(0.0) as usize;
        let y1 = ((c.y + step).ceil() as usize).min(h - 1);
        let x0 = (c.x - step).floor().max(0.0) as usize;
        let x1 = ((c.x + step).ceil() as usize).min(w - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = y * w + x;
                let d = distance(img.pixel(y, x), y, x, c, spatial_weight);
                if d < best[p] {
                    best[p] = d;
                    labels[p] = k;
                }
            }
        }
    }
    // pixels outside every window fall back to the globally nearest center
    for p in 0..h * w {
        if labels[p] == usize::MAX {
            let (y, x) = (p / w, p % w);
            let mut nearest = (f64::INFINITY, 0);
            for (k, c) in centers.iter().enumerate() {
                let d = distance(img.pixel(y, x), y, x, c, spatial_weight);
                if d < nearest.0 {
                    nearest = (d, k);
                }
            }
            labels[p] = nearest.1;
        }
    }
    labels
}

fn update_centers(img: &HyperspectralImage, labels: &[usize], centers: &mut [Center]) {
    let b = img.bands();
    let w = img.width();
    let mut sums = vec![vec![0.0; b + 2]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (p, &k) in labels.iter().enumerate() {
        counts[k] += 1;
        let acc = &mut sums[k];
        for (a, v) in acc.iter_mut().zip(img.spectrum(p)) {
            *a += v;
        }
        acc[b] += (p / w) as f64;
        acc[b + 1] += (p % w) as f64;
    }
    for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
        if n == 0 {
            continue;
        }
        let n = n as f64;
        c.spectrum = s[..b].iter().map(|v| v / n).collect();
        c.y = s[b] / n;
        c.x = s[b + 1] / n;
    }
}

/// 4-connected components of equal labels: (component id per pixel,
/// pixel lists per component in discovery order).
fn components(labels: &[usize], h: usize, w: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut comp = vec![usize::MAX; h * w];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut pixels = Vec::new();
        comp[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            pixels.push(p);
            for q in four_neighbors(p, h, w) {
                if comp[q] == usize::MAX && labels[q] == labels[p] {
                    comp[q] = id;
                    queue.push_back(q);
                }
            }
        }
        comps.push(pixels);
    }
    (comp, comps)
}

pub(crate) fn four_neighbors(p: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (p / w, p % w);
    let up = (y > 0).then(|| p - w);
    let down = (y + 1 < h).then(|| p + w);
    let left = (x > 0).then(|| p - 1);
    let right = (x + 1 < w).then(|| p + 1);
    [up, left, right, down].into_iter().flatten()
}

fn mean_spectrum(img: &HyperspectralImage, pixels: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; img.bands()];
    for &p in pixels {
        for (a, v) in m.iter_mut().zip(img.spectrum(p)) {
            *a += v;
        }
    }
    let n = pixels.len() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

fn enforce_connectivity(img: &HyperspectralImage, labels: &[usize]) -> Vec<usize> {
    let (h, w) = (img.height(), img.width());
    let (comp_of, comps) = components(labels, h, w);

    // largest component per label is its anchor; ties go to the first found
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut anchor: Vec<Option<usize>> = vec![None; n_labels];
    for (c, pixels) in comps.iter().enumerate() {
        let l = labels[pixels[0]];
        match anchor[l] {
            Some(a) if comps[a].len() >= pixels.len() => {}
            _ => anchor[l] = Some(c),
        }
    }

    // owner[c] = label whose anchor absorbs component c
    let mut owner: Vec<Option<usize>> = vec![None; comps.len()];
    let mut region_mean: Vec<Vec<f64>> = vec![Vec::new(); n_labels];
    for (l, a) in anchor.iter().enumerate() {
        if let Some(a) = *a {
            owner[a] = Some(l);
            region_mean[l] = mean_spectrum(img, &comps[a]);
        }
    }

    let mut pending: Vec<usize> = (0..comps.len()).filter(|&c| owner[c].is_none()).collect();
    while !pending.is_empty() {
        let mut still = Vec::new();
        for &c in &pending {
            let mean = mean_spectrum(img, &comps[c]);
            let mut best: Option<(f64, usize)> = None;
            for &p in &comps[c] {
                for q in four_neighbors(p, h, w) {
                    let Some(l) = owner[comp_of[q]] else { continue };
                    if comp_of[q] == c {
                        continue;
                    }
                    let d: f64 = mean
                        .iter()
                        .zip(&region_mean[l])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum();
                    let better = match best {
                        None => true,
                        Some((bd, bl)) => d < bd || (d == bd && l < bl),
                    };
                    if better {
                        best = Some((d, l));
                    }
                }
            }
            match best {
                Some((_, l)) => owner[c] = Some(l),
                None => still.push(c),
            }
        }
        // the pixel grid is connected, so each pass resolves at least one piece
        debug_assert!(still.len() < pending.len());
        pending = still;
    }

    // compact ids in raster order of first appearance
    let mut remap = vec![usize::MAX; n_labels];
    let mut next = 0;
    let mut out = vec![0; h * w];
    for p in 0..h * w {
        let l = owner[comp_of[p]].expect("every component owned");
        if remap[l] == usize::MAX {
            remap[l] = next;
            next += 1;
        }
        out[p] = remap[l];
    }
    out
}
