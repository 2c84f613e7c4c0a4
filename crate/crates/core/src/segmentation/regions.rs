use std::collections::VecDeque;

use ndarray::Array2;

use super::slic::{four_neighbors, SegmentationMap};
use crate::autodiff::Matrix;
use crate::data_io::{GroundTruth, HyperspectralImage};
use crate::error::{Error, Result};
use crate::graph_learning::NeighborhoodSets;

/// Regions as graph nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionGraph {
    /// `n x B` mean spectra.
    pub features: Matrix,
    /// `n x 2` mean `(y, x)` pixel coordinates.
    pub centroids: Matrix,
    /// Sorted neighbor lists of the region adjacency graph (no self loops).
    pub adjacency: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
}

impl RegionGraph {
    pub fn n_regions(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    /// Dense boolean view of the base adjacency.
    pub fn adjacency_matrix(&self) -> Array2<bool> {
        let n = self.n_regions();
        let mut m = Array2::from_elem((n, n), false);
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            for &j in nbrs {
                m[[i, j]] = true;
            }
        }
        m
    }
}

/// Mean spectrum, centroid, size and 4-adjacency of every region.
pub fn region_features(image: &HyperspectralImage, seg: &SegmentationMap) -> Result<RegionGraph> {
    let (h, w) = (seg.height(), seg.width());
    if (h, w) != (image.height(), image.width()) {
        return Err(Error::Data(format!(
            "segmentation is {h}x{w} but image is {}x{}",
            image.height(),
            image.width()
        )));
    }
    let n = seg.n_regions();
    let b = image.bands();
    let mut features = Matrix::zeros((n, b));
    let mut centroids = Matrix::zeros((n, 2));
    let mut sizes = vec![0usize; n];
    let mut adjacency = vec![Vec::new(); n];

    for (p, &r) in seg.region_of().iter().enumerate() {
        sizes[r] += 1;
        for (f, v) in features.row_mut(r).iter_mut().zip(image.spectrum(p)) {
            *f += v;
        }
        centroids[[r, 0]] += (p / w) as f64;
        centroids[[r, 1]] += (p % w) as f64;
        for q in four_neighbors(p, h, w) {
            let s = seg.region_of()[q];
            if s != r {
                adjacency[r].push(s);
            }
        }
    }
    for r in 0..n {
        let k = sizes[r] as f64;
        features.row_mut(r).mapv_inplace(|v| v / k);
        centroids.row_mut(r).mapv_inplace(|v| v / k);
        adjacency[r].sort_unstable();
        adjacency[r].dedup();
    }
    Ok(RegionGraph {
        features,
        centroids,
        adjacency,
        sizes,
    })
}

/// Nodes within `hops` edges of each node, the node itself included.
pub fn hop_neighborhoods(adjacency: &[Vec<usize>], hops: usize) -> Result<NeighborhoodSets> {
    if hops == 0 {
        return Err(Error::Config("hop count must be >= 1".into()));
    }
    let n = adjacency.len();
    let mut depth = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    let mut lists = Vec::with_capacity(n);
    for start in 0..n {
        let mut seen = vec![start];
        depth[start] = 0;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            if depth[u] == hops {
                continue;
            }
            for &v in &adjacency[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    seen.push(v);
                    queue.push_back(v);
                }
            }
        }
        for &v in &seen {
            depth[v] = usize::MAX;
        }
        lists.push(seen);
    }
    Ok(NeighborhoodSets::from_lists(lists))
}

/// Majority ground-truth class of each region over its labeled pixels
/// (ties go to the lower class id); `0` for regions with no labeled pixel.
pub fn region_labels(seg: &SegmentationMap, gt: &GroundTruth) -> Result<Vec<u16>> {
    if (seg.height(), seg.width()) != (gt.height(), gt.width()) {
        return Err(Error::Data(
            "ground truth and segmentation sizes differ".into(),
        ));
    }
    let c = gt.n_classes();
    let mut votes = vec![vec![0usize; c + 1]; seg.n_regions()];
    for (&r, &l) in seg.region_of().iter().zip(gt.labels()) {
        if l > 0 {
            votes[r][l as usize] += 1;
        }
    }
    Ok(votes
        .iter()
        .map(|v| {
            let mut best = (0usize, 0u16);
            for (class, &count) in v.iter().enumerate().skip(1) {
                if count > best.0 {
                    best = (count, class as u16);
                }
            }
            best.1
        })
        .collect())
}
