use std::path::Path;

use crate::data_io::GroundTruth;
use crate::error::{Error, Result};
use crate::segmentation::SegmentationMap;

/// Pixel map where every pixel takes its region's class.
pub fn pixel_expand(region_pred: &[u16], seg: &SegmentationMap) -> Result<GroundTruth> {
    if region_pred.len() != seg.n_regions() {
        return Err(Error::Data(format!(
            "{} predictions for {} regions",
            region_pred.len(),
            seg.n_regions()
        )));
    }
    let labels = seg.region_of().iter().map(|&r| region_pred[r]).collect();
    GroundTruth::new(seg.height(), seg.width(), labels)
}

/// Most frequent class of each region in `map` (ties to the lower id,
/// unlabeled pixels counted as class 0).
pub fn region_majority(map: &GroundTruth, seg: &SegmentationMap) -> Result<Vec<u16>> {
    if (map.height(), map.width()) != (seg.height(), seg.width()) {
        return Err(Error::Data("map and segmentation sizes differ".into()));
    }
    let c = map.n_classes();
    let mut votes = vec![vec![0usize; c + 1]; seg.n_regions()];
    for (&r, &l) in seg.region_of().iter().zip(map.labels()) {
        votes[r][l as usize] += 1;
    }
    Ok(votes
        .iter()
        .map(|v| {
            let mut best = 0;
            for (k, &n) in v.iter().enumerate() {
                if n > v[best] {
                    best = k;
                }
            }
            best as u16
        })
        .collect())
}

/// RGB colors indexed by class; index 0 (unlabeled) is always black.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    pub colors: Vec<[u8; 3]>,
}

const BASE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

impl Palette {
    /// Black plus `n_classes` fixed colors; past the built-in sixteen the
    /// colors come from a fixed integer hash.
    pub fn for_classes(n_classes: usize) -> Self {
        let mut colors = vec![[0, 0, 0]];
        for c in 0..n_classes {
            colors.push(match BASE.get(c) {
                Some(&rgb) => rgb,
                None => {
                    let h = (c as u32).wrapping_mul(2_654_435_761);
                    [
                        (h >> 24) as u8 | 0x20,
                        (h >> 16) as u8 | 0x20,
                        (h >> 8) as u8 | 0x20,
                    ]
                }
            });
        }
        Self { colors }
    }
}

/// Binary PPM (P6) bytes of `map`, one pixel per cell.
pub fn render_ppm(map: &GroundTruth, palette: &Palette) -> Result<Vec<u8>> {
    if palette.colors.first() != Some(&[0, 0, 0]) {
        return Err(Error::Config("palette entry 0 must be black".into()));
    }
    let mut out = format!("P6\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.reserve(3 * map.labels().len());
    for &l in map.labels() {
        let rgb = palette.colors.get(l as usize).ok_or_else(|| {
            Error::Config(format!(
                "palette has {} colors, map uses class {l}",
                palette.colors.len()
            ))
        })?;
        out.extend_from_slice(rgb);
    }
    Ok(out)
}

pub fn render_map(map: &GroundTruth, palette: &Palette, path: &Path) -> Result<()> {
    let bytes = render_ppm(map, palette)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn single_region_expands_to_constant_map() {
        let seg = SegmentationMap::from_labels(2, 3, vec![0; 6]).unwrap();
        let map = pixel_expand(&[2], &seg).unwrap();
        assert_eq!((map.height(), map.width()), (2, 3));
        assert!(map.labels().iter().all(|&l| l == 2));
        assert!(pixel_expand(&[1, 2], &seg).is_err());
    }

    #[test]
    fn two_by_two_ppm() {
        let map = GroundTruth::new(2, 2, vec![1, 2, 2, 0]).unwrap();
        let p = Palette::for_classes(2);
        let bytes = render_ppm(&map, &p).unwrap();
        let mut expect = b"P6\n2 2\n255\n".to_vec();
        for rgb in [BASE[0], BASE[1], BASE[1], [0, 0, 0]] {
            expect.extend_from_slice(&rgb);
        }
        assert_eq!(bytes, expect);
        assert!(render_ppm(&GroundTruth::new(1, 1, vec![3]).unwrap(), &p).is_err());
    }

    #[test]
    fn unlabeled_map_is_black_and_rendering_is_repeatable() {
        let map = GroundTruth::new(3, 2, vec![0; 6]).unwrap();
        let p = Palette::for_classes(4);
        let bytes = render_ppm(&map, &p).unwrap();
        assert!(bytes[11..].iter().all(|&b| b == 0));
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
        render_map(&map, &p, &a).unwrap();
        render_map(&map, &p, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn large_palettes_stay_distinct_from_black() {
        let p = Palette::for_classes(40);
        assert_eq!(p.colors.len(), 41);
        assert!(p.colors[1..].iter().all(|c| *c != [0, 0, 0]));
    }

    proptest! {
        #[test]
        fn expansion_round_trips(regions in proptest::collection::vec(0usize..6, 24), preds in proptest::collection::vec(1u16..5, 6)) {
            // relabel so the ids are exactly 0..k
            let mut ids: Vec<usize> = regions.clone();
            ids.sort_unstable();
            ids.dedup();
            let region_of: Vec<usize> = regions.iter().map(|r| ids.binary_search(r).unwrap()).collect();
            let seg = SegmentationMap::from_labels(4, 6, region_of).unwrap();
            let pred = &preds[..ids.len()];
            let map = pixel_expand(pred, &seg).unwrap();
            prop_assert_eq!(region_majority(&map, &seg).unwrap(), pred.to_vec());
        }
    }
}
