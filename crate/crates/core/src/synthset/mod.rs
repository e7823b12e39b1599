//! Procedural pedestrian dataset: parametric subjects, outfits, walk-cycle
//! poses, hemisphere cameras and a small deterministic rasterizer.

mod clothing;
mod dataset;
mod image;
mod pose;
mod render;

pub use clothing::{
    clothing_catalog, clothing_for, Availability, ClothingSpec, Legwear, Sleeves, TorsoStyle,
};
pub use dataset::{
    generate_dataset, load_external_dataset, load_images, partition, read_manifest, reduce_poses,
    reduce_subjects, render_record, write_manifest, DatasetHeader, DatasetManifest,
    ExternalDataset, GenConfig, ImageFormat, ImageRecord, NamingRule, Reject, Split, HEADER_FILE,
    MANIFEST_FILE,
};
pub use image::RgbImage;
pub use pose::{camera_id, sample_camera, sample_poses, CameraSample, JointAngles, PoseSpec};
pub use render::{render, Figure};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkinTone {
    Caucasian,
    Dark,
    Beige,
}

impl SkinTone {
    pub const ALL: [SkinTone; 3] = [SkinTone::Caucasian, SkinTone::Dark, SkinTone::Beige];

    pub fn rgb(self) -> [u8; 3] {
        match self {
            SkinTone::Caucasian => [234, 192, 168],
            SkinTone::Dark => [112, 72, 52],
            SkinTone::Beige => [212, 172, 122],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HairStyle {
    Shaved,
    Short,
    Ponytail,
    Long,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hair {
    pub style: HairStyle,
    pub colour: [u8; 3],
}

/// Black, dark brown, chestnut, blond, auburn, grey.
pub const HAIR_COLOURS: [[u8; 3]; 6] = [
    [28, 24, 22],
    [66, 42, 28],
    [118, 74, 40],
    [206, 170, 104],
    [142, 58, 30],
    [160, 156, 150],
];

/// Mixture weights over the three body types.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SomatotypeMix {
    pub w_ecto: f64,
    pub w_meso: f64,
    pub w_endo: f64,
}

impl SomatotypeMix {
    pub fn new(w_ecto: f64, w_meso: f64, w_endo: f64) -> Result<Self> {
        let m = Self {
            w_ecto,
            w_meso,
            w_endo,
        };
        m.validate()?;
        Ok(m)
    }

    pub const ECTOMORPH: Self = Self {
        w_ecto: 1.0,
        w_meso: 0.0,
        w_endo: 0.0,
    };
    pub const MESOMORPH: Self = Self {
        w_ecto: 0.0,
        w_meso: 1.0,
        w_endo: 0.0,
    };
    pub const ENDOMORPH: Self = Self {
        w_ecto: 0.0,
        w_meso: 0.0,
        w_endo: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        let w = self.weights();
        if w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config(format!(
                "negative somatotype weight in {w:?}"
            )));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "somatotype weights {w:?} do not sum to 1"
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> [f64; 3] {
        [self.w_ecto, self.w_meso, self.w_endo]
    }

    /// Weighted blend of per-type values.
    pub fn blend(&self, ecto: f64, meso: f64, endo: f64) -> f64 {
        self.w_ecto * ecto + self.w_meso * meso + self.w_endo * endo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub subject_id: usize,
    pub gender: Gender,
    pub somatotype: SomatotypeMix,
    pub height_scale: f64,
    pub width_scale: f64,
    /// Relative thickness difference between left and right limbs.
    pub limb_asymmetry: f64,
    pub skin_tone: SkinTone,
    pub hair: Hair,
}

/// Share of each skin tone in the reference population of 50.
const SKIN_TONE_COUNTS: [usize; 3] = [16, 16, 18];

/// `n_female` female subjects (ids `0..n_female`) followed by `n_male`
/// male ones.
pub fn make_subjects(n_female: usize, n_male: usize, rng: &mut SeededRng) -> Vec<SubjectSpec> {
    let n = n_female + n_male;
    let mixes = stratified_simplex(n, rng);
    let mut tones = allocate_skin_tones(n);
    rng.shuffle(&mut tones);
    // Colours cycle through a shuffled palette so small casts rarely repeat.
    let mut palette = HAIR_COLOURS;
    rng.shuffle(&mut palette);
    (0..n)
        .map(|i| SubjectSpec {
            subject_id: i,
            gender: if i < n_female {
                Gender::Female
            } else {
                Gender::Male
            },
            somatotype: mixes[i],
            height_scale: 1.0 + rng.range(-0.06, 0.06),
            width_scale: 1.0 + rng.range(-0.06, 0.06),
            limb_asymmetry: rng.range(-0.08, 0.08),
            skin_tone: tones[i],
            hair: Hair {
                style: hair_style(i < n_female, rng.uniform()),
                colour: palette[i % palette.len()],
            },
        })
        .collect()
}

fn hair_style(female: bool, u: f64) -> HairStyle {
    let (styles, cumulative) = if female {
        (
            [HairStyle::Long, HairStyle::Ponytail, HairStyle::Short],
            [0.45, 0.8, 1.0],
        )
    } else {
        (
            [HairStyle::Short, HairStyle::Shaved, HairStyle::Long],
            [0.6, 0.85, 1.0],
        )
    };
    let k = cumulative.iter().position(|&c| u < c).unwrap_or(2);
    styles[k]
}

/// Skin tones in the 16/16/18 proportion scaled to `n` by largest remainder.
pub fn allocate_skin_tones(n: usize) -> Vec<SkinTone> {
    let total: usize = SKIN_TONE_COUNTS.iter().sum();
    let exact: Vec<f64> = SKIN_TONE_COUNTS
        .iter()
        .map(|&c| (c * n) as f64 / total as f64)
        .collect();
    let mut counts: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    // Largest fractional part first; ties go to the later tone, which is
    // also the larger share.
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(b.cmp(&a))
    });
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    SkinTone::ALL
        .iter()
        .zip(&counts)
        .flat_map(|(&t, &c)| std::iter::repeat(t).take(c))
        .collect()
}

/// `n` mixes from the smallest simplex grid with at least `n` points,
/// chosen without replacement and jittered inside their cell.
fn stratified_simplex(n: usize, rng: &mut SeededRng) -> Vec<SomatotypeMix> {
    if n == 0 {
        return Vec::new();
    }
    let mut m = 0usize;
    while (m + 1) * (m + 2) / 2 < n {
        m += 1;
    }
    let mut grid = Vec::new();
    for i in 0..=m {
        for j in 0..=m - i {
            grid.push([i, j, m - i - j]);
        }
    }
    let picks = rng.sample_indices(grid.len(), n);
    let step = if m == 0 { 1.0 } else { 1.0 / m as f64 };
    picks
        .into_iter()
        .map(|p| {
            let mut w = [0.0; 3];
            for (k, wk) in w.iter_mut().enumerate() {
                let base = grid[p][k] as f64 * step;
                *wk = (base + rng.range(0.0, 0.25) * step).max(0.0);
            }
            let s: f64 = w.iter().sum();
            SomatotypeMix {
                w_ecto: w[0] / s,
                w_meso: w[1] / s,
                w_endo: w[2] / s,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_population_skin_tones() {
        let mut rng = SeededRng::new(1);
        let subjects = make_subjects(25, 25, &mut rng);
        assert_eq!(subjects.len(), 50);
        let count = |t| subjects.iter().filter(|s| s.skin_tone == t).count();
        assert_eq!(
            [
                count(SkinTone::Caucasian),
                count(SkinTone::Dark),
                count(SkinTone::Beige)
            ],
            [16, 16, 18]
        );
        assert_eq!(
            subjects.iter().filter(|s| s.gender == Gender::Male).count(),
            25
        );
    }

    #[test]
    fn single_male() {
        let s = make_subjects(0, 1, &mut SeededRng::new(2));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].gender, Gender::Male);
        s[0].somatotype.validate().unwrap();
    }

    #[test]
    fn small_populations_round_by_largest_remainder() {
        let tally = |n| {
            let t = allocate_skin_tones(n);
            SkinTone::ALL.map(|k| t.iter().filter(|&&x| x == k).count())
        };
        assert_eq!(tally(10), [3, 3, 4]);
        assert_eq!(tally(1), [0, 0, 1]);
        assert_eq!(tally(0), [0, 0, 0]);
        assert_eq!(tally(100), [32, 32, 36]);
    }

    #[test]
    fn ten_subjects_cover_the_simplex_corners() {
        let s = make_subjects(5, 5, &mut SeededRng::new(3));
        for k in 0..3 {
            let best = s
                .iter()
                .map(|x| x.somatotype.weights()[k])
                .fold(0.0, f64::max);
            assert!(best > 0.75, "type {k} max weight {best}");
        }
    }

    #[test]
    fn six_subjects_get_six_hair_colours() {
        let s = make_subjects(3, 3, &mut SeededRng::new(4));
        let mut colours: Vec<[u8; 3]> = s.iter().map(|x| x.hair.colour).collect();
        colours.sort();
        let mut all = HAIR_COLOURS.to_vec();
        all.sort();
        assert_eq!(colours, all);
    }

    #[test]
    fn hair_styles_follow_gender() {
        assert_eq!(hair_style(true, 0.0), HairStyle::Long);
        assert_eq!(hair_style(true, 0.5), HairStyle::Ponytail);
        assert_eq!(hair_style(true, 0.99), HairStyle::Short);
        assert_eq!(hair_style(false, 0.1), HairStyle::Short);
        assert_eq!(hair_style(false, 0.7), HairStyle::Shaved);
        assert_eq!(hair_style(false, 0.9), HairStyle::Long);
        let s = make_subjects(200, 200, &mut SeededRng::new(5));
        let shaved = |g| {
            s.iter()
                .filter(|x| x.gender == g && x.hair.style == HairStyle::Shaved)
                .count()
        };
        assert_eq!(shaved(Gender::Female), 0);
        assert!((30..70).contains(&shaved(Gender::Male)));
    }

    #[test]
    fn rejects_bad_mixes() {
        assert!(SomatotypeMix::new(0.5, 0.5, 0.1).is_err());
        assert!(SomatotypeMix::new(-0.1, 0.6, 0.5).is_err());
        assert!(SomatotypeMix::new(0.2, 0.3, 0.5).is_ok());
    }
}
