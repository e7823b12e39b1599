use serde::{Deserialize, Serialize};

use super::{Gender, SubjectSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Availability {
    Shared,
    FemaleOnly,
    MaleOnly,
}

impl Availability {
    pub fn allows(self, gender: Gender) -> bool {
        match self {
            Availability::Shared => true,
            Availability::FemaleOnly => gender == Gender::Female,
            Availability::MaleOnly => gender == Gender::Male,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sleeves {
    /// Bare arms and a cropped top.
    None,
    Short,
    Long,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TorsoStyle {
    Plain,
    Striped,
    /// Open jacket over a shirt of the accent colour.
    OpenFront,
    /// Bib of the accent colour over the lower chest.
    Bib,
    /// Top ends above the waist.
    Cropped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Legwear {
    Trousers,
    Shorts,
    Skirt,
}

/// One outfit. Colours are linear 8-bit RGB before illumination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClothingSpec {
    pub clothing_id: usize,
    pub name: String,
    pub availability: Availability,
    pub torso: [u8; 3],
    pub sleeves: Sleeves,
    pub sleeve_color: [u8; 3],
    pub style: TorsoStyle,
    /// Front panel, bib or second stripe colour; unused for plain tops.
    pub accent: [u8; 3],
    pub legwear: Legwear,
    pub legs: [u8; 3],
    pub shoes: [u8; 3],
}

const JEANS: [u8; 3] = [52, 82, 138];
const DARK_SHOES: [u8; 3] = [34, 30, 28];

#[allow(clippy::too_many_arguments)]
fn outfit(
    clothing_id: usize,
    name: &str,
    availability: Availability,
    torso: [u8; 3],
    sleeves: Sleeves,
    sleeve_color: [u8; 3],
    style: TorsoStyle,
    accent: [u8; 3],
    legwear: Legwear,
    legs: [u8; 3],
    shoes: [u8; 3],
) -> ClothingSpec {
    ClothingSpec {
        clothing_id,
        name: name.to_string(),
        availability,
        torso,
        sleeves,
        sleeve_color,
        style,
        accent,
        legwear,
        legs,
        shoes,
    }
}

/// The 11 outfits: ids 0-4 shared, 5-7 female only, 8-10 male only.
#[rustfmt::skip]
pub fn clothing_catalog() -> Vec<ClothingSpec> {
    use Availability::*;
    use Legwear::*;
    use Sleeves::{Long, Short};
    use TorsoStyle::*;
    let none = [0, 0, 0];
    let white = [236, 236, 232];
    vec![
        outfit(0, "white t-shirt, jeans", Shared, white, Short, white, Plain, none, Trousers, JEANS, DARK_SHOES),
        outfit(1, "long sleeve shirt, jeans", Shared, [176, 52, 48], Long, [176, 52, 48], Plain, none, Trousers, JEANS, DARK_SHOES),
        outfit(2, "blue t-shirt, jeans", Shared, [40, 92, 200], Short, [40, 92, 200], Plain, none, Trousers, JEANS, [220, 220, 220]),
        outfit(3, "jacket over shirt, jeans", Shared, [96, 72, 48], Long, [96, 72, 48], OpenFront, white, Trousers, JEANS, DARK_SHOES),
        outfit(4, "overalls", Shared, [220, 196, 80], Short, [220, 196, 80], Bib, [62, 94, 150], Trousers, [62, 94, 150], [120, 80, 50]),
        outfit(5, "t-shirt, shorts", FemaleOnly, [226, 120, 160], Short, [226, 120, 160], Plain, none, Shorts, [188, 168, 118], [230, 230, 230]),
        outfit(6, "blouse, skirt", FemaleOnly, [240, 222, 200], Long, [240, 222, 200], Plain, none, Skirt, [32, 32, 64], DARK_SHOES),
        outfit(7, "sport top, leggings", FemaleOnly, [40, 170, 160], Sleeves::None, [40, 170, 160], Cropped, none, Trousers, [26, 26, 30], [230, 230, 230]),
        outfit(8, "suit", MaleOnly, [44, 46, 56], Long, [44, 46, 56], OpenFront, white, Trousers, [44, 46, 56], DARK_SHOES),
        outfit(9, "striped shirt, jeans", MaleOnly, [222, 222, 232], Long, [222, 222, 232], Striped, [58, 60, 160], Trousers, JEANS, DARK_SHOES),
        outfit(10, "shirt, black trousers", MaleOnly, [150, 190, 230], Long, [150, 190, 230], Plain, none, Trousers, [22, 22, 22], DARK_SHOES),
    ]
}

/// The 8 outfits a subject may wear: the shared ones and those of its gender,
/// in catalogue order.
pub fn clothing_for(subject: &SubjectSpec) -> Vec<ClothingSpec> {
    clothing_catalog()
        .into_iter()
        .filter(|c| c.availability.allows(subject.gender))
        .collect()
}
