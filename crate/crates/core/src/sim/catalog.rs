//! Object-type and texture catalogs.
//!
//! The built-in catalog (`data/catalog.json`) holds exactly 29 object types
//! and 81 textures. Footprints are ASCII bitmaps (`#` occupied, `.` empty)
//! with an explicit anchor cell; the anchor is always occupied so that the
//! object's position is a valid pick point.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::util::sha256_hex;

pub const OBJECT_TYPE_COUNT: usize = 29;
pub const TEXTURE_COUNT: usize = 81;

const BUILTIN_CATALOG: &str = include_str!("../../data/catalog.json");

/// Index of an object type in its catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectTypeId(pub u16);

/// Index of a texture in its catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TextureId(pub u16);

/// Procedural pattern used to fill a footprint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Solid,
    Swirl,
    Paisley,
    Stripe,
    PolkaDot,
    Checker,
    Tiles,
    Brick,
    Wood,
    Rainbow,
    Tiger,
    Magma,
    Granite,
    Marble,
    Camouflage,
    Crystal,
    Metal,
    Plastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub name: String,
    pub rgb: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<[f64; 3]>,
    pub pattern: Pattern,
}

/// Occupied cells of an object relative to its anchor, in pixel units.
#[derive(Clone, Debug, PartialEq)]
pub struct Footprint {
    cells: Vec<(i32, i32)>,
    min: (i32, i32),
    max: (i32, i32),
    bitmap: Vec<bool>,
}

impl Footprint {
    fn from_rows(rows: &[String], anchor: [usize; 2]) -> Result<Self, SimError> {
        let mut cells = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '#' => cells.push((c as i32 - anchor[0] as i32, r as i32 - anchor[1] as i32)),
                    '.' => {}
                    other => {
                        return Err(SimError::Catalog(format!("unexpected footprint character {other:?}")))
                    }
                }
            }
        }
        Self::from_cells(cells)
    }

    pub fn from_cells(mut cells: Vec<(i32, i32)>) -> Result<Self, SimError> {
        if cells.is_empty() {
            return Err(SimError::Catalog("empty footprint".into()));
        }
        cells.sort_unstable();
        cells.dedup();
        if cells.binary_search(&(0, 0)).is_err() {
            return Err(SimError::Catalog("footprint anchor cell is not occupied".into()));
        }
        let min = cells.iter().fold((i32::MAX, i32::MAX), |m, c| (m.0.min(c.0), m.1.min(c.1)));
        let max = cells.iter().fold((i32::MIN, i32::MIN), |m, c| (m.0.max(c.0), m.1.max(c.1)));
        let w = (max.0 - min.0 + 1) as usize;
        let h = (max.1 - min.1 + 1) as usize;
        let mut bitmap = vec![false; w * h];
        for &(x, y) in &cells {
            bitmap[(y - min.1) as usize * w + (x - min.0) as usize] = true;
        }
        Ok(Self { cells, min, max, bitmap })
    }

    pub fn cells(&self) -> &[(i32, i32)] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, dx: i32, dy: i32) -> bool {
        if dx < self.min.0 || dx > self.max.0 || dy < self.min.1 || dy > self.max.1 {
            return false;
        }
        let w = (self.max.0 - self.min.0 + 1) as usize;
        self.bitmap[(dy - self.min.1) as usize * w + (dx - self.min.0) as usize]
    }

    /// Largest Chebyshev distance from the anchor to any occupied cell.
    pub fn radius(&self) -> i32 {
        [self.min.0, self.min.1, self.max.0, self.max.1]
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectType {
    pub name: String,
    pub tags: Vec<String>,
    pub footprint: Footprint,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ObjectTypeFile {
    name: String,
    tags: Vec<String>,
    footprint: Vec<String>,
    anchor: [usize; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CatalogFile {
    version: u32,
    workspace_px: usize,
    background: [f64; 3],
    object_types: Vec<ObjectTypeFile>,
    textures: Vec<Texture>,
}

/// The universe of object types and textures, plus rendering constants.
#[derive(Clone, Debug)]
pub struct Catalog {
    object_types: Vec<ObjectType>,
    textures: Vec<Texture>,
    background: [f32; 3],
    resolution: usize,
    type_index: HashMap<String, ObjectTypeId>,
    texture_index: HashMap<String, TextureId>,
    hash: String,
}

impl Catalog {
    /// The catalog shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_CATALOG).expect("built-in catalog is valid")
    }

    /// Parses and validates a catalog file. Counts are enforced strictly.
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let file: CatalogFile =
            serde_json::from_str(text).map_err(|e| SimError::Catalog(e.to_string()))?;
        let cat = Self::from_parts(file)?;
        if cat.object_types.len() != OBJECT_TYPE_COUNT {
            return Err(SimError::Catalog(format!(
                "expected {OBJECT_TYPE_COUNT} object types, found {}",
                cat.object_types.len()
            )));
        }
        if cat.textures.len() != TEXTURE_COUNT {
            return Err(SimError::Catalog(format!(
                "expected {TEXTURE_COUNT} textures, found {}",
                cat.textures.len()
            )));
        }
        Ok(cat)
    }

    fn from_parts(file: CatalogFile) -> Result<Self, SimError> {
        // Hash the canonical re-serialization so formatting differences don't matter.
        let canonical = serde_json::to_vec(&file).map_err(|e| SimError::Catalog(e.to_string()))?;
        let hash = sha256_hex(&canonical);

        let mut type_index = HashMap::new();
        let mut object_types = Vec::with_capacity(file.object_types.len());
        for (i, o) in file.object_types.into_iter().enumerate() {
            if type_index.insert(o.name.clone(), ObjectTypeId(i as u16)).is_some() {
                return Err(SimError::Catalog(format!("duplicate object type {:?}", o.name)));
            }
            let footprint = Footprint::from_rows(&o.footprint, o.anchor)
                .map_err(|e| SimError::Catalog(format!("{}: {e}", o.name)))?;
            object_types.push(ObjectType { name: o.name, tags: o.tags, footprint });
        }
        let mut texture_index = HashMap::new();
        let mut seen_looks = BTreeSet::new();
        for (i, t) in file.textures.iter().enumerate() {
            if texture_index.insert(t.name.clone(), TextureId(i as u16)).is_some() {
                return Err(SimError::Catalog(format!("duplicate texture {:?}", t.name)));
            }
            let look = (t.rgb.map(f64::to_bits), t.pattern as u8);
            if !seen_looks.insert(look) {
                return Err(SimError::Catalog(format!(
                    "texture {:?} duplicates another texture's colour and pattern",
                    t.name
                )));
            }
            if t.rgb.iter().chain(t.secondary.iter().flatten()).any(|v| !(0.0..=1.0).contains(v)) {
                return Err(SimError::Catalog(format!("texture {:?} has colour outside [0,1]", t.name)));
            }
        }
        Ok(Self {
            object_types,
            textures: file.textures,
            background: file.background.map(|v| v as f32),
            resolution: file.workspace_px,
            type_index,
            texture_index,
            hash,
        })
    }

    pub fn object_types(&self) -> &[ObjectType] {
        &self.object_types
    }

    pub fn textures(&self) -> &[Texture] {
        &self.textures
    }

    pub fn object_type(&self, id: ObjectTypeId) -> &ObjectType {
        &self.object_types[id.0 as usize]
    }

    pub fn texture(&self, id: TextureId) -> &Texture {
        &self.textures[id.0 as usize]
    }

    pub fn type_id(&self, name: &str) -> Option<ObjectTypeId> {
        self.type_index.get(name).copied()
    }

    pub fn texture_id(&self, name: &str) -> Option<TextureId> {
        self.texture_index.get(name).copied()
    }

    pub fn type_ids(&self) -> impl Iterator<Item = ObjectTypeId> {
        (0..self.object_types.len() as u16).map(ObjectTypeId)
    }

    pub fn texture_ids(&self) -> impl Iterator<Item = TextureId> {
        (0..self.textures.len() as u16).map(TextureId)
    }

    pub fn type_name(&self, id: ObjectTypeId) -> &str {
        &self.object_type(id).name
    }

    pub fn texture_name(&self, id: TextureId) -> &str {
        &self.texture(id).name
    }

    pub fn background(&self) -> [f32; 3] {
        self.background
    }

    /// Image side length in pixels.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// SHA-256 of the canonical catalog encoding, hex.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}
