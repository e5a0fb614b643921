//! Fibril chains: rigid replication of β-sheet chains, translation fitting,
//! RMSD and steric contact screening.

use std::collections::{BTreeMap, HashSet};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default steric contact threshold in Å (twice the carbon vdW radius).
pub const DEFAULT_CONTACT_THRESHOLD: f64 = 3.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Residue-qualified name such as `ALA4.CB`.
    pub name: String,
    pub position: Vector3<f64>,
}

impl Atom {
    pub fn new(name: impl Into<String>, position: Vector3<f64>) -> Self {
        Self {
            name: name.into(),
            position,
        }
    }

    /// The part after the last `.`, e.g. `CB` for `ALA4.CB`.
    pub fn atom_type(&self) -> &str {
        self.name.rsplit('.').next().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub name: char,
    pub atoms: Vec<Atom>,
}

impl Chain {
    /// Fails if two atoms share a name.
    pub fn new(name: char, atoms: Vec<Atom>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &atoms {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::ChainMismatch(format!(
                    "duplicate atom name {} in chain {name}",
                    a.name
                )));
            }
        }
        Ok(Self { name, atoms })
    }

    pub fn atom(&self, name: &str) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.name == name)
    }

    pub fn translated(&self, by: &Vector3<f64>, name: char) -> Chain {
        Chain {
            name,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom::new(a.name.clone(), a.position + by))
                .collect(),
        }
    }
}

/// `p ↦ R p + t` with orthogonal `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl AffineTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if !(defect <= 1e-10) {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthogonal (‖RᵀR − I‖ = {defect:.3e})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Diagonal sign-flip rotation, the only kind the fibril templates use.
    pub fn diagonal(signs: [f64; 3], translation: Vector3<f64>) -> Result<Self> {
        Self::new(Matrix3::from_diagonal(&Vector3::from(signs)), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

pub fn apply_transform(chain: &Chain, transform: &AffineTransform, new_name: char) -> Chain {
    Chain {
        name: new_name,
        atoms: chain
            .atoms
            .iter()
            .map(|a| Atom::new(a.name.clone(), transform.apply(&a.position)))
            .collect(),
    }
}

/// Least-squares `t` for `R sᵢ + t ≈ τᵢ`, i.e. `mean(τᵢ − R sᵢ)`.
pub fn fit_translation(
    rotation: &Matrix3<f64>,
    pairs: &[(Vector3<f64>, Vector3<f64>)],
) -> Result<Vector3<f64>> {
    if pairs.is_empty() {
        return Err(Error::InvalidTransform(
            "translation fit needs at least one point pair".into(),
        ));
    }
    let sum = pairs
        .iter()
        .fold(Vector3::zeros(), |acc, (s, t)| acc + (t - rotation * s));
    Ok(sum / pairs.len() as f64)
}

/// Template family of a fibril model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[serde(rename = "3nvf")]
    Nvf,
    #[serde(rename = "3nvg")]
    Nvg,
    #[serde(rename = "3nvh")]
    Nvh,
}

impl Family {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "3nvf" => Some(Self::Nvf),
            "3nvg" => Some(Self::Nvg),
            "3nvh" => Some(Self::Nvh),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Nvf => "3nvf",
            Self::Nvg => "3nvg",
            Self::Nvh => "3nvh",
        }
    }

    /// Sign pattern of the sheet-to-sheet rotation.
    pub fn sheet_signs(self) -> [f64; 3] {
        match self {
            Self::Nvf => [-1.0, -1.0, 1.0],
            Self::Nvg | Self::Nvh => [-1.0, 1.0, -1.0],
        }
    }

    /// Sheet A → sheet H map of the unmodified template.
    pub fn template_sheet(self) -> AffineTransform {
        let t = match self {
            Self::Nvf => Vector3::new(27.546, 0.0, 0.0),
            Self::Nvg => Vector3::new(-27.28, 2.385, 15.738),
            Self::Nvh => Vector3::new(0.0, 2.437, -15.553),
        };
        AffineTransform::diagonal(self.sheet_signs(), t).expect("sign matrices are orthogonal")
    }

    /// Strand-to-strand stacking vector along the fibril axis.
    pub fn stack(self) -> Vector3<f64> {
        match self {
            Self::Nvf => Vector3::new(0.0, 0.0, 4.8),
            Self::Nvg => Vector3::new(0.0, 4.77, 0.0),
            Self::Nvh => Vector3::new(0.0, 4.87, 0.0),
        }
    }
}

/// Sheet translations of the refined models, as obtained from the solved
/// sensor positions. The 3nvg values depend on mutated coordinates that are
/// not reproducible from the instance data and are stored as given.
pub mod model_translations {
    pub const NVF_MODEL_1: [f64; 3] = [-4.5619, -2.4009, 0.0004];
    pub const NVF_MODELS_2_3: [f64; 3] = [20.8459, -2.1533, 0.6638];
    pub const NVG_MODEL_1: [f64; 3] = [-18.133923, 0.6673703, 11.955023];
    pub const NVG_MODELS_2_3: [f64; 3] = [-19.3102, 0.6644, 13.5316];
    pub const NVH_MODELS_1_2: [f64; 3] = [5.42607, 1.964071, -13.99593];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FibrilModel {
    pub chains: BTreeMap<char, Chain>,
    pub family: Option<Family>,
    /// How each chain was produced, e.g. `C = A + 1·stack`.
    pub provenance: BTreeMap<char, String>,
}

impl FibrilModel {
    pub fn from_chains(chains: impl IntoIterator<Item = Chain>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut provenance = BTreeMap::new();
        for c in chains {
            let name = c.name;
            if map.insert(name, c).is_some() {
                return Err(Error::ChainMismatch(format!("duplicate chain {name}")));
            }
            provenance.insert(name, "input".to_string());
        }
        Ok(Self {
            chains: map,
            family: None,
            provenance,
        })
    }
}

/// Chain letters per stacking level, `(sheet 1, sheet 2)`, in the order
/// `+1, +2, −1, −2` for the first two levels and then `+j, −j` drawing from
/// `K` onwards.
fn level_names(levels: usize) -> Result<Vec<(i64, char, char)>> {
    let mut out = vec![];
    let fixed: [(i64, char, char); 4] = [(1, 'C', 'G'), (2, 'B', 'F'), (-1, 'D', 'I'), (-2, 'E', 'J')];
    out.extend(fixed.iter().copied().filter(|(j, _, _)| j.unsigned_abs() as usize <= levels));
    let mut spare = ('K'..='Z').chain('a'..='z').chain('0'..='9');
    for j in 3..=levels as i64 {
        for level in [j, -j] {
            match (spare.next(), spare.next()) {
                (Some(a), Some(h)) => out.push((level, a, h)),
                _ => {
                    return Err(Error::InvalidConfiguration(format!(
                        "{levels} stacking levels exceed the available chain names"
                    )))
                }
            }
        }
    }
    Ok(out)
}

/// Builds sheet H from chain A, then stacks copies of both at `±j · stack`
/// for `j = 1..=levels`.
pub fn replicate_fibril(
    chain_a: &Chain,
    sheet: &AffineTransform,
    stack: &Vector3<f64>,
    levels: usize,
) -> Result<FibrilModel> {
    let a = Chain {
        name: 'A',
        atoms: chain_a.atoms.clone(),
    };
    let h = apply_transform(&a, sheet, 'H');
    let mut chains = BTreeMap::new();
    let mut provenance = BTreeMap::new();
    provenance.insert('A', "template".to_string());
    provenance.insert('H', "H = R·A + t".to_string());
    for (level, na, nh) in level_names(levels)? {
        let off = stack * level as f64;
        chains.insert(na, a.translated(&off, na));
        chains.insert(nh, h.translated(&off, nh));
        provenance.insert(na, format!("{na} = A {:+}·stack", level));
        provenance.insert(nh, format!("{nh} = H {:+}·stack", level));
    }
    chains.insert('A', a);
    chains.insert('H', h);
    Ok(FibrilModel {
        chains,
        family: None,
        provenance,
    })
}

/// Which atoms take part in an RMSD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtomFilter {
    All,
    /// Atoms whose type (name after the last `.`) matches, e.g. `CA`.
    Type(String),
}

impl AtomFilter {
    fn accepts(&self, a: &Atom) -> bool {
        match self {
            Self::All => true,
            Self::Type(t) => a.atom_type() == t,
        }
    }
}

/// Root-mean-square deviation between same-named atoms, without any
/// superposition.
pub fn rmsd(a: &Chain, b: &Chain, filter: &AtomFilter) -> Result<f64> {
    let pa: Vec<&Atom> = a.atoms.iter().filter(|x| filter.accepts(x)).collect();
    let pb: Vec<&Atom> = b.atoms.iter().filter(|x| filter.accepts(x)).collect();
    if pa.len() != pb.len() {
        return Err(Error::ChainMismatch(format!(
            "atom counts differ: {} vs {}",
            pa.len(),
            pb.len()
        )));
    }
    if pa.is_empty() {
        return Err(Error::ChainMismatch("no atoms selected".into()));
    }
    let mut sum = 0.0;
    for (x, y) in pa.iter().zip(&pb) {
        if x.name != y.name {
            return Err(Error::ChainMismatch(format!(
                "atom names differ: {} vs {}",
                x.name, y.name
            )));
        }
        sum += (x.position - y.position).norm_squared();
    }
    Ok((sum / pa.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    /// `chain.atom`
    pub first: String,
    pub second: String,
    pub distance: f64,
}

/// All inter-chain atom pairs closer than `threshold`, nearest first.
pub fn contact_report(model: &FibrilModel, threshold: f64) -> Result<Vec<Contact>> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidConfiguration(
            "contact threshold must be positive".into(),
        ));
    }
    let chains: Vec<&Chain> = model.chains.values().collect();
    let pairs: Vec<(usize, usize)> = (0..chains.len())
        .flat_map(|i| (i + 1..chains.len()).map(move |j| (i, j)))
        .collect();
    let mut out: Vec<Contact> = pairs
        .par_iter()
        .flat_map_iter(|&(i, j)| {
            let (ci, cj) = (chains[i], chains[j]);
            ci.atoms.iter().flat_map(move |a| {
                cj.atoms.iter().filter_map(move |b| {
                    let d = (a.position - b.position).norm();
                    (d < threshold).then(|| Contact {
                        first: format!("{}.{}", ci.name, a.name),
                        second: format!("{}.{}", cj.name, b.name),
                        distance: d,
                    })
                })
            })
        })
        .collect();
    out.sort_by(|x, y| {
        x.distance
            .total_cmp(&y.distance)
            .then_with(|| x.first.cmp(&y.first))
            .then_with(|| x.second.cmp(&y.second))
    });
    Ok(out)
}
