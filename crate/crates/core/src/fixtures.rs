//! Bundled instances: the double-well example and five fibril
//! distance-geometry problems built from template anchor coordinates.

use crate::io::{self, InstanceDocument, Problem};
use crate::mdgp::MdgpInstance;
use crate::quartic::QuarticProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fixture {
    DoubleWell,
    NvfModel1,
    NvfModels2To3,
    NvgModel1,
    NvgModels2To3,
    Nvh,
}

impl Fixture {
    pub const ALL: [Fixture; 6] = [
        Fixture::DoubleWell,
        Fixture::NvfModel1,
        Fixture::NvfModels2To3,
        Fixture::NvgModel1,
        Fixture::NvgModels2To3,
        Fixture::Nvh,
    ];

    pub const MDGP: [Fixture; 5] = [
        Fixture::NvfModel1,
        Fixture::NvfModels2To3,
        Fixture::NvgModel1,
        Fixture::NvgModels2To3,
        Fixture::Nvh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DoubleWell => "doublewell",
            Self::NvfModel1 => "3nvf-model1",
            Self::NvfModels2To3 => "3nvf-models2-3",
            Self::NvgModel1 => "3nvg-model1",
            Self::NvgModels2To3 => "3nvg-models2-3",
            Self::Nvh => "3nvh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Raw JSON text of the instance document.
    pub fn text(self) -> &'static str {
        match self {
            Self::DoubleWell => include_str!("../fixtures/doublewell.json"),
            Self::NvfModel1 => include_str!("../fixtures/3nvf-model1.json"),
            Self::NvfModels2To3 => include_str!("../fixtures/3nvf-models2-3.json"),
            Self::NvgModel1 => include_str!("../fixtures/3nvg-model1.json"),
            Self::NvgModels2To3 => include_str!("../fixtures/3nvg-models2-3.json"),
            Self::Nvh => include_str!("../fixtures/3nvh.json"),
        }
    }

    pub fn document(self) -> InstanceDocument {
        io::parse_instance(self.text()).expect("bundled fixtures are valid")
    }

    pub fn program(self) -> QuarticProgram {
        self.document().program().expect("bundled fixtures compile")
    }

    /// `None` for the double well.
    pub fn instance(self) -> Option<MdgpInstance> {
        match self.document().problem {
            Problem::Mdgp(m) => Some(m.to_instance().expect("bundled fixtures are valid")),
            Problem::Quartic(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_load() {
        for f in Fixture::ALL {
            assert_eq!(Fixture::from_name(f.name()), Some(f));
            let p = f.program();
            assert!(p.validate().is_empty(), "{}", f.name());
        }
        assert_eq!(Fixture::DoubleWell.program().dim(), 1);
        assert!(Fixture::DoubleWell.instance().is_none());
        assert_eq!(Fixture::NvgModel1.instance().unwrap().sensors, 2);
    }
}
