use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 9;

/// One of the nine screen directions, labelled 1..=9 in the order
/// north-west, north, north-east, east, south-east, south, south-west, west, center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GazeClass(u8);

const NAMES: [&str; NUM_CLASSES] =
    ["north-west", "north", "north-east", "east", "south-east", "south", "south-west", "west", "center"];

/// (row, col) on a 3x3 grid, row 0 at the top.
const CELLS: [(usize, usize); NUM_CLASSES] =
    [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0), (1, 1)];

impl GazeClass {
    pub fn new(label: u8) -> Result<Self> {
        if (1..=NUM_CLASSES as u8).contains(&label) {
            Ok(Self(label))
        } else {
            Err(Error::Parameter(format!("gaze class {label} outside 1..=9")))
        }
    }

    /// From a zero-based index 0..9.
    pub fn from_index(index: usize) -> Result<Self> {
        if index < NUM_CLASSES {
            Ok(Self(index as u8 + 1))
        } else {
            Err(Error::Parameter(format!("class index {index} outside 0..9")))
        }
    }

    pub fn all() -> impl Iterator<Item = GazeClass> {
        (1..=NUM_CLASSES as u8).map(GazeClass)
    }

    pub fn label(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()]
    }

    pub fn grid_cell(self) -> (usize, usize) {
        CELLS[self.index()]
    }

    pub fn from_grid_cell(row: usize, col: usize) -> Option<Self> {
        CELLS.iter().position(|&c| c == (row, col)).map(|i| GazeClass(i as u8 + 1))
    }
}

impl TryFrom<u8> for GazeClass {
    type Error = Error;

    fn try_from(label: u8) -> Result<Self> {
        Self::new(label)
    }
}

impl From<GazeClass> for u8 {
    fn from(c: GazeClass) -> u8 {
        c.0
    }
}

impl fmt::Display for GazeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.0, self.name())
    }
}
