//! Dense arm-by-state tables.

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

use crate::{Error, Result};

/// A `K x S` table indexed by `(arm, state)`, stored row-major by arm.
///
/// Serializes as a list of rows, one per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<T>>", try_from = "Vec<Vec<T>>")]
#[serde(bound(
    serialize = "T: Clone + Serialize",
    deserialize = "T: Clone + Deserialize<'de>"
))]
pub struct Grid<T: Clone> {
    arms: usize,
    states: usize,
    cells: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(arms: usize, states: usize, value: T) -> Self {
        Self {
            arms,
            states,
            cells: vec![value; arms * states],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let arms = rows.len();
        let states = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != states) {
            return Err(Error::Config("ragged table: every arm row needs the same number of states".into()));
        }
        Ok(Self {
            arms,
            states,
            cells: rows.into_iter().flatten().collect(),
        })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn row(&self, arm: usize) -> &[T] {
        &self.cells[arm * self.states..(arm + 1) * self.states]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        (0..self.arms).map(move |i| self.row(i))
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows().map(<[T]>::to_vec).collect()
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }
}

impl<T: Clone> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (arm, state): (usize, usize)) -> &T {
        debug_assert!(arm < self.arms && state < self.states);
        &self.cells[arm * self.states + state]
    }
}

impl<T: Clone> IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (arm, state): (usize, usize)) -> &mut T {
        debug_assert!(arm < self.arms && state < self.states);
        &mut self.cells[arm * self.states + state]
    }
}

impl<T: Clone> From<Grid<T>> for Vec<Vec<T>> {
    fn from(g: Grid<T>) -> Self {
        g.to_rows()
    }
}

impl<T: Clone> TryFrom<Vec<Vec<T>>> for Grid<T> {
    type Error = Error;

    fn try_from(rows: Vec<Vec<T>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}
